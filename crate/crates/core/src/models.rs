//! Reference field instances used by the experiments.

use std::sync::Arc;

use nalgebra::Vector3;
use rand::Rng;
use serde::Serialize;

use crate::field::{GaussianProfile, InverseDistanceProfile, RadialKirchhoff, RadialSource};
use crate::rng::{self, Purpose};
use crate::wave::FieldForce;

/// A handful of Gaussian bumps of width 0.8 near the origin, amplitudes ≈ 0.3.
pub fn smooth_field() -> RadialKirchhoff<GaussianProfile> {
    let src = |c: [f64; 3], a: [f64; 3]| RadialSource {
        center: Vector3::from(c),
        amplitude: Vector3::from(a),
    };
    RadialKirchhoff::new(
        GaussianProfile { width: 0.8 },
        vec![
            src([0.5, 0.0, 0.2], [0.3, -0.1, 0.05]),
            src([-0.8, 0.6, -0.3], [-0.1, 0.25, 0.15]),
            src([0.2, -0.9, 0.7], [0.05, 0.1, -0.3]),
            src([-0.3, -0.2, -1.0], [0.2, 0.2, 0.1]),
        ],
    )
}

pub fn smooth_force() -> FieldForce {
    FieldForce::electric(Arc::new(smooth_field()))
}

/// Random sum of truncated inverse-distance bumps `a_j (min(M, 1/|x−c_j|) − 1)₊`
/// with Pareto-distributed amplitudes, so the force integrals have a power-law tail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RoughFieldSpec {
    /// Sources fill `[-half_width, half_width]³`.
    pub half_width: f64,
    /// Expected sources per unit volume.
    pub density: f64,
    /// Cap `M` of the inverse-distance profile.
    pub cap: f64,
    pub amp_min: f64,
    pub amp_max: f64,
    /// Pareto tail index of `|a_j|`.
    pub tail: f64,
    pub seed: u64,
}

impl Default for RoughFieldSpec {
    fn default() -> Self {
        Self {
            half_width: 30.0,
            density: 0.05,
            cap: 8.0,
            amp_min: 0.3,
            amp_max: 1e4,
            tail: 2.0,
            seed: 20,
        }
    }
}

impl RoughFieldSpec {
    pub fn source_count(&self) -> usize {
        (self.density * (2.0 * self.half_width).powi(3)).round() as usize
    }

    /// Inverse CDF of the Pareto law truncated to `[amp_min, amp_max]`.
    pub fn amplitude(&self, u: f64) -> f64 {
        let lo = self.amp_min.powf(-self.tail);
        let hi = self.amp_max.powf(-self.tail);
        (lo * (1.0 - u) + hi * u).powf(-1.0 / self.tail)
    }
}

pub fn rough_field(spec: &RoughFieldSpec) -> RadialKirchhoff<InverseDistanceProfile> {
    let sources = (0..spec.source_count())
        .map(|j| {
            let mut r = rng::stream(spec.seed, Purpose::FieldLayout, j as u64);
            let center = Vector3::from_fn(|_, _| r.random_range(-spec.half_width..spec.half_width));
            let dir = rng::unit_vector3(&mut r);
            let amp = spec.amplitude(r.random());
            RadialSource {
                center,
                amplitude: dir * amp,
            }
        })
        .collect();
    RadialKirchhoff::new(InverseDistanceProfile::new(spec.cap), sources)
}

pub fn rough_force(spec: &RoughFieldSpec) -> FieldForce {
    FieldForce::electric(Arc::new(rough_field(spec)))
}
