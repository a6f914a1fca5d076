use nalgebra::Vector3;
use rand::Rng;
use serde::Serialize;

use super::{integrate_trajectory, Force, FlowError, PhasePoint, Trajectory};
use crate::rng::{self, Purpose};

/// Axis-aligned box in phase space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Box6 {
    pub x_lo: Vector3<f64>,
    pub x_hi: Vector3<f64>,
    pub v_lo: Vector3<f64>,
    pub v_hi: Vector3<f64>,
}

impl Box6 {
    /// `[-x_half, x_half]³ × [-v_half, v_half]³`.
    pub fn symmetric(x_half: f64, v_half: f64) -> Self {
        Self {
            x_lo: Vector3::repeat(-x_half),
            x_hi: Vector3::repeat(x_half),
            v_lo: Vector3::repeat(-v_half),
            v_hi: Vector3::repeat(v_half),
        }
    }

    pub fn volume(&self) -> f64 {
        (self.x_hi - self.x_lo).product() * (self.v_hi - self.v_lo).product()
    }

    pub fn contains(&self, p: &PhasePoint) -> bool {
        (0..3).all(|i| {
            p.x[i] >= self.x_lo[i]
                && p.x[i] <= self.x_hi[i]
                && p.v[i] >= self.v_lo[i]
                && p.v[i] <= self.v_hi[i]
        })
    }
}

/// Seeded uniform sample of a phase-space box.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ensemble {
    pub domain: Box6,
    pub points: Vec<PhasePoint>,
    pub seed: u64,
    /// `|Ω| / N`.
    pub weight: f64,
}

impl Ensemble {
    pub fn sample(domain: Box6, n: usize, seed: u64) -> Self {
        let points = (0..n).map(|i| Self::point(&domain, seed, i)).collect();
        Self {
            domain,
            points,
            seed,
            weight: domain.volume() / n.max(1) as f64,
        }
    }

    /// Point `i` of the ensemble, independent of all other indices.
    pub fn point(domain: &Box6, seed: u64, i: usize) -> PhasePoint {
        let mut r = rng::stream(seed, Purpose::EnsemblePoint, i as u64);
        let mut draw = |lo: &Vector3<f64>, hi: &Vector3<f64>| {
            Vector3::from_fn(|k, _| lo[k] + (hi[k] - lo[k]) * r.random::<f64>())
        };
        let x = draw(&domain.x_lo, &domain.x_hi);
        let v = draw(&domain.v_lo, &domain.v_hi);
        PhasePoint::new(x, v)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Unit direction on `S⁵ ⊂ ℝ⁶` for pair `i`, split as `(δ₁, δ₂)`.
pub fn delta_direction(seed: u64, i: usize) -> (Vector3<f64>, Vector3<f64>) {
    let mut r = rng::stream(seed, Purpose::PairDirection, i as u64);
    let u = rng::unit_vector(&mut r, 6);
    (Vector3::new(u[0], u[1], u[2]), Vector3::new(u[3], u[4], u[5]))
}

/// A trajectory and its perturbation `(X, V)(t, x + δ₁, v + δ₂)` on the same grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedTrajectory {
    pub base: Trajectory,
    pub shifted: Trajectory,
    pub delta: (Vector3<f64>, Vector3<f64>),
    /// `A[k] = |δ|² + max_{j≤k}|ΔX_j|² + Σ_{j<k}|ΔV_j|² Δt_j`.
    pub a: Vec<f64>,
}

impl PairedTrajectory {
    pub fn from_trajectories(
        base: Trajectory,
        shifted: Trajectory,
        delta: (Vector3<f64>, Vector3<f64>),
    ) -> Self {
        debug_assert_eq!(base.len(), shifted.len());
        let d2 = delta.0.norm_squared() + delta.1.norm_squared();
        let mut a = Vec::with_capacity(base.len());
        let mut sup = 0.0f64;
        let mut int = 0.0;
        for k in 0..base.len() {
            sup = sup.max((base.x[k] - shifted.x[k]).norm_squared());
            if k > 0 {
                let h = (base.times[k] - base.times[k - 1]).abs();
                int += (base.v[k - 1] - shifted.v[k - 1]).norm_squared() * h;
            }
            a.push(d2 + sup + int);
        }
        Self {
            base,
            shifted,
            delta,
            a,
        }
    }

    pub fn delta_norm(&self) -> f64 {
        (self.delta.0.norm_squared() + self.delta.1.norm_squared()).sqrt()
    }

    /// `sup_k |X_k − X^δ_k|²`.
    pub fn sup_dx2(&self) -> f64 {
        self.base
            .x
            .iter()
            .zip(&self.shifted.x)
            .map(|(a, b)| (a - b).norm_squared())
            .fold(0.0, f64::max)
    }

    /// Left Riemann `∫ |V − V^δ|² dt`.
    pub fn int_dv2(&self) -> f64 {
        let n = self.base.len();
        (0..n.saturating_sub(1))
            .map(|k| {
                let h = (self.base.times[k + 1] - self.base.times[k]).abs();
                (self.base.v[k] - self.shifted.v[k]).norm_squared() * h
            })
            .sum()
    }

    /// Sides of `Σ_k |ΔV_k|²Δt / A[k+1] ≤ log(A[N]/|δ|²)`.
    pub fn monotone_log_sides(&self) -> (f64, f64) {
        let n = self.base.len();
        let lhs = (0..n.saturating_sub(1))
            .map(|k| {
                let h = (self.base.times[k + 1] - self.base.times[k]).abs();
                (self.base.v[k] - self.shifted.v[k]).norm_squared() * h / self.a[k + 1]
            })
            .sum();
        let d2 = self.delta_norm().powi(2);
        (lhs, (self.a[n - 1] / d2).ln())
    }

    /// Largest `|ΔẊ_k|² / (4 max(|ΔV_k|², |ΔV_{k+1}|²))` with `Ẋ` the step difference quotient.
    pub fn kinetic_ratio_max(&self) -> f64 {
        let n = self.base.len();
        let mut worst = 0.0f64;
        for k in 0..n.saturating_sub(1) {
            let h = self.base.times[k + 1] - self.base.times[k];
            let dxa = (self.base.x[k + 1] - self.base.x[k]) / h;
            let dxb = (self.shifted.x[k + 1] - self.shifted.x[k]) / h;
            let lhs = (dxa - dxb).norm_squared();
            let dv = (self.base.v[k] - self.shifted.v[k])
                .norm_squared()
                .max((self.base.v[k + 1] - self.shifted.v[k + 1]).norm_squared());
            if lhs > 0.0 {
                worst = worst.max(lhs / (4.0 * dv));
            }
        }
        worst
    }
}

pub fn pair_trajectories<F: Force + ?Sized>(
    force: &F,
    p0: PhasePoint,
    delta: (Vector3<f64>, Vector3<f64>),
    t_final: f64,
    dt: f64,
) -> Result<PairedTrajectory, FlowError> {
    let base = integrate_trajectory(force, p0, t_final, dt)?;
    pair_with_base(force, base, delta, t_final, dt)
}

/// Pairs an already integrated trajectory with its perturbation.
pub fn pair_with_base<F: Force + ?Sized>(
    force: &F,
    base: Trajectory,
    delta: (Vector3<f64>, Vector3<f64>),
    t_final: f64,
    dt: f64,
) -> Result<PairedTrajectory, FlowError> {
    let p0 = base.start();
    let shifted = integrate_trajectory(
        force,
        PhasePoint::new(p0.x + delta.0, p0.v + delta.1),
        t_final,
        dt,
    )?;
    Ok(PairedTrajectory::from_trajectories(base, shifted, delta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow3d::ZeroForce;
    use crate::models;
    use proptest::prelude::*;

    #[test]
    fn x_shift_under_free_transport() {
        let h = 1e-3;
        let pair = pair_trajectories(
            &ZeroForce,
            PhasePoint::new(Vector3::zeros(), Vector3::new(0.5, 0.0, 0.0)),
            (Vector3::x() * h, Vector3::zeros()),
            1.0,
            0.1,
        )
        .unwrap();
        for k in 0..pair.base.len() {
            assert!((pair.base.x[k] - pair.shifted.x[k] + Vector3::x() * h).norm() < 1e-15);
            assert!((pair.a[k] - 2.0 * h * h).abs() < 1e-18);
        }
    }

    #[test]
    fn v_shift_is_one_lipschitz() {
        let d2 = Vector3::new(0.3, -0.2, 0.1);
        let pair = pair_trajectories(
            &ZeroForce,
            PhasePoint::new(Vector3::zeros(), Vector3::new(1.0, 2.0, 0.0)),
            (Vector3::zeros(), d2),
            2.0,
            0.1,
        )
        .unwrap();
        for (k, t) in pair.base.times.iter().enumerate() {
            assert!((pair.base.x[k] - pair.shifted.x[k]).norm() <= t * d2.norm() + 1e-15);
        }
    }

    #[test]
    fn ensemble_is_reproducible_and_inside() {
        let dom = Box6::symmetric(2.0, 1.0);
        let e1 = Ensemble::sample(dom, 100, 42);
        let e2 = Ensemble::sample(dom, 100, 42);
        assert_eq!(e1, e2);
        assert!(e1.points.iter().all(|p| dom.contains(p)));
        assert!((e1.weight - 64.0 * 8.0 / 100.0).abs() < 1e-12);
        assert_ne!(Ensemble::sample(dom, 100, 43).points, e1.points);
    }

    #[test]
    fn delta_directions_are_unit() {
        for i in 0..50 {
            let (a, b) = delta_direction(3, i);
            assert!(((a.norm_squared() + b.norm_squared()).sqrt() - 1.0).abs() < 1e-14);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn pair_invariants_hold(
            x in prop::array::uniform3(-2.0f64..2.0),
            v in prop::array::uniform3(-1.5f64..1.5),
            idx in 0usize..1000,
            log_delta in -8.0f64..-2.0,
        ) {
            let force = models::smooth_force();
            let (d1, d2) = delta_direction(11, idx);
            let delta = 10f64.powf(log_delta);
            let pair = pair_trajectories(
                &force,
                PhasePoint::new(Vector3::from(x), Vector3::from(v)),
                (d1 * delta, d2 * delta),
                0.5,
                0.01,
            ).unwrap();
            prop_assert!(pair.a.windows(2).all(|w| w[1] >= w[0]));
            prop_assert!(pair.base.max_speed() < 1.0 && pair.shifted.max_speed() < 1.0);
            let (lhs, rhs) = pair.monotone_log_sides();
            prop_assert!(lhs <= rhs * (1.0 + 1e-12) + 1e-15);
            prop_assert!(pair.kinetic_ratio_max() <= 1.0);
            // the shift actually representable in floating point
            let dx0 = (Vector3::from(x) + d1 * delta) - Vector3::from(x);
            let expected_a0 = delta * delta + dx0.norm_squared();
            prop_assert!((pair.a[0] - expected_a0).abs() <= 1e-12 * expected_a0);
        }
    }
}
