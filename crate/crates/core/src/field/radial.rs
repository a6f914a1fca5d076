//! Radially symmetric bumps and their exact wave propagation.
//!
//! For `F₀(x) = φ(|x − c|)` the spherical mean over the sphere of radius `t`
//! centred at distance `d` from `c` reduces to a one-dimensional integral,
//!
//! ```text
//! ∫_{S²} φ(|x + tω − c|) dω = 2π / (t d) · [P(t + d) − P(|t − d|)],   P(ρ) = ∫₀^ρ s φ(s) ds,
//! ```
//!
//! and the Kirchhoff field `∂_t (t ∫ F₀(x + tω) dω)` becomes
//! `2π/d · [G(t + d) − G(t − d)]` with `G(ρ) = ρ φ(ρ)` extended as an odd function.

use nalgebra::Vector3;

use super::{ScalarField, VectorField};

/// Radial profile `φ(ρ)`, `ρ ≥ 0`, vanishing for `ρ ≥ radius()`.
pub trait RadialProfile: Send + Sync {
    fn profile(&self, rho: f64) -> f64;

    fn profile_slope(&self, rho: f64) -> f64;

    /// `G(ρ) = ρ φ(ρ)`.
    fn moment(&self, rho: f64) -> f64 {
        rho * self.profile(rho)
    }

    /// `G'(ρ)`.
    fn moment_slope(&self, rho: f64) -> f64;

    /// `P(ρ) = ∫₀^ρ s φ(s) ds`.
    fn primitive(&self, rho: f64) -> f64;

    fn radius(&self) -> f64;

    /// Exact `∫_{S²} φ(|y + tω|) dω` for `|y| = d`.
    fn sphere_integral(&self, t: f64, d: f64) -> f64 {
        let four_pi = 4.0 * std::f64::consts::PI;
        if t == 0.0 {
            return four_pi * self.profile(d);
        }
        if d < 1e-12 * t.max(1.0) {
            return four_pi * self.profile(t);
        }
        2.0 * std::f64::consts::PI / (t * d) * (self.primitive(t + d) - self.primitive((t - d).abs()))
    }

    /// Exact `∂_t (t ∫_{S²} φ(|y + tω|) dω)` for `|y| = d`.
    fn kirchhoff(&self, t: f64, d: f64) -> f64 {
        if d < 1e-9 {
            return 4.0 * std::f64::consts::PI * self.moment_slope(t);
        }
        let odd = |r: f64| {
            if r >= 0.0 {
                self.moment(r)
            } else {
                -self.moment(-r)
            }
        };
        2.0 * std::f64::consts::PI / d * (odd(t + d) - odd(t - d))
    }
}

/// `φ(ρ) = exp(−ρ²/(2w²))`, truncated where it underflows.
#[derive(Debug, Clone, Copy)]
pub struct GaussianProfile {
    pub width: f64,
}

const GAUSSIAN_CUTOFF: f64 = 40.0;

impl RadialProfile for GaussianProfile {
    fn profile(&self, rho: f64) -> f64 {
        if rho >= GAUSSIAN_CUTOFF * self.width {
            return 0.0;
        }
        (-0.5 * (rho / self.width).powi(2)).exp()
    }
    fn profile_slope(&self, rho: f64) -> f64 {
        -rho / (self.width * self.width) * self.profile(rho)
    }
    fn moment_slope(&self, rho: f64) -> f64 {
        self.profile(rho) * (1.0 - (rho / self.width).powi(2))
    }
    fn primitive(&self, rho: f64) -> f64 {
        self.width * self.width * (1.0 - self.profile(rho))
    }
    fn radius(&self) -> f64 {
        GAUSSIAN_CUTOFF * self.width
    }
}

/// `φ(ρ) = min(M, 1/ρ) − 1` on `ρ < 1`, zero outside.
///
/// Lies in `L¹ ∩ L²` for every cap `M` but its sup-norm grows like `M`.
/// The `−1` shift keeps the bump continuous at its support boundary.
#[derive(Debug, Clone, Copy)]
pub struct InverseDistanceProfile {
    pub cap: f64,
}

impl InverseDistanceProfile {
    pub fn new(cap: f64) -> Self {
        assert!(cap >= 1.0, "inverse-distance cap must be at least 1");
        Self { cap }
    }
}

impl RadialProfile for InverseDistanceProfile {
    fn profile(&self, rho: f64) -> f64 {
        if rho >= 1.0 {
            0.0
        } else if rho * self.cap <= 1.0 {
            self.cap - 1.0
        } else {
            1.0 / rho - 1.0
        }
    }
    fn profile_slope(&self, rho: f64) -> f64 {
        if rho >= 1.0 || rho * self.cap <= 1.0 {
            0.0
        } else {
            -1.0 / (rho * rho)
        }
    }
    fn moment(&self, rho: f64) -> f64 {
        if rho >= 1.0 {
            0.0
        } else if rho * self.cap <= 1.0 {
            (self.cap - 1.0) * rho
        } else {
            1.0 - rho
        }
    }
    fn moment_slope(&self, rho: f64) -> f64 {
        if rho >= 1.0 {
            0.0
        } else if rho * self.cap <= 1.0 {
            self.cap - 1.0
        } else {
            -1.0
        }
    }
    fn primitive(&self, rho: f64) -> f64 {
        let m = self.cap;
        let inner = (m - 1.0) / (2.0 * m * m);
        let outer = |r: f64| inner + (r - 1.0 / m) - 0.5 * (r * r - 1.0 / (m * m));
        if rho * m <= 1.0 {
            0.5 * (m - 1.0) * rho * rho
        } else if rho < 1.0 {
            outer(rho)
        } else {
            outer(1.0)
        }
    }
    fn radius(&self) -> f64 {
        1.0
    }
}

/// Scalar bump `A φ(|x − c|)`.
#[derive(Debug, Clone, Copy)]
pub struct RadialBump<P> {
    pub center: Vector3<f64>,
    pub amplitude: f64,
    pub profile: P,
}

impl<P: RadialProfile> ScalarField for RadialBump<P> {
    fn value(&self, x: &Vector3<f64>) -> f64 {
        self.amplitude * self.profile.profile((x - self.center).norm())
    }
    fn gradient(&self, x: &Vector3<f64>) -> Vector3<f64> {
        let y = x - self.center;
        let r = y.norm();
        if r == 0.0 {
            return Vector3::zeros();
        }
        y * (self.amplitude * self.profile.profile_slope(r) / r)
    }
    fn support_radius(&self) -> f64 {
        self.center.norm() + self.profile.radius()
    }
}

/// One vector-amplitude source `a φ(|x − c|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialSource {
    pub center: Vector3<f64>,
    pub amplitude: Vector3<f64>,
}

/// Uniform bucket grid over source centres.
#[derive(Debug, Clone)]
struct CellIndex {
    origin: Vector3<f64>,
    cell: f64,
    dims: [usize; 3],
    buckets: Vec<Vec<u32>>,
}

impl CellIndex {
    fn build(sources: &[RadialSource], cell: f64) -> Self {
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for s in sources {
            lo = lo.inf(&s.center);
            hi = hi.sup(&s.center);
        }
        let dims = [0, 1, 2].map(|i| (((hi[i] - lo[i]) / cell).floor() as usize + 1).max(1));
        let mut buckets = vec![Vec::new(); dims[0] * dims[1] * dims[2]];
        for (j, s) in sources.iter().enumerate() {
            let c = [0, 1, 2].map(|i| (((s.center[i] - lo[i]) / cell) as usize).min(dims[i] - 1));
            buckets[(c[0] * dims[1] + c[1]) * dims[2] + c[2]].push(j as u32);
        }
        Self {
            origin: lo,
            cell,
            dims,
            buckets,
        }
    }

    fn for_each_near<F: FnMut(usize)>(&self, x: &Vector3<f64>, reach: f64, mut f: F) {
        let range = |i: usize| {
            let lo = ((x[i] - reach - self.origin[i]) / self.cell).floor();
            let hi = ((x[i] + reach - self.origin[i]) / self.cell).floor();
            let max = self.dims[i] as f64 - 1.0;
            if hi < 0.0 || lo > max {
                return None;
            }
            Some((lo.max(0.0) as usize, hi.min(max) as usize))
        };
        let (Some(rx), Some(ry), Some(rz)) = (range(0), range(1), range(2)) else {
            return;
        };
        for i in rx.0..=rx.1 {
            for j in ry.0..=ry.1 {
                for k in rz.0..=rz.1 {
                    for &s in &self.buckets[(i * self.dims[1] + j) * self.dims[2] + k] {
                        f(s as usize);
                    }
                }
            }
        }
    }
}

const BRUTE_FORCE_LIMIT: usize = 32;

/// Vector field `Σ_j a_j φ(|x − c_j|)` propagated by the Kirchhoff formula,
/// evaluated in closed form.
#[derive(Debug, Clone)]
pub struct RadialKirchhoff<P> {
    profile: P,
    sources: Vec<RadialSource>,
    index: Option<CellIndex>,
}

impl<P: RadialProfile> RadialKirchhoff<P> {
    pub fn new(profile: P, sources: Vec<RadialSource>) -> Self {
        let index = (sources.len() > BRUTE_FORCE_LIMIT)
            .then(|| CellIndex::build(&sources, profile.radius().max(1e-6)));
        Self {
            profile,
            sources,
            index,
        }
    }

    pub fn profile(&self) -> &P {
        &self.profile
    }

    pub fn sources(&self) -> &[RadialSource] {
        &self.sources
    }

    fn for_each_within<F: FnMut(&RadialSource, f64)>(&self, x: &Vector3<f64>, reach: f64, mut f: F) {
        let mut visit = |s: &RadialSource| {
            let d = (x - s.center).norm();
            if d < reach {
                f(s, d);
            }
        };
        match &self.index {
            Some(index) => index.for_each_near(x, reach, |j| visit(&self.sources[j])),
            None => self.sources.iter().for_each(visit),
        }
    }

    /// `F₀(x)`.
    pub fn initial_value(&self, x: &Vector3<f64>) -> Vector3<f64> {
        let mut acc = Vector3::zeros();
        self.for_each_within(x, self.profile.radius(), |s, d| {
            acc += s.amplitude * self.profile.profile(d)
        });
        acc
    }

    /// Exact `∫_{S²} F₀(x + tω) dω`.
    pub fn sphere_integral(&self, t: f64, x: &Vector3<f64>) -> Vector3<f64> {
        let reach = t + self.profile.radius();
        let mut acc = Vector3::zeros();
        self.for_each_within(x, reach, |s, d| {
            if d > t - self.profile.radius() {
                acc += s.amplitude * self.profile.sphere_integral(t, d);
            }
        });
        acc
    }

    /// Component `i` of the initial data as a scalar field.
    pub fn component(&self, i: usize) -> RadialSum<P>
    where
        P: Clone,
    {
        RadialSum {
            profile: self.profile.clone(),
            centers: self.sources.iter().map(|s| s.center).collect(),
            weights: self.sources.iter().map(|s| s.amplitude[i]).collect(),
        }
    }
}

impl<P: RadialProfile> VectorField for RadialKirchhoff<P> {
    fn eval(&self, t: f64, x: &Vector3<f64>) -> Vector3<f64> {
        let radius = self.profile.radius();
        let mut acc = Vector3::zeros();
        self.for_each_within(x, t + radius, |s, d| {
            if d > t - radius {
                acc += s.amplitude * self.profile.kirchhoff(t, d);
            }
        });
        acc
    }
}

/// Scalar sum `Σ_j w_j φ(|x − c_j|)`; one component of a [`RadialKirchhoff`] source.
#[derive(Debug, Clone)]
pub struct RadialSum<P> {
    pub profile: P,
    pub centers: Vec<Vector3<f64>>,
    pub weights: Vec<f64>,
}

impl<P: RadialProfile> ScalarField for RadialSum<P> {
    fn value(&self, x: &Vector3<f64>) -> f64 {
        self.centers
            .iter()
            .zip(&self.weights)
            .map(|(c, w)| w * self.profile.profile((x - c).norm()))
            .sum()
    }
    fn gradient(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.centers
            .iter()
            .zip(&self.weights)
            .fold(Vector3::zeros(), |acc, (c, w)| {
                let y = x - c;
                let r = y.norm();
                if r == 0.0 {
                    acc
                } else {
                    acc + y * (w * self.profile.profile_slope(r) / r)
                }
            })
    }
    fn support_radius(&self) -> f64 {
        self.centers
            .iter()
            .map(|c| c.norm() + self.profile.radius())
            .fold(0.0, f64::max)
    }
}
