//! Initial data on `R³`: analytic test fields, radial bumps with closed-form
//! wave propagation, and trilinear grid fields.

mod grid;
mod radial;

use std::sync::Arc;

use nalgebra::Vector3;

pub use grid::{GridError, GridField3, UniformGrid};
pub use radial::{
    GaussianProfile, InverseDistanceProfile, RadialBump, RadialKirchhoff, RadialProfile,
    RadialSource, RadialSum,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    Analytic,
    GridInterpolated,
}

/// A real field on `R³` with gradient access.
pub trait ScalarField: Send + Sync {
    fn value(&self, x: &Vector3<f64>) -> f64;

    fn gradient(&self, x: &Vector3<f64>) -> Vector3<f64>;

    /// Radius about the origin outside which the field vanishes.
    /// Test fields without compact support report `f64::INFINITY`.
    fn support_radius(&self) -> f64;

    fn kind(&self) -> FieldKind {
        FieldKind::Analytic
    }
}

impl<T: ScalarField + ?Sized> ScalarField for Arc<T> {
    fn value(&self, x: &Vector3<f64>) -> f64 {
        (**self).value(x)
    }
    fn gradient(&self, x: &Vector3<f64>) -> Vector3<f64> {
        (**self).gradient(x)
    }
    fn support_radius(&self) -> f64 {
        (**self).support_radius()
    }
    fn kind(&self) -> FieldKind {
        (**self).kind()
    }
}

impl<T: ScalarField + ?Sized> ScalarField for &T {
    fn value(&self, x: &Vector3<f64>) -> f64 {
        (**self).value(x)
    }
    fn gradient(&self, x: &Vector3<f64>) -> Vector3<f64> {
        (**self).gradient(x)
    }
    fn support_radius(&self) -> f64 {
        (**self).support_radius()
    }
    fn kind(&self) -> FieldKind {
        (**self).kind()
    }
}

/// A time-dependent vector field `(t, x) ↦ R³`.
pub trait VectorField: Send + Sync {
    fn eval(&self, t: f64, x: &Vector3<f64>) -> Vector3<f64>;
}

impl<T: VectorField + ?Sized> VectorField for Arc<T> {
    fn eval(&self, t: f64, x: &Vector3<f64>) -> Vector3<f64> {
        (**self).eval(t, x)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroField;

impl ScalarField for ZeroField {
    fn value(&self, _: &Vector3<f64>) -> f64 {
        0.0
    }
    fn gradient(&self, _: &Vector3<f64>) -> Vector3<f64> {
        Vector3::zeros()
    }
    fn support_radius(&self) -> f64 {
        0.0
    }
}

impl VectorField for ZeroField {
    fn eval(&self, _: f64, _: &Vector3<f64>) -> Vector3<f64> {
        Vector3::zeros()
    }
}

/// Constant field. Not compactly supported; for tests only.
#[derive(Debug, Clone, Copy)]
pub struct ConstantField(pub f64);

impl ScalarField for ConstantField {
    fn value(&self, _: &Vector3<f64>) -> f64 {
        self.0
    }
    fn gradient(&self, _: &Vector3<f64>) -> Vector3<f64> {
        Vector3::zeros()
    }
    fn support_radius(&self) -> f64 {
        f64::INFINITY
    }
}

/// `x ↦ cos(ξ·x + phase)`. Not compactly supported; for tests only.
#[derive(Debug, Clone, Copy)]
pub struct PlaneWave {
    pub wavevector: Vector3<f64>,
    pub phase: f64,
}

impl PlaneWave {
    pub fn new(wavevector: Vector3<f64>) -> Self {
        Self {
            wavevector,
            phase: 0.0,
        }
    }
}

impl ScalarField for PlaneWave {
    fn value(&self, x: &Vector3<f64>) -> f64 {
        (self.wavevector.dot(x) + self.phase).cos()
    }
    fn gradient(&self, x: &Vector3<f64>) -> Vector3<f64> {
        -(self.wavevector.dot(x) + self.phase).sin() * self.wavevector
    }
    fn support_radius(&self) -> f64 {
        f64::INFINITY
    }
}

/// Indicator of a closed ball. The gradient is taken as zero.
#[derive(Debug, Clone, Copy)]
pub struct BallIndicator {
    pub center: Vector3<f64>,
    pub radius: f64,
}

impl ScalarField for BallIndicator {
    fn value(&self, x: &Vector3<f64>) -> f64 {
        if (x - self.center).norm_squared() <= self.radius * self.radius {
            1.0
        } else {
            0.0
        }
    }
    fn gradient(&self, _: &Vector3<f64>) -> Vector3<f64> {
        Vector3::zeros()
    }
    fn support_radius(&self) -> f64 {
        self.center.norm() + self.radius
    }
}

/// Pointwise sum of fields.
#[derive(Clone, Default)]
pub struct FieldSum {
    parts: Vec<Arc<dyn ScalarField>>,
}

impl FieldSum {
    pub fn new(parts: Vec<Arc<dyn ScalarField>>) -> Self {
        Self { parts }
    }
}

impl ScalarField for FieldSum {
    fn value(&self, x: &Vector3<f64>) -> f64 {
        self.parts.iter().map(|p| p.value(x)).sum()
    }
    fn gradient(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.parts
            .iter()
            .fold(Vector3::zeros(), |acc, p| acc + p.gradient(x))
    }
    fn support_radius(&self) -> f64 {
        self.parts
            .iter()
            .map(|p| p.support_radius())
            .fold(0.0, f64::max)
    }
}

/// `λ g`.
#[derive(Clone)]
pub struct ScaledField<F> {
    pub inner: F,
    pub factor: f64,
}

impl<F: ScalarField> ScalarField for ScaledField<F> {
    fn value(&self, x: &Vector3<f64>) -> f64 {
        self.factor * self.inner.value(x)
    }
    fn gradient(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.factor * self.inner.gradient(x)
    }
    fn support_radius(&self) -> f64 {
        self.inner.support_radius()
    }
    fn kind(&self) -> FieldKind {
        self.inner.kind()
    }
}

/// Riemann-sum `L^p` norm of `g` over the nodes of `grid` (`p = ∞` allowed).
pub fn lp_norm_on_grid<F: ScalarField + ?Sized>(g: &F, grid: &UniformGrid, p: f64) -> f64 {
    let cell = grid.spacing.powi(3);
    if p.is_infinite() {
        return grid.points().map(|x| g.value(&x).abs()).fold(0.0, f64::max);
    }
    let sum: f64 = grid.points().map(|x| g.value(&x).abs().powf(p)).sum();
    (sum * cell).powf(1.0 / p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{self, Purpose};

    pub(crate) fn fd_gradient<F: ScalarField>(g: &F, x: &Vector3<f64>, h: f64) -> Vector3<f64> {
        let mut out = Vector3::zeros();
        for i in 0..3 {
            let mut e = Vector3::zeros();
            e[i] = h;
            out[i] = (g.value(&(x + e)) - g.value(&(x - e))) / (2.0 * h);
        }
        out
    }

    #[test]
    fn plane_wave_gradient_matches_differences() {
        let g = PlaneWave {
            wavevector: Vector3::new(1.0, -2.0, 0.5),
            phase: 0.3,
        };
        let mut r = rng::stream(3, Purpose::Probe, 0);
        for _ in 0..50 {
            let x = rng::in_ball(&mut r, &Vector3::zeros(), 3.0);
            let fd = fd_gradient(&g, &x, 1e-5);
            assert!((fd - g.gradient(&x)).norm() <= 1e-5 * g.gradient(&x).norm().max(1e-3));
        }
    }

    #[test]
    fn ball_indicator_support() {
        let b = BallIndicator {
            center: Vector3::new(1.0, 0.0, 0.0),
            radius: 0.5,
        };
        assert_eq!(b.value(&Vector3::new(1.2, 0.0, 0.0)), 1.0);
        assert_eq!(b.value(&Vector3::new(1.6, 0.0, 0.0)), 0.0);
        assert_eq!(b.support_radius(), 1.5);
    }

    #[test]
    fn lp_norm_of_constant_on_unit_cube() {
        let grid = UniformGrid::new([10, 10, 10], Vector3::new(0.05, 0.05, 0.05), 0.1);
        let n2 = lp_norm_on_grid(&ConstantField(3.0), &grid, 2.0);
        assert!((n2 - 3.0).abs() < 1e-12);
        let ninf = lp_norm_on_grid(&ConstantField(-3.0), &grid, f64::INFINITY);
        assert_eq!(ninf, 3.0);
    }
}
