//! Kirchhoff spherical means, wave operators, field-driven forces and the
//! dispersion profile of spherical means.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{Unit, Vector3};
use rand::Rng;
use serde::Serialize;

use crate::field::{ScalarField, VectorField, ZeroField};
use crate::fit::loglog_slope;
use crate::flow3d::Force;
use crate::rng::{self, Purpose};
use crate::sphere::SphereRule;

/// Smooth velocity modulation `ν(v)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Default)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Modulation {
    #[default]
    Unit,
    /// `ν(v) = 1 / (1 + |v|²/scale²)`.
    Lorentzian { scale: f64 },
}

impl Modulation {
    pub fn eval(&self, v: &Vector3<f64>) -> f64 {
        match *self {
            Self::Unit => 1.0,
            Self::Lorentzian { scale } => 1.0 / (1.0 + v.norm_squared() / (scale * scale)),
        }
    }

    /// `sup_{|v| ≤ k} ν(v)`.
    pub fn sup_within(&self, _k: f64) -> f64 {
        match self {
            Self::Unit | Self::Lorentzian { .. } => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ForceMode {
    /// `ν(v) E(t, x)`.
    #[default]
    Electric,
    /// `E(t, x) + v × B(t, x)`.
    Lorentz,
}

impl std::str::FromStr for ForceMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "electric" => Ok(Self::Electric),
            "lorentz" => Ok(Self::Lorentz),
            other => Err(format!("unknown force mode `{other}` (electric, lorentz)")),
        }
    }
}

/// Kirchhoff propagation of scalar initial data, one source per component,
/// evaluated with an explicit sphere rule:
/// `F(t, x) = ∫ F₀(x + tω) dω + t ∫ ω·∇F₀(x + tω) dω`.
#[derive(Clone)]
pub struct KirchhoffField {
    sources: [Arc<dyn ScalarField>; 3],
    rule: Arc<SphereRule>,
}

impl KirchhoffField {
    pub fn new(sources: [Arc<dyn ScalarField>; 3], rule: Arc<SphereRule>) -> Self {
        Self { sources, rule }
    }

    /// Same scalar source in every component.
    pub fn isotropic(source: Arc<dyn ScalarField>, rule: Arc<SphereRule>) -> Self {
        Self::new([source.clone(), source.clone(), source], rule)
    }

    pub fn zero(rule: Arc<SphereRule>) -> Self {
        Self::isotropic(Arc::new(ZeroField), rule)
    }

    pub fn rule(&self) -> &SphereRule {
        &self.rule
    }

    pub fn eval_field(&self, t: f64, x: &Vector3<f64>) -> Vector3<f64> {
        debug_assert!(t >= 0.0);
        let mut acc = Vector3::zeros();
        for (omega, w) in self.rule.iter() {
            let y = x + omega * t;
            for (i, src) in self.sources.iter().enumerate() {
                let r = src.support_radius();
                if r.is_finite() && y.norm() > r {
                    continue;
                }
                let val = if t == 0.0 {
                    src.value(&y)
                } else {
                    src.value(&y) + t * omega.dot(&src.gradient(&y))
                };
                acc[i] += w * val;
            }
        }
        acc
    }
}

impl VectorField for KirchhoffField {
    fn eval(&self, t: f64, x: &Vector3<f64>) -> Vector3<f64> {
        self.eval_field(t, x)
    }
}

/// Force built from an electric field and, in Lorentz mode, a magnetic field.
#[derive(Clone)]
pub struct FieldForce {
    pub electric: Arc<dyn VectorField>,
    pub magnetic: Arc<dyn VectorField>,
    pub nu: Modulation,
    pub mode: ForceMode,
}

impl FieldForce {
    pub fn electric(field: Arc<dyn VectorField>) -> Self {
        Self {
            electric: field,
            magnetic: Arc::new(ZeroField),
            nu: Modulation::Unit,
            mode: ForceMode::Electric,
        }
    }

    pub fn lorentz(electric: Arc<dyn VectorField>, magnetic: Arc<dyn VectorField>) -> Self {
        Self {
            electric,
            magnetic,
            nu: Modulation::Unit,
            mode: ForceMode::Lorentz,
        }
    }

    pub fn with_modulation(mut self, nu: Modulation) -> Self {
        self.nu = nu;
        self
    }
}

impl Force for FieldForce {
    fn force(&self, t: f64, x: &Vector3<f64>, v: &Vector3<f64>) -> Vector3<f64> {
        match self.mode {
            ForceMode::Electric => self.electric.eval(t, x) * self.nu.eval(v),
            ForceMode::Lorentz => self.electric.eval(t, x) + v.cross(&self.magnetic.eval(t, x)),
        }
    }

    fn spatial(&self, t: f64, x: &Vector3<f64>) -> Vector3<f64> {
        self.electric.eval(t, x)
    }

    fn force_with_spatial(
        &self,
        t: f64,
        x: &Vector3<f64>,
        v: &Vector3<f64>,
    ) -> (Vector3<f64>, Vector3<f64>) {
        let e = self.electric.eval(t, x);
        match self.mode {
            ForceMode::Electric => (e * self.nu.eval(v), e),
            ForceMode::Lorentz => (e + v.cross(&self.magnetic.eval(t, x)), e),
        }
    }

    fn modulation_bound(&self, k: f64) -> f64 {
        match self.mode {
            ForceMode::Electric => self.nu.sup_within(k),
            ForceMode::Lorentz => 1.0,
        }
    }
}

/// `W g(t, x) = t ∫_{S²} g(x + tω) dω`.
pub fn wave_op<G: ScalarField + ?Sized>(g: &G, rule: &SphereRule, t: f64, x: &Vector3<f64>) -> f64 {
    if t == 0.0 {
        return 0.0;
    }
    t * rule.sum(|w| g.value(&(x + w * t)))
}

/// `W̃ g(t, x, v) = t ∫_{S²} g(x + tω) / |v̂·ω − 1| dω` with `v̂ = v/√(1+|v|²)`.
pub fn modified_wave_op<G: ScalarField + ?Sized>(
    g: &G,
    rule: &SphereRule,
    t: f64,
    x: &Vector3<f64>,
    v: &Vector3<f64>,
) -> f64 {
    if t == 0.0 {
        return 0.0;
    }
    let vhat = v / (1.0 + v.norm_squared()).sqrt();
    t * rule.sum(|w| g.value(&(x + w * t)) / (vhat.dot(w) - 1.0).abs())
}

/// Region in which the data of a dispersion profile is supported.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SamplingBox {
    pub center: Vector3<f64>,
    pub half_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DispersionPoint {
    pub s: f64,
    pub norm: f64,
    /// Samples at which the spherical integral was nonzero.
    pub hits: usize,
    pub under_resolved: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DispersionProfile {
    pub points: Vec<DispersionPoint>,
    /// Least-squares slope of `log norm` against `log s`.
    pub slope: Option<f64>,
    pub under_resolved: bool,
}

/// Minimum number of nonzero samples per shell before a norm is trusted.
pub const MIN_SHELL_HITS: usize = 100;

/// Monte Carlo `L²` norms of `x ↦ ∫_{S²} g(x + sω) dω`.
///
/// For data supported in a ball `B(c, R)` the spherical mean is supported in the
/// shell `s − R ≤ |x − c| ≤ s + R`; samples are drawn uniformly there and the
/// sphere rule is pointed at `c`, keeping only rings that can meet the ball.
pub fn dispersion_profile<G: ScalarField + ?Sized>(
    g: &G,
    rule: &SphereRule,
    s_grid: &[f64],
    support: &SamplingBox,
    n_samples: usize,
    seed: u64,
) -> DispersionProfile {
    let box_radius = support.half_width * 3f64.sqrt();
    let origin_radius = g.support_radius();
    let (center, radius) = if origin_radius <= support.center.norm() + box_radius {
        (Vector3::zeros(), origin_radius)
    } else {
        (support.center, box_radius)
    };
    let mut points = Vec::with_capacity(s_grid.len());
    for (si, &s) in s_grid.iter().enumerate() {
        let r_lo = (s - radius).max(0.0);
        let r_hi = s + radius;
        let volume = 4.0 / 3.0 * PI * (r_hi.powi(3) - r_lo.powi(3));
        let mut rng = rng::stream(seed, Purpose::MonteCarlo, si as u64);
        let mut sum_sq = 0.0;
        let mut hits = 0;
        for _ in 0..n_samples {
            let u: f64 = rng.random();
            let r = (r_lo.powi(3) + u * (r_hi.powi(3) - r_lo.powi(3))).cbrt();
            let dir = rng::unit_vector3(&mut rng);
            let x = center + dir * r;
            let h = if r > radius {
                let axis = Unit::new_unchecked(-dir);
                let cone = (radius / r).min(1.0).asin();
                rule.sum_oriented(&axis, cone, |w| g.value(&(x + w * s)))
            } else {
                rule.sum(|w| g.value(&(x + w * s)))
            };
            if h != 0.0 {
                hits += 1;
            }
            sum_sq += h * h;
        }
        let norm = (volume * sum_sq / n_samples.max(1) as f64).sqrt();
        points.push(DispersionPoint {
            s,
            norm,
            hits,
            under_resolved: hits < MIN_SHELL_HITS && norm > 0.0,
        });
    }
    let slope = loglog_slope(&points.iter().map(|p| (p.s, p.norm)).collect::<Vec<_>>());
    let under_resolved = points.iter().any(|p| p.under_resolved);
    DispersionProfile {
        points,
        slope,
        under_resolved,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{
        BallIndicator, ConstantField, GaussianProfile, PlaneWave, RadialBump, RadialKirchhoff,
        RadialSource,
    };
    use crate::quad::GaussLegendre;
    use approx::assert_relative_eq;

    fn rule(order: usize) -> Arc<SphereRule> {
        Arc::new(SphereRule::new(order).unwrap())
    }

    #[test]
    fn zero_source_gives_zero_field() {
        let kf = KirchhoffField::zero(rule(10));
        for t in [0.0, 0.5, 3.0] {
            assert_eq!(kf.eval_field(t, &Vector3::new(0.3, 1.0, -2.0)), Vector3::zeros());
        }
    }

    #[test]
    fn constant_source_is_stationary() {
        let kf = KirchhoffField::isotropic(Arc::new(ConstantField(1.5)), rule(6));
        for t in [0.0, 1.0, 7.0] {
            let f = kf.eval_field(t, &Vector3::new(1.0, 2.0, 3.0));
            assert_relative_eq!(f, Vector3::repeat(4.0 * PI * 1.5), max_relative = 1e-13);
        }
    }

    #[test]
    fn plane_wave_propagates_with_cosine_multiplier() {
        // ∂_t(t · 4π sin(|ξ|t)/(|ξ|t)) = 4π cos(|ξ|t)
        let xi = Vector3::new(1.0, -1.0, 2f64.sqrt()).normalize() * 2.0;
        let kf = KirchhoffField::isotropic(Arc::new(PlaneWave::new(xi)), rule(30));
        let t = PI / 2.0;
        for x in [Vector3::zeros(), Vector3::new(0.4, -1.2, 0.3)] {
            let want = 4.0 * PI * (2.0 * t).cos() * xi.dot(&x).cos();
            let got = kf.eval_field(t, &x);
            for i in 0..3 {
                assert!((got[i] - want).abs() < 1e-10, "{} vs {want}", got[i]);
            }
        }
    }

    #[test]
    fn gaussian_source_matches_refined_rule_and_closed_form() {
        let profile = GaussianProfile { width: 0.8 };
        let center = Vector3::new(2.0, -1.0, 1.5);
        let bump: Arc<dyn ScalarField> = Arc::new(RadialBump {
            center,
            amplitude: 1.0,
            profile,
        });
        let t = 3.0;
        let coarse = KirchhoffField::isotropic(bump.clone(), rule(60)).eval_field(t, &Vector3::zeros());
        let fine = KirchhoffField::isotropic(bump, rule(240)).eval_field(t, &Vector3::zeros());
        assert!((coarse - fine).norm() < 1e-6, "{coarse} {fine}");
        let exact = RadialKirchhoff::new(
            profile,
            vec![RadialSource {
                center,
                amplitude: Vector3::repeat(1.0),
            }],
        )
        .eval(t, &Vector3::zeros());
        assert!((fine - exact).norm() < 1e-9, "{fine} {exact}");
    }

    #[test]
    fn initial_value_is_four_pi_source() {
        let g: Arc<dyn ScalarField> = Arc::new(RadialBump {
            center: Vector3::new(0.1, 0.2, 0.0),
            amplitude: 2.0,
            profile: GaussianProfile { width: 0.5 },
        });
        let kf = KirchhoffField::isotropic(g.clone(), rule(8));
        let x = Vector3::new(0.3, 0.0, -0.2);
        assert_relative_eq!(kf.eval_field(0.0, &x).x, 4.0 * PI * g.value(&x), max_relative = 1e-13);
    }

    #[test]
    fn wave_op_basics() {
        let r = rule(12);
        assert_relative_eq!(wave_op(&ConstantField(1.0), &r, 2.0, &Vector3::zeros()), 8.0 * PI, max_relative = 1e-13);
        assert_eq!(wave_op(&PlaneWave::new(Vector3::x()), &r, 0.0, &Vector3::zeros()), 0.0);
        let pw = PlaneWave::new(Vector3::new(0.0, 3.0, 4.0));
        let x = Vector3::new(0.2, 0.7, -0.1);
        for t in [0.1f64, 0.9, 1.7] {
            let want = 4.0 * PI * (5.0 * t).sin() / 5.0 * (pw.wavevector.dot(&x)).cos();
            let got = wave_op(&pw, &rule(30), t, &x);
            assert!((got - want).abs() < 1e-9 * 4.0 * PI * t);
        }
    }

    #[test]
    fn modified_wave_op_reduces_and_matches_reference() {
        let r = rule(20);
        let pw = PlaneWave::new(Vector3::new(1.0, 0.5, -0.3));
        let x = Vector3::new(0.5, 0.1, 0.0);
        assert_eq!(
            modified_wave_op(&pw, &r, 1.3, &x, &Vector3::zeros()),
            wave_op(&pw, &r, 1.3, &x)
        );
        assert_relative_eq!(
            modified_wave_op(&ConstantField(1.0), &r, 1.0, &x, &Vector3::zeros()),
            4.0 * PI,
            max_relative = 1e-13
        );
        // |v| = 1 along z gives v̂ = e_z/√2
        let gl = GaussLegendre::new(200);
        let reference = gl.integrate(-1.0, 1.0, |mu| 2.0 * PI / (1.0 - mu / 2f64.sqrt()));
        let closed = 2.0 * PI * 2f64.sqrt() * ((1.0 + 1.0 / 2f64.sqrt()) / (1.0 - 1.0 / 2f64.sqrt())).ln();
        assert_relative_eq!(reference, closed, max_relative = 1e-12);
        let got = modified_wave_op(&ConstantField(1.0), &rule(60), 1.0, &x, &Vector3::z());
        assert_relative_eq!(got, reference, max_relative = 1e-9);
    }

    #[test]
    fn lorentz_force_uses_cross_product() {
        struct Const(Vector3<f64>);
        impl VectorField for Const {
            fn eval(&self, _: f64, _: &Vector3<f64>) -> Vector3<f64> {
                self.0
            }
        }
        let f = FieldForce::lorentz(Arc::new(Const(Vector3::x())), Arc::new(Const(Vector3::z())));
        let v = Vector3::new(0.0, 2.0, 0.0);
        assert_eq!(f.force(0.0, &Vector3::zeros(), &v), Vector3::new(3.0, 0.0, 0.0));
        let e = FieldForce::electric(Arc::new(Const(Vector3::x())))
            .with_modulation(Modulation::Lorentzian { scale: 1.0 });
        assert_relative_eq!(e.force(0.0, &Vector3::zeros(), &v).x, 0.2, max_relative = 1e-14);
    }

    #[test]
    fn dispersion_of_zero_is_zero() {
        let prof = dispersion_profile(
            &ZeroField,
            &SphereRule::new(20).unwrap(),
            &[1.0, 2.0, 4.0],
            &SamplingBox {
                center: Vector3::zeros(),
                half_width: 1.0,
            },
            200,
            1,
        );
        assert!(prof.points.iter().all(|p| p.norm == 0.0));
    }

    /// Exact `∫_{S²} 1_{B(0,1)}(x + sω) dω` from the cap formula.
    fn cap_integral(d: f64, s: f64) -> f64 {
        if d + s <= 1.0 {
            return 4.0 * PI;
        }
        if (d - s).abs() >= 1.0 {
            return 0.0;
        }
        // the sphere meets the ball in a cap with cos θ* = (d² + s² − 1)/(2ds)
        let c = ((d * d + s * s - 1.0) / (2.0 * d * s)).clamp(-1.0, 1.0);
        2.0 * PI * (1.0 - c)
    }

    #[test]
    fn ball_indicator_decays_like_cap_oracle() {
        let ball = BallIndicator {
            center: Vector3::zeros(),
            radius: 1.0,
        };
        let s_grid = [4.0, 8.0];
        let prof = dispersion_profile(
            &ball,
            &SphereRule::new(800).unwrap(),
            &s_grid,
            &SamplingBox {
                center: Vector3::zeros(),
                half_width: 1.0,
            },
            400,
            3,
        );
        let gl = GaussLegendre::new(400);
        for (p, &s) in prof.points.iter().zip(&s_grid) {
            let exact = gl
                .integrate(s - 1.0, s + 1.0, |d| 4.0 * PI * d * d * cap_integral(d, s).powi(2))
                .sqrt();
            assert!((p.norm - exact).abs() < 0.08 * exact, "s={s} {} {exact}", p.norm);
            assert!(!p.under_resolved);
        }
    }

    #[test]
    fn gaussian_dispersion_is_stable_under_rule_doubling() {
        let g = RadialBump {
            center: Vector3::zeros(),
            amplitude: 1.0,
            profile: GaussianProfile { width: 0.5 },
        };
        let support = SamplingBox {
            center: Vector3::zeros(),
            half_width: 2.5,
        };
        let a = dispersion_profile(&g, &SphereRule::new(100).unwrap(), &[4.0, 8.0], &support, 300, 9);
        let b = dispersion_profile(&g, &SphereRule::new(200).unwrap(), &[4.0, 8.0], &support, 300, 9);
        for (p, q) in a.points.iter().zip(&b.points) {
            assert!((p.norm - q.norm).abs() < 0.01 * q.norm);
        }
    }
}
