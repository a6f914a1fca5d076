//! Relativistic characteristics `Ẋ = V/√(1+|V|²)`, `V̇ = F(t, X, V)`.

mod functional;
mod pair;

use std::sync::Arc;

use nalgebra::{Matrix6, Vector3, Vector6};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::sphere::SphereRule;

pub use functional::{
    functional_i_delta, functional_q, omega_k, FunctionalReport, OmegaK, PairSummary,
};
pub use pair::{delta_direction, pair_trajectories, pair_with_base, Box6, Ensemble, PairedTrajectory};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("non-finite force at t = {t}, x = ({}, {}, {})", x[0], x[1], x[2])]
    NonFinite { t: f64, x: [f64; 3] },
    #[error("time step must be positive and finite, got {0}")]
    BadStep(f64),
    #[error("finite-difference stencil produced a non-finite Jacobian")]
    SingularStencil,
}

/// Time- and state-dependent force.
pub trait Force: Send + Sync {
    fn force(&self, t: f64, x: &Vector3<f64>, v: &Vector3<f64>) -> Vector3<f64>;

    /// Velocity-independent part `G(t, x)` of the force.
    fn spatial(&self, t: f64, x: &Vector3<f64>) -> Vector3<f64> {
        self.force(t, x, &Vector3::zeros())
    }

    /// `(F(t, x, v), G(t, x))`; override when both share work.
    fn force_with_spatial(
        &self,
        t: f64,
        x: &Vector3<f64>,
        v: &Vector3<f64>,
    ) -> (Vector3<f64>, Vector3<f64>) {
        (self.force(t, x, v), self.spatial(t, x))
    }

    /// `ν(k) = sup_{|v| ≤ k}` of the velocity modulation.
    fn modulation_bound(&self, _k: f64) -> f64 {
        1.0
    }
}

impl<T: Force + ?Sized> Force for Arc<T> {
    fn force(&self, t: f64, x: &Vector3<f64>, v: &Vector3<f64>) -> Vector3<f64> {
        (**self).force(t, x, v)
    }
    fn spatial(&self, t: f64, x: &Vector3<f64>) -> Vector3<f64> {
        (**self).spatial(t, x)
    }
    fn force_with_spatial(
        &self,
        t: f64,
        x: &Vector3<f64>,
        v: &Vector3<f64>,
    ) -> (Vector3<f64>, Vector3<f64>) {
        (**self).force_with_spatial(t, x, v)
    }
    fn modulation_bound(&self, k: f64) -> f64 {
        (**self).modulation_bound(k)
    }
}

impl<T: Force + ?Sized> Force for &T {
    fn force(&self, t: f64, x: &Vector3<f64>, v: &Vector3<f64>) -> Vector3<f64> {
        (**self).force(t, x, v)
    }
    fn spatial(&self, t: f64, x: &Vector3<f64>) -> Vector3<f64> {
        (**self).spatial(t, x)
    }
    fn force_with_spatial(
        &self,
        t: f64,
        x: &Vector3<f64>,
        v: &Vector3<f64>,
    ) -> (Vector3<f64>, Vector3<f64>) {
        (**self).force_with_spatial(t, x, v)
    }
    fn modulation_bound(&self, k: f64) -> f64 {
        (**self).modulation_bound(k)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroForce;

impl Force for ZeroForce {
    fn force(&self, _: f64, _: &Vector3<f64>, _: &Vector3<f64>) -> Vector3<f64> {
        Vector3::zeros()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConstantForce(pub Vector3<f64>);

impl Force for ConstantForce {
    fn force(&self, _: f64, _: &Vector3<f64>, _: &Vector3<f64>) -> Vector3<f64> {
        self.0
    }
}

/// `F = −rate · v`; contracts phase volume like `e^{−3 rate t}`.
#[derive(Debug, Clone, Copy)]
pub struct LinearDrag(pub f64);

impl Force for LinearDrag {
    fn force(&self, _: f64, _: &Vector3<f64>, v: &Vector3<f64>) -> Vector3<f64> {
        -v * self.0
    }
    fn spatial(&self, _: f64, _: &Vector3<f64>) -> Vector3<f64> {
        Vector3::zeros()
    }
}

/// Force from a closure `(t, x, v) ↦ F`.
pub struct ForceFn<F>(pub F);

impl<F> Force for ForceFn<F>
where
    F: Fn(f64, &Vector3<f64>, &Vector3<f64>) -> Vector3<f64> + Send + Sync,
{
    fn force(&self, t: f64, x: &Vector3<f64>, v: &Vector3<f64>) -> Vector3<f64> {
        (self.0)(t, x, v)
    }
}

/// Spherical average of another force over `x + radius·ω`, a regularized
/// version of it at scale `radius`.
pub struct MollifiedForce<F> {
    pub inner: F,
    pub radius: f64,
    rule: SphereRule,
}

impl<F: Force> MollifiedForce<F> {
    pub fn new(inner: F, radius: f64) -> Self {
        Self {
            inner,
            radius,
            rule: SphereRule::new(MOLLIFIER_ORDER).expect("fixed supported order"),
        }
    }
}

const MOLLIFIER_ORDER: usize = 3;

impl<F: Force> Force for MollifiedForce<F> {
    fn force(&self, t: f64, x: &Vector3<f64>, v: &Vector3<f64>) -> Vector3<f64> {
        self.force_with_spatial(t, x, v).0
    }
    fn spatial(&self, t: f64, x: &Vector3<f64>) -> Vector3<f64> {
        let mut acc = Vector3::zeros();
        for (w, wt) in self.rule.iter() {
            acc += self.inner.spatial(t, &(x + w * self.radius)) * wt;
        }
        acc / (4.0 * std::f64::consts::PI)
    }
    fn force_with_spatial(
        &self,
        t: f64,
        x: &Vector3<f64>,
        v: &Vector3<f64>,
    ) -> (Vector3<f64>, Vector3<f64>) {
        let (mut f, mut g) = (Vector3::zeros(), Vector3::zeros());
        for (w, wt) in self.rule.iter() {
            let (a, b) = self.inner.force_with_spatial(t, &(x + w * self.radius), v);
            f += a * wt;
            g += b * wt;
        }
        let s = 1.0 / (4.0 * std::f64::consts::PI);
        (f * s, g * s)
    }
    fn modulation_bound(&self, k: f64) -> f64 {
        self.inner.modulation_bound(k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhasePoint {
    pub x: Vector3<f64>,
    pub v: Vector3<f64>,
}

impl PhasePoint {
    pub fn new(x: Vector3<f64>, v: Vector3<f64>) -> Self {
        Self { x, v }
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(self.x.x, self.x.y, self.x.z, self.v.x, self.v.y, self.v.z)
    }

    pub fn from_vector(s: &Vector6<f64>) -> Self {
        Self {
            x: Vector3::new(s[0], s[1], s[2]),
            v: Vector3::new(s[3], s[4], s[5]),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(self.v.iter()).all(|c| c.is_finite())
    }
}

/// `v/√(1+|v|²)`, the velocity of a particle with momentum-like variable `v`.
#[inline]
pub fn relativistic_velocity(v: &Vector3<f64>) -> Vector3<f64> {
    v / (1.0 + v.norm_squared()).sqrt()
}

/// Sampled characteristic. `spatial[k]` holds `G(t_k, X_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub x: Vec<Vector3<f64>>,
    pub v: Vec<Vector3<f64>>,
    pub spatial: Vec<Vector3<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn start(&self) -> PhasePoint {
        PhasePoint::new(self.x[0], self.v[0])
    }

    pub fn end(&self) -> PhasePoint {
        let k = self.len() - 1;
        PhasePoint::new(self.x[k], self.v[k])
    }

    /// Largest `|X_{k+1} − X_k| / |t_{k+1} − t_k|`.
    pub fn max_speed(&self) -> f64 {
        self.x
            .windows(2)
            .zip(self.times.windows(2))
            .map(|(x, t)| (x[1] - x[0]).norm() / (t[1] - t[0]).abs())
            .fold(0.0, f64::max)
    }

    /// Trapezoidal `∫ |G(t, X_t)| dt`.
    pub fn force_integral(&self) -> f64 {
        self.spatial
            .windows(2)
            .zip(self.times.windows(2))
            .map(|(g, t)| 0.5 * (g[0].norm() + g[1].norm()) * (t[1] - t[0]).abs())
            .sum()
    }
}

/// Fixed-step classical RK4 from `t_start` to `t_end` (either direction); the
/// final step is shortened when the span is not a multiple of `dt`.
pub fn integrate_between<F: Force + ?Sized>(
    force: &F,
    p0: PhasePoint,
    t_start: f64,
    t_end: f64,
    dt: f64,
) -> Result<Trajectory, FlowError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(FlowError::BadStep(dt));
    }
    let span = t_end - t_start;
    let sign = if span < 0.0 { -1.0 } else { 1.0 };
    let full = (span.abs() / dt * (1.0 + 1e-12)).floor() as usize;
    let rem = span.abs() - full as f64 * dt;
    let steps = if rem > 1e-12 * dt.max(span.abs()) {
        full + 1
    } else {
        full
    };
    let mut traj = Trajectory {
        times: Vec::with_capacity(steps + 1),
        x: Vec::with_capacity(steps + 1),
        v: Vec::with_capacity(steps + 1),
        spatial: Vec::with_capacity(steps + 1),
    };
    let check = |t: f64, x: &Vector3<f64>, f: &Vector3<f64>| {
        if f.iter().all(|c| c.is_finite()) {
            Ok(())
        } else {
            Err(FlowError::NonFinite {
                t,
                x: [x.x, x.y, x.z],
            })
        }
    };
    let (mut x, mut v) = (p0.x, p0.v);
    let mut t = t_start;
    for k in 0..=steps {
        let (f1, g) = force.force_with_spatial(t, &x, &v);
        check(t, &x, &f1)?;
        traj.times.push(t);
        traj.x.push(x);
        traj.v.push(v);
        traj.spatial.push(g);
        if k == steps {
            break;
        }
        let t_next = if k + 1 == steps {
            t_end
        } else {
            t_start + sign * (k + 1) as f64 * dt
        };
        let h = t_next - t;
        let hh = 0.5 * h;
        let k1x = relativistic_velocity(&v);
        let k1v = f1;
        let (x2, v2) = (x + k1x * hh, v + k1v * hh);
        let k2x = relativistic_velocity(&v2);
        let k2v = force.force(t + hh, &x2, &v2);
        check(t + hh, &x2, &k2v)?;
        let (x3, v3) = (x + k2x * hh, v + k2v * hh);
        let k3x = relativistic_velocity(&v3);
        let k3v = force.force(t + hh, &x3, &v3);
        check(t + hh, &x3, &k3v)?;
        let (x4, v4) = (x + k3x * h, v + k3v * h);
        let k4x = relativistic_velocity(&v4);
        let k4v = force.force(t_next, &x4, &v4);
        check(t_next, &x4, &k4v)?;
        x += (k1x + (k2x + k3x) * 2.0 + k4x) * (h / 6.0);
        v += (k1v + (k2v + k3v) * 2.0 + k4v) * (h / 6.0);
        t = t_next;
    }
    Ok(traj)
}

/// Trajectory on `[0, T]`.
pub fn integrate_trajectory<F: Force + ?Sized>(
    force: &F,
    p0: PhasePoint,
    t_final: f64,
    dt: f64,
) -> Result<Trajectory, FlowError> {
    integrate_between(force, p0, 0.0, t_final, dt)
}

/// Flow map from time `t0` to `t1`.
pub fn flow_map<F: Force + ?Sized>(
    force: &F,
    t0: f64,
    t1: f64,
    dt: f64,
) -> impl Fn(&PhasePoint) -> Result<PhasePoint, FlowError> + '_ {
    move |p| integrate_between(force, *p, t0, t1, dt).map(|tr| tr.end())
}

/// Determinant of the central-difference Jacobian of a phase-space map.
pub fn jacobian_estimate<M>(flow: M, p: &PhasePoint, h: f64) -> Result<f64, FlowError>
where
    M: Fn(&PhasePoint) -> Result<PhasePoint, FlowError>,
{
    let base = p.to_vector();
    let mut jac = Matrix6::zeros();
    for i in 0..6 {
        let mut plus = base;
        let mut minus = base;
        plus[i] += h;
        minus[i] -= h;
        let fp = flow(&PhasePoint::from_vector(&plus))?.to_vector();
        let fm = flow(&PhasePoint::from_vector(&minus))?.to_vector();
        jac.set_column(i, &((fp - fm) / (2.0 * h)));
    }
    let det = jac.determinant();
    if det.is_finite() {
        Ok(det)
    } else {
        Err(FlowError::SingularStencil)
    }
}

/// `|Φ_{0→t+s}(p) − Φ_{t→t+s}(Φ_{0→t}(p))|` in phase space.
pub fn semigroup_residual<F: Force + ?Sized>(
    force: &F,
    p0: PhasePoint,
    t: f64,
    s: f64,
    dt: f64,
) -> Result<f64, FlowError> {
    let direct = integrate_between(force, p0, 0.0, t + s, dt)?.end();
    let mid = integrate_between(force, p0, 0.0, t, dt)?.end();
    let composed = integrate_between(force, mid, t, t + s, dt)?.end();
    Ok((direct.to_vector() - composed.to_vector()).norm())
}

/// `f(t, z) = f⁰(Φ_{t→0}(z))` at each probe.
pub fn pushforward_density<F, D>(
    force: &F,
    f0: D,
    t: f64,
    dt: f64,
    probes: &[PhasePoint],
) -> Result<Vec<f64>, FlowError>
where
    F: Force + ?Sized,
    D: Fn(&PhasePoint) -> f64 + Sync,
{
    probes
        .par_iter()
        .map(|z| {
            if t == 0.0 {
                return Ok(f0(z));
            }
            let back = integrate_between(force, *z, t, 0.0, dt)?.end();
            Ok(f0(&back))
        })
        .collect()
}
