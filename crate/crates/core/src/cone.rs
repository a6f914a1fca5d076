//! Backward light-cone coordinates `z = X_s − sω` along a sub-luminal trajectory.
//!
//! The trajectory is read as piecewise linear between its nodes, so `Ẋ` is the
//! constant difference quotient of the cell containing `s`.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::flow3d::{PairedTrajectory, Trajectory};
use crate::rng::{self, Purpose};
use crate::sphere::SphereRule;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConeError {
    #[error("point lies outside the cone ball: |z − X_t| = {distance} ≥ t = {radius}")]
    OutsideDomain { distance: f64, radius: f64 },
    #[error("point is at the cone apex (s = {s:e})")]
    DegenerateApex { s: f64 },
    #[error("trajectory violates the speed bound (max speed {0})")]
    SpeedBound(f64),
    #[error("time index {index} out of range for {len} nodes")]
    BadIndex { index: usize, len: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConeChart {
    pub s: f64,
    pub omega: Vector3<f64>,
    /// `s² |Ẋ_s·ω − 1|`.
    pub jac: f64,
    pub grad_s: Vector3<f64>,
    /// `grad_omega[(i, j)] = ∂ω_i/∂z_j`.
    pub grad_omega: Matrix3<f64>,
    /// Cell `[t_k, t_{k+1}]` containing `s`.
    pub cell: usize,
    /// `|X_s − z| − s` at the returned `s`.
    pub residual: f64,
}

impl ConeChart {
    /// `X_s − sω`, evaluated on the trajectory.
    pub fn map(&self, traj: &Trajectory) -> Vector3<f64> {
        position(traj, self.cell, self.s) - self.omega * self.s
    }
}

#[inline]
fn velocity(traj: &Trajectory, k: usize) -> Vector3<f64> {
    (traj.x[k + 1] - traj.x[k]) / (traj.times[k + 1] - traj.times[k])
}

#[inline]
fn position(traj: &Trajectory, k: usize, s: f64) -> Vector3<f64> {
    traj.x[k] + velocity(traj, k) * (s - traj.times[k])
}

/// Inverts the cone of radius `T` (last node).
pub fn invert_cone(traj: &Trajectory, z: &Vector3<f64>, tol: f64) -> Result<ConeChart, ConeError> {
    invert_cone_at(traj, traj.len() - 1, z, tol)
}

/// Solves `|X_s − z| = s` for `s ∈ [0, t_m]`: binary search over nodes for the sign
/// change of the decreasing function `g(s) = |X_s − z| − s`, then bisection in the cell.
pub fn invert_cone_at(
    traj: &Trajectory,
    t_index: usize,
    z: &Vector3<f64>,
    tol: f64,
) -> Result<ConeChart, ConeError> {
    if t_index >= traj.len() {
        return Err(ConeError::BadIndex {
            index: t_index,
            len: traj.len(),
        });
    }
    let t = traj.times[t_index];
    let g = |k: usize| (traj.x[k] - z).norm() - traj.times[k];
    let gm = g(t_index);
    if gm >= 0.0 {
        return Err(ConeError::OutsideDomain {
            distance: (traj.x[t_index] - z).norm(),
            radius: t,
        });
    }
    let g0 = g(0);
    if g0 < 10.0 * tol {
        return Err(ConeError::DegenerateApex { s: g0.max(0.0) });
    }
    // g(lo) ≥ 0 > g(hi)
    let (mut lo, mut hi) = (0usize, t_index);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if g(mid) >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let cell = lo;
    let u = velocity(traj, cell);
    if u.norm() >= 1.0 {
        return Err(ConeError::SpeedBound(u.norm()));
    }
    let gs = |s: f64| (traj.x[cell] + u * (s - traj.times[cell]) - z).norm() - s;
    let (mut a, mut b) = (traj.times[cell], traj.times[cell + 1]);
    let width_tol = 1e-3 * tol;
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b || b - a <= width_tol {
            break;
        }
        if gs(m) >= 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    let (ga, gb) = (gs(a), gs(b));
    let s = if ga.abs() <= gb.abs() { a } else { b };
    if s < 10.0 * tol {
        return Err(ConeError::DegenerateApex { s });
    }
    let diff = traj.x[cell] + u * (s - traj.times[cell]) - z;
    let omega = diff / diff.norm();
    Ok(chart(s, omega, &u, cell, gs(s)))
}

fn chart(s: f64, omega: Vector3<f64>, xdot: &Vector3<f64>, cell: usize, residual: f64) -> ConeChart {
    let c = omega.dot(xdot) - 1.0;
    let grad_s = omega / c;
    let grad_omega = ((xdot - omega) * omega.transpose() / c - Matrix3::identity()) / s;
    ConeChart {
        s,
        omega,
        jac: s * s * c.abs(),
        grad_s,
        grad_omega,
        cell,
        residual,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DomainCheck {
    /// `max (|Φ_X(s, ω) − X_t| − t)₊` over the sampled charts.
    pub max_violation: f64,
    /// Fraction of random ball points that inverted successfully.
    pub coverage: f64,
}

/// Checks `Φ_X([0, t] × S²) = B(X_t, t)` numerically in both directions.
pub fn cone_domain_check(
    traj: &Trajectory,
    t_index: usize,
    n_probe: usize,
    rule: &SphereRule,
    seed: u64,
    tol: f64,
) -> DomainCheck {
    let t = traj.times[t_index];
    let center = traj.x[t_index];
    let mut max_violation = 0.0f64;
    for k in 0..t_index {
        // nodes and cell midpoints
        for (s, xs) in [
            (traj.times[k], traj.x[k]),
            (
                0.5 * (traj.times[k] + traj.times[k + 1]),
                0.5 * (traj.x[k] + traj.x[k + 1]),
            ),
        ] {
            for (omega, _) in rule.iter() {
                let d = (xs - omega * s - center).norm() - t;
                max_violation = max_violation.max(d);
            }
        }
    }
    if t_index == 0 || t == 0.0 {
        return DomainCheck {
            max_violation,
            coverage: 1.0,
        };
    }
    let mut r = rng::stream(seed, Purpose::Probe, t_index as u64);
    let mut ok = 0usize;
    let mut tried = 0usize;
    while tried < n_probe {
        let z = rng::in_ball(&mut r, &center, t);
        if (z - center).norm() >= t {
            continue;
        }
        tried += 1;
        if let Ok(c) = invert_cone_at(traj, t_index, &z, tol) {
            if (c.map(traj) - z).norm() <= 10.0 * tol {
                ok += 1;
            }
        }
    }
    DomainCheck {
        max_violation,
        coverage: ok as f64 / n_probe.max(1) as f64,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradCheck {
    pub rel_err_s: f64,
    pub rel_err_omega: f64,
    /// Step actually used (shrunk so the stencil stays in one cell).
    pub h: f64,
}

/// Analytic `∇_z s`, `∇_z ω` against central differences of the inversion.
pub fn grad_check(
    chart: &ConeChart,
    traj: &Trajectory,
    z: &Vector3<f64>,
    h: f64,
    t_index: usize,
    tol: f64,
) -> Result<GradCheck, ConeError> {
    let mut h = h;
    'shrink: loop {
        let mut fd_s = Vector3::zeros();
        let mut fd_omega = Matrix3::zeros();
        for j in 0..3 {
            let mut e = Vector3::zeros();
            e[j] = h;
            let p = invert_cone_at(traj, t_index, &(z + e), tol)?;
            let m = invert_cone_at(traj, t_index, &(z - e), tol)?;
            if (p.cell != chart.cell || m.cell != chart.cell) && h > 1e-10 {
                h *= 0.1;
                continue 'shrink;
            }
            fd_s[j] = (p.s - m.s) / (2.0 * h);
            fd_omega.set_column(j, &((p.omega - m.omega) / (2.0 * h)));
        }
        let rel = |a: f64, b: f64| a / b.max(f64::MIN_POSITIVE);
        return Ok(GradCheck {
            rel_err_s: rel((fd_s - chart.grad_s).norm(), chart.grad_s.norm()),
            rel_err_omega: rel((fd_omega - chart.grad_omega).norm(), chart.grad_omega.norm()),
            h,
        });
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilityGap {
    pub gap_s: f64,
    pub gap_omega: f64,
    pub ratio_s: f64,
    pub ratio_omega: f64,
}

/// Gaps between the cone coordinates of a point for both members of a pair,
/// relative to `K max_{s≤min}|X_s − X^δ_s|` and `K max|X − X^δ| (1/s_X + 1/s_{X^δ})`
/// with `K = √(1 + v_max²)`.
pub fn stability_gap(
    pair: &PairedTrajectory,
    z: &Vector3<f64>,
    v_max: f64,
    tol: f64,
) -> Result<StabilityGap, ConeError> {
    let a = invert_cone(&pair.base, z, tol)?;
    let b = invert_cone(&pair.shifted, z, tol)?;
    let k = (1.0 + v_max * v_max).sqrt();
    let max_diff_until = |s_lim: f64| {
        pair.base
            .times
            .iter()
            .zip(pair.base.x.iter().zip(&pair.shifted.x))
            .take_while(|(t, _)| **t <= s_lim)
            .map(|(_, (p, q))| (p - q).norm())
            .fold((pair.base.x[0] - pair.shifted.x[0]).norm(), f64::max)
    };
    let gap_s = (a.s - b.s).abs();
    let gap_omega = (a.omega - b.omega).norm();
    let bound_s = k * max_diff_until(a.s.min(b.s));
    let bound_omega = k * max_diff_until(a.s.max(b.s)) * (1.0 / a.s + 1.0 / b.s);
    let ratio = |gap: f64, bound: f64| if gap == 0.0 { 0.0 } else { gap / bound };
    Ok(StabilityGap {
        gap_s,
        gap_omega,
        ratio_s: ratio(gap_s, bound_s),
        ratio_omega: ratio(gap_omega, bound_omega),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VolumeEstimate {
    pub estimate: f64,
    pub exact: f64,
    pub std_error: f64,
    pub rejected: usize,
}

/// Monte Carlo `∫_{B(X_t, t)} dz / J_X(z)`, which equals `4πt`.
///
/// Points are drawn as `X_0 + r u` with `r ~ U(0, 2t)`, `u` uniform on the sphere:
/// the density `1/(8π t r²)` cancels the `s²` in `J_X` near the apex.
pub fn jacobian_volume(
    traj: &Trajectory,
    t_index: usize,
    n_samples: usize,
    seed: u64,
    tol: f64,
) -> VolumeEstimate {
    let t = traj.times[t_index];
    let apex = traj.x[0];
    let center = traj.x[t_index];
    let mut r = rng::stream(seed, Purpose::MonteCarlo, t_index as u64);
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    let mut rejected = 0;
    for _ in 0..n_samples {
        let rad = 2.0 * t * r.random::<f64>();
        let z = apex + rng::unit_vector3(&mut r) * rad;
        let mut val = 0.0;
        if (z - center).norm() < t {
            match invert_cone_at(traj, t_index, &z, tol) {
                Ok(c) => val = 8.0 * PI * t * rad * rad / c.jac,
                Err(_) => rejected += 1,
            }
        }
        sum += val;
        sum_sq += val * val;
    }
    let n = n_samples.max(1) as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0);
    VolumeEstimate {
        estimate: mean,
        exact: 4.0 * PI * t,
        std_error: (var / n).sqrt(),
        rejected,
    }
}
