//! Spherical, shell and pair-adapted maximal operators on grid fields.

use std::f64::consts::PI;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::field::{GridField3, ScalarField, UniformGrid};
use crate::quad::GaussLegendre;
use crate::sphere::SphereRule;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MaximalError {
    #[error("input field {0} has zero L^p norm")]
    ZeroNorm(usize),
    #[error("exponent p must be at least 1, got {0}")]
    BadExponent(f64),
}

/// Value of a maximal operator at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MaxValue {
    pub value: f64,
    /// Radius (or outer shell radius) attaining the maximum.
    pub argmax: f64,
    /// Radii skipped because the sphere or shell left the grid.
    pub skipped: usize,
    /// Fewer than [`MIN_SHELL_NODES`] quadrature nodes per shell.
    pub under_resolved: bool,
}

pub const MIN_SHELL_NODES: usize = 50;

/// `r_min · ratio^k` up to `r_max`.
pub fn geometric_radii(r_min: f64, r_max: f64, ratio: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut r = r_min;
    while r <= r_max * (1.0 + 1e-12) {
        out.push(r);
        r *= ratio;
    }
    out
}

fn sphere_average(g: &GridField3, x: &Vector3<f64>, r: f64, rule: &SphereRule) -> f64 {
    rule.sum(|w| g.value(&(x + w * r)).abs()) / (4.0 * PI)
}

/// `max_r ⨍_{S(x, r)} |g|` over `radii`; with `refine`, the two geometric
/// midpoints next to the discrete argmax are also tried.
pub fn spherical_max(
    g: &GridField3,
    x: &Vector3<f64>,
    radii: &[f64],
    rule: &SphereRule,
    refine: bool,
) -> MaxValue {
    let grid = g.grid();
    let mut best = MaxValue {
        value: 0.0,
        argmax: 0.0,
        skipped: 0,
        under_resolved: false,
    };
    let mut best_idx = None;
    for (i, &r) in radii.iter().enumerate() {
        if !grid.contains_ball(x, r) {
            best.skipped += 1;
            continue;
        }
        let avg = sphere_average(g, x, r, rule);
        if avg > best.value || best_idx.is_none() {
            best.value = avg;
            best.argmax = r;
            best_idx = Some(i);
        }
    }
    if let (true, Some(i)) = (refine, best_idx) {
        let mut candidates = Vec::with_capacity(2);
        if i > 0 {
            candidates.push((radii[i - 1] * radii[i]).sqrt());
        }
        if i + 1 < radii.len() {
            candidates.push((radii[i] * radii[i + 1]).sqrt());
        }
        for r in candidates {
            if grid.contains_ball(x, r) {
                let avg = sphere_average(g, x, r, rule);
                if avg > best.value {
                    best.value = avg;
                    best.argmax = r;
                }
            }
        }
    }
    best
}

/// `∫_{a}^{b} r² ∫_{S²} |g(x + rω)| dω dr` by Gauss-Legendre in `r`.
fn shell_integral(g: &GridField3, x: &Vector3<f64>, a: f64, b: f64, radial: &GaussLegendre, rule: &SphereRule) -> f64 {
    radial
        .on_interval(a, b)
        .map(|(r, w)| w * r * r * rule.sum(|om| g.value(&(x + om * r)).abs()))
        .sum()
}

/// `sup_{η ≤ ε} (ε²η)⁻¹ ∫_{ε−η ≤ |z−x| ≤ ε} |g(z)| dz` over `eps × (eta_fraction · ε)`.
pub fn shell_max(
    g: &GridField3,
    x: &Vector3<f64>,
    eps_grid: &[f64],
    eta_fractions: &[f64],
    radial: &GaussLegendre,
    rule: &SphereRule,
) -> MaxValue {
    let grid = g.grid();
    let mut best = MaxValue {
        value: 0.0,
        argmax: 0.0,
        skipped: 0,
        under_resolved: radial.len() * rule.len() < MIN_SHELL_NODES,
    };
    for &eps in eps_grid {
        if !grid.contains_ball(x, eps) {
            best.skipped += 1;
            continue;
        }
        for &frac in eta_fractions {
            let eta = eps * frac.clamp(0.0, 1.0);
            if eta <= 0.0 {
                continue;
            }
            let val = shell_integral(g, x, eps - eta, eps, radial, rule) / (eps * eps * eta);
            if val > best.value {
                best.value = val;
                best.argmax = eps;
            }
        }
    }
    best
}

/// `(δ + R)⁻¹ ∫_{B(x, R)} |g(z)| |z − x|⁻² dz = (δ + R)⁻¹ ∫_0^R ∫_{S²} |g(x + rω)| dω dr`.
pub fn pair_max(
    g: &GridField3,
    x: &Vector3<f64>,
    radius: f64,
    delta: f64,
    radial: &GaussLegendre,
    rule: &SphereRule,
) -> f64 {
    if radius <= 0.0 {
        return 0.0;
    }
    let integral: f64 = radial
        .on_interval(0.0, radius)
        .map(|(r, w)| w * rule.sum(|om| g.value(&(x + om * r)).abs()))
        .sum();
    integral / (delta + radius)
}

/// `∫_{B(0, K)} |g(z)| / ((δ + |z − x|)|z − x|²) dz` in spherical coordinates about `x`,
/// with `panels` Gauss-Legendre panels in the radius.
pub fn kernel_bound(
    g: &GridField3,
    x: &Vector3<f64>,
    k: f64,
    delta: f64,
    radial: &GaussLegendre,
    panels: usize,
    rule: &SphereRule,
) -> f64 {
    let r_max = x.norm() + k;
    let width = r_max / panels as f64;
    (0..panels)
        .map(|p| {
            radial
                .on_interval(p as f64 * width, (p + 1) as f64 * width)
                .map(|(r, w)| {
                    w / (delta + r)
                        * rule.sum(|om| {
                            let z = x + om * r;
                            if z.norm() <= k {
                                g.value(&z).abs()
                            } else {
                                0.0
                            }
                        })
                })
                .sum::<f64>()
        })
        .sum()
}

/// A maximal operator with all of its discretization parameters.
#[derive(Debug, Clone)]
pub enum MaximalOp {
    Spherical {
        radii: Vec<f64>,
        rule: SphereRule,
        refine: bool,
    },
    Shell {
        eps: Vec<f64>,
        eta_fractions: Vec<f64>,
        radial: GaussLegendre,
        rule: SphereRule,
    },
    Pair {
        radius: f64,
        delta: f64,
        radial: GaussLegendre,
        rule: SphereRule,
    },
}

impl MaximalOp {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Spherical { .. } => "spherical",
            Self::Shell { .. } => "shell",
            Self::Pair { .. } => "pair",
        }
    }

    pub fn apply(&self, g: &GridField3, x: &Vector3<f64>) -> MaxValue {
        match self {
            Self::Spherical { radii, rule, refine } => spherical_max(g, x, radii, rule, *refine),
            Self::Shell {
                eps,
                eta_fractions,
                radial,
                rule,
            } => shell_max(g, x, eps, eta_fractions, radial, rule),
            Self::Pair {
                radius,
                delta,
                radial,
                rule,
            } => MaxValue {
                value: pair_max(g, x, *radius, *delta, radial, rule),
                argmax: *radius,
                skipped: 0,
                under_resolved: false,
            },
        }
    }

    /// Operator values at every node of `out` (parallel, index-ordered).
    pub fn apply_on_grid(&self, g: &GridField3, out: &UniformGrid) -> Vec<f64> {
        (0..out.len())
            .into_par_iter()
            .map(|i| self.apply(g, &out.point_at(i)).value)
            .collect()
    }
}

/// Nodes of `grid` taken with the given stride in each axis.
pub fn strided(grid: &UniformGrid, stride: usize) -> UniformGrid {
    let dims = grid.dims.map(|d| (d - 1) / stride + 1);
    UniformGrid::new(dims, grid.origin, grid.spacing * stride as f64)
}

fn lp_of_values(values: &[f64], cell: f64, p: f64) -> f64 {
    (values.iter().map(|v| v.abs().powf(p)).sum::<f64>() * cell).powf(1.0 / p)
}

/// `‖op g‖_p / ‖g‖_p` for each field, both norms by Riemann sums on the nodes of the
/// field's grid taken with `stride`.
pub fn lp_operator_norm_scan(
    op: &MaximalOp,
    fields: &[GridField3],
    p: f64,
    stride: usize,
) -> Result<Vec<f64>, MaximalError> {
    if !(p >= 1.0) {
        return Err(MaximalError::BadExponent(p));
    }
    fields
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let out = strided(g.grid(), stride.max(1));
            let cell = out.spacing.powi(3);
            let input: Vec<f64> = out.points().map(|x| g.value(&x)).collect();
            let n_in = lp_of_values(&input, cell, p);
            if n_in == 0.0 {
                return Err(MaximalError::ZeroNorm(i));
            }
            Ok(lp_of_values(&op.apply_on_grid(g, &out), cell, p) / n_in)
        })
        .collect()
}
