use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::report::{Cell, Report, Summary, Table};
use super::{ExperimentConfig, FieldChoice, HarnessError, OperatorChoice, Pairing};
use crate::cone::{cone_domain_check, grad_check, invert_cone, jacobian_volume, stability_gap, DomainCheck, VolumeEstimate};
use crate::field::{
    BallIndicator, GaussianProfile, GridField3, RadialBump, ScalarField, UniformGrid, VectorField,
};
use crate::fit::{fit_scaling, loglog_slope, FitModel, ScalingFit};
use crate::flow1d::{
    integrate_1d, occupation_measure, scaling_study_1d, write_interval_dump, AlphaSpec, Ensemble1D,
    MultiSpeedForce, Study1dConfig, Study1dReport,
};
use crate::flow3d::{
    delta_direction, integrate_trajectory, pair_with_base, Box6, Ensemble, Force, FunctionalReport,
    MollifiedForce, PairSummary, PairedTrajectory, PhasePoint, Trajectory, ZeroForce,
};
use crate::maximal::{geometric_radii, lp_operator_norm_scan, MaximalOp};
use crate::models::{rough_field, smooth_field, RoughFieldSpec};
use crate::quad::GaussLegendre;
use crate::rng::{self, Purpose};
use crate::sphere::SphereRule;
use crate::wave::{dispersion_profile, DispersionProfile, FieldForce, ForceMode, Modulation, SamplingBox};

fn numerical<E: std::fmt::Display>(e: E) -> HarnessError {
    HarnessError::Numerical(e.to_string())
}

fn sphere_rule(cfg: &ExperimentConfig) -> Result<SphereRule, HarnessError> {
    SphereRule::new(cfg.quad_order).map_err(numerical)
}

pub fn phase_box(cfg: &ExperimentConfig) -> Box6 {
    Box6 {
        x_lo: Vector3::repeat(cfg.domain_x[0]),
        x_hi: Vector3::repeat(cfg.domain_x[1]),
        v_lo: Vector3::repeat(cfg.domain_v[0]),
        v_hi: Vector3::repeat(cfg.domain_v[1]),
    }
}

/// Force of the 3-D experiments. In Lorentz mode the magnetic field is the
/// smooth field itself, or a rough field with the next layout seed.
pub fn build_force(cfg: &ExperimentConfig) -> Arc<dyn Force> {
    let (e, b): (Arc<dyn VectorField>, Arc<dyn VectorField>) = match cfg.field {
        FieldChoice::Zero => return Arc::new(ZeroForce),
        FieldChoice::Rough => {
            let b_spec = RoughFieldSpec {
                seed: cfg.rough.seed.wrapping_add(1),
                ..cfg.rough
            };
            let e = Arc::new(rough_field(&cfg.rough));
            match cfg.force_mode {
                ForceMode::Electric => (e, Arc::new(crate::field::ZeroField)),
                ForceMode::Lorentz => (e, Arc::new(rough_field(&b_spec))),
            }
        }
        _ => {
            let f = Arc::new(smooth_field());
            (f.clone(), f)
        }
    };
    let nu = if cfg.nu_scale > 0.0 {
        Modulation::Lorentzian { scale: cfg.nu_scale }
    } else {
        Modulation::Unit
    };
    let force = match cfg.force_mode {
        ForceMode::Electric => FieldForce::electric(e),
        ForceMode::Lorentz => FieldForce::lorentz(e, b),
    };
    Arc::new(force.with_modulation(nu))
}

fn fit_value(fit: &Result<ScalingFit, String>) -> serde_json::Value {
    match fit {
        Ok(f) => serde_json::to_value(f).expect("fit serializes"),
        Err(e) => serde_json::json!({ "error": e }),
    }
}

// ---------------------------------------------------------------- qdelta3d

/// Ensemble pair statistics of the 3-D flow for every `δ`.
#[derive(Debug, Clone)]
pub struct QDeltaStudy {
    /// `summaries[j][i]`: pair `i` at `deltas[j]`.
    pub summaries: Vec<Vec<PairSummary>>,
    /// `δ`-major, `K`-minor.
    pub reports: Vec<FunctionalReport>,
    pub weight: f64,
    /// `(−log δ, Q_δ/T)` with the `ψ` trend.
    pub psi_fit: Result<ScalingFit, String>,
    /// Power law of `I_δ` against `−log δ` at the largest `K`.
    pub i_delta_fit: Result<ScalingFit, String>,
    /// Log-log slope of `|Ω∖Ω_K|/|Ω|` against `K` at the first `δ`.
    pub omega_k_slope: Option<f64>,
}

pub fn qdelta_study(cfg: &ExperimentConfig, force: &dyn Force) -> Result<QDeltaStudy, HarnessError> {
    let ens = Ensemble::sample(phase_box(cfg), cfg.n_samples, cfg.seed);
    let per_point: Vec<Vec<PairSummary>> = (0..ens.len())
        .into_par_iter()
        .map(|i| {
            let p = ens.points[i];
            let base = integrate_trajectory(force, p, cfg.t_final, cfg.dt)?;
            let (d1, d2) = delta_direction(cfg.seed, i);
            cfg.deltas
                .iter()
                .map(|&d| {
                    let pair = match cfg.pairing {
                        Pairing::Shift => pair_with_base(force, base.clone(), (d1 * d, d2 * d), cfg.t_final, cfg.dt)?,
                        Pairing::Mollified => {
                            let smoothed = MollifiedForce::new(force, d);
                            let shifted = integrate_trajectory(&smoothed, p, cfg.t_final, cfg.dt)?;
                            PairedTrajectory::from_trajectories(base.clone(), shifted, (Vector3::x() * d, Vector3::zeros()))
                        }
                    };
                    Ok(PairSummary::from_pair(&pair))
                })
                .collect()
        })
        .collect::<Result<_, crate::flow3d::FlowError>>()
        .map_err(numerical)?;
    let summaries: Vec<Vec<PairSummary>> = (0..cfg.deltas.len())
        .map(|j| per_point.iter().map(|p| p[j]).collect())
        .collect();
    let mut reports = Vec::with_capacity(cfg.deltas.len() * cfg.k_grid.len());
    for (j, &delta) in cfg.deltas.iter().enumerate() {
        for &k in &cfg.k_grid {
            reports.push(FunctionalReport::compute(
                &summaries[j],
                ens.weight,
                delta,
                k,
                cfg.t_final,
                Some(force.modulation_bound(k)),
            ));
        }
    }
    let nk = cfg.k_grid.len();
    let by_delta = |pick: &dyn Fn(&FunctionalReport) -> Option<f64>, col: usize| {
        let mut pts: Vec<(f64, f64)> = cfg
            .deltas
            .iter()
            .enumerate()
            .filter_map(|(j, d)| pick(&reports[j * nk + col]).map(|y| (-d.ln(), y)))
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        pts
    };
    let psi_fit = fit_scaling(&by_delta(&|r| Some(r.q / cfg.t_final), 0), FitModel::Psi).map_err(|e| e.to_string());
    let k_max = (0..nk)
        .max_by(|&a, &b| cfg.k_grid[a].total_cmp(&cfg.k_grid[b]))
        .unwrap_or(0);
    let i_delta_fit = fit_scaling(&by_delta(&|r| r.i_delta, k_max), FitModel::Power).map_err(|e| e.to_string());
    let omega_k_slope = loglog_slope(
        &reports[..nk]
            .iter()
            .map(|r| (r.k, r.omega_k_fraction))
            .collect::<Vec<_>>(),
    );
    Ok(QDeltaStudy {
        summaries,
        reports,
        weight: ens.weight,
        psi_fit,
        i_delta_fit,
        omega_k_slope,
    })
}

fn run_qdelta(cfg: &ExperimentConfig) -> Result<Report, HarnessError> {
    let force = build_force(cfg);
    let study = qdelta_study(cfg, &*force)?;
    let mut table = Table::new(&[
        "delta",
        "K",
        "Q",
        "Q_K",
        "omega_K_fraction",
        "I_delta",
        "psi_estimate",
        "dt",
        "n_samples",
        "seed",
    ]);
    for r in &study.reports {
        table.push(vec![
            r.delta.into(),
            r.k.into(),
            r.q.into(),
            r.q_k.into(),
            r.omega_k_fraction.into(),
            r.i_delta.into(),
            r.psi_estimate.into(),
            cfg.dt.into(),
            cfg.n_samples.into(),
            cfg.seed.into(),
        ]);
    }
    let mut s = Summary::new(cfg);
    s.fits.insert("psi".into(), fit_value(&study.psi_fit));
    s.fits.insert("i_delta".into(), fit_value(&study.i_delta_fit));
    s.fit("omega_k_slope", &study.omega_k_slope);
    s.result("weight", &study.weight);
    let all = || study.summaries.iter().flatten();
    s.check(
        "q_finite_nonnegative",
        study.reports.iter().all(|r| r.q.is_finite() && r.q >= 0.0 && r.q_k >= 0.0),
        "Q and Q_K are finite and nonnegative",
    );
    s.check(
        "omega_fraction_in_unit_interval",
        study.reports.iter().all(|r| (0.0..=1.0).contains(&r.omega_k_fraction)),
        "excluded fractions lie in [0, 1]",
    );
    let nk = cfg.k_grid.len();
    let monotone_k = study.reports.chunks(nk).all(|rows| {
        let mut by_k: Vec<_> = rows.iter().map(|r| (r.k, r.omega_k_fraction)).collect();
        by_k.sort_by(|a, b| a.0.total_cmp(&b.0));
        by_k.windows(2).all(|w| w[1].1 <= w[0].1)
    });
    s.check("omega_fraction_nonincreasing_in_k", monotone_k, "larger K excludes fewer pairs");
    let worst_log = all()
        .map(|p| p.monotone_log.0 - p.monotone_log.1 * (1.0 + 1e-9) - 1e-12)
        .fold(f64::NEG_INFINITY, f64::max);
    s.check(
        "monotone_log_inequality",
        worst_log <= 0.0,
        format!("max of lhs − rhs is {worst_log:e}"),
    );
    let worst_kinetic = all().map(|p| p.kinetic_ratio).fold(0.0, f64::max);
    s.check(
        "kinetic_derivative_bound",
        worst_kinetic <= 1.0 + 1e-9,
        format!("max |ΔẊ|²/(4|ΔV|²) = {worst_kinetic}"),
    );
    if let Ok(fit) = &study.psi_fit {
        if let Some(trend) = &fit.psi {
            s.check(
                "psi_sublinear",
                trend.sublinear,
                format!("Q/(T·(−log δ)) ratios {:?}", trend.ratios),
            );
        }
    } else {
        s.warnings.push("psi fit skipped: fewer than 3 usable deltas".into());
    }
    Ok(Report {
        summary: s,
        table,
        extras: Vec::new(),
    })
}

// ---------------------------------------------------------------- rdelta1d

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OccupationRow {
    pub k: f64,
    pub fraction: f64,
    /// `fraction · K`.
    pub scaled: f64,
}

/// Fraction of an ensemble whose occupation time near `w` is at least `Kη`, for each `K`.
#[allow(clippy::too_many_arguments)]
pub fn occupation_scan(
    alpha: &AlphaSpec,
    force: &MultiSpeedForce,
    x_range: (f64, f64),
    v_range: (f64, f64),
    n: usize,
    seed: u64,
    t_final: f64,
    dt: f64,
    w: f64,
    eta: f64,
    ks: &[f64],
) -> Result<Vec<OccupationRow>, HarnessError> {
    let ens = Ensemble1D::sample(x_range, v_range, force.dim(), n, seed);
    let trajs = ens
        .points
        .par_iter()
        .map(|(x, v)| integrate_1d(alpha, force, *x, v, t_final, dt))
        .collect::<Result<Vec<_>, _>>()
        .map_err(numerical)?;
    Ok(ks
        .iter()
        .map(|&k| {
            let fraction = occupation_measure(&trajs, w, eta, k);
            OccupationRow {
                k,
                fraction,
                scaled: fraction * k,
            }
        })
        .collect())
}

pub fn study_1d_config(cfg: &ExperimentConfig) -> Study1dConfig {
    Study1dConfig {
        x_range: (cfg.domain_x[0], cfg.domain_x[1]),
        v_range: (cfg.domain_v[0], cfg.domain_v[1]),
        n_points: cfg.n_samples,
        seed: cfg.seed,
        t_final: cfg.t_final,
        dt: cfg.dt,
        deltas: cfg.deltas.clone(),
        rate_constant: cfg.rate_constant,
        mode: cfg.rate_mode,
        dump_points: cfg.dump_points,
    }
}

pub fn force_1d(cfg: &ExperimentConfig) -> Result<MultiSpeedForce, HarnessError> {
    MultiSpeedForce::sawtooth_instance(cfg.sawtooth_amplitude, cfg.gamma, cfg.n_speeds).map_err(numerical)
}

fn run_rdelta(cfg: &ExperimentConfig) -> Result<Report, HarnessError> {
    let alpha = AlphaSpec::identity();
    let force = force_1d(cfg)?;
    let study: Study1dReport = scaling_study_1d(&alpha, &force, &study_1d_config(cfg)).map_err(numerical)?;
    let occupation = occupation_scan(
        &alpha,
        &force,
        (cfg.domain_x[0], cfg.domain_x[1]),
        (cfg.domain_v[0], cfg.domain_v[1]),
        cfg.n_samples,
        cfg.seed,
        cfg.t_final,
        cfg.dt,
        force.speeds()[0],
        cfg.occupation_eta,
        &cfg.k_grid,
    )?;
    let mut table = Table::new(&[
        "delta",
        "eta",
        "R",
        "median_delta_bar_T",
        "sum_l_n",
        "max_k_n",
        "fitted_exponent_so_far",
    ]);
    for r in &study.rows {
        table.push(vec![
            r.delta.into(),
            r.eta.into(),
            r.r.into(),
            r.median_delta_bar_t.into(),
            r.sum_l_n.into(),
            r.max_k_n.into(),
            r.fitted_exponent_so_far.into(),
        ]);
    }
    let mut s = Summary::new(cfg);
    s.fit("r_exponent", &study.fitted_exponent);
    s.result("moment_sum", &study.moment_sum);
    s.result("rows", &study.rows);
    s.result("occupation", &occupation);
    s.result(
        "occupation_constant",
        &occupation.iter().map(|o| o.scaled).fold(0.0, f64::max),
    );
    s.check(
        "moment_sum_finite",
        study.moment_sum.is_finite(),
        format!("Σ(1 + n^γ)μ_n = {}", study.moment_sum),
    );
    s.check(
        "r_finite_nonnegative",
        study.rows.iter().all(|r| r.r.is_finite() && r.r >= 0.0),
        "R is finite and nonnegative",
    );
    s.check(
        "adaptive_normalization_dominates",
        study.rows.iter().all(|r| r.r <= r.r_fixed + 1e-12),
        "R with δ̄ never exceeds R with |δ|",
    );
    let medians: Vec<f64> = study.rows.iter().map(|r| r.median_delta_bar_t).collect();
    s.check(
        "median_delta_bar_nonincreasing",
        medians.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)),
        format!("medians {medians:?}"),
    );
    let fractions: Vec<f64> = occupation.iter().map(|o| o.fraction).collect();
    s.check(
        "occupation_fraction_in_unit_interval",
        fractions.iter().all(|f| (0.0..=1.0).contains(f)),
        format!("fractions {fractions:?}"),
    );
    for r in study.rows.iter().filter(|r| r.under_resolved) {
        s.warnings.push(format!(
            "delta {}: dt exceeds a tenth of the smallest resonance threshold",
            r.delta
        ));
    }
    let mut extras = Vec::new();
    if cfg.dump_points > 0 {
        let mut bytes = Vec::new();
        write_interval_dump(&mut bytes, &study.intervals).map_err(numerical)?;
        extras.push(("intervals.jsonl".to_string(), bytes));
    }
    Ok(Report {
        summary: s,
        table,
        extras,
    })
}

// ---------------------------------------------------------------- dispersion

fn load_grid(path: &str) -> Result<GridField3, HarnessError> {
    GridField3::load(Path::new(path)).map_err(|source| HarnessError::Grid {
        path: path.to_string(),
        source,
    })
}

fn gaussian(width: f64) -> RadialBump<GaussianProfile> {
    RadialBump {
        center: Vector3::zeros(),
        amplitude: 1.0,
        profile: GaussianProfile { width },
    }
}

fn grid_support(g: &GridField3) -> SamplingBox {
    let grid = g.grid();
    let upper = grid.upper();
    SamplingBox {
        center: (grid.origin + upper) * 0.5,
        half_width: 0.5 * (upper - grid.origin).max(),
    }
}

pub fn dispersion_run(cfg: &ExperimentConfig) -> Result<DispersionProfile, HarnessError> {
    let rule = sphere_rule(cfg)?;
    let (g, support): (Box<dyn ScalarField>, SamplingBox) = match cfg.field {
        FieldChoice::Ball => (
            Box::new(BallIndicator {
                center: Vector3::zeros(),
                radius: cfg.ball_radius,
            }),
            SamplingBox {
                center: Vector3::zeros(),
                half_width: cfg.ball_radius,
            },
        ),
        FieldChoice::Gaussian => (
            Box::new(gaussian(cfg.gaussian_width)),
            SamplingBox {
                center: Vector3::zeros(),
                half_width: 6.0 * cfg.gaussian_width,
            },
        ),
        _ => {
            let g = load_grid(&cfg.grid_paths[0])?;
            let support = grid_support(&g);
            (Box::new(g), support)
        }
    };
    Ok(dispersion_profile(&*g, &rule, &cfg.s_grid, &support, cfg.n_samples, cfg.seed))
}

fn run_dispersion(cfg: &ExperimentConfig) -> Result<Report, HarnessError> {
    let profile = dispersion_run(cfg)?;
    let mut table = Table::new(&["s", "norm", "hits", "under_resolved"]);
    for p in &profile.points {
        table.push(vec![p.s.into(), p.norm.into(), p.hits.into(), p.under_resolved.into()]);
    }
    let mut s = Summary::new(cfg);
    s.fit("slope", &profile.slope);
    s.check(
        "norms_finite",
        profile.points.iter().all(|p| p.norm.is_finite() && p.norm >= 0.0),
        "every L² norm is finite",
    );
    if cfg.field == FieldChoice::Ball {
        s.check(
            "dispersive_slope",
            profile.slope.is_some_and(|m| m <= -0.6),
            format!("log-log slope {:?}, bound −0.6", profile.slope),
        );
    }
    for p in profile.points.iter().filter(|p| p.under_resolved) {
        s.warnings.push(format!("s = {}: only {} nonzero samples", p.s, p.hits));
    }
    Ok(Report {
        summary: s,
        table,
        extras: Vec::new(),
    })
}

// ---------------------------------------------------------------- maximal_scan

pub fn maximal_operator(cfg: &ExperimentConfig, choice: OperatorChoice) -> Result<MaximalOp, HarnessError> {
    let rule = sphere_rule(cfg)?;
    Ok(match choice {
        OperatorChoice::Spherical => MaximalOp::Spherical {
            radii: geometric_radii(cfg.r_min, cfg.r_max, cfg.radius_ratio),
            rule,
            refine: cfg.refine,
        },
        OperatorChoice::Shell => MaximalOp::Shell {
            eps: cfg.shell_eps.clone(),
            eta_fractions: cfg.eta_fractions.clone(),
            radial: GaussLegendre::new(cfg.radial_nodes),
            rule,
        },
        OperatorChoice::Pair => MaximalOp::Pair {
            radius: cfg.pair_radius,
            delta: cfg.pair_delta,
            radial: GaussLegendre::new(cfg.radial_nodes),
            rule,
        },
    })
}

pub fn maximal_fields(cfg: &ExperimentConfig) -> Result<Vec<(String, GridField3)>, HarnessError> {
    let grid = UniformGrid::centered_cube(cfg.grid_half, cfg.grid_spacing);
    let sample = |g: &dyn ScalarField| GridField3::sample(grid, g).map_err(numerical);
    match cfg.field {
        FieldChoice::Grid => cfg
            .grid_paths
            .iter()
            .map(|p| Ok((p.clone(), load_grid(p)?)))
            .collect(),
        FieldChoice::Ball => Ok(vec![(
            format!("ball:{}", cfg.ball_radius),
            sample(&BallIndicator {
                center: Vector3::zeros(),
                radius: cfg.ball_radius,
            })?,
        )]),
        _ => cfg
            .widths
            .iter()
            .map(|&w| Ok((format!("gaussian:{w}"), sample(&gaussian(w))?)))
            .collect(),
    }
}

/// Probe points uniform in the middle half of the grid box.
pub fn maximal_probes(grid: &UniformGrid, n: usize, seed: u64) -> Vec<Vector3<f64>> {
    let lo = grid.origin;
    let hi = grid.upper();
    (0..n)
        .map(|i| {
            let mut r = rng::stream(seed, Purpose::Probe, i as u64);
            Vector3::from_fn(|k, _| {
                let (a, b) = (lo[k], hi[k]);
                let q = 0.25 * (b - a);
                a + q + 2.0 * q * r.random::<f64>()
            })
        })
        .collect()
}

/// Worst-case residuals of the operator laws over the probes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MaximalLaws {
    /// `max |op(2g) − 2 op(g)|`, exactly zero in floating point.
    pub homogeneity: f64,
    /// `max (op(g + h) − op(g) − op(h))₊ / (op(g) + op(h))`.
    pub sublinearity: f64,
    /// `max (op(|g|) − op(|g| + |h|))₊ / op(|g| + |h|)`.
    pub monotonicity: f64,
    /// `min op(g)/M_S g` over probes with `M_S g > 0`.
    pub domination: f64,
}

pub fn maximal_laws(
    op: &MaximalOp,
    spherical: &MaximalOp,
    g: &GridField3,
    h: &GridField3,
    probes: &[Vector3<f64>],
) -> Option<MaximalLaws> {
    let g2 = g.map(|v| 2.0 * v);
    let sum = g.zip_with(h, |a, b| a + b)?;
    let abs_g = g.map(f64::abs);
    let abs_sum = g.zip_with(h, |a, b| a.abs() + b.abs())?;
    let per: Vec<[f64; 4]> = probes
        .par_iter()
        .map(|x| {
            let og = op.apply(g, x).value;
            let oh = op.apply(h, x).value;
            let homog = (op.apply(&g2, x).value - 2.0 * og).abs();
            let sub = (op.apply(&sum, x).value - og - oh).max(0.0) / (og + oh).max(f64::MIN_POSITIVE);
            let big = op.apply(&abs_sum, x).value;
            let mono = (op.apply(&abs_g, x).value - big).max(0.0) / big.max(f64::MIN_POSITIVE);
            let ms = spherical.apply(g, x).value;
            let dom = if ms > 0.0 { og / ms } else { f64::INFINITY };
            [homog, sub, mono, dom]
        })
        .collect();
    let max = |i: usize| per.iter().map(|p| p[i]).fold(0.0, f64::max);
    Some(MaximalLaws {
        homogeneity: max(0),
        sublinearity: max(1),
        monotonicity: max(2),
        domination: per.iter().map(|p| p[3]).fold(f64::INFINITY, f64::min),
    })
}

fn run_maximal(cfg: &ExperimentConfig) -> Result<Report, HarnessError> {
    let fields = maximal_fields(cfg)?;
    let op = maximal_operator(cfg, cfg.operator)?;
    let spherical = maximal_operator(cfg, OperatorChoice::Spherical)?;
    let mut table = Table::new(&["field", "x", "y", "z", "value", "argmax_radius"]);
    let mut s = Summary::new(cfg);
    let mut under_resolved = false;
    for (name, g) in &fields {
        let probes = maximal_probes(g.grid(), cfg.n_samples, cfg.seed);
        let values: Vec<_> = probes.par_iter().map(|x| op.apply(g, x)).collect();
        for (x, v) in probes.iter().zip(&values) {
            under_resolved |= v.under_resolved;
            table.push(vec![
                name.as_str().into(),
                x[0].into(),
                x[1].into(),
                x[2].into(),
                v.value.into(),
                v.argmax.into(),
            ]);
        }
    }
    let grids: Vec<GridField3> = fields.iter().map(|(_, g)| g.clone()).collect();
    let ratios = lp_operator_norm_scan(&op, &grids, cfg.p, cfg.stride).map_err(numerical)?;
    let ratio_map: BTreeMap<String, f64> = fields.iter().map(|(n, _)| n.clone()).zip(ratios.iter().copied()).collect();
    s.result("norm_ratios", &ratio_map);
    let g = &fields[0].1;
    let h = fields
        .get(1)
        .map(|f| f.1.clone())
        .filter(|h| h.grid() == g.grid())
        .unwrap_or_else(|| g.map(|v| (3.0 * v).sin()));
    let probes = maximal_probes(g.grid(), cfg.n_samples, cfg.seed.wrapping_add(1));
    let laws = maximal_laws(&op, &spherical, g, &h, &probes).expect("fields share a grid");
    s.result("laws", &laws);
    s.check("homogeneity", laws.homogeneity == 0.0, format!("max residual {:e}", laws.homogeneity));
    s.check("sublinearity", laws.sublinearity <= 1e-12, format!("max relative excess {:e}", laws.sublinearity));
    s.check("monotonicity", laws.monotonicity <= 1e-12, format!("max relative excess {:e}", laws.monotonicity));
    s.check(
        "norm_ratios_finite",
        ratios.iter().all(|r| r.is_finite() && *r > 0.0),
        format!("ratios {ratios:?}"),
    );
    if under_resolved {
        s.warnings.push(format!("fewer than {} quadrature nodes per shell", crate::maximal::MIN_SHELL_NODES));
    }
    Ok(Report {
        summary: s,
        table,
        extras: Vec::new(),
    })
}

// ---------------------------------------------------------------- cone_verify

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConeProbe {
    pub trajectory: usize,
    pub probe: usize,
    pub z: [f64; 3],
    pub s: Option<f64>,
    pub roundtrip: Option<f64>,
    pub rel_err_s: Option<f64>,
    pub rel_err_omega: Option<f64>,
    pub gap_s: Option<f64>,
    pub gap_omega: Option<f64>,
    pub ratio_s: Option<f64>,
    pub ratio_omega: Option<f64>,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConeStudy {
    pub probes: Vec<ConeProbe>,
    pub domains: Vec<DomainCheck>,
    pub volume: VolumeEstimate,
    /// Largest deviation of the analytic chart gradients from their closed form
    /// for a trajectory at rest.
    pub static_gradient_error: f64,
}

/// Step used for the central differences of the chart gradients.
pub const GRADIENT_STEP: f64 = 1e-6;

fn probe_cone(traj: &Trajectory, pair: &PairedTrajectory, z: &Vector3<f64>, v_max: f64, tol: f64) -> Result<[f64; 8], crate::cone::ConeError> {
    let last = traj.len() - 1;
    let chart = invert_cone(traj, z, tol)?;
    let roundtrip = (chart.map(traj) - z).norm();
    let grad = grad_check(&chart, traj, z, GRADIENT_STEP, last, tol)?;
    let gap = stability_gap(pair, z, v_max, tol)?;
    Ok([
        chart.s,
        roundtrip,
        grad.rel_err_s,
        grad.rel_err_omega,
        gap.gap_s,
        gap.gap_omega,
        gap.ratio_s,
        gap.ratio_omega,
    ])
}

/// For `X ≡ x₀`: `s = |z − x₀|`, `∇s = −ω`, `∂ω_i/∂z_j = −(δ_ij − ω_iω_j)/s`.
pub fn static_gradient_error(n: usize, seed: u64, tol: f64) -> f64 {
    let x0 = Vector3::new(0.3, -0.2, 0.1);
    let traj = integrate_trajectory(&ZeroForce, PhasePoint::new(x0, Vector3::zeros()), 1.0, 0.01)
        .expect("free flow integrates");
    let mut r = rng::stream(seed, Purpose::Probe, u64::MAX);
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < n {
        let z = rng::in_ball(&mut r, &x0, 1.0);
        let s = (z - x0).norm();
        if s < 1e-3 || s > 1.0 - 1e-3 {
            continue;
        }
        done += 1;
        let Ok(c) = invert_cone(&traj, &z, tol) else {
            return f64::INFINITY;
        };
        let omega = (x0 - z) / s;
        let grad_omega = -(Matrix3::identity() - omega * omega.transpose()) / s;
        worst = worst
            .max((c.grad_s + omega).norm())
            .max((c.grad_omega - grad_omega).norm() / grad_omega.norm());
    }
    worst
}

pub fn cone_study(cfg: &ExperimentConfig, force: &dyn Force) -> Result<ConeStudy, HarnessError> {
    let rule = sphere_rule(cfg)?;
    let ens = Ensemble::sample(phase_box(cfg), cfg.n_trajectories, cfg.seed);
    let per_traj = cfg.n_samples.div_ceil(cfg.n_trajectories);
    let delta = cfg.deltas[0];
    let results: Vec<(Trajectory, Vec<ConeProbe>, DomainCheck)> = (0..ens.len())
        .into_par_iter()
        .map(|i| {
            let traj = integrate_trajectory(force, ens.points[i], cfg.t_final, cfg.dt)?;
            let (d1, d2) = delta_direction(cfg.seed, i);
            let pair = pair_with_base(force, traj.clone(), (d1 * delta, d2 * delta), cfg.t_final, cfg.dt)?;
            let v_max = pair
                .base
                .v
                .iter()
                .chain(&pair.shifted.v)
                .map(|v| v.norm())
                .fold(0.0, f64::max);
            let last = traj.len() - 1;
            let center = traj.x[last];
            // Inside both cone balls, so the perturbed chart exists as well.
            let radius = cfg.t_final - (pair.shifted.x[last] - center).norm();
            let mut r = rng::stream(cfg.seed, Purpose::Probe, (1u64 << 40) + i as u64);
            let mut probes = Vec::with_capacity(per_traj);
            for j in 0..per_traj {
                let z = rng::in_ball(&mut r, &center, radius);
                let mut row = ConeProbe {
                    trajectory: i,
                    probe: j,
                    z: [z[0], z[1], z[2]],
                    s: None,
                    roundtrip: None,
                    rel_err_s: None,
                    rel_err_omega: None,
                    gap_s: None,
                    gap_omega: None,
                    ratio_s: None,
                    ratio_omega: None,
                    status: "ok".to_string(),
                };
                match probe_cone(&traj, &pair, &z, v_max, cfg.cone_tol) {
                    Ok(v) => {
                        row.s = Some(v[0]);
                        row.roundtrip = Some(v[1]);
                        row.rel_err_s = Some(v[2]);
                        row.rel_err_omega = Some(v[3]);
                        row.gap_s = Some(v[4]);
                        row.gap_omega = Some(v[5]);
                        row.ratio_s = Some(v[6]);
                        row.ratio_omega = Some(v[7]);
                    }
                    Err(e) => row.status = e.to_string(),
                }
                probes.push(row);
            }
            let domain = cone_domain_check(&traj, last, per_traj, &rule, cfg.seed, cfg.cone_tol);
            Ok((traj, probes, domain))
        })
        .collect::<Result<_, crate::flow3d::FlowError>>()
        .map_err(numerical)?;
    let first = &results[0].0;
    let volume = jacobian_volume(first, first.len() - 1, cfg.volume_samples, cfg.seed, cfg.cone_tol);
    let mut probes = Vec::new();
    let mut domains = Vec::new();
    for (_, p, d) in results {
        probes.extend(p);
        domains.push(d);
    }
    Ok(ConeStudy {
        probes,
        domains,
        volume,
        static_gradient_error: static_gradient_error(100, cfg.seed, cfg.cone_tol),
    })
}

fn max_of(values: impl Iterator<Item = Option<f64>>) -> f64 {
    values.flatten().fold(0.0, f64::max)
}

fn run_cone(cfg: &ExperimentConfig) -> Result<Report, HarnessError> {
    let force = build_force(cfg);
    let study = cone_study(cfg, &*force)?;
    let mut table = Table::new(&[
        "trajectory",
        "probe",
        "z_x",
        "z_y",
        "z_z",
        "s",
        "roundtrip",
        "rel_err_s",
        "rel_err_omega",
        "gap_s",
        "gap_omega",
        "ratio_s",
        "ratio_omega",
        "status",
    ]);
    for p in &study.probes {
        table.push(vec![
            p.trajectory.into(),
            p.probe.into(),
            p.z[0].into(),
            p.z[1].into(),
            p.z[2].into(),
            p.s.into(),
            p.roundtrip.into(),
            p.rel_err_s.into(),
            p.rel_err_omega.into(),
            p.gap_s.into(),
            p.gap_omega.into(),
            p.ratio_s.into(),
            p.ratio_omega.into(),
            Cell::Text(p.status.clone()),
        ]);
    }
    let mut s = Summary::new(cfg);
    let failures = study.probes.iter().filter(|p| p.status != "ok").count();
    let roundtrip = max_of(study.probes.iter().map(|p| p.roundtrip));
    let grad = max_of(study.probes.iter().flat_map(|p| [p.rel_err_s, p.rel_err_omega]));
    let coverage = study.domains.iter().map(|d| d.coverage).fold(1.0, f64::min);
    let violation = study.domains.iter().map(|d| d.max_violation).fold(f64::NEG_INFINITY, f64::max);
    let vol = &study.volume;
    let vol_err = (vol.estimate - vol.exact).abs() / vol.exact;
    s.result("max_roundtrip", &roundtrip);
    s.result("max_gradient_error", &grad);
    s.result("max_ratio_s", &max_of(study.probes.iter().map(|p| p.ratio_s)));
    s.result("max_ratio_omega", &max_of(study.probes.iter().map(|p| p.ratio_omega)));
    s.result("domains", &study.domains);
    s.result("volume", vol);
    s.result("static_gradient_error", &study.static_gradient_error);
    s.check("all_probes_inverted", failures == 0, format!("{failures} probes failed"));
    s.check("roundtrip", roundtrip < 1e-8, format!("max |Φ(s, ω) − z| = {roundtrip:e}"));
    s.check("domain_coverage", coverage >= 0.999, format!("min coverage {coverage}"));
    s.check(
        "domain_outward_violation",
        violation <= cfg.dt,
        format!("max outward violation {violation:e}, dt {}", cfg.dt),
    );
    s.check("analytic_gradients", grad < 1e-4, format!("max relative error {grad:e}"));
    s.check(
        "static_gradients_exact",
        study.static_gradient_error <= 1e-12,
        format!("max error {:e}", study.static_gradient_error),
    );
    s.check(
        "volume_identity",
        vol_err <= 0.02,
        format!("estimate {} vs 4πt = {} ({} samples)", vol.estimate, vol.exact, cfg.volume_samples),
    );
    Ok(Report {
        summary: s,
        table,
        extras: Vec::new(),
    })
}

// ---------------------------------------------------------------- field_check

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridStats {
    pub path: String,
    pub dims: [usize; 3],
    pub spacing: f64,
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
}

pub fn grid_stats(path: &str) -> Result<GridStats, HarnessError> {
    let g = load_grid(path)?;
    Ok(GridStats {
        path: path.to_string(),
        dims: g.grid().dims,
        spacing: g.grid().spacing,
        l1: g.lp_norm(1.0),
        l2: g.lp_norm(2.0),
        linf: g.samples().iter().fold(0.0, |m, v| m.max(v.abs())),
    })
}

fn run_field_check(cfg: &ExperimentConfig) -> Result<Report, HarnessError> {
    let stats = cfg
        .grid_paths
        .iter()
        .map(|p| grid_stats(p))
        .collect::<Result<Vec<_>, _>>()?;
    let mut table = Table::new(&["path", "nx", "ny", "nz", "spacing", "l1", "l2", "linf"]);
    for g in &stats {
        table.push(vec![
            g.path.as_str().into(),
            g.dims[0].into(),
            g.dims[1].into(),
            g.dims[2].into(),
            g.spacing.into(),
            g.l1.into(),
            g.l2.into(),
            g.linf.into(),
        ]);
    }
    let mut s = Summary::new(cfg);
    s.check(
        "norms_finite",
        stats.iter().all(|g| g.l1.is_finite() && g.l2.is_finite()),
        "L¹ and L² norms are finite",
    );
    s.check(
        "norm_interpolation",
        stats.iter().all(|g| g.l2 * g.l2 <= g.l1 * g.linf * (1.0 + 1e-12)),
        "‖g‖₂² ≤ ‖g‖₁‖g‖_∞",
    );
    Ok(Report {
        summary: s,
        table,
        extras: Vec::new(),
    })
}

pub(super) fn dispatch(cfg: &ExperimentConfig) -> Result<Report, HarnessError> {
    use super::ExperimentKind::*;
    match cfg.experiment {
        Qdelta3d => run_qdelta(cfg),
        Rdelta1d => run_rdelta(cfg),
        Dispersion => run_dispersion(cfg),
        MaximalScan => run_maximal(cfg),
        ConeVerify => run_cone(cfg),
        FieldCheck => run_field_check(cfg),
    }
}
