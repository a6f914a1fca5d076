use std::io::{self, Write};

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{
    adaptive_delta, decompose_resonances, integrate_1d, AlphaSpec, Flow1dError, MultiSpeedForce,
    RateMode, Trajectory1D,
};
use crate::fit::{fit_scaling, FitModel};
use crate::rng::{self, Purpose};

/// Uniform sample of `[x_lo, x_hi] × [v_lo, v_hi]^d`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ensemble1D {
    pub x_range: (f64, f64),
    pub v_range: (f64, f64),
    pub dim: usize,
    pub seed: u64,
    pub points: Vec<(f64, Vec<f64>)>,
}

impl Ensemble1D {
    pub fn sample(x_range: (f64, f64), v_range: (f64, f64), dim: usize, n: usize, seed: u64) -> Self {
        let points = (0..n)
            .map(|i| {
                let mut r = rng::stream(seed, Purpose::EnsemblePoint, i as u64);
                let x = x_range.0 + (x_range.1 - x_range.0) * r.random::<f64>();
                let v = (0..dim)
                    .map(|_| v_range.0 + (v_range.1 - v_range.0) * r.random::<f64>())
                    .collect();
                (x, v)
            })
            .collect();
        Self {
            x_range,
            v_range,
            dim,
            seed,
            points,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Unit direction in `ℝ^{1+d}` for pair `i`, split as `(δ₁, δ₂)`.
    pub fn direction(&self, i: usize) -> (f64, Vec<f64>) {
        let mut r = rng::stream(self.seed, Purpose::PairDirection, i as u64);
        let u = rng::unit_vector(&mut r, 1 + self.dim);
        (u[0], u[1..].to_vec())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairedTrajectory1D {
    pub base: Trajectory1D,
    pub shifted: Trajectory1D,
    pub delta: (f64, Vec<f64>),
}

impl PairedTrajectory1D {
    pub fn delta_norm(&self) -> f64 {
        (self.delta.0 * self.delta.0 + self.delta.1.iter().map(|c| c * c).sum::<f64>()).sqrt()
    }

    /// `sup_k |X_k − X^δ_k|²`.
    pub fn sup_dx2(&self) -> f64 {
        self.base
            .x
            .iter()
            .zip(&self.shifted.x)
            .map(|(a, b)| (a - b).powi(2))
            .fold(0.0, f64::max)
    }

    /// Left Riemann `∫ |V − V^δ|² dt`.
    pub fn int_dv2(&self) -> f64 {
        (0..self.base.len().saturating_sub(1))
            .map(|k| {
                let h = self.base.times[k + 1] - self.base.times[k];
                let d2: f64 = self.base.v[k]
                    .iter()
                    .zip(&self.shifted.v[k])
                    .map(|(a, b)| (a - b).powi(2))
                    .sum();
                d2 * h
            })
            .sum()
    }

    pub fn discrepancy(&self) -> f64 {
        self.sup_dx2() + self.int_dv2()
    }
}

pub fn pair_trajectories_1d(
    alpha: &AlphaSpec,
    f: &MultiSpeedForce,
    base: Trajectory1D,
    delta: (f64, Vec<f64>),
    t_final: f64,
    dt: f64,
) -> Result<PairedTrajectory1D, Flow1dError> {
    let v0: Vec<f64> = base.v[0].iter().zip(&delta.1).map(|(a, b)| a + b).collect();
    let shifted = integrate_1d(alpha, f, base.x[0] + delta.0, &v0, t_final, dt)?;
    Ok(PairedTrajectory1D {
        base,
        shifted,
        delta,
    })
}

/// Ensemble mean of `log(1 + (sup|X − X^δ|² + ∫|V − V^δ|²) / δ̄(T)²)`.
pub fn functional_r(pairs: &[PairedTrajectory1D], delta_bars: &[f64]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    pairs
        .iter()
        .zip(delta_bars)
        .map(|(p, db)| (p.discrepancy() / (db * db)).ln_1p())
        .sum::<f64>()
        / pairs.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Study1dConfig {
    pub x_range: (f64, f64),
    pub v_range: (f64, f64),
    pub n_points: usize,
    pub seed: u64,
    pub t_final: f64,
    pub dt: f64,
    pub deltas: Vec<f64>,
    /// The constant `C` in the rate of `δ̄`.
    pub rate_constant: f64,
    pub mode: RateMode,
    /// Interval lists are recorded for the first this many points.
    pub dump_points: usize,
}

impl Default for Study1dConfig {
    fn default() -> Self {
        Self {
            x_range: (-1.0, 1.0),
            v_range: (-0.5, 1.5),
            n_points: 500,
            seed: 1,
            t_final: 1.0,
            dt: 2.5e-4,
            deltas: (2..=10).map(|e| 10f64.powi(-e)).collect(),
            rate_constant: 1.0,
            mode: RateMode::Cumulative,
            dump_points: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalRecord {
    pub delta: f64,
    pub point: usize,
    pub shifted: bool,
    pub n: usize,
    pub t_i: f64,
    pub s_i: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Study1dRow {
    pub delta: f64,
    pub eta: f64,
    pub r: f64,
    /// `R_δ` with `δ̄` replaced by `|δ|`.
    pub r_fixed: f64,
    pub median_delta_bar_t: f64,
    /// Ensemble mean of `Σ_n l_n` on the base trajectories.
    pub sum_l_n: f64,
    pub max_k_n: usize,
    /// `max k_n a_n η / T`.
    pub k_bound_ratio: f64,
    pub mean_l: Vec<f64>,
    pub mean_k: Vec<f64>,
    pub fitted_exponent_so_far: Option<f64>,
    pub under_resolved: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Study1dReport {
    pub rows: Vec<Study1dRow>,
    /// Power-law exponent of `R_δ` against `−log δ`.
    pub fitted_exponent: Option<f64>,
    pub moment_sum: f64,
    pub intervals: Vec<IntervalRecord>,
}

struct Outcome {
    r: f64,
    r_fixed: f64,
    delta_bar: f64,
    l: Vec<f64>,
    k: Vec<usize>,
    k_ratio: f64,
    records: Vec<IntervalRecord>,
}

/// `η = (log 1/δ)^{−1/8}`.
pub fn eta_for(delta: f64) -> f64 {
    (1.0 / delta).ln().powf(-0.125)
}

fn exponent(rows: &[(f64, f64)]) -> Option<f64> {
    let mut pts = rows.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    fit_scaling(&pts, FitModel::Power).ok().map(|f| f.slope)
}

pub fn scaling_study_1d(
    alpha: &AlphaSpec,
    force: &MultiSpeedForce,
    cfg: &Study1dConfig,
) -> Result<Study1dReport, Flow1dError> {
    if cfg.deltas.iter().any(|d| !(*d > 0.0 && *d < 1.0)) {
        return Err(Flow1dError::BadThreshold);
    }
    let ens = Ensemble1D::sample(cfg.x_range, cfg.v_range, force.dim(), cfg.n_points, cfg.seed);
    let a = force.default_thresholds();
    let f_inf = force.sup_bound();
    let per_point: Vec<Vec<Outcome>> = (0..ens.len())
        .into_par_iter()
        .map(|i| -> Result<Vec<Outcome>, Flow1dError> {
            let (x0, v0) = &ens.points[i];
            let base = integrate_1d(alpha, force, *x0, v0, cfg.t_final, cfg.dt)?;
            let (u1, u2) = ens.direction(i);
            cfg.deltas
                .iter()
                .map(|&delta| {
                    let dir = (u1 * delta, u2.iter().map(|c| c * delta).collect());
                    let pair = pair_trajectories_1d(alpha, force, base.clone(), dir, cfg.t_final, cfg.dt)?;
                    let eta = eta_for(delta);
                    let db = decompose_resonances(&pair.base, force.speeds(), eta, &a)?;
                    let ds = decompose_resonances(&pair.shifted, force.speeds(), eta, &a)?;
                    let bar = adaptive_delta(&db, &ds, &pair.base.times, delta, f_inf, cfg.rate_constant, cfg.mode)
                        .final_value();
                    let disc = pair.discrepancy();
                    let mut records = Vec::new();
                    if i < cfg.dump_points {
                        for (shifted, d) in [(false, &db), (true, &ds)] {
                            records.extend(d.intervals().map(|(n, iv)| IntervalRecord {
                                delta,
                                point: i,
                                shifted,
                                n: n + 1,
                                t_i: iv.start,
                                s_i: iv.end,
                            }));
                        }
                    }
                    Ok(Outcome {
                        r: (disc / (bar * bar)).ln_1p(),
                        r_fixed: (disc / (delta * delta)).ln_1p(),
                        delta_bar: bar,
                        l: db.speeds.iter().map(|s| s.occupation).collect(),
                        k: db.speeds.iter().map(|s| s.count).collect(),
                        k_ratio: db.count_bound_ratio().max(ds.count_bound_ratio()),
                        records,
                    })
                })
                .collect()
        })
        .collect::<Result<_, _>>()?;

    let n = ens.len().max(1) as f64;
    let a_last = a.last().copied().unwrap_or(1.0);
    let mut rows = Vec::with_capacity(cfg.deltas.len());
    let mut fit_pts = Vec::new();
    let mut intervals = Vec::new();
    for (j, &delta) in cfg.deltas.iter().enumerate() {
        let eta = eta_for(delta);
        let outs: Vec<&Outcome> = per_point.iter().map(|p| &p[j]).collect();
        let r = outs.iter().map(|o| o.r).sum::<f64>() / n;
        let r_fixed = outs.iter().map(|o| o.r_fixed).sum::<f64>() / n;
        let mut bars: Vec<f64> = outs.iter().map(|o| o.delta_bar).collect();
        bars.sort_by(f64::total_cmp);
        let median = match bars.len() {
            0 => f64::NAN,
            m if m % 2 == 1 => bars[m / 2],
            m => 0.5 * (bars[m / 2 - 1] + bars[m / 2]),
        };
        let speeds = force.speeds().len();
        let mean_l: Vec<f64> = (0..speeds).map(|s| outs.iter().map(|o| o.l[s]).sum::<f64>() / n).collect();
        let mean_k: Vec<f64> = (0..speeds)
            .map(|s| outs.iter().map(|o| o.k[s] as f64).sum::<f64>() / n)
            .collect();
        for o in &outs {
            intervals.extend(o.records.iter().cloned());
        }
        fit_pts.push(((1.0 / delta).ln(), r));
        rows.push(Study1dRow {
            delta,
            eta,
            r,
            r_fixed,
            median_delta_bar_t: median,
            sum_l_n: mean_l.iter().sum(),
            max_k_n: outs.iter().flat_map(|o| o.k.iter().copied()).max().unwrap_or(0),
            k_bound_ratio: outs.iter().map(|o| o.k_ratio).fold(0.0, f64::max),
            mean_l,
            mean_k,
            fitted_exponent_so_far: exponent(&fit_pts),
            under_resolved: cfg.dt > a_last * eta / 10.0,
        });
    }
    Ok(Study1dReport {
        fitted_exponent: exponent(&fit_pts),
        rows,
        moment_sum: force.moment_sum(),
        intervals,
    })
}

/// One JSON object per line.
pub fn write_interval_dump<W: Write>(mut w: W, records: &[IntervalRecord]) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
