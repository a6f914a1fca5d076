//! One-dimensional transport `Ẋ = α(V)`, `V̇ = F(t, X)` with a force made of
//! travelling waves `F(t, x) = Σ_n μ_n F⁰(x − ξ_n t)`.

mod resonance;
mod study;

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::rng::{self, Purpose};

pub use resonance::{
    adaptive_delta, contln_fraction, decompose_resonances, occupation_measure, occupation_time,
    AdaptiveDelta, RateMode, ResonanceDecomposition, ResonantInterval, SpeedIntervals,
};
pub use study::{
    functional_r, pair_trajectories_1d, scaling_study_1d, write_interval_dump, Ensemble1D,
    IntervalRecord, PairedTrajectory1D, Study1dConfig, Study1dReport, Study1dRow,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Flow1dError {
    #[error("non-finite state at t = {0}")]
    NonFinite(f64),
    #[error("time step must be positive and finite, got {0}")]
    BadStep(f64),
    #[error("velocity has dimension {got}, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("speeds and weights differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("weights must be positive and nonincreasing (index {0})")]
    BadWeights(usize),
    #[error("gamma must exceed 2, got {0}")]
    BadGamma(f64),
    #[error("threshold parameters must be positive")]
    BadThreshold,
}

/// Advection speed `α: ℝ^d → ℝ` with its declared constants.
#[derive(Clone)]
pub struct AlphaSpec {
    pub alpha: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    pub dim: usize,
    pub lipschitz_constant: f64,
    /// `C` with `|{v : |α(v) − w| ≤ η}| ≤ Cη` on the working box.
    pub nonchar_constant: f64,
}

impl fmt::Debug for AlphaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AlphaSpec")
            .field("dim", &self.dim)
            .field("lipschitz_constant", &self.lipschitz_constant)
            .field("nonchar_constant", &self.nonchar_constant)
            .finish()
    }
}

impl AlphaSpec {
    pub fn new<F>(dim: usize, lipschitz_constant: f64, nonchar_constant: f64, alpha: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self {
            alpha: Arc::new(alpha),
            dim,
            lipschitz_constant,
            nonchar_constant,
        }
    }

    /// `α(v) = v` on ℝ.
    pub fn identity() -> Self {
        Self::new(1, 1.0, 2.0, |v| v[0])
    }

    #[inline]
    pub fn eval(&self, v: &[f64]) -> f64 {
        (self.alpha)(v)
    }

    /// Largest `|α(u) − α(w)| / |u − w|` over random pairs in `[lo, hi]^d`.
    pub fn sampled_lipschitz(&self, lo: f64, hi: f64, n: usize, seed: u64) -> f64 {
        let mut r = rng::stream(seed, Purpose::MonteCarlo, 0);
        let mut worst = 0.0f64;
        for _ in 0..n {
            let u: Vec<f64> = (0..self.dim).map(|_| r.random_range(lo..hi)).collect();
            let w: Vec<f64> = (0..self.dim).map(|_| r.random_range(lo..hi)).collect();
            let d = u.iter().zip(&w).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            if d > 0.0 {
                worst = worst.max((self.eval(&u) - self.eval(&w)).abs() / d);
            }
        }
        worst
    }

    /// Monte Carlo measure of `{v ∈ [lo, hi]^d : |α(v) − w| ≤ η}` for each `w`.
    pub fn sublevel_measures(&self, lo: f64, hi: f64, ws: &[f64], eta: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut r = rng::stream(seed, Purpose::MonteCarlo, 1);
        let values: Vec<f64> = (0..n)
            .map(|_| {
                let v: Vec<f64> = (0..self.dim).map(|_| r.random_range(lo..hi)).collect();
                self.eval(&v)
            })
            .collect();
        let volume = (hi - lo).powi(self.dim as i32);
        ws.iter()
            .map(|w| {
                let hits = values.iter().filter(|a| (*a - w).abs() <= eta).count();
                volume * hits as f64 / n as f64
            })
            .collect()
    }
}

/// Bounded profile `F⁰: ℝ → ℝ^d`.
pub trait Profile: Send + Sync {
    fn dim(&self) -> usize;
    fn sup_norm(&self) -> f64;
    /// `out += scale · F⁰(y)`.
    fn accumulate(&self, y: f64, scale: f64, out: &mut [f64]);
}

/// 1-periodic sawtooth `clamp(A(2 frac(y) − 1), −1, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sawtooth {
    pub amplitude: f64,
}

impl Sawtooth {
    #[inline]
    pub fn value(&self, y: f64) -> f64 {
        let frac = y - y.floor();
        (self.amplitude * (2.0 * frac - 1.0)).clamp(-1.0, 1.0)
    }
}

impl Profile for Sawtooth {
    fn dim(&self) -> usize {
        1
    }
    fn sup_norm(&self) -> f64 {
        self.amplitude.abs().min(1.0)
    }
    fn accumulate(&self, y: f64, scale: f64, out: &mut [f64]) {
        out[0] += scale * self.value(y);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstantProfile(pub Vec<f64>);

impl Profile for ConstantProfile {
    fn dim(&self) -> usize {
        self.0.len()
    }
    fn sup_norm(&self) -> f64 {
        self.0.iter().map(|c| c * c).sum::<f64>().sqrt()
    }
    fn accumulate(&self, _y: f64, scale: f64, out: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(&self.0) {
            *o += scale * c;
        }
    }
}

/// Indicator of `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndicatorProfile {
    pub lo: f64,
    pub hi: f64,
}

impl Profile for IndicatorProfile {
    fn dim(&self) -> usize {
        1
    }
    fn sup_norm(&self) -> f64 {
        1.0
    }
    fn accumulate(&self, y: f64, scale: f64, out: &mut [f64]) {
        if (self.lo..=self.hi).contains(&y) {
            out[0] += scale;
        }
    }
}

/// Scalar profile from a closure with a declared bound.
pub struct ScalarProfile<F> {
    pub f: F,
    pub sup: f64,
}

impl<F: Fn(f64) -> f64 + Send + Sync> Profile for ScalarProfile<F> {
    fn dim(&self) -> usize {
        1
    }
    fn sup_norm(&self) -> f64 {
        self.sup
    }
    fn accumulate(&self, y: f64, scale: f64, out: &mut [f64]) {
        out[0] += scale * (self.f)(y);
    }
}

/// `F(t, x) = Σ_n μ_n F⁰(x − ξ_n t)`, truncated to the listed speeds.
#[derive(Clone)]
pub struct MultiSpeedForce {
    profile: Arc<dyn Profile>,
    speeds: Vec<f64>,
    weights: Vec<f64>,
    gamma: f64,
    /// Bound on `Σ_{n>N} μ_n` for the dropped speeds.
    tail_weight: f64,
}

impl fmt::Debug for MultiSpeedForce {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MultiSpeedForce")
            .field("speeds", &self.speeds)
            .field("weights", &self.weights)
            .field("gamma", &self.gamma)
            .field("tail_weight", &self.tail_weight)
            .finish()
    }
}

/// Force value with the bound on the dropped tail.
#[derive(Debug, Clone, PartialEq)]
pub struct ForceValue1D {
    pub value: Vec<f64>,
    pub tail_bound: f64,
}

impl MultiSpeedForce {
    pub fn new(
        profile: Arc<dyn Profile>,
        speeds: Vec<f64>,
        weights: Vec<f64>,
        gamma: f64,
    ) -> Result<Self, Flow1dError> {
        if speeds.len() != weights.len() {
            return Err(Flow1dError::LengthMismatch(speeds.len(), weights.len()));
        }
        for (i, w) in weights.iter().enumerate() {
            if !(*w > 0.0) || (i > 0 && *w > weights[i - 1]) {
                return Err(Flow1dError::BadWeights(i));
            }
        }
        if !(gamma > 2.0) {
            return Err(Flow1dError::BadGamma(gamma));
        }
        Ok(Self {
            profile,
            speeds,
            weights,
            gamma,
            tail_weight: 0.0,
        })
    }

    pub fn with_tail_weight(mut self, tail_weight: f64) -> Self {
        self.tail_weight = tail_weight;
        self
    }

    /// Sawtooth of amplitude 2, `ξ_n = n/(n+1)`, `μ_n = n^{−(γ+1.1)}` for `n = 1..=count`.
    pub fn default_instance(gamma: f64, count: usize) -> Result<Self, Flow1dError> {
        Self::sawtooth_instance(2.0, gamma, count)
    }

    pub fn sawtooth_instance(amplitude: f64, gamma: f64, count: usize) -> Result<Self, Flow1dError> {
        let p = gamma + 1.1;
        let speeds = (1..=count).map(|n| n as f64 / (n as f64 + 1.0)).collect();
        let weights = (1..=count).map(|n| (n as f64).powf(-p)).collect();
        // Σ_{n>N} n^{-p} ≤ ∫_N^∞ x^{-p} dx
        let tail = (count as f64).powf(1.0 - p) / (p - 1.0);
        Ok(Self::new(Arc::new(Sawtooth { amplitude }), speeds, weights, gamma)?.with_tail_weight(tail))
    }

    pub fn dim(&self) -> usize {
        self.profile.dim()
    }

    pub fn speeds(&self) -> &[f64] {
        &self.speeds
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn profile_sup(&self) -> f64 {
        self.profile.sup_norm()
    }

    /// `‖F⁰‖_∞ Σ μ_n`, a bound on `‖F(t, ·)‖_∞`.
    pub fn sup_bound(&self) -> f64 {
        self.profile.sup_norm() * self.weights.iter().sum::<f64>()
    }

    pub fn tail_bound(&self) -> f64 {
        self.profile.sup_norm() * self.tail_weight
    }

    /// `Σ_n (1 + n^γ) μ_n` over the retained speeds.
    pub fn moment_sum(&self) -> f64 {
        self.weights
            .iter()
            .enumerate()
            .map(|(i, m)| (1.0 + ((i + 1) as f64).powf(self.gamma)) * m)
            .sum()
    }

    /// `a_n = n^{−γ/2}` for each retained speed.
    pub fn default_thresholds(&self) -> Vec<f64> {
        (1..=self.speeds.len())
            .map(|n| (n as f64).powf(-self.gamma / 2.0))
            .collect()
    }

    /// `out = F(t, x)`.
    pub fn eval_into(&self, t: f64, x: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (xi, mu) in self.speeds.iter().zip(&self.weights) {
            self.profile.accumulate(x - xi * t, *mu, out);
        }
    }
}

pub fn eval_force_1d(f: &MultiSpeedForce, t: f64, x: f64) -> ForceValue1D {
    let mut value = vec![0.0; f.dim()];
    f.eval_into(t, x, &mut value);
    ForceValue1D {
        value,
        tail_bound: f.tail_bound(),
    }
}

/// Sampled solution of the 1-D system. `speed[k] = α(V_k)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory1D {
    pub times: Vec<f64>,
    pub x: Vec<f64>,
    pub v: Vec<Vec<f64>>,
    pub speed: Vec<f64>,
}

impl Trajectory1D {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0) - self.times.first().copied().unwrap_or(0.0)
    }
}

/// Fixed-step RK4 on `[0, T]`; the last step is shortened if needed.
pub fn integrate_1d(
    alpha: &AlphaSpec,
    f: &MultiSpeedForce,
    x0: f64,
    v0: &[f64],
    t_final: f64,
    dt: f64,
) -> Result<Trajectory1D, Flow1dError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Flow1dError::BadStep(dt));
    }
    let d = f.dim();
    if v0.len() != d || alpha.dim != d {
        return Err(Flow1dError::Dimension {
            expected: d,
            got: if v0.len() != d { v0.len() } else { alpha.dim },
        });
    }
    let full = (t_final / dt * (1.0 + 1e-12)).floor() as usize;
    let steps = if t_final - full as f64 * dt > 1e-12 * dt.max(t_final) {
        full + 1
    } else {
        full
    };
    let mut traj = Trajectory1D {
        times: Vec::with_capacity(steps + 1),
        x: Vec::with_capacity(steps + 1),
        v: Vec::with_capacity(steps + 1),
        speed: Vec::with_capacity(steps + 1),
    };
    let mut x = x0;
    let mut v = v0.to_vec();
    let mut t = 0.0;
    let mut k1 = vec![0.0; d];
    let mut k2 = vec![0.0; d];
    let mut k3 = vec![0.0; d];
    let mut k4 = vec![0.0; d];
    let mut tmp = vec![0.0; d];
    let shifted = |base: &[f64], slope: &[f64], h: f64, out: &mut Vec<f64>| {
        for ((o, b), s) in out.iter_mut().zip(base).zip(slope) {
            *o = b + h * s;
        }
    };
    for k in 0..=steps {
        let a1 = alpha.eval(&v);
        if !x.is_finite() || !a1.is_finite() || v.iter().any(|c| !c.is_finite()) {
            return Err(Flow1dError::NonFinite(t));
        }
        traj.times.push(t);
        traj.x.push(x);
        traj.v.push(v.clone());
        traj.speed.push(a1);
        if k == steps {
            break;
        }
        let t_next = if k + 1 == steps { t_final } else { (k + 1) as f64 * dt };
        let h = t_next - t;
        let hh = 0.5 * h;
        f.eval_into(t, x, &mut k1);
        shifted(&v, &k1, hh, &mut tmp);
        let a2 = alpha.eval(&tmp);
        f.eval_into(t + hh, x + hh * a1, &mut k2);
        shifted(&v, &k2, hh, &mut tmp);
        let a3 = alpha.eval(&tmp);
        f.eval_into(t + hh, x + hh * a2, &mut k3);
        shifted(&v, &k3, h, &mut tmp);
        let a4 = alpha.eval(&tmp);
        f.eval_into(t_next, x + h * a3, &mut k4);
        x += h / 6.0 * (a1 + 2.0 * (a2 + a3) + a4);
        for i in 0..d {
            v[i] += h / 6.0 * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i]);
        }
        t = t_next;
    }
    Ok(traj)
}
