use serde::Serialize;

use super::{Flow1dError, Trajectory1D};

/// Part of the segment `s ∈ [0, 1]` where `|g0 + (g1 − g0)s| < c`, and the
/// smallest `|g|` on it.
fn sublevel_on_segment(g0: f64, g1: f64, c: f64) -> Option<(f64, f64, f64)> {
    let d = g1 - g0;
    let (lo, hi) = if d == 0.0 {
        if g0.abs() < c {
            (0.0, 1.0)
        } else {
            return None;
        }
    } else {
        let s1 = (-c - g0) / d;
        let s2 = (c - g0) / d;
        (s1.min(s2).max(0.0), s1.max(s2).min(1.0))
    };
    if lo >= hi {
        return None;
    }
    let (a, b) = (g0 + d * lo, g0 + d * hi);
    let min = if a * b <= 0.0 { 0.0 } else { a.abs().min(b.abs()) };
    Some((lo, hi, min))
}

/// `|{t : |α(V_t) − w| ≤ η}|` for the piecewise-linear interpolant of `α(V)`.
pub fn occupation_time(traj: &Trajectory1D, w: f64, eta: f64) -> f64 {
    (0..traj.len().saturating_sub(1))
        .filter_map(|k| {
            let h = traj.times[k + 1] - traj.times[k];
            sublevel_on_segment(traj.speed[k] - w, traj.speed[k + 1] - w, eta).map(|(lo, hi, _)| (hi - lo) * h)
        })
        .sum()
}

/// Fraction of trajectories whose occupation time near `w` is at least `Kη`.
pub fn occupation_measure(trajs: &[Trajectory1D], w: f64, eta: f64, k: f64) -> f64 {
    if trajs.is_empty() {
        return 0.0;
    }
    let hits = trajs
        .iter()
        .filter(|tr| occupation_time(tr, w, eta) >= k * eta)
        .count();
    hits as f64 / trajs.len() as f64
}

/// Fraction of decompositions with `Σ_n l_n ≥ Kη`.
pub fn contln_fraction(decomps: &[ResonanceDecomposition], k: f64) -> f64 {
    if decomps.is_empty() {
        return 0.0;
    }
    let hits = decomps
        .iter()
        .filter(|d| d.total_occupation() >= k * d.eta)
        .count();
    hits as f64 / decomps.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResonantInterval {
    pub start: f64,
    pub end: f64,
    /// Smallest `|α(V) − ξ_n|` on the interval.
    pub min_gap: f64,
    /// Cut by `t = 0` or `t = T` rather than by a threshold crossing.
    pub truncated: bool,
}

impl ResonantInterval {
    pub fn length(&self) -> f64 {
        self.end - self.start
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpeedIntervals {
    pub speed: f64,
    /// `a_n η`.
    pub threshold: f64,
    pub intervals: Vec<ResonantInterval>,
    /// `l_n`.
    pub occupation: f64,
    /// `k_n`.
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResonanceDecomposition {
    pub eta: f64,
    pub a: Vec<f64>,
    pub horizon: f64,
    pub speeds: Vec<SpeedIntervals>,
}

impl ResonanceDecomposition {
    /// `Σ_n l_n`.
    pub fn total_occupation(&self) -> f64 {
        self.speeds.iter().map(|s| s.occupation).sum()
    }

    pub fn max_count(&self) -> usize {
        self.speeds.iter().map(|s| s.count).max().unwrap_or(0)
    }

    /// `max_n k_n a_n η / T`.
    pub fn count_bound_ratio(&self) -> f64 {
        self.speeds
            .iter()
            .map(|s| s.count as f64 * s.threshold / self.horizon)
            .fold(0.0, f64::max)
    }

    pub fn intervals(&self) -> impl Iterator<Item = (usize, &ResonantInterval)> {
        self.speeds
            .iter()
            .enumerate()
            .flat_map(|(n, s)| s.intervals.iter().map(move |iv| (n, iv)))
    }
}

/// Maximal stretches where `|α(V) − ξ_n| < a_n η`, kept when the gap dips to
/// `a_n η / 2` or below.
pub fn decompose_resonances(
    traj: &Trajectory1D,
    speeds: &[f64],
    eta: f64,
    a: &[f64],
) -> Result<ResonanceDecomposition, Flow1dError> {
    if !(eta > 0.0) || a.len() != speeds.len() || a.iter().any(|x| !(*x > 0.0)) {
        return Err(Flow1dError::BadThreshold);
    }
    let n = traj.len();
    let t_end = traj.times[n - 1];
    let speeds = speeds
        .iter()
        .zip(a)
        .map(|(&xi, &an)| {
            let c = an * eta;
            let mut intervals = Vec::new();
            let mut open: Option<(f64, f64, bool)> = None;
            let mut close = |open: &mut Option<(f64, f64, bool)>, end: f64, truncated: bool| {
                if let Some((start, min_gap, t0)) = open.take() {
                    if min_gap <= 0.5 * c {
                        intervals.push(ResonantInterval {
                            start,
                            end,
                            min_gap,
                            truncated: t0 || truncated,
                        });
                    }
                }
            };
            for k in 0..n.saturating_sub(1) {
                let (t0, t1) = (traj.times[k], traj.times[k + 1]);
                let Some((lo, hi, m)) =
                    sublevel_on_segment(traj.speed[k] - xi, traj.speed[k + 1] - xi, c)
                else {
                    close(&mut open, t0, false);
                    continue;
                };
                if lo > 0.0 {
                    close(&mut open, t0, false);
                }
                match open.as_mut() {
                    Some(state) => state.1 = state.1.min(m),
                    None => open = Some((t0 + lo * (t1 - t0), m, k == 0 && lo == 0.0)),
                }
                if hi < 1.0 {
                    close(&mut open, t0 + hi * (t1 - t0), false);
                }
            }
            close(&mut open, t_end, true);
            let occupation = intervals.iter().map(|iv| iv.length()).sum();
            SpeedIntervals {
                speed: xi,
                threshold: c,
                count: intervals.len(),
                intervals,
                occupation,
            }
        })
        .collect();
    Ok(ResonanceDecomposition {
        eta,
        a: a.to_vec(),
        horizon: t_end - traj.times[0],
        speeds,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RateMode {
    /// `δ̄(t) = |δ| + C‖F‖_∞ Σ_n (l_n(t) + l_n^δ(t))` with running occupations.
    Cumulative,
    /// `δ̄(t) = |δ| + C‖F‖_∞ t Σ_n (l_n(T) + l_n^δ(T))`.
    Constant,
}

impl std::str::FromStr for RateMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cumulative" => Ok(Self::Cumulative),
            "constant" => Ok(Self::Constant),
            other => Err(format!("unknown rate mode `{other}` (cumulative, constant)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdaptiveDelta {
    pub base_delta: f64,
    pub mode: RateMode,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl AdaptiveDelta {
    pub fn final_value(&self) -> f64 {
        *self.values.last().unwrap_or(&self.base_delta)
    }
}

/// `Σ_n l_n(t)` at each grid time, swept over interval endpoints.
fn running_occupation(decomps: &[&ResonanceDecomposition], times: &[f64]) -> Vec<f64> {
    let mut events: Vec<(f64, i32)> = decomps
        .iter()
        .flat_map(|d| d.intervals())
        .flat_map(|(_, iv)| [(iv.start, 1), (iv.end, -1)])
        .collect();
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut out = Vec::with_capacity(times.len());
    let (mut acc, mut active, mut last) = (0.0, 0i32, times.first().copied().unwrap_or(0.0));
    let mut e = 0;
    for &t in times {
        while e < events.len() && events[e].0 <= t {
            acc += active as f64 * (events[e].0 - last);
            last = events[e].0;
            active += events[e].1;
            e += 1;
        }
        acc += active as f64 * (t - last);
        last = t;
        out.push(acc);
    }
    out
}

pub fn adaptive_delta(
    base: &ResonanceDecomposition,
    shifted: &ResonanceDecomposition,
    times: &[f64],
    base_delta: f64,
    f_inf: f64,
    c: f64,
    mode: RateMode,
) -> AdaptiveDelta {
    let rate = c * f_inf;
    let values = match mode {
        RateMode::Cumulative => running_occupation(&[base, shifted], times)
            .into_iter()
            .map(|l| base_delta + rate * l)
            .collect(),
        RateMode::Constant => {
            let total = base.total_occupation() + shifted.total_occupation();
            let t0 = times.first().copied().unwrap_or(0.0);
            times
                .iter()
                .map(|t| base_delta + rate * (t - t0) * total)
                .collect()
        }
    };
    AdaptiveDelta {
        base_delta,
        mode,
        times: times.to_vec(),
        values,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow1d::{integrate_1d, AlphaSpec, ConstantProfile, MultiSpeedForce};
    use proptest::prelude::*;
    use std::sync::Arc;

    fn from_speed(times: Vec<f64>, speed: Vec<f64>) -> Trajectory1D {
        Trajectory1D {
            x: vec![0.0; times.len()],
            v: speed.iter().map(|s| vec![*s]).collect(),
            times,
            speed,
        }
    }

    fn unit_ramp(dt: f64) -> Trajectory1D {
        let f = MultiSpeedForce::new(Arc::new(ConstantProfile(vec![1.0])), vec![0.0], vec![1.0], 2.5)
            .unwrap();
        integrate_1d(&AlphaSpec::identity(), &f, 0.0, &[-0.2], 1.0, dt).unwrap()
    }

    #[test]
    fn linear_crossing_interval() {
        let tr = unit_ramp(0.003);
        let d = decompose_resonances(&tr, &[0.0], 1.0, &[0.1]).unwrap();
        let s = &d.speeds[0];
        assert_eq!(s.count, 1);
        let iv = s.intervals[0];
        assert!((iv.start - 0.1).abs() < 1e-12 && (iv.end - 0.3).abs() < 1e-12, "{iv:?}");
        assert!((s.occupation - 0.2).abs() < 1e-12);
        assert!(iv.min_gap.abs() < 1e-12 && !iv.truncated);
    }

    #[test]
    fn far_speed_has_no_intervals() {
        let tr = unit_ramp(0.01);
        let d = decompose_resonances(&tr, &[5.0], 1.0, &[0.1]).unwrap();
        assert_eq!(d.speeds[0].count, 0);
        assert_eq!(d.total_occupation(), 0.0);
    }

    #[test]
    fn shallow_dip_is_discarded() {
        let times: Vec<f64> = (0..=100).map(|k| k as f64 * 0.01).collect();
        // |α − ξ| dips from 2 to 0.7 and back, threshold 1
        let speed = times.iter().map(|t| 0.7 + 5.2 * (t - 0.5).abs()).collect();
        let d = decompose_resonances(&from_speed(times, speed), &[0.0], 1.0, &[1.0]).unwrap();
        assert_eq!(d.speeds[0].count, 0);
    }

    #[test]
    fn boundary_intervals_are_flagged() {
        let times: Vec<f64> = (0..=10).map(|k| k as f64 * 0.1).collect();
        let speed = vec![0.0; 11];
        let d = decompose_resonances(&from_speed(times, speed), &[0.0], 1.0, &[0.5]).unwrap();
        let iv = d.speeds[0].intervals[0];
        assert!(iv.truncated && iv.start == 0.0 && (iv.end - 1.0).abs() < 1e-15);
    }

    #[test]
    fn adaptive_delta_modes() {
        let tr = unit_ramp(0.01);
        let base = decompose_resonances(&tr, &[0.0], 1.0, &[0.1]).unwrap();
        let none = decompose_resonances(&tr, &[5.0], 1.0, &[0.1]).unwrap();
        let cum = adaptive_delta(&base, &none, &tr.times, 1e-3, 1.0, 1.0, RateMode::Cumulative);
        assert_eq!(cum.values[0], 1e-3);
        assert!((cum.final_value() - (1e-3 + 0.2)).abs() < 1e-12);
        assert!(cum.values.windows(2).all(|w| w[1] >= w[0]));
        let k = tr.times.iter().position(|t| (t - 0.2).abs() < 1e-9).unwrap();
        assert!((cum.values[k] - (1e-3 + 0.1)).abs() < 1e-12);
        let flat = adaptive_delta(&none, &none, &tr.times, 1e-3, 1.0, 1.0, RateMode::Cumulative);
        assert!(flat.values.iter().all(|v| *v == 1e-3));
        let con = adaptive_delta(&base, &base, &tr.times, 1e-3, 2.0, 0.5, RateMode::Constant);
        assert_eq!(con.values[0], 1e-3);
        assert!((con.final_value() - (1e-3 + 0.4)).abs() < 1e-12);
    }

    #[test]
    fn occupation_of_ramp() {
        let tr = unit_ramp(0.01);
        assert!((occupation_time(&tr, 0.3, 0.05) - 0.1).abs() < 1e-12);
        assert_eq!(occupation_measure(&[tr.clone()], 3.0, 0.1, 1.0), 0.0);
        assert_eq!(occupation_measure(&[tr], 0.3, 0.05, 1.9), 1.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn intervals_are_admissible(
            coef in prop::collection::vec(-1.0f64..1.0, 4),
            c in 0.05f64..0.5,
            xi in -0.5f64..0.5,
        ) {
            let times: Vec<f64> = (0..=400).map(|k| k as f64 * 0.005).collect();
            let speed: Vec<f64> = times
                .iter()
                .map(|t| coef[0] + coef[1] * (3.0 * t).sin() + coef[2] * (7.0 * t).cos() + coef[3] * t)
                .collect();
            let lip = 3.0 + 7.0 + 1.0;
            let tr = from_speed(times, speed);
            let d = decompose_resonances(&tr, &[xi], 1.0, &[c]).unwrap();
            let s = &d.speeds[0];
            let tol = 0.005 * lip;
            let mut last = 0.0f64;
            for iv in &s.intervals {
                prop_assert!(iv.start >= last && iv.end > iv.start && iv.end <= 2.0 + 1e-12);
                last = iv.end;
                prop_assert!(iv.min_gap <= 0.5 * c);
                // gap reaches the threshold at the non-truncated ends
                let at = |t: f64| {
                    let k = ((t / 0.005).round() as usize).min(tr.len() - 1);
                    (tr.speed[k] - xi).abs()
                };
                if iv.start > 0.0 {
                    prop_assert!((at(iv.start) - c).abs() <= tol);
                }
                if iv.end < 2.0 {
                    prop_assert!((at(iv.end) - c).abs() <= tol);
                }
                if !iv.truncated {
                    prop_assert!(iv.length() >= 0.5 * c / lip - 2.0 * 0.005);
                }
            }
            let sum: f64 = s.intervals.iter().map(|iv| iv.length()).sum();
            prop_assert_eq!(sum, s.occupation);
            prop_assert!(s.occupation <= occupation_time(&tr, xi, c) + 1e-12);
        }
    }
}
