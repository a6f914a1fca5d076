//! Least-squares scaling fits.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FitError {
    #[error("need at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("abscissae must be strictly increasing (index {0})")]
    NotIncreasing(usize),
    #[error("power fit needs positive coordinates (index {0})")]
    NonPositive(usize),
    #[error("non-finite coordinate at index {0}")]
    NonFinite(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FitModel {
    /// `y = a + b x` on the coordinates as given.
    Linear,
    /// `log y = a + b log x`.
    Power,
    /// Linear fit plus the trend of `y / x`.
    Psi,
}

impl std::str::FromStr for FitModel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "linear" => Ok(Self::Linear),
            "power" => Ok(Self::Power),
            "psi" => Ok(Self::Psi),
            other => Err(format!("unknown fit mode `{other}` (linear, power, psi)")),
        }
    }
}

/// Trend of `y/x` used to exhibit `ψ(ξ)/ξ → 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PsiTrend {
    pub ratios: Vec<f64>,
    pub differences: Vec<f64>,
    /// Each ratio is at most `(1 + tolerance)` times its predecessor.
    pub nonincreasing: bool,
    pub sublinear: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingFit {
    pub model: FitModel,
    pub abscissa: Vec<f64>,
    pub ordinate: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual in fit coordinates.
    pub residual: f64,
    pub psi: Option<PsiTrend>,
}

/// Relative noise tolerated by the `ψ` trend check.
pub const PSI_TOLERANCE: f64 = 0.10;

pub fn fit_scaling(points: &[(f64, f64)], model: FitModel) -> Result<ScalingFit, FitError> {
    if points.len() < 3 {
        return Err(FitError::TooFewPoints(points.len()));
    }
    for (i, &(x, y)) in points.iter().enumerate() {
        if !x.is_finite() || !y.is_finite() {
            return Err(FitError::NonFinite(i));
        }
        if i > 0 && x <= points[i - 1].0 {
            return Err(FitError::NotIncreasing(i));
        }
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = match model {
        FitModel::Power => {
            if let Some(i) = points.iter().position(|&(x, y)| x <= 0.0 || y <= 0.0) {
                return Err(FitError::NonPositive(i));
            }
            points.iter().map(|&(x, y)| (x.ln(), y.ln())).unzip()
        }
        FitModel::Linear | FitModel::Psi => points.iter().copied().unzip(),
    };
    let (slope, intercept, residual) = least_squares(&xs, &ys);
    let psi = (model == FitModel::Psi).then(|| psi_trend(points, PSI_TOLERANCE));
    Ok(ScalingFit {
        model,
        abscissa: points.iter().map(|p| p.0).collect(),
        ordinate: points.iter().map(|p| p.1).collect(),
        slope,
        intercept,
        residual,
        psi,
    })
}

pub fn psi_trend(points: &[(f64, f64)], tolerance: f64) -> PsiTrend {
    let ratios: Vec<f64> = points.iter().map(|&(x, y)| y / x).collect();
    let differences: Vec<f64> = ratios.windows(2).map(|w| w[1] - w[0]).collect();
    let nonincreasing = ratios
        .windows(2)
        .all(|w| w[1] <= w[0] + tolerance * w[0].abs());
    let sublinear = nonincreasing
        && match (ratios.first(), ratios.last()) {
            (Some(a), Some(b)) => b < a,
            _ => false,
        };
    PsiTrend {
        ratios,
        differences,
        nonincreasing,
        sublinear,
    }
}

/// Slope of `log y` against `log x`; points with non-positive `y` are dropped.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = points
        .iter()
        .filter(|p| p.0 > 0.0 && p.1 > 0.0)
        .map(|&(x, y)| (x.ln(), y.ln()))
        .unzip();
    (xs.len() >= 2).then(|| least_squares(&xs, &ys).0)
}

fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    (slope, intercept, (ss / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_line() {
        let pts: Vec<_> = (1..6).map(|i| (i as f64, 2.0 * i as f64)).collect();
        let f = fit_scaling(&pts, FitModel::Linear).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-14);
        assert!(f.intercept.abs() < 1e-13);
        assert!(f.residual < 1e-13);
    }

    #[test]
    fn three_quarter_power() {
        let pts: Vec<_> = [4.0f64, 9.0, 16.0, 25.0]
            .iter()
            .map(|&x| (x, x.powf(0.75)))
            .collect();
        let f = fit_scaling(&pts, FitModel::Power).unwrap();
        assert!((f.slope - 0.75).abs() < 1e-6);
    }

    #[test]
    fn x_over_log_x_is_sublinear() {
        let pts: Vec<_> = (2..10)
            .map(|k| {
                let x = (k * 5) as f64;
                (x, x / x.ln())
            })
            .collect();
        let f = fit_scaling(&pts, FitModel::Psi).unwrap();
        let psi = f.psi.unwrap();
        assert!(psi.sublinear);
        assert!(psi.differences.iter().all(|d| *d < 0.0));
    }

    #[test]
    fn linear_growth_is_not_sublinear() {
        let pts: Vec<_> = (1..6).map(|i| (i as f64, 3.0 * i as f64)).collect();
        assert!(!fit_scaling(&pts, FitModel::Psi).unwrap().psi.unwrap().sublinear);
    }

    #[test]
    fn degenerate_inputs() {
        assert_eq!(
            fit_scaling(&[(1.0, 1.0), (2.0, 2.0)], FitModel::Linear),
            Err(FitError::TooFewPoints(2))
        );
        assert_eq!(
            fit_scaling(&[(1.0, 1.0), (1.0, 2.0), (3.0, 1.0)], FitModel::Linear),
            Err(FitError::NotIncreasing(1))
        );
        assert_eq!(
            fit_scaling(&[(1.0, 1.0), (2.0, 0.0), (3.0, 1.0)], FitModel::Power),
            Err(FitError::NonPositive(1))
        );
        assert_eq!("psi".parse::<FitModel>(), Ok(FitModel::Psi));
        assert!("cubic".parse::<FitModel>().is_err());
    }

    proptest! {
        #[test]
        fn recovers_any_power(b in -3.0f64..3.0, a in 0.1f64..10.0) {
            let pts: Vec<_> = (1..8).map(|i| { let x = i as f64 * 1.7; (x, a * x.powf(b)) }).collect();
            let f = fit_scaling(&pts, FitModel::Power).unwrap();
            prop_assert!((f.slope - b).abs() < 1e-9);
            prop_assert!((f.intercept - a.ln()).abs() < 1e-9);
        }
    }
}
