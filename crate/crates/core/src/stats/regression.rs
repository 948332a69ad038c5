use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::special::{f_sf, t_two_sided};
use crate::error::{Error, Result};
use crate::trajectory::TrialMetric;

/// SSE below this fraction of SST is treated as an exact fit.
const EXACT_FIT_RATIO: f64 = 1e-20;

#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub intercept: f64,
    pub slope: f64,
    pub r_squared: f64,
    pub se_intercept: f64,
    pub se_slope: f64,
    pub residuals: Vec<f64>,
    pub n: usize,
    pub sse: f64,
    pub ssr: f64,
    pub sst: f64,
}

impl OlsFit {
    pub fn predict(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }

    fn is_exact(&self) -> bool {
        self.sse <= EXACT_FIT_RATIO * self.sst
    }
}

/// Simple least-squares line `y = intercept + slope * x`.
pub fn ols_fit(xs: &[f64], ys: &[f64]) -> Result<OlsFit> {
    if xs.len() != ys.len() {
        return Err(Error::Contract(format!(
            "{} regressor values vs {} responses",
            xs.len(),
            ys.len()
        )));
    }
    let n = xs.len();
    if n < 3 {
        return Err(Error::InvalidArgument(format!(
            "regression needs at least 3 points, got {n}"
        )));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite regression input".into()));
    }
    if xs.iter().all(|x| *x == xs[0]) {
        return Err(Error::CollinearInput);
    }
    let nf = n as f64;
    let x_mean = xs.iter().sum::<f64>() / nf;
    let y_mean = if ys.iter().all(|y| *y == ys[0]) {
        ys[0]
    } else {
        ys.iter().sum::<f64>() / nf
    };
    let sxx: f64 = xs.iter().map(|x| (x - x_mean).powi(2)).sum();
    let sxy: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (x - x_mean) * (y - y_mean))
        .sum();
    let sst: f64 = ys.iter().map(|y| (y - y_mean).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    let residuals: Vec<f64> = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| y - (intercept + slope * x))
        .collect();
    let sse: f64 = residuals.iter().map(|r| r * r).sum();
    let ssr = slope * slope * sxx;
    let r_squared = if sst == 0.0 {
        0.0
    } else {
        (1.0 - sse / sst).clamp(0.0, 1.0)
    };
    let sigma2 = sse / (nf - 2.0);
    Ok(OlsFit {
        intercept,
        slope,
        r_squared,
        se_intercept: (sigma2 * (1.0 / nf + x_mean * x_mean / sxx)).sqrt(),
        se_slope: (sigma2 / sxx).sqrt(),
        residuals,
        n,
        sse,
        ssr,
        sst,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anova {
    pub f: f64,
    pub df1: usize,
    pub df2: usize,
    pub p: f64,
}

/// Regression F test with one numerator degree of freedom.
pub fn anova_regression(fit: &OlsFit) -> Anova {
    let df2 = fit.n - 2;
    let (f, p) = if fit.sst == 0.0 || fit.ssr == 0.0 {
        (0.0, 1.0)
    } else if fit.is_exact() {
        (f64::INFINITY, 0.0)
    } else {
        let f = fit.ssr / (fit.sse / df2 as f64);
        (f, f_sf(f, 1.0, df2 as f64))
    };
    Anova { f, df1: 1, df2, p }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LackOfFit {
    pub f: f64,
    pub df_lof: usize,
    pub df_pe: usize,
    pub p: f64,
    pub sslf: f64,
    pub sspe: f64,
}

/// Lack-of-fit F test against the group-means model. Groups are formed from
/// identical regressor values. `None` without at least three levels and one
/// replicate.
pub fn lack_of_fit(xs: &[f64], ys: &[f64], fit: &OlsFit) -> Option<LackOfFit> {
    let mut groups: BTreeMap<u64, (f64, Vec<f64>)> = BTreeMap::new();
    for (x, y) in xs.iter().zip(ys) {
        groups.entry(x.to_bits()).or_insert_with(|| (*x, Vec::new())).1.push(*y);
    }
    let n = xs.len();
    let c = groups.len();
    if c < 3 || n <= c {
        return None;
    }
    let mut sspe = 0.0;
    let mut sslf = 0.0;
    for (x, ys) in groups.values() {
        let m = ys.iter().sum::<f64>() / ys.len() as f64;
        sspe += ys.iter().map(|y| (y - m).powi(2)).sum::<f64>();
        sslf += ys.len() as f64 * (m - fit.predict(*x)).powi(2);
    }
    let df_lof = c - 2;
    let df_pe = n - c;
    // rounding leaves ~1e-30 of pure error when every replicate is identical
    let negligible = EXACT_FIT_RATIO * fit.sst;
    let (f, p) = if sslf <= negligible {
        (0.0, 1.0)
    } else if sspe <= negligible {
        (f64::INFINITY, 0.0)
    } else {
        let f = (sslf / df_lof as f64) / (sspe / df_pe as f64);
        (f, f_sf(f, df_lof as f64, df_pe as f64))
    };
    Some(LackOfFit {
        f,
        df_lof,
        df_pe,
        p,
        sslf,
        sspe,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressionModel {
    /// `MT = a + b log2(2D/W)`.
    Fitts,
    /// `MT = a + b sqrt(D)`.
    Ballistic,
}

impl RegressionModel {
    pub fn regressor(self, distance_m: f64, width_m: f64) -> Result<f64> {
        match self {
            RegressionModel::Fitts => super::index_of_difficulty(distance_m, width_m),
            RegressionModel::Ballistic => {
                if distance_m > 0.0 {
                    Ok(distance_m.sqrt())
                } else {
                    Err(Error::Domain(format!("sqrt(D) needs D > 0, got {distance_m}")))
                }
            }
        }
    }
}

impl fmt::Display for RegressionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RegressionModel::Fitts => "fitts",
            RegressionModel::Ballistic => "ballistic",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittsFit {
    pub model: RegressionModel,
    pub a: f64,
    pub b: f64,
    pub r_squared: f64,
    pub se_a: f64,
    pub se_b: f64,
    pub n: usize,
    pub anova: Anova,
    pub lack_of_fit: Option<LackOfFit>,
    /// Regressor and movement time of every trial used.
    pub points: Vec<(f64, f64)>,
}

/// Regresses movement time on the model's regressor over successful trials.
pub fn fit_model(trials: &[TrialMetric], model: RegressionModel) -> Result<FittsFit> {
    if let Some(first) = trials.first() {
        if trials.iter().any(|t| t.source != first.source) {
            return Err(Error::Contract("trial set mixes sources".into()));
        }
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for t in trials.iter().filter(|t| t.success) {
        if let Some(mt) = t.movement_time_s {
            xs.push(model.regressor(t.distance_m, t.width_m)?);
            ys.push(mt);
        }
    }
    let fit = ols_fit(&xs, &ys)?;
    Ok(FittsFit {
        model,
        a: fit.intercept,
        b: fit.slope,
        r_squared: fit.r_squared,
        se_a: fit.se_intercept,
        se_b: fit.se_slope,
        n: fit.n,
        anova: anova_regression(&fit),
        lack_of_fit: lack_of_fit(&xs, &ys, &fit),
        points: xs.into_iter().zip(ys).collect(),
    })
}

pub fn fitts_fit(trials: &[TrialMetric]) -> Result<FittsFit> {
    fit_model(trials, RegressionModel::Fitts)
}

pub fn ballistic_fit(trials: &[TrialMetric]) -> Result<FittsFit> {
    fit_model(trials, RegressionModel::Ballistic)
}

/// Human-versus-policy slope comparison. Reporting only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitComparison {
    pub slope_difference: f64,
    pub pooled_se: f64,
    pub t: f64,
    pub df: usize,
    pub p: f64,
    pub delta_r_squared: f64,
}

pub fn compare_fits(human: &FittsFit, policy: &FittsFit) -> Result<FitComparison> {
    if human.model != policy.model {
        return Err(Error::Contract(format!(
            "cannot compare a {} fit with a {} fit",
            human.model, policy.model
        )));
    }
    let diff = human.b - policy.b;
    let pooled_se = (human.se_b.powi(2) + policy.se_b.powi(2)).sqrt();
    let df = (human.n + policy.n).saturating_sub(4).max(1);
    let t = if diff == 0.0 {
        0.0
    } else if pooled_se == 0.0 {
        diff.signum() * f64::INFINITY
    } else {
        diff / pooled_se
    };
    Ok(FitComparison {
        slope_difference: diff,
        pooled_se,
        t,
        df,
        p: t_two_sided(t, df as f64),
        delta_r_squared: human.r_squared - policy.r_squared,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::Source;

    fn trials(points: &[(f64, f64)]) -> Vec<TrialMetric> {
        points
            .iter()
            .enumerate()
            .map(|(i, (d, mt))| TrialMetric {
                trial_id: format!("t{i}"),
                source: Source::Human,
                distance_m: *d,
                width_m: 0.02,
                movement_time_s: Some(*mt),
                success: true,
            })
            .collect()
    }

    #[test]
    fn exact_line() {
        let xs = [0.0, 1.0, 2.5, 4.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 + 3.0 * x).collect();
        let fit = ols_fit(&xs, &ys).unwrap();
        assert!((fit.intercept - 2.0).abs() < 1e-12);
        assert!((fit.slope - 3.0).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        let anova = anova_regression(&fit);
        assert_eq!(anova.p, 0.0);
        assert!(anova.f.is_infinite());
    }

    #[test]
    fn constant_response() {
        let fit = ols_fit(&[1.0, 2.0, 3.0, 4.0], &[0.1; 4]).unwrap();
        assert_eq!(fit.slope, 0.0);
        assert_eq!(fit.r_squared, 0.0);
        let anova = anova_regression(&fit);
        assert_eq!((anova.f, anova.p), (0.0, 1.0));
    }

    #[test]
    fn hand_solved_normal_equations() {
        // x = 1..5, y = (2, 4, 5, 4, 5): Sxx = 10, Sxy = 6, slope 0.6,
        // intercept 4 - 0.6 * 3 = 2.2, SSE = 2.4, SST = 6, R^2 = 0.6.
        let fit = ols_fit(&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 4.0, 5.0, 4.0, 5.0]).unwrap();
        assert!((fit.slope - 0.6).abs() < 1e-12);
        assert!((fit.intercept - 2.2).abs() < 1e-12);
        assert!((fit.sse - 2.4).abs() < 1e-12);
        assert!((fit.r_squared - 0.6).abs() < 1e-12);
        // sigma^2 = 0.8, se_b = sqrt(0.08), se_a = sqrt(0.8 * (0.2 + 0.9)).
        assert!((fit.se_slope - 0.08_f64.sqrt()).abs() < 1e-12);
        assert!((fit.se_intercept - 0.88_f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(
            ols_fit(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::CollinearInput)
        ));
        assert!(ols_fit(&[1.0, 2.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn lack_of_fit_zero_when_means_on_line() {
        // Symmetric replicates around an exact line.
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for x in [1.0, 2.0, 3.0, 4.0] {
            for e in [-0.1, 0.1] {
                xs.push(x);
                ys.push(1.0 + 0.5 * x + e);
            }
        }
        let fit = ols_fit(&xs, &ys).unwrap();
        let lof = lack_of_fit(&xs, &ys, &fit).unwrap();
        assert!(lof.sslf < 1e-25);
        assert!(lof.f < 1e-20);
        assert!((lof.p - 1.0).abs() < 1e-12);
        assert_eq!((lof.df_lof, lof.df_pe), (2, 4));
    }

    #[test]
    fn identical_replicates_off_the_line_reject_outright() {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (x, y) in [(4.32, 0.7), (4.91, 0.8), (5.32, 0.86), (5.64, 0.88)] {
            for _ in 0..25 {
                xs.push(x);
                ys.push(y);
            }
        }
        let fit = ols_fit(&xs, &ys).unwrap();
        let lof = lack_of_fit(&xs, &ys, &fit).unwrap();
        assert_eq!(lof.f, f64::INFINITY);
        assert_eq!(lof.p, 0.0);
    }

    #[test]
    fn lack_of_fit_needs_levels_and_replicates() {
        let xs = [1.0, 2.0, 3.0];
        let fit = ols_fit(&xs, &[1.0, 2.5, 2.9]).unwrap();
        assert!(lack_of_fit(&xs, &[1.0, 2.5, 2.9], &fit).is_none());
        let xs = [1.0, 1.0, 2.0, 2.0];
        let ys = [1.0, 1.1, 2.0, 2.2];
        let fit = ols_fit(&xs, &ys).unwrap();
        assert!(lack_of_fit(&xs, &ys, &fit).is_none());
    }

    #[test]
    fn fitts_fit_populates_tests() {
        let pts: Vec<(f64, f64)> = [0.2, 0.3, 0.4, 0.5]
            .iter()
            .flat_map(|d| {
                let id = (2.0 * d / 0.02_f64).log2();
                [-0.02, 0.0, 0.03].map(|e| (*d, 0.2 + 0.15 * id + e))
            })
            .collect();
        let fit = fitts_fit(&trials(&pts)).unwrap();
        assert!((fit.b - 0.15).abs() < 1e-9);
        assert_eq!(fit.n, 12);
        assert_eq!((fit.anova.df1, fit.anova.df2), (1, 10));
        assert!(fit.lack_of_fit.is_some());
        assert!(fit.anova.p < 1e-6);
    }

    #[test]
    fn ballistic_data_prefers_ballistic_model() {
        let pts: Vec<(f64, f64)> = [0.05, 0.1, 0.2, 0.4, 0.8, 1.6]
            .iter()
            .flat_map(|d: &f64| [(*d, 0.1 + 0.8 * d.sqrt()); 3])
            .collect();
        let t = trials(&pts);
        let fitts = fitts_fit(&t).unwrap();
        let ballistic = ballistic_fit(&t).unwrap();
        assert!(ballistic.r_squared > fitts.r_squared);
        assert!((ballistic.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn failures_are_excluded_and_sources_must_match() {
        let mut t = trials(&[(0.2, 0.8), (0.3, 0.9), (0.4, 1.0), (0.5, 1.1)]);
        t[3].success = false;
        t[3].movement_time_s = None;
        assert_eq!(fitts_fit(&t).unwrap().n, 3);
        t[0].source = Source::Policy;
        assert!(matches!(fitts_fit(&t), Err(Error::Contract(_))));
    }

    #[test]
    fn comparing_identical_fits() {
        let pts = [(0.2, 0.8), (0.3, 0.95), (0.4, 0.98), (0.5, 1.1), (0.2, 0.82)];
        let fit = fitts_fit(&trials(&pts)).unwrap();
        let cmp = compare_fits(&fit, &fit).unwrap();
        assert_eq!(cmp.slope_difference, 0.0);
        assert_eq!(cmp.p, 1.0);
        assert_eq!(cmp.delta_r_squared, 0.0);
        let other = ballistic_fit(&trials(&pts)).unwrap();
        assert!(compare_fits(&fit, &other).is_err());
    }

    #[test]
    fn reported_r_squared_gap() {
        let pts = [(0.2, 0.8), (0.3, 0.95), (0.4, 0.98), (0.5, 1.1), (0.2, 0.82)];
        let mut human = fitts_fit(&trials(&pts)).unwrap();
        let mut policy = human.clone();
        human.r_squared = 0.741;
        policy.r_squared = 0.596;
        let cmp = compare_fits(&human, &policy).unwrap();
        assert!((cmp.delta_r_squared - 0.145).abs() < 1e-12);
    }
}
