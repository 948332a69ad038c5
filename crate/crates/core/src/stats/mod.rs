//! Fitts and ballistic regressions with their significance tests.

mod outliers;
mod regression;
pub mod special;

pub use outliers::{remove_outliers, OutlierRule};
pub use regression::{
    anova_regression, ballistic_fit, compare_fits, fit_model, fitts_fit, lack_of_fit, ols_fit,
    Anova, FitComparison, FittsFit, LackOfFit, OlsFit, RegressionModel,
};

use crate::error::{Error, Result};

/// Fitts index of difficulty `log2(2D / W)`, in bits.
pub fn index_of_difficulty(distance_m: f64, width_m: f64) -> Result<f64> {
    if !(distance_m > 0.0 && width_m > 0.0) || !distance_m.is_finite() || !width_m.is_finite() {
        return Err(Error::Domain(format!(
            "index of difficulty needs positive D and W, got D={distance_m}, W={width_m}"
        )));
    }
    Ok((2.0 * distance_m / width_m).log2())
}
