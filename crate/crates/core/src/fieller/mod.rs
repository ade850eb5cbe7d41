//! Fieller-type confidence intervals for the MNLCS ratio.
//!
//! With `t` the critical value on `n_group + n_field - 2` degrees of freedom,
//!
//! ```text
//! h      = t² (SE_j / c̄_j)²
//! SE     = MNLCS/(1-h) · sqrt((1-h) SE_s²/c̄_s² + SE_j²/c̄_j²)
//! CI     = MNLCS/(1-h) ± t · SE
//! ```
//!
//! `c̄` and `SE` are the mean and standard error of `ln(1 + c)` for the group
//! (`s`) and the whole field (`j`). When `h ≥ 1` the interval is unbounded and
//! no bounds are reported. Since `MNLCS · SE_s / c̄_s = SE_s / c̄_j`, the
//! standard error is evaluated in that form, which stays finite for an
//! all-uncited group.

mod tdist;

use serde::{Deserialize, Serialize};

pub use tdist::{density, t_quantile, t_quantile_cached, upper_tail, TQuantileSpec};

use crate::error::{Error, Result};
use crate::indicator::mnlcs;
use crate::model::{FiellerInterval, LogStats, MnlcsEstimate, Validity};

/// How the curvature term `h` is computed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FiellerForm {
    /// `t² (SE_j / c̄_j)²`, Fieller's construction.
    #[default]
    Standard,
    /// `t (SE_j / c̄_s)²`, the variant that appears in some published
    /// statements of the formula; kept for comparison runs.
    Printed,
}

impl std::str::FromStr for FiellerForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "standard" => Ok(FiellerForm::Standard),
            "printed" => Ok(FiellerForm::Printed),
            other => Err(Error::Config(format!("unknown fieller form {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FiellerConfig {
    /// Upper-tail probability per side; 0.025 gives a two-sided 95% interval.
    pub alpha: f64,
    pub form: FiellerForm,
    /// Smallest group for which an interval is attempted.
    pub min_group_n: usize,
}

impl Default for FiellerConfig {
    fn default() -> Self {
        FiellerConfig {
            alpha: 0.025,
            form: FiellerForm::Standard,
            min_group_n: 5,
        }
    }
}

impl FiellerConfig {
    pub fn validate(&self) -> Result<()> {
        TQuantileSpec::new(1.0, self.alpha)?;
        if self.alpha.is_nan() || self.alpha >= 0.5 {
            return Err(Error::Config(format!(
                "alpha must be below 0.5, got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

pub fn degrees_of_freedom(n_group: usize, n_field: usize) -> f64 {
    (n_group + n_field) as f64 - 2.0
}

fn field_se(field: &LogStats) -> Result<f64> {
    if field.mean.is_nan() || field.mean <= 0.0 {
        return Err(Error::DegenerateField);
    }
    field
        .se
        .ok_or_else(|| Error::InsufficientData("field needs at least two articles".into()))
}

/// `h = t² (SE_j / c̄_j)²`.
pub fn fieller_h(t: f64, field: &LogStats) -> Result<f64> {
    let se = field_se(field)?;
    Ok((t * se / field.mean).powi(2))
}

/// `h = t (SE_j / c̄_s)²`; infinite for an all-uncited group with `SE_j > 0`.
pub fn fieller_h_printed(t: f64, group: &LogStats, field: &LogStats) -> Result<f64> {
    let se = field_se(field)?;
    if se == 0.0 {
        return Ok(0.0);
    }
    if group.mean == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(t * (se / group.mean).powi(2))
}

impl FiellerForm {
    pub fn h(self, t: f64, group: &LogStats, field: &LogStats) -> Result<f64> {
        match self {
            FiellerForm::Standard => fieller_h(t, field),
            FiellerForm::Printed => fieller_h_printed(t, group, field),
        }
    }
}

/// Interval for `group.mean / field.mean` at critical value `t`.
///
/// Needs at least two articles on each side; otherwise the estimate is
/// flagged `InsufficientData` (or `DegenerateField` for an all-zero field).
pub fn fieller_ci(group: &LogStats, field: &LogStats, t: f64, form: FiellerForm) -> MnlcsEstimate {
    let value = match mnlcs(group, field) {
        Ok(v) => v,
        Err(_) => {
            return MnlcsEstimate::without_interval(
                None,
                group.n,
                field.n,
                Validity::DegenerateField,
            )
        }
    };
    let (Some(se_s), Some(se_j)) = (group.se, field.se) else {
        return MnlcsEstimate::without_interval(
            Some(value),
            group.n,
            field.n,
            Validity::InsufficientData,
        );
    };
    let h = form.h(t, group, field).expect("field checked above");
    if h.is_nan() || h >= 1.0 {
        return MnlcsEstimate {
            h: Some(h),
            ..MnlcsEstimate::without_interval(
                Some(value),
                group.n,
                field.n,
                Validity::UnboundedFieller,
            )
        };
    }
    let one_minus_h = 1.0 - h;
    let cj = field.mean;
    let se = (one_minus_h * (se_s / cj).powi(2) + (value * se_j / cj).powi(2)).sqrt() / one_minus_h;
    MnlcsEstimate {
        value: Some(value),
        interval: Some(FiellerInterval::new(value / one_minus_h, t * se)),
        h: Some(h),
        se_mnlcs: Some(se),
        n_group: group.n,
        n_field: field.n,
        validity: Validity::Ok,
    }
}

/// Full estimate from group values and precomputed field statistics,
/// applying the minimum group size and choosing `t` from the sample sizes.
///
/// `group_logs` are `ln(1 + c)` values; an empty group gives no point value.
pub fn estimate<I>(group_logs: I, field: &LogStats, config: &FiellerConfig) -> MnlcsEstimate
where
    I: IntoIterator<Item = f64>,
    I::IntoIter: Clone,
{
    let Ok(group) = LogStats::from_log_values(group_logs) else {
        return MnlcsEstimate::without_interval(None, 0, field.n, Validity::InsufficientData);
    };
    estimate_from_stats(&group, field, config)
}

pub fn estimate_from_stats(
    group: &LogStats,
    field: &LogStats,
    config: &FiellerConfig,
) -> MnlcsEstimate {
    let Ok(value) = mnlcs(group, field) else {
        return MnlcsEstimate::without_interval(None, group.n, field.n, Validity::DegenerateField);
    };
    if group.n < config.min_group_n.max(2) || field.n < 2 {
        return MnlcsEstimate::without_interval(
            Some(value),
            group.n,
            field.n,
            Validity::InsufficientData,
        );
    }
    let spec = TQuantileSpec {
        df: degrees_of_freedom(group.n, field.n),
        alpha: config.alpha,
    };
    fieller_ci(group, field, t_quantile_cached(spec), config.form)
}

#[cfg(test)]
#[allow(clippy::excessive_precision)] // reference values as printed by the oracle
mod tests {
    use super::*;
    use crate::indicator::log_stats;

    fn stats(n: usize, mean: f64, se: f64) -> LogStats {
        LogStats {
            n,
            mean,
            se: Some(se),
        }
    }

    #[test]
    fn h_examples() {
        assert_eq!(fieller_h(2.0, &stats(10, 1.0, 0.0)).unwrap(), 0.0);
        assert!((fieller_h(2.0, &stats(10, 1.0, 0.05)).unwrap() - 0.01).abs() < 1e-15);
        assert!(fieller_h(2.0, &stats(10, 1.0, 0.5)).unwrap() >= 1.0);
        assert!(matches!(
            fieller_h(2.0, &stats(10, 0.0, 0.0)),
            Err(Error::DegenerateField)
        ));
    }

    #[test]
    fn unbounded_when_h_reaches_one() {
        let est = fieller_ci(
            &stats(10, 1.0, 0.1),
            &stats(20, 1.0, 0.6),
            2.0,
            FiellerForm::Standard,
        );
        assert_eq!(est.validity, Validity::UnboundedFieller);
        assert!(est.interval.is_none());
        assert_eq!(est.value, Some(1.0));
        assert!(est.h.unwrap() >= 1.0);
    }

    #[test]
    fn zero_field_se_gives_delta_interval() {
        let (g, f, t) = (stats(30, 0.8, 0.1), stats(300, 1.6, 0.0), 2.0);
        let est = fieller_ci(&g, &f, t, FiellerForm::Standard);
        let ci = est.interval.unwrap();
        let value = 0.5;
        assert_eq!(est.h, Some(0.0));
        assert!((ci.center - value).abs() < 1e-15);
        assert!((ci.half_width - t * value * 0.1 / 0.8).abs() < 1e-15);
    }

    #[test]
    fn small_field_se_converges_to_delta_interval() {
        let (g, t) = (stats(30, 0.8, 0.1), 2.0);
        let limit = fieller_ci(&g, &stats(300, 1.6, 0.0), t, FiellerForm::Standard);
        let near = fieller_ci(&g, &stats(300, 1.6, 1e-12), t, FiellerForm::Standard);
        let (a, b) = (limit.interval.unwrap(), near.interval.unwrap());
        assert!((a.low - b.low).abs() < 1e-12 && (a.high - b.high).abs() < 1e-12);
    }

    #[test]
    fn all_zero_group() {
        let field = log_stats(&[0, 1, 3, 7, 2, 2, 5, 1]).unwrap();
        let group = log_stats(&[0, 0, 0, 0, 0]).unwrap();
        let est = fieller_ci(&group, &field, 2.3, FiellerForm::Standard);
        assert_eq!(est.validity, Validity::Ok);
        assert_eq!(est.value, Some(0.0));
        let ci = est.interval.unwrap();
        assert_eq!(ci.center, 0.0);
        assert_eq!(est.ci_low(), Some(0.0));
    }

    // Frozen from an independent 40-digit straight-line evaluation of the
    // interval formulas; df = 2 + 8 - 2, alpha = 0.025.
    #[test]
    fn golden_small_cohort() {
        let field = log_stats(&[0, 1, 3, 7, 2, 2, 5, 1]).unwrap();
        let group = log_stats(&[1, 7]).unwrap();
        let t = t_quantile(TQuantileSpec::new(8.0, 0.025).unwrap());
        let est = fieller_ci(&group, &field, t, FiellerForm::Standard);
        let ci = est.interval.unwrap();
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * b.abs().max(1.0);
        assert!(close(est.value.unwrap(), 1.254_421_099_150_117_9));
        assert!(close(est.h.unwrap(), 0.237_969_923_252_357_6));
        assert!(close(est.se_mnlcs.unwrap(), 0.798_442_851_706_319));
        assert!(close(ci.center, 1.646_156_939_768_058_7));
        assert!(close(ci.low, -0.195_055_577_990_920_14));
        assert!(close(ci.high, 3.487_369_457_527_037_5));
        assert_eq!(est.ci_low(), Some(0.0));

        let printed = fieller_ci(&group, &field, t, FiellerForm::Printed);
        let ci = printed.interval.unwrap();
        assert!(close(printed.h.unwrap(), 0.065_580_585_312_387_94));
        assert!(close(ci.low, -0.290_823_495_437_100_2));
        assert!(close(ci.high, 2.975_744_376_644_360_5));
    }

    #[test]
    fn estimate_applies_thresholds() {
        let cfg = FiellerConfig::default();
        let field = log_stats(&[0, 1, 3, 7, 2, 2, 5, 1]).unwrap();
        let small = estimate([2f64.ln(), 8f64.ln()], &field, &cfg);
        assert_eq!(small.validity, Validity::InsufficientData);
        assert!(small.value.is_some());
        let empty = estimate(std::iter::empty::<f64>(), &field, &cfg);
        assert_eq!(empty.value, None);
        assert_eq!(empty.n_group, 0);
        let zeros = log_stats(&[0, 0, 0]).unwrap();
        assert_eq!(
            estimate([0.0; 5], &zeros, &cfg).validity,
            Validity::DegenerateField
        );
        let loose = FiellerConfig {
            min_group_n: 2,
            ..cfg
        };
        assert_eq!(
            estimate([2f64.ln(), 8f64.ln()], &field, &loose).validity,
            Validity::Ok
        );
    }

    #[test]
    fn width_shrinks_with_group_size() {
        let field = stats(1000, 1.2, 0.03);
        let cfg = FiellerConfig::default();
        let mut last = f64::INFINITY;
        for n in [5, 10, 20, 50, 100, 400] {
            // Fixed sample standard deviation: SE shrinks as 1/sqrt(n).
            let group = stats(n, 1.0, 0.9 / (n as f64).sqrt());
            let w = estimate_from_stats(&group, &field, &cfg)
                .interval
                .unwrap()
                .width();
            assert!(w <= last);
            last = w;
        }
    }

    #[test]
    fn interval_contains_center() {
        let field = stats(500, 1.1, 0.05);
        for n in 5..60 {
            let group = stats(n, 0.3 + n as f64 / 50.0, 1.0 / (n as f64).sqrt());
            let est = estimate_from_stats(&group, &field, &FiellerConfig::default());
            let ci = est.interval.unwrap();
            let v = est.value.unwrap() / (1.0 - est.h.unwrap());
            assert!(ci.low < v && v < ci.high);
        }
    }
}
