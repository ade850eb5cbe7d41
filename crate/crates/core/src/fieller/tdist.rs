//! Student-t upper critical values.
//!
//! The tail probability comes from the regularised incomplete beta function,
//! `P(T > t) = I_{ν/(ν+t²)}(ν/2, 1/2) / 2` for `t ≥ 0`, and is inverted with
//! a bracketed Newton iteration.

use std::collections::HashMap;
use std::sync::{OnceLock, RwLock};

use statrs::function::beta::beta_reg;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TQuantileSpec {
    pub df: f64,
    /// Upper-tail probability.
    pub alpha: f64,
}

impl TQuantileSpec {
    pub fn new(df: f64, alpha: f64) -> Result<Self> {
        if !(df.is_finite() && df > 0.0) {
            return Err(Error::Domain(format!(
                "degrees of freedom must be positive, got {df}"
            )));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Domain(format!(
                "tail probability must be in (0, 1), got {alpha}"
            )));
        }
        Ok(TQuantileSpec { df, alpha })
    }
}

/// `P(T > t)` for `t ≥ 0`.
pub fn upper_tail(t: f64, df: f64) -> f64 {
    debug_assert!(t >= 0.0);
    if t == 0.0 {
        return 0.5;
    }
    let x = df / (df + t * t);
    0.5 * beta_reg(0.5 * df, 0.5, x)
}

pub fn density(t: f64, df: f64) -> f64 {
    let ln_norm =
        ln_gamma(0.5 * (df + 1.0)) - ln_gamma(0.5 * df) - 0.5 * (df * std::f64::consts::PI).ln();
    (ln_norm - 0.5 * (df + 1.0) * (t * t / df).ln_1p()).exp()
}

fn solve_upper(alpha: f64, df: f64) -> f64 {
    // Bracket [lo, hi] with upper_tail(lo) >= alpha > upper_tail(hi).
    let mut lo = 0.0;
    let mut hi = 2.0;
    while upper_tail(hi, df) >= alpha {
        lo = hi;
        hi *= 2.0;
    }
    let mut t = 0.5 * (lo + hi);
    for _ in 0..200 {
        let f = upper_tail(t, df) - alpha;
        if f > 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let step = f / density(t, df);
        let mut next = t + step;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - t).abs() <= 1e-15 * next.abs().max(1e-300) || hi - lo <= 1e-15 * hi {
            return next;
        }
        t = next;
    }
    t
}

/// Upper critical value `t` with `P(T > t) = alpha`. Negative for `alpha > 0.5`.
pub fn t_quantile(spec: TQuantileSpec) -> f64 {
    let TQuantileSpec { df, alpha } = spec;
    if alpha == 0.5 {
        return 0.0;
    }
    if alpha > 0.5 {
        return -solve_upper(1.0 - alpha, df);
    }
    solve_upper(alpha, df)
}

fn cache() -> &'static RwLock<HashMap<(u64, u64), f64>> {
    static CACHE: OnceLock<RwLock<HashMap<(u64, u64), f64>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// [`t_quantile`] behind a process-wide memo keyed on `(df, alpha)`.
pub fn t_quantile_cached(spec: TQuantileSpec) -> f64 {
    let key = (spec.df.to_bits(), spec.alpha.to_bits());
    if let Some(&t) = cache().read().expect("t cache poisoned").get(&key) {
        return t;
    }
    let t = t_quantile(spec);
    cache().write().expect("t cache poisoned").insert(key, t);
    t
}

#[cfg(test)]
#[allow(clippy::excessive_precision)] // reference values as printed by the oracle
mod tests {
    use super::*;

    // 40-digit values from an independent arbitrary-precision evaluation
    // (root of the regularised incomplete beta tail).
    const REFERENCE: &[(f64, f64, f64)] = &[
        (1.0, 0.025, 12.706_204_736_174_705),
        (2.0, 0.025, 4.302_652_729_749_464),
        (5.0, 0.025, 2.570_581_835_636_315_5),
        (8.0, 0.025, 2.306_004_135_204_166_7),
        (30.0, 0.025, 2.042_272_456_301_238_3),
        (100.0, 0.05, 1.660_234_326_085_339_6),
        (1048.0, 0.025, 1.962_230_174_218_143_7),
        (1.0e6, 0.025, 1.959_966_356_814_107),
        (3.5, 0.01, 4.060_711_359_300_083_7),
    ];

    #[test]
    fn matches_reference_values() {
        for &(df, alpha, expected) in REFERENCE {
            let t = t_quantile(TQuantileSpec::new(df, alpha).unwrap());
            let rel = ((t - expected) / expected).abs();
            assert!(
                rel <= 1e-8,
                "df={df} alpha={alpha}: {t} vs {expected} (rel {rel:e})"
            );
        }
    }

    #[test]
    fn normal_limit() {
        let t = t_quantile(TQuantileSpec::new(1e6, 0.025).unwrap());
        assert!((t - 1.959_964).abs() < 1e-4);
    }

    #[test]
    fn median_and_symmetry() {
        assert_eq!(t_quantile(TQuantileSpec::new(7.0, 0.5).unwrap()), 0.0);
        let up = t_quantile(TQuantileSpec::new(7.0, 0.25).unwrap());
        let down = t_quantile(TQuantileSpec::new(7.0, 0.75).unwrap());
        assert_eq!(up, -down);
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(
            TQuantileSpec::new(0.0, 0.025),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            TQuantileSpec::new(-3.0, 0.025),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            TQuantileSpec::new(3.0, 0.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn cached_equals_direct() {
        let spec = TQuantileSpec::new(17.0, 0.025).unwrap();
        assert_eq!(t_quantile_cached(spec), t_quantile(spec));
        assert_eq!(t_quantile_cached(spec), t_quantile(spec));
    }

    #[test]
    fn tail_roundtrip() {
        for df in [1.0, 2.5, 10.0, 250.0] {
            for alpha in [0.001, 0.025, 0.2, 0.45] {
                let t = t_quantile(TQuantileSpec::new(df, alpha).unwrap());
                assert!((upper_tail(t, df) - alpha).abs() <= 1e-12);
            }
        }
    }
}
