//! Identification diagnostics and regularized two-stage least squares for
//! network models with endogenous, contextual and correlated effects.
//!
//! The model is `Y = λWY + X₁β₁ + WX₂β₂ + ιγ + u` with `u = ρMu + ε`, where
//! `W` and `M` are block-diagonal over groups and `γ` is a group fixed effect.

// `!(x < y)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod estimation;
pub mod graphs;
pub mod identification;
pub mod instruments;
pub mod io;
pub mod linalg;
pub mod montecarlo;
pub mod pipeline;
pub mod regularization;
pub mod selection;
pub mod transforms;

pub use error::{Error, Result};

/// Formats a float with 6 significant digits; non-finite values become `-`.
pub fn fmt_num(v: f64) -> String {
    if !v.is_finite() {
        return "-".to_string();
    }
    if v == 0.0 {
        return "0".to_string();
    }
    let mag = v.abs().log10().floor() as i32;
    if (-4..6).contains(&mag) {
        let decimals = (5 - mag).max(0) as usize;
        let s = format!("{v:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{v:.5e}")
    }
}

#[cfg(test)]
mod tests {
    use super::fmt_num;

    #[test]
    fn six_significant_digits() {
        assert_eq!(fmt_num(0.123456789), "0.123457");
        assert_eq!(fmt_num(-12.5), "-12.5");
        assert_eq!(fmt_num(139830.4), "139830");
        assert_eq!(fmt_num(1.5e7), "1.50000e7");
        assert_eq!(fmt_num(f64::NAN), "-");
        assert_eq!(fmt_num(f64::INFINITY), "-");
        assert_eq!(fmt_num(0.0), "0");
    }
}
