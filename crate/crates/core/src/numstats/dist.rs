//! Cumulative distribution and survival functions.
//!
//! Survival functions are computed directly from the small tail, so p-values
//! far below machine epsilon keep their relative precision.

use super::special::{inc_beta_pair, inc_gamma_pair};
use crate::error::{Error, Result};

fn check_df(df: f64) -> Result<()> {
    if df > 0.0 && df.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidDf(df))
    }
}

/// `(P(T <= -|x|), P(T <= |x|))` for Student's t.
fn t_tails(x: f64, df: f64) -> (f64, f64) {
    if x.is_infinite() {
        return (0.0, 1.0);
    }
    let x2 = x * x;
    let denom = df + x2;
    // P(|T| > |x|) = I_{df/(df+x²)}(df/2, 1/2)
    let (two_tail, inner) = inc_beta_pair(0.5 * df, 0.5, df / denom, x2 / denom);
    let lower = 0.5 * two_tail;
    (lower, 0.5 + 0.5 * inner)
}

/// Student's t CDF.
pub fn t_cdf(x: f64, df: f64) -> Result<f64> {
    check_df(df)?;
    if x.is_nan() {
        return Ok(f64::NAN);
    }
    let (lower, upper) = t_tails(x, df);
    Ok(if x < 0.0 { lower } else { upper })
}

/// Student's t upper tail `P(T > x)`.
pub fn t_sf(x: f64, df: f64) -> Result<f64> {
    t_cdf(-x, df)
}

fn f_pair(x: f64, df1: f64, df2: f64) -> Result<(f64, f64)> {
    check_df(df1)?;
    check_df(df2)?;
    if x.is_nan() {
        return Ok((f64::NAN, f64::NAN));
    }
    if x <= 0.0 {
        return Ok((0.0, 1.0));
    }
    if x.is_infinite() {
        return Ok((1.0, 0.0));
    }
    let denom = df1 * x + df2;
    Ok(inc_beta_pair(0.5 * df1, 0.5 * df2, df1 * x / denom, df2 / denom))
}

/// F-distribution CDF.
pub fn f_cdf(x: f64, df1: f64, df2: f64) -> Result<f64> {
    f_pair(x, df1, df2).map(|p| p.0)
}

/// F-distribution upper tail.
pub fn f_sf(x: f64, df1: f64, df2: f64) -> Result<f64> {
    f_pair(x, df1, df2).map(|p| p.1)
}

fn chi2_pair(x: f64, df: f64) -> Result<(f64, f64)> {
    check_df(df)?;
    if x.is_nan() {
        return Ok((f64::NAN, f64::NAN));
    }
    Ok(inc_gamma_pair(0.5 * df, 0.5 * x.max(0.0)))
}

/// Chi-square CDF.
pub fn chi2_cdf(x: f64, df: f64) -> Result<f64> {
    chi2_pair(x, df).map(|p| p.0)
}

/// Chi-square upper tail.
pub fn chi2_sf(x: f64, df: f64) -> Result<f64> {
    chi2_pair(x, df).map(|p| p.1)
}

/// Standard normal CDF via `erfc(z) = Q(1/2, z²)`.
pub fn normal_cdf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    let (_, q) = inc_gamma_pair(0.5, 0.5 * x * x);
    if x < 0.0 {
        0.5 * q
    } else {
        1.0 - 0.5 * q
    }
}

/// Standard normal upper tail.
pub fn normal_sf(x: f64) -> f64 {
    normal_cdf(-x)
}
