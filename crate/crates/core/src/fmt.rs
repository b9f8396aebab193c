//! Number formatting shared by every table writer.

/// Scientific notation with five significant digits and a two-digit
/// exponent, e.g. `2.1314e-03`.
pub fn sci5(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let s = format!("{x:.4e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa}e{sign}{:02}", exp.abs())
}

/// Four decimals, e.g. `0.9482`.
pub fn fixed4(x: f64) -> String {
    let s = format!("{x:.4}");
    if s == "-0.0000" {
        "0.0000".into()
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formats() {
        assert_eq!(sci5(2.1314e-3), "2.1314e-03");
        assert_eq!(sci5(1.3745e-15), "1.3745e-15");
        assert_eq!(sci5(0.036675), "3.6675e-02");
        assert_eq!(sci5(1.0), "1.0000e+00");
        assert_eq!(fixed4(0.94820001), "0.9482");
        assert_eq!(fixed4(-0.00001), "0.0000");
    }
}
