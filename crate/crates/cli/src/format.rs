//! Number parsing and printing conventions.

/// Parses a real number, accepting fractions such as `1/8`.
pub fn parse_real(s: &str) -> Result<f64, String> {
    let s = s.trim();
    let value = match s.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|_| format!("invalid number {s:?}"))?;
            let b: f64 = b.trim().parse().map_err(|_| format!("invalid number {s:?}"))?;
            if b == 0.0 {
                return Err(format!("zero denominator in {s:?}"));
            }
            a / b
        }
        None => s.parse().map_err(|_| format!("invalid number {s:?}"))?,
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(format!("invalid number {s:?}"))
    }
}

/// Decimal position of the first significant digit of `x` in (0, 1).
fn first_significant(x: f64) -> usize {
    (-x.log10()).ceil().max(1.0) as usize
}

/// Decimals shown for a probability by default: enough to show two
/// significant digits of whichever of `q` and `1 − q` is smaller, and never
/// fewer than two.
pub fn default_decimals(q: f64) -> usize {
    let m = q.min(1.0 - q);
    if m <= 0.0 {
        2
    } else {
        (first_significant(m) + 1).clamp(2, 12)
    }
}

pub fn probability(q: f64, precision: Option<usize>) -> String {
    let decimals = precision.unwrap_or_else(|| default_decimals(q));
    format!("{q:.decimals$}")
}

/// P-values get the fewest decimals (at least three) that keep them from
/// rounding to zero, so `2^-10` prints as `0.001`.
pub fn p_value(p: f64, precision: Option<usize>) -> String {
    let decimals = precision.unwrap_or_else(|| {
        (3..=20)
            .find(|&d| (p * 10f64.powi(d as i32)).round() > 0.0)
            .unwrap_or(20)
    });
    format!("{p:.decimals$}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fractions() {
        assert_eq!(parse_real("1/8"), Ok(0.125));
        assert_eq!(parse_real(" 0.5 "), Ok(0.5));
        assert!(parse_real("1/0").is_err());
        assert!(parse_real("x").is_err());
        assert!(parse_real("inf").is_err());
    }

    #[test]
    fn table_style_decimals() {
        assert_eq!(probability(0.881_080, None), "0.88");
        assert_eq!(probability(0.656_25, None), "0.66");
        assert_eq!(probability(0.999_794, None), "0.99979");
        assert_eq!(probability(0.014_87, None), "0.015");
        assert_eq!(probability(1.0, None), "1.00");
        assert_eq!(probability(0.881_080, Some(6)), "0.881080");
    }

    #[test]
    fn sign_test_style() {
        assert_eq!(p_value(0.000_976_562_5, None), "0.001");
        assert_eq!(p_value(0.125, None), "0.125");
        assert_eq!(p_value(0.5, None), "0.500");
        assert_eq!(p_value(2f64.powi(-20), None), "0.000001");
    }
}
