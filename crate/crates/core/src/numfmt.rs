//! Fixed-precision number formatting for reports and tables.

use std::fmt;

/// Displays a float with 12 significant digits: positional notation for
/// magnitudes in [1e−4, 1e12), scientific otherwise.
#[derive(Debug, Clone, Copy)]
pub struct Sig12(pub f64);

impl fmt::Display for Sig12 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let x = self.0;
        if x == 0.0 || !x.is_finite() {
            return write!(f, "{x}");
        }
        let magnitude = x.abs().log10().floor() as i32;
        if (-4..12).contains(&magnitude) {
            // Rounding can carry into the next decade (9.9999999999995 → 10.0000000000),
            // which adds a digit but never drops one.
            let decimals = (11 - magnitude).max(0) as usize;
            write!(f, "{x:.decimals$}")
        } else {
            write!(f, "{x:.11e}")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::Sig12;

    fn digits(s: &str) -> usize {
        let mantissa = s.split('e').next().unwrap();
        mantissa.chars().filter(char::is_ascii_digit).collect::<String>().trim_start_matches('0').len()
    }

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(Sig12(0.1).to_string(), "0.100000000000");
        assert_eq!(Sig12(59.0).to_string(), "59.0000000000");
        assert_eq!(Sig12(-35.25).to_string(), "-35.2500000000");
        assert_eq!(Sig12(1.5e-7).to_string(), "1.50000000000e-7");
        assert_eq!(Sig12(0.0).to_string(), "0");
        for x in [0.25, 0.000123456789012, 1.23456789012345, 123456.789, 7.0e-20, 2.5e15] {
            assert_eq!(digits(&Sig12(x).to_string()), 12, "{x}");
        }
    }
}
