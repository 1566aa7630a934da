//! Shared CSV conventions: fixed column order, header row, newline-terminated
//! records, and floats printed in positional decimal with enough digits to
//! round-trip exactly (never fewer than 12 significant digits).

/// Formats a float in positional decimal with 17-18 significant digits, so
/// parsing the string recovers the identical bit pattern.
pub fn fmt_float(x: f64) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() {
            "-0.000000000000".to_string()
        } else {
            "0.000000000000".to_string()
        };
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    let prec = (17 - exp).max(0) as usize;
    format!("{:.*}", prec, x)
}

/// One CSV record from already-formatted fields.
pub fn record(fields: &[String]) -> String {
    let mut line = fields.join(",");
    line.push('\n');
    line
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_roundtrip_exactly() {
        let cases = [
            0.5,
            -0.1,
            2.0 / 3.0,
            1e-9,
            123.456789,
            std::f64::consts::PI,
            -std::f64::consts::FRAC_PI_4,
            4.0,
            0.0,
            -0.0,
            1.4529281173596438e-4,
        ];
        for &x in &cases {
            let s = fmt_float(x);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits(), "{x} -> {s} -> {back}");
            assert!(!s.contains('e') && !s.contains('E'), "positional only: {s}");
        }
    }

    #[test]
    fn floats_carry_twelve_significant_digits() {
        for &x in &[0.5, 1.0, -3.25, 1000.0, 0.001] {
            let s = fmt_float(x);
            let digits = s.chars().filter(|c| c.is_ascii_digit()).count();
            assert!(digits >= 12, "{s} has too few digits");
        }
    }
}
