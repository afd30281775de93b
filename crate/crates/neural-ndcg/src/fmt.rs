//! Significant-digit formatting for console tables and CSV output.

/// Format with a fixed number of significant digits, in plain decimal
/// notation, keeping trailing zeros ("3.0000" at 5 digits).
pub fn format_significant(x: f64, digits: usize) -> String {
    assert!(digits >= 1, "at least one significant digit");
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let decimals_for = |exp: i32| (digits as i32 - 1 - exp).max(0) as usize;
    let exp = x.abs().log10().floor() as i32;
    let s = format!("{:.*}", decimals_for(exp), x);
    // Rounding can carry into the next power of ten (0.99997 → "1.0000");
    // reformat so the digit count stays right.
    let rounded: f64 = s.parse().expect("formatted float");
    if rounded != 0.0 {
        let new_exp = rounded.abs().log10().floor() as i32;
        if new_exp != exp {
            return format!("{:.*}", decimals_for(new_exp), x);
        }
    }
    s
}
