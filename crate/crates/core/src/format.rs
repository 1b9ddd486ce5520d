//! Number formatting shared by every CSV writer.
//!
//! Reals are printed with 10 significant digits, trailing zeros trimmed,
//! switching to scientific notation outside `1e-5 <= |x| < 1e15`.

const SIG_DIGITS: usize = 10;

pub fn real(x: f64) -> String {
    if x.is_nan() {
        return "NaN".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".to_string();
    }
    // Let the formatter do the rounding, then read the exponent back.
    let sci = format!("{:.*e}", SIG_DIGITS - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..15).contains(&exp) {
        let decimals = (SIG_DIGITS as i32 - 1 - exp).max(0) as usize;
        trim_zeros(format!("{:.*}", decimals, x))
    } else {
        format!("{}e{}", trim_zeros(mantissa.to_string()), exp)
    }
}

pub fn opt_real(x: Option<f64>) -> String {
    x.map(real).unwrap_or_else(|| "NA".to_string())
}

pub fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    let t = s.trim_end_matches('0').trim_end_matches('.');
    if t == "-0" {
        "0".to_string()
    } else {
        t.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_significant_digits() {
        assert_eq!(real(126.0), "126");
        assert_eq!(real(0.149_738_499_347_877_56), "0.1497384993");
        assert_eq!(real(-1.098_612_288_668_11), "-1.098612289");
        assert_eq!(real(1.0 / 3.0), "0.3333333333");
        assert_eq!(real(123_456_789_012.345), "123456789012");
        assert_eq!(real(2.5e-9), "2.5e-9");
        assert_eq!(real(-4.248_354_255e-18), "-4.248354255e-18");
        assert_eq!(real(1e20), "1e20");
        assert_eq!(real(0.0), "0");
        assert_eq!(real(-0.0), "0");
        assert_eq!(real(9.999_999_999_9), "10");
    }

    #[test]
    fn specials() {
        assert_eq!(real(f64::INFINITY), "inf");
        assert_eq!(opt_real(None), "NA");
        assert_eq!(flag(true), "1");
    }
}
