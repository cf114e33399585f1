//! Natural-log arithmetic. Zero probability is represented by `f64::NEG_INFINITY`.

pub const LOG_ZERO: f64 = f64::NEG_INFINITY;

#[inline]
pub fn ln(p: f64) -> f64 {
    if p > 0.0 {
        p.ln()
    } else {
        LOG_ZERO
    }
}

/// log(exp(a) + exp(b)) without overflow or underflow.
#[inline]
pub fn log_add(a: f64, b: f64) -> f64 {
    if a == LOG_ZERO {
        return b;
    }
    if b == LOG_ZERO {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

pub fn log_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let values: Vec<f64> = values.into_iter().collect();
    let hi = values.iter().copied().fold(LOG_ZERO, f64::max);
    if hi == LOG_ZERO {
        return LOG_ZERO;
    }
    hi + values.iter().map(|v| (v - hi).exp()).sum::<f64>().ln()
}

/// 17 significant digits, enough to reproduce any f64 exactly.
pub fn fmt_prob(x: f64) -> String {
    format!("{x:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn add_handles_zero_sentinel() {
        assert_eq!(log_add(LOG_ZERO, LOG_ZERO), LOG_ZERO);
        assert_eq!(log_add(LOG_ZERO, -2.0), -2.0);
        let v = log_add(0.3f64.ln(), 0.2f64.ln());
        assert!((v - 0.5f64.ln()).abs() < 1e-15);
        assert!((log_sum([0.1f64.ln(), 0.2f64.ln(), 0.7f64.ln()])).abs() < 1e-15);
        assert_eq!(log_sum([]), LOG_ZERO);
    }

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [0.1, 1.0 / 3.0, 2.0f64.sqrt() * 1e-300, 0.7363] {
            assert_eq!(fmt_prob(x).parse::<f64>().unwrap(), x);
        }
    }
}
