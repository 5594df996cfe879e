//! Thin wrappers over `libm` so the model code stays `no_std`.

pub(crate) fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

pub(crate) fn floor(x: f64) -> f64 {
    libm::floor(x)
}

pub(crate) fn abs(x: f64) -> f64 {
    libm::fabs(x)
}

/// Non-negative remainder of `a / b` for `a >= 0`, `b > 0`.
///
/// The result is guarded into `[0, b)` against the rare case where `a / b`
/// rounds up to an exact integer.
pub(crate) fn rem_nonneg(a: f64, b: f64) -> f64 {
    debug_assert!(a >= 0.0 && b > 0.0);
    let r = a - b * floor(a / b);
    if r < 0.0 {
        r + b
    } else if r >= b {
        r - b
    } else {
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rem_nonneg_basic() {
        assert_eq!(rem_nonneg(0.3, 0.125), 0.3 - 2.0 * 0.125);
        assert_eq!(rem_nonneg(0.25, 0.125), 0.0);
        assert_eq!(rem_nonneg(0.1, 0.125), 0.1);
        assert_eq!(rem_nonneg(0.0, 1.0), 0.0);
    }

    #[test]
    fn rem_nonneg_stays_in_range() {
        let mut x = 0.0f64;
        while x < 10.0 {
            let r = rem_nonneg(x, 0.125);
            assert!((0.0..0.125).contains(&r), "x={x} r={r}");
            x += 0.0137;
        }
    }
}
