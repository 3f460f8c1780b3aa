//! Scalar numeric helpers shared by the bound formulas.
//!
//! The window formulas sum per-generation quantities up to generation counts
//! that can reach 10^12 for polynomial rate families, so the sums here switch
//! from direct loops to Euler-Maclaurin tail expansions once the range is
//! long. Accuracy target: relative error below 1e-9 for exponents |p| <= 16,
//! which is far tighter than the 1e-6 comparisons the window reports need.

use statrs::function::gamma::ln_gamma;

/// Number of terms summed directly before switching to the tail expansion.
const DIRECT_LIMIT: u64 = 200_000;
/// Lower endpoints below this are summed directly so the expansion only ever
/// runs on a range where its error terms are tiny.
const TAIL_START: u64 = 64;

/// Sum of `k^p` for integer `k` in `a..=b`. Returns 0 for an empty range.
pub fn power_sum(p: f64, a: u64, b: u64) -> f64 {
    if b < a {
        return 0.0;
    }
    if b - a < DIRECT_LIMIT {
        return (a..=b).map(|k| (k as f64).powf(p)).sum();
    }
    let split = a.max(TAIL_START);
    let mut head = 0.0;
    if split > a {
        head = (a..split).map(|k| (k as f64).powf(p)).sum();
    }
    head + euler_maclaurin_tail(p, split, b)
}

/// Euler-Maclaurin approximation of `sum_{k=a}^{b} k^p` with two Bernoulli
/// correction terms. Requires `a >= 1`.
fn euler_maclaurin_tail(p: f64, a: u64, b: u64) -> f64 {
    let (af, bf) = (a as f64, b as f64);
    let integral = if (p + 1.0).abs() < 1e-12 {
        (bf / af).ln()
    } else {
        (bf.powf(p + 1.0) - af.powf(p + 1.0)) / (p + 1.0)
    };
    let boundary = 0.5 * (af.powf(p) + bf.powf(p));
    let b2 = (p / 12.0) * (bf.powf(p - 1.0) - af.powf(p - 1.0));
    let b4 = (p * (p - 1.0) * (p - 2.0) / 720.0) * (af.powf(p - 3.0) - bf.powf(p - 3.0));
    integral + boundary + b2 + b4
}

/// Sum of `ln k` for integer `k` in `a..=b`, exact through the log-gamma
/// function. Requires `a >= 1`; returns 0 for an empty range.
pub fn log_sum(a: u64, b: u64) -> f64 {
    if b < a {
        return 0.0;
    }
    ln_gamma(b as f64 + 1.0) - ln_gamma(a as f64)
}

/// Sum of the geometric series `q^a + ... + q^b` for `q > 0`.
///
/// Exponents are integers; the closed form is evaluated in a way that stays
/// finite for the huge exponents the window formulas produce (overflowing
/// terms saturate to `f64::INFINITY`, which the callers treat as a divergent
/// sum).
pub fn geometric_sum(q: f64, a: u64, b: u64) -> f64 {
    if b < a {
        return 0.0;
    }
    if (q - 1.0).abs() < 1e-15 {
        return (b - a + 1) as f64;
    }
    let qa = powi_u64(q, a);
    let qb1 = powi_u64(q, b + 1);
    (qb1 - qa) / (q - 1.0)
}

/// `q^e` by binary exponentiation for `u64` exponents.
pub fn powi_u64(q: f64, mut e: u64) -> f64 {
    let mut base = q;
    let mut acc = 1.0f64;
    while e > 0 {
        if e & 1 == 1 {
            acc *= base;
        }
        base *= base;
        e >>= 1;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn direct(p: f64, a: u64, b: u64) -> f64 {
        (a..=b).map(|k| (k as f64).powf(p)).sum()
    }

    #[test]
    fn power_sum_matches_direct_small() {
        for &p in &[-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.5] {
            for &(a, b) in &[(1u64, 1u64), (1, 100), (7, 7), (5, 1000)] {
                let got = power_sum(p, a, b);
                let want = direct(p, a, b);
                assert!(
                    (got - want).abs() <= 1e-12 * want.abs().max(1.0),
                    "p={p} a={a} b={b}: {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn power_sum_tail_expansion_accurate() {
        // Force the expansion path and compare against a direct loop.
        for &p in &[-1.5, -1.0, -0.25, 0.75, 2.0, 3.5] {
            let (a, b) = (3u64, 400_000u64);
            let got = power_sum(p, a, b);
            let want = direct(p, a, b);
            let rel = (got - want).abs() / want.abs();
            assert!(rel < 1e-10, "p={p}: rel {rel:e}");
        }
    }

    #[test]
    fn power_sum_empty_range() {
        assert_eq!(power_sum(2.0, 5, 4), 0.0);
    }

    #[test]
    fn power_sum_huge_range_is_finite_and_ordered() {
        let s1 = power_sum(0.5, 1, 1_000_000_000_000);
        let s2 = power_sum(0.5, 1, 2_000_000_000_000);
        assert!(s1.is_finite() && s2 > s1);
        // Leading order is (2/3) * b^(3/2).
        let lead = 2.0 / 3.0 * (1e12f64).powf(1.5);
        assert!((s1 - lead).abs() / lead < 1e-6);
    }

    #[test]
    fn log_sum_matches_direct() {
        let got = log_sum(3, 2000);
        let want: f64 = (3..=2000u64).map(|k| (k as f64).ln()).sum();
        assert!((got - want).abs() < 1e-8);
        assert_eq!(log_sum(5, 4), 0.0);
    }

    #[test]
    fn geometric_sum_matches_direct() {
        for &q in &[0.25, 0.5, 2.0, 3.0] {
            let got = geometric_sum(q, 2, 20);
            let want: f64 = (2..=20u64).map(|k| powi_u64(q, k)).sum();
            assert!((got - want).abs() < 1e-9 * want.max(1.0), "q={q}");
        }
        assert_eq!(geometric_sum(1.0, 4, 9), 6.0);
    }
}
