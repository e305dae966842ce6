//! Binomial coefficients and the binomial quantile.

use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::gamma::ln_gamma;

/// `ln C(n, k)` via log-gamma.
pub fn ln_choose(n: u64, k: u64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    if k == 0 || k == n {
        return 0.0;
    }
    let (n, k) = (n as f64, k as f64);
    ln_gamma(n + 1.0) - ln_gamma(k + 1.0) - ln_gamma(n - k + 1.0)
}

/// Reciprocals of binomial coefficients below `10^-300` are treated as zero.
pub const RECIPROCAL_CUTOFF_LN: f64 = 300.0 * std::f64::consts::LN_10;

/// `1 / C(n, k)`, saturating to zero once `ln C(n, k)` exceeds `cutoff_ln`.
pub fn reciprocal_choose(n: u64, k: u64, cutoff_ln: f64) -> f64 {
    let l = ln_choose(n, k);
    if l > cutoff_ln {
        0.0
    } else {
        (-l).exp()
    }
}

/// `C(a, y) / C(b, y)` as a running product; the chance that `y` picks from
/// `b` items all avoid a marked subset of `b - a`.
pub fn choose_ratio(a: u64, b: u64, y: u64) -> f64 {
    if y > a {
        return 0.0;
    }
    (0..y).fold(1.0, |acc, j| acc * (a - j) as f64 / (b - j) as f64)
}

fn ln_pmf(n: u64, p: f64, k: u64) -> f64 {
    ln_choose(n, k) + k as f64 * p.ln() + (n - k) as f64 * (-p).ln_1p()
}

/// `P[X <= k]` for `X ~ Binomial(n, p)`.
///
/// Sums probabilities outward from `k` in linear scale, anchored at the
/// log-space value of the term at `k`, stopping once terms are negligible.
pub fn binomial_cdf(n: u64, p: f64, k: u64) -> f64 {
    if k >= n || p <= 0.0 {
        return 1.0;
    }
    if p >= 1.0 {
        return 0.0;
    }
    let mean = n as f64 * p;
    // Upper-tail complement is more accurate above the mean.
    if (k as f64) > mean {
        return 1.0 - upper_tail(n, p, k + 1);
    }
    let odds = (1.0 - p) / p;
    let mut term = ln_pmf(n, p, k).exp();
    let mut sum = 0.0;
    let mut j = k;
    loop {
        sum += term;
        if j == 0 || term < sum * 1e-18 {
            break;
        }
        term *= j as f64 / (n - j + 1) as f64 * odds;
        j -= 1;
    }
    sum.min(1.0)
}

/// `P[X >= k]`.
fn upper_tail(n: u64, p: f64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    let inv_odds = p / (1.0 - p);
    let mut term = ln_pmf(n, p, k).exp();
    let mut sum = 0.0;
    let mut j = k;
    loop {
        sum += term;
        if j == n || term < sum * 1e-18 {
            break;
        }
        term *= (n - j) as f64 / (j + 1) as f64 * inv_odds;
        j += 1;
    }
    sum
}

/// Smallest `psi` with `P[X <= psi] >= q`.
///
/// A normal approximation brackets the answer, then exact CDF evaluations
/// walk to the boundary.
pub fn binomial_quantile(n: u64, p: f64, q: f64) -> u64 {
    if p <= 0.0 || q <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    if q >= 1.0 {
        return n;
    }
    let mean = n as f64 * p;
    let sd = (mean * (1.0 - p)).sqrt();
    let z = Normal::standard().inverse_cdf(q);
    let mut psi = (mean + z * sd).round().clamp(0.0, n as f64) as u64;
    if binomial_cdf(n, p, psi) >= q {
        while psi > 0 && binomial_cdf(n, p, psi - 1) >= q {
            psi -= 1;
        }
    } else {
        while psi < n && binomial_cdf(n, p, psi) < q {
            psi += 1;
        }
    }
    psi
}
