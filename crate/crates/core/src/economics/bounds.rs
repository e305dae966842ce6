//! Closed-form escrow and penalty sizing.

use serde::{Deserialize, Serialize};

use super::binomial::{binomial_quantile, reciprocal_choose, RECIPROCAL_CUTOFF_LN};
use super::EconError;

/// Which lottery the sizing applies to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Fixed-size winning set per draw.
    Exact,
    /// Per-ticket Bernoulli draws.
    Independent,
}

impl std::str::FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> Result<Variant, String> {
        match s {
            "exact" => Ok(Variant::Exact),
            "independent" => Ok(Variant::Independent),
            _ => Err(format!("unknown variant {s:?} (expected exact or independent)")),
        }
    }
}

/// Parameters of the single-customer duplication game, in lottery rounds.
///
/// For the independent lottery `draw_len` is 1 and `tau`, `d`, `r`, `k` are
/// the per-round rate, draw delay, redeem window and lifetime directly.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameParams {
    pub m: u32,
    pub p: f64,
    pub beta: f64,
    /// Tickets per lottery round.
    pub tau: u64,
    pub d: u64,
    pub r: u64,
    pub k: u64,
}

impl GameParams {
    /// Converts round-denominated escrow settings into lottery rounds,
    /// rounding the delays up.
    #[allow(clippy::too_many_arguments)]
    pub fn from_rounds(
        m: u32,
        p: f64,
        beta: f64,
        tkt_rate: u64,
        draw_len: u64,
        d_draw: u64,
        d_redeem: u64,
        l_esc: u64,
    ) -> GameParams {
        let draw_len = draw_len.max(1);
        GameParams {
            m,
            p,
            beta,
            tau: tkt_rate * draw_len,
            d: d_draw.div_ceil(draw_len),
            r: d_redeem.div_ceil(draw_len),
            k: l_esc.div_ceil(draw_len),
        }
    }

    // Negated comparisons also reject NaN.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), EconError> {
        if !(0.0..=1.0).contains(&self.p) || !self.p.is_finite() {
            return Err(EconError::Invalid(format!("p = {} outside [0, 1]", self.p)));
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(EconError::Invalid(format!("beta = {} must be non-negative", self.beta)));
        }
        if self.tau == 0 || self.d == 0 || self.r == 0 || self.k == 0 {
            return Err(EconError::Invalid("tau, d, r, k must be positive".into()));
        }
        Ok(())
    }

    /// Value of one extra serviced ticket across the other merchants, `(m-1) p beta`.
    pub fn dup_value(&self) -> f64 {
        self.m.saturating_sub(1) as f64 * self.p * self.beta
    }

    /// Non-winning tickets per lottery round, `(1-p) tau`, when integral.
    pub fn losers_per_round(&self) -> Result<u64, EconError> {
        let x = (1.0 - self.p) * self.tau as f64;
        let r = x.round();
        if (x - r).abs() > 1e-9 * self.tau as f64 {
            return Err(EconError::NonIntegral(format!("(1-p)*tau = {x}")));
        }
        Ok(r as u64)
    }

    /// Largest per-round duplication count a rational customer considers.
    pub fn max_duplicates(&self, variant: Variant) -> Result<u64, EconError> {
        match variant {
            Variant::Exact => self.losers_per_round(),
            Variant::Independent => Ok(self.tau),
        }
    }
}

fn require_positive(name: &str, x: f64) -> Result<(), EconError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(EconError::Invalid(format!("{name} = {x} must be positive")))
    }
}

/// Payment escrow covering every winner of the exact lottery,
/// `beta * p * tkt_rate * l_esc`.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn payment_balance(beta: f64, p: f64, tkt_rate: u64, l_esc: u64) -> Result<f64, EconError> {
    if !(beta >= 0.0) || !(p > 0.0 && p <= 1.0) || tkt_rate == 0 || l_esc == 0 {
        return Err(EconError::Invalid("beta >= 0, 0 < p <= 1, tkt_rate and l_esc positive".into()));
    }
    Ok(beta * p * tkt_rate as f64 * l_esc as f64)
}

/// Strict lower bound on the penalty deposit for the exact lottery:
///
/// `(m-1) p beta tau ( (1-p) / (1 - 1/C(tau, (1-p)tau)) + (1-p)(d-1) + r )`
pub fn penalty_lower_bound_exact(gp: &GameParams) -> Result<f64, EconError> {
    penalty_lower_bound_exact_with_cutoff(gp, RECIPROCAL_CUTOFF_LN)
}

pub fn penalty_lower_bound_exact_with_cutoff(gp: &GameParams, cutoff_ln: f64) -> Result<f64, EconError> {
    gp.validate()?;
    require_positive("p", gp.p)?;
    let losers = gp.losers_per_round()?;
    let q = 1.0 - gp.p;
    // With no losing tickets nothing can be duplicated undetected.
    let first = if losers == 0 {
        0.0
    } else {
        q / (1.0 - reciprocal_choose(gp.tau, losers, cutoff_ln))
    };
    let inner = first + q * (gp.d as f64 - 1.0) + gp.r as f64;
    Ok(gp.dup_value() * gp.tau as f64 * inner)
}

/// Strict lower bound on the penalty deposit for the independent lottery
/// (`tau` plays the per-round rate, `d` and `r` the round delays):
///
/// `(m-1) p beta tau ( 1 / (1 - (1-p)^tau) + d + r - 1 )`
pub fn penalty_lower_bound_independent(gp: &GameParams) -> Result<f64, EconError> {
    gp.validate()?;
    require_positive("p", gp.p)?;
    require_positive("beta", gp.beta)?;
    let miss_all = (gp.tau as f64 * (-gp.p).ln_1p()).exp();
    let inner = 1.0 / (1.0 - miss_all) + gp.d as f64 + gp.r as f64 - 1.0;
    Ok(gp.dup_value() * gp.tau as f64 * inner)
}

/// Escrow balance covering all independent-lottery winners with probability
/// at least `1 - epsilon`: `beta * F^-1(p, l_esc * tkt_rate, 1 - epsilon)`.
pub fn escrow_balance_independent(
    beta: f64,
    p: f64,
    tkt_rate: u64,
    l_esc: u64,
    epsilon: f64,
) -> Result<f64, EconError> {
    let n = tkt_rate * l_esc;
    if n == 0 {
        return Err(EconError::Invalid("l_esc * tkt_rate must be positive".into()));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(EconError::Invalid(format!("epsilon = {epsilon} outside (0, 1)")));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(EconError::Invalid(format!("p = {p} outside [0, 1]")));
    }
    Ok(beta * winners_covered(p, n, epsilon) as f64)
}

/// Winner count `psi` the independent escrow must cover.
pub fn winners_covered(p: f64, n: u64, epsilon: f64) -> u64 {
    binomial_quantile(n, p, 1.0 - epsilon)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn example() -> GameParams {
        GameParams { m: 5, p: 0.01, beta: 1.0, tau: 1000, d: 6, r: 6, k: 200 }
    }

    #[test]
    fn worked_example_exact() {
        assert_eq!(payment_balance(1.0, 0.01, 1000, 200).unwrap(), 2000.0);
        let b = penalty_lower_bound_exact(&example()).unwrap();
        assert!((b - 477.6).abs() < 0.05, "{b}");
    }

    #[test]
    fn worked_example_independent() {
        assert_eq!(escrow_balance_independent(1.0, 0.01, 1000, 200, 0.01).unwrap(), 2104.0);
        let b = penalty_lower_bound_independent(&example()).unwrap();
        assert!((b - 480.0).abs() < 0.1, "{b}");
    }

    #[test]
    fn single_merchant_needs_no_penalty() {
        let gp = GameParams { m: 1, ..example() };
        assert_eq!(penalty_lower_bound_exact(&gp).unwrap(), 0.0);
        assert_eq!(penalty_lower_bound_independent(&gp).unwrap(), 0.0);
    }

    #[test]
    fn tiny_exact_case_by_fractions() {
        // tau=2, p=1/2, m=2, d=r=1: 1*1/2*1*2*( (1/2)/(1-1/2) + 0 + 1 ) = 2
        let gp = GameParams { m: 2, p: 0.5, beta: 1.0, tau: 2, d: 1, r: 1, k: 3 };
        let num = num_rational::Ratio::new(1i64, 2) * 2 * (num_rational::Ratio::new(1, 2) / num_rational::Ratio::new(1, 2) + 1);
        let b = penalty_lower_bound_exact(&gp).unwrap();
        assert!((b - *num.numer() as f64 / *num.denom() as f64).abs() < 1e-12);
    }

    #[test]
    fn kappa_one_substitution() {
        let gp = GameParams { m: 4, p: 0.2, beta: 3.0, tau: 1, d: 2, r: 5, k: 10 };
        let direct = 3.0 * 0.2 * 3.0 * (1.0 / 0.2 + 2.0 + 5.0 - 1.0);
        assert!((penalty_lower_bound_independent(&gp).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn non_integral_losers_rejected() {
        let gp = GameParams { tau: 10, p: 0.25, ..example() };
        assert!(matches!(penalty_lower_bound_exact(&gp), Err(EconError::NonIntegral(_))));
    }

    #[test]
    fn payment_balance_edges() {
        assert_eq!(payment_balance(0.0, 0.3, 10, 10).unwrap(), 0.0);
        assert!(payment_balance(1.0, 0.0, 10, 10).is_err());
        assert!(payment_balance(1.0, 0.1, 0, 10).is_err());
        assert_eq!(payment_balance(2.5, 0.1, 40, 20).unwrap() * 2.0, payment_balance(2.5, 0.1, 40, 40).unwrap());
    }

    #[test]
    fn escrow_monotonicity() {
        let base = |eps, l, r, p| escrow_balance_independent(1.0, p, r, l, eps).unwrap();
        assert!(base(0.01, 50, 100, 0.05) >= base(0.05, 50, 100, 0.05));
        assert!(base(0.01, 60, 100, 0.05) >= base(0.01, 50, 100, 0.05));
        assert!(base(0.01, 50, 120, 0.05) >= base(0.01, 50, 100, 0.05));
        assert!(base(0.01, 50, 100, 0.06) >= base(0.01, 50, 100, 0.05));
    }

    #[test]
    fn epsilon_near_one_gives_lower_tail() {
        assert_eq!(escrow_balance_independent(1.0, 0.01, 5, 1, 0.999999).unwrap(), 0.0);
        assert!(escrow_balance_independent(1.0, 0.01, 5, 1, 1.0).is_err());
        assert!(escrow_balance_independent(1.0, 0.01, 0, 1, 0.5).is_err());
    }

    #[test]
    fn bounds_monotone_in_parameters() {
        let e = |gp: GameParams| penalty_lower_bound_exact(&gp).unwrap();
        let i = |gp: GameParams| penalty_lower_bound_independent(&gp).unwrap();
        let g = example();
        for f in [e, i] {
            assert!(f(GameParams { m: 6, ..g }) > f(g));
            assert!(f(GameParams { beta: 2.0, ..g }) > f(g));
            assert!(f(GameParams { r: 7, ..g }) > f(g));
            assert!(f(GameParams { d: 7, ..g }) > f(g));
        }
    }

    #[test]
    fn exact_and_independent_escrows_close_for_long_lifetimes() {
        let exact = payment_balance(1.0, 0.01, 1000, 200).unwrap();
        let ind = escrow_balance_independent(1.0, 0.01, 1000, 200, 0.01).unwrap();
        let ratio = ind / exact;
        assert!((1.0..=1.10).contains(&ratio));
        let short = escrow_balance_independent(1.0, 0.01, 1000, 2, 0.01).unwrap() / payment_balance(1.0, 0.01, 1000, 2).unwrap();
        assert!(short > ratio);
    }
}
