//! The duplication game: exact expected utility of a strategy, the best
//! response over all strategies, and a sampling estimate of the same value.
//!
//! A strategy fixes how many sequence numbers `y_i` the customer duplicates
//! across all `m` merchants in each lottery round `i = 1..k`. Tickets of round
//! `i` are drawn at `i + d`; if any duplicate wins, the customer is caught at
//! the latest by `i + d + r`, keeps duplicating every ticket of the rounds left
//! before then, and forfeits the penalty. Otherwise it pockets `(m-1) p beta y_i`
//! and continues as if in a fresh escrow one round shorter.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::binomial::choose_ratio;
use super::bounds::{GameParams, Variant};
use super::EconError;

/// Largest `k` the exact evaluation accepts.
pub const MAX_DP_ROUNDS: u64 = 64;

/// Cap on the best-response search, in evaluated window states.
pub const MAX_SEARCH_STATES: u64 = 20_000_000;

/// Probability that at least one of `y` duplicated tickets wins.
pub fn detection_probability(gp: &GameParams, variant: Variant, y: u64) -> Result<f64, EconError> {
    if y == 0 {
        return Ok(0.0);
    }
    Ok(match variant {
        Variant::Exact => 1.0 - choose_ratio(gp.losers_per_round()?, gp.tau, y),
        Variant::Independent => 1.0 - (y as f64 * (-gp.p).ln_1p()).exp(),
    })
}

/// Rounds the customer can still fully duplicate after learning it will be
/// caught for round `i` (1-based): `min(r, k - i - d + 1)`, floored at 0.
pub fn exit_rounds(gp: &GameParams, i: u64) -> u64 {
    gp.r.min((gp.k + 1).saturating_sub(i + gp.d))
}

fn check_strategy(gp: &GameParams, variant: Variant, y: &[u64]) -> Result<u64, EconError> {
    gp.validate()?;
    if gp.k > MAX_DP_ROUNDS {
        return Err(EconError::Invalid(format!("k = {} exceeds {MAX_DP_ROUNDS}", gp.k)));
    }
    if y.len() as u64 != gp.k {
        return Err(EconError::Strategy(format!("strategy has {} rounds, escrow has {}", y.len(), gp.k)));
    }
    let cap = gp.max_duplicates(variant)?;
    if let Some((i, v)) = y.iter().enumerate().find(|(_, &v)| v > cap) {
        return Err(EconError::Strategy(format!("y[{}] = {v} exceeds {cap}", i + 1)));
    }
    Ok(cap)
}

/// Expected additional utility of a strategy over honest play.
pub fn dp_expected_utility(gp: &GameParams, y: &[u64], penalty: f64, variant: Variant) -> Result<f64, EconError> {
    check_strategy(gp, variant, y)?;
    let c = gp.dup_value();
    let k = gp.k as usize;
    let d = gp.d as usize;
    let mut value = 0.0;
    for i in (1..=k).rev() {
        let yi = y[i - 1];
        let q = detection_probability(gp, variant, yi)?;
        let window: u64 = y[i - 1..(i - 1 + d).min(k)].iter().sum();
        let caught = c * (window + exit_rounds(gp, i as u64) * gp.tau) as f64 - penalty;
        let stay = c * yi as f64 + value;
        value = if q == 0.0 { stay } else { q * caught + (1.0 - q) * stay };
    }
    Ok(value)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestResponse {
    pub utility: f64,
    pub strategy: Vec<u64>,
}

/// Maximum of [`dp_expected_utility`] over all strategies.
///
/// The round-`i` term couples `y_i .. y_{i+d-1}`, so the search runs a
/// backward recursion whose state is that window; this is exact.
pub fn best_response_utility(gp: &GameParams, penalty: f64, variant: Variant) -> Result<BestResponse, EconError> {
    gp.validate()?;
    if gp.k > MAX_DP_ROUNDS {
        return Err(EconError::Invalid(format!("k = {} exceeds {MAX_DP_ROUNDS}", gp.k)));
    }
    let cap = gp.max_duplicates(variant)?;
    let radix = cap + 1;
    let d = gp.d as u32;
    let states = radix
        .checked_pow(d)
        .filter(|s| s.saturating_mul(gp.k) <= MAX_SEARCH_STATES)
        .ok_or(EconError::SearchSpace { radix, window: d, rounds: gp.k })?;
    let sub = states / radix; // states of the trailing d-1 entries
    let k = gp.k;
    let c = gp.dup_value();
    let q: Vec<f64> = (0..=cap).map(|y| detection_probability(gp, variant, y)).collect::<Result<_, _>>()?;

    let digits = |mut idx: u64| -> Vec<u64> {
        (0..d)
            .map(|_| {
                let v = idx % radix;
                idx /= radix;
                v
            })
            .collect()
    };

    // w[idx] for round k+1: all entries refer to rounds past the lifetime.
    let mut next: Vec<f64> = (0..states).map(|idx| if idx == 0 { 0.0 } else { f64::NEG_INFINITY }).collect();
    let mut argmax: Vec<Vec<u64>> = vec![Vec::new(); (k + 2) as usize];
    for i in (1..=k).rev() {
        // Best continuation given (y_{i+1} .. y_{i+d-1}), maximizing y_{i+d}.
        let mut best_next = vec![f64::NEG_INFINITY; sub as usize];
        let mut arg = vec![0u64; sub as usize];
        for m_idx in 0..sub {
            for last in 0..radix {
                let v = next[(m_idx + last * sub) as usize];
                if v > best_next[m_idx as usize] {
                    best_next[m_idx as usize] = v;
                    arg[m_idx as usize] = last;
                }
            }
        }
        argmax[(i + 1) as usize] = arg;
        let exit = exit_rounds(gp, i) * gp.tau;
        let mut cur = vec![f64::NEG_INFINITY; states as usize];
        for idx in 0..states {
            let ys = digits(idx);
            if ys.iter().enumerate().any(|(t, &v)| v != 0 && i + t as u64 > k) {
                continue;
            }
            let yi = ys[0];
            let cont = best_next[(idx / radix) as usize];
            if cont == f64::NEG_INFINITY {
                continue;
            }
            let window: u64 = ys.iter().sum();
            let stay = c * yi as f64 + cont;
            let qi = q[yi as usize];
            cur[idx as usize] = if qi == 0.0 {
                stay
            } else {
                qi * (c * (window + exit) as f64 - penalty) + (1.0 - qi) * stay
            };
        }
        next = cur;
    }
    let (best_idx, utility) = next
        .iter()
        .enumerate()
        .fold((0usize, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });

    let mut strategy = digits(best_idx as u64);
    strategy.truncate(k as usize);
    while (strategy.len() as u64) < k {
        let i = strategy.len() as u64 + 1 - d as u64; // round whose window ends here
        let window = &strategy[strategy.len() + 1 - d as usize..];
        let m_idx = window.iter().rev().fold(0u64, |acc, &v| acc * radix + v);
        strategy.push(argmax[(i + 1) as usize][m_idx as usize]);
    }
    Ok(BestResponse { utility, strategy })
}

/// Smallest penalty at which no strategy gains in expectation, by bisection
/// on the best-response value.
pub fn required_penalty(gp: &GameParams, variant: Variant) -> Result<f64, EconError> {
    let mut hi = 1.0f64;
    while best_response_utility(gp, hi, variant)?.utility > 0.0 {
        hi *= 2.0;
        if hi > 1e15 {
            return Err(EconError::Invalid("penalty requirement diverges".into()));
        }
    }
    let mut lo = 0.0;
    if best_response_utility(gp, lo, variant)?.utility <= 0.0 {
        return Ok(0.0);
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if best_response_utility(gp, mid, variant)?.utility > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_err: f64,
    /// Two-sided 99% confidence interval.
    pub ci_low: f64,
    pub ci_high: f64,
    pub trials: u64,
}

impl McEstimate {
    pub fn contains(&self, x: f64) -> bool {
        x >= self.ci_low && x <= self.ci_high
    }
}

const MC_SHARDS: u64 = 32;
const Z_99: f64 = 2.575_829_303_548_901;

/// Plays the duplication game `trials` times with seeded randomness.
///
/// Draws are sampled directly: the exact lottery picks `p * tau` winners
/// uniformly without replacement, the independent lottery flips a `p`-coin
/// per duplicated ticket.
pub fn monte_carlo_utility(
    gp: &GameParams,
    y: &[u64],
    penalty: f64,
    variant: Variant,
    trials: u64,
    seed: u64,
) -> Result<McEstimate, EconError> {
    if gp.k > 0 && y.len() as u64 != gp.k {
        return Err(EconError::Strategy(format!("strategy has {} rounds, escrow has {}", y.len(), gp.k)));
    }
    gp.validate()?;
    if trials < 2 {
        return Err(EconError::Invalid("need at least two trials".into()));
    }
    let winners = match variant {
        Variant::Exact => gp.tau - gp.losers_per_round()?,
        Variant::Independent => 0,
    };
    let c = gp.dup_value();
    let per = trials / MC_SHARDS;
    let extra = trials % MC_SHARDS;
    let sums: Vec<(f64, f64)> = (0..MC_SHARDS)
        .into_par_iter()
        .map(|shard| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(shard);
            let n = per + u64::from(shard < extra);
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..n {
                let u = play_once(gp, y, penalty, variant, winners, c, &mut rng);
                s += u;
                s2 += u * u;
            }
            (s, s2)
        })
        .collect();
    let (s, s2) = sums.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let n = trials as f64;
    let mean = s / n;
    let var = ((s2 - n * mean * mean) / (n - 1.0)).max(0.0);
    let std_err = (var / n).sqrt();
    Ok(McEstimate { mean, std_err, ci_low: mean - Z_99 * std_err, ci_high: mean + Z_99 * std_err, trials })
}

fn play_once(gp: &GameParams, y: &[u64], penalty: f64, variant: Variant, winners: u64, c: f64, rng: &mut ChaCha8Rng) -> f64 {
    let k = gp.k as usize;
    let mut total = 0.0;
    for i in 1..=k {
        let yi = y[i - 1];
        let caught = yi > 0
            && match variant {
                // Duplicated seqnos are 0..yi without loss of generality.
                Variant::Exact => sample(rng, gp.tau as usize, winners as usize).iter().any(|w| (w as u64) < yi),
                Variant::Independent => (0..yi).any(|_| rng.random::<f64>() < gp.p),
            };
        if caught {
            let window: u64 = y[i - 1..(i - 1 + gp.d as usize).min(k)].iter().sum();
            return total + c * (window + exit_rounds(gp, i as u64) * gp.tau) as f64 - penalty;
        }
        total += c * yi as f64;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::economics::bounds::{penalty_lower_bound_exact, penalty_lower_bound_independent};

    fn small() -> GameParams {
        GameParams { m: 3, p: 0.25, beta: 2.0, tau: 4, d: 2, r: 1, k: 3 }
    }

    #[test]
    fn honest_play_is_zero() {
        for variant in [Variant::Exact, Variant::Independent] {
            for gp in [small(), GameParams { k: 7, d: 3, r: 2, ..small() }] {
                let y = vec![0; gp.k as usize];
                assert_eq!(dp_expected_utility(&gp, &y, 123.0, variant).unwrap(), 0.0);
                let mc = monte_carlo_utility(&gp, &y, 123.0, variant, 10_000, 1).unwrap();
                assert_eq!((mc.mean, mc.std_err), (0.0, 0.0));
            }
        }
    }

    /// The three-round diagram with d = 2, r = 1, written out state by state.
    #[test]
    fn three_round_diagram_by_hand() {
        let gp = small();
        let (y1, y2, y3) = (2u64, 1u64, 3u64);
        let b = 5.0;
        let c = 2.0 * 0.25 * 2.0;
        let tau = 4.0;
        // Exact variant: 3 losers of 4; P(no dup wins) = C(3,y)/C(4,y).
        let miss = |y: u64| [1.0, 0.75, 0.5, 0.25][y as usize];
        // Round 3: caught -> only y3 counted, no rounds left.
        let s3 = (1.0 - miss(y3)) * (c * y3 as f64 - b) + miss(y3) * (c * y3 as f64);
        // Round 2: caught -> y2 + y3, no full rounds left after detection.
        let s2 = (1.0 - miss(y2)) * (c * (y2 + y3) as f64 - b) + miss(y2) * (c * y2 as f64 + s3);
        // Round 1: caught -> y1 + y2 plus round 3 fully duplicated.
        let s1 = (1.0 - miss(y1)) * (c * ((y1 + y2) as f64 + tau) - b) + miss(y1) * (c * y1 as f64 + s2);
        let dp = dp_expected_utility(&gp, &[y1, y2, y3], b, Variant::Exact).unwrap();
        assert!((dp - s1).abs() < 1e-12, "{dp} vs {s1}");
    }

    #[test]
    fn free_cheating_pays() {
        for variant in [Variant::Exact, Variant::Independent] {
            let gp = small();
            assert!(dp_expected_utility(&gp, &[1, 0, 0], 0.0, variant).unwrap() > 0.0);
            let br = best_response_utility(&gp, 0.0, variant).unwrap();
            assert!(br.utility > 0.0 && br.strategy[0] > 0);
        }
    }

    #[test]
    fn strategy_bounds_enforced() {
        let gp = small();
        assert!(matches!(dp_expected_utility(&gp, &[4, 0, 0], 0.0, Variant::Exact), Err(EconError::Strategy(_))));
        assert!(dp_expected_utility(&gp, &[4, 0, 0], 0.0, Variant::Independent).is_ok());
        assert!(dp_expected_utility(&gp, &[0, 0], 0.0, Variant::Exact).is_err());
    }

    fn exhaustive(gp: &GameParams, b: f64, variant: Variant) -> f64 {
        let cap = gp.max_duplicates(variant).unwrap();
        let k = gp.k as usize;
        let mut y = vec![0u64; k];
        let mut best = f64::NEG_INFINITY;
        loop {
            best = best.max(dp_expected_utility(gp, &y, b, variant).unwrap());
            let mut i = 0;
            while i < k && y[i] == cap {
                y[i] = 0;
                i += 1;
            }
            if i == k {
                return best;
            }
            y[i] += 1;
        }
    }

    #[test]
    fn window_search_matches_enumeration() {
        for variant in [Variant::Exact, Variant::Independent] {
            for (d, r, k) in [(1, 1, 3), (2, 1, 4), (3, 2, 4), (2, 3, 5), (4, 1, 3)] {
                let gp = GameParams { d, r, k, ..small() };
                for b in [0.0, 3.0, 8.0, 30.0] {
                    let br = best_response_utility(&gp, b, variant).unwrap();
                    let ex = exhaustive(&gp, b, variant);
                    assert!((br.utility - ex).abs() < 1e-9, "{variant:?} d={d} r={r} k={k} b={b}: {} vs {ex}", br.utility);
                    let again = dp_expected_utility(&gp, &br.strategy, b, variant).unwrap();
                    assert!((again - br.utility).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn bound_deters_and_is_nearly_tight() {
        let gp = GameParams { m: 4, p: 0.1, beta: 1.0, tau: 10, d: 2, r: 2, k: 6 };
        for (variant, bound) in [
            (Variant::Exact, penalty_lower_bound_exact(&gp).unwrap()),
            (Variant::Independent, penalty_lower_bound_independent(&gp).unwrap()),
        ] {
            assert!(best_response_utility(&gp, bound + 1e-6, variant).unwrap().utility <= 0.0);
            let need = required_penalty(&gp, variant).unwrap();
            assert!(need <= bound + 1e-6);
            // Early rounds have the full exit window, so the bound is close to attained.
            assert!(need > 0.97 * bound, "{need} vs {bound}");
            assert!(best_response_utility(&gp, 0.9 * need, variant).unwrap().utility > 0.0);
        }
    }

    #[test]
    fn search_space_cap() {
        let gp = GameParams { m: 5, p: 0.01, beta: 1.0, tau: 1000, d: 6, r: 6, k: 10 };
        assert!(matches!(best_response_utility(&gp, 1.0, Variant::Exact), Err(EconError::SearchSpace { .. })));
    }

    #[test]
    fn monte_carlo_zero_probability() {
        let gp = GameParams { p: 0.0, tau: 4, ..small() };
        let mc = monte_carlo_utility(&gp, &[4, 4, 4], 10.0, Variant::Independent, 10_000, 3).unwrap();
        assert_eq!(mc.mean, 0.0);
    }

    #[test]
    fn monte_carlo_is_deterministic_and_agrees() {
        let gp = GameParams { m: 3, p: 0.1, beta: 1.0, tau: 20, d: 2, r: 2, k: 5 };
        let y = [5, 18, 0, 3, 10];
        for variant in [Variant::Exact, Variant::Independent] {
            let a = monte_carlo_utility(&gp, &y, 20.0, variant, 20_000, 9).unwrap();
            let b = monte_carlo_utility(&gp, &y, 20.0, variant, 20_000, 9).unwrap();
            assert_eq!(a, b);
            let dp = dp_expected_utility(&gp, &y, 20.0, variant).unwrap();
            assert!((a.mean - dp).abs() < 5.0 * a.std_err, "{variant:?}: {dp} vs {a:?}");
        }
    }
}
