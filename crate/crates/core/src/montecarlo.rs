//! Forward-play oracle: sample the two price transitions that decisions
//! depend on, replay the derived stage policies and tally outcomes.
//! Replications draw from substreams indexed by `(seed, replication)`, so
//! estimates are bit-identical regardless of how work is scheduled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::baseline::{self, BaselinePolicy};
use crate::collateral::{self, CollateralPolicy, CollateralScenario};
use crate::error::{Error, Result};
use crate::flexible::LockCurve;
use crate::scenario::{AgentOutcome, AssetKind, GameOutcome, Scenario};

/// Replication count and master seed for an estimation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimConfig {
    pub n_replications: u64,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(n_replications: u64, seed: u64) -> Result<Self> {
        if n_replications == 0 {
            return Err(Error::domain("at least one replication is required"));
        }
        Ok(Self {
            n_replications,
            seed,
        })
    }
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n: u64,
}

/// Scenario under a chosen protocol variant.
#[derive(Debug, Clone, Copy)]
pub enum VariantScenario<'a> {
    Baseline(&'a Scenario),
    Collateral(&'a CollateralScenario),
    /// Flexible lock amounts; the scenario's `p_star` is Alice's committed
    /// Token_a amount.
    Flexible(&'a Scenario),
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent generator for one replication, derived from
/// `(seed, replication)` rather than from worker identity.
pub fn substream(seed: u64, replication: u64) -> ChaCha12Rng {
    let mut state = seed ^ replication.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha12Rng::from_seed(key)
}

/// Plays one baseline swap forward from t1 under the derived policy.
/// Utilities are discounted to t1 with the success premium applied; the
/// value of a Token_b receipt is its expected price at receipt time.
pub fn simulate_swap<R: Rng + ?Sized>(
    s: &Scenario,
    policy: &BaselinePolicy,
    rng: &mut R,
) -> Result<GameOutcome> {
    policy.check_scenario(s)?;
    let tl = &s.timeline;
    let p2 = s.market.sample_price(s.p1(), tl.tau_a(), rng)?;
    if !policy.p2_range.is_some_and(|r| r.contains(p2)) {
        return Ok(bob_stopped_outcome(s, p2, 1.0, 0.0, 0.0));
    }
    let p3 = s.market.sample_price(p2, tl.tau_b(), rng)?;
    if p3 > policy.p3_lower {
        Ok(success_outcome(s, p3, 1.0, 0.0, 0.0))
    } else {
        Ok(alice_waived_outcome(s, p3, 1.0, 0.0, 0.0))
    }
}

/// Plays one collateralized swap forward from t1.
pub fn simulate_swap_collateral<R: Rng + ?Sized>(
    cs: &CollateralScenario,
    policy: &CollateralPolicy,
    rng: &mut R,
) -> Result<GameOutcome> {
    policy.check_scenario(cs)?;
    let s = &cs.base;
    let tl = &s.timeline;
    let q = cs.q();
    // Receipt lags for the oracle's releases, measured from t1.
    let dt_release_t3 = tl.t3() + tl.tau_a();
    let dt_release_t4 = tl.t4() + tl.tau_a();
    let p2 = s.market.sample_price(s.p1(), tl.tau_a(), rng)?;
    if !policy.p2_set.contains(p2) {
        let alice_extra = 2.0 * q * s.alice.discount(dt_release_t3);
        return Ok(bob_stopped_outcome(s, p2, 1.0, alice_extra, 0.0));
    }
    let p3 = s.market.sample_price(p2, tl.tau_b(), rng)?;
    if p3 > policy.p3_lower {
        let alice_extra = q * s.alice.discount(dt_release_t4);
        let bob_extra = q * s.bob.discount(dt_release_t3);
        Ok(success_outcome(s, p3, 1.0, alice_extra, bob_extra))
    } else {
        let bob_extra = q * s.bob.discount(dt_release_t3) + q * s.bob.discount(dt_release_t4);
        Ok(alice_waived_outcome(s, p3, 1.0, 0.0, bob_extra))
    }
}

/// Plays one flexible-amount swap forward from t1 under Bob's tabulated
/// lock rule. Bob's utility is his realized excess over retaining the
/// locked tokens, matching the stage objective he maximizes.
pub fn simulate_swap_flexible<R: Rng + ?Sized>(
    s: &Scenario,
    curve: &LockCurve,
    rng: &mut R,
) -> Result<GameOutcome> {
    if curve.fingerprint != s.with_p_star(curve.p_star())?.fingerprint() {
        return Err(Error::domain(
            "lock rule was derived for a different scenario",
        ));
    }
    let sv = s.with_p_star(curve.p_star())?;
    let tl = &sv.timeline;
    let p2 = sv.market.sample_price(sv.p1(), tl.tau_a(), rng)?;
    let x = curve.lock_amount(p2);
    if x <= 1e-9 {
        let mut outcome = bob_stopped_outcome(&sv, p2, 0.0, 0.0, 0.0);
        outcome.bob.utility = 0.0;
        outcome.bob.value = 0.0;
        return Ok(outcome);
    }
    let retained = x * p2 * sv.bob.discount(tl.t2());
    let p3 = sv.market.sample_price(p2, tl.tau_b(), rng)?;
    if p3 > curve.threshold(p2) {
        let mut outcome = success_outcome(&sv, p3, x, 0.0, -retained);
        outcome.alice.amount = x;
        outcome.alice.value *= x;
        outcome.alice.utility *= x;
        Ok(outcome)
    } else {
        let mut outcome = alice_waived_outcome(&sv, p3, x, 0.0, -retained);
        outcome.bob.amount = x;
        outcome.bob.value *= x;
        outcome.bob.utility = outcome.bob.value * sv.bob.discount(tl.t7()) - retained;
        Ok(outcome)
    }
}

fn success_outcome(
    s: &Scenario,
    p3: f64,
    _amount: f64,
    alice_extra: f64,
    bob_extra: f64,
) -> GameOutcome {
    let tl = &s.timeline;
    let m = &s.market;
    let value_b = p3 * (m.mu() * tl.tau_b()).exp();
    GameOutcome {
        success: true,
        alice: AgentOutcome {
            asset: AssetKind::TokenB,
            amount: 1.0,
            value: value_b,
            receipt_time: tl.t5(),
            utility: (1.0 + s.alice.alpha()) * value_b * s.alice.discount(tl.t5()) + alice_extra,
        },
        bob: AgentOutcome {
            asset: AssetKind::TokenA,
            amount: s.p_star(),
            value: s.p_star(),
            receipt_time: tl.t6(),
            utility: (1.0 + s.bob.alpha()) * s.p_star() * s.bob.discount(tl.t6()) + bob_extra,
        },
    }
}

fn alice_waived_outcome(
    s: &Scenario,
    p3: f64,
    amount_b: f64,
    alice_extra: f64,
    bob_extra: f64,
) -> GameOutcome {
    let tl = &s.timeline;
    let m = &s.market;
    let value_b = p3 * (2.0 * m.mu() * tl.tau_b()).exp();
    GameOutcome {
        success: false,
        alice: AgentOutcome {
            asset: AssetKind::TokenA,
            amount: s.p_star(),
            value: s.p_star(),
            receipt_time: tl.t8(),
            utility: s.p_star() * s.alice.discount(tl.t8()) + alice_extra,
        },
        bob: AgentOutcome {
            asset: AssetKind::TokenB,
            amount: amount_b,
            value: value_b,
            receipt_time: tl.t7(),
            utility: value_b * s.bob.discount(tl.t7()) + bob_extra,
        },
    }
}

fn bob_stopped_outcome(
    s: &Scenario,
    p2: f64,
    amount_b: f64,
    alice_extra: f64,
    bob_extra: f64,
) -> GameOutcome {
    let tl = &s.timeline;
    GameOutcome {
        success: false,
        alice: AgentOutcome {
            asset: AssetKind::TokenA,
            amount: s.p_star(),
            value: s.p_star(),
            receipt_time: tl.t8(),
            utility: s.p_star() * s.alice.discount(tl.t8()) + alice_extra,
        },
        bob: AgentOutcome {
            asset: AssetKind::TokenB,
            amount: amount_b,
            value: p2,
            receipt_time: tl.t2(),
            utility: p2 * s.bob.discount(tl.t2()) + bob_extra,
        },
    }
}

/// Binomial success-rate estimate from `cfg.n_replications` independent
/// forward plays. Requires a feasible exchange rate for the variant.
pub fn estimate_success_rate(vs: VariantScenario<'_>, cfg: &SimConfig) -> Result<SimEstimate> {
    let successes: u64 = match vs {
        VariantScenario::Baseline(s) => {
            let u = baseline::utilities_t1(s.p1(), s)?;
            if u.alice_cont <= s.p_star() {
                return Err(Error::NotInitiated { p_star: s.p_star() });
            }
            let policy = baseline::derive_policy(s)?;
            run_bernoulli(cfg, |rng| simulate_swap(s, &policy, rng).map(|o| o.success))?
        }
        VariantScenario::Collateral(cs) => {
            let u = collateral::utilities_t1_collateral(cs.base.p1(), cs)?;
            let bob_ok = cs.q() == 0.0 || u.bob_cont > u.bob_stop;
            if !(u.alice_cont > u.alice_stop && bob_ok) {
                return Err(Error::NotInitiated {
                    p_star: cs.base.p_star(),
                });
            }
            let policy = collateral::derive_policy(cs)?;
            run_bernoulli(cfg, |rng| {
                simulate_swap_collateral(cs, &policy, rng).map(|o| o.success)
            })?
        }
        VariantScenario::Flexible(s) => {
            let curve = LockCurve::build(s.p_star(), s)?;
            run_bernoulli(cfg, |rng| {
                simulate_swap_flexible(s, &curve, rng).map(|o| o.success)
            })?
        }
    };
    let n = cfg.n_replications;
    let mean = successes as f64 / n as f64;
    Ok(SimEstimate {
        mean,
        std_error: binomial_std_error(mean, n),
        n,
    })
}

/// `sqrt(p(1-p)/n)`, zero for a single replication or a degenerate rate.
pub fn binomial_std_error(p_hat: f64, n: u64) -> f64 {
    if n <= 1 || p_hat <= 0.0 || p_hat >= 1.0 {
        return 0.0;
    }
    (p_hat * (1.0 - p_hat) / n as f64).sqrt()
}

fn run_bernoulli<F>(cfg: &SimConfig, play: F) -> Result<u64>
where
    F: Fn(&mut ChaCha12Rng) -> Result<bool> + Sync,
{
    (0..cfg.n_replications)
        .into_par_iter()
        .try_fold(
            || 0u64,
            |acc, r| {
                let mut rng = substream(cfg.seed, r);
                Ok(acc + play(&mut rng)? as u64)
            },
        )
        .try_reduce(|| 0u64, |a, b| Ok(a + b))
}

/// Mean and standard error of a per-replication statistic; used by the
/// verification suites to cross-check stage utilities.
pub fn estimate_statistic<F>(cfg: &SimConfig, stat: F) -> Result<SimEstimate>
where
    F: Fn(&mut ChaCha12Rng) -> Result<f64> + Sync,
{
    let (sum, sum_sq) = (0..cfg.n_replications)
        .into_par_iter()
        .try_fold(
            || (0.0f64, 0.0f64),
            |acc, r| {
                let mut rng = substream(cfg.seed, r);
                let v = stat(&mut rng)?;
                Ok((acc.0 + v, acc.1 + v * v))
            },
        )
        .try_reduce(|| (0.0, 0.0), |a, b| Ok((a.0 + b.0, a.1 + b.1)))?;
    let n = cfg.n_replications as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0);
    let std_error = if cfg.n_replications > 1 {
        (var / n).sqrt()
    } else {
        0.0
    };
    Ok(SimEstimate {
        mean,
        std_error,
        n: cfg.n_replications,
    })
}
