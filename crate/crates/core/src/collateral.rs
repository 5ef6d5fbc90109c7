//! Collateralized variant of the swap game: both agents escrow `Q` Token_a
//! with an oracle that returns it on compliance and forfeits it to the
//! counterparty on a unilateral stop.

use rayon::prelude::*;

use crate::baseline::{
    self, grid_integral, mean_slice, refine_scan_roots, scan_t2_roots, StageConstants,
    StageUtilities, PSTAR_SCAN,
};
use crate::error::{Error, Result};
use crate::numerics::{IntegrationConfig, Interval, IntervalSet};
use crate::scenario::Scenario;

/// A baseline scenario plus the per-agent collateral amount.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollateralScenario {
    pub base: Scenario,
    q: f64,
}

impl CollateralScenario {
    pub fn new(base: Scenario, q: f64) -> Result<Self> {
        if !q.is_finite() || q < 0.0 {
            return Err(Error::domain(format!(
                "collateral must be non-negative, got {q}"
            )));
        }
        Ok(Self { base, q })
    }

    /// Collateral posted by each agent (Token_a).
    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn with_p_star(&self, p_star: f64) -> Result<Self> {
        Ok(Self {
            base: self.base.with_p_star(p_star)?,
            q: self.q,
        })
    }

    pub(crate) fn fingerprint(&self) -> u64 {
        (self.base.fingerprint() ^ self.q.to_bits()).wrapping_mul(0x2545_f491_4f6c_dd1d)
    }
}

/// Stage decision rules for the collateral variant. Bob's t2 continuation
/// region may consist of one or two intervals, the lowest anchored at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct CollateralPolicy {
    pub p3_lower: f64,
    pub p2_set: IntervalSet,
    pub pstar_set: Option<IntervalSet>,
    pub(crate) fingerprint: u64,
}

impl CollateralPolicy {
    pub(crate) fn check_scenario(&self, cs: &CollateralScenario) -> Result<()> {
        if self.fingerprint != cs.fingerprint() {
            return Err(Error::domain("policy was derived for a different scenario"));
        }
        Ok(())
    }
}

/// Per-scenario constants extending [`StageConstants`] with the discounted
/// collateral flows.
#[derive(Debug, Clone, Copy)]
pub(crate) struct CollateralConstants {
    pub base: StageConstants,
    pub thr3c: f64,
    /// Alice's collateral back at t4 + tau_a, discounted to t3.
    pub q_a_success: f64,
    /// Bob's own collateral back at t3 + tau_a, discounted to t3.
    pub q_b_returned: f64,
    /// Alice's collateral forfeited to Bob at t4 + tau_a, discounted to t3.
    pub q_b_forfeit: f64,
    /// Both collaterals to Alice at t3 + tau_a when Bob stops at t2,
    /// discounted to t2, on top of her Token_a refund.
    pub a2_stop_c: f64,
}

impl CollateralConstants {
    pub(crate) fn new(cs: &CollateralScenario, cfg: &IntegrationConfig) -> Self {
        let s = &cs.base;
        let base = StageConstants::new(s, cfg);
        let tl = &s.timeline;
        let (tau_a, tau_b, eps_b) = (tl.tau_a(), tl.tau_b(), tl.eps_b());
        Self {
            base,
            thr3c: threshold_t3_collateral(cs),
            q_a_success: cs.q * s.alice.discount(eps_b + tau_a),
            q_b_returned: cs.q * s.bob.discount(tau_a),
            q_b_forfeit: cs.q * s.bob.discount(eps_b + tau_a),
            a2_stop_c: base.a2_stop + 2.0 * cs.q * s.alice.discount(tau_b + tau_a),
        }
    }
}

/// Alice's reveal threshold with collateral: the forfeited deposit lowers
/// the cut-off, reaching zero once `Q >= P* e^{-r^A tau_a}`.
pub fn threshold_t3_collateral(cs: &CollateralScenario) -> f64 {
    let s = &cs.base;
    let (a, tl, m) = (&s.alice, &s.timeline, &s.market);
    let (tau_a, tau_b, eps_b) = (tl.tau_a(), tl.tau_b(), tl.eps_b());
    let stake = s.p_star() * a.discount(eps_b + 2.0 * tau_a) - cs.q * a.discount(eps_b + tau_a);
    ((a.r() - m.mu()) * tau_b).exp() / (1.0 + a.alpha()) * stake.max(0.0)
}

pub(crate) fn alice_cont_t2_collateral(
    c: &CollateralConstants,
    s: &Scenario,
    p2: f64,
    cfg: &IntegrationConfig,
) -> Result<f64> {
    let m = &s.market;
    let b = &c.base;
    let upper = mean_slice(
        m,
        p2,
        b.tau_b,
        c.thr3c,
        f64::INFINITY,
        (p2 * b.tb_tail_lo, p2 * b.tb_tail_hi),
        cfg,
    )?;
    let below = m.cdf_raw(c.thr3c, p2, b.tau_b);
    Ok((b.a3_cont_coef * upper + (1.0 - below) * c.q_a_success + below * b.a3_stop) * b.disc_a_tb)
}

pub(crate) fn bob_cont_t2_collateral(
    c: &CollateralConstants,
    s: &Scenario,
    p2: f64,
    cfg: &IntegrationConfig,
) -> Result<f64> {
    let m = &s.market;
    let b = &c.base;
    let lower = mean_slice(
        m,
        p2,
        b.tau_b,
        0.0,
        c.thr3c,
        (p2 * b.tb_tail_lo, p2 * b.tb_tail_hi),
        cfg,
    )?;
    let below = m.cdf_raw(c.thr3c, p2, b.tau_b);
    Ok((c.q_b_returned
        + (1.0 - below) * b.b3_cont
        + b.b3_stop_coef * lower
        + below * c.q_b_forfeit)
        * b.disc_b_tb)
}

/// Both agents' t2 utilities with the discounted collateral flows added to
/// every continuation branch. `alice_stop` is Alice's value when Bob stops:
/// her refund plus both deposits.
pub fn utilities_t2_collateral(p2: f64, cs: &CollateralScenario) -> Result<StageUtilities> {
    if !p2.is_finite() || p2 <= 0.0 {
        return Err(Error::domain(format!(
            "t2 price must be positive, got {p2}"
        )));
    }
    let cfg = IntegrationConfig::default();
    let c = CollateralConstants::new(cs, &cfg);
    Ok(StageUtilities {
        alice_cont: alice_cont_t2_collateral(&c, &cs.base, p2, &cfg)?,
        alice_stop: c.a2_stop_c,
        bob_cont: bob_cont_t2_collateral(&c, &cs.base, p2, &cfg)?,
        bob_stop: p2,
    })
}

/// Prices at t2 where Bob prefers continuing. With `Q > 0` the deposit
/// guarantee makes continuation dominant near zero, so the crossing count
/// is odd (one or three); `Q = 0` reduces to the baseline interval.
pub fn feasible_set_t2_collateral(cs: &CollateralScenario) -> Result<IntervalSet> {
    if cs.q == 0.0 {
        return Ok(match baseline::feasible_range_t2(&cs.base)? {
            Some(iv) => IntervalSet::new(vec![iv])?,
            None => IntervalSet::empty(),
        });
    }
    let cfg = IntegrationConfig::default();
    let c = CollateralConstants::new(cs, &cfg);
    let g = |p2: f64| Ok(bob_cont_t2_collateral(&c, &cs.base, p2, &cfg)? - p2);
    let roots = scan_t2_roots(g, &cs.base, cs.q, c.thr3c)?;
    if roots.len() % 2 == 0 {
        return Err(Error::RootCount {
            expected: "odd (1 or 3)",
            found: roots.len(),
        });
    }
    // Continuation holds from the origin to the first crossing, then
    // alternates.
    let mut intervals = Vec::new();
    let mut lo = 0.0;
    for (i, &r) in roots.iter().enumerate() {
        if i % 2 == 0 {
            intervals.push(Interval::new(lo, r)?);
        } else {
            lo = r;
        }
    }
    IntervalSet::new(intervals)
}

fn alice_cont_t1_collateral(cs: &CollateralScenario, cfg: &IntegrationConfig) -> Result<f64> {
    let s = &cs.base;
    let c = CollateralConstants::new(cs, cfg);
    let set = feasible_set_t2_collateral(cs)?;
    let m = &s.market;
    let p1 = s.p1();
    let tau_a = s.timeline.tau_a();
    if set.is_empty() {
        return Ok(c.a2_stop_c * s.alice.discount(tau_a));
    }
    let mut integral = 0.0;
    let mut mass_in = 0.0;
    for iv in set.intervals() {
        integral += grid_integral(
            s,
            p1,
            *iv,
            &|p2| alice_cont_t2_collateral(&c, s, p2, cfg),
            cfg,
        )?;
        mass_in += m.cdf_raw(iv.hi(), p1, tau_a) - m.cdf_raw(iv.lo(), p1, tau_a);
    }
    Ok((integral + (1.0 - mass_in) * c.a2_stop_c) * s.alice.discount(tau_a))
}

fn bob_cont_t1_collateral(cs: &CollateralScenario, cfg: &IntegrationConfig) -> Result<f64> {
    let s = &cs.base;
    let c = CollateralConstants::new(cs, cfg);
    let set = feasible_set_t2_collateral(cs)?;
    let m = &s.market;
    let p1 = s.p1();
    let tau_a = s.timeline.tau_a();
    let q_lo = m.quantile_raw(p1, tau_a, cfg.tail_mass);
    let q_hi = m.quantile_raw(p1, tau_a, 1.0 - cfg.tail_mass);
    // Complement mass keeps Token_b: E[x] minus the continuation slices.
    let mut kept = mean_slice(m, p1, tau_a, 0.0, f64::INFINITY, (q_lo, q_hi), cfg)?;
    let mut integral = 0.0;
    for iv in set.intervals() {
        integral += grid_integral(
            s,
            p1,
            *iv,
            &|p2| bob_cont_t2_collateral(&c, s, p2, cfg),
            cfg,
        )?;
        kept -= mean_slice(m, p1, tau_a, iv.lo(), iv.hi(), (q_lo, q_hi), cfg)?;
    }
    Ok((integral + kept.max(0.0)) * s.bob.discount(tau_a))
}

/// Both agents' t1 utilities for the simultaneous engage/decline decision.
/// Stopping keeps the original token plus the deposit.
pub fn utilities_t1_collateral(p1: f64, cs: &CollateralScenario) -> Result<StageUtilities> {
    if !p1.is_finite() || p1 <= 0.0 {
        return Err(Error::domain(format!(
            "t1 price must be positive, got {p1}"
        )));
    }
    if (p1 - cs.base.p1()).abs() > f64::EPSILON * p1 {
        return Err(Error::domain(
            "t1 price must equal the scenario's initial price under the \
             zero-waiting-time schedule",
        ));
    }
    let cfg = IntegrationConfig::default();
    Ok(StageUtilities {
        alice_cont: alice_cont_t1_collateral(cs, &cfg)?,
        alice_stop: cs.base.p_star() + cs.q,
        bob_cont: bob_cont_t1_collateral(cs, &cfg)?,
        bob_stop: p1 + cs.q,
    })
}

/// Exchange rates both agents accept at t1: the intersection of Alice's
/// and Bob's continuation regions over the scan window `[0.1 p1, 5 p1]`.
/// With `Q = 0` Bob commits nothing at t1, his comparison is vacuous and
/// only Alice's side binds. The scenario's own `p_star` is ignored.
pub fn feasible_set_pstar_collateral(cs: &CollateralScenario) -> Result<IntervalSet> {
    let cfg = IntegrationConfig::default();
    let p1 = cs.base.p1();
    let (lo, hi) = (0.1 * p1, 5.0 * p1);
    let n = PSTAR_SCAN;
    let xs: Vec<f64> = (0..=n)
        .map(|i| lo + (hi - lo) * i as f64 / n as f64)
        .collect();

    let h_alice = |ps: f64| -> Result<f64> {
        let cv = cs.with_p_star(ps)?;
        Ok(alice_cont_t1_collateral(&cv, &cfg)? - (ps + cs.q))
    };
    let alice_set = positive_set(&xs, &h_alice, lo, hi)?;
    if cs.q == 0.0 {
        return Ok(alice_set);
    }
    let h_bob = |ps: f64| -> Result<f64> {
        let cv = cs.with_p_star(ps)?;
        Ok(bob_cont_t1_collateral(&cv, &cfg)? - (p1 + cs.q))
    };
    let bob_set = positive_set(&xs, &h_bob, lo, hi)?;
    Ok(alice_set.intersect(&bob_set))
}

/// Region of the scan window where `h > 0`, assembled from refined sign
/// changes and the endpoint signs.
fn positive_set<H: Fn(f64) -> Result<f64> + Sync>(
    xs: &[f64],
    h: &H,
    lo: f64,
    hi: f64,
) -> Result<IntervalSet> {
    let vals = xs.par_iter().map(|&x| h(x)).collect::<Result<Vec<f64>>>()?;
    let roots = refine_scan_roots(xs, &vals, h)?;
    let mut positive = vals[0] > 0.0;
    let mut intervals = Vec::new();
    let mut seg_lo = lo;
    for &r in &roots {
        if positive {
            if seg_lo < r {
                intervals.push(Interval::new(seg_lo, r)?);
            }
        } else {
            seg_lo = r;
        }
        positive = !positive;
    }
    if positive && seg_lo < hi {
        intervals.push(Interval::new(seg_lo, hi)?);
    }
    IntervalSet::new(intervals)
}

/// Completion probability of an initiated collateralized swap.
pub fn success_rate_collateral(cs: &CollateralScenario) -> Result<f64> {
    let cfg = IntegrationConfig::default();
    let ps = cs.base.p_star();
    let alice_ok = alice_cont_t1_collateral(cs, &cfg)? > ps + cs.q;
    let bob_ok = cs.q == 0.0 || bob_cont_t1_collateral(cs, &cfg)? > cs.base.p1() + cs.q;
    if !(alice_ok && bob_ok) {
        return Err(Error::NotInitiated { p_star: ps });
    }
    conditional_success_rate_collateral(cs)
}

/// Completion probability given initiation, summed over Bob's t2
/// continuation intervals.
pub fn conditional_success_rate_collateral(cs: &CollateralScenario) -> Result<f64> {
    let set = feasible_set_t2_collateral(cs)?;
    baseline::sr_integral(&cs.base, set.intervals(), threshold_t3_collateral(cs))
}

/// Derives the stage policy without the exchange-rate scan.
pub fn derive_policy(cs: &CollateralScenario) -> Result<CollateralPolicy> {
    Ok(CollateralPolicy {
        p3_lower: threshold_t3_collateral(cs),
        p2_set: feasible_set_t2_collateral(cs)?,
        pstar_set: None,
        fingerprint: cs.fingerprint(),
    })
}

/// Full solution including the viable exchange-rate set at t1.
pub fn solve(cs: &CollateralScenario) -> Result<CollateralPolicy> {
    let mut policy = derive_policy(cs)?;
    policy.pstar_set = Some(feasible_set_pstar_collateral(cs)?);
    Ok(policy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn with_q(q: f64) -> CollateralScenario {
        CollateralScenario::new(Scenario::default(), q).unwrap()
    }

    #[test]
    fn zero_collateral_threshold_matches_baseline() {
        let cs = with_q(0.0);
        assert_eq!(
            threshold_t3_collateral(&cs),
            baseline::threshold_t3(&cs.base)
        );
    }

    #[test]
    fn threshold_switch_point() {
        // Alice always reveals once the deposit covers her refund value:
        // Q >= P* e^{-r^A tau_a} = 2 e^{-0.03}.
        let switch = 2.0 * (-0.03f64).exp();
        assert_relative_eq!(switch, 1.940_891_067_097_016_4, epsilon = 1e-12);
        assert!(threshold_t3_collateral(&with_q(switch)) < 1e-14);
        assert_eq!(threshold_t3_collateral(&with_q(switch + 0.01)), 0.0);
        assert!(threshold_t3_collateral(&with_q(switch - 0.01)) > 1e-5);
    }

    #[test]
    fn threshold_decreases_with_collateral() {
        let t0 = threshold_t3_collateral(&with_q(0.0));
        let t1 = threshold_t3_collateral(&with_q(0.1));
        assert!(t1 < t0);
        assert!(t1 > 0.0);
    }

    #[test]
    fn zero_collateral_t2_utilities_match_baseline() {
        let cs = with_q(0.0);
        for &p2 in &[0.9, 1.5, 2.0, 2.8] {
            let a = utilities_t2_collateral(p2, &cs).unwrap();
            let b = baseline::utilities_t2(p2, &cs.base).unwrap();
            assert!((a.alice_cont - b.alice_cont).abs() < 1e-10);
            assert!((a.bob_cont - b.bob_cont).abs() < 1e-10);
            assert!((a.alice_stop - b.alice_stop).abs() < 1e-10);
            assert_eq!(a.bob_stop, b.bob_stop);
        }
    }

    #[test]
    fn worthless_token_does_not_tempt_bob() {
        // Near-zero prices: walking away forfeits the deposit, so
        // continuation dominates.
        let cs = with_q(0.1);
        let u = utilities_t2_collateral(1e-3, &cs).unwrap();
        assert!(u.bob_cont > u.bob_stop);
    }

    #[test]
    fn feasible_set_membership_verified_at_probes() {
        let cs = with_q(0.1);
        let set = feasible_set_t2_collateral(&cs).unwrap();
        assert!(!set.is_empty());
        for iv in set.intervals() {
            let mid = iv.midpoint().max(1e-6);
            let u = utilities_t2_collateral(mid, &cs).unwrap();
            assert!(u.bob_cont > u.bob_stop, "midpoint {mid} not feasible");
            let past = iv.hi() + 0.05;
            let u = utilities_t2_collateral(past, &cs).unwrap();
            assert!(u.bob_cont < u.bob_stop, "{past} past the boundary");
        }
    }

    #[test]
    fn zero_collateral_set_reduces_to_baseline_interval() {
        let cs = with_q(0.0);
        let set = feasible_set_t2_collateral(&cs).unwrap();
        let base = baseline::feasible_range_t2(&cs.base).unwrap().unwrap();
        assert_eq!(set.intervals().len(), 1);
        let iv = set.intervals()[0];
        assert!((iv.lo() - base.lo()).abs() < 1e-8);
        assert!((iv.hi() - base.hi()).abs() < 1e-8);
    }

    #[test]
    fn small_collateral_gives_three_crossings() {
        let cs = with_q(0.01);
        let set = feasible_set_t2_collateral(&cs).unwrap();
        assert_eq!(set.intervals().len(), 2, "expected (0,r1) and (r2,r3)");
        assert_eq!(set.intervals()[0].lo(), 0.0);
    }

    #[test]
    fn large_collateral_gives_single_crossing() {
        let cs = with_q(0.1);
        let set = feasible_set_t2_collateral(&cs).unwrap();
        assert_eq!(set.intervals().len(), 1);
        assert_eq!(set.intervals()[0].lo(), 0.0);
    }

    #[test]
    fn pstar_intersection_is_subset_of_each_side() {
        let cs = with_q(0.1);
        let both = feasible_set_pstar_collateral(&cs).unwrap();
        assert!(!both.is_empty());
        let cfg = IntegrationConfig::default();
        let hull = both.hull().unwrap();
        for ps in [hull.lo() + 1e-3, hull.midpoint(), hull.hi() - 1e-3] {
            if !both.contains(ps) {
                continue;
            }
            let cv = cs.with_p_star(ps).unwrap();
            assert!(alice_cont_t1_collateral(&cv, &cfg).unwrap() > ps + cs.q());
            assert!(bob_cont_t1_collateral(&cv, &cfg).unwrap() > cs.base.p1() + cs.q());
        }
    }

    #[test]
    fn zero_collateral_pstar_set_matches_baseline_range() {
        let cs = with_q(0.0);
        let set = feasible_set_pstar_collateral(&cs).unwrap();
        let base = baseline::feasible_range_pstar(&cs.base).unwrap().unwrap();
        assert_eq!(set.intervals().len(), 1);
        let iv = set.intervals()[0];
        assert!((iv.lo() - base.lo()).abs() < 1e-6);
        assert!((iv.hi() - base.hi()).abs() < 1e-6);
    }

    #[test]
    fn zero_collateral_success_rate_matches_baseline() {
        let cs = with_q(0.0);
        let a = success_rate_collateral(&cs).unwrap();
        let b = baseline::success_rate(&cs.base).unwrap();
        assert!((a - b).abs() < 1e-8);
    }

    #[test]
    fn collateral_rejects_negative_deposit() {
        assert!(CollateralScenario::new(Scenario::default(), -0.1).is_err());
    }
}
