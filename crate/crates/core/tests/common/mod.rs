//! Shared Monte Carlo oracles: realized discounted payoffs written out
//! branch by branch, independent of the solver's quadrature path.
#![allow(dead_code)] // each test binary uses a different subset

use swap_game::collateral::CollateralScenario;
use swap_game::montecarlo::{estimate_statistic, SimConfig, SimEstimate};
use swap_game::Scenario;

/// Realized t2-stage utilities for both agents: sample the t3 price, apply
/// the reveal threshold and discount each branch back to t2.
pub fn mc_utilities_t2(
    s: &Scenario,
    p2: f64,
    thr: f64,
    cfg: &SimConfig,
) -> (SimEstimate, SimEstimate) {
    let tl = &s.timeline;
    let (tau_a, tau_b, eps_b) = (tl.tau_a(), tl.tau_b(), tl.eps_b());
    let (m, ps) = (&s.market, s.p_star());
    let alice = estimate_statistic(cfg, |rng| {
        let p3 = m.sample_price(p2, tau_b, rng)?;
        Ok(if p3 > thr {
            (1.0 + s.alice.alpha()) * p3 * (m.mu() * tau_b).exp() * s.alice.discount(2.0 * tau_b)
        } else {
            ps * s.alice.discount(tau_b + eps_b + 2.0 * tau_a)
        })
    })
    .unwrap();
    let bob = estimate_statistic(cfg, |rng| {
        let p3 = m.sample_price(p2, tau_b, rng)?;
        Ok(if p3 > thr {
            (1.0 + s.bob.alpha()) * ps * s.bob.discount(tau_b + eps_b + tau_a)
        } else {
            p3 * (2.0 * m.mu() * tau_b).exp() * s.bob.discount(3.0 * tau_b)
        })
    })
    .unwrap();
    (alice, bob)
}

/// Same as [`mc_utilities_t2`] with the oracle's collateral flows added.
pub fn mc_utilities_t2_collateral(
    cs: &CollateralScenario,
    p2: f64,
    thr: f64,
    cfg: &SimConfig,
) -> (SimEstimate, SimEstimate) {
    let s = &cs.base;
    let q = cs.q();
    let tl = &s.timeline;
    let (tau_a, tau_b, eps_b) = (tl.tau_a(), tl.tau_b(), tl.eps_b());
    let (m, ps) = (&s.market, s.p_star());
    let alice = estimate_statistic(cfg, |rng| {
        let p3 = m.sample_price(p2, tau_b, rng)?;
        Ok(if p3 > thr {
            (1.0 + s.alice.alpha()) * p3 * (m.mu() * tau_b).exp() * s.alice.discount(2.0 * tau_b)
                + q * s.alice.discount(tau_b + eps_b + tau_a)
        } else {
            ps * s.alice.discount(tau_b + eps_b + 2.0 * tau_a)
        })
    })
    .unwrap();
    let bob = estimate_statistic(cfg, |rng| {
        let p3 = m.sample_price(p2, tau_b, rng)?;
        let own = q * s.bob.discount(tau_b + tau_a);
        Ok(if p3 > thr {
            (1.0 + s.bob.alpha()) * ps * s.bob.discount(tau_b + eps_b + tau_a) + own
        } else {
            p3 * (2.0 * m.mu() * tau_b).exp() * s.bob.discount(3.0 * tau_b)
                + own
                + q * s.bob.discount(tau_b + eps_b + tau_a)
        })
    })
    .unwrap();
    (alice, bob)
}

/// Bob's realized excess utility at t2 from locking `x` Token_b.
pub fn mc_bob_excess_flexible(
    s: &Scenario,
    p2: f64,
    x: f64,
    p_star: f64,
    cfg: &SimConfig,
) -> SimEstimate {
    let sv = s.with_p_star(p_star).unwrap();
    let tl = &sv.timeline;
    let (tau_a, tau_b, eps_b) = (tl.tau_a(), tl.tau_b(), tl.eps_b());
    let m = &sv.market;
    let thr = swap_game::baseline::threshold_t3(&sv) / x;
    estimate_statistic(cfg, |rng| {
        let p3 = m.sample_price(p2, tau_b, rng)?;
        let gross = if p3 > thr {
            (1.0 + sv.bob.alpha()) * p_star * sv.bob.discount(tau_b + eps_b + tau_a)
        } else {
            x * p3 * (2.0 * m.mu() * tau_b).exp() * sv.bob.discount(3.0 * tau_b)
        };
        Ok(gross - x * p2)
    })
    .unwrap()
}

/// Asserts a quadrature value against a Monte Carlo estimate within three
/// standard errors, treating a zero standard error as an exact match.
pub fn assert_within_3se(label: &str, quad: f64, est: &SimEstimate) {
    if est.std_error == 0.0 {
        assert!(
            (quad - est.mean).abs() < 1e-12,
            "{label}: quadrature {quad} vs degenerate estimate {}",
            est.mean
        );
        return;
    }
    let z = (est.mean - quad) / est.std_error;
    assert!(
        z.abs() <= 3.0,
        "{label}: quadrature {quad} vs MC {} +- {} (z = {z:.2})",
        est.mean,
        est.std_error
    );
}
