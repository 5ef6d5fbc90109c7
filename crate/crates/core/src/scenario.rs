//! Scenario configuration: agents, chain timing and the agreed exchange
//! rate, plus the realized-outcome types shared with the simulator.

use crate::error::{Error, Result};
use crate::price::MarketModel;

/// Per-agent preferences entering the utility function
/// `U = E[(1 + alpha S) V / e^{r T}]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentParams {
    alpha: f64,
    r: f64,
}

impl AgentParams {
    /// `alpha`: success premium (dimensionless, >= 0). `r`: discount rate
    /// per hour (> 0). Values that make swaps infeasible are allowed.
    pub fn new(alpha: f64, r: f64) -> Result<Self> {
        if !alpha.is_finite() || alpha < 0.0 {
            return Err(Error::domain(format!(
                "success premium must be non-negative, got {alpha}"
            )));
        }
        if !r.is_finite() || r <= 0.0 {
            return Err(Error::domain(format!(
                "discount rate must be positive, got {r}"
            )));
        }
        Ok(Self { alpha, r })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    /// Discount factor `e^{-r dt}` for a delay of `dt` hours.
    #[inline]
    pub fn discount(&self, dt: f64) -> f64 {
        (-self.r * dt).exp()
    }
}

/// Idealized zero-waiting-time swap schedule. All decision, receipt and
/// expiry times are fixed offsets from `t1 = t0 = 0`:
///
/// ```text
/// t2 = t1 + tau_a          Bob locks 1 Token_b
/// t3 = t2 + tau_b          Alice may reveal the secret
/// t4 = t3 + eps_b          Bob sees the secret in the mempool
/// t5 = t3 + tau_b = tb     Alice receives Token_b (success)
/// t6 = t4 + tau_a = ta     Bob receives Token_a (success)
/// t7 = tb + tau_b          Bob's Token_b refunded (failure)
/// t8 = ta + tau_a          Alice's Token_a refunded (failure)
/// ```
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwapTimeline {
    tau_a: f64,
    tau_b: f64,
    eps_b: f64,
}

impl SwapTimeline {
    /// `tau_a`, `tau_b`: confirmation times on the two chains (hours).
    /// `eps_b`: mempool visibility delay on Chain_b, strictly below `tau_b`.
    pub fn new(tau_a: f64, tau_b: f64, eps_b: f64) -> Result<Self> {
        for (name, v) in [("tau_a", tau_a), ("tau_b", tau_b), ("eps_b", eps_b)] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::domain(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if eps_b >= tau_b {
            return Err(Error::domain(format!(
                "mempool delay must be below the chain_b confirmation time: \
                 eps_b = {eps_b}, tau_b = {tau_b}"
            )));
        }
        Ok(Self {
            tau_a,
            tau_b,
            eps_b,
        })
    }

    pub fn tau_a(&self) -> f64 {
        self.tau_a
    }

    pub fn tau_b(&self) -> f64 {
        self.tau_b
    }

    pub fn eps_b(&self) -> f64 {
        self.eps_b
    }

    pub fn t1(&self) -> f64 {
        0.0
    }

    pub fn t2(&self) -> f64 {
        self.tau_a
    }

    pub fn t3(&self) -> f64 {
        self.tau_a + self.tau_b
    }

    pub fn t4(&self) -> f64 {
        self.t3() + self.eps_b
    }

    pub fn t5(&self) -> f64 {
        self.t3() + self.tau_b
    }

    pub fn t6(&self) -> f64 {
        self.t4() + self.tau_a
    }

    pub fn t7(&self) -> f64 {
        self.expiry_b() + self.tau_b
    }

    pub fn t8(&self) -> f64 {
        self.expiry_a() + self.tau_a
    }

    /// Expiry of the HTLC on Chain_a (`ta = t6`).
    pub fn expiry_a(&self) -> f64 {
        self.t6()
    }

    /// Expiry of the HTLC on Chain_b (`tb = t5`).
    pub fn expiry_b(&self) -> f64 {
        self.t5()
    }
}

/// A complete swap configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scenario {
    pub market: MarketModel,
    pub alice: AgentParams,
    pub bob: AgentParams,
    pub timeline: SwapTimeline,
    p_star: f64,
}

impl Scenario {
    pub fn new(
        market: MarketModel,
        alice: AgentParams,
        bob: AgentParams,
        timeline: SwapTimeline,
        p_star: f64,
    ) -> Result<Self> {
        if !p_star.is_finite() || p_star <= 0.0 {
            return Err(Error::domain(format!(
                "exchange rate must be positive and finite, got {p_star}"
            )));
        }
        Ok(Self {
            market,
            alice,
            bob,
            timeline,
            p_star,
        })
    }

    /// Agreed exchange rate: `p_star` Token_a for 1 Token_b.
    pub fn p_star(&self) -> f64 {
        self.p_star
    }

    /// Same scenario with a different agreed exchange rate.
    pub fn with_p_star(&self, p_star: f64) -> Result<Self> {
        Scenario::new(self.market, self.alice, self.bob, self.timeline, p_star)
    }

    /// Price at the initiation decision; `P_{t1} = P_{t0}` under the
    /// zero-waiting-time schedule.
    pub fn p1(&self) -> f64 {
        self.market.p0()
    }

    /// Order-sensitive digest of every parameter, used to reject policies
    /// replayed against a different scenario.
    pub(crate) fn fingerprint(&self) -> u64 {
        let mut h = 0xcbf2_9ce4_8422_2325u64;
        for v in [
            self.market.mu(),
            self.market.sigma(),
            self.market.p0(),
            self.alice.alpha(),
            self.alice.r(),
            self.bob.alpha(),
            self.bob.r(),
            self.timeline.tau_a(),
            self.timeline.tau_b(),
            self.timeline.eps_b(),
            self.p_star,
        ] {
            h ^= v.to_bits();
            h = h.wrapping_mul(0x1000_0000_01b3);
        }
        h
    }
}

impl Default for Scenario {
    /// Default parameterization: `alpha = 0.3` and `r = 0.01/h` for both
    /// agents, `tau_a = 3h`, `tau_b = 4h`, `eps_b = 1h`, `mu = 0.002/h`,
    /// `sigma = 0.1/sqrt(h)`, `P_{t0} = 2`, `P* = 2`.
    fn default() -> Self {
        Scenario::new(
            MarketModel::new(0.002, 0.1, 2.0).expect("valid defaults"),
            AgentParams::new(0.3, 0.01).expect("valid defaults"),
            AgentParams::new(0.3, 0.01).expect("valid defaults"),
            SwapTimeline::new(3.0, 4.0, 1.0).expect("valid defaults"),
            2.0,
        )
        .expect("valid defaults")
    }
}

/// Stage action available to each agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Cont,
    Stop,
}

/// Which token an agent ends up holding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssetKind {
    TokenA,
    TokenB,
}

/// One agent's realized end state in a played-out swap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentOutcome {
    pub asset: AssetKind,
    /// Units of `asset` received (or returned).
    pub amount: f64,
    /// Value of the receipt in Token_a at receipt time; Token_b receipts
    /// use the conditional expectation of the price at that time.
    pub value: f64,
    /// Hours after `t1` at which the asset arrives.
    pub receipt_time: f64,
    /// Realized utility discounted to `t1`, success premium included.
    pub utility: f64,
}

/// Outcome of one forward play of the swap game.
///
/// `success` is true exactly when the exchange completed: Alice received
/// the locked Token_b and Bob received the locked Token_a.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GameOutcome {
    pub success: bool,
    pub alice: AgentOutcome,
    pub bob: AgentOutcome,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn timeline_offsets_satisfy_schedule() {
        let tl = SwapTimeline::new(3.0, 4.0, 1.0).unwrap();
        assert_eq!(tl.t1(), 0.0);
        assert_eq!(tl.t2(), 3.0);
        assert_eq!(tl.t3(), 7.0);
        assert_eq!(tl.t4(), 8.0);
        assert_eq!(tl.t5(), 11.0);
        assert_eq!(tl.t6(), 11.0);
        assert_eq!(tl.t7(), 15.0);
        assert_eq!(tl.t8(), 14.0);
        assert_eq!(tl.expiry_b(), tl.t5());
        assert_eq!(tl.expiry_a(), tl.t6());
    }

    #[test]
    fn timeline_rejects_slow_mempool() {
        assert!(SwapTimeline::new(3.0, 4.0, 4.0).is_err());
        assert!(SwapTimeline::new(3.0, 4.0, 5.0).is_err());
        assert!(SwapTimeline::new(0.0, 4.0, 1.0).is_err());
    }

    #[test]
    fn agent_params_invariants() {
        assert!(AgentParams::new(0.0, 0.01).is_ok());
        assert!(AgentParams::new(-0.1, 0.01).is_err());
        assert!(AgentParams::new(0.3, 0.0).is_err());
    }

    #[test]
    fn default_scenario_matches_documented_values() {
        let s = Scenario::default();
        assert_eq!(s.market.mu(), 0.002);
        assert_eq!(s.market.sigma(), 0.1);
        assert_eq!(s.market.p0(), 2.0);
        assert_eq!(s.alice.alpha(), 0.3);
        assert_eq!(s.alice.r(), 0.01);
        assert_eq!(s.bob.alpha(), 0.3);
        assert_eq!(s.bob.r(), 0.01);
        assert_eq!(s.timeline.tau_a(), 3.0);
        assert_eq!(s.timeline.tau_b(), 4.0);
        assert_eq!(s.timeline.eps_b(), 1.0);
        assert_eq!(s.p_star(), 2.0);
        assert_eq!(s.p1(), 2.0);
    }

    #[test]
    fn scenario_rejects_bad_rate() {
        let s = Scenario::default();
        assert!(s.with_p_star(0.0).is_err());
        assert!(s.with_p_star(f64::NAN).is_err());
    }
}
