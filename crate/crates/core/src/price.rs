//! Closed-form lognormal price mathematics for Token_b priced in Token_a
//! under geometric Brownian motion, plus exact transition sampling.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal CDF. `erfc` keeps precision in both tails.
#[inline]
pub(crate) fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / SQRT_2)
}

#[inline]
fn std_normal_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Standard normal quantile: Acklam's rational approximation polished by
/// one Newton step against the high-accuracy CDF.
pub(crate) fn std_normal_quantile(u: f64) -> f64 {
    debug_assert!(u > 0.0 && u < 1.0);
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const U_LOW: f64 = 0.02425;

    let x = if u < U_LOW {
        let q = (-2.0 * u.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if u <= 1.0 - U_LOW {
        let q = u - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - u).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    x - (std_normal_cdf(x) - u) / std_normal_pdf(x)
}

/// Geometric Brownian motion for the Token_b price, denominated in Token_a.
///
/// `ln(P_{t+tau}/P_t) = (mu - sigma^2/2) tau + sigma (W_{t+tau} - W_t)`,
/// so the price at horizon `tau` is lognormal given the price at `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketModel {
    mu: f64,
    sigma: f64,
    p0: f64,
}

impl MarketModel {
    /// Creates a model from drift (per hour), volatility (per sqrt-hour) and
    /// the initial price of Token_b.
    pub fn new(mu: f64, sigma: f64, p0: f64) -> Result<Self> {
        if !mu.is_finite() {
            return Err(Error::domain(format!("drift must be finite, got {mu}")));
        }
        if !sigma.is_finite() || sigma <= 0.0 {
            return Err(Error::domain(format!(
                "volatility must be positive and finite, got {sigma}"
            )));
        }
        if !p0.is_finite() || p0 <= 0.0 {
            return Err(Error::domain(format!(
                "initial price must be positive and finite, got {p0}"
            )));
        }
        Ok(Self { mu, sigma, p0 })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Initial price `P_{t0}` (Token_a per Token_b).
    pub fn p0(&self) -> f64 {
        self.p0
    }

    #[inline]
    pub(crate) fn log_drift(&self, tau: f64) -> f64 {
        (self.mu - 0.5 * self.sigma * self.sigma) * tau
    }

    #[inline]
    pub(crate) fn log_sd(&self, tau: f64) -> f64 {
        self.sigma * tau.sqrt()
    }

    /// `E[P_{t+tau} | P_t = p] = p e^{mu tau}`.
    pub fn expected_price(&self, p: f64, tau: f64) -> Result<f64> {
        check_price(p)?;
        check_horizon(tau, false)?;
        Ok(p * (self.mu * tau).exp())
    }

    /// Transition density of `P_{t+tau}` at `x` given `P_t = p`.
    ///
    /// Log-mean `ln p + (mu - sigma^2/2) tau`, log-variance `sigma^2 tau`.
    /// Requires `tau > 0`; at `tau = 0` the distribution is a point mass.
    pub fn price_pdf(&self, x: f64, p: f64, tau: f64) -> Result<f64> {
        if x.is_nan() || x <= 0.0 {
            return Err(Error::domain(format!(
                "density evaluation point must be positive, got {x}"
            )));
        }
        check_price(p)?;
        check_horizon(tau, true)?;
        Ok(self.pdf_raw(x, p, tau))
    }

    /// `Prob[P_{t+tau} <= x | P_t = p]`. Returns 0 for `x <= 0` and 1 for
    /// `x = +inf`; requires `tau > 0`.
    pub fn price_cdf(&self, x: f64, p: f64, tau: f64) -> Result<f64> {
        check_price(p)?;
        check_horizon(tau, true)?;
        Ok(self.cdf_raw(x, p, tau))
    }

    /// Exact lognormal draw `p exp((mu - sigma^2/2) tau + sigma sqrt(tau) Z)`.
    ///
    /// Deterministic given the stream state; `tau = 0` returns `p` exactly.
    pub fn sample_price<R: Rng + ?Sized>(&self, p: f64, tau: f64, rng: &mut R) -> Result<f64> {
        check_price(p)?;
        check_horizon(tau, false)?;
        if tau == 0.0 {
            return Ok(p);
        }
        let z: f64 = rng.sample(StandardNormal);
        Ok(p * (self.log_drift(tau) + self.log_sd(tau) * z).exp())
    }

    /// Quantile of the transition distribution, used to truncate
    /// semi-infinite integration supports.
    pub fn quantile(&self, p: f64, tau: f64, u: f64) -> Result<f64> {
        check_price(p)?;
        check_horizon(tau, true)?;
        if u.is_nan() || u <= 0.0 || u >= 1.0 {
            return Err(Error::domain(format!(
                "quantile level must lie in (0, 1), got {u}"
            )));
        }
        Ok(self.quantile_raw(p, tau, u))
    }

    /// Density without precondition checks; 0 off the support.
    #[inline]
    pub(crate) fn pdf_raw(&self, x: f64, p: f64, tau: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let sd = self.log_sd(tau);
        let z = ((x / p).ln() - self.log_drift(tau)) / sd;
        (-0.5 * z * z).exp() / ((2.0 * std::f64::consts::PI * tau).sqrt() * self.sigma * x)
    }

    /// CDF without precondition checks; total in `x`.
    #[inline]
    pub(crate) fn cdf_raw(&self, x: f64, p: f64, tau: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if x == f64::INFINITY {
            return 1.0;
        }
        let z = ((x / p).ln() - self.log_drift(tau)) / self.log_sd(tau);
        std_normal_cdf(z)
    }

    #[inline]
    pub(crate) fn quantile_raw(&self, p: f64, tau: f64, u: f64) -> f64 {
        p * (self.log_drift(tau) + self.log_sd(tau) * std_normal_quantile(u)).exp()
    }
}

fn check_price(p: f64) -> Result<()> {
    if !p.is_finite() || p <= 0.0 {
        return Err(Error::domain(format!(
            "price must be positive and finite, got {p}"
        )));
    }
    Ok(())
}

fn check_horizon(tau: f64, strict: bool) -> Result<()> {
    if !tau.is_finite() || tau < 0.0 || (strict && tau == 0.0) {
        let req = if strict { "positive" } else { "non-negative" };
        return Err(Error::domain(format!("horizon must be {req}, got {tau}")));
    }
    Ok(())
}
