//! Flexible-amount variant: Bob picks how much Token_b to lock at t2 after
//! seeing the price, Alice picks the Token_a amount `P*` at t1 anticipating
//! his rule, so the realized exchange rate floats.

use std::cell::RefCell;

use rayon::prelude::*;

use crate::baseline::{self, mean_slice, StageConstants};
use crate::error::{Error, Result};
use crate::numerics::{self, integrate, maximize_1d, IntegrationConfig, Interval, MonotoneCubic};
use crate::scenario::Scenario;

/// Knot count of the lock-rule grid interpolated inside integrals.
const LOCK_GRID: usize = 513;
/// Pre-scan cells for the lock-amount search.
const LOCK_PRESCAN: usize = 256;
/// Lock amounts at or below this count as declining.
const LOCK_EPS: f64 = 1e-9;

/// Alice's reveal threshold when Bob locked `x` Token_b: the baseline
/// cut-off divided by the locked amount, infinite when nothing is locked.
pub fn threshold_t3_flexible(x: f64, s: &Scenario) -> f64 {
    if x <= 0.0 {
        return f64::INFINITY;
    }
    baseline::threshold_t3(s) / x
}

/// Bob's excess utility at t2 from locking `x` Token_b against Alice's
/// `p_star` Token_a, relative to declining and keeping the `x` tokens.
pub fn bob_excess_utility_t2(p2: f64, x: f64, p_star: f64, s: &Scenario) -> Result<f64> {
    check_inputs(p2, x, p_star)?;
    let sv = s.with_p_star(p_star)?;
    let cfg = IntegrationConfig::default();
    let c = StageConstants::new(&sv, &cfg);
    bob_excess_t2(&c, &sv, p2, x, &cfg)
}

pub(crate) fn bob_excess_t2(
    c: &StageConstants,
    s: &Scenario,
    p2: f64,
    x: f64,
    cfg: &IntegrationConfig,
) -> Result<f64> {
    if x <= 0.0 {
        return Ok(0.0);
    }
    let m = &s.market;
    let thr = c.thr3 / x;
    let below = m.cdf_raw(thr, p2, c.tau_b);
    let lower = mean_slice(
        m,
        p2,
        c.tau_b,
        0.0,
        thr,
        (p2 * c.tb_tail_lo, p2 * c.tb_tail_hi),
        cfg,
    )?;
    Ok(((1.0 - below) * c.b3_cont + x * c.b3_stop_coef * lower) * c.disc_b_tb - x * p2)
}

/// Alice's t2 utility when Bob locked `x` Token_b; at `x = 0` the swap is
/// off and she only waits for her refund.
pub fn alice_utility_t2(p2: f64, x: f64, p_star: f64, s: &Scenario) -> Result<f64> {
    check_inputs(p2, x, p_star)?;
    let sv = s.with_p_star(p_star)?;
    let cfg = IntegrationConfig::default();
    let c = StageConstants::new(&sv, &cfg);
    alice_t2(&c, &sv, p2, x, &cfg)
}

pub(crate) fn alice_t2(
    c: &StageConstants,
    s: &Scenario,
    p2: f64,
    x: f64,
    cfg: &IntegrationConfig,
) -> Result<f64> {
    if x <= 0.0 {
        return Ok(c.a3_stop * c.disc_a_tb);
    }
    let m = &s.market;
    let thr = c.thr3 / x;
    let below = m.cdf_raw(thr, p2, c.tau_b);
    let upper = mean_slice(
        m,
        p2,
        c.tau_b,
        thr,
        f64::INFINITY,
        (p2 * c.tb_tail_lo, p2 * c.tb_tail_hi),
        cfg,
    )?;
    Ok((x * c.a3_cont_coef * upper + below * c.a3_stop) * c.disc_a_tb)
}

/// The lock amount maximizing Bob's excess utility, searched on
/// `[0, 10 p_star / p2]` with golden-section refinement; zero means he
/// declines. The smallest maximizer is returned when several peaks tie.
pub fn optimal_lock_amount(p2: f64, p_star: f64, s: &Scenario) -> Result<f64> {
    check_inputs(p2, 0.0, p_star)?;
    let sv = s.with_p_star(p_star)?;
    let cfg = IntegrationConfig::default();
    let c = StageConstants::new(&sv, &cfg);
    optimal_lock(&c, &sv, p2, p_star, &cfg)
}

pub(crate) fn optimal_lock(
    c: &StageConstants,
    sv: &Scenario,
    p2: f64,
    p_star: f64,
    cfg: &IntegrationConfig,
) -> Result<f64> {
    let x_max = 10.0 * p_star / p2;
    let err_slot: RefCell<Option<Error>> = RefCell::new(None);
    let f = |x: f64| match bob_excess_t2(c, sv, p2, x, cfg) {
        Ok(v) => v,
        Err(e) => {
            err_slot.borrow_mut().get_or_insert(e);
            f64::NAN
        }
    };
    let (x_best, u_best) = maximize_1d(
        f,
        Interval::new(0.0, x_max)?,
        LOCK_PRESCAN,
        numerics::MAXIMIZE_TOL,
    );
    if let Some(e) = err_slot.borrow_mut().take() {
        return Err(e);
    }
    if !u_best.is_finite() {
        return Err(Error::Numerical(format!(
            "lock-amount objective not finite near x = {x_best}"
        )));
    }
    // Declining yields exactly zero; anything not beating it resolves to 0.
    Ok(if u_best > 0.0 { x_best } else { 0.0 })
}

/// Bob's optimal lock rule tabulated on a log-price grid over the t2
/// forward distribution, for use inside integrals and the simulator.
#[derive(Debug, Clone)]
pub struct LockCurve {
    p_star: f64,
    thr_base: f64,
    interp: MonotoneCubic,
    lo: f64,
    hi: f64,
    pub(crate) fingerprint: u64,
}

impl LockCurve {
    pub fn build(p_star: f64, s: &Scenario) -> Result<Self> {
        check_inputs(1.0, 0.0, p_star)?;
        let sv = s.with_p_star(p_star)?;
        let cfg = IntegrationConfig::default();
        let c = StageConstants::new(&sv, &cfg);
        let m = &sv.market;
        let (p1, tau_a) = (sv.p1(), sv.timeline.tau_a());
        let lo = m.quantile_raw(p1, tau_a, 1e-9);
        let hi = m.quantile_raw(p1, tau_a, 1.0 - 1e-9);
        let (ln_lo, ln_hi) = (lo.ln(), hi.ln());
        let xs: Vec<f64> = (0..LOCK_GRID)
            .map(|i| ln_lo + (ln_hi - ln_lo) * i as f64 / (LOCK_GRID - 1) as f64)
            .collect();
        let ys = xs
            .par_iter()
            .map(|&lx| optimal_lock(&c, &sv, lx.exp(), p_star, &cfg))
            .collect::<Result<Vec<f64>>>()?;
        Ok(Self {
            p_star,
            thr_base: c.thr3,
            interp: MonotoneCubic::new(xs, ys)?,
            lo,
            hi,
            fingerprint: sv.fingerprint(),
        })
    }

    pub fn p_star(&self) -> f64 {
        self.p_star
    }

    /// Interpolated optimal lock amount at the given t2 price.
    pub fn lock_amount(&self, p2: f64) -> f64 {
        self.interp.eval(p2.ln()).max(0.0)
    }

    /// Alice's reveal threshold under the interpolated rule.
    pub fn threshold(&self, p2: f64) -> f64 {
        let x = self.lock_amount(p2);
        if x <= LOCK_EPS {
            f64::INFINITY
        } else {
            self.thr_base / x
        }
    }

    pub(crate) fn window(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }
}

/// Success rate under an arbitrary lock rule: the completion probability
/// integrated over the t2 price, declining (`lock <= ~0`) contributing
/// nothing. Regions where the rule switches between declining and locking
/// are split before integrating.
pub fn success_rate_with_lock<L: Fn(f64) -> f64>(
    p_star: f64,
    s: &Scenario,
    lock: L,
) -> Result<f64> {
    check_inputs(1.0, 0.0, p_star)?;
    let sv = s.with_p_star(p_star)?;
    let thr_base = baseline::threshold_t3(&sv);
    let m = &sv.market;
    let (p1, tau_a, tau_b) = (sv.p1(), sv.timeline.tau_a(), sv.timeline.tau_b());
    let lo = m.quantile_raw(p1, tau_a, 1e-9);
    let hi = m.quantile_raw(p1, tau_a, 1.0 - 1e-9);
    let cfg = IntegrationConfig::default();
    let mut total = 0.0;
    for seg in active_segments(&lock, lo, hi) {
        total += integrate(
            |x| {
                let amount = lock(x);
                if amount <= LOCK_EPS {
                    return 0.0;
                }
                m.pdf_raw(x, p1, tau_a) * (1.0 - m.cdf_raw(thr_base / amount, x, tau_b))
            },
            seg,
            &cfg,
        )?;
    }
    Ok(total.clamp(0.0, 1.0))
}

/// Maximal subintervals of `[lo, hi]` where the rule actually locks,
/// boundaries refined by bisection.
fn active_segments<L: Fn(f64) -> f64>(lock: &L, lo: f64, hi: f64) -> Vec<Interval> {
    const PROBE: usize = 1024;
    let active = |x: f64| lock(x) > LOCK_EPS;
    let xs: Vec<f64> = (0..=PROBE)
        .map(|i| lo + (hi - lo) * i as f64 / PROBE as f64)
        .collect();
    let flags: Vec<bool> = xs.iter().map(|&x| active(x)).collect();
    let mut edges = Vec::new();
    for i in 1..=PROBE {
        if flags[i - 1] != flags[i] {
            let (mut a, mut b) = (xs[i - 1], xs[i]);
            for _ in 0..60 {
                let mid = 0.5 * (a + b);
                if active(mid) == flags[i - 1] {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            edges.push(0.5 * (a + b));
        }
    }
    let mut segments = Vec::new();
    let mut start = flags[0].then_some(lo);
    for (k, &e) in edges.iter().enumerate() {
        // Edges alternate the state; even k closes or opens relative to
        // the initial flag.
        let was_active = flags[0] == (k % 2 == 0);
        match (was_active, start) {
            (true, Some(s0)) => {
                if s0 < e {
                    segments.push(Interval::new(s0, e).expect("ordered segment"));
                }
                start = None;
            }
            (false, None) => start = Some(e),
            _ => {}
        }
    }
    if let Some(s0) = start {
        if s0 < hi {
            segments.push(Interval::new(s0, hi).expect("ordered segment"));
        }
    }
    segments
}

/// Success rate when Bob plays his optimal lock rule.
pub fn success_rate_flexible(p_star: f64, s: &Scenario) -> Result<f64> {
    let curve = LockCurve::build(p_star, s)?;
    success_rate_from_curve(&curve, s)
}

pub(crate) fn success_rate_from_curve(curve: &LockCurve, s: &Scenario) -> Result<f64> {
    let sv = s.with_p_star(curve.p_star)?;
    let m = &sv.market;
    let (p1, tau_a, tau_b) = (sv.p1(), sv.timeline.tau_a(), sv.timeline.tau_b());
    let (lo, hi) = curve.window();
    let cfg = IntegrationConfig::default();
    let mut total = 0.0;
    for seg in active_segments(&|x| curve.lock_amount(x), lo, hi) {
        total += integrate(
            |x| {
                let thr = curve.threshold(x);
                if thr.is_infinite() {
                    return 0.0;
                }
                m.pdf_raw(x, p1, tau_a) * (1.0 - m.cdf_raw(thr, x, tau_b))
            },
            seg,
            &cfg,
        )?;
    }
    Ok(total.clamp(0.0, 1.0))
}

/// Alice's excess utility from committing `p_star` Token_a at t1 under
/// Bob's anticipated lock rule, relative to keeping the tokens.
pub fn alice_excess_utility_t1_flexible(p_star: f64, s: &Scenario) -> Result<f64> {
    check_inputs(1.0, 0.0, p_star)?;
    let sv = s.with_p_star(p_star)?;
    let cfg = IntegrationConfig::default();
    let c = StageConstants::new(&sv, &cfg);
    let m = &sv.market;
    let (p1, tau_a) = (sv.p1(), sv.timeline.tau_a());
    let curve = LockCurve::build(p_star, s)?;
    let (lo, hi) = curve.window();
    // Tabulate Alice's t2 value under the rule on the same log-price grid,
    // then integrate the smooth interpolant.
    let (ln_lo, ln_hi) = (lo.ln(), hi.ln());
    let xs: Vec<f64> = (0..LOCK_GRID)
        .map(|i| ln_lo + (ln_hi - ln_lo) * i as f64 / (LOCK_GRID - 1) as f64)
        .collect();
    let ys = xs
        .par_iter()
        .map(|&lx| {
            let p2 = lx.exp();
            alice_t2(&c, &sv, p2, curve.lock_amount(p2), &cfg)
        })
        .collect::<Result<Vec<f64>>>()?;
    let interp = MonotoneCubic::new(xs, ys)?;
    let integral = integrate(
        |x| m.pdf_raw(x, p1, tau_a) * interp.eval(x.ln()),
        Interval::new(lo, hi)?,
        &cfg,
    )?;
    Ok(integral * sv.alice.discount(tau_a) - p_star)
}

fn check_inputs(p2: f64, x: f64, p_star: f64) -> Result<()> {
    if !p2.is_finite() || p2 <= 0.0 {
        return Err(Error::domain(format!(
            "t2 price must be positive, got {p2}"
        )));
    }
    if !x.is_finite() || x < 0.0 {
        return Err(Error::domain(format!(
            "lock amount must be non-negative, got {x}"
        )));
    }
    if !p_star.is_finite() || p_star <= 0.0 {
        return Err(Error::domain(format!(
            "locked Token_a amount must be positive, got {p_star}"
        )));
    }
    Ok(())
}
