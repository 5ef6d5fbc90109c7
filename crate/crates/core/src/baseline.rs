//! Backward-induction solution of the standard HTLC swap game: stage
//! utilities, Alice's reveal threshold, both feasible ranges and the
//! success rate.

use std::cell::RefCell;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numerics::{self, integrate, maximize_1d, IntegrationConfig, Interval, MonotoneCubic};
use crate::price::{std_normal_quantile, MarketModel};
use crate::scenario::{Decision, Scenario};

/// Number of points in the initial sign-change grids.
pub(crate) const SCAN_GRID: usize = 512;
/// Knot count for the interpolated t2-utility grids used at t1.
pub(crate) const T1_GRID: usize = 2001;
/// Grid for the exchange-rate feasibility scan, `[0.1 p1, 5 p1]`.
pub(crate) const PSTAR_SCAN: usize = 512;

/// Continuation and stopping utilities for both agents at one stage.
///
/// At t2 `alice_stop` is the value to Alice of Bob stopping (her Token_a
/// comes back at t8); `bob_stop` is Bob's value of keeping his Token_b.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageUtilities {
    pub alice_cont: f64,
    pub alice_stop: f64,
    pub bob_cont: f64,
    pub bob_stop: f64,
}

/// Stage decision rules derived for one scenario: the t3 reveal threshold,
/// Bob's t2 continuation interval and (optionally) the range of viable
/// exchange rates at t1.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselinePolicy {
    pub p3_lower: f64,
    pub p2_range: Option<Interval>,
    pub pstar_range: Option<Interval>,
    pub(crate) fingerprint: u64,
}

/// Closed-form per-scenario constants of the stage game.
#[derive(Debug, Clone, Copy)]
pub(crate) struct StageConstants {
    pub tau_b: f64,
    /// Alice's t3 reveal threshold.
    pub thr3: f64,
    /// `U^A_t3(cont)(x) = a3_cont_coef * x`.
    pub a3_cont_coef: f64,
    /// Alice's t3 stop value (Token_a back at t8).
    pub a3_stop: f64,
    /// Bob's t3 continuation value (Token_a at t6).
    pub b3_cont: f64,
    /// `U^B_t3(stop)(x) = b3_stop_coef * x` (Token_b back at t7).
    pub b3_stop_coef: f64,
    /// Alice's value at t2 of Bob stopping.
    pub a2_stop: f64,
    pub disc_a_tb: f64,
    pub disc_b_tb: f64,
    pub disc_b_ta: f64,
    /// Truncated-support factors: `q(p, tau_b, tail) = p * tb_tail_lo` etc.
    pub tb_tail_lo: f64,
    pub tb_tail_hi: f64,
}

impl StageConstants {
    pub(crate) fn new(s: &Scenario, cfg: &IntegrationConfig) -> Self {
        let (a, b, tl, m) = (&s.alice, &s.bob, &s.timeline, &s.market);
        let (tau_a, tau_b, eps_b) = (tl.tau_a(), tl.tau_b(), tl.eps_b());
        let p_star = s.p_star();
        let z = std_normal_quantile(cfg.tail_mass);
        Self {
            tau_b,
            thr3: threshold_t3(s),
            a3_cont_coef: (1.0 + a.alpha()) * ((m.mu() - a.r()) * tau_b).exp(),
            a3_stop: p_star * a.discount(eps_b + 2.0 * tau_a),
            b3_cont: (1.0 + b.alpha()) * p_star * b.discount(eps_b + tau_a),
            b3_stop_coef: (2.0 * (m.mu() - b.r()) * tau_b).exp(),
            a2_stop: p_star * a.discount(tau_b + eps_b + 2.0 * tau_a),
            disc_a_tb: a.discount(tau_b),
            disc_b_tb: b.discount(tau_b),
            disc_b_ta: b.discount(tau_a),
            tb_tail_lo: (m.log_drift(tau_b) + m.log_sd(tau_b) * z).exp(),
            tb_tail_hi: (m.log_drift(tau_b) - m.log_sd(tau_b) * z).exp(),
        }
    }
}

/// `int x p(x; p, tau) dx` over `[lo, hi]` clipped to the truncated support
/// `[q_lo, q_hi]`; zero when the clipped interval is empty.
pub(crate) fn mean_slice(
    m: &MarketModel,
    p: f64,
    tau: f64,
    lo: f64,
    hi: f64,
    support: (f64, f64),
    cfg: &IntegrationConfig,
) -> Result<f64> {
    let a = lo.max(support.0);
    let b = hi.min(support.1);
    if a >= b {
        return Ok(0.0);
    }
    integrate(|x| m.pdf_raw(x, p, tau) * x, Interval::new(a, b)?, cfg)
}

/// Cut-off Token_b price at t3 above which Alice reveals the secret:
/// `e^{(r^A - mu) tau_b - r^A (eps_b + 2 tau_a)} P* / (1 + alpha^A)`.
pub fn threshold_t3(s: &Scenario) -> f64 {
    let (a, tl, m) = (&s.alice, &s.timeline, &s.market);
    let expo = (a.r() - m.mu()) * tl.tau_b() - a.r() * (tl.eps_b() + 2.0 * tl.tau_a());
    expo.exp() * s.p_star() / (1.0 + a.alpha())
}

/// Both agents' utilities at t3 given the Token_b price `p3`.
pub fn utilities_t3(p3: f64, s: &Scenario) -> Result<StageUtilities> {
    if !p3.is_finite() || p3 <= 0.0 {
        return Err(Error::domain(format!(
            "t3 price must be positive, got {p3}"
        )));
    }
    let c = StageConstants::new(s, &IntegrationConfig::default());
    Ok(StageUtilities {
        alice_cont: c.a3_cont_coef * p3,
        alice_stop: c.a3_stop,
        bob_cont: c.b3_cont,
        bob_stop: c.b3_stop_coef * p3,
    })
}

/// Alice's reveal decision at t3; stopping on the boundary.
pub fn alice_decision_t3(p3: f64, s: &Scenario) -> Decision {
    if p3 > threshold_t3(s) {
        Decision::Cont
    } else {
        Decision::Stop
    }
}

/// Once the secret is visible Bob forfeits a sure gain by stopping, so he
/// continues unconditionally.
pub fn bob_decision_t4() -> Decision {
    Decision::Cont
}

pub(crate) fn alice_cont_t2(
    c: &StageConstants,
    m: &MarketModel,
    p2: f64,
    cfg: &IntegrationConfig,
) -> Result<f64> {
    let upper = mean_slice(
        m,
        p2,
        c.tau_b,
        c.thr3,
        f64::INFINITY,
        (p2 * c.tb_tail_lo, p2 * c.tb_tail_hi),
        cfg,
    )?;
    let below = m.cdf_raw(c.thr3, p2, c.tau_b);
    Ok((c.a3_cont_coef * upper + below * c.a3_stop) * c.disc_a_tb)
}

pub(crate) fn bob_cont_t2(
    c: &StageConstants,
    m: &MarketModel,
    p2: f64,
    cfg: &IntegrationConfig,
) -> Result<f64> {
    let lower = mean_slice(
        m,
        p2,
        c.tau_b,
        0.0,
        c.thr3,
        (p2 * c.tb_tail_lo, p2 * c.tb_tail_hi),
        cfg,
    )?;
    let below = m.cdf_raw(c.thr3, p2, c.tau_b);
    Ok(((1.0 - below) * c.b3_cont + c.b3_stop_coef * lower) * c.disc_b_tb)
}

/// Both agents' utilities at t2, integrating the t3 stage over the price
/// transition split at the reveal threshold.
pub fn utilities_t2(p2: f64, s: &Scenario) -> Result<StageUtilities> {
    if !p2.is_finite() || p2 <= 0.0 {
        return Err(Error::domain(format!(
            "t2 price must be positive, got {p2}"
        )));
    }
    let cfg = IntegrationConfig::default();
    let c = StageConstants::new(s, &cfg);
    Ok(StageUtilities {
        alice_cont: alice_cont_t2(&c, &s.market, p2, &cfg)?,
        alice_stop: c.a2_stop,
        bob_cont: bob_cont_t2(&c, &s.market, p2, &cfg)?,
        bob_stop: p2,
    })
}

/// Scans `g = B_cont - B_stop` for sign changes. The core window is
/// `[q(1e-6), q(1-1e-6)]` of the forward t2 price on a linear grid; it is
/// extended by log-spaced segments downward to where the continuation
/// probability is negligible (no crossing can exist below
/// `thr/2 e^{-mu tau_b - 12 sigma sqrt(tau_b)}`, and below the
/// collateral-guarantee crossing scale for `q > 0`) and upward to the
/// analytic crossing bound `(2q + (1+alpha^B) P*) / (1 - e^{3(mu-r^B) tau_b})`.
pub(crate) fn scan_t2_roots<G: Fn(f64) -> Result<f64>>(
    g: G,
    s: &Scenario,
    collateral_q: f64,
    thr: f64,
) -> Result<Vec<f64>> {
    let m = &s.market;
    let (p1, tau_a, tau_b) = (s.p1(), s.timeline.tau_a(), s.timeline.tau_b());
    let w_lo = m.quantile_raw(p1, tau_a, 1e-6);
    let w_hi = m.quantile_raw(p1, tau_a, 1.0 - 1e-6);
    let beta = (3.0 * (m.mu() - s.bob.r()) * tau_b).exp();
    if beta >= 1.0 {
        return Err(Error::Numerical(format!(
            "continuation region is unbounded: drift {} >= discount rate {}",
            m.mu(),
            s.bob.r()
        )));
    }
    let bound = (2.0 * collateral_q + (1.0 + s.bob.alpha()) * s.p_star()) / (1.0 - beta);

    let mut lo_ext = w_lo;
    if thr > 0.0 {
        let floor = 0.5 * thr * (-m.mu() * tau_b - 12.0 * m.log_sd(tau_b)).exp();
        lo_ext = lo_ext.min(floor);
    }
    if collateral_q > 0.0 {
        // First crossing of the deposit guarantee sits near
        // q * (sum of refund discounts) / (1 - beta).
        let guarantee = collateral_q
            * (s.bob.discount(tau_a) + s.bob.discount(s.timeline.eps_b() + tau_a))
            * s.bob.discount(tau_b)
            / (1.0 - beta);
        lo_ext = lo_ext.min(1e-3 * guarantee);
    }

    let mut roots = Vec::new();
    let mut scan_grid = |xs: Vec<f64>| -> Result<()> {
        let vals = xs.iter().map(|&x| g(x)).collect::<Result<Vec<f64>>>()?;
        roots.extend(refine_scan_roots(&xs, &vals, &g)?);
        Ok(())
    };
    if lo_ext < w_lo * (1.0 - 1e-12) {
        scan_grid(log_grid(lo_ext, w_lo, SCAN_GRID / 2))?;
    }
    scan_grid(linear_grid(w_lo, w_hi, SCAN_GRID))?;
    if bound > w_hi {
        scan_grid(log_grid(w_hi, bound, SCAN_GRID / 2))?;
    }
    roots.sort_by(|a, b| a.partial_cmp(b).expect("finite roots"));
    roots.dedup_by(|a, b| (*a - *b).abs() <= numerics::ROOT_TOL);
    Ok(roots)
}

fn linear_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..=n)
        .map(|i| lo + (hi - lo) * i as f64 / n as f64)
        .collect()
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (ln_lo, ln_hi) = (lo.ln(), hi.ln());
    (0..=n)
        .map(|i| (ln_lo + (ln_hi - ln_lo) * i as f64 / n as f64).exp())
        .collect()
}

/// The interval of t2 prices where Bob prefers writing his HTLC over
/// keeping the Token_b, or `None` when the curves never cross (the swap
/// always fails). Near-tangent ranges narrower than the scan grid's
/// resolution count as absent.
pub fn feasible_range_t2(s: &Scenario) -> Result<Option<Interval>> {
    let cfg = IntegrationConfig::default();
    let c = StageConstants::new(s, &cfg);
    let g = |p2: f64| Ok(bob_cont_t2(&c, &s.market, p2, &cfg)? - p2);
    let roots = scan_t2_roots(g, s, 0.0, c.thr3)?;
    match roots.len() {
        0 => Ok(None),
        2 => Ok(Some(Interval::new(roots[0], roots[1])?)),
        n => Err(Error::RootCount {
            expected: "0 or 2",
            found: n,
        }),
    }
}

/// Alice's t1 continuation value: the t2 stage integrated over the price
/// transition, with the t2 utilities tabulated on a log-price grid and
/// interpolated inside the quadrature.
pub(crate) fn alice_cont_t1(
    s: &Scenario,
    p1: f64,
    range: Option<Interval>,
    a_cont: &dyn Fn(f64) -> Result<f64>,
    a_stop_t2: f64,
    cfg: &IntegrationConfig,
) -> Result<f64> {
    let disc = s.alice.discount(s.timeline.tau_a());
    let Some(r) = range else {
        return Ok(a_stop_t2 * disc);
    };
    let m = &s.market;
    let tau_a = s.timeline.tau_a();
    let mass_out = 1.0 - m.cdf_raw(r.hi(), p1, tau_a) + m.cdf_raw(r.lo(), p1, tau_a);
    let integral = grid_integral(s, p1, r, a_cont, cfg)?;
    Ok((integral + mass_out * a_stop_t2) * disc)
}

/// `int p(x; p1, tau_a) u(x) dx` over `r` clipped to +-8 sigma sqrt(tau_a)
/// of the forward log-price, with `u` interpolated from `T1_GRID` knots.
pub(crate) fn grid_integral(
    s: &Scenario,
    p1: f64,
    r: Interval,
    u: &dyn Fn(f64) -> Result<f64>,
    cfg: &IntegrationConfig,
) -> Result<f64> {
    let m = &s.market;
    let tau_a = s.timeline.tau_a();
    let ln_fwd = p1.ln() + m.log_drift(tau_a);
    let half = 8.0 * m.log_sd(tau_a);
    let a = r.lo().max((ln_fwd - half).exp());
    let b = r.hi().min((ln_fwd + half).exp());
    if a >= b {
        return Ok(0.0);
    }
    let (ln_a, ln_b) = (a.ln(), b.ln());
    let n = T1_GRID;
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for i in 0..n {
        let lx = ln_a + (ln_b - ln_a) * i as f64 / (n - 1) as f64;
        xs.push(lx);
        ys.push(u(lx.exp())?);
    }
    let interp = MonotoneCubic::new(xs, ys)?;
    integrate(
        |x| m.pdf_raw(x, p1, tau_a) * interp.eval(x.ln()),
        Interval::new(a, b)?,
        cfg,
    )
}

/// Both agents' utilities at t1, just before Alice decides whether to lock
/// her Token_a. `p1` is the current Token_b price (`P_{t1} = P_{t0}`).
pub fn utilities_t1(p1: f64, s: &Scenario) -> Result<StageUtilities> {
    if !p1.is_finite() || p1 <= 0.0 {
        return Err(Error::domain(format!(
            "t1 price must be positive, got {p1}"
        )));
    }
    let cfg = IntegrationConfig::default();
    let c = StageConstants::new(s, &cfg);
    let m = &s.market;
    let range = feasible_range_t2(s)?;
    let alice_cont = alice_cont_t1(
        s,
        p1,
        range,
        &|p2| alice_cont_t2(&c, m, p2, &cfg),
        c.a2_stop,
        &cfg,
    )?;
    let tau_a = s.timeline.tau_a();
    let q_lo = m.quantile_raw(p1, tau_a, cfg.tail_mass);
    let q_hi = m.quantile_raw(p1, tau_a, 1.0 - cfg.tail_mass);
    let bob_cont = match range {
        None => mean_slice(m, p1, tau_a, 0.0, f64::INFINITY, (q_lo, q_hi), &cfg)? * c.disc_b_ta,
        Some(r) => {
            let inside = grid_integral(s, p1, r, &|p2| bob_cont_t2(&c, m, p2, &cfg), &cfg)?;
            let kept = mean_slice(m, p1, tau_a, 0.0, r.lo(), (q_lo, q_hi), &cfg)?
                + mean_slice(m, p1, tau_a, r.hi(), f64::INFINITY, (q_lo, q_hi), &cfg)?;
            (inside + kept) * c.disc_b_ta
        }
    };
    Ok(StageUtilities {
        alice_cont,
        alice_stop: s.p_star(),
        bob_cont,
        bob_stop: p1,
    })
}

fn alice_cont_t1_for(s: &Scenario, cfg: &IntegrationConfig) -> Result<f64> {
    let c = StageConstants::new(s, cfg);
    let range = feasible_range_t2(s)?;
    alice_cont_t1(
        s,
        s.p1(),
        range,
        &|p2| alice_cont_t2(&c, &s.market, p2, cfg),
        c.a2_stop,
        cfg,
    )
}

/// Exchange rates at which Alice is willing to initiate the swap, found by
/// a sign-change scan of her t1 continuation surplus over
/// `[0.1 p1, 5 p1]`. The scenario's own `p_star` is ignored.
pub fn feasible_range_pstar(s: &Scenario) -> Result<Option<Interval>> {
    let cfg = IntegrationConfig::default();
    let p1 = s.p1();
    let h = |ps: f64| -> Result<f64> {
        let sv = s.with_p_star(ps)?;
        Ok(alice_cont_t1_for(&sv, &cfg)? - ps)
    };
    let (lo, hi) = (0.1 * p1, 5.0 * p1);
    let n = PSTAR_SCAN;
    let xs: Vec<f64> = (0..=n)
        .map(|i| lo + (hi - lo) * i as f64 / n as f64)
        .collect();
    let vals = xs.par_iter().map(|&x| h(x)).collect::<Result<Vec<f64>>>()?;
    let roots = refine_scan_roots(&xs, &vals, &h)?;
    match roots.len() {
        0 => Ok(None),
        2 => Ok(Some(Interval::new(roots[0], roots[1])?)),
        found => Err(Error::RootCount {
            expected: "0 or 2",
            found,
        }),
    }
}

/// Brent-refines every bracketed sign change of pre-scanned values.
pub(crate) fn refine_scan_roots<H: Fn(f64) -> Result<f64>>(
    xs: &[f64],
    vals: &[f64],
    h: &H,
) -> Result<Vec<f64>> {
    let err_slot: RefCell<Option<Error>> = RefCell::new(None);
    let hf = |x: f64| -> f64 {
        match h(x) {
            Ok(v) => v,
            Err(e) => {
                err_slot.borrow_mut().get_or_insert(e);
                f64::NAN
            }
        }
    };
    let mut roots = Vec::new();
    for i in 1..xs.len() {
        let (fa, fb) = (vals[i - 1], vals[i]);
        if fa == 0.0 {
            roots.push(xs[i - 1]);
        } else if fb != 0.0 && fa.signum() != fb.signum() {
            roots.push(numerics::brent_root(
                &hf,
                xs[i - 1],
                xs[i],
                fa,
                fb,
                numerics::ROOT_TOL,
            ));
            if let Some(e) = err_slot.borrow_mut().take() {
                return Err(e);
            }
        }
    }
    if let Some(&last) = vals.last() {
        if last == 0.0 {
            roots.push(*xs.last().expect("non-empty grid"));
        }
    }
    roots.dedup_by(|a, b| (*a - *b).abs() <= numerics::ROOT_TOL);
    Ok(roots)
}

/// Probability that an initiated swap completes (Alice reveals at t3),
/// requiring the exchange rate to be viable at t1.
pub fn success_rate(s: &Scenario) -> Result<f64> {
    let cfg = IntegrationConfig::default();
    if alice_cont_t1_for(s, &cfg)? <= s.p_star() {
        return Err(Error::NotInitiated { p_star: s.p_star() });
    }
    conditional_success_rate(s)
}

/// The completion probability given initiation, without checking that a
/// rational Alice would initiate. Zero when Bob's t2 range is absent.
pub fn conditional_success_rate(s: &Scenario) -> Result<f64> {
    let range = feasible_range_t2(s)?;
    match range {
        None => Ok(0.0),
        Some(r) => sr_integral(s, &[r], threshold_t3(s)),
    }
}

/// `sum_i int_{I_i} p(x; p1, tau_a) [1 - C(thr; x, tau_b)] dx`.
pub(crate) fn sr_integral(s: &Scenario, intervals: &[Interval], thr: f64) -> Result<f64> {
    let cfg = IntegrationConfig::default();
    let m = &s.market;
    let (p1, tau_a, tau_b) = (s.p1(), s.timeline.tau_a(), s.timeline.tau_b());
    let q_lo = m.quantile_raw(p1, tau_a, cfg.tail_mass);
    let q_hi = m.quantile_raw(p1, tau_a, 1.0 - cfg.tail_mass);
    let mut total = 0.0;
    for iv in intervals {
        let a = iv.lo().max(q_lo);
        let b = iv.hi().min(q_hi);
        if a >= b {
            continue;
        }
        total += integrate(
            |x| m.pdf_raw(x, p1, tau_a) * (1.0 - m.cdf_raw(thr, x, tau_b)),
            Interval::new(a, b)?,
            &cfg,
        )?;
    }
    Ok(total.clamp(0.0, 1.0))
}

/// Exchange rate maximizing the conditional success rate over `window`
/// (defaults to the feasibility scan window). Returns `(argmax, max)`.
pub fn max_success_rate(s: &Scenario, window: Option<Interval>) -> Result<(f64, f64)> {
    let window = match window {
        Some(w) => w,
        None => Interval::new(0.1 * s.p1(), 5.0 * s.p1())?,
    };
    let err_slot: RefCell<Option<Error>> = RefCell::new(None);
    let f = |ps: f64| match s
        .with_p_star(ps)
        .and_then(|sv| conditional_success_rate(&sv))
    {
        Ok(v) => v,
        Err(e) => {
            err_slot.borrow_mut().get_or_insert(e);
            f64::NAN
        }
    };
    let (x, y) = maximize_1d(f, window, 64, 1e-4);
    if let Some(e) = err_slot.borrow_mut().take() {
        return Err(e);
    }
    Ok((x, y))
}

/// Derives the stage policy (threshold and t2 range) without the expensive
/// exchange-rate scan; `pstar_range` is left unset.
pub fn derive_policy(s: &Scenario) -> Result<BaselinePolicy> {
    Ok(BaselinePolicy {
        p3_lower: threshold_t3(s),
        p2_range: feasible_range_t2(s)?,
        pstar_range: None,
        fingerprint: s.fingerprint(),
    })
}

/// Full backward-induction solution including the viable exchange-rate
/// range at t1.
pub fn solve(s: &Scenario) -> Result<BaselinePolicy> {
    let mut policy = derive_policy(s)?;
    policy.pstar_range = feasible_range_pstar(s)?;
    Ok(policy)
}

impl BaselinePolicy {
    pub(crate) fn check_scenario(&self, s: &Scenario) -> Result<()> {
        if self.fingerprint != s.fingerprint() {
            return Err(Error::domain("policy was derived for a different scenario"));
        }
        Ok(())
    }
}
