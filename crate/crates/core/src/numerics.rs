//! Deterministic numerical kernels: adaptive quadrature on truncated
//! supports, bracketed root finding, 1-D maximization and monotone cubic
//! interpolation.

use crate::error::{Error, Result};

/// Default tolerance for refined roots, in price units.
pub const ROOT_TOL: f64 = 1e-6;
/// Default tolerance for 1-D maximization.
pub const MAXIMIZE_TOL: f64 = 1e-5;

/// Tolerances and truncation controls for [`integrate`].
#[derive(Debug, Clone, Copy)]
pub struct IntegrationConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_depth: u32,
    /// Probability mass dropped at each end when truncating a semi-infinite
    /// lognormal support to a finite interval.
    pub tail_mass: f64,
}

impl Default for IntegrationConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            max_depth: 48,
            tail_mass: 1e-9,
        }
    }
}

impl IntegrationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rel_tol.is_nan()
            || self.rel_tol <= 0.0
            || self.abs_tol.is_nan()
            || self.abs_tol <= 0.0
        {
            return Err(Error::domain("integration tolerances must be positive"));
        }
        if self.tail_mass.is_nan() || self.tail_mass <= 0.0 || self.tail_mass >= 1e-6 {
            return Err(Error::domain("tail mass must lie in (0, 1e-6)"));
        }
        if self.max_depth < 10 {
            return Err(Error::domain("max depth must be at least 10"));
        }
        Ok(())
    }
}

/// Non-degenerate price interval `[lo, hi]` with `0 <= lo < hi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    lo: f64,
    hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_nan() || lo < 0.0 || lo >= hi || !hi.is_finite() {
            return Err(Error::domain(format!(
                "interval requires 0 <= lo < hi, got [{lo}, {hi}]"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    /// Membership with the strategy-summary convention `lo < x <= hi`.
    pub fn contains(&self, x: f64) -> bool {
        self.lo < x && x <= self.hi
    }

    /// Intersection, if non-degenerate.
    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        Interval::new(self.lo.max(other.lo), self.hi.min(other.hi)).ok()
    }
}

/// Ordered list of disjoint, non-adjacent intervals.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct IntervalSet {
    intervals: Vec<Interval>,
}

impl IntervalSet {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn new(intervals: Vec<Interval>) -> Result<Self> {
        for pair in intervals.windows(2) {
            if pair[0].hi >= pair[1].lo {
                return Err(Error::domain(format!(
                    "interval set must be sorted, disjoint and non-adjacent: \
                     [{}, {}] then [{}, {}]",
                    pair[0].lo, pair[0].hi, pair[1].lo, pair[1].hi
                )));
            }
        }
        Ok(Self { intervals })
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn contains(&self, x: f64) -> bool {
        self.intervals.iter().any(|iv| iv.contains(x))
    }

    /// Smallest interval covering the whole set, if non-empty.
    pub fn hull(&self) -> Option<Interval> {
        match (self.intervals.first(), self.intervals.last()) {
            (Some(a), Some(b)) => Interval::new(a.lo, b.hi).ok(),
            _ => None,
        }
    }

    pub fn intersect(&self, other: &IntervalSet) -> IntervalSet {
        let mut out = Vec::new();
        for a in &self.intervals {
            for b in &other.intervals {
                if let Some(iv) = a.intersect(b) {
                    out.push(iv);
                }
            }
        }
        IntervalSet { intervals: out }
    }
}

// Gauss-Kronrod 7-15 abscissae and weights on [-1, 1] (positive half).
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_26,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_67,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// One Gauss-Kronrod 7-15 panel: returns the K15 value and the |K15 - G7|
/// error estimate.
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let f_c = f(c);
    let mut resk = WGK[7] * f_c;
    let mut resg = WG[3] * f_c;
    for j in 0..7 {
        let x = h * XGK[j];
        let fsum = f(c - x) + f(c + x);
        resk += WGK[j] * fsum;
        if j % 2 == 1 {
            resg += WG[j / 2] * fsum;
        }
    }
    (resk * h, ((resk - resg) * h).abs())
}

/// Adaptive Gauss-Kronrod quadrature of `f` over `iv`.
///
/// The estimated error of the result is at most
/// `max(cfg.abs_tol, cfg.rel_tol * |result|)`; panels failing the local
/// share of that budget are bisected. Exact for polynomials far beyond
/// degree 3 on each panel. Failure to converge within `cfg.max_depth`
/// bisections returns [`Error::Quadrature`] carrying the best estimate.
pub fn integrate<F: Fn(f64) -> f64>(f: F, iv: Interval, cfg: &IntegrationConfig) -> Result<f64> {
    cfg.validate()?;
    let (a, b) = (iv.lo(), iv.hi());
    let (whole, err) = gk15(&f, a, b);
    let tol = cfg.abs_tol.max(cfg.rel_tol * whole.abs());
    if err <= tol {
        return Ok(whole);
    }
    let mut worst = 0.0f64;
    let value = adaptive_gk(&f, a, b, whole, err, tol, cfg.max_depth, &mut worst);
    if worst > 0.0 {
        return Err(Error::Quadrature {
            estimate: value,
            error_bound: worst,
        });
    }
    Ok(value)
}

#[allow(clippy::too_many_arguments)]
fn adaptive_gk<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    whole: f64,
    err: f64,
    tol: f64,
    depth: u32,
    worst: &mut f64,
) -> f64 {
    let m = 0.5 * (a + b);
    if err <= tol || m <= a || m >= b {
        return whole;
    }
    if depth == 0 {
        *worst += err;
        return whole;
    }
    let (left, el) = gk15(f, a, m);
    let (right, er) = gk15(f, m, b);
    let half = 0.5 * tol;
    adaptive_gk(f, a, m, left, el, half, depth - 1, worst)
        + adaptive_gk(f, m, b, right, er, half, depth - 1, worst)
}

/// Scans `f` on a uniform grid over `scan` and refines every bracketed sign
/// change with Brent's method. Roots are returned in ascending order; an
/// empty list means no sign change was found.
pub fn find_sign_changes<F: Fn(f64) -> f64>(
    f: F,
    scan: Interval,
    n_grid: usize,
    tol: f64,
) -> Result<Vec<f64>> {
    if n_grid < 64 {
        return Err(Error::domain(format!(
            "sign-change scan needs at least 64 grid cells, got {n_grid}"
        )));
    }
    let (a, b) = (scan.lo(), scan.hi());
    let step = (b - a) / n_grid as f64;
    let mut roots = Vec::new();
    let mut x_prev = a;
    let mut f_prev = f(a);
    for i in 1..=n_grid {
        let x = if i == n_grid { b } else { a + step * i as f64 };
        let fx = f(x);
        if f_prev == 0.0 {
            roots.push(x_prev);
        } else if fx != 0.0 && f_prev.signum() != fx.signum() {
            roots.push(brent_root(&f, x_prev, x, f_prev, fx, tol));
        }
        x_prev = x;
        f_prev = fx;
    }
    if f_prev == 0.0 {
        roots.push(x_prev);
    }
    roots.dedup_by(|a, b| (*a - *b).abs() <= tol);
    Ok(roots)
}

/// Brent's method on a bracketing interval; `fa * fb < 0` assumed.
pub(crate) fn brent_root<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fb: f64,
    tol: f64,
) -> f64 {
    let (mut a, mut b, mut fa, mut fb) = (a, b, fa, fb);
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..200 {
        if fb.abs() > fc.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return b;
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            // Inverse quadratic interpolation, falling back to secant.
            let s = fb / fa;
            let (mut p, mut q) = if a == c {
                (2.0 * xm * s, 1.0 - s)
            } else {
                let q = fa / fc;
                let r = fb / fc;
                (
                    s * (2.0 * xm * q * (q - r) - (b - a) * (r - 1.0)),
                    (q - 1.0) * (r - 1.0) * (s - 1.0),
                )
            };
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        if d.abs() > tol1 {
            b += d;
        } else {
            b += tol1.copysign(xm);
        }
        fb = f(b);
        if (fb > 0.0) == (fc > 0.0) {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
    }
    b
}

/// Maximizes `f` over `iv` with a coarse grid pre-scan followed by
/// golden-section refinement inside the best cell. Returns `(argmax, max)`.
///
/// Ties: an exact plateau around the grid maximum resolves to the plateau's
/// midpoint, so a constant function yields the interval midpoint.
pub fn maximize_1d<F: Fn(f64) -> f64>(
    f: F,
    iv: Interval,
    n_prescan: usize,
    tol: f64,
) -> (f64, f64) {
    let n = n_prescan.max(8);
    let (a, b) = (iv.lo(), iv.hi());
    let step = (b - a) / n as f64;
    let xs: Vec<f64> = (0..=n)
        .map(|i| if i == n { b } else { a + step * i as f64 })
        .collect();
    let ys: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let mut best = 0;
    for (i, &y) in ys.iter().enumerate() {
        if y > ys[best] {
            best = i;
        }
    }
    // Exact plateau around the maximum: return its midpoint.
    let mut lo_i = best;
    while lo_i > 0 && ys[lo_i - 1] == ys[best] {
        lo_i -= 1;
    }
    let mut hi_i = best;
    while hi_i < n && ys[hi_i + 1] == ys[best] {
        hi_i += 1;
    }
    if hi_i > lo_i {
        let mid = 0.5 * (xs[lo_i] + xs[hi_i]);
        return (mid, f(mid).max(ys[best]));
    }
    let cell_lo = xs[best.saturating_sub(1)];
    let cell_hi = xs[(best + 1).min(n)];
    let (x, y) = golden_section_max(&f, cell_lo, cell_hi, tol);
    if y >= ys[best] {
        (x, y)
    } else {
        (xs[best], ys[best])
    }
}

fn golden_section_max<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a) > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// Shape-preserving cubic interpolant (Fritsch-Carlson slopes). Evaluation
/// clamps to the end values outside the knot range.
#[derive(Debug, Clone)]
pub struct MonotoneCubic {
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
}

impl MonotoneCubic {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() || xs.len() < 2 {
            return Err(Error::domain(
                "interpolation needs two or more matching knots",
            ));
        }
        if xs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::domain(
                "interpolation knots must be strictly increasing",
            ));
        }
        let n = xs.len();
        let mut secants = Vec::with_capacity(n - 1);
        for i in 0..n - 1 {
            secants.push((ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i]));
        }
        let mut slopes = vec![0.0; n];
        slopes[0] = secants[0];
        slopes[n - 1] = secants[n - 2];
        for i in 1..n - 1 {
            let (s0, s1) = (secants[i - 1], secants[i]);
            if s0 * s1 <= 0.0 {
                slopes[i] = 0.0;
            } else {
                // Weighted harmonic mean keeps the interpolant monotone.
                let h0 = xs[i] - xs[i - 1];
                let h1 = xs[i + 1] - xs[i];
                let w0 = 2.0 * h1 + h0;
                let w1 = h1 + 2.0 * h0;
                slopes[i] = (w0 + w1) / (w0 / s0 + w1 / s1);
            }
        }
        for i in 0..n - 1 {
            if secants[i] == 0.0 {
                slopes[i] = 0.0;
                slopes[i + 1] = 0.0;
            } else {
                let a = slopes[i] / secants[i];
                let b = slopes[i + 1] / secants[i];
                let s = a * a + b * b;
                if s > 9.0 {
                    let t = 3.0 / s.sqrt();
                    slopes[i] = t * a * secants[i];
                    slopes[i + 1] = t * b * secants[i];
                }
            }
        }
        Ok(Self { xs, ys, slopes })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.ys[0];
        }
        if x >= self.xs[n - 1] {
            return self.ys[n - 1];
        }
        let mut i = match self
            .xs
            .binary_search_by(|v| v.partial_cmp(&x).expect("knots are finite"))
        {
            Ok(i) => return self.ys[i],
            Err(i) => i - 1,
        };
        if i >= n - 1 {
            i = n - 2;
        }
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.ys[i]
            + h10 * h * self.slopes[i]
            + h01 * self.ys[i + 1]
            + h11 * h * self.slopes[i + 1]
    }
}
