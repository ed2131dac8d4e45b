//! Adaptive Simpson quadrature.

use crate::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    /// Absolute error target for the whole interval.
    pub abs_tol: f64,
    pub max_depth: u32,
    /// Equal panels the interval is split into before adapting, so that
    /// narrow features are not missed by the first five samples.
    pub initial_panels: usize,
    pub max_evals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions { abs_tol: 1e-9, max_depth: 48, initial_panels: 16, max_evals: 5_000_000 }
    }
}

impl QuadOptions {
    pub fn with_tol(abs_tol: f64) -> Self {
        QuadOptions { abs_tol, ..Self::default() }
    }
}

struct Segment {
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

/// ∫_a^b f. A non-finite value at either end of [a, b] (an integrable
/// endpoint singularity) is replaced by the value just inside the interval.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, opts: QuadOptions) -> Result<f64> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::domain(format!("integration limits must be finite, got [{a}, {b}]")));
    }
    if b == a {
        return Ok(0.0);
    }
    if b < a {
        return integrate(f, b, a, opts).map(|v| -v);
    }
    let nudge = (b - a) * 1e-12;
    let eval = |x: f64| -> f64 {
        let v = f(x);
        if v.is_finite() {
            v
        } else if x == a {
            f(a + nudge)
        } else if x == b {
            f(b - nudge)
        } else {
            v
        }
    };

    let panels = opts.initial_panels.max(1);
    let width = (b - a) / panels as f64;
    let mut stack = Vec::with_capacity(64);
    let mut evals = 0usize;
    let mut f_left = eval(a);
    evals += 1;
    for i in 0..panels {
        let pa = a + i as f64 * width;
        let pb = if i + 1 == panels { b } else { a + (i + 1) as f64 * width };
        let fm = eval(0.5 * (pa + pb));
        let fb = eval(pb);
        evals += 2;
        stack.push(Segment {
            a: pa,
            b: pb,
            fa: f_left,
            fm,
            fb,
            whole: simpson(pa, pb, f_left, fm, fb),
            tol: opts.abs_tol / panels as f64,
            depth: 0,
        });
        f_left = fb;
    }

    let mut total = 0.0;
    let mut unresolved = 0.0;
    while let Some(s) = stack.pop() {
        let m = 0.5 * (s.a + s.b);
        let lm = 0.5 * (s.a + m);
        let rm = 0.5 * (m + s.b);
        let flm = eval(lm);
        let frm = eval(rm);
        evals += 2;
        if !(flm.is_finite() && frm.is_finite()) {
            return Err(Error::domain(format!("integrand is not finite near {m}")));
        }
        let left = simpson(s.a, m, s.fa, flm, s.fm);
        let right = simpson(m, s.b, s.fm, frm, s.fb);
        let diff = left + right - s.whole;
        if diff.abs() <= 15.0 * s.tol || s.depth >= opts.max_depth || m <= s.a || m >= s.b {
            if diff.abs() > 15.0 * s.tol {
                unresolved += diff.abs() / 15.0;
            }
            total += left + right + diff / 15.0;
            continue;
        }
        if evals > opts.max_evals {
            return Err(Error::Quadrature { estimate: total + s.whole, error: f64::NAN });
        }
        let tol = 0.5 * s.tol;
        let depth = s.depth + 1;
        stack.push(Segment { a: s.a, b: m, fa: s.fa, fm: flm, fb: s.fm, whole: left, tol, depth });
        stack.push(Segment { a: m, b: s.b, fa: s.fm, fm: frm, fb: s.fb, whole: right, tol, depth });
    }
    if unresolved > opts.abs_tol {
        return Err(Error::Quadrature { estimate: total, error: unresolved });
    }
    Ok(total)
}

/// Dyadic pieces [b/2^(k+1), b/2^k] used by [`integrate_from_zero`], plus
/// the remainder [0, b/2^GRADED_LEVELS].
const GRADED_LEVELS: i32 = 60;

/// ∫_0^b f over dyadically graded pieces, so that features at any scale
/// between b·2^-60 and b are sampled by some piece.
fn integrate_graded<F: Fn(f64) -> f64>(f: F, b: f64, opts: QuadOptions) -> Result<f64> {
    let pieces = GRADED_LEVELS as usize + 1;
    let piece_opts = QuadOptions { abs_tol: opts.abs_tol / pieces as f64, initial_panels: 4, ..opts };
    let mut total = integrate(&f, 0.0, b * 2f64.powi(-GRADED_LEVELS), piece_opts)?;
    for k in (0..GRADED_LEVELS).rev() {
        total += integrate(&f, b * 2f64.powi(-k - 1), b * 2f64.powi(-k), piece_opts)?;
    }
    Ok(total)
}

/// Rewrites ∫_0^b f for an integrand that behaves like y^alpha near 0
/// (alpha > −1). For alpha < 0 it substitutes y = u^q with q = 2/(1 + alpha),
/// which leaves an integrand vanishing linearly at u = 0. Returns the new
/// integrand and upper limit.
pub fn origin_substitution<F: Fn(f64) -> f64>(f: F, b: f64, alpha: f64) -> (impl Fn(f64) -> f64, f64) {
    let q = if alpha < 0.0 { 2.0 / (1.0 + alpha) } else { 1.0 };
    let g = move |u: f64| {
        if q == 1.0 {
            f(u)
        } else if u <= 0.0 {
            0.0
        } else {
            f(u.powf(q)) * q * u.powf(q - 1.0)
        }
    };
    (g, b.powf(1.0 / q))
}

/// ∫_0^b f for integrands that behave like y^alpha at the origin and may
/// put their mass anywhere in [0, b]. When the result is below one the
/// tolerance is tightened to `opts.abs_tol` relative to a first estimate.
pub fn integrate_from_zero<F: Fn(f64) -> f64>(f: F, b: f64, alpha: f64, opts: QuadOptions) -> Result<f64> {
    if !(b.is_finite() && b >= 0.0) {
        return Err(Error::domain(format!("upper limit must be finite and nonnegative, got {b}")));
    }
    if b == 0.0 {
        return Ok(0.0);
    }
    let (g, ub) = origin_substitution(f, b, alpha);
    let first = integrate_graded(&g, ub, opts)?;
    let scale = first.abs();
    if scale >= 1.0 || scale == 0.0 {
        return Ok(first);
    }
    let tight = QuadOptions { abs_tol: (opts.abs_tol * scale).max(f64::MIN_POSITIVE), ..opts };
    integrate_graded(&g, ub, tight)
}
