//! Adaptive Simpson quadrature on a finite interval.

const MAX_DEPTH: u32 = 48;

/// Integrates `f` over `[lo, hi]` to an absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64, tol: f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    let mid = 0.5 * (lo + hi);
    let (fa, fm, fb) = (f(lo), f(mid), f(hi));
    let whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
    recurse(f, lo, hi, fa, fm, fb, whole, tol, MAX_DEPTH)
}

#[allow(clippy::too_many_arguments)]
fn recurse<F: Fn(f64) -> f64>(
    f: &F,
    lo: f64,
    hi: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let mid = 0.5 * (lo + hi);
    let (lm, rm) = (0.5 * (lo + mid), 0.5 * (mid + hi));
    let (flm, frm) = (f(lm), f(rm));
    let left = (mid - lo) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (hi - mid) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    recurse(f, lo, mid, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + recurse(f, mid, hi, fm, frm, fb, right, 0.5 * tol, depth - 1)
}
