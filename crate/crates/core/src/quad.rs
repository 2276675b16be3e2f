//! Scalar quadrature and root bracketing.

/// Adaptive Simpson quadrature of `f` on `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let budget = std::cell::Cell::new(MAX_EVALS);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 48, &budget)
}

/// Cap on integrand evaluations; integrable endpoint singularities would
/// otherwise refine without bound.
const MAX_EVALS: usize = 200_000;

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    budget: &std::cell::Cell<usize>,
) -> f64 {
    budget.set(budget.get().saturating_sub(2));
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || budget.get() == 0 || delta.abs() <= 15.0 * tol || (b - a).abs() < 1e-15 * (1.0 + a.abs()) {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, budget)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, budget)
}

/// Composite Simpson rule with `n` (rounded up to even) panels.
pub fn composite_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = (n.max(2) + 1) & !1;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + k as f64 * h);
    }
    s * h / 3.0
}

/// Root of `f` in a sign-changing bracket `[lo, hi]` by Illinois false position
/// with a bisection safeguard. Returns the final bracket midpoint.
pub fn bracketed_root(f: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64, xtol: f64, max_iter: usize) -> Option<f64> {
    let mut flo = f(lo);
    let mut fhi = f(hi);
    if flo == 0.0 {
        return Some(lo);
    }
    if fhi == 0.0 {
        return Some(hi);
    }
    if flo.signum() == fhi.signum() {
        return None;
    }
    let mut side = 0i32;
    for it in 0..max_iter {
        if (hi - lo).abs() <= xtol {
            break;
        }
        let mut x = (lo * fhi - hi * flo) / (fhi - flo);
        // every fourth step is a plain bisection so the bracket always shrinks
        if !x.is_finite() || x <= lo.min(hi) || x >= lo.max(hi) || it % 4 == 3 {
            x = 0.5 * (lo + hi);
        }
        let fx = f(x);
        if fx == 0.0 {
            return Some(x);
        }
        if fx.signum() == flo.signum() {
            lo = x;
            flo = fx;
            if side == -1 {
                fhi *= 0.5;
            }
            side = -1;
        } else {
            hi = x;
            fhi = fx;
            if side == 1 {
                flo *= 0.5;
            }
            side = 1;
        }
    }
    Some(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_is_exact_on_cubics() {
        let f = |x: f64| 1.0 + x - 3.0 * x * x + 0.5 * x * x * x;
        let exact = |x: f64| x + x * x / 2.0 - x * x * x + x.powi(4) / 8.0;
        assert!((composite_simpson(&f, -1.0, 2.0, 2) - (exact(2.0) - exact(-1.0))).abs() < 1e-13);
        assert!((adaptive_simpson(&f, -1.0, 2.0, 1e-14) - (exact(2.0) - exact(-1.0))).abs() < 1e-13);
    }

    #[test]
    fn adaptive_handles_endpoint_singularity() {
        // integral of 1/sqrt(x) on [0, 1] with the endpoint nudged
        let f = |x: f64| 1.0 / x.max(1e-300).sqrt();
        let got = adaptive_simpson(&f, 1e-12, 1.0, 1e-10);
        assert!((got - 2.0 * (1.0 - 1e-6)).abs() < 1e-6, "{got}");
    }

    #[test]
    fn root_of_cubic() {
        let f = |x: f64| x * x * x - 2.0;
        let r = bracketed_root(&f, 0.0, 2.0, 1e-15, 200).unwrap();
        assert!((r - 2f64.cbrt()).abs() < 1e-14);
        assert!(bracketed_root(&f, 2.0, 3.0, 1e-15, 200).is_none());
    }
}
