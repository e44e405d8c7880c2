//! One-dimensional Gauss-Legendre quadrature with adaptive bisection.
//!
//! Shared by the Brownian kernel integrals and by the Green's function
//! machinery (per-axis rules of the tensor panels, calibration sums).

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`,
/// computed by Newton iteration on the Legendre recurrence and cached.
pub fn gauss_legendre(n: usize) -> &'static (Vec<f64>, Vec<f64>) {
    static CACHE: OnceLock<Mutex<HashMap<usize, &'static (Vec<f64>, Vec<f64>)>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap();
    if let Some(v) = guard.get(&n) {
        return v;
    }
    let rule: &'static _ = Box::leak(Box::new(compute_gl(n)));
    guard.insert(n, rule);
    rule
}

fn compute_gl(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Legendre recurrence for P_n(x) and P_n'(x).
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        weights[i] = w;
        nodes[n - 1 - i] = x;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Fixed `n`-point Gauss-Legendre approximation of `∫_a^b f`.
pub fn fixed<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, n: usize) -> f64 {
    let (x, w) = gauss_legendre(n);
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut s = 0.0;
    for i in 0..n {
        s += w[i] * f(c + h * x[i]);
    }
    s * h
}

/// Adaptive Gauss-Legendre integration of `f` on `[a, b]`.
///
/// Worst-panel-first refinement: each panel carries the 15-point value and
/// an error estimate from bisecting it once; the panel with the largest
/// estimate is split until the summed estimate meets `tol`, a relative
/// rounding floor, or the split budget. Returns `(value, error_estimate)`.
pub fn adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> (f64, f64) {
    const M: usize = 15;
    const MAX_SPLITS: usize = 4000;
    if a == b {
        return (0.0, 0.0);
    }

    struct Panel {
        a: f64,
        b: f64,
        left: f64,
        right: f64,
        err: f64,
    }
    let eval = |a: f64, b: f64| -> Panel {
        let m = 0.5 * (a + b);
        let whole = fixed(|x| f(x), a, b, M);
        let left = fixed(|x| f(x), a, m, M);
        let right = fixed(|x| f(x), m, b, M);
        let err = (left + right - whole).abs();
        // Non-finite panels keep getting split until the interval is
        // exhausted rather than poisoning the error sum.
        let err = if err.is_finite() { err } else { f64::MAX };
        Panel { a, b, left, right, err }
    };

    let mut panels = vec![eval(a, b)];
    let mut splits = 0usize;
    loop {
        let mut err_sum = 0.0;
        let mut abs_sum = 0.0;
        let mut worst = 0usize;
        let mut worst_err = -1.0;
        for (i, p) in panels.iter().enumerate() {
            err_sum += p.err;
            abs_sum += p.left.abs() + p.right.abs();
            if p.err > worst_err {
                worst_err = p.err;
                worst = i;
            }
        }
        // The 1e-14 floor stops refinement once the estimate is dominated
        // by f64 rounding of the panel sums.
        if err_sum <= tol.max(1e-14 * abs_sum) || splits >= MAX_SPLITS {
            let value: f64 = panels.iter().map(|p| p.left + p.right).sum();
            return (value, err_sum);
        }
        let Panel { a, b, .. } = panels[worst];
        let m = 0.5 * (a + b);
        if !(a < m && m < b) {
            // Interval exhausted at f64 resolution.
            panels[worst].err = 0.0;
            continue;
        }
        panels[worst] = eval(a, m);
        panels.push(eval(m, b));
        splits += 1;
    }
}

/// Convenience wrapper returning just the value.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    adaptive(&f, a, b, tol).0
}
