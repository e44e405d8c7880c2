//! The Gaussian local-limit density `p̄_n` and sup-error scans against the
//! exact convolution field.

use super::exact::ExactField;
use super::fourier::GreenError;
use crate::lattice::Pt;
use crate::stepdist::{Parity, StepDistribution};

/// `p̄_n(x) = (2πn)^{-d/2} (det Γ)^{-1/2} exp(-J*(x)²/(2n))`.
pub fn lclt_density(dist: &StepDistribution, n: usize, x: &Pt) -> f64 {
    let d = dist.dim() as f64;
    let n = n as f64;
    let js2 = dist.j_star2_pt(x);
    (2.0 * std::f64::consts::PI * n).powf(-0.5 * d) * dist.det_covariance().powf(-0.5)
        * (-js2 / (2.0 * n)).exp()
}

/// One row of the LCLT error table: `sup_x |error_n(x)|` and its scaling
/// `sup * n^{(d+2)/2}`, where the error is `p_n - p̄_n` for aperiodic walks
/// and `p_n + p_{n+1} - 2 p̄_n` for bipartite ones.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct LcltRow {
    pub n: usize,
    pub sup_error: f64,
    pub scaled: f64,
}

/// Sup errors at the requested step counts (ascending), one exact-field
/// sweep.
pub fn lclt_sup_errors(dist: &StepDistribution, ns: &[usize]) -> Result<Vec<LcltRow>, GreenError> {
    let d = dist.dim() as f64;
    let bipartite = dist.parity() == Parity::Bipartite;
    let n_max = *ns.iter().max().unwrap() + if bipartite { 1 } else { 0 };
    let mut field = ExactField::new(dist, n_max)?;
    let mut rows = Vec::with_capacity(ns.len());
    let mut want: Vec<usize> = ns.to_vec();
    want.sort_unstable();
    let mut next = 0usize;
    for step in 1..=n_max {
        field.step()?;
        if next < want.len() {
            let n = want[next];
            // For bipartite walks the pair (p_n, p_{n+1}) is read once the
            // field reaches n+1.
            let ready = if bipartite { step == n + 1 } else { step == n };
            if ready {
                let mut sup: f64 = 0.0;
                field.for_each_state(|pt, p_cur, p_prev| {
                    let (pn, pn1) = if bipartite { (p_prev, p_cur) } else { (p_cur, 0.0) };
                    let pbar = lclt_density(dist, n, pt);
                    let err = if bipartite {
                        (pn + pn1 - 2.0 * pbar).abs()
                    } else {
                        (pn - pbar).abs()
                    };
                    if err > sup {
                        sup = err;
                    }
                });
                rows.push(LcltRow { n, sup_error: sup, scaled: sup * (n as f64).powf(0.5 * (d + 2.0)) });
                next += 1;
            }
        }
    }
    Ok(rows)
}

/// `sup_x p_n(x) · min(n^{d/2}, ‖x‖^d)`: the large-x transition bound
/// pattern, which should stay bounded over the exact regime.
pub fn pn_largex_scaled_sup(dist: &StepDistribution, n: usize) -> Result<f64, GreenError> {
    let d = dist.dim() as f64;
    let mut field = ExactField::new(dist, n)?;
    for _ in 0..n {
        field.step()?;
    }
    let mut sup: f64 = 0.0;
    field.for_each_state(|pt, p, _| {
        if p > 0.0 {
            let norm = crate::lattice::norm2(pt).sqrt();
            let weight = (n as f64).powf(0.5 * d).min(norm.powf(d).max(1.0));
            sup = sup.max(p * weight);
        }
    });
    Ok(sup)
}
