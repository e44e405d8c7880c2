//! Exact n-step transition probabilities by dynamic-programming convolution,
//! and the lower-index Green's functions `G_ℓ(x) = Σ_{n ≥ ℓ} p_n(x)`.
//!
//! Fully hyperoctahedral laws (the simple and lazy walks) run on canonical
//! orbits — states are sorted absolute coordinate tuples — which shrinks the
//! reachable set by the group order (3840 in dimension five). Other laws
//! fall back to a sparse map with a strict budget.

use rustc_hash::FxHashMap;

use super::fourier::{FourierEngine, GreenError};
use crate::lattice::{self, Pt, MAXD};
use crate::stepdist::{StepDistribution, Symmetry};

/// Hard cap on DP states.
const STATE_BUDGET: usize = 20_000_000;
/// Sparse fallback prune threshold; total dropped mass stays below 1e-10
/// for 64 steps within the state budget.
const PRUNE: f64 = 1e-20;

/// Canonical orbit representative: coordinates replaced by absolute values,
/// sorted descending.
pub fn canon_full(p: &Pt, d: usize) -> Pt {
    let mut r = [0i32; MAXD];
    for i in 0..d {
        r[i] = p[i].abs();
    }
    r[..d].sort_unstable_by(|a, b| b.cmp(a));
    r
}

/// Orbit size of a canonical state: sign choices on nonzero coordinates
/// times distinct permutations.
pub fn orbit_size(state: &Pt, d: usize) -> f64 {
    let nonzero = state[..d].iter().filter(|&&c| c != 0).count() as u32;
    let mut perms = 1.0;
    for i in 1..=d {
        perms *= i as f64;
    }
    let mut i = 0;
    while i < d {
        let mut j = i;
        while j < d && state[j] == state[i] {
            j += 1;
        }
        let mut fact = 1.0;
        for k in 1..=(j - i) {
            fact *= k as f64;
        }
        perms /= fact;
        i = j;
    }
    2f64.powi(nonzero as i32) * perms
}

enum Backend {
    Orbit {
        states: Vec<Pt>,
        index: FxHashMap<Pt, u32>,
        /// `states.len() x atoms` transition targets.
        trans: Vec<u32>,
        cur: Vec<f64>,
        prev: Vec<f64>,
    },
    Sparse {
        cur: FxHashMap<u128, f64>,
        prev: FxHashMap<u128, f64>,
        origin_centered: FxHashMap<Pt, f64>,
        prev_centered: FxHashMap<Pt, f64>,
    },
}

/// The exact field `p_n(·)`, advanced one step at a time.
pub struct ExactField<'a> {
    dist: &'a StepDistribution,
    n: usize,
    backend: Backend,
}

impl<'a> ExactField<'a> {
    pub fn new(dist: &'a StepDistribution, n_max: usize) -> Result<Self, GreenError> {
        let d = dist.dim();
        if dist.symmetry() == Symmetry::FullHyperoctahedral {
            let l1max: i32 = dist
                .atoms()
                .iter()
                .map(|(z, _)| z.iter().map(|c| c.abs()).sum::<i32>())
                .max()
                .unwrap();
            let budget = (n_max as i32 + 1) * l1max;
            let mut states = Vec::new();
            let mut cur = [0i32; MAXD];
            enumerate_sorted(&mut states, &mut cur, 0, d, budget, budget);
            if states.len() > STATE_BUDGET {
                return Err(GreenError::BudgetExceeded {
                    what: format!("{} orbit states", states.len()),
                });
            }
            let mut index = FxHashMap::with_capacity_and_hasher(states.len(), Default::default());
            for (i, s) in states.iter().enumerate() {
                index.insert(*s, i as u32);
            }
            let n_atoms = dist.atoms().len();
            let mut trans = vec![u32::MAX; states.len() * n_atoms];
            for (i, s) in states.iter().enumerate() {
                for (a, (z, _)) in dist.atoms().iter().enumerate() {
                    let t = canon_full(&lattice::add(s, z), d);
                    if let Some(&j) = index.get(&t) {
                        trans[i * n_atoms + a] = j;
                    }
                }
            }
            let mut cur = vec![0.0; states.len()];
            let origin = index[&[0i32; MAXD]];
            cur[origin as usize] = 1.0;
            Ok(ExactField {
                dist,
                n: 0,
                backend: Backend::Orbit { states, index, trans, cur, prev: Vec::new() },
            })
        } else {
            let mut cur = FxHashMap::default();
            cur.insert(lattice::key(&lattice::ORIGIN).unwrap(), 1.0);
            let mut oc = FxHashMap::default();
            oc.insert(lattice::ORIGIN, 1.0);
            Ok(ExactField {
                dist,
                n: 0,
                backend: Backend::Sparse {
                    cur,
                    prev: FxHashMap::default(),
                    origin_centered: oc,
                    prev_centered: FxHashMap::default(),
                },
            })
        }
    }

    pub fn step_index(&self) -> usize {
        self.n
    }

    /// Advance `p_n -> p_{n+1}`.
    pub fn step(&mut self) -> Result<(), GreenError> {
        let d = self.dist.dim();
        match &mut self.backend {
            Backend::Orbit { states, trans, cur, prev, .. } => {
                let n_atoms = self.dist.atoms().len();
                let probs: Vec<f64> = self.dist.atoms().iter().map(|(_, p)| *p).collect();
                let mut next = vec![0.0; states.len()];
                // p_{n+1}(y) = Σ_z p(z) p_n(y - z); by symmetry of the
                // support, iterating +z over all atoms is equivalent.
                for (i, nx) in next.iter_mut().enumerate() {
                    let row = &trans[i * n_atoms..(i + 1) * n_atoms];
                    let mut s = 0.0;
                    for (a, &j) in row.iter().enumerate() {
                        if j != u32::MAX {
                            s += probs[a] * cur[j as usize];
                        }
                    }
                    *nx = s;
                }
                *prev = std::mem::take(cur);
                *cur = next;
            }
            Backend::Sparse { cur, prev, origin_centered, prev_centered } => {
                let mut next: FxHashMap<u128, f64> =
                    FxHashMap::with_capacity_and_hasher(cur.len() * 2, Default::default());
                let mut next_c: FxHashMap<Pt, f64> =
                    FxHashMap::with_capacity_and_hasher(cur.len() * 2, Default::default());
                for (p, mass) in origin_centered.iter() {
                    for (z, w) in self.dist.atoms() {
                        let q = lattice::add(p, z);
                        let m = mass * w;
                        *next_c.entry(q).or_insert(0.0) += m;
                    }
                }
                next_c.retain(|_, m| *m >= PRUNE);
                if next_c.len() > STATE_BUDGET {
                    return Err(GreenError::BudgetExceeded {
                        what: format!("{} sparse states at step {}", next_c.len(), self.n + 1),
                    });
                }
                for (p, m) in next_c.iter() {
                    let k = lattice::key(p).ok_or_else(|| GreenError::BudgetExceeded {
                        what: "coordinate overflow in sparse field".into(),
                    })?;
                    next.insert(k, *m);
                }
                *prev = std::mem::take(cur);
                *prev_centered = std::mem::take(origin_centered);
                *cur = next;
                *origin_centered = next_c;
                let _ = d;
            }
        }
        self.n += 1;
        Ok(())
    }

    /// `p_n(x)` for the current `n`.
    pub fn prob_at(&self, x: &Pt) -> f64 {
        let d = self.dist.dim();
        match &self.backend {
            Backend::Orbit { index, cur, .. } => {
                index.get(&canon_full(x, d)).map_or(0.0, |&i| cur[i as usize])
            }
            Backend::Sparse { cur, .. } => {
                lattice::key(x).and_then(|k| cur.get(&k)).copied().unwrap_or(0.0)
            }
        }
    }

    /// `p_{n-1}(x)`.
    pub fn prob_prev_at(&self, x: &Pt) -> f64 {
        let d = self.dist.dim();
        match &self.backend {
            Backend::Orbit { index, prev, .. } => {
                index.get(&canon_full(x, d)).map_or(0.0, |&i| prev.get(i as usize).copied().unwrap_or(0.0))
            }
            Backend::Sparse { prev, .. } => {
                lattice::key(x).and_then(|k| prev.get(&k)).copied().unwrap_or(0.0)
            }
        }
    }

    /// Total mass `Σ_x p_n(x)`, orbit-weighted.
    pub fn total_mass(&self) -> f64 {
        let d = self.dist.dim();
        match &self.backend {
            Backend::Orbit { states, cur, .. } => {
                let mut s = 0.0;
                for (st, p) in states.iter().zip(cur) {
                    if *p != 0.0 {
                        s += orbit_size(st, d) * p;
                    }
                }
                s
            }
            Backend::Sparse { origin_centered, .. } => origin_centered.values().sum(),
        }
    }

    /// Visit every site with nonzero recorded mass: `f(point, p_n, p_{n-1})`.
    /// For the orbit backend the point is the canonical representative.
    pub fn for_each_state(&self, mut f: impl FnMut(&Pt, f64, f64)) {
        match &self.backend {
            Backend::Orbit { states, cur, prev, .. } => {
                for (i, st) in states.iter().enumerate() {
                    let p = cur[i];
                    let q = prev.get(i).copied().unwrap_or(0.0);
                    if p != 0.0 || q != 0.0 {
                        f(st, p, q);
                    }
                }
            }
            Backend::Sparse { origin_centered, prev_centered, .. } => {
                for (pt, &p) in origin_centered.iter() {
                    let q = prev_centered.get(pt).copied().unwrap_or(0.0);
                    f(pt, p, q);
                }
                for (pt, &q) in prev_centered.iter() {
                    if !origin_centered.contains_key(pt) {
                        f(pt, 0.0, q);
                    }
                }
            }
        }
    }
}

fn enumerate_sorted(out: &mut Vec<Pt>, cur: &mut Pt, pos: usize, d: usize, left: i32, prev: i32) {
    if pos == d {
        out.push(*cur);
        return;
    }
    let cap = prev.min(left);
    for v in (0..=cap).rev() {
        cur[pos] = v;
        enumerate_sorted(out, cur, pos + 1, d, left - v, v);
    }
    cur[pos] = 0;
}

/// Exact `p_n(x)`, `n` as given (budget permitting).
pub fn transition_probability_exact(
    dist: &StepDistribution,
    n: usize,
    x: &Pt,
) -> Result<f64, GreenError> {
    let mut field = ExactField::new(dist, n)?;
    for _ in 0..n {
        field.step()?;
    }
    Ok(field.prob_at(x))
}

/// `G_ℓ(x) = G(x) - Σ_{n < ℓ} p_n(x)`, exact below `ℓ <= 64`.
pub fn green_lower_index(
    dist: &StepDistribution,
    engine: &FourierEngine<'_>,
    ell: usize,
    x: &Pt,
    tol: f64,
) -> Result<f64, GreenError> {
    if ell > 64 {
        return Err(GreenError::BudgetExceeded { what: format!("ell = {ell} > 64") });
    }
    let g = engine.green(x, tol)?.value;
    if ell == 0 {
        return Ok(g);
    }
    let mut field = ExactField::new(dist, ell)?;
    let mut partial = field.prob_at(x); // p_0
    for _ in 1..ell {
        field.step()?;
        partial += field.prob_at(x);
    }
    Ok(g - partial)
}
