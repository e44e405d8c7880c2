//! Precomputed `G(x)` on a `J*`-ball with a calibrated power-law fallback.
//!
//! Exact values are tabulated out to `J*(x) <= R + margin` (the margin is
//! one step's worth of `J*`, so harmonicity stencils of every ball site stay
//! exact). `lookup` follows the contract: exact inside `J* <= R`, calibrated
//! `c_d / J(x)^{d-2}` outside, flagged. `best` prefers the exact value
//! wherever tabulated; the dense solvers use it.
//!
//! The cache file stores only canonical orbit values; the dense box is
//! rebuilt on load.

use rayon::prelude::*;
use rustc_hash::FxHashMap;

use super::exact::canon_full;
use super::fourier::{FourierEngine, GreenError};
use crate::lattice::{self, Pt, MAXD};
use crate::stepdist::{StepDistribution, Symmetry};

/// Box cell budget (dense f64 array).
const BOX_BUDGET: usize = 300_000_000;

#[derive(Debug, Clone)]
pub struct GreenTable {
    d: usize,
    dist_hash: u64,
    /// Lookup switches to the asymptote beyond this `J*` radius.
    r_jstar: f64,
    /// Exact values extend to here.
    r_exact: f64,
    tol: f64,
    half: [i32; MAXD],
    stride: [usize; MAXD],
    values: Vec<f64>,
    exact_bits: Vec<u64>,
    gamma_inv: Vec<f64>,
    /// Calibrated constant of `G ≈ c_d / J^{d-2}`.
    c_d: f64,
    /// `c_d · d^{(d-2)/2}`, for the `J*`-based evaluation.
    asym_k: f64,
    shell_spread: f64,
    seam_worst: f64,
    g0: f64,
    canonical: Vec<(Pt, f64)>,
}

impl GreenTable {
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn dist_hash(&self) -> u64 {
        self.dist_hash
    }

    pub fn cutoff_jstar(&self) -> f64 {
        self.r_jstar
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn asym_constant(&self) -> f64 {
        self.c_d
    }

    pub fn shell_spread(&self) -> f64 {
        self.shell_spread
    }

    pub fn seam_worst(&self) -> f64 {
        self.seam_worst
    }

    /// `G(0)`.
    pub fn g0(&self) -> f64 {
        self.g0
    }

    #[inline]
    fn box_index(&self, p: &Pt) -> Option<usize> {
        let mut idx = 0usize;
        for i in 0..self.d {
            let c = p[i];
            if c < -self.half[i] || c > self.half[i] {
                return None;
            }
            idx += (c + self.half[i]) as usize * self.stride[i];
        }
        Some(idx)
    }

    #[inline]
    pub fn jstar2(&self, p: &Pt) -> f64 {
        let d = self.d;
        let mut s = 0.0;
        for i in 0..d {
            let mut row = 0.0;
            for j in 0..d {
                row += self.gamma_inv[i * d + j] * p[j] as f64;
            }
            s += p[i] as f64 * row;
        }
        s
    }

    #[inline]
    fn asymptotic_from_jstar2(&self, js2: f64) -> f64 {
        // c_d / J^{d-2} with J = J*/√d.
        self.asym_k * js2.powf(-0.5 * (self.d as f64 - 2.0))
    }

    /// Contractual lookup: exact value iff `J*(x) <= R`, else the
    /// asymptote; the flag is true when the value is exact.
    #[inline]
    pub fn lookup(&self, p: &Pt) -> (f64, bool) {
        let js2 = self.jstar2(p);
        if js2 <= self.r_jstar * self.r_jstar {
            if let Some(idx) = self.box_index(p) {
                return (self.values[idx], true);
            }
        }
        (self.asymptotic_from_jstar2(js2), false)
    }

    /// Best available value: exact wherever tabulated (including the seam
    /// margin), asymptotic beyond. Dense kernels use this.
    #[inline]
    pub fn best(&self, p: &Pt) -> f64 {
        if let Some(idx) = self.box_index(p) {
            if self.exact_bits[idx >> 6] >> (idx & 63) & 1 == 1 {
                return self.values[idx];
            }
        }
        self.asymptotic_from_jstar2(self.jstar2(p))
    }

    /// True when `best` returns a tabulated (exact) value.
    pub fn is_exact(&self, p: &Pt) -> bool {
        self.box_index(p)
            .map(|idx| self.exact_bits[idx >> 6] >> (idx & 63) & 1 == 1)
            .unwrap_or(false)
    }

    /// Iterate the exact ball: `(site, G(site))` for `J* <= R + margin`.
    pub fn iter_exact(&self) -> impl Iterator<Item = (Pt, f64)> + '_ {
        BoxIter::new(self.d, &self.half).filter_map(move |p| {
            let idx = self.box_index(&p).unwrap();
            if self.exact_bits[idx >> 6] >> (idx & 63) & 1 == 1 {
                Some((p, self.values[idx]))
            } else {
                None
            }
        })
    }

    /// Serialize: magic "CGT1", metadata, then the canonical orbit values.
    pub fn save(&self, path: &std::path::Path) -> Result<(), GreenError> {
        let io = |e: std::io::Error| GreenError::Io { msg: e.to_string() };
        let mut buf: Vec<u8> = Vec::new();
        buf.extend_from_slice(b"CGT1");
        buf.extend_from_slice(&(self.d as u16).to_le_bytes());
        buf.extend_from_slice(&self.dist_hash.to_le_bytes());
        for v in [self.r_jstar, self.r_exact, self.tol, self.c_d, self.shell_spread, self.seam_worst, self.g0] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf.extend_from_slice(&(self.canonical.len() as u64).to_le_bytes());
        for (p, v) in &self.canonical {
            for c in &p[..self.d] {
                buf.extend_from_slice(&c.to_le_bytes());
            }
            buf.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::write(path, buf).map_err(io)
    }

    pub fn load(path: &std::path::Path, dist: &StepDistribution) -> Result<GreenTable, GreenError> {
        let io = |e: std::io::Error| GreenError::Io { msg: e.to_string() };
        let buf = std::fs::read(path).map_err(io)?;
        let bad = |msg: &str| GreenError::BadCache { msg: msg.to_string() };
        if buf.len() < 4 + 2 + 8 + 7 * 8 + 8 || &buf[..4] != b"CGT1" {
            return Err(bad("truncated or wrong magic"));
        }
        let mut at = 4usize;
        let mut take = |n: usize| {
            let s = &buf[at..at + n];
            at += n;
            s
        };
        let d = u16::from_le_bytes(take(2).try_into().unwrap()) as usize;
        let hash = u64::from_le_bytes(take(8).try_into().unwrap());
        if d != dist.dim() || hash != dist.hash() {
            return Err(bad("cache does not match distribution"));
        }
        let mut f = || f64::from_le_bytes(take(8).try_into().unwrap());
        let (r_jstar, r_exact, tol, c_d, shell_spread, seam_worst, g0) =
            (f(), f(), f(), f(), f(), f(), f());
        let count = u64::from_le_bytes(take(8).try_into().unwrap()) as usize;
        let mut canonical = Vec::with_capacity(count);
        for _ in 0..count {
            let mut p = lattice::ORIGIN;
            for c in p.iter_mut().take(d) {
                *c = i32::from_le_bytes(take(4).try_into().unwrap());
            }
            canonical.push((p, f64::from_le_bytes(take(8).try_into().unwrap())));
        }
        assemble(dist, r_jstar, r_exact, tol, c_d, shell_spread, seam_worst, g0, canonical)
    }
}

struct BoxIter {
    d: usize,
    half: [i32; MAXD],
    cur: Pt,
    done: bool,
}

impl BoxIter {
    fn new(d: usize, half: &[i32; MAXD]) -> Self {
        let mut cur = lattice::ORIGIN;
        for i in 0..d {
            cur[i] = -half[i];
        }
        BoxIter { d, half: *half, cur, done: false }
    }
}

impl Iterator for BoxIter {
    type Item = Pt;
    fn next(&mut self) -> Option<Pt> {
        if self.done {
            return None;
        }
        let out = self.cur;
        let mut i = 0;
        loop {
            if i == self.d {
                self.done = true;
                break;
            }
            self.cur[i] += 1;
            if self.cur[i] <= self.half[i] {
                break;
            }
            self.cur[i] = -self.half[i];
            i += 1;
        }
        Some(out)
    }
}

/// Canonical representative under the distribution's symmetry group.
fn canon_for(dist: &StepDistribution, p: &Pt) -> Pt {
    let d = dist.dim();
    match dist.symmetry() {
        Symmetry::FullHyperoctahedral => canon_full(p, d),
        Symmetry::AxisFlips => {
            let mut r = lattice::ORIGIN;
            for i in 0..d {
                r[i] = p[i].abs();
            }
            r
        }
        Symmetry::Central => {
            let n = lattice::neg(p);
            if n[..d] > p[..d] {
                *p
            } else {
                n
            }
        }
    }
}

/// Builds the table: quadrature on canonical orbit representatives out to
/// `J* <= R + step margin`, scatter to the dense box, calibrate `c_d` on
/// the shell `[0.8R, R]`, fill the remaining box cells with the asymptote,
/// and cross-check the seam.
pub fn build_table(
    dist: &StepDistribution,
    r_jstar: f64,
    tol: f64,
) -> Result<GreenTable, GreenError> {
    assert!(r_jstar >= 20.0, "table cutoff below the calibration regime");
    let d = dist.dim();
    let engine = FourierEngine::new(dist)?;
    // Margin: largest J* over single steps, so every harmonicity stencil of
    // a ball site reads exact values.
    let margin = dist
        .atoms()
        .iter()
        .map(|(z, _)| dist.j_star_pt(z))
        .fold(0.0f64, f64::max);
    let r_exact = r_jstar + margin;

    let half = half_widths(dist, r_exact);
    let cells: usize = (0..d).map(|i| (2 * half[i] + 1) as usize).product();
    if cells > BOX_BUDGET {
        return Err(GreenError::BudgetExceeded { what: format!("{cells} box cells") });
    }

    // Canonical representatives inside the exact ball.
    let r2 = r_exact * r_exact;
    let mut canon_set: FxHashMap<Pt, ()> = FxHashMap::default();
    for p in BoxIter::new(d, &half) {
        if jstar2_of(dist, &p) <= r2 {
            canon_set.entry(canon_for(dist, &p)).or_insert(());
        }
    }
    let mut canons: Vec<Pt> = canon_set.into_keys().collect();
    canons.sort_unstable();

    // Quadrature per representative; the origin gets the adaptive route at
    // a sharper tolerance (singleton capacities divide by G(0)).
    let canonical: Vec<(Pt, f64)> = canons
        .par_iter()
        .map(|p| {
            let v = if *p == lattice::ORIGIN {
                engine.green(p, (tol * 1e-2).min(1e-10)).map(|g| g.value)
            } else {
                Ok(engine.green_fast(p))
            };
            v.map(|v| (*p, v))
        })
        .collect::<Result<_, _>>()?;

    let (c_d, shell_spread, seam_worst, g0) =
        calibrate(dist, r_jstar, &canonical)?;
    assemble(
        dist,
        r_jstar,
        r_exact,
        tol,
        c_d,
        shell_spread,
        seam_worst,
        g0,
        canonical,
    )
}

fn half_widths(dist: &StepDistribution, r: f64) -> [i32; MAXD] {
    let d = dist.dim();
    let mut half = [0i32; MAXD];
    for i in 0..d {
        // Max coordinate on the J* <= r ellipsoid is r * sqrt(Γ_ii).
        half[i] = (r * dist.covariance()[i * d + i].sqrt()).floor() as i32;
    }
    half
}

fn jstar2_of(dist: &StepDistribution, p: &Pt) -> f64 {
    dist.j_star2_pt(p)
}

fn calibrate(
    dist: &StepDistribution,
    r_jstar: f64,
    canonical: &[(Pt, f64)],
) -> Result<(f64, f64, f64, f64), GreenError> {
    let d = dist.dim() as f64;
    let mut g0 = f64::NAN;
    // c_d from the shell 0.8 R <= J* <= R, weighting every orbit member.
    let (mut sum, mut weight) = (0.0f64, 0.0f64);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (p, v) in canonical {
        if *p == lattice::ORIGIN {
            g0 = *v;
        }
        let js = jstar2_of(dist, p).sqrt();
        if js >= 0.8 * r_jstar && js <= r_jstar {
            let j = js / d.sqrt();
            let scaled = v * j.powf(d - 2.0);
            let w = super::exact::orbit_size(p, dist.dim());
            sum += w * scaled;
            weight += w;
            lo = lo.min(scaled);
            hi = hi.max(scaled);
        }
    }
    let c_d = sum / weight;
    let spread = (hi - lo) / c_d;
    if !(spread < 0.05) {
        return Err(GreenError::CalibrationUnstable { spread });
    }
    // Seam: the asymptote against exact values near the switch radius.
    let mut seam_worst: f64 = 0.0;
    for (p, v) in canonical {
        let js = jstar2_of(dist, p).sqrt();
        if js >= r_jstar - 2.0 && js <= r_jstar {
            let j = js / d.sqrt();
            let asym = c_d / j.powf(d - 2.0);
            seam_worst = seam_worst.max((asym / v - 1.0).abs());
        }
    }
    if !(seam_worst < 0.03) {
        return Err(GreenError::SeamMismatch { worst: seam_worst });
    }
    Ok((c_d, spread, seam_worst, g0))
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    dist: &StepDistribution,
    r_jstar: f64,
    r_exact: f64,
    tol: f64,
    c_d: f64,
    shell_spread: f64,
    seam_worst: f64,
    g0: f64,
    canonical: Vec<(Pt, f64)>,
) -> Result<GreenTable, GreenError> {
    let d = dist.dim();
    let half = half_widths(dist, r_exact);
    let mut stride = [0usize; MAXD];
    let mut acc = 1usize;
    for i in 0..d {
        stride[i] = acc;
        acc *= (2 * half[i] + 1) as usize;
    }
    let cells = acc;
    if cells > BOX_BUDGET {
        return Err(GreenError::BudgetExceeded { what: format!("{cells} box cells") });
    }
    let canon_map: FxHashMap<Pt, f64> = canonical.iter().cloned().collect();
    let asym_k = c_d * (d as f64).powf(0.5 * (d as f64 - 2.0));
    let mut table = GreenTable {
        d,
        dist_hash: dist.hash(),
        r_jstar,
        r_exact,
        tol,
        half,
        stride,
        values: vec![0.0; cells],
        exact_bits: vec![0u64; cells.div_ceil(64)],
        gamma_inv: dist.covariance_inv().to_vec(),
        c_d,
        asym_k,
        shell_spread,
        seam_worst,
        g0,
        canonical,
    };
    let r2 = r_exact * r_exact;
    for p in BoxIter::new(d, &half) {
        let idx = table.box_index(&p).unwrap();
        let js2 = table.jstar2(&p);
        if js2 <= r2 {
            match canon_map.get(&canon_for(dist, &p)) {
                Some(v) => {
                    table.values[idx] = *v;
                    table.exact_bits[idx >> 6] |= 1 << (idx & 63);
                }
                None => {
                    return Err(GreenError::BadCache {
                        msg: format!("missing canonical value for {:?}", &p[..d]),
                    })
                }
            }
        } else {
            table.values[idx] = table.asymptotic_from_jstar2(js2);
        }
    }
    Ok(table)
}

/// Cache path for a distribution/radius/tolerance triple.
pub fn cache_path(dir: &std::path::Path, dist: &StepDistribution, r: f64, tol: f64) -> std::path::PathBuf {
    dir.join(format!("green-{:016x}-r{}-t{:e}.cgt", dist.hash(), r, tol))
}

/// Load from the cache directory or build and save.
pub fn load_or_build(
    dist: &StepDistribution,
    r: f64,
    tol: f64,
    cache_dir: Option<&std::path::Path>,
    rebuild: bool,
) -> Result<GreenTable, GreenError> {
    if let Some(dir) = cache_dir {
        let path = cache_path(dir, dist, r, tol);
        if !rebuild && path.exists() {
            if let Ok(t) = GreenTable::load(&path, dist) {
                return Ok(t);
            }
        }
        let t = build_table(dist, r, tol)?;
        std::fs::create_dir_all(dir).map_err(|e| GreenError::Io { msg: e.to_string() })?;
        t.save(&path)?;
        Ok(t)
    } else {
        build_table(dist, r, tol)
    }
}
