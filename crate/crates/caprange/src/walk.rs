//! Walk simulation, range indexing, and range-intersection queries.
//!
//! Positions are stored packed as signed 16-bit coordinate tuples (16 bytes
//! per site); memory bandwidth dominates long-walk simulation. A walk whose
//! coordinates would leave the 16-bit range aborts with `PathOverflow`
//! instead of silently corrupting hash keys — desk-scale runs sit far below
//! the boundary.

use rustc_hash::{FxHashMap, FxHashSet};

use crate::lattice::{self, Pt, MAXD};
use crate::rng::CounterRng;
use crate::stepdist::StepDistribution;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WalkError {
    PathOverflow { at: usize },
    BadDump { msg: String },
}

impl std::fmt::Display for WalkError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            WalkError::PathOverflow { at } => write!(f, "coordinate overflow at step {at}"),
            WalkError::BadDump { msg } => write!(f, "bad path dump: {msg}"),
        }
    }
}

impl std::error::Error for WalkError {}

/// An ordered trajectory `S_0..S_n` started at the origin.
#[derive(Debug, Clone)]
pub struct Path {
    d: usize,
    pos: Vec<[i16; MAXD]>,
}

impl Path {
    /// Number of steps `n` (the path holds `n + 1` positions).
    pub fn steps(&self) -> usize {
        self.pos.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn position(&self, i: usize) -> Pt {
        lattice::unpack(&self.pos[i])
    }

    #[inline]
    pub fn key_at(&self, i: usize) -> u128 {
        lattice::key_packed(&self.pos[i])
    }

    pub fn keys(&self) -> impl Iterator<Item = u128> + '_ {
        self.pos.iter().map(lattice::key_packed)
    }

    pub fn positions(&self) -> impl Iterator<Item = Pt> + '_ {
        self.pos.iter().map(lattice::unpack)
    }

    /// Deduplicated site set as hash keys.
    pub fn site_set(&self) -> FxHashSet<u128> {
        let mut s = FxHashSet::with_capacity_and_hasher(self.pos.len(), Default::default());
        s.extend(self.keys());
        s
    }

    /// Deduplicated sites as points, in first-visit order.
    pub fn distinct_sites(&self) -> Vec<Pt> {
        let mut seen = FxHashSet::with_capacity_and_hasher(self.pos.len(), Default::default());
        let mut out = Vec::new();
        for (p, k) in self.positions().zip(self.keys()) {
            if seen.insert(k) {
                out.push(p);
            }
        }
        out
    }
}

/// Simulate `n` steps from the origin.
pub fn simulate(dist: &StepDistribution, n: usize, rng: &mut CounterRng) -> Result<Path, WalkError> {
    let mut pos = Vec::with_capacity(n + 1);
    let mut cur = lattice::ORIGIN;
    pos.push([0i16; MAXD]);
    for i in 0..n {
        cur = lattice::add(&cur, &dist.sample_step(rng));
        match lattice::pack(&cur) {
            Some(p) => pos.push(p),
            None => return Err(WalkError::PathOverflow { at: i + 1 }),
        }
    }
    Ok(Path { d: dist.dim(), pos })
}

/// A two-sided walk `S_{-n_neg}..S_{n_pos}`: two independent one-sided walks
/// glued at the origin, stored as two arrays; the accessor resolves signs.
#[derive(Debug, Clone)]
pub struct TwoSidedPath {
    neg: Path,
    pos: Path,
}

impl TwoSidedPath {
    pub fn n_neg(&self) -> usize {
        self.neg.steps()
    }

    pub fn n_pos(&self) -> usize {
        self.pos.steps()
    }

    #[inline]
    pub fn position(&self, i: i64) -> Pt {
        if i >= 0 {
            self.pos.position(i as usize)
        } else {
            self.neg.position((-i) as usize)
        }
    }

    #[inline]
    pub fn key_at(&self, i: i64) -> u128 {
        if i >= 0 {
            self.pos.key_at(i as usize)
        } else {
            self.neg.key_at((-i) as usize)
        }
    }

    pub fn positive_side(&self) -> &Path {
        &self.pos
    }

    pub fn negative_side(&self) -> &Path {
        &self.neg
    }

    /// Site set of `R[-n_neg, n_pos]`.
    pub fn site_set(&self) -> FxHashSet<u128> {
        let mut s = self.pos.site_set();
        s.extend(self.neg.keys());
        s
    }
}

/// The negative side is drawn first, then the positive side, from one stream.
pub fn simulate_two_sided(
    dist: &StepDistribution,
    n_neg: usize,
    n_pos: usize,
    rng: &mut CounterRng,
) -> Result<TwoSidedPath, WalkError> {
    let neg = simulate(dist, n_neg, rng)?;
    let pos = simulate(dist, n_pos, rng)?;
    Ok(TwoSidedPath { neg, pos })
}

/// Site -> (first visit, last visit) index of a path's range.
#[derive(Debug, Clone)]
pub struct RangeIndex {
    map: FxHashMap<u128, (u32, u32)>,
}

impl RangeIndex {
    pub fn distinct_count(&self) -> usize {
        self.map.len()
    }

    pub fn first_visit(&self, key: u128) -> Option<u32> {
        self.map.get(&key).map(|v| v.0)
    }

    pub fn last_visit(&self, key: u128) -> Option<u32> {
        self.map.get(&key).map(|v| v.1)
    }

    /// Last-visit indicator `Z_k^n`: 1 iff the site at index `k` is not
    /// revisited later.
    pub fn is_last_visit(&self, path: &Path, k: usize) -> bool {
        self.map[&path.key_at(k)].1 == k as u32
    }

    pub fn iter(&self) -> impl Iterator<Item = (&u128, &(u32, u32))> {
        self.map.iter()
    }
}

/// Exact first/last visit indices for every site of the path.
pub fn build_range_index(path: &Path) -> RangeIndex {
    let mut map: FxHashMap<u128, (u32, u32)> =
        FxHashMap::with_capacity_and_hasher(path.pos.len(), Default::default());
    for (i, k) in path.keys().enumerate() {
        map.entry(k)
            .and_modify(|e| e.1 = i as u32)
            .or_insert((i as u32, i as u32));
    }
    RangeIndex { map }
}

/// Smallest `τ` with `x + B_τ ∈ A` (A given as a key set), plus the hit
/// site, scanning B in time order.
pub fn range_hit(
    a_sites: &FxHashSet<u128>,
    b: &Path,
    shift: &Pt,
) -> Option<(usize, Pt)> {
    for (tau, p) in b.positions().enumerate() {
        let site = lattice::add(&p, shift);
        if let Some(k) = lattice::key(&site) {
            if a_sites.contains(&k) {
                return Some((tau, site));
            }
        }
    }
    None
}

/// Binary path dump: magic "CRW1", u16 d, u64 n, then packed little-endian
/// 16-bit coordinate tuples (d per site).
pub fn dump_path(path: &Path, w: &mut impl std::io::Write) -> std::io::Result<()> {
    w.write_all(b"CRW1")?;
    w.write_all(&(path.d as u16).to_le_bytes())?;
    w.write_all(&(path.steps() as u64).to_le_bytes())?;
    for p in &path.pos {
        for c in &p[..path.d] {
            w.write_all(&c.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn load_path(r: &mut impl std::io::Read) -> Result<Path, WalkError> {
    let io = |e: std::io::Error| WalkError::BadDump { msg: e.to_string() };
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != b"CRW1" {
        return Err(WalkError::BadDump { msg: "bad magic".into() });
    }
    let mut b2 = [0u8; 2];
    r.read_exact(&mut b2).map_err(io)?;
    let d = u16::from_le_bytes(b2) as usize;
    if !(1..=MAXD).contains(&d) {
        return Err(WalkError::BadDump { msg: format!("bad dimension {d}") });
    }
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8).map_err(io)?;
    let n = u64::from_le_bytes(b8) as usize;
    let mut pos = Vec::with_capacity(n + 1);
    for _ in 0..=n {
        let mut p = [0i16; MAXD];
        for c in p.iter_mut().take(d) {
            r.read_exact(&mut b2).map_err(io)?;
            *c = i16::from_le_bytes(b2);
        }
        pos.push(p);
    }
    Ok(Path { d, pos })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn srw5() -> StepDistribution {
        StepDistribution::by_name("srw5").unwrap()
    }

    #[test]
    fn zero_steps_is_origin() {
        let p = simulate(&srw5(), 0, &mut CounterRng::stream(1, 0, 0)).unwrap();
        assert_eq!(p.steps(), 0);
        assert_eq!(p.position(0), lattice::ORIGIN);
    }

    #[test]
    fn consecutive_differences_are_atoms() {
        let dist = srw5();
        let p = simulate(&dist, 500, &mut CounterRng::stream(2, 0, 0)).unwrap();
        let atoms: FxHashSet<Pt> = dist.atoms().iter().map(|(z, _)| *z).collect();
        for i in 1..=p.steps() {
            let dz = lattice::sub(&p.position(i), &p.position(i - 1));
            assert!(atoms.contains(&dz), "step {i}");
        }
    }

    #[test]
    fn mean_square_displacement() {
        // E ||S_n||^2 = n * tr(Γ) = n for SRW.
        let dist = srw5();
        let n = 10_000;
        let trials = 1000;
        let mut vals = Vec::with_capacity(trials);
        for t in 0..trials {
            let mut rng = CounterRng::stream(42, rng::component::WALK, t as u64);
            let p = simulate(&dist, n, &mut rng).unwrap();
            vals.push(lattice::norm2(&p.position(n)));
        }
        let mean = crate::stats::mean(&vals);
        let se = crate::stats::stderr_of_mean(&vals);
        assert!(
            (mean - n as f64).abs() < 3.0 * se,
            "mean {mean}, se {se}, expect {n}"
        );
    }

    #[test]
    fn two_sided_sides_are_independent() {
        // Empirical covariance of the first coordinates of S_{-n} and S_n.
        let dist = srw5();
        let n = 400;
        let trials = 2000;
        let mut prods = Vec::with_capacity(trials);
        for t in 0..trials {
            let mut rng = CounterRng::stream(7, rng::component::TWOSIDED, t as u64);
            let p = simulate_two_sided(&dist, n, n, &mut rng).unwrap();
            let a = p.position(-(n as i64))[0] as f64;
            let b = p.position(n as i64)[0] as f64;
            prods.push(a * b);
        }
        let mean = crate::stats::mean(&prods);
        let se = crate::stats::stderr_of_mean(&prods);
        assert!(mean.abs() < 3.0 * se, "cov {mean} vs se {se}");
    }

    #[test]
    fn range_index_hand_trace() {
        // 0 -> e1 -> 0: Z_0 = 0, Z_1 = 1, Z_2 = 1.
        let mut pos = vec![[0i16; MAXD]];
        let mut e1 = [0i16; MAXD];
        e1[0] = 1;
        pos.push(e1);
        pos.push([0i16; MAXD]);
        let p = Path { d: 5, pos };
        let idx = build_range_index(&p);
        assert_eq!(idx.distinct_count(), 2);
        assert!(!idx.is_last_visit(&p, 0));
        assert!(idx.is_last_visit(&p, 1));
        assert!(idx.is_last_visit(&p, 2));
        assert_eq!(idx.first_visit(p.key_at(0)), Some(0));
        assert_eq!(idx.last_visit(p.key_at(0)), Some(2));
    }

    #[test]
    fn last_visits_count_distinct_sites() {
        let dist = srw5();
        for t in 0..20 {
            let mut rng = CounterRng::stream(9, rng::component::WALK, t);
            let p = simulate(&dist, 300, &mut rng).unwrap();
            let idx = build_range_index(&p);
            let z_sum = (0..=p.steps()).filter(|&k| idx.is_last_visit(&p, k)).count();
            assert_eq!(z_sum, idx.distinct_count());
        }
    }

    #[test]
    fn range_index_idempotent() {
        let dist = srw5();
        let p = simulate(&dist, 256, &mut CounterRng::stream(3, 0, 1)).unwrap();
        let a = build_range_index(&p);
        let b = build_range_index(&p);
        assert_eq!(a.distinct_count(), b.distinct_count());
        for (k, v) in a.iter() {
            assert_eq!(b.map[k], *v);
        }
    }

    #[test]
    fn range_hit_trivial_cases() {
        let dist = srw5();
        let b = simulate(&dist, 10, &mut CounterRng::stream(4, 0, 0)).unwrap();
        let mut a = FxHashSet::default();
        a.insert(lattice::key(&lattice::ORIGIN).unwrap());
        // A = {0}, B starts at 0, x = 0: tau = 0.
        assert_eq!(range_hit(&a, &b, &lattice::ORIGIN).map(|h| h.0), Some(0));
        // Far-away shift: no hit possible within 10 steps.
        let mut far = lattice::ORIGIN;
        far[0] = 1000;
        assert!(range_hit(&a, &b, &far).is_none());
    }

    #[test]
    fn range_hit_against_quadratic_oracle() {
        let dist = srw5();
        for t in 0..1000u64 {
            let mut rng = CounterRng::stream(11, rng::component::WALK, t);
            let pa = simulate(&dist, 100, &mut rng).unwrap();
            let pb = simulate(&dist, 100, &mut rng).unwrap();
            let mut shift = lattice::ORIGIN;
            shift[0] = (rng.below(9) as i32) - 4;
            shift[1] = (rng.below(9) as i32) - 4;
            let fast = range_hit(&pa.site_set(), &pb, &shift).map(|h| h.0);
            // O(|A||B|) double loop.
            let mut oracle = None;
            'outer: for (tau, q) in pb.positions().enumerate() {
                let site = lattice::add(&q, &shift);
                for p in pa.positions() {
                    if p == site {
                        oracle = Some(tau);
                        break 'outer;
                    }
                }
            }
            assert_eq!(fast, oracle, "trial {t}");
        }
    }

    #[test]
    fn range_hit_monotone_in_b_length() {
        let dist = srw5();
        let mut rng = CounterRng::stream(13, 0, 0);
        let pa = simulate(&dist, 200, &mut rng).unwrap();
        let pb = simulate(&dist, 200, &mut rng).unwrap();
        let a = pa.site_set();
        let full = range_hit(&a, &pb, &lattice::ORIGIN).map(|h| h.0);
        // Truncating B never produces an earlier hit; extending preserves it.
        let half = Path { d: 5, pos: pb.pos[..101].to_vec() };
        let part = range_hit(&a, &half, &lattice::ORIGIN).map(|h| h.0);
        match (part, full) {
            (Some(a_), Some(b_)) => assert_eq!(a_, b_),
            (None, Some(b_)) => assert!(b_ > 100),
            (None, None) => {}
            (Some(_), None) => panic!("hit lost when extending B"),
        }
    }

    #[test]
    fn reflection_bound_smoke() {
        // P[max ||S_k|| >= 4 sqrt(n)] <= 0.05 at n = 10^4; generous.
        let dist = srw5();
        let n = 10_000usize;
        let thr2 = (4.0 * (n as f64).sqrt()).powi(2);
        let trials = 200u64;
        let mut exceed = 0;
        for t in 0..trials {
            let mut rng = CounterRng::stream(17, rng::component::WALK, t);
            let p = simulate(&dist, n, &mut rng).unwrap();
            if p.positions().any(|q| lattice::norm2(&q) >= thr2) {
                exceed += 1;
            }
        }
        assert!(
            (exceed as f64) <= 0.05 * trials as f64,
            "{exceed}/{trials} exceeded"
        );
    }

    #[test]
    fn overflow_detected() {
        // gcd(30000, 29999) = 1, so the big steps still span Z^3.
        let raw = vec![
            (vec![30000, 0, 0], 0.125),
            (vec![-30000, 0, 0], 0.125),
            (vec![29999, 0, 0], 0.125),
            (vec![-29999, 0, 0], 0.125),
            (vec![0, 1, 0], 0.125),
            (vec![0, -1, 0], 0.125),
            (vec![0, 0, 1], 0.125),
            (vec![0, 0, -1], 0.125),
        ];
        let dist = StepDistribution::validate(3, &raw).unwrap();
        let mut rng = CounterRng::stream(1, 1, 1);
        match simulate(&dist, 100, &mut rng) {
            Err(WalkError::PathOverflow { .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn dump_roundtrip() {
        let dist = srw5();
        let p = simulate(&dist, 77, &mut CounterRng::stream(5, 0, 0)).unwrap();
        let mut buf = Vec::new();
        dump_path(&p, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"CRW1");
        let q = load_path(&mut buf.as_slice()).unwrap();
        assert_eq!(q.steps(), p.steps());
        for i in 0..=p.steps() {
            assert_eq!(p.position(i), q.position(i));
        }
    }
}
