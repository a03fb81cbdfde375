//! Hausdorff metric kernel.
//!
//! `d_H(B, C) = max(h(B, C), h(C, B))` with the directed distance
//! `h(B, C) = max_b min_c d(b, c)`. Two evaluation routes are provided:
//!
//! * [`Mode::Oracle`]: the plain `O(|B| |C|)` double loop.
//! * [`Mode::Accelerated`]: nearest-neighbour queries against a uniform
//!   grid over `C`, with the early break of Taha and Hanbury: a query stops
//!   as soon as it finds a neighbour closer than the running maximum, since
//!   such a point cannot raise `h`.
//!
//! Dilations use the strict inequality `S + r = {y : d(s, y) < r for some s}`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, usage, Result};
use crate::ifs::{bounds, FiniteSet};
use crate::spaces::{euclid, Space, SpacePoint};

/// Distances closer than this are ties for witness selection.
pub const TIE_EPS: f64 = 1e-12;

/// Beyond this many grid rings a query falls back to a linear scan.
const MAX_RINGS: i64 = 24;

const CHUNK: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Oracle,
    Accelerated,
}

impl std::str::FromStr for Mode {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(Mode::Oracle),
            "accelerated" => Ok(Mode::Accelerated),
            other => usage(format!("unknown distance mode {other:?}")),
        }
    }
}

/// Hausdorff distance with the point pairs realizing each directed part.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceResult {
    pub value: f64,
    /// `(b, c)`: the `b` farthest from `C` and its nearest `c`.
    pub witness_b_to_c: (SpacePoint, SpacePoint),
    /// `(c, b)`: the `c` farthest from `B` and its nearest `b`.
    pub witness_c_to_b: (SpacePoint, SpacePoint),
}

impl DistanceResult {
    /// `h(B, C)`.
    pub fn b_to_c(&self) -> f64 {
        let (b, c) = &self.witness_b_to_c;
        b.space().distance_raw(b.coords(), c.coords())
    }

    /// `h(C, B)`.
    pub fn c_to_b(&self) -> f64 {
        let (c, b) = &self.witness_c_to_b;
        c.space().distance_raw(c.coords(), b.coords())
    }
}

/// A directed-distance maximum and the indices realizing it.
#[derive(Debug, Clone, Copy)]
struct Directed {
    value: f64,
    from: usize,
    to: usize,
}

fn lex_less(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if x != y {
            return x < y;
        }
    }
    false
}

/// Picks the larger directed candidate; near-ties go to the
/// lexicographically smaller `(from, to)` pair.
fn pick_max(a: Directed, b: Directed, from: &FiniteSet, to: &FiniteSet) -> Directed {
    if a.value > b.value + TIE_EPS {
        return a;
    }
    if b.value > a.value + TIE_EPS {
        return b;
    }
    let ka = (from.point(a.from), to.point(a.to));
    let kb = (from.point(b.from), to.point(b.to));
    let a_first = if ka.0 != kb.0 { lex_less(ka.0, kb.0) } else { !lex_less(kb.1, ka.1) };
    if a_first {
        a
    } else {
        b
    }
}

fn check_pair(b: &FiniteSet, c: &FiniteSet) -> Result<()> {
    if b.is_empty() || c.is_empty() {
        return domain("Hausdorff distance needs nonempty sets");
    }
    if b.space() != c.space() {
        return usage(format!("Hausdorff distance between {} and {} sets", b.space(), c.space()));
    }
    Ok(())
}

/// Symmetric Hausdorff distance with witnesses.
pub fn hausdorff_distance(b: &FiniteSet, c: &FiniteSet, mode: Mode) -> Result<DistanceResult> {
    check_pair(b, c)?;
    let (bc, cb) = match mode {
        Mode::Oracle => (directed_oracle(b, c), directed_oracle(c, b)),
        Mode::Accelerated => {
            let ic = NnIndex::new(c);
            let ib = NnIndex::new(b);
            (directed_accel(b, &ic), directed_accel(c, &ib))
        }
    };
    let space = b.space();
    let pair = |from: &FiniteSet, to: &FiniteSet, d: Directed| {
        (SpacePoint::from_canonical(space, from.point(d.from)), SpacePoint::from_canonical(space, to.point(d.to)))
    };
    Ok(DistanceResult { value: bc.value.max(cb.value), witness_b_to_c: pair(b, c, bc), witness_c_to_b: pair(c, b, cb) })
}

/// Directed distance `h(B, C) = max_b min_c d(b, c)`.
pub fn directed_distance(b: &FiniteSet, c: &FiniteSet, mode: Mode) -> Result<f64> {
    check_pair(b, c)?;
    Ok(match mode {
        Mode::Oracle => directed_oracle(b, c).value,
        Mode::Accelerated => directed_accel(b, &NnIndex::new(c)).value,
    })
}

/// Directed distance against a prebuilt index of `C`.
pub fn directed_to_index(b: &FiniteSet, index: &NnIndex) -> Result<f64> {
    if b.is_empty() {
        return domain("directed distance from an empty set");
    }
    if b.space() != index.space {
        return usage(format!("directed distance from {} set to {} index", b.space(), index.space));
    }
    Ok(directed_accel(b, index).value)
}

fn nearest_brute(space: Space, q: &[f64], to: &FiniteSet) -> (f64, usize) {
    let mut best = (f64::INFINITY, 0usize);
    for (j, c) in to.points().enumerate() {
        let d = space.distance_raw(q, c);
        if d < best.0 - TIE_EPS || (d <= best.0 + TIE_EPS && lex_less(c, to.point(best.1))) {
            best = (d, j);
        }
    }
    best
}

fn directed_oracle(from: &FiniteSet, to: &FiniteSet) -> Directed {
    let space = from.space();
    let dim = from.dim();
    from.coords()
        .par_chunks(dim * CHUNK)
        .enumerate()
        .map(|(chunk, block)| {
            let mut acc: Option<Directed> = None;
            for (k, p) in block.chunks_exact(dim).enumerate() {
                let (value, to_idx) = nearest_brute(space, p, to);
                let cand = Directed { value, from: chunk * CHUNK + k, to: to_idx };
                acc = Some(match acc {
                    None => cand,
                    Some(a) => pick_max(a, cand, from, to),
                });
            }
            acc.expect("nonempty chunk")
        })
        .reduce_with(|a, b| pick_max(a, b, from, to))
        .expect("nonempty set")
}

fn directed_accel(from: &FiniteSet, index: &NnIndex) -> Directed {
    let dim = from.dim();
    from.coords()
        .par_chunks(dim * CHUNK)
        .enumerate()
        .map(|(chunk, block)| {
            let mut acc: Option<Directed> = None;
            for (k, p) in block.chunks_exact(dim).enumerate() {
                let stop = acc.map_or(f64::NEG_INFINITY, |a| a.value);
                let (value, to_idx) = index.nearest_below(p, stop);
                if value < stop {
                    continue;
                }
                let cand = Directed { value, from: chunk * CHUNK + k, to: to_idx };
                acc = Some(match acc {
                    None => cand,
                    Some(a) => pick_max(a, cand, from, &index.set),
                });
            }
            acc.expect("nonempty chunk")
        })
        .reduce_with(|a, b| pick_max(a, b, from, &index.set))
        .expect("nonempty set")
}

/// True iff `x` lies in the open dilation `C + r`.
pub fn dilation_contains(c: &FiniteSet, r: f64, x: &SpacePoint) -> Result<bool> {
    if c.is_empty() {
        return domain("dilation of an empty set");
    }
    if !(r > 0.0) {
        return usage(format!("dilation radius must be positive, got {r}"));
    }
    if c.space() != x.space() {
        return usage(format!("{} point against {} set", x.space(), c.space()));
    }
    let space = c.space();
    Ok(c.points().any(|p| space.distance_raw(p, x.coords()) < r))
}

/// True iff every point of `B` is strictly within `r` of `C`, i.e. `B ⊂ C + r`.
pub fn is_within(b: &FiniteSet, c: &FiniteSet, r: f64) -> Result<bool> {
    check_pair(b, c)?;
    if !(r > 0.0) {
        return usage(format!("dilation radius must be positive, got {r}"));
    }
    Ok(NnIndex::new(c).contains_all(b, r))
}

/// Nearest-neighbour index over a [`FiniteSet`] in its own metric.
///
/// Euclidean sets of dimension at most 3, circle sets and projective sets
/// are bucketed in a uniform grid over the ambient coordinates; projective
/// sets store both representatives `c` and `-c` so that the nearest ambient
/// chord is the nearest line. Higher-dimensional sets are scanned linearly.
#[derive(Debug, Clone)]
pub struct NnIndex {
    space: Space,
    set: FiniteSet,
    grid: Option<Grid>,
}

#[derive(Debug, Clone)]
struct Grid {
    dim: usize,
    lo: Vec<f64>,
    inv_h: f64,
    h: f64,
    shape: Vec<i64>,
    /// CSR offsets into `coords` / `origin`, one slot per cell plus one.
    starts: Vec<u32>,
    coords: Vec<f64>,
    origin: Vec<u32>,
}

impl NnIndex {
    pub fn new(set: &FiniteSet) -> Self {
        let space = set.space();
        let grid = if space.dim() <= 3 { Some(Grid::build(set)) } else { None };
        NnIndex { space, set: set.clone(), grid }
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn set(&self) -> &FiniteSet {
        &self.set
    }

    /// Exact nearest neighbour: `(distance, index into the set)`.
    pub fn nearest(&self, q: &[f64]) -> (f64, usize) {
        self.nearest_below(q, f64::NEG_INFINITY)
    }

    /// Nearest neighbour, except that the search may stop early with any
    /// neighbour strictly closer than `stop`.
    pub fn nearest_below(&self, q: &[f64], stop: f64) -> (f64, usize) {
        match &self.grid {
            Some(g) => {
                let stop_chord = match self.space {
                    Space::Projective2 if stop > 0.0 => 2.0 * (stop / 2.0).sin(),
                    _ => stop,
                };
                let j = g.nearest(q, stop_chord, &self.set);
                (self.space.distance_raw(q, self.set.point(j)), j)
            }
            None => {
                let mut best = (f64::INFINITY, 0);
                for (j, c) in self.set.points().enumerate() {
                    let d = self.space.distance_raw(q, c);
                    if d < best.0 {
                        best = (d, j);
                        if d < stop {
                            break;
                        }
                    }
                }
                best
            }
        }
    }

    /// Distance from `q` to the set.
    pub fn distance_to(&self, q: &[f64]) -> f64 {
        self.nearest(q).0
    }

    /// `q ∈ set + r`.
    pub fn within(&self, q: &[f64], r: f64) -> bool {
        self.nearest_below(q, r).0 < r
    }

    /// Every point of `b` lies in `set + r`.
    pub fn contains_all(&self, b: &FiniteSet, r: f64) -> bool {
        b.coords().par_chunks(b.dim() * CHUNK).all(|block| block.chunks_exact(b.dim()).all(|p| self.within(p, r)))
    }
}

/// Cell side giving about one point per cell. Axes whose extent is below
/// the cell side collapse to a single cell and drop out of the balance.
fn initial_cell(ext: &[f64], n: usize) -> f64 {
    let mut sorted: Vec<f64> = ext.iter().copied().filter(|e| *e > 0.0).collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    for j in (1..=sorted.len()).rev() {
        let log_vol: f64 = sorted[..j].iter().map(|e| e.ln()).sum::<f64>() - (n as f64).ln();
        let h = (log_vol / j as f64).exp();
        if h <= sorted[j - 1] {
            return h;
        }
    }
    sorted.first().copied().unwrap_or(1.0)
}

impl Grid {
    fn build(set: &FiniteSet) -> Grid {
        let dim = set.dim();
        let antipodal = set.space().identifies_antipodes();
        let mut pts: Vec<f64> = set.coords().to_vec();
        let mut origin: Vec<u32> = (0..set.len() as u32).collect();
        if antipodal {
            pts.extend(set.coords().iter().map(|c| -c));
            origin.extend(0..set.len() as u32);
        }
        let n = origin.len();
        let (lo, hi) = bounds(&pts, dim);
        let ext: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| b - a).collect();
        let mut h = initial_cell(&ext, n);
        let max_cells = (2 * n + 64) as f64;
        let shape_for = |h: f64| -> Vec<i64> { ext.iter().map(|e| (e / h).floor().min(1e15) as i64 + 1).collect() };
        let mut shape = shape_for(h);
        while shape.iter().map(|&s| s as f64).product::<f64>() > max_cells {
            h *= 1.25;
            shape = shape_for(h);
        }
        let inv_h = 1.0 / h;
        let cells = shape.iter().product::<i64>() as usize;

        let cell_index = |p: &[f64]| -> usize {
            let mut idx = 0i64;
            for k in 0..dim {
                let c = (((p[k] - lo[k]) * inv_h).floor() as i64).clamp(0, shape[k] - 1);
                idx = idx * shape[k] + c;
            }
            idx as usize
        };
        let mut counts = vec![0u32; cells + 1];
        let cell_of: Vec<usize> = pts.chunks_exact(dim).map(cell_index).collect();
        for &c in &cell_of {
            counts[c + 1] += 1;
        }
        for i in 0..cells {
            counts[i + 1] += counts[i];
        }
        let starts = counts.clone();
        let mut fill = counts;
        let mut coords = vec![0.0; n * dim];
        let mut ord = vec![0u32; n];
        for (i, &c) in cell_of.iter().enumerate() {
            let slot = fill[c] as usize;
            fill[c] += 1;
            coords[slot * dim..(slot + 1) * dim].copy_from_slice(&pts[i * dim..(i + 1) * dim]);
            ord[slot] = origin[i];
        }
        Grid { dim, lo, inv_h, h, shape, starts, coords, origin: ord }
    }

    /// Index (into the original set) of the nearest stored point by ambient
    /// distance, or of any point closer than `stop`.
    fn nearest(&self, q: &[f64], stop: f64, set: &FiniteSet) -> usize {
        let dim = self.dim;
        let mut qc = [0i64; 3];
        let mut r_first = 0i64;
        let mut r_last = 0i64;
        for k in 0..dim {
            let c = ((q[k] - self.lo[k]) * self.inv_h).floor();
            let c = c.clamp(-1e15, 1e15) as i64;
            qc[k] = c;
            let hi = self.shape[k] - 1;
            let outside = if c < 0 {
                -c
            } else if c > hi {
                c - hi
            } else {
                0
            };
            r_first = r_first.max(outside);
            r_last = r_last.max((c).abs().max((c - hi).abs()));
        }
        let mut best = f64::INFINITY;
        let mut best_idx = 0usize;
        let mut found = false;
        let mut r = r_first;
        while r <= r_last {
            if found && (r - 1) as f64 * self.h >= best {
                break;
            }
            if r - r_first > MAX_RINGS {
                return self.scan_all(q, stop);
            }
            self.visit_shell(&qc[..dim], r, &mut |slot| {
                let d = euclid(q, &self.coords[slot * dim..(slot + 1) * dim]);
                if d < best || (d == best && self.origin[slot] < best_idx as u32) {
                    best = d;
                    best_idx = self.origin[slot] as usize;
                    found = true;
                }
            });
            if best < stop {
                break;
            }
            r += 1;
        }
        debug_assert!(found || set.is_empty());
        best_idx
    }

    fn scan_all(&self, q: &[f64], stop: f64) -> usize {
        let dim = self.dim;
        let mut best = (f64::INFINITY, 0usize);
        for (slot, p) in self.coords.chunks_exact(dim).enumerate() {
            let d = euclid(q, p);
            if d < best.0 {
                best = (d, self.origin[slot] as usize);
                if d < stop {
                    break;
                }
            }
        }
        best.1
    }

    /// Calls `f` for every stored slot in cells at Chebyshev distance exactly
    /// `r` from `qc`.
    fn visit_shell(&self, qc: &[i64], r: i64, f: &mut dyn FnMut(usize)) {
        self.walk(qc, r, 0, 0, r == 0, f);
    }

    fn walk(&self, qc: &[i64], r: i64, axis: usize, base: i64, on_shell: bool, f: &mut dyn FnMut(usize)) {
        let dim = self.dim;
        if axis == dim {
            if on_shell {
                let cell = base as usize;
                for slot in self.starts[cell]..self.starts[cell + 1] {
                    f(slot as usize);
                }
            }
            return;
        }
        let size = self.shape[axis];
        let lo = (qc[axis] - r).max(0);
        let hi = (qc[axis] + r).min(size - 1);
        if lo > hi {
            return;
        }
        if axis == dim - 1 && !on_shell {
            for c in [qc[axis] - r, qc[axis] + r] {
                if (0..size).contains(&c) {
                    self.walk(qc, r, axis + 1, base * size + c, true, f);
                }
                if r == 0 {
                    break;
                }
            }
            return;
        }
        for c in lo..=hi {
            let shell = on_shell || (c - qc[axis]).abs() == r;
            self.walk(qc, r, axis + 1, base * size + c, shell, f);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e2(points: &[[f64; 2]]) -> FiniteSet {
        FiniteSet::new(Space::euclidean(2), points, 0.0).unwrap()
    }

    fn p2(x: f64, y: f64) -> SpacePoint {
        SpacePoint::new(Space::euclidean(2), vec![x, y]).unwrap()
    }

    #[test]
    fn nearly_flat_sets_index_sanely() {
        let pts: Vec<[f64; 2]> = (0..200).map(|i| [i as f64 / 200.0, 1e-300 * (i % 2) as f64]).collect();
        let a = e2(&pts);
        let b = e2(&[[0.5, 0.3], [0.9, -0.2], [2.0, 0.0]]);
        assert_eq!(
            hausdorff_distance(&b, &a, Mode::Accelerated).unwrap().value,
            hausdorff_distance(&b, &a, Mode::Oracle).unwrap().value
        );
    }

    #[test]
    fn dilation_is_strict() {
        let c = e2(&[[0.0, 0.0]]);
        assert!(dilation_contains(&c, 1.0, &p2(0.0, 0.5)).unwrap());
        assert!(!dilation_contains(&c, 1.0, &p2(1.0, 0.0)).unwrap());
        let c2 = e2(&[[0.0, 0.0], [2.0, 0.0]]);
        assert!(dilation_contains(&c2, 0.6, &p2(1.5, 0.0)).unwrap());
        assert!(dilation_contains(&c, 0.0, &p2(0.0, 0.0)).is_err());
    }

    #[test]
    fn small_distances_both_modes() {
        for mode in [Mode::Oracle, Mode::Accelerated] {
            let a = e2(&[[0.0, 0.0], [1.0, 0.0]]);
            assert_eq!(hausdorff_distance(&a, &a, mode).unwrap().value, 0.0);
            let r = hausdorff_distance(&e2(&[[0.0, 0.0]]), &e2(&[[3.0, 4.0]]), mode).unwrap();
            assert_eq!(r.value, 5.0);
            let r = hausdorff_distance(&a, &e2(&[[0.0, 0.0]]), mode).unwrap();
            assert_eq!(r.value, 1.0);
            assert_eq!(r.witness_b_to_c.0.coords(), &[1.0, 0.0]);
            assert_eq!(r.b_to_c(), 1.0);
            assert_eq!(r.c_to_b(), 0.0);
        }
    }

    #[test]
    fn is_within_strict_edge() {
        let b = e2(&[[0.0, 0.0]]);
        let c = e2(&[[1.0, 0.0]]);
        assert!(!is_within(&b, &c, 1.0).unwrap());
        assert!(is_within(&b, &c, 1.0 + 1e-9).unwrap());
        let sup = e2(&[[0.0, 0.0], [5.0, 5.0]]);
        assert!(is_within(&b, &sup, 1e-6).unwrap());
    }

    #[test]
    fn rotated_circle_net() {
        let n = 360;
        let theta: f64 = 0.004;
        let net = |shift: f64| {
            let pts: Vec<[f64; 2]> = (0..n)
                .map(|i| {
                    let a = i as f64 * std::f64::consts::TAU / n as f64 + shift;
                    [a.cos(), a.sin()]
                })
                .collect();
            FiniteSet::new(Space::Circle, &pts, 0.0).unwrap()
        };
        let chord = 2.0 * (theta / 2.0).sin();
        assert!(is_within(&net(0.0), &net(theta), chord * 1.001).unwrap());
        assert!(!is_within(&net(0.0), &net(theta), chord * 0.999).unwrap());
    }

    #[test]
    fn errors() {
        let a = e2(&[[0.0, 0.0]]);
        let c = FiniteSet::new(Space::Circle, &[[1.0, 0.0]], 0.0).unwrap();
        assert!(matches!(hausdorff_distance(&a, &c, Mode::Oracle), Err(crate::Error::Usage(_))));
    }

    #[test]
    fn far_query_falls_back_to_scan() {
        let pts: Vec<[f64; 2]> = (0..1000).map(|i| [i as f64 * 1e-3, 0.0]).collect();
        let set = e2(&pts);
        let idx = NnIndex::new(&set);
        let (d, j) = idx.nearest(&[100.0, 100.0]);
        assert_eq!(j, 999);
        assert!((d - (99.001f64.powi(2) + 1e4).sqrt()).abs() < 1e-9);
    }

    #[test]
    fn projective_index_sees_antipodes() {
        let set = FiniteSet::new(Space::Projective2, &[[0.0, 1.0, 0.0], [1.0, 0.0, 0.0]], 0.0).unwrap();
        let idx = NnIndex::new(&set);
        let q = SpacePoint::new(Space::Projective2, vec![1e-3, -1.0, 0.0]).unwrap();
        let (d, j) = idx.nearest(q.coords());
        assert_eq!(j, 0);
        assert!(d < 2e-3);
    }

    #[test]
    fn high_dimensional_sets_use_scan() {
        let s = Space::euclidean(5);
        let a = FiniteSet::new(s, &[[0.0; 5], [1.0, 0.0, 0.0, 0.0, 0.0]], 0.0).unwrap();
        let b = FiniteSet::new(s, &[[0.0, 0.0, 0.0, 0.0, 2.0]], 0.0).unwrap();
        let o = hausdorff_distance(&a, &b, Mode::Oracle).unwrap().value;
        let x = hausdorff_distance(&a, &b, Mode::Accelerated).unwrap().value;
        assert_eq!(o, x);
        assert!((o - 5f64.sqrt()).abs() < 1e-15);
    }
}
