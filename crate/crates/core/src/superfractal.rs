//! IFSs one level up: the points are compact sets, each map acts by a whole
//! sub-IFS's Hutchinson map, and distances are Hausdorff distances between
//! sets (the Hausdorff-Hausdorff metric on sets of sets).
//!
//! A [`SetPoint`] is a [`FiniteSet`]; a [`SetEnsemble`] is a finite list of
//! them dedup'd at an outer resolution `outer_delta`, measured in `d_H`.
//!
//! Every member carries a signature `d(p, S)` over a fixed list of probe
//! points `p`. Since `S -> d(p, S)` is 1-Lipschitz in `d_H`, the largest
//! signature difference is a lower bound on `d_H`, which prunes most exact
//! comparisons. Probes only affect speed, never results.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chaos::{PolicyKind, SelectionPolicy, Selector};
use crate::error::{domain, usage, Result};
use crate::hausdorff::{directed_to_index, NnIndex};
use crate::ifs::{hutchinson_step, FiniteSet, IfsSpec};
use crate::spaces::Space;

/// An element of the hyperspace: a nonempty compact set as a δ-net.
pub type SetPoint = FiniteSet;

/// Default cap on the size of a member set.
pub const DEFAULT_INNER_CAP: usize = 4096;

/// Signature differences within this of a threshold are not trusted for
/// pruning.
const PRUNE_SLACK: f64 = 1e-12;

fn probes(space: Space) -> Vec<f64> {
    match space {
        Space::Euclidean { dim } if dim <= 3 => {
            let k = [9usize, 5, 3][dim.max(1) - 1];
            let count = k.pow(dim as u32);
            let mut out = Vec::with_capacity(count * dim);
            for mut code in 0..count {
                for _ in 0..dim {
                    out.push((code % k) as f64 / (k - 1) as f64);
                    code /= k;
                }
            }
            out
        }
        Space::Euclidean { dim } => {
            let mut out = vec![0.0; dim];
            for i in 0..dim {
                let mut e = vec![0.0; dim];
                e[i] = 1.0;
                out.extend(e);
            }
            out
        }
        Space::Circle => (0..16)
            .flat_map(|i| {
                let t = i as f64 * std::f64::consts::PI / 8.0;
                [t.cos(), t.sin()]
            })
            .collect(),
        Space::Projective2 => {
            let mut out = Vec::new();
            for v in [
                [1.0, 0.0, 0.0],
                [0.0, 1.0, 0.0],
                [0.0, 0.0, 1.0],
                [1.0, 1.0, 0.0],
                [1.0, -1.0, 0.0],
                [1.0, 0.0, 1.0],
                [1.0, 0.0, -1.0],
                [0.0, 1.0, 1.0],
                [0.0, 1.0, -1.0],
                [1.0, 1.0, 1.0],
                [1.0, 1.0, -1.0],
                [1.0, -1.0, 1.0],
                [1.0, -1.0, -1.0],
            ] {
                let mut v = v.to_vec();
                space.canonicalize_in_place(&mut v).expect("nonzero probe");
                out.extend(v);
            }
            out
        }
    }
}

/// A member set with its index and probe signature.
#[derive(Debug, Clone)]
struct Member {
    index: NnIndex,
    signature: Vec<f64>,
}

impl Member {
    fn new(set: &FiniteSet) -> Member {
        let index = NnIndex::new(set);
        let space = set.space();
        let signature = probes(space).chunks_exact(space.dim()).map(|p| index.distance_to(p)).collect();
        Member { index, signature }
    }

    fn set(&self) -> &FiniteSet {
        self.index.set()
    }

    fn lower_bound(&self, other: &Member) -> f64 {
        self.signature.iter().zip(&other.signature).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// `d_H(self, other) < r`, exactly.
    fn closer_than(&self, other: &Member, r: f64) -> bool {
        self.lower_bound(other) < r + PRUNE_SLACK
            && other.index.contains_all(self.set(), r)
            && self.index.contains_all(other.set(), r)
    }

    /// Exact `d_H`; the same value as `hausdorff_distance` in accelerated mode.
    fn distance(&self, other: &Member) -> f64 {
        let ab = directed_to_index(self.set(), &other.index).expect("same space");
        let ba = directed_to_index(other.set(), &self.index).expect("same space");
        ab.max(ba)
    }
}

/// A nonempty finite set of compact sets, no two within `outer_delta / 2`
/// of each other in `d_H`.
#[derive(Debug, Clone)]
pub struct SetEnsemble {
    ground: Space,
    outer_delta: f64,
    members: Vec<FiniteSet>,
    meta: Vec<Member>,
}

impl SetEnsemble {
    /// An ensemble holding just `first`.
    pub fn new(first: &SetPoint, outer_delta: f64) -> Result<Self> {
        if !(outer_delta >= 0.0) || !outer_delta.is_finite() {
            return usage(format!("outer_delta must be finite and >= 0, got {outer_delta}"));
        }
        if first.is_empty() {
            return domain("ensemble members must be nonempty");
        }
        Ok(SetEnsemble {
            ground: first.space(),
            outer_delta,
            members: vec![first.clone()],
            meta: vec![Member::new(first)],
        })
    }

    /// Dedups `members` in order; the first of any close pair wins.
    pub fn from_members(members: Vec<SetPoint>, outer_delta: f64) -> Result<Self> {
        let mut iter = members.into_iter();
        let first = iter.next().ok_or_else(|| crate::Error::Domain("ensemble must be nonempty".into()))?;
        let mut out = SetEnsemble::new(&first, outer_delta)?;
        for m in iter {
            out.insert(m)?;
        }
        Ok(out)
    }

    pub fn ground(&self) -> Space {
        self.ground
    }

    pub fn outer_delta(&self) -> f64 {
        self.outer_delta
    }

    pub fn members(&self) -> &[SetPoint] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Adds `set` unless a member lies within `outer_delta / 2` of it.
    /// Returns whether it was kept.
    pub fn insert(&mut self, set: SetPoint) -> Result<bool> {
        if set.space() != self.ground {
            return usage(format!("{} set inserted into a {} ensemble", set.space(), self.ground));
        }
        let cand = Member::new(&set);
        let r = self.outer_delta / 2.0;
        let dup =
            if r > 0.0 { self.meta.par_iter().any(|m| m.closer_than(&cand, r)) } else { self.members.contains(&set) };
        if dup {
            return Ok(false);
        }
        self.members.push(set);
        self.meta.push(cand);
        Ok(true)
    }

    /// Dedup'd union, `self`'s members first.
    pub fn union(&self, other: &SetEnsemble) -> Result<SetEnsemble> {
        let mut out = self.clone();
        for m in other.members() {
            out.insert(m.clone())?;
        }
        Ok(out)
    }
}

/// Hausdorff-Hausdorff distance with the member pairs realizing it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HhResult {
    pub value: f64,
    /// `(i, j)`: member `i` of the first ensemble farthest from the second,
    /// and its nearest member `j` there.
    pub witness_a_to_b: (usize, usize),
    /// `(j, i)`, the other direction.
    pub witness_b_to_a: (usize, usize),
}

#[derive(Debug, Clone, Copy)]
struct Far {
    value: f64,
    from: usize,
    to: usize,
}

fn pick(a: Far, b: Far) -> Far {
    if b.value > a.value || (b.value == a.value && b.from < a.from) {
        b
    } else {
        a
    }
}

/// Nearest member of `to` from `from`, skipping candidates that provably
/// cannot beat `best_so_far`; returns `None` once a member closer than
/// `stop` is seen.
fn nearest_member(from: &Member, to: &[Member], stop: f64) -> Option<(f64, usize)> {
    let mut order: Vec<(f64, usize)> = to.iter().enumerate().map(|(j, m)| (from.lower_bound(m), j)).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut best = (f64::INFINITY, usize::MAX);
    for (lb, j) in order {
        if lb > best.0 + PRUNE_SLACK {
            break;
        }
        if best.0.is_finite() && !from.closer_than(&to[j], best.0 + PRUNE_SLACK) {
            continue;
        }
        let d = from.distance(&to[j]);
        if d < best.0 || (d == best.0 && j < best.1) {
            best = (d, j);
        }
        if best.0 < stop {
            return None;
        }
    }
    Some(best)
}

fn directed_hh(from: &[Member], to: &[Member]) -> Far {
    from.par_chunks(16)
        .enumerate()
        .map(|(chunk, block)| {
            let mut acc: Option<Far> = None;
            for (k, m) in block.iter().enumerate() {
                let stop = acc.map_or(f64::NEG_INFINITY, |a| a.value);
                if let Some((value, to_idx)) = nearest_member(m, to, stop) {
                    let cand = Far { value, from: chunk * 16 + k, to: to_idx };
                    acc = Some(acc.map_or(cand, |a| pick(a, cand)));
                }
            }
            acc.expect("first member of a block always reports")
        })
        .reduce_with(pick)
        .expect("nonempty ensemble")
}

/// Hausdorff distance between ensembles, with ground distance `d_H` between
/// member sets. For single-member ensembles this is exactly
/// `hausdorff_distance(S, T, Mode::Accelerated).value`.
pub fn hh_distance(a: &SetEnsemble, b: &SetEnsemble) -> Result<HhResult> {
    if a.ground != b.ground {
        return usage(format!("ensembles over {} and {}", a.ground, b.ground));
    }
    let ab = directed_hh(&a.meta, &b.meta);
    let ba = directed_hh(&b.meta, &a.meta);
    Ok(HhResult { value: ab.value.max(ba.value), witness_a_to_b: (ab.from, ab.to), witness_b_to_a: (ba.from, ba.to) })
}

/// One application of a sub-IFS's set map.
pub fn lifted_apply(sub_ifs: &IfsSpec, s: &SetPoint) -> Result<SetPoint> {
    hutchinson_step(sub_ifs, s)
}

/// Re-dedups `s` at doubling resolutions until it has at most `cap` points.
pub fn cap_size(s: SetPoint, cap: usize) -> Result<SetPoint> {
    if cap == 0 {
        return usage("inner size cap must be at least 1");
    }
    let mut s = s;
    while s.len() > cap {
        let delta = if s.dedup_delta() > 0.0 { 2.0 * s.dedup_delta() } else { 1e-9 };
        s = s.with_delta(delta)?;
    }
    Ok(s)
}

fn check_subs(subs: &[IfsSpec], s0: &SetPoint) -> Result<()> {
    if subs.is_empty() {
        return usage("a lifted IFS needs at least one sub-IFS");
    }
    for (i, f) in subs.iter().enumerate() {
        if f.space() != s0.space() {
            return usage(format!("sub-IFS {i} acts on {}, start set lives in {}", f.space(), s0.space()));
        }
    }
    Ok(())
}

/// A lifted chaos orbit `S_k = F_{σ_k}(S_{k-1})`.
#[derive(Debug, Clone)]
pub struct LiftedOrbit {
    /// `S_0, ..., S_n`.
    pub sets: Vec<SetPoint>,
    /// 0-based sub-IFS indices; `sigmas[k - 1]` produced `S_k`.
    pub sigmas: Vec<u32>,
    pub seed: u64,
    /// Largest member resolution after cap escalation.
    pub max_inner_delta: f64,
}

impl LiftedOrbit {
    /// Members `S_K, ..., S_{K+len-1}` as an ensemble.
    pub fn window(&self, k: usize, len: usize, outer_delta: f64) -> Result<SetEnsemble> {
        let n = self.sets.len() - 1;
        if k > n || len == 0 {
            return usage(format!("window [{k}, {k}+{len}) is outside the orbit 0..={n}"));
        }
        let end = (k + len).min(n + 1);
        SetEnsemble::from_members(self.sets[k..end].to_vec(), outer_delta)
    }
}

/// The chaos game on the hyperspace. Selection follows the same policy and
/// RNG contract as ground orbits; the adversarial policy needs ground
/// points and is refused here.
pub fn lifted_chaos_orbit(
    subs: &[IfsSpec],
    s0: &SetPoint,
    policy: &SelectionPolicy,
    n: usize,
    seed: u64,
    inner_cap: usize,
) -> Result<LiftedOrbit> {
    check_subs(subs, s0)?;
    if n == 0 {
        return usage("orbit length n must be at least 1");
    }
    if policy.n_maps() != subs.len() {
        return usage(format!("policy is for {} maps but there are {} sub-IFSs", policy.n_maps(), subs.len()));
    }
    if matches!(policy.kind(), PolicyKind::AdversarialFloor { .. }) {
        return usage("adversarial_floor is not available on hyperspace orbits");
    }
    let mut selector = Selector::new(policy, seed);
    let never = |_: usize, _: &[f64], _: &mut [f64]| -> Result<()> { unreachable!("only the adversary applies maps") };
    let mut sets = Vec::with_capacity(n + 1);
    let mut sigmas = Vec::with_capacity(n);
    let mut cur = cap_size(s0.clone(), inner_cap)?;
    let mut max_inner_delta = cur.dedup_delta();
    sets.push(cur.clone());
    for _ in 0..n {
        let m = selector.next_index(&[], &never)?;
        cur = cap_size(lifted_apply(&subs[m], &cur)?, inner_cap)?;
        max_inner_delta = max_inner_delta.max(cur.dedup_delta());
        sets.push(cur.clone());
        sigmas.push(m as u32);
    }
    Ok(LiftedOrbit { sets, sigmas, seed, max_inner_delta })
}

/// The lifted Hutchinson map `B -> {F_i(S) : S in B, i}`, members in
/// member-major order.
pub fn lifted_step(subs: &[IfsSpec], ens: &SetEnsemble, inner_cap: usize) -> Result<SetEnsemble> {
    let images: Vec<SetPoint> = ens
        .members()
        .par_iter()
        .map(|s| subs.iter().map(|f| cap_size(lifted_apply(f, s)?, inner_cap)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    SetEnsemble::from_members(images, ens.outer_delta())
}

/// `depth` lifted steps from `{S0}`: the deterministic reference.
pub fn lifted_deterministic(
    subs: &[IfsSpec],
    s0: &SetPoint,
    depth: usize,
    outer_delta: f64,
    inner_cap: usize,
) -> Result<SetEnsemble> {
    check_subs(subs, s0)?;
    let mut ens = SetEnsemble::new(&cap_size(s0.clone(), inner_cap)?, outer_delta)?;
    for _ in 0..depth {
        ens = lifted_step(subs, &ens, inner_cap)?;
    }
    Ok(ens)
}

/// Union of lifted levels `K..=k_max` from `{S0}`.
pub fn lifted_upper_limit(
    subs: &[IfsSpec],
    s0: &SetPoint,
    k_lo: usize,
    k_max: usize,
    outer_delta: f64,
    inner_cap: usize,
) -> Result<SetEnsemble> {
    check_subs(subs, s0)?;
    if k_lo > k_max {
        return usage(format!("upper limit needs K <= k_max, got K = {k_lo}, k_max = {k_max}"));
    }
    let mut cur = SetEnsemble::new(&cap_size(s0.clone(), inner_cap)?, outer_delta)?;
    let mut acc: Option<SetEnsemble> = None;
    for k in 0..=k_max {
        if k >= k_lo {
            acc = Some(match acc {
                None => cur.clone(),
                Some(a) => a.union(&cur)?,
            });
        }
        if k < k_max {
            cur = lifted_step(subs, &cur, inner_cap)?;
        }
    }
    Ok(acc.expect("k_max >= K"))
}

/// Budgets of a lifted convergence run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftedParams {
    pub epsilon: f64,
    pub n: usize,
    pub tail: usize,
    pub k_ladder: Vec<usize>,
    pub seeds: usize,
    pub first_seed: u64,
    pub pass_threshold: usize,
    pub outer_delta: f64,
    pub inner_cap: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiftedCurvePoint {
    pub k: usize,
    /// Hausdorff-Hausdorff distance from the tail ensemble to the reference.
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftedSeedResult {
    pub seed: u64,
    pub curve: Vec<LiftedCurvePoint>,
    pub k_found: Option<usize>,
    pub passed: bool,
    pub tail_members: usize,
    pub max_inner_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftedReport {
    pub format_version: u32,
    pub scene: String,
    pub params: LiftedParams,
    pub reference_members: usize,
    /// Worst case over seeds at each sampled `K`.
    pub tail_distance_curve: Vec<LiftedCurvePoint>,
    pub seeds_passed: usize,
    pub seeds_total: usize,
    pub passed: bool,
    pub per_seed: Vec<LiftedSeedResult>,
}

impl LiftedReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// `K,distance` rows of the worst-case curve.
    pub fn write_curve_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "K,distance")?;
        for c in &self.tail_distance_curve {
            writeln!(w, "{},{:e}", c.k, c.distance)?;
        }
        Ok(())
    }
}

/// Seed panel for the lifted chaos game: each seed's tail windows
/// `S_K, ..., S_{K+T-1}`, as ensembles, against `reference`.
pub fn lifted_convergence_report(
    scene: &str,
    subs: &[IfsSpec],
    s0: &SetPoint,
    policy: &SelectionPolicy,
    reference: &SetEnsemble,
    params: &LiftedParams,
) -> Result<LiftedReport> {
    if !(params.epsilon > 0.0) || params.seeds == 0 || params.tail == 0 {
        return usage("epsilon, seeds and tail must be positive");
    }
    if params.k_ladder.is_empty() || params.k_ladder.iter().any(|&k| k + params.tail > params.n + 1) {
        return usage("every K in k_ladder needs K + tail <= n + 1");
    }
    if params.pass_threshold == 0 || params.pass_threshold > params.seeds {
        return usage(format!("pass_threshold must lie in 1..={}", params.seeds));
    }
    let per_seed = (0..params.seeds as u64)
        .into_par_iter()
        .map(|i| {
            let seed = params.first_seed.wrapping_add(i);
            let orbit = lifted_chaos_orbit(subs, s0, policy, params.n, seed, params.inner_cap)?;
            let mut tail_members = 0;
            let curve = params
                .k_ladder
                .iter()
                .map(|&k| {
                    let ens = orbit.window(k, params.tail, params.outer_delta)?;
                    tail_members = ens.len();
                    Ok(LiftedCurvePoint { k, distance: hh_distance(&ens, reference)?.value })
                })
                .collect::<Result<Vec<_>>>()?;
            let k_found = curve.iter().find(|c| c.distance < params.epsilon).map(|c| c.k);
            Ok(LiftedSeedResult {
                seed,
                passed: k_found.is_some(),
                k_found,
                curve,
                tail_members,
                max_inner_delta: orbit.max_inner_delta,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let tail_distance_curve = params
        .k_ladder
        .iter()
        .enumerate()
        .map(|(i, &k)| LiftedCurvePoint {
            k,
            distance: per_seed.iter().map(|s| s.curve[i].distance).fold(0.0, f64::max),
        })
        .collect();
    let seeds_passed = per_seed.iter().filter(|s| s.passed).count();
    Ok(LiftedReport {
        format_version: crate::verify::REPORT_VERSION,
        scene: scene.to_string(),
        params: params.clone(),
        reference_members: reference.len(),
        tail_distance_curve,
        seeds_passed,
        seeds_total: params.seeds,
        passed: seeds_passed >= params.pass_threshold,
        per_seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hausdorff::{hausdorff_distance, Mode};
    use crate::ifs::MapSpec;
    use crate::presets;

    fn line(points: &[f64], delta: f64) -> FiniteSet {
        let pts: Vec<[f64; 1]> = points.iter().map(|&x| [x]).collect();
        FiniteSet::new(Space::euclidean(1), &pts, delta).unwrap()
    }

    fn ens(sets: &[&[f64]]) -> SetEnsemble {
        SetEnsemble::from_members(sets.iter().map(|s| line(s, 0.0)).collect(), 0.0).unwrap()
    }

    #[test]
    fn lifted_apply_examples() {
        let id = IfsSpec::new(Space::euclidean(1), vec![MapSpec::Identity], "id").unwrap();
        let s = line(&[0.0, 0.3], 0.0);
        assert_eq!(lifted_apply(&id, &s).unwrap(), s);
        let t = lifted_apply(&presets::interval_halves(), &line(&[0.0], 0.0)).unwrap();
        assert_eq!(t.coords(), &[0.0, 0.5]);
        let c = FiniteSet::new(Space::Circle, &[[1.0, 0.0]], 0.0).unwrap();
        let c1 = lifted_apply(&presets::circle_rotation(1.0), &c).unwrap();
        assert_eq!(c1.len(), 2);
        assert!((c1.point(1)[0] - 1f64.cos()).abs() < 1e-15);
        assert!((c1.point(1)[1] - 1f64.sin()).abs() < 1e-15);
        assert!(lifted_apply(&presets::sierpinski(), &s).is_err());
    }

    #[test]
    fn hh_examples() {
        let a = ens(&[&[0.0], &[1.0]]);
        assert_eq!(hh_distance(&a, &a).unwrap().value, 0.0);
        assert_eq!(hh_distance(&ens(&[&[0.0]]), &ens(&[&[1.0]])).unwrap().value, 1.0);
        let r = hh_distance(&a, &ens(&[&[0.0]])).unwrap();
        assert_eq!(r.value, 1.0);
        assert_eq!(r.witness_a_to_b, (1, 0));
    }

    #[test]
    fn single_members_lift_exactly() {
        let s = presets::circle_net(37);
        let t = iterate_circle(5);
        let hh = hh_distance(&SetEnsemble::new(&s, 0.01).unwrap(), &SetEnsemble::new(&t, 0.01).unwrap()).unwrap();
        assert_eq!(hh.value, hausdorff_distance(&s, &t, Mode::Accelerated).unwrap().value);
    }

    fn iterate_circle(k: usize) -> FiniteSet {
        let c = FiniteSet::new(Space::Circle, &[[1.0, 0.0]], 0.0).unwrap();
        crate::ifs::iterate(&presets::circle_rotation(1.0), &c, k).unwrap()
    }

    #[test]
    fn insert_respects_outer_resolution() {
        let mut e = SetEnsemble::new(&line(&[0.0], 0.0), 0.1).unwrap();
        assert!(!e.insert(line(&[0.04], 0.0)).unwrap());
        assert!(e.insert(line(&[0.06], 0.0)).unwrap());
        assert!(!e.insert(line(&[0.0, 0.01], 0.0)).unwrap());
        assert_eq!(e.len(), 2);
    }

    #[test]
    fn hh_matches_brute_force() {
        let sets: Vec<FiniteSet> = (0..12)
            .map(|i| {
                let pts: Vec<f64> = (0..=(i % 5)).map(|j| ((i * 7 + j * 3) % 11) as f64 / 10.0).collect();
                line(&pts, 0.0)
            })
            .collect();
        let a = SetEnsemble::from_members(sets[..7].to_vec(), 0.0).unwrap();
        let b = SetEnsemble::from_members(sets[5..].to_vec(), 0.0).unwrap();
        let d = |x: &FiniteSet, y: &FiniteSet| hausdorff_distance(x, y, Mode::Oracle).unwrap().value;
        let directed = |p: &SetEnsemble, q: &SetEnsemble| {
            p.members()
                .iter()
                .map(|x| q.members().iter().map(|y| d(x, y)).fold(f64::INFINITY, f64::min))
                .fold(0.0, f64::max)
        };
        let want = directed(&a, &b).max(directed(&b, &a));
        assert_eq!(hh_distance(&a, &b).unwrap().value, want);
    }

    #[test]
    fn identity_orbit_is_constant() {
        let id = IfsSpec::new(Space::euclidean(1), vec![MapSpec::Identity], "id").unwrap();
        let s0 = line(&[0.2, 0.7], 0.0);
        let o = lifted_chaos_orbit(&[id], &s0, &SelectionPolicy::uniform(1, 1.0).unwrap(), 20, 3, DEFAULT_INNER_CAP)
            .unwrap();
        assert!(o.sets.iter().all(|s| *s == s0));
    }

    #[test]
    fn lifted_orbit_stays_in_unit_interval_and_branches_boundedly() {
        let subs = [presets::interval_halves(), presets::cantor()];
        let s0 = line(&[0.0], 2e-3);
        let o = lifted_chaos_orbit(&subs, &s0, &SelectionPolicy::uniform(2, 0.5).unwrap(), 500, 9, DEFAULT_INNER_CAP)
            .unwrap();
        for w in o.sets.windows(2) {
            assert!(w[1].len() <= 2 * w[0].len());
        }
        for s in &o.sets {
            assert!(s.coords().iter().all(|&x| (-1e-12..=1.0 + 1e-12).contains(&x)));
        }
    }

    #[test]
    fn size_cap_escalates_delta() {
        let pts: Vec<f64> = (0..1000).map(|i| i as f64 / 1000.0).collect();
        let s = cap_size(line(&pts, 1e-4), 100).unwrap();
        assert!(s.len() <= 100);
        assert!(s.dedup_delta() > 1e-4);
    }

    #[test]
    fn small_lifted_panel_passes() {
        let subs = [presets::interval_halves(), presets::cantor()];
        let s0 = line(&[0.0], 2e-3);
        let reference = lifted_deterministic(&subs, &s0, 10, 0.01, DEFAULT_INNER_CAP).unwrap();
        let params = LiftedParams {
            epsilon: 0.05,
            n: 1000,
            tail: 500,
            k_ladder: vec![0, 100, 501],
            seeds: 3,
            first_seed: 0,
            pass_threshold: 3,
            outer_delta: 0.01,
            inner_cap: DEFAULT_INNER_CAP,
        };
        let r =
            lifted_convergence_report("t", &subs, &s0, &SelectionPolicy::uniform(2, 0.5).unwrap(), &reference, &params)
                .unwrap();
        assert!(r.passed, "{:?}", r.tail_distance_curve);
        assert_eq!(r.tail_distance_curve.len(), 3);
    }

    #[test]
    fn adversary_is_refused_on_hyperspace() {
        let subs = [presets::interval_halves(), presets::cantor()];
        let p = SelectionPolicy::adversarial(2, 0.25, line(&[0.0], 0.0)).unwrap();
        assert!(lifted_chaos_orbit(&subs, &line(&[0.0], 0.0), &p, 5, 0, 16).is_err());
    }
}
