//! The chaos game: random orbits `x_k = f_{σ_k}(x_{k-1})` under pluggable
//! selection policies.
//!
//! The only promise a policy makes is the conditional floor
//! `P(σ_k = n | x_0, σ_1, ..., σ_{k-1}) >= p` for every map index `n`, with
//! `p ∈ (0, 1/N]`. Three policies are shipped:
//!
//! * `uniform_iid`: each index with probability `1/N`.
//! * `markov`: the next index is drawn from the row of the previous index in
//!   a row-stochastic matrix whose entries are all `>= p`. The first index
//!   is uniform.
//! * `adversarial_floor`: with probability `N p` the index is uniform;
//!   otherwise the policy picks the map whose image of the current point is
//!   farthest from a target set (lowest index on ties).
//!
//! Randomness comes from ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded with
//! `seed_from_u64(seed)`. Each step of `uniform_iid` and `markov` consumes
//! exactly one 64-bit draw; each `adversarial_floor` step consumes exactly
//! two (coin, then uniform index), whether or not the coin explores. A draw
//! `u` is turned into an index as `floor(N * (u >> 11) / 2^53)`.
//! Map indices are 0-based.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{usage, Result};
use crate::hausdorff::NnIndex;
use crate::ifs::{FiniteSet, IfsSpec};
use crate::spaces::{Space, SpacePoint};

/// Row sums of a Markov matrix must be within this of 1.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// History classes with fewer samples than this are reported as untestable.
pub const MIN_CLASS_SAMPLES: usize = 100;

#[derive(Debug, Clone)]
pub enum PolicyKind {
    UniformIid,
    /// Row-major `N x N` transition matrix.
    Markov {
        matrix: Vec<f64>,
    },
    AdversarialFloor {
        target: FiniteSet,
    },
}

/// A map-selection process with its guaranteed floor `p`.
#[derive(Debug, Clone)]
pub struct SelectionPolicy {
    kind: PolicyKind,
    floor_p: f64,
    n_maps: usize,
}

fn check_floor(floor_p: f64, n_maps: usize) -> Result<()> {
    if n_maps == 0 {
        return usage("policy needs at least one map");
    }
    let max = 1.0 / n_maps as f64;
    if !(floor_p > 0.0 && floor_p <= max) {
        return usage(format!("floor p must lie in (0, 1/N] = (0, {max}], got {floor_p}"));
    }
    Ok(())
}

impl SelectionPolicy {
    pub fn uniform(n_maps: usize, floor_p: f64) -> Result<Self> {
        check_floor(floor_p, n_maps)?;
        Ok(SelectionPolicy { kind: PolicyKind::UniformIid, floor_p, n_maps })
    }

    pub fn markov(matrix: Vec<f64>, n_maps: usize, floor_p: f64) -> Result<Self> {
        check_floor(floor_p, n_maps)?;
        if matrix.len() != n_maps * n_maps {
            return usage(format!("markov matrix needs {} entries, got {}", n_maps * n_maps, matrix.len()));
        }
        for (i, row) in matrix.chunks_exact(n_maps).enumerate() {
            if let Some(j) = row.iter().position(|&v| !(v >= floor_p)) {
                return usage(format!("markov entry ({i}, {j}) = {} is below the floor {floor_p}", row[j]));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return usage(format!("markov row {i} sums to {sum}, not 1"));
            }
        }
        Ok(SelectionPolicy { kind: PolicyKind::Markov { matrix }, floor_p, n_maps })
    }

    pub fn adversarial(n_maps: usize, floor_p: f64, target: FiniteSet) -> Result<Self> {
        check_floor(floor_p, n_maps)?;
        Ok(SelectionPolicy { kind: PolicyKind::AdversarialFloor { target }, floor_p, n_maps })
    }

    pub fn kind(&self) -> &PolicyKind {
        &self.kind
    }

    pub fn floor_p(&self) -> f64 {
        self.floor_p
    }

    pub fn n_maps(&self) -> usize {
        self.n_maps
    }

    pub fn id(&self) -> &'static str {
        match self.kind {
            PolicyKind::UniformIid => "uniform_iid",
            PolicyKind::Markov { .. } => "markov",
            PolicyKind::AdversarialFloor { .. } => "adversarial_floor",
        }
    }

    fn check_for(&self, ifs: &IfsSpec) -> Result<()> {
        if self.n_maps != ifs.len() {
            return usage(format!("{} policy is for {} maps but the IFS has {}", self.id(), self.n_maps, ifs.len()));
        }
        if let PolicyKind::AdversarialFloor { target } = &self.kind {
            if target.space() != ifs.space() {
                return usage(format!("adversarial target lives in {}, IFS in {}", target.space(), ifs.space()));
            }
        }
        Ok(())
    }
}

#[inline]
fn unit(draw: u64) -> f64 {
    (draw >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[inline]
fn uniform_index(draw: u64, n: usize) -> usize {
    ((unit(draw) * n as f64) as usize).min(n - 1)
}

/// `apply(m, x, out)` writes the image of `x` under map `m`.
pub type MapFn<'a> = dyn Fn(usize, &[f64], &mut [f64]) -> Result<()> + 'a;

/// Stateful index generator for one orbit.
pub struct Selector<'a> {
    policy: &'a SelectionPolicy,
    rng: ChaCha8Rng,
    prev: Option<usize>,
    target: Option<NnIndex>,
    scratch: Vec<f64>,
}

impl<'a> Selector<'a> {
    pub fn new(policy: &'a SelectionPolicy, seed: u64) -> Self {
        let target = match &policy.kind {
            PolicyKind::AdversarialFloor { target } => Some(NnIndex::new(target)),
            _ => None,
        };
        Selector { policy, rng: ChaCha8Rng::seed_from_u64(seed), prev: None, target, scratch: Vec::new() }
    }

    /// Next map index; only the adversary calls `apply`.
    pub fn next_index(&mut self, current: &[f64], apply: &MapFn<'_>) -> Result<usize> {
        let n = self.policy.n_maps;
        let idx = match &self.policy.kind {
            PolicyKind::UniformIid => uniform_index(self.rng.next_u64(), n),
            PolicyKind::Markov { matrix } => {
                let u = unit(self.rng.next_u64());
                match self.prev {
                    None => ((u * n as f64) as usize).min(n - 1),
                    Some(i) => {
                        let row = &matrix[i * n..(i + 1) * n];
                        let mut acc = 0.0;
                        let mut pick = n - 1;
                        for (j, p) in row.iter().enumerate() {
                            acc += p;
                            if u < acc {
                                pick = j;
                                break;
                            }
                        }
                        pick
                    }
                }
            }
            PolicyKind::AdversarialFloor { .. } => {
                let coin = unit(self.rng.next_u64());
                let explore = uniform_index(self.rng.next_u64(), n);
                if coin < n as f64 * self.policy.floor_p {
                    explore
                } else {
                    let index = self.target.as_ref().expect("adversary has a target");
                    self.scratch.resize(current.len(), 0.0);
                    let mut best = (f64::NEG_INFINITY, 0);
                    for m in 0..n {
                        apply(m, current, &mut self.scratch)?;
                        let d = index.distance_to(&self.scratch);
                        if d > best.0 {
                            best = (d, m);
                        }
                    }
                    best.1
                }
            }
        };
        self.prev = Some(idx);
        Ok(idx)
    }
}

/// A realized random orbit with its selection record.
#[derive(Debug, Clone)]
pub struct RandomOrbit {
    pub space: Space,
    /// `(n + 1) * dim` canonical coordinates, `x_0` first.
    pub coords: Vec<f64>,
    /// `sigmas[k - 1]` is the map that produced `x_k`.
    pub sigmas: Vec<u32>,
    pub seed: u64,
    pub policy: &'static str,
    pub floor_p: f64,
}

impl RandomOrbit {
    /// Number of steps `n`.
    pub fn steps(&self) -> usize {
        self.sigmas.len()
    }

    pub fn point(&self, k: usize) -> &[f64] {
        let d = self.space.dim();
        &self.coords[k * d..(k + 1) * d]
    }

    pub fn x0(&self) -> SpacePoint {
        SpacePoint::from_canonical(self.space, self.point(0))
    }

    /// Recomputes every step from its recorded sigma and compares bitwise.
    pub fn replays(&self, ifs: &IfsSpec) -> Result<bool> {
        let dim = self.space.dim();
        let mut buf = vec![0.0; dim];
        for (k, &s) in self.sigmas.iter().enumerate() {
            let map =
                ifs.maps().get(s as usize).ok_or_else(|| crate::Error::Usage(format!("sigma {s} out of range")))?;
            map.apply_raw(self.space, self.point(k), &mut buf)?;
            if buf.as_slice() != self.point(k + 1) {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// Runs `n` chaos-game steps from `x0`. Deterministic in `(ifs, x0, policy, n, seed)`.
pub fn run_orbit(ifs: &IfsSpec, x0: &SpacePoint, policy: &SelectionPolicy, n: usize, seed: u64) -> Result<RandomOrbit> {
    if n == 0 {
        return usage("orbit length n must be at least 1");
    }
    if x0.space() != ifs.space() {
        return usage(format!("{} start point for a {} IFS", x0.space(), ifs.space()));
    }
    policy.check_for(ifs)?;
    let space = ifs.space();
    let dim = space.dim();
    let maps = ifs.maps();
    let mut coords = vec![0.0; (n + 1) * dim];
    coords[..dim].copy_from_slice(x0.coords());
    let mut sigmas = Vec::with_capacity(n);
    let mut selector = Selector::new(policy, seed);
    let apply = |m: usize, src: &[f64], dst: &mut [f64]| maps[m].apply_raw(space, src, dst);
    for k in 1..=n {
        let (done, rest) = coords.split_at_mut(k * dim);
        let prev = &done[(k - 1) * dim..];
        let m = selector.next_index(prev, &apply)?;
        maps[m].apply_raw(space, prev, &mut rest[..dim])?;
        sigmas.push(m as u32);
    }
    Ok(RandomOrbit { space, coords, sigmas, seed, policy: policy.id(), floor_p: policy.floor_p })
}

/// Dedup'd set of `x_K, ..., x_n`.
pub fn orbit_tail(orbit: &RandomOrbit, k: usize, dedup_delta: f64) -> Result<FiniteSet> {
    let n = orbit.steps();
    if k > n {
        return usage(format!("tail start K = {k} exceeds orbit length n = {n}"));
    }
    orbit_window(orbit, k, n + 1 - k, dedup_delta)
}

/// Dedup'd set of `x_K, ..., x_{K+len-1}`, clipped to the orbit.
pub fn orbit_window(orbit: &RandomOrbit, k: usize, len: usize, dedup_delta: f64) -> Result<FiniteSet> {
    let n = orbit.steps();
    if k > n || len == 0 {
        return usage(format!("window [{k}, {k}+{len}) is outside the orbit 0..={n}"));
    }
    let dim = orbit.space.dim();
    let end = (k + len).min(n + 1);
    FiniteSet::from_canonical(orbit.space, orbit.coords[k * dim..end * dim].to_vec(), dedup_delta)
}

/// Empirical conditional frequencies for one history class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRates {
    /// The preceding indices, oldest first.
    pub history: Vec<u32>,
    pub count: usize,
    pub rates: Vec<f64>,
    /// Binomial standard error under the floor, `sqrt(p (1 - p) / count)`.
    pub stderr: f64,
    pub testable: bool,
    pub passes: bool,
}

/// Result of [`empirical_floor`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FloorReport {
    pub floor_p: f64,
    pub condition_window: usize,
    pub classes: Vec<ClassRates>,
    /// Smallest rate over testable classes.
    pub min_rate: f64,
    pub passes: bool,
}

impl FloorReport {
    pub fn untestable(&self) -> impl Iterator<Item = &ClassRates> {
        self.classes.iter().filter(|c| !c.testable)
    }
}

/// Checks the floor against the realized sigmas for every history class of
/// length `0..=condition_window`: each conditional rate must be at least
/// `floor_p - 3 * stderr`.
pub fn empirical_floor(orbit: &RandomOrbit, n_maps: usize, condition_window: usize) -> Result<FloorReport> {
    if condition_window > 2 {
        return usage(format!("condition window is at most 2, got {condition_window}"));
    }
    if n_maps == 0 {
        return usage("need at least one map");
    }
    let sig = &orbit.sigmas;
    if sig.len() < 100 * n_maps {
        return usage(format!("orbit has {} steps, need at least {} for a floor check", sig.len(), 100 * n_maps));
    }
    if let Some(&s) = sig.iter().find(|&&s| s as usize >= n_maps) {
        return usage(format!("sigma {s} is out of range for {n_maps} maps"));
    }
    let p = orbit.floor_p;
    let mut classes = Vec::new();
    for w in 0..=condition_window {
        let n_classes = n_maps.pow(w as u32);
        let mut counts = vec![0usize; n_classes * n_maps];
        for k in w..sig.len() {
            let class = sig[k - w..k].iter().fold(0usize, |acc, &s| acc * n_maps + s as usize);
            counts[class * n_maps + sig[k] as usize] += 1;
        }
        for class in 0..n_classes {
            let row = &counts[class * n_maps..(class + 1) * n_maps];
            let count: usize = row.iter().sum();
            let mut history = vec![0u32; w];
            let mut c = class;
            for slot in history.iter_mut().rev() {
                *slot = (c % n_maps) as u32;
                c /= n_maps;
            }
            let rates: Vec<f64> = row.iter().map(|&x| if count == 0 { 0.0 } else { x as f64 / count as f64 }).collect();
            let testable = count >= MIN_CLASS_SAMPLES;
            let stderr = if count == 0 { f64::INFINITY } else { (p * (1.0 - p) / count as f64).sqrt() };
            let passes = !testable || rates.iter().all(|&r| r >= p - 3.0 * stderr);
            classes.push(ClassRates { history, count, rates, stderr, testable, passes });
        }
    }
    let min_rate =
        classes.iter().filter(|c| c.testable).flat_map(|c| c.rates.iter().copied()).fold(f64::INFINITY, f64::min);
    let passes = classes.iter().all(|c| c.passes);
    Ok(FloorReport { floor_p: p, condition_window, classes, min_rate, passes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hausdorff::{hausdorff_distance, Mode};
    use crate::ifs::MapSpec;
    use crate::presets;

    fn circle_x0() -> SpacePoint {
        SpacePoint::new(Space::Circle, vec![1.0, 0.0]).unwrap()
    }

    #[test]
    fn identity_orbit_is_constant() {
        let ifs = IfsSpec::new(Space::euclidean(2), vec![MapSpec::Identity], "id").unwrap();
        let x0 = SpacePoint::new(Space::euclidean(2), vec![0.3, -1.0]).unwrap();
        let o = run_orbit(&ifs, &x0, &SelectionPolicy::uniform(1, 1.0).unwrap(), 50, 9).unwrap();
        assert_eq!(o.coords.len(), 51 * 2);
        assert!(o.coords.chunks(2).all(|p| p == x0.coords()));
        let tail = orbit_tail(&o, 0, 1e-6).unwrap();
        assert_eq!(tail.len(), 1);
    }

    #[test]
    fn circle_orbit_stays_on_circle_and_replays() {
        let ifs = presets::circle_rotation(1.0);
        let o = run_orbit(&ifs, &circle_x0(), &SelectionPolicy::uniform(2, 0.5).unwrap(), 100_000, 3).unwrap();
        assert!(o.coords.chunks(2).all(|p| (p[0].hypot(p[1]) - 1.0).abs() <= 1e-9));
        assert!(o.replays(&ifs).unwrap());
        let again = run_orbit(&ifs, &circle_x0(), &SelectionPolicy::uniform(2, 0.5).unwrap(), 100_000, 3).unwrap();
        assert_eq!(o.sigmas, again.sigmas);
        assert_eq!(o.coords, again.coords);
    }

    #[test]
    fn tails() {
        let ifs = presets::circle_rotation(1.0);
        let o = run_orbit(&ifs, &circle_x0(), &SelectionPolicy::uniform(2, 0.5).unwrap(), 20, 1).unwrap();
        let last = orbit_tail(&o, 20, 1e-9).unwrap();
        assert_eq!(last.len(), 1);
        assert_eq!(last.point(0), o.point(20));
        assert!(orbit_tail(&o, 21, 1e-9).is_err());
    }

    #[test]
    fn sierpinski_tail_is_close_to_the_attractor() {
        let ifs = presets::sierpinski();
        let x0 = SpacePoint::new(Space::euclidean(2), vec![0.0, 0.0]).unwrap();
        let b0 = FiniteSet::singleton(&x0, 1e-3 / 4.0).unwrap();
        let reference = crate::deterministic::deterministic_attractor(&ifs, &b0, 2e-3, 100, 5).unwrap().points;
        let policy = SelectionPolicy::uniform(3, 1.0 / 3.0).unwrap();
        let mut ok = 0;
        for seed in 0..20 {
            let o = run_orbit(&ifs, &x0, &policy, 100_000, seed).unwrap();
            let tail = orbit_tail(&o, 100, 2.5e-4).unwrap();
            if hausdorff_distance(&tail, &reference, Mode::Accelerated).unwrap().value < 0.01 {
                ok += 1;
            }
        }
        assert!(ok >= 19, "{ok}/20");
    }

    #[test]
    fn circle_tail_occupies_every_angular_bin() {
        // 314 bins of width 2 pi / 314 < 0.02 rad.
        let policy = SelectionPolicy::uniform(2, 0.5).unwrap();
        let full = (0..20)
            .filter(|&seed| {
                let o = run_orbit(&presets::circle_rotation(1.0), &circle_x0(), &policy, 100_000, seed).unwrap();
                let tail = orbit_tail(&o, 1000, 0.0).unwrap();
                let mut bins = [false; 314];
                for p in tail.points() {
                    let t = p[1].atan2(p[0]).rem_euclid(std::f64::consts::TAU);
                    bins[((t / std::f64::consts::TAU * 314.0) as usize).min(313)] = true;
                }
                bins.iter().all(|&b| b)
            })
            .count();
        assert!(full >= 19, "{full}/20");
    }

    #[test]
    fn policy_validation() {
        assert!(SelectionPolicy::uniform(2, 0.6).is_err());
        assert!(SelectionPolicy::uniform(2, 0.0).is_err());
        assert!(SelectionPolicy::markov(vec![0.9, 0.1, 0.1, 0.9], 2, 0.1).is_ok());
        assert!(SelectionPolicy::markov(vec![0.95, 0.05, 0.1, 0.9], 2, 0.1).is_err());
        assert!(SelectionPolicy::markov(vec![0.9, 0.2, 0.1, 0.9], 2, 0.1).is_err());
        assert!(SelectionPolicy::markov(vec![1.0], 2, 0.1).is_err());
        let ifs = presets::circle_rotation(1.0);
        let wrong = SelectionPolicy::uniform(3, 0.2).unwrap();
        assert!(matches!(run_orbit(&ifs, &circle_x0(), &wrong, 10, 0), Err(crate::Error::Usage(_))));
    }

    fn rates_within(report: &FloorReport, lo: f64, hi: f64) -> bool {
        report.classes.iter().filter(|c| c.testable).all(|c| c.rates.iter().all(|&r| r >= lo && r <= hi))
    }

    #[test]
    fn uniform_floor_rates() {
        let ifs = presets::circle_rotation(1.0);
        let o = run_orbit(&ifs, &circle_x0(), &SelectionPolicy::uniform(2, 0.5).unwrap(), 10_000, 11).unwrap();
        let r = empirical_floor(&o, 2, 2).unwrap();
        assert_eq!(r.classes.len(), 1 + 2 + 4);
        assert!(rates_within(&r, 0.47, 0.53), "{r:?}");
        assert!(r.passes);
    }

    #[test]
    fn markov_floor_rates() {
        let ifs = presets::circle_rotation(1.0);
        let policy = SelectionPolicy::markov(vec![0.9, 0.1, 0.1, 0.9], 2, 0.1).unwrap();
        let o = run_orbit(&ifs, &circle_x0(), &policy, 10_000, 5).unwrap();
        let r = empirical_floor(&o, 2, 2).unwrap();
        assert!(r.min_rate >= 0.07, "{}", r.min_rate);
        assert!(r.passes);
    }

    #[test]
    fn adversarial_floor_rates() {
        let ifs = presets::circle_rotation(1.0);
        let target = presets::circle_net(1000);
        let policy = SelectionPolicy::adversarial(2, 0.1, target).unwrap();
        let o = run_orbit(&ifs, &circle_x0(), &policy, 10_000, 5).unwrap();
        assert!(o.replays(&ifs).unwrap());
        let r = empirical_floor(&o, 2, 2).unwrap();
        assert!(r.min_rate >= 0.07, "{}", r.min_rate);
        assert!(r.passes);
    }

    #[test]
    fn adversary_prefers_escape() {
        // target {0}; from x = 1 the map x -> 2x lands farther than x -> x/2
        let ifs = IfsSpec::new(
            Space::euclidean(1),
            vec![
                MapSpec::Affine { matrix: vec![0.5], offset: vec![0.0] },
                MapSpec::Affine { matrix: vec![2.0], offset: vec![0.0] },
            ],
            "pull-push",
        )
        .unwrap();
        let target = FiniteSet::new(Space::euclidean(1), &[[0.0]], 0.0).unwrap();
        let policy = SelectionPolicy::adversarial(2, 0.05, target).unwrap();
        let x0 = SpacePoint::new(Space::euclidean(1), vec![1.0]).unwrap();
        let o = run_orbit(&ifs, &x0, &policy, 500, 2).unwrap();
        let pushes = o.sigmas.iter().filter(|&&s| s == 1).count();
        // exploration picks map 1 half the time, the adversary always
        assert!(pushes > 450, "{pushes}");
    }

    #[test]
    fn floor_needs_enough_samples() {
        let ifs = presets::circle_rotation(1.0);
        let o = run_orbit(&ifs, &circle_x0(), &SelectionPolicy::uniform(2, 0.5).unwrap(), 100, 1).unwrap();
        assert!(empirical_floor(&o, 2, 1).is_err());
        let o = run_orbit(&ifs, &circle_x0(), &SelectionPolicy::uniform(2, 0.5).unwrap(), 300, 1).unwrap();
        let r = empirical_floor(&o, 2, 2).unwrap();
        assert!(r.untestable().count() > 0);
    }
}
