//! Statistical verification of chaos-game convergence.
//!
//! "With probability one" is tested as a seed panel: a run passes when at
//! least `pass_threshold` of `seeds` independent orbits reach
//! `d_H(A_ref, tail) < epsilon` at some sampled burn-in `K`. Both directed
//! halves of the distance are kept: containment `h(tail, A_ref)` and
//! covering `h(A_ref, tail)`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chaos::{orbit_tail, orbit_window, run_orbit, RandomOrbit, SelectionPolicy};
use crate::deterministic::upper_limit;
use crate::error::{usage, Result};
use crate::hausdorff::{directed_to_index, hausdorff_distance, Mode, NnIndex};
use crate::ifs::{bounds, hutchinson_step, FiniteSet, IfsSpec};
use crate::spaces::{Space, SpacePoint};

pub const REPORT_VERSION: u32 = 1;

/// Budgets of a convergence run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceParams {
    pub epsilon: f64,
    /// Orbit length.
    pub n: usize,
    /// Tail length `T`.
    pub tail: usize,
    /// Burn-in values `K`, increasing; each needs `K + T <= n + 1`.
    pub k_ladder: Vec<usize>,
    pub seeds: usize,
    pub first_seed: u64,
    /// Dedup resolution of tail sets.
    pub dedup_delta: f64,
    /// Passing seeds needed for the panel to pass.
    pub pass_threshold: usize,
}

impl ConvergenceParams {
    fn check(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return usage(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if self.tail == 0 || self.seeds == 0 || self.n == 0 {
            return usage("n, tail and seeds must be at least 1");
        }
        if self.k_ladder.is_empty() || self.k_ladder.windows(2).any(|w| w[0] >= w[1]) {
            return usage("k_ladder must be nonempty and strictly increasing");
        }
        let last = *self.k_ladder.last().expect("nonempty");
        if last + self.tail > self.n + 1 {
            return usage(format!("K = {last} plus tail {} overruns the orbit length {}", self.tail, self.n));
        }
        if self.pass_threshold == 0 || self.pass_threshold > self.seeds {
            return usage(format!("pass_threshold must lie in 1..={}", self.seeds));
        }
        Ok(())
    }
}

/// Distances of one tail window `x_K, ..., x_{K+T-1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub k: usize,
    pub distance: f64,
    /// `h(tail, A_ref)`: the tail lies in `A_ref + containment`.
    pub containment: f64,
    /// `h(A_ref, tail)`: the tail covers `A_ref` to this radius.
    pub covering: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub curve: Vec<CurvePoint>,
    /// Smallest sampled `K` with distance below epsilon.
    pub k_found: Option<usize>,
    pub passed: bool,
    /// Sampled `K` past `k_found` whose distance is back above epsilon.
    pub relapses: Vec<usize>,
    /// Sampled `K` past `k_found` whose containment is back above epsilon.
    pub containment_relapses: Vec<usize>,
    /// Largest `| |x| - 1 |` over the orbit for circle and projective
    /// spaces; zero for Euclidean ones.
    pub max_norm_drift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub format_version: u32,
    pub scene: String,
    pub policy: String,
    pub floor_p: f64,
    pub params: ConvergenceParams,
    /// Worst case over seeds at each sampled `K`.
    pub tail_distance_curve: Vec<CurvePoint>,
    /// Smallest sampled `K` where every seed is below epsilon.
    pub k_found: Option<usize>,
    pub seeds_passed: usize,
    pub seeds_total: usize,
    pub passed: bool,
    pub per_seed: Vec<SeedResult>,
}

impl ConvergenceReport {
    /// `K,distance,containment,covering` rows of the worst-case curve.
    pub fn write_curve_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "K,distance,containment,covering")?;
        for c in &self.tail_distance_curve {
            writeln!(w, "{},{:e},{:e},{:e}", c.k, c.distance, c.containment, c.covering)?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

fn norm_drift(orbit: &RandomOrbit) -> f64 {
    match orbit.space {
        Space::Euclidean { .. } => 0.0,
        Space::Circle | Space::Projective2 => orbit
            .coords
            .chunks_exact(orbit.space.dim())
            .map(|p| (p.iter().map(|c| c * c).sum::<f64>().sqrt() - 1.0).abs())
            .fold(0.0, f64::max),
    }
}

/// Distances between one orbit's tail windows and `A_ref`.
pub fn seed_curve(orbit: &RandomOrbit, reference: &NnIndex, params: &ConvergenceParams) -> Result<Vec<CurvePoint>> {
    params
        .k_ladder
        .iter()
        .map(|&k| {
            let tail = orbit_window(orbit, k, params.tail, params.dedup_delta)?;
            let containment = directed_to_index(&tail, reference)?;
            let covering = directed_to_index(reference.set(), &NnIndex::new(&tail))?;
            Ok(CurvePoint { k, distance: containment.max(covering), containment, covering })
        })
        .collect()
}

fn judge(seed: u64, curve: Vec<CurvePoint>, epsilon: f64, drift: f64) -> SeedResult {
    let knee = curve.iter().position(|c| c.distance < epsilon);
    let after = |pred: &dyn Fn(&CurvePoint) -> bool| -> Vec<usize> {
        knee.map_or_else(Vec::new, |i| curve[i..].iter().filter(|c| pred(c)).map(|c| c.k).collect())
    };
    let relapses = after(&|c| c.distance >= epsilon);
    let containment_relapses = after(&|c| c.containment >= epsilon);
    SeedResult {
        seed,
        k_found: knee.map(|i| curve[i].k),
        passed: knee.is_some(),
        relapses,
        containment_relapses,
        max_norm_drift: drift,
        curve,
    }
}

/// Runs `seeds` orbits from `x0` (seeds `first_seed..`) and compares their
/// tails against `reference`.
pub fn convergence_report(
    scene: &str,
    ifs: &IfsSpec,
    x0: &SpacePoint,
    policy: &SelectionPolicy,
    reference: &FiniteSet,
    params: &ConvergenceParams,
) -> Result<ConvergenceReport> {
    params.check()?;
    if reference.space() != ifs.space() {
        return usage(format!("reference lives in {}, IFS in {}", reference.space(), ifs.space()));
    }
    let index = NnIndex::new(reference);
    let per_seed = (0..params.seeds as u64)
        .into_par_iter()
        .map(|i| {
            let seed = params.first_seed.wrapping_add(i);
            let orbit = run_orbit(ifs, x0, policy, params.n, seed)?;
            let curve = seed_curve(&orbit, &index, params)?;
            Ok(judge(seed, curve, params.epsilon, norm_drift(&orbit)))
        })
        .collect::<Result<Vec<_>>>()?;
    let tail_distance_curve: Vec<CurvePoint> = params
        .k_ladder
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let worst = |f: fn(&CurvePoint) -> f64| per_seed.iter().map(|s| f(&s.curve[i])).fold(0.0, f64::max);
            CurvePoint {
                k,
                distance: worst(|c| c.distance),
                containment: worst(|c| c.containment),
                covering: worst(|c| c.covering),
            }
        })
        .collect();
    let k_found = tail_distance_curve.iter().find(|c| c.distance < params.epsilon).map(|c| c.k);
    let seeds_passed = per_seed.iter().filter(|s| s.passed).count();
    Ok(ConvergenceReport {
        format_version: REPORT_VERSION,
        scene: scene.to_string(),
        policy: policy.id().to_string(),
        floor_p: policy.floor_p(),
        params: params.clone(),
        tail_distance_curve,
        k_found,
        seeds_passed,
        seeds_total: params.seeds,
        passed: seeds_passed >= params.pass_threshold,
        per_seed,
    })
}

/// One certified start point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverSample {
    pub x: Vec<f64>,
    /// Least `m` with `d_H(A_ref, F^m {x}) < epsilon / 2`.
    pub m: usize,
}

/// Empirical uniform bound `M(epsilon)` over a net of `A_ref + epsilon`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverCertificate {
    pub format_version: u32,
    pub epsilon: f64,
    pub net_delta: f64,
    pub m_cap: usize,
    /// Dedup resolution used for the iterates `F^m {x}`.
    pub iterate_delta: f64,
    pub ifs_hash: String,
    pub samples: Vec<CoverSample>,
    /// `1 + max m`; absent when there are no samples.
    #[serde(rename = "M")]
    pub big_m: Option<usize>,
    /// Net points with no `m <= m_cap`.
    pub failures: Vec<Vec<f64>>,
    pub complete: bool,
}

impl CoverCertificate {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("certificate serializes");
        s.push('\n');
        s
    }

    /// Recomputes every sample; true iff all still satisfy the bound.
    pub fn replay(&self, ifs: &IfsSpec, reference: &FiniteSet) -> Result<bool> {
        if ifs.content_hash() != self.ifs_hash {
            return Ok(false);
        }
        let half = self.epsilon / 2.0;
        let ref_index = NnIndex::new(reference);
        let results = self
            .samples
            .par_iter()
            .map(|s| {
                let x = SpacePoint::new(ifs.space(), s.x.clone())?;
                let set = crate::ifs::iterate(ifs, &FiniteSet::singleton(&x, self.iterate_delta)?, s.m)?;
                Ok(within_both(&set, reference, &ref_index, half))
            })
            .collect::<Result<Vec<bool>>>()?;
        Ok(results.into_iter().all(|ok| ok))
    }
}

/// Points of a lattice over the bounding box of `A_ref + epsilon`, put in
/// canonical form, kept when strictly within `epsilon` of `A_ref` and
/// dedup'd at `net_delta`.
pub fn cover_net(reference: &FiniteSet, epsilon: f64, net_delta: f64) -> Result<FiniteSet> {
    let space = reference.space();
    let dim = space.dim();
    let (mut lo, mut hi) = bounds(reference.coords(), dim);
    for (l, h) in lo.iter_mut().zip(hi.iter_mut()) {
        *l -= epsilon;
        *h += epsilon;
    }
    if matches!(space, Space::Projective2) {
        // Either representative may be nearest to a lattice point.
        lo.iter_mut().for_each(|l| *l = l.min(-1.0));
        hi.iter_mut().for_each(|h| *h = h.max(1.0));
    }
    let step = net_delta / (dim as f64).sqrt();
    let counts: Vec<usize> = lo.iter().zip(&hi).map(|(l, h)| ((h - l) / step).ceil() as usize + 1).collect();
    let total: usize = counts.iter().product();
    if total > 50_000_000 {
        return usage(format!("cover net lattice would need {total} points; raise net_delta"));
    }
    let index = NnIndex::new(reference);
    let kept: Vec<Vec<f64>> = (0..total)
        .into_par_iter()
        .filter_map(|mut code| {
            let mut p = Vec::with_capacity(dim);
            for (i, &c) in counts.iter().enumerate() {
                p.push(lo[i] + (code % c) as f64 * step);
                code /= c;
            }
            space.canonicalize_in_place(&mut p).ok()?;
            index.within(&p, epsilon).then_some(p)
        })
        .collect();
    let flat: Vec<f64> = kept.into_iter().flatten().collect();
    if flat.is_empty() {
        return usage("cover net is empty");
    }
    FiniteSet::from_canonical(space, flat, net_delta)
}

/// `d_H(set, reference) < r`.
fn within_both(set: &FiniteSet, reference: &FiniteSet, ref_index: &NnIndex, r: f64) -> bool {
    ref_index.contains_all(set, r) && NnIndex::new(set).contains_all(reference, r)
}

/// Least `m <= m_cap` with `d_H(A_ref, F^m {x}) < epsilon / 2`.
fn least_m(
    ifs: &IfsSpec,
    reference: &FiniteSet,
    ref_index: &NnIndex,
    x: &[f64],
    epsilon: f64,
    m_cap: usize,
    delta: f64,
) -> Result<Option<usize>> {
    let half = epsilon / 2.0;
    let mut cur = FiniteSet::from_canonical(ifs.space(), x.to_vec(), delta)?;
    for m in 0..=m_cap {
        if within_both(&cur, reference, ref_index, half) {
            return Ok(Some(m));
        }
        if m < m_cap {
            cur = hutchinson_step(ifs, &cur)?;
        }
    }
    Ok(None)
}

/// Samples the cover bound of the attractor: for every point `x` of a
/// `net_delta`-net of `A_ref + epsilon`, the least `m` with
/// `d_H(A_ref, F^m {x}) < epsilon / 2`.
pub fn cover_bound(
    ifs: &IfsSpec,
    reference: &FiniteSet,
    epsilon: f64,
    net_delta: f64,
    m_cap: usize,
) -> Result<CoverCertificate> {
    if !(epsilon > 0.0) {
        return usage(format!("epsilon must be positive, got {epsilon}"));
    }
    if !(net_delta > 0.0 && net_delta < epsilon / 4.0) {
        return usage(format!("net_delta must lie in (0, epsilon/4) = (0, {}), got {net_delta}", epsilon / 4.0));
    }
    if m_cap == 0 {
        return usage("m_cap must be at least 1");
    }
    if reference.space() != ifs.space() {
        return usage(format!("reference lives in {}, IFS in {}", reference.space(), ifs.space()));
    }
    let net = cover_net(reference, epsilon, net_delta)?;
    let iterate_delta = epsilon / 100.0;
    let ref_index = NnIndex::new(reference);
    let found = net
        .points()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|x| least_m(ifs, reference, &ref_index, x, epsilon, m_cap, iterate_delta))
        .collect::<Result<Vec<_>>>()?;
    let mut samples = Vec::new();
    let mut failures = Vec::new();
    for (x, m) in net.points().zip(found) {
        match m {
            Some(m) => samples.push(CoverSample { x: x.to_vec(), m }),
            None => failures.push(x.to_vec()),
        }
    }
    let big_m = samples.iter().map(|s| s.m + 1).max();
    Ok(CoverCertificate {
        format_version: REPORT_VERSION,
        epsilon,
        net_delta,
        m_cap,
        iterate_delta,
        ifs_hash: ifs.content_hash(),
        complete: failures.is_empty(),
        samples,
        big_m,
        failures,
    })
}

/// Budgets of an upper-limit comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpperLimitParams {
    /// Orbit length.
    pub n: usize,
    /// Orbit tail start.
    pub tail_k: usize,
    /// Upper-limit truncation `K..=k_max`.
    pub ul_k: usize,
    pub ul_k_max: usize,
    pub dedup_delta: f64,
    pub seed: u64,
}

/// `d_H` between the orbit tail `x_K, ..., x_n` from `x0` and the truncated
/// upper limit of `F^k({x0})`, the two sides of the almost-sure identity of
/// their topological upper limits.
pub fn upper_limit_equality(
    ifs: &IfsSpec,
    x0: &SpacePoint,
    policy: &SelectionPolicy,
    params: &UpperLimitParams,
) -> Result<f64> {
    let orbit = run_orbit(ifs, x0, policy, params.n, params.seed)?;
    let tail = orbit_tail(&orbit, params.tail_k, params.dedup_delta)?;
    let b0 = FiniteSet::singleton(x0, params.dedup_delta)?;
    let ul = upper_limit(ifs, &b0, params.ul_k, params.ul_k_max)?;
    Ok(hausdorff_distance(&tail, &ul, Mode::Accelerated)?.value)
}
