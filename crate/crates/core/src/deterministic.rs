//! The deterministic algorithm: iterate the Hutchinson map until successive
//! iterates stop moving, and truncations of the topological upper limit
//! `⋂_K closure(⋃_{k ≥ K} F^k(B))`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{domain, usage, Result};
use crate::hausdorff::{hausdorff_distance, Mode};
use crate::ifs::{hutchinson_step, FiniteSet, IfsSpec};

/// Consecutive sub-tolerance gaps required before declaring convergence.
pub const DEFAULT_WINDOW: usize = 5;

/// One row of the convergence trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub k: usize,
    pub size: usize,
    /// `d_H(F^{k-1} B, F^k B)`.
    pub cauchy_gap: f64,
}

/// Result of [`deterministic_attractor`].
#[derive(Debug, Clone)]
pub struct AttractorApprox {
    /// The last iterate.
    pub points: FiniteSet,
    pub tol: f64,
    pub iters_used: usize,
    /// Final `d_H(F^k B, F^{k+1} B)`.
    pub cauchy_gap: f64,
    /// Stabilization only; says nothing about existence of an attractor.
    pub converged: bool,
    pub trace: Vec<TraceRow>,
}

impl AttractorApprox {
    /// Writes the trace as `k,size,cauchy_gap` CSV.
    pub fn write_trace_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "k,size,cauchy_gap")?;
        for row in &self.trace {
            writeln!(w, "{},{},{:e}", row.k, row.size, row.cauchy_gap)?;
        }
        Ok(())
    }
}

/// Iterates `B <- F(B)` until the Cauchy gap stays below `tol` for `window`
/// consecutive steps, or `max_iter` steps have run (`converged = false`).
pub fn deterministic_attractor(
    ifs: &IfsSpec,
    b0: &FiniteSet,
    tol: f64,
    max_iter: usize,
    window: usize,
) -> Result<AttractorApprox> {
    if b0.is_empty() {
        return domain("deterministic iteration from an empty set");
    }
    if !(tol > 0.0) {
        return usage(format!("tol must be positive, got {tol}"));
    }
    if window == 0 {
        return usage("window must be at least 1");
    }
    let mut cur = b0.clone();
    let mut trace = Vec::new();
    let mut streak = 0;
    let mut gap = f64::INFINITY;
    for k in 1..=max_iter {
        let next = hutchinson_step(ifs, &cur)?;
        gap = hausdorff_distance(&cur, &next, Mode::Accelerated)?.value;
        trace.push(TraceRow { k, size: next.len(), cauchy_gap: gap });
        cur = next;
        streak = if gap < tol { streak + 1 } else { 0 };
        if streak >= window {
            return Ok(AttractorApprox { points: cur, tol, iters_used: k, cauchy_gap: gap, converged: true, trace });
        }
    }
    Ok(AttractorApprox { points: cur, tol, iters_used: max_iter, cauchy_gap: gap, converged: false, trace })
}

/// `dedup(⋃_{k=K}^{k_max} F^k(B0))`, the finite truncation of the inner
/// union of the upper limit. Callers realize the outer intersection by
/// comparing successive `K`.
pub fn upper_limit(ifs: &IfsSpec, b0: &FiniteSet, k_lo: usize, k_max: usize) -> Result<FiniteSet> {
    if k_lo > k_max {
        return usage(format!("upper limit needs K <= k_max, got K = {k_lo}, k_max = {k_max}"));
    }
    let mut cur = b0.clone();
    let mut acc: Option<FiniteSet> = None;
    for k in 0..=k_max {
        if k >= k_lo {
            acc = Some(match acc {
                None => cur.clone(),
                Some(a) => a.union(&cur)?,
            });
        }
        if k < k_max {
            cur = hutchinson_step(ifs, &cur)?;
        }
    }
    Ok(acc.expect("k_max >= K"))
}
