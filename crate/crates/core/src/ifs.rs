//! Iterated function systems, finite-set surrogates for compact sets, and
//! the Hutchinson set map `F(B) = U f(B)`.

use rayon::prelude::*;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{domain, usage, Error, Result};
use crate::spaces::{Space, SpacePoint};

/// Projective matrices with |det| at or below this are rejected.
pub const SINGULAR_DET: f64 = 1e-12;

/// Image sets at least this large are mapped in parallel.
const PAR_THRESHOLD: usize = 1 << 14;

/// One continuous map of an IFS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MapSpec {
    Identity,
    /// `x -> matrix * x + offset`, matrix row-major `dim x dim`.
    Affine {
        matrix: Vec<f64>,
        offset: Vec<f64>,
    },
    /// Anticlockwise rotation of the plane by `alpha` radians.
    Rotation2 {
        alpha: f64,
    },
    /// Linear map on homogeneous coordinates, row-major 3x3.
    Projective3x3 {
        matrix: [f64; 9],
    },
    /// A whole sub-IFS acting as one map of a hyperspace IFS.
    Lifted {
        ifs_id: usize,
    },
}

impl MapSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            MapSpec::Identity => "identity",
            MapSpec::Affine { .. } => "affine",
            MapSpec::Rotation2 { .. } => "rotation2",
            MapSpec::Projective3x3 { .. } => "projective3x3",
            MapSpec::Lifted { .. } => "lifted",
        }
    }

    /// Checks that this map can act on points of `space`.
    pub fn check(&self, space: Space) -> Result<()> {
        match (self, space) {
            (MapSpec::Identity, _) => Ok(()),
            (MapSpec::Affine { matrix, offset }, Space::Euclidean { dim }) => {
                if matrix.len() != dim * dim || offset.len() != dim {
                    return usage(format!(
                        "affine map on euclidean({dim}) needs {} matrix entries and {dim} offsets, got {} and {}",
                        dim * dim,
                        matrix.len(),
                        offset.len()
                    ));
                }
                if matrix.iter().chain(offset).any(|v| !v.is_finite()) {
                    return usage("affine map has non-finite entries");
                }
                Ok(())
            }
            (MapSpec::Rotation2 { alpha }, Space::Circle | Space::Euclidean { dim: 2 }) => {
                if alpha.is_finite() {
                    Ok(())
                } else {
                    usage("rotation angle is not finite")
                }
            }
            (MapSpec::Projective3x3 { matrix }, Space::Projective2) => {
                let det = det3(matrix);
                if !(det.abs() > SINGULAR_DET) {
                    return usage(format!("projective matrix is singular (det = {det:e})"));
                }
                Ok(())
            }
            (map, space) => usage(format!("{} map cannot act on {space} points", map.kind_name())),
        }
    }

    /// Writes the canonical image of `src` into `dst`.
    pub(crate) fn apply_raw(&self, space: Space, src: &[f64], dst: &mut [f64]) -> Result<()> {
        match self {
            MapSpec::Identity => dst.copy_from_slice(src),
            MapSpec::Affine { matrix, offset } => {
                let n = src.len();
                for (i, out) in dst.iter_mut().enumerate() {
                    let row = &matrix[i * n..(i + 1) * n];
                    *out = row.iter().zip(src).map(|(a, x)| a * x).sum::<f64>() + offset[i];
                }
            }
            MapSpec::Rotation2 { alpha } => {
                let (s, c) = alpha.sin_cos();
                dst[0] = c * src[0] - s * src[1];
                dst[1] = s * src[0] + c * src[1];
            }
            MapSpec::Projective3x3 { matrix } => {
                for (i, out) in dst.iter_mut().enumerate() {
                    *out = matrix[3 * i] * src[0] + matrix[3 * i + 1] * src[1] + matrix[3 * i + 2] * src[2];
                }
            }
            MapSpec::Lifted { ifs_id } => {
                return usage(format!("lifted map (sub-IFS {ifs_id}) cannot act on a ground point"));
            }
        }
        space.canonicalize_in_place(dst)
    }
}

fn det3(m: &[f64; 9]) -> f64 {
    m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) + m[2] * (m[3] * m[7] - m[4] * m[6])
}

/// Applies one map to one point.
pub fn apply_map(map: &MapSpec, p: &SpacePoint) -> Result<SpacePoint> {
    map.check(p.space())?;
    let mut out = vec![0.0; p.space().dim()];
    map.apply_raw(p.space(), p.coords(), &mut out)?;
    Ok(SpacePoint::from_canonical(p.space(), &out))
}

/// An iterated function system `(X; f_1, ..., f_N)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IfsSpec {
    space: Space,
    maps: Vec<MapSpec>,
    label: String,
}

impl IfsSpec {
    pub fn new(space: Space, maps: Vec<MapSpec>, label: impl Into<String>) -> Result<Self> {
        if maps.is_empty() {
            return usage("an IFS needs at least one map");
        }
        for (i, m) in maps.iter().enumerate() {
            m.check(space).map_err(|e| Error::Usage(format!("map {i}: {e}")))?;
        }
        Ok(IfsSpec { space, maps, label: label.into() })
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn maps(&self) -> &[MapSpec] {
        &self.maps
    }

    /// Number of maps N.
    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Hex SHA-256 of the serialized system; identifies the IFS in dump sidecars.
    pub fn content_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("IfsSpec serializes");
        let digest = Sha256::digest(&bytes);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// A finite point set standing in for a compact set.
///
/// Points are canonical and pairwise at least `dedup_delta / 2` apart; with
/// `dedup_delta == 0` only exact duplicates are merged.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteSet {
    space: Space,
    coords: Vec<f64>,
    dedup_delta: f64,
}

impl FiniteSet {
    /// Canonicalizes and dedups `points` (first occurrence wins).
    pub fn new<P: AsRef<[f64]>>(space: Space, points: &[P], dedup_delta: f64) -> Result<Self> {
        let dim = space.dim();
        let mut coords = Vec::with_capacity(points.len() * dim);
        for p in points {
            let start = coords.len();
            coords.extend_from_slice(p.as_ref());
            space.canonicalize_in_place(&mut coords[start..])?;
        }
        Self::from_canonical(space, coords, dedup_delta)
    }

    pub fn singleton(p: &SpacePoint, dedup_delta: f64) -> Result<Self> {
        Self::from_canonical(p.space(), p.coords().to_vec(), dedup_delta)
    }

    /// Builds from a flat buffer of already-canonical coordinates.
    pub fn from_canonical(space: Space, coords: Vec<f64>, dedup_delta: f64) -> Result<Self> {
        if !(dedup_delta >= 0.0) || !dedup_delta.is_finite() {
            return usage(format!("dedup_delta must be finite and >= 0, got {dedup_delta}"));
        }
        if !coords.len().is_multiple_of(space.dim()) {
            return usage("coordinate buffer length is not a multiple of the space dimension");
        }
        if coords.is_empty() {
            return domain("finite set must be nonempty");
        }
        let coords = dedup(space, coords, dedup_delta);
        Ok(FiniteSet { space, coords, dedup_delta })
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn dedup_delta(&self) -> f64 {
        self.dedup_delta
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.space.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn point(&self, i: usize) -> &[f64] {
        let d = self.space.dim();
        &self.coords[i * d..(i + 1) * d]
    }

    pub fn points(&self) -> std::slice::ChunksExact<'_, f64> {
        self.coords.chunks_exact(self.space.dim())
    }

    pub fn to_points(&self) -> Vec<SpacePoint> {
        self.points().map(|c| SpacePoint::from_canonical(self.space, c)).collect()
    }

    /// Dedup'd union, keeping `self`'s points first.
    pub fn union(&self, other: &FiniteSet) -> Result<FiniteSet> {
        if self.space != other.space {
            return usage(format!("union of {} and {} sets", self.space, other.space));
        }
        let mut coords = self.coords.clone();
        coords.extend_from_slice(&other.coords);
        Self::from_canonical(self.space, coords, self.dedup_delta)
    }

    /// Re-dedups at a new resolution.
    pub fn with_delta(&self, dedup_delta: f64) -> Result<FiniteSet> {
        Self::from_canonical(self.space, self.coords.clone(), dedup_delta)
    }

    /// Component-wise (min, max) of the stored coordinates.
    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        bounds(&self.coords, self.dim())
    }
}

pub(crate) fn bounds(coords: &[f64], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for p in coords.chunks_exact(dim) {
        for (k, &c) in p.iter().enumerate() {
            lo[k] = lo[k].min(c);
            hi[k] = hi[k].max(c);
        }
    }
    (lo, hi)
}

fn mix(h: u64, c: i64) -> u64 {
    (h.rotate_left(23) ^ c as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn cell_of(p: &[f64], inv: f64, out: &mut [i64]) {
    for (o, c) in out.iter_mut().zip(p) {
        *o = (c * inv).floor() as i64;
    }
}

/// Spatial-hash dedup: scan in order, drop any point within `delta / 2` of
/// an already kept point. Cell size is `delta`, so a 3^d neighbourhood
/// (plus the antipodal one in projective space) covers the merge radius.
fn dedup(space: Space, coords: Vec<f64>, delta: f64) -> Vec<f64> {
    let dim = space.dim();
    let n = coords.len() / dim;
    if n <= 1 {
        return coords;
    }
    if delta == 0.0 {
        return dedup_exact(dim, coords);
    }
    let radius = delta / 2.0;
    let inv = 1.0 / delta;
    let offsets = neighbour_offsets(dim);

    let mut heads: FxHashMap<u64, u32> = FxHashMap::default();
    heads.reserve(n.min(1 << 20));
    let mut next: Vec<u32> = Vec::with_capacity(n);
    let mut kept: Vec<f64> = Vec::with_capacity(coords.len());
    let mut cell = vec![0i64; dim];
    let mut probe = vec![0f64; dim];

    let near_kept = |heads: &FxHashMap<u64, u32>, next: &[u32], kept: &[f64], q: &[f64], cell: &mut [i64]| {
        cell_of(q, inv, cell);
        for off in offsets.chunks_exact(dim) {
            let key = cell.iter().zip(off).fold(0u64, |h, (c, o)| mix(h, c + o));
            let mut slot = heads.get(&key).copied().unwrap_or(u32::MAX);
            while slot != u32::MAX {
                let k = slot as usize;
                if space.distance_raw(q, &kept[k * dim..(k + 1) * dim]) < radius {
                    return true;
                }
                slot = next[k];
            }
        }
        false
    };

    for p in coords.chunks_exact(dim) {
        if near_kept(&heads, &next, &kept, p, &mut cell) {
            continue;
        }
        if space.identifies_antipodes() {
            for (d, s) in probe.iter_mut().zip(p) {
                *d = -s;
            }
            if near_kept(&heads, &next, &kept, &probe, &mut cell) {
                continue;
            }
        }
        let idx = (kept.len() / dim) as u32;
        kept.extend_from_slice(p);
        cell_of(p, inv, &mut cell);
        let key = cell.iter().fold(0u64, |h, &c| mix(h, c));
        let prev = heads.insert(key, idx).unwrap_or(u32::MAX);
        next.push(prev);
    }
    kept
}

fn dedup_exact(dim: usize, coords: Vec<f64>) -> Vec<f64> {
    let mut seen: FxHashMap<Vec<u64>, ()> = FxHashMap::default();
    let mut kept = Vec::with_capacity(coords.len());
    for p in coords.chunks_exact(dim) {
        // + 0.0 folds -0.0 into 0.0
        let key: Vec<u64> = p.iter().map(|c| (c + 0.0).to_bits()).collect();
        if seen.insert(key, ()).is_none() {
            kept.extend_from_slice(p);
        }
    }
    kept
}

/// All offsets in {-1, 0, 1}^dim, flattened.
fn neighbour_offsets(dim: usize) -> Vec<i64> {
    let count = 3usize.pow(dim as u32);
    let mut out = Vec::with_capacity(count * dim);
    for mut code in 0..count {
        for _ in 0..dim {
            out.push((code % 3) as i64 - 1);
            code /= 3;
        }
    }
    out
}

/// One application of the Hutchinson map. Images are laid out map-major
/// (all of `f_1(B)`, then `f_2(B)`, ...) before dedup.
pub fn hutchinson_step(ifs: &IfsSpec, set: &FiniteSet) -> Result<FiniteSet> {
    if set.is_empty() {
        return domain("hutchinson step on an empty set");
    }
    if set.space != ifs.space {
        return usage(format!("{} IFS applied to a {} set", ifs.space, set.space));
    }
    let coords = map_images(ifs, set.coords())?;
    FiniteSet::from_canonical(set.space, coords, set.dedup_delta)
}

/// Undeduped images of every point under every map, map-major.
pub(crate) fn map_images(ifs: &IfsSpec, src: &[f64]) -> Result<Vec<f64>> {
    let space = ifs.space;
    let dim = space.dim();
    let mut out = vec![0.0; src.len() * ifs.maps.len()];
    for (map, block) in ifs.maps.iter().zip(out.chunks_mut(src.len())) {
        if src.len() / dim >= PAR_THRESHOLD {
            block.par_chunks_mut(dim).zip(src.par_chunks(dim)).try_for_each(|(dst, p)| map.apply_raw(space, p, dst))?;
        } else {
            for (dst, p) in block.chunks_mut(dim).zip(src.chunks(dim)) {
                map.apply_raw(space, p, dst)?;
            }
        }
    }
    Ok(out)
}

/// `F^k(B)`, dedup'd after every step. `k == 0` returns `B`.
pub fn iterate(ifs: &IfsSpec, set: &FiniteSet, k: usize) -> Result<FiniteSet> {
    let mut cur = set.clone();
    for _ in 0..k {
        cur = hutchinson_step(ifs, &cur)?;
    }
    Ok(cur)
}
