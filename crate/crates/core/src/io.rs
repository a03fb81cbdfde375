//! On-disk artifacts.
//!
//! * Point dumps: raw little-endian `f64`, `dim` values per point, no header.
//!   A JSON sidecar at `<dump>.json` ([`PointsMeta`]) carries the space, the
//!   point count and provenance (seed, policy, IFS hash).
//! * Sigma dumps: raw little-endian `u32`, one 0-based map index per step.
//! * Ensemble dumps: per member a little-endian `u64` point count followed by
//!   that many points; the manifest sits at `<dump>.json` ([`EnsembleManifest`]).
//!
//! Everything written here is byte-deterministic for fixed inputs.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::chaos::RandomOrbit;
use crate::error::{Error, Result};
use crate::ifs::{FiniteSet, IfsSpec};
use crate::spaces::Space;
use crate::superfractal::SetEnsemble;

pub const FORMAT_VERSION: u32 = 1;

/// Sidecar of a point dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointsMeta {
    pub format_version: u32,
    /// `"orbit"` or `"set"`.
    pub content: String,
    #[serde(flatten)]
    pub space: Space,
    pub count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dedup_delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub floor_p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ifs_label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ifs_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_file: Option<String>,
}

/// `<path>.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

fn write_f64s<W: Write>(w: &mut W, values: &[f64]) -> std::io::Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64s(bytes: &[u8]) -> Vec<f64> {
    bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect()
}

/// Writes a raw point dump and its sidecar.
pub fn write_points(path: &Path, coords: &[f64], meta: &PointsMeta) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    write_f64s(&mut w, coords)?;
    w.flush()?;
    write_json(&sidecar_path(path), meta)
}

/// Writes a finite set dump.
pub fn write_set(path: &Path, set: &FiniteSet) -> Result<()> {
    let meta = PointsMeta {
        format_version: FORMAT_VERSION,
        content: "set".into(),
        space: set.space(),
        count: set.len(),
        dedup_delta: Some(set.dedup_delta()),
        seed: None,
        policy: None,
        floor_p: None,
        ifs_label: None,
        ifs_hash: None,
        sigma_file: None,
    };
    write_points(path, set.coords(), &meta)
}

/// Writes `path` (points), `path.json` (sidecar) and `<path stem>.sigma`.
pub fn write_orbit(path: &Path, orbit: &RandomOrbit, ifs: &IfsSpec) -> Result<()> {
    let sigma_path = path.with_extension("sigma");
    let sigma_name = sigma_path.file_name().map(|s| s.to_string_lossy().into_owned());
    let meta = PointsMeta {
        format_version: FORMAT_VERSION,
        content: "orbit".into(),
        space: orbit.space,
        count: orbit.steps() + 1,
        dedup_delta: None,
        seed: Some(orbit.seed),
        policy: Some(orbit.policy.to_string()),
        floor_p: Some(orbit.floor_p),
        ifs_label: Some(ifs.label().to_string()),
        ifs_hash: Some(ifs.content_hash()),
        sigma_file: sigma_name,
    };
    let mut w = BufWriter::new(fs::File::create(&sigma_path)?);
    for s in &orbit.sigmas {
        w.write_all(&s.to_le_bytes())?;
    }
    w.flush()?;
    write_points(path, &orbit.coords, &meta)
}

/// `k,sigma,c0,c1,...` rows; `sigma` is empty for `k = 0`.
pub fn write_orbit_csv<W: Write>(mut w: W, orbit: &RandomOrbit) -> std::io::Result<()> {
    let dim = orbit.space.dim();
    write!(w, "k,sigma")?;
    for i in 0..dim {
        write!(w, ",c{i}")?;
    }
    writeln!(w)?;
    for k in 0..=orbit.steps() {
        if k == 0 {
            write!(w, "0,")?;
        } else {
            write!(w, "{k},{}", orbit.sigmas[k - 1])?;
        }
        for c in orbit.point(k) {
            write!(w, ",{c:?}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Reads a point dump and its sidecar; coordinates are returned as stored.
pub fn read_points(path: &Path) -> Result<(PointsMeta, Vec<f64>)> {
    let meta_path = sidecar_path(path);
    if !meta_path.exists() {
        return Err(Error::Format(format!("missing sidecar {}", meta_path.display())));
    }
    let meta: PointsMeta = read_json(&meta_path)?;
    if meta.format_version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported dump format version {}", meta.format_version)));
    }
    let bytes = fs::read(path)?;
    let dim = meta.space.dim();
    if bytes.len() != meta.count * dim * 8 {
        return Err(Error::Format(format!(
            "{} holds {} bytes, sidecar promises {} points of dimension {dim}",
            path.display(),
            bytes.len(),
            meta.count
        )));
    }
    Ok((meta, read_f64s(&bytes)))
}

/// Loads any point dump (orbit or set) as a canonical, dedup'd finite set.
/// `dedup_delta` overrides the sidecar's resolution.
pub fn read_set(path: &Path, dedup_delta: Option<f64>) -> Result<FiniteSet> {
    let (meta, coords) = read_points(path)?;
    let delta = dedup_delta.or(meta.dedup_delta).unwrap_or(0.0);
    let dim = meta.space.dim();
    let mut coords = coords;
    for p in coords.chunks_exact_mut(dim) {
        meta.space.canonicalize_in_place(p)?;
    }
    FiniteSet::from_canonical(meta.space, coords, delta)
}

/// Reads the sigma dump written next to an orbit.
pub fn read_sigmas(path: &Path) -> Result<Vec<u32>> {
    let bytes = fs::read(path)?;
    if bytes.len() % 4 != 0 {
        return Err(Error::Format(format!("{} is not a u32 array", path.display())));
    }
    Ok(bytes.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes"))).collect())
}

/// Manifest of an ensemble dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleManifest {
    pub format_version: u32,
    #[serde(flatten)]
    pub ground: Space,
    pub outer_delta: f64,
    pub members: usize,
    pub sizes: Vec<usize>,
    pub inner_deltas: Vec<f64>,
}

pub fn write_ensemble(path: &Path, ensemble: &SetEnsemble) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for m in ensemble.members() {
        w.write_all(&(m.len() as u64).to_le_bytes())?;
        write_f64s(&mut w, m.coords())?;
    }
    w.flush()?;
    let manifest = EnsembleManifest {
        format_version: FORMAT_VERSION,
        ground: ensemble.ground(),
        outer_delta: ensemble.outer_delta(),
        members: ensemble.len(),
        sizes: ensemble.members().iter().map(|m| m.len()).collect(),
        inner_deltas: ensemble.members().iter().map(|m| m.dedup_delta()).collect(),
    };
    write_json(&sidecar_path(path), &manifest)
}

pub fn read_ensemble(path: &Path) -> Result<SetEnsemble> {
    let manifest: EnsembleManifest = read_json(&sidecar_path(path))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported ensemble format version {}", manifest.format_version)));
    }
    let bytes = fs::read(path)?;
    let dim = manifest.ground.dim();
    let mut at = 0usize;
    let mut members = Vec::with_capacity(manifest.members);
    for (i, (&size, &delta)) in manifest.sizes.iter().zip(&manifest.inner_deltas).enumerate() {
        let len = bytes
            .get(at..at + 8)
            .map(|b| u64::from_le_bytes(b.try_into().expect("8 bytes")) as usize)
            .ok_or_else(|| Error::Format(format!("truncated ensemble at member {i}")))?;
        if len != size {
            return Err(Error::Format(format!("member {i} has {len} points, manifest says {size}")));
        }
        at += 8;
        let body = bytes
            .get(at..at + len * dim * 8)
            .ok_or_else(|| Error::Format(format!("truncated ensemble at member {i}")))?;
        at += len * dim * 8;
        members.push(FiniteSet::from_canonical(manifest.ground, read_f64s(body), delta)?);
    }
    if at != bytes.len() || members.len() != manifest.members {
        return Err(Error::Format("ensemble body does not match its manifest".into()));
    }
    SetEnsemble::from_members(members, manifest.outer_delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chaos::{run_orbit, SelectionPolicy};
    use crate::presets;
    use crate::spaces::SpacePoint;

    #[test]
    fn orbit_dump_layout() {
        let dir = tempfile::tempdir().unwrap();
        let ifs = presets::circle_rotation(1.0);
        let x0 = SpacePoint::new(Space::Circle, vec![1.0, 0.0]).unwrap();
        let o = run_orbit(&ifs, &x0, &SelectionPolicy::uniform(2, 0.5).unwrap(), 10, 4).unwrap();
        let path = dir.path().join("orbit.f64");
        write_orbit(&path, &o, &ifs).unwrap();
        assert_eq!(fs::read(&path).unwrap().len(), 11 * 2 * 8);
        let (meta, coords) = read_points(&path).unwrap();
        assert_eq!(coords, o.coords);
        assert_eq!(meta.seed, Some(4));
        assert_eq!(meta.ifs_hash.as_deref(), Some(ifs.content_hash().as_str()));
        assert_eq!(read_sigmas(&dir.path().join("orbit.sigma")).unwrap(), o.sigmas);
        let mut csv = Vec::new();
        write_orbit_csv(&mut csv, &o).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 12);
    }

    #[test]
    fn set_dump_reloads() {
        let dir = tempfile::tempdir().unwrap();
        let set = presets::projective_line_net(50);
        let path = dir.path().join("ref.f64");
        write_set(&path, &set).unwrap();
        assert_eq!(read_set(&path, None).unwrap(), set);
    }

    #[test]
    fn truncated_dump_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ref.f64");
        write_set(&path, &presets::circle_net(8)).unwrap();
        fs::write(&path, [0u8; 24]).unwrap();
        assert!(matches!(read_points(&path), Err(Error::Format(_))));
        fs::remove_file(sidecar_path(&path)).unwrap();
        assert!(matches!(read_points(&path), Err(Error::Format(_))));
    }
}
