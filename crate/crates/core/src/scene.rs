//! Scene files: one TOML document describing a system, its start data,
//! selection policy, budgets, reference set and rendering.
//!
//! Loading happens in three stages with distinct errors: TOML syntax
//! ([`Error::Parse`]), the `version` key ([`Error::Version`]) and field
//! validation ([`Error::Validation`], one `path: reason` entry per problem).
//! The grammar is documented in `scenes/FORMAT.md`.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::chaos::SelectionPolicy;
use crate::deterministic::{deterministic_attractor, AttractorApprox, DEFAULT_WINDOW};
use crate::error::{usage, Error, Result};
use crate::ifs::{FiniteSet, IfsSpec, MapSpec};
use crate::presets;
use crate::render::{Chart, RenderSpec};
use crate::spaces::{Space, SpacePoint};
use crate::superfractal::{lifted_deterministic, LiftedParams, SetEnsemble, DEFAULT_INNER_CAP};
use crate::verify::{ConvergenceParams, UpperLimitParams};

pub const SCENE_VERSION: i64 = 1;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScene {
    version: toml::Value,
    label: String,
    space: String,
    dim: Option<usize>,
    x0: Option<Vec<f64>>,
    b0: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    maps: Vec<RawMap>,
    #[serde(default)]
    sub_ifs: Vec<RawSub>,
    s0: Option<Vec<Vec<f64>>>,
    policy: Option<RawPolicy>,
    #[serde(default)]
    budgets: RawBudgets,
    reference: Option<RawReference>,
    render: Option<RawRender>,
    output: Option<RawOutput>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMap {
    kind: String,
    matrix: Option<Vec<f64>>,
    offset: Option<Vec<f64>>,
    alpha: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSub {
    label: Option<String>,
    maps: Vec<RawMap>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPolicy {
    kind: String,
    floor_p: f64,
    matrix: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBudgets {
    n: Option<usize>,
    tail: Option<usize>,
    k_ladder: Option<Vec<usize>>,
    seeds: Option<usize>,
    first_seed: Option<u64>,
    pass_threshold: Option<usize>,
    epsilon: Option<f64>,
    tol: Option<f64>,
    dedup_delta: Option<f64>,
    set_delta: Option<f64>,
    max_iter: Option<usize>,
    window: Option<usize>,
    upper_k: Option<usize>,
    upper_k2: Option<usize>,
    upper_k_max: Option<usize>,
    cover_epsilon: Option<f64>,
    cover_tol: Option<f64>,
    net_delta: Option<f64>,
    m_cap: Option<usize>,
    ule_n: Option<usize>,
    ule_tail_k: Option<usize>,
    floor_window: Option<usize>,
    inner_delta: Option<f64>,
    outer_delta: Option<f64>,
    inner_cap: Option<usize>,
    depth: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawReference {
    kind: String,
    name: Option<String>,
    points: Option<usize>,
    tol: Option<f64>,
    path: Option<PathBuf>,
    depth: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRender {
    width: usize,
    height: usize,
    viewport: [f64; 4],
    chart: Option<String>,
    radius: Option<u32>,
    background: Option<u8>,
    foreground: Option<u8>,
    skip: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: PathBuf,
}

/// The system a scene iterates.
#[derive(Debug, Clone)]
pub enum System {
    /// An IFS on a ground space.
    Ground {
        ifs: IfsSpec,
        x0: SpacePoint,
        /// Start set of the deterministic algorithm, dedup'd at `set_delta`.
        b0: FiniteSet,
    },
    /// An IFS on sets: each sub-IFS acts by its Hutchinson map.
    Lifted {
        subs: Vec<IfsSpec>,
        /// Start set, dedup'd at `inner_delta`.
        s0: FiniteSet,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum PolicySpec {
    UniformIid {
        floor_p: f64,
    },
    Markov {
        floor_p: f64,
        matrix: Vec<f64>,
    },
    /// The adversary steers away from the scene's reference set.
    AdversarialFloor {
        floor_p: f64,
    },
}

impl PolicySpec {
    pub fn floor_p(&self) -> f64 {
        match *self {
            PolicySpec::UniformIid { floor_p }
            | PolicySpec::Markov { floor_p, .. }
            | PolicySpec::AdversarialFloor { floor_p } => floor_p,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReferenceSpec {
    /// A named closed-form net, see [`presets::analytic_reference`].
    Analytic { name: String, points: usize },
    /// The deterministic algorithm from `b0` at tolerance `tol`.
    Deterministic { tol: f64 },
    /// A point dump written earlier, resolved against the scene directory.
    File { path: PathBuf },
    /// Lifted deterministic iteration of depth `depth` from `{s0}`.
    LiftedDeterministic { depth: usize },
}

/// Run budgets with defaults filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct Budgets {
    pub n: usize,
    pub tail: usize,
    pub k_ladder: Vec<usize>,
    pub seeds: usize,
    pub first_seed: u64,
    pub pass_threshold: usize,
    pub epsilon: f64,
    pub tol: f64,
    /// Dedup resolution of orbit tails.
    pub dedup_delta: f64,
    /// Dedup resolution of deterministic iterates.
    pub set_delta: f64,
    pub max_iter: usize,
    pub window: usize,
    /// Upper-limit truncations `K = upper_k` and `K = upper_k2`, both up to
    /// `upper_k_max`.
    pub upper_k: usize,
    pub upper_k2: usize,
    pub upper_k_max: usize,
    pub cover_epsilon: f64,
    /// Tolerance of deterministic references used for cover bounds.
    pub cover_tol: f64,
    pub net_delta: f64,
    pub m_cap: usize,
    /// Orbit length and tail start for the upper-limit comparison.
    pub ule_n: usize,
    pub ule_tail_k: usize,
    pub floor_window: usize,
    pub inner_delta: f64,
    pub outer_delta: f64,
    pub inner_cap: usize,
    pub depth: usize,
}

/// A validated scene.
#[derive(Debug, Clone)]
pub struct Scene {
    pub label: String,
    pub space: Space,
    pub system: System,
    pub policy: PolicySpec,
    pub budgets: Budgets,
    pub reference: ReferenceSpec,
    pub render: Option<RenderSpec>,
    /// Orbit points skipped before rendering an orbit dump.
    pub render_skip: usize,
    pub output_dir: PathBuf,
}

/// Collects `path: reason` problems.
#[derive(Default)]
struct Problems(Vec<String>);

impl Problems {
    fn add(&mut self, path: impl AsRef<str>, reason: impl AsRef<str>) {
        self.0.push(format!("{}: {}", path.as_ref(), reason.as_ref()));
    }

    fn check(&mut self, ok: bool, path: &str, reason: &str) {
        if !ok {
            self.add(path, reason);
        }
    }
}

fn parse_space(raw: &RawScene, p: &mut Problems) -> Option<Space> {
    match raw.space.as_str() {
        "euclidean" => match raw.dim {
            Some(d) if d >= 1 => Some(Space::euclidean(d)),
            Some(_) => {
                p.add("dim", "must be at least 1");
                None
            }
            None => {
                p.add("dim", "required for euclidean scenes");
                None
            }
        },
        "circle" | "projective2" => {
            let space = if raw.space == "circle" { Space::Circle } else { Space::Projective2 };
            if let Some(d) = raw.dim {
                if d != space.dim() {
                    p.add("dim", format!("{} points have {} coordinates, not {d}", raw.space, space.dim()));
                }
            }
            Some(space)
        }
        other => {
            p.add("space", format!("unknown space {other:?}; expected euclidean, circle or projective2"));
            None
        }
    }
}

fn parse_map(raw: &RawMap, space: Space, path: &str, p: &mut Problems) -> Option<MapSpec> {
    let need = |v: &Option<Vec<f64>>, field: &str, p: &mut Problems| -> Option<Vec<f64>> {
        if v.is_none() {
            p.add(format!("{path}.{field}"), format!("required for {} maps", raw.kind));
        }
        v.clone()
    };
    let map = match raw.kind.as_str() {
        "identity" => MapSpec::Identity,
        "affine" => {
            MapSpec::Affine { matrix: need(&raw.matrix, "matrix", p)?, offset: need(&raw.offset, "offset", p)? }
        }
        "rotation2" => match raw.alpha {
            Some(alpha) => MapSpec::Rotation2 { alpha },
            None => {
                p.add(format!("{path}.alpha"), "required for rotation2 maps");
                return None;
            }
        },
        "projective3x3" => {
            let m = need(&raw.matrix, "matrix", p)?;
            match <[f64; 9]>::try_from(m.as_slice()) {
                Ok(matrix) => MapSpec::Projective3x3 { matrix },
                Err(_) => {
                    p.add(format!("{path}.matrix"), format!("needs 9 entries, got {}", m.len()));
                    return None;
                }
            }
        }
        other => {
            p.add(format!("{path}.kind"), format!("unknown map kind {other:?}"));
            return None;
        }
    };
    if let Err(e) = map.check(space) {
        p.add(path, e.to_string());
        return None;
    }
    Some(map)
}

fn parse_maps(raw: &[RawMap], space: Space, path: &str, label: &str, p: &mut Problems) -> Option<IfsSpec> {
    if raw.is_empty() {
        p.add(path, "an IFS needs at least one map");
        return None;
    }
    let maps: Vec<Option<MapSpec>> =
        raw.iter().enumerate().map(|(i, m)| parse_map(m, space, &format!("{path}[{i}]"), p)).collect();
    let maps: Option<Vec<MapSpec>> = maps.into_iter().collect();
    match IfsSpec::new(space, maps?, label) {
        Ok(ifs) => Some(ifs),
        Err(e) => {
            p.add(path, e.to_string());
            None
        }
    }
}

fn parse_points(raw: &[Vec<f64>], space: Space, delta: f64, path: &str, p: &mut Problems) -> Option<FiniteSet> {
    if raw.is_empty() {
        p.add(path, "must hold at least one point");
        return None;
    }
    match FiniteSet::new(space, raw, delta) {
        Ok(s) => Some(s),
        Err(e) => {
            p.add(path, e.to_string());
            None
        }
    }
}

fn budgets(raw: &RawBudgets, lifted: bool, p: &mut Problems) -> Budgets {
    let n = raw.n.unwrap_or(if lifted { 10_000 } else { 100_000 });
    let tail = raw.tail.unwrap_or(n / 2);
    let seeds = raw.seeds.unwrap_or(20);
    let epsilon = raw.epsilon.unwrap_or(0.01);
    let tol = raw.tol.unwrap_or(1e-3);
    let cover_epsilon = raw.cover_epsilon.unwrap_or(0.05);
    let upper_k = raw.upper_k.unwrap_or(8);
    let upper_k2 = raw.upper_k2.unwrap_or(upper_k + 2);
    let default_ladder = {
        let mut v = vec![0, n / 1000, n / 100, n / 10, (n + 1).saturating_sub(tail)];
        v.sort_unstable();
        v.dedup();
        v
    };
    let b = Budgets {
        n,
        tail,
        k_ladder: raw.k_ladder.clone().unwrap_or(default_ladder),
        seeds,
        first_seed: raw.first_seed.unwrap_or(0),
        pass_threshold: raw.pass_threshold.unwrap_or((seeds * 19).div_ceil(20)),
        epsilon,
        tol,
        dedup_delta: raw.dedup_delta.unwrap_or(epsilon / 8.0),
        set_delta: raw.set_delta.unwrap_or(tol / 4.0),
        max_iter: raw.max_iter.unwrap_or(1000),
        window: raw.window.unwrap_or(DEFAULT_WINDOW),
        upper_k,
        upper_k2,
        upper_k_max: raw.upper_k_max.unwrap_or(upper_k2 + 4),
        cover_epsilon,
        cover_tol: raw.cover_tol.unwrap_or(cover_epsilon / 5.0),
        net_delta: raw.net_delta.unwrap_or(cover_epsilon / 5.0),
        m_cap: raw.m_cap.unwrap_or(10_000),
        ule_n: raw.ule_n.unwrap_or(n),
        ule_tail_k: raw.ule_tail_k.unwrap_or(n / 100),
        floor_window: raw.floor_window.unwrap_or(2),
        inner_delta: raw.inner_delta.unwrap_or(2e-3),
        outer_delta: raw.outer_delta.unwrap_or(0.01),
        inner_cap: raw.inner_cap.unwrap_or(DEFAULT_INNER_CAP),
        depth: raw.depth.unwrap_or(12),
    };
    for (v, name) in [
        (b.n, "n"),
        (b.tail, "tail"),
        (b.seeds, "seeds"),
        (b.pass_threshold, "pass_threshold"),
        (b.max_iter, "max_iter"),
        (b.window, "window"),
        (b.m_cap, "m_cap"),
        (b.ule_n, "ule_n"),
        (b.inner_cap, "inner_cap"),
    ] {
        p.check(v >= 1, &format!("budgets.{name}"), "must be at least 1");
    }
    for (v, name) in [
        (b.epsilon, "epsilon"),
        (b.tol, "tol"),
        (b.cover_epsilon, "cover_epsilon"),
        (b.cover_tol, "cover_tol"),
        (b.net_delta, "net_delta"),
    ] {
        p.check(v > 0.0 && v.is_finite(), &format!("budgets.{name}"), "must be positive");
    }
    for (v, name) in [
        (b.dedup_delta, "dedup_delta"),
        (b.set_delta, "set_delta"),
        (b.inner_delta, "inner_delta"),
        (b.outer_delta, "outer_delta"),
    ] {
        p.check(v >= 0.0 && v.is_finite(), &format!("budgets.{name}"), "must be finite and >= 0");
    }
    p.check(b.pass_threshold <= b.seeds, "budgets.pass_threshold", "cannot exceed seeds");
    p.check(
        !b.k_ladder.is_empty() && b.k_ladder.windows(2).all(|w| w[0] < w[1]),
        "budgets.k_ladder",
        "must be nonempty and strictly increasing",
    );
    if let Some(&last) = b.k_ladder.last() {
        p.check(last + b.tail <= b.n + 1, "budgets.k_ladder", "last K plus tail must not exceed n + 1");
    }
    p.check(b.net_delta < b.cover_epsilon / 4.0, "budgets.net_delta", "must be below cover_epsilon / 4");
    p.check(
        b.upper_k < b.upper_k2 && b.upper_k2 <= b.upper_k_max,
        "budgets.upper_k",
        "need upper_k < upper_k2 <= upper_k_max",
    );
    p.check(b.ule_tail_k <= b.ule_n, "budgets.ule_tail_k", "must not exceed ule_n");
    p.check(b.floor_window <= 2, "budgets.floor_window", "history windows above 2 are not supported");
    b
}

fn policy(raw: Option<&RawPolicy>, n_maps: usize, p: &mut Problems) -> Option<PolicySpec> {
    let Some(raw) = raw else {
        return Some(PolicySpec::UniformIid { floor_p: 1.0 / n_maps as f64 });
    };
    let max = 1.0 / n_maps as f64;
    if !(raw.floor_p > 0.0 && raw.floor_p <= max) {
        p.add(
            "policy.floor_p",
            format!("the floor must lie in (0, 1/N] = (0, {max}] for N = {n_maps} maps, got {}", raw.floor_p),
        );
        return None;
    }
    if raw.matrix.is_some() && raw.kind != "markov" {
        p.add("policy.matrix", "only markov policies take a matrix");
    }
    let spec = match raw.kind.as_str() {
        "uniform_iid" => PolicySpec::UniformIid { floor_p: raw.floor_p },
        "adversarial_floor" => PolicySpec::AdversarialFloor { floor_p: raw.floor_p },
        "markov" => {
            let Some(matrix) = raw.matrix.clone() else {
                p.add("policy.matrix", "required for markov policies");
                return None;
            };
            if let Err(e) = SelectionPolicy::markov(matrix.clone(), n_maps, raw.floor_p) {
                p.add("policy.matrix", e.to_string());
                return None;
            }
            PolicySpec::Markov { floor_p: raw.floor_p, matrix }
        }
        other => {
            p.add(
                "policy.kind",
                format!("unknown policy {other:?}; expected uniform_iid, markov or adversarial_floor"),
            );
            return None;
        }
    };
    Some(spec)
}

fn reference(
    raw: Option<&RawReference>,
    base: &Path,
    lifted: bool,
    default_tol: f64,
    p: &mut Problems,
) -> Option<ReferenceSpec> {
    let Some(raw) = raw else {
        p.add("reference", "a reference section is required");
        return None;
    };
    let spec = match raw.kind.as_str() {
        "analytic" => match (&raw.name, raw.points) {
            (Some(name), points) => ReferenceSpec::Analytic { name: name.clone(), points: points.unwrap_or(1000) },
            (None, _) => {
                p.add("reference.name", "required for analytic references");
                return None;
            }
        },
        "deterministic" if lifted => ReferenceSpec::LiftedDeterministic { depth: raw.depth.unwrap_or(12) },
        "deterministic" => {
            let tol = raw.tol.unwrap_or(default_tol);
            if !(tol > 0.0) {
                p.add("reference.tol", "must be positive");
                return None;
            }
            ReferenceSpec::Deterministic { tol }
        }
        "file" => {
            let Some(path) = &raw.path else {
                p.add("reference.path", "required for file references");
                return None;
            };
            let path = base.join(path);
            if !path.exists() {
                p.add("reference.path", format!("{} does not exist", path.display()));
                return None;
            }
            ReferenceSpec::File { path }
        }
        other => {
            p.add(
                "reference.kind",
                format!("unknown reference kind {other:?}; expected analytic, deterministic or file"),
            );
            return None;
        }
    };
    if lifted && !matches!(spec, ReferenceSpec::LiftedDeterministic { .. }) {
        p.add("reference.kind", "superfractal scenes use deterministic references");
        return None;
    }
    Some(spec)
}

fn render(raw: Option<&RawRender>, space: Space, p: &mut Problems) -> Option<RenderSpec> {
    let raw = raw?;
    let chart = match raw.chart.as_deref() {
        None => match space {
            Space::Euclidean { dim: 1 } => Chart::Line,
            Space::Projective2 => Chart::Z,
            _ => Chart::Plane,
        },
        Some("plane") => Chart::Plane,
        Some("angle") => Chart::Angle,
        Some("line") => Chart::Line,
        Some("x") => Chart::X,
        Some("y") => Chart::Y,
        Some("z") => Chart::Z,
        Some(other) => {
            p.add("render.chart", format!("unknown chart {other:?}"));
            return None;
        }
    };
    let spec = RenderSpec {
        width: raw.width,
        height: raw.height,
        viewport: raw.viewport,
        chart,
        radius: raw.radius.unwrap_or(0),
        background: raw.background.unwrap_or(0),
        foreground: raw.foreground.unwrap_or(255),
    };
    if let Err(e) = spec.check(space) {
        p.add("render", e.to_string());
        return None;
    }
    Some(spec)
}

/// Parses and validates scene text. Relative paths resolve against `base`.
pub fn parse_scene(text: &str, base: &Path) -> Result<Scene> {
    let value: toml::Table =
        toml::from_str(text).map_err(|e| Error::Parse(e.message().to_string() + &location(&e, text)))?;
    match value.get("version") {
        None => return Err(Error::Validation(vec!["version: required".into()])),
        Some(toml::Value::Integer(SCENE_VERSION)) => {}
        Some(toml::Value::Integer(v)) => return Err(Error::Version(*v)),
        Some(other) => return Err(Error::Validation(vec![format!("version: must be an integer, got {other}")])),
    }
    let raw: RawScene = toml::Value::Table(value)
        .try_into()
        .map_err(|e: toml::de::Error| Error::Validation(vec![e.message().to_string()]))?;
    let _ = &raw.version;
    let mut p = Problems::default();
    if raw.label.is_empty() {
        p.add("label", "must not be empty");
    }
    let lifted = !raw.sub_ifs.is_empty();
    if lifted && !raw.maps.is_empty() {
        p.add("maps", "give either maps or sub_ifs, not both");
    }
    let space = parse_space(&raw, &mut p);
    let b = budgets(&raw.budgets, lifted, &mut p);
    let mut system = None;
    let mut n_maps = 1;
    if let Some(space) = space {
        if lifted {
            let subs: Vec<Option<IfsSpec>> = raw
                .sub_ifs
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    let label = s.label.clone().unwrap_or_else(|| format!("sub{i}"));
                    parse_maps(&s.maps, space, &format!("sub_ifs[{i}].maps"), &label, &mut p)
                })
                .collect();
            n_maps = subs.len();
            let s0 = match &raw.s0 {
                Some(s0) => parse_points(s0, space, b.inner_delta, "s0", &mut p),
                None => {
                    p.add("s0", "required for superfractal scenes");
                    None
                }
            };
            if let (Some(subs), Some(s0)) = (subs.into_iter().collect::<Option<Vec<_>>>(), s0) {
                system = Some(System::Lifted { subs, s0 });
            }
        } else {
            let ifs = parse_maps(&raw.maps, space, "maps", &raw.label, &mut p);
            n_maps = raw.maps.len().max(1);
            let x0 = match &raw.x0 {
                Some(x) => match SpacePoint::new(space, x.clone()) {
                    Ok(x) => Some(x),
                    Err(e) => {
                        p.add("x0", e.to_string());
                        None
                    }
                },
                None => {
                    p.add("x0", "required");
                    None
                }
            };
            let b0 = match (&raw.b0, &x0) {
                (Some(b0), _) => parse_points(b0, space, b.set_delta, "b0", &mut p),
                (None, Some(x0)) => FiniteSet::singleton(x0, b.set_delta).ok(),
                (None, None) => None,
            };
            if let (Some(ifs), Some(x0), Some(b0)) = (ifs, x0, b0) {
                system = Some(System::Ground { ifs, x0, b0 });
            }
        }
    }
    let policy = policy(raw.policy.as_ref(), n_maps, &mut p);
    if lifted && matches!(policy, Some(PolicySpec::AdversarialFloor { .. })) {
        p.add("policy.kind", "adversarial_floor is not available for superfractal scenes");
    }
    let reference = reference(raw.reference.as_ref(), base, lifted, b.tol, &mut p);
    let render_spec = space.and_then(|s| render(raw.render.as_ref(), s, &mut p));
    if !p.0.is_empty() {
        return Err(Error::Validation(p.0));
    }
    let output_dir = match &raw.output {
        Some(o) => base.join(&o.dir),
        None => PathBuf::from("out").join(&raw.label),
    };
    Ok(Scene {
        label: raw.label,
        space: space.expect("validated"),
        system: system.expect("validated"),
        policy: policy.expect("validated"),
        budgets: b,
        reference: reference.expect("validated"),
        render: render_spec,
        render_skip: raw.render.as_ref().and_then(|r| r.skip).unwrap_or(0),
        output_dir,
    })
}

fn location(e: &toml::de::Error, text: &str) -> String {
    match e.span() {
        Some(span) => {
            let line = text[..span.start.min(text.len())].matches('\n').count() + 1;
            format!(" (line {line})")
        }
        None => String::new(),
    }
}

/// Loads a scene file. Relative paths inside it resolve against its
/// directory.
pub fn load_scene(path: &Path) -> Result<Scene> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::MissingArtifact(format!("scene {}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_scene(&text, base)
}

impl Scene {
    pub fn ifs(&self) -> Result<&IfsSpec> {
        match &self.system {
            System::Ground { ifs, .. } => Ok(ifs),
            System::Lifted { .. } => usage(format!("scene {} is a superfractal scene", self.label)),
        }
    }

    pub fn x0(&self) -> Result<&SpacePoint> {
        match &self.system {
            System::Ground { x0, .. } => Ok(x0),
            System::Lifted { .. } => usage(format!("scene {} is a superfractal scene", self.label)),
        }
    }

    pub fn b0(&self) -> Result<&FiniteSet> {
        match &self.system {
            System::Ground { b0, .. } => Ok(b0),
            System::Lifted { .. } => usage(format!("scene {} is a superfractal scene", self.label)),
        }
    }

    pub fn is_lifted(&self) -> bool {
        matches!(self.system, System::Lifted { .. })
    }

    pub fn n_maps(&self) -> usize {
        match &self.system {
            System::Ground { ifs, .. } => ifs.len(),
            System::Lifted { subs, .. } => subs.len(),
        }
    }

    /// The selection policy; the adversary's target is `reference`.
    pub fn selection_policy(&self, reference: Option<&FiniteSet>) -> Result<SelectionPolicy> {
        let n = self.n_maps();
        match &self.policy {
            PolicySpec::UniformIid { floor_p } => SelectionPolicy::uniform(n, *floor_p),
            PolicySpec::Markov { floor_p, matrix } => SelectionPolicy::markov(matrix.clone(), n, *floor_p),
            PolicySpec::AdversarialFloor { floor_p } => match reference {
                Some(t) => SelectionPolicy::adversarial(n, *floor_p, t.clone()),
                None => usage("the adversarial policy needs the reference set as its target"),
            },
        }
    }

    pub fn needs_reference_for_policy(&self) -> bool {
        matches!(self.policy, PolicySpec::AdversarialFloor { .. })
    }

    /// Tolerance of `ifs det`: the reference tolerance for deterministic
    /// references, the budget `tol` otherwise.
    pub fn det_tol(&self) -> f64 {
        match self.reference {
            ReferenceSpec::Deterministic { tol } => tol,
            _ => self.budgets.tol,
        }
    }

    /// Runs the deterministic algorithm from `b0` (dedup'd at `set_delta`)
    /// at [`Scene::det_tol`].
    pub fn deterministic(&self) -> Result<AttractorApprox> {
        let b = &self.budgets;
        deterministic_attractor(self.ifs()?, self.b0()?, self.det_tol(), b.max_iter, b.window)
    }

    /// Builds the ground reference set. Deterministic references are
    /// recomputed from scratch.
    pub fn compute_reference(&self) -> Result<FiniteSet> {
        match &self.reference {
            ReferenceSpec::Deterministic { .. } => {
                let approx = self.deterministic()?;
                if !approx.converged {
                    return Err(Error::Domain(format!(
                        "deterministic reference did not settle within {} steps",
                        approx.iters_used
                    )));
                }
                Ok(approx.points)
            }
            _ => self.fixed_reference(),
        }
    }

    /// The reference used for cover bounds: deterministic references are
    /// recomputed at `cover_tol`, others are used as they are.
    pub fn cover_reference(&self) -> Result<FiniteSet> {
        match &self.reference {
            ReferenceSpec::Deterministic { .. } => {
                let b = &self.budgets;
                let b0 = self.b0()?.with_delta(b.cover_tol / 4.0)?;
                let approx = deterministic_attractor(self.ifs()?, &b0, b.cover_tol, b.max_iter, b.window)?;
                if !approx.converged {
                    return Err(Error::Domain(format!("cover reference did not settle within {} steps", b.max_iter)));
                }
                Ok(approx.points)
            }
            _ => self.fixed_reference(),
        }
    }

    /// Analytic and file references.
    pub fn fixed_reference(&self) -> Result<FiniteSet> {
        match &self.reference {
            ReferenceSpec::Analytic { name, points } => presets::analytic_reference(name, *points, self.space),
            ReferenceSpec::File { path } => crate::io::read_set(path, None),
            ReferenceSpec::Deterministic { .. } => usage("deterministic references are computed, not fixed"),
            ReferenceSpec::LiftedDeterministic { .. } => {
                usage("superfractal references are ensembles; use the superfractal module")
            }
        }
    }

    pub fn convergence_params(&self) -> ConvergenceParams {
        let b = &self.budgets;
        ConvergenceParams {
            epsilon: b.epsilon,
            n: b.n,
            tail: b.tail,
            k_ladder: b.k_ladder.clone(),
            seeds: b.seeds,
            first_seed: b.first_seed,
            dedup_delta: b.dedup_delta,
            pass_threshold: b.pass_threshold,
        }
    }

    /// Lifted system and its deterministic reference ensemble.
    pub fn lifted(&self) -> Result<(&[IfsSpec], &FiniteSet)> {
        match &self.system {
            System::Lifted { subs, s0 } => Ok((subs, s0)),
            System::Ground { .. } => usage(format!("scene {} is not a superfractal scene", self.label)),
        }
    }

    pub fn lifted_reference(&self) -> Result<SetEnsemble> {
        let (subs, s0) = self.lifted()?;
        let depth = match self.reference {
            ReferenceSpec::LiftedDeterministic { depth } => depth,
            _ => return usage("superfractal scenes need a deterministic reference"),
        };
        lifted_deterministic(subs, s0, depth, self.budgets.outer_delta, self.budgets.inner_cap)
    }

    pub fn lifted_params(&self) -> LiftedParams {
        let b = &self.budgets;
        LiftedParams {
            epsilon: b.epsilon,
            n: b.n,
            tail: b.tail,
            k_ladder: b.k_ladder.clone(),
            seeds: b.seeds,
            first_seed: b.first_seed,
            pass_threshold: b.pass_threshold,
            outer_delta: b.outer_delta,
            inner_cap: b.inner_cap,
        }
    }

    pub fn upper_limit_params(&self, seed: u64) -> UpperLimitParams {
        let b = &self.budgets;
        UpperLimitParams {
            n: b.ule_n,
            tail_k: b.ule_tail_k,
            ul_k: b.upper_k,
            ul_k_max: b.upper_k_max,
            dedup_delta: b.set_delta,
            seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CIRCLE: &str = r#"
version = 1
label = "circle"
space = "circle"
x0 = [1.0, 0.0]

[[maps]]
kind = "identity"

[[maps]]
kind = "rotation2"
alpha = 1.0

[policy]
kind = "uniform_iid"
floor_p = 0.5

[budgets]
n = 1000
epsilon = 0.02

[reference]
kind = "analytic"
name = "circle-net"
points = 1000

[render]
width = 64
height = 64
viewport = [-1.1, 1.1, -1.1, 1.1]
"#;

    fn parse(text: &str) -> Result<Scene> {
        parse_scene(text, Path::new("."))
    }

    fn problems(text: &str) -> Vec<String> {
        match parse(text) {
            Err(Error::Validation(v)) => v,
            other => panic!("expected validation errors, got {other:?}"),
        }
    }

    #[test]
    fn circle_scene_loads() {
        let s = parse(CIRCLE).unwrap();
        assert_eq!(s.space, Space::Circle);
        assert_eq!(s.n_maps(), 2);
        assert_eq!(s.budgets.tail, 500);
        assert_eq!(s.budgets.pass_threshold, 19);
        assert_eq!(s.render.as_ref().unwrap().chart, Chart::Plane);
        assert_eq!(s.compute_reference().unwrap().len(), 1000);
    }

    #[test]
    fn floor_above_one_over_n_is_rejected() {
        let v = problems(&CIRCLE.replace("floor_p = 0.5", "floor_p = 0.6"));
        assert!(v.iter().any(|m| m.starts_with("policy.floor_p") && m.contains("1/N")), "{v:?}");
    }

    #[test]
    fn singular_projective_map_is_rejected() {
        let text = r#"
version = 1
label = "bad"
space = "projective2"
x0 = [1.0, 1.0, 1.0]
[[maps]]
kind = "projective3x3"
matrix = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]
[reference]
kind = "analytic"
name = "projective-line-x0"
"#;
        let v = problems(text);
        assert!(v.iter().any(|m| m.starts_with("maps[0]") && m.contains("singular")), "{v:?}");
    }

    #[test]
    fn error_classes_are_distinct() {
        assert!(matches!(parse("version = [1"), Err(Error::Parse(_))));
        assert!(matches!(parse(&CIRCLE.replace("version = 1", "version = 7")), Err(Error::Version(7))));
        assert!(matches!(parse(&CIRCLE.replace("version = 1\n", "")), Err(Error::Validation(_))));
        let v = problems(&CIRCLE.replace("[budgets]", "[budgets]\nbogus = 3"));
        assert!(v[0].contains("bogus"), "{v:?}");
    }

    #[test]
    fn several_problems_are_reported_together() {
        let text = CIRCLE
            .replace("n = 1000", "n = 0")
            .replace("alpha = 1.0", "")
            .replace("points = 1000", "points = 1000\ntol = -1.0");
        let v = problems(&text);
        assert!(v.iter().any(|m| m.starts_with("budgets.n")), "{v:?}");
        assert!(v.iter().any(|m| m.starts_with("maps[1].alpha")), "{v:?}");
    }

    #[test]
    fn missing_reference_file_is_a_validation_error() {
        let text = CIRCLE.replace(
            "kind = \"analytic\"\nname = \"circle-net\"\npoints = 1000",
            "kind = \"file\"\npath = \"nope.f64\"",
        );
        let v = problems(&text);
        assert!(v.iter().any(|m| m.starts_with("reference.path")), "{v:?}");
    }

    #[test]
    fn adversarial_policy_targets_the_reference() {
        let s = parse(&CIRCLE.replace("uniform_iid", "adversarial_floor").replace("floor_p = 0.5", "floor_p = 0.25"))
            .unwrap();
        assert!(s.selection_policy(None).is_err());
        let r = s.compute_reference().unwrap();
        assert_eq!(s.selection_policy(Some(&r)).unwrap().id(), "adversarial_floor");
    }
}
