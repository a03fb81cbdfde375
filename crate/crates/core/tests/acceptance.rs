//! Acceptance suite over the shipped scenes. Prints one PASS/FAIL line per
//! criterion and fails if any criterion fails.
//!
//! Usage: `cargo test --test acceptance [-- AC-4 AC-7 ...]`.

use std::path::Path;
use std::time::Instant;

use ifs_core::chaos::{empirical_floor, run_orbit};
use ifs_core::deterministic::upper_limit;
use ifs_core::hausdorff::hausdorff_distance;
use ifs_core::render::render;
use ifs_core::scene::{load_scene, ReferenceSpec, Scene};
use ifs_core::spaces::distance;
use ifs_core::superfractal::{
    hh_distance, lifted_chaos_orbit, lifted_convergence_report, lifted_upper_limit, SetEnsemble,
};
use ifs_core::verify::{convergence_report, cover_bound, upper_limit_equality, ConvergenceReport};
use ifs_core::{io, FiniteSet, Mode, Space, SpacePoint};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

type Outcome = Result<String, String>;

const SCENES: [&str; 7] =
    ["sierpinski", "halving", "circle", "circle-adversarial", "circle-markov", "projective", "superfractal"];

fn scene(name: &str) -> Scene {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenes").join(format!("{name}.scene"));
    load_scene(&path).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// Ground reference of a scene, computed from scratch when deterministic.
fn reference(s: &Scene) -> FiniteSet {
    s.compute_reference().unwrap_or_else(|e| panic!("{}: {e}", s.label))
}

fn ground_report(s: &Scene) -> ConvergenceReport {
    let r = reference(s);
    let policy = s.selection_policy(Some(&r)).unwrap();
    convergence_report(&s.label, s.ifs().unwrap(), s.x0().unwrap(), &policy, &r, &s.convergence_params()).unwrap()
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn panel(r: &ConvergenceReport) -> String {
    let worst = r.tail_distance_curve.last().map_or(f64::NAN, |c| c.distance);
    format!("{} {}/{} seeds, worst final d_H {worst:.5}", r.scene, r.seeds_passed, r.seeds_total)
}

fn ac1() -> Outcome {
    let s = scene("sierpinski");
    let r = ground_report(&s);
    check(r.passed && r.seeds_passed >= 19, panel(&r))
}

fn ac2() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for name in ["circle", "circle-adversarial"] {
        let r = ground_report(&scene(name));
        let drift = r.per_seed.iter().map(|s| s.max_norm_drift).fold(0.0, f64::max);
        ok &= r.passed && r.seeds_passed >= 19 && drift <= 1e-9;
        lines.push(format!("{} ({}), max |norm - 1| {drift:.1e}", panel(&r), r.policy));
    }
    check(ok, lines.join("; "))
}

fn ac3() -> Outcome {
    let r = ground_report(&scene("projective"));
    // A seed passes when some tail is both inside the epsilon-dilation of the
    // line and covers its net.
    let both = r
        .per_seed
        .iter()
        .filter(|s| s.curve.iter().any(|c| c.containment < r.params.epsilon && c.covering < r.params.epsilon))
        .count();
    check(r.passed && both >= 19, format!("{}; containment and covering both below epsilon for {both}", panel(&r)))
}

fn ac4() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for name in SCENES {
        let s = scene(name);
        let b = &s.budgets;
        let (to_ref, stable) = if s.is_lifted() {
            let (subs, s0) = s.lifted().unwrap();
            let ul = |k| lifted_upper_limit(subs, s0, k, b.upper_k_max, b.outer_delta, b.inner_cap).unwrap();
            let (u1, u2) = (ul(b.upper_k), ul(b.upper_k2));
            let r = s.lifted_reference().unwrap();
            (hh_distance(&u1, &r).unwrap().value, hh_distance(&u1, &u2).unwrap().value)
        } else {
            let (ifs, b0) = (s.ifs().unwrap(), s.b0().unwrap());
            let u1 = upper_limit(ifs, b0, b.upper_k, b.upper_k_max).unwrap();
            let u2 = upper_limit(ifs, b0, b.upper_k2, b.upper_k_max).unwrap();
            let r = reference(&s);
            (
                hausdorff_distance(&u1, &r, Mode::Accelerated).unwrap().value,
                hausdorff_distance(&u1, &u2, Mode::Accelerated).unwrap().value,
            )
        };
        let tol = s.det_tol();
        ok &= to_ref < 2.0 * tol && stable < tol;
        lines.push(format!("{name} {to_ref:.2e}/{stable:.2e} (tol {tol})"));
    }
    check(ok, lines.join(", "))
}

fn ac5() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for name in ["sierpinski", "circle"] {
        let s = scene(name);
        let b = &s.budgets;
        let ifs = s.ifs().unwrap();
        let r = s.cover_reference().unwrap();
        let cert = cover_bound(ifs, &r, b.cover_epsilon, b.net_delta, b.m_cap).unwrap();
        let replayed = cert.replay(ifs, &r).unwrap();
        ok &= cert.complete && cert.failures.is_empty() && b.m_cap == 10_000 && replayed;
        // Sierpinski points are all reached within 40 steps.
        ok &= name != "sierpinski" || cert.samples.iter().all(|s| s.m <= 40);
        lines.push(format!(
            "{name} eps {}: {} samples, M {:?}, {} failures, replay {replayed}",
            b.cover_epsilon,
            cert.samples.len(),
            cert.big_m,
            cert.failures.len()
        ));
    }
    check(ok, lines.join("; "))
}

fn ac6() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for name in ["circle", "sierpinski"] {
        let s = scene(name);
        let policy = s.selection_policy(None).unwrap();
        let p = s.upper_limit_params(s.budgets.first_seed);
        let d = upper_limit_equality(s.ifs().unwrap(), s.x0().unwrap(), &policy, &p).unwrap();
        ok &= d < 0.05;
        lines.push(format!("{name} {d:.2e}"));
    }
    check(ok, lines.join(", "))
}

fn random_point(rng: &mut StdRng, space: Space) -> Vec<f64> {
    match space {
        Space::Circle => {
            let t = rng.random_range(0.0..std::f64::consts::TAU);
            vec![t.cos(), t.sin()]
        }
        Space::Projective2 => loop {
            let v: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            if v.iter().map(|c| c * c).sum::<f64>() > 1e-6 {
                break v;
            }
        },
        Space::Euclidean { dim } => (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
    }
}

fn random_set(rng: &mut StdRng, space: Space, n: usize) -> FiniteSet {
    // A random cluster so that pairs of sets differ in placement and spread.
    let center = random_point(rng, space);
    let spread = rng.random_range(0.05..1.0);
    let pts: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let p = random_point(rng, space);
            center.iter().zip(&p).map(|(c, x)| c + spread * x).collect()
        })
        .collect();
    FiniteSet::new(space, &pts, 0.0).unwrap()
}

const AC7_SPACES: [Space; 6] = [
    Space::Euclidean { dim: 1 },
    Space::Euclidean { dim: 2 },
    Space::Euclidean { dim: 3 },
    Space::Euclidean { dim: 5 },
    Space::Circle,
    Space::Projective2,
];

fn ac7() -> Outcome {
    let mut rng = StdRng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for i in 0..200 {
        let space = AC7_SPACES[i % AC7_SPACES.len()];
        // Log-uniform sizes up to 10^4; the first pairs use the maximum.
        let size = |rng: &mut StdRng| {
            if i < 6 {
                10_000
            } else {
                10f64.powf(rng.random_range(0.0..4.0)).round() as usize
            }
        };
        let (na, nb) = (size(&mut rng), size(&mut rng));
        let a = random_set(&mut rng, space, na);
        let b = random_set(&mut rng, space, nb);
        let o = hausdorff_distance(&a, &b, Mode::Oracle).unwrap().value;
        let x = hausdorff_distance(&a, &b, Mode::Accelerated).unwrap().value;
        worst = worst.max((o - x).abs());
    }
    let mut violations = 0usize;
    for &space in &AC7_SPACES {
        for _ in 0..10_000 {
            let [x, y, z] = [0; 3].map(|_| SpacePoint::new(space, random_point(&mut rng, space)).unwrap());
            let d = |a: &SpacePoint, b: &SpacePoint| distance(a, b).unwrap();
            let (xy, yz, xz) = (d(&x, &y), d(&y, &z), d(&x, &z));
            let bad = d(&x, &x) > 1e-9
                || (xy - d(&y, &x)).abs() > 1e-9
                || xz > xy + yz + 1e-9
                || xy < 0.0
                || (x != y && xy == 0.0);
            violations += bad as usize;
        }
    }
    check(
        worst <= 1e-9 && violations == 0,
        format!("200 pairs, max |oracle - accelerated| {worst:.1e}; {violations} axiom violations in 6 x 10^4 triples"),
    )
}

fn ac8() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for name in ["circle", "circle-markov", "circle-adversarial"] {
        let s = scene(name);
        let target = s.needs_reference_for_policy().then(|| reference(&s));
        let policy = s.selection_policy(target.as_ref()).unwrap();
        let orbit = run_orbit(s.ifs().unwrap(), s.x0().unwrap(), &policy, 100_000, s.budgets.first_seed).unwrap();
        let f = empirical_floor(&orbit, s.n_maps(), 2).unwrap();
        let untestable = f.untestable().count();
        ok &= f.passes && untestable == 0;
        lines.push(format!(
            "{} p {}: min rate {:.4} over {} classes",
            policy.id(),
            f.floor_p,
            f.min_rate,
            f.classes.len()
        ));
    }
    check(ok, lines.join("; "))
}

fn ac9() -> Outcome {
    let s = scene("superfractal");
    let (subs, s0) = s.lifted().unwrap();
    let policy = s.selection_policy(None).unwrap();
    let params = s.lifted_params();
    let reference = s.lifted_reference().unwrap();
    let r = lifted_convergence_report(&s.label, subs, s0, &policy, &reference, &params).unwrap();
    let worst = r.tail_distance_curve.last().map_or(f64::NAN, |c| c.distance);

    // Single-member ensembles: the lifted distance is the ground distance.
    let mut rng = StdRng::seed_from_u64(9);
    let mut mismatches = 0;
    for i in 0..200 {
        let space = AC7_SPACES[i % AC7_SPACES.len()];
        let a = random_set(&mut rng, space, 1 + i % 50);
        let b = random_set(&mut rng, space, 1 + (7 * i) % 50);
        let hh = hh_distance(&SetEnsemble::new(&a, 0.01).unwrap(), &SetEnsemble::new(&b, 0.01).unwrap()).unwrap();
        let dh = hausdorff_distance(&a, &b, Mode::Oracle).unwrap().value;
        mismatches += (hh.value != dh) as usize;
    }
    check(
        r.passed && r.seeds_passed >= 19 && mismatches == 0,
        format!(
            "{}/{} seeds, worst final hh {worst:.5} vs {} reference members; {mismatches} lifting mismatches in 200",
            r.seeds_passed, r.seeds_total, r.reference_members
        ),
    )
}

/// Runs `f` on a fresh pool of `threads` workers.
fn on_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

/// Orbit dump, image, and a two-seed report of a ground scene.
fn ground_artifacts(s: &Scene, dir: &Path) -> Vec<Vec<u8>> {
    let target = match s.reference {
        ReferenceSpec::Deterministic { .. } => {
            let r = reference(s);
            io::write_set(&dir.join("attractor.f64"), &r).unwrap();
            r
        }
        _ => s.fixed_reference().unwrap(),
    };
    let policy = s.selection_policy(Some(&target)).unwrap();
    let ifs = s.ifs().unwrap();
    let orbit = run_orbit(ifs, s.x0().unwrap(), &policy, s.budgets.n, 11).unwrap();
    io::write_orbit(&dir.join("orbit.f64"), &orbit, ifs).unwrap();
    let mut out: Vec<Vec<u8>> = ["attractor.f64", "orbit.f64", "orbit.f64.json", "orbit.sigma"]
        .iter()
        .filter_map(|f| std::fs::read(dir.join(f)).ok())
        .collect();
    if let Some(spec) = &s.render {
        let dim = s.space.dim();
        out.push(render(s.space, &orbit.coords[s.render_skip * dim..], spec).unwrap().0);
    }
    let mut params = s.convergence_params();
    params.seeds = 2;
    params.pass_threshold = 1;
    let r = convergence_report(&s.label, ifs, s.x0().unwrap(), &policy, &target, &params).unwrap();
    out.push(r.to_json().into_bytes());
    out
}

fn lifted_artifacts(s: &Scene, dir: &Path) -> Vec<Vec<u8>> {
    let (subs, s0) = s.lifted().unwrap();
    let b = &s.budgets;
    let policy = s.selection_policy(None).unwrap();
    let orbit = lifted_chaos_orbit(subs, s0, &policy, b.n, 11, b.inner_cap).unwrap();
    let tail = orbit.window(b.n + 1 - b.tail, b.tail, b.outer_delta).unwrap();
    let path = dir.join("tail.ens");
    io::write_ensemble(&path, &tail).unwrap();
    let mut params = s.lifted_params();
    params.seeds = 2;
    params.pass_threshold = 1;
    let reference = s.lifted_reference().unwrap();
    let r = lifted_convergence_report(&s.label, subs, s0, &policy, &reference, &params).unwrap();
    vec![std::fs::read(&path).unwrap(), std::fs::read(io::sidecar_path(&path)).unwrap(), r.to_json().into_bytes()]
}

fn ac10() -> Outcome {
    let mut differing = Vec::new();
    let mut compared = 0;
    for name in SCENES {
        let s = scene(name);
        let runs: Vec<Vec<Vec<u8>>> = [1, 3]
            .into_iter()
            .map(|threads| {
                let dir = tempfile::tempdir().unwrap();
                on_threads(threads, || {
                    if s.is_lifted() {
                        lifted_artifacts(&s, dir.path())
                    } else {
                        ground_artifacts(&s, dir.path())
                    }
                })
            })
            .collect();
        compared += runs[0].len();
        if runs[0] != runs[1] {
            differing.push(name);
        }
    }
    check(
        differing.is_empty(),
        format!("{compared} artifacts per run over {} scenes, 1 vs 3 threads; differing: {differing:?}", SCENES.len()),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        ("AC-1", ac1),
        ("AC-2", ac2),
        ("AC-3", ac3),
        ("AC-4", ac4),
        ("AC-5", ac5),
        ("AC-6", ac6),
        ("AC-7", ac7),
        ("AC-8", ac8),
        ("AC-9", ac9),
        ("AC-10", ac10),
    ];
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = Vec::new();
    for (id, f) in criteria {
        if !filters.is_empty() && !filters.iter().any(|x| x == id) {
            continue;
        }
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("{id} PASS ({secs:.1}s) {d}"),
            Err(d) => {
                println!("{id} FAIL ({secs:.1}s) {d}");
                failed.push(id);
            }
        }
    }
    if !failed.is_empty() {
        println!("acceptance: failed {failed:?}");
        std::process::exit(1);
    }
}
