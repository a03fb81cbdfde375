use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ifs_core::chaos::run_orbit;
use ifs_core::scene::{load_scene, ReferenceSpec, Scene};
use ifs_core::superfractal::{hh_distance, lifted_chaos_orbit, lifted_convergence_report};
use ifs_core::verify::{convergence_report, cover_bound};
use ifs_core::{hausdorff_distance, io, render as raster, Error, FiniteSet, Mode};
use serde_json::json;

use crate::{Failure, SceneArgs};

type Outcome = Result<(), Failure>;

fn open(args: &SceneArgs) -> Result<(Scene, PathBuf), Failure> {
    let scene = load_scene(&args.scene)?;
    let out = args.out.clone().unwrap_or_else(|| scene.output_dir.clone());
    fs::create_dir_all(&out)?;
    Ok((scene, out))
}

fn write_text(path: &Path, text: &str) -> Outcome {
    fs::write(path, text)?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<fs::File>, Failure> {
    Ok(BufWriter::new(fs::File::create(path)?))
}

/// The ground reference: deterministic ones come from `ifs det` output.
fn reference(scene: &Scene, out: &Path) -> Result<FiniteSet, Failure> {
    match scene.reference {
        ReferenceSpec::Deterministic { .. } => {
            let path = out.join("attractor.f64");
            if !path.exists() {
                return Err(Error::MissingArtifact(format!(
                    "{} not found; run `ifs det --scene {}` first",
                    path.display(),
                    scene.label
                ))
                .into());
            }
            Ok(io::read_set(&path, None)?)
        }
        _ => Ok(scene.fixed_reference()?),
    }
}

pub fn run(args: &SceneArgs) -> Outcome {
    let (scene, out) = open(args)?;
    let ifs = scene.ifs()?;
    let target = if scene.needs_reference_for_policy() { Some(reference(&scene, &out)?) } else { None };
    let policy = scene.selection_policy(target.as_ref())?;
    let seed = args.seed.unwrap_or(scene.budgets.first_seed);
    let orbit = run_orbit(ifs, scene.x0()?, &policy, scene.budgets.n, seed)?;
    let path = out.join("orbit.f64");
    io::write_orbit(&path, &orbit, ifs)?;
    if args.trace {
        let mut w = create(&out.join("orbit.csv"))?;
        io::write_orbit_csv(&mut w, &orbit)?;
        w.flush()?;
    }
    println!("orbit: steps={} seed={seed} policy={} path={}", orbit.steps(), orbit.policy, path.display());
    Ok(())
}

pub fn det(args: &SceneArgs) -> Outcome {
    let (scene, out) = open(args)?;
    let approx = scene.deterministic()?;
    let path = out.join("attractor.f64");
    io::write_set(&path, &approx.points)?;
    let mut w = create(&out.join("trace.csv"))?;
    approx.write_trace_csv(&mut w)?;
    w.flush()?;
    println!(
        "attractor: converged={} iters={} gap={:e} points={} path={}",
        approx.converged,
        approx.iters_used,
        approx.cauchy_gap,
        approx.points.len(),
        path.display()
    );
    if !approx.converged {
        return Err(Failure::Verification(format!(
            "no stabilization below tol {} within {} steps",
            approx.tol, approx.iters_used
        )));
    }
    Ok(())
}

pub fn verify(args: &SceneArgs) -> Outcome {
    let (scene, out) = open(args)?;
    let (json, csv, passed, summary) = if scene.is_lifted() {
        let (subs, s0) = scene.lifted()?;
        let policy = scene.selection_policy(None)?;
        let mut params = scene.lifted_params();
        if let Some(s) = args.seed {
            params.first_seed = s;
        }
        let reference = scene.lifted_reference()?;
        let r = lifted_convergence_report(&scene.label, subs, s0, &policy, &reference, &params)?;
        let mut csv = Vec::new();
        r.write_curve_csv(&mut csv)?;
        let summary = format!("seeds_passed={}/{} threshold={}", r.seeds_passed, r.seeds_total, params.pass_threshold);
        (r.to_json(), csv, r.passed, summary)
    } else {
        let reference = reference(&scene, &out)?;
        let policy = scene.selection_policy(Some(&reference))?;
        let mut params = scene.convergence_params();
        if let Some(s) = args.seed {
            params.first_seed = s;
        }
        let r = convergence_report(&scene.label, scene.ifs()?, scene.x0()?, &policy, &reference, &params)?;
        let mut csv = Vec::new();
        r.write_curve_csv(&mut csv)?;
        if args.trace {
            let mut w = create(&out.join("seeds.csv"))?;
            writeln!(w, "seed,K,distance,containment,covering")?;
            for s in &r.per_seed {
                for c in &s.curve {
                    writeln!(w, "{},{},{:e},{:e},{:e}", s.seed, c.k, c.distance, c.containment, c.covering)?;
                }
            }
            w.flush()?;
        }
        let k = r.k_found.map_or("none".to_string(), |k| k.to_string());
        let summary = format!(
            "seeds_passed={}/{} threshold={} K_found={k}",
            r.seeds_passed, r.seeds_total, params.pass_threshold
        );
        (r.to_json(), csv, r.passed, summary)
    };
    write_text(&out.join("report.json"), &json)?;
    fs::write(out.join("curve.csv"), csv)?;
    println!("verify: {summary} passed={passed} report={}", out.join("report.json").display());
    if passed {
        Ok(())
    } else {
        Err(Failure::Verification(format!("{} failed: {summary}", scene.label)))
    }
}

pub fn dist(a: &Path, b: &Path, mode: Mode) -> Outcome {
    let sa = io::read_set(a, None)?;
    let sb = io::read_set(b, None)?;
    let r = hausdorff_distance(&sa, &sb, mode)?;
    let doc = json!({
        "value": r.value,
        "b_to_c": r.b_to_c(),
        "c_to_b": r.c_to_b(),
        "witness_b_to_c": [r.witness_b_to_c.0.coords(), r.witness_b_to_c.1.coords()],
        "witness_c_to_b": [r.witness_c_to_b.0.coords(), r.witness_c_to_b.1.coords()],
    });
    println!("{doc}");
    Ok(())
}

pub fn render(args: &SceneArgs, input: Option<&Path>) -> Outcome {
    let (scene, out) = open(args)?;
    let spec = scene
        .render
        .as_ref()
        .ok_or_else(|| Failure::Usage(format!("scene {} has no [render] section", scene.label)))?;
    let path = input.map_or_else(|| out.join("orbit.f64"), Path::to_path_buf);
    if !path.exists() {
        return Err(Error::MissingArtifact(format!(
            "{} not found; run `ifs run --scene {}` first",
            path.display(),
            scene.label
        ))
        .into());
    }
    let (meta, coords) = io::read_points(&path)?;
    if meta.space != scene.space {
        return Err(Failure::Usage(format!(
            "{} holds {} points, scene is {}",
            path.display(),
            meta.space,
            scene.space
        )));
    }
    let dim = meta.space.dim();
    let skip = if meta.content == "orbit" { scene.render_skip.min(meta.count) } else { 0 };
    let (bytes, stats) = raster::render(meta.space, &coords[skip * dim..], spec)?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("points");
    let image = out.join(format!("{stem}.ppm"));
    fs::write(&image, bytes)?;
    println!(
        "render: plotted={} outside={} clamped={} path={}",
        stats.plotted,
        stats.outside,
        stats.clamped,
        image.display()
    );
    Ok(())
}

pub fn cover(args: &SceneArgs) -> Outcome {
    let (scene, out) = open(args)?;
    let ifs = scene.ifs()?;
    let reference = scene.cover_reference()?;
    let b = &scene.budgets;
    let cert = cover_bound(ifs, &reference, b.cover_epsilon, b.net_delta, b.m_cap)?;
    write_text(&out.join("cover.json"), &cert.to_json())?;
    let replayed = cert.replay(ifs, &reference)?;
    let m = cert.big_m.map_or("none".to_string(), |m| m.to_string());
    println!(
        "cover: samples={} M={m} failures={} complete={} replayed={replayed}",
        cert.samples.len(),
        cert.failures.len(),
        cert.complete
    );
    if !cert.complete {
        return Err(Failure::Verification(format!("{} net points missed at m_cap {}", cert.failures.len(), b.m_cap)));
    }
    if !replayed {
        return Err(Failure::Verification("certificate replay disagrees".into()));
    }
    Ok(())
}

pub fn superfractal(args: &SceneArgs) -> Outcome {
    let (scene, out) = open(args)?;
    let (subs, s0) = scene.lifted()?;
    let b = &scene.budgets;
    let policy = scene.selection_policy(None)?;
    let seed = args.seed.unwrap_or(b.first_seed);
    let orbit = lifted_chaos_orbit(subs, s0, &policy, b.n, seed, b.inner_cap)?;
    let tail = orbit.window(b.n + 1 - b.tail, b.tail, b.outer_delta)?;
    let reference = scene.lifted_reference()?;
    let hh = hh_distance(&reference, &tail)?;
    io::write_ensemble(&out.join("tail.ens"), &tail)?;
    io::write_ensemble(&out.join("reference.ens"), &reference)?;
    let doc = json!({
        "format_version": ifs_core::verify::REPORT_VERSION,
        "scene": scene.label,
        "seed": seed,
        "epsilon": b.epsilon,
        "hh": hh,
        "tail_members": tail.len(),
        "reference_members": reference.len(),
        "max_inner_delta": orbit.max_inner_delta,
    });
    write_text(&out.join("superfractal.json"), &serde_json::to_string_pretty(&doc).expect("plain JSON"))?;
    println!(
        "superfractal: hh={:e} tail_members={} reference_members={} seed={seed}",
        hh.value,
        tail.len(),
        reference.len()
    );
    if hh.value < b.epsilon {
        Ok(())
    } else {
        Err(Failure::Verification(format!("hh distance {:e} is not below {}", hh.value, b.epsilon)))
    }
}
