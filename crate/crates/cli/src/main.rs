//! `ifs`: chaos game, deterministic attractors and their checks, driven by
//! scene files.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "ifs", version, about = "Attractors of iterated function systems")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
pub struct SceneArgs {
    /// Scene file.
    #[arg(long)]
    pub scene: PathBuf,
    /// Seed of a single orbit; verification panels start here.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; defaults to the scene's.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write per-step CSV traces.
    #[arg(long)]
    pub trace: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Runs one chaos game orbit and dumps it.
    Run(SceneArgs),
    /// Runs the deterministic algorithm and dumps the attractor estimate.
    Det(SceneArgs),
    /// Runs the seed panel against the reference; exit 3 unless it passes.
    Verify(SceneArgs),
    /// Hausdorff distance between two point dumps, as JSON.
    Dist {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, value_enum, default_value = "accelerated")]
        mode: ModeArg,
    },
    /// Renders a point dump to a binary PPM.
    Render {
        #[command(flatten)]
        scene: SceneArgs,
        /// Point dump to draw; defaults to `<out>/orbit.f64`.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Certifies a uniform hitting depth over a net around the reference.
    Cover(SceneArgs),
    /// Runs one lifted orbit and compares its tail ensemble with the reference.
    Superfractal(SceneArgs),
}

#[derive(clap::ValueEnum, Clone, Copy)]
enum ModeArg {
    Oracle,
    Accelerated,
}

/// A CLI failure: an engine error or a check that ran and did not pass.
pub enum Failure {
    Core(ifs_core::Error),
    Usage(String),
    Verification(String),
}

impl From<ifs_core::Error> for Failure {
    fn from(e: ifs_core::Error) -> Self {
        Failure::Core(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Core(e.into())
    }
}

impl Failure {
    fn kind_and_code(&self) -> (&'static str, u8) {
        use ifs_core::Error as E;
        match self {
            Failure::Usage(_) => ("usage", 2),
            Failure::Verification(_) => ("verification", 3),
            Failure::Core(e) => match e {
                E::Usage(_) => ("usage", 2),
                E::Parse(_) => ("parse", 4),
                E::Version(_) => ("version", 5),
                E::Validation(_) => ("validation", 6),
                E::MissingArtifact(_) => ("missing-artifact", 7),
                E::Domain(_) => ("domain", 8),
                E::InvalidPoint(_) => ("invalid-point", 9),
                E::Format(_) => ("format", 10),
                E::Io(_) => ("io", 11),
            },
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Usage(m) | Failure::Verification(m) => m.clone(),
            Failure::Core(e) => e.to_string(),
        }
    }
}

fn report(f: &Failure) -> ExitCode {
    let (kind, code) = f.kind_and_code();
    let msg = f.message().split_whitespace().collect::<Vec<_>>().join(" ");
    eprintln!("error: kind={kind} code={code} msg={msg}");
    ExitCode::from(code)
}

fn init_threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var("IFS_THREADS") else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| Failure::Usage(format!("IFS_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Usage(format!("cannot size the thread pool: {e}")))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version.
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let first = e.to_string().lines().next().unwrap_or("").trim_start_matches("error: ").to_string();
            return report(&Failure::Usage(first));
        }
    };
    let result = init_threads().and_then(|()| match cli.cmd {
        Cmd::Run(a) => commands::run(&a),
        Cmd::Det(a) => commands::det(&a),
        Cmd::Verify(a) => commands::verify(&a),
        Cmd::Dist { a, b, mode } => commands::dist(
            &a,
            &b,
            match mode {
                ModeArg::Oracle => ifs_core::Mode::Oracle,
                ModeArg::Accelerated => ifs_core::Mode::Accelerated,
            },
        ),
        Cmd::Render { scene, input } => commands::render(&scene, input.as_deref()),
        Cmd::Cover(a) => commands::cover(&a),
        Cmd::Superfractal(a) => commands::superfractal(&a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => report(&f),
    }
}
