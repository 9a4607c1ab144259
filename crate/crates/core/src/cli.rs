//! Command-line front end.
//!
//! Exit status: 0 on success, 1 on usage or configuration errors, 2 on
//! runtime failures (divergence, no intersection, I/O).

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::Error;
use crate::fabian::MuForm;
use crate::harness::config::{parse_config, ParsedConfig};
use crate::harness::output::write_outputs;
use crate::harness::presets::{Preset, QUICK_REPLICATIONS};
use crate::harness::{
    analyze_arms, intersection_analysis, run_experiment, ArmAnalysis, CPolicy, CReference,
    ExperimentSpec, RunOptions,
};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "SWSGD_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "out";

#[derive(Debug, Parser)]
#[command(name = "swsgd", version, about = "SGD and sliding-window SGD experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run a built-in experiment (fig2.1, fig4.1, fig4.2).
    Reproduce {
        preset: String,
        /// 200 replications per arm (the default).
        #[arg(long, conflicts_with = "full")]
        quick: bool,
        /// The original replication counts.
        #[arg(long)]
        full: bool,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Predict MSE curves from the asymptotic distribution, without simulating.
    Analyze {
        #[arg(long)]
        config: PathBuf,
        /// Iterations at which to tabulate the prediction (comma separated).
        #[arg(long, value_delimiter = ',')]
        k: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute the iteration at which the unbiased and biased MSE curves cross.
    Intersect {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
}

#[derive(Debug, Args)]
struct Overrides {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    stride: Option<usize>,
    /// Worker threads (default: all cores). Never changes any output byte.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Suppress the per-arm progress lines.
    #[arg(long)]
    quiet: bool,
}

impl Overrides {
    fn apply(&self, spec: &mut ExperimentSpec) {
        if let Some(seed) = self.seed {
            spec.master_seed = seed;
        }
        if let Some(reps) = self.reps {
            spec.replications = reps;
        }
        if let Some(iters) = self.iters {
            spec.iterations = iters;
        }
        if let Some(stride) = self.stride {
            spec.stride = stride;
        }
    }

    fn options(&self) -> RunOptions {
        RunOptions {
            threads: self.threads,
            progress: !self.quiet,
        }
    }
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Runtime(m) => m,
        }
    }
}

fn usage(e: Error) -> Failure {
    Failure::Usage(e.to_string())
}

fn runtime(e: Error) -> Failure {
    Failure::Runtime(e.to_string())
}

fn out_dir(flag: Option<&Path>, config: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .or_else(|| config.map(Path::to_path_buf))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

fn load_config(path: &Path) -> Result<ParsedConfig, Failure> {
    let text = fs::read_to_string(path).map_err(|e| runtime(Error::io(path, e)))?;
    parse_config(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn load_with_overrides(path: &Path, overrides: &Overrides) -> Result<(ExperimentSpec, PathBuf), Failure> {
    let parsed = load_config(path)?;
    let mut spec = parsed.spec;
    overrides.apply(&mut spec);
    spec.validate().map_err(usage)?;
    let dir = out_dir(overrides.out.as_deref(), parsed.out_dir.as_deref());
    Ok((spec, dir))
}

fn run_and_write(spec: &ExperimentSpec, dir: &Path, overrides: &Overrides) -> Result<(), Failure> {
    let result = run_experiment(spec, overrides.options()).map_err(runtime)?;
    let paths = write_outputs(&result, dir, overrides.threads).map_err(runtime)?;
    println!("{}: wrote {}", spec.name, paths.csv.display());
    for curve in &result.curves {
        println!(
            "  {:>12}  final MSE {:.6e}  ({} replications, {} diverged)",
            curve.label,
            curve.final_value(),
            curve.replications,
            curve.diverged
        );
    }
    if let Some(report) = &result.intersection {
        match (report.k_star, &report.error) {
            (Some(k), _) => println!("  k* = {k:.3}"),
            (None, Some(e)) => println!("  intersection unavailable: {e}"),
            (None, None) => {}
        }
    }
    Ok(())
}

fn reproduce(preset: &str, full: bool, overrides: &Overrides) -> Result<(), Failure> {
    let preset = Preset::parse(preset).map_err(usage)?;
    let reps = overrides.reps.unwrap_or(if full {
        preset.full_replications()
    } else {
        QUICK_REPLICATIONS
    });
    let seed = overrides.seed.unwrap_or(0);
    let dir = out_dir(overrides.out.as_deref(), None);
    for mut spec in preset.experiments(reps, seed) {
        overrides.apply(&mut spec);
        spec.validate().map_err(usage)?;
        run_and_write(&spec, &dir, overrides)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct AnalysisOutput<'a> {
    name: &'a str,
    alpha: f64,
    policy: CPolicy,
    arms: &'a [ArmAnalysis],
}

fn default_ks(iterations: usize) -> Vec<usize> {
    let mut ks = Vec::new();
    let mut k = 1;
    while k < iterations {
        ks.push(k);
        k *= 10;
    }
    ks.push(iterations.max(1));
    ks
}

fn analyze(config: &Path, ks: &[usize], out: Option<&Path>) -> Result<(), Failure> {
    let parsed = load_config(config)?;
    let spec = parsed.spec;
    let (policy, mu_form) = match &spec.intersection {
        Some(req) => (req.policy, req.mu_form),
        None => (
            CPolicy::ClosedForm {
                reference: CReference::Limits,
            },
            MuForm::Literal,
        ),
    };
    let ks = if ks.is_empty() { default_ks(spec.iterations) } else { ks.to_vec() };
    let arms = analyze_arms(&spec, policy, mu_form, &ks).map_err(|e| match e {
        Error::InvalidParameter(_) | Error::Experiment(_) | Error::UnsupportedEstimator { .. } => usage(e),
        other => runtime(other),
    })?;

    println!("{}: alpha = {}, a = {}", spec.name, spec.gain.alpha(), spec.gain.a());
    for arm in &arms {
        println!(
            "  {:>12}  tr(Sigma) = {:.6e}  mu = {:?}  floor = {:.6e}",
            arm.prediction.label, arm.prediction.trace, arm.prediction.mu, arm.floor
        );
        for (k, mse) in &arm.predicted_mse {
            println!("  {:>12}  k = {k:<8} predicted MSE {mse:.6e}", "");
        }
    }

    let dir = out_dir(out, parsed.out_dir.as_deref());
    fs::create_dir_all(&dir).map_err(|e| runtime(Error::io(&dir, e)))?;
    let path = dir.join(format!("{}.analysis.json", spec.name));
    let doc = AnalysisOutput {
        name: &spec.name,
        alpha: spec.gain.alpha(),
        policy,
        arms: &arms,
    };
    let text = serde_json::to_string_pretty(&doc)
        .map_err(|e| Failure::Runtime(format!("cannot serialize analysis: {e}")))?;
    fs::write(&path, text + "\n").map_err(|e| runtime(Error::io(&path, e)))?;
    Ok(())
}

fn intersect(config: &Path, overrides: &Overrides) -> Result<(), Failure> {
    let (spec, dir) = load_with_overrides(config, overrides)?;
    let req = spec.intersection.clone().ok_or_else(|| {
        Failure::Usage(format!(
            "{}: `intersect` needs `intersect = <unbiased label>, <biased label>`",
            config.display()
        ))
    })?;
    let report = if let CPolicy::Trajectory { .. } = req.policy {
        let result = run_experiment(&spec, overrides.options()).map_err(runtime)?;
        write_outputs(&result, &dir, overrides.threads).map_err(runtime)?;
        result.intersection.expect("spec requests an intersection")
    } else {
        intersection_analysis(&spec, &req, None).map_err(runtime)?
    };
    println!(
        "{}: tr(Sigma) = {:.6e}, tr(Sigma') = {:.6e}, w'w = {:.6e}, alpha = {}",
        spec.name, report.unbiased.trace, report.biased.trace, report.wtw, report.alpha
    );
    match (report.k_star, report.error) {
        (Some(k), _) => {
            println!("k* = {k}");
            Ok(())
        }
        (None, Some(e)) => Err(Failure::Runtime(e)),
        (None, None) => Err(Failure::Runtime("intersection unavailable".into())),
    }
}

/// Runs the CLI on `args` (including the program name) and returns the
/// process exit status.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let outcome = match &cli.command {
        Command::Run { config, overrides } => load_with_overrides(config, overrides)
            .and_then(|(spec, dir)| run_and_write(&spec, &dir, overrides)),
        Command::Reproduce {
            preset,
            quick: _,
            full,
            overrides,
        } => reproduce(preset, *full, overrides),
        Command::Analyze { config, k, out } => analyze(config, k, out.as_deref()),
        Command::Intersect { config, overrides } => intersect(config, overrides),
    };
    match outcome {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}", f.message());
            f.code()
        }
    }
}
