//! CSV, gnuplot and JSON outputs of an experiment.
//!
//! Everything except `<name>.timing.json` is a pure function of the
//! experiment spec, so repeated runs produce identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::diagnostics::ConditionReport;
use crate::error::{Error, Result};
use crate::noise::NoiseModel;
use crate::problems::Problem;

use super::config::to_config_text;
use super::{DivergenceRecord, ExperimentResult, IntersectionReport, MseCurve};

/// `k,<label1>,<label2>,...` then one row per recorded k, values with 17
/// significant digits.
pub fn csv_text(curves: &[MseCurve]) -> Result<String> {
    let first = curves
        .first()
        .ok_or_else(|| Error::MissingData("no curves to write".into()))?;
    if let Some(c) = curves.iter().find(|c| c.indices != first.indices) {
        return Err(Error::Experiment(format!(
            "curve {:?} is recorded at different indices than {:?}",
            c.label, first.label
        )));
    }
    let mut out = String::from("k");
    for c in curves {
        out.push(',');
        out.push_str(&c.label);
    }
    out.push('\n');
    for (row, k) in first.indices.iter().enumerate() {
        let _ = write!(out, "{k}");
        for c in curves {
            let _ = write!(out, ",{:.16e}", c.values[row]);
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn emit_csv(curves: &[MseCurve], path: &Path) -> Result<()> {
    let text = csv_text(curves)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Gnuplot script drawing MSE against k on log axes, with a vertical line
/// at `k_star` when it falls inside the plotted range.
pub fn plot_script(name: &str, curves: &[MseCurve], k_star: Option<f64>) -> String {
    let last_k = curves
        .first()
        .and_then(|c| c.indices.last().copied())
        .unwrap_or(0);
    let mut out = String::new();
    let _ = writeln!(out, "# gnuplot -p {name}.gp");
    let _ = writeln!(out, "set datafile separator ','");
    let _ = writeln!(out, "set logscale xy");
    let _ = writeln!(out, "set format y '10^{{%L}}'");
    let _ = writeln!(out, "set xlabel 'k'");
    let _ = writeln!(out, "set ylabel 'MSE'");
    let _ = writeln!(out, "set key top right");
    let _ = writeln!(out, "set title '{name}' noenhanced");
    if let Some(k) = k_star.filter(|&k| k >= 1.0 && k <= last_k as f64) {
        let _ = writeln!(
            out,
            "set arrow from {k}, graph 0 to {k}, graph 1 nohead dashtype 2 linecolor rgb 'forest-green'"
        );
        let _ = writeln!(out, "set label 'k* = {k:.1}' at {k}, graph 0.95 offset 1,0");
    }
    let plots: Vec<String> = curves
        .iter()
        .enumerate()
        .map(|(i, c)| {
            format!(
                "'{name}.csv' skip 2 using 1:{} with lines linewidth 2 title '{}' noenhanced",
                i + 2,
                c.label
            )
        })
        .collect();
    let _ = writeln!(out, "plot {}", plots.join(", \\\n     "));
    out
}

pub fn emit_plot_script(name: &str, curves: &[MseCurve], k_star: Option<f64>, path: &Path) -> Result<()> {
    fs::write(path, plot_script(name, curves, k_star)).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Serialize)]
struct ArmSummary<'a> {
    label: &'a str,
    algorithm: &'static str,
    estimator: String,
    noise: NoiseModel,
    replications_used: usize,
    diverged: usize,
    final_mse: f64,
}

#[derive(Debug, Serialize)]
struct Summary<'a> {
    name: &'a str,
    config: String,
    problem: &'a Problem,
    theta_star: Vec<f64>,
    a: f64,
    alpha: f64,
    iterations: usize,
    replications: usize,
    master_seed: u64,
    arms: Vec<ArmSummary<'a>>,
    conditions: &'a [ConditionReport],
    divergences: &'a [DivergenceRecord],
    intersection: Option<&'a IntersectionReport>,
}

pub fn summary_json(result: &ExperimentResult) -> Result<String> {
    let spec = &result.spec;
    let arms = spec
        .arms
        .iter()
        .zip(&result.curves)
        .map(|(arm, curve)| {
            Ok(ArmSummary {
                label: &arm.label,
                algorithm: arm.algorithm.as_str(),
                estimator: arm.estimator.to_string(),
                noise: arm.problem(&spec.problem)?.noise(),
                replications_used: curve.replications,
                diverged: curve.diverged,
                final_mse: curve.final_value(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = Summary {
        name: &spec.name,
        config: to_config_text(spec),
        problem: &spec.problem,
        theta_star: spec.problem.theta_star().into_vec(),
        a: spec.gain.a(),
        alpha: spec.gain.alpha(),
        iterations: spec.iterations,
        replications: spec.replications,
        master_seed: spec.master_seed,
        arms,
        conditions: &result.conditions,
        divergences: &result.divergences,
        intersection: result.intersection.as_ref(),
    };
    let mut text = serde_json::to_string_pretty(&summary)
        .map_err(|e| Error::Experiment(format!("cannot serialize summary: {e}")))?;
    text.push('\n');
    Ok(text)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputPaths {
    pub csv: PathBuf,
    pub plot: PathBuf,
    pub summary: PathBuf,
    pub timing: PathBuf,
}

impl OutputPaths {
    pub fn new(dir: &Path, name: &str) -> Self {
        OutputPaths {
            csv: dir.join(format!("{name}.csv")),
            plot: dir.join(format!("{name}.gp")),
            summary: dir.join(format!("{name}.summary.json")),
            timing: dir.join(format!("{name}.timing.json")),
        }
    }
}

pub fn write_outputs(result: &ExperimentResult, dir: &Path, threads: Option<usize>) -> Result<OutputPaths> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = &result.spec.name;
    let paths = OutputPaths::new(dir, name);
    let k_star = result.intersection.as_ref().and_then(|i| i.k_star);
    emit_csv(&result.curves, &paths.csv)?;
    emit_plot_script(name, &result.curves, k_star, &paths.plot)?;
    let summary = summary_json(result)?;
    fs::write(&paths.summary, summary).map_err(|e| Error::io(&paths.summary, e))?;
    let timing = serde_json::json!({
        "name": name,
        "elapsed_seconds": result.elapsed_seconds,
        "threads": threads.map_or_else(|| rayon::current_num_threads(), |t| t),
    });
    fs::write(&paths.timing, format!("{timing:#}\n")).map_err(|e| Error::io(&paths.timing, e))?;
    Ok(paths)
}
