//! Replicated Monte Carlo experiments.
//!
//! Every replication of every arm owns a stream derived from
//! `(master_seed, arm_index × J + replication)`. Replications run on a
//! bounded rayon pool in chunks; each chunk is gathered and then folded into
//! the running sums in replication order, so the output does not depend on
//! the number of threads.

pub mod config;
pub mod output;
pub mod presets;

use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::diagnostics::{
    bias_partial_sums, boundedness_from_norms, continuity_report, validate_gain, ConditionReport,
};
use crate::error::{Error, Result};
use crate::estimators::EstimatorKind;
use crate::fabian::{
    closed_form_c, estimate_c, intersection_k, sgd_inputs, AsymptoticDistribution, MuForm,
};
use crate::noise::NoiseModel;
use crate::optimizers::{check_pairing, run, Algorithm, OptimizerConfig, Snapshot};
use crate::params::{GainSequence, ParamVector};
use crate::problems::Problem;
use crate::stream::{derive_stream, RngStreamSpec};

/// An arm fails when more than this fraction of its replications diverge.
pub const MAX_DIVERGED_FRACTION: f64 = 0.01;
const CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct ArmSpec {
    pub label: String,
    pub algorithm: Algorithm,
    pub estimator: EstimatorKind,
    /// Replaces the problem's noise model for this arm.
    pub noise: Option<NoiseModel>,
}

impl ArmSpec {
    pub fn new(label: &str, algorithm: Algorithm, estimator: EstimatorKind) -> Self {
        ArmSpec {
            label: label.to_string(),
            algorithm,
            estimator,
            noise: None,
        }
    }

    pub fn with_noise(mut self, noise: NoiseModel) -> Self {
        self.noise = Some(noise);
        self
    }

    pub fn problem(&self, base: &Problem) -> Result<Problem> {
        match self.noise {
            Some(noise) => base.with_noise(noise),
            None => Ok(base.clone()),
        }
    }
}

/// Where the gradient-noise covariance `C` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CReference {
    /// Each arm's own limit point (`θ*` unbiased, `θ*′` biased).
    Limits,
    /// The shared starting point `θ_0`.
    Initial,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum CPolicy {
    ClosedForm { reference: CReference },
    Sampled { reference: CReference, samples: usize },
    /// Across-replication mean of `V Vᵀ` at iteration `k_ref`, with
    /// `V = ĝ(θ_k) − E[ĝ(θ_k) | θ_k]`.
    Trajectory { k_ref: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntersectionRequest {
    pub unbiased: String,
    pub biased: String,
    pub policy: CPolicy,
    pub mu_form: MuForm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub name: String,
    pub problem: Problem,
    pub theta0: ParamVector,
    pub gain: GainSequence,
    pub iterations: usize,
    pub stride: usize,
    pub replications: usize,
    pub master_seed: u64,
    pub arms: Vec<ArmSpec>,
    pub intersection: Option<IntersectionRequest>,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty()
            || !self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.')
        {
            return Err(Error::Experiment(format!(
                "experiment name {:?} must be non-empty and use only [A-Za-z0-9_.-]",
                self.name
            )));
        }
        if self.replications == 0 {
            return Err(Error::Experiment("replications must be >= 1".into()));
        }
        if self.stride == 0 {
            return Err(Error::Experiment("stride must be >= 1".into()));
        }
        if self.arms.is_empty() {
            return Err(Error::Experiment("an experiment needs at least one arm".into()));
        }
        self.theta0.ensure_dim(self.problem.dim())?;
        for (i, arm) in self.arms.iter().enumerate() {
            if arm.label.is_empty() || arm.label.contains(',') || arm.label.contains('\'') {
                return Err(Error::Experiment(format!(
                    "arm label {:?} must be non-empty without commas or quotes",
                    arm.label
                )));
            }
            if self.arms[..i].iter().any(|a| a.label == arm.label) {
                return Err(Error::Experiment(format!("duplicate arm label {:?}", arm.label)));
            }
            let problem = arm.problem(&self.problem)?;
            check_pairing(&self.optimizer_config(arm), &problem, &arm.estimator)?;
        }
        if let Some(req) = &self.intersection {
            self.intersection_arms(req)?;
        }
        Ok(())
    }

    fn optimizer_config(&self, arm: &ArmSpec) -> OptimizerConfig {
        OptimizerConfig::new(arm.algorithm, self.gain, self.theta0.clone(), self.iterations)
            .with_stride(self.stride)
    }

    pub fn arm(&self, label: &str) -> Result<(usize, &ArmSpec)> {
        self.arms
            .iter()
            .enumerate()
            .find(|(_, a)| a.label == label)
            .ok_or_else(|| Error::Experiment(format!("no arm labelled {label:?}")))
    }

    fn intersection_arms(&self, req: &IntersectionRequest) -> Result<(usize, usize)> {
        let (iu, _) = self.arm(&req.unbiased)?;
        let (ib, biased) = self.arm(&req.biased)?;
        if !matches!(self.problem, Problem::Quadratic(_)) {
            return Err(Error::Experiment(
                "intersection analysis is defined for the quadratic problem".into(),
            ));
        }
        if !matches!(biased.estimator.raw_kind(), EstimatorKind::OffsetBiased { .. }) {
            return Err(Error::Experiment(format!(
                "biased arm {:?} must use an offset estimator",
                biased.label
            )));
        }
        if let CPolicy::Trajectory { k_ref } = req.policy {
            if k_ref >= self.iterations {
                return Err(Error::Experiment(format!(
                    "trajectory C reference k = {k_ref} must be below K = {}",
                    self.iterations
                )));
            }
        }
        Ok((iu, ib))
    }

    pub fn stream_for(&self, arm_index: usize, rep: usize) -> RngStreamSpec {
        RngStreamSpec::new(
            self.master_seed,
            (arm_index as u64) * (self.replications as u64) + rep as u64,
        )
    }

    /// Streams reserved for auxiliary sampling, past every replication stream.
    fn auxiliary_stream(&self, slot: u64) -> RngStreamSpec {
        RngStreamSpec::new(
            self.master_seed,
            (self.arms.len() as u64) * (self.replications as u64) + slot,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MseCurve {
    pub label: String,
    pub indices: Vec<usize>,
    /// `(1/J) Σ_j ‖θ_k^{(j)} − θ*‖²` over non-diverged replications.
    pub values: Vec<f64>,
    pub replications: usize,
    pub diverged: usize,
}

impl MseCurve {
    pub fn final_value(&self) -> f64 {
        *self.values.last().expect("curves hold at least k = 0")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArmPrediction {
    pub label: String,
    pub reference: Vec<f64>,
    pub c: Vec<Vec<f64>>,
    pub mu: Vec<f64>,
    pub sigma: Vec<Vec<f64>>,
    pub trace: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntersectionReport {
    pub policy: CPolicy,
    pub mu_form: MuForm,
    pub alpha: f64,
    pub w: Vec<f64>,
    pub wtw: f64,
    pub unbiased: ArmPrediction,
    pub biased: ArmPrediction,
    /// `None` when the analysis failed; see `error`.
    pub k_star: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DivergenceRecord {
    pub label: String,
    pub replication: usize,
    pub k: usize,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub spec: ExperimentSpec,
    pub curves: Vec<MseCurve>,
    pub conditions: Vec<ConditionReport>,
    pub divergences: Vec<DivergenceRecord>,
    pub intersection: Option<IntersectionReport>,
    pub elapsed_seconds: f64,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses every available core.
    pub threads: Option<usize>,
    /// Print one line per finished arm to stderr.
    pub progress: bool,
}

struct RepOutcome {
    sq_errors: Vec<f64>,
    norms: Vec<f64>,
    snapshot: Option<Snapshot>,
    bias: Option<ConditionReport>,
}

struct ArmOutcome {
    curve: MseCurve,
    norm_report: Option<ConditionReport>,
    bias_report: Option<ConditionReport>,
    divergences: Vec<DivergenceRecord>,
    /// Sum over non-diverged replications of `V Vᵀ` at the snapshot.
    snapshot_c: Option<DMatrix<f64>>,
}

fn thread_pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(Error::Experiment("--threads must be >= 1".into()));
        }
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| Error::Experiment(format!("cannot start worker pool: {e}")))
}

pub fn run_experiment(spec: &ExperimentSpec, options: RunOptions) -> Result<ExperimentResult> {
    spec.validate()?;
    let started = Instant::now();
    let pool = thread_pool(options.threads)?;

    let trajectory_arms = match &spec.intersection {
        Some(req @ IntersectionRequest {
            policy: CPolicy::Trajectory { k_ref },
            ..
        }) => {
            let (iu, ib) = spec.intersection_arms(req)?;
            Some((iu, ib, *k_ref))
        }
        _ => None,
    };

    let mut outcomes = Vec::with_capacity(spec.arms.len());
    for (arm_index, arm) in spec.arms.iter().enumerate() {
        let snapshot_k = trajectory_arms
            .filter(|(iu, ib, _)| *iu == arm_index || *ib == arm_index)
            .map(|(_, _, k)| k);
        let outcome = pool.install(|| run_arm(spec, arm_index, snapshot_k))?;
        if options.progress {
            eprintln!(
                "[{}] arm {}/{} {:>12}: {} replications, {} diverged",
                spec.name,
                arm_index + 1,
                spec.arms.len(),
                arm.label,
                outcome.curve.replications,
                outcome.curve.diverged
            );
        }
        outcomes.push(outcome);
    }

    let mut conditions = vec![
        validate_gain(spec.gain.a(), spec.gain.alpha()),
        continuity_report(&spec.problem),
    ];
    for o in &outcomes {
        conditions.extend(o.norm_report.iter().cloned());
        conditions.extend(o.bias_report.iter().cloned());
    }

    let intersection = match &spec.intersection {
        None => None,
        Some(req) => {
            let trajectory_c = trajectory_arms.map(|(iu, ib, _)| {
                (
                    average_snapshot_c(&outcomes[iu]),
                    average_snapshot_c(&outcomes[ib]),
                )
            });
            Some(intersection_report(spec, req, trajectory_c))
        }
    };

    let mut curves = Vec::with_capacity(outcomes.len());
    let mut divergences = Vec::new();
    for o in outcomes {
        curves.push(o.curve);
        divergences.extend(o.divergences);
    }
    Ok(ExperimentResult {
        spec: spec.clone(),
        curves,
        conditions,
        divergences,
        intersection,
        elapsed_seconds: started.elapsed().as_secs_f64(),
    })
}

fn average_snapshot_c(outcome: &ArmOutcome) -> Option<DMatrix<f64>> {
    let used = outcome.curve.replications;
    outcome
        .snapshot_c
        .as_ref()
        .filter(|_| used > 0)
        .map(|sum| sum / used as f64)
}

fn run_arm(spec: &ExperimentSpec, arm_index: usize, snapshot_k: Option<usize>) -> Result<ArmOutcome> {
    let arm = &spec.arms[arm_index];
    let problem = arm.problem(&spec.problem)?;
    let base = spec.optimizer_config(arm).with_norms();
    let indices = base.recorded_indices();
    let window_two = arm.algorithm == Algorithm::SwSgd && arm.estimator.window_size() == 2;

    let mut sums = vec![0.0; indices.len()];
    let mut norm_sums = vec![0.0; spec.iterations];
    let mut snapshot_c = snapshot_k.map(|_| DMatrix::zeros(problem.dim(), problem.dim()));
    let mut used = 0usize;
    let mut divergences = Vec::new();
    let mut bias_report = None;

    let mut start = 0;
    while start < spec.replications {
        let end = (start + CHUNK).min(spec.replications);
        let chunk: Vec<(usize, Result<RepOutcome>)> = (start..end)
            .into_par_iter()
            .map(|rep| {
                let mut config = base.clone();
                if rep == 0 && window_two {
                    config = config.with_estimates();
                }
                if let Some(k) = snapshot_k {
                    config = config.with_snapshot(k);
                }
                let outcome = run(&config, &problem, &arm.estimator, spec.stream_for(arm_index, rep))
                    .and_then(|traj| {
                        let bias = if traj.estimates.is_some() {
                            Some(bias_partial_sums(&traj, &problem, &spec.gain)?.report)
                        } else {
                            None
                        };
                        Ok(RepOutcome {
                            sq_errors: traj.sq_errors,
                            norms: traj.direction_norms.unwrap_or_default(),
                            snapshot: traj.snapshot,
                            bias,
                        })
                    });
                (rep, outcome)
            })
            .collect();

        for (rep, outcome) in chunk {
            match outcome {
                Ok(o) => {
                    used += 1;
                    for (s, v) in sums.iter_mut().zip(&o.sq_errors) {
                        *s += v;
                    }
                    for (s, v) in norm_sums.iter_mut().zip(&o.norms) {
                        *s += v;
                    }
                    if let (Some(acc), Some(snap)) = (snapshot_c.as_mut(), o.snapshot.as_ref()) {
                        let v = noise_residual(&problem, &arm.estimator, snap)?;
                        *acc += &v * v.transpose();
                    }
                    if let Some(mut report) = o.bias {
                        report.note = format!("{} ({}, replication 0)", report.note, arm.label);
                        bias_report = Some(report);
                    }
                }
                Err(Error::Diverged { k, detail }) => divergences.push(DivergenceRecord {
                    label: arm.label.clone(),
                    replication: rep,
                    k,
                    detail,
                }),
                Err(e) => return Err(e),
            }
        }
        start = end;
    }

    let diverged = divergences.len();
    if diverged as f64 > MAX_DIVERGED_FRACTION * spec.replications as f64 {
        let first = &divergences[0];
        return Err(Error::Experiment(format!(
            "arm {:?} diverged in {diverged} of {} replications (limit 1%); first: replication {} at k = {}, {}",
            arm.label, spec.replications, first.replication, first.k, first.detail
        )));
    }
    let values = sums.iter().map(|s| s / used as f64).collect();

    let norm_report = if spec.iterations > 0 {
        let mean: Vec<f64> = norm_sums.iter().map(|s| s / used as f64).collect();
        let mut report = boundedness_from_norms(&[&mean])?;
        report.note = format!(
            "{}: max over {} steps of the mean direction norm across {used} replications",
            arm.label, spec.iterations
        );
        Some(report)
    } else {
        None
    };

    Ok(ArmOutcome {
        curve: MseCurve {
            label: arm.label.clone(),
            indices,
            values,
            replications: used,
            diverged,
        },
        norm_report,
        bias_report,
        divergences,
        snapshot_c,
    })
}

/// `ĝ(θ) − E[ĝ(θ) | θ]` for a recorded raw draw.
fn noise_residual(
    problem: &Problem,
    estimator: &EstimatorKind,
    snap: &Snapshot,
) -> Result<nalgebra::DVector<f64>> {
    let mut mean = problem.true_gradient(&snap.theta)?;
    if let EstimatorKind::OffsetBiased { b } = estimator.raw_kind() {
        mean = mean.add(b);
    }
    Ok(snap.raw.sub(&mean).to_dvector())
}

/// Limit of the mean update for `estimator` on a quadratic: `θ*` for an
/// unbiased estimator, `θ* − b/2` for an offset `b`.
fn quadratic_limit(problem: &Problem, estimator: &EstimatorKind) -> ParamVector {
    let star = problem.theta_star();
    match estimator.raw_kind() {
        EstimatorKind::OffsetBiased { b } => star.sub(&b.scale(0.5)),
        _ => star,
    }
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

fn arm_prediction(
    spec: &ExperimentSpec,
    arm: &ArmSpec,
    reference: Vec<f64>,
    c: DMatrix<f64>,
    mu_form: MuForm,
) -> Result<ArmPrediction> {
    let problem = arm.problem(&spec.problem)?;
    let inputs = sgd_inputs(&problem, spec.gain.a(), spec.gain.alpha(), c.clone())?;
    let dist = AsymptoticDistribution::from_inputs(&inputs, mu_form)?;
    Ok(ArmPrediction {
        label: arm.label.clone(),
        reference,
        c: matrix_rows(&c),
        mu: dist.mu.iter().copied().collect(),
        sigma: matrix_rows(&dist.sigma),
        trace: dist.trace(),
    })
}

fn policy_c(
    spec: &ExperimentSpec,
    arm: &ArmSpec,
    policy: CPolicy,
    slot: u64,
    trajectory_c: Option<DMatrix<f64>>,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let problem = arm.problem(&spec.problem)?;
    let reference = |r: CReference| match r {
        CReference::Limits => quadratic_limit(&problem, &arm.estimator),
        CReference::Initial => spec.theta0.clone(),
    };
    match policy {
        CPolicy::ClosedForm { reference: r } => {
            let at = reference(r);
            let c = closed_form_c(&problem, &at)?;
            Ok((at.into_vec(), c))
        }
        CPolicy::Sampled { reference: r, samples } => {
            let at = reference(r);
            let mut rng = derive_stream(spec.auxiliary_stream(slot));
            let c = estimate_c(&problem, &arm.estimator, &at, spec.iterations, samples, &mut rng)?;
            Ok((at.into_vec(), c))
        }
        CPolicy::Trajectory { k_ref } => {
            let c = trajectory_c.ok_or_else(|| {
                Error::Experiment(format!(
                    "trajectory C at k = {k_ref} needs a simulation with surviving replications of arm {:?}",
                    arm.label
                ))
            })?;
            Ok((Vec::new(), c))
        }
    }
}

/// `k*` for the designated unbiased and biased arms, with every input used.
///
/// The trajectory policy needs the snapshot covariances produced by
/// [`run_experiment`]; the closed-form and sampled policies run standalone.
pub fn intersection_analysis(
    spec: &ExperimentSpec,
    req: &IntersectionRequest,
    trajectory_c: Option<(Option<DMatrix<f64>>, Option<DMatrix<f64>>)>,
) -> Result<IntersectionReport> {
    spec.validate()?;
    let (iu, ib) = spec.intersection_arms(req)?;
    let unbiased_arm = &spec.arms[iu];
    let biased_arm = &spec.arms[ib];
    let (tc_u, tc_b) = trajectory_c.unwrap_or((None, None));

    let (ref_u, c_u) = policy_c(spec, unbiased_arm, req.policy, 0, tc_u)?;
    let (ref_b, c_b) = policy_c(spec, biased_arm, req.policy, 1, tc_b)?;
    let unbiased = arm_prediction(spec, unbiased_arm, ref_u, c_u, req.mu_form)?;
    let biased = arm_prediction(spec, biased_arm, ref_b, c_b, req.mu_form)?;

    let problem = biased_arm.problem(&spec.problem)?;
    let w = problem
        .theta_star()
        .sub(&quadratic_limit(&problem, &biased_arm.estimator))
        .into_vec();
    let wtw = w.iter().map(|x| x * x).sum();
    let alpha = spec.gain.alpha();
    let (k_star, error) = match intersection_k(unbiased.trace, biased.trace, &w, alpha) {
        Ok(k) => (Some(k), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(IntersectionReport {
        policy: req.policy,
        mu_form: req.mu_form,
        alpha,
        w,
        wtw,
        unbiased,
        biased,
        k_star,
        error,
    })
}

fn intersection_report(
    spec: &ExperimentSpec,
    req: &IntersectionRequest,
    trajectory_c: Option<(Option<DMatrix<f64>>, Option<DMatrix<f64>>)>,
) -> IntersectionReport {
    match intersection_analysis(spec, req, trajectory_c) {
        Ok(report) => report,
        Err(e) => {
            let empty = |label: &str| ArmPrediction {
                label: label.to_string(),
                reference: Vec::new(),
                c: Vec::new(),
                mu: Vec::new(),
                sigma: Vec::new(),
                trace: 0.0,
            };
            IntersectionReport {
                policy: req.policy,
                mu_form: req.mu_form,
                alpha: spec.gain.alpha(),
                w: Vec::new(),
                wtw: 0.0,
                unbiased: empty(&req.unbiased),
                biased: empty(&req.biased),
                k_star: None,
                error: Some(e.to_string()),
            }
        }
    }
}

/// Predicted `(floor + tr Σ/k^α)` for one arm, without simulation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArmAnalysis {
    pub prediction: ArmPrediction,
    /// `‖θ* − θ_limit‖²`, the MSE floor of a persistently biased arm.
    pub floor: f64,
    pub predicted_mse: Vec<(usize, f64)>,
}

pub fn analyze_arms(spec: &ExperimentSpec, policy: CPolicy, mu_form: MuForm, ks: &[usize]) -> Result<Vec<ArmAnalysis>> {
    spec.validate()?;
    if let CPolicy::Trajectory { .. } = policy {
        return Err(Error::Experiment(
            "the trajectory C policy needs a simulation; use `run` instead of `analyze`".into(),
        ));
    }
    let alpha = spec.gain.alpha();
    let mut out = Vec::with_capacity(spec.arms.len());
    for (i, arm) in spec.arms.iter().enumerate() {
        let problem = arm.problem(&spec.problem)?;
        let limit = match (&spec.problem, arm.estimator.raw_kind()) {
            (Problem::Quadratic(_), _) => quadratic_limit(&problem, &arm.estimator),
            (_, EstimatorKind::OffsetBiased { .. }) => {
                return Err(Error::Experiment(format!(
                    "arm {:?}: the limit of an offset estimator is only tabulated for the quadratic problem",
                    arm.label
                )))
            }
            _ => problem.theta_star(),
        };
        let (reference, c) = policy_c(spec, arm, policy, i as u64, None)?;
        let prediction = arm_prediction(spec, arm, reference, c, mu_form)?;
        let floor = problem.theta_star().squared_distance(&limit);
        let mut predicted_mse = Vec::with_capacity(ks.len());
        for &k in ks {
            if k == 0 {
                return Err(Error::InvalidParameter("prediction indices must be >= 1".into()));
            }
            let scale = (k as f64).powf(alpha);
            let mu2: f64 = prediction.mu.iter().map(|m| m * m).sum();
            predicted_mse.push((k, floor + (prediction.trace + mu2) / scale));
        }
        out.push(ArmAnalysis {
            prediction,
            floor,
            predicted_mse,
        });
    }
    Ok(out)
}
