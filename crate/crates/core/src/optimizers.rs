//! GD, SGD and SW-SGD iteration loops.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{raw_draw, sw_estimate, EstimatorKind, WindowBuffer};
use crate::params::{GainSequence, ParamVector};
use crate::problems::Problem;
use crate::stream::{derive_stream, RngStreamSpec};

/// Any iterate coordinate beyond this magnitude counts as divergence.
pub const DIVERGENCE_BOUND: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Gd,
    Sgd,
    SwSgd,
}

impl Algorithm {
    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::Gd => "gd",
            Algorithm::Sgd => "sgd",
            Algorithm::SwSgd => "swsgd",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizerConfig {
    pub algorithm: Algorithm,
    pub gain: GainSequence,
    pub theta0: ParamVector,
    pub iterations: usize,
    pub record_stride: usize,
    /// Keep the full iterate at every recorded index.
    #[serde(skip)]
    pub record_iterates: bool,
    /// Keep every iterate and raw estimate.
    #[serde(skip)]
    pub retain_estimates: bool,
    /// Keep ‖update direction‖ at every step.
    #[serde(skip)]
    pub track_norms: bool,
    /// Keep `(θ_k, raw estimate at θ_k)` for one iteration `k`.
    #[serde(skip)]
    pub snapshot_at: Option<usize>,
}

impl OptimizerConfig {
    pub fn new(algorithm: Algorithm, gain: GainSequence, theta0: ParamVector, iterations: usize) -> Self {
        OptimizerConfig {
            algorithm,
            gain,
            theta0,
            iterations,
            record_stride: 1,
            record_iterates: false,
            retain_estimates: false,
            track_norms: false,
            snapshot_at: None,
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.record_stride = stride;
        self
    }

    pub fn with_estimates(mut self) -> Self {
        self.retain_estimates = true;
        self
    }

    pub fn with_norms(mut self) -> Self {
        self.track_norms = true;
        self
    }

    pub fn with_iterates(mut self) -> Self {
        self.record_iterates = true;
        self
    }

    pub fn with_snapshot(mut self, k: usize) -> Self {
        self.snapshot_at = Some(k);
        self
    }

    /// Indices at which squared errors are recorded: every stride, plus K.
    pub fn recorded_indices(&self) -> Vec<usize> {
        let stride = self.record_stride.max(1);
        let mut idx: Vec<usize> = (0..=self.iterations).step_by(stride).collect();
        if idx.last() != Some(&self.iterations) {
            idx.push(self.iterations);
        }
        idx
    }
}

/// Per-step history kept when `retain_estimates` is set.
#[derive(Debug, Clone, Default)]
pub struct EstimateLog {
    /// θ_0 ..= θ_K.
    pub iterates: Vec<ParamVector>,
    /// Raw estimate drawn at θ_k, k = 0..K.
    pub raw: Vec<ParamVector>,
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub k: usize,
    pub theta: ParamVector,
    pub raw: ParamVector,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub indices: Vec<usize>,
    pub sq_errors: Vec<f64>,
    pub iterates: Option<Vec<ParamVector>>,
    pub final_iterate: ParamVector,
    pub estimates: Option<EstimateLog>,
    /// ‖update direction‖ at step k (the window mean for SW-SGD).
    pub direction_norms: Option<Vec<f64>>,
    pub snapshot: Option<Snapshot>,
}

/// `θ − a_k·g(θ)` with the true gradient.
pub fn gd_step(problem: &Problem, theta: &ParamVector, step: f64) -> Result<ParamVector> {
    let g = problem.true_gradient(theta)?;
    Ok(apply(theta, &g, step))
}

/// `θ − a_k·ĝ(θ)` with one fresh raw estimate.
pub fn sgd_step<R: Rng + ?Sized>(
    problem: &Problem,
    estimator: &EstimatorKind,
    theta: &ParamVector,
    k: usize,
    step: f64,
    rng: &mut R,
) -> Result<ParamVector> {
    let draw = raw_draw(estimator, problem, theta, k, rng)?;
    Ok(apply(theta, &draw.value, step))
}

/// Draws one raw estimate at θ, pushes it into the window and steps along
/// the window mean.
pub fn swsgd_step<R: Rng + ?Sized>(
    problem: &Problem,
    inner: &EstimatorKind,
    buffer: &mut WindowBuffer,
    theta: &ParamVector,
    k: usize,
    step: f64,
    rng: &mut R,
) -> Result<ParamVector> {
    let draw = raw_draw(inner, problem, theta, k, rng)?;
    let direction = sw_estimate(buffer, draw.value)?;
    Ok(apply(theta, &direction, step))
}

fn apply(theta: &ParamVector, direction: &ParamVector, step: f64) -> ParamVector {
    ParamVector::from_raw(
        theta
            .iter()
            .zip(direction.iter())
            .map(|(t, d)| t - step * d)
            .collect(),
    )
}

fn check_iterate(theta: &ParamVector, k: usize) -> Result<()> {
    if let Some((i, x)) = theta
        .iter()
        .enumerate()
        .find(|(_, x)| !x.is_finite() || x.abs() > DIVERGENCE_BOUND)
    {
        return Err(Error::Diverged {
            k,
            detail: format!("coordinate {i} = {x:e}"),
        });
    }
    Ok(())
}

pub(crate) fn check_pairing(config: &OptimizerConfig, problem: &Problem, estimator: &EstimatorKind) -> Result<()> {
    config.theta0.ensure_dim(problem.dim())?;
    if config.record_stride == 0 {
        return Err(Error::InvalidParameter("record stride must be >= 1".into()));
    }
    match config.algorithm {
        Algorithm::Gd => Ok(()),
        Algorithm::Sgd if estimator.is_window() => Err(Error::InvalidParameter(
            "SGD takes a non-window estimator; use SW-SGD for sliding windows".into(),
        )),
        Algorithm::SwSgd if !estimator.is_window() => Err(Error::InvalidParameter(
            "SW-SGD requires a sliding-window estimator".into(),
        )),
        _ => estimator.validate_for(problem),
    }
}

/// Runs `K` steps from `theta0`, recording `‖θ_k − θ*‖²` every stride.
pub fn run(
    config: &OptimizerConfig,
    problem: &Problem,
    estimator: &EstimatorKind,
    stream: RngStreamSpec,
) -> Result<Trajectory> {
    check_pairing(config, problem, estimator)?;
    check_iterate(&config.theta0, 0)?;

    let mut rng = derive_stream(stream);
    let theta_star = problem.theta_star();
    let indices = config.recorded_indices();
    let mut sq_errors = Vec::with_capacity(indices.len());
    let mut iterates = config.record_iterates.then(|| Vec::with_capacity(indices.len()));
    let mut log = config.retain_estimates.then(|| EstimateLog {
        iterates: Vec::with_capacity(config.iterations + 1),
        raw: Vec::with_capacity(config.iterations),
    });
    let mut norms = config.track_norms.then(|| Vec::with_capacity(config.iterations));
    let mut snapshot = None;
    let mut buffer = WindowBuffer::new(estimator.window_size())?;
    let raw_kind = estimator.raw_kind();

    let mut theta = config.theta0.clone();
    let mut next_record = 0;
    for k in 0..=config.iterations {
        if indices.get(next_record) == Some(&k) {
            sq_errors.push(theta.squared_distance(&theta_star));
            if let Some(it) = iterates.as_mut() {
                it.push(theta.clone());
            }
            next_record += 1;
        }
        if let Some(log) = log.as_mut() {
            log.iterates.push(theta.clone());
        }
        if k == config.iterations {
            break;
        }

        let step = config.gain.at(k);
        let (raw, direction) = match config.algorithm {
            Algorithm::Gd => {
                let g = problem.true_gradient(&theta)?;
                (g.clone(), g)
            }
            Algorithm::Sgd => {
                let draw = raw_draw(raw_kind, problem, &theta, k, &mut rng)?;
                (draw.value.clone(), draw.value)
            }
            Algorithm::SwSgd => {
                let draw = raw_draw(raw_kind, problem, &theta, k, &mut rng)?;
                let dir = sw_estimate(&mut buffer, draw.value.clone())?;
                (draw.value, dir)
            }
        };
        if config.snapshot_at == Some(k) {
            snapshot = Some(Snapshot {
                k,
                theta: theta.clone(),
                raw: raw.clone(),
            });
        }
        if let Some(norms) = norms.as_mut() {
            norms.push(direction.norm());
        }
        if let Some(log) = log.as_mut() {
            log.raw.push(raw);
        }
        theta = apply(&theta, &direction, step);
        check_iterate(&theta, k + 1)?;
    }

    Ok(Trajectory {
        indices,
        sq_errors,
        iterates,
        final_iterate: theta,
        estimates: log,
        direction_norms: norms,
        snapshot,
    })
}
