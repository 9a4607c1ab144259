//! The three built-in experiments.
//!
//! Parameters the original experiments leave open are fixed here:
//!
//! * `fig2_1`: one-dimensional example, `θ_0 = 7`, `α = 0.501`, `K = 10⁴`,
//!   `σ ∈ {50, 200, 240, 300}`, `a = 0.02` for every σ. The larger
//!   `a = 250/σ` makes most score-function replications diverge.
//! * `fig4_1`: quadratic, `p = 2`, centre `0`, `θ_0 = (1, 1)`, `a = 0.05`,
//!   `α = 0.501`, `K = 10⁴`, offset `b = (1, 1)` with `r_b = 10` against
//!   pathwise with `r_u ∈ {50, 100, 500, 1000}`. `C` is taken in closed form
//!   at `θ_0`; at either limit the multiplicative noise vanishes.
//! * `fig4_2`: skewed quartic, `p = 3`, `θ_0 = (10, 10, 10)`, `a = 0.02`,
//!   `α = 0.501`, `K = 10⁴`, `r ∈ {1, 2, 4, 8}`, SGD against SW-SGD (t = 2).

use crate::error::{Error, Result};
use crate::estimators::EstimatorKind;
use crate::fabian::MuForm;
use crate::noise::NoiseModel;
use crate::optimizers::Algorithm;
use crate::params::{GainSequence, ParamVector};
use crate::problems::{Problem, QuadraticProblem, SimpleExample1D, SkewedQuartic};

use super::{ArmSpec, CPolicy, CReference, ExperimentSpec, IntersectionRequest};

pub const QUICK_REPLICATIONS: usize = 200;
pub const PRESET_ITERATIONS: usize = 10_000;
pub const PRESET_ALPHA: f64 = 0.501;

pub const FIG2_1_SIGMAS: [f64; 4] = [50.0, 200.0, 240.0, 300.0];
pub const FIG2_1_A: f64 = 0.02;
pub const FIG2_1_THETA0: f64 = 7.0;

pub const FIG4_1_R_U: [f64; 4] = [50.0, 100.0, 500.0, 1000.0];
pub const FIG4_1_R_B: f64 = 10.0;
pub const FIG4_1_A: f64 = 0.05;

pub const FIG4_2_R: [f64; 4] = [1.0, 2.0, 4.0, 8.0];
pub const FIG4_2_A: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Fig2_1,
    Fig4_1,
    Fig4_2,
}

impl Preset {
    /// Accepts `fig2.1` and `fig2_1` spellings.
    pub fn parse(name: &str) -> Result<Preset> {
        match name.replace('.', "_").as_str() {
            "fig2_1" => Ok(Preset::Fig2_1),
            "fig4_1" => Ok(Preset::Fig4_1),
            "fig4_2" => Ok(Preset::Fig4_2),
            _ => Err(Error::UnknownPreset(name.to_string())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Preset::Fig2_1 => "fig2_1",
            Preset::Fig4_1 => "fig4_1",
            Preset::Fig4_2 => "fig4_2",
        }
    }

    /// Replication count of the original experiment.
    pub fn full_replications(&self) -> usize {
        match self {
            Preset::Fig4_1 => 10_000,
            _ => 1_000,
        }
    }

    pub fn experiments(&self, replications: usize, master_seed: u64) -> Vec<ExperimentSpec> {
        match self {
            Preset::Fig2_1 => FIG2_1_SIGMAS
                .iter()
                .map(|&s| fig2_1(s, replications, master_seed))
                .collect(),
            Preset::Fig4_1 => FIG4_1_R_U
                .iter()
                .map(|&r| fig4_1(r, replications, master_seed))
                .collect(),
            Preset::Fig4_2 => FIG4_2_R
                .iter()
                .map(|&r| fig4_2(r, replications, master_seed))
                .collect(),
        }
    }
}

fn gain(a: f64) -> GainSequence {
    GainSequence::new(a, PRESET_ALPHA).expect("preset gains are admissible")
}

fn pv(v: &[f64]) -> ParamVector {
    ParamVector::from_slice(v).expect("preset vectors are finite")
}

/// Biased pathwise arm first, so its streams do not depend on σ.
pub fn fig2_1(sigma: f64, replications: usize, master_seed: u64) -> ExperimentSpec {
    ExperimentSpec {
        name: format!("fig2_1_sigma{sigma}"),
        problem: Problem::Simple(SimpleExample1D::new(sigma).expect("preset sigma is positive")),
        theta0: pv(&[FIG2_1_THETA0]),
        gain: gain(FIG2_1_A),
        iterations: PRESET_ITERATIONS,
        stride: 1,
        replications,
        master_seed,
        arms: vec![
            ArmSpec::new("biased", Algorithm::Sgd, EstimatorKind::Pathwise),
            ArmSpec::new("unbiased", Algorithm::Sgd, EstimatorKind::ScoreFunctionUnbiased),
        ],
        intersection: None,
    }
}

pub fn fig4_1(r_u: f64, replications: usize, master_seed: u64) -> ExperimentSpec {
    let problem = Problem::Quadratic(
        QuadraticProblem::new(
            ParamVector::zeros(2),
            NoiseModel::GaussianMultiplicative { r: r_u },
        )
        .expect("preset quadratic is valid"),
    );
    ExperimentSpec {
        name: format!("fig4_1_ru{r_u}"),
        problem,
        theta0: pv(&[1.0, 1.0]),
        gain: gain(FIG4_1_A),
        iterations: PRESET_ITERATIONS,
        stride: 1,
        replications,
        master_seed,
        arms: vec![
            ArmSpec::new(
                "biased",
                Algorithm::Sgd,
                EstimatorKind::OffsetBiased { b: pv(&[1.0, 1.0]) },
            )
            .with_noise(NoiseModel::GaussianMultiplicative { r: FIG4_1_R_B }),
            ArmSpec::new("unbiased", Algorithm::Sgd, EstimatorKind::Pathwise)
                .with_noise(NoiseModel::GaussianMultiplicative { r: r_u }),
        ],
        intersection: Some(IntersectionRequest {
            unbiased: "unbiased".into(),
            biased: "biased".into(),
            policy: CPolicy::ClosedForm {
                reference: CReference::Initial,
            },
            mu_form: MuForm::Literal,
        }),
    }
}

pub fn fig4_2(r: f64, replications: usize, master_seed: u64) -> ExperimentSpec {
    let problem = Problem::Quartic(
        SkewedQuartic::new(3, NoiseModel::GaussianMultiplicative { r })
            .expect("preset quartic is valid"),
    );
    ExperimentSpec {
        name: format!("fig4_2_r{r}"),
        problem,
        theta0: pv(&[10.0, 10.0, 10.0]),
        gain: gain(FIG4_2_A),
        iterations: PRESET_ITERATIONS,
        stride: 1,
        replications,
        master_seed,
        arms: vec![
            ArmSpec::new("sgd", Algorithm::Sgd, EstimatorKind::Pathwise),
            ArmSpec::new(
                "swsgd",
                Algorithm::SwSgd,
                EstimatorKind::sliding_window(2, EstimatorKind::Pathwise)
                    .expect("t = 2 is a valid window"),
            ),
        ],
        intersection: None,
    }
}

/// Quadratic SGD with additive gradient noise `N(0, c·I)`, whose `C = c·I`
/// is constant. Used to check the asymptotic-normality MSE prediction,
/// not to reproduce an experiment.
pub fn additive_validation(
    p: usize,
    c: f64,
    a: f64,
    theta0: ParamVector,
    replications: usize,
    master_seed: u64,
) -> Result<ExperimentSpec> {
    let problem = Problem::Quadratic(QuadraticProblem::new(
        ParamVector::zeros(p),
        NoiseModel::Additive { c },
    )?);
    let spec = ExperimentSpec {
        name: format!("additive_c{c}"),
        problem,
        theta0,
        gain: GainSequence::new(a, PRESET_ALPHA)?,
        iterations: PRESET_ITERATIONS,
        stride: 1,
        replications,
        master_seed,
        arms: vec![ArmSpec::new("unbiased", Algorithm::Sgd, EstimatorKind::Pathwise)],
        intersection: None,
    };
    spec.validate()?;
    Ok(spec)
}
