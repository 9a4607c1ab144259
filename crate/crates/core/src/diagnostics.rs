//! Finite-run evidence for the convergence conditions of SW-SGD.
//!
//! Condition 1: `sup_k E‖ĝ_SW(θ_k, θ_{k−1})‖ < ∞` (monitored).
//! Condition 2: `g` continuous (structural).
//! Condition 3: `a > 0`, `α ∈ (0.5, 1]` (decidable).
//! Condition 4: `Σ a_k‖β_k‖ < ∞` a.s. (monitored).

use std::fmt;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::sw_bias_t2;
use crate::linalg::{ensure_symmetric, symmetric_eigen};
use crate::optimizers::Trajectory;
use crate::params::{gain_is_admissible, GainSequence};
use crate::problems::Problem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionStatus {
    Pass,
    Fail,
    Monitored,
}

impl fmt::Display for ConditionStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConditionStatus::Pass => "pass",
            ConditionStatus::Fail => "fail",
            ConditionStatus::Monitored => "monitored",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub condition: u8,
    pub status: ConditionStatus,
    pub evidence: f64,
    pub note: String,
}

pub fn validate_gain(a: f64, alpha: f64) -> ConditionReport {
    let ok = gain_is_admissible(a, alpha);
    ConditionReport {
        condition: 3,
        status: if ok { ConditionStatus::Pass } else { ConditionStatus::Fail },
        evidence: alpha,
        note: if ok {
            format!("a = {a}, alpha = {alpha} in (0.5, 1]")
        } else {
            format!("a = {a}, alpha = {alpha}: need a > 0 and alpha in (0.5, 1]")
        },
    }
}

pub fn continuity_report(problem: &Problem) -> ConditionReport {
    ConditionReport {
        condition: 2,
        status: ConditionStatus::Pass,
        evidence: 0.0,
        note: format!("{} problem has a polynomial (continuous) gradient", problem.name()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasPartialSums {
    /// `S_n = Σ_{i≤n} a_i‖β_i‖`, one entry per step.
    pub sums: Vec<f64>,
    pub plateau: bool,
    pub report: ConditionReport,
}

/// Partial sums of `a_k‖β_k‖` along an SW-SGD (t = 2) trajectory.
/// `β_0 = 0`: the first window holds only the fresh draw.
pub fn bias_partial_sums(
    trajectory: &Trajectory,
    problem: &Problem,
    gain: &GainSequence,
) -> Result<BiasPartialSums> {
    let log = trajectory
        .estimates
        .as_ref()
        .ok_or_else(|| Error::MissingData("bias partial sums need retained raw estimates".into()))?;
    let steps = log.raw.len();
    if log.iterates.len() < steps {
        return Err(Error::MissingData("estimate log has fewer iterates than steps".into()));
    }

    let mut sums = Vec::with_capacity(steps);
    let mut acc = 0.0;
    for k in 0..steps {
        if k > 0 {
            let beta = sw_bias_t2(problem, &log.iterates[k], &log.iterates[k - 1], &log.raw[k - 1])?;
            acc += gain.at(k) * beta.norm();
        }
        sums.push(acc);
    }

    let last = sums.last().copied().unwrap_or(0.0);
    let half = sums.get(steps / 2).copied().unwrap_or(0.0);
    let plateau = last - half <= 0.01 * last;
    let note = if plateau {
        "monitored: plateauing".to_string()
    } else {
        format!("monitored: still growing (S_K - S_K/2 = {:.3e})", last - half)
    };
    Ok(BiasPartialSums {
        sums,
        plateau,
        report: ConditionReport {
            condition: 4,
            status: ConditionStatus::Monitored,
            evidence: last,
            note,
        },
    })
}

/// Lipschitz constant `2‖A‖₂` of the gradient `2Aθ`.
pub fn lipschitz_quadratic(a: &DMatrix<f64>) -> Result<f64> {
    ensure_symmetric(a, 1e-10)?;
    let (values, _) = symmetric_eigen(a);
    Ok(2.0 * values.iter().fold(0.0f64, |m, v| m.max(v.abs())))
}

/// Max over k of the across-replication mean update-direction norm.
pub fn boundedness_monitor(trajectories: &[Trajectory]) -> Result<ConditionReport> {
    let norms: Vec<&[f64]> = trajectories
        .iter()
        .map(|t| {
            t.direction_norms
                .as_deref()
                .ok_or_else(|| Error::MissingData("boundedness monitor needs per-step direction norms".into()))
        })
        .collect::<Result<_>>()?;
    boundedness_from_norms(&norms)
}

/// Same as [`boundedness_monitor`] over bare per-step norm sequences.
pub fn boundedness_from_norms(norms: &[&[f64]]) -> Result<ConditionReport> {
    if norms.is_empty() {
        return Err(Error::MissingData("boundedness monitor needs at least one replication".into()));
    }
    let steps = norms.iter().map(|n| n.len()).min().unwrap_or(0);
    let mut sup: f64 = 0.0;
    for k in 0..steps {
        let mean = norms.iter().map(|n| n[k]).sum::<f64>() / norms.len() as f64;
        sup = sup.max(mean);
    }
    Ok(ConditionReport {
        condition: 1,
        status: ConditionStatus::Monitored,
        evidence: sup,
        note: format!(
            "max over {steps} steps of the mean direction norm across {} replications",
            norms.len()
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::EstimatorKind;
    use crate::noise::NoiseModel;
    use crate::optimizers::{run, Algorithm, OptimizerConfig};
    use crate::params::ParamVector;
    use crate::problems::{QuadraticProblem, SkewedQuartic};
    use crate::stream::RngStreamSpec;

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::from_slice(v).unwrap()
    }

    #[test]
    fn gain_examples() {
        assert_eq!(validate_gain(5.0, 0.501).status, ConditionStatus::Pass);
        assert_eq!(validate_gain(5.0, 0.5).status, ConditionStatus::Fail);
        assert_eq!(validate_gain(5.0, 1.0).status, ConditionStatus::Pass);
        assert_eq!(validate_gain(0.0, 0.8).status, ConditionStatus::Fail);
        assert_eq!(validate_gain(1.0, 1.0).condition, 3);
    }

    #[test]
    fn lipschitz_examples() {
        assert_eq!(lipschitz_quadratic(&DMatrix::identity(3, 3)).unwrap(), 2.0);
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 1.0]));
        assert!((lipschitz_quadratic(&d).unwrap() - 6.0).abs() < 1e-14);
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 1.0]);
        assert!(matches!(lipschitz_quadratic(&asym), Err(Error::Asymmetric { .. })));
    }

    #[test]
    fn lipschitz_matches_power_iteration() {
        let b = SkewedQuartic::new(3, NoiseModel::GaussianMultiplicative { r: 0.0 })
            .unwrap()
            .b_matrix();
        let btb = b.transpose() * &b;
        let mut v = nalgebra::DVector::from_element(3, 1.0);
        let mut lambda = 0.0;
        for _ in 0..500 {
            let w = &btb * &v;
            lambda = w.norm() / v.norm();
            v = w.normalize();
        }
        assert!((lipschitz_quadratic(&btb).unwrap() - 2.0 * lambda).abs() < 1e-12);
    }

    fn fixed_point_run() -> (Problem, Trajectory, GainSequence) {
        let center = pv(&[1.0, -2.0]);
        let problem = Problem::Quadratic(
            QuadraticProblem::new(center.clone(), NoiseModel::GaussianMultiplicative { r: 1.0 }).unwrap(),
        );
        let gain = GainSequence::new(0.1, 0.8).unwrap();
        let cfg = OptimizerConfig::new(Algorithm::SwSgd, gain, center, 50).with_estimates();
        let est = EstimatorKind::sliding_window(2, EstimatorKind::Pathwise).unwrap();
        let traj = run(&cfg, &problem, &est, RngStreamSpec::new(1, 0)).unwrap();
        (problem, traj, gain)
    }

    #[test]
    fn zero_bias_at_fixed_point() {
        let (problem, traj, gain) = fixed_point_run();
        let out = bias_partial_sums(&traj, &problem, &gain).unwrap();
        assert_eq!(out.sums.len(), 50);
        assert!(out.sums.iter().all(|&s| s == 0.0));
        assert!(out.plateau);
        assert_eq!(out.report.status, ConditionStatus::Monitored);
    }

    #[test]
    fn partial_sums_need_estimates() {
        let (problem, mut traj, gain) = fixed_point_run();
        traj.estimates = None;
        assert!(matches!(
            bias_partial_sums(&traj, &problem, &gain),
            Err(Error::MissingData(_))
        ));
        assert!(boundedness_monitor(&[traj]).is_err());
    }

    #[test]
    fn boundedness_without_noise_is_gradient_sup() {
        let problem = Problem::Quadratic(
            QuadraticProblem::new(pv(&[0.0, 0.0]), NoiseModel::GaussianMultiplicative { r: 0.0 }).unwrap(),
        );
        let gain = GainSequence::new(0.2, 0.7).unwrap();
        let cfg = OptimizerConfig::new(Algorithm::Sgd, gain, pv(&[3.0, 4.0]), 20)
            .with_estimates()
            .with_norms();
        let traj = run(&cfg, &problem, &EstimatorKind::Pathwise, RngStreamSpec::new(0, 0)).unwrap();
        let log = traj.estimates.as_ref().unwrap();
        let expected = log.iterates[..20]
            .iter()
            .map(|th| problem.true_gradient(th).unwrap().norm())
            .fold(0.0f64, f64::max);
        let report = boundedness_monitor(std::slice::from_ref(&traj)).unwrap();
        assert_eq!(report.evidence, expected);
        assert_eq!(expected, 10.0);
    }
}
