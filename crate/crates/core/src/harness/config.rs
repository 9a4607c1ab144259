//! Line-oriented experiment configuration.
//!
//! ```text
//! # comment
//! name = quad
//! problem = quadratic        # simple | quadratic | quartic
//! p = 2
//! noise = gaussian           # gaussian | truncated | decaying | additive
//! r = 10
//! theta0 = 1, 1
//! a = 0.05
//! alpha = 0.501
//! iterations = 10000
//!
//! [arm]
//! label = sgd
//! estimator = pathwise       # pathwise | score | offset
//! ```
//!
//! [`to_config_text`] writes the canonical form, which parses back to the
//! same [`ExperimentSpec`].

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::estimators::EstimatorKind;
use crate::fabian::MuForm;
use crate::noise::{NoiseModel, DEFAULT_TRUNCATION};
use crate::optimizers::Algorithm;
use crate::params::{GainSequence, ParamVector};
use crate::problems::{Problem, QuadraticProblem, ScoreWeight, SimpleExample1D, SkewedQuartic};

use super::{ArmSpec, CPolicy, CReference, ExperimentSpec, IntersectionRequest};

const TOP_KEYS: &[&str] = &[
    "name", "problem", "p", "center", "sigma", "score_weight", "noise", "r", "c", "gamma", "r_u",
    "r_b", "theta0", "a", "alpha", "iterations", "reps", "seed", "stride", "intersect", "c_policy",
    "c_reference", "c_samples", "c_k_ref", "mu_form", "out_dir",
];
const ARM_KEYS: &[&str] = &[
    "label", "algorithm", "estimator", "b", "t", "noise", "r", "c", "gamma", "sigma",
];
const NOISE_KEYS: &[&str] = &["noise", "r", "c", "gamma", "sigma"];
const DEFAULT_C_SAMPLES: usize = 100_000;

/// A parsed config: the experiment plus settings that do not affect results.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedConfig {
    pub spec: ExperimentSpec,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Default)]
struct Section {
    header_line: usize,
    entries: BTreeMap<String, (usize, String)>,
}

impl Section {
    fn get(&self, key: &str) -> Option<(usize, &str)> {
        self.entries.get(key).map(|(l, v)| (*l, v.as_str()))
    }

    fn has(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    fn require(&self, key: &str, what: &str) -> Result<(usize, &str)> {
        self.get(key).ok_or_else(|| Error::Config {
            line: self.header_line,
            message: format!("missing required key `{key}` in {what}"),
        })
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some((line, raw)) => raw.parse().map(Some).map_err(|_| Error::Config {
                line,
                message: format!("cannot parse `{key} = {raw}`"),
            }),
        }
    }

    fn parse_required<T: std::str::FromStr>(&self, key: &str, what: &str) -> Result<T> {
        self.require(key, what)?;
        Ok(self.parse(key)?.expect("checked above"))
    }

    fn vector(&self, key: &str) -> Result<Option<ParamVector>> {
        match self.get(key) {
            None => Ok(None),
            Some((line, raw)) => {
                let entries = raw
                    .split(',')
                    .map(|x| x.trim().parse::<f64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| Error::Config {
                        line,
                        message: format!("`{key}` must be a comma-separated list of numbers"),
                    })?;
                ParamVector::new(entries).map(Some).map_err(|e| Error::Config {
                    line,
                    message: format!("`{key}`: {e}"),
                })
            }
        }
    }
}

fn split_sections(text: &str) -> Result<(Section, Vec<Section>)> {
    let mut top = Section::default();
    let mut arms: Vec<Section> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if content.starts_with('[') {
            if content != "[arm]" {
                return Err(Error::Config {
                    line,
                    message: format!("unknown section {content}; only [arm] is recognised"),
                });
            }
            arms.push(Section {
                header_line: line,
                ..Section::default()
            });
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| Error::Config {
            line,
            message: format!("expected `key = value`, got `{content}`"),
        })?;
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        let (section, allowed, where_) = match arms.last_mut() {
            Some(arm) => (arm, ARM_KEYS, "an [arm] section"),
            None => (&mut top, TOP_KEYS, "the top level"),
        };
        if !allowed.contains(&key.as_str()) {
            return Err(Error::Config {
                line,
                message: format!("unknown key `{key}` in {where_}"),
            });
        }
        if value.is_empty() {
            return Err(Error::Config {
                line,
                message: format!("empty value for `{key}`"),
            });
        }
        if section.entries.insert(key.clone(), (line, value)).is_some() {
            return Err(Error::Config {
                line,
                message: format!("duplicate key `{key}`"),
            });
        }
    }
    Ok((top, arms))
}

fn at_line<T>(line: usize, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Config { .. } => e,
        other => Error::Config {
            line,
            message: other.to_string(),
        },
    })
}

/// Builds a vector-problem noise model from `noise`, `r`, `c`, `gamma`,
/// reading each key from `primary` first and `fallback` second.
fn vector_noise(primary: &Section, fallback: &Section, r_override: Option<f64>) -> Result<NoiseModel> {
    let pick = |key: &str| -> Result<Option<f64>> {
        match primary.parse::<f64>(key)? {
            Some(v) => Ok(Some(v)),
            None => fallback.parse::<f64>(key),
        }
    };
    let (line, kind) = primary
        .get("noise")
        .or_else(|| fallback.get("noise"))
        .unwrap_or((primary.header_line, "gaussian"));
    let r = match primary.parse::<f64>("r")? {
        Some(r) => Some(r),
        None => r_override.map(Some).unwrap_or(fallback.parse::<f64>("r")?),
    };
    let need_r = || {
        r.ok_or_else(|| Error::Config {
            line,
            message: format!("noise `{kind}` needs `r`"),
        })
    };
    let model = match kind {
        "gaussian" => NoiseModel::GaussianMultiplicative { r: need_r()? },
        "truncated" => NoiseModel::TruncatedGaussianMultiplicative {
            r: need_r()?,
            c: pick("c")?.unwrap_or(DEFAULT_TRUNCATION),
        },
        "decaying" => NoiseModel::Decaying {
            gamma: pick("gamma")?.ok_or_else(|| Error::Config {
                line,
                message: "noise `decaying` needs `gamma`".into(),
            })?,
            r: need_r()?,
            c: pick("c")?.unwrap_or(DEFAULT_TRUNCATION),
        },
        "additive" => NoiseModel::Additive {
            c: pick("c")?.ok_or_else(|| Error::Config {
                line,
                message: "noise `additive` needs `c`".into(),
            })?,
        },
        other => {
            return Err(Error::Config {
                line,
                message: format!("unknown noise `{other}` (gaussian, truncated, decaying, additive)"),
            })
        }
    };
    at_line(line, model.validate())?;
    Ok(model)
}

fn build_problem(top: &Section) -> Result<Problem> {
    let (line, kind) = top.require("problem", "the top level")?;
    let p: Option<usize> = top.parse("p")?;
    match kind {
        "simple" => {
            if let Some(p) = p.filter(|&p| p != 1) {
                return Err(Error::Config {
                    line: top.get("p").map(|(l, _)| l).unwrap_or(line),
                    message: format!("the simple problem is one-dimensional, got p = {p}"),
                });
            }
            let sigma: f64 = top.parse_required("sigma", "a simple-problem config")?;
            let weight = match top.get("score_weight") {
                None | Some((_, "noisy_loss")) => ScoreWeight::NoisyLoss,
                Some((_, "printed")) => ScoreWeight::Printed,
                Some((l, other)) => {
                    return Err(Error::Config {
                        line: l,
                        message: format!("unknown score_weight `{other}` (noisy_loss, printed)"),
                    })
                }
            };
            let s = at_line(line, SimpleExample1D::new(sigma))?.with_score_weight(weight);
            Ok(Problem::Simple(s))
        }
        "quadratic" | "quartic" => {
            let center = top.vector("center")?;
            let p = match (p, &center, top.vector("theta0")?) {
                (Some(p), _, _) => p,
                (None, Some(c), _) => c.dim(),
                (None, None, Some(t)) => t.dim(),
                (None, None, None) => {
                    return Err(Error::Config {
                        line,
                        message: "cannot infer the dimension; set `p`".into(),
                    })
                }
            };
            let shared_r: Option<f64> = match top.parse("r_u")? {
                Some(r) => Some(r),
                None => top.parse("r_b")?,
            };
            let noise = vector_noise(top, &Section::default(), shared_r)?;
            if kind == "quadratic" {
                let center = center.unwrap_or_else(|| ParamVector::zeros(p));
                if center.dim() != p {
                    return Err(Error::Config {
                        line: top.get("center").map(|(l, _)| l).unwrap_or(line),
                        message: format!("center has {} entries but p = {p}", center.dim()),
                    });
                }
                Ok(Problem::Quadratic(at_line(line, QuadraticProblem::new(center, noise))?))
            } else {
                if top.has("center") {
                    return Err(Error::Config {
                        line: top.get("center").map(|(l, _)| l).unwrap_or(line),
                        message: "the quartic problem has no `center`".into(),
                    });
                }
                Ok(Problem::Quartic(at_line(line, SkewedQuartic::new(p, noise))?))
            }
        }
        other => Err(Error::Config {
            line,
            message: format!("unknown problem `{other}` (simple, quadratic, quartic)"),
        }),
    }
}

fn build_arm(section: &Section, top: &Section, problem: &Problem) -> Result<ArmSpec> {
    let (_, label) = section.require("label", "an [arm] section")?;
    let raw = match section.get("estimator").unwrap_or((section.header_line, "pathwise")) {
        (_, "pathwise") => EstimatorKind::Pathwise,
        (_, "score") => EstimatorKind::ScoreFunctionUnbiased,
        (line, "offset") => EstimatorKind::OffsetBiased {
            b: section.vector("b")?.ok_or_else(|| Error::Config {
                line,
                message: "estimator `offset` needs `b`".into(),
            })?,
        },
        (line, other) => {
            return Err(Error::Config {
                line,
                message: format!("unknown estimator `{other}` (pathwise, score, offset)"),
            })
        }
    };
    if section.has("b") && !matches!(raw, EstimatorKind::OffsetBiased { .. }) {
        return Err(Error::Config {
            line: section.get("b").map(|(l, _)| l).unwrap_or(0),
            message: "`b` only applies to the offset estimator".into(),
        });
    }
    let t: Option<usize> = section.parse("t")?;
    let algorithm = match section.get("algorithm") {
        None if t.is_some() => Algorithm::SwSgd,
        None | Some((_, "sgd")) => Algorithm::Sgd,
        Some((_, "swsgd")) => Algorithm::SwSgd,
        Some((_, "gd")) => Algorithm::Gd,
        Some((line, other)) => {
            return Err(Error::Config {
                line,
                message: format!("unknown algorithm `{other}` (gd, sgd, swsgd)"),
            })
        }
    };
    let estimator = match algorithm {
        Algorithm::SwSgd => at_line(
            section.header_line,
            EstimatorKind::sliding_window(t.unwrap_or(2), raw),
        )?,
        _ if t.is_some() => {
            return Err(Error::Config {
                line: section.get("t").map(|(l, _)| l).unwrap_or(0),
                message: "`t` only applies to algorithm swsgd".into(),
            })
        }
        _ => raw,
    };

    let offset = matches!(estimator.raw_kind(), EstimatorKind::OffsetBiased { .. });
    let r_shared: Option<f64> = if offset { top.parse("r_b")? } else { top.parse("r_u")? };
    let overrides = NOISE_KEYS.iter().any(|k| section.has(k)) || r_shared.is_some();
    let noise = match problem {
        _ if !overrides => None,
        Problem::Simple(_) => {
            if let Some(key) = ["noise", "r", "c", "gamma"].iter().find(|k| section.has(k)) {
                return Err(Error::Config {
                    line: section.get(key).map(|(l, _)| l).unwrap_or(0),
                    message: format!("`{key}` does not apply to the simple problem; use `sigma`"),
                });
            }
            match section.parse::<f64>("sigma")? {
                Some(sigma) => {
                    let model = NoiseModel::SimpleExample { sigma };
                    at_line(section.header_line, model.validate())?;
                    Some(model)
                }
                None => None,
            }
        }
        _ => {
            if section.has("sigma") {
                return Err(Error::Config {
                    line: section.get("sigma").map(|(l, _)| l).unwrap_or(0),
                    message: "`sigma` only applies to the simple problem".into(),
                });
            }
            Some(vector_noise(section, top, r_shared)?)
        }
    };
    Ok(ArmSpec {
        label: label.to_string(),
        algorithm,
        estimator,
        noise,
    })
}

fn build_intersection(top: &Section) -> Result<Option<IntersectionRequest>> {
    let Some((line, value)) = top.get("intersect") else {
        for key in ["c_policy", "c_reference", "c_samples", "c_k_ref", "mu_form"] {
            if let Some((l, _)) = top.get(key) {
                return Err(Error::Config {
                    line: l,
                    message: format!("`{key}` needs `intersect = <unbiased label>, <biased label>`"),
                });
            }
        }
        return Ok(None);
    };
    let labels: Vec<&str> = value.split(',').map(str::trim).collect();
    let [unbiased, biased] = labels.as_slice() else {
        return Err(Error::Config {
            line,
            message: "`intersect` takes two arm labels: <unbiased>, <biased>".into(),
        });
    };
    let reference = match top.get("c_reference") {
        None | Some((_, "limits")) => CReference::Limits,
        Some((_, "initial")) => CReference::Initial,
        Some((l, other)) => {
            return Err(Error::Config {
                line: l,
                message: format!("unknown c_reference `{other}` (limits, initial)"),
            })
        }
    };
    let policy = match top.get("c_policy") {
        None | Some((_, "closed_form")) => CPolicy::ClosedForm { reference },
        Some((_, "sampled")) => CPolicy::Sampled {
            reference,
            samples: top.parse("c_samples")?.unwrap_or(DEFAULT_C_SAMPLES),
        },
        Some((l, "trajectory")) => CPolicy::Trajectory {
            k_ref: top.parse("c_k_ref")?.ok_or_else(|| Error::Config {
                line: l,
                message: "c_policy `trajectory` needs `c_k_ref`".into(),
            })?,
        },
        Some((l, other)) => {
            return Err(Error::Config {
                line: l,
                message: format!("unknown c_policy `{other}` (closed_form, sampled, trajectory)"),
            })
        }
    };
    let mu_form = match top.get("mu_form") {
        None | Some((_, "literal")) => MuForm::Literal,
        Some((_, "inverse")) => MuForm::Inverse,
        Some((l, other)) => {
            return Err(Error::Config {
                line: l,
                message: format!("unknown mu_form `{other}` (literal, inverse)"),
            })
        }
    };
    Ok(Some(IntersectionRequest {
        unbiased: unbiased.to_string(),
        biased: biased.to_string(),
        policy,
        mu_form,
    }))
}

pub fn parse_config(text: &str) -> Result<ParsedConfig> {
    let (top, arm_sections) = split_sections(text)?;
    let problem = build_problem(&top)?;
    let theta0 = top.vector("theta0")?.ok_or_else(|| Error::Config {
        line: 0,
        message: "missing required key `theta0` in the top level".into(),
    })?;
    let a: f64 = top.parse_required("a", "the top level")?;
    let alpha: f64 = top.parse_required("alpha", "the top level")?;
    let gain_line = top.get("alpha").map(|(l, _)| l).unwrap_or(0);
    let gain = at_line(gain_line, GainSequence::new(a, alpha))?;
    if arm_sections.is_empty() {
        return Err(Error::Config {
            line: 0,
            message: "at least one [arm] section is required".into(),
        });
    }
    let arms = arm_sections
        .iter()
        .map(|s| build_arm(s, &top, &problem))
        .collect::<Result<Vec<_>>>()?;

    let spec = ExperimentSpec {
        name: top.get("name").map(|(_, v)| v.to_string()).unwrap_or_else(|| "experiment".into()),
        problem,
        theta0,
        gain,
        iterations: top.parse_required("iterations", "the top level")?,
        stride: top.parse("stride")?.unwrap_or(1),
        replications: top.parse("reps")?.unwrap_or(super::presets::QUICK_REPLICATIONS),
        master_seed: top.parse("seed")?.unwrap_or(0),
        arms,
        intersection: build_intersection(&top)?,
    };
    at_line(0, spec.validate())?;
    Ok(ParsedConfig {
        spec,
        out_dir: top.get("out_dir").map(|(_, v)| PathBuf::from(v)),
    })
}

fn join(v: &ParamVector) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

fn write_vector_noise(out: &mut String, noise: &NoiseModel) {
    let _ = match *noise {
        NoiseModel::GaussianMultiplicative { r } => writeln!(out, "noise = gaussian\nr = {r}"),
        NoiseModel::TruncatedGaussianMultiplicative { r, c } => {
            writeln!(out, "noise = truncated\nr = {r}\nc = {c}")
        }
        NoiseModel::Decaying { gamma, r, c } => {
            writeln!(out, "noise = decaying\ngamma = {gamma}\nr = {r}\nc = {c}")
        }
        NoiseModel::Additive { c } => writeln!(out, "noise = additive\nc = {c}"),
        NoiseModel::SimpleExample { sigma } => writeln!(out, "sigma = {sigma}"),
    };
}

/// Canonical config text for `spec`; `parse_config` reads it back unchanged.
pub fn to_config_text(spec: &ExperimentSpec) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "name = {}", spec.name);
    let _ = writeln!(out, "problem = {}", spec.problem.name());
    match &spec.problem {
        Problem::Simple(s) => {
            let _ = writeln!(out, "sigma = {}", s.sigma);
            let _ = writeln!(
                out,
                "score_weight = {}",
                match s.score_weight {
                    ScoreWeight::NoisyLoss => "noisy_loss",
                    ScoreWeight::Printed => "printed",
                }
            );
        }
        Problem::Quadratic(q) => {
            let _ = writeln!(out, "p = {}", q.center.dim());
            let _ = writeln!(out, "center = {}", join(&q.center));
            write_vector_noise(&mut out, &q.noise);
        }
        Problem::Quartic(q) => {
            let _ = writeln!(out, "p = {}", q.p);
            write_vector_noise(&mut out, &q.noise);
        }
    }
    let _ = writeln!(out, "theta0 = {}", join(&spec.theta0));
    let _ = writeln!(out, "a = {}", spec.gain.a());
    let _ = writeln!(out, "alpha = {}", spec.gain.alpha());
    let _ = writeln!(out, "iterations = {}", spec.iterations);
    let _ = writeln!(out, "stride = {}", spec.stride);
    let _ = writeln!(out, "reps = {}", spec.replications);
    let _ = writeln!(out, "seed = {}", spec.master_seed);
    if let Some(req) = &spec.intersection {
        let _ = writeln!(out, "intersect = {}, {}", req.unbiased, req.biased);
        let reference = |r: CReference| match r {
            CReference::Limits => "limits",
            CReference::Initial => "initial",
        };
        let _ = match req.policy {
            CPolicy::ClosedForm { reference: r } => {
                writeln!(out, "c_policy = closed_form\nc_reference = {}", reference(r))
            }
            CPolicy::Sampled { reference: r, samples } => writeln!(
                out,
                "c_policy = sampled\nc_reference = {}\nc_samples = {samples}",
                reference(r)
            ),
            CPolicy::Trajectory { k_ref } => {
                writeln!(out, "c_policy = trajectory\nc_k_ref = {k_ref}")
            }
        };
        let _ = writeln!(
            out,
            "mu_form = {}",
            match req.mu_form {
                MuForm::Literal => "literal",
                MuForm::Inverse => "inverse",
            }
        );
    }
    for arm in &spec.arms {
        let _ = writeln!(out, "\n[arm]\nlabel = {}", arm.label);
        let _ = writeln!(out, "algorithm = {}", arm.algorithm.as_str());
        let (raw, t) = match &arm.estimator {
            EstimatorKind::SlidingWindow { t, inner } => (inner.as_ref(), Some(*t)),
            other => (other, None),
        };
        let _ = match raw {
            EstimatorKind::Pathwise => writeln!(out, "estimator = pathwise"),
            EstimatorKind::ScoreFunctionUnbiased => writeln!(out, "estimator = score"),
            EstimatorKind::OffsetBiased { b } => writeln!(out, "estimator = offset\nb = {}", join(b)),
            EstimatorKind::SlidingWindow { .. } => Ok(()),
        };
        if let Some(t) = t {
            let _ = writeln!(out, "t = {t}");
        }
        if let Some(noise) = &arm.noise {
            write_vector_noise(&mut out, noise);
        }
    }
    out
}
