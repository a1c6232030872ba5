//! Scenario configuration: sectioned `key = value` files (TOML) describing
//! a problem, feasible set, algorithm, dither, exosystem, switching policy,
//! noise, and simulation parameters; cross-validated at load and buildable
//! into a runnable specification.

use crate::dither::{default_frequencies, parse_kappa, DitherBank};
use crate::dynamics::GainSet;
use crate::hybrid::{JumpTiming, SwitchAutomaton, TargetRule};
use crate::integrate::Integrator;
use crate::problems::{
    self, Exosystem, NoiseMode, NoiseSpec, NoiseTarget, Problem,
};
use crate::sets::FeasibleSet;
use crate::sim::{Algorithm, RunSpec, SimConfig};
use num::rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config serialize error: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Set(#[from] crate::sets::SetError),
    #[error(transparent)]
    Dither(#[from] crate::dither::DitherError),
    #[error(transparent)]
    Problem(#[from] crate::problems::ProblemError),
    #[error(transparent)]
    Hybrid(#[from] crate::hybrid::HybridError),
}

/// A frequency parameter in config: an integer or a `"p/q"` fraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KappaValue {
    Int(i64),
    Frac(String),
}

impl KappaValue {
    fn to_ratio(&self) -> Result<Ratio<i64>, ScenarioError> {
        match self {
            KappaValue::Int(i) => Ok(Ratio::from_integer(*i)),
            KappaValue::Frac(s) => parse_kappa(s)
                .ok_or_else(|| ScenarioError::Invalid(format!("bad kappa fraction `{s}`"))),
        }
    }
}

/// Shrink margin: a number, or `"auto"` for `eps_a * sqrt(n)` (the largest
/// Euclidean excursion the dither can take).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ShrinkValue {
    Margin(f64),
    Keyword(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constant: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_matrix: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_rhs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub minimizer: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub theta0: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetConfig {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feasible_point: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factors: Option<Vec<SetConfig>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shrink: Option<ShrinkValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_xi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DitherConfig {
    /// Omitted: the first `n` primes filtered for the frequency assumption.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<Vec<KappaValue>>,
    pub eps_omega: f64,
    pub eps_a: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phases: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExoConfig {
    /// `example1` (planar oscillation) or `rotation`.
    pub name: String,
    pub eps_theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimBlock {
    pub t_end: f64,
    pub step: f64,
    #[serde(default = "default_stride")]
    pub record_stride: usize,
    #[serde(default)]
    pub integrator: Integrator,
    #[serde(default = "default_true")]
    pub safety_guard: bool,
    #[serde(default)]
    pub exact_filter: bool,
    #[serde(default)]
    pub seed: u64,
}

fn default_stride() -> usize {
    100
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct InitConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub bound: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// `measurement` (default), `state`, or `both`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    /// `ball` (default) or `constant`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchingConfig {
    pub tau_d: f64,
    #[serde(default = "default_n0")]
    pub n0: f64,
    /// `eager` (default) or `lazy`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<String>,
    /// `cyclic` (default) or `random`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow_rate: Option<f64>,
    #[serde(default)]
    pub initial_mode: usize,
    #[serde(default)]
    pub tau0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lazy_chance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn default_n0() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    #[serde(default = "default_true")]
    pub write_svg: bool,
}

/// The full scenario document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub problem: ProblemConfig,
    pub set: SetConfig,
    pub algorithm: AlgorithmConfig,
    pub dither: DitherConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exosystem: Option<ExoConfig>,
    pub sim: SimBlock,
    #[serde(default)]
    pub init: InitConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub switching: Option<SwitchingConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> Result<String, ScenarioError> {
        Ok(toml::to_string_pretty(self)?)
    }

    /// Overrides one sweepable parameter.
    pub fn apply_sweep(&mut self, param: &str, value: f64) -> Result<(), ScenarioError> {
        match param {
            "eps_a" => self.dither.eps_a = value,
            "eps_omega" => self.dither.eps_omega = value,
            "eps_xi" => self.algorithm.eps_xi = Some(value),
            "eps_theta" => match &mut self.exosystem {
                Some(exo) => exo.eps_theta = value,
                None => {
                    return Err(ScenarioError::Invalid(
                        "eps_theta sweep requires an exosystem block".into(),
                    ))
                }
            },
            "tau_d" => match &mut self.switching {
                Some(sw) => sw.tau_d = value,
                None => {
                    return Err(ScenarioError::Invalid(
                        "tau_d sweep requires a switching block".into(),
                    ))
                }
            },
            other => {
                return Err(ScenarioError::Invalid(format!(
                    "unknown sweep parameter `{other}`; expected one of eps_a, eps_omega, eps_xi, eps_theta, tau_d"
                )))
            }
        }
        Ok(())
    }

    /// Materializes the scenario: constructs the problem, sets, bank,
    /// exosystem, and automaton, and cross-validates everything it can
    /// without integrating.
    pub fn build(&self, label: &str) -> Result<BuiltScenario, ScenarioError> {
        let base_set = build_set(&self.set)?;
        let algorithm = parse_algorithm(&self.algorithm.name)?;

        let gains = GainSet {
            k_x: self.algorithm.k_x.unwrap_or(1.0),
            alpha_x: self.algorithm.alpha_x.unwrap_or(0.1),
            k_lambda: self.algorithm.k_lambda.unwrap_or(1.0),
            alpha_lambda: self.algorithm.alpha_lambda.unwrap_or(0.1),
            eps_xi: self.algorithm.eps_xi.unwrap_or(0.05),
            eps_a: self.dither.eps_a,
            eps_omega: self.dither.eps_omega,
            lambda_max: self.algorithm.lambda_max.unwrap_or(1e6),
        };
        gains.validate().map_err(ScenarioError::Invalid)?;

        let problem = build_problem(&self.problem, &base_set)?;
        let n = problem.dim;
        if base_set.dim() != n {
            return Err(ScenarioError::Invalid(format!(
                "set dimension {} != problem dimension {n}",
                base_set.dim()
            )));
        }

        // Dither bank; frequency assumption checked at construction.
        let kappa = match &self.dither.kappa {
            Some(values) => values.iter().map(|v| v.to_ratio()).collect::<Result<Vec<_>, _>>()?,
            None => default_frequencies(n),
        };
        let bank = match &self.dither.phases {
            Some(ph) => DitherBank::with_phases(kappa, gains.eps_omega, gains.eps_a, ph)?,
            None => DitherBank::new(kappa, gains.eps_omega, gains.eps_a)?,
        };

        // Shrunk working set.
        let (working_set, base) = match &self.set.shrink {
            None => (base_set.clone(), None),
            Some(ShrinkValue::Margin(m)) => (base_set.shrink(*m)?, Some(base_set.clone())),
            Some(ShrinkValue::Keyword(kw)) if kw == "auto" => {
                let margin = gains.eps_a * (n as f64).sqrt();
                (base_set.shrink(margin)?, Some(base_set.clone()))
            }
            Some(ShrinkValue::Keyword(kw)) => {
                return Err(ScenarioError::Invalid(format!(
                    "shrink must be a number or \"auto\", got `{kw}`"
                )))
            }
        };

        let theta0 = self.problem.theta0.clone();
        let exo = match &self.exosystem {
            None => None,
            Some(cfg) => Some(build_exosystem(cfg, &theta0)?),
        };

        let automaton = match &self.switching {
            None => None,
            Some(sw) => {
                let timing = match sw.policy.as_deref() {
                    None | Some("eager") => JumpTiming::Eager,
                    Some("lazy") => JumpTiming::Lazy {
                        chance_per_step: sw.lazy_chance.unwrap_or(0.5),
                    },
                    Some(other) => {
                        return Err(ScenarioError::Invalid(format!(
                            "unknown switching policy `{other}`"
                        )))
                    }
                };
                let target = match sw.target.as_deref() {
                    None | Some("cyclic") => TargetRule::Cyclic,
                    Some("random") => TargetRule::Random,
                    Some(other) => {
                        return Err(ScenarioError::Invalid(format!(
                            "unknown switching target `{other}`"
                        )))
                    }
                };
                Some(SwitchAutomaton::new(
                    problem.modes,
                    sw.tau_d,
                    sw.n0,
                    sw.flow_rate.unwrap_or(1.0 / sw.tau_d),
                    sw.initial_mode,
                    sw.tau0,
                    timing,
                    target,
                    sw.seed.unwrap_or(self.sim.seed),
                )?)
            }
        };

        let noise = match &self.noise {
            None => None,
            Some(cfg) => {
                let target = match cfg.target.as_deref() {
                    None | Some("measurement") => NoiseTarget::Measurement,
                    Some("state") => NoiseTarget::State,
                    Some("both") => NoiseTarget::Both,
                    Some(other) => {
                        return Err(ScenarioError::Invalid(format!("unknown noise target `{other}`")))
                    }
                };
                let mode = match cfg.mode.as_deref() {
                    None | Some("ball") => NoiseMode::Ball,
                    Some("constant") => NoiseMode::ConstantDirection,
                    Some(other) => {
                        return Err(ScenarioError::Invalid(format!("unknown noise mode `{other}`")))
                    }
                };
                Some(NoiseSpec {
                    bound: cfg.bound,
                    seed: cfg.seed.unwrap_or(self.sim.seed),
                    target,
                    mode,
                })
            }
        };

        let x0 = self
            .init
            .x0
            .clone()
            .ok_or_else(|| ScenarioError::Invalid("init.x0 is required".into()))?;

        let sim = SimConfig {
            t_end: self.sim.t_end,
            step: self.sim.step,
            record_stride: self.sim.record_stride,
            integrator: self.sim.integrator,
            safety_guard: self.sim.safety_guard,
            exact_filter: self.sim.exact_filter,
            seed: self.sim.seed,
        };

        Ok(BuiltScenario {
            label: label.to_string(),
            problem,
            working_set,
            base_set: base,
            algorithm,
            gains,
            bank,
            exo,
            theta0,
            x0,
            xi0: self.init.xi0.clone(),
            lambda0: self.init.lambda0.clone(),
            automaton,
            noise,
            sim,
            write_svg: self.output.write_svg,
            out_dir: self.output.dir.clone(),
        })
    }
}

/// A materialized scenario owning its components.
pub struct BuiltScenario {
    pub label: String,
    pub problem: Problem,
    pub working_set: FeasibleSet,
    pub base_set: Option<FeasibleSet>,
    pub algorithm: Algorithm,
    pub gains: GainSet,
    pub bank: DitherBank,
    pub exo: Option<Exosystem>,
    pub theta0: Vec<f64>,
    pub x0: Vec<f64>,
    pub xi0: Option<Vec<f64>>,
    pub lambda0: Option<Vec<f64>>,
    pub automaton: Option<SwitchAutomaton>,
    pub noise: Option<NoiseSpec>,
    pub sim: SimConfig,
    pub write_svg: bool,
    pub out_dir: Option<String>,
}

impl BuiltScenario {
    /// Run specification borrowing this scenario's components.
    pub fn run_spec(&self) -> RunSpec<'_> {
        self.run_spec_with(self.algorithm)
    }

    /// As [`run_spec`](Self::run_spec) with a different algorithm (the
    /// compare command runs several on identical inputs).
    pub fn run_spec_with(&self, algorithm: Algorithm) -> RunSpec<'_> {
        RunSpec {
            label: format!("{}::{}", self.label, algorithm.name()),
            problem: &self.problem,
            set: &self.working_set,
            base_set: self.base_set.as_ref(),
            algorithm,
            gains: self.gains,
            bank: self.bank.clone(),
            exo: self.exo.as_ref(),
            theta0: self.theta0.clone(),
            x0: self.x0.clone(),
            xi0: self.xi0.clone(),
            lambda0: self.lambda0.clone(),
            automaton: self.automaton.clone(),
            noise: self.noise,
            sim: self.sim,
        }
    }
}

fn parse_algorithm(name: &str) -> Result<Algorithm, ScenarioError> {
    Ok(match name {
        "vanilla_es" => Algorithm::VanillaEs,
        "pgzo" => Algorithm::Pgzo,
        "ppdzo" => Algorithm::Ppdzo,
        "dpgzo" => Algorithm::Dpgzo,
        "target_grad" => Algorithm::TargetGrad,
        "target_saddle" => Algorithm::TargetSaddle,
        "average_gzo" => Algorithm::AverageGzo,
        other => {
            return Err(ScenarioError::Invalid(format!(
                "unknown algorithm `{other}`; expected vanilla_es | pgzo | ppdzo | dpgzo | target_grad | target_saddle | average_gzo"
            )))
        }
    })
}

fn build_set(cfg: &SetConfig) -> Result<FeasibleSet, ScenarioError> {
    let need = |opt: &Option<Vec<f64>>, key: &str, kind: &str| -> Result<Vec<f64>, ScenarioError> {
        opt.clone()
            .ok_or_else(|| ScenarioError::Invalid(format!("set kind `{kind}` needs `{key}`")))
    };
    Ok(match cfg.kind.as_str() {
        "whole_space" => FeasibleSet::whole_space(
            cfg.dim
                .ok_or_else(|| ScenarioError::Invalid("whole_space needs `dim`".into()))?,
        ),
        "box" => FeasibleSet::hyper_box(
            need(&cfg.lower, "lower", "box")?,
            need(&cfg.upper, "upper", "box")?,
        )?,
        "ball" => FeasibleSet::ball(
            need(&cfg.center, "center", "ball")?,
            cfg.radius
                .ok_or_else(|| ScenarioError::Invalid("ball needs `radius`".into()))?,
        )?,
        "orthant" => FeasibleSet::orthant(
            cfg.dim
                .ok_or_else(|| ScenarioError::Invalid("orthant needs `dim`".into()))?,
        ),
        "polytope" => {
            let rows = cfg
                .a
                .clone()
                .ok_or_else(|| ScenarioError::Invalid("polytope needs `a`".into()))?;
            let rhs = need(&cfg.b, "b", "polytope")?;
            match &cfg.feasible_point {
                Some(p) => FeasibleSet::polytope_with_point(rows, rhs, p.clone())?,
                None => FeasibleSet::polytope(rows, rhs)?,
            }
        }
        "product" => {
            let factors = cfg
                .factors
                .as_ref()
                .ok_or_else(|| ScenarioError::Invalid("product needs `factors`".into()))?;
            let built = factors.iter().map(build_set).collect::<Result<Vec<_>, _>>()?;
            FeasibleSet::product(built)
        }
        other => {
            return Err(ScenarioError::Invalid(format!(
                "unknown set kind `{other}`; expected whole_space | box | ball | orthant | polytope | product"
            )))
        }
    })
}

fn build_problem(cfg: &ProblemConfig, base_set: &FeasibleSet) -> Result<Problem, ScenarioError> {
    let set_for_optimizer = base_set.clone();
    Ok(match cfg.name.as_str() {
        // Tracking problems: the constrained minimizer of ||x - theta||^2
        // over the feasible set is the projection of theta onto it.
        "example1" => problems::example1()
            .with_optimizer(move |th| set_for_optimizer.project(th)),
        "example2" => problems::example2()
            .with_optimizer(move |th| set_for_optimizer.project(th)),
        "regional" => problems::regional(),
        "desk_kkt" => problems::desk_kkt(),
        "switching_two_mode" => problems::switching_two_mode(),
        "quadratic" => {
            let c = cfg
                .c
                .clone()
                .ok_or_else(|| ScenarioError::Invalid("quadratic needs `c`".into()))?;
            let n = c.len();
            let q = cfg.q.clone().unwrap_or_else(|| {
                let mut ident = vec![vec![0.0; n]; n];
                for (i, row) in ident.iter_mut().enumerate() {
                    row[i] = 2.0;
                }
                ident
            });
            if q.len() != n || q.iter().any(|row| row.len() != n) {
                return Err(ScenarioError::Invalid("quadratic `q` must be n x n".into()));
            }
            let g_rows = cfg.g_matrix.clone().unwrap_or_default();
            let g_rhs = cfg.g_rhs.clone().unwrap_or_default();
            if g_rows.len() != g_rhs.len() {
                return Err(ScenarioError::Invalid(
                    "g_matrix and g_rhs must have matching lengths".into(),
                ));
            }
            problems::quadratic(q, c, cfg.constant.unwrap_or(0.0), g_rows, g_rhs, cfg.minimizer.clone())
        }
        other => return Err(crate::problems::ProblemError::UnknownBuiltin(other.to_string()).into()),
    })
}

fn build_exosystem(cfg: &ExoConfig, theta0: &[f64]) -> Result<Exosystem, ScenarioError> {
    Ok(match cfg.name.as_str() {
        "example1" => problems::exo_example1(cfg.eps_theta),
        "rotation" => problems::exo_rotation(cfg.eps_theta, theta0),
        other => {
            return Err(ScenarioError::Invalid(format!(
                "unknown exosystem `{other}`; expected example1 | rotation"
            )))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"
[problem]
name = "example1"
theta0 = [0.0, 0.0]

[set]
kind = "ball"
center = [1.5, 0.0]
radius = 1.5
shrink = "auto"

[algorithm]
name = "pgzo"
alpha_x = 0.1

[dither]
kappa = [2, 3]
eps_omega = 0.01
eps_a = 0.01

[exosystem]
name = "example1"
eps_theta = 0.01

[sim]
t_end = 1.0
step = 0.00015
record_stride = 50
seed = 7

[init]
x0 = [2.5, 0.5]
"#;

    #[test]
    fn parse_build_and_run_spec() {
        let sc = Scenario::from_toml(EXAMPLE).unwrap();
        let built = sc.build("example1_test").unwrap();
        assert_eq!(built.algorithm, Algorithm::Pgzo);
        assert!(built.base_set.is_some());
        let spec = built.run_spec();
        let warnings = crate::sim::validate_spec(&spec).unwrap();
        assert!(warnings.is_empty(), "{warnings:?}");
    }

    #[test]
    fn round_trip_is_field_identical() {
        let sc = Scenario::from_toml(EXAMPLE).unwrap();
        let text = sc.to_toml().unwrap();
        let sc2 = Scenario::from_toml(&text).unwrap();
        assert_eq!(sc, sc2);
    }

    #[test]
    fn frequency_violation_rejected_at_build() {
        let bad = EXAMPLE.replace("kappa = [2, 3]", "kappa = [1, 2]");
        let sc = Scenario::from_toml(&bad).unwrap();
        let err = match sc.build("bad") {
            Err(e) => e,
            Ok(_) => panic!("expected frequency violation"),
        };
        assert!(matches!(err, ScenarioError::Dither(_)), "{err}");
        assert!(err.to_string().contains("kappa"), "{err}");
    }

    #[test]
    fn fractional_kappa_accepted() {
        let frac = EXAMPLE.replace("kappa = [2, 3]", "kappa = [\"3/2\", \"5/2\"]");
        let sc = Scenario::from_toml(&frac).unwrap();
        sc.build("frac").unwrap();
    }

    #[test]
    fn sweep_overrides() {
        let mut sc = Scenario::from_toml(EXAMPLE).unwrap();
        sc.apply_sweep("eps_a", 0.04).unwrap();
        assert_eq!(sc.dither.eps_a, 0.04);
        sc.apply_sweep("eps_theta", 0.02).unwrap();
        assert_eq!(sc.exosystem.as_ref().unwrap().eps_theta, 0.02);
        assert!(sc.apply_sweep("tau_d", 5.0).is_err());
        assert!(sc.apply_sweep("bogus", 1.0).is_err());
    }

    #[test]
    fn missing_x0_rejected() {
        let no_init = EXAMPLE.replace("[init]\nx0 = [2.5, 0.5]", "");
        let sc = Scenario::from_toml(&no_init).unwrap();
        assert!(matches!(sc.build("x"), Err(ScenarioError::Invalid(_))));
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = EXAMPLE.replace("[sim]", "[sim]\nbogus_key = 1");
        assert!(Scenario::from_toml(&bad).is_err());
    }

    #[test]
    fn auto_shrink_margin_scales_with_amplitude() {
        let sc = Scenario::from_toml(EXAMPLE).unwrap();
        let built = sc.build("m").unwrap();
        match &built.working_set {
            FeasibleSet::Ball { radius, .. } => {
                let expect = 1.5 - 0.01 * 2.0_f64.sqrt();
                assert!((radius - expect).abs() < 1e-12);
            }
            _ => panic!("expected ball"),
        }
    }
}
