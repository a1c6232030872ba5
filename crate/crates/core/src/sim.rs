//! Fixed-step simulation of the coupled (algorithm, dither, exosystem,
//! switching) system with flow-set enforcement and trajectory recording.
//!
//! The dither bank is advanced by exact rotation at every integrator stage;
//! all other states integrate explicitly (classical 4-stage by default).
//! After each step a safety guard re-projects the decision state onto the
//! feasible set and clamps the dual state; the guard displacement is logged
//! so field-respecting flows (tiny displacement) can be told apart from
//! boundary sliding.

use crate::dither::{DitherBank, DitherError};
use crate::dynamics::{self, GainSet};
use crate::hybrid::{HybridError, SwitchAutomaton, SwitchEvent};
use crate::integrate::{explicit_step, Integrator};
use crate::linalg::dist;
use crate::problems::{
    Exosystem, NoiseSpec, NoiseStream, NoiseTarget, NoisyOracle, Problem, ProblemError, ZeroOrder,
};
use crate::sets::{FeasibleSet, SetError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Which dynamics a run integrates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    VanillaEs,
    Pgzo,
    Ppdzo,
    Dpgzo,
    TargetGrad,
    TargetSaddle,
    AverageGzo,
    /// Average dynamics of the discontinuous scheme; used by Lyapunov
    /// diagnostics, not exposed as a config name.
    AverageDpgzo,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::VanillaEs => "vanilla_es",
            Algorithm::Pgzo => "pgzo",
            Algorithm::Ppdzo => "ppdzo",
            Algorithm::Dpgzo => "dpgzo",
            Algorithm::TargetGrad => "target_grad",
            Algorithm::TargetSaddle => "target_saddle",
            Algorithm::AverageGzo => "average_gzo",
            Algorithm::AverageDpgzo => "average_dpgzo",
        }
    }

    /// Zeroth-order algorithms query only measured values.
    pub fn is_zeroth_order(&self) -> bool {
        matches!(
            self,
            Algorithm::VanillaEs | Algorithm::Pgzo | Algorithm::Ppdzo | Algorithm::Dpgzo
        )
    }

    /// Verification flows that require analytic gradients.
    pub fn needs_gradients(&self) -> bool {
        matches!(
            self,
            Algorithm::TargetGrad
                | Algorithm::TargetSaddle
                | Algorithm::AverageGzo
                | Algorithm::AverageDpgzo
        )
    }

    pub fn has_filter(&self) -> bool {
        matches!(
            self,
            Algorithm::Pgzo | Algorithm::Ppdzo | Algorithm::Dpgzo | Algorithm::AverageGzo
                | Algorithm::AverageDpgzo
        )
    }

    pub fn has_dual(&self) -> bool {
        matches!(self, Algorithm::Ppdzo | Algorithm::TargetSaddle)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Horizon; a zero horizon yields the single initial sample.
    pub t_end: f64,
    /// Base integration step.
    pub step: f64,
    /// Record every this-many steps (the final step is always recorded).
    pub record_stride: usize,
    pub integrator: Integrator,
    /// Post-step re-projection of the decision and dual states.
    pub safety_guard: bool,
    /// Advance the low-pass filter by its exact exponential (Strang split)
    /// instead of integrating it explicitly.
    pub exact_filter: bool,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            t_end: 10.0,
            step: 1e-4,
            record_stride: 100,
            integrator: Integrator::Rk4,
            safety_guard: true,
            exact_filter: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("validation: {0}")]
    Validation(String),
    #[error("divergence at t = {t:.6}: {detail}")]
    Divergence { t: f64, detail: String },
    #[error("flow-set violation at t = {t:.6}: distance {distance:.3e}")]
    FlowSetViolation { t: f64, distance: f64 },
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Set(#[from] SetError),
    #[error(transparent)]
    Dither(#[from] DitherError),
    #[error(transparent)]
    Hybrid(#[from] HybridError),
}

/// Everything a single run needs.
pub struct RunSpec<'a> {
    pub label: String,
    pub problem: &'a Problem,
    /// The set the algorithm projects onto (a shrunk copy when strict input
    /// safety is requested).
    pub set: &'a FeasibleSet,
    /// The original feasible set when `set` is shrunk; perturbed-input safety
    /// is checked against it.
    pub base_set: Option<&'a FeasibleSet>,
    pub algorithm: Algorithm,
    pub gains: GainSet,
    pub bank: DitherBank,
    pub exo: Option<&'a Exosystem>,
    pub theta0: Vec<f64>,
    pub x0: Vec<f64>,
    pub xi0: Option<Vec<f64>>,
    pub lambda0: Option<Vec<f64>>,
    pub automaton: Option<SwitchAutomaton>,
    pub noise: Option<NoiseSpec>,
    pub sim: SimConfig,
}

/// One recorded trajectory point.
#[derive(Debug, Clone)]
pub struct Sample {
    pub t: f64,
    pub x: Vec<f64>,
    pub xhat: Vec<f64>,
    pub xi1: Vec<f64>,
    pub xi2: Vec<f64>,
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub theta: Vec<f64>,
    pub q: usize,
    pub f_value: f64,
    pub g: Vec<f64>,
    /// `||x - d(theta)||` when the problem declares an optimizer map,
    /// `NaN` otherwise.
    pub dist_opt: f64,
    pub in_set: bool,
    /// Squared distance of the raw (pre-guard) step output to the set.
    pub phi: f64,
    /// Norm of the guard's re-projection displacement this step.
    pub guard_disp: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub label: String,
    pub algorithm: Algorithm,
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub samples: Vec<Sample>,
    pub switches: Vec<SwitchEvent>,
    pub f_calls: u64,
    pub g_calls: u64,
    pub grad_calls: u64,
    pub max_noise: f64,
    pub exo_clamps: u64,
    pub max_phi: f64,
    pub max_guard_disp: f64,
    pub warnings: Vec<String>,
}

impl Trajectory {
    pub fn final_time(&self) -> f64 {
        self.samples.last().map(|s| s.t).unwrap_or(0.0)
    }

    /// Average of `x` over recorded samples in the trailing window.
    pub fn tail_average_x(&self, window: f64) -> Vec<f64> {
        self.tail_average(window, |s| &s.x)
    }

    /// Average of `lambda` over recorded samples in the trailing window.
    pub fn tail_average_lambda(&self, window: f64) -> Vec<f64> {
        self.tail_average(window, |s| &s.lambda)
    }

    fn tail_average(&self, window: f64, field: impl Fn(&Sample) -> &Vec<f64>) -> Vec<f64> {
        let t_last = self.final_time();
        let cut = t_last - window - 1e-12;
        let picked: Vec<&Sample> = self.samples.iter().filter(|s| s.t >= cut).collect();
        let d = field(picked[0]).len();
        let mut acc = vec![0.0; d];
        for s in &picked {
            for (a, v) in acc.iter_mut().zip(field(s)) {
                *a += v;
            }
        }
        for a in &mut acc {
            *a /= picked.len() as f64;
        }
        acc
    }

    /// Largest `dist_opt` over the trailing `fraction` of the horizon.
    pub fn tail_limsup_dist_opt(&self, fraction: f64) -> f64 {
        let t_last = self.final_time();
        let cut = t_last * (1.0 - fraction);
        self.samples
            .iter()
            .filter(|s| s.t >= cut)
            .map(|s| s.dist_opt)
            .fold(0.0, f64::max)
    }

    /// Sup over shared samples of the Euclidean distance between the
    /// `x`-blocks of two trajectories recorded on the same grid.
    pub fn sup_distance_x(&self, other: &Trajectory) -> f64 {
        assert_eq!(self.samples.len(), other.samples.len(), "trajectories share the grid");
        self.samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| {
                debug_assert!((a.t - b.t).abs() < 1e-9);
                dist(&a.x, &b.x)
            })
            .fold(0.0, f64::max)
    }

    /// CSV header matching [`write_csv`](Self::write_csv).
    pub fn csv_header(&self) -> String {
        let mut cols: Vec<String> = vec!["t".into()];
        let push_block = |cols: &mut Vec<String>, stem: &str, k: usize| {
            for i in 1..=k {
                cols.push(format!("{stem}_{i}"));
            }
        };
        push_block(&mut cols, "x", self.n);
        push_block(&mut cols, "xhat", self.n);
        if self.algorithm == Algorithm::Ppdzo {
            push_block(&mut cols, "xi1", self.n);
            push_block(&mut cols, "xi2", self.m);
        } else if self.algorithm.has_filter() {
            push_block(&mut cols, "xi", self.n);
        }
        if self.algorithm.has_dual() {
            push_block(&mut cols, "lambda", self.m);
        }
        push_block(&mut cols, "mu", 2 * self.n);
        push_block(&mut cols, "theta", self.p);
        cols.push("q".into());
        cols.push("f_value".into());
        push_block(&mut cols, "g", self.m);
        cols.push("dist_opt".into());
        cols.push("in_set".into());
        cols.push("phi".into());
        cols.push("guard_disp".into());
        cols.join(",")
    }

    /// Writes the trajectory as CSV: mandatory header, floats with 17
    /// significant digits.
    pub fn write_csv(&self, w: &mut impl std::io::Write) -> std::io::Result<()> {
        writeln!(w, "{}", self.csv_header())?;
        for s in &self.samples {
            let mut fields: Vec<String> = vec![fmt17(s.t)];
            fields.extend(s.x.iter().map(|v| fmt17(*v)));
            fields.extend(s.xhat.iter().map(|v| fmt17(*v)));
            if self.algorithm == Algorithm::Ppdzo {
                fields.extend(s.xi1.iter().map(|v| fmt17(*v)));
                fields.extend(s.xi2.iter().map(|v| fmt17(*v)));
            } else if self.algorithm.has_filter() {
                fields.extend(s.xi1.iter().map(|v| fmt17(*v)));
            }
            if self.algorithm.has_dual() {
                fields.extend(s.lambda.iter().map(|v| fmt17(*v)));
            }
            fields.extend(s.mu.iter().map(|v| fmt17(*v)));
            fields.extend(s.theta.iter().map(|v| fmt17(*v)));
            fields.push(s.q.to_string());
            fields.push(fmt17(s.f_value));
            fields.extend(s.g.iter().map(|v| fmt17(*v)));
            fields.push(fmt17(s.dist_opt));
            fields.push(if s.in_set { "1".into() } else { "0".into() });
            fields.push(fmt17(s.phi));
            fields.push(fmt17(s.guard_disp));
            writeln!(w, "{}", fields.join(","))?;
        }
        Ok(())
    }
}

/// 17 significant digits in scientific notation.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

// ---------------------------------------------------------------------------
// State layout
// ---------------------------------------------------------------------------

/// Offsets of the continuously integrated blocks inside the flat state.
#[derive(Debug, Clone, Copy)]
struct Layout {
    n: usize,
    m: usize,
    p: usize,
    algorithm: Algorithm,
}

impl Layout {
    fn x(&self) -> std::ops::Range<usize> {
        0..self.n
    }

    fn lambda(&self) -> std::ops::Range<usize> {
        match self.algorithm {
            Algorithm::Ppdzo | Algorithm::TargetSaddle => self.n..self.n + self.m,
            _ => 0..0,
        }
    }

    fn xi1(&self) -> std::ops::Range<usize> {
        match self.algorithm {
            Algorithm::Pgzo | Algorithm::Dpgzo | Algorithm::AverageGzo | Algorithm::AverageDpgzo => {
                self.n..2 * self.n
            }
            Algorithm::Ppdzo => self.n + self.m..2 * self.n + self.m,
            _ => 0..0,
        }
    }

    fn xi2(&self) -> std::ops::Range<usize> {
        match self.algorithm {
            Algorithm::Ppdzo => 2 * self.n + self.m..2 * self.n + 2 * self.m,
            _ => 0..0,
        }
    }

    fn theta(&self) -> std::ops::Range<usize> {
        let used = self.x().end.max(self.lambda().end).max(self.xi1().end).max(self.xi2().end);
        used..used + self.p
    }

    fn total(&self) -> usize {
        self.theta().end
    }
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

/// Step-size rule factors: within the limit is fine, up to twice the limit
/// warns, beyond errors.
fn check_step_rule(
    h: f64,
    limit: f64,
    what: &str,
    warnings: &mut Vec<String>,
) -> Result<(), SimError> {
    if h <= limit {
        return Ok(());
    }
    if h <= 2.0 * limit {
        warnings.push(format!(
            "step {h:.3e} exceeds the {what} resolution limit {limit:.3e}; accuracy may degrade"
        ));
        return Ok(());
    }
    Err(SimError::Validation(format!(
        "step {h:.3e} is more than twice the {what} resolution limit {limit:.3e}"
    )))
}

/// Cross-checks a run specification; returns collected warnings.
pub fn validate_spec(spec: &RunSpec<'_>) -> Result<Vec<String>, SimError> {
    let mut warnings = Vec::new();
    let n = spec.problem.dim;
    let m = spec.problem.constraint_count;
    spec.gains.validate().map_err(SimError::Validation)?;
    if spec.set.dim() != n {
        return Err(SimError::Validation(format!(
            "feasible set dimension {} != problem dimension {n}",
            spec.set.dim()
        )));
    }
    if spec.x0.len() != n {
        return Err(SimError::Validation(format!(
            "x0 has length {}, problem dimension is {n}",
            spec.x0.len()
        )));
    }
    if spec.theta0.len() != spec.problem.theta_dim {
        return Err(SimError::Validation(format!(
            "theta0 has length {}, problem expects {}",
            spec.theta0.len(),
            spec.problem.theta_dim
        )));
    }
    if let Some(exo) = spec.exo {
        if exo.dim != spec.problem.theta_dim {
            return Err(SimError::Validation("exosystem dimension mismatch".into()));
        }
        if !exo.domain.member(&spec.theta0, 0.0) {
            return Err(SimError::Validation("theta0 outside the exosystem invariant set".into()));
        }
    }
    if spec.bank.channels() != n {
        return Err(SimError::Validation(format!(
            "dither bank has {} channels, problem dimension is {n}",
            spec.bank.channels()
        )));
    }
    if (spec.bank.eps_omega() - spec.gains.eps_omega).abs() > 0.0
        || (spec.bank.eps_a() - spec.gains.eps_a).abs() > 0.0
    {
        return Err(SimError::Validation(
            "dither bank eps_omega/eps_a differ from the gain set".into(),
        ));
    }
    if spec.algorithm.needs_gradients() && !spec.problem.has_gradients() {
        return Err(SimError::Validation(format!(
            "algorithm {} needs analytic gradients, problem `{}` has none",
            spec.algorithm.name(),
            spec.problem.name
        )));
    }
    if spec.algorithm == Algorithm::VanillaEs && n != 1 {
        return Err(SimError::Validation("vanilla_es is scalar-only".into()));
    }
    if spec.algorithm.has_dual() && m == 0 {
        warnings.push("dual algorithm on a problem without inequality constraints".into());
    }
    // Flow-set initial conditions.
    if !spec.set.member(&spec.x0, 0.0) {
        return Err(SimError::Validation(format!(
            "x0 outside the feasible set by {:.3e}",
            spec.set.distance(&spec.x0)
        )));
    }
    if let Some(l0) = &spec.lambda0 {
        if l0.len() != m {
            return Err(SimError::Validation("lambda0 length mismatch".into()));
        }
        if l0.iter().any(|l| *l < 0.0) {
            return Err(SimError::Validation("lambda0 must be nonnegative".into()));
        }
    }
    // Switching configuration.
    if let Some(_a) = &spec.automaton {
        if spec.problem.modes < 2 {
            return Err(SimError::Validation(
                "switching automaton configured on a single-mode problem".into(),
            ));
        }
        if spec.problem.critical_value.is_some() {
            if let Some(xs) = spec.problem.optimizer(&spec.theta0) {
                spec.problem.validate_switching_family(&xs)?;
            }
        }
    } else if spec.problem.modes > 1 {
        warnings.push("multi-mode problem without an automaton: mode 0 stays active".into());
    }
    // Simulation parameters.
    let sim = &spec.sim;
    if !(sim.step > 0.0) || !sim.step.is_finite() {
        return Err(SimError::Validation(format!("step must be positive, got {}", sim.step)));
    }
    if sim.t_end < 0.0 {
        return Err(SimError::Validation("t_end must be nonnegative".into()));
    }
    if sim.record_stride == 0 {
        return Err(SimError::Validation("record_stride must be at least 1".into()));
    }
    if spec.algorithm.is_zeroth_order() {
        let limit = spec.gains.eps_omega / (20.0 * spec.bank.max_kappa());
        check_step_rule(sim.step, limit, "dither", &mut warnings)?;
    }
    if spec.algorithm.has_filter() && !sim.exact_filter {
        let limit = spec.gains.eps_xi / 5.0;
        check_step_rule(sim.step, limit, "filter", &mut warnings)?;
    }
    if let Some(noise) = &spec.noise {
        if noise.bound < 0.0 {
            return Err(SimError::Validation("noise bound must be nonnegative".into()));
        }
    }
    Ok(warnings)
}

// ---------------------------------------------------------------------------
// Stepping
// ---------------------------------------------------------------------------

enum OracleBox<'a> {
    Plain(crate::problems::ZoOracle<'a>),
    Noisy(NoisyOracle<'a>),
}

impl<'a> OracleBox<'a> {
    fn as_dyn(&self) -> &(dyn ZeroOrder + 'a) {
        match self {
            OracleBox::Plain(o) => o,
            OracleBox::Noisy(o) => o,
        }
    }

    fn max_emitted(&self) -> f64 {
        match self {
            OracleBox::Plain(_) => 0.0,
            OracleBox::Noisy(o) => o.max_emitted(),
        }
    }
}

struct Engine<'a> {
    spec: &'a RunSpec<'a>,
    layout: Layout,
    oracle: OracleBox<'a>,
    state_noise: Option<NoiseStream>,
}

impl<'a> Engine<'a> {
    /// Writes the coupled field at one integrator stage into `out`.
    ///
    /// `e` is the per-step state disturbance (empty when absent): the field
    /// is evaluated at `y + e` and `e` is added to the rate, realizing the
    /// perturbed dynamics `dz/dt = h(z + e) + e`.
    fn rate(
        &self,
        y: &[f64],
        bank: &DitherBank,
        mode: usize,
        e: &[f64],
        out: &mut [f64],
        freeze_filter: bool,
    ) -> Result<(), SimError> {
        let lay = self.layout;
        let eff: Vec<f64> = if e.is_empty() {
            y.to_vec()
        } else {
            y.iter().zip(e).map(|(a, b)| a + b).collect()
        };
        let x = &eff[lay.x()];
        let theta = &eff[lay.theta()];
        let gains = &self.spec.gains;
        let set = self.spec.set;
        out.iter_mut().for_each(|o| *o = 0.0);
        match self.spec.algorithm {
            Algorithm::Pgzo => {
                let xi = &eff[lay.xi1()];
                let mu_hat = bank.probe();
                let (dx, dxi) =
                    dynamics::gzo_field(x, xi, &mu_hat, self.oracle.as_dyn(), set, gains, theta, mode);
                out[lay.x()].copy_from_slice(&dx);
                if !freeze_filter {
                    out[lay.xi1()].copy_from_slice(&dxi);
                }
            }
            Algorithm::Dpgzo => {
                let xi = &eff[lay.xi1()];
                let mu_hat = bank.probe();
                let (dx, dxi) =
                    dynamics::dpzo_field(x, xi, &mu_hat, self.oracle.as_dyn(), set, gains, theta, mode)?;
                out[lay.x()].copy_from_slice(&dx);
                if !freeze_filter {
                    out[lay.xi1()].copy_from_slice(&dxi);
                }
            }
            Algorithm::Ppdzo => {
                let lambda = &eff[lay.lambda()];
                let xi1 = &eff[lay.xi1()];
                let xi2 = &eff[lay.xi2()];
                let mu_hat = bank.probe();
                let (dx, dl, dxi1, dxi2) = dynamics::pdzo_field(
                    x,
                    lambda,
                    xi1,
                    xi2,
                    &mu_hat,
                    self.oracle.as_dyn(),
                    set,
                    gains,
                    theta,
                );
                out[lay.x()].copy_from_slice(&dx);
                out[lay.lambda()].copy_from_slice(&dl);
                if !freeze_filter {
                    out[lay.xi1()].copy_from_slice(&dxi1);
                    out[lay.xi2()].copy_from_slice(&dxi2);
                }
            }
            Algorithm::VanillaEs => {
                let mu_hat = bank.probe();
                let s = mu_hat[0];
                let xhat = [x[0] + gains.eps_a * s];
                let yv = self.oracle.as_dyn().f(&xhat, theta, mode);
                out[0] = -gains.k_x * 2.0 / gains.eps_a * yv * s;
            }
            Algorithm::TargetGrad => {
                let fo = self.spec.problem.first_order().expect("validated");
                let dx = dynamics::target_gradient_flow(x, &fo, set, gains, theta, mode);
                out[lay.x()].copy_from_slice(&dx);
            }
            Algorithm::TargetSaddle => {
                let fo = self.spec.problem.first_order().expect("validated");
                let lambda = &eff[lay.lambda()];
                let (dx, dl) = dynamics::target_saddle_flow(x, lambda, &fo, set, gains, theta);
                out[lay.x()].copy_from_slice(&dx);
                out[lay.lambda()].copy_from_slice(&dl);
            }
            Algorithm::AverageGzo => {
                let fo = self.spec.problem.first_order().expect("validated");
                let xi = &eff[lay.xi1()];
                let (dx, dxi) = dynamics::average_gzo_field(x, xi, &fo, set, gains, theta, mode);
                out[lay.x()].copy_from_slice(&dx);
                if !freeze_filter {
                    out[lay.xi1()].copy_from_slice(&dxi);
                }
            }
            Algorithm::AverageDpgzo => {
                let fo = self.spec.problem.first_order().expect("validated");
                let xi = &eff[lay.xi1()];
                let (dx, dxi) =
                    dynamics::average_dpzo_field(x, xi, &fo, set, gains, theta, mode)?;
                out[lay.x()].copy_from_slice(&dx);
                if !freeze_filter {
                    out[lay.xi1()].copy_from_slice(&dxi);
                }
            }
        }
        if let Some(exo) = self.spec.exo {
            let dtheta = exo.rate_vector(theta);
            out[lay.theta()].copy_from_slice(&dtheta);
        }
        if !e.is_empty() {
            for (o, ei) in out.iter_mut().zip(e) {
                *o += ei;
            }
        }
        Ok(())
    }

    /// Current drive of the low-pass filter(s), for the exact-exponential
    /// filter option.
    fn filter_drive(&self, y: &[f64], bank: &DitherBank, mode: usize) -> (Vec<f64>, Vec<f64>) {
        let lay = self.layout;
        let x = &y[lay.x()];
        let theta = &y[lay.theta()];
        let gains = &self.spec.gains;
        let mu_hat = bank.probe();
        match self.spec.algorithm {
            Algorithm::Ppdzo => {
                let lambda = &y[lay.lambda()];
                let xhat = dynamics::perturbed_input(x, gains.eps_a, &mu_hat);
                let fv = self.oracle.as_dyn().f(&xhat, theta, 0);
                let gv = self.oracle.as_dyn().g(&xhat);
                let lag = fv + lambda.iter().zip(&gv).map(|(l, g)| l * g).sum::<f64>();
                let drive1: Vec<f64> =
                    mu_hat.iter().map(|mi| 2.0 / gains.eps_a * lag * mi).collect();
                (drive1, gv)
            }
            Algorithm::AverageGzo | Algorithm::AverageDpgzo => {
                let fo = self.spec.problem.first_order().expect("validated");
                (fo.grad_f(x, theta, mode), Vec::new())
            }
            _ => {
                let xhat = dynamics::perturbed_input(x, gains.eps_a, &mu_hat);
                let fv = self.oracle.as_dyn().f(&xhat, theta, mode);
                let drive: Vec<f64> =
                    mu_hat.iter().map(|mi| 2.0 / gains.eps_a * fv * mi).collect();
                (drive, Vec::new())
            }
        }
    }

    fn apply_exact_filter(&self, y: &mut [f64], bank: &DitherBank, mode: usize, half_h: f64) {
        let lay = self.layout;
        let decay = (-half_h / self.spec.gains.eps_xi).exp();
        let (u1, u2) = self.filter_drive(y, bank, mode);
        for (idx, i) in lay.xi1().enumerate() {
            y[i] = u1[idx] + (y[i] - u1[idx]) * decay;
        }
        for (idx, i) in lay.xi2().enumerate() {
            y[i] = u2[idx] + (y[i] - u2[idx]) * decay;
        }
    }
}

/// One integrator step of the coupled system; exposed for accuracy tests.
/// Returns the raw (pre-guard) next state.
fn step_once(
    engine: &Engine<'_>,
    y: &[f64],
    bank: &DitherBank,
    mode: usize,
    h: f64,
    e: &[f64],
) -> Result<Vec<f64>, SimError> {
    let mut failure: Option<SimError> = None;
    let banks = [bank.clone(), bank.advance(0.5 * h), bank.advance(h)];
    let exact_filter = engine.spec.sim.exact_filter && engine.spec.algorithm.has_filter();
    let mut y_work = y.to_vec();
    if exact_filter {
        engine.apply_exact_filter(&mut y_work, &banks[0], mode, 0.5 * h);
    }
    let next = explicit_step(engine.spec.sim.integrator, &y_work, h, |stage, ys, out| {
        if failure.is_some() {
            return;
        }
        let bank_stage = if stage == 0.0 {
            &banks[0]
        } else if stage == 0.5 {
            &banks[1]
        } else {
            &banks[2]
        };
        if let Err(err) = engine.rate(ys, bank_stage, mode, e, out, exact_filter) {
            failure = Some(err);
        }
    });
    if let Some(err) = failure {
        return Err(err);
    }
    let mut next = next;
    if exact_filter {
        engine.apply_exact_filter(&mut next, &banks[2], mode, 0.5 * h);
    }
    Ok(next)
}

/// Integrates the configured scenario to its horizon.
pub fn run(spec: &RunSpec<'_>) -> Result<Trajectory, SimError> {
    let warnings = validate_spec(spec)?;
    let layout = Layout {
        n: spec.problem.dim,
        m: spec.problem.constraint_count,
        p: spec.problem.theta_dim,
        algorithm: spec.algorithm,
    };

    let measurement_noise = spec.noise.as_ref().filter(|s| {
        s.bound > 0.0 && matches!(s.target, NoiseTarget::Measurement | NoiseTarget::Both)
    });
    let oracle = match measurement_noise {
        Some(nspec) => OracleBox::Noisy(NoisyOracle::new(spec.problem, NoiseStream::new(nspec))),
        None => OracleBox::Plain(spec.problem.zeroth_order()),
    };
    let state_noise = spec
        .noise
        .as_ref()
        .filter(|s| s.bound > 0.0 && matches!(s.target, NoiseTarget::State | NoiseTarget::Both))
        .map(|s| {
            let mut derived = *s;
            derived.seed = s.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(1);
            NoiseStream::new(&derived)
        });

    let f0 = spec.problem.f_calls();
    let g0 = spec.problem.g_calls();
    let grad0 = spec.problem.grad_calls();

    let mut engine = Engine { spec, layout, oracle, state_noise };

    // Pack the initial state.
    let mut y = vec![0.0; layout.total()];
    y[layout.x()].copy_from_slice(&spec.x0);
    if let Some(xi0) = &spec.xi0 {
        if xi0.len() == layout.xi1().len() {
            y[layout.xi1()].copy_from_slice(xi0);
        }
    }
    if let Some(l0) = &spec.lambda0 {
        y[layout.lambda()].copy_from_slice(l0);
    }
    y[layout.theta()].copy_from_slice(&spec.theta0);

    let mut bank = spec.bank.clone();
    let mut automaton = spec.automaton.clone();
    let mut switches: Vec<SwitchEvent> = Vec::new();
    let mut exo_clamps = 0u64;
    let mut max_phi = 0.0f64;
    let mut max_guard = 0.0f64;

    let h = spec.sim.step;
    let n_steps = if spec.sim.t_end <= 0.0 {
        0
    } else {
        ((spec.sim.t_end / h) - 1e-9).ceil() as u64
    };

    let mut samples = Vec::new();
    let record = |samples: &mut Vec<Sample>,
                  t: f64,
                  y: &[f64],
                  bank: &DitherBank,
                  q: usize,
                  phi: f64,
                  guard: f64| {
        let x = y[layout.x()].to_vec();
        let mu_hat = bank.probe();
        let xhat = dynamics::perturbed_input(&x, spec.gains.eps_a, &mu_hat);
        let theta = y[layout.theta()].to_vec();
        let f_value = spec.problem.raw_f(&xhat, &theta, q);
        let g = spec.problem.raw_g(&xhat);
        let dist_opt = spec
            .problem
            .optimizer(&theta)
            .map(|star| dist(&x, &star))
            .unwrap_or(f64::NAN);
        let in_set = spec
            .base_set
            .unwrap_or(spec.set)
            .member(&x, 0.0);
        samples.push(Sample {
            t,
            x,
            xhat,
            xi1: y[layout.xi1()].to_vec(),
            xi2: y[layout.xi2()].to_vec(),
            lambda: y[layout.lambda()].to_vec(),
            mu: bank.mu(),
            theta,
            q,
            f_value,
            g,
            dist_opt,
            in_set,
            phi,
            guard_disp: guard,
        });
    };

    let mut q = automaton.as_ref().map(|a| a.mode()).unwrap_or(0);
    record(&mut samples, 0.0, &y, &bank, q, 0.0, 0.0);

    for i in 1..=n_steps {
        let t = i as f64 * h;
        let e: Vec<f64> = match engine.state_noise.as_mut() {
            Some(stream) => stream.sample(layout.total()),
            None => Vec::new(),
        };
        let raw = step_once(&engine, &y, &bank, q, h, &e)?;
        bank = bank.advance(h);

        // Divergence checks on the raw step output.
        if raw.iter().any(|v| !v.is_finite()) || raw.iter().any(|v| v.abs() > 1e12) {
            return Err(SimError::Divergence {
                t,
                detail: format!("non-finite or unbounded state; last good state at t = {:.6}", t - h),
            });
        }

        // Safety guard: re-project x, clamp the dual block.
        let mut guarded = raw.clone();
        let phi;
        let mut guard_disp = 0.0;
        let raw_x = &raw[layout.x()];
        if spec.sim.safety_guard {
            let px = spec.set.project(raw_x);
            guard_disp = dist(&px, raw_x);
            phi = guard_disp * guard_disp;
            guarded[layout.x()].copy_from_slice(&px);
            for li in layout.lambda() {
                guarded[li] = guarded[li].clamp(0.0, spec.gains.lambda_max);
            }
        } else {
            let d = spec.set.distance(raw_x);
            phi = d * d;
        }
        max_phi = max_phi.max(phi);
        max_guard = max_guard.max(guard_disp);
        y = guarded;

        // Exosystem invariance.
        if let Some(exo) = spec.exo {
            let theta = &y[layout.theta()];
            let drift = exo.domain.distance(theta);
            if drift > 1e-9 {
                if drift > crate::problems::EXO_DRIFT_TOL {
                    return Err(SimError::Problem(ProblemError::ExoLeftDomain {
                        distance: drift,
                        tolerance: crate::problems::EXO_DRIFT_TOL,
                    }));
                }
                let clamped = exo.domain.project(theta);
                y[layout.theta()].copy_from_slice(&clamped);
                exo_clamps += 1;
            }
        }

        // Flow-set membership along the trajectory.
        let d = spec.set.distance(&y[layout.x()]);
        if d > 1e-9 {
            return Err(SimError::FlowSetViolation { t, distance: d });
        }
        if y[layout.lambda()].iter().any(|l| *l < 0.0) {
            return Err(SimError::FlowSetViolation { t, distance: 0.0 });
        }

        // Switching.
        if let Some(a) = automaton.as_mut() {
            let events = a.step(t, h);
            switches.extend(events);
            q = a.mode();
        }

        if i % spec.sim.record_stride as u64 == 0 || i == n_steps {
            record(&mut samples, t, &y, &bank, q, phi, guard_disp);
        }
    }

    let max_noise = {
        let meas = engine.oracle.max_emitted();
        let state = engine.state_noise.as_ref().map(|s| s.max_emitted()).unwrap_or(0.0);
        meas.max(state)
    };

    Ok(Trajectory {
        label: spec.label.clone(),
        algorithm: spec.algorithm,
        n: layout.n,
        m: layout.m,
        p: layout.p,
        samples,
        switches,
        f_calls: spec.problem.f_calls() - f0,
        g_calls: spec.problem.g_calls() - g0,
        grad_calls: spec.problem.grad_calls() - grad0,
        max_noise,
        exo_clamps,
        max_phi,
        max_guard_disp: max_guard,
        warnings,
    })
}

/// Runs several algorithms on identical inputs (same problem, initial state,
/// seeds, and grid). Exosystem trajectories coincide because the parameter
/// dynamics are autonomous and integrated on the same grid.
pub fn cosimulate(specs: &[RunSpec<'_>]) -> Result<Vec<Trajectory>, SimError> {
    if let Some(first) = specs.first() {
        for s in specs.iter().skip(1) {
            if s.problem.dim != first.problem.dim {
                return Err(SimError::Validation(
                    "cosimulated runs must share the problem dimension".into(),
                ));
            }
            if s.x0 != first.x0 {
                return Err(SimError::Validation("cosimulated runs must share x0".into()));
            }
            if (s.sim.step - first.sim.step).abs() > 0.0
                || s.sim.record_stride != first.sim.record_stride
            {
                return Err(SimError::Validation(
                    "cosimulated runs must share the sampling grid".into(),
                ));
            }
        }
    }
    specs.iter().map(run).collect()
}
