//! Black-box problem oracles, exosystems, bounded measurement noise, and the
//! built-in problem library.
//!
//! The algorithm path sees only zeroth-order information: a [`ZoOracle`] (or
//! its noisy wrapper) exposes function values of `f` and `g` and nothing
//! else. Analytic gradients, where a problem carries them, are reachable only
//! through [`FoOracle`], which exists for the model-based target flows and
//! the verification machinery. Separate atomic counters record value and
//! gradient queries so a run can be audited for zeroth-order purity.

use crate::integrate::{explicit_step, Integrator};
use crate::linalg::{dot, norm};
use crate::sets::FeasibleSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::cell::RefCell;
use std::sync::atomic::{AtomicU64, Ordering};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("problem `{0}` does not provide analytic gradients")]
    GradientsUnavailable(String),
    #[error("switching family mode {mode} has gradient residual {residual:.3e} at the declared minimizer")]
    SwitchingFamilyInvalid { mode: usize, residual: f64 },
    #[error("exosystem state left its invariant set by {distance:.3e} (tolerance {tolerance:.1e})")]
    ExoLeftDomain { distance: f64, tolerance: f64 },
    #[error("unknown builtin problem `{0}`")]
    UnknownBuiltin(String),
}

type ObjFn = dyn Fn(&[f64], &[f64], usize) -> f64 + Send + Sync;
type ConsFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;
type GradFn = dyn Fn(&[f64], &[f64], usize) -> Vec<f64> + Send + Sync;
type JacFn = dyn Fn(&[f64]) -> Vec<Vec<f64>> + Send + Sync;
type MapFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;

/// A problem instance: objective(s), inequality constraints, optional
/// analytic derivatives (verification only), and optional optimizer
/// metadata used by diagnostics.
pub struct Problem {
    pub name: String,
    /// Decision dimension n.
    pub dim: usize,
    /// Number of inequality constraints m.
    pub constraint_count: usize,
    /// Exogenous parameter dimension p (0 when the objective is static).
    pub theta_dim: usize,
    /// Number of switching modes (1 when not a switching family).
    pub modes: usize,
    f: Box<ObjFn>,
    g: Option<Box<ConsFn>>,
    grad_f: Option<Box<GradFn>>,
    jac_g: Option<Box<JacFn>>,
    /// Parameter-to-optimizer map `d(theta)`, verification metadata.
    optimizer: Option<Box<MapFn>>,
    /// Common critical value of a switching family (gradient at the shared
    /// minimizer), verification metadata.
    pub critical_value: Option<Vec<f64>>,
    f_calls: AtomicU64,
    g_calls: AtomicU64,
    grad_calls: AtomicU64,
}

impl std::fmt::Debug for Problem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Problem")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("constraint_count", &self.constraint_count)
            .field("theta_dim", &self.theta_dim)
            .field("modes", &self.modes)
            .finish()
    }
}

impl Problem {
    /// Zeroth-order access: the only view algorithms receive.
    pub fn zeroth_order(&self) -> ZoOracle<'_> {
        ZoOracle { prob: self }
    }

    /// First-order access for target flows and verification. `None` when the
    /// problem carries no analytic gradients.
    pub fn first_order(&self) -> Option<FoOracle<'_>> {
        self.grad_f.as_ref()?;
        Some(FoOracle { prob: self })
    }

    pub fn has_gradients(&self) -> bool {
        self.grad_f.is_some()
    }

    /// Uncounted evaluation for trajectory diagnostics; call counters track
    /// algorithm queries only.
    pub fn raw_f(&self, x: &[f64], theta: &[f64], mode: usize) -> f64 {
        (self.f)(x, theta, mode)
    }

    /// Uncounted constraint evaluation for diagnostics.
    pub fn raw_g(&self, x: &[f64]) -> Vec<f64> {
        match &self.g {
            Some(g) => g(x),
            None => Vec::new(),
        }
    }

    /// Optimizer map `d(theta)` when the scenario declares one.
    pub fn optimizer(&self, theta: &[f64]) -> Option<Vec<f64>> {
        self.optimizer.as_ref().map(|d| d(theta))
    }

    pub fn with_optimizer(mut self, map: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.optimizer = Some(Box::new(map));
        self
    }

    pub fn f_calls(&self) -> u64 {
        self.f_calls.load(Ordering::Relaxed)
    }

    pub fn g_calls(&self) -> u64 {
        self.g_calls.load(Ordering::Relaxed)
    }

    pub fn grad_calls(&self) -> u64 {
        self.grad_calls.load(Ordering::Relaxed)
    }

    /// Checks the common-minimizer hypotheses of a switching family: every
    /// mode's gradient at the declared minimizer must match the declared
    /// critical value within 1e-6.
    pub fn validate_switching_family(&self, minimizer: &[f64]) -> Result<(), ProblemError> {
        let xi_star = self
            .critical_value
            .clone()
            .ok_or_else(|| ProblemError::GradientsUnavailable(self.name.clone()))?;
        let grad = self
            .grad_f
            .as_ref()
            .ok_or_else(|| ProblemError::GradientsUnavailable(self.name.clone()))?;
        let theta = vec![0.0; self.theta_dim];
        for mode in 0..self.modes {
            let gq = grad(minimizer, &theta, mode);
            let residual = gq
                .iter()
                .zip(&xi_star)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if residual > 1e-6 {
                return Err(ProblemError::SwitchingFamilyInvalid { mode, residual });
            }
        }
        Ok(())
    }
}

/// Zeroth-order measurement access used by the algorithm vector fields.
pub trait ZeroOrder {
    fn f(&self, x: &[f64], theta: &[f64], mode: usize) -> f64;
    fn g(&self, x: &[f64]) -> Vec<f64>;
    fn constraint_count(&self) -> usize;
}

/// Counting zeroth-order view of a [`Problem`].
pub struct ZoOracle<'a> {
    prob: &'a Problem,
}

impl ZeroOrder for ZoOracle<'_> {
    fn f(&self, x: &[f64], theta: &[f64], mode: usize) -> f64 {
        self.prob.f_calls.fetch_add(1, Ordering::Relaxed);
        (self.prob.f)(x, theta, mode)
    }

    fn g(&self, x: &[f64]) -> Vec<f64> {
        self.prob.g_calls.fetch_add(1, Ordering::Relaxed);
        self.prob.raw_g(x)
    }

    fn constraint_count(&self) -> usize {
        self.prob.constraint_count
    }
}

/// First-order view: analytic gradients for target flows and verification.
pub struct FoOracle<'a> {
    prob: &'a Problem,
}

impl FoOracle<'_> {
    pub fn f(&self, x: &[f64], theta: &[f64], mode: usize) -> f64 {
        self.prob.f_calls.fetch_add(1, Ordering::Relaxed);
        (self.prob.f)(x, theta, mode)
    }

    pub fn g(&self, x: &[f64]) -> Vec<f64> {
        self.prob.g_calls.fetch_add(1, Ordering::Relaxed);
        self.prob.raw_g(x)
    }

    pub fn grad_f(&self, x: &[f64], theta: &[f64], mode: usize) -> Vec<f64> {
        self.prob.grad_calls.fetch_add(1, Ordering::Relaxed);
        (self.prob.grad_f.as_ref().expect("checked at construction"))(x, theta, mode)
    }

    /// Jacobian of `g`, one row per constraint.
    pub fn jac_g(&self, x: &[f64]) -> Vec<Vec<f64>> {
        self.prob.grad_calls.fetch_add(1, Ordering::Relaxed);
        match &self.prob.jac_g {
            Some(j) => j(x),
            None => Vec::new(),
        }
    }

    pub fn constraint_count(&self) -> usize {
        self.prob.constraint_count
    }
}

// ---------------------------------------------------------------------------
// Measurement noise
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseTarget {
    Measurement,
    State,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseMode {
    /// Uniform on the bound-radius ball: Gaussian direction, radius
    /// `bound * u^(1/dim)`.
    Ball,
    /// Worst-case fixed direction at full amplitude.
    ConstantDirection,
}

#[derive(Debug, Clone, Copy)]
pub struct NoiseSpec {
    pub bound: f64,
    pub seed: u64,
    pub target: NoiseTarget,
    pub mode: NoiseMode,
}

/// Seeded bounded-noise generator. Every emitted sample satisfies
/// `||e|| <= bound`; the largest emitted norm is tracked for auditing.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    rng: ChaCha8Rng,
    bound: f64,
    mode: NoiseMode,
    max_emitted: f64,
}

impl NoiseStream {
    pub fn new(spec: &NoiseSpec) -> Self {
        NoiseStream {
            rng: ChaCha8Rng::seed_from_u64(spec.seed),
            bound: spec.bound,
            mode: spec.mode,
            max_emitted: 0.0,
        }
    }

    pub fn sample(&mut self, dim: usize) -> Vec<f64> {
        let e = match self.mode {
            NoiseMode::ConstantDirection => {
                let mut e = vec![0.0; dim];
                if dim > 0 {
                    e[0] = self.bound;
                }
                e
            }
            NoiseMode::Ball => {
                // Gaussian direction via Box-Muller, then a radius with the
                // density that makes the ball uniform.
                let mut dir = vec![0.0; dim];
                for pair in dir.chunks_mut(2) {
                    let u1: f64 = self.rng.gen_range(f64::MIN_POSITIVE..1.0);
                    let u2: f64 = self.rng.gen_range(0.0..std::f64::consts::TAU);
                    let r = (-2.0 * u1.ln()).sqrt();
                    pair[0] = r * u2.cos();
                    if pair.len() > 1 {
                        pair[1] = r * u2.sin();
                    }
                }
                let d = norm(&dir);
                if d == 0.0 {
                    vec![0.0; dim]
                } else {
                    let u: f64 = self.rng.gen_range(0.0..1.0);
                    let radius = self.bound * u.powf(1.0 / dim as f64);
                    dir.iter().map(|x| x / d * radius).collect()
                }
            }
        };
        let n = norm(&e);
        debug_assert!(n <= self.bound * (1.0 + 1e-12));
        self.max_emitted = self.max_emitted.max(n);
        e
    }

    pub fn sample_scalar(&mut self) -> f64 {
        self.sample(1)[0]
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    /// Largest `||e||` emitted so far.
    pub fn max_emitted(&self) -> f64 {
        self.max_emitted
    }
}

/// Zeroth-order view with bounded measurement noise added to every reading.
pub struct NoisyOracle<'a> {
    inner: ZoOracle<'a>,
    stream: RefCell<NoiseStream>,
}

impl<'a> NoisyOracle<'a> {
    pub fn new(prob: &'a Problem, stream: NoiseStream) -> Self {
        NoisyOracle { inner: prob.zeroth_order(), stream: RefCell::new(stream) }
    }

    pub fn max_emitted(&self) -> f64 {
        self.stream.borrow().max_emitted()
    }
}

impl ZeroOrder for NoisyOracle<'_> {
    fn f(&self, x: &[f64], theta: &[f64], mode: usize) -> f64 {
        self.inner.f(x, theta, mode) + self.stream.borrow_mut().sample_scalar()
    }

    fn g(&self, x: &[f64]) -> Vec<f64> {
        let mut g = self.inner.g(x);
        if !g.is_empty() {
            let e = self.stream.borrow_mut().sample(g.len());
            for (gi, ei) in g.iter_mut().zip(e) {
                *gi += ei;
            }
        }
        g
    }

    fn constraint_count(&self) -> usize {
        self.inner.constraint_count()
    }
}

/// Measures the objective in mode `q` with optional bounded noise; the
/// counted query path used by running algorithms.
pub fn evaluate_objective(
    oracle: &dyn ZeroOrder,
    x: &[f64],
    theta: &[f64],
    mode: usize,
) -> f64 {
    oracle.f(x, theta, mode)
}

// ---------------------------------------------------------------------------
// Exosystem
// ---------------------------------------------------------------------------

/// Autonomous generator of the time-varying parameter: `dtheta/dt =
/// rate * field(theta)`, with `theta` confined to an invariant set.
pub struct Exosystem {
    pub dim: usize,
    /// Time-scale parameter (eps_theta).
    pub rate: f64,
    field: Box<MapFn>,
    pub domain: FeasibleSet,
}

impl std::fmt::Debug for Exosystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Exosystem")
            .field("dim", &self.dim)
            .field("rate", &self.rate)
            .finish()
    }
}

/// Drift beyond this distance from the invariant set is an error; below it
/// the state is clamped back.
pub const EXO_DRIFT_TOL: f64 = 1e-6;

impl Exosystem {
    pub fn new(
        dim: usize,
        rate: f64,
        field: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        domain: FeasibleSet,
    ) -> Self {
        Exosystem { dim, rate, field: Box::new(field), domain }
    }

    pub fn field(&self, theta: &[f64]) -> Vec<f64> {
        (self.field)(theta)
    }

    /// Scaled vector field `rate * field(theta)`.
    pub fn rate_vector(&self, theta: &[f64]) -> Vec<f64> {
        let mut v = (self.field)(theta);
        for vi in &mut v {
            *vi *= self.rate;
        }
        v
    }
}

/// Advances the exosystem by `dt` with the shared explicit integrator and
/// enforces the invariant set: clamped when drift is within
/// [`EXO_DRIFT_TOL`], an error beyond it.
pub fn exo_step(
    exo: &Exosystem,
    theta: &[f64],
    dt: f64,
    method: Integrator,
) -> Result<Vec<f64>, ProblemError> {
    debug_assert!(dt > 0.0);
    let next = explicit_step(method, theta, dt, |_, y, out| {
        let v = exo.rate_vector(y);
        out.copy_from_slice(&v);
    });
    let drift = exo.domain.distance(&next);
    if drift <= 1e-9 {
        Ok(next)
    } else if drift <= EXO_DRIFT_TOL {
        Ok(exo.domain.project(&next))
    } else {
        Err(ProblemError::ExoLeftDomain { distance: drift, tolerance: EXO_DRIFT_TOL })
    }
}

// ---------------------------------------------------------------------------
// Built-in problem library
// ---------------------------------------------------------------------------

/// Planar tracking objective `f(x, theta) = (x1-theta1)^2 + (x2-theta2)^2`.
fn tracking_quadratic(name: &str) -> Problem {
    Problem {
        name: name.to_string(),
        dim: 2,
        constraint_count: 0,
        theta_dim: 2,
        modes: 1,
        f: Box::new(|x, th, _| (x[0] - th[0]).powi(2) + (x[1] - th[1]).powi(2)),
        g: None,
        grad_f: Some(Box::new(|x, th, _| {
            vec![2.0 * (x[0] - th[0]), 2.0 * (x[1] - th[1])]
        })),
        jac_g: None,
        optimizer: None,
        critical_value: None,
        f_calls: AtomicU64::new(0),
        g_calls: AtomicU64::new(0),
        grad_calls: AtomicU64::new(0),
    }
}

/// Tracking problem on the disk of radius 3/2 centered at (3/2, 0).
pub fn example1() -> Problem {
    tracking_quadratic("example1")
}

/// Tracking problem on the unit box with a rotating unconstrained minimizer.
pub fn example2() -> Problem {
    tracking_quadratic("example2")
}

/// Exosystem driving the example-1 parameter:
/// `dtheta1 = eps * sin(2 theta2)`, `dtheta2 = (eps/2) * cos(theta1)`.
/// The trajectory from the origin is a closed orbit inside the stored box.
pub fn exo_example1(eps_theta: f64) -> Exosystem {
    let domain = FeasibleSet::hyper_box(vec![-0.2, -0.9], vec![3.35, 0.9]).unwrap();
    Exosystem::new(
        2,
        eps_theta,
        |th| vec![(2.0 * th[1]).sin(), 0.5 * th[0].cos()],
        domain,
    )
}

/// Planar rotation exosystem `dtheta = eps * (-theta2, theta1)`; conserves
/// the radius, so the invariant set is a ball through the initial condition.
pub fn exo_rotation(eps_p: f64, theta0: &[f64]) -> Exosystem {
    let radius = norm(theta0).max(1e-6) + 1e-2;
    let domain = FeasibleSet::ball(vec![0.0; 2], radius).unwrap();
    Exosystem::new(2, eps_p, |th| vec![-th[1], th[0]], domain)
}

/// Constrained quadratic with one linear inequality:
/// `min (x1-2)^2 + (x2-2)^2 s.t. x1 + x2 <= 2` on the box `[0,3]^2`.
/// KKT point: `x* = (1,1)`, `lambda* = 2`.
pub fn desk_kkt() -> Problem {
    Problem {
        name: "desk_kkt".to_string(),
        dim: 2,
        constraint_count: 1,
        theta_dim: 0,
        modes: 1,
        f: Box::new(|x, _, _| (x[0] - 2.0).powi(2) + (x[1] - 2.0).powi(2)),
        g: Some(Box::new(|x| vec![x[0] + x[1] - 2.0])),
        grad_f: Some(Box::new(|x, _, _| vec![2.0 * (x[0] - 2.0), 2.0 * (x[1] - 2.0)])),
        jac_g: Some(Box::new(|_| vec![vec![1.0, 1.0]])),
        optimizer: Some(Box::new(|_| vec![1.0, 1.0])),
        critical_value: None,
        f_calls: AtomicU64::new(0),
        g_calls: AtomicU64::new(0),
        grad_calls: AtomicU64::new(0),
    }
}

/// Declared minimizer of the two-mode switching family.
pub const SWITCHING_MINIMIZER: [f64; 2] = [0.4, -0.2];

/// Two strongly convex quadratic modes sharing minimizer and critical point
/// (both gradients vanish there).
pub fn switching_two_mode() -> Problem {
    let xs = SWITCHING_MINIMIZER;
    Problem {
        name: "switching_two_mode".to_string(),
        dim: 2,
        constraint_count: 0,
        theta_dim: 0,
        modes: 2,
        f: Box::new(move |x, _, q| {
            let d1 = x[0] - xs[0];
            let d2 = x[1] - xs[1];
            match q {
                0 => d1 * d1 + 2.0 * d2 * d2,
                _ => 2.0 * d1 * d1 + d2 * d2 + 0.5,
            }
        }),
        g: None,
        grad_f: Some(Box::new(move |x, _, q| {
            let d1 = x[0] - xs[0];
            let d2 = x[1] - xs[1];
            match q {
                0 => vec![2.0 * d1, 4.0 * d2],
                _ => vec![4.0 * d1, 2.0 * d2],
            }
        })),
        jac_g: None,
        optimizer: Some(Box::new(move |_| xs.to_vec())),
        critical_value: Some(vec![0.0, 0.0]),
        f_calls: AtomicU64::new(0),
        g_calls: AtomicU64::new(0),
        grad_calls: AtomicU64::new(0),
    }
}

/// Defaults for the regionally convex landscape.
pub const REGIONAL_MINIMIZER: [f64; 2] = [0.5, 0.25];

/// A landscape that is exactly `||x - x*||^2` within radius `r0` of the
/// minimizer and grows a `0.5 sin(3x1) sin(3x2)` ripple outside: convex on
/// the safe region, multi-modal beyond it. Stand-in for an unspecified
/// published landscape; see the README.
pub fn regional() -> Problem {
    let xs = REGIONAL_MINIMIZER;
    let r0 = 1.2;
    let r1 = 2.0;
    // C^2 quintic smoothstep and its derivative.
    let blend = move |r: f64| -> (f64, f64) {
        if r <= r0 {
            (0.0, 0.0)
        } else if r >= r1 {
            (1.0, 0.0)
        } else {
            let u = (r - r0) / (r1 - r0);
            let s = u * u * u * (10.0 - 15.0 * u + 6.0 * u * u);
            let ds = 30.0 * u * u * (1.0 - u) * (1.0 - u) / (r1 - r0);
            (s, ds)
        }
    };
    Problem {
        name: "regional".to_string(),
        dim: 2,
        constraint_count: 0,
        theta_dim: 0,
        modes: 1,
        f: Box::new(move |x, _, _| {
            let dx = [x[0] - xs[0], x[1] - xs[1]];
            let r = (dx[0] * dx[0] + dx[1] * dx[1]).sqrt();
            let (s, _) = blend(r);
            dx[0] * dx[0] + dx[1] * dx[1] + 0.5 * s * (3.0 * x[0]).sin() * (3.0 * x[1]).sin()
        }),
        g: None,
        grad_f: Some(Box::new(move |x, _, _| {
            let dx = [x[0] - xs[0], x[1] - xs[1]];
            let r = (dx[0] * dx[0] + dx[1] * dx[1]).sqrt();
            let (s, ds) = blend(r);
            let ripple = (3.0 * x[0]).sin() * (3.0 * x[1]).sin();
            let mut grad = vec![2.0 * dx[0], 2.0 * dx[1]];
            if r > 0.0 {
                grad[0] += 0.5 * ds * dx[0] / r * ripple;
                grad[1] += 0.5 * ds * dx[1] / r * ripple;
            }
            grad[0] += 0.5 * s * 3.0 * (3.0 * x[0]).cos() * (3.0 * x[1]).sin();
            grad[1] += 0.5 * s * 3.0 * (3.0 * x[0]).sin() * (3.0 * x[1]).cos();
            grad
        })),
        jac_g: None,
        optimizer: Some(Box::new(move |_| xs.to_vec())),
        critical_value: None,
        f_calls: AtomicU64::new(0),
        g_calls: AtomicU64::new(0),
        grad_calls: AtomicU64::new(0),
    }
}

/// Smooth non-quadratic reference objective `f(x) = log(1 + ||x||^2) +
/// ||x||^2` in three variables; used by gradient-extraction bias checks,
/// which need nonzero mixed second and third derivatives.
pub fn nonquad_reference() -> Problem {
    Problem {
        name: "nonquad_reference".to_string(),
        dim: 3,
        constraint_count: 0,
        theta_dim: 0,
        modes: 1,
        f: Box::new(|x, _, _| {
            let r2 = dot(x, x);
            (1.0 + r2).ln() + r2
        }),
        g: None,
        grad_f: Some(Box::new(|x, _, _| {
            let r2 = dot(x, x);
            x.iter().map(|xi| 2.0 * xi / (1.0 + r2) + 2.0 * xi).collect()
        })),
        jac_g: None,
        optimizer: Some(Box::new(|_| vec![0.0, 0.0, 0.0])),
        critical_value: None,
        f_calls: AtomicU64::new(0),
        g_calls: AtomicU64::new(0),
        grad_calls: AtomicU64::new(0),
    }
}

/// Custom quadratic `f(x) = 1/2 x'Qx + c'x + d` with optional linear
/// inequality constraints `Gx <= h` (so `g(x) = Gx - h`).
pub fn quadratic(
    q: Vec<Vec<f64>>,
    c: Vec<f64>,
    constant: f64,
    g_rows: Vec<Vec<f64>>,
    g_rhs: Vec<f64>,
    minimizer: Option<Vec<f64>>,
) -> Problem {
    let n = c.len();
    assert!(q.len() == n && q.iter().all(|row| row.len() == n));
    assert_eq!(g_rows.len(), g_rhs.len());
    let m = g_rows.len();
    let q_grad = q.clone();
    let c_grad = c.clone();
    let (rows_f, rhs_f) = (g_rows.clone(), g_rhs.clone());
    let rows_j = g_rows;
    Problem {
        name: "quadratic".to_string(),
        dim: n,
        constraint_count: m,
        theta_dim: 0,
        modes: 1,
        f: Box::new(move |x, _, _| {
            let mut acc = constant;
            for (i, row) in q.iter().enumerate() {
                acc += 0.5 * x[i] * dot(row, x);
            }
            acc + dot(&c, x)
        }),
        g: if m == 0 {
            None
        } else {
            Some(Box::new(move |x| {
                rows_f.iter().zip(&rhs_f).map(|(row, h)| dot(row, x) - h).collect()
            }))
        },
        grad_f: Some(Box::new(move |x, _, _| {
            (0..x.len())
                .map(|i| {
                    let mut acc = c_grad[i];
                    for j in 0..x.len() {
                        acc += 0.5 * (q_grad[i][j] + q_grad[j][i]) * x[j];
                    }
                    acc
                })
                .collect()
        })),
        jac_g: if m == 0 {
            None
        } else {
            Some(Box::new(move |_| rows_j.clone()))
        },
        optimizer: minimizer.map(|m| {
            Box::new(move |_: &[f64]| m.clone()) as Box<MapFn>
        }),
        critical_value: None,
        f_calls: AtomicU64::new(0),
        g_calls: AtomicU64::new(0),
        grad_calls: AtomicU64::new(0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example1_value_at_origin_target() {
        let p = example1();
        let v = p.zeroth_order().f(&[1.0, 1.0], &[0.0, 0.0], 0);
        assert_eq!(v, 2.0);
        assert_eq!(p.f_calls(), 1);
    }

    #[test]
    fn declared_minimizer_attains_minimum() {
        let p = example1();
        let v = p.raw_f(&[0.3, -0.7], &[0.3, -0.7], 0);
        assert_eq!(v, 0.0);
    }

    #[test]
    fn noise_is_bounded_and_replayable() {
        let spec = NoiseSpec {
            bound: 1e-3,
            seed: 7,
            target: NoiseTarget::Measurement,
            mode: NoiseMode::Ball,
        };
        let p = quadratic(vec![vec![2.0]], vec![0.0], 0.0, vec![], vec![], None);
        let a = {
            let o = NoisyOracle::new(&p, NoiseStream::new(&spec));
            o.f(&[3.0], &[], 0)
        };
        let b = {
            let o = NoisyOracle::new(&p, NoiseStream::new(&spec));
            o.f(&[3.0], &[], 0)
        };
        assert_eq!(a, b, "same seed must replay bit-identically");
        assert!((a - 9.0).abs() <= 1e-3);
        let mut stream = NoiseStream::new(&spec);
        for dim in [1, 2, 5] {
            for _ in 0..10_000 {
                let e = stream.sample(dim);
                assert!(norm(&e) <= 1e-3);
            }
        }
        assert!(stream.max_emitted() <= 1e-3);
    }

    #[test]
    fn constant_direction_noise_hits_the_bound() {
        let spec = NoiseSpec {
            bound: 5e-4,
            seed: 1,
            target: NoiseTarget::Measurement,
            mode: NoiseMode::ConstantDirection,
        };
        let mut stream = NoiseStream::new(&spec);
        let e = stream.sample(3);
        assert_eq!(e, vec![5e-4, 0.0, 0.0]);
    }

    #[test]
    fn gradient_counter_audit() {
        let p = desk_kkt();
        let zo = p.zeroth_order();
        for _ in 0..100 {
            zo.f(&[1.0, 1.0], &[], 0);
            zo.g(&[1.0, 1.0]);
        }
        assert_eq!(p.grad_calls(), 0, "zeroth-order path must never touch gradients");
        let fo = p.first_order().unwrap();
        fo.grad_f(&[1.0, 1.0], &[], 0);
        fo.jac_g(&[1.0, 1.0]);
        assert_eq!(p.grad_calls(), 2);
    }

    #[test]
    fn rotation_exosystem_conserves_radius() {
        let theta0 = [1.2, 0.0];
        let exo = exo_rotation(1e-3, &theta0);
        let mut th = theta0.to_vec();
        let h = 1e-2;
        for _ in 0..100 {
            th = exo_step(&exo, &th, h, Integrator::Rk4).unwrap();
        }
        assert!((norm(&th) - 1.2).abs() < 1e-9, "radius drift over one time unit");
    }

    #[test]
    fn zero_field_keeps_theta() {
        let exo = Exosystem::new(2, 1.0, |_| vec![0.0, 0.0], FeasibleSet::whole_space(2));
        let th = exo_step(&exo, &[0.4, -0.3], 0.5, Integrator::Rk4).unwrap();
        assert_eq!(th, vec![0.4, -0.3]);
    }

    #[test]
    fn example1_exosystem_against_fine_reference() {
        let exo = exo_example1(1e-2);
        let coarse = exo_step(&exo, &[0.0, 0.0], 1e-2, Integrator::Rk4).unwrap();
        let mut fine = vec![0.0, 0.0];
        for _ in 0..1000 {
            fine = exo_step(&exo, &fine, 1e-5, Integrator::Rk4).unwrap();
        }
        let err = coarse
            .iter()
            .zip(&fine)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-8, "one coarse step vs fine reference: {err}");
    }

    #[test]
    fn example1_orbit_stays_in_domain() {
        let exo = exo_example1(1e-2);
        let mut th = vec![0.0, 0.0];
        for _ in 0..200_000 {
            th = exo_step(&exo, &th, 1e-2, Integrator::Rk4).unwrap();
        }
        assert!(exo.domain.member(&th, 0.0));
    }

    #[test]
    fn switching_family_validates() {
        let p = switching_two_mode();
        p.validate_switching_family(&SWITCHING_MINIMIZER).unwrap();
        assert!(p.validate_switching_family(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn quadratic_gradient_matches_finite_differences() {
        let p = quadratic(
            vec![vec![2.0, 0.5], vec![0.5, 4.0]],
            vec![-1.0, 0.3],
            2.0,
            vec![vec![1.0, 1.0]],
            vec![2.0],
            None,
        );
        let fo = p.first_order().unwrap();
        let x = [0.7, -0.4];
        let g = fo.grad_f(&x, &[], 0);
        let h = 1e-6;
        for i in 0..2 {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[i] += h;
            xm[i] -= h;
            let fd = (p.raw_f(&xp, &[], 0) - p.raw_f(&xm, &[], 0)) / (2.0 * h);
            assert!((g[i] - fd).abs() < 1e-6, "component {i}: {} vs {fd}", g[i]);
        }
    }

    #[test]
    fn regional_gradient_matches_finite_differences() {
        let p = regional();
        let fo = p.first_order().unwrap();
        for x in [[0.6, 0.3], [1.8, 0.9], [2.5, -1.4]] {
            let g = fo.grad_f(&x, &[], 0);
            let h = 1e-6;
            for i in 0..2 {
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                xp[i] += h;
                xm[i] -= h;
                let fd = (p.raw_f(&xp, &[], 0) - p.raw_f(&xm, &[], 0)) / (2.0 * h);
                assert!((g[i] - fd).abs() < 1e-5, "at {x:?} component {i}: {} vs {fd}", g[i]);
            }
        }
    }
}
