//! Right-hand sides of the projected zeroth-order algorithms and their
//! model-based target flows.
//!
//! Zeroth-order fields (`gzo_field`, `pdzo_field`, `dpzo_field`,
//! `vanilla_es_field`) touch only measured values of `f` and `g` through a
//! [`ZeroOrder`] oracle. The target and average flows take a first-order
//! oracle and exist for verification: they are the dynamics the zeroth-order
//! schemes emulate when the dither is fast and small.
//!
//! Every function here is pure in its arguments; the simulator owns time,
//! the oscillator state, and any noise.

use crate::problems::{FoOracle, ZeroOrder};
use crate::sets::{FeasibleSet, SetError};
use std::f64::consts::TAU;

/// Tunable parameters shared by the algorithm family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainSet {
    pub k_x: f64,
    pub alpha_x: f64,
    pub k_lambda: f64,
    pub alpha_lambda: f64,
    pub eps_xi: f64,
    pub eps_a: f64,
    pub eps_omega: f64,
    /// Upper clamp of the dual feasible region `[0, lambda_max]^m`; guards
    /// against divergence on misconfigured problems.
    pub lambda_max: f64,
}

impl Default for GainSet {
    fn default() -> Self {
        GainSet {
            k_x: 1.0,
            alpha_x: 0.1,
            k_lambda: 1.0,
            alpha_lambda: 0.1,
            eps_xi: 0.05,
            eps_a: 1e-2,
            eps_omega: 1e-2,
            lambda_max: 1e6,
        }
    }
}

impl GainSet {
    pub fn validate(&self) -> Result<(), String> {
        let fields = [
            ("k_x", self.k_x),
            ("alpha_x", self.alpha_x),
            ("k_lambda", self.k_lambda),
            ("alpha_lambda", self.alpha_lambda),
            ("eps_xi", self.eps_xi),
            ("eps_a", self.eps_a),
            ("eps_omega", self.eps_omega),
            ("lambda_max", self.lambda_max),
        ];
        for (name, v) in fields {
            if !(v > 0.0) || !v.is_finite() {
                return Err(format!("gain {name} must be a positive finite number, got {v}"));
            }
        }
        Ok(())
    }
}

/// The perturbed input actually applied to the plant: `xhat = x + eps_a * mu_hat`.
pub fn perturbed_input(x: &[f64], eps_a: f64, mu_hat: &[f64]) -> Vec<f64> {
    x.iter().zip(mu_hat).map(|(xi, mi)| xi + eps_a * mi).collect()
}

/// Low-pass filter rate `(-xi + input) / eps_xi`.
fn filter_rate(xi: &[f64], input: &[f64], eps_xi: f64) -> Vec<f64> {
    xi.iter().zip(input).map(|(x, u)| (-x + u) / eps_xi).collect()
}

/// Gradient-estimate drive `(2/eps_a) * y * mu_hat` for a measured output `y`.
fn measurement_drive(y: f64, eps_a: f64, mu_hat: &[f64]) -> Vec<f64> {
    mu_hat.iter().map(|m| 2.0 / eps_a * y * m).collect()
}

/// Projection-based decision step `k * (P_set(x - alpha * dir) - x)`.
fn projected_step(set: &FeasibleSet, x: &[f64], dir: &[f64], k: f64, alpha: f64) -> Vec<f64> {
    let target: Vec<f64> = x.iter().zip(dir).map(|(xi, di)| xi - alpha * di).collect();
    let p = set.project(&target);
    p.iter().zip(x).map(|(pi, xi)| k * (pi - xi)).collect()
}

/// Scalar extremum-seeking field
/// `-k_x (2/eps_a) f(x + eps_a sin(w t)) sin(w t)` with `w = 2 pi kappa / eps_omega`.
pub fn vanilla_es_field(
    x: f64,
    t: f64,
    oracle: &dyn ZeroOrder,
    gains: &GainSet,
    kappa: f64,
    theta: &[f64],
    mode: usize,
) -> f64 {
    let omega = TAU * kappa / gains.eps_omega;
    let s = (omega * t).sin();
    let y = oracle.f(&[x + gains.eps_a * s], theta, mode);
    -gains.k_x * 2.0 / gains.eps_a * y * s
}

/// Projected gradient zeroth-order field: rates of `(x, xi)`.
///
/// `x` flows toward the projection of `x - alpha_x xi`; `xi` low-pass filters
/// the dithered measurement of `f` in the active mode.
pub fn gzo_field(
    x: &[f64],
    xi: &[f64],
    mu_hat: &[f64],
    oracle: &dyn ZeroOrder,
    set: &FeasibleSet,
    gains: &GainSet,
    theta: &[f64],
    mode: usize,
) -> (Vec<f64>, Vec<f64>) {
    let dx = projected_step(set, x, xi, gains.k_x, gains.alpha_x);
    let xhat = perturbed_input(x, gains.eps_a, mu_hat);
    let y = oracle.f(&xhat, theta, mode);
    let drive = measurement_drive(y, gains.eps_a, mu_hat);
    let dxi = filter_rate(xi, &drive, gains.eps_xi);
    (dx, dxi)
}

/// Projected primal-dual zeroth-order field: rates of `(x, lambda, xi1, xi2)`.
pub fn pdzo_field(
    x: &[f64],
    lambda: &[f64],
    xi1: &[f64],
    xi2: &[f64],
    mu_hat: &[f64],
    oracle: &dyn ZeroOrder,
    set: &FeasibleSet,
    gains: &GainSet,
    theta: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let dx = projected_step(set, x, xi1, gains.k_x, gains.alpha_x);
    // Dual ascent step onto the clamped orthant.
    let dl: Vec<f64> = lambda
        .iter()
        .zip(xi2)
        .map(|(l, s)| {
            let target = (l + gains.alpha_lambda * s).clamp(0.0, gains.lambda_max);
            gains.k_lambda * (target - l)
        })
        .collect();
    let xhat = perturbed_input(x, gains.eps_a, mu_hat);
    let y = oracle.f(&xhat, theta, 0);
    let gval = oracle.g(&xhat);
    let lagrangian = y + lambda.iter().zip(&gval).map(|(l, g)| l * g).sum::<f64>();
    let drive1 = measurement_drive(lagrangian, gains.eps_a, mu_hat);
    let dxi1 = filter_rate(xi1, &drive1, gains.eps_xi);
    let dxi2 = filter_rate(xi2, &gval, gains.eps_xi);
    (dx, dl, dxi1, dxi2)
}

/// Slack the discontinuous field tolerates before declaring the state
/// outside the feasible set. Near the boundary the unconstrained descent
/// direction points outward, so intermediate integrator stages overshoot by
/// O(step * rate); they are pulled back onto the set before the tangent
/// cone is formed. The committed trajectory itself is kept on the set by
/// the post-step guard.
pub const DPZO_STAGE_TOL: f64 = 1e-2;

/// Discontinuous projected zeroth-order field: `x` flows along the tangent
/// cone projection of the descent direction `-xi`; `xi` as in [`gzo_field`].
///
/// The state must lie within [`DPZO_STAGE_TOL`] of the set; intermediate
/// integrator stages are pulled back onto the set before the cone is formed.
pub fn dpzo_field(
    x: &[f64],
    xi: &[f64],
    mu_hat: &[f64],
    oracle: &dyn ZeroOrder,
    set: &FeasibleSet,
    gains: &GainSet,
    theta: &[f64],
    mode: usize,
) -> Result<(Vec<f64>, Vec<f64>), SetError> {
    let d = set.distance(x);
    if d > DPZO_STAGE_TOL {
        return Err(SetError::NotInSet { distance: d, tolerance: DPZO_STAGE_TOL });
    }
    let on_set = if d > 0.0 { set.project(x) } else { x.to_vec() };
    let neg_xi: Vec<f64> = xi.iter().map(|v| -v).collect();
    let tangent = set.tangent_project(&on_set, &neg_xi)?;
    let dx: Vec<f64> = tangent.iter().map(|v| gains.k_x * v).collect();
    let xhat = perturbed_input(x, gains.eps_a, mu_hat);
    let y = oracle.f(&xhat, theta, mode);
    let drive = measurement_drive(y, gains.eps_a, mu_hat);
    let dxi = filter_rate(xi, &drive, gains.eps_xi);
    Ok((dx, dxi))
}

/// Model-based projected gradient flow (verification only).
pub fn target_gradient_flow(
    p: &[f64],
    oracle: &FoOracle<'_>,
    set: &FeasibleSet,
    gains: &GainSet,
    theta: &[f64],
    mode: usize,
) -> Vec<f64> {
    let grad = oracle.grad_f(p, theta, mode);
    projected_step(set, p, &grad, gains.k_x, gains.alpha_x)
}

/// Model-based projected saddle flow (verification only): rates of the
/// primal `p1` and dual `p2` blocks.
pub fn target_saddle_flow(
    p1: &[f64],
    p2: &[f64],
    oracle: &FoOracle<'_>,
    set: &FeasibleSet,
    gains: &GainSet,
    theta: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let grad_f = oracle.grad_f(p1, theta, 0);
    let lag_grad: Vec<f64> = if p2.is_empty() {
        grad_f
    } else {
        let jac = oracle.jac_g(p1);
        let mut acc = grad_f;
        for (lj, row) in p2.iter().zip(&jac) {
            for (ai, ri) in acc.iter_mut().zip(row) {
                *ai += lj * ri;
            }
        }
        acc
    };
    let d1 = projected_step(set, p1, &lag_grad, gains.k_x, gains.alpha_x);
    let d2: Vec<f64> = if p2.is_empty() {
        Vec::new()
    } else {
        let gval = oracle.g(p1);
        p2.iter()
            .zip(&gval)
            .map(|(l, g)| {
                let target = (l + gains.alpha_lambda * g).clamp(0.0, gains.lambda_max);
                gains.k_lambda * (target - l)
            })
            .collect()
    };
    (d1, d2)
}

/// Average dynamics of the projected gradient zeroth-order scheme in the
/// vanishing-amplitude limit: the filter is driven by the analytic gradient.
pub fn average_gzo_field(
    x: &[f64],
    xi: &[f64],
    oracle: &FoOracle<'_>,
    set: &FeasibleSet,
    gains: &GainSet,
    theta: &[f64],
    mode: usize,
) -> (Vec<f64>, Vec<f64>) {
    let dx = projected_step(set, x, xi, gains.k_x, gains.alpha_x);
    let grad = oracle.grad_f(x, theta, mode);
    let dxi = filter_rate(xi, &grad, gains.eps_xi);
    (dx, dxi)
}

/// Average dynamics of the discontinuous projected scheme; companion of
/// [`average_gzo_field`] for Lyapunov-decrease diagnostics.
pub fn average_dpzo_field(
    x: &[f64],
    xi: &[f64],
    oracle: &FoOracle<'_>,
    set: &FeasibleSet,
    gains: &GainSet,
    theta: &[f64],
    mode: usize,
) -> Result<(Vec<f64>, Vec<f64>), SetError> {
    let d = set.distance(x);
    if d > DPZO_STAGE_TOL {
        return Err(SetError::NotInSet { distance: d, tolerance: DPZO_STAGE_TOL });
    }
    let on_set = if d > 0.0 { set.project(x) } else { x.to_vec() };
    let neg_xi: Vec<f64> = xi.iter().map(|v| -v).collect();
    let tangent = set.tangent_project(&on_set, &neg_xi)?;
    let dx: Vec<f64> = tangent.iter().map(|v| gains.k_x * v).collect();
    let grad = oracle.grad_f(x, theta, mode);
    let dxi = filter_rate(xi, &grad, gains.eps_xi);
    Ok((dx, dxi))
}
