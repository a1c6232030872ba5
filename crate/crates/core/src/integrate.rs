//! Fixed-step explicit integration primitives shared by the simulator and
//! the exosystem stepper.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    Rk4,
    Euler,
}

impl Default for Integrator {
    fn default() -> Self {
        Integrator::Rk4
    }
}

/// One explicit step of `dy/dt = rate(y)` of size `h`.
///
/// `rate(y, out)` writes the derivative of `y` into `out`. The stage callback
/// `stage(s)` is invoked with the stage abscissa in `[0, 1]` before each rate
/// evaluation, letting the caller move exactly-integrated companions (the
/// dither bank) to the matching substep time.
pub fn explicit_step(
    method: Integrator,
    y: &[f64],
    h: f64,
    mut rate: impl FnMut(f64, &[f64], &mut [f64]),
) -> Vec<f64> {
    let d = y.len();
    match method {
        Integrator::Euler => {
            let mut k = vec![0.0; d];
            rate(0.0, y, &mut k);
            y.iter().zip(&k).map(|(yi, ki)| yi + h * ki).collect()
        }
        Integrator::Rk4 => {
            let mut k1 = vec![0.0; d];
            let mut k2 = vec![0.0; d];
            let mut k3 = vec![0.0; d];
            let mut k4 = vec![0.0; d];
            let mut stage = vec![0.0; d];
            rate(0.0, y, &mut k1);
            for i in 0..d {
                stage[i] = y[i] + 0.5 * h * k1[i];
            }
            rate(0.5, &stage, &mut k2);
            for i in 0..d {
                stage[i] = y[i] + 0.5 * h * k2[i];
            }
            rate(0.5, &stage, &mut k3);
            for i in 0..d {
                stage[i] = y[i] + h * k3[i];
            }
            rate(1.0, &stage, &mut k4);
            (0..d)
                .map(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rk4_matches_exponential_decay() {
        // dy/dt = -y, one step; local error of a 4th-order method.
        let h = 0.5;
        let y = explicit_step(Integrator::Rk4, &[1.0], h, |_, y, out| out[0] = -y[0]);
        let exact = (-h as f64).exp();
        assert!((y[0] - exact).abs() < h.powi(5));
    }

    #[test]
    fn euler_first_order() {
        let h = 0.1;
        let y = explicit_step(Integrator::Euler, &[1.0], h, |_, y, out| out[0] = -y[0]);
        assert!((y[0] - 0.9).abs() < 1e-15);
    }
}
