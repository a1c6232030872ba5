//! Sinusoidal dither bank: `n` planar oscillators advanced by exact rotation.
//!
//! Each channel `i` carries a 2-block of the state `mu` on the unit circle,
//! rotating at angular rate `2*pi*kappa_i / eps_omega`. The probing vector
//! `mu_hat` collects the first (odd-position) entry of every block. Rotations
//! are applied in closed form from a stored phase accumulator, so the circle
//! invariant `mu_i^2 + mu_{i+1}^2 = 1` holds to round-off for any horizon and
//! any step size.

use num::integer::{gcd, lcm};
use num::rational::Ratio;
use std::f64::consts::TAU;
use std::fmt;
use thiserror::Error;

/// A frequency-assumption violation: a pair of channels whose rational
/// frequency parameters coincide or sit in a 1:2 ratio.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrequencyViolation {
    pub i: usize,
    pub j: usize,
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    Equal,
    Double,
    NonPositive,
}

impl fmt::Display for FrequencyViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ViolationKind::Equal => write!(f, "kappa[{}] == kappa[{}]", self.i, self.j),
            ViolationKind::Double => write!(f, "kappa[{}] == 2 * kappa[{}]", self.i, self.j),
            ViolationKind::NonPositive => write!(f, "kappa[{}] is not positive", self.i),
        }
    }
}

#[derive(Debug, Error)]
pub enum DitherError {
    #[error("dither frequency assumption violated: {}", format_violations(.0))]
    Frequencies(Vec<FrequencyViolation>),
    #[error("dither parameter {name} must be positive, got {value}")]
    BadParameter { name: &'static str, value: f64 },
    #[error("expected {expected} phases, got {got}")]
    PhaseCount { expected: usize, got: usize },
}

fn format_violations(v: &[FrequencyViolation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

/// Checks the distinct-frequency assumption in exact rational arithmetic:
/// all `kappa_i > 0`, pairwise `kappa_i != kappa_j` and `kappa_i != 2 kappa_j`.
pub fn validate_frequencies(kappa: &[Ratio<i64>]) -> Result<(), Vec<FrequencyViolation>> {
    let mut violations = Vec::new();
    for (i, k) in kappa.iter().enumerate() {
        if *k <= Ratio::from_integer(0) {
            violations.push(FrequencyViolation { i, j: i, kind: ViolationKind::NonPositive });
        }
    }
    let two = Ratio::from_integer(2);
    for i in 0..kappa.len() {
        for j in 0..kappa.len() {
            if i == j {
                continue;
            }
            if i < j && kappa[i] == kappa[j] {
                violations.push(FrequencyViolation { i, j, kind: ViolationKind::Equal });
            }
            if kappa[i] == two * kappa[j] {
                violations.push(FrequencyViolation { i, j, kind: ViolationKind::Double });
            }
        }
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

/// First `n` primes, skipping any candidate that would break the
/// distinct-frequency assumption against those already chosen.
pub fn default_frequencies(n: usize) -> Vec<Ratio<i64>> {
    let mut chosen: Vec<i64> = Vec::with_capacity(n);
    let mut candidate: i64 = 2;
    while chosen.len() < n {
        let is_prime = candidate >= 2 && (2..candidate).take_while(|d| d * d <= candidate).all(|d| candidate % d != 0);
        if is_prime && chosen.iter().all(|&q| candidate != 2 * q && q != 2 * candidate) {
            chosen.push(candidate);
        }
        candidate += 1;
    }
    chosen.into_iter().map(Ratio::from_integer).collect()
}

/// The oscillator bank state.
#[derive(Debug, Clone, PartialEq)]
pub struct DitherBank {
    kappa: Vec<Ratio<i64>>,
    eps_omega: f64,
    eps_a: f64,
    /// Initial unit-circle block values `(mu_i(0), mu_{i+1}(0))` per channel.
    block0: Vec<[f64; 2]>,
    /// Accumulated rotation angle per channel, wrapped to `[0, 2*pi)`.
    angle: Vec<f64>,
}

impl DitherBank {
    /// Bank with the default phase, for which `mu_hat_i(t) =
    /// sin(2*pi*kappa_i*t / eps_omega)` exactly.
    pub fn new(kappa: Vec<Ratio<i64>>, eps_omega: f64, eps_a: f64) -> Result<Self, DitherError> {
        let n = kappa.len();
        Self::with_phases(kappa, eps_omega, eps_a, &vec![0.0; n])
    }

    /// Bank with per-channel phase offsets: `mu_hat_i(t) =
    /// sin(2*pi*kappa_i*t / eps_omega + phase_i)`.
    pub fn with_phases(
        kappa: Vec<Ratio<i64>>,
        eps_omega: f64,
        eps_a: f64,
        phases: &[f64],
    ) -> Result<Self, DitherError> {
        validate_frequencies(&kappa).map_err(DitherError::Frequencies)?;
        if !(eps_omega > 0.0) {
            return Err(DitherError::BadParameter { name: "eps_omega", value: eps_omega });
        }
        if !(eps_a > 0.0) {
            return Err(DitherError::BadParameter { name: "eps_a", value: eps_a });
        }
        if phases.len() != kappa.len() {
            return Err(DitherError::PhaseCount { expected: kappa.len(), got: phases.len() });
        }
        let block0 = phases.iter().map(|p| [p.sin(), -p.cos()]).collect();
        let angle = vec![0.0; kappa.len()];
        Ok(DitherBank { kappa, eps_omega, eps_a, block0, angle })
    }

    /// Bank from raw unit-circle blocks `(mu_i, mu_{i+1})`.
    pub fn from_blocks(
        kappa: Vec<Ratio<i64>>,
        eps_omega: f64,
        eps_a: f64,
        blocks: Vec<[f64; 2]>,
    ) -> Result<Self, DitherError> {
        validate_frequencies(&kappa).map_err(DitherError::Frequencies)?;
        if !(eps_omega > 0.0) {
            return Err(DitherError::BadParameter { name: "eps_omega", value: eps_omega });
        }
        if !(eps_a > 0.0) {
            return Err(DitherError::BadParameter { name: "eps_a", value: eps_a });
        }
        if blocks.len() != kappa.len() {
            return Err(DitherError::PhaseCount { expected: kappa.len(), got: blocks.len() });
        }
        for (i, b) in blocks.iter().enumerate() {
            let r = b[0] * b[0] + b[1] * b[1];
            if (r - 1.0).abs() > 1e-9 {
                return Err(DitherError::BadParameter {
                    name: "block norm",
                    value: r + i as f64 * 0.0,
                });
            }
        }
        let angle = vec![0.0; kappa.len()];
        Ok(DitherBank { kappa, eps_omega, eps_a, block0: blocks, angle })
    }

    pub fn channels(&self) -> usize {
        self.kappa.len()
    }

    pub fn kappa(&self) -> &[Ratio<i64>] {
        &self.kappa
    }

    pub fn eps_omega(&self) -> f64 {
        self.eps_omega
    }

    pub fn eps_a(&self) -> f64 {
        self.eps_a
    }

    pub fn max_kappa(&self) -> f64 {
        self.kappa
            .iter()
            .map(|k| ratio_to_f64(*k))
            .fold(0.0, f64::max)
    }

    /// Exact rotation by `dt`: each block turns by `2*pi*kappa_i*dt/eps_omega`.
    pub fn advance(&self, dt: f64) -> DitherBank {
        debug_assert!(dt >= 0.0);
        let mut out = self.clone();
        for (i, k) in self.kappa.iter().enumerate() {
            let rate = TAU * ratio_to_f64(*k) / self.eps_omega;
            out.angle[i] = (self.angle[i] + rate * dt).rem_euclid(TAU);
        }
        out
    }

    /// Current full `2n`-dimensional oscillator state.
    pub fn mu(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.kappa.len());
        for (b, th) in self.block0.iter().zip(&self.angle) {
            let (s, c) = th.sin_cos();
            out.push(b[0] * c - b[1] * s);
            out.push(b[0] * s + b[1] * c);
        }
        out
    }

    /// The probing vector `mu_hat`: odd entries of `mu`, one per channel.
    pub fn probe(&self) -> Vec<f64> {
        self.block0
            .iter()
            .zip(&self.angle)
            .map(|(b, th)| {
                let (s, c) = th.sin_cos();
                b[0] * c - b[1] * s
            })
            .collect()
    }

    /// Least `T > 0` such that every channel completes an integer number of
    /// cycles: `T * kappa_i / eps_omega` integral for all `i`.
    pub fn common_period(&self) -> f64 {
        self.eps_omega * common_cycle(&self.kappa)
    }
}

/// Least positive rational `S` with `S * kappa_i` integral for all channels,
/// as an `f64`: `lcm(denominators) / gcd(numerators)` of the reduced kappas.
fn common_cycle(kappa: &[Ratio<i64>]) -> f64 {
    let mut den_lcm: i64 = 1;
    let mut num_gcd: i64 = 0;
    for k in kappa {
        den_lcm = lcm(den_lcm, *k.denom());
        num_gcd = gcd(num_gcd, *k.numer());
    }
    den_lcm as f64 / num_gcd as f64
}

fn ratio_to_f64(r: Ratio<i64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Parses a frequency parameter written as an integer (`"3"`) or a fraction
/// (`"3/2"`).
pub fn parse_kappa(text: &str) -> Option<Ratio<i64>> {
    let text = text.trim();
    if let Some((num, den)) = text.split_once('/') {
        let n: i64 = num.trim().parse().ok()?;
        let d: i64 = den.trim().parse().ok()?;
        if d == 0 {
            return None;
        }
        Some(Ratio::new(n, d))
    } else {
        text.parse::<i64>().ok().map(Ratio::from_integer)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ints(v: &[i64]) -> Vec<Ratio<i64>> {
        v.iter().copied().map(Ratio::from_integer).collect()
    }

    #[test]
    fn frequency_validation() {
        assert!(validate_frequencies(&ints(&[1, 2])).is_err());
        assert!(validate_frequencies(&ints(&[2, 3])).is_ok());
        assert!(validate_frequencies(&ints(&[3, 5, 7])).is_ok());
        let err = validate_frequencies(&ints(&[3, 5, 6])).unwrap_err();
        assert!(err
            .iter()
            .any(|v| v.kind == ViolationKind::Double && v.i == 2 && v.j == 0));
    }

    #[test]
    fn construction_refuses_violations() {
        assert!(DitherBank::new(ints(&[1, 2]), 1.0, 0.01).is_err());
    }

    #[test]
    fn default_frequencies_pass_validation() {
        for n in 1..=6 {
            let k = default_frequencies(n);
            assert_eq!(k.len(), n);
            assert!(validate_frequencies(&k).is_ok());
        }
        assert_eq!(default_frequencies(2), ints(&[2, 3]));
    }

    #[test]
    fn quarter_period_reaches_peak() {
        let bank = DitherBank::new(ints(&[1]), 1.0, 0.01).unwrap();
        assert!(bank.probe()[0].abs() < 1e-15);
        let b = bank.advance(0.25);
        assert!((b.probe()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn advance_zero_is_identity() {
        let bank = DitherBank::new(ints(&[2, 3]), 0.1, 0.01).unwrap();
        assert_eq!(bank.advance(0.0).mu(), bank.mu());
    }

    #[test]
    fn full_period_returns() {
        let bank = DitherBank::new(ints(&[2]), 1.0, 0.01).unwrap();
        let b = bank.advance(0.5); // one full period of kappa = 2
        let d: f64 = bank
            .mu()
            .iter()
            .zip(b.mu())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(d < 1e-12);
    }

    #[test]
    fn advance_composes() {
        let bank = DitherBank::new(ints(&[2, 3]), 0.01, 0.01).unwrap();
        let one = bank.advance(0.37).advance(0.19);
        let two = bank.advance(0.56);
        let d: f64 = one
            .mu()
            .iter()
            .zip(two.mu())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(d < 1e-12);
    }

    #[test]
    fn probe_extracts_odd_entries() {
        let bank = DitherBank::from_blocks(ints(&[2, 3]), 1.0, 0.01, vec![[0.6, 0.8], [1.0, 0.0]])
            .unwrap();
        assert_eq!(bank.probe(), vec![0.6, 1.0]);
        assert_eq!(bank.mu(), vec![0.6, 0.8, 1.0, 0.0]);
    }

    #[test]
    fn default_phase_probe_starts_at_zero() {
        let bank = DitherBank::new(ints(&[2, 3, 5]), 1.0, 0.01).unwrap();
        assert!(bank.probe().iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn common_period_examples() {
        let b = DitherBank::new(ints(&[2, 3]), 1.0, 0.01).unwrap();
        assert!((b.common_period() - 1.0).abs() < 1e-15);
        let b = DitherBank::new(ints(&[1]), 0.1, 0.01).unwrap();
        assert!((b.common_period() - 0.1).abs() < 1e-15);
        let b = DitherBank::new(ints(&[3, 5, 7]), 1.0, 0.01).unwrap();
        assert!((b.common_period() - 1.0).abs() < 1e-15);
        let b = DitherBank::new(
            vec![Ratio::new(3, 2), Ratio::new(5, 2)],
            1.0,
            0.01,
        )
        .unwrap();
        // Periods 2/3 and 2/5; least common multiple is 2.
        assert!((b.common_period() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn unit_circle_invariant_long_run() {
        let mut bank = DitherBank::new(ints(&[2, 3]), 1e-2, 0.01).unwrap();
        for _ in 0..100_000 {
            bank = bank.advance(1e-2);
        }
        let mu = bank.mu();
        for b in mu.chunks(2) {
            assert!((b[0] * b[0] + b[1] * b[1] - 1.0).abs() < 1e-12);
        }
    }

    /// Time averages over one common period via trapezoid quadrature on the
    /// closed-form signal; spectral accuracy for these periodic integrands.
    fn period_average(bank: &DitherBank, f: impl Fn(&[f64]) -> f64) -> f64 {
        let period = bank.common_period();
        let n = 200_000;
        let dt = period / n as f64;
        let mut acc = 0.0;
        let mut b = bank.clone();
        for _ in 0..n {
            acc += f(&b.probe());
            b = b.advance(dt);
        }
        acc / n as f64
    }

    #[test]
    fn zero_mean_half_power_orthogonality() {
        for kappa in [ints(&[2, 3]), ints(&[3, 5, 7])] {
            let n = kappa.len();
            let bank = DitherBank::new(kappa, 1.0, 0.01).unwrap();
            for i in 0..n {
                let mean = period_average(&bank, |p| p[i]);
                assert!(mean.abs() < 1e-9, "mean {mean}");
                let power = period_average(&bank, |p| p[i] * p[i]);
                assert!((power - 0.5).abs() < 1e-9, "power {power}");
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    let cross = period_average(&bank, |p| p[i] * p[j]);
                    assert!(cross.abs() < 1e-9, "cross {cross}");
                    let skew = period_average(&bank, |p| p[i] * p[i] * p[j]);
                    assert!(skew.abs() < 1e-9, "skew {skew}");
                }
            }
        }
    }
}
