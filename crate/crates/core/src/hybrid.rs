//! Average-dwell-time switching automaton.
//!
//! A timer `tau` flows in `[0, N0]` at a rate bounded by `1/tau_d`; a mode
//! jump is permitted only while `tau >= 1` and consumes one unit of timer.
//! Every signal the automaton can generate obeys the average dwell-time
//! bound `S(t1, t2) <= (t2 - t1)/tau_d + N0`.
//!
//! The automaton itself is nondeterministic; the policy layer here picks a
//! deterministic instance (eager or seeded-lazy jump timing, cyclic or
//! seeded-random mode targets) so runs are reproducible.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HybridError {
    #[error("flow rate {rate} outside [0, 1/tau_d] = [0, {max}]")]
    BadFlowRate { rate: f64, max: f64 },
    #[error("dwell time must be positive, got {0}")]
    BadDwellTime(f64),
    #[error("chatter bound must be at least 1, got {0}")]
    BadChatterBound(f64),
    #[error("switching requires at least 2 modes, got {0}")]
    TooFewModes(usize),
    #[error(
        "ADT violated on window [{t1:.6}, {t2:.6}]: {count} switches > {bound:.6}"
    )]
    AdtViolation { t1: f64, t2: f64, count: usize, bound: f64 },
}

/// When the policy attempts a jump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum JumpTiming {
    /// Jump whenever the timer allows; the worst case for stability.
    Eager,
    /// Jump at seeded-random opportunities with the given per-step chance.
    Lazy { chance_per_step: f64 },
}

/// How the next mode is chosen from the others.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetRule {
    Cyclic,
    Random,
}

/// A recorded mode switch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchEvent {
    pub t: f64,
    pub q_before: usize,
    pub q_after: usize,
    /// Timer value after the jump.
    pub tau: f64,
}

#[derive(Debug, Clone)]
pub struct SwitchAutomaton {
    q: usize,
    tau: f64,
    tau_d: f64,
    n0: f64,
    flow_rate: f64,
    modes: usize,
    timing: JumpTiming,
    target: TargetRule,
    rng: ChaCha8Rng,
}

impl SwitchAutomaton {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        modes: usize,
        tau_d: f64,
        n0: f64,
        flow_rate: f64,
        initial_mode: usize,
        initial_tau: f64,
        timing: JumpTiming,
        target: TargetRule,
        seed: u64,
    ) -> Result<Self, HybridError> {
        if !(tau_d > 0.0) {
            return Err(HybridError::BadDwellTime(tau_d));
        }
        if n0 < 1.0 {
            return Err(HybridError::BadChatterBound(n0));
        }
        if modes < 2 {
            return Err(HybridError::TooFewModes(modes));
        }
        Self::check_flow_rate(flow_rate, tau_d)?;
        Ok(SwitchAutomaton {
            q: initial_mode.min(modes - 1),
            tau: initial_tau.clamp(0.0, n0),
            tau_d,
            n0,
            flow_rate,
            modes,
            timing,
            target,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    fn check_flow_rate(rate: f64, tau_d: f64) -> Result<(), HybridError> {
        let max = 1.0 / tau_d;
        if !(0.0..=max * (1.0 + 1e-12)).contains(&rate) {
            return Err(HybridError::BadFlowRate { rate, max });
        }
        Ok(())
    }

    pub fn mode(&self) -> usize {
        self.q
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn tau_d(&self) -> f64 {
        self.tau_d
    }

    pub fn chatter_bound(&self) -> f64 {
        self.n0
    }

    /// Advances the timer by `dt` at the stored flow rate and performs any
    /// jumps the policy requests. Events are stamped at the step's end time.
    pub fn step(&mut self, t_end: f64, dt: f64) -> Vec<SwitchEvent> {
        let rate = self.flow_rate;
        self.step_with_rate(t_end, dt, rate).expect("stored rate was validated")
    }

    /// As [`step`](Self::step) with an explicit flow rate in `[0, 1/tau_d]`.
    pub fn step_with_rate(
        &mut self,
        t_end: f64,
        dt: f64,
        flow_rate: f64,
    ) -> Result<Vec<SwitchEvent>, HybridError> {
        debug_assert!(dt > 0.0);
        Self::check_flow_rate(flow_rate, self.tau_d)?;
        self.tau = (self.tau + flow_rate * dt).min(self.n0);
        let mut events = Vec::new();
        while self.tau >= 1.0 && self.wants_jump() {
            let q_before = self.q;
            self.q = self.next_mode();
            self.tau -= 1.0;
            events.push(SwitchEvent { t: t_end, q_before, q_after: self.q, tau: self.tau });
        }
        Ok(events)
    }

    fn wants_jump(&mut self) -> bool {
        match self.timing {
            JumpTiming::Eager => true,
            JumpTiming::Lazy { chance_per_step } => self.rng.gen::<f64>() < chance_per_step,
        }
    }

    fn next_mode(&mut self) -> usize {
        match self.target {
            TargetRule::Cyclic => (self.q + 1) % self.modes,
            TargetRule::Random => {
                let pick = self.rng.gen_range(0..self.modes - 1);
                if pick >= self.q {
                    pick + 1
                } else {
                    pick
                }
            }
        }
    }
}

/// Post-hoc audit of a switch log against the average dwell-time bound.
///
/// Checks every window spanned by a pair of recorded switches: a window
/// closing in on switches `i..=j` contains `j - i + 1` of them over duration
/// `t_j - t_i`.
pub fn audit_adt(events: &[SwitchEvent], tau_d: f64, n0: f64) -> Result<(), HybridError> {
    for i in 0..events.len() {
        for j in i..events.len() {
            let count = j - i + 1;
            let span = events[j].t - events[i].t;
            let bound = span / tau_d + n0;
            if count as f64 > bound + 1e-9 {
                return Err(HybridError::AdtViolation {
                    t1: events[i].t,
                    t2: events[j].t,
                    count,
                    bound,
                });
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eager(tau_d: f64, n0: f64, tau0: f64) -> SwitchAutomaton {
        SwitchAutomaton::new(
            2,
            tau_d,
            n0,
            1.0 / tau_d,
            0,
            tau0,
            JumpTiming::Eager,
            TargetRule::Cyclic,
            3,
        )
        .unwrap()
    }

    #[test]
    fn eager_switch_count_within_adt_bound() {
        let mut a = eager(5.0, 2.0, 0.0);
        let dt = 0.01;
        let steps = (100.0 / dt) as usize;
        let mut events = Vec::new();
        for k in 1..=steps {
            events.extend(a.step(k as f64 * dt, dt));
        }
        assert!(events.len() <= 22, "count {}", events.len());
        assert_eq!(events.len(), 20);
        audit_adt(&events, 5.0, 2.0).unwrap();
    }

    #[test]
    fn zero_flow_rate_allows_only_initial_timer_budget() {
        let mut a = SwitchAutomaton::new(
            2,
            5.0,
            2.0,
            0.0,
            0,
            2.0,
            JumpTiming::Eager,
            TargetRule::Cyclic,
            3,
        )
        .unwrap();
        let mut events = Vec::new();
        for k in 1..=1000 {
            events.extend(a.step(k as f64 * 0.1, 0.1));
        }
        assert_eq!(events.len(), 2, "floor of tau(0) jumps, then starvation");
    }

    #[test]
    fn no_jump_before_dwell_time_from_empty_timer() {
        let mut a = eager(5.0, 2.0, 0.0);
        let dt = 0.001;
        let mut first = None;
        for k in 1..=10_000 {
            let t = k as f64 * dt;
            if let Some(e) = a.step(t, dt).first() {
                first = Some(e.t);
                break;
            }
        }
        let t = first.expect("a jump must eventually happen");
        assert!(t >= 5.0 - 1e-9, "first jump at {t}");
    }

    #[test]
    fn bad_flow_rate_is_a_config_error() {
        let mut a = eager(5.0, 2.0, 0.0);
        assert!(a.step_with_rate(0.1, 0.1, 0.3).is_err());
        assert!(SwitchAutomaton::new(
            2,
            5.0,
            2.0,
            0.5,
            0,
            0.0,
            JumpTiming::Eager,
            TargetRule::Cyclic,
            3
        )
        .is_err());
    }

    #[test]
    fn cyclic_and_random_targets_never_repeat_mode() {
        for target in [TargetRule::Cyclic, TargetRule::Random] {
            let mut a = SwitchAutomaton::new(
                4,
                1.0,
                3.0,
                1.0,
                0,
                3.0,
                JumpTiming::Eager,
                target,
                9,
            )
            .unwrap();
            for k in 1..=500 {
                for e in a.step(k as f64 * 0.5, 0.5) {
                    assert_ne!(e.q_before, e.q_after);
                }
            }
        }
    }

    #[test]
    fn randomized_policy_runs_always_pass_audit() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for run in 0..1000 {
            let tau_d = rng.gen_range(0.2..10.0);
            let n0 = rng.gen_range(1.0..4.0_f64).floor().max(1.0);
            let timing = if run % 2 == 0 {
                JumpTiming::Eager
            } else {
                JumpTiming::Lazy { chance_per_step: rng.gen_range(0.05..0.9) }
            };
            let mut a = SwitchAutomaton::new(
                3,
                tau_d,
                n0,
                rng.gen_range(0.0..1.0) / tau_d,
                0,
                rng.gen_range(0.0..n0),
                timing,
                TargetRule::Random,
                run,
            )
            .unwrap();
            let mut events = Vec::new();
            let dt = 0.05;
            for k in 1..=400 {
                // A random admissible flow rate per step exercises the
                // differential-inclusion freedom.
                let rate = rng.gen_range(0.0..1.0) / tau_d;
                events.extend(a.step_with_rate(k as f64 * dt, dt, rate).unwrap());
            }
            audit_adt(&events, tau_d, n0).unwrap();
        }
    }
}
