//! First-order rotor dynamics with command delay.

use crate::scalar::{wrap_tau, Real};
use std::collections::VecDeque;

/// Rotor state: yaw angle in `[0, 2π)`, current angular velocity, simulation
/// time, and the FIFO of not-yet-applied commands modeling control delay.
#[derive(Debug, Clone)]
pub struct ScannerState<T: Real> {
    pub theta: T,
    pub omega: T,
    pub time: T,
    pub omega_max: T,
    pending: VecDeque<T>,
}

impl<T: Real> ScannerState<T> {
    pub fn new(theta: T, omega_max: T) -> Self {
        Self {
            theta: wrap_tau(theta),
            omega: T::zero(),
            time: T::zero(),
            omega_max,
            pending: VecDeque::new(),
        }
    }
}

/// Advances the rotor one tick. The command issued now is queued; the one
/// issued `delay_steps` ticks ago is applied (zero before any command has
/// propagated through the queue). Commands are clamped to ±omega_max.
pub fn step_scanner<T: Real>(
    state: &mut ScannerState<T>,
    omega_cmd: T,
    dt: T,
    delay_steps: usize,
) {
    assert!(dt > T::zero(), "dt must be positive");
    let cmd = omega_cmd.clamp(-state.omega_max, state.omega_max);
    // keep the queue sized to the configured delay
    while state.pending.len() < delay_steps {
        state.pending.push_back(T::zero());
    }
    while state.pending.len() > delay_steps {
        state.pending.pop_front();
    }
    state.pending.push_back(cmd);
    let effective = state.pending.pop_front().unwrap();
    state.omega = effective;
    state.theta = wrap_tau(state.theta + effective * dt);
    state.time += dt;
}
