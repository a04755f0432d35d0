//! Continuing cart-pole: classic cart-pole physics without termination,
//! with the cart velocity clamped and the pole angle wrapped to `(−π, π]`.

use std::f64::consts::PI;

use rand::Rng;

use crate::labels::Letter;
use crate::learning::{EnvRng, Environment, StepOutcome};

pub const GRAVITY: f64 = 9.8;
pub const MASS_CART: f64 = 1.0;
pub const MASS_POLE: f64 = 0.1;
pub const HALF_LENGTH: f64 = 0.5;
pub const FORCE: f64 = 10.0;
pub const DT: f64 = 0.02;
pub const MAX_SPEED: f64 = 1.0;
pub const X_LIMIT: f64 = 2.4;
pub const THETA_LIMIT: f64 = PI / 15.0;

pub const PUSH_LEFT: usize = 0;
pub const PUSH_RIGHT: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CartState {
    pub x: f64,
    pub x_dot: f64,
    pub theta: f64,
    pub theta_dot: f64,
}

/// Wraps an angle into `(−π, π]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let mut t = theta % (2.0 * PI);
    if t > PI {
        t -= 2.0 * PI;
    } else if t <= -PI {
        t += 2.0 * PI;
    }
    t
}

/// One Euler step of the cart-pole dynamics.
pub fn dynamics(s: CartState, action: usize) -> CartState {
    let force = if action == PUSH_RIGHT { FORCE } else { -FORCE };
    let total_mass = MASS_CART + MASS_POLE;
    let pole_mass_length = MASS_POLE * HALF_LENGTH;
    let (sin, cos) = s.theta.sin_cos();
    let temp = (force + pole_mass_length * s.theta_dot * s.theta_dot * sin) / total_mass;
    let theta_acc = (GRAVITY * sin - cos * temp) / (HALF_LENGTH * (4.0 / 3.0 - MASS_POLE * cos * cos / total_mass));
    let x_acc = temp - pole_mass_length * theta_acc * cos / total_mass;
    CartState {
        x: s.x + DT * s.x_dot,
        x_dot: (s.x_dot + DT * x_acc).clamp(-MAX_SPEED, MAX_SPEED),
        theta: wrap_angle(s.theta + DT * s.theta_dot),
        theta_dot: s.theta_dot + DT * theta_acc,
    }
}

pub fn scoring_reward(s: &CartState) -> f64 {
    if s.x.abs() <= X_LIMIT && s.theta.abs() <= THETA_LIMIT {
        1.0
    } else {
        0.0
    }
}

/// Uniform binning of the four state variables. Cart position and both
/// velocities saturate into their end bins; the angle is binned on the
/// circle with one bin centred on upright.
#[derive(Debug, Clone, PartialEq)]
pub struct Discretizer {
    pub x_bins: usize,
    pub x_range: (f64, f64),
    pub v_bins: usize,
    pub v_range: (f64, f64),
    pub theta_bins: usize,
    pub omega_bins: usize,
    pub omega_range: (f64, f64),
}

impl Default for Discretizer {
    fn default() -> Self {
        Self {
            x_bins: 10,
            x_range: (-3.0, 3.0),
            v_bins: 6,
            v_range: (-MAX_SPEED, MAX_SPEED),
            theta_bins: 16,
            omega_bins: 10,
            omega_range: (-8.0, 8.0),
        }
    }
}

fn linear_bin(v: f64, (lo, hi): (f64, f64), n: usize) -> usize {
    let t = ((v - lo) / (hi - lo) * n as f64).floor();
    if t.is_nan() || t < 0.0 {
        0
    } else {
        (t as usize).min(n - 1)
    }
}

fn bin_centre(i: usize, (lo, hi): (f64, f64), n: usize) -> f64 {
    lo + (i as f64 + 0.5) * (hi - lo) / n as f64
}

impl Discretizer {
    pub fn num_states(&self) -> usize {
        self.x_bins * self.v_bins * self.theta_bins * self.omega_bins
    }

    pub fn theta_bin(&self, theta: f64) -> usize {
        let width = 2.0 * PI / self.theta_bins as f64;
        let t = ((wrap_angle(theta) + PI + width / 2.0) / width).floor() as usize;
        t % self.theta_bins
    }

    pub fn bins(&self, s: &CartState) -> [usize; 4] {
        [
            linear_bin(s.x, self.x_range, self.x_bins),
            linear_bin(s.x_dot, self.v_range, self.v_bins),
            self.theta_bin(s.theta),
            linear_bin(s.theta_dot, self.omega_range, self.omega_bins),
        ]
    }

    pub fn index(&self, s: &CartState) -> usize {
        let [a, b, c, d] = self.bins(s);
        ((a * self.v_bins + b) * self.theta_bins + c) * self.omega_bins + d
    }

    pub fn unindex(&self, i: usize) -> [usize; 4] {
        let d = i % self.omega_bins;
        let i = i / self.omega_bins;
        let c = i % self.theta_bins;
        let i = i / self.theta_bins;
        [i / self.v_bins, i % self.v_bins, c, d]
    }

    /// Centre of the position and velocity bins of state `i`.
    pub fn x_centre(&self, i: usize) -> (f64, f64) {
        let [a, b, _, _] = self.unindex(i);
        (bin_centre(a, self.x_range, self.x_bins), bin_centre(b, self.v_range, self.v_bins))
    }
}

#[derive(Debug, Clone)]
pub struct CartPoleEnv {
    pub state: CartState,
    pub discretizer: Discretizer,
}

impl CartPoleEnv {
    pub fn new(discretizer: Discretizer) -> Self {
        Self { state: CartState { x: 0.0, x_dot: 0.0, theta: 0.0, theta_dot: 0.0 }, discretizer }
    }
}

impl Environment for CartPoleEnv {
    fn num_states(&self) -> usize {
        self.discretizer.num_states()
    }

    fn num_actions(&self) -> usize {
        2
    }

    fn availability(&self) -> Vec<bool> {
        vec![true; self.num_states() * 2]
    }

    fn reset(&mut self, rng: &mut EnvRng) -> usize {
        let mut u = || rng.random_range(-0.05..0.05);
        self.state = CartState { x: u(), x_dot: u(), theta: u(), theta_dot: u() };
        self.discretizer.index(&self.state)
    }

    fn step(&mut self, action: usize, _rng: &mut EnvRng) -> StepOutcome {
        self.state = dynamics(self.state, action);
        StepOutcome {
            next: self.discretizer.index(&self.state),
            reward: scoring_reward(&self.state),
            label: Letter::EMPTY,
        }
    }
}

/// One-step advice for keeping `x` inside `range`: at each state the
/// predicted position `x + ẋ·Δt` is taken at the bin centres, and when it lies
/// outside the range the push further outward is excluded. Returns the
/// member bitset over `S × A` and the distance term `−scale · gap` for the
/// excluded pairs.
pub fn range_advice(disc: &Discretizer, range: (f64, f64), scale: f64) -> (Vec<bool>, Vec<f64>) {
    let n = disc.num_states();
    let mut members = vec![true; n * 2];
    let mut dist = vec![0.0; n * 2];
    for s in 0..n {
        let (x, v) = disc.x_centre(s);
        let predicted = x + v * DT;
        if predicted > range.1 {
            members[s * 2 + PUSH_RIGHT] = false;
            dist[s * 2 + PUSH_RIGHT] = -scale * (predicted - range.1);
        } else if predicted < range.0 {
            members[s * 2 + PUSH_LEFT] = false;
            dist[s * 2 + PUSH_LEFT] = -scale * (range.0 - predicted);
        }
    }
    (members, dist)
}
