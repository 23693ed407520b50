//! Seedable classic-control environments.
//!
//! Physics constants follow the public Gym definitions (`Pendulum-v1`,
//! `CartPole-v1` with a continuous force). `PointMass2D` is a small
//! smoke-test task that is not part of the classic suite.
//!
//! Environments never reset themselves: once a step reports `done`, further
//! steps fail until [`Environment::reset`] is called. Horizon truncation is
//! reported as `done` exactly like termination.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spaces {
    pub obs_dim: usize,
    pub action_dim: usize,
    pub action_low: f64,
    pub action_high: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

pub trait Environment: Send {
    fn spaces(&self) -> Spaces;

    fn horizon(&self) -> usize;

    /// Draws a fresh initial state and returns its observation.
    fn reset(&mut self, rng: &mut dyn RngCore) -> Vec<f64>;

    fn step(&mut self, action: &[f64]) -> Result<StepResult>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvKind {
    Pendulum,
    CartPole,
    PointMass,
}

impl EnvKind {
    pub const ALL: [EnvKind; 3] = [EnvKind::Pendulum, EnvKind::CartPole, EnvKind::PointMass];

    pub fn name(self) -> &'static str {
        match self {
            EnvKind::Pendulum => "pendulum",
            EnvKind::CartPole => "cartpole",
            EnvKind::PointMass => "pointmass",
        }
    }

    pub fn make(self) -> Box<dyn Environment> {
        match self {
            EnvKind::Pendulum => Box::new(Pendulum::new()),
            EnvKind::CartPole => Box::new(CartPoleContinuous::new()),
            EnvKind::PointMass => Box::new(PointMass2D::new()),
        }
    }

    pub fn spaces(self) -> Spaces {
        self.make().spaces()
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pendulum" => Ok(EnvKind::Pendulum),
            "cartpole" => Ok(EnvKind::CartPole),
            "pointmass" => Ok(EnvKind::PointMass),
            other => Err(Error::Usage(format!(
                "unknown environment {other:?} (expected pendulum, cartpole or pointmass)"
            ))),
        }
    }
}

fn check_action(action: &[f64], dim: usize) -> Result<()> {
    if action.len() != dim {
        return Err(Error::Dimension {
            context: "environment action",
            expected: dim,
            got: action.len(),
        });
    }
    if let Some(bad) = action.iter().find(|a| !a.is_finite()) {
        return Err(Error::NonFinite(format!("action component {bad}")));
    }
    Ok(())
}

fn stepped_after_done(name: &str) -> Error {
    Error::Usage(format!("{name}: step called after the episode ended; reset first"))
}

/// Wraps an angle into `[-π, π)`.
pub fn wrap_angle(x: f64) -> f64 {
    (x + PI).rem_euclid(2.0 * PI) - PI
}

/// Inverted pendulum swing-up. Angle 0 is upright.
#[derive(Debug, Clone)]
pub struct Pendulum {
    theta: f64,
    theta_dot: f64,
    steps: usize,
    done: bool,
}

impl Pendulum {
    pub const GRAVITY: f64 = 10.0;
    pub const MASS: f64 = 1.0;
    pub const LENGTH: f64 = 1.0;
    pub const DT: f64 = 0.05;
    pub const MAX_SPEED: f64 = 8.0;
    pub const MAX_TORQUE: f64 = 2.0;
    pub const HORIZON: usize = 200;
    /// Most negative reward a single step can produce.
    pub const MIN_REWARD: f64 = -(PI * PI + 0.1 * 64.0 + 0.001 * 4.0);

    pub fn new() -> Self {
        Self {
            theta: PI,
            theta_dot: 0.0,
            steps: 0,
            done: false,
        }
    }

    /// Places the pendulum at an explicit state and starts a new episode.
    pub fn set_state(&mut self, theta: f64, theta_dot: f64) -> Vec<f64> {
        self.theta = theta;
        self.theta_dot = theta_dot;
        self.steps = 0;
        self.done = false;
        self.observation()
    }

    pub fn state(&self) -> (f64, f64) {
        (self.theta, self.theta_dot)
    }

    fn observation(&self) -> Vec<f64> {
        vec![self.theta.cos(), self.theta.sin(), self.theta_dot]
    }
}

impl Default for Pendulum {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for Pendulum {
    fn spaces(&self) -> Spaces {
        Spaces {
            obs_dim: 3,
            action_dim: 1,
            action_low: -Self::MAX_TORQUE,
            action_high: Self::MAX_TORQUE,
        }
    }

    fn horizon(&self) -> usize {
        Self::HORIZON
    }

    fn reset(&mut self, rng: &mut dyn RngCore) -> Vec<f64> {
        let theta = rng.random_range(-PI..=PI);
        let theta_dot = rng.random_range(-1.0..=1.0);
        self.set_state(theta, theta_dot)
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        if self.done {
            return Err(stepped_after_done("pendulum"));
        }
        check_action(action, 1)?;
        let u = action[0].clamp(-Self::MAX_TORQUE, Self::MAX_TORQUE);
        let (th, thdot) = (self.theta, self.theta_dot);
        let cost = wrap_angle(th).powi(2) + 0.1 * thdot * thdot + 0.001 * u * u;

        let (g, m, l) = (Self::GRAVITY, Self::MASS, Self::LENGTH);
        let accel = 3.0 * g / (2.0 * l) * th.sin() + 3.0 / (m * l * l) * u;
        let new_thdot = (thdot + accel * Self::DT).clamp(-Self::MAX_SPEED, Self::MAX_SPEED);
        self.theta = th + new_thdot * Self::DT;
        self.theta_dot = new_thdot;
        self.steps += 1;
        self.done = self.steps >= Self::HORIZON;
        Ok(StepResult {
            observation: self.observation(),
            reward: -cost,
            done: self.done,
        })
    }
}

/// Cart-pole balancing with a continuous force in `[-1, 1] × 10 N`.
#[derive(Debug, Clone)]
pub struct CartPoleContinuous {
    state: [f64; 4],
    steps: usize,
    done: bool,
}

impl CartPoleContinuous {
    pub const GRAVITY: f64 = 9.8;
    pub const MASS_CART: f64 = 1.0;
    pub const MASS_POLE: f64 = 0.1;
    /// Half the pole length.
    pub const HALF_LENGTH: f64 = 0.5;
    pub const FORCE_MAG: f64 = 10.0;
    pub const DT: f64 = 0.02;
    pub const X_THRESHOLD: f64 = 2.4;
    pub const THETA_THRESHOLD: f64 = 12.0 * 2.0 * PI / 360.0;
    pub const HORIZON: usize = 500;

    pub fn new() -> Self {
        Self {
            state: [0.0; 4],
            steps: 0,
            done: false,
        }
    }

    /// State is `(x, x_dot, theta, theta_dot)`.
    pub fn set_state(&mut self, state: [f64; 4]) -> Vec<f64> {
        self.state = state;
        self.steps = 0;
        self.done = false;
        state.to_vec()
    }

    pub fn state(&self) -> [f64; 4] {
        self.state
    }
}

impl Default for CartPoleContinuous {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for CartPoleContinuous {
    fn spaces(&self) -> Spaces {
        Spaces {
            obs_dim: 4,
            action_dim: 1,
            action_low: -1.0,
            action_high: 1.0,
        }
    }

    fn horizon(&self) -> usize {
        Self::HORIZON
    }

    fn reset(&mut self, rng: &mut dyn RngCore) -> Vec<f64> {
        let mut s = [0.0; 4];
        s.iter_mut().for_each(|x| *x = rng.random_range(-0.05..=0.05));
        self.set_state(s)
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        if self.done {
            return Err(stepped_after_done("cartpole"));
        }
        check_action(action, 1)?;
        let force = Self::FORCE_MAG * action[0].clamp(-1.0, 1.0);
        let [x, x_dot, theta, theta_dot] = self.state;

        let total_mass = Self::MASS_CART + Self::MASS_POLE;
        let polemass_length = Self::MASS_POLE * Self::HALF_LENGTH;
        let (sin, cos) = theta.sin_cos();
        let temp = (force + polemass_length * theta_dot * theta_dot * sin) / total_mass;
        let theta_acc = (Self::GRAVITY * sin - cos * temp)
            / (Self::HALF_LENGTH * (4.0 / 3.0 - Self::MASS_POLE * cos * cos / total_mass));
        let x_acc = temp - polemass_length * theta_acc * cos / total_mass;

        self.state = [
            x + Self::DT * x_dot,
            x_dot + Self::DT * x_acc,
            theta + Self::DT * theta_dot,
            theta_dot + Self::DT * theta_acc,
        ];
        self.steps += 1;
        let [x, _, theta, _] = self.state;
        let fell = x.abs() > Self::X_THRESHOLD || theta.abs() > Self::THETA_THRESHOLD;
        self.done = fell || self.steps >= Self::HORIZON;
        Ok(StepResult {
            observation: self.state.to_vec(),
            reward: 1.0,
            done: self.done,
        })
    }
}

/// Planar double integrator that should drive its position to a goal.
///
/// Position is confined to `[-2, 2]²`; hitting a wall zeroes the velocity
/// component into it. Start and goal are drawn from `[-1, 1]²`.
/// Observation is `(position, velocity, goal)`.
#[derive(Debug, Clone)]
pub struct PointMass2D {
    pos: [f64; 2],
    vel: [f64; 2],
    goal: [f64; 2],
    steps: usize,
    done: bool,
}

impl PointMass2D {
    pub const DT: f64 = 0.1;
    pub const ARENA: f64 = 2.0;
    pub const MAX_SPEED: f64 = 2.0;
    pub const HORIZON: usize = 100;
    /// Largest possible distance between a reachable position and a goal.
    pub const MAX_DISTANCE: f64 = 3.0 * std::f64::consts::SQRT_2;

    pub fn new() -> Self {
        Self {
            pos: [0.0; 2],
            vel: [0.0; 2],
            goal: [0.0; 2],
            steps: 0,
            done: false,
        }
    }

    pub fn set_state(&mut self, pos: [f64; 2], vel: [f64; 2], goal: [f64; 2]) -> Vec<f64> {
        self.pos = pos;
        self.vel = vel;
        self.goal = goal;
        self.steps = 0;
        self.done = false;
        self.observation()
    }

    fn observation(&self) -> Vec<f64> {
        vec![self.pos[0], self.pos[1], self.vel[0], self.vel[1], self.goal[0], self.goal[1]]
    }
}

impl Default for PointMass2D {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for PointMass2D {
    fn spaces(&self) -> Spaces {
        Spaces {
            obs_dim: 6,
            action_dim: 2,
            action_low: -1.0,
            action_high: 1.0,
        }
    }

    fn horizon(&self) -> usize {
        Self::HORIZON
    }

    fn reset(&mut self, rng: &mut dyn RngCore) -> Vec<f64> {
        let mut draw = || [rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)];
        let pos = draw();
        let goal = draw();
        self.set_state(pos, [0.0; 2], goal)
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        if self.done {
            return Err(stepped_after_done("pointmass"));
        }
        check_action(action, 2)?;
        for (i, a) in action.iter().enumerate() {
            let acc = a.clamp(-1.0, 1.0);
            self.vel[i] = (self.vel[i] + acc * Self::DT).clamp(-Self::MAX_SPEED, Self::MAX_SPEED);
            let p = self.pos[i] + self.vel[i] * Self::DT;
            if p.abs() > Self::ARENA {
                self.pos[i] = p.clamp(-Self::ARENA, Self::ARENA);
                self.vel[i] = 0.0;
            } else {
                self.pos[i] = p;
            }
        }
        self.steps += 1;
        self.done = self.steps >= Self::HORIZON;
        let dist = (self.pos[0] - self.goal[0]).hypot(self.pos[1] - self.goal[1]);
        Ok(StepResult {
            observation: self.observation(),
            reward: -dist,
            done: self.done,
        })
    }
}
