//! Per-robot simulation state.

use std::collections::VecDeque;

use nalgebra::Vector2;

use crate::error::Error;

/// Bookkeeping mode. Control is emergent from the QP; the mode only picks
/// the nominal controller and which barrier rows are built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Mission,
    /// The energy barrier is binding and pulling the robot home.
    Approaching,
    Charging,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Mission => "MISSION",
            Mode::Approaching => "APPROACHING_IMPLICIT",
            Mode::Charging => "CHARGING",
        }
    }
}

/// Time-stamped relative speeds ||v - v_w||, one sample per simulation step.
///
/// Holds enough samples to cover the averaging window plus the sample at
/// `now - w`, which the arrival-time drift term needs.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityHistory {
    samples: VecDeque<(f64, f64)>,
    capacity: usize,
    sum: f64,
}

impl VelocityHistory {
    /// History sized for window `w` sampled every `dt`: ceil(w/dt) + 1 slots.
    pub fn new(w: f64, dt: f64) -> Self {
        let capacity = (w / dt).ceil() as usize + 1;
        Self { samples: VecDeque::with_capacity(capacity), capacity, sum: 0.0 }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Appends a sample, evicting the oldest once full. Negative or
    /// non-finite speeds are rejected.
    pub fn push(&mut self, t: f64, speed: f64) -> Result<(), Error> {
        if !(speed.is_finite() && speed >= 0.0 && t.is_finite()) {
            return Err(Error::NonFinite(format!("velocity history sample (t = {t}, speed = {speed})")));
        }
        if self.samples.len() == self.capacity {
            if let Some((_, old)) = self.samples.pop_front() {
                self.sum -= old;
            }
        }
        self.samples.push_back((t, speed));
        self.sum += speed;
        Ok(())
    }

    /// Sum of every stored speed.
    pub fn sum(&self) -> f64 {
        self.sum
    }

    pub fn latest(&self) -> Option<(f64, f64)> {
        self.samples.back().copied()
    }

    pub fn iter(&self) -> impl DoubleEndedIterator<Item = &(f64, f64)> + ExactSizeIterator {
        self.samples.iter()
    }
}

/// Full per-robot state.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotState {
    pub id: usize,
    pub x: Vector2<f64>,
    pub v: Vector2<f64>,
    /// Battery voltage (V).
    pub e: f64,
    /// Minimum-voltage setpoint (V), driven by the coordination input.
    pub e_min: f64,
    pub vel_history: VelocityHistory,
    pub mode: Mode,
}

impl RobotState {
    /// Fresh state with the initial relative speed already recorded at `t = 0`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: usize,
        x: Vector2<f64>,
        v: Vector2<f64>,
        e: f64,
        e_min: f64,
        wind: Vector2<f64>,
        window: f64,
        dt: f64,
    ) -> Result<Self, Error> {
        let mut vel_history = VelocityHistory::new(window, dt);
        vel_history.push(0.0, (v - wind).norm())?;
        Ok(Self { id, x, v, e, e_min, vel_history, mode: Mode::Mission })
    }

    pub fn distance_to(&self, station: &Vector2<f64>) -> f64 {
        (self.x - station).norm()
    }
}
