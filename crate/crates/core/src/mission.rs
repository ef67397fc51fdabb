//! Built-in patrolling mission: a blended source/vortex velocity field
//! around the station, tracked with a proportional velocity loop.

use nalgebra::Vector2;

use crate::params::{EnergyParams, WorldParams};
use crate::state::{Mode, RobotState};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MissionParams {
    /// Nominal ground speed (m/s).
    pub v_n: f64,
    /// Velocity-tracking gain (1/s).
    pub k_d: f64,
    /// Source strength. The normalized field does not depend on it.
    pub m_src: f64,
    /// Width of the pure-source collar and of the inward ramp outside the
    /// patrol circle (m).
    pub delta_tol: f64,
    pub patrol_radius: f64,
    pub clockwise: bool,
}

impl Default for MissionParams {
    fn default() -> Self {
        Self { v_n: 0.15, k_d: 0.5, m_src: 1.0, delta_tol: 1.0, patrol_radius: 7.2, clockwise: false }
    }
}

impl MissionParams {
    pub fn check(&self, energy: &EnergyParams, world: &WorldParams) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.v_n > 0.0) {
            out.push(format!("mission.v_n = {} must be > 0", self.v_n));
        }
        if !(self.k_d > 0.0) {
            out.push(format!("mission.k_d = {} must be > 0", self.k_d));
        }
        if !(self.m_src > 0.0) {
            out.push(format!("mission.m_src = {} must be > 0", self.m_src));
        }
        if !(self.delta_tol > 0.0) {
            out.push(format!("mission.delta_tol = {} must be > 0", self.delta_tol));
        }
        if !(energy.delta + self.delta_tol < self.patrol_radius && self.patrol_radius < world.r0) {
            out.push(format!(
                "need delta + delta_tol < patrol_radius < r0, got {} + {} < {} < {}",
                energy.delta, self.delta_tol, self.patrol_radius, world.r0
            ));
        }
        out
    }
}

fn smoothstep(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * (3.0 - 2.0 * s)
}

/// Radial and tangential weights of the unnormalized field at distance `d`.
fn blend_weights(d: f64, p: &MissionParams, energy: &EnergyParams) -> (f64, f64) {
    let inner = energy.delta + p.delta_tol;
    let outward = 1.0;
    if d < inner {
        (outward, 0.0)
    } else if d <= p.patrol_radius {
        let w = smoothstep((d - inner) / (p.patrol_radius - inner));
        (outward * (1.0 - w), w)
    } else {
        // Inward spiral beyond the circle, strongest past the correction band.
        (-smoothstep((d - p.patrol_radius) / p.delta_tol), 1.0)
    }
}

/// Desired ground velocity at `x`, of magnitude exactly `V_n`.
pub fn nominal_velocity(x: &Vector2<f64>, p: &MissionParams, energy: &EnergyParams) -> Vector2<f64> {
    let r = x - energy.station;
    let d = r.norm();
    if d == 0.0 {
        return Vector2::new(p.v_n, 0.0);
    }
    let radial = r / d;
    let tangential = if p.clockwise { Vector2::new(radial.y, -radial.x) } else { Vector2::new(-radial.y, radial.x) };
    let (a, b) = blend_weights(d, p, energy);
    let dir = a * radial + b * tangential;
    p.v_n * dir / dir.norm()
}

/// Nominal stacked input. Charging robots brake to a standstill against
/// drag; everyone else tracks the field. `eta_nom` is always zero.
pub fn nominal_control(
    state: &RobotState,
    p: &MissionParams,
    energy: &EnergyParams,
    world: &WorldParams,
) -> (Vector2<f64>, f64) {
    let u = match state.mode {
        Mode::Charging => -p.k_d * state.v + world.c_d * (state.v - world.wind),
        Mode::Mission | Mode::Approaching => -p.k_d * (state.v - nominal_velocity(&state.x, p, energy)),
    };
    (u, 0.0)
}
