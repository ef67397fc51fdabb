//! Fixed-step integration of the double-integrator-with-drag robot model and
//! its switched battery.

use nalgebra::Vector2;

use crate::error::Error;
use crate::params::{EnergyParams, WorldParams};
use crate::state::RobotState;

/// Inputs applied over one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInput {
    /// Commanded acceleration (m/s^2).
    pub u: Vector2<f64>,
    /// Rate of the minimum-voltage setpoint (V/s).
    pub eta: f64,
    pub dt: f64,
}

/// True iff `x` lies in the closed charging disc.
pub fn in_charging_region(x: &Vector2<f64>, energy: &EnergyParams) -> bool {
    (x - energy.station).norm() <= energy.delta
}

/// Voltage rate at the current state: discharge outside the region,
/// `k_ch` inside it, and zero once a charging battery is full.
pub fn battery_rate(state: &RobotState, energy: &EnergyParams, world: &WorldParams) -> f64 {
    if in_charging_region(&state.x, energy) {
        if state.e >= energy.e_max {
            0.0
        } else {
            energy.k_ch
        }
    } else {
        -energy.discharge_rate((state.v - world.wind).norm())
    }
}

/// Advances one robot by `input.dt` with semi-implicit Euler. The battery
/// branch is chosen from the pre-step position; `t_after` stamps the new
/// relative-speed sample.
pub fn step(
    state: &RobotState,
    input: &StepInput,
    energy: &EnergyParams,
    world: &WorldParams,
    t_after: f64,
) -> Result<RobotState, Error> {
    let dt = input.dt;
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::NonFinite(format!("step size dt = {dt}")));
    }
    if !(input.u.x.is_finite() && input.u.y.is_finite() && input.eta.is_finite()) {
        return Err(Error::NonFinite(format!("step input u = ({}, {}), eta = {}", input.u.x, input.u.y, input.eta)));
    }

    let rate = battery_rate(state, energy, world);
    let mut next = state.clone();
    next.v = state.v + dt * (input.u - world.c_d * (state.v - world.wind));
    next.x = state.x + dt * next.v;
    next.e = (state.e + dt * rate).min(energy.e_max);
    next.e_min = state.e_min + dt * input.eta;

    if !(next.x.iter().chain(next.v.iter()).all(|c| c.is_finite()) && next.e.is_finite()) {
        return Err(Error::NonFinite(format!("robot {} state after step", state.id)));
    }
    next.vel_history.push(t_after, (next.v - world.wind).norm())?;
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn robot(x: Vector2<f64>, v: Vector2<f64>, e: f64) -> RobotState {
        RobotState::new(0, x, v, e, 12.0, Vector2::zeros(), 20.0, 0.01).unwrap()
    }

    #[test]
    fn rate_without_relative_motion_is_static_discharge() {
        let energy = EnergyParams::default();
        let world = WorldParams { wind: Vector2::new(0.05, -0.02), ..Default::default() };
        let s = robot(Vector2::new(3.0, 0.0), world.wind, 14.0);
        assert_relative_eq!(battery_rate(&s, &energy, &world), -0.005, epsilon = 1e-15);
    }

    #[test]
    fn rate_inside_region_is_recharge() {
        let energy = EnergyParams::default();
        let world = WorldParams::default();
        let s = robot(Vector2::new(0.1, 0.0), Vector2::zeros(), 13.0);
        assert_eq!(battery_rate(&s, &energy, &world), 0.2);
        let full = robot(Vector2::new(0.1, 0.0), Vector2::zeros(), energy.e_max);
        assert_eq!(battery_rate(&full, &energy, &world), 0.0);
    }

    #[test]
    fn rate_with_relative_speed() {
        let energy = EnergyParams::default();
        let world = WorldParams::default();
        let s = robot(Vector2::new(5.0, 0.0), Vector2::new(0.09, 0.12), 14.0);
        assert_relative_eq!(battery_rate(&s, &energy, &world), -0.00725, epsilon = 1e-15);
    }

    #[test]
    fn region_boundary_is_inside() {
        let energy = EnergyParams::default();
        assert!(in_charging_region(&energy.station, &energy));
        assert!(in_charging_region(&Vector2::new(0.0, energy.delta), &energy));
        assert!(!in_charging_region(&Vector2::new(2.0 * energy.delta, 0.0), &energy));
    }

    #[test]
    fn drag_cancelling_input_keeps_velocity() {
        let energy = EnergyParams::default();
        let world = WorldParams { wind: Vector2::new(0.08, 0.08), c_d: 0.3, ..Default::default() };
        let v = Vector2::new(0.4, -0.2);
        let s = robot(Vector2::new(4.0, 1.0), v, 14.0);
        let u = world.c_d * (v - world.wind);
        let n = step(&s, &StepInput { u, eta: 0.0, dt: 0.01 }, &energy, &world, 0.01).unwrap();
        assert_relative_eq!(n.v, v, epsilon = 1e-15);
    }

    #[test]
    fn drifting_with_the_wind() {
        let energy = EnergyParams::default();
        let world = WorldParams { wind: Vector2::new(0.08, 0.08), ..Default::default() };
        let x = Vector2::new(4.0, 1.0);
        let s = robot(x, world.wind, 14.0);
        let n = step(&s, &StepInput { u: Vector2::zeros(), eta: 0.0, dt: 0.01 }, &energy, &world, 0.01).unwrap();
        assert_eq!(n.v, world.wind);
        assert_relative_eq!(n.x, x + 0.01 * world.wind, epsilon = 1e-15);
    }

    #[test]
    fn euler_velocity_update() {
        let energy = EnergyParams::default();
        let world = WorldParams { c_d: 0.5, ..Default::default() };
        let s = robot(Vector2::new(4.0, 0.0), Vector2::new(1.0, 0.0), 14.0);
        let n = step(&s, &StepInput { u: Vector2::zeros(), eta: 0.0, dt: 0.01 }, &energy, &world, 0.01).unwrap();
        assert_relative_eq!(n.v.x, 0.995, epsilon = 1e-15);
        assert_eq!(n.v.y, 0.0);
        assert_relative_eq!(n.x.x, 4.0 + 0.00995, epsilon = 1e-15);
    }

    #[test]
    fn voltage_clamped_and_setpoint_integrated() {
        let energy = EnergyParams::default();
        let world = WorldParams::default();
        let s = robot(Vector2::new(0.05, 0.0), Vector2::zeros(), energy.e_max - 0.001);
        let n = step(&s, &StepInput { u: Vector2::zeros(), eta: 0.3, dt: 0.01 }, &energy, &world, 0.01).unwrap();
        assert_eq!(n.e, energy.e_max);
        assert_relative_eq!(n.e_min, 12.003, epsilon = 1e-12);
    }

    #[test]
    fn non_finite_input_rejected() {
        let energy = EnergyParams::default();
        let world = WorldParams::default();
        let s = robot(Vector2::new(3.0, 0.0), Vector2::zeros(), 14.0);
        let bad = StepInput { u: Vector2::new(f64::NAN, 0.0), eta: 0.0, dt: 0.01 };
        assert!(step(&s, &bad, &energy, &world, 0.01).is_err());
        let bad = StepInput { u: Vector2::zeros(), eta: f64::INFINITY, dt: 0.01 };
        assert!(step(&s, &bad, &energy, &world, 0.01).is_err());
        let bad = StepInput { u: Vector2::zeros(), eta: 0.0, dt: 0.0 };
        assert!(step(&s, &bad, &energy, &world, 0.01).is_err());
    }
}
