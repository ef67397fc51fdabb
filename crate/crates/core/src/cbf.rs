//! Barrier rows for the safety filter.
//!
//! Three barriers feed the QP:
//!
//! * the energy barrier `h_e = E - E_min - k_c ln(D / delta)`, of relative
//!   degree two in the acceleration input, enforced through its
//!   second-order condition
//!   `L_f^2 h + L_g L_f h u + (p1 + p2) h' + p1 p2 h >= 0`;
//! * the pairwise coordination barrier
//!   `h_c = ln(|T_Li - T_Lj| / delta_t)` on arrival-time estimates, acting
//!   on the setpoint rate `eta`;
//! * the lower-bound barrier `h_L = k_s (E_min - E_lb)`, also on `eta`.
//!
//! Only one of the last two is emitted per tick (see [`select_constraint`]),
//! so every row touches either the acceleration or `eta`, never both.

use nalgebra::Vector2;

use crate::error::Error;
use crate::msg::{BroadcastMsg, ConstraintRow};
use crate::params::{CbfGains, EnergyParams, WorldParams};
use crate::state::{RobotState, VelocityHistory};

/// Floor on the relative speed inside the unit vector of `L_g L_f h_e`.
pub const SPEED_GUARD: f64 = 1e-6;
/// Floor on `|T_Li - T_Lj|` (s).
pub const ARRIVAL_GAP_GUARD: f64 = 1e-6;

/// Rectangle-rule mean relative speed over `(now - w, now]`, or over the
/// whole history while less than one window has elapsed.
pub fn moving_average(history: &VelocityHistory, w: f64, now: f64) -> Result<f64, Error> {
    let cutoff = now - w + 1e-9 * now.abs().max(1.0);
    // The history holds at most one window plus one sample, so only the
    // oldest few entries can fall outside it.
    let (mut sum, mut n) = (history.sum(), history.len());
    for &(_, speed) in history.iter().take_while(|(t, _)| *t <= cutoff) {
        sum -= speed;
        n -= 1;
    }
    if n == 0 {
        // Only stale samples (or none).
        return history.latest().map(|(_, s)| s).ok_or(Error::EmptyHistory);
    }
    Ok(sum / n as f64)
}

/// `(V(now), V(now - w))`. Before a full window has elapsed the oldest
/// recorded sample stands in for `V(now - w)`.
pub fn window_endpoints(history: &VelocityHistory, w: f64, now: f64) -> Result<(f64, f64), Error> {
    let (_, latest) = history.latest().ok_or(Error::EmptyHistory)?;
    let cutoff = now - w + 1e-9 * now.abs().max(1.0);
    let oldest = history
        .iter()
        .take_while(|(t, _)| *t <= cutoff)
        .last()
        .or_else(|| history.iter().next())
        .map(|&(_, s)| s)
        .ok_or(Error::EmptyHistory)?;
    Ok((latest, oldest))
}

/// Time for the voltage to fall from `e` to `e_min` at the average
/// discharge rate, floored at zero.
pub fn arrival_time(e: f64, e_min: f64, v_bar: f64, energy: &EnergyParams) -> f64 {
    ((e - e_min) / energy.discharge_rate(v_bar)).max(0.0)
}

/// Energy barrier value, derivative and Lie-derivative pieces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyCbfTerms {
    pub h_e: f64,
    pub h_e_dot: f64,
    /// Drift part of the second derivative.
    pub lf2: f64,
    /// Control direction of the second derivative.
    pub lglf: Vector2<f64>,
}

pub fn energy_terms(
    state: &RobotState,
    energy: &EnergyParams,
    world: &WorldParams,
    gains: &CbfGains,
) -> EnergyCbfTerms {
    let r = state.x - energy.station;
    let d = r.norm().max(energy.delta / 10.0);
    let d2 = d * d;
    let rel = state.v - world.wind;
    let speed = rel.norm();
    let k_c = gains.k_c;
    let r_dot_v = r.dot(&state.v);

    let h_e = state.e - state.e_min - k_c * (d / energy.delta).ln();
    let h_e_dot = -energy.k_e - energy.k_v * speed - k_c * r_dot_v / d2;
    let lglf = -(energy.k_v * rel / speed.max(SPEED_GUARD) + k_c * r / d2);
    let lf2 = energy.k_v * world.c_d * speed
        + (k_c / d2) * (2.0 * r_dot_v * r_dot_v / d2 - state.v.dot(&state.v) + world.c_d * r.dot(&rel));

    EnergyCbfTerms { h_e, h_e_dot, lf2, lglf }
}

/// Row `L_g L_f h u - (p1 + p2) eta >= -L_f^2 h - (p1 + p2) h' - p1 p2 h`,
/// where `h'` is the derivative at `eta = 0`. The `eta` term carries the
/// setpoint's own rate through the first-order part of the condition, with
/// `eta` held constant over the step. `None` inside the charging region,
/// where the barrier does not apply.
pub fn energy_row(
    state: &RobotState,
    energy: &EnergyParams,
    world: &WorldParams,
    gains: &CbfGains,
) -> Option<(ConstraintRow, EnergyCbfTerms)> {
    if crate::dynamics::in_charging_region(&state.x, energy) {
        return None;
    }
    let t = energy_terms(state, energy, world, gains);
    let b = -t.lf2 - (gains.p1 + gains.p2) * t.h_e_dot - gains.p1 * gains.p2 * t.h_e;
    Some((ConstraintRow::new([t.lglf.x, t.lglf.y, -(gains.p1 + gains.p2)], b), t))
}

/// Second derivative of `h_e` implied by the row for a given acceleration.
pub fn implied_h_e_ddot(terms: &EnergyCbfTerms, u: &Vector2<f64>) -> f64 {
    terms.lf2 + terms.lglf.dot(u)
}

/// Finite-time class-K relaxation `gamma sign(h) |h|^rho`.
///
/// With `dt` set, the rate magnitude is also capped at `|h| / dt`, so one
/// explicit Euler step of `h' = -alpha(h)` lands on zero instead of
/// overshooting it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiniteTimeAlpha {
    pub gamma: f64,
    pub rho: f64,
    pub dt: Option<f64>,
}

impl FiniteTimeAlpha {
    pub fn eval(&self, h: f64) -> f64 {
        let mut mag = self.gamma * h.abs().powf(self.rho);
        if let Some(dt) = self.dt {
            mag = mag.min(h.abs() / dt);
        }
        h.signum() * mag
    }

    /// Analytic settling time of `h' = -gamma sign(h) |h|^rho` from `h0`.
    pub fn settling_time(&self, h0: f64) -> f64 {
        h0.abs().powf(1.0 - self.rho) / (self.gamma * (1.0 - self.rho))
    }
}

/// Arrival-time quantities of one robot for the current tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoordinationTerms {
    /// Coefficient of `eta` in the arrival-time rate (s/V); always negative.
    pub theta: f64,
    /// Drift of the arrival-time estimate.
    pub beta: f64,
    pub t_l: f64,
    pub v_bar: f64,
    pub v: f64,
}

/// Computes `T_L`, `theta` and `beta` from the velocity history.
///
/// `beta` is the exact time derivative of `(E - E_min) / (k_e + k_v Vbar)`
/// with `eta = 0`, using `Vbar' = (V(t) - V(t - w)) / w`.
pub fn coordination_terms(
    state: &RobotState,
    energy: &EnergyParams,
    gains: &CbfGains,
    now: f64,
) -> Result<CoordinationTerms, Error> {
    let w = gains.window;
    let v_bar = moving_average(&state.vel_history, w, now)?;
    let (v_now, v_then) = window_endpoints(&state.vel_history, w, now)?;
    let den = energy.discharge_rate(v_bar);
    let theta = -1.0 / den;
    let margin = state.e - state.e_min;
    let beta = -energy.discharge_rate(v_now) / den - energy.k_v * margin * (v_now - v_then) / (w * den * den);
    Ok(CoordinationTerms { theta, beta, t_l: arrival_time(state.e, state.e_min, v_bar, energy), v_bar, v: v_now })
}

/// Signed arrival-time gap `T_Li - T_Lj`, kept at least
/// [`ARRIVAL_GAP_GUARD`] in magnitude. Exact ties are broken by id so the
/// two robots push in opposite directions.
pub fn guarded_gap(own_id: u32, own_t_l: f64, other: &BroadcastMsg) -> f64 {
    let gap = own_t_l - other.t_l;
    if gap.abs() >= ARRIVAL_GAP_GUARD {
        return gap;
    }
    let sign = if gap != 0.0 {
        gap.signum()
    } else if own_id < other.robot_id {
        1.0
    } else {
        -1.0
    };
    sign * ARRIVAL_GAP_GUARD
}

/// `h_c = ln(|gap| / delta_t)`.
pub fn coordination_barrier(gap: f64, delta_t: f64) -> f64 {
    (gap.abs().max(ARRIVAL_GAP_GUARD) / delta_t).ln()
}

/// Coordination row over `eta`:
/// `s theta eta >= -alpha(h_c) - s (beta_i - beta_j)` with
/// `s = gap / |gap|^2`, and `alpha` switched off unless both robots are
/// outside the charging region.
#[allow(clippy::too_many_arguments)]
pub fn coordination_row(
    own_id: u32,
    own: &CoordinationTerms,
    other: &BroadcastMsg,
    d_self: f64,
    gains: &CbfGains,
    energy: &EnergyParams,
    dt: Option<f64>,
) -> ConstraintRow {
    let gap = guarded_gap(own_id, own.t_l, other);
    let s = gap / (gap * gap);
    let h_c = coordination_barrier(gap, gains.delta_t);
    let gamma = if d_self > energy.delta && other.d > energy.delta { gains.gamma_h } else { 0.0 };
    let alpha = FiniteTimeAlpha { gamma, rho: gains.rho, dt }.eval(h_c);
    ConstraintRow::new([0.0, 0.0, s * own.theta], -alpha - s * (own.beta - other.beta))
}

/// `k_s eta >= -p_L k_s (E_min - E_lb)`.
pub fn lower_bound_row(e_min: f64, gains: &CbfGains, energy: &EnergyParams) -> ConstraintRow {
    ConstraintRow::new([0.0, 0.0, gains.k_s], -gains.p_l * gains.k_s * (e_min - energy.e_lb))
}

/// Which `eta` row a robot applies this tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActiveConstraint {
    Coordination { neighbour: u32, h_c: f64 },
    LowerBound,
}

impl ActiveConstraint {
    pub fn label(&self) -> String {
        match self {
            ActiveConstraint::Coordination { neighbour, .. } => format!("coord:{neighbour}"),
            ActiveConstraint::LowerBound => "lower_bound".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Selection {
    pub row: ConstraintRow,
    pub active: ActiveConstraint,
    pub h_c_min: f64,
    pub h_l: f64,
}

/// One-constraint-at-a-time choice between coordinating with the neighbour
/// of closest arrival time and holding `E_min >= E_lb`.
///
/// Neighbours inside the charging region are skipped. Coordination wins
/// only when its barrier is below `E_min - E_lb` and `E_min` is still above
/// `E_lb`; at or below the floor the lower bound always holds.
#[allow(clippy::too_many_arguments)]
pub fn select_constraint(
    self_id: u32,
    msgs: &[BroadcastMsg],
    own: &CoordinationTerms,
    own_d: f64,
    own_e_min: f64,
    gains: &CbfGains,
    energy: &EnergyParams,
    dt: Option<f64>,
) -> Selection {
    let mut h_c_min = gains.h0;
    let mut argmin: Option<&BroadcastMsg> = None;
    for m in msgs.iter().filter(|m| m.robot_id != self_id) {
        let h = coordination_barrier(guarded_gap(self_id, own.t_l, m), gains.delta_t);
        if h < h_c_min && m.d > energy.delta {
            h_c_min = h;
            argmin = Some(m);
        }
    }
    let h_l = own_e_min - energy.e_lb;
    match argmin {
        Some(m) if h_c_min < h_l => Selection {
            row: coordination_row(self_id, own, m, own_d, gains, energy, dt),
            active: ActiveConstraint::Coordination { neighbour: m.robot_id, h_c: h_c_min },
            h_c_min,
            h_l,
        },
        _ => Selection {
            row: lower_bound_row(own_e_min, gains, energy),
            active: ActiveConstraint::LowerBound,
            h_c_min,
            h_l,
        },
    }
}
