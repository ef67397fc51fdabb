//! Closed-form capacity calculus for one shared charging station.
//!
//! All quantities assume every robot flies at the bounding average relative
//! speed `V~`, so the discharge rate is `R = k_e + k_v V~` throughout. Two
//! shorthands recur: the ratio `q = R / k_ch` and `kappa = 2 + q`.

use std::fmt;

use crate::error::Error;
use crate::params::EnergyParams;

/// How the speed-induced setpoint increment is obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsilonSource {
    Supplied(f64),
    Estimated,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapacityInputs {
    pub n: usize,
    /// Upper bound on every robot's average speed relative to the wind (m/s).
    pub v_tilde: f64,
    /// Requested arrival-time separation (s).
    pub delta_t: f64,
    pub epsilon: EpsilonSource,
    pub energy: EnergyParams,
    /// Nominal mission speed relative to the wind (m/s).
    pub v_n: f64,
    /// Terminal approach speed for the epsilon estimate (m/s).
    pub v_f: f64,
    pub r0: f64,
    pub k_c: f64,
}

impl CapacityInputs {
    pub fn validate(&self) -> Result<(), Error> {
        let mut problems = Vec::new();
        if self.n < 2 {
            problems.push(format!("n = {} must be >= 2", self.n));
        }
        if !(self.v_tilde > 0.0) {
            problems.push(format!("v_tilde = {} must be > 0", self.v_tilde));
        }
        if let EpsilonSource::Supplied(e) = self.epsilon {
            if !(e >= 0.0) {
                problems.push(format!("epsilon = {e} must be >= 0"));
            }
        }
        if !(self.v_f < self.v_n) && self.v_n > 0.0 {
            problems.push(format!("v_f = {} must be below v_n = {}", self.v_f, self.v_n));
        }
        let e = &self.energy;
        if !(e.k_e > 0.0 && e.k_v >= 0.0 && e.k_ch > 0.0 && e.e_max > e.e_lb) {
            problems.push("energy parameters must satisfy k_e > 0, k_v >= 0, k_ch > 0, e_max > e_lb".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Capacity(problems.join("; ")))
        }
    }

    /// Discharge rate at the bounding speed.
    pub fn rate(&self) -> f64 {
        self.energy.discharge_rate(self.v_tilde)
    }

    /// `R / k_ch`.
    pub fn q(&self) -> f64 {
        self.rate() / self.energy.k_ch
    }

    pub fn kappa(&self) -> f64 {
        2.0 + self.q()
    }

    /// `1 + kappa (n - 1)`.
    fn cycle_factor(&self) -> f64 {
        1.0 + self.kappa() * (self.n as f64 - 1.0)
    }

    /// The epsilon value every formula uses.
    pub fn epsilon_used(&self) -> f64 {
        match self.epsilon {
            EpsilonSource::Supplied(e) => e,
            EpsilonSource::Estimated => epsilon_estimate(self),
        }
    }
}

/// Largest feasible separation between consecutive arrivals.
pub fn delta_t_critical(inp: &CapacityInputs) -> f64 {
    let span = inp.energy.span();
    let num = (1.0 + inp.q()) * span - inp.kappa() * inp.epsilon_used();
    num / (inp.rate() * inp.cycle_factor())
}

/// Upper bound on the neediest robot's setpoint during coordination.
pub fn e_m_upper(inp: &CapacityInputs) -> f64 {
    let e = &inp.energy;
    let kappa = inp.kappa();
    ((1.0 + inp.q()) * e.e_max + e.e_lb - inp.delta_t * inp.rate() - kappa * inp.epsilon_used()) / kappa
}

/// Uniform setpoint step between consecutive robots in the ladder.
pub fn delta_e_m(inp: &CapacityInputs) -> f64 {
    let kappa = inp.kappa();
    let num = (1.0 + inp.q()) * inp.energy.span() - inp.delta_t * inp.rate() - kappa * inp.epsilon_used();
    num / (kappa * (inp.n as f64 - 1.0))
}

/// Slack of the separation condition `Delta E_M - delta_t R`; zero at
/// `delta_t = delta_t_critical`.
pub fn separation_slack(inp: &CapacityInputs) -> f64 {
    delta_e_m(inp) - inp.delta_t * inp.rate()
}

/// `Gamma = 1 + (v_f / V_n - 1) / ln(V_n / v_f)`.
pub fn gamma_factor(v_n: f64, v_f: f64) -> f64 {
    if v_f <= 0.0 {
        return 1.0;
    }
    1.0 + (v_f / v_n - 1.0) / (v_n / v_f).ln()
}

/// Time at which the neediest robot reaches its setpoint when starting
/// from full charge.
pub fn t_end(inp: &CapacityInputs) -> f64 {
    let e = &inp.energy;
    (e.e_max - 0.5 * (e.e_max + e.e_lb)) / inp.rate()
}

/// Start of the neediest robot's return leg for a given epsilon.
pub fn t_start(inp: &CapacityInputs, epsilon: f64) -> f64 {
    let e = &inp.energy;
    let rate = inp.rate();
    let k = inp.cycle_factor();
    let log_term = (inp.r0 / e.delta).ln();
    epsilon / rate * (1.0 - 1.0 / k) + (inp.n as f64 * e.span() - inp.k_c * k * log_term) / (k * rate)
}

/// Speed-induced increment of the neediest robot's setpoint while it slows
/// from `V_n` to `v_f` on its way home. Floored at zero.
pub fn epsilon_estimate(inp: &CapacityInputs) -> f64 {
    if !(inp.v_n > 0.0) {
        return 0.0;
    }
    let rate = inp.rate();
    let k = inp.cycle_factor();
    let g = gamma_factor(inp.v_n, inp.v_f) * inp.energy.k_v * inp.v_n;
    let free = t_end(inp) - t_start(inp, 0.0);
    if free <= 0.0 {
        return 0.0;
    }
    (g * free / (1.0 + g / rate * (1.0 - 1.0 / k))).max(0.0)
}

/// Return-leg model behind the distance gain heuristic: a PD controller
/// flying home from the operational boundary against a head wind.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KcHeuristic {
    /// Slow and fast closed-loop poles.
    pub l1: f64,
    pub l2: f64,
    pub g: f64,
    /// Peak return speed.
    pub v_star: f64,
    /// Flight time to the charging boundary (dominant mode only).
    pub delta_time: f64,
    pub heuristic: f64,
    /// `k_v R_0`, the strict lower bound on `k_c`.
    pub floor: f64,
    /// `max(heuristic, 1.05 floor)`.
    pub recommended: f64,
}

/// Distance-gain heuristic from the closed-form return leg.
#[allow(clippy::too_many_arguments)]
pub fn k_c_heuristic(
    k_p: f64,
    k_d: f64,
    c_d: f64,
    wind_speed: f64,
    r0: f64,
    delta: f64,
    energy: &EnergyParams,
) -> Result<KcHeuristic, Error> {
    let c = k_d + c_d;
    let disc = c * c - 4.0 * k_p;
    if !(disc > 0.0) || !(k_p > 0.0) {
        return Err(Error::Underdamped { discriminant: disc });
    }
    let g = disc.sqrt();
    let l1 = (c - g) / 2.0;
    let l2 = (c + g) / 2.0;
    let ratio = l2 / l1;
    let v_star = (-r0 * k_p + c_d * wind_speed) / g * (ratio.powf(-l2 / (l2 - l1)) - ratio.powf(-l1 / (l2 - l1)));
    let delta_time =
        ((-c_d * wind_speed * l2 + (c - l1) * k_p * r0) / (-c_d * wind_speed * l2 + k_p * g * delta)).ln() / l1;
    let heuristic = (energy.k_e + energy.k_v * (v_star.abs() + wind_speed)) / l1;
    let floor = energy.k_v * r0;
    Ok(KcHeuristic { l1, l2, g, v_star, delta_time, heuristic, floor, recommended: heuristic.max(1.05 * floor) })
}

/// Smallest recharge rate for which the capacity window is non-empty.
pub fn k_ch_min(inp: &CapacityInputs) -> Result<f64, Error> {
    let de = inp.energy.span();
    let eps = inp.epsilon_used();
    let denom = de - 2.0 * eps;
    if !(denom > 0.0) {
        return Err(Error::Capacity(format!(
            "k_ch threshold needs E_max - E_lb > 2 epsilon (span {de}, epsilon {eps})"
        )));
    }
    let m = inp.n as f64 - 1.0;
    let lin = 2.0 * m * de + eps;
    let root = (lin * lin + 4.0 * m * denom * de).sqrt();
    Ok(inp.rate() * (lin + root) / (2.0 * denom))
}

/// `(E_max + E_lb) / 2`, the ceiling on the neediest setpoint.
pub fn e_m_ceiling(energy: &EnergyParams) -> f64 {
    0.5 * (energy.e_max + energy.e_lb)
}

/// Neediest setpoint including the speed increment, `E_M + epsilon`.
pub fn e_m_bar(inp: &CapacityInputs) -> f64 {
    e_m_upper(inp) + inp.epsilon_used()
}

/// Recharges the neediest robot can fit into one cycle of the least needy,
/// `1 + floor((E_max - E_lb) / (E_max - E_M_bar))` with `E_M_bar` capped at
/// the ceiling. At the ceiling the neediest robot's second return coincides
/// with the end of the cycle, which is not counted twice.
pub fn max_recharges(inp: &CapacityInputs) -> u32 {
    let e = &inp.energy;
    let ceiling = e_m_ceiling(e);
    let bar = e_m_bar(inp).min(ceiling);
    recharges_for_setpoint(e, bar)
}

pub fn recharges_for_setpoint(energy: &EnergyParams, e_m_bar: f64) -> u32 {
    let ratio = energy.span() / (energy.e_max - e_m_bar);
    if (ratio - 2.0).abs() <= 1e-9 {
        return 2;
    }
    1 + ratio.floor() as u32
}

/// Average gap between arrivals when a cycle holds the maximum number of
/// visits.
pub fn delta_av(inp: &CapacityInputs) -> f64 {
    let n = inp.n as f64;
    inp.energy.span() * (1.0 + inp.q()) / ((2.0 * n - 1.0) * inp.rate())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapacityReport {
    pub n: usize,
    pub v_tilde: f64,
    pub delta_t: f64,
    pub kappa: f64,
    pub delta_t_cr: f64,
    /// `(E_max - E_lb) / (2 k_ch)`, the lower end of the feasible window (s).
    pub delta_t_min: f64,
    pub e_m_upper: f64,
    pub delta_e_m: f64,
    pub epsilon_used: f64,
    pub k_ch_min: Option<f64>,
    pub delta_av: f64,
    pub max_recharges: u32,
    pub feasible: bool,
    pub reason: String,
}

/// Evaluates the feasibility window `(E_max - E_lb)/(2 k_ch) <= delta_t <=
/// delta_t_cr` and collects every intermediate quantity.
pub fn check_feasibility(inp: &CapacityInputs) -> Result<CapacityReport, Error> {
    inp.validate()?;
    let delta_t_cr = delta_t_critical(inp);
    let delta_t_min = inp.energy.span() / (2.0 * inp.energy.k_ch);
    let num = (1.0 + inp.q()) * inp.energy.span() - inp.kappa() * inp.epsilon_used();
    let (feasible, reason) = if num <= 0.0 {
        (false, "no separation is feasible: epsilon consumes the whole voltage span".to_string())
    } else if delta_t_cr < delta_t_min {
        (false, format!("critical separation {delta_t_cr:.3} s is below the recharge floor {delta_t_min:.3} s"))
    } else if inp.delta_t < delta_t_min {
        (false, format!("requested {:.3} s is below the recharge floor {delta_t_min:.3} s", inp.delta_t))
    } else if inp.delta_t > delta_t_cr {
        (false, format!("requested {:.3} s exceeds the critical separation {delta_t_cr:.3} s", inp.delta_t))
    } else {
        (true, format!("{delta_t_min:.3} s <= {:.3} s <= {delta_t_cr:.3} s", inp.delta_t))
    };
    Ok(CapacityReport {
        n: inp.n,
        v_tilde: inp.v_tilde,
        delta_t: inp.delta_t,
        kappa: inp.kappa(),
        delta_t_cr,
        delta_t_min,
        e_m_upper: e_m_upper(inp),
        delta_e_m: delta_e_m(inp),
        epsilon_used: inp.epsilon_used(),
        k_ch_min: k_ch_min(inp).ok(),
        delta_av: delta_av(inp),
        max_recharges: max_recharges(inp),
        feasible,
        reason,
    })
}

impl CapacityReport {
    fn fields(&self) -> Vec<(&'static str, String)> {
        vec![
            ("n", self.n.to_string()),
            ("v_tilde", format!("{}", self.v_tilde)),
            ("delta_t", format!("{}", self.delta_t)),
            ("kappa", format!("{:.6}", self.kappa)),
            ("epsilon", format!("{:.6}", self.epsilon_used)),
            ("delta_t_cr", format!("{:.2}", self.delta_t_cr)),
            ("delta_t_min", format!("{:.4}", self.delta_t_min)),
            ("e_m_upper", format!("{:.4}", self.e_m_upper)),
            ("delta_e_m", format!("{:.4}", self.delta_e_m)),
            ("delta_av", format!("{:.4}", self.delta_av)),
            ("k_ch_min", self.k_ch_min.map_or_else(|| "undefined".into(), |k| format!("{k:.6}"))),
            ("max_recharges", self.max_recharges.to_string()),
            ("verdict", if self.feasible { "FEASIBLE" } else { "INFEASIBLE" }.into()),
            ("reason", self.reason.clone()),
        ]
    }

    /// `key = value` lines that parse back as TOML.
    pub fn to_toml(&self) -> String {
        let mut out = String::from("[capacity_report]\n");
        for (k, v) in self.fields() {
            let quoted = matches!(k, "verdict" | "reason") || v == "undefined";
            if quoted {
                out.push_str(&format!("{k} = \"{}\"\n", v.replace('"', "'")));
            } else {
                out.push_str(&format!("{k} = {v}\n"));
            }
        }
        out
    }
}

impl fmt::Display for CapacityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in self.fields() {
            writeln!(f, "{k:<14} {v}")?;
        }
        Ok(())
    }
}
