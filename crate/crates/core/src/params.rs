//! Battery, environment and barrier-gain parameters, plus the validation
//! pass that every entry point runs before simulating or planning.

use std::fmt;

use nalgebra::Vector2;

/// Battery and charging-station constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyParams {
    /// Static discharge rate (V/s).
    pub k_e: f64,
    /// Dynamic discharge coefficient (V/m).
    pub k_v: f64,
    /// Recharge rate (V/s).
    pub k_ch: f64,
    /// Full-battery voltage (V).
    pub e_max: f64,
    /// Hard lower bound on the minimum-voltage setpoint (V).
    pub e_lb: f64,
    /// Radius of the charging region (m).
    pub delta: f64,
    /// Charging-station position (m).
    pub station: Vector2<f64>,
}

impl Default for EnergyParams {
    fn default() -> Self {
        Self { k_e: 0.005, k_v: 0.015, k_ch: 0.2, e_max: 14.8, e_lb: 12.0, delta: 0.2, station: Vector2::zeros() }
    }
}

impl EnergyParams {
    /// Discharge rate k_e + k_v * speed for a given speed relative to the wind.
    #[inline]
    pub fn discharge_rate(&self, relative_speed: f64) -> f64 {
        self.k_e + self.k_v * relative_speed
    }

    /// Usable voltage span E_max - E_lb.
    #[inline]
    pub fn span(&self) -> f64 {
        self.e_max - self.e_lb
    }
}

/// Environment constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorldParams {
    /// Linear drag coefficient (1/s).
    pub c_d: f64,
    /// Known constant wind velocity (m/s).
    pub wind: Vector2<f64>,
    /// Operational radius around the station (m).
    pub r0: f64,
}

impl Default for WorldParams {
    fn default() -> Self {
        Self { c_d: 0.1, wind: Vector2::zeros(), r0: 9.0 }
    }
}

/// Tuning constants for the energy, coordination and lower-bound barriers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CbfGains {
    /// Distance gain of the energy barrier (V).
    pub k_c: f64,
    /// First pole of the energy barrier's second-order condition (1/s).
    pub p1: f64,
    /// Second pole (1/s).
    pub p2: f64,
    /// Coordination class-K gain.
    pub gamma_h: f64,
    /// Finite-time exponent, in [0, 1).
    pub rho: f64,
    /// Lower-bound barrier scale.
    pub k_s: f64,
    /// Lower-bound class-K gain (1/s).
    pub p_l: f64,
    /// Moving-average window (s).
    pub window: f64,
    /// Initial value of the running minimum in neighbour selection.
    pub h0: f64,
    /// Required arrival-time separation (s).
    pub delta_t: f64,
}

impl Default for CbfGains {
    fn default() -> Self {
        Self {
            k_c: 0.15,
            p1: 0.2,
            p2: 8.0,
            gamma_h: 0.5,
            rho: 0.5,
            k_s: 1.0,
            p_l: 0.5,
            window: 20.0,
            h0: 1e9,
            delta_t: 35.0,
        }
    }
}

/// Which parameter condition failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ViolationKind {
    /// A quantity that must be strictly positive (or finite) is not.
    Positivity,
    /// E_max > E_lb > 0 does not hold.
    VoltageOrdering,
    /// R_0 > delta does not hold.
    RadiusOrdering,
    /// k_c > k_v * R_0 does not hold; without it the control direction
    /// of the energy barrier can vanish.
    EnergyGainMargin,
    /// p1 == p2; the energy condition needs distinct real roots.
    DistinctRoots,
    /// rho outside [0, 1).
    ExponentRange,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.detail)
    }
}

fn positive(out: &mut Vec<Violation>, name: &str, value: f64) {
    if !(value.is_finite() && value > 0.0) {
        out.push(Violation {
            kind: ViolationKind::Positivity,
            detail: format!("{name} must be finite and > 0 (got {value})"),
        });
    }
}

/// Checks every parameter invariant and returns the list of failures.
/// An empty list means the parameter set is usable.
pub fn validate_params(energy: &EnergyParams, world: &WorldParams, gains: &CbfGains) -> Vec<Violation> {
    let mut out = Vec::new();

    positive(&mut out, "energy.k_e", energy.k_e);
    positive(&mut out, "energy.k_v", energy.k_v);
    positive(&mut out, "energy.k_ch", energy.k_ch);
    positive(&mut out, "energy.delta", energy.delta);
    if !(energy.e_max > energy.e_lb && energy.e_lb > 0.0 && energy.e_max.is_finite()) {
        out.push(Violation {
            kind: ViolationKind::VoltageOrdering,
            detail: format!("need e_max > e_lb > 0 (got e_max = {}, e_lb = {})", energy.e_max, energy.e_lb),
        });
    }
    if !(energy.station.x.is_finite() && energy.station.y.is_finite()) {
        out.push(Violation { kind: ViolationKind::Positivity, detail: "station position must be finite".into() });
    }

    positive(&mut out, "world.c_d", world.c_d);
    if !(world.wind.x.is_finite() && world.wind.y.is_finite()) {
        out.push(Violation { kind: ViolationKind::Positivity, detail: "wind vector must be finite".into() });
    }
    if !(world.r0 > energy.delta) {
        out.push(Violation {
            kind: ViolationKind::RadiusOrdering,
            detail: format!(
                "operational radius r0 = {} must exceed charging radius delta = {}",
                world.r0, energy.delta
            ),
        });
    }

    let floor = energy.k_v * world.r0;
    if !(gains.k_c > floor) {
        out.push(Violation {
            kind: ViolationKind::EnergyGainMargin,
            detail: format!("energy barrier gain margin: k_c = {} must exceed k_v * r0 = {}", gains.k_c, floor),
        });
    }
    positive(&mut out, "cbf.p1", gains.p1);
    positive(&mut out, "cbf.p2", gains.p2);
    if gains.p1 == gains.p2 {
        out.push(Violation {
            kind: ViolationKind::DistinctRoots,
            detail: format!("p1 and p2 must differ to give distinct real roots (both {})", gains.p1),
        });
    }
    if !(0.0..1.0).contains(&gains.rho) {
        out.push(Violation {
            kind: ViolationKind::ExponentRange,
            detail: format!("rho must lie in [0, 1) (got {})", gains.rho),
        });
    }
    positive(&mut out, "cbf.gamma_h", gains.gamma_h);
    positive(&mut out, "cbf.k_s", gains.k_s);
    positive(&mut out, "cbf.p_l", gains.p_l);
    positive(&mut out, "cbf.window", gains.window);
    positive(&mut out, "cbf.delta_t", gains.delta_t);
    if gains.h0.is_nan() {
        out.push(Violation { kind: ViolationKind::Positivity, detail: "cbf.h0 must not be NaN".into() });
    }

    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(v: &[Violation]) -> Vec<ViolationKind> {
        v.iter().map(|v| v.kind).collect()
    }

    #[test]
    fn defaults_are_valid() {
        let v = validate_params(&EnergyParams::default(), &WorldParams::default(), &CbfGains::default());
        assert!(v.is_empty(), "{v:?}");
    }

    #[test]
    fn gain_margin_is_strict() {
        let energy = EnergyParams::default();
        let world = WorldParams::default();
        let gains = CbfGains { k_c: 0.15, ..Default::default() };
        assert!(validate_params(&energy, &world, &gains).is_empty());

        // 0.015 * 9 evaluates to 0.135 in f64 as well; equality must fail.
        let gains = CbfGains { k_c: energy.k_v * world.r0, ..Default::default() };
        let v = validate_params(&energy, &world, &gains);
        assert_eq!(kinds(&v), vec![ViolationKind::EnergyGainMargin]);
        assert!(v[0].detail.contains("k_v * r0"));

        let gains = CbfGains { k_c: 0.135, ..Default::default() };
        let v = validate_params(&energy, &world, &gains);
        assert_eq!(kinds(&v), vec![ViolationKind::EnergyGainMargin]);
    }

    #[test]
    fn equal_poles_rejected() {
        let gains = CbfGains { p1: 1.0, p2: 1.0, ..Default::default() };
        let v = validate_params(&EnergyParams::default(), &WorldParams::default(), &gains);
        assert_eq!(kinds(&v), vec![ViolationKind::DistinctRoots]);
    }

    #[test]
    fn reports_every_failure() {
        let energy = EnergyParams { k_e: 0.0, e_lb: 15.0, ..Default::default() };
        let world = WorldParams { r0: 0.1, ..Default::default() };
        let gains = CbfGains { rho: 1.0, ..Default::default() };
        let v = kinds(&validate_params(&energy, &world, &gains));
        for k in [
            ViolationKind::Positivity,
            ViolationKind::VoltageOrdering,
            ViolationKind::RadiusOrdering,
            ViolationKind::ExponentRange,
        ] {
            assert!(v.contains(&k), "missing {k:?} in {v:?}");
        }
    }
}
