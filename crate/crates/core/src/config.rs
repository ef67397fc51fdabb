//! Scenario files: sectioned TOML with one canonical key list shared by
//! every subcommand, plus `section.key=value` overrides.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::capacity::{CapacityInputs, EpsilonSource};
use crate::error::Error;
use crate::mission::MissionParams;
use crate::params::{CbfGains, EnergyParams, WorldParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergySection {
    pub k_e: f64,
    pub k_v: f64,
    pub k_ch: f64,
    pub e_max: f64,
    pub e_lb: f64,
    pub delta: f64,
    pub station_x: f64,
    pub station_y: f64,
}

impl Default for EnergySection {
    fn default() -> Self {
        let e = EnergyParams::default();
        Self {
            k_e: e.k_e,
            k_v: e.k_v,
            k_ch: e.k_ch,
            e_max: e.e_max,
            e_lb: e.e_lb,
            delta: e.delta,
            station_x: e.station.x,
            station_y: e.station.y,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldSection {
    pub c_d: f64,
    pub wind_x: f64,
    pub wind_y: f64,
    pub r0: f64,
}

impl Default for WorldSection {
    fn default() -> Self {
        let w = WorldParams::default();
        Self { c_d: w.c_d, wind_x: w.wind.x, wind_y: w.wind.y, r0: w.r0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CbfSection {
    pub k_c: f64,
    pub p1: f64,
    pub p2: f64,
    pub gamma_h: f64,
    pub rho: f64,
    pub k_s: f64,
    pub p_l: f64,
    pub window: f64,
    pub h0: f64,
    pub delta_t: f64,
}

impl Default for CbfSection {
    fn default() -> Self {
        let g = CbfGains::default();
        Self {
            k_c: g.k_c,
            p1: g.p1,
            p2: g.p2,
            gamma_h: g.gamma_h,
            rho: g.rho,
            k_s: g.k_s,
            p_l: g.p_l,
            window: g.window,
            h0: g.h0,
            delta_t: g.delta_t,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MissionSection {
    pub v_n: f64,
    pub k_d: f64,
    /// Defaults to `0.8 r0`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub patrol_radius: Option<f64>,
    pub m_src: f64,
    pub delta_tol: f64,
    pub clockwise: bool,
}

impl Default for MissionSection {
    fn default() -> Self {
        let m = MissionParams::default();
        Self {
            v_n: m.v_n,
            k_d: m.k_d,
            patrol_radius: None,
            m_src: m.m_src,
            delta_tol: m.delta_tol,
            clockwise: m.clockwise,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CapacitySection {
    /// Fleet size, shared with the simulator.
    pub n: usize,
    pub v_tilde: f64,
    /// Estimated from the return-leg model when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Defaults to `v_n / 100`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_f: Option<f64>,
}

impl Default for CapacitySection {
    fn default() -> Self {
        Self { n: 5, v_tilde: 0.15, epsilon: None, v_f: None }
    }
}

/// Return-leg PD gains for the distance-gain heuristic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KcSection {
    pub k_p: f64,
    pub k_d: f64,
}

impl Default for KcSection {
    fn default() -> Self {
        Self { k_p: 1.0, k_d: 3.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EminInit {
    AllAtElb,
    Ladder,
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub dt: f64,
    pub t_final: f64,
    pub seed: u64,
    pub emin_init: EminInit,
    /// Telemetry keeps every `decimation`-th tick.
    pub decimation: usize,
    /// Per-robot setpoints for `emin_init = "explicit"`.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub emin_explicit: Vec<f64>,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            dt: 0.01,
            t_final: 3000.0,
            seed: 0,
            emin_init: EminInit::AllAtElb,
            decimation: 10,
            emin_explicit: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub energy: EnergySection,
    pub world: WorldSection,
    pub cbf: CbfSection,
    pub mission: MissionSection,
    pub capacity: CapacitySection,
    pub kc: KcSection,
    pub sim: SimSection,
}

/// Parses `section.key=value`. The value is read as a TOML literal, falling
/// back to a bare string.
pub fn parse_override(spec: &str) -> Result<(String, String, toml::Value), Error> {
    let (key, raw) =
        spec.split_once('=').ok_or_else(|| Error::Config(format!("override '{spec}' is not key=value")))?;
    let (section, name) =
        key.trim().split_once('.').ok_or_else(|| Error::Config(format!("override key '{key}' is not section.key")))?;
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    Ok((section.to_string(), name.to_string(), value))
}

impl ScenarioConfig {
    /// Parses a scenario file and applies overrides in order.
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self, Error> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for spec in overrides {
            let (section, name, value) = parse_override(spec)?;
            let entry = table.entry(section.clone()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
            match entry {
                toml::Value::Table(t) => {
                    t.insert(name, value);
                }
                _ => return Err(Error::Config(format!("'{section}' is not a section"))),
            }
        }
        let cfg: ScenarioConfig =
            toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.check_shape()?;
        Ok(cfg)
    }

    pub fn from_file(path: &std::path::Path, overrides: &[String]) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text, overrides).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario config always serializes")
    }

    fn check_shape(&self) -> Result<(), Error> {
        let mut problems = Vec::new();
        let s = &self.sim;
        if !(s.dt > 0.0) {
            problems.push(format!("sim.dt = {} must be > 0", s.dt));
        }
        if !(s.t_final > s.dt) {
            problems.push(format!("sim.t_final = {} must exceed sim.dt", s.t_final));
        }
        if s.decimation == 0 {
            problems.push("sim.decimation must be >= 1".into());
        }
        if self.capacity.n == 0 {
            problems.push("capacity.n must be >= 1".into());
        }
        if s.emin_init == EminInit::Explicit && s.emin_explicit.len() != self.capacity.n {
            problems.push(format!(
                "sim.emin_explicit has {} entries for {} robots",
                s.emin_explicit.len(),
                self.capacity.n
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    pub fn energy_params(&self) -> EnergyParams {
        let e = &self.energy;
        EnergyParams {
            k_e: e.k_e,
            k_v: e.k_v,
            k_ch: e.k_ch,
            e_max: e.e_max,
            e_lb: e.e_lb,
            delta: e.delta,
            station: Vector2::new(e.station_x, e.station_y),
        }
    }

    pub fn world_params(&self) -> WorldParams {
        let w = &self.world;
        WorldParams { c_d: w.c_d, wind: Vector2::new(w.wind_x, w.wind_y), r0: w.r0 }
    }

    pub fn gains(&self) -> CbfGains {
        let c = &self.cbf;
        CbfGains {
            k_c: c.k_c,
            p1: c.p1,
            p2: c.p2,
            gamma_h: c.gamma_h,
            rho: c.rho,
            k_s: c.k_s,
            p_l: c.p_l,
            window: c.window,
            h0: c.h0,
            delta_t: c.delta_t,
        }
    }

    pub fn mission_params(&self) -> MissionParams {
        let m = &self.mission;
        MissionParams {
            v_n: m.v_n,
            k_d: m.k_d,
            m_src: m.m_src,
            delta_tol: m.delta_tol,
            patrol_radius: m.patrol_radius.unwrap_or(0.8 * self.world.r0),
            clockwise: m.clockwise,
        }
    }

    pub fn capacity_inputs(&self) -> CapacityInputs {
        let c = &self.capacity;
        CapacityInputs {
            n: c.n,
            v_tilde: c.v_tilde,
            delta_t: self.cbf.delta_t,
            epsilon: c.epsilon.map_or(EpsilonSource::Estimated, EpsilonSource::Supplied),
            energy: self.energy_params(),
            v_n: self.mission.v_n,
            v_f: c.v_f.unwrap_or(self.mission.v_n / 100.0),
            r0: self.world.r0,
            k_c: self.cbf.k_c,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = ScenarioConfig::from_toml_str("", &[]).unwrap();
        assert_eq!(cfg, ScenarioConfig::default());
        assert_eq!(cfg.mission_params().patrol_radius, 7.2);
    }

    #[test]
    fn round_trip_through_text() {
        let mut cfg = ScenarioConfig::default();
        cfg.capacity.epsilon = Some(0.24);
        cfg.sim.emin_init = EminInit::Ladder;
        let back = ScenarioConfig::from_toml_str(&cfg.to_toml(), &[]).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn overrides_match_edited_file() {
        let base = "[world]\nwind_x = 0.08\n";
        let a = ScenarioConfig::from_toml_str(base, &["capacity.n=4".into(), "sim.emin_init=ladder".into()]).unwrap();
        let b = ScenarioConfig::from_toml_str(
            "[world]\nwind_x = 0.08\n[capacity]\nn = 4\n[sim]\nemin_init = \"ladder\"\n",
            &[],
        )
        .unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_toml(), b.to_toml());
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = ScenarioConfig::from_toml_str("[cbf]\nk_cc = 0.1\n", &[]).unwrap_err();
        assert!(err.to_string().contains("k_cc"), "{err}");
        assert!(ScenarioConfig::from_toml_str("", &["cbf.nope=1".into()]).is_err());
        assert!(ScenarioConfig::from_toml_str("", &["nodot=1".into()]).is_err());
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = ScenarioConfig::from_toml_str("[cbf]\nk_c = = 1\n", &[]).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn explicit_setpoints_must_match_fleet() {
        let txt = "[sim]\nemin_init = \"explicit\"\nemin_explicit = [12.0, 12.5]\n";
        assert!(ScenarioConfig::from_toml_str(txt, &[]).is_err());
        assert!(ScenarioConfig::from_toml_str(txt, &["capacity.n=2".into()]).is_ok());
    }
}
