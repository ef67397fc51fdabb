//! Closed-loop fleet simulation: broadcast, constraint selection, safety
//! filter and dynamics, in that fixed order every tick.

use std::fmt;
use std::io::{self, Write};

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::capacity::{self, CapacityReport};
use crate::cbf;
use crate::config::{EminInit, ScenarioConfig};
use crate::dynamics::{self, StepInput};
use crate::error::Error;
use crate::mission::{self, MissionParams};
use crate::msg::BroadcastMsg;
use crate::params::{validate_params, CbfGains, EnergyParams, WorldParams};
use crate::qp::{self, QpProblem};
use crate::state::{Mode, RobotState};

pub const TELEMETRY_HEADER: &str = "t,robot_id,x,y,vx,vy,E,E_min,h_e,T_L,mode,active_constraint";

/// Voltage slack allowed below `E_lb` before a run counts as unsafe (V).
pub const ENERGY_TOLERANCE: f64 = 0.05;

/// Ticks after leaving the station before `h_e` counts toward the minimum.
pub const ACTIVATION_TICKS: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct TelemetryRow {
    pub t: f64,
    pub robot_id: usize,
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub e: f64,
    pub e_min: f64,
    pub h_e: f64,
    pub t_l: f64,
    pub mode: Mode,
    pub active: cbf::ActiveConstraint,
    /// Whether the robot is inside the charging region.
    pub charging_region: bool,
}

impl TelemetryRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{:.2},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.4},{},{}",
            self.t,
            self.robot_id,
            self.x,
            self.y,
            self.vx,
            self.vy,
            self.e,
            self.e_min,
            self.h_e,
            self.t_l,
            self.mode.as_str(),
            self.active.label()
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    /// Entered the charging region with `E - E_min` as given.
    Arrival {
        margin: f64,
    },
    Depart,
    /// More than one robot inside the region; carries every occupant.
    ExclusionViolation {
        ids: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub t: f64,
    pub robot_id: usize,
    pub kind: EventKind,
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            EventKind::Arrival { margin } => write!(f, "{:.2},ARRIVAL,{},{:.6}", self.t, self.robot_id, margin),
            EventKind::Depart => write!(f, "{:.2},DEPART,{}", self.t, self.robot_id),
            EventKind::ExclusionViolation { ids } => {
                let ids: Vec<String> = ids.iter().map(|i| i.to_string()).collect();
                write!(f, "{:.2},EXCLUSION_VIOLATION,{}", self.t, ids.join(";"))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsSummary {
    pub n_robots: usize,
    pub duration: f64,
    pub min_e: f64,
    pub min_h_e_outside: f64,
    /// Smallest gap between consecutive arrivals; `None` with fewer than two.
    pub min_arrival_gap: Option<f64>,
    pub arrivals: usize,
    pub exclusion_violation_ticks: usize,
    pub max_e_min: f64,
    pub arrival_margins: Vec<(f64, usize, f64)>,
    /// Most arrivals of any robot within one cycle of the robot with the
    /// longest mean cycle.
    pub max_arrivals_per_cycle: Option<usize>,
    pub e_lb: f64,
    pub e_m_ceiling: f64,
}

impl MetricsSummary {
    pub fn energy_breach(&self) -> bool {
        self.min_e < self.e_lb - ENERGY_TOLERANCE
    }

    /// Exclusion violation or battery below the tolerated floor.
    pub fn invariant_breach(&self) -> bool {
        self.exclusion_violation_ticks > 0 || self.energy_breach()
    }

    pub fn overload(&self) -> bool {
        self.max_e_min > self.e_m_ceiling
    }

    pub fn min_arrival_margin(&self) -> Option<f64> {
        self.arrival_margins.iter().map(|m| m.2).reduce(f64::min)
    }

    pub fn max_arrival_margin(&self) -> Option<f64> {
        self.arrival_margins.iter().map(|m| m.2).reduce(f64::max)
    }
}

impl fmt::Display for MetricsSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |v: Option<f64>| v.map_or_else(|| "absent".to_string(), |x| format!("{x:.4}"));
        writeln!(f, "n_robots = {}", self.n_robots)?;
        writeln!(f, "duration = {:.2}", self.duration)?;
        writeln!(f, "min_E = {:.6}", self.min_e)?;
        writeln!(f, "min_h_e_outside = {:.6}", self.min_h_e_outside)?;
        writeln!(f, "arrivals = {}", self.arrivals)?;
        writeln!(f, "min_arrival_gap = {}", opt(self.min_arrival_gap))?;
        writeln!(f, "exclusion_violation_ticks = {}", self.exclusion_violation_ticks)?;
        writeln!(f, "max_E_min = {:.6}", self.max_e_min)?;
        writeln!(f, "E_min_ceiling = {:.4}", self.e_m_ceiling)?;
        writeln!(f, "min_arrival_margin = {}", opt(self.min_arrival_margin()))?;
        writeln!(f, "max_arrival_margin = {}", opt(self.max_arrival_margin()))?;
        writeln!(
            f,
            "max_arrivals_per_cycle = {}",
            self.max_arrivals_per_cycle.map_or_else(|| "absent".into(), |n| n.to_string())
        )?;
        writeln!(f, "overload = {}", self.overload())?;
        writeln!(f, "energy_breach = {}", self.energy_breach())?;
        write!(f, "invariant_breach = {}", self.invariant_breach())
    }
}

/// Folds telemetry rows (in time order) into the summary statistics.
#[derive(Debug, Clone)]
pub struct MetricsAccumulator {
    n: usize,
    min_e: f64,
    min_h_e: f64,
    max_e_min: f64,
    outside_run: Vec<usize>,
    last_t: f64,
    first_t: Option<f64>,
    e_lb: f64,
    ceiling: f64,
}

impl MetricsAccumulator {
    pub fn new(n: usize, energy: &EnergyParams) -> Self {
        Self {
            n,
            min_e: f64::INFINITY,
            min_h_e: f64::INFINITY,
            max_e_min: f64::NEG_INFINITY,
            outside_run: vec![0; n],
            last_t: 0.0,
            first_t: None,
            e_lb: energy.e_lb,
            ceiling: capacity::e_m_ceiling(energy),
        }
    }

    pub fn observe(&mut self, row: &TelemetryRow) {
        self.first_t.get_or_insert(row.t);
        self.last_t = row.t;
        self.min_e = self.min_e.min(row.e);
        self.max_e_min = self.max_e_min.max(row.e_min);
        if row.robot_id >= self.outside_run.len() {
            self.outside_run.resize(row.robot_id + 1, 0);
            self.n = self.n.max(row.robot_id + 1);
        }
        let run = &mut self.outside_run[row.robot_id];
        if row.charging_region {
            *run = 0;
        } else {
            *run += 1;
            if *run > ACTIVATION_TICKS {
                self.min_h_e = self.min_h_e.min(row.h_e);
            }
        }
    }

    pub fn finish(&self, events: &[Event]) -> MetricsSummary {
        let arrivals: Vec<(f64, usize, f64)> = events
            .iter()
            .filter_map(|e| match e.kind {
                EventKind::Arrival { margin } => Some((e.t, e.robot_id, margin)),
                _ => None,
            })
            .collect();
        let min_arrival_gap = arrivals.windows(2).map(|w| w[1].0 - w[0].0).reduce(f64::min);
        let violations = events.iter().filter(|e| matches!(e.kind, EventKind::ExclusionViolation { .. })).count();
        MetricsSummary {
            n_robots: self.n,
            duration: self.last_t - self.first_t.unwrap_or(0.0),
            min_e: self.min_e,
            min_h_e_outside: self.min_h_e,
            min_arrival_gap,
            arrivals: arrivals.len(),
            exclusion_violation_ticks: violations,
            max_e_min: self.max_e_min,
            max_arrivals_per_cycle: arrivals_per_cycle(&arrivals, self.n),
            arrival_margins: arrivals,
            e_lb: self.e_lb,
            e_m_ceiling: self.ceiling,
        }
    }
}

fn arrivals_per_cycle(arrivals: &[(f64, usize, f64)], n: usize) -> Option<usize> {
    let times = |id: usize| arrivals.iter().filter(|a| a.1 == id).map(|a| a.0).collect::<Vec<_>>();
    let least_needy = (0..n)
        .filter_map(|id| {
            let t = times(id);
            (t.len() >= 2).then(|| (id, (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64))
        })
        .max_by(|a, b| a.1.total_cmp(&b.1))?
        .0;
    let cycle = times(least_needy);
    cycle
        .windows(2)
        .flat_map(|w| (0..n).map(move |id| arrivals.iter().filter(|a| a.1 == id && a.0 > w[0] && a.0 <= w[1]).count()))
        .max()
}

/// Summary statistics from telemetry and events.
pub fn metrics(telemetry: &[TelemetryRow], events: &[Event], energy: &EnergyParams) -> MetricsSummary {
    let n = telemetry.iter().map(|r| r.robot_id + 1).max().unwrap_or(0);
    let mut acc = MetricsAccumulator::new(n, energy);
    for row in telemetry {
        acc.observe(row);
    }
    acc.finish(events)
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub telemetry: Vec<TelemetryRow>,
    pub events: Vec<Event>,
    /// Computed from every tick, not just the stored telemetry.
    pub metrics: MetricsSummary,
    pub feasibility: Option<CapacityReport>,
}

impl RunOutput {
    pub fn write_telemetry<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{TELEMETRY_HEADER}")?;
        for row in &self.telemetry {
            writeln!(w, "{}", row.to_csv())?;
        }
        Ok(())
    }

    pub fn write_events<W: Write>(&self, mut w: W) -> io::Result<()> {
        for e in &self.events {
            writeln!(w, "{e}")?;
        }
        Ok(())
    }
}

/// Fully resolved simulation inputs.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub energy: EnergyParams,
    pub world: WorldParams,
    pub gains: CbfGains,
    pub mission: MissionParams,
    pub n_robots: usize,
    pub dt: f64,
    pub t_final: f64,
    pub seed: u64,
    pub decimation: usize,
    pub e_min_init: Vec<f64>,
    pub feasibility: Option<CapacityReport>,
}

impl Scenario {
    /// Validates the configuration and resolves the initial setpoints.
    pub fn from_config(cfg: &ScenarioConfig) -> Result<Self, Error> {
        let energy = cfg.energy_params();
        let world = cfg.world_params();
        let gains = cfg.gains();
        let mission = cfg.mission_params();
        let violations = validate_params(&energy, &world, &gains);
        if !violations.is_empty() {
            return Err(Error::InvalidParams(violations));
        }
        let problems = mission.check(&energy, &world);
        if !problems.is_empty() {
            return Err(Error::Config(problems.join("; ")));
        }
        let n = cfg.capacity.n;
        let inputs = cfg.capacity_inputs();
        let feasibility = if n >= 2 { capacity::check_feasibility(&inputs).ok() } else { None };
        let e_min_init = match cfg.sim.emin_init {
            EminInit::AllAtElb => vec![energy.e_lb; n],
            EminInit::Ladder => {
                let step = if n >= 2 { capacity::delta_e_m(&inputs).max(0.0) } else { 0.0 };
                (0..n).map(|i| energy.e_lb + i as f64 * step).collect()
            }
            EminInit::Explicit => cfg.sim.emin_explicit.clone(),
        };
        Ok(Self {
            energy,
            world,
            gains,
            mission,
            n_robots: n,
            dt: cfg.sim.dt,
            t_final: cfg.sim.t_final,
            seed: cfg.sim.seed,
            decimation: cfg.sim.decimation,
            e_min_init,
            feasibility,
        })
    }
}

/// Closed-loop state of the whole fleet.
pub struct Simulation {
    pub scenario: Scenario,
    pub robots: Vec<RobotState>,
    pub t: f64,
    tick: u64,
    inside: Vec<bool>,
    acc: MetricsAccumulator,
    pub telemetry: Vec<TelemetryRow>,
    pub events: Vec<Event>,
}

impl Simulation {
    /// Robots start evenly spaced on the patrol circle (rotated by a
    /// seed-dependent angle), at full charge, tracking the field.
    pub fn new(scenario: Scenario) -> Result<Self, Error> {
        let n = scenario.n_robots;
        let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
        let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let e = &scenario.energy;
        let mut robots = Vec::with_capacity(n);
        for i in 0..n {
            let th = phase + std::f64::consts::TAU * i as f64 / n as f64;
            let x = e.station + scenario.mission.patrol_radius * Vector2::new(th.cos(), th.sin());
            let v = mission::nominal_velocity(&x, &scenario.mission, e);
            robots.push(RobotState::new(
                i,
                x,
                v,
                e.e_max,
                scenario.e_min_init[i],
                scenario.world.wind,
                scenario.gains.window,
                scenario.dt,
            )?);
        }
        let inside = robots.iter().map(|r| dynamics::in_charging_region(&r.x, e)).collect();
        let acc = MetricsAccumulator::new(n, e);
        Ok(Self { scenario, robots, t: 0.0, tick: 0, inside, acc, telemetry: Vec::new(), events: Vec::new() })
    }

    fn ticks_total(&self) -> u64 {
        (self.scenario.t_final / self.scenario.dt).round() as u64
    }

    pub fn done(&self) -> bool {
        self.tick >= self.ticks_total()
    }

    /// Advances every robot by one step.
    pub fn step(&mut self) -> Result<(), Error> {
        let sc = &self.scenario;
        let (energy, world, gains) = (&sc.energy, &sc.world, &sc.gains);
        let dt = sc.dt;
        let t = self.t;
        let tag = |robot: usize| move |e: Error| Error::Tick { t, robot, source: Box::new(e) };

        // Broadcast phase: every robot publishes from the same snapshot.
        let mut terms = Vec::with_capacity(self.robots.len());
        let mut msgs = Vec::with_capacity(self.robots.len());
        for r in &self.robots {
            let c = cbf::coordination_terms(r, energy, gains, t).map_err(tag(r.id))?;
            let d = r.distance_to(&energy.station);
            msgs.push(BroadcastMsg { robot_id: r.id as u32, t_l: c.t_l, beta: c.beta, d });
            terms.push(c);
        }

        let record = self.tick.is_multiple_of(sc.decimation as u64);
        let t_next = (self.tick + 1) as f64 * dt;
        let mut next = Vec::with_capacity(self.robots.len());
        for (i, r) in self.robots.iter().enumerate() {
            let sel =
                cbf::select_constraint(r.id as u32, &msgs, &terms[i], msgs[i].d, r.e_min, gains, energy, Some(dt));
            let e_row = cbf::energy_row(r, energy, world, gains);
            let (u_nom, eta_nom) = mission::nominal_control(r, &sc.mission, energy, world);
            let mut rows = Vec::with_capacity(3);
            if let Some((row, _)) = &e_row {
                rows.push(*row);
            }
            let floor = cbf::lower_bound_row(r.e_min, gains, energy);
            rows.push(floor);
            let coordinating =
                r.mode != Mode::Charging && matches!(sel.active, cbf::ActiveConstraint::Coordination { .. });
            if coordinating {
                rows.push(sel.row);
            }
            let u_nom = [u_nom.x, u_nom.y, eta_nom];
            let mut active = if coordinating { sel.active } else { cbf::ActiveConstraint::LowerBound };
            let sol = match qp::solve(&QpProblem { u_nom, rows: rows.clone() }) {
                // The floor outranks coordination: a robot pinned at E_lb
                // leaves the spacing to its neighbour.
                Err(Error::Infeasible { .. }) if coordinating => {
                    rows.pop();
                    active = cbf::ActiveConstraint::LowerBound;
                    qp::solve(&QpProblem { u_nom, rows })
                }
                other => other,
            }
            .map_err(tag(r.id))?;

            let h_e =
                e_row.map(|(_, terms)| terms.h_e).unwrap_or_else(|| cbf::energy_terms(r, energy, world, gains).h_e);
            let row = TelemetryRow {
                t,
                robot_id: r.id,
                x: r.x.x,
                y: r.x.y,
                vx: r.v.x,
                vy: r.v.y,
                e: r.e,
                e_min: r.e_min,
                h_e,
                t_l: terms[i].t_l,
                mode: r.mode,
                active,
                charging_region: self.inside[i],
            };
            self.acc.observe(&row);
            if record {
                self.telemetry.push(row);
            }

            let input = StepInput { u: Vector2::new(sol.u_star[0], sol.u_star[1]), eta: sol.u_star[2], dt };
            let mut s = dynamics::step(r, &input, energy, world, t_next).map_err(tag(r.id))?;
            if s.mode == Mode::Mission && e_row.is_some() && sol.active_set.contains(&0) {
                s.mode = Mode::Approaching;
            }
            next.push(s);
        }
        self.robots = next;
        self.tick += 1;
        self.t = t_next;

        let mut occupants = Vec::new();
        for (i, r) in self.robots.iter_mut().enumerate() {
            let now_inside = dynamics::in_charging_region(&r.x, energy);
            if now_inside && !self.inside[i] {
                self.events.push(Event { t: t_next, robot_id: i, kind: EventKind::Arrival { margin: r.e - r.e_min } });
                if r.e < energy.e_max {
                    r.mode = Mode::Charging;
                }
            } else if !now_inside && self.inside[i] {
                self.events.push(Event { t: t_next, robot_id: i, kind: EventKind::Depart });
                if r.mode == Mode::Charging {
                    r.mode = Mode::Mission;
                }
            }
            if r.mode == Mode::Charging && r.e >= energy.e_max {
                r.mode = Mode::Mission;
            }
            self.inside[i] = now_inside;
            if now_inside {
                occupants.push(i);
            }
        }
        if occupants.len() > 1 {
            self.events.push(Event {
                t: t_next,
                robot_id: occupants[0],
                kind: EventKind::ExclusionViolation { ids: occupants },
            });
        }
        Ok(())
    }

    pub fn metrics(&self) -> MetricsSummary {
        self.acc.finish(&self.events)
    }

    pub fn finish(self) -> RunOutput {
        let metrics = self.metrics();
        RunOutput { telemetry: self.telemetry, events: self.events, metrics, feasibility: self.scenario.feasibility }
    }
}

/// Runs a scenario to `t_final`.
pub fn run_scenario(scenario: Scenario) -> Result<RunOutput, Error> {
    let mut sim = Simulation::new(scenario)?;
    while !sim.done() {
        sim.step()?;
    }
    Ok(sim.finish())
}

pub fn run(cfg: &ScenarioConfig) -> Result<RunOutput, Error> {
    run_scenario(Scenario::from_config(cfg)?)
}
