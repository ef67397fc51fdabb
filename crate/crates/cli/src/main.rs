use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use chargeshare::capacity::{self, CapacityInputs};
use chargeshare::config::ScenarioConfig;
use chargeshare::sim;

const EXIT_ERROR: u8 = 1;
const EXIT_BREACH: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;

#[derive(Parser)]
#[command(name = "chargeshare", version, about = "Shared charging station simulator and capacity planner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Scenario file (TOML).
    #[arg(short, long)]
    config: PathBuf,
    /// Override a key, e.g. `--set capacity.n=4`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ScenarioConfig> {
        Ok(ScenarioConfig::from_file(&self.config, &self.overrides)?)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the closed loop and write telemetry, events and metrics.
    Simulate {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output directory.
        #[arg(short, long, default_value = "out")]
        out: PathBuf,
    },
    /// Print the capacity report for the configured fleet.
    Capacity {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Recommend the energy barrier's distance gain.
    Kc {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Tabulate the critical separation over fleet sizes and speed bounds.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Fleet sizes: `4,5,6` or `4..6`. Defaults to the configured size.
        #[arg(long)]
        n: Option<String>,
        /// Speed bounds, comma separated. Defaults to the configured bound.
        #[arg(long = "v-tilde")]
        v_tilde: Option<String>,
    },
}

fn parse_sizes(s: &str) -> Result<Vec<usize>> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(Vec::new());
    }
    if let Some((a, b)) = s.split_once("..") {
        let (a, b): (usize, usize) = (a.trim().parse()?, b.trim().parse()?);
        return Ok((a..=b).collect());
    }
    s.split(',').map(|p| p.trim().parse().with_context(|| format!("bad fleet size '{p}'"))).collect()
}

fn parse_speeds(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse().with_context(|| format!("bad speed '{p}'")))
        .collect()
}

fn write_to(path: &Path, f: impl FnOnce(BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    f(BufWriter::new(file)).with_context(|| format!("writing {}", path.display()))
}

fn simulate(cfg: &ScenarioConfig, out: &Path) -> Result<u8> {
    let scenario = sim::Scenario::from_config(cfg)?;
    if let Some(report) = &scenario.feasibility {
        log::info!("capacity verdict: {}", report.reason);
    }
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    fs::write(out.join("config.resolved.toml"), cfg.to_toml())?;
    let run = sim::run_scenario(scenario)?;
    write_to(&out.join("telemetry.csv"), |w| run.write_telemetry(w))?;
    write_to(&out.join("events.log"), |w| run.write_events(w))?;
    let mut text = run.metrics.to_string();
    text.push('\n');
    if let Some(report) = &run.feasibility {
        text.push_str(&format!(
            "capacity_verdict = {}\ndelta_t_cr = {:.2}\n",
            if report.feasible { "FEASIBLE" } else { "INFEASIBLE" },
            report.delta_t_cr
        ));
    }
    fs::write(out.join("metrics.txt"), &text)?;
    println!("{text}");
    if run.metrics.overload() {
        println!("warning: max E_min {:.3} V exceeds {:.3} V", run.metrics.max_e_min, run.metrics.e_m_ceiling);
    }
    Ok(if run.metrics.invariant_breach() { EXIT_BREACH } else { 0 })
}

fn capacity_cmd(cfg: &ScenarioConfig) -> Result<u8> {
    let report = capacity::check_feasibility(&cfg.capacity_inputs())?;
    print!("{report}");
    Ok(if report.feasible { 0 } else { EXIT_INFEASIBLE })
}

fn kc_cmd(cfg: &ScenarioConfig) -> Result<u8> {
    let world = cfg.world_params();
    let energy = cfg.energy_params();
    let h =
        capacity::k_c_heuristic(cfg.kc.k_p, cfg.kc.k_d, world.c_d, world.wind.norm(), world.r0, energy.delta, &energy)?;
    println!("poles       = {:.6}, {:.6}", h.l1, h.l2);
    println!("v_star      = {:.6}", h.v_star);
    println!("heuristic   = {:.6}", h.heuristic);
    println!("floor       = {:.6}  (k_c must exceed k_v * r0)", h.floor);
    println!("recommended = {:.6}", h.recommended);
    Ok(0)
}

fn sweep_cmd(cfg: &ScenarioConfig, n: Option<&str>, v: Option<&str>) -> Result<u8> {
    let base: CapacityInputs = cfg.capacity_inputs();
    let sizes = match n {
        Some(s) => parse_sizes(s)?,
        None => vec![base.n],
    };
    let speeds = match v {
        Some(s) => parse_speeds(s)?,
        None => vec![base.v_tilde],
    };
    println!("{:>4} {:>8} {:>10} {:>10}  verdict", "n", "v_tilde", "delta_t", "delta_t_cr");
    for &n in &sizes {
        for &v_tilde in &speeds {
            let inp = CapacityInputs { n, v_tilde, ..base };
            match capacity::check_feasibility(&inp) {
                Ok(r) => println!(
                    "{n:>4} {v_tilde:>8.4} {:>10.2} {:>10.2}  {}",
                    r.delta_t,
                    r.delta_t_cr,
                    if r.feasible { "FEASIBLE" } else { "INFEASIBLE" }
                ),
                Err(e) => println!("{n:>4} {v_tilde:>8.4} {:>10.2} {:>10}  INVALID ({e})", inp.delta_t, "-"),
            }
        }
    }
    Ok(0)
}

fn dispatch(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Simulate { cfg, out } => simulate(&cfg.load()?, &out),
        Command::Capacity { cfg } => capacity_cmd(&cfg.load()?),
        Command::Kc { cfg } => kc_cmd(&cfg.load()?),
        Command::Sweep { cfg, n, v_tilde } => sweep_cmd(&cfg.load()?, n.as_deref(), v_tilde.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
