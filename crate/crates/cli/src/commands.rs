use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use mfgz_core::config::GameConfig;
use mfgz_core::dpp::{dpp_residual, dpp_value, game_value, DppConfig, DppMode, SideValue};
use mfgz_core::dynamics::{running_cost_accumulate, IntegratorConfig, ParticleState};
use mfgz_core::game::{terminal_expectation, ControlPath, TimeMesh};
use mfgz_core::hamiltonian::Kind;
use mfgz_core::hji::{self, csv_header, write_gnuplot_matrix, Axis, SchemeConfig, SpatialGrid};
use mfgz_core::measure::{wasserstein, wasserstein_exact_transport, EmpiricalMeasure};
use mfgz_core::{Error, Result};

use crate::checks::{run_suite, Suite};
use crate::manifest::RunManifest;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_CFL: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;
pub const EXIT_GRID_EXCURSION: i32 = 5;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Cfl { .. } => EXIT_CFL,
        Error::NonFinite(_) | Error::Eval(_) => EXIT_NUMERIC,
        Error::GridExcursion { .. } => EXIT_GRID_EXCURSION,
        _ => EXIT_CONFIG,
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "mfgz",
    version,
    about = "Zero-sum differential games on the Wasserstein space"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Seed for randomized property trials.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output directory [default: mfgz-out/<config name>].
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the lifted HJI equation on a particle grid.
    SolveHji(SolveHjiArgs),
    /// Lower and upper values by backward dynamic programming.
    Value(ValueArgs),
    /// Run a property suite.
    Check(CheckArgs),
    /// Wasserstein distance between two measure files (columns weight, x1..xn).
    Wasserstein(WassersteinArgs),
    /// Propagate the initial law under constant controls.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Lower,
    Upper,
}

impl From<KindArg> for Kind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Lower => Kind::Lower,
            KindArg::Upper => Kind::Upper,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Exact,
    Adaptive,
    Grid,
}

#[derive(Debug, Args)]
pub struct SolveHjiArgs {
    /// Shipped config name or TOML path.
    pub config: String,
    #[arg(long, value_enum, default_value_t = KindArg::Lower)]
    pub kind: KindArg,
    #[arg(long)]
    pub particles: Option<usize>,
    /// Lower grid bound for every axis.
    #[arg(long, allow_negative_numbers = true)]
    pub lo: Option<f64>,
    /// Upper grid bound for every axis.
    #[arg(long, allow_negative_numbers = true)]
    pub hi: Option<f64>,
    /// Nodes per axis.
    #[arg(long)]
    pub points: Option<usize>,
    /// Number of equally spaced snapshot intervals written to the CSV.
    #[arg(long, default_value_t = 10)]
    pub snapshots: usize,
    /// Time steps [default: smallest count meeting the CFL bound].
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long, default_value_t = 0.9)]
    pub theta: f64,
}

#[derive(Debug, Args)]
pub struct ValueArgs {
    pub config: String,
    /// One side only [default: both].
    #[arg(long, value_enum)]
    pub kind: Option<KindArg>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Control grid points per axis for both players.
    #[arg(long)]
    pub resolution: Option<usize>,
    #[arg(long)]
    pub u_resolution: Option<usize>,
    #[arg(long)]
    pub v_resolution: Option<usize>,
    #[arg(long, value_enum, default_value_t = ModeArg::Adaptive)]
    pub mode: ModeArg,
    /// Grid nodes per axis for the grid modes.
    #[arg(long)]
    pub points: Option<usize>,
    /// Integrator substeps per time step.
    #[arg(long)]
    pub substeps: Option<usize>,
    #[arg(long)]
    pub particles: Option<usize>,
    /// Also report the DPP residual at this split time.
    #[arg(long)]
    pub residual: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    /// Config name or path; ignored by the metric suite.
    pub config: String,
    /// metric, flow, estimates, isaacs, gradient, dpp-oracle or comparison.
    pub suite: String,
}

#[derive(Debug, Args)]
pub struct WassersteinArgs {
    pub file_a: PathBuf,
    pub file_b: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub p: u32,
    /// Use the transport solver even in one dimension.
    #[arg(long)]
    pub exact: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    pub config: String,
    /// Control of the minimizing player [default: lower corner].
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub u: Option<Vec<f64>>,
    /// Control of the maximizing player [default: lower corner].
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub v: Option<Vec<f64>>,
    #[arg(long)]
    pub particles: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub substeps: Option<usize>,
}

pub fn run(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::SolveHji(a) => solve_hji(a, cli.out.as_deref()),
        Command::Value(a) => value(a, cli.out.as_deref()),
        Command::Check(a) => check(a, cli.seed, cli.out.as_deref()),
        Command::Wasserstein(a) => distance(a),
        Command::Simulate(a) => simulate(a, cli.out.as_deref()),
    }
}

fn out_dir(out: Option<&Path>, name: &str) -> PathBuf {
    out.map_or_else(|| Path::new("mfgz-out").join(name), Path::to_path_buf)
}

fn override_grid(grid: SpatialGrid, lo: Option<f64>, hi: Option<f64>, points: Option<usize>) -> Result<SpatialGrid> {
    if lo.is_none() && hi.is_none() && points.is_none() {
        return Ok(grid);
    }
    let axes = grid
        .axes()
        .iter()
        .map(|a| Axis::new(lo.unwrap_or(a.lo), hi.unwrap_or(a.hi), points.unwrap_or(a.points)))
        .collect::<Result<Vec<_>>>()?;
    SpatialGrid::new(axes)
}

fn solve_hji(a: &SolveHjiArgs, out: Option<&Path>) -> Result<i32> {
    let cfg = GameConfig::load(&a.config)?;
    let particles = a.particles.unwrap_or(cfg.particles);
    let grid = override_grid(cfg.hji_grid(particles)?, a.lo, a.hi, a.points)?;
    let ens = cfg.ensemble_with(particles)?;
    let kind = Kind::from(a.kind);
    let scheme = SchemeConfig {
        steps: a.steps,
        theta: a.theta,
        snapshots: a.snapshots,
        ..cfg.scheme()
    };
    let mut man = RunManifest::new(&a.config, "solve-hji", &out_dir(out, &cfg.name));
    man.param("kind", kind.name());
    man.param("particles", particles);
    man.param("nodes", grid.len());
    man.param("snapshots", a.snapshots);
    man.param("theta", a.theta);
    let sol = man.timed("solve", || hji::solve(&cfg.spec, &grid, &ens.z, kind, &scheme))?;

    let horizon = cfg.spec.horizon;
    let excess = sol.max_principle_excess(horizon);
    let mut summary = String::new();
    let _ = writeln!(summary, "kind = {}", kind.name());
    let _ = writeln!(summary, "particles = {particles}");
    let _ = writeln!(summary, "nodes = {}", grid.len());
    let _ = writeln!(summary, "steps = {}", sol.steps);
    let _ = writeln!(summary, "dt = {}", sol.dt);
    let _ = writeln!(summary, "cfl_ratio = {}", sol.cfl_ratio);
    let _ = writeln!(summary, "max_abs_value = {}", sol.field.max_abs());
    let _ = writeln!(
        summary,
        "max_principle_bound = {}",
        sol.max_principle_bound(0.0, horizon)
    );
    let _ = writeln!(summary, "max_principle_excess = {excess}");
    let _ = writeln!(
        summary,
        "max_principle = {}",
        if excess <= 0.0 { "pass" } else { "FAIL" }
    );
    match hji::value_at_measure(&sol.field, &ens.x) {
        Ok(v) => {
            let _ = writeln!(summary, "value_at_initial = {v}");
        }
        Err(Error::GridExcursion { excursion }) => {
            let _ = writeln!(summary, "value_at_initial = outside grid (excursion {excursion})");
        }
        Err(e) => return Err(e),
    }
    if sol.time_dependent {
        let _ = writeln!(summary, "time_dependent = true");
    }

    let fields = if sol.snapshots.is_empty() {
        std::slice::from_ref(&sol.field)
    } else {
        sol.snapshots.as_slice()
    };
    let mut csv = Vec::new();
    csv.extend_from_slice(csv_header(grid.ndim()).as_bytes());
    csv.push(b'\n');
    for f in fields {
        f.write_csv_rows(&mut csv)?;
    }
    let stem = format!("hji_{}", kind.name());
    man.write(&format!("{stem}.csv"), &csv)?;
    if grid.ndim() == 1 {
        let mut mat = Vec::new();
        write_gnuplot_matrix(fields, &mut mat)?;
        man.write(&format!("{stem}.matrix"), &mat)?;
    }
    man.write(&format!("{stem}.txt"), summary.as_bytes())?;
    man.finish()?;
    print!("{summary}");
    Ok(EXIT_OK)
}

fn value_config(cfg: &GameConfig, a: &ValueArgs, particles: usize) -> Result<DppConfig> {
    let steps = a.steps.unwrap_or(cfg.time_steps);
    let ru = a.u_resolution.or(a.resolution).unwrap_or(cfg.u_resolution);
    let rv = a.v_resolution.or(a.resolution).unwrap_or(cfg.v_resolution);
    let base = DppConfig::exact(steps, ru, rv);
    let mode = match a.mode {
        ModeArg::Exact => DppMode::Exact,
        ModeArg::Adaptive => DppMode::Adaptive {
            points: a.points.unwrap_or(cfg.dpp.points),
        },
        ModeArg::Grid => DppMode::Grid(override_grid(cfg.hji_grid(particles)?, None, None, a.points)?),
    };
    let substeps = a.substeps.unwrap_or(cfg.dpp.substeps);
    Ok(DppConfig { mode, ..base }.with_integrator(IntegratorConfig::rk4(substeps)))
}

fn side_key_value(side: &SideValue, dc: &DppConfig) -> String {
    let k = side.kind.name();
    let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(" ");
    let mut s = String::new();
    let _ = writeln!(s, "{k} = {}", side.value);
    let _ = writeln!(s, "steps = {}", dc.steps);
    let _ = writeln!(s, "u_resolution = {}", dc.u_resolution);
    let _ = writeln!(s, "v_resolution = {}", dc.v_resolution);
    let _ = writeln!(s, "mode = {}", dc.mode.name());
    let _ = writeln!(s, "{k}.invalid_nodes = {}", side.invalid_nodes);
    let _ = writeln!(s, "{k}.max_excursion = {}", side.max_excursion);
    let _ = writeln!(s, "{k}.u_path = {}", join(&side.u_path));
    let _ = writeln!(s, "{k}.v_path = {}", join(&side.v_path));
    s
}

fn value(a: &ValueArgs, out: Option<&Path>) -> Result<i32> {
    let cfg = GameConfig::load(&a.config)?;
    let particles = a.particles.unwrap_or(cfg.particles);
    let ens = cfg.ensemble_with(particles)?;
    let dc = value_config(&cfg, a, particles)?;
    let mut man = RunManifest::new(&a.config, "value", &out_dir(out, &cfg.name));
    man.param("particles", particles);
    man.param("steps", dc.steps);
    man.param("u_resolution", dc.u_resolution);
    man.param("v_resolution", dc.v_resolution);
    man.param("mode", dc.mode.name());
    man.param("substeps", dc.integrator.substeps);
    let text = match a.kind {
        None => {
            let mut rep = man.timed("dpp", || game_value(&cfg.spec, &ens, &dc))?;
            if let Some(r) = a.residual {
                let res = man.timed("residual", || dpp_residual(&cfg.spec, &ens, Kind::Lower, &dc, r))?;
                rep.dpp_residual = Some(res.residual);
            }
            man.write("strategies.csv", rep.strategy_csv().as_bytes())?;
            rep.to_key_value()
        }
        Some(k) => {
            let kind = Kind::from(k);
            let side = man.timed("dpp", || dpp_value(&cfg.spec, &ens, kind, &dc))?;
            let mut text = side_key_value(&side, &dc);
            if let Some(r) = a.residual {
                let res = man.timed("residual", || dpp_residual(&cfg.spec, &ens, kind, &dc, r))?;
                let _ = writeln!(text, "dpp_residual = {}", res.residual);
            }
            text
        }
    };
    man.write("value.txt", text.as_bytes())?;
    man.finish()?;
    print!("{text}");
    Ok(EXIT_OK)
}

fn check(a: &CheckArgs, seed: u64, out: Option<&Path>) -> Result<i32> {
    let suite: Suite = a.suite.parse()?;
    let cfg = match suite {
        Suite::Metric => GameConfig::load(&a.config).ok(),
        _ => Some(GameConfig::load(&a.config)?),
    };
    let name = cfg.as_ref().map_or("metric", |c| c.name.as_str());
    let mut man = RunManifest::new(&a.config, "check", &out_dir(out, name));
    man.param("suite", suite);
    man.param("seed", seed);
    let rep = man.timed("suite", || run_suite(cfg.as_ref(), suite, seed))?;
    let text = rep.render();
    man.write(&format!("check_{suite}.txt"), text.as_bytes())?;
    man.finish()?;
    print!("{text}");
    Ok(if rep.passed() { EXIT_OK } else { EXIT_CHECK_FAILED })
}

/// Rows `weight, x1, …, xn`; blank lines, `#` comments and a non-numeric
/// header row are skipped.
pub fn parse_measure_csv(text: &str) -> Result<EmpiricalMeasure> {
    let mut dim = None;
    let (mut coords, mut weights) = (Vec::new(), Vec::new());
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: std::result::Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
        let Ok(row) = parsed else {
            if weights.is_empty() && dim.is_none() {
                continue;
            }
            return Err(Error::Config(format!("line {}: non-numeric field", lineno + 1)));
        };
        if row.len() < 2 {
            return Err(Error::Config(format!(
                "line {}: need a weight and a coordinate",
                lineno + 1
            )));
        }
        match dim {
            None => dim = Some(row.len() - 1),
            Some(d) if d != row.len() - 1 => {
                return Err(Error::Config(format!(
                    "line {}: {} coordinates, expected {d}",
                    lineno + 1,
                    row.len() - 1
                )))
            }
            _ => {}
        }
        weights.push(row[0]);
        coords.extend_from_slice(&row[1..]);
    }
    let dim = dim.ok_or_else(|| Error::Config("measure file has no rows".into()))?;
    EmpiricalMeasure::from_flat(dim, coords, weights)
}

fn read_measure(path: &Path) -> Result<EmpiricalMeasure> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    parse_measure_csv(&text).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn distance(a: &WassersteinArgs) -> Result<i32> {
    let mu = read_measure(&a.file_a)?;
    let nu = read_measure(&a.file_b)?;
    let w = if a.exact {
        wasserstein_exact_transport(a.p, &mu, &nu)?
    } else {
        wasserstein(a.p, &mu, &nu)?
    };
    println!("w{} = {w}", a.p);
    Ok(EXIT_OK)
}

fn simulate(a: &SimulateArgs, out: Option<&Path>) -> Result<i32> {
    let cfg = GameConfig::load(&a.config)?;
    let spec = &cfg.spec;
    let particles = a.particles.unwrap_or(cfg.particles);
    let ens = cfg.ensemble_with(particles)?;
    let steps = a.steps.unwrap_or(cfg.time_steps);
    let mesh = TimeMesh::new(0.0, spec.horizon, steps)?;
    let u = ControlPath::constant(
        mesh,
        a.u.clone().unwrap_or_else(|| spec.u_box.lower_corner()),
        &spec.u_box,
    )?;
    let v = ControlPath::constant(
        mesh,
        a.v.clone().unwrap_or_else(|| spec.v_box.lower_corner()),
        &spec.v_box,
    )?;
    let ic = IntegratorConfig::rk4(a.substeps.unwrap_or(cfg.dpp.substeps));

    let mut man = RunManifest::new(&a.config, "simulate", &out_dir(out, &cfg.name));
    man.param("particles", particles);
    man.param("steps", steps);
    man.param("substeps", ic.substeps);
    man.param("u", format!("{:?}", u.at_step(0)));
    man.param("v", format!("{:?}", v.at_step(0)));

    let mut csv = String::from("t,atom,weight");
    for k in 1..=spec.dim {
        let _ = write!(csv, ",x{k}");
    }
    csv.push('\n');
    let push_rows = |csv: &mut String, st: &ParticleState| {
        for (i, (x, w)) in st.measure.atoms().zip(st.measure.weights()).enumerate() {
            let _ = write!(csv, "{},{i},{w}", st.time);
            for c in x {
                let _ = write!(csv, ",{c}");
            }
            csv.push('\n');
        }
    };
    let mut state = ParticleState {
        time: 0.0,
        measure: ens.x.clone(),
    };
    push_rows(&mut csv, &state);
    let mut running = 0.0;
    let (running, terminal) = man.timed("propagate", || {
        for k in 1..=steps {
            let (next, c) = running_cost_accumulate(spec, &state, &u, &v, mesh.node(k), &ic)?;
            running += c;
            state = next;
            push_rows(&mut csv, &state);
        }
        Ok((running, terminal_expectation(spec, &state.measure, &ens.z)?))
    })?;
    let mut summary = String::new();
    let _ = writeln!(summary, "running_cost = {running}");
    let _ = writeln!(summary, "terminal_cost = {terminal}");
    let _ = writeln!(summary, "payoff = {}", running + terminal);
    man.write("trajectory.csv", csv.as_bytes())?;
    man.write("simulate.txt", summary.as_bytes())?;
    man.finish()?;
    print!("{summary}");
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn measure_csv_parsing() {
        let mu = parse_measure_csv("weight,x1\n0.25,1\n# note\n0.75,-2\n").unwrap();
        assert_eq!(mu.coords(), &[1.0, -2.0]);
        assert_eq!(mu.weights(), &[0.25, 0.75]);
        let mu = parse_measure_csv("1,0.5,0.5\n").unwrap();
        assert_eq!(mu.dim(), 2);
        assert!(parse_measure_csv("").is_err());
        assert!(parse_measure_csv("0.5,1\n0.5,1,2\n").is_err());
        assert!(parse_measure_csv("0.5,1\n0.5,abc\n").is_err());
        assert!(parse_measure_csv("0.5,1\n0.2,2\n").is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Cfl { ratio: 2.0, theta: 0.9 }), EXIT_CFL);
        assert_eq!(exit_code(&Error::NonFinite("x".into())), EXIT_NUMERIC);
        assert_eq!(exit_code(&Error::GridExcursion { excursion: 1.0 }), EXIT_GRID_EXCURSION);
        assert_eq!(exit_code(&Error::Config("x".into())), EXIT_CONFIG);
    }

    #[test]
    fn cli_parses() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
        let cli =
            Cli::try_parse_from(["mfgz", "solve-hji", "example2_dirac", "--lo", "-1", "--kind", "upper"]).unwrap();
        match cli.command {
            Command::SolveHji(a) => {
                assert_eq!(a.lo, Some(-1.0));
                assert_eq!(a.kind, KindArg::Upper);
            }
            _ => panic!("wrong subcommand"),
        }
    }
}
