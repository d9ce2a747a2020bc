//! Property suites behind `mfgz check`. Each suite measures a few
//! quantities and compares them with fixed tolerances.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use mfgz_core::config::GameConfig;
use mfgz_core::dpp::{brute_force_value, dpp_residual, dpp_value, BruteForceMethod, DppConfig};
use mfgz_core::dynamics::{check_estimates, check_flow_property, IntegratorConfig, ParticleState};
use mfgz_core::expr::{Expr, Var};
use mfgz_core::game::{control_grid, ControlPath, TimeMesh};
use mfgz_core::hamiltonian::{isaacs_check, Costate, HamiltonianSample, Kind};
use mfgz_core::hji;
use mfgz_core::lifted::{chain_rule_check, gradient_fd_check, MeasureFunctional};
use mfgz_core::measure::{optimal_coupling, wasserstein, wasserstein_exact_transport, EmpiricalMeasure};
use mfgz_core::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Metric,
    Flow,
    Estimates,
    Isaacs,
    Gradient,
    DppOracle,
    Comparison,
}

impl Suite {
    pub const ALL: [Suite; 7] = [
        Suite::Metric,
        Suite::Flow,
        Suite::Estimates,
        Suite::Isaacs,
        Suite::Gradient,
        Suite::DppOracle,
        Suite::Comparison,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Metric => "metric",
            Suite::Flow => "flow",
            Suite::Estimates => "estimates",
            Suite::Isaacs => "isaacs",
            Suite::Gradient => "gradient",
            Suite::DppOracle => "dpp-oracle",
            Suite::Comparison => "comparison",
        }
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown suite {s:?}")))
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Property {
    pub name: &'static str,
    pub passed: bool,
    pub measured: String,
}

impl Property {
    fn new(name: &'static str, passed: bool, measured: String) -> Self {
        Self { name, passed, measured }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub suite: Suite,
    pub properties: Vec<Property>,
    /// Measured quantities without a pass/fail verdict.
    pub notes: Vec<(String, String)>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.properties.iter().all(|p| p.passed)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "suite = {}", self.suite);
        for p in &self.properties {
            let verdict = if p.passed { "pass" } else { "FAIL" };
            let _ = writeln!(s, "{} = {verdict} ({})", p.name, p.measured);
        }
        for (k, v) in &self.notes {
            let _ = writeln!(s, "{k} = {v}");
        }
        let _ = writeln!(s, "result = {}", if self.passed() { "pass" } else { "FAIL" });
        s
    }
}

/// The metric suite needs no game; every other suite does.
pub fn run_suite(cfg: Option<&GameConfig>, suite: Suite, seed: u64) -> Result<SuiteReport> {
    let need = || cfg.ok_or_else(|| Error::Config(format!("suite {suite} needs a game config")));
    let mut notes = Vec::new();
    let properties = match suite {
        Suite::Metric => metric_suite(seed)?,
        Suite::Flow => flow_suite(need()?)?,
        Suite::Estimates => estimates_suite(need()?, &mut notes)?,
        Suite::Isaacs => isaacs_suite(need()?, seed, &mut notes)?,
        Suite::Gradient => gradient_suite(need()?, seed)?,
        Suite::DppOracle => dpp_oracle_suite(need()?, &mut notes)?,
        Suite::Comparison => comparison_suite(need()?)?,
    };
    Ok(SuiteReport {
        suite,
        properties,
        notes,
    })
}

// metric

pub const METRIC_TRIALS: usize = 200;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MetricStats {
    pub trials: usize,
    pub max_assignment_gap: f64,
    pub max_self_distance: f64,
    pub max_asymmetry: f64,
    pub max_triangle_excess: f64,
    /// Largest `W₁ − W₂`.
    pub max_order_excess: f64,
    /// Largest `|cost₂(π*) − W₂²|`.
    pub max_coupling_gap: f64,
}

fn random_measure(rng: &mut ChaCha8Rng) -> Result<EmpiricalMeasure> {
    let n = rng.gen_range(1..=8);
    let coords: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
    if rng.gen_bool(0.5) {
        return EmpiricalMeasure::uniform_1d(&coords);
    }
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
    let total: f64 = raw.iter().sum();
    EmpiricalMeasure::from_flat(1, coords, raw.iter().map(|w| w / total).collect())
}

/// One-dimensional random trials with up to eight atoms per measure.
pub fn metric_stats(seed: u64, trials: usize) -> Result<MetricStats> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut st = MetricStats {
        trials,
        ..MetricStats::default()
    };
    for _ in 0..trials {
        let a = random_measure(&mut rng)?;
        let b = random_measure(&mut rng)?;
        let c = random_measure(&mut rng)?;
        let ab = wasserstein(2, &a, &b)?;
        let ba = wasserstein(2, &b, &a)?;
        let bc = wasserstein(2, &b, &c)?;
        let ac = wasserstein(2, &a, &c)?;
        st.max_assignment_gap = st
            .max_assignment_gap
            .max((wasserstein_exact_transport(2, &a, &b)? - ab).abs());
        st.max_self_distance = st.max_self_distance.max(wasserstein(2, &a, &a)?);
        st.max_asymmetry = st.max_asymmetry.max((ab - ba).abs());
        st.max_triangle_excess = st.max_triangle_excess.max(ac - ab - bc);
        st.max_order_excess = st.max_order_excess.max(wasserstein(1, &a, &b)? - ab);
        st.max_coupling_gap = st
            .max_coupling_gap
            .max((optimal_coupling(&a, &b)?.cost(2) - ab * ab).abs());
    }
    Ok(st)
}

fn metric_suite(seed: u64) -> Result<Vec<Property>> {
    let st = metric_stats(seed, METRIC_TRIALS)?;
    let n = st.trials;
    Ok(vec![
        Property::new(
            "w2_identity",
            st.max_self_distance == 0.0,
            format!("max W2(mu,mu) = {:e} over {n} trials", st.max_self_distance),
        ),
        Property::new(
            "w2_symmetry",
            st.max_asymmetry <= 1e-10,
            format!("max |W2(a,b) - W2(b,a)| = {:e}, tol 1e-10", st.max_asymmetry),
        ),
        Property::new(
            "w2_triangle",
            st.max_triangle_excess <= 1e-9,
            format!("max excess = {:e}, tol 1e-9", st.max_triangle_excess),
        ),
        Property::new(
            "w1_le_w2",
            st.max_order_excess <= 1e-12,
            format!("max W1 - W2 = {:e}, rounding tol 1e-12", st.max_order_excess),
        ),
        Property::new(
            "assignment_vs_sorted",
            st.max_assignment_gap <= 1e-10,
            format!("max gap = {:e}, tol 1e-10", st.max_assignment_gap),
        ),
        Property::new(
            "coupling_cost",
            st.max_coupling_gap <= 1e-10,
            format!("max |cost - W2^2| = {:e}, tol 1e-10", st.max_coupling_gap),
        ),
    ])
}

// flow

/// Substep counts swept by the flow check.
pub const FLOW_SUBSTEPS: [usize; 4] = [4, 8, 16, 32];

/// Controls switching once at `T/2`, from one end of each control grid to the
/// other.
fn switching_paths(cfg: &GameConfig) -> Result<(ControlPath, ControlPath)> {
    let spec = &cfg.spec;
    let mesh = TimeMesh::new(0.0, spec.horizon, 2)?;
    let ug = control_grid(&spec.u_box, cfg.u_resolution)?;
    let vg = control_grid(&spec.v_box, cfg.v_resolution)?;
    let u = ControlPath::new(mesh, vec![ug[0].clone(), ug[ug.len() - 1].clone()], &spec.u_box)?;
    let v = ControlPath::new(mesh, vec![vg[vg.len() - 1].clone(), vg[0].clone()], &spec.v_box)?;
    Ok((u, v))
}

/// Flow-property deviation for each entry of [`FLOW_SUBSTEPS`], with the
/// split time `r = 0.3·T` inside the first control interval.
pub fn flow_deviations(cfg: &GameConfig) -> Result<Vec<(usize, f64)>> {
    let (u, v) = switching_paths(cfg)?;
    let state = ParticleState {
        time: 0.0,
        measure: cfg.ensemble()?.x,
    };
    let t = cfg.spec.horizon;
    FLOW_SUBSTEPS
        .iter()
        .map(|&k| {
            let dev = check_flow_property(&cfg.spec, &state, &u, &v, 0.3 * t, t, &IntegratorConfig::rk4(k))?;
            Ok((k, dev))
        })
        .collect()
}

fn flow_suite(cfg: &GameConfig) -> Result<Vec<Property>> {
    let devs = flow_deviations(cfg)?;
    let finest = devs.last().map_or(0.0, |d| d.1);
    let listed = devs
        .iter()
        .map(|(k, d)| format!("k={k}: {d:e}"))
        .collect::<Vec<_>>()
        .join(", ");
    Ok(vec![
        Property::new("flow_k32", finest <= 1e-8, format!("{finest:e}, tol 1e-8")),
        Property::new("flow_monotone", decreasing(&devs), listed),
    ])
}

/// Deviations below this are round-off; an integrator that is exact for the
/// drift stays there for every `k`.
pub const ROUNDOFF_FLOOR: f64 = 1e-13;

/// Strictly decreasing until both neighbours sit at the round-off floor.
pub fn decreasing(devs: &[(usize, f64)]) -> bool {
    devs.windows(2)
        .all(|w| w[1].1 < w[0].1 || (w[0].1 <= ROUNDOFF_FLOOR && w[1].1 <= ROUNDOFF_FLOOR))
}

// estimates

fn estimates_suite(cfg: &GameConfig, notes: &mut Vec<(String, String)>) -> Result<Vec<Property>> {
    let spec = &cfg.spec;
    let mesh = TimeMesh::new(0.0, spec.horizon, cfg.time_steps)?;
    let ug = control_grid(&spec.u_box, cfg.u_resolution)?;
    let vg = control_grid(&spec.v_box, cfg.v_resolution)?;
    let u = ControlPath::new(
        mesh,
        (0..mesh.steps).map(|k| ug[k % ug.len()].clone()).collect(),
        &spec.u_box,
    )?;
    let v = ControlPath::new(
        mesh,
        (0..mesh.steps).map(|k| vg[(k + 1) % vg.len()].clone()).collect(),
        &spec.v_box,
    )?;
    let nu1 = cfg.ensemble()?.x;
    let nu2 = nu1.with_coords(nu1.coords().iter().map(|x| x + 0.25).collect())?;
    let rep = check_estimates(spec, &nu1, &nu2, &u, &v, &cfg.integrator())?;
    notes.push(("bound".into(), rep.bound.to_string()));
    for line in rep.violations() {
        notes.push(("violation".into(), line));
    }
    let stab = rep.max_stability_ratio.unwrap_or(0.0);
    Ok(vec![
        Property::new(
            "short_time",
            rep.time_bound_holds(),
            format!("max W2(P_s,nu)/|s-t| = {:e} <= {:e}", rep.max_time_ratio, rep.bound),
        ),
        Property::new(
            "stability",
            rep.stability_bound_holds(),
            format!("max stability ratio = {stab:e} <= {:e}", rep.bound),
        ),
    ])
}

// isaacs

pub const ISAACS_SAMPLES: usize = 50;

/// `max |H⁺ − H⁻|` over random `(t, ν, p)`: atoms uniform on the grid box
/// (or `[−2, 2]`), costates uniform on `[−2, 2]`.
pub fn hamiltonian_gap(cfg: &GameConfig, seed: u64, count: usize) -> Result<f64> {
    let spec = &cfg.spec;
    let n = spec.dim;
    let (lo, hi) = match &cfg.grid {
        Some(g) => (g.lo.clone(), g.hi.clone()),
        None => (vec![-2.0; n], vec![2.0; n]),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(count);
    for _ in 0..count {
        let t = rng.gen_range(0.0..=spec.horizon);
        let atoms: Vec<Vec<f64>> = (0..cfg.particles)
            .map(|_| {
                (0..n)
                    .map(|k| rng.gen_range(lo[k % lo.len()]..hi[k % hi.len()]))
                    .collect()
            })
            .collect();
        let nu_x = EmpiricalMeasure::uniform(&atoms)?;
        let p = Costate::new(n, (0..cfg.particles * n).map(|_| rng.gen_range(-2.0..2.0)).collect());
        samples.push(HamiltonianSample { t, nu_x, p });
    }
    let ug = control_grid(&spec.u_box, cfg.u_resolution)?;
    let vg = control_grid(&spec.v_box, cfg.v_resolution)?;
    isaacs_check(spec, &samples, &ug, &vg)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OneStep {
    pub lower: f64,
    pub upper: f64,
    pub oracle_lower: f64,
    pub oracle_upper: f64,
    pub tau: f64,
}

impl OneStep {
    pub fn gap(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn oracle_agrees(&self) -> bool {
        self.lower.to_bits() == self.oracle_lower.to_bits() && self.upper.to_bits() == self.oracle_upper.to_bits()
    }
}

/// Both values at `S = 1` in exact mode, with their brute-force oracles.
pub fn one_step(cfg: &GameConfig) -> Result<OneStep> {
    let ens = cfg.ensemble()?;
    let dc = DppConfig::exact(1, cfg.u_resolution, cfg.v_resolution).with_integrator(cfg.integrator());
    Ok(OneStep {
        lower: dpp_value(&cfg.spec, &ens, Kind::Lower, &dc)?.value,
        upper: dpp_value(&cfg.spec, &ens, Kind::Upper, &dc)?.value,
        oracle_lower: brute_force_value(&cfg.spec, &ens, Kind::Lower, &dc)?.value,
        oracle_upper: brute_force_value(&cfg.spec, &ens, Kind::Upper, &dc)?.value,
        tau: cfg.spec.horizon,
    })
}

fn isaacs_suite(cfg: &GameConfig, seed: u64, notes: &mut Vec<(String, String)>) -> Result<Vec<Property>> {
    let gap = hamiltonian_gap(cfg, seed, ISAACS_SAMPLES)?;
    let one = one_step(cfg)?;
    notes.push(("one_step.lower".into(), one.lower.to_string()));
    notes.push(("one_step.upper".into(), one.upper.to_string()));
    notes.push(("one_step.gap".into(), one.gap().to_string()));
    notes.push(("one_step.tau".into(), one.tau.to_string()));
    Ok(vec![
        Property::new(
            "hamiltonian_gap",
            gap <= 1e-12,
            format!("max |H+ - H-| = {gap:e} over {ISAACS_SAMPLES} samples, tol 1e-12"),
        ),
        Property::new(
            "one_step_oracle",
            one.oracle_agrees(),
            format!(
                "dpp {} / {} vs brute force {} / {}",
                one.lower, one.upper, one.oracle_lower, one.oracle_upper
            ),
        ),
        Property::new("weak_duality", one.lower <= one.upper, format!("gap = {:e}", one.gap())),
    ])
}

// gradient

/// Atom counts swept by the gradient check.
pub const GRADIENT_ATOMS: [usize; 4] = [1, 2, 4, 8];

pub fn registered_functionals(dim: usize) -> Result<Vec<(String, MeasureFunctional)>> {
    Ok(vec![
        ("mean_power(1)".into(), MeasureFunctional::MeanPower(1)),
        ("mean_power(2)".into(), MeasureFunctional::MeanPower(2)),
        ("squared_mean".into(), MeasureFunctional::SquaredMean),
        ("E[sin(x1)]".into(), MeasureFunctional::expectation_of("sin(x1)", dim)?),
        (
            format!("E[x1*x1*x{dim}]"),
            MeasureFunctional::expectation_of(&format!("x1*x1*x{dim}"), dim)?,
        ),
    ])
}

/// Worst relative error per functional and atom count. Atoms are uniform
/// on `[0.2, 1.2]ⁿ`, away from zeros of every derivative.
pub fn gradient_errors(dim: usize, seed: u64) -> Result<Vec<(String, usize, f64)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let funs = registered_functionals(dim)?;
    let mut out = Vec::new();
    for n in GRADIENT_ATOMS {
        let atoms: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..dim).map(|_| rng.gen_range(0.2..1.2)).collect())
            .collect();
        let mu = EmpiricalMeasure::uniform(&atoms)?;
        for (name, f) in &funs {
            out.push((name.clone(), n, gradient_fd_check(f, &mu, 1e-5)?));
        }
    }
    Ok(out)
}

/// Chain-rule residuals for the squared mean at `dt = 0.1` and `0.05`, with
/// `u` at its lower corner and `v` at its upper corner.
pub fn chain_rule_residuals(cfg: &GameConfig) -> Result<(f64, f64)> {
    let spec = &cfg.spec;
    let mesh = TimeMesh::new(0.0, spec.horizon, 1)?;
    let u = ControlPath::constant(mesh, spec.u_box.lower_corner(), &spec.u_box)?;
    let upper = spec.v_box.grid(2)?.pop().expect("grid has two points per axis");
    let v = ControlPath::constant(mesh, upper, &spec.v_box)?;
    let state = ParticleState {
        time: 0.0,
        measure: cfg.ensemble()?.x,
    };
    let ic = IntegratorConfig::rk4(32);
    let f = MeasureFunctional::SquaredMean;
    Ok((
        chain_rule_check(&f, spec, &state, &u, &v, 0.1, &ic)?,
        chain_rule_check(&f, spec, &state, &u, &v, 0.05, &ic)?,
    ))
}

fn gradient_suite(cfg: &GameConfig, seed: u64) -> Result<Vec<Property>> {
    let errs = gradient_errors(cfg.spec.dim, seed)?;
    let (worst_name, worst_n, worst) = errs
        .iter()
        .max_by(|a, b| a.2.total_cmp(&b.2))
        .cloned()
        .unwrap_or_default();
    let (r1, r2) = chain_rule_residuals(cfg)?;
    let ratio = r1 / r2;
    // a flow along which f(μ) is affine in t has no first-order error at all
    let exact = r1 <= ROUNDOFF_FLOOR && r2 <= ROUNDOFF_FLOOR;
    Ok(vec![
        Property::new(
            "gradient_fd",
            errs.iter().all(|e| e.2 <= 1e-6),
            format!("worst {worst:e} for {worst_name} with N={worst_n}, tol 1e-6"),
        ),
        Property::new(
            "chain_rule_order",
            ratio >= 1.9 || exact,
            format!("residual {r1:e} at dt=0.1, {r2:e} at dt=0.05, ratio {ratio}"),
        ),
    ])
}

// dpp-oracle

/// `(steps, resolution)` pairs, each with `(R·R)^S ≤ 10⁴`.
pub const ORACLE_CORPUS: [(usize, usize); 9] = [(1, 2), (2, 2), (3, 2), (4, 2), (1, 3), (2, 3), (3, 3), (1, 5), (2, 5)];

#[derive(Debug, Clone, PartialEq)]
pub struct OracleCase {
    pub steps: usize,
    pub resolution: usize,
    pub kind: Kind,
    pub dpp: f64,
    pub brute: f64,
    pub method: BruteForceMethod,
    /// Residual at every interior split `r = j·τ`.
    pub residuals: Vec<f64>,
}

impl OracleCase {
    pub fn bitwise_equal(&self) -> bool {
        self.dpp.to_bits() == self.brute.to_bits()
    }
}

pub fn oracle_cases(cfg: &GameConfig) -> Result<Vec<OracleCase>> {
    let ens = cfg.ensemble()?;
    let mut out = Vec::new();
    for (steps, r) in ORACLE_CORPUS {
        let dc = DppConfig::exact(steps, r, r).with_integrator(cfg.integrator());
        let mesh = TimeMesh::new(0.0, cfg.spec.horizon, steps)?;
        for kind in [Kind::Lower, Kind::Upper] {
            let dpp = dpp_value(&cfg.spec, &ens, kind, &dc)?.value;
            let bf = brute_force_value(&cfg.spec, &ens, kind, &dc)?;
            let residuals = (1..steps)
                .map(|j| Ok(dpp_residual(&cfg.spec, &ens, kind, &dc, mesh.node(j))?.residual))
                .collect::<Result<Vec<_>>>()?;
            out.push(OracleCase {
                steps,
                resolution: r,
                kind,
                dpp,
                brute: bf.value,
                method: bf.method,
                residuals,
            });
        }
    }
    Ok(out)
}

fn dpp_oracle_suite(cfg: &GameConfig, notes: &mut Vec<(String, String)>) -> Result<Vec<Property>> {
    let cases = oracle_cases(cfg)?;
    let mismatches = cases.iter().filter(|c| !c.bitwise_equal()).count();
    let worst_diff = cases.iter().map(|c| (c.dpp - c.brute).abs()).fold(0.0, f64::max);
    let worst_res = cases
        .iter()
        .flat_map(|c| c.residuals.iter().copied())
        .fold(0.0, f64::max);
    let splits: usize = cases.iter().map(|c| c.residuals.len()).sum();
    for c in &cases {
        notes.push((
            format!("case.S{}.R{}.{}", c.steps, c.resolution, c.kind.name()),
            format!("{} ({:?})", c.dpp, c.method),
        ));
    }
    Ok(vec![
        Property::new(
            "dpp_equals_brute_force",
            mismatches == 0,
            format!(
                "{mismatches} of {} cases differ, max |diff| = {worst_diff:e}",
                cases.len()
            ),
        ),
        Property::new(
            "dpp_residual_zero",
            worst_res == 0.0,
            format!("max residual {worst_res:e} over {splits} splits"),
        ),
    ])
}

// comparison

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonStats {
    pub min_gap_lower: f64,
    pub min_gap_upper: f64,
    /// Largest `lower − upper` over the nodes at `t = 0`.
    pub max_lower_minus_upper: f64,
    pub nodes: usize,
}

/// Terminal data `m` against `m + 0.1·x1²`, for both kinds, on the
/// configured grid with the configured particle count.
pub fn comparison_stats(cfg: &GameConfig) -> Result<ComparisonStats> {
    let spec = &cfg.spec;
    let grid = cfg.hji_grid(cfg.particles)?;
    let z = cfg.ensemble()?.z;
    let scheme = cfg.scheme();
    let x1 = || Box::new(Expr::Var(Var::X(0)));
    let bump = Expr::Mul(Box::new(Expr::Const(0.1)), Box::new(Expr::Mul(x1(), x1())));
    let m_hi = Expr::Add(Box::new(spec.m.clone()), Box::new(bump));
    let min_gap_lower = hji::comparison_check(spec, &grid, &z, Kind::Lower, &scheme, &spec.m, &m_hi)?;
    let min_gap_upper = hji::comparison_check(spec, &grid, &z, Kind::Upper, &scheme, &spec.m, &m_hi)?;
    let lo = hji::solve(spec, &grid, &z, Kind::Lower, &scheme)?;
    let hi = hji::solve(spec, &grid, &z, Kind::Upper, &scheme)?;
    let max_lower_minus_upper = lo
        .field
        .values
        .iter()
        .zip(&hi.field.values)
        .map(|(a, b)| a - b)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(ComparisonStats {
        min_gap_lower,
        min_gap_upper,
        max_lower_minus_upper,
        nodes: grid.len(),
    })
}

fn comparison_suite(cfg: &GameConfig) -> Result<Vec<Property>> {
    let st = comparison_stats(cfg)?;
    let min_gap = st.min_gap_lower.min(st.min_gap_upper);
    Ok(vec![
        Property::new(
            "terminal_order_preserved",
            min_gap >= -1e-12,
            format!(
                "min gap {:e} (lower), {:e} (upper) on {} nodes, tol -1e-12",
                st.min_gap_lower, st.min_gap_upper, st.nodes
            ),
        ),
        Property::new(
            "lower_le_upper",
            st.max_lower_minus_upper <= 1e-9,
            format!("max lower - upper = {:e}, tol 1e-9", st.max_lower_minus_upper),
        ),
    ])
}
