//! Backward dynamic programming for the discretized lower and upper values,
//! plus a brute-force oracle over control paths and step-causal strategies.
//!
//! Time is split into `S` steps of length `τ` on which both controls are
//! constant and drawn from finite grids. In the lower game the minimizer
//! sees the maximizer's control of the current step, so each step resolves
//! as `sup_v inf_u`; the upper game mirrors this.
//!
//! Two representations of the value at intermediate times are available:
//!
//! * exact mode walks the full tree of control pairs, with no interpolation;
//! * grid modes store the value on a tensor grid over the particle
//!   coordinates and interpolate multilinearly. Grid nodes whose successors
//!   leave the next grid are marked invalid; querying an invalid region is a
//!   [`Error::GridExcursion`].

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::dynamics::{integrate_segment, running_cost_accumulate, IntegratorConfig, ParticleState};
use crate::error::{Error, Result};
use crate::game::{
    control_grid, terminal_expectation, ControlPath, DiscreteStrategy, GameSpec, StrategySide, TargetedEnsemble,
    TimeMesh,
};
use crate::hamiltonian::{extremize, Kind};
use crate::hji::{self, Axis, SchemeConfig, SpatialGrid};
use crate::measure::{wasserstein, EmpiricalMeasure, FeatureValues};

/// Largest number of tree leaves `(R_u·R_v)^S` walked in exact mode.
pub const EXACT_LEAF_LIMIT: usize = 10_000_000;

/// Largest number of path pairs enumerated by [`brute_force_value`].
pub const BRUTE_FORCE_LIMIT: usize = 1_000_000;

/// Largest `tables × opponent paths` product for which the oracle
/// enumerates strategy tables instead of nesting extrema.
pub const STRATEGY_LIMIT: usize = 4_000_000;

#[derive(Debug, Clone, PartialEq)]
pub enum DppMode {
    /// Full tree of control pairs.
    Exact,
    /// One grid for every intermediate time.
    Grid(SpatialGrid),
    /// Per-step grids covering the set reachable from the initial law, with
    /// `points` nodes per axis.
    Adaptive { points: usize },
}

impl DppMode {
    pub fn name(&self) -> &'static str {
        match self {
            DppMode::Exact => "exact",
            DppMode::Grid(_) => "grid",
            DppMode::Adaptive { .. } => "adaptive",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DppConfig {
    pub steps: usize,
    pub u_resolution: usize,
    pub v_resolution: usize,
    pub integrator: IntegratorConfig,
    pub mode: DppMode,
    /// Compute grid values only on sorted particle configurations and fill
    /// the rest by permutation (uniform weights only).
    pub symmetric: bool,
}

impl DppConfig {
    pub fn exact(steps: usize, u_resolution: usize, v_resolution: usize) -> Self {
        Self {
            steps,
            u_resolution,
            v_resolution,
            integrator: IntegratorConfig::default(),
            mode: DppMode::Exact,
            symmetric: true,
        }
    }

    pub fn adaptive(steps: usize, u_resolution: usize, v_resolution: usize, points: usize) -> Self {
        Self {
            mode: DppMode::Adaptive { points },
            ..Self::exact(steps, u_resolution, v_resolution)
        }
    }

    pub fn with_integrator(mut self, integrator: IntegratorConfig) -> Self {
        self.integrator = integrator;
        self
    }
}

/// Value of one side together with the strategy realized along the
/// extremal path.
#[derive(Debug, Clone, PartialEq)]
pub struct SideValue {
    pub kind: Kind,
    pub value: f64,
    /// Response tables at every step along the extremal path.
    pub strategy: DiscreteStrategy,
    pub u_path: Vec<usize>,
    pub v_path: Vec<usize>,
    pub invalid_nodes: usize,
    pub max_excursion: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GameValueReport {
    pub lower: SideValue,
    pub upper: SideValue,
    pub isaacs_gap: f64,
    pub steps: usize,
    pub u_resolution: usize,
    pub v_resolution: usize,
    pub mode: &'static str,
    pub dpp_residual: Option<f64>,
}

impl GameValueReport {
    /// `key = value` lines.
    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "lower = {}", self.lower.value);
        let _ = writeln!(s, "upper = {}", self.upper.value);
        let _ = writeln!(s, "isaacs_gap = {}", self.isaacs_gap);
        let _ = writeln!(s, "steps = {}", self.steps);
        let _ = writeln!(s, "u_resolution = {}", self.u_resolution);
        let _ = writeln!(s, "v_resolution = {}", self.v_resolution);
        let _ = writeln!(s, "mode = {}", self.mode);
        if let Some(r) = self.dpp_residual {
            let _ = writeln!(s, "dpp_residual = {r}");
        }
        for side in [&self.lower, &self.upper] {
            let k = side.kind.name();
            let _ = writeln!(s, "{k}.invalid_nodes = {}", side.invalid_nodes);
            let _ = writeln!(s, "{k}.max_excursion = {}", side.max_excursion);
            let _ = writeln!(s, "{k}.u_path = {}", join(&side.u_path));
            let _ = writeln!(s, "{k}.v_path = {}", join(&side.v_path));
        }
        s
    }

    /// Rows `kind,step,opponent,response,on_path`.
    pub fn strategy_csv(&self) -> String {
        let mut s = String::from("kind,step,opponent,response,on_path\n");
        for side in [&self.lower, &self.upper] {
            for (step, row) in side.strategy.table.iter().enumerate() {
                let played = match side.strategy.side {
                    StrategySide::Alpha => side.v_path[step],
                    StrategySide::Beta => side.u_path[step],
                };
                for (opp, resp) in row.iter().enumerate() {
                    let _ = writeln!(
                        s,
                        "{},{step},{opp},{resp},{}",
                        side.kind.name(),
                        u8::from(opp == played)
                    );
                }
            }
        }
        s
    }
}

fn join(xs: &[usize]) -> String {
    xs.iter().map(usize::to_string).collect::<Vec<_>>().join(" ")
}

struct Context<'a> {
    spec: &'a GameSpec,
    x: &'a EmpiricalMeasure,
    z: &'a EmpiricalMeasure,
    u_grid: Vec<Vec<f64>>,
    v_grid: Vec<Vec<f64>>,
    mesh: TimeMesh,
    integrator: IntegratorConfig,
    kind: Kind,
}

impl<'a> Context<'a> {
    fn new(spec: &'a GameSpec, ensemble: &'a TargetedEnsemble, kind: Kind, cfg: &DppConfig) -> Result<Self> {
        if ensemble.x.dim() != spec.dim {
            return Err(Error::DimensionMismatch {
                expected: spec.dim,
                got: ensemble.x.dim(),
            });
        }
        if cfg.u_resolution == 0 || cfg.v_resolution == 0 {
            return Err(Error::InvalidSpec("control resolutions must be positive".into()));
        }
        Ok(Self {
            spec,
            x: &ensemble.x,
            z: &ensemble.z,
            u_grid: control_grid(&spec.u_box, cfg.u_resolution)?,
            v_grid: control_grid(&spec.v_box, cfg.v_resolution)?,
            mesh: TimeMesh::new(0.0, spec.horizon, cfg.steps)?,
            integrator: cfg.integrator,
            kind,
        })
    }

    fn pairs(&self) -> usize {
        self.u_grid.len() * self.v_grid.len()
    }

    fn terminal(&self, coords: &[f64]) -> Result<f64> {
        terminal_expectation(self.spec, &self.x.with_coords(coords.to_vec())?, self.z)
    }

    /// Moves `coords` over step `k`; returns the step's running cost.
    fn advance(&self, k: usize, coords: &mut [f64], iu: usize, iv: usize) -> Result<f64> {
        integrate_segment(
            self.spec,
            coords,
            self.x.weights(),
            self.mesh.node(k),
            self.mesh.node(k + 1),
            &self.u_grid[iu],
            &self.v_grid[iv],
            &self.integrator,
            true,
        )
    }

    /// `c(u, v) + next(Φ(u, v))` for every pair, row-major in `(u, v)`.
    fn payoffs(&self, k: usize, coords: &[f64], next: &mut dyn FnMut(&[f64]) -> Result<f64>) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.pairs());
        let mut moved = coords.to_vec();
        for iu in 0..self.u_grid.len() {
            for iv in 0..self.v_grid.len() {
                moved.copy_from_slice(coords);
                let cost = self.advance(k, &mut moved, iu, iv)?;
                out.push(cost + next(&moved)?);
            }
        }
        Ok(out)
    }

    fn extremum(&self, payoff: &[f64]) -> f64 {
        extremize(self.kind, payoff, self.u_grid.len(), self.v_grid.len()).value
    }

    fn tree(&self, k: usize, end: usize, coords: &[f64], leaf: &dyn Fn(&[f64]) -> Result<f64>) -> Result<f64> {
        if k == end {
            return leaf(coords);
        }
        let payoff = self.payoffs(k, coords, &mut |c| self.tree(k + 1, end, c, leaf))?;
        Ok(self.extremum(&payoff))
    }

    fn check_tree_size(&self, depth: usize) -> Result<()> {
        let leaves = (self.pairs() as f64).powi(depth as i32);
        if leaves > EXACT_LEAF_LIMIT as f64 {
            return Err(Error::EnumerationLimit(format!(
                "{leaves:e} leaves exceed the exact-mode limit {EXACT_LEAF_LIMIT}"
            )));
        }
        Ok(())
    }
}

/// Value fields at steps `1..S` (index `k` holds step `k`; the terminal
/// step is evaluated exactly).
struct GridLevels {
    grids: Vec<Option<SpatialGrid>>,
    values: Vec<Vec<f64>>,
    invalid_nodes: usize,
    max_excursion: f64,
}

impl GridLevels {
    fn query(&self, ctx: &Context, k: usize, coords: &[f64]) -> Result<f64> {
        if k == ctx.mesh.steps {
            return ctx.terminal(coords);
        }
        let grid = self.grids[k].as_ref().expect("grid level present");
        let v = grid.interpolate(&self.values[k], coords)?;
        if v.is_nan() {
            return Err(Error::GridExcursion {
                excursion: self.max_excursion,
            });
        }
        Ok(v)
    }
}

fn sample_points(axes: usize) -> usize {
    (2..=5)
        .rev()
        .find(|s: &usize| s.pow(axes as u32) <= 20_000)
        .unwrap_or(2)
}

/// Per-coordinate drift range over `[lo, hi]` boxes (shared by all
/// particles) and all control pairs, sampled on a coarse tensor grid.
fn drift_range(ctx: &Context, t: f64, lo: &[f64], hi: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = ctx.spec.dim;
    let count = ctx.x.len();
    let d = n * count;
    let s = sample_points(d);
    let mut axes = Vec::with_capacity(d);
    for _ in 0..count {
        for k in 0..n {
            let (a, b) = if hi[k] > lo[k] {
                (lo[k], hi[k])
            } else {
                (lo[k] - 1e-9, lo[k] + 1e-9)
            };
            axes.push(Axis {
                lo: a,
                hi: b,
                points: s,
            });
        }
    }
    let grid = SpatialGrid::new(axes)?;
    let weights = ctx.x.weights();
    let per_node = (0..grid.len())
        .into_par_iter()
        .map_init(
            || (vec![0.0; d], vec![0.0; n]),
            |(node, drift), idx| {
                grid.node_into(idx, node);
                let features = FeatureValues::from_parts(n, node, weights);
                let mut fmin = vec![f64::INFINITY; n];
                let mut fmax = vec![f64::NEG_INFINITY; n];
                for u in &ctx.u_grid {
                    for v in &ctx.v_grid {
                        for x in node.chunks_exact(n) {
                            ctx.spec.drift_into(t, x, &features, u, v, drift)?;
                            for k in 0..n {
                                fmin[k] = fmin[k].min(drift[k]);
                                fmax[k] = fmax[k].max(drift[k]);
                            }
                        }
                    }
                }
                Ok((fmin, fmax))
            },
        )
        .collect::<Result<Vec<_>>>()?;
    let mut fmin = vec![f64::INFINITY; n];
    let mut fmax = vec![f64::NEG_INFINITY; n];
    for (a, b) in per_node {
        for k in 0..n {
            fmin[k] = fmin[k].min(a[k]);
            fmax[k] = fmax[k].max(b[k]);
        }
    }
    Ok((fmin, fmax))
}

/// Boxes `[lo_k, hi_k]` per coordinate containing every configuration
/// reachable at step `k`.
fn reach_boxes(ctx: &Context) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    let n = ctx.spec.dim;
    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    for atom in ctx.x.atoms() {
        for k in 0..n {
            lo[k] = lo[k].min(atom[k]);
            hi[k] = hi[k].max(atom[k]);
        }
    }
    let tau = ctx.mesh.tau();
    let mut boxes = vec![(lo, hi)];
    for k in 0..ctx.mesh.steps {
        let t = ctx.mesh.node(k);
        let (lo, hi) = boxes[k].clone();
        let grow = |fmin: &[f64], fmax: &[f64]| -> (Vec<f64>, Vec<f64>) {
            let mut nlo = lo.clone();
            let mut nhi = hi.clone();
            for c in 0..n {
                let margin = 0.05 * tau * (fmax[c] - fmin[c]) + 1e-6 * (1.0 + lo[c].abs().max(hi[c].abs()));
                nlo[c] = lo[c] + tau * fmin[c].min(0.0) - margin;
                nhi[c] = hi[c] + tau * fmax[c].max(0.0) + margin;
            }
            (nlo, nhi)
        };
        let (fmin, fmax) = drift_range(ctx, t, &lo, &hi)?;
        let (plo, phi) = grow(&fmin, &fmax);
        let (fmin2, fmax2) = drift_range(ctx, t, &plo, &phi)?;
        let fmin: Vec<f64> = fmin.iter().zip(&fmin2).map(|(a, b)| a.min(*b)).collect();
        let fmax: Vec<f64> = fmax.iter().zip(&fmax2).map(|(a, b)| a.max(*b)).collect();
        boxes.push(grow(&fmin, &fmax));
    }
    Ok(boxes)
}

fn level_grids(ctx: &Context, mode: &DppMode) -> Result<Vec<Option<SpatialGrid>>> {
    let steps = ctx.mesh.steps;
    let d = ctx.spec.dim * ctx.x.len();
    let mut grids = vec![None; steps + 1];
    match mode {
        DppMode::Exact => {}
        DppMode::Grid(grid) => {
            if grid.ndim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: grid.ndim(),
                });
            }
            for g in grids.iter_mut().take(steps).skip(1) {
                *g = Some(grid.clone());
            }
        }
        DppMode::Adaptive { points } => {
            if steps > 1 {
                let boxes = reach_boxes(ctx)?;
                for (k, g) in grids.iter_mut().enumerate().take(steps).skip(1) {
                    let (lo, hi) = &boxes[k];
                    let mut axes = Vec::with_capacity(d);
                    for _ in 0..ctx.x.len() {
                        for c in 0..ctx.spec.dim {
                            axes.push(Axis::new(lo[c], hi[c], *points)?);
                        }
                    }
                    *g = Some(SpatialGrid::new(axes)?);
                }
            }
        }
    }
    Ok(grids)
}

/// Index of the node with the particle blocks of `idx` sorted.
fn canonical_index(grid: &SpatialGrid, idx: usize, n: usize, count: usize, scratch: &mut Vec<Vec<usize>>) -> usize {
    scratch.clear();
    for i in 0..count {
        scratch.push((0..n).map(|k| grid.axis_index(idx, i * n + k)).collect());
    }
    scratch.sort();
    let flat: Vec<usize> = scratch.iter().flatten().copied().collect();
    grid.index_of(&flat)
}

fn symmetric_layout(ctx: &Context, grid: &SpatialGrid, enabled: bool) -> bool {
    let (n, count) = (ctx.spec.dim, ctx.x.len());
    enabled
        && count > 1
        && ctx.x.has_uniform_weights()
        && (1..count).all(|i| (0..n).all(|k| grid.axes()[i * n + k] == grid.axes()[k]))
}

fn build_levels(ctx: &Context, cfg: &DppConfig) -> Result<GridLevels> {
    let steps = ctx.mesh.steps;
    let grids = level_grids(ctx, &cfg.mode)?;
    let mut levels = GridLevels {
        grids,
        values: vec![Vec::new(); steps + 1],
        invalid_nodes: 0,
        max_excursion: 0.0,
    };
    let (n, count) = (ctx.spec.dim, ctx.x.len());
    for k in (1..steps).rev() {
        let grid = levels.grids[k].clone().expect("grid level present");
        let symmetric = symmetric_layout(ctx, &grid, cfg.symmetric);
        let targets: Vec<usize> = if symmetric {
            let mut scratch = Vec::new();
            (0..grid.len())
                .filter(|&i| canonical_index(&grid, i, n, count, &mut scratch) == i)
                .collect()
        } else {
            (0..grid.len()).collect()
        };
        let lv = &levels;
        let computed = targets
            .par_iter()
            .map_init(
                || vec![0.0; grid.ndim()],
                |node, &idx| -> Result<(f64, f64)> {
                    grid.node_into(idx, node);
                    let mut excursion: f64 = 0.0;
                    let mut next = |c: &[f64]| match lv.query(ctx, k + 1, c) {
                        Err(Error::GridExcursion { excursion: e }) => {
                            excursion = excursion.max(e);
                            Ok(f64::NAN)
                        }
                        other => other,
                    };
                    let payoff = ctx.payoffs(k, node, &mut next)?;
                    if payoff.iter().any(|p| p.is_nan()) {
                        Ok((f64::NAN, excursion.max(grid.excursion(node))))
                    } else {
                        Ok((ctx.extremum(&payoff), 0.0))
                    }
                },
            )
            .collect::<Result<Vec<_>>>()?;
        let mut values = vec![f64::NAN; grid.len()];
        for (&idx, &(v, e)) in targets.iter().zip(&computed) {
            values[idx] = v;
            if v.is_nan() {
                levels.max_excursion = levels.max_excursion.max(e);
            }
        }
        if symmetric {
            let mut scratch = Vec::new();
            for idx in 0..grid.len() {
                let c = canonical_index(&grid, idx, n, count, &mut scratch);
                if c != idx {
                    values[idx] = values[c];
                }
            }
        }
        levels.invalid_nodes += values.iter().filter(|v| v.is_nan()).count();
        levels.values[k] = values;
    }
    Ok(levels)
}

enum Route<'a> {
    Tree,
    Levels(&'a GridLevels),
}

impl Route<'_> {
    fn next(&self, ctx: &Context, k: usize, coords: &[f64]) -> Result<f64> {
        match self {
            Route::Tree => ctx.tree(k, ctx.mesh.steps, coords, &|c| ctx.terminal(c)),
            Route::Levels(levels) => levels.query(ctx, k, coords),
        }
    }
}

/// Follows the extremal pairs from the initial configuration, recording
/// the response table at every step. Returns the value at step 0.
fn realize(ctx: &Context, route: &Route) -> Result<(f64, DiscreteStrategy, Vec<usize>, Vec<usize>)> {
    let (nu, nv) = (ctx.u_grid.len(), ctx.v_grid.len());
    let mut coords = ctx.x.coords().to_vec();
    let mut table = Vec::with_capacity(ctx.mesh.steps);
    let (mut u_path, mut v_path) = (Vec::new(), Vec::new());
    let mut value = f64::NAN;
    for k in 0..ctx.mesh.steps {
        let payoff = ctx.payoffs(k, &coords, &mut |c| route.next(ctx, k + 1, c))?;
        let ext = extremize(ctx.kind, &payoff, nu, nv);
        if k == 0 {
            value = ext.value;
        }
        let row: Vec<usize> = match ctx.kind {
            Kind::Lower => (0..nv)
                .map(|iv| extremize(Kind::Lower, &column(&payoff, nu, nv, iv), nu, 1).arg_u)
                .collect(),
            Kind::Upper => (0..nu)
                .map(|iu| extremize(Kind::Upper, &payoff[iu * nv..(iu + 1) * nv], 1, nv).arg_v)
                .collect(),
        };
        table.push(row);
        u_path.push(ext.arg_u);
        v_path.push(ext.arg_v);
        ctx.advance(k, &mut coords, ext.arg_u, ext.arg_v)?;
    }
    let side = match ctx.kind {
        Kind::Lower => StrategySide::Alpha,
        Kind::Upper => StrategySide::Beta,
    };
    Ok((
        value,
        DiscreteStrategy {
            mesh: ctx.mesh,
            side,
            table,
        },
        u_path,
        v_path,
    ))
}

fn column(payoff: &[f64], nu: usize, nv: usize, iv: usize) -> Vec<f64> {
    (0..nu).map(|iu| payoff[iu * nv + iv]).collect()
}

/// Discretized lower or upper value at `(0, ν)`.
pub fn dpp_value(spec: &GameSpec, ensemble: &TargetedEnsemble, kind: Kind, cfg: &DppConfig) -> Result<SideValue> {
    let ctx = Context::new(spec, ensemble, kind, cfg)?;
    let (levels, route);
    match cfg.mode {
        DppMode::Exact => {
            ctx.check_tree_size(cfg.steps)?;
            route = Route::Tree;
        }
        _ => {
            levels = build_levels(&ctx, cfg)?;
            route = Route::Levels(&levels);
        }
    }
    let (value, strategy, u_path, v_path) = realize(&ctx, &route)?;
    let (invalid_nodes, max_excursion) = match &route {
        Route::Tree => (0, 0.0),
        Route::Levels(l) => (l.invalid_nodes, l.max_excursion),
    };
    Ok(SideValue {
        kind,
        value,
        strategy,
        u_path,
        v_path,
        invalid_nodes,
        max_excursion,
    })
}

/// Both values plus diagnostics.
pub fn game_value(spec: &GameSpec, ensemble: &TargetedEnsemble, cfg: &DppConfig) -> Result<GameValueReport> {
    let lower = dpp_value(spec, ensemble, Kind::Lower, cfg)?;
    let upper = dpp_value(spec, ensemble, Kind::Upper, cfg)?;
    Ok(GameValueReport {
        isaacs_gap: upper.value - lower.value,
        lower,
        upper,
        steps: cfg.steps,
        u_resolution: cfg.u_resolution,
        v_resolution: cfg.v_resolution,
        mode: cfg.mode.name(),
        dpp_residual: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BruteForceMethod {
    /// Every step-causal strategy table against every opponent path.
    StrategyTables,
    /// Alternating extrema over the payoff tensor of all path pairs.
    NestedExtrema,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BruteForceValue {
    pub value: f64,
    pub method: BruteForceMethod,
    pub path_pairs: usize,
}

fn digits(mut index: usize, radix: usize, len: usize) -> Vec<usize> {
    let mut out = vec![0; len];
    for d in out.iter_mut().rev() {
        *d = index % radix;
        index /= radix;
    }
    out
}

/// Payoffs of every path pair by forward simulation, `payoff[pu * P_v + pv]`
/// with step 0 as the most significant digit.
fn path_payoffs(ctx: &Context) -> Result<Vec<f64>> {
    let s = ctx.mesh.steps;
    let (nu, nv) = (ctx.u_grid.len(), ctx.v_grid.len());
    let (pu, pv) = (nu.pow(s as u32), nv.pow(s as u32));
    let pairs: Vec<(usize, usize)> = (0..pu).flat_map(|a| (0..pv).map(move |b| (a, b))).collect();
    pairs
        .par_iter()
        .map(|&(a, b)| {
            let du = digits(a, nu, s);
            let dv = digits(b, nv, s);
            let u_path = ControlPath::new(
                ctx.mesh,
                du.iter().map(|&i| ctx.u_grid[i].clone()).collect(),
                &ctx.spec.u_box,
            )?;
            let v_path = ControlPath::new(
                ctx.mesh,
                dv.iter().map(|&i| ctx.v_grid[i].clone()).collect(),
                &ctx.spec.v_box,
            )?;
            let mut state = ParticleState {
                time: ctx.mesh.node(0),
                measure: ctx.x.clone(),
            };
            let mut costs = Vec::with_capacity(s);
            for k in 0..s {
                let (next, c) = running_cost_accumulate(
                    ctx.spec,
                    &state,
                    &u_path,
                    &v_path,
                    ctx.mesh.node(k + 1),
                    &ctx.integrator,
                )?;
                costs.push(c);
                state = next;
            }
            let mut total = terminal_expectation(ctx.spec, &state.measure, ctx.z)?;
            for c in costs.iter().rev() {
                total += c;
            }
            Ok(total)
        })
        .collect()
}

/// Step-`k` history prefix of a path index.
fn prefix(index: usize, radix: usize, steps: usize, k: usize) -> usize {
    index / radix.pow((steps - 1 - k) as u32)
}

/// `min_α max_v` over full-history tables `α` (lower) or `max_β min_u`
/// (upper). `own` is the strategist's control count, `opp` the opponent's.
fn enumerate_tables(payoff: &[f64], kind: Kind, own: usize, opp: usize, steps: usize) -> f64 {
    let offsets: Vec<usize> = (0..steps)
        .scan(0, |acc, k| {
            let o = *acc;
            *acc += opp.pow(k as u32 + 1);
            Some(o)
        })
        .collect();
    let histories: usize = (1..=steps).map(|k| opp.pow(k as u32)).sum();
    let opp_paths = opp.pow(steps as u32);
    let own_paths = own.pow(steps as u32);
    let mut table = vec![0usize; histories];
    let mut best = match kind {
        Kind::Lower => f64::INFINITY,
        Kind::Upper => f64::NEG_INFINITY,
    };
    loop {
        let mut worst = match kind {
            Kind::Lower => f64::NEG_INFINITY,
            Kind::Upper => f64::INFINITY,
        };
        for q in 0..opp_paths {
            let mut p = 0;
            for k in 0..steps {
                p = p * own + table[offsets[k] + prefix(q, opp, steps, k)];
            }
            let value = match kind {
                Kind::Lower => payoff[p * opp_paths + q],
                Kind::Upper => payoff[q * own_paths + p],
            };
            worst = match kind {
                Kind::Lower => worst.max(value),
                Kind::Upper => worst.min(value),
            };
        }
        best = match kind {
            Kind::Lower => best.min(worst),
            Kind::Upper => best.max(worst),
        };
        let mut pos = 0;
        loop {
            if pos == histories {
                return best;
            }
            table[pos] += 1;
            if table[pos] < own {
                break;
            }
            table[pos] = 0;
            pos += 1;
        }
    }
}

/// Alternating extrema, step by step: `max_{v₀} min_{u₀} max_{v₁} …` for
/// the lower value and `min_{u₀} max_{v₀} min_{u₁} …` for the upper.
fn nested(payoff: &[f64], kind: Kind, nu: usize, nv: usize, steps: usize, k: usize, pu: usize, pv: usize) -> f64 {
    if k == steps {
        return payoff[pu * nv.pow(steps as u32) + pv];
    }
    let inner = |outer_first: bool| {
        let (outer, inner_n) = if outer_first { (nv, nu) } else { (nu, nv) };
        let mut best = if outer_first { f64::NEG_INFINITY } else { f64::INFINITY };
        for o in 0..outer {
            let mut acc = if outer_first { f64::INFINITY } else { f64::NEG_INFINITY };
            for i in 0..inner_n {
                let (a, b) = if outer_first { (i, o) } else { (o, i) };
                let v = nested(payoff, kind, nu, nv, steps, k + 1, pu * nu + a, pv * nv + b);
                acc = if outer_first { acc.min(v) } else { acc.max(v) };
            }
            best = if outer_first { best.max(acc) } else { best.min(acc) };
        }
        best
    };
    inner(kind == Kind::Lower)
}

/// Exact discretized value by enumerating every pair of control paths
/// (and, when small enough, every strategy table).
pub fn brute_force_value(
    spec: &GameSpec,
    ensemble: &TargetedEnsemble,
    kind: Kind,
    cfg: &DppConfig,
) -> Result<BruteForceValue> {
    let ctx = Context::new(spec, ensemble, kind, cfg)?;
    let s = cfg.steps;
    let (nu, nv) = (ctx.u_grid.len(), ctx.v_grid.len());
    let pairs = (ctx.pairs() as f64).powi(s as i32);
    if pairs > BRUTE_FORCE_LIMIT as f64 {
        return Err(Error::EnumerationLimit(format!(
            "{pairs:e} path pairs exceed the oracle limit {BRUTE_FORCE_LIMIT}"
        )));
    }
    let payoff = path_payoffs(&ctx)?;
    let (own, opp) = match kind {
        Kind::Lower => (nu, nv),
        Kind::Upper => (nv, nu),
    };
    let histories: f64 = (1..=s).map(|k| (opp as f64).powi(k as i32)).sum();
    let work = (own as f64).powf(histories) * (opp as f64).powi(s as i32) * s as f64;
    let (value, method) = if work <= STRATEGY_LIMIT as f64 {
        (
            enumerate_tables(&payoff, kind, own, opp, s),
            BruteForceMethod::StrategyTables,
        )
    } else {
        (
            nested(&payoff, kind, nu, nv, s, 0, 0, 0),
            BruteForceMethod::NestedExtrema,
        )
    };
    Ok(BruteForceValue {
        value,
        method,
        path_pairs: payoff.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DppResidual {
    pub residual: f64,
    /// `2·max Δx` of the grid at the split time, in grid modes.
    pub interpolation_bound: Option<f64>,
}

/// `|value over [0, T]| − value of the recursion on [0, r] whose terminal
/// data is the value at `r``.
pub fn dpp_residual(
    spec: &GameSpec,
    ensemble: &TargetedEnsemble,
    kind: Kind,
    cfg: &DppConfig,
    r: f64,
) -> Result<DppResidual> {
    let ctx = Context::new(spec, ensemble, kind, cfg)?;
    let j = match ctx.mesh.node_index(r) {
        Some(j) if j > 0 && j < cfg.steps => j,
        _ => return Err(Error::OffMesh(r)),
    };
    let x0 = ctx.x.coords();
    match cfg.mode {
        DppMode::Exact => {
            ctx.check_tree_size(cfg.steps)?;
            let terminal = |c: &[f64]| ctx.terminal(c);
            let direct = ctx.tree(0, cfg.steps, x0, &terminal)?;
            let split = ctx.tree(0, j, x0, &|c| ctx.tree(j, cfg.steps, c, &terminal))?;
            Ok(DppResidual {
                residual: (direct - split).abs(),
                interpolation_bound: None,
            })
        }
        _ => {
            ctx.check_tree_size(j)?;
            let levels = build_levels(&ctx, cfg)?;
            let route = Route::Levels(&levels);
            let payoff = ctx.payoffs(0, x0, &mut |c| route.next(&ctx, 1, c))?;
            let direct = ctx.extremum(&payoff);
            let split = ctx.tree(0, j, x0, &|c| levels.query(&ctx, j, c))?;
            let bound = levels.grids[j]
                .as_ref()
                .map(|g| 2.0 * g.axes().iter().map(Axis::dx).fold(0.0, f64::max));
            Ok(DppResidual {
                residual: (direct - split).abs(),
                interpolation_bound: bound,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossValidation {
    pub dpp: f64,
    pub hji: f64,
    pub discrepancy: f64,
    pub dpp_steps: usize,
    pub hji_steps: usize,
    pub hji_dx: f64,
}

/// The DPP value against the HJI solution evaluated at the initial
/// configuration of a uniform ensemble.
pub fn cross_validate_vs_hji(
    spec: &GameSpec,
    ensemble: &TargetedEnsemble,
    kind: Kind,
    cfg: &DppConfig,
    grid: &SpatialGrid,
    scheme: &SchemeConfig,
) -> Result<CrossValidation> {
    let dpp = dpp_value(spec, ensemble, kind, cfg)?.value;
    let sol = hji::solve(spec, grid, &ensemble.z, kind, scheme)?;
    let hji = hji::value_at_measure(&sol.field, &ensemble.x)?;
    Ok(CrossValidation {
        dpp,
        hji,
        discrepancy: (dpp - hji).abs(),
        dpp_steps: cfg.steps,
        hji_steps: sol.steps,
        hji_dx: grid.axes().iter().map(Axis::dx).fold(0.0, f64::max),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuitySample {
    pub distance: f64,
    pub difference: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuityReport {
    pub constant: f64,
    pub samples: Vec<ContinuitySample>,
    pub violations: usize,
    pub max_ratio: f64,
}

/// Checks `|V(ν) − V(ν′)| ≤ C·(W₂(νx, νx′) + W₂(νz, νz′))` with
/// `C = e^{KT}·K·(T + 1)` over the perturbed ensembles.
pub fn continuity_check(
    spec: &GameSpec,
    base: &TargetedEnsemble,
    perturbed: &[TargetedEnsemble],
    kind: Kind,
    cfg: &DppConfig,
) -> Result<ContinuityReport> {
    let k = spec.lipschitz.ok_or(Error::MissingLipschitz)?;
    let t = spec.horizon;
    let constant = (k * t).exp() * k * (t + 1.0);
    let v0 = dpp_value(spec, base, kind, cfg)?.value;
    let mut samples = Vec::with_capacity(perturbed.len());
    let (mut violations, mut max_ratio) = (0, 0.0f64);
    for other in perturbed {
        let distance = wasserstein(2, &base.x, &other.x)? + wasserstein(2, &base.z, &other.z)?;
        let difference = (dpp_value(spec, other, kind, cfg)?.value - v0).abs();
        if difference > constant * distance {
            violations += 1;
        }
        if distance > 0.0 {
            max_ratio = max_ratio.max(difference / distance);
        }
        samples.push(ContinuitySample { distance, difference });
    }
    Ok(ContinuityReport {
        constant,
        samples,
        violations,
        max_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::ControlBox;

    fn game(f: &str, l: &str, m: &str, u: (f64, f64), v: (f64, f64)) -> GameSpec {
        GameSpec::from_sources(
            1.0,
            ControlBox::interval(u.0, u.1).unwrap(),
            ControlBox::interval(v.0, v.1).unwrap(),
            &[f],
            l,
            m,
        )
        .unwrap()
    }

    fn at(x: &[f64], z: &[f64]) -> TargetedEnsemble {
        TargetedEnsemble::new(
            EmpiricalMeasure::uniform_1d(x).unwrap(),
            EmpiricalMeasure::uniform_1d(z).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn opposing_pushes_cancel() {
        let spec = game("u1 - v1", "0", "x1", (0.0, 1.0), (0.0, 1.0));
        let ens = at(&[0.0], &[0.0]);
        let cfg = DppConfig::exact(2, 2, 2);
        for kind in [Kind::Lower, Kind::Upper] {
            let side = dpp_value(&spec, &ens, kind, &cfg).unwrap();
            assert_eq!(side.value, 0.0);
            assert_eq!(side.u_path, vec![0, 0]);
            assert_eq!(side.v_path, vec![0, 0]);
            let oracle = brute_force_value(&spec, &ens, kind, &cfg).unwrap();
            assert_eq!(oracle.method, BruteForceMethod::StrategyTables);
            assert_eq!(oracle.value.to_bits(), side.value.to_bits());
        }
    }

    #[test]
    fn terminal_only_game() {
        let spec = game("0", "0", "sin(x1) - z1", (0.0, 1.0), (0.0, 1.0));
        let ens = at(&[std::f64::consts::FRAC_PI_2], &[0.0]);
        for steps in [1, 3] {
            let v = dpp_value(&spec, &ens, Kind::Lower, &DppConfig::exact(steps, 2, 2)).unwrap();
            assert_eq!(v.value, 1.0);
            let v = dpp_value(&spec, &ens, Kind::Upper, &DppConfig::adaptive(steps, 2, 2, 5)).unwrap();
            assert_eq!(v.value, 1.0);
        }
    }

    #[test]
    fn singleton_opponent() {
        let spec = game("u1", "0", "x1", (0.0, 1.0), (0.0, 0.0));
        let ens = at(&[0.7], &[0.0]);
        let cfg = DppConfig::exact(1, 2, 1);
        assert_eq!(dpp_value(&spec, &ens, Kind::Lower, &cfg).unwrap().value, 0.7);
        assert_eq!(brute_force_value(&spec, &ens, Kind::Upper, &cfg).unwrap().value, 0.7);
    }

    #[test]
    fn non_isaacs_gap_is_one_step() {
        let spec = game("0", "(u1-v1)*(u1-v1)", "0", (0.0, 1.0), (0.0, 1.0));
        let ens = at(&[0.0], &[0.0]);
        let cfg = DppConfig::exact(1, 2, 2);
        let lo = dpp_value(&spec, &ens, Kind::Lower, &cfg).unwrap();
        let hi = dpp_value(&spec, &ens, Kind::Upper, &cfg).unwrap();
        assert_eq!(lo.value, 0.0);
        assert!((hi.value - 1.0).abs() < 1e-15);
        // The minimizer copies v; the maximizer plays away from u.
        assert_eq!(lo.strategy.table, vec![vec![0, 1]]);
        assert_eq!(hi.strategy.table, vec![vec![1, 0]]);
        for kind in [Kind::Lower, Kind::Upper] {
            let d = dpp_value(&spec, &ens, kind, &cfg).unwrap().value;
            assert_eq!(
                brute_force_value(&spec, &ens, kind, &cfg).unwrap().value.to_bits(),
                d.to_bits()
            );
        }
    }

    #[test]
    fn unit_running_cost() {
        let spec = game("0", "1", "x1", (0.0, 1.0), (0.0, 1.0));
        let ens = at(&[0.25, 0.75], &[0.0]);
        let v = dpp_value(&spec, &ens, Kind::Lower, &DppConfig::adaptive(4, 2, 2, 5)).unwrap();
        assert!((v.value - 1.5).abs() < 1e-14);
    }

    #[test]
    fn oracle_agreement_on_small_corpus() {
        let spec = game(
            "1/(1+x1*x1) + feature(mean_sin) + u1 - 0.1*v1",
            "sin(x1) + feature(mean) + u1 - v1",
            "sin(x1) - z1",
            (0.0, 1.0),
            (0.0, 1.0),
        );
        let coupled = game(
            "u1*v1 - x1",
            "(u1-v1)*(u1-v1) + x1*x1",
            "x1*x1 - z1",
            (-1.0, 1.0),
            (-1.0, 1.0),
        );
        let ens = at(&[-0.4, 0.3], &[0.1]);
        for s in [&spec, &coupled] {
            for (steps, r) in [(1, 3), (2, 2), (3, 2)] {
                let cfg = DppConfig::exact(steps, r, r).with_integrator(IntegratorConfig::rk4(2));
                for kind in [Kind::Lower, Kind::Upper] {
                    let d = dpp_value(s, &ens, kind, &cfg).unwrap().value;
                    let b = brute_force_value(s, &ens, kind, &cfg).unwrap();
                    assert_eq!(d.to_bits(), b.value.to_bits(), "steps {steps}, R {r}, {kind:?}");
                }
                let lo = dpp_value(s, &ens, Kind::Lower, &cfg).unwrap().value;
                let hi = dpp_value(s, &ens, Kind::Upper, &cfg).unwrap().value;
                assert!(lo <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn table_and_tensor_oracles_agree() {
        let coupled = game("u1*v1 - x1", "(u1-v1)*(u1-v1)", "x1*x1", (-1.0, 1.0), (-1.0, 1.0));
        let ens = at(&[0.3], &[0.0]);
        let cfg = DppConfig::exact(2, 2, 2).with_integrator(IntegratorConfig::rk4(1));
        let ctx = Context::new(&coupled, &ens, Kind::Lower, &cfg).unwrap();
        let payoff = path_payoffs(&ctx).unwrap();
        for kind in [Kind::Lower, Kind::Upper] {
            let t = enumerate_tables(&payoff, kind, 2, 2, 2);
            let n = nested(&payoff, kind, 2, 2, 2, 0, 0, 0);
            assert_eq!(t.to_bits(), n.to_bits());
        }
    }

    #[test]
    fn residual_vanishes_in_exact_mode() {
        let spec = game("u1 - 0.5*v1 + sin(x1)", "x1 + u1 - v1", "x1*x1", (0.0, 1.0), (0.0, 1.0));
        let ens = at(&[0.1, -0.2], &[0.0]);
        let cfg = DppConfig::exact(4, 2, 2).with_integrator(IntegratorConfig::rk4(2));
        for r in [0.25, 0.5, 0.75] {
            assert_eq!(dpp_residual(&spec, &ens, Kind::Lower, &cfg, r).unwrap().residual, 0.0);
        }
        assert!(matches!(
            dpp_residual(&spec, &ens, Kind::Lower, &cfg, 0.3),
            Err(Error::OffMesh(_))
        ));
        assert!(matches!(
            dpp_residual(&spec, &ens, Kind::Lower, &cfg, 1.0),
            Err(Error::OffMesh(_))
        ));
    }

    #[test]
    fn residual_vanishes_without_drift() {
        let spec = game("0", "x1*x1 + u1 - v1", "x1", (0.0, 1.0), (0.0, 1.0));
        let ens = at(&[0.5], &[0.0]);
        let cfg = DppConfig::adaptive(4, 2, 2, 5);
        let r = dpp_residual(&spec, &ens, Kind::Upper, &cfg, 0.5).unwrap();
        assert!(r.residual <= 1e-15, "{r:?}");
    }

    #[test]
    fn grid_mode_matches_exact_for_linear_values() {
        // Linear terminal data and drift independent of x keep the value
        // affine in x, so interpolation is exact.
        let spec = game("u1 - v1", "u1 - 0.5*v1", "2*x1", (0.0, 1.0), (0.0, 1.0));
        let ens = at(&[0.2], &[0.0]);
        let exact = dpp_value(&spec, &ens, Kind::Lower, &DppConfig::exact(3, 3, 3)).unwrap();
        let grid = SpatialGrid::cube(1, -4.0, 4.0, 9).unwrap();
        let mut cfg = DppConfig::exact(3, 3, 3);
        cfg.mode = DppMode::Grid(grid);
        let fixed = dpp_value(&spec, &ens, Kind::Lower, &cfg).unwrap();
        let adaptive = dpp_value(&spec, &ens, Kind::Lower, &DppConfig::adaptive(3, 3, 3, 7)).unwrap();
        assert!((fixed.value - exact.value).abs() < 1e-13);
        assert!((adaptive.value - exact.value).abs() < 1e-13);
        assert!(fixed.invalid_nodes > 0);
        assert_eq!(adaptive.invalid_nodes, 0);
    }

    #[test]
    fn small_grid_is_an_excursion() {
        let spec = game("1 + u1", "0", "x1", (0.0, 1.0), (0.0, 1.0));
        let ens = at(&[0.0], &[0.0]);
        let mut cfg = DppConfig::exact(4, 2, 2);
        cfg.mode = DppMode::Grid(SpatialGrid::cube(1, -0.5, 0.8, 5).unwrap());
        match dpp_value(&spec, &ens, Kind::Lower, &cfg) {
            Err(Error::GridExcursion { excursion }) => assert!(excursion > 0.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn law_invariance_and_symmetry() {
        let spec = game(
            "1/(1+x1*x1) + feature(mean_sin) + u1 - 0.1*v1",
            "sin(x1) + feature(mean) + u1 - v1",
            "sin(x1) - z1",
            (0.0, 1.0),
            (0.0, 1.0),
        );
        let a = at(&[-0.5, 0.1, 0.6], &[0.0]);
        let b = at(&[0.6, -0.5, 0.1], &[0.0]);
        let cfg = DppConfig::adaptive(3, 2, 2, 5).with_integrator(IntegratorConfig::rk4(2));
        let va = dpp_value(&spec, &a, Kind::Lower, &cfg).unwrap().value;
        let vb = dpp_value(&spec, &b, Kind::Lower, &cfg).unwrap().value;
        assert!((va - vb).abs() <= 1e-12);
        let mut full = cfg.clone();
        full.symmetric = false;
        let vf = dpp_value(&spec, &a, Kind::Lower, &full).unwrap().value;
        assert!((va - vf).abs() <= 1e-12);
        let ea = dpp_value(&spec, &a, Kind::Upper, &DppConfig::exact(2, 2, 2))
            .unwrap()
            .value;
        let eb = dpp_value(&spec, &b, Kind::Upper, &DppConfig::exact(2, 2, 2))
            .unwrap()
            .value;
        assert!((ea - eb).abs() <= 1e-12);
    }

    #[test]
    fn continuity_modulus() {
        let spec = game(
            "u1 - v1 + 0.5*feature(mean)",
            "x1 + u1 - v1",
            "x1 - z1",
            (0.0, 1.0),
            (0.0, 1.0),
        )
        .with_lipschitz(1.5);
        let base = at(&[0.0, 0.5], &[0.0]);
        let perturbed = [
            at(&[0.1, 0.5], &[0.0]),
            at(&[0.0, 0.5], &[0.3]),
            at(&[-0.2, 0.9], &[0.1]),
        ];
        let cfg = DppConfig::exact(2, 2, 2);
        let rep = continuity_check(&spec, &base, &perturbed, Kind::Lower, &cfg).unwrap();
        assert_eq!(rep.violations, 0);
        assert!((rep.constant - 1.5f64.exp() * 3.0).abs() < 1e-12);
        let bare = game("0", "0", "x1", (0.0, 1.0), (0.0, 1.0));
        assert!(matches!(
            continuity_check(&bare, &base, &perturbed, Kind::Lower, &cfg),
            Err(Error::MissingLipschitz)
        ));
    }

    #[test]
    fn report_serialization() {
        let spec = game("u1 - v1", "0", "x1", (0.0, 1.0), (0.0, 1.0));
        let rep = game_value(&spec, &at(&[0.0], &[0.0]), &DppConfig::exact(2, 2, 2)).unwrap();
        let kv = rep.to_key_value();
        assert!(kv.contains("lower = 0\n"));
        assert!(kv.contains("lower.u_path = 0 0\n"));
        let csv = rep.strategy_csv();
        assert_eq!(csv.lines().count(), 1 + 2 * 2 * 2);
        assert!(csv.contains("lower,0,0,0,1\n"));
    }

    #[test]
    fn exact_mode_size_limit() {
        let spec = game("0", "0", "x1", (0.0, 1.0), (0.0, 1.0));
        let cfg = DppConfig::exact(20, 5, 5);
        assert!(matches!(
            dpp_value(&spec, &at(&[0.0], &[0.0]), Kind::Lower, &cfg),
            Err(Error::EnumerationLimit(_))
        ));
    }
}
