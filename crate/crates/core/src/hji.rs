//! Lax-Friedrichs finite differences for the lifted HJI equations on
//! `N`-atom uniform laws.
//!
//! The value is stored on a tensor grid over the `N·n` particle coordinates
//! (axis `i·n + k` is coordinate `k` of particle `i`). The target law only
//! enters through the terminal data.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::game::{control_grid, GameSpec};
use crate::hamiltonian::{extremize, payoff_matrix, Kind};
use crate::measure::{EmpiricalMeasure, FeatureValues};

/// Largest supported number of grid axes.
pub const MAX_GRID_AXES: usize = 3;

/// Largest grid rank accepted by [`SpatialGrid::interpolate`].
pub const INTERPOLATION_AXES: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, points: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidSpec(format!("grid axis needs lo < hi (got {lo}, {hi})")));
        }
        if points < 3 {
            return Err(Error::InvalidSpec(format!(
                "grid axis needs at least 3 points (got {points})"
            )));
        }
        Ok(Self { lo, hi, points })
    }

    pub fn dx(&self) -> f64 {
        (self.hi - self.lo) / (self.points - 1) as f64
    }

    pub fn coordinate(&self, j: usize) -> f64 {
        if j + 1 == self.points {
            self.hi
        } else {
            self.lo + j as f64 * self.dx()
        }
    }
}

/// Uniform tensor grid, last axis fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialGrid {
    axes: Vec<Axis>,
    strides: Vec<usize>,
    len: usize,
}

impl SpatialGrid {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::InvalidSpec("grid needs at least one axis".into()));
        }
        let mut strides = vec![1; axes.len()];
        for a in (0..axes.len() - 1).rev() {
            strides[a] = strides[a + 1] * axes[a + 1].points;
        }
        let len = strides[0] * axes[0].points;
        Ok(Self { axes, strides, len })
    }

    /// `count` identical axes.
    pub fn cube(count: usize, lo: f64, hi: f64, points: usize) -> Result<Self> {
        Self::new(vec![Axis::new(lo, hi, points)?; count])
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn ndim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.strides[axis]
    }

    /// Index of node `idx` along `axis`.
    pub fn axis_index(&self, idx: usize, axis: usize) -> usize {
        (idx / self.strides[axis]) % self.axes[axis].points
    }

    pub fn node_into(&self, idx: usize, out: &mut [f64]) {
        for (a, o) in out.iter_mut().enumerate() {
            *o = self.axes[a].coordinate(self.axis_index(idx, a));
        }
    }

    pub fn node(&self, idx: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.ndim()];
        self.node_into(idx, &mut out);
        out
    }

    pub fn index_of(&self, multi: &[usize]) -> usize {
        multi.iter().zip(&self.strides).map(|(j, s)| j * s).sum()
    }

    /// Distance by which `point` lies outside the grid box (0 inside).
    pub fn excursion(&self, point: &[f64]) -> f64 {
        self.axes
            .iter()
            .zip(point)
            .map(|(ax, &x)| (ax.lo - x).max(x - ax.hi).max(0.0))
            .fold(0.0, f64::max)
    }

    /// Multilinear interpolation of nodal `values`. Points outside the box
    /// are an error; points within `1e-12·(1 + |x|)` of a face are clamped.
    pub fn interpolate(&self, values: &[f64], point: &[f64]) -> Result<f64> {
        let d = self.ndim();
        if point.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: point.len(),
            });
        }
        if d > INTERPOLATION_AXES {
            return Err(Error::SizeLimit {
                rows: d,
                cols: 1,
                limit: INTERPOLATION_AXES,
            });
        }
        let mut base = 0;
        let mut frac = [0.0; INTERPOLATION_AXES];
        for a in 0..d {
            let ax = &self.axes[a];
            let x = point[a];
            let slack = 1e-12 * (1.0 + x.abs());
            if !(x >= ax.lo - slack && x <= ax.hi + slack) {
                return Err(Error::GridExcursion {
                    excursion: self.excursion(point),
                });
            }
            let s = ((x - ax.lo) / ax.dx()).clamp(0.0, (ax.points - 1) as f64);
            let j = (s.floor() as usize).min(ax.points - 2);
            frac[a] = s - j as f64;
            base += j * self.strides[a];
        }
        let mut total = 0.0;
        for corner in 0..(1usize << d) {
            let mut weight = 1.0;
            let mut idx = base;
            for a in 0..d {
                if corner >> (d - 1 - a) & 1 == 1 {
                    weight *= frac[a];
                    idx += self.strides[a];
                } else {
                    weight *= 1.0 - frac[a];
                }
            }
            if weight != 0.0 {
                total += weight * values[idx];
            }
        }
        Ok(total)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueField {
    pub grid: SpatialGrid,
    pub t: f64,
    pub values: Vec<f64>,
    pub kind: Kind,
    pub z_context: EmpiricalMeasure,
}

impl ValueField {
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn interpolate(&self, point: &[f64]) -> Result<f64> {
        self.grid.interpolate(&self.values, point)
    }

    /// Rows `t, x1, …, value`.
    pub fn write_csv_rows<W: Write>(&self, out: &mut W) -> Result<()> {
        let mut node = vec![0.0; self.grid.ndim()];
        for (idx, v) in self.values.iter().enumerate() {
            self.grid.node_into(idx, &mut node);
            write!(out, "{}", self.t)?;
            for x in &node {
                write!(out, ",{x}")?;
            }
            writeln!(out, ",{v}")?;
        }
        Ok(())
    }
}

/// CSV header for [`ValueField::write_csv_rows`].
pub fn csv_header(axes: usize) -> String {
    let mut h = String::from("t");
    for a in 1..=axes {
        h.push_str(&format!(",x{a}"));
    }
    h.push_str(",value");
    h
}

/// Gnuplot `nonuniform matrix` layout of single-axis snapshots: the first
/// row holds the column count and the node coordinates, every later row a
/// time followed by the values.
pub fn write_gnuplot_matrix<W: Write>(snapshots: &[ValueField], out: &mut W) -> Result<()> {
    let Some(first) = snapshots.first() else {
        return Ok(());
    };
    if first.grid.ndim() != 1 {
        return Err(Error::InvalidSpec("matrix output needs a single-axis grid".into()));
    }
    write!(out, "{}", first.grid.len())?;
    for j in 0..first.grid.len() {
        write!(out, " {}", first.grid.axes()[0].coordinate(j))?;
    }
    writeln!(out)?;
    for snap in snapshots {
        write!(out, "{}", snap.t)?;
        for v in &snap.values {
            write!(out, " {v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeConfig {
    /// Time steps; chosen from the CFL bound when `None`.
    pub steps: Option<usize>,
    pub theta: f64,
    pub u_resolution: usize,
    pub v_resolution: usize,
    /// Number of equally spaced snapshot intervals (0 disables snapshots).
    pub snapshots: usize,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self {
            steps: None,
            theta: 0.9,
            u_resolution: 5,
            v_resolution: 5,
            snapshots: 0,
        }
    }
}

fn particle_count(spec: &GameSpec, grid: &SpatialGrid) -> Result<usize> {
    let d = grid.ndim();
    if d > MAX_GRID_AXES {
        return Err(Error::SizeLimit {
            rows: d,
            cols: 1,
            limit: MAX_GRID_AXES,
        });
    }
    if !d.is_multiple_of(spec.dim) {
        return Err(Error::DimensionMismatch {
            expected: spec.dim,
            got: d,
        });
    }
    Ok(d / spec.dim)
}

/// Terminal data `(1/N) Σᵢ Σⱼ w'ⱼ m(xᵢ, zⱼ)` at every node.
pub fn terminal_field(spec: &GameSpec, grid: &SpatialGrid, z: &EmpiricalMeasure, kind: Kind) -> Result<ValueField> {
    let count = particle_count(spec, grid)?;
    if z.dim() != spec.dim {
        return Err(Error::DimensionMismatch {
            expected: spec.dim,
            got: z.dim(),
        });
    }
    let n = spec.dim;
    let weights = vec![1.0 / count as f64; count];
    let values = (0..grid.len())
        .into_par_iter()
        .map_init(
            || vec![0.0; grid.ndim()],
            |node, idx| {
                grid.node_into(idx, node);
                let features = FeatureValues::from_parts(n, node, &weights);
                let mut total = 0.0;
                for (x, w) in node.chunks_exact(n).zip(&weights) {
                    let mut inner = 0.0;
                    for (zj, wj) in z.atoms().zip(z.weights()) {
                        inner += wj * spec.terminal_cost(x, zj, &features)?;
                    }
                    total += w * inner;
                }
                Ok(total)
            },
        )
        .collect::<Result<Vec<f64>>>()?;
    Ok(ValueField {
        grid: grid.clone(),
        t: spec.horizon,
        values,
        kind,
        z_context: z.clone(),
    })
}

/// Per-axis `sup |f|` and `sup |l|` over grid nodes and control pairs at time `t`.
pub fn drift_bounds(
    spec: &GameSpec,
    grid: &SpatialGrid,
    t: f64,
    u_grid: &[Vec<f64>],
    v_grid: &[Vec<f64>],
) -> Result<(Vec<f64>, f64)> {
    let count = particle_count(spec, grid)?;
    let n = spec.dim;
    let d = grid.ndim();
    let weights = vec![1.0 / count as f64; count];
    let per_node = (0..grid.len())
        .into_par_iter()
        .map_init(
            || (vec![0.0; d], vec![0.0; n]),
            |(node, drift), idx| {
                grid.node_into(idx, node);
                let features = FeatureValues::from_parts(n, node, &weights);
                let mut sigma = vec![0.0f64; d + 1];
                for u in u_grid {
                    for v in v_grid {
                        for (i, x) in node.chunks_exact(n).enumerate() {
                            spec.drift_into(t, x, &features, u, v, drift)?;
                            for (k, fk) in drift.iter().enumerate() {
                                sigma[i * n + k] = sigma[i * n + k].max(fk.abs());
                            }
                            let l = spec.running_cost(t, x, &features, u, v)?;
                            sigma[d] = sigma[d].max(l.abs());
                        }
                    }
                }
                Ok(sigma)
            },
        )
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let mut sigma = vec![0.0f64; d + 1];
    for s in per_node {
        for (a, b) in sigma.iter_mut().zip(s) {
            *a = a.max(b);
        }
    }
    let l_max = sigma.pop().unwrap_or(0.0);
    Ok((sigma, l_max))
}

/// `Δt · Σ σ_a / Δx_a`.
pub fn cfl_ratio(grid: &SpatialGrid, sigma: &[f64], dt: f64) -> f64 {
    dt * grid.axes().iter().zip(sigma).map(|(ax, s)| s / ax.dx()).sum::<f64>()
}

/// One explicit step from `field.t` to `field.t − dt`.
pub fn step_backward(
    field: &ValueField,
    spec: &GameSpec,
    u_grid: &[Vec<f64>],
    v_grid: &[Vec<f64>],
    sigma: &[f64],
    dt: f64,
    theta: f64,
) -> Result<ValueField> {
    let grid = &field.grid;
    let count = particle_count(spec, grid)?;
    let ratio = cfl_ratio(grid, sigma, dt);
    if ratio > theta * (1.0 + 1e-12) {
        return Err(Error::Cfl { ratio, theta });
    }
    let n = spec.dim;
    let d = grid.ndim();
    let weights = vec![1.0 / count as f64; count];
    let t = field.t;
    let v = &field.values;
    let (nu, nv) = (u_grid.len(), v_grid.len());
    let values = (0..grid.len())
        .into_par_iter()
        .map_init(
            || (vec![0.0; d], vec![0.0; d], Vec::with_capacity(nu * nv)),
            |(node, p, payoff), idx| {
                grid.node_into(idx, node);
                let centre = v[idx];
                let mut dissipation = 0.0;
                for a in 0..d {
                    let ax = &grid.axes()[a];
                    let s = grid.stride(a);
                    let j = grid.axis_index(idx, a);
                    let dx = ax.dx();
                    let grad = if j == 0 {
                        (v[idx + s] - centre) / dx
                    } else if j + 1 == ax.points {
                        (centre - v[idx - s]) / dx
                    } else {
                        let (fwd, back) = (v[idx + s], v[idx - s]);
                        dissipation += sigma[a] * (fwd - 2.0 * centre + back) / (2.0 * dx);
                        (fwd - back) / (2.0 * dx)
                    };
                    p[a] = count as f64 * grad;
                }
                let features = FeatureValues::from_parts(n, node, &weights);
                payoff_matrix(spec, t, node, &weights, &features, p, u_grid, v_grid, payoff)?;
                let h = extremize(field.kind, payoff, nu, nv).value;
                let out = centre + dt * (h + dissipation);
                if !out.is_finite() {
                    return Err(Error::NonFinite(format!("value {out} at node {node:?}, t = {t}")));
                }
                Ok(out)
            },
        )
        .collect::<Result<Vec<f64>>>()?;
    Ok(ValueField {
        grid: grid.clone(),
        t: t - dt,
        values,
        kind: field.kind,
        z_context: field.z_context.clone(),
    })
}

#[derive(Debug, Clone)]
pub struct HjiSolution {
    pub field: ValueField,
    /// Ordered from `t = T` down to `t = 0`.
    pub snapshots: Vec<ValueField>,
    pub steps: usize,
    pub dt: f64,
    pub sigma: Vec<f64>,
    pub cfl_ratio: f64,
    pub max_abs_terminal: f64,
    pub max_abs_running: f64,
    /// Set when `f` or `l` depends on `t`; uniqueness of the viscosity
    /// solution is then not covered by the comparison theory.
    pub time_dependent: bool,
}

impl HjiSolution {
    /// `max|m| + (T − t)·max|l|` at the snapshot time `t`.
    pub fn max_principle_bound(&self, t: f64, horizon: f64) -> f64 {
        self.max_abs_terminal + (horizon - t) * self.max_abs_running
    }

    /// Largest excess of `max|value|` over the bound across snapshots and
    /// the final field (non-positive when the bound holds).
    pub fn max_principle_excess(&self, horizon: f64) -> f64 {
        self.snapshots
            .iter()
            .chain(std::iter::once(&self.field))
            .map(|f| f.max_abs() - self.max_principle_bound(f.t, horizon))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

struct Plan {
    steps: usize,
    dt: f64,
    sigma: Vec<f64>,
    l_max: f64,
}

const TIME_SAMPLES: usize = 11;

fn plan(
    spec: &GameSpec,
    grid: &SpatialGrid,
    u_grid: &[Vec<f64>],
    v_grid: &[Vec<f64>],
    cfg: &SchemeConfig,
) -> Result<Plan> {
    if !(cfg.theta > 0.0 && cfg.theta <= 1.0) {
        return Err(Error::InvalidSpec(format!(
            "CFL factor {} must lie in (0, 1]",
            cfg.theta
        )));
    }
    let horizon = spec.horizon;
    let samples = if spec.is_time_dependent() { TIME_SAMPLES } else { 1 };
    let mut sigma = vec![0.0f64; grid.ndim()];
    let mut l_max: f64 = 0.0;
    for s in 0..samples {
        let t = if samples == 1 {
            horizon
        } else {
            horizon * s as f64 / (samples - 1) as f64
        };
        let (sg, lm) = drift_bounds(spec, grid, t, u_grid, v_grid)?;
        for (a, b) in sigma.iter_mut().zip(sg) {
            *a = a.max(b);
        }
        l_max = l_max.max(lm);
    }
    let rate = cfl_ratio(grid, &sigma, 1.0);
    let steps = match cfg.steps {
        Some(0) => return Err(Error::InvalidSpec("time steps must be positive".into())),
        Some(s) => s,
        None => {
            let mut s = ((horizon * rate / cfg.theta).ceil() as usize).max(1);
            if cfg.snapshots > 0 {
                s = s.div_ceil(cfg.snapshots) * cfg.snapshots;
            }
            s
        }
    };
    Ok(Plan {
        steps,
        dt: horizon / steps as f64,
        sigma,
        l_max,
    })
}

/// Backward solve from an arbitrary terminal field at `t = T` to `t = 0`.
pub fn solve_from(spec: &GameSpec, terminal: ValueField, cfg: &SchemeConfig) -> Result<HjiSolution> {
    let u_grid = control_grid(&spec.u_box, cfg.u_resolution)?;
    let v_grid = control_grid(&spec.v_box, cfg.v_resolution)?;
    let plan = plan(spec, &terminal.grid, &u_grid, &v_grid, cfg)?;
    let every = if cfg.snapshots > 0 && plan.steps % cfg.snapshots == 0 {
        Some(plan.steps / cfg.snapshots)
    } else if cfg.snapshots > 0 {
        return Err(Error::InvalidSpec(format!(
            "{} steps cannot be split into {} snapshot intervals",
            plan.steps, cfg.snapshots
        )));
    } else {
        None
    };
    let time_dependent = spec.is_time_dependent();
    let max_abs_terminal = terminal.max_abs();
    let mut snapshots = Vec::new();
    if every.is_some() {
        snapshots.push(terminal.clone());
    }
    let mut field = terminal;
    let mut worst_ratio = cfl_ratio(&field.grid, &plan.sigma, plan.dt);
    for step in 0..plan.steps {
        let sigma = if time_dependent {
            drift_bounds(spec, &field.grid, field.t, &u_grid, &v_grid)?.0
        } else {
            plan.sigma.clone()
        };
        worst_ratio = worst_ratio.max(cfl_ratio(&field.grid, &sigma, plan.dt));
        let mut next = step_backward(&field, spec, &u_grid, &v_grid, &sigma, plan.dt, cfg.theta)?;
        let remaining = plan.steps - step - 1;
        next.t = spec.horizon * remaining as f64 / plan.steps as f64;
        field = next;
        if let Some(k) = every {
            if remaining % k == 0 {
                snapshots.push(field.clone());
            }
        }
    }
    Ok(HjiSolution {
        field,
        snapshots,
        steps: plan.steps,
        dt: plan.dt,
        sigma: plan.sigma,
        cfl_ratio: worst_ratio,
        max_abs_terminal,
        max_abs_running: plan.l_max,
        time_dependent,
    })
}

pub fn solve(
    spec: &GameSpec,
    grid: &SpatialGrid,
    z: &EmpiricalMeasure,
    kind: Kind,
    cfg: &SchemeConfig,
) -> Result<HjiSolution> {
    solve_from(spec, terminal_field(spec, grid, z, kind)?, cfg)
}

/// Grid node holding the sorted atoms of a uniform law, or the multilinear
/// interpolant there.
pub fn value_at_measure(field: &ValueField, mu: &EmpiricalMeasure) -> Result<f64> {
    if !mu.has_uniform_weights() {
        return Err(Error::InvalidMeasure("particle lift needs uniform weights".into()));
    }
    field.interpolate(mu.coords())
}

/// Solves with terminal data `m_lo` and `m_hi` and returns the smallest
/// nodewise gap `hi − lo` over all time levels.
pub fn comparison_check(
    spec: &GameSpec,
    grid: &SpatialGrid,
    z: &EmpiricalMeasure,
    kind: Kind,
    cfg: &SchemeConfig,
    m_lo: &crate::expr::Expr,
    m_hi: &crate::expr::Expr,
) -> Result<f64> {
    let mut lo_spec = spec.clone();
    lo_spec.m = m_lo.clone();
    let mut hi_spec = spec.clone();
    hi_spec.m = m_hi.clone();
    let mut lo = terminal_field(&lo_spec, grid, z, kind)?;
    let mut hi = terminal_field(&hi_spec, grid, z, kind)?;
    let gap = |a: &ValueField, b: &ValueField| {
        a.values
            .iter()
            .zip(&b.values)
            .map(|(l, h)| h - l)
            .fold(f64::INFINITY, f64::min)
    };
    let mut worst = gap(&lo, &hi);
    if worst < 0.0 {
        return Err(Error::TerminalOrder { gap: worst });
    }
    let u_grid = control_grid(&spec.u_box, cfg.u_resolution)?;
    let v_grid = control_grid(&spec.v_box, cfg.v_resolution)?;
    let plan = plan(spec, grid, &u_grid, &v_grid, cfg)?;
    for _ in 0..plan.steps {
        let sigma = if spec.is_time_dependent() {
            drift_bounds(spec, grid, lo.t, &u_grid, &v_grid)?.0
        } else {
            plan.sigma.clone()
        };
        lo = step_backward(&lo, &lo_spec, &u_grid, &v_grid, &sigma, plan.dt, cfg.theta)?;
        hi = step_backward(&hi, &hi_spec, &u_grid, &v_grid, &sigma, plan.dt, cfg.theta)?;
        worst = worst.min(gap(&lo, &hi));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{Expr, Scope};
    use crate::game::ControlBox;

    fn section5(m: &str) -> GameSpec {
        let bx = ControlBox::interval(0.0, 1.0).unwrap();
        GameSpec::from_sources(
            1.0,
            bx.clone(),
            bx,
            &["1/(1+x1*x1) + feature(mean_sin) + u1 - 0.1*v1"],
            "sin(x1) + feature(mean) + u1 - v1",
            m,
        )
        .unwrap()
    }

    fn trivial(f: &str, l: &str, m: &str) -> GameSpec {
        let bx = ControlBox::interval(0.0, 1.0).unwrap();
        GameSpec::from_sources(1.0, bx.clone(), bx, &[f], l, m).unwrap()
    }

    fn delta0() -> EmpiricalMeasure {
        EmpiricalMeasure::dirac(&[0.0]).unwrap()
    }

    #[test]
    fn grid_layout_and_interpolation() {
        let g = SpatialGrid::new(vec![Axis::new(0.0, 1.0, 3).unwrap(), Axis::new(-1.0, 1.0, 5).unwrap()]).unwrap();
        assert_eq!(g.len(), 15);
        assert_eq!(g.node(7), vec![0.5, 0.0]);
        assert_eq!(g.index_of(&[1, 2]), 7);
        let values: Vec<f64> = (0..g.len())
            .map(|i| {
                let x = g.node(i);
                2.0 * x[0] - 3.0 * x[1] + 1.0
            })
            .collect();
        let v = g.interpolate(&values, &[0.3, 0.7]).unwrap();
        assert!((v - (0.6 - 2.1 + 1.0)).abs() < 1e-14);
        assert_eq!(g.interpolate(&values, &[1.0, 1.0]).unwrap(), 0.0);
        match g.interpolate(&values, &[1.25, 0.0]) {
            Err(Error::GridExcursion { excursion }) => assert!((excursion - 0.25).abs() < 1e-15),
            other => panic!("{other:?}"),
        }
        assert!(Axis::new(0.0, 1.0, 2).is_err());
        assert!(Axis::new(1.0, 1.0, 3).is_err());
    }

    #[test]
    fn terminal_examples() {
        let grid = SpatialGrid::cube(1, -2.0, 2.0, 401).unwrap();
        let f = terminal_field(&section5("sin(x1) - z1"), &grid, &delta0(), Kind::Lower).unwrap();
        for (i, v) in f.values.iter().enumerate() {
            assert_eq!(*v, grid.node(i)[0].sin());
        }
        let g2 = SpatialGrid::cube(2, -1.0, 1.0, 5).unwrap();
        let f = terminal_field(&trivial("0", "0", "x1"), &g2, &delta0(), Kind::Lower).unwrap();
        for (i, v) in f.values.iter().enumerate() {
            let n = g2.node(i);
            assert!((v - (n[0] + n[1]) / 2.0).abs() < 1e-15);
        }
        let too_big = SpatialGrid::cube(4, -1.0, 1.0, 3).unwrap();
        assert!(matches!(
            terminal_field(&trivial("0", "0", "x1"), &too_big, &delta0(), Kind::Lower),
            Err(Error::SizeLimit { .. })
        ));
    }

    #[test]
    fn trivial_steps() {
        let grid = SpatialGrid::cube(1, -1.0, 1.0, 11).unwrap();
        let ug = control_grid(&ControlBox::interval(0.0, 1.0).unwrap(), 2).unwrap();
        let still = trivial("0", "0", "sin(x1)");
        let f = terminal_field(&still, &grid, &delta0(), Kind::Lower).unwrap();
        let next = step_backward(&f, &still, &ug, &ug, &[0.0], 0.1, 0.9).unwrap();
        assert_eq!(next.values, f.values);
        let unit = trivial("0", "1", "sin(x1)");
        let next = step_backward(&f, &unit, &ug, &ug, &[0.0], 0.1, 0.9).unwrap();
        for (a, b) in next.values.iter().zip(&f.values) {
            assert_eq!(*a, b + 0.1);
        }
        assert!(matches!(
            step_backward(&f, &unit, &ug, &ug, &[1.0], 0.5, 0.9),
            Err(Error::Cfl { .. })
        ));
    }

    #[test]
    fn single_node_update_matches_scalar_oracle() {
        let spec = section5("sin(x1) - z1");
        let grid = SpatialGrid::cube(1, -2.0, 2.0, 401).unwrap();
        let ug = control_grid(&spec.u_box, 5).unwrap();
        let f = terminal_field(&spec, &grid, &delta0(), Kind::Lower).unwrap();
        let (sigma, _) = drift_bounds(&spec, &grid, 1.0, &ug, &ug).unwrap();
        let dx = 0.01;
        let dt = 0.9 * dx / sigma[0];
        let next = step_backward(&f, &spec, &ug, &ug, &sigma, dt, 0.9).unwrap();

        // At x = 0 with a Dirac law: drift 1 + u − 0.1v and cost u − v, so
        // for p > 0 the minimizer takes u = 0, the maximizer v = 0, H = p.
        // The sine is odd, so the second difference vanishes there.
        let p = ((0.01f64).sin() - (-0.01f64).sin()) / (2.0 * dx);
        let mut best = f64::NEG_INFINITY;
        for v in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let mut inner = f64::INFINITY;
            for u in [0.0, 0.25, 0.5, 0.75, 1.0] {
                inner = inner.min(p * (1.0 + u - 0.1 * v) + u - v);
            }
            best = best.max(inner);
        }
        let oracle = dt * (best + sigma[0] * (0.01f64.sin() + (-0.01f64).sin()) / (2.0 * dx));
        assert!(
            (next.values[200] - oracle).abs() < 1e-15,
            "{} vs {oracle}",
            next.values[200]
        );
        assert!((best - p).abs() < 1e-15);
    }

    #[test]
    fn dirac_solution_properties() {
        let spec = section5("sin(x1) - z1");
        let grid = SpatialGrid::cube(1, -2.0, 2.0, 101).unwrap();
        let cfg = SchemeConfig {
            snapshots: 4,
            ..SchemeConfig::default()
        };
        let lo = solve(&spec, &grid, &delta0(), Kind::Lower, &cfg).unwrap();
        let hi = solve(&spec, &grid, &delta0(), Kind::Upper, &cfg).unwrap();
        assert_eq!(lo.snapshots.len(), 5);
        assert_eq!(lo.snapshots[0].t, 1.0);
        assert_eq!(lo.field.t, 0.0);
        assert!(lo.cfl_ratio <= 0.9 + 1e-12);
        assert!(lo.max_principle_excess(1.0) <= 1e-9);
        for (a, b) in lo.field.values.iter().zip(&hi.field.values) {
            assert!(a <= &(b + 1e-9));
            assert!((a - b).abs() <= 1e-9);
        }
        assert!(!lo.time_dependent);
    }

    #[test]
    fn constant_terminal_rides_through() {
        let spec = trivial("0", "0", "x1");
        let grid = SpatialGrid::cube(1, -1.0, 1.0, 21).unwrap();
        let cfg = SchemeConfig {
            steps: Some(7),
            snapshots: 7,
            ..SchemeConfig::default()
        };
        let sol = solve(&spec, &grid, &delta0(), Kind::Upper, &cfg).unwrap();
        for snap in &sol.snapshots {
            assert_eq!(snap.values, sol.snapshots[0].values);
        }
    }

    #[test]
    fn two_particle_symmetry() {
        let spec = section5("sin(x1) - z1");
        let grid = SpatialGrid::cube(2, -2.0, 2.0, 21).unwrap();
        let sol = solve(&spec, &grid, &delta0(), Kind::Lower, &SchemeConfig::default()).unwrap();
        let mut worst: f64 = 0.0;
        for a in 0..21 {
            for b in 0..21 {
                let x = sol.field.values[grid.index_of(&[a, b])];
                let y = sol.field.values[grid.index_of(&[b, a])];
                worst = worst.max((x - y).abs());
            }
        }
        assert!(worst <= 1e-10, "{worst}");
    }

    #[test]
    fn comparison_examples() {
        let spec = section5("sin(x1) - z1");
        let grid = SpatialGrid::cube(1, -2.0, 2.0, 81).unwrap();
        let scope = Scope::terminal(1);
        let base = Expr::parse("sin(x1) - z1", &scope).unwrap();
        let cfg = SchemeConfig::default();
        assert_eq!(
            comparison_check(&spec, &grid, &delta0(), Kind::Lower, &cfg, &base, &base).unwrap(),
            0.0
        );
        let shifted = Expr::parse("sin(x1) - z1 + 1", &scope).unwrap();
        let gap = comparison_check(&spec, &grid, &delta0(), Kind::Lower, &cfg, &base, &shifted).unwrap();
        assert!((gap - 1.0).abs() < 1e-12, "{gap}");
        let bowl = Expr::parse("sin(x1) - z1 + 0.1*x1*x1", &scope).unwrap();
        let gap = comparison_check(&spec, &grid, &delta0(), Kind::Upper, &cfg, &base, &bowl).unwrap();
        assert!(gap >= -1e-12);
        assert!(matches!(
            comparison_check(&spec, &grid, &delta0(), Kind::Upper, &cfg, &bowl, &base),
            Err(Error::TerminalOrder { .. })
        ));
    }

    #[test]
    fn self_convergence_on_dirac_game() {
        let spec = section5("sin(x1) - z1");
        let solve_at = |points| {
            let grid = SpatialGrid::cube(1, -2.0, 2.0, points).unwrap();
            solve(&spec, &grid, &delta0(), Kind::Lower, &SchemeConfig::default())
                .unwrap()
                .field
                .values
        };
        let (a, b, c) = (solve_at(41), solve_at(81), solve_at(161));
        let diff = |coarse: &[f64], fine: &[f64]| {
            coarse
                .iter()
                .enumerate()
                .map(|(i, v)| (v - fine[2 * i]).abs())
                .fold(0.0, f64::max)
        };
        assert!(diff(&b, &c) < diff(&a, &b));
    }
}
