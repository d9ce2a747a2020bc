//! Game instances: dynamics, costs, control boxes, time meshes, control
//! paths and step-causal strategies.

use crate::error::{Error, Result};
use crate::expr::{Env, Expr, Scope};
use crate::measure::{EmpiricalMeasure, FeatureValues};

/// Axis-aligned compact control set.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlBox {
    pub bounds: Vec<(f64, f64)>,
}

impl ControlBox {
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::InvalidSpec("control box needs at least one axis".into()));
        }
        for &(lo, hi) in &bounds {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::InvalidSpec(format!(
                    "control interval [{lo}, {hi}] is not bounded and nonempty"
                )));
            }
        }
        Ok(Self { bounds })
    }

    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![(lo, hi)])
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.dim()
            && point
                .iter()
                .zip(&self.bounds)
                .all(|(p, (lo, hi))| *p >= *lo && *p <= *hi)
    }

    pub fn lower_corner(&self) -> Vec<f64> {
        self.bounds.iter().map(|b| b.0).collect()
    }

    /// Tensor grid with `resolution` points per axis, endpoints included,
    /// in lexicographic order (last axis fastest). A degenerate axis takes a
    /// single point whatever the resolution.
    pub fn grid(&self, resolution: usize) -> Result<Vec<Vec<f64>>> {
        let axes: Vec<Vec<f64>> = self
            .bounds
            .iter()
            .map(|&(lo, hi)| {
                if lo == hi {
                    Ok(vec![lo])
                } else if resolution < 2 {
                    Err(Error::InvalidSpec(format!(
                        "resolution {resolution} cannot include both ends of [{lo}, {hi}]"
                    )))
                } else {
                    let r = resolution - 1;
                    Ok((0..resolution)
                        .map(|k| {
                            if k == r {
                                hi
                            } else {
                                lo + (hi - lo) * k as f64 / r as f64
                            }
                        })
                        .collect())
                }
            })
            .collect::<Result<_>>()?;
        let mut points = vec![Vec::new()];
        for axis in &axes {
            let mut next = Vec::with_capacity(points.len() * axis.len());
            for p in &points {
                for &a in axis {
                    let mut q = p.clone();
                    q.push(a);
                    next.push(q);
                }
            }
            points = next;
        }
        Ok(points)
    }
}

/// Convenience wrapper around [`ControlBox::grid`].
pub fn control_grid(bx: &ControlBox, resolution: usize) -> Result<Vec<Vec<f64>>> {
    bx.grid(resolution)
}

/// A two-player zero-sum game with McKean-Vlasov dynamics.
#[derive(Debug, Clone)]
pub struct GameSpec {
    pub horizon: f64,
    pub dim: usize,
    pub u_box: ControlBox,
    pub v_box: ControlBox,
    /// One expression per state coordinate.
    pub f: Vec<Expr>,
    pub l: Expr,
    pub m: Expr,
    pub lipschitz: Option<f64>,
}

impl GameSpec {
    /// Parses the expressions against the declared dimensions.
    pub fn from_sources(
        horizon: f64,
        u_box: ControlBox,
        v_box: ControlBox,
        f: &[&str],
        l: &str,
        m: &str,
    ) -> Result<Self> {
        let dim = f.len();
        if dim == 0 {
            return Err(Error::InvalidSpec("dynamics need at least one component".into()));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidSpec(format!("horizon {horizon} must be positive")));
        }
        let running = Scope::running(dim, u_box.dim(), v_box.dim());
        let f = f.iter().map(|s| Expr::parse(s, &running)).collect::<Result<Vec<_>>>()?;
        let l = Expr::parse(l, &running)?;
        let m = Expr::parse(m, &Scope::terminal(dim))?;
        Ok(Self {
            horizon,
            dim,
            u_box,
            v_box,
            f,
            l,
            m,
            lipschitz: None,
        })
    }

    pub fn with_lipschitz(mut self, k: f64) -> Self {
        self.lipschitz = Some(k);
        self
    }

    pub fn is_time_dependent(&self) -> bool {
        self.f.iter().any(Expr::uses_time) || self.l.uses_time()
    }

    pub fn drift_is_zero(&self) -> bool {
        self.f.iter().all(Expr::is_zero)
    }

    /// Drift at one point with precomputed features of the current law.
    pub fn drift_into(
        &self,
        t: f64,
        x: &[f64],
        features: &FeatureValues,
        u: &[f64],
        v: &[f64],
        out: &mut [f64],
    ) -> Result<()> {
        let env = Env {
            t,
            x,
            u,
            v,
            z: &[],
            features,
        };
        for (o, fk) in out.iter_mut().zip(&self.f) {
            *o = fk.eval(&env)?;
        }
        Ok(())
    }

    pub fn running_cost(&self, t: f64, x: &[f64], features: &FeatureValues, u: &[f64], v: &[f64]) -> Result<f64> {
        self.l.eval(&Env {
            t,
            x,
            u,
            v,
            z: &[],
            features,
        })
    }

    pub fn terminal_cost(&self, x: &[f64], z: &[f64], features: &FeatureValues) -> Result<f64> {
        self.m.eval(&Env {
            t: self.horizon,
            x,
            u: &[],
            v: &[],
            z,
            features,
        })
    }

    fn check_controls(&self, u: &[f64], v: &[f64]) -> Result<()> {
        if !self.u_box.contains(u) {
            return Err(Error::InvalidSpec(format!("control u = {u:?} outside U")));
        }
        if !self.v_box.contains(v) {
            return Err(Error::InvalidSpec(format!("control v = {v:?} outside V")));
        }
        Ok(())
    }
}

/// `f(t, x, νx, u, v)`.
pub fn eval_f(spec: &GameSpec, t: f64, x: &[f64], nu_x: &EmpiricalMeasure, u: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    spec.check_controls(u, v)?;
    if x.len() != spec.dim || nu_x.dim() != spec.dim {
        return Err(Error::DimensionMismatch {
            expected: spec.dim,
            got: if x.len() != spec.dim { x.len() } else { nu_x.dim() },
        });
    }
    let features = FeatureValues::of(nu_x);
    let mut out = vec![0.0; spec.dim];
    spec.drift_into(t, x, &features, u, v, &mut out)?;
    Ok(out)
}

/// `l(t, x, νx, u, v)`.
pub fn eval_l(spec: &GameSpec, t: f64, x: &[f64], nu_x: &EmpiricalMeasure, u: &[f64], v: &[f64]) -> Result<f64> {
    spec.check_controls(u, v)?;
    spec.running_cost(t, x, &FeatureValues::of(nu_x), u, v)
}

/// Initial law of the state and law of the (independent) target.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetedEnsemble {
    pub x: EmpiricalMeasure,
    pub z: EmpiricalMeasure,
}

impl TargetedEnsemble {
    pub fn new(x: EmpiricalMeasure, z: EmpiricalMeasure) -> Result<Self> {
        if x.dim() != z.dim() {
            return Err(Error::DimensionMismatch {
                expected: x.dim(),
                got: z.dim(),
            });
        }
        Ok(Self { x, z })
    }
}

/// `Σᵢ Σⱼ wᵢ w'ⱼ m(xᵢ(T), zⱼ)`: the terminal cost averaged over the product of
/// the terminal state law (atom `i` carries the weight of initial atom `i`)
/// and the target law. Measure features in `m` are those of the terminal law.
pub fn terminal_expectation(spec: &GameSpec, terminal: &EmpiricalMeasure, z: &EmpiricalMeasure) -> Result<f64> {
    let features = FeatureValues::of(terminal);
    let mut total = 0.0;
    for (xi, wi) in terminal.atoms().zip(terminal.weights()) {
        let mut inner = 0.0;
        for (zj, wj) in z.atoms().zip(z.weights()) {
            inner += wj * spec.terminal_cost(xi, zj, &features)?;
        }
        total += wi * inner;
    }
    Ok(total)
}

pub fn eval_terminal_cost(spec: &GameSpec, ensemble: &TargetedEnsemble, terminal_atoms: &[Vec<f64>]) -> Result<f64> {
    if terminal_atoms.len() != ensemble.x.len() {
        return Err(Error::DimensionMismatch {
            expected: ensemble.x.len(),
            got: terminal_atoms.len(),
        });
    }
    let terminal = EmpiricalMeasure::new(terminal_atoms, ensemble.x.weights().to_vec())?;
    terminal_expectation(spec, &terminal, &ensemble.z)
}

/// Uniform time mesh `t0 < t1` with `steps` intervals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeMesh {
    pub t0: f64,
    pub t1: f64,
    pub steps: usize,
}

impl TimeMesh {
    pub fn new(t0: f64, t1: f64, steps: usize) -> Result<Self> {
        if !(t0 < t1) || steps == 0 {
            return Err(Error::InvalidSpec(format!(
                "time mesh needs t0 < t1 and steps >= 1 (got {t0}, {t1}, {steps})"
            )));
        }
        Ok(Self { t0, t1, steps })
    }

    pub fn tau(&self) -> f64 {
        (self.t1 - self.t0) / self.steps as f64
    }

    pub fn node(&self, k: usize) -> f64 {
        if k == self.steps {
            self.t1
        } else {
            self.t0 + self.tau() * k as f64
        }
    }

    /// Index `k` with `node(k) == t` up to rounding, if any.
    pub fn node_index(&self, t: f64) -> Option<usize> {
        let k = ((t - self.t0) / self.tau()).round();
        if k < 0.0 || k > self.steps as f64 {
            return None;
        }
        let k = k as usize;
        ((self.node(k) - t).abs() <= 1e-12 * (1.0 + t.abs())).then_some(k)
    }

    /// Step containing `t` (the left-closed interval; `t1` maps to the last
    /// step).
    pub fn step_of(&self, t: f64) -> usize {
        if let Some(k) = self.node_index(t) {
            return k.min(self.steps - 1);
        }
        (((t - self.t0) / self.tau()).floor().max(0.0) as usize).min(self.steps - 1)
    }
}

/// Piecewise-constant control on a mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlPath {
    pub mesh: TimeMesh,
    pub values: Vec<Vec<f64>>,
}

impl ControlPath {
    pub fn new(mesh: TimeMesh, values: Vec<Vec<f64>>, bx: &ControlBox) -> Result<Self> {
        if values.len() != mesh.steps {
            return Err(Error::InvalidSpec(format!(
                "control path has {} values for {} steps",
                values.len(),
                mesh.steps
            )));
        }
        if let Some(v) = values.iter().find(|v| !bx.contains(v)) {
            return Err(Error::InvalidSpec(format!("control value {v:?} outside its box")));
        }
        Ok(Self { mesh, values })
    }

    pub fn constant(mesh: TimeMesh, value: Vec<f64>, bx: &ControlBox) -> Result<Self> {
        Self::new(mesh, vec![value; mesh.steps], bx)
    }

    pub fn covers(&self, from: f64, to: f64) -> bool {
        let eps = 1e-12 * (1.0 + from.abs().max(to.abs()));
        from >= self.mesh.t0 - eps && to <= self.mesh.t1 + eps
    }

    pub fn at_step(&self, k: usize) -> &[f64] {
        &self.values[k]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrategySide {
    /// Player 1 (minimizer) reacting to `v`.
    Alpha,
    /// Player 2 (maximizer) reacting to `u`.
    Beta,
}

/// Step-causal strategy: `table[s][j]` is the own control index played at
/// step `s` when the opponent plays grid index `j` at that step.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteStrategy {
    pub mesh: TimeMesh,
    pub side: StrategySide,
    pub table: Vec<Vec<usize>>,
}

impl DiscreteStrategy {
    pub fn respond(&self, step: usize, opponent: usize) -> usize {
        self.table[step][opponent]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn section5() -> GameSpec {
        GameSpec::from_sources(
            1.0,
            ControlBox::interval(0.0, 1.0).unwrap(),
            ControlBox::interval(0.0, 1.0).unwrap(),
            &["1/(1+x1*x1) + feature(mean_sin) + u1 - 0.1*v1"],
            "sin(x1) + feature(mean) + u1 - v1",
            "sin(x1) - z1",
        )
        .unwrap()
    }

    #[test]
    fn control_grids() {
        let unit = ControlBox::interval(0.0, 1.0).unwrap();
        assert_eq!(control_grid(&unit, 2).unwrap(), vec![vec![0.0], vec![1.0]]);
        assert_eq!(control_grid(&unit, 3).unwrap(), vec![vec![0.0], vec![0.5], vec![1.0]]);
        let square = ControlBox::new(vec![(0.0, 1.0), (0.0, 1.0)]).unwrap();
        assert_eq!(
            control_grid(&square, 2).unwrap(),
            vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]]
        );
        let point = ControlBox::interval(0.3, 0.3).unwrap();
        assert_eq!(control_grid(&point, 1).unwrap(), vec![vec![0.3]]);
        assert!(control_grid(&unit, 1).is_err());
        assert!(ControlBox::interval(1.0, 0.0).is_err());
        assert!(ControlBox::interval(0.0, f64::INFINITY).is_err());
    }

    #[test]
    fn grid_contains_corners() {
        let bx = ControlBox::new(vec![(-1.0, 2.0), (0.5, 0.75), (3.0, 3.0)]).unwrap();
        for r in [2, 3, 7] {
            let g = bx.grid(r).unwrap();
            for corner in [[-1.0, 0.5, 3.0], [-1.0, 0.75, 3.0], [2.0, 0.5, 3.0], [2.0, 0.75, 3.0]] {
                assert!(g.iter().any(|p| p.as_slice() == corner));
            }
        }
    }

    #[test]
    fn drift_examples() {
        let spec = section5();
        let sym = EmpiricalMeasure::uniform_1d(&[-1.0, 1.0]).unwrap();
        assert_eq!(eval_f(&spec, 0.0, &[0.0], &sym, &[0.0], &[0.0]).unwrap(), vec![1.0]);
        assert!(eval_f(&spec, 0.0, &[0.0], &sym, &[2.0], &[0.0]).is_err());

        let zero = GameSpec::from_sources(
            1.0,
            ControlBox::interval(0.0, 1.0).unwrap(),
            ControlBox::interval(0.0, 1.0).unwrap(),
            &["0"],
            "0",
            "0",
        )
        .unwrap();
        assert_eq!(eval_f(&zero, 0.3, &[5.0], &sym, &[1.0], &[0.5]).unwrap(), vec![0.0]);

        let mean = GameSpec::from_sources(
            1.0,
            ControlBox::interval(0.0, 1.0).unwrap(),
            ControlBox::interval(0.0, 1.0).unwrap(),
            &["feature(mean)"],
            "0",
            "0",
        )
        .unwrap();
        let m13 = EmpiricalMeasure::uniform_1d(&[1.0, 3.0]).unwrap();
        assert_eq!(eval_f(&mean, 0.0, &[7.0], &m13, &[0.0], &[0.0]).unwrap(), vec![2.0]);
    }

    #[test]
    fn terminal_cost_examples() {
        let spec = section5();
        let x = EmpiricalMeasure::uniform_1d(&[-0.4, 0.4]).unwrap();
        let z = EmpiricalMeasure::uniform_1d(&[-1.0, 1.0]).unwrap();
        let ens = TargetedEnsemble::new(x, z.clone()).unwrap();
        let v = eval_terminal_cost(&spec, &ens, &[vec![-0.9], vec![0.9]]).unwrap();
        assert!(v.abs() < 1e-15);

        let linear = GameSpec::from_sources(
            1.0,
            ControlBox::interval(0.0, 1.0).unwrap(),
            ControlBox::interval(0.0, 1.0).unwrap(),
            &["0"],
            "0",
            "x1",
        )
        .unwrap();
        let v = eval_terminal_cost(&linear, &ens, &[vec![1.0], vec![3.0]]).unwrap();
        assert_eq!(v, 2.0);

        let single = TargetedEnsemble::new(
            EmpiricalMeasure::dirac(&[0.0]).unwrap(),
            EmpiricalMeasure::dirac(&[0.0]).unwrap(),
        )
        .unwrap();
        let v = eval_terminal_cost(&spec, &single, &[vec![std::f64::consts::FRAC_PI_2]]).unwrap();
        assert_eq!(v, 1.0);
        assert!(eval_terminal_cost(&spec, &single, &[vec![0.0], vec![1.0]]).is_err());
    }

    #[test]
    fn evaluation_is_repeatable() {
        let spec = section5();
        let mu = EmpiricalMeasure::uniform_1d(&[0.1, 0.9, -0.3]).unwrap();
        let a = eval_f(&spec, 0.2, &[0.5], &mu, &[0.3], &[0.6]).unwrap();
        let b = eval_f(&spec, 0.2, &[0.5], &mu, &[0.3], &[0.6]).unwrap();
        assert_eq!(a[0].to_bits(), b[0].to_bits());
    }

    #[test]
    fn mesh_indexing() {
        let mesh = TimeMesh::new(0.0, 1.0, 10).unwrap();
        assert_eq!(mesh.node_index(0.3), Some(3));
        assert_eq!(mesh.node_index(0.35), None);
        assert_eq!(mesh.step_of(0.35), 3);
        assert_eq!(mesh.step_of(1.0), 9);
        assert_eq!(mesh.step_of(0.3), 3);
        assert!(TimeMesh::new(1.0, 1.0, 3).is_err());
        assert!(TimeMesh::new(0.0, 1.0, 0).is_err());
    }
}
