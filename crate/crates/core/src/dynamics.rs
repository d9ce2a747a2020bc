//! Particle approximation of the McKean-Vlasov flow.
//!
//! All atoms are advanced together; at every integrator stage the law that
//! enters the drift is the empirical measure of the ensemble at that stage.

use crate::error::{Error, Result};
use crate::game::{ControlPath, GameSpec};
use crate::measure::{wasserstein, EmpiricalMeasure, FeatureValues};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Rk4,
    Euler,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IntegratorConfig {
    pub scheme: Scheme,
    /// Substeps per control step (also per partial step).
    pub substeps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::Rk4,
            substeps: 8,
        }
    }
}

impl IntegratorConfig {
    pub fn rk4(substeps: usize) -> Self {
        Self {
            scheme: Scheme::Rk4,
            substeps,
        }
    }

    pub fn euler(substeps: usize) -> Self {
        Self {
            scheme: Scheme::Euler,
            substeps,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleState {
    pub time: f64,
    pub measure: EmpiricalMeasure,
}

/// Drift of every atom at the ensemble state `coords`; returns the
/// measure-averaged running cost when `with_cost` is set.
fn ensemble_rates(
    spec: &GameSpec,
    t: f64,
    coords: &[f64],
    weights: &[f64],
    u: &[f64],
    v: &[f64],
    with_cost: bool,
    drift: &mut [f64],
) -> Result<f64> {
    let n = spec.dim;
    let features = FeatureValues::from_parts(n, coords, weights);
    let mut cost = 0.0;
    for ((x, out), w) in coords.chunks_exact(n).zip(drift.chunks_exact_mut(n)).zip(weights) {
        spec.drift_into(t, x, &features, u, v, out)?;
        if with_cost {
            cost += w * spec.running_cost(t, x, &features, u, v)?;
        }
    }
    Ok(cost)
}

/// Integrates the ensemble over `[t0, t1]` with the controls held at `u`,
/// `v`, using `cfg.substeps` steps. Returns the integrated running cost (zero
/// when `with_cost` is false). The cost uses the same stages as the state,
/// so for RK4 it is Simpson's rule on each substep.
#[allow(clippy::too_many_arguments)]
pub fn integrate_segment(
    spec: &GameSpec,
    coords: &mut [f64],
    weights: &[f64],
    t0: f64,
    t1: f64,
    u: &[f64],
    v: &[f64],
    cfg: &IntegratorConfig,
    with_cost: bool,
) -> Result<f64> {
    let k = cfg.substeps.max(1);
    let h = (t1 - t0) / k as f64;
    let len = coords.len();
    let mut cost = 0.0;
    if h == 0.0 {
        return Ok(cost);
    }
    let mut k1 = vec![0.0; len];
    match cfg.scheme {
        Scheme::Euler => {
            for s in 0..k {
                let t = t0 + (t1 - t0) * s as f64 / k as f64;
                let c = ensemble_rates(spec, t, coords, weights, u, v, with_cost, &mut k1)?;
                for (x, d) in coords.iter_mut().zip(&k1) {
                    *x += h * d;
                }
                cost += h * c;
            }
        }
        Scheme::Rk4 => {
            let mut k2 = vec![0.0; len];
            let mut k3 = vec![0.0; len];
            let mut k4 = vec![0.0; len];
            let mut stage = vec![0.0; len];
            for s in 0..k {
                let t = t0 + (t1 - t0) * s as f64 / k as f64;
                let c1 = ensemble_rates(spec, t, coords, weights, u, v, with_cost, &mut k1)?;
                for ((y, x), d) in stage.iter_mut().zip(coords.iter()).zip(&k1) {
                    *y = x + 0.5 * h * d;
                }
                let c2 = ensemble_rates(spec, t + 0.5 * h, &stage, weights, u, v, with_cost, &mut k2)?;
                for ((y, x), d) in stage.iter_mut().zip(coords.iter()).zip(&k2) {
                    *y = x + 0.5 * h * d;
                }
                let c3 = ensemble_rates(spec, t + 0.5 * h, &stage, weights, u, v, with_cost, &mut k3)?;
                for ((y, x), d) in stage.iter_mut().zip(coords.iter()).zip(&k3) {
                    *y = x + h * d;
                }
                let c4 = ensemble_rates(spec, t + h, &stage, weights, u, v, with_cost, &mut k4)?;
                for (i, x) in coords.iter_mut().enumerate() {
                    *x += h * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) / 6.0;
                }
                cost += h * (c1 + 2.0 * c2 + 2.0 * c3 + c4) / 6.0;
            }
        }
    }
    if let Some(x) = coords.iter().find(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!("atom coordinate {x} after integration")));
    }
    Ok(cost)
}

/// Control-switch times of both paths strictly inside `(from, to)`,
/// bracketed by `from` and `to`.
fn breakpoints(u_path: &ControlPath, v_path: &ControlPath, from: f64, to: f64) -> Vec<f64> {
    let mut pts = vec![from];
    let mut inner: Vec<f64> = Vec::new();
    for mesh in [&u_path.mesh, &v_path.mesh] {
        for k in 1..mesh.steps {
            let t = mesh.node(k);
            if t > from && t < to {
                inner.push(t);
            }
        }
    }
    inner.sort_by(f64::total_cmp);
    inner.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + a.abs()));
    for t in inner {
        if (t - from).abs() > 1e-12 * (1.0 + t.abs()) && (to - t).abs() > 1e-12 * (1.0 + t.abs()) {
            pts.push(t);
        }
    }
    pts.push(to);
    pts
}

fn run(
    spec: &GameSpec,
    state: &ParticleState,
    u_path: &ControlPath,
    v_path: &ControlPath,
    until: f64,
    cfg: &IntegratorConfig,
    with_cost: bool,
) -> Result<(ParticleState, f64)> {
    if state.measure.dim() != spec.dim {
        return Err(Error::DimensionMismatch {
            expected: spec.dim,
            got: state.measure.dim(),
        });
    }
    if until < state.time || !u_path.covers(state.time, until) || !v_path.covers(state.time, until) {
        return Err(Error::MeshCoverage {
            from: state.time,
            to: until,
        });
    }
    let mut coords = state.measure.coords().to_vec();
    let weights = state.measure.weights();
    let mut cost = 0.0;
    let pts = breakpoints(u_path, v_path, state.time, until);
    for w in pts.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        let u = u_path.at_step(u_path.mesh.step_of(mid));
        let v = v_path.at_step(v_path.mesh.step_of(mid));
        cost += integrate_segment(spec, &mut coords, weights, w[0], w[1], u, v, cfg, with_cost)?;
    }
    let measure = state.measure.with_coords(coords)?;
    Ok((ParticleState { time: until, measure }, cost))
}

/// Advances the ensemble from `state.time` to `until` under the given
/// control paths.
pub fn propagate(
    spec: &GameSpec,
    state: &ParticleState,
    u_path: &ControlPath,
    v_path: &ControlPath,
    until: f64,
    cfg: &IntegratorConfig,
) -> Result<ParticleState> {
    run(spec, state, u_path, v_path, until, cfg, false).map(|(s, _)| s)
}

/// Like [`propagate`], also returning `∫ Σᵢ wᵢ l(s, xᵢ(s), P_s, u, v) ds`.
pub fn running_cost_accumulate(
    spec: &GameSpec,
    state: &ParticleState,
    u_path: &ControlPath,
    v_path: &ControlPath,
    until: f64,
    cfg: &IntegratorConfig,
) -> Result<(ParticleState, f64)> {
    run(spec, state, u_path, v_path, until, cfg, true)
}

fn max_atom_deviation(a: &EmpiricalMeasure, b: &EmpiricalMeasure) -> f64 {
    a.atoms()
        .zip(b.atoms())
        .map(|(p, q)| p.iter().zip(q).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

/// `max_i |x_i(t→s) − x_i(r→s ∘ t→r)|` for `state.time < r < s`.
pub fn check_flow_property(
    spec: &GameSpec,
    state: &ParticleState,
    u_path: &ControlPath,
    v_path: &ControlPath,
    r: f64,
    s: f64,
    cfg: &IntegratorConfig,
) -> Result<f64> {
    if !(state.time < r && r < s) {
        return Err(Error::InvalidSpec(format!(
            "flow check needs t < r < s (got {}, {r}, {s})",
            state.time
        )));
    }
    let direct = propagate(spec, state, u_path, v_path, s, cfg)?;
    let mid = propagate(spec, state, u_path, v_path, r, cfg)?;
    let composed = propagate(spec, &mid, u_path, v_path, s, cfg)?;
    Ok(max_atom_deviation(&direct.measure, &composed.measure))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateSample {
    pub t: f64,
    pub s: f64,
    /// `W₂(P_s, νx) / |s − t|`, worst of the two initial laws.
    pub time_ratio: f64,
    /// `W₂(P_s(ν₁), P_s(ν₂)) / W₂(ν₁, ν₂)`; `None` when `ν₁ = ν₂`.
    pub stability_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatesReport {
    pub samples: Vec<EstimateSample>,
    pub lipschitz: f64,
    pub horizon: f64,
    pub max_second_moment: f64,
    /// `e^{KT} (K (1 + max second moment) + 1)`.
    pub bound: f64,
    pub max_time_ratio: f64,
    pub max_stability_ratio: Option<f64>,
}

impl EstimatesReport {
    pub fn time_bound_holds(&self) -> bool {
        self.max_time_ratio <= self.bound
    }

    pub fn stability_bound_holds(&self) -> bool {
        self.max_stability_ratio.is_none_or(|r| r <= self.bound)
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for s in &self.samples {
            if s.time_ratio > self.bound {
                out.push(format!(
                    "bound violated: W2(P_s, nu)/|s-t| = {:.6e} > {:.6e} at t={}, s={}",
                    s.time_ratio, self.bound, s.t, s.s
                ));
            }
            if let Some(r) = s.stability_ratio.filter(|r| *r > self.bound) {
                out.push(format!(
                    "bound violated: W2 stability ratio {:.6e} > {:.6e} at t={}, s={}",
                    r, self.bound, s.t, s.s
                ));
            }
        }
        out
    }
}

/// Empirical constants for the short-time and stability estimates of the
/// flow, sampled over all pairs of mesh nodes `t < s` of `u_path`.
pub fn check_estimates(
    spec: &GameSpec,
    nu1: &EmpiricalMeasure,
    nu2: &EmpiricalMeasure,
    u_path: &ControlPath,
    v_path: &ControlPath,
    cfg: &IntegratorConfig,
) -> Result<EstimatesReport> {
    let k = spec.lipschitz.ok_or(Error::MissingLipschitz)?;
    let mesh = u_path.mesh;
    let w_initial = wasserstein(2, nu1, nu2)?;
    let mut max_m2 = nu1.second_moment().max(nu2.second_moment());
    let mut samples = Vec::new();
    for a in 0..mesh.steps {
        let t = mesh.node(a);
        let mut s1 = ParticleState {
            time: t,
            measure: nu1.clone(),
        };
        let mut s2 = ParticleState {
            time: t,
            measure: nu2.clone(),
        };
        for b in a + 1..=mesh.steps {
            let s = mesh.node(b);
            s1 = propagate(spec, &s1, u_path, v_path, s, cfg)?;
            s2 = propagate(spec, &s2, u_path, v_path, s, cfg)?;
            max_m2 = max_m2.max(s1.measure.second_moment()).max(s2.measure.second_moment());
            let dt = s - t;
            let time_ratio = (wasserstein(2, &s1.measure, nu1)? / dt).max(wasserstein(2, &s2.measure, nu2)? / dt);
            let stability_ratio = if w_initial > 0.0 {
                Some(wasserstein(2, &s1.measure, &s2.measure)? / w_initial)
            } else {
                None
            };
            samples.push(EstimateSample {
                t,
                s,
                time_ratio,
                stability_ratio,
            });
        }
    }
    let horizon = spec.horizon;
    let bound = (k * horizon).exp() * (k * (1.0 + max_m2) + 1.0);
    let max_time_ratio = samples.iter().map(|s| s.time_ratio).fold(0.0, f64::max);
    let max_stability_ratio = samples.iter().filter_map(|s| s.stability_ratio).reduce(f64::max);
    Ok(EstimatesReport {
        samples,
        lipschitz: k,
        horizon,
        max_second_moment: max_m2,
        bound,
        max_time_ratio,
        max_stability_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{ControlBox, TimeMesh};

    fn spec(f: &str, l: &str) -> GameSpec {
        GameSpec::from_sources(
            1.0,
            ControlBox::interval(0.0, 1.0).unwrap(),
            ControlBox::interval(0.0, 1.0).unwrap(),
            &[f],
            l,
            "0",
        )
        .unwrap()
    }

    fn paths(steps: usize) -> (ControlPath, ControlPath) {
        let mesh = TimeMesh::new(0.0, 1.0, steps).unwrap();
        let bx = ControlBox::interval(0.0, 1.0).unwrap();
        (
            ControlPath::constant(mesh, vec![0.0], &bx).unwrap(),
            ControlPath::constant(mesh, vec![0.0], &bx).unwrap(),
        )
    }

    fn state(points: &[f64]) -> ParticleState {
        ParticleState {
            time: 0.0,
            measure: EmpiricalMeasure::uniform_1d(points).unwrap(),
        }
    }

    #[test]
    fn zero_drift_is_identity() {
        let (u, v) = paths(4);
        let s0 = state(&[-1.0, 0.5, 2.0]);
        let s1 = propagate(&spec("0", "0"), &s0, &u, &v, 1.0, &IntegratorConfig::default()).unwrap();
        assert_eq!(s1.measure, s0.measure);
        assert_eq!(s1.time, 1.0);
    }

    #[test]
    fn constant_drift_shifts_rigidly() {
        let (u, v) = paths(4);
        let s0 = state(&[-1.0, 0.5, 2.0]);
        for cfg in [IntegratorConfig::rk4(8), IntegratorConfig::euler(5)] {
            let s1 = propagate(&spec("0.75", "0"), &s0, &u, &v, 0.6, &cfg).unwrap();
            for (a, b) in s1.measure.coords().iter().zip(s0.measure.coords()) {
                assert!((a - b - 0.45).abs() < 1e-14);
            }
            assert_eq!(s1.measure.weights(), s0.measure.weights());
        }
    }

    #[test]
    fn mean_field_drift_matches_closed_form() {
        // m' = m, so every atom moves by m0 (e - 1) = 2 (e - 1).
        let (u, v) = paths(4);
        let s0 = state(&[1.0, 3.0]);
        let shift = 2.0 * (std::f64::consts::E - 1.0);
        let f = spec("feature(mean)", "0");
        let rk = propagate(&f, &s0, &u, &v, 1.0, &IntegratorConfig::rk4(8)).unwrap();
        for (a, b) in rk.measure.coords().iter().zip(s0.measure.coords()) {
            assert!((a - b - shift).abs() < 1e-6);
        }
        let eu = propagate(&f, &s0, &u, &v, 1.0, &IntegratorConfig::euler(25_000)).unwrap();
        for (a, b) in eu.measure.coords().iter().zip(rk.measure.coords()) {
            assert!((a - b).abs() < 1e-3);
        }
    }

    #[test]
    fn running_cost_examples() {
        let (u, v) = paths(4);
        let s0 = state(&[1.0, 3.0]);
        let cfg = IntegratorConfig::default();
        let (_, c) = running_cost_accumulate(&spec("0", "0"), &s0, &u, &v, 1.0, &cfg).unwrap();
        assert_eq!(c, 0.0);
        let (_, c) = running_cost_accumulate(&spec("0", "1"), &s0, &u, &v, 0.5, &cfg).unwrap();
        assert_eq!(c, 0.5);
        let (_, c) = running_cost_accumulate(&spec("0", "x1"), &s0, &u, &v, 1.0, &cfg).unwrap();
        assert!((c - 2.0).abs() < 1e-14);
        // Simpson integrates t² on [0, 1] exactly.
        let (_, c) = running_cost_accumulate(&spec("0", "t*t"), &s0, &u, &v, 1.0, &IntegratorConfig::rk4(1)).unwrap();
        assert!((c - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn coverage_errors() {
        let mesh = TimeMesh::new(0.0, 0.5, 2).unwrap();
        let bx = ControlBox::interval(0.0, 1.0).unwrap();
        let u = ControlPath::constant(mesh, vec![0.0], &bx).unwrap();
        let s0 = state(&[0.0]);
        let r = propagate(&spec("1", "0"), &s0, &u, &u, 0.8, &IntegratorConfig::default());
        assert!(matches!(r, Err(Error::MeshCoverage { .. })));
        let back = ParticleState { time: 0.4, ..s0 };
        assert!(propagate(&spec("1", "0"), &back, &u, &u, 0.2, &IntegratorConfig::default()).is_err());
    }

    #[test]
    fn controls_switch_on_the_mesh() {
        let mesh = TimeMesh::new(0.0, 1.0, 2).unwrap();
        let bx = ControlBox::interval(0.0, 1.0).unwrap();
        let u = ControlPath::new(mesh, vec![vec![0.0], vec![1.0]], &bx).unwrap();
        let v = ControlPath::constant(mesh, vec![0.0], &bx).unwrap();
        let s = propagate(&spec("u1", "0"), &state(&[0.0]), &u, &v, 1.0, &IntegratorConfig::rk4(3)).unwrap();
        assert!((s.measure.coords()[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn flow_property_trivial_cases() {
        let (u, v) = paths(4);
        let s0 = state(&[0.2, 1.0]);
        let cfg = IntegratorConfig::default();
        assert_eq!(
            check_flow_property(&spec("0", "0"), &s0, &u, &v, 0.3, 0.9, &cfg).unwrap(),
            0.0
        );
        let d = check_flow_property(&spec("2", "0"), &s0, &u, &v, 0.3, 0.9, &cfg).unwrap();
        assert!(d < 1e-14);
    }

    #[test]
    fn estimates_trivial_cases() {
        let (u, v) = paths(4);
        let nu1 = EmpiricalMeasure::uniform_1d(&[0.0, 1.0]).unwrap();
        let nu2 = EmpiricalMeasure::uniform_1d(&[0.5, 2.0]).unwrap();
        let cfg = IntegratorConfig::default();
        let zero = spec("0", "0").with_lipschitz(1.0);
        let rep = check_estimates(&zero, &nu1, &nu2, &u, &v, &cfg).unwrap();
        assert_eq!(rep.max_time_ratio, 0.0);
        assert!((rep.max_stability_ratio.unwrap() - 1.0).abs() < 1e-15);

        let shift = spec("-0.6", "0").with_lipschitz(1.0);
        let rep = check_estimates(&shift, &nu1, &nu2, &u, &v, &cfg).unwrap();
        assert!((rep.max_time_ratio - 0.6).abs() < 1e-12);
        assert!(rep.time_bound_holds() && rep.stability_bound_holds());
        assert!(rep.violations().is_empty());

        assert!(matches!(
            check_estimates(&spec("0", "0"), &nu1, &nu2, &u, &v, &cfg),
            Err(Error::MissingLipschitz)
        ));
    }
}
