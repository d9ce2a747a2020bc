//! Measure functionals with closed-form derivatives in the Wasserstein
//! sense, and numerical checks of the lift.
//!
//! For an `N`-atom law with uniform weights, the derivative of the lift
//! `F(x₁, …, x_N) = f(μ_N)` with respect to atom `i` is `∂_μ f(μ_N)(xᵢ) / N`.
//! The HJI solver relies on exactly this factor when it turns grid gradients
//! into per-atom costates.

use crate::dynamics::{propagate, IntegratorConfig, ParticleState};
use crate::error::{Error, Result};
use crate::expr::{Env, Expr, Scope};
use crate::game::{ControlPath, GameSpec};
use crate::hamiltonian::Costate;
use crate::measure::{EmpiricalMeasure, FeatureValues};

#[derive(Debug, Clone, PartialEq)]
pub enum MeasureFunctional {
    /// `k = 1`: `∫ x₁ dμ`; `k = 2`: `∫ |x|² dμ`.
    MeanPower(u32),
    /// `(∫ x₁ dμ)²`.
    SquaredMean,
    /// `∫ φ(x) dμ` with `φ` a state-only expression.
    ExpectationOf(Expr),
}

impl MeasureFunctional {
    pub fn mean() -> Self {
        MeasureFunctional::MeanPower(1)
    }

    pub fn expectation_of(source: &str, dim: usize) -> Result<Self> {
        Ok(MeasureFunctional::ExpectationOf(Expr::parse(
            source,
            &Scope::state(dim),
        )?))
    }

    pub fn has_closed_form_derivative(&self) -> bool {
        match self {
            MeasureFunctional::ExpectationOf(e) => e.derivative_x(0).is_ok(),
            _ => true,
        }
    }

    fn check(&self) -> Result<()> {
        match self {
            MeasureFunctional::MeanPower(k) if *k != 1 && *k != 2 => Err(Error::InvalidSpec(format!(
                "mean_power({k}) not registered; k must be 1 or 2"
            ))),
            _ => Ok(()),
        }
    }
}

fn phi(e: &Expr, x: &[f64], features: &FeatureValues) -> Result<f64> {
    e.eval(&Env {
        t: 0.0,
        x,
        u: &[],
        v: &[],
        z: &[],
        features,
    })
}

/// `f(μ)` as a weighted sum over atoms.
pub fn lifted_value(fun: &MeasureFunctional, mu: &EmpiricalMeasure) -> Result<f64> {
    fun.check()?;
    Ok(match fun {
        MeasureFunctional::MeanPower(1) => mu.mean()[0],
        MeasureFunctional::MeanPower(_) => mu.second_moment(),
        MeasureFunctional::SquaredMean => {
            let m = mu.mean()[0];
            m * m
        }
        MeasureFunctional::ExpectationOf(e) => {
            let fv = FeatureValues::zeros(mu.dim());
            let mut total = 0.0;
            for (x, w) in mu.atoms().zip(mu.weights()) {
                total += w * phi(e, x, &fv)?;
            }
            total
        }
    })
}

/// `∂_μ f(μ)(xᵢ)` at every atom.
pub fn lifted_gradient(fun: &MeasureFunctional, mu: &EmpiricalMeasure) -> Result<Costate> {
    fun.check()?;
    let n = mu.dim();
    let mut values = vec![0.0; mu.len() * n];
    match fun {
        MeasureFunctional::MeanPower(1) => {
            for g in values.chunks_exact_mut(n) {
                g[0] = 1.0;
            }
        }
        MeasureFunctional::MeanPower(_) => {
            for (g, x) in values.chunks_exact_mut(n).zip(mu.atoms()) {
                for (gk, xk) in g.iter_mut().zip(x) {
                    *gk = 2.0 * xk;
                }
            }
        }
        MeasureFunctional::SquaredMean => {
            let m = mu.mean()[0];
            for g in values.chunks_exact_mut(n) {
                g[0] = 2.0 * m;
            }
        }
        MeasureFunctional::ExpectationOf(e) => {
            let partials = (0..n).map(|k| e.derivative_x(k)).collect::<Result<Vec<_>>>()?;
            let fv = FeatureValues::zeros(n);
            for (g, x) in values.chunks_exact_mut(n).zip(mu.atoms()) {
                for (gk, d) in g.iter_mut().zip(&partials) {
                    *gk = phi(d, x, &fv)?;
                }
            }
        }
    }
    Ok(Costate::new(n, values))
}

/// Largest relative error between central finite differences of the
/// `N`-particle lift and `∂_μ f(μ)(xᵢ) / N`. The measure must carry uniform
/// weights.
pub fn gradient_fd_check(fun: &MeasureFunctional, mu: &EmpiricalMeasure, h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::InvalidSpec(format!("step {h} must be positive")));
    }
    if !mu.has_uniform_weights() {
        return Err(Error::InvalidMeasure(
            "finite-difference lift check needs uniform weights".into(),
        ));
    }
    let grad = lifted_gradient(fun, mu)?;
    let count = mu.len() as f64;
    let mut worst: f64 = 0.0;
    for idx in 0..mu.coords().len() {
        let mut plus = mu.coords().to_vec();
        let mut minus = plus.clone();
        plus[idx] += h;
        minus[idx] -= h;
        let fp = lifted_value(fun, &mu.with_coords(plus)?)?;
        let fm = lifted_value(fun, &mu.with_coords(minus)?)?;
        let fd = (fp - fm) / (2.0 * h);
        let exact = grad.values[idx] / count;
        let rel = (fd - exact).abs() / (exact.abs() + 1e-12);
        worst = worst.max(rel);
    }
    Ok(worst)
}

/// `|(f(μ_{t+dt}) − f(μ_t)) / dt − Σᵢ wᵢ ⟨∂_μ f(μ_t)(xᵢ), f(t, xᵢ, μ_t, u, v)⟩|`
/// for a time-independent functional along the controlled flow.
pub fn chain_rule_check(
    fun: &MeasureFunctional,
    spec: &GameSpec,
    state: &ParticleState,
    u_path: &ControlPath,
    v_path: &ControlPath,
    dt: f64,
    cfg: &IntegratorConfig,
) -> Result<f64> {
    if !(dt > 0.0) {
        return Err(Error::InvalidSpec(format!("dt {dt} must be positive")));
    }
    let mu = &state.measure;
    let later = propagate(spec, state, u_path, v_path, state.time + dt, cfg)?;
    let lhs = (lifted_value(fun, &later.measure)? - lifted_value(fun, mu)?) / dt;

    let grad = lifted_gradient(fun, mu)?;
    let features = FeatureValues::of(mu);
    let step = u_path.mesh.step_of(state.time);
    let u = u_path.at_step(step);
    let v = v_path.at_step(v_path.mesh.step_of(state.time));
    let n = spec.dim;
    let mut drift = vec![0.0; n];
    let mut rhs = 0.0;
    for (i, (x, w)) in mu.atoms().zip(mu.weights()).enumerate() {
        spec.drift_into(state.time, x, &features, u, v, &mut drift)?;
        rhs += w * grad.at(i).iter().zip(&drift).map(|(g, f)| g * f).sum::<f64>();
    }
    Ok((lhs - rhs).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{ControlBox, TimeMesh};

    #[test]
    fn values() {
        let d3 = EmpiricalMeasure::dirac(&[3.0]).unwrap();
        assert_eq!(lifted_value(&MeasureFunctional::mean(), &d3).unwrap(), 3.0);
        let m13 = EmpiricalMeasure::uniform_1d(&[1.0, 3.0]).unwrap();
        assert_eq!(lifted_value(&MeasureFunctional::SquaredMean, &m13).unwrap(), 4.0);
        assert_eq!(lifted_value(&MeasureFunctional::MeanPower(2), &m13).unwrap(), 5.0);
        let sym = EmpiricalMeasure::uniform_1d(&[-0.7, 0.7]).unwrap();
        let sin = MeasureFunctional::expectation_of("sin(x1)", 1).unwrap();
        assert_eq!(lifted_value(&sin, &sym).unwrap(), 0.0);
        assert!(lifted_value(&MeasureFunctional::MeanPower(3), &sym).is_err());
    }

    #[test]
    fn gradients() {
        let m13 = EmpiricalMeasure::uniform_1d(&[1.0, 3.0]).unwrap();
        assert_eq!(
            lifted_gradient(&MeasureFunctional::mean(), &m13).unwrap().values,
            vec![1.0, 1.0]
        );
        assert_eq!(
            lifted_gradient(&MeasureFunctional::SquaredMean, &m13).unwrap().values,
            vec![4.0, 4.0]
        );
        let d0 = EmpiricalMeasure::dirac(&[0.0]).unwrap();
        let sin = MeasureFunctional::expectation_of("sin(x1)", 1).unwrap();
        assert_eq!(lifted_gradient(&sin, &d0).unwrap().values, vec![1.0]);
        let abs = MeasureFunctional::expectation_of("abs(x1)", 1).unwrap();
        assert!(matches!(lifted_gradient(&abs, &d0), Err(Error::NotDifferentiable(_))));
        assert!(!abs.has_closed_form_derivative());
    }

    #[test]
    fn finite_difference_examples() {
        let m4 = EmpiricalMeasure::uniform_1d(&[0.1, -0.4, 1.3, 2.0]).unwrap();
        assert!(gradient_fd_check(&MeasureFunctional::mean(), &m4, 1e-5).unwrap() <= 1e-9);
        let m13 = EmpiricalMeasure::uniform_1d(&[1.0, 3.0]).unwrap();
        assert!(gradient_fd_check(&MeasureFunctional::SquaredMean, &m13, 1e-5).unwrap() <= 1e-8);
        let nonuniform = EmpiricalMeasure::from_flat(1, vec![0.0, 1.0], vec![0.3, 0.7]).unwrap();
        assert!(gradient_fd_check(&MeasureFunctional::mean(), &nonuniform, 1e-5).is_err());
        assert!(gradient_fd_check(&MeasureFunctional::mean(), &m4, 0.0).is_err());
    }

    #[test]
    fn chain_rule_trivial_cases() {
        let mesh = TimeMesh::new(0.0, 1.0, 4).unwrap();
        let bx = ControlBox::interval(0.0, 1.0).unwrap();
        let path = ControlPath::constant(mesh, vec![0.0], &bx).unwrap();
        let state = ParticleState {
            time: 0.0,
            measure: EmpiricalMeasure::uniform_1d(&[1.0, 3.0]).unwrap(),
        };
        let cfg = IntegratorConfig::default();
        let mk = |f: &str| GameSpec::from_sources(1.0, bx.clone(), bx.clone(), &[f], "0", "0").unwrap();
        let r = chain_rule_check(
            &MeasureFunctional::SquaredMean,
            &mk("0"),
            &state,
            &path,
            &path,
            0.1,
            &cfg,
        )
        .unwrap();
        assert_eq!(r, 0.0);
        let r = chain_rule_check(&MeasureFunctional::mean(), &mk("1.5"), &state, &path, &path, 0.1, &cfg).unwrap();
        assert!(r <= 1e-12);
    }
}
