//! Lower and upper Hamiltonians over the law and over its lift, extremized
//! exactly on finite control grids.
//!
//! Ties go to the lowest grid index; the inner optimization is resolved
//! before the outer one.

use crate::error::{Error, Result};
use crate::game::{GameSpec, TargetedEnsemble};
use crate::measure::{EmpiricalMeasure, FeatureValues};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Kind {
    /// `sup_v inf_u`.
    Lower,
    /// `inf_u sup_v`.
    Upper,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Lower => "lower",
            Kind::Upper => "upper",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "lower" => Ok(Kind::Lower),
            "upper" => Ok(Kind::Upper),
            other => Err(Error::Config(format!("unknown kind `{other}` (lower|upper)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HamiltonianEval {
    pub value: f64,
    pub arg_u: usize,
    pub arg_v: usize,
    pub kind: Kind,
}

/// Per-atom costate vectors, aligned with the atoms of a measure.
#[derive(Debug, Clone, PartialEq)]
pub struct Costate {
    pub dim: usize,
    pub values: Vec<f64>,
}

impl Costate {
    pub fn new(dim: usize, values: Vec<f64>) -> Self {
        Self { dim, values }
    }

    pub fn constant(mu: &EmpiricalMeasure, value: &[f64]) -> Self {
        Self {
            dim: mu.dim(),
            values: value.repeat(mu.len()),
        }
    }

    pub fn at(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut values = Vec::with_capacity(self.values.len());
        for &i in perm {
            values.extend_from_slice(self.at(i));
        }
        Self { dim: self.dim, values }
    }
}

/// Exact min/max over a payoff matrix `payoff[iu * nv + iv]`.
pub fn extremize(kind: Kind, payoff: &[f64], nu: usize, nv: usize) -> HamiltonianEval {
    match kind {
        Kind::Lower => {
            let (mut best, mut bu, mut bv) = (f64::NEG_INFINITY, 0, 0);
            for iv in 0..nv {
                let (mut inner, mut iu_best) = (f64::INFINITY, 0);
                for iu in 0..nu {
                    let g = payoff[iu * nv + iv];
                    if g < inner {
                        inner = g;
                        iu_best = iu;
                    }
                }
                if inner > best {
                    best = inner;
                    bu = iu_best;
                    bv = iv;
                }
            }
            HamiltonianEval {
                value: best,
                arg_u: bu,
                arg_v: bv,
                kind,
            }
        }
        Kind::Upper => {
            let (mut best, mut bu, mut bv) = (f64::INFINITY, 0, 0);
            for iu in 0..nu {
                let (mut inner, mut iv_best) = (f64::NEG_INFINITY, 0);
                for iv in 0..nv {
                    let g = payoff[iu * nv + iv];
                    if g > inner {
                        inner = g;
                        iv_best = iv;
                    }
                }
                if inner < best {
                    best = inner;
                    bu = iu;
                    bv = iv_best;
                }
            }
            HamiltonianEval {
                value: best,
                arg_u: bu,
                arg_v: bv,
                kind,
            }
        }
    }
}

/// `Σᵢ wᵢ [⟨pᵢ, f(t, xᵢ, ν, u, v)⟩ + l(t, xᵢ, ν, u, v)]` for every control
/// pair, row-major in `(u, v)`.
#[allow(clippy::too_many_arguments)]
pub fn payoff_matrix(
    spec: &GameSpec,
    t: f64,
    coords: &[f64],
    weights: &[f64],
    features: &FeatureValues,
    p: &[f64],
    u_grid: &[Vec<f64>],
    v_grid: &[Vec<f64>],
    out: &mut Vec<f64>,
) -> Result<()> {
    let n = spec.dim;
    let mut drift = vec![0.0; n];
    out.clear();
    for u in u_grid {
        for v in v_grid {
            let mut total = 0.0;
            for ((x, pi), w) in coords.chunks_exact(n).zip(p.chunks_exact(n)).zip(weights) {
                spec.drift_into(t, x, features, u, v, &mut drift)?;
                let mut inner = spec.running_cost(t, x, features, u, v)?;
                for (pk, fk) in pi.iter().zip(&drift) {
                    inner += pk * fk;
                }
                total += w * inner;
            }
            out.push(total);
        }
    }
    Ok(())
}

fn check_inputs(
    spec: &GameSpec,
    nu_x: &EmpiricalMeasure,
    p: &Costate,
    u_grid: &[Vec<f64>],
    v_grid: &[Vec<f64>],
) -> Result<()> {
    if u_grid.is_empty() || v_grid.is_empty() {
        return Err(Error::InvalidSpec("control grid is empty".into()));
    }
    if nu_x.dim() != spec.dim || p.dim != spec.dim {
        return Err(Error::DimensionMismatch {
            expected: spec.dim,
            got: if p.dim != spec.dim { p.dim } else { nu_x.dim() },
        });
    }
    if p.len() != nu_x.len() {
        return Err(Error::DimensionMismatch {
            expected: nu_x.len(),
            got: p.len(),
        });
    }
    Ok(())
}

/// Hamiltonian over the law `νx` with costate `p ∈ L²(νx)`.
pub fn hamiltonian(
    kind: Kind,
    spec: &GameSpec,
    t: f64,
    nu_x: &EmpiricalMeasure,
    p: &Costate,
    u_grid: &[Vec<f64>],
    v_grid: &[Vec<f64>],
) -> Result<HamiltonianEval> {
    check_inputs(spec, nu_x, p, u_grid, v_grid)?;
    let features = FeatureValues::of(nu_x);
    let mut payoff = Vec::with_capacity(u_grid.len() * v_grid.len());
    payoff_matrix(
        spec,
        t,
        nu_x.coords(),
        nu_x.weights(),
        &features,
        &p.values,
        u_grid,
        v_grid,
        &mut payoff,
    )?;
    Ok(extremize(kind, &payoff, u_grid.len(), v_grid.len()))
}

pub fn hamiltonian_lower(
    spec: &GameSpec,
    t: f64,
    nu_x: &EmpiricalMeasure,
    p: &Costate,
    u_grid: &[Vec<f64>],
    v_grid: &[Vec<f64>],
) -> Result<HamiltonianEval> {
    hamiltonian(Kind::Lower, spec, t, nu_x, p, u_grid, v_grid)
}

pub fn hamiltonian_upper(
    spec: &GameSpec,
    t: f64,
    nu_x: &EmpiricalMeasure,
    p: &Costate,
    u_grid: &[Vec<f64>],
    v_grid: &[Vec<f64>],
) -> Result<HamiltonianEval> {
    hamiltonian(Kind::Upper, spec, t, nu_x, p, u_grid, v_grid)
}

/// Hamiltonian of the lifted problem: the expectation is taken over the
/// outcomes `ω = (i, j)` of the pair `y = (x, z)` with mass `wᵢ w'ⱼ`, and
/// `p` is a random variable measurable with respect to `x`.
pub fn lifted_hamiltonian(
    kind: Kind,
    spec: &GameSpec,
    t: f64,
    ensemble: &TargetedEnsemble,
    p: &Costate,
    u_grid: &[Vec<f64>],
    v_grid: &[Vec<f64>],
) -> Result<HamiltonianEval> {
    let nu_x = &ensemble.x;
    check_inputs(spec, nu_x, p, u_grid, v_grid)?;
    let features = FeatureValues::of(nu_x);
    let n = spec.dim;
    let mut drift = vec![0.0; n];
    let mut payoff = Vec::with_capacity(u_grid.len() * v_grid.len());
    for u in u_grid {
        for v in v_grid {
            let mut total = 0.0;
            for (i, (x, w)) in nu_x.atoms().zip(nu_x.weights()).enumerate() {
                spec.drift_into(t, x, &features, u, v, &mut drift)?;
                let l = spec.running_cost(t, x, &features, u, v)?;
                let integrand = l + p.at(i).iter().zip(&drift).map(|(a, b)| a * b).sum::<f64>();
                for wz in ensemble.z.weights() {
                    total += w * wz * integrand;
                }
            }
            payoff.push(total);
        }
    }
    Ok(extremize(kind, &payoff, u_grid.len(), v_grid.len()))
}

/// A sample point `(t, νx, p)` for [`isaacs_check`].
#[derive(Debug, Clone)]
pub struct HamiltonianSample {
    pub t: f64,
    pub nu_x: EmpiricalMeasure,
    pub p: Costate,
}

/// `max |H⁺ − H⁻|` over the samples.
pub fn isaacs_check(
    spec: &GameSpec,
    samples: &[HamiltonianSample],
    u_grid: &[Vec<f64>],
    v_grid: &[Vec<f64>],
) -> Result<f64> {
    let mut gap: f64 = 0.0;
    for s in samples {
        let lo = hamiltonian_lower(spec, s.t, &s.nu_x, &s.p, u_grid, v_grid)?;
        let hi = hamiltonian_upper(spec, s.t, &s.nu_x, &s.p, u_grid, v_grid)?;
        gap = gap.max((hi.value - lo.value).abs());
    }
    Ok(gap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::ControlBox;

    fn spec_with(f: &str, l: &str, lo: f64, hi: f64) -> GameSpec {
        GameSpec::from_sources(
            1.0,
            ControlBox::interval(lo, hi).unwrap(),
            ControlBox::interval(lo, hi).unwrap(),
            &[f],
            l,
            "0",
        )
        .unwrap()
    }

    fn grid(lo: f64, hi: f64, r: usize) -> Vec<Vec<f64>> {
        ControlBox::interval(lo, hi).unwrap().grid(r).unwrap()
    }

    /// Brute-force sup-inf and inf-sup over the full matrix.
    fn oracle(payoff: &dyn Fn(f64, f64) -> f64, us: &[f64], vs: &[f64]) -> (f64, f64) {
        let lower = vs
            .iter()
            .map(|&v| us.iter().map(|&u| payoff(u, v)).fold(f64::INFINITY, f64::min))
            .fold(f64::NEG_INFINITY, f64::max);
        let upper = us
            .iter()
            .map(|&u| vs.iter().map(|&v| payoff(u, v)).fold(f64::NEG_INFINITY, f64::max))
            .fold(f64::INFINITY, f64::min);
        (lower, upper)
    }

    #[test]
    fn linear_running_cost() {
        let spec = spec_with("0", "u1 - v1", 0.0, 1.0);
        let d0 = EmpiricalMeasure::dirac(&[0.0]).unwrap();
        let p = Costate::constant(&d0, &[0.0]);
        let g = grid(0.0, 1.0, 2);
        let lo = hamiltonian_lower(&spec, 0.0, &d0, &p, &g, &g).unwrap();
        assert_eq!((lo.value, lo.arg_u, lo.arg_v), (0.0, 0, 0));
        let hi = hamiltonian_upper(&spec, 0.0, &d0, &p, &g, &g).unwrap();
        assert_eq!((hi.value, hi.arg_u, hi.arg_v), (0.0, 0, 0));
    }

    #[test]
    fn product_cost_on_three_point_grid() {
        let spec = spec_with("0", "u1*v1", -1.0, 1.0);
        let d0 = EmpiricalMeasure::dirac(&[0.0]).unwrap();
        let p = Costate::constant(&d0, &[0.0]);
        let g = grid(-1.0, 1.0, 3);
        let (ol, ou) = oracle(&|u, v| u * v, &[-1.0, 0.0, 1.0], &[-1.0, 0.0, 1.0]);
        assert_eq!((ol, ou), (0.0, 0.0));
        let lo = hamiltonian_lower(&spec, 0.0, &d0, &p, &g, &g).unwrap();
        let hi = hamiltonian_upper(&spec, 0.0, &d0, &p, &g, &g).unwrap();
        assert_eq!(lo.value, ol);
        assert_eq!(hi.value, ou);
    }

    #[test]
    fn quadratic_coupling_has_a_gap() {
        let spec = spec_with("0", "(u1-v1)*(u1-v1)", 0.0, 1.0);
        let d0 = EmpiricalMeasure::dirac(&[0.0]).unwrap();
        let p = Costate::constant(&d0, &[0.0]);
        let g = grid(0.0, 1.0, 2);
        let (ol, ou) = oracle(&|u, v| (u - v) * (u - v), &[0.0, 1.0], &[0.0, 1.0]);
        assert_eq!((ol, ou), (0.0, 1.0));
        let lo = hamiltonian_lower(&spec, 0.0, &d0, &p, &g, &g).unwrap();
        let hi = hamiltonian_upper(&spec, 0.0, &d0, &p, &g, &g).unwrap();
        assert_eq!(lo.value, 0.0);
        assert_eq!(hi.value, 1.0);
        let sample = HamiltonianSample {
            t: 0.0,
            nu_x: d0.clone(),
            p,
        };
        assert_eq!(isaacs_check(&spec, &[sample], &g, &g).unwrap(), 1.0);
    }

    #[test]
    fn costate_only_sees_the_minimizer() {
        let spec = spec_with("u1", "0", 0.0, 1.0);
        let mu = EmpiricalMeasure::uniform_1d(&[-1.0, 2.0]).unwrap();
        let p = Costate::constant(&mu, &[1.0]);
        let g = grid(0.0, 1.0, 3);
        let lo = hamiltonian_lower(&spec, 0.0, &mu, &p, &g, &g).unwrap();
        assert_eq!((lo.value, lo.arg_u), (0.0, 0));
    }

    #[test]
    fn zero_game_has_no_gap() {
        let spec = spec_with("0", "0", 0.0, 1.0);
        let mu = EmpiricalMeasure::uniform_1d(&[0.3, 0.9]).unwrap();
        let sample = HamiltonianSample {
            t: 0.5,
            p: Costate::constant(&mu, &[2.0]),
            nu_x: mu,
        };
        let g = grid(0.0, 1.0, 4);
        assert_eq!(isaacs_check(&spec, &[sample], &g, &g).unwrap(), 0.0);
    }

    #[test]
    fn input_errors() {
        let spec = spec_with("0", "0", 0.0, 1.0);
        let mu = EmpiricalMeasure::uniform_1d(&[0.3, 0.9]).unwrap();
        let g = grid(0.0, 1.0, 2);
        let short = Costate::new(1, vec![1.0]);
        assert!(hamiltonian_lower(&spec, 0.0, &mu, &short, &g, &g).is_err());
        let p = Costate::constant(&mu, &[1.0]);
        assert!(hamiltonian_lower(&spec, 0.0, &mu, &p, &[], &g).is_err());
    }

    #[test]
    fn lifted_form_agrees_with_measure_form() {
        let spec = spec_with("0", "u1 - v1", 0.0, 1.0);
        let d0 = EmpiricalMeasure::dirac(&[0.0]).unwrap();
        let ens = TargetedEnsemble::new(d0.clone(), EmpiricalMeasure::uniform_1d(&[-1.0, 1.0]).unwrap()).unwrap();
        let p = Costate::constant(&d0, &[0.0]);
        let g = grid(0.0, 1.0, 2);
        let lifted = lifted_hamiltonian(Kind::Lower, &spec, 0.0, &ens, &p, &g, &g).unwrap();
        assert_eq!(lifted.value, 0.0);
    }
}
