//! Finite atomic laws on Rⁿ, Wasserstein distances and quantization of
//! analytic laws.
//!
//! Every law handled by the crate is an [`EmpiricalMeasure`]: a list of atoms
//! with strictly positive weights summing to one. Continuous laws only enter
//! through [`quantize`].

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::transport;

/// Tolerance on the total mass of a measure.
pub const MASS_TOLERANCE: f64 = 1e-12;

/// Largest `N * M` for which the exact transport solve is attempted when
/// `dim > 1`.
pub const TRANSPORT_CELL_LIMIT: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    dim: usize,
    coords: Vec<f64>,
    weights: Vec<f64>,
}

impl EmpiricalMeasure {
    /// Builds a measure from a flat row-major coordinate buffer
    /// (`weights.len()` atoms of `dim` coordinates each).
    pub fn from_flat(dim: usize, coords: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidMeasure("dimension must be at least 1".into()));
        }
        if weights.is_empty() {
            return Err(Error::InvalidMeasure("at least one atom required".into()));
        }
        if coords.len() != dim * weights.len() {
            return Err(Error::InvalidMeasure(format!(
                "{} coordinates do not describe {} atoms of dimension {}",
                coords.len(),
                weights.len(),
                dim
            )));
        }
        if let Some(c) = coords.iter().find(|c| !c.is_finite()) {
            return Err(Error::InvalidMeasure(format!("non-finite atom coordinate {c}")));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::InvalidMeasure(format!("weight {w} is not positive")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidMeasure(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { dim, coords, weights })
    }

    pub fn new(atoms: &[Vec<f64>], weights: Vec<f64>) -> Result<Self> {
        let dim = atoms.first().map(Vec::len).unwrap_or(0);
        if let Some(a) = atoms.iter().find(|a| a.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: a.len(),
            });
        }
        Self::from_flat(dim, atoms.concat(), weights)
    }

    /// Uniformly weighted measure on the given atoms.
    pub fn uniform(atoms: &[Vec<f64>]) -> Result<Self> {
        let n = atoms.len();
        Self::new(atoms, vec![1.0 / n as f64; n])
    }

    /// Uniformly weighted one-dimensional measure.
    pub fn uniform_1d(points: &[f64]) -> Result<Self> {
        let n = points.len();
        Self::from_flat(1, points.to_vec(), vec![1.0 / n as f64; n])
    }

    pub fn dirac(point: &[f64]) -> Result<Self> {
        Self::from_flat(point.len(), point.to_vec(), vec![1.0])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn atom(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn atoms(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn has_uniform_weights(&self) -> bool {
        let w0 = self.weights[0];
        self.weights.iter().all(|w| *w == w0)
    }

    /// Same weights, new atom positions (flat buffer of identical length).
    pub fn with_coords(&self, coords: Vec<f64>) -> Result<Self> {
        if coords.len() != self.coords.len() {
            return Err(Error::DimensionMismatch {
                expected: self.coords.len(),
                got: coords.len(),
            });
        }
        Self::from_flat(self.dim, coords, self.weights.clone())
    }

    /// Reorders atoms (and their weights): atom `k` of the result is atom
    /// `perm[k]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut coords = Vec::with_capacity(self.coords.len());
        let mut weights = Vec::with_capacity(self.weights.len());
        for &i in perm {
            coords.extend_from_slice(self.atom(i));
            weights.push(self.weights[i]);
        }
        Self {
            dim: self.dim,
            coords,
            weights,
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for (a, w) in self.atoms().zip(&self.weights) {
            for (mk, ak) in m.iter_mut().zip(a) {
                *mk += w * ak;
            }
        }
        m
    }

    /// `∫ |x|² dμ`.
    pub fn second_moment(&self) -> f64 {
        self.atoms()
            .zip(&self.weights)
            .map(|(a, w)| w * a.iter().map(|c| c * c).sum::<f64>())
            .sum()
    }

    /// `∫ sin(x) dμ`, only defined in dimension one.
    pub fn mean_sin(&self) -> Result<f64> {
        if self.dim != 1 {
            return Err(Error::UnsupportedFeature(format!(
                "mean_sin requires dim 1, measure has dim {}",
                self.dim
            )));
        }
        Ok(self.coords.iter().zip(&self.weights).map(|(x, w)| w * x.sin()).sum())
    }
}

/// Transport plan between two measures.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    pub source: EmpiricalMeasure,
    pub target: EmpiricalMeasure,
    /// Row-major `source.len() x target.len()` masses.
    pub plan: Vec<f64>,
}

impl Coupling {
    pub fn mass(&self, i: usize, j: usize) -> f64 {
        self.plan[i * self.target.len() + j]
    }

    /// `∫ |x - y|^p dπ`.
    pub fn cost(&self, p: u32) -> f64 {
        let m = self.target.len();
        let mut total = 0.0;
        for i in 0..self.source.len() {
            for j in 0..m {
                let q = self.plan[i * m + j];
                if q != 0.0 {
                    total += q * ground_cost(self.source.atom(i), self.target.atom(j), p);
                }
            }
        }
        total
    }

    /// Largest violation of the marginal constraints.
    pub fn marginal_error(&self) -> f64 {
        let (n, m) = (self.source.len(), self.target.len());
        let mut err: f64 = 0.0;
        for i in 0..n {
            let row: f64 = self.plan[i * m..(i + 1) * m].iter().sum();
            err = err.max((row - self.source.weights()[i]).abs());
        }
        for j in 0..m {
            let col: f64 = (0..n).map(|i| self.plan[i * m + j]).sum();
            err = err.max((col - self.target.weights()[j]).abs());
        }
        err
    }
}

fn ground_cost(x: &[f64], y: &[f64], p: u32) -> f64 {
    let sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    match p {
        2 => sq,
        1 => sq.sqrt(),
        _ => sq.sqrt().powi(p as i32),
    }
}

fn check_order(p: u32) -> Result<()> {
    if p == 1 || p == 2 {
        Ok(())
    } else {
        Err(Error::InvalidMeasure(format!("Wasserstein order {p} not supported")))
    }
}

fn check_dims(mu1: &EmpiricalMeasure, mu2: &EmpiricalMeasure) -> Result<()> {
    if mu1.dim() != mu2.dim() {
        return Err(Error::DimensionMismatch {
            expected: mu1.dim(),
            got: mu2.dim(),
        });
    }
    Ok(())
}

/// Monotone (north-west corner on sorted atoms) plan in dimension one.
fn monotone_plan(mu1: &EmpiricalMeasure, mu2: &EmpiricalMeasure) -> Vec<f64> {
    let sorted = |mu: &EmpiricalMeasure| {
        let mut idx: Vec<usize> = (0..mu.len()).collect();
        idx.sort_by(|&a, &b| mu.coords[a].total_cmp(&mu.coords[b]).then(a.cmp(&b)));
        idx
    };
    let (s1, s2) = (sorted(mu1), sorted(mu2));
    let (n, m) = (mu1.len(), mu2.len());
    let mut plan = vec![0.0; n * m];
    let (mut i, mut j) = (0, 0);
    let mut ra = mu1.weights[s1[0]];
    let mut rb = mu2.weights[s2[0]];
    loop {
        let q = ra.min(rb);
        plan[s1[i] * m + s2[j]] += q;
        ra -= q;
        rb -= q;
        if i + 1 == n && j + 1 == m {
            break;
        }
        if (ra <= rb && i + 1 < n) || j + 1 == m {
            i += 1;
            ra = mu1.weights[s1[i]];
        } else {
            j += 1;
            rb = mu2.weights[s2[j]];
        }
    }
    plan
}

/// Exact plan from the transportation simplex, any dimension.
fn simplex_plan(mu1: &EmpiricalMeasure, mu2: &EmpiricalMeasure, p: u32) -> Result<Vec<f64>> {
    let (n, m) = (mu1.len(), mu2.len());
    if n * m > TRANSPORT_CELL_LIMIT {
        return Err(Error::SizeLimit {
            rows: n,
            cols: m,
            limit: TRANSPORT_CELL_LIMIT,
        });
    }
    let mut cost = Vec::with_capacity(n * m);
    for a in mu1.atoms() {
        for b in mu2.atoms() {
            cost.push(ground_cost(a, b, p));
        }
    }
    Ok(transport::solve(mu1.weights(), mu2.weights(), &cost))
}

/// `W_p(μ₁, μ₂)` for `p ∈ {1, 2}`.
///
/// Dimension one uses sorted quantile matching; higher dimensions solve the
/// transport problem exactly on the atom bipartite graph.
pub fn wasserstein(p: u32, mu1: &EmpiricalMeasure, mu2: &EmpiricalMeasure) -> Result<f64> {
    check_order(p)?;
    check_dims(mu1, mu2)?;
    let plan = if mu1.dim() == 1 {
        monotone_plan(mu1, mu2)
    } else {
        simplex_plan(mu1, mu2, p)?
    };
    Ok(plan_cost(mu1, mu2, &plan, p).powf(1.0 / p as f64))
}

/// `W_p` through the general transport solver regardless of dimension.
pub fn wasserstein_exact_transport(p: u32, mu1: &EmpiricalMeasure, mu2: &EmpiricalMeasure) -> Result<f64> {
    check_order(p)?;
    check_dims(mu1, mu2)?;
    let plan = simplex_plan(mu1, mu2, p)?;
    Ok(plan_cost(mu1, mu2, &plan, p).powf(1.0 / p as f64))
}

fn plan_cost(mu1: &EmpiricalMeasure, mu2: &EmpiricalMeasure, plan: &[f64], p: u32) -> f64 {
    let m = mu2.len();
    let mut total = 0.0;
    for (i, a) in mu1.atoms().enumerate() {
        for (j, b) in mu2.atoms().enumerate() {
            let q = plan[i * m + j];
            if q != 0.0 {
                total += q * ground_cost(a, b, p);
            }
        }
    }
    total
}

/// A `W₂`-optimal coupling.
pub fn optimal_coupling(mu1: &EmpiricalMeasure, mu2: &EmpiricalMeasure) -> Result<Coupling> {
    check_dims(mu1, mu2)?;
    let plan = if mu1.dim() == 1 {
        monotone_plan(mu1, mu2)
    } else {
        simplex_plan(mu1, mu2, 2)?
    };
    Ok(Coupling {
        source: mu1.clone(),
        target: mu2.clone(),
        plan,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum LawFamily {
    Gaussian { mean: f64, variance: f64 },
    Dirac { point: Vec<f64> },
    Uniform { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizationSpec {
    pub family: LawFamily,
    pub atom_count: usize,
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::new(0.0, 1.0)
        .expect("standard normal parameters are valid")
        .inverse_cdf(p)
}

/// Deterministic quantile-midpoint quantization.
///
/// Gaussian and uniform laws get `atom_count` equally weighted atoms at the
/// quantiles `(i - 1/2) / N`; the Gaussian atoms are mirrored so the set is
/// exactly symmetric about the mean.
pub fn quantize(spec: &QuantizationSpec) -> Result<EmpiricalMeasure> {
    let n = spec.atom_count;
    if n == 0 {
        return Err(Error::InvalidMeasure("atom_count must be at least 1".into()));
    }
    match &spec.family {
        LawFamily::Dirac { point } => EmpiricalMeasure::dirac(point),
        LawFamily::Gaussian { mean, variance } => {
            if !(*variance >= 0.0) {
                return Err(Error::InvalidMeasure(format!("variance {variance} < 0")));
            }
            let sd = variance.sqrt();
            let mut z = vec![0.0; n];
            for i in 0..n / 2 {
                let q = normal_quantile((i as f64 + 0.5) / n as f64);
                z[i] = q;
                z[n - 1 - i] = -q;
            }
            let pts: Vec<f64> = z.iter().map(|q| mean + sd * q).collect();
            EmpiricalMeasure::uniform_1d(&pts)
        }
        LawFamily::Uniform { lo, hi } => {
            if !(lo <= hi) {
                return Err(Error::InvalidMeasure(format!("uniform law with lo {lo} > hi {hi}")));
            }
            let pts: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * (i as f64 + 0.5) / n as f64).collect();
            EmpiricalMeasure::uniform_1d(&pts)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Feature {
    Mean,
    SecondMoment,
    MeanSin,
}

impl Feature {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "mean" => Ok(Feature::Mean),
            "second_moment" => Ok(Feature::SecondMoment),
            "mean_sin" => Ok(Feature::MeanSin),
            other => Err(Error::UnsupportedFeature(other.to_string())),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Feature::Mean => "mean",
            Feature::SecondMoment => "second_moment",
            Feature::MeanSin => "mean_sin",
        }
    }
}

/// Weighted average of a registered feature; `mean` is vector valued.
pub fn measure_feature(mu: &EmpiricalMeasure, feature: Feature) -> Result<Vec<f64>> {
    match feature {
        Feature::Mean => Ok(mu.mean()),
        Feature::SecondMoment => Ok(vec![mu.second_moment()]),
        Feature::MeanSin => Ok(vec![mu.mean_sin()?]),
    }
}

/// Feature values of one measure, computed once and shared by every
/// expression evaluated against it.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureValues {
    pub mean: Vec<f64>,
    pub second_moment: f64,
    pub mean_sin: Option<f64>,
}

impl FeatureValues {
    pub fn of(mu: &EmpiricalMeasure) -> Self {
        Self::from_parts(mu.dim, &mu.coords, &mu.weights)
    }

    /// Features of the law with atoms `coords` (row-major, `dim` per atom)
    /// and the given weights, summed left to right.
    pub fn from_parts(dim: usize, coords: &[f64], weights: &[f64]) -> Self {
        let mut mean = vec![0.0; dim];
        let mut second_moment = 0.0;
        let mut mean_sin = 0.0;
        for (a, w) in coords.chunks_exact(dim).zip(weights) {
            let mut sq = 0.0;
            for (mk, ak) in mean.iter_mut().zip(a) {
                *mk += w * ak;
                sq += ak * ak;
            }
            second_moment += w * sq;
            if dim == 1 {
                mean_sin += w * a[0].sin();
            }
        }
        Self {
            mean,
            second_moment,
            mean_sin: (dim == 1).then_some(mean_sin),
        }
    }

    /// Zero features for evaluating expressions that reference no measure.
    pub fn zeros(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            second_moment: 0.0,
            mean_sin: if dim == 1 { Some(0.0) } else { None },
        }
    }
}
