//! Finite-population ground truth: estimands, Neyman functionals and exact
//! randomization distributions.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::contrasts::ContrastSpec;
use crate::error::{Error, Result};
use crate::estimators::Submodel;
use crate::lsq::SpdFactor;
use crate::pairs::ObservedDataset;

/// Largest number of assignments [`enumerate_assignments`] will visit.
pub const ENUMERATION_LIMIT: u128 = 1_000_000;

/// Both potential outcomes and covariates of every unit.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialPopulation {
    y1: Vec<f64>,
    y0: Vec<f64>,
    covariates: Vec<f64>,
    q: usize,
    d: usize,
}

impl PotentialPopulation {
    /// Row-major `N × Q` outcome tables and `N × d` covariates.
    pub fn new(y1: Vec<f64>, y0: Vec<f64>, q: usize, covariates: Vec<f64>, d: usize) -> Result<Self> {
        if q == 0 || y1.is_empty() || !y1.len().is_multiple_of(q) || y0.len() != y1.len() {
            return Err(Error::Input("potential outcome tables are empty or mismatched".into()));
        }
        let n = y1.len() / q;
        if n < 2 {
            return Err(Error::Input("population needs at least two units".into()));
        }
        if covariates.len() != n * d {
            return Err(Error::Input("covariate table has the wrong length".into()));
        }
        if y1.iter().chain(&y0).chain(&covariates).any(|v| !v.is_finite()) {
            return Err(Error::Input("population contains non-finite values".into()));
        }
        Ok(Self { y1, y0, covariates, q, d })
    }

    pub fn n(&self) -> usize {
        self.y1.len() / self.q
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn dx(&self) -> usize {
        self.d
    }

    pub fn outcome(&self, i: usize, a: u8) -> &[f64] {
        let table = if a == 1 { &self.y1 } else { &self.y0 };
        &table[i * self.q..(i + 1) * self.q]
    }

    pub fn covariates(&self, i: usize) -> &[f64] {
        &self.covariates[i * self.d..(i + 1) * self.d]
    }

    /// The dataset revealed by `treatment`.
    pub fn observe(&self, treatment: &[u8]) -> Result<ObservedDataset> {
        let n = self.n();
        if treatment.len() != n {
            return Err(Error::Input(format!("{} assignments for {n} units", treatment.len())));
        }
        let outcomes = (0..n).flat_map(|i| self.outcome(i, treatment[i]).iter().copied()).collect();
        ObservedDataset::from_columns(
            (1..=n).map(|k| k.to_string()).collect(),
            treatment.to_vec(),
            outcomes,
            self.q,
            self.covariates.clone(),
            self.d,
        )
    }

    fn check(&self, spec: &ContrastSpec) -> Result<()> {
        spec.validate()?;
        if spec.dimension() != self.q {
            return Err(Error::Input(format!(
                "contrast expects Q = {}, population has Q = {}",
                spec.dimension(),
                self.q
            )));
        }
        Ok(())
    }

    #[inline]
    fn w(&self, spec: &ContrastSpec, i: usize, a: u8, j: usize, b: u8) -> f64 {
        spec.eval(self.outcome(i, a), self.outcome(j, b))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimandForm {
    /// Average over distinct ordered pairs.
    U,
    /// Average over all `N²` ordered pairs, diagonal included.
    V,
}

fn lambda_ab(pop: &PotentialPopulation, spec: &ContrastSpec, a: u8, b: u8, form: EstimandForm) -> f64 {
    let n = pop.n();
    let total = neumaier((0..n).flat_map(|i| {
        (0..n).filter(move |&j| form == EstimandForm::V || j != i).map(move |j| pop.w(spec, i, a, j, b))
    }));
    let count = match form {
        EstimandForm::U => n * (n - 1),
        EstimandForm::V => n * n,
    };
    total / count as f64
}

/// `λ(a, 1 − a)`.
pub fn true_lambda(pop: &PotentialPopulation, spec: &ContrastSpec, a: u8, form: EstimandForm) -> Result<f64> {
    pop.check(spec)?;
    Ok(lambda_ab(pop, spec, a, 1 - a, form))
}

/// `τ(a) = λ(a, 1 − a) − λ(1 − a, a)`.
pub fn true_tau(pop: &PotentialPopulation, spec: &ContrastSpec, a: u8, form: EstimandForm) -> Result<f64> {
    Ok(true_lambda(pop, spec, a, form)? - true_lambda(pop, spec, 1 - a, form)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResidualKind {
    Eps,
    IAdj,
    IAcv,
    AAdj(Submodel),
    AAcv(Submodel),
}

/// Centered row and column scores of one orientation `(a, 1 − a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScorePairs {
    pub e_row: Vec<f64>,
    pub e_col: Vec<f64>,
}

/// Scores for both orientations, `(1,0)` first, with the covariate
/// coefficients that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationScores {
    pub orientation: [ScorePairs; 2],
    pub gamma: [Vec<f64>; 2],
}

impl PopulationScores {
    pub fn get(&self, a: u8) -> &ScorePairs {
        &self.orientation[if a == 1 { 0 } else { 1 }]
    }
}

/// Pair means `ε̄_{i,·}`, `ε̄_{·,i}` of one orientation (divisor N − 1).
fn eps_bars(pop: &PotentialPopulation, spec: &ContrastSpec, a: u8) -> ScorePairs {
    let n = pop.n();
    let mean = lambda_ab(pop, spec, a, 1 - a, EstimandForm::U);
    let m = (n - 1) as f64;
    let (e_row, e_col) = (0..n)
        .into_par_iter()
        .map(|i| {
            let row = neumaier((0..n).filter(|&j| j != i).map(|j| pop.w(spec, i, a, j, 1 - a)));
            let col = neumaier((0..n).filter(|&j| j != i).map(|j| pop.w(spec, j, a, i, 1 - a)));
            (row / m - mean, col / m - mean)
        })
        .unzip();
    ScorePairs { e_row, e_col }
}

/// `X̄_{i,·} = (N − 1)⁻¹ Σ_{j≠i} (X_i − X_j)`; the column mean is its negative.
fn xbar_rows(pop: &PotentialPopulation) -> Vec<DVector<f64>> {
    let (n, d) = (pop.n(), pop.dx());
    (0..n)
        .map(|i| {
            let mut v = DVector::zeros(d);
            for j in (0..n).filter(|&j| j != i) {
                for k in 0..d {
                    v[k] += pop.covariates(i)[k] - pop.covariates(j)[k];
                }
            }
            v / (n - 1) as f64
        })
        .collect()
}

fn covariate_labels(d: usize) -> Vec<String> {
    (1..=d).map(|k| format!("x{k}")).collect()
}

/// OLS (no intercept) of `W_ij` on `X_ij` over ordered pairs, with `W_ij = Σ weight·W_ij(a,b)`.
fn pair_gamma(pop: &PotentialPopulation, spec: &ContrastSpec, weights: &[(u8, u8, f64)]) -> Result<DVector<f64>> {
    let (n, d) = (pop.n(), pop.dx());
    let mut gram = DMatrix::zeros(d, d);
    let mut moment = DVector::zeros(d);
    let mut x = DVector::zeros(d);
    for i in 0..n {
        for j in (0..n).filter(|&j| j != i) {
            for k in 0..d {
                x[k] = pop.covariates(i)[k] - pop.covariates(j)[k];
            }
            let w: f64 = weights.iter().map(|&(a, b, c)| c * pop.w(spec, i, a, j, b)).sum();
            gram += &x * x.transpose();
            moment += &x * w;
        }
    }
    Ok(SpdFactor::new(&gram, &covariate_labels(d))?.solve(&moment))
}

/// OLS (no intercept) of a unit-level response on unit-level covariates.
fn unit_gamma(x: &[DVector<f64>], y: &[f64]) -> Result<DVector<f64>> {
    let d = x[0].len();
    let mut gram = DMatrix::zeros(d, d);
    let mut moment = DVector::zeros(d);
    for (xi, yi) in x.iter().zip(y) {
        gram += xi * xi.transpose();
        moment += xi * *yi;
    }
    Ok(SpdFactor::new(&gram, &covariate_labels(d))?.solve(&moment))
}

/// Row/column scores for the requested residual kind; `pi1` is the treated share.
pub fn population_scores(
    pop: &PotentialPopulation,
    spec: &ContrastSpec,
    kind: ResidualKind,
    pi1: f64,
) -> Result<PopulationScores> {
    pop.check(spec)?;
    if !(pi1 > 0.0 && pi1 < 1.0) {
        return Err(Error::Input(format!("treated share {pi1} is outside (0, 1)")));
    }
    let pi = |a: u8| if a == 1 { pi1 } else { 1.0 - pi1 };
    let eps = [eps_bars(pop, spec, 1), eps_bars(pop, spec, 0)];
    if kind == ResidualKind::Eps {
        return Ok(PopulationScores { orientation: eps, gamma: [vec![], vec![]] });
    }
    if pop.dx() == 0 {
        return Err(Error::Input("covariate-adjusted scores need at least one covariate".into()));
    }
    let xr = xbar_rows(pop);
    let xc: Vec<DVector<f64>> = xr.iter().map(|v| -v).collect();
    let gammas: [DVector<f64>; 2] = match kind {
        ResidualKind::Eps => unreachable!(),
        // ε_ij and W_ij differ by a constant, and Σ X_ij = 0.
        ResidualKind::IAdj => [pair_gamma(pop, spec, &[(1, 0, 1.0)])?, pair_gamma(pop, spec, &[(0, 1, 1.0)])?],
        ResidualKind::IAcv => {
            let mut weights = Vec::new();
            for a in [0u8, 1] {
                for b in [0u8, 1] {
                    weights.push((a, b, pi(a) * pi(b)));
                }
            }
            let g = pair_gamma(pop, spec, &weights)?;
            [g.clone(), g]
        }
        ResidualKind::AAdj(o) | ResidualKind::AAcv(o) => {
            let adj: Vec<DVector<f64>> = (0..2)
                .map(|k| match o {
                    Submodel::Row => unit_gamma(&xr, &eps[k].e_row),
                    Submodel::Col => unit_gamma(&xc, &eps[k].e_col),
                })
                .collect::<Result<_>>()?;
            if let ResidualKind::AAcv(_) = kind {
                let g = &adj[0] * pi(1) + &adj[1] * pi(0);
                [g.clone(), g]
            } else {
                [adj[0].clone(), adj[1].clone()]
            }
        }
    };
    let orientation = std::array::from_fn(|k| {
        let g = &gammas[k];
        ScorePairs {
            e_row: eps[k].e_row.iter().zip(&xr).map(|(e, x)| e - x.dot(g)).collect(),
            e_col: eps[k].e_col.iter().zip(&xc).map(|(e, x)| e - x.dot(g)).collect(),
        }
    });
    Ok(PopulationScores { orientation, gamma: gammas.map(|g| g.iter().copied().collect()) })
}

/// Neyman-type functionals for orientation `(a, 1 − a)`; all are N times a variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeymanFunctionals {
    pub v_c: f64,
    pub v: f64,
    pub cv: f64,
    pub v_c_tau: f64,
    pub v_tau: f64,
}

pub fn neyman_functionals(scores: &PopulationScores, a: u8, pi_a: f64) -> Result<NeymanFunctionals> {
    if !(pi_a > 0.0 && pi_a < 1.0) {
        return Err(Error::Input(format!("arm share {pi_a} is outside (0, 1)")));
    }
    let (s, t) = (scores.get(a), scores.get(1 - a));
    let n = s.e_row.len() as f64;
    let (ca, cb) = (1.0 / (pi_a * n), 1.0 / ((1.0 - pi_a) * n));
    let sum = |f: &dyn Fn(usize) -> f64| neumaier((0..s.e_row.len()).map(f));
    let v_c = ca * sum(&|i| s.e_row[i].powi(2)) + cb * sum(&|i| s.e_col[i].powi(2));
    let v = v_c - sum(&|i| (s.e_row[i] + s.e_col[i]).powi(2)) / n;
    let cv = ca * sum(&|i| s.e_row[i] * t.e_col[i]) + cb * sum(&|i| t.e_row[i] * s.e_col[i])
        - sum(&|i| (s.e_row[i] + s.e_col[i]) * (t.e_row[i] + t.e_col[i])) / n;
    let u = |i: usize| s.e_row[i] - t.e_col[i];
    let w = |i: usize| t.e_row[i] - s.e_col[i];
    let v_c_tau = ca * sum(&|i| u(i).powi(2)) + cb * sum(&|i| w(i).powi(2));
    // τ̂ contributes u_i from arm a and −w_i from arm 1 − a, so the unit-level
    // effect in the finite-population correction is u_i − w_i.
    let v_tau = v_c_tau - sum(&|i| (u(i) - w(i)).powi(2)) / n;
    Ok(NeymanFunctionals { v_c, v, cv, v_c_tau, v_tau })
}

/// Exact distribution of a statistic over all complete randomizations.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactDistribution {
    /// One value per assignment, each with probability `1 / C(N, N₁)`.
    pub values: Vec<f64>,
    pub probability: f64,
    pub mean: f64,
    pub variance: f64,
}

fn binomial(n: usize, k: usize) -> u128 {
    (0..k as u128).fold(1u128, |acc, i| acc * (n as u128 - i) / (i + 1))
}

/// Evaluates `statistic` on every assignment with exactly `n1` treated units.
pub fn enumerate_assignments<F>(pop: &PotentialPopulation, n1: usize, statistic: F) -> Result<ExactDistribution>
where
    F: Fn(&ObservedDataset) -> Result<f64> + Sync,
{
    let n = pop.n();
    if n1 == 0 || n1 >= n {
        return Err(Error::Input(format!("N₁ = {n1} must lie in 1..{n}")));
    }
    let count = binomial(n, n1);
    if count > ENUMERATION_LIMIT {
        return Err(Error::EnumerationTooLarge { count, limit: ENUMERATION_LIMIT });
    }
    let combos: Vec<Vec<usize>> = (0..n).combinations(n1).collect();
    let values: Vec<f64> = combos
        .par_iter()
        .map(|treated| {
            let mut a = vec![0u8; n];
            for &i in treated {
                a[i] = 1;
            }
            statistic(&pop.observe(&a)?)
        })
        .collect::<Result<_>>()?;
    let k = values.len() as f64;
    let mean = neumaier(values.iter().copied()) / k;
    let variance = neumaier(values.iter().map(|v| (v - mean).powi(2))) / k;
    Ok(ExactDistribution { values, probability: 1.0 / k, mean, variance })
}

/// Neumaier-compensated sum.
pub(crate) fn neumaier(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut c) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}
