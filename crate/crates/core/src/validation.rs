//! Self-checks run by `paircausal validate` and the acceptance tests.
//!
//! The dense references below build the full `N(N − 1) × p` pair design (or
//! the two `N × p` per-unit designs) explicitly and evaluate the sandwich
//! formulas term by term, sharing no code with the streaming implementation
//! beyond the contrast evaluation.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::contrasts::{ContrastSpec, Direction, FullTie};
use crate::error::{Error, Result};
use crate::estimators::{estimate, estimate_averaged, estimate_individual, Adjustment, ModelFamily, Submodel};
use crate::oracle::{
    enumerate_assignments, neyman_functionals, population_scores, true_lambda, EstimandForm, PotentialPopulation,
    ResidualKind,
};
use crate::pairs::ObservedDataset;
use crate::variance::{averaged_variance, Method, MissingResidualRule, PairScores, VarianceReport};

/// Tolerance of the exact algebraic equivalences.
pub const EQUIVALENCE_TOL: f64 = 1e-10;
/// Tolerance of enumeration means against the U-type estimand.
pub const ENUMERATION_TOL: f64 = 1e-12;
/// Relative tolerance of streamed against dense variance results.
pub const DENSE_TOL: f64 = 1e-8;
/// Scale floor of the dense comparison, so that variances that are zero up to
/// rounding (perfect fits) compare absolutely.
pub const DENSE_SCALE_FLOOR: f64 = 1e-14;
/// Relative tolerance of the oracle identities.
pub const PROPOSITION_TOL: f64 = 1e-8;

/// Deliberate defects used to check that a suite can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mutation {
    #[default]
    None,
    /// Adds the CTW overcount correction instead of subtracting it.
    FlipCorrectionSign,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteOutcome {
    pub name: String,
    pub cases: usize,
    /// Comparisons skipped because the design was rank deficient.
    pub skipped: usize,
    pub max_error: f64,
    pub failures: Vec<String>,
    pub seconds: f64,
}

impl SuiteOutcome {
    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.cases > 0
    }
}

struct Tally {
    name: &'static str,
    start: Instant,
    cases: usize,
    skipped: usize,
    max_error: f64,
    failures: Vec<String>,
}

impl Tally {
    fn new(name: &'static str) -> Self {
        Self { name, start: Instant::now(), cases: 0, skipped: 0, max_error: 0.0, failures: Vec::new() }
    }

    fn check(&mut self, what: impl FnOnce() -> String, error: f64, tol: f64) {
        self.cases += 1;
        if error.is_nan() || error > tol {
            self.failures.push(format!("{}: error {error:e} > {tol:e}", what()));
        }
        if error > self.max_error || error.is_nan() {
            self.max_error = error;
        }
    }

    fn fail(&mut self, what: String) {
        self.cases += 1;
        self.failures.push(what);
    }

    fn finish(self) -> SuiteOutcome {
        SuiteOutcome {
            name: self.name.into(),
            cases: self.cases,
            skipped: self.skipped,
            max_error: self.max_error,
            failures: self.failures,
            seconds: self.start.elapsed().as_secs_f64(),
        }
    }
}

fn rel_error(a: f64, b: f64, scale: f64) -> f64 {
    (a - b).abs() / scale.max(f64::MIN_POSITIVE)
}

// ---------------------------------------------------------------------------
// Random instances

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Treatment vector with at least `min_arm` units in each arm.
fn random_treatment(rng: &mut ChaCha8Rng, n: usize, min_arm: usize) -> Vec<u8> {
    loop {
        let a: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(0.5))).collect();
        let n1 = a.iter().filter(|&&v| v == 1).count();
        if n1 >= min_arm && n - n1 >= min_arm {
            return a;
        }
    }
}

/// Outcome matrix whose columns are coarse integers (many ties) or continuous.
fn random_outcomes(rng: &mut ChaCha8Rng, n: usize, q: usize, coarse: bool) -> Vec<f64> {
    (0..n * q).map(|_| if coarse { f64::from(rng.random_range(0..4u8)) } else { normal(rng) }).collect()
}

pub(crate) fn random_dataset(
    rng: &mut ChaCha8Rng,
    n: usize,
    q: usize,
    d: usize,
    coarse: bool,
    min_arm: usize,
) -> Result<ObservedDataset> {
    let a = random_treatment(rng, n, min_arm);
    let y = random_outcomes(rng, n, q, coarse);
    let x: Vec<f64> = (0..n * d).map(|_| normal(rng)).collect();
    ObservedDataset::from_columns((0..n).map(|i| format!("u{i}")).collect(), a, y, q, x, d)
}

fn random_population(rng: &mut ChaCha8Rng, n: usize, q: usize, d: usize, coarse: bool) -> Result<PotentialPopulation> {
    let y1 = random_outcomes(rng, n, q, coarse);
    let mut y0 = random_outcomes(rng, n, q, coarse);
    // Correlate the arms a little so that scores are not pure noise.
    for (v0, v1) in y0.iter_mut().zip(&y1) {
        if !coarse {
            *v0 += 0.5 * v1;
        }
    }
    let x: Vec<f64> = (0..n * d).map(|_| normal(rng)).collect();
    PotentialPopulation::new(y1, y0, q, x, d)
}

/// A contrast of every supported kind, with its outcome dimension.
fn random_contrast(rng: &mut ChaCha8Rng) -> (ContrastSpec, bool) {
    match rng.random_range(0..5u8) {
        0 => (ContrastSpec::Difference, false),
        1 => (ContrastSpec::WinHalfTie, true),
        2 => (ContrastSpec::WinStrict, true),
        3 => (
            ContrastSpec::Lexicographic {
                directions: vec![Direction::HigherBetter, Direction::LowerBetter],
                full_tie: FullTie::Half,
            },
            true,
        ),
        _ => {
            let w = rng.random_range(0.2..0.8);
            (
                ContrastSpec::WeightedAggregate {
                    weights: vec![w, 1.0 - w],
                    components: vec![ContrastSpec::WinHalfTie, ContrastSpec::Difference],
                },
                true,
            )
        }
    }
}

// ---------------------------------------------------------------------------
// Dense references

/// `Z_ij` as displayed for each pair-based model.
fn literal_pair_row(family: ModelFamily, a_i: u8, a_j: u8, x: &[f64]) -> Vec<f64> {
    let (ai, aj) = (f64::from(a_i), f64::from(a_j));
    let (s10, s01, dd) = (ai * (1.0 - aj), (1.0 - ai) * aj, ai - aj);
    let mut z = Vec::new();
    match family {
        ModelFamily::IUn => z.extend([s10, s01]),
        ModelFamily::IAcv => {
            z.extend([s10, s01]);
            z.extend_from_slice(x);
        }
        ModelFamily::IAdj => {
            z.extend([s10, s01]);
            z.extend(x.iter().map(|v| s10 * v));
            z.extend(x.iter().map(|v| s01 * v));
        }
        ModelFamily::P => z.push(dd),
        ModelFamily::PAcv => {
            z.push(dd);
            z.extend_from_slice(x);
        }
        ModelFamily::PInt => {
            z.push(dd);
            z.extend(x.iter().map(|v| dd * v));
        }
        ModelFamily::PAdj => {
            z.push(dd);
            z.extend_from_slice(x);
            z.extend(x.iter().map(|v| dd * v));
        }
        _ => unreachable!("not a pair family"),
    }
    z
}

fn dense_ols(z: &DMatrix<f64>, w: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let bread =
        (z.transpose() * z).try_inverse().ok_or_else(|| Error::RankDeficient { columns: vec![], rcond: 0.0 })?;
    let beta = z.clone().svd(true, true).solve(w, 1e-13).map_err(|e| Error::Input(e.into()))?;
    Ok((beta, bread))
}

fn symmetric(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Literal evaluation of the pair-based sandwich for one method.
pub fn dense_pair_variance(
    ds: &ObservedDataset,
    spec: &ContrastSpec,
    family: ModelFamily,
    method: Method,
) -> Result<VarianceReport> {
    let n = ds.n();
    let zrow = |i: usize, j: usize| {
        let x: Vec<f64> = ds.covariates(i).iter().zip(ds.covariates(j)).map(|(a, b)| a - b).collect();
        DVector::from_vec(literal_pair_row(family, ds.treatment(i), ds.treatment(j), &x))
    };
    let pairs: Vec<(usize, usize)> =
        (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).collect();
    let p = zrow(0, 1).len();
    let z = DMatrix::from_fn(pairs.len(), p, |k, c| zrow(pairs[k].0, pairs[k].1)[c]);
    let w = DVector::from_iterator(pairs.len(), pairs.iter().map(|&(i, j)| spec.eval(ds.outcome(i), ds.outcome(j))));
    let (beta, bread) = dense_ols(&z, &w)?;
    let resid = &w - &z * &beta;
    let mut r = DMatrix::zeros(n, n);
    for (k, &(i, j)) in pairs.iter().enumerate() {
        r[(i, j)] = resid[k];
    }
    let zr = |i: usize, j: usize| zrow(i, j) * r[(i, j)];
    let sum_j = |i: usize| (0..n).filter(|&j| j != i).fold(DVector::zeros(p), |acc, j| acc + zr(i, j));
    let sum_i = |j: usize| (0..n).filter(|&i| i != j).fold(DVector::zeros(p), |acc, i| acc + zr(i, j));
    let rev_j = |i: usize| (0..n).filter(|&j| j != i).fold(DVector::zeros(p), |acc, j| acc + zr(j, i));
    let rev_i = |j: usize| (0..n).filter(|&i| i != j).fold(DVector::zeros(p), |acc, i| acc + zr(j, i));

    let mut main_i = DMatrix::zeros(p, p);
    let mut main_j = DMatrix::zeros(p, p);
    let mut reverse = DMatrix::zeros(p, p);
    for k in 0..n {
        let (a, b) = (sum_j(k), sum_i(k));
        main_i += &a * a.transpose();
        main_j += &b * b.transpose();
        reverse += &a * rev_j(k).transpose() + &b * rev_i(k).transpose();
    }
    let mut hetero = DMatrix::zeros(p, p);
    let mut cross = DMatrix::zeros(p, p);
    for &(i, j) in &pairs {
        let (zij, zji) = (zrow(i, j), zrow(j, i));
        hetero += &zij * zij.transpose() * r[(i, j)].powi(2);
        cross += &zij * zji.transpose() * (r[(i, j)] * r[(j, i)]);
    }
    let middle = match method {
        Method::Hr => hetero,
        Method::Cr => main_i,
        Method::Tw => main_i + main_j - hetero,
        Method::Ctw => main_i + main_j + reverse - cross - hetero,
    };
    let v = symmetric(&bread * middle * &bread);
    Ok(if family.is_pim() {
        VarianceReport::from_pim(method, v[(0, 0)])
    } else {
        VarianceReport::from_lambda(method, v[(0, 0)], v[(1, 1)], v[(0, 1)])
    })
}

/// Literal evaluation of the per-unit average sandwiches, with the missing
/// residuals formed by hand.
pub fn dense_averaged_variance(
    ds: &ObservedDataset,
    spec: &ContrastSpec,
    adjustment: Adjustment,
    submodel: Submodel,
    method: Method,
    rule: MissingResidualRule,
) -> Result<VarianceReport> {
    if method == Method::Cr {
        return Err(Error::MethodMismatch { method: "CR".into(), family: "A".into() });
    }
    let (n, d) = (ds.n(), ds.dx());
    let a: &[u8] = ds.treatments();
    let opposite = |i: usize| (0..n).filter(move |&j| a[j] != a[i]);
    let m = |i: usize| opposite(i).count() as f64;
    let w = |i: usize, j: usize| spec.eval(ds.outcome(i), ds.outcome(j));
    let x = |i: usize, j: usize| DVector::from_fn(d, |k, _| ds.covariates(i)[k] - ds.covariates(j)[k]);

    let wrow: Vec<f64> = (0..n).map(|i| opposite(i).map(|j| w(i, j)).sum::<f64>() / m(i)).collect();
    let wcol: Vec<f64> = (0..n).map(|i| opposite(i).map(|j| w(j, i)).sum::<f64>() / m(i)).collect();
    let xrow: Vec<DVector<f64>> =
        (0..n).map(|i| opposite(i).fold(DVector::zeros(d), |acc, j| acc + x(i, j)) / m(i)).collect();
    let xcol: Vec<DVector<f64>> =
        (0..n).map(|i| opposite(i).fold(DVector::zeros(d), |acc, j| acc + x(j, i)) / m(i)).collect();

    // (first, second, first·x̄, second·x̄) per the displayed models.
    let design = |first: f64, second: f64, xb: &DVector<f64>| {
        let mut z = vec![first, second];
        match adjustment {
            Adjustment::None => {}
            Adjustment::Ancova => z.extend(xb.iter()),
            Adjustment::Interacted => {
                z.extend(xb.iter().map(|v| first * v));
                z.extend(xb.iter().map(|v| second * v));
            }
        }
        z
    };
    let af = |i: usize| f64::from(a[i]);
    let z1rows: Vec<Vec<f64>> = (0..n).map(|i| design(af(i), 1.0 - af(i), &xrow[i])).collect();
    let z2rows: Vec<Vec<f64>> = (0..n).map(|i| design(1.0 - af(i), af(i), &xcol[i])).collect();
    let p = z1rows[0].len();
    let z1 = DMatrix::from_fn(n, p, |i, c| z1rows[i][c]);
    let z2 = DMatrix::from_fn(n, p, |i, c| z2rows[i][c]);
    let (beta, _) = match submodel {
        Submodel::Row => dense_ols(&z1, &DVector::from_column_slice(&wrow))?,
        Submodel::Col => dense_ols(&z2, &DVector::from_column_slice(&wcol))?,
    };
    let b1 =
        (z1.transpose() * &z1).try_inverse().ok_or_else(|| Error::RankDeficient { columns: vec![], rcond: 0.0 })?;
    let b2 =
        (z2.transpose() * &z2).try_inverse().ok_or_else(|| Error::RankDeficient { columns: vec![], rcond: 0.0 })?;

    // λ(a, 1 − a) sits at index 0 for a = 1 and 1 for a = 0 in both submodels;
    // the γ blocks follow the same order.
    let lam = |arm: u8| if arm == 1 { beta[0] } else { beta[1] };
    let gam = |arm: u8| -> DVector<f64> {
        match adjustment {
            Adjustment::None => DVector::zeros(d),
            Adjustment::Ancova => beta.rows(2, d).into_owned(),
            Adjustment::Interacted => beta.rows(if arm == 1 { 2 } else { 2 + d }, d).into_owned(),
        }
    };
    let fit = |z: &[f64]| z.iter().zip(beta.iter()).map(|(u, b)| u * b).sum::<f64>();
    let row_res: Vec<f64> = (0..n)
        .map(|i| match (submodel, rule) {
            (Submodel::Row, _) | (Submodel::Col, MissingResidualRule::ArmConsistent) => wrow[i] - fit(&z1rows[i]),
            // 1_i(1 − a): the unit's arm is 1 − a, so a = 1 − A_i.
            (Submodel::Col, MissingResidualRule::Literal) => {
                let arm = 1 - a[i];
                wrow[i] - lam(arm) - xrow[i].dot(&gam(arm))
            }
        })
        .collect();
    let col_res: Vec<f64> = (0..n)
        .map(|i| match (submodel, rule) {
            (Submodel::Col, _) | (Submodel::Row, MissingResidualRule::ArmConsistent) => wcol[i] - fit(&z2rows[i]),
            // 1_i(a): the unit's arm is a.
            (Submodel::Row, MissingResidualRule::Literal) => {
                let arm = a[i];
                wcol[i] - lam(arm) - xcol[i].dot(&gam(arm))
            }
        })
        .collect();

    let outer = |zs: &DMatrix<f64>, zt: &DMatrix<f64>, f: &dyn Fn(usize) -> f64| {
        (0..n).fold(DMatrix::zeros(p, p), |acc, i| acc + zs.row(i).transpose() * zt.row(i) * f(i))
    };
    let v1 = &b1 * outer(&z1, &z1, &|i| row_res[i].powi(2)) * &b1;
    let v2 = &b2 * outer(&z2, &z2, &|i| col_res[i].powi(2)) * &b2;
    match method {
        Method::Hr => {
            let v = symmetric(if submodel == Submodel::Row { v1 } else { v2 });
            Ok(VarianceReport::from_lambda(method, v[(0, 0)], v[(1, 1)], v[(0, 1)]))
        }
        Method::Tw | Method::Ctw => {
            let cov = if method == Method::Ctw {
                let c12 = &b1 * outer(&z1, &z2, &|i| row_res[i] * col_res[i]) * &b2;
                let c21 = &b2 * outer(&z2, &z1, &|i| row_res[i] * col_res[i]) * &b1;
                c12[(0, 1)] + c21[(0, 1)]
            } else {
                0.0
            };
            Ok(VarianceReport::from_lambda(method, v1[(0, 0)] + v2[(0, 0)], v1[(1, 1)] + v2[(1, 1)], cov))
        }
        Method::Cr => unreachable!(),
    }
}

fn report_values(r: &VarianceReport) -> [Option<f64>; 4] {
    [r.se2_lambda10, r.se2_lambda01, r.cov_lambda, Some(r.se2_tau)]
}

/// Largest entrywise difference relative to the largest entry of the reference.
fn report_error(streamed: &VarianceReport, dense: &VarianceReport) -> f64 {
    let (s, d) = (report_values(streamed), report_values(dense));
    let scale = d.iter().chain(&s).flatten().fold(DENSE_SCALE_FLOOR, |m, v| m.max(v.abs()));
    s.iter().zip(&d).fold(0.0f64, |m, (a, b)| match (a, b) {
        (Some(a), Some(b)) => m.max(rel_error(*a, *b, scale)),
        (None, None) => m,
        _ => f64::INFINITY,
    })
}

// ---------------------------------------------------------------------------
// Suites

/// λ̂_A(none) ≡ λ̂_I(none) in both submodels, and τ̂_P ≡ τ̂_I.
pub fn equivalence_suite(seed: u64, datasets: usize) -> Result<SuiteOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = Tally::new("equivalence");
    for k in 0..datasets {
        let n = rng.random_range(6..=40);
        let d = [0, 1, 3][rng.random_range(0..3)];
        let (spec, coarse) =
            if rng.random_bool(0.5) { (ContrastSpec::WinHalfTie, true) } else { (ContrastSpec::Difference, false) };
        let ds = random_dataset(&mut rng, n, 1, d, coarse, 2)?;
        let ind = estimate_individual(&ds, &spec, Adjustment::None)?;
        for o in [Submodel::Row, Submodel::Col] {
            let avg = estimate_averaged(&ds, &spec, Adjustment::None, o)?;
            for (name, a, b) in
                [("lambda(1,0)", avg.lambda10(), ind.lambda10()), ("lambda(0,1)", avg.lambda01(), ind.lambda01())]
            {
                let (a, b) = (a.unwrap_or(f64::NAN), b.unwrap_or(f64::NAN));
                tally.check(
                    || format!("dataset {k}: A{} {name} {a} vs I {b}", o.index()),
                    rel_error(a, b, b.abs().max(1.0)),
                    EQUIVALENCE_TOL,
                );
            }
        }
        let pim = estimate(&ds, &spec, ModelFamily::P)?;
        let (tp, ti) = (crate::estimators::net_benefit(&pim), crate::estimators::net_benefit(&ind));
        tally.check(
            || format!("dataset {k}: tau P {tp} vs I {ti}"),
            rel_error(tp, ti, ti.abs().max(1.0)),
            EQUIVALENCE_TOL,
        );
    }
    Ok(tally.finish())
}

/// Exact unbiasedness of λ̂_I(a, 1 − a) over all complete randomizations.
pub fn enumeration_suite(seed: u64, populations: usize, n: usize, n1: usize) -> Result<SuiteOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = Tally::new("enumeration");
    for k in 0..populations {
        let (spec, coarse) = random_contrast(&mut rng);
        let pop = random_population(&mut rng, n, spec.dimension(), 0, coarse)?;
        for a in [1u8, 0] {
            let truth = true_lambda(&pop, &spec, a, EstimandForm::U)?;
            let dist = enumerate_assignments(&pop, n1, |ds| {
                let fit = estimate_individual(ds, &spec, Adjustment::None)?;
                Ok(if a == 1 { fit.lambda10() } else { fit.lambda01() }.unwrap_or(f64::NAN))
            })?;
            tally.check(
                || format!("population {k} ({spec:?}), a = {a}: mean {} vs truth {truth}", dist.mean),
                (dist.mean - truth).abs(),
                ENUMERATION_TOL,
            );
        }
    }
    Ok(tally.finish())
}

fn streamed_pair_report(
    ds: &ObservedDataset,
    spec: &ContrastSpec,
    family: ModelFamily,
    method: Method,
    mutation: Mutation,
) -> Result<VarianceReport> {
    let fit = estimate(ds, spec, family)?;
    let scores = PairScores::compute(ds, spec, &[&fit])?;
    let sign = if mutation == Mutation::FlipCorrectionSign { -1.0 } else { 1.0 };
    scores[0].report_signed(&fit, method, sign)
}

/// Streamed HR/CR/TW/CTW against the dense references, all applicable families.
pub fn dense_reference_suite(seed: u64, datasets: usize, mutation: Mutation) -> Result<SuiteOutcome> {
    const PAIR: [ModelFamily; 7] = [
        ModelFamily::IUn,
        ModelFamily::IAcv,
        ModelFamily::IAdj,
        ModelFamily::P,
        ModelFamily::PAcv,
        ModelFamily::PInt,
        ModelFamily::PAdj,
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = Tally::new("dense-reference");
    for k in 0..datasets {
        let n = rng.random_range(8..=12);
        let d = rng.random_range(1..=2);
        let (spec, coarse) = random_contrast(&mut rng);
        let ds = random_dataset(&mut rng, n, spec.dimension(), d, coarse, 3)?;
        for family in PAIR {
            for method in Method::ALL {
                let streamed = match streamed_pair_report(&ds, &spec, family, method, mutation) {
                    Ok(r) => r,
                    Err(Error::RankDeficient { .. }) => {
                        tally.skipped += 1;
                        continue;
                    }
                    Err(e) => return Err(e),
                };
                let dense = dense_pair_variance(&ds, &spec, family, method)?;
                tally.check(
                    || format!("dataset {k} {family} {method}: {streamed:?} vs {dense:?}"),
                    report_error(&streamed, &dense),
                    DENSE_TOL,
                );
            }
        }
        for adjustment in [Adjustment::None, Adjustment::Ancova, Adjustment::Interacted] {
            for submodel in [Submodel::Row, Submodel::Col] {
                let fit = match estimate_averaged(&ds, &spec, adjustment, submodel) {
                    Ok(f) => f,
                    Err(Error::RankDeficient { .. }) => {
                        tally.skipped += 1;
                        continue;
                    }
                    Err(e) => return Err(e),
                };
                for rule in [MissingResidualRule::ArmConsistent, MissingResidualRule::Literal] {
                    for method in Method::ALL {
                        let streamed = averaged_variance(&fit, &ds, &spec, method, rule);
                        let dense = dense_averaged_variance(&ds, &spec, adjustment, submodel, method, rule);
                        match (streamed, dense) {
                            (Ok(s), Ok(r)) => tally.check(
                                || format!("dataset {k} {} {method} {rule:?}: {s:?} vs {r:?}", fit.family),
                                report_error(&s, &r),
                                DENSE_TOL,
                            ),
                            (Err(Error::MethodMismatch { .. }), Err(Error::MethodMismatch { .. })) => {}
                            (Err(Error::RankDeficient { .. }), _) => tally.skipped += 1,
                            (s, r) => tally.fail(format!(
                                "dataset {k} {} {method} {rule:?}: streamed {s:?}, dense {r:?}",
                                fit.family
                            )),
                        }
                    }
                }
            }
        }
    }
    Ok(tally.finish())
}

/// The oracle identities for anti-symmetric contrasts.
pub fn proposition_suite(seed: u64, populations: usize) -> Result<SuiteOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = Tally::new("propositions");
    for k in 0..populations {
        let n = rng.random_range(8..=30);
        let d = rng.random_range(1..=2);
        let (spec, coarse) = match rng.random_range(0..3u8) {
            0 => (ContrastSpec::Difference, false),
            1 => (ContrastSpec::WinHalfTie, true),
            _ => (
                ContrastSpec::WeightedAggregate {
                    weights: vec![0.5, 0.5],
                    components: vec![ContrastSpec::WinHalfTie, ContrastSpec::Difference],
                },
                false,
            ),
        };
        let pop = random_population(&mut rng, n, spec.dimension(), d, coarse)?;
        let pi1 = rng.random_range(0.25..0.75);
        let vec_err = |a: &[f64], b: &[f64]| {
            let scale = a.iter().chain(b).fold(1e-300f64, |m, v| m.max(v.abs()));
            a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max(rel_error(*x, *y, scale)))
        };

        let adj = population_scores(&pop, &spec, ResidualKind::IAdj, pi1)?;
        tally.check(
            || format!("population {k}: gamma_I^adj(1,0) {:?} vs (0,1) {:?}", adj.gamma[0], adj.gamma[1]),
            vec_err(&adj.gamma[0], &adj.gamma[1]),
            PROPOSITION_TOL,
        );

        let eps = population_scores(&pop, &spec, ResidualKind::Eps, pi1)?;
        for a in [1u8, 0] {
            let pi_a = if a == 1 { pi1 } else { 1.0 - pi1 };
            let f = neyman_functionals(&eps, a, pi_a)?;
            let scale = f.v.abs().max(f.v_c.abs());
            tally.check(
                || format!("population {k}, a = {a}: CV {} vs -V {}", f.cv, -f.v),
                rel_error(f.cv, -f.v, scale),
                PROPOSITION_TOL,
            );
            tally.check(
                || format!("population {k}, a = {a}: V(tau) {} vs 4V {}", f.v_tau, 4.0 * f.v),
                rel_error(f.v_tau, 4.0 * f.v, 4.0 * scale),
                PROPOSITION_TOL,
            );
        }

        // Cross-submodel equalities at π₀ = π₁ = ½.
        let acv1 = population_scores(&pop, &spec, ResidualKind::AAcv(Submodel::Row), 0.5)?;
        let acv2 = population_scores(&pop, &spec, ResidualKind::AAcv(Submodel::Col), 0.5)?;
        tally.check(
            || format!("population {k}: gamma_A1^acv {:?} vs gamma_A2^acv {:?}", acv1.gamma[0], acv2.gamma[0]),
            vec_err(&acv1.gamma[0], &acv2.gamma[0]),
            PROPOSITION_TOL,
        );
        for a in [1u8, 0] {
            let f1 = neyman_functionals(&acv1, a, 0.5)?;
            let f2 = neyman_functionals(&acv2, 1 - a, 0.5)?;
            let scale = f1.v_c.abs().max(f2.v_c.abs());
            tally.check(
                || format!("population {k}, a = {a}: V A1 {} vs A2 {}", f1.v, f2.v),
                rel_error(f1.v, f2.v, scale),
                PROPOSITION_TOL,
            );
            tally.check(
                || format!("population {k}, a = {a}: CV A1 {} vs A2 {}", f1.cv, f2.cv),
                rel_error(f1.cv, f2.cv, scale),
                PROPOSITION_TOL,
            );
        }
        let adj1 = population_scores(&pop, &spec, ResidualKind::AAdj(Submodel::Row), 0.5)?;
        let adj2 = population_scores(&pop, &spec, ResidualKind::AAdj(Submodel::Col), 0.5)?;
        for (o1, o2) in [(0, 1), (1, 0)] {
            tally.check(
                || {
                    format!(
                        "population {k}: gamma_A1^adj[{o1}] {:?} vs gamma_A2^adj[{o2}] {:?}",
                        adj1.gamma[o1], adj2.gamma[o2]
                    )
                },
                vec_err(&adj1.gamma[o1], &adj2.gamma[o2]),
                PROPOSITION_TOL,
            );
        }
    }
    Ok(tally.finish())
}

/// `|λ_V − λ_U| ≤ 2·max|w| / N`.
pub fn estimand_gap_suite(seed: u64, populations: usize) -> Result<SuiteOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = Tally::new("estimand-gap");
    for k in 0..populations {
        let n = rng.random_range(10..=200);
        let (spec, coarse) = random_contrast(&mut rng);
        let pop = random_population(&mut rng, n, spec.dimension(), 0, coarse)?;
        for a in [1u8, 0] {
            let gap =
                (true_lambda(&pop, &spec, a, EstimandForm::V)? - true_lambda(&pop, &spec, a, EstimandForm::U)?).abs();
            let wmax = (0..n)
                .flat_map(|i| (0..n).map(move |j| (i, j)))
                .map(|(i, j)| spec.eval(pop.outcome(i, a), pop.outcome(j, 1 - a)).abs())
                .fold(0.0f64, f64::max);
            let bound = 2.0 * wmax / n as f64;
            // Reported error is the gap as a fraction of the bound; the check passes at ≤ 1.
            tally.check(
                || format!("population {k}, N = {n}, a = {a}: gap {gap:e} vs bound {bound:e}"),
                if bound > 0.0 { gap / bound } else { gap },
                1.0,
            );
        }
    }
    Ok(tally.finish())
}

/// Every suite at its default size.
pub fn run_all(seed: u64) -> Result<Vec<SuiteOutcome>> {
    Ok(vec![
        equivalence_suite(seed, 100)?,
        enumeration_suite(seed.wrapping_add(1), 20, 8, 4)?,
        dense_reference_suite(seed.wrapping_add(2), 50, Mutation::None)?,
        proposition_suite(seed.wrapping_add(3), 50)?,
        estimand_gap_suite(seed.wrapping_add(4), 100)?,
    ])
}
