//! Pairwise regression estimators.
//!
//! Every pair-based design row factors as `Z_ij = B(A_i, A_j) · u_ij` with
//! `u_ij = (1, X_i − X_j)`. Accumulating Gram and moment sums of `u` per
//! treatment pattern therefore serves all individual-pair and PIM designs
//! from a single sweep over the pairs.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contrasts::ContrastSpec;
use crate::error::{Error, Result};
use crate::lsq::{Coefficients, GramAccumulator};
use crate::pairs::{per_unit_averages, AveragedDataset, ObservedDataset, PairTerm, ROW_CHUNK};
use crate::variance::{Method, VarianceReport};

/// Tie window for the submodel selection rule.
pub const SELECT_TIE_TOL: f64 = 1e-15;

/// Treatment pattern of an ordered pair, indexed as (1,0), (0,1), (1,1), (0,0).
#[inline]
pub(crate) fn pair_type(a_i: u8, a_j: u8) -> usize {
    match (a_i, a_j) {
        (1, 0) => 0,
        (0, 1) => 1,
        (1, 1) => 2,
        _ => 3,
    }
}

/// Pattern of the reversed pair.
pub(crate) const SWAPPED: [usize; 4] = [1, 0, 2, 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Adjustment {
    None,
    Ancova,
    Interacted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Submodel {
    /// Row averages `W̄_{i,·}` on `(A_i, 1 − A_i, …)`.
    Row,
    /// Column averages `W̄_{·,i}` on `(1 − A_i, A_i, …)`.
    Col,
}

impl Submodel {
    pub fn index(self) -> u8 {
        match self {
            Submodel::Row => 1,
            Submodel::Col => 2,
        }
    }

    pub fn from_index(o: u8) -> Result<Self> {
        match o {
            1 => Ok(Submodel::Row),
            2 => Ok(Submodel::Col),
            _ => Err(Error::Input(format!("submodel must be 1 or 2, got {o}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelFamily {
    IUn,
    IAcv,
    IAdj,
    AUn,
    AAcv(Submodel),
    AAdj(Submodel),
    P,
    PAcv,
    PInt,
    PAdj,
}

impl ModelFamily {
    pub fn is_pim(self) -> bool {
        matches!(self, ModelFamily::P | ModelFamily::PAcv | ModelFamily::PInt | ModelFamily::PAdj)
    }

    pub fn is_averaged(self) -> bool {
        matches!(self, ModelFamily::AUn | ModelFamily::AAcv(_) | ModelFamily::AAdj(_))
    }

    pub fn adjustment(self) -> Adjustment {
        match self {
            ModelFamily::IUn | ModelFamily::AUn | ModelFamily::P => Adjustment::None,
            ModelFamily::IAcv | ModelFamily::AAcv(_) | ModelFamily::PAcv => Adjustment::Ancova,
            ModelFamily::IAdj | ModelFamily::AAdj(_) | ModelFamily::PInt => Adjustment::Interacted,
            // D, X and D·X: both blocks present.
            ModelFamily::PAdj => Adjustment::Interacted,
        }
    }

    /// Short name used in reports, e.g. `I-adj`, `A1-acv`, `P-int`.
    pub fn name(self) -> String {
        match self {
            ModelFamily::IUn => "I-un".into(),
            ModelFamily::IAcv => "I-acv".into(),
            ModelFamily::IAdj => "I-adj".into(),
            ModelFamily::AUn => "A-un".into(),
            ModelFamily::AAcv(o) => format!("A{}-acv", o.index()),
            ModelFamily::AAdj(o) => format!("A{}-adj", o.index()),
            ModelFamily::P => "P".into(),
            ModelFamily::PAcv => "P-acv".into(),
            ModelFamily::PInt => "P-int".into(),
            ModelFamily::PAdj => "P-adj".into(),
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        let f = match name {
            "I-un" => ModelFamily::IUn,
            "I-acv" => ModelFamily::IAcv,
            "I-adj" => ModelFamily::IAdj,
            "A-un" => ModelFamily::AUn,
            "A1-acv" => ModelFamily::AAcv(Submodel::Row),
            "A2-acv" => ModelFamily::AAcv(Submodel::Col),
            "A1-adj" => ModelFamily::AAdj(Submodel::Row),
            "A2-adj" => ModelFamily::AAdj(Submodel::Col),
            "P" => ModelFamily::P,
            "P-acv" => ModelFamily::PAcv,
            "P-int" => ModelFamily::PInt,
            "P-adj" => ModelFamily::PAdj,
            other => return Err(Error::Config(format!("unknown estimator {other:?}"))),
        };
        Ok(f)
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Estimand {
    Lambda10,
    Lambda01,
    Tau,
}

impl Estimand {
    pub const ALL: [Estimand; 3] = [Estimand::Lambda10, Estimand::Lambda01, Estimand::Tau];

    pub fn name(self) -> &'static str {
        match self {
            Estimand::Lambda10 => "lambda(1,0)",
            Estimand::Lambda01 => "lambda(0,1)",
            Estimand::Tau => "tau(1)",
        }
    }
}

impl fmt::Display for Estimand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Where the estimands live in the coefficient vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimateMap {
    Lambda { lambda10: usize, lambda01: usize },
    PimSlope(usize),
}

/// Fitted covariate coefficients for one arm orientation (or shared).
#[derive(Debug, Clone, PartialEq)]
pub struct GammaBlock {
    pub label: String,
    pub values: Vec<f64>,
}

/// Pair design as four `p × (1 + d)` maps, one per treatment pattern.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct PairDesign {
    pub p: usize,
    pub d: usize,
    pub blocks: [DMatrix<f64>; 4],
    pub active: [bool; 4],
}

impl PairDesign {
    pub fn new(family: ModelFamily, d: usize) -> Result<Self> {
        let p = match family {
            ModelFamily::IUn => 2,
            ModelFamily::IAcv => 2 + d,
            ModelFamily::IAdj => 2 + 2 * d,
            ModelFamily::P => 1,
            ModelFamily::PAcv | ModelFamily::PInt => 1 + d,
            ModelFamily::PAdj => 1 + 2 * d,
            other => return Err(Error::Input(format!("{other} is not a pair design"))),
        };
        if family.adjustment() != Adjustment::None && d == 0 {
            return Err(Error::Input(format!("{family} needs at least one covariate")));
        }
        let mut b: [DMatrix<f64>; 4] = std::array::from_fn(|_| DMatrix::zeros(p, 1 + d));
        let (t10, t01, t11, t00) = (0, 1, 2, 3);
        match family {
            ModelFamily::IUn | ModelFamily::IAcv | ModelFamily::IAdj => {
                b[t10][(0, 0)] = 1.0;
                b[t01][(1, 0)] = 1.0;
                for k in 0..d {
                    if family == ModelFamily::IAcv {
                        for t in [t10, t01, t11, t00] {
                            b[t][(2 + k, 1 + k)] = 1.0;
                        }
                    } else if family == ModelFamily::IAdj {
                        b[t10][(2 + k, 1 + k)] = 1.0;
                        b[t01][(2 + d + k, 1 + k)] = 1.0;
                    }
                }
            }
            _ => {
                b[t10][(0, 0)] = 1.0;
                b[t01][(0, 0)] = -1.0;
                for k in 0..d {
                    match family {
                        ModelFamily::PAcv => {
                            for t in [t10, t01, t11, t00] {
                                b[t][(1 + k, 1 + k)] = 1.0;
                            }
                        }
                        ModelFamily::PInt => {
                            b[t10][(1 + k, 1 + k)] = 1.0;
                            b[t01][(1 + k, 1 + k)] = -1.0;
                        }
                        ModelFamily::PAdj => {
                            for t in [t10, t01, t11, t00] {
                                b[t][(1 + k, 1 + k)] = 1.0;
                            }
                            b[t10][(1 + d + k, 1 + k)] = 1.0;
                            b[t01][(1 + d + k, 1 + k)] = -1.0;
                        }
                        _ => {}
                    }
                }
            }
        }
        let active = std::array::from_fn(|t| b[t].iter().any(|&v| v != 0.0));
        Ok(Self { p, d, blocks: b, active })
    }

    /// `Z_ij` for a pair with pattern `t` and covariate difference `x`.
    pub fn row(&self, t: usize, x: &[f64]) -> Vec<f64> {
        let b = &self.blocks[t];
        (0..self.p).map(|r| b[(r, 0)] + (0..self.d).map(|k| b[(r, 1 + k)] * x[k]).sum::<f64>()).collect()
    }

    /// `b_t = B_tᵀ β`, so that the fitted value is `u_ijᵀ b_t`.
    pub fn projected(&self, beta: &[f64]) -> [Vec<f64>; 4] {
        let beta = DVector::from_column_slice(beta);
        std::array::from_fn(|t| (self.blocks[t].transpose() * &beta).iter().copied().collect())
    }

    pub fn needs_concordant(&self) -> bool {
        self.active[2] || self.active[3]
    }
}

pub(crate) fn pair_labels(family: ModelFamily, names: &[String]) -> Vec<String> {
    let xs = |prefix: &str| names.iter().map(|n| format!("{prefix}X_ij:{n}")).collect::<Vec<_>>();
    let mut out = Vec::new();
    match family {
        ModelFamily::IUn | ModelFamily::IAcv | ModelFamily::IAdj => {
            out.push("A_i(1-A_j)".to_string());
            out.push("(1-A_i)A_j".to_string());
            match family {
                ModelFamily::IAcv => out.extend(xs("")),
                ModelFamily::IAdj => {
                    out.extend(xs("A_i(1-A_j)*"));
                    out.extend(xs("(1-A_i)A_j*"));
                }
                _ => {}
            }
        }
        _ => {
            out.push("D_ij".to_string());
            match family {
                ModelFamily::PAcv => out.extend(xs("")),
                ModelFamily::PInt => out.extend(xs("D_ij*")),
                ModelFamily::PAdj => {
                    out.extend(xs(""));
                    out.extend(xs("D_ij*"));
                }
                _ => {}
            }
        }
    }
    out
}

/// Per-pattern sums of `u uᵀ` and `u·W` over ordered pairs.
#[derive(Debug, Clone)]
pub(crate) struct PairMoments {
    pub count: [u64; 4],
    pub gram: [DMatrix<f64>; 4],
    pub moment: [DVector<f64>; 4],
    pub concordant: bool,
}

impl PairMoments {
    fn zeros(d: usize, concordant: bool) -> Self {
        Self {
            count: [0; 4],
            gram: std::array::from_fn(|_| DMatrix::zeros(1 + d, 1 + d)),
            moment: std::array::from_fn(|_| DVector::zeros(1 + d)),
            concordant,
        }
    }

    fn merge(&mut self, other: &Self) {
        for t in 0..4 {
            self.count[t] += other.count[t];
            self.gram[t] += &other.gram[t];
            self.moment[t] += &other.moment[t];
        }
    }

    /// One sweep over ordered pairs; concordant pairs only when requested.
    pub fn compute(ds: &ObservedDataset, spec: &ContrastSpec, concordant: bool) -> Self {
        let (n, d) = (ds.n(), ds.dx());
        let chunks: Vec<PairMoments> = (0..n.div_ceil(ROW_CHUNK))
            .into_par_iter()
            .map(|c| {
                let mut acc = PairMoments::zeros(d, concordant);
                let mut u = vec![0.0; 1 + d];
                u[0] = 1.0;
                for i in c * ROW_CHUNK..((c + 1) * ROW_CHUNK).min(n) {
                    let (a_i, x_i) = (ds.treatment(i), ds.covariates(i));
                    for j in 0..n {
                        let a_j = ds.treatment(j);
                        if j == i || (!concordant && a_i == a_j) {
                            continue;
                        }
                        let t = pair_type(a_i, a_j);
                        let x_j = ds.covariates(j);
                        for k in 0..d {
                            u[1 + k] = x_i[k] - x_j[k];
                        }
                        let w = ds.contrast(spec, i, j);
                        acc.count[t] += 1;
                        let (g, m) = (&mut acc.gram[t], &mut acc.moment[t]);
                        for r in 0..=d {
                            m[r] += u[r] * w;
                            for s in 0..=r {
                                g[(r, s)] += u[r] * u[s];
                            }
                        }
                    }
                }
                acc
            })
            .collect();
        let mut out = PairMoments::zeros(d, concordant);
        for c in &chunks {
            out.merge(c);
        }
        for g in out.gram.iter_mut() {
            g.fill_upper_triangle_with_lower_triangle();
        }
        out
    }

    fn accumulator(&self, design: &PairDesign) -> GramAccumulator {
        let mut acc = GramAccumulator::new(design.p);
        for t in (0..4).filter(|&t| design.active[t]) {
            let b = &design.blocks[t];
            acc.add_sums(&(b * &self.gram[t] * b.transpose()), &(b * &self.moment[t]), self.count[t]);
        }
        acc
    }
}

#[derive(Debug, Clone)]
pub(crate) enum DesignKind {
    Pair(PairDesign),
    Averaged { submodel: Submodel, adjustment: Adjustment },
}

/// Coefficients of one fitted family plus what is needed to form residuals.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub family: ModelFamily,
    pub coefficients: Coefficients,
    pub estimate_map: EstimateMap,
    pub gamma_hat: Vec<GammaBlock>,
    pub(crate) design: DesignKind,
    pub(crate) gram: DMatrix<f64>,
}

impl FitResult {
    pub fn submodel(&self) -> Option<Submodel> {
        match &self.design {
            DesignKind::Averaged { submodel, .. } => Some(*submodel),
            DesignKind::Pair(_) => None,
        }
    }

    pub fn lambda10(&self) -> Option<f64> {
        match self.estimate_map {
            EstimateMap::Lambda { lambda10, .. } => Some(self.coefficients.beta[lambda10]),
            EstimateMap::PimSlope(_) => None,
        }
    }

    pub fn lambda01(&self) -> Option<f64> {
        match self.estimate_map {
            EstimateMap::Lambda { lambda01, .. } => Some(self.coefficients.beta[lambda01]),
            EstimateMap::PimSlope(_) => None,
        }
    }

    pub fn estimate(&self, e: Estimand) -> Option<f64> {
        match e {
            Estimand::Lambda10 => self.lambda10(),
            Estimand::Lambda01 => self.lambda01(),
            Estimand::Tau => Some(net_benefit(self)),
        }
    }

    /// Fitted residual of a pair term (pair-based families only).
    pub fn residual_pair(&self, term: &PairTerm) -> Option<f64> {
        match &self.design {
            DesignKind::Pair(design) => {
                let z = design.row(pair_type(term.a_i, term.a_j), &term.x);
                Some(self.coefficients.residual(&z, term.w))
            }
            DesignKind::Averaged { .. } => None,
        }
    }

    /// Fitted residual of unit `i` in its own submodel (averaged families only).
    pub fn residual_unit(&self, avg: &AveragedDataset, i: usize) -> Option<f64> {
        match &self.design {
            DesignKind::Averaged { submodel, adjustment, .. } => {
                let (z, w) = averaged_row(avg, i, *submodel, *adjustment);
                Some(self.coefficients.residual(&z, w))
            }
            DesignKind::Pair(_) => None,
        }
    }
}

pub(crate) fn fit_pair_family(ds: &ObservedDataset, family: ModelFamily, moments: &PairMoments) -> Result<FitResult> {
    let design = PairDesign::new(family, ds.dx())?;
    if design.needs_concordant() && !moments.concordant {
        return Err(Error::Input(format!("{family} needs concordant pairs in the moment sweep")));
    }
    let labels = pair_labels(family, ds.covariate_names());
    let acc = moments.accumulator(&design);
    let coefficients = acc.solve(&labels)?;
    let d = ds.dx();
    let beta = &coefficients.beta;
    let block = |label: &str, from: usize| GammaBlock { label: label.into(), values: beta[from..from + d].to_vec() };
    let (estimate_map, gamma_hat) = match family {
        ModelFamily::IUn => (EstimateMap::Lambda { lambda10: 0, lambda01: 1 }, vec![]),
        ModelFamily::IAcv => (EstimateMap::Lambda { lambda10: 0, lambda01: 1 }, vec![block("shared", 2)]),
        ModelFamily::IAdj => {
            (EstimateMap::Lambda { lambda10: 0, lambda01: 1 }, vec![block("(1,0)", 2), block("(0,1)", 2 + d)])
        }
        ModelFamily::P => (EstimateMap::PimSlope(0), vec![]),
        ModelFamily::PAcv => (EstimateMap::PimSlope(0), vec![block("X", 1)]),
        ModelFamily::PInt => (EstimateMap::PimSlope(0), vec![block("D*X", 1)]),
        _ => (EstimateMap::PimSlope(0), vec![block("X", 1), block("D*X", 1 + d)]),
    };
    Ok(FitResult { family, coefficients, estimate_map, gamma_hat, gram: acc.gram(), design: DesignKind::Pair(design) })
}

fn adjustment_family(adjustment: Adjustment, pim: bool) -> ModelFamily {
    match (adjustment, pim) {
        (Adjustment::None, false) => ModelFamily::IUn,
        (Adjustment::Ancova, false) => ModelFamily::IAcv,
        (Adjustment::Interacted, false) => ModelFamily::IAdj,
        (Adjustment::None, true) => ModelFamily::P,
        (Adjustment::Ancova, true) => ModelFamily::PAcv,
        (Adjustment::Interacted, true) => ModelFamily::PInt,
    }
}

/// Regression on individual pairs with the chosen covariate adjustment.
pub fn estimate_individual(ds: &ObservedDataset, spec: &ContrastSpec, adjustment: Adjustment) -> Result<FitResult> {
    ds.check_contrast(spec)?;
    let family = adjustment_family(adjustment, false);
    let moments = PairMoments::compute(ds, spec, family == ModelFamily::IAcv);
    fit_pair_family(ds, family, &moments)
}

/// Probabilistic index regression on all ordered pairs.
pub fn estimate_pim(ds: &ObservedDataset, spec: &ContrastSpec, family: ModelFamily) -> Result<FitResult> {
    ds.check_contrast(spec)?;
    if !family.is_pim() {
        return Err(Error::Input(format!("{family} is not a PIM specification")));
    }
    let concordant = matches!(family, ModelFamily::PAcv | ModelFamily::PAdj);
    let moments = PairMoments::compute(ds, spec, concordant);
    fit_pair_family(ds, family, &moments)
}

/// Design row and response of unit `i` in the given submodel.
pub(crate) fn averaged_row(avg: &AveragedDataset, i: usize, o: Submodel, adj: Adjustment) -> (Vec<f64>, f64) {
    match o {
        Submodel::Row => (averaged_design(avg.treatment[i], avg.xbar_row(i), adj), avg.wbar_row[i]),
        Submodel::Col => (averaged_design(1 - avg.treatment[i], avg.xbar_col(i), adj), avg.wbar_col[i]),
    }
}

/// `(a, 1 − a[, x̄ | a·x̄, (1 − a)·x̄])`.
pub(crate) fn averaged_design(a: u8, xbar: &[f64], adj: Adjustment) -> Vec<f64> {
    let a = f64::from(a);
    let mut z = vec![a, 1.0 - a];
    match adj {
        Adjustment::None => {}
        Adjustment::Ancova => z.extend_from_slice(xbar),
        Adjustment::Interacted => {
            z.extend(xbar.iter().map(|x| a * x));
            z.extend(xbar.iter().map(|x| (1.0 - a) * x));
        }
    }
    z
}

pub(crate) fn averaged_labels(o: Submodel, adj: Adjustment, names: &[String]) -> Vec<String> {
    let (first, second, xbar) = match o {
        Submodel::Row => ("A_i", "1-A_i", "Xbar_row"),
        Submodel::Col => ("1-A_i", "A_i", "Xbar_col"),
    };
    let mut out = vec![first.to_string(), second.to_string()];
    match adj {
        Adjustment::None => {}
        Adjustment::Ancova => out.extend(names.iter().map(|n| format!("{xbar}:{n}"))),
        Adjustment::Interacted => {
            out.extend(names.iter().map(|n| format!("{first}*{xbar}:{n}")));
            out.extend(names.iter().map(|n| format!("{second}*{xbar}:{n}")));
        }
    }
    out
}

pub(crate) fn fit_averaged(
    ds: &ObservedDataset,
    avg: &AveragedDataset,
    adjustment: Adjustment,
    submodel: Submodel,
) -> Result<FitResult> {
    if ds.n0() < 2 || ds.n1() < 2 {
        return Err(Error::Precondition("per-unit average models need at least two units per arm".into()));
    }
    let d = avg.dx();
    if adjustment != Adjustment::None && d == 0 {
        return Err(Error::Input("covariate-adjusted averages need at least one covariate".into()));
    }
    let p = match adjustment {
        Adjustment::None => 2,
        Adjustment::Ancova => 2 + d,
        Adjustment::Interacted => 2 + 2 * d,
    };
    let mut acc = GramAccumulator::new(p);
    for i in 0..avg.n() {
        let (z, w) = averaged_row(avg, i, submodel, adjustment);
        acc.push(&z, w);
    }
    let labels = averaged_labels(submodel, adjustment, ds.covariate_names());
    let coefficients = acc.solve(&labels)?;
    let beta = &coefficients.beta;
    let block = |label: &str, from: usize| GammaBlock { label: label.into(), values: beta[from..from + d].to_vec() };
    let (family, gamma_hat) = match adjustment {
        Adjustment::None => (ModelFamily::AUn, vec![]),
        Adjustment::Ancova => (ModelFamily::AAcv(submodel), vec![block("shared", 2)]),
        Adjustment::Interacted => (ModelFamily::AAdj(submodel), vec![block("(1,0)", 2), block("(0,1)", 2 + d)]),
    };
    Ok(FitResult {
        family,
        coefficients,
        estimate_map: EstimateMap::Lambda { lambda10: 0, lambda01: 1 },
        gamma_hat,
        gram: acc.gram(),
        design: DesignKind::Averaged { submodel, adjustment },
    })
}

/// Regression on per-unit pair averages (one submodel).
pub fn estimate_averaged(
    ds: &ObservedDataset,
    spec: &ContrastSpec,
    adjustment: Adjustment,
    submodel: Submodel,
) -> Result<FitResult> {
    let avg = per_unit_averages(ds, spec)?;
    fit_averaged(ds, &avg, adjustment, submodel)
}

/// Fits any family by name.
pub fn estimate(ds: &ObservedDataset, spec: &ContrastSpec, family: ModelFamily) -> Result<FitResult> {
    match family {
        ModelFamily::IUn => estimate_individual(ds, spec, Adjustment::None),
        ModelFamily::IAcv => estimate_individual(ds, spec, Adjustment::Ancova),
        ModelFamily::IAdj => estimate_individual(ds, spec, Adjustment::Interacted),
        ModelFamily::AUn => estimate_averaged(ds, spec, Adjustment::None, Submodel::Row),
        ModelFamily::AAcv(o) => estimate_averaged(ds, spec, Adjustment::Ancova, o),
        ModelFamily::AAdj(o) => estimate_averaged(ds, spec, Adjustment::Interacted, o),
        pim => estimate_pim(ds, spec, pim),
    }
}

/// `τ̂(1) = λ̂(1,0) − λ̂(0,1)`, or twice the PIM slope.
pub fn net_benefit(fit: &FitResult) -> f64 {
    match fit.estimate_map {
        EstimateMap::Lambda { lambda10, lambda01 } => fit.coefficients.beta[lambda10] - fit.coefficients.beta[lambda01],
        EstimateMap::PimSlope(k) => 2.0 * fit.coefficients.beta[k],
    }
}

/// Picks the submodel whose CTW variance for `target` is smaller; ties go to submodel 1.
pub fn select_submodel<'a>(
    first: (&'a FitResult, Option<&VarianceReport>),
    second: (&'a FitResult, Option<&VarianceReport>),
    target: Estimand,
) -> Result<&'a FitResult> {
    let se2 = |(fit, report): (&FitResult, Option<&VarianceReport>)| -> Result<f64> {
        let report = report.ok_or_else(|| Error::Input(format!("{} has no variance report", fit.family)))?;
        if report.method != Method::Ctw {
            return Err(Error::Input(format!("submodel selection needs CTW, got {}", report.method)));
        }
        report.se2(target).ok_or_else(|| Error::Input(format!("{} report lacks {}", fit.family, target)))
    };
    let (v1, v2) = (se2(first)?, se2(second)?);
    if first.0.submodel() != Some(Submodel::Row) || second.0.submodel() != Some(Submodel::Col) {
        return Err(Error::Input("selection expects submodel 1 then submodel 2".into()));
    }
    if v2 < v1 - SELECT_TIE_TOL {
        Ok(second.0)
    } else {
        Ok(first.0)
    }
}
