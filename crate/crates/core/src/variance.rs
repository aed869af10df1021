//! Sandwich variance estimators for the pairwise regression estimators.
//!
//! All pair-based families share one residual sweep: per unit we keep the row
//! and column score sums `S_row(i) = Σ_j Z_ij r_ij`, `S_col(i) = Σ_j Z_ji r_ji`,
//! and per treatment pattern the pairwise products needed by the correction
//! terms, all in the covariate-difference space `u = (1, X_ij)`.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::contrasts::ContrastSpec;
use crate::error::{Error, Result};
use crate::estimators::{
    averaged_design, pair_type, DesignKind, Estimand, EstimateMap, FitResult, PairDesign, Submodel, SWAPPED,
};
use crate::lsq::SpdFactor;
use crate::pairs::{per_unit_averages, AveragedDataset, ObservedDataset, ROW_CHUNK};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Method {
    Hr,
    Cr,
    Tw,
    Ctw,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Hr, Method::Cr, Method::Tw, Method::Ctw];

    pub fn name(self) -> &'static str {
        match self {
            Method::Hr => "HR",
            Method::Cr => "CR",
            Method::Tw => "TW",
            Method::Ctw => "CTW",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "HR" => Ok(Method::Hr),
            "CR" => Ok(Method::Cr),
            "TW" => Ok(Method::Tw),
            "CTW" => Ok(Method::Ctw),
            _ => Err(Error::Config(format!("unknown variance method {s:?}"))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How the opposite-orientation residuals of a per-unit average submodel are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingResidualRule {
    /// Subtract the coefficient block whose estimand the missing average measures.
    #[default]
    ArmConsistent,
    /// Subtract the block indexed by the unit's own arm, as the formulas are typeset.
    Literal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    pub method: Method,
    pub se2_lambda10: Option<f64>,
    pub se2_lambda01: Option<f64>,
    pub cov_lambda: Option<f64>,
    pub se2_tau: f64,
    /// Set when a negative variance estimate was clipped to zero.
    pub clipped: bool,
}

impl VarianceReport {
    pub fn se2(&self, e: Estimand) -> Option<f64> {
        match e {
            Estimand::Lambda10 => self.se2_lambda10,
            Estimand::Lambda01 => self.se2_lambda01,
            Estimand::Tau => Some(self.se2_tau),
        }
    }

    pub fn se(&self, e: Estimand) -> Option<f64> {
        self.se2(e).map(f64::sqrt)
    }

    pub(crate) fn from_lambda(method: Method, v10: f64, v01: f64, cov: f64) -> Self {
        let tau = v10 + v01 - 2.0 * cov;
        let clipped = v10 < 0.0 || v01 < 0.0 || tau < 0.0;
        Self {
            method,
            se2_lambda10: Some(v10.max(0.0)),
            se2_lambda01: Some(v01.max(0.0)),
            cov_lambda: Some(cov),
            se2_tau: tau.max(0.0),
            clipped,
        }
    }

    pub(crate) fn from_pim(method: Method, slope_var: f64) -> Self {
        // τ̂ = 2β̂, so its variance is four times the slope variance.
        let tau = 4.0 * slope_var;
        Self {
            method,
            se2_lambda10: None,
            se2_lambda01: None,
            cov_lambda: None,
            se2_tau: tau.max(0.0),
            clipped: tau < 0.0,
        }
    }

    fn from_sandwich(fit: &FitResult, method: Method, v: &DMatrix<f64>) -> Self {
        match fit.estimate_map {
            EstimateMap::Lambda { lambda10, lambda01 } => {
                Self::from_lambda(method, v[(lambda10, lambda10)], v[(lambda01, lambda01)], v[(lambda10, lambda01)])
            }
            EstimateMap::PimSlope(k) => Self::from_pim(method, v[(k, k)]),
        }
    }
}

/// Per-unit scores and pairwise corrections of one pair-based fit.
#[derive(Debug, Clone)]
pub(crate) struct PairScores {
    pub s_row: Vec<DVector<f64>>,
    pub s_col: Vec<DVector<f64>>,
    /// `Σ_{i≠j} Z_ij Z_jiᵀ r_ij r_ji`.
    pub corr_k: DMatrix<f64>,
    /// `Σ_{i≠j} Z_ij Z_ijᵀ r_ij²`.
    pub corr_h: DMatrix<f64>,
}

/// Pattern-level sums in `u` space: `ρ = r_ij r_ji` for K, `r_ij²` for H.
#[derive(Debug, Clone)]
struct PatternSums {
    k0: f64,
    kx: Vec<f64>,
    kxx: Vec<f64>,
    h0: f64,
    hx: Vec<f64>,
    hxx: Vec<f64>,
}

impl PatternSums {
    fn zeros(d: usize) -> Self {
        Self { k0: 0.0, kx: vec![0.0; d], kxx: vec![0.0; d * d], h0: 0.0, hx: vec![0.0; d], hxx: vec![0.0; d * d] }
    }

    fn merge(&mut self, o: &Self) {
        self.k0 += o.k0;
        self.h0 += o.h0;
        for (a, b) in self.kx.iter_mut().zip(&o.kx).chain(self.hx.iter_mut().zip(&o.hx)) {
            *a += b;
        }
        for (a, b) in self.kxx.iter_mut().zip(&o.kxx).chain(self.hxx.iter_mut().zip(&o.hxx)) {
            *a += b;
        }
    }

    /// `Σ u_ij u_jiᵀ ρ` with `u_ji = (1, −x)`.
    fn k_matrix(&self, d: usize) -> DMatrix<f64> {
        DMatrix::from_fn(1 + d, 1 + d, |r, s| match (r, s) {
            (0, 0) => self.k0,
            (0, s) => -self.kx[s - 1],
            (r, 0) => self.kx[r - 1],
            (r, s) => -self.kxx[(r - 1).max(s - 1) * d + (r - 1).min(s - 1)],
        })
    }

    fn h_matrix(&self, d: usize) -> DMatrix<f64> {
        DMatrix::from_fn(1 + d, 1 + d, |r, s| match (r, s) {
            (0, 0) => self.h0,
            (0, s) => self.hx[s - 1],
            (r, 0) => self.hx[r - 1],
            (r, s) => self.hxx[(r - 1).max(s - 1) * d + (r - 1).min(s - 1)],
        })
    }
}

struct ChunkScores {
    s_row: Vec<Vec<DVector<f64>>>,
    s_col: Vec<Vec<DVector<f64>>>,
    sums: Vec<[PatternSums; 4]>,
}

fn pair_design(fit: &FitResult) -> Result<&PairDesign> {
    match &fit.design {
        DesignKind::Pair(d) => Ok(d),
        DesignKind::Averaged { .. } => Err(Error::Input(format!("{} is not a pair-based fit", fit.family))),
    }
}

impl PairScores {
    /// Residual sweep for several fits on the same dataset and contrast.
    pub fn compute(ds: &ObservedDataset, spec: &ContrastSpec, fits: &[&FitResult]) -> Result<Vec<PairScores>> {
        let designs: Vec<&PairDesign> = fits.iter().map(|f| pair_design(f)).collect::<Result<_>>()?;
        let proj: Vec<[Vec<f64>; 4]> =
            designs.iter().zip(fits).map(|(d, f)| d.projected(&f.coefficients.beta)).collect();
        let concordant = designs.iter().any(|d| d.needs_concordant());
        let (n, d, m) = (ds.n(), ds.dx(), designs.len());

        let chunks: Vec<ChunkScores> = (0..n.div_ceil(ROW_CHUNK))
            .into_par_iter()
            .map(|c| {
                let rows = c * ROW_CHUNK..((c + 1) * ROW_CHUNK).min(n);
                let mut out = ChunkScores {
                    s_row: vec![Vec::with_capacity(rows.len()); m],
                    s_col: vec![Vec::with_capacity(rows.len()); m],
                    sums: (0..m).map(|_| std::array::from_fn(|_| PatternSums::zeros(d))).collect(),
                };
                let mut x = vec![0.0; d];
                for i in rows {
                    let (a_i, x_i) = (ds.treatment(i), ds.covariates(i));
                    // [design][arm of j] in u space
                    let mut sr = vec![[vec![0.0; 1 + d], vec![0.0; 1 + d]]; m];
                    let mut sc = vec![[vec![0.0; 1 + d], vec![0.0; 1 + d]]; m];
                    for j in 0..n {
                        let a_j = ds.treatment(j);
                        if j == i || (!concordant && a_i == a_j) {
                            continue;
                        }
                        let (t, tb) = (pair_type(a_i, a_j), SWAPPED[pair_type(a_i, a_j)]);
                        let x_j = ds.covariates(j);
                        for k in 0..d {
                            x[k] = x_i[k] - x_j[k];
                        }
                        let w_ij = ds.contrast(spec, i, j);
                        let w_ji = ds.contrast(spec, j, i);
                        for q in 0..m {
                            let design = designs[q];
                            if !design.active[t] && !design.active[tb] {
                                continue;
                            }
                            let b = &proj[q];
                            let r_ij = if design.active[t] {
                                w_ij - b[t][0] - (0..d).map(|k| b[t][1 + k] * x[k]).sum::<f64>()
                            } else {
                                0.0
                            };
                            let r_ji = if design.active[tb] {
                                w_ji - b[tb][0] + (0..d).map(|k| b[tb][1 + k] * x[k]).sum::<f64>()
                            } else {
                                0.0
                            };
                            let (row, col) = (&mut sr[q][a_j as usize], &mut sc[q][a_j as usize]);
                            row[0] += r_ij;
                            col[0] += r_ji;
                            for k in 0..d {
                                row[1 + k] += x[k] * r_ij;
                                col[1 + k] -= x[k] * r_ji;
                            }
                            let (rho, r2) = (r_ij * r_ji, r_ij * r_ij);
                            let ps = &mut out.sums[q][t];
                            ps.k0 += rho;
                            ps.h0 += r2;
                            for r in 0..d {
                                ps.kx[r] += rho * x[r];
                                ps.hx[r] += r2 * x[r];
                                for s in 0..=r {
                                    let xx = x[r] * x[s];
                                    ps.kxx[r * d + s] += rho * xx;
                                    ps.hxx[r * d + s] += r2 * xx;
                                }
                            }
                        }
                    }
                    for q in 0..m {
                        let blocks = &designs[q].blocks;
                        let mut row = DVector::zeros(designs[q].p);
                        let mut col = DVector::zeros(designs[q].p);
                        for arm in 0..2u8 {
                            let (tr, tc) = (pair_type(a_i, arm), pair_type(arm, a_i));
                            row += &blocks[tr] * DVector::from_column_slice(&sr[q][arm as usize]);
                            col += &blocks[tc] * DVector::from_column_slice(&sc[q][arm as usize]);
                        }
                        out.s_row[q].push(row);
                        out.s_col[q].push(col);
                    }
                }
                out
            })
            .collect();

        let mut result = Vec::with_capacity(m);
        for (q, &design) in designs.iter().enumerate() {
            let mut sums: [PatternSums; 4] = std::array::from_fn(|_| PatternSums::zeros(d));
            let (mut s_row, mut s_col) = (Vec::with_capacity(n), Vec::with_capacity(n));
            for c in &chunks {
                for (s, part) in sums.iter_mut().zip(&c.sums[q]) {
                    s.merge(part);
                }
                s_row.extend(c.s_row[q].iter().cloned());
                s_col.extend(c.s_col[q].iter().cloned());
            }
            let mut corr_k = DMatrix::zeros(design.p, design.p);
            let mut corr_h = DMatrix::zeros(design.p, design.p);
            for t in 0..4 {
                let b = &design.blocks[t];
                if design.active[t] && design.active[SWAPPED[t]] {
                    corr_k += b * sums[t].k_matrix(d) * design.blocks[SWAPPED[t]].transpose();
                }
                if design.active[t] {
                    corr_h += b * sums[t].h_matrix(d) * b.transpose();
                }
            }
            result.push(PairScores { s_row, s_col, corr_k, corr_h });
        }
        Ok(result)
    }

    fn outer_sum(a: &[DVector<f64>], b: &[DVector<f64>]) -> DMatrix<f64> {
        let p = a.first().map_or(0, |v| v.len());
        a.iter().zip(b).fold(DMatrix::zeros(p, p), |acc, (x, y)| acc + x * y.transpose())
    }

    /// The meat of the sandwich, before symmetrization.
    #[cfg(test)]
    pub fn middle(&self, method: Method) -> DMatrix<f64> {
        self.middle_signed(method, 1.0)
    }

    /// `correction_sign = -1` adds the CTW overcount correction instead of
    /// subtracting it; only the validation mutation check uses that.
    pub(crate) fn middle_signed(&self, method: Method, correction_sign: f64) -> DMatrix<f64> {
        let rr = Self::outer_sum(&self.s_row, &self.s_row);
        match method {
            Method::Hr => self.corr_h.clone(),
            Method::Cr => rr,
            Method::Tw => rr + Self::outer_sum(&self.s_col, &self.s_col) - &self.corr_h,
            Method::Ctw => {
                let rc = Self::outer_sum(&self.s_row, &self.s_col);
                rr + Self::outer_sum(&self.s_col, &self.s_col) + &rc + rc.transpose()
                    - (&self.corr_k + &self.corr_h) * correction_sign
            }
        }
    }

    pub fn report(&self, fit: &FitResult, method: Method) -> Result<VarianceReport> {
        self.report_signed(fit, method, 1.0)
    }

    pub(crate) fn report_signed(
        &self,
        fit: &FitResult,
        method: Method,
        correction_sign: f64,
    ) -> Result<VarianceReport> {
        let bread = SpdFactor::new(&fit.gram, &fit.coefficients.labels)?.inverse();
        let m = self.middle_signed(method, correction_sign);
        let m = (&m + m.transpose()) * 0.5;
        Ok(VarianceReport::from_sandwich(fit, method, &(&bread * m * &bread)))
    }
}

/// Design rows, responses and grams of both averaged submodels.
pub(crate) struct AveragedParts {
    z1: Vec<DVector<f64>>,
    z2: Vec<DVector<f64>>,
    row_res: Vec<f64>,
    col_res: Vec<f64>,
    b1_inv: DMatrix<f64>,
    b2_inv: DMatrix<f64>,
}

impl AveragedParts {
    pub fn new(fit: &FitResult, avg: &AveragedDataset, rule: MissingResidualRule) -> Result<Self> {
        let (submodel, adj) = match &fit.design {
            DesignKind::Averaged { submodel, adjustment, .. } => (*submodel, *adjustment),
            DesignKind::Pair(_) => return Err(Error::Input(format!("{} is not a per-unit average fit", fit.family))),
        };
        let n = avg.n();
        let beta = DVector::from_column_slice(&fit.coefficients.beta);
        let z1: Vec<DVector<f64>> =
            (0..n).map(|i| DVector::from_vec(averaged_design(avg.treatment[i], avg.xbar_row(i), adj))).collect();
        let z2: Vec<DVector<f64>> =
            (0..n).map(|i| DVector::from_vec(averaged_design(1 - avg.treatment[i], avg.xbar_col(i), adj))).collect();
        let fitted = |z: &DVector<f64>| z.dot(&beta);
        let (row_res, col_res): (Vec<f64>, Vec<f64>) = (0..n)
            .map(|i| {
                let a = avg.treatment[i];
                match (rule, submodel) {
                    (MissingResidualRule::ArmConsistent, _) => {
                        (avg.wbar_row[i] - fitted(&z1[i]), avg.wbar_col[i] - fitted(&z2[i]))
                    }
                    (MissingResidualRule::Literal, Submodel::Row) => {
                        let own = DVector::from_vec(averaged_design(a, avg.xbar_col(i), adj));
                        (avg.wbar_row[i] - fitted(&z1[i]), avg.wbar_col[i] - fitted(&own))
                    }
                    (MissingResidualRule::Literal, Submodel::Col) => {
                        let own = DVector::from_vec(averaged_design(1 - a, avg.xbar_row(i), adj));
                        (avg.wbar_row[i] - fitted(&own), avg.wbar_col[i] - fitted(&z2[i]))
                    }
                }
            })
            .unzip();
        let gram = |z: &[DVector<f64>]| {
            let p = z[0].len();
            z.iter().fold(DMatrix::zeros(p, p), |acc, v| acc + v * v.transpose())
        };
        let labels = &fit.coefficients.labels;
        let b1_inv = SpdFactor::new(&gram(&z1), labels)?.inverse();
        let b2_inv = SpdFactor::new(&gram(&z2), labels)?.inverse();
        Ok(Self { z1, z2, row_res, col_res, b1_inv, b2_inv })
    }

    fn weighted(a: &[DVector<f64>], b: &[DVector<f64>], w: impl Fn(usize) -> f64) -> DMatrix<f64> {
        let p = a[0].len();
        a.iter().zip(b).enumerate().fold(DMatrix::zeros(p, p), |acc, (i, (x, y))| acc + x * y.transpose() * w(i))
    }

    fn row_sandwich(&self) -> DMatrix<f64> {
        let m = Self::weighted(&self.z1, &self.z1, |i| self.row_res[i] * self.row_res[i]);
        &self.b1_inv * m * &self.b1_inv
    }

    fn col_sandwich(&self) -> DMatrix<f64> {
        let m = Self::weighted(&self.z2, &self.z2, |i| self.col_res[i] * self.col_res[i]);
        &self.b2_inv * m * &self.b2_inv
    }

    fn cross(&self) -> f64 {
        let m = Self::weighted(&self.z1, &self.z2, |i| self.row_res[i] * self.col_res[i]);
        let c = &self.b1_inv * m * &self.b2_inv;
        c[(0, 1)] + c[(1, 0)]
    }

    pub fn report(&self, submodel: Submodel, method: Method, family: &str) -> Result<VarianceReport> {
        match method {
            Method::Hr => {
                let v = match submodel {
                    Submodel::Row => self.row_sandwich(),
                    Submodel::Col => self.col_sandwich(),
                };
                Ok(VarianceReport::from_lambda(method, v[(0, 0)], v[(1, 1)], v[(0, 1)]))
            }
            Method::Cr => Err(Error::MethodMismatch { method: method.name().into(), family: family.into() }),
            Method::Tw | Method::Ctw => {
                let (vr, vc) = (self.row_sandwich(), self.col_sandwich());
                let cov = if method == Method::Ctw { self.cross() } else { 0.0 };
                Ok(VarianceReport::from_lambda(method, vr[(0, 0)] + vc[(0, 0)], vr[(1, 1)] + vc[(1, 1)], cov))
            }
        }
    }
}

fn check_pair_family(fit: &FitResult, pim: bool) -> Result<()> {
    if fit.family.is_averaged() || fit.family.is_pim() != pim {
        let want = if pim { "PIM" } else { "individual-pair" };
        return Err(Error::Input(format!("{} is not an {want} family", fit.family)));
    }
    Ok(())
}

fn pair_variance(fit: &FitResult, ds: &ObservedDataset, spec: &ContrastSpec, method: Method) -> Result<VarianceReport> {
    ds.check_contrast(spec)?;
    let scores = PairScores::compute(ds, spec, &[fit])?;
    scores[0].report(fit, method)
}

/// CTW variance of an individual-pair fit.
pub fn ctw_pairs(fit: &FitResult, ds: &ObservedDataset, spec: &ContrastSpec) -> Result<VarianceReport> {
    check_pair_family(fit, false)?;
    pair_variance(fit, ds, spec, Method::Ctw)
}

/// CTW variance of a PIM fit, reported on the `τ̂ = 2β̂` scale.
pub fn ctw_pim(fit: &FitResult, ds: &ObservedDataset, spec: &ContrastSpec) -> Result<VarianceReport> {
    check_pair_family(fit, true)?;
    pair_variance(fit, ds, spec, Method::Ctw)
}

/// CTW variance of a per-unit average fit with arm-consistent missing residuals.
pub fn ctw_averaged(fit: &FitResult, ds: &ObservedDataset, spec: &ContrastSpec) -> Result<VarianceReport> {
    averaged_variance(fit, ds, spec, Method::Ctw, MissingResidualRule::default())
}

pub fn averaged_variance(
    fit: &FitResult,
    ds: &ObservedDataset,
    spec: &ContrastSpec,
    method: Method,
    rule: MissingResidualRule,
) -> Result<VarianceReport> {
    let submodel =
        fit.submodel().ok_or_else(|| Error::Input(format!("{} is not a per-unit average fit", fit.family)))?;
    if method == Method::Cr {
        return Err(Error::MethodMismatch { method: method.name().into(), family: fit.family.name() });
    }
    let avg = per_unit_averages(ds, spec)?;
    AveragedParts::new(fit, &avg, rule)?.report(submodel, method, &fit.family.name())
}

/// HR, CR or TW baselines.
pub fn baseline_variance(
    fit: &FitResult,
    ds: &ObservedDataset,
    spec: &ContrastSpec,
    method: Method,
) -> Result<VarianceReport> {
    if method == Method::Ctw {
        return Err(Error::Input("CTW is not a baseline method".into()));
    }
    variance(fit, ds, spec, method)
}

/// Any method for any family.
pub fn variance(fit: &FitResult, ds: &ObservedDataset, spec: &ContrastSpec, method: Method) -> Result<VarianceReport> {
    if fit.family.is_averaged() {
        averaged_variance(fit, ds, spec, method, MissingResidualRule::default())
    } else {
        pair_variance(fit, ds, spec, method)
    }
}

/// Normal-theory interval `est ± z·se`.
pub fn confidence_interval(est: f64, se: f64, level: f64) -> Result<(f64, f64)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Input(format!("confidence level {level} is outside (0, 1)")));
    }
    if se.is_nan() || se < 0.0 {
        return Err(Error::Input(format!("standard error {se} is negative")));
    }
    let z = Normal::standard().inverse_cdf(0.5 + level / 2.0);
    Ok((est - z * se, est + z * se))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{estimate, estimate_individual, estimate_pim, Adjustment, ModelFamily};
    use crate::pairs::tests::{dataset_strategy, t4};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn t4_report(method: Method) -> VarianceReport {
        let ds = t4();
        let fit = estimate_individual(&ds, &ContrastSpec::WinStrict, Adjustment::None).unwrap();
        variance(&fit, &ds, &ContrastSpec::WinStrict, method).unwrap()
    }

    fn check(r: &VarianceReport, v10: f64, v01: f64, cov: f64, tau: f64) {
        assert_relative_eq!(r.se2_lambda10.unwrap(), v10, epsilon = 1e-15);
        assert_relative_eq!(r.se2_lambda01.unwrap(), v01, epsilon = 1e-15);
        assert_relative_eq!(r.cov_lambda.unwrap(), cov, epsilon = 1e-15);
        assert_relative_eq!(r.se2_tau, tau, epsilon = 1e-15);
    }

    // Hand-derived: residuals on S(1,0) are (1/4, 1/4, -3/4, 1/4), on S(0,1) they mirror them.
    #[test]
    fn t4_all_methods() {
        check(&t4_report(Method::Ctw), 1.0 / 64.0, 1.0 / 64.0, -1.0 / 64.0, 1.0 / 16.0);
        check(&t4_report(Method::Hr), 3.0 / 64.0, 3.0 / 64.0, 0.0, 6.0 / 64.0);
        check(&t4_report(Method::Cr), 1.0 / 32.0, 1.0 / 32.0, 0.0, 1.0 / 16.0);
        check(&t4_report(Method::Tw), 1.0 / 64.0, 1.0 / 64.0, 0.0, 1.0 / 32.0);
    }

    #[test]
    fn t4_pim_ctw() {
        let ds = t4();
        let fit = estimate_pim(&ds, &ContrastSpec::WinStrict, ModelFamily::P).unwrap();
        let r = ctw_pim(&fit, &ds, &ContrastSpec::WinStrict).unwrap();
        assert_relative_eq!(r.se2_tau, 1.0 / 16.0, epsilon = 1e-15);
        assert!(r.se2_lambda10.is_none());
    }

    #[test]
    fn perfect_fit_has_zero_variance() {
        // Every treated outcome beats every control one.
        let ds = ObservedDataset::from_columns(
            (0..6).map(|k| k.to_string()).collect(),
            vec![1, 1, 1, 0, 0, 0],
            vec![5.0, 6.0, 7.0, 1.0, 2.0, 3.0],
            1,
            vec![],
            0,
        )
        .unwrap();
        let fit = estimate_individual(&ds, &ContrastSpec::WinStrict, Adjustment::None).unwrap();
        for m in Method::ALL {
            let r = variance(&fit, &ds, &ContrastSpec::WinStrict, m).unwrap();
            assert_eq!(r.se2_tau, 0.0);
            assert_eq!(r.se2_lambda10, Some(0.0));
        }
    }

    #[test]
    fn intervals() {
        let (lo, hi) = confidence_interval(0.0, 1.0, 0.95).unwrap();
        assert_relative_eq!(hi, 1.959963984540054, epsilon = 1e-12);
        assert_relative_eq!(lo, -hi);
        assert_eq!(confidence_interval(0.3, 0.0, 0.9).unwrap(), (0.3, 0.3));
        let (lo, hi) = confidence_interval(0.228, 0.091, 0.95).unwrap();
        assert_eq!((format!("{lo:.3}"), format!("{hi:.3}")), ("0.050".to_string(), "0.406".to_string()));
        assert!(confidence_interval(0.0, 1.0, 1.0).is_err());
        assert!(confidence_interval(0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn cr_is_undefined_for_averages() {
        let ds = t4();
        let fit = estimate(&ds, &ContrastSpec::WinStrict, ModelFamily::AAcv(Submodel::Row)).unwrap();
        let err = variance(&fit, &ds, &ContrastSpec::WinStrict, Method::Cr).unwrap_err();
        assert!(matches!(err, Error::MethodMismatch { .. }));
    }

    #[test]
    fn wrong_family_is_rejected() {
        let ds = t4();
        let fit = estimate(&ds, &ContrastSpec::WinStrict, ModelFamily::P).unwrap();
        assert!(ctw_pairs(&fit, &ds, &ContrastSpec::WinStrict).is_err());
        assert!(ctw_averaged(&fit, &ds, &ContrastSpec::WinStrict).is_err());
    }

    proptest! {
        #[test]
        fn scores_sum_to_zero(ds in dataset_strategy(1, 2)) {
            let spec = ContrastSpec::WinHalfTie;
            for family in [ModelFamily::IUn, ModelFamily::IAcv, ModelFamily::IAdj, ModelFamily::PAdj] {
                let Ok(fit) = estimate(&ds, &spec, family) else { continue };
                let s = &PairScores::compute(&ds, &spec, &[&fit]).unwrap()[0];
                let p = fit.coefficients.beta.len();
                let total_r = s.s_row.iter().fold(DVector::zeros(p), |a, v| a + v);
                let total_c = s.s_col.iter().fold(DVector::zeros(p), |a, v| a + v);
                let scale = ds.n() as f64 * ds.n() as f64;
                prop_assert!(total_r.amax() <= 1e-8 * scale);
                prop_assert!(total_c.amax() <= 1e-8 * scale);
            }
        }

        #[test]
        fn ctw_middle_is_symmetric(ds in dataset_strategy(1, 1)) {
            let spec = ContrastSpec::Difference;
            for family in [ModelFamily::IAdj, ModelFamily::PAcv] {
                let Ok(fit) = estimate(&ds, &spec, family) else { continue };
                let m = PairScores::compute(&ds, &spec, &[&fit]).unwrap()[0].middle(Method::Ctw);
                let asym = (&m - m.transpose()).amax();
                prop_assert!(asym <= 1e-10 * m.amax().max(1e-300));
            }
        }

        #[test]
        fn tau_combines_lambda_entries(ds in dataset_strategy(1, 1)) {
            let spec = ContrastSpec::WinHalfTie;
            let fit = estimate(&ds, &spec, ModelFamily::IAcv);
            prop_assume!(fit.is_ok());
            let fit = fit.unwrap();
            for m in Method::ALL {
                let r = variance(&fit, &ds, &spec, m).unwrap();
                if !r.clipped {
                    let combo = r.se2_lambda10.unwrap() + r.se2_lambda01.unwrap() - 2.0 * r.cov_lambda.unwrap();
                    prop_assert!((combo - r.se2_tau).abs() <= 1e-12);
                }
            }
        }
    }
}
