//! Simulation studies: data-generating processes, assignment mechanisms and
//! the Monte Carlo engine.

use std::fmt;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, Gamma, Normal, StandardUniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{analyze, config_hash, AnalysisPlan, EstimandResult, Estimator};
use crate::contrasts::ContrastSpec;
use crate::error::{Error, Result};
use crate::estimators::{Estimand, ModelFamily};
use crate::oracle::{true_lambda, EstimandForm, PotentialPopulation};
use crate::pairs::ObservedDataset;
use crate::variance::{confidence_interval, Method, MissingResidualRule};

const STREAM_COVARIATES: u64 = 0;
const STREAM_NOISE: u64 = 1;
const STREAM_ASSIGNMENT: u64 = 2;
const STREAM_ANALYSIS: u64 = 3;
const STREAMS_PER_REPLICATE: u64 = 4;

/// Upper bound on Bernoulli re-draws before giving up on a replicate.
const MAX_REDRAWS: u32 = 1000;

/// Size of the population drawn once per scenario to approximate the
/// superpopulation estimands used for coverage.
pub const SUPERPOPULATION_N: usize = 1_000_000;
/// Replicate index reserved for the superpopulation draw.
const SUPERPOPULATION_REPLICATE: usize = 1 << 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Study {
    #[serde(rename = "I")]
    I,
    #[serde(rename = "II")]
    II,
    #[serde(rename = "III")]
    III,
    #[serde(rename = "IV")]
    IV,
    #[serde(rename = "V-I")]
    VI,
    #[serde(rename = "V-II")]
    VII,
}

impl Study {
    pub fn name(self) -> &'static str {
        match self {
            Study::I => "I",
            Study::II => "II",
            Study::III => "III",
            Study::IV => "IV",
            Study::VI => "V-I",
            Study::VII => "V-II",
        }
    }

    /// Study V reuses the first two data-generating processes.
    fn base(self) -> Study {
        match self {
            Study::VI => Study::I,
            Study::VII => Study::II,
            s => s,
        }
    }

    fn composite(self) -> bool {
        matches!(self.base(), Study::II | Study::IV)
    }

    pub fn contrast(self) -> ContrastSpec {
        if self.composite() {
            ContrastSpec::WeightedAggregate {
                weights: vec![0.5, 0.5],
                components: vec![ContrastSpec::WinHalfTie, ContrastSpec::WinStrict],
            }
        } else {
            ContrastSpec::WinStrict
        }
    }

    pub fn default_methods(self) -> Vec<Method> {
        match self {
            Study::VI | Study::VII => Method::ALL.to_vec(),
            _ => vec![Method::Ctw],
        }
    }
}

impl fmt::Display for Study {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Assignment {
    Bernoulli { p: f64 },
    Complete { n1: usize },
}

impl Default for Assignment {
    fn default() -> Self {
        Assignment::Bernoulli { p: 0.5 }
    }
}

fn default_estimators() -> Vec<Estimator> {
    use crate::estimators::Submodel::{Col, Row};
    [
        ModelFamily::IUn,
        ModelFamily::IAdj,
        ModelFamily::IAcv,
        ModelFamily::AAdj(Row),
        ModelFamily::AAdj(Col),
        ModelFamily::AAcv(Row),
        ModelFamily::AAcv(Col),
        ModelFamily::P,
        ModelFamily::PAcv,
        ModelFamily::PInt,
        ModelFamily::PAdj,
    ]
    .into_iter()
    .map(Estimator::Family)
    .collect()
}

fn default_level() -> f64 {
    0.95
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub study: Study,
    pub n: usize,
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub assignment: Assignment,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<Estimator>,
    /// Defaults to all four methods for study V and CTW otherwise.
    #[serde(default)]
    pub methods: Option<Vec<Method>>,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default)]
    pub missing_residual_rule: MissingResidualRule,
    /// Also write one line per replicate, estimator, estimand and method.
    #[serde(default)]
    pub raw: bool,
}

impl ScenarioSpec {
    pub fn new(study: Study, n: usize, replicates: usize, seed: u64) -> Self {
        ScenarioSpec {
            study,
            n,
            replicates,
            seed,
            assignment: Assignment::default(),
            estimators: default_estimators(),
            methods: None,
            level: default_level(),
            missing_residual_rule: MissingResidualRule::default(),
            raw: false,
        }
    }

    pub fn methods(&self) -> Vec<Method> {
        self.methods.clone().unwrap_or_else(|| self.study.default_methods())
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates < 1 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        if self.n < 10 {
            return Err(Error::Config(format!("N must be at least 10, got {}", self.n)));
        }
        match self.assignment {
            Assignment::Bernoulli { p } if !(p > 0.0 && p < 1.0) => {
                return Err(Error::Config(format!("Bernoulli probability {p} is outside (0, 1)")));
            }
            Assignment::Complete { n1 } if n1 < 1 || n1 >= self.n => {
                return Err(Error::Config(format!("complete randomization needs 1 ≤ N1 ≤ {}, got {n1}", self.n - 1)));
            }
            _ => {}
        }
        if self.estimators.is_empty() {
            return Err(Error::Config("at least one estimator is required".into()));
        }
        if self.methods.as_ref().is_some_and(|m| m.is_empty()) {
            return Err(Error::Config("the method list is empty".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::Config(format!("confidence level {} is outside (0, 1)", self.level)));
        }
        Ok(())
    }

    fn plan(&self) -> AnalysisPlan {
        AnalysisPlan { estimators: self.estimators.clone(), methods: self.methods(), rule: self.missing_residual_rule }
    }
}

fn stream(seed: u64, replicate: usize, which: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate as u64 * STREAMS_PER_REPLICATE + which);
    rng
}

/// A generated population: potential outcomes with the analysis covariates,
/// plus the covariates that drove the outcomes.
#[derive(Debug, Clone)]
pub struct SimPopulation {
    pub potential: PotentialPopulation,
    pub true_covariates: Vec<f64>,
    pub true_d: usize,
}

fn centered_gamma(rng: &mut ChaCha8Rng) -> f64 {
    Gamma::new(1.0, 1.0).expect("valid gamma").sample(rng) - 1.0
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Category of a three-level cumulative-logit outcome by inverse CDF.
fn ordinal(u: f64, cut1: f64, cut2: f64, eta: f64) -> f64 {
    if u <= logistic(cut1 + eta) {
        1.0
    } else if u <= logistic(cut2 + eta) {
        2.0
    } else {
        3.0
    }
}

/// Draws replicate `replicate` of a study population.
pub fn generate_population(study: Study, n: usize, seed: u64, replicate: usize) -> Result<SimPopulation> {
    let mut cov_rng = stream(seed, replicate, STREAM_COVARIATES);
    let mut noise = stream(seed, replicate, STREAM_NOISE);
    let mut extra = stream(seed, replicate, STREAM_ANALYSIS);
    let normal = Normal::new(0.0, 1.0).expect("valid normal");
    let coin = Bernoulli::new(0.5).expect("valid Bernoulli");
    let composite = study.composite();
    let true_d = if composite { 4 } else { 2 };
    let q = if composite { 2 } else { 1 };

    let mut x = Vec::with_capacity(n * true_d);
    for _ in 0..n {
        x.push(if coin.sample(&mut cov_rng) { 1.0 } else { 0.0 });
        for _ in 1..true_d {
            x.push(normal.sample(&mut cov_rng));
        }
    }

    let mut y1 = Vec::with_capacity(n * q);
    let mut y0 = Vec::with_capacity(n * q);
    for xi in x.chunks(true_d) {
        if composite {
            let zeta: f64 = Gamma::new(1.0, 1.0).expect("valid gamma").sample(&mut noise);
            let shared = xi[0] + xi[2] + xi[3] + zeta;
            let (u1, u0): (f64, f64) = (noise.sample(StandardUniform), noise.sample(StandardUniform));
            let e = centered_gamma(&mut noise);
            y1.push(ordinal(u1, 0.0, 2.0, shared + xi[1].sin()));
            y1.push(0.4 + shared + xi[1].sin() + e);
            y0.push(ordinal(u0, 0.0, 1.5, shared + xi[1].sin()));
            y0.push(shared + xi[1].cos() + e);
        } else {
            let (eps, e) = (centered_gamma(&mut noise), centered_gamma(&mut noise));
            y1.push(0.4 + xi[0] + xi[1].sin() + eps);
            y0.push(xi[0] + xi[1].cos() + e);
        }
    }

    let (analysis, d) = match study.base() {
        Study::III => ((0..n * 2).map(|_| normal.sample(&mut extra)).collect(), 2),
        Study::IV => {
            let wide = Normal::new(0.0, 5.0).expect("valid normal");
            (x.iter().map(|v| v + wide.sample(&mut extra)).collect(), true_d)
        }
        _ => (x.clone(), true_d),
    };
    let potential = PotentialPopulation::new(y1, y0, q, analysis, d)?;
    Ok(SimPopulation { potential, true_covariates: x, true_d })
}

/// Draws a treatment vector; Bernoulli draws with an empty arm are redrawn.
/// Returns the vector and the number of redraws.
pub fn assign(n: usize, mechanism: Assignment, seed: u64, replicate: usize) -> Result<(Vec<u8>, u32)> {
    let mut rng = stream(seed, replicate, STREAM_ASSIGNMENT);
    match mechanism {
        Assignment::Bernoulli { p } => {
            let coin = Bernoulli::new(p).map_err(|e| Error::Config(e.to_string()))?;
            for redraws in 0..=MAX_REDRAWS {
                let a: Vec<u8> = (0..n).map(|_| coin.sample(&mut rng) as u8).collect();
                let n1 = a.iter().filter(|&&v| v == 1).count();
                if n1 > 0 && n1 < n {
                    return Ok((a, redraws));
                }
            }
            Err(Error::Precondition(format!("no assignment with both arms in {MAX_REDRAWS} redraws")))
        }
        Assignment::Complete { n1 } => {
            let mut a = vec![0u8; n];
            a[..n1].fill(1);
            // Fisher-Yates keeps the draw independent of the rand shuffle implementation.
            for i in (1..n).rev() {
                let j = rng.random_range(0..=i);
                a.swap(i, j);
            }
            Ok((a, 0))
        }
    }
}

/// Counts of `values < x` and `values == x` in a sorted slice.
fn rank_counts(sorted: &[f64], x: f64) -> (u64, u64) {
    let less = sorted.partition_point(|&v| v < x);
    let not_greater = sorted.partition_point(|&v| v <= x);
    (less as u64, (not_greater - less) as u64)
}

/// `λ_U(a, 1 − a)` in O(N log N) for contrasts built from univariate
/// comparisons; `None` for other contrasts.
pub fn sorted_lambda(pop: &PotentialPopulation, spec: &ContrastSpec, a: u8) -> Option<f64> {
    let n = pop.n();
    let b = 1 - a;
    let component = |c: &ContrastSpec, q: usize| -> Option<f64> {
        let mut other: Vec<f64> = (0..n).map(|j| pop.outcome(j, b)[q]).collect();
        match c {
            ContrastSpec::Difference => {
                let own: f64 = (0..n).map(|i| pop.outcome(i, a)[q]).sum();
                let rest: f64 = other.iter().sum();
                // Σ_{i≠j} (y_i − y_j) = (N − 1)·Σ y_i(a) − (N − 1)·Σ y_j(b)
                return Some((own - rest) / n as f64);
            }
            ContrastSpec::WinStrict | ContrastSpec::WinHalfTie => {}
            _ => return None,
        }
        other.sort_by(f64::total_cmp);
        let half = matches!(c, ContrastSpec::WinHalfTie);
        // Twice the pair total, kept in integers so the sum is exact.
        let mut doubled: u64 = 0;
        for i in 0..n {
            let (x, y) = (pop.outcome(i, a)[q], pop.outcome(i, b)[q]);
            let (less, equal) = rank_counts(&other, x);
            let (self_less, self_equal) = (u64::from(y < x), u64::from(y == x));
            doubled += 2 * (less - self_less);
            if half {
                doubled += equal - self_equal;
            }
        }
        Some(doubled as f64 / 2.0 / (n * (n - 1)) as f64)
    };
    match spec {
        ContrastSpec::WeightedAggregate { weights, components } => {
            let mut total = 0.0;
            for (q, (w, c)) in weights.iter().zip(components).enumerate() {
                total += w * component(c, q)?;
            }
            Some(total)
        }
        c if pop.q() == 1 => component(c, 0),
        _ => None,
    }
}

/// λ(1,0), λ(0,1) and τ(1) of a population of `SUPERPOPULATION_N` units drawn
/// from the study's data-generating process.
pub fn superpopulation_truth(study: Study, seed: u64) -> Result<[f64; 3]> {
    let pop = generate_population(study, SUPERPOPULATION_N, seed, SUPERPOPULATION_REPLICATE)?;
    let contrast = study.contrast();
    let lambda = |a| {
        sorted_lambda(&pop.potential, &contrast, a)
            .ok_or_else(|| Error::Input("study contrast is not rank-decomposable".into()))
    };
    let (l10, l01) = (lambda(1)?, lambda(0)?);
    Ok([l10, l01, l10 - l01])
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateOutcome {
    /// Finite-population λ(1,0), λ(0,1) and τ(1).
    pub truth: [f64; 3],
    pub n1: usize,
    pub redraws: u32,
    /// One entry per estimator, in scenario order.
    pub results: Vec<Result<Vec<EstimandResult>>>,
}

impl ReplicateOutcome {
    pub fn truth(&self, e: Estimand) -> f64 {
        match e {
            Estimand::Lambda10 => self.truth[0],
            Estimand::Lambda01 => self.truth[1],
            Estimand::Tau => self.truth[2],
        }
    }

    fn row(&self, k: usize, e: Estimand) -> Option<&EstimandResult> {
        self.results[k].as_ref().ok()?.iter().find(|r| r.estimand == e)
    }
}

fn run_replicate(
    spec: &ScenarioSpec,
    contrast: &ContrastSpec,
    plan: &AnalysisPlan,
    r: usize,
) -> Result<ReplicateOutcome> {
    let pop = generate_population(spec.study, spec.n, spec.seed, r)?;
    let l10 = true_lambda(&pop.potential, contrast, 1, EstimandForm::U)?;
    let l01 = true_lambda(&pop.potential, contrast, 0, EstimandForm::U)?;
    let (a, redraws) = assign(spec.n, spec.assignment, spec.seed, r)?;
    let ds: ObservedDataset = pop.potential.observe(&a)?;
    let results = analyze(&ds, contrast, plan)?.into_iter().map(|o| o.result).collect();
    Ok(ReplicateOutcome { truth: [l10, l01, l10 - l01], n1: ds.n1(), redraws, results })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub estimand: String,
    pub estimator: String,
    pub method: String,
    /// Replicates contributing an estimate.
    pub replicates: usize,
    /// Replicates where the estimate or the standard error was unavailable.
    pub failures: usize,
    /// Mean of the per-replicate finite-population truths.
    pub mean_truth: f64,
    /// Estimand of the large reference population.
    pub super_truth: f64,
    /// Mean of estimate minus per-replicate truth.
    pub bias: f64,
    /// Standard deviation of the estimates.
    pub ese: f64,
    /// Standard deviation of estimate minus per-replicate truth.
    pub sd_error: f64,
    pub ase: f64,
    /// Coverage of the superpopulation truth.
    pub ecp: f64,
    /// Coverage of the per-replicate finite-population truth.
    pub ecp_finite: f64,
}

#[derive(Debug, Clone)]
pub struct MonteCarloRun {
    pub spec: ScenarioSpec,
    pub superpopulation: [f64; 3],
    pub replicates: Vec<ReplicateOutcome>,
    pub summary: Vec<SummaryRow>,
    pub seconds: f64,
}

impl MonteCarloRun {
    fn estimator_index(&self, estimator: Estimator) -> Result<usize> {
        self.spec
            .estimators
            .iter()
            .position(|&e| e == estimator)
            .ok_or_else(|| Error::Input(format!("{estimator} was not part of the scenario")))
    }

    /// Per-replicate estimates (`None` where the fit failed).
    pub fn estimates(&self, estimator: Estimator, estimand: Estimand) -> Result<Vec<Option<f64>>> {
        let k = self.estimator_index(estimator)?;
        Ok(self.replicates.iter().map(|r| r.row(k, estimand).map(|x| x.estimate)).collect())
    }

    pub fn cell(&self, estimator: &str, estimand: Estimand, method: Method) -> Option<&SummaryRow> {
        self.summary
            .iter()
            .find(|s| s.estimator == estimator && s.estimand == estimand.name() && s.method == method.name())
    }

    pub fn total_redraws(&self) -> u64 {
        self.replicates.iter().map(|r| r.redraws as u64).sum()
    }

    pub fn total_failures(&self) -> usize {
        self.summary.iter().map(|s| s.failures).sum()
    }
}

fn applicable(estimator: Estimator, method: Method) -> bool {
    let averaged = match estimator {
        Estimator::Family(f) => f.is_averaged(),
        Estimator::Selected(_) => true,
    };
    !(averaged && method == Method::Cr)
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn fraction(k: usize, n: usize) -> f64 {
    if n == 0 {
        f64::NAN
    } else {
        k as f64 / n as f64
    }
}

/// Sample standard deviation with the n − 1 divisor.
fn sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return f64::NAN;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

fn estimand_index(e: Estimand) -> usize {
    match e {
        Estimand::Lambda10 => 0,
        Estimand::Lambda01 => 1,
        Estimand::Tau => 2,
    }
}

fn summarize(spec: &ScenarioSpec, reps: &[ReplicateOutcome], superpopulation: [f64; 3]) -> Result<Vec<SummaryRow>> {
    let mut rows = Vec::new();
    for (k, &estimator) in spec.estimators.iter().enumerate() {
        for &estimand in estimator.estimands() {
            let mut est = Vec::new();
            let mut err = Vec::new();
            let mut truth = Vec::new();
            for r in reps {
                if let Some(row) = r.row(k, estimand) {
                    est.push(row.estimate);
                    err.push(row.estimate - r.truth(estimand));
                    truth.push(r.truth(estimand));
                }
            }
            let super_truth = superpopulation[estimand_index(estimand)];
            for method in spec.methods() {
                if !applicable(estimator, method) {
                    continue;
                }
                let mut ses = Vec::new();
                let mut covered = 0usize;
                let mut covered_finite = 0usize;
                for r in reps {
                    let Some(row) = r.row(k, estimand) else { continue };
                    if let Some(Ok(se)) = row.se(method) {
                        if se.is_finite() {
                            let (lo, hi) = confidence_interval(row.estimate, se, spec.level)?;
                            let t = r.truth(estimand);
                            covered_finite += usize::from(lo <= t && t <= hi);
                            covered += usize::from(lo <= super_truth && super_truth <= hi);
                            ses.push(se);
                        }
                    }
                }
                rows.push(SummaryRow {
                    estimand: estimand.name().into(),
                    estimator: estimator.name(),
                    method: method.name().into(),
                    replicates: est.len(),
                    failures: reps.len() - ses.len(),
                    mean_truth: mean(&truth),
                    super_truth,
                    bias: mean(&err),
                    ese: sd(&est),
                    sd_error: sd(&err),
                    ase: mean(&ses),
                    ecp: fraction(covered, ses.len()),
                    ecp_finite: fraction(covered_finite, ses.len()),
                });
            }
        }
    }
    Ok(rows)
}

/// Runs every replicate of a scenario. The result depends only on the spec,
/// not on the number of worker threads.
pub fn run_monte_carlo(spec: &ScenarioSpec) -> Result<MonteCarloRun> {
    spec.validate()?;
    let start = Instant::now();
    let contrast = spec.study.contrast();
    let plan = spec.plan();
    let replicates = (0..spec.replicates)
        .into_par_iter()
        .map(|r| run_replicate(spec, &contrast, &plan, r))
        .collect::<Result<Vec<_>>>()?;
    let superpopulation = superpopulation_truth(spec.study, spec.seed)?;
    let summary = summarize(spec, &replicates, superpopulation)?;
    Ok(MonteCarloRun {
        spec: spec.clone(),
        superpopulation,
        replicates,
        summary,
        seconds: start.elapsed().as_secs_f64(),
    })
}

#[derive(Serialize)]
struct RawRow {
    replicate: usize,
    estimator: String,
    fitted: String,
    estimand: &'static str,
    method: &'static str,
    truth: f64,
    estimate: f64,
    se: Option<f64>,
    error: Option<String>,
}

#[derive(Serialize)]
struct Report<'a> {
    config_hash: String,
    scenario: &'a ScenarioSpec,
    contrast: ContrastSpec,
    superpopulation_n: usize,
    superpopulation_truth: [f64; 3],
    redraws: u64,
    failures: usize,
    summary: &'a [SummaryRow],
}

fn io(path: &Path, e: impl fmt::Display) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| io(path, e))?;
    }
    w.flush().map_err(|e| io(path, e))
}

/// Writes `summary.csv`, `report.json`, `raw.csv` when requested and
/// `timing.json`. Only the timing file varies between identical runs.
pub fn write_outputs(run: &MonteCarloRun, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    write_csv(&dir.join("summary.csv"), &run.summary)?;
    let report = Report {
        config_hash: config_hash(&run.spec)?,
        scenario: &run.spec,
        contrast: run.spec.study.contrast(),
        superpopulation_n: SUPERPOPULATION_N,
        superpopulation_truth: run.superpopulation,
        redraws: run.total_redraws(),
        failures: run.total_failures(),
        summary: &run.summary,
    };
    let path = dir.join("report.json");
    let json = serde_json::to_string_pretty(&report).map_err(|e| io(&path, e))?;
    fs::write(&path, json + "\n").map_err(|e| io(&path, e))?;
    if run.spec.raw {
        let methods = run.spec.methods();
        let mut rows = Vec::new();
        for (r, rep) in run.replicates.iter().enumerate() {
            for (k, &estimator) in run.spec.estimators.iter().enumerate() {
                let name = estimator.name();
                for &estimand in estimator.estimands() {
                    for &method in methods.iter().filter(|&&m| applicable(estimator, m)) {
                        let row = rep.row(k, estimand);
                        let (se, error) = match row.and_then(|x| x.se(method)) {
                            Some(Ok(se)) => (Some(se), None),
                            Some(Err(e)) => (None, Some(e.to_string())),
                            None => (None, rep.results[k].as_ref().err().map(|e| e.to_string())),
                        };
                        rows.push(RawRow {
                            replicate: r,
                            estimator: name.clone(),
                            fitted: row.map(|x| x.family.name()).unwrap_or_default(),
                            estimand: estimand.name(),
                            method: method.name(),
                            truth: rep.truth(estimand),
                            estimate: row.map_or(f64::NAN, |x| x.estimate),
                            se,
                            error,
                        });
                    }
                }
            }
        }
        write_csv(&dir.join("raw.csv"), rows)?;
    }
    let path = dir.join("timing.json");
    let timing = serde_json::json!({ "seconds": run.seconds, "threads": rayon::current_num_threads() });
    fs::write(&path, timing.to_string() + "\n").map_err(|e| io(&path, e))
}
