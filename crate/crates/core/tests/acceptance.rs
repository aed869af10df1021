//! Acceptance criteria 1–9. Prints one PASS/FAIL line per criterion with the
//! measured values underneath, and exits nonzero if any criterion fails.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use paircausal::analysis::Estimator;
use paircausal::estimators::{Estimand, ModelFamily};
use paircausal::simlab::{run_monte_carlo, MonteCarloRun, ScenarioSpec, Study};
use paircausal::validation::{
    dense_reference_suite, enumeration_suite, equivalence_suite, estimand_gap_suite, proposition_suite, Mutation,
    SuiteOutcome,
};
use paircausal::variance::Method;

const SEED: u64 = 20_260_101;

const EQUIVALENCE_TOL: f64 = 1e-10;
const ENUMERATION_TOL: f64 = 1e-12;
const DENSE_TOL: f64 = 1e-8;
const PROPOSITION_TOL: f64 = 1e-8;

const ESE_TARGET: f64 = 0.0256;
const ESE_BAND: f64 = 0.003;
const ECP_TARGET: f64 = 0.95;
const ECP_BAND: f64 = 0.02;
const RATIO_LO: f64 = 0.9;
const RATIO_HI: f64 = 1.1;
const HR_ECP_MAX: f64 = 0.30;
const CR_ECP_RANGE: (f64, f64) = (0.80, 0.92);
const TW_TAU_ECP_MAX: f64 = 0.90;
const REDUCED_SECONDS: f64 = 120.0;

const ADJ_GAIN_MAX: f64 = 0.90;
const UNRELATED_RATIO_MIN: f64 = 0.97;
const PIM_RATIO_MAX: f64 = 0.1;
const PIM_REPLICATES: usize = 500;

struct Criterion {
    id: u8,
    title: &'static str,
    pass: bool,
    details: Vec<String>,
}

impl Criterion {
    fn new(id: u8, title: &'static str) -> Self {
        Criterion { id, title, pass: true, details: Vec::new() }
    }

    fn check(&mut self, ok: bool, detail: String) {
        self.pass &= ok;
        self.details.push(format!("{} {detail}", if ok { "ok  " } else { "FAIL" }));
    }

    fn print(&self) {
        println!("criterion {} {}: {}", self.id, if self.pass { "PASS" } else { "FAIL" }, self.title);
        for d in &self.details {
            println!("    {d}");
        }
    }
}

fn suite(c: &mut Criterion, outcome: paircausal::Result<SuiteOutcome>, cases: usize, tol: f64, seconds: f64) {
    match outcome {
        Ok(s) => {
            c.check(s.failures.is_empty(), format!("{}: {} failures", s.name, s.failures.len()));
            for f in s.failures.iter().take(3) {
                c.details.push(format!("       {f}"));
            }
            c.check(s.cases >= cases, format!("{} cases (need {cases}), {} skipped", s.cases, s.skipped));
            c.check(s.max_error <= tol, format!("max error {:.3e} ≤ {tol:e}", s.max_error));
            c.check(s.seconds < seconds, format!("{:.2} s < {seconds} s", s.seconds));
        }
        Err(e) => c.check(false, format!("suite error: {e}")),
    }
}

fn family(f: ModelFamily) -> Estimator {
    Estimator::Family(f)
}

fn in_band(x: f64, target: f64, band: f64) -> bool {
    (x - target).abs() <= band
}

fn cell(c: &mut Criterion, run: &MonteCarloRun, est: &str, e: Estimand, m: Method) -> Option<(f64, f64, f64)> {
    match run.cell(est, e, m) {
        Some(s) => Some((s.ese, s.ase, s.ecp)),
        None => {
            c.check(false, format!("missing cell {est} {e} {m}"));
            None
        }
    }
}

fn criterion5(run: &MonteCarloRun, reduced: &MonteCarloRun, reduced_seconds: f64) -> Criterion {
    let mut c = Criterion::new(5, "study V-I variance method comparison, N=500, 1000 replicates");
    c.details.push(format!(
        "coverage is of the superpopulation truth (N={}); finite-population ECP is in summary.csv as ecp_finite",
        paircausal::simlab::SUPERPOPULATION_N
    ));
    c.check(run.total_failures() == 0, format!("{} estimator failures", run.total_failures()));
    let l10 = Estimand::Lambda10;
    if let Some((ese, _, _)) = cell(&mut c, run, "I-un", l10, Method::Ctw) {
        c.check(
            in_band(ese, ESE_TARGET, ESE_BAND),
            format!("ESE(I-un λ(1,0)) = {ese:.4} in {ESE_TARGET} ± {ESE_BAND}"),
        );
    }
    for (est, e) in [("I-un", l10), ("I-adj", l10), ("I-acv", l10), ("I-un", Estimand::Tau), ("P", Estimand::Tau)] {
        if let Some((_, _, ecp)) = cell(&mut c, run, est, e, Method::Ctw) {
            c.check(
                in_band(ecp, ECP_TARGET, ECP_BAND),
                format!("CTW ECP({est} {e}) = {ecp:.3} in {ECP_TARGET} ± {ECP_BAND}"),
            );
        }
    }
    let mut worst = (f64::NAN, String::new());
    let mut all_ok = true;
    for s in run.summary.iter().filter(|s| s.method == "CTW") {
        let ratio = s.ase / s.ese;
        let ok = (RATIO_LO..=RATIO_HI).contains(&ratio);
        all_ok &= ok;
        if !ok || worst.0.is_nan() || (ratio - 1.0).abs() > (worst.0 - 1.0).abs() {
            worst = (ratio, format!("{} {}", s.estimator, s.estimand));
        }
    }
    c.check(
        all_ok,
        format!("CTW ASE/ESE in [{RATIO_LO}, {RATIO_HI}] for every row; furthest {:.3} ({})", worst.0, worst.1),
    );
    if let Some((_, _, ecp)) = cell(&mut c, run, "I-un", l10, Method::Hr) {
        c.check(ecp < HR_ECP_MAX, format!("HR ECP(I-un λ(1,0)) = {ecp:.3} < {HR_ECP_MAX}"));
    }
    if let Some((_, _, ecp)) = cell(&mut c, run, "I-un", l10, Method::Cr) {
        let (lo, hi) = CR_ECP_RANGE;
        c.check((lo..=hi).contains(&ecp), format!("CR ECP(I-un λ(1,0)) = {ecp:.3} in [{lo}, {hi}]"));
    }
    if let Some((_, _, ecp)) = cell(&mut c, run, "I-un", Estimand::Tau, Method::Tw) {
        c.check(ecp < TW_TAU_ECP_MAX, format!("TW ECP(I-un τ) = {ecp:.3} < {TW_TAU_ECP_MAX}"));
    }
    if let Some((_, _, ecp)) = cell(&mut c, run, "I-un", l10, Method::Tw) {
        c.check(
            in_band(ecp, ECP_TARGET, ECP_BAND),
            format!("TW ECP(I-un λ(1,0)) = {ecp:.3} in {ECP_TARGET} ± {ECP_BAND}"),
        );
    }
    c.details.push(format!("full run {:.1} s", run.seconds));

    // Reduced mode: same qualitative orderings at N=200 with 500 replicates.
    c.check(
        reduced_seconds < REDUCED_SECONDS,
        format!("reduced N=200/500 run {reduced_seconds:.1} s < {REDUCED_SECONDS} s"),
    );
    let get = |est: &str, e: Estimand, m: Method| reduced.cell(est, e, m).map(|s| (s.ese, s.ase, s.ecp));
    match (
        get("I-un", l10, Method::Hr),
        get("I-un", l10, Method::Cr),
        get("I-un", l10, Method::Ctw),
        get("I-un", Estimand::Tau, Method::Tw),
        get("I-un", Estimand::Tau, Method::Ctw),
        get("I-adj", l10, Method::Ctw),
    ) {
        (Some(hr), Some(cr), Some(ctw), Some(tw_tau), Some(ctw_tau), Some(adj)) => {
            c.check(
                hr.2 < cr.2 && cr.2 < ctw.2,
                format!("reduced ECP(λ(1,0)): HR {:.3} < CR {:.3} < CTW {:.3}", hr.2, cr.2, ctw.2),
            );
            c.check(tw_tau.2 < ctw_tau.2, format!("reduced ECP(τ): TW {:.3} < CTW {:.3}", tw_tau.2, ctw_tau.2));
            c.check(adj.0 < ctw.0, format!("reduced ESE(λ(1,0)): I-adj {:.4} < I-un {:.4}", adj.0, ctw.0));
            c.check(
                in_band(ctw.2, ECP_TARGET, 2.0 * ECP_BAND),
                format!("reduced CTW ECP(I-un λ(1,0)) = {:.3} in {ECP_TARGET} ± {}", ctw.2, 2.0 * ECP_BAND),
            );
        }
        _ => c.check(false, "reduced run is missing cells".into()),
    }
    c
}

fn criterion6() -> Criterion {
    let mut c =
        Criterion::new(6, "covariate adjustment helps in study I and not in study III (N=500, 1000 replicates)");
    for (study, want_gain) in [(Study::I, true), (Study::III, false)] {
        let mut spec = ScenarioSpec::new(study, 500, 1000, SEED + 6);
        spec.estimators = vec![family(ModelFamily::IUn), family(ModelFamily::IAdj)];
        match run_monte_carlo(&spec) {
            Ok(run) => {
                let un = run.cell("I-un", Estimand::Lambda10, Method::Ctw).map(|s| s.ese);
                let adj = run.cell("I-adj", Estimand::Lambda10, Method::Ctw).map(|s| s.ese);
                let (Some(un), Some(adj)) = (un, adj) else {
                    c.check(false, format!("study {study}: missing cells"));
                    continue;
                };
                let ratio = adj / un;
                if want_gain {
                    c.check(
                        ratio <= ADJ_GAIN_MAX,
                        format!("study I: ESE(I-adj)/ESE(I-un) = {ratio:.3} ≤ {ADJ_GAIN_MAX}"),
                    );
                } else {
                    c.check(
                        ratio >= UNRELATED_RATIO_MIN,
                        format!("study III: ESE(I-adj)/ESE(I-un) = {ratio:.3} ≥ {UNRELATED_RATIO_MIN}"),
                    );
                }
            }
            Err(e) => c.check(false, format!("study {study}: {e}")),
        }
    }
    c
}

fn sd(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

fn criterion7(run: &MonteCarloRun) -> Criterion {
    let mut c = Criterion::new(7, "PIM interaction terms vanish asymptotically (N=500, 500 replicates)");
    c.details.push("uses replicates 0..499 of the criterion 5 run (identical streams to a 500-replicate run)".into());
    for (base, other) in [(ModelFamily::P, ModelFamily::PInt), (ModelFamily::PAcv, ModelFamily::PAdj)] {
        let (a, b) = match (run.estimates(family(base), Estimand::Tau), run.estimates(family(other), Estimand::Tau)) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(e), _) | (_, Err(e)) => {
                c.check(false, e.to_string());
                continue;
            }
        };
        let pairs: Vec<(f64, f64)> =
            a.iter().zip(&b).take(PIM_REPLICATES).filter_map(|(x, y)| Some(((*x)?, (*y)?))).collect();
        if pairs.len() < PIM_REPLICATES {
            c.check(false, format!("{base}/{other}: only {} usable replicates", pairs.len()));
            continue;
        }
        let diff: Vec<f64> = pairs.iter().map(|(x, y)| x - y).collect();
        let est: Vec<f64> = pairs.iter().map(|(x, _)| *x).collect();
        let (d, e) = (sd(&diff), sd(&est));
        c.check(
            d <= PIM_RATIO_MAX * e,
            format!("sd({base} − {other}) = {d:.5} ≤ {PIM_RATIO_MAX}·ESE({base}) = {:.5}", PIM_RATIO_MAX * e),
        );
    }
    c
}

fn criterion9() -> Criterion {
    let mut c = Criterion::new(9, "simulate output is byte-identical at --threads 1 and --threads 8");
    let dir = tempfile::tempdir().expect("temp dir");
    let scenario = dir.path().join("scenario.json");
    let text = format!(r#"{{"study": "V-II", "n": 60, "replicates": 40, "seed": {SEED}, "raw": true}}"#);
    fs::write(&scenario, text).expect("write scenario");
    let run = |threads: &str, out: &Path| {
        Command::new(env!("CARGO_BIN_EXE_paircausal"))
            .args(["--threads", threads, "simulate", "--scenario"])
            .arg(&scenario)
            .arg("--out")
            .arg(out)
            .output()
    };
    let (one, eight) = (dir.path().join("t1"), dir.path().join("t8"));
    for (threads, out) in [("1", &one), ("8", &eight)] {
        match run(threads, out) {
            Ok(o) if o.status.success() => {}
            Ok(o) => c.check(false, format!("--threads {threads}: {}", String::from_utf8_lossy(&o.stderr).trim())),
            Err(e) => c.check(false, format!("--threads {threads}: {e}")),
        }
    }
    for file in ["summary.csv", "report.json", "raw.csv"] {
        match (fs::read(one.join(file)), fs::read(eight.join(file))) {
            (Ok(a), Ok(b)) => {
                c.check(a == b && !a.is_empty(), format!("{file}: {} bytes, identical = {}", a.len(), a == b))
            }
            _ => c.check(false, format!("{file} missing")),
        }
    }
    c
}

fn main() {
    let start = Instant::now();
    let mut criteria = Vec::new();

    let mut c = Criterion::new(1, "algebraic equivalences A(none) ≡ I(none), τ_P ≡ τ_I on 100 datasets");
    suite(&mut c, equivalence_suite(SEED + 1, 100), 100, EQUIVALENCE_TOL, 10.0);
    criteria.push(c);

    let mut c = Criterion::new(2, "enumeration mean of λ̂_I(1,0) equals λ_U(1,0), 20 populations, N=8, N1=4");
    suite(&mut c, enumeration_suite(SEED + 2, 20, 8, 4), 20, ENUMERATION_TOL, 10.0);
    criteria.push(c);

    let mut c = Criterion::new(3, "streamed HR/CR/TW/CTW equal the dense reference on 50 datasets, N ≤ 12");
    suite(&mut c, dense_reference_suite(SEED + 3, 50, Mutation::None), 50, DENSE_TOL, 30.0);
    match dense_reference_suite(SEED + 3, 50, Mutation::FlipCorrectionSign) {
        Ok(s) => c.check(
            !s.failures.is_empty(),
            format!("flipped CTW correction caught in {} comparisons", s.failures.len()),
        ),
        Err(e) => c.check(false, format!("mutation run: {e}")),
    }
    criteria.push(c);

    let mut c = Criterion::new(4, "proposition suite on 50 populations");
    suite(&mut c, proposition_suite(SEED + 4, 50), 50, PROPOSITION_TOL, 30.0);
    criteria.push(c);

    let full = run_monte_carlo(&ScenarioSpec::new(Study::VI, 500, 1000, SEED + 5));
    let reduced_start = Instant::now();
    let reduced = run_monte_carlo(&ScenarioSpec::new(Study::VI, 200, 500, SEED + 5));
    let reduced_seconds = reduced_start.elapsed().as_secs_f64();
    match (&full, &reduced) {
        (Ok(run), Ok(red)) => {
            criteria.push(criterion5(run, red, reduced_seconds));
            criteria.push(criterion6());
            criteria.push(criterion7(run));
        }
        (Err(e), _) | (_, Err(e)) => {
            for (id, title) in [
                (5, "study V-I variance method comparison"),
                (6, "covariate adjustment pattern"),
                (7, "PIM equivalence"),
            ] {
                let mut c = Criterion::new(id, title);
                c.check(false, format!("simulation error: {e}"));
                criteria.push(c);
            }
        }
    }
    criteria.sort_by_key(|c| c.id);

    let mut c = Criterion::new(8, "|λ_V − λ_U| ≤ 2·max|w|/N on 100 populations, N in [10, 200]");
    suite(&mut c, estimand_gap_suite(SEED + 8, 100), 100, 1.0, 60.0);
    criteria.push(c);

    criteria.push(criterion9());

    for c in &criteria {
        c.print();
    }
    let passed = criteria.iter().filter(|c| c.pass).count();
    println!("acceptance: {passed}/{} criteria passed in {:.1} s", criteria.len(), start.elapsed().as_secs_f64());
    if passed != criteria.len() {
        std::process::exit(1);
    }
}
