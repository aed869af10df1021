//! Runs a set of estimators and variance methods on one dataset, sharing the
//! pair sweeps between all pair-based families.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::contrasts::ContrastSpec;
use crate::error::{Error, Result};
use crate::estimators::{
    fit_averaged, fit_pair_family, select_submodel, Adjustment, Estimand, FitResult, ModelFamily, PairDesign,
    PairMoments, Submodel,
};
use crate::pairs::{per_unit_averages, ObservedDataset};
use crate::variance::{AveragedParts, Method, MissingResidualRule, PairScores, VarianceReport};

/// A fitted family, or a per-unit average family whose submodel is chosen
/// per estimand by the smaller CTW variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Estimator {
    Family(ModelFamily),
    Selected(Adjustment),
}

impl Estimator {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "A-acv" => Ok(Estimator::Selected(Adjustment::Ancova)),
            "A-adj" => Ok(Estimator::Selected(Adjustment::Interacted)),
            other => ModelFamily::parse(other).map(Estimator::Family),
        }
    }

    pub fn name(self) -> String {
        match self {
            Estimator::Family(f) => f.name(),
            Estimator::Selected(Adjustment::Ancova) => "A-acv".into(),
            Estimator::Selected(Adjustment::Interacted) => "A-adj".into(),
            Estimator::Selected(Adjustment::None) => "A-un".into(),
        }
    }

    /// Estimands this estimator reports; PIM families target τ only.
    pub fn estimands(self) -> &'static [Estimand] {
        match self {
            Estimator::Family(f) if f.is_pim() => &[Estimand::Tau],
            _ => &Estimand::ALL,
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl TryFrom<String> for Estimator {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        Estimator::parse(&s)
    }
}

impl From<Estimator> for String {
    fn from(e: Estimator) -> String {
        e.name()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisPlan {
    pub estimators: Vec<Estimator>,
    pub methods: Vec<Method>,
    pub rule: MissingResidualRule,
}

/// One estimand of one estimator with the requested variance methods.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimandResult {
    pub estimand: Estimand,
    /// The family actually fitted (the chosen submodel for selected estimators).
    pub family: ModelFamily,
    pub estimate: f64,
    pub variances: Vec<(Method, Result<VarianceReport>)>,
}

impl EstimandResult {
    pub fn se(&self, method: Method) -> Option<Result<f64>> {
        self.variances.iter().find(|(m, _)| *m == method).map(|(_, r)| match r {
            Ok(report) => report
                .se(self.estimand)
                .ok_or_else(|| Error::Input(format!("{} has no {} variance", self.family, self.estimand))),
            Err(e) => Err(e.clone()),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorOutput {
    pub estimator: Estimator,
    pub result: Result<Vec<EstimandResult>>,
}

struct Fitted {
    fit: FitResult,
    reports: Vec<(Method, Result<VarianceReport>)>,
}

impl Fitted {
    fn report(&self, method: Method) -> Option<&VarianceReport> {
        self.reports.iter().find(|(m, _)| *m == method).and_then(|(_, r)| r.as_ref().ok())
    }

    fn results(&self, estimands: &[Estimand], methods: &[Method]) -> Vec<EstimandResult> {
        estimands.iter().map(|&e| self.result(e, methods)).collect()
    }

    fn result(&self, estimand: Estimand, methods: &[Method]) -> EstimandResult {
        let variances = methods
            .iter()
            .map(|&m| {
                let r = self.reports.iter().find(|(k, _)| *k == m).map(|(_, r)| r.clone());
                (m, r.unwrap_or_else(|| Err(Error::Input(format!("{m} was not computed")))))
            })
            .collect();
        EstimandResult {
            estimand,
            family: self.fit.family,
            estimate: self.fit.estimate(estimand).unwrap_or(f64::NAN),
            variances,
        }
    }
}

fn averaged_key(e: Estimator) -> Vec<(Adjustment, Submodel)> {
    match e {
        Estimator::Family(ModelFamily::AUn) => vec![(Adjustment::None, Submodel::Row)],
        Estimator::Family(ModelFamily::AAcv(o)) => vec![(Adjustment::Ancova, o)],
        Estimator::Family(ModelFamily::AAdj(o)) => vec![(Adjustment::Interacted, o)],
        Estimator::Selected(adj) => vec![(adj, Submodel::Row), (adj, Submodel::Col)],
        Estimator::Family(_) => vec![],
    }
}

/// Fits every requested estimator with one moment sweep and one score sweep
/// for all pair-based families. Failures are reported per estimator.
pub fn analyze(ds: &ObservedDataset, spec: &ContrastSpec, plan: &AnalysisPlan) -> Result<Vec<EstimatorOutput>> {
    ds.check_contrast(spec)?;
    let mut methods = plan.methods.clone();
    if !methods.contains(&Method::Ctw) {
        methods.push(Method::Ctw);
    }

    let mut pair_families: Vec<ModelFamily> = Vec::new();
    for e in &plan.estimators {
        if let Estimator::Family(f) = e {
            if !f.is_averaged() && !pair_families.contains(f) {
                pair_families.push(*f);
            }
        }
    }
    let mut pair: Vec<(ModelFamily, Result<Fitted>)> = Vec::new();
    if !pair_families.is_empty() {
        let concordant =
            pair_families.iter().any(|&f| PairDesign::new(f, ds.dx()).map(|d| d.needs_concordant()).unwrap_or(false));
        let moments = PairMoments::compute(ds, spec, concordant);
        let fits: Vec<(ModelFamily, Result<FitResult>)> =
            pair_families.iter().map(|&f| (f, fit_pair_family(ds, f, &moments))).collect();
        let ok: Vec<&FitResult> = fits.iter().filter_map(|(_, r)| r.as_ref().ok()).collect();
        let mut scores = PairScores::compute(ds, spec, &ok)?.into_iter();
        for (f, r) in fits {
            let fitted = r.map(|fit| {
                let s = scores.next().expect("one score set per fitted design");
                let reports = methods.iter().map(|&m| (m, s.report(&fit, m))).collect();
                Fitted { fit, reports }
            });
            pair.push((f, fitted));
        }
    }

    let mut keys: Vec<(Adjustment, Submodel)> = Vec::new();
    for e in &plan.estimators {
        for k in averaged_key(*e) {
            if !keys.contains(&k) {
                keys.push(k);
            }
        }
    }
    let mut averaged: Vec<((Adjustment, Submodel), Result<Fitted>)> = Vec::new();
    if !keys.is_empty() {
        let avg = per_unit_averages(ds, spec)?;
        for (adj, o) in keys {
            let fitted = fit_averaged(ds, &avg, adj, o).and_then(|fit| {
                let parts = AveragedParts::new(&fit, &avg, plan.rule)?;
                let name = fit.family.name();
                let reports = methods.iter().map(|&m| (m, parts.report(o, m, &name))).collect();
                Ok(Fitted { fit, reports })
            });
            averaged.push(((adj, o), fitted));
        }
    }

    let find_pair = |f: ModelFamily| pair.iter().find(|(k, _)| *k == f).map(|(_, r)| r).expect("fitted above");
    let find_avg =
        |k: (Adjustment, Submodel)| averaged.iter().find(|(j, _)| *j == k).map(|(_, r)| r).expect("fitted above");
    let outputs = plan
        .estimators
        .iter()
        .map(|&estimator| {
            let result = match estimator {
                Estimator::Family(f) if !f.is_averaged() => match find_pair(f) {
                    Ok(fitted) => Ok(fitted.results(estimator.estimands(), &plan.methods)),
                    Err(e) => Err(e.clone()),
                },
                Estimator::Family(_) => match find_avg(averaged_key(estimator)[0]) {
                    Ok(fitted) => Ok(fitted.results(estimator.estimands(), &plan.methods)),
                    Err(e) => Err(e.clone()),
                },
                Estimator::Selected(adj) => match (find_avg((adj, Submodel::Row)), find_avg((adj, Submodel::Col))) {
                    (Ok(first), Ok(second)) => estimator
                        .estimands()
                        .iter()
                        .map(|&e| {
                            let chosen = select_submodel(
                                (&first.fit, first.report(Method::Ctw)),
                                (&second.fit, second.report(Method::Ctw)),
                                e,
                            )?;
                            let fitted = if std::ptr::eq(chosen, &first.fit) { first } else { second };
                            Ok(fitted.result(e, &plan.methods))
                        })
                        .collect(),
                    (Err(e), _) | (_, Err(e)) => Err(e.clone()),
                },
            };
            EstimatorOutput { estimator, result }
        })
        .collect();
    Ok(outputs)
}

/// SHA-256 of the JSON serialization, recorded in reports for provenance.
pub fn config_hash<T: Serialize>(config: &T) -> Result<String> {
    let bytes = serde_json::to_vec(config).map_err(|e| Error::Config(e.to_string()))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{estimate, net_benefit};
    use crate::pairs::tests::{dataset_strategy, t4};
    use crate::variance::variance;
    use proptest::prelude::*;

    fn all_estimators() -> Vec<Estimator> {
        [
            "I-un", "I-acv", "I-adj", "A-un", "A1-acv", "A2-acv", "A1-adj", "A2-adj", "A-acv", "A-adj", "P", "P-acv",
            "P-int", "P-adj",
        ]
        .iter()
        .map(|s| Estimator::parse(s).unwrap())
        .collect()
    }

    #[test]
    fn names_round_trip() {
        for e in all_estimators() {
            assert_eq!(Estimator::parse(&e.name()).unwrap(), e);
        }
        assert!(Estimator::parse("B-un").is_err());
        let json = serde_json::to_string(&Estimator::Selected(Adjustment::Ancova)).unwrap();
        assert_eq!(json, "\"A-acv\"");
    }

    #[test]
    fn t4_unadjusted() {
        let plan = AnalysisPlan {
            estimators: vec![Estimator::Family(ModelFamily::IUn), Estimator::Family(ModelFamily::P)],
            methods: vec![Method::Ctw, Method::Cr],
            rule: MissingResidualRule::default(),
        };
        let out = analyze(&t4(), &ContrastSpec::WinStrict, &plan).unwrap();
        let i = out[0].result.as_ref().unwrap();
        assert_eq!(i[0].estimate, 0.75);
        assert_eq!(i[0].se(Method::Ctw).unwrap().unwrap(), 0.125);
        let p = out[1].result.as_ref().unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].estimand, Estimand::Tau);
        let direct = estimate(&t4(), &ContrastSpec::WinStrict, ModelFamily::P).unwrap();
        assert_eq!(p[0].estimate, net_benefit(&direct));
    }

    #[test]
    fn cr_on_averaged_family_is_a_mismatch() {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(1);
        let ds = crate::validation::random_dataset(&mut rng, 12, 1, 2, false, 3).unwrap();
        let plan = AnalysisPlan {
            estimators: vec![Estimator::Family(ModelFamily::AAdj(Submodel::Row))],
            methods: vec![Method::Cr],
            rule: MissingResidualRule::default(),
        };
        let out = analyze(&ds, &ContrastSpec::Difference, &plan).unwrap();
        let r = &out[0].result.as_ref().unwrap()[0];
        assert!(matches!(r.se(Method::Cr), Some(Err(Error::MethodMismatch { .. }))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn shared_sweeps_match_single_fits(ds in dataset_strategy(1, 2)) {
            let spec = ContrastSpec::WinHalfTie;
            let plan = AnalysisPlan {
                estimators: all_estimators(),
                methods: Method::ALL.to_vec(),
                rule: MissingResidualRule::default(),
            };
            let out = analyze(&ds, &spec, &plan).unwrap();
            for o in &out {
                let Estimator::Family(f) = o.estimator else { continue };
                let (Ok(rows), Ok(fit)) = (&o.result, estimate(&ds, &spec, f)) else { continue };
                for row in rows {
                    prop_assert_eq!(row.estimate, fit.estimate(row.estimand).unwrap());
                    for &m in &Method::ALL {
                        match (row.se(m).unwrap(), variance(&fit, &ds, &spec, m)) {
                            (Ok(a), Ok(b)) => {
                                let b = b.se(row.estimand).unwrap();
                                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "{} {} {}: {} vs {}", f, row.estimand, m, a, b);
                            }
                            (Err(_), Err(_)) => {}
                            (a, b) => prop_assert!(false, "{} {}: {:?} vs {:?}", f, m, a, b),
                        }
                    }
                }
            }
        }
    }
}
