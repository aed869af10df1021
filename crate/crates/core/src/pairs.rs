//! Observed data and lazily generated pairwise quantities.

use std::collections::HashSet;

use rayon::prelude::*;

use crate::contrasts::{ContrastSpec, OutcomeVector};
use crate::error::{Error, Result};

/// Units per parallel work item. Fixed so reductions are reproducible
/// regardless of the number of worker threads.
pub(crate) const ROW_CHUNK: usize = 32;

/// One experimental unit.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitRecord {
    pub id: String,
    pub treatment: u8,
    pub outcome: OutcomeVector,
    pub covariates: Vec<f64>,
}

/// A completely randomized experiment with both arms occupied.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedDataset {
    ids: Vec<String>,
    treatment: Vec<u8>,
    outcomes: Vec<f64>,
    covariates: Vec<f64>,
    covariate_names: Vec<String>,
    q: usize,
    d: usize,
    n1: usize,
}

impl ObservedDataset {
    pub fn new(units: Vec<UnitRecord>) -> Result<Self> {
        let first = units.first().ok_or_else(|| Error::Input("dataset has no units".into()))?;
        let (q, d) = (first.outcome.len(), first.covariates.len());
        let mut ids = Vec::with_capacity(units.len());
        let mut treatment = Vec::with_capacity(units.len());
        let mut outcomes = Vec::with_capacity(units.len() * q);
        let mut covariates = Vec::with_capacity(units.len() * d);
        for u in units {
            if u.outcome.len() != q {
                return Err(Error::Input(format!("unit {} has {} outcomes, expected {q}", u.id, u.outcome.len())));
            }
            if u.covariates.len() != d {
                return Err(Error::Input(format!("unit {} has {} covariates, expected {d}", u.id, u.covariates.len())));
            }
            ids.push(u.id);
            treatment.push(u.treatment);
            outcomes.extend_from_slice(u.outcome.as_slice());
            covariates.extend_from_slice(&u.covariates);
        }
        Self::from_columns(ids, treatment, outcomes, q, covariates, d)
    }

    /// Builds a dataset from row-major outcome (N×Q) and covariate (N×d) buffers.
    pub fn from_columns(
        ids: Vec<String>,
        treatment: Vec<u8>,
        outcomes: Vec<f64>,
        q: usize,
        covariates: Vec<f64>,
        d: usize,
    ) -> Result<Self> {
        let n = treatment.len();
        if n < 4 {
            return Err(Error::Input(format!("need at least 4 units, got {n}")));
        }
        if ids.len() != n {
            return Err(Error::Input(format!("{} ids for {n} units", ids.len())));
        }
        if q == 0 {
            return Err(Error::Input("outcome dimension must be at least 1".into()));
        }
        if outcomes.len() != n * q || covariates.len() != n * d {
            return Err(Error::Input("outcome or covariate buffer has the wrong length".into()));
        }
        if let Some(i) = treatment.iter().position(|&a| a > 1) {
            return Err(Error::Input(format!("unit {} has treatment {}, expected 0 or 1", ids[i], treatment[i])));
        }
        if let Some(k) = outcomes.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!("unit {} has a non-finite outcome", ids[k / q])));
        }
        if let Some(k) = covariates.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!("unit {} has a non-finite covariate", ids[k / d])));
        }
        let mut seen = HashSet::with_capacity(n);
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::Input(format!("duplicate unit id {id}")));
            }
        }
        let n1 = treatment.iter().filter(|&&a| a == 1).count();
        if n1 == 0 || n1 == n {
            return Err(Error::Precondition(format!("arm {} is empty", if n1 == 0 { 1 } else { 0 })));
        }
        let covariate_names = (1..=d).map(|k| format!("x{k}")).collect();
        Ok(Self { ids, treatment, outcomes, covariates, covariate_names, q, d, n1 })
    }

    pub fn with_covariate_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.d {
            return Err(Error::Input(format!("{} covariate names for {} covariates", names.len(), self.d)));
        }
        self.covariate_names = names;
        Ok(self)
    }

    /// Same units and outcomes, different covariates.
    pub fn replace_covariates(&self, covariates: Vec<f64>, d: usize) -> Result<Self> {
        Self::from_columns(self.ids.clone(), self.treatment.clone(), self.outcomes.clone(), self.q, covariates, d)
    }

    /// Units reordered by `perm` (new position k holds old unit `perm[k]`).
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let ids = perm.iter().map(|&i| self.ids[i].clone()).collect();
        let treatment = perm.iter().map(|&i| self.treatment[i]).collect();
        let outcomes = perm.iter().flat_map(|&i| self.outcome(i).iter().copied()).collect();
        let covariates = perm.iter().flat_map(|&i| self.covariates(i).iter().copied()).collect();
        Self::from_columns(ids, treatment, outcomes, self.q, covariates, self.d)?
            .with_covariate_names(self.covariate_names.clone())
    }

    pub fn n(&self) -> usize {
        self.treatment.len()
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n0(&self) -> usize {
        self.n() - self.n1
    }

    pub fn arm_size(&self, a: u8) -> usize {
        if a == 1 {
            self.n1
        } else {
            self.n0()
        }
    }

    pub fn pi(&self, a: u8) -> f64 {
        self.arm_size(a) as f64 / self.n() as f64
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn dx(&self) -> usize {
        self.d
    }

    pub fn id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn treatment(&self, i: usize) -> u8 {
        self.treatment[i]
    }

    pub fn treatments(&self) -> &[u8] {
        &self.treatment
    }

    pub fn outcome(&self, i: usize) -> &[f64] {
        &self.outcomes[i * self.q..(i + 1) * self.q]
    }

    pub fn covariates(&self, i: usize) -> &[f64] {
        &self.covariates[i * self.d..(i + 1) * self.d]
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    /// Validates the contrast and checks it consumes this dataset's Q.
    pub fn check_contrast(&self, spec: &ContrastSpec) -> Result<()> {
        spec.validate()?;
        if spec.dimension() != self.q {
            return Err(Error::Input(format!("contrast expects Q = {}, dataset has Q = {}", spec.dimension(), self.q)));
        }
        Ok(())
    }

    #[inline]
    pub(crate) fn contrast(&self, spec: &ContrastSpec, i: usize, j: usize) -> f64 {
        spec.eval(self.outcome(i), self.outcome(j))
    }
}

/// Which ordered pairs a stream visits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairFilter {
    All,
    DiscordantOnly,
}

/// One ordered pair `(i, j)` with its observed contrast and covariate difference.
#[derive(Debug, Clone, PartialEq)]
pub struct PairTerm {
    pub i: usize,
    pub j: usize,
    pub w: f64,
    pub x: Vec<f64>,
    pub a_i: u8,
    pub a_j: u8,
}

/// Row-major iterator over ordered pairs; terms are built on demand.
pub struct PairStream<'a> {
    ds: &'a ObservedDataset,
    spec: &'a ContrastSpec,
    filter: PairFilter,
    i: usize,
    j: usize,
}

impl Iterator for PairStream<'_> {
    type Item = PairTerm;

    fn next(&mut self) -> Option<PairTerm> {
        let n = self.ds.n();
        while self.i < n {
            let (i, j) = (self.i, self.j);
            self.j += 1;
            if self.j == n {
                self.j = 0;
                self.i += 1;
            }
            if i == j {
                continue;
            }
            let (a_i, a_j) = (self.ds.treatment(i), self.ds.treatment(j));
            if self.filter == PairFilter::DiscordantOnly && a_i == a_j {
                continue;
            }
            let x = self.ds.covariates(i).iter().zip(self.ds.covariates(j)).map(|(a, b)| a - b).collect();
            return Some(PairTerm { i, j, w: self.ds.contrast(self.spec, i, j), x, a_i, a_j });
        }
        None
    }
}

pub fn stream_ordered_pairs<'a>(
    ds: &'a ObservedDataset,
    spec: &'a ContrastSpec,
    filter: PairFilter,
) -> Result<PairStream<'a>> {
    ds.check_contrast(spec)?;
    Ok(PairStream { ds, spec, filter, i: 0, j: 0 })
}

/// Per-unit means of contrasts against the opposite arm.
#[derive(Debug, Clone, PartialEq)]
pub struct AveragedDataset {
    pub treatment: Vec<u8>,
    pub wbar_row: Vec<f64>,
    pub wbar_col: Vec<f64>,
    xbar_row: Vec<f64>,
    xbar_col: Vec<f64>,
    d: usize,
}

impl AveragedDataset {
    pub fn n(&self) -> usize {
        self.treatment.len()
    }

    pub fn dx(&self) -> usize {
        self.d
    }

    pub fn xbar_row(&self, i: usize) -> &[f64] {
        &self.xbar_row[i * self.d..(i + 1) * self.d]
    }

    pub fn xbar_col(&self, i: usize) -> &[f64] {
        &self.xbar_col[i * self.d..(i + 1) * self.d]
    }
}

pub fn per_unit_averages(ds: &ObservedDataset, spec: &ContrastSpec) -> Result<AveragedDataset> {
    ds.check_contrast(spec)?;
    let d = ds.dx();
    let rows: Vec<(f64, f64, Vec<f64>)> = (0..ds.n())
        .into_par_iter()
        .with_min_len(ROW_CHUNK)
        .map(|i| {
            let a = ds.treatment(i);
            let (mut row, mut col) = (0.0, 0.0);
            let mut x = vec![0.0; d];
            for j in (0..ds.n()).filter(|&j| ds.treatment(j) != a) {
                row += ds.contrast(spec, i, j);
                col += ds.contrast(spec, j, i);
                for (k, xk) in x.iter_mut().enumerate() {
                    *xk += ds.covariates(i)[k] - ds.covariates(j)[k];
                }
            }
            let m = ds.arm_size(1 - a) as f64;
            x.iter_mut().for_each(|v| *v /= m);
            (row / m, col / m, x)
        })
        .collect();
    let mut out = AveragedDataset {
        treatment: ds.treatments().to_vec(),
        wbar_row: Vec::with_capacity(ds.n()),
        wbar_col: Vec::with_capacity(ds.n()),
        xbar_row: Vec::with_capacity(ds.n() * d),
        xbar_col: Vec::with_capacity(ds.n() * d),
        d,
    };
    for (row, col, x) in rows {
        out.wbar_row.push(row);
        out.wbar_col.push(col);
        out.xbar_col.extend(x.iter().map(|v| -v));
        out.xbar_row.extend(x);
    }
    Ok(out)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    /// N = 4, A = (1,1,0,0), Y = (3,1,2,0), one covariate.
    pub(crate) fn t4() -> ObservedDataset {
        ObservedDataset::from_columns(
            (1..=4).map(|k| k.to_string()).collect(),
            vec![1, 1, 0, 0],
            vec![3.0, 1.0, 2.0, 0.0],
            1,
            vec![0.5, -1.0, 2.0, 0.0],
            1,
        )
        .unwrap()
    }

    #[test]
    fn counts_pairs() {
        let ds = t4();
        let spec = ContrastSpec::WinStrict;
        assert_eq!(stream_ordered_pairs(&ds, &spec, PairFilter::All).unwrap().count(), 12);
        let disc: Vec<_> = stream_ordered_pairs(&ds, &spec, PairFilter::DiscordantOnly).unwrap().collect();
        assert_eq!(disc.len(), 8);
        assert_eq!(disc.iter().filter(|t| t.a_i == 1).count(), 4);
    }

    #[test]
    fn t4_treated_control_contrasts() {
        let ds = t4();
        let got: Vec<(usize, usize, f64)> =
            stream_ordered_pairs(&ds, &ContrastSpec::WinStrict, PairFilter::DiscordantOnly)
                .unwrap()
                .filter(|t| t.a_i == 1)
                .map(|t| (t.i + 1, t.j + 1, t.w))
                .collect();
        assert_eq!(got, vec![(1, 3, 1.0), (1, 4, 1.0), (2, 3, 0.0), (2, 4, 1.0)]);
    }

    #[test]
    fn t4_row_averages() {
        let avg = per_unit_averages(&t4(), &ContrastSpec::WinStrict).unwrap();
        assert_eq!(avg.wbar_row, vec![1.0, 0.5, 0.5, 0.0]);
        assert_eq!(avg.wbar_col, vec![0.0, 0.5, 0.5, 1.0]);
    }

    #[test]
    fn all_ties_average_half() {
        let ds = ObservedDataset::from_columns(
            (0..5).map(|k| k.to_string()).collect(),
            vec![1, 0, 1, 0, 0],
            vec![2.0; 5],
            1,
            vec![],
            0,
        )
        .unwrap();
        let avg = per_unit_averages(&ds, &ContrastSpec::WinHalfTie).unwrap();
        assert!(avg.wbar_row.iter().all(|&w| w == 0.5));
    }

    #[test]
    fn rejects_invalid_layouts() {
        let ids: Vec<String> = (0..4).map(|k| k.to_string()).collect();
        let one_arm = ObservedDataset::from_columns(ids.clone(), vec![1; 4], vec![0.0; 4], 1, vec![], 0);
        assert!(matches!(one_arm, Err(Error::Precondition(_))));
        let dup = ObservedDataset::from_columns(
            vec!["a".into(), "a".into(), "b".into(), "c".into()],
            vec![1, 0, 1, 0],
            vec![0.0; 4],
            1,
            vec![],
            0,
        );
        assert!(dup.is_err());
        let small = ObservedDataset::from_columns(ids[..3].to_vec(), vec![1, 0, 1], vec![0.0; 3], 1, vec![], 0);
        assert!(small.is_err());
        let nan = ObservedDataset::from_columns(ids, vec![1, 0, 1, 0], vec![0.0, f64::NAN, 0.0, 0.0], 1, vec![], 0);
        assert!(nan.is_err());
        assert!(stream_ordered_pairs(
            &t4(),
            &ContrastSpec::WeightedAggregate {
                weights: vec![0.5, 0.5],
                components: vec![ContrastSpec::WinStrict, ContrastSpec::WinStrict],
            },
            PairFilter::All
        )
        .is_err());
    }

    pub(crate) fn dataset_strategy(q: usize, d: usize) -> impl Strategy<Value = ObservedDataset> {
        (6usize..=14).prop_flat_map(move |n| {
            (
                prop::collection::vec(0u8..=1, n),
                prop::collection::vec(-3i32..=3, n * q),
                prop::collection::vec(-2.0f64..2.0, n * d),
            )
                .prop_filter_map("both arms", move |(mut a, y, x)| {
                    a[0] = 1;
                    a[1] = 0;
                    ObservedDataset::from_columns(
                        (0..n).map(|k| format!("u{k}")).collect(),
                        a,
                        y.into_iter().map(f64::from).collect(),
                        q,
                        x,
                        d,
                    )
                    .ok()
                })
        })
    }

    proptest! {
        #[test]
        fn pair_differences_cancel(ds in dataset_strategy(1, 3)) {
            let spec = ContrastSpec::Difference;
            let mut total = [0.0; 3];
            let mut max_abs: f64 = 0.0;
            for t in stream_ordered_pairs(&ds, &spec, PairFilter::All).unwrap() {
                for (s, v) in total.iter_mut().zip(&t.x) {
                    *s += v;
                }
                max_abs = t.x.iter().fold(max_abs, |m, v| m.max(v.abs()));
            }
            let n = ds.n() as f64;
            prop_assert!(total.iter().all(|v| v.abs() <= 1e-9 * n * n * max_abs.max(1.0)));
        }

        #[test]
        fn discordant_filter_is_a_restriction(ds in dataset_strategy(1, 1)) {
            let spec = ContrastSpec::WinHalfTie;
            let filtered: Vec<_> = stream_ordered_pairs(&ds, &spec, PairFilter::All)
                .unwrap()
                .filter(|t| t.a_i != t.a_j)
                .collect();
            let direct: Vec<_> = stream_ordered_pairs(&ds, &spec, PairFilter::DiscordantOnly).unwrap().collect();
            prop_assert_eq!(filtered, direct);
        }

        #[test]
        fn antisymmetric_pairs_sum_to_constant(ds in dataset_strategy(1, 0)) {
            let spec = ContrastSpec::WinHalfTie;
            for t in stream_ordered_pairs(&ds, &spec, PairFilter::All).unwrap() {
                let back = spec.eval(ds.outcome(t.j), ds.outcome(t.i));
                prop_assert_eq!(t.w + back, 1.0);
            }
        }

        #[test]
        fn column_average_mirrors_row_average(ds in dataset_strategy(1, 2)) {
            let avg = per_unit_averages(&ds, &ContrastSpec::Difference).unwrap();
            for i in 0..ds.n() {
                for k in 0..2 {
                    prop_assert_eq!(avg.xbar_col(i)[k], -avg.xbar_row(i)[k]);
                }
            }
        }
    }
}
