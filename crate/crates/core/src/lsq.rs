//! Ordinary least squares through accumulated normal equations.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Reciprocal condition number (of the diagonally equilibrated Gram matrix)
/// below which a design is treated as rank deficient.
pub const RCOND_MIN: f64 = 1e-12;

/// Running `Σ z zᵀ`, `Σ z w` over design rows.
#[derive(Debug, Clone, PartialEq)]
pub struct GramAccumulator {
    p: usize,
    gram: Vec<f64>,
    moment: Vec<f64>,
    rows: u64,
}

impl GramAccumulator {
    pub fn new(p: usize) -> Self {
        Self { p, gram: vec![0.0; p * p], moment: vec![0.0; p], rows: 0 }
    }

    pub fn dimension(&self) -> usize {
        self.p
    }

    pub fn row_count(&self) -> u64 {
        self.rows
    }

    /// Checked version of [`GramAccumulator::push`].
    pub fn accumulate(&mut self, z: &[f64], w: f64) -> Result<()> {
        if z.len() != self.p {
            return Err(Error::Input(format!("design row has length {}, expected {}", z.len(), self.p)));
        }
        if !w.is_finite() || z.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("design row or response is not finite".into()));
        }
        self.push(z, w);
        Ok(())
    }

    #[inline]
    pub fn push(&mut self, z: &[f64], w: f64) {
        let p = self.p;
        for a in 0..p {
            let za = z[a];
            if za == 0.0 {
                continue;
            }
            self.moment[a] += za * w;
            let row = &mut self.gram[a * p..(a + 1) * p];
            for (g, zb) in row.iter_mut().zip(z) {
                *g += za * zb;
            }
        }
        self.rows += 1;
    }

    pub fn merge(&mut self, other: &GramAccumulator) {
        assert_eq!(self.p, other.p, "merging accumulators of different width");
        for (a, b) in self.gram.iter_mut().zip(&other.gram) {
            *a += b;
        }
        for (a, b) in self.moment.iter_mut().zip(&other.moment) {
            *a += b;
        }
        self.rows += other.rows;
    }

    /// Adds precomputed sums (used when rows are aggregated elsewhere).
    pub fn add_sums(&mut self, gram: &DMatrix<f64>, moment: &DVector<f64>, rows: u64) {
        let p = self.p;
        for a in 0..p {
            self.moment[a] += moment[a];
            for b in 0..p {
                self.gram[a * p + b] += gram[(a, b)];
            }
        }
        self.rows += rows;
    }

    pub fn gram(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.p, self.p, &self.gram)
    }

    pub fn moment(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.moment)
    }

    pub fn solve(&self, labels: &[String]) -> Result<Coefficients> {
        let factor = SpdFactor::new(&self.gram(), labels)?;
        let beta = factor.solve(&self.moment());
        Ok(Coefficients { beta: beta.iter().copied().collect(), labels: labels.to_vec() })
    }
}

/// Fitted regression coefficients with their column labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    pub beta: Vec<f64>,
    pub labels: Vec<String>,
}

impl Coefficients {
    pub fn residual(&self, z: &[f64], w: f64) -> f64 {
        w - z.iter().zip(&self.beta).map(|(a, b)| a * b).sum::<f64>()
    }
}

/// Cholesky factor of a Gram matrix that passed the rank check.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    chol: Cholesky<f64, Dyn>,
}

impl SpdFactor {
    pub fn new(gram: &DMatrix<f64>, labels: &[String]) -> Result<Self> {
        let p = gram.nrows();
        let label = |k: usize| labels.get(k).cloned().unwrap_or_else(|| format!("column {k}"));
        if p == 0 {
            return Err(Error::Input("empty design".into()));
        }
        let diag: Vec<f64> = (0..p).map(|k| gram[(k, k)]).collect();
        let dead: Vec<String> = (0..p).filter(|&k| diag[k].is_nan() || diag[k] <= 0.0).map(label).collect();
        if !dead.is_empty() {
            return Err(Error::RankDeficient { columns: dead, rcond: 0.0 });
        }
        let scaled = DMatrix::from_fn(p, p, |a, b| gram[(a, b)] / (diag[a] * diag[b]).sqrt());
        let eig = SymmetricEigen::new(scaled);
        let (mut kmin, mut kmax) = (0, 0);
        for k in 1..p {
            if eig.eigenvalues[k] < eig.eigenvalues[kmin] {
                kmin = k;
            }
            if eig.eigenvalues[k] > eig.eigenvalues[kmax] {
                kmax = k;
            }
        }
        let rcond = eig.eigenvalues[kmin] / eig.eigenvalues[kmax];
        if rcond.is_nan() || rcond < RCOND_MIN {
            let v = eig.eigenvectors.column(kmin);
            let top = v.amax();
            let columns = (0..p).filter(|&k| v[k].abs() >= 0.1 * top).map(label).collect();
            return Err(Error::RankDeficient { columns, rcond: rcond.max(0.0) });
        }
        let chol = Cholesky::new(gram.clone())
            .ok_or_else(|| Error::RankDeficient { columns: (0..p).map(label).collect(), rcond })?;
        Ok(Self { chol })
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(rhs)
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        let inv = self.chol.inverse();
        // Symmetrize so sandwiches built from it stay exactly symmetric.
        (&inv + inv.transpose()) * 0.5
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn labels(p: usize) -> Vec<String> {
        (0..p).map(|k| format!("z{k}")).collect()
    }

    #[test]
    fn zero_row_only_counts() {
        let mut acc = GramAccumulator::new(2);
        acc.accumulate(&[0.0, 0.0], 7.0).unwrap();
        assert_eq!(acc.row_count(), 1);
        assert_eq!(acc.gram(), DMatrix::zeros(2, 2));
        assert_eq!(acc.moment(), DVector::zeros(2));
    }

    #[test]
    fn unit_rows_give_identity() {
        let mut acc = GramAccumulator::new(2);
        acc.accumulate(&[1.0, 0.0], 3.0).unwrap();
        acc.accumulate(&[0.0, 1.0], 5.0).unwrap();
        assert_eq!(acc.gram(), DMatrix::identity(2, 2));
        assert_eq!(acc.solve(&labels(2)).unwrap().beta, vec![3.0, 5.0]);
    }

    #[test]
    fn diagonal_system() {
        let mut acc = GramAccumulator::new(2);
        acc.add_sums(&DMatrix::from_diagonal_element(2, 2, 4.0), &DVector::from_vec(vec![3.0, 1.0]), 8);
        let beta = acc.solve(&labels(2)).unwrap().beta;
        assert_relative_eq!(beta[0], 0.75, epsilon = 1e-15);
        assert_relative_eq!(beta[1], 0.25, epsilon = 1e-15);
    }

    #[test]
    fn duplicated_column_is_rank_deficient() {
        let mut acc = GramAccumulator::new(3);
        for (x, w) in [(1.0, 2.0), (2.0, 3.0), (-1.0, 0.5), (0.5, 1.0)] {
            acc.accumulate(&[1.0, x, x], w).unwrap();
        }
        match acc.solve(&labels(3)) {
            Err(Error::RankDeficient { columns, .. }) => {
                assert_eq!(columns, vec!["z1".to_string(), "z2".to_string()]);
            }
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }

    #[test]
    fn empty_column_is_named() {
        let mut acc = GramAccumulator::new(2);
        acc.accumulate(&[1.0, 0.0], 1.0).unwrap();
        let err = acc.solve(&labels(2)).unwrap_err();
        assert_eq!(err, Error::RankDeficient { columns: vec!["z1".into()], rcond: 0.0 });
    }

    #[test]
    fn rejects_non_finite_rows() {
        let mut acc = GramAccumulator::new(2);
        assert!(acc.accumulate(&[1.0, f64::NAN], 1.0).is_err());
        assert!(acc.accumulate(&[1.0], 1.0).is_err());
    }

    fn problem() -> impl Strategy<Value = (usize, Vec<Vec<f64>>, Vec<f64>)> {
        (1usize..=6).prop_flat_map(|p| {
            let n = 12;
            (
                Just(p),
                prop::collection::vec(prop::collection::vec(-3.0f64..3.0, p), n),
                prop::collection::vec(-5.0f64..5.0, n),
            )
        })
    }

    proptest! {
        #[test]
        fn matches_dense_least_squares((p, rows, w) in problem()) {
            let mut acc = GramAccumulator::new(p);
            for (z, y) in rows.iter().zip(&w) {
                acc.accumulate(z, *y).unwrap();
            }
            let beta = match acc.solve(&labels(p)) {
                Ok(c) => c.beta,
                Err(_) => return Ok(()),
            };
            let z = DMatrix::from_fn(rows.len(), p, |i, k| rows[i][k]);
            let y = DVector::from_column_slice(&w);
            let dense = z.clone().svd(true, true).solve(&y, 1e-14).unwrap();
            for k in 0..p {
                prop_assert!((beta[k] - dense[k]).abs() <= 1e-8 * (1.0 + dense[k].abs()));
            }
        }

        #[test]
        fn order_does_not_matter((p, rows, w) in problem(), seed in 0u64..1000) {
            let mut fwd = GramAccumulator::new(p);
            let mut perm: Vec<usize> = (0..rows.len()).collect();
            perm.sort_by_key(|&k| (k as u64).wrapping_mul(6364136223846793005).wrapping_add(seed) % 97);
            let mut shuffled = GramAccumulator::new(p);
            for k in 0..rows.len() {
                fwd.push(&rows[k], w[k]);
                shuffled.push(&rows[perm[k]], w[perm[k]]);
            }
            if let (Ok(a), Ok(b)) = (fwd.solve(&labels(p)), shuffled.solve(&labels(p))) {
                for k in 0..p {
                    prop_assert!((a.beta[k] - b.beta[k]).abs() <= 1e-9 * (1.0 + a.beta[k].abs()));
                }
            }
        }
    }
}
