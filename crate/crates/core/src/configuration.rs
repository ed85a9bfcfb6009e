//! Configurations of `n` opinions with a cached correlation matrix.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, clamp_unit, dot, Opinion};

/// Symmetric matrix of pairwise correlations with unit diagonal.
///
/// Only the strict upper triangle is stored, so `get(i, j) == get(j, i)`
/// holds exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationMatrix {
    n: usize,
    upper: Vec<f64>,
}

impl CorrelationMatrix {
    fn zeros(n: usize) -> Self {
        CorrelationMatrix {
            n,
            upper: vec![0.0; n * n.saturating_sub(1) / 2],
        }
    }

    #[inline]
    fn index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < j && j < self.n);
        i * self.n - i * (i + 1) / 2 + (j - i - 1)
    }

    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        match i.cmp(&j) {
            std::cmp::Ordering::Equal => 1.0,
            std::cmp::Ordering::Less => self.upper[self.index(i, j)],
            std::cmp::Ordering::Greater => self.upper[self.index(j, i)],
        }
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, value: f64) {
        let k = if i < j { self.index(i, j) } else { self.index(j, i) };
        self.upper[k] = value;
    }

    /// Iterates `(i, j, A_ij)` over pairs `i < j` in lexicographic order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let n = self.n;
        (0..n).flat_map(move |i| ((i + 1)..n).map(move |j| (i, j, self.get(i, j))))
    }

    /// Dense row-major copy, mainly for display and tests.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j)).collect())
            .collect()
    }

    pub fn min_abs_off_diagonal(&self) -> f64 {
        self.upper.iter().fold(f64::INFINITY, |m, a| m.min(a.abs()))
    }

    /// Largest `min(|A_ij|, 1 - |A_ij|)` over pairs: the configuration is
    /// eps-active exactly when this exceeds `eps`.
    pub fn max_activity(&self) -> f64 {
        self.upper
            .iter()
            .fold(0.0, |m: f64, a| m.max(a.abs().min(1.0 - a.abs())))
    }
}

/// Ordered tuple of `n >= 2` opinions of a common dimension `d >= 2`.
#[derive(Clone, Debug, PartialEq)]
pub struct Configuration {
    n: usize,
    d: usize,
    coords: Vec<f64>,
    corr: CorrelationMatrix,
}

impl Configuration {
    pub fn new(opinions: Vec<Opinion>) -> Result<Self> {
        let n = opinions.len();
        if n < 2 {
            return Err(Error::InvalidParams(format!(
                "a configuration needs at least 2 opinions, got {n}"
            )));
        }
        let d = opinions[0].dim();
        let mut coords = Vec::with_capacity(n * d);
        for o in &opinions {
            if o.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: o.dim(),
                });
            }
            coords.extend_from_slice(o);
        }
        let mut config = Configuration {
            n,
            d,
            coords,
            corr: CorrelationMatrix::zeros(n),
        };
        config.refresh_correlations();
        Ok(config)
    }

    /// Normalizes each row and builds the configuration.
    pub fn from_rows<V: AsRef<[f64]>>(rows: &[V]) -> Result<Self> {
        let opinions = rows
            .iter()
            .map(|r| geometry::normalize(r.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        Configuration::new(opinions)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn opinion(&self, i: usize) -> &[f64] {
        &self.coords[i * self.d..(i + 1) * self.d]
    }

    pub fn opinions(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.d)
    }

    pub fn to_opinions(&self) -> Vec<Opinion> {
        self.opinions()
            .map(|o| Opinion::new(o.to_vec()).expect("stored opinions are unit norm"))
            .collect()
    }

    #[inline]
    pub fn correlation(&self, i: usize, j: usize) -> f64 {
        self.corr.get(i, j)
    }

    pub fn correlations(&self) -> &CorrelationMatrix {
        &self.corr
    }

    pub fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.n {
            return Err(Error::IndexOutOfRange { index: i, n: self.n });
        }
        Ok(())
    }

    /// Recomputes the full correlation matrix from the coordinates.
    pub fn refresh_correlations(&mut self) {
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                let a = clamp_unit(dot(self.opinion(i), self.opinion(j)));
                self.corr.set(i, j, a);
            }
        }
    }

    /// Overwrites opinion `i` and recomputes row/column `i` only.
    pub(crate) fn replace_opinion(&mut self, i: usize, new: &[f64]) {
        debug_assert_eq!(new.len(), self.d);
        let d = self.d;
        self.coords[i * d..(i + 1) * d].copy_from_slice(new);
        for k in 0..self.n {
            if k != i {
                let a = clamp_unit(dot(self.opinion(i), self.opinion(k)));
                self.corr.set(i, k, a);
            }
        }
    }

    /// Configuration with opinion `i` multiplied by `signs[i]`.
    pub fn flipped(&self, signs: &[i8]) -> Configuration {
        let opinions = self
            .opinions()
            .zip(signs)
            .map(|(o, &s)| Opinion::new(o.iter().map(|x| x * s as f64).collect()).unwrap())
            .collect();
        Configuration::new(opinions).expect("same shape")
    }
}

/// Serializable snapshot of a configuration (rows of coordinates).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigurationSnapshot {
    pub opinions: Vec<Vec<f64>>,
}

impl From<&Configuration> for ConfigurationSnapshot {
    fn from(c: &Configuration) -> Self {
        ConfigurationSnapshot {
            opinions: c.opinions().map(|o| o.to_vec()).collect(),
        }
    }
}

/// Builds the correlation matrix of an arbitrary list of opinions.
pub fn correlation_matrix(opinions: &[Opinion]) -> Result<CorrelationMatrix> {
    Ok(Configuration::new(opinions.to_vec())?.corr)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(d: usize, k: usize) -> Opinion {
        Opinion::basis(d, k).unwrap()
    }

    #[test]
    fn identical_opinions_give_all_ones() {
        let u = geometry::normalize(&[1.0, 2.0, 3.0]).unwrap();
        let m = correlation_matrix(&[u.clone(), u.clone(), u]).unwrap();
        for row in m.to_dense() {
            for a in row {
                assert!((a - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn orthonormal_basis_gives_identity() {
        let m = correlation_matrix(&[e(3, 0), e(3, 1), e(3, 2)]).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(m.get(i, j), if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn antipodal_plus_orthogonal() {
        let m = correlation_matrix(&[e(2, 0), e(2, 0).negated(), e(2, 1)]).unwrap();
        assert_eq!(m.get(0, 1), -1.0);
        assert_eq!(m.get(0, 2), 0.0);
        assert_eq!(m.get(1, 2), 0.0);
        assert_eq!(m.get(1, 0), m.get(0, 1));
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        assert!(matches!(
            Configuration::new(vec![e(2, 0), e(3, 0)]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn replace_touches_one_row() {
        let mut c = Configuration::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![1.0, 1.0, 0.0],
            vec![0.0, 1.0, 1.0],
            vec![1.0, 1.0, 1.0],
        ])
        .unwrap();
        let before = c.correlations().clone();
        let new = geometry::normalize(&[0.0, 0.0, 1.0]).unwrap();
        c.replace_opinion(1, &new);
        for (i, j, a) in before.pairs() {
            if i != 1 && j != 1 {
                assert_eq!(a.to_bits(), c.correlation(i, j).to_bits());
            }
        }
        let mut fresh = c.clone();
        fresh.refresh_correlations();
        assert_eq!(fresh.correlations(), c.correlations());
    }

    #[test]
    fn max_activity_matches_definition() {
        let c = Configuration::from_rows(&[vec![1.0, 0.0], vec![0.5, 0.75f64.sqrt()]]).unwrap();
        assert!((c.correlations().max_activity() - 0.5).abs() < 1e-15);
    }
}
