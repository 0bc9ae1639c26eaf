//! Compressed sparse row storage for assembled forms.
//!
//! Assembly produces triplets, duplicates are summed, and columns within a row
//! are kept sorted so that every derived quantity is bitwise reproducible.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use num_complex::Complex64;

use crate::error::{HelmError, Result};

pub trait Scalar:
    Copy
    + Default
    + PartialEq
    + std::fmt::Debug
    + Send
    + Sync
    + Add<Output = Self>
    + AddAssign
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + Mul<f64, Output = Self>
    + 'static
{
    fn zero() -> Self {
        Self::default()
    }
    fn from_real(x: f64) -> Self;
    fn abs(self) -> f64;
    fn conj(self) -> Self;
    fn to_c64(self) -> Complex64;
}

impl Scalar for f64 {
    fn from_real(x: f64) -> Self {
        x
    }
    fn abs(self) -> f64 {
        f64::abs(self)
    }
    fn conj(self) -> Self {
        self
    }
    fn to_c64(self) -> Complex64 {
        Complex64::new(self, 0.0)
    }
}

impl Scalar for Complex64 {
    fn from_real(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
    fn abs(self) -> f64 {
        self.norm()
    }
    fn conj(self) -> Self {
        Complex64::conj(&self)
    }
    fn to_c64(self) -> Complex64 {
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Csr<T> {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<T>,
}

pub type RealCsr = Csr<f64>;
pub type ComplexCsr = Csr<Complex64>;

impl<T: Scalar> Csr<T> {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            indptr: vec![0; nrows + 1],
            indices: Vec::new(),
            data: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![one::<T>(); n])
    }

    pub fn diagonal(d: &[T]) -> Self {
        let n = d.len();
        Self {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            data: d.to_vec(),
        }
    }

    /// Builds a matrix from `(row, col, value)` triplets; duplicates are summed
    /// in input order.
    pub fn from_triplets(nrows: usize, ncols: usize, trip: &[(usize, usize, T)]) -> Result<Self> {
        let mut counts = vec![0usize; nrows + 1];
        for &(r, c, _) in trip {
            if r >= nrows || c >= ncols {
                return Err(HelmError::Input(format!(
                    "triplet ({r}, {c}) outside {nrows}x{ncols}"
                )));
            }
            counts[r + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        let mut cols = vec![0usize; trip.len()];
        let mut vals = vec![T::zero(); trip.len()];
        let mut next = counts.clone();
        for &(r, c, v) in trip {
            cols[next[r]] = c;
            vals[next[r]] = v;
            next[r] += 1;
        }
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::with_capacity(trip.len());
        let mut data = Vec::with_capacity(trip.len());
        indptr.push(0);
        let mut order: Vec<usize> = Vec::new();
        for r in 0..nrows {
            let (lo, hi) = (counts[r], counts[r + 1]);
            order.clear();
            order.extend(lo..hi);
            // stable: duplicates are summed in insertion order
            order.sort_by_key(|&k| cols[k]);
            let mut last = usize::MAX;
            for &k in &order {
                if cols[k] == last {
                    let n = data.len() - 1;
                    data[n] += vals[k];
                } else {
                    indices.push(cols[k]);
                    data.push(vals[k]);
                    last = cols[k];
                }
            }
            indptr.push(indices.len());
        }
        Ok(Self {
            nrows,
            ncols,
            indptr,
            indices,
            data,
        })
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let r = self.indptr[i]..self.indptr[i + 1];
        self.indices[r.clone()]
            .iter()
            .copied()
            .zip(self.data[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let r = self.indptr[i]..self.indptr[i + 1];
        match self.indices[r.clone()].binary_search(&j) {
            Ok(k) => self.data[r.start + k],
            Err(_) => T::zero(),
        }
    }

    pub fn triplets(&self) -> Vec<(usize, usize, T)> {
        let mut out = Vec::with_capacity(self.nnz());
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                out.push((i, j, v));
            }
        }
        out
    }

    pub fn mul_vec<V>(&self, x: &[V]) -> Vec<V>
    where
        V: Scalar,
        T: Into<Coeff<V>>,
    {
        assert_eq!(x.len(), self.ncols, "dimension mismatch in mul_vec");
        (0..self.nrows)
            .map(|i| {
                let mut s = V::zero();
                for (j, a) in self.row(i) {
                    s += a.into().apply(x[j]);
                }
                s
            })
            .collect()
    }

    /// `A^T x` (no conjugation).
    pub fn tmul_vec<V>(&self, x: &[V]) -> Vec<V>
    where
        V: Scalar,
        T: Into<Coeff<V>>,
    {
        assert_eq!(x.len(), self.nrows, "dimension mismatch in tmul_vec");
        let mut y = vec![V::zero(); self.ncols];
        for i in 0..self.nrows {
            for (j, a) in self.row(i) {
                y[j] += a.into().apply(x[i]);
            }
        }
        y
    }

    pub fn transpose(&self) -> Self {
        let trip: Vec<_> = self.triplets().into_iter().map(|(i, j, v)| (j, i, v)).collect();
        Self::from_triplets(self.ncols, self.nrows, &trip).expect("transpose of valid matrix")
    }

    pub fn conj_transpose(&self) -> Self {
        let trip: Vec<_> = self
            .triplets()
            .into_iter()
            .map(|(i, j, v)| (j, i, v.conj()))
            .collect();
        Self::from_triplets(self.ncols, self.nrows, &trip).expect("transpose of valid matrix")
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.ncols, other.nrows, "dimension mismatch in matmul");
        let mut indptr = vec![0];
        let mut indices = Vec::new();
        let mut data = Vec::new();
        let mut acc = vec![T::zero(); other.ncols];
        let mut seen = vec![false; other.ncols];
        let mut cols: Vec<usize> = Vec::new();
        for i in 0..self.nrows {
            cols.clear();
            for (k, a) in self.row(i) {
                for (j, b) in other.row(k) {
                    if !seen[j] {
                        seen[j] = true;
                        cols.push(j);
                    }
                    acc[j] += a * b;
                }
            }
            cols.sort_unstable();
            for &j in &cols {
                indices.push(j);
                data.push(acc[j]);
                acc[j] = T::zero();
                seen[j] = false;
            }
            indptr.push(indices.len());
        }
        Self {
            nrows: self.nrows,
            ncols: other.ncols,
            indptr,
            indices,
            data,
        }
    }

    /// `a * self + b * other`.
    pub fn lincomb(&self, a: T, other: &Self, b: T) -> Self {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut trip: Vec<_> = self.triplets().into_iter().map(|(i, j, v)| (i, j, a * v)).collect();
        trip.extend(other.triplets().into_iter().map(|(i, j, v)| (i, j, b * v)));
        Self::from_triplets(self.nrows, self.ncols, &trip).expect("same shape")
    }

    pub fn add(&self, other: &Self) -> Self {
        self.lincomb(one(), other, one())
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.lincomb(one(), other, -one::<T>())
    }

    pub fn scale(&self, s: T) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v = *v * s);
        out
    }

    pub fn scale_rows(&self, s: &[f64]) -> Self {
        let mut out = self.clone();
        for i in 0..self.nrows {
            for k in self.indptr[i]..self.indptr[i + 1] {
                out.data[k] = out.data[k] * s[i];
            }
        }
        out
    }

    /// Keeps only the listed columns, in the given order.
    pub fn select_columns(&self, keep: &[usize]) -> Self {
        let mut map = vec![usize::MAX; self.ncols];
        for (new, &old) in keep.iter().enumerate() {
            map[old] = new;
        }
        let trip: Vec<_> = self
            .triplets()
            .into_iter()
            .filter(|&(_, j, _)| map[j] != usize::MAX)
            .map(|(i, j, v)| (i, map[j], v))
            .collect();
        Self::from_triplets(self.nrows, keep.len(), &trip).expect("valid selection")
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    /// Largest absolute entry of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.sub(other).max_abs()
    }

    /// Largest absolute entry of `self - self^H`.
    pub fn hermitian_defect(&self) -> f64 {
        self.max_abs_diff(&self.conj_transpose())
    }

    pub fn to_dense(&self) -> Mat<T>
    where
        T: faer::traits::ComplexField,
    {
        let mut m = Mat::<T>::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                m[(i, j)] = v;
            }
        }
        m
    }

    pub fn to_faer(&self) -> Result<SparseColMat<usize, T>>
    where
        T: faer::traits::ComplexField,
    {
        let trip: Vec<Triplet<usize, usize, T>> = self
            .triplets()
            .into_iter()
            .map(|(row, col, val)| Triplet { row, col, val })
            .collect();
        SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &trip)
            .map_err(|e| HelmError::Numerical(format!("sparse conversion: {e:?}")))
    }

    /// `x^H A y` for vectors of the matrix scalar type.
    pub fn form(&self, x: &[T], y: &[T]) -> T {
        let ay = self.mul_vec_same(y);
        x.iter().zip(&ay).fold(T::zero(), |s, (a, b)| s + a.conj() * *b)
    }

    fn mul_vec_same(&self, y: &[T]) -> Vec<T> {
        (0..self.nrows)
            .map(|i| self.row(i).fold(T::zero(), |s, (j, a)| s + a * y[j]))
            .collect()
    }
}

impl RealCsr {
    pub fn to_complex(&self) -> ComplexCsr {
        Csr {
            nrows: self.nrows,
            ncols: self.ncols,
            indptr: self.indptr.clone(),
            indices: self.indices.clone(),
            data: self.data.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
    }

    /// `x^H A y` for complex vectors and a real matrix.
    pub fn cform(&self, x: &[Complex64], y: &[Complex64]) -> Complex64 {
        let ay: Vec<Complex64> = self.mul_vec(y);
        x.iter().zip(&ay).map(|(a, b)| a.conj() * b).sum()
    }

    /// `Re(x^H A x)` for a real symmetric matrix.
    pub fn quad(&self, x: &[Complex64]) -> f64 {
        self.cform(x, x).re
    }
}

fn one<T: Scalar>() -> T {
    T::from_real(1.0)
}

/// Entry of a sparse matrix acting on a vector scalar.
#[derive(Clone, Copy)]
pub enum Coeff<V> {
    Real(f64),
    Same(V),
}

impl<V: Scalar> Coeff<V> {
    fn apply(self, x: V) -> V {
        match self {
            Coeff::Real(a) => x * a,
            Coeff::Same(a) => a * x,
        }
    }
}

impl From<f64> for Coeff<Complex64> {
    fn from(a: f64) -> Self {
        Coeff::Real(a)
    }
}

impl From<f64> for Coeff<f64> {
    fn from(a: f64) -> Self {
        Coeff::Real(a)
    }
}

impl From<Complex64> for Coeff<Complex64> {
    fn from(a: Complex64) -> Self {
        Coeff::Same(a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dense(m: &RealCsr) -> Vec<Vec<f64>> {
        (0..m.nrows())
            .map(|i| (0..m.ncols()).map(|j| m.get(i, j)).collect())
            .collect()
    }

    #[test]
    fn duplicates_are_summed() {
        let m = RealCsr::from_triplets(2, 2, &[(0, 1, 1.0), (0, 1, 2.5), (1, 0, -1.0)]).unwrap();
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.get(0, 1), 3.5);
        assert_eq!(m.get(1, 1), 0.0);
    }

    #[test]
    fn out_of_range_triplet_is_rejected() {
        assert!(RealCsr::from_triplets(2, 2, &[(2, 0, 1.0)]).is_err());
    }

    #[test]
    fn identity_and_complex_product() {
        let i3 = ComplexCsr::identity(3);
        let x = vec![Complex64::new(1.0, 2.0); 3];
        assert_eq!(i3.mul_vec(&x), x);
        let r = RealCsr::identity(3).scale(2.0);
        let y: Vec<Complex64> = r.mul_vec(&x);
        assert_eq!(y[1], Complex64::new(2.0, 4.0));
    }

    proptest! {
        #[test]
        fn matmul_and_transpose_match_dense(
            a in proptest::collection::vec((0usize..4, 0usize..5, -3.0f64..3.0), 0..20),
            b in proptest::collection::vec((0usize..5, 0usize..3, -3.0f64..3.0), 0..20),
        ) {
            let ma = RealCsr::from_triplets(4, 5, &a).unwrap();
            let mb = RealCsr::from_triplets(5, 3, &b).unwrap();
            let (da, db) = (dense(&ma), dense(&mb));
            let c = ma.matmul(&mb);
            for i in 0..4 {
                for j in 0..3 {
                    let e: f64 = (0..5).map(|k| da[i][k] * db[k][j]).sum();
                    prop_assert!((c.get(i, j) - e).abs() < 1e-12);
                }
            }
            let t = ma.transpose();
            for i in 0..4 {
                for j in 0..5 {
                    prop_assert_eq!(t.get(j, i), da[i][j]);
                }
            }
            let x: Vec<f64> = (0..4).map(|i| i as f64 - 1.5).collect();
            let y = ma.tmul_vec(&x);
            let z = t.mul_vec(&x);
            for (u, v) in y.iter().zip(&z) {
                prop_assert!((u - v).abs() < 1e-12);
            }
        }
    }
}
