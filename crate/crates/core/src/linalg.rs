//! Dense symmetric eigenvalue utilities.
//!
//! Matrices in this crate are small (a few hundred rows at most), so the
//! spectrum is computed with cyclic Jacobi rotations on a dense copy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default off-diagonal tolerance, relative to the largest entry.
pub const DEFAULT_TOL: f64 = 1e-12;
/// Sweep budget for the Jacobi iteration.
pub const MAX_SWEEPS: usize = 100;
/// How far the leading eigenvalue may sit from one for a stochastic spectrum.
pub const STOCHASTIC_TOL: f64 = 1e-9;

/// Dense real symmetric matrix stored row-major.
///
/// Every constructor leaves `get(i, j) == get(j, i)` bit-for-bit.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricMatrix {
    size: usize,
    data: Vec<f64>,
}

impl SymmetricMatrix {
    /// Builds a matrix from `f(i, j)` evaluated on the upper triangle and
    /// mirrored below the diagonal.
    pub fn from_fn(size: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        if size == 0 {
            return Err(Error::InvalidMatrix("size must be at least 1".into()));
        }
        let mut data = vec![0.0; size * size];
        for i in 0..size {
            for j in i..size {
                let v = f(i, j);
                data[i * size + j] = v;
                data[j * size + i] = v;
            }
        }
        Self::checked(size, data)
    }

    /// Builds a matrix from explicit rows; the rows must be exactly symmetric.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let size = rows.len();
        if size == 0 {
            return Err(Error::InvalidMatrix("size must be at least 1".into()));
        }
        let mut data = Vec::with_capacity(size * size);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != size {
                return Err(Error::InvalidMatrix(format!(
                    "row {i} has {} entries, expected {size}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        for i in 0..size {
            for j in (i + 1)..size {
                if data[i * size + j] != data[j * size + i] {
                    return Err(Error::NotSymmetric { row: i, col: j });
                }
            }
        }
        Self::checked(size, data)
    }

    pub fn identity(size: usize) -> Result<Self> {
        Self::from_fn(size, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    /// Diagonal matrix with the given entries.
    pub fn diagonal(entries: &[f64]) -> Result<Self> {
        Self::from_fn(entries.len(), |i, j| if i == j { entries[i] } else { 0.0 })
    }

    fn checked(size: usize, data: Vec<f64>) -> Result<Self> {
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidMatrix(format!(
                "non-finite entry at ({}, {})",
                pos / size,
                pos % size
            )));
        }
        Ok(Self { size, data })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.size + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.size..(i + 1) * self.size]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.size).map(<[f64]>::to_vec).collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.size).map(|i| self.get(i, i)).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.size, "dimension mismatch");
        self.data.chunks(self.size).map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
    }

    /// Writes `self * x` into `out` without allocating.
    pub fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.size, "dimension mismatch");
        assert_eq!(out.len(), self.size, "dimension mismatch");
        for (o, row) in out.iter_mut().zip(self.data.chunks(self.size)) {
            *o = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    /// Returns `Q A Q^T` for the permutation `perm` (row `i` of the result is
    /// row `perm[i]` of `self`).
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.size {
            return Err(Error::InvalidMatrix("permutation length mismatch".into()));
        }
        let mut seen = vec![false; self.size];
        for &p in perm {
            if p >= self.size || std::mem::replace(&mut seen[p], true) {
                return Err(Error::InvalidMatrix("not a permutation".into()));
            }
        }
        Self::from_fn(self.size, |i, j| self.get(perm[i], perm[j]))
    }
}

impl Serialize for SymmetricMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for SymmetricMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        Self::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// Eigenvalues sorted in descending order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Spectrum {
    eigenvalues: Vec<f64>,
}

impl Spectrum {
    /// Sorts `values` descending.
    pub fn from_unsorted(mut values: Vec<f64>) -> Self {
        values.sort_by(|a, b| b.total_cmp(a));
        Self { eigenvalues: values }
    }

    pub fn values(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.eigenvalues
    }
}

/// All eigenvalues of `m`, computed with cyclic Jacobi rotations.
///
/// Iterates until the Frobenius norm of the off-diagonal part drops below
/// `tol * max|m_ij|`.
pub fn eigenvalues_symmetric(m: &SymmetricMatrix, tol: f64) -> Result<Spectrum> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    let n = m.size;
    let scale = m.max_abs();
    if n == 1 || scale == 0.0 {
        return Ok(Spectrum::from_unsorted((0..n).map(|i| m.get(i, i)).collect()));
    }
    let threshold = tol * scale;
    let mut a = m.data.clone();
    let off_norm = |a: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                s += a[i * n + j] * a[i * n + j];
            }
        }
        (2.0 * s).sqrt()
    };

    let mut residual = off_norm(&a);
    let mut sweeps = 0;
    while residual >= threshold {
        if sweeps == MAX_SWEEPS {
            return Err(Error::NonConvergence { sweeps, residual });
        }
        sweeps += 1;
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + theta.hypot(1.0));
                let c = 1.0 / t.hypot(1.0);
                let s = t * c;
                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    let new_kp = c * akp - s * akq;
                    let new_kq = s * akp + c * akq;
                    a[k * n + p] = new_kp;
                    a[p * n + k] = new_kp;
                    a[k * n + q] = new_kq;
                    a[q * n + k] = new_kq;
                }
                a[p * n + p] = app - t * apq;
                a[q * n + q] = aqq + t * apq;
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
            }
        }
        residual = off_norm(&a);
    }
    Ok(Spectrum::from_unsorted((0..n).map(|i| a[i * n + i]).collect()))
}

/// Second largest eigenvalue modulus, `max(λ₂, −λ_N)`, of a stochastic
/// spectrum.
pub fn slem_of_spectrum(s: &Spectrum) -> Result<f64> {
    let v = s.values();
    if v.len() < 2 {
        return Err(Error::NotStochastic(
            "SLEM is undefined for a spectrum with fewer than two eigenvalues".into(),
        ));
    }
    if (v[0] - 1.0).abs() > STOCHASTIC_TOL {
        return Err(Error::NotStochastic(format!("leading eigenvalue {} is not 1", v[0])));
    }
    Ok(v[1].max(-v[v.len() - 1]))
}
