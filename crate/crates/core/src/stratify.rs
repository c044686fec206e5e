//! Block diagonalization over within-set positions.
//!
//! Position permutations inside each set are automorphisms of every K-PPDR
//! network, so a Fourier basis over positions (applied set by set) splits the
//! `nK × nK` transition matrix into `n` blocks of size `K`. Block 0 (the
//! constant mode) is the quotient chain on sets; with only full layers the
//! remaining `n − 1` blocks are diagonal and hold the per-set holding
//! probabilities.

use std::f64::consts::PI;

use serde::Serialize;

use crate::chain::{assemble, OrbitProbabilities, TransitionMatrix};
use crate::error::{Error, Result};
use crate::linalg::{eigenvalues_symmetric, slem_of_spectrum, SymmetricMatrix, DEFAULT_TOL};
use crate::topology::{Family, TopologySpec};

/// Per-entry tolerance when matching spectra as sorted multisets.
pub const PARTITION_TOL: f64 = 1e-9;

#[derive(Clone, Debug, Serialize)]
pub struct BlockDecomposition {
    pub quotient: SymmetricMatrix,
    pub residual_diagonals: Vec<Vec<f64>>,
}

fn require_full_family(spec: &TopologySpec, operation: &'static str) -> Result<()> {
    if !matches!(spec.family, Family::Symmetric | Family::Cycle) {
        return Err(Error::UnsupportedFamily { operation, family: spec.family.to_string() });
    }
    spec.layers().map(|_| ())
}

fn check_len(spec: &TopologySpec, probs: &OrbitProbabilities) -> Result<()> {
    if probs.len() != spec.layer_count() {
        return Err(Error::InvalidProbabilities(format!(
            "{} values given for {} orbits",
            probs.len(),
            spec.layer_count()
        )));
    }
    Ok(())
}

/// Holding probability of each set: `1 − n·p_before − n·p_after`.
fn set_holdings(spec: &TopologySpec, p: &[f64]) -> Vec<f64> {
    let (k, n) = (spec.k, spec.n as f64);
    let cyclic = spec.family.is_cyclic();
    (0..k)
        .map(|i| {
            let before = if i > 0 {
                p[i - 1]
            } else if cyclic {
                p[k - 1]
            } else {
                0.0
            };
            let after = if i + 1 < k || cyclic { p[i] } else { 0.0 };
            1.0 - n * before - n * after
        })
        .collect()
}

/// The K×K quotient block: tridiagonal with off-diagonal `n·p_i` for the
/// symmetric family, and circulant (corner entries `n·p_K`) for the cycle.
pub fn quotient_block(spec: &TopologySpec, probs: &OrbitProbabilities) -> Result<SymmetricMatrix> {
    require_full_family(spec, "quotient block")?;
    check_len(spec, probs)?;
    let p = probs.values();
    let k = spec.k;
    let n = spec.n as f64;
    let holdings = set_holdings(spec, p);
    SymmetricMatrix::from_fn(k, |i, j| {
        if i == j {
            holdings[i]
        } else if j == i + 1 {
            n * p[i]
        } else if spec.family.is_cyclic() && i == 0 && j == k - 1 {
            n * p[k - 1]
        } else {
            0.0
        }
    })
}

/// The `n − 1` identical diagonal blocks, each listing the set holdings.
pub fn residual_blocks(spec: &TopologySpec, probs: &OrbitProbabilities) -> Result<Vec<Vec<f64>>> {
    require_full_family(spec, "residual blocks")?;
    check_len(spec, probs)?;
    let holdings = set_holdings(spec, probs.values());
    Ok(vec![holdings; spec.n - 1])
}

pub fn decompose(spec: &TopologySpec, probs: &OrbitProbabilities) -> Result<BlockDecomposition> {
    Ok(BlockDecomposition {
        quotient: quotient_block(spec, probs)?,
        residual_diagonals: residual_blocks(spec, probs)?,
    })
}

/// Which part of the decomposition attains the SLEM.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SlemLocation {
    Quotient,
    Residual,
    Both,
    Neither,
}

impl SlemLocation {
    pub fn in_quotient(self) -> bool {
        matches!(self, SlemLocation::Quotient | SlemLocation::Both)
    }

    pub fn in_residual(self) -> bool {
        matches!(self, SlemLocation::Residual | SlemLocation::Both)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PartitionReport {
    pub spec: TopologySpec,
    pub probs: OrbitProbabilities,
    pub full_spectrum: Vec<f64>,
    pub quotient_spectrum: Vec<f64>,
    pub residual_entries: Vec<f64>,
    pub max_discrepancy: f64,
    pub slem: f64,
    pub slem_location: SlemLocation,
}

impl PartitionReport {
    pub fn partition_holds(&self) -> bool {
        self.max_discrepancy < PARTITION_TOL
    }
}

/// Compares the block spectra against the spectrum of the assembled matrix
/// and reports where the SLEM is attained.
pub fn verify_spectrum_partition(spec: &TopologySpec, probs: &OrbitProbabilities) -> Result<PartitionReport> {
    let blocks = decompose(spec, probs)?;
    let full = assemble(spec, probs)?.spectrum()?.into_vec();
    let quotient = eigenvalues_symmetric(&blocks.quotient, DEFAULT_TOL)?.into_vec();
    let residual: Vec<f64> = blocks.residual_diagonals.iter().flatten().copied().collect();

    let mut union: Vec<f64> = quotient.iter().chain(&residual).copied().collect();
    union.sort_by(|a, b| b.total_cmp(a));
    let max_discrepancy = if union.len() == full.len() {
        union.iter().zip(&full).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    } else {
        f64::INFINITY
    };

    let slem = slem_of_spectrum(&crate::linalg::Spectrum::from_unsorted(full.clone()))?;
    // the leading eigenvalue 1 always belongs to the quotient block
    let quotient_attains = quotient[1..].iter().any(|v| (v.abs() - slem).abs() < PARTITION_TOL);
    let residual_attains = residual.iter().any(|v| (v.abs() - slem).abs() < PARTITION_TOL);
    let slem_location = match (quotient_attains, residual_attains) {
        (true, true) => SlemLocation::Both,
        (true, false) => SlemLocation::Quotient,
        (false, true) => SlemLocation::Residual,
        (false, false) => SlemLocation::Neither,
    };

    Ok(PartitionReport {
        spec: spec.clone(),
        probs: probs.clone(),
        full_spectrum: full,
        quotient_spectrum: quotient,
        residual_entries: residual,
        max_discrepancy,
        slem,
        slem_location,
    })
}

/// Real orthonormal Fourier basis on `n` positions, column-major in the
/// returned `Vec` (column `q` is `basis[q]`). Column 0 is the constant mode.
pub fn fourier_basis(n: usize) -> Vec<Vec<f64>> {
    let nf = n as f64;
    let mut cols = vec![vec![1.0 / nf.sqrt(); n]];
    let scale = (2.0 / nf).sqrt();
    for q in 1..n.div_ceil(2) {
        let w = 2.0 * PI * q as f64 / nf;
        cols.push((0..n).map(|m| scale * (w * m as f64).cos()).collect());
        cols.push((0..n).map(|m| scale * (w * m as f64).sin()).collect());
    }
    if n.is_multiple_of(2) && n > 1 {
        cols.push((0..n).map(|m| if m % 2 == 0 { 1.0 } else { -1.0 } / nf.sqrt()).collect());
    }
    cols
}

/// `P` expressed in the per-set Fourier basis and regrouped by mode.
#[derive(Clone, Debug, Serialize)]
pub struct StratifiedMatrix {
    /// One K×K block per Fourier mode; block 0 is the quotient.
    pub blocks: Vec<SymmetricMatrix>,
    /// Largest magnitude found outside the diagonal blocks.
    pub off_block_max: f64,
}

/// Applies the basis change numerically. Works for every family, including
/// semi families whose blocks have no closed form here.
pub fn stratify_matrix(p: &TransitionMatrix) -> Result<StratifiedMatrix> {
    let (k, n) = (p.spec().k, p.spec().n);
    let size = k * n;
    let basis = fourier_basis(n);
    let m = p.matrix();
    // new index (q, i) -> old column vector sum_mu F[mu][q] e_{i, mu}
    let mut tmp = vec![0.0; size * size]; // tmp = P Q
    for row in 0..size {
        for i in 0..k {
            for (q, col) in basis.iter().enumerate() {
                let mut s = 0.0;
                for (mu, f) in col.iter().enumerate() {
                    s += m.get(row, i * n + mu) * f;
                }
                tmp[row * size + q * k + i] = s;
            }
        }
    }
    let mut out = vec![0.0; size * size]; // Q^T P Q
    for (q, col) in basis.iter().enumerate() {
        for i in 0..k {
            let r = q * k + i;
            for c in 0..size {
                let mut s = 0.0;
                for (mu, f) in col.iter().enumerate() {
                    s += f * tmp[(i * n + mu) * size + c];
                }
                out[r * size + c] = s;
            }
        }
    }
    let mut off_block_max: f64 = 0.0;
    for r in 0..size {
        for c in 0..size {
            if r / k != c / k {
                off_block_max = off_block_max.max(out[r * size + c].abs());
            }
        }
    }
    let blocks = (0..n)
        .map(|q| {
            SymmetricMatrix::from_fn(k, |i, j| {
                let a = out[(q * k + i) * size + q * k + j];
                let b = out[(q * k + j) * size + q * k + i];
                0.5 * (a + b)
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(StratifiedMatrix { blocks, off_block_max })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::LayerKind;

    fn probs(v: &[f64]) -> OrbitProbabilities {
        OrbitProbabilities::new(v.to_vec()).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < tol)
    }

    #[test]
    fn quotient_examples() {
        let q = quotient_block(&TopologySpec::new(Family::Symmetric, 3, 2), &probs(&[0.25, 0.25])).unwrap();
        assert_eq!(q.rows(), vec![vec![0.5, 0.5, 0.0], vec![0.5, 0.0, 0.5], vec![0.0, 0.5, 0.5]]);

        let s = TopologySpec::new(Family::Symmetric, 2, 1);
        let w = probs(&[2.0 / 3.0]);
        let q = quotient_block(&s, &w).unwrap();
        assert_eq!(&q, assemble(&s, &w).unwrap().matrix());

        let s = TopologySpec::new(Family::Cycle, 4, 1);
        let q = quotient_block(&s, &probs(&[1.0 / 3.0; 4])).unwrap();
        assert_eq!(q.get(0, 3), 1.0 / 3.0);
        assert_eq!(q.get(0, 2), 0.0);
        let e = eigenvalues_symmetric(&q, DEFAULT_TOL).unwrap().into_vec();
        assert!(close(&e, &[1.0, 1.0 / 3.0, 1.0 / 3.0, -1.0 / 3.0], 1e-14), "{e:?}");
    }

    #[test]
    fn cycle_quotient_matches_circulant_formula() {
        // eigenvalues 1 - n p (2 - 2 cos(2 pi i / K))
        for k in 3..=9 {
            let n = 2;
            let p = 0.15;
            let q = quotient_block(&TopologySpec::new(Family::Cycle, k, n), &probs(&vec![p; k])).unwrap();
            let got = eigenvalues_symmetric(&q, DEFAULT_TOL).unwrap().into_vec();
            let mut want: Vec<f64> = (0..k)
                .map(|i| 1.0 - n as f64 * p * (2.0 - 2.0 * (2.0 * PI * i as f64 / k as f64).cos()))
                .collect();
            want.sort_by(|a, b| b.total_cmp(a));
            assert!(close(&got, &want, 1e-12), "K={k}: {got:?} vs {want:?}");
        }
    }

    #[test]
    fn residual_examples() {
        let r = residual_blocks(&TopologySpec::new(Family::Symmetric, 3, 2), &probs(&[0.25, 0.25])).unwrap();
        assert_eq!(r, vec![vec![0.5, 0.0, 0.5]]);

        let r =
            residual_blocks(&TopologySpec::new(Family::Symmetric, 6, 3), &probs(&[1.0 / 6.0; 5])).unwrap();
        assert_eq!(r.len(), 2);
        assert!(close(&r[0], &[0.5, 0.0, 0.0, 0.0, 0.0, 0.5], 1e-15));
        assert_eq!(r[0], r[1]);

        let r = residual_blocks(&TopologySpec::new(Family::Symmetric, 2, 2), &probs(&[1.0 / 3.0])).unwrap();
        assert!(close(&r[0], &[1.0 / 3.0, 1.0 / 3.0], 1e-15));

        let r = residual_blocks(&TopologySpec::new(Family::Symmetric, 4, 1), &probs(&[0.5; 3])).unwrap();
        assert!(r.is_empty());
    }

    #[test]
    fn semi_families_are_rejected() {
        let s = TopologySpec::new(Family::SemiSymmetric, 4, 2);
        let err = quotient_block(&s, &probs(&[0.25, 0.5, 0.25])).unwrap_err();
        assert!(matches!(err, Error::UnsupportedFamily { .. }));
        assert!(residual_blocks(&s, &probs(&[0.25, 0.5, 0.25])).is_err());
    }

    #[test]
    fn partition_reports() {
        let r = verify_spectrum_partition(&TopologySpec::new(Family::Symmetric, 3, 2), &probs(&[0.25, 0.25]))
            .unwrap();
        assert!(r.max_discrepancy < 1e-9);
        assert!((r.slem - 0.5).abs() < 1e-12);
        assert!(r.slem_location.in_quotient());

        let r =
            verify_spectrum_partition(&TopologySpec::new(Family::Symmetric, 6, 3), &probs(&[1.0 / 6.0; 5]))
                .unwrap();
        let c = (PI / 6.0).cos();
        assert!((r.slem - c).abs() < 1e-12);
        assert_eq!(r.slem_location, SlemLocation::Quotient);
        assert!(r.residual_entries.iter().all(|v| v.abs() < c));

        let r = verify_spectrum_partition(&TopologySpec::new(Family::Symmetric, 2, 2), &probs(&[1.0 / 3.0]))
            .unwrap();
        assert!((r.slem - 1.0 / 3.0).abs() < 1e-12);
        assert!(r.slem_location.in_residual());
    }

    #[test]
    fn fourier_basis_is_orthonormal() {
        for n in 1..=7 {
            let b = fourier_basis(n);
            assert_eq!(b.len(), n);
            for (i, u) in b.iter().enumerate() {
                for (j, v) in b.iter().enumerate() {
                    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((dot - want).abs() < 1e-12, "n={n} ({i},{j}) {dot}");
                }
            }
        }
    }

    #[test]
    fn numeric_basis_change_reproduces_closed_blocks() {
        for (family, k, n, w) in [
            (Family::Symmetric, 4, 3, vec![0.1, 0.15, 0.12]),
            (Family::Cycle, 5, 4, vec![0.05, 0.1, 0.08, 0.11, 0.07]),
        ] {
            let s = TopologySpec::new(family, k, n);
            let w = probs(&w);
            let strat = stratify_matrix(&assemble(&s, &w).unwrap()).unwrap();
            assert!(strat.off_block_max < 1e-14);
            let q = quotient_block(&s, &w).unwrap();
            for i in 0..k {
                assert!(close(strat.blocks[0].row(i), q.row(i), 1e-14));
            }
            let r = residual_blocks(&s, &w).unwrap();
            for (b, d) in strat.blocks[1..].iter().zip(&r) {
                let diag = SymmetricMatrix::diagonal(d).unwrap();
                for i in 0..k {
                    assert!(close(b.row(i), diag.row(i), 1e-14));
                }
            }
        }
    }

    #[test]
    fn semi_blocks_are_still_block_diagonal() {
        let s = TopologySpec::new(Family::SemiSymmetric, 6, 3);
        let p = assemble(&s, &probs(&[1.0 / 6.0, 0.5, 1.0 / 6.0, 0.5, 1.0 / 6.0])).unwrap();
        let strat = stratify_matrix(&p).unwrap();
        assert!(strat.off_block_max < 1e-14);
        // full layers vanish from the non-constant modes, strait layers stay
        assert!(strat.blocks[1].get(0, 1).abs() < 1e-15);
        assert!((strat.blocks[1].get(1, 2) - 0.5).abs() < 1e-15);
        assert_eq!(s.layers().unwrap()[1], LayerKind::Strait);
    }
}
