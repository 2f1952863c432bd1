//! Random generators for states, observables, POVMs, instruments and models.
//!
//! Used by the property tests, the acceptance suite and the benchmarks. All
//! generators take the RNG explicitly so callers control reproducibility.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::dilation::IndirectModel;
use crate::instrument::{Instrument, Operation};
use crate::linalg::{c, eig_hermitian, unitary_completion, CMatrix, C64};
use crate::outcome::{label, Outcome};
use crate::povm::{validate_povm, Povm};
use crate::quantum::{DensityOperator, Observable};

fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    c(re, im)
}

/// Matrix of i.i.d. standard complex Gaussian entries.
pub fn ginibre<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| gaussian(rng))
}

pub fn vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<C64> {
    (0..n).map(|_| gaussian(rng)).collect()
}

pub fn hermitian<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMatrix {
    ginibre(n, n, rng).hermitian_part()
}

/// Haar-ish unitary from Gram-Schmidt on a Gaussian matrix.
pub fn unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMatrix {
    let g = ginibre(n, n, rng);
    let mut cols: Vec<Vec<C64>> = Vec::with_capacity(n);
    for j in 0..n {
        let mut v = g.column(j);
        for _ in 0..2 {
            for b in &cols {
                let overlap: C64 = b.iter().zip(&v).map(|(bi, vi)| bi.conj() * vi).sum();
                for (vi, bi) in v.iter_mut().zip(b) {
                    *vi -= overlap * bi;
                }
            }
        }
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        cols.push(v.into_iter().map(|z| z / norm).collect());
    }
    CMatrix::from_fn(n, n, |i, j| cols[j][i])
}

/// Full-rank mixed state `G G† / Tr(G G†)`.
pub fn density_matrix<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMatrix {
    let g = ginibre(n, n, rng);
    let m = &g * g.adjoint();
    let t = m.trace().expect("square").re;
    m.scale_real(1.0 / t).hermitian_part()
}

pub fn state<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DensityOperator {
    DensityOperator::new(density_matrix(n, rng)).expect("random state is valid")
}

pub fn pure_state<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DensityOperator {
    DensityOperator::pure(&vector(n, rng)).expect("nonzero vector")
}

/// Random observable; eigenvalues are generically non-degenerate.
pub fn observable<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Observable {
    Observable::new(hermitian(n, rng)).expect("random Hermitian matrix")
}

/// `S^{-1/2}` for positive definite `S`.
fn inverse_sqrt(s: &CMatrix) -> CMatrix {
    eig_hermitian(s)
        .expect("Hermitian")
        .map_real(|x| 1.0 / x.sqrt())
}

/// Normalizes a family of matrices `G_k` so that `Σ K_k† K_k = I`.
fn normalize_family(g: Vec<CMatrix>) -> Vec<CMatrix> {
    let n = g[0].cols();
    let mut s = CMatrix::zeros(n, n);
    for m in &g {
        s += &(m.adjoint() * m);
    }
    let w = inverse_sqrt(&s.hermitian_part());
    g.into_iter().map(|m| m * &w).collect()
}

/// Labels `0, 1, ..., n-1`.
pub fn labels(n: usize) -> Vec<Outcome> {
    (0..n).map(|k| label(k as f64)).collect()
}

/// Random CP instrument with `outcomes` outcomes labelled `0..outcomes` and
/// `kraus_per_outcome` Kraus operators each.
pub fn instrument<R: Rng + ?Sized>(
    dim: usize,
    outcomes: usize,
    kraus_per_outcome: usize,
    rng: &mut R,
) -> Instrument {
    let counts = vec![kraus_per_outcome; outcomes];
    instrument_with_counts(dim, &counts, rng)
}

/// Random CP instrument whose outcome `k` has `counts[k]` Kraus operators.
pub fn instrument_with_counts<R: Rng + ?Sized>(dim: usize, counts: &[usize], rng: &mut R) -> Instrument {
    let total: usize = counts.iter().sum();
    let family = normalize_family((0..total).map(|_| ginibre(dim, dim, rng)).collect());
    let mut it = family.into_iter();
    let mut ops = BTreeMap::new();
    for (k, &n) in counts.iter().enumerate() {
        let kraus: Vec<CMatrix> = it.by_ref().take(n).collect();
        ops.insert(label(k as f64), Operation::new(kraus).expect("normalized Kraus"));
    }
    Instrument::new(ops).expect("normalized instrument")
}

/// Random POVM with `outcomes` elements labelled `0..outcomes`.
pub fn povm<R: Rng + ?Sized>(dim: usize, outcomes: usize, rng: &mut R) -> Povm {
    let family = normalize_family((0..outcomes).map(|_| ginibre(dim, dim, rng)).collect());
    let elements = family
        .into_iter()
        .enumerate()
        .map(|(k, m)| (label(k as f64), (m.adjoint() * &m).hermitian_part()))
        .collect();
    validate_povm(elements).expect("normalized POVM")
}

/// Random indirect measurement model. The meter is a random observable on the
/// probe; `mixed_probe` chooses between a full-rank and a pure probe state.
pub fn model<R: Rng + ?Sized>(system_dim: usize, probe_dim: usize, mixed_probe: bool, rng: &mut R) -> IndirectModel {
    let probe_state = if mixed_probe {
        state(probe_dim, rng)
    } else {
        pure_state(probe_dim, rng)
    };
    let coupling = unitary(system_dim * probe_dim, rng);
    let meter = observable(probe_dim, rng);
    IndirectModel::new(system_dim, probe_dim, probe_state, coupling, meter).expect("random model")
}

/// Random isometry `C^k → C^n` (first `k` columns of a random unitary).
pub fn isometry<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> CMatrix {
    let u = unitary(n, rng);
    let iso = CMatrix::from_fn(n, k, |i, j| u[(i, j)]);
    debug_assert!(unitary_completion(&iso).is_ok());
    iso
}
