//! Instruments: outcome-indexed families of operations that carry both the
//! output statistics and the state reduction of an apparatus.
//!
//! Operations are stored in Kraus form, which makes complete positivity
//! structural. Maps that are only known to be linear and
//! Hermiticity-preserving (the transpose, for instance) live in
//! [`RawSuperoperator`] and can be tested with [`is_completely_positive`].
//!
//! Conventions used throughout:
//! * `vec(X)` stacks columns, so `vec(X)[j·d + i] = X[i, j]`;
//! * the Choi matrix is `Σ_ij E_ij ⊗ S(E_ij)` with the input factor first.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{eig_hermitian, CMatrix, C64, HERM_TOL, ZERO};
use crate::outcome::Outcome;
use crate::povm::{validate_povm, Povm};
use crate::quantum::{DensityOperator, Observable, OutcomeDistribution};
use crate::random;

/// Tolerance on trace-nonincrease and instrument unity.
pub const UNITY_TOL: f64 = 1e-9;
/// Below this probability an outcome cannot be conditioned on.
pub const PROB_FLOOR: f64 = 1e-12;
/// Choi eigenvalues at or below this fraction of the largest are discarded
/// when extracting Kraus operators.
pub const KRAUS_RANK_CUTOFF: f64 = 1e-10;
/// Default number of sampled sequences for [`randomized_cp_check`].
pub const DEFAULT_CP_TRIALS: usize = 2000;

/// A linear map on `d × d` matrices.
pub trait LinearMap {
    fn dim(&self) -> usize;
    fn map(&self, x: &CMatrix) -> CMatrix;
}

/// A completely positive, trace-nonincreasing map in Kraus form.
#[derive(Clone, Debug, PartialEq)]
pub struct Operation {
    dim: usize,
    kraus: Vec<CMatrix>,
}

impl Operation {
    /// Validates shapes and `Σ K†K ≤ I` within [`UNITY_TOL`].
    pub fn new(kraus: Vec<CMatrix>) -> Result<Self> {
        let dim = kraus.first().ok_or(Error::EmptyKraus)?.rows();
        for k in &kraus {
            if !k.is_square() {
                return Err(Error::NotSquare {
                    rows: k.rows(),
                    cols: k.cols(),
                });
            }
            if k.rows() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: k.rows(),
                });
            }
        }
        let op = Operation { dim, kraus };
        let slack = CMatrix::identity(dim) - op.effect();
        let min_eigenvalue = eig_hermitian(&slack.hermitian_part())?.min_eigenvalue();
        if min_eigenvalue < -UNITY_TOL {
            return Err(Error::TraceIncreasing { min_eigenvalue });
        }
        Ok(op)
    }

    pub fn identity(dim: usize) -> Self {
        Operation {
            dim,
            kraus: vec![CMatrix::identity(dim)],
        }
    }

    /// The zero map, stored as a single zero Kraus operator.
    pub fn zero(dim: usize) -> Self {
        Operation {
            dim,
            kraus: vec![CMatrix::zeros(dim, dim)],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kraus(&self) -> &[CMatrix] {
        &self.kraus
    }

    /// `Σ K†K`.
    pub fn effect(&self) -> CMatrix {
        let mut e = CMatrix::zeros(self.dim, self.dim);
        for k in &self.kraus {
            e += &(k.adjoint() * k);
        }
        e
    }

    /// `Σ K X K†` on an arbitrary matrix.
    pub fn apply_matrix(&self, x: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(self.dim, self.dim);
        for k in &self.kraus {
            out += &k.sandwich(x);
        }
        out
    }

    /// `Σ K† X K` on an arbitrary matrix.
    pub fn dual_apply_matrix(&self, x: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(self.dim, self.dim);
        for k in &self.kraus {
            out += &k.sandwich_adjoint(x);
        }
        out
    }

    /// Matrix of the map on column-stacked vectors: `Σ conj(K) ⊗ K`.
    pub fn to_superoperator(&self) -> RawSuperoperator {
        let d2 = self.dim * self.dim;
        let mut action = CMatrix::zeros(d2, d2);
        for k in &self.kraus {
            action += &k.conj().kron(k);
        }
        RawSuperoperator {
            dim: self.dim,
            action,
        }
    }
}

impl LinearMap for Operation {
    fn dim(&self) -> usize {
        self.dim
    }

    fn map(&self, x: &CMatrix) -> CMatrix {
        self.apply_matrix(x)
    }
}

/// A finite family of operations whose sum is trace-preserving.
#[derive(Clone, Debug, PartialEq)]
pub struct Instrument {
    dim: usize,
    operations: BTreeMap<Outcome, Operation>,
}

impl Instrument {
    /// Validates dimensions and `Σ_x Σ_k K†K = I` within [`UNITY_TOL`].
    pub fn new(operations: BTreeMap<Outcome, Operation>) -> Result<Self> {
        let dim = operations.values().next().ok_or(Error::EmptyOutcomes)?.dim;
        if let Some(op) = operations.values().find(|op| op.dim != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: op.dim,
            });
        }
        let ins = Instrument { dim, operations };
        let defect = ins.unity_defect();
        if defect > UNITY_TOL {
            return Err(Error::InstrumentUnity { defect });
        }
        Ok(ins)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn operations(&self) -> &BTreeMap<Outcome, Operation> {
        &self.operations
    }

    pub fn operation(&self, x: Outcome) -> Option<&Operation> {
        self.operations.get(&x)
    }

    pub fn outcomes(&self) -> impl Iterator<Item = Outcome> + '_ {
        self.operations.keys().copied()
    }

    /// `‖Σ_x effect(x) − I‖_F`.
    pub fn unity_defect(&self) -> f64 {
        let mut total = CMatrix::zeros(self.dim, self.dim);
        for op in self.operations.values() {
            total += &op.effect();
        }
        total.distance(&CMatrix::identity(self.dim))
    }

    /// Output distribution `x ↦ Tr[I(x)ρ]`.
    pub fn distribution(&self, rho: &DensityOperator) -> Result<OutcomeDistribution> {
        require_dim(self.dim, rho.dim())?;
        OutcomeDistribution::new(
            self.operations
                .iter()
                .map(|(&x, op)| (x, op.apply_matrix(rho.matrix()).trace().expect("square").re))
                .collect(),
        )
    }
}

fn require_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

/// `I(x)ρ = Σ_k K_k ρ K_k†`, the unnormalized post-measurement operator.
pub fn apply(op: &Operation, rho: &DensityOperator) -> Result<CMatrix> {
    require_dim(op.dim, rho.dim())?;
    Ok(op.apply_matrix(rho.matrix()))
}

/// `Tr[I(x)ρ]`; zero for outcomes the instrument does not have.
pub fn outcome_probability(ins: &Instrument, x: Outcome, rho: &DensityOperator) -> Result<f64> {
    require_dim(ins.dim, rho.dim())?;
    Ok(match ins.operations.get(&x) {
        Some(op) => op.apply_matrix(rho.matrix()).trace()?.re,
        None => 0.0,
    })
}

/// `I(x)ρ / Tr[I(x)ρ]`.
pub fn post_state(ins: &Instrument, x: Outcome, rho: &DensityOperator) -> Result<DensityOperator> {
    require_dim(ins.dim, rho.dim())?;
    let out = match ins.operations.get(&x) {
        Some(op) => op.apply_matrix(rho.matrix()),
        None => {
            return Err(Error::ZeroProbability {
                label: x,
                probability: 0.0,
            })
        }
    };
    let p = out.trace()?.re;
    if p <= PROB_FLOOR {
        return Err(Error::ZeroProbability {
            label: x,
            probability: p,
        });
    }
    DensityOperator::from_unnormalized(&out)
}

/// The dual operation `I(x)* A = Σ_k K_k† A K_k`.
pub fn dual_apply(op: &Operation, a: &CMatrix) -> Result<CMatrix> {
    require_dim(op.dim, a.rows())?;
    require_dim(op.dim, a.cols())?;
    Ok(op.dual_apply_matrix(a))
}

/// `I(x)* 1 = Σ_k K_k† K_k`.
pub fn effect(op: &Operation) -> CMatrix {
    op.effect()
}

/// The POVM `x ↦ effect(I(x))`.
pub fn induced_povm(ins: &Instrument) -> Result<Povm> {
    validate_povm(
        ins.operations
            .iter()
            .map(|(&x, op)| (x, op.effect().hermitian_part()))
            .collect(),
    )
}

/// `I(Δ)` for an outcome event `Δ`; with every outcome this is the
/// non-selective operation. The empty event gives the zero operation.
pub fn selective_operation(ins: &Instrument, labels: &BTreeSet<Outcome>) -> Operation {
    let kraus: Vec<CMatrix> = labels
        .iter()
        .filter_map(|x| ins.operations.get(x))
        .flat_map(|op| op.kraus.iter().cloned())
        .collect();
    if kraus.is_empty() {
        Operation::zero(ins.dim)
    } else {
        Operation { dim: ins.dim, kraus }
    }
}

/// `I(ℝ)`, the non-selective operation.
pub fn nonselective_operation(ins: &Instrument) -> Operation {
    let all: BTreeSet<Outcome> = ins.outcomes().collect();
    selective_operation(ins, &all)
}

/// Joint outcome distribution of `first` followed immediately by `second`.
pub type PairDistribution = BTreeMap<(Outcome, Outcome), f64>;

/// `(x, y) ↦ Tr[I₂(y) I₁(x) ρ]`.
pub fn joint_distribution(first: &Instrument, second: &Instrument, rho: &DensityOperator) -> Result<PairDistribution> {
    require_dim(first.dim, rho.dim())?;
    require_dim(first.dim, second.dim)?;
    let mut out = BTreeMap::new();
    for (&x, op1) in &first.operations {
        let after = op1.apply_matrix(rho.matrix());
        for (&y, op2) in &second.operations {
            out.insert((x, y), op2.apply_matrix(&after).trace()?.re);
        }
    }
    Ok(out)
}

/// The same joint distribution in dual form, `Tr{[I₁(x)* Π₂(y)] ρ}`.
pub fn joint_distribution_dual(first: &Instrument, second: &Instrument, rho: &DensityOperator) -> Result<PairDistribution> {
    require_dim(first.dim, rho.dim())?;
    require_dim(first.dim, second.dim)?;
    let mut out = BTreeMap::new();
    for (&y, op2) in &second.operations {
        let pi_y = op2.effect();
        for (&x, op1) in &first.operations {
            out.insert((x, y), rho.expectation(&op1.dual_apply_matrix(&pi_y)).re);
        }
    }
    Ok(out)
}

/// Distribution of the second outcome given that the first read `x`.
pub fn conditional_distribution(
    first: &Instrument,
    second: &Instrument,
    x: Outcome,
    rho: &DensityOperator,
) -> Result<OutcomeDistribution> {
    require_dim(first.dim, second.dim)?;
    let post = post_state(first, x, rho)?;
    second.distribution(&post)
}

/// Projection-postulate instrument `ρ ↦ P(x) ρ P(x)`.
pub fn luders_instrument(a: &Observable) -> Instrument {
    let operations = a
        .spectrum()
        .iter()
        .map(|c| {
            let x = Outcome::new(c.eigenvalue).expect("finite eigenvalue");
            (
                x,
                Operation {
                    dim: a.dim(),
                    kraus: vec![c.projector.clone()],
                },
            )
        })
        .collect();
    Instrument {
        dim: a.dim(),
        operations,
    }
}

/// Repeatable instrument of a non-degenerate observable,
/// `ρ ↦ |φ_n⟩⟨φ_n|ρ|φ_n⟩⟨φ_n|`.
pub fn von_neumann_instrument(a: &Observable) -> Result<Instrument> {
    if let Some(c) = a.spectrum().iter().find(|c| c.multiplicity != 1) {
        return Err(Error::DegenerateObservable {
            eigenvalue: c.eigenvalue,
            multiplicity: c.multiplicity,
        });
    }
    Ok(luders_instrument(a))
}

/// Instrument extended to `H ⊗ H'` by `K ↦ K ⊗ I`.
pub fn tensor_extend(ins: &Instrument, extra_dim: usize) -> Result<Instrument> {
    if extra_dim == 0 {
        return Err(Error::InvalidParameter("extra dimension must be at least 1".into()));
    }
    let id = CMatrix::identity(extra_dim);
    let operations = ins
        .operations
        .iter()
        .map(|(&x, op)| {
            (
                x,
                Operation {
                    dim: op.dim * extra_dim,
                    kraus: op.kraus.iter().map(|k| k.kron(&id)).collect(),
                },
            )
        })
        .collect();
    Ok(Instrument {
        dim: ins.dim * extra_dim,
        operations,
    })
}

/// Column-stacking vectorization.
pub fn vectorize(x: &CMatrix) -> Vec<C64> {
    let (r, c) = (x.rows(), x.cols());
    let mut v = Vec::with_capacity(r * c);
    for j in 0..c {
        for i in 0..r {
            v.push(x[(i, j)]);
        }
    }
    v
}

/// Inverse of [`vectorize`] for a `d × d` matrix.
pub fn unvectorize(v: &[C64], d: usize) -> CMatrix {
    CMatrix::from_fn(d, d, |i, j| v[j * d + i])
}

/// A linear map given by its matrix on column-stacked vectors, required only
/// to preserve Hermiticity.
#[derive(Clone, Debug, PartialEq)]
pub struct RawSuperoperator {
    dim: usize,
    action: CMatrix,
}

impl RawSuperoperator {
    pub fn new(dim: usize, action: CMatrix) -> Result<Self> {
        let d2 = dim * dim;
        if action.rows() != d2 || action.cols() != d2 {
            return Err(Error::DimensionMismatch {
                expected: d2,
                found: action.rows().max(action.cols()),
            });
        }
        let s = RawSuperoperator { dim, action };
        let defect = s.hermiticity_defect();
        if defect > HERM_TOL {
            return Err(Error::NotHermiticityPreserving { defect });
        }
        Ok(s)
    }

    /// Tabulates `f` on matrix units.
    pub fn from_map(dim: usize, f: impl Fn(&CMatrix) -> CMatrix) -> Result<Self> {
        let d2 = dim * dim;
        let mut cols = Vec::with_capacity(d2);
        for j in 0..dim {
            for i in 0..dim {
                cols.push(vectorize(&f(&CMatrix::unit(dim, i, j))));
            }
        }
        Self::new(dim, CMatrix::from_fn(d2, d2, |r, c| cols[c][r]))
    }

    /// Transposition in the canonical basis.
    pub fn transpose(dim: usize) -> Self {
        let d2 = dim * dim;
        let action = CMatrix::from_fn(d2, d2, |r, c| {
            let (ri, rj) = (r % dim, r / dim);
            let (ci, cj) = (c % dim, c / dim);
            if ri == cj && rj == ci {
                crate::linalg::ONE
            } else {
                ZERO
            }
        });
        RawSuperoperator { dim, action }
    }

    pub fn action(&self) -> &CMatrix {
        &self.action
    }

    pub fn scaled(&self, s: f64) -> Self {
        RawSuperoperator {
            dim: self.dim,
            action: self.action.scale_real(s),
        }
    }

    /// Pointwise sum of two maps of equal dimension.
    pub fn plus(&self, other: &RawSuperoperator) -> Result<Self> {
        require_dim(self.dim, other.dim)?;
        Ok(RawSuperoperator {
            dim: self.dim,
            action: &self.action + &other.action,
        })
    }

    /// Largest relative anti-Hermitian part of `S(H)` over a Hermitian basis.
    pub fn hermiticity_defect(&self) -> f64 {
        let d = self.dim;
        let mut worst: f64 = 0.0;
        for i in 0..d {
            for j in i..d {
                let mut basis = vec![CMatrix::unit(d, i, j) + CMatrix::unit(d, j, i)];
                if i != j {
                    let a = CMatrix::unit(d, i, j) - CMatrix::unit(d, j, i);
                    basis.push(a.scale(crate::linalg::I));
                }
                for h in basis {
                    let out = self.map(&h);
                    worst = worst.max(out.hermitian_defect() / out.frobenius_norm().max(1.0));
                }
            }
        }
        worst
    }
}

impl LinearMap for RawSuperoperator {
    fn dim(&self) -> usize {
        self.dim
    }

    fn map(&self, x: &CMatrix) -> CMatrix {
        unvectorize(&self.action.apply_vec(&vectorize(x)), self.dim)
    }
}

/// `Σ_ij E_ij ⊗ S(E_ij)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChoiMatrix {
    dim: usize,
    matrix: CMatrix,
}

impl ChoiMatrix {
    pub fn new(dim: usize, matrix: CMatrix) -> Result<Self> {
        require_dim(dim * dim, matrix.rows())?;
        require_dim(dim * dim, matrix.cols())?;
        let asymmetry = matrix.hermitian_defect() / matrix.frobenius_norm().max(1.0);
        if asymmetry > HERM_TOL {
            return Err(Error::NotHermitian { asymmetry });
        }
        Ok(ChoiMatrix { dim, matrix })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn min_eigenvalue(&self) -> f64 {
        eig_hermitian(&self.matrix)
            .expect("Choi matrix is Hermitian")
            .min_eigenvalue()
    }

    /// Frobenius distance between two Choi matrices.
    pub fn distance(&self, other: &ChoiMatrix) -> f64 {
        self.matrix.distance(&other.matrix)
    }
}

pub fn choi_matrix<M: LinearMap + ?Sized>(s: &M) -> ChoiMatrix {
    let d = s.dim();
    let mut c = CMatrix::zeros(d * d, d * d);
    for i in 0..d {
        for j in 0..d {
            let unit = CMatrix::unit(d, i, j);
            c += &unit.kron(&s.map(&unit));
        }
    }
    ChoiMatrix { dim: d, matrix: c }
}

/// A finite sequence `(ξ_i, ρ_i)` for the bilinear positivity criterion.
#[derive(Clone, Debug)]
pub struct CpWitness {
    pub vectors: Vec<Vec<C64>>,
    pub operators: Vec<CMatrix>,
    /// `Σ_ij (ξ_i, S(ρ_i†ρ_j) ξ_j)`, negative for a genuine witness.
    pub value: f64,
}

/// Outcome of the Choi-matrix complete-positivity test.
#[derive(Clone, Debug)]
pub struct CpCertificate {
    pub completely_positive: bool,
    pub choi_min_eigenvalue: f64,
    /// Present only when the map fails the test.
    pub witness: Option<CpWitness>,
}

/// `Σ_ij (ξ_i, S(ρ_i†ρ_j) ξ_j)`.
pub fn bilinear_form<M: LinearMap + ?Sized>(s: &M, vectors: &[Vec<C64>], operators: &[CMatrix]) -> C64 {
    debug_assert_eq!(vectors.len(), operators.len());
    let n = vectors.len();
    let mut acc = ZERO;
    for i in 0..n {
        for j in 0..n {
            let image = s.map(&(operators[i].adjoint() * &operators[j]));
            let v = image.apply_vec(&vectors[j]);
            acc += vectors[i].iter().zip(&v).map(|(a, b)| a.conj() * b).sum::<C64>();
        }
    }
    acc
}

/// Choi test: completely positive iff the Choi matrix is PSD within
/// `tol · max(1, ‖C‖_F)`.
///
/// On failure the eigenvector `v` of the most negative Choi eigenvalue is
/// unpacked into `ξ_i = (v_{i·d}, …, v_{i·d+d−1})` and `ρ_i = |e_0⟩⟨e_i|`, so
/// that `ρ_i†ρ_j = E_ij` and the bilinear form equals that eigenvalue.
pub fn is_completely_positive<M: LinearMap + ?Sized>(s: &M, tol: f64) -> CpCertificate {
    let d = s.dim();
    let choi = choi_matrix(s);
    let eig = eig_hermitian(&choi.matrix.hermitian_part()).expect("Hermitian part");
    let lmin = eig.min_eigenvalue();
    let ok = lmin >= -tol * choi.matrix.frobenius_norm().max(1.0);
    let witness = (!ok).then(|| {
        let v = eig.eigenvector(0);
        let vectors: Vec<Vec<C64>> = (0..d).map(|i| v[i * d..(i + 1) * d].to_vec()).collect();
        let operators: Vec<CMatrix> = (0..d).map(|i| CMatrix::unit(d, 0, i)).collect();
        let value = bilinear_form(s, &vectors, &operators).re;
        CpWitness {
            vectors,
            operators,
            value,
        }
    });
    CpCertificate {
        completely_positive: ok,
        choi_min_eigenvalue: lmin,
        witness,
    }
}

/// Result of [`randomized_cp_check`].
#[derive(Clone, Debug)]
pub struct RandomizedCpCheck {
    pub completely_positive: bool,
    pub trials: usize,
    /// Smallest value of the bilinear form divided by `Σ_ij |term_ij|`.
    pub min_relative_value: f64,
    /// The most negative sequence found, if any term went negative.
    pub witness: Option<CpWitness>,
}

/// Evaluates the bilinear criterion on random sequences of length 1–4.
///
/// Independent of the Choi test. Half of the trials draw rank-one
/// `ρ_i = |a⟩⟨b_i|` sharing `a`, the rest draw Gaussian `ρ_i`. A negative
/// value proves the map is not CP; absence of one after finitely many trials
/// is evidence, not proof.
pub fn randomized_cp_check<M: LinearMap + ?Sized>(s: &M, trials: usize, seed: u64, tol: f64) -> RandomizedCpCheck {
    let d = s.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = f64::INFINITY;
    let mut witness: Option<CpWitness> = None;

    for t in 0..trials {
        let n = rng.random_range(1..=4usize);
        let vectors: Vec<Vec<C64>> = (0..n).map(|_| random::vector(d, &mut rng)).collect();
        let operators: Vec<CMatrix> = if t % 2 == 0 {
            let a = random::vector(d, &mut rng);
            (0..n)
                .map(|_| CMatrix::outer(&a, &random::vector(d, &mut rng)))
                .collect()
        } else {
            (0..n).map(|_| random::ginibre(d, d, &mut rng)).collect()
        };

        let mut value = ZERO;
        let mut mass = 0.0;
        for i in 0..n {
            for j in 0..n {
                let image = s.map(&(operators[i].adjoint() * &operators[j]));
                let v = image.apply_vec(&vectors[j]);
                let term: C64 = vectors[i].iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
                value += term;
                mass += term.norm();
            }
        }
        let relative = value.re / mass.max(f64::MIN_POSITIVE);
        if relative < best {
            best = relative;
            if value.re < 0.0 {
                witness = Some(CpWitness {
                    vectors,
                    operators,
                    value: value.re,
                });
            }
        }
    }
    RandomizedCpCheck {
        completely_positive: best >= -tol,
        trials,
        min_relative_value: best,
        witness: witness.filter(|_| best < -tol),
    }
}

/// Kraus operators from a PSD Choi matrix.
///
/// Eigenpairs are taken in descending eigenvalue order, those at or below
/// [`KRAUS_RANK_CUTOFF`] times the largest eigenvalue are dropped, and each
/// eigenvector's first component above `1e−10` in modulus is rotated to be
/// real positive. `K[a, i] = √λ · v[i·d + a]`. A zero Choi matrix gives a
/// single zero Kraus operator.
pub fn kraus_from_choi(c: &ChoiMatrix, tol: f64) -> Result<Operation> {
    let d = c.dim;
    let eig = eig_hermitian(&c.matrix.hermitian_part())?;
    let lmin = eig.min_eigenvalue();
    if lmin < -tol * c.matrix.frobenius_norm().max(1.0) {
        return Err(Error::NotPsd {
            min_eigenvalue: lmin,
        });
    }
    let lmax = eig.max_eigenvalue();
    let cutoff = KRAUS_RANK_CUTOFF * lmax;
    let mut kraus = Vec::new();
    for k in (0..eig.eigenvalues.len()).rev() {
        let lambda = eig.eigenvalues[k];
        if lambda <= cutoff || lambda <= 0.0 {
            continue;
        }
        let mut v = eig.eigenvector(k);
        if let Some(pivot) = v.iter().copied().find(|z| z.norm() > 1e-10) {
            let phase = pivot.conj() / pivot.norm();
            for z in v.iter_mut() {
                *z *= phase;
            }
        }
        let scale = lambda.sqrt();
        kraus.push(CMatrix::from_fn(d, d, |a, i| v[i * d + a] * scale));
    }
    if kraus.is_empty() {
        return Ok(Operation::zero(d));
    }
    Operation::new(kraus)
}

/// `x ↦ μ(x)·T` with `T` the transpose: positive, trace-preserving in sum,
/// but not completely positive.
pub fn transpose_pseudo_instrument(mu: &OutcomeDistribution, dim: usize) -> BTreeMap<Outcome, RawSuperoperator> {
    let t = RawSuperoperator::transpose(dim);
    mu.iter_raw().map(|(x, p)| (x, t.scaled(p))).collect()
}

/// Davies–Lewis conditions for a family of raw maps.
#[derive(Clone, Debug)]
pub struct DlReport {
    /// Smallest eigenvalue of `S_x(|ψ⟩⟨ψ|)` over all outcomes and probed
    /// unit vectors.
    pub positivity_min_eigenvalue: f64,
    pub positive: bool,
    /// `‖Tr ∘ Σ_x S_x − Tr‖` evaluated on matrix units.
    pub unity_defect: f64,
    pub trace_preserving: bool,
    pub outcome_count: usize,
}

impl DlReport {
    pub fn is_dl_instrument(&self) -> bool {
        self.positive && self.trace_preserving && self.outcome_count > 0
    }
}

/// Checks positivity, unity and finiteness of a family of raw maps.
///
/// Positivity is probed on pure states: the basis vectors, the pairs
/// `e_i ± e_j`, `e_i ± i·e_j`, and `samples` random unit vectors.
pub fn check_dl_family(maps: &BTreeMap<Outcome, RawSuperoperator>, samples: usize, seed: u64) -> Result<DlReport> {
    let d = maps.values().next().ok_or(Error::EmptyOutcomes)?.dim;
    if let Some(s) = maps.values().find(|s| s.dim != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: s.dim,
        });
    }

    let mut probes: Vec<Vec<C64>> = Vec::new();
    for i in 0..d {
        let mut e = vec![ZERO; d];
        e[i] = crate::linalg::ONE;
        probes.push(e);
        for j in (i + 1)..d {
            for phase in [crate::linalg::c(1.0, 0.0), crate::linalg::c(-1.0, 0.0), crate::linalg::I, -crate::linalg::I] {
                let mut v = vec![ZERO; d];
                v[i] = crate::linalg::ONE;
                v[j] = phase;
                probes.push(v);
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    probes.extend((0..samples).map(|_| random::vector(d, &mut rng)));

    let mut worst = f64::INFINITY;
    for psi in &probes {
        let norm2: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        let state = CMatrix::outer(psi, psi).scale_real(1.0 / norm2);
        for s in maps.values() {
            let out = s.map(&state).hermitian_part();
            worst = worst.min(eig_hermitian(&out)?.min_eigenvalue());
        }
    }

    let mut defect2 = 0.0;
    for i in 0..d {
        for j in 0..d {
            let unit = CMatrix::unit(d, i, j);
            let tr: C64 = maps.values().map(|s| s.map(&unit).trace().expect("square")).sum();
            let target = if i == j { 1.0 } else { 0.0 };
            defect2 += (tr - target).norm_sqr();
        }
    }
    let unity_defect = defect2.sqrt();
    Ok(DlReport {
        positivity_min_eigenvalue: worst,
        positive: worst >= -UNITY_TOL,
        unity_defect,
        trace_preserving: unity_defect <= UNITY_TOL,
        outcome_count: maps.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, pauli, ONE};
    use crate::outcome::label;
    use rand::SeedableRng;

    fn z() -> Observable {
        Observable::new(pauli::z()).unwrap()
    }

    fn x_obs() -> Observable {
        Observable::new(pauli::x()).unwrap()
    }

    fn plus() -> DensityOperator {
        DensityOperator::pure(&[ONE, ONE]).unwrap()
    }

    fn diag(v: &[f64]) -> DensityOperator {
        DensityOperator::new(CMatrix::real_diag(v)).unwrap()
    }

    fn single(op: Operation) -> Instrument {
        let mut m = BTreeMap::new();
        m.insert(label(0.0), op);
        Instrument::new(m).unwrap()
    }

    #[test]
    fn operation_validation() {
        assert_eq!(Operation::new(vec![]), Err(Error::EmptyKraus));
        assert!(matches!(
            Operation::new(vec![CMatrix::identity(2).scale_real(1.1)]),
            Err(Error::TraceIncreasing { .. })
        ));
        assert!(matches!(
            Operation::new(vec![CMatrix::identity(2), CMatrix::identity(3)]),
            Err(Error::DimensionMismatch { .. })
        ));
        let mut m = BTreeMap::new();
        m.insert(label(0.0), Operation::new(vec![CMatrix::real_diag(&[1.0, 0.0])]).unwrap());
        assert!(matches!(Instrument::new(m), Err(Error::InstrumentUnity { .. })));
    }

    #[test]
    fn apply_examples() {
        let rho = plus();
        assert_eq!(apply(&Operation::identity(2), &rho).unwrap(), *rho.matrix());
        let lz = luders_instrument(&z());
        let out = apply(lz.operation(label(1.0)).unwrap(), &rho).unwrap();
        assert!(out.distance(&CMatrix::real_diag(&[0.5, 0.0])) < 1e-15);
        let k = Operation::new(vec![CMatrix::real_diag(&[1.0, 0.5])]).unwrap();
        let out = apply(&k, &DensityOperator::maximally_mixed(2)).unwrap();
        assert!(out.distance(&CMatrix::real_diag(&[0.5, 0.125])) < 1e-15);
    }

    #[test]
    fn probability_examples() {
        let lz = luders_instrument(&z());
        assert_eq!(outcome_probability(&lz, label(1.0), &diag(&[1.0, 0.0])).unwrap(), 1.0);
        assert!((outcome_probability(&lz, label(1.0), &plus()).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(outcome_probability(&lz, label(7.0), &plus()).unwrap(), 0.0);
    }

    #[test]
    fn post_state_examples() {
        let lz = luders_instrument(&z());
        let post = post_state(&lz, label(1.0), &plus()).unwrap();
        assert!(post.matrix().distance(&CMatrix::real_diag(&[1.0, 0.0])) < 1e-15);

        let id = single(Operation::identity(2));
        let rho = plus();
        assert!(post_state(&id, label(0.0), &rho).unwrap().matrix().distance(rho.matrix()) < 1e-15);

        let damp = Operation::new(vec![CMatrix::real_diag(&[1.0, 0.5f64.sqrt()])]).unwrap();
        let rest = Operation::new(vec![CMatrix::real(&[&[0.0, 0.5f64.sqrt()], &[0.0, 0.0]])]).unwrap();
        let mut m = BTreeMap::new();
        m.insert(label(0.0), damp);
        m.insert(label(1.0), rest);
        let ins = Instrument::new(m).unwrap();
        let post = post_state(&ins, label(0.0), &diag(&[0.5, 0.5])).unwrap();
        let expected = CMatrix::real_diag(&[0.5 / 0.75, 0.25 / 0.75]);
        assert!(post.matrix().distance(&expected) < 1e-15);

        assert!(matches!(
            post_state(&lz, label(-1.0), &diag(&[1.0, 0.0])),
            Err(Error::ZeroProbability { .. })
        ));
    }

    #[test]
    fn dual_and_effect_examples() {
        let a = pauli::x();
        assert_eq!(dual_apply(&Operation::identity(2), &a).unwrap(), a);
        let lz = luders_instrument(&z());
        let p = lz.operation(label(1.0)).unwrap();
        assert_eq!(dual_apply(p, &CMatrix::identity(2)).unwrap(), CMatrix::real_diag(&[1.0, 0.0]));
        assert_eq!(effect(&Operation::identity(2)), CMatrix::identity(2));
        assert_eq!(effect(p), CMatrix::real_diag(&[1.0, 0.0]));
        let k = Operation::new(vec![CMatrix::real_diag(&[0.6, 0.8])]).unwrap();
        assert!(effect(&k).distance(&CMatrix::real_diag(&[0.36, 0.64])) < 1e-15);

        let mut r = ChaCha8Rng::seed_from_u64(21);
        let ins = random::instrument(3, 2, 2, &mut r);
        let op = ins.operation(label(0.0)).unwrap();
        let a = random::hermitian(3, &mut r);
        for _ in 0..20 {
            let rho = random::state(3, &mut r);
            let lhs = crate::linalg::trace_product(&a, &apply(op, &rho).unwrap());
            let rhs = rho.expectation(&dual_apply(op, &a).unwrap());
            assert!((lhs - rhs).norm() < 1e-10);
        }
    }

    #[test]
    fn induced_povm_examples() {
        let zo = z();
        let lz = luders_instrument(&zo);
        assert_eq!(induced_povm(&lz).unwrap(), crate::povm::spectral_povm(&zo));
        let id = single(Operation::identity(2));
        assert_eq!(induced_povm(&id).unwrap().element(label(0.0)), Some(&CMatrix::identity(2)));

        let mut m = BTreeMap::new();
        m.insert(label(1.0), Operation::new(vec![CMatrix::identity(2).scale_real(0.3f64.sqrt())]).unwrap());
        m.insert(label(2.0), Operation::new(vec![CMatrix::identity(2).scale_real(0.7f64.sqrt())]).unwrap());
        let p = induced_povm(&Instrument::new(m).unwrap()).unwrap();
        assert!(p.element(label(1.0)).unwrap().distance(&CMatrix::identity(2).scale_real(0.3)) < 1e-15);
        assert!(p.element(label(2.0)).unwrap().distance(&CMatrix::identity(2).scale_real(0.7)) < 1e-15);
    }

    #[test]
    fn selective_examples() {
        let mut r = ChaCha8Rng::seed_from_u64(5);
        let ins = random::instrument(3, 3, 2, &mut r);
        let rho = random::state(3, &mut r);
        let t = nonselective_operation(&ins);
        assert!((apply(&t, &rho).unwrap().trace().unwrap().re - 1.0).abs() < 1e-10);
        assert!(dual_apply(&t, &CMatrix::identity(3)).unwrap().distance(&CMatrix::identity(3)) < 1e-9);

        let empty = selective_operation(&ins, &BTreeSet::new());
        assert_eq!(apply(&empty, &rho).unwrap().trace().unwrap().re, 0.0);

        let sub: BTreeSet<_> = [label(0.0), label(2.0)].into_iter().collect();
        let lhs = apply(&selective_operation(&ins, &sub), &rho).unwrap();
        let rhs = apply(ins.operation(label(0.0)).unwrap(), &rho).unwrap()
            + apply(ins.operation(label(2.0)).unwrap(), &rho).unwrap();
        assert!(lhs.distance(&rhs) < 1e-12);

        let lz = luders_instrument(&z());
        let out = apply(&nonselective_operation(&lz), &plus()).unwrap();
        assert!(out.distance(&CMatrix::identity(2).scale_real(0.5)) < 1e-15);
    }

    #[test]
    fn joint_examples() {
        let lz = luders_instrument(&z());
        let j = joint_distribution(&lz, &lz, &plus()).unwrap();
        let (p, m) = (label(1.0), label(-1.0));
        assert!((j[&(p, p)] - 0.5).abs() < 1e-15);
        assert!((j[&(m, m)] - 0.5).abs() < 1e-15);
        assert_eq!(j[&(p, m)], 0.0);
        assert_eq!(j[&(m, p)], 0.0);

        let id = single(Operation::identity(2));
        let mut r = ChaCha8Rng::seed_from_u64(8);
        let rho = random::state(2, &mut r);
        let j = joint_distribution(&id, &lz, &rho).unwrap();
        let d = lz.distribution(&rho).unwrap();
        for y in [p, m] {
            assert!((j[&(label(0.0), y)] - d.get(y)).abs() < 1e-15);
        }

        let lx = luders_instrument(&x_obs());
        let j = joint_distribution(&lx, &lz, &diag(&[1.0, 0.0])).unwrap();
        assert_eq!(j.len(), 4);
        for v in j.values() {
            assert!((v - 0.25).abs() < 1e-12);
        }
        let jd = joint_distribution_dual(&lx, &lz, &diag(&[1.0, 0.0])).unwrap();
        for (k, v) in &j {
            assert!((v - jd[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn conditional_examples() {
        let lz = luders_instrument(&z());
        let d = conditional_distribution(&lz, &lz, label(1.0), &plus()).unwrap();
        assert_eq!(d.get(label(1.0)), 1.0);
        assert_eq!(d.get(label(-1.0)), 0.0);

        let id = single(Operation::identity(2));
        let mut r = ChaCha8Rng::seed_from_u64(9);
        let rho = random::state(2, &mut r);
        let d = conditional_distribution(&id, &lz, label(0.0), &rho).unwrap();
        let u = lz.distribution(&rho).unwrap();
        assert!((d.get(label(1.0)) - u.get(label(1.0))).abs() < 1e-12);

        let lx = luders_instrument(&x_obs());
        let d = conditional_distribution(&lx, &lz, label(1.0), &diag(&[1.0, 0.0])).unwrap();
        assert!((d.get(label(1.0)) - 0.5).abs() < 1e-12);
        assert!((d.get(label(-1.0)) - 0.5).abs() < 1e-12);
        assert!(conditional_distribution(&lz, &lz, label(-1.0), &diag(&[1.0, 0.0])).is_err());
    }

    #[test]
    fn luders_and_von_neumann_examples() {
        let lz = luders_instrument(&z());
        assert_eq!(lz.operations().len(), 2);
        assert_eq!(von_neumann_instrument(&z()).unwrap(), lz);

        let li = luders_instrument(&Observable::new(CMatrix::identity(2)).unwrap());
        assert_eq!(li.operations().len(), 1);
        assert_eq!(li.operation(label(1.0)).unwrap().kraus(), &[CMatrix::identity(2)]);

        let vn = von_neumann_instrument(&Observable::new(CMatrix::real_diag(&[1.0, 2.0, 3.0])).unwrap()).unwrap();
        assert_eq!(vn.operations().len(), 3);

        let degenerate = Observable::new(CMatrix::real_diag(&[2.0, 2.0, 5.0])).unwrap();
        assert!(matches!(
            von_neumann_instrument(&degenerate),
            Err(Error::DegenerateObservable { multiplicity: 2, .. })
        ));

        // coherence inside the degenerate eigenspace survives
        let h = 0.5f64.sqrt();
        let psi = [c(h, 0.0), c(0.0, h), ZERO];
        let rho = DensityOperator::pure(&psi).unwrap();
        let post = post_state(&luders_instrument(&degenerate), label(2.0), &rho).unwrap();
        assert!(post.matrix().distance(rho.matrix()) < 1e-12);
    }

    #[test]
    fn transpose_examples() {
        let mut m = BTreeMap::new();
        m.insert(label(0.0), 1.0);
        let mu = OutcomeDistribution::new(m).unwrap();
        let fam = transpose_pseudo_instrument(&mu, 2);
        let t = &fam[&label(0.0)];
        let d = CMatrix::real_diag(&[0.3, 0.7]);
        assert_eq!(t.map(&d), d);

        let rho = CMatrix::from_rows(&[vec![c(0.5, 0.0), c(0.0, 0.5)], vec![c(0.0, -0.5), c(0.5, 0.0)]]).unwrap();
        let out = t.map(&rho);
        assert_eq!(out, rho.transpose());
        assert!(crate::linalg::is_psd(&out, 1e-9).unwrap());

        let mut m = BTreeMap::new();
        m.insert(label(0.0), 0.3);
        m.insert(label(1.0), 0.7);
        let mu = OutcomeDistribution::new(m).unwrap();
        let fam = transpose_pseudo_instrument(&mu, 2);
        for (x, s) in &fam {
            assert!((choi_matrix(s).min_eigenvalue() + mu.get(*x)).abs() < 1e-9);
        }
        let dl = check_dl_family(&fam, 64, 1).unwrap();
        assert!(dl.is_dl_instrument(), "{dl:?}");
    }

    #[test]
    fn choi_examples() {
        let c_id = choi_matrix(&Operation::identity(2));
        let e = eig_hermitian(c_id.matrix()).unwrap();
        assert_eq!(e.eigenvalues.iter().filter(|&&x| x.abs() > 1e-12).count(), 1);
        assert!((c_id.matrix().trace().unwrap().re - 2.0).abs() < 1e-15);

        let e = eig_hermitian(choi_matrix(&RawSuperoperator::transpose(2)).matrix()).unwrap();
        let expected = [-1.0, 1.0, 1.0, 1.0];
        for (a, b) in e.eigenvalues.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }

        let zero = RawSuperoperator::new(2, CMatrix::zeros(4, 4)).unwrap();
        assert_eq!(choi_matrix(&zero).matrix(), &CMatrix::zeros(4, 4));
    }

    #[test]
    fn superoperator_matches_kraus_action() {
        let mut r = ChaCha8Rng::seed_from_u64(2);
        let ins = random::instrument(3, 1, 3, &mut r);
        let op = ins.operation(label(0.0)).unwrap();
        let raw = op.to_superoperator();
        let x = random::ginibre(3, 3, &mut r);
        assert!(raw.map(&x).distance(&op.map(&x)) < 1e-12);
        assert!(choi_matrix(&raw).distance(&choi_matrix(op)) < 1e-12);
        let via_fn = RawSuperoperator::from_map(3, |m| op.map(m)).unwrap();
        assert!(via_fn.action().distance(raw.action()) < 1e-12);
    }

    #[test]
    fn cp_examples() {
        let mut r = ChaCha8Rng::seed_from_u64(4);
        let ins = random::instrument(2, 2, 2, &mut r);
        for op in ins.operations().values() {
            let cert = is_completely_positive(op, 1e-9);
            assert!(cert.completely_positive && cert.witness.is_none());
            assert!(randomized_cp_check(op, 500, 1, 1e-9).completely_positive);
        }

        let t = RawSuperoperator::transpose(2);
        let cert = is_completely_positive(&t, 1e-9);
        assert!(!cert.completely_positive);
        let w = cert.witness.unwrap();
        assert!(w.value <= -0.5);
        assert!((bilinear_form(&t, &w.vectors, &w.operators).re - w.value).abs() < 1e-12);
        let rnd = randomized_cp_check(&t, DEFAULT_CP_TRIALS, 1, 1e-9);
        assert!(!rnd.completely_positive);
        assert!(rnd.witness.unwrap().value < 0.0);

        // Choi = 0.9·|Ω⟩⟨Ω| + 0.1·SWAP has the singlet at −0.1
        let mixed = Operation::identity(2).to_superoperator().scaled(0.9).plus(&t.scaled(0.1)).unwrap();
        let cert = is_completely_positive(&mixed, 1e-9);
        assert!((cert.choi_min_eigenvalue + 0.1).abs() < 1e-12);
        assert!(!cert.completely_positive);
    }

    #[test]
    fn kraus_from_choi_examples() {
        let op = kraus_from_choi(&choi_matrix(&Operation::identity(2)), 1e-9).unwrap();
        assert_eq!(op.kraus().len(), 1);
        assert!(op.kraus()[0].distance(&CMatrix::identity(2)) < 1e-12);

        let zero = ChoiMatrix::new(2, CMatrix::zeros(4, 4)).unwrap();
        let op = kraus_from_choi(&zero, 1e-9).unwrap();
        assert_eq!(op, Operation::zero(2));

        let lz = luders_instrument(&z());
        let p = lz.operation(label(1.0)).unwrap();
        let op = kraus_from_choi(&choi_matrix(p), 1e-9).unwrap();
        assert_eq!(op.kraus().len(), 1);
        assert!(op.kraus()[0].distance(&CMatrix::real_diag(&[1.0, 0.0])) < 1e-12);

        let swap = choi_matrix(&RawSuperoperator::transpose(2));
        assert!(matches!(kraus_from_choi(&swap, 1e-9), Err(Error::NotPsd { .. })));

        let mut r = ChaCha8Rng::seed_from_u64(12);
        let ins = random::instrument(3, 1, 2, &mut r);
        let c0 = choi_matrix(ins.operation(label(0.0)).unwrap());
        let back = kraus_from_choi(&c0, 1e-9).unwrap();
        assert_eq!(back.kraus().len(), 2);
        assert!(choi_matrix(&back).distance(&c0) < 1e-9);
    }

    #[test]
    fn tensor_extend_examples() {
        let lz = luders_instrument(&z());
        let same = tensor_extend(&lz, 1).unwrap();
        assert_eq!(same, lz);

        let ext = tensor_extend(&lz, 2).unwrap();
        let rho = diag(&[1.0, 0.0]);
        let other = DensityOperator::maximally_mixed(2);
        let post = post_state(&ext, label(1.0), &rho.tensor(&other)).unwrap();
        let expected = CMatrix::real_diag(&[1.0, 0.0]).kron(&CMatrix::identity(2).scale_real(0.5));
        assert!(post.matrix().distance(&expected) < 1e-12);

        let mut r = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..20 {
            let ins = random::instrument(2, 3, 2, &mut r);
            let ext = tensor_extend(&ins, 3).unwrap();
            let a = random::state(2, &mut r);
            let b = random::state(3, &mut r);
            let ab = a.tensor(&b);
            for x in ins.outcomes() {
                let p1 = outcome_probability(&ins, x, &a).unwrap();
                let p2 = outcome_probability(&ext, x, &ab).unwrap();
                assert!((p1 - p2).abs() < 1e-10);
                let post = post_state(&ext, x, &ab).unwrap();
                let product = post_state(&ins, x, &a).unwrap().tensor(&b);
                assert!(post.matrix().distance(product.matrix()) < 1e-10);
            }
        }
        assert!(tensor_extend(&lz, 0).is_err());
    }
}
