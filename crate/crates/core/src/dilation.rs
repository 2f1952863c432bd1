//! Indirect measurement models and the realization of CP instruments.
//!
//! A model couples the system to a probe prepared in `σ` through a unitary
//! `U` on `system ⊗ probe` (system factor first) and reads a meter observable
//! `M` on the probe. [`realize`] goes the other way: it builds a model with a
//! pure probe whose induced instrument is a given CP instrument.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::instrument::{choi_matrix, kraus_from_choi, Instrument, LinearMap, Operation, PROB_FLOOR};
use crate::linalg::{eig_hermitian, gram_defect, partial_trace, trace_product, unitary_completion, CMatrix, Keep};
use crate::outcome::Outcome;
use crate::povm::{validate_povm, Povm};
use crate::quantum::{DensityOperator, Observable, OutcomeDistribution};

/// Unitarity tolerance for the coupling.
pub const UNITARY_TOL: f64 = 1e-9;
/// POVM elements and operations with Frobenius norm at or below this are
/// treated as absent outcomes.
pub const ZERO_OUTCOME_TOL: f64 = 1e-12;
/// PSD tolerance used when extracting Kraus operators from model Choi matrices.
const CHOI_TOL: f64 = 1e-9;

/// The quadruple (probe space, probe state, coupling, meter).
#[derive(Clone, Debug, PartialEq)]
pub struct IndirectModel {
    system_dim: usize,
    probe_dim: usize,
    probe_state: DensityOperator,
    coupling: CMatrix,
    meter: Observable,
}

impl IndirectModel {
    pub fn new(
        system_dim: usize,
        probe_dim: usize,
        probe_state: DensityOperator,
        coupling: CMatrix,
        meter: Observable,
    ) -> Result<Self> {
        if system_dim == 0 || probe_dim == 0 {
            return Err(Error::InvalidParameter("dimensions must be positive".into()));
        }
        for found in [probe_state.dim(), meter.dim()] {
            if found != probe_dim {
                return Err(Error::DimensionMismatch {
                    expected: probe_dim,
                    found,
                });
            }
        }
        let n = system_dim * probe_dim;
        if !coupling.is_square() || coupling.rows() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: coupling.rows(),
            });
        }
        let defect = gram_defect(&coupling);
        if defect > UNITARY_TOL {
            return Err(Error::NotUnitary { defect });
        }
        Ok(IndirectModel {
            system_dim,
            probe_dim,
            probe_state,
            coupling,
            meter,
        })
    }

    pub fn system_dim(&self) -> usize {
        self.system_dim
    }

    pub fn probe_dim(&self) -> usize {
        self.probe_dim
    }

    pub fn probe_state(&self) -> &DensityOperator {
        &self.probe_state
    }

    pub fn coupling(&self) -> &CMatrix {
        &self.coupling
    }

    pub fn meter(&self) -> &Observable {
        &self.meter
    }

    /// True iff the probe state has rank one.
    pub fn is_pure(&self) -> bool {
        self.probe_state.rank(1e-9) == 1
    }

    fn check_system(&self, rho: &DensityOperator) -> Result<()> {
        if rho.dim() == self.system_dim {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.system_dim,
                found: rho.dim(),
            })
        }
    }

    /// `U (X ⊗ σ) U†` for any system operator `X`.
    fn couple(&self, x: &CMatrix) -> CMatrix {
        self.coupling.sandwich(&x.kron(self.probe_state.matrix()))
    }

    /// `I ⊗ P^M(x)` for each meter eigenvalue, ascending.
    fn meter_projectors(&self) -> Vec<(Outcome, CMatrix)> {
        let id = CMatrix::identity(self.system_dim);
        self.meter
            .spectrum()
            .iter()
            .map(|c| (Outcome::new(c.eigenvalue).expect("finite"), id.kron(&c.projector)))
            .collect()
    }

    /// `X ↦ Tr_K{[I ⊗ P] U (X ⊗ σ) U† [I ⊗ P]}`.
    fn conditional_map(&self, projector: &CMatrix, x: &CMatrix) -> CMatrix {
        let coupled = self.couple(x);
        let projected = projector * coupled * projector;
        partial_trace(&projected, self.system_dim, self.probe_dim, Keep::First).expect("shape checked at construction")
    }
}

struct OutcomeMap<'a> {
    model: &'a IndirectModel,
    projector: CMatrix,
}

impl LinearMap for OutcomeMap<'_> {
    fn dim(&self) -> usize {
        self.model.system_dim
    }

    fn map(&self, x: &CMatrix) -> CMatrix {
        self.model.conditional_map(&self.projector, x)
    }
}

/// `x ↦ Tr{[I ⊗ P^M(x)] U(ρ⊗σ)U†}` over the meter spectrum.
pub fn model_output_distribution(m: &IndirectModel, rho: &DensityOperator) -> Result<OutcomeDistribution> {
    m.check_system(rho)?;
    let coupled = m.couple(rho.matrix());
    OutcomeDistribution::new(
        m.meter_projectors()
            .into_iter()
            .map(|(x, p)| (x, trace_product(&p, &coupled).re))
            .collect(),
    )
}

/// `x ↦ Tr_K{U†[I ⊗ P^M(x)]U(I ⊗ σ)}`, omitting zero elements.
pub fn model_induced_povm(m: &IndirectModel) -> Result<Povm> {
    let id_sigma = CMatrix::identity(m.system_dim).kron(m.probe_state.matrix());
    let mut elements = BTreeMap::new();
    for (x, p) in m.meter_projectors() {
        let heis = m.coupling.sandwich_adjoint(&p);
        let e = partial_trace(&(heis * &id_sigma), m.system_dim, m.probe_dim, Keep::First)?.hermitian_part();
        if e.frobenius_norm() > ZERO_OUTCOME_TOL {
            elements.insert(x, e);
        }
    }
    validate_povm(elements)
}

/// `Tr_K[U(ρ⊗σ)U†]`.
pub fn model_nonselective_state(m: &IndirectModel, rho: &DensityOperator) -> Result<DensityOperator> {
    m.check_system(rho)?;
    let reduced = partial_trace(&m.couple(rho.matrix()), m.system_dim, m.probe_dim, Keep::First)?;
    DensityOperator::new(reduced.hermitian_part())
}

/// State after reading `x`, normalized.
pub fn model_post_state(m: &IndirectModel, x: Outcome, rho: &DensityOperator) -> Result<DensityOperator> {
    m.check_system(rho)?;
    let projector = m
        .meter_projectors()
        .into_iter()
        .find(|(y, _)| *y == x)
        .map(|(_, p)| p)
        .ok_or(Error::ZeroProbability {
            label: x,
            probability: 0.0,
        })?;
    let out = m.conditional_map(&projector, rho.matrix());
    let p = out.trace()?.re;
    if p <= PROB_FLOOR {
        return Err(Error::ZeroProbability {
            label: x,
            probability: p,
        });
    }
    DensityOperator::from_unnormalized(&out)
}

/// The CP instrument determined by the model, one operation per meter
/// eigenvalue. Kraus operators come from each outcome's Choi matrix, which
/// handles mixed probe states uniformly. Zero operations are omitted.
pub fn model_instrument(m: &IndirectModel) -> Result<Instrument> {
    let mut operations = BTreeMap::new();
    for (x, projector) in m.meter_projectors() {
        let map = OutcomeMap { model: m, projector };
        let choi = choi_matrix(&map);
        if choi.matrix().frobenius_norm() <= ZERO_OUTCOME_TOL {
            continue;
        }
        operations.insert(x, kraus_from_choi(&choi, CHOI_TOL)?);
    }
    Instrument::new(operations)
}

/// A pure indirect measurement model inducing `ins`.
///
/// Probe slots are laid out by outcome (ascending label), then by Kraus index
/// in stored order; the probe starts in the first slot `e₀`. The coupling
/// sends `ψ ⊗ e₀ ↦ Σ_{x,k} K_{x,k}ψ ⊗ e_{x,k}` and is completed to a unitary
/// deterministically. The meter has eigenvalue `x` on the slots of outcome
/// `x`, so its spectrum is exactly the outcome set. No attempt is made to
/// minimize the probe dimension.
pub fn realize(ins: &Instrument) -> Result<IndirectModel> {
    let defect = ins.unity_defect();
    if defect > crate::instrument::UNITY_TOL {
        return Err(Error::InstrumentUnity { defect });
    }
    let d = ins.dim();
    let slots: Vec<(Outcome, &CMatrix)> = ins
        .operations()
        .iter()
        .flat_map(|(&x, op)| op.kraus().iter().map(move |k| (x, k)))
        .collect();
    let n = slots.len();

    // rows indexed by (system a, probe slot s) as a·n + s
    let mut v = CMatrix::from_fn(d * n, d, |row, i| {
        let (a, s) = (row / n, row % n);
        slots[s].1[(a, i)]
    });
    let g = v.adjoint() * &v;
    if g.distance(&CMatrix::identity(d)) > 0.0 {
        // unity holds only to UNITY_TOL; polar-correct before completion
        let inv_sqrt = eig_hermitian(&g.hermitian_part())?.map_real(|x| 1.0 / x.sqrt());
        v = v * inv_sqrt;
    }
    let w = unitary_completion(&v)?;

    // isometry columns go to inputs ψ ⊗ e₀, the rest fill the other slots in order
    let mut placement = Vec::with_capacity(d * n);
    let mut extra = d;
    for col in 0..d * n {
        let (i, s) = (col / n, col % n);
        if s == 0 {
            placement.push(i);
        } else {
            placement.push(extra);
            extra += 1;
        }
    }
    let coupling = CMatrix::from_fn(d * n, d * n, |r, c| w[(r, placement[c])]);

    let mut e0 = vec![crate::linalg::ZERO; n];
    e0[0] = crate::linalg::ONE;
    let probe_state = DensityOperator::pure(&e0)?;

    let mut components: Vec<(f64, CMatrix)> = Vec::new();
    for (s, (x, _)) in slots.iter().enumerate() {
        let unit = CMatrix::unit(n, s, s);
        match components.last_mut() {
            Some((last, p)) if *last == x.value() => *p += &unit,
            _ => components.push((x.value(), unit)),
        }
    }
    let meter = Observable::from_spectrum(components)?;
    IndirectModel::new(d, n, probe_state, coupling, meter)
}

/// Per-outcome Choi distances between two instruments on the union of their
/// outcome sets; a missing outcome counts as the zero operation.
pub fn choi_distances(a: &Instrument, b: &Instrument) -> BTreeMap<Outcome, f64> {
    let zero = Operation::zero(a.dim());
    let labels: std::collections::BTreeSet<Outcome> = a.outcomes().chain(b.outcomes()).collect();
    labels
        .into_iter()
        .map(|x| {
            let ca = choi_matrix(a.operation(x).unwrap_or(&zero));
            let cb = choi_matrix(b.operation(x).unwrap_or(&zero));
            (x, ca.distance(&cb))
        })
        .collect()
}
