//! Probability operator-valued measures.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::linalg::{eig_hermitian, CMatrix};
use crate::outcome::Outcome;
use crate::quantum::{spectral_measure, DensityOperator, Observable, OutcomeDistribution};

/// Positivity and unity tolerance for POVM elements.
pub const POVM_TOL: f64 = 1e-9;

/// A finite POVM: positive elements summing to the identity.
#[derive(Clone, Debug, PartialEq)]
pub struct Povm {
    dim: usize,
    elements: BTreeMap<Outcome, CMatrix>,
}

impl Povm {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn elements(&self) -> &BTreeMap<Outcome, CMatrix> {
        &self.elements
    }

    pub fn element(&self, x: Outcome) -> Option<&CMatrix> {
        self.elements.get(&x)
    }

    pub fn outcomes(&self) -> impl Iterator<Item = Outcome> + '_ {
        self.elements.keys().copied()
    }

    /// True iff every element is idempotent within `tol`.
    pub fn is_projective(&self, tol: f64) -> bool {
        self.elements.values().all(|e| (e * e).distance(e) <= tol)
    }

    /// `Π(Δ) = Σ_{x∈Δ} Π(x)`.
    pub fn event_element<'a>(&self, labels: impl IntoIterator<Item = &'a Outcome>) -> CMatrix {
        let mut acc = CMatrix::zeros(self.dim, self.dim);
        for x in labels {
            if let Some(e) = self.elements.get(x) {
                acc += e;
            }
        }
        acc
    }
}

/// Checks positivity, unity and shape of a candidate POVM.
pub fn validate_povm(elements: BTreeMap<Outcome, CMatrix>) -> Result<Povm> {
    let dim = match elements.values().next() {
        Some(e) => e.rows(),
        None => return Err(Error::EmptyOutcomes),
    };
    let mut total = CMatrix::zeros(dim, dim);
    for (&label, e) in &elements {
        if !e.is_square() {
            return Err(Error::NotSquare {
                rows: e.rows(),
                cols: e.cols(),
            });
        }
        if e.rows() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: e.rows(),
            });
        }
        let min_eigenvalue = eig_hermitian(e)?.min_eigenvalue();
        if min_eigenvalue < -POVM_TOL {
            return Err(Error::PovmNotPsd {
                label,
                min_eigenvalue,
            });
        }
        total += e;
    }
    let defect = total.distance(&CMatrix::identity(dim));
    if defect > POVM_TOL {
        return Err(Error::PovmUnity { defect });
    }
    Ok(Povm { dim, elements })
}

fn require_dim(p: &Povm, rho: &DensityOperator) -> Result<()> {
    if p.dim == rho.dim() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            expected: p.dim,
            found: rho.dim(),
        })
    }
}

/// `x ↦ Tr[Π(x) ρ]`.
pub fn outcome_distribution(p: &Povm, rho: &DensityOperator) -> Result<OutcomeDistribution> {
    require_dim(p, rho)?;
    OutcomeDistribution::new(
        p.elements
            .iter()
            .map(|(&x, e)| (x, rho.expectation(e).re))
            .collect(),
    )
}

/// The POVM of an apparatus measuring `a` by its spectral projections.
pub fn spectral_povm(a: &Observable) -> Povm {
    Povm {
        dim: a.dim(),
        elements: spectral_measure(a),
    }
}

/// `Tr[Π(Δ) ρ]`; labels outside the POVM contribute nothing.
pub fn event_probability(p: &Povm, labels: &BTreeSet<Outcome>, rho: &DensityOperator) -> Result<f64> {
    require_dim(p, rho)?;
    Ok(labels
        .iter()
        .filter_map(|x| p.elements.get(x))
        .map(|e| rho.expectation(e).re)
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{pauli, ONE};
    use crate::outcome::label;
    use crate::random;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn z_povm() -> Povm {
        spectral_povm(&Observable::new(pauli::z()).unwrap())
    }

    fn half_identity() -> CMatrix {
        CMatrix::identity(2).scale_real(0.5)
    }

    #[test]
    fn validate_examples() {
        let mut m = BTreeMap::new();
        m.insert(label(1.0), CMatrix::real_diag(&[1.0, 0.0]));
        m.insert(label(-1.0), CMatrix::real_diag(&[0.0, 1.0]));
        assert!(validate_povm(m).is_ok());

        let mut m = BTreeMap::new();
        m.insert(label(0.0), half_identity());
        m.insert(label(1.0), half_identity());
        assert!(validate_povm(m).is_ok());

        let mut m = BTreeMap::new();
        m.insert(label(0.0), CMatrix::real_diag(&[1.0, 0.0]));
        assert!(matches!(validate_povm(m), Err(Error::PovmUnity { .. })));

        let mut m = BTreeMap::new();
        m.insert(label(0.0), CMatrix::real_diag(&[1.5, 0.5]));
        m.insert(label(3.0), CMatrix::real_diag(&[-0.5, 0.5]));
        match validate_povm(m) {
            Err(Error::PovmNotPsd { label: l, .. }) => assert_eq!(l, label(3.0)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn distribution_examples() {
        let zero = DensityOperator::new(CMatrix::real_diag(&[1.0, 0.0])).unwrap();
        let d = outcome_distribution(&z_povm(), &zero).unwrap();
        assert_eq!(d.get(label(1.0)), 1.0);
        assert_eq!(d.get(label(-1.0)), 0.0);

        let mut m = BTreeMap::new();
        m.insert(label(0.0), half_identity());
        m.insert(label(1.0), half_identity());
        let trivial = validate_povm(m).unwrap();
        let rho = random::state(2, &mut ChaCha8Rng::seed_from_u64(1));
        let d = outcome_distribution(&trivial, &rho).unwrap();
        assert!((d.get(label(0.0)) - 0.5).abs() < 1e-12);

        // tetrahedral Bloch vectors: Tr[(I + n·σ)/4 · I/2] = 1/4
        let s = 1.0 / 3f64.sqrt();
        let bloch = [[s, s, s], [s, -s, -s], [-s, s, -s], [-s, -s, s]];
        let elements = bloch
            .iter()
            .enumerate()
            .map(|(k, n)| {
                let e = CMatrix::identity(2) + pauli::x() * n[0] + pauli::y() * n[1] + pauli::z() * n[2];
                (label(k as f64), e.scale_real(0.25))
            })
            .collect();
        let sic = validate_povm(elements).unwrap();
        let d = outcome_distribution(&sic, &DensityOperator::maximally_mixed(2)).unwrap();
        for k in 0..4 {
            assert!((d.get(label(k as f64)) - 0.25).abs() < 1e-12);
        }
        assert!(!sic.is_projective(1e-9));
    }

    #[test]
    fn spectral_examples() {
        let p = z_povm();
        assert_eq!(p.elements().len(), 2);
        assert!(p.is_projective(1e-9));
        let p = spectral_povm(&Observable::new(CMatrix::identity(2)).unwrap());
        assert_eq!(p.element(label(1.0)), Some(&CMatrix::identity(2)));
        let p = spectral_povm(&Observable::new(CMatrix::real_diag(&[2.0, 2.0, 5.0])).unwrap());
        let ranks: Vec<f64> = p.elements().values().map(|e| e.trace().unwrap().re).collect();
        assert_eq!(ranks, vec![2.0, 1.0]);
    }

    #[test]
    fn event_examples() {
        let p = z_povm();
        let plus = DensityOperator::pure(&[ONE, ONE]).unwrap();
        let all: BTreeSet<_> = p.outcomes().collect();
        assert!((event_probability(&p, &all, &plus).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(event_probability(&p, &BTreeSet::new(), &plus).unwrap(), 0.0);
        let one: BTreeSet<_> = [label(1.0), label(42.0)].into_iter().collect();
        assert!((event_probability(&p, &one, &plus).unwrap() - 0.5).abs() < 1e-15);
        let e = p.event_element(&one);
        assert_eq!(e, CMatrix::real_diag(&[1.0, 0.0]));
    }
}
