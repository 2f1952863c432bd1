//! States, observables, spectral measures and Born statistics.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::linalg::{
    eig_hermitian, evolution_unitary, is_psd, trace_product, CMatrix, C64, EIG_TOL, HERM_TOL,
};
use crate::outcome::Outcome;

/// Tolerance on the trace and positivity of a density operator.
pub const STATE_TOL: f64 = 1e-9;
/// Eigenvalues closer than this (relative to `max(1, ‖A‖_F)`) are one outcome.
pub const CLUSTER_TOL: f64 = 1e-8;
/// Probabilities below this read as zero.
pub const PROB_DUST: f64 = 1e-12;
/// Tolerance on the total mass of a distribution.
pub const NORMALIZATION_TOL: f64 = 1e-9;

fn require_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

/// A positive, unit-trace operator.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityOperator {
    matrix: CMatrix,
}

impl DensityOperator {
    /// Validates `m` as a state: Hermitian, positive semidefinite, trace one.
    pub fn new(m: CMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::NotSquare {
                rows: m.rows(),
                cols: m.cols(),
            });
        }
        let scale = m.frobenius_norm().max(1.0);
        let asymmetry = m.hermitian_defect() / scale;
        if asymmetry > HERM_TOL {
            return Err(Error::NotHermitian { asymmetry });
        }
        let eig = eig_hermitian(&m)?;
        let lmin = eig.min_eigenvalue();
        if lmin < -STATE_TOL * scale {
            return Err(Error::NotPsd {
                min_eigenvalue: lmin,
            });
        }
        let tr = m.trace()?.re;
        if (tr - 1.0).abs() > STATE_TOL {
            return Err(Error::TraceNotOne { trace: tr });
        }
        Ok(DensityOperator { matrix: m })
    }

    /// `|ψ⟩⟨ψ| / ‖ψ‖²`.
    pub fn pure(psi: &[C64]) -> Result<Self> {
        let norm2: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        if psi.is_empty() || norm2 == 0.0 || !norm2.is_finite() {
            return Err(Error::ZeroVector);
        }
        Self::new(CMatrix::outer(psi, psi).scale_real(1.0 / norm2))
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        DensityOperator {
            matrix: CMatrix::identity(dim).scale_real(1.0 / dim as f64),
        }
    }

    /// Normalizes a positive operator by its trace, e.g. an unnormalized
    /// post-measurement operator.
    pub fn from_unnormalized(m: &CMatrix) -> Result<Self> {
        let tr = m.trace()?.re;
        if !(tr > 0.0) {
            return Err(Error::TraceNotOne { trace: tr });
        }
        Self::new(m.scale_real(1.0 / tr).hermitian_part())
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    /// `ρ ⊗ σ`.
    pub fn tensor(&self, other: &DensityOperator) -> DensityOperator {
        DensityOperator {
            matrix: self.matrix.kron(&other.matrix),
        }
    }

    /// Number of eigenvalues above `tol`.
    pub fn rank(&self, tol: f64) -> usize {
        eig_hermitian(&self.matrix)
            .map(|e| e.eigenvalues.iter().filter(|&&x| x > tol).count())
            .unwrap_or(0)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        eig_hermitian(&self.matrix)
            .map(|e| e.eigenvalues)
            .unwrap_or_default()
    }

    /// `Tr(A ρ)`.
    pub fn expectation(&self, a: &CMatrix) -> C64 {
        trace_product(a, &self.matrix)
    }
}

/// Accepts `m` as a state.
pub fn make_density(m: CMatrix) -> Result<DensityOperator> {
    DensityOperator::new(m)
}

pub fn pure_state(psi: &[C64]) -> Result<DensityOperator> {
    DensityOperator::pure(psi)
}

/// One eigenvalue of an observable together with its eigenprojection.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralComponent {
    pub eigenvalue: f64,
    pub projector: CMatrix,
    pub multiplicity: usize,
}

/// A self-adjoint operator with its spectral decomposition.
#[derive(Clone, Debug, PartialEq)]
pub struct Observable {
    matrix: CMatrix,
    spectrum: Vec<SpectralComponent>,
}

impl Observable {
    /// Diagonalizes `matrix`, merging eigenvalues that agree within
    /// [`CLUSTER_TOL`]. A merged outcome is labelled by the mean of its
    /// members.
    pub fn new(matrix: CMatrix) -> Result<Self> {
        let eig = eig_hermitian(&matrix)?;
        let n = matrix.rows();
        let tol = CLUSTER_TOL * matrix.frobenius_norm().max(1.0);

        let mut groups: Vec<Vec<usize>> = Vec::new();
        for k in 0..n {
            match groups.last_mut() {
                Some(g) if eig.eigenvalues[k] - eig.eigenvalues[*g.last().unwrap()] <= tol => g.push(k),
                _ => groups.push(vec![k]),
            }
        }

        let spectrum = groups
            .into_iter()
            .map(|g| {
                let first = eig.eigenvalues[g[0]];
                // offsets keep the label exact when all members agree
                let offset: f64 = g.iter().map(|&k| eig.eigenvalues[k] - first).sum::<f64>() / g.len() as f64;
                let mut projector = CMatrix::zeros(n, n);
                for &k in &g {
                    let v = eig.eigenvector(k);
                    projector += &CMatrix::outer(&v, &v);
                }
                SpectralComponent {
                    eigenvalue: first + offset,
                    projector,
                    multiplicity: g.len(),
                }
            })
            .collect();

        Ok(Observable { matrix, spectrum })
    }

    /// Builds `Σ x·P(x)` from explicit eigenvalue/projector pairs, keeping the
    /// eigenvalues exactly as given.
    pub fn from_spectrum(components: Vec<(f64, CMatrix)>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::EmptyOutcomes);
        }
        let n = components[0].1.rows();
        let mut seen = std::collections::BTreeSet::new();
        let mut matrix = CMatrix::zeros(n, n);
        let mut total = CMatrix::zeros(n, n);
        let mut spectrum = Vec::with_capacity(components.len());
        for (x, p) in components {
            let key = Outcome::new(x)?;
            if !seen.insert(key) {
                return Err(Error::DuplicateLabel(key));
            }
            if !p.is_square() || p.rows() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: p.rows(),
                });
            }
            let idempotence = (&p * &p).distance(&p);
            if idempotence > EIG_TOL || p.hermitian_defect() > EIG_TOL {
                return Err(Error::InvalidParameter(format!(
                    "component for eigenvalue {x} is not an orthogonal projection (defect {idempotence:.3e})"
                )));
            }
            matrix += &p.scale_real(x);
            total += &p;
            let multiplicity = p.trace()?.re.round() as usize;
            spectrum.push(SpectralComponent {
                eigenvalue: key.value(),
                projector: p,
                multiplicity,
            });
        }
        let defect = total.distance(&CMatrix::identity(n));
        if defect > EIG_TOL {
            return Err(Error::InvalidParameter(format!(
                "projectors do not resolve the identity (defect {defect:.3e})"
            )));
        }
        spectrum.sort_by(|a, b| a.eigenvalue.total_cmp(&b.eigenvalue));
        Ok(Observable { matrix, spectrum })
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    /// Components in ascending eigenvalue order.
    pub fn spectrum(&self) -> &[SpectralComponent] {
        &self.spectrum
    }

    pub fn is_nondegenerate(&self) -> bool {
        self.spectrum.iter().all(|c| c.multiplicity == 1)
    }

    /// `exp(−i·tau·A/hbar)` assembled from the stored spectrum.
    pub fn evolution_unitary(&self, tau: f64, hbar: f64) -> Result<CMatrix> {
        if !(hbar > 0.0 && hbar.is_finite()) {
            return Err(Error::InvalidParameter(format!("hbar must be positive, got {hbar}")));
        }
        let n = self.dim();
        let mut u = CMatrix::zeros(n, n);
        for comp in &self.spectrum {
            let phase = C64::from_polar(1.0, -tau * comp.eigenvalue / hbar);
            u += &comp.projector.scale(phase);
        }
        Ok(u)
    }
}

/// Eigenvalue ↦ eigenprojection. Points off the spectrum carry the zero
/// projector and are simply absent.
pub fn spectral_measure(a: &Observable) -> BTreeMap<Outcome, CMatrix> {
    a.spectrum
        .iter()
        .map(|c| (Outcome::new(c.eigenvalue).expect("finite eigenvalue"), c.projector.clone()))
        .collect()
}

/// A finite probability distribution over real outcomes.
#[derive(Clone, Debug, PartialEq)]
pub struct OutcomeDistribution {
    entries: BTreeMap<Outcome, f64>,
}

impl OutcomeDistribution {
    /// Validates raw probabilities: each in `[−1e−12, 1 + 1e−12]` and summing
    /// to one within `1e−9`. The stored values are renormalized by their sum.
    pub fn new(entries: BTreeMap<Outcome, f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::EmptyOutcomes);
        }
        for (&label, &p) in &entries {
            if !(-PROB_DUST..=1.0 + PROB_DUST).contains(&p) {
                return Err(Error::ProbabilityOutOfRange {
                    label,
                    probability: p,
                });
            }
        }
        let sum: f64 = entries.values().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::NotNormalized { sum });
        }
        let entries = entries.into_iter().map(|(k, p)| (k, p / sum)).collect();
        Ok(OutcomeDistribution { entries })
    }

    /// Probability of `x`, clamped to `[0, 1]` with dust below `1e−12`
    /// reading as zero. Absent outcomes have probability zero.
    pub fn get(&self, x: Outcome) -> f64 {
        self.entries.get(&x).map_or(0.0, |&p| clamp_probability(p))
    }

    /// Stored value before clamping.
    pub fn raw(&self, x: Outcome) -> Option<f64> {
        self.entries.get(&x).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Outcome, f64)> + '_ {
        self.entries.iter().map(|(&k, &p)| (k, clamp_probability(p)))
    }

    pub fn iter_raw(&self) -> impl Iterator<Item = (Outcome, f64)> + '_ {
        self.entries.iter().map(|(&k, &p)| (k, p))
    }

    pub fn outcomes(&self) -> impl Iterator<Item = Outcome> + '_ {
        self.entries.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.entries.values().sum()
    }
}

pub(crate) fn clamp_probability(p: f64) -> f64 {
    if p < PROB_DUST {
        0.0
    } else {
        p.min(1.0)
    }
}

/// `x ↦ Tr[P^A(x) ρ]`.
pub fn born_distribution(a: &Observable, rho: &DensityOperator) -> Result<OutcomeDistribution> {
    require_dim(a.dim(), rho.dim())?;
    let entries = a
        .spectrum
        .iter()
        .map(|c| Ok((Outcome::new(c.eigenvalue)?, rho.expectation(&c.projector).re)))
        .collect::<Result<_>>()?;
    OutcomeDistribution::new(entries)
}

/// Mean `Tr(Aρ)` and standard deviation `sqrt(⟨A²⟩ − ⟨A⟩²)`.
pub fn mean_and_std(a: &Observable, rho: &DensityOperator) -> Result<(f64, f64)> {
    require_dim(a.dim(), rho.dim())?;
    let mean = rho.expectation(a.matrix()).re;
    let second = rho.expectation(&(a.matrix() * a.matrix())).re;
    Ok((mean, (second - mean * mean).max(0.0).sqrt()))
}

/// Both sides of Robertson's inequality `σ(A)σ(B) ≥ |Tr([A,B]ρ)|/2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RobertsonGap {
    pub lhs: f64,
    pub rhs: f64,
}

pub fn robertson_gap(a: &Observable, b: &Observable, rho: &DensityOperator) -> Result<RobertsonGap> {
    require_dim(a.dim(), b.dim())?;
    let (_, sa) = mean_and_std(a, rho)?;
    let (_, sb) = mean_and_std(b, rho)?;
    let commutator = a.matrix() * b.matrix() - b.matrix() * a.matrix();
    Ok(RobertsonGap {
        lhs: sa * sb,
        rhs: rho.expectation(&commutator).norm() / 2.0,
    })
}

/// `U ρ U†` with `U = exp(−i·tau·H/hbar)`.
pub fn evolve(rho: &DensityOperator, h: &Observable, tau: f64, hbar: f64) -> Result<DensityOperator> {
    require_dim(h.dim(), rho.dim())?;
    let u = evolution_unitary(h.matrix(), tau, hbar)?;
    Ok(DensityOperator {
        matrix: u.sandwich(rho.matrix()).hermitian_part(),
    })
}

/// `p·ρ₁ + (1−p)·ρ₂`.
pub fn mix(rho1: &DensityOperator, rho2: &DensityOperator, p: f64) -> Result<DensityOperator> {
    require_dim(rho1.dim(), rho2.dim())?;
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!("mixing weight {p} outside [0, 1]")));
    }
    Ok(DensityOperator {
        matrix: rho1.matrix.scale_real(p) + rho2.matrix.scale_real(1.0 - p),
    })
}

/// True iff `m` is a valid state at the module tolerance.
pub fn is_density(m: &CMatrix) -> bool {
    m.is_square()
        && m.hermitian_defect() <= HERM_TOL * m.frobenius_norm().max(1.0)
        && is_psd(m, STATE_TOL).unwrap_or(false)
        && m.trace().is_ok_and(|t| (t.re - 1.0).abs() <= STATE_TOL)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, pauli, ONE, ZERO};
    use crate::outcome::label;
    use crate::random;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn z() -> Observable {
        Observable::new(pauli::z()).unwrap()
    }

    fn plus() -> DensityOperator {
        DensityOperator::pure(&[ONE, ONE]).unwrap()
    }

    fn diag(v: &[f64]) -> DensityOperator {
        DensityOperator::new(CMatrix::real_diag(v)).unwrap()
    }

    #[test]
    fn make_density_examples() {
        assert!(make_density(CMatrix::identity(2).scale_real(0.5)).is_ok());
        assert!(make_density(CMatrix::real_diag(&[0.75, 0.25])).is_ok());
        assert!(matches!(
            make_density(CMatrix::real_diag(&[1.2, -0.2])),
            Err(Error::NotPsd { .. })
        ));
        assert!(matches!(
            make_density(CMatrix::real_diag(&[0.5, 0.4])),
            Err(Error::TraceNotOne { .. })
        ));
        assert!(matches!(
            make_density(CMatrix::real(&[&[0.5, 0.3], &[0.0, 0.5]])),
            Err(Error::NotHermitian { .. })
        ));
    }

    #[test]
    fn pure_state_examples() {
        assert_eq!(pure_state(&[ONE, ZERO]).unwrap().matrix(), &CMatrix::real_diag(&[1.0, 0.0]));
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let p = pure_state(&[c(h, 0.0), c(h, 0.0)]).unwrap();
        assert!(p.matrix().distance(&CMatrix::real(&[&[0.5, 0.5], &[0.5, 0.5]])) < 1e-15);
        assert_eq!(pure_state(&[c(2.0, 0.0), ZERO]).unwrap().matrix(), &CMatrix::real_diag(&[1.0, 0.0]));
        assert_eq!(pure_state(&[ZERO, ZERO]), Err(Error::ZeroVector));
        assert_eq!(p.rank(1e-9), 1);
    }

    #[test]
    fn spectral_measure_examples() {
        let m = spectral_measure(&z());
        assert_eq!(m.len(), 2);
        assert_eq!(m[&label(1.0)], CMatrix::real_diag(&[1.0, 0.0]));
        assert_eq!(m[&label(-1.0)], CMatrix::real_diag(&[0.0, 1.0]));

        let m = spectral_measure(&Observable::new(CMatrix::identity(2)).unwrap());
        assert_eq!(m.len(), 1);
        assert_eq!(m[&label(1.0)], CMatrix::identity(2));

        let m = spectral_measure(&Observable::new(CMatrix::real_diag(&[2.0, 2.0, 5.0])).unwrap());
        assert_eq!(m[&label(2.0)], CMatrix::real_diag(&[1.0, 1.0, 0.0]));
        assert_eq!(m[&label(5.0)], CMatrix::real_diag(&[0.0, 0.0, 1.0]));
    }

    #[test]
    fn clustering_merges_nearly_equal_eigenvalues() {
        let mut r = ChaCha8Rng::seed_from_u64(3);
        let u = random::unitary(3, &mut r);
        let a = u.sandwich(&CMatrix::real_diag(&[2.0, 2.0, 5.0])).hermitian_part();
        let obs = Observable::new(a).unwrap();
        assert_eq!(obs.spectrum().len(), 2);
        assert_eq!(obs.spectrum()[0].multiplicity, 2);
        assert!((obs.spectrum()[0].eigenvalue - 2.0).abs() < 1e-12);
        assert!(!obs.is_nondegenerate());
    }

    #[test]
    fn born_examples() {
        let d = born_distribution(&z(), &diag(&[1.0, 0.0])).unwrap();
        assert_eq!(d.get(label(1.0)), 1.0);
        assert_eq!(d.get(label(-1.0)), 0.0);
        let d = born_distribution(&z(), &plus()).unwrap();
        assert!((d.get(label(1.0)) - 0.5).abs() < 1e-15);
        assert!((d.get(label(-1.0)) - 0.5).abs() < 1e-15);
        let a = Observable::new(CMatrix::real_diag(&[2.0, 2.0, 5.0])).unwrap();
        let d = born_distribution(&a, &diag(&[0.2, 0.3, 0.5])).unwrap();
        assert!((d.get(label(2.0)) - 0.5).abs() < 1e-15);
        assert!((d.get(label(5.0)) - 0.5).abs() < 1e-15);
        assert!(matches!(
            born_distribution(&a, &plus()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn mean_std_examples() {
        assert_eq!(mean_and_std(&z(), &diag(&[1.0, 0.0])).unwrap(), (1.0, 0.0));
        assert_eq!(mean_and_std(&z(), &DensityOperator::maximally_mixed(2)).unwrap(), (0.0, 1.0));
        let (m, s) = mean_and_std(&z(), &diag(&[0.75, 0.25])).unwrap();
        assert!((m - 0.5).abs() < 1e-15);
        assert!((s - 0.75f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn robertson_examples() {
        let mut r = ChaCha8Rng::seed_from_u64(5);
        let rho = random::state(2, &mut r);
        let g = robertson_gap(&z(), &z(), &rho).unwrap();
        assert!(g.rhs.abs() < 1e-15 && g.lhs >= 0.0);

        let x = Observable::new(pauli::x()).unwrap();
        let y = Observable::new(pauli::y()).unwrap();
        let zero = diag(&[1.0, 0.0]);
        let g = robertson_gap(&x, &z(), &zero).unwrap();
        assert!(g.rhs.abs() < 1e-15);
        let g = robertson_gap(&x, &y, &zero).unwrap();
        assert!((g.lhs - 1.0).abs() < 1e-12);
        assert!((g.rhs - 1.0).abs() < 1e-12);
    }

    #[test]
    fn evolve_examples() {
        let zero_h = Observable::new(CMatrix::zeros(2, 2)).unwrap();
        let p = plus();
        assert_eq!(evolve(&p, &zero_h, 2.0, 1.0).unwrap(), p);

        let out = evolve(&p, &z(), std::f64::consts::FRAC_PI_2, 1.0).unwrap();
        let minus = CMatrix::real(&[&[0.5, -0.5], &[-0.5, 0.5]]);
        assert!(out.matrix().distance(&minus) < 1e-12);

        let e = diag(&[1.0, 0.0]);
        assert!(evolve(&e, &z(), 0.7, 1.0).unwrap().matrix().distance(e.matrix()) < 1e-12);
        assert!(evolve(&DensityOperator::maximally_mixed(3), &z(), 1.0, 1.0).is_err());
    }

    #[test]
    fn mix_examples() {
        let a = diag(&[1.0, 0.0]);
        let b = diag(&[0.0, 1.0]);
        assert_eq!(mix(&a, &b, 1.0).unwrap(), a);
        assert_eq!(mix(&a, &b, 0.5).unwrap().matrix(), &CMatrix::real_diag(&[0.5, 0.5]));
        let m = mix(&a, &DensityOperator::maximally_mixed(2), 0.25).unwrap();
        assert!(m.matrix().distance(&CMatrix::real_diag(&[0.625, 0.375])) < 1e-15);
        assert!(mix(&a, &b, 1.5).is_err());
        assert!(mix(&a, &DensityOperator::maximally_mixed(3), 0.5).is_err());
    }

    #[test]
    fn observable_evolution_matches_linalg() {
        let mut r = ChaCha8Rng::seed_from_u64(11);
        let h = random::observable(4, &mut r);
        let u1 = h.evolution_unitary(0.8, 1.3).unwrap();
        let u2 = evolution_unitary(h.matrix(), 0.8, 1.3).unwrap();
        assert!(u1.distance(&u2) < 1e-10);
    }

    #[test]
    fn from_spectrum_keeps_labels_exact() {
        let obs = Observable::from_spectrum(vec![
            (0.1, CMatrix::real_diag(&[1.0, 0.0, 0.0])),
            (-7.25, CMatrix::real_diag(&[0.0, 1.0, 1.0])),
        ])
        .unwrap();
        assert_eq!(obs.spectrum()[0].eigenvalue, -7.25);
        assert_eq!(obs.spectrum()[1].eigenvalue, 0.1);
        assert_eq!(obs.spectrum()[0].multiplicity, 2);
        let re = Observable::new(obs.matrix().clone()).unwrap();
        assert_eq!(re.spectrum()[1].eigenvalue, 0.1);
        assert!(Observable::from_spectrum(vec![(1.0, CMatrix::real_diag(&[1.0, 0.0]))]).is_err());
    }

    #[test]
    fn distribution_validation() {
        let mut m = BTreeMap::new();
        m.insert(label(0.0), 0.7);
        m.insert(label(1.0), 0.2);
        assert!(matches!(OutcomeDistribution::new(m.clone()), Err(Error::NotNormalized { .. })));
        m.insert(label(1.0), 0.3 + 5e-10);
        let d = OutcomeDistribution::new(m.clone()).unwrap();
        assert!((d.total() - 1.0).abs() < 1e-15);
        m.insert(label(2.0), -1e-13);
        let d = OutcomeDistribution::new(m.clone()).unwrap();
        assert_eq!(d.get(label(2.0)), 0.0);
        m.insert(label(2.0), -1e-6);
        assert!(matches!(
            OutcomeDistribution::new(m),
            Err(Error::ProbabilityOutOfRange { .. })
        ));
    }
}
