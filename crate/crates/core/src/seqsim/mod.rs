//! Joint statistics of measurement sequences.
//!
//! A [`Scenario`] prepares a state at time 0, lets it evolve under a fixed
//! Hamiltonian, and applies an instrument at each of a strictly increasing
//! list of times. [`generalized_wigner_joint`] enumerates every outcome branch
//! exactly; [`wigner_joint`] evaluates the projector-sandwich formula for
//! projective sequences; [`sample_trajectories`] draws outcome tuples one
//! step at a time.
//!
//! Sampling uses ChaCha8 with the scenario seed as key and the trajectory
//! index as stream number, so trajectory `i` is reproducible on its own and
//! independent of how trajectories are scheduled across threads.

pub mod format;
pub mod report;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::instrument::Instrument;
use crate::linalg::CMatrix;
use crate::outcome::Outcome;
use crate::quantum::{clamp_probability, DensityOperator, Observable, PROB_DUST};

/// Branches whose probability falls below this are dropped from the exact
/// joint distribution and counted as pruned.
pub const BRANCH_FLOOR: f64 = 1e-14;
/// Tolerance on the total mass of a joint distribution.
pub const JOINT_NORMALIZATION_TOL: f64 = 1e-8;

/// An instrument applied at an absolute time.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementStep {
    pub instrument: Instrument,
    pub time: f64,
}

/// A measurement sequence on an otherwise isolated system.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    dim: usize,
    initial_state: DensityOperator,
    hamiltonian: Observable,
    hbar: f64,
    steps: Vec<MeasurementStep>,
}

fn check_times(times: impl IntoIterator<Item = f64>) -> Result<()> {
    let mut prev = 0.0;
    for (k, t) in times.into_iter().enumerate() {
        if !(t.is_finite() && t > prev) {
            return Err(Error::NonIncreasingTimes { step: k + 1, time: t });
        }
        prev = t;
    }
    Ok(())
}

fn require_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

impl Scenario {
    pub fn new(initial_state: DensityOperator, hamiltonian: Observable, hbar: f64, steps: Vec<MeasurementStep>) -> Result<Self> {
        let dim = initial_state.dim();
        require_dim(dim, hamiltonian.dim())?;
        if !(hbar > 0.0 && hbar.is_finite()) {
            return Err(Error::InvalidParameter(format!("hbar must be positive, got {hbar}")));
        }
        if steps.is_empty() {
            return Err(Error::InvalidParameter("scenario needs at least one step".into()));
        }
        for s in &steps {
            require_dim(dim, s.instrument.dim())?;
        }
        check_times(steps.iter().map(|s| s.time))?;
        Ok(Scenario {
            dim,
            initial_state,
            hamiltonian,
            hbar,
            steps,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn initial_state(&self) -> &DensityOperator {
        &self.initial_state
    }

    pub fn hamiltonian(&self) -> &Observable {
        &self.hamiltonian
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn steps(&self) -> &[MeasurementStep] {
        &self.steps
    }

    /// Same scenario started from a different state.
    pub fn with_initial_state(&self, rho: DensityOperator) -> Result<Self> {
        require_dim(self.dim, rho.dim())?;
        Ok(Scenario {
            initial_state: rho,
            ..self.clone()
        })
    }

    /// Evolution unitaries over the gaps `t_k − t_{k−1}`, with `t_0 = 0`.
    fn gap_unitaries(&self) -> Result<Vec<CMatrix>> {
        let mut prev = 0.0;
        self.steps
            .iter()
            .map(|s| {
                let gap = s.time - prev;
                prev = s.time;
                self.hamiltonian.evolution_unitary(gap, self.hbar)
            })
            .collect()
    }
}

/// A probability distribution over outcome tuples.
#[derive(Clone, Debug, PartialEq)]
pub struct JointDistribution {
    entries: BTreeMap<Vec<Outcome>, f64>,
    pruned: usize,
}

impl JointDistribution {
    pub fn new(entries: BTreeMap<Vec<Outcome>, f64>, pruned: usize) -> Result<Self> {
        for (tuple, &p) in &entries {
            if !(p >= -PROB_DUST) || !p.is_finite() {
                return Err(Error::ProbabilityOutOfRange {
                    label: tuple.first().copied().unwrap_or_else(|| Outcome::new(0.0).unwrap()),
                    probability: p,
                });
            }
        }
        let sum: f64 = entries.values().sum();
        if (sum - 1.0).abs() > JOINT_NORMALIZATION_TOL {
            return Err(Error::NotNormalized { sum });
        }
        Ok(JointDistribution { entries, pruned })
    }

    /// Probability of a tuple; absent tuples have probability zero.
    pub fn get(&self, outcomes: &[Outcome]) -> f64 {
        self.entries.get(outcomes).map_or(0.0, |&p| clamp_probability(p))
    }

    pub fn raw(&self, outcomes: &[Outcome]) -> f64 {
        self.entries.get(outcomes).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[Outcome], f64)> + '_ {
        self.entries.iter().map(|(k, &p)| (k.as_slice(), p))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of branches dropped below [`BRANCH_FLOOR`].
    pub fn pruned(&self) -> usize {
        self.pruned
    }

    pub fn total(&self) -> f64 {
        self.entries.values().sum()
    }

    /// Distribution of the outcome at `step` (0-based).
    pub fn marginal(&self, step: usize) -> BTreeMap<Outcome, f64> {
        let mut out = BTreeMap::new();
        for (k, &p) in &self.entries {
            *out.entry(k[step]).or_insert(0.0) += p;
        }
        out
    }

    /// Sum over the last outcome.
    pub fn drop_last(&self) -> BTreeMap<Vec<Outcome>, f64> {
        let mut out = BTreeMap::new();
        for (k, &p) in &self.entries {
            *out.entry(k[..k.len() - 1].to_vec()).or_insert(0.0) += p;
        }
        out
    }

    /// Largest absolute difference to `other` over the union of tuples.
    pub fn max_abs_difference(&self, other: &JointDistribution) -> f64 {
        self.entries
            .keys()
            .chain(other.entries.keys())
            .map(|k| (self.raw(k) - other.raw(k)).abs())
            .fold(0.0, f64::max)
    }
}

/// Joint distribution of projective measurements of `observables` at
/// `times`, `Tr[W ρ W†]` with `W = P_n U(t_n−t_{n−1}) ⋯ P₁ U(t₁)`.
pub fn wigner_joint(
    observables: &[Observable],
    times: &[f64],
    h: &Observable,
    hbar: f64,
    rho: &DensityOperator,
) -> Result<JointDistribution> {
    if observables.is_empty() || observables.len() != times.len() {
        return Err(Error::InvalidParameter(
            "need one time per observable and at least one observable".into(),
        ));
    }
    require_dim(rho.dim(), h.dim())?;
    for a in observables {
        require_dim(rho.dim(), a.dim())?;
    }
    check_times(times.iter().copied())?;

    let mut unitaries = Vec::with_capacity(times.len());
    let mut prev = 0.0;
    for &t in times {
        unitaries.push(h.evolution_unitary(t - prev, hbar)?);
        prev = t;
    }

    // chain operators W = P_n U_n ⋯ P_1 U_1, one per outcome tuple
    let mut entries = BTreeMap::new();
    let mut stack: Vec<(Vec<Outcome>, CMatrix)> = vec![(Vec::new(), CMatrix::identity(rho.dim()))];
    while let Some((prefix, w)) = stack.pop() {
        let k = prefix.len();
        for comp in observables[k].spectrum() {
            let mut tuple = prefix.clone();
            tuple.push(Outcome::new(comp.eigenvalue)?);
            let chain = &comp.projector * &(&unitaries[k] * &w);
            if k + 1 == observables.len() {
                entries.insert(tuple, chain.sandwich(rho.matrix()).trace()?.re);
            } else {
                stack.push((tuple, chain));
            }
        }
    }
    JointDistribution::new(entries, 0)
}

/// One leaf of the branch tree: an outcome tuple, its probability, and the
/// unnormalized system operator it leaves behind.
#[derive(Clone, Debug)]
pub struct Branch {
    pub outcomes: Vec<Outcome>,
    pub probability: f64,
    pub state: CMatrix,
}

/// All surviving branches of the scenario, plus the number pruned.
pub fn enumerate_branches(scenario: &Scenario) -> Result<(Vec<Branch>, usize)> {
    let unitaries = scenario.gap_unitaries()?;
    let n = scenario.steps.len();
    let mut leaves = Vec::new();
    let mut pruned = 0;
    let mut stack: Vec<(Vec<Outcome>, CMatrix)> = vec![(Vec::new(), scenario.initial_state.matrix().clone())];
    while let Some((prefix, m)) = stack.pop() {
        let k = prefix.len();
        let evolved = unitaries[k].sandwich(&m);
        for (&x, op) in scenario.steps[k].instrument.operations() {
            let branch = op.apply_matrix(&evolved);
            let p = branch.trace()?.re;
            if p < BRANCH_FLOOR {
                pruned += 1;
                continue;
            }
            let mut tuple = prefix.clone();
            tuple.push(x);
            if k + 1 == n {
                leaves.push(Branch {
                    outcomes: tuple,
                    probability: p,
                    state: branch,
                });
            } else {
                stack.push((tuple, branch));
            }
        }
    }
    leaves.sort_by(|a, b| a.outcomes.cmp(&b.outcomes));
    Ok((leaves, pruned))
}

/// `Pr{x₁,…,x_n} = Tr[I_n(x_n) α(t_n − t_{n−1}) ⋯ I₁(x₁) α(t₁) ρ]` for every
/// outcome tuple, with `α(t)ρ = e^{−iHt/ħ} ρ e^{iHt/ħ}`.
pub fn generalized_wigner_joint(scenario: &Scenario) -> Result<JointDistribution> {
    let (leaves, pruned) = enumerate_branches(scenario)?;
    JointDistribution::new(
        leaves.into_iter().map(|b| (b.outcomes, b.probability)).collect(),
        pruned,
    )
}

/// Draws `n` outcome tuples by evolving, sampling an outcome from the
/// current conditional distribution, and continuing from the post-state.
/// Results are ordered by trajectory index.
pub fn sample_trajectories(scenario: &Scenario, n: usize, seed: u64) -> Result<Vec<Vec<Outcome>>> {
    if n == 0 {
        return Err(Error::InvalidParameter("number of trajectories must be at least 1".into()));
    }
    let unitaries = scenario.gap_unitaries()?;
    let run = |index: usize| -> Vec<Outcome> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index as u64);
        let mut state = scenario.initial_state.matrix().clone();
        let mut tuple = Vec::with_capacity(scenario.steps.len());
        for (step, u) in scenario.steps.iter().zip(&unitaries) {
            let evolved = u.sandwich(&state);
            let branches: Vec<(Outcome, CMatrix, f64)> = step
                .instrument
                .operations()
                .iter()
                .map(|(&x, op)| {
                    let b = op.apply_matrix(&evolved);
                    let p = b.trace().expect("square").re.max(0.0);
                    (x, b, p)
                })
                .collect();
            let total: f64 = branches.iter().map(|b| b.2).sum();
            let mut u01 = rng.random::<f64>() * total;
            let mut pick = branches.iter().rposition(|b| b.2 > 0.0).expect("some outcome has weight");
            for (i, b) in branches.iter().enumerate() {
                if b.2 <= 0.0 {
                    continue;
                }
                if u01 < b.2 {
                    pick = i;
                    break;
                }
                u01 -= b.2;
            }
            let (x, b, p) = &branches[pick];
            tuple.push(*x);
            state = b.scale_real(1.0 / p);
        }
        tuple
    };
    Ok((0..n).into_par_iter().map(run).collect())
}

/// Empirical frequency of each sampled tuple.
pub fn empirical_frequencies(samples: &[Vec<Outcome>]) -> BTreeMap<Vec<Outcome>, f64> {
    let mut counts: BTreeMap<Vec<Outcome>, usize> = BTreeMap::new();
    for s in samples {
        *counts.entry(s.clone()).or_insert(0) += 1;
    }
    let n = samples.len() as f64;
    counts.into_iter().map(|(k, c)| (k, c as f64 / n)).collect()
}
