//! Scenario reports.

use std::path::Path;

use serde::Serialize;

use crate::error::Result;
use crate::instrument::{choi_matrix, is_completely_positive};
use crate::outcome::Outcome;

use super::format::{load_scenario, MatrixJson};
use super::{empirical_frequencies, enumerate_branches, sample_trajectories, JointDistribution, Scenario};

/// Relative tolerance of the Choi test used in diagnostics.
pub const CP_TOL: f64 = 1e-9;

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Number of Monte Carlo trajectories; `None` skips sampling.
    pub samples: Option<usize>,
    pub seed: u64,
    /// Include the normalized system state of every surviving branch.
    pub final_states: bool,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct JointEntry {
    pub outcomes: Vec<String>,
    pub probability: f64,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct MarginalEntry {
    pub outcome: String,
    pub probability: f64,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct Marginal {
    pub step: usize,
    pub distribution: Vec<MarginalEntry>,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct InstrumentDiagnostics {
    pub step: usize,
    pub unity_defect: f64,
    pub completely_positive: bool,
    pub choi_min_eigenvalue: f64,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct Diagnostics {
    pub pruned_branches: usize,
    pub total_probability: f64,
    pub instruments: Vec<InstrumentDiagnostics>,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct FrequencyEntry {
    pub outcomes: Vec<String>,
    pub frequency: f64,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct SampleSummary {
    pub n: usize,
    pub seed: u64,
    pub frequencies: Vec<FrequencyEntry>,
    /// Largest `|empirical − exact|` over all tuples.
    pub max_abs_deviation: f64,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct FinalState {
    pub outcomes: Vec<String>,
    pub state: MatrixJson,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct Report {
    pub joint: Vec<JointEntry>,
    pub marginals: Vec<Marginal>,
    pub diagnostics: Diagnostics,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<SampleSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_states: Option<Vec<FinalState>>,
}

impl Report {
    pub fn to_json(&self) -> String {
        super::format::to_pretty(self)
    }
}

fn strings(tuple: &[Outcome]) -> Vec<String> {
    tuple.iter().map(Outcome::to_string).collect()
}

pub fn run_scenario(scenario: &Scenario, options: &RunOptions) -> Result<Report> {
    let (leaves, pruned) = enumerate_branches(scenario)?;
    let joint = JointDistribution::new(
        leaves.iter().map(|b| (b.outcomes.clone(), b.probability)).collect(),
        pruned,
    )?;

    let marginals = (0..scenario.steps().len())
        .map(|k| Marginal {
            step: k + 1,
            distribution: joint
                .marginal(k)
                .into_iter()
                .map(|(x, p)| MarginalEntry {
                    outcome: x.to_string(),
                    probability: p,
                })
                .collect(),
        })
        .collect();

    let instruments = scenario
        .steps()
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let mut cp = true;
            let mut lmin = f64::INFINITY;
            for op in s.instrument.operations().values() {
                let cert = is_completely_positive(op, CP_TOL);
                cp &= cert.completely_positive;
                lmin = lmin.min(cert.choi_min_eigenvalue);
            }
            debug_assert!(s.instrument.operations().values().all(|op| choi_matrix(op).dim() == scenario.dim()));
            InstrumentDiagnostics {
                step: k + 1,
                unity_defect: s.instrument.unity_defect(),
                completely_positive: cp,
                choi_min_eigenvalue: lmin,
            }
        })
        .collect();

    let samples = match options.samples {
        None => None,
        Some(n) => {
            let drawn = sample_trajectories(scenario, n, options.seed)?;
            let freq = empirical_frequencies(&drawn);
            let mut dev: f64 = 0.0;
            for (t, p) in joint.iter() {
                dev = dev.max((freq.get(t).copied().unwrap_or(0.0) - p).abs());
            }
            for (t, &f) in &freq {
                dev = dev.max((f - joint.raw(t)).abs());
            }
            Some(SampleSummary {
                n,
                seed: options.seed,
                frequencies: freq
                    .iter()
                    .map(|(t, &f)| FrequencyEntry {
                        outcomes: strings(t),
                        frequency: f,
                    })
                    .collect(),
                max_abs_deviation: dev,
            })
        }
    };

    let final_states = options.final_states.then(|| {
        leaves
            .iter()
            .map(|b| FinalState {
                outcomes: strings(&b.outcomes),
                state: MatrixJson::from_matrix(&b.state.scale_real(1.0 / b.probability)),
            })
            .collect()
    });

    Ok(Report {
        joint: joint
            .iter()
            .map(|(t, p)| JointEntry {
                outcomes: strings(t),
                probability: p,
            })
            .collect(),
        marginals,
        diagnostics: Diagnostics {
            pruned_branches: joint.pruned(),
            total_probability: joint.total(),
            instruments,
        },
        samples,
        final_states,
    })
}

pub fn run_scenario_file(path: &Path, options: &RunOptions) -> Result<Report> {
    run_scenario(&load_scenario(path)?, options)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqsim::format::parse_scenario;
    use crate::seqsim::generalized_wigner_joint;

    const CNOT_THEN_Z: &str = r#"{
      "dim": 2,
      "initial_state": [[0.5, 0.5], [0.5, 0.5]],
      "hamiltonian": [[0, 0], [0, 0]],
      "steps": [
        {"time": 1, "instrument": {"indirect_model": {
          "system_dim": 2, "probe_dim": 2,
          "probe_state": [[1, 0], [0, 0]],
          "coupling": [[1,0,0,0],[0,1,0,0],[0,0,0,1],[0,0,1,0]],
          "meter": [[1, 0], [0, -1]]}}},
        {"time": 2, "instrument": {"luders_of": [[1, 0], [0, -1]]}}
      ]
    }"#;

    #[test]
    fn cnot_then_luders_report() {
        let sc = parse_scenario(CNOT_THEN_Z).unwrap();
        let report = run_scenario(&sc, &RunOptions::default()).unwrap();
        let exact = generalized_wigner_joint(&sc).unwrap();
        assert_eq!(report.joint.len(), exact.len());
        for e in &report.joint {
            let t: Vec<Outcome> = e.outcomes.iter().map(|s| s.parse().unwrap()).collect();
            assert_eq!(e.probability, exact.raw(&t));
        }
        let as_pairs: Vec<(Vec<&str>, f64)> = report
            .joint
            .iter()
            .map(|e| (e.outcomes.iter().map(String::as_str).collect(), e.probability))
            .collect();
        assert_eq!(as_pairs.len(), 2);
        assert_eq!(as_pairs[0].0, vec!["-1", "-1"]);
        assert_eq!(as_pairs[1].0, vec!["1", "1"]);
        for (_, p) in &as_pairs {
            assert!((p - 0.5).abs() < 1e-12);
        }
        assert_eq!(report.diagnostics.pruned_branches, 2);
        assert!(report.diagnostics.instruments.iter().all(|d| d.completely_positive));
        assert!(report.samples.is_none() && report.final_states.is_none());
    }

    #[test]
    fn samples_and_final_states_are_optional() {
        let sc = parse_scenario(CNOT_THEN_Z).unwrap();
        let opts = RunOptions {
            samples: Some(4000),
            seed: 3,
            final_states: true,
        };
        let a = run_scenario(&sc, &opts).unwrap();
        let b = run_scenario(&sc, &opts).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        let s = a.samples.as_ref().unwrap();
        assert_eq!(s.n, 4000);
        assert!(s.max_abs_deviation < 0.05);
        assert_eq!(a.final_states.as_ref().unwrap().len(), 2);
    }
}
