//! `qinstrument`: run measurement-sequence scenarios and inspect instruments.
//!
//! Exit codes: 0 success, 1 validation failure, 2 parse failure (malformed
//! JSON, schema violations, unreadable files, bad arguments).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qinstrument::dilation::{model_instrument, realize};
use qinstrument::instrument::{
    check_dl_family, choi_matrix, is_completely_positive, kraus_from_choi, randomized_cp_check, Instrument,
    RawSuperoperator, DEFAULT_CP_TRIALS,
};
use qinstrument::seqsim::format::{
    parse_instrument_doc, parse_model, read_text, to_pretty, write_text, InstrumentDoc, InstrumentJson, ModelJson,
};
use qinstrument::seqsim::report::{run_scenario_file, RunOptions, CP_TOL};
use qinstrument::{Error, Outcome};

/// Positivity probes beyond the structured ones in the DL check.
const DL_SAMPLES: usize = 256;
const CHECK_SEED: u64 = 0x5eed;

#[derive(Parser, Debug)]
#[command(name = "qinstrument", version, about = "Quantum instruments, dilations and sequential measurement statistics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compute the exact joint distribution of a scenario.
    Run {
        scenario: PathBuf,
        /// Also draw this many Monte Carlo trajectories.
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Include the normalized state left by each outcome branch.
        #[arg(long)]
        final_states: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Report Davies-Lewis and complete-positivity verdicts for an instrument.
    Check { instrument: PathBuf },
    /// Build an indirect measurement model realizing an instrument.
    Dilate {
        instrument: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recover the instrument of an indirect measurement model.
    Undilate {
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    Error(Error),
    /// Input parsed and was checked, but is not a valid CP instrument.
    Rejected,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

fn maps_of(ins: &Instrument) -> BTreeMap<Outcome, RawSuperoperator> {
    ins.operations().iter().map(|(&x, op)| (x, op.to_superoperator())).collect()
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Error> {
    match out {
        Some(p) => write_text(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn check(path: &Path) -> Result<(), Failure> {
    let (kind, maps) = match parse_instrument_doc(&read_text(path)?)? {
        InstrumentDoc::Instrument(ins) => ("Kraus instrument", maps_of(&ins)),
        InstrumentDoc::Maps(m) => ("raw maps", m),
    };
    let dim = maps.values().next().map_or(0, qinstrument::instrument::LinearMap::dim);
    println!("{kind}: dimension {dim}, {} outcome(s)", maps.len());

    let dl = check_dl_family(&maps, DL_SAMPLES, CHECK_SEED)?;
    println!(
        "davies-lewis: positive={} (min eigenvalue {:.3e}), trace-preserving={} (defect {:.3e}) -> {}",
        dl.positive,
        dl.positivity_min_eigenvalue,
        dl.trace_preserving,
        dl.unity_defect,
        if dl.is_dl_instrument() { "DL instrument" } else { "not a DL instrument" }
    );

    let mut all_cp = true;
    for (x, s) in &maps {
        let cert = is_completely_positive(s, CP_TOL);
        let bil = randomized_cp_check(s, DEFAULT_CP_TRIALS, CHECK_SEED, CP_TOL);
        all_cp &= cert.completely_positive;
        println!(
            "outcome {x}: choi min eigenvalue {:.6e} -> {}; bilinear check over {} sequences: min relative value {:.3e} -> {}",
            cert.choi_min_eigenvalue,
            if cert.completely_positive { "CP" } else { "not CP" },
            bil.trials,
            bil.min_relative_value,
            if bil.completely_positive { "no witness" } else { "witness found" }
        );
        if let Some(w) = &cert.witness {
            println!("  choi witness: {} pairs (xi_i, rho_i = |0><i|), form value {:.6e}", w.vectors.len(), w.value);
            for (i, v) in w.vectors.iter().enumerate() {
                let entries: Vec<String> = v.iter().map(|z| format!("{:.6}{:+.6}i", z.re, z.im)).collect();
                println!("    xi_{i} = [{}]", entries.join(", "));
            }
        }
        if let Some(w) = &bil.witness {
            println!("  bilinear witness: length {}, form value {:.6e}", w.vectors.len(), w.value);
        }
    }
    let ok = dl.is_dl_instrument() && all_cp;
    println!("verdict: {}", if ok { "valid CP instrument" } else { "not a valid CP instrument" });
    if ok {
        Ok(())
    } else {
        Err(Failure::Rejected)
    }
}

fn to_instrument(doc: InstrumentDoc) -> Result<Instrument, Failure> {
    match doc {
        InstrumentDoc::Instrument(ins) => Ok(ins),
        InstrumentDoc::Maps(maps) => {
            let mut ops = BTreeMap::new();
            for (x, s) in maps {
                let choi = choi_matrix(&s);
                if !is_completely_positive(&s, CP_TOL).completely_positive {
                    eprintln!("error: outcome {x} is not completely positive; no dilation exists");
                    return Err(Failure::Rejected);
                }
                ops.insert(x, kraus_from_choi(&choi, CP_TOL)?);
            }
            Ok(Instrument::new(ops)?)
        }
    }
}

fn execute(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Run {
            scenario,
            samples,
            seed,
            final_states,
            out,
        } => {
            let report = run_scenario_file(
                &scenario,
                &RunOptions {
                    samples,
                    seed,
                    final_states,
                },
            )?;
            emit(out.as_deref(), &report.to_json())?;
        }
        Command::Check { instrument } => check(&instrument)?,
        Command::Dilate { instrument, out } => {
            let ins = to_instrument(parse_instrument_doc(&read_text(&instrument)?)?)?;
            let model = realize(&ins)?;
            write_text(&out, &to_pretty(&ModelJson::from_model(&model)))?;
        }
        Command::Undilate { model, out } => {
            let m = parse_model(&read_text(&model)?)?;
            let ins = model_instrument(&m)?;
            write_text(&out, &to_pretty(&InstrumentJson::from_instrument(&ins)))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Rejected) => ExitCode::from(1),
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_parse_failure() { 2 } else { 1 })
        }
    }
}
