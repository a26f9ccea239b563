use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use qseal::acceptance::{run_all, Scale};
use qseal::infotheory::{strategy_mutual_info, strategy_mutual_info_mc};
use qseal::simnet::{run_alice, run_bob, run_eve_proxy, SessionAbort};
use qseal::{
    read_transcript, run_session, write_transcript, EnumerationCaps, ExactRoute, ExposureSearch, ResultEvidence,
    SearchBudget, SearchFamily, SessionTranscript, Sig12, Strategy, Threshold,
};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{Mode, NetRole, RawConfig, RunConfig};
use crate::error::CliError;
use crate::{ExposureArgs, MethodArg, MiArgs, RunArgs, SelftestArgs};

const DEFAULT_TRANSCRIPT: &str = "transcript.jsonl";
const DEFAULT_DELTA: f64 = 0.1;

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

/// Opens `path` for writing, or stdout when absent.
fn output(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(io::stdout().lock()),
    })
}

fn run_config(args: &RunArgs) -> Result<RunConfig, CliError> {
    let mut raw = match &args.config {
        Some(path) => RawConfig::load(path)?,
        None => RawConfig::default(),
    };
    for (key, value) in [
        ("p_a", &args.p_a),
        ("c_m", &args.c_m),
        ("n", &args.n),
        ("seed", &args.seed),
        ("strategy", &args.strategy),
        ("loss", &args.loss),
        ("mode", &args.mode),
        ("role", &args.role),
        ("endpoint", &args.endpoint),
        ("upstream", &args.upstream),
        ("bit", &args.bit),
        ("out", &args.out),
    ] {
        raw.set(key, value.as_deref());
    }
    RunConfig::from_raw(&raw)
}

pub fn run(args: &RunArgs) -> Result<(), CliError> {
    let config = run_config(args)?;
    let transcript_path = config.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_TRANSCRIPT));
    let outcome = match config.mode {
        Mode::Local => Ok(run_session(&config.session_params()?, &config.strategy)?),
        Mode::Network => match config.role {
            None => return Err(CliError::config("role", "missing; network mode needs --role")),
            Some(NetRole::Bob) => {
                if config.strategy != Strategy::Passive {
                    return Err(CliError::config("strategy", "the eavesdropper runs as --role eve-proxy, not inside bob"));
                }
                run_bob(config.require_endpoint()?, &config.session_params()?)
            }
            Some(NetRole::Alice) => run_alice(config.require_endpoint()?, config.bit),
            Some(NetRole::EveProxy) => {
                let upstream = config.upstream.as_deref().ok_or_else(|| CliError::config("upstream", "missing; eve-proxy needs --upstream"))?;
                let stats = run_eve_proxy(config.require_endpoint()?, upstream, &config.strategy)?;
                println!("strategy={}", config.strategy);
                println!("frames_relayed={}", stats.frames_relayed);
                println!("qubits_intercepted={}", stats.qubits_intercepted);
                return Ok(());
            }
        },
    };
    match outcome {
        Ok(transcript) => {
            save_transcript(&transcript, &transcript_path)?;
            print_summary(&transcript, &transcript_path, args.summary.as_deref())
        }
        Err(SessionAbort { error, partial }) => {
            if let Some(t) = partial {
                save_transcript(&t, &transcript_path)?;
                eprintln!("partial transcript written to {}", transcript_path.display());
            }
            Err(CliError::Aborted(error))
        }
    }
}

fn save_transcript(t: &SessionTranscript, path: &Path) -> Result<(), CliError> {
    let mut w = create(path)?;
    write_transcript(t, &mut w)?;
    Ok(())
}

fn print_summary(t: &SessionTranscript, transcript_path: &Path, summary_path: Option<&Path>) -> Result<(), CliError> {
    let text = format!("{}\ntranscript={}\n", t.summary(), transcript_path.display());
    print!("{text}");
    if let Some(path) = summary_path {
        std::fs::write(path, &text).map_err(|e| CliError::io(path, e))?;
    }
    Ok(())
}

/// Parses `3`, `1,2,5` or `1..=6` / `1..7`.
fn parse_counts(s: &str) -> Result<Vec<usize>, CliError> {
    let bad = |e: std::num::ParseIntError| CliError::config("n", format!("{s:?}: {e}"));
    let list: Vec<usize> = if let Some((lo, hi)) = s.split_once("..=") {
        (lo.trim().parse().map_err(bad)?..=hi.trim().parse().map_err(bad)?).collect()
    } else if let Some((lo, hi)) = s.split_once("..") {
        (lo.trim().parse().map_err(bad)?..hi.trim().parse().map_err(bad)?).collect()
    } else {
        s.split(',').map(|v| v.trim().parse().map_err(bad)).collect::<Result<_, _>>()?
    };
    if list.is_empty() || list.contains(&0) {
        return Err(CliError::config("n", format!("{s:?} must list positive shot counts")));
    }
    Ok(list)
}

fn parse_probabilities(s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(|v| match v.trim().parse::<f64>() {
            Ok(p) if (0.0..=1.0).contains(&p) => Ok(p),
            Ok(p) => Err(CliError::config("p_a", format!("must lie in [0, 1], got {p}"))),
            Err(e) => Err(CliError::config("p_a", format!("{v:?}: {e}"))),
        })
        .collect()
}

/// CSV columns: N,p_a,method,value_bits,stderr.
pub fn mi(args: &MiArgs) -> Result<(), CliError> {
    let strategy: Strategy = args.strategy.parse().map_err(|e| CliError::config("strategy", e))?;
    strategy.validate().map_err(|e| CliError::config("strategy", e))?;
    let counts = parse_counts(&args.n)?;
    let probabilities = parse_probabilities(&args.p_a)?;
    let caps = EnumerationCaps::default();

    let mut rows = Vec::new();
    let mut stream = 0u64;
    for &n in &counts {
        for &p_a in &probabilities {
            for &method in &args.method {
                let result = match method {
                    MethodArg::Direct => strategy_mutual_info(&strategy, n, p_a, ExactRoute::Direct, &caps)?,
                    MethodArg::Factored => strategy_mutual_info(&strategy, n, p_a, ExactRoute::Factored, &caps)?,
                    MethodArg::Mc => {
                        let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
                        rng.set_stream(stream);
                        stream += 1;
                        strategy_mutual_info_mc(&strategy, n, p_a, args.samples, &mut rng)?
                    }
                };
                rows.push(format!(
                    "{n},{},{},{},{}",
                    Sig12(p_a),
                    result.method.name(),
                    Sig12(result.value),
                    Sig12(result.method.stderr())
                ));
            }
        }
    }
    let mut out = output(args.out.as_deref())?;
    let path = args.out.as_deref().unwrap_or(Path::new("stdout"));
    let io_err = |e| CliError::io(path, e);
    writeln!(out, "N,p_a,method,value_bits,stderr").map_err(io_err)?;
    for row in rows {
        writeln!(out, "{row}").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

pub fn exposure(args: &ExposureArgs) -> Result<(), CliError> {
    let file = File::open(&args.transcript).map_err(|e| CliError::io(&args.transcript, e))?;
    let transcript = read_transcript(BufReader::new(file))?;
    if !transcript.complete {
        eprintln!("warning: {} is a partial transcript", args.transcript.display());
    }
    let threshold = match (args.epsilon, args.delta) {
        (Some(e), _) => Threshold::Absolute(e),
        (None, d) => Threshold::Relative(d.unwrap_or(DEFAULT_DELTA)),
    };
    let family: SearchFamily = args.family.parse().map_err(|e| CliError::config("family", e))?;
    let defaults = SearchBudget::default();
    let budget = SearchBudget {
        steps: args.budget.unwrap_or(defaults.steps),
        restarts: args.restarts.unwrap_or(defaults.restarts),
        seed: args.seed,
        ..defaults
    };
    let evidence = ResultEvidence::from_records(&transcript.records)?;
    let report = ExposureSearch::new(threshold).family(family).budget(budget).run(&evidence, transcript.params.p_a)?;

    let mut out = output(args.out.as_deref())?;
    let path = args.out.as_deref().unwrap_or(Path::new("stdout"));
    writeln!(out, "transcript={}\n{report}", args.transcript.display()).map_err(|e| CliError::io(path, e))?;
    out.flush().map_err(|e| CliError::io(path, e))
}

pub fn selftest(args: &SelftestArgs) -> Result<(), CliError> {
    let scale = if args.full { Scale::Full } else { Scale::Desk };
    let results = run_all(scale);
    for r in &results {
        let status = if r.passed { "PASS" } else { "FAIL" };
        print!("[{status}] {:>2} {}: {}", r.id, r.name, r.detail);
        if args.timings {
            print!(" ({:.2}s)", r.elapsed.as_secs_f64());
        }
        println!();
    }
    let passed = results.iter().filter(|r| r.passed).count();
    println!("selftest: {passed} passed, {} failed", results.len() - passed);
    if passed == results.len() {
        Ok(())
    } else {
        Err(CliError::SelftestFailed { passed, total: results.len() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn count_lists() {
        assert_eq!(parse_counts("4").unwrap(), vec![4]);
        assert_eq!(parse_counts("1, 3,5").unwrap(), vec![1, 3, 5]);
        assert_eq!(parse_counts("2..=4").unwrap(), vec![2, 3, 4]);
        assert_eq!(parse_counts("2..4").unwrap(), vec![2, 3]);
        assert!(parse_counts("0,1").is_err());
        assert!(parse_counts("3..3").is_err());
        assert!(parse_probabilities("0.1,1.2").is_err());
    }
}
