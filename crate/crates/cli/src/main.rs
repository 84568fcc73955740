//! `shiftbp` command line: analyze a law, construct fixed-point candidates and
//! families, run Monte Carlo extinction estimates, and run the property suite.
//!
//! Exit codes are part of the contract: 0 success, 1 verify-suite failure,
//! 2 validation (bad documents, bad flags, stale hashes), 3 regime (the law is
//! not supercritical where the command needs it), 4 no convergence (a candidate
//! was still written, flagged).

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use shiftbp::construct::{
    CandidateDocument, ConstructError, ConstructParams, Direction, Supercritical,
};
use shiftbp::genfun;
use shiftbp::law::{check_assumptions, load_law_file, moments, OffspringLaw};
use shiftbp::roots;
use shiftbp::simulate::{self, SimConfig, TypesetSpec};
use shiftbp::verify;

const EXIT_VERIFY_FAILED: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_REGIME: u8 = 3;
const EXIT_NO_CONVERGENCE: u8 = 4;

#[derive(Parser)]
#[command(
    name = "shiftbp",
    version,
    about = "Branching random walks with shift-invariant reproduction: extinction probabilities, decay rates, generating-operator fixed points, Monte Carlo estimates"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum DirectionArg {
    Prepend,
    ShiftLeft,
}

impl From<DirectionArg> for Direction {
    fn from(d: DirectionArg) -> Direction {
        match d {
            DirectionArg::Prepend => Direction::Prepend,
            DirectionArg::ShiftLeft => Direction::ShiftLeft,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Moments, assumption report, regime, q, gamma, and the extinction-vector set
    Analyze { law: PathBuf },
    /// Construct a fixed-point candidate and write its document
    Fixpoint {
        law: PathBuf,
        /// Truncation horizon for the candidate head
        #[arg(long)]
        truncate: Option<usize>,
        /// Seed amplitude in (0, 1 - q); defaults to half the survival probability
        #[arg(long = "seed-amplitude")]
        seed_amplitude: Option<f64>,
        /// Cauchy tolerance for successive crossing vectors
        #[arg(long = "conv-tol", default_value_t = shiftbp::construct::DEFAULT_CONV_TOL)]
        conv_tol: f64,
        /// Write the candidate document here instead of embedding it in the report
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write per-coordinate diagnostics as CSV
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Derive an ordered family of fixed points from a converged candidate
    Family {
        law: PathBuf,
        candidate: PathBuf,
        #[arg(long, default_value_t = 5)]
        count: usize,
        #[arg(long, value_enum, default_value_t = DirectionArg::Prepend)]
        direction: DirectionArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo extinction estimate for a typeset
    Simulate {
        law: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// global | finite:LO..HI | mod:RESIDUE,MODULUS
        #[arg(long, default_value = "global", value_parser = parse_typeset)]
        typeset: TypesetSpec,
        #[arg(long = "max-gen", default_value_t = 500)]
        max_gen: u32,
        #[arg(long = "max-pop", default_value_t = 1_000_000)]
        max_pop: u64,
        #[arg(long = "initial-type", default_value_t = 1)]
        initial_type: usize,
    },
    /// Run the bundled property suite against a law
    Verify {
        law: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn parse_typeset(s: &str) -> Result<TypesetSpec, String> {
    if s == "global" {
        return Ok(TypesetSpec::Global);
    }
    if let Some(range) = s.strip_prefix("finite:") {
        let (lo, hi) = range
            .split_once("..")
            .ok_or_else(|| format!("expected finite:LO..HI, got {s}"))?;
        let lo: usize = lo
            .trim()
            .parse()
            .map_err(|e| format!("bad range start: {e}"))?;
        let hi: usize = hi
            .trim()
            .parse()
            .map_err(|e| format!("bad range end: {e}"))?;
        if lo == 0 || hi < lo {
            return Err(format!("range {lo}..{hi} must satisfy 1 <= lo <= hi"));
        }
        return Ok(TypesetSpec::FiniteRange { lo, hi });
    }
    if let Some(pair) = s.strip_prefix("mod:") {
        let (r, m) = pair
            .split_once(',')
            .ok_or_else(|| format!("expected mod:RESIDUE,MODULUS, got {s}"))?;
        let residue: usize = r.trim().parse().map_err(|e| format!("bad residue: {e}"))?;
        let modulus: usize = m.trim().parse().map_err(|e| format!("bad modulus: {e}"))?;
        if modulus == 0 || residue >= modulus {
            return Err(format!(
                "need residue < modulus >= 1, got {residue},{modulus}"
            ));
        }
        return Ok(TypesetSpec::Arithmetic { residue, modulus });
    }
    Err(format!(
        "unknown typeset {s} (global | finite:LO..HI | mod:R,M)"
    ))
}

fn configure_threads() {
    #[cfg(feature = "parallel")]
    if let Ok(v) = std::env::var("SHIFTBP_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n >= 1 => {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global();
            }
            _ => eprintln!("ignoring SHIFTBP_THREADS={v}: expected a positive integer"),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_threads();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn validation(message: impl Into<String>) -> Failure {
        Failure {
            code: EXIT_VALIDATION,
            message: message.into(),
        }
    }
}

impl From<shiftbp::law::LawError> for Failure {
    fn from(e: shiftbp::law::LawError) -> Failure {
        Failure::validation(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Failure {
        Failure::validation(e.to_string())
    }
}

fn construct_failure(e: ConstructError) -> Failure {
    let code = match e {
        ConstructError::Regime(_) => EXIT_REGIME,
        _ => EXIT_VALIDATION,
    };
    Failure {
        code,
        message: e.to_string(),
    }
}

fn argv() -> Vec<String> {
    std::env::args().collect()
}

fn law_echo(law: &OffspringLaw) -> serde_json::Value {
    json!({ "name": law.name(), "hash": law.content_hash() })
}

fn emit(report: &serde_json::Value) {
    println!(
        "{}",
        serde_json::to_string_pretty(report).expect("report serializes")
    );
}

fn write_or_embed(
    out: &Option<PathBuf>,
    value: &serde_json::Value,
    report: &mut serde_json::Value,
    key: &str,
) -> Result<(), Failure> {
    match out {
        Some(path) => {
            std::fs::write(
                path,
                serde_json::to_string_pretty(value).expect("serializes"),
            )?;
            report[format!("{key}_path")] = json!(path.display().to_string());
        }
        None => {
            report[key] = value.clone();
        }
    }
    Ok(())
}

fn run(command: Command) -> Result<u8, Failure> {
    match command {
        Command::Analyze { law } => cmd_analyze(&law),
        Command::Fixpoint {
            law,
            truncate,
            seed_amplitude,
            conv_tol,
            out,
            csv,
        } => cmd_fixpoint(&law, truncate, seed_amplitude, conv_tol, out, csv),
        Command::Family {
            law,
            candidate,
            count,
            direction,
            out,
        } => cmd_family(&law, &candidate, count, direction.into(), out),
        Command::Simulate {
            law,
            trials,
            seed,
            typeset,
            max_gen,
            max_pop,
            initial_type,
        } => {
            if trials == 0 {
                return Err(Failure::validation("--trials must be at least 1"));
            }
            if initial_type == 0 {
                return Err(Failure::validation(
                    "--initial-type must be at least 1 (types are 1-based)",
                ));
            }
            let config = SimConfig {
                trials,
                seed,
                max_generations: max_gen,
                max_population: max_pop,
                typeset,
                initial_type,
            };
            cmd_simulate(&law, config)
        }
        Command::Verify { law, seed } => cmd_verify(&law, seed),
    }
}

fn cmd_analyze(law_path: &Path) -> Result<u8, Failure> {
    let started = Instant::now();
    let law = load_law_file(law_path)?;
    let summary = moments(&law);
    let report = check_assumptions(&law, &summary);
    let q = roots::solve_q(&summary);
    let gamma = roots::solve_gamma(&summary).ok();

    // The extinction-vector set: both constants for supercritical laws, just
    // the unit vector otherwise (each stands for a constant vector).
    let extinction_set = if summary.is_supercritical() {
        vec![q.value, 1.0]
    } else {
        vec![1.0]
    };

    emit(&json!({
        "command": "analyze",
        "argv": argv(),
        "law": law_echo(&law),
        "max_displacement": law.max_displacement(),
        "displacement_means": summary.mk,
        "total_mean": summary.m,
        "assumptions": check_assumptions(&law, &summary),
        "regime": report.regime,
        "q": q.value,
        "q_residual": q.residual,
        "gamma": gamma.as_ref().map(|g| g.value),
        "gamma_residual": gamma.as_ref().map(|g| g.residual),
        "extinction_set": extinction_set,
        "elapsed_ms": started.elapsed().as_millis() as u64,
    }));
    Ok(0)
}

fn cmd_fixpoint(
    law_path: &Path,
    truncate: Option<usize>,
    seed_amplitude: Option<f64>,
    conv_tol: f64,
    out: Option<PathBuf>,
    csv: Option<PathBuf>,
) -> Result<u8, Failure> {
    let started = Instant::now();
    let law = load_law_file(law_path)?;
    let sc = Supercritical::new(&law).map_err(construct_failure)?;
    if let Some(a) = seed_amplitude {
        if !(a > 0.0 && a < 1.0 - sc.q()) {
            return Err(Failure::validation(format!(
                "--seed-amplitude {a} outside (0, {})",
                1.0 - sc.q()
            )));
        }
    }
    let params = ConstructParams {
        seed_amplitude,
        horizon: truncate,
        conv_tol,
        ..ConstructParams::default()
    };
    let candidate = sc
        .construct_fixed_point(&params)
        .map_err(construct_failure)?;
    let doc = CandidateDocument::from_candidate(&law, &candidate);

    if let Some(csv_path) = &csv {
        let table = genfun::diagnostics_csv(&law, sc.summary(), &candidate.u, 256);
        std::fs::write(csv_path, table)?;
    }

    let mut report = json!({
        "command": "fixpoint",
        "argv": argv(),
        "law": law_echo(&law),
        "q": sc.q(),
        "gamma": sc.gamma(),
        "converged": candidate.converged,
        "sup_residual": candidate.residual_report.sup_window,
        "first_coordinate": candidate.u.coord(1),
        "elapsed_ms": started.elapsed().as_millis() as u64,
    });
    if let Some(csv_path) = &csv {
        report["csv_path"] = json!(csv_path.display().to_string());
    }
    let doc_value = serde_json::to_value(&doc).expect("document serializes");
    write_or_embed(&out, &doc_value, &mut report, "candidate")?;
    emit(&report);
    Ok(if candidate.converged {
        0
    } else {
        EXIT_NO_CONVERGENCE
    })
}

fn cmd_family(
    law_path: &Path,
    candidate_path: &Path,
    count: usize,
    direction: Direction,
    out: Option<PathBuf>,
) -> Result<u8, Failure> {
    let started = Instant::now();
    let law = load_law_file(law_path)?;
    let text = std::fs::read_to_string(candidate_path)?;
    let doc: CandidateDocument =
        serde_json::from_str(&text).map_err(|e| Failure::validation(e.to_string()))?;
    if doc.law_hash != law.content_hash() {
        return Err(Failure::validation(format!(
            "candidate was built for law {} (hash {}), not {} (hash {})",
            doc.law_name,
            doc.law_hash,
            law.name(),
            law.content_hash()
        )));
    }
    let sc = Supercritical::new(&law).map_err(construct_failure)?;
    let u = doc
        .to_uvector()
        .map_err(|e| Failure::validation(e.to_string()))?;
    if u.horizon() <= law.max_displacement() + 1 {
        return Err(Failure::validation(format!(
            "candidate head has {} coordinates; need more than {} for this law",
            u.horizon(),
            law.max_displacement() + 1
        )));
    }
    if u.head().iter().any(|&x| x <= 0.0) {
        return Err(Failure::validation(
            "candidate coordinates must be strictly positive",
        ));
    }
    let base = sc.package(
        u,
        doc.provenance.clone(),
        doc.converged,
        doc.diff_trace.clone(),
    );
    let family = sc
        .family(&base, count, direction)
        .map_err(construct_failure)?;

    let members: Vec<serde_json::Value> = family
        .members
        .iter()
        .map(|m| serde_json::to_value(CandidateDocument::from_candidate(&law, m)).unwrap())
        .collect();
    let family_value = json!({
        "law": law_echo(&law),
        "direction": family.direction,
        "base": doc,
        "members": members,
        "pairwise_ordered": family.pairwise_ordered,
        "all_ordered": family.all_ordered(),
        "compare_width": family.compare_width,
    });

    let mut report = json!({
        "command": "family",
        "argv": argv(),
        "law": law_echo(&law),
        "count": count,
        "all_ordered": family.all_ordered(),
        "first_coordinates": family.members.iter().map(|m| m.u.coord(1)).collect::<Vec<f64>>(),
        "elapsed_ms": started.elapsed().as_millis() as u64,
    });
    write_or_embed(&out, &family_value, &mut report, "family")?;
    emit(&report);
    Ok(0)
}

fn cmd_simulate(law_path: &Path, config: SimConfig) -> Result<u8, Failure> {
    let started = Instant::now();
    let law = load_law_file(law_path)?;
    let estimate = simulate::estimate_extinction(&law, &config);
    emit(&json!({
        "command": "simulate",
        "argv": argv(),
        "law": law_echo(&law),
        "estimate": estimate,
        "elapsed_ms": started.elapsed().as_millis() as u64,
    }));
    Ok(0)
}

fn cmd_verify(law_path: &Path, seed: u64) -> Result<u8, Failure> {
    let started = Instant::now();
    let law = load_law_file(law_path)?;
    let suite = match verify::run_suite(&law, seed) {
        Ok(s) => s,
        Err(refusal) => {
            emit(&json!({
                "command": "verify",
                "argv": argv(),
                "law": law_echo(&law),
                "refused": true,
                "assumptions": refusal.report,
            }));
            return Err(Failure::validation(refusal.to_string()));
        }
    };
    let checks: Vec<serde_json::Value> = suite
        .checks
        .iter()
        .map(|c| json!({ "name": c.name, "status": c.status.as_str(), "detail": c.detail }))
        .collect();
    for c in &suite.checks {
        eprintln!("[{:>7}] {} — {}", c.status.as_str(), c.name, c.detail);
    }
    emit(&json!({
        "command": "verify",
        "argv": argv(),
        "law": law_echo(&law),
        "assumptions": suite.assumptions,
        "checks": checks,
        "passed": suite.passed(),
        "elapsed_ms": started.elapsed().as_millis() as u64,
    }));
    Ok(if suite.passed() {
        0
    } else {
        EXIT_VERIFY_FAILED
    })
}
