use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nodalflow::cli::{audit_summary, emit_outputs, load_config, prepare_output, run, SUMMARY_FILE};

/// Sign-changing and semi-nodal solutions of coupled cubic Schrödinger
/// systems.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    /// Worker threads for the seed campaign (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory, overriding `output.dir`.
    #[arg(long, global = true, value_name = "DIR")]
    output: Option<PathBuf>,
    /// Write one CSV field file per solution.
    #[arg(long, global = true)]
    emit_fields: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the campaign described by a configuration file.
    Solve { config: PathBuf },
    /// Validate a configuration file without running it.
    Check { config: PathBuf },
    /// Re-verify a summary and its field files.
    Audit { summary: PathBuf },
}

fn solve(cli: &Cli, path: &Path) -> u8 {
    let mut cfg = match load_config(path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return 2;
        }
    };
    if let Some(dir) = &cli.output {
        cfg.output.dir = dir.clone();
    }
    cfg.output.emit_fields |= cli.emit_fields;
    if let Err(e) = prepare_output(&cfg.output.dir) {
        eprintln!("{e}");
        return 2;
    }
    let out = match run(&cfg) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("{e}");
            return 2;
        }
    };
    for r in &out.report.records {
        let class = r.classification.map_or("-", |c| c.as_str());
        let energy = r.energy.map_or("-".to_string(), |e| format!("{e:.10}"));
        let status = match (&r.error, r.converged) {
            (Some(e), _) => format!("error: {e}"),
            (None, true) => "converged".to_string(),
            (None, false) => format!("not converged ({:?})", r.stop_reason),
        };
        println!("{:<12} {:<14} steps {:>5}  E = {:<18} {}{}", r.seed_id, class, r.steps, energy, status, if r.retained { "" } else { "  [dropped]" });
    }
    let s = &out.report.summary;
    for (class, n) in &s.counts {
        let least = &s.least_energy[class];
        println!("{}: {n} distinct, least energy {:.10} ({})", class.as_str(), least.energy, least.seed_id);
    }
    for class in &s.missing {
        println!("{}: not found", class.as_str());
    }
    if !out.report.audit.passed {
        println!("invariant audit FAILED");
    }
    match emit_outputs(&out, &cfg.output.dir) {
        Ok(_) => println!("wrote {}", cfg.output.dir.join(SUMMARY_FILE).display()),
        Err(e) => {
            eprintln!("{e}");
            return 2;
        }
    }
    out.report.exit_code as u8
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("cannot configure {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let code = match &cli.command {
        Command::Solve { config } => solve(&cli, config),
        Command::Check { config } => match load_config(config) {
            Ok(cfg) => {
                println!("{}: ok ({} seeds)", config.display(), cfg.seed_specs().map_or(0, |s| s.len()));
                0
            }
            Err(e) => {
                eprintln!("{e}");
                2
            }
        },
        Command::Audit { summary } => match audit_summary(summary) {
            Ok(a) => {
                for c in &a.checked {
                    println!("checked {c}");
                }
                for f in &a.failures {
                    println!("FAIL {f}");
                }
                a.exit_code() as u8
            }
            Err(e) => {
                eprintln!("{e}");
                2
            }
        },
    };
    ExitCode::from(code)
}
