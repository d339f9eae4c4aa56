use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use offload_tuner::classify::ProbeConfig;
use offload_tuner::pipeline::{self, PipelineError, ToolConfig, DEFAULT_ATOL, DEFAULT_RTOL};

#[derive(Parser)]
#[command(name = "tuner", version, about = "Search OpenACC offload patterns for C loop statements")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse sources and write their loop and variable description.
    Analyze {
        files: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decide which loops accept a compute directive.
    Classify {
        #[arg(long)]
        model: PathBuf,
        /// `static`, or a shell command with `{src}` and `{workdir}`.
        #[arg(long, default_value = "static")]
        probe: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the search and write a report directory.
    Tune {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the best variant of a report.
    EmitBest {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare two whitespace-separated output streams.
    Verify {
        #[arg(long)]
        baseline: PathBuf,
        #[arg(long)]
        tuned: PathBuf,
        #[arg(long, default_value_t = DEFAULT_ATOL)]
        atol: f64,
        #[arg(long, default_value_t = DEFAULT_RTOL)]
        rtol: f64,
        /// Also write the full comparison as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

const VERIFY_FAILED: u8 = 3;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn write(path: &Path, text: &str) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| PipelineError::Environment(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, text).map_err(|e| PipelineError::Environment(format!("{}: {e}", path.display())))
}

fn run(cmd: Cmd) -> Result<u8, PipelineError> {
    match cmd {
        Cmd::Analyze { files, out } => {
            if files.is_empty() {
                return Err(PipelineError::User("no input files".into()));
            }
            let desc = pipeline::analyze(&files)?;
            let loops: usize = desc.files.iter().map(|f| f.loops.len()).sum();
            write(&out, &(desc.to_json() + "\n"))?;
            println!("{} files, {loops} loops -> {}", desc.files.len(), out.display());
        }
        Cmd::Classify { model, probe, out } => {
            let program = pipeline::load_description(&model)?;
            let verdicts = pipeline::classify(&program, &ProbeConfig::parse(&probe))?;
            write(&out, &(verdicts.to_json() + "\n"))?;
            println!(
                "{} of {} loops eligible -> {}",
                verdicts.gene_len(),
                verdicts.verdicts.len(),
                out.display()
            );
        }
        Cmd::Tune { config, out } => {
            let cfg = ToolConfig::load(&config)?;
            let report = pipeline::run_pipeline(&cfg)?;
            report.write(&out)?;
            println!("status: {}", report.status);
            println!("baseline: {:.6} s", report.baseline_time_s);
            println!("best: {} {:.6} s", report.best_genome, report.best_time_s);
            println!("improvement: {:.3}x", report.improvement_ratio);
            if let pipeline::Verification::Compared(d) = &report.verification {
                println!(
                    "verification: {} (max abs {:.3e}, max rel {:.3e}, atol {:e}, rtol {:e})",
                    if d.pass { "pass" } else { "FAIL" },
                    d.max_abs_err,
                    d.max_rel_err,
                    d.atol,
                    d.rtol
                );
            }
            if !report.verification_passed() {
                return Ok(VERIFY_FAILED);
            }
        }
        Cmd::EmitBest { report, out } => {
            let variant = pipeline::emit_best(&report)?;
            let paths = pipeline::write_variant(&variant, &out)?;
            for p in paths {
                println!("{}", p.display());
            }
        }
        Cmd::Verify {
            baseline,
            tuned,
            atol,
            rtol,
            out,
        } => {
            let read = |p: &Path| std::fs::read(p).map_err(|e| PipelineError::User(format!("{}: {e}", p.display())));
            let diff = pipeline::verify_bytes(&read(&baseline)?, &read(&tuned)?, atol, rtol)
                .map_err(|e| PipelineError::User(e.to_string()))?;
            if let Some(out) = out {
                write(&out, &(serde_json::to_string_pretty(&diff).expect("diff serializes") + "\n"))?;
            }
            println!(
                "{}: {} values compared, max abs {:.3e}, max rel {:.3e} (atol {:e}, rtol {:e})",
                if diff.pass { "pass" } else { "FAIL" },
                diff.compared,
                diff.max_abs_err,
                diff.max_rel_err,
                atol,
                rtol
            );
            if let Some(d) = &diff.diagnostic {
                println!("{d}");
            }
            for m in diff.mismatches.iter().take(10) {
                println!("  [{}] {} vs {}", m.index, m.baseline, m.tuned);
            }
            if !diff.pass {
                return Ok(VERIFY_FAILED);
            }
        }
    }
    Ok(0)
}
