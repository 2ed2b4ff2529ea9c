use clap::{Args, Parser, Subcommand};
use nlinv::checker::{CheckerError, InferStatus};
use nlinv::pipeline::{self, Ablation};
use nlinv::{Error, RunConfig};
use std::path::PathBuf;
use std::process::ExitCode;

/// Nonlinear loop invariant inference from program traces.
#[derive(Parser)]
#[command(name = "nlinv", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// TOML configuration file (defaults cover the reference settings).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Monomial degree bound (default: derived from the program).
    #[arg(long)]
    max_deg: Option<u32>,
    /// Initial term-dropout probability.
    #[arg(long)]
    dropout: Option<f64>,
    /// Base RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Solver command line (default: auto-discover z3 or the z3-wasm shim).
    #[arg(long)]
    solver: Option<String>,
    /// Fractional-sampling grid step override.
    #[arg(long)]
    frac_step: Option<f64>,
    /// Solver timeout per condition, in seconds.
    #[arg(long)]
    timeout: Option<u64>,
    /// Emit JSON instead of human-readable output.
    #[arg(long)]
    json: bool,
}

impl CommonOpts {
    fn build_config(&self) -> Result<RunConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_toml_file(path)?,
            None => RunConfig::default(),
        };
        if let Some(d) = self.max_deg {
            cfg.max_deg = Some(d);
        }
        if let Some(p) = self.dropout {
            cfg.dropout = p;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(sol) = &self.solver {
            cfg.solver = Some(sol.clone());
        }
        if let Some(step) = self.frac_step {
            cfg.frac.steps = vec![step];
        }
        if let Some(t) = self.timeout {
            cfg.solver_timeout_secs = t;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Infer and verify a loop invariant for a program.
    Infer {
        /// Program file (`.loop`).
        file: PathBuf,
        /// Only generate and print the trace CSV; no training.
        #[arg(long)]
        trace_only: bool,
        /// Write the result (or CSV) to a file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Execute a program and dump its traces as CSV.
    Trace {
        file: PathBuf,
        #[arg(long)]
        max_iters: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Run inference over every `.loop` file in a directory.
    Bench {
        dir: PathBuf,
        /// Disable one component: normalization, weight-reg, dropout, or
        /// frac-sampling.
        #[arg(long)]
        ablate: Option<String>,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Convergence rate over repeated seeded runs (single attempt each).
    Stability {
        file: PathBuf,
        #[arg(long, default_value_t = 20)]
        runs: usize,
        /// Also run the ungated baseline (gates frozen at 1) on the same
        /// seeds.
        #[arg(long)]
        baseline: bool,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Verify a user-supplied invariant against a program.
    Check {
        file: PathBuf,
        /// Invariant in annotation syntax, e.g. "t == 2*a + 1 && a^2 <= n".
        #[arg(long)]
        invariant: String,
        #[command(flatten)]
        common: CommonOpts,
    },
}

fn write_out(out: &Option<PathBuf>, text: &str) -> Result<(), Error> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::Checker(CheckerError::SolverUnavailable) => 3,
        _ => 1,
    }
}

fn run() -> Result<u8, Error> {
    let cli = Cli::parse();
    match cli.command {
        Cmd::Infer {
            file,
            trace_only,
            out,
            common,
        } => {
            let cfg = common.build_config()?;
            if trace_only {
                let csv = pipeline::trace_csv(&file, &cfg)?;
                write_out(&out, &csv)?;
                return Ok(0);
            }
            let result = pipeline::infer(&file, &cfg)?;
            let text = if common.json {
                result.to_json()
            } else {
                let mut s = format!("problem:   {}\nstatus:    {:?}\n", result.problem, result.status);
                if let Some(inv) = &result.invariant {
                    s.push_str(&format!("invariant: {inv}\n"));
                }
                if let Some(st) = &result.solver_statuses {
                    s.push_str(&format!(
                        "checks:    initiation={} consecution={} sufficiency={}\n",
                        st[0], st[1], st[2]
                    ));
                }
                s.push_str(&format!(
                    "rounds:    {}\nwall:      {:.1}s\n",
                    result.rounds,
                    *result.timings_ms.get("total").unwrap_or(&0) as f64 / 1000.0
                ));
                s
            };
            write_out(&out, &text)?;
            Ok(match result.status {
                InferStatus::Valid | InferStatus::ValidModuloGcd => 0,
                InferStatus::NotFound => 2,
            })
        }
        Cmd::Trace {
            file,
            max_iters,
            out,
            common,
        } => {
            let mut cfg = common.build_config()?;
            if let Some(n) = max_iters {
                cfg.sampling.max_iters = n;
            }
            let csv = pipeline::trace_csv(&file, &cfg)?;
            write_out(&out, &csv)?;
            Ok(0)
        }
        Cmd::Bench {
            dir,
            ablate,
            common,
        } => {
            let cfg = common.build_config()?;
            let ablation = match ablate.as_deref() {
                None => None,
                Some(name) => Some(Ablation::parse(name).ok_or_else(|| {
                    Error::Other(format!("unknown ablation component `{name}`"))
                })?),
            };
            let report = pipeline::bench(&dir, &cfg, ablation)?;
            if common.json {
                println!("{}", serde_json::to_string_pretty(&report).unwrap());
            } else {
                print!("{}", report.render());
            }
            Ok(0)
        }
        Cmd::Stability {
            file,
            runs,
            baseline,
            common,
        } => {
            let cfg = common.build_config()?;
            let report = pipeline::stability(&file, runs, &cfg, baseline)?;
            if common.json {
                println!("{}", serde_json::to_string_pretty(&report).unwrap());
            } else {
                println!(
                    "{}: {}/{} runs converged (rate {:.2})",
                    report.problem,
                    report.per_seed.iter().filter(|(_, ok)| *ok).count(),
                    report.runs,
                    report.rate
                );
                if let Some(rate) = report.baseline_rate {
                    println!("ungated baseline rate: {rate:.2}");
                }
            }
            Ok(0)
        }
        Cmd::Check {
            file,
            invariant,
            common,
        } => {
            let cfg = common.build_config()?;
            let result = pipeline::check_file(&file, &invariant, &cfg)?;
            if common.json {
                println!("{}", serde_json::to_string_pretty(&result).unwrap());
            } else {
                println!("invariant: {}", result.invariant);
                println!(
                    "initiation={} consecution={} sufficiency={}",
                    result.statuses[0], result.statuses[1], result.statuses[2]
                );
                println!(
                    "verdict: {}",
                    if result.valid {
                        "valid"
                    } else if result.valid_modulo_gcd {
                        "valid-modulo-gcd"
                    } else {
                        "not valid"
                    }
                );
            }
            Ok(if result.valid || result.valid_modulo_gcd {
                0
            } else {
                2
            })
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
