use super::CheckerError;
use crate::dsl::Valuation;
use crate::rat::Rat;
use num_bigint::BigInt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

/// External solver invocation: `program args... script.smt2`.
///
/// `batch` marks drivers that accept several script files in one invocation
/// and separate their outputs with `=== nlinv:result <i> ===` markers (the
/// bundled z3-wasm wrapper does; plain z3 does not).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SolverCmd {
    pub program: String,
    pub args: Vec<String>,
    pub batch: bool,
}

impl SolverCmd {
    pub fn from_command_line(line: &str) -> Option<SolverCmd> {
        let mut parts = line.split_whitespace().map(String::from);
        let program = parts.next()?;
        let args: Vec<String> = parts.collect();
        let batch = program.contains("z3smt2")
            || args.iter().any(|a| a.contains("z3smt2"));
        Some(SolverCmd {
            program,
            args,
            batch,
        })
    }

    pub fn display(&self) -> String {
        let mut s = self.program.clone();
        for a in &self.args {
            s.push(' ');
            s.push_str(a);
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SatStatus {
    Sat,
    Unsat,
    Unknown(String),
}

#[derive(Debug, Clone)]
pub struct SolverReply {
    pub status: SatStatus,
    pub model: Option<Valuation>,
    pub elapsed_ms: u128,
}

fn find_in_path(name: &str) -> Option<PathBuf> {
    let path = std::env::var_os("PATH")?;
    for dir in std::env::split_paths(&path) {
        let candidate = dir.join(name);
        if candidate.is_file() {
            return Some(candidate);
        }
    }
    None
}

fn find_wasm_wrapper() -> Option<PathBuf> {
    let mut starts: Vec<PathBuf> = Vec::new();
    if let Ok(cwd) = std::env::current_dir() {
        starts.push(cwd);
    }
    if let Ok(exe) = std::env::current_exe() {
        if let Some(dir) = exe.parent() {
            starts.push(dir.to_path_buf());
        }
    }
    for start in starts {
        let mut dir: Option<&Path> = Some(start.as_path());
        while let Some(d) = dir {
            let candidate = d.join("tools/z3-wasm/z3smt2.cjs");
            if candidate.is_file() {
                return Some(candidate);
            }
            dir = d.parent();
        }
    }
    None
}

/// Resolves the solver: an explicit command line (flag or config), the
/// `NLINV_SOLVER` environment variable, `z3` on PATH, or the bundled
/// z3-wasm wrapper run through node.
pub fn discover_solver(explicit: Option<&str>) -> Result<SolverCmd, CheckerError> {
    if let Some(line) = explicit {
        return SolverCmd::from_command_line(line).ok_or(CheckerError::SolverUnavailable);
    }
    if let Ok(line) = std::env::var("NLINV_SOLVER") {
        if !line.trim().is_empty() {
            return SolverCmd::from_command_line(&line).ok_or(CheckerError::SolverUnavailable);
        }
    }
    if find_in_path("z3").is_some() {
        return Ok(SolverCmd {
            program: "z3".into(),
            args: vec!["-smt2".into()],
            batch: false,
        });
    }
    if let Some(wrapper) = find_wasm_wrapper() {
        if find_in_path("node").is_some() {
            return Ok(SolverCmd {
                program: "node".into(),
                args: vec![wrapper.to_string_lossy().into_owned()],
                batch: true,
            });
        }
    }
    Err(CheckerError::SolverUnavailable)
}

fn spawn_with_timeout(
    cmd: &SolverCmd,
    paths: &[PathBuf],
    timeout: Duration,
) -> Result<(String, String, bool), CheckerError> {
    let mut command = Command::new(&cmd.program);
    command.args(&cmd.args);
    for p in paths {
        command.arg(p);
    }
    command.stdout(Stdio::piped()).stderr(Stdio::piped());
    let mut child = command.spawn().map_err(|e| {
        CheckerError::SolverFailed(format!("failed to spawn {}: {e}", cmd.program))
    })?;

    let start = Instant::now();
    let mut timed_out = false;
    loop {
        match child.try_wait() {
            Ok(Some(_)) => break,
            Ok(None) => {
                if start.elapsed() > timeout {
                    let _ = child.kill();
                    let _ = child.wait();
                    timed_out = true;
                    break;
                }
                std::thread::sleep(Duration::from_millis(5));
            }
            Err(e) => return Err(CheckerError::SolverFailed(e.to_string())),
        }
    }
    let output = child
        .wait_with_output()
        .map_err(|e| CheckerError::SolverFailed(e.to_string()))?;
    Ok((
        String::from_utf8_lossy(&output.stdout).into_owned(),
        String::from_utf8_lossy(&output.stderr).into_owned(),
        timed_out,
    ))
}

fn write_script(script: &str, timeout: Duration) -> Result<tempfile::NamedTempFile, CheckerError> {
    let mut file = tempfile::Builder::new()
        .prefix("nlinv-")
        .suffix(".smt2")
        .tempfile()?;
    // soft solver-side limit alongside the hard process kill
    let ms = timeout.as_millis().min(u128::from(u32::MAX));
    writeln!(file, "(set-option :timeout {ms})")?;
    file.write_all(script.as_bytes())?;
    file.flush()?;
    Ok(file)
}

/// Runs one script through the external solver.
pub fn run_solver(
    cmd: &SolverCmd,
    script: &str,
    timeout: Duration,
) -> Result<SolverReply, CheckerError> {
    Ok(run_solver_batch(cmd, &[script], timeout)?.remove(0))
}

/// Runs several scripts, in one process invocation when the driver supports
/// batching, otherwise sequentially. The timeout applies per script.
pub fn run_solver_batch(
    cmd: &SolverCmd,
    scripts: &[&str],
    timeout: Duration,
) -> Result<Vec<SolverReply>, CheckerError> {
    if scripts.is_empty() {
        return Ok(Vec::new());
    }
    if cmd.batch && scripts.len() > 1 {
        let files: Vec<tempfile::NamedTempFile> = scripts
            .iter()
            .map(|s| write_script(s, timeout))
            .collect::<Result<_, _>>()?;
        let paths: Vec<PathBuf> = files.iter().map(|f| f.path().to_path_buf()).collect();
        let start = Instant::now();
        let total = timeout * scripts.len() as u32 + Duration::from_secs(20);
        let (stdout, stderr, timed_out) = spawn_with_timeout(cmd, &paths, total)?;
        let elapsed = start.elapsed().as_millis() / scripts.len() as u128;
        if timed_out {
            return Ok(scripts
                .iter()
                .map(|_| SolverReply {
                    status: SatStatus::Unknown("timeout".into()),
                    model: None,
                    elapsed_ms: elapsed,
                })
                .collect());
        }
        let chunks = split_batch_output(&stdout, scripts.len());
        return Ok(chunks
            .into_iter()
            .map(|chunk| {
                let (status, model) = parse_solver_output(&chunk, &stderr);
                SolverReply {
                    status,
                    model,
                    elapsed_ms: elapsed,
                }
            })
            .collect());
    }

    scripts
        .iter()
        .map(|script| {
            let file = write_script(script, timeout)?;
            let start = Instant::now();
            let (stdout, stderr, timed_out) =
                spawn_with_timeout(cmd, &[file.path().to_path_buf()], timeout + Duration::from_secs(15))?;
            let elapsed_ms = start.elapsed().as_millis();
            if timed_out {
                return Ok(SolverReply {
                    status: SatStatus::Unknown("timeout".into()),
                    model: None,
                    elapsed_ms,
                });
            }
            let (status, model) = parse_solver_output(&stdout, &stderr);
            Ok(SolverReply {
                status,
                model,
                elapsed_ms,
            })
        })
        .collect()
}

fn split_batch_output(stdout: &str, n: usize) -> Vec<String> {
    let mut chunks = vec![String::new(); n];
    let mut current: Option<usize> = None;
    for line in stdout.lines() {
        if let Some(rest) = line.strip_prefix("=== nlinv:result ") {
            current = rest
                .trim_end_matches(|c| c == '=' || c == ' ')
                .trim()
                .parse::<usize>()
                .ok()
                .filter(|&i| i < n);
            continue;
        }
        if let Some(i) = current {
            chunks[i].push_str(line);
            chunks[i].push('\n');
        }
    }
    chunks
}

/// Maps raw solver output to a status and, for `sat`, a parsed model.
/// The parser accepts both `(define-fun x () Int 5)` and negative-literal
/// `(- 5)` forms, with or without a `(model ...)` wrapper.
fn parse_solver_output(stdout: &str, stderr: &str) -> (SatStatus, Option<Valuation>) {
    let mut status = None;
    for line in stdout.lines() {
        match line.trim() {
            "sat" => {
                status = Some(SatStatus::Sat);
                break;
            }
            "unsat" => {
                status = Some(SatStatus::Unsat);
                break;
            }
            "unknown" => {
                status = Some(SatStatus::Unknown("solver answered unknown".into()));
                break;
            }
            "" => continue,
            other if other.starts_with("(error") => continue,
            _ => continue,
        }
    }
    let Some(status) = status else {
        let mut reason = String::from("no sat/unsat answer");
        if !stderr.trim().is_empty() {
            reason = format!("{reason}; stderr: {}", stderr.trim());
        }
        return (SatStatus::Unknown(reason), None);
    };
    if status != SatStatus::Sat {
        return (status, None);
    }
    let model = parse_model(stdout);
    (status, model)
}

fn parse_model(stdout: &str) -> Option<Valuation> {
    let tokens = tokenize(stdout)?;
    let mut model = Valuation::new();
    let mut i = 0usize;
    while i < tokens.len() {
        if tokens[i] == "define-fun" {
            // NAME () SORT VALUE
            let name = tokens.get(i + 1)?.clone();
            if tokens.get(i + 2).map(String::as_str) == Some("(")
                && tokens.get(i + 3).map(String::as_str) == Some(")")
            {
                let mut j = i + 5; // skip sort
                if let Some((value, next)) = parse_value(&tokens, j) {
                    model.insert(name, value);
                    j = next;
                }
                i = j;
                continue;
            }
        }
        i += 1;
    }
    if model.is_empty() {
        None
    } else {
        Some(model)
    }
}

fn tokenize(s: &str) -> Option<Vec<String>> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in s.chars() {
        match c {
            '(' | ')' => {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
                out.push(c.to_string());
            }
            c if c.is_whitespace() => {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
            }
            c => cur.push(c),
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    Some(out)
}

/// Parses an integer or rational value sexpr starting at `i`; returns the
/// value and the index after it.
fn parse_value(tokens: &[String], i: usize) -> Option<(Rat, usize)> {
    let tok = tokens.get(i)?;
    if tok == "(" {
        let op = tokens.get(i + 1)?;
        match op.as_str() {
            "-" => {
                let (inner, next) = parse_value(tokens, i + 2)?;
                if tokens.get(next).map(String::as_str) == Some(")") {
                    Some((-inner, next + 1))
                } else {
                    None
                }
            }
            "/" => {
                let (num, after_num) = parse_value(tokens, i + 2)?;
                let (den, after_den) = parse_value(tokens, after_num)?;
                if tokens.get(after_den).map(String::as_str) == Some(")") {
                    Some((num / den, after_den + 1))
                } else {
                    None
                }
            }
            _ => None,
        }
    } else {
        let cleaned = tok.trim_end_matches(".0");
        let n: BigInt = cleaned.parse().ok()?;
        Some((Rat::from_integer(n), i + 1))
    }
}
