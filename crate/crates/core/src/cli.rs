//! The `sos-auction` command-line tool.
//!
//! Exit codes: 0 when every check passes, 1 when a property violation is
//! found, 2 on bad input, 3 when an event the single-item construction rules out
//! (an error line of the sweep, a missing favored bidder, an unpayable rule)
//! occurs.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::allocation::allocate;
use crate::io::{
    parse_profile, read_json, to_json, write_json, write_text, InstanceFile, IoError, ReproducerFile, RuleFile,
};
use crate::lattice::{gen_random_lattice_setting, simulate_batch};
use crate::matroid::{check_matroid, Matroid, MatroidError};
use crate::payments::{compute_payments, Mechanism};
use crate::rational::format_rational;
use crate::seed::derive_seed;
use crate::signal::SignalSet;
use crate::valuation::{gen_random_setting, Setting};
use crate::verification::verify;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VIOLATION: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_BREACH: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "sos-auction", version, about = "Truthful welfare auctions for SOS valuations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate random SOS instances (binary, or on {0..k}ⁿ with --k).
    Gen {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        count: u64,
        #[arg(long, default_value_t = 100)]
        scale: u32,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Validate an instance file.
    Check { instance: PathBuf },
    /// Build the allocation rule and payments for an instance.
    Build {
        instance: PathBuf,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Include the W/R/B color table.
        #[arg(long)]
        colors: bool,
    },
    /// Check a rule file (and its payments, if present) against an instance.
    Verify { instance: PathBuf, rule: PathBuf },
    /// Evaluate the matroid mechanism.
    Matroid {
        instance: PathBuf,
        /// Matroid file; defaults to the instance's embedded matroid.
        #[arg(long)]
        matroid: Option<PathBuf>,
        /// Single profile such as `{1,3}`; all profiles when absent.
        #[arg(long)]
        profile: Option<String>,
    },
    /// Run the extended sweep on random grid instances.
    Simulate {
        #[arg(long, default_value_t = 3)]
        n: usize,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 1000)]
        count: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        scale: u32,
        /// Directory for `summary.txt` and failure reproducers; stdout only when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn input(message: impl ToString) -> Self {
        Failure { code: EXIT_INPUT, message: message.to_string() }
    }

    fn breach(message: impl ToString) -> Self {
        Failure { code: EXIT_BREACH, message: message.to_string() }
    }
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        Failure::input(e)
    }
}

type Outcome = Result<i32, Failure>;

/// Entry point of the binary.
pub fn main() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let sink: &mut dyn Write = if e.use_stderr() { err } else { out };
            let _ = write!(sink, "{}", e.render());
            return code;
        }
    };
    match execute(cli.command, out, err) {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn execute(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    match command {
        Command::Gen { n, seed, count, scale, k, out: dir } => cmd_gen(n, seed, count, scale, k, &dir, out),
        Command::Check { instance } => cmd_check(&instance, out),
        Command::Build { instance, out: path, colors } => cmd_build(&instance, path.as_deref(), colors, out, err),
        Command::Verify { instance, rule } => cmd_verify(&instance, &rule, out),
        Command::Matroid { instance, matroid, profile } => {
            cmd_matroid(&instance, matroid.as_deref(), profile.as_deref(), out)
        }
        Command::Simulate { n, k, count, seed, scale, out: dir } => {
            cmd_simulate(n, k, count, seed, scale, dir.as_deref(), out)
        }
    }
}

fn cmd_gen(n: usize, seed: u64, count: u64, scale: u32, k: Option<usize>, dir: &Path, out: &mut dyn Write) -> Outcome {
    for r in 0..count {
        let instance_seed = derive_seed(seed, r);
        let file = match k {
            None => InstanceFile::from_setting(
                &gen_random_setting(n, instance_seed, scale).map_err(Failure::input)?,
                Some(instance_seed),
                Some(scale),
            ),
            Some(k) => InstanceFile::from_lattice(
                &gen_random_lattice_setting(n, k, instance_seed, scale).map_err(Failure::input)?,
                Some(instance_seed),
                Some(scale),
            ),
        };
        write_json(&dir.join(format!("instance-{r}.json")), &file)?;
    }
    let _ = writeln!(out, "wrote {count} instance(s) to {}", dir.display());
    Ok(EXIT_OK)
}

/// First SOS failure of a binary setting, as a message.
fn sos_witness(setting: &Setting) -> Option<String> {
    let (bidder, report) = setting.first_invalid()?;
    Some(match (report.monotone_witness, report.submodular_witness) {
        (Some(w), _) => {
            format!("bidder {}: not monotone, adding bidder {} to {} lowers the value", bidder + 1, w.bidder + 1, w.set)
        }
        (None, Some(w)) => format!(
            "bidder {}: not submodular, bidder {} adds more at {} ∪ {{{}}} than at {}",
            bidder + 1,
            w.a + 1,
            w.set,
            w.b + 1,
            w.set
        ),
        (None, None) => format!("bidder {}: invalid", bidder + 1),
    })
}

fn cmd_check(path: &Path, out: &mut dyn Write) -> Outcome {
    let file: InstanceFile = read_json(path)?;
    if file.is_lattice() {
        let setting = file.lattice()?;
        let mut ok = true;
        for (b, w) in setting.validate().iter().enumerate() {
            match w {
                None => {
                    let _ = writeln!(out, "bidder {}: lattice-SOS", b + 1);
                }
                Some(w) => {
                    ok = false;
                    let _ = writeln!(out, "bidder {}: violation {:?}", b + 1, w);
                }
            }
        }
        return Ok(if ok { EXIT_OK } else { EXIT_VIOLATION });
    }
    let setting = file.setting()?;
    for (b, report) in setting.validate().iter().enumerate() {
        let mut line = format!("bidder {}: monotone={} submodular={}", b + 1, report.monotone, report.submodular);
        if let Some(set) = report.own_strict_witness {
            line.push_str(&format!(" (warning: value does not rise with own signal at {set})"));
        }
        let _ = writeln!(out, "{line}");
    }
    if let Some(w) = sos_witness(&setting) {
        let _ = writeln!(out, "{w}");
        return Ok(EXIT_VIOLATION);
    }
    let _ = writeln!(out, "valid SOS instance, n={}", setting.n());
    Ok(EXIT_OK)
}

fn load_sos(path: &Path) -> Result<(InstanceFile, Setting), Failure> {
    let file: InstanceFile = read_json(path)?;
    let setting = file.setting()?;
    if let Some(w) = sos_witness(&setting) {
        return Err(Failure::input(format!("{}: {w}", path.display())));
    }
    Ok((file, setting))
}

fn cmd_build(path: &Path, target: Option<&Path>, colors: bool, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    let (file, setting) = load_sos(path)?;
    let allocation = match allocate(&setting) {
        Ok(a) => a,
        Err(e) => {
            let _ = writeln!(err, "trace:");
            for event in &e.trace {
                let _ = writeln!(err, "  {event:?}");
            }
            return Err(Failure::breach(e));
        }
    };
    let payments = compute_payments(&setting, &allocation.rule).map_err(Failure::breach)?;
    let rule = RuleFile::new(&allocation, Some(&payments), file.seed, colors);
    match target {
        Some(p) => {
            write_json(p, &rule)?;
            let _ = writeln!(out, "wrote {}", p.display());
        }
        None => {
            let _ = write!(out, "{}", to_json(&rule));
        }
    }
    Ok(EXIT_OK)
}

fn cmd_verify(instance: &Path, rule_path: &Path, out: &mut dyn Write) -> Outcome {
    let file: InstanceFile = read_json(instance)?;
    let setting = file.setting()?;
    let rule_file: RuleFile = read_json(rule_path)?;
    if rule_file.n != setting.n() {
        return Err(Failure::input(format!("rule has n={}, instance has n={}", rule_file.n, setting.n())));
    }
    let rule = rule_file.rule()?;
    let mechanism =
        rule_file.payment_rule()?.map(|payments| Mechanism { setting: &setting, allocation: rule.clone(), payments });
    let report = verify(&setting, &rule, mechanism.as_ref());
    let _ = write!(out, "{}", report.summary());
    Ok(if report.passed() { EXIT_OK } else { EXIT_VIOLATION })
}

fn matroid_failure(e: MatroidError) -> Failure {
    match e {
        MatroidError::Allocation(_) => Failure::breach(e),
        other => Failure::input(other),
    }
}

fn cmd_matroid(path: &Path, matroid_path: Option<&Path>, profile: Option<&str>, out: &mut dyn Write) -> Outcome {
    let (file, setting) = load_sos(path)?;
    let matroid = match matroid_path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|source| IoError::Read { path: p.into(), source })?;
            let m: Matroid = serde_json::from_str(&text).map_err(|source| IoError::Json { path: p.into(), source })?;
            m.with_ground_set(setting.n()).map_err(Failure::input)?
        }
        None => file.matroid()?.ok_or_else(|| Failure::input("no matroid given and none embedded in the instance"))?,
    };
    let selected = profile.map(|p| parse_profile(p, setting.n())).transpose()?;
    let report = check_matroid(&setting, &matroid).map_err(matroid_failure)?;
    for outcome in report.outcomes.iter().filter(|o| selected.is_none_or(|s| s == o.set)) {
        let probs: Vec<String> = outcome.win_probabilities.iter().map(format_rational).collect();
        let _ = writeln!(
            out,
            "{} welfare={} greedy={} win=[{}] bound={}",
            outcome.set,
            format_rational(&outcome.expected_welfare),
            format_rational(&outcome.greedy),
            probs.join(", "),
            if outcome.meets_bound() { "ok" } else { "VIOLATED" }
        );
    }
    let relevant = |set: SignalSet, bidder: usize| selected.is_none_or(|s| s == set || s == set.with(bidder));
    let monotonicity: Vec<_> = report.monotonicity_violations.iter().filter(|v| relevant(v.set, v.bidder)).collect();
    let bound = report.bound_violations.iter().filter(|s| selected.is_none_or(|t| t == **s)).count();
    for v in &monotonicity {
        let _ = writeln!(
            out,
            "monotonicity violation: bidder {} wins with {} at {} but {} at {}",
            v.bidder + 1,
            format_rational(&v.low),
            v.set,
            format_rational(&v.high),
            v.set.with(v.bidder)
        );
    }
    let _ = writeln!(out, "bound violations={bound} monotonicity violations={}", monotonicity.len());
    Ok(if bound == 0 && monotonicity.is_empty() { EXIT_OK } else { EXIT_VIOLATION })
}

fn cmd_simulate(
    n: usize,
    k: usize,
    count: u64,
    seed: u64,
    scale: u32,
    dir: Option<&Path>,
    out: &mut dyn Write,
) -> Outcome {
    let summary = simulate_batch(n, k, count, seed, scale).map_err(Failure::input)?;
    let mut text = format!("format=sos-auction/1\n{}", summary.render());
    if let Some(dir) = dir {
        for r in &summary.reproducers {
            let path = dir.join("reproducers").join(format!("instance-{}.json", r.instance));
            write_json(&path, &ReproducerFile::new(r, seed, scale))?;
            text.push_str(&format!("reproducer={}\n", path.display()));
        }
        write_text(&dir.join("summary.txt"), &text)?;
    }
    let _ = write!(out, "{text}");
    Ok(if summary.failures() == 0 { EXIT_OK } else { EXIT_VIOLATION })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(std::iter::once("sos-auction").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn bad_arguments_are_input_errors() {
        assert_eq!(run_args(&["frobnicate"]).0, EXIT_INPUT);
        assert_eq!(run_args(&["gen"]).0, EXIT_INPUT);
        assert_eq!(run_args(&["--help"]).0, EXIT_OK);
    }

    #[test]
    fn gen_caps_bidders() {
        let dir = tempfile::tempdir().unwrap();
        let (code, _, err) = run_args(&["gen", "--n", "21", "--out", dir.path().to_str().unwrap()]);
        assert_eq!(code, EXIT_INPUT, "{err}");
    }

    #[test]
    fn missing_file_is_input_error() {
        assert_eq!(run_args(&["check", "/nonexistent/instance.json"]).0, EXIT_INPUT);
    }
}
