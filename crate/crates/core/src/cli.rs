//! The `guarded-saturate` command line.

use std::ffi::OsString;
use std::io::{IsTerminal, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use thiserror::Error;

use crate::chase::{
    chase, chase_certain, check_one_pass, disjunctive_chase, expand, Certainty, ChaseConfig, DisOutcome, Mode,
};
use crate::dgsat::{dgsat, AuxiliaryQuery};
use crate::eval::{answer_ucq, datalog_eval, disdatalog_entails};
use crate::gsat::{gsat, ssat, SatConfig, SatError, SatStats, Saturation};
use crate::model::{is_full, Query, Rule};
use crate::normal::{deskolemize, hnf, ifc, shnf, skolemize, vnf, NormalError};
use crate::par::{set_threads, Exec};
use crate::textio::{parse, print_rules, ParseError, ParseOptions, Program};
use crate::verify::{verify_program, verify_random, Class, GenParams, VerifyConfig};

#[derive(Debug, Parser)]
#[command(name = "guarded-saturate", version, about = "Datalog rewritings of guarded TGDs")]
struct Cli {
    /// Worker threads for saturation; 1 runs sequentially.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the rewriting of the rules in FILE.
    Saturate(SatArgs),
    /// Answer the ground queries in FILE via the rewriting.
    Answer(SatArgs),
    /// Run the chase on FILE and report on its queries.
    Chase(ChaseArgs),
    /// Cross-check the rewriting against the chase.
    Verify(VerifyArgs),
    /// Print a normal form of the rules in FILE.
    Normalize(NormArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Algo {
    Ssat,
    Gsat,
    Dgsat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Emit {
    Json,
    Dot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ChaseMode {
    Restricted,
    Oblivious,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ClassArg {
    Gtgd,
    Disgtgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Form {
    Vnf,
    Hnf,
    Shnf,
    Skolem,
    Deskolem,
    Ifc,
}

#[derive(Debug, Args)]
struct SatArgs {
    file: PathBuf,
    /// Saturation procedure; defaults to gsat, or dgsat for disjunctive rules.
    #[arg(long, value_enum)]
    algo: Option<Algo>,
    #[arg(long)]
    allow_skolem: bool,
    /// Drop derived rules subsumed by others, and head atoms already in the body.
    #[arg(long)]
    subsume: bool,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ChaseArgs {
    file: PathBuf,
    #[arg(long, value_enum, default_value = "restricted")]
    mode: ChaseMode,
    /// Step budget for the chase.
    #[arg(long, default_value_t = 10_000)]
    steps: usize,
    /// Node budget for the disjunctive chase.
    #[arg(long, default_value_t = 5_000)]
    nodes: usize,
    /// Track bags and report whether the run is one-pass.
    #[arg(long)]
    one_pass: bool,
    /// Write the run or chase tree as a trace.
    #[arg(long, value_enum)]
    emit: Option<Emit>,
    /// Destination of the trace; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    file: Option<PathBuf>,
    /// Check N generated programs instead of FILE.
    #[arg(long, value_name = "N")]
    random: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum)]
    class: Option<ClassArg>,
    /// Add an unsound rule to every rewriting.
    #[arg(long)]
    inject_unsound: bool,
    #[arg(long, default_value_t = 10_000)]
    steps: usize,
    #[arg(long, default_value_t = 5_000)]
    nodes: usize,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

#[derive(Debug, Args)]
struct NormArgs {
    file: PathBuf,
    #[arg(long, value_enum, default_value = "vnf")]
    form: Form,
    #[arg(long)]
    allow_skolem: bool,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}:{source}")]
    Parse { path: String, source: ParseError },
    #[error("{0}")]
    Unguarded(SatError),
    #[error("{0}")]
    WrongAlgo(String),
    #[error("query {0} is not ground; use `guarded-saturate chase` for existential queries")]
    ExistentialQuery(Query),
    #[error(transparent)]
    Auxiliary(#[from] AuxiliaryQuery),
    #[error(transparent)]
    Normal(#[from] NormalError),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Io { .. } | CliError::Parse { .. } | CliError::Usage(_) => 2,
            CliError::Unguarded(_) => 3,
            CliError::WrongAlgo(_) | CliError::Normal(_) => 4,
            CliError::ExistentialQuery(_) | CliError::Auxiliary(_) => 5,
        }
    }
}

impl From<SatError> for CliError {
    fn from(e: SatError) -> Self {
        match e {
            SatError::Unguarded(_) => CliError::Unguarded(e),
            other => CliError::WrongAlgo(other.to_string()),
        }
    }
}

struct Io<'a> {
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
    color: bool,
}

impl Io<'_> {
    fn paint(&self, text: &str, code: &str) -> String {
        if self.color {
            format!("\x1b[{code}m{text}\x1b[0m")
        } else {
            text.to_string()
        }
    }
}

fn load(path: &PathBuf, opts: &ParseOptions) -> Result<Program, CliError> {
    let p = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: p.clone(), source })?;
    parse(&text, opts).map_err(|source| CliError::Parse { path: p, source })
}

fn write_to(path: &Option<PathBuf>, io: &mut Io, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|source| CliError::Io { path: p.display().to_string(), source }),
        None => {
            let _ = io.out.write_all(text.as_bytes());
            Ok(())
        }
    }
}

struct Rewriting {
    algo: Algo,
    sat: Saturation,
    aux: Option<crate::dgsat::DisSaturation>,
}

fn rewrite(rules: &[Rule], algo: Option<Algo>, sat_cfg: &SatConfig) -> Result<Rewriting, CliError> {
    let disjunctive = rules.iter().any(|r| !r.is_tgd());
    let algo = algo.unwrap_or(if disjunctive { Algo::Dgsat } else { Algo::Gsat });
    if disjunctive && algo != Algo::Dgsat {
        if let Some(r) = rules.iter().find(|r| !crate::model::is_guarded(r).0) {
            return Err(CliError::Unguarded(SatError::Unguarded(r.clone())));
        }
        return Err(CliError::WrongAlgo(format!("disjunctive rules need --algo dgsat, not {algo:?}").to_lowercase()));
    }
    Ok(match algo {
        Algo::Gsat => Rewriting { algo, sat: gsat(rules, sat_cfg)?, aux: None },
        Algo::Ssat => Rewriting { algo, sat: ssat(rules, sat_cfg)?, aux: None },
        Algo::Dgsat => {
            let d = dgsat(rules, sat_cfg)?;
            Rewriting { algo, sat: d.saturation.clone(), aux: Some(d) }
        }
    })
}

fn algo_name(a: Algo) -> &'static str {
    match a {
        Algo::Ssat => "ssat",
        Algo::Gsat => "gsat",
        Algo::Dgsat => "dgsat",
    }
}

fn stats_line(algo: Algo, s: &SatStats) -> String {
    format!(
        "% {}: {} input rules, {} initial, {} in closure, {} output; {} iterations, {} inferences, {} subsumed, {} shape violations",
        algo_name(algo),
        s.input_rules,
        s.initial_rules,
        s.closure_rules,
        s.output_rules,
        s.closure.iterations,
        s.closure.inferences,
        s.closure.subsumed,
        s.closure.violations.len()
    )
}

fn cmd_saturate(a: &SatArgs, sat_cfg: &SatConfig, io: &mut Io) -> Result<i32, CliError> {
    let prog = load(&a.file, &ParseOptions { allow_skolem: a.allow_skolem })?;
    let rw = rewrite(&prog.rules, a.algo, &SatConfig { subsume: a.subsume, ..*sat_cfg })?;
    let _ = writeln!(io.err, "% {} ms", rw.sat.stats.millis);
    let text = match a.format {
        Format::Text => format!("{}\n{}", stats_line(rw.algo, &rw.sat.stats), print_rules(&rw.sat.rules)),
        Format::Json => {
            let v = json!({
                "algo": algo_name(rw.algo),
                "rules": rw.sat.rules.iter().map(ToString::to_string).collect::<Vec<_>>(),
                "stats": rw.sat.stats,
            });
            format!("{}\n", serde_json::to_string_pretty(&v).expect("serializable"))
        }
    };
    write_to(&a.out, io, &text)?;
    Ok(0)
}

fn cmd_answer(a: &SatArgs, sat_cfg: &SatConfig, io: &mut Io) -> Result<i32, CliError> {
    let prog = load(&a.file, &ParseOptions { allow_skolem: a.allow_skolem })?;
    if let Some(q) = prog.queries.iter().find(|q| !q.is_ground()) {
        return Err(CliError::ExistentialQuery(q.clone()));
    }
    let direct = a.algo.is_none() && prog.rules.iter().all(is_full);
    let (rules, aux) = if direct {
        (prog.rules.clone(), None)
    } else {
        let rw = rewrite(&prog.rules, a.algo, &SatConfig { subsume: a.subsume, ..*sat_cfg })?;
        (rw.sat.rules, rw.aux)
    };
    let disjunctive = aux.is_some() || rules.iter().any(|r| r.is_disjunctive() || r.head().is_empty());
    let mut answers = Vec::new();
    if disjunctive {
        for q in &prog.queries {
            if let Some(d) = &aux {
                d.check_query(q)?;
            }
            answers.push(disdatalog_entails(&prog.database, &rules, q).expect("full rules, ground query"));
        }
    } else {
        let ev = datalog_eval(&prog.database, &rules).expect("full rules");
        for q in &prog.queries {
            answers.push(answer_ucq(&ev.instance, q).expect("ground query"));
        }
    }
    let text = match a.format {
        Format::Text => answers
            .iter()
            .enumerate()
            .map(|(i, &y)| format!("Q{}: {}\n", i + 1, if y { io.paint("yes", "32") } else { io.paint("no", "31") }))
            .collect::<String>(),
        Format::Json => {
            let v: Vec<_> = prog
                .queries
                .iter()
                .zip(&answers)
                .map(|(q, y)| json!({ "query": q.to_string(), "answer": y }))
                .collect();
            format!("{}\n", serde_json::to_string_pretty(&v).expect("serializable"))
        }
    };
    write_to(&a.out, io, &text)?;
    Ok(0)
}

fn cmd_chase(a: &ChaseArgs, io: &mut Io) -> Result<i32, CliError> {
    if a.steps == 0 || a.nodes == 0 {
        return Err(CliError::Usage("budgets must be positive".into()));
    }
    let prog = load(&a.file, &ParseOptions::default())?;
    let disjunctive = prog.rules.iter().any(|r| !r.is_tgd());
    let mode = match a.mode {
        ChaseMode::Restricted => Mode::Restricted,
        ChaseMode::Oblivious => Mode::Oblivious,
    };
    let cfg = ChaseConfig { mode, max_steps: a.steps, track_tree: a.one_pass || a.emit.is_some(), ..ChaseConfig::default() };
    let mut lines = Vec::new();
    let mut results = Vec::new();
    let mut trace = None;
    for (i, q) in prog.queries.iter().enumerate() {
        let (status, detail) = if disjunctive {
            let (o, tree) = disjunctive_chase(&prog.database, &prog.rules, q, a.nodes).expect("positive budget");
            if trace.is_none() {
                trace = Some((tree.to_json(), tree.to_dot()));
            }
            match o {
                DisOutcome::Proven => ("yes", format!("{} nodes", tree.nodes.len())),
                DisOutcome::Refuted => ("no", "fixpoint".to_string()),
                DisOutcome::Unknown => ("unknown", "budget".to_string()),
            }
        } else {
            match chase_certain(&prog.database, &prog.rules, q, cfg).expect("positive budget") {
                Certainty::Yes { steps } => ("yes", format!("{steps} steps")),
                Certainty::RefutedAtFixpoint => ("no", "fixpoint".to_string()),
                Certainty::Unknown => ("unknown", "budget".to_string()),
            }
        };
        let painted = match status {
            "yes" => io.paint(status, "32"),
            "no" => io.paint(status, "31"),
            _ => io.paint(status, "33"),
        };
        lines.push(format!("Q{}: {painted} ({detail})", i + 1));
        results.push(json!({ "query": q.to_string(), "status": status, "detail": detail }));
    }
    let mut one_pass = None;
    if !disjunctive && (a.one_pass || a.emit.is_some() || prog.queries.is_empty()) {
        let (run, inst) = chase(&prog.database, &prog.rules, cfg).expect("positive budget");
        if prog.queries.is_empty() {
            let state = if run.fixpoint { "fixpoint" } else { "budget" };
            lines.push(format!("% {} steps, {state}", run.steps.len()));
            lines.extend(inst.iter().map(|f| format!("{f}.")));
        }
        if a.one_pass {
            match check_one_pass(&run) {
                Ok(None) => one_pass = Some((true, None)),
                Ok(Some(v)) => one_pass = Some((false, Some(v))),
                Err(e) => lines.push(format!("one-pass: {e}")),
            }
        }
        trace = Some((run.to_json(), run.to_dot()));
    } else if disjunctive && prog.queries.is_empty() {
        let (tree, complete) = expand(&prog.database, &prog.rules, a.nodes).expect("positive budget");
        let dom = prog.database.consts();
        lines.push(format!("% {} nodes, {}", tree.nodes.len(), if complete { "fixpoint" } else { "budget" }));
        lines.extend(tree.proven_facts(&dom).iter().map(|f| format!("{f}.")));
        trace = Some((tree.to_json(), tree.to_dot()));
    }
    if let Some((ok, v)) = one_pass {
        lines.push(match v {
            None => format!("one-pass: {ok}"),
            Some(v) => format!(
                "one-pass: {ok} (node {} changed at step {} after step {} fired outside it)",
                v.node, v.modifying_step, v.outside_step
            ),
        });
        results.push(json!({ "one_pass": ok, "violation": v }));
    }
    let text = match a.format {
        Format::Text => lines.iter().map(|l| format!("{l}\n")).collect::<String>(),
        Format::Json => format!("{}\n", serde_json::to_string_pretty(&results).expect("serializable")),
    };
    let _ = io.out.write_all(text.as_bytes());
    if let (Some(emit), Some((j, d))) = (a.emit, trace) {
        let body = match emit {
            Emit::Json => format!("{}\n", serde_json::to_string_pretty(&j).expect("serializable")),
            Emit::Dot => d,
        };
        write_to(&a.out, io, &body)?;
    }
    Ok(0)
}

fn cmd_verify(a: &VerifyArgs, sat_cfg: &SatConfig, io: &mut Io) -> Result<i32, CliError> {
    let cfg = VerifyConfig { steps: a.steps, nodes: a.nodes, inject_unsound: a.inject_unsound, sat: *sat_cfg };
    let class_of = |c: ClassArg| match c {
        ClassArg::Gtgd => Class::Gtgd,
        ClassArg::Disgtgd => Class::Disgtgd,
    };
    let report = match (&a.file, a.random) {
        (_, Some(n)) => {
            let class = class_of(a.class.unwrap_or(ClassArg::Gtgd));
            verify_random(n, a.seed, class, GenParams::for_class(class), &cfg)
        }
        (Some(path), None) => {
            let prog = load(path, &ParseOptions::default())?;
            let class = match a.class {
                Some(c) => class_of(c),
                None if prog.rules.iter().any(|r| !r.is_tgd()) => Class::Disgtgd,
                None => Class::Gtgd,
            };
            if class == Class::Gtgd && prog.rules.iter().any(|r| !r.is_tgd()) {
                return Err(CliError::WrongAlgo("disjunctive rules need --class disgtgd".into()));
            }
            verify_program(&prog.rules, &prog.database, class, &cfg)?
        }
        (None, None) => return Err(CliError::Usage("verify needs FILE or --random N".into())),
    };
    let text = match a.format {
        Format::Text => {
            let body = report.to_string();
            let (head, last) = body.rsplit_once('\n').unwrap_or(("", &body));
            let last = if report.passed() { io.paint(last, "32") } else { io.paint(last, "31") };
            if head.is_empty() { format!("{last}\n") } else { format!("{head}\n{last}\n") }
        }
        Format::Json => format!("{}\n", serde_json::to_string_pretty(&report).expect("serializable")),
    };
    let _ = io.out.write_all(text.as_bytes());
    Ok(if report.passed() { 0 } else { 1 })
}

fn cmd_normalize(a: &NormArgs, io: &mut Io) -> Result<i32, CliError> {
    let prog = load(&a.file, &ParseOptions { allow_skolem: a.allow_skolem })?;
    let rules = prog.rules;
    let out: Vec<Rule> = match a.form {
        Form::Vnf => rules.iter().map(vnf).collect(),
        Form::Hnf => hnf(&rules)?,
        Form::Shnf => shnf(&rules).rules,
        Form::Skolem => skolemize(&rules).0,
        Form::Deskolem => rules.iter().map(deskolemize).collect::<Result<_, _>>()?,
        Form::Ifc => rules.iter().filter_map(ifc).collect(),
    };
    let _ = io.out.write_all(print_rules(&out).as_bytes());
    Ok(0)
}

/// Runs the command line with explicit arguments and streams; returns the
/// process exit code.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write, color: bool) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = if e.use_stderr() { write!(err, "{e}") } else { write!(out, "{e}") };
            return code;
        }
    };
    let mut sat_cfg = SatConfig::default();
    match cli.jobs {
        Some(0) => {
            let _ = writeln!(err, "error: --jobs must be positive");
            return 2;
        }
        Some(1) => sat_cfg.exec = Exec::Sequential,
        Some(n) => set_threads(n),
        None => {}
    }
    let mut io = Io { out, err, color };
    let res = match &cli.command {
        Command::Saturate(a) => cmd_saturate(a, &sat_cfg, &mut io),
        Command::Answer(a) => cmd_answer(a, &sat_cfg, &mut io),
        Command::Chase(a) => cmd_chase(a, &mut io),
        Command::Verify(a) => cmd_verify(a, &sat_cfg, &mut io),
        Command::Normalize(a) => cmd_normalize(a, &mut io),
    };
    match res {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(io.err, "error: {e}");
            e.code()
        }
    }
}

/// Entry point used by the binary.
pub fn run() -> i32 {
    let color = std::env::var("GS_COLOR").map_or(true, |v| v != "0") && std::io::stdout().is_terminal();
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock(), color)
}
