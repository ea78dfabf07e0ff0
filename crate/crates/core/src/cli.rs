//! The `mll` command line.
//!
//! Exit status: 0 when a result was computed (whatever the verdict), 1 for
//! usage errors, 2 for bad input, 3 when two routes that must agree did not.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::collapse::{check, CollapseQuery, CollapseReport};
use crate::error::{MllError, Result};
use crate::generator::{generate, GenMode, GenSpec};
use crate::independence::{
    decompose_lambda, independence_suite_with, test_independence_with, Mode, Partition,
};
use crate::io::{self, InputDigest, Report, TableFormat};
use crate::mll::{expand_log_linear, LogMargin, MllValue};
use crate::spec::{classify, evaluate_spec, MarginalSpec};
use crate::table::Table;
use crate::tolerance::Tolerance;
use crate::varset::VarSet;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_BREACH: i32 = 3;

/// Environment variable holding the default verdict tolerance.
pub const TOL_ENV: &str = "MLL_TOL";

#[derive(Debug, Parser)]
#[command(
    name = "mll",
    version,
    about = "Marginal log-linear parameters, collapsibility and independence checks"
)]
struct Cli {
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,

    /// Relative tolerance for verdicts.
    #[arg(long, global = true, env = TOL_ENV, value_parser = parse_tol)]
    tol: Option<f64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parameters of a table, for one effect, one margin, a spec, or all pairs.
    Params(ParamsArgs),
    /// Collapsibility of a margin onto a smaller one.
    Collapse(CollapseArgs),
    /// Independence verdict, optionally with its strict-collapsibility suite.
    Independence(IndependenceArgs),
    /// Split a parameter into marginal and conditional parts.
    Decompose(DecomposeArgs),
    /// Hierarchy and completeness of a marginal spec.
    Classify(ClassifyArgs),
    /// Generate a table.
    Gen(GenArgs),
}

#[derive(Debug, Args)]
struct TableArg {
    /// Table file (.json or .csv).
    #[arg(long)]
    table: PathBuf,
    /// Table format, when the extension is not enough.
    #[arg(long, value_enum)]
    table_format: Option<FileFormat>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum FileFormat {
    Json,
    Csv,
}

impl From<FileFormat> for TableFormat {
    fn from(f: FileFormat) -> Self {
        match f {
            FileFormat::Json => TableFormat::Json,
            FileFormat::Csv => TableFormat::Csv,
        }
    }
}

#[derive(Debug, Args)]
struct ParamsArgs {
    #[command(flatten)]
    table: TableArg,
    /// Margin, e.g. 1,2 (defaults to all variables when an effect is given).
    #[arg(long, value_parser = parse_set)]
    margin: Option<VarSet>,
    #[arg(long, value_parser = parse_set)]
    effect: Option<VarSet>,
    /// Cell of the effect, 0-based levels, e.g. 0,1.
    #[arg(long, value_delimiter = ',', requires = "effect")]
    at: Option<Vec<usize>>,
    /// Marginal spec JSON; evaluates every pair it lists.
    #[arg(long, conflicts_with_all = ["margin", "effect"])]
    spec: Option<PathBuf>,
    /// Only values at cells avoiding each variable's last level.
    #[arg(long)]
    nonredundant: bool,
}

#[derive(Debug, Args)]
struct CollapseArgs {
    #[command(flatten)]
    table: TableArg,
    #[arg(long, value_parser = parse_set)]
    effect: VarSet,
    #[arg(long, value_parser = parse_set)]
    margin: VarSet,
    /// The larger margin collapsed from.
    #[arg(long = "super", value_parser = parse_set)]
    outer: VarSet,
    /// Common core of an effect family {A : core ⊆ A ⊆ effect}.
    #[arg(long, value_parser = parse_set)]
    core: Option<VarSet>,
    #[arg(long)]
    strict: bool,
}

#[derive(Debug, Args)]
struct Blocks {
    #[arg(long = "A", value_parser = parse_set)]
    a: VarSet,
    #[arg(long = "B", value_parser = parse_set)]
    b: VarSet,
    #[arg(long = "C", value_parser = parse_set)]
    c: Option<VarSet>,
}

impl Blocks {
    fn partition(&self) -> Partition {
        Partition::new(self.a, self.b, self.c.unwrap_or(VarSet::EMPTY))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Conditional,
    Joint,
    Mutual,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Conditional => Mode::Conditional,
            ModeArg::Joint => Mode::Joint,
            ModeArg::Mutual => Mode::Mutual,
        }
    }
}

#[derive(Debug, Args)]
struct IndependenceArgs {
    #[command(flatten)]
    table: TableArg,
    #[arg(long, value_enum)]
    mode: ModeArg,
    #[command(flatten)]
    blocks: Blocks,
    /// Also check the equivalent strict-collapsibility statements.
    #[arg(long)]
    suite: bool,
}

#[derive(Debug, Args)]
struct DecomposeArgs {
    #[command(flatten)]
    table: TableArg,
    #[arg(long, value_parser = parse_set)]
    effect: VarSet,
    /// Conditioned-on block.
    #[arg(long = "A", value_parser = parse_set)]
    a: VarSet,
    /// Conditioning block.
    #[arg(long = "B", value_parser = parse_set)]
    b: VarSet,
}

#[derive(Debug, Args)]
struct ClassifyArgs {
    /// Marginal spec JSON.
    #[arg(long)]
    spec: PathBuf,
    /// Variable set; defaults to the union of the margins.
    #[arg(long, value_parser = parse_set, conflicts_with = "table")]
    vars: Option<VarSet>,
    /// Take the variable set from a table file.
    #[arg(long)]
    table: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
enum GenModeArg {
    Random,
    ConditionalIndep,
    JointIndep,
    MutualIndep,
    FromLoglinear,
}

impl From<GenModeArg> for GenMode {
    fn from(m: GenModeArg) -> Self {
        match m {
            GenModeArg::Random => GenMode::Random,
            GenModeArg::ConditionalIndep => GenMode::ConditionalIndep,
            GenModeArg::JointIndep => GenMode::JointIndep,
            GenModeArg::MutualIndep => GenMode::MutualIndep,
            GenModeArg::FromLoglinear => GenMode::FromLoglinear,
        }
    }
}

#[derive(Debug, Args)]
struct GenArgs {
    /// Generator spec JSON; replaces the mode and level flags.
    #[arg(long, conflicts_with_all = ["mode", "levels"])]
    spec: Option<PathBuf>,
    #[arg(long, value_enum, required_unless_present = "spec")]
    mode: Option<GenModeArg>,
    #[arg(long, value_delimiter = ',', required_unless_present = "spec")]
    levels: Option<Vec<usize>>,
    #[arg(long = "A", value_parser = parse_set)]
    a: Option<VarSet>,
    #[arg(long = "B", value_parser = parse_set)]
    b: Option<VarSet>,
    #[arg(long = "C", value_parser = parse_set)]
    c: Option<VarSet>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    concentration: Option<f64>,
    /// Output table file; the extension picks JSON or CSV. Without it the
    /// table is printed as JSON.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn parse_set(s: &str) -> std::result::Result<VarSet, String> {
    let trimmed = s.trim();
    if trimmed.is_empty() || trimmed == "-" {
        return Ok(VarSet::EMPTY);
    }
    let ids = trimmed
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    VarSet::from_one_based(ids.iter().copied()).ok_or_else(|| {
        format!(
            "variables are numbered from 1 to {}",
            crate::varset::MAX_VARS
        )
    })
}

fn parse_tol(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err("tolerance must be a positive number".into())
    }
}

/// A command's outcome in both output formats.
struct Output {
    json: String,
    text: String,
}

impl Output {
    fn new<T: Serialize>(report: &Report<T>, text: String) -> Self {
        Output {
            json: report.to_json(),
            text,
        }
    }
}

/// Parses `args` (including the program name) and runs the command, writing
/// the report to `out` and diagnostics to `err`. Returns the exit status.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{e}");
                    EXIT_USAGE
                }
            };
        }
    };
    let tol = cli.tol.map(Tolerance::with_eq).unwrap_or_default();
    match dispatch(&cli.command, tol) {
        Ok(output) => {
            let body = match cli.format {
                Format::Json => output.json,
                Format::Text => output.text,
            };
            let _ = writeln!(out, "{}", body.trim_end());
            EXIT_OK
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &MllError) -> i32 {
    if e.is_internal() {
        EXIT_BREACH
    } else {
        EXIT_INPUT
    }
}

fn dispatch(command: &Command, tol: Tolerance) -> Result<Output> {
    match command {
        Command::Params(a) => params(a, tol),
        Command::Collapse(a) => collapse(a, tol),
        Command::Independence(a) => independence(a, tol),
        Command::Decompose(a) => decompose(a, tol),
        Command::Classify(a) => classify_cmd(a, tol),
        Command::Gen(a) => gen(a, tol),
    }
}

fn load(arg: &TableArg) -> Result<(Table, InputDigest)> {
    let table = io::parse_table(&arg.table, arg.table_format.map(Into::into))?;
    Ok((table, InputDigest::of_file(&arg.table)?))
}

fn cell_text(cell: &[usize]) -> String {
    let parts: Vec<String> = cell.iter().map(|c| c.to_string()).collect();
    format!("({})", parts.join(","))
}

fn values_text(values: &[MllValue]) -> String {
    let mut s = String::new();
    for v in values {
        let _ = writeln!(
            s,
            "lambda {} in {} at {} = {:.12}",
            v.effect,
            v.margin,
            cell_text(&v.cell),
            v.value
        );
    }
    s
}

fn params(a: &ParamsArgs, tol: Tolerance) -> Result<Output> {
    let (table, digest) = load(&a.table)?;
    let mut report_query = Vec::new();
    let values: Vec<MllValue> = if let Some(path) = &a.spec {
        let spec: MarginalSpec = io::read_json(path)?;
        report_query.push(("spec", serde_json::to_value(&spec).unwrap()));
        let set = evaluate_spec(&table, &spec)?;
        if a.nonredundant {
            set.non_redundant()
        } else {
            set.values()
        }
    } else {
        let margins: Vec<VarSet> = match a.margin {
            Some(m) => vec![m],
            None if a.effect.is_some() => vec![table.vars()],
            None => table.vars().subsets(),
        };
        let mut all = Vec::new();
        for margin in margins {
            table.require_subset(margin)?;
            let set = match a.effect {
                Some(effect) => {
                    let mut one = crate::mll::MllSet::new();
                    crate::mll::check_nested(&table, effect, margin)?;
                    let t = LogMargin::new(&table, margin)?.lambda(effect);
                    one.insert(crate::mll::EffectMargin { effect, margin }, t);
                    one
                }
                None => expand_log_linear(&table, margin)?,
            };
            all.extend(if a.nonredundant {
                set.non_redundant()
            } else {
                set.values()
            });
        }
        if let Some(at) = &a.at {
            let effect = a.effect.expect("clap enforces");
            let margin = a.margin.unwrap_or(table.vars());
            let value = crate::mll::lambda(&table, effect, margin, at)?;
            all = vec![MllValue {
                effect,
                margin,
                cell: at.clone(),
                value,
            }];
        }
        all
    };
    let text = values_text(&values);
    let mut report = Report::new("params", tol, &values)
        .with_query("margin", a.margin)
        .with_query("effect", a.effect)
        .with_query("at", &a.at)
        .with_query("nonredundant", a.nonredundant)
        .with_input(digest);
    for (k, v) in report_query {
        report = report.with_query(k, v);
    }
    Ok(Output::new(&report, text))
}

fn collapse_text(r: &CollapseReport) -> String {
    let mut s = format!(
        "{:?} collapse of {} onto {} w.r.t. effect {}{}: {}\n",
        r.kind,
        r.outer,
        r.margin,
        r.effect,
        r.core.map(|c| format!(" (core {c})")).unwrap_or_default(),
        if r.verdict { "holds" } else { "fails" }
    );
    for c in &r.conditions {
        let _ = writeln!(
            s,
            "  {:<18} {:.3e} (threshold {:.1e}) at {} {}",
            c.name,
            c.residual,
            c.threshold,
            c.vars,
            cell_text(&c.cell)
        );
    }
    for z in &r.nonvanishing {
        let _ = writeln!(s, "  nonvanishing {} max {:.3e}", z.effect, z.residual);
    }
    s
}

fn collapse(a: &CollapseArgs, tol: Tolerance) -> Result<Output> {
    let (table, digest) = load(&a.table)?;
    let mut query = CollapseQuery::new(a.effect, a.margin, a.outer).with_tol(tol);
    query.core = a.core;
    query.strict = a.strict;
    let result = check(&query, &table)?;
    let text = collapse_text(&result);
    let report = Report::new("collapse", tol, &result)
        .with_query("query", query)
        .with_input(digest);
    Ok(Output::new(&report, text))
}

#[derive(Serialize)]
struct IndependenceResult {
    verdict: crate::independence::IndependenceVerdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    suite: Option<crate::independence::SuiteReport>,
}

fn independence(a: &IndependenceArgs, tol: Tolerance) -> Result<Output> {
    let (table, digest) = load(&a.table)?;
    let part = a.blocks.partition();
    let mode: Mode = a.mode.into();
    let verdict = test_independence_with(&table, &part, mode, &tol)?;
    let suite = if a.suite {
        Some(independence_suite_with(&table, &part, mode, &tol)?)
    } else {
        None
    };
    let mut text = format!(
        "{:?} independence of {} and {} given {}: {}\n  parameter evidence {:.3e} ({}), factorization evidence {:.3e}\n",
        mode,
        part.a,
        part.b,
        part.c,
        if verdict.verdict { "holds" } else { "fails" },
        verdict.lambda_evidence,
        verdict.lambda_effect,
        verdict.oracle_evidence
    );
    if let Some(s) = &suite {
        let _ = writeln!(
            text,
            "  strict collapsibility {}; equivalence {}",
            s.strict_collapse,
            if s.equivalence_ok { "ok" } else { "violated" }
        );
    }
    let result = IndependenceResult { verdict, suite };
    let report = Report::new("independence", tol, &result)
        .with_query("mode", mode)
        .with_query("partition", part)
        .with_query("suite", a.suite)
        .with_input(digest);
    Ok(Output::new(&report, text))
}

fn decompose(a: &DecomposeArgs, tol: Tolerance) -> Result<Output> {
    let (table, digest) = load(&a.table)?;
    let d = decompose_lambda(&table, a.effect, a.a, a.b)?;
    let mut text = format!(
        "lambda {} in {} = marginal part + conditional part (residual {:.3e})\n",
        d.effect,
        a.a.union(a.b),
        d.residual
    );
    for (i, cell) in d.lambda_joint.cells().enumerate() {
        let _ = writeln!(
            text,
            "  {} {:.12} = {:.12} + {:.12}",
            cell_text(&cell),
            d.lambda_joint.data()[i],
            d.lambda_given.data()[i],
            d.conditional.data()[i]
        );
    }
    let report = Report::new("decompose", tol, &d)
        .with_query("effect", a.effect)
        .with_query("A", a.a)
        .with_query("B", a.b)
        .with_input(digest);
    Ok(Output::new(&report, text))
}

fn classify_cmd(a: &ClassifyArgs, tol: Tolerance) -> Result<Output> {
    let spec: MarginalSpec = io::read_json(&a.spec)?;
    let mut inputs = vec![InputDigest::of_file(&a.spec)?];
    let vars = match (&a.table, a.vars) {
        (Some(path), _) => {
            inputs.push(InputDigest::of_file(path)?);
            io::parse_table(path, None)?.vars()
        }
        (None, Some(v)) => v,
        (None, None) => spec.union(),
    };
    let c = classify(&spec, vars)?;
    let mut text = format!(
        "hierarchical: {}\ncomplete: {}\n",
        c.hierarchical, c.complete
    );
    for v in &c.violations {
        let _ = writeln!(text, "  {v}");
    }
    let mut report = Report::new("classify", tol, &c).with_query("vars", vars);
    for i in inputs {
        report = report.with_input(i);
    }
    Ok(Output::new(&report, text))
}

fn gen_spec(a: &GenArgs) -> Result<GenSpec> {
    let mut spec = match &a.spec {
        Some(path) => io::read_json::<GenSpec>(path)?,
        None => GenSpec::random(a.levels.as_deref().unwrap_or_default(), 0),
    };
    if let Some(m) = a.mode {
        spec.mode = m.into();
    }
    if a.a.is_some() || a.b.is_some() || a.c.is_some() {
        spec.partition = Some(Partition::new(
            a.a.unwrap_or(VarSet::EMPTY),
            a.b.unwrap_or(VarSet::EMPTY),
            a.c.unwrap_or(VarSet::EMPTY),
        ));
    }
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    if let Some(c) = a.concentration {
        spec.concentration = c;
    }
    Ok(spec)
}

#[derive(Serialize)]
struct GenResult<'a> {
    spec: &'a GenSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    output: Option<InputDigest>,
    cells: usize,
}

fn gen(a: &GenArgs, tol: Tolerance) -> Result<Output> {
    let spec = gen_spec(a)?;
    let table = generate(&spec)?;
    let Some(path) = &a.output else {
        let json = io::table_to_json(&table);
        return Ok(Output {
            text: json.clone(),
            json,
        });
    };
    io::write_table(&table, path, None)?;
    let written = InputDigest::of_file(path)?;
    let text = format!(
        "wrote {} ({} cells, sha256 {})\n",
        Path::new(&written.path).display(),
        table.len(),
        written.sha256
    );
    let result = GenResult {
        spec: &spec,
        output: Some(written),
        cells: table.len(),
    };
    let report = Report::new("gen", tol, &result);
    Ok(Output::new(&report, text))
}
