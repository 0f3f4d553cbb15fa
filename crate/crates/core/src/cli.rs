//! The `datactl` command line: argument parsing, file loading and report
//! rendering for every subcommand, with a fixed exit-code contract.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::arch::{
    enumerate_states, max_states_from_env, ArchEvent, ArchEventKind, Architecture, Universe, Value,
};
use crate::compliance::{self, check_trace, ComplianceError};
use crate::dsl::{
    parse_arch_trace, parse_architecture, parse_document, parse_has_query, parse_policy,
    parse_trace, render_event, serialize_architecture, DocKind, ParseError, Payload,
};
use crate::logic::{deduce, eval_on, render_derivation, LogicError};
use crate::mapping::{
    check_correspondence, compare_architectures, compare_models, derive_architecture,
    derive_from_trace, image_trace, merge, DeriveOptions, MappingError, PropertyStatus, Relation,
    SetRelation,
};
use crate::model::{DataId, PolicyModel, UserId};
use crate::semantics::{possible_events, AbstractEvent};

pub const EXIT_OK: i32 = 0;
pub const EXIT_NEGATIVE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_LIMIT: i32 = 3;

/// Exit code and rendered output of one invocation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandResult {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl CommandResult {
    fn ok(negative: bool, stdout: String) -> Self {
        Self {
            code: if negative { EXIT_NEGATIVE } else { EXIT_OK },
            stdout,
            stderr: String::new(),
        }
    }
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(ParseError),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Compliance(#[from] ComplianceError),
    #[error(transparent)]
    Mapping(Box<MappingError>),
    #[error(transparent)]
    Logic(LogicError),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Logic(LogicError::Enumerate(_)) => EXIT_LIMIT,
            CliError::Mapping(e)
                if matches!(**e, MappingError::Logic(LogicError::Enumerate(_))) =>
            {
                EXIT_LIMIT
            }
            _ => EXIT_USAGE,
        }
    }
}

impl From<MappingError> for CliError {
    fn from(e: MappingError) -> Self {
        CliError::Mapping(Box::new(e))
    }
}

impl From<LogicError> for CliError {
    fn from(e: LogicError) -> Self {
        CliError::Logic(e)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum)]
pub enum Format {
    #[default]
    Text,
    Tsv,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    #[default]
    Deduce,
    Enumerate,
    Both,
}

#[derive(Debug, Parser)]
#[command(
    name = "datactl",
    version,
    about = "Data-control policy and architecture toolchain"
)]
struct Cli {
    /// Output rendering.
    #[arg(long, value_enum, global = true, default_value_t = Format::Text)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct Bounds {
    /// Longest trace considered by enumeration.
    #[arg(long, default_value_t = 4)]
    max_len: usize,
    /// State-count guard; defaults to DATACTL_MAX_STATES or 1000000.
    #[arg(long)]
    max_states: Option<usize>,
    /// Users beyond those the architecture names (comma separated).
    #[arg(long, value_delimiter = ',')]
    users: Vec<String>,
    /// Values data may take (comma separated); defaults to the trace's values or `v`.
    #[arg(long, value_delimiter = ',')]
    values: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse documents; the kind follows the extension (.dcp .dct .dca .dcat .dcq).
    Validate {
        files: Vec<PathBuf>,
        /// Policy that policy traces refer to.
        #[arg(long)]
        policy: Option<PathBuf>,
    },
    /// Check a policy trace against C1–C5.
    CheckTrace { policy: PathBuf, trace: PathBuf },
    /// Derive an architecture from events or a trace.
    DeriveArch {
        policy: PathBuf,
        /// Events (templates allowed) read under each datum's declared policy.
        #[arg(long, conflicts_with = "trace", required_unless_present = "trace")]
        events: Option<PathBuf>,
        /// A concrete trace, read under the policies its execution reaches.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        simplify_friends: bool,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Decide a HAS query by deduction, by state enumeration, or both.
    EvalHas {
        arch: PathBuf,
        query: PathBuf,
        /// Architecture trace the deduction runs over.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Mode::Deduce)]
        mode: Mode,
        #[command(flatten)]
        bounds: Bounds,
    },
    /// Check P1–P6 between policy traces and the architecture derived from them.
    CheckCorrespondence {
        policy: PathBuf,
        #[arg(required = true)]
        traces: Vec<PathBuf>,
        /// Use this architecture instead of deriving one.
        #[arg(long)]
        arch: Option<PathBuf>,
        #[arg(long)]
        simplify_friends: bool,
    },
    /// Compare two policy files datum by datum.
    ComparePolicies { left: PathBuf, right: PathBuf },
    /// Compare two architectures as sets of items.
    CompareArchs { left: PathBuf, right: PathBuf },
    /// Enumerate the reachable states of an architecture.
    Enumerate {
        arch: PathBuf,
        #[command(flatten)]
        bounds: Bounds,
    },
    /// List the possible event templates of each datum.
    Events {
        policy: PathBuf,
        #[arg(long)]
        datum: Option<String>,
    },
}

/// Run one invocation; `argv[0]` is the program name.
pub fn dispatch<I, T>(argv: I) -> CommandResult
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            return if code == EXIT_OK {
                CommandResult {
                    code,
                    stdout: text,
                    stderr: String::new(),
                }
            } else {
                CommandResult {
                    code,
                    stdout: String::new(),
                    stderr: text,
                }
            };
        }
    };
    match run(cli) {
        Ok(r) => r,
        Err(e) => CommandResult {
            code: e.code(),
            stdout: String::new(),
            stderr: format!("error: {e}\n"),
        },
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })
}

fn with_file<T>(path: &Path, r: Result<T, ParseError>) -> Result<T, CliError> {
    r.map_err(|e| CliError::Parse(e.with_file(path.display().to_string())))
}

fn load_policy(path: &Path) -> Result<PolicyModel, CliError> {
    with_file(path, parse_policy(&read(path)?))
}

fn load_trace(path: &Path, model: &PolicyModel) -> Result<Vec<AbstractEvent>, CliError> {
    with_file(path, parse_trace(&read(path)?, model))
}

fn load_arch(path: &Path) -> Result<Architecture, CliError> {
    with_file(path, parse_architecture(&read(path)?))
}

fn run(cli: Cli) -> Result<CommandResult, CliError> {
    let fmt = cli.format;
    match cli.command {
        Command::Validate { files, policy } => validate(&files, policy.as_deref(), fmt),
        Command::CheckTrace { policy, trace } => {
            let model = load_policy(&policy)?;
            let trace = load_trace(&trace, &model)?;
            let report = check_trace(&model, &trace)?;
            let out = match fmt {
                Format::Text => compliance::render(&report),
                Format::Tsv => {
                    let mut s = String::from("rule\tindex\tdatum\tdetail\n");
                    for v in &report.violations {
                        let _ = writeln!(s, "{v}");
                    }
                    s
                }
            };
            Ok(CommandResult::ok(!report.compliant, out))
        }
        Command::DeriveArch {
            policy,
            events,
            trace,
            simplify_friends,
            output,
        } => {
            let model = load_policy(&policy)?;
            let opts = DeriveOptions { simplify_friends };
            let pa = match (events, trace) {
                (Some(path), _) => derive_architecture(&model, &load_trace(&path, &model)?, opts)?,
                (None, Some(path)) => derive_from_trace(&model, &load_trace(&path, &model)?, opts)?,
                (None, None) => {
                    return Err(CliError::Usage(
                        "one of --events or --trace is required".into(),
                    ))
                }
            };
            let text = serialize_architecture(&pa);
            match output {
                Some(path) => {
                    std::fs::write(&path, &text).map_err(|source| CliError::Io { path, source })?;
                    Ok(CommandResult::ok(false, String::new()))
                }
                None => Ok(CommandResult::ok(false, text)),
            }
        }
        Command::EvalHas {
            arch,
            query,
            trace,
            mode,
            bounds,
        } => eval_has(&arch, &query, trace.as_deref(), mode, &bounds, fmt),
        Command::CheckCorrespondence {
            policy,
            traces,
            arch,
            simplify_friends,
        } => correspondence(&policy, &traces, arch.as_deref(), simplify_friends, fmt),
        Command::ComparePolicies { left, right } => {
            let c = compare_models(&load_policy(&left)?, &load_policy(&right)?)?;
            let mut out = String::new();
            for (id, cmp) in &c.data {
                match cmp {
                    None => {
                        let _ = writeln!(out, "{id}\tmissing");
                    }
                    Some(cmp) => {
                        let _ = writeln!(out, "{id}\t{}", cmp.overall);
                        for (component, r) in &cmp.components {
                            if *r != Relation::Equal {
                                let _ = writeln!(out, "{id}\t{component}\t{r}");
                            }
                        }
                    }
                }
            }
            let _ = writeln!(out, "overall\t{}", c.overall);
            let out = match fmt {
                Format::Tsv => out,
                Format::Text => format!(
                    "left is {} than right\n{}",
                    c.overall,
                    out.replace('\t', " ")
                ),
            };
            let out = out.replace("is equal than", "is equal to");
            Ok(CommandResult::ok(c.overall != Relation::Equal, out))
        }
        Command::CompareArchs { left, right } => {
            let c = compare_architectures(&load_arch(&left)?, &load_arch(&right)?);
            let mut out = String::new();
            match fmt {
                Format::Text => {
                    let _ = writeln!(out, "{}", c.relation);
                    if c.relation != SetRelation::Equal {
                        out.push_str(&c.diff);
                    }
                }
                Format::Tsv => {
                    let _ = writeln!(out, "relation\t{}", c.relation);
                    for item in &c.only_left {
                        let _ = writeln!(out, "-\t{item}");
                    }
                    for item in &c.only_right {
                        let _ = writeln!(out, "+\t{item}");
                    }
                }
            }
            Ok(CommandResult::ok(c.relation != SetRelation::Equal, out))
        }
        Command::Enumerate { arch, bounds } => {
            let pa = load_arch(&arch)?;
            let universe = universe(&bounds, &[]);
            let e = enumerate_states(&pa, bounds.max_len, &universe, max_states(&bounds))
                .map_err(|e| CliError::Logic(e.into()))?;
            let out = match fmt {
                Format::Text => format!(
                    "{} reachable states ({} nodes explored); {}\n",
                    e.states.len(),
                    e.explored,
                    if e.complete {
                        "complete"
                    } else {
                        "bounded by --max-len"
                    }
                ),
                Format::Tsv => format!(
                    "states\texplored\tcomplete\n{}\t{}\t{}\n",
                    e.states.len(),
                    e.explored,
                    e.complete
                ),
            };
            Ok(CommandResult::ok(false, out))
        }
        Command::Events { policy, datum } => {
            let model = load_policy(&policy)?;
            let mut out = String::new();
            for (id, d) in &model.data {
                if datum.as_deref().is_some_and(|want| want != id.as_str()) {
                    continue;
                }
                for (k, template) in possible_events(&model.sets, &d.data, &d.policy)
                    .iter()
                    .enumerate()
                {
                    let _ = match fmt {
                        Format::Text => writeln!(out, "Ev{}: {template}", k + 1),
                        Format::Tsv => writeln!(
                            out,
                            "{id}\t{}\t{}",
                            k + 1,
                            render_event(&template.at(k as u64 + 1))
                        ),
                    };
                }
            }
            if let Some(want) = datum {
                if model.datum(&DataId::new(want.clone())).is_none() {
                    return Err(CliError::Usage(format!("unknown datum {want}")));
                }
            }
            Ok(CommandResult::ok(false, out))
        }
    }
}

fn validate(
    files: &[PathBuf],
    policy: Option<&Path>,
    fmt: Format,
) -> Result<CommandResult, CliError> {
    let model = policy.map(load_policy).transpose()?;
    let mut out = String::new();
    for path in files {
        let kind = path
            .extension()
            .and_then(|e| e.to_str())
            .and_then(DocKind::from_extension)
            .ok_or_else(|| CliError::Usage(format!("{}: unknown document kind", path.display())))?;
        if kind == DocKind::Trace && model.is_none() {
            return Err(CliError::Usage(format!(
                "{}: policy traces need --policy",
                path.display()
            )));
        }
        let doc = with_file(path, parse_document(kind, &read(path)?, model.as_ref()))?;
        let items = match &doc.payload {
            Payload::Policy(m) => m.data.len(),
            Payload::Trace(t) => t.len(),
            Payload::Architecture(a) => a.activities.len(),
            Payload::ArchTrace(t) => t.len(),
            Payload::Query(_) => 1,
        };
        let _ = match fmt {
            Format::Text => writeln!(out, "{}: ok ({:?}, {items} items)", path.display(), kind),
            Format::Tsv => writeln!(out, "{}\t{}\tok\t{items}", path.display(), kind.extension()),
        };
    }
    Ok(CommandResult::ok(false, out))
}

fn max_states(bounds: &Bounds) -> usize {
    bounds.max_states.unwrap_or_else(max_states_from_env)
}

fn universe(bounds: &Bounds, trace: &[ArchEvent]) -> Universe {
    let mut values: Vec<Value> = bounds.values.iter().map(Value::atom).collect();
    if values.is_empty() {
        for e in trace {
            if let Some(v) = event_value(&e.kind) {
                if !values.contains(v) {
                    values.push(v.clone());
                }
            }
        }
    }
    if values.is_empty() {
        values.push(Value::atom("v"));
    }
    Universe {
        users: bounds
            .users
            .iter()
            .map(|u| UserId::from(u.as_str()))
            .collect(),
        values,
        times: (1..=bounds.max_len as u64).collect(),
        ids: Vec::new(),
    }
}

fn event_value(kind: &ArchEventKind) -> Option<&Value> {
    match kind {
        ArchEventKind::Own { value, .. }
        | ArchEventKind::DeleteReq { value, .. }
        | ArchEventKind::Delete { value, .. }
        | ArchEventKind::Act { value, .. } => Some(value),
        ArchEventKind::Group { value, .. } | ArchEventKind::Alias { value, .. } => value.as_ref(),
        _ => None,
    }
}

fn eval_has(
    arch: &Path,
    query: &Path,
    trace: Option<&Path>,
    mode: Mode,
    bounds: &Bounds,
    fmt: Format,
) -> Result<CommandResult, CliError> {
    let pa = load_arch(arch)?;
    let phi = with_file(query, parse_has_query(&read(query)?))?;
    let theta = match trace {
        Some(path) => with_file(path, parse_arch_trace(&read(path)?))?,
        None => Vec::new(),
    };
    let mut out = String::new();
    let mut negative = false;
    if matches!(mode, Mode::Deduce | Mode::Both) {
        let r = deduce(&pa, &theta, &phi)?;
        negative |= !r.derivable();
        match fmt {
            Format::Text => out.push_str(&render_derivation(&r)),
            Format::Tsv => {
                let _ = writeln!(out, "deduce\t{phi}\t{}", r.derivable());
            }
        }
    }
    if matches!(mode, Mode::Enumerate | Mode::Both) {
        let mut u = universe(bounds, &theta);
        u.users.extend(phi.atoms().into_iter().map(|(u, _)| u));
        let e = enumerate_states(&pa, bounds.max_len, &u, max_states(bounds))
            .map_err(|e| CliError::Logic(e.into()))?;
        let v = eval_on(&e, &phi);
        negative |= !v.holds;
        let _ = match fmt {
            Format::Text => writeln!(
                out,
                "{phi}: {} over {} states{}",
                if v.holds { "holds" } else { "does not hold" },
                e.states.len(),
                if v.bounded { " (bounded)" } else { "" }
            ),
            Format::Tsv => writeln!(out, "enumerate\t{phi}\t{}\t{}", v.holds, v.bounded),
        };
    }
    Ok(CommandResult::ok(negative, out))
}

fn correspondence(
    policy: &Path,
    traces: &[PathBuf],
    arch: Option<&Path>,
    simplify_friends: bool,
    fmt: Format,
) -> Result<CommandResult, CliError> {
    let model = load_policy(policy)?;
    let opts = DeriveOptions { simplify_friends };
    let mut runs = Vec::new();
    let mut derived = Architecture::new();
    for path in traces {
        let tau = load_trace(path, &model)?;
        merge(&mut derived, derive_from_trace(&model, &tau, opts)?);
        let theta = image_trace(&model, &tau)?;
        runs.push((tau, theta));
    }
    let pa = match arch {
        Some(path) => load_arch(path)?,
        None => derived,
    };
    let report = check_correspondence(&model, &runs, &pa)?;
    let mut out = String::new();
    for (p, status) in &report.status {
        let _ = match fmt {
            Format::Text => writeln!(out, "{p}: {status}"),
            Format::Tsv => {
                let tag = match status {
                    PropertyStatus::Holds => "holds",
                    PropertyStatus::Fails(_) => "fails",
                    PropertyStatus::Inapplicable => "inapplicable",
                };
                writeln!(out, "{p}\t{tag}")
            }
        };
    }
    if fmt == Format::Text && report.bounded {
        out.push_str("(checked over the supplied traces only)\n");
    }
    Ok(CommandResult::ok(!report.all_hold(), out))
}
