use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use polynet::frontend::{self, NamedProperty, NetFormat};
use polynet::reducer::{reduce, ReducePolicy};
use polynet::runner::{run_query, silenced, Method, OutputFormat, RunConfig};
use polynet::solver::SolverConfig;
use polynet::{Marking, PetriNet};

#[derive(Parser)]
#[command(name = "polynet", version, about = "Reachability checking for Petri nets with structural reductions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decide EF/AG properties of a net.
    Check(CheckArgs),
    /// Reduce a net and print the result with its linear system.
    Reduce(ReduceArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Net,
    Pnml,
}

impl From<FormatArg> for NetFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Net => NetFormat::Tina,
            FormatArg::Pnml => NetFormat::Pnml,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Bmc,
    Pdr,
    Auto,
}

#[derive(clap::Args)]
struct NetArgs {
    /// Net file (TINA .net or PNML).
    net: PathBuf,
    /// Input format; guessed from the extension when omitted.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Keep transition labels instead of treating every transition as silent.
    #[arg(long)]
    keep_labels: bool,
}

#[derive(clap::Args)]
struct CheckArgs {
    #[command(flatten)]
    net: NetArgs,
    /// Inline property, e.g. "AG p0 + p6 <= 9".
    #[arg(short = 'q', long, conflicts_with = "properties")]
    property: Option<String>,
    /// Property file: one property per line, or MCC XML.
    #[arg(short = 'p', long)]
    properties: Option<PathBuf>,
    /// Procedures to run; `auto` adds PDR only for upward-closed violations.
    #[arg(short, long, value_enum, value_delimiter = ',', default_value = "auto")]
    method: Vec<MethodArg>,
    #[arg(long)]
    no_reduce: bool,
    /// Per-property budget in seconds.
    #[arg(short, long, default_value_t = 60.0)]
    timeout: f64,
    /// SMT solver binary speaking SMT-LIB on stdin [default: $POLYNET_SOLVER, then z3].
    #[arg(long)]
    solver: Option<PathBuf>,
    /// Cross-check every answer by explicit state-space exploration.
    #[arg(long)]
    oracle: bool,
    /// Print one `FORMULA ...` line per property.
    #[arg(long)]
    machine: bool,
}

#[derive(clap::Args)]
struct ReduceArgs {
    #[command(flatten)]
    net: NetArgs,
    /// Write the reduced net here instead of stdout.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Output format of the reduced net.
    #[arg(long, value_enum, default_value = "net")]
    output_format: FormatArg,
    /// Comma-separated rules to try, in order.
    #[arg(long, value_delimiter = ',')]
    rules: Vec<String>,
}

fn load_net(args: &NetArgs) -> Result<(PetriNet, Marking)> {
    let text = fs::read_to_string(&args.net)
        .with_context(|| format!("cannot read {}", args.net.display()))?;
    let format = args
        .format
        .map(NetFormat::from)
        .unwrap_or_else(|| NetFormat::from_path(&args.net));
    let (net, m) = frontend::parse_net(&text, format)
        .with_context(|| format!("{}", args.net.display()))?;
    info!("{}: {} places, {} transitions", args.net.display(), net.num_places(), net.num_transitions());
    Ok((net, m))
}

fn load_properties(args: &CheckArgs, net: &PetriNet) -> Result<Vec<NamedProperty>> {
    match (&args.property, &args.properties) {
        (Some(text), _) => {
            let (quantifier, formula) =
                frontend::parse_property(text, net).context("inline property")?;
            Ok(vec![NamedProperty { id: stem(&args.net.net), quantifier, formula }])
        }
        (None, Some(path)) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("cannot read {}", path.display()))?;
            let props = frontend::parse_properties(&text, net)
                .with_context(|| format!("{}", path.display()))?;
            if props.is_empty() {
                bail!("{} contains no property", path.display());
            }
            Ok(props)
        }
        (None, None) => bail!("give a property with --property or --properties"),
    }
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "property".into())
}

fn check(args: CheckArgs) -> Result<ExitCode> {
    let (net, m0) = load_net(&args.net)?;
    let props = load_properties(&args, &net)?;
    if !(args.timeout.is_finite() && args.timeout > 0.0) {
        bail!("timeout must be a positive number of seconds");
    }
    let mut solver = SolverConfig::default();
    if let Some(path) = args.solver {
        solver.path = path;
    }
    let methods = args
        .method
        .iter()
        .map(|m| match m {
            MethodArg::Bmc => Method::Bmc,
            MethodArg::Pdr => Method::Pdr,
            MethodArg::Auto => Method::Auto,
        })
        .collect();
    let config = RunConfig {
        methods,
        reductions: !args.no_reduce,
        hide_labels: !args.net.keep_labels,
        timeout: Duration::from_secs_f64(args.timeout),
        solver,
        oracle_check: args.oracle,
        format: if args.machine { OutputFormat::Machine } else { OutputFormat::Human },
        ..RunConfig::default()
    };
    config.validate()?;

    let mut unknown = false;
    let mut disagreement = false;
    for prop in &props {
        let report = run_query(&net, &m0, prop, &config);
        println!("{}", report.render(config.format));
        unknown |= report.truth().is_none();
        disagreement |= report.oracle_agreement == Some(false);
    }
    if disagreement {
        bail!("the explicit-state oracle disagrees with at least one verdict");
    }
    Ok(if unknown { ExitCode::from(2) } else { ExitCode::SUCCESS })
}

fn reduce_cmd(args: ReduceArgs) -> Result<ExitCode> {
    let (net, m0) = load_net(&args.net)?;
    let net = if args.net.keep_labels { net } else { silenced(&net) };
    let mut policy = ReducePolicy::default();
    if !args.rules.is_empty() {
        policy.rules = args
            .rules
            .iter()
            .map(|r| r.parse().map_err(anyhow::Error::msg))
            .collect::<Result<_>>()?;
    }
    let trace = reduce(&net, &m0, &policy);
    let printed = frontend::print_net(&trace.net, &trace.marking, args.output_format.into());
    match &args.output {
        Some(path) => fs::write(path, &printed)
            .with_context(|| format!("cannot write {}", path.display()))?,
        None => print!("{printed}"),
    }
    let ratio = trace.ratio();
    eprintln!(
        "# {} -> {} places, {} -> {} transitions, ratio {}/{}",
        trace.initial_net.num_places(),
        trace.net.num_places(),
        trace.initial_net.num_transitions(),
        trace.net.num_transitions(),
        ratio.numer(),
        ratio.denom()
    );
    for step in &trace.steps {
        eprintln!("# {} {}", step.rule.name(), step.matched.join(" "));
    }
    for c in trace.system.constraints() {
        eprintln!("# {c}");
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Check(args) => check(args),
        Command::Reduce(args) => reduce_cmd(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
