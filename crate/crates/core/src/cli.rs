//! Command-line interface.
//!
//! Exit status: 0 success, 1 usage error, 2 data error, 3 numerical failure.
//! Results go to standard output or `--out`; diagnostics go to standard error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::estimation::EstimationResult;
use crate::graphs::GroupedNetwork;
use crate::identification::{diagnose, eigenvalue_report, Stack};
use crate::instruments::Normalization;
use crate::io;
use crate::montecarlo::{self, McConfig, TrueParams};
use crate::pipeline::{self, FirstStage, InstrumentOptions, Method};
use crate::regularization::SchemeKind;
use crate::selection::{write_curve, Criterion};
use crate::transforms::PanelData;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "NETREG_THREADS";

#[derive(Debug, Parser)]
#[command(name = "netreg", version, about = "Regularized 2SLS for network models")]
pub struct Cli {
    /// File of `key = value` lines supplying default flag values.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Write results here instead of standard output.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte Carlo tables on simulated networks.
    Simulate(SimulateArgs),
    /// Estimate the model from CSV data.
    Estimate(EstimateArgs),
    /// Identification diagnostics for a network.
    Diagnose(DiagnoseArgs),
    /// Export the selection curve.
    Select(SelectArgs),
    /// Write a simulated sample as CSV.
    Generate(GenerateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CriterionArg {
    Cp,
    Gcv,
    Loo,
}

impl From<CriterionArg> for Criterion {
    fn from(c: CriterionArg) -> Self {
        match c {
            CriterionArg::Cp => Criterion::MallowsCp,
            CriterionArg::Gcv => Criterion::Gcv,
            CriterionArg::Loo => Criterion::LeaveOneOut,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    #[value(name = "T", alias = "t")]
    T,
    #[value(name = "LF", alias = "lf")]
    Lf,
    #[value(name = "PC", alias = "pc")]
    Pc,
    Classical,
    BiasCorrected,
}

impl SchemeArg {
    fn kind(self) -> Option<SchemeKind> {
        match self {
            SchemeArg::T => Some(SchemeKind::Tikhonov),
            SchemeArg::Lf => Some(SchemeKind::LandweberFridman),
            SchemeArg::Pc => Some(SchemeKind::PrincipalComponents),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NormalizeArg {
    None,
    UnitVariance,
    Standardized,
}

impl From<NormalizeArg> for Normalization {
    fn from(n: NormalizeArg) -> Self {
        match n {
            NormalizeArg::None => Normalization::None,
            NormalizeArg::UnitVariance => Normalization::UnitVariance,
            NormalizeArg::Standardized => Normalization::Standardized,
        }
    }
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 30)]
    pub groups: usize,
    /// Group size.
    #[arg(long, default_value_t = 10)]
    pub size: usize,
    #[arg(long, default_value_t = 3)]
    pub max_links: usize,
    #[arg(long, default_value_t = 500)]
    pub reps: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = CriterionArg::Cp)]
    pub criterion: CriterionArg,
    /// Error variance.
    #[arg(long, default_value_t = 1.0)]
    pub sigma2: f64,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    /// Run all twelve (max links, size, groups) configurations.
    #[arg(long, conflicts_with_all = ["groups", "size", "max_links"])]
    pub sweep: bool,
}

#[derive(Debug, Args, Clone)]
pub struct DataArgs {
    /// Node table: group_id,node_id,x1*,x2*,y.
    #[arg(long, value_name = "PATH")]
    pub data: PathBuf,
    /// Edge list: group_id,src,dst[,weight].
    #[arg(long, value_name = "PATH")]
    pub edges: PathBuf,
    /// Row-normalize W.
    #[arg(long)]
    pub row_normalize: bool,
    /// Highest power of W in the instrument set; defaults from the spectrum of W.
    #[arg(long)]
    pub order: Option<usize>,
    /// Leave out the Bonacich columns W^p ι.
    #[arg(long)]
    pub no_bonacich: bool,
    /// Leave out the M-lagged copy of the instruments.
    #[arg(long)]
    pub no_m_lags: bool,
    #[arg(long, value_enum, default_value_t = NormalizeArg::UnitVariance)]
    pub normalize: NormalizeArg,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value_t = SchemeArg::T)]
    pub scheme: SchemeArg,
    #[arg(long, value_enum, default_value_t = CriterionArg::Cp)]
    pub criterion: CriterionArg,
    /// Fixed grid parameter (α for T, iterations for LF, components for PC)
    /// instead of data-driven selection.
    #[arg(long, conflicts_with = "grid")]
    pub alpha: Option<f64>,
    /// Comma-separated selection grid.
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct DiagnoseArgs {
    #[arg(long, value_name = "PATH")]
    pub edges: PathBuf,
    /// Node table; without it only the spectrum of W is checked.
    #[arg(long, value_name = "PATH")]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub row_normalize: bool,
    /// Eigenvalue clustering tolerance.
    #[arg(long, default_value_t = crate::identification::DEFAULT_EIGEN_TOL)]
    pub tol: f64,
    /// Use the stack for models without correlated errors.
    #[arg(long)]
    pub no_correlation: bool,
    /// Print key=value lines.
    #[arg(long)]
    pub key_values: bool,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct SelectArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value_t = SchemeArg::T)]
    pub scheme: SchemeArg,
    #[arg(long, value_enum, default_value_t = CriterionArg::Cp)]
    pub criterion: CriterionArg,
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 30)]
    pub groups: usize,
    #[arg(long, default_value_t = 10)]
    pub size: usize,
    #[arg(long, default_value_t = 3)]
    pub max_links: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma2: f64,
    /// Output edge list.
    #[arg(long, value_name = "PATH")]
    pub edges_out: PathBuf,
    /// Output node table.
    #[arg(long, value_name = "PATH")]
    pub nodes_out: PathBuf,
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        return EXIT_NUMERICAL;
    }
    match e {
        Error::InvalidArgument(_) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

/// Parses `argv`, runs the subcommand and returns the exit status.
pub fn parse_and_dispatch<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match parse_with_config(&argv) {
        Ok(cli) => cli,
        Err(Parse::Clap(e)) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            if code == EXIT_OK {
                let _ = write!(stdout, "{text}");
            } else {
                let _ = write!(stderr, "{text}");
            }
            return code;
        }
        Err(Parse::Config(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            let _ = writeln!(stderr, "{}", Cli::command().render_usage());
            return EXIT_USAGE;
        }
    };
    let mut buf = Vec::new();
    let result = dispatch(&cli.command, &mut buf, stderr);
    match result {
        Ok(()) => {
            let written = match &cli.out {
                Some(path) => std::fs::write(path, &buf)
                    .map_err(|e| Error::Data(format!("cannot write {}: {e}", path.display()))),
                None => stdout.write_all(&buf).map_err(Error::from),
            };
            match written {
                Ok(()) => EXIT_OK,
                Err(e) => {
                    let _ = writeln!(stderr, "error: {e}");
                    exit_code(&e)
                }
            }
        }
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}

enum Parse {
    Clap(clap::Error),
    Config(String),
}

fn parse_with_config(argv: &[OsString]) -> std::result::Result<Cli, Parse> {
    let cli = Cli::try_parse_from(argv).map_err(Parse::Clap)?;
    let Some(path) = cli.config.clone() else {
        return Ok(cli);
    };
    let name = match &cli.command {
        Command::Simulate(_) => "simulate",
        Command::Estimate(_) => "estimate",
        Command::Diagnose(_) => "diagnose",
        Command::Select(_) => "select",
        Command::Generate(_) => "generate",
    };
    let extra = config_args(&path, name).map_err(Parse::Config)?;
    let pos = argv
        .iter()
        .skip(1)
        .position(|a| a == name)
        .map(|p| p + 2)
        .ok_or_else(|| Parse::Config(format!("cannot locate subcommand {name}")))?;
    let mut merged: Vec<OsString> = argv[..pos].to_vec();
    merged.extend(extra.into_iter().map(OsString::from));
    merged.extend(argv[pos..].iter().cloned());
    Cli::try_parse_from(merged).map_err(Parse::Clap)
}

/// Turns `key = value` lines into flags of subcommand `name`. Blank lines and
/// lines starting with `#` are skipped.
fn config_args(path: &Path, name: &str) -> std::result::Result<Vec<String>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let cmd = Cli::command();
    let sub = cmd
        .find_subcommand(name)
        .ok_or_else(|| format!("unknown subcommand {name}"))?;
    let mut out = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("{}:{}: expected key = value", path.display(), k + 1))?;
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        let arg = sub
            .get_arguments()
            .find(|a| a.get_long() == Some(key.as_str()))
            .ok_or_else(|| format!("{}:{}: unknown key '{key}' for {name}", path.display(), k + 1))?;
        if key == "config" || key == "out" {
            return Err(format!("{}:{}: '{key}' cannot be set from a config file", path.display(), k + 1));
        }
        if arg.get_action().takes_values() {
            out.push(format!("--{key}"));
            out.push(value.to_string());
        } else {
            match value {
                "true" | "yes" | "1" => out.push(format!("--{key}")),
                "false" | "no" | "0" => {}
                other => return Err(format!("{}:{}: '{other}' is not a boolean", path.display(), k + 1)),
            }
        }
    }
    Ok(out)
}

fn dispatch(cmd: &Command, out: &mut Vec<u8>, err: &mut dyn Write) -> Result<()> {
    match cmd {
        Command::Simulate(a) => simulate(a, out, err),
        Command::Estimate(a) => estimate(a, out, err),
        Command::Diagnose(a) => diagnose_cmd(a, out),
        Command::Select(a) => select(a, out, err),
        Command::Generate(a) => generate(a, err),
    }
}

/// The twelve simulation designs, ordered by links, then group size, then group count.
pub fn sweep_configs() -> Vec<(usize, usize, usize)> {
    let mut v = Vec::new();
    for max_links in [3, 6, 8] {
        for size in [10, 15] {
            for groups in [30, 60] {
                v.push((groups, size, max_links));
            }
        }
    }
    v
}

fn simulate(a: &SimulateArgs, out: &mut Vec<u8>, err: &mut dyn Write) -> Result<()> {
    let designs = if a.sweep {
        sweep_configs()
    } else {
        vec![(a.groups, a.size, a.max_links)]
    };
    for (k, (groups, size, max_links)) in designs.into_iter().enumerate() {
        let config = McConfig {
            replications: a.reps,
            seed: a.seed,
            criterion: a.criterion.into(),
            truth: TrueParams {
                sigma2: a.sigma2,
                ..TrueParams::default()
            },
            ..McConfig::new(groups, size, max_links)
        };
        let reps = montecarlo::run(&config)?;
        let summary = montecarlo::summarize(&config, &reps);
        let failed = reps.iter().filter(|r| r.rho.is_none()).count();
        if failed > 0 {
            writeln!(err, "warning: {failed} replications failed before estimation")?;
        }
        match a.format {
            Format::Text => {
                if k > 0 {
                    writeln!(out)?;
                }
                montecarlo::write_text(&mut *out, &summary)?;
            }
            Format::Csv => montecarlo::write_csv(&mut *out, &summary, k == 0)?,
        }
    }
    Ok(())
}

struct Prepared {
    network: GroupedNetwork,
    data: PanelData,
    names: Vec<String>,
}

fn load_data(a: &DataArgs) -> Result<Prepared> {
    let edges = io::read_edges_path(&a.edges)?;
    let nodes = io::read_nodes_path(&a.data)?;
    let (network, data) = io::load(&edges, &nodes, a.row_normalize)?;
    let data = data.ok_or_else(|| Error::Data(format!("{} has no y column", a.data.display())))?;
    let mut names = vec!["lambda".to_string()];
    names.extend(nodes.x1_names.iter().map(|s| format!("beta1_{s}")));
    names.extend(nodes.x2_names.iter().map(|s| format!("beta2_{s}")));
    Ok(Prepared { network, data, names })
}

fn first_stage<'a>(p: &'a Prepared, a: &DataArgs) -> Result<FirstStage<'a>> {
    let opts = InstrumentOptions {
        order: a.order,
        bonacich: !a.no_bonacich,
        m_lags: !a.no_m_lags,
        normalization: a.normalize.into(),
    };
    pipeline::first_stage(&p.network, &p.data, &opts)
}

fn estimate(a: &EstimateArgs, out: &mut Vec<u8>, err: &mut dyn Write) -> Result<()> {
    let method = match a.scheme.kind() {
        Some(kind) => Method::Regularized {
            kind,
            parameter: a.alpha,
            criterion: a.criterion.into(),
            grid: a.grid.clone(),
        },
        None if a.alpha.is_some() || a.grid.is_some() => {
            return Err(Error::InvalidArgument(
                "--alpha and --grid only apply to the T, LF and PC schemes".into(),
            ))
        }
        None if a.scheme == SchemeArg::Classical => Method::Classical,
        None => Method::BiasCorrected,
    };
    let p = load_data(&a.data)?;
    let fit = first_stage(&p, &a.data)?;
    if fit.rho.degenerate {
        writeln!(err, "warning: the moment objective for rho is flat; rho set to 0")?;
    }
    let result = fit.estimate(&method)?;
    write_result(out, a, &p, &fit, &result)
}

fn write_result(
    out: &mut Vec<u8>,
    a: &EstimateArgs,
    p: &Prepared,
    fit: &FirstStage<'_>,
    r: &EstimationResult,
) -> Result<()> {
    let f = crate::fmt_num;
    let scheme = match a.scheme {
        SchemeArg::Classical => "classical".to_string(),
        SchemeArg::BiasCorrected => "bias-corrected".to_string(),
        s => s.kind().expect("regularized scheme").short().to_string(),
    };
    writeln!(out, "scheme={scheme}")?;
    match r.scheme {
        Some(s) if a.scheme.kind().is_some() => {
            writeln!(out, "parameter={}", f(s.parameter()))?;
            writeln!(out, "alpha={}", f(s.alpha()))?;
            let how = if a.alpha.is_some() { "fixed".to_string() } else { format!("{:?}", a.criterion).to_lowercase() };
            writeln!(out, "selection={how}")?;
        }
        _ => {
            writeln!(out, "parameter=-")?;
            writeln!(out, "alpha=-")?;
            writeln!(out, "selection=-")?;
        }
    }
    for (k, name) in p.names.iter().enumerate() {
        writeln!(out, "{name}={}", f(r.delta[k]))?;
        writeln!(out, "{name}_se={}", f(r.std_errors[k]))?;
    }
    writeln!(out, "rho_tilde={}", f(fit.rho.rho))?;
    writeln!(out, "rho_degenerate={}", fit.rho.degenerate)?;
    writeln!(out, "sigma2={}", f(r.sigma2_hat))?;
    writeln!(out, "trace_p={}", f(r.trace_p))?;
    writeln!(out, "h_condition={}", f(r.h_condition))?;
    writeln!(out, "instrument_condition={}", f(r.instrument_condition))?;
    writeln!(out, "instruments={}", fit.instruments.len())?;
    writeln!(out, "n={}", p.data.n())?;
    writeln!(out, "groups={}", p.network.group_count())?;
    Ok(())
}

fn diagnose_cmd(a: &DiagnoseArgs, out: &mut Vec<u8>) -> Result<()> {
    let edges = io::read_edges_path(&a.edges)?;
    let report = match &a.data {
        None => {
            let keys = io::keys_from_edges(&edges);
            let w = io::build_w(&edges, &keys, a.row_normalize)?;
            eigenvalue_report(&w, a.tol)?
        }
        Some(path) => {
            let nodes = io::read_nodes_path(path)?;
            let w = io::build_w(&edges, &nodes.keys, a.row_normalize)?;
            let network = GroupedNetwork::with_row_normalized_m(w)?;
            let x = crate::transforms::assemble_x(&nodes.x1, &nodes.x2, &network);
            if x.ncols() == 0 {
                return Err(Error::Data("node table has no x1 or x2 columns".into()));
            }
            let j = crate::transforms::j_projector(network.m());
            let stack = if a.no_correlation {
                Stack::NoCorrelation
            } else {
                Stack::Correlated { m: network.m() }
            };
            diagnose(network.w(), &j, &x, stack, a.tol)?
        }
    };
    if a.key_values {
        write!(out, "{}", report.to_key_values())?;
    } else {
        writeln!(out, "{report}")?;
    }
    Ok(())
}

fn select(a: &SelectArgs, out: &mut Vec<u8>, err: &mut dyn Write) -> Result<()> {
    let kind = a
        .scheme
        .kind()
        .ok_or_else(|| Error::InvalidArgument("select needs the T, LF or PC scheme".into()))?;
    let p = load_data(&a.data)?;
    let fit = first_stage(&p, &a.data)?;
    let sel = fit.select(kind, a.criterion.into(), a.grid.as_deref())?;
    writeln!(err, "selected {}", sel.scheme)?;
    write_curve(&mut *out, &sel.curve)
}

fn generate(a: &GenerateArgs, err: &mut dyn Write) -> Result<()> {
    let config = McConfig {
        replications: 1,
        seed: a.seed,
        truth: TrueParams {
            sigma2: a.sigma2,
            ..TrueParams::default()
        },
        ..McConfig::new(a.groups, a.size, a.max_links)
    };
    config.validate()?;
    let mut rng = montecarlo::replication_rng(a.seed, 0);
    let draw = montecarlo::draw_sample(&config, &mut rng)?;
    let write = |path: &Path, f: &dyn Fn(&mut Vec<u8>) -> Result<()>| -> Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        std::fs::write(path, buf).map_err(|e| Error::Data(format!("cannot write {}: {e}", path.display())))
    };
    write(&a.edges_out, &|b| io::write_edges(b, draw.network.w()))?;
    write(&a.nodes_out, &|b| {
        io::write_nodes(b, &draw.network.group_sizes(), &draw.data)
    })?;
    writeln!(err, "wrote {} nodes in {} groups", draw.network.n(), draw.network.group_count())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(args: &[&str]) -> (i32, String, String) {
        let mut o = Vec::new();
        let mut e = Vec::new();
        let code = parse_and_dispatch(std::iter::once("netreg").chain(args.iter().copied()), &mut o, &mut e);
        (code, String::from_utf8(o).unwrap(), String::from_utf8(e).unwrap())
    }

    #[test]
    fn unknown_flag_is_usage_error() {
        let (code, _, err) = run(&["simulate", "--bogus"]);
        assert_eq!(code, EXIT_USAGE);
        assert!(err.contains("Usage"));
        assert_eq!(run(&[]).0, EXIT_USAGE);
    }

    #[test]
    fn help_exits_cleanly() {
        let (code, out, _) = run(&["--help"]);
        assert_eq!(code, EXIT_OK);
        assert!(out.contains("simulate"));
    }

    #[test]
    fn config_layer_and_override() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.cfg");
        std::fs::write(&cfg, "# small run\nreps = 3\ngroups = 4\nsize = 6\nmax_links = 2\nformat = csv\n").unwrap();
        let c = cfg.to_str().unwrap();
        let (code, out, err) = run(&["--config", c, "simulate", "--reps", "2"]);
        assert_eq!(code, EXIT_OK, "{err}");
        assert!(out.starts_with("group_size,group_count"));
        assert!(out.contains("6,4,2,finite_iv,lambda,0.1,"));
        let finite = out.lines().find(|l| l.contains("finite_iv,lambda")).unwrap();
        assert!(finite.ends_with(",2,0"), "{finite}");
        std::fs::write(&cfg, "nonsense = 1\n").unwrap();
        assert_eq!(run(&["--config", c, "simulate"]).0, EXIT_USAGE);
    }

    #[test]
    fn inconsistent_flags_rejected() {
        let (code, _, _) = run(&["estimate", "--data", "a", "--edges", "b", "--alpha", "1", "--grid", "1,2"]);
        assert_eq!(code, EXIT_USAGE);
        assert_eq!(run(&["simulate", "--sweep", "--groups", "5"]).0, EXIT_USAGE);
    }

    #[test]
    fn missing_file_is_data_error() {
        assert_eq!(run(&["diagnose", "--edges", "/nonexistent/edges.csv"]).0, EXIT_DATA);
    }

    #[test]
    fn error_classes() {
        assert_eq!(exit_code(&Error::NoFiniteCriterion), EXIT_NUMERICAL);
        assert_eq!(exit_code(&Error::Data("x".into())), EXIT_DATA);
        assert_eq!(exit_code(&Error::InvalidArgument("x".into())), EXIT_USAGE);
    }

    #[test]
    fn sweep_has_twelve_designs() {
        assert_eq!(sweep_configs().len(), 12);
    }
}
