use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use cfgmm::sim::{
    run_experiment, write_report, Method, Preset, ReportFormat, ReportTable, SimulationSpec,
};
use cfgmm::{
    baseline_multi_restart_fit, constrained_multi_restart_fit, multi_restart_fit, responsibilities,
    FitConfig,
};
use cfgmm_cli::{
    fit_csv, ingest_csv, parse_bounds, posteriors_csv, CliError, ColumnSelector, FitOutput,
    HeaderMode, IngestOptions, Transform,
};
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Gamma mixture fitting with closed-form EM.
///
/// Exit codes: 0 success, 1 fit did not converge (result still printed),
/// 2 usage error, 3 input or I/O error.
#[derive(Parser)]
#[command(name = "cfgmm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a gamma mixture to one column of a CSV file.
    Fit(FitArgs),
    /// Run a seeded simulation experiment on a built-in design.
    Simulate(SimulateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FitMethod {
    Cfgmm,
    Constrained,
    Baseline,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutputFormat {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum TransformArg {
    Mif,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    #[value(name = "2comp")]
    Two,
    #[value(name = "3comp")]
    Three,
}

#[derive(Args)]
struct FitConfigArgs {
    /// Random starts per fit.
    #[arg(long)]
    restarts: Option<usize>,
    /// Convergence tolerance on |Δ log-likelihood| / n.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long = "max-iter")]
    max_iter: Option<usize>,
    /// Defaults to $CFGMM_SEED, then 0.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct FitArgs {
    file: PathBuf,
    /// Column name, or zero-based index.
    #[arg(long)]
    column: String,
    #[arg(long = "components", short = 'k')]
    components: usize,
    /// Mode intervals "l1,u1;l2,u2;…"; -inf and inf are allowed.
    #[arg(long)]
    bounds: Option<String>,
    /// Defaults to constrained when --bounds is given, cfgmm otherwise.
    #[arg(long, value_enum)]
    method: Option<FitMethod>,
    #[arg(long, value_enum)]
    transform: Option<TransformArg>,
    /// Treat the first row as a header.
    #[arg(long, conflicts_with = "no_header")]
    header: bool,
    /// Treat the first row as data.
    #[arg(long = "no-header")]
    no_header: bool,
    #[arg(long, value_enum, default_value = "json")]
    output: OutputFormat,
    /// Write per-observation responsibilities to this CSV file.
    #[arg(long)]
    posteriors: Option<PathBuf>,
    #[command(flatten)]
    config: FitConfigArgs,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    preset: PresetArg,
    #[arg(long, default_value_t = 100)]
    replicates: usize,
    #[arg(long, value_delimiter = ',', default_value = "100,1000,10000")]
    sizes: Vec<usize>,
    /// Comma-separated subset of cfgmm, constrained-cfgmm, baseline-gmm.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "cfgmm,constrained-cfgmm,baseline-gmm"
    )]
    methods: Vec<String>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Directory for fits.csv, aggregate.csv, summary.csv and report.json.
    #[arg(long)]
    output: PathBuf,
    #[command(flatten)]
    config: FitConfigArgs,
}

fn fit_config(args: &FitConfigArgs) -> Result<(FitConfig, &'static str), CliError> {
    let (seed, source) = match args.seed {
        Some(s) => (s, "flag"),
        None => match std::env::var("CFGMM_SEED") {
            Ok(v) => {
                let s = v
                    .trim()
                    .parse()
                    .map_err(|_| CliError::Usage(format!("CFGMM_SEED '{v}' is not an integer")))?;
                (s, "env")
            }
            Err(_) => (0, "default"),
        },
    };
    let d = FitConfig::default();
    let config = FitConfig {
        max_iterations: args.max_iter.unwrap_or(d.max_iterations),
        tolerance: args.tol.unwrap_or(d.tolerance),
        restarts: args.restarts.unwrap_or(d.restarts),
        seed,
        ..d
    };
    config
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    Ok((config, source))
}

fn write_file(path: &PathBuf, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn print(text: &str) -> Result<(), CliError> {
    std::io::stdout()
        .write_all(text.as_bytes())
        .map_err(|e| CliError::Io {
            path: "<stdout>".into(),
            message: e.to_string(),
        })
}

fn fit(args: FitArgs) -> Result<ExitCode, CliError> {
    if args.components < 1 {
        return Err(CliError::Usage("--components must be >= 1".into()));
    }
    let (config, seed_source) = fit_config(&args.config)?;
    let bounds = args
        .bounds
        .as_deref()
        .map(|b| parse_bounds(b, args.components))
        .transpose()?;
    let method = match (args.method, &bounds) {
        (Some(m), _) => m,
        (None, Some(_)) => FitMethod::Constrained,
        (None, None) => FitMethod::Cfgmm,
    };
    match (method, &bounds) {
        (FitMethod::Constrained, None) => {
            return Err(CliError::Usage(
                "--method constrained needs --bounds".into(),
            ))
        }
        (FitMethod::Cfgmm | FitMethod::Baseline, Some(_)) => {
            return Err(CliError::Usage(
                "--bounds only applies to --method constrained".into(),
            ));
        }
        _ => {}
    }
    let header = match (args.header, args.no_header) {
        (true, _) => HeaderMode::Present,
        (_, true) => HeaderMode::Absent,
        _ => HeaderMode::Auto,
    };
    let opts = IngestOptions {
        column: ColumnSelector::parse(&args.column),
        header,
        transform: args.transform.map(|TransformArg::Mif| Transform::Mif),
    };
    let data = ingest_csv(&args.file, &opts)?;
    log::info!(
        "read {} values from {} ({} rows skipped)",
        data.values.len(),
        data.source,
        data.skipped_rows
    );
    if data.values.len() < 2 * args.components {
        return Err(CliError::Data(format!(
            "{} values are too few for {} components (need at least {})",
            data.values.len(),
            args.components,
            2 * args.components
        )));
    }

    let k = args.components;
    let (name, result) = match method {
        FitMethod::Cfgmm => (Method::Cfgmm, multi_restart_fit(&data.values, k, &config)),
        FitMethod::Constrained => (
            Method::ConstrainedCfgmm,
            constrained_multi_restart_fit(
                &data.values,
                k,
                bounds.as_ref().expect("checked above"),
                &config,
            ),
        ),
        FitMethod::Baseline => (
            Method::BaselineGmm,
            baseline_multi_restart_fit(&data.values, k, &config),
        ),
    };
    let result = result?;
    if let Some(path) = &args.posteriors {
        let z = responsibilities(&data.values, &result.model)?;
        write_file(path, &posteriors_csv(&data, &z)?)?;
    }
    let out = FitOutput::new(name.as_str(), data, &result, bounds, config, seed_source);
    match args.output {
        OutputFormat::Json => {
            let mut s =
                serde_json::to_string_pretty(&out).map_err(|e| CliError::Data(e.to_string()))?;
            s.push('\n');
            print(&s)?;
        }
        OutputFormat::Csv => print(&fit_csv(&out)?)?,
    }
    if result.converged {
        Ok(ExitCode::SUCCESS)
    } else {
        log::warn!("fit did not converge: {:?}", result.status);
        Ok(ExitCode::from(1))
    }
}

fn simulate(args: SimulateArgs) -> Result<ExitCode, CliError> {
    let (config, _) = fit_config(&args.config)?;
    let preset = match args.preset {
        PresetArg::Two => Preset::TwoComponent,
        PresetArg::Three => Preset::ThreeComponent,
    };
    let methods = args
        .methods
        .iter()
        .filter(|m| !m.trim().is_empty())
        .map(|m| {
            m.parse::<Method>()
                .map_err(|e| CliError::Usage(e.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let spec = SimulationSpec {
        sample_sizes: args.sizes,
        replicates: args.replicates,
        methods,
        seed: config.seed,
        workers: args.workers,
        ..SimulationSpec::preset(preset)
    };
    spec.validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    log::info!(
        "running {} with {} replicates on {} workers",
        spec.design,
        spec.replicates,
        spec.worker_count()
    );
    let report = run_experiment(&spec, &config)?;
    for path in write_report(&report, &args.output)? {
        log::info!("wrote {}", path.display());
    }
    print(&cfgmm::sim::emit_report(
        &report,
        ReportFormat::Csv(ReportTable::Summary),
    )?)?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Fit(args) => fit(args),
        Command::Simulate(args) => simulate(args),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
