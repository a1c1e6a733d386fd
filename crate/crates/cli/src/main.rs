//! Operator front end: stream detection, threshold calibration, hull-size
//! oracle tables, Monte-Carlo experiments, and e-detector scans. All
//! commands are clients of the HTTP service; without `--server` a private
//! instance is hosted in-process.
//!
//! Exit codes: 0 ok, 1 configuration error, 2 data error, 3 internal error.

mod csvio;
mod local;

use std::fs;
use std::io::{BufReader, Read, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mdfocus_api::{CalibrateRequest, EDetectPreset, EDetectRequest, StopRecord};
use mdfocus_client::{Client, ClientError};
use mdfocus_core::calibrate::ThresholdPlan;
use mdfocus_core::config::{EngineKind, RunConfig};
use mdfocus_core::detector::StatKind;
use mdfocus_core::simlab::{ExperimentSpec, RECORD_HEADER};

use csvio::RowReader;

const OBSERVE_BATCH: usize = 512;

#[derive(Parser)]
#[command(name = "mdfocus", version, about = "Online multivariate changepoint detection")]
struct Cli {
    /// Service base URL (e.g. http://127.0.0.1:8787). Without it the CLI
    /// hosts a private service in-process.
    #[arg(long, global = true, env = "MDFOCUS_SERVER")]
    server: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Stream a CSV of observations through a detection session.
    Detect(DetectArgs),
    /// Produce a threshold plan (analytic or Monte-Carlo).
    Calibrate(CalibrateArgs),
    /// Expected hull face/vertex counts for i.i.d. streams.
    Oracle(OracleArgs),
    /// Monte-Carlo experiment harness; emits CSV records plus summary rows.
    Experiment(ExperimentArgs),
    /// Hull-candidate scan of a score stream for CUSUM e-detectors.
    Edetect(EdetectArgs),
    /// Run the detection service in the foreground.
    Serve(ServeArgs),
}

#[derive(Args)]
struct DetectArgs {
    /// Input CSV path; `-` or absent reads stdin (config `input` wins
    /// over stdin when present).
    input: Option<String>,
    /// Run configuration document (JSON).
    #[arg(long, env = "MDFOCUS_CONFIG")]
    config: PathBuf,
    /// Engine override: exact, dyadic, or approx.
    #[arg(long)]
    engine: Option<String>,
    /// Lazy-rebuild multiplier override (alpha >= 1).
    #[arg(long)]
    alpha: Option<f64>,
    /// Lazy-rebuild offset override (beta >= 0).
    #[arg(long)]
    beta: Option<f64>,
    /// Initial candidate budget override.
    #[arg(long)]
    max_size: Option<usize>,
    /// Dyadic engine: smallest merge scale (power of two).
    #[arg(long)]
    qmin: Option<u32>,
    /// Approx engine: projection width.
    #[arg(long)]
    ptilde: Option<usize>,
    /// Threshold plan document (JSON); overrides the config's plan.
    #[arg(long)]
    threshold_plan: Option<PathBuf>,
    /// Emit one JSONL record per step in addition to the stop record.
    #[arg(long)]
    trace: bool,
    /// Seed recorded with the run (echoed into the config record).
    #[arg(long)]
    seed: Option<u64>,
    /// Output path; stdout when absent.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    /// analytic-arl, analytic-fa, or monte-carlo.
    #[arg(long)]
    mode: String,
    /// Statistic ids (dense, ranked_S, thresholded_A, sum_of_max).
    #[arg(long, value_delimiter = ',')]
    stats: Vec<String>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Number of monitored sparsity levels (analytic-arl).
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Run configuration supplying model/statistics/prechange (monte-carlo).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    stream_len: Option<u64>,
    #[arg(long)]
    quantile: Option<f64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    p: Vec<usize>,
    #[arg(long, value_delimiter = ',', required = true)]
    n: Vec<u64>,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(subcommand)]
    kind: ExperimentKind,
    /// Worker threads for replicate evaluation.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum ExperimentKind {
    /// Hull-vertex counts of i.i.d. Gaussian runs vs their expectation.
    Hullcount {
        #[arg(long, value_delimiter = ',', required = true)]
        p: Vec<usize>,
        #[arg(long, value_delimiter = ',', required = true)]
        n: Vec<u64>,
        #[arg(long, default_value_t = 200)]
        replicates: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Log-log slope of total step time against stream length.
    RuntimeSlope {
        #[arg(long, value_delimiter = ',', required = true)]
        p: Vec<usize>,
        #[arg(long, value_delimiter = ',', required = true)]
        n: Vec<u64>,
        #[arg(long, default_value_t = 3)]
        replicates: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Ever-stop frequency under time-varying thresholds, no change.
    Falsealarm {
        #[arg(long, value_delimiter = ',', required = true)]
        p: Vec<usize>,
        #[arg(long, value_delimiter = ',', required = true)]
        alpha: Vec<f64>,
        #[arg(long, default_value_t = 1000)]
        n: u64,
        #[arg(long, default_value_t = 500)]
        replicates: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Censored mean run length under an ARL-calibrated fixed threshold.
    Arl {
        #[arg(long, required = true)]
        p: usize,
        #[arg(long, required = true)]
        gamma: f64,
        #[arg(long, default_value_t = 20000)]
        cap: u64,
        #[arg(long, default_value_t = 100)]
        replicates: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Detection delays for a dense mean change vs the analytic bounds.
    Add {
        #[arg(long, required = true)]
        p: usize,
        #[arg(long, required = true)]
        magnitude2: f64,
        #[arg(long, required = true)]
        sparsity: usize,
        #[arg(long, required = true)]
        tau_star: u64,
        #[arg(long, required = true)]
        gamma: f64,
        #[arg(long, default_value_t = 0.1)]
        alpha: f64,
        #[arg(long, default_value_t = 2000)]
        cap: u64,
        #[arg(long, default_value_t = 300)]
        replicates: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Args)]
struct EdetectArgs {
    /// One-column CSV of scores; `-` or absent reads stdin.
    input: Option<String>,
    /// winning-rate or plus-minus.
    #[arg(long)]
    preset: String,
    /// Smallest prefix length to report.
    #[arg(long)]
    from: Option<usize>,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long, default_value_t = 8787)]
    port: u16,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }
    fn data(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
    fn internal(message: impl Into<String>) -> Self {
        Self {
            code: 3,
            message: message.into(),
        }
    }
}

impl From<ClientError> for Failure {
    fn from(err: ClientError) -> Self {
        let code = if err.is_config_error() {
            1
        } else if err.is_data_error() {
            2
        } else {
            3
        };
        Self {
            code,
            message: err.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Command::Serve(args) = &cli.command {
        return serve_foreground(args);
    }
    let (client, _local) = connect(&cli.server)?;
    match cli.command {
        Command::Detect(args) => detect(&client, args),
        Command::Calibrate(args) => calibrate(&client, args),
        Command::Oracle(args) => oracle(&client, args),
        Command::Experiment(args) => experiment(&client, args),
        Command::Edetect(args) => edetect(&client, args),
        Command::Serve(_) => unreachable!("handled above"),
    }
}

fn connect(server: &Option<String>) -> Result<(Client, Option<local::LocalService>), Failure> {
    match server {
        Some(url) => {
            let client = Client::new(url.clone());
            client
                .health()
                .map_err(|e| Failure::internal(format!("cannot reach service at {url}: {e}")))?;
            Ok((client, None))
        }
        None => {
            let service = local::spawn()
                .map_err(|e| Failure::internal(format!("cannot start local service: {e}")))?;
            let client = Client::new(service.base_url.clone());
            for _ in 0..200 {
                if client.health().is_ok() {
                    return Ok((client, Some(service)));
                }
                std::thread::sleep(std::time::Duration::from_millis(10));
            }
            Err(Failure::internal("local service did not come up"))
        }
    }
}

fn output_writer(path: &Option<PathBuf>) -> Result<Box<dyn Write>, Failure> {
    match path {
        Some(p) => {
            let file = fs::File::create(p)
                .map_err(|e| Failure::internal(format!("cannot create {}: {e}", p.display())))?;
            Ok(Box::new(std::io::BufWriter::new(file)))
        }
        None => Ok(Box::new(std::io::BufWriter::new(std::io::stdout()))),
    }
}

fn open_input(path: &Option<String>) -> Result<Box<dyn Read>, Failure> {
    match path.as_deref() {
        None | Some("-") => Ok(Box::new(std::io::stdin())),
        Some(p) => {
            let file =
                fs::File::open(p).map_err(|e| Failure::data(format!("cannot open {p}: {e}")))?;
            Ok(Box::new(file))
        }
    }
}

fn load_json<T: serde::de::DeserializeOwned>(path: &PathBuf, what: &str) -> Result<T, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::config(format!("cannot read {what} {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Failure::config(format!("invalid {what} {}: {e}", path.display())))
}

fn parse_engine(name: &str) -> Result<EngineKind, Failure> {
    match name {
        "exact" => Ok(EngineKind::Exact),
        "dyadic" => Ok(EngineKind::Dyadic),
        "approx" => Ok(EngineKind::Approx),
        other => Err(Failure::config(format!(
            "unknown engine `{other}` (expected exact, dyadic, or approx)"
        ))),
    }
}

fn parse_stat(id: &str) -> Result<StatKind, Failure> {
    if id == "dense" {
        return Ok(StatKind::Dense);
    }
    if id == "sum_of_max" {
        return Ok(StatKind::SumOfMax);
    }
    if let Some(s) = id.strip_prefix("ranked_") {
        let s = s
            .parse()
            .map_err(|_| Failure::config(format!("bad ranked sparsity in `{id}`")))?;
        return Ok(StatKind::Ranked { s });
    }
    if let Some(a) = id.strip_prefix("thresholded_") {
        let a = a
            .parse()
            .map_err(|_| Failure::config(format!("bad threshold parameter in `{id}`")))?;
        return Ok(StatKind::Thresholded { a });
    }
    Err(Failure::config(format!("unknown statistic id `{id}`")))
}

fn detect(client: &Client, args: DetectArgs) -> Result<(), Failure> {
    let mut config: RunConfig = load_json(&args.config, "config")?;
    if let Some(engine) = &args.engine {
        config.engine = parse_engine(engine)?;
    }
    if let Some(alpha) = args.alpha {
        config.engine_params.alpha = alpha;
    }
    if let Some(beta) = args.beta {
        config.engine_params.beta = beta;
    }
    if let Some(max_size) = args.max_size {
        config.engine_params.max_size = Some(max_size);
    }
    if let Some(qmin) = args.qmin {
        config.engine_params.q_min = Some(qmin);
    }
    if let Some(ptilde) = args.ptilde {
        config.engine_params.p_tilde = Some(ptilde);
    }
    if let Some(seed) = args.seed {
        config.seed = Some(seed);
    }
    if let Some(plan_path) = &args.threshold_plan {
        let plan: ThresholdPlan = load_json(plan_path, "threshold plan")?;
        config.threshold_plan = Some(plan);
    }

    let created = client.create_session(&config, args.trace)?;
    let mut out = output_writer(&args.output)?;
    if args.trace {
        // Reproducibility record: the exact configuration this run used.
        let line = serde_json::json!({ "config": &config });
        writeln!(out, "{line}").map_err(|e| Failure::internal(e.to_string()))?;
    }

    let input_arg = args.input.clone().or_else(|| config.input.clone());
    let reader = BufReader::new(open_input(&input_arg)?);
    let mut rows = RowReader::new(reader, created.p);

    let mut consumed_total: u64 = 0;
    let mut batch: Vec<Vec<f64>> = Vec::with_capacity(OBSERVE_BATCH);
    let mut batch_lines: Vec<usize> = Vec::with_capacity(OBSERVE_BATCH);
    let mut final_n: u64 = 0;
    let mut stopped: Option<StopRecord> = None;
    let mut eof = false;
    while !eof && stopped.is_none() {
        batch.clear();
        batch_lines.clear();
        while batch.len() < OBSERVE_BATCH {
            match rows.next_row() {
                Ok(Some(row)) => {
                    batch_lines.push(rows.current_line());
                    batch.push(row);
                }
                Ok(None) => {
                    eof = true;
                    break;
                }
                Err(e) => {
                    return Err(Failure::data(format!("line {}: {}", e.line, e.message)));
                }
            }
        }
        if batch.is_empty() {
            break;
        }
        let response = client
            .observe(created.session_id, batch.clone())
            .map_err(|err| match &err {
                ClientError::Api {
                    status: 422,
                    message,
                    row: Some(abs),
                } => {
                    let idx = (abs - consumed_total) as usize;
                    let line = batch_lines.get(idx).copied().unwrap_or(0);
                    Failure::data(format!("line {line}: {message}"))
                }
                _ => Failure::from(err),
            })?;
        consumed_total += response.consumed as u64;
        final_n = response.n;
        for record in &response.reports {
            let line = serde_json::to_string(record).map_err(|e| Failure::internal(e.to_string()))?;
            writeln!(out, "{line}").map_err(|e| Failure::internal(e.to_string()))?;
        }
        stopped = response.stop;
    }

    let stop = stopped.unwrap_or_else(|| StopRecord::end_of_stream(final_n));
    let line = serde_json::to_string(&stop).map_err(|e| Failure::internal(e.to_string()))?;
    writeln!(out, "{line}").map_err(|e| Failure::internal(e.to_string()))?;
    out.flush().map_err(|e| Failure::internal(e.to_string()))?;
    Ok(())
}

fn calibrate(client: &Client, args: CalibrateArgs) -> Result<(), Failure> {
    let stats: Result<Vec<StatKind>, Failure> =
        args.stats.iter().map(|s| parse_stat(s)).collect();
    let request = match args.mode.as_str() {
        "analytic-arl" => CalibrateRequest::AnalyticArl {
            statistics: stats?,
            p: args.p.ok_or_else(|| Failure::config("analytic-arl needs --p"))?,
            gamma: args
                .gamma
                .ok_or_else(|| Failure::config("analytic-arl needs --gamma"))?,
            m: args.m,
        },
        "analytic-fa" => CalibrateRequest::AnalyticFa {
            statistics: stats?,
            p: args.p.ok_or_else(|| Failure::config("analytic-fa needs --p"))?,
            alpha: args
                .alpha
                .ok_or_else(|| Failure::config("analytic-fa needs --alpha"))?,
        },
        "monte-carlo" => {
            let config_path = args
                .config
                .as_ref()
                .ok_or_else(|| Failure::config("monte-carlo needs --config"))?;
            let config: RunConfig = load_json(config_path, "config")?;
            CalibrateRequest::MonteCarlo {
                model: config.model.clone(),
                statistics: config.statistics.clone(),
                prechange: config.prechange.clone(),
                gamma: args
                    .gamma
                    .ok_or_else(|| Failure::config("monte-carlo needs --gamma"))?,
                replicates: args.replicates.unwrap_or(200),
                seed: args.seed.or(config.seed).unwrap_or(0),
                stream_len: args.stream_len,
                quantile: args.quantile,
                workers: args.workers,
            }
        }
        other => {
            return Err(Failure::config(format!(
                "unknown mode `{other}` (expected analytic-arl, analytic-fa, monte-carlo)"
            )))
        }
    };
    let plan = client.calibrate(&request)?;
    let mut out = output_writer(&args.output)?;
    let text =
        serde_json::to_string_pretty(&plan).map_err(|e| Failure::internal(e.to_string()))?;
    writeln!(out, "{text}").map_err(|e| Failure::internal(e.to_string()))?;
    out.flush().map_err(|e| Failure::internal(e.to_string()))?;
    Ok(())
}

fn oracle(client: &Client, args: OracleArgs) -> Result<(), Failure> {
    let response = client.oracle(args.p, args.n)?;
    let mut out = output_writer(&args.output)?;
    writeln!(out, "n,p,expected_faces,expected_vertices")
        .map_err(|e| Failure::internal(e.to_string()))?;
    for row in response.rows {
        writeln!(
            out,
            "{},{},{},{}",
            row.n, row.p, row.expected_faces, row.expected_vertices
        )
        .map_err(|e| Failure::internal(e.to_string()))?;
    }
    out.flush().map_err(|e| Failure::internal(e.to_string()))?;
    Ok(())
}

fn experiment(client: &Client, args: ExperimentArgs) -> Result<(), Failure> {
    let spec = match args.kind {
        ExperimentKind::Hullcount {
            p,
            n,
            replicates,
            seed,
        } => ExperimentSpec::Hullcount {
            p,
            n,
            replicates,
            seed,
        },
        ExperimentKind::RuntimeSlope {
            p,
            n,
            replicates,
            seed,
        } => ExperimentSpec::RuntimeSlope {
            p,
            n,
            replicates,
            seed,
        },
        ExperimentKind::Falsealarm {
            p,
            alpha,
            n,
            replicates,
            seed,
        } => ExperimentSpec::Falsealarm {
            p,
            alpha,
            n,
            replicates,
            seed,
        },
        ExperimentKind::Arl {
            p,
            gamma,
            cap,
            replicates,
            seed,
        } => ExperimentSpec::Arl {
            p,
            gamma,
            cap,
            replicates,
            seed,
        },
        ExperimentKind::Add {
            p,
            magnitude2,
            sparsity,
            tau_star,
            gamma,
            alpha,
            cap,
            replicates,
            seed,
        } => ExperimentSpec::Add {
            p,
            magnitude2,
            sparsity,
            tau_star,
            gamma,
            alpha,
            cap,
            replicates,
            seed,
        },
    };
    let output = client.run_experiment(&spec, args.workers)?;
    let mut out = output_writer(&args.output)?;
    writeln!(out, "{RECORD_HEADER}").map_err(|e| Failure::internal(e.to_string()))?;
    for record in output.records.iter().chain(&output.summary) {
        writeln!(out, "{}", record.csv_row()).map_err(|e| Failure::internal(e.to_string()))?;
    }
    out.flush().map_err(|e| Failure::internal(e.to_string()))?;
    Ok(())
}

fn edetect(client: &Client, args: EdetectArgs) -> Result<(), Failure> {
    let preset = match args.preset.as_str() {
        "winning-rate" => EDetectPreset::WinningRate,
        "plus-minus" => EDetectPreset::PlusMinus,
        other => {
            return Err(Failure::config(format!(
                "unknown preset `{other}` (expected winning-rate or plus-minus)"
            )))
        }
    };
    let reader = BufReader::new(open_input(&args.input)?);
    let mut rows = RowReader::new(reader, 1);
    let mut scores = Vec::new();
    loop {
        match rows.next_row() {
            Ok(Some(row)) => scores.push(row[0]),
            Ok(None) => break,
            Err(e) => return Err(Failure::data(format!("line {}: {}", e.line, e.message))),
        }
    }
    if scores.is_empty() {
        return Err(Failure::data("empty score stream"));
    }
    let response = client.edetect(&EDetectRequest {
        preset,
        scores,
        from: args.from,
    })?;
    let mut out = output_writer(&args.output)?;
    writeln!(out, "n,hull_count,candidates").map_err(|e| Failure::internal(e.to_string()))?;
    for row in response.rows {
        let candidates: Vec<String> = row.candidates.iter().map(u64::to_string).collect();
        writeln!(out, "{},{},\"{}\"", row.n, row.hull_count, candidates.join(" "))
            .map_err(|e| Failure::internal(e.to_string()))?;
    }
    out.flush().map_err(|e| Failure::internal(e.to_string()))?;
    Ok(())
}

fn serve_foreground(args: &ServeArgs) -> Result<(), Failure> {
    let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::internal(e.to_string()))?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind((args.host.as_str(), args.port))
            .await
            .map_err(|e| Failure::internal(format!("cannot bind: {e}")))?;
        eprintln!("listening on {}", listener.local_addr().map_err(|e| Failure::internal(e.to_string()))?);
        mdfocus_service::serve(listener)
            .await
            .map_err(|e| Failure::internal(e.to_string()))
    })
}
