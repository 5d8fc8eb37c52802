use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use blast_bocd::{map_run_length, Hazard, RunLengthState};
use blast_cli::config::RunConfig;
use blast_cli::formats;
use blast_cli::harness::{self, HarnessConfig, Method};
use blast_cli::{bench, CliError};
use blast_dgmrf::{elicit_prior, elicit_prior_from_init, fit_diagonal_prior, OptimizerConfig};
use blast_linalg::FilterKind;
use blast_simgen::{build_scenario, ScenarioKind, ScenarioSpec};

/// Probabilities below this floor are dropped from the long-form posterior
/// CSV; the support size still lets readers bound the truncated tail.
const CSV_PROB_FLOOR: f64 = 1e-10;

#[derive(Parser)]
#[command(
    name = "blast",
    about = "Bayesian online change-point detection for image streams",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit an image prior from reference frames and write it to disk.
    Elicit {
        /// Reference frames (.bimg).
        #[arg(long)]
        refs: PathBuf,
        /// Number of convolution layers.
        #[arg(long, default_value_t = 3)]
        layers: usize,
        /// Filter kind: plus | seq.
        #[arg(long, default_value = "seq")]
        filter: String,
        /// Output prior file (.bpri).
        #[arg(long)]
        out: PathBuf,
        /// Optimizer iterations (0 writes the initialization-only prior).
        #[arg(long, default_value_t = 1000)]
        iters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Adam learning rate.
        #[arg(long, default_value_t = 0.01)]
        lr: f64,
        /// Monte Carlo samples per gradient estimate.
        #[arg(long, default_value_t = 1)]
        mc_samples: usize,
        /// Fit the unstructured diagonal prior instead (layers/filter
        /// ignored).
        #[arg(long)]
        diagonal: bool,
    },
    /// Stream frames through the detector and write posterior CSVs.
    Detect {
        #[arg(long)]
        prior: PathBuf,
        #[arg(long)]
        stream: PathBuf,
        /// key = value config file; flags below override it.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Long-form posterior CSV (t,r,prob).
        #[arg(long)]
        out: PathBuf,
        /// Companion CSV (t,map,alarm); defaults to `<out>` with a
        /// `_map.csv` suffix.
        #[arg(long)]
        map_out: Option<PathBuf>,
        #[arg(long)]
        hazard_lambda: Option<f64>,
        /// "from-prior" or a positive number.
        #[arg(long)]
        sigma2: Option<String>,
        #[arg(long)]
        truncation: Option<usize>,
        /// map-drop | prob-mass.
        #[arg(long)]
        alarm_rule: Option<String>,
        #[arg(long)]
        alarm_threshold: Option<f64>,
        #[arg(long)]
        alarm_window: Option<usize>,
        #[arg(long)]
        alarm_burn_in: Option<usize>,
    },
    /// Generate a synthetic scenario bundle.
    Simulate {
        /// spatial | edge | intensity | custom.
        #[arg(long)]
        scenario: String,
        /// Pre-change truth (.bimg, single frame) for --scenario custom.
        #[arg(long)]
        pre: Option<PathBuf>,
        /// Post-change truth (.bimg, single frame) for --scenario custom.
        #[arg(long)]
        post: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 100)]
        t: usize,
        #[arg(long, default_value_t = 50)]
        change_time: usize,
        #[arg(long, default_value_t = 1.0)]
        noise_sd: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Image size as ROWSxCOLS.
        #[arg(long, default_value = "25x25")]
        size: String,
        #[arg(long, default_value_t = 30)]
        n_reference: usize,
    },
    /// Run several methods over scenario replicates and summarize.
    Compare {
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        pre: Option<PathBuf>,
        #[arg(long)]
        post: Option<PathBuf>,
        /// Comma-separated: blast,unblast,hotelling,mmd.
        #[arg(long, default_value = "blast,unblast,hotelling,mmd")]
        methods: String,
        #[arg(long, default_value_t = 20)]
        replicates: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Elicitation iterations for the structured prior.
        #[arg(long, default_value_t = 2500)]
        iters: usize,
        #[arg(long, default_value_t = 100)]
        t: usize,
        #[arg(long, default_value_t = 50)]
        change_time: usize,
        #[arg(long, default_value_t = 1.0)]
        noise_sd: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "25x25")]
        size: String,
        #[arg(long, default_value_t = 30)]
        n_reference: usize,
    },
    /// Measure per-step detection cost across image sizes.
    Bench {
        #[arg(long, default_value = "10x10,20x20,40x40,50x50")]
        sizes: String,
        #[arg(long, default_value_t = 50)]
        steps: usize,
        #[arg(long)]
        truncation: Option<usize>,
    },
}

fn main() {
    // BLAST_THREADS caps harness parallelism (default: all cores).
    if let Ok(value) = std::env::var("BLAST_THREADS") {
        if let Ok(n) = value.parse::<usize>() {
            if n > 0 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
    let cli = Cli::parse();
    if let Err(e) = run(cli.command) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn parse_filter(s: &str) -> Result<FilterKind, CliError> {
    match s {
        "plus" | "+" => Ok(FilterKind::Plus),
        "seq" => Ok(FilterKind::Seq),
        other => Err(CliError::Input(format!("unknown filter kind: {other}"))),
    }
}

fn parse_size(s: &str) -> Result<(usize, usize), CliError> {
    let (r, c) = s
        .split_once('x')
        .ok_or_else(|| CliError::Input(format!("size must be ROWSxCOLS, got {s}")))?;
    let rows = r.parse().map_err(|_| CliError::Input(format!("bad rows in {s}")))?;
    let cols = c.parse().map_err(|_| CliError::Input(format!("bad cols in {s}")))?;
    if rows == 0 || cols == 0 {
        return Err(CliError::Input("size must be positive".into()));
    }
    Ok((rows, cols))
}

#[allow(clippy::too_many_arguments)]
fn scenario_spec(
    scenario: &str,
    pre: &Option<PathBuf>,
    post: &Option<PathBuf>,
    t: usize,
    change_time: usize,
    noise_sd: f64,
    seed: u64,
    size: &str,
    n_reference: usize,
) -> Result<ScenarioSpec, CliError> {
    let (mut rows, mut cols) = parse_size(size)?;
    let kind = match scenario {
        "spatial" => ScenarioKind::SpatialCorrelation,
        "edge" => ScenarioKind::EdgeStructure,
        "intensity" => ScenarioKind::Intensity,
        "custom" => {
            let load_single = |name: &str, path: &Option<PathBuf>| {
                let path = path.as_ref().ok_or_else(|| {
                    CliError::Input(format!("--scenario custom requires --{name}"))
                })?;
                let frames = formats::read_frames(path)?;
                frames.into_iter().next().ok_or_else(|| {
                    CliError::Input(format!("{}: no frames", path.display()))
                })
            };
            let pre = load_single("pre", pre)?;
            let post = load_single("post", post)?;
            rows = pre.rows();
            cols = pre.cols();
            ScenarioKind::CustomPair { pre, post }
        }
        other => {
            return Err(CliError::Input(format!(
                "unknown scenario: {other} (spatial | edge | intensity | custom)"
            )))
        }
    };
    let mut spec = ScenarioSpec::new(kind);
    spec.t_len = t;
    spec.change_time = change_time;
    spec.noise_sd = noise_sd;
    spec.seed = seed;
    spec.rows = rows;
    spec.cols = cols;
    spec.n_reference = n_reference;
    Ok(spec)
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Elicit { refs, layers, filter, out, iters, seed, lr, mc_samples, diagonal } => {
            cmd_elicit(&refs, layers, &filter, &out, iters, seed, lr, mc_samples, diagonal)
        }
        Command::Detect {
            prior,
            stream,
            config,
            out,
            map_out,
            hazard_lambda,
            sigma2,
            truncation,
            alarm_rule,
            alarm_threshold,
            alarm_window,
            alarm_burn_in,
        } => {
            let mut run_config = RunConfig::default();
            if let Some(path) = config {
                run_config.load_file(&path)?;
            }
            if let Some(v) = hazard_lambda {
                run_config.set("hazard_lambda", &v.to_string())?;
            }
            if let Some(v) = sigma2 {
                run_config.set("sigma2", &v)?;
            }
            if let Some(v) = truncation {
                run_config.set("truncation", &v.to_string())?;
            }
            if let Some(v) = alarm_rule {
                run_config.set("alarm_rule", &v)?;
            }
            if let Some(v) = alarm_threshold {
                run_config.set("alarm_threshold", &v.to_string())?;
            }
            if let Some(v) = alarm_window {
                run_config.set("alarm_window", &v.to_string())?;
            }
            if let Some(v) = alarm_burn_in {
                run_config.set("alarm_burn_in", &v.to_string())?;
            }
            let map_out = map_out.unwrap_or_else(|| companion_path(&out, "_map.csv"));
            cmd_detect(&prior, &stream, &run_config, &out, &map_out)
        }
        Command::Simulate {
            scenario,
            pre,
            post,
            out_dir,
            t,
            change_time,
            noise_sd,
            seed,
            size,
            n_reference,
        } => {
            let spec = scenario_spec(
                &scenario, &pre, &post, t, change_time, noise_sd, seed, &size, n_reference,
            )?;
            cmd_simulate(&scenario, &spec, &out_dir)
        }
        Command::Compare {
            scenario,
            pre,
            post,
            methods,
            replicates,
            out,
            config,
            iters,
            t,
            change_time,
            noise_sd,
            seed,
            size,
            n_reference,
        } => {
            let spec = scenario_spec(
                &scenario, &pre, &post, t, change_time, noise_sd, seed, &size, n_reference,
            )?;
            let methods = Method::parse_list(&methods)?;
            let mut cfg = HarnessConfig { iterations: iters, ..HarnessConfig::default() };
            harness::sigma2_from_scenario(&mut cfg.run, spec.noise_sd);
            if let Some(path) = config {
                cfg.run.load_file(&path)?;
            }
            cmd_compare(&spec, &methods, replicates, &cfg, &out)
        }
        Command::Bench { sizes, steps, truncation } => cmd_bench(&sizes, steps, truncation),
    }
}

fn companion_path(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().unwrap_or_default().to_string_lossy();
    out.with_file_name(format!("{stem}{suffix}"))
}

#[allow(clippy::too_many_arguments)]
fn cmd_elicit(
    refs: &Path,
    layers: usize,
    filter: &str,
    out: &Path,
    iters: usize,
    seed: u64,
    lr: f64,
    mc_samples: usize,
    diagonal: bool,
) -> Result<(), CliError> {
    let references = formats::read_frames(refs)?;
    println!(
        "loaded {} reference frames ({}x{})",
        references.len(),
        references[0].rows(),
        references[0].cols()
    );
    if diagonal {
        let prior = fit_diagonal_prior(&references)?;
        let loglik: f64 = references
            .iter()
            .map(|r| prior.log_marginal(r))
            .sum::<Result<f64, _>>()
            .map_err(CliError::from)?;
        formats::write_diagonal_prior(out, &prior, loglik)?;
        println!(
            "diagonal prior: gamma^2 = {:.6}, reference log marginal = {:.3}",
            prior.noise_variance(),
            loglik
        );
        println!("wrote {}", out.display());
        return Ok(());
    }

    let kind = parse_filter(filter)?;
    let (prior, report) = if iters == 0 {
        elicit_prior_from_init(&references, layers, kind, seed)?
    } else {
        let config = OptimizerConfig {
            iterations: iters,
            learning_rate: lr,
            mc_samples,
            seed,
            ..OptimizerConfig::default()
        };
        elicit_prior(&references, layers, kind, &config)?
    };
    let prov = prior.provenance();
    println!(
        "elicited prior: {} iterations{}, final ELBO = {:.3}, gamma^2 = {:.6}",
        prov.iterations,
        if report.stopped_early { " (early stop)" } else { "" },
        prov.final_elbo,
        prior.noise_variance()
    );
    if prior.basis().clamped() > 0 {
        eprintln!(
            "warning: {} eigenvalue(s) clamped to the positivity floor",
            prior.basis().clamped()
        );
    }
    formats::write_structured_prior(out, &prior)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_detect(
    prior_path: &Path,
    stream_path: &Path,
    config: &RunConfig,
    out: &Path,
    map_out: &Path,
) -> Result<(), CliError> {
    let prior = formats::read_prior(prior_path)?;
    let stream = formats::read_frames(stream_path)?;
    let first = stream
        .first()
        .ok_or_else(|| CliError::Input("stream contains no frames".into()))?;
    if first.rows() != prior.rows() || first.cols() != prior.cols() {
        return Err(CliError::Input(format!(
            "stream frames are {}x{} but the prior expects {}x{}",
            first.rows(),
            first.cols(),
            prior.rows(),
            prior.cols()
        )));
    }
    let spectral = prior.spectral()?;
    let sigma2 = config.sigma2_for(spectral.noise_variance());
    let mut state = RunLengthState::new(
        std::sync::Arc::new(spectral),
        Hazard::constant(config.hazard_lambda)?,
        Some(sigma2),
        Some(config.truncation),
    )?;
    let mut detector = config.detector();

    let mut posterior_csv = csv_writer(out)?;
    let mut map_csv = csv_writer(map_out)?;
    writeln!(posterior_csv, "t,r,prob").map_err(|e| CliError::io(out, e))?;
    writeln!(map_csv, "t,map,alarm").map_err(|e| CliError::io(map_out, e))?;

    let mut first_alarm = None;
    for (idx, frame) in stream.iter().enumerate() {
        let t = idx + 1;
        let posterior = state.step(frame).map_err(|e| {
            CliError::Numeric(format!("{e}; last good step t = {}", t - 1))
        })?;
        for (r, prob) in posterior.iter() {
            if prob >= CSV_PROB_FLOOR {
                writeln!(posterior_csv, "{t},{r},{prob}").map_err(|e| CliError::io(out, e))?;
            }
        }
        let map = map_run_length(&posterior);
        let alarm = detector.observe(&posterior);
        if alarm && first_alarm.is_none() {
            first_alarm = Some(t);
        }
        writeln!(map_csv, "{t},{map},{alarm}").map_err(|e| CliError::io(map_out, e))?;
    }
    posterior_csv.flush().map_err(|e| CliError::io(out, e))?;
    map_csv.flush().map_err(|e| CliError::io(map_out, e))?;

    match first_alarm {
        Some(t) => println!("first alarm at t = {t}"),
        None => println!("no alarm"),
    }
    println!("wrote {} and {}", out.display(), map_out.display());
    Ok(())
}

fn csv_writer(path: &Path) -> Result<std::io::BufWriter<fs::File>, CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
    }
    Ok(std::io::BufWriter::new(
        fs::File::create(path).map_err(|e| CliError::io(path, e))?,
    ))
}

fn cmd_simulate(scenario: &str, spec: &ScenarioSpec, out_dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let bundle = build_scenario(spec)?;
    formats::write_frames(out_dir.join("references.bimg"), &bundle.references)?;
    formats::write_frames(out_dir.join("stream.bimg"), &bundle.stream)?;
    formats::write_frames(out_dir.join("truth_pre.bimg"), &[bundle.truth_pre.clone()])?;
    formats::write_frames(out_dir.join("truth_post.bimg"), &[bundle.truth_post.clone()])?;

    let manifest = format!(
        "scenario = {scenario}\nt = {}\nchange_time = {}\nnoise_sd = {}\nseed = {}\nsize = {}x{}\nn_reference = {}\n",
        spec.t_len, spec.change_time, spec.noise_sd, spec.seed, spec.rows, spec.cols,
        spec.n_reference
    );
    let manifest_path = out_dir.join("manifest.txt");
    fs::write(&manifest_path, manifest).map_err(|e| CliError::io(&manifest_path, e))?;
    println!(
        "wrote {} references and a {}-frame stream to {}",
        spec.n_reference,
        spec.t_len,
        out_dir.display()
    );
    Ok(())
}

fn cmd_compare(
    spec: &ScenarioSpec,
    methods: &[Method],
    replicates: usize,
    cfg: &HarnessConfig,
    out: &Path,
) -> Result<(), CliError> {
    let outcomes = harness::compare(spec, methods, replicates, cfg)?;

    let mut csv = csv_writer(out)?;
    writeln!(csv, "replicate,method,first_alarm,detection_delay,false_alarm,status")
        .map_err(|e| CliError::io(out, e))?;
    for o in &outcomes {
        match &o.result {
            Ok(m) => {
                let first_alarm = m
                    .alarm_times
                    .first()
                    .map(|t| t.to_string())
                    .unwrap_or_default();
                let delay = m
                    .detection_delay
                    .map(|d| d.to_string())
                    .unwrap_or_default();
                writeln!(
                    csv,
                    "{},{},{},{},{},ok",
                    o.replicate,
                    o.method.name(),
                    first_alarm,
                    delay,
                    m.false_alarm
                )
                .map_err(|e| CliError::io(out, e))?;
            }
            Err(msg) => {
                writeln!(
                    csv,
                    "{},{},,,,error: {}",
                    o.replicate,
                    o.method.name(),
                    msg.replace(',', ";")
                )
                .map_err(|e| CliError::io(out, e))?;
            }
        }
    }
    csv.flush().map_err(|e| CliError::io(out, e))?;

    let summaries = harness::summarize(&outcomes, methods);
    println!("method      completed  median_delay  missed  false_alarm_rate");
    for s in &summaries {
        println!(
            "{:<11} {:>9}  {:>12}  {:>6}  {:>16.3}",
            s.method.name(),
            s.completed,
            s.median_delay.map(|d| d.to_string()).unwrap_or_else(|| "-".into()),
            s.missed,
            s.false_alarm_rate
        );
    }
    println!("wrote {}", out.display());

    if summaries.iter().all(|s| s.completed == 0) {
        return Err(CliError::Numeric("every method failed on every replicate".into()));
    }
    Ok(())
}

fn cmd_bench(sizes: &str, steps: usize, truncation: Option<usize>) -> Result<(), CliError> {
    let mut points = Vec::new();
    println!("size      pixels   setup        per-step");
    for size in sizes.split(',') {
        let (rows, cols) = parse_size(size.trim())?;
        let point = bench::bench_size(rows, cols, steps, truncation)?;
        println!(
            "{:<9} {:>6}   {:>10.3?}   {}",
            format!("{rows}x{cols}"),
            point.pixels,
            point.setup,
            point
                .per_step
                .map(|d| format!("{d:.3?}"))
                .unwrap_or_else(|| "-".into()),
        );
        points.push(point);
    }
    if let Some(slope) = bench::log_log_slope(&points) {
        println!("log-log slope of per-step time vs pixels: {slope:.3}");
    }
    Ok(())
}
