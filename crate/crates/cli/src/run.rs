//! Subcommand execution.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use readout_core::protocols::{
    characterize_channel, plan_efficiency, plan_readout, plan_ringdown, plan_sweep, run_chi_kappa_power,
    model_weights, run_efficiency, run_ringdown, BackendError, CharacterizationReport, Estimate,
    ExperimentBackend, IqRequest, ProtocolError, ProtocolFailure, SimulatorBackend,
};
use readout_core::signal::{snr_statistics, IqCloud};
use readout_core::snr::{predict_snr, separation_error, steady_state_snr};
use readout_core::model::Response;
use readout_core::{NoiseKey, PulseTrain, QubitState};

use crate::chip::{self, ChipSummary};
use crate::config::{self, Channel, ConfigError, ProtocolName, RunConfig};
use crate::report::{
    ChannelReport, ErrorRecord, IqRecord, IqSummary, PredictionRecord, ReportFile, Status, Timing, ToolInfo,
    TruthRecord,
};
use crate::trace::{self, Trace};

pub const DEFAULT_OUT_DIR: &str = "readoutchar-out";

#[derive(Debug, Parser)]
#[command(name = "readoutchar", version, about = "Dispersive readout characterization on simulated channels")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `master_seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides `output_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, env = "READOUTCHAR_THREADS")]
    pub threads: Option<usize>,
    /// Remote backend as `tcp://HOST:PORT`; in-process simulator when absent.
    #[cfg(feature = "wire")]
    #[arg(long)]
    pub backend: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample IQ clouds of both states with matched weights.
    SimulateIq(Common),
    /// Run one protocol, or the one named in the config.
    Protocol {
        #[arg(value_enum)]
        name: Option<ProtocolName>,
        #[command(flatten)]
        common: Common,
    },
    /// Model SNR of the readout pulse from the configured parameters.
    PredictSnr(Common),
    /// Full characterization and SNR validation per channel.
    Validate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        tolerance: Option<f64>,
    },
    /// Characterize every channel of a generated or listed chip.
    ChipScenario {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        tolerance: Option<f64>,
    },
    /// Serve the configured channels over the wire protocol.
    #[cfg(feature = "wire")]
    Serve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "127.0.0.1:7878")]
        listen: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
enum BackendChoice {
    InProcess,
    #[cfg(feature = "wire")]
    Tcp(String),
}

impl BackendChoice {
    fn describe(&self) -> String {
        match self {
            BackendChoice::InProcess => "in-process".into(),
            #[cfg(feature = "wire")]
            BackendChoice::Tcp(a) => format!("tcp://{a}"),
        }
    }
}

struct Context {
    command: &'static str,
    config: RunConfig,
    out: PathBuf,
    threads: usize,
    backend: BackendChoice,
}

impl Context {
    fn key(&self, channel: &Channel) -> NoiseKey {
        NoiseKey::new(self.config.master_seed).child(channel.index as u64)
    }
}

fn write_file(path: &Path, text: &str) -> std::io::Result<()> {
    std::fs::write(path, text)
}

fn config_failure(command: &str, out: Option<&Path>, e: &ConfigError) -> i32 {
    eprintln!("config error: {e}");
    if let Some(dir) = out {
        let report = ReportFile::config_error(command, &e.field, &e.message);
        if std::fs::create_dir_all(dir).and_then(|_| write_file(&dir.join("report.json"), &report.to_json())).is_err() {
            eprintln!("cannot write report to {}", dir.display());
        }
    }
    Status::ConfigError.exit_code()
}

fn setup(command: &'static str, common: &Common, tolerance: Option<f64>) -> Result<Context, i32> {
    let mut config = config::load(&common.config).map_err(|e| config_failure(command, common.out.as_deref(), &e))?;
    let out = common
        .out
        .clone()
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    if let Some(seed) = common.seed {
        config.master_seed = seed;
    }
    if let Some(t) = tolerance {
        config.plan.tolerance = t;
    }
    let checks = || -> Result<(), ConfigError> {
        config::validate(&config)?;
        if common.threads == Some(0) {
            return Err(ConfigError::new("--threads", "must be >= 1"));
        }
        Ok(())
    };
    checks().map_err(|e| config_failure(command, Some(&out), &e))?;
    let threads = common.threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    #[cfg(feature = "wire")]
    let backend = match &common.backend {
        None => BackendChoice::InProcess,
        Some(b) => match b.strip_prefix("tcp://") {
            Some(addr) => BackendChoice::Tcp(addr.to_string()),
            None => {
                let e = ConfigError::new("--backend", format!("expected tcp://HOST:PORT, got '{b}'"));
                return Err(config_failure(command, Some(&out), &e));
            }
        },
    };
    #[cfg(not(feature = "wire"))]
    let backend = BackendChoice::InProcess;
    Ok(Context { command, config, out, threads, backend })
}

fn with_backend<R>(
    ctx: &Context,
    channel: &Channel,
    f: impl FnOnce(&dyn ExperimentBackend) -> R,
) -> Result<R, BackendError> {
    match &ctx.backend {
        BackendChoice::InProcess => Ok(f(&SimulatorBackend::with_gain(channel.device, channel.drive_gain))),
        #[cfg(feature = "wire")]
        BackendChoice::Tcp(addr) => {
            let b = crate::wire::WireBackend::connect(addr.as_str(), channel.index, crate::wire::DEFAULT_TIMEOUT)?;
            Ok(f(&b))
        }
    }
}

/// The in-process simulators a wire server exposes for a config.
pub fn simulator_backends(config: &RunConfig) -> Result<Vec<SimulatorBackend>, ConfigError> {
    let (channels, _) = channels(config, false)?;
    Ok(channels.iter().map(|c| SimulatorBackend::with_gain(c.device, c.drive_gain)).collect())
}

fn channels(config: &RunConfig, prefer_chip: bool) -> Result<(Vec<Channel>, Option<f64>), ConfigError> {
    match &config.chip {
        Some(chip) if prefer_chip || config.devices.is_empty() => {
            Ok((chip::generate(chip, config.master_seed), Some(chip.spread)))
        }
        _ => Ok((config::resolve_devices(config)?, None)),
    }
}

struct ChannelOutcome {
    report: ChannelReport,
    errors: Vec<ErrorRecord>,
    traces: Vec<Trace>,
}

impl ChannelOutcome {
    fn new(channel: &Channel) -> Self {
        ChannelOutcome {
            report: ChannelReport {
                index: channel.index,
                name: channel.name.clone(),
                truth: TruthRecord::from(channel),
                characterization: None,
                prediction: None,
                iq: None,
                flagged: false,
            },
            errors: Vec::new(),
            traces: Vec::new(),
        }
    }

    fn backend_error(&mut self, e: &BackendError) {
        let pe = ProtocolError::Backend(e.clone());
        self.errors.push(ErrorRecord {
            channel: Some(self.report.index),
            protocol: None,
            reason: pe.reason().into(),
            message: pe.to_string(),
            field: None,
        });
        self.report.flagged = true;
    }

    fn characterization(&mut self, r: CharacterizationReport) {
        self.errors.extend(r.failures.iter().map(|f| ErrorRecord::from_failure(self.report.index, f)));
        self.report.flagged |= r.is_flagged();
        self.traces.extend(trace::characterization_traces(&r));
        self.report.characterization = Some(r);
    }
}

fn single_protocol(
    name: ProtocolName,
    backend: &dyn ExperimentBackend,
    ch: &Channel,
    ctx: &Context,
) -> CharacterizationReport {
    let plan = &ctx.config.plan;
    let key = ctx.key(ch);
    let fail = |r: &mut CharacterizationReport, e: ProtocolError| {
        r.failures.push(ProtocolFailure::new(name.as_str(), &e));
    };
    let mut r = CharacterizationReport::default();
    match name {
        ProtocolName::ChiKappaPower => {
            match run_chi_kappa_power(backend, &plan_sweep(&ch.nominal, &ch.operating, plan, key.child(1))) {
                Ok(x) => r.chi_kappa = Some(x),
                Err(e) => fail(&mut r, e),
            }
        }
        ProtocolName::Ringdown => {
            let prior = Some(Estimate::new(ch.nominal.chi, 0.0));
            match run_ringdown(backend, &plan_ringdown(&ch.nominal, prior, plan, key.child(2))) {
                Ok(x) => r.ringdown = Some(x),
                Err(e) => fail(&mut r, e),
            }
        }
        ProtocolName::Efficiency => {
            match run_efficiency(backend, &plan_efficiency(&ch.nominal, &ch.operating, plan, key.child(3))) {
                Ok(x) => r.efficiency = Some(x),
                Err(e) => fail(&mut r, e),
            }
        }
        ProtocolName::ValidateSnr | ProtocolName::ChipScenario => {
            r = characterize_channel(backend, &ch.nominal, &ch.operating, ch.readout_duration, plan, key);
        }
    }
    r
}

fn run_characterization(name: ProtocolName, ctx: &Context, ch: &Channel) -> ChannelOutcome {
    let mut out = ChannelOutcome::new(ch);
    match with_backend(ctx, ch, |b| single_protocol(name, b, ch, ctx)) {
        Ok(r) => out.characterization(r),
        Err(e) => out.backend_error(&e),
    }
    out
}

fn run_prediction(ctx: &Context, ch: &Channel) -> ChannelOutcome {
    let mut out = ChannelOutcome::new(ch);
    let readout = plan_readout(&ch.nominal, &ch.operating, ch.readout_duration, &ctx.config.plan, ctx.key(ch));
    let physical = readout.pulse.with_amplitude(readout.pulse.eps * ch.drive_gain);
    let prediction = predict_snr(&ch.device, &PulseTrain::from(physical), &readout.window);
    let snr_steady_state = (ch.operating.omega_d == ch.device.omega_r).then(|| {
        let nbar = physical.eps * physical.eps / (ch.device.chi.powi(2) + 0.25 * ch.device.kappa.powi(2));
        steady_state_snr(ch.device.chi, ch.device.kappa, nbar, ch.device.eta, physical.duration())
    });
    out.report.prediction =
        Some(PredictionRecord { prediction, snr_steady_state, separation_error: separation_error(prediction.snr) });
    out
}

fn acquire_clouds(backend: &dyn ExperimentBackend, ctx: &Context, ch: &Channel) -> Result<[IqCloud; 2], ProtocolError> {
    let plan = &ctx.config.plan;
    let readout = plan_readout(&ch.nominal, &ch.operating, ch.readout_duration, plan, ctx.key(ch).child(5));
    let physical = readout.pulse.with_amplitude(readout.pulse.eps * ch.nominal.drive_gain);
    let design = readout_core::DeviceParams {
        omega_r: ch.nominal.omega_r,
        chi: ch.nominal.chi,
        kappa: ch.nominal.kappa,
        eta: 1.0,
    };
    let weights = model_weights(&Response::new(&design, &PulseTrain::from(physical)), &readout.window, readout.bins)?;
    let acquire = |q: QubitState| {
        backend.acquire_iq(&IqRequest {
            pulses: vec![readout.pulse],
            state: q,
            weights: weights.clone(),
            shots: ctx.config.trace_shots as u64,
            key: readout.key.child(q.index() as u64),
        })
    };
    Ok([acquire(QubitState::Zero)?, acquire(QubitState::One)?])
}

fn run_iq(ctx: &Context, ch: &Channel) -> ChannelOutcome {
    let mut out = ChannelOutcome::new(ch);
    let result = with_backend(ctx, ch, |b| acquire_clouds(b, ctx, ch));
    let clouds = match result {
        Ok(Ok(c)) => c,
        Ok(Err(e)) => {
            out.errors.push(ErrorRecord::from_failure(ch.index, &ProtocolFailure::new("simulate-iq", &e)));
            out.report.flagged = true;
            return out;
        }
        Err(e) => {
            out.backend_error(&e);
            return out;
        }
    };
    let snr = snr_statistics(&clouds[0], &clouds[1]).map(|s| s.snr).unwrap_or(0.0);
    out.report.iq = Some(IqRecord {
        clouds: clouds
            .iter()
            .map(|c| {
                let m = c.mean();
                IqSummary {
                    state: c.state,
                    shots: c.points.len() as u64,
                    mean: [m.re, m.im],
                    quadrature_variance: c.quadrature_variance(),
                }
            })
            .collect(),
        snr,
    });
    out.traces = trace::iq_traces(&clouds, ctx.config.trace_shots);
    out
}

struct RunOutput {
    report: ReportFile,
    traces: Vec<(String, Trace)>,
}

fn assemble(ctx: &Context, outcomes: Vec<ChannelOutcome>, summary: Option<ChipSummary>, extra: Vec<Trace>) -> RunOutput {
    let multi = outcomes.len() > 1;
    let mut channels = Vec::with_capacity(outcomes.len());
    let mut errors = Vec::new();
    let mut traces = Vec::new();
    for o in outcomes {
        let prefix = if multi { format!("ch{:02}_", o.report.index) } else { String::new() };
        traces.extend(o.traces.into_iter().map(|t| (prefix.clone(), t)));
        errors.extend(o.errors);
        channels.push(o.report);
    }
    traces.extend(extra.into_iter().map(|t| (String::new(), t)));
    let flagged = channels.iter().any(|c| c.flagged) || !errors.is_empty();
    RunOutput {
        report: ReportFile {
            tool: ToolInfo::default(),
            command: ctx.command.into(),
            status: if flagged { Status::Flagged } else { Status::Ok },
            config: Some(ctx.config.clone()),
            channels,
            chip_summary: summary,
            errors,
        },
        traces,
    }
}

fn parallel<F>(ctx: &Context, channels: &[Channel], f: F) -> Vec<ChannelOutcome>
where
    F: Fn(&Context, &Channel) -> ChannelOutcome + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new().num_threads(ctx.threads).build().expect("thread pool");
    pool.install(|| channels.par_iter().map(|c| f(ctx, c)).collect())
}

fn finish(ctx: &Context, output: RunOutput, started: Instant) -> i32 {
    let write = || -> Result<(), Box<dyn std::error::Error>> {
        std::fs::create_dir_all(&ctx.out)?;
        write_file(&ctx.out.join("report.json"), &output.report.to_json())?;
        for (prefix, t) in &output.traces {
            t.write(&ctx.out, prefix)?;
        }
        let timing = Timing {
            wall_seconds: started.elapsed().as_secs_f64(),
            threads: ctx.threads,
            backend: ctx.backend.describe(),
        };
        write_file(&ctx.out.join("timing.json"), &(serde_json::to_string_pretty(&timing)? + "\n"))?;
        Ok(())
    };
    if let Err(e) = write() {
        eprintln!("cannot write outputs to {}: {e}", ctx.out.display());
        return Status::ConfigError.exit_code();
    }
    for e in &output.report.errors {
        let ch = e.channel.map_or(String::new(), |c| format!("ch{c:02} "));
        eprintln!("{ch}{}: {} ({})", e.protocol.as_deref().unwrap_or("-"), e.message, e.reason);
    }
    output.report.status.exit_code()
}

fn print_validation_table(report: &ReportFile) {
    println!("{:>8} {:>12} {:>12} {:>10} {:>6}", "channel", "predicted", "measured", "ratio", "pass");
    for c in &report.channels {
        match c.characterization.as_ref().and_then(|r| r.validation.as_ref()) {
            Some(v) => println!(
                "{:>8} {:>12.5} {:>12.5} {:>10.5} {:>6}",
                c.name, v.snr_predicted, v.snr_measured.value, v.ratio.value, v.pass
            ),
            None => println!("{:>8} {:>12} {:>12} {:>10} {:>6}", c.name, "-", "-", "-", false),
        }
    }
}

fn characterize_all(ctx: &Context, name: ProtocolName, prefer_chip: bool) -> Result<RunOutput, ConfigError> {
    let (channels, spread) = channels(&ctx.config, prefer_chip)?;
    let outcomes = parallel(ctx, &channels, |ctx, ch| run_characterization(name, ctx, ch));
    let full = matches!(name, ProtocolName::ValidateSnr | ProtocolName::ChipScenario);
    let (summary, extra) = if full {
        let reports: Vec<(usize, &CharacterizationReport)> = outcomes
            .iter()
            .filter_map(|o| o.report.characterization.as_ref().map(|r| (o.report.index, r)))
            .collect();
        let summary = (name == ProtocolName::ChipScenario).then(|| chip::summarize(&reports, spread));
        (summary, trace::validation_traces(&reports))
    } else {
        (None, Vec::new())
    };
    Ok(assemble(ctx, outcomes, summary, extra))
}

fn execute(ctx: Context, started: Instant, job: impl FnOnce(&Context) -> Result<RunOutput, ConfigError>) -> i32 {
    match job(&ctx) {
        Ok(output) => {
            if matches!(ctx.command, "validate" | "chip-scenario")
                || (ctx.command == "protocol" && output.report.channels.iter().any(|c| {
                    c.characterization.as_ref().is_some_and(|r| r.validation.is_some())
                }))
            {
                print_validation_table(&output.report);
            }
            if let Some(s) = &output.report.chip_summary {
                if let Some(k) = s.kappa_spread {
                    println!("kappa spread max/min = {k:.4}");
                }
            }
            finish(&ctx, output, started)
        }
        Err(e) => config_failure(ctx.command, Some(&ctx.out), &e),
    }
}

pub fn run(cli: Cli) -> i32 {
    let started = Instant::now();
    match cli.command {
        Command::SimulateIq(common) => match setup("simulate-iq", &common, None) {
            Ok(ctx) => execute(ctx, started, |ctx| {
                let (channels, _) = channels(&ctx.config, false)?;
                Ok(assemble(ctx, parallel(ctx, &channels, run_iq), None, Vec::new()))
            }),
            Err(code) => code,
        },
        Command::PredictSnr(common) => match setup("predict-snr", &common, None) {
            Ok(ctx) => execute(ctx, started, |ctx| {
                let (channels, _) = channels(&ctx.config, false)?;
                Ok(assemble(ctx, parallel(ctx, &channels, run_prediction), None, Vec::new()))
            }),
            Err(code) => code,
        },
        Command::Protocol { name, common } => match setup("protocol", &common, None) {
            Ok(ctx) => execute(ctx, started, |ctx| {
                let name = name
                    .or(ctx.config.protocol)
                    .ok_or_else(|| ConfigError::new("protocol", "no protocol given on the command line or in the config"))?;
                characterize_all(ctx, name, name == ProtocolName::ChipScenario)
            }),
            Err(code) => code,
        },
        Command::Validate { common, tolerance } => match setup("validate", &common, tolerance) {
            Ok(ctx) => execute(ctx, started, |ctx| characterize_all(ctx, ProtocolName::ValidateSnr, false)),
            Err(code) => code,
        },
        Command::ChipScenario { common, tolerance } => match setup("chip-scenario", &common, tolerance) {
            Ok(ctx) => execute(ctx, started, |ctx| {
                if ctx.config.chip.is_none() && ctx.config.devices.is_empty() {
                    return Err(ConfigError::new("chip", "a chip generator or a device list is required"));
                }
                characterize_all(ctx, ProtocolName::ChipScenario, true)
            }),
            Err(code) => code,
        },
        #[cfg(feature = "wire")]
        Command::Serve { config, seed, listen } => serve(&config, seed, &listen),
    }
}

#[cfg(feature = "wire")]
fn serve(path: &Path, seed: Option<u64>, listen: &str) -> i32 {
    use std::sync::atomic::AtomicBool;
    use std::sync::Arc;

    let loaded = config::load(path).and_then(|mut c| {
        if let Some(s) = seed {
            c.master_seed = s;
        }
        simulator_backends(&c)
    });
    let backends = match loaded {
        Ok(b) => b,
        Err(e) => return config_failure("serve", None, &e),
    };
    let listener = match std::net::TcpListener::bind(listen) {
        Ok(l) => l,
        Err(e) => {
            eprintln!("cannot listen on {listen}: {e}");
            return Status::ConfigError.exit_code();
        }
    };
    match listener.local_addr() {
        Ok(a) => println!("listening on {a}"),
        Err(_) => println!("listening on {listen}"),
    }
    match crate::wire::serve(listener, Arc::new(backends), Arc::new(AtomicBool::new(false))) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("server error: {e}");
            1
        }
    }
}
