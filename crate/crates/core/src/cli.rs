//! Command-line front end.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::channels::FIBER_DB_PER_KM;
use crate::error::Error;
use crate::linalg::Precision;
use crate::protocols::{
    run_interception, run_shor_demo, run_superdense, run_teleportation, standard_angles, BitStream, InterceptionConfig,
    RunSettings, ShorConfig, SuperdenseConfig, TeleportationConfig,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_RUN: i32 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Demo {
    Teleportation,
    Superdense,
    Interception,
    Shor,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "qnet", version, about = "Density-matrix quantum network simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one of the built-in demos.
    Run(Box<RunArgs>),
    /// List the built-in demos and their parameters.
    List {
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Default, Args)]
struct RunArgs {
    /// Demo to run; may come from the config file instead.
    demo: Option<Demo>,
    /// TOML run-config file; command-line flags take precedence.
    #[arg(long, env = "QNET_CONFIG")]
    config: Option<PathBuf>,
    /// Systems per teleportation angle.
    #[arg(long, env = "QNET_ENSEMBLE")]
    ensemble: Option<usize>,
    #[arg(long, env = "QNET_SEED")]
    seed: Option<u64>,
    #[arg(long, env = "QNET_LENGTH_KM")]
    length_km: Option<f64>,
    #[arg(long, env = "QNET_ATTENUATION_DB_PER_KM")]
    attenuation_db_per_km: Option<f64>,
    #[arg(long, env = "QNET_SIGNAL_SPEED_KM_S")]
    signal_speed_km_s: Option<f64>,
    #[arg(long, env = "QNET_PULSE_NS")]
    pulse_ns: Option<f64>,
    #[arg(long, env = "QNET_PRECISION")]
    precision: Option<Precision>,
    /// Length of a generated random bit stream.
    #[arg(long, env = "QNET_BITS", conflicts_with_all = ["message", "input"])]
    bits: Option<usize>,
    /// Text message to transmit.
    #[arg(long, env = "QNET_MESSAGE", conflicts_with = "input")]
    message: Option<String>,
    /// File whose bytes are transmitted.
    #[arg(long, env = "QNET_INPUT")]
    input: Option<PathBuf>,
    /// Results file; a CSV table also gets a `<stem>.report.json` sibling.
    #[arg(long, env = "QNET_OUT")]
    out: Option<PathBuf>,
    #[arg(long, env = "QNET_FORMAT")]
    format: Option<Format>,
    #[arg(long, overrides_with = "no_progress")]
    progress: bool,
    #[arg(long)]
    no_progress: bool,
    /// Deadlock watchdog in seconds of wall time.
    #[arg(long, env = "QNET_WATCHDOG_S")]
    watchdog_s: Option<f64>,
}

/// Contents of a run-config file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub demo: Option<Demo>,
    pub ensemble: Option<usize>,
    pub seed: Option<u64>,
    pub precision: Option<Precision>,
    pub progress: Option<bool>,
    pub watchdog_s: Option<f64>,
    #[serde(default)]
    pub channel: ChannelSection,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    pub length_km: Option<f64>,
    pub attenuation_db_per_km: Option<f64>,
    pub signal_speed_km_s: Option<f64>,
    pub pulse_ns: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub bits: Option<usize>,
    pub message: Option<String>,
    pub input: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub path: Option<PathBuf>,
    pub format: Option<Format>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, Error> {
        toml::from_str(text).map_err(|e| Error::Configuration(format!("run config: {e}")))
    }
}

/// Fully resolved parameters of one run.
#[derive(Debug)]
struct Resolved {
    demo: Demo,
    ensemble: usize,
    seed: u64,
    length_km: Option<f64>,
    attenuation: Option<f64>,
    data: DataSource,
    out: Option<PathBuf>,
    format: Format,
    settings: RunSettings,
}

#[derive(Debug)]
enum DataSource {
    Generated(Option<usize>),
    Message(String),
    File(PathBuf),
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, Error> {
    match path {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Configuration(format!("cannot read {}: {e}", path.display())))?;
            RunConfig::from_toml(&text)
        }
        None => Ok(RunConfig::default()),
    }
}

fn resolve(args: RunArgs, file: RunConfig) -> Result<Resolved, Error> {
    let demo = args
        .demo
        .or(file.demo)
        .ok_or_else(|| Error::Configuration("no demo given; pass one or set `demo` in the config".into()))?;
    let data = match (args.bits, args.message, args.input) {
        (Some(n), _, _) => DataSource::Generated(Some(n)),
        (_, Some(m), _) => DataSource::Message(m),
        (_, _, Some(p)) => DataSource::File(p),
        _ => match (file.data.bits, file.data.message, file.data.input) {
            (Some(n), None, None) => DataSource::Generated(Some(n)),
            (None, Some(m), None) => DataSource::Message(m),
            (None, None, Some(p)) => DataSource::File(p),
            (None, None, None) => DataSource::Generated(None),
            _ => return Err(Error::Configuration("set at most one of data.bits, data.message, data.input".into())),
        },
    };
    let out = args.out.or(file.output.path);
    let format = args
        .format
        .or(file.output.format)
        .or_else(|| out.as_deref().filter(|p| p.extension().is_some_and(|e| e == "json")).map(|_| Format::Json))
        .unwrap_or(Format::Csv);
    let progress = if args.no_progress { false } else { args.progress || file.progress.unwrap_or(false) };
    let watchdog_s = args.watchdog_s.or(file.watchdog_s).unwrap_or(60.0);
    if !(watchdog_s > 0.0) || !watchdog_s.is_finite() {
        return Err(Error::Configuration(format!("watchdog must be a positive number of seconds, got {watchdog_s}")));
    }
    let pulse_ns = args.pulse_ns.or(file.channel.pulse_ns).unwrap_or(1.0);
    let defaults = RunSettings::default();
    let settings = RunSettings {
        precision: args.precision.or(file.precision).unwrap_or(defaults.precision),
        pulse_seconds: pulse_ns * 1e-9,
        signal_speed_km_s: args
            .signal_speed_km_s
            .or(file.channel.signal_speed_km_s)
            .unwrap_or(defaults.signal_speed_km_s),
        progress,
        watchdog: Duration::from_secs_f64(watchdog_s),
    };
    Ok(Resolved {
        demo,
        ensemble: args.ensemble.or(file.ensemble).unwrap_or(250),
        seed: args.seed.or(file.seed).unwrap_or(0),
        length_km: args.length_km.or(file.channel.length_km),
        attenuation: args.attenuation_db_per_km.or(file.channel.attenuation_db_per_km),
        data,
        out,
        format,
        settings,
    })
}

fn load_data(source: &DataSource, default_bits: usize, seed: u64) -> Result<BitStream, Error> {
    match source {
        DataSource::Generated(n) => Ok(BitStream::generated(n.unwrap_or(default_bits), seed)),
        DataSource::Message(m) => Ok(BitStream::from_text(m)),
        DataSource::File(p) => {
            BitStream::from_file(p).map_err(|e| Error::Configuration(format!("cannot read {}: {e}", p.display())))
        }
    }
}

/// Result table plus full report of one demo run.
#[derive(Debug)]
pub struct DemoOutput {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Value>>,
    pub summary: String,
    pub report: Value,
}

impl DemoOutput {
    pub fn to_csv(&self) -> Result<Vec<u8>, Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(&self.columns).map_err(io)?;
        for row in &self.rows {
            w.write_record(row.iter().map(cell)).map_err(io)?;
        }
        w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
    }

    pub fn to_json(&self) -> Value {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| Value::Object(self.columns.iter().map(|c| c.to_string()).zip(r.iter().cloned()).collect()))
            .collect();
        json!({ "rows": rows, "report": self.report })
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn bit_rows(columns: &[&[u8]]) -> Vec<Vec<Value>> {
    let n = columns.iter().map(|c| c.len()).min().unwrap_or(0);
    (0..n).map(|i| std::iter::once(json!(i)).chain(columns.iter().map(|c| json!(c[i]))).collect()).collect()
}

/// Runs the demo a run-config describes, ignoring its output section, and
/// returns the table and report in memory.
pub fn run_config(config: RunConfig) -> Result<DemoOutput, Error> {
    execute(&resolve(RunArgs::default(), config)?)
}

/// Runs `demo` with resolved parameters.
fn execute(r: &Resolved) -> Result<DemoOutput, Error> {
    let settings = r.settings.clone();
    match r.demo {
        Demo::Teleportation => {
            let cfg = TeleportationConfig {
                angles: standard_angles(),
                phases: Vec::new(),
                ensemble: r.ensemble,
                seed: r.seed,
                length_km: r.length_km.unwrap_or(0.0),
                settings,
            };
            let res = run_teleportation(&cfg)?;
            let rows = res
                .rows
                .iter()
                .map(|row| {
                    vec![json!(row.theta), json!(row.expected), json!(row.observed), json!(row.ones), json!(row.trials)]
                })
                .collect();
            Ok(DemoOutput {
                columns: vec!["theta", "expected", "observed", "ones", "trials"],
                rows,
                summary: format!("teleportation: {} angles x {} systems", cfg.angles.len(), cfg.ensemble),
                report: json!({ "run": res.report }),
            })
        }
        Demo::Superdense => {
            let data = load_data(&r.data, 1000, r.seed)?;
            let mut cfg = SuperdenseConfig::new(data);
            cfg.seed = r.seed;
            cfg.length_km = r.length_km.unwrap_or(cfg.length_km);
            cfg.db_per_km = r.attenuation.unwrap_or(FIBER_DB_PER_KM);
            cfg.settings = settings;
            let res = run_superdense(&cfg)?;
            let (sent, got) = (cfg.data.bits(), res.received.bits());
            let evens = |b: &[u8]| b.iter().step_by(2).copied().collect::<Vec<u8>>();
            let odds = |b: &[u8]| b.iter().skip(1).step_by(2).copied().collect::<Vec<u8>>();
            Ok(DemoOutput {
                columns: vec!["pair", "sent_b1", "sent_b2", "received_b1", "received_b2"],
                rows: bit_rows(&[&evens(sent), &odds(sent), &evens(got), &odds(got)]),
                summary: format!(
                    "superdense: {} bits, {} mismatched, {} qubits lost",
                    cfg.data.len(),
                    cfg.data.mismatches(&res.received),
                    res.report.lost_qubits
                ),
                report: json!({
                    "mismatched_bits": cfg.data.mismatches(&res.received),
                    "received_text": (cfg.data.origin() != crate::protocols::Origin::Generated).then(|| res.received.to_text_lossy()),
                    "run": res.report,
                }),
            })
        }
        Demo::Interception => {
            let data = load_data(&r.data, 1000, r.seed)?;
            let mut cfg = InterceptionConfig::new(data);
            cfg.seed = r.seed;
            cfg.length_km = r.length_km.unwrap_or(cfg.length_km);
            cfg.db_per_km = r.attenuation.unwrap_or(0.0);
            cfg.settings = settings;
            let res = run_interception(&cfg)?;
            let (sent, got) = (cfg.data.bits(), res.bob.bits());
            let evens = |b: &[u8]| b.iter().step_by(2).copied().collect::<Vec<u8>>();
            let odds = |b: &[u8]| b.iter().skip(1).step_by(2).copied().collect::<Vec<u8>>();
            Ok(DemoOutput {
                columns: vec!["pair", "sent_b1", "sent_b2", "eve", "bob_b1", "bob_b2"],
                rows: bit_rows(&[&evens(sent), &odds(sent), res.eve.bits(), &evens(got), &odds(got)]),
                summary: format!(
                    "interception: {} bits, Bob mismatched {}",
                    cfg.data.len(),
                    cfg.data.mismatches(&res.bob)
                ),
                report: json!({ "mismatched_bits": cfg.data.mismatches(&res.bob), "run": res.report }),
            })
        }
        Demo::Shor => {
            let data = load_data(&r.data, 64, r.seed)?;
            let mut cfg = ShorConfig::new(data);
            cfg.seed = r.seed;
            cfg.settings = settings;
            let res = run_shor_demo(&cfg)?;
            let records = |log: &[crate::channels::CorruptionRecord]| -> Vec<Value> {
                log.iter()
                    .map(|c| json!({ "system": c.system, "position": c.position, "flip_weight": c.flip_weight() }))
                    .collect()
            };
            let text = (cfg.message.origin() != crate::protocols::Origin::Generated)
                .then(|| json!({ "protected": res.protected.to_text_lossy(), "unprotected": res.unprotected.to_text_lossy() }));
            Ok(DemoOutput {
                columns: vec!["bit", "sent", "protected", "unprotected"],
                rows: bit_rows(&[cfg.message.bits(), res.protected.bits(), res.unprotected.bits()]),
                summary: format!(
                    "shor: {} bits, protected errors {}, unprotected errors {}",
                    cfg.message.len(),
                    cfg.message.mismatches(&res.protected),
                    cfg.message.mismatches(&res.unprotected)
                ),
                report: json!({
                    "protected_errors": cfg.message.mismatches(&res.protected),
                    "unprotected_errors": cfg.message.mismatches(&res.unprotected),
                    "text": text,
                    "protected_corruptions": records(&res.protected_log),
                    "unprotected_corruptions": records(&res.unprotected_log),
                    "run": res.report,
                }),
            })
        }
    }
}

fn report_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into());
    out.with_file_name(format!("{stem}.report.json"))
}

fn pretty(v: &Value) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(v).expect("values serialize");
    bytes.push(b'\n');
    bytes
}

fn write_output(r: &Resolved, output: &DemoOutput, stdout: &mut dyn Write) -> Result<(), Error> {
    let body = match r.format {
        Format::Csv => output.to_csv()?,
        Format::Json => pretty(&output.to_json()),
    };
    match &r.out {
        Some(path) => {
            fs::write(path, body)?;
            if r.format == Format::Csv {
                fs::write(report_path(path), pretty(&output.report))?;
            }
        }
        None => stdout.write_all(&body)?,
    }
    Ok(())
}

fn demo_catalogue() -> Value {
    json!([
        {
            "name": "teleportation",
            "description": "teleport R_X(theta)|0> for theta = k*pi/4, k = 0..8, and report the observed |1> fraction",
            "parameters": ["ensemble", "seed", "length-km", "pulse-ns", "signal-speed-km-s", "precision"]
        },
        {
            "name": "superdense",
            "description": "superdense coding over fiber with a midpoint Bell-pair source; lost qubits decode as (0,0)",
            "parameters": ["bits | message | input", "seed", "length-km", "attenuation-db-per-km", "pulse-ns", "signal-speed-km-s", "precision"]
        },
        {
            "name": "interception",
            "description": "superdense coding with an eavesdropper measuring and resending every qubit",
            "parameters": ["bits | message | input", "seed", "length-km", "attenuation-db-per-km", "pulse-ns", "signal-speed-km-s", "precision"]
        },
        {
            "name": "shor",
            "description": "send a message Shor-encoded and unencoded through channels corrupting one qubit per group of nine",
            "parameters": ["bits | message | input", "seed", "pulse-ns", "precision"]
        }
    ])
}

fn list(json_out: bool, stdout: &mut dyn Write) -> std::io::Result<()> {
    let catalogue = demo_catalogue();
    if json_out {
        return stdout.write_all(&pretty(&catalogue));
    }
    for demo in catalogue.as_array().into_iter().flatten() {
        writeln!(stdout, "{:<14} {}", demo["name"].as_str().unwrap_or(""), demo["description"].as_str().unwrap_or(""))?;
    }
    writeln!(stdout)?;
    writeln!(stdout, "usage: qnet run <demo> [--seed N] [--out FILE] ... or qnet run --config run.toml")?;
    writeln!(stdout, "config keys: demo, ensemble, seed, precision, progress, watchdog_s,")?;
    writeln!(stdout, "  [channel] length_km, attenuation_db_per_km, signal_speed_km_s, pulse_ns,")?;
    writeln!(stdout, "  [data] bits | message | input, [output] path, format")
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Configuration(_) | Error::Size { .. } => EXIT_CONFIG,
        _ => EXIT_RUN,
    }
}

/// Entry point with injectable arguments and output streams; returns the
/// process exit status.
pub fn main_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { stderr.write_all(text.as_bytes()) } else { stdout.write_all(text.as_bytes()) };
            return code;
        }
    };
    match cli.command {
        Command::List { json } => match list(json, stdout) {
            Ok(()) => EXIT_OK,
            Err(e) => {
                let _ = writeln!(stderr, "error: {e}");
                EXIT_RUN
            }
        },
        Command::Run(args) => {
            let resolved = match load_config(args.config.as_deref()).and_then(|file| resolve(*args, file)) {
                Ok(r) => r,
                Err(e) => {
                    let _ = writeln!(stderr, "error: {e}");
                    return EXIT_CONFIG;
                }
            };
            let result = execute(&resolved).and_then(|out| write_output(&resolved, &out, stdout).map(|()| out));
            match result {
                Ok(out) => {
                    let _ = writeln!(stderr, "{}", out.summary);
                    EXIT_OK
                }
                Err(e) => {
                    let _ = writeln!(stderr, "error: {e}");
                    exit_code(&e)
                }
            }
        }
    }
}
