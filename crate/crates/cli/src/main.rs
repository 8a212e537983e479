use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use pnoc_approx::codec::{codec_cost, encode_flit, GateKind, GateRange, Gating, Scheme};
use pnoc_approx::kv::KvTable;
use pnoc_approx::photonics::{DeviceParams, Modulation, ModulationMode};
use pnoc_approx::quality::{select_policy, sweep, Kernel, SweepSpec, DEFAULT_THRESHOLD_PCT};
use pnoc_approx::sim::config::RUN_KEYS;
use pnoc_approx::sim::trace::to_jsonl;
use pnoc_approx::sim::{compare, run, RunConfig, SimError, SimReport, Trace};
use pnoc_approx::topology::{power_profile, provisioned_wavelength_dbm, worst_case_loss, Topology, TopologyKind};
use pnoc_approx::tracegen::{generate, Profile, BUNDLED_SEED};
use serde_json::json;

#[derive(Debug, Parser)]
#[command(name = "pnoc-sim", version, about = "Approximate photonic NoC simulator")]
struct Cli {
    /// Device parameter preset: standard or aggressive
    #[arg(long, global = true)]
    params: Option<String>,
    /// clos or swiftnoc
    #[arg(long, global = true)]
    topology: Option<String>,
    /// ook or pam4
    #[arg(long, global = true)]
    modulation: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file (stdout when omitted)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one trace through the network and write a JSON report
    Simulate {
        /// key = value run file
        #[arg(long)]
        config: Option<PathBuf>,
        /// JSON-lines trace
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        variant: Option<String>,
        /// Application policy preset
        #[arg(long)]
        app: Option<String>,
        #[arg(long)]
        relaxed_tuning: bool,
        /// Also write the per-GWI variation shifts as CSV
        #[arg(long)]
        emit_variation_map: Option<PathBuf>,
    },
    /// Normalize reports against the baseline
    Compare {
        #[arg(long, num_args = 2.., required = true)]
        reports: Vec<PathBuf>,
        #[arg(long)]
        csv: bool,
    },
    /// Output-quality grid over approximated bits and power reduction
    Sweep {
        #[arg(long)]
        kernel: Kernel,
        /// Float mantissa LSB counts
        #[arg(long, value_delimiter = ',')]
        bits: Option<Vec<u32>>,
        /// Integer MSB counts
        #[arg(long, value_delimiter = ',')]
        int_bits: Option<Vec<u32>>,
        /// Power reductions in percent
        #[arg(long, value_delimiter = ',')]
        power: Option<Vec<f64>>,
        #[arg(long)]
        size: Option<usize>,
        /// Error threshold in percent
        #[arg(long, default_value_t = DEFAULT_THRESHOLD_PCT)]
        threshold: f64,
    },
    /// Laser power needed along the waveguide as CSV
    PowerProfile {
        /// Sampling step in cm
        #[arg(long, default_value_t = 0.01)]
        resolution: f64,
    },
    /// Topology inspection
    Topology {
        #[command(subcommand)]
        action: TopologyAction,
    },
    /// Encode hex flits read from stdin, one per line
    Encode {
        #[arg(long, default_value = "pctm5b")]
        scheme: Scheme,
        /// Approximated bit range `lo..hi` sent raw, e.g. 0..16
        #[arg(long)]
        gate: Vec<String>,
        /// Truncated bit range `lo..hi`, never sent
        #[arg(long)]
        truncate: Vec<String>,
    },
    /// Write a synthetic JSON-lines trace
    GenTrace {
        #[arg(long, default_value = "mixed")]
        profile: Profile,
        #[arg(long, default_value_t = 10_000)]
        packets: usize,
    },
}

#[derive(Debug, Subcommand)]
enum TopologyAction {
    /// Preset geometry and provisioning as JSON
    Describe,
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Input(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Input(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Input(m) => m,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn one_line(rendered: &str) -> String {
    rendered
        .lines()
        .take_while(|l| !l.starts_with("Usage:"))
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand {
                eprintln!("error: a subcommand is required (see --help)");
            } else {
                eprintln!("{}", one_line(&e.render().to_string()));
            }
            return ExitCode::from(1);
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}

fn dispatch(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Simulate {
            config,
            trace,
            variant,
            app,
            relaxed_tuning,
            emit_variation_map,
        } => {
            if cli.format == Some(Format::Csv) {
                return Err(CliError::Config("simulate writes JSON reports only".into()));
            }
            let mut overrides = BTreeMap::new();
            for (key, value) in [
                ("topology", cli.topology.clone()),
                ("params", cli.params.clone()),
                ("modulation", cli.modulation.clone()),
                ("variant", variant.clone()),
                ("app", app.clone()),
                ("seed", cli.seed.map(|s| s.to_string())),
                ("relaxed_tuning", relaxed_tuning.then(|| "true".to_string())),
            ] {
                if let Some(v) = value {
                    overrides.insert(key, v);
                }
            }
            let cfg = load_config(config.as_deref(), &overrides)?;
            let records = load_trace(trace)?;
            let report = run(&cfg, &records).map_err(|e| match e {
                SimError::Config(m) => CliError::Config(m),
                SimError::Input { line, message } => CliError::Input(format!("{}:{line}: {message}", trace.display())),
            })?;
            if let Some(path) = emit_variation_map {
                write_atomic(path, &report.variation_map.to_csv())?;
            }
            emit(cli.out.as_deref(), &report.to_json())
        }
        Command::Compare { reports, csv } => {
            let loaded = reports.iter().map(|p| load_report(p)).collect::<CliResult<Vec<_>>>()?;
            let table = compare(&loaded).map_err(|e| CliError::Input(e.to_string()))?;
            for w in &table.warnings {
                eprintln!("warning: {w}");
            }
            let text = if *csv || cli.format == Some(Format::Csv) {
                table.to_csv()
            } else {
                table.to_json()
            };
            emit(cli.out.as_deref(), &text)
        }
        Command::Sweep {
            kernel,
            bits,
            int_bits,
            power,
            size,
            threshold,
        } => {
            let (topo, params, modulation) = globals(cli)?;
            let mut spec = SweepSpec::new(*kernel);
            if let Some(b) = bits {
                spec.float_bits = b.clone();
            }
            if let Some(b) = int_bits {
                spec.int_bits = b.clone();
            }
            if let Some(p) = power {
                spec.power_reduction = p.iter().map(|x| x / 100.0).collect();
            }
            if let Some(s) = size {
                spec.size = *s;
            }
            spec.threshold = *threshold;
            let grid = sweep(&spec, &topo, &params, modulation, cli.seed.unwrap_or(0)).map_err(config_err)?;
            let selection = select_policy(&grid, *threshold);
            match &selection.diagnostic {
                Some(d) => eprintln!("selected: exact policy ({d})"),
                None => eprintln!(
                    "selected: float_bits={} int_msb_bits={} power_reduction={}",
                    selection.policy.float_lsb_bits, selection.policy.int_msb_bits, selection.policy.power_reduction
                ),
            }
            let text = match cli.format {
                Some(Format::Json) => pretty(&json!({
                    "grid": grid,
                    "selected_policy": selection.policy,
                    "diagnostic": selection.diagnostic,
                })),
                _ => grid.to_csv(),
            };
            emit(cli.out.as_deref(), &text)
        }
        Command::PowerProfile { resolution } => {
            let (topo, params, modulation) = globals(cli)?;
            let profile = power_profile(&topo, &params, &modulation, *resolution).map_err(config_err)?;
            let text = match cli.format {
                Some(Format::Json) => pretty(&json!(profile
                    .iter()
                    .map(|(x, p)| json!({"position_cm": x, "p_laser_dbm": p}))
                    .collect::<Vec<_>>())),
                _ => {
                    let mut s = String::from("position_cm,p_laser_dbm\n");
                    for (x, p) in &profile {
                        s.push_str(&format!("{x},{p}\n"));
                    }
                    s
                }
            };
            emit(cli.out.as_deref(), &text)
        }
        Command::Topology {
            action: TopologyAction::Describe,
        } => {
            if cli.format == Some(Format::Csv) {
                return Err(CliError::Config("topology describe writes JSON only".into()));
            }
            let (topo, params, modulation) = globals(cli)?;
            let t = topo.for_modulation(&modulation);
            let text = pretty(&json!({
                "topology": t,
                "gwi_count": t.gwi_count(),
                "modulation": modulation,
                "worst_case_loss_db": worst_case_loss(&t, &params),
                "full_wavelength_dbm": provisioned_wavelength_dbm(&topo, &params, &modulation),
            }));
            emit(cli.out.as_deref(), &text)
        }
        Command::Encode { scheme, gate, truncate } => {
            let mut ranges = Vec::new();
            for (texts, kind) in [(gate, GateKind::Approximated), (truncate, GateKind::Truncated)] {
                for t in texts {
                    ranges.push(GateRange::parse(t, kind).map_err(config_err)?);
                }
            }
            let gating = Gating::from_ranges(&ranges);
            let text = encode_stream(*scheme, &gating, io::stdin().lock(), cli.format)?;
            emit(cli.out.as_deref(), &text)
        }
        Command::GenTrace { profile, packets } => {
            if *packets == 0 {
                return Err(CliError::Config("--packets must be at least 1".into()));
            }
            let (topo, _, _) = globals(cli)?;
            let records = generate(*profile, *packets, topo.gwi_count(), cli.seed.unwrap_or(BUNDLED_SEED));
            emit(cli.out.as_deref(), &to_jsonl(&records))
        }
    }
}

fn pretty(value: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn globals(cli: &Cli) -> CliResult<(Topology, DeviceParams, Modulation)> {
    let kind: TopologyKind = match &cli.topology {
        Some(t) => t.parse().map_err(CliError::Config)?,
        None => TopologyKind::Clos,
    };
    let topo = Topology::preset(kind).ok_or_else(|| config_err(format!("no preset for {kind:?}")))?;
    let params = match &cli.params {
        Some(p) => DeviceParams::preset(p)
            .ok_or_else(|| config_err(format!("unknown params preset `{p}` (expected standard or aggressive)")))?,
        None => DeviceParams::standard(),
    };
    let mode: ModulationMode = match &cli.modulation {
        Some(m) => m.parse().map_err(CliError::Config)?,
        None => ModulationMode::Ook,
    };
    Ok((topo, params, Modulation::new(mode)))
}

/// The run file is validated on its own first so errors cite its lines;
/// command-line overrides are then layered on top.
fn load_config(path: Option<&Path>, overrides: &BTreeMap<&str, String>) -> CliResult<RunConfig> {
    let text = match path {
        Some(p) => fs::read_to_string(p).map_err(|e| config_err(format!("{}: {e}", p.display())))?,
        None => String::new(),
    };
    let name = path
        .map(|p| p.display().to_string())
        .unwrap_or_else(|| "<defaults>".into());
    let cfg = RunConfig::from_kv_str(&text).map_err(|e| config_err(format!("{name}: {e}")))?;
    if overrides.is_empty() {
        return Ok(cfg);
    }
    let table = KvTable::parse(&text).map_err(config_err)?;
    let mut merged: BTreeMap<String, String> = table
        .keys()
        .map(|k| (k.to_string(), table.get(k).unwrap_or_default().to_string()))
        .collect();
    for (k, v) in overrides {
        debug_assert!(RUN_KEYS.contains(k));
        merged.insert((*k).to_string(), v.clone());
    }
    let text: String = merged.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
    RunConfig::from_kv_str(&text).map_err(config_err)
}

fn load_trace(path: &Path) -> CliResult<Trace> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Trace::parse(&text).map_err(|e| CliError::Input(format!("{}:{}: {}", path.display(), e.line, e.message)))
}

fn load_report(path: &Path) -> CliResult<SimReport> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    SimReport::from_json(&text).map_err(|e| CliError::Input(format!("{}:{}: {e}", path.display(), e.line())))
}

fn parse_hex(text: &str) -> Result<u64, String> {
    let digits = text
        .strip_prefix("0x")
        .or_else(|| text.strip_prefix("0X"))
        .unwrap_or(text);
    u64::from_str_radix(digits, 16).map_err(|e| format!("invalid 64-bit hex flit {text:?}: {e}"))
}

fn encode_stream(scheme: Scheme, gating: &Gating, input: impl BufRead, format: Option<Format>) -> CliResult<String> {
    let cost = codec_cost(scheme, gating);
    let csv = format == Some(Format::Csv);
    let mut out = if csv {
        String::from("flit,encoded,bits,encoded_nibbles,extra_bits\n")
    } else {
        String::new()
    };
    for (idx, line) in input.lines().enumerate() {
        let line = line.map_err(|e| CliError::Input(format!("<stdin>:{}: {e}", idx + 1)))?;
        let raw = line.trim();
        if raw.is_empty() {
            continue;
        }
        let flit = parse_hex(raw).map_err(|m| CliError::Input(format!("<stdin>:{}: {m}", idx + 1)))?;
        let framed = encode_flit(scheme, flit, gating);
        if csv {
            out.push_str(&format!(
                "{flit:016x},{},{},{},{}\n",
                framed.hex(),
                framed.len,
                cost.encoded_nibbles,
                cost.extra_bits
            ));
        } else {
            let obj = json!({
                "flit": format!("{flit:016x}"),
                "encoded": framed.hex(),
                "bits": framed.len,
                "cost": cost,
            });
            out.push_str(&obj.to_string());
            out.push('\n');
        }
    }
    Ok(out)
}

fn write_atomic(path: &Path, text: &str) -> CliResult<()> {
    let fail = |e: io::Error| config_err(format!("{}: {e}", path.display()));
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(fail)?;
    tmp.write_all(text.as_bytes()).map_err(fail)?;
    tmp.persist(path).map_err(|e| fail(e.error))?;
    Ok(())
}

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => write_atomic(p, text),
        None => {
            let mut stdout = io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|()| stdout.flush())
                .map_err(|e| config_err(format!("stdout: {e}")))
        }
    }
}
