//! `accel-predict` command line.
//!
//! Exit codes: 0 success, 1 internal error, 2 bad input or illegal mapping,
//! 3 analytic/oracle mismatch.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use accel_predict::dse::{explore, order_with_prefix, Objective, SearchResult, SearchSpace, Strategy};
use accel_predict::dsl::{load_mapping, parse};
use accel_predict::loopnest::{refresh_plan, validate_nest, Mapping};
use accel_predict::model::{HardwareConfig, LayerShape, MemLevel, ModelOptions};
use accel_predict::oracle::{check_plan, CheckReport, DEFAULT_ITERATION_CAP};
use accel_predict::predictor::{aggregate, predict_layer, NetworkReport, PredictionReport};
use accel_predict::presets::{
    self, hardware_preset, layer_preset, RefreshPreset, HARDWARE_PRESETS, MAPPING_PRESETS,
    NETWORK_PRESETS,
};
use accel_predict::report::{access_counts_csv, prediction_csv, to_canonical_json};
use accel_predict::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};

const PRESET: &str = "preset:";

#[derive(Parser)]
#[command(name = "accel-predict", version, about = "Analytical energy and latency model for DNN accelerator dataflows")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Energy, latency and throughput of a mapping.
    Predict {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        model: ModelFlags,
        #[command(flatten)]
        out: Output,
    },
    /// Compare the closed form with the loop-execution oracle.
    Check {
        #[arg(long)]
        layer: String,
        #[arg(long)]
        mapping: String,
        /// Largest nest the oracle will execute, in body iterations.
        #[arg(long, default_value_t = DEFAULT_ITERATION_CAP)]
        cap: u64,
        #[command(flatten)]
        model: ModelFlags,
        #[command(flatten)]
        out: Output,
        /// Corrupt the analytic GB weight volume by one (exercises the mismatch path).
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
    /// Search mappings for one layer.
    Explore {
        #[arg(long)]
        layer: String,
        #[arg(long)]
        hw: String,
        /// Levels that may hold loops, comma separated.
        #[arg(long, default_value = "DRAM,GB,RF", value_delimiter = ',')]
        levels: Vec<String>,
        /// Start from a bundled search template instead of `--levels`.
        #[arg(long)]
        template: Option<String>,
        /// Refresh presets to try, comma separated.
        #[arg(long, value_delimiter = ',')]
        refresh: Vec<String>,
        #[arg(long, default_value = "edp")]
        objective: String,
        #[arg(long, value_enum, default_value_t = StrategyArg::Exhaustive)]
        strategy: StrategyArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 16)]
        width: usize,
        #[arg(long)]
        top: Option<usize>,
        /// Largest space searched exhaustively.
        #[arg(long)]
        cap: Option<u64>,
        #[arg(long)]
        allow_nondivisor: bool,
        #[command(flatten)]
        model: ModelFlags,
        #[command(flatten)]
        out: Output,
    },
    /// Check a mapping against a hardware config.
    Validate {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        model: ModelFlags,
    },
    /// Print a `.dflow` file in canonical form.
    Fmt {
        file: PathBuf,
        /// Rewrite the file instead of printing.
        #[arg(long)]
        write: bool,
    },
    /// List bundled presets.
    Presets {
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
}

#[derive(Args)]
struct Inputs {
    /// Layer JSON (one layer or a list), or `preset:NAME`.
    #[arg(long)]
    layer: String,
    /// Hardware JSON, or `preset:NAME`.
    #[arg(long)]
    hw: String,
    /// `.dflow` or mapping JSON, or `preset:NAME`.
    #[arg(long)]
    mapping: String,
}

#[derive(Args)]
struct ModelFlags {
    #[arg(long)]
    assume_stride_one: bool,
    #[arg(long)]
    literal_eq8: bool,
    #[arg(long)]
    gb_latency_multicast_aware: bool,
    #[arg(long, default_value_t = 2)]
    psum_rw_factor: u64,
}

impl ModelFlags {
    fn options(&self) -> ModelOptions {
        ModelOptions {
            assume_stride_one: self.assume_stride_one,
            literal_eq8: self.literal_eq8,
            gb_latency_multicast_aware: self.gb_latency_multicast_aware,
            psum_rw_factor: self.psum_rw_factor,
        }
    }
}

#[derive(Args)]
struct Output {
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
    /// Write to a file instead of stdout.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Table,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Exhaustive,
    Random,
    Beam,
}

#[derive(Debug)]
enum Failure {
    User(String),
    Mismatch(String),
    Internal(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Internal(_) => 1,
            Failure::User(_) => 2,
            Failure::Mismatch(_) => 3,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Csv(_) => Failure::Internal(e.to_string()),
            Error::Illegal(v) | Error::InvalidLayer(v) | Error::InvalidHardware(v) => {
                let mut msg = String::from("invalid input:");
                for x in v.iter() {
                    let _ = write!(msg, "\n  {x}");
                }
                Failure::User(msg)
            }
            other => Failure::User(other.to_string()),
        }
    }
}

type Run<T = ()> = Result<T, Failure>;

fn read(path: &Path) -> Run<String> {
    std::fs::read_to_string(path).map_err(|e| Failure::User(format!("cannot read {}: {e}", path.display())))
}

fn preset_name(arg: &str) -> Option<&str> {
    arg.strip_prefix(PRESET)
}

fn load_layers(arg: &str) -> Run<Vec<LayerShape>> {
    let layers = match preset_name(arg) {
        Some(name) => layer_preset(name)?,
        None => {
            let path = Path::new(arg);
            let text = read(path)?;
            let parsed = if text.trim_start().starts_with('[') {
                serde_json::from_str::<Vec<LayerShape>>(&text)
            } else {
                serde_json::from_str::<LayerShape>(&text).map(|l| vec![l])
            };
            parsed.map_err(|e| Failure::User(format!("{}: {e}", path.display())))?
        }
    };
    if layers.is_empty() {
        return Err(Failure::User(format!("{arg}: no layers")));
    }
    for l in &layers {
        l.validate()?;
    }
    Ok(layers)
}

fn load_one_layer(arg: &str) -> Run<LayerShape> {
    let mut layers = load_layers(arg)?;
    if layers.len() != 1 {
        return Err(Failure::User(format!("{arg} holds {} layers; give one", layers.len())));
    }
    Ok(layers.remove(0))
}

fn load_hw(arg: &str) -> Run<HardwareConfig> {
    let hw = match preset_name(arg) {
        Some(name) => hardware_preset(name)?,
        None => {
            let path = Path::new(arg);
            serde_json::from_str(&read(path)?).map_err(|e| Failure::User(format!("{}: {e}", path.display())))?
        }
    };
    hw.validate()?;
    Ok(hw)
}

/// Reads a mapping file once; lowering happens per layer.
enum MappingSource {
    Text(PathBuf, String),
    Preset(String),
}

impl MappingSource {
    fn open(arg: &str) -> Run<Self> {
        match preset_name(arg) {
            Some(name) if MAPPING_PRESETS.contains(&name) => Ok(MappingSource::Preset(name.to_string())),
            Some(name) => Err(Error::UnknownPreset(name.to_string()).into()),
            None => {
                let path = PathBuf::from(arg);
                let text = read(&path)?;
                Ok(MappingSource::Text(path, text))
            }
        }
    }

    fn bind(&self, layer: &LayerShape, hw: Option<&HardwareConfig>, options: &ModelOptions) -> Run<Mapping> {
        match self {
            MappingSource::Text(path, text) => load_mapping(text, layer).map_err(|e| match e {
                Error::Dsl(d) => Failure::User(format!("{}:{}:{}: {}", path.display(), d.line, d.column, d.message)),
                Error::Json(j) => Failure::User(format!("{}: {j}", path.display())),
                other => other.into(),
            }),
            MappingSource::Preset(name) => {
                let hw = match hw {
                    Some(hw) => hw.clone(),
                    None => presets::eyeriss_normalized(),
                };
                Ok(presets::mapping_preset(name, layer, &hw, options)?)
            }
        }
    }
}

fn emit(out: &Output, text: String) -> Run {
    match &out.output {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| Failure::User(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn json<T: serde::Serialize>(value: &T) -> Run<String> {
    to_canonical_json(value).map_err(|e| Failure::Internal(e.to_string()))
}

fn illegal(violations: accel_predict::Violations) -> Failure {
    Error::Illegal(violations).into()
}

fn predict(inputs: &Inputs, model: &ModelFlags, out: &Output) -> Run {
    let options = model.options();
    let layers = load_layers(&inputs.layer)?;
    let hw = load_hw(&inputs.hw)?;
    let source = MappingSource::open(&inputs.mapping)?;
    if layers.len() > 1 && matches!(source, MappingSource::Text(..)) {
        return Err(Failure::User(format!(
            "a mapping file fits one layer but {} holds {}",
            inputs.layer,
            layers.len()
        )));
    }
    let mut reports = Vec::with_capacity(layers.len());
    for layer in &layers {
        let mapping = source.bind(layer, Some(&hw), &options)?;
        validate_nest(&mapping.nest, &hw, &mapping.refresh, &options).map_err(illegal)?;
        reports.push(predict_layer(&mapping, &hw, &options)?);
    }
    let text = match out.format {
        Format::Json if reports.len() == 1 => json(&reports[0])?,
        Format::Json => json(&NetworkReport {
            total: aggregate(&reports, &options)?,
            layers: reports,
        })?,
        Format::Csv => prediction_csv(&reports).map_err(|e| Failure::Internal(e.to_string()))?,
        Format::Table => {
            let mut rows = reports.clone();
            if reports.len() > 1 {
                rows.push(aggregate(&reports, &options)?);
            }
            prediction_table(&rows)
        }
    };
    emit(out, text)
}

fn prediction_table(rows: &[PredictionReport]) -> String {
    let mut s = format!(
        "{:<14} {:>7} {:>7} {:>7} {:>7} {:>8} {:>12} {:>12} {:>9} {:>6}\n",
        "layer", "comp%", "RF%", "NoC%", "GB%", "DRAM%", "energy_eu", "latency_s", "GOPS", "bound"
    );
    for r in rows {
        let b = &r.energy.on_chip_breakdown;
        let bound = serde_json::to_value(r.latency.bound_by)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        let _ = writeln!(
            s,
            "{:<14} {:>7.1} {:>7.1} {:>7.1} {:>7.1} {:>8.1} {:>12.4e} {:>12.4e} {:>9.2} {:>6}",
            r.layer,
            b.comp_pct,
            b.rf_pct,
            b.noc_pct,
            b.gb_pct,
            r.energy.breakdown.dram_pct,
            r.energy.total_eu,
            r.latency.l_total_s,
            r.throughput_gops,
            bound
        );
    }
    s.push_str("comp/RF/NoC/GB are shares of on-chip energy; DRAM% is a share of the total.\n");
    s
}

fn check(
    layer: &str,
    mapping: &str,
    cap: u64,
    model: &ModelFlags,
    out: &Output,
    inject_fault: bool,
) -> Run {
    let options = model.options();
    let layer = load_one_layer(layer)?;
    let mapping = MappingSource::open(mapping)?.bind(&layer, None, &options)?;
    let mut plan = refresh_plan(&mapping.nest, &mapping.refresh, &options)?;
    if inject_fault {
        plan.gb.weight.v_ref += 1;
    }
    let report = check_plan(&mapping, &plan, &options, cap)?;
    let text = match out.format {
        Format::Json => json(&report)?,
        Format::Csv => access_counts_csv([("analytic", &report.analytic), ("oracle", &report.oracle.accesses)])
            .map_err(|e| Failure::Internal(e.to_string()))?,
        Format::Table => check_table(&report),
    };
    emit(out, text)?;
    if report.is_match() {
        Ok(())
    } else {
        Err(Failure::Mismatch(format!("{} quantities differ from the oracle", report.diffs.len())))
    }
}

fn check_table(r: &CheckReport) -> String {
    let mut s = format!("{:<6} {:<7} {:>16} {:>16}\n", "level", "kind", "analytic", "oracle");
    for level in MemLevel::ALL {
        for (kind, a) in r.analytic[level].iter() {
            let o = r.oracle.accesses[level][kind];
            let mark = if *a == o { "" } else { "  <-- differs" };
            let _ = writeln!(s, "{:<6} {:<7} {:>16} {:>16}{mark}", level, kind, a, o);
        }
    }
    for d in &r.diffs {
        let q = serde_json::to_value(d.quantity)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        let _ = writeln!(s, "diff {q} {} {}: analytic {} oracle {}", d.level, d.kind, d.analytic, d.oracle);
    }
    if r.is_match() {
        s.push_str("match\n");
    }
    s
}

fn template_space(name: &str) -> Run<SearchSpace> {
    match name {
        "row_stationary_like" => Ok(presets::row_stationary_space()),
        _ => Err(Error::UnknownPreset(name.to_string()).into()),
    }
}

#[allow(clippy::too_many_arguments)]
fn run_explore(
    layer: &str,
    hw: &str,
    levels: &[String],
    template: Option<&str>,
    refresh: &[String],
    objective: &str,
    strategy: Strategy,
    top: Option<usize>,
    cap: Option<u64>,
    allow_nondivisor: bool,
    model: &ModelFlags,
    out: &Output,
) -> Run {
    let options = model.options();
    let layer = load_one_layer(layer)?;
    let hw = load_hw(hw)?;
    let objective: Objective = objective.parse().map_err(Failure::User)?;
    let mut space = match template {
        Some(name) => template_space(preset_name(name).unwrap_or(name))?,
        None => {
            let levels = levels
                .iter()
                .map(|l| MemLevel::parse(l.trim()).ok_or_else(|| Failure::User(format!("unknown level `{l}`"))))
                .collect::<Run<Vec<_>>>()?;
            let mut space = SearchSpace::new(&levels);
            space.orderings = accel_predict::PerLevel::from_fn(|_| vec![order_with_prefix(&[])]);
            space.refresh = RefreshPreset::NAMED.to_vec();
            space
        }
    };
    if !refresh.is_empty() {
        space.refresh = refresh
            .iter()
            .map(|r| r.parse::<RefreshPreset>().map_err(Failure::User))
            .collect::<Run<Vec<_>>>()?;
    }
    if let Some(k) = top {
        space.top_k = k.max(1);
    }
    if let Some(c) = cap {
        space.exhaustive_cap = c;
    }
    space.allow_nondivisor |= allow_nondivisor;
    let result = explore(&layer, &hw, &space, objective, strategy, &options)?;
    let text = match out.format {
        Format::Json => json(&result)?,
        Format::Csv => explore_csv(&result),
        Format::Table => explore_table(&result),
    };
    emit(out, text)
}

fn explore_csv(r: &SearchResult) -> String {
    let mut s = String::from("rank,objective,energy_eu,latency_s,throughput_gops\n");
    for (i, x) in r.ranked.iter().enumerate() {
        let _ = writeln!(
            s,
            "{},{:.16e},{:.16e},{:.16e},{:.16e}",
            i + 1,
            x.objective,
            x.report.energy.total_eu,
            x.report.latency.l_total_s,
            x.report.throughput_gops
        );
    }
    s
}

fn explore_table(r: &SearchResult) -> String {
    let mut s = format!("{} candidates in the space; {}\n", r.space_size, r.stats);
    let _ = writeln!(s, "{:>4} {:>14} {:>14} {:>14} {:>9}", "rank", "objective", "energy_eu", "latency_s", "GOPS");
    for (i, x) in r.ranked.iter().enumerate() {
        let _ = writeln!(
            s,
            "{:>4} {:>14.6e} {:>14.6e} {:>14.6e} {:>9.2}",
            i + 1,
            x.objective,
            x.report.energy.total_eu,
            x.report.latency.l_total_s,
            x.report.throughput_gops
        );
    }
    s.push_str("\nbest mapping:\n");
    s.push_str(&r.best().dsl);
    s
}

fn validate(inputs: &Inputs, model: &ModelFlags) -> Run {
    let options = model.options();
    let layer = load_one_layer(&inputs.layer)?;
    let hw = load_hw(&inputs.hw)?;
    let mapping = MappingSource::open(&inputs.mapping)?.bind(&layer, Some(&hw), &options)?;
    validate_nest(&mapping.nest, &hw, &mapping.refresh, &options).map_err(illegal)?;
    println!("ok: {} loops, {} active PEs", mapping.nest.len(), mapping.nest.active_pes());
    Ok(())
}

fn fmt(file: &Path, write: bool) -> Run {
    let text = read(file)?;
    let doc = parse(&text)
        .map_err(|d| Failure::User(format!("{}:{}:{}: {}", file.display(), d.line, d.column, d.message)))?;
    let canonical = doc.canonical();
    if write {
        if canonical != text {
            std::fs::write(file, &canonical)
                .map_err(|e| Failure::User(format!("cannot write {}: {e}", file.display())))?;
        }
    } else {
        print!("{canonical}");
    }
    Ok(())
}

fn list_presets(format: Format) -> Run {
    let hardware: Vec<_> = HARDWARE_PRESETS
        .iter()
        .map(|&n| {
            let hw = hardware_preset(n).expect("bundled preset");
            serde_json::json!({"kind": "hardware", "name": n, "notes": hw.notes.unwrap_or_default()})
        })
        .collect();
    let layers: Vec<_> = NETWORK_PRESETS
        .iter()
        .map(|&n| {
            let names: Vec<String> = layer_preset(n).expect("bundled preset").into_iter().map(|l| l.name).collect();
            serde_json::json!({"kind": "network", "name": n, "notes": format!("layers {}", names.join(", "))})
        })
        .collect();
    let mappings: Vec<_> = MAPPING_PRESETS
        .iter()
        .map(|&n| {
            serde_json::json!({"kind": "mapping", "name": n, "notes":
                "row-stationary template searched per layer for the lowest energy-delay product"})
        })
        .collect();
    let all: Vec<_> = hardware.into_iter().chain(layers).chain(mappings).collect();
    match format {
        Format::Json => print!("{}", json(&all)?),
        Format::Csv | Format::Table => {
            for p in &all {
                println!(
                    "{:<9} {PRESET}{:<22} {}",
                    p["kind"].as_str().unwrap_or_default(),
                    p["name"].as_str().unwrap_or_default(),
                    p["notes"].as_str().unwrap_or_default()
                );
            }
        }
    }
    Ok(())
}

fn configure_threads() -> Run {
    let Ok(v) = std::env::var("ACCEL_PREDICT_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Failure::User(format!("ACCEL_PREDICT_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Internal(e.to_string()))
}

fn run(cli: Cli) -> Run {
    configure_threads()?;
    match cli.command {
        Command::Predict { inputs, model, out } => predict(&inputs, &model, &out),
        Command::Check {
            layer,
            mapping,
            cap,
            model,
            out,
            inject_fault,
        } => check(&layer, &mapping, cap, &model, &out, inject_fault),
        Command::Explore {
            layer,
            hw,
            levels,
            template,
            refresh,
            objective,
            strategy,
            seed,
            samples,
            width,
            top,
            cap,
            allow_nondivisor,
            model,
            out,
        } => {
            let strategy = match strategy {
                StrategyArg::Exhaustive => Strategy::Exhaustive,
                StrategyArg::Random => Strategy::Random { seed, samples },
                StrategyArg::Beam => Strategy::Beam { width },
            };
            run_explore(
                &layer,
                &hw,
                &levels,
                template.as_deref(),
                &refresh,
                &objective,
                strategy,
                top,
                cap,
                allow_nondivisor,
                &model,
                &out,
            )
        }
        Command::Validate { inputs, model } => validate(&inputs, &model),
        Command::Fmt { file, write } => fmt(&file, write),
        Command::Presets { format } => list_presets(format),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::User(m) | Failure::Internal(m) | Failure::Mismatch(m) => eprintln!("error: {m}"),
            }
            ExitCode::from(f.code())
        }
    }
}
