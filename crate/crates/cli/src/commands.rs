use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use emodm_baselines::{run_comparison, ComparisonConfig, Lof};
use emodm_core::{
    aggregate_sum, log10_transform, read_csv, DetectionConfig, FitConfig, Layout, MixtureParams,
    OnlineDetectorState, RawSeries, ReadOptions, Timestamp,
};
use emodm_sim::{run_benchmark, run_llg_benchmark, InputKind, LlgBenchmarkConfig, SallenKeyConfig, SimTrace};
use serde::Serialize;
use serde_json::json;

use crate::error::{CliError, CliResult};
use crate::{CommonFlags, CompareArgs, DetectArgs, DetectorFlags, InputLayout, Preset, SimKind, SimulateArgs, StreamArgs};

pub const SCHEMA_VERSION: u32 = 1;

/// Human-readable summary line; a closed stdout is not an error.
macro_rules! say {
    ($($arg:tt)*) => {{
        let _ = writeln!(io::stdout(), $($arg)*);
    }};
}

fn detection_config(flags: &DetectorFlags, seed: u64) -> CliResult<DetectionConfig> {
    let config = DetectionConfig {
        alpha_f: flags.threshold,
        warmup_count: flags.warmup,
        refit_period: flags.refit_period,
        fit: FitConfig { seed, ..FitConfig::default() },
    };
    config.validate().map_err(CliError::usage)?;
    Ok(config)
}

fn prepare_output(common: &CommonFlags) -> CliResult<()> {
    fs::create_dir_all(&common.output_dir)
        .map_err(|e| CliError::data(e).context(format!("creating {}", common.output_dir.display())))
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn write_manifest(common: &CommonFlags, command: &str, args: &impl Serialize, extra: serde_json::Value) -> CliResult<()> {
    let manifest = json!({
        "schema_version": SCHEMA_VERSION,
        "tool_version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "seed": common.seed,
        "arguments": args,
        "resolved": extra,
    });
    write_json(&common.output_dir.join("manifest.json"), &manifest)
}

fn load_series(args: &DetectArgs) -> CliResult<(RawSeries, String)> {
    let path = &args.input;
    let io_context = |e: CliError| e.context(format!("reading {}", path.display()));
    if args.layout == InputLayout::Trace {
        let trace = SimTrace::read_csv_path(path).map_err(|e| io_context(e.into()))?;
        let times = trace.times.iter().map(|&t| Timestamp::Seconds(t)).collect();
        return Ok((RawSeries::with_timestamps(trace.outputs, times)?, "output".into()));
    }
    let layout = match args.layout {
        InputLayout::Long => Layout::Long,
        _ => Layout::Wide,
    };
    let data = read_csv(path, &ReadOptions { layout, frequency_hint: None }).map_err(|e| io_context(e.into()))?;
    match &args.key {
        Some(k) => Ok((data.get(k)?.clone(), k.clone())),
        None => {
            let keys: Vec<&str> = data.keys().collect();
            let label = if keys.len() == 1 { keys[0].to_string() } else { format!("sum({})", keys.join("+")) };
            Ok((aggregate_sum(&data, &keys)?, label))
        }
    }
}

#[derive(Serialize)]
struct SegmentEntry {
    start: usize,
    end: usize,
    origin_start: usize,
    origin_end: usize,
    start_timestamp: Option<String>,
    end_timestamp: Option<String>,
}

#[derive(Serialize)]
struct DetectReport<'a> {
    schema_version: u32,
    series: &'a str,
    alpha_f: f64,
    params: MixtureParams,
    failure_probability: f64,
    converged: bool,
    iterations: usize,
    final_loglik: f64,
    rate_count: usize,
    valid_count: usize,
    flagged: &'a [usize],
    flagged_origins: Vec<usize>,
    segments: Vec<SegmentEntry>,
}

pub fn detect(args: &DetectArgs) -> CliResult<()> {
    let config = detection_config(&args.detector, args.common.seed)?;
    let (mut raw, series) = load_series(args)?;
    if args.log10 {
        raw = log10_transform(&raw)?;
    }
    let d = emodm_core::detect(&raw, &config)?;
    let rates = &d.rates;
    let report = &d.report;
    let stamp = |origin: usize| raw.timestamp(origin).map(|t| t.to_string());

    prepare_output(&args.common)?;
    let segments = report
        .segments
        .iter()
        .zip(report.segment_origins(rates))
        .map(|(&(start, end), (origin_start, origin_end))| SegmentEntry {
            start,
            end,
            origin_start,
            origin_end,
            start_timestamp: stamp(origin_start),
            end_timestamp: stamp(origin_end),
        })
        .collect();
    let out = DetectReport {
        schema_version: SCHEMA_VERSION,
        series: &series,
        alpha_f: config.alpha_f,
        params: report.params,
        failure_probability: report.failure_probability,
        converged: d.fit.converged,
        iterations: d.fit.iterations_used,
        final_loglik: d.fit.final_loglik(),
        rate_count: rates.len(),
        valid_count: rates.valid_count(),
        flagged: &report.flagged,
        flagged_origins: report.flagged_origins(rates),
        segments,
    };
    write_json(&args.common.output_dir.join("report.json"), &out)?;

    let mut w = csv::Writer::from_path(args.common.output_dir.join("posteriors.csv"))?;
    w.write_record(["index", "timestamp", "rate", "posterior", "flagged"])?;
    let mut flagged = report.flagged.iter().peekable();
    for i in 0..rates.len() {
        let is_flagged = flagged.next_if_eq(&&i).is_some();
        let origin = rates.origin_index()[i];
        w.write_record([
            i.to_string(),
            stamp(origin).unwrap_or_else(|| origin.to_string()),
            rates.get(i).map(|r| r.to_string()).unwrap_or_default(),
            report.posteriors[i].map(|p| p.to_string()).unwrap_or_default(),
            u8::from(is_flagged).to_string(),
        ])?;
    }
    w.flush()?;
    write_manifest(&args.common, "detect", args, json!({ "detection": config, "series": series }))?;
    say!(
        "{} of {} valid rates flagged in {} segments; P_f = {:.6}",
        report.flagged.len(),
        rates.valid_count(),
        report.segments.len(),
        report.failure_probability
    );
    Ok(())
}

fn simulate_trace(kind: SimKind, preset: Preset, mc_draws: Option<usize>, seed: u64) -> CliResult<(SimTrace, serde_json::Value)> {
    match kind {
        SimKind::SallenKey => {
            let input = match preset {
                Preset::PaperSingle => InputKind::Single,
                Preset::PaperDouble => InputKind::Double,
                Preset::PaperMulti => return Err(CliError::usage("sallen-key presets are paper-single and paper-double")),
            };
            let mut c = SallenKeyConfig::paper(input, seed);
            if let Some(n) = mc_draws {
                c.mc_draws = n;
            }
            Ok((run_benchmark(&c)?, serde_json::to_value(&c)?))
        }
        SimKind::Llg => {
            let c = match preset {
                Preset::PaperSingle => LlgBenchmarkConfig::paper_single(seed),
                Preset::PaperMulti => LlgBenchmarkConfig::paper_multi(seed),
                Preset::PaperDouble => return Err(CliError::usage("llg presets are paper-single and paper-multi")),
            };
            if mc_draws.is_some() {
                return Err(CliError::usage("--mc-draws applies to sallen-key only"));
            }
            Ok((run_llg_benchmark(&c)?, serde_json::to_value(&c)?))
        }
    }
}

pub fn simulate(args: &SimulateArgs) -> CliResult<()> {
    let (trace, resolved) = simulate_trace(args.kind, args.preset, args.mc_draws, args.common.seed)?;
    prepare_output(&args.common)?;
    trace.write_csv_path(args.common.output_dir.join("trace.csv"))?;
    write_manifest(&args.common, "simulate", args, resolved)?;
    say!(
        "{} periods, abnormal segments {:?}",
        trace.len(),
        trace.abnormal_segments()
    );
    Ok(())
}

#[derive(Serialize)]
struct StreamSummary {
    processed: usize,
    skipped: usize,
    alarms: usize,
    failure_probability: Option<f64>,
}

pub fn stream(args: &StreamArgs) -> CliResult<()> {
    let config = detection_config(&args.detector, args.common.seed)?;
    let reader: Box<dyn BufRead> = match &args.input {
        Some(p) if p.as_os_str() != "-" => Box::new(BufReader::new(
            File::open(p).map_err(|e| CliError::data(e).context(format!("reading {}", p.display())))?,
        )),
        _ => Box::new(io::stdin().lock()),
    };
    prepare_output(&args.common)?;
    write_manifest(&args.common, "stream", args, json!({ "detection": config }))?;

    let stdout = io::stdout();
    let mut out = stdout.lock();
    let mut state = OnlineDetectorState::new();
    let mut skipped = 0;
    let mut alarms = 0;
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        let value = match text.parse::<f64>() {
            Ok(v) if v.is_finite() => v,
            _ => {
                log::warn!("line {}: cannot parse {text:?}, skipped", n + 1);
                skipped += 1;
                continue;
            }
        };
        if let Some(alarm) = state.step_alarm(value, &config)? {
            alarms += 1;
            serde_json::to_writer(&mut out, &alarm)?;
            writeln!(out)?;
        }
    }
    let summary = StreamSummary {
        processed: state.len(),
        skipped,
        alarms,
        failure_probability: state.last_params().map(|p| p.abnormal_weight),
    };
    serde_json::to_writer(&mut out, &json!({ "summary": summary }))?;
    writeln!(out)?;
    Ok(())
}

pub fn compare(args: &CompareArgs) -> CliResult<()> {
    let seed = args.common.seed;
    let (trace, source) = match (&args.input, args.preset) {
        (Some(p), _) => {
            let t = SimTrace::read_csv_path(p).map_err(|e| CliError::from(e).context(format!("reading {}", p.display())))?;
            (t, json!({ "input": p }))
        }
        (None, Some(preset)) => {
            let (t, resolved) = simulate_trace(args.kind, preset, args.mc_draws, seed)?;
            (t, json!({ "simulation": resolved }))
        }
        (None, None) => return Err(CliError::usage("compare needs --input or --preset")),
    };
    let config = ComparisonConfig {
        emodm: detection_config(&args.detector, seed)?,
        lof: args.lof.then(Lof::default),
        ..ComparisonConfig::default()
    };
    let table = run_comparison(&trace, &config, seed)?;
    prepare_output(&args.common)?;
    table.write_csv(File::create(args.common.output_dir.join("comparison.csv"))?)?;
    table.write_json(File::create(args.common.output_dir.join("comparison.json"))?)?;
    write_manifest(&args.common, "compare", args, json!({ "comparison": config, "source": source }))?;
    for r in &table.rows {
        match (&r.error, r.detected) {
            (Some(e), _) => say!("{:<8} error: {e}", r.method),
            (None, Some(n)) => say!(
                "{:<8} detected {n:>4}  fraction {:.4}  segment recall {}",
                r.method,
                r.abnormal_fraction.unwrap_or(f64::NAN),
                r.segment_recall.map_or("n/a".to_string(), |v| format!("{v:.2}"))
            ),
            (None, None) => {}
        }
    }
    Ok(())
}
