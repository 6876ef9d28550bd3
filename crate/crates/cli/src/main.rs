//! `hbe` — heartbeat classification pipeline.
//!
//! Subcommands cover the whole flow: synthesizing or reading record
//! files, per-patient training, protocol evaluation, ablations, a
//! real-time streaming demo and the per-beat latency benchmark.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or missing input.

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use hbe_core::evaluation::{
    benchmark_latency, run_ablation, run_protocol, train_and_evaluate, AblationVariant,
    EvalResult, ProtocolSpec,
};
use hbe_core::models::{assemble_features, load_bundle, save_bundle, EvalHead, ModelConfig};
use hbe_core::qrs::StreamBuffer;
use hbe_core::record_io::{load_record, DatasetSplit, EcgRecord};
use hbe_core::training::{grid_search, label_record, train_bundle, GridSpec, TrainConfig};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

mod config;

#[derive(Parser)]
#[command(
    name = "hbe",
    version,
    about = "Lightweight per-beat ECG classification pipeline",
    long_about = "Segmentation, RR and wavelet features, two recurrent models with \
blending, patient-specific training and AAMI-style evaluation.\n\n\
Option precedence: command-line flag > config file (--config key=value \
lines) > built-in default. The data directory defaults to $HBE_DATA_DIR, \
then ./data."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Directory with <rec>.dat / <rec>.hea / <rec>.ann.txt files.
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic records in the database file format.
    GenData {
        #[command(flatten)]
        data: DataArgs,
        /// Output directory (defaults to the data directory).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seconds of signal per record.
        #[arg(long, default_value_t = 1800.0)]
        duration_s: f64,
        /// Comma-separated record ids (default: all 44 usable records).
        #[arg(long, value_delimiter = ',')]
        records: Vec<u32>,
    },
    /// Segment a record and dump beats as CSV (debugging aid).
    Segment {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        record: u32,
        /// Output CSV path (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Append wavelet coefficient columns.
        #[arg(long)]
        with_wavelet: bool,
        /// Use lead 1 only.
        #[arg(long)]
        single_lead: bool,
    },
    /// Train one patient's model bundle.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        record: u32,
        /// Bundle output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Minutes of local data (5 or 2.5).
        #[arg(long)]
        minutes: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
        /// key=value overrides, one per line.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Run the hyper-parameter grid search first.
        #[arg(long)]
        grid: bool,
    },
    /// Evaluate trained bundles on a published protocol.
    Evaluate {
        #[command(flatten)]
        data: DataArgs,
        /// One of A_VEB, A_SVEB, B, C.
        #[arg(long)]
        protocol: String,
        /// Directory containing one bundle directory per record id.
        #[arg(long)]
        bundles: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// blend (default), alpha or beta.
        #[arg(long, default_value = "blend")]
        head: String,
    },
    /// Retrain under a model variant and report F1 deltas vs baseline.
    Ablate {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        variant: String,
        #[arg(long, default_value = "C")]
        protocol: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Replay a record through the streaming buffer, classifying beats
    /// as they become available.
    Stream {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        record: u32,
        /// Trained bundle directory; without it beats are emitted
        /// unclassified.
        #[arg(long)]
        bundle: Option<PathBuf>,
        /// Stop after this many emitted beats.
        #[arg(long)]
        limit_beats: Option<usize>,
    },
    /// Single-threaded per-beat inference latency benchmark.
    Bench {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        record: u32,
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long, default_value_t = 5)]
        repetitions: usize,
        /// Cap on how many beats to measure.
        #[arg(long, default_value_t = 200)]
        max_beats: usize,
        /// Write the JSON report here (stdout summary either way).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> std::process::ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            std::process::ExitCode::from(exit_code_for(&err))
        }
    }
}

// Missing inputs and bad requests are usage errors (2); anything else
// is a runtime failure (1).
fn exit_code_for(err: &anyhow::Error) -> u8 {
    if let Some(core) = err.downcast_ref::<hbe_core::Error>() {
        match core {
            hbe_core::Error::MissingBundles(_)
            | hbe_core::Error::ExcludedRecord(_)
            | hbe_core::Error::InvalidArgument(_) => return 2,
            hbe_core::Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => return 2,
            _ => return 1,
        }
    }
    if let Some(io) = err.downcast_ref::<std::io::Error>() {
        if io.kind() == std::io::ErrorKind::NotFound {
            return 2;
        }
    }
    1
}

fn data_dir(args: &DataArgs) -> PathBuf {
    args.data_dir
        .clone()
        .or_else(|| std::env::var_os("HBE_DATA_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("data"))
}

fn load_record_checked(dir: &Path, id: u32) -> anyhow::Result<EcgRecord> {
    DatasetSplit::require_usable(id)?;
    load_record(dir, id).with_context(|| {
        format!(
            "record {id} not loadable from {} (generate data with `hbe gen-data`)",
            dir.display()
        )
    })
}

fn load_protocol_records(
    dir: &Path,
    spec: &ProtocolSpec,
) -> anyhow::Result<BTreeMap<u32, EcgRecord>> {
    let split = DatasetSplit::standard();
    let mut records = BTreeMap::new();
    let mut missing = Vec::new();
    let mut wanted: Vec<u32> = spec.records.clone();
    wanted.extend(&split.global_records);
    wanted.sort_unstable();
    wanted.dedup();
    for id in wanted {
        match load_record(dir, id) {
            Ok(rec) => {
                records.insert(id, rec);
            }
            Err(_) if spec.records.contains(&id) => missing.push(id),
            Err(_) => {} // optional global record
        }
    }
    if !missing.is_empty() {
        return Err(hbe_core::Error::MissingBundles(missing))
            .context("records required by the protocol are missing from the data directory");
    }
    Ok(records)
}

// Build the output directory atomically: fill a sibling then rename.
fn with_atomic_dir(
    out: &Path,
    f: impl FnOnce(&Path) -> anyhow::Result<()>,
) -> anyhow::Result<()> {
    let tmp = out.with_file_name(format!(
        "{}.partial",
        out.file_name()
            .map(|s| s.to_string_lossy().to_string())
            .unwrap_or_else(|| "out".to_string())
    ));
    if tmp.exists() {
        std::fs::remove_dir_all(&tmp)?;
    }
    std::fs::create_dir_all(&tmp)?;
    f(&tmp)?;
    if out.exists() {
        std::fs::remove_dir_all(out)?;
    }
    std::fs::rename(&tmp, out)?;
    Ok(())
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf29ce484222325u64;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

#[derive(serde::Serialize)]
struct Manifest<'a> {
    tool: &'a str,
    version: &'a str,
    subcommand: &'a str,
    seed: u64,
    config_hash: String,
    data_dir: String,
}

fn write_manifest(
    dir: &Path,
    subcommand: &str,
    seed: u64,
    mcfg: &ModelConfig,
    tcfg: &TrainConfig,
    data: &Path,
) -> anyhow::Result<()> {
    let canonical = serde_json::to_vec(&(mcfg, tcfg))?;
    let manifest = Manifest {
        tool: "hbe",
        version: env!("CARGO_PKG_VERSION"),
        subcommand,
        seed,
        config_hash: format!("{:016x}", fnv1a64(&canonical)),
        data_dir: data.display().to_string(),
    };
    std::fs::write(
        dir.join("manifest.json"),
        serde_json::to_vec_pretty(&manifest)?,
    )?;
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::GenData {
            data,
            out,
            duration_s,
            records,
        } => {
            let dir = out.unwrap_or_else(|| data_dir(&data));
            let ids = hbe_core::synth::write_database(&dir, duration_s, &records)?;
            println!(
                "wrote {} synthetic records ({duration_s} s each) to {}",
                ids.len(),
                dir.display()
            );
            Ok(())
        }
        Command::Segment {
            data,
            record,
            out,
            with_wavelet,
            single_lead,
        } => cmd_segment(&data_dir(&data), record, out, with_wavelet, single_lead),
        Command::Train {
            data,
            record,
            out,
            seed,
            minutes,
            epochs,
            config,
            grid,
        } => {
            let (mcfg, mut tcfg) = config::load_configs(config.as_deref())?;
            if let Some(s) = seed {
                tcfg.seed = s;
            }
            if let Some(m) = minutes {
                tcfg.minutes = m;
            }
            if let Some(e) = epochs {
                tcfg.epochs = e;
            }
            cmd_train(&data_dir(&data), record, &out, mcfg, tcfg, grid)
        }
        Command::Evaluate {
            data,
            protocol,
            bundles,
            out,
            head,
        } => cmd_evaluate(&data_dir(&data), &protocol, &bundles, &out, &head),
        Command::Ablate {
            data,
            variant,
            protocol,
            out,
            seed,
            epochs,
            config,
        } => {
            let (mcfg, mut tcfg) = config::load_configs(config.as_deref())?;
            if let Some(s) = seed {
                tcfg.seed = s;
            }
            if let Some(e) = epochs {
                tcfg.epochs = e;
            }
            cmd_ablate(&data_dir(&data), &variant, &protocol, &out, mcfg, tcfg)
        }
        Command::Stream {
            data,
            record,
            bundle,
            limit_beats,
        } => cmd_stream(&data_dir(&data), record, bundle.as_deref(), limit_beats),
        Command::Bench {
            data,
            record,
            bundle,
            repetitions,
            max_beats,
            out,
        } => cmd_bench(&data_dir(&data), record, &bundle, repetitions, max_beats, out),
    }
}

fn cmd_segment(
    dir: &Path,
    record: u32,
    out: Option<PathBuf>,
    with_wavelet: bool,
    single_lead: bool,
) -> anyhow::Result<()> {
    let rec = load_record_checked(dir, record)?;
    let labeled = label_record(&rec)?;
    let mcfg = ModelConfig {
        two_lead: !single_lead,
        ..ModelConfig::default()
    };
    let mut csv = String::new();
    let ecg_len = if single_lead { 252 } else { 504 };
    csv.push_str("r_index,label,rr1,rr2,rr_local,rr_train");
    for i in 0..ecg_len {
        csv.push_str(&format!(",ecg_{i}"));
    }
    if with_wavelet {
        let w_len = hbe_core::wavelet::band_lengths(ecg_len / 2, mcfg.wavelet.levels)
            .iter()
            .sum::<usize>();
        for i in 0..w_len {
            csv.push_str(&format!(",w_{i}"));
        }
    }
    csv.push('\n');
    for (seg, label) in &labeled.beats {
        let raw = assemble_features(seg, Some(*label), &mcfg)?;
        csv.push_str(&format!(
            "{},{},{:.6},{:.6},{:.6},{:.6}",
            seg.r_index, label, seg.rr_features[0], seg.rr_features[1], seg.rr_features[2],
            seg.rr_features[3]
        ));
        for v in &raw.x_ecg {
            csv.push_str(&format!(",{v:.6}"));
        }
        if with_wavelet {
            for v in &raw.x_w {
                csv.push_str(&format!(",{v:.6}"));
            }
        }
        csv.push('\n');
    }
    eprintln!(
        "record {record}: {} beats ({} edge-dropped, {} window-dropped, {} missed annotations, {} spurious detections)",
        labeled.beats.len(),
        labeled.dropped_edge,
        labeled.dropped_window,
        labeled.missed_annotations,
        labeled.spurious_detections
    );
    match out {
        Some(path) => std::fs::write(path, csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn load_globals(dir: &Path) -> Vec<(u32, EcgRecord)> {
    DatasetSplit::standard()
        .global_records
        .iter()
        .filter_map(|&id| load_record(dir, id).ok().map(|r| (id, r)))
        .collect()
}

fn cmd_train(
    dir: &Path,
    record: u32,
    out: &Path,
    mut mcfg: ModelConfig,
    tcfg: TrainConfig,
    grid: bool,
) -> anyhow::Result<()> {
    let rec = load_record_checked(dir, record)?;
    let rate = rec.sampling_rate;
    let patient = label_record(&rec)?;
    let globals: Vec<_> = load_globals(dir)
        .into_iter()
        .map(|(_, r)| label_record(&r))
        .collect::<hbe_core::Result<Vec<_>>>()?;
    if globals.is_empty() {
        eprintln!("note: no global records found in {}; training on local data only", dir.display());
    }

    let mut grid_report = None;
    if grid {
        let report = grid_search(&patient, &globals, rate, &mcfg, &tcfg, &GridSpec::default())?;
        eprintln!(
            "grid search: {} configurations, best = {:?} hidden {}/{}/{}",
            report.evaluated.len(),
            report.best.cell_type,
            report.best.hidden_alpha1,
            report.best.hidden_alpha2,
            report.best.hidden_beta
        );
        mcfg = report.best.clone();
        grid_report = Some(report);
    }

    let (bundle, report) = train_bundle(&patient, &globals, rate, &mcfg, &tcfg)?;
    with_atomic_dir(out, |tmp| {
        save_bundle(tmp, &bundle)?;
        std::fs::write(
            tmp.join("train_report.json"),
            serde_json::to_vec_pretty(&report)?,
        )?;
        if let Some(g) = &grid_report {
            std::fs::write(tmp.join("grid_report.json"), serde_json::to_vec_pretty(g)?)?;
        }
        write_manifest(tmp, "train", tcfg.seed, &mcfg, &tcfg, dir)?;
        Ok(())
    })?;
    println!(
        "trained bundle for record {record}: {} local + {} global beats, final alpha loss {:.4} -> {}",
        report.local_beats,
        report.global_beats,
        report.alpha_curve.epoch_loss.last().copied().unwrap_or(f64::NAN),
        out.display()
    );
    Ok(())
}

fn parse_head(head: &str) -> anyhow::Result<EvalHead> {
    match head {
        "blend" => Ok(EvalHead::Blend),
        "alpha" => Ok(EvalHead::AlphaOnly),
        "beta" => Ok(EvalHead::BetaOnly),
        other => Err(anyhow!(hbe_core::Error::InvalidArgument(format!(
            "unknown head '{other}' (expected blend, alpha or beta)"
        )))),
    }
}

fn cmd_evaluate(
    dir: &Path,
    protocol: &str,
    bundles_dir: &Path,
    out: &Path,
    head: &str,
) -> anyhow::Result<()> {
    let spec = ProtocolSpec::from_name(protocol)?;
    let head = parse_head(head)?;
    let mut bundles = BTreeMap::new();
    let mut missing = Vec::new();
    for &id in &spec.records {
        let path = bundles_dir.join(id.to_string());
        match load_bundle(&path) {
            Ok(b) => {
                bundles.insert(id, b);
            }
            Err(_) => missing.push(id),
        }
    }
    if !missing.is_empty() {
        return Err(anyhow!(hbe_core::Error::MissingBundles(missing))
            .context(format!("missing bundles under {}", bundles_dir.display())));
    }
    let records = load_protocol_records(dir, &spec)?;
    let rate = records[&spec.records[0]].sampling_rate;
    let labeled: BTreeMap<u32, _> = spec
        .records
        .iter()
        .map(|id| Ok((*id, label_record(&records[id])?)))
        .collect::<hbe_core::Result<_>>()?;
    let result = run_protocol(&spec, &labeled, &bundles, rate, head)?;

    // Per-beat latency of the first record's bundle rides along with
    // the metrics.
    let first = spec.records[0];
    let bench_beats: Vec<_> = labeled[&first]
        .beats
        .iter()
        .map(|(seg, _)| seg.clone())
        .take(100)
        .collect();
    let latency = benchmark_latency(&bundles[&first], &bench_beats, 2)?;

    write_eval_outputs(out, &result, &latency, dir)?;
    print_eval_summary(&result);
    println!(
        "latency: p50 {:.3} ms p95 {:.3} ms ({} analytic MACs/beat)",
        latency.p50_ms, latency.p95_ms, latency.analytic_ops_per_beat
    );
    Ok(())
}

fn write_eval_outputs(
    out: &Path,
    result: &EvalResult,
    latency: &hbe_core::evaluation::LatencyReport,
    data: &Path,
) -> anyhow::Result<()> {
    with_atomic_dir(out, |tmp| {
        std::fs::write(
            tmp.join("confusion7.csv"),
            result.cm7.to_csv(&["N", "L", "R", "S", "V", "F", "Q"]),
        )?;
        std::fs::write(
            tmp.join("confusion5.csv"),
            result.cm5.to_csv(&["N", "S", "V", "F", "Q"]),
        )?;
        std::fs::write(tmp.join("metrics.json"), serde_json::to_vec_pretty(result)?)?;
        std::fs::write(tmp.join("latency.json"), serde_json::to_vec_pretty(latency)?)?;
        write_manifest(
            tmp,
            "evaluate",
            0,
            &ModelConfig::default(),
            &TrainConfig::default(),
            data,
        )?;
        Ok(())
    })
}

fn pct(v: Option<f64>) -> String {
    v.map_or("n/a".to_string(), |x| format!("{:.2}%", 100.0 * x))
}

fn print_eval_summary(result: &EvalResult) {
    println!(
        "protocol {} ({} records, {} beats): 7-class acc {}",
        result.protocol,
        result.per_record.len(),
        result.cm7.total(),
        pct(result.cm7.accuracy()),
    );
    println!(
        "VEB : Acc {} Sen {} Spe {} Ppr {} F1 {} G {}",
        pct(result.veb.accuracy),
        pct(result.veb.sensitivity),
        pct(result.veb.specificity),
        pct(result.veb.positive_predictivity),
        pct(result.veb.f1),
        pct(result.veb.g),
    );
    println!(
        "SVEB: Acc {} Sen {} Spe {} Ppr {} F1 {} G {}",
        pct(result.sveb.accuracy),
        pct(result.sveb.sensitivity),
        pct(result.sveb.specificity),
        pct(result.sveb.positive_predictivity),
        pct(result.sveb.f1),
        pct(result.sveb.g),
    );
    println!(
        "detection: {} annotations, {} matched, {} missed, {} spurious",
        result.detection.total_beat_annotations,
        result.detection.matched,
        result.detection.missed_annotations,
        result.detection.spurious_detections
    );
}

fn cmd_ablate(
    dir: &Path,
    variant: &str,
    protocol: &str,
    out: &Path,
    mcfg: ModelConfig,
    tcfg: TrainConfig,
) -> anyhow::Result<()> {
    let variant = AblationVariant::from_name(variant)?;
    let spec = ProtocolSpec::from_name(protocol)?;
    let records = load_protocol_records(dir, &spec)?;
    eprintln!(
        "training baseline on {} records, then variant '{}'",
        spec.records.len(),
        variant.name()
    );
    let (baseline, _) = train_and_evaluate(&spec, &records, &mcfg, &tcfg, EvalHead::Blend)?;
    let (report, var_result) = run_ablation(variant, &spec, &records, &mcfg, &tcfg, &baseline)?;
    with_atomic_dir(out, |tmp| {
        std::fs::write(tmp.join("ablation.json"), serde_json::to_vec_pretty(&report)?)?;
        std::fs::write(
            tmp.join("baseline_metrics.json"),
            serde_json::to_vec_pretty(&baseline)?,
        )?;
        std::fs::write(
            tmp.join("variant_metrics.json"),
            serde_json::to_vec_pretty(&var_result)?,
        )?;
        write_manifest(tmp, "ablate", tcfg.seed, &mcfg, &tcfg, dir)?;
        Ok(())
    })?;
    println!(
        "{}: dF1(VEB) {} dF1(SVEB) {}",
        report.variant,
        pct(report.delta_f1_veb),
        pct(report.delta_f1_sveb)
    );
    Ok(())
}

fn cmd_stream(
    dir: &Path,
    record: u32,
    bundle_dir: Option<&Path>,
    limit_beats: Option<usize>,
) -> anyhow::Result<()> {
    let rec = load_record_checked(dir, record)?;
    let bundle = bundle_dir.map(load_bundle).transpose()?;
    let train_mean = bundle.as_ref().map_or(0.8, |b| b.train_mean_rr);
    let mut buf = StreamBuffer::new(rec.sampling_rate, train_mean)?;
    let mut emitted = 0usize;
    let classify = |beat: &hbe_core::qrs::BeatSegment, now: usize, idx: usize| -> anyhow::Result<()> {
        let lag_s = (now.saturating_sub(beat.r_index)) as f64 / rec.sampling_rate;
        match &bundle {
            Some(b) => {
                let start = std::time::Instant::now();
                let (label, probs) = b.classify_beat(beat)?;
                let ms = start.elapsed().as_secs_f64() * 1e3;
                let p_max = probs.iter().cloned().fold(0.0, f64::max);
                println!(
                    "beat={idx} r={} t={:.2}s label={label} p={p_max:.3} latency_ms={ms:.3} lag_s={lag_s:.2}",
                    beat.r_index,
                    beat.r_index as f64 / rec.sampling_rate
                );
            }
            None => println!(
                "beat={idx} r={} t={:.2}s label=- rr1={:.3} rr2={:.3} lag_s={lag_s:.2}",
                beat.r_index,
                beat.r_index as f64 / rec.sampling_rate,
                beat.rr_features[0],
                beat.rr_features[1]
            ),
        }
        Ok(())
    };
    let mut done = false;
    for (n, (s1, s2)) in rec.lead1.iter().zip(&rec.lead2).enumerate() {
        for beat in buf.push(*s1, *s2) {
            classify(&beat, n, emitted)?;
            emitted += 1;
            if limit_beats.is_some_and(|l| emitted >= l) {
                done = true;
                break;
            }
        }
        if done {
            break;
        }
    }
    if !done {
        let n = rec.len();
        for beat in buf.flush() {
            classify(&beat, n, emitted)?;
            emitted += 1;
            if limit_beats.is_some_and(|l| emitted >= l) {
                break;
            }
        }
    }
    eprintln!("emitted {emitted} beats ({} window-dropped)", buf.dropped_window);
    Ok(())
}

fn cmd_bench(
    dir: &Path,
    record: u32,
    bundle_dir: &Path,
    repetitions: usize,
    max_beats: usize,
    out: Option<PathBuf>,
) -> anyhow::Result<()> {
    let rec = load_record_checked(dir, record)?;
    let bundle = load_bundle(bundle_dir)?;
    let labeled = label_record(&rec)?;
    let beats: Vec<_> = labeled
        .beats
        .iter()
        .map(|(seg, _)| seg.clone())
        .take(max_beats)
        .collect();
    let report = benchmark_latency(&bundle, &beats, repetitions)?;
    println!(
        "latency over {} beats x {} reps: p50 {:.3} ms, p95 {:.3} ms, max {:.3} ms ({} analytic MACs/beat) -> {}",
        report.beats_measured,
        report.repetitions,
        report.p50_ms,
        report.p95_ms,
        report.max_ms,
        report.analytic_ops_per_beat,
        if report.within_budget { "within budget" } else { "OVER BUDGET" }
    );
    if let Some(path) = out {
        std::fs::write(path, serde_json::to_vec_pretty(&report)?)?;
    }
    Ok(())
}
