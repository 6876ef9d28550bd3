//! Evaluation: confusion matrices, the binary VEB/SVEB metrics, the
//! published record-list protocols, the ablation runner and the
//! per-beat latency benchmark.
//!
//! Beats are scored where a detection matched an annotation within
//! 50 ms; unmatched annotations and spurious detections are counted in
//! a detection report rather than entering the confusion matrix, and
//! the R-peak acceptance gate bounds how many those can be.

use crate::models::{EvalHead, ModelBundle, ModelConfig};
use crate::record_io::BeatLabel;
use crate::training::{label_record, train_bundle, LabeledRecord, TrainConfig, TrainReport};
use crate::{Error, Result};
use std::collections::BTreeMap;

/// Square confusion matrix, rows = truth, cols = prediction.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ConfusionMatrix {
    pub n: usize,
    pub counts: Vec<u64>,
}

/// Class order of the 5-class view.
pub const FIVE_CLASS_ORDER: [BeatLabel; 5] = [
    BeatLabel::N,
    BeatLabel::S,
    BeatLabel::V,
    BeatLabel::F,
    BeatLabel::Q,
];

impl ConfusionMatrix {
    pub fn new(n: usize) -> ConfusionMatrix {
        ConfusionMatrix {
            n,
            counts: vec![0; n * n],
        }
    }

    pub fn seven() -> ConfusionMatrix {
        ConfusionMatrix::new(7)
    }

    #[inline]
    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.n + pred]
    }

    pub fn add(&mut self, truth: usize, pred: usize) {
        self.counts[truth * self.n + pred] += 1;
    }

    pub fn add_labels7(&mut self, truth: BeatLabel, pred: BeatLabel) {
        debug_assert_eq!(self.n, 7);
        self.add(truth.index(), pred.index());
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn accumulate(&mut self, other: &ConfusionMatrix) {
        assert_eq!(self.n, other.n);
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    /// Overall fraction of correctly classified beats.
    pub fn accuracy(&self) -> Option<f64> {
        let total = self.total();
        if total == 0 {
            return None;
        }
        let diag: u64 = (0..self.n).map(|i| self.get(i, i)).sum();
        Some(diag as f64 / total as f64)
    }

    /// CSV with a header row; rows are truth classes.
    pub fn to_csv(&self, labels: &[&str]) -> String {
        assert_eq!(labels.len(), self.n);
        let mut out = String::from("truth\\pred");
        for l in labels {
            out.push(',');
            out.push_str(l);
        }
        out.push('\n');
        for (r, label) in labels.iter().enumerate() {
            out.push_str(label);
            for c in 0..self.n {
                out.push(',');
                out.push_str(&self.get(r, c).to_string());
            }
            out.push('\n');
        }
        out
    }
}

/// Merge L and R rows/columns into N: 7-class to 5-class.
pub fn merge_to_5(cm7: &ConfusionMatrix) -> ConfusionMatrix {
    assert_eq!(cm7.n, 7);
    // 7-class index -> 5-class index.
    const MAP: [usize; 7] = [0, 0, 0, 1, 2, 3, 4];
    let mut out = ConfusionMatrix::new(5);
    for truth in 0..7 {
        for pred in 0..7 {
            let c = cm7.get(truth, pred);
            if c > 0 {
                out.counts[MAP[truth] * 5 + MAP[pred]] += c;
            }
        }
    }
    out
}

/// One-vs-rest counts and the derived statistics. Ratios that are 0/0
/// are reported as `None`, never coerced to 0 or 1.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BinaryMetrics {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
    pub accuracy: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub positive_predictivity: Option<f64>,
    pub f1: Option<f64>,
    pub g: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    if den == 0 {
        None
    } else {
        Some(num as f64 / den as f64)
    }
}

/// Collapse a 5-class matrix to one-vs-rest for the positive class and
/// derive Acc, Sen, Spe, Ppr, F1 and G.
pub fn binary_metrics(cm5: &ConfusionMatrix, positive: BeatLabel) -> BinaryMetrics {
    assert_eq!(cm5.n, 5);
    let p = FIVE_CLASS_ORDER
        .iter()
        .position(|&l| l == positive.merge_to_5())
        .expect("positive class in 5-class order");
    let mut tp = 0;
    let mut tn = 0;
    let mut fp = 0;
    let mut fn_ = 0;
    for truth in 0..5 {
        for pred in 0..5 {
            let c = cm5.get(truth, pred);
            match (truth == p, pred == p) {
                (true, true) => tp += c,
                (true, false) => fn_ += c,
                (false, true) => fp += c,
                (false, false) => tn += c,
            }
        }
    }
    let sen = ratio(tp, tp + fn_);
    let ppr = ratio(tp, tp + fp);
    let f1 = match (sen, ppr) {
        (Some(s), Some(pv)) if s + pv > 0.0 => Some(2.0 * s * pv / (s + pv)),
        (Some(0.0), Some(0.0)) => Some(0.0),
        _ => None,
    };
    let g = match (sen, ppr) {
        (Some(s), Some(pv)) => Some((s * pv).sqrt()),
        _ => None,
    };
    BinaryMetrics {
        tp,
        tn,
        fp,
        fn_,
        accuracy: ratio(tp + tn, tp + tn + fp + fn_),
        sensitivity: sen,
        specificity: ratio(tn, tn + fp),
        positive_predictivity: ppr,
        f1,
        g,
    }
}

/// Published evaluation record lists.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ProtocolSpec {
    pub name: String,
    pub records: Vec<u32>,
}

pub const DATASET_A_VEB: [u32; 11] = [200, 202, 210, 213, 214, 219, 221, 228, 231, 233, 234];
pub const DATASET_A_SVEB: [u32; 14] =
    [200, 202, 210, 212, 213, 214, 219, 221, 222, 228, 231, 232, 233, 234];
pub const DATASET_B: [u32; 22] = [
    100, 103, 105, 111, 113, 117, 121, 123, 200, 202, 210, 212, 213, 214, 219, 221, 222, 228,
    231, 232, 233, 234,
];
pub const DATASET_C: [u32; 24] = [
    200, 201, 202, 203, 205, 207, 208, 209, 210, 212, 213, 214, 215, 219, 220, 221, 222, 223,
    228, 230, 231, 232, 233, 234,
];

impl ProtocolSpec {
    pub fn from_name(name: &str) -> Result<ProtocolSpec> {
        let records: Vec<u32> = match name {
            "A_VEB" | "a_veb" => DATASET_A_VEB.to_vec(),
            "A_SVEB" | "a_sveb" => DATASET_A_SVEB.to_vec(),
            "B" | "b" => DATASET_B.to_vec(),
            "C" | "c" => DATASET_C.to_vec(),
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown protocol '{other}' (expected A_VEB, A_SVEB, B or C)"
                )))
            }
        };
        Ok(ProtocolSpec {
            name: name.to_uppercase(),
            records,
        })
    }
}

/// Test beats always start after the first five minutes, independent of
/// how much local data was used for training.
pub const TEST_SKIP_MINUTES: f64 = 5.0;

/// Detection bookkeeping accumulated over evaluated records.
#[derive(Debug, Clone, Default, serde::Serialize, serde::Deserialize)]
pub struct DetectionReport {
    pub total_beat_annotations: usize,
    pub matched: usize,
    pub missed_annotations: usize,
    pub spurious_detections: usize,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct RecordEval {
    pub record_id: u32,
    pub beats_evaluated: usize,
    pub cm7: ConfusionMatrix,
    pub detection: DetectionReport,
}

/// Aggregated protocol evaluation: per-record tables plus gross
/// statistics (counts summed before ratios are taken).
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct EvalResult {
    pub protocol: String,
    pub head: EvalHead,
    pub per_record: Vec<RecordEval>,
    pub cm7: ConfusionMatrix,
    pub cm5: ConfusionMatrix,
    pub veb: BinaryMetrics,
    pub sveb: BinaryMetrics,
    pub detection: DetectionReport,
}

/// Evaluate one labeled record against its bundle: beats after minute 5.
pub fn evaluate_record(
    labeled: &LabeledRecord,
    rate: f64,
    bundle: &ModelBundle,
    head: EvalHead,
) -> Result<RecordEval> {
    let skip = (TEST_SKIP_MINUTES * 60.0 * rate).round() as usize;
    let mut cm7 = ConfusionMatrix::seven();
    let mut n = 0;
    for (seg, truth) in &labeled.beats {
        if seg.r_index < skip {
            continue;
        }
        let (pred, _) = bundle.classify_with_head(seg, head)?;
        cm7.add_labels7(*truth, pred);
        n += 1;
    }
    Ok(RecordEval {
        record_id: labeled.record_id,
        beats_evaluated: n,
        cm7,
        detection: DetectionReport {
            total_beat_annotations: labeled.total_beat_annotations,
            matched: labeled.beats.len(),
            missed_annotations: labeled.missed_annotations,
            spurious_detections: labeled.spurious_detections,
        },
    })
}

/// Run a protocol over pre-labeled records and their trained bundles.
/// Aggregation sums confusion counts across records before computing
/// the binary metrics.
pub fn run_protocol(
    spec: &ProtocolSpec,
    labeled: &BTreeMap<u32, LabeledRecord>,
    bundles: &BTreeMap<u32, ModelBundle>,
    rate: f64,
    head: EvalHead,
) -> Result<EvalResult> {
    let missing: Vec<u32> = spec
        .records
        .iter()
        .filter(|id| !bundles.contains_key(id) || !labeled.contains_key(id))
        .copied()
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingBundles(missing));
    }
    let mut per_record = Vec::with_capacity(spec.records.len());
    let mut cm7 = ConfusionMatrix::seven();
    let mut detection = DetectionReport::default();
    for id in &spec.records {
        let eval = evaluate_record(&labeled[id], rate, &bundles[id], head)?;
        cm7.accumulate(&eval.cm7);
        detection.total_beat_annotations += eval.detection.total_beat_annotations;
        detection.matched += eval.detection.matched;
        detection.missed_annotations += eval.detection.missed_annotations;
        detection.spurious_detections += eval.detection.spurious_detections;
        per_record.push(eval);
    }
    let cm5 = merge_to_5(&cm7);
    let veb = binary_metrics(&cm5, BeatLabel::V);
    let sveb = binary_metrics(&cm5, BeatLabel::S);
    Ok(EvalResult {
        protocol: spec.name.clone(),
        head,
        per_record,
        cm7,
        cm5,
        veb,
        sveb,
        detection,
    })
}

// ---------------------------------------------------------------------
// End-to-end train + evaluate driver (used by the CLI and the ablation
// runner)
// ---------------------------------------------------------------------

/// Label every record a protocol needs (its own plus the global pool),
/// in parallel.
pub fn label_records(
    records: &BTreeMap<u32, crate::record_io::EcgRecord>,
) -> Result<BTreeMap<u32, LabeledRecord>> {
    use rayon::prelude::*;
    let labeled: Vec<(u32, LabeledRecord)> = records
        .par_iter()
        .map(|(id, rec)| Ok((*id, label_record(rec)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(labeled.into_iter().collect())
}

/// Train one bundle per protocol record, in parallel, from pre-labeled
/// records. Global train data comes from whichever 100-series records
/// are present in `labeled`.
pub fn train_protocol(
    spec: &ProtocolSpec,
    labeled: &BTreeMap<u32, LabeledRecord>,
    rate: f64,
    mcfg: &ModelConfig,
    tcfg: &TrainConfig,
) -> Result<(BTreeMap<u32, ModelBundle>, Vec<TrainReport>)> {
    use rayon::prelude::*;
    let missing: Vec<u32> = spec
        .records
        .iter()
        .filter(|id| !labeled.contains_key(id))
        .copied()
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingBundles(missing));
    }
    let split = crate::record_io::DatasetSplit::standard();
    let globals: Vec<LabeledRecord> = split
        .global_records
        .iter()
        .filter_map(|id| labeled.get(id).cloned())
        .collect();
    let trained: Vec<(u32, (ModelBundle, TrainReport))> = spec
        .records
        .par_iter()
        .map(|id| -> Result<_> {
            let (bundle, report) = train_bundle(&labeled[id], &globals, rate, mcfg, tcfg)?;
            Ok((*id, (bundle, report)))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut bundles = BTreeMap::new();
    let mut reports = Vec::with_capacity(trained.len());
    for (id, (bundle, report)) in trained {
        bundles.insert(id, bundle);
        reports.push(report);
    }
    Ok((bundles, reports))
}

/// Train bundles for every record in the protocol (in parallel) and
/// evaluate. Returns the evaluation plus per-patient train reports.
pub fn train_and_evaluate(
    spec: &ProtocolSpec,
    records: &BTreeMap<u32, crate::record_io::EcgRecord>,
    mcfg: &ModelConfig,
    tcfg: &TrainConfig,
    head: EvalHead,
) -> Result<(EvalResult, Vec<TrainReport>)> {
    let missing: Vec<u32> = spec
        .records
        .iter()
        .filter(|id| !records.contains_key(id))
        .copied()
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingBundles(missing));
    }
    let rate = records[&spec.records[0]].sampling_rate;
    let labeled = label_records(records)?;
    let (bundles, reports) = train_protocol(spec, &labeled, rate, mcfg, tcfg)?;
    let result = run_protocol(spec, &labeled, &bundles, rate, head)?;
    Ok((result, reports))
}

// ---------------------------------------------------------------------
// Ablations
// ---------------------------------------------------------------------

/// Model variants studied against the shipped configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationVariant {
    NoWavelet,
    Db1,
    Db3,
    Db4,
    SimpleCell,
    Gru,
    Peephole,
    AlphaOnly,
    BetaOnly,
    SingleLead,
    Minutes2_5,
}

impl AblationVariant {
    pub const ALL: [AblationVariant; 11] = [
        AblationVariant::NoWavelet,
        AblationVariant::Db1,
        AblationVariant::Db3,
        AblationVariant::Db4,
        AblationVariant::SimpleCell,
        AblationVariant::Gru,
        AblationVariant::Peephole,
        AblationVariant::AlphaOnly,
        AblationVariant::BetaOnly,
        AblationVariant::SingleLead,
        AblationVariant::Minutes2_5,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AblationVariant::NoWavelet => "no_wavelet",
            AblationVariant::Db1 => "db1",
            AblationVariant::Db3 => "db3",
            AblationVariant::Db4 => "db4",
            AblationVariant::SimpleCell => "simple_cell",
            AblationVariant::Gru => "gru",
            AblationVariant::Peephole => "peephole",
            AblationVariant::AlphaOnly => "alpha_only",
            AblationVariant::BetaOnly => "beta_only",
            AblationVariant::SingleLead => "single_lead",
            AblationVariant::Minutes2_5 => "minutes_2_5",
        }
    }

    pub fn from_name(name: &str) -> Result<AblationVariant> {
        AblationVariant::ALL
            .into_iter()
            .find(|v| v.name() == name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown ablation variant '{name}'")))
    }

    /// Whether the variant only changes the evaluation head, reusing
    /// baseline bundles.
    pub fn head_only(self) -> bool {
        matches!(self, AblationVariant::AlphaOnly | AblationVariant::BetaOnly)
    }
}

/// Derive the variant's configs from the baseline configs.
pub fn ablation_setup(
    variant: AblationVariant,
    mcfg: &ModelConfig,
    tcfg: &TrainConfig,
) -> (ModelConfig, TrainConfig, EvalHead) {
    let mut m = mcfg.clone();
    let mut t = tcfg.clone();
    let mut head = EvalHead::Blend;
    match variant {
        AblationVariant::NoWavelet => m.use_wavelet = false,
        AblationVariant::Db1 => m.wavelet.order = 1,
        AblationVariant::Db3 => m.wavelet.order = 3,
        AblationVariant::Db4 => m.wavelet.order = 4,
        AblationVariant::SimpleCell => m.cell_type = crate::rnn::CellType::Simple,
        AblationVariant::Gru => m.cell_type = crate::rnn::CellType::Gru,
        AblationVariant::Peephole => m.cell_type = crate::rnn::CellType::Peephole,
        AblationVariant::AlphaOnly => head = EvalHead::AlphaOnly,
        AblationVariant::BetaOnly => head = EvalHead::BetaOnly,
        AblationVariant::SingleLead => m.two_lead = false,
        AblationVariant::Minutes2_5 => t.minutes = 2.5,
    }
    (m, t, head)
}

/// F1 deltas of a variant against the baseline, in percentage points.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct AblationReport {
    pub variant: String,
    pub baseline_f1_veb: Option<f64>,
    pub baseline_f1_sveb: Option<f64>,
    pub variant_f1_veb: Option<f64>,
    pub variant_f1_sveb: Option<f64>,
    pub delta_f1_veb: Option<f64>,
    pub delta_f1_sveb: Option<f64>,
}

fn delta(base: Option<f64>, var: Option<f64>) -> Option<f64> {
    match (base, var) {
        (Some(b), Some(v)) => Some(v - b),
        _ => None,
    }
}

/// Retrain under the variant and report VEB/SVEB F1 deltas against the
/// baseline result. Head-only variants reuse the baseline bundles.
pub fn run_ablation(
    variant: AblationVariant,
    spec: &ProtocolSpec,
    records: &BTreeMap<u32, crate::record_io::EcgRecord>,
    mcfg: &ModelConfig,
    tcfg: &TrainConfig,
    baseline: &EvalResult,
) -> Result<(AblationReport, EvalResult)> {
    let (vm, vt, head) = ablation_setup(variant, mcfg, tcfg);
    let (var_result, _) = train_and_evaluate(spec, records, &vm, &vt, head)?;
    let report = AblationReport {
        variant: variant.name().to_string(),
        baseline_f1_veb: baseline.veb.f1,
        baseline_f1_sveb: baseline.sveb.f1,
        variant_f1_veb: var_result.veb.f1,
        variant_f1_sveb: var_result.sveb.f1,
        delta_f1_veb: delta(baseline.veb.f1, var_result.veb.f1),
        delta_f1_sveb: delta(baseline.sveb.f1, var_result.sveb.f1),
    };
    Ok((report, var_result))
}

// ---------------------------------------------------------------------
// Latency benchmark
// ---------------------------------------------------------------------

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct LatencyReport {
    pub beats_measured: usize,
    pub repetitions: usize,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
    pub mean_ms: f64,
    pub budget_ms: f64,
    pub within_budget: bool,
    /// Analytic multiply-accumulate count per beat for the bundle's
    /// configuration: wavelet cascade plus recurrent steps and heads.
    pub analytic_ops_per_beat: usize,
}

/// Real-time budget per beat at the maximum plausible heart rate.
pub const LATENCY_BUDGET_MS: f64 = 300.0;

/// Wall-clock per-beat inference: feature extraction through the blend,
/// single-threaded. `repetitions` full passes over the beats.
pub fn benchmark_latency(
    bundle: &ModelBundle,
    beats: &[crate::qrs::BeatSegment],
    repetitions: usize,
) -> Result<LatencyReport> {
    if repetitions == 0 {
        return Err(Error::InvalidArgument("repetitions must be positive".into()));
    }
    if beats.is_empty() {
        return Err(Error::EmptyInput("latency benchmark beats"));
    }
    // Warm pass so allocation effects do not dominate the first beat.
    let _ = bundle.classify_beat(&beats[0])?;
    let mut samples_ms = Vec::with_capacity(beats.len() * repetitions);
    for _ in 0..repetitions {
        for seg in beats {
            let start = std::time::Instant::now();
            let out = bundle.classify_beat(seg)?;
            let elapsed = start.elapsed().as_secs_f64() * 1e3;
            std::hint::black_box(out);
            samples_ms.push(elapsed);
        }
    }
    samples_ms.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q = |p: f64| -> f64 {
        let idx = ((samples_ms.len() as f64 - 1.0) * p).round() as usize;
        samples_ms[idx]
    };
    let mean = samples_ms.iter().sum::<f64>() / samples_ms.len() as f64;
    let p95 = q(0.95);
    Ok(LatencyReport {
        beats_measured: beats.len(),
        repetitions,
        p50_ms: q(0.50),
        p95_ms: p95,
        max_ms: *samples_ms.last().unwrap(),
        mean_ms: mean,
        budget_ms: LATENCY_BUDGET_MS,
        within_budget: p95 < LATENCY_BUDGET_MS,
        analytic_ops_per_beat: crate::models::analytic_op_count(&bundle.config),
    })
}
