//! Patient-specific training: train-set assembly from local plus global
//! beats, backpropagation through time with Adam for both recurrent
//! models, blend-MLP training on their probability outputs, and the
//! hyper-parameter grid search.

use crate::models::{
    assemble_features, init_models, BlendMlp, FeatureScaler, ModelAlpha, ModelBeta, ModelBundle,
    ModelConfig, RawFeatures, ScaledBeat,
};
use crate::qrs::{segment_record, BeatSegment};
use crate::record_io::{BeatLabel, EcgRecord};
use crate::rnn::backward::{dense_backward, layer_backward, CellGrads, DenseGrads};
use crate::rnn::{layer_forward_cached, CellState, RnnStack, StepCache};
use crate::{Error, Result};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Matching window between detected beats and annotations.
pub const MATCH_WINDOW_S: f64 = 0.05;

/// Training hyper-parameters.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    /// Minutes of the patient's own record used for training (5 or 2.5).
    pub minutes: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub blend_epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Target number of globally sampled beats per class.
    pub global_per_class: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            minutes: 5.0,
            batch_size: 32,
            epochs: 18,
            blend_epochs: 30,
            learning_rate: 2e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            global_per_class: 200,
            seed: 7,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::InvalidArgument("learning rate must be positive".into()));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) || b == 0.0 {
                return Err(Error::InvalidArgument(format!("{name} must be in (0, 1)")));
            }
        }
        if self.minutes != 5.0 && self.minutes != 2.5 {
            return Err(Error::InvalidArgument(format!(
                "local data minutes must be 5 or 2.5, got {}",
                self.minutes
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be positive".into()));
        }
        Ok(())
    }
}

/// Where a train beat came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Provenance {
    Local,
    Global,
}

/// A labeled beat ready for feature assembly.
#[derive(Debug, Clone)]
pub struct TrainBeat {
    pub record_id: u32,
    pub segment: BeatSegment,
    pub label: BeatLabel,
    pub provenance: Provenance,
}

/// Assembled per-patient train set.
#[derive(Debug, Clone)]
pub struct TrainSet {
    pub beats: Vec<TrainBeat>,
    pub train_mean_rr: f64,
    pub class_counts: [u64; 7],
    /// Classes with no beat available in the global pool.
    pub classes_missing_globally: Vec<BeatLabel>,
}

/// Detected beats matched to annotation truth within 50 ms.
#[derive(Debug, Clone)]
pub struct LabeledRecord {
    pub record_id: u32,
    pub beats: Vec<(BeatSegment, BeatLabel)>,
    /// Annotated beats with no detection in the window.
    pub missed_annotations: usize,
    /// Detections with no annotation in the window.
    pub spurious_detections: usize,
    pub total_beat_annotations: usize,
    pub dropped_edge: usize,
    pub dropped_window: usize,
}

/// Segment a record and attach truth labels by nearest-annotation
/// matching. One annotation matches at most one detection.
pub fn label_record(record: &EcgRecord) -> Result<LabeledRecord> {
    let seg = segment_record(record)?;
    let annotations = record.labeled_annotations()?;
    let window = (MATCH_WINDOW_S * record.sampling_rate).round() as i64;
    let mut used = vec![false; annotations.len()];
    let mut beats = Vec::with_capacity(seg.beats.len());
    let mut spurious = 0;
    let mut ann_cursor = 0usize;
    for beat in seg.beats {
        let r = beat.r_index as i64;
        while ann_cursor < annotations.len()
            && (annotations[ann_cursor].0 as i64) < r - window
        {
            ann_cursor += 1;
        }
        let mut best: Option<(usize, i64)> = None;
        let mut probe = ann_cursor;
        while probe < annotations.len() {
            let d = annotations[probe].0 as i64 - r;
            if d > window {
                break;
            }
            if !used[probe] {
                let dist = d.abs();
                if best.map_or(true, |(_, bd)| dist < bd) {
                    best = Some((probe, dist));
                }
            }
            probe += 1;
        }
        match best {
            Some((idx, _)) => {
                used[idx] = true;
                beats.push((beat, annotations[idx].1));
            }
            None => spurious += 1,
        }
    }
    let missed = used.iter().filter(|u| !**u).count();
    Ok(LabeledRecord {
        record_id: record.record_id,
        beats,
        missed_annotations: missed,
        spurious_detections: spurious,
        total_beat_annotations: annotations.len(),
        dropped_edge: seg.dropped_edge,
        dropped_window: seg.dropped_window,
    })
}

/// Sample cutoff separating a patient's local train data from test data.
pub fn local_cutoff_sample(minutes: f64, rate: f64) -> usize {
    (minutes * 60.0 * rate).round() as usize
}

/// Build the patient train set: local beats before the cutoff plus a
/// seeded class-stratified sample from the global records. The
/// patient's own record never contributes to the global sample.
pub fn assemble_train_set(
    patient: &LabeledRecord,
    globals: &[LabeledRecord],
    rate: f64,
    cfg: &TrainConfig,
) -> Result<TrainSet> {
    cfg.validate()?;
    let cutoff = local_cutoff_sample(cfg.minutes, rate);
    let mut beats: Vec<TrainBeat> = patient
        .beats
        .iter()
        .filter(|(seg, _)| seg.r_index < cutoff)
        .map(|(seg, label)| TrainBeat {
            record_id: patient.record_id,
            segment: seg.clone(),
            label: *label,
            provenance: Provenance::Local,
        })
        .collect();
    if beats.is_empty() {
        return Err(Error::EmptyInput("local train data"));
    }

    // Pool the global beats per class, skipping the patient's record.
    let mut pools: [Vec<TrainBeat>; 7] = Default::default();
    for rec in globals {
        if rec.record_id == patient.record_id {
            continue;
        }
        for (seg, label) in &rec.beats {
            pools[label.index()].push(TrainBeat {
                record_id: rec.record_id,
                segment: seg.clone(),
                label: *label,
                provenance: Provenance::Global,
            });
        }
    }
    let mut missing = Vec::new();
    for (ci, pool) in pools.iter_mut().enumerate() {
        let label = BeatLabel::ALL[ci];
        if pool.is_empty() {
            missing.push(label);
            continue;
        }
        let mut rng = ChaCha12Rng::seed_from_u64(
            cfg.seed ^ (u64::from(patient.record_id) << 32) ^ (ci as u64),
        );
        pool.shuffle(&mut rng);
        pool.truncate(cfg.global_per_class);
        beats.append(pool);
    }

    let train_mean_rr =
        beats.iter().map(|b| b.segment.rr_features[0]).sum::<f64>() / beats.len() as f64;
    for b in &mut beats {
        b.segment.rr_features[3] = train_mean_rr;
    }
    let mut class_counts = [0u64; 7];
    for b in &beats {
        class_counts[b.label.index()] += 1;
    }
    Ok(TrainSet {
        beats,
        train_mean_rr,
        class_counts,
        classes_missing_globally: missing,
    })
}

// ---------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------

/// Adam optimizer state over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n_params: usize) -> AdamState {
        AdamState {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    /// One bias-corrected update step.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], cfg: &TrainConfig) {
        assert_eq!(params.len(), grads.len());
        assert_eq!(params.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t as i32);
        let bc2 = 1.0 - cfg.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * grads[i];
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
}

pub fn cross_entropy(probs: &[f64], label: usize) -> f64 {
    -(probs[label].max(1e-300)).ln()
}

// ---------------------------------------------------------------------
// Forward/backward plumbing shared by both models
// ---------------------------------------------------------------------

fn stack_forward_cached(
    stack: &RnnStack,
    c0s: &[Vec<f64>],
    input: &[Vec<f64>],
) -> Result<(Vec<f64>, Vec<Vec<StepCache>>)> {
    let mut seq = input.to_vec();
    let mut caches = Vec::with_capacity(stack.layers.len());
    for (layer, c0) in stack.layers.iter().zip(c0s) {
        let initial = CellState::with_c(c0);
        let (outputs, cache) = layer_forward_cached(layer, &initial, &seq)?;
        caches.push(cache);
        seq = outputs;
    }
    let final_h = seq.last().cloned().ok_or(Error::EmptyInput("stack input"))?;
    Ok((final_h, caches))
}

// Backward through a stack given the loss derivative at the final
// output of the top layer. Returns per-layer gradients.
fn stack_backward(
    stack: &RnnStack,
    caches: &[Vec<StepCache>],
    d_final: &[f64],
) -> Vec<CellGrads> {
    let top = stack.layers.len() - 1;
    let steps = caches[top].len();
    let mut d_out: Vec<Vec<f64>> = vec![vec![0.0; stack.layers[top].n_h]; steps];
    d_out[steps - 1] = d_final.to_vec();
    let mut grads_rev = Vec::with_capacity(stack.layers.len());
    let mut upstream = d_out;
    for k in (0..stack.layers.len()).rev() {
        let (grads, dx) = layer_backward(&stack.layers[k], &caches[k], &upstream);
        grads_rev.push(grads);
        upstream = dx;
    }
    grads_rev.reverse();
    grads_rev
}

fn sample_c0s(stack: &RnnStack, rng: &mut ChaCha12Rng) -> Vec<Vec<f64>> {
    stack
        .layers
        .iter()
        .map(|l| (0..l.n_h).map(|_| rng.gen_range(-0.1..0.1)).collect())
        .collect()
}

// Flat parameter order: alpha = branch1 layers, branch2 layers, head.
fn alpha_flatten(model: &ModelAlpha) -> Vec<f64> {
    let mut out = Vec::new();
    for layer in model.branch1.layers.iter().chain(&model.branch2.layers) {
        layer.flatten_into(&mut out);
    }
    out.extend_from_slice(&model.alpha_head_w());
    out.extend_from_slice(&model.head.b);
    out
}

// Small accessors so flatten stays readable.
trait HeadView {
    fn alpha_head_w(&self) -> &[f64];
}
impl HeadView for ModelAlpha {
    fn alpha_head_w(&self) -> &[f64] {
        &self.head.w.data
    }
}

fn alpha_unflatten(model: &mut ModelAlpha, flat: &[f64]) {
    let mut pos = 0;
    for layer in model
        .branch1
        .layers
        .iter_mut()
        .chain(model.branch2.layers.iter_mut())
    {
        layer.unflatten_from(flat, &mut pos);
    }
    let wlen = model.head.w.data.len();
    model.head.w.data.copy_from_slice(&flat[pos..pos + wlen]);
    pos += wlen;
    let blen = model.head.b.len();
    model.head.b.copy_from_slice(&flat[pos..pos + blen]);
}

fn beta_flatten(model: &ModelBeta) -> Vec<f64> {
    let mut out = Vec::new();
    for layer in &model.stack.layers {
        layer.flatten_into(&mut out);
    }
    out.extend_from_slice(&model.head.w.data);
    out.extend_from_slice(&model.head.b);
    out
}

fn beta_unflatten(model: &mut ModelBeta, flat: &[f64]) {
    let mut pos = 0;
    for layer in model.stack.layers.iter_mut() {
        layer.unflatten_from(flat, &mut pos);
    }
    let wlen = model.head.w.data.len();
    model.head.w.data.copy_from_slice(&flat[pos..pos + wlen]);
    pos += wlen;
    let blen = model.head.b.len();
    model.head.b.copy_from_slice(&flat[pos..pos + blen]);
}

/// Per-batch initial cell states: one vector per layer per branch,
/// shared by every beat in the batch (h starts at zero, c random).
#[derive(Debug, Clone)]
pub struct BatchInit {
    pub branch1: Vec<Vec<f64>>,
    pub branch2: Vec<Vec<f64>>,
}

/// Mean cross-entropy loss and flat gradients of model alpha on a batch.
pub fn bptt_alpha(
    model: &ModelAlpha,
    cfg: &ModelConfig,
    batch: &[&ScaledBeat],
    init: &BatchInit,
) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("bptt batch"));
    }
    let mut g1: Vec<CellGrads> = model
        .branch1
        .layers
        .iter()
        .map(CellGrads::zeros_like)
        .collect();
    let mut g2: Vec<CellGrads> = model
        .branch2
        .layers
        .iter()
        .map(CellGrads::zeros_like)
        .collect();
    let mut gh = DenseGrads::zeros_like(&model.head);
    let mut loss = 0.0;
    for beat in batch {
        let label = beat
            .label
            .ok_or_else(|| Error::InvalidArgument("unlabeled beat in train batch".into()))?;
        let f1 = crate::models::frames(&beat.alpha1, cfg.frame_width);
        let f2 = crate::models::frames(&beat.alpha2, cfg.frame_width);
        let (h1, c1) = stack_forward_cached(&model.branch1, &init.branch1, &f1)?;
        let (h2, c2) = stack_forward_cached(&model.branch2, &init.branch2, &f2)?;
        let mut joint = h1.clone();
        joint.extend_from_slice(&h2);
        let probs = crate::rnn::dense_softmax(&model.head, &joint)?;
        let beat_loss = cross_entropy(&probs, label.index());
        if !beat_loss.is_finite() {
            return Err(Error::Diverged(format!(
                "non-finite loss on beat at sample {}",
                beat.r_index
            )));
        }
        loss += beat_loss;

        let mut dlogits = probs;
        dlogits[label.index()] -= 1.0;
        let djoint = dense_backward(&model.head, &joint, &dlogits, &mut gh);
        let n1 = model.branch1.output_size();
        for (acc, grads) in g1
            .iter_mut()
            .zip(stack_backward(&model.branch1, &c1, &djoint[..n1]))
        {
            acc.add(&grads);
        }
        for (acc, grads) in g2
            .iter_mut()
            .zip(stack_backward(&model.branch2, &c2, &djoint[n1..]))
        {
            acc.add(&grads);
        }
    }
    let scale = 1.0 / batch.len() as f64;
    let mut flat = Vec::new();
    for g in g1.iter_mut().chain(g2.iter_mut()) {
        g.scale(scale);
        g.flatten_into(&mut flat);
    }
    gh.scale(scale);
    gh.flatten_into(&mut flat);
    Ok((loss * scale, flat))
}

/// Mean loss and flat gradients of model beta on a batch. The PCA basis
/// is fixed; gradients stop at its output.
pub fn bptt_beta(
    model: &ModelBeta,
    cfg: &ModelConfig,
    batch: &[&ScaledBeat],
    init: &[Vec<f64>],
) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("bptt batch"));
    }
    let mut gs: Vec<CellGrads> = model.stack.layers.iter().map(CellGrads::zeros_like).collect();
    let mut gh = DenseGrads::zeros_like(&model.head);
    let mut loss = 0.0;
    for beat in batch {
        let label = beat
            .label
            .ok_or_else(|| Error::InvalidArgument("unlabeled beat in train batch".into()))?;
        let projected = crate::pca::pca_transform(&model.pca, &beat.beta_pre)?;
        let f = crate::models::frames(&projected, cfg.frame_width);
        let (h, caches) = stack_forward_cached(&model.stack, init, &f)?;
        let probs = crate::rnn::dense_softmax(&model.head, &h)?;
        let beat_loss = cross_entropy(&probs, label.index());
        if !beat_loss.is_finite() {
            return Err(Error::Diverged(format!(
                "non-finite loss on beat at sample {}",
                beat.r_index
            )));
        }
        loss += beat_loss;
        let mut dlogits = probs;
        dlogits[label.index()] -= 1.0;
        let dh = dense_backward(&model.head, &h, &dlogits, &mut gh);
        for (acc, grads) in gs.iter_mut().zip(stack_backward(&model.stack, &caches, &dh)) {
            acc.add(&grads);
        }
    }
    let scale = 1.0 / batch.len() as f64;
    let mut flat = Vec::new();
    for g in &mut gs {
        g.scale(scale);
        g.flatten_into(&mut flat);
    }
    gh.scale(scale);
    gh.flatten_into(&mut flat);
    Ok((loss * scale, flat))
}

/// Loss curve and divergence flag from one training run.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct TrainCurve {
    pub epoch_loss: Vec<f64>,
    pub diverged: bool,
}

enum WhichModel<'a> {
    Alpha(&'a mut ModelAlpha),
    Beta(&'a mut ModelBeta),
}

// Shared epoch loop: shuffle, batch, BPTT, Adam. On a non-finite loss
// the last epoch-end checkpoint is restored and training stops early.
fn train_rnn_model(
    which: &mut WhichModel,
    cfg: &ModelConfig,
    beats: &[ScaledBeat],
    tcfg: &TrainConfig,
    rng: &mut ChaCha12Rng,
) -> Result<TrainCurve> {
    let mut params = match which {
        WhichModel::Alpha(m) => alpha_flatten(m),
        WhichModel::Beta(m) => beta_flatten(m),
    };
    let mut adam = AdamState::new(params.len());
    let mut curve = Vec::with_capacity(tcfg.epochs);
    let mut checkpoint = params.clone();
    let mut diverged = false;
    let mut order: Vec<usize> = (0..beats.len()).collect();
    'epochs: for _epoch in 0..tcfg.epochs {
        order.shuffle(rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(tcfg.batch_size) {
            let batch: Vec<&ScaledBeat> = chunk.iter().map(|&i| &beats[i]).collect();
            let result = match which {
                WhichModel::Alpha(m) => {
                    let init = BatchInit {
                        branch1: sample_c0s(&m.branch1, rng),
                        branch2: sample_c0s(&m.branch2, rng),
                    };
                    bptt_alpha(m, cfg, &batch, &init)
                }
                WhichModel::Beta(m) => {
                    let init = sample_c0s(&m.stack, rng);
                    bptt_beta(m, cfg, &batch, &init)
                }
            };
            let (loss, grads) = match result {
                Ok(v) => v,
                Err(Error::Diverged(_)) => {
                    diverged = true;
                    params = checkpoint.clone();
                    break 'epochs;
                }
                Err(e) => return Err(e),
            };
            adam.step(&mut params, &grads, tcfg);
            match which {
                WhichModel::Alpha(m) => alpha_unflatten(m, &params),
                WhichModel::Beta(m) => beta_unflatten(m, &params),
            }
            epoch_loss += loss;
            batches += 1;
        }
        curve.push(epoch_loss / batches.max(1) as f64);
        checkpoint = params.clone();
    }
    match which {
        WhichModel::Alpha(m) => alpha_unflatten(m, &params),
        WhichModel::Beta(m) => beta_unflatten(m, &params),
    }
    Ok(TrainCurve {
        epoch_loss: curve,
        diverged,
    })
}

/// Train the blend MLP on the two models' probability outputs for the
/// train beats. Plain backprop with Adam and the same loss.
pub fn train_blend(
    blend: &mut BlendMlp,
    inputs: &[(Vec<f64>, Vec<f64>)],
    labels: &[BeatLabel],
    tcfg: &TrainConfig,
    rng: &mut ChaCha12Rng,
) -> Result<TrainCurve> {
    if inputs.is_empty() {
        return Err(Error::EmptyInput("blend train data"));
    }
    let mut params = blend_flatten(blend);
    let mut adam = AdamState::new(params.len());
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut curve = Vec::with_capacity(tcfg.blend_epochs);
    for _ in 0..tcfg.blend_epochs {
        order.shuffle(rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(tcfg.batch_size) {
            let mut g1 = DenseGrads::zeros_like(&blend.l1);
            let mut g2 = DenseGrads::zeros_like(&blend.l2);
            let mut go = DenseGrads::zeros_like(&blend.out);
            let mut loss = 0.0;
            for &i in chunk {
                let (pa, pb) = &inputs[i];
                let mut x = pa.clone();
                x.extend_from_slice(pb);
                let (h1, h2, probs) = blend.forward_cached(&x)?;
                loss += cross_entropy(&probs, labels[i].index());
                let mut dlogits = probs;
                dlogits[labels[i].index()] -= 1.0;
                let mut dh2 = dense_backward(&blend.out, &h2, &dlogits, &mut go);
                for (d, h) in dh2.iter_mut().zip(&h2) {
                    if *h <= 0.0 {
                        *d = 0.0;
                    }
                }
                let mut dh1 = dense_backward(&blend.l2, &h1, &dh2, &mut g2);
                for (d, h) in dh1.iter_mut().zip(&h1) {
                    if *h <= 0.0 {
                        *d = 0.0;
                    }
                }
                let _ = dense_backward(&blend.l1, &x, &dh1, &mut g1);
            }
            let scale = 1.0 / chunk.len() as f64;
            let mut flat = Vec::new();
            for g in [&mut g1, &mut g2, &mut go] {
                g.scale(scale);
                g.flatten_into(&mut flat);
            }
            adam.step(&mut params, &flat, tcfg);
            blend_unflatten(blend, &params);
            epoch_loss += loss * scale;
            batches += 1;
        }
        curve.push(epoch_loss / batches.max(1) as f64);
    }
    Ok(TrainCurve {
        epoch_loss: curve,
        diverged: false,
    })
}

fn blend_flatten(blend: &BlendMlp) -> Vec<f64> {
    let mut out = Vec::new();
    for layer in [&blend.l1, &blend.l2, &blend.out] {
        out.extend_from_slice(&layer.w.data);
        out.extend_from_slice(&layer.b);
    }
    out
}

fn blend_unflatten(blend: &mut BlendMlp, flat: &[f64]) {
    let mut pos = 0;
    for layer in [&mut blend.l1, &mut blend.l2, &mut blend.out] {
        let wlen = layer.w.data.len();
        layer.w.data.copy_from_slice(&flat[pos..pos + wlen]);
        pos += wlen;
        let blen = layer.b.len();
        layer.b.copy_from_slice(&flat[pos..pos + blen]);
        pos += blen;
    }
}

/// Full training report for one patient bundle.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct TrainReport {
    pub record_id: u32,
    pub seed: u64,
    pub local_beats: usize,
    pub global_beats: usize,
    pub class_counts: [u64; 7],
    pub classes_missing_globally: Vec<String>,
    pub train_mean_rr: f64,
    pub alpha_curve: TrainCurve,
    pub beta_curve: TrainCurve,
    pub blend_curve: TrainCurve,
    pub missed_annotations: usize,
    pub spurious_detections: usize,
}

/// Train a complete bundle (alpha, beta, blend, scaler, PCA) for one
/// patient. Deterministic in (records, configs, seed).
pub fn train_bundle(
    patient: &LabeledRecord,
    globals: &[LabeledRecord],
    rate: f64,
    mcfg: &ModelConfig,
    tcfg: &TrainConfig,
) -> Result<(ModelBundle, TrainReport)> {
    mcfg.validate()?;
    tcfg.validate()?;
    let train_set = assemble_train_set(patient, globals, rate, tcfg)?;
    let raws: Vec<RawFeatures> = train_set
        .beats
        .iter()
        .map(|b| assemble_features(&b.segment, Some(b.label), mcfg))
        .collect::<Result<_>>()?;
    let scaler = FeatureScaler::fit(&raws)?;
    let scaled: Vec<ScaledBeat> = raws.iter().map(|r| scaler.apply(r)).collect::<Result<_>>()?;
    let beta_pre: Vec<Vec<f64>> = scaled.iter().map(|s| s.beta_pre.clone()).collect();

    let mut rng = ChaCha12Rng::seed_from_u64(tcfg.seed ^ (u64::from(patient.record_id) << 16));
    let (mut alpha, mut beta) = init_models(mcfg, &beta_pre, &mut rng)?;

    let alpha_curve = train_rnn_model(
        &mut WhichModel::Alpha(&mut alpha),
        mcfg,
        &scaled,
        tcfg,
        &mut rng,
    )?;
    let beta_curve = train_rnn_model(
        &mut WhichModel::Beta(&mut beta),
        mcfg,
        &scaled,
        tcfg,
        &mut rng,
    )?;

    // Blend inputs: the trained models' predictions on the train beats.
    let mut blend_inputs = Vec::with_capacity(scaled.len());
    let mut blend_labels = Vec::with_capacity(scaled.len());
    for beat in &scaled {
        let pa = alpha.forward(beat, mcfg)?;
        let pb = beta.forward(beat, mcfg)?;
        blend_inputs.push((pa, pb));
        blend_labels.push(beat.label.unwrap());
    }
    let mut blend = BlendMlp::new(mcfg.n_classes, mcfg.blend_hidden, &mut rng);
    let blend_curve = train_blend(&mut blend, &blend_inputs, &blend_labels, tcfg, &mut rng)?;

    let local_beats = train_set
        .beats
        .iter()
        .filter(|b| b.provenance == Provenance::Local)
        .count();
    let report = TrainReport {
        record_id: patient.record_id,
        seed: tcfg.seed,
        local_beats,
        global_beats: train_set.beats.len() - local_beats,
        class_counts: train_set.class_counts,
        classes_missing_globally: train_set
            .classes_missing_globally
            .iter()
            .map(|l| l.to_string())
            .collect(),
        train_mean_rr: train_set.train_mean_rr,
        alpha_curve,
        beta_curve,
        blend_curve,
        missed_annotations: patient.missed_annotations,
        spurious_detections: patient.spurious_detections,
    };
    let bundle = ModelBundle {
        record_id: patient.record_id,
        seed: tcfg.seed,
        minutes: tcfg.minutes,
        config: mcfg.clone(),
        scaler,
        alpha,
        beta,
        blend,
        train_mean_rr: train_set.train_mean_rr,
        class_counts: train_set.class_counts,
    };
    Ok((bundle, report))
}

// ---------------------------------------------------------------------
// Grid search
// ---------------------------------------------------------------------

/// Hyper-parameter ranges to search. The default grid contains the
/// shipped operating point (lstm, 30/30/50, one layer).
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct GridSpec {
    pub cells: Vec<crate::rnn::CellType>,
    pub layers: Vec<usize>,
    pub hidden_alpha: Vec<usize>,
    pub hidden_beta: Vec<usize>,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            cells: vec![crate::rnn::CellType::Lstm],
            layers: vec![1],
            hidden_alpha: vec![10, 30, 50],
            hidden_beta: vec![25, 50, 100],
        }
    }
}

impl GridSpec {
    pub fn configurations(&self, base: &ModelConfig) -> Vec<ModelConfig> {
        let mut out = Vec::new();
        for &cell in &self.cells {
            for &layers in &self.layers {
                for &ha in &self.hidden_alpha {
                    for &hb in &self.hidden_beta {
                        out.push(ModelConfig {
                            cell_type: cell,
                            layers,
                            hidden_alpha1: ha,
                            hidden_alpha2: ha,
                            hidden_beta: hb,
                            ..base.clone()
                        });
                    }
                }
            }
        }
        out
    }
}

/// One evaluated grid point.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct GridPoint {
    pub config: ModelConfig,
    /// F1 of class V on the held-out tail, when defined.
    pub f1_v: Option<f64>,
    pub accuracy: f64,
    pub cell_cost: usize,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct GridReport {
    pub evaluated: Vec<GridPoint>,
    pub best: ModelConfig,
}

fn config_cost(cfg: &ModelConfig) -> usize {
    crate::rnn::stack_cost(cfg.cell_type, cfg.frame_width, &cfg.hidden_layout(cfg.hidden_alpha1))
        + crate::rnn::stack_cost(
            cfg.cell_type,
            cfg.frame_width,
            &cfg.hidden_layout(cfg.hidden_alpha2),
        )
        + crate::rnn::stack_cost(cfg.cell_type, cfg.frame_width, &cfg.hidden_layout(cfg.hidden_beta))
}

/// Evaluate every configuration against a held-out tail (the last 20%
/// of local beats) and select by F1 on class V, tie-breaking toward the
/// cheaper cell cost.
pub fn grid_search(
    patient: &LabeledRecord,
    globals: &[LabeledRecord],
    rate: f64,
    base_cfg: &ModelConfig,
    tcfg: &TrainConfig,
    grid: &GridSpec,
) -> Result<GridReport> {
    let configs = grid.configurations(base_cfg);
    if configs.is_empty() {
        return Err(Error::EmptyInput("hyper-parameter grid"));
    }
    let cutoff = local_cutoff_sample(tcfg.minutes, rate);
    let local: Vec<&(BeatSegment, BeatLabel)> = patient
        .beats
        .iter()
        .filter(|(seg, _)| seg.r_index < cutoff)
        .collect();
    if local.len() < 5 {
        return Err(Error::EmptyInput("not enough local beats for validation"));
    }
    let val_start = local.len() - local.len() / 5;
    let val_beats: Vec<(BeatSegment, BeatLabel)> =
        local[val_start..].iter().map(|&b| b.clone()).collect();
    // Shrink the training view of the patient to the non-validation part.
    let train_patient = LabeledRecord {
        record_id: patient.record_id,
        beats: local[..val_start].iter().map(|&b| b.clone()).collect(),
        missed_annotations: patient.missed_annotations,
        spurious_detections: patient.spurious_detections,
        total_beat_annotations: patient.total_beat_annotations,
        dropped_edge: patient.dropped_edge,
        dropped_window: patient.dropped_window,
    };

    use rayon::prelude::*;
    // Configurations that fail validation (zero hidden units and the
    // like) are rejected individually rather than aborting the search.
    let configs: Vec<ModelConfig> = configs
        .into_iter()
        .filter(|c| c.validate().is_ok())
        .collect();
    if configs.is_empty() {
        return Err(Error::InvalidArgument(
            "no valid configuration in the grid".into(),
        ));
    }
    let mut evaluated: Vec<(usize, GridPoint)> = configs
        .par_iter()
        .enumerate()
        .map(|(idx, cfg)| -> Result<(usize, GridPoint)> {
            let mut t = tcfg.clone();
            t.seed = tcfg.seed.wrapping_add(idx as u64);
            let (bundle, _) = train_bundle(&train_patient, globals, rate, cfg, &t)?;
            let mut tp = 0u64;
            let mut fp = 0u64;
            let mut fn_ = 0u64;
            let mut correct = 0u64;
            for (seg, truth) in &val_beats {
                let (pred, _) = bundle.classify_beat(seg)?;
                if pred == *truth {
                    correct += 1;
                }
                let is_v_true = *truth == BeatLabel::V;
                let is_v_pred = pred == BeatLabel::V;
                match (is_v_true, is_v_pred) {
                    (true, true) => tp += 1,
                    (false, true) => fp += 1,
                    (true, false) => fn_ += 1,
                    _ => {}
                }
            }
            let f1_v = if 2 * tp + fp + fn_ > 0 && (tp + fn_) > 0 {
                Some(2.0 * tp as f64 / (2 * tp + fp + fn_) as f64)
            } else {
                None
            };
            Ok((
                idx,
                GridPoint {
                    config: cfg.clone(),
                    f1_v,
                    accuracy: correct as f64 / val_beats.len().max(1) as f64,
                    cell_cost: config_cost(cfg),
                },
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    evaluated.sort_by_key(|(idx, _)| *idx);
    let evaluated: Vec<GridPoint> = evaluated.into_iter().map(|(_, p)| p).collect();

    let best = evaluated
        .iter()
        .max_by(|a, b| {
            let fa = a.f1_v.unwrap_or(-1.0);
            let fb = b.f1_v.unwrap_or(-1.0);
            fa.partial_cmp(&fb)
                .unwrap()
                .then(b.cell_cost.cmp(&a.cell_cost).reverse())
                .then(b.accuracy.partial_cmp(&a.accuracy).unwrap().reverse())
        })
        .expect("non-empty grid")
        .config
        .clone();
    Ok(GridReport { evaluated, best })
}
