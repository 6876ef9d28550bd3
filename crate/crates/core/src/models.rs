//! The per-beat classifier: model alpha (two recurrent branches over
//! the raw segment and the wavelet features), model beta (one branch
//! over a PCA-compressed concatenation), and the small MLP that blends
//! their probability outputs.
//!
//! Branch inputs are the concatenated feature vectors consumed as a
//! time sequence of fixed-width frames (the tail zero-padded). Frame
//! width is a configuration value; 9 keeps the step count near 30 for
//! a two-lead beat.

use crate::pca::{pca_fit, pca_transform, PcaBasis};
use crate::qrs::BeatSegment;
use crate::record_io::BeatLabel;
use crate::rnn::{dense_softmax, CellType, DenseLayer, RnnStack};
use crate::wavelet::{downsample2, wavelet_features, WaveletSpec};
use crate::{read_tensors, write_tensors, Error, Result, Tensor};
use std::path::Path;

/// Hyper-parameters of one trained bundle.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModelConfig {
    pub cell_type: CellType,
    /// Recurrent layers per branch (1 or 2).
    pub layers: usize,
    pub hidden_alpha1: usize,
    pub hidden_alpha2: usize,
    pub hidden_beta: usize,
    pub blend_hidden: usize,
    pub pca_k: usize,
    pub frame_width: usize,
    pub two_lead: bool,
    pub use_wavelet: bool,
    pub wavelet: WaveletSpec,
    pub n_classes: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            cell_type: CellType::Lstm,
            layers: 1,
            hidden_alpha1: 30,
            hidden_alpha2: 30,
            hidden_beta: 50,
            blend_hidden: 14,
            pca_k: 64,
            frame_width: 9,
            two_lead: true,
            use_wavelet: true,
            wavelet: WaveletSpec::default(),
            n_classes: 7,
        }
    }
}

impl ModelConfig {
    pub fn hidden_layout(&self, hidden: usize) -> Vec<usize> {
        vec![hidden; self.layers]
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.layers > 2 {
            return Err(Error::InvalidArgument(format!(
                "layers must be 1 or 2, got {}",
                self.layers
            )));
        }
        if self.hidden_alpha1 == 0 || self.hidden_alpha2 == 0 || self.hidden_beta == 0 {
            return Err(Error::InvalidArgument("hidden sizes must be positive".into()));
        }
        if self.frame_width == 0 {
            return Err(Error::InvalidArgument("frame width must be positive".into()));
        }
        Ok(())
    }
}

/// Raw (unscaled) per-beat features.
#[derive(Debug, Clone)]
pub struct RawFeatures {
    pub label: Option<BeatLabel>,
    pub r_index: usize,
    pub x_ecg: Vec<f64>,
    pub x_rr: [f64; 4],
    pub x_w: Vec<f64>,
    pub x_ecg_ds: Vec<f64>,
}

/// Beat segment to feature vectors: the (optionally two-lead) segment,
/// its factor-2 downsample, and the wavelet coefficients of the
/// downsampled segment.
pub fn assemble_features(
    seg: &BeatSegment,
    label: Option<BeatLabel>,
    cfg: &ModelConfig,
) -> Result<RawFeatures> {
    let mut x_ecg = seg.lead1.clone();
    if cfg.two_lead {
        x_ecg.extend_from_slice(&seg.lead2);
    }
    let x_ecg_ds = downsample2(&x_ecg);
    let x_w = if cfg.use_wavelet {
        wavelet_features(&x_ecg_ds, &cfg.wavelet)?.x_w
    } else {
        Vec::new()
    };
    Ok(RawFeatures {
        label,
        r_index: seg.r_index,
        x_ecg,
        x_rr: seg.rr_features,
        x_w,
        x_ecg_ds,
    })
}

fn group_stats(rows: &[&[f64]]) -> (Vec<f64>, Vec<f64>) {
    let dim = rows.first().map_or(0, |r| r.len());
    let mut mean = vec![0.0; dim];
    for row in rows {
        crate::mat::add_scaled(&mut mean, row, 1.0);
    }
    let n = rows.len().max(1) as f64;
    for m in &mut mean {
        *m /= n;
    }
    let mut var = vec![0.0; dim];
    for row in rows {
        for (v, (x, m)) in var.iter_mut().zip(row.iter().zip(&mean)) {
            *v += (x - m) * (x - m);
        }
    }
    let std: Vec<f64> = var
        .iter()
        .map(|v| {
            let s = (v / n).sqrt();
            if s < 1e-8 {
                1.0
            } else {
                s
            }
        })
        .collect();
    (mean, std)
}

/// Per-feature standardization statistics frozen at training time.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FeatureScaler {
    pub ecg_mean: Vec<f64>,
    pub ecg_std: Vec<f64>,
    pub rr_mean: Vec<f64>,
    pub rr_std: Vec<f64>,
    pub w_mean: Vec<f64>,
    pub w_std: Vec<f64>,
    pub ds_mean: Vec<f64>,
    pub ds_std: Vec<f64>,
}

impl FeatureScaler {
    pub fn fit(beats: &[RawFeatures]) -> Result<FeatureScaler> {
        if beats.is_empty() {
            return Err(Error::EmptyInput("scaler fit"));
        }
        let ecg: Vec<&[f64]> = beats.iter().map(|b| b.x_ecg.as_slice()).collect();
        let rr: Vec<&[f64]> = beats.iter().map(|b| b.x_rr.as_slice()).collect();
        let w: Vec<&[f64]> = beats.iter().map(|b| b.x_w.as_slice()).collect();
        let ds: Vec<&[f64]> = beats.iter().map(|b| b.x_ecg_ds.as_slice()).collect();
        let (ecg_mean, ecg_std) = group_stats(&ecg);
        let (rr_mean, rr_std) = group_stats(&rr);
        let (w_mean, w_std) = group_stats(&w);
        let (ds_mean, ds_std) = group_stats(&ds);
        Ok(FeatureScaler {
            ecg_mean,
            ecg_std,
            rr_mean,
            rr_std,
            w_mean,
            w_std,
            ds_mean,
            ds_std,
        })
    }

    fn scale(mean: &[f64], std: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != mean.len() {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                got: x.len(),
            });
        }
        Ok(x.iter()
            .zip(mean.iter().zip(std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect())
    }

    /// Standardized model inputs for one beat.
    ///
    /// The RR features sit at the tail of each branch vector, so after
    /// framing they reach the recurrent layer in the final step, right
    /// next to the readout; putting them first measurably hurts, since
    /// they would have to survive the whole unroll.
    pub fn apply(&self, raw: &RawFeatures) -> Result<ScaledBeat> {
        let ecg = Self::scale(&self.ecg_mean, &self.ecg_std, &raw.x_ecg)?;
        let rr = Self::scale(&self.rr_mean, &self.rr_std, &raw.x_rr)?;
        let w = Self::scale(&self.w_mean, &self.w_std, &raw.x_w)?;
        let ds = Self::scale(&self.ds_mean, &self.ds_std, &raw.x_ecg_ds)?;

        let mut beta_pre = ds;
        beta_pre.extend_from_slice(&rr);
        beta_pre.extend_from_slice(&w);
        let mut alpha1 = ecg;
        alpha1.extend_from_slice(&rr);
        let mut alpha2 = w;
        alpha2.extend_from_slice(&rr);
        Ok(ScaledBeat {
            label: raw.label,
            r_index: raw.r_index,
            alpha1,
            alpha2,
            beta_pre,
        })
    }
}

/// Standardized inputs: signal and wavelet blocks with the RR features
/// concatenated at the tail.
#[derive(Debug, Clone)]
pub struct ScaledBeat {
    pub label: Option<BeatLabel>,
    pub r_index: usize,
    pub alpha1: Vec<f64>,
    pub alpha2: Vec<f64>,
    pub beta_pre: Vec<f64>,
}

/// Split a vector into fixed-width frames, zero-padding the tail.
pub fn frames(x: &[f64], width: usize) -> Vec<Vec<f64>> {
    assert!(width > 0);
    if x.is_empty() {
        return vec![vec![0.0; width]];
    }
    x.chunks(width)
        .map(|c| {
            let mut f = c.to_vec();
            f.resize(width, 0.0);
            f
        })
        .collect()
}

/// Model alpha: two branches, concatenated final features, dense head.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelAlpha {
    pub branch1: RnnStack,
    pub branch2: RnnStack,
    pub head: DenseLayer,
}

impl ModelAlpha {
    pub fn forward(&self, beat: &ScaledBeat, cfg: &ModelConfig) -> Result<Vec<f64>> {
        let f1 = frames(&beat.alpha1, cfg.frame_width);
        let f2 = frames(&beat.alpha2, cfg.frame_width);
        let h1 = self.branch1.forward(&self.branch1.zero_c0(), &f1)?;
        let h2 = self.branch2.forward(&self.branch2.zero_c0(), &f2)?;
        let mut joint = h1;
        joint.extend_from_slice(&h2);
        dense_softmax(&self.head, &joint)
    }

    pub fn param_count(&self) -> usize {
        self.branch1.param_count() + self.branch2.param_count() + self.head.param_count()
    }
}

/// Model beta: PCA compression then one branch and a dense head.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBeta {
    pub pca: PcaBasis,
    pub stack: RnnStack,
    pub head: DenseLayer,
}

impl ModelBeta {
    pub fn forward(&self, beat: &ScaledBeat, cfg: &ModelConfig) -> Result<Vec<f64>> {
        let projected = pca_transform(&self.pca, &beat.beta_pre)?;
        let f = frames(&projected, cfg.frame_width);
        let h = self.stack.forward(&self.stack.zero_c0(), &f)?;
        dense_softmax(&self.head, &h)
    }

    pub fn param_count(&self) -> usize {
        self.stack.param_count() + self.head.param_count()
    }
}

/// Blend MLP: 2*Ny -> hidden -> hidden -> Ny with ReLU activations.
#[derive(Debug, Clone, PartialEq)]
pub struct BlendMlp {
    pub l1: DenseLayer,
    pub l2: DenseLayer,
    pub out: DenseLayer,
}

fn relu(v: &mut [f64]) {
    for x in v.iter_mut() {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

impl BlendMlp {
    pub fn new(n_classes: usize, hidden: usize, rng: &mut impl rand::Rng) -> BlendMlp {
        BlendMlp {
            l1: DenseLayer::random(hidden, 2 * n_classes, rng),
            l2: DenseLayer::random(hidden, hidden, rng),
            out: DenseLayer::random(n_classes, hidden, rng),
        }
    }

    /// Blend two probability vectors into the final class distribution.
    pub fn forward(&self, p_alpha: &[f64], p_beta: &[f64]) -> Result<Vec<f64>> {
        for (name, p) in [("alpha", p_alpha), ("beta", p_beta)] {
            let sum: f64 = p.iter().sum();
            if (sum - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidArgument(format!(
                    "model {name} output does not sum to 1 ({sum})"
                )));
            }
        }
        let mut x = p_alpha.to_vec();
        x.extend_from_slice(p_beta);
        let mut h1 = self.l1.forward(&x)?;
        relu(&mut h1);
        let mut h2 = self.l2.forward(&h1)?;
        relu(&mut h2);
        dense_softmax(&self.out, &h2)
    }

    /// Forward keeping intermediate activations for backprop.
    pub fn forward_cached(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let mut h1 = self.l1.forward(x)?;
        relu(&mut h1);
        let mut h2 = self.l2.forward(&h1)?;
        relu(&mut h2);
        let probs = dense_softmax(&self.out, &h2)?;
        Ok((h1, h2, probs))
    }

    pub fn param_count(&self) -> usize {
        self.l1.param_count() + self.l2.param_count() + self.out.param_count()
    }
}

/// Which heads participate in classification (the no-blending ablations
/// evaluate a single model).
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum EvalHead {
    Blend,
    AlphaOnly,
    BetaOnly,
}

/// Everything trained for one patient.
#[derive(Debug, Clone)]
pub struct ModelBundle {
    pub record_id: u32,
    pub seed: u64,
    pub minutes: f64,
    pub config: ModelConfig,
    pub scaler: FeatureScaler,
    pub alpha: ModelAlpha,
    pub beta: ModelBeta,
    pub blend: BlendMlp,
    pub train_mean_rr: f64,
    /// Beat counts per class in the train set, used for tie-breaking.
    pub class_counts: [u64; 7],
}

impl ModelBundle {
    /// Classify one segmented beat end to end.
    pub fn classify_beat(&self, seg: &BeatSegment) -> Result<(BeatLabel, Vec<f64>)> {
        self.classify_with_head(seg, EvalHead::Blend)
    }

    pub fn classify_with_head(
        &self,
        seg: &BeatSegment,
        head: EvalHead,
    ) -> Result<(BeatLabel, Vec<f64>)> {
        let mut seg = seg.clone();
        seg.rr_features[3] = self.train_mean_rr;
        let raw = assemble_features(&seg, None, &self.config)?;
        let scaled = self.scaler.apply(&raw)?;
        let probs = match head {
            EvalHead::Blend => {
                let pa = self.alpha.forward(&scaled, &self.config)?;
                let pb = self.beta.forward(&scaled, &self.config)?;
                self.blend.forward(&pa, &pb)?
            }
            EvalHead::AlphaOnly => self.alpha.forward(&scaled, &self.config)?,
            EvalHead::BetaOnly => self.beta.forward(&scaled, &self.config)?,
        };
        Ok((self.argmax_label(&probs), probs))
    }

    /// Highest probability wins; exact ties go to the class more
    /// frequent in the train data, then to the lowest class index.
    pub fn argmax_label(&self, probs: &[f64]) -> BeatLabel {
        let mut best = 0usize;
        for i in 1..probs.len() {
            let better = probs[i] > probs[best]
                || (probs[i] == probs[best]
                    && self.class_counts[i] > self.class_counts[best]);
            if better {
                best = i;
            }
        }
        BeatLabel::from_index(best).unwrap_or(BeatLabel::N)
    }
}

// ---------------------------------------------------------------------
// Bundle serialization: meta.json plus HBE1 weight files.
// ---------------------------------------------------------------------

#[derive(serde::Serialize, serde::Deserialize)]
struct BundleMeta {
    format_version: u32,
    record_id: u32,
    seed: u64,
    minutes: f64,
    config: ModelConfig,
    train_mean_rr: f64,
    class_counts: [u64; 7],
    scaler: FeatureScaler,
}

fn cell_tensors(weights: &crate::rnn::CellWeights) -> Vec<Tensor> {
    let mut out = Vec::new();
    for (i, g) in weights.gates.iter().enumerate() {
        out.push(Tensor::from_mat(&format!("g{i}.w"), &g.w));
        out.push(Tensor::from_mat(&format!("g{i}.u"), &g.u));
        out.push(Tensor::from_vec(&format!("g{i}.b"), &g.b));
    }
    for (i, p) in weights.peepholes.iter().enumerate() {
        out.push(Tensor::from_vec(&format!("p{i}"), p));
    }
    out
}

fn cell_from_tensors(
    cell_type: CellType,
    tensors: &[Tensor],
) -> Result<crate::rnn::CellWeights> {
    let find = |name: &str| -> Result<&Tensor> {
        tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Serialize(format!("missing tensor '{name}'")))
    };
    let g0w = find("g0.w")?.to_mat()?;
    let n_h = g0w.rows;
    let n_x = g0w.cols;
    let mut weights = crate::rnn::CellWeights::zeros(cell_type, n_x, n_h);
    for (i, gate) in weights.gates.iter_mut().enumerate() {
        gate.w = find(&format!("g{i}.w"))?.to_mat()?;
        gate.u = find(&format!("g{i}.u"))?.to_mat()?;
        gate.b = find(&format!("g{i}.b"))?.data.clone();
    }
    for (i, p) in weights.peepholes.iter_mut().enumerate() {
        *p = find(&format!("p{i}"))?.data.clone();
    }
    Ok(weights)
}

fn write_stack(dir: &Path, prefix: &str, stack: &RnnStack) -> Result<()> {
    for (i, layer) in stack.layers.iter().enumerate() {
        write_tensors(
            &dir.join(format!("{prefix}_l{i}.hbe")),
            Some(layer.cell_type.name()),
            &cell_tensors(layer),
        )?;
    }
    Ok(())
}

fn read_stack(dir: &Path, prefix: &str, layers: usize) -> Result<RnnStack> {
    let mut out = Vec::with_capacity(layers);
    for i in 0..layers {
        let (cell_name, tensors) = read_tensors(&dir.join(format!("{prefix}_l{i}.hbe")))?;
        let cell_name = cell_name
            .ok_or_else(|| Error::Serialize(format!("{prefix}_l{i}: missing cell type")))?;
        out.push(cell_from_tensors(CellType::from_name(&cell_name)?, &tensors)?);
    }
    Ok(RnnStack { layers: out })
}

fn write_dense(path: &Path, layer: &DenseLayer) -> Result<()> {
    write_tensors(
        path,
        None,
        &[Tensor::from_mat("w", &layer.w), Tensor::from_vec("b", &layer.b)],
    )
}

fn read_dense(path: &Path) -> Result<DenseLayer> {
    let (_, tensors) = read_tensors(path)?;
    let w = tensors
        .iter()
        .find(|t| t.name == "w")
        .ok_or_else(|| Error::Serialize("dense layer missing 'w'".into()))?
        .to_mat()?;
    let b = tensors
        .iter()
        .find(|t| t.name == "b")
        .ok_or_else(|| Error::Serialize("dense layer missing 'b'".into()))?
        .data
        .clone();
    Ok(DenseLayer { w, b })
}

/// Write a bundle directory: `meta.json` plus one HBE1 file per
/// component.
pub fn save_bundle(dir: &Path, bundle: &ModelBundle) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let meta = BundleMeta {
        format_version: 1,
        record_id: bundle.record_id,
        seed: bundle.seed,
        minutes: bundle.minutes,
        config: bundle.config.clone(),
        train_mean_rr: bundle.train_mean_rr,
        class_counts: bundle.class_counts,
        scaler: bundle.scaler.clone(),
    };
    std::fs::write(dir.join("meta.json"), serde_json::to_vec_pretty(&meta)?)?;
    write_stack(dir, "alpha1", &bundle.alpha.branch1)?;
    write_stack(dir, "alpha2", &bundle.alpha.branch2)?;
    write_stack(dir, "beta", &bundle.beta.stack)?;
    write_dense(&dir.join("alpha_head.hbe"), &bundle.alpha.head)?;
    write_dense(&dir.join("beta_head.hbe"), &bundle.beta.head)?;
    write_tensors(
        &dir.join("pca.hbe"),
        None,
        &[
            Tensor::from_vec("mean", &bundle.beta.pca.mean),
            Tensor::from_mat("components", &bundle.beta.pca.components),
            Tensor::from_vec("eigenvalues", &bundle.beta.pca.eigenvalues),
        ],
    )?;
    write_tensors(
        &dir.join("blend.hbe"),
        None,
        &[
            Tensor::from_mat("l1.w", &bundle.blend.l1.w),
            Tensor::from_vec("l1.b", &bundle.blend.l1.b),
            Tensor::from_mat("l2.w", &bundle.blend.l2.w),
            Tensor::from_vec("l2.b", &bundle.blend.l2.b),
            Tensor::from_mat("out.w", &bundle.blend.out.w),
            Tensor::from_vec("out.b", &bundle.blend.out.b),
        ],
    )?;
    Ok(())
}

pub fn load_bundle(dir: &Path) -> Result<ModelBundle> {
    let meta_bytes = std::fs::read(dir.join("meta.json"))?;
    let meta: BundleMeta = serde_json::from_slice(&meta_bytes)?;
    meta.config.validate()?;
    let branch1 = read_stack(dir, "alpha1", meta.config.layers)?;
    let branch2 = read_stack(dir, "alpha2", meta.config.layers)?;
    let stack = read_stack(dir, "beta", meta.config.layers)?;
    let alpha_head = read_dense(&dir.join("alpha_head.hbe"))?;
    let beta_head = read_dense(&dir.join("beta_head.hbe"))?;
    let (_, pca_tensors) = read_tensors(&dir.join("pca.hbe"))?;
    let find = |name: &str| -> Result<&Tensor> {
        pca_tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Serialize(format!("pca file missing '{name}'")))
    };
    let pca = PcaBasis {
        mean: find("mean")?.data.clone(),
        components: find("components")?.to_mat()?,
        eigenvalues: find("eigenvalues")?.data.clone(),
    };
    let (_, blend_tensors) = read_tensors(&dir.join("blend.hbe"))?;
    let findb = |name: &str| -> Result<&Tensor> {
        blend_tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Serialize(format!("blend file missing '{name}'")))
    };
    let blend = BlendMlp {
        l1: DenseLayer {
            w: findb("l1.w")?.to_mat()?,
            b: findb("l1.b")?.data.clone(),
        },
        l2: DenseLayer {
            w: findb("l2.w")?.to_mat()?,
            b: findb("l2.b")?.data.clone(),
        },
        out: DenseLayer {
            w: findb("out.w")?.to_mat()?,
            b: findb("out.b")?.data.clone(),
        },
    };
    Ok(ModelBundle {
        record_id: meta.record_id,
        seed: meta.seed,
        minutes: meta.minutes,
        config: meta.config,
        scaler: meta.scaler,
        alpha: ModelAlpha {
            branch1,
            branch2,
            head: alpha_head,
        },
        beta: ModelBeta {
            pca,
            stack,
            head: beta_head,
        },
        blend,
        train_mean_rr: meta.train_mean_rr,
        class_counts: meta.class_counts,
    })
}

/// Build untrained models with seeded random weights. The PCA basis is
/// fitted on the provided pre-PCA train vectors.
pub fn init_models(
    cfg: &ModelConfig,
    beta_pre_train: &[Vec<f64>],
    rng: &mut impl rand::Rng,
) -> Result<(ModelAlpha, ModelBeta)> {
    cfg.validate()?;
    let d = beta_pre_train
        .first()
        .map(Vec::len)
        .ok_or(Error::EmptyInput("pca train vectors"))?;
    let k = cfg.pca_k.min(d);
    let pca = pca_fit(beta_pre_train, k)?;
    let alpha = ModelAlpha {
        branch1: RnnStack::new(
            cfg.cell_type,
            cfg.frame_width,
            &cfg.hidden_layout(cfg.hidden_alpha1),
            rng,
        ),
        branch2: RnnStack::new(
            cfg.cell_type,
            cfg.frame_width,
            &cfg.hidden_layout(cfg.hidden_alpha2),
            rng,
        ),
        head: DenseLayer::random(cfg.n_classes, cfg.hidden_alpha1 + cfg.hidden_alpha2, rng),
    };
    let beta = ModelBeta {
        pca,
        stack: RnnStack::new(
            cfg.cell_type,
            cfg.frame_width,
            &cfg.hidden_layout(cfg.hidden_beta),
            rng,
        ),
        head: DenseLayer::random(cfg.n_classes, cfg.hidden_beta, rng),
    };
    Ok((alpha, beta))
}

/// Analytic multiply-accumulate count of one classification: wavelet
/// cascade plus every recurrent step plus the dense heads and blend.
pub fn analytic_op_count(cfg: &ModelConfig) -> usize {
    let ecg_len = if cfg.two_lead { 504 } else { 252 };
    let ds_len = ecg_len / 2;
    let w_len: usize = crate::wavelet::band_lengths(ds_len, cfg.wavelet.levels)
        .iter()
        .sum();
    let wavelet_ops = if cfg.use_wavelet {
        crate::wavelet::wavelet_cost(ds_len, cfg.wavelet.order, cfg.wavelet.levels) as usize
    } else {
        0
    };
    let steps = |len: usize| len.div_ceil(cfg.frame_width);
    let a1_steps = steps(4 + ecg_len);
    let a2_len = if cfg.use_wavelet { 4 + w_len } else { 4 };
    let a2_steps = steps(a2_len);
    let beta_steps = steps(cfg.pca_k);
    let stack = |hidden: usize, steps: usize| {
        steps * crate::rnn::stack_cost(cfg.cell_type, cfg.frame_width, &cfg.hidden_layout(hidden))
    };
    let pca_ops = cfg.pca_k * (ds_len + 4 + w_len);
    let heads = cfg.n_classes * (cfg.hidden_alpha1 + cfg.hidden_alpha2)
        + cfg.n_classes * cfg.hidden_beta;
    let blend = cfg.blend_hidden * 2 * cfg.n_classes
        + cfg.blend_hidden * cfg.blend_hidden
        + cfg.n_classes * cfg.blend_hidden;
    wavelet_ops
        + stack(cfg.hidden_alpha1, a1_steps)
        + stack(cfg.hidden_alpha2, a2_steps)
        + stack(cfg.hidden_beta, beta_steps)
        + pca_ops
        + heads
        + blend
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn dummy_segment(rate: f64) -> BeatSegment {
        let n = crate::qrs::segment_len(rate);
        BeatSegment {
            r_index: 1000,
            lead1: (0..n).map(|i| (i as f64 * 0.1).sin()).collect(),
            lead2: (0..n).map(|i| (i as f64 * 0.07).cos()).collect(),
            rr_features: [0.8, 0.82, 0.81, 0.8],
        }
    }

    fn dummy_raws(cfg: &ModelConfig, count: usize) -> Vec<RawFeatures> {
        (0..count)
            .map(|k| {
                let mut seg = dummy_segment(360.0);
                for (i, v) in seg.lead1.iter_mut().enumerate() {
                    *v += ((k * 31 + i) as f64 * 0.13).sin() * 0.3;
                }
                assemble_features(&seg, Some(BeatLabel::N), cfg).unwrap()
            })
            .collect()
    }

    #[test]
    fn feature_dimensions_two_lead() {
        let cfg = ModelConfig::default();
        let raw = assemble_features(&dummy_segment(360.0), None, &cfg).unwrap();
        assert_eq!(raw.x_ecg.len(), 504);
        assert_eq!(raw.x_ecg_ds.len(), 252);
        assert_eq!(raw.x_w.len(), 253);
        // PCA input dimension: |x_ecg|/2 + 4 + |x_w|.
        assert_eq!(raw.x_ecg_ds.len() + 4 + raw.x_w.len(), 509);
    }

    #[test]
    fn feature_dimensions_single_lead() {
        let cfg = ModelConfig {
            two_lead: false,
            ..ModelConfig::default()
        };
        let raw = assemble_features(&dummy_segment(360.0), None, &cfg).unwrap();
        assert_eq!(raw.x_ecg.len(), 252);
        assert_eq!(raw.x_ecg_ds.len(), 126);
        assert_eq!(raw.x_w.len(), 127);
    }

    #[test]
    fn frame_count_matches_contract() {
        let cfg = ModelConfig::default();
        let raw = assemble_features(&dummy_segment(360.0), None, &cfg).unwrap();
        let scaler = FeatureScaler::fit(&[raw.clone()]).unwrap();
        let scaled = scaler.apply(&raw).unwrap();
        assert_eq!(frames(&scaled.alpha1, 9).len(), 508usize.div_ceil(9));
        assert_eq!(frames(&scaled.alpha2, 9).len(), 257usize.div_ceil(9));
        let last = frames(&scaled.alpha1, 9).pop().unwrap();
        assert_eq!(last.len(), 9);
    }

    #[test]
    fn zero_weight_models_are_uniform() {
        let cfg = ModelConfig {
            hidden_alpha1: 4,
            hidden_alpha2: 4,
            hidden_beta: 5,
            pca_k: 6,
            ..ModelConfig::default()
        };
        let raws = dummy_raws(&cfg, 8);
        let scaler = FeatureScaler::fit(&raws).unwrap();
        let pre: Vec<Vec<f64>> = raws
            .iter()
            .map(|r| scaler.apply(r).unwrap().beta_pre)
            .collect();
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let (mut alpha, mut beta) = init_models(&cfg, &pre, &mut rng).unwrap();
        // Zero every weight: softmax of zero logits is uniform.
        for stack in [&mut alpha.branch1, &mut alpha.branch2, &mut beta.stack] {
            for layer in &mut stack.layers {
                for g in &mut layer.gates {
                    g.w.scale(0.0);
                    g.u.scale(0.0);
                    for b in &mut g.b {
                        *b = 0.0;
                    }
                }
            }
        }
        alpha.head.w.scale(0.0);
        beta.head.w.scale(0.0);
        let scaled = scaler.apply(&raws[0]).unwrap();
        for probs in [
            alpha.forward(&scaled, &cfg).unwrap(),
            beta.forward(&scaled, &cfg).unwrap(),
        ] {
            for p in &probs {
                assert!((p - 1.0 / 7.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn forward_outputs_sum_to_one() {
        let cfg = ModelConfig {
            hidden_alpha1: 6,
            hidden_alpha2: 5,
            hidden_beta: 7,
            pca_k: 10,
            ..ModelConfig::default()
        };
        let raws = dummy_raws(&cfg, 12);
        let scaler = FeatureScaler::fit(&raws).unwrap();
        let pre: Vec<Vec<f64>> = raws
            .iter()
            .map(|r| scaler.apply(r).unwrap().beta_pre)
            .collect();
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let (alpha, beta) = init_models(&cfg, &pre, &mut rng).unwrap();
        let blend = BlendMlp::new(7, 14, &mut rng);
        let scaled = scaler.apply(&raws[3]).unwrap();
        let pa = alpha.forward(&scaled, &cfg).unwrap();
        let pb = beta.forward(&scaled, &cfg).unwrap();
        let pf = blend.forward(&pa, &pb).unwrap();
        for p in [&pa, &pb, &pf] {
            let s: f64 = p.iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
            assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
        }
    }

    #[test]
    fn blend_rejects_non_probability_input() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let blend = BlendMlp::new(7, 14, &mut rng);
        let good = vec![1.0 / 7.0; 7];
        let bad = vec![0.5; 7];
        assert!(blend.forward(&good, &good).is_ok());
        assert!(blend.forward(&bad, &good).is_err());
    }

    #[test]
    fn bundle_round_trip_bit_exact() {
        let cfg = ModelConfig {
            hidden_alpha1: 5,
            hidden_alpha2: 4,
            hidden_beta: 6,
            pca_k: 8,
            ..ModelConfig::default()
        };
        let raws = dummy_raws(&cfg, 10);
        let scaler = FeatureScaler::fit(&raws).unwrap();
        let pre: Vec<Vec<f64>> = raws
            .iter()
            .map(|r| scaler.apply(r).unwrap().beta_pre)
            .collect();
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let (alpha, beta) = init_models(&cfg, &pre, &mut rng).unwrap();
        let blend = BlendMlp::new(7, cfg.blend_hidden, &mut rng);
        let bundle = ModelBundle {
            record_id: 200,
            seed: 7,
            minutes: 5.0,
            config: cfg.clone(),
            scaler,
            alpha,
            beta,
            blend,
            train_mean_rr: 0.8,
            class_counts: [5, 0, 0, 1, 2, 0, 0],
        };
        let dir = tempfile::tempdir().unwrap();
        save_bundle(dir.path(), &bundle).unwrap();
        let loaded = load_bundle(dir.path()).unwrap();

        // Same beat, identical probabilities from the reloaded bundle
        // (weights go through f32 on disk; both paths must agree after
        // one save/load).
        let seg = dummy_segment(360.0);
        let dir2 = tempfile::tempdir().unwrap();
        save_bundle(dir2.path(), &loaded).unwrap();
        let reloaded = load_bundle(dir2.path()).unwrap();
        let (l1, p1) = loaded.classify_beat(&seg).unwrap();
        let (l2, p2) = reloaded.classify_beat(&seg).unwrap();
        assert_eq!(l1, l2);
        assert_eq!(p1, p2);

        // And the bundle directories are byte-identical.
        for entry in std::fs::read_dir(dir.path()).unwrap() {
            let name = entry.unwrap().file_name();
            if name == "meta.json" {
                continue;
            }
            let a = std::fs::read(dir.path().join(&name)).unwrap();
            let b = std::fs::read(dir2.path().join(&name)).unwrap();
            assert_eq!(a, b, "{name:?} differs after round trip");
        }
    }

    #[test]
    fn tie_break_prefers_frequent_class() {
        let cfg = ModelConfig::default();
        let raws = dummy_raws(&cfg, 4);
        let scaler = FeatureScaler::fit(&raws).unwrap();
        let pre: Vec<Vec<f64>> = raws
            .iter()
            .map(|r| scaler.apply(r).unwrap().beta_pre)
            .collect();
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let (alpha, beta) = init_models(
            &ModelConfig {
                pca_k: 4,
                hidden_alpha1: 3,
                hidden_alpha2: 3,
                hidden_beta: 3,
                ..cfg.clone()
            },
            &pre,
            &mut rng,
        )
        .unwrap();
        let bundle = ModelBundle {
            record_id: 1,
            seed: 0,
            minutes: 5.0,
            config: cfg,
            scaler,
            alpha,
            beta,
            blend: BlendMlp::new(7, 14, &mut rng),
            train_mean_rr: 0.8,
            class_counts: [0, 0, 0, 9, 2, 0, 0],
        };
        let uniform = vec![1.0 / 7.0; 7];
        assert_eq!(bundle.argmax_label(&uniform), BeatLabel::S);
        let mut zeros_count = bundle.clone();
        zeros_count.class_counts = [0; 7];
        assert_eq!(zeros_count.argmax_label(&uniform), BeatLabel::N);
    }

    #[test]
    fn analytic_op_count_is_deterministic() {
        let cfg = ModelConfig::default();
        let a = analytic_op_count(&cfg);
        let b = analytic_op_count(&cfg);
        assert_eq!(a, b);
        assert!(a > 0);
        let single = ModelConfig {
            two_lead: false,
            ..ModelConfig::default()
        };
        assert!(analytic_op_count(&single) < a);
    }
}
