//! key=value config files mirroring the training and model settings.
//!
//! Lines are `key = value` (spaces optional); `#` starts a comment.
//! Unknown keys are rejected so typos fail loudly.

use anyhow::{anyhow, Context};
use hbe_core::models::ModelConfig;
use hbe_core::rnn::CellType;
use hbe_core::training::TrainConfig;
use std::path::Path;

pub fn load_configs(path: Option<&Path>) -> anyhow::Result<(ModelConfig, TrainConfig)> {
    let mut mcfg = ModelConfig::default();
    let mut tcfg = TrainConfig::default();
    let Some(path) = path else {
        return Ok((mcfg, tcfg));
    };
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("config file {}", path.display()))?;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("line {}: expected key=value, got '{raw}'", lineno + 1))?;
        let key = key.trim();
        let value = value.trim();
        apply(&mut mcfg, &mut tcfg, key, value)
            .with_context(|| format!("line {}: key '{key}'", lineno + 1))?;
    }
    tcfg.validate()?;
    mcfg.validate()?;
    Ok((mcfg, tcfg))
}

fn apply(
    mcfg: &mut ModelConfig,
    tcfg: &mut TrainConfig,
    key: &str,
    value: &str,
) -> anyhow::Result<()> {
    match key {
        // Training
        "minutes" => tcfg.minutes = value.parse()?,
        "batch_size" => tcfg.batch_size = value.parse()?,
        "epochs" => tcfg.epochs = value.parse()?,
        "blend_epochs" => tcfg.blend_epochs = value.parse()?,
        "learning_rate" => tcfg.learning_rate = value.parse()?,
        "beta1" => tcfg.beta1 = value.parse()?,
        "beta2" => tcfg.beta2 = value.parse()?,
        "epsilon" => tcfg.epsilon = value.parse()?,
        "global_per_class" => tcfg.global_per_class = value.parse()?,
        "seed" => tcfg.seed = value.parse()?,
        // Model
        "cell_type" => mcfg.cell_type = CellType::from_name(value)?,
        "layers" => mcfg.layers = value.parse()?,
        "hidden_alpha1" => mcfg.hidden_alpha1 = value.parse()?,
        "hidden_alpha2" => mcfg.hidden_alpha2 = value.parse()?,
        "hidden_beta" => mcfg.hidden_beta = value.parse()?,
        "blend_hidden" => mcfg.blend_hidden = value.parse()?,
        "pca_k" => mcfg.pca_k = value.parse()?,
        "frame_width" => mcfg.frame_width = value.parse()?,
        "two_lead" => mcfg.two_lead = value.parse()?,
        "use_wavelet" => mcfg.use_wavelet = value.parse()?,
        "wavelet_order" => mcfg.wavelet.order = value.parse()?,
        "wavelet_levels" => mcfg.wavelet.levels = value.parse()?,
        other => return Err(anyhow!("unknown config key '{other}'")),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_overrides_and_rejects_unknown() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("hbe.conf");
        std::fs::write(&path, "epochs = 3\ncell_type = gru # comment\n\n# full line\npca_k=32\n").unwrap();
        let (m, t) = load_configs(Some(&path)).unwrap();
        assert_eq!(t.epochs, 3);
        assert_eq!(m.cell_type, CellType::Gru);
        assert_eq!(m.pca_k, 32);

        std::fs::write(&path, "not_a_key = 1\n").unwrap();
        assert!(load_configs(Some(&path)).is_err());
    }
}
