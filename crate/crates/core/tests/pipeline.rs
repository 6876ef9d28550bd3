//! Cross-module integration: file round trips, streaming vs offline
//! parity on a generated record, and bundle save/load equivalence on
//! the classification path.

use hbe_core::models::{load_bundle, save_bundle, ModelConfig};
use hbe_core::qrs::{segment_record, StreamBuffer};
use hbe_core::record_io::load_record;
use hbe_core::training::{label_record, train_bundle, TrainConfig};

fn fast_train_cfg() -> TrainConfig {
    TrainConfig {
        epochs: 2,
        blend_epochs: 2,
        global_per_class: 10,
        ..TrainConfig::default()
    }
}

#[test]
fn files_to_bundle_to_classification() {
    let dir = tempfile::tempdir().unwrap();
    hbe_core::synth::write_record_files(dir.path(), 200, 420.0).unwrap();
    hbe_core::synth::write_record_files(dir.path(), 100, 300.0).unwrap();

    let patient = label_record(&load_record(dir.path(), 200).unwrap()).unwrap();
    let global = label_record(&load_record(dir.path(), 100).unwrap()).unwrap();
    let mcfg = ModelConfig {
        pca_k: 16,
        ..ModelConfig::default()
    };
    let (bundle, report) =
        train_bundle(&patient, &[global], 360.0, &mcfg, &fast_train_cfg()).unwrap();
    assert!(report.local_beats > 0);

    let bundle_dir = dir.path().join("bundle");
    save_bundle(&bundle_dir, &bundle).unwrap();
    let loaded = load_bundle(&bundle_dir).unwrap();

    // The saved-then-loaded bundle classifies every test beat the same
    // way as a bundle that went through the same f32 serialization.
    let bundle_dir2 = dir.path().join("bundle2");
    save_bundle(&bundle_dir2, &loaded).unwrap();
    let loaded2 = load_bundle(&bundle_dir2).unwrap();
    for (seg, _) in patient.beats.iter().take(25) {
        let (l1, p1) = loaded.classify_beat(seg).unwrap();
        let (l2, p2) = loaded2.classify_beat(seg).unwrap();
        assert_eq!(l1, l2);
        assert_eq!(p1, p2);
    }
}

#[test]
fn stream_and_offline_agree_on_synth_record() {
    let rec = hbe_core::synth::generate_record(209, 300.0).unwrap();
    let offline = segment_record(&rec).unwrap();

    let mut buf = StreamBuffer::new(rec.sampling_rate, 0.0).unwrap();
    let mut streamed = Vec::new();
    for (s1, s2) in rec.lead1.iter().zip(&rec.lead2) {
        streamed.extend(buf.push(*s1, *s2));
    }
    streamed.extend(buf.flush());

    // Same beats (by R index) except at the edges.
    let offline_set: std::collections::HashSet<usize> =
        offline.beats.iter().map(|b| b.r_index).collect();
    let stream_set: std::collections::HashSet<usize> =
        streamed.iter().map(|b| b.r_index).collect();
    let only_offline: Vec<_> = offline_set.difference(&stream_set).collect();
    let only_stream: Vec<_> = stream_set.difference(&offline_set).collect();
    assert!(
        only_offline.is_empty(),
        "beats missing from stream: {only_offline:?}"
    );
    assert!(only_stream.len() <= 1, "extra stream beats: {only_stream:?}");

    // Emission never lags more than five intervals behind real time.
    let max_rr = offline
        .peaks
        .indices
        .windows(2)
        .map(|w| w[1] - w[0])
        .max()
        .unwrap_or(0);
    let lookahead_bound = 5 * max_rr + hbe_core::qrs::post_samples(rec.sampling_rate) + 1;

    let mut buf2 = StreamBuffer::new(rec.sampling_rate, 0.0).unwrap();
    for (n, (s1, s2)) in rec.lead1.iter().zip(&rec.lead2).enumerate() {
        for beat in buf2.push(*s1, *s2) {
            assert!(
                n - beat.r_index <= lookahead_bound,
                "beat at {} emitted {} samples late",
                beat.r_index,
                n - beat.r_index
            );
        }
    }
}
