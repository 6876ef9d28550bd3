//! Deterministic synthetic two-lead ECG records in the same on-disk
//! format as the real database (.dat format 212, .hea, .ann.txt).
//!
//! Each known record id gets a fixed beat-class profile loosely modeled
//! on the corresponding real record (dominant rhythm, ectopic classes,
//! noise level), so the training and evaluation pipeline can run
//! end-to-end when the real recordings are not present. Morphologies
//! are sums of Gaussian waves per class; ventricular beats are wide
//! with no P wave and premature timing, supraventricular beats keep a
//! narrow complex but arrive early.

use crate::record_io::{encode_signal_212, Annotation, BeatLabel, EcgRecord};
use crate::Result;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use std::path::Path;

pub const SAMPLING_RATE: f64 = 360.0;
pub const DEFAULT_DURATION_S: f64 = 1800.0;

/// Per-record generation profile: 7-class probabilities in the order
/// N, L, R, S, V, F, Q, plus heart rate and noise level.
#[derive(Debug, Clone, Copy)]
pub struct SynthProfile {
    pub id: u32,
    pub probs: [f64; 7],
    pub heart_rate_bpm: f64,
    pub noise_mv: f64,
}

#[rustfmt::skip]
const PROFILES: &[(u32, [f64; 7], f64, f64)] = &[
    // 100-series: routine rhythms feeding the global pool.
    (100, [0.985, 0.0, 0.0, 0.013, 0.002, 0.0,   0.0  ], 75.0, 0.020),
    (101, [0.990, 0.0, 0.0, 0.010, 0.0,   0.0,   0.0  ], 70.0, 0.025),
    (103, [0.997, 0.0, 0.0, 0.003, 0.0,   0.0,   0.0  ], 73.0, 0.020),
    (105, [0.965, 0.0, 0.0, 0.0,   0.025, 0.0,   0.010], 82.0, 0.045),
    (106, [0.790, 0.0, 0.0, 0.0,   0.210, 0.0,   0.0  ], 78.0, 0.030),
    (108, [0.960, 0.0, 0.0, 0.020, 0.010, 0.0,   0.010], 62.0, 0.045),
    (109, [0.0,   0.970, 0.0, 0.0, 0.018, 0.012, 0.0  ], 84.0, 0.025),
    (111, [0.0,   0.995, 0.0, 0.0, 0.005, 0.0,   0.0  ], 70.0, 0.030),
    (112, [0.998, 0.0, 0.0, 0.002, 0.0,   0.0,   0.0  ], 84.0, 0.020),
    (113, [0.995, 0.0, 0.0, 0.005, 0.0,   0.0,   0.0  ], 58.0, 0.020),
    (114, [0.970, 0.0, 0.0, 0.020, 0.005, 0.005, 0.0  ], 60.0, 0.030),
    (115, [1.0,   0.0, 0.0, 0.0,   0.0,   0.0,   0.0  ], 65.0, 0.020),
    (116, [0.950, 0.0, 0.0, 0.001, 0.049, 0.0,   0.0  ], 80.0, 0.030),
    (117, [0.999, 0.0, 0.0, 0.001, 0.0,   0.0,   0.0  ], 51.0, 0.020),
    (118, [0.0,   0.0, 0.965, 0.028, 0.007, 0.0, 0.0  ], 76.0, 0.022),
    (119, [0.690, 0.0, 0.0, 0.0,   0.310, 0.0,   0.0  ], 66.0, 0.025),
    (121, [0.998, 0.0, 0.0, 0.001, 0.001, 0.0,   0.0  ], 62.0, 0.022),
    (122, [1.0,   0.0, 0.0, 0.0,   0.0,   0.0,   0.0  ], 82.0, 0.020),
    (123, [0.998, 0.0, 0.0, 0.0,   0.002, 0.0,   0.0  ], 51.0, 0.020),
    (124, [0.020, 0.0, 0.920, 0.040, 0.010, 0.010, 0.0], 54.0, 0.022),
    // 200-series: the difficult arrhythmia half.
    (200, [0.650, 0.0, 0.0, 0.030, 0.305, 0.010, 0.005], 88.0, 0.035),
    (201, [0.800, 0.0, 0.0, 0.105, 0.090, 0.005, 0.0  ], 68.0, 0.030),
    (202, [0.965, 0.0, 0.0, 0.026, 0.009, 0.0,   0.0  ], 71.0, 0.025),
    (203, [0.845, 0.0, 0.0, 0.005, 0.140, 0.0,   0.010], 98.0, 0.055),
    (205, [0.965, 0.0, 0.0, 0.001, 0.027, 0.007, 0.0  ], 89.0, 0.020),
    (207, [0.0,   0.720, 0.045, 0.055, 0.105, 0.0, 0.075], 78.0, 0.040),
    (208, [0.590, 0.0, 0.0, 0.002, 0.280, 0.125, 0.003], 92.0, 0.035),
    (209, [0.870, 0.0, 0.0, 0.127, 0.003, 0.0,   0.0  ], 90.0, 0.022),
    (210, [0.905, 0.0, 0.0, 0.012, 0.073, 0.006, 0.004], 89.0, 0.030),
    (212, [0.335, 0.0, 0.663, 0.0, 0.002, 0.0,   0.0  ], 91.0, 0.022),
    (213, [0.805, 0.0, 0.0, 0.010, 0.070, 0.115, 0.0  ], 109.0, 0.025),
    (214, [0.0,   0.880, 0.0, 0.0, 0.113, 0.005, 0.002], 78.0, 0.030),
    (215, [0.948, 0.0, 0.0, 0.001, 0.050, 0.001, 0.0  ], 112.0, 0.030),
    (219, [0.960, 0.0, 0.0, 0.004, 0.035, 0.001, 0.0  ], 76.0, 0.025),
    (220, [0.953, 0.0, 0.0, 0.047, 0.0,   0.0,   0.0  ], 68.0, 0.020),
    (221, [0.835, 0.0, 0.0, 0.0,   0.165, 0.0,   0.0  ], 80.0, 0.030),
    (222, [0.905, 0.0, 0.0, 0.095, 0.0,   0.0,   0.0  ], 83.0, 0.035),
    (223, [0.785, 0.0, 0.0, 0.029, 0.180, 0.006, 0.0  ], 87.0, 0.025),
    (228, [0.820, 0.0, 0.0, 0.002, 0.178, 0.0,   0.0  ], 70.0, 0.040),
    (230, [0.999, 0.0, 0.0, 0.0,   0.001, 0.0,   0.0  ], 75.0, 0.022),
    (231, [0.205, 0.0, 0.790, 0.002, 0.003, 0.0, 0.0  ], 62.0, 0.022),
    (232, [0.0,   0.0, 0.223, 0.777, 0.0,  0.0,  0.0  ], 72.0, 0.025),
    (233, [0.720, 0.0, 0.0, 0.003, 0.270, 0.007, 0.0  ], 102.0, 0.028),
    (234, [0.980, 0.0, 0.0, 0.018, 0.001, 0.0,   0.001], 92.0, 0.020),
];

pub fn profile_for(id: u32) -> Option<SynthProfile> {
    PROFILES.iter().find(|(pid, ..)| *pid == id).map(|&(id, probs, hr, noise)| SynthProfile {
        id,
        probs,
        heart_rate_bpm: hr,
        noise_mv: noise,
    })
}

/// All record ids with a generation profile (the usable database).
pub fn profiled_records() -> Vec<u32> {
    PROFILES.iter().map(|(id, ..)| *id).collect()
}

// One wave component: amplitude (mV), center offset from the R peak
// (seconds), width (seconds).
type Wave = (f64, f64, f64);

fn morphology(label: BeatLabel) -> Vec<Wave> {
    match label {
        BeatLabel::N => vec![
            (0.10, -0.17, 0.022),  // P
            (-0.12, -0.028, 0.009),
            (1.10, 0.0, 0.012),    // R
            (-0.28, 0.030, 0.010),
            (0.32, 0.22, 0.050),   // T
        ],
        // Left bundle block: wide notched complex, discordant T.
        BeatLabel::L => vec![
            (0.08, -0.18, 0.022),
            (0.85, -0.010, 0.030),
            (0.55, 0.045, 0.025),
            (-0.35, 0.26, 0.055),
        ],
        // Right bundle block: rSR' with a deep S.
        BeatLabel::R => vec![
            (0.09, -0.17, 0.022),
            (0.55, -0.015, 0.012),
            (-0.45, 0.012, 0.012),
            (0.80, 0.050, 0.018),
            (0.22, 0.24, 0.050),
        ],
        // Atrial premature: narrow complex, P wave absent.
        BeatLabel::S => vec![
            (-0.10, -0.028, 0.009),
            (1.05, 0.0, 0.012),
            (-0.25, 0.030, 0.010),
            (0.26, 0.21, 0.048),
        ],
        // Ventricular: no P, wide bizarre complex, large opposite T.
        BeatLabel::V => vec![
            (1.45, -0.01, 0.042),
            (-0.55, 0.065, 0.035),
            (-0.45, 0.28, 0.060),
        ],
        // Fusion: halfway between normal and ventricular.
        BeatLabel::F => vec![
            (0.05, -0.17, 0.022),
            (1.25, -0.005, 0.028),
            (-0.40, 0.05, 0.022),
            (-0.10, 0.25, 0.055),
        ],
        // Unclassifiable: low-amplitude smeared complex.
        BeatLabel::Q => vec![
            (0.45, 0.0, 0.050),
            (-0.15, 0.09, 0.040),
            (0.10, 0.24, 0.060),
        ],
    }
}

fn draw_label(probs: &[f64; 7], rng: &mut ChaCha12Rng) -> BeatLabel {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return BeatLabel::ALL[i];
        }
    }
    BeatLabel::N
}

fn symbol_for(label: BeatLabel, rng: &mut ChaCha12Rng) -> char {
    let u: f64 = rng.gen();
    match label {
        BeatLabel::N => {
            if u < 0.03 {
                'j'
            } else if u < 0.05 {
                'e'
            } else {
                'N'
            }
        }
        BeatLabel::L => 'L',
        BeatLabel::R => 'R',
        BeatLabel::S => {
            if u < 0.10 {
                'J'
            } else if u < 0.20 {
                'a'
            } else {
                'A'
            }
        }
        BeatLabel::V => {
            if u < 0.05 {
                'E'
            } else {
                'V'
            }
        }
        BeatLabel::F => 'F',
        BeatLabel::Q => {
            if u < 0.30 {
                'f'
            } else {
                'Q'
            }
        }
    }
}

/// Generate one record in memory (millivolt samples plus annotations).
/// Deterministic in `(id, duration_s)`.
pub fn generate_record(id: u32, duration_s: f64) -> Result<EcgRecord> {
    let profile = profile_for(id).ok_or_else(|| {
        crate::Error::InvalidArgument(format!("no synthetic profile for record {id}"))
    })?;
    let rate = SAMPLING_RATE;
    let len = (duration_s * rate) as usize;
    let mut rng = ChaCha12Rng::seed_from_u64(0x4845_4152u64 ^ (u64::from(id) << 20));

    // Static per-record character: amplitude scale, lead-2 projection,
    // whether ventricular beats invert in lead 2.
    let amp_scale: f64 = rng.gen_range(0.85..1.15);
    let lead2_scale: f64 = rng.gen_range(0.45..0.85);
    let lead2_v_flip: f64 = if rng.gen_bool(0.5) { -1.0 } else { 1.0 };
    let wander_amp: f64 = rng.gen_range(0.03..0.09);
    let wander_freq: f64 = rng.gen_range(0.15..0.35);
    let wander_phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let noise_mv = profile.noise_mv * 3.0;

    let base_rr = 60.0 / profile.heart_rate_bpm;
    let mut lead1 = vec![0.0f64; len];
    let mut lead2 = vec![0.0f64; len];
    let mut annotations: Vec<Annotation> = Vec::new();

    let mut t = rng.gen_range(0.8..1.2);
    let mut pending_pause = 1.0f64;
    while t < duration_s - 1.0 {
        let label = draw_label(&profile.probs, &mut rng);
        // Premature classes pull the beat earlier and push the next one
        // later (compensatory pause). Supraventricular prematurity
        // overlaps ordinary sinus variation, which keeps that class
        // genuinely hard.
        let (early, pause) = match label {
            BeatLabel::V => (rng.gen_range(0.62..0.85), 1.30),
            BeatLabel::S => (rng.gen_range(0.72..0.92), rng.gen_range(1.02..1.15)),
            BeatLabel::Q => (rng.gen_range(0.85..1.1), 1.0),
            _ => (1.0, 1.0),
        };
        let modulation = 1.0 + 0.05 * (0.1 * std::f64::consts::TAU * t).sin();
        let jitter: f64 = rng.gen_range(0.96..1.04);
        let rr = (base_rr * modulation * jitter * early * pending_pause).max(0.35);
        pending_pause = pause;
        t += rr;
        if t >= duration_s - 1.0 {
            break;
        }
        let r_sample = (t * rate).round() as usize;
        if r_sample >= len {
            break;
        }

        let beat_amp: f64 = amp_scale * rng.gen_range(0.85..1.15);
        let width_jit: f64 = rng.gen_range(0.90..1.10);
        for &(amp, center, sigma) in &morphology(label) {
            let sigma = sigma * width_jit;
            let span = (4.0 * sigma * rate) as isize;
            // Each wave drifts a little around its nominal position.
            let center_sample = t + center + rng.gen_range(-0.008..0.008);
            for off in -span..=span {
                let idx = (center_sample * rate).round() as isize + off;
                if idx < 0 || idx as usize >= len {
                    continue;
                }
                let dt = idx as f64 / rate - center_sample;
                let v = amp * beat_amp * (-0.5 * (dt / sigma).powi(2)).exp();
                lead1[idx as usize] += v;
                let flip = if label == BeatLabel::V || label == BeatLabel::F {
                    lead2_v_flip
                } else {
                    1.0
                };
                lead2[idx as usize] += v * lead2_scale * flip;
            }
        }
        // Occasional motion artifact riding on top of a beat.
        if rng.gen_bool(0.02) {
            let a_amp: f64 = rng.gen_range(-0.8..0.8);
            let a_sigma: f64 = rng.gen_range(0.06..0.12);
            let a_center = t + rng.gen_range(-0.15..0.15);
            let span = (3.0 * a_sigma * rate) as isize;
            for off in -span..=span {
                let idx = (a_center * rate).round() as isize + off;
                if idx < 0 || idx as usize >= len {
                    continue;
                }
                let dt = idx as f64 / rate - a_center;
                let v = a_amp * (-0.5 * (dt / a_sigma).powi(2)).exp();
                lead1[idx as usize] += v;
                lead2[idx as usize] += v * 0.7;
            }
        }
        annotations.push(Annotation {
            sample: r_sample,
            symbol: symbol_for(label, &mut rng),
        });
    }

    // Baseline wander plus white noise, independent per lead.
    for i in 0..len {
        let ts = i as f64 / rate;
        let wander = wander_amp * (std::f64::consts::TAU * wander_freq * ts + wander_phase).sin();
        lead1[i] += wander + noise_mv * gauss(&mut rng);
        lead2[i] += 0.6 * wander + noise_mv * gauss(&mut rng);
    }

    // Annotation indices must be strictly increasing; premature beats
    // can collide at very short intervals.
    annotations.dedup_by_key(|a| a.sample);

    EcgRecord::new(id, rate, lead1, lead2, annotations)
}

fn gauss(rng: &mut ChaCha12Rng) -> f64 {
    // Box-Muller.
    let u1: f64 = rng.gen_range(1e-12..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Millivolts to 12-bit ADC units with the standard gain and baseline.
fn to_adc(signal: &[f64]) -> Vec<i32> {
    signal
        .iter()
        .map(|&mv| ((mv * 200.0 + 1024.0).round() as i32).clamp(-2048, 2047))
        .collect()
}

/// Write `<id>.dat`, `<id>.hea` and `<id>.ann.txt` for one record.
pub fn write_record_files(dir: &Path, id: u32, duration_s: f64) -> Result<()> {
    let record = generate_record(id, duration_s)?;
    let adc1 = to_adc(&record.lead1);
    let adc2 = to_adc(&record.lead2);
    let first1 = adc1.first().copied().unwrap_or(0);
    let first2 = adc2.first().copied().unwrap_or(0);
    let bytes = encode_signal_212(&[adc1, adc2])?;
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(format!("{id}.dat")), &bytes)?;
    let hea = format!(
        "{id} 2 360 {n}\n{id}.dat 212 200 11 1024 {first1} 0 0 MLII\n{id}.dat 212 200 11 1024 {first2} 0 0 V1\n",
        n = record.len(),
    );
    std::fs::write(dir.join(format!("{id}.hea")), hea)?;
    let mut ann = String::new();
    for a in &record.annotations {
        ann.push_str(&format!("{} {}\n", a.sample, a.symbol));
    }
    std::fs::write(dir.join(format!("{id}.ann.txt")), ann)?;
    Ok(())
}

/// Materialize a synthetic database for the given ids (all profiled
/// records when `ids` is empty).
pub fn write_database(dir: &Path, duration_s: f64, ids: &[u32]) -> Result<Vec<u32>> {
    let ids: Vec<u32> = if ids.is_empty() { profiled_records() } else { ids.to_vec() };
    for &id in &ids {
        write_record_files(dir, id, duration_s)?;
    }
    Ok(ids)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::record_io::map_symbol;

    #[test]
    fn generation_is_deterministic() {
        let a = generate_record(200, 60.0).unwrap();
        let b = generate_record(200, 60.0).unwrap();
        assert_eq!(a.lead1, b.lead1);
        assert_eq!(a.annotations, b.annotations);
    }

    #[test]
    fn profiles_cover_all_usable_records() {
        let split = crate::record_io::DatasetSplit::standard();
        for id in split.global_records.iter().chain(&split.patient_records) {
            assert!(profile_for(*id).is_some(), "missing profile for {id}");
        }
        for id in crate::record_io::EXCLUDED_RECORDS {
            assert!(profile_for(id).is_none(), "paced record {id} should have no profile");
        }
    }

    #[test]
    fn labels_follow_profile() {
        let rec = generate_record(232, 240.0).unwrap();
        let mut s_count = 0;
        let mut total = 0;
        for a in &rec.annotations {
            let lbl = map_symbol(a.symbol).unwrap();
            total += 1;
            if lbl == BeatLabel::S {
                s_count += 1;
            }
        }
        assert!(total > 150, "unexpected beat count {total}");
        let frac = f64::from(s_count) / f64::from(total);
        assert!(frac > 0.6, "record 232 should be S-heavy, got {frac}");
    }

    #[test]
    fn round_trip_through_files() {
        let dir = tempfile::tempdir().unwrap();
        write_record_files(dir.path(), 118, 30.0).unwrap();
        let loaded = crate::record_io::load_record(dir.path(), 118).unwrap();
        let direct = generate_record(118, 30.0).unwrap();
        assert_eq!(loaded.len(), direct.len());
        assert_eq!(loaded.annotations.len(), direct.annotations.len());
        // ADC quantization bounds the reload error by half a unit.
        for (a, b) in loaded.lead1.iter().zip(&direct.lead1) {
            assert!((a - b).abs() <= 0.5 / 200.0 + 1e-9);
        }
    }

    #[test]
    fn detector_finds_synthetic_beats() {
        let rec = generate_record(100, 120.0).unwrap();
        let peaks = crate::qrs::detect_r_peaks(&rec.lead1, rec.sampling_rate).unwrap();
        let ann = &rec.annotations;
        let window = (0.05 * rec.sampling_rate) as i64;
        let mut matched = 0;
        for a in ann {
            if peaks
                .indices
                .iter()
                .any(|&p| (p as i64 - a.sample as i64).abs() <= window)
            {
                matched += 1;
            }
        }
        let sens = f64::from(matched) / ann.len() as f64;
        assert!(sens > 0.98, "sensitivity {sens} on synthetic record");
    }
}
