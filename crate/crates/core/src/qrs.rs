//! R-peak detection, beat segmentation, RR features and the streaming
//! beat buffer.
//!
//! Detection is the classic five-stage pipeline: band-pass (5-15 Hz),
//! five-point derivative, squaring, a 150 ms moving-window integral,
//! and adaptive dual thresholds with search-back. Every stage is
//! center-aligned so detected indices land on the input timeline; the
//! detector consumes samples one at a time, and the offline entry point
//! simply streams a whole record through it.

use crate::record_io::EcgRecord;
use crate::{Error, Result};
use std::collections::VecDeque;

/// Strictly increasing R-peak sample positions.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RPeakList {
    pub indices: Vec<usize>,
}

impl RPeakList {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// RR interval ending at peak `k` (seconds), defined for k >= 1.
    pub fn interval(&self, k: usize, rate: f64) -> f64 {
        (self.indices[k] - self.indices[k - 1]) as f64 / rate
    }
}

/// Samples kept before the R peak (0.25 s worth).
pub fn pre_samples(rate: f64) -> usize {
    (0.25 * rate).round() as usize
}

/// Samples kept after the R peak (0.45 s worth).
pub fn post_samples(rate: f64) -> usize {
    (0.45 * rate).round() as usize
}

/// Fixed segment length: 0.7 s of signal around the peak.
pub fn segment_len(rate: f64) -> usize {
    pre_samples(rate) + post_samples(rate)
}

/// Cut the fixed window `[peak - 0.25 s, peak + 0.45 s)`.
pub fn segment(signal: &[f64], peak: usize, rate: f64) -> Result<Vec<f64>> {
    let pre = pre_samples(rate);
    let post = post_samples(rate);
    if peak < pre || peak + post > signal.len() {
        return Err(Error::InvalidArgument(format!(
            "segment window for peak {peak} out of bounds (len {})",
            signal.len()
        )));
    }
    Ok(signal[peak - pre..peak + post].to_vec())
}

/// RR features of beat `i`: `[RR_i, RR_{i+1}, local mean, train mean]`,
/// all in seconds.
///
/// The local mean covers the intervals `RR_{i-4} ..= RR_{i+5}`, clamped
/// to whatever exists near stream edges (at least one). At the end of a
/// stream, where `RR_{i+1}` does not exist yet, the past interval is
/// reused in its place; the offline path drops such beats instead.
pub fn rr_features(peaks: &[usize], i: usize, rate: f64, train_mean_rr: f64) -> Result<[f64; 4]> {
    if i == 0 {
        return Err(Error::InvalidArgument(
            "beat 0 has no previous interval".to_string(),
        ));
    }
    if i >= peaks.len() {
        return Err(Error::InvalidArgument(format!(
            "beat {i} out of range ({} peaks)",
            peaks.len()
        )));
    }
    let interval = |k: usize| (peaks[k] - peaks[k - 1]) as f64 / rate;
    let rr1 = interval(i);
    let rr2 = if i + 1 < peaks.len() { interval(i + 1) } else { rr1 };
    let lo = i.saturating_sub(4).max(1);
    let hi = (i + 5).min(peaks.len() - 1);
    let mut sum = 0.0;
    let mut count = 0;
    for k in lo..=hi {
        sum += interval(k);
        count += 1;
    }
    Ok([rr1, rr2, sum / count as f64, train_mean_rr])
}

/// One segmented heartbeat with both leads and its RR feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct BeatSegment {
    /// R-peak position in the source signal.
    pub r_index: usize,
    pub lead1: Vec<f64>,
    pub lead2: Vec<f64>,
    pub rr_features: [f64; 4],
}

/// Offline segmentation output with drop accounting.
#[derive(Debug, Clone)]
pub struct Segmentation {
    pub beats: Vec<BeatSegment>,
    pub peaks: RPeakList,
    /// First/last beats without full RR context.
    pub dropped_edge: usize,
    /// Beats whose window fell outside the record.
    pub dropped_window: usize,
}

/// Detect peaks on lead 1 and segment every beat with complete RR
/// context. The train-mean feature is left at zero; callers overwrite
/// it once the train set is known.
pub fn segment_record(record: &EcgRecord) -> Result<Segmentation> {
    let peaks = detect_r_peaks(&record.lead1, record.sampling_rate)?;
    let rate = record.sampling_rate;
    let n = peaks.indices.len();
    let mut beats = Vec::new();
    let mut dropped_edge = 0;
    let mut dropped_window = 0;
    for i in 0..n {
        // First beat lacks RR_i, last lacks RR_{i+1}.
        if i == 0 || i + 1 >= n {
            dropped_edge += 1;
            continue;
        }
        let peak = peaks.indices[i];
        let lead1 = match segment(&record.lead1, peak, rate) {
            Ok(s) => s,
            Err(_) => {
                dropped_window += 1;
                continue;
            }
        };
        let lead2 = segment(&record.lead2, peak, rate)?;
        let rr = rr_features(&peaks.indices, i, rate, 0.0)?;
        beats.push(BeatSegment {
            r_index: peak,
            lead1,
            lead2,
            rr_features: rr,
        });
    }
    Ok(Segmentation {
        beats,
        peaks,
        dropped_edge,
        dropped_window,
    })
}

/// Overwrite the fourth RR feature with the patient's train mean.
pub fn apply_train_mean(beats: &mut [BeatSegment], train_mean_rr: f64) {
    for b in beats {
        b.rr_features[3] = train_mean_rr;
    }
}

/// Detect R peaks in a full signal. Streaming and offline paths share
/// the same detector state machine.
pub fn detect_r_peaks(signal: &[f64], rate: f64) -> Result<RPeakList> {
    let mut detector = PanTompkins::new(rate)?;
    let mut indices = Vec::new();
    for &x in signal {
        indices.extend(detector.push(x));
    }
    indices.extend(detector.finish());
    Ok(RPeakList { indices })
}

// ---------------------------------------------------------------------
// Detector internals
// ---------------------------------------------------------------------

/// Physiological refractory period between accepted peaks.
const REFRACTORY_S: f64 = 0.2;
/// Window for the T-wave slope comparison.
const T_WAVE_S: f64 = 0.36;
/// Threshold update weights: accepted peak vs noise peak.
const SIGNAL_UPDATE: f64 = 0.125;
/// Slower update used for beats recovered by search-back.
const SEARCHBACK_UPDATE: f64 = 0.25;
/// Missed-beat limit as a multiple of the regular RR average.
const RR_MISS_FACTOR: f64 = 1.66;

struct FirFilter {
    taps: Vec<f64>,
    ring: VecDeque<f64>,
}

impl FirFilter {
    fn new(taps: Vec<f64>) -> FirFilter {
        let len = taps.len();
        FirFilter {
            taps,
            ring: VecDeque::from(vec![0.0; len]),
        }
    }

    fn push(&mut self, x: f64) -> f64 {
        self.ring.pop_front();
        self.ring.push_back(x);
        let mut acc = 0.0;
        // Newest sample pairs with the first tap.
        for (tap, v) in self.taps.iter().zip(self.ring.iter().rev()) {
            acc += tap * v;
        }
        acc
    }
}

// Windowed-sinc band-pass, odd length, Hamming window. Linear phase,
// so the group delay is exactly (len - 1) / 2 samples.
fn bandpass_taps(rate: f64, lo_hz: f64, hi_hz: f64) -> Vec<f64> {
    let half = (0.125 * rate).round().max(8.0) as usize;
    let len = 2 * half + 1;
    let sinc = |fc: f64, k: f64| {
        let x = 2.0 * std::f64::consts::PI * fc / rate;
        if k == 0.0 {
            2.0 * fc / rate
        } else {
            (x * k).sin() / (std::f64::consts::PI * k)
        }
    };
    (0..len)
        .map(|i| {
            let k = i as f64 - half as f64;
            let w = 0.54
                - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (len - 1) as f64).cos();
            (sinc(hi_hz, k) - sinc(lo_hz, k)) * w
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    /// Input-aligned position of the integrated-signal peak.
    at: usize,
    peak_i: f64,
}

/// Streaming Pan-Tompkins state.
pub struct PanTompkins {
    rate: f64,
    bp: FirFilter,
    bp_delay: usize,
    deriv_ring: VecDeque<f64>,
    mwi_window: usize,
    mwi_ring: VecDeque<f64>,
    mwi_sum: f64,
    /// Histories keyed by input-aligned absolute index.
    mwi_hist: VecDeque<f64>,
    mwi_base: usize,
    bp_hist: VecDeque<f64>,
    bp_base: usize,
    deriv_hist: VecDeque<f64>,
    deriv_base: usize,
    n_in: usize,
    n_mwi: usize,
    learn_until: usize,
    learned: bool,
    spki: f64,
    npki: f64,
    spkf: f64,
    npkf: f64,
    rr_recent: VecDeque<f64>,
    rr_regular: VecDeque<f64>,
    last_qrs: Option<usize>,
    last_qrs_slope: f64,
    candidates: VecDeque<Candidate>,
    detected: Vec<usize>,
}

impl PanTompkins {
    pub fn new(rate: f64) -> Result<PanTompkins> {
        if rate <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "sampling rate must be positive, got {rate}"
            )));
        }
        let taps = bandpass_taps(rate, 5.0, 15.0);
        let bp_delay = (taps.len() - 1) / 2;
        let mwi_window = (0.15 * rate).round().max(2.0) as usize;
        Ok(PanTompkins {
            rate,
            bp: FirFilter::new(taps),
            bp_delay,
            deriv_ring: VecDeque::from(vec![0.0; 5]),
            mwi_window,
            mwi_ring: VecDeque::new(),
            mwi_sum: 0.0,
            mwi_hist: VecDeque::new(),
            mwi_base: 0,
            bp_hist: VecDeque::new(),
            bp_base: 0,
            deriv_hist: VecDeque::new(),
            deriv_base: 0,
            n_in: 0,
            n_mwi: 0,
            learn_until: (2.0 * rate).round() as usize,
            learned: false,
            spki: 0.0,
            npki: 0.0,
            spkf: 0.0,
            npkf: 0.0,
            rr_recent: VecDeque::new(),
            rr_regular: VecDeque::new(),
            last_qrs: None,
            last_qrs_slope: 0.0,
            candidates: VecDeque::new(),
            detected: Vec::new(),
        })
    }

    /// Feed one sample; returns any peaks finalized by this sample, as
    /// input sample indices in increasing order.
    pub fn push(&mut self, x: f64) -> Vec<usize> {
        let out_start = self.detected.len();
        let bp_out = self.bp.push(x);
        self.n_in += 1;
        // The filter output for input index n is centered on n - delay.
        if self.n_in > self.bp_delay {
            let aligned = self.n_in - 1 - self.bp_delay;
            self.accept_bp(aligned, bp_out);
        }
        self.detected[out_start..].to_vec()
    }

    /// Signal end: flush nothing structural, but run one last
    /// search-back over the tail so trailing beats are not lost.
    pub fn finish(&mut self) -> Vec<usize> {
        let out_start = self.detected.len();
        if self.learned {
            self.search_back(self.n_in.saturating_sub(1));
        }
        self.detected[out_start..].to_vec()
    }

    fn accept_bp(&mut self, aligned: usize, bp: f64) {
        if self.bp_hist.is_empty() {
            self.bp_base = aligned;
        }
        self.bp_hist.push_back(bp);

        // Five-point derivative of the band-passed signal, delay 2.
        self.deriv_ring.pop_front();
        self.deriv_ring.push_back(bp);
        if aligned >= 2 {
            let r = &self.deriv_ring;
            let d = (2.0 * r[4] + r[3] - r[1] - 2.0 * r[0]) / 8.0;
            let d_aligned = aligned - 2;
            if self.deriv_hist.is_empty() {
                self.deriv_base = d_aligned;
            }
            self.deriv_hist.push_back(d);

            // 150 ms moving-window integral of the squared derivative.
            let sq = d * d;
            self.mwi_ring.push_back(sq);
            self.mwi_sum += sq;
            if self.mwi_ring.len() > self.mwi_window {
                self.mwi_sum -= self.mwi_ring.pop_front().unwrap();
            }
            if self.mwi_ring.len() == self.mwi_window {
                let center = d_aligned - (self.mwi_window - 1) / 2;
                let mwi = (self.mwi_sum / self.mwi_window as f64).max(0.0);
                if self.mwi_hist.is_empty() {
                    self.mwi_base = center;
                }
                self.mwi_hist.push_back(mwi);
                self.n_mwi += 1;
                self.scan_mwi_peak(center);
            }
        }

        if !self.learned && aligned + 1 >= self.learn_until {
            self.initialize_thresholds();
        }
        if self.learned {
            self.search_back(aligned);
        }
        self.trim_histories();
    }

    // A local maximum of the integrated signal becomes a candidate.
    fn scan_mwi_peak(&mut self, newest: usize) {
        if self.mwi_hist.len() < 3 {
            return;
        }
        let n = self.mwi_hist.len();
        let prev2 = self.mwi_hist[n - 3];
        let prev1 = self.mwi_hist[n - 2];
        let cur = self.mwi_hist[n - 1];
        if prev1 > prev2 && prev1 >= cur && prev1 > 0.0 {
            let cand = Candidate {
                at: newest - 1,
                peak_i: prev1,
            };
            if self.learned {
                self.process_candidate(cand, false);
            }
            self.candidates.push_back(cand);
        }
    }

    // Threshold seeding from the first two seconds, then a catch-up pass
    // over candidates buffered while learning.
    fn initialize_thresholds(&mut self) {
        let max_i = self.mwi_hist.iter().cloned().fold(0.0, f64::max);
        let mean_i = self.mwi_hist.iter().sum::<f64>() / self.mwi_hist.len().max(1) as f64;
        self.spki = 0.25 * max_i;
        self.npki = 0.5 * mean_i;
        let max_f = self.bp_hist.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let mean_f =
            self.bp_hist.iter().map(|v| v.abs()).sum::<f64>() / self.bp_hist.len().max(1) as f64;
        self.spkf = 0.25 * max_f;
        self.npkf = 0.5 * mean_f;
        self.learned = true;
        let pending: Vec<Candidate> = self.candidates.iter().cloned().collect();
        for cand in pending {
            self.process_candidate(cand, false);
        }
    }

    fn thr_i1(&self) -> f64 {
        self.npki + 0.25 * (self.spki - self.npki)
    }

    fn thr_f1(&self) -> f64 {
        self.npkf + 0.25 * (self.spkf - self.npkf)
    }

    fn refractory(&self) -> usize {
        (REFRACTORY_S * self.rate).round() as usize
    }

    fn process_candidate(&mut self, cand: Candidate, from_search_back: bool) {
        let (r_idx, peak_f, slope) = self.localize(cand.at);

        if let Some(last) = self.last_qrs {
            if r_idx <= last || r_idx - last < self.refractory() {
                self.note_noise(cand.peak_i, peak_f);
                return;
            }
            let t_window = (T_WAVE_S * self.rate).round() as usize;
            if r_idx - last < t_window && slope < 0.5 * self.last_qrs_slope {
                self.note_noise(cand.peak_i, peak_f);
                return;
            }
        }

        let (thr_i, thr_f) = if from_search_back {
            (0.5 * self.thr_i1(), 0.5 * self.thr_f1())
        } else {
            (self.thr_i1(), self.thr_f1())
        };
        if cand.peak_i > thr_i && peak_f > thr_f {
            let update = if from_search_back {
                SEARCHBACK_UPDATE
            } else {
                SIGNAL_UPDATE
            };
            self.spki = update * cand.peak_i + (1.0 - update) * self.spki;
            self.spkf = update * peak_f + (1.0 - update) * self.spkf;
            if let Some(last) = self.last_qrs {
                self.push_rr((r_idx - last) as f64 / self.rate);
            }
            self.last_qrs = Some(r_idx);
            self.last_qrs_slope = slope;
            self.detected.push(r_idx);
        } else {
            self.note_noise(cand.peak_i, peak_f);
        }
    }

    fn note_noise(&mut self, peak_i: f64, peak_f: f64) {
        self.npki = SIGNAL_UPDATE * peak_i + (1.0 - SIGNAL_UPDATE) * self.npki;
        self.npkf = SIGNAL_UPDATE * peak_f + (1.0 - SIGNAL_UPDATE) * self.npkf;
    }

    // R position: strongest band-passed excursion near the integrated
    // peak; also reports the max derivative magnitude for the T-wave
    // test.
    fn localize(&self, at: usize) -> (usize, f64, f64) {
        let srch = (0.05 * self.rate).round() as usize + self.mwi_window / 2;
        let lo = at.saturating_sub(srch).max(self.bp_base);
        let hi = (at + srch).min(self.bp_base + self.bp_hist.len().saturating_sub(1));
        let mut best = lo;
        let mut best_val = f64::NEG_INFINITY;
        for idx in lo..=hi {
            let v = self.bp_hist[idx - self.bp_base].abs();
            if v > best_val {
                best_val = v;
                best = idx;
            }
        }
        let mut slope = 0.0_f64;
        let dlo = lo.max(self.deriv_base);
        let dhi = hi.min(self.deriv_base + self.deriv_hist.len().saturating_sub(1));
        for idx in dlo..=dhi {
            slope = slope.max(self.deriv_hist[idx - self.deriv_base].abs());
        }
        (best, best_val, slope)
    }

    fn push_rr(&mut self, rr: f64) {
        self.rr_recent.push_back(rr);
        if self.rr_recent.len() > 8 {
            self.rr_recent.pop_front();
        }
        let avg2 = self.rr_avg2();
        if rr >= 0.92 * avg2 && rr <= 1.16 * avg2 {
            self.rr_regular.push_back(rr);
            if self.rr_regular.len() > 8 {
                self.rr_regular.pop_front();
            }
        }
    }

    fn rr_avg2(&self) -> f64 {
        if !self.rr_regular.is_empty() {
            self.rr_regular.iter().sum::<f64>() / self.rr_regular.len() as f64
        } else if !self.rr_recent.is_empty() {
            self.rr_recent.iter().sum::<f64>() / self.rr_recent.len() as f64
        } else {
            1.0
        }
    }

    // If no beat was accepted for 1.66 regular intervals, look back for
    // the strongest buffered candidate above the lowered threshold.
    fn search_back(&mut self, now: usize) {
        let Some(last) = self.last_qrs else { return };
        let limit = (RR_MISS_FACTOR * self.rr_avg2() * self.rate).round() as usize;
        if now <= last || now - last < limit {
            return;
        }
        let min_at = last + self.refractory();
        let mut best: Option<Candidate> = None;
        for cand in &self.candidates {
            if cand.at > min_at && cand.at < now && cand.peak_i > 0.5 * self.thr_i1() {
                match best {
                    Some(b) if cand.peak_i <= b.peak_i => {}
                    _ => best = Some(*cand),
                }
            }
        }
        if let Some(cand) = best {
            self.process_candidate(cand, true);
        }
    }

    fn trim_histories(&mut self) {
        // Keep generous context: search-back plus localization margins.
        let keep = (8.0 * self.rate) as usize;
        while self.bp_hist.len() > keep {
            self.bp_hist.pop_front();
            self.bp_base += 1;
        }
        while self.mwi_hist.len() > keep {
            self.mwi_hist.pop_front();
            self.mwi_base += 1;
        }
        while self.deriv_hist.len() > keep {
            self.deriv_hist.pop_front();
            self.deriv_base += 1;
        }
        while let Some(front) = self.candidates.front() {
            if front.at + keep < self.n_in {
                self.candidates.pop_front();
            } else {
                break;
            }
        }
    }
}

// ---------------------------------------------------------------------
// Streaming buffer
// ---------------------------------------------------------------------

/// FIFO stream buffer: classifies the beat in the middle once enough
/// newer peaks have arrived, so near-future RR features are available
/// in real time.
pub struct StreamBuffer {
    detector: PanTompkins,
    rate: f64,
    /// Beats held around the emitted one: lookback + current + lookahead.
    pub capacity: usize,
    train_mean_rr: f64,
    lead1: VecDeque<f64>,
    lead2: VecDeque<f64>,
    base: usize,
    n_pushed: usize,
    peaks: Vec<usize>,
    next_emit: usize,
    pub dropped_window: usize,
}

impl StreamBuffer {
    pub fn new(rate: f64, train_mean_rr: f64) -> Result<StreamBuffer> {
        StreamBuffer::with_capacity(rate, train_mean_rr, 11)
    }

    /// `capacity` must be odd: (capacity - 1) / 2 past and future beats
    /// around the one being classified.
    pub fn with_capacity(rate: f64, train_mean_rr: f64, capacity: usize) -> Result<StreamBuffer> {
        if capacity < 3 || capacity % 2 == 0 {
            return Err(Error::InvalidArgument(format!(
                "stream capacity must be odd and >= 3, got {capacity}"
            )));
        }
        Ok(StreamBuffer {
            detector: PanTompkins::new(rate)?,
            rate,
            capacity,
            train_mean_rr,
            lead1: VecDeque::new(),
            lead2: VecDeque::new(),
            base: 0,
            n_pushed: 0,
            peaks: Vec::new(),
            next_emit: 1,
            dropped_window: 0,
        })
    }

    fn lookahead(&self) -> usize {
        (self.capacity - 1) / 2
    }

    /// Feed one two-lead sample; returns beats that became ready.
    pub fn push(&mut self, s1: f64, s2: f64) -> Vec<BeatSegment> {
        self.lead1.push_back(s1);
        self.lead2.push_back(s2);
        self.n_pushed += 1;
        let new_peaks = self.detector.push(s1);
        self.peaks.extend(new_peaks);
        let mut out = Vec::new();
        while self.ready_to_emit() {
            if let Some(beat) = self.emit(self.next_emit) {
                out.push(beat);
            }
            self.next_emit += 1;
        }
        self.trim();
        out
    }

    fn ready_to_emit(&self) -> bool {
        let i = self.next_emit;
        i + self.lookahead() < self.peaks.len()
            && self.peaks[i] + post_samples(self.rate) <= self.n_pushed
    }

    /// End of stream: emit every remaining classifiable beat with the
    /// local average over whatever intervals exist.
    pub fn flush(&mut self) -> Vec<BeatSegment> {
        self.peaks.extend(self.detector.finish());
        let mut out = Vec::new();
        while self.next_emit < self.peaks.len() {
            if let Some(beat) = self.emit(self.next_emit) {
                out.push(beat);
            }
            self.next_emit += 1;
        }
        out
    }

    fn emit(&mut self, i: usize) -> Option<BeatSegment> {
        let peak = self.peaks[i];
        let pre = pre_samples(self.rate);
        let post = post_samples(self.rate);
        if peak < pre || peak + post > self.n_pushed || peak < self.base + pre {
            self.dropped_window += 1;
            return None;
        }
        let start = peak - pre - self.base;
        let end = peak + post - self.base;
        let lead1: Vec<f64> = self.lead1.range(start..end).copied().collect();
        let lead2: Vec<f64> = self.lead2.range(start..end).copied().collect();
        let rr = rr_features(&self.peaks, i, self.rate, self.train_mean_rr).ok()?;
        Some(BeatSegment {
            r_index: peak,
            lead1,
            lead2,
            rr_features: rr,
        })
    }

    fn trim(&mut self) {
        // Keep samples back to the oldest unemitted beat's window.
        if self.next_emit >= self.peaks.len() {
            return;
        }
        let pre = pre_samples(self.rate);
        let keep_from = self.peaks[self.next_emit].saturating_sub(pre + 1);
        while self.base < keep_from && !self.lead1.is_empty() {
            self.lead1.pop_front();
            self.lead2.pop_front();
            self.base += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian_pulse_train(rate: f64, period_s: f64, n_pulses: usize) -> (Vec<f64>, Vec<usize>) {
        let sigma = 0.02 * rate;
        let period = (period_s * rate) as usize;
        let len = period * (n_pulses + 1);
        let mut signal = vec![0.0; len];
        let mut centers = Vec::new();
        for p in 0..n_pulses {
            let center = period / 2 + p * period;
            centers.push(center);
            let span = (4.0 * sigma) as isize;
            for off in -span..=span {
                let idx = center as isize + off;
                if idx >= 0 && (idx as usize) < len {
                    signal[idx as usize] +=
                        (-0.5 * (off as f64 / sigma).powi(2)).exp();
                }
            }
        }
        (signal, centers)
    }

    #[test]
    fn zeros_give_no_peaks() {
        let peaks = detect_r_peaks(&vec![0.0; 3600], 360.0).unwrap();
        assert!(peaks.is_empty());
    }

    #[test]
    fn constant_signal_gives_no_peaks() {
        let peaks = detect_r_peaks(&vec![0.7; 3600], 360.0).unwrap();
        assert!(peaks.is_empty());
    }

    #[test]
    fn negative_rate_rejected() {
        assert!(detect_r_peaks(&[0.0; 10], -1.0).is_err());
        assert!(PanTompkins::new(0.0).is_err());
    }

    #[test]
    fn pulse_train_detected_at_centers() {
        let rate = 360.0;
        let (signal, centers) = gaussian_pulse_train(rate, 0.8, 12);
        let peaks = detect_r_peaks(&signal, rate).unwrap();
        assert_eq!(peaks.len(), centers.len(), "{:?}", peaks.indices);
        for (p, c) in peaks.indices.iter().zip(&centers) {
            let err = (*p as isize - *c as isize).abs();
            assert!(err <= 2, "peak {p} vs center {c}");
        }
    }

    #[test]
    fn peaks_respect_refractory_and_order() {
        let rate = 360.0;
        let (signal, _) = gaussian_pulse_train(rate, 0.5, 20);
        let peaks = detect_r_peaks(&signal, rate).unwrap();
        for w in peaks.indices.windows(2) {
            assert!(w[1] > w[0]);
            assert!((w[1] - w[0]) as f64 / rate >= REFRACTORY_S);
        }
    }

    #[test]
    fn segment_window_arithmetic() {
        let signal: Vec<f64> = (0..2000).map(|i| i as f64).collect();
        let seg = segment(&signal, 1000, 360.0).unwrap();
        assert_eq!(seg.len(), 252);
        assert_eq!(seg[0], 910.0);
        assert_eq!(*seg.last().unwrap(), 1161.0);
    }

    #[test]
    fn segment_out_of_bounds_rejected() {
        let signal = vec![0.0; 400];
        assert!(segment(&signal, 50, 360.0).is_err());
        assert!(segment(&signal, 350, 360.0).is_err());
    }

    #[test]
    fn segment_of_impulse() {
        let mut signal = vec![0.0; 2000];
        signal[1000] = 1.0;
        let seg = segment(&signal, 1000, 360.0).unwrap();
        for (i, v) in seg.iter().enumerate() {
            if i == 90 {
                assert_eq!(*v, 1.0);
            } else {
                assert_eq!(*v, 0.0);
            }
        }
    }

    #[test]
    fn rr_features_equal_spacing() {
        let rate = 360.0;
        let peaks: Vec<usize> = (0..12).map(|i| i * 288).collect(); // 0.8 s apart
        let rr = rr_features(&peaks, 6, rate, 0.9).unwrap();
        assert!((rr[0] - 0.8).abs() < 1e-12);
        assert!((rr[1] - 0.8).abs() < 1e-12);
        assert!((rr[2] - 0.8).abs() < 1e-12);
        assert_eq!(rr[3], 0.9);
    }

    #[test]
    fn rr_features_uneven() {
        let rate = 100.0;
        let peaks = vec![0usize, 50, 150];
        let rr = rr_features(&peaks, 1, rate, 0.0).unwrap();
        assert!((rr[0] - 0.5).abs() < 1e-12);
        assert!((rr[1] - 1.0).abs() < 1e-12);
        assert!((rr[2] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn rr_features_first_beat_rejected() {
        let peaks = vec![0usize, 100, 200];
        assert!(rr_features(&peaks, 0, 360.0, 0.0).is_err());
    }

    #[test]
    fn local_mean_covers_exactly_ten_interior_intervals() {
        let rate = 360.0;
        // Irregular spacing so the mean is distinctive.
        let mut peaks = vec![0usize];
        let mut pos = 0;
        for k in 0..20 {
            pos += 250 + (k % 5) * 30;
            peaks.push(pos);
        }
        let i = 10;
        let rr = rr_features(&peaks, i, rate, 0.0).unwrap();
        let manual: f64 = (i - 4..=i + 5)
            .map(|k| (peaks[k] - peaks[k - 1]) as f64 / rate)
            .sum::<f64>()
            / 10.0;
        assert!((rr[2] - manual).abs() < 1e-12);
    }

    #[test]
    fn stream_emission_schedule() {
        let rate = 360.0;
        let (signal, _) = gaussian_pulse_train(rate, 0.8, 12);
        let mut buf = StreamBuffer::new(rate, 0.8).unwrap();
        let mut peaks_at_first_emission = None;
        let mut emitted = Vec::new();
        for &s in &signal {
            let beats = buf.push(s, s);
            if !beats.is_empty() && peaks_at_first_emission.is_none() {
                peaks_at_first_emission = Some(buf.peaks.len());
            }
            emitted.extend(beats);
        }
        let tail = buf.flush();
        // First emission happens once the 7th peak exists: beat 2 (the
        // second peak) then has five future peaks.
        assert_eq!(peaks_at_first_emission, Some(7));
        assert_eq!(emitted.first().map(|b| b.r_index), Some(buf.peaks[1]));
        // All classifiable beats come out by flush time: every peak but
        // the first (which has no previous interval).
        assert_eq!(emitted.len() + tail.len(), buf.peaks.len() - 1);
    }

    #[test]
    fn stream_flush_small_input() {
        let rate = 360.0;
        let (signal, _) = gaussian_pulse_train(rate, 0.8, 3);
        let mut buf = StreamBuffer::new(rate, 0.8).unwrap();
        let mut emitted = Vec::new();
        for &s in &signal {
            emitted.extend(buf.push(s, s));
        }
        assert!(emitted.is_empty());
        let tail = buf.flush();
        assert_eq!(tail.len(), buf.peaks.len().saturating_sub(1));
        for beat in &tail {
            assert!(beat.rr_features[0] > 0.0);
            assert!(beat.rr_features[2] > 0.0);
        }
    }

    #[test]
    fn stream_matches_offline_for_interior_beats() {
        let rate = 360.0;
        // Irregular-ish rhythm with amplitude variation.
        let mut signal = Vec::new();
        let mut centers = Vec::new();
        let mut pos = 200usize;
        for k in 0..25 {
            let gap = 260 + ((k * 37) % 80);
            pos += gap;
            centers.push(pos);
        }
        let len = pos + 400;
        signal.resize(len, 0.0);
        let sigma = 7.0;
        for (k, &c) in centers.iter().enumerate() {
            let amp = 0.8 + 0.3 * ((k % 3) as f64) / 3.0;
            for off in -30i64..=30 {
                let idx = (c as i64 + off) as usize;
                signal[idx] += amp * (-0.5 * (off as f64 / sigma).powi(2)).exp();
            }
        }
        let lead2: Vec<f64> = signal.iter().map(|v| v * 0.5).collect();

        let record = crate::record_io::EcgRecord::new(
            999,
            rate,
            signal.clone(),
            lead2.clone(),
            vec![],
        )
        .unwrap();
        let offline = segment_record(&record).unwrap();

        let mut buf = StreamBuffer::new(rate, 0.0).unwrap();
        let mut streamed = Vec::new();
        for (s1, s2) in signal.iter().zip(&lead2) {
            streamed.extend(buf.push(*s1, *s2));
        }
        streamed.extend(buf.flush());

        // Interior beats (full 10-interval context, not flush-emitted)
        // must match exactly.
        let offline_by_index: std::collections::HashMap<usize, &BeatSegment> =
            offline.beats.iter().map(|b| (b.r_index, b)).collect();
        let n_peaks = offline.peaks.len();
        let mut compared = 0;
        for beat in &streamed {
            let Some(off_beat) = offline_by_index.get(&beat.r_index) else { continue };
            let i = offline
                .peaks
                .indices
                .iter()
                .position(|&p| p == beat.r_index)
                .unwrap();
            if i < 5 || i + 5 >= n_peaks {
                continue;
            }
            assert_eq!(beat.lead1, off_beat.lead1);
            assert_eq!(beat.lead2, off_beat.lead2);
            for (a, b) in beat.rr_features.iter().zip(&off_beat.rr_features).take(3) {
                assert!((a - b).abs() < 1e-12);
            }
            compared += 1;
        }
        assert!(compared >= 10, "only {compared} interior beats compared");
    }
}
