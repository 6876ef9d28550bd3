//! Reading two-lead arrhythmia recordings: format-212 signal files, text
//! headers, and beat annotation tables, plus the symbol-to-class mapping
//! and the global/patient dataset split.

use crate::{Error, Result};

/// Records excluded from train and test because they contain paced beats.
pub const EXCLUDED_RECORDS: [u32; 4] = [102, 104, 107, 217];

/// The seven heartbeat classes. A five-class view merges `L` and `R`
/// back into `N` for comparison with other published results.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum BeatLabel {
    N,
    L,
    R,
    S,
    V,
    F,
    Q,
}

impl BeatLabel {
    pub const ALL: [BeatLabel; 7] = [
        BeatLabel::N,
        BeatLabel::L,
        BeatLabel::R,
        BeatLabel::S,
        BeatLabel::V,
        BeatLabel::F,
        BeatLabel::Q,
    ];

    /// Class index in the fixed 7-class order N, L, R, S, V, F, Q.
    pub fn index(self) -> usize {
        match self {
            BeatLabel::N => 0,
            BeatLabel::L => 1,
            BeatLabel::R => 2,
            BeatLabel::S => 3,
            BeatLabel::V => 4,
            BeatLabel::F => 5,
            BeatLabel::Q => 6,
        }
    }

    pub fn from_index(i: usize) -> Option<BeatLabel> {
        BeatLabel::ALL.get(i).copied()
    }

    /// Merge the conduction-abnormality split-outs back into `N`.
    pub fn merge_to_5(self) -> BeatLabel {
        match self {
            BeatLabel::L | BeatLabel::R => BeatLabel::N,
            other => other,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            BeatLabel::N => 'N',
            BeatLabel::L => 'L',
            BeatLabel::R => 'R',
            BeatLabel::S => 'S',
            BeatLabel::V => 'V',
            BeatLabel::F => 'F',
            BeatLabel::Q => 'Q',
        }
    }
}

impl std::fmt::Display for BeatLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

/// One beat annotation: sample position and the original symbol.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Annotation {
    pub sample: usize,
    pub symbol: char,
}

/// A loaded two-lead record with its beat annotations.
///
/// Samples are in millivolts, converted from ADC units with the
/// per-channel gain and baseline from the header.
#[derive(Debug, Clone)]
pub struct EcgRecord {
    pub record_id: u32,
    pub sampling_rate: f64,
    pub lead1: Vec<f64>,
    pub lead2: Vec<f64>,
    pub annotations: Vec<Annotation>,
}

impl EcgRecord {
    pub fn new(
        record_id: u32,
        sampling_rate: f64,
        lead1: Vec<f64>,
        lead2: Vec<f64>,
        annotations: Vec<Annotation>,
    ) -> Result<Self> {
        if sampling_rate <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "sampling rate must be positive, got {sampling_rate}"
            )));
        }
        if lead1.len() != lead2.len() {
            return Err(Error::InvalidArgument(format!(
                "lead lengths differ: {} vs {}",
                lead1.len(),
                lead2.len()
            )));
        }
        let mut prev: Option<usize> = None;
        for ann in &annotations {
            if ann.sample >= lead1.len() {
                return Err(Error::Annotation(format!(
                    "annotation at sample {} beyond signal length {}",
                    ann.sample,
                    lead1.len()
                )));
            }
            if let Some(p) = prev {
                if ann.sample <= p {
                    return Err(Error::Annotation(format!(
                        "annotation indices not strictly increasing at sample {}",
                        ann.sample
                    )));
                }
            }
            prev = Some(ann.sample);
        }
        Ok(EcgRecord {
            record_id,
            sampling_rate,
            lead1,
            lead2,
            annotations,
        })
    }

    pub fn len(&self) -> usize {
        self.lead1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lead1.is_empty()
    }

    /// Beat annotations mapped to their 7-class labels.
    pub fn labeled_annotations(&self) -> Result<Vec<(usize, BeatLabel)>> {
        self.annotations
            .iter()
            .map(|a| Ok((a.sample, map_symbol(a.symbol)?)))
            .collect()
    }
}

/// Record partition into the routine (global) half and the difficult
/// arrhythmia (patient) half, with paced records removed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub global_records: Vec<u32>,
    pub patient_records: Vec<u32>,
    pub excluded: Vec<u32>,
}

impl DatasetSplit {
    /// The canonical split over the full 48-record database.
    pub fn standard() -> DatasetSplit {
        let all: Vec<u32> = (100..=124).chain(200..=234).collect();
        partition_dataset(&all)
    }

    pub fn is_excluded(id: u32) -> bool {
        EXCLUDED_RECORDS.contains(&id)
    }

    /// Errors when a paced record is requested for train or test.
    pub fn require_usable(id: u32) -> Result<()> {
        if Self::is_excluded(id) {
            Err(Error::ExcludedRecord(id))
        } else {
            Ok(())
        }
    }
}

/// All record ids that exist in the database, including paced ones.
pub const KNOWN_RECORDS: [u32; 48] = [
    100, 101, 102, 103, 104, 105, 106, 107, 108, 109, 111, 112, 113, 114, 115, 116, 117, 118,
    119, 121, 122, 123, 124, 200, 201, 202, 203, 205, 207, 208, 209, 210, 212, 213, 214, 215,
    217, 219, 220, 221, 222, 223, 228, 230, 231, 232, 233, 234,
];

/// Split record ids into global (100-series) and patient (200-series)
/// sets, removing the paced records.
pub fn partition_dataset(all_records: &[u32]) -> DatasetSplit {
    let mut global = Vec::new();
    let mut patient = Vec::new();
    let mut excluded = Vec::new();
    for &id in all_records {
        if EXCLUDED_RECORDS.contains(&id) {
            excluded.push(id);
        } else if (100..=124).contains(&id) && KNOWN_RECORDS.contains(&id) {
            global.push(id);
        } else if (200..=234).contains(&id) && KNOWN_RECORDS.contains(&id) {
            patient.push(id);
        }
    }
    global.sort_unstable();
    patient.sort_unstable();
    excluded.sort_unstable();
    DatasetSplit {
        global_records: global,
        patient_records: patient,
        excluded,
    }
}

/// Map a beat annotation symbol to its 7-class label.
///
/// Non-beat symbols (rhythm and signal-quality marks) are rejected;
/// callers drop them before mapping.
pub fn map_symbol(symbol: char) -> Result<BeatLabel> {
    match symbol {
        'N' | 'e' | 'j' => Ok(BeatLabel::N),
        'L' => Ok(BeatLabel::L),
        'R' => Ok(BeatLabel::R),
        'A' | 'a' | 'J' | 'S' => Ok(BeatLabel::S),
        'V' | 'E' => Ok(BeatLabel::V),
        'F' => Ok(BeatLabel::F),
        'f' | 'Q' | '/' => Ok(BeatLabel::Q),
        other => Err(Error::UnknownSymbol(other)),
    }
}

// Rhythm changes, quality marks, waveform fiducials, flutter waves and
// non-conducted P waves: present in annotation exports but not beats.
const NON_BEAT_SYMBOLS: &[char] = &[
    '+', '~', '|', 's', 'T', '*', 'D', '"', '=', 'p', 'B', '^', 't', 'u', '?', '(', ')', 'r',
    '@', 'x', '[', ']', '!',
];

pub fn is_beat_symbol(symbol: char) -> bool {
    map_symbol(symbol).is_ok()
}

/// Parse an annotation table: one `<sample_index> <symbol>` pair per
/// line. Non-beat symbols are dropped; beat symbols outside the known
/// set are an error.
pub fn load_annotations(text: &str) -> Result<Vec<Annotation>> {
    let mut out = Vec::new();
    let mut prev_raw: Option<usize> = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let idx_str = parts
            .next()
            .ok_or_else(|| Error::Annotation(format!("line {}: empty", lineno + 1)))?;
        let sym_str = parts.next().ok_or_else(|| {
            Error::Annotation(format!("line {}: missing symbol", lineno + 1))
        })?;
        if parts.next().is_some() {
            return Err(Error::Annotation(format!(
                "line {}: expected `<sample_index> <symbol>`",
                lineno + 1
            )));
        }
        let sample: usize = idx_str.parse().map_err(|_| {
            Error::Annotation(format!("line {}: bad sample index '{idx_str}'", lineno + 1))
        })?;
        if let Some(p) = prev_raw {
            if sample < p {
                return Err(Error::Annotation(format!(
                    "line {}: indices not sorted ({} after {})",
                    lineno + 1,
                    sample,
                    p
                )));
            }
        }
        prev_raw = Some(sample);
        let symbol = {
            let mut chars = sym_str.chars();
            let c = chars.next().unwrap();
            if chars.next().is_some() {
                return Err(Error::Annotation(format!(
                    "line {}: symbol '{sym_str}' is not a single character",
                    lineno + 1
                )));
            }
            c
        };
        if NON_BEAT_SYMBOLS.contains(&symbol) {
            continue;
        }
        // Rejects anything that is neither a known beat nor a known mark.
        map_symbol(symbol)?;
        if let Some(last) = out.last() {
            let last: &Annotation = last;
            if sample <= last.sample {
                return Err(Error::Annotation(format!(
                    "line {}: duplicate beat index {}",
                    lineno + 1,
                    sample
                )));
            }
        }
        out.push(Annotation { sample, symbol });
    }
    Ok(out)
}

/// Decode packed 12-bit two's complement sample pairs.
///
/// Every 3 bytes hold two samples: `s1 = b0 | ((b1 & 0x0F) << 8)` and
/// `s2 = b2 | ((b1 & 0xF0) << 4)`, sign-extended from 12 bits. With two
/// channels the pairs alternate channel 0, channel 1.
pub fn parse_signal_212(bytes: &[u8], n_channels: usize) -> Result<Vec<Vec<i32>>> {
    if n_channels != 2 {
        return Err(Error::InvalidArgument(format!(
            "format 212 reader supports 2 channels, got {n_channels}"
        )));
    }
    if bytes.len() % 3 != 0 {
        return Err(Error::SignalParse {
            offset: bytes.len() - bytes.len() % 3,
            msg: format!("truncated buffer: {} bytes is not a multiple of 3", bytes.len()),
        });
    }
    let n_pairs = bytes.len() / 3;
    let mut ch0 = Vec::with_capacity(n_pairs);
    let mut ch1 = Vec::with_capacity(n_pairs);
    for (i, chunk) in bytes.chunks_exact(3).enumerate() {
        let s1 = sign_extend_12(u16::from(chunk[0]) | ((u16::from(chunk[1]) & 0x0F) << 8));
        let s2 = sign_extend_12(u16::from(chunk[2]) | ((u16::from(chunk[1]) & 0xF0) << 4));
        let _ = i;
        ch0.push(s1);
        ch1.push(s2);
    }
    Ok(vec![ch0, ch1])
}

/// Pack two channels of 12-bit samples into format-212 bytes. Inverse of
/// [`parse_signal_212`]; also used when writing synthetic records.
pub fn encode_signal_212(channels: &[Vec<i32>]) -> Result<Vec<u8>> {
    if channels.len() != 2 {
        return Err(Error::InvalidArgument(format!(
            "format 212 writer supports 2 channels, got {}",
            channels.len()
        )));
    }
    if channels[0].len() != channels[1].len() {
        return Err(Error::InvalidArgument(
            "channel lengths differ".to_string(),
        ));
    }
    let mut out = Vec::with_capacity(channels[0].len() * 3);
    for (&a, &b) in channels[0].iter().zip(&channels[1]) {
        for v in [a, b] {
            if !(-2048..=2047).contains(&v) {
                return Err(Error::InvalidArgument(format!(
                    "sample {v} outside 12-bit range"
                )));
            }
        }
        let ua = (a & 0xFFF) as u16;
        let ub = (b & 0xFFF) as u16;
        out.push((ua & 0xFF) as u8);
        out.push((((ua >> 8) & 0x0F) | (((ub >> 8) & 0x0F) << 4)) as u8);
        out.push((ub & 0xFF) as u8);
    }
    Ok(out)
}

fn sign_extend_12(v: u16) -> i32 {
    if v & 0x800 != 0 {
        i32::from(v) - 4096
    } else {
        i32::from(v)
    }
}

/// Per-channel conversion constants from the header.
#[derive(Debug, Clone, Copy)]
pub struct ChannelSpec {
    /// ADC units per millivolt. Zero in the header means the default 200.
    pub gain: f64,
    /// ADC value corresponding to 0 mV.
    pub baseline: f64,
}

impl Default for ChannelSpec {
    fn default() -> Self {
        ChannelSpec {
            gain: 200.0,
            baseline: 1024.0,
        }
    }
}

/// Parsed record header.
#[derive(Debug, Clone)]
pub struct RecordHeader {
    pub record_name: String,
    pub n_signals: usize,
    pub sampling_rate: f64,
    pub n_samples: usize,
    pub channels: Vec<ChannelSpec>,
}

/// Parse the text header: a record line followed by one line per signal.
/// Comment lines start with `#`.
pub fn parse_header(text: &str) -> Result<RecordHeader> {
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'));
    let record_line = lines
        .next()
        .ok_or_else(|| Error::Header("empty header".to_string()))?;
    let fields: Vec<&str> = record_line.split_whitespace().collect();
    if fields.len() < 2 {
        return Err(Error::Header(format!("bad record line '{record_line}'")));
    }
    let record_name = fields[0].split('/').next().unwrap_or(fields[0]).to_string();
    let n_signals: usize = fields[1]
        .parse()
        .map_err(|_| Error::Header(format!("bad signal count '{}'", fields[1])))?;
    let sampling_rate: f64 = if fields.len() > 2 {
        // The rate field may carry a counter rate after '/'.
        let lead = fields[2].split('/').next().unwrap_or(fields[2]);
        lead.parse()
            .map_err(|_| Error::Header(format!("bad sampling rate '{}'", fields[2])))?
    } else {
        250.0
    };
    if sampling_rate <= 0.0 {
        return Err(Error::Header(format!(
            "sampling rate must be positive, got {sampling_rate}"
        )));
    }
    let n_samples: usize = if fields.len() > 3 {
        fields[3].parse().unwrap_or(0)
    } else {
        0
    };

    let mut channels = Vec::with_capacity(n_signals);
    for line in lines.take(n_signals) {
        channels.push(parse_signal_line(line)?);
    }
    if channels.len() != n_signals {
        return Err(Error::Header(format!(
            "header declares {n_signals} signals but has {} signal lines",
            channels.len()
        )));
    }
    Ok(RecordHeader {
        record_name,
        n_signals,
        sampling_rate,
        n_samples,
        channels,
    })
}

// Signal line: `<file> <format> <gain>(<baseline>)/<units> <adc_res> <adc_zero> ...`
// Gain 0 means the default; baseline falls back to ADC zero when absent.
fn parse_signal_line(line: &str) -> Result<ChannelSpec> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() < 2 {
        return Err(Error::Header(format!("bad signal line '{line}'")));
    }
    let mut spec = ChannelSpec::default();
    let mut paren_baseline = None;
    if fields.len() > 2 {
        let gain_field = fields[2];
        let num_part = gain_field.split('/').next().unwrap_or(gain_field);
        let (gain_str, base_str) = match num_part.find('(') {
            Some(open) => {
                let close = num_part.find(')').ok_or_else(|| {
                    Error::Header(format!("unclosed baseline in '{gain_field}'"))
                })?;
                (&num_part[..open], Some(&num_part[open + 1..close]))
            }
            None => (num_part, None),
        };
        let gain: f64 = gain_str
            .parse()
            .map_err(|_| Error::Header(format!("bad gain '{gain_field}'")))?;
        if gain > 0.0 {
            spec.gain = gain;
        }
        if let Some(b) = base_str {
            let baseline: f64 = b
                .parse()
                .map_err(|_| Error::Header(format!("bad baseline '{gain_field}'")))?;
            paren_baseline = Some(baseline);
        }
    }
    if let Some(b) = paren_baseline {
        spec.baseline = b;
    } else if fields.len() > 4 {
        if let Ok(adc_zero) = fields[4].parse::<f64>() {
            spec.baseline = adc_zero;
        }
    }
    Ok(spec)
}

/// Load a record from `<dir>/<id>.hea`, `<id>.dat` and `<id>.ann.txt`,
/// converting samples to millivolts.
pub fn load_record(dir: &std::path::Path, id: u32) -> Result<EcgRecord> {
    let hea = std::fs::read_to_string(dir.join(format!("{id}.hea")))?;
    let header = parse_header(&hea)?;
    if header.n_signals != 2 {
        return Err(Error::Header(format!(
            "record {id}: expected 2 signals, header has {}",
            header.n_signals
        )));
    }
    let dat = std::fs::read(dir.join(format!("{id}.dat")))?;
    let channels = parse_signal_212(&dat, 2)?;
    let ann_text = std::fs::read_to_string(dir.join(format!("{id}.ann.txt")))?;
    let annotations = load_annotations(&ann_text)?;

    let to_mv = |adc: &[i32], spec: &ChannelSpec| -> Vec<f64> {
        adc.iter()
            .map(|&v| (f64::from(v) - spec.baseline) / spec.gain)
            .collect()
    };
    let lead1 = to_mv(&channels[0], &header.channels[0]);
    let lead2 = to_mv(&channels[1], &header.channels[1]);
    EcgRecord::new(id, header.sampling_rate, lead1, lead2, annotations)
}
