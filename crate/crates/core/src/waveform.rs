//! Analog model of a CAN transceiver's differential output.
//!
//! Each level change follows a first-order exponential toward the new level
//! with a damped sinusoid superimposed. A per-signal DC offset and per-sample
//! white Gaussian noise are added afterwards.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{BitString, FieldSpan};

pub const MIN_OVERSAMPLING: f64 = 20.0;
pub const DEFAULT_BIT_RATE: f64 = 500_000.0;
pub const DEFAULT_SAMPLE_RATE: f64 = 50_000_000.0;

/// Ringing contributions older than this many decay constants are dropped.
const RING_HORIZON: f64 = 40.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceProfile {
    pub device_id: String,
    pub v_rec_h: f64,
    pub v_rec_l: f64,
    pub v_dom_h: f64,
    pub v_dom_l: f64,
    pub rise_tau: f64,
    pub fall_tau: f64,
    pub ring_amp: f64,
    pub ring_freq: f64,
    pub ring_decay: f64,
    pub noise_sigma: f64,
    pub level_jitter_sigma: f64,
    /// Level offset drawn per recessive bit time. The undriven bus picks up
    /// low-frequency interference that a driven dominant state suppresses.
    pub bit_wander_sigma: f64,
}

impl DeviceProfile {
    pub fn nominal() -> Self {
        DeviceProfile {
            device_id: "nominal".into(),
            v_rec_h: 2.5,
            v_rec_l: 2.5,
            v_dom_h: 3.5,
            v_dom_l: 1.5,
            rise_tau: 40e-9,
            fall_tau: 80e-9,
            ring_amp: 0.15,
            ring_freq: 8e6,
            ring_decay: 1.5e7,
            noise_sigma: 0.02,
            level_jitter_sigma: 0.004,
            bit_wander_sigma: 0.03,
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.device_id = label.into();
        self
    }

    /// Same analog parameters with noise and DC jitter switched off.
    pub fn noiseless(mut self) -> Self {
        self.noise_sigma = 0.0;
        self.level_jitter_sigma = 0.0;
        self.bit_wander_sigma = 0.0;
        self
    }

    pub fn dominant_level(&self) -> f64 {
        self.v_dom_h - self.v_dom_l
    }

    pub fn recessive_level(&self) -> f64 {
        self.v_rec_h - self.v_rec_l
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.v_rec_h,
            self.v_rec_l,
            self.v_dom_h,
            self.v_dom_l,
            self.rise_tau,
            self.fall_tau,
            self.ring_amp,
            self.ring_freq,
            self.ring_decay,
            self.noise_sigma,
            self.level_jitter_sigma,
            self.bit_wander_sigma,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidConfig(format!(
                "profile {} has non-finite parameters",
                self.device_id
            )));
        }
        if self.v_dom_h <= self.v_rec_h || self.v_dom_l >= self.v_rec_l {
            return Err(Error::InvalidConfig(format!(
                "profile {}: dominant levels must straddle the recessive bias",
                self.device_id
            )));
        }
        if self.rise_tau <= 0.0 || self.fall_tau <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "profile {}: edge time constants must be positive",
                self.device_id
            )));
        }
        if self.noise_sigma < 0.0 || self.level_jitter_sigma < 0.0 || self.bit_wander_sigma < 0.0 || self.ring_decay < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "profile {}: noise, jitter and ring decay must be non-negative",
                self.device_id
            )));
        }
        Ok(())
    }
}

/// Per-parameter standard deviations around [`DeviceProfile::nominal`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProfileSpread {
    pub v_rec: f64,
    pub v_dom: f64,
    pub rise_tau: f64,
    pub fall_tau: f64,
    pub ring_amp: f64,
    pub ring_freq: f64,
    pub ring_decay: f64,
    pub noise_sigma: f64,
    pub level_jitter_sigma: f64,
}

impl Default for ProfileSpread {
    fn default() -> Self {
        ProfileSpread {
            v_rec: 0.002,
            v_dom: 0.03,
            rise_tau: 6e-9,
            fall_tau: 12e-9,
            ring_amp: 0.03,
            ring_freq: 0.8e6,
            ring_decay: 2.5e6,
            noise_sigma: 0.002,
            level_jitter_sigma: 0.0,
        }
    }
}

impl ProfileSpread {
    pub fn zero() -> Self {
        ProfileSpread {
            v_rec: 0.0,
            v_dom: 0.0,
            rise_tau: 0.0,
            fall_tau: 0.0,
            ring_amp: 0.0,
            ring_freq: 0.0,
            ring_decay: 0.0,
            noise_sigma: 0.0,
            level_jitter_sigma: 0.0,
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        ProfileSpread {
            v_rec: self.v_rec * factor,
            v_dom: self.v_dom * factor,
            rise_tau: self.rise_tau * factor,
            fall_tau: self.fall_tau * factor,
            ring_amp: self.ring_amp * factor,
            ring_freq: self.ring_freq * factor,
            ring_decay: self.ring_decay * factor,
            noise_sigma: self.noise_sigma * factor,
            level_jitter_sigma: self.level_jitter_sigma * factor,
        }
    }

    fn entries(&self) -> [(&'static str, f64); 9] {
        [
            ("v_rec", self.v_rec),
            ("v_dom", self.v_dom),
            ("rise_tau", self.rise_tau),
            ("fall_tau", self.fall_tau),
            ("ring_amp", self.ring_amp),
            ("ring_freq", self.ring_freq),
            ("ring_decay", self.ring_decay),
            ("noise_sigma", self.noise_sigma),
            ("level_jitter_sigma", self.level_jitter_sigma),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in self.entries() {
            if !value.is_finite() || value < 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "spread entry {name} = {value} must be finite and non-negative"
                )));
            }
        }
        Ok(())
    }
}

/// Draws a device profile from independent Gaussians around the nominal
/// transceiver. Deterministic in `seed`.
pub fn make_profile(seed: u64, spread: &ProfileSpread) -> Result<DeviceProfile> {
    make_profile_around(&DeviceProfile::nominal(), seed, spread, 0.0)
}

/// Like [`make_profile`] around `center`, with every parameter pushed at
/// least `min_offset` standard deviations away from it (random side).
pub fn make_profile_around(
    center: &DeviceProfile,
    seed: u64,
    spread: &ProfileSpread,
    min_offset: f64,
) -> Result<DeviceProfile> {
    spread.validate()?;
    if !(min_offset >= 0.0 && min_offset.is_finite()) {
        return Err(Error::InvalidConfig(format!("offset {min_offset} must be finite and non-negative")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |mean: f64, sd: f64| -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        mean + sd * (z + min_offset.copysign(z))
    };
    let profile = DeviceProfile {
        device_id: format!("seed-{seed:016x}"),
        v_rec_h: draw(center.v_rec_h, spread.v_rec),
        v_rec_l: draw(center.v_rec_l, spread.v_rec),
        v_dom_h: draw(center.v_dom_h, spread.v_dom),
        v_dom_l: draw(center.v_dom_l, spread.v_dom),
        rise_tau: draw(center.rise_tau, spread.rise_tau).max(center.rise_tau * 0.1),
        fall_tau: draw(center.fall_tau, spread.fall_tau).max(center.fall_tau * 0.1),
        ring_amp: draw(center.ring_amp, spread.ring_amp).max(0.0),
        ring_freq: draw(center.ring_freq, spread.ring_freq).max(0.0),
        ring_decay: draw(center.ring_decay, spread.ring_decay).max(center.ring_decay * 0.1),
        noise_sigma: draw(center.noise_sigma, spread.noise_sigma).max(0.0),
        level_jitter_sigma: draw(center.level_jitter_sigma, spread.level_jitter_sigma).max(0.0),
        bit_wander_sigma: center.bit_wander_sigma,
    };
    profile.validate()?;
    Ok(profile)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    /// Differential voltage CAN-H minus CAN-L.
    pub samples: Vec<f64>,
    pub sample_rate: f64,
    pub bit_rate: f64,
    pub source_label: Option<String>,
    /// Bits covered by `samples`, first sample aligned with the first bit.
    pub pattern: BitString,
}

impl Waveform {
    pub fn samples_per_bit(&self) -> f64 {
        self.sample_rate / self.bit_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Index of the first sample at or after the start of bit `bit`.
    pub fn bit_start(&self, bit: usize) -> usize {
        bit_boundary(bit, self.samples_per_bit())
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.source_label = Some(label.into());
        self
    }

    /// Rounds samples onto a uniform grid of `2^bits` codes spanning `[lo, hi]`.
    pub fn quantized(&self, bits: u32, lo: f64, hi: f64) -> Waveform {
        let levels = ((1u64 << bits) - 1) as f64;
        let step = (hi - lo) / levels;
        let samples = self
            .samples
            .iter()
            .map(|&v| {
                let code = ((v - lo) / step).round().clamp(0.0, levels);
                lo + code * step
            })
            .collect();
        Waveform {
            samples,
            ..self.clone()
        }
    }
}

fn bit_boundary(bit: usize, samples_per_bit: f64) -> usize {
    (bit as f64 * samples_per_bit - 1e-9).ceil().max(0.0) as usize
}

fn sample_count(bits: usize, samples_per_bit: f64) -> usize {
    (bits as f64 * samples_per_bit - 1e-9).ceil().max(0.0) as usize
}

struct Edge {
    time: f64,
    ring_amp: f64,
}

/// Renders `pattern` as the differential voltage `profile` would drive.
///
/// The line is assumed recessive before the first bit.
pub fn synthesize(
    profile: &DeviceProfile,
    pattern: &BitString,
    sample_rate: f64,
    bit_rate: f64,
    noise_seed: u64,
) -> Result<Waveform> {
    profile.validate()?;
    if !(sample_rate > 0.0 && bit_rate > 0.0) {
        return Err(Error::InvalidConfig("rates must be positive".into()));
    }
    let ratio = sample_rate / bit_rate;
    if ratio < MIN_OVERSAMPLING {
        return Err(Error::Undersampled {
            ratio,
            min: MIN_OVERSAMPLING,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    let offset = Normal::new(0.0, profile.level_jitter_sigma)
        .map_err(|e| Error::InvalidConfig(e.to_string()))?
        .sample(&mut rng);
    let wander_dist =
        Normal::new(0.0, profile.bit_wander_sigma).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let wander: Vec<f64> = (0..pattern.len()).map(|_| wander_dist.sample(&mut rng)).collect();
    let level = |recessive: bool| {
        if recessive {
            profile.recessive_level()
        } else {
            profile.dominant_level()
        }
    };
    let bit_time = 1.0 / bit_rate;
    let dt = 1.0 / sample_rate;
    let n = sample_count(pattern.len(), ratio);
    let mut samples = Vec::with_capacity(n);

    let mut edges: Vec<Edge> = Vec::new();
    let mut current = level(true);
    let mut seg_start = 0.0;
    let mut seg_from = current;
    let mut seg_tau = profile.fall_tau;
    let mut prev_bit = true;
    let mut next_bit = 0;
    let mut first_ringing = 0;

    for k in 0..n {
        let t = k as f64 * dt;
        while next_bit < pattern.len() && (next_bit as f64) * bit_time <= t + 1e-15 {
            let b = pattern.bits()[next_bit];
            let t0 = next_bit as f64 * bit_time;
            let target = level(b) + if b { wander[next_bit] } else { 0.0 };
            if b != prev_bit || target != current {
                let value_at_edge = current_value(seg_from, current, seg_start, seg_tau, t0);
                let tau = if b { profile.fall_tau } else { profile.rise_tau };
                if b != prev_bit {
                    let swing = (target - value_at_edge).signum();
                    edges.push(Edge {
                        time: t0,
                        ring_amp: profile.ring_amp * swing,
                    });
                }
                seg_start = t0;
                seg_from = value_at_edge;
                seg_tau = tau;
                current = target;
            }
            prev_bit = b;
            next_bit += 1;
        }

        let mut v = current_value(seg_from, current, seg_start, seg_tau, t);
        let horizon = if profile.ring_decay > 0.0 {
            RING_HORIZON / profile.ring_decay
        } else {
            f64::INFINITY
        };
        while first_ringing < edges.len() && t - edges[first_ringing].time > horizon {
            first_ringing += 1;
        }
        for edge in &edges[first_ringing..] {
            let age = t - edge.time;
            v += edge.ring_amp
                * (-profile.ring_decay * age).exp()
                * (2.0 * PI * profile.ring_freq * age).sin();
        }
        samples.push(v);
    }

    let noise = Normal::new(0.0, profile.noise_sigma).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    for s in &mut samples {
        *s += offset + noise.sample(&mut rng);
    }

    Ok(Waveform {
        samples,
        sample_rate,
        bit_rate,
        source_label: Some(profile.device_id.clone()),
        pattern: pattern.clone(),
    })
}

fn current_value(from: f64, target: f64, start: f64, tau: f64, t: f64) -> f64 {
    target + (from - target) * (-(t - start) / tau).exp()
}

/// Cuts the samples covering `span` (stuff bits included) out of a waveform
/// rendered from the whole frame.
pub fn exid_window(full: &Waveform, span: &FieldSpan) -> Result<Waveform> {
    let spb = full.samples_per_bit();
    let start = bit_boundary(span.start, spb);
    let end = start + sample_count(span.len, spb);
    if span.end() > full.pattern.len() || end > full.samples.len() {
        return Err(Error::OutOfRange {
            start,
            end,
            len: full.samples.len(),
        });
    }
    Ok(Waveform {
        samples: full.samples[start..end].to_vec(),
        sample_rate: full.sample_rate,
        bit_rate: full.bit_rate,
        source_label: full.source_label.clone(),
        pattern: full.pattern.slice(span.start, span.len),
    })
}

/// Per-bit majority vote against a fixed differential threshold.
pub fn decode_levels(w: &Waveform, threshold: f64) -> BitString {
    let bits = w.pattern.len();
    (0..bits)
        .map(|b| {
            let lo = w.bit_start(b);
            let hi = w.bit_start(b + 1).min(w.samples.len());
            let dominant = w.samples[lo..hi].iter().filter(|&&v| v > threshold).count();
            // recessive unless most samples sit above the threshold
            2 * dominant <= hi - lo
        })
        .collect::<Vec<_>>()
        .into()
}

/// Mean of the last half of every bit time at the given level.
pub fn plateau_mean(w: &Waveform, recessive: bool) -> Option<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (b, &bit) in w.pattern.bits().iter().enumerate() {
        if bit != recessive {
            continue;
        }
        let lo = w.bit_start(b);
        let hi = w.bit_start(b + 1).min(w.samples.len());
        let mid = lo + (hi - lo) / 2;
        for &v in &w.samples[mid..hi] {
            sum += v;
            count += 1;
        }
    }
    (count > 0).then(|| sum / count as f64)
}

/// Trace file: one `key=value` header line, then one sample per line.
pub fn write_trace(path: &Path, w: &Waveform) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    out.write_all(trace_header(w).as_bytes())?;
    for s in &w.samples {
        writeln!(out, "{s}")?;
    }
    out.flush()?;
    Ok(())
}

fn trace_header(w: &Waveform) -> String {
    let mut header = String::new();
    let _ = writeln!(
        header,
        "sample_rate={} bit_rate={} pattern={} source_label={}",
        w.sample_rate,
        w.bit_rate,
        w.pattern,
        w.source_label.as_deref().unwrap_or("-")
    );
    header
}

pub fn read_trace(path: &Path) -> Result<Waveform> {
    let ingest = |message: String| Error::Ingestion {
        path: path.to_path_buf(),
        message,
    };
    let file = fs::File::open(path).map_err(|e| ingest(e.to_string()))?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or_else(|| ingest("empty trace".into()))?
        .map_err(|e| ingest(e.to_string()))?;

    let mut sample_rate = None;
    let mut bit_rate = None;
    let mut pattern = None;
    let mut label = None;
    for token in header.split_whitespace() {
        let (key, value) = token
            .split_once('=')
            .ok_or_else(|| ingest(format!("bad header token {token:?}")))?;
        match key {
            "sample_rate" => sample_rate = value.parse::<f64>().ok(),
            "bit_rate" => bit_rate = value.parse::<f64>().ok(),
            "pattern" => pattern = Some(value.parse::<BitString>().map_err(|e| ingest(e.to_string()))?),
            "source_label" => label = (value != "-").then(|| value.to_string()),
            other => return Err(ingest(format!("unknown header key {other:?}"))),
        }
    }
    let mut samples = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| ingest(e.to_string()))?;
        let v: f64 = line
            .trim()
            .parse()
            .map_err(|_| ingest(format!("line {}: bad sample {line:?}", i + 2)))?;
        samples.push(v);
    }
    let w = Waveform {
        samples,
        sample_rate: sample_rate.ok_or_else(|| ingest("missing sample_rate".into()))?,
        bit_rate: bit_rate.ok_or_else(|| ingest("missing bit_rate".into()))?,
        source_label: label,
        pattern: pattern.ok_or_else(|| ingest("missing pattern".into()))?,
    };
    let expected = sample_count(w.pattern.len(), w.samples_per_bit());
    if w.samples.len() != expected {
        return Err(ingest(format!(
            "{} samples, header implies {expected}",
            w.samples.len()
        )));
    }
    Ok(w)
}
