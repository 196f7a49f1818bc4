//! The 17-element signal fingerprint: 8 time-domain statistics of the sampled
//! window and 9 shape descriptors of its magnitude spectrum.

use std::cell::RefCell;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::waveform::Waveform;

pub const FEATURE_COUNT: usize = 17;
pub const MIN_SPECTRUM_SAMPLES: usize = 16;
pub const DEFAULT_ROLLOFF: f64 = 0.95;
/// Floor applied to magnitudes before taking logarithms.
pub const LOG_FLOOR: f64 = 1e-12;

pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "mean",
    "std_dev",
    "avg_deviation",
    "skewness",
    "kurtosis",
    "rms_amplitude",
    "lowest",
    "highest",
    "spec_std_dev",
    "spec_skewness",
    "spec_kurtosis",
    "spec_centroid",
    "irregularity_k",
    "irregularity_j",
    "rolloff",
    "flatness",
    "smoothness",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeFeatures {
    pub mean: f64,
    pub std_dev: f64,
    pub avg_deviation: f64,
    pub skewness: f64,
    pub kurtosis: f64,
    pub rms_amplitude: f64,
    pub lowest: f64,
    pub highest: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreqFeatures {
    pub spec_std_dev: f64,
    pub spec_skewness: f64,
    pub spec_kurtosis: f64,
    pub spec_centroid: f64,
    pub irregularity_k: f64,
    pub irregularity_j: f64,
    pub rolloff: f64,
    pub flatness: f64,
    pub smoothness: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector {
    pub time: TimeFeatures,
    pub freq: FreqFeatures,
}

impl FeatureVector {
    pub fn to_array(&self) -> [f64; FEATURE_COUNT] {
        let t = &self.time;
        let f = &self.freq;
        [
            t.mean,
            t.std_dev,
            t.avg_deviation,
            t.skewness,
            t.kurtosis,
            t.rms_amplitude,
            t.lowest,
            t.highest,
            f.spec_std_dev,
            f.spec_skewness,
            f.spec_kurtosis,
            f.spec_centroid,
            f.irregularity_k,
            f.irregularity_j,
            f.rolloff,
            f.flatness,
            f.smoothness,
        ]
    }

    pub fn from_array(v: [f64; FEATURE_COUNT]) -> Self {
        FeatureVector {
            time: TimeFeatures {
                mean: v[0],
                std_dev: v[1],
                avg_deviation: v[2],
                skewness: v[3],
                kurtosis: v[4],
                rms_amplitude: v[5],
                lowest: v[6],
                highest: v[7],
            },
            freq: FreqFeatures {
                spec_std_dev: v[8],
                spec_skewness: v[9],
                spec_kurtosis: v[10],
                spec_centroid: v[11],
                irregularity_k: v[12],
                irregularity_j: v[13],
                rolloff: v[14],
                flatness: v[15],
                smoothness: v[16],
            },
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// Bin magnitudes `y_m`.
    pub magnitudes: Vec<f64>,
    /// Bin centre frequencies `y_f` in Hz.
    pub freqs: Vec<f64>,
}

impl Spectrum {
    pub fn new(magnitudes: Vec<f64>, freqs: Vec<f64>) -> Result<Self> {
        if magnitudes.len() != freqs.len() {
            return Err(Error::InvalidInput(format!(
                "{} magnitudes but {} frequencies",
                magnitudes.len(),
                freqs.len()
            )));
        }
        if magnitudes.iter().any(|&m| !(m >= 0.0) || !m.is_finite()) {
            return Err(Error::InvalidInput("magnitudes must be finite and non-negative".into()));
        }
        if freqs.first().is_some_and(|&f| f != 0.0) || freqs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(
                "bin frequencies must start at 0 and increase strictly".into(),
            ));
        }
        Ok(Spectrum { magnitudes, freqs })
    }

    pub fn len(&self) -> usize {
        self.magnitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.magnitudes.is_empty()
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Full complex DFT of a real sequence (rectangular window, no scaling).
pub fn dft(samples: &[f64]) -> Vec<Complex<f64>> {
    let mut buf: Vec<Complex<f64>> = samples.iter().map(|&x| Complex::new(x, 0.0)).collect();
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft_forward(buf.len()));
    fft.process(&mut buf);
    buf
}

/// One-sided magnitude spectrum, bins `0..=M/2` for `M` samples.
pub fn magnitude_spectrum(w: &Waveform) -> Result<Spectrum> {
    let m = w.samples.len();
    if m < MIN_SPECTRUM_SAMPLES {
        return Err(Error::InsufficientSamples {
            min: MIN_SPECTRUM_SAMPLES,
            actual: m,
        });
    }
    let bins = dft(&w.samples);
    let half = m / 2;
    let magnitudes = bins[..=half].iter().map(|c| c.norm()).collect();
    let freqs = (0..=half).map(|i| i as f64 * w.sample_rate / m as f64).collect();
    Ok(Spectrum { magnitudes, freqs })
}

pub fn time_features(samples: &[f64]) -> Result<TimeFeatures> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::InsufficientSamples { min: 2, actual: n });
    }
    let nf = n as f64;
    let mean = samples.iter().sum::<f64>() / nf;
    let mut sq = 0.0;
    let mut abs = 0.0;
    let mut power = 0.0;
    let mut lowest = f64::INFINITY;
    let mut highest = f64::NEG_INFINITY;
    for &x in samples {
        let d = x - mean;
        sq += d * d;
        abs += d.abs();
        power += x * x;
        lowest = lowest.min(x);
        highest = highest.max(x);
    }
    let std_dev = (sq / (nf - 1.0)).sqrt();
    let (skewness, kurtosis) = if std_dev > 0.0 {
        let mut m3 = 0.0;
        let mut m4 = 0.0;
        for &x in samples {
            let z = (x - mean) / std_dev;
            let z2 = z * z;
            m3 += z2 * z;
            m4 += z2 * z2;
        }
        (m3 / nf, m4 / nf - 3.0)
    } else {
        (0.0, 0.0)
    };
    Ok(TimeFeatures {
        mean,
        std_dev,
        avg_deviation: abs / nf,
        skewness,
        kurtosis,
        rms_amplitude: (power / nf).sqrt(),
        lowest,
        highest,
    })
}

pub fn freq_features(s: &Spectrum, rolloff_fraction: f64) -> Result<FreqFeatures> {
    let n = s.len();
    if n < 3 {
        return Err(Error::InsufficientSamples { min: 3, actual: n });
    }
    if !(0.0..=1.0).contains(&rolloff_fraction) {
        return Err(Error::InvalidConfig(format!(
            "rolloff fraction {rolloff_fraction} outside [0, 1]"
        )));
    }
    let ym = &s.magnitudes;
    let yf = &s.freqs;
    let total: f64 = ym.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateSpectrum);
    }

    let centroid = yf.iter().zip(ym).map(|(f, m)| f * m).sum::<f64>() / total;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for (f, m) in yf.iter().zip(ym) {
        let d = f - centroid;
        let d2 = d * d;
        m2 += d2 * m;
        m3 += d2 * d * m;
        m4 += d2 * d2 * m;
    }
    let spread = (m2 / total).sqrt();
    let (spec_skewness, spec_kurtosis) = if spread > 0.0 {
        (
            m3 / total / spread.powi(3),
            m4 / total / spread.powi(4) - 3.0,
        )
    } else {
        (0.0, 0.0)
    };

    let irregularity_k = ym
        .windows(3)
        .map(|w| (w[1] - (w[0] + w[1] + w[2]) / 3.0).abs())
        .sum();

    let diff_sq: f64 = ym.windows(2).map(|w| (w[0] - w[1]).powi(2)).sum();
    let base_sq: f64 = ym[..n - 1].iter().map(|m| m * m).sum();
    let irregularity_j = if base_sq > 0.0 { diff_sq / base_sq } else { 0.0 };

    let target = rolloff_fraction * total;
    let mut cumulative = 0.0;
    let mut rolloff = yf[n - 1];
    for (f, m) in yf.iter().zip(ym) {
        cumulative += m;
        if cumulative >= target {
            rolloff = *f;
            break;
        }
    }

    let log_mean = ym.iter().map(|m| (m + LOG_FLOOR).ln()).sum::<f64>() / n as f64;
    let flatness = log_mean.exp() / (total / n as f64);

    let db: Vec<f64> = ym.iter().map(|m| 20.0 * m.max(LOG_FLOOR).log10()).collect();
    let smoothness = db
        .windows(3)
        .map(|w| (w[1] - (w[0] + w[1] + w[2]) / 3.0).abs())
        .sum();

    Ok(FreqFeatures {
        spec_std_dev: spread,
        spec_skewness,
        spec_kurtosis,
        spec_centroid: centroid,
        irregularity_k,
        irregularity_j,
        rolloff,
        flatness,
        smoothness,
    })
}

pub fn extract(w: &Waveform) -> Result<FeatureVector> {
    extract_with(w, DEFAULT_ROLLOFF)
}

pub fn extract_with(w: &Waveform, rolloff_fraction: f64) -> Result<FeatureVector> {
    let time = time_features(&w.samples)?;
    let freq = freq_features(&magnitude_spectrum(w)?, rolloff_fraction)?;
    Ok(FeatureVector { time, freq })
}

/// Feature matrix CSV: the 17 feature names plus `label`, one row per
/// observation, values in shortest round-trip decimal form.
pub fn write_feature_matrix(path: &Path, rows: &[(FeatureVector, String)]) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    writeln!(out, "{},label", FEATURE_NAMES.join(","))?;
    for (fv, label) in rows {
        let values: Vec<String> = fv.to_array().iter().map(|v| v.to_string()).collect();
        writeln!(out, "{},{}", values.join(","), label)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_feature_matrix(path: &Path) -> Result<Vec<(FeatureVector, String)>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::parse("feature matrix", "empty file"))?;
    let expected = format!("{},label", FEATURE_NAMES.join(","));
    if header != expected {
        return Err(Error::parse("feature matrix", "unexpected header"));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != FEATURE_COUNT + 1 {
                return Err(Error::parse(
                    "feature matrix",
                    format!("row {}: {} columns", i + 2, cols.len()),
                ));
            }
            let mut values = [0.0; FEATURE_COUNT];
            for (slot, col) in values.iter_mut().zip(&cols) {
                *slot = col
                    .parse()
                    .map_err(|e| Error::parse("feature matrix", format!("row {}: {e}", i + 2)))?;
            }
            Ok((FeatureVector::from_array(values), cols[FEATURE_COUNT].to_string()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::BitString;

    fn waveform(samples: Vec<f64>) -> Waveform {
        let bits = samples.len().div_ceil(100);
        Waveform {
            samples,
            sample_rate: 50e6,
            bit_rate: 500e3,
            source_label: None,
            pattern: BitString::zeros(bits),
        }
    }

    #[test]
    fn constant_signal_time_features() {
        let t = time_features(&[2.5; 64]).unwrap();
        assert_eq!(t.mean, 2.5);
        assert_eq!(t.std_dev, 0.0);
        assert_eq!(t.avg_deviation, 0.0);
        assert_eq!(t.rms_amplitude, 2.5);
        assert_eq!((t.lowest, t.highest), (2.5, 2.5));
        assert_eq!((t.skewness, t.kurtosis), (0.0, 0.0));
    }

    #[test]
    fn alternating_signal_time_features() {
        let t = time_features(&[1.0, -1.0, 1.0, -1.0]).unwrap();
        assert_eq!(t.mean, 0.0);
        assert_eq!(t.rms_amplitude, 1.0);
        assert_eq!((t.lowest, t.highest), (-1.0, 1.0));
    }

    #[test]
    fn too_short_inputs() {
        assert!(matches!(time_features(&[1.0]), Err(Error::InsufficientSamples { .. })));
        assert!(matches!(
            magnitude_spectrum(&waveform(vec![0.0; 15])),
            Err(Error::InsufficientSamples { min: 16, actual: 15 })
        ));
        let s = Spectrum::new(vec![1.0, 1.0], vec![0.0, 1.0]).unwrap();
        assert!(freq_features(&s, 0.95).is_err());
    }

    #[test]
    fn constant_signal_is_dc_only() {
        let s = magnitude_spectrum(&waveform(vec![1.7; 100])).unwrap();
        assert_eq!(s.len(), 51);
        assert!(s.magnitudes[0] > 0.0);
        for &m in &s.magnitudes[1..] {
            assert!(m <= 1e-9 * s.magnitudes[0]);
        }
    }

    #[test]
    fn integer_cycle_sinusoid_peaks_at_its_bin() {
        let m = 128;
        let k = 9;
        let samples = (0..m)
            .map(|i| (2.0 * std::f64::consts::PI * k as f64 * i as f64 / m as f64).sin())
            .collect();
        let w = waveform(samples);
        let s = magnitude_spectrum(&w).unwrap();
        let peak = s
            .magnitudes
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(peak, k);
        assert_eq!(s.freqs[k], k as f64 * w.sample_rate / m as f64);
    }

    #[test]
    fn flat_spectrum() {
        let s = Spectrum::new(vec![3.0; 33], (0..33).map(f64::from).collect()).unwrap();
        let f = freq_features(&s, 0.95).unwrap();
        assert!((f.flatness - 1.0).abs() < 1e-9);
        assert_eq!(f.irregularity_j, 0.0);
        assert!(f.smoothness.abs() < 1e-9);
    }

    #[test]
    fn point_mass_spectrum() {
        let mut ym = vec![0.0; 17];
        ym[5] = 4.0;
        let s = Spectrum::new(ym, (0..17).map(|i| i as f64 * 10.0).collect()).unwrap();
        let f = freq_features(&s, 0.95).unwrap();
        assert_eq!(f.spec_centroid, 50.0);
        assert_eq!(f.spec_std_dev, 0.0);
        assert_eq!(f.rolloff, 50.0);
    }

    #[test]
    fn zero_spectrum_is_degenerate() {
        let s = Spectrum::new(vec![0.0; 8], (0..8).map(f64::from).collect()).unwrap();
        assert!(matches!(freq_features(&s, 0.95), Err(Error::DegenerateSpectrum)));
    }

    #[test]
    fn spectrum_validation() {
        assert!(Spectrum::new(vec![1.0; 3], vec![0.0, 1.0]).is_err());
        assert!(Spectrum::new(vec![1.0; 3], vec![0.0, 2.0, 1.0]).is_err());
        assert!(Spectrum::new(vec![1.0, -1.0, 1.0], vec![0.0, 1.0, 2.0]).is_err());
    }

    #[test]
    fn extraction_is_deterministic() {
        let samples: Vec<f64> = (0..1000).map(|i| ((i * 37 % 101) as f64).sin()).collect();
        let w = waveform(samples);
        assert_eq!(extract(&w).unwrap(), extract(&w).unwrap());
        assert!(extract(&w).unwrap().is_finite());
    }

    #[test]
    fn feature_matrix_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        let fv = FeatureVector::from_array(std::array::from_fn(|i| i as f64 * 0.1 + 1e-17));
        write_feature_matrix(&path, &[(fv, "ecu01".into())]).unwrap();
        let back = read_feature_matrix(&path).unwrap();
        assert_eq!(back, vec![(fv, "ecu01".to_string())]);
    }
}
