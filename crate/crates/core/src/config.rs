use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classify::Hyperparams;
use crate::error::{Error, Result};
use crate::frame::{make_exid, BitString, Exid};
use crate::waveform::{ProfileSpread, DEFAULT_BIT_RATE, DEFAULT_SAMPLE_RATE, MIN_OVERSAMPLING};

pub const ALL_ZEROS: &str = "000000000000000000";
pub const ALTERNATING: &str = "010101010101010101";
pub const ALL_ONES: &str = "111111111111111111";

/// Everything needed to reproduce a run. Loaded from TOML; every key is
/// optional and falls back to the desk-scale default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub profiles: usize,
    pub signals_per_profile: usize,
    pub patterns: Vec<String>,
    pub bit_rate: f64,
    pub sample_rate: f64,
    pub folds: usize,
    pub seed: u64,
    pub alien_profiles: usize,
    /// Signals per alien profile.
    pub alien_signals: usize,
    /// Held-out signals per known profile for the novelty sweep.
    pub known_test_signals: usize,
    /// Aliens are drawn with the known spread multiplied by this factor...
    pub alien_spread_scale: f64,
    /// ...and at least this many standard deviations from the nominal
    /// transceiver in every parameter.
    pub alien_offset: f64,
    pub rolloff: f64,
    /// Optional vertical quantization of every trace (bits, over -1..3 V).
    pub quantize_bits: Option<u32>,
    pub escalation_k: usize,
    pub spread: ProfileSpread,
    pub classifier: Hyperparams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            profiles: 12,
            signals_per_profile: 200,
            patterns: vec![ALL_ZEROS.to_string()],
            bit_rate: DEFAULT_BIT_RATE,
            sample_rate: DEFAULT_SAMPLE_RATE,
            folds: 10,
            seed: 1,
            alien_profiles: 2,
            alien_signals: 500,
            known_test_signals: 50,
            alien_spread_scale: 1.0,
            alien_offset: 3.0,
            rolloff: crate::features::DEFAULT_ROLLOFF,
            quantize_bits: None,
            escalation_k: 3,
            spread: ProfileSpread::default(),
            classifier: Hyperparams::rbf_svm(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let cfg: ExperimentConfig = toml::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::parse("config", e))
    }

    /// Parsed EXID patterns. All-ones style patterns are accepted in
    /// non-conforming mode so every row of the bit-string study can run.
    pub fn exids(&self) -> Result<Vec<Exid>> {
        self.patterns
            .iter()
            .map(|p| make_exid(&p.parse::<BitString>()?, false))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.profiles < 2 {
            return bad(format!("{} profiles; at least 2 needed", self.profiles));
        }
        if self.folds < 2 {
            return bad(format!("{} folds; at least 2 needed", self.folds));
        }
        if self.signals_per_profile < self.folds {
            return bad(format!(
                "{} signals per profile cannot fill {} folds",
                self.signals_per_profile, self.folds
            ));
        }
        if self.patterns.is_empty() {
            return bad("no EXID patterns configured".into());
        }
        if !(self.bit_rate > 0.0) || !(self.sample_rate / self.bit_rate >= MIN_OVERSAMPLING) {
            return bad(format!(
                "sample rate {} must be at least {MIN_OVERSAMPLING}x the bit rate {}",
                self.sample_rate, self.bit_rate
            ));
        }
        if !(0.0..=1.0).contains(&self.rolloff) {
            return bad(format!("rolloff {} outside [0, 1]", self.rolloff));
        }
        if !(self.alien_spread_scale >= 0.0) {
            return bad("alien_spread_scale must be non-negative".into());
        }
        if !(self.alien_offset >= 0.0 && self.alien_offset.is_finite()) {
            return bad("alien_offset must be finite and non-negative".into());
        }
        if self.escalation_k == 0 {
            return bad("escalation_k must be at least 1".into());
        }
        if self.quantize_bits.is_some_and(|b| !(2..=24).contains(&b)) {
            return bad("quantize_bits must be within 2..=24".into());
        }
        self.spread.validate()?;
        self.classifier.validate()?;
        self.exids()?;
        Ok(())
    }
}
