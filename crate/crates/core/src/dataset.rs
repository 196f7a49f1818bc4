//! Simulated fleets of ECUs and the labeled signal datasets they produce.
//!
//! On disk a dataset is a directory holding `manifest.csv` and a `traces/`
//! subdirectory. Manifest columns: `file,label,identifier,exid,dlc,data`,
//! where the last four are the frame record of the frame that was observed.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::features::{extract_with, FeatureVector};
use crate::frame::{format_frame_record, frame_bits, parse_frame_record, DataFrame, Exid, ExtendedId};
use crate::monitor::{CommandSet, PairingTable};
use crate::seed::derive_seed;
use crate::waveform::{exid_window, make_profile, make_profile_around, read_trace, synthesize, write_trace, DeviceProfile, Waveform};

const ALIEN_STREAM: u64 = 0xa11e_0000;
const NOISE_STREAM: u64 = 0x5150_0000;
/// Payload every simulated ECU sends; the first byte is the command code.
pub const DEFAULT_PAYLOAD: [u8; 2] = [0x10, 0x00];

pub const MANIFEST: &str = "manifest.csv";
pub const TRACE_DIR: &str = "traces";

/// Base identifier for device `index`. All are even so the run of recessive
/// bits entering the EXID (identifier LSB, SRR, IDE) is the same for every
/// device, which keeps stuff positions in the EXID window identical.
pub fn base_identifier(index: usize) -> u16 {
    0x100 + 2 * index as u16
}

pub fn known_label(index: usize) -> String {
    format!("ecu{:02}", index + 1)
}

pub fn alien_label(index: usize) -> String {
    format!("alien{:02}", index + 1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fleet {
    pub known: Vec<DeviceProfile>,
    pub aliens: Vec<DeviceProfile>,
}

impl Fleet {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        let known = (0..cfg.profiles)
            .map(|i| make_profile(derive_seed(cfg.seed, i as u64), &cfg.spread).map(|p| p.with_label(known_label(i))))
            .collect::<Result<Vec<_>>>()?;
        let alien_spread = cfg.spread.scaled(cfg.alien_spread_scale);
        let aliens = (0..cfg.alien_profiles)
            .map(|j| {
                make_profile_around(
                    &DeviceProfile::nominal(),
                    derive_seed(cfg.seed, ALIEN_STREAM + j as u64),
                    &alien_spread,
                    cfg.alien_offset,
                )
                .map(|p| p.with_label(alien_label(j)))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Fleet { known, aliens })
    }

    /// Frame device `index` sends with the given EXID.
    pub fn frame_for(index: usize, exid: Exid) -> Result<DataFrame> {
        DataFrame::new(ExtendedId::new(base_identifier(index), exid)?, DEFAULT_PAYLOAD.to_vec())
    }
}

/// Renders the whole frame for `profile` and cuts out the EXID window.
pub fn observe(profile: &DeviceProfile, frame: &DataFrame, cfg: &ExperimentConfig, noise_seed: u64) -> Result<Waveform> {
    let bits = frame_bits(frame)?;
    let full = synthesize(profile, &bits.bits, cfg.sample_rate, cfg.bit_rate, noise_seed)?;
    let window = exid_window(&full, &bits.exid_span())?;
    Ok(match cfg.quantize_bits {
        Some(b) => window.quantized(b, -1.0, 3.0),
        None => window,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub label: String,
    pub frame: DataFrame,
    pub waveform: Waveform,
}

/// `count` signals of `profile` sending `frame`, noise seeds derived from
/// `(stream_seed, k)`.
pub fn simulate_signals(
    profile: &DeviceProfile,
    frame: &DataFrame,
    count: usize,
    stream_seed: u64,
    cfg: &ExperimentConfig,
) -> Result<Vec<Observation>> {
    (0..count)
        .into_par_iter()
        .map(|k| {
            let waveform = observe(profile, frame, cfg, derive_seed(stream_seed, k as u64))?;
            Ok(Observation {
                label: profile.device_id.clone(),
                frame: frame.clone(),
                waveform,
            })
        })
        .collect()
}

fn stream(cfg: &ExperimentConfig, exid: Exid, purpose: u64, device: usize) -> u64 {
    derive_seed(
        derive_seed(cfg.seed ^ NOISE_STREAM, u64::from(exid.value())),
        (purpose << 32) | device as u64,
    )
}

/// Training signals: each known device sends its own frame.
pub fn simulate_known(fleet: &Fleet, exid: Exid, cfg: &ExperimentConfig) -> Result<Vec<Observation>> {
    let mut out = Vec::with_capacity(fleet.known.len() * cfg.signals_per_profile);
    for (i, p) in fleet.known.iter().enumerate() {
        let frame = Fleet::frame_for(i, exid)?;
        out.extend(simulate_signals(p, &frame, cfg.signals_per_profile, stream(cfg, exid, 0, i), cfg)?);
    }
    Ok(out)
}

/// Fresh signals from the known devices, disjoint in noise seeds from training.
pub fn simulate_known_holdout(fleet: &Fleet, exid: Exid, cfg: &ExperimentConfig) -> Result<Vec<Observation>> {
    let mut out = Vec::new();
    for (i, p) in fleet.known.iter().enumerate() {
        let frame = Fleet::frame_for(i, exid)?;
        out.extend(simulate_signals(p, &frame, cfg.known_test_signals, stream(cfg, exid, 1, i), cfg)?);
    }
    Ok(out)
}

/// Alien devices replaying known devices' frames, round-robin over identities.
pub fn simulate_aliens(fleet: &Fleet, exid: Exid, cfg: &ExperimentConfig) -> Result<Vec<Observation>> {
    let mut out = Vec::new();
    for (j, p) in fleet.aliens.iter().enumerate() {
        let frame = Fleet::frame_for(j % fleet.known.len().max(1), exid)?;
        out.extend(simulate_signals(p, &frame, cfg.alien_signals, stream(cfg, exid, 2, j), cfg)?);
    }
    Ok(out)
}

/// Honest traffic: frame `k` comes from known device `k % n` under its own
/// identifier.
pub fn simulate_honest_stream(fleet: &Fleet, exid: Exid, cfg: &ExperimentConfig, frames: usize) -> Result<Vec<Observation>> {
    let n = fleet.known.len();
    if n == 0 {
        return Err(Error::InvalidConfig("fleet has no known devices".into()));
    }
    let frames_by_device = (0..n).map(|i| Fleet::frame_for(i, exid)).collect::<Result<Vec<_>>>()?;
    (0..frames)
        .into_par_iter()
        .map(|k| {
            let i = k % n;
            let profile = &fleet.known[i];
            let waveform = observe(profile, &frames_by_device[i], cfg, derive_seed(stream(cfg, exid, 3, i), k as u64))?;
            Ok(Observation {
                label: profile.device_id.clone(),
                frame: frames_by_device[i].clone(),
                waveform,
            })
        })
        .collect()
}

/// Known device `attacker` sending under the identifier of known device `victim`.
pub fn simulate_masquerade(
    fleet: &Fleet,
    exid: Exid,
    cfg: &ExperimentConfig,
    attacker: usize,
    victim: usize,
    count: usize,
) -> Result<Vec<Observation>> {
    let profile = fleet.known.get(attacker).ok_or_else(|| Error::InvalidConfig(format!("no known device {attacker}")))?;
    let frame = Fleet::frame_for(victim, exid)?;
    simulate_signals(profile, &frame, count, stream(cfg, exid, 4, attacker), cfg)
}

/// Alien device `alien` sending under the identifier of known device `victim`.
pub fn simulate_intrusion(
    fleet: &Fleet,
    exid: Exid,
    cfg: &ExperimentConfig,
    alien: usize,
    victim: usize,
    count: usize,
) -> Result<Vec<Observation>> {
    let profile = fleet.aliens.get(alien).ok_or_else(|| Error::InvalidConfig(format!("no alien device {alien}")))?;
    let frame = Fleet::frame_for(victim, exid)?;
    simulate_signals(profile, &frame, count, stream(cfg, exid, 5, alien), cfg)
}

/// Pairing of every known device's identifier with its label, allowing only
/// the default command.
pub fn fleet_pairing(fleet: &Fleet, exid: Exid) -> Result<PairingTable> {
    let mut table = PairingTable::new();
    for (i, p) in fleet.known.iter().enumerate() {
        let id = Fleet::frame_for(i, exid)?.id.raw();
        table.insert(id, &p.device_id, CommandSet::Only([DEFAULT_PAYLOAD[0]].into()))?;
    }
    Ok(table)
}

pub fn extract_all(observations: &[Observation], rolloff: f64) -> Result<Vec<(FeatureVector, String)>> {
    observations
        .par_iter()
        .map(|o| Ok((extract_with(&o.waveform, rolloff)?, o.label.clone())))
        .collect()
}

pub fn write_dataset(dir: &Path, observations: &[Observation]) -> Result<()> {
    let traces = dir.join(TRACE_DIR);
    fs::create_dir_all(&traces)?;
    let mut manifest = String::from("file,label,identifier,exid,dlc,data\n");
    let mut per_label: std::collections::HashMap<&str, usize> = Default::default();
    for o in observations {
        let n = per_label.entry(&o.label).or_default();
        let file = format!("{}/{}_{:04}.trace", TRACE_DIR, o.label, *n);
        *n += 1;
        write_trace(&dir.join(&file), &o.waveform)?;
        manifest.push_str(&format!("{file},{},{}\n", o.label, format_frame_record(&o.frame)));
    }
    fs::write(dir.join(MANIFEST), manifest)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub file: PathBuf,
    pub label: String,
    pub frame: DataFrame,
}

pub fn read_manifest(dir: &Path) -> Result<Vec<ManifestEntry>> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::Ingestion {
        path: path.clone(),
        message: e.to_string(),
    })?;
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| {
            let mut cols = line.splitn(3, ',');
            let (Some(file), Some(label), Some(record)) = (cols.next(), cols.next(), cols.next()) else {
                return Err(Error::Ingestion {
                    path: path.clone(),
                    message: format!("line {}: expected 6 columns", i + 2),
                });
            };
            let frame = parse_frame_record(record).map_err(|e| Error::Ingestion {
                path: path.clone(),
                message: format!("line {}: {e}", i + 2),
            })?;
            Ok(ManifestEntry {
                file: dir.join(file),
                label: label.to_string(),
                frame,
            })
        })
        .collect()
}

pub fn read_dataset(dir: &Path) -> Result<Vec<Observation>> {
    read_manifest(dir)?
        .into_par_iter()
        .map(|e| {
            let mut waveform = read_trace(&e.file)?;
            waveform.source_label = Some(e.label.clone());
            Ok(Observation {
                label: e.label,
                frame: e.frame,
                waveform,
            })
        })
        .collect()
}
