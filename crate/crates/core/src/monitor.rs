//! Identifier-to-fingerprint pairing checks and alarm escalation.
//!
//! Pairing file (CSV, `#` comments allowed):
//!
//! ```text
//! identifier,class,commands
//! 04000000,ecu01,10 11 2a
//! 04200000,ecu02,*
//! ```
//!
//! `identifier` is the 29-bit identifier in hex. `commands` lists the hex
//! command codes (first data byte) the class may send, space separated;
//! `*` or an empty cell allows any. Rows for the same class merge.
//!
//! Verdict log: one line per processed frame,
//! `index,identifier,predicted,status,streak`, followed after an escalating
//! verdict by `ALARM,index,identifier,status,streak`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;

use crate::classify::FingerprintModel;
use crate::error::{Error, Result};
use crate::features::extract_with;
use crate::frame::DataFrame;
use crate::waveform::Waveform;

pub const UNKNOWN: &str = "UNKNOWN";
pub const PAIRING_HEADER: &str = "identifier,class,commands";
pub const VERDICT_HEADER: &str = "index,identifier,predicted,status,streak";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CommandSet {
    Any,
    Only(BTreeSet<u8>),
}

impl CommandSet {
    pub fn allows(&self, command: u8) -> bool {
        match self {
            CommandSet::Any => true,
            CommandSet::Only(set) => set.contains(&command),
        }
    }

    fn merge(&mut self, other: CommandSet) {
        match (&mut *self, other) {
            (CommandSet::Any, _) => {}
            (_, CommandSet::Any) => *self = CommandSet::Any,
            (CommandSet::Only(a), CommandSet::Only(b)) => a.extend(b),
        }
    }
}

impl fmt::Display for CommandSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CommandSet::Any => f.write_str("*"),
            CommandSet::Only(set) => {
                let codes: Vec<String> = set.iter().map(|c| format!("{c:02x}")).collect();
                f.write_str(&codes.join(" "))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PairingTable {
    pub entries: BTreeMap<u32, String>,
    pub allowed_commands: BTreeMap<String, CommandSet>,
}

impl PairingTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers `identifier` as belonging to `class`. Identifiers are unique.
    pub fn insert(&mut self, identifier: u32, class: &str, commands: CommandSet) -> Result<()> {
        if identifier >= 1 << 29 {
            return Err(Error::ConstraintViolation(format!("identifier {identifier:#x} exceeds 29 bits")));
        }
        if self.entries.insert(identifier, class.to_string()).is_some() {
            return Err(Error::InvalidConfig(format!("identifier {identifier:08x} paired twice")));
        }
        match self.allowed_commands.get_mut(class) {
            Some(existing) => existing.merge(commands),
            None => {
                self.allowed_commands.insert(class.to_string(), commands);
            }
        }
        Ok(())
    }

    pub fn expected(&self, identifier: u32) -> Option<&str> {
        self.entries.get(&identifier).map(String::as_str)
    }

    pub fn allows(&self, class: &str, command: u8) -> bool {
        self.allowed_commands.get(class).is_none_or(|set| set.allows(command))
    }

    /// Every paired class must be one the model knows.
    pub fn validate_against(&self, model: &FingerprintModel) -> Result<()> {
        for (id, class) in &self.entries {
            if model.class_index(class).is_none() {
                return Err(Error::InvalidConfig(format!(
                    "identifier {id:08x} is paired with class {class}, which the model does not know"
                )));
            }
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut table = PairingTable::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line == PAIRING_HEADER {
                continue;
            }
            let ctx = || format!("pairing line {}", i + 1);
            let cols: Vec<&str> = line.splitn(3, ',').map(str::trim).collect();
            if cols.len() < 2 || cols[1].is_empty() {
                return Err(Error::parse(ctx(), "expected identifier,class[,commands]"));
            }
            let id = u32::from_str_radix(cols[0], 16).map_err(|e| Error::parse(ctx(), e))?;
            let commands = match cols.get(2).copied().unwrap_or("") {
                "" | "*" => CommandSet::Any,
                list => CommandSet::Only(
                    list.split_whitespace()
                        .map(|c| u8::from_str_radix(c, 16).map_err(|e| Error::parse(ctx(), e)))
                        .collect::<Result<_>>()?,
                ),
            };
            table.insert(id, cols[1], commands).map_err(|e| Error::parse(ctx(), e))?;
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Ingestion {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }

    pub fn format(&self) -> String {
        let mut out = format!("{PAIRING_HEADER}\n");
        for (id, class) in &self.entries {
            let commands = self.allowed_commands.get(class).cloned().unwrap_or(CommandSet::Any);
            out.push_str(&format!("{id:08x},{class},{commands}\n"));
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.format())?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Status {
    Ok,
    Type1Alien,
    Type2Mismatch,
    Type2ForbiddenCommand,
}

impl Status {
    pub fn is_anomaly(self) -> bool {
        self != Status::Ok
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Status::Ok => "OK",
            Status::Type1Alien => "TYPE1_ALIEN",
            Status::Type2Mismatch => "TYPE2_MISMATCH",
            Status::Type2ForbiddenCommand => "TYPE2_FORBIDDEN_COMMAND",
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub frame_id: u32,
    /// `None` when the fingerprint matched no known class.
    pub predicted: Option<String>,
    pub scores: Vec<f64>,
    pub status: Status,
    pub streak: usize,
}

impl Verdict {
    pub fn predicted_label(&self) -> &str {
        self.predicted.as_deref().unwrap_or(UNKNOWN)
    }
}

/// Classifies one observation against the pairing table. The streak is left
/// at zero; [`Monitor`] fills it in.
pub fn process(
    frame: &DataFrame,
    waveform: &Waveform,
    model: &FingerprintModel,
    table: &PairingTable,
    rolloff: f64,
) -> Result<Verdict> {
    let frame_id = frame.id.raw();
    let expected = table.expected(frame_id).ok_or(Error::UnknownIdentifier(frame_id))?;
    let decision = model.classify_features(&extract_with(waveform, rolloff)?)?;
    let predicted = decision.predicted.map(|i| model.classes[i].clone());
    let status = match &predicted {
        None => Status::Type1Alien,
        Some(p) if p != expected => Status::Type2Mismatch,
        Some(p) if frame.command().is_some_and(|c| !table.allows(p, c)) => Status::Type2ForbiddenCommand,
        Some(_) => Status::Ok,
    };
    Ok(Verdict {
        frame_id,
        predicted,
        scores: decision.scores,
        status,
        streak: 0,
    })
}

/// Consecutive-anomaly counter per identifier.
#[derive(Debug, Clone, PartialEq)]
pub struct AlarmPolicy {
    k: usize,
    streaks: HashMap<u32, usize>,
}

impl AlarmPolicy {
    pub fn new(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidConfig("escalation_k must be at least 1".into()));
        }
        Ok(AlarmPolicy {
            k,
            streaks: HashMap::new(),
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Returns the streak after this verdict and whether it escalates. The
    /// counter restarts after each alarm and on every OK.
    pub fn observe(&mut self, identifier: u32, status: Status) -> (usize, bool) {
        let counter = self.streaks.entry(identifier).or_insert(0);
        if !status.is_anomaly() {
            *counter = 0;
            return (0, false);
        }
        *counter += 1;
        let streak = *counter;
        if streak == self.k {
            *counter = 0;
            return (streak, true);
        }
        (streak, false)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alarm {
    pub index: usize,
    pub frame_id: u32,
    pub status: Status,
    pub streak: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MonitorLog {
    pub verdicts: Vec<Verdict>,
    pub alarms: Vec<Alarm>,
}

impl MonitorLog {
    pub fn ok_rate(&self) -> f64 {
        if self.verdicts.is_empty() {
            return 1.0;
        }
        let ok = self.verdicts.iter().filter(|v| v.status == Status::Ok).count();
        ok as f64 / self.verdicts.len() as f64
    }

    pub fn count(&self, status: Status) -> usize {
        self.verdicts.iter().filter(|v| v.status == status).count()
    }

    pub fn format(&self) -> String {
        let mut out = format!("{VERDICT_HEADER}\n");
        let mut alarms = self.alarms.iter().peekable();
        for (i, v) in self.verdicts.iter().enumerate() {
            out.push_str(&format!(
                "{i},{:08x},{},{},{}\n",
                v.frame_id,
                v.predicted_label(),
                v.status,
                v.streak
            ));
            while let Some(a) = alarms.next_if(|a| a.index == i) {
                out.push_str(&format!("ALARM,{},{:08x},{},{}\n", a.index, a.frame_id, a.status, a.streak));
            }
        }
        out
    }
}

/// Sequential monitor over one stream.
pub struct Monitor<'a> {
    model: &'a FingerprintModel,
    table: &'a PairingTable,
    rolloff: f64,
    policy: AlarmPolicy,
    log: MonitorLog,
}

impl<'a> Monitor<'a> {
    pub fn new(model: &'a FingerprintModel, table: &'a PairingTable, rolloff: f64, k: usize) -> Result<Self> {
        table.validate_against(model)?;
        Ok(Monitor {
            model,
            table,
            rolloff,
            policy: AlarmPolicy::new(k)?,
            log: MonitorLog::default(),
        })
    }

    pub fn observe(&mut self, frame: &DataFrame, waveform: &Waveform) -> Result<(Verdict, Option<Alarm>)> {
        let mut verdict = process(frame, waveform, self.model, self.table, self.rolloff)?;
        let (streak, escalate) = self.policy.observe(verdict.frame_id, verdict.status);
        verdict.streak = streak;
        let index = self.log.verdicts.len();
        let alarm = escalate.then(|| Alarm {
            index,
            frame_id: verdict.frame_id,
            status: verdict.status,
            streak,
        });
        self.log.verdicts.push(verdict.clone());
        if let Some(a) = &alarm {
            self.log.alarms.push(a.clone());
        }
        Ok((verdict, alarm))
    }

    pub fn log(&self) -> &MonitorLog {
        &self.log
    }

    pub fn into_log(self) -> MonitorLog {
        self.log
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn statuses(policy: &mut AlarmPolicy, stream: &[Status]) -> Vec<(usize, bool)> {
        stream.iter().map(|&s| policy.observe(7, s)).collect()
    }

    #[test]
    fn honest_stream_never_alarms() {
        let mut p = AlarmPolicy::new(3).unwrap();
        assert!(statuses(&mut p, &[Status::Ok; 3]).iter().all(|&(s, a)| s == 0 && !a));
    }

    #[test]
    fn third_consecutive_anomaly_alarms_once() {
        let mut p = AlarmPolicy::new(3).unwrap();
        let out = statuses(&mut p, &[Status::Type2Mismatch; 3]);
        assert_eq!(out, vec![(1, false), (2, false), (3, true)]);
    }

    #[test]
    fn alternating_anomalies_reset() {
        let mut p = AlarmPolicy::new(3).unwrap();
        let stream: Vec<Status> = (0..20).map(|i| if i % 2 == 0 { Status::Type1Alien } else { Status::Ok }).collect();
        assert!(statuses(&mut p, &stream).iter().all(|&(_, a)| !a));
    }

    #[test]
    fn alarms_bounded_by_run_over_k() {
        for k in 1..6 {
            for run in 0..20 {
                let mut p = AlarmPolicy::new(k).unwrap();
                let alarms = statuses(&mut p, &vec![Status::Type1Alien; run]).iter().filter(|x| x.1).count();
                assert_eq!(alarms, run / k);
            }
        }
    }

    #[test]
    fn streaks_are_per_identifier() {
        let mut p = AlarmPolicy::new(2).unwrap();
        assert_eq!(p.observe(1, Status::Type1Alien), (1, false));
        assert_eq!(p.observe(2, Status::Type1Alien), (1, false));
        assert_eq!(p.observe(1, Status::Type1Alien), (2, true));
        assert!(AlarmPolicy::new(0).is_err());
    }

    #[test]
    fn pairing_file_round_trip() {
        let text = "identifier,class,commands\n# comment\n04000000,ecu01,10 2a\n04200000,ecu02,*\n04200001,ecu02,\n";
        let table = PairingTable::parse(text).unwrap();
        assert_eq!(table.expected(0x0400_0000), Some("ecu01"));
        assert!(table.allows("ecu01", 0x2a));
        assert!(!table.allows("ecu01", 0x11));
        assert!(table.allows("ecu02", 0x11));
        assert_eq!(PairingTable::parse(&table.format()).unwrap(), table);
    }

    #[test]
    fn pairing_file_errors() {
        assert!(PairingTable::parse("04000000,ecu01\n04000000,ecu02\n").is_err());
        assert!(PairingTable::parse("zz,ecu01\n").is_err());
        assert!(PairingTable::parse("20000000,ecu01\n").is_err());
        assert!(PairingTable::parse("04000000,ecu01,1000\n").is_err());
    }

    #[test]
    fn command_sets_merge() {
        let mut a = CommandSet::Only([1u8].into());
        a.merge(CommandSet::Only([2u8].into()));
        assert_eq!(a, CommandSet::Only([1u8, 2].into()));
        a.merge(CommandSet::Any);
        assert_eq!(a, CommandSet::Any);
    }
}
