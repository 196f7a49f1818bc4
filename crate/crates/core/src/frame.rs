//! CAN 2.0B extended data frames at the bit level.
//!
//! Bits are stored as `bool` with `true` meaning recessive (logical 1) and
//! `false` meaning dominant (logical 0). The stuffing region runs from SOF
//! through the last CRC bit; the fixed-form tail (delimiters, ACK, EOF) is
//! never stuffed.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

pub const BASE_ID_BITS: usize = 11;
pub const EXID_BITS: usize = 18;
pub const CRC_BITS: usize = 15;
pub const STUFF_RUN: usize = 5;

const CRC15_POLY: u16 = 0x4599;

/// Ordered sequence of bus levels, `true` = recessive.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct BitString(Vec<bool>);

impl BitString {
    pub fn new(bits: Vec<bool>) -> Self {
        BitString(bits)
    }

    pub fn zeros(len: usize) -> Self {
        BitString(vec![false; len])
    }

    pub fn ones(len: usize) -> Self {
        BitString(vec![true; len])
    }

    /// MSB-first encoding of the low `width` bits of `value`.
    pub fn from_uint(value: u64, width: usize) -> Self {
        BitString(
            (0..width)
                .rev()
                .map(|shift| (value >> shift) & 1 == 1)
                .collect(),
        )
    }

    pub fn to_uint(&self) -> u64 {
        self.0.iter().fold(0, |acc, &b| (acc << 1) | u64::from(b))
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn extend_from(&mut self, other: &BitString) {
        self.0.extend_from_slice(&other.0);
    }

    pub fn push(&mut self, bit: bool) {
        self.0.push(bit);
    }

    pub fn slice(&self, start: usize, len: usize) -> BitString {
        BitString(self.0[start..start + len].to_vec())
    }

    /// Length of the longest run of identical symbols.
    pub fn longest_run(&self) -> usize {
        let mut best = 0;
        let mut run = 0;
        let mut prev = None;
        for &b in &self.0 {
            run = if prev == Some(b) { run + 1 } else { 1 };
            prev = Some(b);
            best = best.max(run);
        }
        best
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for BitString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::parse("bit string", format!("unexpected symbol {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(BitString)
    }
}

impl From<Vec<bool>> for BitString {
    fn from(bits: Vec<bool>) -> Self {
        BitString(bits)
    }
}

/// Validated 18-bit identifier extension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Exid(u32);

impl Exid {
    pub fn value(self) -> u32 {
        self.0
    }

    pub fn bits(self) -> BitString {
        BitString::from_uint(u64::from(self.0), EXID_BITS)
    }

    /// Whether the MSB is dominant, the form that pins stuff positions.
    pub fn is_conforming(self) -> bool {
        self.0 >> (EXID_BITS - 1) == 0
    }
}

impl fmt::Display for Exid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.bits())
    }
}

/// Builds an EXID from exactly 18 symbols.
///
/// In conforming mode the MSB must be dominant. Non-conforming patterns such
/// as all-ones are only accepted with `conforming = false`.
pub fn make_exid(bits: &BitString, conforming: bool) -> Result<Exid> {
    if bits.len() != EXID_BITS {
        return Err(Error::InvalidLength {
            expected: EXID_BITS,
            actual: bits.len(),
        });
    }
    let exid = Exid(bits.to_uint() as u32);
    if conforming && !exid.is_conforming() {
        return Err(Error::ConstraintViolation(format!(
            "EXID {bits} has a recessive MSB; conforming patterns start with 0"
        )));
    }
    Ok(exid)
}

/// 29-bit identifier: 11-bit base followed by the 18-bit extension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ExtendedId {
    base_id: u16,
    exid: Exid,
}

impl ExtendedId {
    pub fn new(base_id: u16, exid: Exid) -> Result<Self> {
        if usize::from(base_id) >= 1 << BASE_ID_BITS {
            return Err(Error::ConstraintViolation(format!(
                "base identifier {base_id:#x} exceeds 11 bits"
            )));
        }
        Ok(ExtendedId { base_id, exid })
    }

    pub fn from_raw(raw: u32) -> Result<Self> {
        if raw >= 1 << 29 {
            return Err(Error::ConstraintViolation(format!(
                "identifier {raw:#x} exceeds 29 bits"
            )));
        }
        Ok(ExtendedId {
            base_id: (raw >> EXID_BITS) as u16,
            exid: Exid(raw & ((1 << EXID_BITS) - 1)),
        })
    }

    pub fn base_id(self) -> u16 {
        self.base_id
    }

    pub fn exid(self) -> Exid {
        self.exid
    }

    pub fn raw(self) -> u32 {
        (u32::from(self.base_id) << EXID_BITS) | self.exid.0
    }

    /// Bits that take part in arbitration among extended frames, in wire order.
    ///
    /// SRR and IDE sit between the base identifier and the extension but are
    /// recessive for every extended frame, so they never decide a contest.
    pub fn arbitration_bits(self) -> BitString {
        BitString::from_uint(u64::from(self.raw()), BASE_ID_BITS + EXID_BITS)
    }
}

/// Inserts an opposite-polarity bit after every five identical symbols.
pub fn stuff(raw: &BitString) -> BitString {
    let mut out = Vec::with_capacity(raw.len() + raw.len() / STUFF_RUN + 1);
    let mut run = 0;
    let mut prev = None;
    for &b in raw.bits() {
        out.push(b);
        run = if prev == Some(b) { run + 1 } else { 1 };
        prev = Some(b);
        if run == STUFF_RUN {
            out.push(!b);
            run = 1;
            prev = Some(!b);
        }
    }
    BitString(out)
}

/// Removes stuff bits; a run of six identical symbols is a stuffing error.
pub fn destuff(stuffed: &BitString) -> Result<BitString> {
    let bits = stuffed.bits();
    let mut out = Vec::with_capacity(bits.len());
    let mut run = 0;
    let mut prev = None;
    let mut i = 0;
    while i < bits.len() {
        let b = bits[i];
        out.push(b);
        run = if prev == Some(b) { run + 1 } else { 1 };
        prev = Some(b);
        if run == STUFF_RUN {
            if let Some(&next) = bits.get(i + 1) {
                if next == b {
                    return Err(Error::StuffingViolation { offset: i + 1 });
                }
                run = 1;
                prev = Some(next);
                i += 1;
            }
        }
        i += 1;
    }
    Ok(BitString(out))
}

/// Wired-AND arbitration over equal-length bit sequences.
///
/// Returns the index of the surviving contender. Every contender transmits
/// its next bit, the bus takes the dominant level, and any node that sent
/// recessive while the bus reads dominant backs off.
pub fn arbitrate_bits(contenders: &[BitString]) -> Result<usize> {
    if contenders.is_empty() {
        return Err(Error::EmptyContention);
    }
    let width = contenders[0].len();
    if contenders.iter().any(|c| c.len() != width) {
        return Err(Error::InvalidInput(
            "arbitration fields differ in length".into(),
        ));
    }
    let mut alive: Vec<usize> = (0..contenders.len()).collect();
    for pos in 0..width {
        let bus = alive.iter().all(|&i| contenders[i].bits()[pos]);
        alive.retain(|&i| contenders[i].bits()[pos] == bus);
        if alive.len() == 1 {
            break;
        }
    }
    Ok(alive[0])
}

pub fn arbitrate(contenders: &[ExtendedId]) -> Result<ExtendedId> {
    let mut seen = HashSet::with_capacity(contenders.len());
    for id in contenders {
        if !seen.insert(id.raw()) {
            return Err(Error::DuplicateContender(id.raw()));
        }
    }
    let fields: Vec<BitString> = contenders.iter().map(|c| c.arbitration_bits()).collect();
    let winner = arbitrate_bits(&fields)?;
    Ok(contenders[winner])
}

pub fn crc15(bits: &BitString) -> u16 {
    let mut crc: u16 = 0;
    for &b in bits.bits() {
        let next = b ^ ((crc >> 14) & 1 == 1);
        crc = (crc << 1) & 0x7fff;
        if next {
            crc ^= CRC15_POLY;
        }
    }
    crc
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Field {
    Sof,
    Identifier,
    Srr,
    Ide,
    Exid,
    Reserved,
    Dlc,
    Data,
    Crc,
    CrcDelimiter,
    AckSlot,
    AckDelimiter,
    Eof,
}

/// Location of one field inside the on-wire bit string.
///
/// `start`/`len` are stuffed offsets and include any stuff bits triggered by
/// the field's own last bits; `raw_len` is the unstuffed field width.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FieldSpan {
    pub field: Field,
    pub start: usize,
    pub len: usize,
    pub raw_len: usize,
}

impl FieldSpan {
    pub fn end(&self) -> usize {
        self.start + self.len
    }

    pub fn stuff_bits(&self) -> usize {
        self.len - self.raw_len
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameBits {
    pub bits: BitString,
    pub fields: Vec<FieldSpan>,
}

impl FrameBits {
    pub fn span(&self, field: Field) -> Option<FieldSpan> {
        self.fields.iter().copied().find(|s| s.field == field)
    }

    pub fn exid_span(&self) -> FieldSpan {
        self.span(Field::Exid).expect("extended frames always carry an EXID span")
    }

    /// On-wire bits of the EXID window, stuff bits included.
    pub fn exid_window(&self) -> BitString {
        let span = self.exid_span();
        self.bits.slice(span.start, span.len)
    }

    /// Length of the stuffed region (SOF through CRC).
    pub fn stuffed_region_len(&self) -> usize {
        self.span(Field::Crc).map(|s| s.end()).unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataFrame {
    pub id: ExtendedId,
    pub dlc: u8,
    pub data: Vec<u8>,
}

impl DataFrame {
    pub fn new(id: ExtendedId, data: Vec<u8>) -> Result<Self> {
        if data.len() > 8 {
            return Err(Error::MalformedFrame(format!(
                "{} data bytes, at most 8 allowed",
                data.len()
            )));
        }
        Ok(DataFrame {
            id,
            dlc: data.len() as u8,
            data,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.dlc > 8 {
            return Err(Error::MalformedFrame(format!("dlc {} exceeds 8", self.dlc)));
        }
        if self.data.len() != usize::from(self.dlc) {
            return Err(Error::MalformedFrame(format!(
                "dlc {} but {} data bytes",
                self.dlc,
                self.data.len()
            )));
        }
        Ok(())
    }

    /// Command code carried by the frame: the first data byte, if any.
    pub fn command(&self) -> Option<u8> {
        self.data.first().copied()
    }

    /// Unstuffed fields SOF through data, in wire order.
    fn raw_fields(&self) -> Vec<(Field, BitString)> {
        let mut data = BitString::default();
        for &byte in &self.data {
            data.extend_from(&BitString::from_uint(u64::from(byte), 8));
        }
        vec![
            (Field::Sof, BitString::zeros(1)),
            (
                Field::Identifier,
                BitString::from_uint(u64::from(self.id.base_id()), BASE_ID_BITS),
            ),
            (Field::Srr, BitString::ones(1)),
            (Field::Ide, BitString::ones(1)),
            (Field::Exid, self.id.exid().bits()),
            (Field::Reserved, BitString::zeros(2)),
            (Field::Dlc, BitString::from_uint(u64::from(self.dlc), 4)),
            (Field::Data, data),
        ]
    }

    /// Unstuffed concatenation of SOF through CRC.
    pub fn unstuffed_bits(&self) -> Result<BitString> {
        self.validate()?;
        let mut raw = BitString::default();
        for (_, bits) in self.raw_fields() {
            raw.extend_from(&bits);
        }
        let crc = crc15(&raw);
        raw.extend_from(&BitString::from_uint(u64::from(crc), CRC_BITS));
        Ok(raw)
    }
}

/// Serializes a frame to its stuffed on-wire form with a field map.
pub fn frame_bits(frame: &DataFrame) -> Result<FrameBits> {
    frame.validate()?;
    let mut fields = frame.raw_fields();
    let mut crc_input = BitString::default();
    for (_, bits) in &fields {
        crc_input.extend_from(bits);
    }
    let crc = crc15(&crc_input);
    fields.push((Field::Crc, BitString::from_uint(u64::from(crc), CRC_BITS)));

    let mut out = BitString::default();
    let mut spans = Vec::with_capacity(fields.len() + 5);
    let mut run = 0;
    let mut prev = None;
    for (field, bits) in fields {
        let start = out.len();
        for &b in bits.bits() {
            out.push(b);
            run = if prev == Some(b) { run + 1 } else { 1 };
            prev = Some(b);
            if run == STUFF_RUN {
                out.push(!b);
                run = 1;
                prev = Some(!b);
            }
        }
        spans.push(FieldSpan {
            field,
            start,
            len: out.len() - start,
            raw_len: bits.len(),
        });
    }

    for (field, len) in [
        (Field::CrcDelimiter, 1),
        (Field::AckSlot, 1),
        (Field::AckDelimiter, 1),
        (Field::Eof, 7),
    ] {
        spans.push(FieldSpan {
            field,
            start: out.len(),
            len,
            raw_len: len,
        });
        out.extend_from(&BitString::ones(len));
    }

    Ok(FrameBits { bits: out, fields: spans })
}

/// One line of the frame record format: `identifier_hex,exid_bits,dlc,data_hex`.
///
/// The identifier column holds the 11-bit base identifier.
pub fn format_frame_record(frame: &DataFrame) -> String {
    let data: String = frame.data.iter().map(|b| format!("{b:02x}")).collect();
    format!(
        "{:03x},{},{},{}",
        frame.id.base_id(),
        frame.id.exid(),
        frame.dlc,
        data
    )
}

pub fn parse_frame_record(line: &str) -> Result<DataFrame> {
    let cols: Vec<&str> = line.trim().split(',').collect();
    if cols.len() != 4 {
        return Err(Error::parse(
            "frame record",
            format!("expected 4 columns, got {}", cols.len()),
        ));
    }
    let base = u16::from_str_radix(cols[0].trim_start_matches("0x"), 16)
        .map_err(|e| Error::parse("frame record identifier", e))?;
    let exid = make_exid(&cols[1].parse()?, false)?;
    let dlc: u8 = cols[2]
        .parse()
        .map_err(|e| Error::parse("frame record dlc", e))?;
    let hex = cols[3];
    if hex.len() % 2 != 0 {
        return Err(Error::parse("frame record data", "odd number of hex digits"));
    }
    let data = (0..hex.len())
        .step_by(2)
        .map(|i| u8::from_str_radix(&hex[i..i + 2], 16))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::parse("frame record data", e))?;
    let frame = DataFrame {
        id: ExtendedId::new(base, exid)?,
        dlc,
        data,
    };
    frame.validate()?;
    Ok(frame)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bs(s: &str) -> BitString {
        s.parse().unwrap()
    }

    #[test]
    fn make_exid_modes() {
        assert!(make_exid(&bs("000000000000000000"), true).is_ok());
        assert!(make_exid(&bs("010101010101010101"), true).is_ok());
        assert!(matches!(
            make_exid(&bs("100000000000000000"), true),
            Err(Error::ConstraintViolation(_))
        ));
        let ones = make_exid(&bs("111111111111111111"), false).unwrap();
        assert_eq!(ones.value(), (1 << 18) - 1);
        assert!(matches!(
            make_exid(&bs("0101"), true),
            Err(Error::InvalidLength { expected: 18, actual: 4 })
        ));
    }

    #[test]
    fn stuff_examples() {
        assert_eq!(stuff(&bs("00000")), bs("000001"));
        assert_eq!(stuff(&bs("0101010101")), bs("0101010101"));
        assert_eq!(stuff(&bs("0000011111")), bs("000001111101"));
    }

    #[test]
    fn destuff_examples() {
        assert_eq!(destuff(&bs("000001")).unwrap(), bs("00000"));
        assert!(matches!(
            destuff(&bs("000000")),
            Err(Error::StuffingViolation { offset: 5 })
        ));
        assert_eq!(destuff(&bs("000001111101")).unwrap(), bs("0000011111"));
    }

    #[test]
    fn arbitrate_examples() {
        let a = ExtendedId::new(0b01010101010, Exid(0)).unwrap();
        let b = ExtendedId::new(0b01010101011, Exid(0)).unwrap();
        assert_eq!(arbitrate(&[b, a]).unwrap(), a);

        // Equal through bit 5, A dominant at bit 6.
        let ecu_a = ExtendedId::new(0b10110_0_11111, Exid(0)).unwrap();
        let ecu_b = ExtendedId::new(0b10110_1_00000, Exid(0)).unwrap();
        assert_eq!(arbitrate(&[ecu_b, ecu_a]).unwrap(), ecu_a);

        assert!(matches!(arbitrate(&[]), Err(Error::EmptyContention)));
        assert!(matches!(
            arbitrate(&[a, a]),
            Err(Error::DuplicateContender(_))
        ));
    }

    #[test]
    fn crc15_known_vector() {
        // CRC of a single recessive bit is the polynomial itself.
        assert_eq!(crc15(&bs("1")), CRC15_POLY);
        assert_eq!(crc15(&bs("0000")), 0);
    }

    #[test]
    fn zero_id_frame_starts_with_stuffed_identifier() {
        let id = ExtendedId::new(0, make_exid(&BitString::zeros(18), true).unwrap()).unwrap();
        let fb = frame_bits(&DataFrame::new(id, vec![]).unwrap()).unwrap();
        // SOF plus the first four identifier zeros make five, then a stuff bit.
        assert_eq!(fb.bits.slice(0, 6), bs("000001"));
        let ident = fb.span(Field::Identifier).unwrap();
        assert_eq!(ident.start, 1);
        assert_eq!(ident.raw_len, 11);
        assert_eq!(ident.stuff_bits(), 2);
    }

    #[test]
    fn alternating_exid_window_has_no_stuff_bits() {
        let exid = make_exid(&bs("010101010101010101"), true).unwrap();
        for base in [0u16, 0x7ff, 0x123, 0x7c0] {
            let id = ExtendedId::new(base, exid).unwrap();
            let fb = frame_bits(&DataFrame::new(id, vec![0xab]).unwrap()).unwrap();
            let span = fb.exid_span();
            assert_eq!(span.len, 18);
            assert_eq!(fb.exid_window(), exid.bits());
        }
    }

    #[test]
    fn all_zero_exid_window_carries_three_stuff_bits() {
        let exid = make_exid(&BitString::zeros(18), true).unwrap();
        for base in [0u16, 0x7ff, 0x2aa] {
            let id = ExtendedId::new(base, exid).unwrap();
            let fb = frame_bits(&DataFrame::new(id, vec![]).unwrap()).unwrap();
            assert_eq!(fb.exid_window(), bs("000001000001000001000"));
        }
    }

    #[test]
    fn destuffed_wire_matches_fields() {
        let exid = make_exid(&bs("001110000011111000"), true).unwrap();
        let id = ExtendedId::new(0x3f0, exid).unwrap();
        let frame = DataFrame::new(id, vec![0x00, 0xff, 0x12]).unwrap();
        let fb = frame_bits(&frame).unwrap();
        let region = fb.bits.slice(0, fb.stuffed_region_len());
        assert_eq!(destuff(&region).unwrap(), frame.unstuffed_bits().unwrap());
        assert_eq!(fb.span(Field::Eof).unwrap().end(), fb.bits.len());
    }

    #[test]
    fn malformed_frame_rejected() {
        let id = ExtendedId::from_raw(5).unwrap();
        let frame = DataFrame { id, dlc: 3, data: vec![1] };
        assert!(matches!(frame_bits(&frame), Err(Error::MalformedFrame(_))));
        assert!(DataFrame::new(id, vec![0; 9]).is_err());
        assert!(ExtendedId::new(0x800, Exid(0)).is_err());
    }

    #[test]
    fn frame_record_round_trip() {
        let exid = make_exid(&bs("010101010101010101"), true).unwrap();
        let frame = DataFrame::new(ExtendedId::new(0x1a3, exid).unwrap(), vec![0xde, 0xad]).unwrap();
        let line = format_frame_record(&frame);
        assert_eq!(line, "1a3,010101010101010101,2,dead");
        assert_eq!(parse_frame_record(&line).unwrap(), frame);
        assert!(parse_frame_record("1a3,0101,2,dead").is_err());
        assert!(parse_frame_record("1a3,010101010101010101,3,dead").is_err());
    }
}
