//! Crosstalk-mitigation block codes (4-bit data word to 5- or 6-bit code
//! word) and per-flit framing with gated nibbles.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::photonics::FLIT_BITS;

pub const NIBBLES_PER_FLIT: usize = (FLIT_BITS / 4) as usize;

/// Pipeline cycles added when a flit passes through the encoder/decoder.
pub const CODEC_LATENCY_CYCLES: u32 = 2;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("{code:#b} is not a {scheme} code word")]
    InvalidCode { scheme: Scheme, code: u8 },
    #[error("gate range {lo}..{hi} is outside 0..64")]
    BadRange { lo: u32, hi: u32 },
    #[error("cannot parse gate range {0:?} (expected lo..hi)")]
    RangeSyntax(String),
    #[error("unknown codec scheme {0:?}")]
    UnknownScheme(String),
    #[error("framed stream is {got} bits, framing expects {expected}")]
    Length { got: u32, expected: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Pctm5b,
    Pctm6b,
}

const PCTM5B: [u8; 16] = [
    0b00000, 0b00001, 0b00010, 0b10101, 0b00100, 0b00101, 0b00110, 0b10110, 0b01000, 0b01001, 0b01010, 0b10100,
    0b01100, 0b10010, 0b10001, 0b10000,
];

const PCTM6B: [u8; 16] = [
    0b000000, 0b000001, 0b000010, 0b100000, 0b000100, 0b000101, 0b010101, 0b100001, 0b001000, 0b001001, 0b001010,
    0b010100, 0b100010, 0b010010, 0b010001, 0b010000,
];

impl Scheme {
    pub fn codebook(self) -> &'static [u8; 16] {
        match self {
            Scheme::Pctm5b => &PCTM5B,
            Scheme::Pctm6b => &PCTM6B,
        }
    }

    pub fn code_width(self) -> u32 {
        match self {
            Scheme::Pctm5b => 5,
            Scheme::Pctm6b => 6,
        }
    }

    pub fn total_weight(self) -> u32 {
        self.codebook().iter().map(|c| c.count_ones()).sum()
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Pctm5b => "PCTM5B",
            Scheme::Pctm6b => "PCTM6B",
        })
    }
}

impl FromStr for Scheme {
    type Err = CodecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "pctm5b" => Ok(Scheme::Pctm5b),
            "pctm6b" => Ok(Scheme::Pctm6b),
            _ => Err(CodecError::UnknownScheme(s.to_string())),
        }
    }
}

pub fn encode_nibble(scheme: Scheme, nibble: u8) -> u8 {
    scheme.codebook()[usize::from(nibble & 0xF)]
}

pub fn decode_word(scheme: Scheme, code: u8) -> Result<u8, CodecError> {
    scheme
        .codebook()
        .iter()
        .position(|&c| c == code)
        .map(|n| n as u8)
        .ok_or(CodecError::InvalidCode { scheme, code })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateKind {
    /// Sent unencoded at whatever power the plan chose.
    Approximated,
    /// Not sent at all.
    Truncated,
}

/// Half-open bit range `[lo, hi)` of a flit kept away from the encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateRange {
    pub lo: u32,
    pub hi: u32,
    pub kind: GateKind,
}

impl GateRange {
    pub fn new(lo: u32, hi: u32, kind: GateKind) -> Result<Self, CodecError> {
        if lo > hi || hi > FLIT_BITS {
            return Err(CodecError::BadRange { lo, hi });
        }
        Ok(Self { lo, hi, kind })
    }

    pub fn mask(&self) -> u64 {
        crate::approx::low_mask(self.hi) & !crate::approx::low_mask(self.lo)
    }

    /// Parse `lo..hi`, e.g. `0..32`.
    pub fn parse(text: &str, kind: GateKind) -> Result<Self, CodecError> {
        let (lo, hi) = text
            .split_once("..")
            .ok_or_else(|| CodecError::RangeSyntax(text.to_string()))?;
        let lo = lo
            .trim()
            .parse()
            .map_err(|_| CodecError::RangeSyntax(text.to_string()))?;
        let hi = hi
            .trim()
            .parse()
            .map_err(|_| CodecError::RangeSyntax(text.to_string()))?;
        Self::new(lo, hi, kind)
    }
}

/// Bit-level gating of a flit: which bits bypass the encoder and which of
/// those are not transmitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Gating {
    pub approximated: u64,
    pub truncated: u64,
}

impl Gating {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn from_ranges(ranges: &[GateRange]) -> Self {
        let mut g = Gating::none();
        for r in ranges {
            match r.kind {
                GateKind::Approximated => g.approximated |= r.mask(),
                GateKind::Truncated => g.truncated |= r.mask(),
            }
        }
        g.approximated &= !g.truncated;
        g
    }

    pub fn gated(&self) -> u64 {
        self.approximated | self.truncated
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NibbleMode {
    Encoded,
    Raw,
    Absent,
}

/// Nibble modes for a gating: any gated bit gates the whole nibble, and a
/// gated nibble whose four bits are all truncated disappears.
pub fn nibble_modes(gating: &Gating) -> [NibbleMode; NIBBLES_PER_FLIT] {
    let mut modes = [NibbleMode::Encoded; NIBBLES_PER_FLIT];
    for (i, mode) in modes.iter_mut().enumerate() {
        let shift = 4 * i as u32;
        if (gating.truncated >> shift) & 0xF == 0xF {
            *mode = NibbleMode::Absent;
        } else if (gating.gated() >> shift) & 0xF != 0 {
            *mode = NibbleMode::Raw;
        }
    }
    modes
}

/// An encoded flit. Nibble 0 (bits 0..4) occupies the lowest stream bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FramedWord {
    pub scheme: Scheme,
    pub stream: u128,
    pub len: u32,
    pub modes: [NibbleMode; NIBBLES_PER_FLIT],
}

impl FramedWord {
    pub fn encoded_nibbles(&self) -> usize {
        self.modes.iter().filter(|m| **m == NibbleMode::Encoded).count()
    }

    pub fn hex(&self) -> String {
        let digits = self.len.div_ceil(4).max(1) as usize;
        format!("{:0digits$x}", self.stream)
    }
}

fn mode_width(scheme: Scheme, mode: NibbleMode) -> u32 {
    match mode {
        NibbleMode::Encoded => scheme.code_width(),
        NibbleMode::Raw => 4,
        NibbleMode::Absent => 0,
    }
}

pub fn encode_flit(scheme: Scheme, flit: u64, gating: &Gating) -> FramedWord {
    let modes = nibble_modes(gating);
    let flit = flit & !gating.truncated;
    let mut stream = 0u128;
    let mut len = 0;
    for (i, mode) in modes.iter().enumerate() {
        let nibble = ((flit >> (4 * i)) & 0xF) as u8;
        let bits = match mode {
            NibbleMode::Encoded => encode_nibble(scheme, nibble),
            NibbleMode::Raw => nibble,
            NibbleMode::Absent => continue,
        };
        stream |= u128::from(bits) << len;
        len += mode_width(scheme, *mode);
    }
    FramedWord {
        scheme,
        stream,
        len,
        modes,
    }
}

/// Invert [`encode_flit`]; absent nibbles read back as zero.
pub fn decode_flit(framed: &FramedWord) -> Result<u64, CodecError> {
    let expected: u32 = framed.modes.iter().map(|m| mode_width(framed.scheme, *m)).sum();
    if expected != framed.len {
        return Err(CodecError::Length {
            got: framed.len,
            expected,
        });
    }
    let mut flit = 0u64;
    let mut pos = 0;
    for (i, mode) in framed.modes.iter().enumerate() {
        let width = mode_width(framed.scheme, *mode);
        let bits = ((framed.stream >> pos) & ((1u128 << width) - 1)) as u8;
        pos += width;
        let nibble = match mode {
            NibbleMode::Encoded => decode_word(framed.scheme, bits)?,
            NibbleMode::Raw => bits,
            NibbleMode::Absent => 0,
        };
        flit |= u64::from(nibble) << (4 * i);
    }
    Ok(flit)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodecCost {
    pub encoded_nibbles: u32,
    pub extra_bits: u32,
    pub mr_overhead_fraction: f64,
    pub latency_cycles: u32,
}

pub fn codec_cost(scheme: Scheme, gating: &Gating) -> CodecCost {
    let encoded = nibble_modes(gating)
        .iter()
        .filter(|m| **m == NibbleMode::Encoded)
        .count() as u32;
    let extra_bits = encoded * (scheme.code_width() - 4);
    CodecCost {
        encoded_nibbles: encoded,
        extra_bits,
        mr_overhead_fraction: f64::from(extra_bits) / f64::from(FLIT_BITS),
        latency_cycles: if encoded > 0 { CODEC_LATENCY_CYCLES } else { 0 },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn table_lookups() {
        assert_eq!(encode_nibble(Scheme::Pctm5b, 0b0011), 0b10101);
        assert_eq!(encode_nibble(Scheme::Pctm5b, 0b0000), 0b00000);
        assert_eq!(encode_nibble(Scheme::Pctm6b, 0b1111), 0b010000);
        assert_eq!(decode_word(Scheme::Pctm5b, 0b10101), Ok(0b0011));
        assert_eq!(
            decode_word(Scheme::Pctm5b, 0b11111),
            Err(CodecError::InvalidCode {
                scheme: Scheme::Pctm5b,
                code: 0b11111
            })
        );
    }

    #[test]
    fn exhaustive_roundtrip_and_injectivity() {
        for scheme in [Scheme::Pctm5b, Scheme::Pctm6b] {
            let mut seen = std::collections::BTreeSet::new();
            for n in 0..16u8 {
                let c = encode_nibble(scheme, n);
                assert!(u32::from(c) < 1 << scheme.code_width());
                assert!(seen.insert(c));
                assert_eq!(decode_word(scheme, c).unwrap(), n);
            }
        }
    }

    #[test]
    fn hamming_weights() {
        let data: u32 = (0..16u8).map(|n| n.count_ones()).sum();
        assert_eq!(data, 32);
        assert_eq!(Scheme::Pctm5b.total_weight(), 27);
        assert_eq!(Scheme::Pctm6b.total_weight(), 25);
    }

    #[test]
    fn framing_examples() {
        let flit = 0x0123_4567_89AB_CDEF;
        let none = encode_flit(Scheme::Pctm5b, flit, &Gating::none());
        assert_eq!(none.len, 80);
        assert_eq!(none.encoded_nibbles(), 16);
        let all = Gating::from_ranges(&[GateRange::new(0, 64, GateKind::Approximated).unwrap()]);
        let raw = encode_flit(Scheme::Pctm5b, flit, &all);
        assert_eq!(raw.len, 64);
        assert_eq!(raw.stream, u128::from(flit));
        let low = Gating::from_ranges(&[GateRange::new(0, 32, GateKind::Approximated).unwrap()]);
        let half = encode_flit(Scheme::Pctm5b, flit, &low);
        assert_eq!(half.encoded_nibbles(), 8);
        assert_eq!(half.len, 40 + 32);
        assert_eq!(decode_flit(&half).unwrap(), flit);
    }

    #[test]
    fn truncated_nibbles_are_absent() {
        let g = Gating::from_ranges(&[GateRange::new(0, 8, GateKind::Truncated).unwrap()]);
        let f = encode_flit(Scheme::Pctm6b, 0xFFFF, &g);
        assert_eq!(f.len, 14 * 6);
        assert_eq!(decode_flit(&f).unwrap(), 0xFF00);
    }

    #[test]
    fn partial_nibble_is_promoted() {
        let g = Gating::from_ranges(&[GateRange::new(0, 6, GateKind::Truncated).unwrap()]);
        let modes = nibble_modes(&g);
        assert_eq!(modes[0], NibbleMode::Absent);
        assert_eq!(modes[1], NibbleMode::Raw);
        let f = encode_flit(Scheme::Pctm5b, 0xFF, &g);
        assert_eq!(f.len, 4 + 14 * 5);
        assert_eq!(decode_flit(&f).unwrap(), 0xC0);
    }

    #[test]
    fn cost_examples() {
        let c = codec_cost(Scheme::Pctm5b, &Gating::none());
        assert_eq!((c.extra_bits, c.latency_cycles), (16, 2));
        assert!((c.mr_overhead_fraction - 0.25).abs() < 1e-12);
        let c = codec_cost(Scheme::Pctm6b, &Gating::none());
        assert_eq!(c.extra_bits, 32);
        assert!((c.mr_overhead_fraction - 0.5).abs() < 1e-12);
        let full = Gating {
            approximated: u64::MAX,
            truncated: 0,
        };
        let c = codec_cost(Scheme::Pctm5b, &full);
        assert_eq!((c.extra_bits, c.latency_cycles, c.encoded_nibbles), (0, 0, 0));
    }

    #[test]
    fn range_parsing() {
        let r = GateRange::parse("0..32", GateKind::Approximated).unwrap();
        assert_eq!(r.mask(), 0xFFFF_FFFF);
        assert!(GateRange::parse("10..65", GateKind::Truncated).is_err());
        assert!(GateRange::parse("abc", GateKind::Truncated).is_err());
        assert_eq!("PCTM6B".parse::<Scheme>(), Ok(Scheme::Pctm6b));
    }

    proptest! {
        #[test]
        fn flit_roundtrip(flit in any::<u64>(), approx in any::<u64>(), trunc in any::<u64>(), six in any::<bool>()) {
            let scheme = if six { Scheme::Pctm6b } else { Scheme::Pctm5b };
            let g = Gating { approximated: approx & !trunc, truncated: trunc };
            let f = encode_flit(scheme, flit, &g);
            prop_assert_eq!(decode_flit(&f).unwrap(), flit & !g.truncated);
            let cost = codec_cost(scheme, &g);
            prop_assert_eq!(cost.encoded_nibbles as usize, f.encoded_nibbles());
        }

        #[test]
        fn range_roundtrip(flit in any::<u64>(), lo in 0u32..=64, len in 0u32..=64, trunc in any::<bool>()) {
            let hi = (lo + len).min(64);
            let kind = if trunc { GateKind::Truncated } else { GateKind::Approximated };
            let g = Gating::from_ranges(&[GateRange::new(lo, hi, kind).unwrap()]);
            let f = encode_flit(Scheme::Pctm5b, flit, &g);
            prop_assert_eq!(decode_flit(&f).unwrap(), flit & !g.truncated);
        }
    }
}
