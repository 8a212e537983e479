//! Header layout and packing of trace values into 64-bit flits.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::approx::{low_mask, Precision, TransmissionPlan};

/// Body flits per packet; longer value lists are split.
pub const MAX_BODY_FLITS: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PacketError {
    #[error("{kind:?} value {value} is not representable")]
    Unrepresentable { kind: ValueKind, value: f64 },
    #[error("header field {field} = {value} does not fit in {bits} bits")]
    FieldOverflow { field: &'static str, value: u64, bits: u32 },
    #[error("header kind code {0} is not defined")]
    BadKind(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ValueKind {
    F32,
    F64,
    I32,
    I64,
    Other,
}

impl ValueKind {
    pub fn word_bits(self) -> u32 {
        match self {
            ValueKind::F32 | ValueKind::I32 => 32,
            ValueKind::F64 | ValueKind::I64 | ValueKind::Other => 64,
        }
    }

    pub fn per_flit(self) -> usize {
        (64 / self.word_bits()) as usize
    }

    pub fn is_float(self) -> bool {
        matches!(self, ValueKind::F32 | ValueKind::F64)
    }

    pub fn precision(self) -> Option<Precision> {
        match self {
            ValueKind::F32 => Some(Precision::Single),
            ValueKind::F64 => Some(Precision::Double),
            _ => None,
        }
    }

    fn code(self) -> u8 {
        match self {
            ValueKind::F32 => 0,
            ValueKind::F64 => 1,
            ValueKind::I32 => 2,
            ValueKind::I64 => 3,
            ValueKind::Other => 4,
        }
    }

    fn from_code(code: u8) -> Result<Self, PacketError> {
        Ok(match code {
            0 => ValueKind::F32,
            1 => ValueKind::F64,
            2 => ValueKind::I32,
            3 => ValueKind::I64,
            4 => ValueKind::Other,
            c => return Err(PacketError::BadKind(c)),
        })
    }

    /// Bit pattern of one trace value. Integers are stored in two's
    /// complement; `Other` payloads travel as raw double bits.
    pub fn to_word(self, value: f64) -> Result<u64, PacketError> {
        let bad = || PacketError::Unrepresentable { kind: self, value };
        match self {
            ValueKind::F32 => Ok(u64::from((value as f32).to_bits())),
            ValueKind::F64 | ValueKind::Other => Ok(value.to_bits()),
            ValueKind::I32 => {
                if value.fract() != 0.0 || value < f64::from(i32::MIN) || value > f64::from(u32::MAX) {
                    return Err(bad());
                }
                Ok((value as i64 as u64) & 0xFFFF_FFFF)
            }
            ValueKind::I64 => {
                if value.fract() != 0.0 || !(-9.223_372_036_854_776e18..9.223_372_036_854_776e18).contains(&value) {
                    return Err(bad());
                }
                Ok(value as i64 as u64)
            }
        }
    }

    pub fn from_word(self, word: u64) -> f64 {
        match self {
            ValueKind::F32 => f64::from(f32::from_bits(word as u32)),
            ValueKind::F64 | ValueKind::Other => f64::from_bits(word),
            ValueKind::I32 => f64::from(word as u32 as i32),
            ValueKind::I64 => word as i64 as f64,
        }
    }
}

/// Header flit. Bit layout, LSB first: src 0..6, dst 6..12, datatype 12
/// (1 = float), position 13 (1 = MSB), approx_count 14..20, packet_id
/// 20..28, value_count 28..36, kind 36..39, int_lsb_count 39..45.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlitHeader {
    pub src: u8,
    pub dst: u8,
    pub is_float: bool,
    pub msb_position: bool,
    pub approx_count: u8,
    pub packet_id: u8,
    pub value_count: u8,
    pub kind: ValueKind,
    pub int_lsb_count: u8,
}

fn field(name: &'static str, value: u64, bits: u32) -> Result<u64, PacketError> {
    if value > low_mask(bits) {
        return Err(PacketError::FieldOverflow {
            field: name,
            value,
            bits,
        });
    }
    Ok(value)
}

impl FlitHeader {
    pub fn encode(&self) -> Result<u64, PacketError> {
        Ok(field("src", self.src.into(), 6)?
            | field("dst", self.dst.into(), 6)? << 6
            | u64::from(self.is_float) << 12
            | u64::from(self.msb_position) << 13
            | field("approx_count", self.approx_count.into(), 6)? << 14
            | u64::from(self.packet_id) << 20
            | u64::from(self.value_count) << 28
            | u64::from(self.kind.code()) << 36
            | field("int_lsb_count", self.int_lsb_count.into(), 6)? << 39)
    }

    pub fn decode(flit: u64) -> Result<Self, PacketError> {
        let get = |lo: u32, bits: u32| ((flit >> lo) & low_mask(bits)) as u8;
        Ok(Self {
            src: get(0, 6),
            dst: get(6, 6),
            is_float: get(12, 1) == 1,
            msb_position: get(13, 1) == 1,
            approx_count: get(14, 6),
            packet_id: get(20, 8),
            value_count: get(28, 8),
            kind: ValueKind::from_code(get(36, 3))?,
            int_lsb_count: get(39, 6),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    pub header: FlitHeader,
    pub words: Vec<u64>,
    pub body: Vec<u64>,
}

impl Packet {
    pub fn flit_count(&self) -> usize {
        1 + self.body.len()
    }
}

pub fn pack_words(kind: ValueKind, words: &[u64]) -> Vec<u64> {
    let bits = kind.word_bits();
    words
        .chunks(kind.per_flit())
        .map(|chunk| {
            chunk.iter().enumerate().fold(0u64, |flit, (slot, w)| {
                flit | (w & low_mask(bits)) << (slot as u32 * bits)
            })
        })
        .collect()
}

pub fn unpack_words(kind: ValueKind, body: &[u64], count: usize) -> Vec<u64> {
    let bits = kind.word_bits();
    body.iter()
        .flat_map(|flit| (0..kind.per_flit()).map(move |slot| (flit >> (slot as u32 * bits)) & low_mask(bits)))
        .take(count)
        .collect()
}

/// Split a record into packets of at most [`MAX_BODY_FLITS`] body flits.
/// Packet ids are assigned from `next_id`, which wraps at 256.
pub fn packetize(
    src: usize,
    dst: usize,
    kind: ValueKind,
    values: &[f64],
    plan: &TransmissionPlan,
    next_id: &mut u8,
) -> Result<Vec<Packet>, PacketError> {
    let words = values.iter().map(|&v| kind.to_word(v)).collect::<Result<Vec<_>, _>>()?;
    let is_float = kind.is_float();
    let (approx_count, msb_position, int_lsb) = if is_float {
        (plan.lsb_bits(), false, 0)
    } else if plan.msb_bits() > 0 {
        (plan.msb_bits(), true, plan.lsb_bits())
    } else {
        (plan.lsb_bits(), false, 0)
    };
    let per_packet = MAX_BODY_FLITS * kind.per_flit();
    let chunks: Vec<&[u64]> = if words.is_empty() {
        vec![&[]]
    } else {
        words.chunks(per_packet).collect()
    };
    let mut packets = Vec::with_capacity(chunks.len());
    for chunk in chunks {
        let header = FlitHeader {
            src: field("src", src as u64, 6)? as u8,
            dst: field("dst", dst as u64, 6)? as u8,
            is_float,
            msb_position,
            approx_count: field("approx_count", approx_count.into(), 6)? as u8,
            packet_id: *next_id,
            value_count: chunk.len() as u8,
            kind,
            int_lsb_count: field("int_lsb_count", int_lsb.into(), 6)? as u8,
        };
        *next_id = next_id.wrapping_add(1);
        packets.push(Packet {
            header,
            words: chunk.to_vec(),
            body: pack_words(kind, chunk),
        });
    }
    Ok(packets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx::Decision;
    use proptest::prelude::*;

    fn float_plan(bits: u32, word_bits: u32) -> TransmissionPlan {
        TransmissionPlan {
            decision: Decision::ReducedPower,
            word_bits,
            lsb_mask: low_mask(bits),
            msb_mask: 0,
            laser_fraction: 0.1,
        }
    }

    #[test]
    fn single_exact_float() {
        let mut id = 0;
        let p = packetize(0, 3, ValueKind::F32, &[1.5], &TransmissionPlan::exact(32), &mut id).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].flit_count(), 2);
        assert_eq!(p[0].header.approx_count, 0);
        assert_eq!(id, 1);
    }

    #[test]
    fn two_doubles_with_lsb_plan() {
        let mut id = 7;
        let p = packetize(1, 2, ValueKind::F64, &[1.0, -2.0], &float_plan(32, 64), &mut id).unwrap();
        let h = FlitHeader::decode(p[0].header.encode().unwrap()).unwrap();
        assert!(h.is_float);
        assert!(!h.msb_position);
        assert_eq!(h.approx_count, 32);
        assert_eq!(h.packet_id, 7);
        assert_eq!(p[0].body.len(), 2);
        assert_eq!(p[0].body[1], (-2.0f64).to_bits());
    }

    #[test]
    fn int_msb_header() {
        let plan = TransmissionPlan {
            decision: Decision::Truncate,
            word_bits: 32,
            lsb_mask: 0,
            msb_mask: 0xFFFF_FF00,
            laser_fraction: 0.0,
        };
        let mut id = 0;
        let p = packetize(0, 1, ValueKind::I32, &[5.0, 6.0, 7.0], &plan, &mut id).unwrap();
        let h = p[0].header;
        assert!(!h.is_float);
        assert!(h.msb_position);
        assert_eq!(h.approx_count, 24);
        assert_eq!(p[0].body, vec![5 | 6 << 32, 7]);
    }

    #[test]
    fn long_records_split_with_distinct_ids() {
        let values: Vec<f64> = (0..20).map(f64::from).collect();
        let mut id = 255;
        let p = packetize(0, 1, ValueKind::F64, &values, &TransmissionPlan::exact(64), &mut id).unwrap();
        assert_eq!(p.iter().map(|p| p.body.len()).collect::<Vec<_>>(), vec![8, 8, 4]);
        assert_eq!(
            p.iter().map(|p| p.header.packet_id).collect::<Vec<_>>(),
            vec![255, 0, 1]
        );
    }

    #[test]
    fn rejects_bad_ints_and_nodes() {
        let mut id = 0;
        let exact = TransmissionPlan::exact(32);
        assert!(packetize(0, 1, ValueKind::I32, &[1.5], &exact, &mut id).is_err());
        assert!(packetize(0, 1, ValueKind::I32, &[1e12], &exact, &mut id).is_err());
        assert!(packetize(64, 1, ValueKind::I32, &[1.0], &exact, &mut id).is_err());
    }

    proptest! {
        #[test]
        fn header_roundtrip(src in 0u8..64, dst in 0u8..64, f in any::<bool>(), m in any::<bool>(),
                            n in 0u8..=32, id in any::<u8>(), count in any::<u8>(), k in 0u8..5, lsb in 0u8..=32) {
            let h = FlitHeader {
                src, dst, is_float: f, msb_position: m, approx_count: n, packet_id: id,
                value_count: count, kind: ValueKind::from_code(k).unwrap(), int_lsb_count: lsb,
            };
            let bits = h.encode().unwrap();
            prop_assert!(bits < 1 << 45);
            prop_assert_eq!(FlitHeader::decode(bits).unwrap(), h);
        }

        #[test]
        fn pack_roundtrip(words in proptest::collection::vec(any::<u32>(), 0..40)) {
            let words: Vec<u64> = words.into_iter().map(u64::from).collect();
            let body = pack_words(ValueKind::I32, &words);
            prop_assert_eq!(body.len(), words.len().div_ceil(2));
            prop_assert_eq!(unpack_words(ValueKind::I32, &body, words.len()), words);
        }

        #[test]
        fn word_roundtrip(v in any::<i32>(), x in any::<f64>()) {
            let w = ValueKind::I32.to_word(f64::from(v)).unwrap();
            prop_assert_eq!(ValueKind::I32.from_word(w), f64::from(v));
            let w = ValueKind::F64.to_word(x).unwrap();
            prop_assert_eq!(ValueKind::F64.from_word(w).to_bits(), x.to_bits());
        }
    }
}
