//! Synthetic traffic traces with a chosen datatype mix.

use std::fmt;
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::sim::packet::ValueKind;
use crate::sim::{Trace, TraceRecord};

pub const BUNDLED_SEED: u64 = 0x5EED_2024;
pub const BUNDLED_PACKETS: usize = 10_000;
pub const MAX_VALUES_PER_RECORD: usize = 16;

const KINDS: [ValueKind; 5] = [
    ValueKind::F64,
    ValueKind::F32,
    ValueKind::I32,
    ValueKind::I64,
    ValueKind::Other,
];
const INT_VARS: [&str; 4] = ["idx", "count", "label", "offset"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Mixed,
    FloatHeavy,
    IntHeavy,
}

impl Profile {
    /// Percent weights over F64, F32, I32, I64, Other.
    pub fn weights(self) -> [u32; 5] {
        match self {
            Profile::Mixed => [25, 15, 25, 10, 25],
            Profile::FloatHeavy => [45, 35, 8, 4, 8],
            Profile::IntHeavy => [8, 7, 45, 20, 20],
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Profile::Mixed => "mixed",
            Profile::FloatHeavy => "float_heavy",
            Profile::IntHeavy => "int_heavy",
        })
    }
}

impl FromStr for Profile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "mixed" => Ok(Profile::Mixed),
            "float_heavy" | "floatheavy" => Ok(Profile::FloatHeavy),
            "int_heavy" | "intheavy" => Ok(Profile::IntHeavy),
            other => Err(format!(
                "unknown profile `{other}` (expected mixed, float_heavy or int_heavy)"
            )),
        }
    }
}

fn float_value(rng: &mut ChaCha8Rng) -> f64 {
    let magnitude = 10f64.powf(rng.random_range(-3.0..4.0));
    if rng.random_bool(0.3) {
        -magnitude
    } else {
        magnitude
    }
}

/// Records with src/dst uniform over distinct GWI pairs. Floats are
/// approximable 80% of the time and integers 60%; approximable integers
/// stay below 256 so their upper bits are free to drop.
pub fn generate(profile: Profile, packets: usize, gwi_count: usize, seed: u64) -> Vec<TraceRecord> {
    assert!(gwi_count >= 2, "need two GWIs");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kinds = WeightedIndex::new(profile.weights()).expect("weights are positive");
    let mut cycle = 0u64;
    (0..packets)
        .map(|_| {
            cycle += rng.random_range(0..4u64);
            let src = rng.random_range(0..gwi_count);
            let mut dst = rng.random_range(0..gwi_count - 1);
            if dst >= src {
                dst += 1;
            }
            let kind = KINDS[kinds.sample(&mut rng)];
            let count = rng.random_range(1..=MAX_VALUES_PER_RECORD);
            let (approximable, var_id) = match kind {
                ValueKind::F32 | ValueKind::F64 => (rng.random_bool(0.8), None),
                ValueKind::I32 | ValueKind::I64 => {
                    let var = INT_VARS[rng.random_range(0..INT_VARS.len())];
                    (rng.random_bool(0.6), Some(var.to_string()))
                }
                ValueKind::Other => (false, None),
            };
            let values = (0..count)
                .map(|_| match kind {
                    ValueKind::F32 => f64::from(float_value(&mut rng) as f32),
                    ValueKind::F64 => float_value(&mut rng),
                    ValueKind::I32 | ValueKind::I64 if approximable => f64::from(rng.random_range(0..256u32)),
                    ValueKind::I32 => f64::from(rng.random_range(-100_000..100_000i32)),
                    ValueKind::I64 => rng.random_range(-(1i64 << 40)..(1i64 << 40)) as f64,
                    ValueKind::Other => f64::from(rng.random::<u32>()),
                })
                .collect();
            TraceRecord {
                cycle,
                src,
                dst,
                kind,
                values,
                approximable,
                var_id,
            }
        })
        .collect()
}

/// The Mixed trace used by the acceptance runs (8 GWIs).
pub fn bundled_trace() -> Trace {
    Trace::from_records(generate(Profile::Mixed, BUNDLED_PACKETS, 8, BUNDLED_SEED))
}
