//! Output-quality cost of approximate transmission: small kernels whose
//! inter-stage arrays cross the approximation channel, the percentage
//! error metric, parameter sweeps and threshold-based policy selection.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::approx::{plan_transmission, ApproxPolicy, PacketClass, Precision, VarSet};
use crate::photonics::{DeviceParams, Modulation};
use crate::sim::{transmit_flit, FlitMasks, LinkContext};
use crate::topology::{link_loss, provisioned_wavelength_dbm, truncation_table, Topology, TruncationTable};

pub const DEFAULT_THRESHOLD_PCT: f64 = 10.0;

/// Values sharing one packet (and hence one source/destination pair).
pub const VALUES_PER_PACKET: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QualityError {
    #[error("{kernel} size {size} outside {min}..={max}")]
    Size {
        kernel: Kernel,
        size: usize,
        min: usize,
        max: usize,
    },
    #[error("sweep axis `{0}` must be non-empty and strictly increasing")]
    Axis(&'static str),
    #[error("invalid channel: {0}")]
    Channel(String),
}

/// Relative error in percent. `None` when the exact value is 0
/// and the approximation is not.
pub fn percentage_error(exact: f64, approx: f64) -> Option<f64> {
    if exact == 0.0 {
        return (approx == 0.0).then_some(0.0);
    }
    Some((approx - exact).abs() / exact.abs() * 100.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub exact_outputs: Vec<f64>,
    pub approximated_outputs: Vec<f64>,
    pub per_element_errors: Vec<Option<f64>>,
    /// Mean of the defined per-element errors.
    pub percentage_error: f64,
    pub max_error: f64,
    /// Elements with an exact value of 0 and a nonzero approximation.
    pub excluded: usize,
    pub threshold: f64,
}

impl QualityReport {
    pub fn new(exact: Vec<f64>, approx: Vec<f64>, threshold: f64) -> Self {
        let per: Vec<Option<f64>> = exact
            .iter()
            .zip(&approx)
            .map(|(&e, &a)| percentage_error(e, a))
            .collect();
        let defined: Vec<f64> = per.iter().flatten().copied().collect();
        let mean = if defined.is_empty() {
            0.0
        } else {
            defined.iter().sum::<f64>() / defined.len() as f64
        };
        Self {
            percentage_error: mean,
            max_error: defined.iter().copied().fold(0.0, f64::max),
            excluded: per.len() - defined.len(),
            per_element_errors: per,
            exact_outputs: exact,
            approximated_outputs: approx,
            threshold,
        }
    }

    pub fn within_threshold(&self) -> bool {
        self.percentage_error <= self.threshold
    }
}

/// Approximate transfers between random GWI pairs of a topology.
#[derive(Debug, Clone)]
pub struct Channel {
    policy: ApproxPolicy,
    params: DeviceParams,
    modulation: Modulation,
    table: TruncationTable,
    losses: Vec<Vec<f64>>,
    full_dbm: f64,
    rng: ChaCha8Rng,
}

impl Channel {
    pub fn new(
        topo: &Topology,
        params: &DeviceParams,
        modulation: Modulation,
        policy: ApproxPolicy,
        seed: u64,
    ) -> Result<Self, QualityError> {
        policy.validate().map_err(|e| QualityError::Channel(e.to_string()))?;
        let table = truncation_table(topo, params, &modulation, policy.laser_fraction())
            .map_err(|e| QualityError::Channel(e.to_string()))?;
        let t = topo.for_modulation(&modulation);
        let n = t.gwi_count();
        let losses = (0..n)
            .map(|s| {
                (0..n)
                    .map(|d| {
                        if s == d {
                            0.0
                        } else {
                            link_loss(&t, params, s, d).expect("valid pair").total_loss
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            full_dbm: provisioned_wavelength_dbm(topo, params, &modulation),
            policy,
            params: params.clone(),
            modulation,
            table,
            losses,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    /// Channel that changes nothing.
    pub fn identity(seed: u64) -> Self {
        Self::new(
            &Topology::clos(),
            &DeviceParams::standard(),
            Modulation::ook(),
            ApproxPolicy::exact("identity"),
            seed,
        )
        .expect("presets are valid")
    }

    fn pair(&mut self) -> (usize, usize) {
        let n = self.losses.len();
        let src = self.rng.random_range(0..n);
        let mut dst = self.rng.random_range(0..n - 1);
        if dst >= src {
            dst += 1;
        }
        (src, dst)
    }

    fn send(&mut self, class: PacketClass<'_>, words: &mut [u64]) {
        let (src, dst) = self.pair();
        let plan = plan_transmission(&self.policy, class, src, dst, &self.table).plan;
        if plan.affected_mask() == 0 {
            return;
        }
        let ctx = LinkContext {
            params: &self.params,
            modulation: self.modulation,
            full_dbm: self.full_dbm,
            path_loss: self.losses[src][dst],
        };
        let per_flit = (64 / plan.word_bits) as usize;
        let word_mask = crate::approx::low_mask(plan.word_bits);
        for chunk in words.chunks_mut(per_flit) {
            let flit = chunk
                .iter()
                .enumerate()
                .fold(0u64, |f, (i, w)| f | (w & word_mask) << (i as u32 * plan.word_bits));
            let rx = transmit_flit(flit, &FlitMasks::from_plan(&plan, chunk.len()), &ctx).received;
            for (i, w) in chunk.iter_mut().enumerate() {
                *w = (rx >> (i as u32 * plan.word_bits)) & word_mask;
            }
        }
    }

    /// Pass doubles through the network, eight per packet.
    pub fn transfer_f64(&mut self, data: &mut [f64]) {
        for chunk in data.chunks_mut(VALUES_PER_PACKET) {
            let mut words: Vec<u64> = chunk.iter().map(|v| v.to_bits()).collect();
            self.send(PacketClass::Float(Precision::Double), &mut words);
            for (v, w) in chunk.iter_mut().zip(words) {
                *v = f64::from_bits(w);
            }
        }
    }

    pub fn transfer_u32(&mut self, data: &mut [u32]) {
        for chunk in data.chunks_mut(VALUES_PER_PACKET) {
            let mut words: Vec<u64> = chunk.iter().map(|&v| u64::from(v)).collect();
            self.send(
                PacketClass::Int {
                    width: 32,
                    var_id: Some("data"),
                },
                &mut words,
            );
            for (v, w) in chunk.iter_mut().zip(words) {
                *v = w as u32;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    Saxpy,
    Conv2d,
    Fft1d,
    Histogram,
    OptionPricer,
}

impl Kernel {
    pub const ALL: [Kernel; 5] = [
        Kernel::Saxpy,
        Kernel::Conv2d,
        Kernel::Fft1d,
        Kernel::Histogram,
        Kernel::OptionPricer,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Kernel::Saxpy => "saxpy",
            Kernel::Conv2d => "conv2d",
            Kernel::Fft1d => "fft1d",
            Kernel::Histogram => "histogram",
            Kernel::OptionPricer => "option_pricer",
        }
    }

    /// Inclusive size bounds. Conv2D size is the image side.
    pub fn size_bounds(self) -> (usize, usize) {
        match self {
            Kernel::Saxpy | Kernel::Histogram => (1, 1 << 20),
            Kernel::Conv2d => (3, 512),
            Kernel::Fft1d => (2, 1 << 16),
            Kernel::OptionPricer => (1, 1 << 16),
        }
    }

    pub fn default_size(self) -> usize {
        match self {
            Kernel::Conv2d => 32,
            _ => 1024,
        }
    }

    pub fn uses_floats(self) -> bool {
        self != Kernel::Histogram
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kernel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.to_ascii_lowercase().replace('-', "_");
        Kernel::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .ok_or_else(|| format!("unknown kernel `{s}` (expected saxpy, conv2d, fft1d, histogram or option_pricer)"))
    }
}

fn positive(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(1.0..100.0)).collect()
}

// a * x + y; x and y cross the network.
fn saxpy(x: &[f64], y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(x, y)| 2.5 * x + y).collect()
}

// Valid 3x3 convolution; image and weights cross the network.
fn conv2d(img: &[f64], w: &[f64], n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity((n - 2) * (n - 2));
    for r in 0..n - 2 {
        for c in 0..n - 2 {
            let mut acc = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    acc += img[(r + i) * n + c + j] * w[i * 3 + j];
                }
            }
            out.push(acc);
        }
    }
    out
}

fn spectrum(signal: &[f64]) -> Vec<f64> {
    let mut buf: Vec<Complex<f64>> = signal.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    buf.iter().flat_map(|c| [c.re, c.im]).collect()
}

fn magnitudes(interleaved: &[f64]) -> Vec<f64> {
    interleaved.chunks(2).map(|c| c[0].hypot(c[1])).collect()
}

fn histogram(data: &[u32]) -> Vec<f64> {
    let mut bins = vec![0.0; 256];
    for &v in data {
        bins[(v as usize).min(255)] += 1.0;
    }
    bins
}

fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

// Complementary error function, Chebyshev fit with relative error below 1.2e-7.
fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let poly = -z * z - 1.265_512_23
        + t * (1.000_023_68
            + t * (0.374_091_96
                + t * (0.096_784_18
                    + t * (-0.186_288_06
                        + t * (0.278_868_07
                            + t * (-1.135_203_98 + t * (1.488_515_87 + t * (-0.822_152_23 + t * 0.170_872_77))))))));
    let r = t * poly.exp();
    if x >= 0.0 {
        r
    } else {
        2.0 - r
    }
}

/// European call prices. Spot, volatility and maturity cross the network;
/// strike and rate are local.
fn option_prices(spot: &[f64], vol: &[f64], time: &[f64], strike: &[f64]) -> Vec<f64> {
    const RATE: f64 = 0.02;
    spot.iter()
        .zip(vol)
        .zip(time)
        .zip(strike)
        .map(|(((&s, &v), &t), &k)| {
            let sd = v * t.sqrt();
            let d1 = ((s / k).ln() + (RATE + 0.5 * v * v) * t) / sd;
            let d2 = d1 - sd;
            s * norm_cdf(d1) - k * (-RATE * t).exp() * norm_cdf(d2)
        })
        .collect()
}

/// Run `kernel` once exactly and once with its transferred arrays passed
/// through `channel`.
pub fn run_kernel(
    kernel: Kernel,
    channel: &mut Channel,
    size: usize,
    seed: u64,
) -> Result<QualityReport, QualityError> {
    let (min, max) = kernel.size_bounds();
    if !(min..=max).contains(&size) {
        return Err(QualityError::Size { kernel, size, min, max });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (exact, approx) = match kernel {
        Kernel::Saxpy => {
            let (x, y) = (positive(&mut rng, size), positive(&mut rng, size));
            let (mut xa, mut ya) = (x.clone(), y.clone());
            channel.transfer_f64(&mut xa);
            channel.transfer_f64(&mut ya);
            (saxpy(&x, &y), saxpy(&xa, &ya))
        }
        Kernel::Conv2d => {
            let img = positive(&mut rng, size * size);
            let w: Vec<f64> = (0..9).map(|_| rng.random_range(0.05..1.0)).collect();
            let (mut ia, mut wa) = (img.clone(), w.clone());
            channel.transfer_f64(&mut ia);
            channel.transfer_f64(&mut wa);
            (conv2d(&img, &w, size), conv2d(&ia, &wa, size))
        }
        Kernel::Fft1d => {
            let spec = spectrum(&positive(&mut rng, size));
            let mut sa = spec.clone();
            channel.transfer_f64(&mut sa);
            (magnitudes(&spec), magnitudes(&sa))
        }
        Kernel::Histogram => {
            let data: Vec<u32> = (0..size).map(|_| rng.random_range(0..256)).collect();
            let mut da = data.clone();
            channel.transfer_u32(&mut da);
            (histogram(&data), histogram(&da))
        }
        Kernel::OptionPricer => {
            let spot: Vec<f64> = (0..size).map(|_| rng.random_range(20.0..200.0)).collect();
            let vol: Vec<f64> = (0..size).map(|_| rng.random_range(0.1..0.6)).collect();
            let time: Vec<f64> = (0..size).map(|_| rng.random_range(0.25..3.0)).collect();
            let strike: Vec<f64> = spot.iter().map(|s| s * rng.random_range(0.8..1.2)).collect();
            let (mut sa, mut va, mut ta) = (spot.clone(), vol.clone(), time.clone());
            channel.transfer_f64(&mut sa);
            channel.transfer_f64(&mut va);
            channel.transfer_f64(&mut ta);
            (
                option_prices(&spot, &vol, &time, &strike),
                option_prices(&sa, &va, &ta, &strike),
            )
        }
    };
    Ok(QualityReport::new(exact, approx, DEFAULT_THRESHOLD_PCT))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub float_bits: u32,
    pub int_bits: u32,
    pub power_reduction: f64,
    pub pe: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub kernel: Kernel,
    pub float_bits_axis: Vec<u32>,
    pub int_bits_axis: Vec<u32>,
    pub power_reduction_axis: Vec<f64>,
    pub threshold: f64,
    /// Row-major over (float bits, int bits, power reduction).
    pub cells: Vec<SweepCell>,
}

impl SweepGrid {
    pub fn cell(&self, float_bits: u32, int_bits: u32, power_reduction: f64) -> Option<&SweepCell> {
        self.cells
            .iter()
            .find(|c| c.float_bits == float_bits && c.int_bits == int_bits && c.power_reduction == power_reduction)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("float_bits,int_bits,power_reduction_pct,pe_pct,feasible\n");
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                c.float_bits,
                c.int_bits,
                c.power_reduction * 100.0,
                c.pe,
                u8::from(c.feasible)
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub kernel: Kernel,
    pub float_bits: Vec<u32>,
    pub int_bits: Vec<u32>,
    pub power_reduction: Vec<f64>,
    pub size: usize,
    pub threshold: f64,
}

impl SweepSpec {
    pub fn new(kernel: Kernel) -> Self {
        let (float_bits, int_bits) = if kernel.uses_floats() {
            (vec![0, 8, 16, 24, 32], vec![0])
        } else {
            (vec![0], vec![0, 8, 16, 24, 28])
        };
        Self {
            kernel,
            float_bits,
            int_bits,
            power_reduction: vec![0.0, 0.5, 0.8, 0.9, 1.0],
            size: kernel.default_size(),
            threshold: DEFAULT_THRESHOLD_PCT,
        }
    }
}

fn increasing<T: PartialOrd>(axis: &[T]) -> bool {
    !axis.is_empty() && axis.windows(2).all(|w| w[0] < w[1])
}

/// Evaluate every grid point. Each cell uses the same kernel data and the
/// same channel seed, so cells differ only in the policy.
pub fn sweep(
    spec: &SweepSpec,
    topo: &Topology,
    params: &DeviceParams,
    modulation: Modulation,
    seed: u64,
) -> Result<SweepGrid, QualityError> {
    if !increasing(&spec.float_bits) {
        return Err(QualityError::Axis("float_bits"));
    }
    if !increasing(&spec.int_bits) {
        return Err(QualityError::Axis("int_bits"));
    }
    if !increasing(&spec.power_reduction) || spec.power_reduction.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(QualityError::Axis("power_reduction"));
    }
    let points: Vec<(u32, u32, f64)> = spec
        .float_bits
        .iter()
        .flat_map(|&f| {
            spec.int_bits
                .iter()
                .flat_map(move |&i| spec.power_reduction.iter().map(move |&p| (f, i, p)))
        })
        .collect();
    let cells = points
        .par_iter()
        .map(|&(f, i, p)| {
            let policy = ApproxPolicy {
                app_name: format!("{}-sweep", spec.kernel),
                float_lsb_bits: f,
                int_msb_bits: i,
                int_lsb_bits: 0,
                power_reduction: p,
                approximable_vars: VarSet::All,
            };
            let mut channel = Channel::new(topo, params, modulation, policy, seed)?;
            let report = run_kernel(spec.kernel, &mut channel, spec.size, seed)?;
            Ok(SweepCell {
                float_bits: f,
                int_bits: i,
                power_reduction: p,
                pe: report.percentage_error,
                feasible: report.percentage_error <= spec.threshold,
            })
        })
        .collect::<Result<Vec<_>, QualityError>>()?;
    Ok(SweepGrid {
        kernel: spec.kernel,
        float_bits_axis: spec.float_bits.clone(),
        int_bits_axis: spec.int_bits.clone(),
        power_reduction_axis: spec.power_reduction.clone(),
        threshold: spec.threshold,
        cells,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub policy: ApproxPolicy,
    pub cell: Option<SweepCell>,
    pub diagnostic: Option<String>,
}

/// Ordering used by [`select_policy`]: more approximated bits first, then
/// higher power reduction, then more float bits.
pub fn selection_key(c: &SweepCell) -> (u32, f64, u32) {
    (c.float_bits + c.int_bits, c.power_reduction, c.float_bits)
}

fn key_cmp(a: &SweepCell, b: &SweepCell) -> std::cmp::Ordering {
    let (ka, kb) = (selection_key(a), selection_key(b));
    ka.0.cmp(&kb.0).then(ka.1.total_cmp(&kb.1)).then(ka.2.cmp(&kb.2))
}

/// Best feasible cell under `threshold`, as a policy.
pub fn select_policy(grid: &SweepGrid, threshold: f64) -> Selection {
    let best = grid
        .cells
        .iter()
        .filter(|c| c.pe <= threshold)
        .max_by(|a, b| key_cmp(a, b));
    match best {
        None => Selection {
            policy: ApproxPolicy::exact(grid.kernel.name()),
            cell: None,
            diagnostic: Some(format!("no grid point within {threshold}% error")),
        },
        Some(c) => Selection {
            policy: ApproxPolicy {
                app_name: grid.kernel.name().into(),
                float_lsb_bits: c.float_bits,
                int_msb_bits: c.int_bits,
                int_lsb_bits: 0,
                power_reduction: if c.float_bits + c.int_bits == 0 {
                    0.0
                } else {
                    c.power_reduction
                },
                approximable_vars: VarSet::All,
            },
            cell: Some(*c),
            diagnostic: None,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn truncating(bits: u32) -> Channel {
        let policy = ApproxPolicy {
            float_lsb_bits: bits,
            power_reduction: 1.0,
            ..ApproxPolicy::exact("t")
        };
        Channel::new(
            &Topology::clos(),
            &DeviceParams::standard(),
            Modulation::ook(),
            policy,
            1,
        )
        .unwrap()
    }

    #[test]
    fn pe_examples() {
        assert_eq!(percentage_error(10.0, 9.0), Some(10.0));
        assert_eq!(percentage_error(-3.5, -3.5), Some(0.0));
        let pe = percentage_error(1.5, 1.0).unwrap();
        assert!((pe - 100.0 / 3.0).abs() < 1e-12);
        assert_eq!(percentage_error(0.0, 0.0), Some(0.0));
        assert_eq!(percentage_error(0.0, 1.0), None);
        assert_ne!(percentage_error(10.0, 9.0), percentage_error(9.0, 10.0));
    }

    #[test]
    fn report_aggregates() {
        let r = QualityReport::new(vec![10.0, 0.0, 4.0], vec![9.0, 1.0, 4.0], 10.0);
        assert_eq!(r.excluded, 1);
        assert!((r.percentage_error - 5.0).abs() < 1e-12);
        assert_eq!(r.max_error, 10.0);
        assert!(r.within_threshold());
    }

    #[test]
    fn identity_channel_is_exact() {
        for k in Kernel::ALL {
            let r = run_kernel(k, &mut Channel::identity(3), k.default_size(), 3).unwrap();
            assert_eq!(r.percentage_error, 0.0, "{k}");
            assert_eq!(r.exact_outputs, r.approximated_outputs);
        }
    }

    #[test]
    fn saxpy_truncation_regression() {
        let a = run_kernel(Kernel::Saxpy, &mut truncating(32), 1024, 42).unwrap();
        let b = run_kernel(Kernel::Saxpy, &mut truncating(32), 1024, 42).unwrap();
        assert!(a.percentage_error > 0.0);
        assert_eq!(a.percentage_error, b.percentage_error);
        assert!((a.percentage_error - 3.616_880_193_537_526_6e-5).abs() < 1e-15);
        // 32 of 52 mantissa bits lost: relative error below 2^-20.
        assert!(a.max_error < 100.0 * 2f64.powi(-20));
    }

    #[test]
    fn histogram_msb_truncation_in_headroom_is_lossless() {
        let policy = ApproxPolicy {
            int_msb_bits: 24,
            power_reduction: 1.0,
            ..ApproxPolicy::exact("h")
        };
        let mut ch = Channel::new(
            &Topology::clos(),
            &DeviceParams::standard(),
            Modulation::ook(),
            policy,
            5,
        )
        .unwrap();
        let r = run_kernel(Kernel::Histogram, &mut ch, 4096, 5).unwrap();
        assert_eq!(r.percentage_error, 0.0);
    }

    #[test]
    fn size_bounds_enforced() {
        assert!(run_kernel(Kernel::Conv2d, &mut Channel::identity(0), 2, 0).is_err());
        assert!(run_kernel(Kernel::Saxpy, &mut Channel::identity(0), 0, 0).is_err());
    }

    #[test]
    fn normal_cdf_sanity() {
        assert!((norm_cdf(0.0) - 0.5).abs() < 1e-7);
        assert!((norm_cdf(1.96) - 0.975).abs() < 1e-4);
        assert!((norm_cdf(-1.0) + norm_cdf(1.0) - 1.0).abs() < 1e-7);
    }

    #[test]
    fn sweep_structure() {
        let mut spec = SweepSpec::new(Kernel::Saxpy);
        spec.size = 256;
        let g = sweep(
            &spec,
            &Topology::clos(),
            &DeviceParams::standard(),
            Modulation::ook(),
            9,
        )
        .unwrap();
        assert_eq!(g.cells.len(), 25);
        for p in &spec.power_reduction {
            assert_eq!(g.cell(0, 0, *p).unwrap().pe, 0.0);
        }
        let full: Vec<f64> = spec.float_bits.iter().map(|&b| g.cell(b, 0, 1.0).unwrap().pe).collect();
        assert!(full.windows(2).all(|w| w[0] <= w[1]), "{full:?}");
        for &b in &spec.float_bits {
            for &p in &spec.power_reduction {
                assert!(g.cell(b, 0, 1.0).unwrap().pe >= g.cell(b, 0, p).unwrap().pe);
            }
        }
        let again = sweep(
            &spec,
            &Topology::clos(),
            &DeviceParams::standard(),
            Modulation::ook(),
            9,
        )
        .unwrap();
        assert_eq!(g, again);
        assert!(g
            .to_csv()
            .starts_with("float_bits,int_bits,power_reduction_pct,pe_pct,feasible\n"));
    }

    #[test]
    fn sweep_rejects_bad_axes() {
        let mut spec = SweepSpec::new(Kernel::Saxpy);
        spec.float_bits = vec![8, 8];
        assert!(sweep(
            &spec,
            &Topology::clos(),
            &DeviceParams::standard(),
            Modulation::ook(),
            0
        )
        .is_err());
        spec.float_bits = vec![];
        assert!(sweep(
            &spec,
            &Topology::clos(),
            &DeviceParams::standard(),
            Modulation::ook(),
            0
        )
        .is_err());
    }

    fn grid_from(pes: &[f64], floats: &[u32], powers: &[f64]) -> SweepGrid {
        let mut cells = Vec::new();
        let mut it = pes.iter();
        for &f in floats {
            for &p in powers {
                let pe = *it.next().unwrap();
                cells.push(SweepCell {
                    float_bits: f,
                    int_bits: 0,
                    power_reduction: p,
                    pe,
                    feasible: pe <= 10.0,
                });
            }
        }
        SweepGrid {
            kernel: Kernel::Saxpy,
            float_bits_axis: floats.to_vec(),
            int_bits_axis: vec![0],
            power_reduction_axis: powers.to_vec(),
            threshold: 10.0,
            cells,
        }
    }

    #[test]
    fn selection_corners() {
        let g = grid_from(&[0.0, 0.0, 50.0, 50.0], &[0, 8], &[0.5, 1.0]);
        let s = select_policy(&g, 10.0);
        assert_eq!(s.policy.float_lsb_bits, 0);
        assert!(s.policy.is_exact());
        let g = grid_from(&[0.0; 4], &[0, 8], &[0.5, 1.0]);
        let s = select_policy(&g, 10.0);
        assert_eq!((s.policy.float_lsb_bits, s.policy.power_reduction), (8, 1.0));
        let g = grid_from(&[50.0; 4], &[0, 8], &[0.5, 1.0]);
        let s = select_policy(&g, 10.0);
        assert!(s.diagnostic.is_some() && s.policy.is_exact());
    }

    proptest! {
        #[test]
        fn selection_matches_brute_force(pes in proptest::collection::vec(0.0f64..20.0, 25)) {
            let floats = [0, 8, 16, 24, 32];
            let powers = [0.0, 0.5, 0.8, 0.9, 1.0];
            let g = grid_from(&pes, &floats, &powers);
            let s = select_policy(&g, 10.0);
            let mut best: Option<SweepCell> = None;
            for c in &g.cells {
                if c.pe > 10.0 {
                    continue;
                }
                let better = match &best {
                    None => true,
                    Some(b) => (c.float_bits, c.power_reduction) > (b.float_bits, b.power_reduction),
                };
                if better {
                    best = Some(*c);
                }
            }
            prop_assert_eq!(s.cell, best);
        }
    }
}
