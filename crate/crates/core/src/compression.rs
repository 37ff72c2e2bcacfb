//! Digital downlink payload: top-`s` sparsification followed by min/max
//! range-normalized stochastic quantization, with exact bit accounting.
//!
//! For a sparsified vector `x_s` with magnitudes in `[x_min, x_max]`, entry
//! `i` is sent as its sign and a level `l ∈ {0, …, q}` drawn by [`phi`], and
//! reconstructed as
//!
//! ```text
//! Q(x_i) = sign(x_i) · (x_min + (x_max − x_min) · l / q)
//! ```
//!
//! which is unbiased and never further than `(x_max − x_min)/q` from `x_i`.
//! The payload costs `64 + s(1 + log₂(q+1)) + log₂ C(d, s)` bits.

use rand::Rng;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Largest quantization level count the payload format can carry.
pub const MAX_Q: u32 = u32::MAX;

/// Bits spent on the two range scalars `x_min`, `x_max`.
pub const RANGE_HEADER_BITS: f64 = 64.0;

/// Indices of the `s` largest-magnitude entries (ascending) and the original
/// values at those indices. Ties in magnitude keep the lower index.
pub fn sparsify(x: &[f64], s: usize) -> Result<(Vec<usize>, Vec<f64>)> {
    if s == 0 || s > x.len() {
        return Err(Error::invalid(
            "s",
            format!("sparsity must be in [1, {}], got {s}", x.len()),
        ));
    }
    let mut order: Vec<usize> = (0..x.len()).collect();
    // sort_by is stable, so equal magnitudes stay in index order
    order.sort_by(|&a, &b| x[b].abs().total_cmp(&x[a].abs()));
    let mut support = order[..s].to_vec();
    support.sort_unstable();
    let values = support.iter().map(|&i| x[i]).collect();
    Ok((support, values))
}

/// Stochastic rounding of `x ∈ [0, 1]` onto the grid `{0, 1/q, …, 1}`.
///
/// Returns the integer level: `l` with probability `1 − (xq − l)` and `l + 1`
/// with probability `xq − l`, where `l = ⌊xq⌋` (clamped to `q − 1` at `x = 1`).
pub fn phi<R: Rng + ?Sized>(x: f64, q: u32, rng: &mut R) -> Result<u32> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::OutOfRange {
            value: x,
            lo: 0.0,
            hi: 1.0,
        });
    }
    if q == 0 {
        return Err(Error::invalid("q", "need at least one quantization level"));
    }
    let xq = x * q as f64;
    let lower = (xq.floor() as u32).min(q - 1);
    let p_up = xq - lower as f64;
    let u: f64 = rng.random();
    Ok(if u < p_up { lower + 1 } else { lower })
}

/// Signs, levels and range of a quantized value block.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedValues {
    /// `true` where the value is negative (`sign = −1`).
    pub negative: Vec<bool>,
    pub levels: Vec<u32>,
    pub x_min: f64,
    pub x_max: f64,
    pub q: u32,
}

/// Maps `|v|` into `[0, 1]` relative to the range. A degenerate range
/// (`x_max = x_min`) maps everything to 0.
fn normalize(v: f64, x_min: f64, x_max: f64) -> f64 {
    let range = x_max - x_min;
    if range > 0.0 {
        ((v.abs() - x_min) / range).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

fn reconstruct(negative: bool, level: u32, q: u32, x_min: f64, x_max: f64) -> f64 {
    let magnitude = x_min + (x_max - x_min) * (level as f64 / q as f64);
    if negative {
        -magnitude
    } else {
        magnitude
    }
}

/// Quantizes a dense block of values with `q` levels.
pub fn quantize<R: Rng + ?Sized>(values: &[f64], q: u32, rng: &mut R) -> Result<QuantizedValues> {
    if values.is_empty() {
        return Err(Error::Empty("nothing to quantize"));
    }
    if q == 0 {
        return Err(Error::invalid("q", "need at least one quantization level"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("values", "entries must be finite"));
    }
    let (x_min, x_max) = values.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), v| {
        (lo.min(v.abs()), hi.max(v.abs()))
    });
    let mut negative = Vec::with_capacity(values.len());
    let mut levels = Vec::with_capacity(values.len());
    for &v in values {
        negative.push(v < 0.0);
        levels.push(phi(normalize(v, x_min, x_max), q, rng)?);
    }
    Ok(QuantizedValues {
        negative,
        levels,
        x_min,
        x_max,
        q,
    })
}

impl QuantizedValues {
    /// Value represented by entry `i`.
    pub fn value(&self, i: usize) -> f64 {
        reconstruct(self.negative[i], self.levels[i], self.q, self.x_min, self.x_max)
    }
}

/// Sparse, quantized model update as broadcast on the digital downlink.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedUpdate {
    d: usize,
    q: u32,
    support: Vec<usize>,
    negative: Vec<bool>,
    levels: Vec<u32>,
    x_min: f64,
    x_max: f64,
}

impl CompressedUpdate {
    pub fn new(
        d: usize,
        support: Vec<usize>,
        negative: Vec<bool>,
        levels: Vec<u32>,
        x_min: f64,
        x_max: f64,
        q: u32,
    ) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::Empty("support set"));
        }
        if support.len() > d {
            return Err(Error::invalid(
                "support",
                format!("{} indices exceed d = {d}", support.len()),
            ));
        }
        Error::check_len("signs", support.len(), negative.len())?;
        Error::check_len("levels", support.len(), levels.len())?;
        if q == 0 {
            return Err(Error::invalid("q", "need at least one quantization level"));
        }
        if let Some(&bad) = support.iter().find(|&&i| i >= d) {
            return Err(Error::IndexOutOfBounds { index: bad, dim: d });
        }
        if support.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("support", "indices must be strictly increasing"));
        }
        if let Some(&l) = levels.iter().find(|&&l| l > q) {
            return Err(Error::invalid("levels", format!("level {l} exceeds q = {q}")));
        }
        if !(x_min.is_finite() && x_max.is_finite() && 0.0 <= x_min && x_min <= x_max) {
            return Err(Error::invalid(
                "range",
                format!("need 0 <= x_min <= x_max, got [{x_min}, {x_max}]"),
            ));
        }
        Ok(Self {
            d,
            q,
            support,
            negative,
            levels,
            x_min,
            x_max,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn s(&self) -> usize {
        self.support.len()
    }

    pub fn q(&self) -> u32 {
        self.q
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn negative(&self) -> &[bool] {
        &self.negative
    }

    pub fn levels(&self) -> &[u32] {
        &self.levels
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    /// Grid spacing `(x_max − x_min)/q`: the worst-case per-entry error.
    pub fn resolution(&self) -> f64 {
        (self.x_max - self.x_min) / self.q as f64
    }

    /// Bits this payload costs on the channel.
    pub fn bit_cost(&self) -> BitCost {
        bit_cost_unchecked(self.d, self.s(), self.q)
    }
}

/// Sparsifies `x` to `s` entries and quantizes them with `q` levels.
pub fn compress<R: Rng + ?Sized>(x: &[f64], s: usize, q: u32, rng: &mut R) -> Result<CompressedUpdate> {
    let (support, values) = sparsify(x, s)?;
    let qv = quantize(&values, q, rng)?;
    CompressedUpdate::new(x.len(), support, qv.negative, qv.levels, qv.x_min, qv.x_max, q)
}

/// Dense length-`d` reconstruction: zero off the support.
pub fn decompress(c: &CompressedUpdate) -> Vec<f64> {
    let mut out = vec![0.0; c.d];
    for (k, &i) in c.support.iter().enumerate() {
        out[i] = reconstruct(c.negative[k], c.levels[k], c.q, c.x_min, c.x_max);
    }
    out
}

/// Payload size in bits, kept as an exact real.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct BitCost(f64);

impl BitCost {
    pub fn bits(self) -> f64 {
        self.0
    }

    /// Integer bit count for conservative accounting.
    pub fn ceil(self) -> BitCost {
        BitCost(self.0.ceil())
    }
}

/// `log₂ C(d, s)`, via log-gamma.
pub fn log2_binomial(d: usize, s: usize) -> f64 {
    if s == 0 || s >= d {
        return 0.0;
    }
    let (n, k) = (d as f64, s as f64);
    (ln_gamma(n + 1.0) - ln_gamma(k + 1.0) - ln_gamma(n - k + 1.0)) / std::f64::consts::LN_2
}

fn bit_cost_unchecked(d: usize, s: usize, q: u32) -> BitCost {
    let s_f = s as f64;
    BitCost(RANGE_HEADER_BITS + s_f * (1.0 + (q as f64 + 1.0).log2()) + log2_binomial(d, s))
}

/// `64 + s(1 + log₂(q+1)) + log₂ C(d, s)`.
pub fn bit_cost(d: usize, s: usize, q: u32) -> Result<BitCost> {
    if s == 0 || s > d {
        return Err(Error::invalid("s", format!("sparsity must be in [1, {d}], got {s}")));
    }
    if q == 0 {
        return Err(Error::invalid("q", "need at least one quantization level"));
    }
    Ok(bit_cost_unchecked(d, s, q))
}

/// Largest `q ≥ 1` whose payload fits in `capacity_bits`, or `None` when even
/// `q = 1` does not fit. With `ceil_bits` the payload is charged its integer
/// bit count. The result saturates at [`MAX_Q`].
pub fn max_q_for_budget(d: usize, s: usize, capacity_bits: f64, ceil_bits: bool) -> Result<Option<u32>> {
    if !(capacity_bits.is_finite() && capacity_bits >= 0.0) {
        return Err(Error::invalid(
            "capacity_bits",
            format!("must be finite and >= 0, got {capacity_bits}"),
        ));
    }
    let cost = |q: u32| -> Result<f64> {
        let c = bit_cost(d, s, q)?;
        Ok(if ceil_bits { c.ceil().bits() } else { c.bits() })
    };
    if cost(1)? > capacity_bits {
        return Ok(None);
    }
    if cost(MAX_Q)? <= capacity_bits {
        return Ok(Some(MAX_Q));
    }
    // invert the closed form, then settle on the exact boundary
    let fixed = RANGE_HEADER_BITS + s as f64 + log2_binomial(d, s);
    let guess = (((capacity_bits - fixed) / s as f64).exp2() - 1.0).floor();
    let mut q = guess.clamp(1.0, MAX_Q as f64 - 1.0) as u32;
    while q > 1 && cost(q)? > capacity_bits {
        q -= 1;
    }
    while cost(q + 1)? <= capacity_bits {
        q += 1;
    }
    Ok(Some(q))
}

fn level_width(q: u32) -> u32 {
    32 - q.leading_zeros()
}

struct BitWriter {
    bytes: Vec<u8>,
    used: u32,
}

impl BitWriter {
    fn new() -> Self {
        Self {
            bytes: Vec::new(),
            used: 0,
        }
    }

    fn push(&mut self, value: u64, width: u32) {
        for b in 0..width {
            if self.used.is_multiple_of(8) {
                self.bytes.push(0);
            }
            if (value >> b) & 1 == 1 {
                *self.bytes.last_mut().unwrap() |= 1 << (self.used % 8);
            }
            self.used += 1;
        }
    }
}

struct BitReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl BitReader<'_> {
    fn take(&mut self, width: u32) -> Result<u64> {
        let mut v = 0u64;
        for b in 0..width {
            let byte = *self
                .bytes
                .get(self.pos / 8)
                .ok_or_else(|| Error::Format("bit field truncated".into()))?;
            if (byte >> (self.pos % 8)) & 1 == 1 {
                v |= 1 << b;
            }
            self.pos += 1;
        }
        Ok(v)
    }
}

fn read_u32(buf: &[u8], at: &mut usize) -> Result<u32> {
    let bytes = buf
        .get(*at..*at + 4)
        .ok_or_else(|| Error::Format("payload truncated".into()))?;
    *at += 4;
    Ok(u32::from_le_bytes(bytes.try_into().unwrap()))
}

fn read_f64(buf: &[u8], at: &mut usize) -> Result<f64> {
    let bytes = buf
        .get(*at..*at + 8)
        .ok_or_else(|| Error::Format("payload truncated".into()))?;
    *at += 8;
    Ok(f64::from_le_bytes(bytes.try_into().unwrap()))
}

impl CompressedUpdate {
    /// Little-endian debug framing:
    /// `d, s, q: u32 | x_min, x_max: f64 | support: s × u32 |
    ///  signs: s bits | levels: s × bitlen(q) bits`.
    /// The two bit fields are each packed LSB-first and padded to a byte.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(28 + 4 * self.s());
        out.extend_from_slice(&(self.d as u32).to_le_bytes());
        out.extend_from_slice(&(self.s() as u32).to_le_bytes());
        out.extend_from_slice(&self.q.to_le_bytes());
        out.extend_from_slice(&self.x_min.to_le_bytes());
        out.extend_from_slice(&self.x_max.to_le_bytes());
        for &i in &self.support {
            out.extend_from_slice(&(i as u32).to_le_bytes());
        }
        let mut signs = BitWriter::new();
        for &neg in &self.negative {
            signs.push(neg as u64, 1);
        }
        out.extend_from_slice(&signs.bytes);
        let width = level_width(self.q);
        let mut levels = BitWriter::new();
        for &l in &self.levels {
            levels.push(l as u64, width);
        }
        out.extend_from_slice(&levels.bytes);
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut at = 0;
        let d = read_u32(buf, &mut at)? as usize;
        let s = read_u32(buf, &mut at)? as usize;
        let q = read_u32(buf, &mut at)?;
        let x_min = read_f64(buf, &mut at)?;
        let x_max = read_f64(buf, &mut at)?;
        let mut support = Vec::with_capacity(s.min(buf.len()));
        for _ in 0..s {
            support.push(read_u32(buf, &mut at)? as usize);
        }
        let sign_bytes = s.div_ceil(8);
        let mut reader = BitReader {
            bytes: buf.get(at..).unwrap_or(&[]),
            pos: 0,
        };
        let mut negative = Vec::with_capacity(s);
        for _ in 0..s {
            negative.push(reader.take(1)? == 1);
        }
        at += sign_bytes;
        let width = level_width(q);
        let mut reader = BitReader {
            bytes: buf.get(at..).unwrap_or(&[]),
            pos: 0,
        };
        let mut levels = Vec::with_capacity(s);
        for _ in 0..s {
            levels.push(reader.take(width)? as u32);
        }
        at += (s * width as usize).div_ceil(8);
        if at != buf.len() {
            return Err(Error::Format(format!("{} trailing bytes", buf.len() - at)));
        }
        Self::new(d, support, negative, levels, x_min, x_max, q)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Purpose, SeededRng};
    use proptest::prelude::*;

    fn rng(i: u64) -> SeededRng {
        SeededRng::stream(99, Purpose::Test, i, 0)
    }

    /// Full sort by (magnitude desc, index asc), no shortcuts.
    fn brute_force_top(x: &[f64], s: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..x.len()).collect();
        for i in 0..idx.len() {
            for j in 0..idx.len() - 1 - i {
                let (a, b) = (idx[j], idx[j + 1]);
                let swap = x[a].abs() < x[b].abs() || (x[a].abs() == x[b].abs() && a > b);
                if swap {
                    idx.swap(j, j + 1);
                }
            }
        }
        let mut top = idx[..s].to_vec();
        top.sort();
        top
    }

    #[test]
    fn sparsify_examples() {
        let (sup, vals) = sparsify(&[3.0, -1.0, 0.5, 2.0], 2).unwrap();
        assert_eq!(sup, vec![0, 3]);
        assert_eq!(vals, vec![3.0, 2.0]);

        let x = [0.1, -0.2, 0.3];
        let (sup, vals) = sparsify(&x, 3).unwrap();
        assert_eq!(sup, vec![0, 1, 2]);
        assert_eq!(vals, x.to_vec());

        let (sup, _) = sparsify(&[1.0, 1.0, 1.0], 1).unwrap();
        assert_eq!(sup, vec![0]);
        assert_eq!(sup, brute_force_top(&[1.0, 1.0, 1.0], 1));

        assert!(sparsify(&x, 0).is_err());
        assert!(sparsify(&x, 4).is_err());
    }

    #[test]
    fn phi_two_point_distribution() {
        let mut r = rng(1);
        let n = 200_000;
        let ups = (0..n).filter(|_| phi(0.25, 2, &mut r).unwrap() == 1).count();
        // level 1 ↔ 0.5 with probability 0.5
        let p = ups as f64 / n as f64;
        assert!((p - 0.5).abs() < 3.0 * (0.25 / n as f64).sqrt() + 1e-9, "{p}");
        for _ in 0..1000 {
            assert!(phi(0.25, 2, &mut r).unwrap() <= 1);
            assert_eq!(phi(0.0, 7, &mut r).unwrap(), 0);
            assert_eq!(phi(1.0, 7, &mut r).unwrap(), 7);
            assert_eq!(phi(0.5, 2, &mut r).unwrap(), 1);
        }
        assert!(phi(1.5, 2, &mut r).is_err());
        assert!(phi(-0.1, 2, &mut r).is_err());
        assert!(phi(0.3, 0, &mut r).is_err());
    }

    #[test]
    fn phi_is_unbiased() {
        let mut r = rng(2);
        let n = 1_000_000;
        let q = 4;
        for x in [0.13, 0.5, 0.77, 0.999] {
            let mean = (0..n)
                .map(|_| phi(x, q, &mut r).unwrap() as f64 / q as f64)
                .sum::<f64>()
                / n as f64;
            // exact two-point variance
            let l = (x * q as f64).floor();
            let p = x * q as f64 - l;
            let sd = (p * (1.0 - p)).sqrt() / q as f64;
            assert!(
                (mean - x).abs() <= 3.0 * sd / (n as f64).sqrt() + 1e-12,
                "x={x} mean={mean}"
            );
        }
    }

    #[test]
    fn quantize_examples() {
        let qv = quantize(&[3.0, -3.0], 5, &mut rng(3)).unwrap();
        assert_eq!(qv.value(0), 3.0);
        assert_eq!(qv.value(1), -3.0);

        for i in 0..50 {
            let qv = quantize(&[1.0, 3.0], 1, &mut rng(100 + i)).unwrap();
            assert_eq!(qv.value(0), 1.0);
            assert_eq!(qv.value(1), 3.0);
        }
        assert!(quantize(&[], 3, &mut rng(4)).is_err());
        assert!(quantize(&[1.0], 0, &mut rng(4)).is_err());
    }

    #[test]
    fn expected_reconstruction_by_enumeration() {
        // E[Q(x)] over the two outcomes of phi equals x exactly (up to rounding)
        let values = [0.3, -1.7, 2.2, -0.05, 1.0];
        let (x_min, x_max) = (0.05, 2.2);
        for q in [1u32, 2, 3, 8, 100] {
            for &v in &values {
                let a = normalize(v, x_min, x_max);
                let lower = ((a * q as f64).floor() as u32).min(q - 1);
                let p = a * q as f64 - lower as f64;
                let lo = reconstruct(v < 0.0, lower, q, x_min, x_max);
                let hi = reconstruct(v < 0.0, lower + 1, q, x_min, x_max);
                let expected = (1.0 - p) * lo + p * hi;
                assert!((expected - v).abs() < 1e-12, "q={q} v={v} E={expected}");
                let bound = (x_max - x_min) / q as f64 * (1.0 + 1e-12);
                assert!((lo - v).abs() <= bound, "q={q} v={v} lo={lo} bound={bound}");
                assert!((hi - v).abs() <= bound, "q={q} v={v} hi={hi} bound={bound}");
            }
        }
    }

    #[test]
    fn decompress_examples() {
        let c = CompressedUpdate::new(3, vec![1], vec![true], vec![4], 1.0, 2.0, 4).unwrap();
        assert_eq!(decompress(&c), vec![0.0, -2.0, 0.0]);

        assert!(CompressedUpdate::new(3, vec![], vec![], vec![], 0.0, 0.0, 1).is_err());
        assert!(CompressedUpdate::new(3, vec![3], vec![false], vec![0], 0.0, 1.0, 1).is_err());
        assert!(CompressedUpdate::new(3, vec![1, 1], vec![false; 2], vec![0; 2], 0.0, 1.0, 1).is_err());
        assert!(CompressedUpdate::new(3, vec![1], vec![false], vec![2], 0.0, 1.0, 1).is_err());
        assert!(CompressedUpdate::new(3, vec![1], vec![false], vec![0], 2.0, 1.0, 1).is_err());
    }

    #[test]
    fn fine_quantization_round_trips() {
        let x = [0.31, -2.5, 0.0, 1.125, -0.75, 3.3];
        let c = compress(&x, 4, 1 << 31, &mut rng(5)).unwrap();
        let y = decompress(&c);
        let (support, _) = sparsify(&x, 4).unwrap();
        for i in 0..x.len() {
            if support.contains(&i) {
                assert!((y[i] - x[i]).abs() < 1e-9);
            } else {
                assert_eq!(y[i], 0.0);
            }
        }
    }

    #[test]
    fn bit_cost_examples() {
        let b = bit_cost(10, 2, 1).unwrap().bits();
        // log2(45) = 5.491853096329675 (mpmath, 30 digits)
        assert!((b - (68.0 + 5.491853096329675)).abs() < 1e-9, "{b}");
        assert!((b - 73.4919).abs() < 1e-4);
        assert_eq!(log2_binomial(7, 7), 0.0);
        assert_eq!(bit_cost(7, 7, 1).unwrap().bits(), 64.0 + 7.0 * 2.0);
        let mut prev = 0.0;
        for q in 1..200 {
            let c = bit_cost(50, 5, q).unwrap().bits();
            assert!(c > prev);
            prev = c;
        }
        assert!(bit_cost(5, 6, 1).is_err());
        assert!(bit_cost(5, 0, 1).is_err());
        assert_eq!(bit_cost(10, 2, 1).unwrap().ceil().bits(), 74.0);
        // not monotone in s near s = d: the last index is free
        assert!(bit_cost(500, 500, 1).unwrap().bits() < bit_cost(500, 499, 1).unwrap().bits());
    }

    #[test]
    fn max_q_examples() {
        let (d, s) = (100, 7);
        let c1 = bit_cost(d, s, 1).unwrap().bits();
        assert_eq!(max_q_for_budget(d, s, c1 - 1e-9, false).unwrap(), None);
        assert_eq!(max_q_for_budget(d, s, 0.0, false).unwrap(), None);
        assert_eq!(max_q_for_budget(d, s, c1, false).unwrap(), Some(1));
        let c5 = bit_cost(d, s, 5).unwrap().bits();
        assert_eq!(max_q_for_budget(d, s, c5, false).unwrap(), Some(5));
        assert!(max_q_for_budget(d, s, f64::INFINITY, false).is_err());
        assert!(max_q_for_budget(d, s, -1.0, false).is_err());
        assert_eq!(max_q_for_budget(d, s, 1e9, false).unwrap(), Some(MAX_Q));
    }

    #[test]
    fn max_q_matches_scan_oracle() {
        for (d, s) in [(10, 1), (10, 10), (64, 3), (1000, 20)] {
            // caps from just below q = 1 up to about 16 extra bits per entry
            let c1 = bit_cost(d, s, 1).unwrap().bits();
            for k in 0..400 {
                let cap = c1 - 2.0 + k as f64 * 0.0425 * s as f64;
                let mut scan = None;
                let mut q = 1u32;
                while bit_cost(d, s, q).unwrap().bits() <= cap {
                    scan = Some(q);
                    q += 1;
                }
                assert_eq!(
                    max_q_for_budget(d, s, cap, false).unwrap(),
                    scan,
                    "d={d} s={s} cap={cap}"
                );
            }
        }
    }

    #[test]
    fn serialization_layout() {
        let c = CompressedUpdate::new(
            300,
            vec![2, 9, 257],
            vec![true, false, true],
            vec![0, 5, 3],
            0.5,
            1.5,
            5,
        )
        .unwrap();
        let bytes = c.to_bytes();
        // header 28 + support 12 + signs 1 + levels ceil(9/8)=2
        assert_eq!(bytes.len(), 43);
        assert_eq!(&bytes[0..4], &300u32.to_le_bytes());
        assert_eq!(bytes[40], 0b101);
        // levels 0,5,3 with width 3, LSB first: 000 101 011
        assert_eq!(bytes[41], 0b1110_1000);
        assert_eq!(bytes[42], 0b0000_0000);
        assert_eq!(CompressedUpdate::from_bytes(&bytes).unwrap(), c);
        assert!(CompressedUpdate::from_bytes(&bytes[..42]).is_err());
        let mut longer = bytes.clone();
        longer.push(0);
        assert!(CompressedUpdate::from_bytes(&longer).is_err());
    }

    proptest! {
        #[test]
        fn quantization_error_is_bounded(
            values in prop::collection::vec(-100.0..100.0f64, 1..40),
            q in 1u32..64,
            seed in any::<u64>(),
        ) {
            let mut r = SeededRng::stream(seed, Purpose::Test, 0, 0);
            let qv = quantize(&values, q, &mut r).unwrap();
            let bound = (qv.x_max - qv.x_min) / q as f64;
            for (i, &v) in values.iter().enumerate() {
                prop_assert!((qv.value(i) - v).abs() <= bound);
                prop_assert!(qv.levels[i] <= q);
            }
        }

        #[test]
        fn decompress_is_zero_off_support(
            x in prop::collection::vec(-5.0..5.0f64, 1..50),
            frac in 0.0..1.0f64,
            q in 1u32..1000,
            seed in any::<u64>(),
        ) {
            let s = 1 + ((x.len() - 1) as f64 * frac) as usize;
            let c = compress(&x, s, q, &mut SeededRng::stream(seed, Purpose::Test, 1, 0)).unwrap();
            let y = decompress(&c);
            for (i, v) in y.iter().enumerate() {
                if !c.support().contains(&i) {
                    prop_assert_eq!(*v, 0.0);
                }
            }
            prop_assert_eq!(CompressedUpdate::from_bytes(&c.to_bytes()).unwrap(), c);
        }

        #[test]
        fn bit_cost_monotone(d in 1usize..500, a in 0.0..1.0f64, q in 1u32..10_000) {
            let s = 1 + ((d - 1) as f64 * a) as usize;
            let base = bit_cost(d, s, q).unwrap().bits();
            prop_assert!(bit_cost(d, s, q + 1).unwrap().bits() >= base);
            // the index term shrinks past s ≈ d/2; growth in s holds while
            // (s+1)/(d-s) <= 2(q+1)
            if s < d && (s + 1) as f64 <= 2.0 * (q as f64 + 1.0) * (d - s) as f64 {
                prop_assert!(bit_cost(d, s + 1, q).unwrap().bits() >= base);
            }
        }
    }
}
