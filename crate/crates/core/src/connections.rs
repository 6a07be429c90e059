//! Explicit Tukey connections between localisation, anti-localisation,
//! eventually-different and Yorioka covering systems, realised on finite
//! windows, together with the interval profiles `g_{c,h}` and `f_{b,g}`.
//!
//! Each `*_maps` function evaluates both halves of a connection on one pair
//! of inputs and reports whether the witness transfers, in the pointwise form
//! the proofs use: every index where the hypothesis holds must satisfy the
//! conclusion.

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::numeric::binomial;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConnError {
    #[error("block lengths must be positive (index {0})")]
    ZeroLength(usize),
    #[error("horizon {horizon} exceeds the covered range {covered}")]
    Horizon { horizon: usize, covered: String },
    #[error("parameters: {0}")]
    Params(String),
    #[error("slalom cell {index} invalid: {reason}")]
    Cell { index: usize, reason: String },
    #[error("binary string of length {have} is too short, need {need}")]
    ShortString { have: usize, need: usize },
    #[error("height precondition fails at entry {0}")]
    Height(usize),
    #[error("h * h' >= c at index {0}")]
    Crowded(usize),
    #[error("arena {0} too large to materialise (cap 12)")]
    ArenaCap(u64),
    #[error("value {value} out of range at index {index}")]
    Range { index: usize, value: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Transfer {
    Ok,
    Violation(usize),
}

/// A slalom: `cells[i] ⊆ 0..c[i]` with `|cells[i]| <= h[i]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SlalomJson")]
pub struct Slalom {
    pub c: Vec<u64>,
    pub h: Vec<u64>,
    pub cells: Vec<Vec<u64>>,
}

#[derive(Deserialize)]
struct SlalomJson {
    c: Vec<u64>,
    h: Vec<u64>,
    cells: Vec<Vec<u64>>,
}

impl TryFrom<SlalomJson> for Slalom {
    type Error = ConnError;
    fn try_from(j: SlalomJson) -> Result<Slalom, ConnError> {
        Slalom::new(j.c, j.h, j.cells)
    }
}

impl Slalom {
    pub fn new(c: Vec<u64>, h: Vec<u64>, mut cells: Vec<Vec<u64>>) -> Result<Slalom, ConnError> {
        if c.len() != h.len() || c.len() != cells.len() {
            return Err(ConnError::Params("c, h and cells must have equal length".into()));
        }
        for (i, cell) in cells.iter_mut().enumerate() {
            cell.sort_unstable();
            cell.dedup();
            if cell.len() as u64 > h[i] {
                return Err(ConnError::Cell { index: i, reason: format!("{} elements, cap {}", cell.len(), h[i]) });
            }
            if let Some(&v) = cell.iter().find(|&&v| v >= c[i]) {
                return Err(ConnError::Cell { index: i, reason: format!("{v} outside 0..{}", c[i]) });
            }
        }
        Ok(Slalom { c, h, cells })
    }

    pub fn empty(c: Vec<u64>, h: Vec<u64>) -> Slalom {
        let cells = vec![Vec::new(); c.len()];
        Slalom { c, h, cells }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Whether `y(i) ∈ S(i)` for every `i` in the window.
    pub fn localizes(&self, y: &[u64], window: std::ops::Range<usize>) -> bool {
        window.into_iter().all(|i| self.cells[i].contains(&y[i]))
    }

    /// Whether `y(i) ∉ S(i)` for every `i` in the window.
    pub fn anti_localized_by(&self, y: &[u64], window: std::ops::Range<usize>) -> bool {
        window.into_iter().all(|i| !self.cells[i].contains(&y[i]))
    }
}

pub type Bits = Vec<bool>;

pub fn parse_bits(s: &str) -> Option<Bits> {
    s.chars()
        .map(|ch| match ch {
            '0' => Some(false),
            '1' => Some(true),
            _ => None,
        })
        .collect()
}

pub fn show_bits(b: &[bool]) -> String {
    b.iter().map(|&x| if x { '1' } else { '0' }).collect()
}

/// Fixed-width big-endian binary code of `v`.
pub fn iota(v: u64, width: usize) -> Bits {
    (0..width).rev().map(|i| i < 64 && v >> i & 1 == 1).collect()
}

pub fn iota_inv(bits: &[bool]) -> u64 {
    bits.iter().fold(0, |a, &b| a << 1 | b as u64)
}

/// A finite sequence of binary strings `σ(k)`; `ht_σ(k) = |σ(k)|`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SigmaCover {
    pub entries: Vec<Bits>,
}

impl SigmaCover {
    pub fn heights(&self) -> Vec<usize> {
        self.entries.iter().map(Vec::len).collect()
    }
}

impl Serialize for SigmaCover {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct J {
            entries: Vec<String>,
        }
        J { entries: self.entries.iter().map(|e| show_bits(e)).collect() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for SigmaCover {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct J {
            entries: Vec<String>,
        }
        let j = J::deserialize(d)?;
        let entries = j
            .entries
            .iter()
            .map(|s| parse_bits(s).ok_or_else(|| serde::de::Error::custom(format!("not a binary string: {s:?}"))))
            .collect::<Result<_, _>>()?;
        Ok(SigmaCover { entries })
    }
}

/// Consecutive half-open blocks `[start, end)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntervalPartition {
    pub blocks: Vec<(u64, u64)>,
}

impl IntervalPartition {
    pub fn block_of(&self, k: u64) -> Option<usize> {
        self.blocks.iter().position(|&(s, e)| s <= k && k < e)
    }

    pub fn end(&self) -> u64 {
        self.blocks.last().map_or(0, |b| b.1)
    }
}

pub fn build_partition(lengths: &[u64]) -> Result<IntervalPartition, ConnError> {
    let mut start = 0u64;
    let mut blocks = Vec::with_capacity(lengths.len());
    for (i, &len) in lengths.iter().enumerate() {
        if len == 0 {
            return Err(ConnError::ZeroLength(i));
        }
        blocks.push((start, start + len));
        start += len;
    }
    Ok(IntervalPartition { blocks })
}

pub fn floor_log2(x: &BigUint) -> u64 {
    x.bits().saturating_sub(1)
}

pub fn ceil_log2(x: &BigUint) -> u64 {
    if x.is_zero() || x.is_one() {
        return 0;
    }
    let b = x.bits();
    if x.count_ones() == 1 {
        b - 1
    } else {
        b
    }
}

/// Repeats `value(n)` across a block of length `len(n)` until `horizon` entries exist.
fn blockwise(
    lens: &[BigUint],
    horizon: usize,
    mut value: impl FnMut(usize) -> u64,
) -> Result<Vec<u64>, ConnError> {
    let mut out = Vec::with_capacity(horizon);
    for (n, len) in lens.iter().enumerate() {
        if out.len() >= horizon {
            break;
        }
        if len.is_zero() {
            return Err(ConnError::ZeroLength(n));
        }
        let v = value(n);
        let room = horizon - out.len();
        let take = len.to_usize().map_or(room, |l| l.min(room));
        out.extend(std::iter::repeat_n(v, take));
    }
    if out.len() < horizon {
        return Err(ConnError::Horizon { horizon, covered: out.len().to_string() });
    }
    Ok(out)
}

/// `g_{c,h}(k) = ⌊log₂ c(n)⌋` for `k ∈ I_n`, `|I_n| = h(n)`.
pub fn gch_profile(c: &[BigUint], h: &[BigUint], horizon: usize) -> Result<Vec<u64>, ConnError> {
    if c.len() != h.len() {
        return Err(ConnError::Params("c and h differ in length".into()));
    }
    if let Some(n) = c.iter().position(|x| *x < BigUint::from(2u32)) {
        return Err(ConnError::Params(format!("c({n}) < 2")));
    }
    blockwise(h, horizon, |n| floor_log2(&c[n]))
}

/// `f_{b,g}(k) = Σ_{ℓ<=n} ⌈log₂ b(ℓ)⌉` for `k ∈ J_n`, `|J_n| = g(n)`.
pub fn fbg_profile(b: &[BigUint], g: &[BigUint], horizon: usize) -> Result<Vec<u64>, ConnError> {
    if b.len() != g.len() {
        return Err(ConnError::Params("b and g differ in length".into()));
    }
    if let Some(n) = b.iter().position(|x| *x < BigUint::from(2u32)) {
        return Err(ConnError::Params(format!("b({n}) < 2")));
    }
    let sums: Vec<u64> = b.iter().scan(0u64, |acc, x| {
        *acc += ceil_log2(x);
        Some(*acc)
    }).collect();
    blockwise(g, horizon, |n| sums[n])
}

fn check_positive(name: &str, v: &[u64], min: u64) -> Result<(), ConnError> {
    match v.iter().position(|&x| x < min) {
        Some(i) => Err(ConnError::Params(format!("{name}({i}) < {min}"))),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct YoriokaAntiDualOut {
    pub f_image: Vec<u64>,
    pub g_image: SigmaCover,
    pub transfer: Transfer,
}

/// Yorioka covering into the dual of anti-localisation.
///
/// `F(y)(n) = ι_n(y↾⌊log₂ c(n)⌋)`; `G(S) = σ_S` where the `j`-th element of
/// `S(n)` is decoded into `σ_S(k)` for the `j`-th `k ∈ I_n`, padding with zero
/// strings.
pub fn yorioka_into_anti_dual_maps(c: &[u64], h: &[u64], y: &[bool], s: &Slalom) -> Result<YoriokaAntiDualOut, ConnError> {
    check_positive("c", c, 2)?;
    check_positive("h", h, 1)?;
    if s.c != c || s.h != h {
        return Err(ConnError::Params("slalom parameters differ from (c, h)".into()));
    }
    let widths: Vec<usize> = c.iter().map(|&x| 63 - x.leading_zeros() as usize).collect();
    let need = widths.iter().copied().max().unwrap_or(0);
    if y.len() < need {
        return Err(ConnError::ShortString { have: y.len(), need });
    }
    let part = build_partition(h)?;
    let f_image: Vec<u64> = widths.iter().map(|&w| iota_inv(&y[..w])).collect();
    let mut entries = Vec::new();
    for (n, &(start, end)) in part.blocks.iter().enumerate() {
        let w = widths[n];
        for k in start..end {
            let j = (k - start) as usize;
            let entry = match s.cells[n].get(j) {
                Some(&m) if m < 1u64 << w => iota(m, w),
                _ => vec![false; w],
            };
            entries.push(entry);
        }
    }
    let sigma = SigmaCover { entries };
    let mut transfer = Transfer::Ok;
    for (n, &(start, end)) in part.blocks.iter().enumerate() {
        if s.cells[n].contains(&f_image[n]) {
            let caught = (start..end).any(|k| {
                let e = &sigma.entries[k as usize];
                e.len() <= y.len() && y[..e.len()] == e[..]
            });
            if !caught {
                transfer = Transfer::Violation(n);
                break;
            }
        }
    }
    Ok(YoriokaAntiDualOut { f_image, g_image: sigma, transfer })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AntiDualYoriokaOut {
    #[serde(serialize_with = "ser_bits")]
    pub f_image: Bits,
    pub g_image: Slalom,
    pub transfer: Transfer,
}

fn ser_bits<S: serde::Serializer>(b: &Bits, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&show_bits(b))
}

/// Anti-localisation dual into Yorioka covering.
///
/// `F(y)` concatenates fixed-width codes of `y(n)`; `G(X)(n)` collects the
/// values coded by `σ_X(k)↾I_n` over `k ∈ J_n`.
pub fn anti_dual_into_yorioka_maps(b: &[u64], g: &[u64], y: &[u64], x: &SigmaCover) -> Result<AntiDualYoriokaOut, ConnError> {
    check_positive("b", b, 2)?;
    check_positive("g", g, 1)?;
    if y.len() != b.len() {
        return Err(ConnError::Params("y must have one value per index".into()));
    }
    for (i, (&v, &bi)) in y.iter().zip(b).enumerate() {
        if v >= bi {
            return Err(ConnError::Range { index: i, value: v });
        }
    }
    let widths: Vec<u64> = b.iter().map(|&v| ceil_log2(&BigUint::from(v))).collect();
    let bit_part = build_partition(&widths)?;
    let j_part = build_partition(g)?;
    if x.entries.len() as u64 != j_part.end() {
        return Err(ConnError::Params(format!("cover needs {} entries", j_part.end())));
    }
    // ht_X >= f_{b,g} on the window
    for (n, &(start, end)) in j_part.blocks.iter().enumerate() {
        for k in start..end {
            if (x.entries[k as usize].len() as u64) < bit_part.blocks[n].1 {
                return Err(ConnError::Height(k as usize));
            }
        }
    }
    let f_image: Bits = y.iter().zip(&widths).flat_map(|(&v, &w)| iota(v, w as usize)).collect();
    let mut cells = vec![Vec::new(); b.len()];
    for (n, &(start, end)) in j_part.blocks.iter().enumerate() {
        let (lo, hi) = bit_part.blocks[n];
        for k in start..end {
            let v = iota_inv(&x.entries[k as usize][lo as usize..hi as usize]);
            if v < b[n] {
                cells[n].push(v);
            }
        }
    }
    let g_image = Slalom::new(b.to_vec(), g.to_vec(), cells)?;
    let mut transfer = Transfer::Ok;
    'outer: for (n, &(start, end)) in j_part.blocks.iter().enumerate() {
        for k in start..end {
            let e = &x.entries[k as usize];
            let prefix = e.len() <= f_image.len() && f_image[..e.len()] == e[..];
            if prefix && !g_image.cells[n].contains(&y[n]) {
                transfer = Transfer::Violation(k as usize);
                break 'outer;
            }
        }
    }
    Ok(AntiDualYoriokaOut { f_image, g_image, transfer })
}

/// Bijection between the nonempty subsets of `0..c` of size at most `h` and
/// the codes `0..count()`. Codes run by size, then colexicographically.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellCode {
    pub c: u64,
    pub h: u64,
}

impl CellCode {
    pub fn new(c: u64, h: u64) -> CellCode {
        assert!(c <= 120, "cell codes need c <= 120");
        CellCode { c, h: h.min(c) }
    }

    fn binom(n: u64, k: u64) -> u64 {
        binomial(n, k).to_u64().expect("cell count fits in u64")
    }

    fn offset(&self, size: u64) -> u64 {
        (1..size).map(|j| Self::binom(self.c, j)).sum()
    }

    /// `|[c]^{<=h} \ {∅}|`.
    pub fn count(&self) -> u64 {
        self.offset(self.h + 1)
    }

    pub fn encode(&self, set: &[u64]) -> Option<u64> {
        let mut s = set.to_vec();
        s.sort_unstable();
        s.dedup();
        if s.is_empty() || s.len() as u64 > self.h || s.iter().any(|&v| v >= self.c) {
            return None;
        }
        let colex: u64 = s.iter().enumerate().map(|(i, &v)| Self::binom(v, i as u64 + 1)).sum();
        Some(self.offset(s.len() as u64) + colex)
    }

    pub fn decode(&self, code: u64) -> Option<Vec<u64>> {
        let mut size = 1;
        let mut rest = code;
        loop {
            if size > self.h {
                return None;
            }
            let block = Self::binom(self.c, size);
            if rest < block {
                break;
            }
            rest -= block;
            size += 1;
        }
        let mut out = Vec::with_capacity(size as usize);
        let mut top = self.c;
        for i in (1..=size).rev() {
            let mut v = top - 1;
            while Self::binom(v, i) > rest {
                v -= 1;
            }
            rest -= Self::binom(v, i);
            out.push(v);
            top = v;
        }
        out.reverse();
        Some(out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AntiLocalOut {
    pub f_image: Vec<Vec<u64>>,
    pub f_codes: Vec<u64>,
    pub g_image: Vec<u64>,
    pub transfer: Transfer,
}

/// Anti-localisation into localisation.
///
/// `F(S)(i) = S(i)`, or `{0}` when `S(i)` is empty; `G(φ)(i)` is the least
/// element of `c(i)` outside every cell coded in `φ(i)`. The codes of `φ` are
/// those of [`CellCode`].
pub fn anti_into_local_maps(c: &[u64], h: &[u64], h2: &[u64], s: &Slalom, phi: &Slalom) -> Result<AntiLocalOut, ConnError> {
    check_positive("h", h, 1)?;
    if s.c != c || s.h != h || h2.len() != c.len() || phi.h != h2 {
        return Err(ConnError::Params("parameter lengths or slalom parameters disagree".into()));
    }
    for i in 0..c.len() {
        if h[i] * h2[i] >= c[i] {
            return Err(ConnError::Crowded(i));
        }
        if phi.c[i] < CellCode::new(c[i], h[i]).count() {
            return Err(ConnError::Params(format!("c'({i}) smaller than the number of nonempty cells")));
        }
    }
    let f_image: Vec<Vec<u64>> =
        s.cells.iter().map(|cell| if cell.is_empty() { vec![0] } else { cell.clone() }).collect();
    let f_codes: Vec<u64> =
        f_image.iter().enumerate().map(|(i, cell)| CellCode::new(c[i], h[i]).encode(cell).expect("valid cell")).collect();
    let g_image: Vec<u64> = (0..c.len()).map(|i| least_outside(c[i], h[i], &phi.cells[i])).collect();
    let transfer = (0..c.len())
        .find(|&i| phi.cells[i].contains(&f_codes[i]) && s.cells[i].contains(&g_image[i]))
        .map_or(Transfer::Ok, Transfer::Violation);
    Ok(AntiLocalOut { f_image, f_codes, g_image, transfer })
}

/// Least element of `0..c` outside the union of the cells coded in `codes`.
pub fn least_outside(c: u64, h: u64, codes: &[u64]) -> u64 {
    let code = CellCode::new(c, h);
    let used: std::collections::BTreeSet<u64> = codes.iter().filter_map(|&v| code.decode(v)).flatten().collect();
    (0..c).find(|v| !used.contains(v)).expect("h * h' < c leaves room")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LocalAntiOut {
    pub f_image: Slalom,
    pub g_image: Vec<Vec<Vec<u64>>>,
    pub transfer: Transfer,
}

/// Localisation into anti-localisation: `F(S) = S`,
/// `G(y)(i) = [c(i) \ {y(i)}]^{<=h(i)} \ {∅}`.
pub fn local_into_anti_maps(c: &[u64], h: &[u64], s: &[Vec<u64>], y: &[u64]) -> Result<LocalAntiOut, ConnError> {
    check_positive("h", h, 1)?;
    check_positive("c", c, 2)?;
    if s.len() != c.len() || y.len() != c.len() || h.len() != c.len() {
        return Err(ConnError::Params("lengths disagree".into()));
    }
    if let Some(&big) = c.iter().find(|&&x| x > 12) {
        return Err(ConnError::ArenaCap(big));
    }
    let f_image = Slalom::new(c.to_vec(), h.to_vec(), s.to_vec())?;
    if let Some(i) = f_image.cells.iter().position(Vec::is_empty) {
        return Err(ConnError::Cell { index: i, reason: "cells must be nonempty".into() });
    }
    let g_image: Vec<Vec<Vec<u64>>> = (0..c.len())
        .map(|i| {
            (1u64..1 << c[i])
                .filter(|m| m >> y[i] & 1 == 0 && m.count_ones() as u64 <= h[i])
                .map(|m| (0..c[i]).filter(|b| m >> b & 1 == 1).collect())
                .collect()
        })
        .collect();
    let transfer = (0..c.len())
        .find(|&i| !f_image.cells[i].contains(&y[i]) && !g_image[i].contains(&f_image.cells[i]))
        .map_or(Transfer::Ok, Transfer::Violation);
    Ok(LocalAntiOut { f_image, g_image, transfer })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EdOut {
    pub d: Vec<u64>,
    pub f_image: Slalom,
    pub g_image: Vec<u64>,
    pub transfer: Transfer,
}

/// Eventually different reals into anti-localisation, through the partition
/// of `c(i)` into `d(i) = ⌈c(i)/h'(i)⌉` consecutive blocks of size `h'(i) = max(h(i), 1)`.
pub fn ed_maps(c: &[u64], h: &[u64], x: &[u64], y: &[u64]) -> Result<EdOut, ConnError> {
    check_positive("c", c, 1)?;
    if h.len() != c.len() || x.len() != c.len() || y.len() != c.len() {
        return Err(ConnError::Params("lengths disagree".into()));
    }
    let hp: Vec<u64> = h.iter().map(|&v| v.max(1)).collect();
    let d: Vec<u64> = c.iter().zip(&hp).map(|(&ci, &hi)| ci.div_ceil(hi)).collect();
    for i in 0..c.len() {
        if x[i] >= d[i] {
            return Err(ConnError::Range { index: i, value: x[i] });
        }
        if y[i] >= c[i] {
            return Err(ConnError::Range { index: i, value: y[i] });
        }
    }
    let cells = (0..c.len()).map(|i| (x[i] * hp[i]..((x[i] + 1) * hp[i]).min(c[i])).collect()).collect();
    let f_image = Slalom::new(c.to_vec(), hp.clone(), cells)?;
    let g_image: Vec<u64> = (0..c.len()).map(|i| y[i] / hp[i]).collect();
    let transfer = (0..c.len())
        .find(|&i| !f_image.cells[i].contains(&y[i]) && g_image[i] == x[i])
        .map_or(Transfer::Ok, Transfer::Violation);
    Ok(EdOut { d, f_image, g_image, transfer })
}

/// `∏_{i ∈ window} (1 - |S(i)|/c(i))`.
pub fn escape_measure(s: &Slalom, window: std::ops::Range<usize>) -> BigRational {
    window.fold(BigRational::one(), |acc, i| {
        let c = BigRational::from_integer(s.c[i].into());
        let k = BigRational::from_integer((s.cells[i].len() as u64).into());
        acc * (BigRational::one() - k / c)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;
    use proptest::prelude::*;

    fn big(v: &[u64]) -> Vec<BigUint> {
        v.iter().map(|&x| BigUint::from(x)).collect()
    }

    #[test]
    fn partitions() {
        assert_eq!(build_partition(&[2, 3]).unwrap().blocks, vec![(0, 2), (2, 5)]);
        assert_eq!(build_partition(&[1, 1, 1]).unwrap().blocks, vec![(0, 1), (1, 2), (2, 3)]);
        assert_eq!(build_partition(&[256, 65536]).unwrap().blocks, vec![(0, 256), (256, 65792)]);
        assert_eq!(build_partition(&[1, 0]), Err(ConnError::ZeroLength(1)));
    }

    #[test]
    fn profiles() {
        assert_eq!(gch_profile(&big(&[8, 16]), &big(&[1, 2]), 3).unwrap(), vec![3, 4, 4]);
        assert_eq!(gch_profile(&big(&[2; 4]), &big(&[1; 4]), 4).unwrap(), vec![1; 4]);
        assert_eq!(gch_profile(&big(&[1024]), &big(&[3]), 3).unwrap(), vec![10; 3]);
        assert_eq!(fbg_profile(&big(&[4, 8]), &big(&[1, 2]), 3).unwrap(), vec![2, 5, 5]);
        assert_eq!(fbg_profile(&big(&[2; 5]), &big(&[1; 5]), 5).unwrap(), vec![1, 2, 3, 4, 5]);
        let b = vec![BigUint::one() << 65540usize];
        let f = fbg_profile(&b, &big(&[65536]), 65536).unwrap();
        assert!(f.len() == 65536 && f.iter().all(|&v| v == 65540));
        assert!(matches!(gch_profile(&big(&[8]), &big(&[2]), 3), Err(ConnError::Horizon { .. })));
    }

    #[test]
    fn encodings() {
        assert_eq!(iota_inv(&parse_bits("101").unwrap()), 5);
        assert_eq!(show_bits(&iota(1, 2)), "01");
    }

    #[test]
    fn yorioka_into_anti_dual_exhaustive() {
        let (c, h) = (vec![8, 8], vec![1, 1]);
        assert_eq!(gch_profile(&big(&c), &big(&h), 2).unwrap(), vec![3, 3]);
        for yv in 0..64u64 {
            let y = iota(yv, 6);
            for s0 in 0..9u64 {
                for s1 in 0..9u64 {
                    let cell = |v: u64| if v == 8 { vec![] } else { vec![v] };
                    let s = Slalom::new(c.clone(), h.clone(), vec![cell(s0), cell(s1)]).unwrap();
                    assert_eq!(yorioka_into_anti_dual_maps(&c, &h, &y, &s).unwrap().transfer, Transfer::Ok);
                }
            }
        }
        let empty = Slalom::empty(c.clone(), h.clone());
        assert_eq!(yorioka_into_anti_dual_maps(&c, &h, &[true; 3], &empty).unwrap().transfer, Transfer::Ok);
        assert!(matches!(yorioka_into_anti_dual_maps(&c, &h, &[true; 2], &empty), Err(ConnError::ShortString { .. })));
    }

    #[test]
    fn anti_dual_into_yorioka_single_entry_covers() {
        let (b, g) = (vec![4u64, 4], vec![1u64, 1]);
        // single-entry covers: one informative string, the rest all-zero of full height
        for y0 in 0..4 {
            for y1 in 0..4 {
                for k in 0..2usize {
                    for len in 2..=4usize {
                        for v in 0..1u64 << len {
                            let mut entries = vec![vec![false; 4]; 2];
                            let need = if k == 0 { 2 } else { 4 };
                            if len < need {
                                continue;
                            }
                            entries[k] = iota(v, len);
                            let x = SigmaCover { entries };
                            let out = anti_dual_into_yorioka_maps(&b, &g, &[y0, y1], &x).unwrap();
                            assert_eq!(out.transfer, Transfer::Ok);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn anti_dual_into_yorioka_height_precondition() {
        let x = SigmaCover { entries: vec![vec![false; 2], vec![false; 3]] };
        assert_eq!(anti_dual_into_yorioka_maps(&[4, 4], &[1, 1], &[0, 0], &x), Err(ConnError::Height(1)));
    }

    #[test]
    fn cell_codes_are_a_bijection() {
        for c in 1..=9 {
            for h in 1..=c {
                let code = CellCode::new(c, h);
                let mut seen = 0;
                for m in 1u64..1 << c {
                    if m.count_ones() as u64 <= h {
                        let set: Vec<u64> = (0..c).filter(|b| m >> b & 1 == 1).collect();
                        let e = code.encode(&set).unwrap();
                        assert!(e < code.count());
                        assert_eq!(code.decode(e).unwrap(), set);
                        seen += 1;
                    }
                }
                assert_eq!(seen, code.count());
                assert_eq!(code.decode(code.count()), None);
            }
        }
    }

    #[test]
    fn anti_into_local_exhaustive() {
        let (c, h, h2) = (vec![5u64], vec![2u64], vec![1u64]);
        let count = CellCode::new(5, 2).count();
        assert_eq!(count, 15);
        let cells: Vec<Vec<u64>> = (0u64..1 << 5).filter(|m| m.count_ones() <= 2).map(|m| (0..5).filter(|b| m >> b & 1 == 1).collect()).collect();
        for s in &cells {
            let s = Slalom::new(c.clone(), h.clone(), vec![s.clone()]).unwrap();
            for p in 0..=count {
                let phi_cell = if p == count { vec![] } else { vec![p] };
                let phi = Slalom::new(vec![count], h2.clone(), vec![phi_cell]).unwrap();
                assert_eq!(anti_into_local_maps(&c, &h, &h2, &s, &phi).unwrap().transfer, Transfer::Ok);
            }
        }
        let s = Slalom::empty(c.clone(), h.clone());
        let phi = Slalom::empty(vec![count], h2.clone());
        let out = anti_into_local_maps(&c, &h, &h2, &s, &phi).unwrap();
        assert_eq!((out.f_image[0].clone(), out.g_image[0]), (vec![0], 0));
        assert_eq!(anti_into_local_maps(&c, &h, &[3], &s, &Slalom::empty(vec![count], vec![3])), Err(ConnError::Crowded(0)));
    }

    #[test]
    fn local_into_anti_exhaustive() {
        let (c, h) = (vec![4u64], vec![2u64]);
        let cells: Vec<Vec<u64>> = (1u64..16).filter(|m| m.count_ones() <= 2).map(|m| (0..4).filter(|b| m >> b & 1 == 1).collect()).collect();
        for s in &cells {
            for y in 0..4 {
                let out = local_into_anti_maps(&c, &h, std::slice::from_ref(s), &[y]).unwrap();
                assert_eq!(out.transfer, Transfer::Ok);
                assert_eq!(out.g_image[0].len(), 6);
            }
        }
        assert_eq!(local_into_anti_maps(&[13], &[1], &[vec![0]], &[0]), Err(ConnError::ArenaCap(13)));
    }

    #[test]
    fn ed_exhaustive() {
        let out = ed_maps(&[6], &[2], &[1], &[0]).unwrap();
        assert_eq!(out.d, vec![3]);
        assert_eq!(out.f_image.cells, vec![vec![2, 3]]);
        for x in 0..3 {
            for y in 0..6 {
                assert_eq!(ed_maps(&[6], &[2], &[x], &[y]).unwrap().transfer, Transfer::Ok);
            }
        }
        assert!(ed_maps(&[6], &[2], &[3], &[0]).is_err());
    }

    #[test]
    fn escape_measures() {
        let r = |n: i64, d: i64| BigRational::new(BigInt::from(n), BigInt::from(d));
        let s = Slalom::empty(vec![4; 3], vec![1; 3]);
        assert_eq!(escape_measure(&s, 0..3), r(1, 1));
        let s = Slalom::new(vec![4], vec![2], vec![vec![0, 1]]).unwrap();
        assert_eq!(escape_measure(&s, 0..1), r(1, 2));
        let s = Slalom::new(vec![4; 3], vec![1; 3], vec![vec![0]; 3]).unwrap();
        assert_eq!(escape_measure(&s, 0..3), r(27, 64));
    }

    #[test]
    fn json_forms() {
        let s = Slalom::new(vec![4], vec![2], vec![vec![1, 0]]).unwrap();
        let j = serde_json::to_value(&s).unwrap();
        assert_eq!(j, serde_json::json!({"c":[4],"h":[2],"cells":[[0,1]]}));
        assert!(serde_json::from_str::<Slalom>(r#"{"c":[4],"h":[1],"cells":[[0,1]]}"#).is_err());
        let x: SigmaCover = serde_json::from_str(r#"{"entries":["0101",""]}"#).unwrap();
        assert_eq!(x.heights(), vec![4, 0]);
        assert_eq!(serde_json::to_value(&x).unwrap(), serde_json::json!({"entries":["0101",""]}));
    }

    fn slalom() -> impl Strategy<Value = Slalom> {
        proptest::collection::vec((1u64..6, 0u64..64), 1..7).prop_map(|v| {
            let c: Vec<u64> = v.iter().map(|p| p.0).collect();
            let cells: Vec<Vec<u64>> = v.iter().map(|&(ci, m)| (0..ci).filter(|b| m >> b & 1 == 1).collect()).collect();
            let h = c.clone();
            Slalom::new(c, h, cells).unwrap()
        })
    }

    proptest! {
        #[test]
        fn escape_measure_shrinks_and_multiplies(s in slalom(), cut in 0usize..8) {
            let n = s.len();
            let cut = cut.min(n);
            let whole = escape_measure(&s, 0..n);
            prop_assert_eq!(whole.clone(), escape_measure(&s, 0..cut) * escape_measure(&s, cut..n));
            for m in 0..n {
                prop_assert!(escape_measure(&s, 0..m + 1) <= escape_measure(&s, 0..m));
            }
        }

        #[test]
        fn profiles_monotone(mut c in proptest::collection::vec(2u64..5000, 1..6), h in proptest::collection::vec(1u64..4, 6)) {
            c.sort_unstable();
            let h = &h[..c.len()];
            let total: u64 = h.iter().sum();
            let gp = gch_profile(&big(&c), &big(h), total as usize).unwrap();
            prop_assert!(gp.windows(2).all(|w| w[0] <= w[1]));
            let fp = fbg_profile(&big(&c), &big(h), total as usize).unwrap();
            prop_assert!(fp.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}
