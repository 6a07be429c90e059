//! Exact naturals, subset counts and rigorous iterated-exponential bounds.
//!
//! A [`LogTower`] encloses a value `v` as `E^h(low) <= v <= E^h(high)` with
//! `E(x) = 2^x`. All rounding is directed, so every `Less`, `Equal` or
//! `Greater` answer from [`tower_cmp`] is a theorem about the exact values.
//!
//! [`Expr`] trees carry the recurrences of the family construction. They are
//! shared (`Arc`), evaluated exactly when the result is small, and otherwise
//! enclosed by towers. [`Certifier`] decides inequalities between expressions,
//! falling back on monotonicity rules when the towers cannot separate two
//! quantities that differ by a negligible amount (such as `x` and `x + 1`).

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde_json::Value;

pub type ExactNat = BigUint;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NumericError {
    #[error("tower height {height} exceeds the cap {cap}")]
    HeightCap { height: u32, cap: u32 },
    #[error("bound not representable: {0}")]
    Domain(String),
    #[error("malformed expression: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CountMode {
    Exact,
    PowerBound,
}

/// `|[m]^{<=k}|` in exact mode, `m^k` in power-bound mode.
///
/// The exact sum is materialised, so `m` and `k` must be of a size whose
/// answer fits in memory.
pub fn subset_count(m: &ExactNat, k: &ExactNat, mode: CountMode) -> ExactNat {
    match mode {
        CountMode::PowerBound => {
            let k = k.to_u32().expect("exponent of the power bound fits in u32");
            num_traits::pow(m.clone(), k as usize)
        }
        CountMode::Exact => {
            if k >= m {
                let m = m.to_usize().expect("arena size fits in usize");
                return BigUint::one() << m;
            }
            let k = k.to_u64().expect("k < m fits in u64");
            let mut term = BigUint::one();
            let mut total = BigUint::one();
            for i in 0..k {
                term = term * (m - BigUint::from(i)) / BigUint::from(i + 1);
                total += &term;
            }
            total
        }
    }
}

/// Binomial coefficient for small arguments.
pub fn binomial(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc = acc * BigUint::from(n - i) / BigUint::from(i + 1);
    }
    acc
}

/// Mantissa precision and the tower height cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Precision {
    /// Significant bits kept in rounded mantissas and fractional bits of logarithms.
    pub mantissa_bits: u32,
    pub height_cap: u32,
}

impl Default for Precision {
    fn default() -> Self {
        Precision { mantissa_bits: 160, height_cap: 64 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dir {
    Down,
    Up,
}

impl Dir {
    fn flip(self) -> Dir {
        match self {
            Dir::Down => Dir::Up,
            Dir::Up => Dir::Down,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum TowerOrdering {
    Less,
    Equal,
    Greater,
    Unknown,
}

impl TowerOrdering {
    pub fn reverse(self) -> TowerOrdering {
        match self {
            TowerOrdering::Less => TowerOrdering::Greater,
            TowerOrdering::Greater => TowerOrdering::Less,
            o => o,
        }
    }
}

/// One bound `E^height(m)`.
#[derive(Debug, Clone, PartialEq)]
struct Point {
    h: u32,
    m: BigRational,
}

impl Point {
    fn int(n: impl Into<BigInt>) -> Point {
        Point { h: 0, m: BigRational::from_integer(n.into()) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogTower {
    pub height: u32,
    pub low: BigRational,
    pub high: BigRational,
}

impl LogTower {
    pub fn new(height: u32, low: BigRational, high: BigRational) -> LogTower {
        assert!(low <= high, "LogTower needs low <= high");
        LogTower { height, low, high }
    }

    pub fn exact(n: &BigUint) -> LogTower {
        let m = BigRational::from_integer(BigInt::from(n.clone()));
        LogTower { height: 0, low: m.clone(), high: m }
    }

    pub fn is_point(&self) -> bool {
        self.low == self.high
    }

    fn low_point(&self) -> Point {
        Point { h: self.height, m: self.low.clone() }
    }

    fn high_point(&self) -> Point {
        Point { h: self.height, m: self.high.clone() }
    }
}

impl fmt::Display for LogTower {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "E^{}[{}, {}]", self.height, self.low, self.high)
    }
}

impl serde::Serialize for LogTower {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("LogTower", 3)?;
        st.serialize_field("height", &self.height)?;
        st.serialize_field("low", &rat_string(&self.low))?;
        st.serialize_field("high", &rat_string(&self.high))?;
        st.end()
    }
}

pub fn rat_string(x: &BigRational) -> String {
    if x.is_integer() {
        x.numer().to_string()
    } else {
        format!("{}/{}", x.numer(), x.denom())
    }
}

pub fn parse_rat(s: &str) -> Option<BigRational> {
    match s.split_once('/') {
        Some((n, d)) => {
            let n: BigInt = n.trim().parse().ok()?;
            let d: BigInt = d.trim().parse().ok()?;
            if d.is_zero() {
                None
            } else {
                Some(BigRational::new(n, d))
            }
        }
        None => s.trim().parse::<BigInt>().ok().map(BigRational::from_integer),
    }
}

fn pow2(e: i64) -> BigRational {
    if e >= 0 {
        BigRational::from_integer(BigInt::one() << e as usize)
    } else {
        BigRational::new(BigInt::one(), BigInt::one() << (-e) as usize)
    }
}

fn threshold() -> BigRational {
    pow2(64)
}

fn floor_i64(x: &BigRational) -> Option<i64> {
    x.floor().to_integer().to_i64()
}

/// Rounds `x` to a dyadic rational with `bits` significant bits.
fn round(x: BigRational, dir: Dir, bits: u32) -> BigRational {
    let nb = x.numer().bits();
    let db = x.denom().bits();
    if nb <= bits as u64 + 64 && db <= bits as u64 + 64 {
        return x;
    }
    let shift = bits as i64 - (nb as i64 - db as i64);
    dyadic(&x, shift, dir)
}

/// floor or ceil of `x * 2^shift`, divided back by `2^shift`.
fn dyadic(x: &BigRational, shift: i64, dir: Dir) -> BigRational {
    let (num, den) = if shift >= 0 {
        (x.numer() << shift as usize, x.denom().clone())
    } else {
        (x.numer().clone(), x.denom() << (-shift) as usize)
    };
    let q = match dir {
        Dir::Down => num.div_floor(&den),
        Dir::Up => num.div_ceil(&den),
    };
    if shift >= 0 {
        BigRational::new(q, BigInt::one() << shift as usize)
    } else {
        BigRational::from_integer(q << (-shift) as usize)
    }
}

/// Lower and upper bounds for `log2 x`, exact when `x` is a power of two.
fn log2_bounds(x: &BigRational, bits: u32) -> Result<(BigRational, BigRational), NumericError> {
    if !x.is_positive() {
        return Err(NumericError::Domain(format!("log2 of non-positive {}", rat_string(x))));
    }
    let p = x.numer().magnitude();
    let q = x.denom().magnitude();
    let mut e = p.bits() as i64 - q.bits() as i64;
    let ge = |e: i64| -> bool {
        if e >= 0 {
            *p >= (q << e as usize)
        } else {
            (p << (-e) as usize) >= *q
        }
    };
    if !ge(e) {
        e -= 1;
    }
    let frac = bits as i64;
    let shift = frac - e;
    let (num, den) = if shift >= 0 {
        (p << shift as usize, q.clone())
    } else {
        (p.clone(), q << (-shift) as usize)
    };
    let (y, r) = num.div_rem(&den);
    let one = BigUint::one() << frac as usize;
    let two = BigUint::one() << (frac + 1) as usize;
    if r.is_zero() && y == one {
        let v = BigRational::from_integer(BigInt::from(e));
        return Ok((v.clone(), v));
    }
    let mut lo = y.clone();
    let mut hi = if r.is_zero() { y } else { y + 1u32 };
    let base = BigRational::from_integer(BigInt::from(e));
    if hi >= two {
        return Ok((base.clone(), base + BigRational::one()));
    }
    let mut acc = BigUint::zero();
    let mut j: i64 = 0;
    for _ in 0..frac {
        let lo2 = (&lo * &lo) >> frac as usize;
        let sq = &hi * &hi;
        let t = &sq >> frac as usize;
        let hi2 = if (&t << frac as usize) == sq { t } else { t + 1u32 };
        let bit = if lo2 >= two {
            lo = lo2 >> 1;
            hi = (hi2 + 1u32) >> 1;
            1u32
        } else if hi2 < two {
            lo = lo2;
            hi = hi2;
            0u32
        } else {
            break;
        };
        acc = (acc << 1) + bit;
        j += 1;
    }
    let scale = BigInt::one() << j as usize;
    let acc = BigInt::from(acc);
    let low = &base + BigRational::new(acc.clone(), scale.clone());
    let high = base + BigRational::new(acc + 1, scale);
    Ok((low, high))
}

fn log2_dir(x: &BigRational, dir: Dir, bits: u32) -> Result<BigRational, NumericError> {
    let (lo, hi) = log2_bounds(x, bits)?;
    Ok(match dir {
        Dir::Down => lo,
        Dir::Up => hi,
    })
}

/// `eps` with `E^h(m) + 1 <= E^h(m + eps)` for `h >= 1`.
fn bump(h: u32, m: &BigRational, bits: u32) -> BigRational {
    debug_assert!(h >= 1);
    if *m >= BigRational::one() {
        let f = floor_i64(m).unwrap_or(i64::MAX);
        let cap = bits as i64 + m.numer().bits() as i64;
        pow2(1 - f.min(cap))
    } else if h == 1 {
        let f = floor_i64(m).unwrap_or(i64::MIN / 2);
        BigRational::from_integer(BigInt::from(2 - f))
    } else {
        bump(h - 1, m, bits)
    }
}

/// Interval arithmetic on tower points.
struct Arith {
    bits: u32,
}

impl Arith {
    fn normalize(&self, mut p: Point, dir: Dir) -> Result<Point, NumericError> {
        p.m = round(p.m, dir, self.bits);
        let t = threshold();
        while p.m > t {
            p = Point { h: p.h + 1, m: round(log2_dir(&p.m, dir, self.bits)?, dir, self.bits) };
        }
        Ok(p)
    }

    /// Re-expresses `p` at height `target >= p.h`.
    fn align(&self, p: &Point, target: u32, dir: Dir) -> Option<Point> {
        let mut p = p.clone();
        while p.h < target {
            if !p.m.is_positive() {
                match dir {
                    Dir::Up => p = Point { h: p.h + 1, m: BigRational::zero() },
                    Dir::Down => return None,
                }
            } else {
                let m = log2_dir(&p.m, dir, self.bits).ok()?;
                p = Point { h: p.h + 1, m: round(m, dir, self.bits) };
            }
        }
        Some(p)
    }

    fn log(&self, p: &Point, dir: Dir) -> Result<Point, NumericError> {
        if p.h >= 1 {
            Ok(Point { h: p.h - 1, m: p.m.clone() })
        } else {
            Ok(Point { h: 0, m: round(log2_dir(&p.m, dir, self.bits)?, dir, self.bits) })
        }
    }

    fn exp(&self, p: Point, dir: Dir) -> Result<Point, NumericError> {
        self.normalize(Point { h: p.h + 1, m: p.m }, dir)
    }

    fn max(&self, a: &Point, b: &Point, dir: Dir) -> Result<Point, NumericError> {
        let h = a.h.max(b.h);
        let pa = self.align(a, h, dir);
        let pb = self.align(b, h, dir);
        match (pa, pb) {
            (Some(x), Some(y)) => Ok(if x.m >= y.m { x } else { y }),
            (Some(x), None) | (None, Some(x)) => Ok(x),
            (None, None) => Err(NumericError::Domain("max of unrepresentable bounds".into())),
        }
    }

    fn double_up(&self, p: &Point) -> Result<Point, NumericError> {
        match p.h {
            0 => self.normalize(Point { h: 0, m: &p.m + &p.m }, Dir::Up),
            1 => Ok(Point { h: 1, m: &p.m + BigRational::one() }),
            h => Ok(Point { h, m: round(&p.m + bump(h - 1, &p.m, self.bits), Dir::Up, self.bits) }),
        }
    }

    fn halve_down(&self, p: &Point) -> Point {
        match p.h {
            0 => Point { h: 0, m: &p.m / BigRational::from_integer(BigInt::from(2)) },
            1 => Point { h: 1, m: &p.m - BigRational::one() },
            h => {
                let two = BigRational::from_integer(BigInt::from(2));
                if p.m >= two {
                    let f = floor_i64(&p.m).unwrap_or(i64::MAX);
                    let cap = self.bits as i64 + p.m.numer().bits() as i64;
                    let eps = pow2(2 - f.min(cap));
                    Point { h, m: round(&p.m - eps, Dir::Down, self.bits) }
                } else {
                    Point::int(0)
                }
            }
        }
    }

    fn add(&self, a: &Point, b: &Point, dir: Dir) -> Result<Point, NumericError> {
        if a.h == 0 && b.h == 0 {
            return self.normalize(Point { h: 0, m: &a.m + &b.m }, dir);
        }
        let h = a.h.max(b.h);
        match dir {
            Dir::Down => {
                for p in [a, b] {
                    if p.h == 0 && p.m.is_negative() {
                        return Err(NumericError::Domain("negative summand beside a tower".into()));
                    }
                }
                self.max(a, b, Dir::Down)
            }
            Dir::Up => {
                let x = self.align(a, h, Dir::Up).expect("upward alignment");
                let y = self.align(b, h, Dir::Up).expect("upward alignment");
                let (big, small) = if x.m >= y.m { (x, y) } else { (y, x) };
                if h == 1 {
                    let gap = &big.m - &small.m;
                    let delta = if gap >= BigRational::one() {
                        let f = floor_i64(&gap).unwrap_or(i64::MAX).min(self.bits as i64 + 64);
                        pow2(1 - f)
                    } else {
                        BigRational::one()
                    };
                    Ok(Point { h: 1, m: round(big.m + delta, Dir::Up, self.bits) })
                } else {
                    self.double_up(&big)
                }
            }
        }
    }

    fn sub(&self, a: &Point, b: &Point, dir: Dir) -> Result<Point, NumericError> {
        if a.h == 0 && b.h == 0 {
            let d = &a.m - &b.m;
            let d = if d.is_negative() { BigRational::zero() } else { d };
            return self.normalize(Point { h: 0, m: d }, dir);
        }
        if dir == Dir::Up {
            return Ok(a.clone());
        }
        if b.h == 0 && b.m.is_zero() {
            return Ok(a.clone());
        }
        if a.h == 0 {
            return Ok(Point::int(0));
        }
        if a.h == 1 && b.h <= 1 {
            let lb = if b.h == 1 { b.m.clone() } else { log2_dir(&b.m, Dir::Up, self.bits)? };
            let gap = &a.m - lb;
            if gap >= BigRational::one() {
                let f = floor_i64(&gap).unwrap_or(i64::MAX).min(self.bits as i64 + 64);
                let m = round(&a.m - pow2(1 - f), Dir::Down, self.bits);
                return Ok(Point { h: 1, m });
            }
            return Ok(Point::int(0));
        }
        let twice = self.double_up(b)?;
        match cmp_points(&twice, a, self.bits) {
            TowerOrdering::Less | TowerOrdering::Equal => Ok(self.halve_down(a)),
            _ => Ok(Point::int(0)),
        }
    }

    fn mul(&self, a: &Point, b: &Point, dir: Dir) -> Result<Point, NumericError> {
        for p in [a, b] {
            if p.h == 0 && !p.m.is_positive() {
                return Ok(Point::int(0));
            }
        }
        if a.h == 0 && b.h == 0 {
            return self.normalize(Point { h: 0, m: &a.m * &b.m }, dir);
        }
        let la = self.log(a, dir)?;
        let lb = self.log(b, dir)?;
        if dir == Dir::Down {
            for p in [&la, &lb] {
                if p.h == 0 && p.m.is_negative() {
                    return Ok(Point::int(0));
                }
            }
        }
        let s = self.add(&la, &lb, dir)?;
        self.exp(s, dir)
    }

    fn div(&self, a: &Point, b: &Point, dir: Dir) -> Result<Point, NumericError> {
        if b.h == 0 && !b.m.is_positive() {
            return Err(NumericError::Domain("division by a non-positive bound".into()));
        }
        if a.h == 0 && b.h == 0 {
            return self.normalize(Point { h: 0, m: &a.m / &b.m }, dir);
        }
        if a.h == 0 && !a.m.is_positive() {
            return Ok(Point::int(0));
        }
        let la = self.log(a, dir)?;
        let lb = self.log(b, dir.flip())?;
        let s = self.sub(&la, &lb, dir)?;
        self.exp(s, dir)
    }

    fn pow(&self, base: &Point, e: &Point, dir: Dir) -> Result<Point, NumericError> {
        if base.h == 0 && e.h == 0 && base.m.is_integer() && e.m.is_integer() && !e.m.is_negative() {
            let bb = base.m.numer().bits().max(1);
            if let Some(k) = e.m.numer().to_u64() {
                if bb.saturating_mul(k) <= 4096 {
                    let v = num_traits::pow(base.m.numer().clone(), k as usize);
                    return self.normalize(Point { h: 0, m: BigRational::from_integer(v) }, dir);
                }
            }
        }
        if e.h == 0 && e.m.is_zero() {
            return Ok(Point::int(1));
        }
        if base.h == 0 && base.m < BigRational::one() {
            return Ok(match dir {
                Dir::Down => Point::int(0),
                Dir::Up => Point::int(1),
            });
        }
        let lb = self.log(base, dir)?;
        let s = self.mul(e, &lb, dir)?;
        self.exp(s, dir)
    }
}

fn cmp_points(a: &Point, b: &Point, bits: u32) -> TowerOrdering {
    use std::cmp::Ordering as O;
    if a.h == b.h {
        return match a.m.cmp(&b.m) {
            O::Less => TowerOrdering::Less,
            O::Equal => TowerOrdering::Equal,
            O::Greater => TowerOrdering::Greater,
        };
    }
    if a.h < b.h {
        return cmp_points(b, a, bits).reverse();
    }
    // Compare E^r(a.m) with b.m by taking r logarithms of b.m.
    let r = a.h - b.h;
    let mut lo: Option<BigRational> = Some(b.m.clone());
    let mut hi = b.m.clone();
    for _ in 0..r {
        if !hi.is_positive() {
            return TowerOrdering::Greater;
        }
        let new_hi = match log2_dir(&hi, Dir::Up, bits) {
            Ok(v) => v,
            Err(_) => return TowerOrdering::Unknown,
        };
        lo = match lo {
            Some(l) if l.is_positive() => log2_dir(&l, Dir::Down, bits).ok(),
            _ => None,
        };
        hi = new_hi;
    }
    if a.m > hi {
        return TowerOrdering::Greater;
    }
    match lo {
        Some(l) if a.m < l => TowerOrdering::Less,
        Some(l) if l == hi && a.m == l => TowerOrdering::Equal,
        _ => TowerOrdering::Unknown,
    }
}

/// Sound three-way comparison of the enclosed values.
pub fn tower_cmp(x: &LogTower, y: &LogTower) -> TowerOrdering {
    tower_cmp_with(x, y, &Precision::default())
}

pub fn tower_cmp_with(x: &LogTower, y: &LogTower, prec: &Precision) -> TowerOrdering {
    let bits = prec.mantissa_bits;
    let (xl, xh, yl, yh) = (x.low_point(), x.high_point(), y.low_point(), y.high_point());
    if cmp_points(&xh, &yl, bits) == TowerOrdering::Less {
        return TowerOrdering::Less;
    }
    if cmp_points(&xl, &yh, bits) == TowerOrdering::Greater {
        return TowerOrdering::Greater;
    }
    let eq = |p: &Point, q: &Point| cmp_points(p, q, bits) == TowerOrdering::Equal;
    if eq(&xl, &xh) && eq(&xh, &yl) && eq(&yl, &yh) {
        return TowerOrdering::Equal;
    }
    TowerOrdering::Unknown
}

// ---------------------------------------------------------------------------
// Expressions

#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    Const(BigUint),
    Add(Expr, Expr),
    Sub(Expr, Expr),
    Mul(Expr, Expr),
    Div(Expr, Expr),
    Pow(Expr, Expr),
    Max(Expr, Expr),
    /// `|[m]^{<=k}|`.
    SubsetCount(Expr, Expr),
    /// The power bound `m^k` standing in for `|[m]^{<=k}|`.
    SubsetBound(Expr, Expr),
}

/// A shared arithmetic expression over naturals. `Sub` is only used where the
/// difference is known to be non-negative; `Div` where the quotient is at least 1.
#[derive(Debug, Clone)]
pub struct Expr(Arc<Op>);

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        same_expr(self, other)
    }
}

fn same_expr(a: &Expr, b: &Expr) -> bool {
    if Arc::ptr_eq(&a.0, &b.0) {
        return true;
    }
    use Op::*;
    match (a.op(), b.op()) {
        (Const(x), Const(y)) => x == y,
        (Add(a1, a2), Add(b1, b2))
        | (Sub(a1, a2), Sub(b1, b2))
        | (Mul(a1, a2), Mul(b1, b2))
        | (Div(a1, a2), Div(b1, b2))
        | (Pow(a1, a2), Pow(b1, b2))
        | (Max(a1, a2), Max(b1, b2))
        | (SubsetCount(a1, a2), SubsetCount(b1, b2))
        | (SubsetBound(a1, a2), SubsetBound(b1, b2)) => same_expr(a1, b1) && same_expr(a2, b2),
        _ => false,
    }
}

impl Expr {
    pub fn new(op: Op) -> Expr {
        Expr(Arc::new(op))
    }
    pub fn op(&self) -> &Op {
        &self.0
    }
    pub fn nat(n: impl Into<BigUint>) -> Expr {
        Expr::new(Op::Const(n.into()))
    }
    pub fn add(&self, o: &Expr) -> Expr {
        Expr::new(Op::Add(self.clone(), o.clone()))
    }
    pub fn sub(&self, o: &Expr) -> Expr {
        Expr::new(Op::Sub(self.clone(), o.clone()))
    }
    pub fn mul(&self, o: &Expr) -> Expr {
        Expr::new(Op::Mul(self.clone(), o.clone()))
    }
    pub fn div(&self, o: &Expr) -> Expr {
        Expr::new(Op::Div(self.clone(), o.clone()))
    }
    pub fn pow(&self, o: &Expr) -> Expr {
        Expr::new(Op::Pow(self.clone(), o.clone()))
    }
    pub fn max(&self, o: &Expr) -> Expr {
        Expr::new(Op::Max(self.clone(), o.clone()))
    }
    pub fn subset_count(&self, k: &Expr) -> Expr {
        Expr::new(Op::SubsetCount(self.clone(), k.clone()))
    }
    pub fn subset_bound(&self, k: &Expr) -> Expr {
        Expr::new(Op::SubsetBound(self.clone(), k.clone()))
    }
    pub fn add_n(&self, n: u64) -> Expr {
        self.add(&Expr::nat(n))
    }
    pub fn sub_n(&self, n: u64) -> Expr {
        self.sub(&Expr::nat(n))
    }
    pub fn pow2(e: &Expr) -> Expr {
        Expr::nat(2u32).pow(e)
    }

    fn key(&self) -> usize {
        Arc::as_ptr(&self.0) as usize
    }

    fn children(&self) -> Option<(&Expr, &Expr)> {
        use Op::*;
        match self.op() {
            Const(_) => None,
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) | Pow(a, b) | Max(a, b)
            | SubsetCount(a, b) | SubsetBound(a, b) => Some((a, b)),
        }
    }

    fn op_name(&self) -> &'static str {
        use Op::*;
        match self.op() {
            Const(_) => "const",
            Add(..) => "add",
            Sub(..) => "sub",
            Mul(..) => "mul",
            Div(..) => "div",
            Pow(..) => "pow",
            Max(..) => "max",
            SubsetCount(..) => "subset_count",
            SubsetBound(..) => "subset_bound",
        }
    }

    pub fn to_json(&self) -> Value {
        match self.op() {
            Op::Const(n) => Value::String(n.to_string()),
            _ => {
                let (a, b) = self.children().expect("non-constant");
                serde_json::json!({"op": self.op_name(), "args": [a.to_json(), b.to_json()]})
            }
        }
    }

    pub fn from_json(v: &Value) -> Result<Expr, NumericError> {
        let bad = |m: &str| NumericError::Malformed(m.to_string());
        match v {
            Value::String(s) => {
                s.trim().parse::<BigUint>().map(Expr::nat).map_err(|_| bad(&format!("constant {s:?}")))
            }
            Value::Number(n) => n.as_u64().map(Expr::nat).ok_or_else(|| bad("constants are naturals")),
            Value::Object(o) => {
                let op = o.get("op").and_then(Value::as_str).ok_or_else(|| bad("missing op"))?;
                if op == "const" {
                    return Expr::from_json(o.get("value").ok_or_else(|| bad("const without value"))?);
                }
                let args = o.get("args").and_then(Value::as_array).ok_or_else(|| bad("missing args"))?;
                if args.len() != 2 {
                    return Err(bad(&format!("{op} takes two arguments")));
                }
                let a = Expr::from_json(&args[0])?;
                let b = Expr::from_json(&args[1])?;
                Ok(match op {
                    "add" => a.add(&b),
                    "sub" => a.sub(&b),
                    "mul" | "multiply" => a.mul(&b),
                    "div" => a.div(&b),
                    "pow" | "power" => a.pow(&b),
                    "max" => a.max(&b),
                    "subset_count" => a.subset_count(&b),
                    "subset_bound" | "subset-count-bound" => a.subset_bound(&b),
                    other => return Err(bad(&format!("unknown op {other:?}"))),
                })
            }
            _ => Err(bad("expected a string constant or an object")),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.op() {
            Op::Const(n) => {
                if n.bits() > 64 {
                    write!(f, "<{}-bit constant>", n.bits())
                } else {
                    write!(f, "{n}")
                }
            }
            _ => {
                let (a, b) = self.children().expect("non-constant");
                write!(f, "{}({a}, {b})", self.op_name())
            }
        }
    }
}

/// Exact results larger than this many bits are left to the towers.
pub const EXACT_BITS: u64 = 1 << 26;

/// Caching evaluator for expressions: exact values when small, towers always.
pub struct Evaluator {
    pub prec: Precision,
    arith: Arith,
    exact: HashMap<usize, (Expr, Option<BigRational>)>,
    tower: HashMap<usize, (Expr, Result<(Point, Point), NumericError>)>,
}

impl Evaluator {
    pub fn new(prec: Precision) -> Evaluator {
        Evaluator { prec, arith: Arith { bits: prec.mantissa_bits }, exact: HashMap::new(), tower: HashMap::new() }
    }

    /// The exact value, if it is small enough to materialise.
    pub fn exact(&mut self, e: &Expr) -> Option<BigRational> {
        if let Some((_, v)) = self.exact.get(&e.key()) {
            return v.clone();
        }
        let v = self.compute_exact(e);
        self.exact.insert(e.key(), (e.clone(), v.clone()));
        v
    }

    pub fn exact_nat(&mut self, e: &Expr) -> Option<BigUint> {
        let v = self.exact(e)?;
        if v.is_integer() && !v.is_negative() {
            v.numer().to_biguint()
        } else {
            None
        }
    }

    fn compute_exact(&mut self, e: &Expr) -> Option<BigRational> {
        use Op::*;
        let nat = |x: &BigRational| -> Option<BigUint> {
            if x.is_integer() {
                x.numer().to_biguint()
            } else {
                None
            }
        };
        Some(match e.op() {
            Const(n) => BigRational::from_integer(BigInt::from(n.clone())),
            Add(a, b) => self.exact(a)? + self.exact(b)?,
            Sub(a, b) => {
                let d = self.exact(a)? - self.exact(b)?;
                if d.is_negative() {
                    return None;
                }
                d
            }
            Mul(a, b) => {
                let (x, y) = (self.exact(a)?, self.exact(b)?);
                if x.numer().bits() + y.numer().bits() > EXACT_BITS {
                    return None;
                }
                x * y
            }
            Div(a, b) => {
                let y = self.exact(b)?;
                if y.is_zero() {
                    return None;
                }
                self.exact(a)? / y
            }
            Max(a, b) => {
                let (x, y) = (self.exact(a)?, self.exact(b)?);
                if x >= y {
                    x
                } else {
                    y
                }
            }
            Pow(a, b) | SubsetBound(a, b) => {
                let x = self.exact(a)?;
                let k = nat(&self.exact(b)?)?.to_u64()?;
                exact_pow(&x, k)?
            }
            SubsetCount(a, b) => {
                let m = nat(&self.exact(a)?)?;
                let k = nat(&self.exact(b)?)?;
                if k >= m {
                    if m.bits() > 32 || m.to_u64()? > EXACT_BITS {
                        return None;
                    }
                } else if k.to_u64()? > 4096 || m.bits() > 1 << 14 {
                    return None;
                }
                BigRational::from_integer(BigInt::from(subset_count(&m, &k, CountMode::Exact)))
            }
        })
    }

    /// Rigorous enclosure of the value.
    pub fn tower(&mut self, e: &Expr) -> Result<LogTower, NumericError> {
        let (lo, hi) = self.points(e)?;
        let a = &self.arith;
        let h = lo.h.max(hi.h);
        let lo = a.align(&lo, h, Dir::Down).ok_or_else(|| NumericError::Domain("lower bound lost".into()))?;
        let hi = a.align(&hi, h, Dir::Up).expect("upward alignment");
        if h > self.prec.height_cap {
            return Err(NumericError::HeightCap { height: h, cap: self.prec.height_cap });
        }
        Ok(LogTower { height: h, low: lo.m, high: hi.m })
    }

    fn points(&mut self, e: &Expr) -> Result<(Point, Point), NumericError> {
        if let Some((_, v)) = self.tower.get(&e.key()) {
            return v.clone();
        }
        let v = self.compute_points(e);
        if let Ok((lo, hi)) = &v {
            let h = lo.h.max(hi.h);
            if h > self.prec.height_cap {
                let err = Err(NumericError::HeightCap { height: h, cap: self.prec.height_cap });
                self.tower.insert(e.key(), (e.clone(), err.clone()));
                return err;
            }
        }
        self.tower.insert(e.key(), (e.clone(), v.clone()));
        v
    }

    fn compute_points(&mut self, e: &Expr) -> Result<(Point, Point), NumericError> {
        use Op::*;
        if let Some(x) = self.exact(e) {
            let a = &self.arith;
            let p = Point { h: 0, m: x };
            return Ok((a.normalize(p.clone(), Dir::Down)?, a.normalize(p, Dir::Up)?));
        }
        let (x, y) = match e.children() {
            Some(c) => c,
            None => unreachable!("constants are exact"),
        };
        let (xl, xh) = self.points(x)?;
        let (yl, yh) = self.points(y)?;
        let a = &self.arith;
        let one = Point::int(1);
        let two = Point::int(2);
        let ge = |p: &Point, q: &Point| {
            matches!(cmp_points(p, q, a.bits), TowerOrdering::Greater | TowerOrdering::Equal)
        };
        Ok(match e.op() {
            Const(_) => unreachable!(),
            Add(..) => (a.add(&xl, &yl, Dir::Down)?, a.add(&xh, &yh, Dir::Up)?),
            Sub(..) => (a.sub(&xl, &yh, Dir::Down)?, a.sub(&xh, &yl, Dir::Up)?),
            Mul(..) => (a.mul(&xl, &yl, Dir::Down)?, a.mul(&xh, &yh, Dir::Up)?),
            Div(..) => (a.div(&xl, &yh, Dir::Down)?, a.div(&xh, &yl, Dir::Up)?),
            Pow(..) | SubsetBound(..) => (a.pow(&xl, &yl, Dir::Down)?, a.pow(&xh, &yh, Dir::Up)?),
            Max(..) => (a.max(&xl, &yl, Dir::Down)?, a.max(&xh, &yh, Dir::Up)?),
            SubsetCount(..) => {
                // m + 1 <= |[m]^{<=k}| for k >= 1; the count is at most m^k
                // when m, k >= 2 and at most (m+1)^k always.
                let lo = if ge(&yl, &one) { a.add(&xl, &one, Dir::Down)? } else { one.clone() };
                let hi = if ge(&xl, &two) && ge(&yl, &two) {
                    a.pow(&xh, &yh, Dir::Up)?
                } else {
                    let m1 = a.add(&xh, &one, Dir::Up)?;
                    a.pow(&m1, &yh, Dir::Up)?
                };
                (lo, hi)
            }
        })
    }
}

/// Evaluates an expression to a rigorous enclosure.
pub fn tower_eval(e: &Expr, prec: &Precision) -> Result<LogTower, NumericError> {
    Evaluator::new(*prec).tower(e)
}

fn exact_pow(x: &BigRational, k: u64) -> Option<BigRational> {
    if x.is_zero() {
        return Some(if k == 0 { BigRational::one() } else { BigRational::zero() });
    }
    if x.is_integer() {
        let n = x.numer().magnitude();
        if n.is_one() {
            return Some(BigRational::one());
        }
        if n.count_ones() == 1 {
            let e = (n.bits() - 1).checked_mul(k)?;
            if e > EXACT_BITS {
                return None;
            }
            let v = BigInt::from_biguint(x.numer().sign(), BigUint::one() << e as usize);
            let v = if x.numer().sign() == Sign::Minus && k.is_multiple_of(2) { -v } else { v };
            return Some(BigRational::from_integer(v));
        }
    }
    let bits = x.numer().bits().max(x.denom().bits()).checked_mul(k)?;
    if bits > EXACT_BITS {
        return None;
    }
    Some(num_traits::pow(x.clone(), k as usize))
}

// ---------------------------------------------------------------------------
// Certifier

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Unknown,
}

/// Decides `a <= b` or `a < b` between expressions.
///
/// Exact values are compared directly, then tower enclosures. When the
/// enclosures overlap, monotonicity rules are tried: `x <= x + y`,
/// `x <= x * y` for `y >= 1`, `x <= x^y` for `x, y >= 1`,
/// `|[m]^{<=k}| <= m^k` for `m, k >= 2`, componentwise monotonicity of
/// `+`, `*`, `^`, `max`, and antitonicity of `-` and `/` in the second slot.
/// All expressions are treated as non-negative.
pub struct Certifier {
    pub eval: Evaluator,
    memo: HashMap<(usize, usize, bool), Verdict>,
    keep: Vec<Expr>,
    consts: [Expr; 3],
    depth: u32,
}

impl Certifier {
    pub fn new(prec: Precision) -> Certifier {
        Certifier {
            eval: Evaluator::new(prec),
            memo: HashMap::new(),
            keep: Vec::new(),
            consts: [Expr::nat(0u32), Expr::nat(1u32), Expr::nat(2u32)],
            depth: 12,
        }
    }

    pub fn le(&mut self, a: &Expr, b: &Expr) -> Verdict {
        self.decide(a, b, false, self.depth)
    }

    pub fn lt(&mut self, a: &Expr, b: &Expr) -> Verdict {
        self.decide(a, b, true, self.depth)
    }

    fn decide(&mut self, a: &Expr, b: &Expr, strict: bool, depth: u32) -> Verdict {
        let key = (a.key(), b.key(), strict);
        if let Some(v) = self.memo.get(&key) {
            return *v;
        }
        let v = self.decide_uncached(a, b, strict, depth);
        if v != Verdict::Unknown || depth == self.depth {
            self.memo.insert(key, v);
        }
        v
    }

    fn decide_uncached(&mut self, a: &Expr, b: &Expr, strict: bool, depth: u32) -> Verdict {
        if !strict && same_expr(a, b) {
            return Verdict::Pass;
        }
        if let (Some(x), Some(y)) = (self.eval.exact(a), self.eval.exact(b)) {
            let ok = if strict { x < y } else { x <= y };
            return if ok { Verdict::Pass } else { Verdict::Fail };
        }
        if let (Ok((al, ah)), Ok((bl, bh))) = (self.eval.points(a), self.eval.points(b)) {
            let bits = self.eval.prec.mantissa_bits;
            let upper = cmp_points(&ah, &bl, bits);
            let lower = cmp_points(&al, &bh, bits);
            if strict {
                if upper == TowerOrdering::Less {
                    return Verdict::Pass;
                }
                if matches!(lower, TowerOrdering::Greater | TowerOrdering::Equal) {
                    return Verdict::Fail;
                }
            } else {
                if matches!(upper, TowerOrdering::Less | TowerOrdering::Equal) {
                    return Verdict::Pass;
                }
                if lower == TowerOrdering::Greater {
                    return Verdict::Fail;
                }
            }
        }
        if depth == 0 {
            return Verdict::Unknown;
        }
        if self.structural(a, b, strict, depth - 1) {
            Verdict::Pass
        } else {
            Verdict::Unknown
        }
    }

    fn holds(&mut self, a: &Expr, b: &Expr, strict: bool, depth: u32) -> bool {
        self.decide(a, b, strict, depth) == Verdict::Pass
    }

    fn at_least(&mut self, x: &Expr, c: usize, depth: u32) -> bool {
        let k = self.consts[c].clone();
        self.holds(&k, x, false, depth)
    }

    fn above(&mut self, x: &Expr, c: usize, depth: u32) -> bool {
        let k = self.consts[c].clone();
        self.holds(&k, x, true, depth)
    }

    fn structural(&mut self, a: &Expr, b: &Expr, s: bool, d: u32) -> bool {
        use Op::*;
        // Upper side grows past a.
        match b.op() {
            Add(x, y) => {
                for (u, v) in [(x, y), (y, x)] {
                    if self.holds(a, u, s, d) || (s && self.holds(a, u, false, d) && self.above(v, 0, d)) {
                        return true;
                    }
                }
            }
            Mul(x, y) => {
                for (u, v) in [(x, y), (y, x)] {
                    if self.at_least(v, 1, d) && self.holds(a, u, s, d) {
                        return true;
                    }
                }
            }
            Max(x, y) => {
                if self.holds(a, x, s, d) || self.holds(a, y, s, d) {
                    return true;
                }
            }
            Pow(x, y) | SubsetBound(x, y) => {
                if self.at_least(x, 1, d) && self.at_least(y, 1, d) && self.holds(a, x, s, d) {
                    return true;
                }
            }
            SubsetCount(m, k)
                if self.at_least(k, 1, d) && self.holds(a, m, false, d) => {
                    return true;
                }
            _ => {}
        }
        // Lower side shrinks below b.
        match a.op() {
            Sub(x, y) => {
                if self.holds(x, b, s, d) || (s && self.holds(x, b, false, d) && self.above(y, 0, d)) {
                    return true;
                }
            }
            Div(x, y) => {
                if self.at_least(y, 1, d) && self.holds(x, b, s, d) {
                    return true;
                }
            }
            SubsetCount(m, k) => {
                if self.at_least(m, 2, d) && self.at_least(k, 2, d) {
                    let p = m.pow(k);
                    self.keep.push(p.clone());
                    if self.holds(&p, b, s, d) {
                        return true;
                    }
                }
            }
            Max(x, y)
                if self.holds(x, b, s, d) && self.holds(y, b, s, d) => {
                    return true;
                }
            _ => {}
        }
        // Componentwise.
        match (a.op(), b.op()) {
            (Add(x1, y1), Add(x2, y2)) => {
                if self.pair(x1, x2, y1, y2, s, d) || self.pair(x1, y2, y1, x2, s, d) {
                    return true;
                }
            }
            (Mul(x1, y1), Mul(x2, y2)) => {
                for (p1, q1, p2, q2) in [(x1, y1, x2, y2), (x1, y1, y2, x2), (y1, x1, x2, y2), (y1, x1, y2, x2)] {
                    if s {
                        if self.holds(p1, p2, true, d) && self.holds(q1, q2, false, d) && self.at_least(q1, 1, d) {
                            return true;
                        }
                    } else if self.holds(p1, p2, false, d) && self.holds(q1, q2, false, d) {
                        return true;
                    }
                }
            }
            (Pow(x1, y1), Pow(x2, y2)) | (SubsetBound(x1, y1), SubsetBound(x2, y2)) => {
                if self.at_least(x1, 1, d) {
                    if s {
                        if self.holds(x1, x2, true, d) && self.holds(y1, y2, false, d) && self.at_least(y1, 1, d) {
                            return true;
                        }
                        if self.holds(x1, x2, false, d) && self.holds(y1, y2, true, d) && self.at_least(x1, 2, d) {
                            return true;
                        }
                    } else if self.holds(x1, x2, false, d) && self.holds(y1, y2, false, d) {
                        return true;
                    }
                }
            }
            (Sub(x1, y1), Sub(x2, y2)) => {
                if self.pair(x1, x2, y2, y1, s, d) {
                    return true;
                }
            }
            (Div(x1, y1), Div(x2, y2)) => {
                if self.above(y2, 0, d) && self.pair(x1, x2, y2, y1, s, d) {
                    return true;
                }
            }
            (Max(x1, y1), Max(x2, y2)) => {
                if (self.holds(x1, x2, s, d) && self.holds(y1, y2, s, d))
                    || (self.holds(x1, y2, s, d) && self.holds(y1, x2, s, d))
                {
                    return true;
                }
            }
            (SubsetCount(m1, k1), SubsetCount(m2, k2)) if !s
                && self.holds(m1, m2, false, d) && self.holds(k1, k2, false, d) => {
                    return true;
                }
            _ => {}
        }
        false
    }

    /// `p1 <= p2` and `q1 <= q2`, one of them strict when `s`.
    fn pair(&mut self, p1: &Expr, p2: &Expr, q1: &Expr, q2: &Expr, s: bool, d: u32) -> bool {
        if s {
            (self.holds(p1, p2, true, d) && self.holds(q1, q2, false, d))
                || (self.holds(p1, p2, false, d) && self.holds(q1, q2, true, d))
        } else {
            self.holds(p1, p2, false, d) && self.holds(q1, q2, false, d)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn n(x: u64) -> BigUint {
        BigUint::from(x)
    }

    fn r(x: i64) -> BigRational {
        BigRational::from_integer(BigInt::from(x))
    }

    #[test]
    fn subset_count_examples() {
        assert_eq!(subset_count(&n(4), &n(0), CountMode::Exact), n(1));
        assert_eq!(subset_count(&n(4), &n(2), CountMode::Exact), n(11));
        assert_eq!(subset_count(&n(3), &n(3), CountMode::Exact), n(8));
        assert_eq!(subset_count(&n(4), &n(2), CountMode::PowerBound), n(16));
    }

    #[test]
    fn subset_count_matches_enumeration() {
        for m in 0..10u64 {
            for k in 0..=m + 1 {
                let direct = (0u32..1 << m).filter(|s| s.count_ones() as u64 <= k).count() as u64;
                assert_eq!(subset_count(&n(m), &n(k), CountMode::Exact), n(direct));
            }
        }
    }

    #[test]
    fn cmp_examples() {
        let t = |h, lo: i64, hi: i64| LogTower::new(h, r(lo), r(hi));
        assert_eq!(tower_cmp(&t(0, 8, 8), &t(0, 9, 9)), TowerOrdering::Less);
        assert_eq!(tower_cmp(&t(1, 10, 10), &t(0, 1024, 1024)), TowerOrdering::Equal);
        assert_eq!(tower_cmp(&t(0, 3, 5), &t(0, 4, 4)), TowerOrdering::Unknown);
        assert_eq!(tower_cmp(&t(2, 5, 5), &t(1, 32, 32)), TowerOrdering::Equal);
        assert_eq!(tower_cmp(&t(2, 5, 5), &t(1, 33, 33)), TowerOrdering::Less);
    }

    #[test]
    fn log2_bounds_enclose() {
        for x in [3i64, 5, 7, 1000, 1023, 1025] {
            let (lo, hi) = log2_bounds(&r(x), 64).unwrap();
            assert!(lo < hi);
            // 2^lo <= x <= 2^hi, checked at integer resolution through exact powers
            let lo_i = lo.floor().to_integer().to_i64().unwrap();
            let hi_i = hi.ceil().to_integer().to_i64().unwrap();
            assert!((1i64 << lo_i) <= x && x <= (1i64 << hi_i));
            assert!(&hi - &lo < pow2(-40));
        }
        let (lo, hi) = log2_bounds(&BigRational::new(BigInt::from(1), BigInt::from(8)), 64).unwrap();
        assert_eq!((lo, hi), (r(-3), r(-3)));
    }

    #[test]
    fn eval_examples() {
        let p = Precision::default();
        let e = Expr::nat(2u32).pow(&Expr::nat(65540u32));
        assert_eq!(tower_eval(&e, &p).unwrap(), LogTower::new(1, r(65540), r(65540)));
        let a = Expr::pow2(&Expr::nat(100u32));
        let b = Expr::pow2(&Expr::nat(200u32));
        assert_eq!(tower_eval(&a.mul(&b), &p).unwrap(), LogTower::new(1, r(300), r(300)));
    }

    #[test]
    fn tower_of_d_to_the_2d() {
        // d with about 2^25 bits: d = 3 * 2^33555456 + 2
        let d = Expr::nat(3u32).mul(&Expr::pow2(&Expr::nat(33555456u32))).add_n(2);
        let h = d.pow(&Expr::nat(2u32).mul(&d));
        let t = tower_eval(&h, &Precision::default()).unwrap();
        assert!(t.height >= 2);
        // log2 log2 h = log2(2d log2 d) ~ 1 + 33555457.58 + log2(33555457.58)
        let approx = 1.0 + (33555456.0 + 3f64.log2()) + (33555456.0f64 + 1.585).log2();
        let lo = t.low.to_f64().unwrap();
        let hi = t.high.to_f64().unwrap();
        assert_eq!(t.height, 2);
        assert!((lo - approx).abs() < 1e-3 && (hi - approx).abs() < 1e-3, "{t}");
    }

    #[test]
    fn json_round_trip() {
        let e = Expr::nat(3u32).pow(&Expr::nat(4u32).subset_bound(&Expr::nat(2u32))).add_n(1);
        let j = e.to_json();
        assert_eq!(Expr::from_json(&j).unwrap(), e);
        let alias = serde_json::json!({"op": "power", "args": ["2", {"op":"multiply","args":["3","5"]}]});
        let v = tower_eval(&Expr::from_json(&alias).unwrap(), &Precision::default()).unwrap();
        assert_eq!(v, LogTower::new(0, r(32768), r(32768)));
        assert!(Expr::from_json(&serde_json::json!({"op":"nope","args":["1","2"]})).is_err());
    }

    #[test]
    fn height_cap_is_reported() {
        let mut e = Expr::nat(4u32);
        for _ in 0..6 {
            e = Expr::pow2(&e);
        }
        let prec = Precision { height_cap: 2, ..Precision::default() };
        assert!(matches!(tower_eval(&e, &prec), Err(NumericError::HeightCap { .. })));
    }

    #[test]
    fn certifier_separates_neighbours() {
        let big = Expr::pow2(&Expr::pow2(&Expr::nat(70u32).pow(&Expr::nat(5u32))));
        let succ = big.add_n(1);
        let mut c = Certifier::new(Precision::default());
        assert_eq!(c.lt(&big, &succ), Verdict::Pass);
        assert_eq!(c.le(&succ, &big), Verdict::Unknown);
        let a = big.mul(&Expr::nat(3u32));
        let b = big.mul(&Expr::nat(4u32)).add_n(2);
        assert_eq!(c.lt(&a, &b), Verdict::Pass);
        let count = big.subset_count(&Expr::nat(5u32));
        let bound = Expr::pow(&big, &Expr::nat(5u32)).max(&big).add_n(1);
        assert_eq!(c.le(&count, &bound), Verdict::Pass);
        assert_eq!(c.lt(&big, &count), Verdict::Pass);
        assert_eq!(c.lt(&Expr::nat(5u32), &Expr::nat(3u32)), Verdict::Fail);
    }

    fn small_expr() -> impl Strategy<Value = Expr> {
        let leaf = (1u64..40).prop_map(Expr::nat);
        leaf.prop_recursive(3, 12, 2, |inner| {
            prop_oneof![
                (inner.clone(), inner.clone()).prop_map(|(a, b)| a.add(&b)),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| a.mul(&b)),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| a.max(&b)),
                (inner.clone(), 0u64..6).prop_map(|(a, k)| a.pow(&Expr::nat(k))),
                (inner, 0u64..4).prop_map(|(a, k)| a.subset_bound(&Expr::nat(k))),
            ]
        })
    }

    fn exact_value(e: &Expr) -> BigUint {
        match e.op() {
            Op::Const(c) => c.clone(),
            Op::Add(a, b) => exact_value(a) + exact_value(b),
            Op::Mul(a, b) => exact_value(a) * exact_value(b),
            Op::Max(a, b) => exact_value(a).max(exact_value(b)),
            Op::Pow(a, b) | Op::SubsetBound(a, b) => {
                num_traits::pow(exact_value(a), exact_value(b).to_usize().unwrap())
            }
            _ => unreachable!(),
        }
    }

    fn contains(t: &LogTower, v: &BigUint) -> bool {
        let exact = LogTower::exact(v);
        let lo = LogTower { height: t.height, low: t.low.clone(), high: t.low.clone() };
        let hi = LogTower { height: t.height, low: t.high.clone(), high: t.high.clone() };
        tower_cmp(&lo, &exact) != TowerOrdering::Greater && tower_cmp(&exact, &hi) != TowerOrdering::Greater
    }

    proptest! {
        #[test]
        fn towers_enclose_small_values(e in small_expr()) {
            let v = exact_value(&e);
            prop_assume!(v.bits() < 20_000);
            // force the tower path by evaluating without exact shortcuts at the top
            let t = tower_eval(&e, &Precision::default()).unwrap();
            prop_assert!(contains(&t, &v), "{} not in {}", v, t);
        }

        #[test]
        fn tower_arithmetic_encloses_when_forced(a in 2u64..5000, b in 2u64..5000, k in 1u64..60) {
            // multiply and power at heights >= 1, compared against exact values
            let arith = Arith { bits: 160 };
            let big = BigUint::from(a).pow(k as u32) * BigUint::from(b);
            let pa = arith.normalize(Point::int(a as i64), Dir::Down).unwrap();
            let e = arith.pow(&pa, &Point::int(k as i64), Dir::Down).unwrap();
            let e = arith.mul(&e, &Point::int(b as i64), Dir::Down).unwrap();
            let eu = arith.pow(&Point::int(a as i64), &Point::int(k as i64), Dir::Up).unwrap();
            let eu = arith.mul(&eu, &Point::int(b as i64), Dir::Up).unwrap();
            let v = Point { h: 0, m: BigRational::from_integer(BigInt::from(big)) };
            prop_assert!(cmp_points(&e, &v, 160) != TowerOrdering::Greater);
            prop_assert!(cmp_points(&v, &eu, 160) != TowerOrdering::Greater);
        }

        #[test]
        fn cmp_antisymmetric(h1 in 0u32..3, h2 in 0u32..3, a in 1i64..200, b in 1i64..200, w in 0i64..3) {
            let x = LogTower::new(h1, r(a), r(a + w));
            let y = LogTower::new(h2, r(b), r(b));
            prop_assert_eq!(tower_cmp(&x, &y), tower_cmp(&y, &x).reverse());
        }

        #[test]
        fn exact_count_below_power_bound(m in 1u64..30, k in 0u64..12) {
            prop_assume!(k != 1);
            prop_assume!(m >= 2 || k == 0);
            prop_assert!(subset_count(&n(m), &n(k), CountMode::Exact) <= subset_count(&n(m), &n(k), CountMode::PowerBound));
            prop_assert_eq!(subset_count(&n(m), &n(m), CountMode::Exact), BigUint::one() << m as usize);
        }
    }
}
