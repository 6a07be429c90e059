//! Finite-horizon conditions of the creature forcing: possibilities, the
//! orders `≤` and `≤_n`, fusion, thinning, catching ground-model reals,
//! timely and early reading of names, localisation and its
//! anti-localisation corollary.
//!
//! The limsup requirement on norms has no finite analogue; it is replaced by
//! the star rank (how many initial splits meet the `n + 1` log-norm
//! staircase), and operations report their exact norm losses instead.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive};
use serde::{Deserialize, Serialize};

use crate::connections::{least_outside, CellCode, ConnError, Slalom};
use crate::creatures::{bigness_refine, lognorm_at_least, norm, range_refine, Creature, CreatureError};
use crate::numeric::{subset_count, CountMode};

pub const POSS_CAP: u128 = 1_000_000;
pub const BRANCH_CAP: u128 = 100_000;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CondError {
    #[error("parameters: {0}")]
    Params(String),
    #[error("invalid condition: {0}")]
    Invalid(String),
    #[error("{what} count {count} exceeds the cap {cap}")]
    Cap { what: &'static str, count: u128, cap: u128 },
    #[error("possibility incompatible with the condition at level {0}")]
    Incompatible(usize),
    #[error("condition is not below the name's base condition at level {0}")]
    NotBelowBase(usize),
    #[error("chain element {index}: {reason}")]
    Chain { index: usize, reason: String },
    #[error("no level >= {0} with norm at least 1 in the horizon")]
    NoCatchLevel(usize),
    #[error("no split could be retained within the horizon")]
    HorizonExhausted,
    #[error("precondition ({clause}) fails at level {level}")]
    Precondition { clause: String, level: usize },
    #[error(transparent)]
    Creature(#[from] CreatureError),
    #[error(transparent)]
    Conn(#[from] ConnError),
}

/// `c`, `h`, `d` on a common horizon `N`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamTriple {
    pub c: Vec<usize>,
    pub h: Vec<usize>,
    pub d: Vec<u64>,
}

impl ParamTriple {
    pub fn new(c: Vec<usize>, h: Vec<usize>, d: Vec<u64>) -> Result<ParamTriple, CondError> {
        let p = ParamTriple { c, h, d };
        p.check()?;
        Ok(p)
    }

    pub fn check(&self) -> Result<(), CondError> {
        let n = self.c.len();
        if self.h.len() != n || self.d.len() != n {
            return Err(CondError::Params("c, h, d must share one horizon".into()));
        }
        for k in 0..n {
            if !(self.c[k] > self.h[k] && self.h[k] >= 1) {
                return Err(CondError::Params(format!("need c > h >= 1 at level {k}")));
            }
            if self.d[k] < 2 {
                return Err(CondError::Params(format!("need d >= 2 at level {k}")));
            }
        }
        Ok(())
    }

    pub fn horizon(&self) -> usize {
        self.c.len()
    }

    /// `c^{∇h}(k) = |[c(k)]^{<=h(k)}|`.
    pub fn c_nabla_h(&self, k: usize) -> BigUint {
        subset_count(&BigUint::from(self.c[k]), &BigUint::from(self.h[k]), CountMode::Exact)
    }
}

/// One creature per level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TruncCondition {
    pub params: ParamTriple,
    pub cells: Vec<Creature>,
}

/// One selected member (as a bitmask) per level of an initial segment.
pub type Possibility = Vec<u64>;

impl TruncCondition {
    pub fn new(params: ParamTriple, cells: Vec<Creature>) -> Result<TruncCondition, CondError> {
        params.check()?;
        if cells.len() != params.horizon() {
            return Err(CondError::Invalid("one cell per level required".into()));
        }
        for (k, cell) in cells.iter().enumerate() {
            if cell.arena() != params.c[k] || cell.cap() != params.h[k] {
                return Err(CondError::Invalid(format!("cell {k} does not match c({k}), h({k})")));
            }
        }
        Ok(TruncCondition { params, cells })
    }

    /// Every level carries all subsets of size at most `h`.
    pub fn full(params: ParamTriple) -> Result<TruncCondition, CondError> {
        let cells = (0..params.horizon())
            .map(|k| Creature::full(params.c[k], params.h[k]))
            .collect::<Result<Vec<_>, _>>()?;
        TruncCondition::new(params, cells)
    }

    pub fn horizon(&self) -> usize {
        self.cells.len()
    }

    pub fn splits(&self) -> Vec<usize> {
        (0..self.horizon()).filter(|&k| !self.cells[k].is_singleton()).collect()
    }

    pub fn is_split(&self, k: usize) -> bool {
        !self.cells[k].is_singleton()
    }

    /// The `n`-th split level.
    pub fn s(&self, n: usize) -> Option<usize> {
        self.splits().get(n).copied()
    }

    /// `|poss(p, < upto)|`.
    pub fn poss_count(&self, upto: usize) -> u128 {
        self.cells[..upto].iter().map(|c| c.len() as u128).product()
    }

    pub fn branch_count(&self) -> u128 {
        self.poss_count(self.horizon())
    }

    /// Largest `r` such that the first `r` splits have log-norm at least `n + 1`.
    pub fn star_rank(&self) -> Result<usize, CondError> {
        let mut r = 0;
        for (n, k) in self.splits().into_iter().enumerate() {
            let t = BigRational::from_integer((n as i64 + 1).into());
            if !lognorm_at_least(norm(&self.cells[k])?, self.params.d[k], &t)? {
                break;
            }
            r += 1;
        }
        Ok(r)
    }

    /// The branch extending `eta` by the first member of every later level.
    pub fn first_extension(&self, eta: &[u64]) -> Vec<u64> {
        let mut b = eta.to_vec();
        b.extend(self.cells[eta.len()..].iter().map(|c| c.masks()[0]));
        b
    }

    /// The slalom picked out by a full branch.
    pub fn generic_slalom(&self, branch: &[u64]) -> Slalom {
        let cells = branch.iter().map(|&m| (0..64).filter(|i| m >> i & 1 == 1).collect()).collect();
        Slalom::new(
            self.params.c.iter().map(|&v| v as u64).collect(),
            self.params.h.iter().map(|&v| v as u64).collect(),
            cells,
        )
        .expect("members respect the caps")
    }

    fn check_same_params(&self, other: &TruncCondition) -> Result<(), CondError> {
        if self.params != other.params {
            return Err(CondError::Params("conditions have different parameters".into()));
        }
        Ok(())
    }
}

impl fmt::Display for TruncCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, cell) in self.cells.iter().enumerate() {
            writeln!(f, "level {k}: c={} h={} d={} |p(k)|={}", self.params.c[k], self.params.h[k], self.params.d[k], cell.len())?;
        }
        Ok(())
    }
}

/// Condition JSON: `{"c":[...],"h":[...],"d":[...],"cells":[[[0,1],[2]],...]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionJson {
    pub c: Vec<usize>,
    pub h: Vec<usize>,
    pub d: Vec<u64>,
    pub cells: Vec<Vec<Vec<usize>>>,
}

impl TruncCondition {
    pub fn to_json(&self) -> ConditionJson {
        ConditionJson {
            c: self.params.c.clone(),
            h: self.params.h.clone(),
            d: self.params.d.clone(),
            cells: self.cells.iter().map(Creature::members).collect(),
        }
    }

    pub fn from_json(j: &ConditionJson) -> Result<TruncCondition, CondError> {
        let params = ParamTriple::new(j.c.clone(), j.h.clone(), j.d.clone())?;
        if j.cells.len() != params.horizon() {
            return Err(CondError::Invalid("one cell per level required".into()));
        }
        let cells = j
            .cells
            .iter()
            .enumerate()
            .map(|(k, m)| Creature::new(params.c[k], params.h[k], m))
            .collect::<Result<Vec<_>, _>>()?;
        TruncCondition::new(params, cells)
    }
}

impl Serialize for TruncCondition {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_json().serialize(s)
    }
}

impl<'de> Deserialize<'de> for TruncCondition {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        TruncCondition::from_json(&ConditionJson::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub valid: bool,
    pub violations: Vec<String>,
    pub split_levels: Vec<usize>,
    pub star_rank: usize,
}

/// Checks a raw condition and reports its splits and star rank.
pub fn validate(j: &ConditionJson) -> ValidationReport {
    match TruncCondition::from_json(j) {
        Ok(p) => ValidationReport {
            valid: true,
            violations: vec![],
            split_levels: p.splits(),
            star_rank: p.star_rank().unwrap_or(0),
        },
        Err(e) => ValidationReport { valid: false, violations: vec![e.to_string()], split_levels: vec![], star_rank: 0 },
    }
}

/// `poss(p, < upto)` in lexicographic member-index order.
pub fn possibilities_below(p: &TruncCondition, upto: usize) -> Result<Vec<Possibility>, CondError> {
    enumerate(&p.cells[..upto], POSS_CAP, "possibility")
}

/// `poss(p, <= k)`; `None` stands for `k = -1`.
pub fn possibilities(p: &TruncCondition, k: Option<usize>) -> Result<Vec<Possibility>, CondError> {
    match k {
        None => Ok(vec![vec![]]),
        Some(k) if k >= p.horizon() => Err(CondError::Params(format!("level {k} beyond the horizon"))),
        Some(k) => possibilities_below(p, k + 1),
    }
}

/// All full branches through `p`.
pub fn branches(p: &TruncCondition) -> Result<Vec<Vec<u64>>, CondError> {
    enumerate(&p.cells, BRANCH_CAP, "branch")
}

fn enumerate(cells: &[Creature], cap: u128, what: &'static str) -> Result<Vec<Vec<u64>>, CondError> {
    let count: u128 = cells.iter().map(|c| c.len() as u128).product();
    if count > cap {
        return Err(CondError::Cap { what, count, cap });
    }
    let mut out: Vec<Vec<u64>> = vec![Vec::with_capacity(cells.len())];
    for cell in cells {
        let mut next = Vec::with_capacity(out.len() * cell.len());
        for prefix in &out {
            for &m in cell.masks() {
                let mut v = prefix.clone();
                v.push(m);
                next.push(v);
            }
        }
        out = next;
    }
    Ok(out)
}

/// `p ∧ η`: the levels covered by `η` become the selected singletons.
pub fn and_restrict(p: &TruncCondition, eta: &[u64]) -> Result<TruncCondition, CondError> {
    if eta.len() > p.horizon() {
        return Err(CondError::Params("possibility longer than the horizon".into()));
    }
    let mut q = p.clone();
    for (k, &m) in eta.iter().enumerate() {
        if !p.cells[k].contains_mask(m) {
            return Err(CondError::Incompatible(k));
        }
        q.cells[k] = Creature::from_masks(p.params.c[k], p.params.h[k], vec![m])?;
    }
    Ok(q)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderMode {
    Plain,
    AtN(usize),
}

/// `q <= p`, or `q <=_n p`: additionally equal up to and including `s_n(q)`.
/// When `q` has fewer than `n + 1` splits, equality on the whole horizon is required.
pub fn order_check(q: &TruncCondition, p: &TruncCondition, mode: OrderMode) -> Result<bool, CondError> {
    q.check_same_params(p)?;
    let below = (0..q.horizon()).all(|k| q.cells[k].is_subfamily_of(&p.cells[k]));
    if !below {
        return Ok(false);
    }
    Ok(match mode {
        OrderMode::Plain => true,
        OrderMode::AtN(n) => {
            let upto = q.s(n).map_or(q.horizon(), |s| s + 1);
            (0..upto).all(|k| q.cells[k] == p.cells[k])
        }
    })
}

/// Fusion of a chain with `p_{n+1} <=_n p_n`: `q(k) = p_n(k)` for
/// `k ∈ (s_{n-1}(p_{n-1}), s_n(p_n)]`, tail from the last element.
pub fn fuse(chain: &[TruncCondition]) -> Result<TruncCondition, CondError> {
    fuse_from(chain, 0)
}

/// Fusion of a chain whose first element carries index `start`, so that
/// `chain[i]` plays the role of `p_{start + i}`.
pub fn fuse_from(chain: &[TruncCondition], start: usize) -> Result<TruncCondition, CondError> {
    let first = chain.first().ok_or(CondError::Chain { index: 0, reason: "empty chain".into() })?;
    for (i, p) in chain.iter().enumerate() {
        let n = start + i;
        p.check_same_params(first)?;
        if p.splits().len() < n + 1 {
            return Err(CondError::Chain { index: i, reason: format!("fewer than {} splits", n + 1) });
        }
        if i + 1 < chain.len() && !order_check(&chain[i + 1], p, OrderMode::AtN(n))? {
            return Err(CondError::Chain { index: i + 1, reason: format!("not <=_{n} its predecessor") });
        }
    }
    let mut cells = Vec::with_capacity(first.horizon());
    let mut from = 0;
    for (i, p) in chain.iter().enumerate() {
        let f = p.s(start + i).expect("checked above");
        cells.extend(p.cells[from..=f].iter().cloned());
        from = f + 1;
    }
    cells.extend(chain.last().expect("nonempty").cells[from..].iter().cloned());
    TruncCondition::new(first.params.clone(), cells)
}

/// Few possibilities: keeps splits `f(0) < f(1) < ...` with
/// `|poss(q, < f(n))| < gbound(f(n))` (and, if `staircase`, log-norm at least
/// `n + 1`), turning the levels in between and after the last kept split into
/// singletons (their first member).
pub fn thin(p: &TruncCondition, gbound: &[u128], staircase: bool) -> Result<TruncCondition, CondError> {
    if gbound.len() != p.horizon() {
        return Err(CondError::Params("gbound needs one entry per level".into()));
    }
    let splits = p.splits();
    if splits.is_empty() {
        return Ok(p.clone());
    }
    let mut kept: Vec<usize> = Vec::new();
    let mut poss_before: u128 = 1; // |poss(q, <= last kept)|
    for &k in &splits {
        let n = kept.len();
        if poss_before >= gbound[k] {
            continue;
        }
        if staircase {
            let t = BigRational::from_integer((n as i64 + 1).into());
            if !lognorm_at_least(norm(&p.cells[k])?, p.params.d[k], &t)? {
                continue;
            }
        }
        kept.push(k);
        poss_before = poss_before.saturating_mul(p.cells[k].len() as u128);
    }
    if kept.is_empty() {
        return Err(CondError::HorizonExhausted);
    }
    let keep: BTreeSet<usize> = kept.into_iter().collect();
    let cells = p
        .cells
        .iter()
        .enumerate()
        .map(|(k, cell)| {
            if keep.contains(&k) || cell.is_singleton() {
                Ok(cell.clone())
            } else {
                Creature::from_masks(cell.arena(), cell.cap(), vec![cell.masks()[0]])
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    TruncCondition::new(p.params.clone(), cells)
}

/// Catches a ground real: at the first `k >= n0` with `‖p(k)‖ >= 1`, keeps only
/// the first member containing `x(k)`.
pub fn catch_real(p: &TruncCondition, x: &[usize], n0: usize) -> Result<(TruncCondition, usize), CondError> {
    if x.len() != p.horizon() {
        return Err(CondError::Params("x needs one value per level".into()));
    }
    for k in n0..p.horizon() {
        if x[k] >= p.params.c[k] {
            return Err(CondError::Params(format!("x({k}) outside c({k})")));
        }
        if norm(&p.cells[k])? >= 1 {
            let t = *p.cells[k].masks().iter().find(|&&m| m >> x[k] & 1 == 1).expect("norm >= 1 covers the arena");
            let mut q = p.clone();
            q.cells[k] = Creature::from_masks(p.params.c[k], p.params.h[k], vec![t])?;
            return Ok((q, k));
        }
    }
    Err(CondError::NoCatchLevel(n0))
}

pub type EvalFn = Arc<dyn Fn(&[u64]) -> Vec<u64> + Send + Sync>;

/// A name for a member of `∏ A_n`, given as a deterministic map from full
/// branches through `base` (one member mask per level) to value tuples.
#[derive(Clone)]
pub struct NameOracle {
    pub base: TruncCondition,
    pub profile: Vec<u64>,
    pub eval: EvalFn,
}

impl fmt::Debug for NameOracle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NameOracle").field("profile", &self.profile).finish_non_exhaustive()
    }
}

/// Oracle table JSON: branch keys are comma-separated member indices in `base`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleJson {
    pub base: ConditionJson,
    pub profile: Vec<u64>,
    pub table: BTreeMap<String, Vec<u64>>,
}

impl NameOracle {
    pub fn new(base: TruncCondition, profile: Vec<u64>, eval: EvalFn) -> Result<NameOracle, CondError> {
        if profile.len() != base.horizon() || profile.contains(&0) {
            return Err(CondError::Params("profile needs one nonempty value set per level".into()));
        }
        Ok(NameOracle { base, profile, eval })
    }

    pub fn constant(base: TruncCondition, profile: Vec<u64>, values: Vec<u64>) -> Result<NameOracle, CondError> {
        NameOracle::new(base, profile, Arc::new(move |_: &[u64]| values.clone()))
    }

    pub fn eval(&self, branch: &[u64]) -> Vec<u64> {
        (self.eval)(branch)
    }

    /// Evaluates on every branch of `base`, checking the values lie in the profile.
    pub fn to_json(&self) -> Result<OracleJson, CondError> {
        let mut table = BTreeMap::new();
        for b in branches(&self.base)? {
            let key = b
                .iter()
                .enumerate()
                .map(|(k, &m)| self.base.cells[k].index_of(m).expect("branch member").to_string())
                .collect::<Vec<_>>()
                .join(",");
            table.insert(key, self.eval(&b));
        }
        Ok(OracleJson { base: self.base.to_json(), profile: self.profile.clone(), table })
    }

    pub fn from_json(j: &OracleJson) -> Result<NameOracle, CondError> {
        let base = TruncCondition::from_json(&j.base)?;
        let mut table: BTreeMap<Vec<u64>, Vec<u64>> = BTreeMap::new();
        for (key, vals) in &j.table {
            let idx: Vec<usize> = key
                .split(',')
                .filter(|s| !s.is_empty())
                .map(|s| s.trim().parse().map_err(|_| CondError::Params(format!("bad branch key {key:?}"))))
                .collect::<Result<_, _>>()?;
            if idx.len() != base.horizon() || idx.iter().enumerate().any(|(k, &i)| i >= base.cells[k].len()) {
                return Err(CondError::Params(format!("branch key {key:?} does not index base")));
            }
            if vals.len() != j.profile.len() || vals.iter().zip(&j.profile).any(|(v, a)| v >= a) {
                return Err(CondError::Params(format!("values for {key:?} leave the profile")));
            }
            let masks = idx.iter().enumerate().map(|(k, &i)| base.cells[k].masks()[i]).collect();
            table.insert(masks, vals.clone());
        }
        let total = base.branch_count();
        if table.len() as u128 != total {
            return Err(CondError::Params(format!("table covers {} of {total} branches", table.len())));
        }
        let table = Arc::new(table);
        NameOracle::new(base, j.profile.clone(), Arc::new(move |b: &[u64]| table[b].clone()))
    }

    fn check_below_base(&self, p: &TruncCondition) -> Result<(), CondError> {
        if p.horizon() != self.base.horizon() {
            return Err(CondError::Params("horizons differ".into()));
        }
        for k in 0..p.horizon() {
            if !p.cells[k].is_subfamily_of(&self.base.cells[k]) {
                return Err(CondError::NotBelowBase(k));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReadingMode {
    Timely,
    Early,
}

/// Branches of `p` in lexicographic order with their values.
fn evaluated(p: &TruncCondition, nu: &NameOracle) -> Result<Vec<(Vec<u64>, Vec<u64>)>, CondError> {
    nu.check_below_base(p)?;
    Ok(branches(p)?.into_iter().map(|b| {
        let v = nu.eval(&b);
        (b, v)
    }).collect())
}

/// Whether all branches sharing their first `prefix` levels agree on the first `n` values.
fn decides(rows: &[(Vec<u64>, Vec<u64>)], prefix: usize, n: usize) -> bool {
    rows.windows(2).all(|w| w[0].0[..prefix] != w[1].0[..prefix] || w[0].1[..n] == w[1].1[..n])
}

/// First level where reading fails: timely asks `p ∧ η` to decide `τ↾n` for
/// `η ∈ poss(p, <= n)` at splits `n`; early asks it for `η ∈ poss(p, < n)` at all `n`.
/// `τ↾n` is the tuple of values at indices below `n`.
pub fn reading_failure(p: &TruncCondition, nu: &NameOracle, mode: ReadingMode) -> Result<Option<usize>, CondError> {
    let rows = evaluated(p, nu)?;
    let n_max = p.horizon();
    Ok(match mode {
        ReadingMode::Timely => p.splits().into_iter().find(|&n| !decides(&rows, n + 1, n)),
        ReadingMode::Early => (1..=n_max).find(|&n| !decides(&rows, n, n)),
    })
}

pub fn check_reading(p: &TruncCondition, nu: &NameOracle, mode: ReadingMode) -> Result<bool, CondError> {
    Ok(reading_failure(p, nu, mode)?.is_none())
}

/// Norms before and after shrinking a split level.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SplitBook {
    pub level: usize,
    /// Number of bigness applications, `|poss(p_k, < k)|`.
    pub m: usize,
    pub norm_before: usize,
    pub norm_after: usize,
    pub d: u64,
}

impl SplitBook {
    /// `‖p(k)‖ + 1 <= d^m (‖q(k)‖ + 1)`.
    pub fn holds(&self) -> bool {
        let lhs = BigUint::from(self.norm_before + 1);
        let rhs = num_traits::pow(BigUint::from(self.d), self.m) * BigUint::from(self.norm_after + 1);
        lhs <= rhs
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EarlyReadOut {
    pub q: TruncCondition,
    pub book: Vec<SplitBook>,
}

fn mixed_radix(values: &[u64], radices: &[u64]) -> u128 {
    values.iter().zip(radices).fold(0u128, |acc, (&v, &r)| acc * r as u128 + v as u128)
}

/// Strengthens a timely-reading `p` to one that reads `ν` early. At each split
/// `k`, for every `η ∈ poss(p_k, < k)` bigness shrinks `p(k)` to members on which
/// `τ↾k` is constant.
pub fn early_read(p: &TruncCondition, nu: &NameOracle) -> Result<EarlyReadOut, CondError> {
    if let Some(level) = reading_failure(p, nu, ReadingMode::Timely)? {
        return Err(CondError::Precondition { clause: "timely reading".into(), level });
    }
    let n_levels = p.horizon();
    for n in 0..n_levels {
        let prod: u128 = nu.profile[..n].iter().map(|&a| a as u128).product();
        if prod > p.params.d[n] as u128 {
            return Err(CondError::Precondition { clause: "|prod_{i<n} A_i| <= d(n)".into(), level: n });
        }
    }
    for k in p.splits() {
        if p.poss_count(k) >= p.params.d[k] as u128 {
            return Err(CondError::Precondition { clause: "|poss(p,<k)| < d(k)".into(), level: k });
        }
    }
    let mut q = p.clone();
    let mut book = Vec::new();
    for k in p.splits() {
        let d = p.params.d[k];
        let etas = possibilities_below(&q, k)?;
        let mut m_cur = p.cells[k].clone();
        for eta in &etas {
            let coloring: Vec<usize> = m_cur
                .masks()
                .iter()
                .map(|&t| {
                    let mut pre = eta.clone();
                    pre.push(t);
                    let vals = nu.eval(&q.first_extension(&pre));
                    mixed_radix(&vals[..k], &nu.profile[..k]) as usize
                })
                .collect();
            m_cur = bigness_refine(&m_cur, &coloring, d)?.1;
        }
        book.push(SplitBook { level: k, m: etas.len(), norm_before: norm(&p.cells[k])?, norm_after: norm(&m_cur)?, d });
        q.cells[k] = m_cur;
    }
    Ok(EarlyReadOut { q, book })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelCase {
    Threshold,
    NonSplit,
    /// `2 m c^{∇h}(k) <= e(k)`: every value over `poss(p_k, <= k)`.
    FewPossibilities,
    /// `2 m a(k) <= d(k)`: range refinement into blocks of size `⌊e(k)/m⌋`.
    RangeRefined,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LocalizeOut {
    pub q: TruncCondition,
    pub phi: Slalom,
    pub cases: Vec<LevelCase>,
    pub book: Vec<SplitBook>,
}

fn values_at(q: &TruncCondition, nu: &NameOracle, etas: &[Possibility], k: usize) -> BTreeSet<u64> {
    etas.iter().map(|eta| nu.eval(&q.first_extension(eta))[k]).collect()
}

/// Localises an early-read name `ẋ ∈ ∏a` by a ground slalom `φ ∈ S(a, e)` on
/// levels `k >= k0`, shrinking split levels as needed.
pub fn localize(p: &TruncCondition, nu: &NameOracle, a: &[u64], e: &[u64], k0: usize) -> Result<LocalizeOut, CondError> {
    let n_levels = p.horizon();
    if a.len() != n_levels || e.len() != n_levels || nu.profile != a {
        return Err(CondError::Params("a, e and the name's profile must cover the horizon".into()));
    }
    if let Some(level) = reading_failure(p, nu, ReadingMode::Early)? {
        return Err(CondError::Precondition { clause: "early reading".into(), level });
    }
    let cnh: Vec<BigUint> = (0..n_levels).map(|k| p.params.c_nabla_h(k)).collect();
    let mut prod_a = BigUint::one();
    let mut prod_c = BigUint::one();
    for n in 0..n_levels {
        if n >= k0 {
            if prod_a > BigUint::from(p.params.d[n]) {
                return Err(CondError::Precondition { clause: "L1: prod a <= d".into(), level: n });
            }
            if prod_c > BigUint::from(e[n]) {
                return Err(CondError::Precondition { clause: "L1: prod c^{nabla h} <= e".into(), level: n });
            }
            let m = p.poss_count(n);
            if m > e[n] as u128 {
                return Err(CondError::Precondition { clause: "iii: |poss(p,<k)| <= e(k)".into(), level: n });
            }
            if p.is_split(n) {
                let m = BigUint::from(m);
                let two_m = &m * 2u32;
                let sub1 = &two_m * &cnh[n] <= BigUint::from(e[n]);
                let sub2 = &two_m * a[n] <= BigUint::from(p.params.d[n]);
                if m > BigUint::from(p.params.d[n]) || !(sub1 || sub2) {
                    return Err(CondError::Precondition { clause: "ii: thinness".into(), level: n });
                }
            }
        }
        prod_a *= a[n];
        prod_c *= &cnh[n];
    }

    let mut q = p.clone();
    let mut cells: Vec<Vec<u64>> = vec![Vec::new(); n_levels];
    let mut cases = Vec::with_capacity(n_levels);
    let mut book = Vec::new();
    for k in 0..n_levels {
        if k < k0 {
            cases.push(LevelCase::Threshold);
            continue;
        }
        let etas = possibilities_below(&q, k)?;
        let m = etas.len();
        if !p.is_split(k) {
            cells[k] = values_at(&q, nu, &etas, k).into_iter().collect();
            cases.push(LevelCase::NonSplit);
            continue;
        }
        let two_m = 2 * m as u128;
        let sub1 = BigUint::from(two_m) * &cnh[k] <= BigUint::from(e[k]);
        if sub1 {
            let full = possibilities_below(&q, k + 1)?;
            cells[k] = values_at(&q, nu, &full, k).into_iter().collect();
            cases.push(LevelCase::FewPossibilities);
            continue;
        }
        let block = (e[k] / m as u64) as usize;
        let mut m_cur = p.cells[k].clone();
        let mut phi_k = BTreeSet::new();
        for eta in &etas {
            let f: Vec<usize> = m_cur
                .masks()
                .iter()
                .map(|&t| {
                    let mut pre = eta.clone();
                    pre.push(t);
                    nu.eval(&q.first_extension(&pre))[k] as usize
                })
                .collect();
            let next = range_refine(&m_cur, &f, a[k] as usize, block, p.params.d[k])?;
            for &t in next.masks() {
                phi_k.insert(f[m_cur.index_of(t).expect("refinement is a subfamily")] as u64);
            }
            m_cur = next;
        }
        book.push(SplitBook { level: k, m, norm_before: norm(&p.cells[k])?, norm_after: norm(&m_cur)?, d: p.params.d[k] });
        q.cells[k] = m_cur;
        cells[k] = phi_k.into_iter().collect();
        cases.push(LevelCase::RangeRefined);
    }
    for (k, cell) in cells.iter().enumerate() {
        if cell.len() as u64 > e[k] {
            return Err(CondError::Precondition { clause: "|phi(k)| <= e(k)".into(), level: k });
        }
    }
    let phi = Slalom::new(a.to_vec(), e.to_vec(), cells)?;
    Ok(LocalizeOut { q, phi, cases, book })
}

/// Every branch through `q` has `x(k) ∈ φ(k)` for `k >= k0`; returns the first failing branch.
pub fn localization_failure(
    q: &TruncCondition,
    nu: &NameOracle,
    phi: &Slalom,
    k0: usize,
) -> Result<Option<(Vec<u64>, usize)>, CondError> {
    for (b, x) in evaluated(q, nu)? {
        if let Some(k) = (k0..q.horizon()).find(|&k| !phi.cells[k].contains(&x[k])) {
            return Ok(Some((b, k)));
        }
    }
    Ok(None)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AntiLocalizeOut {
    pub q: TruncCondition,
    pub phi: Slalom,
    /// The ground real `y = G(φ)` anti-localising the generic slalom.
    pub y: Vec<u64>,
}

/// The anti-localisation corollary: a name for a slalom in `S(b, g)` is given
/// through the codes of its cells (empty cells patched to `{0}`), so it is a
/// name for a real in `∏a` with `a = b^{∇g}`. That real is localised with
/// `e = ⌈b/g⌉ - 1`, and `y(k)` is the least element of `b(k)` outside every
/// cell coded in `φ(k)`.
pub fn anti_localize(p: &TruncCondition, cell_name: &NameOracle, b: &[u64], g: &[u64], k0: usize) -> Result<AntiLocalizeOut, CondError> {
    let a: Vec<u64> = b
        .iter()
        .zip(g)
        .map(|(&bi, &gi)| {
            subset_count(&BigUint::from(bi), &BigUint::from(gi), CountMode::Exact).to_u64().expect("small a")
        })
        .collect();
    let e: Vec<u64> = b.iter().zip(g).map(|(&bi, &gi)| bi.div_ceil(gi) - 1).collect();
    let out = localize(p, cell_name, &a, &e, k0)?;
    let y = (0..b.len()).map(|k| least_outside(b[k], g[k], &out.phi.cells[k])).collect();
    Ok(AntiLocalizeOut { q: out.q, phi: out.phi, y })
}

/// Decodes a cell name's value at level `k` into the slalom cell it names.
pub fn decode_cell(b: u64, g: u64, code: u64) -> Vec<u64> {
    CellCode::new(b, g).decode(code).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(c: &[usize], h: &[usize], d: &[u64]) -> ParamTriple {
        ParamTriple::new(c.to_vec(), h.to_vec(), d.to_vec()).unwrap()
    }

    fn cond(par: ParamTriple, cells: &[&[&[usize]]]) -> TruncCondition {
        let cells = cells
            .iter()
            .enumerate()
            .map(|(k, ms)| Creature::new(par.c[k], par.h[k], &ms.iter().map(|m| m.to_vec()).collect::<Vec<_>>()).unwrap())
            .collect();
        TruncCondition::new(par, cells).unwrap()
    }

    #[test]
    fn validation() {
        let par = params(&[3, 3], &[1, 1], &[2, 2]);
        let p = cond(par.clone(), &[&[&[0]], &[&[1]]]);
        let r = validate(&p.to_json());
        assert!(r.valid && r.split_levels.is_empty() && r.star_rank == 0);
        // norm 3 with d = 2: (3 + 1) >= 2^2, so the first split meets the staircase
        let par = params(&[4], &[3], &[2]);
        let p = TruncCondition::full(par).unwrap();
        assert_eq!(validate(&p.to_json()).star_rank, 1);
        let mut bad = p.to_json();
        bad.cells[0].push(vec![0, 1, 2, 3]);
        assert!(!validate(&bad).valid);
    }

    #[test]
    fn possibility_counts() {
        let par = params(&[3, 3, 3], &[1, 1, 1], &[2, 2, 2]);
        let p = cond(par, &[&[&[0]], &[&[0], &[1], &[2]], &[&[0], &[1]]]);
        assert_eq!(possibilities(&p, Some(2)).unwrap().len(), 6);
        assert_eq!(possibilities(&p, Some(0)).unwrap().len(), 1);
        assert_eq!(possibilities(&p, None).unwrap(), vec![Vec::<u64>::new()]);
        let poss = possibilities(&p, Some(2)).unwrap();
        assert_eq!(poss[0], vec![1, 1, 1]);
        assert_eq!(poss[1], vec![1, 1, 2]);
    }

    #[test]
    fn restriction_and_order() {
        let p = TruncCondition::full(params(&[3, 3, 3], &[1, 1, 1], &[2, 2, 2])).unwrap();
        assert_eq!(and_restrict(&p, &[]).unwrap(), p);
        let eta = vec![2, 4, 1];
        let q = and_restrict(&p, &eta).unwrap();
        assert!(q.splits().is_empty());
        assert!(order_check(&q, &p, OrderMode::Plain).unwrap());
        assert!(order_check(&p, &p, OrderMode::AtN(1)).unwrap());
        assert!(!order_check(&p, &q, OrderMode::Plain).unwrap());
        assert_eq!(and_restrict(&q, &[4]), Err(CondError::Incompatible(0)));
    }

    #[test]
    fn fusion_of_restricted_chain() {
        let p0 = TruncCondition::full(params(&[3; 6], &[1; 6], &[2; 6])).unwrap();
        // p1 freezes level 1 (after s_0 = 0); p2 freezes level 3 (after s_1 = 2)
        let mut p1 = p0.clone();
        p1.cells[1] = Creature::singleton(3, 1, &[0]).unwrap();
        let mut p2 = p1.clone();
        p2.cells[3] = Creature::singleton(3, 1, &[2]).unwrap();
        let chain = vec![p0.clone(), p1.clone(), p2.clone()];
        let q = fuse(&chain).unwrap();
        for (n, pn) in chain.iter().enumerate() {
            assert!(order_check(&q, pn, OrderMode::AtN(n)).unwrap(), "n = {n}");
        }
        assert_eq!(fuse(std::slice::from_ref(&p0)).unwrap(), p0);
        assert_eq!(fuse(&[p0.clone(), p0.clone(), p0.clone()]).unwrap(), p0);
        let broken = vec![p0.clone(), p2.clone(), p1];
        assert!(matches!(fuse(&broken), Err(CondError::Chain { .. })));
    }

    #[test]
    fn thinning() {
        let single = cond(params(&[3, 3], &[1, 1], &[2, 2]), &[&[&[0]], &[&[1]]]);
        assert_eq!(thin(&single, &[1, 1], true).unwrap(), single);
        let p = TruncCondition::full(params(&[3, 3, 3], &[1, 1, 1], &[2, 2, 2])).unwrap();
        assert_eq!(thin(&p, &[u128::MAX; 3], false).unwrap(), p);
        // level 1 sees 4 possibilities below it (the empty set included), so gbound 3 forces it out
        let q = thin(&p, &[2, 3, 5], false).unwrap();
        assert_eq!(q.splits(), vec![0, 2]);
        for k in q.splits() {
            assert!((possibilities_below(&q, k).unwrap().len() as u128) < [2, 3, 5][k]);
        }
        assert_eq!(thin(&p, &[1, 1, 1], false), Err(CondError::HorizonExhausted));
    }

    #[test]
    fn catching() {
        let p = TruncCondition::full(params(&[4, 4, 4], &[2, 2, 2], &[2, 2, 2])).unwrap();
        let (q, k) = catch_real(&p, &[3, 1, 2], 1).unwrap();
        assert_eq!(k, 1);
        assert!(q.cells[1].masks()[0] >> 1 & 1 == 1 && q.cells[1].is_singleton());
        let s = cond(params(&[3, 3], &[1, 1], &[2, 2]), &[&[&[0]], &[&[0]]]);
        assert_eq!(catch_real(&s, &[1, 1], 0), Err(CondError::NoCatchLevel(0)));
    }

    #[test]
    fn reading_modes() {
        let par = params(&[3, 3], &[1, 1], &[4, 4]);
        let p = cond(par.clone(), &[&[&[0]], &[&[0], &[1], &[2]]]);
        let konst = NameOracle::constant(p.clone(), vec![2, 2], vec![1, 0]).unwrap();
        assert!(check_reading(&p, &konst, ReadingMode::Timely).unwrap());
        assert!(check_reading(&p, &konst, ReadingMode::Early).unwrap());
        // value at index 0 reads the level-1 member
        let nu = NameOracle::new(p.clone(), vec![2, 2], Arc::new(|b: &[u64]| vec![(b[1] == 1) as u64, 0])).unwrap();
        assert!(check_reading(&p, &nu, ReadingMode::Timely).unwrap());
        assert!(!check_reading(&p, &nu, ReadingMode::Early).unwrap());
        let single = and_restrict(&p, &[1, 2]).unwrap();
        assert!(check_reading(&single, &nu, ReadingMode::Early).unwrap());
    }

    #[test]
    fn oracle_tables_round_trip() {
        let p = TruncCondition::full(params(&[3, 3], &[1, 1], &[4, 4])).unwrap();
        let nu = NameOracle::new(p.clone(), vec![3, 3], Arc::new(|b: &[u64]| vec![b[0].trailing_zeros().min(2) as u64, b[1].trailing_zeros().min(2) as u64])).unwrap();
        let j = nu.to_json().unwrap();
        // members sorted by mask: index 0 is the empty set
        assert_eq!(j.table["2,1"], vec![1, 0]);
        let back = NameOracle::from_json(&j).unwrap();
        for b in branches(&p).unwrap() {
            assert_eq!(back.eval(&b), nu.eval(&b));
        }
    }

    #[test]
    fn early_read_toy() {
        // c=(4,6), h=(1,3), d=(2,4), A=(2,2), one split at level 1
        let par = params(&[4, 6], &[1, 3], &[2, 4]);
        let mut cells = vec![Creature::singleton(4, 1, &[0]).unwrap()];
        cells.push(Creature::full(6, 3).unwrap());
        let p = TruncCondition::new(par, cells).unwrap();
        let nu = NameOracle::new(
            p.clone(),
            vec![2, 2],
            Arc::new(|b: &[u64]| vec![(b[1].count_ones() % 2) as u64, b[1] & 1]),
        )
        .unwrap();
        assert!(!check_reading(&p, &nu, ReadingMode::Early).unwrap());
        let out = early_read(&p, &nu).unwrap();
        assert!(check_reading(&out.q, &nu, ReadingMode::Early).unwrap());
        assert!(order_check(&out.q, &p, OrderMode::Plain).unwrap());
        assert!(out.book.iter().all(SplitBook::holds));
        let colours: BTreeSet<u64> = out.q.cells[1].masks().iter().map(|&t| (t.count_ones() % 2) as u64).collect();
        assert_eq!(colours.len(), 1);
        // an already early name costs nothing
        let again = early_read(&out.q, &nu).unwrap();
        assert_eq!(again.q, out.q);
    }

    #[test]
    fn localize_subcases() {
        // level 0 splits with few possibilities below, level 1 needs range refinement
        let par = params(&[3, 4], &[1, 2], &[2, 40]);
        let p = TruncCondition::full(par.clone()).unwrap();
        let a = vec![3, 5];
        // c^{∇h} = (4, 11); e(0) >= 2·1·4, e(1) >= 4 with 2·|poss(<1)|·a(1) = 30 <= 40
        let e = vec![8, 4];
        let nu = NameOracle::new(
            p.clone(),
            a.clone(),
            Arc::new(|b: &[u64]| vec![b[0].trailing_zeros().min(2) as u64, ((b[0] | b[1]).count_ones() as u64 + b[1]) % 5]),
        )
        .unwrap();
        let out = localize(&p, &nu, &a, &e, 0).unwrap();
        assert_eq!(out.cases, vec![LevelCase::FewPossibilities, LevelCase::RangeRefined]);
        assert_eq!(localization_failure(&out.q, &nu, &out.phi, 0).unwrap(), None);
        assert!(out.book.iter().all(SplitBook::holds));
        let single = and_restrict(&p, &[1, 3]).unwrap();
        let out = localize(&single, &nu, &a, &e, 0).unwrap();
        assert!(out.phi.cells.iter().all(|c| c.len() == 1));
        assert!(matches!(localize(&p, &nu, &a, &[8, 1], 0), Err(CondError::Precondition { .. })));
    }

    proptest! {
        #[test]
        fn order_laws(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = TruncCondition::full(params(&[3; 4], &[1; 4], &[2; 4])).unwrap();
            let poss = possibilities(&p, Some(rng.gen_range(0..4))).unwrap();
            let eta = &poss[rng.gen_range(0..poss.len())];
            let q = and_restrict(&p, eta).unwrap();
            prop_assert!(order_check(&q, &p, OrderMode::Plain).unwrap());
            let r = and_restrict(&q, &eta[..eta.len().min(1)]).unwrap();
            prop_assert!(order_check(&r, &p, OrderMode::Plain).unwrap());
            for n in 0..4 {
                if order_check(&q, &p, OrderMode::AtN(n)).unwrap() {
                    for m in 0..=n {
                        prop_assert!(order_check(&q, &p, OrderMode::AtN(m)).unwrap());
                    }
                }
            }
        }

        #[test]
        fn caught_reals_land_in_the_slalom(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = TruncCondition::full(params(&[4; 3], &[2; 3], &[2; 3])).unwrap();
            let x: Vec<usize> = (0..3).map(|_| rng.gen_range(0..4)).collect();
            let (q, k) = catch_real(&p, &x, rng.gen_range(0..3)).unwrap();
            for b in branches(&q).unwrap() {
                prop_assert!(q.generic_slalom(&b).cells[k].contains(&(x[k] as u64)));
            }
        }
    }
}
