//! Finite-support products of the single posets on a shared horizon.
//!
//! A product condition is handled through its flattening: the single
//! condition whose level `k * r + j` is the level-`k` creature of the `j`-th
//! support coordinate (`r` coordinates, sorted by name). Product
//! possibilities below level `k` are then the flat possibilities below
//! `k * r`, and under modesty the single-poset reading, early reading and
//! localisation machinery applies verbatim.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::conditions::{
    and_restrict, branches, early_read, fuse_from, order_check, possibilities_below, reading_failure, CondError,
    ConditionJson, NameOracle, OrderMode, ParamTriple, ReadingMode, SplitBook, TruncCondition,
};
use crate::creatures::{lognorm_at_least, norm, range_refine, Creature, CreatureError};
use crate::numeric::{Certifier, Expr, Precision, Verdict};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProdError {
    #[error("invalid product condition: {0}")]
    Invalid(String),
    #[error("condition is not modest at level {0}")]
    NotModest(usize),
    #[error("chain element {index}: {reason}")]
    Chain { index: usize, reason: String },
    #[error("no split is left to schedule on the horizon")]
    InsufficientSplits,
    #[error("coordinate {coord} has no level >= {n0} with norm at least 1")]
    NoCatchLevel { coord: String, n0: usize },
    #[error("the name reads coordinates outside B")]
    DependenceLeak { first: ProductBranch, second: ProductBranch },
    #[error("precondition ({clause}) fails at level {level}{}", coord.as_ref().map(|c| format!(", coordinate {c}")).unwrap_or_default())]
    Precondition { clause: String, level: usize, coord: Option<String> },
    #[error(transparent)]
    Cond(#[from] CondError),
    #[error(transparent)]
    Creature(#[from] CreatureError),
}

/// Per coordinate, one member mask per level of an initial segment.
pub type ProductBranch = BTreeMap<String, Vec<u64>>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProductCondition {
    /// Coordinate space: every known coordinate and the family it belongs to.
    pub owners: BTreeMap<String, String>,
    /// Support and parts.
    pub parts: BTreeMap<String, TruncCondition>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoordJson {
    pub owner: String,
}

/// `{"coords":{"xi0":{"owner":"alpha"}},"parts":{"xi0":<condition>}}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProductJson {
    pub coords: BTreeMap<String, CoordJson>,
    pub parts: BTreeMap<String, ConditionJson>,
}

impl ProductCondition {
    pub fn new(owners: BTreeMap<String, String>, parts: BTreeMap<String, TruncCondition>) -> Result<ProductCondition, ProdError> {
        let p = ProductCondition { owners, parts };
        p.check()?;
        Ok(p)
    }

    /// All coordinates owned by one family, as `xi0, xi1, ...`.
    pub fn single_family(owner: &str, parts: Vec<TruncCondition>) -> Result<ProductCondition, ProdError> {
        let parts: BTreeMap<String, TruncCondition> = parts.into_iter().enumerate().map(|(i, p)| (format!("xi{i}"), p)).collect();
        let owners = parts.keys().map(|k| (k.clone(), owner.to_string())).collect();
        ProductCondition::new(owners, parts)
    }

    fn check(&self) -> Result<(), ProdError> {
        let first = self.parts.values().next().ok_or(ProdError::Invalid("empty support".into()))?;
        let mut family: BTreeMap<&str, &ParamTriple> = BTreeMap::new();
        for (xi, part) in &self.parts {
            let owner = self.owners.get(xi).ok_or_else(|| ProdError::Invalid(format!("{xi} has no owner")))?;
            if part.horizon() != first.horizon() {
                return Err(ProdError::Invalid("parts must share one horizon".into()));
            }
            if let Some(prev) = family.insert(owner, &part.params) {
                if prev != &part.params {
                    return Err(ProdError::Invalid(format!("coordinates of {owner} disagree on parameters")));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> ProductJson {
        ProductJson {
            coords: self.owners.iter().map(|(k, o)| (k.clone(), CoordJson { owner: o.clone() })).collect(),
            parts: self.parts.iter().map(|(k, p)| (k.clone(), p.to_json())).collect(),
        }
    }

    pub fn from_json(j: &ProductJson) -> Result<ProductCondition, ProdError> {
        let owners = j.coords.iter().map(|(k, c)| (k.clone(), c.owner.clone())).collect();
        let parts = j
            .parts
            .iter()
            .map(|(k, c)| Ok((k.clone(), TruncCondition::from_json(c)?)))
            .collect::<Result<_, CondError>>()?;
        ProductCondition::new(owners, parts)
    }

    pub fn support(&self) -> Vec<String> {
        self.parts.keys().cloned().collect()
    }

    pub fn width(&self) -> usize {
        self.parts.len()
    }

    pub fn horizon(&self) -> usize {
        self.parts.values().next().map_or(0, TruncCondition::horizon)
    }

    pub fn part(&self, xi: &str) -> Result<&TruncCondition, ProdError> {
        self.parts.get(xi).ok_or_else(|| ProdError::Invalid(format!("{xi} not in the support")))
    }

    /// First level split by two coordinates.
    pub fn modesty_violation(&self) -> Option<usize> {
        (0..self.horizon()).find(|&k| self.parts.values().filter(|p| p.is_split(k)).count() > 1)
    }

    pub fn is_modest(&self) -> bool {
        self.modesty_violation().is_none()
    }

    fn require_modest(&self) -> Result<(), ProdError> {
        self.modesty_violation().map_or(Ok(()), |k| Err(ProdError::NotModest(k)))
    }

    /// Product split levels with their owners, ascending (repeats levels if not modest).
    pub fn splits(&self) -> Vec<(usize, String)> {
        let mut out: Vec<(usize, String)> =
            self.parts.iter().flat_map(|(xi, p)| p.splits().into_iter().map(move |k| (k, xi.clone()))).collect();
        out.sort();
        out
    }

    pub fn s(&self, n: usize) -> Option<usize> {
        self.splits().get(n).map(|s| s.0)
    }

    pub fn split_owner(&self, k: usize) -> Option<String> {
        self.parts.iter().find(|(_, p)| p.is_split(k)).map(|(xi, _)| xi.clone())
    }

    /// `|poss(p, < upto)|`.
    pub fn poss_count(&self, upto: usize) -> u128 {
        self.parts.values().map(|p| p.poss_count(upto)).product()
    }

    /// The interleaved single condition.
    pub fn flatten(&self) -> Result<TruncCondition, ProdError> {
        let parts: Vec<&TruncCondition> = self.parts.values().collect();
        let n = self.horizon();
        let mut c = Vec::with_capacity(n * parts.len());
        let mut h = Vec::with_capacity(n * parts.len());
        let mut d = Vec::with_capacity(n * parts.len());
        let mut cells = Vec::with_capacity(n * parts.len());
        for k in 0..n {
            for p in &parts {
                c.push(p.params.c[k]);
                h.push(p.params.h[k]);
                d.push(p.params.d[k]);
                cells.push(p.cells[k].clone());
            }
        }
        Ok(TruncCondition::new(ParamTriple::new(c, h, d)?, cells)?)
    }

    /// Inverse of [`ProductCondition::flatten`], keeping this condition's coordinate space.
    pub fn unflatten(&self, flat: &TruncCondition) -> Result<ProductCondition, ProdError> {
        let r = self.width();
        let mut parts = self.parts.clone();
        for (j, part) in parts.values_mut().enumerate() {
            for k in 0..part.horizon() {
                part.cells[k] = flat.cells[k * r + j].clone();
            }
        }
        ProductCondition::new(self.owners.clone(), parts)
    }

    /// Splits a flat (prefix of a) branch into per-coordinate prefixes.
    pub fn unflatten_branch(&self, b: &[u64]) -> ProductBranch {
        let r = self.width();
        self.parts
            .keys()
            .enumerate()
            .map(|(j, xi)| (xi.clone(), b.iter().skip(j).step_by(r).copied().collect()))
            .collect()
    }

    pub fn flatten_branch(&self, b: &ProductBranch) -> Vec<u64> {
        let cols: Vec<&Vec<u64>> = self.parts.keys().map(|xi| &b[xi]).collect();
        let len = cols.iter().map(|c| c.len()).min().unwrap_or(0);
        (0..len).flat_map(|k| cols.iter().map(move |c| c[k])).collect()
    }
}

impl fmt::Display for ProductCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (xi, p) in &self.parts {
            writeln!(f, "{xi} ({}):", self.owners[xi])?;
            write!(f, "{p}")?;
        }
        Ok(())
    }
}

impl Serialize for ProductCondition {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_json().serialize(s)
    }
}

pub type ProductEval = Arc<dyn Fn(&ProductBranch) -> Vec<u64> + Send + Sync>;

/// A name for a member of `∏ X_k` over product branches through `base`.
#[derive(Clone)]
pub struct ProductName {
    pub base: ProductCondition,
    pub profile: Vec<u64>,
    pub eval: ProductEval,
}

impl fmt::Debug for ProductName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProductName").field("profile", &self.profile).finish_non_exhaustive()
    }
}

/// Product oracle table: keys are comma-separated member indices of the
/// flattened base branch (level by level, coordinates in name order).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProductOracleJson {
    pub base: ProductJson,
    pub profile: Vec<u64>,
    pub table: BTreeMap<String, Vec<u64>>,
}

impl ProductName {
    pub fn new(base: ProductCondition, profile: Vec<u64>, eval: ProductEval) -> Result<ProductName, ProdError> {
        if profile.len() != base.horizon() || profile.contains(&0) {
            return Err(ProdError::Invalid("profile needs one nonempty value set per level".into()));
        }
        Ok(ProductName { base, profile, eval })
    }

    pub fn eval(&self, b: &ProductBranch) -> Vec<u64> {
        (self.eval)(b)
    }

    pub fn to_json(&self) -> Result<ProductOracleJson, ProdError> {
        let flat = self.base.flatten()?;
        let mut table = BTreeMap::new();
        for b in branches(&flat)? {
            let key = b.iter().enumerate().map(|(k, &m)| flat.cells[k].index_of(m).expect("member").to_string()).collect::<Vec<_>>();
            table.insert(key.join(","), self.eval(&self.base.unflatten_branch(&b)));
        }
        Ok(ProductOracleJson { base: self.base.to_json(), profile: self.profile.clone(), table })
    }

    pub fn from_json(j: &ProductOracleJson) -> Result<ProductName, ProdError> {
        let base = ProductCondition::from_json(&j.base)?;
        let flat = base.flatten()?;
        let mut table: BTreeMap<ProductBranch, Vec<u64>> = BTreeMap::new();
        for (key, vals) in &j.table {
            let idx: Vec<usize> = key
                .split(',')
                .filter(|s| !s.is_empty())
                .map(|s| s.trim().parse().map_err(|_| ProdError::Invalid(format!("bad branch key {key:?}"))))
                .collect::<Result<_, _>>()?;
            if idx.len() != flat.horizon() || idx.iter().enumerate().any(|(k, &i)| i >= flat.cells[k].len()) {
                return Err(ProdError::Invalid(format!("branch key {key:?} does not index base")));
            }
            if vals.len() != j.profile.len() || vals.iter().zip(&j.profile).any(|(v, a)| v >= a) {
                return Err(ProdError::Invalid(format!("values for {key:?} leave the profile")));
            }
            let masks: Vec<u64> = idx.iter().enumerate().map(|(k, &i)| flat.cells[k].masks()[i]).collect();
            table.insert(base.unflatten_branch(&masks), vals.clone());
        }
        if table.len() as u128 != flat.branch_count() {
            return Err(ProdError::Invalid(format!("table covers {} of {} branches", table.len(), flat.branch_count())));
        }
        let table = Arc::new(table);
        ProductName::new(base, j.profile.clone(), Arc::new(move |b: &ProductBranch| table[b].clone()))
    }

    /// Branches through `p` must be branches through `base`.
    fn check_below_base(&self, p: &ProductCondition) -> Result<(), ProdError> {
        for (xi, bp) in &self.base.parts {
            let part = p.parts.get(xi).ok_or_else(|| ProdError::Invalid(format!("{xi} missing from the condition")))?;
            for k in 0..part.horizon() {
                if !part.cells[k].is_subfamily_of(&bp.cells[k]) {
                    return Err(ProdError::Invalid(format!("{xi} is not below the name's base at level {k}")));
                }
            }
        }
        Ok(())
    }

    /// The same name on flat branches of `p`; the value at level `k` sits at
    /// flat index `k * r + r - 1`, all other flat values are the constant 0.
    pub fn flat_oracle(&self, p: &ProductCondition) -> Result<NameOracle, ProdError> {
        self.check_below_base(p)?;
        let flat = p.flatten()?;
        let r = p.width();
        let profile = (0..flat.horizon()).map(|i| if i % r == r - 1 { self.profile[i / r] } else { 1 }).collect();
        let shape = p.clone();
        let nu = self.clone();
        let eval = Arc::new(move |b: &[u64]| {
            let vals = nu.eval(&shape.unflatten_branch(b));
            (0..b.len()).map(|i| if i % r == r - 1 { vals[i / r] } else { 0 }).collect()
        });
        Ok(NameOracle::new(flat, profile, eval)?)
    }
}

/// Branches of `p` with their values, flat order.
fn rows(p: &ProductCondition, nu: &ProductName) -> Result<Vec<(Vec<u64>, Vec<u64>)>, ProdError> {
    nu.check_below_base(p)?;
    let flat = p.flatten()?;
    Ok(branches(&flat)?.into_iter().map(|b| {
        let v = nu.eval(&p.unflatten_branch(&b));
        (b, v)
    }).collect())
}

fn flat_error(p: &ProductCondition, e: CondError) -> ProdError {
    match e {
        CondError::Precondition { clause, level } => {
            let r = p.width();
            ProdError::Precondition { clause, level: level / r, coord: p.support().get(level % r).cloned() }
        }
        e => ProdError::Cond(e),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Staircase {
    /// No norm requirement on scheduled splits.
    Off,
    /// The `j`-th split kept in a coordinate has log-norm at least `j + 1`.
    PerCoordinate,
    /// The `n`-th product split has log-norm at least `n + 1`.
    Global,
}

/// Modest refinement: visits the support round-robin, giving each visited
/// coordinate its next admissible split above the last scheduled level; all
/// unscheduled cells become singletons (their first member).
pub fn modest_refine(p: &ProductCondition, staircase: Staircase) -> Result<ProductCondition, ProdError> {
    let support = p.support();
    let r = support.len();
    let mut keep: BTreeMap<&str, BTreeSet<usize>> = BTreeMap::new();
    let mut next_level = 0;
    let mut scheduled = 0;
    let (mut idle, mut i) = (0, 0);
    while idle < r {
        let xi = &support[i % r];
        i += 1;
        let part = &p.parts[xi];
        let own = keep.get(xi.as_str()).map_or(0, BTreeSet::len);
        let threshold = match staircase {
            Staircase::Off => None,
            Staircase::PerCoordinate => Some(own + 1),
            Staircase::Global => Some(scheduled + 1),
        };
        let mut found = None;
        for k in part.splits().into_iter().filter(|&k| k >= next_level) {
            let ok = match threshold {
                None => true,
                Some(t) => {
                    let t = num_rational::BigRational::from_integer((t as i64).into());
                    lognorm_at_least(norm(&part.cells[k])?, part.params.d[k], &t)?
                }
            };
            if ok {
                found = Some(k);
                break;
            }
        }
        match found {
            Some(k) => {
                keep.entry(xi).or_default().insert(k);
                next_level = k + 1;
                scheduled += 1;
                idle = 0;
            }
            None => idle += 1,
        }
    }
    if scheduled == 0 && !p.splits().is_empty() {
        return Err(ProdError::InsufficientSplits);
    }
    let mut q = p.clone();
    for (xi, part) in q.parts.iter_mut() {
        let kept = keep.get(xi.as_str());
        for k in 0..part.horizon() {
            if part.is_split(k) && !kept.is_some_and(|s| s.contains(&k)) {
                let cell = &part.cells[k];
                part.cells[k] = Creature::from_masks(cell.arena(), cell.cap(), vec![cell.masks()[0]])?;
            }
        }
    }
    Ok(q)
}

/// `poss(p, <= k)`; `None` stands for `k = -1`.
pub fn product_possibilities(p: &ProductCondition, k: Option<usize>) -> Result<Vec<ProductBranch>, ProdError> {
    p.require_modest()?;
    let upto = match k {
        None => 0,
        Some(k) if k >= p.horizon() => return Err(ProdError::Invalid(format!("level {k} beyond the horizon"))),
        Some(k) => (k + 1) * p.width(),
    };
    let flat = p.flatten()?;
    Ok(possibilities_below(&flat, upto)?.iter().map(|b| p.unflatten_branch(b)).collect())
}

/// `|poss(p, <= k)| < n^-_{k+1}`, certified.
pub fn poss_bound(p: &ProductCondition, k: usize, n_minus_next: &Expr, cert: &mut Certifier) -> Verdict {
    cert.lt(&Expr::nat(BigUint::from(p.poss_count(k + 1))), n_minus_next)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProductOrder {
    Plain,
    AtN(usize),
    AtNF(usize, BTreeSet<String>),
}

/// `q <= p`, `q <=_n p` and `q <=_{n,F} p` for product conditions.
pub fn product_order(q: &ProductCondition, p: &ProductCondition, mode: &ProductOrder) -> Result<bool, ProdError> {
    for (xi, pp) in &p.parts {
        let Some(qp) = q.parts.get(xi) else { return Ok(false) };
        if qp.params != pp.params {
            return Err(ProdError::Invalid(format!("{xi} has different parameters")));
        }
        if !order_check(qp, pp, OrderMode::Plain)? {
            return Ok(false);
        }
    }
    Ok(match mode {
        ProductOrder::Plain => true,
        ProductOrder::AtN(n) => {
            q.require_modest()?;
            let splits = q.splits();
            if splits.iter().take(n + 1).any(|(_, xi)| !p.parts.contains_key(xi)) {
                return Ok(false);
            }
            let upto = splits.get(*n).map_or(q.horizon(), |s| s.0 + 1);
            p.parts.iter().all(|(xi, pp)| q.parts[xi].cells[..upto] == pp.cells[..upto])
        }
        ProductOrder::AtNF(n, f) => {
            for xi in f {
                let Some(pp) = p.parts.get(xi) else { return Ok(false) };
                if !order_check(&q.parts[xi], pp, OrderMode::AtN(*n))? {
                    return Ok(false);
                }
            }
            true
        }
    })
}

/// Product fusion of `⟨p_n, F_n⟩`: each coordinate `ξ` is fused from its entry
/// index `n_ξ = min{n : ξ ∈ F_n}` on.
pub fn product_fuse(chain: &[(ProductCondition, BTreeSet<String>)]) -> Result<ProductCondition, ProdError> {
    if chain.is_empty() {
        return Err(ProdError::Chain { index: 0, reason: "empty chain".into() });
    }
    let mut w: BTreeSet<String> = BTreeSet::new();
    let mut supports: BTreeSet<String> = BTreeSet::new();
    let mut owners = BTreeMap::new();
    for (n, (p, f)) in chain.iter().enumerate() {
        let fail = |reason: String| Err(ProdError::Chain { index: n, reason });
        if f.is_empty() {
            return fail("F_n is empty".into());
        }
        if f.iter().any(|xi| !p.parts.contains_key(xi)) {
            return fail("F_n is not inside the support".into());
        }
        if n > 0 {
            let (prev, prev_f) = &chain[n - 1];
            if !prev_f.is_subset(f) {
                return fail("F_n does not contain F_{n-1}".into());
            }
            if !product_order(p, prev, &ProductOrder::AtNF(n - 1, prev_f.clone()))? {
                return fail(format!("not <=_{{{},F}} its predecessor", n - 1));
            }
        }
        w.extend(f.iter().cloned());
        supports.extend(p.parts.keys().cloned());
        owners.extend(p.owners.iter().map(|(k, v)| (k.clone(), v.clone())));
    }
    if w != supports {
        return Err(ProdError::Chain { index: chain.len() - 1, reason: "union of the F_n differs from the union of supports".into() });
    }
    let mut parts = BTreeMap::new();
    for xi in &w {
        let entry = chain.iter().position(|(_, f)| f.contains(xi)).expect("xi in some F_n");
        let sub: Vec<TruncCondition> = chain[entry..].iter().map(|(p, _)| p.parts[xi].clone()).collect();
        let fused = fuse_from(&sub, entry).map_err(|e| ProdError::Chain { index: entry, reason: format!("{xi}: {e}") })?;
        parts.insert(xi.clone(), fused);
    }
    let q = ProductCondition::new(owners, parts)?;
    q.require_modest()?;
    for (n, (p, f)) in chain.iter().enumerate() {
        if !product_order(&q, p, &ProductOrder::AtNF(n, f.clone()))? {
            return Err(ProdError::Chain { index: n, reason: "fusion is not <=_{n,F_n} this element".into() });
        }
    }
    Ok(q)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitRole {
    /// A split of an earlier stage, kept fixed.
    Preserved,
    /// A new split of an old coordinate `ξ_k`, `k <= n`.
    Revisit,
    /// The first split of the newly added coordinate.
    NewCoordinate,
    /// A further split of the newly added coordinate.
    NewSplit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScheduleStage {
    pub n: usize,
    /// `m_n = |L_n| - 1`.
    pub m: usize,
    /// `owners[i] = k` when the `i`-th global split belongs to `ξ_k`.
    pub owners: Vec<usize>,
    pub roles: Vec<SplitRole>,
}

pub const SCHEDULE_MAX: usize = 10;

/// Split bookkeeping of the product fusion with countably many coordinates
/// entering one at a time: stage `n` owns `(n+1)^2` splits, `n + 1` per
/// coordinate `ξ_0..ξ_n`.
pub fn schedule_plan(n: usize) -> Result<Vec<ScheduleStage>, ProdError> {
    if n > SCHEDULE_MAX {
        return Err(ProdError::Invalid(format!("schedule stages are limited to n <= {SCHEDULE_MAX}")));
    }
    let mut owners = vec![0];
    let mut roles = vec![SplitRole::NewCoordinate];
    let mut stages = vec![ScheduleStage { n: 0, m: 0, owners: owners.clone(), roles: roles.clone() }];
    for stage in 1..=n {
        let prev = stage - 1;
        roles.iter_mut().for_each(|r| *r = SplitRole::Preserved);
        for k in 0..=prev {
            owners.push(k);
            roles.push(SplitRole::Revisit);
        }
        owners.push(stage);
        roles.push(SplitRole::NewCoordinate);
        for _ in 0..=prev {
            owners.push(stage);
            roles.push(SplitRole::NewSplit);
        }
        assert_eq!(owners.len(), (stage + 1) * (stage + 1));
        for k in 0..=stage {
            assert_eq!(owners.iter().filter(|&&o| o == k).count(), stage + 1);
        }
        stages.push(ScheduleStage { n: stage, m: owners.len() - 1, owners: owners.clone(), roles: roles.clone() });
    }
    Ok(stages)
}

/// Bounding sequences attached to a product early reading.
#[derive(Debug, Clone)]
pub struct Bounding {
    pub minus: Vec<Expr>,
    pub plus: Vec<Expr>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ProductSplitBook {
    pub coord: String,
    #[serde(flatten)]
    pub book: SplitBook,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ProductEarlyOut {
    pub q: ProductCondition,
    pub book: Vec<ProductSplitBook>,
}

pub fn product_reading(p: &ProductCondition, nu: &ProductName, mode: ReadingMode) -> Result<Option<usize>, ProdError> {
    p.require_modest()?;
    let flat_nu = nu.flat_oracle(p)?;
    let r = p.width();
    Ok(reading_failure(&flat_nu.base, &flat_nu, mode)?.map(|l| match mode {
        ReadingMode::Timely => l / r,
        ReadingMode::Early => l.div_ceil(r),
    }))
}

/// Early reading for a modest timely-reading product condition: at each
/// product split only the owning coordinate's cell shrinks, by the bigness
/// loop of the single case.
pub fn product_early_read(p: &ProductCondition, nu: &ProductName, bounds: Option<&Bounding>) -> Result<ProductEarlyOut, ProdError> {
    p.require_modest()?;
    if let Some(b) = bounds {
        check_bounding(p, &nu.profile, b)?;
    }
    let flat_nu = nu.flat_oracle(p)?;
    let out = early_read(&flat_nu.base, &flat_nu).map_err(|e| flat_error(p, e))?;
    let r = p.width();
    let support = p.support();
    let book = out
        .book
        .into_iter()
        .map(|b| ProductSplitBook { coord: support[b.level % r].clone(), book: SplitBook { level: b.level / r, ..b } })
        .collect();
    Ok(ProductEarlyOut { q: p.unflatten(&out.q)?, book })
}

/// `|X_k| <= n_k^+` and `∏_{i<k} n_i^+ < n_k^- < d_α(k)` for the families in the support.
fn check_bounding(p: &ProductCondition, profile: &[u64], b: &Bounding) -> Result<(), ProdError> {
    let n = p.horizon();
    if b.minus.len() < n || b.plus.len() < n {
        return Err(ProdError::Invalid("bounding sequences must cover the horizon".into()));
    }
    let mut cert = Certifier::new(Precision::default());
    let fail = |clause: &str, level| Err(ProdError::Precondition { clause: clause.into(), level, coord: None });
    let mut prod = Expr::nat(1u32);
    for k in 0..n {
        if cert.le(&Expr::nat(profile[k]), &b.plus[k]) != Verdict::Pass {
            return fail("|X_k| <= n_k^+", k);
        }
        if cert.lt(&prod, &b.minus[k]) != Verdict::Pass {
            return fail("prod_{i<k} n_i^+ < n_k^-", k);
        }
        for part in p.parts.values() {
            if cert.lt(&b.minus[k], &Expr::nat(part.params.d[k])) != Verdict::Pass {
                return fail("n_k^- < d(k)", k);
            }
        }
        prod = prod.mul(&b.plus[k]);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BoundOut {
    /// `f(n) = max B_n`.
    pub f: Vec<u64>,
    /// `B_n`: the values of `x(n)` decided over `poss(q, <= s_n(q))`.
    pub decided: Vec<Vec<u64>>,
    /// `|poss(q, <= s_n(q))|`.
    pub poss_counts: Vec<u128>,
}

/// A ground bound for a name: `f(n)` is the largest value of `x(n)` decided
/// by some possibility up to the `n`-th split (the whole horizon once splits run out).
pub fn bounding_extract(q: &ProductCondition, nu: &ProductName) -> Result<BoundOut, ProdError> {
    q.require_modest()?;
    let rows = rows(q, nu)?;
    let r = q.width();
    let splits = q.splits();
    let mut out = BoundOut { f: vec![], decided: vec![], poss_counts: vec![] };
    for n in 0..q.horizon() {
        let level = splits.get(n).map_or(q.horizon(), |s| s.0 + 1);
        let cut = level * r;
        let mut by_prefix: BTreeMap<&[u64], u64> = BTreeMap::new();
        for (b, x) in &rows {
            if *by_prefix.entry(&b[..cut]).or_insert(x[n]) != x[n] {
                return Err(ProdError::Precondition { clause: "q decides x(n) by the n-th split".into(), level: n, coord: None });
            }
        }
        let decided: BTreeSet<u64> = by_prefix.values().copied().collect();
        out.f.push(*decided.iter().max().expect("at least one branch"));
        out.decided.push(decided.into_iter().collect());
        out.poss_counts.push(q.poss_count(level));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CatchOut {
    pub q: ProductCondition,
    pub k: usize,
    /// The decided value of `x(k)`.
    pub z: u64,
}

/// First pair of branches of `p` agreeing on the coordinates in `b` but not on the name's value.
pub fn dependence_leak(p: &ProductCondition, nu: &ProductName, b: &BTreeSet<String>) -> Result<Option<(ProductBranch, ProductBranch)>, ProdError> {
    let mut seen: BTreeMap<ProductBranch, (ProductBranch, Vec<u64>)> = BTreeMap::new();
    for (flat, x) in rows(p, nu)? {
        let full = p.unflatten_branch(&flat);
        let key: ProductBranch = full.iter().filter(|(xi, _)| b.contains(*xi)).map(|(k, v)| (k.clone(), v.clone())).collect();
        match seen.get(&key) {
            Some((other, y)) if *y != x => return Ok(Some((other.clone(), full))),
            Some(_) => {}
            None => {
                seen.insert(key, (full, x));
            }
        }
    }
    Ok(None)
}

/// Catching a real read from the coordinates `B` by the generic slalom of `ξ ∉ B`:
/// `B` is strengthened until `x(k)` is decided, then `q(ξ, k)` becomes a
/// singleton containing the decided value. Modesty is not required.
pub fn product_catch(p: &ProductCondition, nu: &ProductName, b: &BTreeSet<String>, xi: &str, n0: usize) -> Result<CatchOut, ProdError> {
    if b.contains(xi) {
        return Err(ProdError::Invalid(format!("{xi} belongs to B")));
    }
    let target = p.part(xi)?;
    for zeta in b {
        p.part(zeta)?;
    }
    if let Some((first, second)) = dependence_leak(p, nu, b)? {
        return Err(ProdError::DependenceLeak { first, second });
    }
    let mut k = None;
    for l in n0..p.horizon() {
        if norm(&target.cells[l])? >= 1 {
            k = Some(l);
            break;
        }
    }
    let k = k.ok_or_else(|| ProdError::NoCatchLevel { coord: xi.to_string(), n0 })?;
    // Shortest first-member prefix on B deciding x(k).
    let rows = rows(p, nu)?;
    let mut q = p.clone();
    let mut z = None;
    for len in 0..=p.horizon() {
        let eta: BTreeMap<&str, Vec<u64>> =
            b.iter().map(|zeta| (zeta.as_str(), p.parts[zeta].first_extension(&[])[..len].to_vec())).collect();
        let vals: BTreeSet<u64> = rows
            .iter()
            .filter(|(flat, _)| {
                let br = p.unflatten_branch(flat);
                eta.iter().all(|(zeta, e)| br[*zeta][..len] == e[..])
            })
            .map(|(_, x)| x[k])
            .collect();
        if vals.len() == 1 {
            for (zeta, e) in &eta {
                q.parts.insert(zeta.to_string(), and_restrict(&p.parts[*zeta], e)?);
            }
            z = vals.into_iter().next();
            break;
        }
    }
    let z = z.expect("full branches decide every value");
    let cell = &target.cells[k];
    if z as usize >= cell.arena() {
        return Err(ProdError::Invalid(format!("decided value {z} outside c({k})")));
    }
    let t = *cell.masks().iter().find(|&&m| m >> z & 1 == 1).expect("norm >= 1 covers the arena");
    q.parts.get_mut(xi).expect("in support").cells[k] = Creature::from_masks(cell.arena(), cell.cap(), vec![t])?;
    Ok(CatchOut { q, k, z })
}

/// Every branch through `q` puts `x(k)` into the cell chosen at `(ξ, k)`.
pub fn catch_holds(q: &ProductCondition, nu: &ProductName, xi: &str, k: usize) -> Result<bool, ProdError> {
    Ok(rows(q, nu)?.iter().all(|(flat, x)| q.unflatten_branch(flat)[xi][k] >> x[k] & 1 == 1))
}

/// One level of a slalom name over the restricted product.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PhiCell {
    Ground(Vec<u64>),
    /// Depends on the member chosen at `(coord, level)`, keyed by its mask.
    ByChoice { coord: String, cells: BTreeMap<u64, Vec<u64>> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PhiName {
    pub a: Vec<u64>,
    pub e: Vec<u64>,
    pub cells: Vec<PhiCell>,
}

impl PhiName {
    /// The slalom named along a full branch.
    pub fn at(&self, b: &ProductBranch) -> Vec<Vec<u64>> {
        self.cells
            .iter()
            .enumerate()
            .map(|(k, c)| match c {
                PhiCell::Ground(v) => v.clone(),
                PhiCell::ByChoice { coord, cells } => cells[&b[coord][k]].clone(),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RestrictedCase {
    Threshold,
    NonSplit,
    /// Split owned inside `C^α`: the cell is kept and `φ(k)` reads its member.
    Restricted,
    FewPossibilities,
    RangeRefined,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RestrictedOut {
    pub q: ProductCondition,
    pub phi: PhiName,
    pub cases: Vec<RestrictedCase>,
    pub book: Vec<ProductSplitBook>,
}

/// Localisation by a slalom name depending only on the coordinates in `C^α`:
/// `a = a_α`, `e = d_α`, thinness measured against the owner's `c_β, h_β, d_β`.
pub fn restricted_localize(
    p: &ProductCondition,
    nu: &ProductName,
    c_alpha: &BTreeSet<String>,
    a: &[u64],
    e: &[u64],
    k0: usize,
) -> Result<RestrictedOut, ProdError> {
    p.require_modest()?;
    let n_levels = p.horizon();
    if a.len() != n_levels || e.len() != n_levels || nu.profile != a {
        return Err(ProdError::Invalid("a, e and the name's profile must cover the horizon".into()));
    }
    let flat_nu = nu.flat_oracle(p)?;
    if let Some(level) = reading_failure(&flat_nu.base, &flat_nu, ReadingMode::Early)? {
        return Err(ProdError::Precondition { clause: "early reading".into(), level: level.div_ceil(p.width()), coord: None });
    }
    let r = p.width();
    let support = p.support();
    let fail = |clause: &str, level: usize, coord: Option<&String>| {
        Err(ProdError::Precondition { clause: clause.into(), level, coord: coord.cloned() })
    };
    for k in k0..n_levels {
        let m = p.poss_count(k);
        if m > e[k] as u128 {
            return fail("iii: |poss(p,<k)| <= d_alpha(k)", k, None);
        }
        if let Some(xi) = p.split_owner(k) {
            if !c_alpha.contains(&xi) {
                let part = &p.parts[&xi];
                let two_m = BigUint::from(2 * m);
                let sub1 = &two_m * part.params.c_nabla_h(k) <= BigUint::from(e[k]);
                let sub2 = &two_m * a[k] <= BigUint::from(part.params.d[k]);
                if !(sub1 || sub2) {
                    return fail("ii: thinness", k, Some(&xi));
                }
            }
        }
    }

    let mut q = flat_nu.base.clone();
    let x_at = |q: &TruncCondition, pre: &[u64], k: usize| flat_nu.eval(&q.first_extension(pre))[k * r + r - 1];
    let mut cells = Vec::with_capacity(n_levels);
    let mut cases = Vec::with_capacity(n_levels);
    let mut book = Vec::new();
    for k in 0..n_levels {
        if k < k0 {
            cells.push(PhiCell::Ground(vec![]));
            cases.push(RestrictedCase::Threshold);
            continue;
        }
        let etas = possibilities_below(&q, k * r)?;
        let m = etas.len();
        let Some(xi) = p.split_owner(k) else {
            let vals: BTreeSet<u64> = etas.iter().map(|eta| x_at(&q, eta, k)).collect();
            cells.push(PhiCell::Ground(vals.into_iter().collect()));
            cases.push(RestrictedCase::NonSplit);
            continue;
        };
        let j = support.iter().position(|s| *s == xi).expect("owner in support");
        let fl = k * r + j;
        // extends eta through the singleton levels before the owner's cell, then by t
        let with = |q: &TruncCondition, eta: &[u64], t: u64| {
            let mut pre = q.first_extension(eta)[..fl].to_vec();
            pre.push(t);
            pre
        };
        let part = &p.parts[&xi];
        if c_alpha.contains(&xi) {
            let mut by_t = BTreeMap::new();
            for &t in part.cells[k].masks() {
                let vals: BTreeSet<u64> = etas.iter().map(|eta| x_at(&q, &with(&q, eta, t), k)).collect();
                by_t.insert(t, vals.into_iter().collect::<Vec<_>>());
            }
            cells.push(PhiCell::ByChoice { coord: xi, cells: by_t });
            cases.push(RestrictedCase::Restricted);
            continue;
        }
        let two_m = BigUint::from(2 * m);
        if &two_m * part.params.c_nabla_h(k) <= BigUint::from(e[k]) {
            let vals: BTreeSet<u64> =
                etas.iter().flat_map(|eta| part.cells[k].masks().iter().map(|&t| x_at(&q, &with(&q, eta, t), k)).collect::<Vec<_>>()).collect();
            cells.push(PhiCell::Ground(vals.into_iter().collect()));
            cases.push(RestrictedCase::FewPossibilities);
            continue;
        }
        let block = (e[k] / m as u64) as usize;
        let mut m_cur = part.cells[k].clone();
        let mut phi_k = BTreeSet::new();
        for eta in &etas {
            let f: Vec<usize> = m_cur.masks().iter().map(|&t| x_at(&q, &with(&q, eta, t), k) as usize).collect();
            let next = range_refine(&m_cur, &f, a[k] as usize, block, part.params.d[k])?;
            for &t in next.masks() {
                phi_k.insert(f[m_cur.index_of(t).expect("subfamily")] as u64);
            }
            m_cur = next;
        }
        book.push(ProductSplitBook {
            coord: xi.clone(),
            book: SplitBook { level: k, m, norm_before: norm(&part.cells[k])?, norm_after: norm(&m_cur)?, d: part.params.d[k] },
        });
        q.cells[fl] = m_cur;
        cells.push(PhiCell::Ground(phi_k.into_iter().collect()));
        cases.push(RestrictedCase::RangeRefined);
    }
    let phi = PhiName { a: a.to_vec(), e: e.to_vec(), cells };
    for (k, c) in phi.cells.iter().enumerate() {
        let too_big = match c {
            PhiCell::Ground(v) => v.len() as u64 > e[k],
            PhiCell::ByChoice { cells, .. } => cells.values().any(|v| v.len() as u64 > e[k]),
        };
        if too_big {
            return fail("|phi(k)| <= d_alpha(k)", k, None);
        }
    }
    Ok(RestrictedOut { q: p.unflatten(&q)?, phi, cases, book })
}

/// First pair of branches through `q` agreeing on `C^α` with different named slaloms.
pub fn phi_invariance_failure(q: &ProductCondition, phi: &PhiName, c_alpha: &BTreeSet<String>) -> Result<Option<(ProductBranch, ProductBranch)>, ProdError> {
    let flat = q.flatten()?;
    let mut seen: BTreeMap<ProductBranch, (ProductBranch, Vec<Vec<u64>>)> = BTreeMap::new();
    for b in branches(&flat)? {
        let full = q.unflatten_branch(&b);
        let key: ProductBranch = full.iter().filter(|(xi, _)| c_alpha.contains(*xi)).map(|(k, v)| (k.clone(), v.clone())).collect();
        let s = phi.at(&full);
        match seen.get(&key) {
            Some((other, s2)) if *s2 != s => return Ok(Some((other.clone(), full))),
            Some(_) => {}
            None => {
                seen.insert(key, (full, s));
            }
        }
    }
    Ok(None)
}

/// First branch through `q` and level `k >= k0` with `x(k) ∉ φ(k)`.
pub fn restricted_membership_failure(q: &ProductCondition, nu: &ProductName, phi: &PhiName, k0: usize) -> Result<Option<(ProductBranch, usize)>, ProdError> {
    for (flat, x) in rows(q, nu)? {
        let b = q.unflatten_branch(&flat);
        let s = phi.at(&b);
        if let Some(k) = (k0..q.horizon()).find(|&k| !s[k].contains(&x[k])) {
            return Ok(Some((b, k)));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditions::{check_reading, localize};

    fn params(c: &[usize], h: &[usize], d: &[u64]) -> ParamTriple {
        ParamTriple::new(c.to_vec(), h.to_vec(), d.to_vec()).unwrap()
    }

    fn with_splits(par: &ParamTriple, splits: &[usize]) -> TruncCondition {
        let mut p = TruncCondition::full(par.clone()).unwrap();
        for k in 0..p.horizon() {
            if !splits.contains(&k) {
                p.cells[k] = Creature::singleton(par.c[k], par.h[k], &[k % par.c[k]]).unwrap();
            }
        }
        p
    }

    #[test]
    fn json_round_trip_and_flattening() {
        let par = params(&[3, 3, 3], &[1, 1, 1], &[4, 4, 4]);
        let p = ProductCondition::single_family("alpha", vec![with_splits(&par, &[0, 2]), with_splits(&par, &[1])]).unwrap();
        let j = serde_json::to_value(p.to_json()).unwrap();
        assert_eq!(j["coords"]["xi1"]["owner"], "alpha");
        let back = ProductCondition::from_json(&serde_json::from_value(j).unwrap()).unwrap();
        assert_eq!(back, p);
        assert!(p.is_modest());
        assert_eq!(p.splits(), vec![(0, "xi0".into()), (1, "xi1".into()), (2, "xi0".into())]);
        let flat = p.flatten().unwrap();
        assert_eq!(flat.splits(), vec![0, 3, 4]);
        assert_eq!(p.unflatten(&flat).unwrap(), p);
        let b = branches(&flat).unwrap()[5].clone();
        assert_eq!(p.flatten_branch(&p.unflatten_branch(&b)), b);
    }

    #[test]
    fn possibilities_multiply() {
        let par = params(&[3, 3], &[1, 1], &[4, 4]);
        let mut a = with_splits(&par, &[0]);
        a.cells[0] = Creature::new(3, 1, &[vec![0], vec![1]]).unwrap();
        let b = with_splits(&par, &[1]);
        let p = ProductCondition::single_family("alpha", vec![a, b]).unwrap();
        assert_eq!(product_possibilities(&p, None).unwrap().len(), 1);
        assert_eq!(product_possibilities(&p, Some(0)).unwrap().len(), 2);
        assert_eq!(product_possibilities(&p, Some(1)).unwrap().len(), 8);
        let mut cert = Certifier::new(Precision::default());
        assert_eq!(poss_bound(&p, 1, &Expr::nat(9u32), &mut cert), Verdict::Pass);
        assert_eq!(poss_bound(&p, 1, &Expr::nat(8u32), &mut cert), Verdict::Fail);
    }

    #[test]
    fn modest_refinement() {
        let par = params(&[3; 4], &[1; 4], &[2; 4]);
        let single = ProductCondition::single_family("alpha", vec![with_splits(&par, &[0, 2])]).unwrap();
        assert_eq!(modest_refine(&single, Staircase::Off).unwrap(), single);
        let p = ProductCondition::single_family("alpha", vec![with_splits(&par, &[1, 2]), with_splits(&par, &[1, 3])]).unwrap();
        assert_eq!(p.modesty_violation(), Some(1));
        let q = modest_refine(&p, Staircase::Off).unwrap();
        assert!(q.is_modest());
        assert_eq!(q.splits(), vec![(1, "xi0".into()), (3, "xi1".into())]);
        assert!(product_order(&q, &p, &ProductOrder::Plain).unwrap());
        let none = ProductCondition::single_family("alpha", vec![with_splits(&par, &[])]).unwrap();
        assert_eq!(modest_refine(&none, Staircase::Global).unwrap(), none);
    }

    #[test]
    fn schedule_sizes() {
        let plan = schedule_plan(10).unwrap();
        let ms: Vec<usize> = plan.iter().map(|s| s.m).collect();
        assert_eq!(&ms[..4], &[0, 3, 8, 15]);
        for (n, s) in plan.iter().enumerate() {
            assert_eq!(s.owners.len(), (n + 1) * (n + 1));
            if n > 0 {
                assert_eq!(s.m - plan[n - 1].m, 2 * n + 1);
                assert_eq!(&s.owners[..plan[n - 1].owners.len()], &plan[n - 1].owners[..]);
            }
        }
        assert_eq!(plan[1].owners, vec![0, 0, 1, 1]);
        assert!(schedule_plan(11).is_err());
    }

    #[test]
    fn fusion_of_two_coordinate_chain() {
        let par = params(&[3; 6], &[1; 6], &[2; 6]);
        let p0 = ProductCondition::single_family("alpha", vec![with_splits(&par, &[0, 2, 4]), with_splits(&par, &[1, 3, 5])]).unwrap();
        let f0: BTreeSet<String> = ["xi0".to_string()].into();
        let f1: BTreeSet<String> = ["xi0".to_string(), "xi1".to_string()].into();
        let mut p1 = p0.clone();
        p1.parts.get_mut("xi0").unwrap().cells[4] = Creature::new(3, 1, &[vec![0], vec![1]]).unwrap();
        let mut p2 = p1.clone();
        p2.parts.get_mut("xi1").unwrap().cells[5] = Creature::new(3, 1, &[vec![1], vec![2]]).unwrap();
        let chain = vec![(p0.clone(), f0.clone()), (p1, f1.clone()), (p2, f1.clone())];
        let q = product_fuse(&chain).unwrap();
        assert!(q.is_modest());
        for (n, (p, f)) in chain.iter().enumerate() {
            assert!(product_order(&q, p, &ProductOrder::AtNF(n, f.clone())).unwrap());
        }
        let constant = vec![(p0.clone(), f1.clone()), (p0.clone(), f1.clone())];
        assert_eq!(product_fuse(&constant).unwrap(), p0);
        let shrinking = vec![(p0.clone(), f1.clone()), (p0, f0)];
        assert!(matches!(product_fuse(&shrinking), Err(ProdError::Chain { .. })));
    }

    fn two_coord_name(p: &ProductCondition) -> ProductName {
        ProductName::new(
            p.clone(),
            vec![2, 2, 2],
            Arc::new(|b: &ProductBranch| {
                let (x, y) = (&b["xi0"], &b["xi1"]);
                // value i reads levels up to the first split above i
                vec![(x[1].count_ones() % 2) as u64, (x[1].count_ones() + y[2].count_ones()) as u64 % 2, (y[2] & 1 ^ x[1] >> 1 & 1)]
            }),
        )
        .unwrap()
    }

    #[test]
    fn early_reading_on_two_coordinates() {
        let par = params(&[4, 6, 6], &[1, 3, 3], &[2, 8, 64]);
        let p = ProductCondition::single_family("alpha", vec![with_splits(&par, &[1]), with_splits(&par, &[2])]).unwrap();
        let nu = two_coord_name(&p);
        assert_eq!(product_reading(&p, &nu, ReadingMode::Timely).unwrap(), None);
        assert!(product_reading(&p, &nu, ReadingMode::Early).unwrap().is_some());
        let out = product_early_read(&p, &nu, None).unwrap();
        assert_eq!(product_reading(&out.q, &nu, ReadingMode::Early).unwrap(), None);
        assert!(product_order(&out.q, &p, &ProductOrder::Plain).unwrap());
        assert!(out.book.iter().all(|b| b.book.holds()));
        for b in &out.book {
            let other = if b.coord == "xi0" { "xi1" } else { "xi0" };
            assert_eq!(out.q.parts[other].cells[b.book.level], p.parts[other].cells[b.book.level]);
        }
    }

    #[test]
    fn single_coordinate_agrees_with_single_case() {
        let par = params(&[4, 6], &[1, 3], &[2, 4]);
        let part = with_splits(&par, &[1]);
        let p = ProductCondition::single_family("alpha", vec![part.clone()]).unwrap();
        let nu = ProductName::new(p.clone(), vec![2, 2], Arc::new(|b: &ProductBranch| vec![(b["xi0"][1].count_ones() % 2) as u64, 0])).unwrap();
        let single = NameOracle::new(part.clone(), vec![2, 2], Arc::new(|b: &[u64]| vec![(b[1].count_ones() % 2) as u64, 0])).unwrap();
        let prod = product_early_read(&p, &nu, None).unwrap();
        let one = crate::conditions::early_read(&part, &single).unwrap();
        assert_eq!(prod.q.parts["xi0"], one.q);
        assert!(check_reading(&one.q, &single, ReadingMode::Early).unwrap());
    }

    #[test]
    fn bounds_from_decisions() {
        let par = params(&[3, 3, 3], &[1, 1, 1], &[4, 4, 4]);
        let p = ProductCondition::single_family("alpha", vec![with_splits(&par, &[0]), with_splits(&par, &[1])]).unwrap();
        let konst = ProductName::new(p.clone(), vec![5, 5, 5], Arc::new(|_: &ProductBranch| vec![3, 1, 4])).unwrap();
        assert_eq!(bounding_extract(&p, &konst).unwrap().f, vec![3, 1, 4]);
        let nu = ProductName::new(
            p.clone(),
            vec![5, 5, 5],
            Arc::new(|b: &ProductBranch| vec![b["xi0"][0].count_ones() as u64, b["xi1"][1].count_ones() as u64 * 2, 0]),
        )
        .unwrap();
        let out = bounding_extract(&p, &nu).unwrap();
        assert_eq!(out.f, vec![1, 2, 0]);
        for n in 0..3 {
            assert!(out.decided[n].len() as u128 <= out.poss_counts[n]);
        }
    }

    #[test]
    fn catching_across_coordinates() {
        let par = params(&[3, 3, 3], &[1, 1, 1], &[2, 2, 2]);
        let p = ProductCondition::single_family("alpha", vec![TruncCondition::full(par.clone()).unwrap(), TruncCondition::full(par).unwrap()]).unwrap();
        let b: BTreeSet<String> = ["xi0".to_string()].into();
        let nu = ProductName::new(p.clone(), vec![3, 3, 3], Arc::new(|br: &ProductBranch| br["xi0"].iter().map(|m| m.count_ones() as u64 + 1).collect())).unwrap();
        let out = product_catch(&p, &nu, &b, "xi1", 1).unwrap();
        assert_eq!(out.k, 1);
        assert!(catch_holds(&out.q, &nu, "xi1", out.k).unwrap());
        assert!(product_order(&out.q, &p, &ProductOrder::Plain).unwrap());
        let leak = ProductName::new(p.clone(), vec![3, 3, 3], Arc::new(|br: &ProductBranch| br["xi1"].iter().map(|m| m.count_ones() as u64).collect())).unwrap();
        assert!(matches!(product_catch(&p, &leak, &b, "xi1", 0), Err(ProdError::DependenceLeak { .. })));
        let ground = ProductName::new(p.clone(), vec![3, 3, 3], Arc::new(|_: &ProductBranch| vec![1, 2, 0])).unwrap();
        let caught = product_catch(&p, &ground, &BTreeSet::new(), "xi1", 0).unwrap();
        let (single, k) = crate::conditions::catch_real(&p.parts["xi1"], &[1, 2, 0], 0).unwrap();
        assert_eq!((caught.q.parts["xi1"].clone(), caught.k), (single, k));
    }

    #[test]
    fn restricted_localisation_mixed() {
        // xi0 in C^alpha splits at 1, xi1 outside splits at 2 with range refinement
        let par0 = params(&[3, 3, 3], &[1, 1, 1], &[2, 2, 2]);
        let par1 = params(&[4, 4, 4], &[2, 2, 2], &[2, 2, 60]);
        let owners: BTreeMap<String, String> = [("xi0".into(), "alpha".into()), ("xi1".into(), "beta".into())].into();
        let parts: BTreeMap<String, TruncCondition> = [("xi0".into(), with_splits(&par0, &[1])), ("xi1".into(), with_splits(&par1, &[2]))].into();
        let p = ProductCondition::new(owners, parts).unwrap();
        let a = vec![5, 5, 5];
        let e = vec![8, 8, 8];
        let nu = ProductName::new(
            p.clone(),
            a.clone(),
            Arc::new(|b: &ProductBranch| {
                let (x, y) = (&b["xi0"], &b["xi1"]);
                vec![1, x[1].trailing_zeros().min(4) as u64, (x[1].count_ones() as u64 + y[2].count_ones() as u64 * 2) % 5]
            }),
        )
        .unwrap();
        let c: BTreeSet<String> = ["xi0".to_string()].into();
        let out = restricted_localize(&p, &nu, &c, &a, &e, 0).unwrap();
        assert_eq!(out.cases, vec![RestrictedCase::NonSplit, RestrictedCase::Restricted, RestrictedCase::RangeRefined]);
        assert_eq!(phi_invariance_failure(&out.q, &out.phi, &c).unwrap(), None);
        assert_eq!(restricted_membership_failure(&out.q, &nu, &out.phi, 0).unwrap(), None);
        assert_eq!(out.q.parts["xi0"], p.parts["xi0"]);
    }

    #[test]
    fn restricted_with_empty_c_is_plain_localisation() {
        let par = params(&[3, 4], &[1, 2], &[2, 40]);
        let part = TruncCondition::full(par).unwrap();
        let p = ProductCondition::single_family("alpha", vec![part.clone()]).unwrap();
        let a = vec![3, 5];
        let e = vec![8, 4];
        let f = |b0: u64, b1: u64| vec![b0.trailing_zeros().min(2) as u64, ((b0 | b1).count_ones() as u64 + b1) % 5];
        let nu = ProductName::new(p.clone(), a.clone(), Arc::new(move |b: &ProductBranch| f(b["xi0"][0], b["xi0"][1]))).unwrap();
        let single = NameOracle::new(part.clone(), a.clone(), Arc::new(move |b: &[u64]| f(b[0], b[1]))).unwrap();
        let out = restricted_localize(&p, &nu, &BTreeSet::new(), &a, &e, 0).unwrap();
        let one = localize(&part, &single, &a, &e, 0).unwrap();
        assert_eq!(out.q.parts["xi0"], one.q);
        let cells: Vec<Vec<u64>> = out.phi.cells.iter().map(|c| match c {
            PhiCell::Ground(v) => v.clone(),
            PhiCell::ByChoice { .. } => panic!("no restricted coordinates"),
        }).collect();
        assert_eq!(cells, one.phi.cells);
    }
}
