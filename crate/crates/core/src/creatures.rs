//! Single-level creatures: the covering norm, the logarithmic norm, and the
//! bigness refinements.
//!
//! A member is a subset of the arena `0..c`, stored as a bitmask.

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive};
use serde::{Deserialize, Serialize};

/// Largest arena on which the norm is computed exhaustively.
pub const NORM_ARENA_CAP: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CreatureError {
    #[error("creature has no members")]
    Empty,
    #[error("arena must be between 1 and 63, got {0}")]
    BadArena(usize),
    #[error("member {member:?} exceeds the cap {cap}")]
    Oversize { member: Vec<usize>, cap: usize },
    #[error("member {0:?} leaves the arena")]
    OutOfArena(Vec<usize>),
    #[error("arena {0} too large for an exhaustive norm (cap {NORM_ARENA_CAP})")]
    NormCap(usize),
    #[error("d must be at least 2, got {0}")]
    SmallD(u64),
    #[error("coloring: {0}")]
    Coloring(String),
    #[error("range refinement needs m <= k * d, got m = {m}, k = {k}, d = {d}")]
    RangePrecondition { m: usize, k: usize, d: u64 },
}

/// A nonempty family of subsets of `0..arena`, each of size at most `cap`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Creature {
    arena: usize,
    cap: usize,
    members: Vec<u64>,
}

pub fn mask_of(set: &[usize]) -> u64 {
    set.iter().fold(0, |m, &i| m | 1 << i)
}

pub fn set_of(mask: u64) -> Vec<usize> {
    (0..64).filter(|i| mask >> i & 1 == 1).collect()
}

impl Creature {
    pub fn from_masks(arena: usize, cap: usize, mut members: Vec<u64>) -> Result<Creature, CreatureError> {
        if arena == 0 || arena > 63 {
            return Err(CreatureError::BadArena(arena));
        }
        members.sort_unstable();
        members.dedup();
        if members.is_empty() {
            return Err(CreatureError::Empty);
        }
        for &m in &members {
            if m >> arena != 0 {
                return Err(CreatureError::OutOfArena(set_of(m)));
            }
            if m.count_ones() as usize > cap {
                return Err(CreatureError::Oversize { member: set_of(m), cap });
            }
        }
        Ok(Creature { arena, cap, members })
    }

    pub fn new(arena: usize, cap: usize, members: &[Vec<usize>]) -> Result<Creature, CreatureError> {
        for s in members {
            if s.iter().any(|&i| i >= arena.min(64)) {
                return Err(CreatureError::OutOfArena(s.clone()));
            }
        }
        Creature::from_masks(arena, cap, members.iter().map(|s| mask_of(s)).collect())
    }

    /// All subsets of size at most `cap`.
    pub fn full(arena: usize, cap: usize) -> Result<Creature, CreatureError> {
        if arena == 0 || arena > NORM_ARENA_CAP {
            return Err(CreatureError::BadArena(arena));
        }
        let members = (0u64..1 << arena).filter(|m| m.count_ones() as usize <= cap).collect();
        Creature::from_masks(arena, cap, members)
    }

    pub fn singleton(arena: usize, cap: usize, member: &[usize]) -> Result<Creature, CreatureError> {
        Creature::new(arena, cap, &[member.to_vec()])
    }

    pub fn arena(&self) -> usize {
        self.arena
    }
    pub fn cap(&self) -> usize {
        self.cap
    }
    pub fn masks(&self) -> &[u64] {
        &self.members
    }
    pub fn len(&self) -> usize {
        self.members.len()
    }
    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
    pub fn is_singleton(&self) -> bool {
        self.members.len() == 1
    }
    pub fn member(&self, i: usize) -> Vec<usize> {
        set_of(self.members[i])
    }
    pub fn members(&self) -> Vec<Vec<usize>> {
        self.members.iter().map(|&m| set_of(m)).collect()
    }
    pub fn index_of(&self, mask: u64) -> Option<usize> {
        self.members.binary_search(&mask).ok()
    }
    pub fn contains_mask(&self, mask: u64) -> bool {
        self.index_of(mask).is_some()
    }

    pub fn is_subfamily_of(&self, other: &Creature) -> bool {
        self.arena == other.arena && self.members.iter().all(|&m| other.contains_mask(m))
    }

    /// The subfamily of members at the given indices.
    pub fn restrict(&self, indices: &[usize]) -> Result<Creature, CreatureError> {
        Creature::from_masks(self.arena, self.cap, indices.iter().map(|&i| self.members[i]).collect())
    }

    pub fn union_mask(&self) -> u64 {
        self.members.iter().fold(0, |a, &m| a | m)
    }
}

/// `max{k : every Y ⊆ arena with |Y| <= k lies inside some member}`.
pub fn norm(m: &Creature) -> Result<usize, CreatureError> {
    if m.arena > NORM_ARENA_CAP {
        return Err(CreatureError::NormCap(m.arena));
    }
    let n = m.arena;
    let mut covered = vec![false; 1 << n];
    for &x in &m.members {
        covered[x as usize] = true;
    }
    // downward closure over the subset lattice
    for bit in 0..n {
        for mask in 0..1usize << n {
            if mask >> bit & 1 == 0 && covered[mask | 1 << bit] {
                covered[mask] = true;
            }
        }
    }
    let smallest_uncovered = (0..1usize << n).filter(|&y| !covered[y]).map(|y| y.count_ones() as usize).min();
    Ok(match smallest_uncovered {
        None => n,
        Some(k) => k - 1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LogNormCmp {
    AtLeast,
    Below,
}

/// Whether `(1/d) log_d(norm + 1) >= t`, decided as `(norm+1)^w >= d^(d*u)` for `t = u/w`.
pub fn lognorm_at_least(norm: usize, d: u64, t: &BigRational) -> Result<bool, CreatureError> {
    if d < 2 {
        return Err(CreatureError::SmallD(d));
    }
    if !t.is_positive() {
        return Ok(true);
    }
    let u = t.numer().magnitude().to_u64().expect("threshold numerator fits in u64");
    let w = t.denom().magnitude().to_u64().expect("threshold denominator fits in u64");
    let lhs = num_traits::pow(BigUint::from(norm + 1), w as usize);
    let rhs = num_traits::pow(BigUint::from(d), (d * u) as usize);
    Ok(lhs >= rhs)
}

pub fn lognorm_cmp(m: &Creature, d: u64, t: &BigRational) -> Result<LogNormCmp, CreatureError> {
    let n = norm(m)?;
    Ok(if lognorm_at_least(n, d, t)? { LogNormCmp::AtLeast } else { LogNormCmp::Below })
}

/// The colour class of largest norm (ties to the smaller colour).
///
/// Guarantees `‖M‖ + 1 <= d (‖M*‖ + 1)`, i.e. the log-norm drops by at most `1/d`.
pub fn bigness_refine(m: &Creature, coloring: &[usize], d: u64) -> Result<(usize, Creature), CreatureError> {
    if d < 2 {
        return Err(CreatureError::SmallD(d));
    }
    if coloring.len() != m.len() {
        return Err(CreatureError::Coloring(format!("{} colours for {} members", coloring.len(), m.len())));
    }
    if let Some(&c) = coloring.iter().find(|&&c| c as u64 >= d) {
        return Err(CreatureError::Coloring(format!("colour {c} outside 0..{d}")));
    }
    let mut best: Option<(usize, usize, Creature)> = None;
    for colour in 0..d as usize {
        let idx: Vec<usize> = (0..m.len()).filter(|&i| coloring[i] == colour).collect();
        if idx.is_empty() {
            continue;
        }
        let class = m.restrict(&idx)?;
        let n = norm(&class)?;
        if best.as_ref().is_none_or(|(bn, _, _)| n > *bn) {
            best = Some((n, colour, class));
        }
    }
    let (_, colour, class) = best.expect("a nonempty creature has a nonempty colour class");
    Ok((colour, class))
}

/// Refines so that `f` takes at most `k` values on the result: values are
/// grouped into consecutive blocks of size `k` and bigness picks a block.
pub fn range_refine(m: &Creature, f: &[usize], values: usize, k: usize, d: u64) -> Result<Creature, CreatureError> {
    if k == 0 || values > k * d as usize {
        return Err(CreatureError::RangePrecondition { m: values, k, d });
    }
    if let Some(&v) = f.iter().find(|&&v| v >= values) {
        return Err(CreatureError::Coloring(format!("value {v} outside 0..{values}")));
    }
    let blocks: Vec<usize> = f.iter().map(|&v| v / k).collect();
    Ok(bigness_refine(m, &blocks, d)?.1)
}

#[derive(Serialize, Deserialize)]
struct CreatureJson {
    arena: usize,
    cap: usize,
    members: Vec<Vec<usize>>,
}

impl Serialize for Creature {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        CreatureJson { arena: self.arena, cap: self.cap, members: self.members() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Creature {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let j = CreatureJson::deserialize(d)?;
        Creature::new(j.arena, j.cap, &j.members).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    // Ascending check over all k-subsets, straight from the definition.
    fn norm_oracle(m: &Creature) -> usize {
        let n = m.arena();
        let mut best = 0;
        for k in 1..=n {
            let ok = (0u64..1 << n).filter(|y| y.count_ones() as usize == k).all(|y| m.masks().iter().any(|&x| y & x == y));
            if !ok {
                break;
            }
            best = k;
        }
        best
    }

    #[test]
    fn norm_examples() {
        assert_eq!(norm(&Creature::full(4, 2).unwrap()).unwrap(), 2);
        assert_eq!(norm(&Creature::new(4, 2, &[vec![0, 1], vec![2, 3]]).unwrap()).unwrap(), 1);
        assert_eq!(norm(&Creature::new(4, 2, &[vec![0, 1]]).unwrap()).unwrap(), 0);
        assert_eq!(norm(&Creature::new(4, 2, &[vec![]]).unwrap()).unwrap(), 0);
        assert_eq!(norm(&Creature::new(3, 3, &[vec![0, 1, 2]]).unwrap()).unwrap(), 3);
        assert_eq!(Creature::new(4, 2, &[]), Err(CreatureError::Empty));
        assert!(matches!(Creature::new(4, 1, &[vec![0, 1]]), Err(CreatureError::Oversize { .. })));
    }

    #[test]
    fn full_families_have_norm_cap() {
        for c in 1..=8 {
            for h in 0..c {
                assert_eq!(norm(&Creature::full(c, h).unwrap()).unwrap(), h);
            }
        }
    }

    #[test]
    fn lognorm_examples() {
        let at = |n, d, t: BigRational| lognorm_at_least(n, d, &t).unwrap();
        assert!(at(3, 2, rat(1, 1)));
        assert!(!at(3, 2, rat(3, 2)));
        assert!(at(255, 4, rat(1, 1)));
        assert!(!at(254, 4, rat(1, 1)));
        assert_eq!(lognorm_at_least(3, 1, &rat(1, 1)), Err(CreatureError::SmallD(1)));
    }

    #[test]
    fn lognorm_agrees_with_floating_point_away_from_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let n: usize = rng.gen_range(0..5000);
            let d: u64 = rng.gen_range(2..6);
            let u: i64 = rng.gen_range(0..12);
            let w: i64 = rng.gen_range(1..12);
            let lhs = ((n + 1) as f64).ln() / (d as f64).ln() / d as f64;
            let rhs = u as f64 / w as f64;
            if (lhs - rhs).abs() > 1e-9 {
                assert_eq!(lognorm_at_least(n, d, &rat(u, w)).unwrap(), lhs >= rhs);
            }
        }
    }

    #[test]
    fn bigness_examples() {
        let m = Creature::full(4, 2).unwrap();
        let (c, star) = bigness_refine(&m, &vec![1; m.len()], 2).unwrap();
        assert_eq!((c, &star), (1, &m));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = Creature::full(6, 3).unwrap();
        let col: Vec<usize> = (0..m.len()).map(|_| rng.gen_range(0..2)).collect();
        let (c, star) = bigness_refine(&m, &col, 2).unwrap();
        assert!(star.masks().iter().all(|&x| col[m.index_of(x).unwrap()] == c));
        assert!(norm(&m).unwrap() < 2 * (norm(&star).unwrap() + 1));
    }

    #[test]
    fn range_refine_examples() {
        let m = Creature::full(6, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f: Vec<usize> = (0..m.len()).map(|_| rng.gen_range(0..4)).collect();
        let star = range_refine(&m, &f, 4, 2, 2).unwrap();
        let image: std::collections::BTreeSet<_> = star.masks().iter().map(|&x| f[m.index_of(x).unwrap()]).collect();
        assert!(image.len() <= 2);
        assert!(norm(&m).unwrap() < 2 * (norm(&star).unwrap() + 1));
        assert_eq!(range_refine(&m, &f, 4, 4, 2).unwrap(), m);
        assert!(matches!(range_refine(&m, &f, 4, 1, 2), Err(CreatureError::RangePrecondition { .. })));
    }

    #[test]
    fn json_round_trip() {
        let m = Creature::new(6, 3, &[vec![0, 1], vec![2, 3, 4]]).unwrap();
        let j = serde_json::to_value(&m).unwrap();
        assert_eq!(j, serde_json::json!({"arena":6,"cap":3,"members":[[0,1],[2,3,4]]}));
        assert_eq!(serde_json::from_value::<Creature>(j).unwrap(), m);
        assert!(serde_json::from_str::<Creature>(r#"{"arena":3,"cap":1,"members":[]}"#).is_err());
    }

    fn creature(max_arena: usize) -> impl Strategy<Value = Creature> {
        (1..=max_arena).prop_flat_map(|n| {
            (Just(n), 0..=n, proptest::collection::vec(0u64..1 << n, 1..12))
        }).prop_map(|(n, h, ms)| {
            let ms: Vec<u64> = ms.into_iter().map(|m| {
                // drop bits until the member fits the cap
                let mut m = m;
                while m.count_ones() as usize > h { m &= m - 1; }
                m
            }).collect();
            Creature::from_masks(n, h, ms).unwrap()
        })
    }

    proptest! {
        #[test]
        fn norm_matches_definition(m in creature(7)) {
            prop_assert_eq!(norm(&m).unwrap(), norm_oracle(&m));
        }

        #[test]
        fn norm_positive_iff_union_is_arena(m in creature(7)) {
            let full = (1u64 << m.arena()) - 1;
            prop_assert_eq!(norm(&m).unwrap() >= 1, m.union_mask() == full);
        }

        #[test]
        fn norm_is_monotone(m in creature(7), extra in proptest::collection::vec(any::<u64>(), 0..6)) {
            let mut more = m.masks().to_vec();
            for e in extra {
                let mut e = e & ((1u64 << m.arena()) - 1);
                while e.count_ones() as usize > m.cap() { e &= e - 1; }
                more.push(e);
            }
            let bigger = Creature::from_masks(m.arena(), m.cap(), more).unwrap();
            prop_assert!(norm(&m).unwrap() <= norm(&bigger).unwrap());
        }

        #[test]
        fn bigness_loses_at_most_a_factor_d(m in creature(7), d in 2u64..5, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let col: Vec<usize> = (0..m.len()).map(|_| rng.gen_range(0..d as usize)).collect();
            let (c, star) = bigness_refine(&m, &col, d).unwrap();
            let n = norm(&m).unwrap();
            let ns = norm(&star).unwrap();
            prop_assert!(n < d as usize * (ns + 1));
            prop_assert!(star.is_subfamily_of(&m));
            prop_assert!(star.masks().iter().all(|&x| col[m.index_of(x).unwrap()] == c));
            // pigeonhole: every class's norm is at most the chosen one
            prop_assert!(n < d as usize * (ns + 1));
        }
    }
}
