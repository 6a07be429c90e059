//! Finite relational systems `(X, Y, ⊏)`, their bounding and dominating
//! numbers by exhaustive search, duals, and Tukey connections.

use serde::{Deserialize, Serialize};
use std::fmt;

/// A natural number or the infinity sentinel used when a finite system is degenerate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Card {
    Finite(usize),
    Infinite,
}

impl fmt::Display for Card {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Card::Finite(n) => write!(f, "{n}"),
            Card::Infinite => write!(f, "inf"),
        }
    }
}

impl Serialize for Card {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Card::Finite(n) => s.serialize_u64(*n as u64),
            Card::Infinite => s.serialize_str("inf"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RelError {
    #[error("system too large for exhaustive search: |X| = {x}, |Y| = {y}, cap {cap}")]
    SizeCap { x: usize, y: usize, cap: usize },
    #[error("relation matrix has wrong shape")]
    Shape,
    #[error("domain mismatch: {0}")]
    Domain(String),
}

pub const SEARCH_CAP: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinRelSystem {
    pub x_size: usize,
    pub y_size: usize,
    /// `rel[x][y]` iff `x ⊏ y`.
    pub rel: Vec<Vec<bool>>,
}

impl FinRelSystem {
    pub fn new(rel: Vec<Vec<bool>>, y_size: usize) -> Result<FinRelSystem, RelError> {
        let s = FinRelSystem { x_size: rel.len(), y_size, rel };
        s.check_shape()?;
        Ok(s)
    }

    pub fn from_fn(x_size: usize, y_size: usize, f: impl Fn(usize, usize) -> bool) -> FinRelSystem {
        let rel = (0..x_size).map(|x| (0..y_size).map(|y| f(x, y)).collect()).collect();
        FinRelSystem { x_size, y_size, rel }
    }

    pub fn check_shape(&self) -> Result<(), RelError> {
        if self.rel.len() != self.x_size || self.rel.iter().any(|r| r.len() != self.y_size) {
            return Err(RelError::Shape);
        }
        Ok(())
    }

    pub fn related(&self, x: usize, y: usize) -> bool {
        self.rel[x][y]
    }
}

/// Iterates all subsets of `0..n` as bitmasks, by ascending size.
fn masks_by_size(n: usize) -> impl Iterator<Item = u32> {
    (0..=n).flat_map(move |k| {
        let limit = 1u64 << n;
        let first = if k == 0 { 0u64 } else { (1u64 << k) - 1 };
        std::iter::successors(Some(first), move |&v| {
            if v == 0 {
                return None;
            }
            // next mask with the same popcount
            let c = v & v.wrapping_neg();
            let r = v + c;
            let next = (((r ^ v) >> 2) / c) | r;
            (next < limit).then_some(next)
        })
        .take_while(move |&v| v < limit.max(1))
        .map(|v| v as u32)
    })
}

/// `(𝔟(R), 𝔡(R))` by exhaustive search.
pub fn brute_characteristics(r: &FinRelSystem) -> Result<(Card, Card), RelError> {
    r.check_shape()?;
    if r.x_size > SEARCH_CAP || r.y_size > SEARCH_CAP {
        return Err(RelError::SizeCap { x: r.x_size, y: r.y_size, cap: SEARCH_CAP });
    }
    // below[y] = {x : x ⊏ y}, above[x] = {y : x ⊏ y}
    let below: Vec<u32> = (0..r.y_size)
        .map(|y| (0..r.x_size).filter(|&x| r.rel[x][y]).fold(0, |m, x| m | 1 << x))
        .collect();
    let above: Vec<u32> = r.rel.iter().map(|row| row.iter().enumerate().filter(|(_, &b)| b).fold(0, |m, (y, _)| m | 1 << y)).collect();

    let all_x: u32 = if r.x_size == 32 { u32::MAX } else { (1u32 << r.x_size) - 1 };
    let b = if below.iter().any(|&m| m & all_x == all_x) {
        Card::Infinite
    } else {
        let bounded = |bm: u32| below.iter().any(|&m| bm & m == bm);
        Card::Finite(masks_by_size(r.x_size).find(|&bm| !bounded(bm)).map(|m| m.count_ones() as usize).expect("X itself is unbounded"))
    };
    let d = if above.contains(&0) {
        Card::Infinite
    } else {
        let covers = |dm: u32| above.iter().all(|&m| m & dm != 0);
        Card::Finite(masks_by_size(r.y_size).find(|&dm| covers(dm)).map(|m| m.count_ones() as usize).expect("Y itself dominates"))
    };
    Ok((b, d))
}

/// `R^⊥ = (Y, X, ⊏̸)`.
pub fn dual(r: &FinRelSystem) -> FinRelSystem {
    FinRelSystem::from_fn(r.y_size, r.x_size, |y, x| !r.rel[x][y])
}

/// `F: X -> X'` and `G: Y' -> Y`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TukeyPair {
    pub f: Vec<usize>,
    pub g: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TukeyCheck {
    Ok,
    Counterexample { x: usize, y: usize },
}

/// Checks that `F(x) ⊏' y'` implies `x ⊏ G(y')` for every `x` and `y'`.
/// The first violation in `(x, y')` order is reported.
pub fn check_tukey(r: &FinRelSystem, r2: &FinRelSystem, p: &TukeyPair) -> Result<TukeyCheck, RelError> {
    r.check_shape()?;
    r2.check_shape()?;
    if p.f.len() != r.x_size || p.f.iter().any(|&v| v >= r2.x_size) {
        return Err(RelError::Domain("F must map X into X'".into()));
    }
    if p.g.len() != r2.y_size || p.g.iter().any(|&v| v >= r.y_size) {
        return Err(RelError::Domain("G must map Y' into Y".into()));
    }
    for x in 0..r.x_size {
        for y2 in 0..r2.y_size {
            if r2.rel[p.f[x]][y2] && !r.rel[x][p.g[y2]] {
                return Ok(TukeyCheck::Counterexample { x, y: y2 });
            }
        }
    }
    Ok(TukeyCheck::Ok)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
        if k == 0 {
            return vec![vec![]];
        }
        if n < k {
            return vec![];
        }
        let mut out = subsets(n - 1, k);
        for mut s in subsets(n - 1, k - 1) {
            s.push(n - 1);
            out.push(s);
        }
        out
    }

    // Direct-definition enumerator, independent of the bitmask search.
    fn oracle(r: &FinRelSystem) -> (Card, Card) {
        let b = (0..=r.x_size)
            .find(|&k| subsets(r.x_size, k).iter().any(|bs| !(0..r.y_size).any(|y| bs.iter().all(|&x| r.rel[x][y]))))
            .map_or(Card::Infinite, Card::Finite);
        let d = (0..=r.y_size)
            .find(|&k| subsets(r.y_size, k).iter().any(|ds| (0..r.x_size).all(|x| ds.iter().any(|&y| r.rel[x][y]))))
            .map_or(Card::Infinite, Card::Finite);
        (b, d)
    }

    #[test]
    fn degenerate_and_identity_systems() {
        let full = FinRelSystem::from_fn(3, 3, |_, _| true);
        let empty = FinRelSystem::from_fn(3, 3, |_, _| false);
        let id = FinRelSystem::from_fn(3, 3, |x, y| x == y);
        assert_eq!(brute_characteristics(&full).unwrap(), (Card::Infinite, Card::Finite(1)));
        assert_eq!(brute_characteristics(&empty).unwrap(), (Card::Finite(1), Card::Infinite));
        assert_eq!(brute_characteristics(&id).unwrap(), (Card::Finite(2), Card::Finite(3)));
        assert_eq!(dual(&full), empty);
    }

    #[test]
    fn size_cap() {
        let big = FinRelSystem::from_fn(21, 2, |_, _| false);
        assert!(matches!(brute_characteristics(&big), Err(RelError::SizeCap { .. })));
    }

    #[test]
    fn constant_g_to_unrelated_point_fails() {
        let r = FinRelSystem::from_fn(2, 3, |x, y| y == x);
        let p = TukeyPair { f: vec![0, 1], g: vec![2, 2, 2] };
        assert_eq!(check_tukey(&r, &r, &p).unwrap(), TukeyCheck::Counterexample { x: 0, y: 0 });
        let id = TukeyPair { f: vec![0, 1], g: vec![0, 1, 2] };
        assert_eq!(check_tukey(&r, &r, &id).unwrap(), TukeyCheck::Ok);
    }

    #[test]
    fn json_shape() {
        let r = FinRelSystem::from_fn(1, 2, |_, y| y == 1);
        let j = serde_json::to_value(&r).unwrap();
        assert_eq!(j, serde_json::json!({"x_size":1,"y_size":2,"rel":[[false,true]]}));
        let back: FinRelSystem = serde_json::from_value(j).unwrap();
        assert_eq!(back, r);
    }

    fn system(max: usize) -> impl Strategy<Value = FinRelSystem> {
        (1..=max, 1..=max).prop_flat_map(|(n, m)| {
            proptest::collection::vec(proptest::collection::vec(any::<bool>(), m), n)
                .prop_map(move |rel| FinRelSystem { x_size: n, y_size: m, rel })
        })
    }

    proptest! {
        #[test]
        fn agrees_with_direct_definition(r in system(4)) {
            prop_assert_eq!(brute_characteristics(&r).unwrap(), oracle(&r));
        }

        #[test]
        fn duality_swaps_characteristics(r in system(6)) {
            let (b, d) = brute_characteristics(&r).unwrap();
            let (bd, dd) = brute_characteristics(&dual(&r)).unwrap();
            prop_assert_eq!(bd, d);
            prop_assert_eq!(dd, b);
            prop_assert_eq!(dual(&dual(&r)), r);
        }

        #[test]
        fn tukey_connections_order_characteristics(
            r in system(4), r2 in system(4),
            fs in proptest::collection::vec(0usize..4, 4), gs in proptest::collection::vec(0usize..4, 4),
        ) {
            let p = TukeyPair {
                f: fs[..r.x_size].iter().map(|v| v % r2.x_size).collect(),
                g: gs[..r2.y_size].iter().map(|v| v % r.y_size).collect(),
            };
            if check_tukey(&r, &r2, &p).unwrap() == TukeyCheck::Ok {
                let (b, d) = brute_characteristics(&r).unwrap();
                let (b2, d2) = brute_characteristics(&r2).unwrap();
                prop_assert!(d <= d2);
                prop_assert!(b2 <= b);
            }
        }
    }
}
