//! Seeded instance generators and named property suites.
//!
//! Every generator takes a 64-bit seed and draws from `ChaCha8Rng`; names
//! hash branch values with [`mix`], so the same seed gives the same instance.

use std::collections::BTreeSet;
use std::sync::Arc;

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::One;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::conditions::{
    anti_localize, branches, check_reading, decode_cell, early_read, localization_failure, localize, NameOracle,
    ParamTriple, ReadingMode, TruncCondition,
};
use crate::connections::{
    build_partition, ceil_log2, ed_maps, escape_measure, iota, yorioka_into_anti_dual_maps, anti_dual_into_yorioka_maps, anti_into_local_maps, local_into_anti_maps, CellCode,
    SigmaCover, Slalom, Transfer,
};
use crate::creatures::{bigness_refine, norm, range_refine, Creature};
use crate::family::{toy_family, ToyFamily, TOY_MAX_HORIZON};
use crate::products::{
    catch_holds, dependence_leak, phi_invariance_failure, product_catch, product_order, restricted_localize,
    restricted_membership_failure, ProdError, ProductBranch, ProductCondition, ProductName, ProductOrder,
};
use crate::relational::{brute_characteristics, check_tukey, dual, FinRelSystem, TukeyCheck, TukeyPair};

/// SplitMix64 step over `h ^ v`.
pub fn mix(h: u64, v: u64) -> u64 {
    let mut z = (h ^ v).wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn hash_values(seed: u64, k: usize, vals: &[u64]) -> u64 {
    vals.iter().fold(mix(seed, k as u64), |h, &v| mix(h, v))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------------------
// Names

/// A name read timely but not early: `x(i)` hashes the branch through the
/// first split above `i` (through the last level when there is none), and
/// takes values in `0..range[i]`.
pub fn timely_name(p: &TruncCondition, profile: Vec<u64>, range: Vec<u64>, seed: u64) -> NameOracle {
    let splits = p.splits();
    let n = p.horizon();
    let reach: Vec<usize> = (0..n).map(|i| splits.iter().copied().find(|&s| s > i).unwrap_or(n - 1)).collect();
    let eval = Arc::new(move |b: &[u64]| -> Vec<u64> {
        (0..b.len()).map(|i| hash_values(seed, i, &b[..=reach[i]]) % range[i]).collect()
    });
    NameOracle::new(p.clone(), profile, eval).expect("profile covers the horizon")
}

/// Random subfamily of a full creature with at least `min(2, |full|)` members.
pub fn random_subfamily(rng: &mut ChaCha8Rng, arena: usize, cap: usize) -> Creature {
    let full = Creature::full(arena, cap).expect("small arena");
    let mut masks: Vec<u64> = full.masks().to_vec();
    masks.shuffle(rng);
    let keep = rng.gen_range(2.min(masks.len())..=masks.len());
    masks.truncate(keep);
    Creature::from_masks(arena, cap, masks).expect("subfamily")
}

/// Random creature over `arena <= 8`, cap `h <= 3`.
pub fn random_creature(rng: &mut ChaCha8Rng, arena: usize, cap: usize) -> Creature {
    let full = Creature::full(arena, cap).expect("small arena");
    let p = rng.gen_range(0.05..0.95);
    let mut masks: Vec<u64> = full.masks().iter().copied().filter(|_| rng.gen_bool(p)).collect();
    if masks.is_empty() {
        masks.push(full.masks()[rng.gen_range(0..full.len())]);
    }
    Creature::from_masks(arena, cap, masks).expect("subfamily")
}

// ---------------------------------------------------------------------------
// Single-condition instances

#[derive(Clone)]
pub struct ReadingInstance {
    pub seed: u64,
    pub toy: ToyFamily,
    pub p: TruncCondition,
    pub nu: NameOracle,
}

fn toy_condition(rng: &mut ChaCha8Rng, toy: &ToyFamily) -> TruncCondition {
    let par = ParamTriple::new(toy.c.clone(), toy.h.clone(), toy.d.clone()).expect("toy parameters");
    let cells = (0..toy.horizon())
        .map(|k| {
            if rng.gen_bool(0.25) {
                random_subfamily(rng, toy.c[k], toy.h[k])
            } else {
                Creature::full(toy.c[k], toy.h[k]).expect("small arena")
            }
        })
        .collect();
    TruncCondition::new(par, cells).expect("cells match")
}

/// A toy condition with a timely name of profile `a`, for early reading and localisation.
pub fn reading_instance(seed: u64) -> ReadingInstance {
    let mut r = rng(seed);
    let horizon = r.gen_range(2..=5);
    let toy = toy_family(mix(seed, 1), horizon).expect("toy families exist up to the maximal horizon");
    let p = toy_condition(&mut r, &toy);
    let nu = timely_name(&p, toy.a.clone(), toy.a.clone(), mix(seed, 2));
    ReadingInstance { seed, toy, p, nu }
}

/// A toy condition with anti-localisation parameters and a timely slalom
/// name: values are cell codes in `S(b, g)`, profile `b^{∇g}`.
pub fn anti_instance(seed: u64) -> ReadingInstance {
    let mut r = rng(seed);
    for attempt in 0.. {
        let horizon = r.gen_range(2..=4);
        let toy = toy_family(mix(seed, 100 + attempt), horizon).expect("toy family");
        let Some(al) = toy.anti.clone() else { continue };
        let p = toy_condition(&mut r, &toy);
        let codes: Vec<u64> = (0..horizon).map(|k| CellCode::new(al.b[k], al.g[k]).count()).collect();
        let nu = timely_name(&p, al.a.clone(), codes, mix(seed, 2));
        return ReadingInstance { seed, toy, p, nu };
    }
    unreachable!()
}

// ---------------------------------------------------------------------------
// Product instances

#[derive(Clone)]
pub struct ProductInstance {
    pub seed: u64,
    pub p: ProductCondition,
    pub nu: ProductName,
    pub a: Vec<u64>,
    pub e: Vec<u64>,
    pub c_alpha: BTreeSet<String>,
}

const PRODUCT_MENU: [(usize, usize); 3] = [(2, 1), (3, 1), (4, 2)];

/// Two coordinates, `xi0` owned by `alpha` (the restricted side) and `xi1`
/// owned by `beta`; each level is split by at most one of them. The name
/// reads every coordinate through level `k`, which the flat condition reads early.
pub fn restricted_instance(seed: u64) -> ProductInstance {
    let mut r = rng(seed);
    let horizon = r.gen_range(2..=4);
    let owner: Vec<u8> = (0..horizon).map(|_| r.gen_range(0..3)).collect();
    let a: Vec<u64> = (0..horizon).map(|_| r.gen_range(2..=4)).collect();
    let shape: Vec<[(usize, usize); 2]> =
        (0..horizon).map(|_| [0, 1].map(|_| PRODUCT_MENU[r.gen_range(0..PRODUCT_MENU.len())])).collect();
    let mut cells: [Vec<Creature>; 2] = [Vec::new(), Vec::new()];
    for k in 0..horizon {
        for j in 0..2 {
            let (c, h) = shape[k][j];
            let cell = if owner[k] == j as u8 + 1 {
                Creature::full(c, h).expect("small arena")
            } else {
                Creature::singleton(c, h, &[r.gen_range(0..c)]).expect("singleton")
            };
            cells[j].push(cell);
        }
    }
    // |poss(p, <k)| from the split cells
    let mut m = vec![1u64; horizon + 1];
    for k in 0..horizon {
        let width = (0..2).map(|j| cells[j][k].len() as u64).product::<u64>();
        m[k + 1] = m[k] * width;
    }
    let mut e = Vec::with_capacity(horizon);
    let mut d_beta = Vec::with_capacity(horizon);
    for k in 0..horizon {
        let (c1, h1) = shape[k][1];
        let cnh = crate::numeric::subset_count(&BigUint::from(c1), &BigUint::from(h1), crate::numeric::CountMode::Exact);
        let cnh: u64 = cnh.try_into().expect("small");
        let wide = owner[k] == 2 && r.gen_bool(0.5);
        e.push(if wide { 2 * m[k] * cnh } else { m[k].max(1) });
        d_beta.push((2 * m[k] * a[k]).max(2));
    }
    let d_alpha = vec![2u64; horizon];
    let par = |j: usize, d: &Vec<u64>| {
        ParamTriple::new(shape.iter().map(|s| s[j].0).collect(), shape.iter().map(|s| s[j].1).collect(), d.clone())
            .expect("params")
    };
    let parts = [
        TruncCondition::new(par(0, &d_alpha), cells[0].clone()).expect("part"),
        TruncCondition::new(par(1, &d_beta), cells[1].clone()).expect("part"),
    ];
    let owners = [("xi0".to_string(), "alpha".to_string()), ("xi1".to_string(), "beta".to_string())].into();
    let [p0, p1] = parts;
    let p = ProductCondition::new(owners, [("xi0".to_string(), p0), ("xi1".to_string(), p1)].into()).expect("product");
    let name_seed = mix(seed, 3);
    let prof = a.clone();
    let nu = ProductName::new(
        p.clone(),
        a.clone(),
        Arc::new(move |b: &ProductBranch| {
            (0..prof.len())
                .map(|k| {
                    let vals: Vec<u64> = b.values().flat_map(|v| v[..=k].to_vec()).collect();
                    hash_values(name_seed, k, &vals) % prof[k]
                })
                .collect()
        }),
    )
    .expect("name");
    ProductInstance { seed, p, nu, a, e, c_alpha: ["xi0".to_string()].into() }
}

#[derive(Clone)]
pub struct CatchInstance {
    pub seed: u64,
    pub p: ProductCondition,
    /// Reads only `xi0`.
    pub nu: ProductName,
    /// Reads `xi1` as well.
    pub leak: ProductName,
    pub b: BTreeSet<String>,
    pub xi: String,
    pub n0: usize,
}

/// Coordinates `xi0..xi{w-1}` of one family over small conditions; the real is read from
/// `B = {xi0}` and caught by the generic slalom of `xi1`.
pub fn catch_instance(seed: u64) -> CatchInstance {
    let mut r = rng(seed);
    let horizon = r.gen_range(2..=3);
    let width = if horizon == 3 { 2 } else { r.gen_range(2..=3) };
    let mut parts = Vec::with_capacity(width);
    let c: Vec<usize> = (0..horizon).map(|_| r.gen_range(2..=3)).collect();
    let arenas: Vec<u64> = c.iter().map(|&v| v as u64).collect();
    for j in 0..width {
        let h = vec![1; horizon];
        let par = ParamTriple::new(c.clone(), h.clone(), vec![2; horizon]).expect("params");
        let cells = (0..horizon)
            .map(|k| {
                if j == 0 || r.gen_bool(0.7) {
                    Creature::full(c[k], 1).expect("full")
                } else {
                    Creature::singleton(c[k], 1, &[0]).expect("singleton")
                }
            })
            .collect();
        parts.push(TruncCondition::new(par, cells).expect("part"));
    }
    // make sure xi1 can catch somewhere
    let last = horizon - 1;
    parts[1].cells[last] = Creature::full(arenas[last] as usize, 1).expect("full");
    let p = ProductCondition::single_family("alpha", parts).expect("product");
    let n0 = r.gen_range(0..horizon);
    let s = mix(seed, 4);
    let prof = arenas.clone();
    let nu = ProductName::new(
        p.clone(),
        arenas.clone(),
        Arc::new(move |b: &ProductBranch| (0..prof.len()).map(|k| hash_values(s, k, &b["xi0"]) % prof[k]).collect()),
    )
    .expect("name");
    let prof = arenas.clone();
    let leak = ProductName::new(
        p.clone(),
        arenas.clone(),
        Arc::new(move |b: &ProductBranch| {
            (0..prof.len())
                .map(|k| (hash_values(s, k, &b["xi0"]) + b["xi1"][last].trailing_zeros().min(8) as u64) % prof[k])
                .collect()
        }),
    )
    .expect("name");
    CatchInstance { seed, p, nu, leak, b: ["xi0".to_string()].into(), xi: "xi1".into(), n0 }
}

// ---------------------------------------------------------------------------
// Suites

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub instances: usize,
    pub failures: Vec<Value>,
}

pub const SUITES: [&str; 10] = [
    "norm",
    "bigness",
    "early-reading",
    "localisation",
    "anti-localisation",
    "transfer",
    "tukey",
    "restricted-localisation",
    "catching",
    "measure",
];

/// Runs a named suite on `count` seeded instances (`transfer` is exhaustive and ignores it).
pub fn run_suite(name: &str, seed: u64, count: usize) -> Option<SuiteReport> {
    let seeds = (0..count as u64).map(|i| mix(seed, i));
    let mut failures = Vec::new();
    let mut instances = count;
    match name {
        "norm" => seeds.for_each(|s| failures.extend(norm_case(s))),
        "bigness" => seeds.for_each(|s| failures.extend(bigness_case(s))),
        "early-reading" => seeds.for_each(|s| failures.extend(early_case(s))),
        "localisation" => seeds.for_each(|s| failures.extend(localisation_case(s))),
        "anti-localisation" => seeds.for_each(|s| failures.extend(anti_case(s))),
        "restricted-localisation" => seeds.for_each(|s| failures.extend(restricted_case(s))),
        "catching" => seeds.for_each(|s| failures.extend(catch_case(s))),
        "tukey" => seeds.for_each(|s| failures.extend(tukey_case(s))),
        "measure" => seeds.for_each(|s| failures.extend(measure_case(s))),
        "transfer" => {
            instances = 0;
            for map in TRANSFER_MAPS {
                let (n, f) = transfer_exhaustive(map);
                instances += n;
                failures.extend(f);
            }
        }
        _ => return None,
    }
    Some(SuiteReport { suite: name.to_string(), instances, failures })
}

/// Direct definition of the covering norm: the largest `k <= cap` such that
/// every `k`-subset of the arena lies inside some member.
pub fn norm_by_definition(m: &Creature) -> usize {
    let arena = m.arena();
    let mut best = 0;
    for k in 1..=m.cap().min(arena) {
        let all = (0u64..1 << arena)
            .filter(|s| s.count_ones() as usize == k)
            .all(|s| m.masks().iter().any(|&t| t & s == s));
        if !all {
            break;
        }
        best = k;
    }
    best
}

pub fn norm_case(seed: u64) -> Option<Value> {
    let mut r = rng(seed);
    let arena = r.gen_range(1..=8);
    let cap = r.gen_range(1..=3usize.min(arena));
    let m = random_creature(&mut r, arena, cap);
    let got = norm(&m).ok()?;
    let want = norm_by_definition(&m);
    let union_full = m.union_mask() == (1u64 << arena) - 1;
    (got != want || (got >= 1) != union_full).then(|| json!({"seed": seed, "creature": m, "norm": got, "oracle": want}))
}

pub fn bigness_case(seed: u64) -> Option<Value> {
    let mut r = rng(seed);
    let arena = r.gen_range(1..=8);
    let cap = r.gen_range(1..=3usize.min(arena));
    let d = r.gen_range(2..=4u64);
    let m = random_creature(&mut r, arena, cap);
    let coloring: Vec<usize> = (0..m.len()).map(|_| r.gen_range(0..d as usize)).collect();
    let (colour, sub) = bigness_refine(&m, &coloring, d).ok()?;
    let constant = sub.masks().iter().all(|&t| coloring[m.index_of(t).expect("subfamily")] == colour);
    let (n, ns) = (norm(&m).ok()?, norm(&sub).ok()?);
    let big = (n as u64 + 1) <= d * (ns as u64 + 1);
    let values = r.gen_range(1..=6usize);
    let k = values.div_ceil(d as usize).max(1);
    let f: Vec<usize> = (0..m.len()).map(|_| r.gen_range(0..values)).collect();
    let rr = range_refine(&m, &f, values, k, d).ok()?;
    let image: BTreeSet<usize> = rr.masks().iter().map(|&t| f[m.index_of(t).expect("subfamily")]).collect();
    let range_ok = image.len() <= k && rr.is_subfamily_of(&m);
    (!(constant && big && range_ok && sub.is_subfamily_of(&m)))
        .then(|| json!({"seed": seed, "creature": m, "coloring": coloring, "d": d}))
}

fn fail(seed: u64, what: impl ToString) -> Option<Value> {
    Some(json!({"seed": seed, "failure": what.to_string()}))
}

pub fn early_case(seed: u64) -> Option<Value> {
    let inst = reading_instance(seed);
    let out = match early_read(&inst.p, &inst.nu) {
        Ok(o) => o,
        Err(e) => return fail(seed, e),
    };
    if !check_reading(&out.q, &inst.nu, ReadingMode::Early).unwrap_or(false) {
        return fail(seed, "result does not read the name early");
    }
    if let Some(b) = out.book.iter().find(|b| !b.holds()) {
        return fail(seed, format!("norm bookkeeping fails at level {}", b.level));
    }
    None
}

pub fn localisation_case(seed: u64) -> Option<Value> {
    let inst = reading_instance(seed);
    let q = match early_read(&inst.p, &inst.nu) {
        Ok(o) => o.q,
        Err(e) => return fail(seed, e),
    };
    let out = match localize(&q, &inst.nu, &inst.toy.a, &inst.toy.e, 0) {
        Ok(o) => o,
        Err(e) => return fail(seed, e),
    };
    if let Some(k) = (0..q.horizon()).find(|&k| out.phi.cells[k].len() as u64 > inst.toy.e[k]) {
        return fail(seed, format!("|phi({k})| > e({k})"));
    }
    match localization_failure(&out.q, &inst.nu, &out.phi, 0) {
        Ok(None) => None,
        Ok(Some((b, k))) => Some(json!({"seed": seed, "branch": b, "level": k})),
        Err(e) => fail(seed, e),
    }
}

pub fn anti_case(seed: u64) -> Option<Value> {
    let inst = anti_instance(seed);
    let al = inst.toy.anti.clone().expect("anti parameters");
    let q = match early_read(&inst.p, &inst.nu) {
        Ok(o) => o.q,
        Err(e) => return fail(seed, e),
    };
    let out = match anti_localize(&q, &inst.nu, &al.b, &al.g, 0) {
        Ok(o) => o,
        Err(e) => return fail(seed, e),
    };
    for b in branches(&out.q).ok()? {
        let x = inst.nu.eval(&b);
        let cells: Vec<Vec<u64>> = (0..x.len()).map(|k| decode_cell(al.b[k], al.g[k], x[k])).collect();
        let s = Slalom::new(al.b.clone(), al.g.clone(), cells).ok()?;
        let transfer = match anti_into_local_maps(&al.b, &al.g, &al.e, &s, &out.phi) {
            Ok(o) => o,
            Err(e) => return fail(seed, e),
        };
        if transfer.g_image != out.y || !s.anti_localized_by(&transfer.g_image, 0..x.len()) {
            return Some(json!({"seed": seed, "branch": b, "y": transfer.g_image}));
        }
    }
    None
}

pub fn restricted_case(seed: u64) -> Option<Value> {
    let inst = restricted_instance(seed);
    let out = match restricted_localize(&inst.p, &inst.nu, &inst.c_alpha, &inst.a, &inst.e, 0) {
        Ok(o) => o,
        Err(e) => return fail(seed, e),
    };
    if let Ok(Some((x, y))) = phi_invariance_failure(&out.q, &out.phi, &inst.c_alpha) {
        return Some(json!({"seed": seed, "invariance": [x, y]}));
    }
    match restricted_membership_failure(&out.q, &inst.nu, &out.phi, 0) {
        Ok(None) => None,
        Ok(Some((b, k))) => Some(json!({"seed": seed, "branch": b, "level": k})),
        Err(e) => fail(seed, e),
    }
}

pub fn catch_case(seed: u64) -> Option<Value> {
    let inst = catch_instance(seed);
    let out = match product_catch(&inst.p, &inst.nu, &inst.b, &inst.xi, inst.n0) {
        Ok(o) => o,
        Err(e) => return fail(seed, e),
    };
    if !catch_holds(&out.q, &inst.nu, &inst.xi, out.k).unwrap_or(false)
        || !product_order(&out.q, &inst.p, &ProductOrder::Plain).unwrap_or(false)
    {
        return fail(seed, "caught value missing from the generic slalom");
    }
    let leaks = dependence_leak(&inst.p, &inst.leak, &inst.b).ok()?.is_some();
    let rejected = matches!(product_catch(&inst.p, &inst.leak, &inst.b, &inst.xi, inst.n0), Err(ProdError::DependenceLeak { .. }));
    (leaks && !rejected).then(|| json!({"seed": seed, "failure": "leaking name accepted"}))
}

/// A random system and a connection to a second system built to respect it.
pub fn tukey_instance(seed: u64) -> (FinRelSystem, FinRelSystem, TukeyPair) {
    let mut r = rng(seed);
    let (x, y) = (r.gen_range(1..=6), r.gen_range(1..=6));
    let (x2, y2) = (r.gen_range(1..=6), r.gen_range(1..=6));
    let density = r.gen_range(0.1..0.9);
    let raw1: Vec<Vec<bool>> = (0..x).map(|_| (0..y).map(|_| r.gen_bool(density)).collect()).collect();
    let rel = FinRelSystem::from_fn(x, y, |a, b| raw1[a][b]);
    let f: Vec<usize> = (0..x).map(|_| r.gen_range(0..x2)).collect();
    let g: Vec<usize> = (0..y2).map(|_| r.gen_range(0..y)).collect();
    let density2 = r.gen_range(0.1..0.9);
    let raw: Vec<Vec<bool>> = (0..x2).map(|_| (0..y2).map(|_| r.gen_bool(density2)).collect()).collect();
    let rel2 = FinRelSystem::from_fn(x2, y2, |a, b| raw[a][b] && (0..x).filter(|&u| f[u] == a).all(|u| rel.rel[u][g[b]]));
    (rel, rel2, TukeyPair { f, g })
}

pub fn tukey_case(seed: u64) -> Option<Value> {
    let (r1, r2, p) = tukey_instance(seed);
    if check_tukey(&r1, &r2, &p).ok()? != TukeyCheck::Ok {
        return fail(seed, "constructed pair is not a connection");
    }
    let (b1, d1) = brute_characteristics(&r1).ok()?;
    let (b2, d2) = brute_characteristics(&r2).ok()?;
    let (bd, _) = brute_characteristics(&dual(&r1)).ok()?;
    (!(d1 <= d2 && b2 <= b1 && bd == d1)).then(|| json!({"seed": seed, "r": r1, "r2": r2, "pair": p}))
}

pub fn random_slalom(seed: u64) -> Slalom {
    let mut r = rng(seed);
    let n = r.gen_range(1..=8);
    let c: Vec<u64> = (0..n).map(|_| r.gen_range(1..=12)).collect();
    let h: Vec<u64> = c.iter().map(|&ci| r.gen_range(1..=ci)).collect();
    let cells = (0..n)
        .map(|i| {
            let mut all: Vec<u64> = (0..c[i]).collect();
            all.shuffle(&mut r);
            all.truncate(r.gen_range(0..=h[i] as usize));
            all
        })
        .collect();
    Slalom::new(c, h, cells).expect("slalom")
}

pub fn measure_case(seed: u64) -> Option<Value> {
    let s = random_slalom(seed);
    let n = s.len();
    let (mut num, mut den) = (BigUint::one(), BigUint::one());
    for i in 0..n {
        num *= s.c[i] - s.cells[i].len() as u64;
        den *= s.c[i];
    }
    let exact = BigRational::new(num.into(), den.into());
    let cut = (mix(seed, 9) % (n as u64 + 1)) as usize;
    let split = escape_measure(&s, 0..cut) * escape_measure(&s, cut..n);
    let whole = escape_measure(&s, 0..n);
    (whole != exact || split != whole).then(|| json!({"seed": seed, "slalom": s, "cut": cut}))
}

// ---------------------------------------------------------------------------
// Exhaustive transfer checks

pub const TRANSFER_MAPS: [&str; 5] = ["l24", "l25", "l26", "l27", "ed"];
pub const TRANSFER_CAP: usize = 100_000;

fn subsets_upto(n: u64, k: u64) -> Vec<Vec<u64>> {
    (0u64..1 << n).filter(|m| m.count_ones() as u64 <= k).map(|m| (0..n).filter(|b| m >> b & 1 == 1).collect()).collect()
}

fn product<T: Clone>(choices: &[Vec<T>]) -> Vec<Vec<T>> {
    choices.iter().fold(vec![Vec::new()], |acc, opts| {
        acc.iter().flat_map(|pre| opts.iter().map(move |o| {
            let mut v = pre.clone();
            v.push(o.clone());
            v
        })).collect()
    })
}

fn witness(map: &str, params: Value, at: usize) -> Value {
    json!({"map": map, "params": params, "violation": at})
}

/// Runs every state of the instance list of a map; returns `(states, violations)`.
pub fn transfer_exhaustive(map: &str) -> (usize, Vec<Value>) {
    let mut states = 0;
    let mut bad = Vec::new();
    let mut note = |t: Transfer, params: Value| {
        states += 1;
        if let Transfer::Violation(i) = t {
            bad.push(witness(map, params, i));
        }
    };
    match map {
        "l24" => {
            for (c, h) in [(vec![8u64, 8], vec![1u64, 1]), (vec![4, 8], vec![1, 2]), (vec![16], vec![2]), (vec![4, 4, 4], vec![1, 1, 1])] {
                let need = c.iter().map(|&x| 63 - x.leading_zeros() as usize).max().unwrap_or(0);
                let cells: Vec<Vec<Vec<u64>>> = c.iter().zip(&h).map(|(&ci, &hi)| subsets_upto(ci, hi)).collect();
                for s in product(&cells) {
                    let s = Slalom::new(c.clone(), h.clone(), s).expect("slalom");
                    for yv in 0..1u64 << need {
                        let y = iota(yv, need);
                        let t = yorioka_into_anti_dual_maps(&c, &h, &y, &s).map(|o| o.transfer).unwrap_or(Transfer::Violation(usize::MAX));
                        note(t, json!({"c": c, "h": h, "y": yv, "s": s.cells}));
                    }
                }
            }
        }
        "l25" => {
            for (b, g) in [(vec![2u64, 2], vec![1u64, 1]), (vec![4], vec![2]), (vec![3, 2], vec![1, 1]), (vec![2, 4], vec![1, 1])] {
                let widths: Vec<u64> = b.iter().map(|&v| ceil_log2(&BigUint::from(v))).collect();
                let bit = build_partition(&widths).expect("partition");
                let jp = build_partition(&g).expect("partition");
                let mut per_entry: Vec<Vec<Vec<bool>>> = Vec::new();
                for (n, &(s, e)) in jp.blocks.iter().enumerate() {
                    let need = bit.blocks[n].1 as usize;
                    for _ in s..e {
                        let mut opts = Vec::new();
                        for len in need..=need + 1 {
                            for v in 0..1u64 << len {
                                opts.push(iota(v, len));
                            }
                        }
                        per_entry.push(opts);
                    }
                }
                let ys = product(&b.iter().map(|&bi| (0..bi).collect::<Vec<u64>>()).collect::<Vec<_>>());
                for entries in product(&per_entry) {
                    let x = SigmaCover { entries };
                    for y in &ys {
                        let t = anti_dual_into_yorioka_maps(&b, &g, y, &x).map(|o| o.transfer).unwrap_or(Transfer::Violation(usize::MAX));
                        note(t, json!({"b": b, "g": g, "y": y, "x": x}));
                    }
                }
            }
        }
        "l26" => {
            for (c, h, h2) in [(vec![5u64], vec![1u64], vec![4u64]), (vec![5], vec![2], vec![2]), (vec![7], vec![2], vec![3]), (vec![4, 3], vec![1, 1], vec![3, 2])] {
                let counts: Vec<u64> = c.iter().zip(&h).map(|(&ci, &hi)| CellCode::new(ci, hi).count()).collect();
                let s_cells: Vec<Vec<Vec<u64>>> = c.iter().zip(&h).map(|(&ci, &hi)| subsets_upto(ci, hi)).collect();
                let phi_cells: Vec<Vec<Vec<u64>>> = counts.iter().zip(&h2).map(|(&n, &k)| subsets_upto(n, k)).collect();
                let phis = product(&phi_cells);
                for s in product(&s_cells) {
                    let s = Slalom::new(c.clone(), h.clone(), s).expect("slalom");
                    for cells in &phis {
                        let phi = Slalom::new(counts.clone(), h2.clone(), cells.clone()).expect("slalom");
                        let t = anti_into_local_maps(&c, &h, &h2, &s, &phi).map(|o| o.transfer).unwrap_or(Transfer::Violation(usize::MAX));
                        note(t, json!({"c": c, "h": h, "h2": h2, "s": s.cells, "phi": phi.cells}));
                    }
                }
            }
        }
        "l27" => {
            for (c, h) in [(vec![4u64], vec![2u64]), (vec![5, 3], vec![2, 1]), (vec![6], vec![3]), (vec![3, 3, 3], vec![1, 2, 1])] {
                let cells: Vec<Vec<Vec<u64>>> =
                    c.iter().zip(&h).map(|(&ci, &hi)| subsets_upto(ci, hi).into_iter().filter(|s| !s.is_empty()).collect()).collect();
                let ys = product(&c.iter().map(|&ci| (0..ci).collect::<Vec<u64>>()).collect::<Vec<_>>());
                for s in product(&cells) {
                    for y in &ys {
                        let t = local_into_anti_maps(&c, &h, &s, y).map(|o| o.transfer).unwrap_or(Transfer::Violation(usize::MAX));
                        note(t, json!({"c": c, "h": h, "s": s, "y": y}));
                    }
                }
            }
        }
        "ed" => {
            for (c, h) in [(vec![6u64], vec![2u64]), (vec![7, 5], vec![3, 2]), (vec![4, 4, 4], vec![1, 2, 0]), (vec![9, 8], vec![2, 3])] {
                let hp: Vec<u64> = h.iter().map(|&v| v.max(1)).collect();
                let xs = product(&c.iter().zip(&hp).map(|(&ci, &hi)| (0..ci.div_ceil(hi)).collect::<Vec<u64>>()).collect::<Vec<_>>());
                let ys = product(&c.iter().map(|&ci| (0..ci).collect::<Vec<u64>>()).collect::<Vec<_>>());
                for x in &xs {
                    for y in &ys {
                        let t = ed_maps(&c, &h, x, y).map(|o| o.transfer).unwrap_or(Transfer::Violation(usize::MAX));
                        note(t, json!({"c": c, "h": h, "x": x, "y": y}));
                    }
                }
            }
        }
        _ => {}
    }
    (states, bad)
}

/// Seeds of toy families used by the examples; `horizon <= TOY_MAX_HORIZON`.
pub fn toy_seeds(seed: u64, count: usize) -> Vec<(u64, usize)> {
    let mut r = rng(seed);
    (0..count).map(|_| (r.gen(), r.gen_range(1..=TOY_MAX_HORIZON))).collect()
}
