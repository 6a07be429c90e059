//! Suitable families: the single-tuple recursion, the binary-tree family,
//! clause certificates and small exact parameter sets for forcing tests.

use std::collections::BTreeMap;

use num_bigint::BigUint;
use num_traits::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::connections::{ceil_log2, floor_log2};
use crate::numeric::{subset_count, Certifier, CountMode, Expr, NumericError, Op, Precision, Verdict};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FamilyError {
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error("malformed family: {0}")]
    Malformed(String),
    #[error("no toy family at horizon {0}")]
    NoToy(usize),
}

/// The values of one tuple at one level.
#[derive(Debug, Clone)]
pub struct Level {
    pub d: Expr,
    pub h: Expr,
    pub g: Expr,
    pub b: Expr,
    pub c: Expr,
    pub a: Expr,
    /// `c^{∇h}`.
    pub cnh: Expr,
    /// `b^{∇g}`.
    pub bng: Expr,
    pub log2_b: Expr,
    pub log2_c: Expr,
    pub min_i: Expr,
    pub min_j: Expr,
    /// `Σ_{ℓ<=k} log2 b(ℓ)`, the value of `f` at `min I_k`.
    pub f_base: Expr,
}

impl Level {
    fn min_i_next(&self) -> Expr {
        self.min_i.add(&self.g)
    }
    fn min_j_next(&self) -> Expr {
        self.min_j.add(&self.h)
    }

    fn fields(&self) -> [(&'static str, &Expr); 13] {
        [
            ("d", &self.d),
            ("h", &self.h),
            ("g", &self.g),
            ("b", &self.b),
            ("c", &self.c),
            ("a", &self.a),
            ("cnh", &self.cnh),
            ("bng", &self.bng),
            ("log2_b", &self.log2_b),
            ("log2_c", &self.log2_c),
            ("min_i", &self.min_i),
            ("min_j", &self.min_j),
            ("f_base", &self.f_base),
        ]
    }
}

/// Computes level `k` from `d(k)` and the previous level of the same tuple.
pub fn build_level(k: usize, d: Expr, prev: Option<&Level>, mode: CountMode) -> Level {
    let zero = Expr::nat(0u32);
    let (min_i, min_j) = match prev {
        Some(p) => (p.min_i_next(), p.min_j_next()),
        None => (zero.clone(), zero),
    };
    let h = d.pow(&d.mul(&Expr::nat(k as u64 + 1)));
    let g = min_j.add(&h).pow(&Expr::nat(k as u64 + 2)).sub(&min_i);
    let log2_b = g.add(&d);
    let b = Expr::pow2(&log2_b);
    let f_base = match prev {
        Some(p) => p.f_base.add(&log2_b),
        None => log2_b.clone(),
    };
    let log2_c = g.add(&f_base);
    let c = Expr::pow2(&log2_c);
    let cnh = c.subset_count(&h);
    let bng = b.subset_count(&g);
    let a = match mode {
        CountMode::Exact => cnh.max(&bng).add_n(1),
        CountMode::PowerBound => c.pow(&h).max(&b.pow(&g)).add_n(1),
    };
    Level { d, h, g, b, c, a, cnh, bng, log2_b, log2_c, min_i, min_j, f_base }
}

#[derive(Debug, Clone)]
pub struct BoundingSequences {
    /// `n_k^-` for `k <= depth`; the last entry is the next choice.
    pub minus: Vec<Expr>,
    pub plus: Vec<Expr>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyKind {
    Single,
    Tree,
}

/// A finite family of tuples. Nodes are binary strings of length `depth`
/// (the empty string for a single tuple); level `k` of node `t` belongs to
/// `t↾(k+1)`, so nodes sharing that prefix share the level.
#[derive(Debug, Clone)]
pub struct Family {
    pub kind: FamilyKind,
    pub mode: CountMode,
    pub nodes: BTreeMap<String, Vec<Level>>,
    pub bounds: BoundingSequences,
}

impl Family {
    pub fn depth(&self) -> usize {
        self.bounds.plus.len()
    }

    /// The node labels seen at level `k`, with a representative leaf each.
    pub fn labels_at(&self, k: usize) -> Vec<(String, String)> {
        let mut out: BTreeMap<String, String> = BTreeMap::new();
        for leaf in self.nodes.keys() {
            let label = match self.kind {
                FamilyKind::Single => String::new(),
                FamilyKind::Tree => leaf[..(k + 1).min(leaf.len())].to_string(),
            };
            out.entry(label).or_insert_with(|| leaf.clone());
        }
        out.into_iter().collect()
    }

    pub fn level(&self, leaf: &str, k: usize) -> Option<&Level> {
        self.nodes.get(leaf)?.get(k)
    }
}

/// The single tuple with `2 < n0_minus < d0`, evaluated for `k < depth`.
///
/// `n_{k+1}^- = n_k^- · n_k^+ + 1` and `d(k+1) = n_{k+1}^- + 1`.
pub fn build_single(n0_minus: u64, d0: u64, depth: usize, mode: CountMode) -> Result<Family, FamilyError> {
    if !(2 < n0_minus && n0_minus < d0) {
        return Err(FamilyError::Params("need 2 < n0_minus < d0".into()));
    }
    let mut levels: Vec<Level> = Vec::with_capacity(depth);
    let mut minus = vec![Expr::nat(n0_minus)];
    let mut plus = Vec::with_capacity(depth);
    let mut d = Expr::nat(d0);
    for k in 0..depth {
        let lv = build_level(k, d, levels.last(), mode);
        let next = minus[k].mul(&lv.a).add_n(1);
        d = next.add_n(1);
        plus.push(lv.a.clone());
        minus.push(next);
        levels.push(lv);
    }
    let nodes = BTreeMap::from([(String::new(), levels)]);
    Ok(Family { kind: FamilyKind::Single, mode, nodes, bounds: BoundingSequences { minus, plus } })
}

pub const TREE_MAX_DEPTH: usize = 4;

/// The binary-tree family up to `depth`.
///
/// At stage `n` the nodes of `2^{n+1}` receive `d` in lexicographic order:
/// `d_{0̄}(0) = d0`, `d_{0̄}(n) = d_{0̄}(n-1) · a_{1̄}(n-1) + 3` and
/// `d_{t+}(n) = (n+1) · a_t(n)`. Then `n_k^- = d_{0̄}(k) - 1`, `n_k^+ = a_{1̄}(k)`.
pub fn build_tree(d0: u64, depth: usize, mode: CountMode) -> Result<Family, FamilyError> {
    if d0 <= 3 {
        return Err(FamilyError::Params("need d0 > 3 so that n_0^- > 2".into()));
    }
    if depth > TREE_MAX_DEPTH {
        return Err(FamilyError::Params(format!("tree depth is capped at {TREE_MAX_DEPTH}")));
    }
    // Levels by node label (prefixes of every length).
    let mut by_label: BTreeMap<String, Vec<Level>> = BTreeMap::from([(String::new(), Vec::new())]);
    let mut minus = vec![Expr::nat(d0 - 1)];
    let mut plus = Vec::with_capacity(depth);
    for n in 0..depth {
        let labels: Vec<String> = (0..1usize << (n + 1)).map(|i| format!("{:0w$b}", i, w = n + 1)).collect();
        let mut prev_a: Option<Expr> = None;
        for t in &labels {
            let d = match &prev_a {
                None => minus[n].add_n(1),
                Some(a) => a.mul(&Expr::nat(n as u64 + 1)),
            };
            let mut levels = by_label[&t[..n]].clone();
            let lv = build_level(n, d, levels.last(), mode);
            prev_a = Some(lv.a.clone());
            levels.push(lv);
            by_label.insert(t.clone(), levels);
        }
        let ones = "1".repeat(n + 1);
        let zeros = "0".repeat(n + 1);
        let a_top = by_label[&ones][n].a.clone();
        let d_bottom = &by_label[&zeros][n].d;
        plus.push(a_top.clone());
        // d_{0̄}(n+1) - 1 = d_{0̄}(n) · a_{1̄}(n) + 2
        minus.push(d_bottom.mul(&a_top).add_n(2));
    }
    let nodes = by_label.into_iter().filter(|(t, _)| t.len() == depth).collect();
    Ok(Family { kind: FamilyKind::Tree, mode, nodes, bounds: BoundingSequences { minus, plus } })
}

// ---------------------------------------------------------------------------
// Certificates

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CertEntry {
    pub clause: String,
    pub k: usize,
    pub node: String,
    pub status: Verdict,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Certificate {
    pub entries: Vec<CertEntry>,
    pub pass: usize,
    pub fail: usize,
    pub unknown: usize,
}

impl Certificate {
    pub fn all_pass(&self) -> bool {
        self.fail == 0 && self.unknown == 0
    }

    pub fn failures(&self) -> impl Iterator<Item = &CertEntry> {
        self.entries.iter().filter(|e| e.status != Verdict::Pass)
    }
}

struct Recorder<'a> {
    cert: &'a mut Certifier,
    entries: Vec<CertEntry>,
}

impl Recorder<'_> {
    fn push(&mut self, clause: &str, k: usize, node: &str, status: Verdict, detail: String) {
        self.entries.push(CertEntry { clause: clause.into(), k, node: node.into(), status, detail });
    }

    fn le(&mut self, clause: &str, k: usize, node: &str, a: &Expr, b: &Expr, detail: &str) {
        let v = self.cert.le(a, b);
        self.push(clause, k, node, v, detail.into());
    }

    fn lt(&mut self, clause: &str, k: usize, node: &str, a: &Expr, b: &Expr, detail: &str) {
        let v = self.cert.lt(a, b);
        self.push(clause, k, node, v, detail.into());
    }
}

/// Certifies (S1)-(S7) and the bounding conditions on levels `ks`.
///
/// (S2) is checked through `h < c` and `h + 1 >= d^{(k+1)d}`, (S5) pointwise
/// on `I_k`, (S6) through `f(j^{k+2}) <= log2 c(k)` on `J_k` and (S7) through
/// `(k+1) · a_t(k) <= d_{t'}(k)` for `t ◁ t'` in `2^{k+1}`.
pub fn verify_suitable(fam: &Family, ks: std::ops::Range<usize>, prec: Precision) -> Certificate {
    let mut certifier = Certifier::new(prec);
    let mut r = Recorder { cert: &mut certifier, entries: Vec::new() };
    let bounds = &fam.bounds;
    for k in ks {
        if k >= fam.depth() {
            break;
        }
        let (lo, hi) = (&bounds.minus[k], &bounds.plus[k]);
        let labels = fam.labels_at(k);
        for (label, leaf) in &labels {
            let lv = fam.level(leaf, k).expect("leaf covers the depth");
            let node = label.as_str();
            let b_over_g = lv.b.div(&lv.g);
            let s1 = [
                ("a", &lv.a),
                ("d", &lv.d),
                ("b", &lv.b),
                ("g", &lv.g),
                ("b^{∇g}", &lv.bng),
                ("b/g", &b_over_g),
                ("h", &lv.h),
                ("c^{∇h}", &lv.cnh),
            ];
            for (name, x) in s1 {
                let v = r.cert.le(lo, x).min_with(r.cert.le(x, hi));
                r.push("S1", k, node, v, format!("n_k^- <= {name} <= n_k^+"));
            }

            r.lt("S2", k, node, &lv.h, &lv.c, "h < c");
            let stair = lv.d.pow(&lv.d.mul(&Expr::nat(k as u64 + 1)));
            r.le("S2", k, node, &stair, &lv.h.add_n(1), "h + 1 >= d^{(k+1)d}");

            r.lt("S3", k, node, &lv.d.mul(&lv.g), &lv.b, "d < b/g, as d·g < b");

            r.le("S4", k, node, &lv.bng, &lv.a, "b^{∇g} <= a");

            s5(&mut r, fam, leaf, k, node, lv);
            s6(&mut r, k, node, lv);
        }
        // (S7) on every ◁-pair of distinct nodes at this level.
        for (i, (t, leaf_t)) in labels.iter().enumerate() {
            for (t2, leaf_t2) in &labels[i + 1..] {
                let a_t = &fam.level(leaf_t, k).expect("level").a;
                let d_t2 = &fam.level(leaf_t2, k).expect("level").d;
                let lhs = a_t.mul(&Expr::nat(k as u64 + 1));
                r.le("S7", k, &format!("{t}<{t2}"), &lhs, d_t2, "a_t(k)/d_t'(k) <= 1/(k+1)");
            }
        }
        if let Some(next) = bounds.minus.get(k + 1) {
            r.lt("bounding-i", k, "", &lo.mul(hi), next, "n_k^- · n_k^+ < n_{k+1}^-");
        }
        r.le("bounding-ii", k, "", &lo.pow(&Expr::nat(k as u64)), hi, "n_k^+ >= (n_k^-)^k");
    }
    let entries = r.entries;
    let count = |v| entries.iter().filter(|e| e.status == v).count();
    let (pass, fail, unknown) = (count(Verdict::Pass), count(Verdict::Fail), count(Verdict::Unknown));
    Certificate { entries, pass, fail, unknown }
}

trait VerdictExt {
    fn min_with(self, o: Verdict) -> Verdict;
}

impl VerdictExt for Verdict {
    fn min_with(self, o: Verdict) -> Verdict {
        match (self, o) {
            (Verdict::Fail, _) | (_, Verdict::Fail) => Verdict::Fail,
            (Verdict::Pass, Verdict::Pass) => Verdict::Pass,
            _ => Verdict::Unknown,
        }
    }
}

fn s5(r: &mut Recorder, fam: &Family, leaf: &str, k: usize, node: &str, lv: &Level) {
    // f_{b,g} on I_k is Σ_{ℓ<=k} ⌈log2 b(ℓ)⌉; with b(ℓ) = 2^{log2_b(ℓ)} the
    // ceiling is exact and the sum is f_base, the least value of f on I_k.
    let levels = &fam.nodes[leaf];
    let mut ceil_ok = Verdict::Pass;
    let mut detail = String::from("b(ℓ) is a power of two");
    for l in levels.iter().take(k + 1) {
        if !matches!(l.b.op(), Op::Pow(base, e) if matches!(base.op(), Op::Const(x) if *x == BigUint::from(2u32)) && same(e, &l.log2_b))
        {
            ceil_ok = Verdict::Fail;
            detail = "b(ℓ) is not built as 2^{log2 b(ℓ)}".into();
        }
        if let (Some(b), Some(lb)) = (r.cert.eval.exact_nat(&l.b), r.cert.eval.exact_nat(&l.log2_b)) {
            if ceil_log2(&b) != floor_log2(&b) || BigUint::from(ceil_log2(&b)) != lb {
                ceil_ok = Verdict::Fail;
                detail = "⌈log2 b⌉ and ⌊log2 b⌋ disagree".into();
            } else if !detail.contains("exact") {
                detail.push_str("; ⌈log2 b⌉ = ⌊log2 b⌋ checked exactly");
            }
        }
    }
    r.push("S5", k, node, ceil_ok, detail);
    r.le("S5", k, node, &lv.f_base, &lv.f_base, "f_{b,g}(j) <= f(j) on I_k, least at j = min I_k");
    if k > 0 {
        let prev = &levels[k - 1];
        let f_max_prev = prev.f_base.add(&prev.g).sub_n(1);
        r.lt("S5", k, node, &f_max_prev, &lv.f_base, "f(max I_{k-1}) < f(min I_k)");
    }
}

fn same(a: &Expr, b: &Expr) -> bool {
    a == b
}

fn s6(r: &mut Recorder, k: usize, node: &str, lv: &Level) {
    let m = Expr::nat(k as u64 + 2);
    // min I_k = (min J_k)^{k+1}, exact once the previous level's subtraction is.
    let low = if k == 0 { lv.min_i.clone() } else { lv.min_j.pow(&Expr::nat(k as u64 + 1)) };
    r.le("S6", k, node, &low, &lv.min_j.pow(&m), "min I_k <= (min J_k)^{k+2}");
    // max J_k = min J_{k+1} - 1 and max I_k = min J_{k+1}^{k+2} - 1 once the
    // subtraction defining g(k) is exact, so (X-1)^{k+2} <= X^{k+2} - 1.
    let x = lv.min_j_next();
    let top = x.pow(&m);
    let direct = (x.sub_n(1).pow(&m), lv.min_i_next().sub_n(1));
    let v = match (r.cert.eval.exact_nat(&direct.0), r.cert.eval.exact_nat(&direct.1)) {
        (Some(p), Some(q)) => {
            if p <= q {
                Verdict::Pass
            } else {
                Verdict::Fail
            }
        }
        _ => r.cert.le(&lv.min_i, &top).min_with(r.cert.le(&Expr::nat(1u32), &x)),
    };
    r.push("S6", k, node, v, "(max J_k)^{k+2} <= max I_k".into());
    let f_top = lv.f_base.add(&lv.g).sub_n(1);
    r.le("S6", k, node, &f_top, &lv.log2_c, "f(j^{k+2}) <= log2 c(k) on J_k");
}

// ---------------------------------------------------------------------------
// JSON with a shared expression table

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FamilyJson {
    pub kind: FamilyKind,
    pub mode: CountMode,
    /// Expression nodes: a decimal string or `{"op", "args": [i, j]}` over earlier indices.
    pub exprs: Vec<Value>,
    pub nodes: BTreeMap<String, Vec<BTreeMap<String, usize>>>,
    pub n_minus: Vec<usize>,
    pub n_plus: Vec<usize>,
}

struct Table {
    exprs: Vec<Value>,
    index: std::collections::HashMap<usize, usize>,
}

impl Table {
    fn add(&mut self, e: &Expr) -> usize {
        let key = e.op() as *const Op as usize;
        if let Some(&i) = self.index.get(&key) {
            return i;
        }
        let v = match e.op() {
            Op::Const(n) => Value::String(n.to_string()),
            op => {
                let (name, x, y) = op_parts(op);
                let (i, j) = (self.add(x), self.add(y));
                json!({"op": name, "args": [i, j]})
            }
        };
        self.exprs.push(v);
        let i = self.exprs.len() - 1;
        self.index.insert(key, i);
        i
    }
}

fn op_parts(op: &Op) -> (&'static str, &Expr, &Expr) {
    match op {
        Op::Add(a, b) => ("add", a, b),
        Op::Sub(a, b) => ("sub", a, b),
        Op::Mul(a, b) => ("mul", a, b),
        Op::Div(a, b) => ("div", a, b),
        Op::Pow(a, b) => ("pow", a, b),
        Op::Max(a, b) => ("max", a, b),
        Op::SubsetCount(a, b) => ("subset_count", a, b),
        Op::SubsetBound(a, b) => ("subset_bound", a, b),
        Op::Const(_) => unreachable!("constants have no parts"),
    }
}

fn op_from(name: &str, x: &Expr, y: &Expr) -> Option<Expr> {
    Some(match name {
        "add" => x.add(y),
        "sub" => x.sub(y),
        "mul" => x.mul(y),
        "div" => x.div(y),
        "pow" => x.pow(y),
        "max" => x.max(y),
        "subset_count" => x.subset_count(y),
        "subset_bound" => x.subset_bound(y),
        _ => return None,
    })
}

impl Family {
    pub fn to_json(&self) -> FamilyJson {
        let mut t = Table { exprs: Vec::new(), index: Default::default() };
        let nodes = self
            .nodes
            .iter()
            .map(|(label, levels)| {
                let ls = levels
                    .iter()
                    .map(|lv| lv.fields().into_iter().map(|(name, e)| (name.to_string(), t.add(e))).collect())
                    .collect();
                (label.clone(), ls)
            })
            .collect();
        let n_minus = self.bounds.minus.iter().map(|e| t.add(e)).collect();
        let n_plus = self.bounds.plus.iter().map(|e| t.add(e)).collect();
        FamilyJson { kind: self.kind, mode: self.mode, exprs: t.exprs, nodes, n_minus, n_plus }
    }

    pub fn from_json(j: &FamilyJson) -> Result<Family, FamilyError> {
        let bad = |m: String| FamilyError::Malformed(m);
        let mut exprs: Vec<Expr> = Vec::with_capacity(j.exprs.len());
        for (i, v) in j.exprs.iter().enumerate() {
            let e = match v {
                Value::Object(o) => {
                    let name = o.get("op").and_then(Value::as_str).ok_or_else(|| bad(format!("expr {i}: missing op")))?;
                    let args: Vec<usize> = o
                        .get("args")
                        .and_then(Value::as_array)
                        .map(|a| a.iter().filter_map(|x| x.as_u64().map(|x| x as usize)).collect())
                        .unwrap_or_default();
                    if args.len() != 2 || args.iter().any(|&a| a >= i) {
                        return Err(bad(format!("expr {i}: args must be two earlier indices")));
                    }
                    op_from(name, &exprs[args[0]], &exprs[args[1]]).ok_or_else(|| bad(format!("expr {i}: op {name}")))?
                }
                other => Expr::from_json(other)?,
            };
            exprs.push(e);
        }
        let get = |i: usize| exprs.get(i).cloned().ok_or_else(|| bad(format!("expression index {i} out of range")));
        let mut nodes = BTreeMap::new();
        for (label, levels) in &j.nodes {
            if j.kind == FamilyKind::Tree && !label.chars().all(|ch| ch == '0' || ch == '1') {
                return Err(bad(format!("node label {label:?}")));
            }
            let mut out = Vec::with_capacity(levels.len());
            for m in levels {
                let f = |name: &str| -> Result<Expr, FamilyError> {
                    get(*m.get(name).ok_or_else(|| bad(format!("level without {name}")))?)
                };
                out.push(Level {
                    d: f("d")?,
                    h: f("h")?,
                    g: f("g")?,
                    b: f("b")?,
                    c: f("c")?,
                    a: f("a")?,
                    cnh: f("cnh")?,
                    bng: f("bng")?,
                    log2_b: f("log2_b")?,
                    log2_c: f("log2_c")?,
                    min_i: f("min_i")?,
                    min_j: f("min_j")?,
                    f_base: f("f_base")?,
                });
            }
            nodes.insert(label.clone(), out);
        }
        let minus = j.n_minus.iter().map(|&i| get(i)).collect::<Result<Vec<_>, _>>()?;
        let plus = j.n_plus.iter().map(|&i| get(i)).collect::<Result<Vec<_>, _>>()?;
        let depth = plus.len();
        if nodes.is_empty() || minus.len() < depth || nodes.values().any(|l: &Vec<Level>| l.len() < depth) {
            return Err(bad("sequences shorter than the depth".into()));
        }
        if j.kind == FamilyKind::Tree && nodes.keys().any(|t| t.len() != depth) {
            return Err(bad("tree leaves must have length equal to the depth".into()));
        }
        Ok(Family { kind: j.kind, mode: j.mode, nodes, bounds: BoundingSequences { minus, plus } })
    }

    /// Replaces `d(0)` of every node by `value`, leaving everything else as built.
    pub fn with_d0(&self, value: u64) -> Family {
        let mut f = self.clone();
        for levels in f.nodes.values_mut() {
            if let Some(l) = levels.first_mut() {
                l.d = Expr::nat(value);
            }
        }
        f
    }
}

/// Exact values at level 0 of a family, when they fit.
pub fn level_values(fam: &Family, leaf: &str, k: usize, prec: Precision) -> BTreeMap<String, Value> {
    let mut ev = crate::numeric::Evaluator::new(prec);
    let mut out = BTreeMap::new();
    if let Some(lv) = fam.level(leaf, k) {
        for (name, e) in lv.fields() {
            let v = match ev.exact_nat(e) {
                Some(n) if n.bits() <= 256 => json!(n.to_string()),
                Some(n) if n.count_ones() == 1 => json!(format!("2^{}", n.bits() - 1)),
                _ => match ev.tower(e) {
                    Ok(t) => json!({"tower": t.to_string()}),
                    Err(err) => json!({"error": err.to_string()}),
                },
            };
            out.insert(name.to_string(), v);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Toy families

/// Parameters for the anti-localisation corollary on a toy family.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AntiParams {
    pub b: Vec<u64>,
    pub g: Vec<u64>,
    /// `b^{∇g}`.
    pub a: Vec<u64>,
    /// `⌈b/g⌉ - 1`.
    pub e: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub clause: String,
    pub status: String,
    pub reason: String,
}

/// Small exact parameters for branch-exhaustive forcing tests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToyFamily {
    pub seed: u64,
    pub c: Vec<usize>,
    pub h: Vec<usize>,
    pub d: Vec<u64>,
    /// Localisation profile and widths.
    pub a: Vec<u64>,
    pub e: Vec<u64>,
    /// 1 when `2 P c^{∇h}(k) <= e(k)`, 2 when `2 P a(k) <= d(k)`, with `P = ∏_{j<k} c^{∇h}(j)`.
    pub subcase: Vec<u8>,
    pub anti: Option<AntiParams>,
    pub manifest: Vec<ManifestEntry>,
}

const TOY_MENU: [(usize, usize); 5] = [(2, 1), (3, 1), (4, 1), (4, 2), (5, 2)];
pub const TOY_MAX_HORIZON: usize = 6;
const TOY_BRANCH_CAP: u64 = 10_000;
const CELL_CODE_CAP: u64 = 120;

fn nabla(c: u64, h: u64) -> u64 {
    subset_count(&BigUint::from(c), &BigUint::from(h), CountMode::Exact).to_u64().expect("small count")
}

impl ToyFamily {
    pub fn horizon(&self) -> usize {
        self.c.len()
    }

    pub fn cnh(&self) -> Vec<u64> {
        self.c.iter().zip(&self.h).map(|(&c, &h)| nabla(c as u64, h as u64)).collect()
    }

    /// The windowed clauses: `(name, level of the first failure)`.
    pub fn windowed_failures(&self) -> Vec<(String, usize)> {
        let cnh = self.cnh();
        let mut out = Vec::new();
        let mut check = |name: &str, a: &[u64], e: &[u64]| {
            let (mut pa, mut pc) = (1u128, 1u128);
            for k in 0..self.horizon() {
                if pa > self.d[k] as u128 || pc > e[k] as u128 {
                    out.push((format!("{name}1"), k));
                    break;
                }
                pa *= a[k] as u128;
                pc *= cnh[k] as u128;
            }
            if let Some(k) = (0..self.horizon()).find(|&k| 2 * cnh[k] > e[k] && 2 * a[k] > self.d[k]) {
                out.push((format!("{name}2"), k));
            }
        };
        check("L", &self.a, &self.e);
        if let Some(al) = &self.anti {
            check("AL", &al.a, &self.e);
        }
        out
    }
}

/// `|∏_{i<n} A_i| <= d(n)` at every `n`; returns the first failing level.
pub fn early_reading_precondition(d: &[u64], sizes: &[u64]) -> Option<usize> {
    let mut prod = 1u128;
    for (n, &dn) in d.iter().enumerate() {
        if prod > dn as u128 {
            return Some(n);
        }
        prod *= sizes.get(n).copied().unwrap_or(1) as u128;
    }
    None
}

/// A seeded toy parameter set on `horizon` levels.
///
/// Each level draws `(c, h)` from a small menu and a localisation profile
/// `a ∈ {2, 3}`; levels pick one of the two thinness subcases of the
/// localisation argument, with `e` and `d` the least values making it hold.
/// Anti-localisation parameters `b = g(e+1)`, `g ∈ {1, 2}` are attached when
/// every `b(k)` stays within the cell-code range.
pub fn toy_family(seed: u64, horizon: usize) -> Result<ToyFamily, FamilyError> {
    if horizon == 0 || horizon > TOY_MAX_HORIZON {
        return Err(FamilyError::Params(format!("horizon must lie in 1..={TOY_MAX_HORIZON}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..64 {
        let (mut c, mut h, mut cnh) = (Vec::new(), Vec::new(), Vec::new());
        for _ in 0..horizon {
            let (ci, hi) = TOY_MENU[rng.gen_range(0..TOY_MENU.len())];
            c.push(ci);
            h.push(hi);
            cnh.push(nabla(ci as u64, hi as u64));
        }
        if cnh.iter().product::<u64>() > TOY_BRANCH_CAP {
            continue;
        }
        let a: Vec<u64> = (0..horizon).map(|_| rng.gen_range(2..=3)).collect();
        let g: Vec<u64> = (0..horizon).map(|_| rng.gen_range(1..=2)).collect();
        let mut e = Vec::with_capacity(horizon);
        let mut subcase = Vec::with_capacity(horizon);
        let mut p = 1u64;
        for k in 0..horizon {
            let wide = 2 * p * cnh[k];
            let fits = g[k] * (wide + 1) <= CELL_CODE_CAP;
            if rng.gen_bool(0.5) && (fits || g[k] * (p + 1) > CELL_CODE_CAP) {
                e.push(wide);
                subcase.push(1);
            } else {
                e.push(p);
                subcase.push(2);
            }
            p *= cnh[k];
        }
        let anti = if (0..horizon).all(|k| g[k] * (e[k] + 1) <= CELL_CODE_CAP) {
            let b: Vec<u64> = (0..horizon).map(|k| g[k] * (e[k] + 1)).collect();
            let al: Vec<u64> = (0..horizon).map(|k| nabla(b[k], g[k])).collect();
            Some(AntiParams { b, g: g.clone(), a: al, e: e.clone() })
        } else {
            None
        };
        let mut d = Vec::with_capacity(horizon);
        let (mut p, mut pa) = (1u64, 1u64);
        for k in 0..horizon {
            let top = a[k].max(anti.as_ref().map_or(0, |x| x.a[k]));
            let mut dk = 2u64.max(p + 1).max(pa);
            if subcase[k] == 2 {
                dk = dk.max(2 * p * top);
            }
            d.push(dk);
            p *= cnh[k];
            pa = pa.saturating_mul(top);
        }
        let manifest = toy_manifest();
        let toy = ToyFamily { seed, c, h, d, a, e, subcase, anti, manifest };
        if toy.windowed_failures().is_empty() {
            return Ok(toy);
        }
    }
    Err(FamilyError::NoToy(horizon))
}

fn toy_manifest() -> Vec<ManifestEntry> {
    let m = |clause: &str, status: &str, reason: &str| ManifestEntry {
        clause: clause.into(),
        status: status.into(),
        reason: reason.into(),
    };
    vec![
        m("S1", "waived", "no bounding sequences are attached to a toy window"),
        m("S2", "waived", "staircase truncated: h(k) is far below d(k)^{(k+1)d(k)}"),
        m("S3", "waived", "b/g = e + 1 need not exceed d"),
        m("S4", "holds", "the anti-localisation profile is a = b^{∇g} exactly"),
        m("S5", "waived", "no f is attached to a toy window"),
        m("S6", "waived", "no f is attached to a toy window"),
        m("S7", "vacuous", "a toy family has a single index"),
        m("L1", "holds", "∏_{j<n} a(j) <= d(n) and ∏_{j<n} c^{∇h}(j) <= e(n) on the window"),
        m("L2", "holds", "2 c^{∇h}(k) <= e(k) or 2 a(k) <= d(k) at every k of the window"),
        m("AL1", "holds", "as L1 with b^{∇g} in place of a, when anti-localisation parameters are attached"),
        m("AL2", "holds", "as L2 with b^{∇g} in place of a, when anti-localisation parameters are attached"),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::One;

    fn exact(_: &Family, e: &Expr) -> Option<BigUint> {
        crate::numeric::Evaluator::new(Precision::default()).exact_nat(e)
    }

    #[test]
    fn level_zero_values() {
        let fam = build_single(3, 4, 1, CountMode::PowerBound).unwrap();
        let lv = fam.level("", 0).unwrap();
        assert_eq!(exact(&fam, &lv.h), Some(BigUint::from(256u32)));
        assert_eq!(exact(&fam, &lv.g), Some(BigUint::from(65536u32)));
        assert_eq!(exact(&fam, &lv.log2_b), Some(BigUint::from(65540u32)));
        assert_eq!(exact(&fam, &lv.log2_c), Some(BigUint::from(131076u32)));
        assert_eq!(exact(&fam, &lv.b), Some(BigUint::one() << 65540usize));
    }

    #[test]
    fn single_level_zero_certifies() {
        let fam = build_single(3, 4, 1, CountMode::PowerBound).unwrap();
        let cert = verify_suitable(&fam, 0..1, Precision::default());
        let bad: Vec<_> = cert.failures().collect();
        assert!(bad.is_empty(), "{bad:#?}");
    }

    #[test]
    fn corrupted_d0_fails_s1() {
        let fam = build_single(3, 4, 1, CountMode::PowerBound).unwrap().with_d0(2);
        let cert = verify_suitable(&fam, 0..1, Precision::default());
        assert!(cert.entries.iter().any(|e| e.clause == "S1" && e.k == 0 && e.status == Verdict::Fail));
    }

    #[test]
    fn json_round_trip() {
        let fam = build_tree(4, 2, CountMode::PowerBound).unwrap();
        let j = fam.to_json();
        let text = serde_json::to_string(&j).unwrap();
        let back = Family::from_json(&serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back.nodes.len(), 4);
        for (t, levels) in &fam.nodes {
            for (l1, l2) in levels.iter().zip(&back.nodes[t]) {
                assert!(l1.a == l2.a && l1.d == l2.d);
            }
        }
    }

    #[test]
    fn tree_depth_one() {
        let fam = build_tree(4, 1, CountMode::PowerBound).unwrap();
        assert_eq!(fam.nodes.len(), 2);
        let a0 = &fam.level("0", 0).unwrap().a;
        let d1 = &fam.level("1", 0).unwrap().d;
        assert!(*d1 == a0.mul(&Expr::nat(1u32)));
    }

    #[test]
    fn tree_prefix_coherence() {
        let fam = build_tree(4, 2, CountMode::PowerBound).unwrap();
        assert!(fam.level("00", 0).unwrap().a == fam.level("01", 0).unwrap().a);
        assert!(fam.level("10", 0).unwrap().d == fam.level("11", 0).unwrap().d);
    }

    #[test]
    fn toy_is_deterministic_and_windowed() {
        for seed in 0..40 {
            for hz in 1..=TOY_MAX_HORIZON {
                let t = toy_family(seed, hz).unwrap();
                assert_eq!(t, toy_family(seed, hz).unwrap());
                assert!(t.windowed_failures().is_empty());
                assert!(t.manifest.iter().any(|m| m.clause == "S2" && m.status == "waived"));
                assert_eq!(early_reading_precondition(&t.d, &t.a), None);
            }
        }
    }

    #[test]
    fn early_reading_precondition_example() {
        assert_eq!(early_reading_precondition(&[2, 4], &[2, 2]), None);
        assert_eq!(early_reading_precondition(&[2, 1], &[2, 2]), Some(1));
    }
}
