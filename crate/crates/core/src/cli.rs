//! Batch front end: one subcommand per operation, JSON in and out.
//!
//! Exit codes: 0 success, 1 property violation (the witness is in the
//! output), 2 usage or input error.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use num_bigint::BigUint;
use num_rational::BigRational;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::conditions::{
    and_restrict, catch_real, early_read, fuse_from, localize, order_check, possibilities, reading_failure, thin,
    ConditionJson, NameOracle, OracleJson, OrderMode, ReadingMode, TruncCondition,
};
use crate::connections::{
    build_partition, ed_maps, escape_measure, fbg_profile, gch_profile, yorioka_into_anti_dual_maps, anti_dual_into_yorioka_maps, anti_into_local_maps, local_into_anti_maps,
    parse_bits, SigmaCover, Slalom, Transfer,
};
use crate::creatures::{bigness_refine, lognorm_at_least, norm, range_refine, Creature};
use crate::family::{build_single, build_tree, level_values, toy_family, verify_suitable, Family, FamilyJson};
use crate::numeric::{parse_rat, rat_string, CountMode, Precision, Verdict};
use crate::products::{
    bounding_extract, catch_holds, modest_refine, phi_invariance_failure, product_catch, product_early_read,
    product_fuse, restricted_localize, restricted_membership_failure, schedule_plan, ProductCondition, ProductJson,
    ProductName, ProductOracleJson, Staircase,
};
use crate::relational::{brute_characteristics, check_tukey, dual, FinRelSystem, TukeyCheck, TukeyPair};
use crate::suites::{run_suite, SUITES};

#[derive(Parser, Debug)]
#[command(name = "creature", version, about = "Creature-forcing combinatorics on finite windows")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON input file; standard input when absent.
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Reading mode for check-reading, count mode for family commands.
    #[arg(long, global = true)]
    pub mode: Option<String>,
    /// Mantissa bits for tower arithmetic.
    #[arg(long, global = true, default_value_t = 160)]
    pub precision: u32,
    /// Instance count for suites, tower height cap for family commands.
    #[arg(long, global = true)]
    pub cap: Option<u64>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Norm of a creature.
    Norm,
    /// Whether (1/d) log_d(norm + 1) reaches a rational threshold.
    Lognorm,
    /// Monochromatic refinement under a colouring.
    Bigness,
    /// Refinement onto few values of a function.
    RangeRefine,
    /// Possibilities of a condition up to a level.
    Poss,
    /// Restrict a condition to a possibility.
    And,
    /// Order check, optionally at split index n.
    Order,
    /// Fusion of a chain.
    Fuse,
    /// Thin a condition to few possibilities below its splits.
    Thin,
    /// Catch a ground real at the first level of norm at least 1.
    Catch,
    /// Check timely or early reading of a name.
    CheckReading,
    /// Strengthen a condition to read a name early.
    EarlyRead,
    /// Localise an early-read name by a ground slalom.
    Localize,
    /// Refine a product condition to a modest one.
    Modest,
    /// Fusion of a product chain.
    ProductFuse,
    /// Split schedule of the product fusion.
    Schedule,
    /// Early reading over a product condition.
    ProductEarlyRead,
    /// Ground bound for a name over a product condition.
    Bound,
    /// Catch a coordinate against a name over B.
    ProductCatch,
    /// Localise by a slalom name over the restricted coordinates.
    RestrictedLocalize,
    /// Checks a Tukey connection; the optional word `check` is accepted.
    Tukey {
        action: Option<String>,
    },
    /// Dual of a finite relational system.
    Dual,
    /// b and d of a finite relational system by exhaustive search.
    Brute,
    /// Tukey connection maps on one instance.
    Maps {
        #[arg(value_enum)]
        map: TransferMap,
    },
    /// Escape measure of a slalom on a window.
    Measure,
    /// Interval partition from block lengths.
    Partition,
    /// The height function g_{c,h} on the interval partition of h.
    Gch,
    /// The height function f_{b,g} on the interval partition of g.
    Fbg,
    /// Build, verify or sample parameter families.
    Family {
        #[arg(value_enum)]
        action: FamilyAction,
    },
    /// Run a seeded property suite.
    Suite {
        name: String,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum TransferMap {
    #[value(name = "l24")]
    YoriokaIntoAntiDual,
    #[value(name = "l25")]
    AntiDualIntoYorioka,
    #[value(name = "l26")]
    AntiIntoLocal,
    #[value(name = "l27")]
    LocalIntoAnti,
    Ed,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum FamilyAction {
    Build,
    Tree,
    Verify,
    Toy,
}

/// What a command produced: the report and whether it witnesses a violation.
pub struct Outcome {
    pub report: Value,
    pub violation: bool,
}

fn ok(report: Value) -> Result<Outcome, String> {
    Ok(Outcome { report, violation: false })
}

fn checked(report: Value, violation: bool) -> Result<Outcome, String> {
    Ok(Outcome { report, violation })
}

fn parse<T: DeserializeOwned>(v: &Value) -> Result<T, String> {
    serde_json::from_value(v.clone()).map_err(|e| format!("malformed input: {e}"))
}

fn field<T: DeserializeOwned>(v: &Value, key: &str) -> Result<T, String> {
    parse(v.get(key).ok_or_else(|| format!("input needs \"{key}\""))?)
}

fn opt_field<T: DeserializeOwned>(v: &Value, key: &str) -> Result<Option<T>, String> {
    v.get(key).filter(|x| !x.is_null()).map(parse).transpose()
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn to_value<T: serde::Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("serialisable")
}

fn condition(v: &Value, key: &str) -> Result<TruncCondition, String> {
    TruncCondition::from_json(&field::<ConditionJson>(v, key)?).map_err(err)
}

fn oracle(v: &Value) -> Result<NameOracle, String> {
    NameOracle::from_json(&field::<OracleJson>(v, "oracle")?).map_err(err)
}

fn product(v: &Value, key: &str) -> Result<ProductCondition, String> {
    ProductCondition::from_json(&field::<ProductJson>(v, key)?).map_err(err)
}

fn product_oracle(v: &Value) -> Result<ProductName, String> {
    ProductName::from_json(&field::<ProductOracleJson>(v, "oracle")?).map_err(err)
}

fn bigs(v: &Value, key: &str) -> Result<Vec<BigUint>, String> {
    let raw: Vec<Value> = field(v, key)?;
    raw.iter()
        .map(|x| match x {
            Value::String(s) => s.parse::<BigUint>().map_err(|_| format!("{key}: not a natural: {s}")),
            Value::Number(n) => n.as_u64().map(BigUint::from).ok_or_else(|| format!("{key}: not a natural")),
            _ => Err(format!("{key}: entries must be naturals")),
        })
        .collect()
}

fn transfer_report(out: Value, t: Transfer) -> Result<Outcome, String> {
    checked(out, t != Transfer::Ok)
}

fn precision(cli: &Cli) -> Precision {
    let mut p = Precision { mantissa_bits: cli.precision, ..Precision::default() };
    if let Some(cap) = cli.cap {
        p.height_cap = cap as u32;
    }
    p
}

fn count_mode(cli: &Cli) -> Result<CountMode, String> {
    match cli.mode.as_deref() {
        None | Some("power-bound") => Ok(CountMode::PowerBound),
        Some("exact") => Ok(CountMode::Exact),
        Some(m) => Err(format!("unknown count mode {m:?}; use exact or power-bound")),
    }
}

fn needs_input(cmd: &Command) -> bool {
    !matches!(cmd, Command::Suite { .. } | Command::Family { action: FamilyAction::Toy })
}

/// Runs one command on parsed input.
pub fn execute(cli: &Cli, input: &Value) -> Result<Outcome, String> {
    let v = input;
    match &cli.command {
        Command::Norm => {
            let m: Creature = parse(v.get("creature").unwrap_or(v))?;
            ok(json!(norm(&m).map_err(err)?))
        }
        Command::Lognorm => {
            let m: Creature = field(v, "creature")?;
            let d: u64 = field(v, "d")?;
            let t: String = field(v, "t")?;
            let t = parse_rat(&t).ok_or("t must be a rational like 3/2")?;
            let n = norm(&m).map_err(err)?;
            ok(json!({"norm": n, "d": d, "t": rat_string(&t), "at_least": lognorm_at_least(n, d, &t).map_err(err)?}))
        }
        Command::Bigness => {
            let m: Creature = field(v, "creature")?;
            let coloring: Vec<usize> = field(v, "coloring")?;
            let d: u64 = field(v, "d")?;
            let (colour, sub) = bigness_refine(&m, &coloring, d).map_err(err)?;
            let (n, ns) = (norm(&m).map_err(err)?, norm(&sub).map_err(err)?);
            let holds = (n as u64 + 1) <= d * (ns as u64 + 1);
            checked(json!({"colour": colour, "refined": sub, "norm_before": n, "norm_after": ns, "bound_holds": holds}), !holds)
        }
        Command::RangeRefine => {
            let m: Creature = field(v, "creature")?;
            let f: Vec<usize> = field(v, "f")?;
            let values: usize = field(v, "values")?;
            let k: usize = field(v, "k")?;
            let d: u64 = field(v, "d")?;
            let sub = range_refine(&m, &f, values, k, d).map_err(err)?;
            let image: BTreeSet<usize> = sub.masks().iter().filter_map(|&t| m.index_of(t)).map(|i| f[i]).collect();
            checked(json!({"refined": sub, "image": image}), image.len() > k)
        }
        Command::Poss => {
            let p = condition(v, "condition")?;
            let k: Option<usize> = opt_field(v, "k")?;
            let ps = possibilities(&p, k).map_err(err)?;
            ok(json!({"count": ps.len(), "possibilities": ps}))
        }
        Command::And => {
            let p = condition(v, "condition")?;
            let eta: Vec<u64> = field(v, "eta")?;
            ok(to_value(&and_restrict(&p, &eta).map_err(err)?))
        }
        Command::Order => {
            let q = condition(v, "q")?;
            let p = condition(v, "p")?;
            let mode = match opt_field::<usize>(v, "n")? {
                Some(n) => OrderMode::AtN(n),
                None => OrderMode::Plain,
            };
            ok(json!({"holds": order_check(&q, &p, mode).map_err(err)?}))
        }
        Command::Fuse => {
            let chain: Vec<ConditionJson> = field(v, "chain")?;
            let chain = chain.iter().map(TruncCondition::from_json).collect::<Result<Vec<_>, _>>().map_err(err)?;
            let start: usize = opt_field(v, "start")?.unwrap_or(0);
            ok(to_value(&fuse_from(&chain, start).map_err(err)?))
        }
        Command::Thin => {
            let p = condition(v, "condition")?;
            let gbound: Vec<u128> = field(v, "gbound")?;
            let staircase: bool = opt_field(v, "staircase")?.unwrap_or(false);
            ok(to_value(&thin(&p, &gbound, staircase).map_err(err)?))
        }
        Command::Catch => {
            let p = condition(v, "condition")?;
            let x: Vec<usize> = field(v, "x")?;
            let n0: usize = opt_field(v, "n0")?.unwrap_or(0);
            let (q, k) = catch_real(&p, &x, n0).map_err(err)?;
            ok(json!({"q": q, "k": k}))
        }
        Command::CheckReading => {
            let nu = oracle(v)?;
            let p = match v.get("condition") {
                Some(_) => condition(v, "condition")?,
                None => nu.base.clone(),
            };
            let mode = match cli.mode.as_deref().or(v.get("mode").and_then(Value::as_str)) {
                Some("early") => ReadingMode::Early,
                Some("timely") | None => ReadingMode::Timely,
                Some(m) => return Err(format!("unknown reading mode {m:?}")),
            };
            let failure = reading_failure(&p, &nu, mode).map_err(err)?;
            checked(json!({"mode": mode, "reads": failure.is_none(), "failing_split": failure}), failure.is_some())
        }
        Command::EarlyRead => {
            let nu = oracle(v)?;
            ok(to_value(&early_read(&nu.base, &nu).map_err(err)?))
        }
        Command::Localize => {
            let nu = oracle(v)?;
            let a: Vec<u64> = field(v, "a")?;
            let e: Vec<u64> = field(v, "e")?;
            let k0: usize = opt_field(v, "k0")?.unwrap_or(0);
            ok(to_value(&localize(&nu.base, &nu, &a, &e, k0).map_err(err)?))
        }
        Command::Modest => {
            let p = product(v, "product")?;
            let staircase: Staircase = opt_field(v, "staircase")?.unwrap_or(Staircase::Off);
            ok(to_value(&modest_refine(&p, staircase).map_err(err)?))
        }
        Command::ProductFuse => {
            #[derive(Deserialize)]
            struct Link {
                condition: ProductJson,
                frozen: BTreeSet<String>,
            }
            let chain: Vec<Link> = field(v, "chain")?;
            let chain = chain
                .iter()
                .map(|l| ProductCondition::from_json(&l.condition).map(|c| (c, l.frozen.clone())))
                .collect::<Result<Vec<_>, _>>()
                .map_err(err)?;
            ok(to_value(&product_fuse(&chain).map_err(err)?))
        }
        Command::Schedule => {
            let n: usize = field(v, "n")?;
            let plan = schedule_plan(n).map_err(err)?;
            let m: Vec<usize> = plan.iter().map(|s| s.m).collect();
            ok(json!({"m": m, "stages": plan}))
        }
        Command::ProductEarlyRead => {
            let nu = product_oracle(v)?;
            ok(to_value(&product_early_read(&nu.base, &nu, None).map_err(err)?))
        }
        Command::Bound => {
            let nu = product_oracle(v)?;
            ok(to_value(&bounding_extract(&nu.base, &nu).map_err(err)?))
        }
        Command::ProductCatch => {
            let nu = product_oracle(v)?;
            let b: BTreeSet<String> = field(v, "b")?;
            let xi: String = field(v, "xi")?;
            let n0: usize = opt_field(v, "n0")?.unwrap_or(0);
            match product_catch(&nu.base, &nu, &b, &xi, n0) {
                Ok(out) => {
                    let holds = catch_holds(&out.q, &nu, &xi, out.k).map_err(err)?;
                    checked(json!({"caught": holds, "k": out.k, "z": out.z, "q": out.q}), !holds)
                }
                Err(crate::products::ProdError::DependenceLeak { first, second }) => {
                    checked(json!({"rejected": "dependence leak", "first": first, "second": second}), true)
                }
                Err(e) => Err(err(e)),
            }
        }
        Command::RestrictedLocalize => {
            let nu = product_oracle(v)?;
            let c: BTreeSet<String> = field(v, "c_alpha")?;
            let a: Vec<u64> = field(v, "a")?;
            let e: Vec<u64> = field(v, "e")?;
            let k0: usize = opt_field(v, "k0")?.unwrap_or(0);
            let out = restricted_localize(&nu.base, &nu, &c, &a, &e, k0).map_err(err)?;
            let inv = phi_invariance_failure(&out.q, &out.phi, &c).map_err(err)?;
            let mem = restricted_membership_failure(&out.q, &nu, &out.phi, k0).map_err(err)?;
            let bad = inv.is_some() || mem.is_some();
            checked(json!({"result": out, "invariance_failure": inv, "membership_failure": mem}), bad)
        }
        Command::Tukey { action } => {
            if let Some(a) = action {
                if a != "check" {
                    return Err(format!("unknown tukey action {a:?}"));
                }
            }
            let r: FinRelSystem = field(v, "r")?;
            let r2: FinRelSystem = field(v, "r2")?;
            let pair: TukeyPair = field(v, "pair")?;
            let res = check_tukey(&r, &r2, &pair).map_err(err)?;
            checked(json!({"result": res}), res != TukeyCheck::Ok)
        }
        Command::Dual => {
            let r: FinRelSystem = field(v, "r")?;
            ok(to_value(&dual(&r)))
        }
        Command::Brute => {
            let r: FinRelSystem = field(v, "r")?;
            let (b, d) = brute_characteristics(&r).map_err(err)?;
            ok(json!({"b": b, "d": d}))
        }
        Command::Maps { map } => match map {
            TransferMap::YoriokaIntoAntiDual => {
                let (c, h): (Vec<u64>, Vec<u64>) = (field(v, "c")?, field(v, "h")?);
                let y: String = field(v, "y")?;
                let y = parse_bits(&y).ok_or("y must be a binary string")?;
                let s: Slalom = field(v, "s")?;
                let out = yorioka_into_anti_dual_maps(&c, &h, &y, &s).map_err(err)?;
                let t = out.transfer;
                transfer_report(to_value(&out), t)
            }
            TransferMap::AntiDualIntoYorioka => {
                let (b, g, y): (Vec<u64>, Vec<u64>, Vec<u64>) = (field(v, "b")?, field(v, "g")?, field(v, "y")?);
                let x: SigmaCover = field(v, "x")?;
                let out = anti_dual_into_yorioka_maps(&b, &g, &y, &x).map_err(err)?;
                let t = out.transfer;
                transfer_report(to_value(&out), t)
            }
            TransferMap::AntiIntoLocal => {
                let (c, h, h2): (Vec<u64>, Vec<u64>, Vec<u64>) = (field(v, "c")?, field(v, "h")?, field(v, "h2")?);
                let s: Slalom = field(v, "s")?;
                let phi: Slalom = field(v, "phi")?;
                let out = anti_into_local_maps(&c, &h, &h2, &s, &phi).map_err(err)?;
                let t = out.transfer;
                transfer_report(to_value(&out), t)
            }
            TransferMap::LocalIntoAnti => {
                let (c, h, y): (Vec<u64>, Vec<u64>, Vec<u64>) = (field(v, "c")?, field(v, "h")?, field(v, "y")?);
                let s: Vec<Vec<u64>> = field(v, "s")?;
                let out = local_into_anti_maps(&c, &h, &s, &y).map_err(err)?;
                let t = out.transfer;
                transfer_report(to_value(&out), t)
            }
            TransferMap::Ed => {
                let (c, h): (Vec<u64>, Vec<u64>) = (field(v, "c")?, field(v, "h")?);
                let (x, y): (Vec<u64>, Vec<u64>) = (field(v, "x")?, field(v, "y")?);
                let out = ed_maps(&c, &h, &x, &y).map_err(err)?;
                let t = out.transfer;
                transfer_report(to_value(&out), t)
            }
        },
        Command::Measure => {
            let s: Slalom = field(v, "slalom")?;
            let window: Option<(usize, usize)> = opt_field(v, "window")?;
            let (lo, hi) = window.unwrap_or((0, s.len()));
            if lo > hi || hi > s.len() {
                return Err("window outside the slalom".into());
            }
            let m: BigRational = escape_measure(&s, lo..hi);
            ok(json!({"measure": rat_string(&m)}))
        }
        Command::Partition => {
            let lengths: Vec<u64> = field(v, "lengths")?;
            ok(to_value(&build_partition(&lengths).map_err(err)?))
        }
        Command::Gch => {
            let (c, h) = (bigs(v, "c")?, bigs(v, "h")?);
            let horizon: usize = field(v, "horizon")?;
            ok(json!({"profile": gch_profile(&c, &h, horizon).map_err(err)?}))
        }
        Command::Fbg => {
            let (b, g) = (bigs(v, "b")?, bigs(v, "g")?);
            let horizon: usize = field(v, "horizon")?;
            ok(json!({"profile": fbg_profile(&b, &g, horizon).map_err(err)?}))
        }
        Command::Family { action } => family(cli, *action, v),
        Command::Suite { name } => {
            let count = cli.cap.unwrap_or(100) as usize;
            let rep = run_suite(name, cli.seed, count)
                .ok_or_else(|| format!("unknown suite {name:?}; known: {}", SUITES.join(", ")))?;
            let bad = !rep.failures.is_empty();
            checked(to_value(&rep), bad)
        }
    }
}

fn family(cli: &Cli, action: FamilyAction, v: &Value) -> Result<Outcome, String> {
    let prec = precision(cli);
    match action {
        FamilyAction::Build | FamilyAction::Tree => {
            let mode = count_mode(cli)?;
            let depth: usize = field(v, "depth")?;
            let fam = match action {
                FamilyAction::Build => build_single(field(v, "n0_minus")?, field(v, "d0")?, depth, mode),
                _ => build_tree(field(v, "d0")?, depth, mode),
            }
            .map_err(err)?;
            let values: BTreeMap<String, _> =
                fam.nodes.keys().map(|leaf| (leaf.clone(), level_values(&fam, leaf, 0, prec))).collect();
            ok(json!({"family": fam.to_json(), "level0": values}))
        }
        FamilyAction::Verify => {
            let fam = Family::from_json(&field::<FamilyJson>(v, "family")?).map_err(err)?;
            let range: Option<(usize, usize)> = opt_field(v, "k_range")?;
            let (lo, hi) = range.unwrap_or((0, fam.depth()));
            let cert = verify_suitable(&fam, lo..hi, prec);
            let failing: Vec<_> = cert.entries.iter().filter(|e| e.status != Verdict::Pass).cloned().collect();
            let bad = !cert.all_pass();
            checked(json!({"certificate": cert, "failing": failing}), bad)
        }
        FamilyAction::Toy => {
            let horizon: usize = opt_field(v, "horizon")?.unwrap_or(2);
            ok(to_value(&toy_family(cli.seed, horizon).map_err(err)?))
        }
    }
}

fn read_input(cli: &Cli) -> Result<Value, String> {
    let text = match &cli.input {
        Some(path) => std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?,
        None if needs_input(&cli.command) => {
            let mut s = String::new();
            std::io::stdin().read_to_string(&mut s).map_err(|e| format!("cannot read standard input: {e}"))?;
            s
        }
        None => String::new(),
    };
    if text.trim().is_empty() {
        return Ok(json!({}));
    }
    serde_json::from_str(&text).map_err(|e| format!("malformed JSON: {e}"))
}

/// Parses arguments, runs the command and writes the report; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = read_input(&cli).and_then(|v| execute(&cli, &v));
    let (report, code) = match result {
        Ok(o) => (o.report, if o.violation { 1 } else { 0 }),
        Err(e) => {
            eprintln!("error: {e}");
            (json!({"error": e}), 2)
        }
    };
    let text = serde_json::to_string_pretty(&report).expect("serialisable") + "\n";
    let written = match &cli.output {
        Some(path) => std::fs::write(path, &text).map_err(|e| format!("cannot write {}: {e}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    };
    if let Err(e) = written {
        eprintln!("error: {e}");
        return 2;
    }
    code
}
