//! Comparing numbers far too large to write down.
//!
//! Level 0 of the single-tuple family starting from `d(0) = 4` has
//! `b = 2^65540` and `g = 65536`, so `b^g` has about four billion bits.
//! The certifier decides inequalities between such values through
//! iterated-logarithm enclosures and monotonicity rules.
//!
//! ```bash
//! cargo run --example towers
//! ```

use creature_lab::family::build_single;
use creature_lab::numeric::{tower_eval, Certifier, CountMode, Expr, Precision, Verdict};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let prec = Precision::default();
    let fam = build_single(3, 4, 1, CountMode::PowerBound)?;
    let lv = &fam.nodes[""][0];

    for (name, e) in [("h", &lv.h), ("g", &lv.g), ("b", &lv.b), ("c", &lv.c), ("a", &lv.a)] {
        println!("{name:>2} = {}", tower_eval(e, &prec)?);
    }

    let mut cert = Certifier::new(prec);
    let c_h = lv.c.pow(&lv.h);
    let b_g = lv.b.pow(&lv.g);
    let v = cert.lt(&c_h, &b_g);
    println!("c^h < b^g: {v:?}");
    assert_eq!(v, Verdict::Pass);

    // the count of subsets of size at most g is below b^g
    assert_eq!(cert.le(&lv.bng, &b_g), Verdict::Pass);
    assert_eq!(cert.le(&lv.bng, &lv.a), Verdict::Pass);
    println!("b^(nabla g) <= b^g and <= a: pass");

    // small values stay exact
    let x = Expr::nat(3u32).pow(&Expr::nat(4u32)).sub_n(1);
    let exact = cert.eval.exact_nat(&x).ok_or("3^4 - 1 should be exact")?;
    println!("3^4 - 1 = {exact}");
    assert_eq!(exact, 80u32.into());
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
