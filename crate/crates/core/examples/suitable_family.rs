//! Building parameter families and certifying the suitability clauses.
//!
//! ```bash
//! cargo run --example suitable_family
//! ```

use creature_lab::family::{build_single, build_tree, toy_family, verify_suitable};
use creature_lab::numeric::{CountMode, Precision};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let prec = Precision::default();

    let fam = build_single(3, 4, 3, CountMode::PowerBound)?;
    let cert = verify_suitable(&fam, 0..3, prec);
    println!("single tuple, depth 3: {} pass, {} fail, {} unknown", cert.pass, cert.fail, cert.unknown);
    assert!(cert.all_pass());

    let bad = fam.with_d0(2);
    let cert = verify_suitable(&bad, 0..1, prec);
    for e in cert.failures() {
        println!("  corrupted d(0): {} at k = {} fails ({})", e.clause, e.k, e.detail);
    }

    let tree = build_tree(4, 2, CountMode::PowerBound)?;
    let cert = verify_suitable(&tree, 0..2, prec);
    println!("tree, depth 2: {} leaves, {} pass, {} unknown", tree.nodes.len(), cert.pass, cert.unknown);

    let toy = toy_family(1, 4)?;
    println!("toy family: c = {:?}, h = {:?}, d = {:?}", toy.c, toy.h, toy.d);
    for m in &toy.manifest {
        println!("  {}: {} ({})", m.clause, m.status, m.reason);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
