//! Strengthening a condition so that it reads a name early.
//!
//! A name is read timely when every possibility up to a split decides the
//! values below it, and early when the possibilities strictly below do.
//!
//! ```bash
//! cargo run --example early_reading -- 7
//! ```

use creature_lab::conditions::{check_reading, early_read, ReadingMode};
use creature_lab::suites::reading_instance;

pub fn run_seed(seed: u64) -> Result<(), Box<dyn std::error::Error>> {
    let inst = reading_instance(seed);
    let p = &inst.p;
    println!("seed {seed}: horizon {}, splits {:?}, {} branches", p.horizon(), p.splits(), p.branch_count());
    println!("  timely: {}", check_reading(p, &inst.nu, ReadingMode::Timely)?);
    println!("  early:  {}", check_reading(p, &inst.nu, ReadingMode::Early)?);

    let out = early_read(p, &inst.nu)?;
    for b in &out.book {
        println!(
            "  level {}: {} possibilities below, norm {} -> {} (d = {}), bound holds: {}",
            b.level,
            b.m,
            b.norm_before,
            b.norm_after,
            b.d,
            b.holds()
        );
    }
    assert!(check_reading(&out.q, &inst.nu, ReadingMode::Early)?);
    println!("  result reads early, {} branches", out.q.branch_count());
    Ok(())
}

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    run_seed(7)
}

#[allow(dead_code)]
fn main() {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(7);
    run_seed(seed).unwrap();
}
