//! Finite relational systems, their duals and Tukey connections.
//!
//! ```bash
//! cargo run --example tukey
//! ```

use creature_lab::relational::{brute_characteristics, check_tukey, dual, FinRelSystem, TukeyCheck, TukeyPair};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    // x ⊏ y iff x <= y on 0..4
    let le = FinRelSystem::from_fn(4, 4, |x, y| x <= y);
    let (b, d) = brute_characteristics(&le)?;
    println!("(4, 4, <=): b = {b:?}, d = {d:?}");

    let (bd, dd) = brute_characteristics(&dual(&le))?;
    println!("dual: b = {bd:?}, d = {dd:?}");
    assert_eq!((bd, dd), (d, b));

    let id = TukeyPair { f: (0..4).collect(), g: (0..4).collect() };
    assert_eq!(check_tukey(&le, &le, &id)?, TukeyCheck::Ok);
    println!("identity pair: connection");

    // x ⊏' y iff x == y is finer than <=, so the identity still connects
    let eq = FinRelSystem::from_fn(4, 4, |x, y| x == y);
    assert_eq!(check_tukey(&le, &eq, &id)?, TukeyCheck::Ok);

    // reversing G breaks it; the check names the witness pair
    let rev = TukeyPair { f: (0..4).collect(), g: (0..4).rev().collect() };
    let res = check_tukey(&le, &le, &rev)?;
    println!("reversed G: {res:?}");
    assert_ne!(res, TukeyCheck::Ok);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
