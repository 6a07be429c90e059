//! Norms of creatures and the two refinement operations.
//!
//! ```bash
//! cargo run --example norms
//! ```

use creature_lab::creatures::{bigness_refine, lognorm_at_least, norm, range_refine, Creature};
use num_rational::BigRational;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    // {{0,1},{2,3}} covers every point but no pair across the halves
    let m = Creature::new(4, 2, &[vec![0, 1], vec![2, 3]])?;
    println!("norm {{{{0,1}},{{2,3}}}} = {}", norm(&m)?);
    assert_eq!(norm(&m)?, 1);

    let full = Creature::full(6, 2)?;
    println!("full creature on 6 points, cap 2: {} members, norm {}", full.len(), norm(&full)?);
    assert_eq!(norm(&full)?, 2);

    // log-norm (1/d) log_d(norm + 1) against t
    let third = BigRational::new(1.into(), 3.into());
    let half = BigRational::new(1.into(), 2.into());
    println!("(1/3) log_3(norm + 1) >= 1/3: {}", lognorm_at_least(norm(&full)?, 3, &third)?);
    println!("(1/3) log_3(norm + 1) >= 1/2: {}", lognorm_at_least(norm(&full)?, 3, &half)?);
    assert!(lognorm_at_least(norm(&full)?, 3, &third)?);
    assert!(!lognorm_at_least(norm(&full)?, 3, &half)?);

    // colour members by the smallest point they contain; bigness keeps one colour
    let coloring: Vec<usize> = full.members().iter().map(|s| s.first().map_or(0, |&x| x % 3)).collect();
    let (colour, sub) = bigness_refine(&full, &coloring, 3)?;
    println!("bigness: colour {colour}, {} members, norm {}", sub.len(), norm(&sub)?);
    assert!(norm(&full)? < 3 * (norm(&sub)? + 1));

    // shrink to members whose value under f lies in at most 2 values
    let f: Vec<usize> = (0..full.len()).map(|i| i % 5).collect();
    let rr = range_refine(&full, &f, 5, 2, 3)?;
    println!("range refinement: {} members, norm {}", rr.len(), norm(&rr)?);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
