//! Conditions as sequences of creatures: order, fusion and catching a real.
//!
//! ```bash
//! cargo run --example fusion
//! ```

use creature_lab::conditions::{catch_real, fuse, order_check, possibilities, OrderMode, ParamTriple, TruncCondition};
use creature_lab::creatures::Creature;

fn full(par: &ParamTriple) -> Result<TruncCondition, Box<dyn std::error::Error>> {
    Ok(TruncCondition::full(par.clone())?)
}

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let par = ParamTriple::new(vec![3; 4], vec![1; 4], vec![2; 4])?;
    let p0 = full(&par)?;
    println!("full condition: splits {:?}, {} branches", p0.splits(), p0.branch_count());

    // p1 <=_0 p0: keep level 0, shrink level 2 to one member
    let mut p1 = p0.clone();
    p1.cells[2] = Creature::singleton(3, 1, &[1])?;
    assert!(order_check(&p1, &p0, OrderMode::AtN(0))?);

    // p2 <=_1 p1: keep through the second split, shrink level 3
    let mut p2 = p1.clone();
    p2.cells[3] = Creature::new(3, 1, &[vec![0], vec![1], vec![2]])?;
    assert!(order_check(&p2, &p1, OrderMode::AtN(1))?);

    let q = fuse(&[p0.clone(), p1, p2])?;
    println!("fusion: splits {:?}, below p0: {}", q.splits(), order_check(&q, &p0, OrderMode::Plain)?);
    println!("possibilities below level 2: {}", possibilities(&q, Some(2))?.len());

    // catch x = (2, 0, 1, 2) at the first level >= 1 with norm >= 1
    let (caught, k) = catch_real(&q, &[2, 0, 1, 2], 1)?;
    println!("caught at level {k}: {:?}", caught.cells[k].members());
    assert!(caught.cells[k].members().iter().all(|s| s.contains(&0)));
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
