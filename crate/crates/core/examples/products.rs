//! Products of conditions: the split schedule, restricted localisation and
//! catching a coordinate against a name that ignores it.
//!
//! ```bash
//! cargo run --example products
//! ```

use creature_lab::products::{
    catch_holds, phi_invariance_failure, product_catch, restricted_localize, restricted_membership_failure,
    schedule_plan, ProdError,
};
use creature_lab::suites::{catch_instance, restricted_instance};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    for st in schedule_plan(3)? {
        println!("stage {}: m = {}, owners {:?}", st.n, st.m, st.owners);
    }

    let inst = restricted_instance(11);
    println!("coordinates {:?}, restricted side {:?}", inst.p.support(), inst.c_alpha);
    let out = restricted_localize(&inst.p, &inst.nu, &inst.c_alpha, &inst.a, &inst.e, 0)?;
    println!("cases {:?}", out.cases);
    assert_eq!(phi_invariance_failure(&out.q, &out.phi, &inst.c_alpha)?, None);
    assert_eq!(restricted_membership_failure(&out.q, &inst.nu, &out.phi, 0)?, None);
    println!("phi depends on the restricted side only and captures the name");

    let inst = catch_instance(4);
    let out = product_catch(&inst.p, &inst.nu, &inst.b, &inst.xi, inst.n0)?;
    println!("{} caught at level {} with value {:?}", inst.xi, out.k, out.z);
    assert!(catch_holds(&out.q, &inst.nu, &inst.xi, out.k)?);

    match product_catch(&inst.p, &inst.leak, &inst.b, &inst.xi, inst.n0) {
        Err(ProdError::DependenceLeak { .. }) => println!("a name reading {} is rejected", inst.xi),
        other => println!("leaking name: {:?}", other.map(|o| o.k)),
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
