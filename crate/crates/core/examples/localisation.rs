//! Localising an early-read name by a ground slalom, then the
//! anti-localisation variant and its transfer to the generic slalom.
//!
//! ```bash
//! cargo run --example localisation
//! ```

use creature_lab::conditions::{
    anti_localize, branches, decode_cell, early_read, localization_failure, localize,
};
use creature_lab::connections::{anti_into_local_maps, Slalom};
use creature_lab::suites::{anti_instance, reading_instance};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let inst = reading_instance(3);
    let q = early_read(&inst.p, &inst.nu)?.q;
    let out = localize(&q, &inst.nu, &inst.toy.a, &inst.toy.e, 0)?;
    println!("profile a = {:?}, widths e = {:?}", inst.toy.a, inst.toy.e);
    for (k, cell) in out.phi.cells.iter().enumerate() {
        println!("  phi({k}) = {cell:?} via {:?}", out.cases[k]);
    }
    assert_eq!(localization_failure(&out.q, &inst.nu, &out.phi, 0)?, None);
    println!("every branch of the result stays inside phi");

    let inst = anti_instance(5);
    let al = inst.toy.anti.clone().ok_or("anti parameters")?;
    let q = early_read(&inst.p, &inst.nu)?.q;
    let out = anti_localize(&q, &inst.nu, &al.b, &al.g, 0)?;
    println!("anti-localisation: b = {:?}, g = {:?}, y = {:?}", al.b, al.g, out.y);
    for br in branches(&out.q)?.into_iter().take(4) {
        let x = inst.nu.eval(&br);
        let cells: Vec<Vec<u64>> = (0..x.len()).map(|k| decode_cell(al.b[k], al.g[k], x[k])).collect();
        let s = Slalom::new(al.b.clone(), al.g.clone(), cells)?;
        let t = anti_into_local_maps(&al.b, &al.g, &al.e, &s, &out.phi)?;
        println!("  slalom {:?} avoided by {:?}", s.cells, t.g_image);
        assert!(s.anti_localized_by(&t.g_image, 0..x.len()));
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
