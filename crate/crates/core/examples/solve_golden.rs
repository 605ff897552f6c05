//! Re-solves every cubature rule and rewrites the golden files.
use std::time::Instant;

use simplex_sbp::cubature::{golden_file_name, solve_cubature};

fn main() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("golden");
    for d in 2..=3 {
        for p in 1..=4 {
            let t = Instant::now();
            match solve_cubature::<f64>(p, d) {
                Ok(rule) => {
                    println!("d={d} p={p}: branch {} residual {:e} ({:.2?})", rule.branch, rule.residual, t.elapsed());
                    for o in &rule.orbits {
                        println!("    {:?} {:?} {:e}", o.kind, o.params, o.weight);
                    }
                    std::fs::write(dir.join(golden_file_name(d, p)), rule.to_json().unwrap() + "\n").unwrap();
                }
                Err(e) => println!("d={d} p={p}: {e} ({:.2?})", t.elapsed()),
            }
        }
    }
}
