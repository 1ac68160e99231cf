//! Selection into polytope targets through the lifted scalar field.

use whitsel::instance::Instance;
use whitsel::solver::{lift_instance, solve_global};

const INSTANCE: &str = r#"{"config":{"m":2,"n":1,"D":2},"points":[
 {"x":[0.0],"constraint":{"kind":"target","payload":{"dim":2,"rows":[
   {"a":[1.0,0.0],"b0":0.0},{"a":[-1.0,0.0],"b0":0.0},{"a":[0.0,1.0],"b0":1.0},{"a":[0.0,-1.0],"b0":1.0}]}}},
 {"x":[1.0],"constraint":{"kind":"target","payload":{"dim":2,"rows":[
   {"a":[1.0,1.0],"b0":-1.0},{"a":[-1.0,0.0],"b0":3.0},{"a":[0.0,-1.0],"b0":3.0}]}}}]}"#;

fn main() -> Result<(), whitsel::Error> {
    let inst = Instance::from_json(INSTANCE)?;
    let lifted = lift_instance(&inst)?;
    println!("lifted field: n = {}, m = {}, {} points", lifted.n + lifted.d, lifted.m, lifted.field.len());
    let sol = solve_global(&inst)?;
    println!("M* = {:.6} (norm factor {:.4})", sol.diagnostics.m_star, sol.diagnostics.norm_factor);
    for x in [0.0, 0.5, 1.0] {
        println!("F({x}) = {:?}", sol.value(&[x])?);
    }
    Ok(())
}
