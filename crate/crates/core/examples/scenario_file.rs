//! Loads a scenario document with preset overrides, validates it, and
//! prints its fully resolved form.

use offload_sim::report::run_validate;
use offload_sim::scenario::load_scenario;

const DOC: &str = r#"
schema_version = 1
seed = 7
variant = "PIPELINED"

[model]
preset = "gpt3-33b"
batch_size = 16

[hardware]
preset = "rtx4090-12ssd"
n_ssd = 8
cpu_mem = 256e9

[planner]
mode = "fixed_swap_coefficient"
value = 0.25
"#;

fn main() -> offload_sim::Result<()> {
    let s = load_scenario(DOC)?;
    print!("{}", run_validate(&s)?.to_text());
    println!("--- resolved ---");
    print!("{}", s.to_toml()?);
    assert_eq!(load_scenario(&s.to_toml()?)?, s);
    Ok(())
}
