//! Largest trainable model under two placement policies as the CPU memory
//! limit shrinks, on both reference GPUs.

use offload_sim::capacity::write_capacity_csv;
use offload_sim::hardware::HardwareConfig;
use offload_sim::report::{run_capacity, CapacitySpec};

fn main() -> offload_sim::Result<()> {
    for hw in ["a100-12ssd", "rtx4090-12ssd"] {
        println!("# {hw}");
        let spec = CapacitySpec::new(HardwareConfig::preset(hw).unwrap());
        write_capacity_csv(&run_capacity(&spec)?, std::io::stdout())?;
    }
    Ok(())
}
