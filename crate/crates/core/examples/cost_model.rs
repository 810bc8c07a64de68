//! Evaluates the analytic cost model term by term for a hand-built
//! one-layer workload (1e9 parameters, 0.5 s of forward compute) and shows
//! how the swap budget opens up with more SSDs.

use offload_sim::cost::{iteration_time, swap_budget, SwapState};
use offload_sim::hardware::HardwareConfig;
use offload_sim::workload::{LayerKind, LayerProfile, Workload};

fn main() {
    let layer = LayerProfile {
        block_index: 0,
        kind: LayerKind::Linear4htoh,
        act_bytes: 1,
        param_bytes: 2_000_000_000,
        flops_fwd: 0.5e12,
        extra_flops: 0.0,
        swap_time_units: 1,
    };
    let w = Workload::custom("toy-1b", 1_000_000_000, 1, 0, vec![layer]);
    // Full recompute: the whole forward pass is replayed in backward.
    let start = SwapState {
        d_f: 0.0,
        recompute_flops: 0.5e12,
    };

    for n_ssd in [4, 12] {
        let hw = HardwareConfig {
            bw_gpu: 16e9,
            gpu_tput: 1e12,
            cpu_opt_tput: 2e9,
            ..HardwareConfig::preset("a100-4ssd").unwrap().with_n_ssd(n_ssd)
        };
        let c = iteration_time(&w, &hw, start);
        let b = swap_budget(&w, &hw, start);
        println!("{n_ssd:>2} SSDs");
        println!("  T_f  {:.4} s  bound by {}", c.t_f, c.bottleneck_f);
        println!("       comp {:.4}  gpu {:.4}  ssd {:.4}", c.t_f_comp, c.t_f_gpu, c.t_f_ssd);
        println!("  T_bo {:.4} s  bound by {}", c.t_bo, c.bottleneck_bo);
        println!(
            "       comp {:.4}  cpu {:.4}  gpu {:.4}  ssd {:.4}",
            c.t_b_comp, c.t_o_comp, c.t_bo_gpu, c.t_bo_ssd
        );
        println!("  t_iter {:.4} s", c.t_iter);
        if b.t_max <= 0.0 {
            println!("  no swap budget (T_max {:.4} s)", b.t_max);
        } else {
            println!("  T_max {:.4} s allows D_max {:.4e} B", b.t_max, b.d_max);
        }
    }
}
