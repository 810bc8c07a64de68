use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use offload_sim::capacity::{write_capacity_csv, PlacementPolicy};
use offload_sim::hardware::HardwareConfig;
use offload_sim::report::{self, CapacitySpec, SweepAxis, SweepSpec};
use offload_sim::scenario::{load_scenario_file, Scenario};
use offload_sim::sim::{write_chrome_trace, ScheduleVariant};
use offload_sim::{Error, ModelConfig, Result};

/// Planner and simulator for single-GPU fine-tuning with CPU and SSD offloading.
#[derive(Parser)]
#[command(name = "offload-sim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Choose activation swaps and predict the iteration time.
    Plan(Common),
    /// Simulate one iteration and check trace invariants.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Chrome trace output (one variant only).
        #[arg(long, value_name = "FILE")]
        trace: Option<PathBuf>,
    },
    /// Vary one scenario parameter and write a CSV row per value and variant.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_axis)]
        axis: SweepAxis,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long, value_name = "N")]
        workers: Option<usize>,
    },
    /// Largest trainable preset per CPU memory limit and placement policy.
    Capacity {
        #[command(flatten)]
        common: Common,
        /// Hardware preset, used when no scenario is given.
        #[arg(long, default_value = "a100-12ssd")]
        hardware: String,
        /// CPU memory limits in GB.
        #[arg(long = "cpu-mem", value_delimiter = ',')]
        cpu_mem: Vec<f64>,
        #[arg(long = "policy", value_delimiter = ',', value_parser = parse_policy)]
        policies: Vec<PlacementPolicy>,
        /// Model presets in ascending size; defaults to the full ladder.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        candidates: Option<Vec<String>>,
        #[arg(long, default_value_t = 1)]
        batch_size: u64,
    },
    /// Check a scenario end to end: config, plan, schedule and invariants.
    Validate(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario document (TOML).
    #[arg(long, value_name = "FILE", conflicts_with = "preset")]
    scenario: Option<PathBuf>,
    /// Preset `MODEL/HARDWARE[/bBATCH]`, e.g. gpt3-13b/a100-12ssd/b64.
    #[arg(long, value_name = "NAME")]
    preset: Option<String>,
    /// Schedule variant(s); defaults to the scenario's.
    #[arg(long, value_delimiter = ',', value_parser = parse_variant)]
    variant: Vec<ScheduleVariant>,
    /// Write the machine-readable report (JSON or CSV) here.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

fn parse_variant(s: &str) -> std::result::Result<ScheduleVariant, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_axis(s: &str) -> std::result::Result<SweepAxis, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_policy(s: &str) -> std::result::Result<PlacementPolicy, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

impl Common {
    fn scenario(&self) -> Result<Option<Scenario>> {
        let s = match (&self.scenario, &self.preset) {
            (Some(path), _) => load_scenario_file(path)?,
            (None, Some(name)) => Scenario::preset(name)?,
            (None, None) => return Ok(None),
        };
        Ok(Some(s))
    }

    fn require_scenario(&self) -> Result<Scenario> {
        self.scenario()?
            .ok_or_else(|| Error::Usage("one of --scenario or --preset is required".into()))
    }

    fn variants(&self, s: &Scenario) -> Vec<ScheduleVariant> {
        if self.variant.is_empty() {
            vec![s.variant]
        } else {
            self.variant.clone()
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Usage(format!("cannot write `{}`: {e}", path.display())))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut f = create(path)?;
    serde_json::to_writer_pretty(&mut f, value).map_err(|e| Error::Io(e.into()))?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let stdout = io::stdout();
    match cli.command {
        Command::Plan(common) => {
            let s = common.require_scenario()?;
            let r = report::run_plan(&s)?;
            print!("{}", r.to_text());
            if let Some(out) = &common.out {
                write_json(out, &r)?;
            }
        }
        Command::Simulate { common, trace } => {
            let s = common.require_scenario()?;
            let variants = common.variants(&s);
            if trace.is_some() && variants.len() != 1 {
                return Err(Error::Usage("--trace needs exactly one --variant".into()));
            }
            s.validate()?;
            let plan = s.plan()?;
            let mut reports = Vec::new();
            let mut failure = None;
            for v in variants {
                let o = report::simulate_with_plan(&s, &plan, v)?;
                print!("{}", o.report.to_text());
                if let Some(path) = &trace {
                    let mut f = create(path)?;
                    write_chrome_trace(&o.trace, &mut f)?;
                    f.flush()?;
                }
                if let Err(e) = o.ensure_invariants() {
                    failure.get_or_insert(e);
                }
                reports.push(o.report);
            }
            if let Some(out) = &common.out {
                write_json(out, &reports)?;
            }
            if let Some(e) = failure {
                return Err(e);
            }
        }
        Command::Sweep {
            common,
            axis,
            values,
            workers,
        } => {
            let s = common.require_scenario()?;
            let variants = if common.variant.is_empty() {
                ScheduleVariant::ALL.to_vec()
            } else {
                common.variant.clone()
            };
            let spec = SweepSpec::new(s, axis, values, variants)?;
            let rows = report::run_sweep(&spec, workers)?;
            match &common.out {
                Some(path) => {
                    let mut f = create(path)?;
                    report::write_sweep_csv(&rows, &mut f)?;
                    f.flush()?;
                }
                None => report::write_sweep_csv(&rows, stdout.lock())?,
            }
        }
        Command::Capacity {
            common,
            hardware,
            cpu_mem,
            policies,
            candidates,
            batch_size,
        } => {
            let hw = match common.scenario()? {
                Some(s) => s.hardware,
                None => HardwareConfig::preset(&hardware).ok_or(Error::UnknownPreset {
                    kind: "hardware",
                    name: hardware,
                })?,
            };
            let mut spec = CapacitySpec::new(hw);
            if !cpu_mem.is_empty() {
                spec.cpu_mems_gb = cpu_mem;
            }
            if !policies.is_empty() {
                spec.policies = policies;
            }
            spec.candidates = match candidates {
                None => ModelConfig::ladder(batch_size),
                Some(names) => names
                    .iter()
                    .filter(|n| !n.is_empty())
                    .map(|n| {
                        ModelConfig::preset(n)
                            .map(|m| m.with_batch_size(batch_size))
                            .ok_or_else(|| Error::UnknownPreset {
                                kind: "model",
                                name: n.clone(),
                            })
                    })
                    .collect::<Result<_>>()?,
            };
            let rows = report::run_capacity(&spec)?;
            match &common.out {
                Some(path) => {
                    let mut f = create(path)?;
                    write_capacity_csv(&rows, &mut f)?;
                    f.flush()?;
                }
                None => write_capacity_csv(&rows, stdout.lock())?,
            }
        }
        Command::Validate(common) => {
            let mut s = common.require_scenario()?;
            if let [v] = common.variant.as_slice() {
                s.variant = *v;
            }
            let r = report::run_validate(&s)?;
            print!("{}", r.to_text());
            if let Some(out) = &common.out {
                write_json(out, &r)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
