use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;
use sqap::config::Config;
use sqap::heatmap::emit_heatmap;
use sqap::pipeline::{run_detailed, RunOptions};
use sqap::scene::SceneSpec;
use sqap::sweep::sweep;
use sqap::HarnessError;
use sqap_core::attention::Regime;
use sqap_core::efficiency::speedup_decomposition;
use sqap_core::pruner::Strategies;

#[derive(Parser)]
#[command(
    name = "sqap",
    version,
    about = "Quantized attention and spatially aware token pruning experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one trial and print its record as JSON.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "hadamard", value_parser = parse_regime)]
        regime: Regime,
        #[arg(long, default_value = "full", value_parser = parse_ablation)]
        ablation: Strategies,
        /// Trial index under the master seed.
        #[arg(long, default_value_t = 0)]
        trial: u64,
    },
    /// Run the configured sweep and write a CSV.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the attention map of one trial as a PGM image.
    Heatmap {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "hadamard", value_parser = parse_regime)]
        regime: Regime,
        #[arg(long, default_value_t = 0)]
        trial: u64,
    },
    /// Print the BOPs decomposition as JSON.
    Bops {
        #[arg(long)]
        config: PathBuf,
    },
}

fn parse_regime(s: &str) -> Result<Regime, String> {
    Regime::parse(s).ok_or_else(|| format!("expected one of fp, naive, hadamard; got {s:?}"))
}

fn parse_ablation(s: &str) -> Result<Strategies, String> {
    Strategies::parse(s).ok_or_else(|| format!("expected one of attn, attn+ring, full; got {s:?}"))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(cmd: Command) -> Result<(), HarnessError> {
    match cmd {
        Command::Run {
            config,
            regime,
            ablation,
            trial,
        } => {
            let cfg = Config::load(&config)?;
            let spec = SceneSpec::for_trial(&cfg, trial)?;
            let opts = RunOptions::from_config(&cfg, regime, ablation)?;
            let out = run_detailed(&spec, &cfg.prune_config(), &opts)?;
            let doc = json!({
                "record": out.record,
                "kept": out.prune.kept(),
                "bops": bops_json(&out.bops),
                "decile_rank_corr": out.decile_rank_corr,
            });
            println!(
                "{}",
                serde_json::to_string_pretty(&doc).expect("JSON values are finite")
            );
        }
        Command::Sweep { config, out } => {
            let cfg = Config::load(&config)?;
            let rows = sweep(&cfg, &out)?;
            log::info!("wrote {rows} rows to {}", out.display());
        }
        Command::Heatmap {
            config,
            out,
            regime,
            trial,
        } => {
            let cfg = Config::load(&config)?;
            let spec = SceneSpec::for_trial(&cfg, trial)?;
            let opts = RunOptions::from_config(&cfg, regime, Strategies::Full)?;
            let prepared = sqap::pipeline::Trial::prepare(&spec, &opts)?;
            let att = prepared.attention(&opts)?;
            emit_heatmap(&att.attention, &spec.grid, &out)?;
        }
        Command::Bops { config } => {
            let cfg = Config::load(&config)?;
            let report = speedup_decomposition(&cfg.model_dims(), cfg.prune.ratio, cfg.quant.bits_w, cfg.quant.bits_a)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&bops_json(&report)).expect("JSON values are finite")
            );
        }
    }
    Ok(())
}

fn bops_json(r: &sqap_core::efficiency::BopsReport) -> serde_json::Value {
    // u128 counts go out as strings; JSON numbers lose precision past 2^53
    json!({
        "baseline_bops": r.baseline_bops.to_string(),
        "quantized_bops": r.quantized_bops.to_string(),
        "pruned_bops": r.pruned_bops.to_string(),
        "combined_bops": r.combined_bops.to_string(),
        "seq_len": r.seq_len,
        "pruned_seq_len": r.pruned_seq_len,
        "quant_ratio": r.quant_ratio,
        "prune_ratio": r.prune_ratio,
        "combined_ratio": r.combined_ratio,
        "quant_speedup": r.quant_speedup(),
        "prune_speedup": r.prune_speedup(),
        "combined_speedup": r.combined_speedup(),
    })
}
