use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;

use mmcast::channel_model::{generate_snapshot, write_covariance_dump};
use mmcast::harness::{recipe, run_campaign, write_outputs, CampaignConfig, CampaignSummary};
use mmcast::performance::GainTable;
use mmcast::power_control::inter_subgroup_mmf;

#[derive(Parser)]
#[command(
    name = "mmcast",
    version,
    about = "Subgrouped multicast massive-MIMO link-level simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Overrides {
    /// Number of network snapshots.
    #[arg(long)]
    snapshots: Option<usize>,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Monte-Carlo coherence blocks per gain table.
    #[arg(long)]
    n_mc: Option<usize>,
}

impl Overrides {
    fn apply(&self, cfg: &mut CampaignConfig) {
        if let Some(n) = self.snapshots {
            cfg.n_snapshots = n;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(n) = self.n_mc {
            cfg.n_mc = n;
        }
    }

    fn workers(&self) -> usize {
        self.workers
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a campaign from a JSON configuration.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run a built-in recipe; each campaign goes to its own subdirectory.
    Recipe {
        name: String,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Only write the configurations, do not run them.
        #[arg(long)]
        dry_run: bool,
    },
    /// Max-min DL power allocation for a gain table given as JSON.
    PowerSolve {
        #[arg(long)]
        gains: PathBuf,
        /// Total DL power budget.
        #[arg(long, default_value_t = 33.0)]
        p_dl_dbm: f64,
        #[arg(long, default_value_t = 1e-6)]
        epsilon: f64,
    },
    /// Write one user's covariance of one snapshot as a binary dump.
    DumpCovariance {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        snapshot: u64,
        #[arg(long)]
        user: usize,
        /// Output stem; `.json` and `.bin` are appended.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Serialize)]
struct PowerSolution {
    p: Vec<f64>,
    gamma_star: f64,
    min_sinr: f64,
    iterations: usize,
    degenerate: bool,
}

fn load_config(path: &Path) -> Result<CampaignConfig> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    CampaignConfig::from_json(&text).with_context(|| format!("parsing {}", path.display()))
}

fn run_one(cfg: &CampaignConfig, workers: usize, out: &Path) -> Result<CampaignSummary> {
    cfg.validate()?;
    log::info!(
        "running {} snapshots x {} strategies on {workers} workers",
        cfg.n_snapshots,
        cfg.strategies.len()
    );
    let result = run_campaign(cfg, workers)?;
    let summary = write_outputs(&result, out)?;
    for s in &summary.strategies {
        println!(
            "{:<40} mean {:>8.3}  90%-likely {:>8.3}  failed {}",
            s.key, s.mean, s.likely90, s.n_failed
        );
    }
    println!("wrote {}", out.display());
    Ok(summary)
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            overrides,
            out,
        } => {
            let mut cfg = load_config(&config)?;
            overrides.apply(&mut cfg);
            let summary = run_one(&cfg, overrides.workers(), &out)?;
            if summary.any_fully_failed() {
                bail!("at least one strategy failed on every snapshot");
            }
        }
        Command::Recipe {
            name,
            overrides,
            out,
            dry_run,
        } => {
            let mut failed = false;
            for (label, mut cfg) in recipe(&name)? {
                overrides.apply(&mut cfg);
                let dir = out.join(&name).join(&label);
                if dry_run {
                    std::fs::create_dir_all(&dir)?;
                    std::fs::write(
                        dir.join("config.json"),
                        serde_json::to_string_pretty(&cfg)? + "\n",
                    )?;
                    println!("wrote {}", dir.join("config.json").display());
                    continue;
                }
                failed |= run_one(&cfg, overrides.workers(), &dir)?.any_fully_failed();
            }
            if failed {
                bail!("at least one strategy failed on every snapshot");
            }
        }
        Command::PowerSolve {
            gains,
            p_dl_dbm,
            epsilon,
        } => {
            let text = std::fs::read_to_string(&gains)
                .with_context(|| format!("reading {}", gains.display()))?;
            let table: GainTable = serde_json::from_str(&text)?;
            let out = inter_subgroup_mmf(&table, mmcast::dbm_to_watts(p_dl_dbm), epsilon)?;
            let solution = PowerSolution {
                min_sinr: table.min_sinr(&out.p),
                p: out.p,
                gamma_star: out.gamma_star,
                iterations: out.bisection_steps,
                degenerate: out.degenerate,
            };
            println!("{}", serde_json::to_string_pretty(&solution)?);
        }
        Command::DumpCovariance {
            config,
            snapshot,
            user,
            out,
        } => {
            let cfg = load_config(&config)?;
            let snap = generate_snapshot(&cfg.geometry, &cfg.channel, cfg.seed, snapshot)?;
            let cov = snap
                .covariances
                .get(user)
                .with_context(|| format!("user {user} out of range (K = {})", snap.n_users()))?;
            write_covariance_dump(&out, cov)?;
            println!("wrote {}.json and {}.bin", out.display(), out.display());
        }
    }
    Ok(())
}
