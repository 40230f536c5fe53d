use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{CampaignConfig, PilotScheme, StrategySpec};
use crate::channel_model::{generate_snapshot, Snapshot};
use crate::performance::{
    estimate_gains, evaluate_se, BlockBank, ChainEvaluator, ChainSettings, SpectralEfficiencyReport,
};
use crate::power_control::{
    fractional_dl_power, inter_subgroup_mmf, intra_subgroup_mmf, pilot_powers_uncorrelated,
    subgroup_estimation_gains,
};
use crate::rng;
use crate::subgrouping::{partition_users, similarity_matrix, Partition, SimilarityMatrix};
use crate::{Error, Result};

/// Outcome of one strategy on one snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyResult {
    pub spec: StrategySpec,
    pub n_subgroups: usize,
    pub outcome: std::result::Result<StrategyOutcome, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyOutcome {
    pub partition: Partition,
    pub report: SpectralEfficiencyReport,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub gamma_star: f64,
    /// Accepted pilot-power updates per subgroup (empty unless iterative).
    pub intra_accepted: Vec<usize>,
    /// Whether every subgroup's pilot search stopped before the iteration cap.
    pub intra_converged: bool,
}

impl StrategyResult {
    pub fn alg1_iters_max(&self) -> usize {
        self.outcome
            .as_ref()
            .map_or(0, |o| o.intra_accepted.iter().copied().max().unwrap_or(0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotResult {
    pub index: u64,
    /// Child seed of this snapshot.
    pub seed: u64,
    pub strategies: Vec<StrategyResult>,
    pub wall_clock_ms: f64,
}

fn run_strategy(
    cfg: &CampaignConfig,
    snapshot: &Snapshot,
    similarity: &SimilarityMatrix,
    bank: &BlockBank,
    spec: &StrategySpec,
    index: u64,
) -> Result<StrategyOutcome> {
    let budget = cfg.budget();
    let noise = snapshot.noise_power;
    let covs = &snapshot.covariances;
    let k = snapshot.n_users();
    let mut part_rng = rng::stream(cfg.seed, &[index, rng::tag::SUBGROUPING]);
    let partition = partition_users(
        similarity,
        spec.n_subgroups,
        spec.subgrouping,
        &mut part_rng,
    )?;
    let g_count = partition.n_subgroups;
    if g_count >= cfg.tau {
        return Err(Error::PrelogOutOfRange {
            tau_p: g_count,
            tau: cfg.tau,
        });
    }
    let members = partition.members();
    let settings = ChainSettings {
        scheme: spec.precoder,
        convention: cfg.pilot_noise,
    };
    let full = vec![budget.q_ul; k];
    let mut intra_accepted = Vec::new();
    let mut intra_converged = true;
    let q = match spec.pilot {
        PilotScheme::FullPower => full,
        PilotScheme::Uncorrelated | PilotScheme::Iterative => {
            let beta_g = subgroup_estimation_gains(covs, &members, &full, noise, cfg.pilot_noise)?;
            let p_frac = fractional_dl_power(&beta_g, cfg.nu, budget.p_dl)?;
            let q0 =
                pilot_powers_uncorrelated(&snapshot.betas(), &members, &p_frac, budget.q_ul, noise);
            if spec.pilot == PilotScheme::Uncorrelated {
                q0
            } else {
                let eval = ChainEvaluator::new(bank, covs, &partition, &q0, noise, settings)?;
                let mut q = q0.clone();
                for (g, group) in members.iter().enumerate() {
                    let out = intra_subgroup_mmf(&eval, g, &p_frac, budget.q_ul, &cfg.intra)?;
                    for (&u, &qu) in group.iter().zip(&out.q) {
                        q[u] = qu;
                    }
                    intra_accepted.push(out.accepted);
                    intra_converged &= out.converged;
                }
                q
            }
        }
    };
    let gains = estimate_gains(bank, covs, &partition, &q, noise, settings)?;
    let inter = inter_subgroup_mmf(&gains, budget.p_dl, cfg.epsilon)?;
    let report = evaluate_se(&gains, &inter.p, cfg.tau)?;
    Ok(StrategyOutcome {
        partition,
        report,
        p: inter.p,
        q,
        gamma_star: inter.gamma_star,
        intra_accepted,
        intra_converged,
    })
}

/// Runs every strategy on snapshot `index`. All strategies share the same
/// large-scale realization and the same Monte-Carlo blocks.
pub fn run_snapshot(cfg: &CampaignConfig, index: u64) -> Result<SnapshotResult> {
    let start = Instant::now();
    cfg.validate()?;
    let snapshot = generate_snapshot(&cfg.geometry, &cfg.channel, cfg.seed, index)?;
    let similarity = similarity_matrix(&snapshot.covariances)?;
    let bank = BlockBank::for_snapshot(
        &snapshot.covariances,
        cfg.n_mc,
        cfg.max_subgroups(),
        cfg.seed,
        index,
    )?;
    let k = snapshot.n_users();
    let strategies = cfg
        .strategies
        .iter()
        .map(|spec| {
            let outcome =
                run_strategy(cfg, &snapshot, &similarity, &bank, spec, index).map_err(|e| {
                    log::warn!("snapshot {index}, strategy {}: {e}", spec.key(k));
                    e.to_string()
                });
            StrategyResult {
                spec: *spec,
                n_subgroups: spec.effective_subgroups(k),
                outcome,
            }
        })
        .collect();
    Ok(SnapshotResult {
        index,
        seed: rng::derive_seed(cfg.seed, &[index]),
        strategies,
        wall_clock_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

#[derive(Debug, Clone)]
pub struct CampaignResult {
    pub config: CampaignConfig,
    /// Ordered by snapshot index.
    pub snapshots: Vec<SnapshotResult>,
}

/// Runs `cfg.n_snapshots` snapshots on a pool of `workers` threads.
/// Results do not depend on the worker count.
pub fn run_campaign(cfg: &CampaignConfig, workers: usize) -> Result<CampaignResult> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let snapshots = pool.install(|| {
        (0..cfg.n_snapshots as u64)
            .into_par_iter()
            .map(|i| {
                let r = run_snapshot(cfg, i);
                log::debug!("snapshot {i} done");
                r
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(CampaignResult {
        config: cfg.clone(),
        snapshots,
    })
}
