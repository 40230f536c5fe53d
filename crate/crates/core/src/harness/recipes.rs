//! Ready-made campaign matrices, one per study.

use super::config::{CampaignConfig, PilotScheme, StrategySpec};
use crate::precoding::PrecoderScheme;
use crate::subgrouping::SubgroupingStrategy;
use crate::{Error, Result};

pub const RECIPE_NAMES: &[&str] = &[
    "fig2", "fig3", "fig4", "fig5", "fig6", "fig7", "fig8", "fig9", "fig10", "radius", "budget",
];

const ALL_PILOTS: [PilotScheme; 3] = [
    PilotScheme::Iterative,
    PilotScheme::Uncorrelated,
    PilotScheme::FullPower,
];

fn base(n_clusters: usize, users_per_cluster: usize) -> CampaignConfig {
    let mut cfg = CampaignConfig::default();
    cfg.geometry.n_clusters = n_clusters;
    cfg.geometry.users_per_cluster = users_per_cluster;
    cfg
}

fn proposed(g: usize, pilot: PilotScheme) -> StrategySpec {
    StrategySpec::new(SubgroupingStrategy::Proposed, g, pilot, PrecoderScheme::Mr)
}

fn sweep(gs: &[usize], pilots: &[PilotScheme]) -> Vec<StrategySpec> {
    gs.iter()
        .flat_map(|&g| pilots.iter().map(move |&p| proposed(g, p)))
        .collect()
}

/// The labelled campaigns of recipe `name`.
pub fn recipe(name: &str) -> Result<Vec<(String, CampaignConfig)>> {
    let out = match name {
        // Pilot search convergence: one cluster, one subgroup, growing subgroup size.
        "fig2" => [5, 10, 20, 40]
            .iter()
            .map(|&k| {
                let mut cfg = base(1, k);
                cfg.n_snapshots = 125;
                cfg.strategies = vec![proposed(1, PilotScheme::Iterative)];
                (format!("users{k}"), cfg)
            })
            .collect(),
        "fig3" => [-1.0, -0.5, -0.2, -0.1, 0.0, 0.1, 0.2, 0.5, 1.0]
            .iter()
            .map(|&nu| {
                let mut cfg = base(5, 8);
                cfg.nu = nu;
                cfg.strategies = vec![proposed(5, PilotScheme::Iterative)];
                (format!("nu{nu}"), cfg)
            })
            .collect(),
        "fig4" => {
            let mut cfg = base(7, 7);
            cfg.strategies = [
                SubgroupingStrategy::Proposed,
                SubgroupingStrategy::HighOrthogonality,
                SubgroupingStrategy::Random,
            ]
            .iter()
            .map(|&s| StrategySpec::new(s, 7, PilotScheme::Iterative, PrecoderScheme::Mr))
            .collect();
            vec![("criteria".to_string(), cfg)]
        }
        "fig5" => {
            let mut cfg = base(5, 8);
            cfg.strategies = vec![
                StrategySpec::new(
                    SubgroupingStrategy::SingleGroup,
                    1,
                    PilotScheme::Iterative,
                    PrecoderScheme::Mr,
                ),
                StrategySpec::new(
                    SubgroupingStrategy::Unicast,
                    40,
                    PilotScheme::Iterative,
                    PrecoderScheme::Mr,
                ),
            ];
            cfg.strategies
                .extend(sweep(&[5, 10, 20, 30], &[PilotScheme::Iterative]));
            vec![("subgroups".to_string(), cfg)]
        }
        "fig6" => {
            let mut cfg = base(3, 40);
            cfg.strategies = sweep(&[3], &ALL_PILOTS);
            vec![("pilots".to_string(), cfg)]
        }
        "fig7" => {
            let mut cfg = base(7, 7);
            cfg.strategies = [PrecoderScheme::Mr, PrecoderScheme::Zf]
                .iter()
                .map(|&p| {
                    StrategySpec::new(SubgroupingStrategy::Proposed, 7, PilotScheme::Iterative, p)
                })
                .collect();
            vec![("precoders".to_string(), cfg)]
        }
        "fig8" => [4, 8, 20]
            .iter()
            .map(|&u| {
                let mut cfg = base(5, u);
                let mut gs = vec![1, 5, 10, 20, 5 * u];
                gs.dedup();
                cfg.strategies = sweep(&gs, &ALL_PILOTS);
                (format!("5x{u}"), cfg)
            })
            .collect(),
        "fig9" => [(1, 40), (2, 20), (5, 8), (8, 5), (20, 2), (40, 1)]
            .iter()
            .map(|&(c, u)| {
                let mut cfg = base(c, u);
                cfg.strategies = sweep(&[1, 2, 5, 8, 20, 40], &ALL_PILOTS);
                (format!("{c}x{u}"), cfg)
            })
            .collect(),
        "fig10" => [64, 128, 192]
            .iter()
            .map(|&m| {
                let mut cfg = base(5, 8);
                cfg.channel.n_antennas = m;
                cfg.strategies = sweep(&[1, 5, 8, 40], &ALL_PILOTS);
                (format!("m{m}"), cfg)
            })
            .collect(),
        "radius" => [2.5, 5.0, 15.0]
            .iter()
            .map(|&r| {
                let mut cfg = base(5, 8);
                cfg.geometry.cluster_radius = r;
                cfg.strategies = sweep(&[1, 5, 8, 40], &ALL_PILOTS);
                (format!("r{r}"), cfg)
            })
            .collect(),
        "budget" => [(33.0, 20.0), (46.0, 20.0), (33.0, 30.0)]
            .iter()
            .map(|&(p, q)| {
                let mut cfg = base(5, 8);
                cfg.p_dl_dbm = p;
                cfg.q_ul_dbm = q;
                cfg.strategies = sweep(&[1, 5, 8, 40], &ALL_PILOTS);
                (format!("p{p}_q{q}"), cfg)
            })
            .collect(),
        _ => {
            return Err(Error::UnknownRecipe {
                name: name.to_string(),
                valid: RECIPE_NAMES.join(", "),
            })
        }
    };
    Ok(out)
}
