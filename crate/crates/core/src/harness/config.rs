use serde::{Deserialize, Serialize};

use crate::channel_model::{ChannelConfig, GeometryConfig};
use crate::estimation::PilotNoiseConvention;
use crate::power_control::{IntraSettings, PowerBudget};
use crate::precoding::PrecoderScheme;
use crate::subgrouping::SubgroupingStrategy;
use crate::{Error, Result};

/// How pilot powers are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PilotScheme {
    /// Closed-form initialization refined by the greedy intra-subgroup search.
    Iterative,
    /// Closed form that is optimal for uncorrelated fading.
    Uncorrelated,
    /// Every user at the pilot power cap.
    FullPower,
}

impl PilotScheme {
    pub fn label(self) -> &'static str {
        match self {
            PilotScheme::Iterative => "iterative",
            PilotScheme::Uncorrelated => "uncorrelated",
            PilotScheme::FullPower => "full_power",
        }
    }
}

/// One row of the strategy matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategySpec {
    pub subgrouping: SubgroupingStrategy,
    /// Requested subgroup count; `single_group` and `unicast` ignore it.
    #[serde(default = "one")]
    pub n_subgroups: usize,
    #[serde(default = "default_pilot")]
    pub pilot: PilotScheme,
    #[serde(default)]
    pub precoder: PrecoderScheme,
}

fn one() -> usize {
    1
}

fn default_pilot() -> PilotScheme {
    PilotScheme::Iterative
}

impl StrategySpec {
    pub fn new(
        subgrouping: SubgroupingStrategy,
        n_subgroups: usize,
        pilot: PilotScheme,
        precoder: PrecoderScheme,
    ) -> Self {
        StrategySpec {
            subgrouping,
            n_subgroups,
            pilot,
            precoder,
        }
    }

    /// Subgroup count actually produced for `k` users.
    pub fn effective_subgroups(&self, k: usize) -> usize {
        self.subgrouping.effective_subgroups(self.n_subgroups, k)
    }

    /// Stable key `subgrouping/G/pilot/precoder`.
    pub fn key(&self, k: usize) -> String {
        format!(
            "{}/G{}/{}/{}",
            self.subgrouping.label(),
            self.effective_subgroups(k),
            self.pilot.label(),
            self.precoder.label()
        )
    }
}

/// A full campaign. Powers are given in dBm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignConfig {
    pub geometry: GeometryConfig,
    pub channel: ChannelConfig,
    pub p_dl_dbm: f64,
    pub q_ul_dbm: f64,
    /// Coherence block length in samples.
    pub tau: usize,
    pub n_snapshots: usize,
    /// Coherence blocks averaged per gain table.
    pub n_mc: usize,
    pub seed: u64,
    pub strategies: Vec<StrategySpec>,
    /// Fractional power control exponent.
    pub nu: f64,
    /// Bisection tolerance on the linear SINR scale.
    pub epsilon: f64,
    pub pilot_noise: PilotNoiseConvention,
    pub intra: IntraSettings,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            geometry: GeometryConfig::default(),
            channel: ChannelConfig::default(),
            p_dl_dbm: 33.0,
            q_ul_dbm: 20.0,
            tau: 200,
            n_snapshots: 100,
            n_mc: 500,
            seed: 1,
            strategies: vec![StrategySpec::new(
                SubgroupingStrategy::Proposed,
                5,
                PilotScheme::Iterative,
                PrecoderScheme::Mr,
            )],
            nu: -0.1,
            epsilon: 1e-6,
            pilot_noise: PilotNoiseConvention::Despread,
            intra: IntraSettings::default(),
        }
    }
}

impl CampaignConfig {
    pub fn budget(&self) -> PowerBudget {
        PowerBudget::from_dbm(self.p_dl_dbm, self.q_ul_dbm)
    }

    pub fn n_users(&self) -> usize {
        self.geometry.n_users()
    }

    /// Largest pilot count any strategy needs.
    pub fn max_subgroups(&self) -> usize {
        let k = self.n_users();
        self.strategies
            .iter()
            .map(|s| s.effective_subgroups(k))
            .max()
            .unwrap_or(1)
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.channel.validate()?;
        self.budget().validate()?;
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_snapshots == 0 {
            return bad("n_snapshots must be at least 1".into());
        }
        if self.n_mc < 2 {
            return bad("n_mc must be at least 2".into());
        }
        if self.strategies.is_empty() {
            return bad("at least one strategy is required".into());
        }
        let k = self.n_users();
        for s in &self.strategies {
            let g = s.effective_subgroups(k);
            if g == 0 || g > k {
                return bad(format!(
                    "strategy {} asks for {g} subgroups with {k} users",
                    s.key(k)
                ));
            }
        }
        if self.tau <= self.max_subgroups() {
            return bad(format!(
                "tau={} must exceed the largest subgroup count {}",
                self.tau,
                self.max_subgroups()
            ));
        }
        if !(-1.0..=1.0).contains(&self.nu) {
            return bad(format!("nu={} outside [-1, 1]", self.nu));
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive".into());
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: CampaignConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        CampaignConfig::default().validate().unwrap();
        let b = CampaignConfig::default().budget();
        assert!((b.q_ul - 0.1).abs() < 1e-15);
    }

    #[test]
    fn partial_json_fills_defaults() {
        let cfg = CampaignConfig::from_json(
            r#"{"n_snapshots": 3, "geometry": {"n_clusters": 2},
                "strategies": [{"subgrouping": "unicast"}, {"subgrouping": "random", "n_subgroups": 4, "pilot": "full_power", "precoder": "zf"}]}"#,
        )
        .unwrap();
        assert_eq!(cfg.n_snapshots, 3);
        assert_eq!(cfg.geometry.n_clusters, 2);
        assert_eq!(cfg.geometry.users_per_cluster, 8);
        assert_eq!(cfg.strategies[0].key(16), "unicast/G16/iterative/mr");
        assert_eq!(cfg.strategies[1].key(16), "random/G4/full_power/zf");
        assert_eq!(cfg.max_subgroups(), 16);
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(CampaignConfig::from_json(r#"{"bogus": 1}"#).is_err());
        let mut cfg = CampaignConfig::default();
        cfg.tau = 5;
        assert!(cfg.validate().is_err());
        let mut cfg = CampaignConfig::default();
        cfg.strategies[0].n_subgroups = 41;
        assert!(cfg.validate().is_err());
        let mut cfg = CampaignConfig::default();
        cfg.nu = 2.0;
        assert!(cfg.validate().is_err());
    }
}
