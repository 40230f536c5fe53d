use std::path::Path;

use serde::{Deserialize, Serialize};

use super::campaign::CampaignResult;
use super::config::CampaignConfig;
use super::stats::CdfSummary;
use crate::Result;

/// One CSV row: one strategy on one snapshot. Failed strategies carry NaN metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub snapshot: u64,
    pub strategy: String,
    #[serde(rename = "G")]
    pub n_subgroups: usize,
    pub scheme: String,
    pub precoder: String,
    pub sum_se: f64,
    pub min_user_se: f64,
    pub gamma_star: f64,
    pub alg1_iters_max: usize,
}

impl ResultRow {
    pub fn key(&self) -> String {
        format!(
            "{}/G{}/{}/{}",
            self.strategy, self.n_subgroups, self.scheme, self.precoder
        )
    }

    pub fn failed(&self) -> bool {
        self.sum_se.is_nan()
    }
}

/// Distribution of the sum SE of one strategy across snapshots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub key: String,
    pub strategy: String,
    #[serde(rename = "G")]
    pub n_subgroups: usize,
    pub scheme: String,
    pub precoder: String,
    pub n_ok: usize,
    pub n_failed: usize,
    pub mean: f64,
    pub p10: f64,
    pub p50: f64,
    pub p90: f64,
    /// Sum SE exceeded in 90% of snapshots.
    pub likely90: f64,
    pub mean_min_user_se: f64,
    pub alg1_iters_max: usize,
}

impl StrategySummary {
    pub fn fully_failed(&self) -> bool {
        self.n_ok == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub config: CampaignConfig,
    pub strategies: Vec<StrategySummary>,
}

impl CampaignSummary {
    pub fn get(&self, key: &str) -> Option<&StrategySummary> {
        self.strategies.iter().find(|s| s.key == key)
    }

    pub fn any_fully_failed(&self) -> bool {
        self.strategies.iter().any(StrategySummary::fully_failed)
    }
}

impl CampaignResult {
    pub fn rows(&self) -> Vec<ResultRow> {
        let mut rows = Vec::new();
        for snap in &self.snapshots {
            for s in &snap.strategies {
                let (sum_se, min_user_se, gamma_star) = match &s.outcome {
                    Ok(o) => (o.report.sum_se, o.report.min_user_se(), o.gamma_star),
                    Err(_) => (f64::NAN, f64::NAN, f64::NAN),
                };
                rows.push(ResultRow {
                    snapshot: snap.index,
                    strategy: s.spec.subgrouping.label().to_string(),
                    n_subgroups: s.n_subgroups,
                    scheme: s.spec.pilot.label().to_string(),
                    precoder: s.spec.precoder.label().to_string(),
                    sum_se,
                    min_user_se,
                    gamma_star,
                    alg1_iters_max: s.alg1_iters_max(),
                });
            }
        }
        rows
    }

    pub fn summary(&self) -> CampaignSummary {
        summarize(&self.config, &self.rows())
    }
}

/// Aggregates rows per strategy key, in order of first appearance.
pub fn summarize(config: &CampaignConfig, rows: &[ResultRow]) -> CampaignSummary {
    let mut keys: Vec<String> = Vec::new();
    for r in rows {
        let k = r.key();
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    let strategies = keys
        .into_iter()
        .map(|key| {
            let mine: Vec<&ResultRow> = rows.iter().filter(|r| r.key() == key).collect();
            let ok: Vec<&&ResultRow> = mine.iter().filter(|r| !r.failed()).collect();
            let sums: Vec<f64> = ok.iter().map(|r| r.sum_se).collect();
            let mins: Vec<f64> = ok.iter().map(|r| r.min_user_se).collect();
            let cdf = CdfSummary::new(&sums);
            let first = mine[0];
            StrategySummary {
                key,
                strategy: first.strategy.clone(),
                n_subgroups: first.n_subgroups,
                scheme: first.scheme.clone(),
                precoder: first.precoder.clone(),
                n_ok: ok.len(),
                n_failed: mine.len() - ok.len(),
                mean: cdf.mean,
                p10: cdf.percentile(0.1),
                p50: cdf.percentile(0.5),
                p90: cdf.percentile(0.9),
                likely90: cdf.likely(0.9),
                mean_min_user_se: CdfSummary::new(&mins).mean,
                alg1_iters_max: mine.iter().map(|r| r.alg1_iters_max).max().unwrap_or(0),
            }
        })
        .collect();
    CampaignSummary {
        config: config.clone(),
        strategies,
    }
}

pub fn write_results_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize()
        .collect::<std::result::Result<Vec<ResultRow>, _>>()?)
}

/// Writes `results.csv` and `summary.json` into `dir` and returns the summary.
pub fn write_outputs(result: &CampaignResult, dir: &Path) -> Result<CampaignSummary> {
    std::fs::create_dir_all(dir)?;
    let rows = result.rows();
    write_results_csv(&rows, &dir.join("results.csv"))?;
    let summary = summarize(&result.config, &rows);
    let mut json = serde_json::to_string_pretty(&summary)?;
    json.push('\n');
    std::fs::write(dir.join("summary.json"), json)?;
    Ok(summary)
}
