//! Pilot (uplink) and downlink power control.
//!
//! Downlink powers are first pre-allocated by fractional power control so
//! pilot powers can be tuned per subgroup by a greedy search; the final
//! downlink powers then maximize the minimum SINR over all users by bisection
//! on a target SINR, each step a linear feasibility problem solved as the
//! fixed point of a standard interference function.

use serde::{Deserialize, Serialize};

use crate::channel_model::SpatialCovariance;
use crate::estimation::{PilotNoiseConvention, SubgroupEstimator};
use crate::linalg::trace_re;
use crate::performance::{ChainEvaluator, GainTable, UserGains};
use crate::{CMatrix, Error, Result};

/// Total downlink and per-user pilot budgets, in watts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerBudget {
    pub p_dl: f64,
    pub q_ul: f64,
}

impl PowerBudget {
    pub fn from_dbm(p_dl_dbm: f64, q_ul_dbm: f64) -> Self {
        PowerBudget {
            p_dl: crate::dbm_to_watts(p_dl_dbm),
            q_ul: crate::dbm_to_watts(q_ul_dbm),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p_dl > 0.0 && self.q_ul > 0.0) || !self.p_dl.is_finite() || !self.q_ul.is_finite()
        {
            return Err(Error::InvalidConfig(format!(
                "power budgets must be positive, got p_dl={} q_ul={}",
                self.p_dl, self.q_ul
            )));
        }
        Ok(())
    }
}

/// `β_g = (1/M) Σ_k [tr R_k − tr R̃_k]` for every subgroup, with the
/// estimation error evaluated at pilot powers `q`.
pub fn subgroup_estimation_gains(
    covariances: &[SpatialCovariance],
    members: &[Vec<usize>],
    q: &[f64],
    noise_power: f64,
    convention: PilotNoiseConvention,
) -> Result<Vec<f64>> {
    let tau_p = members.len();
    let noise = convention.estimator_noise(noise_power, tau_p);
    members
        .iter()
        .map(|group| {
            let covs: Vec<&CMatrix> = group.iter().map(|&k| &covariances[k].matrix).collect();
            let qg: Vec<f64> = group.iter().map(|&k| q[k]).collect();
            let est = SubgroupEstimator::new(&covs, &qg, tau_p, noise)?;
            let m = covs.first().map_or(1, |r| r.nrows()) as f64;
            Ok(covs
                .iter()
                .enumerate()
                .map(|(i, r)| trace_re(r) - est.error_trace(i, r))
                .sum::<f64>()
                / m)
        })
        .collect()
}

/// Fractional power control `p_g = P β_g^ν / Σ_c β_c^ν`.
pub fn fractional_dl_power(beta_g: &[f64], nu: f64, p_dl: f64) -> Result<Vec<f64>> {
    if !(-1.0..=1.0).contains(&nu) {
        return Err(Error::InvalidConfig(format!("nu={nu} outside [-1, 1]")));
    }
    if let Some(g) = beta_g.iter().position(|&b| !(b > 0.0) || !b.is_finite()) {
        return Err(Error::NonPositiveSubgroupGain(g));
    }
    let w: Vec<f64> = beta_g.iter().map(|b| b.powf(nu)).collect();
    let total: f64 = w.iter().sum();
    Ok(w.iter().map(|x| p_dl * x / total).collect())
}

/// Pilot powers that are optimal under uncorrelated fading:
/// `q_k = Υ (1 + β̄_k p_g) / β̄_k²` with `Υ = min_k Q β̄_k² / (1 + β̄_k p_g)`
/// and `β̄_k = β_k / σ²`.
pub fn pilot_power_uncorrelated(betas: &[f64], p_g: f64, q_ul: f64, noise_power: f64) -> Vec<f64> {
    let bn: Vec<f64> = betas.iter().map(|b| b / noise_power).collect();
    let upsilon = bn
        .iter()
        .map(|b| q_ul * b * b / (1.0 + b * p_g))
        .fold(f64::INFINITY, f64::min);
    bn.iter()
        .map(|b| (upsilon * (1.0 + b * p_g) / (b * b)).min(q_ul))
        .collect()
}

/// Pilot powers for every user from per-subgroup DL powers.
pub fn pilot_powers_uncorrelated(
    betas: &[f64],
    members: &[Vec<usize>],
    p: &[f64],
    q_ul: f64,
    noise_power: f64,
) -> Vec<f64> {
    let mut q = vec![0.0; betas.len()];
    for (group, &pg) in members.iter().zip(p) {
        let b: Vec<f64> = group.iter().map(|&k| betas[k]).collect();
        for (&k, qk) in group
            .iter()
            .zip(pilot_power_uncorrelated(&b, pg, q_ul, noise_power))
        {
            q[k] = qk;
        }
    }
    q
}

/// How the pilot search treats the step sizes `μ_k = Γ_min / γ_k`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepSize {
    /// Recomputed from the SINRs of every accepted iterate. Creeps towards
    /// equal SINRs over many small accepted steps.
    Refresh,
    /// Computed once from the initial SINRs.
    #[default]
    Frozen,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntraSettings {
    pub max_iterations: usize,
    pub step_size: StepSize,
    /// Whether all evaluations share common random numbers. Without them an
    /// improvement must exceed two pooled standard errors to be accepted.
    pub common_random_numbers: bool,
}

impl Default for IntraSettings {
    fn default() -> Self {
        IntraSettings {
            max_iterations: 100,
            step_size: StepSize::Frozen,
            common_random_numbers: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntraOutcome {
    /// Pilot powers of the subgroup members in ascending user order.
    pub q: Vec<f64>,
    /// Number of accepted updates (0 means the initialization was kept).
    pub accepted: usize,
    /// Number of candidate evaluations.
    pub evaluations: usize,
    /// Minimum SINR of the initialization and of every accepted iterate.
    pub min_sinr_trace: Vec<f64>,
    /// `true` unless the iteration cap stopped the search.
    pub converged: bool,
}

fn min_with_se(gains: &[UserGains], p: &[f64], noise: f64) -> (f64, Vec<f64>, f64) {
    let sinrs: Vec<f64> = gains.iter().map(|u| u.sinr(p, noise)).collect();
    let (arg, min) = sinrs
        .iter()
        .copied()
        .enumerate()
        .fold(
            (0, f64::INFINITY),
            |acc, x| if x.1 < acc.1 { x } else { acc },
        );
    let se = gains[arg].sinr_std_err(p, noise);
    (min, sinrs, se)
}

fn step_sizes(sinrs: &[f64], min: f64) -> Vec<f64> {
    sinrs
        .iter()
        .map(|&s| if s > 0.0 { min / s } else { 1.0 })
        .collect()
}

/// Greedy intra-subgroup max-min pilot power control for subgroup `g`.
/// At most `max_iterations` candidates are tried after the initialization.
///
/// Starts from the evaluator's cached pilot powers of `g`; the other
/// subgroups stay at their cached powers and the DL powers are fixed at `p`.
/// Each step scales the incumbent by the step sizes and renormalizes so the
/// largest pilot transmits at `q_ul`; a step is kept only if the subgroup's
/// minimum SINR strictly improves.
pub fn intra_subgroup_mmf(
    eval: &ChainEvaluator<'_>,
    g: usize,
    p: &[f64],
    q_ul: f64,
    settings: &IntraSettings,
) -> Result<IntraOutcome> {
    let members = &eval.members()[g];
    let mut q_best: Vec<f64> = members.iter().map(|&k| eval.q()[k]).collect();
    let noise = eval.noise_power();
    if members.len() == 1 {
        return Ok(IntraOutcome {
            q: vec![q_ul],
            accepted: 0,
            evaluations: 0,
            min_sinr_trace: Vec::new(),
            converged: true,
        });
    }
    let gains = eval.subgroup_gains(g, &q_best)?;
    let (mut best, sinrs, mut best_se) = min_with_se(&gains, p, noise);
    let mut mu = step_sizes(&sinrs, best);
    let mut out = IntraOutcome {
        q: Vec::new(),
        accepted: 0,
        evaluations: 1,
        min_sinr_trace: vec![best],
        converged: false,
    };
    if !(best > 0.0) {
        out.q = q_best;
        out.converged = true;
        return Ok(out);
    }
    while out.evaluations <= settings.max_iterations {
        let scaled: Vec<f64> = q_best.iter().zip(&mu).map(|(q, m)| q * m).collect();
        let peak = scaled.iter().copied().fold(0.0, f64::max);
        if !(peak > 0.0) {
            out.converged = true;
            break;
        }
        let cand: Vec<f64> = scaled.iter().map(|s| q_ul * s / peak).collect();
        if cand
            .iter()
            .zip(&q_best)
            .all(|(a, b)| (a - b).abs() <= 1e-12 * q_ul)
        {
            out.converged = true;
            break;
        }
        let gains = eval.subgroup_gains(g, &cand)?;
        out.evaluations += 1;
        let (min, sinrs, se) = min_with_se(&gains, p, noise);
        let margin = if settings.common_random_numbers {
            0.0
        } else {
            2.0 * (se * se + best_se * best_se).sqrt()
        };
        if min > best + margin {
            best = min;
            best_se = se;
            q_best = cand;
            out.accepted += 1;
            out.min_sinr_trace.push(min);
            if settings.step_size == StepSize::Refresh {
                mu = step_sizes(&sinrs, min);
            }
        } else {
            out.converged = true;
            break;
        }
    }
    out.q = q_best;
    Ok(out)
}

/// Outcome of a feasibility check at a fixed SINR target.
#[derive(Debug, Clone, PartialEq)]
pub enum Feasibility {
    /// Componentwise-minimal power vector meeting every SINR constraint.
    Feasible {
        p: Vec<f64>,
        iterations: usize,
    },
    Infeasible {
        iterations: usize,
    },
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible { .. })
    }
}

const FIXED_POINT_TOL: f64 = 1e-10;
const FIXED_POINT_MAX_ITERS: usize = 10_000;
const DIVERGENCE_FACTOR: f64 = 10.0;

/// Minimal `p ≥ 0` with `p_g a_k ≥ Γ (Σ_c p_c b_kc + σ²)` for every user
/// and `Σ p ≤ P`, by fixed-point iteration from `p = 0`. Iterates increase
/// monotonically towards the minimal solution, so exceeding the budget at
/// any step proves infeasibility.
pub fn feasibility_check(gamma: f64, gains: &GainTable, p_dl: f64) -> Feasibility {
    let g_count = gains.n_subgroups();
    if gamma <= 0.0 {
        return Feasibility::Feasible {
            p: vec![0.0; g_count],
            iterations: 0,
        };
    }
    if gains.a.iter().any(|&a| !(a > 0.0)) {
        return Feasibility::Infeasible { iterations: 0 };
    }
    let mut p = vec![0.0; g_count];
    let mut next = vec![0.0; g_count];
    for it in 1..=FIXED_POINT_MAX_ITERS {
        next.iter_mut().for_each(|x| *x = 0.0);
        for (k, &g) in gains.subgroup_of_user.iter().enumerate() {
            let interference: f64 = gains.b[k].iter().zip(&p).map(|(b, p)| b * p).sum();
            let need = gamma * (interference + gains.noise_power) / gains.a[k];
            if need > next[g] {
                next[g] = need;
            }
        }
        let total: f64 = next.iter().sum();
        if total > p_dl * (1.0 + 1e-12)
            || next
                .iter()
                .any(|&x| x > DIVERGENCE_FACTOR * p_dl || !x.is_finite())
        {
            return Feasibility::Infeasible { iterations: it };
        }
        let change = next
            .iter()
            .zip(&p)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let scale = next.iter().copied().fold(0.0, f64::max);
        std::mem::swap(&mut p, &mut next);
        if change <= FIXED_POINT_TOL * scale {
            return Feasibility::Feasible { p, iterations: it };
        }
    }
    Feasibility::Infeasible {
        iterations: FIXED_POINT_MAX_ITERS,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterOutcome {
    /// DL powers, scaled to spend the whole budget.
    pub p: Vec<f64>,
    /// Largest SINR target proven feasible.
    pub gamma_star: f64,
    pub bisection_steps: usize,
    /// Set when some user has `a = 0`, making every positive target infeasible.
    pub degenerate: bool,
}

/// Max-min DL power control by bisection on the common SINR target.
///
/// The minimal power vector of the last feasible target is scaled up to use
/// the full budget, which can only raise every SINR.
pub fn inter_subgroup_mmf(gains: &GainTable, p_dl: f64, epsilon: f64) -> Result<InterOutcome> {
    gains.validate()?;
    if !(epsilon > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "bisection tolerance {epsilon} must be positive"
        )));
    }
    let g_count = gains.n_subgroups();
    let uniform = vec![p_dl / g_count as f64; g_count];
    if gains.a.contains(&0.0) {
        log::warn!("user with zero useful gain; returning uniform DL powers");
        return Ok(InterOutcome {
            p: uniform,
            gamma_star: 0.0,
            bisection_steps: 0,
            degenerate: true,
        });
    }
    let (mut lo, mut hi) = (
        0.0,
        gains
            .a
            .iter()
            .map(|a| p_dl * a / gains.noise_power)
            .fold(f64::INFINITY, f64::min),
    );
    let mut best = uniform;
    let mut steps = 0;
    while hi - lo > epsilon {
        let mid = 0.5 * (lo + hi);
        steps += 1;
        match feasibility_check(mid, gains, p_dl) {
            Feasibility::Feasible { p, .. } => {
                lo = mid;
                best = p;
            }
            Feasibility::Infeasible { .. } => hi = mid,
        }
    }
    let total: f64 = best.iter().sum();
    if total > 0.0 {
        best.iter_mut().for_each(|x| *x *= p_dl / total);
    }
    Ok(InterOutcome {
        p: best,
        gamma_star: lo,
        bisection_steps: steps,
        degenerate: false,
    })
}
