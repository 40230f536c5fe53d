//! Uplink training with one shared pilot per subgroup and MMSE estimation.
//!
//! Pilots of distinct subgroups are mutually orthogonal, so after
//! despreading each subgroup sees only its own users plus noise:
//! `y_g = τ_p Σ_{k∈K_g} √q_k h_k + n`. The matrix
//! `C_g = τ_p Σ_j q_j R_j + σ² I` is factorized once per subgroup and shared
//! by all of its users.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::{hermitize, matmul, HpdFactor};
use crate::rng::complex_normal;
use crate::{CMatrix, CVector, Error, Result, C64};

/// Variance convention for the despread pilot noise.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PilotNoiseConvention {
    /// `n ~ CN(0, τ_p σ² I)`; the estimator regularizer is `σ²`.
    #[default]
    Despread,
    /// `n ~ CN(0, σ² I)`; the estimator regularizer becomes `σ² / τ_p` so
    /// the estimate stays MMSE.
    PerSample,
}

impl PilotNoiseConvention {
    /// Variance of each entry of the despread noise vector.
    pub fn pilot_noise_variance(self, noise_power: f64, tau_p: usize) -> f64 {
        match self {
            PilotNoiseConvention::Despread => tau_p as f64 * noise_power,
            PilotNoiseConvention::PerSample => noise_power,
        }
    }

    /// The `σ²` that appears in `C_g = τ_p Σ q R + σ² I`.
    pub fn estimator_noise(self, noise_power: f64, tau_p: usize) -> f64 {
        match self {
            PilotNoiseConvention::Despread => noise_power,
            PilotNoiseConvention::PerSample => noise_power / tau_p as f64,
        }
    }
}

/// Pilot assignment and pilot powers for a partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PilotPlan {
    pub tau_p: usize,
    pub pilot_of_subgroup: Vec<usize>,
    /// Pilot power per user (W).
    pub q: Vec<f64>,
}

impl PilotPlan {
    /// One pilot per subgroup, `τ_p = G`, pilot `g` for subgroup `g`.
    pub fn new(n_subgroups: usize, q: Vec<f64>) -> Self {
        PilotPlan {
            tau_p: n_subgroups,
            pilot_of_subgroup: (0..n_subgroups).collect(),
            q,
        }
    }

    pub fn validate(&self, q_max: f64) -> Result<()> {
        let g = self.pilot_of_subgroup.len();
        let mut seen = vec![false; self.tau_p];
        for &p in &self.pilot_of_subgroup {
            if p >= self.tau_p || std::mem::replace(&mut seen[p], true) {
                return Err(Error::InvalidConfig(format!(
                    "pilot indices must be distinct and below tau_p={} (G={g})",
                    self.tau_p
                )));
            }
        }
        if let Some(q) = self
            .q
            .iter()
            .find(|&&q| !(0.0..=q_max * (1.0 + 1e-12)).contains(&q))
        {
            return Err(Error::InvalidConfig(format!(
                "pilot power {q} outside [0, {q_max}]"
            )));
        }
        Ok(())
    }
}

/// Despread pilot observation of one subgroup, given pre-drawn CN(0, I)
/// noise `unit_noise`.
pub fn received_pilot_with_noise(
    channels: &[&CVector],
    q: &[f64],
    tau_p: usize,
    noise_variance: f64,
    unit_noise: &CVector,
) -> CVector {
    let mut y = unit_noise * C64::new(noise_variance.sqrt(), 0.0);
    for (h, &qk) in channels.iter().zip(q) {
        y.axpy(
            C64::new(tau_p as f64 * qk.sqrt(), 0.0),
            h,
            C64::new(1.0, 0.0),
        );
    }
    y
}

/// Despread pilot observation `τ_p Σ √q_j h_j + n` of one subgroup, with
/// `n ~ CN(0, noise_variance · I)`. Identical for every user of the subgroup.
pub fn received_pilot<R: Rng + ?Sized>(
    channels: &[&CVector],
    q: &[f64],
    tau_p: usize,
    noise_variance: f64,
    rng: &mut R,
) -> CVector {
    let m = channels.first().map_or(0, |h| h.len());
    let noise = CVector::from_fn(m, |_, _| complex_normal(rng));
    received_pilot_with_noise(channels, q, tau_p, noise_variance, &noise)
}

/// MMSE estimator state for one subgroup at fixed pilot powers.
pub struct SubgroupEstimator {
    tau_p: usize,
    q: Vec<f64>,
    /// `C⁻¹`.
    c_inv: CMatrix,
    /// `τ_p (Σ q R) C⁻¹`, maps the observation to the composite estimate.
    composite: CMatrix,
}

impl SubgroupEstimator {
    /// `covariances` and `q` list the subgroup members in the same order;
    /// `noise` is the `σ²` of `C_g`.
    pub fn new(covariances: &[&CMatrix], q: &[f64], tau_p: usize, noise: f64) -> Result<Self> {
        if !(noise > 0.0) {
            return Err(Error::NonPositiveNoise(noise));
        }
        let m = covariances.first().map_or(0, |r| r.nrows());
        let mut weighted = CMatrix::zeros(m, m);
        for (r, &qk) in covariances.iter().zip(q) {
            weighted += *r * C64::new(qk, 0.0);
        }
        let c = &weighted * C64::new(tau_p as f64, 0.0)
            + CMatrix::identity(m, m) * C64::new(noise, 0.0);
        let c_inv = HpdFactor::new(c)?.inverse();
        let composite = matmul(&weighted, &c_inv) * C64::new(tau_p as f64, 0.0);
        Ok(SubgroupEstimator {
            tau_p,
            q: q.to_vec(),
            c_inv,
            composite,
        })
    }

    /// `ĥ_k = √q_k R_k C⁻¹ y` for member `idx` with covariance `r`.
    pub fn user_estimate(&self, idx: usize, r: &CMatrix, y: &CVector) -> CVector {
        r * (&self.c_inv * y) * C64::new(self.q[idx].sqrt(), 0.0)
    }

    /// `R̃_k = R_k − q_k τ_p R_k C⁻¹ R_k`.
    pub fn error_correlation(&self, idx: usize, r: &CMatrix) -> CMatrix {
        let x = matmul(&matmul(r, &self.c_inv), r);
        hermitize(&(r - x * C64::new(self.q[idx] * self.tau_p as f64, 0.0)))
    }

    /// `tr R̃_k`, without forming `R̃_k`.
    pub fn error_trace(&self, idx: usize, r: &CMatrix) -> f64 {
        // tr(R C⁻¹ R) = Σ_ij (R C⁻¹)_ij conj(R_ij) for Hermitian R.
        let rc = matmul(r, &self.c_inv);
        let reduction: f64 = rc
            .iter()
            .zip(r.iter())
            .map(|(a, b)| (a * b.conj()).re)
            .sum();
        crate::linalg::trace_re(r) - self.q[idx] * self.tau_p as f64 * reduction
    }

    /// `ĥ_g = τ_p (Σ q R) C⁻¹ y`.
    pub fn composite_estimate(&self, y: &CVector) -> CVector {
        &self.composite * y
    }

    /// Composite estimation matrix `τ_p (Σ q R) C⁻¹`.
    pub fn composite_matrix(&self) -> &CMatrix {
        &self.composite
    }
}

/// MMSE estimate of member `idx` of a subgroup from the shared observation.
pub fn mmse_estimate(
    y: &CVector,
    idx: usize,
    covariances: &[&CMatrix],
    q: &[f64],
    tau_p: usize,
    noise: f64,
) -> Result<CVector> {
    let est = SubgroupEstimator::new(covariances, q, tau_p, noise)?;
    Ok(est.user_estimate(idx, covariances[idx], y))
}

/// Estimation-error correlation of member `idx`.
pub fn error_correlation(
    idx: usize,
    covariances: &[&CMatrix],
    q: &[f64],
    tau_p: usize,
    noise: f64,
) -> Result<CMatrix> {
    let est = SubgroupEstimator::new(covariances, q, tau_p, noise)?;
    Ok(est.error_correlation(idx, covariances[idx]))
}

/// Composite MMSE estimate of a subgroup.
pub fn composite_estimate(
    y: &CVector,
    covariances: &[&CMatrix],
    q: &[f64],
    tau_p: usize,
    noise: f64,
) -> Result<CVector> {
    Ok(SubgroupEstimator::new(covariances, q, tau_p, noise)?.composite_estimate(y))
}

/// Per-user estimates, error correlations and composite estimates of every
/// subgroup for one coherence block.
#[derive(Debug, Clone)]
pub struct EstimateSet {
    pub user_estimates: Vec<CVector>,
    pub error_correlations: Vec<CMatrix>,
    pub composite: Vec<CVector>,
}

/// Runs uplink training for one coherence block. `members[g]` lists the
/// users of subgroup `g`, `channels[k]` is the true channel of user `k`.
pub fn estimate_block<R: Rng + ?Sized>(
    covariances: &[CMatrix],
    members: &[Vec<usize>],
    plan: &PilotPlan,
    noise_power: f64,
    convention: PilotNoiseConvention,
    channels: &[CVector],
    rng: &mut R,
) -> Result<EstimateSet> {
    let k_total = covariances.len();
    let m = covariances.first().map_or(0, |r| r.nrows());
    let mut user_estimates = vec![CVector::zeros(m); k_total];
    let mut error_correlations = vec![CMatrix::zeros(m, m); k_total];
    let mut composite = Vec::with_capacity(members.len());
    let pilot_var = convention.pilot_noise_variance(noise_power, plan.tau_p);
    let est_noise = convention.estimator_noise(noise_power, plan.tau_p);
    for group in members {
        let covs: Vec<&CMatrix> = group.iter().map(|&k| &covariances[k]).collect();
        let q: Vec<f64> = group.iter().map(|&k| plan.q[k]).collect();
        let hs: Vec<&CVector> = group.iter().map(|&k| &channels[k]).collect();
        let y = received_pilot(&hs, &q, plan.tau_p, pilot_var, rng);
        let est = SubgroupEstimator::new(&covs, &q, plan.tau_p, est_noise)?;
        for (idx, &k) in group.iter().enumerate() {
            user_estimates[k] = est.user_estimate(idx, covs[idx], &y);
            error_correlations[k] = est.error_correlation(idx, covs[idx]);
        }
        composite.push(est.composite_estimate(&y));
    }
    Ok(EstimateSet {
        user_estimates,
        error_correlations,
        composite,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel_model::{local_scattering_covariance, AngularModel};
    use crate::linalg::{frobenius, trace_re};
    use crate::rng::stream;

    fn cov(angle: f64, beta: f64, m: usize) -> CMatrix {
        local_scattering_covariance(
            angle,
            0.2,
            beta,
            m,
            0.5,
            AngularModel::IntegralGaussian,
            &mut stream(0, &[]),
        )
        .unwrap()
    }

    fn random_vec(m: usize, seed: u64) -> CVector {
        let mut r = stream(seed, &[]);
        CVector::from_fn(m, |_, _| complex_normal(&mut r))
    }

    #[test]
    fn received_pilot_cases() {
        let h1 = random_vec(4, 1);
        let y = received_pilot(&[&h1], &[0.3], 3, 0.0, &mut stream(2, &[]));
        assert!((y - &h1 * C64::new(3.0 * 0.3f64.sqrt(), 0.0)).norm() < 1e-12);

        let h2 = -&h1;
        let y = received_pilot(&[&h1, &h2], &[0.5, 0.5], 2, 0.0, &mut stream(2, &[]));
        assert!(y.norm() < 1e-12);

        let noise = random_vec(4, 9);
        let y = received_pilot_with_noise(&[&h1, &h2], &[0.0, 0.0], 2, 4.0, &noise);
        assert!((y - &noise * C64::new(2.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn zero_power_user_has_no_estimate() {
        let r1 = cov(0.3, 1.0, 4);
        let r2 = cov(0.5, 2.0, 4);
        let y = random_vec(4, 3);
        let h = mmse_estimate(&y, 0, &[&r1, &r2], &[0.0, 1.0], 2, 0.1).unwrap();
        assert!(h.norm() == 0.0);
        let e = error_correlation(0, &[&r1, &r2], &[0.0, 1.0], 2, 0.1).unwrap();
        assert!(frobenius(&(e - &r1)) < 1e-14);
        let z = composite_estimate(&y, &[&r1, &r2], &[0.0, 0.0], 2, 0.1).unwrap();
        assert!(z.norm() == 0.0);
    }

    #[test]
    fn scalar_oracle_for_white_covariance() {
        let (beta, q, tau_p, s2) = (0.7, 0.4, 3, 0.2);
        let r = CMatrix::identity(5, 5) * C64::new(beta, 0.0);
        let y = random_vec(5, 4);
        let h = mmse_estimate(&y, 0, &[&r], &[q], tau_p, s2).unwrap();
        let scale = q.sqrt() * beta / (tau_p as f64 * q * beta + s2);
        assert!((h - &y * C64::new(scale, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn non_positive_noise_rejected() {
        let r = CMatrix::identity(2, 2);
        assert!(matches!(
            SubgroupEstimator::new(&[&r], &[1.0], 1, 0.0),
            Err(Error::NonPositiveNoise(_))
        ));
    }

    #[test]
    fn huge_pilot_power_gives_perfect_estimate() {
        let r = cov(0.2, 1.0, 4) + CMatrix::identity(4, 4) * C64::new(0.1, 0.0);
        let e = error_correlation(0, &[&r], &[1e9], 1, 1.0).unwrap();
        assert!(frobenius(&e) <= 1e-6 * frobenius(&r));
    }

    #[test]
    fn composite_identity() {
        let r1 = cov(0.3, 1.0, 2);
        let r2 = cov(1.1, 0.5, 2);
        let covs = [&r1, &r2];
        let q = [0.8, 0.3];
        let tau_p = 3;
        for seed in 0..10 {
            let y = random_vec(2, seed);
            let composite = composite_estimate(&y, &covs, &q, tau_p, 0.05).unwrap();
            let mut sum = CVector::zeros(2);
            for k in 0..2 {
                sum += mmse_estimate(&y, k, &covs, &q, tau_p, 0.05).unwrap()
                    * C64::new(tau_p as f64 * q[k].sqrt(), 0.0);
            }
            assert!((&composite - &sum).norm() <= 1e-10 * sum.norm());
        }
        // Single-user subgroup: ĥ_g = τ_p √q ĥ_k.
        let y = random_vec(2, 99);
        let c = composite_estimate(&y, &[&r1], &[0.6], 2, 0.1).unwrap();
        let u = mmse_estimate(&y, 0, &[&r1], &[0.6], 2, 0.1).unwrap();
        assert!((c - u * C64::new(2.0 * 0.6f64.sqrt(), 0.0)).norm() < 1e-12);
    }

    #[test]
    fn error_trace_decreases_with_power() {
        let r1 = cov(0.3, 1.0, 6);
        let r2 = cov(0.4, 0.8, 6);
        let mut last = f64::INFINITY;
        for q in [0.0, 0.01, 0.1, 0.5, 1.0, 5.0] {
            let t = trace_re(&error_correlation(0, &[&r1, &r2], &[q, 0.5], 2, 0.1).unwrap());
            let est = SubgroupEstimator::new(&[&r1, &r2], &[q, 0.5], 2, 0.1).unwrap();
            assert!((est.error_trace(0, &r1) - t).abs() < 1e-12);
            assert!(t <= last + 1e-12);
            assert!(t <= trace_re(&r1) + 1e-12);
            last = t;
        }
    }

    #[test]
    fn pilot_plan_validation() {
        let plan = PilotPlan::new(3, vec![0.1, 0.05, 0.0]);
        plan.validate(0.1).unwrap();
        assert!(PilotPlan::new(3, vec![0.2]).validate(0.1).is_err());
        let dup = PilotPlan {
            tau_p: 2,
            pilot_of_subgroup: vec![1, 1],
            q: vec![],
        };
        assert!(dup.validate(1.0).is_err());
    }

    #[test]
    fn conventions() {
        let c = PilotNoiseConvention::Despread;
        assert_eq!(c.pilot_noise_variance(2.0, 4), 8.0);
        assert_eq!(c.estimator_noise(2.0, 4), 2.0);
        let c = PilotNoiseConvention::PerSample;
        assert_eq!(c.pilot_noise_variance(2.0, 4), 2.0);
        assert_eq!(c.estimator_noise(2.0, 4), 0.5);
    }
}
