//! Monte-Carlo gain tables, SINR and spectral efficiency.
//!
//! Expectations over small-scale fading and pilot noise are replaced by
//! averages over `n_mc` coherence blocks. The blocks live in a [`BlockBank`]
//! so every strategy and every pilot-search iteration of a snapshot sees the
//! same random numbers.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel_model::SpatialCovariance;
use crate::estimation::{PilotNoiseConvention, SubgroupEstimator};
use crate::linalg::{matmul, sampling_factor};
use crate::precoding::{zf_precoders, PrecoderScheme, Regularization};
use crate::rng::{self, complex_normal};
use crate::subgrouping::Partition;
use crate::{CMatrix, CVector, Error, Result, C64};

/// Channel and pilot-noise draws for `n_mc` coherence blocks.
#[derive(Debug, Clone)]
pub struct BlockBank {
    n_mc: usize,
    /// `channels[k]` is M × n_mc; column `t` is user `k`'s channel in block `t`.
    channels: Vec<CMatrix>,
    /// `pilot_noise[i]` is M × n_mc of CN(0, 1) entries for pilot `i`.
    pilot_noise: Vec<CMatrix>,
}

impl BlockBank {
    pub fn from_parts(channels: Vec<CMatrix>, pilot_noise: Vec<CMatrix>) -> Result<Self> {
        let n_mc = channels
            .first()
            .or(pilot_noise.first())
            .map_or(0, |c| c.ncols());
        let m = channels.first().map_or(0, |c| c.nrows());
        if channels
            .iter()
            .chain(&pilot_noise)
            .any(|c| c.ncols() != n_mc || c.nrows() != m)
        {
            return Err(Error::InvalidConfig("block bank shapes disagree".into()));
        }
        Ok(BlockBank {
            n_mc,
            channels,
            pilot_noise,
        })
    }

    /// Draws channels from `channel_rng` (user by user) and unit pilot
    /// noise for `n_pilots` pilots from `noise_rng`.
    pub fn draw<R: Rng + ?Sized>(
        covariances: &[SpatialCovariance],
        n_mc: usize,
        n_pilots: usize,
        channel_rng: &mut R,
        noise_rng: &mut R,
    ) -> Result<Self> {
        let m = covariances.first().map_or(0, |c| c.n_antennas());
        let channels = covariances
            .iter()
            .map(|c| {
                let l = sampling_factor(&c.matrix)?;
                let z = CMatrix::from_fn(l.ncols(), n_mc, |_, _| complex_normal(channel_rng));
                Ok(matmul(&l, &z))
            })
            .collect::<Result<Vec<_>>>()?;
        let pilot_noise = (0..n_pilots)
            .map(|_| CMatrix::from_fn(m, n_mc, |_, _| complex_normal(noise_rng)))
            .collect();
        Ok(BlockBank {
            n_mc,
            channels,
            pilot_noise,
        })
    }

    /// Bank for snapshot `index` of a campaign seeded with `seed`.
    pub fn for_snapshot(
        covariances: &[SpatialCovariance],
        n_mc: usize,
        n_pilots: usize,
        seed: u64,
        index: u64,
    ) -> Result<Self> {
        Self::draw(
            covariances,
            n_mc,
            n_pilots,
            &mut rng::stream(seed, &[index, rng::tag::CHANNELS]),
            &mut rng::stream(seed, &[index, rng::tag::PILOT_NOISE]),
        )
    }

    pub fn n_mc(&self) -> usize {
        self.n_mc
    }

    pub fn n_users(&self) -> usize {
        self.channels.len()
    }

    pub fn n_pilots(&self) -> usize {
        self.pilot_noise.len()
    }

    pub fn channels(&self, user: usize) -> &CMatrix {
        &self.channels[user]
    }

    pub fn pilot_noise(&self, pilot: usize) -> &CMatrix {
        &self.pilot_noise[pilot]
    }
}

/// Precoder and pilot-noise choices for the estimation → precoding chain.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ChainSettings {
    pub scheme: PrecoderScheme,
    pub convention: PilotNoiseConvention,
}

/// Gain statistics of one user against every subgroup precoder.
#[derive(Debug, Clone, PartialEq)]
pub struct UserGains {
    pub subgroup: usize,
    pub a: f64,
    pub b: Vec<f64>,
    pub a_std_err: f64,
    pub b_std_err: Vec<f64>,
}

impl UserGains {
    pub fn sinr(&self, p: &[f64], noise_power: f64) -> f64 {
        sinr_terms(p, self.subgroup, self.a, &self.b, noise_power)
    }

    /// Standard error of [`UserGains::sinr`] from the uncertainty of `a`.
    pub fn sinr_std_err(&self, p: &[f64], noise_power: f64) -> f64 {
        let den: f64 = self.b.iter().zip(p).map(|(b, p)| b * p).sum::<f64>() + noise_power;
        p[self.subgroup] * self.a_std_err / den
    }
}

fn sinr_terms(p: &[f64], g: usize, a: f64, b: &[f64], noise_power: f64) -> f64 {
    let interference: f64 = b.iter().zip(p).map(|(b, p)| b * p).sum();
    p[g] * a / (interference + noise_power)
}

/// The coefficients `a_gk`, `b_gkc` of the SINR expression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainTable {
    /// `a[k] = |E{h_kᴴ w_g(k)}|²`.
    pub a: Vec<f64>,
    /// `b[k][c] = E{|h_kᴴ w_c|²}` for `c ≠ g(k)`, the variance for `c = g(k)`.
    pub b: Vec<Vec<f64>>,
    #[serde(default)]
    pub a_std_err: Vec<f64>,
    #[serde(default)]
    pub b_std_err: Vec<Vec<f64>>,
    #[serde(default)]
    pub n_mc: usize,
    pub noise_power: f64,
    pub subgroup_of_user: Vec<usize>,
}

impl GainTable {
    /// Table without Monte-Carlo metadata (oracles, hand-written inputs).
    pub fn new(
        a: Vec<f64>,
        b: Vec<Vec<f64>>,
        noise_power: f64,
        subgroup_of_user: Vec<usize>,
    ) -> Result<Self> {
        let t = GainTable {
            a,
            b,
            a_std_err: Vec::new(),
            b_std_err: Vec::new(),
            n_mc: 0,
            noise_power,
            subgroup_of_user,
        };
        t.validate()?;
        Ok(t)
    }

    fn from_users(users: Vec<UserGains>, n_mc: usize, noise_power: f64) -> Self {
        GainTable {
            a: users.iter().map(|u| u.a).collect(),
            a_std_err: users.iter().map(|u| u.a_std_err).collect(),
            subgroup_of_user: users.iter().map(|u| u.subgroup).collect(),
            b_std_err: users.iter().map(|u| u.b_std_err.clone()).collect(),
            b: users.into_iter().map(|u| u.b).collect(),
            n_mc,
            noise_power,
        }
    }

    pub fn n_users(&self) -> usize {
        self.a.len()
    }

    pub fn n_subgroups(&self) -> usize {
        self.b.first().map_or(0, Vec::len)
    }

    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut m = vec![Vec::new(); self.n_subgroups()];
        for (k, &g) in self.subgroup_of_user.iter().enumerate() {
            m[g].push(k);
        }
        m
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.a.len();
        let g = self.n_subgroups();
        if self.b.len() != k
            || self.subgroup_of_user.len() != k
            || self.b.iter().any(|r| r.len() != g)
        {
            return Err(Error::InvalidConfig(
                "gain table dimensions disagree".into(),
            ));
        }
        if !(self.noise_power > 0.0) {
            return Err(Error::NonPositiveNoise(self.noise_power));
        }
        if self
            .a
            .iter()
            .chain(self.b.iter().flatten())
            .any(|v| !v.is_finite() || *v < 0.0)
        {
            return Err(Error::InvalidConfig(
                "gain table entries must be finite and nonnegative".into(),
            ));
        }
        Partition::new(self.subgroup_of_user.clone(), g)?;
        Ok(())
    }

    /// `γ_k = p_g a_k / (Σ_c p_c b_kc + σ²)`.
    pub fn sinr(&self, p: &[f64], user: usize) -> f64 {
        sinr_terms(
            p,
            self.subgroup_of_user[user],
            self.a[user],
            &self.b[user],
            self.noise_power,
        )
    }

    pub fn sinrs(&self, p: &[f64]) -> Vec<f64> {
        (0..self.n_users()).map(|k| self.sinr(p, k)).collect()
    }

    pub fn min_sinr(&self, p: &[f64]) -> f64 {
        self.sinrs(p).into_iter().fold(f64::INFINITY, f64::min)
    }
}

/// Running sums of `x = h_kᴴ w_c` over blocks.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    s1: C64,
    s2: f64,
    s4: f64,
}

impl Moments {
    fn push(&mut self, x: C64) {
        let p = x.norm_sqr();
        self.s1 += x;
        self.s2 += p;
        self.s4 += p * p;
    }

    /// `(|mean|², se of |mean|², mean |x|², se of mean |x|²)`.
    fn finish(&self, n: usize) -> (f64, f64, f64, f64) {
        let n = n as f64;
        let mean = self.s1 / n;
        let m2 = self.s2 / n;
        let var_x = (m2 - mean.norm_sqr()).max(0.0);
        let se_mean = (var_x / (n - 1.0).max(1.0)).sqrt();
        let var_p = (self.s4 / n - m2 * m2).max(0.0);
        (
            mean.norm_sqr(),
            2.0 * mean.norm() * se_mean,
            m2,
            (var_p / (n - 1.0).max(1.0)).sqrt(),
        )
    }
}

/// Estimation → precoding → gain chain of one snapshot and partition, with
/// composite estimates and precoders cached per subgroup.
pub struct ChainEvaluator<'a> {
    bank: &'a BlockBank,
    covariances: &'a [SpatialCovariance],
    members: Vec<Vec<usize>>,
    subgroup_of_user: Vec<usize>,
    q: Vec<f64>,
    noise_power: f64,
    settings: ChainSettings,
    /// Per subgroup, M × n_mc unit-norm precoders.
    precoders: Vec<CMatrix>,
    /// Per subgroup, M × n_mc composite estimates.
    composite: Vec<CMatrix>,
    /// `moments[k][c]`: statistics of user `k` against the cached precoders of `c`.
    moments: Vec<Vec<Moments>>,
}

impl<'a> ChainEvaluator<'a> {
    pub fn new(
        bank: &'a BlockBank,
        covariances: &'a [SpatialCovariance],
        partition: &Partition,
        q: &[f64],
        noise_power: f64,
        settings: ChainSettings,
    ) -> Result<Self> {
        partition.validate()?;
        let k = covariances.len();
        if partition.n_users() != k || q.len() != k || bank.n_users() != k {
            return Err(Error::InvalidConfig(format!(
                "chain inputs disagree on the number of users ({k})"
            )));
        }
        if bank.n_pilots() < partition.n_subgroups {
            return Err(Error::InvalidConfig(format!(
                "block bank has {} pilots, partition needs {}",
                bank.n_pilots(),
                partition.n_subgroups
            )));
        }
        if bank.n_mc() < 2 {
            return Err(Error::InvalidConfig("n_mc must be at least 2".into()));
        }
        let mut eval = ChainEvaluator {
            bank,
            covariances,
            members: partition.members(),
            subgroup_of_user: partition.subgroup_of_user.clone(),
            q: q.to_vec(),
            noise_power,
            settings,
            precoders: Vec::new(),
            composite: Vec::new(),
            moments: vec![vec![Moments::default(); partition.n_subgroups]; k],
        };
        eval.composite = (0..eval.n_subgroups())
            .map(|g| {
                let qg: Vec<f64> = eval.members[g].iter().map(|&u| q[u]).collect();
                eval.composite_for(g, &qg)
            })
            .collect::<Result<_>>()?;
        eval.precoders = eval.all_precoders(&eval.composite.iter().collect::<Vec<_>>())?;
        eval.refresh_moments(0..eval.n_subgroups());
        Ok(eval)
    }

    pub fn n_subgroups(&self) -> usize {
        self.members.len()
    }

    pub fn members(&self) -> &[Vec<usize>] {
        &self.members
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn noise_power(&self) -> f64 {
        self.noise_power
    }

    pub fn covariances(&self) -> &[SpatialCovariance] {
        self.covariances
    }

    pub fn settings(&self) -> ChainSettings {
        self.settings
    }

    fn tau_p(&self) -> usize {
        self.n_subgroups()
    }

    /// Composite estimates of subgroup `g` in every block for member powers `qg`.
    fn composite_for(&self, g: usize, qg: &[f64]) -> Result<CMatrix> {
        let tau_p = self.tau_p();
        let conv = self.settings.convention;
        let covs: Vec<&CMatrix> = self.members[g]
            .iter()
            .map(|&u| &self.covariances[u].matrix)
            .collect();
        let est = SubgroupEstimator::new(
            &covs,
            qg,
            tau_p,
            conv.estimator_noise(self.noise_power, tau_p),
        )?;
        let pilot_std = conv.pilot_noise_variance(self.noise_power, tau_p).sqrt();
        let mut y = &self.bank.pilot_noise[g] * C64::new(pilot_std, 0.0);
        for (&u, &qk) in self.members[g].iter().zip(qg) {
            let scale = tau_p as f64 * qk.sqrt();
            y.zip_apply(&self.bank.channels[u], |acc, h| *acc += h * scale);
        }
        Ok(matmul(est.composite_matrix(), &y))
    }

    fn mr_precoders(g: usize, composite: &CMatrix) -> Result<CMatrix> {
        let mut w = composite.clone();
        for mut col in w.column_iter_mut() {
            let n = col.norm();
            if !(n > 0.0) || !n.is_finite() {
                return Err(Error::ZeroEstimate(g));
            }
            col.unscale_mut(n);
        }
        Ok(w)
    }

    fn zf_all(composite: &[&CMatrix]) -> Result<Vec<CMatrix>> {
        let (m, n) = composite[0].shape();
        let mut out = vec![CMatrix::zeros(m, n); composite.len()];
        for t in 0..n {
            let est: Vec<CVector> = composite.iter().map(|c| c.column(t).into_owned()).collect();
            let w = zf_precoders(&est, Regularization::Auto)?;
            for (o, v) in out.iter_mut().zip(w) {
                o.set_column(t, &v);
            }
        }
        Ok(out)
    }

    fn all_precoders(&self, composite: &[&CMatrix]) -> Result<Vec<CMatrix>> {
        match self.settings.scheme {
            PrecoderScheme::Mr => composite
                .iter()
                .enumerate()
                .map(|(g, c)| Self::mr_precoders(g, c))
                .collect(),
            PrecoderScheme::Zf => Self::zf_all(composite),
        }
    }

    /// Moments of `h_userᴴ w` over the blocks, for one precoder matrix `w`.
    fn moments(&self, user: usize, w: &CMatrix) -> Moments {
        let m = w.nrows();
        let h = self.bank.channels[user].as_slice();
        let mut mom = Moments::default();
        for (hc, wc) in h.chunks_exact(m).zip(w.as_slice().chunks_exact(m)) {
            let x = hc
                .iter()
                .zip(wc)
                .fold(C64::new(0.0, 0.0), |acc, (a, b)| acc + a.conj() * b);
            mom.push(x);
        }
        mom
    }

    fn user_gains(&self, user: usize, moments: &[Moments]) -> UserGains {
        let n = self.bank.n_mc;
        let g = self.subgroup_of_user[user];
        let g_count = moments.len();
        let (mut b, mut b_se) = (vec![0.0; g_count], vec![0.0; g_count]);
        let (mut a, mut a_se) = (0.0, 0.0);
        for (c, mom) in moments.iter().enumerate() {
            let (mean_sq, mean_sq_se, m2, m2_se) = mom.finish(n);
            if c == g {
                a = mean_sq;
                a_se = mean_sq_se;
                b[c] = (m2 - mean_sq).max(0.0);
                b_se[c] = (m2_se * m2_se + mean_sq_se * mean_sq_se).sqrt();
            } else {
                b[c] = m2;
                b_se[c] = m2_se;
            }
        }
        UserGains {
            subgroup: g,
            a,
            b,
            a_std_err: a_se,
            b_std_err: b_se,
        }
    }

    fn refresh_moments(&mut self, columns: std::ops::Range<usize>) {
        for k in 0..self.covariances.len() {
            for c in columns.clone() {
                self.moments[k][c] = self.moments(k, &self.precoders[c]);
            }
        }
    }

    /// Full gain table at the cached pilot powers.
    pub fn gain_table(&self) -> GainTable {
        let users = (0..self.covariances.len())
            .map(|k| self.user_gains(k, &self.moments[k]))
            .collect();
        GainTable::from_users(users, self.bank.n_mc, self.noise_power)
    }

    /// Gains of the members of subgroup `g` if its pilot powers were `qg`
    /// (members in ascending user order); the cache is left untouched.
    pub fn subgroup_gains(&self, g: usize, qg: &[f64]) -> Result<Vec<UserGains>> {
        let composite = self.composite_for(g, qg)?;
        match self.settings.scheme {
            PrecoderScheme::Mr => {
                let w = Self::mr_precoders(g, &composite)?;
                Ok(self.members[g]
                    .iter()
                    .map(|&u| {
                        let mut mom = self.moments[u].clone();
                        mom[g] = self.moments(u, &w);
                        self.user_gains(u, &mom)
                    })
                    .collect())
            }
            PrecoderScheme::Zf => {
                let comps: Vec<&CMatrix> = (0..self.n_subgroups())
                    .map(|c| {
                        if c == g {
                            &composite
                        } else {
                            &self.composite[c]
                        }
                    })
                    .collect();
                let w = Self::zf_all(&comps)?;
                Ok(self.members[g]
                    .iter()
                    .map(|&u| {
                        let mom: Vec<Moments> = w.iter().map(|wc| self.moments(u, wc)).collect();
                        self.user_gains(u, &mom)
                    })
                    .collect())
            }
        }
    }

    /// Commits pilot powers `qg` for subgroup `g`.
    pub fn set_subgroup_q(&mut self, g: usize, qg: &[f64]) -> Result<()> {
        let composite = self.composite_for(g, qg)?;
        for (&u, &qk) in self.members[g].iter().zip(qg) {
            self.q[u] = qk;
        }
        self.composite[g] = composite;
        match self.settings.scheme {
            PrecoderScheme::Mr => {
                self.precoders[g] = Self::mr_precoders(g, &self.composite[g])?;
                self.refresh_moments(g..g + 1);
            }
            PrecoderScheme::Zf => {
                self.precoders = Self::zf_all(&self.composite.iter().collect::<Vec<_>>())?;
                self.refresh_moments(0..self.n_subgroups());
            }
        }
        Ok(())
    }
}

/// Monte-Carlo gain table for a partition and pilot powers.
pub fn estimate_gains(
    bank: &BlockBank,
    covariances: &[SpatialCovariance],
    partition: &Partition,
    q: &[f64],
    noise_power: f64,
    settings: ChainSettings,
) -> Result<GainTable> {
    Ok(ChainEvaluator::new(bank, covariances, partition, q, noise_power, settings)?.gain_table())
}

/// `(1 − τ_p/τ) log₂(1 + γ)`.
pub fn spectral_efficiency(sinr: f64, tau_p: usize, tau: usize) -> Result<f64> {
    Ok(prelog(tau_p, tau)? * (1.0 + sinr.max(0.0)).log2())
}

pub fn prelog(tau_p: usize, tau: usize) -> Result<f64> {
    if tau_p >= tau {
        return Err(Error::PrelogOutOfRange { tau_p, tau });
    }
    Ok(1.0 - tau_p as f64 / tau as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralEfficiencyReport {
    pub se_user: Vec<f64>,
    pub se_subgroup: Vec<f64>,
    pub sum_se: f64,
    pub prelog: f64,
}

impl SpectralEfficiencyReport {
    pub fn min_user_se(&self) -> f64 {
        self.se_user.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Subgroup SE is the minimum over members; sum SE weights it by subgroup size.
pub fn aggregate_se(
    se_user: &[f64],
    partition: &Partition,
    prelog: f64,
) -> Result<SpectralEfficiencyReport> {
    if partition.n_users() != se_user.len() {
        return Err(Error::InvalidPartition(format!(
            "{} SE values for {} users",
            se_user.len(),
            partition.n_users()
        )));
    }
    partition.validate()?;
    let members = partition.members();
    let se_subgroup: Vec<f64> = members
        .iter()
        .map(|m| m.iter().map(|&k| se_user[k]).fold(f64::INFINITY, f64::min))
        .collect();
    let sum_se = members
        .iter()
        .zip(&se_subgroup)
        .map(|(m, s)| m.len() as f64 * s)
        .sum();
    Ok(SpectralEfficiencyReport {
        se_user: se_user.to_vec(),
        se_subgroup,
        sum_se,
        prelog,
    })
}

/// SE report for DL powers `p` over a gain table.
pub fn evaluate_se(gains: &GainTable, p: &[f64], tau: usize) -> Result<SpectralEfficiencyReport> {
    let tau_p = gains.n_subgroups();
    let pre = prelog(tau_p, tau)?;
    let se: Vec<f64> = gains
        .sinrs(p)
        .iter()
        .map(|&g| pre * (1.0 + g).log2())
        .collect();
    let partition = Partition::new(gains.subgroup_of_user.clone(), tau_p)?;
    aggregate_se(&se, &partition, pre)
}
