//! Shared oracles and fixtures for the integration tests.
#![allow(dead_code)]

use mmcast::channel_model::{local_scattering_covariance, AngularModel};
use mmcast::performance::GainTable;
use mmcast::{CMatrix, C64};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    mmcast::rng::stream(seed, &[0xC0FFEE])
}

/// Local-scattering covariance with a Gaussian angular spread.
pub fn covariance(angle: f64, asd: f64, beta: f64, m: usize) -> CMatrix {
    local_scattering_covariance(
        angle,
        asd,
        beta,
        m,
        0.5,
        AngularModel::IntegralGaussian,
        &mut rng(0),
    )
    .unwrap()
}

/// Covariance with a random nominal angle, spread and gain.
pub fn random_covariance<R: Rng>(rng: &mut R, m: usize) -> CMatrix {
    let angle = rng.random_range(0.2..std::f64::consts::PI - 0.2);
    let asd = rng.random_range(0.05..0.5);
    let beta = rng.random_range(0.2..2.0);
    covariance(angle, asd, beta, m)
}

/// Random gain table with `g` subgroups of 1..=4 users each.
pub fn random_gain_table<R: Rng>(rng: &mut R, g: usize) -> GainTable {
    let mut subgroup_of_user = Vec::new();
    for c in 0..g {
        for _ in 0..rng.random_range(1..=4) {
            subgroup_of_user.push(c);
        }
    }
    let k = subgroup_of_user.len();
    let a = (0..k).map(|_| rng.random_range(0.5..2.0)).collect();
    let b = (0..k)
        .map(|_| (0..g).map(|_| rng.random_range(0.0..0.3)).collect())
        .collect();
    GainTable::new(a, b, rng.random_range(0.05..0.5), subgroup_of_user).unwrap()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, objective: f64 },
    Infeasible,
    Unbounded,
}

/// Dense two-phase simplex with Bland's rule:
/// minimize `cᵀx` subject to `rows` and `x ≥ 0`.
pub fn simplex_min(c: &[f64], rows: &[(Vec<f64>, Sense, f64)]) -> LpOutcome {
    const EPS: f64 = 1e-11;
    let n = c.len();
    let m = rows.len();
    // Normalize to b ≥ 0.
    let rows: Vec<(Vec<f64>, Sense, f64)> = rows
        .iter()
        .map(|(a, s, b)| {
            if *b < 0.0 {
                let flipped = if *s == Sense::Le {
                    Sense::Ge
                } else {
                    Sense::Le
                };
                (a.iter().map(|x| -x).collect(), flipped, -b)
            } else {
                (a.clone(), *s, *b)
            }
        })
        .collect();
    let n_slack = m;
    let n_art = rows.iter().filter(|r| r.1 == Sense::Ge).count();
    let width = n + n_slack + n_art;
    let mut t = vec![vec![0.0; width + 1]; m];
    let mut basis = vec![0; m];
    let mut art = n + n_slack;
    for (i, (a, s, b)) in rows.iter().enumerate() {
        t[i][..n].copy_from_slice(a);
        t[i][width] = *b;
        match s {
            Sense::Le => {
                t[i][n + i] = 1.0;
                basis[i] = n + i;
            }
            Sense::Ge => {
                t[i][n + i] = -1.0;
                t[i][art] = 1.0;
                basis[i] = art;
                art += 1;
            }
        }
    }

    let run =
        |t: &mut Vec<Vec<f64>>, basis: &mut Vec<usize>, cost: &[f64], allowed: usize| -> bool {
            loop {
                let reduced: Vec<f64> = (0..allowed)
                    .map(|j| cost[j] - (0..m).map(|i| cost[basis[i]] * t[i][j]).sum::<f64>())
                    .collect();
                let Some(enter) = (0..allowed).find(|&j| reduced[j] < -EPS && !basis.contains(&j))
                else {
                    return true;
                };
                let mut leave = None;
                let mut best = f64::INFINITY;
                for i in 0..m {
                    if t[i][enter] > EPS {
                        let ratio = t[i][width] / t[i][enter];
                        if ratio < best - EPS
                            || (ratio <= best + EPS
                                && leave.is_some_and(|l: usize| basis[i] < basis[l]))
                        {
                            best = ratio;
                            leave = Some(i);
                        }
                    }
                }
                let Some(r) = leave else {
                    return false;
                };
                let piv = t[r][enter];
                t[r].iter_mut().for_each(|x| *x /= piv);
                for i in 0..m {
                    if i != r {
                        let f = t[i][enter];
                        if f != 0.0 {
                            for j in 0..=width {
                                t[i][j] -= f * t[r][j];
                            }
                        }
                    }
                }
                basis[r] = enter;
            }
        };

    if n_art > 0 {
        let mut phase1 = vec![0.0; width];
        phase1[n + n_slack..].iter_mut().for_each(|x| *x = 1.0);
        run(&mut t, &mut basis, &phase1, width);
        let infeas: f64 = (0..m)
            .filter(|&i| basis[i] >= n + n_slack)
            .map(|i| t[i][width])
            .sum();
        let scale = rows.iter().map(|r| r.2).fold(1.0, f64::max);
        if infeas > 1e-9 * scale {
            return LpOutcome::Infeasible;
        }
        // Drive zero-level artificials out of the basis where possible.
        for i in 0..m {
            if basis[i] >= n + n_slack {
                if let Some(j) = (0..n + n_slack).find(|&j| t[i][j].abs() > EPS) {
                    let piv = t[i][j];
                    t[i].iter_mut().for_each(|x| *x /= piv);
                    for r in 0..m {
                        if r != i {
                            let f = t[r][j];
                            for c in 0..=width {
                                t[r][c] -= f * t[i][c];
                            }
                        }
                    }
                    basis[i] = j;
                }
            }
        }
    }
    let mut cost = vec![0.0; width];
    cost[..n].copy_from_slice(c);
    if !run(&mut t, &mut basis, &cost, n + n_slack) {
        return LpOutcome::Unbounded;
    }
    let mut x = vec![0.0; n];
    for i in 0..m {
        if basis[i] < n {
            x[basis[i]] = t[i][width];
        }
    }
    let objective = c.iter().zip(&x).map(|(a, b)| a * b).sum();
    LpOutcome::Optimal { x, objective }
}

/// Minimal-sum DL powers meeting SINR target `gamma` within budget `p_dl`,
/// or `None` if the LP is infeasible.
pub fn lp_min_power(gamma: f64, gains: &GainTable, p_dl: f64) -> Option<Vec<f64>> {
    let g = gains.n_subgroups();
    let mut rows = Vec::new();
    for (k, &sg) in gains.subgroup_of_user.iter().enumerate() {
        let mut a: Vec<f64> = gains.b[k].iter().map(|b| -gamma * b).collect();
        a[sg] += gains.a[k];
        rows.push((a, Sense::Ge, gamma * gains.noise_power));
    }
    rows.push((vec![1.0; g], Sense::Le, p_dl));
    match simplex_min(&vec![1.0; g], &rows) {
        LpOutcome::Optimal { x, .. } => Some(x),
        _ => None,
    }
}

/// Best min-SINR over a uniform grid of full-budget splits for `G = 2`.
pub fn grid_max_min_g2(gains: &GainTable, p_dl: f64, points: usize) -> f64 {
    (0..=points)
        .map(|i| {
            let p1 = p_dl * i as f64 / points as f64;
            gains.min_sinr(&[p1, p_dl - p1])
        })
        .fold(0.0, f64::max)
}

pub fn relative_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

pub fn unit(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Worst disagreement between the fixed-point feasibility check and the LP
/// oracle over random instances with `G ≤ 5`, probing targets below, near
/// and above the bisection optimum.
#[derive(Debug, Clone, Copy)]
pub struct OracleAgreement {
    pub checks: usize,
    pub verdict_mismatches: usize,
    pub max_rel_p_err: f64,
}

pub fn feasibility_vs_lp(instances: usize, seed: u64) -> OracleAgreement {
    use mmcast::power_control::{feasibility_check, inter_subgroup_mmf, Feasibility};
    let mut rng = rng(seed);
    let mut out = OracleAgreement {
        checks: 0,
        verdict_mismatches: 0,
        max_rel_p_err: 0.0,
    };
    for i in 0..instances {
        let table = random_gain_table(&mut rng, 1 + i % 5);
        let p_dl = rng.random_range(0.5..5.0);
        let star = inter_subgroup_mmf(&table, p_dl, 1e-9).unwrap().gamma_star;
        for factor in [0.3, 0.9, 0.999, 1.001, 1.1] {
            let gamma = star * factor;
            out.checks += 1;
            match (
                feasibility_check(gamma, &table, p_dl),
                lp_min_power(gamma, &table, p_dl),
            ) {
                (Feasibility::Feasible { p, .. }, Some(lp)) => {
                    let scale = lp.iter().copied().fold(0.0, f64::max);
                    let err = p
                        .iter()
                        .zip(&lp)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max)
                        / scale;
                    out.max_rel_p_err = out.max_rel_p_err.max(err);
                }
                (Feasibility::Infeasible { .. }, None) => {}
                _ => out.verdict_mismatches += 1,
            }
        }
    }
    out
}

/// Largest relative gap between the bisection min-SINR and a fine grid
/// search over random `G = 2` instances.
pub fn bisection_vs_grid_g2(instances: usize, seed: u64) -> f64 {
    use mmcast::power_control::inter_subgroup_mmf;
    let mut rng = rng(seed);
    (0..instances)
        .map(|_| {
            let table = random_gain_table(&mut rng, 2);
            let p_dl = rng.random_range(0.5..5.0);
            let out = inter_subgroup_mmf(&table, p_dl, 1e-9).unwrap();
            relative_gap(
                table.min_sinr(&out.p),
                grid_max_min_g2(&table, p_dl, 20_000),
            )
        })
        .fold(0.0, f64::max)
}

/// Draws of one two-user subgroup: true channels, shared observation and
/// the first user's MMSE estimate.
pub struct EstimatorFixture {
    pub covs: Vec<CMatrix>,
    pub q: Vec<f64>,
    pub tau_p: usize,
    pub noise: f64,
}

impl EstimatorFixture {
    pub fn new(seed: u64, m: usize) -> Self {
        let mut rng = rng(seed);
        EstimatorFixture {
            covs: vec![
                random_covariance(&mut rng, m),
                random_covariance(&mut rng, m),
            ],
            q: vec![0.7, 0.4],
            tau_p: 3,
            noise: 0.3,
        }
    }

    fn refs(&self) -> Vec<&CMatrix> {
        self.covs.iter().collect()
    }

    /// `(h_0, ĥ_0, y)` for one coherence block.
    pub fn draw<R: Rng>(
        &self,
        sampler: &mmcast::channel_model::ChannelSampler,
        rng: &mut R,
    ) -> (mmcast::CVector, mmcast::CVector, mmcast::CVector) {
        use mmcast::estimation::{mmse_estimate, received_pilot, PilotNoiseConvention};
        let h = sampler.draw(rng).vectors;
        let conv = PilotNoiseConvention::Despread;
        let y = received_pilot(
            &[&h[0], &h[1]],
            &self.q,
            self.tau_p,
            conv.pilot_noise_variance(self.noise, self.tau_p),
            rng,
        );
        let est = mmse_estimate(
            &y,
            0,
            &self.refs(),
            &self.q,
            self.tau_p,
            conv.estimator_noise(self.noise, self.tau_p),
        )
        .unwrap();
        (h[0].clone(), est, y)
    }

    pub fn sampler(&self) -> mmcast::channel_model::ChannelSampler {
        let covs: Vec<mmcast::channel_model::SpatialCovariance> = self
            .covs
            .iter()
            .enumerate()
            .map(|(owner, m)| mmcast::channel_model::SpatialCovariance {
                owner,
                matrix: m.clone(),
            })
            .collect();
        mmcast::channel_model::ChannelSampler::new(&covs).unwrap()
    }

    pub fn error_correlation(&self) -> CMatrix {
        mmcast::estimation::error_correlation(0, &self.refs(), &self.q, self.tau_p, self.noise)
            .unwrap()
    }
}

/// Largest |z|-score of the real and imaginary parts of `E{ĥ_kᴴ e_k}` and of
/// two fixed projections `E{(uᴴĥ)(vᴴe)*}` over `draws` blocks.
pub fn orthogonality_max_z(seed: u64, m: usize, draws: usize) -> f64 {
    let fx = EstimatorFixture::new(seed, m);
    let sampler = fx.sampler();
    let mut rng = rng(seed + 1);
    let u = mmcast::CVector::from_fn(m, |i, _| C64::from_polar(1.0, 0.7 * i as f64));
    let v = mmcast::CVector::from_fn(m, |i, _| C64::from_polar(1.0, -1.3 * i as f64 * i as f64));
    let mut stats: Vec<Vec<C64>> = (0..3).map(|_| Vec::with_capacity(draws)).collect();
    for _ in 0..draws {
        let (h, est, _) = fx.draw(&sampler, &mut rng);
        let e = &h - &est;
        stats[0].push(est.dotc(&e));
        stats[1].push(u.dotc(&est) * v.dotc(&e).conj());
        stats[2].push(v.dotc(&est) * u.dotc(&e).conj());
    }
    stats
        .iter()
        .flat_map(|s| {
            [
                z_score(s.iter().map(|x| x.re)),
                z_score(s.iter().map(|x| x.im)),
            ]
        })
        .fold(0.0, f64::max)
}

fn z_score(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    let var = xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    mean.abs() / (var / n).sqrt()
}

/// Relative Frobenius gap between the sample error covariance and `R̃`.
pub fn error_covariance_gap(seed: u64, m: usize, draws: usize) -> f64 {
    let fx = EstimatorFixture::new(seed, m);
    let sampler = fx.sampler();
    let mut rng = rng(seed + 2);
    let mut acc = CMatrix::zeros(m, m);
    for _ in 0..draws {
        let (h, est, _) = fx.draw(&sampler, &mut rng);
        let e = &h - &est;
        acc += &e * e.adjoint();
    }
    let sample = acc / unit(draws as f64);
    let exact = fx.error_correlation();
    mmcast::linalg::frobenius(&(sample - &exact)) / mmcast::linalg::frobenius(&exact)
}

/// Relative gap between the composite estimate and `τ_p Σ √q_k ĥ_k`, and
/// between the composite estimate and `B·y`.
pub fn composite_identity_gap(seed: u64, m: usize) -> f64 {
    use mmcast::estimation::SubgroupEstimator;
    let fx = EstimatorFixture::new(seed, m);
    let sampler = fx.sampler();
    let mut rng = rng(seed + 3);
    let (_, _, y) = fx.draw(&sampler, &mut rng);
    let est = SubgroupEstimator::new(&fx.refs(), &fx.q, fx.tau_p, fx.noise).unwrap();
    let composite = est.composite_estimate(&y);
    let mut sum = mmcast::CVector::zeros(m);
    for (i, r) in fx.covs.iter().enumerate() {
        sum += est.user_estimate(i, r, &y) * unit(fx.tau_p as f64 * fx.q[i].sqrt());
    }
    let by = est.composite_matrix() * &y;
    let scale = composite.norm();
    ((&composite - sum).norm() / scale).max((&composite - by).norm() / scale)
}

/// Hermitian, PSD and `tr R / M = β` for every covariance of a few default
/// snapshots. Returns the first violation.
pub fn covariance_invariants(seed: u64, snapshots: u64) -> Result<(), String> {
    use mmcast::channel_model::{generate_snapshot, ChannelConfig, GeometryConfig};
    for index in 0..snapshots {
        let snap = generate_snapshot(
            &GeometryConfig::default(),
            &ChannelConfig::default(),
            seed,
            index,
        )
        .map_err(|e| e.to_string())?;
        for (k, c) in snap.covariances.iter().enumerate() {
            if !mmcast::linalg::is_hermitian(&c.matrix, 1e-12) {
                return Err(format!("snapshot {index} user {k}: not Hermitian"));
            }
            mmcast::linalg::check_psd(&c.matrix)
                .map_err(|e| format!("snapshot {index} user {k}: {e}"))?;
            let beta = snap.users[k].beta;
            if relative_gap(c.trace() / c.n_antennas() as f64, beta) > 1e-12 {
                return Err(format!("snapshot {index} user {k}: tr/M != beta"));
            }
        }
    }
    Ok(())
}

/// Largest `|empirical − analytic| / std_err` of the similarity-as-variance
/// identity over `pairs` random covariance pairs.
pub fn variance_identity_max_z(seed: u64, pairs: usize, draws: usize) -> f64 {
    let mut rng = rng(seed);
    (0..pairs)
        .map(|i| {
            let m = [4, 8, 16, 32][i % 4];
            let ri = random_covariance(&mut rng, m);
            let rj = random_covariance(&mut rng, m);
            let c =
                mmcast::subgrouping::variance_identity_check(&ri, &rj, draws, &mut rng).unwrap();
            (c.empirical - c.analytic).abs() / c.std_err
        })
        .fold(0.0, f64::max)
}
