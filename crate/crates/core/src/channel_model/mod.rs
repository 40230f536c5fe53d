//! Network snapshots: clustered user drops, large-scale fading, ULA spatial
//! covariance matrices under the local scattering model, and correlated
//! Rayleigh channel draws.

mod dump;
mod quadrature;

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::linalg::{self, psd_factor};
use crate::rng::{self, complex_normal};
use crate::{CMatrix, CVector, Error, Result, C64};

pub use dump::{read_covariance_dump, write_covariance_dump, CovarianceDumpHeader};

/// Gaussian angular support is truncated at this many standard deviations.
const GAUSSIAN_SUPPORT_SIGMAS: f64 = 6.0;
/// Absolute tolerance per normalized covariance entry.
const QUADRATURE_TOLERANCE: f64 = 1e-8;
const QUADRATURE_MAX_SUBDIVISIONS: usize = 4000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Single-cell deployment geometry. The BS sits at the origin with the ULA
/// axis along x.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub cell_radius: f64,
    pub n_clusters: usize,
    pub users_per_cluster: usize,
    pub cluster_radius: f64,
    #[serde(default = "default_min_bs_distance")]
    pub min_bs_distance: f64,
}

fn default_min_bs_distance() -> f64 {
    10.0
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig {
            cell_radius: 200.0,
            n_clusters: 5,
            users_per_cluster: 8,
            cluster_radius: 5.0,
            min_bs_distance: default_min_bs_distance(),
        }
    }
}

impl GeometryConfig {
    pub fn n_users(&self) -> usize {
        self.n_clusters * self.users_per_cluster
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(format!("geometry: {msg}")));
        if !(self.cluster_radius > 0.0 && self.cell_radius > self.cluster_radius) {
            return bad("need cell_radius > cluster_radius > 0");
        }
        if self.n_clusters == 0 || self.users_per_cluster == 0 {
            return bad("cluster and user counts must be at least 1");
        }
        if !(self.min_bs_distance >= 0.0 && self.min_bs_distance < self.cell_radius) {
            return bad("need 0 <= min_bs_distance < cell_radius");
        }
        if self.min_bs_distance > self.cell_radius - self.cluster_radius {
            return bad("cluster-center annulus is empty");
        }
        Ok(())
    }
}

/// How the angle-of-arrival distribution around the nominal angle is modelled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AngularModel {
    /// Gaussian AoA density N(Φ, asd²), integrated numerically.
    IntegralGaussian,
    /// Uniform AoA on `[Φ − √3·asd, Φ + √3·asd]` (same standard deviation),
    /// integrated numerically.
    IntegralUniform,
    /// Empirical covariance of `n` Gaussian paths of equal strength.
    FinitePaths(usize),
}

/// Log-distance path loss `constant + 20·log10(f_GHz) + exponent_db·log10(d_m)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathLossModel {
    pub constant_db: f64,
    pub frequency_db_per_decade: f64,
    pub distance_db_per_decade: f64,
}

impl Default for PathLossModel {
    fn default() -> Self {
        PathLossModel {
            constant_db: 32.4,
            frequency_db_per_decade: 20.0,
            distance_db_per_decade: 37.6,
        }
    }
}

impl PathLossModel {
    pub fn pathloss_db(&self, distance_m: f64, carrier_ghz: f64) -> f64 {
        self.constant_db
            + self.frequency_db_per_decade * carrier_ghz.log10()
            + self.distance_db_per_decade * distance_m.log10()
    }

    /// Returns `(pathloss_db, beta)` with `beta = 10^(-(pathloss + shadow)/10)`.
    pub fn large_scale_fading(
        &self,
        distance_m: f64,
        carrier_ghz: f64,
        shadow_db: f64,
    ) -> (f64, f64) {
        let pl = self.pathloss_db(distance_m, carrier_ghz);
        (pl, db_to_linear(-(pl + shadow_db)))
    }
}

fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Radio and propagation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub n_antennas: usize,
    /// Adjacent-antenna spacing in wavelengths.
    pub antenna_spacing: f64,
    /// Angular standard deviation in radians.
    pub asd: f64,
    pub carrier_freq_ghz: f64,
    pub bandwidth_hz: f64,
    pub noise_figure_db: f64,
    #[serde(default = "default_noise_psd")]
    pub noise_psd_dbm_per_hz: f64,
    pub shadow_std_db: f64,
    pub shadow_intra_corr: f64,
    pub shadow_inter_corr: f64,
    pub angular_model: AngularModel,
    #[serde(default)]
    pub pathloss: PathLossModel,
}

fn default_noise_psd() -> f64 {
    -174.0
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            n_antennas: 64,
            antenna_spacing: 0.5,
            asd: 10f64.to_radians(),
            carrier_freq_ghz: 2.0,
            bandwidth_hz: 20e6,
            noise_figure_db: 7.0,
            noise_psd_dbm_per_hz: default_noise_psd(),
            shadow_std_db: 6.0,
            shadow_intra_corr: 1.0,
            shadow_inter_corr: 0.1,
            angular_model: AngularModel::IntegralGaussian,
            pathloss: PathLossModel::default(),
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(format!("channel: {msg}")));
        if self.n_antennas == 0 {
            return bad("n_antennas must be at least 1");
        }
        if !(self.antenna_spacing > 0.0) || !(self.asd > 0.0) {
            return bad("antenna_spacing and asd must be positive");
        }
        if !(self.carrier_freq_ghz > 0.0 && self.bandwidth_hz > 0.0) {
            return bad("carrier frequency and bandwidth must be positive");
        }
        if !(self.shadow_std_db >= 0.0) {
            return bad("shadow_std_db must be non-negative");
        }
        let in_unit = |x: f64| (0.0..=1.0).contains(&x);
        if !in_unit(self.shadow_intra_corr) || !in_unit(self.shadow_inter_corr) {
            return bad("shadowing correlations must lie in [0, 1]");
        }
        if self.shadow_inter_corr > self.shadow_intra_corr {
            return bad("shadow_inter_corr must not exceed shadow_intra_corr");
        }
        if let AngularModel::FinitePaths(0) = self.angular_model {
            return bad("finite-path model needs at least one path");
        }
        Ok(())
    }

    /// Thermal noise power in watts: PSD + 10·log10(B) + noise figure.
    pub fn noise_power(&self) -> f64 {
        noise_power_watts(
            self.noise_psd_dbm_per_hz,
            self.bandwidth_hz,
            self.noise_figure_db,
        )
    }
}

pub fn noise_power_watts(psd_dbm_per_hz: f64, bandwidth_hz: f64, noise_figure_db: f64) -> f64 {
    crate::dbm_to_watts(psd_dbm_per_hz + 10.0 * bandwidth_hz.log10() + noise_figure_db)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserLargeScale {
    pub position: Point,
    pub cluster_id: usize,
    /// Nominal angle of arrival w.r.t. the array axis (radians).
    pub nominal_angle: f64,
    pub distance: f64,
    pub pathloss_db: f64,
    pub shadow_db: f64,
    pub beta: f64,
}

/// Spatial covariance matrix of one user's channel.
#[derive(Debug, Clone)]
pub struct SpatialCovariance {
    pub owner: usize,
    pub matrix: CMatrix,
}

impl SpatialCovariance {
    pub fn n_antennas(&self) -> usize {
        self.matrix.nrows()
    }

    /// Large-scale fading coefficient `tr(R) / M`.
    pub fn beta(&self) -> f64 {
        linalg::trace_re(&self.matrix) / self.n_antennas() as f64
    }

    pub fn trace(&self) -> f64 {
        linalg::trace_re(&self.matrix)
    }

    /// Checks Hermitian symmetry and positive semi-definiteness.
    pub fn validate(&self) -> Result<()> {
        if !linalg::is_hermitian(&self.matrix, 1e-10) {
            return Err(Error::InvalidConfig(format!(
                "covariance of user {} is not Hermitian",
                self.owner
            )));
        }
        linalg::check_psd(&self.matrix)
    }
}

/// One coherence block of channel vectors, one per user.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    pub vectors: Vec<CVector>,
}

/// ULA response `[1, e^{j2πδcosφ}, …, e^{j2πδ(M−1)cosφ}]ᵀ`.
pub fn steering_vector(angle: f64, n_antennas: usize, spacing: f64) -> CVector {
    let phase = 2.0 * PI * spacing * angle.cos();
    CVector::from_fn(n_antennas, |m, _| C64::from_polar(1.0, phase * m as f64))
}

/// Normalized Toeplitz generator `c(d) = E{exp(j2πδ·d·cosφ)}`, `d = 0..M`.
fn angular_correlation<R: Rng + ?Sized>(
    nominal: f64,
    asd: f64,
    n_antennas: usize,
    spacing: f64,
    model: AngularModel,
    rng: &mut R,
) -> Result<Vec<C64>> {
    let m = n_antennas;
    // Accumulates w·e^{j·d·θ(φ)} for d = 0..M into `out` (interleaved re/im).
    let accumulate = move |phi: f64, weight: f64, out: &mut [f64]| {
        let step = C64::from_polar(1.0, 2.0 * PI * spacing * phi.cos());
        let mut z = C64::new(weight, 0.0);
        for d in 0..m {
            out[2 * d] = z.re;
            out[2 * d + 1] = z.im;
            z *= step;
        }
    };
    let raw = match model {
        AngularModel::IntegralGaussian => {
            let norm = 1.0 / (2.0 * PI).sqrt();
            quadrature::integrate(
                |t, out| accumulate(nominal + asd * t, norm * (-0.5 * t * t).exp(), out),
                2 * m,
                -GAUSSIAN_SUPPORT_SIGMAS,
                GAUSSIAN_SUPPORT_SIGMAS,
                QUADRATURE_TOLERANCE,
                QUADRATURE_MAX_SUBDIVISIONS,
            )?
        }
        AngularModel::IntegralUniform => {
            let half = 3f64.sqrt();
            quadrature::integrate(
                |t, out| accumulate(nominal + asd * t, 0.5 / half, out),
                2 * m,
                -half,
                half,
                QUADRATURE_TOLERANCE,
                QUADRATURE_MAX_SUBDIVISIONS,
            )?
        }
        AngularModel::FinitePaths(n) => {
            let mut sum = vec![0.0; 2 * m];
            let mut buf = vec![0.0; 2 * m];
            for _ in 0..n {
                let t: f64 = rng.sample(StandardNormal);
                accumulate(nominal + asd * t, 1.0 / n as f64, &mut buf);
                sum.iter_mut().zip(&buf).for_each(|(s, b)| *s += b);
            }
            sum
        }
    };
    // Rescale so that c(0) = 1 exactly (truncated mass, quadrature error).
    let mass = raw[0];
    Ok((0..m)
        .map(|d| C64::new(raw[2 * d], raw[2 * d + 1]) / mass)
        .collect())
}

/// Spatial covariance of the local scattering model for a ULA.
///
/// Entry `(l, m)` is `beta · E{exp(j2πδ(l−m)cosφ)}` with φ drawn from the
/// chosen angular model around `nominal`. The diagonal equals `beta`
/// exactly, so `tr(R)/M = beta`. `rng` is only consumed by
/// [`AngularModel::FinitePaths`].
pub fn local_scattering_covariance<R: Rng + ?Sized>(
    nominal: f64,
    asd: f64,
    beta: f64,
    n_antennas: usize,
    spacing: f64,
    model: AngularModel,
    rng: &mut R,
) -> Result<CMatrix> {
    if !(beta > 0.0) || !(asd > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "covariance needs beta > 0 and asd > 0 (beta={beta}, asd={asd})"
        )));
    }
    let c = angular_correlation(nominal, asd, n_antennas, spacing, model, rng)?;
    Ok(CMatrix::from_fn(n_antennas, n_antennas, |l, m| {
        if l >= m {
            c[l - m] * beta
        } else {
            c[m - l].conj() * beta
        }
    }))
}

/// A dropped user before large-scale fading is attached.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DroppedUser {
    pub position: Point,
    pub cluster_id: usize,
}

/// Uniform point in the annulus `r_in ≤ |p| ≤ r_out` around `center`.
fn uniform_in_annulus<R: Rng + ?Sized>(center: Point, r_in: f64, r_out: f64, rng: &mut R) -> Point {
    let u: f64 = rng.random();
    let r = (r_in * r_in + u * (r_out * r_out - r_in * r_in)).sqrt();
    let theta = 2.0 * PI * rng.random::<f64>();
    Point {
        x: center.x + r * theta.cos(),
        y: center.y + r * theta.sin(),
    }
}

/// Drops cluster centers uniformly in the annulus
/// `[min_bs_distance, cell_radius − cluster_radius]`, then users uniformly
/// in a disc of `cluster_radius` around their center. Users are ordered by
/// cluster.
pub fn drop_users<R: Rng + ?Sized>(geom: &GeometryConfig, rng: &mut R) -> Vec<DroppedUser> {
    let origin = Point { x: 0.0, y: 0.0 };
    let mut users = Vec::with_capacity(geom.n_users());
    for cluster_id in 0..geom.n_clusters {
        let center = uniform_in_annulus(
            origin,
            geom.min_bs_distance,
            geom.cell_radius - geom.cluster_radius,
            rng,
        );
        for _ in 0..geom.users_per_cluster {
            users.push(DroppedUser {
                position: uniform_in_annulus(center, 0.0, geom.cluster_radius, rng),
                cluster_id,
            });
        }
    }
    users
}

/// Correlated log-normal shadowing in dB.
///
/// Same-cluster pairs have correlation `rho_intra`, other pairs `rho_inter`.
pub fn sample_shadowing<R: Rng + ?Sized>(
    cluster_ids: &[usize],
    std_db: f64,
    rho_intra: f64,
    rho_inter: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let k = cluster_ids.len();
    let corr = DMatrix::from_fn(k, k, |i, j| {
        if i == j {
            1.0
        } else if cluster_ids[i] == cluster_ids[j] {
            rho_intra
        } else {
            rho_inter
        }
    });
    let eig = SymmetricEigen::new(corr);
    let min = eig
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if min < -1e-9 {
        return Err(Error::InvalidConfig(format!(
            "shadowing correlation (intra {rho_intra}, inter {rho_inter}) is not PSD (min eigenvalue {min:e})"
        )));
    }
    let z: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
    if std_db == 0.0 {
        return Ok(vec![0.0; k]);
    }
    // x = U·sqrt(Λ)·z, with round-off eigenvalues of perfectly correlated
    // blocks dropped so those users share exactly one value.
    let floor = 1e-10 * k as f64;
    let mut out = vec![0.0; k];
    for (col, &lambda) in eig.eigenvalues.iter().enumerate() {
        let s = if lambda > floor {
            lambda.sqrt() * z[col]
        } else {
            0.0
        };
        if s == 0.0 {
            continue;
        }
        for (row, o) in out.iter_mut().enumerate() {
            *o += eig.eigenvectors[(row, col)] * s;
        }
    }
    Ok(out.into_iter().map(|x| x * std_db).collect())
}

/// Square-root factors of a set of covariances, reusable across draws.
#[derive(Debug, Clone)]
pub struct ChannelSampler {
    n_antennas: usize,
    factors: Vec<CMatrix>,
}

impl ChannelSampler {
    pub fn new(covariances: &[SpatialCovariance]) -> Result<Self> {
        let n_antennas = covariances.first().map_or(0, |c| c.n_antennas());
        let factors = covariances
            .iter()
            .map(|c| psd_factor(&c.matrix))
            .collect::<Result<Vec<_>>>()?;
        Ok(ChannelSampler {
            n_antennas,
            factors,
        })
    }

    pub fn n_users(&self) -> usize {
        self.factors.len()
    }

    pub fn n_antennas(&self) -> usize {
        self.n_antennas
    }

    /// Writes `h_k = L_k·z` into `out` (length M).
    pub fn draw_into<R: Rng + ?Sized>(&self, user: usize, rng: &mut R, out: &mut [C64]) {
        let l = &self.factors[user];
        out.iter_mut().for_each(|o| *o = C64::new(0.0, 0.0));
        for j in 0..l.ncols() {
            let z = complex_normal(rng);
            let col = l.column(j);
            for (o, &lij) in out.iter_mut().zip(col.iter()) {
                *o += lij * z;
            }
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> ChannelRealization {
        let vectors = (0..self.n_users())
            .map(|k| {
                let mut v = CVector::zeros(self.n_antennas);
                self.draw_into(k, rng, v.as_mut_slice());
                v
            })
            .collect();
        ChannelRealization { vectors }
    }
}

/// Draws `n_draws` independent coherence blocks with `h_k ~ CN(0, R_k)`.
pub fn sample_channels<R: Rng + ?Sized>(
    covariances: &[SpatialCovariance],
    n_draws: usize,
    rng: &mut R,
) -> Result<Vec<ChannelRealization>> {
    let sampler = ChannelSampler::new(covariances)?;
    Ok((0..n_draws).map(|_| sampler.draw(rng)).collect())
}

/// One large-scale realization of the cell.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub users: Vec<UserLargeScale>,
    pub covariances: Vec<SpatialCovariance>,
    pub noise_power: f64,
}

impl Snapshot {
    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_antennas(&self) -> usize {
        self.covariances.first().map_or(0, |c| c.n_antennas())
    }

    pub fn betas(&self) -> Vec<f64> {
        self.users.iter().map(|u| u.beta).collect()
    }

    /// Builds a snapshot directly from covariances (tests, oracles).
    pub fn from_covariances(matrices: Vec<CMatrix>, noise_power: f64) -> Self {
        let covariances: Vec<SpatialCovariance> = matrices
            .into_iter()
            .enumerate()
            .map(|(owner, matrix)| SpatialCovariance { owner, matrix })
            .collect();
        let users = covariances
            .iter()
            .map(|c| UserLargeScale {
                position: Point { x: 0.0, y: 0.0 },
                cluster_id: c.owner,
                nominal_angle: 0.0,
                distance: 0.0,
                pathloss_db: 0.0,
                shadow_db: 0.0,
                beta: c.beta(),
            })
            .collect();
        Snapshot {
            users,
            covariances,
            noise_power,
        }
    }
}

/// Drops users, draws shadowing and builds every covariance for snapshot
/// `index` of a campaign seeded with `seed`.
pub fn generate_snapshot(
    geom: &GeometryConfig,
    channel: &ChannelConfig,
    seed: u64,
    index: u64,
) -> Result<Snapshot> {
    geom.validate()?;
    channel.validate()?;
    let dropped = drop_users(geom, &mut rng::stream(seed, &[index, rng::tag::GEOMETRY]));
    let cluster_ids: Vec<usize> = dropped.iter().map(|u| u.cluster_id).collect();
    let shadows = sample_shadowing(
        &cluster_ids,
        channel.shadow_std_db,
        channel.shadow_intra_corr,
        channel.shadow_inter_corr,
        &mut rng::stream(seed, &[index, rng::tag::SHADOWING]),
    )?;
    let mut angular_rng = rng::stream(seed, &[index, rng::tag::ANGULAR]);
    let mut users = Vec::with_capacity(dropped.len());
    let mut covariances = Vec::with_capacity(dropped.len());
    for (k, (u, &shadow_db)) in dropped.iter().zip(&shadows).enumerate() {
        // Guard the log-distance model against degenerate drops right at the BS.
        let distance = u.position.norm().max(1.0);
        let (pathloss_db, beta) =
            channel
                .pathloss
                .large_scale_fading(distance, channel.carrier_freq_ghz, shadow_db);
        let nominal_angle = u.position.y.atan2(u.position.x);
        let matrix = local_scattering_covariance(
            nominal_angle,
            channel.asd,
            beta,
            channel.n_antennas,
            channel.antenna_spacing,
            channel.angular_model,
            &mut angular_rng,
        )?;
        users.push(UserLargeScale {
            position: u.position,
            cluster_id: u.cluster_id,
            nominal_angle,
            distance,
            pathloss_db,
            shadow_db,
            beta,
        });
        covariances.push(SpatialCovariance { owner: k, matrix });
    }
    Ok(Snapshot {
        users,
        covariances,
        noise_power: channel.noise_power(),
    })
}
