//! Partitioning multicast users into subgroups from covariance similarity.
//!
//! The similarity of users `i` and `j` is `tr(R_i R_j) / (tr R_i · tr R_j)`,
//! the variance of the normalized inner product of their channels. Users
//! with similar spatial signatures (low mutual orthogonality) end up in the
//! same subgroup.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel_model::ChannelSampler;
use crate::channel_model::SpatialCovariance;
use crate::{CMatrix, Error, Result};

const PAM_RESTARTS: usize = 20;
const PAM_MAX_SWAPS: usize = 1000;

/// Symmetric K×K matrix of pairwise covariance similarities.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix(pub DMatrix<f64>);

impl SimilarityMatrix {
    pub fn n_users(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }
}

/// `tr(A·B)` for Hermitian `A`, `B`, without forming the product.
fn trace_of_product(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x * y.conj()).re).sum()
}

pub fn similarity(a: &CMatrix, b: &CMatrix) -> f64 {
    let ta: f64 = a.diagonal().iter().map(|z| z.re).sum();
    let tb: f64 = b.diagonal().iter().map(|z| z.re).sum();
    trace_of_product(a, b) / (ta * tb)
}

pub fn similarity_matrix(covariances: &[SpatialCovariance]) -> Result<SimilarityMatrix> {
    let k = covariances.len();
    if let Some(c) = covariances.iter().find(|c| !(c.trace() > 0.0)) {
        return Err(Error::InvalidConfig(format!(
            "covariance of user {} has non-positive trace",
            c.owner
        )));
    }
    let mut s = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in i..k {
            let v = similarity(&covariances[i].matrix, &covariances[j].matrix);
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    Ok(SimilarityMatrix(s))
}

/// Monte-Carlo check of the similarity as a variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceCheck {
    pub empirical: f64,
    pub analytic: f64,
    /// Standard error of `empirical`.
    pub std_err: f64,
}

/// Empirical variance of `h_iᴴ h_j / sqrt(E‖h_i‖² E‖h_j‖²)` over `n_draws`
/// independent channel pairs, alongside the closed form.
pub fn variance_identity_check<R: Rng + ?Sized>(
    r_i: &CMatrix,
    r_j: &CMatrix,
    n_draws: usize,
    rng: &mut R,
) -> Result<VarianceCheck> {
    let covs = [
        SpatialCovariance {
            owner: 0,
            matrix: r_i.clone(),
        },
        SpatialCovariance {
            owner: 1,
            matrix: r_j.clone(),
        },
    ];
    let sampler = ChannelSampler::new(&covs)?;
    let norm = (covs[0].trace() * covs[1].trace()).sqrt();
    let m = sampler.n_antennas();
    let mut hi = vec![crate::C64::new(0.0, 0.0); m];
    let mut hj = hi.clone();
    let (mut sum, mut sum_sq, mut sum_quad) = (crate::C64::new(0.0, 0.0), 0.0, 0.0);
    for _ in 0..n_draws {
        sampler.draw_into(0, rng, &mut hi);
        sampler.draw_into(1, rng, &mut hj);
        let x: crate::C64 = hi
            .iter()
            .zip(&hj)
            .map(|(a, b)| a.conj() * b)
            .sum::<crate::C64>()
            / norm;
        let p = x.norm_sqr();
        sum += x;
        sum_sq += p;
        sum_quad += p * p;
    }
    let n = n_draws as f64;
    let mean_p = sum_sq / n;
    let empirical = mean_p - (sum / n).norm_sqr();
    let var_p = (sum_quad / n - mean_p * mean_p).max(0.0);
    Ok(VarianceCheck {
        empirical,
        analytic: similarity(r_i, r_j),
        std_err: (var_p / n).sqrt(),
    })
}

/// Assignment of K users to G disjoint, non-empty subgroups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub subgroup_of_user: Vec<usize>,
    pub n_subgroups: usize,
}

impl Partition {
    pub fn new(subgroup_of_user: Vec<usize>, n_subgroups: usize) -> Result<Self> {
        let p = Partition {
            subgroup_of_user,
            n_subgroups,
        };
        p.validate()?;
        Ok(p)
    }

    /// All users in one subgroup.
    pub fn single_group(n_users: usize) -> Self {
        Partition {
            subgroup_of_user: vec![0; n_users],
            n_subgroups: 1,
        }
    }

    /// Every user alone in its own subgroup.
    pub fn singletons(n_users: usize) -> Self {
        Partition {
            subgroup_of_user: (0..n_users).collect(),
            n_subgroups: n_users,
        }
    }

    pub fn n_users(&self) -> usize {
        self.subgroup_of_user.len()
    }

    pub fn validate(&self) -> Result<()> {
        let mut sizes = vec![0usize; self.n_subgroups];
        for (k, &g) in self.subgroup_of_user.iter().enumerate() {
            if g >= self.n_subgroups {
                return Err(Error::InvalidPartition(format!(
                    "user {k} assigned to subgroup {g} of {}",
                    self.n_subgroups
                )));
            }
            sizes[g] += 1;
        }
        if let Some(g) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::InvalidPartition(format!("subgroup {g} is empty")));
        }
        Ok(())
    }

    /// Member lists, ascending user index within each subgroup.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut m = vec![Vec::new(); self.n_subgroups];
        for (k, &g) in self.subgroup_of_user.iter().enumerate() {
            m[g].push(k);
        }
        m
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.members().iter().map(Vec::len).collect()
    }

    /// Relabels subgroups in order of their smallest member.
    fn canonical(assignment: &[usize], n_subgroups: usize) -> Self {
        let mut relabel = vec![usize::MAX; n_subgroups];
        let mut next = 0;
        let subgroup_of_user = assignment
            .iter()
            .map(|&g| {
                if relabel[g] == usize::MAX {
                    relabel[g] = next;
                    next += 1;
                }
                relabel[g]
            })
            .collect();
        Partition {
            subgroup_of_user,
            n_subgroups,
        }
    }

    /// Mean similarity over all unordered same-subgroup pairs (0 if none).
    pub fn mean_intra_similarity(&self, s: &SimilarityMatrix) -> f64 {
        let (mut sum, mut n) = (0.0, 0usize);
        for group in self.members() {
            for (a, &i) in group.iter().enumerate() {
                for &j in &group[a + 1..] {
                    sum += s.get(i, j);
                    n += 1;
                }
            }
        }
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubgroupingStrategy {
    /// k-medoids on `1 − s`: users with low mutual orthogonality together.
    Proposed,
    /// Spatial clusters found as for `Proposed`, then dealt round-robin so
    /// each subgroup mixes users from different clusters.
    HighOrthogonality,
    /// Uniform random, balanced to within one user.
    Random,
    /// Conventional multicast: one subgroup.
    SingleGroup,
    /// Conventional massive MIMO: one subgroup per user.
    Unicast,
}

impl SubgroupingStrategy {
    pub fn label(self) -> &'static str {
        match self {
            SubgroupingStrategy::Proposed => "proposed",
            SubgroupingStrategy::HighOrthogonality => "high_orthogonality",
            SubgroupingStrategy::Random => "random",
            SubgroupingStrategy::SingleGroup => "single_group",
            SubgroupingStrategy::Unicast => "unicast",
        }
    }

    /// Number of subgroups the strategy produces for `k` users when `g` is requested.
    pub fn effective_subgroups(self, g: usize, k: usize) -> usize {
        match self {
            SubgroupingStrategy::SingleGroup => 1,
            SubgroupingStrategy::Unicast => k,
            _ => g,
        }
    }
}

/// Result of one k-medoids run.
#[derive(Debug, Clone)]
struct Medoids {
    loss: f64,
    medoids: Vec<usize>,
}

fn assign(d: &DMatrix<f64>, medoids: &[usize]) -> (f64, Vec<usize>) {
    let n = d.nrows();
    let mut loss = 0.0;
    let mut labels = vec![0; n];
    for i in 0..n {
        if let Some(pos) = medoids.iter().position(|&m| m == i) {
            labels[i] = pos;
            continue;
        }
        let (best, dist) = medoids
            .iter()
            .enumerate()
            .map(|(pos, &m)| (pos, d[(i, m)]))
            .fold((usize::MAX, f64::INFINITY), |acc, x| {
                if x.1 < acc.1 {
                    x
                } else {
                    acc
                }
            });
        labels[i] = best;
        loss += dist;
    }
    (loss, labels)
}

fn loss_of(d: &DMatrix<f64>, medoids: &[usize]) -> f64 {
    (0..d.nrows())
        .map(|i| {
            medoids
                .iter()
                .map(|&m| d[(i, m)])
                .fold(f64::INFINITY, f64::min)
        })
        .sum()
}

/// Greedy BUILD initialization.
fn build(d: &DMatrix<f64>, k: usize) -> Vec<usize> {
    let n = d.nrows();
    let mut medoids: Vec<usize> = Vec::with_capacity(k);
    let mut nearest = vec![f64::INFINITY; n];
    for _ in 0..k {
        let mut best = (usize::MAX, f64::INFINITY);
        for c in (0..n).filter(|c| !medoids.contains(c)) {
            let cost: f64 = (0..n).map(|i| nearest[i].min(d[(i, c)])).sum();
            if cost < best.1 {
                best = (c, cost);
            }
        }
        medoids.push(best.0);
        for i in 0..n {
            nearest[i] = nearest[i].min(d[(i, best.0)]);
        }
    }
    medoids
}

/// Classic PAM swap phase: apply the best improving swap until none remains.
fn swap(d: &DMatrix<f64>, mut medoids: Vec<usize>) -> Medoids {
    let n = d.nrows();
    let mut loss = loss_of(d, &medoids);
    for _ in 0..PAM_MAX_SWAPS {
        let mut best = (0usize, 0usize, loss);
        for pos in 0..medoids.len() {
            let candidates: Vec<usize> = (0..n).filter(|c| !medoids.contains(c)).collect();
            for cand in candidates {
                let old = std::mem::replace(&mut medoids[pos], cand);
                let l = loss_of(d, &medoids);
                medoids[pos] = old;
                if l < best.2 - 1e-12 {
                    best = (pos, cand, l);
                }
            }
        }
        if best.2 < loss - 1e-12 {
            medoids[best.0] = best.1;
            loss = best.2;
        } else {
            break;
        }
    }
    medoids.sort_unstable();
    Medoids { loss, medoids }
}

/// Dissimilarity `1 − s(i, j)` with a zero diagonal.
fn dissimilarity(s: &SimilarityMatrix) -> DMatrix<f64> {
    let n = s.n_users();
    DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { 1.0 - s.get(i, j) })
}

/// k-medoids with a BUILD start plus random restarts; returns cluster labels.
fn k_medoids<R: Rng + ?Sized>(s: &SimilarityMatrix, k: usize, rng: &mut R) -> Vec<usize> {
    let d = dissimilarity(s);
    let n = d.nrows();
    let mut best = swap(&d, build(&d, k));
    for _ in 1..PAM_RESTARTS {
        let mut start: Vec<usize> = rand::seq::index::sample(rng, n, k).into_vec();
        start.sort_unstable();
        let run = swap(&d, start);
        if run.loss < best.loss - 1e-12 {
            best = run;
        }
    }
    assign(&d, &best.medoids).1
}

fn round_robin(order: &[usize], n_users: usize, g: usize) -> Vec<usize> {
    let mut assignment = vec![0; n_users];
    for (pos, &user) in order.iter().enumerate() {
        assignment[user] = pos % g;
    }
    assignment
}

/// Partitions users into `g` subgroups. `SingleGroup` and `Unicast` ignore
/// `g`. Deterministic for a given `rng` state.
pub fn partition_users<R: Rng + ?Sized>(
    s: &SimilarityMatrix,
    g: usize,
    strategy: SubgroupingStrategy,
    rng: &mut R,
) -> Result<Partition> {
    let k = s.n_users();
    let g = strategy.effective_subgroups(g, k);
    if g == 0 || g > k {
        return Err(Error::InvalidConfig(format!(
            "cannot split {k} users into {g} subgroups"
        )));
    }
    if g == k {
        return Ok(Partition::singletons(k));
    }
    let assignment = match strategy {
        SubgroupingStrategy::SingleGroup => vec![0; k],
        SubgroupingStrategy::Unicast => unreachable!("handled by g == k"),
        SubgroupingStrategy::Proposed => k_medoids(s, g, rng),
        SubgroupingStrategy::HighOrthogonality => {
            let clusters = Partition::canonical(&k_medoids(s, g, rng), g);
            let order: Vec<usize> = clusters.members().into_iter().flatten().collect();
            round_robin(&order, k, g)
        }
        SubgroupingStrategy::Random => {
            let mut order: Vec<usize> = (0..k).collect();
            order.shuffle(rng);
            round_robin(&order, k, g)
        }
    };
    let p = Partition::canonical(&assignment, g);
    p.validate()?;
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel_model::{local_scattering_covariance, steering_vector, AngularModel};
    use crate::rng::stream;
    use crate::C64;

    fn block_similarity(sizes: &[usize], intra: f64, inter: f64) -> SimilarityMatrix {
        let labels: Vec<usize> = sizes
            .iter()
            .enumerate()
            .flat_map(|(c, &n)| vec![c; n])
            .collect();
        let n = labels.len();
        SimilarityMatrix(DMatrix::from_fn(n, n, |i, j| {
            if labels[i] == labels[j] {
                intra
            } else {
                inter
            }
        }))
    }

    fn covs(angles: &[f64], m: usize) -> Vec<SpatialCovariance> {
        angles
            .iter()
            .enumerate()
            .map(|(owner, &a)| SpatialCovariance {
                owner,
                matrix: local_scattering_covariance(
                    a,
                    0.15,
                    1.0 + owner as f64,
                    m,
                    0.5,
                    AngularModel::IntegralGaussian,
                    &mut stream(0, &[]),
                )
                .unwrap(),
            })
            .collect()
    }

    #[test]
    fn similarity_special_cases() {
        let a = steering_vector(0.4, 8, 0.5);
        let r = &a * a.adjoint() * C64::new(2.0, 0.0);
        assert!((similarity(&r, &r) - 1.0).abs() < 1e-12);
        let i = CMatrix::identity(8, 8) * C64::new(3.0, 0.0);
        assert!((similarity(&i, &i) - 1.0 / 8.0).abs() < 1e-12);
        // DFT-orthogonal steering vectors: cos φ = 0 and cos φ = 1/2 (δ = 1/2, M = 4).
        let a = steering_vector(std::f64::consts::FRAC_PI_2, 4, 0.5);
        let b = steering_vector(std::f64::consts::FRAC_PI_3, 4, 0.5);
        assert!(a.dotc(&b).norm() < 1e-12);
        let ra = &a * a.adjoint();
        let rb = &b * b.adjoint();
        assert!(similarity(&ra, &rb).abs() < 1e-12);
    }

    #[test]
    fn similarity_matrix_properties() {
        let cs = covs(&[0.2, 0.25, 1.3, 2.0], 8);
        let s = similarity_matrix(&cs).unwrap();
        for i in 0..4 {
            assert!(s.get(i, i) <= 1.0 + 1e-12);
            for j in 0..4 {
                assert_eq!(s.get(i, j), s.get(j, i));
                assert!(s.get(i, j) > 0.0);
            }
        }
        // Scale invariance.
        let mut scaled = cs.clone();
        scaled[0].matrix *= C64::new(7.5, 0.0);
        let s2 = similarity_matrix(&scaled).unwrap();
        assert!((s.0.clone() - s2.0).abs().max() < 1e-12);

        let zero = vec![SpatialCovariance {
            owner: 0,
            matrix: CMatrix::zeros(3, 3),
        }];
        assert!(similarity_matrix(&zero).is_err());
    }

    #[test]
    fn k_equal_g_gives_singletons() {
        let s = block_similarity(&[2, 2], 1.0, 0.0);
        for strategy in [
            SubgroupingStrategy::Proposed,
            SubgroupingStrategy::Random,
            SubgroupingStrategy::HighOrthogonality,
        ] {
            let p = partition_users(&s, 4, strategy, &mut stream(0, &[])).unwrap();
            assert_eq!(p, Partition::singletons(4));
        }
        let p = partition_users(&s, 3, SubgroupingStrategy::Unicast, &mut stream(0, &[])).unwrap();
        assert_eq!(p.n_subgroups, 4);
        let p =
            partition_users(&s, 3, SubgroupingStrategy::SingleGroup, &mut stream(0, &[])).unwrap();
        assert_eq!(p, Partition::single_group(4));
    }

    #[test]
    fn too_many_subgroups_rejected() {
        let s = block_similarity(&[2], 1.0, 0.0);
        assert!(
            partition_users(&s, 3, SubgroupingStrategy::Proposed, &mut stream(0, &[])).is_err()
        );
    }

    #[test]
    fn proposed_recovers_ideal_clusters() {
        let s = block_similarity(&[3, 4], 1.0, 0.0);
        let p = partition_users(&s, 2, SubgroupingStrategy::Proposed, &mut stream(1, &[])).unwrap();
        assert_eq!(p.subgroup_of_user, vec![0, 0, 0, 1, 1, 1, 1]);
    }

    #[test]
    fn deterministic_for_seed() {
        let angles: Vec<f64> = (0..12).map(|i| 0.1 * i as f64).collect();
        let s = similarity_matrix(&covs(&angles, 8)).unwrap();
        for strategy in [
            SubgroupingStrategy::Proposed,
            SubgroupingStrategy::Random,
            SubgroupingStrategy::HighOrthogonality,
        ] {
            let a = partition_users(&s, 3, strategy, &mut stream(5, &[])).unwrap();
            let b = partition_users(&s, 3, strategy, &mut stream(5, &[])).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn high_orthogonality_mixes_clusters() {
        // Exhaustive check on the 6-user toy: each subgroup must hold users of
        // distinct spatial clusters.
        let s = block_similarity(&[2, 2, 2], 1.0, 0.0);
        let cluster = [0, 0, 1, 1, 2, 2];
        for seed in 0..20 {
            let p = partition_users(
                &s,
                3,
                SubgroupingStrategy::HighOrthogonality,
                &mut stream(seed, &[]),
            )
            .unwrap();
            for group in p.members() {
                let mut seen: Vec<usize> = group.iter().map(|&u| cluster[u]).collect();
                seen.sort_unstable();
                seen.dedup();
                assert_eq!(seen.len(), group.len(), "{:?}", p);
            }
        }
    }

    #[test]
    fn random_is_balanced() {
        let s = block_similarity(&[10], 1.0, 0.0);
        let p = partition_users(&s, 3, SubgroupingStrategy::Random, &mut stream(2, &[])).unwrap();
        let sizes = p.sizes();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn partition_validation_and_json() {
        assert!(Partition::new(vec![0, 2, 2], 3).is_err());
        assert!(Partition::new(vec![0, 3], 2).is_err());
        let p = Partition::new(vec![1, 0, 1], 2).unwrap();
        let json = serde_json::to_string(&p).unwrap();
        let back: Partition = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
        back.validate().unwrap();
    }

    #[test]
    fn variance_identity_white() {
        let i4 = CMatrix::identity(4, 4);
        let c = variance_identity_check(&i4, &i4, 100_000, &mut stream(3, &[])).unwrap();
        assert!((c.analytic - 0.25).abs() < 1e-12);
        assert!((c.empirical - 0.25).abs() < 0.01, "{c:?}");
    }

    #[test]
    fn variance_identity_orthogonal_rank_one() {
        let a = steering_vector(std::f64::consts::FRAC_PI_2, 4, 0.5);
        let b = steering_vector(std::f64::consts::FRAC_PI_3, 4, 0.5);
        let c = variance_identity_check(
            &(&a * a.adjoint()),
            &(&b * b.adjoint()),
            2000,
            &mut stream(4, &[]),
        )
        .unwrap();
        assert!(c.empirical.abs() < 1e-12);
    }
}
