//! Leader-less placement: every controller synchronizes with every other.
//!
//! The distortion between node `x_i` and centroid `y_j` carries the
//! centroid's synchronization spread, `d(x_i, y_j) + γ Σ_k d(y_j, y_k)`.
//! At fixed associations the centroids solve the block system
//!
//! ```text
//! η y_j − γ Σ_{k≠j} y_k = C_j,   η = γ(m − 1) + 1
//! ```
//!
//! with `C_j` the posterior-weighted mean of cluster `j`. Summing the block
//! rows gives `Σ_j y_j = Σ_j C_j`, so the system has the closed form
//! `y_j = (C_j + γ Σ_k C_k) / (γ m + 1)`. The dense `md x md` solve is kept
//! for cross-checking.
//!
//! The block system treats every other centroid's spread as fixed. The
//! annealer uses the full stationarity condition of the free energy by
//! default, in which moving `y_j` also changes the spread paid by the other
//! clusters. With cluster masses `M_j` and moments `B_j = M_j C_j`:
//!
//! ```text
//! M_j y_j + γ Σ_k (M_j + M_k)(y_j − y_k) = B_j
//! ```
//!
//! See [`LlUpdate`].

use nalgebra::{DMatrix, DVector};

use crate::anneal::{
    self, AssociationMatrix, CentroidSet, DistanceTables, RunReport, ScheduleConfig, Topology,
    MIN_CLUSTER_MASS,
};
use crate::error::{EcpError, Result};
use crate::exec::Exec;
use crate::network::{evaluate_ll, sq_dist, NetworkInstance, ObjectiveBreakdown, Placement};

/// Distances needed for one leader-less sweep.
#[derive(Debug, Clone)]
pub struct LlIterationContext {
    pub tables: DistanceTables,
    /// `s_j = Σ_k d(y_j, y_k)`.
    pub sync: Vec<f64>,
}

impl LlIterationContext {
    pub fn new(instance: &NetworkInstance, centroids: &CentroidSet, exec: Exec) -> Self {
        Self::from_tables(DistanceTables::compute(instance, centroids, exec))
    }

    pub fn from_tables(tables: DistanceTables) -> Self {
        let sync = tables.spread();
        Self { tables, sync }
    }
}

/// `D(x_i, y_j) = d(x_i, y_j) + γ s_j`.
pub fn ll_distortion(i: usize, j: usize, ctx: &LlIterationContext, gamma: f64) -> f64 {
    ctx.tables.node_row(i)[j] + gamma * ctx.sync[j]
}

/// Boltzmann associations `exp(-D(x_i, y_j)/T) / Z_i`.
pub fn ll_association_update(
    ctx: &LlIterationContext,
    gamma: f64,
    temperature: f64,
    exec: Exec,
) -> Result<AssociationMatrix> {
    if !(temperature > 0.0) {
        return Err(EcpError::InvalidConfig(format!(
            "temperature must be > 0, got {temperature}"
        )));
    }
    let penalty: Vec<f64> = ctx.sync.iter().map(|s| gamma * s).collect();
    Ok(anneal::boltzmann(&ctx.tables, &penalty, temperature, exec))
}

/// Bayes posterior `p(x_i | y_j)`, `N x m`; every column sums to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Posterior {
    /// Builds a posterior from raw column weights, normalizing each column.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let cols = columns.len();
        let rows = columns.first().map_or(0, Vec::len);
        let mut data = vec![0.0; rows * cols];
        for (j, c) in columns.iter().enumerate() {
            if c.len() != rows {
                return Err(EcpError::DimensionMismatch {
                    expected: rows,
                    found: c.len(),
                });
            }
            let s: f64 = c.iter().sum();
            if !(s >= MIN_CLUSTER_MASS) {
                return Err(EcpError::DegenerateCluster { cluster: j });
            }
            for (i, v) in c.iter().enumerate() {
                data[i * cols + j] = v / s;
            }
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    /// `C_j = Σ_i p(x_i | y_j) x_i` for every cluster.
    pub fn cluster_means(&self, instance: &NetworkInstance) -> Vec<Vec<f64>> {
        let d = instance.dimension();
        let mut c = vec![vec![0.0; d]; self.cols];
        for i in 0..self.rows {
            let x = instance.position(i);
            for (j, cj) in c.iter_mut().enumerate() {
                let p = self.get(i, j);
                for (ck, xk) in cj.iter_mut().zip(x) {
                    *ck += p * xk;
                }
            }
        }
        c
    }
}

/// `p(x_i | y_j) = p(y_j | x_i) w_i / Σ_k p(y_j | x_k) w_k`.
pub fn posterior(assoc: &AssociationMatrix, weights: &[f64]) -> Result<Posterior> {
    if weights.len() != assoc.rows() {
        return Err(EcpError::DimensionMismatch {
            expected: assoc.rows(),
            found: weights.len(),
        });
    }
    let (n, m) = (assoc.rows(), assoc.cols());
    let mass = assoc.column_mass(weights);
    if let Some(j) = mass.iter().position(|&s| !(s >= MIN_CLUSTER_MASS)) {
        return Err(EcpError::DegenerateCluster { cluster: j });
    }
    let mut data = Vec::with_capacity(n * m);
    for (i, &w) in weights.iter().enumerate() {
        data.extend(assoc.row(i).iter().zip(&mass).map(|(p, s)| p * w / s));
    }
    Ok(Posterior {
        rows: n,
        cols: m,
        data,
    })
}

/// Closed-form solution of the leader-less centroid system for given
/// cluster means `C_j`.
pub fn solve_from_means(means: &[Vec<f64>], gamma: f64) -> CentroidSet {
    let m = means.len();
    let d = means[0].len();
    let mut total = vec![0.0; d];
    for c in means {
        for (t, v) in total.iter_mut().zip(c) {
            *t += v;
        }
    }
    let denom = gamma * m as f64 + 1.0;
    CentroidSet::from_vec(
        means
            .iter()
            .map(|c| {
                c.iter()
                    .zip(&total)
                    .map(|(cj, t)| (cj + gamma * t) / denom)
                    .collect()
            })
            .collect(),
    )
}

/// Centroid update: closed-form solution of the block system.
pub fn ll_centroid_solve(post: &Posterior, instance: &NetworkInstance, gamma: f64) -> CentroidSet {
    solve_from_means(&post.cluster_means(instance), gamma)
}

/// The `md x md` coefficient matrix: `ηI` diagonal blocks, `-γI` elsewhere.
pub fn ll_coefficient_matrix(m: usize, d: usize, gamma: f64) -> DMatrix<f64> {
    let eta = gamma * (m as f64 - 1.0) + 1.0;
    DMatrix::from_fn(m * d, m * d, |r, c| {
        if r % d != c % d {
            0.0
        } else if r / d == c / d {
            eta
        } else {
            -gamma
        }
    })
}

/// Numerical determinant of the coefficient matrix (LU).
pub fn ll_coefficient_determinant(m: usize, d: usize, gamma: f64) -> f64 {
    ll_coefficient_matrix(m, d, gamma).determinant()
}

/// Dense LU solve of the block system for given cluster means.
pub fn solve_from_means_dense(means: &[Vec<f64>], gamma: f64) -> Result<CentroidSet> {
    let m = means.len();
    let d = means[0].len();
    let a = ll_coefficient_matrix(m, d, gamma);
    let b = DVector::from_iterator(m * d, means.iter().flatten().copied());
    let y = a
        .lu()
        .solve(&b)
        .ok_or_else(|| EcpError::InvalidConfig("singular leader-less coefficient matrix".into()))?;
    Ok(CentroidSet::from_vec(
        (0..m)
            .map(|j| y.rows(j * d, d).iter().copied().collect())
            .collect(),
    ))
}

/// Dense counterpart of [`ll_centroid_solve`].
pub fn ll_centroid_solve_dense(
    post: &Posterior,
    instance: &NetworkInstance,
    gamma: f64,
) -> Result<CentroidSet> {
    solve_from_means_dense(&post.cluster_means(instance), gamma)
}

/// Exact minimizer over the centroids of the leader-less distortion at
/// fixed associations. `mass[j] = M_j`, `moment[j] = B_j`. With `γ = 0` this
/// is `B_j / M_j` for every cluster.
pub fn ll_stationary_solve(mass: &[f64], moment: &[Vec<f64>], gamma: f64) -> Result<CentroidSet> {
    if let Some(j) = mass.iter().position(|&a| !(a >= MIN_CLUSTER_MASS)) {
        return Err(EcpError::DegenerateCluster { cluster: j });
    }
    if gamma == 0.0 {
        return Ok(CentroidSet::from_vec(
            moment
                .iter()
                .zip(mass)
                .map(|(b, a)| b.iter().map(|v| v / a).collect())
                .collect(),
        ));
    }
    let m = mass.len();
    let d = moment[0].len();
    let a = DMatrix::from_fn(m, m, |j, k| {
        if j == k {
            mass[j]
                + gamma
                    * (0..m)
                        .filter(|&l| l != j)
                        .map(|l| mass[j] + mass[l])
                        .sum::<f64>()
        } else {
            -gamma * (mass[j] + mass[k])
        }
    });
    let b = DMatrix::from_fn(m, d, |j, k| moment[j][k]);
    let y = a
        .cholesky()
        .ok_or_else(|| {
            EcpError::InvalidConfig(
                "leader-less stationarity matrix is not positive definite".into(),
            )
        })?
        .solve(&b);
    Ok(CentroidSet::from_vec(
        (0..m).map(|j| y.row(j).iter().copied().collect()).collect(),
    ))
}

/// Centroid rule used by the leader-less annealer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LlUpdate {
    /// Full stationarity of the free energy; the free energy never increases
    /// between sweeps at a fixed temperature.
    #[default]
    Stationary,
    /// The block system `η y_j − γ Σ_{k≠j} y_k = C_j`.
    Block,
}

impl std::str::FromStr for LlUpdate {
    type Err = EcpError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stationary" => Ok(Self::Stationary),
            "block" => Ok(Self::Block),
            _ => Err(EcpError::InvalidConfig(format!(
                "unknown leader-less update {s:?} (expected stationary or block)"
            ))),
        }
    }
}

/// Leader-less topology for the generic annealer.
#[derive(Debug, Clone, Copy, Default)]
pub struct LeaderLess {
    pub update: LlUpdate,
}

impl Topology for LeaderLess {
    fn name(&self) -> &'static str {
        "ll"
    }

    fn penalty(&self, tables: &DistanceTables, gamma: f64) -> Vec<f64> {
        tables.spread().into_iter().map(|s| gamma * s).collect()
    }

    fn detached_distortion(&self, _tables: &DistanceTables, _gamma: f64) -> f64 {
        0.0
    }

    fn update_centroids(
        &self,
        instance: &NetworkInstance,
        assoc: &AssociationMatrix,
        _centroids: &CentroidSet,
        _tables: &DistanceTables,
        gamma: f64,
    ) -> Result<CentroidSet> {
        let weights = instance.weights();
        let mass = assoc.column_mass(&weights);
        let moment = assoc.column_moment(instance, &weights);
        match self.update {
            LlUpdate::Stationary => ll_stationary_solve(&mass, &moment, gamma),
            LlUpdate::Block => {
                // Posterior means, computed as weighted moment over mass.
                let means = ll_stationary_solve(&mass, &moment, 0.0)?;
                Ok(solve_from_means(means.positions(), gamma))
            }
        }
    }

    fn evaluate(
        &self,
        instance: &NetworkInstance,
        placement: &Placement,
    ) -> Result<ObjectiveBreakdown> {
        evaluate_ll(instance, placement)
    }

    fn complete(&self, instance: &NetworkInstance, controllers: Vec<usize>) -> Placement {
        let gamma = instance.gamma();
        let penalty: Vec<f64> = controllers
            .iter()
            .map(|&j| {
                gamma
                    * controllers
                        .iter()
                        .map(|&k| instance.node_distance(j, k))
                        .sum::<f64>()
            })
            .collect();
        let assignment = Placement::assign_with_penalty(instance, &controllers, &penalty);
        let mut placement = Placement {
            controllers,
            assignment,
            leader: None,
            objective: ObjectiveBreakdown::default(),
        };
        placement.objective =
            evaluate_ll(instance, &placement).expect("assignment built from controllers");
        placement
    }

    fn continuous_objective(
        &self,
        instance: &NetworkInstance,
        centroids: &CentroidSet,
        gamma: f64,
    ) -> ObjectiveBreakdown {
        let spread = centroids.spread();
        let mut load = vec![0usize; centroids.len()];
        let mut delay = 0.0;
        for i in 0..instance.len() {
            let x = instance.position(i);
            let mut best = (0, f64::INFINITY, f64::INFINITY);
            for (j, y) in centroids.positions().iter().enumerate() {
                let d = sq_dist(x, y);
                let e = d + gamma * spread[j];
                if e < best.2 {
                    best = (j, d, e);
                }
            }
            let (j, d, _) = best;
            load[j] += 1;
            delay += d;
        }
        let sync = load.iter().zip(&spread).map(|(&n, s)| n as f64 * s).sum();
        ObjectiveBreakdown::new(delay, sync, gamma)
    }
}

/// Leader-less deterministic annealing with projection onto candidates.
pub fn run_ecp_ll(
    instance: &NetworkInstance,
    config: &ScheduleConfig,
    seed: u64,
) -> Result<RunReport> {
    run_ecp_ll_with(instance, config, seed, LlUpdate::default())
}

pub fn run_ecp_ll_with(
    instance: &NetworkInstance,
    config: &ScheduleConfig,
    seed: u64,
    update: LlUpdate,
) -> Result<RunReport> {
    anneal::run(&LeaderLess { update }, instance, config, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn line(xs: &[f64], gamma: f64) -> NetworkInstance {
        NetworkInstance::all_candidates(xs.iter().map(|&x| vec![x]).collect(), gamma).unwrap()
    }

    #[test]
    fn distortion_examples() {
        let inst = line(&[0.0], 0.5);
        let c = CentroidSet::new(vec![vec![1.0], vec![3.0]]).unwrap();
        let ctx = LlIterationContext::new(&inst, &c, Exec::Sequential);
        assert_eq!(ll_distortion(0, 0, &ctx, 0.5), 3.0);
        assert_eq!(ll_distortion(0, 0, &ctx, 0.0), 1.0);
        let one = CentroidSet::new(vec![vec![2.0]]).unwrap();
        let ctx1 = LlIterationContext::new(&inst, &one, Exec::Sequential);
        assert_eq!(ll_distortion(0, 0, &ctx1, 7.0), 4.0);
    }

    #[test]
    fn association_examples() {
        // D row (1, 3) at T = 2: x = 0, centroids at ±1 and sqrt(3).
        let inst = line(&[0.0], 0.0);
        let c = CentroidSet::new(vec![vec![1.0], vec![3f64.sqrt()]]).unwrap();
        let ctx = LlIterationContext::new(&inst, &c, Exec::Sequential);
        let a = ll_association_update(&ctx, 0.0, 2.0, Exec::Sequential).unwrap();
        let e = (-1f64).exp();
        assert!((a.get(0, 0) - 1.0 / (1.0 + e)).abs() < 1e-12);
        assert!((a.get(0, 1) - e / (1.0 + e)).abs() < 1e-12);
        assert!((a.get(0, 0) - 0.7311).abs() < 1e-4);

        let sym = CentroidSet::new(vec![vec![-1.0], vec![1.0]]).unwrap();
        let ctx = LlIterationContext::new(&inst, &sym, Exec::Sequential);
        let a = ll_association_update(&ctx, 0.3, 0.7, Exec::Sequential).unwrap();
        assert_eq!(a.get(0, 0), a.get(0, 1));

        let near = CentroidSet::new(vec![vec![0.5], vec![0.6]]).unwrap();
        let ctx = LlIterationContext::new(&inst, &near, Exec::Sequential);
        let a = ll_association_update(&ctx, 0.0, 1e-6, Exec::Sequential).unwrap();
        assert_eq!(a.get(0, 0), 1.0);
        assert!(ll_association_update(&ctx, 0.0, 0.0, Exec::Sequential).is_err());
    }

    #[test]
    fn posterior_examples() {
        let hard =
            AssociationMatrix::from_rows(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0]])
                .unwrap();
        let p = posterior(&hard, &[1.0 / 3.0; 3]).unwrap();
        assert!((p.get(0, 0) - 0.5).abs() < 1e-15 && (p.get(2, 0) - 0.5).abs() < 1e-15);
        assert_eq!(p.get(1, 1), 1.0);

        let single = AssociationMatrix::from_rows(vec![vec![0.3, 0.7]]).unwrap();
        let p = posterior(&single, &[1.0]).unwrap();
        assert_eq!((p.get(0, 0), p.get(0, 1)), (1.0, 1.0));

        let soft = AssociationMatrix::from_rows(vec![vec![0.8, 0.2], vec![0.4, 0.6]]).unwrap();
        let p = posterior(&soft, &[0.5, 0.5]).unwrap();
        assert!((p.get(0, 0) - 2.0 / 3.0).abs() < 1e-15);
        assert!((p.get(1, 0) - 1.0 / 3.0).abs() < 1e-15);

        let empty = AssociationMatrix::from_rows(vec![vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap();
        assert!(matches!(
            posterior(&empty, &[0.5, 0.5]),
            Err(EcpError::DegenerateCluster { cluster: 1 })
        ));
    }

    #[test]
    fn centroid_solve_examples() {
        // m = 1: y = C.
        let y = solve_from_means(&[vec![2.5, -1.0]], 3.0);
        assert_eq!(y.get(0), &[2.5, -1.0]);
        // gamma = 0: decoupled means.
        let y = solve_from_means(&[vec![1.0], vec![4.0]], 0.0);
        assert_eq!(y.positions(), &[vec![1.0], vec![4.0]]);
        // m = 2, gamma = 1, C = (1, 4): y = (2, 3).
        let y = solve_from_means(&[vec![1.0], vec![4.0]], 1.0);
        assert!((y.get(0)[0] - 2.0).abs() < 1e-15 && (y.get(1)[0] - 3.0).abs() < 1e-15);
        let eta = 2.0;
        assert!((eta * y.get(0)[0] - y.get(1)[0] - 1.0).abs() < 1e-14);
        assert!((eta * y.get(1)[0] - y.get(0)[0] - 4.0).abs() < 1e-14);
        let dense = solve_from_means_dense(&[vec![1.0], vec![4.0]], 1.0).unwrap();
        assert!((dense.get(0)[0] - 2.0).abs() < 1e-12 && (dense.get(1)[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn stationary_solve_examples() {
        // M = (1/2, 1/2), C = (1, 4), γ = 1: 1.5 y0 − y1 = 0.5, −y0 + 1.5 y1 = 2.
        let y = ll_stationary_solve(&[0.5, 0.5], &[vec![0.5], vec![2.0]], 1.0).unwrap();
        assert!((y.get(0)[0] - 2.2).abs() < 1e-12 && (y.get(1)[0] - 2.8).abs() < 1e-12);
        let y = ll_stationary_solve(&[0.25, 0.5], &[vec![0.5, 1.0], vec![2.0, -1.0]], 0.0).unwrap();
        assert_eq!(y.positions(), &[vec![2.0, 4.0], vec![4.0, -2.0]]);
        assert!(matches!(
            ll_stationary_solve(&[0.5, 0.0], &[vec![0.5], vec![0.0]], 1.0),
            Err(EcpError::DegenerateCluster { cluster: 1 })
        ));
    }

    fn ll_energy(
        inst: &NetworkInstance,
        assoc: &AssociationMatrix,
        y: &CentroidSet,
        gamma: f64,
    ) -> f64 {
        let w = inst.weights();
        let spread = y.spread();
        (0..inst.len())
            .map(|i| {
                (0..y.len())
                    .map(|j| {
                        w[i] * assoc.get(i, j)
                            * (sq_dist(inst.position(i), y.get(j)) + gamma * spread[j])
                    })
                    .sum::<f64>()
            })
            .sum()
    }

    #[test]
    fn stationary_update_minimizes_distortion() {
        let inst = line(&[0.0, 1.0, 5.0, 6.0, 9.0], 0.3);
        let assoc = AssociationMatrix::from_rows(vec![
            vec![0.8, 0.1, 0.1],
            vec![0.6, 0.3, 0.1],
            vec![0.1, 0.7, 0.2],
            vec![0.1, 0.6, 0.3],
            vec![0.05, 0.15, 0.8],
        ])
        .unwrap();
        let y0 = CentroidSet::new(vec![vec![0.0], vec![5.0], vec![9.0]]).unwrap();
        let tables = DistanceTables::compute(&inst, &y0, Exec::Sequential);
        let exact = LeaderLess {
            update: LlUpdate::Stationary,
        };
        let block = LeaderLess {
            update: LlUpdate::Block,
        };
        let ys = exact
            .update_centroids(&inst, &assoc, &y0, &tables, 0.3)
            .unwrap();
        let yb = block
            .update_centroids(&inst, &assoc, &y0, &tables, 0.3)
            .unwrap();
        let best = ll_energy(&inst, &assoc, &ys, 0.3);
        assert!(best <= ll_energy(&inst, &assoc, &yb, 0.3));
        for j in 0..3 {
            for h in [1e-4, -1e-4] {
                let mut p = ys.positions().to_vec();
                p[j][0] += h;
                assert!(ll_energy(&inst, &assoc, &CentroidSet::new(p).unwrap(), 0.3) > best);
            }
        }
    }

    #[test]
    fn update_rules_agree_without_coupling() {
        let inst = line(&[0.0, 1.0, 5.0], 0.0);
        let assoc =
            AssociationMatrix::from_rows(vec![vec![0.9, 0.1], vec![0.5, 0.5], vec![0.2, 0.8]])
                .unwrap();
        let y0 = CentroidSet::new(vec![vec![0.0], vec![5.0]]).unwrap();
        let tables = DistanceTables::compute(&inst, &y0, Exec::Sequential);
        let a = LeaderLess {
            update: LlUpdate::Stationary,
        }
        .update_centroids(&inst, &assoc, &y0, &tables, 0.0)
        .unwrap();
        let b = LeaderLess {
            update: LlUpdate::Block,
        }
        .update_centroids(&inst, &assoc, &y0, &tables, 0.0)
        .unwrap();
        assert_eq!(a, b);
        assert_eq!("block".parse::<LlUpdate>().unwrap(), LlUpdate::Block);
        assert!("nash".parse::<LlUpdate>().is_err());
    }

    #[test]
    fn determinant_examples() {
        assert!((ll_coefficient_determinant(1, 3, 2.0) - 1.0).abs() < 1e-12);
        assert!((ll_coefficient_determinant(4, 2, 0.0) - 1.0).abs() < 1e-12);
        assert!((ll_coefficient_determinant(3, 2, 0.5) - 39.0625).abs() < 1e-9);
    }

    #[test]
    fn gamma_zero_is_classical_mean_update() {
        let inst = line(&[0.0, 1.0, 5.0, 6.0], 0.0);
        let assoc = AssociationMatrix::from_rows(vec![
            vec![0.9, 0.1],
            vec![0.7, 0.3],
            vec![0.2, 0.8],
            vec![0.05, 0.95],
        ])
        .unwrap();
        let post = posterior(&assoc, &inst.weights()).unwrap();
        let y = ll_centroid_solve(&post, &inst, 0.0);
        for j in 0..2 {
            let num: f64 = (0..4).map(|i| assoc.get(i, j) * inst.position(i)[0]).sum();
            let den: f64 = (0..4).map(|i| assoc.get(i, j)).sum();
            assert!((y.get(j)[0] - num / den).abs() < 1e-12);
        }
    }

    #[test]
    fn boltzmann_fixed_point() {
        // Recomputing associations from the energies implied by a Boltzmann
        // row reproduces the row.
        let inst = line(&[0.0, 1.0, 2.5, 7.0], 0.4);
        let c = CentroidSet::new(vec![vec![0.3], vec![2.0], vec![6.0]]).unwrap();
        let ctx = LlIterationContext::new(&inst, &c, Exec::Sequential);
        let t = 1.7;
        let a = ll_association_update(&ctx, 0.4, t, Exec::Sequential).unwrap();
        for i in 0..4 {
            for j in 0..3 {
                for k in 0..3 {
                    let lhs = (a.get(i, j) / a.get(i, k)).ln();
                    let rhs =
                        -(ll_distortion(i, j, &ctx, 0.4) - ll_distortion(i, k, &ctx, 0.4)) / t;
                    assert!((lhs - rhs).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn far_pairs_match_oracle() {
        let inst = line(&[0.0, 1.0, 100.0, 101.0], 0.01);
        let report = run_ecp_ll(&inst, &ScheduleConfig::default().with_k_max(2), 3).unwrap();
        let oracle = crate::oracle::ll_brute_force(&inst, Some(2)).unwrap();
        assert_eq!(report.placement.controllers, vec![1, 2]);
        assert_eq!(oracle.placement.controllers, vec![1, 2]);
        assert!((report.placement.objective.total - oracle.objective).abs() < 1e-9);
        assert!((oracle.objective - (2.0 + 0.01 * 4.0 * 9801.0)).abs() < 1e-9);
    }

    #[test]
    fn single_node_run() {
        let inst = line(&[3.0], 0.5);
        let report = run_ecp_ll(&inst, &ScheduleConfig::default().with_k_max(4), 1).unwrap();
        assert_eq!(report.placement.controllers, vec![0]);
        assert_eq!(report.placement.objective.total, 0.0);
    }

    proptest! {
        #[test]
        fn closed_form_matches_dense(
            m in 1usize..=8,
            d in 1usize..=3,
            gamma in 0.0f64..5.0,
            seed in prop::collection::vec(-20.0f64..20.0, 24),
        ) {
            let means: Vec<Vec<f64>> = (0..m).map(|j| (0..d).map(|k| seed[j * 3 + k]).collect()).collect();
            let a = solve_from_means(&means, gamma);
            let b = solve_from_means_dense(&means, gamma).unwrap();
            let scale = means.iter().flatten().fold(1.0f64, |s, v| s.max(v.abs()));
            for (ya, yb) in a.positions().iter().zip(b.positions()) {
                for (u, v) in ya.iter().zip(yb) {
                    prop_assert!((u - v).abs() <= 1e-9 * scale);
                }
            }
        }

        #[test]
        fn determinant_closed_form(m in 1usize..=5, d in 1usize..=3, gamma in 0.0f64..3.0) {
            let num = ll_coefficient_determinant(m, d, gamma);
            let expect = (gamma * m as f64 + 1.0).powi(((m - 1) * d) as i32);
            prop_assert!(num > 0.0);
            prop_assert!((num - expect).abs() <= 1e-6 * expect);
        }
    }
}
