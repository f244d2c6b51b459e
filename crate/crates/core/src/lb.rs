//! Leader-based placement: controllers synchronize only with one leader.
//!
//! The leader centroid is the one with the smallest summed distance to the
//! others. Associations see plain node-to-centroid distances (the leader's
//! synchronization term is shared by every centroid and cancels in the
//! normalization). With associations and leader fixed, each follower is a
//! blend of its cluster mean and the leader,
//!
//! ```text
//! y_j = (γN y_* + b_j) / (γN + a_j)
//! ```
//!
//! and the leader balances its own cluster against all followers,
//!
//! ```text
//! y_* = (γN Σ_{j≠*} y_j + b_*) / ((m − 1)γN + a_*)
//! ```
//!
//! where `a_j = Σ_i p(y_j|x_i)` and `b_j = Σ_i p(y_j|x_i) x_i`. Substituting
//! the followers into the leader equation gives a scalar-coefficient
//! equation for `y_*`; followers then follow by back-substitution.
//!
//! Node weights enter through `a_j = N Σ_i w_i p(y_j|x_i)` (and likewise
//! `b_j`), which is the plain sum when weights are uniform.

use crate::anneal::{
    self, AssociationMatrix, CentroidSet, DistanceTables, RunReport, ScheduleConfig, Topology,
    MIN_CLUSTER_MASS,
};
use crate::error::{EcpError, Result};
use crate::exec::Exec;
use crate::network::{evaluate_lb, sq_dist, NetworkInstance, ObjectiveBreakdown, Placement};

/// Quantities for one leader-based sweep.
#[derive(Debug, Clone)]
pub struct LbIterationContext {
    pub tables: DistanceTables,
    pub leader: usize,
    /// `a_j`, summing to `N`.
    pub mass: Vec<f64>,
}

impl LbIterationContext {
    pub fn new(
        instance: &NetworkInstance,
        centroids: &CentroidSet,
        assoc: &AssociationMatrix,
        exec: Exec,
    ) -> Self {
        let tables = DistanceTables::compute(instance, centroids, exec);
        let leader = leader_index(&tables.centroid_centroid, tables.m);
        let n = instance.len() as f64;
        let mass = assoc
            .column_mass(&instance.weights())
            .into_iter()
            .map(|a| n * a)
            .collect();
        Self {
            tables,
            leader,
            mass,
        }
    }
}

/// `argmin_j Σ_k d(y_j, y_k)` over an `m x m` row-major distance matrix,
/// lowest index on ties.
pub fn leader_index(centroid_distances: &[f64], m: usize) -> usize {
    debug_assert_eq!(centroid_distances.len(), m * m);
    let mut best = 0;
    let mut best_sum = f64::INFINITY;
    for j in 0..m {
        let s: f64 = centroid_distances[j * m..(j + 1) * m].iter().sum();
        if s < best_sum {
            best_sum = s;
            best = j;
        }
    }
    best
}

/// Boltzmann associations on plain distances, `exp(-d(x_i, y_j)/T) / Z_i`.
pub fn lb_association_update(
    tables: &DistanceTables,
    temperature: f64,
    exec: Exec,
) -> Result<AssociationMatrix> {
    if !(temperature > 0.0) {
        return Err(EcpError::InvalidConfig(format!(
            "temperature must be > 0, got {temperature}"
        )));
    }
    Ok(anneal::boltzmann(
        tables,
        &vec![0.0; tables.m],
        temperature,
        exec,
    ))
}

/// Exact simultaneous solution of the follower and leader equations.
pub fn lb_centroid_update(
    assoc: &AssociationMatrix,
    instance: &NetworkInstance,
    leader: usize,
    gamma: f64,
) -> Result<CentroidSet> {
    let weights = instance.weights();
    let mass = assoc.column_mass(&weights);
    // With coupling, an empty cluster is still pinned by its tie to the leader.
    let empty = if gamma > 0.0 {
        (mass.iter().sum::<f64>() < MIN_CLUSTER_MASS).then_some(leader)
    } else {
        mass.iter().position(|&a| !(a >= MIN_CLUSTER_MASS))
    };
    if let Some(j) = empty {
        return Err(EcpError::DegenerateCluster { cluster: j });
    }
    let moment = assoc.column_moment(instance, &weights);
    Ok(solve_leader_system(&mass, &moment, leader, gamma))
}

/// Solves the coupled system with per-node-normalized sums `A_j = a_j / N`,
/// `B_j = b_j / N` (the `N` cancels against `γN`).
pub(crate) fn solve_leader_system(
    mass: &[f64],
    moment: &[Vec<f64>],
    leader: usize,
    gamma: f64,
) -> CentroidSet {
    let m = mass.len();
    let d = moment[0].len();
    let mut coeff = (m as f64 - 1.0) * gamma + mass[leader];
    let mut rhs = moment[leader].clone();
    for j in (0..m).filter(|&j| j != leader) {
        let denom = gamma + mass[j];
        coeff -= gamma * gamma / denom;
        for (r, b) in rhs.iter_mut().zip(&moment[j]) {
            *r += gamma * b / denom;
        }
    }
    let y_leader: Vec<f64> = rhs.iter().map(|r| r / coeff).collect();
    let positions = (0..m)
        .map(|j| {
            if j == leader {
                y_leader.clone()
            } else {
                let denom = gamma + mass[j];
                (0..d)
                    .map(|k| (gamma * y_leader[k] + moment[j][k]) / denom)
                    .collect()
            }
        })
        .collect();
    CentroidSet::from_vec(positions)
}

/// Leader-based topology for the generic annealer.
#[derive(Debug, Clone, Copy, Default)]
pub struct LeaderBased;

fn best_leader(instance: &NetworkInstance, controllers: &[usize]) -> usize {
    let mut best = controllers[0];
    let mut best_sum = f64::INFINITY;
    for &l in controllers {
        let s: f64 = controllers
            .iter()
            .map(|&j| instance.node_distance(j, l))
            .sum();
        if s < best_sum {
            best_sum = s;
            best = l;
        }
    }
    best
}

impl Topology for LeaderBased {
    fn name(&self) -> &'static str {
        "lb"
    }

    fn penalty(&self, tables: &DistanceTables, _gamma: f64) -> Vec<f64> {
        vec![0.0; tables.m]
    }

    /// `γ min_j Σ_k d(y_j, y_k)`, the per-node share of the leader term.
    fn detached_distortion(&self, tables: &DistanceTables, gamma: f64) -> f64 {
        let s = tables.spread();
        gamma * s[leader_index(&tables.centroid_centroid, tables.m)]
    }

    fn update_centroids(
        &self,
        instance: &NetworkInstance,
        assoc: &AssociationMatrix,
        _centroids: &CentroidSet,
        tables: &DistanceTables,
        gamma: f64,
    ) -> Result<CentroidSet> {
        let leader = leader_index(&tables.centroid_centroid, tables.m);
        lb_centroid_update(assoc, instance, leader, gamma)
    }

    fn evaluate(
        &self,
        instance: &NetworkInstance,
        placement: &Placement,
    ) -> Result<ObjectiveBreakdown> {
        evaluate_lb(instance, placement)
    }

    fn complete(&self, instance: &NetworkInstance, controllers: Vec<usize>) -> Placement {
        let leader = best_leader(instance, &controllers);
        let assignment =
            Placement::assign_with_penalty(instance, &controllers, &vec![0.0; controllers.len()]);
        let mut placement = Placement {
            controllers,
            assignment,
            leader: Some(leader),
            objective: ObjectiveBreakdown::default(),
        };
        placement.objective = evaluate_lb(instance, &placement)
            .expect("leader and assignment built from controllers");
        placement
    }

    fn continuous_objective(
        &self,
        instance: &NetworkInstance,
        centroids: &CentroidSet,
        gamma: f64,
    ) -> ObjectiveBreakdown {
        let delay: f64 = instance
            .nodes()
            .iter()
            .map(|n| {
                centroids
                    .positions()
                    .iter()
                    .map(|y| sq_dist(&n.position, y))
                    .fold(f64::INFINITY, f64::min)
            })
            .sum();
        let pd = centroids.pairwise_distances();
        let m = centroids.len();
        let l = leader_index(&pd, m);
        let spread: f64 = pd[l * m..(l + 1) * m].iter().sum();
        ObjectiveBreakdown::new(delay, instance.len() as f64 * spread, gamma)
    }
}

/// Leader-based deterministic annealing with projection onto candidates.
pub fn run_ecp_lb(
    instance: &NetworkInstance,
    config: &ScheduleConfig,
    seed: u64,
) -> Result<RunReport> {
    anneal::run(&LeaderBased, instance, config, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;

    fn line(xs: &[f64], gamma: f64) -> NetworkInstance {
        NetworkInstance::all_candidates(xs.iter().map(|&x| vec![x]).collect(), gamma).unwrap()
    }

    fn leader_of(ys: &[f64]) -> usize {
        let c = CentroidSet::new(ys.iter().map(|&y| vec![y]).collect()).unwrap();
        leader_index(&c.pairwise_distances(), c.len())
    }

    #[test]
    fn leader_examples() {
        assert_eq!(leader_of(&[4.0]), 0);
        assert_eq!(leader_of(&[0.0, 5.0, 6.0]), 1);
        assert_eq!(leader_of(&[-1.0, 1.0]), 0);
    }

    #[test]
    fn association_examples() {
        let inst = line(&[0.0], 0.0);
        let c = CentroidSet::new(vec![vec![0.0], vec![2f64.sqrt()]]).unwrap();
        let t = DistanceTables::compute(&inst, &c, Exec::Sequential);
        let a = lb_association_update(&t, 1.0, Exec::Sequential).unwrap();
        let e = (-2f64).exp();
        assert!((a.get(0, 0) - 1.0 / (1.0 + e)).abs() < 1e-12);
        assert!((a.get(0, 0) - 0.8808).abs() < 1e-4 && (a.get(0, 1) - 0.1192).abs() < 1e-4);

        let eq = CentroidSet::new(vec![vec![-2.0], vec![2.0]]).unwrap();
        let t = DistanceTables::compute(&inst, &eq, Exec::Sequential);
        let a = lb_association_update(&t, 0.3, Exec::Sequential).unwrap();
        assert_eq!(a.get(0, 0), 0.5);
        let a = lb_association_update(&t, 1e-9, Exec::Sequential);
        assert!(a.is_ok());
        let near = CentroidSet::new(vec![vec![0.1], vec![2.0]]).unwrap();
        let t = DistanceTables::compute(&inst, &near, Exec::Sequential);
        assert_eq!(
            lb_association_update(&t, 1e-6, Exec::Sequential)
                .unwrap()
                .get(0, 0),
            1.0
        );
    }

    #[test]
    fn centroid_update_examples() {
        // m = 1 gives the weighted mean.
        let inst = line(&[0.0, 2.0, 7.0], 3.0);
        let y = lb_centroid_update(&AssociationMatrix::ones(3), &inst, 0, 3.0).unwrap();
        assert!((y.get(0)[0] - 3.0).abs() < 1e-12);

        // gamma = 0 decouples.
        let inst = line(&[0.0, 1.0, 5.0, 7.0], 0.0);
        let assoc = AssociationMatrix::from_rows(vec![
            vec![1.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.0, 1.0],
        ])
        .unwrap();
        let y = lb_centroid_update(&assoc, &inst, 1, 0.0).unwrap();
        assert!((y.get(0)[0] - 0.5).abs() < 1e-12 && (y.get(1)[0] - 6.0).abs() < 1e-12);

        // Two nodes at 0 and 4, hard split, gamma N = 1: y = (4/3, 8/3).
        let inst = line(&[0.0, 4.0], 0.5);
        let assoc = AssociationMatrix::from_rows(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let y = lb_centroid_update(&assoc, &inst, 0, 0.5).unwrap();
        assert!((y.get(0)[0] - 4.0 / 3.0).abs() < 1e-12);
        assert!((y.get(1)[0] - 8.0 / 3.0).abs() < 1e-12);
        // Dense 2x2: [[a0 + γN, -γN], [-γN, a1 + γN]] y = b.
        let a = DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0]);
        let sol = a.lu().solve(&DVector::from_row_slice(&[0.0, 4.0])).unwrap();
        assert!((sol[0] - y.get(0)[0]).abs() < 1e-12 && (sol[1] - y.get(1)[0]).abs() < 1e-12);

        // An empty follower sits on the leader; without coupling it is dropped.
        let empty = AssociationMatrix::from_rows(vec![vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let y = lb_centroid_update(&empty, &inst, 0, 0.5).unwrap();
        assert!((y.get(0)[0] - 2.0).abs() < 1e-12 && (y.get(1)[0] - 2.0).abs() < 1e-12);
        assert!(matches!(
            lb_centroid_update(&empty, &inst, 0, 0.0),
            Err(EcpError::DegenerateCluster { cluster: 1 })
        ));
    }

    #[test]
    fn context_mass_sums_to_n() {
        let inst = line(&[0.0, 1.0, 5.0, 7.0, 9.0], 0.2);
        let c = CentroidSet::new(vec![vec![0.5], vec![6.0], vec![8.0]]).unwrap();
        let t = DistanceTables::compute(&inst, &c, Exec::Sequential);
        let a = lb_association_update(&t, 2.0, Exec::Sequential).unwrap();
        let ctx = LbIterationContext::new(&inst, &c, &a, Exec::Sequential);
        assert!((ctx.mass.iter().sum::<f64>() - 5.0).abs() < 1e-9);
        assert_eq!(ctx.leader, 1);
    }

    #[test]
    fn far_pairs_match_oracle() {
        let inst = line(&[0.0, 1.0, 100.0, 101.0], 0.01);
        let report = run_ecp_lb(&inst, &ScheduleConfig::default().with_k_max(2), 3).unwrap();
        let oracle = crate::oracle::lb_brute_force(&inst, Some(2)).unwrap();
        assert_eq!(report.placement.controllers, vec![1, 2]);
        assert_eq!(oracle.placement.controllers, vec![1, 2]);
        assert_eq!(report.placement.leader, oracle.placement.leader);
        assert!((report.placement.objective.total - oracle.objective).abs() < 1e-9);
        assert!((oracle.objective - (2.0 + 0.01 * 4.0 * 9801.0)).abs() < 1e-9);
    }

    #[test]
    fn single_node_run() {
        let inst = line(&[3.0], 0.5);
        let r = run_ecp_lb(&inst, &ScheduleConfig::default().with_k_max(3), 5).unwrap();
        assert_eq!(r.placement.controllers, vec![0]);
        assert_eq!(r.placement.leader, Some(0));
        assert_eq!(r.placement.objective.total, 0.0);
    }

    proptest! {
        #[test]
        fn leader_is_translation_and_scale_invariant(
            ys in prop::collection::vec(-10.0f64..10.0, 1..7),
            shift in -50.0f64..50.0,
            scale in 0.1f64..10.0,
        ) {
            let moved: Vec<f64> = ys.iter().map(|y| y * scale + shift).collect();
            // Skip near-ties where rounding can legitimately flip the argmin.
            let c = CentroidSet::new(ys.iter().map(|&y| vec![y]).collect()).unwrap();
            let mut s = c.spread();
            s.sort_by(f64::total_cmp);
            // Two centroids always tie exactly and both sides keep index 0.
            prop_assume!(s.len() <= 2 || s[1] - s[0] > 1e-9 * (1.0 + s[0]));
            prop_assert_eq!(leader_of(&ys), leader_of(&moved));
        }
    }
}
