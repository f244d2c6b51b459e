//! Network model: edge nodes, candidate controllers, placements and the
//! integer-program objectives for the leader-less and leader-based
//! topologies.
//!
//! Distances between nodes are squared Euclidean. Objectives are evaluated
//! with unweighted sums over nodes; node weights only enter the annealing
//! math.

use serde::{Deserialize, Serialize};

use crate::error::{EcpError, Result};

/// Tolerance on `Σ weights = 1`.
pub const WEIGHT_SUM_TOL: f64 = 1e-9;

/// `‖a − b‖²`.
pub fn squared_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(EcpError::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(sq_dist(a, b))
}

/// Unchecked variant for hot loops where dimensions are already validated.
#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeNode {
    pub position: Vec<f64>,
    /// Relative importance of the node, in (0, 1].
    pub weight: f64,
}

/// A wireless edge network: node positions and weights, the nodes allowed
/// to host a controller, and the synchronization coupling `gamma`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkInstance {
    nodes: Vec<EdgeNode>,
    candidates: Vec<usize>,
    gamma: f64,
    dimension: usize,
}

impl NetworkInstance {
    /// Builds an instance from positions with uniform weights `1/N`.
    pub fn uniform(positions: Vec<Vec<f64>>, candidates: Vec<usize>, gamma: f64) -> Result<Self> {
        let n = positions.len();
        let w = if n == 0 { 0.0 } else { 1.0 / n as f64 };
        let nodes = positions
            .into_iter()
            .map(|position| EdgeNode {
                position,
                weight: w,
            })
            .collect();
        Self::new(nodes, candidates, gamma)
    }

    /// Builds an instance where every node is a candidate.
    pub fn all_candidates(positions: Vec<Vec<f64>>, gamma: f64) -> Result<Self> {
        let candidates = (0..positions.len()).collect();
        Self::uniform(positions, candidates, gamma)
    }

    pub fn new(nodes: Vec<EdgeNode>, mut candidates: Vec<usize>, gamma: f64) -> Result<Self> {
        let Some(first) = nodes.first() else {
            return Err(EcpError::InvalidInstance("no nodes".into()));
        };
        let dimension = first.position.len();
        if dimension == 0 {
            return Err(EcpError::InvalidInstance(
                "dimension must be positive".into(),
            ));
        }
        for (i, node) in nodes.iter().enumerate() {
            if node.position.len() != dimension {
                return Err(EcpError::DimensionMismatch {
                    expected: dimension,
                    found: node.position.len(),
                });
            }
            if node.position.iter().any(|c| !c.is_finite()) {
                return Err(EcpError::InvalidInstance(format!(
                    "node {i} has a non-finite coordinate"
                )));
            }
            if !(node.weight > 0.0 && node.weight <= 1.0 + WEIGHT_SUM_TOL) {
                return Err(EcpError::InvalidInstance(format!(
                    "node {i} weight {} outside (0, 1]",
                    node.weight
                )));
            }
        }
        let total: f64 = nodes.iter().map(|n| n.weight).sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(EcpError::InvalidInstance(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(EcpError::InvalidInstance(format!(
                "gamma must be >= 0, got {gamma}"
            )));
        }
        candidates.sort_unstable();
        candidates.dedup();
        if candidates.is_empty() {
            return Err(EcpError::InvalidInstance("candidate set is empty".into()));
        }
        if let Some(&bad) = candidates.iter().find(|&&c| c >= nodes.len()) {
            return Err(EcpError::IndexOutOfRange {
                index: bad,
                len: nodes.len(),
            });
        }
        Ok(Self {
            nodes,
            candidates,
            gamma,
            dimension,
        })
    }

    pub fn nodes(&self) -> &[EdgeNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.nodes[i].position
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.nodes[i].weight
    }

    pub fn weights(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.weight).collect()
    }

    /// Sorted, deduplicated candidate controller indices.
    pub fn candidates(&self) -> &[usize] {
        &self.candidates
    }

    pub fn is_candidate(&self, i: usize) -> bool {
        self.candidates.binary_search(&i).is_ok()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        Self::new(self.nodes.clone(), self.candidates.clone(), gamma)
    }

    pub(crate) fn node_distance(&self, a: usize, b: usize) -> f64 {
        sq_dist(&self.nodes[a].position, &self.nodes[b].position)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ObjectiveBreakdown {
    pub delay_cost: f64,
    pub sync_cost: f64,
    /// `delay_cost + gamma * sync_cost`.
    pub total: f64,
}

impl ObjectiveBreakdown {
    pub fn new(delay_cost: f64, sync_cost: f64, gamma: f64) -> Self {
        Self {
            delay_cost,
            sync_cost,
            total: delay_cost + gamma * sync_cost,
        }
    }
}

/// A controller placement: which nodes are controllers, which controller
/// serves each node, and the leader in the leader-based topology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    /// Sorted node indices of the controllers.
    pub controllers: Vec<usize>,
    /// `assignment[i]` is the node index of the controller serving node `i`.
    pub assignment: Vec<usize>,
    pub leader: Option<usize>,
    pub objective: ObjectiveBreakdown,
}

impl Placement {
    /// Assigns every node to the controller minimizing `d(x_i, x_j) + penalty[j]`,
    /// lowest controller index on ties. `penalty` is indexed like `controllers`.
    pub(crate) fn assign_with_penalty(
        instance: &NetworkInstance,
        controllers: &[usize],
        penalty: &[f64],
    ) -> Vec<usize> {
        (0..instance.len())
            .map(|i| {
                let mut best = controllers[0];
                let mut best_cost = f64::INFINITY;
                for (&c, &p) in controllers.iter().zip(penalty) {
                    let cost = instance.node_distance(i, c) + p;
                    if cost < best_cost {
                        best_cost = cost;
                        best = c;
                    }
                }
                best
            })
            .collect()
    }

    /// Checks the integer-program constraints: one controller per node,
    /// assignments only to designated controllers, controllers drawn from the
    /// candidate set, and the leader (if any) is a controller.
    pub fn validate(&self, instance: &NetworkInstance) -> Result<()> {
        let n = instance.len();
        if self.controllers.is_empty() {
            return Err(EcpError::InvalidPlacement("no controllers".into()));
        }
        if self.assignment.len() != n {
            return Err(EcpError::InvalidPlacement(format!(
                "assignment has {} entries for {n} nodes",
                self.assignment.len()
            )));
        }
        for w in self.controllers.windows(2) {
            if w[0] >= w[1] {
                return Err(EcpError::InvalidPlacement(
                    "controllers must be sorted and distinct".into(),
                ));
            }
        }
        for &c in &self.controllers {
            if c >= n {
                return Err(EcpError::IndexOutOfRange { index: c, len: n });
            }
            if !instance.is_candidate(c) {
                return Err(EcpError::InvalidPlacement(format!(
                    "controller {c} is not a candidate"
                )));
            }
        }
        for (i, &a) in self.assignment.iter().enumerate() {
            if a >= n {
                return Err(EcpError::IndexOutOfRange { index: a, len: n });
            }
            if self.controllers.binary_search(&a).is_err() {
                return Err(EcpError::InvalidPlacement(format!(
                    "node {i} assigned to {a}, which is not a controller"
                )));
            }
        }
        if let Some(l) = self.leader {
            if self.controllers.binary_search(&l).is_err() {
                return Err(EcpError::InvalidPlacement(format!(
                    "leader {l} is not a controller"
                )));
            }
        }
        Ok(())
    }
}

fn check_assignment(instance: &NetworkInstance, placement: &Placement) -> Result<()> {
    let n = instance.len();
    if placement.assignment.len() != n {
        return Err(EcpError::InvalidPlacement(format!(
            "assignment has {} entries for {n} nodes",
            placement.assignment.len()
        )));
    }
    for &c in placement.controllers.iter().chain(&placement.assignment) {
        if c >= n {
            return Err(EcpError::IndexOutOfRange { index: c, len: n });
        }
    }
    for (i, a) in placement.assignment.iter().enumerate() {
        if !placement.controllers.contains(a) {
            return Err(EcpError::InvalidPlacement(format!(
                "node {i} assigned to {a}, which is not a controller"
            )));
        }
    }
    Ok(())
}

fn delay_cost(instance: &NetworkInstance, assignment: &[usize]) -> f64 {
    assignment
        .iter()
        .enumerate()
        .map(|(i, &c)| instance.node_distance(i, c))
        .sum()
}

/// Leader-less objective: node-to-controller delay plus, for every
/// controller, its load times its summed distance to all other controllers.
pub fn evaluate_ll(
    instance: &NetworkInstance,
    placement: &Placement,
) -> Result<ObjectiveBreakdown> {
    check_assignment(instance, placement)?;
    let delay = delay_cost(instance, &placement.assignment);
    let mut sync = 0.0;
    for &j in &placement.controllers {
        let load = placement.assignment.iter().filter(|&&a| a == j).count();
        if load == 0 {
            continue;
        }
        let spread: f64 = placement
            .controllers
            .iter()
            .map(|&k| instance.node_distance(j, k))
            .sum();
        sync += load as f64 * spread;
    }
    Ok(ObjectiveBreakdown::new(delay, sync, instance.gamma()))
}

/// Leader-based objective: node-to-controller delay plus `N` times the summed
/// controller-to-leader distance.
pub fn evaluate_lb(
    instance: &NetworkInstance,
    placement: &Placement,
) -> Result<ObjectiveBreakdown> {
    let leader = placement.leader.ok_or(EcpError::MissingLeader)?;
    check_assignment(instance, placement)?;
    if leader >= instance.len() {
        return Err(EcpError::IndexOutOfRange {
            index: leader,
            len: instance.len(),
        });
    }
    if !placement.controllers.contains(&leader) {
        return Err(EcpError::InvalidPlacement(format!(
            "leader {leader} is not a controller"
        )));
    }
    let delay = delay_cost(instance, &placement.assignment);
    let spread: f64 = placement
        .controllers
        .iter()
        .map(|&j| instance.node_distance(j, leader))
        .sum();
    let sync = instance.len() as f64 * spread;
    Ok(ObjectiveBreakdown::new(delay, sync, instance.gamma()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn line(xs: &[f64], gamma: f64) -> NetworkInstance {
        NetworkInstance::all_candidates(xs.iter().map(|&x| vec![x]).collect(), gamma).unwrap()
    }

    fn placement(
        controllers: Vec<usize>,
        assignment: Vec<usize>,
        leader: Option<usize>,
    ) -> Placement {
        Placement {
            controllers,
            assignment,
            leader,
            objective: ObjectiveBreakdown::default(),
        }
    }

    #[test]
    fn squared_distance_examples() {
        assert_eq!(squared_distance(&[0.0, 0.0], &[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(squared_distance(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 25.0);
        assert_eq!(
            squared_distance(&[1.0, 1.0, 1.0], &[2.0, 3.0, 1.0]).unwrap(),
            5.0
        );
        assert!(matches!(
            squared_distance(&[1.0], &[1.0, 2.0]),
            Err(EcpError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn ll_two_pairs() {
        let inst = line(&[0.0, 1.0, 10.0, 11.0], 0.1);
        let p = placement(vec![0, 2], vec![0, 0, 2, 2], None);
        let obj = evaluate_ll(&inst, &p).unwrap();
        assert_eq!(obj.delay_cost, 2.0);
        assert_eq!(obj.sync_cost, 400.0);
        assert!((obj.total - 42.0).abs() < 1e-12);
    }

    #[test]
    fn lb_two_pairs() {
        let inst = line(&[0.0, 1.0, 10.0, 11.0], 0.1);
        let p = placement(vec![0, 2], vec![0, 0, 2, 2], Some(0));
        let obj = evaluate_lb(&inst, &p).unwrap();
        assert_eq!(obj.delay_cost, 2.0);
        assert_eq!(obj.sync_cost, 400.0);
        assert!((obj.total - 42.0).abs() < 1e-12);
    }

    #[test]
    fn single_controller_has_no_sync() {
        let inst = line(&[0.0, 1.0, 10.0, 11.0], 3.0);
        let p = placement(vec![1], vec![1; 4], Some(1));
        let ll = evaluate_ll(&inst, &p).unwrap();
        let lb = evaluate_lb(&inst, &p).unwrap();
        assert_eq!(ll.sync_cost, 0.0);
        assert_eq!(lb.sync_cost, 0.0);
        assert_eq!(ll.delay_cost, 1.0 + 0.0 + 81.0 + 100.0);
        assert_eq!(ll.total, ll.delay_cost);
    }

    #[test]
    fn gamma_zero_total_is_delay() {
        let inst = line(&[0.0, 1.0, 10.0, 11.0], 0.0);
        let p = placement(vec![0, 2], vec![0, 0, 2, 2], Some(2));
        assert_eq!(evaluate_ll(&inst, &p).unwrap().total, 2.0);
        assert_eq!(evaluate_lb(&inst, &p).unwrap().total, 2.0);
    }

    #[test]
    fn evaluation_errors() {
        let inst = line(&[0.0, 1.0, 10.0], 0.1);
        let bad = placement(vec![0], vec![0, 1, 0], None);
        assert!(matches!(
            evaluate_ll(&inst, &bad),
            Err(EcpError::InvalidPlacement(_))
        ));
        let oob = placement(vec![0], vec![0, 0, 7], None);
        assert!(matches!(
            evaluate_ll(&inst, &oob),
            Err(EcpError::IndexOutOfRange { .. })
        ));
        let no_leader = placement(vec![0], vec![0, 0, 0], None);
        assert!(matches!(
            evaluate_lb(&inst, &no_leader),
            Err(EcpError::MissingLeader)
        ));
    }

    #[test]
    fn best_leader_never_worse() {
        let inst = line(&[0.0, 1.0, 4.0, 10.0, 11.0], 0.5);
        let controllers = vec![0, 2, 4];
        let assignment = vec![0, 0, 2, 4, 4];
        let best = *controllers
            .iter()
            .min_by(|&&a, &&b| {
                let sa: f64 = controllers.iter().map(|&j| inst.node_distance(j, a)).sum();
                let sb: f64 = controllers.iter().map(|&j| inst.node_distance(j, b)).sum();
                sa.total_cmp(&sb)
            })
            .unwrap();
        let best_total = evaluate_lb(
            &inst,
            &placement(controllers.clone(), assignment.clone(), Some(best)),
        )
        .unwrap()
        .total;
        for &l in &controllers {
            let t = evaluate_lb(
                &inst,
                &placement(controllers.clone(), assignment.clone(), Some(l)),
            )
            .unwrap()
            .total;
            assert!(best_total <= t);
        }
    }

    #[test]
    fn instance_validation() {
        assert!(NetworkInstance::uniform(vec![vec![0.0]], vec![], 0.1).is_err());
        assert!(NetworkInstance::uniform(vec![vec![0.0]], vec![3], 0.1).is_err());
        assert!(NetworkInstance::uniform(vec![vec![0.0]], vec![0], -1.0).is_err());
        assert!(NetworkInstance::uniform(vec![vec![0.0], vec![1.0, 2.0]], vec![0], 0.0).is_err());
        let nodes = vec![
            EdgeNode {
                position: vec![0.0],
                weight: 0.5,
            },
            EdgeNode {
                position: vec![1.0],
                weight: 0.4,
            },
        ];
        assert!(NetworkInstance::new(nodes, vec![0], 0.0).is_err());
    }

    proptest! {
        #[test]
        fn total_is_delay_plus_weighted_sync(
            xs in prop::collection::vec(-50.0f64..50.0, 2..10),
            gamma in 0.0f64..5.0,
            mask in 1u32..512,
        ) {
            let inst = line(&xs, gamma);
            let n = xs.len();
            let mut controllers: Vec<usize> = (0..n).filter(|i| mask & (1 << (i % 9)) != 0).collect();
            if controllers.is_empty() { controllers.push(0); }
            let assignment = Placement::assign_with_penalty(&inst, &controllers, &vec![0.0; controllers.len()]);
            let p = placement(controllers.clone(), assignment.clone(), Some(controllers[0]));
            for obj in [evaluate_ll(&inst, &p).unwrap(), evaluate_lb(&inst, &p).unwrap()] {
                prop_assert!((obj.total - (obj.delay_cost + gamma * obj.sync_cost)).abs() <= 1e-9 * (1.0 + obj.total.abs()));
            }
            // Leader-based sync cost ignores the assignment map.
            let mut shuffled = assignment.clone();
            shuffled.iter_mut().for_each(|a| *a = controllers[controllers.len() - 1]);
            let p2 = placement(controllers.clone(), shuffled, Some(controllers[0]));
            prop_assert_eq!(evaluate_lb(&inst, &p).unwrap().sync_cost, evaluate_lb(&inst, &p2).unwrap().sync_cost);
        }

        #[test]
        fn distance_is_symmetric(a in prop::collection::vec(-10.0f64..10.0, 3), b in prop::collection::vec(-10.0f64..10.0, 3)) {
            let ab = squared_distance(&a, &b).unwrap();
            prop_assert_eq!(ab, squared_distance(&b, &a).unwrap());
            prop_assert!(ab >= 0.0);
        }
    }
}
