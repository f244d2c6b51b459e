//! Deterministic-annealing machinery shared by the leader-less and
//! leader-based solvers.
//!
//! The annealer starts from a single centroid at the weighted mass center
//! and a temperature well above the first critical temperature. At each
//! temperature it alternates Boltzmann association updates with the
//! topology's centroid update until the free energy `F = D - T H` and the
//! centroid positions settle, then cools geometrically and duplicates
//! centroids with a small symmetric perturbation so that a phase transition
//! can separate them. After the last temperature a zero-temperature pass
//! produces hard assignments and the surviving centroids are projected onto
//! the nearest candidate nodes.

use std::cmp::Ordering;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{EcpError, Result};
use crate::exec::Exec;
use crate::network::{sq_dist, NetworkInstance, ObjectiveBreakdown, Placement};

/// Columns whose posterior mass falls below this are treated as empty.
pub const MIN_CLUSTER_MASS: f64 = 1e-300;

/// Tolerance for row sums of an association matrix.
pub const ROW_SUM_TOL: f64 = 1e-9;

/// Centroid (controller) locations `y_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentroidSet {
    positions: Vec<Vec<f64>>,
}

impl CentroidSet {
    pub fn new(positions: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = positions.first() else {
            return Err(EcpError::InvalidConfig(
                "centroid set must be non-empty".into(),
            ));
        };
        let d = first.len();
        if let Some(bad) = positions.iter().find(|p| p.len() != d) {
            return Err(EcpError::DimensionMismatch {
                expected: d,
                found: bad.len(),
            });
        }
        Ok(Self { positions })
    }

    pub(crate) fn from_vec(positions: Vec<Vec<f64>>) -> Self {
        debug_assert!(!positions.is_empty());
        Self { positions }
    }

    pub fn positions(&self) -> &[Vec<f64>] {
        &self.positions
    }

    pub fn get(&self, j: usize) -> &[f64] {
        &self.positions[j]
    }

    /// Number of centroids `m`.
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.positions[0].len()
    }

    pub fn into_positions(self) -> Vec<Vec<f64>> {
        self.positions
    }

    /// `m x m` row-major matrix of squared distances between centroids.
    pub fn pairwise_distances(&self) -> Vec<f64> {
        let m = self.len();
        let mut out = vec![0.0; m * m];
        for a in 0..m {
            for b in a + 1..m {
                let d = sq_dist(&self.positions[a], &self.positions[b]);
                out[a * m + b] = d;
                out[b * m + a] = d;
            }
        }
        out
    }

    /// `s_j = Σ_k d(y_j, y_k)` for every centroid.
    pub fn spread(&self) -> Vec<f64> {
        let m = self.len();
        let pd = self.pairwise_distances();
        (0..m)
            .map(|j| pd[j * m..(j + 1) * m].iter().sum())
            .collect()
    }

    fn remove(&mut self, j: usize) {
        self.positions.remove(j);
    }
}

/// Soft memberships `p(y_j | x_i)`, `N x m`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct AssociationMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl AssociationMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if cols == 0 {
            return Err(EcpError::InvalidConfig(
                "association matrix needs at least one column".into(),
            ));
        }
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(EcpError::DimensionMismatch {
                    expected: cols,
                    found: r.len(),
                });
            }
            if r.iter().any(|&p| !(p >= 0.0)) {
                return Err(EcpError::InvalidConfig(format!(
                    "row {i} has a negative entry"
                )));
            }
            let s: f64 = r.iter().sum();
            if (s - 1.0).abs() > ROW_SUM_TOL {
                return Err(EcpError::InvalidConfig(format!("row {i} sums to {s}")));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub(crate) fn from_flat(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    /// Every node fully associated with a single centroid.
    pub fn ones(rows: usize) -> Self {
        Self::from_flat(rows, 1, vec![1.0; rows])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    /// Weighted column masses `Σ_i w_i p(y_j | x_i)`, summed in node order.
    pub fn column_mass(&self, weights: &[f64]) -> Vec<f64> {
        let mut mass = vec![0.0; self.cols];
        for (i, &w) in weights.iter().enumerate() {
            for (mj, &p) in mass.iter_mut().zip(self.row(i)) {
                *mj += w * p;
            }
        }
        mass
    }

    /// Weighted first moments `Σ_i w_i p(y_j | x_i) x_i`, one vector per column.
    pub(crate) fn column_moment(
        &self,
        instance: &NetworkInstance,
        weights: &[f64],
    ) -> Vec<Vec<f64>> {
        let d = instance.dimension();
        let mut out = vec![vec![0.0; d]; self.cols];
        for (i, &w) in weights.iter().enumerate() {
            let x = instance.position(i);
            for (bj, &p) in out.iter_mut().zip(self.row(i)) {
                let c = w * p;
                for (b, &xk) in bj.iter_mut().zip(x) {
                    *b += c * xk;
                }
            }
        }
        out
    }
}

/// Node-to-centroid and centroid-to-centroid squared distances for one sweep.
#[derive(Debug, Clone)]
pub struct DistanceTables {
    pub n: usize,
    pub m: usize,
    /// `N x m`, row-major.
    pub node_centroid: Vec<f64>,
    /// `m x m`, symmetric, zero diagonal.
    pub centroid_centroid: Vec<f64>,
}

impl DistanceTables {
    pub fn compute(instance: &NetworkInstance, centroids: &CentroidSet, exec: Exec) -> Self {
        let m = centroids.len();
        let rows = exec.map(instance.len(), |i| {
            let x = instance.position(i);
            centroids
                .positions()
                .iter()
                .map(|y| sq_dist(x, y))
                .collect::<Vec<_>>()
        });
        Self {
            n: instance.len(),
            m,
            node_centroid: rows.concat(),
            centroid_centroid: centroids.pairwise_distances(),
        }
    }

    pub fn node_row(&self, i: usize) -> &[f64] {
        &self.node_centroid[i * self.m..(i + 1) * self.m]
    }

    pub fn centroid(&self, a: usize, b: usize) -> f64 {
        self.centroid_centroid[a * self.m + b]
    }

    /// Per-centroid `Σ_k d(y_j, y_k)`.
    pub fn spread(&self) -> Vec<f64> {
        (0..self.m)
            .map(|j| {
                self.centroid_centroid[j * self.m..(j + 1) * self.m]
                    .iter()
                    .sum()
            })
            .collect()
    }
}

/// Boltzmann rows `exp(-(d_ij + penalty_j)/T) / Z_i`, shifted by the row
/// minimum before exponentiation.
pub(crate) fn boltzmann(
    tables: &DistanceTables,
    penalty: &[f64],
    temperature: f64,
    exec: Exec,
) -> AssociationMatrix {
    let m = tables.m;
    let rows = exec.map(tables.n, |i| {
        let row = tables.node_row(i);
        let energy: Vec<f64> = row.iter().zip(penalty).map(|(d, p)| d + p).collect();
        let lo = energy.iter().copied().fold(f64::INFINITY, f64::min);
        let mut out: Vec<f64> = energy
            .iter()
            .map(|e| (-(e - lo) / temperature).exp())
            .collect();
        let z: f64 = out.iter().sum();
        out.iter_mut().for_each(|p| *p /= z);
        out
    });
    AssociationMatrix::from_flat(tables.n, m, rows.concat())
}

/// One-hot rows at `argmin_j d_ij + penalty_j`, lowest index on ties.
pub(crate) fn hard_rows(tables: &DistanceTables, penalty: &[f64], exec: Exec) -> AssociationMatrix {
    let m = tables.m;
    let rows = exec.map(tables.n, |i| {
        let mut best = 0;
        let mut best_e = f64::INFINITY;
        for (j, (d, p)) in tables.node_row(i).iter().zip(penalty).enumerate() {
            let e = d + p;
            if e < best_e {
                best_e = e;
                best = j;
            }
        }
        let mut out = vec![0.0; m];
        out[best] = 1.0;
        out
    });
    AssociationMatrix::from_flat(tables.n, m, rows.concat())
}

/// `H = -Σ_i w_i Σ_j p log p` (natural log, `0 log 0 = 0`).
pub fn entropy(assoc: &AssociationMatrix, weights: &[f64]) -> Result<f64> {
    if weights.len() != assoc.rows() {
        return Err(EcpError::DimensionMismatch {
            expected: assoc.rows(),
            found: weights.len(),
        });
    }
    let mut h = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        let row: f64 = assoc
            .row(i)
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| p * p.ln())
            .sum();
        h -= w * row;
    }
    Ok(h.max(0.0))
}

pub fn free_energy(distortion: f64, temperature: f64, entropy: f64) -> f64 {
    distortion - temperature * entropy
}

pub fn cool(temperature: f64, alpha: f64) -> f64 {
    alpha * temperature
}

/// True once the last two free-energy values differ by less than `delta`.
pub fn converged(history: &[f64], delta: f64) -> bool {
    match history {
        [.., prev, last] => (last - prev).abs() < delta,
        _ => false,
    }
}

/// Initial temperature: either fixed or derived from the data spread.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub enum TMax {
    /// `10 * 2 * λ_max` of the weighted data covariance.
    #[default]
    Auto,
    Fixed(f64),
}

/// User-facing schedule. `None` fields are derived from the instance when
/// the schedule is resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub t_max: TMax,
    /// Default `1e-4 * t_max`.
    pub t_min: Option<f64>,
    pub alpha: f64,
    /// Free-energy tolerance; default `1e-6 * D` at the initial state.
    pub delta: Option<f64>,
    pub k_max: usize,
    /// Default `1e-3 * sqrt(λ_max)`.
    pub perturb_scale: Option<f64>,
    /// Default `1e-2 * sqrt(λ_max)`.
    pub merge_tol: Option<f64>,
    /// Largest centroid displacement allowed in the final sweep at a
    /// temperature; default `1e-6 * sqrt(λ_max)`.
    pub move_tol: Option<f64>,
    pub max_iters_per_temperature: usize,
    pub exec: Exec,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            t_max: TMax::Auto,
            t_min: None,
            alpha: 0.9,
            delta: None,
            k_max: 8,
            perturb_scale: None,
            merge_tol: None,
            move_tol: None,
            max_iters_per_temperature: 1000,
            exec: Exec::default(),
        }
    }
}

impl ScheduleConfig {
    pub fn with_k_max(mut self, k_max: usize) -> Self {
        self.k_max = k_max;
        self
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    pub fn resolve(&self, instance: &NetworkInstance) -> Result<Schedule> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(EcpError::InvalidConfig(format!(
                "alpha must be in (0,1), got {}",
                self.alpha
            )));
        }
        if self.k_max == 0 {
            return Err(EcpError::InvalidConfig("k_max must be >= 1".into()));
        }
        if self.max_iters_per_temperature == 0 {
            return Err(EcpError::InvalidConfig(
                "max_iters_per_temperature must be >= 1".into(),
            ));
        }
        let lambda = max_covariance_eigenvalue(instance);
        let scale = if lambda > 0.0 { lambda.sqrt() } else { 1.0 };
        let t_max = match self.t_max {
            TMax::Fixed(t) => t,
            TMax::Auto if lambda > 0.0 => 10.0 * 2.0 * lambda,
            TMax::Auto => 1.0,
        };
        let t_min = self.t_min.unwrap_or(1e-4 * t_max);
        if !(t_max > 0.0 && t_min > 0.0 && t_min < t_max) {
            return Err(EcpError::InvalidConfig(format!(
                "need 0 < t_min < t_max, got {t_min} and {t_max}"
            )));
        }
        let d0 = initial_distortion(instance);
        let delta = self
            .delta
            .unwrap_or(if d0 > 0.0 { 1e-6 * d0 } else { 1e-12 });
        let perturb_scale = self.perturb_scale.unwrap_or(1e-3 * scale);
        let merge_tol = self.merge_tol.unwrap_or(1e-2 * scale);
        let move_tol = self.move_tol.unwrap_or(1e-6 * scale);
        for (name, v) in [
            ("delta", delta),
            ("perturb_scale", perturb_scale),
            ("merge_tol", merge_tol),
            ("move_tol", move_tol),
        ] {
            if !(v > 0.0) {
                return Err(EcpError::InvalidConfig(format!(
                    "{name} must be > 0, got {v}"
                )));
            }
        }
        Ok(Schedule {
            t_max,
            t_min,
            alpha: self.alpha,
            delta,
            k_max: self.k_max,
            perturb_scale,
            merge_tol,
            move_tol,
            max_iters_per_temperature: self.max_iters_per_temperature,
            exec: self.exec,
        })
    }
}

/// A fully resolved schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub t_max: f64,
    pub t_min: f64,
    pub alpha: f64,
    pub delta: f64,
    pub k_max: usize,
    pub perturb_scale: f64,
    pub merge_tol: f64,
    pub move_tol: f64,
    pub max_iters_per_temperature: usize,
    pub exec: Exec,
}

pub fn mass_center(instance: &NetworkInstance) -> Vec<f64> {
    let mut y = vec![0.0; instance.dimension()];
    for node in instance.nodes() {
        for (yk, xk) in y.iter_mut().zip(&node.position) {
            *yk += node.weight * xk;
        }
    }
    y
}

/// Weighted covariance `Σ_i w_i (x_i - c)(x_i - c)^T` about `center`.
pub(crate) fn weighted_covariance<'a>(
    points: impl Iterator<Item = (&'a [f64], f64)>,
    center: &[f64],
) -> DMatrix<f64> {
    let d = center.len();
    let mut cov = DMatrix::zeros(d, d);
    for (x, w) in points {
        for a in 0..d {
            let da = x[a] - center[a];
            for b in 0..d {
                cov[(a, b)] += w * da * (x[b] - center[b]);
            }
        }
    }
    cov
}

pub(crate) fn max_eigenvalue(sym: DMatrix<f64>) -> f64 {
    SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

/// Largest eigenvalue of the weighted data covariance. The first critical
/// temperature of the single-centroid phase is twice this value.
pub fn max_covariance_eigenvalue(instance: &NetworkInstance) -> f64 {
    let c = mass_center(instance);
    let cov = weighted_covariance(
        instance
            .nodes()
            .iter()
            .map(|n| (n.position.as_slice(), n.weight)),
        &c,
    );
    max_eigenvalue(cov)
}

fn initial_distortion(instance: &NetworkInstance) -> f64 {
    let c = mass_center(instance);
    instance
        .nodes()
        .iter()
        .map(|n| n.weight * sq_dist(&n.position, &c))
        .sum()
}

#[derive(Debug, Clone)]
pub struct AnnealState {
    pub temperature: f64,
    pub centroids: CentroidSet,
    pub associations: AssociationMatrix,
    /// Free energy after every sweep at the current temperature.
    pub free_energy_history: Vec<f64>,
}

/// One centroid at the weighted mass center, all associations equal to one.
pub fn initialize(instance: &NetworkInstance, schedule: &Schedule) -> AnnealState {
    AnnealState {
        temperature: schedule.t_max,
        centroids: CentroidSet::from_vec(vec![mass_center(instance)]),
        associations: AssociationMatrix::ones(instance.len()),
        free_energy_history: Vec::new(),
    }
}

/// Replaces centroids by `y ± ε` pairs, `‖ε‖ = perturb_scale`, splitting
/// only the first `k_max - m` centroids when a full doubling would exceed
/// `k_max`. Split pairs stay adjacent; unsplit centroids follow in order.
pub fn split_centroids<R: Rng>(
    state: &AnnealState,
    rng: &mut R,
    schedule: &Schedule,
) -> AnnealState {
    let m = state.centroids.len();
    if m >= schedule.k_max {
        return state.clone();
    }
    let n_split = m.min(schedule.k_max - m);
    let d = state.centroids.dimension();
    let mut positions = Vec::with_capacity(m + n_split);
    for y in &state.centroids.positions()[..n_split] {
        let eps = random_direction(rng, d, schedule.perturb_scale);
        positions.push(y.iter().zip(&eps).map(|(a, e)| a + e).collect());
        positions.push(y.iter().zip(&eps).map(|(a, e)| a - e).collect());
    }
    positions.extend(state.centroids.positions()[n_split..].iter().cloned());
    let rows = state.associations.rows();
    AnnealState {
        temperature: state.temperature,
        associations: uniform_associations(rows, positions.len()),
        centroids: CentroidSet::from_vec(positions),
        free_energy_history: Vec::new(),
    }
}

fn uniform_associations(rows: usize, cols: usize) -> AssociationMatrix {
    AssociationMatrix::from_flat(rows, cols, vec![1.0 / cols as f64; rows * cols])
}

fn random_direction<R: Rng>(rng: &mut R, d: usize, norm: f64) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let len = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if len > 1e-12 {
            return v.into_iter().map(|x| x * norm / len).collect();
        }
    }
}

/// Collapses groups of centroids connected by links shorter than `merge_tol`
/// (transitive closure) into their mean. Groups are ordered by their lowest
/// member index.
pub fn merge_coincident(centroids: &CentroidSet, merge_tol: f64) -> CentroidSet {
    merge_groups(centroids, merge_tol).0
}

/// Like [`merge_coincident`], also returning each group's member indices.
pub(crate) fn merge_groups(
    centroids: &CentroidSet,
    merge_tol: f64,
) -> (CentroidSet, Vec<Vec<usize>>) {
    let m = centroids.len();
    let mut parent: Vec<usize> = (0..m).collect();
    fn find(parent: &mut [usize], mut a: usize) -> usize {
        while parent[a] != a {
            parent[a] = parent[parent[a]];
            a = parent[a];
        }
        a
    }
    let tol2 = merge_tol * merge_tol;
    for a in 0..m {
        for b in a + 1..m {
            if sq_dist(centroids.get(a), centroids.get(b)) < tol2 {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; m];
    for j in 0..m {
        let r = find(&mut parent, j);
        if slot[r] == usize::MAX {
            slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[r]].push(j);
    }
    let d = centroids.dimension();
    let positions = groups
        .iter()
        .map(|g| {
            let mut mean = vec![0.0; d];
            for &j in g {
                for (mk, yk) in mean.iter_mut().zip(centroids.get(j)) {
                    *mk += yk;
                }
            }
            mean.iter_mut().for_each(|v| *v /= g.len() as f64);
            mean
        })
        .collect();
    (CentroidSet::from_vec(positions), groups)
}

/// The coupling between centroids that distinguishes the two controller
/// topologies.
pub trait Topology: Sync {
    fn name(&self) -> &'static str;

    /// Per-centroid additive term of the association exponent and of the
    /// zero-temperature assignment rule.
    fn penalty(&self, tables: &DistanceTables, gamma: f64) -> Vec<f64>;

    /// Part of the total distortion that is not carried by the associations.
    fn detached_distortion(&self, tables: &DistanceTables, gamma: f64) -> f64;

    /// Centroid update at fixed associations. Fails with
    /// [`EcpError::DegenerateCluster`] when a column has no mass.
    fn update_centroids(
        &self,
        instance: &NetworkInstance,
        assoc: &AssociationMatrix,
        centroids: &CentroidSet,
        tables: &DistanceTables,
        gamma: f64,
    ) -> Result<CentroidSet>;

    /// Integer-program objective of a placement.
    fn evaluate(
        &self,
        instance: &NetworkInstance,
        placement: &Placement,
    ) -> Result<ObjectiveBreakdown>;

    /// Completes a placement for a fixed controller set: optimal assignment,
    /// leader (if the topology has one), and objective.
    fn complete(&self, instance: &NetworkInstance, controllers: Vec<usize>) -> Placement;

    /// Integer-program objective with controllers at arbitrary points rather
    /// than nodes (the non-projected solution).
    fn continuous_objective(
        &self,
        instance: &NetworkInstance,
        centroids: &CentroidSet,
        gamma: f64,
    ) -> ObjectiveBreakdown;
}

/// Total distortion `Σ_i w_i Σ_j p(y_j|x_i) (d_ij + penalty_j) + detached`.
pub(crate) fn total_distortion<M: Topology + ?Sized>(
    model: &M,
    assoc: &AssociationMatrix,
    tables: &DistanceTables,
    weights: &[f64],
    gamma: f64,
) -> f64 {
    let pen = model.penalty(tables, gamma);
    let mut d = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        let row: f64 = assoc
            .row(i)
            .iter()
            .zip(tables.node_row(i))
            .zip(&pen)
            .map(|((p, dij), pj)| p * (dij + pj))
            .sum();
        d += w * row;
    }
    d + model.detached_distortion(tables, gamma)
}

/// Per-sweep diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub temperature: f64,
    pub distortion: f64,
    pub entropy: f64,
    pub free_energy: f64,
    pub effective_centroids: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
    /// Temperatures at which the inner loop hit its iteration cap.
    pub unconverged: Vec<f64>,
}

impl Trace {
    /// Record groups that share one temperature, in order.
    pub fn by_temperature(&self) -> Vec<&[TraceRecord]> {
        let mut out = Vec::new();
        let mut start = 0;
        for k in 1..=self.records.len() {
            if k == self.records.len()
                || self.records[k].temperature != self.records[start].temperature
            {
                if k > start {
                    out.push(&self.records[start..k]);
                }
                start = k;
            }
        }
        out
    }

    /// Temperature of the first record with at least `count` effective centroids.
    pub fn first_temperature_with(&self, count: usize) -> Option<f64> {
        self.records
            .iter()
            .find(|r| r.effective_centroids >= count)
            .map(|r| r.temperature)
    }
}

/// Result of a complete annealing run.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub placement: Placement,
    pub trace: Trace,
    /// Objective of the zero-temperature centroids before projection.
    pub continuous_objective: ObjectiveBreakdown,
    /// Zero-temperature centroids after merging coincident copies.
    pub centroids: CentroidSet,
    pub schedule: Schedule,
}

/// Stateful annealer; the run loop and the phase scanner both drive it.
pub struct Annealer<'a, M: Topology> {
    model: &'a M,
    instance: &'a NetworkInstance,
    schedule: Schedule,
    weights: Vec<f64>,
    gamma: f64,
    rng: ChaCha8Rng,
    state: AnnealState,
    tables: DistanceTables,
    trace: Trace,
    iteration: usize,
}

impl<'a, M: Topology> Annealer<'a, M> {
    pub fn new(
        model: &'a M,
        instance: &'a NetworkInstance,
        config: &ScheduleConfig,
        seed: u64,
    ) -> Result<Self> {
        let schedule = config.resolve(instance)?;
        let state = initialize(instance, &schedule);
        let tables = DistanceTables::compute(instance, &state.centroids, schedule.exec);
        Ok(Self {
            model,
            instance,
            weights: instance.weights(),
            gamma: instance.gamma(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            schedule,
            state,
            tables,
            trace: Trace::default(),
            iteration: 0,
        })
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    pub fn state(&self) -> &AnnealState {
        &self.state
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    /// Centroids with coincident copies merged.
    pub fn effective_centroids(&self) -> CentroidSet {
        merge_coincident(&self.state.centroids, self.schedule.merge_tol)
    }

    fn set_centroids(&mut self, centroids: CentroidSet) {
        self.tables = DistanceTables::compute(self.instance, &centroids, self.schedule.exec);
        self.state.centroids = centroids;
    }

    /// One association update followed by one centroid update. Empty
    /// clusters are dropped before the centroid update. Returns the largest
    /// centroid displacement (infinite if a cluster was dropped).
    fn sweep(&mut self, hard: bool) -> Result<f64> {
        let exec = self.schedule.exec;
        let mut dropped = false;
        loop {
            let pen = self.model.penalty(&self.tables, self.gamma);
            let assoc = if hard {
                hard_rows(&self.tables, &pen, exec)
            } else {
                boltzmann(&self.tables, &pen, self.state.temperature, exec)
            };
            match self.model.update_centroids(
                self.instance,
                &assoc,
                &self.state.centroids,
                &self.tables,
                self.gamma,
            ) {
                Ok(next) => {
                    let moved = if dropped {
                        f64::INFINITY
                    } else {
                        next.positions()
                            .iter()
                            .zip(self.state.centroids.positions())
                            .map(|(a, b)| sq_dist(a, b).sqrt())
                            .fold(0.0, f64::max)
                    };
                    self.set_centroids(next);
                    self.state.associations = assoc;
                    self.record(hard)?;
                    return Ok(moved);
                }
                Err(EcpError::DegenerateCluster { cluster }) if self.state.centroids.len() > 1 => {
                    log::debug!(
                        "dropping empty cluster {cluster} at T={}",
                        self.state.temperature
                    );
                    let mut c = self.state.centroids.clone();
                    c.remove(cluster);
                    self.set_centroids(c);
                    dropped = true;
                }
                Err(e) => return Err(e),
            }
        }
    }

    fn record(&mut self, hard: bool) -> Result<()> {
        let distortion = total_distortion(
            self.model,
            &self.state.associations,
            &self.tables,
            &self.weights,
            self.gamma,
        );
        let (t, h) = if hard {
            (0.0, 0.0)
        } else {
            (
                self.state.temperature,
                entropy(&self.state.associations, &self.weights)?,
            )
        };
        let f = free_energy(distortion, t, h);
        self.state.free_energy_history.push(f);
        self.iteration += 1;
        self.trace.records.push(TraceRecord {
            iteration: self.iteration,
            temperature: t,
            distortion,
            entropy: h,
            free_energy: f,
            effective_centroids: self.effective_centroids().len(),
        });
        Ok(())
    }

    /// Sweeps at the current temperature until the free energy and the
    /// centroids settle or the iteration cap is reached. Returns whether the
    /// loop converged.
    pub fn equilibrate(&mut self) -> Result<bool> {
        self.state.free_energy_history.clear();
        for _ in 0..self.schedule.max_iters_per_temperature {
            let moved = self.sweep(false)?;
            if converged(&self.state.free_energy_history, self.schedule.delta)
                && moved < self.schedule.move_tol
            {
                return Ok(true);
            }
        }
        log::warn!(
            "inner loop hit {} iterations at T={}",
            self.schedule.max_iters_per_temperature,
            self.state.temperature
        );
        self.trace.unconverged.push(self.state.temperature);
        Ok(false)
    }

    /// Moves to `temperature`: merges copies that did not separate, then
    /// splits centroids up to `k_max`, hottest clusters first.
    pub fn advance(&mut self, temperature: f64) {
        self.state.temperature = temperature;
        if self.schedule.k_max == 1 {
            return;
        }
        let merged = merge_coincident(&self.state.centroids, self.schedule.merge_tol);
        let ordered = self.order_by_local_critical_temperature(merged);
        let base = AnnealState {
            temperature,
            associations: uniform_associations(self.instance.len(), ordered.len()),
            centroids: ordered,
            free_energy_history: Vec::new(),
        };
        let next = split_centroids(&base, &mut self.rng, &self.schedule);
        self.state.associations = next.associations;
        self.set_centroids(next.centroids);
    }

    /// Sorts centroids by the largest eigenvalue of their posterior-weighted
    /// covariance, descending. That eigenvalue is half the temperature at
    /// which the cluster would split on its own.
    fn order_by_local_critical_temperature(&self, centroids: CentroidSet) -> CentroidSet {
        if centroids.len() == 1 {
            return centroids;
        }
        let tables = DistanceTables::compute(self.instance, &centroids, self.schedule.exec);
        let pen = self.model.penalty(&tables, self.gamma);
        let assoc = boltzmann(&tables, &pen, self.state.temperature, self.schedule.exec);
        let mass = assoc.column_mass(&self.weights);
        let mut keyed: Vec<(f64, Vec<f64>)> = centroids
            .into_positions()
            .into_iter()
            .enumerate()
            .map(|(j, y)| {
                let lambda = if mass[j] > MIN_CLUSTER_MASS {
                    let pts = (0..self.instance.len()).map(|i| {
                        (
                            self.instance.position(i),
                            self.weights[i] * assoc.get(i, j) / mass[j],
                        )
                    });
                    max_eigenvalue(weighted_covariance(pts, &y))
                } else {
                    0.0
                };
                (lambda, y)
            })
            .collect();
        keyed.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal));
        CentroidSet::from_vec(keyed.into_iter().map(|(_, y)| y).collect())
    }

    /// Full geometric schedule from `t_max` down to the first temperature
    /// at or below `t_min`.
    pub fn anneal(&mut self) -> Result<()> {
        loop {
            self.equilibrate()?;
            if self.state.temperature <= self.schedule.t_min {
                return Ok(());
            }
            let next = cool(self.state.temperature, self.schedule.alpha);
            self.advance(next);
        }
    }

    /// Zero-temperature pass followed by projection onto candidate nodes.
    pub fn finish(mut self) -> Result<RunReport> {
        let mut prev: Option<AssociationMatrix> = None;
        self.state.free_energy_history.clear();
        for _ in 0..self.schedule.max_iters_per_temperature {
            self.sweep(true)?;
            if prev.as_ref() == Some(&self.state.associations) {
                break;
            }
            prev = Some(self.state.associations.clone());
        }
        self.state.temperature = 0.0;
        let centroids = self.effective_centroids();
        let continuous_objective =
            self.model
                .continuous_objective(self.instance, &centroids, self.gamma);
        let placement =
            hard_assign_and_project(self.model, &centroids, self.instance, self.schedule.exec);
        Ok(RunReport {
            placement,
            trace: self.trace,
            continuous_objective,
            centroids,
            schedule: self.schedule,
        })
    }
}

/// Maps every centroid to its nearest candidate node (lowest index on ties),
/// collapses duplicates, and completes the placement with the topology's
/// optimal assignment for that controller set.
pub fn hard_assign_and_project<M: Topology + ?Sized>(
    model: &M,
    centroids: &CentroidSet,
    instance: &NetworkInstance,
    exec: Exec,
) -> Placement {
    let candidates = instance.candidates();
    let mut controllers = exec.map(centroids.len(), |j| {
        let y = centroids.get(j);
        let mut best = candidates[0];
        let mut best_d = f64::INFINITY;
        for &c in candidates {
            let d = sq_dist(instance.position(c), y);
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        best
    });
    controllers.sort_unstable();
    controllers.dedup();
    model.complete(instance, controllers)
}

/// Runs the full schedule and returns the projected placement.
pub fn run<M: Topology>(
    model: &M,
    instance: &NetworkInstance,
    config: &ScheduleConfig,
    seed: u64,
) -> Result<RunReport> {
    let mut annealer = Annealer::new(model, instance, config, seed)?;
    annealer.anneal()?;
    annealer.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schedule(k_max: usize) -> Schedule {
        Schedule {
            t_max: 10.0,
            t_min: 0.01,
            alpha: 0.9,
            delta: 1e-9,
            k_max,
            perturb_scale: 1e-3,
            merge_tol: 1e-2,
            move_tol: 1e-9,
            max_iters_per_temperature: 100,
            exec: Exec::Sequential,
        }
    }

    fn state(centroids: Vec<Vec<f64>>, rows: usize) -> AnnealState {
        let m = centroids.len();
        AnnealState {
            temperature: 1.0,
            centroids: CentroidSet::from_vec(centroids),
            associations: uniform_associations(rows, m),
            free_energy_history: vec![],
        }
    }

    #[test]
    fn entropy_examples() {
        let hard = AssociationMatrix::from_rows(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(entropy(&hard, &[0.5, 0.5]).unwrap(), 0.0);
        let uni = AssociationMatrix::from_rows(vec![vec![0.25; 4]; 3]).unwrap();
        assert!((entropy(&uni, &[1.0 / 3.0; 3]).unwrap() - 4f64.ln()).abs() < 1e-12);
        let mixed = AssociationMatrix::from_rows(vec![vec![0.5, 0.5], vec![1.0, 0.0]]).unwrap();
        assert!((entropy(&mixed, &[0.5, 0.5]).unwrap() - 0.5 * 2f64.ln()).abs() < 1e-15);
        assert!(entropy(&mixed, &[1.0]).is_err());
    }

    #[test]
    fn free_energy_examples() {
        assert_eq!(free_energy(3.0, 5.0, 0.0), 3.0);
        assert_eq!(free_energy(3.0, 0.0, 2.0), 3.0);
        assert_eq!(free_energy(10.0, 2.0, 1.5), 7.0);
    }

    #[test]
    fn cool_examples() {
        assert!((cool(10.0, 0.9) - 9.0).abs() < 1e-15);
        assert_eq!(cool(1.0, 0.5), 0.5);
        assert!(cool(0.01, 0.9) < 0.01);
    }

    #[test]
    fn converged_examples() {
        let delta = 0.1;
        assert!(converged(&[10.0, 10.0 + delta / 2.0], delta));
        assert!(!converged(&[10.0, 12.0], 1.0));
        assert!(!converged(&[10.0], 1.0));
        assert!(!converged(&[], 1.0));
    }

    #[test]
    fn initialize_at_mass_center() {
        let inst =
            NetworkInstance::all_candidates(vec![vec![0.0, 0.0], vec![2.0, 2.0]], 0.0).unwrap();
        let s = initialize(&inst, &schedule(4));
        assert_eq!(s.centroids.get(0), &[1.0, 1.0]);
        assert_eq!(s.associations, AssociationMatrix::ones(2));
        assert_eq!(s.temperature, 10.0);

        let nodes = vec![
            crate::network::EdgeNode {
                position: vec![0.0],
                weight: 0.75,
            },
            crate::network::EdgeNode {
                position: vec![4.0],
                weight: 0.25,
            },
        ];
        let inst = NetworkInstance::new(nodes, vec![0, 1], 0.0).unwrap();
        assert_eq!(mass_center(&inst), vec![1.0]);
    }

    #[test]
    fn split_single_centroid() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = split_centroids(&state(vec![vec![1.0, 2.0]], 3), &mut rng, &schedule(4));
        assert_eq!(s.centroids.len(), 2);
        let (a, b) = (s.centroids.get(0), s.centroids.get(1));
        assert!(((a[0] + b[0]) / 2.0 - 1.0).abs() < 1e-15);
        assert!(((a[1] + b[1]) / 2.0 - 2.0).abs() < 1e-15);
        assert!((sq_dist(a, b).sqrt() - 2e-3).abs() < 1e-12);
        assert_eq!(s.associations.cols(), 2);
    }

    #[test]
    fn split_is_clamped() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let full = state(vec![vec![0.0], vec![1.0]], 2);
        assert_eq!(
            split_centroids(&full, &mut rng, &schedule(2)).centroids,
            full.centroids
        );

        let three = state(vec![vec![0.0], vec![5.0], vec![9.0]], 2);
        let s = split_centroids(&three, &mut rng, &schedule(4));
        assert_eq!(s.centroids.len(), 4);
        assert!((s.centroids.get(0)[0] + s.centroids.get(1)[0]).abs() < 1e-15);
        assert_eq!(s.centroids.get(2), &[5.0]);
        assert_eq!(s.centroids.get(3), &[9.0]);
    }

    #[test]
    fn merge_examples() {
        let twins = CentroidSet::from_vec(vec![vec![1.0, 1.0], vec![1.0, 1.0]]);
        assert_eq!(merge_coincident(&twins, 0.1).len(), 1);
        let apart = CentroidSet::from_vec(vec![vec![0.0], vec![1.0]]);
        assert_eq!(merge_coincident(&apart, 0.5), apart);
        // a-b and b-c within tol, a-c not: one group through b.
        let chain = CentroidSet::from_vec(vec![vec![0.0], vec![0.08], vec![0.16]]);
        let merged = merge_coincident(&chain, 0.1);
        assert_eq!(merged.len(), 1);
        assert!((merged.get(0)[0] - 0.08).abs() < 1e-15);
    }

    #[test]
    fn merge_is_idempotent_and_undoes_split() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let base = state(vec![vec![0.0, 0.0], vec![3.0, 1.0], vec![-4.0, 2.0]], 1);
        let sched = schedule(6);
        let split = split_centroids(&base, &mut rng, &sched);
        assert_eq!(split.centroids.len(), 6);
        let merged = merge_coincident(&split.centroids, sched.merge_tol);
        assert_eq!(merged.len(), 3);
        assert_eq!(merge_coincident(&merged, sched.merge_tol), merged);
    }

    #[test]
    fn boltzmann_rows_normalize() {
        let inst =
            NetworkInstance::all_candidates(vec![vec![0.0], vec![1.0], vec![50.0]], 0.0).unwrap();
        let c = CentroidSet::from_vec(vec![vec![0.0], vec![40.0]]);
        let t = DistanceTables::compute(&inst, &c, Exec::Sequential);
        for temp in [1e-6, 0.5, 1e6] {
            let a = boltzmann(&t, &[0.0, 0.0], temp, Exec::Sequential);
            for i in 0..3 {
                assert!((a.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!(a.row(i).iter().all(|p| p.is_finite() && *p >= 0.0));
            }
        }
    }

    #[test]
    fn trace_groups_by_temperature() {
        let rec = |iteration, temperature| TraceRecord {
            iteration,
            temperature,
            distortion: 0.0,
            entropy: 0.0,
            free_energy: 0.0,
            effective_centroids: 1,
        };
        let trace = Trace {
            records: vec![rec(1, 2.0), rec(2, 2.0), rec(3, 1.0)],
            unconverged: vec![],
        };
        let groups = trace.by_temperature();
        assert_eq!(groups.len(), 2);
        assert_eq!(groups[0].len(), 2);
    }
}
