//! Critical temperatures of the leader-less annealer.
//!
//! A phase loses stability where the determinant of
//!
//! ```text
//! M(T) = Σ_i p_i [ Λ_i (1 + mγ) + γ I − 2γ Γ_iᵀ E − 2 Θ_i / T ]
//! ```
//!
//! crosses zero. The vector layout is `m` blocks of `d` coordinates, one
//! block per centroid. `E_j` selects block `j`, `E` sums all blocks,
//! `Λ_i = diag(p(y_j|x_i)) ⊗ I_d`, `Γ_i = Σ_j p(y_j|x_i) E_j` and
//! `Θ_i = Σ_j p(y_j|x_i) T_jiᵀ T_ji` with
//! `T_ji = (y_j − x_i)ᵀ E_j + γ Σ_k (y_j − y_k)ᵀ (E_j − E_k)`.
//!
//! For one centroid at the data mean and `γ = 0` the condition reduces to
//! `Π_k (1 − 2λ_k / T)`, so the first transition is at twice the largest
//! covariance eigenvalue.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::anneal::{Annealer, AssociationMatrix, CentroidSet, ScheduleConfig};
use crate::error::{EcpError, Result};
use crate::exec::Exec;
use crate::ll::{ll_association_update, LeaderLess, LlIterationContext};
use crate::network::NetworkInstance;

pub const DEFAULT_GRID_POINTS: usize = 64;

/// Relative bracket width at which bisection stops.
pub const BISECTION_REL_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct HessianBlocks {
    pub m: usize,
    pub d: usize,
    /// Diagonal of `Λ_i` per node (length `md`).
    pub lambda: Vec<Vec<f64>>,
    /// `Γ_i`, `d x md` per node.
    pub gamma_sel: Vec<DMatrix<f64>>,
    /// `Θ_i`, `md x md` per node.
    pub theta: Vec<DMatrix<f64>>,
    /// `E`, `d x md`.
    pub e: DMatrix<f64>,
}

impl HessianBlocks {
    /// Selector `E_j`.
    pub fn selector(&self, j: usize) -> DMatrix<f64> {
        selector(self.m, self.d, j)
    }
}

fn selector(m: usize, d: usize, j: usize) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(d, m * d);
    for k in 0..d {
        s[(k, j * d + k)] = 1.0;
    }
    s
}

/// Builds the per-node blocks for the given centroids and associations.
pub fn build_blocks(
    instance: &NetworkInstance,
    centroids: &CentroidSet,
    assoc: &AssociationMatrix,
    gamma: f64,
) -> Result<HessianBlocks> {
    let (n, m, d) = (instance.len(), centroids.len(), instance.dimension());
    if assoc.rows() != n {
        return Err(EcpError::DimensionMismatch {
            expected: n,
            found: assoc.rows(),
        });
    }
    if assoc.cols() != m {
        return Err(EcpError::DimensionMismatch {
            expected: m,
            found: assoc.cols(),
        });
    }
    if centroids.dimension() != d {
        return Err(EcpError::DimensionMismatch {
            expected: d,
            found: centroids.dimension(),
        });
    }
    let md = m * d;
    let mut e = DMatrix::zeros(d, md);
    for j in 0..m {
        for k in 0..d {
            e[(k, j * d + k)] = 1.0;
        }
    }
    // Coupling part of T_ji is the same for every node.
    let coupling: Vec<Vec<f64>> = (0..m)
        .map(|j| {
            let mut row = vec![0.0; md];
            let yj = centroids.get(j);
            for k in (0..m).filter(|&k| k != j) {
                let yk = centroids.get(k);
                for c in 0..d {
                    let diff = gamma * (yj[c] - yk[c]);
                    row[j * d + c] += diff;
                    row[k * d + c] -= diff;
                }
            }
            row
        })
        .collect();

    let mut lambda = Vec::with_capacity(n);
    let mut gamma_sel = Vec::with_capacity(n);
    let mut theta = Vec::with_capacity(n);
    for i in 0..n {
        let x = instance.position(i);
        let p = assoc.row(i);
        lambda.push((0..md).map(|r| p[r / d]).collect());
        let mut g = DMatrix::zeros(d, md);
        for j in 0..m {
            for k in 0..d {
                g[(k, j * d + k)] = p[j];
            }
        }
        gamma_sel.push(g);
        let mut th = DMatrix::zeros(md, md);
        for j in 0..m {
            let mut t = coupling[j].clone();
            for c in 0..d {
                t[j * d + c] += centroids.get(j)[c] - x[c];
            }
            for a in 0..md {
                if t[a] == 0.0 {
                    continue;
                }
                for b in 0..md {
                    th[(a, b)] += p[j] * t[a] * t[b];
                }
            }
        }
        theta.push(th);
    }
    Ok(HessianBlocks {
        m,
        d,
        lambda,
        gamma_sel,
        theta,
        e,
    })
}

/// `M(T)` as written, without symmetrizing.
pub fn critical_matrix(
    blocks: &HessianBlocks,
    weights: &[f64],
    temperature: f64,
    gamma: f64,
) -> DMatrix<f64> {
    let md = blocks.m * blocks.d;
    let scale = 1.0 + blocks.m as f64 * gamma;
    let mut out = DMatrix::zeros(md, md);
    for (i, &w) in weights.iter().enumerate() {
        let cross = blocks.gamma_sel[i].transpose() * &blocks.e;
        for a in 0..md {
            out[(a, a)] += w * (blocks.lambda[i][a] * scale + gamma);
        }
        out += (cross * (-2.0 * gamma) - &blocks.theta[i] * (2.0 / temperature)) * w;
    }
    out
}

fn symmetric_part(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// One scanned temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub temperature: f64,
    pub det: f64,
    /// Determinant of the symmetric part of `M(T)`.
    pub symmetric_det: f64,
    pub effective_centroids: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseScanResult {
    pub points: Vec<PhasePoint>,
    /// Descending.
    pub critical_temperatures: Vec<f64>,
}

/// Geometric grid from the resolved `t_max` down to `t_min`.
pub fn default_grid(
    instance: &NetworkInstance,
    config: &ScheduleConfig,
    points: usize,
) -> Result<Vec<f64>> {
    let s = config.resolve(instance)?;
    if points < 2 {
        return Err(EcpError::InvalidConfig(
            "grid needs at least 2 points".into(),
        ));
    }
    let ratio = (s.t_min / s.t_max).powf(1.0 / (points - 1) as f64);
    Ok((0..points)
        .map(|k| s.t_max * ratio.powi(k as i32))
        .collect())
}

/// `det M(T)` for frozen centroids with leader-less associations at `T`.
fn frozen_det(
    instance: &NetworkInstance,
    centroids: &CentroidSet,
    gamma: f64,
    temperature: f64,
    exec: Exec,
) -> Result<(f64, f64)> {
    let ctx = LlIterationContext::new(instance, centroids, exec);
    let assoc = ll_association_update(&ctx, gamma, temperature, exec)?;
    let blocks = build_blocks(instance, centroids, &assoc, gamma)?;
    let m = critical_matrix(&blocks, &instance.weights(), temperature, gamma);
    let sym = symmetric_part(&m).determinant();
    Ok((m.determinant(), sym))
}

fn bisect(f: impl Fn(f64) -> Result<f64>, mut lo: f64, mut hi: f64, f_hi: f64) -> Result<f64> {
    let hi_sign = f_hi.signum();
    while hi - lo > BISECTION_REL_TOL * hi {
        let mid = 0.5 * (lo + hi);
        let v = f(mid)?;
        if v == 0.0 {
            return Ok(mid);
        }
        if v.signum() == hi_sign {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Anneals the leader-less model down `grid`, recording `det M(T)` at each
/// equilibrium with coincident centroids merged. A transition is bracketed
/// where the phase found at one grid point, held fixed while its
/// associations follow the temperature, changes determinant sign before the
/// next grid point; the root is then refined by bisection.
pub fn find_critical_temperatures(
    instance: &NetworkInstance,
    config: &ScheduleConfig,
    gamma: f64,
    grid: &[f64],
    seed: u64,
) -> Result<PhaseScanResult> {
    if grid.len() < 2 {
        return Err(EcpError::InvalidConfig(
            "grid needs at least 2 points".into(),
        ));
    }
    if grid.iter().any(|&t| !(t > 0.0 && t.is_finite())) || grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(EcpError::InvalidConfig(
            "grid must be positive and strictly descending".into(),
        ));
    }
    let inst = instance.with_gamma(gamma)?;
    let exec = config.exec;
    let mut config = config.clone();
    config.t_max = crate::anneal::TMax::Fixed(grid[0]);
    config.t_min = Some(grid[grid.len() - 1].min(grid[0] * 0.5));
    let model = LeaderLess::default();
    let mut annealer = Annealer::new(&model, &inst, &config, seed)?;

    let mut points = Vec::with_capacity(grid.len());
    let mut phases = Vec::with_capacity(grid.len());
    for (k, &t) in grid.iter().enumerate() {
        if k > 0 {
            annealer.advance(t);
        }
        annealer.equilibrate()?;
        let centroids = annealer.effective_centroids();
        let (det, symmetric_det) = frozen_det(&inst, &centroids, gamma, t, exec)?;
        points.push(PhasePoint {
            temperature: t,
            det,
            symmetric_det,
            effective_centroids: centroids.len(),
        });
        phases.push(centroids);
    }

    let mut critical: Vec<f64> = Vec::new();
    for k in 0..grid.len() - 1 {
        let (hi, lo) = (grid[k], grid[k + 1]);
        let f_hi = points[k].det;
        let g = |t: f64| frozen_det(&inst, &phases[k], gamma, t, exec).map(|v| v.0);
        let f_lo = g(lo)?;
        if f_hi == 0.0 {
            critical.push(hi);
        } else if f_lo.signum() != f_hi.signum() {
            critical.push(bisect(g, lo, hi, f_hi)?);
        }
    }
    critical.sort_by(|a, b| b.total_cmp(a));
    critical.dedup_by(|a, b| (*a - *b).abs() <= BISECTION_REL_TOL * b.abs());
    Ok(PhaseScanResult {
        points,
        critical_temperatures: critical,
    })
}
