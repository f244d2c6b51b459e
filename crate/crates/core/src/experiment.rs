//! Parameter sweeps and runtime benchmarks.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::anneal::{RunReport, ScheduleConfig};
use crate::error::{EcpError, Result};
use crate::exec::Exec;
use crate::generate::{generate_gaussian_instance, GaussianSpec};
use crate::lb::run_ecp_lb;
use crate::ll::run_ecp_ll;
use crate::network::NetworkInstance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    Ll,
    Lb,
}

impl Solver {
    pub fn run(
        self,
        instance: &NetworkInstance,
        config: &ScheduleConfig,
        seed: u64,
    ) -> Result<RunReport> {
        match self {
            Solver::Ll => run_ecp_ll(instance, config, seed),
            Solver::Lb => run_ecp_lb(instance, config, seed),
        }
    }
}

impl fmt::Display for Solver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Solver::Ll => "ll",
            Solver::Lb => "lb",
        })
    }
}

impl FromStr for Solver {
    type Err = EcpError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ll" => Ok(Solver::Ll),
            "lb" => Ok(Solver::Lb),
            _ => Err(EcpError::InvalidConfig(format!("unknown solver {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    Gamma,
    KMax,
    N,
    Clusters,
}

impl FromStr for SweepParameter {
    type Err = EcpError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gamma" => Ok(Self::Gamma),
            "k_max" => Ok(Self::KMax),
            "n" => Ok(Self::N),
            "clusters" => Ok(Self::Clusters),
            _ => Err(EcpError::InvalidConfig(format!(
                "unknown sweep parameter {s:?} (expected gamma, k_max, n or clusters)"
            ))),
        }
    }
}

/// Where sweep instances come from. Sweeps over `n` or `clusters` need a
/// generator.
#[derive(Debug, Clone, PartialEq)]
pub enum SweepBase {
    Instance(NetworkInstance),
    Generator(GaussianSpec),
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
    pub base: SweepBase,
    pub solver: Solver,
    pub config: ScheduleConfig,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub objective: f64,
    pub delay_cost: f64,
    pub sync_cost: f64,
    pub controllers: usize,
    /// Absent when timings are omitted from the output.
    #[serde(default)]
    pub wall_time: f64,
}

fn as_count(name: &str, v: f64) -> Result<usize> {
    if v >= 1.0 && v.fract() == 0.0 && v < u32::MAX as f64 {
        Ok(v as usize)
    } else {
        Err(EcpError::InvalidConfig(format!(
            "{name} must be a positive integer, got {v}"
        )))
    }
}

impl SweepSpec {
    fn point(&self, value: f64) -> Result<(NetworkInstance, ScheduleConfig)> {
        let mut config = self.config.clone();
        let instance = match (&self.base, self.parameter) {
            (SweepBase::Instance(inst), SweepParameter::Gamma) => inst.with_gamma(value)?,
            (SweepBase::Instance(inst), SweepParameter::KMax) => {
                config.k_max = as_count("k_max", value)?;
                inst.clone()
            }
            (SweepBase::Instance(_), p) => {
                return Err(EcpError::InvalidConfig(format!(
                    "sweeping {p:?} needs a generator spec"
                )))
            }
            (SweepBase::Generator(g), p) => {
                let mut g = g.clone();
                match p {
                    SweepParameter::Gamma => g.gamma = value,
                    SweepParameter::KMax => config.k_max = as_count("k_max", value)?,
                    SweepParameter::N => g.size = as_count("n", value)?,
                    SweepParameter::Clusters => g.clusters = as_count("clusters", value)?,
                }
                generate_gaussian_instance(&g)?
            }
        };
        Ok((instance, config))
    }
}

/// Runs every sweep point; rows follow the order of `spec.values`.
pub fn run_sweep(spec: &SweepSpec, jobs: Exec) -> Result<Vec<SweepRow>> {
    if spec.values.is_empty() {
        return Err(EcpError::InvalidConfig(
            "sweep needs at least one value".into(),
        ));
    }
    let rows = jobs.map_jobs(&spec.values, |&value| -> Result<SweepRow> {
        let (instance, config) = spec.point(value)?;
        let start = Instant::now();
        let report = spec.solver.run(&instance, &config, spec.seed)?;
        let wall_time = start.elapsed().as_secs_f64();
        let o = report.placement.objective;
        Ok(SweepRow {
            value,
            objective: o.total,
            delay_cost: o.delay_cost,
            sync_cost: o.sync_cost,
            controllers: report.placement.controllers.len(),
            wall_time,
        })
    });
    rows.into_iter().collect()
}

/// Index of the smallest objective, first on ties.
pub fn argmin_objective(rows: &[SweepRow]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (k, r) in rows.iter().enumerate() {
        if best.is_none_or(|b| r.objective < rows[b].objective) {
            best = Some(k);
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct BenchSpec {
    pub sizes: Vec<usize>,
    pub clusters: Vec<usize>,
    pub dimension: usize,
    pub gamma: f64,
    pub solver: Solver,
    pub config: ScheduleConfig,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub n: usize,
    pub clusters: usize,
    pub solver: Solver,
    pub wall_time: f64,
    pub objective: f64,
    pub controllers: usize,
}

/// Times the solver over the `(n, clusters)` grid, one point at a time so
/// measurements do not compete for cores. Instances at different sizes
/// share their cluster centers.
pub fn run_bench(spec: &BenchSpec) -> Result<Vec<BenchRow>> {
    if spec.sizes.is_empty() || spec.clusters.is_empty() {
        return Err(EcpError::InvalidConfig("bench grid is empty".into()));
    }
    let mut rows = Vec::new();
    for &k in &spec.clusters {
        for &n in &spec.sizes {
            let g = GaussianSpec::new(k, n, spec.dimension, spec.seed).with_gamma(spec.gamma);
            let instance = generate_gaussian_instance(&g)?;
            let start = Instant::now();
            let report = spec.solver.run(&instance, &spec.config, spec.seed)?;
            let wall_time = start.elapsed().as_secs_f64().max(f64::MIN_POSITIVE);
            rows.push(BenchRow {
                n,
                clusters: k,
                solver: spec.solver,
                wall_time,
                objective: report.placement.objective.total,
                controllers: report.placement.controllers.len(),
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares `y ≈ slope x + intercept`. `None` with fewer than
/// two points or no spread in `x`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<LinearFit> {
    let n = xs.len();
    if n < 2 || n != ys.len() {
        return None;
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - slope * x - intercept).powi(2))
        .sum();
    let r_squared = if ss_tot == 0.0 {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    };
    Some(LinearFit {
        slope,
        intercept,
        r_squared,
    })
}
