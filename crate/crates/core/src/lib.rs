//! Edge controller placement by deterministic annealing.
//!
//! Two controller topologies are supported: leader-less, where every
//! controller synchronizes with every other ([`ll`]), and leader-based, where
//! controllers synchronize with a single leader ([`lb`]). Both share the
//! annealing loop in [`anneal`]. [`oracle`] solves small instances exactly and
//! [`phase`] locates the temperatures at which centroids split.
//!
//! ```
//! use ecp_core::{generate_gaussian_instance, run_ecp_ll, GaussianSpec, ScheduleConfig};
//!
//! let instance = generate_gaussian_instance(&GaussianSpec::new(3, 30, 2, 7)).unwrap();
//! let report = run_ecp_ll(&instance, &ScheduleConfig::default().with_k_max(4), 7).unwrap();
//! report.placement.validate(&instance).unwrap();
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod anneal;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod generate;
pub mod io;
pub mod lb;
pub mod ll;
pub mod network;
pub mod oracle;
pub mod phase;

pub use anneal::{Annealer, RunReport, ScheduleConfig, TMax, Trace, TraceRecord};
pub use error::{EcpError, Result};
pub use exec::Exec;
pub use experiment::{BenchRow, BenchSpec, Solver, SweepParameter, SweepRow, SweepSpec};
pub use generate::{generate_gaussian_instance, GaussianSpec};
pub use lb::run_ecp_lb;
pub use ll::{run_ecp_ll, run_ecp_ll_with, LlUpdate};
pub use network::{
    evaluate_lb, evaluate_ll, EdgeNode, NetworkInstance, ObjectiveBreakdown, Placement,
};
pub use oracle::{lb_brute_force, ll_brute_force, OracleReport};
pub use phase::{find_critical_temperatures, PhaseScanResult};
