//! JSON and CSV file formats.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::anneal::{Trace, TraceRecord};
use crate::error::{EcpError, Result};
use crate::experiment::{BenchRow, SweepRow};
use crate::network::{EdgeNode, NetworkInstance, Placement};
use crate::phase::PhaseScanResult;

/// On-disk instance. `weights` defaults to uniform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub dimension: usize,
    pub gamma: f64,
    pub nodes: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    pub candidates: Vec<usize>,
}

impl From<&NetworkInstance> for InstanceFile {
    fn from(inst: &NetworkInstance) -> Self {
        Self {
            dimension: inst.dimension(),
            gamma: inst.gamma(),
            nodes: inst.nodes().iter().map(|n| n.position.clone()).collect(),
            weights: Some(inst.weights()),
            candidates: inst.candidates().to_vec(),
        }
    }
}

impl TryFrom<InstanceFile> for NetworkInstance {
    type Error = EcpError;

    fn try_from(f: InstanceFile) -> Result<Self> {
        let n = f.nodes.len();
        if let Some(p) = f.nodes.iter().find(|p| p.len() != f.dimension) {
            return Err(EcpError::DimensionMismatch {
                expected: f.dimension,
                found: p.len(),
            });
        }
        let weights = match f.weights {
            Some(w) if w.len() != n => {
                return Err(EcpError::DimensionMismatch {
                    expected: n,
                    found: w.len(),
                })
            }
            Some(w) => w,
            None if n == 0 => Vec::new(),
            None => vec![1.0 / n as f64; n],
        };
        let nodes = f
            .nodes
            .into_iter()
            .zip(weights)
            .map(|(position, weight)| EdgeNode { position, weight })
            .collect();
        NetworkInstance::new(nodes, f.candidates, f.gamma)
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|source| EcpError::Io {
            path: path.to_path_buf(),
            source,
        })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| EcpError::Io {
            path: path.to_path_buf(),
            source,
        })
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let mut s = String::new();
    open(path)?
        .read_to_string(&mut s)
        .map_err(|source| EcpError::Io {
            path: path.to_path_buf(),
            source,
        })?;
    serde_json::from_str(&s).map_err(|source| EcpError::Parse {
        path: path.to_path_buf(),
        source,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    let io_err = |source| EcpError::Io {
        path: path.to_path_buf(),
        source,
    };
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| io_err(e.into()))?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(io_err)
}

pub fn instance_from_json(s: &str) -> std::result::Result<NetworkInstance, String> {
    let f: InstanceFile = serde_json::from_str(s).map_err(|e| e.to_string())?;
    NetworkInstance::try_from(f).map_err(|e| e.to_string())
}

pub fn load_instance(path: &Path) -> Result<NetworkInstance> {
    NetworkInstance::try_from(read_json::<InstanceFile>(path)?)
}

pub fn save_instance(path: &Path, instance: &NetworkInstance) -> Result<()> {
    write_json(path, &InstanceFile::from(instance))
}

/// Loads a placement and checks it against `instance`.
pub fn load_placement(path: &Path, instance: &NetworkInstance) -> Result<Placement> {
    let p: Placement = read_json(path)?;
    p.validate(instance)?;
    Ok(p)
}

pub fn save_placement(path: &Path, placement: &Placement) -> Result<()> {
    write_json(path, placement)
}

pub const TRACE_HEADER: [&str; 6] = [
    "iteration",
    "temperature",
    "distortion",
    "entropy",
    "free_energy",
    "effective_centroids",
];

pub fn write_trace<W: Write>(w: W, trace: &Trace) -> Result<()> {
    let mut csv = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    csv.write_record(TRACE_HEADER)?;
    for r in &trace.records {
        csv.serialize(r)?;
    }
    csv.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn save_trace(path: &Path, trace: &Trace) -> Result<()> {
    write_trace(create(path)?, trace)
}

pub fn read_trace<R: Read>(r: R) -> Result<Trace> {
    let mut csv = csv::Reader::from_reader(r);
    let records = csv
        .deserialize::<TraceRecord>()
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(Trace {
        records,
        unconverged: Vec::new(),
    })
}

pub fn load_trace(path: &Path) -> Result<Trace> {
    read_trace(open(path)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseRow {
    pub temperature: f64,
    pub det: f64,
    pub effective_centroids: usize,
}

pub fn write_phase<W: Write>(w: W, scan: &PhaseScanResult) -> Result<()> {
    let mut csv = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    csv.write_record(["temperature", "det", "effective_centroids"])?;
    for p in &scan.points {
        csv.serialize(PhaseRow {
            temperature: p.temperature,
            det: p.det,
            effective_centroids: p.effective_centroids,
        })?;
    }
    csv.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_phase<R: Read>(r: R) -> Result<Vec<PhaseRow>> {
    let mut csv = csv::Reader::from_reader(r);
    Ok(csv
        .deserialize()
        .collect::<std::result::Result<Vec<_>, _>>()?)
}

/// Sweep rows as CSV; the `wall_time` column is left out when `timings`
/// is false so that output is reproducible byte for byte.
pub fn write_sweep<W: Write>(w: W, rows: &[SweepRow], timings: bool) -> Result<()> {
    let mut csv = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    let mut header = vec![
        "value",
        "objective",
        "delay_cost",
        "sync_cost",
        "controllers",
    ];
    if timings {
        header.push("wall_time");
    }
    csv.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.value.to_string(),
            r.objective.to_string(),
            r.delay_cost.to_string(),
            r.sync_cost.to_string(),
            r.controllers.to_string(),
        ];
        if timings {
            rec.push(r.wall_time.to_string());
        }
        csv.write_record(&rec)?;
    }
    csv.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_sweep<R: Read>(r: R) -> Result<Vec<SweepRow>> {
    let mut csv = csv::Reader::from_reader(r);
    Ok(csv
        .deserialize()
        .collect::<std::result::Result<Vec<_>, _>>()?)
}

pub fn write_bench<W: Write>(w: W, rows: &[BenchRow]) -> Result<()> {
    let mut csv = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    csv.write_record([
        "n",
        "clusters",
        "solver",
        "wall_time",
        "objective",
        "controllers",
    ])?;
    for r in rows {
        csv.serialize(r)?;
    }
    csv.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_bench<R: Read>(r: R) -> Result<Vec<BenchRow>> {
    let mut csv = csv::Reader::from_reader(r);
    Ok(csv
        .deserialize()
        .collect::<std::result::Result<Vec<_>, _>>()?)
}
