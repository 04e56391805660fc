//! On-disk formats. Coordinates are 1-based in every file; matrices are
//! row-major flat arrays. Floats are written with 17 significant digits.

use std::collections::BTreeMap;
use std::io::{self, Write};
use std::path::Path;

use obsalloc_core::allocation::AllocationResult;
use obsalloc_core::linsys::{SystemModel, TrajectoryData};
use obsalloc_core::measurement::{CoverageStats, MeasurementMatrix, Schedule};
use obsalloc_core::oracle::{MinimalAllocation, SearchSpace};
use obsalloc_core::sysid::{MarkovEstimate, RecoveredSystem, Similarity};
use obsalloc_core::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Writes every `f64` as `d.dddddddddddddddde±x` (17 significant digits).
#[derive(Default)]
pub struct Sig17Formatter;

impl serde_json::ser::Formatter for Sig17Formatter {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            write!(writer, "{}", sig17(value))
        } else {
            writer.write_all(b"null")
        }
    }
    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

pub fn sig17(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn to_json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, Sig17Formatter);
    value.serialize(&mut ser)?;
    out.push(b'\n');
    Ok(out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let bytes = to_json_bytes(value)?;
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::Format(format!("{}: {e}", path.display())))
}

pub fn flatten(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        out.extend(m.row(i).iter());
    }
    out
}

pub fn unflatten(rows: usize, cols: usize, data: &[f64], what: &str) -> Result<DMatrix<f64>, CliError> {
    if data.len() != rows * cols {
        return Err(CliError::Format(format!(
            "{what}: expected {rows}x{cols} = {} entries, got {}",
            rows * cols,
            data.len()
        )));
    }
    Ok(DMatrix::from_row_slice(rows, cols, data))
}

fn to_zero_based(r: usize, coords: &[usize], what: &str) -> Result<Vec<usize>, CliError> {
    coords
        .iter()
        .map(|&c| {
            if c == 0 || c > r {
                Err(CliError::Format(format!("{what}: coordinate {c} outside 1..={r}")))
            } else {
                Ok(c - 1)
            }
        })
        .collect()
}

fn one_based(coords: &[usize]) -> Vec<usize> {
    coords.iter().map(|c| c + 1).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelName {
    Model1,
    Model2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub r: usize,
    pub m: usize,
    #[serde(rename = "A")]
    pub a: Vec<f64>,
    #[serde(rename = "B")]
    pub b: Vec<f64>,
    pub sigma_u2: f64,
    pub sigma_w2: f64,
    pub sigma_eta2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accessible: Option<Vec<usize>>,
}

impl ModelFile {
    pub fn from_model(model: &SystemModel, accessible: Option<&[usize]>) -> Self {
        ModelFile {
            r: model.r(),
            m: model.m(),
            a: flatten(model.a()),
            b: flatten(model.b()),
            sigma_u2: model.sigma_u2(),
            sigma_w2: model.sigma_w2(),
            sigma_eta2: model.sigma_eta2(),
            accessible: accessible.map(one_based),
        }
    }

    /// The model and its 0-based accessible set (if declared).
    pub fn to_model(&self) -> Result<(SystemModel, Option<Vec<usize>>), CliError> {
        let a = unflatten(self.r, self.r, &self.a, "A")?;
        let b = unflatten(self.r, self.m, &self.b, "B")?;
        let model = SystemModel::new(a, b, self.sigma_u2, self.sigma_w2, self.sigma_eta2)?;
        let accessible = match &self.accessible {
            None => None,
            Some(list) => {
                let zero = to_zero_based(self.r, list, "accessible")?;
                if zero.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(CliError::Format("accessible must be sorted and distinct".into()));
                }
                Some(zero)
            }
        };
        Ok((model, accessible))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleFile {
    pub r: usize,
    pub n_bar: usize,
    pub s: usize,
    pub matrices: Vec<Vec<usize>>,
}

impl ScheduleFile {
    pub fn from_schedule(s: &Schedule) -> Self {
        ScheduleFile {
            r: s.r(),
            n_bar: s.n_bar(),
            s: s.s(),
            matrices: s.matrices().iter().map(|m| m.one_based()).collect(),
        }
    }

    pub fn to_schedule(&self) -> Result<Schedule, CliError> {
        let matrices = self
            .matrices
            .iter()
            .map(|c| MeasurementMatrix::from_one_based(self.r, c).map_err(CliError::from))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Schedule::new(self.r, self.n_bar, self.s, matrices)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryRecord {
    pub index: u64,
    pub coords: Vec<usize>,
    /// `T + 1` input vectors.
    pub inputs: Vec<Vec<f64>>,
    /// `T + 2` observation vectors.
    pub observations: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryFile {
    pub r: usize,
    pub m: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub seed: u64,
    pub schedule: ScheduleFile,
    pub trajectories: Vec<TrajectoryRecord>,
}

fn columns(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.column_iter().map(|c| c.iter().copied().collect()).collect()
}

fn from_columns(rows: usize, cols: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>, CliError> {
    if let Some(bad) = cols.iter().find(|c| c.len() != rows) {
        return Err(CliError::Format(format!("{what}: vector of length {} where {rows} expected", bad.len())));
    }
    Ok(DMatrix::from_fn(rows, cols.len(), |i, j| cols[j][i]))
}

impl TrajectoryFile {
    pub fn from_data(schedule: &Schedule, m: usize, seed: u64, trajs: &[TrajectoryData]) -> Self {
        TrajectoryFile {
            r: schedule.r(),
            m,
            horizon: trajs.first().map_or(0, |t| t.horizon),
            seed,
            schedule: ScheduleFile::from_schedule(schedule),
            trajectories: trajs
                .iter()
                .map(|t| TrajectoryRecord {
                    index: t.index,
                    coords: t.measurement.one_based(),
                    inputs: columns(&t.inputs),
                    observations: columns(&t.observations),
                })
                .collect(),
        }
    }

    pub fn to_data(&self) -> Result<(Schedule, Vec<TrajectoryData>), CliError> {
        let schedule = self.schedule.to_schedule()?;
        let trajs = self
            .trajectories
            .iter()
            .map(|rec| {
                let meas = MeasurementMatrix::from_one_based(self.r, &rec.coords)?;
                let inputs = from_columns(self.m, &rec.inputs, "inputs")?;
                let obs = from_columns(meas.len(), &rec.observations, "observations")?;
                Ok(TrajectoryData::new(meas, inputs, obs, self.seed, rec.index)?)
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        Ok((schedule, trajs))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkovFile {
    pub d: usize,
    pub m: usize,
    pub r: usize,
    pub measured: Vec<usize>,
    pub s_min: usize,
    pub s_max: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
    /// `d + 1` row-major `r x m` blocks; unmeasured rows are zero.
    pub blocks: Vec<Vec<f64>>,
}

impl MarkovFile {
    pub fn from_estimate(est: &MarkovEstimate) -> Self {
        MarkovFile {
            d: est.d,
            m: est.m,
            r: est.r,
            measured: one_based(&est.measured()),
            s_min: est.stats.s_min,
            s_max: est.stats.s_max,
            horizon: est.horizon,
            blocks: est.blocks.iter().map(flatten).collect(),
        }
    }

    pub fn to_estimate(&self) -> Result<MarkovEstimate, CliError> {
        if self.blocks.len() != self.d + 1 {
            return Err(CliError::Format(format!("{} blocks for d = {}", self.blocks.len(), self.d)));
        }
        let blocks = self
            .blocks
            .iter()
            .map(|b| unflatten(self.r, self.m, b, "Markov block"))
            .collect::<Result<Vec<_>, _>>()?;
        let measured = to_zero_based(self.r, &self.measured, "measured")?;
        let mut estimated = vec![false; self.r];
        for &i in &measured {
            estimated[i] = true;
        }
        // per-coordinate counts are not stored; only the extremes matter downstream
        let counts = (0..self.r).map(|i| if estimated[i] { self.s_min } else { 0 }).collect();
        let stats = CoverageStats { counts, measured, s_min: self.s_min, s_max: self.s_max };
        Ok(MarkovEstimate { d: self.d, m: self.m, r: self.r, blocks, estimated, stats, horizon: self.horizon })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputMap {
    /// Coordinates whose rows the output map produces.
    pub rows: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecoveredFile {
    pub r: usize,
    pub m: usize,
    #[serde(rename = "A")]
    pub a: Vec<f64>,
    #[serde(rename = "B")]
    pub b: Vec<f64>,
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
    pub c: Option<OutputMap>,
    pub rank_used: usize,
    pub similarity: String,
    /// Stage-one provenance; lets `allocate` derive its default threshold.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_min: Option<usize>,
    #[serde(rename = "T", default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
}

impl RecoveredFile {
    pub fn from_recovered(rec: &RecoveredSystem, rows: Option<&[usize]>, provenance: Option<(usize, usize)>) -> Self {
        RecoveredFile {
            r: rec.a_hat.nrows(),
            m: rec.b_hat.ncols(),
            a: flatten(&rec.a_hat),
            b: flatten(&rec.b_hat),
            c: rec.c_hat.as_ref().map(|c| OutputMap { rows: rows.map(one_based).unwrap_or_default(), data: flatten(c) }),
            rank_used: rec.rank_used,
            similarity: match rec.similarity {
                Similarity::CoordinateExact => "coordinate-exact".into(),
                Similarity::UpToSimilarity => "up-to-similarity".into(),
            },
            s_min: provenance.map(|p| p.0),
            horizon: provenance.map(|p| p.1),
        }
    }

    pub fn a_hat(&self) -> Result<DMatrix<f64>, CliError> {
        unflatten(self.r, self.r, &self.a, "A")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub selected: usize,
    pub rank: usize,
    pub gains: BTreeMap<usize, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationFile {
    pub coords: Vec<usize>,
    pub n_hat: usize,
    pub achieved_rank: usize,
    pub threshold: f64,
    pub trace: Vec<TraceEntry>,
}

impl AllocationFile {
    pub fn from_result(res: &AllocationResult, threshold: f64) -> Self {
        AllocationFile {
            coords: res.allocation.one_based(),
            n_hat: res.n_hat(),
            achieved_rank: res.achieved_rank,
            threshold,
            trace: res
                .trace
                .iter()
                .map(|s| TraceEntry {
                    selected: s.selected + 1,
                    rank: s.rank,
                    gains: s.gains.iter().map(|(&c, &g)| (c + 1, g)).collect(),
                })
                .collect(),
        }
    }
}

/// Dense 0/1 allocation matrix for heat-map rendering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationMatrixFile {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<u8>,
}

impl AllocationMatrixFile {
    pub fn from_result(res: &AllocationResult) -> Self {
        let dense = res.to_dense();
        AllocationMatrixFile {
            rows: dense.nrows(),
            cols: dense.ncols(),
            data: flatten(&dense).into_iter().map(|v| v as u8).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinSensorsFile {
    pub n_star: usize,
    pub witness: Vec<usize>,
    pub search_space: String,
}

impl MinSensorsFile {
    pub fn from_minimal(min: &MinimalAllocation) -> Self {
        MinSensorsFile {
            n_star: min.n_star,
            witness: min.witness.one_based(),
            search_space: match min.search_space {
                SearchSpace::All => "all".into(),
                SearchSpace::Restricted => "restricted".into(),
            },
        }
    }
}
