//! Seeded mini-batch SGD and trajectory persistence.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::{self, BinaryTask, ObjectiveConfig};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SgdConfig {
    pub eta: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub record_trajectory: bool,
    /// Largest full-data gradient norm accepted before Newton-based methods
    /// use the model; `None` disables the check.
    pub grad_tol: Option<f64>,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self { eta: 1.0, epochs: 100, batch_size: 1024, seed: 0, record_trajectory: false, grad_tol: Some(1e-3) }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidConfig(format!("eta must be positive, got {}", self.eta)));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig("epochs and batch_size must be positive".into()));
        }
        if let Some(tol) = self.grad_tol {
            if !(tol > 0.0) {
                return Err(Error::InvalidConfig(format!("grad_tol must be positive, got {tol}")));
            }
        }
        Ok(())
    }
}

/// Batches of positions `0..n`, one list per SGD iteration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchSchedule {
    pub batches: Vec<Vec<usize>>,
}

impl BatchSchedule {
    pub fn iterations(&self) -> usize {
        self.batches.len()
    }

    /// Translates positions into ids of `rows`.
    pub fn map_to(&self, rows: &[usize]) -> Self {
        Self { batches: self.batches.iter().map(|b| b.iter().map(|&p| rows[p]).collect()).collect() }
    }
}

/// Per epoch, a seeded permutation of `0..n` cut into `⌈n/batch_size⌉` batches.
pub fn make_schedule(seed: u64, n: usize, batch_size: usize, epochs: usize) -> Result<BatchSchedule> {
    if batch_size == 0 || batch_size > n {
        return Err(Error::InvalidConfig(format!("batch size {batch_size} not in 1..={n}")));
    }
    let mut rng = rng::stream(seed);
    let mut batches = Vec::with_capacity(epochs * n.div_ceil(batch_size));
    for _ in 0..epochs {
        let mut perm: Vec<usize> = (0..n).collect();
        rng::shuffle(&mut rng, &mut perm);
        batches.extend(perm.chunks(batch_size).map(<[usize]>::to_vec));
    }
    Ok(BatchSchedule { batches })
}

/// The schedule for training on `n` points; a batch size above `n` is
/// reduced to `n` so retraining on a shrunken dataset keeps working.
pub fn schedule_for(sgd: &SgdConfig, n: usize) -> Result<BatchSchedule> {
    make_schedule(sgd.seed, n, sgd.batch_size.min(n), sgd.epochs)
}

/// Iterates `w` and the gradient applied at it, for every SGD step.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingTrajectory {
    pub dim: usize,
    pub seed: u64,
    pub eta: f64,
    pub batch_size: usize,
    /// `(w_t, g_t)` with `w_{t+1} = w_t - eta * g_t`.
    pub records: Vec<(DVector<f64>, DVector<f64>)>,
}

impl TrainingTrajectory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// The iterate after the last recorded step.
    pub fn final_weights(&self) -> Option<DVector<f64>> {
        self.records.last().map(|(w, g)| w - g * self.eta)
    }
}

/// Runs SGD from `w = 0` over `schedule`, whose positions index into `rows`.
///
/// With `noisy`, each step adds the linear noise term `σ b / |rows|`. The
/// recorded gradient is the batch gradient of the plain objective.
pub fn train(
    task: &BinaryTask,
    rows: &[usize],
    obj: &ObjectiveConfig,
    sgd: &SgdConfig,
    schedule: &BatchSchedule,
    noisy: bool,
) -> Result<(DVector<f64>, Option<TrainingTrajectory>)> {
    if rows.is_empty() {
        return Err(Error::EmptySubset);
    }
    sgd.validate()?;
    obj.validate(task.dim())?;
    let d = task.dim();
    let noise =
        if noisy && obj.sigma > 0.0 { obj.noise.as_ref().map(|b| b * (obj.sigma / rows.len() as f64)) } else { None };
    let mut w = DVector::zeros(d);
    let mut records = Vec::new();
    let mut batch_ids = Vec::with_capacity(sgd.batch_size);
    for (t, batch) in schedule.batches.iter().enumerate() {
        batch_ids.clear();
        for &p in batch {
            batch_ids.push(*rows.get(p).ok_or(Error::OutOfRange(p))?);
        }
        let g = objective::gradient(&w, task, &batch_ids, obj)?;
        let next = match &noise {
            Some(term) => &w - (&g + term) * sgd.eta,
            None => &w - &g * sgd.eta,
        };
        if !next.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { iteration: t });
        }
        if sgd.record_trajectory {
            records.push((w, g));
        }
        w = next;
    }
    let traj = sgd.record_trajectory.then_some(TrainingTrajectory {
        dim: d,
        seed: sgd.seed,
        eta: sgd.eta,
        batch_size: sgd.batch_size,
        records,
    });
    Ok((w, traj))
}

/// Fails with `NotConverged` when the full-data gradient norm exceeds `gate`.
pub fn check_converged(
    w: &DVector<f64>,
    task: &BinaryTask,
    rows: &[usize],
    obj: &ObjectiveConfig,
    noisy: bool,
    gate: Option<f64>,
) -> Result<()> {
    let Some(gate) = gate else { return Ok(()) };
    let g =
        if noisy { objective::noisy_gradient(w, task, rows, obj)? } else { objective::gradient(w, task, rows, obj)? };
    let grad_norm = g.norm();
    if grad_norm > gate {
        return Err(Error::NotConverged { grad_norm, gate });
    }
    Ok(())
}

/// `w + σ b`.
pub fn inject_gaussian(w: &DVector<f64>, sigma: f64, draw: &DVector<f64>) -> Result<DVector<f64>> {
    if draw.len() != w.len() {
        return Err(Error::DimensionMismatch { expected: w.len(), found: draw.len() });
    }
    Ok(w + draw * sigma)
}

const TRAJ_MAGIC: &[u8; 4] = b"ULTJ";
const TRAJ_VERSION: u32 = 1;

pub fn write_trajectory<W: Write>(traj: &TrainingTrajectory, out: W) -> Result<()> {
    let mut out = BufWriter::new(out);
    out.write_all(TRAJ_MAGIC)?;
    out.write_all(&TRAJ_VERSION.to_le_bytes())?;
    out.write_all(&(traj.dim as u64).to_le_bytes())?;
    out.write_all(&(traj.len() as u64).to_le_bytes())?;
    out.write_all(&traj.seed.to_le_bytes())?;
    out.write_all(&traj.eta.to_le_bytes())?;
    out.write_all(&(traj.batch_size as u64).to_le_bytes())?;
    for (t, (w, g)) in traj.records.iter().enumerate() {
        if w.len() != traj.dim || g.len() != traj.dim {
            return Err(Error::TrajectoryMismatch(format!("record {t} has wrong dimension")));
        }
        for v in w.iter().chain(g.iter()) {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

fn take<const N: usize>(input: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    input.read_exact(&mut buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => Error::Format("truncated trajectory".into()),
        _ => Error::Io(e),
    })?;
    Ok(buf)
}

pub fn read_trajectory<R: Read>(input: R) -> Result<TrainingTrajectory> {
    let mut input = BufReader::new(input);
    if &take::<4>(&mut input)? != TRAJ_MAGIC {
        return Err(Error::Format("not a trajectory file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(take(&mut input)?);
    if version != TRAJ_VERSION {
        return Err(Error::Format(format!("unsupported trajectory version {version}")));
    }
    let dim = u64::from_le_bytes(take(&mut input)?) as usize;
    let steps = u64::from_le_bytes(take(&mut input)?) as usize;
    let seed = u64::from_le_bytes(take(&mut input)?);
    let eta = f64::from_le_bytes(take(&mut input)?);
    let batch_size = u64::from_le_bytes(take(&mut input)?) as usize;
    let read_vec = |input: &mut BufReader<R>| -> Result<DVector<f64>> {
        let mut v = Vec::with_capacity(dim);
        for _ in 0..dim {
            v.push(f64::from_le_bytes(take(input)?));
        }
        Ok(DVector::from_vec(v))
    };
    let mut records = Vec::with_capacity(steps.min(1 << 20));
    for _ in 0..steps {
        let w = read_vec(&mut input)?;
        let g = read_vec(&mut input)?;
        records.push((w, g));
    }
    let mut rest = [0u8; 1];
    if input.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after trajectory".into()));
    }
    Ok(TrainingTrajectory { dim, seed, eta, batch_size, records })
}

pub fn save_trajectory(traj: &TrainingTrajectory, path: impl AsRef<Path>) -> Result<()> {
    write_trajectory(traj, File::create(path)?)
}

/// Loads a trajectory and checks it has dimension `dim`.
pub fn load_trajectory(path: impl AsRef<Path>, dim: Option<usize>) -> Result<TrainingTrajectory> {
    let traj = read_trajectory(File::open(path)?)?;
    if let Some(dim) = dim {
        if traj.dim != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: traj.dim });
        }
    }
    Ok(traj)
}
