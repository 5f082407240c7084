//! Timing sweeps of the matrix-form layer against the full-grid reference.
//!
//! Every point builds one random [`KanLayer`] and input batch, checks that
//! both implementations agree, then times a tracked forward pass and the
//! backward pass that follows it. One warm-up repetition is discarded and the
//! median of the remaining ones is reported.

use std::fmt;
use std::io::{self, Write};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;
use ukan_core::layers::{naive_basis_bytes, BoundedGrid, KanLayer, Layer};
use ukan_core::{kan_forward, naive_kan_forward, LayerError, Tape, Tensor};

pub const CSV_HEADER: &str = "impl,k,G,d_in,d_out,batch,forward_s,backward_s,total_s,peak_bytes";

/// Agreement required between the two arms before timing starts.
pub const SANITY_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid sweep: {0}")]
    Config(String),
    #[error("arms disagree at k={k} G={grid}: max difference {diff:e}")]
    Sanity { k: usize, grid: usize, diff: f64 },
    #[error(transparent)]
    Layer(#[from] LayerError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arm {
    Matrix,
    Naive,
}

impl Arm {
    pub fn name(self) -> &'static str {
        match self {
            Arm::Matrix => "matrix",
            Arm::Naive => "naive",
        }
    }

    fn forward(self, layer: &KanLayer, tape: &mut Tape, x: &Tensor) -> Result<Tensor, LayerError> {
        match self {
            Arm::Matrix => kan_forward(layer, tape, x),
            Arm::Naive => naive_kan_forward(layer, tape, x),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub orders: Vec<usize>,
    pub grids: Vec<usize>,
    pub batch: usize,
    pub d_in: usize,
    pub d_out: usize,
    /// Timed repetitions per point (a warm-up run comes on top).
    pub reps: usize,
    /// Worker threads for the forward pass; 1 keeps the sweep single-threaded.
    pub threads: usize,
    /// Naive points whose saved basis would exceed this are reported as OOM.
    pub memory_budget: usize,
    pub seed: u64,
    pub arms: Vec<Arm>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            orders: vec![3],
            grids: vec![16, 64, 256, 1024, 4096],
            batch: 4096,
            d_in: 32,
            d_out: 32,
            reps: 5,
            threads: 1,
            memory_budget: 3 << 30,
            seed: 0,
            arms: vec![Arm::Matrix, Arm::Naive],
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), BenchError> {
        if self.orders.is_empty() || self.grids.is_empty() || self.arms.is_empty() {
            return Err(BenchError::Config("orders, grids and arms must be non-empty".into()));
        }
        if self.reps < 5 {
            return Err(BenchError::Config(format!("need at least 5 repetitions, got {}", self.reps)));
        }
        if self.batch == 0 || self.d_in == 0 || self.d_out == 0 || self.threads == 0 {
            return Err(BenchError::Config("batch, dims and threads must be positive".into()));
        }
        if self.grids.contains(&0) {
            return Err(BenchError::Config("grid sizes must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Timing {
    pub forward_s: f64,
    pub backward_s: f64,
    pub total_s: f64,
    pub peak_bytes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub arm: Arm,
    pub k: usize,
    pub grid: usize,
    pub d_in: usize,
    pub d_out: usize,
    pub batch: usize,
    /// `None` when the point ran out of memory.
    pub timing: Option<Timing>,
}

impl fmt::Display for BenchRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{},{},{},{},",
            self.arm.name(),
            self.k,
            self.grid,
            self.d_in,
            self.d_out,
            self.batch
        )?;
        match &self.timing {
            Some(t) => write!(
                f,
                "{:.9},{:.9},{:.9},{}",
                t.forward_s, t.backward_s, t.total_s, t.peak_bytes
            ),
            None => write!(f, "OOM,OOM,OOM,OOM"),
        }
    }
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Random layer and in-range inputs for one sweep point.
pub fn bench_instance(spec: &SweepSpec, k: usize, grid: usize) -> Result<(KanLayer, Tensor), BenchError> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ ((k as u64) << 32) ^ grid as u64);
    let bounds = BoundedGrid::new(-1.0, 1.0, grid)?;
    let layer = KanLayer::init(spec.d_in, spec.d_out, k, bounds, false, &mut rng)?;
    let data = (0..spec.batch * spec.d_in).map(|_| rng.random_range(-1.0..1.0)).collect();
    let x = Tensor::new(vec![spec.batch, spec.d_in], data).map_err(LayerError::from)?;
    Ok((layer, x))
}

/// Untracked forward pass split into `threads` row blocks.
pub fn parallel_forward(arm: Arm, layer: &KanLayer, x: &Tensor, threads: usize) -> Result<Tensor, LayerError> {
    let rows = x.shape()[0];
    let d = x.shape()[1];
    let threads = threads.clamp(1, rows.max(1));
    if threads == 1 {
        return arm.forward(layer, &mut Tape::new(), x);
    }
    let chunk = rows.div_ceil(threads);
    let blocks: Vec<Tensor> = (0..rows)
        .step_by(chunk)
        .map(|s| {
            let e = (s + chunk).min(rows);
            Tensor::new(vec![e - s, d], x.values()[s * d..e * d].to_vec())
        })
        .collect::<Result<_, _>>()?;
    let parts: Vec<Result<Tensor, LayerError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = blocks
            .iter()
            .map(|b| scope.spawn(move || arm.forward(layer, &mut Tape::new(), b)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("forward worker panicked")).collect()
    });
    let mut data = Vec::with_capacity(rows * layer.d_out());
    for p in parts {
        data.extend_from_slice(p?.values());
    }
    Ok(Tensor::new(vec![rows, layer.d_out()], data)?)
}

fn max_abs_diff(a: &Tensor, b: &Tensor) -> f64 {
    a.values().iter().zip(b.values()).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
}

/// One warm-up plus `reps` timed repetitions of forward and backward.
pub fn time_arm(arm: Arm, layer: &KanLayer, x: &Tensor, reps: usize, threads: usize) -> Result<Timing, LayerError> {
    let mut fwd = Vec::with_capacity(reps);
    let mut bwd = Vec::with_capacity(reps);
    let mut total = Vec::with_capacity(reps);
    let mut peak = 0;
    for rep in 0..=reps {
        let mut tracked = layer.clone();
        let mut tape = Tape::new();
        for (_, p) in tracked.parameters_mut() {
            tape.watch(p);
        }
        let start = Instant::now();
        let y = if threads > 1 {
            // Parallel forward is untracked; the backward below re-records it.
            parallel_forward(arm, &tracked, x, threads)?;
            arm.forward(&tracked, &mut tape, x)?
        } else {
            arm.forward(&tracked, &mut tape, x)?
        };
        let forward_s = start.elapsed().as_secs_f64();
        let start = Instant::now();
        let loss = tape.sum(&y);
        let grads = tape.backward(&loss)?;
        let backward_s = start.elapsed().as_secs_f64();
        let grad_bytes: usize = tracked.parameters().iter().filter_map(|(_, p)| grads.get(p)).map(Tensor::nbytes).sum();
        peak = peak.max(tape.allocated_bytes() + grad_bytes + x.nbytes() + tracked_bytes(&tracked));
        drop(grads);
        if rep == 0 {
            continue;
        }
        fwd.push(forward_s);
        bwd.push(backward_s);
        total.push(forward_s + backward_s);
    }
    Ok(Timing {
        forward_s: median(&mut fwd),
        backward_s: median(&mut bwd),
        total_s: median(&mut total),
        peak_bytes: peak,
    })
}

fn tracked_bytes(layer: &KanLayer) -> usize {
    layer.parameters().iter().map(|(_, p)| p.nbytes()).sum()
}

/// Runs every `(k, G)` point of the sweep for each arm, passing rows to
/// `emit` as they complete.
pub fn run_sweep(spec: &SweepSpec, mut emit: impl FnMut(&BenchRow) -> io::Result<()>) -> Result<Vec<BenchRow>, BenchError> {
    spec.validate()?;
    let mut rows = Vec::new();
    for &k in &spec.orders {
        for &grid in &spec.grids {
            let (layer, x) = bench_instance(spec, k, grid)?;
            let naive_fits = naive_basis_bytes(&layer, spec.batch) <= spec.memory_budget;
            if spec.arms.contains(&Arm::Naive) && naive_fits {
                let a = Arm::Matrix.forward(&layer, &mut Tape::new(), &x)?;
                let b = match Arm::Naive.forward(&layer, &mut Tape::new(), &x) {
                    Ok(b) => Some(b),
                    Err(LayerError::OutOfMemory { .. }) => None,
                    Err(e) => return Err(e.into()),
                };
                if let Some(b) = b {
                    let diff = max_abs_diff(&a, &b);
                    if !(diff <= SANITY_TOLERANCE) {
                        return Err(BenchError::Sanity { k, grid, diff });
                    }
                }
            }
            for &arm in &spec.arms {
                let timing = match arm {
                    Arm::Naive if !naive_fits => None,
                    _ => match time_arm(arm, &layer, &x, spec.reps, spec.threads) {
                        Ok(t) => Some(t),
                        Err(LayerError::OutOfMemory { .. }) => None,
                        Err(e) => return Err(e.into()),
                    },
                };
                let row = BenchRow {
                    arm,
                    k,
                    grid,
                    d_in: spec.d_in,
                    d_out: spec.d_out,
                    batch: spec.batch,
                    timing,
                };
                emit(&row)?;
                rows.push(row);
            }
        }
    }
    Ok(rows)
}

/// Runs the sweep and streams CSV (header first) to `out`.
pub fn write_sweep_csv(spec: &SweepSpec, out: &mut impl Write) -> Result<Vec<BenchRow>, BenchError> {
    writeln!(out, "{CSV_HEADER}")?;
    run_sweep(spec, |row| {
        writeln!(out, "{row}")?;
        out.flush()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_odd_and_even() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 3.0, 2.0]), 2.5);
    }

    #[test]
    fn oom_row_has_full_column_set() {
        let row = BenchRow {
            arm: Arm::Naive,
            k: 3,
            grid: 4096,
            d_in: 32,
            d_out: 32,
            batch: 4096,
            timing: None,
        };
        let line = row.to_string();
        assert_eq!(line.split(',').count(), CSV_HEADER.split(',').count());
        assert!(line.ends_with("OOM,OOM,OOM,OOM"));
    }

    #[test]
    fn rejects_too_few_reps() {
        let spec = SweepSpec {
            reps: 3,
            ..SweepSpec::default()
        };
        assert!(spec.validate().is_err());
    }
}
