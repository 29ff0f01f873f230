//! Throughput harness comparing voting backends on synthetic evidence.
//!
//! Every backend is first checked against the scatter reference; timing
//! only starts once all of them agree.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use ndarray::Array4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::maps::EvidenceStack;
use crate::votefield::VoteField;
use crate::voting::{max_relative_error, vote_all_classes, Backend};

/// Agreement required between every backend and the scatter reference.
pub const AGREEMENT_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub height: usize,
    pub width: usize,
    pub classes: usize,
    pub backends: Vec<Backend>,
    pub repeats: usize,
    pub seed: u64,
    /// Fraction of evidence entries that are nonzero.
    pub density: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            height: 128,
            width: 128,
            classes: 80,
            backends: Backend::ALL.to_vec(),
            repeats: 3,
            seed: 0,
            density: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub backend: Backend,
    pub height: usize,
    pub width: usize,
    pub regions: usize,
    pub classes: usize,
    pub repeats: usize,
    pub median: Duration,
    pub votes: u64,
    /// Largest relative deviation from the scatter reference.
    pub max_rel_error: f64,
}

impl BenchRow {
    pub fn votes_per_sec(&self) -> f64 {
        self.votes as f64 / self.median.as_secs_f64().max(f64::MIN_POSITIVE)
    }
}

/// Uniform `[0, 1)` evidence with the requested density, reproducible from `seed`.
pub fn synthesize(
    classes: usize,
    height: usize,
    width: usize,
    regions: usize,
    density: f64,
    seed: u64,
) -> EvidenceStack {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = Array4::from_shape_simple_fn((classes, height, width, regions), || {
        if density >= 1.0 || rng.random_bool(density.max(0.0)) {
            rng.random::<f32>()
        } else {
            0.0
        }
    });
    EvidenceStack::new(data).expect("uniform samples are finite")
}

/// Votes actually cast: `K_r` for every nonzero evidence entry.
pub fn count_votes(stack: &EvidenceStack, field: &VoteField) -> u64 {
    let counts = field.counts();
    stack
        .view()
        .indexed_iter()
        .filter(|(_, &v)| v != 0.0)
        .map(|((_, _, _, r), _)| counts[r] as u64)
        .sum()
}

fn median(mut samples: Vec<Duration>) -> Duration {
    samples.sort();
    samples[samples.len() / 2]
}

pub fn run_bench(config: &BenchConfig, field: &VoteField) -> Result<Vec<BenchRow>> {
    let repeats = config.repeats.max(1);
    let stack = synthesize(
        config.classes,
        config.height,
        config.width,
        field.region_count(),
        config.density,
        config.seed,
    );
    let votes = count_votes(&stack, field);

    let reference = vote_all_classes(&stack, field, Backend::Scatter)?;
    let mut errors = Vec::with_capacity(config.backends.len());
    for &backend in &config.backends {
        let out = vote_all_classes(&stack, field, backend)?;
        let err = max_relative_error(reference.view(), out.view());
        if err > AGREEMENT_TOLERANCE {
            return Err(Error::BackendDisagreement {
                error: err,
                tolerance: AGREEMENT_TOLERANCE,
            });
        }
        errors.push(err);
    }

    let mut rows = Vec::with_capacity(config.backends.len());
    for (&backend, err) in config.backends.iter().zip(errors) {
        let samples = (0..repeats)
            .map(|_| {
                let start = Instant::now();
                let out = vote_all_classes(&stack, field, backend);
                let elapsed = start.elapsed();
                out.map(|_| elapsed)
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(BenchRow {
            backend,
            height: config.height,
            width: config.width,
            regions: field.region_count(),
            classes: config.classes,
            repeats,
            median: median(samples),
            votes,
            max_rel_error: err,
        });
    }
    Ok(rows)
}

pub const CSV_HEADER: &str =
    "backend,height,width,regions,classes,repeats,median_ms,votes,votes_per_sec,max_rel_error";

pub fn to_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{:.3},{},{:.0},{:e}",
            r.backend,
            r.height,
            r.width,
            r.regions,
            r.classes,
            r.repeats,
            r.median.as_secs_f64() * 1e3,
            r.votes,
            r.votes_per_sec(),
            r.max_rel_error
        )
        .expect("string write");
    }
    out
}
