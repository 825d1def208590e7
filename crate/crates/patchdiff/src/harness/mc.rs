//! Deterministic pooling of per-worker Monte Carlo partials.
//!
//! Workers own disjoint, contiguous replicate ranges of the same seeded
//! experiment; pooling concatenates them in replicate order and reduces
//! once, sequentially, so the estimate is a pure function of (seed,
//! config, total replicate count) and never of the partition.

use serde::{Deserialize, Serialize};

use crate::absorption::McEstimate;
use crate::error::{Error, Result};

/// FNV-1a over raw bytes; used to fingerprint the experiment config.
pub fn config_hash(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// One worker's share of an estimate: the raw replicate values for the
/// contiguous range starting at `first_replicate`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WorkerSummary {
    pub master_seed: u64,
    pub config_hash: u64,
    pub first_replicate: u64,
    pub values: Vec<f64>,
    pub censored: u64,
}

/// Pools worker partials into one estimate. The partials must share seed
/// and config hash and tile a contiguous replicate range.
pub fn mc_aggregate(partials: &[WorkerSummary]) -> Result<McEstimate> {
    let first = partials
        .first()
        .ok_or_else(|| Error::Config("no worker summaries to aggregate".into()))?;
    for p in partials {
        if p.master_seed != first.master_seed {
            return Err(Error::Invariant(format!(
                "worker seeds differ: {} vs {}",
                p.master_seed, first.master_seed
            )));
        }
        if p.config_hash != first.config_hash {
            return Err(Error::Invariant(format!(
                "worker config hashes differ: {:#x} vs {:#x}",
                p.config_hash, first.config_hash
            )));
        }
    }
    let mut order: Vec<&WorkerSummary> = partials.iter().collect();
    order.sort_by_key(|p| p.first_replicate);
    let mut expected = order[0].first_replicate;
    let mut values = Vec::with_capacity(partials.iter().map(|p| p.values.len()).sum());
    let mut censored = 0u64;
    for p in order {
        if p.first_replicate != expected {
            return Err(Error::Invariant(format!(
                "replicate ranges do not tile: expected start {expected}, got {}",
                p.first_replicate
            )));
        }
        expected += p.values.len() as u64;
        values.extend_from_slice(&p.values);
        censored += p.censored;
    }
    McEstimate::from_values(&values, censored, first.master_seed)
}

/// Runs `body` inside a dedicated pool of `workers` threads, or on the
/// ambient pool when unset.
pub fn run_with_workers<T: Send>(workers: Option<usize>, body: impl FnOnce() -> T + Send) -> T {
    match workers {
        None => body(),
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k.max(1))
            .build()
            .expect("thread pool construction cannot fail for positive sizes")
            .install(body),
    }
}

/// Worker count requested through the environment, if any.
pub const WORKERS_ENV: &str = "PATCHDIFF_WORKERS";

pub fn workers_from_env() -> Result<Option<usize>> {
    match std::env::var(WORKERS_ENV) {
        Err(_) => Ok(None),
        Ok(raw) => raw
            .parse::<usize>()
            .map(Some)
            .map_err(|_| Error::Config(format!("{WORKERS_ENV} must be a positive integer, got '{raw}'"))),
    }
}
