use std::thread;

use serde_json::{json, Value};

use crate::config::{ConfigError, RunConfig};
use crate::run::{execute, Execution, RunError};

/// Outcome of running one config under several seeds.
#[derive(Debug, Clone)]
pub struct VerifySummary {
    pub seeds: Vec<u64>,
    /// Seeds whose converged state differs from the first seed's.
    pub diverging: Vec<u64>,
    /// Seeds whose result disagrees with the oracle.
    pub mismatching: Vec<u64>,
    pub runs: Vec<Execution>,
}

impl VerifySummary {
    pub fn identical(&self) -> bool {
        self.diverging.is_empty()
    }

    pub fn all_match(&self) -> bool {
        self.mismatching.is_empty()
    }

    pub fn exit_code(&self) -> i32 {
        if self.identical() && self.all_match() {
            0
        } else {
            1
        }
    }

    pub fn to_json(&self, cfg: &RunConfig) -> Value {
        json!({
            "config": cfg.to_json(),
            "seeds": self.seeds,
            "identical": self.identical(),
            "all_match": self.all_match(),
            "diverging_seeds": self.diverging,
            "mismatching_seeds": self.mismatching,
            "state": self.runs.first().map(|r| r.state.clone()),
        })
    }
}

/// Runs `cfg` once per seed, `jobs` seeds at a time.
pub fn verify(cfg: &RunConfig, seeds: &[u64], jobs: usize) -> Result<VerifySummary, RunError> {
    if seeds.len() < 2 {
        return Err(ConfigError::TooFewSeeds(seeds.len()).into());
    }
    cfg.validate()?;
    let mut runs = Vec::with_capacity(seeds.len());
    for batch in seeds.chunks(jobs.max(1)) {
        let results: Vec<Result<Execution, RunError>> = thread::scope(|s| {
            let handles: Vec<_> = batch
                .iter()
                .map(|&seed| {
                    let c = RunConfig {
                        seed,
                        ..cfg.clone()
                    };
                    s.spawn(move || execute(&c, false))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("seed run panicked"))
                .collect()
        });
        for r in results {
            runs.push(r?);
        }
    }
    let first = runs[0].state.clone();
    let diverging = seeds
        .iter()
        .zip(&runs)
        .filter(|(_, r)| r.state != first)
        .map(|(s, _)| *s)
        .collect();
    let mismatching = seeds
        .iter()
        .zip(&runs)
        .filter(|(_, r)| !r.matched)
        .map(|(s, _)| *s)
        .collect();
    Ok(VerifySummary {
        seeds: seeds.to_vec(),
        diverging,
        mismatching,
        runs,
    })
}
