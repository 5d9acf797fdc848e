use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use bloomsim::kmer::{Sabotage, DEFAULT_K, MAX_K};
use bloomsim::runtime::{
    DeliverySchedule, FaultPlan, NetworkCondition, WorkerId, DEFAULT_TICK_CAP,
};
use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {msg}")]
    File { path: PathBuf, msg: String },
    #[error("config line {line}: {msg}")]
    Line { line: usize, msg: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("invalid value for {key}: {msg}")]
    Value { key: &'static str, msg: String },
    #[error("workload `{0}` needs --input")]
    MissingInput(Workload),
    #[error("verify needs at least two seeds, got {0}")]
    TooFewSeeds(usize),
}

fn bad(key: &'static str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Value {
        key,
        msg: msg.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Workload {
    KmerA,
    KmerB,
    BuddiKmer,
    CmsDesign1,
    CmsDesign2,
    LatticeDemo,
}

impl Workload {
    pub const ALL: [Workload; 6] = [
        Workload::KmerA,
        Workload::KmerB,
        Workload::BuddiKmer,
        Workload::CmsDesign1,
        Workload::CmsDesign2,
        Workload::LatticeDemo,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Workload::KmerA => "kmer_a",
            Workload::KmerB => "kmer_b",
            Workload::BuddiKmer => "buddi_kmer",
            Workload::CmsDesign1 => "cms_design1",
            Workload::CmsDesign2 => "cms_design2",
            Workload::LatticeDemo => "lattice_demo",
        }
    }

    fn needs_input(self) -> bool {
        self != Workload::LatticeDemo
    }
}

impl fmt::Display for Workload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Workload {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Workload::ALL
            .into_iter()
            .find(|w| w.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Workload::ALL.iter().map(|w| w.name()).collect();
                format!(
                    "unknown workload `{s}` (expected one of {})",
                    names.join(", ")
                )
            })
    }
}

/// `tick:worker`
pub fn parse_fail(s: &str) -> Result<(u64, u32), String> {
    let (t, w) = s
        .split_once(':')
        .ok_or_else(|| format!("expected tick:worker, got `{s}`"))?;
    Ok((num(t)?, num(w)?))
}

/// `tick:a-b,c-d`; an empty pair list (`tick:`) heals the network.
pub fn parse_partition(s: &str) -> Result<(u64, Vec<(u32, u32)>), String> {
    let (t, rest) = s
        .split_once(':')
        .ok_or_else(|| format!("expected tick:a-b,..., got `{s}`"))?;
    let mut pairs = Vec::new();
    for p in rest.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (a, b) = p
            .split_once('-')
            .ok_or_else(|| format!("expected a-b worker pair, got `{p}`"))?;
        pairs.push((num(a)?, num(b)?));
    }
    Ok((num(t)?, pairs))
}

pub fn parse_join(s: &str) -> Result<u64, String> {
    num(s)
}

/// Comma-separated seeds and inclusive `a-b` ranges.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (u64, u64) = (num(a)?, num(b)?);
                if a > b {
                    return Err(format!("empty seed range `{part}`"));
                }
                out.extend(a..=b);
            }
            None => out.push(num(part)?),
        }
    }
    Ok(out)
}

pub fn parse_sabotage(s: &str) -> Result<Sabotage, String> {
    match s {
        "lose-chunk" => Ok(Sabotage::LoseChunk),
        _ => Err(format!("unknown sabotage `{s}`")),
    }
}

fn num<T: FromStr>(s: &str) -> Result<T, String> {
    s.trim()
        .parse()
        .map_err(|_| format!("`{}` is not a valid number", s.trim()))
}

/// Everything one run depends on.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub workload: Workload,
    pub input: Option<PathBuf>,
    pub k: usize,
    pub threshold: usize,
    pub workers: u32,
    pub seed: u64,
    pub duplicate_prob: f64,
    pub reorder_window: u64,
    pub drop_prob: f64,
    pub partition_events: Vec<(u64, Vec<(u32, u32)>)>,
    pub failure_events: Vec<(u64, u32)>,
    pub join_events: Vec<u64>,
    pub eps: f64,
    pub delta: f64,
    pub batch: usize,
    pub tick_cap: u64,
    pub sabotage: Option<Sabotage>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            workload: Workload::KmerA,
            input: None,
            k: DEFAULT_K,
            threshold: 3,
            workers: 4,
            seed: 0,
            duplicate_prob: 0.0,
            reorder_window: 1,
            drop_prob: 0.0,
            partition_events: Vec::new(),
            failure_events: Vec::new(),
            join_events: Vec::new(),
            eps: 0.01,
            delta: 0.01,
            batch: 16,
            tick_cap: DEFAULT_TICK_CAP,
            sabotage: None,
        }
    }
}

impl RunConfig {
    /// Applies `key=value` lines; `#` starts a comment. List keys may
    /// repeat: `fail` and `partition` take `;`-separated events, `join` a
    /// comma list of ticks.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        let mut lists: BTreeSet<&str> = BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Line {
                line: i + 1,
                msg: format!("expected key=value, got `{line}`"),
            })?;
            let key = key.trim().replace('-', "_");
            let value = value.trim();
            let at = |msg: String| ConfigError::Line { line: i + 1, msg };
            match key.as_str() {
                "workload" => self.workload = value.parse().map_err(at)?,
                "input" => self.input = Some(PathBuf::from(value)),
                "k" => self.k = num(value).map_err(at)?,
                "threshold" => self.threshold = num(value).map_err(at)?,
                "workers" => self.workers = num(value).map_err(at)?,
                "seed" => self.seed = num(value).map_err(at)?,
                "dup_prob" | "duplicate_prob" => self.duplicate_prob = num(value).map_err(at)?,
                "reorder_window" => self.reorder_window = num(value).map_err(at)?,
                "drop_prob" => self.drop_prob = num(value).map_err(at)?,
                "eps" | "epsilon" => self.eps = num(value).map_err(at)?,
                "delta" => self.delta = num(value).map_err(at)?,
                "batch" => self.batch = num(value).map_err(at)?,
                "sabotage" => self.sabotage = Some(parse_sabotage(value).map_err(at)?),
                "tick_cap" => self.tick_cap = num(value).map_err(at)?,
                "fail" => {
                    if lists.insert("fail") {
                        self.failure_events.clear();
                    }
                    for v in value.split(';').filter(|v| !v.trim().is_empty()) {
                        self.failure_events.push(parse_fail(v).map_err(at)?);
                    }
                }
                "partition" => {
                    if lists.insert("partition") {
                        self.partition_events.clear();
                    }
                    for v in value.split(';').filter(|v| !v.trim().is_empty()) {
                        self.partition_events.push(parse_partition(v).map_err(at)?);
                    }
                }
                "join" => {
                    if lists.insert("join") {
                        self.join_events.clear();
                    }
                    for v in value.split(',').filter(|v| !v.trim().is_empty()) {
                        self.join_events.push(parse_join(v).map_err(at)?);
                    }
                }
                _ => return Err(ConfigError::UnknownKey(key)),
            }
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::File {
            path: path.to_owned(),
            msg: e.to_string(),
        })?;
        self.apply_text(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(1..=MAX_K).contains(&self.k) {
            return Err(bad("k", format!("must be in 1..={MAX_K}, got {}", self.k)));
        }
        if self.workers == 0 {
            return Err(bad("workers", "at least one worker is required"));
        }
        if self.threshold == 0 {
            return Err(bad("threshold", "must be at least 1"));
        }
        if self.batch == 0 {
            return Err(bad("batch", "must be at least 1"));
        }
        if self.reorder_window == 0 {
            return Err(bad("reorder-window", "must be at least 1"));
        }
        for (key, p) in [
            ("dup-prob", self.duplicate_prob),
            ("drop-prob", self.drop_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(bad(key, format!("must be within [0, 1], got {p}")));
            }
        }
        if self.tick_cap == 0 {
            return Err(bad("tick-cap", "must be at least 1"));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(bad("eps", format!("must be in (0, 1), got {}", self.eps)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(bad(
                "delta",
                format!("must be in (0, 1), got {}", self.delta),
            ));
        }
        let total = u64::from(self.workers) + self.join_events.len() as u64;
        for &(tick, w) in &self.failure_events {
            if u64::from(w) >= total {
                return Err(bad(
                    "fail",
                    format!("worker {w} at tick {tick} does not exist"),
                ));
            }
        }
        for (tick, pairs) in &self.partition_events {
            for &(a, b) in pairs {
                if u64::from(a.max(b)) >= total || a == b {
                    return Err(bad("partition", format!("bad pair {a}-{b} at tick {tick}")));
                }
            }
        }
        if self.workload.needs_input() && self.input.is_none() {
            return Err(ConfigError::MissingInput(self.workload));
        }
        Ok(())
    }

    pub fn schedule(&self) -> DeliverySchedule {
        DeliverySchedule::adversarial(
            self.seed,
            self.duplicate_prob,
            self.reorder_window,
            self.drop_prob,
        )
    }

    pub fn faults(&self) -> FaultPlan {
        FaultPlan {
            fails: self
                .failure_events
                .iter()
                .map(|&(t, w)| (t, WorkerId(w)))
                .collect(),
            joins: self.join_events.clone(),
            partitions: self
                .partition_events
                .iter()
                .map(|(t, pairs)| {
                    let pairs = pairs.iter().map(|&(a, b)| (WorkerId(a), WorkerId(b)));
                    (*t, NetworkCondition::partitioned(pairs))
                })
                .collect(),
        }
    }

    /// Echo of every setting, for exact reproduction.
    pub fn to_json(&self) -> Value {
        json!({
            "workload": self.workload.name(),
            "input": self.input.as_ref().map(|p| p.display().to_string()),
            "k": self.k,
            "threshold": self.threshold,
            "workers": self.workers,
            "seed": self.seed,
            "duplicate_prob": self.duplicate_prob,
            "reorder_window": self.reorder_window,
            "drop_prob": self.drop_prob,
            "partition_events": self.partition_events,
            "failure_events": self.failure_events,
            "join_events": self.join_events,
            "eps": self.eps,
            "delta": self.delta,
            "batch": self.batch,
            "tick_cap": self.tick_cap,
            "sabotage": self.sabotage.map(|_| "lose-chunk"),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn event_syntax() {
        assert_eq!(parse_fail("12:3"), Ok((12, 3)));
        assert_eq!(parse_partition("5:0-1, 2-3"), Ok((5, vec![(0, 1), (2, 3)])));
        assert_eq!(parse_partition("9:"), Ok((9, vec![])));
        assert!(parse_fail("12").is_err());
        assert!(parse_partition("5:0").is_err());
        assert_eq!(parse_seeds("1-3,7"), Ok(vec![1, 2, 3, 7]));
        assert!(parse_seeds("3-1").is_err());
    }

    #[test]
    fn file_keys() {
        let mut c = RunConfig::default();
        c.apply_text(
            "# run\nworkload = kmer_b\nthreshold=5\ndup-prob=0.25\nfail=3:1\nfail=4:2\njoin=2,6\npartition=5:0-1;8:\n",
        )
        .unwrap();
        assert_eq!(c.workload, Workload::KmerB);
        assert_eq!(c.threshold, 5);
        assert_eq!(c.duplicate_prob, 0.25);
        assert_eq!(c.failure_events, vec![(3, 1), (4, 2)]);
        assert_eq!(c.join_events, vec![2, 6]);
        assert_eq!(c.partition_events, vec![(5, vec![(0, 1)]), (8, vec![])]);
        assert!(matches!(
            c.apply_text("bogus=1"),
            Err(ConfigError::UnknownKey(_))
        ));
        assert!(matches!(
            c.apply_text("k"),
            Err(ConfigError::Line { line: 1, .. })
        ));
    }

    #[test]
    fn validation() {
        let ok = RunConfig {
            input: Some("x".into()),
            ..RunConfig::default()
        };
        assert!(ok.validate().is_ok());
        let bad_p = RunConfig {
            drop_prob: 1.5,
            ..ok.clone()
        };
        assert!(bad_p.validate().is_err());
        let bad_w = RunConfig {
            failure_events: vec![(1, 9)],
            ..ok.clone()
        };
        assert!(bad_w.validate().is_err());
        let no_input = RunConfig::default();
        assert!(matches!(
            no_input.validate(),
            Err(ConfigError::MissingInput(_))
        ));
        let demo = RunConfig {
            workload: Workload::LatticeDemo,
            ..RunConfig::default()
        };
        assert!(demo.validate().is_ok());
    }
}
