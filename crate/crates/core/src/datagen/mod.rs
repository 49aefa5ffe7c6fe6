//! Synthetic (context, hypothesis, weight) example generation.
//!
//! Three generators share one pipeline: sample facts that trigger the context rules, run the
//! reasoner, then pick hypotheses whose weights come from [`Marginals::hypothesis_weight`].
//! Every generation unit (a context, or a batch of contexts for overlapping rules) draws from
//! its own ChaCha stream derived from the master seed and the unit's tag, so parallel
//! generation is reproducible.
//!
//! [`Marginals::hypothesis_weight`]: crate::lpmln::Marginals::hypothesis_weight

mod gen;
mod record;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::lpmln::{GroundError, ReasonError, DEFAULT_BUDGET};
use crate::rules::{Atom, Rule, RuleError};
use crate::verbalize::VerbalizeError;

pub use gen::{gen_chain, gen_facts, gen_overlap, gen_single_rule, overlap_count};
pub use record::{audit, AuditReport, ExampleRecord, RecordMeta, SymbolicContext};

#[derive(Debug, Error)]
pub enum GenError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("no pool for type `{0}`")]
    MissingPool(String),
    #[error("pool for type `{0}` has too few unused constants")]
    PoolExhausted(String),
    #[error("no chain of depth {0} exists in the rule pool")]
    NoChain(usize),
    #[error("overlap rules: {0}")]
    Overlap(String),
    #[error("unit `{unit}` failed after {attempts} attempts: {last}")]
    Exhausted {
        unit: String,
        attempts: usize,
        last: Box<GenError>,
    },
    #[error("fewer groups ({0}) than splits")]
    TooFewGroups(usize),
    /// A sampled context violated a generation constraint; the unit is retried.
    #[error("rejected: {0}")]
    Rejected(String),
    #[error(transparent)]
    Rule(#[from] RuleError),
    #[error(transparent)]
    Ground(#[from] GroundError),
    #[error(transparent)]
    Reason(#[from] ReasonError),
    #[error(transparent)]
    Verbalize(#[from] VerbalizeError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl GenError {
    /// True when generation failed because a context exceeded the enumeration budget.
    pub fn is_budget_exceeded(&self) -> bool {
        match self {
            GenError::Reason(ReasonError::BudgetExceeded { .. }) => true,
            GenError::Exhausted { last, .. } => last.is_budget_exceeded(),
            _ => false,
        }
    }

    fn retryable(&self) -> bool {
        matches!(
            self,
            GenError::Rejected(_)
                | GenError::PoolExhausted(_)
                | GenError::Reason(ReasonError::BudgetExceeded { .. })
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FactFormat {
    Names,
    Letters,
}

impl std::str::FromStr for FactFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "names" => Ok(FactFormat::Names),
            "letters" => Ok(FactFormat::Letters),
            other => Err(format!("unknown fact format `{other}`")),
        }
    }
}

pub type Pools = BTreeMap<String, Vec<String>>;

const PERSONS: [&str; 20] = [
    "Alice", "Bob", "Carl", "David", "Eve", "Frank", "Grace", "Hugo", "Irene", "Jack", "Karen",
    "Leo", "Mona", "Nick", "Olga", "Paul", "Queenie", "Rita", "Sam", "Tina",
];
const COMPANIES: [&str; 10] = [
    "Acme",
    "Globex",
    "Initech",
    "Umbrella",
    "Hooli",
    "Vandelay",
    "Wonka",
    "Cyberdyne",
    "Soylent",
    "Tyrell",
];

/// Default pools: 20 person names, 10 company names and the years 1800 to 2000.
pub fn default_pools() -> Pools {
    let mut pools = Pools::new();
    pools.insert(
        "person".into(),
        PERSONS.iter().map(|s| s.to_string()).collect(),
    );
    pools.insert(
        "company".into(),
        COMPANIES.iter().map(|s| s.to_string()).collect(),
    );
    pools.insert(
        "year".into(),
        (1800..=2000).map(|y| y.to_string()).collect(),
    );
    pools
}

fn letters() -> Vec<String> {
    ('A'..='Z').map(|c| c.to_string()).collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GenConfig {
    /// Target number of examples (per rule in single-rule mode).
    pub n: usize,
    /// Maximum number of facts per context.
    pub m: usize,
    pub pools: Pools,
    pub seed: u64,
    pub fact_format: FactFormat,
    pub split_ratios: [f64; 3],
    /// Enumeration budget per independent component.
    pub budget: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            n: 8,
            m: 5,
            pools: default_pools(),
            seed: 0,
            fact_format: FactFormat::Names,
            split_ratios: [0.8, 0.1, 0.1],
            budget: DEFAULT_BUDGET,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), GenError> {
        if self.n < 8 {
            return Err(GenError::Config(format!("n = {} is below 8", self.n)));
        }
        if self.split_ratios.iter().any(|r| !(0.0..=1.0).contains(r))
            || (self.split_ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(GenError::Config(format!(
                "split ratios {:?} must be in [0,1] and sum to 1",
                self.split_ratios
            )));
        }
        if let Some((ty, _)) = self.pools.iter().find(|(_, p)| p.is_empty()) {
            return Err(GenError::Config(format!("pool `{ty}` is empty")));
        }
        Ok(())
    }

    /// Pools after applying the fact format: with letters, every non-numeric type draws from
    /// `A`..`Z`.
    pub fn effective_pools(&self) -> Pools {
        match self.fact_format {
            FactFormat::Names => self.pools.clone(),
            FactFormat::Letters => self
                .pools
                .iter()
                .map(|(ty, pool)| {
                    let numeric = pool.iter().all(|c| c.parse::<i64>().is_ok());
                    (ty.clone(), if numeric { pool.clone() } else { letters() })
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExampleMeta {
    pub hyp_class: String,
    pub rule_ids: Vec<String>,
    pub depth: usize,
    pub triggered_count: usize,
}

/// One (context, hypothesis, weight) triple in symbolic form.
#[derive(Clone, Debug)]
pub struct Example {
    pub id: String,
    pub rules: Vec<Rule>,
    pub facts: Vec<Atom>,
    pub hypothesis: Atom,
    pub weight: f64,
    pub label: bool,
    pub meta: ExampleMeta,
}

/// `weight >= 0.5`; an exact tie is labelled true and logged.
pub fn label_for(weight: f64) -> bool {
    if weight == 0.5 {
        log::warn!("weight exactly 0.5, labelled true");
    }
    weight >= 0.5
}

/// Examples generated from one unit; the granularity at which data is split.
#[derive(Clone, Debug)]
pub struct Group {
    pub key: String,
    pub examples: Vec<Example>,
}

#[derive(Clone, Debug, Default)]
pub struct DatasetSplit {
    pub train: Vec<Group>,
    pub dev: Vec<Group>,
    pub test: Vec<Group>,
}

impl DatasetSplit {
    pub fn parts(&self) -> [(&'static str, &[Group]); 3] {
        [
            ("train", &self.train),
            ("dev", &self.dev),
            ("test", &self.test),
        ]
    }
}

/// Independent random stream for a tagged unit.
pub fn unit_rng(seed: u64, tag: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(tag.as_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

/// Seeded shuffle of groups followed by a contiguous partition.
///
/// Train and dev sizes are `round(ratio * groups)`; test takes the rest.
pub fn split(groups: Vec<Group>, ratios: [f64; 3], seed: u64) -> Result<DatasetSplit, GenError> {
    if groups.len() < 3 {
        return Err(GenError::TooFewGroups(groups.len()));
    }
    let mut groups = groups;
    groups.shuffle(&mut unit_rng(seed, "split"));
    let n = groups.len() as f64;
    let train = ((ratios[0] * n).round() as usize).min(groups.len());
    let dev = ((ratios[1] * n).round() as usize).min(groups.len() - train);
    let test = groups.split_off(train + dev);
    let dev_part = groups.split_off(train);
    Ok(DatasetSplit {
        train: groups,
        dev: dev_part,
        test,
    })
}

/// Summary written next to a generated dataset.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Manifest {
    pub mode: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub corpus_sha256: String,
    pub splits: BTreeMap<String, usize>,
    pub split_groups: BTreeMap<String, usize>,
    pub hyp_class: BTreeMap<String, usize>,
    pub depth_histogram: BTreeMap<usize, usize>,
    /// Number of groups by example count.
    pub per_context: BTreeMap<usize, usize>,
}

pub fn sha256_hex(data: &[u8]) -> String {
    hex::encode(Sha256::digest(data))
}

impl Manifest {
    pub fn build(
        mode: &str,
        config: &GenConfig,
        extra: serde_json::Value,
        corpus: &str,
        data: &DatasetSplit,
    ) -> Result<Self, GenError> {
        let mut cfg = serde_json::to_value(config)?;
        if let (Some(obj), serde_json::Value::Object(more)) = (cfg.as_object_mut(), extra) {
            obj.extend(more);
        }
        let mut m = Manifest {
            mode: mode.to_string(),
            seed: config.seed,
            config: cfg,
            corpus_sha256: sha256_hex(corpus.as_bytes()),
            splits: BTreeMap::new(),
            split_groups: BTreeMap::new(),
            hyp_class: BTreeMap::new(),
            depth_histogram: BTreeMap::new(),
            per_context: BTreeMap::new(),
        };
        for (name, groups) in data.parts() {
            m.split_groups.insert(name.to_string(), groups.len());
            m.splits.insert(
                name.to_string(),
                groups.iter().map(|g| g.examples.len()).sum(),
            );
            for g in groups {
                *m.per_context.entry(g.examples.len()).or_default() += 1;
                for e in &g.examples {
                    *m.hyp_class.entry(e.meta.hyp_class.clone()).or_default() += 1;
                    *m.depth_histogram.entry(e.meta.depth).or_default() += 1;
                }
            }
        }
        Ok(m)
    }
}
