use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{batch_risk, MetricsError, PredictionRecord};
use crate::datagen::ExampleRecord;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Number of hashed token buckets; 0 disables token features.
    pub hash_buckets: usize,
    /// Rule-id by hypothesis-class indicators.
    pub meta_features: bool,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            learning_rate: 4.0,
            epochs: 2000,
            seed: 0,
            hash_buckets: 1024,
            meta_features: true,
        }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

fn meta_key(r: &ExampleRecord) -> String {
    format!("{}|{}", r.meta.rule_ids.join("+"), r.meta.hyp_class)
}

/// Sparse features of a record: a meta indicator (if enabled and known) and token-hash
/// buckets whose values sum to one per text field. Indices are offsets into the weight
/// vector; index 0 is the bias.
pub fn featurize(
    r: &ExampleRecord,
    meta_index: &IndexMap<String, usize>,
    cfg: &ToyConfig,
) -> Vec<(usize, f64)> {
    let mut out = vec![(0, 1.0)];
    if cfg.meta_features {
        if let Some(&i) = meta_index.get(&meta_key(r)) {
            out.push((1 + i, 1.0));
        }
    }
    if cfg.hash_buckets > 0 {
        let base = 1 + meta_index.len();
        for (prefix, text) in [("c", &r.context), ("h", &r.hypothesis)] {
            let toks: Vec<String> = tokens(text).collect();
            let share = 1.0 / toks.len().max(1) as f64;
            for t in toks {
                let bucket = fnv1a(format!("{prefix}:{t}").as_bytes()) % cfg.hash_buckets as u64;
                out.push((base + bucket as usize, share));
            }
        }
    }
    out
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Logistic regression over [`featurize`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyModel {
    pub config: ToyConfig,
    pub meta_index: IndexMap<String, usize>,
    pub weights: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub model: ToyModel,
    pub initial_risk: f64,
    pub final_risk: f64,
}

impl ToyModel {
    pub fn predict(&self, r: &ExampleRecord) -> f64 {
        let z: f64 = featurize(r, &self.meta_index, &self.config)
            .into_iter()
            .map(|(i, v)| self.weights[i] * v)
            .sum();
        sigmoid(z)
    }

    pub fn predictions(&self, records: &[ExampleRecord]) -> Vec<PredictionRecord> {
        records
            .iter()
            .map(|r| PredictionRecord {
                example_id: r.id.clone(),
                predicted_prob: self.predict(r),
                target_weight: r.weight,
                target_label: r.label,
            })
            .collect()
    }

    /// Full-batch gradient descent on the mean weighted loss. With logistic output the
    /// per-example gradient in the logit is `f - w`.
    pub fn train(
        records: &[ExampleRecord],
        config: &ToyConfig,
    ) -> Result<TrainOutcome, MetricsError> {
        if records.is_empty() {
            return Err(MetricsError::Empty);
        }
        let mut meta_index = IndexMap::new();
        if config.meta_features {
            for r in records {
                let n = meta_index.len();
                meta_index.entry(meta_key(r)).or_insert(n);
            }
        }
        let dim = 1 + meta_index.len() + config.hash_buckets;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let weights = (0..dim).map(|_| rng.gen_range(-0.01..0.01)).collect();
        let mut model = ToyModel {
            config: config.clone(),
            meta_index,
            weights,
        };
        let features: Vec<Vec<(usize, f64)>> = records
            .iter()
            .map(|r| featurize(r, &model.meta_index, config))
            .collect();
        let initial_risk = batch_risk(&model.predictions(records))?;
        let m = records.len() as f64;
        let mut grad = vec![0.0; dim];
        for epoch in 0..config.epochs {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for (x, r) in features.iter().zip(records) {
                let z: f64 = x.iter().map(|&(i, v)| model.weights[i] * v).sum();
                let residual = sigmoid(z) - r.weight;
                for &(i, v) in x {
                    grad[i] += residual * v / m;
                }
            }
            for (w, g) in model.weights.iter_mut().zip(&grad) {
                *w -= config.learning_rate * g;
            }
            if model.weights.iter().any(|w| !w.is_finite()) {
                return Err(MetricsError::NonFinite { iteration: epoch });
            }
        }
        let final_risk = batch_risk(&model.predictions(records))?;
        if !final_risk.is_finite() {
            return Err(MetricsError::NonFinite {
                iteration: config.epochs,
            });
        }
        Ok(TrainOutcome {
            model,
            initial_risk,
            final_risk,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{RecordMeta, SymbolicContext};

    fn record(id: usize, rule: &str, class: &str, weight: f64) -> ExampleRecord {
        ExampleRecord {
            id: format!("x-{id}"),
            context: format!("context {id}"),
            hypothesis: format!("hypothesis {class}"),
            label: weight >= 0.5,
            weight,
            meta: RecordMeta {
                rule_ids: vec![rule.into()],
                hyp_class: class.into(),
                depth: 0,
                triggered_count: 1,
                symbolic_context: SymbolicContext {
                    rules: vec![],
                    facts: vec![],
                },
                symbolic_hypothesis: String::new(),
                extra: Default::default(),
            },
            extra: Default::default(),
        }
    }

    #[test]
    fn groups_converge_to_mean_weight() {
        let groups = [
            ("a", "h3", 0.825),
            ("a", "h4", 0.175),
            ("b", "h3", 0.3),
            ("b", "h1", 1.0),
        ];
        let mut records = Vec::new();
        for (g, (rule, class, w)) in groups.iter().enumerate() {
            for i in 0..10 {
                let jitter = if i % 2 == 0 { 0.01 } else { -0.01 };
                let w = if *w == 1.0 { 1.0 } else { w + jitter };
                records.push(record(g * 100 + i, rule, class, w));
            }
        }
        let cfg = ToyConfig {
            hash_buckets: 0,
            ..ToyConfig::default()
        };
        let out = ToyModel::train(&records, &cfg).unwrap();
        assert!(out.final_risk < out.initial_risk);
        for (g, (_, _, w)) in groups.iter().enumerate() {
            let p = out.model.predict(&records[g * 10]);
            assert!((p - w).abs() < 0.02, "group {g}: {p} vs {w}");
        }
    }

    #[test]
    fn zero_epochs_is_initial_model() {
        let records = vec![record(0, "a", "h3", 0.7)];
        let cfg = ToyConfig {
            epochs: 0,
            ..ToyConfig::default()
        };
        let a = ToyModel::train(&records, &cfg).unwrap();
        let b = ToyModel::train(&records, &cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.initial_risk, a.final_risk);
        assert!(a.model.weights.iter().all(|w| w.abs() < 0.01));
    }

    #[test]
    fn deterministic_and_featurizer_stable() {
        let records: Vec<_> = (0..6).map(|i| record(i, "a", "h3", 0.6)).collect();
        let cfg = ToyConfig {
            epochs: 50,
            ..ToyConfig::default()
        };
        let a = ToyModel::train(&records, &cfg).unwrap().model;
        let b = ToyModel::train(&records, &cfg).unwrap().model;
        assert_eq!(a, b);
        let f1 = featurize(&records[0], &a.meta_index, &cfg);
        assert_eq!(f1, featurize(&records[0], &a.meta_index, &cfg));
        assert!(records.iter().all(|r| (0.0..1.0).contains(&a.predict(r))));
    }

    #[test]
    fn divergence_reported() {
        let records = vec![record(0, "a", "h3", 0.7)];
        let cfg = ToyConfig {
            learning_rate: f64::INFINITY,
            epochs: 3,
            ..ToyConfig::default()
        };
        assert!(matches!(
            ToyModel::train(&records, &cfg),
            Err(MetricsError::NonFinite { .. })
        ));
    }
}
