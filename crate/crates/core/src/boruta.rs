//! Boruta all-relevant feature selection on top of the random forest.
//!
//! Every iteration appends a shuffled copy ("shadow") of each active feature,
//! trains a fresh forest, and scores a hit for every real feature whose
//! importance z-score beats the best shadow. Hit counts are tested against a
//! fair-coin null; significant excess confirms a feature, significant deficit
//! rejects it and removes it from later iterations.

use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data_model::LabeledDataset;
use crate::error::{Error, Result};
use crate::forest::{permutation_importance, train_forest_with, ForestOptions, TreeParams};
use crate::seed;

pub const SHADOW_PREFIX: &str = "shadow_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MultipleTesting {
    /// Divide alpha by the number of undecided features.
    Bonferroni,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BorutaConfig {
    pub max_iterations: usize,
    pub alpha: f64,
    pub multiple_testing: MultipleTesting,
    pub forest_params: TreeParams,
    pub n_trees_per_iteration: usize,
    pub seed: u64,
    /// Forest training workers; `None` uses the global pool.
    pub workers: Option<usize>,
}

impl Default for BorutaConfig {
    fn default() -> Self {
        BorutaConfig {
            max_iterations: 100,
            alpha: 0.05,
            multiple_testing: MultipleTesting::Bonferroni,
            forest_params: TreeParams::default(),
            n_trees_per_iteration: 200,
            seed: 0,
            workers: None,
        }
    }
}

impl BorutaConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::domain(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if self.max_iterations == 0 || self.n_trees_per_iteration == 0 {
            return Err(Error::domain(
                "max_iterations and n_trees_per_iteration must be positive",
            ));
        }
        self.forest_params.check()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Confirmed,
    Tentative,
    Rejected,
}

impl Decision {
    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Confirmed => "Confirmed",
            Decision::Tentative => "Tentative",
            Decision::Rejected => "Rejected",
        }
    }
}

/// Appends one independently shuffled copy of every column, named `shadow_<name>`.
pub fn add_shadow_features(d: &LabeledDataset, rng_seed: u64) -> LabeledDataset {
    let mut rng = seed::rng(rng_seed);
    let names = d
        .feature_names()
        .iter()
        .map(|n| format!("{SHADOW_PREFIX}{n}"))
        .collect();
    let columns = (0..d.n_features())
        .map(|j| {
            let mut c = d.column(j);
            c.shuffle(&mut rng);
            c
        })
        .collect();
    d.with_extra_columns(names, columns)
        .expect("shadow columns match the dataset shape")
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationOutcome {
    /// z-score of each active feature, in the order given.
    pub z: Vec<f64>,
    pub shadow_z: Vec<f64>,
    /// Maximum shadow z-score.
    pub mzsa: f64,
    /// Active features (indices into the full dataset) with `z > mzsa`.
    pub hits: Vec<usize>,
}

/// One Boruta round over the `active` features of `d`.
pub fn boruta_iteration(
    d: &LabeledDataset,
    active: &[usize],
    cfg: &BorutaConfig,
    iteration: usize,
) -> Result<IterationOutcome> {
    if active.is_empty() {
        return Err(Error::domain(
            "a Boruta iteration needs at least one active feature",
        ));
    }
    let it = iteration as u64;
    let real = d.select_features(active);
    let extended = add_shadow_features(&real, seed::derive(cfg.seed, seed::TAG_BORUTA_SHADOW, it));
    let opts = ForestOptions {
        bootstrap: true,
        workers: cfg.workers,
    };
    let forest = train_forest_with(
        &extended,
        cfg.n_trees_per_iteration,
        &cfg.forest_params,
        seed::derive(cfg.seed, seed::TAG_BORUTA_FOREST, it),
        &opts,
    )?;
    let imp = permutation_importance(
        &forest,
        &extended,
        seed::derive(cfg.seed, seed::TAG_BORUTA_IMPORTANCE, it),
    )?;
    let f = active.len();
    let z = imp.z[..f].to_vec();
    let shadow_z = imp.z[f..].to_vec();
    let mzsa = shadow_z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let hits = active
        .iter()
        .zip(&z)
        .filter(|(_, &zi)| zi > mzsa)
        .map(|(&j, _)| j)
        .collect();
    Ok(IterationOutcome {
        z,
        shadow_z,
        mzsa,
        hits,
    })
}

/// Two-sided exact binomial p-value for `hits` successes in `trials` fair-coin
/// trials: twice the smaller tail, capped at 1.
pub fn binomial_two_sided_p(hits: usize, trials: usize) -> f64 {
    if trials == 0 {
        return 1.0;
    }
    let hits = hits.min(trials);
    let n = trials as f64;
    let mut pmf = 0.5f64.powi(trials as i32);
    let (mut lower, mut upper) = (0.0, 0.0);
    for k in 0..=trials {
        if k <= hits {
            lower += pmf;
        }
        if k >= hits {
            upper += pmf;
        }
        pmf *= (n - k as f64) / (k as f64 + 1.0);
    }
    (2.0 * lower.min(upper)).min(1.0)
}

/// Decides each feature from its hit count after `trials` rounds.
pub fn decide_features(hits: &[usize], trials: usize, cfg: &BorutaConfig) -> Vec<Decision> {
    let level = match cfg.multiple_testing {
        MultipleTesting::Bonferroni if !hits.is_empty() => cfg.alpha / hits.len() as f64,
        _ => cfg.alpha,
    };
    hits.iter()
        .map(|&h| {
            let p = binomial_two_sided_p(h, trials);
            if p >= level {
                Decision::Tentative
            } else if 2 * h > trials {
                Decision::Confirmed
            } else {
                Decision::Rejected
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureOutcome {
    pub name: String,
    pub decision: Decision,
    pub hits: usize,
    pub trials: usize,
    /// z-score in every iteration the feature took part in.
    pub z_history: Vec<f64>,
}

impl FeatureOutcome {
    pub fn mean_z(&self) -> f64 {
        if self.z_history.is_empty() {
            0.0
        } else {
            self.z_history.iter().sum::<f64>() / self.z_history.len() as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BorutaReport {
    pub features: Vec<FeatureOutcome>,
    pub mzsa_history: Vec<f64>,
    pub iterations_run: usize,
}

impl BorutaReport {
    fn names_with(&self, d: Decision) -> Vec<&str> {
        self.features
            .iter()
            .filter(|f| f.decision == d)
            .map(|f| f.name.as_str())
            .collect()
    }

    pub fn confirmed(&self) -> Vec<&str> {
        self.names_with(Decision::Confirmed)
    }

    pub fn tentative(&self) -> Vec<&str> {
        self.names_with(Decision::Tentative)
    }

    pub fn rejected(&self) -> Vec<&str> {
        self.names_with(Decision::Rejected)
    }

    /// Columns `feature, decision, hits, trials, mean_z`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["feature", "decision", "hits", "trials", "mean_z"])?;
        for f in &self.features {
            w.write_record(&[
                f.name.clone(),
                f.decision.as_str().to_string(),
                f.hits.to_string(),
                f.trials.to_string(),
                f.mean_z().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Per-iteration z-scores and MZSA values.
    pub fn history_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct FeatureHistory<'a> {
            feature: &'a str,
            decision: Decision,
            z_history: &'a [f64],
        }
        #[derive(Serialize)]
        struct History<'a> {
            iterations_run: usize,
            mzsa_history: &'a [f64],
            features: Vec<FeatureHistory<'a>>,
        }
        let h = History {
            iterations_run: self.iterations_run,
            mzsa_history: &self.mzsa_history,
            features: self
                .features
                .iter()
                .map(|f| FeatureHistory {
                    feature: &f.name,
                    decision: f.decision,
                    z_history: &f.z_history,
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&h)? + "\n")
    }
}

/// Reads the decision column of a report CSV back as `(feature, decision)` pairs.
pub fn read_decisions_csv<R: std::io::Read>(input: R) -> Result<Vec<(String, Decision)>> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for (n, rec) in r.records().enumerate() {
        let rec = rec?;
        let decision = match rec.get(1) {
            Some("Confirmed") => Decision::Confirmed,
            Some("Tentative") => Decision::Tentative,
            Some("Rejected") => Decision::Rejected,
            other => {
                return Err(Error::Parse {
                    row: n + 1,
                    message: format!("bad decision {other:?}"),
                })
            }
        };
        out.push((rec.get(0).unwrap_or_default().to_string(), decision));
    }
    Ok(out)
}

/// Runs Boruta until every feature is decided or `max_iterations` is reached.
pub fn run_boruta(d: &LabeledDataset, cfg: &BorutaConfig) -> Result<BorutaReport> {
    cfg.check()?;
    if d.n_features() == 0 {
        return Err(Error::domain("Boruta needs at least one feature"));
    }
    if d.is_empty() {
        return Err(Error::domain("Boruta needs at least one row"));
    }
    let mut features: Vec<FeatureOutcome> = d
        .feature_names()
        .iter()
        .map(|name| FeatureOutcome {
            name: name.clone(),
            decision: Decision::Tentative,
            hits: 0,
            trials: 0,
            z_history: Vec::new(),
        })
        .collect();
    let mut mzsa_history = Vec::new();
    let mut iterations_run = 0;

    while iterations_run < cfg.max_iterations
        && features.iter().any(|f| f.decision == Decision::Tentative)
    {
        let active: Vec<usize> = (0..features.len())
            .filter(|&j| features[j].decision != Decision::Rejected)
            .collect();
        let outcome = boruta_iteration(d, &active, cfg, iterations_run)?;
        iterations_run += 1;
        mzsa_history.push(outcome.mzsa);
        for (&j, &z) in active.iter().zip(&outcome.z) {
            let f = &mut features[j];
            f.trials += 1;
            f.z_history.push(z);
            if z > outcome.mzsa {
                f.hits += 1;
            }
        }

        let undecided: Vec<usize> = (0..features.len())
            .filter(|&j| features[j].decision == Decision::Tentative)
            .collect();
        let hits: Vec<usize> = undecided.iter().map(|&j| features[j].hits).collect();
        let decisions = decide_features(&hits, iterations_run, cfg);
        for (&j, dec) in undecided.iter().zip(decisions) {
            features[j].decision = dec;
        }
    }

    Ok(BorutaReport {
        features,
        mzsa_history,
        iterations_run,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_model::TurnoverClass;
    use rand::Rng;

    fn small(n: usize, f: usize, seed: u64) -> LabeledDataset {
        let mut rng = crate::seed::rng(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..n {
            let k = rng.gen_range(0..5);
            let mut row = vec![k as f64];
            row.extend((1..f).map(|_| rng.gen::<f64>()));
            rows.push(row);
            labels.push(TurnoverClass::ALL[k]);
        }
        LabeledDataset::new((0..f).map(|j| format!("f{j}")).collect(), rows, labels).unwrap()
    }

    fn exact_p(h: usize, n: usize) -> f64 {
        let mut c = vec![1u128; n + 1];
        for k in 1..=n {
            c[k] = c[k - 1] * (n + 1 - k) as u128 / k as u128;
        }
        let total = 2f64.powi(n as i32);
        let lower: u128 = c[..=h].iter().sum();
        let upper: u128 = c[h..].iter().sum();
        (2.0 * lower.min(upper) as f64 / total).min(1.0)
    }

    #[test]
    fn shadows_are_permutations() {
        let d = small(40, 5, 1);
        let s = add_shadow_features(&d, 3);
        assert_eq!(s.n_features(), 10);
        assert_eq!(s.feature_names()[7], "shadow_f2");
        for j in 0..5 {
            assert_eq!(s.column(j), d.column(j));
            let mut a = s.column(j + 5);
            let mut b = d.column(j);
            a.sort_by(f64::total_cmp);
            b.sort_by(f64::total_cmp);
            assert_eq!(a, b);
        }
        assert_eq!(s.labels(), d.labels());
    }

    #[test]
    fn shadow_degenerate_cases() {
        let one = small(1, 3, 2);
        let s = add_shadow_features(&one, 0);
        assert_eq!(&s.row(0)[..3], &s.row(0)[3..]);
        let c = LabeledDataset::new(
            vec!["c".into()],
            vec![vec![2.0]; 6],
            vec![TurnoverClass::A; 6],
        )
        .unwrap();
        assert_eq!(add_shadow_features(&c, 5).column(1), vec![2.0; 6]);
    }

    #[test]
    fn binomial_examples() {
        assert!((binomial_two_sided_p(15, 15) - 2.0 * 0.5f64.powi(15)).abs() < 1e-18);
        assert!((binomial_two_sided_p(0, 15) - binomial_two_sided_p(15, 15)).abs() < 1e-18);
        assert_eq!(binomial_two_sided_p(1, 1), 1.0);
        assert_eq!(binomial_two_sided_p(0, 0), 1.0);
        for n in 0..=30 {
            for h in 0..=n {
                assert!((binomial_two_sided_p(h, n) - exact_p(h, n)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn decision_examples() {
        let cfg = BorutaConfig {
            multiple_testing: MultipleTesting::None,
            ..BorutaConfig::default()
        };
        assert_eq!(
            decide_features(&[15, 0, 8], 15, &cfg),
            vec![Decision::Confirmed, Decision::Rejected, Decision::Tentative]
        );
        // Bonferroni over 3 features lowers the bar to 0.0167: 12/15 (p≈0.035) stays tentative.
        let bonf = BorutaConfig::default();
        assert_eq!(decide_features(&[12], 15, &cfg), vec![Decision::Confirmed]);
        assert_eq!(
            decide_features(&[12, 8, 8], 15, &bonf)[0],
            Decision::Tentative
        );
    }

    #[test]
    fn constant_single_feature_never_hits() {
        let d = LabeledDataset::new(
            vec!["c".into()],
            vec![vec![1.0]; 30],
            (0..30).map(|i| TurnoverClass::ALL[i % 2]).collect(),
        )
        .unwrap();
        let cfg = BorutaConfig {
            n_trees_per_iteration: 10,
            ..BorutaConfig::default()
        };
        let out = boruta_iteration(&d, &[0], &cfg, 0).unwrap();
        assert_eq!(out.z, vec![0.0]);
        assert_eq!(out.mzsa, 0.0);
        assert!(out.hits.is_empty());
    }

    #[test]
    fn label_copy_feature_hits_almost_always() {
        let cfg = BorutaConfig {
            n_trees_per_iteration: 50,
            ..BorutaConfig::default()
        };
        let active: Vec<usize> = (0..10).collect();
        let hits = (0..100u64)
            .filter(|&s| {
                let d = small(200, 10, s);
                let out = boruta_iteration(
                    &d,
                    &active,
                    &BorutaConfig {
                        seed: s,
                        ..cfg.clone()
                    },
                    0,
                )
                .unwrap();
                out.hits.contains(&0)
            })
            .count();
        assert!(hits >= 95, "{hits}/100");
    }

    #[test]
    fn irrelevant_features_rarely_beat_the_best_shadow() {
        let cfg = BorutaConfig {
            n_trees_per_iteration: 50,
            ..BorutaConfig::default()
        };
        let f = 10;
        let active: Vec<usize> = (0..f).collect();
        let mut total = 0;
        for s in 0..100u64 {
            let mut rng = crate::seed::rng(1000 + s);
            let rows = (0..200)
                .map(|_| (0..f).map(|_| rng.gen::<f64>()).collect())
                .collect();
            let labels = (0..200)
                .map(|_| TurnoverClass::ALL[rng.gen_range(0..5)])
                .collect();
            let d = LabeledDataset::new((0..f).map(|j| format!("f{j}")).collect(), rows, labels)
                .unwrap();
            total += boruta_iteration(
                &d,
                &active,
                &BorutaConfig {
                    seed: s,
                    ..cfg.clone()
                },
                0,
            )
            .unwrap()
            .hits
            .len();
        }
        let rate = total as f64 / (100 * f) as f64;
        assert!(rate < 0.25, "mean hit rate {rate}");
    }

    #[test]
    fn one_iteration_leaves_everything_tentative() {
        let d = small(120, 4, 3);
        let cfg = BorutaConfig {
            max_iterations: 1,
            n_trees_per_iteration: 20,
            ..BorutaConfig::default()
        };
        let r = run_boruta(&d, &cfg).unwrap();
        assert_eq!(r.iterations_run, 1);
        assert!(r.features.iter().all(|f| f.decision == Decision::Tentative));
    }

    #[test]
    fn run_is_deterministic_and_consistent() {
        let d = small(150, 5, 4);
        let cfg = BorutaConfig {
            n_trees_per_iteration: 30,
            max_iterations: 25,
            seed: 11,
            ..BorutaConfig::default()
        };
        let a = run_boruta(&d, &cfg).unwrap();
        let b = run_boruta(&d, &cfg).unwrap();
        let (mut ca, mut cb) = (Vec::new(), Vec::new());
        a.write_csv(&mut ca).unwrap();
        b.write_csv(&mut cb).unwrap();
        assert_eq!(ca, cb);
        assert_eq!(a.history_json().unwrap(), b.history_json().unwrap());
        assert_eq!(a.features[0].decision, Decision::Confirmed);
        for f in &a.features {
            assert!(f.hits <= f.trials && f.trials <= a.iterations_run);
            assert_eq!(f.z_history.len(), f.trials);
            assert!(!f.name.starts_with(SHADOW_PREFIX));
            if f.decision != Decision::Rejected {
                assert_eq!(f.trials, a.iterations_run);
            }
        }
        let parsed = read_decisions_csv(ca.as_slice()).unwrap();
        assert_eq!(parsed.len(), 5);
    }

    #[test]
    fn rejects_featureless_input() {
        let d = LabeledDataset::new(vec![], vec![vec![]; 3], vec![TurnoverClass::A; 3]).unwrap();
        assert!(run_boruta(&d, &BorutaConfig::default()).is_err());
        let cfg = BorutaConfig {
            alpha: 1.5,
            ..BorutaConfig::default()
        };
        assert!(run_boruta(&small(10, 2, 0), &cfg).is_err());
    }
}
