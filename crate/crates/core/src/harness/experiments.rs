//! The experiment protocols: cross-validation, train/test evaluation,
//! region-size tuning and lexical-sample WSD.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cnn::Cnn;
use crate::dataset::{balance, majority_baseline, stratified_folds, Dataset, Instance};
use crate::embeddings::{EmbeddingMode, EmbeddingTable};
use crate::error::{Error, Result};
use crate::eval::{evaluate_multi, mcnemar_from_correctness, EvalResult, SignificanceRow};
use crate::mlp::Mlp;
use crate::numerics::{fnv1a, SeededRng};
use crate::optim::{predict_existing, train, train_static, History, Model};

use super::config::{ExperimentSpec, GroupBy, Mode, ModelKind};

/// Seed for one group (target word), independent of scheduling.
pub fn group_seed(seed: u64, key: &str) -> u64 {
    seed.wrapping_add(fnv1a(key.as_bytes()))
}

/// A seed derived from `seed` along `path`.
pub fn sub_seed(seed: u64, path: &[u64]) -> u64 {
    SeededRng::derive(seed, path).next_u64()
}

/// Splits a corpus into per-classifier groups.
pub fn groups(data: &Dataset, by: GroupBy) -> BTreeMap<String, Dataset> {
    match by {
        GroupBy::Target => data.group_by_target(),
        GroupBy::None => BTreeMap::from([("all".to_string(), data.clone())]),
    }
}

/// A trained system of any kind.
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone)]
pub enum Fitted {
    Neural {
        model: Model,
        /// Own table copy when embeddings were tuned.
        table: Option<EmbeddingTable>,
        history: History,
        label_set: Vec<String>,
    },
    Majority {
        label: String,
    },
    Random {
        label_set: Vec<String>,
        seed: u64,
    },
}

impl Fitted {
    pub fn history(&self) -> Option<&History> {
        match self {
            Fitted::Neural { history, .. } => Some(history),
            _ => None,
        }
    }

    /// Predicted label strings for every instance of `data`. `shared` is the
    /// table the system was trained against.
    pub fn predict(&self, data: &Dataset, shared: &EmbeddingTable) -> Result<Vec<String>> {
        match self {
            Fitted::Majority { label } => Ok(vec![label.clone(); data.len()]),
            Fitted::Random { label_set, seed } => Ok(data
                .instances
                .iter()
                .map(|inst| {
                    let mut rng = SeededRng::derive(*seed, &[fnv1a(inst.id.as_bytes())]);
                    label_set[rng.below(label_set.len())].clone()
                })
                .collect()),
            Fitted::Neural {
                model,
                table,
                label_set,
                ..
            } => {
                let t = table.as_ref().unwrap_or(shared);
                let known = data
                    .instances
                    .iter()
                    .all(|i| i.tokens.iter().all(|tok| t.lookup(tok).is_some()));
                let classes = if known {
                    predict_existing(model, data, t)?
                } else {
                    let mut local = t.clone();
                    local.warm(data.instances.iter().map(|i| &i.tokens));
                    predict_existing(model, data, &local)?
                };
                Ok(classes.into_iter().map(|c| label_set[c].clone()).collect())
            }
        }
    }
}

/// Trains one system of `kind` on `train_data`.
pub fn fit(
    spec: &ExperimentSpec,
    kind: ModelKind,
    train_data: &Dataset,
    table: &EmbeddingTable,
    region_sizes: &[usize],
    seed: u64,
) -> Result<Fitted> {
    if train_data.is_empty() {
        return Err(Error::Empty("training data".into()));
    }
    match kind {
        ModelKind::Majority => Ok(Fitted::Majority {
            label: majority_baseline(train_data)?.label,
        }),
        ModelKind::Random => Ok(Fitted::Random {
            label_set: train_data.label_set.clone(),
            seed,
        }),
        ModelKind::Cnn | ModelKind::Mlp => {
            let classes = train_data.num_classes();
            let mut init = SeededRng::derive(seed, &[0]);
            let mut model = if kind == ModelKind::Cnn {
                Model::Cnn(Cnn::new(
                    spec.cnn_config(table.dim(), classes, region_sizes),
                    &mut init,
                )?)
            } else {
                Model::Mlp(Mlp::new(spec.mlp_config(table.dim(), classes), &mut init)?)
            };
            let cfg = spec.train_config(kind, sub_seed(seed, &[1]));
            let tuned = spec.embedding_mode == EmbeddingMode::Tuned;
            let warmed = train_data
                .instances
                .iter()
                .all(|i| i.tokens.iter().all(|t| table.lookup(t).is_some()));
            let (history, own) = if !tuned && warmed {
                (train_static(&mut model, train_data, table, &cfg)?, None)
            } else {
                let mut local = table.clone();
                let h = train(&mut model, train_data, &mut local, &cfg)?;
                (h, Some(local))
            };
            log::debug!(
                "{} on {} instances: final loss {:.4}, train accuracy {:.3}",
                kind.name(),
                train_data.len(),
                history.losses.last().copied().unwrap_or(f64::NAN),
                history.train_accuracy
            );
            Ok(Fitted::Neural {
                model,
                table: if tuned { own } else { None },
                history,
                label_set: train_data.label_set.clone(),
            })
        }
    }
}

/// Scores predictions; labels outside the training label set are plain misses.
pub fn score(data: &Dataset, preds: &[String], label_set: &[String]) -> Result<EvalResult> {
    let ids: Vec<String> = data.instances.iter().map(|i| i.id.clone()).collect();
    let golds: Vec<Vec<String>> = data
        .instances
        .iter()
        .map(|i| i.gold_labels().into_iter().map(String::from).collect())
        .collect();
    let unseen = golds
        .iter()
        .filter(|g| !g.iter().any(|l| label_set.contains(l)))
        .count();
    if unseen > 0 {
        log::warn!(
            "{unseen} test instances carry only labels unseen in training; counted as misses"
        );
    }
    evaluate_multi(&ids, preds, &golds, label_set)
}

/// The systems a run trains: the main model followed by its comparisons.
pub fn systems(spec: &ExperimentSpec) -> Vec<ModelKind> {
    let mut out = vec![spec.model];
    for &k in &spec.compare {
        if !out.contains(&k) {
            out.push(k);
        }
    }
    out
}

/// Output of one group under one protocol.
#[derive(Debug, Clone)]
pub struct GroupOutcome {
    /// Per system, in [`systems`] order.
    pub results: Vec<EvalResult>,
    /// Main-model training histories, one per trained model.
    pub histories: Vec<History>,
    /// Main-model fits worth checkpointing (train mode only).
    pub fitted: Option<Fitted>,
    /// Region sizes chosen by tuning, when tuning ran.
    pub tuned: Option<TuneOutcome>,
    pub notes: Vec<String>,
}

/// Stratified k-fold cross-validation of every system on one group.
///
/// `extra` is appended whole to every training fold; the held-out folds come
/// from `data` only and partition it.
pub fn run_cv_group(
    spec: &ExperimentSpec,
    key: &str,
    data: &Dataset,
    extra: &Dataset,
    table: &EmbeddingTable,
) -> Result<GroupOutcome> {
    let seed = group_seed(spec.seed, key);
    let labels = data.concat(extra).label_set;
    let mut source = data.clone();
    source.label_set = labels.clone();
    let mut extra = extra.clone();
    extra.label_set = labels.clone();
    let plan = stratified_folds(&source, spec.folds, sub_seed(seed, &[10]))?;
    let kinds = systems(spec);
    let mut per_system: Vec<Vec<EvalResult>> = vec![Vec::new(); kinds.len()];
    let mut histories = Vec::new();
    let mut notes = Vec::new();
    for fold in 0..spec.folds {
        let test_idx = plan.test_indices(fold);
        if test_idx.is_empty() {
            notes.push(format!("{key}: fold {fold} is empty"));
            continue;
        }
        let test = source.subset(&test_idx);
        let mut train_set = source.subset(&plan.train_indices(fold)).concat(&extra);
        if let Some(mode) = spec.balance {
            train_set = balance(&train_set, mode, sub_seed(seed, &[11, fold as u64]));
        }
        if train_set.is_empty() {
            notes.push(format!("{key}: fold {fold} has no training data"));
            continue;
        }
        let fold_seed = sub_seed(seed, &[12, fold as u64]);
        for (s, &kind) in kinds.iter().enumerate() {
            let fitted = fit(spec, kind, &train_set, table, &spec.region_sizes, fold_seed)?;
            let preds = fitted.predict(&test, table)?;
            per_system[s].push(score(&test, &preds, &labels)?);
            if s == 0 {
                histories.extend(fitted.history().cloned());
            }
        }
    }
    let results = per_system
        .iter()
        .map(|parts| EvalResult::merge(parts))
        .collect::<Result<_>>()?;
    Ok(GroupOutcome {
        results,
        histories,
        fitted: None,
        tuned: None,
        notes,
    })
}

/// Trains every system on `train_data` and evaluates on `test`. With no test
/// set, evaluation runs on the training data itself.
pub fn run_train_eval_group(
    spec: &ExperimentSpec,
    key: &str,
    train_data: &Dataset,
    test: Option<&Dataset>,
    table: &EmbeddingTable,
) -> Result<GroupOutcome> {
    let seed = group_seed(spec.seed, key);
    let mut train_set = train_data.clone();
    if let Some(mode) = spec.balance {
        train_set = balance(&train_set, mode, sub_seed(seed, &[11]));
    }
    let test = test.unwrap_or(train_data);
    let mut results = Vec::new();
    let mut histories = Vec::new();
    let mut main = None;
    for (s, kind) in systems(spec).into_iter().enumerate() {
        let fitted = fit(
            spec,
            kind,
            &train_set,
            table,
            &spec.region_sizes,
            sub_seed(seed, &[12]),
        )?;
        let preds = fitted.predict(test, table)?;
        results.push(score(test, &preds, &train_set.label_set)?);
        if s == 0 {
            histories.extend(fitted.history().cloned());
            main = Some(fitted);
        }
    }
    Ok(GroupOutcome {
        results,
        histories,
        fitted: main,
        tuned: None,
        notes: Vec::new(),
    })
}

/// Validation accuracy of each candidate and the winner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneOutcome {
    pub chosen: Vec<usize>,
    pub scores: Vec<CandidateScore>,
    /// True when the split was degenerate and the defaults were used.
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub region_sizes: Vec<usize>,
    pub accuracy: f64,
}

/// Picks region sizes on a seeded stratified 80:20 split of `train_data`:
/// one CNN per candidate, highest validation accuracy wins, ties go to the
/// earlier candidate. Without a usable split `spec.region_sizes` is returned
/// unchanged.
pub fn tune_region_sizes(
    spec: &ExperimentSpec,
    train_data: &Dataset,
    candidates: &[Vec<usize>],
    table: &EmbeddingTable,
    seed: u64,
) -> Result<TuneOutcome> {
    if candidates.is_empty() {
        return Err(Error::Config("no region-size candidates".into()));
    }
    let fallback = || TuneOutcome {
        chosen: spec.region_sizes.clone(),
        scores: Vec::new(),
        fallback: true,
    };
    if train_data.len() < 5 {
        log::warn!(
            "{} training instances for `{}`; using default region sizes",
            train_data.len(),
            train_data.target_word
        );
        return Ok(fallback());
    }
    let plan = stratified_folds(train_data, 5, sub_seed(seed, &[20]))?;
    let val_idx = plan.test_indices(0);
    let fit_idx = plan.train_indices(0);
    if val_idx.is_empty() || fit_idx.is_empty() {
        log::warn!(
            "degenerate validation split for `{}`; using default region sizes",
            train_data.target_word
        );
        return Ok(fallback());
    }
    let fit_set = train_data.subset(&fit_idx);
    let val_set = train_data.subset(&val_idx);
    let mut static_spec = spec.clone();
    static_spec.embedding_mode = EmbeddingMode::Static;
    let fit_seed = sub_seed(seed, &[21]);
    let scores: Vec<CandidateScore> = candidates
        .iter()
        .map(|sizes| -> Result<CandidateScore> {
            let fitted = fit(
                &static_spec,
                ModelKind::Cnn,
                &fit_set,
                table,
                sizes,
                fit_seed,
            )?;
            let preds = fitted.predict(&val_set, table)?;
            let accuracy = score(&val_set, &preds, &fit_set.label_set)?.accuracy;
            log::info!(
                "`{}` sizes {:?}: validation accuracy {:.4}",
                train_data.target_word,
                sizes,
                accuracy
            );
            Ok(CandidateScore {
                region_sizes: sizes.clone(),
                accuracy,
            })
        })
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if s.accuracy > scores[best].accuracy {
            best = i;
        }
    }
    Ok(TuneOutcome {
        chosen: scores[best].region_sizes.clone(),
        scores,
        fallback: false,
    })
}

/// Lexical-sample training data for one word: instances marking several
/// targets are dropped, and instances with several gold senses keep one,
/// picked with a seeded draw. Returns the dataset and the number dropped.
pub fn prepare_wsd_training(data: &Dataset, seed: u64) -> (Dataset, usize) {
    let mut dropped = 0;
    let mut kept = Vec::with_capacity(data.len());
    for inst in &data.instances {
        if inst.is_multi_target() {
            dropped += 1;
            continue;
        }
        let mut inst: Instance = inst.clone();
        if let Some(labels) = inst.labels.take() {
            if !labels.is_empty() {
                let mut rng = SeededRng::derive(seed, &[fnv1a(inst.id.as_bytes())]);
                inst.label = labels[rng.below(labels.len())].clone();
            }
        }
        kept.push(inst);
    }
    let mut ds = Dataset::new(kept);
    ds.target_word = data.target_word.clone();
    (ds, dropped)
}

/// The WSD protocol for one word.
pub fn run_wsd_group(
    spec: &ExperimentSpec,
    key: &str,
    train_data: &Dataset,
    test: &Dataset,
    table: &EmbeddingTable,
) -> Result<GroupOutcome> {
    let seed = group_seed(spec.seed, key);
    let (train_set, dropped) = prepare_wsd_training(train_data, sub_seed(seed, &[30]));
    let mut notes = Vec::new();
    if dropped > 0 {
        log::info!("{key}: dropped {dropped} multi-target training instances");
        notes.push(format!(
            "{key}: dropped {dropped} multi-target training instances"
        ));
    }
    if train_set.is_empty() {
        return Err(Error::Empty(format!("training data for `{key}`")));
    }
    let tuned = if spec.tune && spec.model == ModelKind::Cnn {
        Some(tune_region_sizes(
            spec,
            &train_set,
            &spec.tune_candidates,
            table,
            sub_seed(seed, &[31]),
        )?)
    } else {
        None
    };
    let sizes = tuned
        .as_ref()
        .map_or(spec.region_sizes.clone(), |t| t.chosen.clone());
    let mut results = Vec::new();
    let mut histories = Vec::new();
    for (s, kind) in systems(spec).into_iter().enumerate() {
        let fitted = fit(spec, kind, &train_set, table, &sizes, sub_seed(seed, &[32]))?;
        let preds = fitted.predict(test, table)?;
        results.push(score(test, &preds, &train_set.label_set)?);
        if s == 0 {
            histories.extend(fitted.history().cloned());
        }
    }
    Ok(GroupOutcome {
        results,
        histories,
        fitted: None,
        tuned,
        notes,
    })
}

/// Paired mid-p McNemar rows of the main system (index 0) against each
/// other system.
pub fn significance(
    label: &str,
    kinds: &[ModelKind],
    results: &[EvalResult],
) -> Result<Vec<SignificanceRow>> {
    let main = results[0].is_correct();
    let mut rows = Vec::new();
    for (kind, r) in kinds.iter().zip(results).skip(1) {
        let cmp = mcnemar_from_correctness(&main, &r.is_correct())?;
        rows.push(SignificanceRow {
            pair: format!("{label}: {} vs {}", kinds[0].name(), kind.name()),
            b: cmp.b,
            c: cmp.c,
            midp: cmp.midp,
        });
    }
    Ok(rows)
}

/// Runs `job` over every group, in parallel when `parallel`, returning
/// results in key order.
pub fn per_group<T, F>(keys: &[String], parallel: bool, job: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&str) -> Result<T> + Sync,
{
    if parallel {
        keys.par_iter().map(|k| job(k)).collect()
    } else {
        keys.iter().map(|k| job(k)).collect()
    }
}

/// Which protocol a mode runs.
pub fn protocol_name(mode: Mode) -> &'static str {
    match mode {
        Mode::Cv => "cross-validation",
        Mode::Train | Mode::Eval => "train/test",
        Mode::Wsd => "lexical sample",
        Mode::Analyze => "feature analysis",
        Mode::Tune => "region-size tuning",
    }
}
