//! Experiment runner behind the `sensecnn` binary.
//!
//! A run reads its corpora and embeddings, executes one protocol per target
//! word, and writes everything into the output directory:
//!
//! ```text
//! results.json      per-word accuracy, micro average, significance rows
//! report.txt        the same as a table
//! predictions.jsonl one line per (word, system, instance)
//! history.csv       mean training loss per step over all trained models
//! histories/        one loss curve per trained model
//! checkpoints/      trained models (train mode)
//! analysis/         feature-detector exports (analyze mode)
//! manifest.json     resolved config plus SHA-256 digests of every input
//! ```
//!
//! Passing `manifest.json` back as the config re-runs the experiment after
//! checking the inputs are unchanged; the outputs are byte-identical.

pub mod config;
pub mod experiments;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::checkpoint::Checkpoint;
use crate::dataset::{parse_instances, stratified_folds, Dataset};
use crate::embeddings::{load_embeddings, oov_bound_from_table, EmbeddingTable};
use crate::error::{Error, Result};
use crate::eval::{
    mcnemar_from_correctness, EvalResult, ResultsReport, SignificanceRow, VerbSummary,
};
use crate::introspect::{analyze, render_report, DistanceSummary};
use crate::optim::{predict_existing, Model};

pub use config::{
    default_tune_candidates, EmbeddingInit, ExperimentSpec, GroupBy, Mode, ModelKind,
};
pub use experiments::{
    fit, group_seed, groups, prepare_wsd_training, run_cv_group, run_train_eval_group,
    run_wsd_group, score, significance, sub_seed, systems, tune_region_sizes, CandidateScore,
    Fitted, GroupOutcome, TuneOutcome,
};

/// Bound of the random-vector condition when no embedding file supplies one.
pub const DEFAULT_RANDOM_BOUND: f64 = 0.25;

const ANY_MATCH_NOTE: &str =
    "test instances with several gold senses count as correct when the prediction matches any of them";

/// Reads a config file. A `.json` file is treated as a manifest from an
/// earlier run: its recorded digests are checked when inputs are read.
pub fn load_spec(mode: Mode, path: &Path) -> Result<ExperimentSpec> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if path.extension().is_some_and(|e| e == "json") {
        let manifest: Manifest = serde_json::from_str(&text)?;
        let mut spec = ExperimentSpec::new(mode);
        for (key, value) in &manifest.config {
            spec.set(key, value, Path::new(""))?;
        }
        spec.expected_digests = manifest.inputs;
        Ok(spec)
    } else {
        let base = path.parent().unwrap_or(Path::new(""));
        ExperimentSpec::from_toml_str(mode, &text, base)
    }
}

/// What `manifest.json` holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub mode: Mode,
    /// Resolved configuration; the output directory is left out so a
    /// manifest can be replayed elsewhere.
    pub config: toml::Table,
    /// SHA-256 of each input file, keyed by path.
    pub inputs: BTreeMap<String, String>,
}

/// Per-step mean loss as `step,loss` lines.
pub fn mean_history_csv(histories: &[&crate::optim::History]) -> String {
    let mut out = String::from("step,loss\n");
    let steps = histories.iter().map(|h| h.steps()).max().unwrap_or(0);
    for s in 0..steps {
        let vals: Vec<f64> = histories
            .iter()
            .filter_map(|h| h.losses.get(s).copied())
            .collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        out.push_str(&format!("{},{}\n", s + 1, mean));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenreSummary {
    pub n: usize,
    pub correct: usize,
    pub accuracy: f64,
}

/// Contents of `results.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResults {
    pub mode: Mode,
    pub model: ModelKind,
    pub systems: Vec<ModelKind>,
    #[serde(flatten, default, skip_serializing_if = "Option::is_none")]
    pub report: Option<ResultsReport>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub genres: BTreeMap<String, GenreSummary>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub tuning: BTreeMap<String, TuneOutcome>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub analysis: BTreeMap<String, DistanceSummary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped: Vec<String>,
}

/// What a run produced.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub results: RunResults,
    /// Paths relative to the output directory, sorted.
    pub files: Vec<PathBuf>,
}

/// Input reader that records a digest of every file it opens.
struct Inputs<'a> {
    expected: &'a BTreeMap<String, String>,
    digests: BTreeMap<String, String>,
}

impl Inputs<'_> {
    fn read(&mut self, path: &Path) -> Result<Vec<u8>> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let key = path.display().to_string();
        let digest = hex::encode(Sha256::digest(&bytes));
        if let Some(want) = self.expected.get(&key) {
            if *want != digest {
                return Err(Error::Config(format!(
                    "input `{key}` differs from the manifest digest"
                )));
            }
        }
        self.digests.insert(key, digest);
        Ok(bytes)
    }

    fn corpus(&mut self, path: &Path) -> Result<Dataset> {
        let bytes = self.read(path)?;
        parse_instances(bytes.as_slice()).map_err(|e| match e {
            Error::Parse { line, message } => Error::Parse {
                line,
                message: format!("{}: {message}", path.display()),
            },
            other => other,
        })
    }
}

/// Output files, buffered until the run succeeds.
#[derive(Default)]
struct Outputs {
    files: BTreeMap<PathBuf, Vec<u8>>,
}

impl Outputs {
    fn put(&mut self, path: impl Into<PathBuf>, contents: impl Into<Vec<u8>>) {
        self.files.insert(path.into(), contents.into());
    }
}

/// A filesystem-safe name for a group key.
pub fn file_key(key: &str) -> String {
    key.chars()
        .map(|c| {
            if c.is_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn base_table(spec: &ExperimentSpec, inputs: &mut Inputs) -> Result<EmbeddingTable> {
    let seed = sub_seed(spec.seed, &[40]);
    let loaded = match &spec.embeddings {
        Some(path) => {
            let bytes = inputs.read(path)?;
            Some(load_embeddings(bytes.as_slice(), spec.embedding_dim, seed)?)
        }
        None => None,
    };
    match (spec.embedding_init, loaded) {
        (EmbeddingInit::Pretrained, Some(table)) => Ok(table),
        (EmbeddingInit::Random, Some(table)) => {
            let bound = spec
                .random_bound
                .unwrap_or_else(|| oov_bound_from_table(&table));
            EmbeddingTable::random_init(spec.embedding_dim, bound, seed)
        }
        (init, None) => {
            if init == EmbeddingInit::Pretrained {
                log::warn!("no embedding file given; using random vectors");
            }
            EmbeddingTable::random_init(
                spec.embedding_dim,
                spec.random_bound.unwrap_or(DEFAULT_RANDOM_BOUND),
                seed,
            )
        }
    }
}

fn require<'a>(what: &str, p: &'a Option<PathBuf>) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| Error::Config(format!("`{what}` is required for this mode")))
}

/// Executes the experiment and writes its outputs under `spec.out`.
pub fn run(spec: &ExperimentSpec) -> Result<RunSummary> {
    spec.validate()?;
    let mut inputs = Inputs {
        expected: &spec.expected_digests,
        digests: BTreeMap::new(),
    };
    let corpus = match &spec.corpus {
        Some(p) => Some(inputs.corpus(p)?),
        None => None,
    };
    let mut extra = Dataset::new(Vec::new());
    for p in &spec.always_in_train {
        extra = extra.concat(&inputs.corpus(p)?);
    }
    let test = match &spec.test_corpus {
        Some(p) => Some(inputs.corpus(p)?),
        None => None,
    };
    let mut table = base_table(spec, &mut inputs)?;
    for ds in corpus.iter().chain([&extra]).chain(test.iter()) {
        table.warm(ds.instances.iter().map(|i| &i.tokens));
    }

    let mut out = Outputs::default();
    let results = match spec.mode {
        Mode::Cv => {
            let corpus = corpus
                .as_ref()
                .ok_or_else(|| Error::Config("`corpus` is required for cv".into()))?;
            run_cv(spec, corpus, &extra, &table, &mut out)?
        }
        Mode::Train => {
            let corpus = corpus
                .as_ref()
                .ok_or_else(|| Error::Config("`corpus` is required for train".into()))?;
            run_train(spec, corpus, &extra, test.as_ref(), &table, &mut out)?
        }
        Mode::Eval => {
            let data = test.as_ref().or(corpus.as_ref()).ok_or_else(|| {
                Error::Config("`test_corpus` or `corpus` is required for eval".into())
            })?;
            let dir = require("checkpoint_dir", &spec.checkpoint_dir)?;
            run_eval(spec, data, dir, &mut inputs, &table, &mut out)?
        }
        Mode::Wsd => {
            require("corpus", &spec.corpus)?;
            require("test_corpus", &spec.test_corpus)?;
            run_wsd(
                spec,
                corpus.as_ref().unwrap(),
                test.as_ref().unwrap(),
                &table,
                &mut out,
            )?
        }
        Mode::Tune => {
            let corpus = corpus
                .as_ref()
                .ok_or_else(|| Error::Config("`corpus` is required for tune".into()))?;
            run_tune(spec, corpus, &table, &mut out)?
        }
        Mode::Analyze => {
            let corpus = corpus
                .as_ref()
                .ok_or_else(|| Error::Config("`corpus` is required for analyze".into()))?;
            run_analyze(spec, corpus, &mut inputs, &table, &mut out)?
        }
    };

    out.put(
        "results.json",
        serde_json::to_string_pretty(&results)? + "\n",
    );
    out.put("report.txt", report_text(&results));
    let mut config = spec.to_table();
    config.remove("out");
    let manifest = Manifest {
        mode: spec.mode,
        config,
        inputs: inputs.digests,
    };
    out.put(
        "manifest.json",
        serde_json::to_string_pretty(&manifest)? + "\n",
    );

    fs::create_dir_all(&spec.out).map_err(|e| Error::io(&spec.out, e))?;
    for (rel, bytes) in &out.files {
        let path = spec.out.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    }
    Ok(RunSummary {
        results,
        files: out.files.into_keys().collect(),
    })
}

fn write_histories(keyed: &[(String, &GroupOutcome)], out: &mut Outputs) {
    let mut all = Vec::new();
    for (key, g) in keyed {
        for (i, h) in g.histories.iter().enumerate() {
            out.put(format!("histories/{}_{i}.csv", file_key(key)), h.to_csv());
            all.push(h);
        }
    }
    if !all.is_empty() {
        out.put("history.csv", mean_history_csv(&all));
    }
}

fn write_predictions(
    kinds: &[ModelKind],
    keyed: &[(String, &GroupOutcome)],
    out: &mut Outputs,
) -> Result<()> {
    #[derive(Serialize)]
    struct Line<'a> {
        group: &'a str,
        system: &'a str,
        id: &'a str,
        gold: &'a str,
        pred: &'a str,
    }
    let mut text = String::new();
    for (key, g) in keyed {
        for (kind, r) in kinds.iter().zip(&g.results) {
            for p in &r.predictions {
                text.push_str(&serde_json::to_string(&Line {
                    group: key,
                    system: kind.name(),
                    id: &p.id,
                    gold: &p.gold,
                    pred: &p.pred,
                })?);
                text.push('\n');
            }
        }
    }
    out.put("predictions.jsonl", text);
    Ok(())
}

/// Per-word summaries, micro averages and significance rows for every
/// system, with pooled McNemar rows over all words.
fn assemble_report(
    kinds: &[ModelKind],
    keyed: &[(String, &GroupOutcome)],
    mut notes: Vec<String>,
) -> Result<ResultsReport> {
    let mut per_system: Vec<BTreeMap<String, VerbSummary>> = vec![BTreeMap::new(); kinds.len()];
    let mut significance_rows: Vec<SignificanceRow> = Vec::new();
    let mut pooled: Vec<Vec<bool>> = vec![Vec::new(); kinds.len()];
    let mut main_results: Vec<EvalResult> = Vec::new();
    for (key, g) in keyed {
        for (s, r) in g.results.iter().enumerate() {
            per_system[s].insert(key.clone(), VerbSummary::from(r));
            pooled[s].extend(r.is_correct());
        }
        main_results.push(g.results[0].clone());
        significance_rows.extend(significance(key, kinds, &g.results)?);
        notes.extend(g.notes.iter().cloned());
    }
    if keyed.len() > 1 {
        for (s, kind) in kinds.iter().enumerate().skip(1) {
            let cmp = mcnemar_from_correctness(&pooled[0], &pooled[s])?;
            significance_rows.push(SignificanceRow {
                pair: format!("pooled: {} vs {}", kinds[0].name(), kind.name()),
                b: cmp.b,
                c: cmp.c,
                midp: cmp.midp,
            });
        }
    }
    let micro = if main_results.is_empty() {
        return Err(Error::Empty("no group produced results".into()));
    } else {
        crate::eval::micro_average(&main_results)?
    };
    let baselines = kinds
        .iter()
        .zip(per_system.iter())
        .skip(1)
        .map(|(k, m)| (k.name().to_string(), m.clone()))
        .collect();
    Ok(ResultsReport {
        per_verb: per_system.swap_remove(0),
        micro,
        significance: significance_rows,
        baselines,
        notes,
    })
}

fn finish_groups(
    spec: &ExperimentSpec,
    kinds: Vec<ModelKind>,
    keyed: Vec<(String, GroupOutcome)>,
    skipped: Vec<String>,
    notes: Vec<String>,
    out: &mut Outputs,
) -> Result<RunResults> {
    let refs: Vec<(String, &GroupOutcome)> = keyed.iter().map(|(k, g)| (k.clone(), g)).collect();
    write_histories(&refs, out);
    write_predictions(&kinds, &refs, out)?;
    let report = assemble_report(&kinds, &refs, notes)?;
    let tuning = keyed
        .iter()
        .filter_map(|(k, g)| g.tuned.clone().map(|t| (k.clone(), t)))
        .collect();
    Ok(RunResults {
        mode: spec.mode,
        model: spec.model,
        systems: kinds,
        report: Some(report),
        genres: BTreeMap::new(),
        tuning,
        analysis: BTreeMap::new(),
        skipped,
    })
}

fn extra_for(spec: &ExperimentSpec, extra: &BTreeMap<String, Dataset>, key: &str) -> Dataset {
    match spec.group_by {
        GroupBy::None => extra
            .values()
            .next()
            .cloned()
            .unwrap_or_else(|| Dataset::new(Vec::new())),
        GroupBy::Target => extra
            .get(key)
            .cloned()
            .unwrap_or_else(|| Dataset::new(Vec::new())),
    }
}

fn run_cv(
    spec: &ExperimentSpec,
    corpus: &Dataset,
    extra: &Dataset,
    table: &EmbeddingTable,
    out: &mut Outputs,
) -> Result<RunResults> {
    let grouped = groups(corpus, spec.group_by);
    let extra_groups = groups(extra, spec.group_by);
    let keys: Vec<String> = grouped.keys().cloned().collect();
    let outcomes = experiments::per_group(&keys, spec.parallel, |key| {
        run_cv_group(
            spec,
            key,
            &grouped[key],
            &extra_for(spec, &extra_groups, key),
            table,
        )
    })?;
    finish_groups(
        spec,
        systems(spec),
        keys.into_iter().zip(outcomes).collect(),
        Vec::new(),
        Vec::new(),
        out,
    )
}

/// Training part of the CV fold `fold` for one group, using the same fold
/// plan as `cv` mode.
fn fold_training_part(
    spec: &ExperimentSpec,
    key: &str,
    data: &Dataset,
    fold: usize,
) -> Result<Dataset> {
    let plan = stratified_folds(
        data,
        spec.folds,
        sub_seed(group_seed(spec.seed, key), &[10]),
    )?;
    Ok(data.subset(&plan.train_indices(fold)))
}

fn run_train(
    spec: &ExperimentSpec,
    corpus: &Dataset,
    extra: &Dataset,
    test: Option<&Dataset>,
    table: &EmbeddingTable,
    out: &mut Outputs,
) -> Result<RunResults> {
    let grouped = groups(corpus, spec.group_by);
    let extra_groups = groups(extra, spec.group_by);
    let test_groups = test.map(|t| groups(t, spec.group_by));
    let mut skipped = Vec::new();
    if let Some(tg) = &test_groups {
        for key in tg.keys().filter(|k| !grouped.contains_key(*k)) {
            log::warn!("no training data for `{key}`; its test instances are not scored");
            skipped.push(key.clone());
        }
    }
    let keys: Vec<String> = grouped
        .keys()
        .filter(|k| test_groups.as_ref().is_none_or(|tg| tg.contains_key(*k)))
        .cloned()
        .collect();
    let outcomes = experiments::per_group(&keys, spec.parallel, |key| {
        let mut train_set = match spec.train_fold {
            Some(f) => fold_training_part(spec, key, &grouped[key], f)?,
            None => grouped[key].clone(),
        };
        train_set = train_set.concat(&extra_for(spec, &extra_groups, key));
        let test_set = test_groups.as_ref().map(|tg| &tg[key]);
        run_train_eval_group(spec, key, &train_set, test_set, table)
    })?;

    for (key, g) in keys.iter().zip(&outcomes) {
        if let Some(Fitted::Neural {
            model,
            table: own,
            label_set,
            ..
        }) = &g.fitted
        {
            let ck =
                Checkpoint::from_model(model, label_set, own.as_ref().unwrap_or(table), spec.seed);
            out.put(format!("checkpoints/{}.json", file_key(key)), ck.to_json()?);
        }
    }

    let genre_of: BTreeMap<&str, &str> = test
        .unwrap_or(corpus)
        .instances
        .iter()
        .filter_map(|i| i.genre.as_deref().map(|g| (i.id.as_str(), g)))
        .collect();
    let mut genres: BTreeMap<String, GenreSummary> = BTreeMap::new();
    for g in &outcomes {
        for p in &g.results[0].predictions {
            if let Some(genre) = genre_of.get(p.id.as_str()) {
                let e = genres.entry(genre.to_string()).or_insert(GenreSummary {
                    n: 0,
                    correct: 0,
                    accuracy: 0.0,
                });
                e.n += 1;
                e.correct += usize::from(p.gold == p.pred);
            }
        }
    }
    for g in genres.values_mut() {
        g.accuracy = g.correct as f64 / g.n as f64;
    }

    let mut results = finish_groups(
        spec,
        systems(spec),
        keys.into_iter().zip(outcomes).collect(),
        skipped,
        Vec::new(),
        out,
    )?;
    results.genres = genres;
    Ok(results)
}

fn run_eval(
    spec: &ExperimentSpec,
    data: &Dataset,
    dir: &Path,
    inputs: &mut Inputs,
    table: &EmbeddingTable,
    out: &mut Outputs,
) -> Result<RunResults> {
    let grouped = groups(data, spec.group_by);
    let mut keyed = Vec::new();
    let mut skipped = Vec::new();
    let mut kind = None;
    for (key, ds) in &grouped {
        let path = dir.join(format!("{}.json", file_key(key)));
        if !path.exists() {
            log::warn!("no checkpoint for `{key}` at {}", path.display());
            skipped.push(key.clone());
            continue;
        }
        let bytes = inputs.read(&path)?;
        let ck = Checkpoint::from_json(
            std::str::from_utf8(&bytes).map_err(|e| Error::Invalid(e.to_string()))?,
        )?;
        let model = ck.to_model()?;
        kind.get_or_insert(match model {
            Model::Cnn(_) => ModelKind::Cnn,
            Model::Mlp(_) => ModelKind::Mlp,
        });
        let mut local = table.clone();
        ck.apply_embeddings(&mut local)?;
        local.warm(ds.instances.iter().map(|i| &i.tokens));
        let preds: Vec<String> = predict_existing(&model, ds, &local)?
            .into_iter()
            .map(|c| ck.label_set[c].clone())
            .collect();
        keyed.push((
            key.clone(),
            GroupOutcome {
                results: vec![score(ds, &preds, &ck.label_set)?],
                histories: Vec::new(),
                fitted: None,
                tuned: None,
                notes: Vec::new(),
            },
        ));
    }
    let kind = kind.ok_or_else(|| Error::Empty(format!("no checkpoints in {}", dir.display())))?;
    let mut results = finish_groups(spec, vec![kind], keyed, skipped, Vec::new(), out)?;
    results.model = kind;
    Ok(results)
}

fn run_wsd(
    spec: &ExperimentSpec,
    train_data: &Dataset,
    test: &Dataset,
    table: &EmbeddingTable,
    out: &mut Outputs,
) -> Result<RunResults> {
    let grouped = groups(train_data, spec.group_by);
    let test_groups = groups(test, spec.group_by);
    let mut skipped = Vec::new();
    let mut keys = Vec::new();
    for key in test_groups.keys() {
        let usable = grouped
            .get(key)
            .is_some_and(|g| g.instances.iter().any(|i| !i.is_multi_target()));
        if usable {
            keys.push(key.clone());
        } else {
            log::warn!("`{key}` has no usable training data; skipped");
            skipped.push(key.clone());
        }
    }
    let outcomes = experiments::per_group(&keys, spec.parallel, |key| {
        run_wsd_group(spec, key, &grouped[key], &test_groups[key], table)
    })?;
    finish_groups(
        spec,
        systems(spec),
        keys.into_iter().zip(outcomes).collect(),
        skipped,
        vec![ANY_MATCH_NOTE.to_string()],
        out,
    )
}

fn run_tune(
    spec: &ExperimentSpec,
    corpus: &Dataset,
    table: &EmbeddingTable,
    out: &mut Outputs,
) -> Result<RunResults> {
    let grouped = groups(corpus, spec.group_by);
    let keys: Vec<String> = grouped.keys().cloned().collect();
    let outcomes = experiments::per_group(&keys, spec.parallel, |key| {
        let seed = group_seed(spec.seed, key);
        let (train_set, _) = prepare_wsd_training(&grouped[key], sub_seed(seed, &[30]));
        tune_region_sizes(
            spec,
            &train_set,
            &spec.tune_candidates,
            table,
            sub_seed(seed, &[31]),
        )
    })?;
    let mut text = String::from("group\tchosen\tcandidate\taccuracy\n");
    for (key, t) in keys.iter().zip(&outcomes) {
        for c in &t.scores {
            text.push_str(&format!(
                "{key}\t{:?}\t{:?}\t{}\n",
                t.chosen, c.region_sizes, c.accuracy
            ));
        }
    }
    out.put("tuning.tsv", text);
    Ok(RunResults {
        mode: spec.mode,
        model: ModelKind::Cnn,
        systems: vec![ModelKind::Cnn],
        report: None,
        genres: BTreeMap::new(),
        tuning: keys.into_iter().zip(outcomes).collect(),
        analysis: BTreeMap::new(),
        skipped: Vec::new(),
    })
}

fn run_analyze(
    spec: &ExperimentSpec,
    corpus: &Dataset,
    inputs: &mut Inputs,
    table: &EmbeddingTable,
    out: &mut Outputs,
) -> Result<RunResults> {
    if spec.model != ModelKind::Cnn {
        return Err(Error::Config("analyze needs model = \"cnn\"".into()));
    }
    let grouped = groups(corpus, spec.group_by);
    let mut analysis = BTreeMap::new();
    let mut trained = Vec::new();
    let mut skipped = Vec::new();
    for (key, ds) in &grouped {
        let (model, mut local) = match &spec.checkpoint_dir {
            Some(dir) => {
                let path = dir.join(format!("{}.json", file_key(key)));
                if !path.exists() {
                    log::warn!("no checkpoint for `{key}`; skipped");
                    skipped.push(key.clone());
                    continue;
                }
                let bytes = inputs.read(&path)?;
                let ck = Checkpoint::from_json(
                    std::str::from_utf8(&bytes).map_err(|e| Error::Invalid(e.to_string()))?,
                )?;
                let mut local = table.clone();
                ck.apply_embeddings(&mut local)?;
                (ck.to_model()?, local)
            }
            None => {
                let fitted = fit(
                    spec,
                    ModelKind::Cnn,
                    ds,
                    table,
                    &spec.region_sizes,
                    sub_seed(group_seed(spec.seed, key), &[12]),
                )?;
                let Fitted::Neural {
                    model,
                    table: own,
                    history,
                    ..
                } = fitted
                else {
                    unreachable!("cnn fit is neural")
                };
                trained.push((key.clone(), history));
                (model, own.unwrap_or_else(|| table.clone()))
            }
        };
        let Model::Cnn(cnn) = model else {
            return Err(Error::Config(format!(
                "checkpoint for `{key}` is not a CNN"
            )));
        };
        let report = analyze(&cnn, ds, &mut local, spec.top_k)?;
        for (name, contents) in render_report(&report, ds)? {
            out.put(format!("analysis/{}/{name}", file_key(key)), contents);
        }
        analysis.insert(key.clone(), report.stats.overall.clone());
    }
    for (key, h) in &trained {
        out.put(format!("histories/{}_0.csv", file_key(key)), h.to_csv());
    }
    if !trained.is_empty() {
        out.put(
            "history.csv",
            mean_history_csv(&trained.iter().map(|(_, h)| h).collect::<Vec<_>>()),
        );
    }
    Ok(RunResults {
        mode: spec.mode,
        model: ModelKind::Cnn,
        systems: vec![ModelKind::Cnn],
        report: None,
        genres: BTreeMap::new(),
        tuning: BTreeMap::new(),
        analysis,
        skipped,
    })
}

fn report_text(results: &RunResults) -> String {
    let mut text = format!(
        "mode: {}\nmodel: {}\nprotocol: {}\n\n",
        results.mode.name(),
        results.model.name(),
        experiments::protocol_name(results.mode)
    );
    if let Some(report) = &results.report {
        text.push_str(&report.to_text(results.model.name()));
    }
    if !results.genres.is_empty() {
        text.push_str("\ngenre breakdown\n");
        for (g, s) in &results.genres {
            text.push_str(&format!("{g:<16}{:>8}{:>12.2}\n", s.n, 100.0 * s.accuracy));
        }
    }
    if !results.tuning.is_empty() {
        text.push_str("region sizes\n");
        for (k, t) in &results.tuning {
            let how = if t.fallback {
                " (default, split too small)"
            } else {
                ""
            };
            text.push_str(&format!("{k:<16}{:?}{how}\n", t.chosen));
        }
    }
    if !results.analysis.is_empty() {
        text.push_str("feature detector spans\n");
        for (k, s) in &results.analysis {
            text.push_str(&format!(
                "{k:<16}hits {:>6}  contains {:.3}  starts with target {:.3}  mean distance {:.3}\n",
                s.count, s.contains_fraction, s.starts_with_target_fraction, s.mean_abs_distance
            ));
        }
    }
    if !results.skipped.is_empty() {
        text.push_str(&format!("\nskipped: {}\n", results.skipped.join(", ")));
    }
    text
}
