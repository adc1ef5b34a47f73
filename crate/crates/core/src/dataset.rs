//! Sense-labelled corpora, stratified folds, class balancing, the majority
//! baseline, and synthetic cue corpora.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::SeededRng;

/// One tokenized sentence with the sense of its target word.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub tokens: Vec<String>,
    pub label: String,
    pub target_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub genre: Option<String>,
    /// All acceptable senses, for lexical-sample data with several gold labels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
    /// Every marked target position, when an instance marks more than one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_indices: Option<Vec<usize>>,
}

impl Instance {
    pub fn new(
        id: impl Into<String>,
        tokens: Vec<String>,
        label: impl Into<String>,
        target_index: usize,
    ) -> Self {
        Instance {
            id: id.into(),
            tokens,
            label: label.into(),
            target_index,
            genre: None,
            labels: None,
            target_indices: None,
        }
    }

    /// The target word, lowercased.
    pub fn target_word(&self) -> String {
        self.tokens[self.target_index].to_lowercase()
    }

    /// Gold labels: `labels` when present, otherwise just `label`.
    pub fn gold_labels(&self) -> Vec<&str> {
        match &self.labels {
            Some(ls) if !ls.is_empty() => ls.iter().map(String::as_str).collect(),
            _ => vec![self.label.as_str()],
        }
    }

    pub fn is_multi_target(&self) -> bool {
        self.target_indices.as_ref().is_some_and(|t| t.len() > 1)
    }
}

/// Instances for one classifier plus the class-index ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub instances: Vec<Instance>,
    /// Lexicographically sorted; position is the class index.
    pub label_set: Vec<String>,
    pub target_word: String,
}

#[derive(Deserialize)]
struct RawInstance {
    id: String,
    tokens: Vec<String>,
    label: Option<String>,
    target_index: usize,
    #[serde(default)]
    genre: Option<String>,
    #[serde(default)]
    labels: Option<Vec<String>>,
    #[serde(default)]
    target_indices: Option<Vec<usize>>,
}

impl Dataset {
    /// Builds a dataset, deriving the label set and target word from the
    /// instances.
    pub fn new(instances: Vec<Instance>) -> Self {
        let labels: BTreeSet<String> = instances
            .iter()
            .flat_map(|i| i.gold_labels().into_iter().map(String::from))
            .collect();
        let target_word = dominant_target(&instances);
        Dataset {
            instances,
            label_set: labels.into_iter().collect(),
            target_word,
        }
    }

    /// Same instances with an explicit label set; it must cover every label.
    pub fn with_label_set(
        instances: Vec<Instance>,
        label_set: Vec<String>,
        target_word: String,
    ) -> Result<Self> {
        for inst in &instances {
            if !label_set.contains(&inst.label) {
                return Err(Error::Invalid(format!(
                    "instance {} has label `{}` outside the label set",
                    inst.id, inst.label
                )));
            }
        }
        Ok(Dataset {
            instances,
            label_set,
            target_word,
        })
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.label_set.len()
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.label_set.iter().position(|l| l == label)
    }

    /// Class index of every instance's primary label.
    pub fn class_indices(&self) -> Vec<usize> {
        self.instances
            .iter()
            .map(|i| self.label_index(&i.label).expect("label set covers labels"))
            .collect()
    }

    /// Instance count per label, in label-set order.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.label_set.len()];
        for c in self.class_indices() {
            counts[c] += 1;
        }
        counts
    }

    /// Instances at `indices`, keeping this dataset's label set.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            instances: indices.iter().map(|&i| self.instances[i].clone()).collect(),
            label_set: self.label_set.clone(),
            target_word: self.target_word.clone(),
        }
    }

    /// Concatenation with a label set covering both sides.
    pub fn concat(&self, other: &Dataset) -> Dataset {
        let mut instances = self.instances.clone();
        instances.extend(other.instances.iter().cloned());
        let labels: BTreeSet<String> = self
            .label_set
            .iter()
            .chain(&other.label_set)
            .cloned()
            .collect();
        Dataset {
            instances,
            label_set: labels.into_iter().collect(),
            target_word: self.target_word.clone(),
        }
    }

    /// Splits by lowercased target word, one dataset per word.
    pub fn group_by_target(&self) -> BTreeMap<String, Dataset> {
        let mut groups: BTreeMap<String, Vec<Instance>> = BTreeMap::new();
        for inst in &self.instances {
            groups
                .entry(inst.target_word())
                .or_default()
                .push(inst.clone());
        }
        groups
            .into_iter()
            .map(|(word, insts)| {
                let mut ds = Dataset::new(insts);
                ds.target_word = word.clone();
                (word, ds)
            })
            .collect()
    }

    /// JSON Lines, one instance per line, in instance order.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for inst in &self.instances {
            out.push_str(&serde_json::to_string(inst).expect("instance serializes"));
            out.push('\n');
        }
        out
    }
}

fn dominant_target(instances: &[Instance]) -> String {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for inst in instances {
        *counts.entry(inst.target_word()).or_default() += 1;
    }
    let mut best: Option<(&String, usize)> = None;
    for (w, &c) in &counts {
        if best.is_none_or(|(_, bc)| c > bc) {
            best = Some((w, c));
        }
    }
    best.map(|(w, _)| w.clone()).unwrap_or_default()
}

/// Reads the JSON Lines corpus format. Blank lines are ignored.
pub fn parse_instances<R: BufRead>(source: R) -> Result<Dataset> {
    let mut instances = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in source.lines().enumerate() {
        let lineno = i + 1;
        let err = |message: String| Error::Parse {
            line: lineno,
            message,
        };
        let line = line.map_err(|e| err(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawInstance = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
        if raw.tokens.is_empty() {
            return Err(err("empty token list".into()));
        }
        if raw.target_index >= raw.tokens.len() {
            return Err(err(format!(
                "target_index {} out of range for {} tokens",
                raw.target_index,
                raw.tokens.len()
            )));
        }
        if let Some(ts) = &raw.target_indices {
            if let Some(&bad) = ts.iter().find(|&&t| t >= raw.tokens.len()) {
                return Err(err(format!("target_indices entry {bad} out of range")));
            }
        }
        let label = match (raw.label, &raw.labels) {
            (Some(l), _) => l,
            (None, Some(ls)) if !ls.is_empty() => ls[0].clone(),
            _ => return Err(err("missing field `label`".into())),
        };
        if !ids.insert(raw.id.clone()) {
            return Err(err(format!("duplicate id `{}`", raw.id)));
        }
        instances.push(Instance {
            id: raw.id,
            tokens: raw.tokens,
            label,
            target_index: raw.target_index,
            genre: raw.genre,
            labels: raw.labels,
            target_indices: raw.target_indices,
        });
    }
    Ok(Dataset::new(instances))
}

/// Fold assignment for k-fold cross-validation, aligned with instance order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub ids: Vec<String>,
    pub assignments: Vec<usize>,
}

impl FoldPlan {
    pub fn fold_of(&self, id: &str) -> Option<usize> {
        self.ids
            .iter()
            .position(|i| i == id)
            .map(|p| self.assignments[p])
    }

    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] == fold)
            .collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] != fold)
            .collect()
    }
}

/// Per class (label-set order): shuffle by seed, then deal round-robin. The
/// dealing position carries over between classes so fold totals stay even.
pub fn stratified_folds(ds: &Dataset, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::Config(format!("k must be at least 2, got {k}")));
    }
    if ds.is_empty() {
        return Err(Error::Empty("dataset".into()));
    }
    let classes = ds.class_indices();
    let mut rng = SeededRng::new(seed);
    let mut assignments = vec![0; ds.len()];
    let mut next_fold = 0;
    for c in 0..ds.num_classes() {
        let mut members: Vec<usize> = (0..ds.len()).filter(|&i| classes[i] == c).collect();
        if !members.is_empty() && members.len() < k {
            log::warn!(
                "class `{}` has {} instances for {k} folds; some folds lack it",
                ds.label_set[c],
                members.len()
            );
        }
        rng.shuffle(&mut members);
        for i in members {
            assignments[i] = next_fold;
            next_fold = (next_fold + 1) % k;
        }
    }
    Ok(FoldPlan {
        k,
        seed,
        ids: ds.instances.iter().map(|i| i.id.clone()).collect(),
        assignments,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BalanceMode {
    Oversample,
    Undersample,
}

/// Equalizes class counts. Oversampling appends seeded draws with
/// replacement (ids suffixed `#dupN`); undersampling keeps a seeded subset of
/// each larger class in original order.
pub fn balance(ds: &Dataset, mode: BalanceMode, seed: u64) -> Dataset {
    let classes = ds.class_indices();
    let counts = ds.class_counts();
    let present: Vec<usize> = counts.iter().copied().filter(|&c| c > 0).collect();
    if present.len() < 2 {
        return ds.clone();
    }
    let mut rng = SeededRng::new(seed);
    let members = |c: usize| -> Vec<usize> { (0..ds.len()).filter(|&i| classes[i] == c).collect() };
    match mode {
        BalanceMode::Oversample => {
            let target = *present.iter().max().expect("non-empty");
            let mut out = ds.instances.clone();
            for c in 0..ds.num_classes() {
                let m = members(c);
                if m.is_empty() {
                    continue;
                }
                for n in 0..target - m.len() {
                    let mut inst = ds.instances[m[rng.below(m.len())]].clone();
                    inst.id = format!("{}#dup{}", inst.id, n + 1);
                    out.push(inst);
                }
            }
            Dataset {
                instances: out,
                label_set: ds.label_set.clone(),
                target_word: ds.target_word.clone(),
            }
        }
        BalanceMode::Undersample => {
            let target = *present.iter().min().expect("non-empty");
            let mut keep = vec![false; ds.len()];
            for c in 0..ds.num_classes() {
                let mut m = members(c);
                rng.shuffle(&mut m);
                for &i in m.iter().take(target) {
                    keep[i] = true;
                }
            }
            let kept: Vec<usize> = (0..ds.len()).filter(|&i| keep[i]).collect();
            ds.subset(&kept)
        }
    }
}

/// Always predicts the most frequent training label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MajorityClassifier {
    pub label: String,
}

impl MajorityClassifier {
    pub fn predict(&self, _instance: &Instance) -> &str {
        &self.label
    }
}

/// Most frequent training label; ties go to the earlier label-set entry.
pub fn majority_baseline(train: &Dataset) -> Result<MajorityClassifier> {
    if train.is_empty() {
        return Err(Error::Empty("training set".into()));
    }
    let counts = train.class_counts();
    let mut best = 0;
    for (c, &n) in counts.iter().enumerate() {
        if n > counts[best] {
            best = c;
        }
    }
    Ok(MajorityClassifier {
        label: train.label_set[best].clone(),
    })
}

/// Parameters of a synthetic corpus in which each class is marked by a
/// planted cue n-gram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CueSpec {
    /// One cue per class; class `c` is labelled `labels[c]`.
    pub cues: Vec<Vec<String>>,
    pub labels: Vec<String>,
    pub n_per_class: usize,
    pub sentence_len: usize,
    /// Filler vocabulary; cue tokens are never used as filler.
    pub vocab: Vec<String>,
    /// Token placed at index 0 as the target word.
    pub target: String,
}

impl CueSpec {
    /// Vocabulary `w0..w{vocab_size-1}`; cue tokens are drawn from it.
    /// With `order_only`, every class uses a rotation of the same three
    /// tokens, so the classes differ only in cue order.
    pub fn random(
        classes: usize,
        vocab_size: usize,
        sentence_len: usize,
        n_per_class: usize,
        order_only: bool,
        seed: u64,
    ) -> Self {
        let vocab: Vec<String> = (0..vocab_size).map(|i| format!("w{i}")).collect();
        let mut rng = SeededRng::derive(seed, &[0xC0E]);
        let mut pool: Vec<usize> = (0..vocab_size).collect();
        rng.shuffle(&mut pool);
        let cues: Vec<Vec<String>> = if order_only {
            let base: Vec<String> = pool[..3].iter().map(|&i| vocab[i].clone()).collect();
            (0..classes)
                .map(|c| (0..3).map(|j| base[(j + c) % 3].clone()).collect())
                .collect()
        } else {
            (0..classes)
                .map(|c| {
                    pool[3 * c..3 * c + 3]
                        .iter()
                        .map(|&i| vocab[i].clone())
                        .collect()
                })
                .collect()
        };
        CueSpec {
            cues,
            labels: (0..classes).map(|c| format!("c{c}")).collect(),
            n_per_class,
            sentence_len,
            vocab,
            target: "<t>".into(),
        }
    }
}

/// Generates `n_per_class` sentences per class, interleaved by class. Each has
/// the target token at index 0 and its class cue at a random position after it.
pub fn synth_cue_dataset(spec: &CueSpec, seed: u64) -> Result<Dataset> {
    let cue_len = spec.cues.iter().map(Vec::len).max().unwrap_or(0);
    if spec.cues.len() < 2 || spec.cues.len() != spec.labels.len() {
        return Err(Error::Config(
            "need one label per cue and at least two cues".into(),
        ));
    }
    let distinct: HashSet<&Vec<String>> = spec.cues.iter().collect();
    if distinct.len() != spec.cues.len() || spec.cues.iter().any(Vec::is_empty) {
        return Err(Error::Config(
            "cues must be non-empty and pairwise distinct".into(),
        ));
    }
    if spec.sentence_len < cue_len + 1 {
        return Err(Error::Config(format!(
            "sentence length {} too short for cue length {cue_len}",
            spec.sentence_len
        )));
    }
    let cue_tokens: HashSet<&String> = spec.cues.iter().flatten().collect();
    let filler: Vec<&String> = spec
        .vocab
        .iter()
        .filter(|t| !cue_tokens.contains(t) && **t != spec.target)
        .collect();
    if filler.is_empty() {
        return Err(Error::Config("no filler vocabulary left".into()));
    }
    let mut rng = SeededRng::new(seed);
    let mut instances = Vec::with_capacity(spec.n_per_class * spec.cues.len());
    for i in 0..spec.n_per_class {
        for (c, cue) in spec.cues.iter().enumerate() {
            let mut tokens = Vec::with_capacity(spec.sentence_len);
            tokens.push(spec.target.clone());
            for _ in 1..spec.sentence_len {
                tokens.push(filler[rng.below(filler.len())].clone());
            }
            let start = 1 + rng.below(spec.sentence_len - cue.len());
            tokens[start..start + cue.len()].clone_from_slice(cue);
            instances.push(Instance::new(
                format!("synth-{c}-{i}"),
                tokens,
                spec.labels[c].clone(),
                0,
            ));
        }
    }
    let mut ds = Dataset::new(instances);
    ds.target_word = spec.target.to_lowercase();
    Ok(ds)
}

/// Whether `tokens` contains `ngram` as a contiguous run.
pub fn contains_ngram(tokens: &[String], ngram: &[String]) -> bool {
    !ngram.is_empty() && tokens.windows(ngram.len()).any(|w| w == ngram)
}
