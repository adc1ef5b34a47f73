//! Accuracy, confusion matrices, micro-averaging and the exact mid-p
//! McNemar test for paired predictions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub gold: String,
    pub pred: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub n: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub label_set: Vec<String>,
    /// `confusion[gold][pred]` over `label_set`.
    pub confusion: Vec<Vec<usize>>,
    pub predictions: Vec<Prediction>,
}

fn extend_labels(label_set: &[String], extra: impl IntoIterator<Item = String>) -> Vec<String> {
    let mut labels = label_set.to_vec();
    for l in extra {
        if !labels.contains(&l) {
            labels.push(l);
        }
    }
    labels
}

/// Scores predictions against gold labels. Labels missing from `label_set`
/// are appended so the confusion matrix stays complete.
pub fn evaluate(preds: &[String], golds: &[String], label_set: &[String]) -> Result<EvalResult> {
    let ids: Vec<String> = (0..golds.len()).map(|i| i.to_string()).collect();
    evaluate_ids(&ids, preds, golds, label_set)
}

pub fn evaluate_ids(
    ids: &[String],
    preds: &[String],
    golds: &[String],
    label_set: &[String],
) -> Result<EvalResult> {
    let gold_sets: Vec<Vec<String>> = golds.iter().map(|g| vec![g.clone()]).collect();
    evaluate_multi(ids, preds, &gold_sets, label_set)
}

/// Scoring where an instance may accept several gold labels; a prediction
/// matching any of them counts as correct. The confusion matrix records the
/// matched label for correct predictions and the first gold label otherwise.
pub fn evaluate_multi(
    ids: &[String],
    preds: &[String],
    gold_sets: &[Vec<String>],
    label_set: &[String],
) -> Result<EvalResult> {
    if preds.len() != gold_sets.len() || ids.len() != preds.len() {
        return Err(Error::shape(
            format!("{} predictions", gold_sets.len()),
            format!("{} predictions and {} ids", preds.len(), ids.len()),
        ));
    }
    if preds.is_empty() {
        return Err(Error::Empty("predictions".into()));
    }
    if gold_sets.iter().any(Vec::is_empty) {
        return Err(Error::Invalid("instance without gold label".into()));
    }
    let labels = extend_labels(
        label_set,
        gold_sets.iter().flatten().chain(preds.iter()).cloned(),
    );
    let index = |l: &str| {
        labels
            .iter()
            .position(|x| x == l)
            .expect("extended label set")
    };
    let mut confusion = vec![vec![0; labels.len()]; labels.len()];
    let mut correct = 0;
    let mut predictions = Vec::with_capacity(preds.len());
    for ((id, pred), golds) in ids.iter().zip(preds).zip(gold_sets) {
        let hit = golds.iter().any(|g| g == pred);
        let gold = if hit { pred } else { &golds[0] };
        correct += usize::from(hit);
        confusion[index(gold)][index(pred)] += 1;
        predictions.push(Prediction {
            id: id.clone(),
            gold: gold.clone(),
            pred: pred.clone(),
        });
    }
    Ok(EvalResult {
        n: preds.len(),
        correct,
        accuracy: correct as f64 / preds.len() as f64,
        label_set: labels,
        confusion,
        predictions,
    })
}

impl EvalResult {
    /// Merges results over disjoint instance sets (e.g. CV folds).
    pub fn merge(parts: &[EvalResult]) -> Result<EvalResult> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Empty("results".into()))?;
        let mut ids = Vec::new();
        let mut preds = Vec::new();
        let mut golds = Vec::new();
        let mut labels = first.label_set.clone();
        for p in parts {
            labels = extend_labels(&labels, p.label_set.iter().cloned());
            for pr in &p.predictions {
                ids.push(pr.id.clone());
                preds.push(pr.pred.clone());
                golds.push(pr.gold.clone());
            }
        }
        evaluate_ids(&ids, &preds, &golds, &labels)
    }

    pub fn is_correct(&self) -> Vec<bool> {
        self.predictions.iter().map(|p| p.gold == p.pred).collect()
    }
}

/// `Σ correct / Σ n` over per-classifier results.
pub fn micro_average(results: &[EvalResult]) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::Empty("results".into()));
    }
    let (correct, n) = results
        .iter()
        .fold((0, 0), |(c, n), r| (c + r.correct, n + r.n));
    Ok(correct as f64 / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedComparison {
    /// A correct, B wrong.
    pub b: usize,
    /// A wrong, B correct.
    pub c: usize,
    pub midp: f64,
}

/// Paired mid-p McNemar test between two prediction lists.
pub fn mcnemar_midp<S: AsRef<str>>(
    a_preds: &[S],
    b_preds: &[S],
    golds: &[S],
) -> Result<PairedComparison> {
    if a_preds.len() != golds.len() || b_preds.len() != golds.len() {
        return Err(Error::shape(
            format!("{} paired predictions", golds.len()),
            format!("{} and {}", a_preds.len(), b_preds.len()),
        ));
    }
    let (mut b, mut c) = (0, 0);
    for ((a, bp), g) in a_preds.iter().zip(b_preds).zip(golds) {
        let a_ok = a.as_ref() == g.as_ref();
        let b_ok = bp.as_ref() == g.as_ref();
        match (a_ok, b_ok) {
            (true, false) => b += 1,
            (false, true) => c += 1,
            _ => {}
        }
    }
    Ok(PairedComparison {
        b,
        c,
        midp: midp_value(b, c),
    })
}

/// Same test from two correctness vectors over the same instances.
pub fn mcnemar_from_correctness(
    a_correct: &[bool],
    b_correct: &[bool],
) -> Result<PairedComparison> {
    if a_correct.len() != b_correct.len() {
        return Err(Error::shape(a_correct.len(), b_correct.len()));
    }
    let b = a_correct
        .iter()
        .zip(b_correct)
        .filter(|(&a, &b)| a && !b)
        .count();
    let c = a_correct
        .iter()
        .zip(b_correct)
        .filter(|(&a, &b)| !a && b)
        .count();
    Ok(PairedComparison {
        b,
        c,
        midp: midp_value(b, c),
    })
}

/// Up to this many discordant pairs the tail is summed in exact integers.
const EXACT_LIMIT: usize = 120;

/// `2·P(X ≥ k) − P(X = k)` for `X ~ Bin(b + c, ½)`, `k = max(b, c)`,
/// clamped to `[0, 1]`; 1 when there are no discordant pairs.
pub fn midp_value(b: usize, c: usize) -> f64 {
    let n = b + c;
    if n == 0 {
        return 1.0;
    }
    let k = b.max(c);
    let p = if n <= EXACT_LIMIT {
        midp_exact(n, k)
    } else {
        midp_log(n, k)
    };
    p.clamp(0.0, 1.0)
}

/// Integer binomial coefficients, one rounding at the final division.
fn midp_exact(n: usize, k: usize) -> f64 {
    let mut coef: u128 = 1;
    let mut tail: u128 = 0;
    let mut at_k: u128 = 0;
    for j in 0..=n {
        if j > 0 {
            coef = coef * (n - j + 1) as u128 / j as u128;
        }
        if j >= k {
            tail += coef;
        }
        if j == k {
            at_k = coef;
        }
    }
    let numerator = 2 * tail - at_k;
    numerator as f64 / 2f64.powi(n as i32)
}

/// Log-space summation for large `n`.
fn midp_log(n: usize, k: usize) -> f64 {
    let mut ln_fact = vec![0.0f64; n + 1];
    for i in 1..=n {
        ln_fact[i] = ln_fact[i - 1] + (i as f64).ln();
    }
    let ln_half_n = -(n as f64) * std::f64::consts::LN_2;
    let ln_pmf = |j: usize| ln_fact[n] - ln_fact[j] - ln_fact[n - j] + ln_half_n;
    let terms: Vec<f64> = (k..=n).map(ln_pmf).collect();
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tail = max.exp() * terms.iter().map(|t| (t - max).exp()).sum::<f64>();
    2.0 * tail - ln_pmf(k).exp()
}

/// One row of a significance table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceRow {
    pub pair: String,
    pub b: usize,
    pub c: usize,
    pub midp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerbSummary {
    pub accuracy: f64,
    pub n: usize,
    pub label_set: Vec<String>,
    pub confusion: Vec<Vec<usize>>,
}

impl From<&EvalResult> for VerbSummary {
    fn from(r: &EvalResult) -> Self {
        VerbSummary {
            accuracy: r.accuracy,
            n: r.n,
            label_set: r.label_set.clone(),
            confusion: r.confusion.clone(),
        }
    }
}

/// Results report: per-classifier accuracy, micro average, significance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsReport {
    pub per_verb: BTreeMap<String, VerbSummary>,
    pub micro: f64,
    pub significance: Vec<SignificanceRow>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub baselines: BTreeMap<String, BTreeMap<String, VerbSummary>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl ResultsReport {
    /// Plain-text table: one row per classifier, one column per system.
    pub fn to_text(&self, model_name: &str) -> String {
        let systems: Vec<&String> = self.baselines.keys().collect();
        let mut out = String::new();
        out.push_str(&format!("{:<16}{:>8}", "verb", "n"));
        for s in &systems {
            out.push_str(&format!("{:>12}", s));
        }
        out.push_str(&format!("{:>12}\n", model_name));
        for (verb, summary) in &self.per_verb {
            out.push_str(&format!("{:<16}{:>8}", verb, summary.n));
            for s in &systems {
                let acc = self.baselines[*s]
                    .get(verb)
                    .map_or(f64::NAN, |v| v.accuracy);
                out.push_str(&format!("{:>12.2}", 100.0 * acc));
            }
            out.push_str(&format!("{:>12.2}\n", 100.0 * summary.accuracy));
        }
        out.push_str(&format!("{:<16}{:>8}", "micro", ""));
        for s in &systems {
            let rs = &self.baselines[*s];
            let (c, n) = rs.values().fold((0.0, 0usize), |(c, n), v| {
                (c + v.accuracy * v.n as f64, n + v.n)
            });
            out.push_str(&format!("{:>12.2}", 100.0 * c / n.max(1) as f64));
        }
        out.push_str(&format!("{:>12.2}\n", 100.0 * self.micro));
        if !self.significance.is_empty() {
            out.push_str("\nmid-p McNemar\n");
            for row in &self.significance {
                let mark = if row.midp < 0.05 { " *" } else { "" };
                out.push_str(&format!(
                    "{:<40} b={:<5} c={:<5} p={:.4}{}\n",
                    row.pair, row.b, row.c, row.midp, mark
                ));
            }
        }
        for note in &self.notes {
            out.push_str(&format!("\nnote: {note}\n"));
        }
        out
    }
}
