//! Feature-detector analysis for a trained CNN.
//!
//! For each filter, training sentences are ranked by the filter's 1-max pooled
//! value; the n-gram under the pooling argmax of each top sentence is
//! extracted, summed into an n-gram vector, and its position relative to the
//! target word is summarized.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cnn::{forward_with_mask, Cnn, FilterId, ForwardTrace};
use crate::dataset::Dataset;
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};

/// Number of top sentences kept per filter by default.
pub const DEFAULT_TOP_K: usize = 15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterHit {
    pub filter: FilterId,
    pub instance_id: String,
    pub pooled_value: f64,
    /// Inclusive token range `[l, r]`, clipped to real tokens.
    pub span: (usize, usize),
    pub ngram: Vec<String>,
    pub label: String,
}

/// Dropout-free traces for every instance, in dataset order.
pub fn trace_all(
    model: &Cnn,
    data: &Dataset,
    table: &mut EmbeddingTable,
) -> Result<Vec<ForwardTrace>> {
    table.warm(data.instances.iter().map(|i| &i.tokens));
    let table: &EmbeddingTable = table;
    data.instances
        .par_iter()
        .map(|inst| {
            let sm = table.embed_existing(&inst.tokens)?;
            forward_with_mask(&model.params, &model.config, &sm, None)
        })
        .collect()
}

fn hits_from_traces(
    model: &Cnn,
    data: &Dataset,
    traces: &[ForwardTrace],
    filter: FilterId,
    k: usize,
) -> Result<Vec<FilterHit>> {
    let flat = model.config.flat_index(filter)?;
    let n = filter.region_size;
    let mut order: Vec<usize> = (0..data.len()).collect();
    // Stable sort: equal pooled values stay in instance order.
    order.sort_by(|&a, &b| traces[b].pooled[flat].total_cmp(&traces[a].pooled[flat]));
    let mut hits = Vec::with_capacity(k.min(order.len()));
    for i in order {
        if hits.len() == k {
            break;
        }
        let inst = &data.instances[i];
        let len = inst.tokens.len();
        let start = traces[i].argmax_pos[flat];
        if start >= len {
            continue;
        }
        let end = (start + n - 1).min(len - 1);
        hits.push(FilterHit {
            filter,
            instance_id: inst.id.clone(),
            pooled_value: traces[i].pooled[flat],
            span: (start, end),
            ngram: inst.tokens[start..=end].to_vec(),
            label: inst.label.clone(),
        });
    }
    Ok(hits)
}

/// Top `k` sentences of `data` for one filter, by descending pooled value.
/// Hits whose window lies entirely in the padding are skipped.
pub fn filter_top_sentences(
    model: &Cnn,
    data: &Dataset,
    table: &mut EmbeddingTable,
    filter: FilterId,
    k: usize,
) -> Result<Vec<FilterHit>> {
    model.config.flat_index(filter)?;
    let traces = trace_all(model, data, table)?;
    hits_from_traces(model, data, &traces, filter, k)
}

/// Top hits for every filter, sharing one forward pass per sentence.
pub fn all_filter_hits(
    model: &Cnn,
    data: &Dataset,
    table: &mut EmbeddingTable,
    k: usize,
) -> Result<BTreeMap<FilterId, Vec<FilterHit>>> {
    let traces = trace_all(model, data, table)?;
    model
        .config
        .filter_ids()
        .into_iter()
        .map(|f| Ok((f, hits_from_traces(model, data, &traces, f, k)?)))
        .collect()
}

/// Sum of the embedding rows of the n-gram's tokens.
pub fn ngram_vector(table: &mut EmbeddingTable, ngram: &[String]) -> Result<Vec<f64>> {
    if ngram.is_empty() {
        return Err(Error::Empty("ngram".into()));
    }
    let mut v = vec![0.0; table.dim()];
    for t in ngram {
        let row = table.resolve(t);
        for (a, x) in v.iter_mut().zip(table.row(row)) {
            *a += x;
        }
    }
    Ok(v)
}

/// Where a span lies relative to the target position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    Contains,
    /// Span ends `d` tokens before the target.
    Left(usize),
    /// Span starts `d` tokens after the target.
    Right(usize),
}

pub fn placement(span: (usize, usize), target: usize) -> Placement {
    let (l, r) = span;
    if r < target {
        Placement::Left(target - r)
    } else if l > target {
        Placement::Right(l - target)
    } else {
        Placement::Contains
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DistanceSummary {
    pub count: usize,
    pub contains: usize,
    pub left: usize,
    pub right: usize,
    /// Spans whose first token is the target.
    pub starts_with_target: usize,
    /// Mean token distance, 0 for containing spans.
    pub mean_abs_distance: f64,
    pub mean_left_distance: f64,
    pub mean_right_distance: f64,
    pub contains_fraction: f64,
    pub starts_with_target_fraction: f64,
}

#[derive(Default)]
struct Accumulator {
    count: usize,
    contains: usize,
    left: usize,
    right: usize,
    starts: usize,
    left_sum: usize,
    right_sum: usize,
}

impl Accumulator {
    fn add(&mut self, p: Placement, starts: bool) {
        self.count += 1;
        self.starts += usize::from(starts);
        match p {
            Placement::Contains => self.contains += 1,
            Placement::Left(d) => {
                self.left += 1;
                self.left_sum += d;
            }
            Placement::Right(d) => {
                self.right += 1;
                self.right_sum += d;
            }
        }
    }

    fn finish(&self) -> DistanceSummary {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        DistanceSummary {
            count: self.count,
            contains: self.contains,
            left: self.left,
            right: self.right,
            starts_with_target: self.starts,
            mean_abs_distance: ratio(self.left_sum + self.right_sum, self.count),
            mean_left_distance: ratio(self.left_sum, self.left),
            mean_right_distance: ratio(self.right_sum, self.right),
            contains_fraction: ratio(self.contains, self.count),
            starts_with_target_fraction: ratio(self.starts, self.count),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DistanceStats {
    pub overall: DistanceSummary,
    pub per_label: BTreeMap<String, DistanceSummary>,
    pub per_filter: BTreeMap<String, DistanceSummary>,
}

/// Distance of each hit's span from its instance's target word, aggregated
/// overall, per gold label and per filter.
pub fn distance_stats(hits: &[FilterHit], data: &Dataset) -> Result<DistanceStats> {
    let by_id: BTreeMap<&str, usize> = data
        .instances
        .iter()
        .map(|i| (i.id.as_str(), i.target_index))
        .collect();
    let mut overall = Accumulator::default();
    let mut per_label: BTreeMap<String, Accumulator> = BTreeMap::new();
    let mut per_filter: BTreeMap<FilterId, Accumulator> = BTreeMap::new();
    for hit in hits {
        let &target = by_id.get(hit.instance_id.as_str()).ok_or_else(|| {
            Error::Invalid(format!(
                "hit references unknown instance `{}`",
                hit.instance_id
            ))
        })?;
        let p = placement(hit.span, target);
        let starts = hit.span.0 == target;
        overall.add(p, starts);
        per_label
            .entry(hit.label.clone())
            .or_default()
            .add(p, starts);
        per_filter.entry(hit.filter).or_default().add(p, starts);
    }
    Ok(DistanceStats {
        overall: overall.finish(),
        per_label: per_label
            .iter()
            .map(|(k, v)| (k.clone(), v.finish()))
            .collect(),
        per_filter: per_filter
            .iter()
            .map(|(k, v)| (k.to_string(), v.finish()))
            .collect(),
    })
}

/// Everything produced by one analysis run.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMapReport {
    pub dim: usize,
    pub hits: BTreeMap<FilterId, Vec<FilterHit>>,
    /// One n-gram vector per hit, in `hits` iteration order.
    pub vectors: Vec<Vec<f64>>,
    pub stats: DistanceStats,
}

/// Ranks, extracts n-grams and vectors, and computes statistics for every
/// filter of `model` over `data`.
pub fn analyze(
    model: &Cnn,
    data: &Dataset,
    table: &mut EmbeddingTable,
    k: usize,
) -> Result<FeatureMapReport> {
    let hits = all_filter_hits(model, data, table, k)?;
    let flat: Vec<FilterHit> = hits.values().flatten().cloned().collect();
    let vectors = flat
        .iter()
        .map(|h| ngram_vector(table, &h.ngram))
        .collect::<Result<_>>()?;
    let stats = distance_stats(&flat, data)?;
    Ok(FeatureMapReport {
        dim: table.dim(),
        hits,
        vectors,
        stats,
    })
}

/// Writes `vectors.tsv`, `report.txt` and `stats.json` into `dir`.
pub fn export_report(report: &FeatureMapReport, data: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, contents) in render_report(report, data)? {
        let path = dir.join(name);
        fs::write(&path, contents).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// The export files as `(file name, contents)` pairs.
pub fn render_report(
    report: &FeatureMapReport,
    data: &Dataset,
) -> Result<Vec<(&'static str, String)>> {
    let mut files = Vec::new();
    let mut write = |name: &'static str, contents: String| -> Result<()> {
        files.push((name, contents));
        Ok(())
    };

    let mut tsv = String::from("filter\tlabel\tngram");
    for i in 1..=report.dim {
        tsv.push_str(&format!("\tv{i}"));
    }
    tsv.push('\n');
    for (hit, v) in report.hits.values().flatten().zip(&report.vectors) {
        tsv.push_str(&format!(
            "{}\t{}\t{}",
            hit.filter,
            hit.label,
            hit.ngram.join(" ")
        ));
        for x in v {
            tsv.push_str(&format!("\t{x}"));
        }
        tsv.push('\n');
    }
    write("vectors.tsv", tsv)?;

    let by_id: BTreeMap<&str, &crate::dataset::Instance> =
        data.instances.iter().map(|i| (i.id.as_str(), i)).collect();
    let mut text = String::new();
    for (filter, hits) in &report.hits {
        text.push_str(&format!("filter {filter}\n"));
        for hit in hits {
            let context = by_id.get(hit.instance_id.as_str()).map_or_else(
                || hit.ngram.join(" "),
                |inst| bracket(&inst.tokens, hit.span),
            );
            text.push_str(&format!(
                "  {:.6}\t{}\t{}\t{}\n",
                hit.pooled_value, hit.label, hit.instance_id, context
            ));
        }
        text.push('\n');
    }
    write("report.txt", text)?;

    write(
        "stats.json",
        serde_json::to_string_pretty(&report.stats)? + "\n",
    )?;
    Ok(files)
}

/// The sentence with the span enclosed in square brackets.
pub fn bracket(tokens: &[String], span: (usize, usize)) -> String {
    let mut out = Vec::with_capacity(tokens.len() + 2);
    for (i, t) in tokens.iter().enumerate() {
        if i == span.0 {
            out.push(format!("[{t}"));
        } else {
            out.push(t.clone());
        }
        if i == span.1 {
            let last = out.pop().expect("just pushed");
            out.push(format!("{last}]"));
        }
    }
    out.join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Instance;

    fn data() -> Dataset {
        let mk = |id: &str, s: &str, label: &str, t: usize| {
            Instance::new(id, s.split(' ').map(String::from).collect(), label, t)
        };
        Dataset::new(vec![
            mk("a", "x y can z w v u", "ep", 2),
            mk("b", "x y z w can v u", "de", 4),
        ])
    }

    #[test]
    fn placement_examples() {
        assert_eq!(placement((0, 2), 1), Placement::Contains);
        assert_eq!(placement((0, 2), 5), Placement::Left(3));
        assert_eq!(placement((6, 8), 5), Placement::Right(1));
    }

    #[test]
    fn stats_aggregate() {
        let d = data();
        let f = FilterId {
            region_size: 2,
            map: 0,
        };
        let hit = |id: &str, span: (usize, usize), label: &str| FilterHit {
            filter: f,
            instance_id: id.into(),
            pooled_value: 1.0,
            span,
            ngram: vec![],
            label: label.into(),
        };
        let hits = vec![
            hit("a", (2, 3), "ep"),
            hit("b", (0, 1), "de"),
            hit("b", (5, 6), "de"),
        ];
        let s = distance_stats(&hits, &d).unwrap();
        assert_eq!(s.overall.count, 3);
        assert_eq!(
            (s.overall.contains, s.overall.left, s.overall.right),
            (1, 1, 1)
        );
        assert_eq!(s.overall.starts_with_target, 1);
        assert_eq!(s.overall.mean_left_distance, 3.0);
        assert_eq!(s.overall.mean_right_distance, 1.0);
        assert!((s.overall.mean_abs_distance - 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.per_label["de"].count, 2);
        assert_eq!(s.per_filter["2:0"].count, 3);

        let dangling = vec![hit("zzz", (0, 1), "ep")];
        assert!(distance_stats(&dangling, &d).is_err());
    }

    #[test]
    fn ngram_vectors() {
        let mut t = EmbeddingTable::from_vectors(
            2,
            vec![("a".into(), vec![1.0, 2.0]), ("b".into(), vec![0.5, -1.0])],
            0,
        )
        .unwrap();
        let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        assert_eq!(ngram_vector(&mut t, &s(&["a"])).unwrap(), vec![1.0, 2.0]);
        assert_eq!(
            ngram_vector(&mut t, &s(&["a", "b"])).unwrap(),
            vec![1.5, 1.0]
        );
        assert_eq!(
            ngram_vector(&mut t, &s(&["b", "a"])).unwrap(),
            ngram_vector(&mut t, &s(&["a", "b"])).unwrap()
        );
        assert!(ngram_vector(&mut t, &[]).is_err());
    }

    #[test]
    fn bracketing() {
        let toks: Vec<String> = "a b c d".split(' ').map(String::from).collect();
        assert_eq!(bracket(&toks, (1, 2)), "a [b c] d");
        assert_eq!(bracket(&toks, (3, 3)), "a b c [d]");
    }
}
