//! Micro precision/recall/F1 with intra/inter splits, sentence-distance
//! breakdown and the ablation sweep harness.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::corpus::Document;
use crate::error::{Error, Result};

/// One scored entity pair. Classes are indices; `none_class` marks no relation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairPrediction {
    pub doc_id: String,
    pub head: String,
    pub tail: String,
    pub predicted: usize,
    pub gold: usize,
    pub intra: bool,
    pub distance: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Counts {
    fn add(&mut self, predicted: usize, gold: usize, none: usize) {
        if predicted != none && predicted == gold {
            self.tp += 1;
            return;
        }
        if predicted != none {
            self.fp += 1;
        }
        if gold != none {
            self.fn_ += 1;
        }
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r > 0.0 {
            2.0 * p * r / (p + r)
        } else {
            0.0
        }
    }

    pub fn summary(&self) -> Prf {
        Prf {
            precision: self.precision(),
            recall: self.recall(),
            f1: self.f1(),
            counts: *self,
        }
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    #[serde(flatten)]
    pub counts: Counts,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub overall: Prf,
    pub intra: Prf,
    pub inter: Prf,
}

impl Metrics {
    pub fn table(&self) -> String {
        let mut s = String::from("split\tP\tR\tF1\tTP\tFP\tFN\n");
        for (name, m) in [("overall", &self.overall), ("intra", &self.intra), ("inter", &self.inter)] {
            let _ = writeln!(
                s,
                "{name}\t{:.4}\t{:.4}\t{:.4}\t{}\t{}\t{}",
                m.precision, m.recall, m.f1, m.counts.tp, m.counts.fp, m.counts.fn_
            );
        }
        s
    }
}

/// Micro scores over the relation classes. A (doc, head, tail) triple seen
/// twice is an error.
pub fn score(predictions: &[PairPrediction], none_class: usize) -> Result<Metrics> {
    let mut seen = HashSet::new();
    let (mut all, mut intra, mut inter) = (Counts::default(), Counts::default(), Counts::default());
    for p in predictions {
        if !seen.insert((&p.doc_id, &p.head, &p.tail)) {
            return Err(Error::DuplicatePrediction(
                p.doc_id.clone(),
                p.head.clone(),
                p.tail.clone(),
            ));
        }
        all.add(p.predicted, p.gold, none_class);
        if p.intra {
            intra.add(p.predicted, p.gold, none_class);
        } else {
            inter.add(p.predicted, p.gold, none_class);
        }
    }
    Ok(Metrics {
        overall: all.summary(),
        intra: intra.summary(),
        inter: inter.summary(),
    })
}

/// Whether some sentence mentions both entities, and the smallest sentence
/// distance between a mention of each.
pub fn pair_locality(doc: &Document, head: usize, tail: usize) -> (bool, usize) {
    let hs = doc.entity_sentences(head);
    let ts = doc.entity_sentences(tail);
    let distance = hs
        .iter()
        .flat_map(|a| ts.iter().map(move |b| a.abs_diff(*b)))
        .min()
        .unwrap_or(usize::MAX);
    (distance == 0, distance)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceRow {
    pub distance: usize,
    pub pairs: usize,
    #[serde(flatten)]
    pub scores: Prf,
}

/// Micro F1 per sentence distance over the inter-sentence predictions.
pub fn distance_breakdown(predictions: &[PairPrediction], none_class: usize) -> Vec<DistanceRow> {
    let mut groups: BTreeMap<usize, (usize, Counts)> = BTreeMap::new();
    for p in predictions.iter().filter(|p| !p.intra) {
        let g = groups.entry(p.distance).or_default();
        g.0 += 1;
        g.1.add(p.predicted, p.gold, none_class);
    }
    groups
        .into_iter()
        .map(|(distance, (pairs, c))| DistanceRow {
            distance,
            pairs,
            scores: c.summary(),
        })
        .collect()
}

/// One configuration of a sweep: overrides applied to the base config.
#[derive(Clone, Debug, PartialEq)]
pub struct GridPoint {
    pub label: String,
    pub overrides: Vec<(String, String)>,
}

impl GridPoint {
    /// Space-separated `key=value` overrides; the line itself is the label.
    pub fn parse(line: &str) -> Result<Self> {
        let mut overrides = Vec::new();
        for part in line.split_whitespace() {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("grid entry `{part}` is not key=value")))?;
            overrides.push((k.to_string(), v.to_string()));
        }
        Ok(Self {
            label: line.split_whitespace().collect::<Vec<_>>().join(" "),
            overrides,
        })
    }
}

/// Grid file: one point per line, `#` comments and blank lines skipped.
pub fn parse_grid(text: &str) -> Result<Vec<GridPoint>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(GridPoint::parse)
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub label: String,
    pub metrics: Option<Metrics>,
    pub error: Option<String>,
}

/// Runs every grid point with the base seed. Invalid configurations and
/// failed runs are recorded in their row.
pub fn ablation_sweep<F>(base: &TrainConfig, grid: &[GridPoint], mut run: F) -> Vec<SweepRow>
where
    F: FnMut(&TrainConfig) -> Result<Metrics>,
{
    grid.iter()
        .map(|point| {
            let outcome = (|| {
                let mut cfg = base.clone();
                for (k, v) in &point.overrides {
                    if k == "seed" {
                        return Err(Error::Config("a sweep keeps the base seed".into()));
                    }
                    cfg.set(k, v)?;
                }
                cfg.validate()?;
                run(&cfg)
            })();
            match outcome {
                Ok(m) => SweepRow {
                    label: point.label.clone(),
                    metrics: Some(m),
                    error: None,
                },
                Err(e) => SweepRow {
                    label: point.label.clone(),
                    metrics: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect()
}

/// Tab-separated summary, one row per sweep point.
pub fn sweep_tsv(rows: &[SweepRow]) -> String {
    let mut s = String::from("label\tP\tR\tF1\tintra_P\tintra_R\tintra_F1\tinter_P\tinter_R\tinter_F1\terror\n");
    for r in rows {
        s.push_str(&r.label);
        match &r.metrics {
            Some(m) => {
                for p in [&m.overall, &m.intra, &m.inter] {
                    let _ = write!(s, "\t{:.4}\t{:.4}\t{:.4}", p.precision, p.recall, p.f1);
                }
                s.push_str("\t\n");
            }
            None => {
                s.push_str(&"\t".repeat(9));
                let _ = writeln!(s, "\t{}", r.error.as_deref().unwrap_or(""));
            }
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::SemanticType;
    use crate::synthetic::doc_from_spec;
    use proptest::prelude::*;

    fn pred(i: usize, predicted: usize, gold: usize, intra: bool, distance: usize) -> PairPrediction {
        PairPrediction {
            doc_id: format!("d{i}"),
            head: "h".into(),
            tail: "t".into(),
            predicted,
            gold,
            intra,
            distance,
        }
    }

    #[test]
    fn perfect_predictions() {
        let p = vec![pred(0, 0, 0, true, 0), pred(1, 1, 1, false, 2)];
        let m = score(&p, 1).unwrap();
        assert_eq!((m.overall.precision, m.overall.recall, m.overall.f1), (1.0, 1.0, 1.0));
        assert_eq!(m.inter.f1, 0.0);
    }

    #[test]
    fn hand_counted_example() {
        // gold positives 0,1,2; predicted positives 2,3
        let p = vec![
            pred(0, 1, 0, true, 0),
            pred(1, 1, 0, true, 0),
            pred(2, 0, 0, true, 0),
            pred(3, 0, 1, true, 0),
        ];
        let m = score(&p, 1).unwrap();
        assert!((m.overall.precision - 0.5).abs() < 1e-12);
        assert!((m.overall.recall - 1.0 / 3.0).abs() < 1e-12);
        assert!((m.overall.f1 - 0.4).abs() < 1e-12);
    }

    #[test]
    fn wrong_positive_class_counts_twice() {
        let m = score(&[pred(0, 0, 1, true, 0)], 2).unwrap();
        assert_eq!(m.overall.counts, Counts { tp: 0, fp: 1, fn_: 1 });
    }

    #[test]
    fn duplicates_rejected() {
        let p = vec![pred(0, 0, 0, true, 0), pred(0, 1, 0, true, 0)];
        assert!(matches!(score(&p, 1), Err(Error::DuplicatePrediction(..))));
    }

    #[test]
    fn locality_examples() {
        let t = [SemanticType::Chemical, SemanticType::Disease];
        let d = doc_from_spec(&[2; 4], &[(0, 0, 1, 0), (0, 1, 2, 1)], &t);
        assert_eq!(pair_locality(&d, 0, 1), (true, 0));
        let d = doc_from_spec(&[2; 4], &[(0, 0, 1, 0), (3, 1, 2, 1)], &t);
        assert_eq!(pair_locality(&d, 0, 1), (false, 3));
        let d = doc_from_spec(
            &[2; 6],
            &[(0, 0, 1, 0), (2, 0, 1, 0), (2, 1, 2, 1), (5, 1, 2, 1)],
            &t,
        );
        assert_eq!(pair_locality(&d, 0, 1), (true, 0));
        assert_eq!(pair_locality(&d, 1, 0), (true, 0));
    }

    #[test]
    fn breakdown_by_hand() {
        assert!(distance_breakdown(&[], 1).is_empty());
        let p = vec![
            pred(0, 0, 0, false, 1),
            pred(1, 0, 0, false, 1),
            pred(2, 1, 0, false, 2),
            pred(3, 0, 0, true, 0),
        ];
        let rows = distance_breakdown(&p, 1);
        assert_eq!(rows.len(), 2);
        assert_eq!((rows[0].distance, rows[0].pairs, rows[0].scores.f1), (1, 2, 1.0));
        assert_eq!((rows[1].distance, rows[1].scores.f1), (2, 0.0));
        assert_eq!(rows[1].scores.counts.fn_, 1);
    }

    #[test]
    fn sweep_keeps_seed_and_records_failures() {
        let base = TrainConfig::cdr();
        let grid = parse_grid(
            "inference_iterations=1\ninference_iterations=2\n# skipped\nvariant=NoInf inference_iterations=3\nseed=4\n",
        )
        .unwrap();
        let mut seen = Vec::new();
        let rows = ablation_sweep(&base, &grid, |cfg| {
            seen.push((cfg.seed, cfg.inference_iterations));
            score(&[], 1)
        });
        assert_eq!(rows.len(), 4);
        assert_eq!(seen, vec![(0, 1), (0, 2)]);
        assert!(rows[2].error.is_some() && rows[3].error.is_some());
        let tsv = sweep_tsv(&rows);
        assert_eq!(tsv.lines().count(), 5);
        assert!(tsv.lines().all(|l| l.split('\t').count() == 11));
    }

    proptest! {
        #[test]
        fn counts_consistent_and_permutation_invariant(
            raw in proptest::collection::vec((0usize..3, 0usize..3, any::<bool>()), 0..40),
            rot in 0usize..40,
        ) {
            let preds: Vec<PairPrediction> = raw
                .iter()
                .enumerate()
                .map(|(i, &(p, g, intra))| pred(i, p, g, intra, if intra { 0 } else { 1 }))
                .collect();
            let m = score(&preds, 2).unwrap();
            let gold_pos = preds.iter().filter(|p| p.gold != 2).count();
            prop_assert_eq!(m.overall.counts.tp + m.overall.counts.fn_, gold_pos);
            prop_assert_eq!(m.overall.counts.tp, m.intra.counts.tp + m.inter.counts.tp);
            let mut rotated = preds.clone();
            if !rotated.is_empty() {
                let k = rot % rotated.len();
                rotated.rotate_left(k);
            }
            prop_assert_eq!(score(&rotated, 2).unwrap(), m);
        }
    }
}
