//! Translation evaluation: per-token correct ranks plus the green/yellow/red
//! summary. Green means the truth ranked first, yellow within the top k, red
//! outside; supervised tokens are flagged and excluded from the accuracy.

use std::collections::{BTreeMap, BTreeSet};

use crl_core::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub token: String,
    pub predictions: Vec<String>,
    /// 1-based rank of the true target among the predictions, when present.
    pub correct_rank: Option<usize>,
    pub supervised: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub k: usize,
    pub evaluated: usize,
    pub green: usize,
    pub yellow: usize,
    pub red: usize,
    pub top1: f64,
    pub top3: f64,
}

/// Scores ranked predictions against the gold alignment. Every evaluated
/// token must have a truth entry; tokens in `supervised` are flagged and do
/// not count toward the rates.
pub fn eval_translation(
    predictions: &[(String, Vec<String>)],
    truth: &BTreeMap<String, String>,
    supervised: &BTreeSet<String>,
    k: usize,
) -> Result<EvalReport> {
    let mut rows = Vec::with_capacity(predictions.len());
    let (mut green, mut yellow, mut red, mut evaluated) = (0usize, 0usize, 0usize, 0usize);
    for (token, preds) in predictions {
        let target = truth
            .get(token)
            .ok_or_else(|| Error::MissingTruth(token.clone()))?;
        let correct_rank = preds.iter().position(|p| p == target).map(|i| i + 1);
        let is_sup = supervised.contains(token);
        if !is_sup {
            evaluated += 1;
            match correct_rank {
                Some(1) => green += 1,
                Some(r) if r <= k => yellow += 1,
                _ => red += 1,
            }
        }
        rows.push(EvalRow {
            token: token.clone(),
            predictions: preds.clone(),
            correct_rank,
            supervised: is_sup,
        });
    }
    let denom = evaluated.max(1) as f64;
    Ok(EvalReport {
        rows,
        k,
        evaluated,
        green,
        yellow,
        red,
        top1: green as f64 / denom,
        top3: (green + yellow) as f64 / denom,
    })
}

impl EvalReport {
    /// CSV rows `source_token,rank1..rankK,correct_rank` plus a summary line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("source_token");
        for i in 1..=self.k {
            out.push_str(&format!(",rank{i}"));
        }
        out.push_str(",correct_rank\n");
        for row in &self.rows {
            out.push_str(&row.token);
            for i in 0..self.k {
                out.push(',');
                if let Some(p) = row.predictions.get(i) {
                    out.push_str(p);
                }
            }
            out.push(',');
            if row.supervised {
                out.push_str("supervised");
            } else {
                match row.correct_rank {
                    Some(r) if r <= self.k => out.push_str(&r.to_string()),
                    _ => out.push_str(&format!(">{}", self.k)),
                }
            }
            out.push('\n');
        }
        out.push_str(&format!(
            "summary,evaluated={},green={},yellow={},red={},top1={:.6},top{}={:.6}\n",
            self.evaluated, self.green, self.yellow, self.red, self.top1, self.k, self.top3
        ));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn truth_of(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs
            .iter()
            .map(|&(a, b)| (a.to_string(), b.to_string()))
            .collect()
    }

    fn preds_of(rows: &[(&str, &[&str])]) -> Vec<(String, Vec<String>)> {
        rows.iter()
            .map(|&(t, ps)| (t.to_string(), ps.iter().map(|s| s.to_string()).collect()))
            .collect()
    }

    #[test]
    fn all_rank_one_is_all_green() {
        let preds = preds_of(&[("a", &["x", "y", "z"]), ("b", &["y", "x", "z"])]);
        let truth = truth_of(&[("a", "x"), ("b", "y")]);
        let rep = eval_translation(&preds, &truth, &BTreeSet::new(), 3).unwrap();
        assert_eq!((rep.green, rep.yellow, rep.red), (2, 0, 0));
        assert_eq!(rep.top1, 1.0);
        assert_eq!(rep.top3, 1.0);
    }

    #[test]
    fn rank_two_is_yellow() {
        let preds = preds_of(&[("a", &["y", "x", "z"]), ("b", &["x", "y", "z"])]);
        let truth = truth_of(&[("a", "x"), ("b", "y")]);
        let rep = eval_translation(&preds, &truth, &BTreeSet::new(), 3).unwrap();
        assert_eq!((rep.green, rep.yellow, rep.red), (0, 2, 0));
        assert_eq!(rep.top1, 0.0);
        assert_eq!(rep.top3, 1.0);
    }

    #[test]
    fn counts_partition_the_evaluated_set() {
        let preds = preds_of(&[
            ("a", &["x", "y", "z"]),
            ("b", &["z", "y", "x"]),
            ("c", &["p", "q", "r"]),
            ("s", &["t", "u", "v"]),
        ]);
        let truth = truth_of(&[("a", "x"), ("b", "y"), ("c", "missing"), ("s", "t")]);
        let supervised: BTreeSet<String> = ["s".to_string()].into();
        let rep = eval_translation(&preds, &truth, &supervised, 3).unwrap();
        assert_eq!(rep.evaluated, 3);
        assert_eq!(rep.green + rep.yellow + rep.red, rep.evaluated);
        assert!(rep.top1 <= rep.top3);
        assert!(rep.rows.iter().any(|r| r.supervised));
    }

    #[test]
    fn missing_truth_errors() {
        let preds = preds_of(&[("a", &["x"])]);
        let err = eval_translation(&preds, &BTreeMap::new(), &BTreeSet::new(), 3).unwrap_err();
        assert_eq!(err, Error::MissingTruth("a".into()));
    }

    #[test]
    fn csv_shape() {
        let preds = preds_of(&[("a", &["x", "y", "z"]), ("s", &["x", "y", "z"])]);
        let truth = truth_of(&[("a", "q"), ("s", "x")]);
        let supervised: BTreeSet<String> = ["s".to_string()].into();
        let rep = eval_translation(&preds, &truth, &supervised, 3).unwrap();
        let csv = rep.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "source_token,rank1,rank2,rank3,correct_rank");
        assert_eq!(lines[1], "a,x,y,z,>3");
        assert_eq!(lines[2], "s,x,y,z,supervised");
        assert!(lines[3].starts_with("summary,evaluated=1,green=0,yellow=0,red=1"));
    }
}
