use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::MetricError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Answered pairs whose truth is this class.
    pub support: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub weighted_f1: f64,
    pub macro_f1: f64,
    /// Correct answers over all pairs, unanswered counted as wrong.
    pub true_accuracy: f64,
    pub n_unanswered: usize,
    /// F1 scores over answered pairs, one per class seen among them.
    pub per_class: Vec<ClassScore>,
    /// Row and column labels of `confusion`: every truth class and every
    /// answered prediction, sorted.
    pub classes: Vec<String>,
    /// `confusion[t][p]` counts truth `classes[t]` predicted as
    /// `classes[p]`; the last column counts unanswered pairs, so row sums
    /// equal the full class support.
    pub confusion: Vec<Vec<usize>>,
}

/// Scores predictions against truth. `None` marks an unanswered case; it is
/// excluded from the F1 scores and counted as wrong for accuracy.
pub fn classification_metrics(pred: &[Option<String>], truth: &[String]) -> Result<ClassificationReport, MetricError> {
    if pred.is_empty() || pred.len() != truth.len() {
        return Err(MetricError::Argument(format!(
            "{} predictions for {} truth labels",
            pred.len(),
            truth.len()
        )));
    }
    let answered: Vec<(&str, &str)> = pred
        .iter()
        .zip(truth)
        .filter_map(|(p, t)| p.as_deref().map(|p| (p, t.as_str())))
        .collect();
    let correct = answered.iter().filter(|(p, t)| p == t).count();

    let seen: BTreeSet<&str> = answered.iter().flat_map(|&(p, t)| [p, t]).collect();
    let mut per_class = Vec::with_capacity(seen.len());
    for &c in &seen {
        let tp = answered.iter().filter(|&&(p, t)| p == c && t == c).count() as f64;
        let n_pred = answered.iter().filter(|&&(p, _)| p == c).count() as f64;
        let support = answered.iter().filter(|&&(_, t)| t == c).count();
        let precision = if n_pred > 0.0 { tp / n_pred } else { 0.0 };
        let recall = if support > 0 { tp / support as f64 } else { 0.0 };
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        per_class.push(ClassScore { class: c.to_string(), precision, recall, f1, support });
    }
    let (macro_f1, weighted_f1) = if per_class.is_empty() {
        (0.0, 0.0)
    } else {
        let macro_f1 = per_class.iter().map(|s| s.f1).sum::<f64>() / per_class.len() as f64;
        let total: usize = per_class.iter().map(|s| s.support).sum();
        let weighted = per_class.iter().map(|s| s.f1 * s.support as f64).sum::<f64>() / total as f64;
        (macro_f1, weighted)
    };

    let classes: Vec<String> = truth
        .iter()
        .map(String::as_str)
        .chain(answered.iter().map(|&(p, _)| p))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .map(str::to_string)
        .collect();
    let pos = |s: &str| classes.binary_search_by(|c| c.as_str().cmp(s)).expect("class listed");
    let mut confusion = vec![vec![0usize; classes.len() + 1]; classes.len()];
    for (p, t) in pred.iter().zip(truth) {
        let col = p.as_deref().map_or(classes.len(), pos);
        confusion[pos(t)][col] += 1;
    }
    Ok(ClassificationReport {
        weighted_f1,
        macro_f1,
        true_accuracy: correct as f64 / truth.len() as f64,
        n_unanswered: pred.len() - answered.len(),
        per_class,
        classes,
        confusion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn perfect_predictions() {
        let t = s(&["a", "b", "b", "c"]);
        let p: Vec<Option<String>> = t.iter().cloned().map(Some).collect();
        let r = classification_metrics(&p, &t).unwrap();
        assert_eq!((r.weighted_f1, r.macro_f1, r.true_accuracy), (1.0, 1.0, 1.0));
    }

    #[test]
    fn unanswered_counts_against_accuracy_only() {
        let t = s(&["a", "a", "a", "a", "a", "b", "b", "b", "b", "b"]);
        let mut p: Vec<Option<String>> = t.iter().cloned().map(Some).collect();
        p[0] = None;
        p[9] = None;
        let r = classification_metrics(&p, &t).unwrap();
        assert_eq!(r.true_accuracy, 0.8);
        assert_eq!(r.macro_f1, 1.0);
        assert_eq!(r.confusion, vec![vec![4, 0, 1], vec![0, 4, 1]]);
    }

    #[test]
    fn hand_tabulated_three_classes() {
        // truth a a a b b c, pred a b a b c c
        let t = s(&["a", "a", "a", "b", "b", "c"]);
        let p: Vec<Option<String>> = ["a", "b", "a", "b", "c", "c"].iter().map(|x| Some(x.to_string())).collect();
        let r = classification_metrics(&p, &t).unwrap();
        // a: P 1, R 2/3, F 0.8; b: P 1/2, R 1/2, F 1/2; c: P 1/2, R 1, F 2/3
        let f = [0.8, 0.5, 2.0 / 3.0];
        for (score, e) in r.per_class.iter().zip(f) {
            assert!((score.f1 - e).abs() < 1e-15);
        }
        assert!((r.macro_f1 - (0.8 + 0.5 + 2.0 / 3.0) / 3.0).abs() < 1e-15);
        assert!((r.weighted_f1 - (3.0 * 0.8 + 2.0 * 0.5 + 2.0 / 3.0) / 6.0).abs() < 1e-15);
        assert!((r.true_accuracy - 4.0 / 6.0).abs() < 1e-15);
    }
}
