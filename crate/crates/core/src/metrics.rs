//! Ranking metrics: ROC AUC, ROC points and precision/recall at k.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check(scores: &[f64], labels: &[u8]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Numerical("NaN score".into()));
    }
    let pos = labels.iter().filter(|&&y| y == 1).count();
    Ok((pos, labels.len() - pos))
}

/// Probability that a random positive outranks a random negative, ties ½.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (pos, neg) = check(scores, labels)?;
    if pos == 0 || neg == 0 {
        return Err(Error::InvalidConfig("AUC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum of (1-based, tie-averaged) ranks of positives, kept as twice the
    // value so it stays an exact integer.
    let mut twice_rank_sum: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let twice_avg = (i + 1 + j + 1) as u128;
        let pos_in_group = order[i..=j].iter().filter(|&&k| labels[k] == 1).count() as u128;
        twice_rank_sum += twice_avg * pos_in_group;
        i = j + 1;
    }
    let p = pos as u128;
    let twice_u = twice_rank_sum - p * (p + 1);
    Ok(twice_u as f64 / (2.0 * pos as f64 * neg as f64))
}

/// ROC points from the highest threshold down, `(0, 0)` to `(1, 1)`. Tied
/// scores form a single step.
pub fn roc_curve(scores: &[f64], labels: &[u8]) -> Result<Vec<(f64, f64)>> {
    let (pos, neg) = check(scores, labels)?;
    if pos == 0 || neg == 0 {
        return Err(Error::InvalidConfig("ROC curve needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    Ok(points)
}

/// Area under a piecewise-linear curve.
pub fn trapezoid(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum()
}

/// Precision and recall of the top `k` by score; ties broken by lower index.
pub fn precision_recall_at_k(scores: &[f64], labels: &[u8], k: usize) -> Result<(f64, f64)> {
    let (pos, _) = check(scores, labels)?;
    if pos == 0 {
        return Err(Error::InvalidConfig("precision/recall need at least one positive".into()));
    }
    if k == 0 || k > scores.len() {
        return Err(Error::InvalidConfig(format!("k = {k} outside 1..={}", scores.len())));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let tp = order[..k].iter().filter(|&&i| labels[i] == 1).count();
    Ok((tp as f64 / k as f64, tp as f64 / pos as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Node,
    Edge,
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Task::Node => "node",
            Task::Edge => "edge",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: Task,
    pub auc: f64,
    /// `k` equal to the number of scored positives.
    pub k: usize,
    pub precision_at_k: f64,
    pub recall_at_k: f64,
    pub user_k: Option<usize>,
    pub precision_at_user_k: Option<f64>,
    pub recall_at_user_k: Option<f64>,
    pub roc_points: Vec<(f64, f64)>,
    pub num_scored: usize,
    pub num_skipped: usize,
    #[serde(default)]
    pub config: serde_json::Value,
}

impl EvalReport {
    pub fn summary(&self) -> String {
        format!(
            "task={} auc={:.4} pre@k={:.4} rec@k={:.4} k={}",
            self.task, self.auc, self.precision_at_k, self.recall_at_k, self.k
        )
    }
}

/// Evaluates scores against labels; `None` scores are skipped.
pub fn evaluate(
    task: Task,
    scores: &[Option<f64>],
    labels: &[u8],
    user_k: Option<usize>,
    config: serde_json::Value,
) -> Result<EvalReport> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    let (s, y): (Vec<f64>, Vec<u8>) = scores
        .iter()
        .zip(labels)
        .filter_map(|(s, &y)| s.map(|s| (s, y)))
        .unzip();
    let skipped = scores.len() - s.len();
    let k = y.iter().filter(|&&v| v == 1).count();
    let auc = roc_auc(&s, &y)?;
    let (precision_at_k, recall_at_k) = precision_recall_at_k(&s, &y, k)?;
    let user = user_k.map(|uk| precision_recall_at_k(&s, &y, uk)).transpose()?;
    Ok(EvalReport {
        task,
        auc,
        k,
        precision_at_k,
        recall_at_k,
        user_k,
        precision_at_user_k: user.map(|u| u.0),
        recall_at_user_k: user.map(|u| u.1),
        roc_points: roc_curve(&s, &y)?,
        num_scored: s.len(),
        num_skipped: skipped,
        config,
    })
}
