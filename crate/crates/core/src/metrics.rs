//! Confusion-matrix evaluation: accuracy, support-weighted precision,
//! recall, and F1, plus a comparative ranking table.
//!
//! Aggregates are support-weighted, under which weighted recall equals
//! accuracy identically for every confusion matrix.

use serde::{Deserialize, Serialize};

use crate::error::{NfcError, Result};

/// `C x C` count matrix; rows are true classes, columns predicted classes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<u64>,
    num_classes: usize,
}

impl ConfusionMatrix {
    pub fn zeros(num_classes: usize) -> Self {
        Self {
            counts: vec![0; num_classes * num_classes],
            num_classes,
        }
    }

    pub fn from_counts(num_classes: usize, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != num_classes * num_classes {
            return Err(NfcError::Shape(format!(
                "confusion matrix needs {} counts, got {}",
                num_classes * num_classes,
                counts.len()
            )));
        }
        Ok(Self {
            counts,
            num_classes,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    #[inline]
    pub fn get(&self, true_class: usize, predicted: usize) -> u64 {
        self.counts[true_class * self.num_classes + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn row_sum(&self, true_class: usize) -> u64 {
        (0..self.num_classes).map(|p| self.get(true_class, p)).sum()
    }

    pub fn col_sum(&self, predicted: usize) -> u64 {
        (0..self.num_classes).map(|t| self.get(t, predicted)).sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.num_classes).map(|c| self.get(c, c)).sum()
    }
}

/// Builds a confusion matrix from parallel truth/prediction lists.
pub fn confusion(y_true: &[usize], y_pred: &[usize], num_classes: usize) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(NfcError::Data(format!(
            "{} labels vs {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    let mut cm = ConfusionMatrix::zeros(num_classes);
    for (i, (&t, &p)) in y_true.iter().zip(y_pred).enumerate() {
        if t >= num_classes || p >= num_classes {
            return Err(NfcError::Data(format!(
                "sample {i}: class out of range (true {t}, predicted {p}, C = {num_classes})"
            )));
        }
        cm.counts[t * num_classes + p] += 1;
    }
    Ok(cm)
}

/// Per-class precision/recall/F1 with the class support.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

/// Aggregate and per-class evaluation of one classifier run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_class: Vec<ClassMetrics>,
}

/// Derives an [`EvalReport`] from a confusion matrix.
///
/// Per class: precision = TP / column sum (0 when the column is empty),
/// recall = TP / row sum (0 when the row is empty), F1 = harmonic mean
/// (0 when both are 0). Aggregates are support-weighted means; accuracy is
/// trace / total.
pub fn evaluate(cm: &ConfusionMatrix) -> Result<EvalReport> {
    let total = cm.total();
    if total == 0 {
        return Err(NfcError::Parameter(
            "cannot evaluate an empty confusion matrix".into(),
        ));
    }
    let total_f = total as f64;
    let mut per_class = Vec::with_capacity(cm.num_classes());
    let mut precision = 0.0;
    let mut recall = 0.0;
    let mut f1 = 0.0;
    for c in 0..cm.num_classes() {
        let tp = cm.get(c, c) as f64;
        let col = cm.col_sum(c) as f64;
        let row = cm.row_sum(c) as f64;
        let p = if col > 0.0 { tp / col } else { 0.0 };
        let r = if row > 0.0 { tp / row } else { 0.0 };
        let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        let support = cm.row_sum(c);
        let weight = support as f64 / total_f;
        precision += weight * p;
        recall += weight * r;
        f1 += weight * f;
        per_class.push(ClassMetrics {
            precision: p,
            recall: r,
            f1: f,
            support,
        });
    }
    Ok(EvalReport {
        accuracy: cm.trace() as f64 / total_f,
        precision,
        recall,
        f1,
        per_class,
    })
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Aligned plain-text rendering with one row per class.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<10} {:>8} {:>8} {:>8} {:>8}\n",
            "", "Acc.", "Prec.", "Rec.", "F1"
        ));
        out.push_str(&format!(
            "{:<10} {:>8.4} {:>8.4} {:>8.4} {:>8.4}\n",
            "overall", self.accuracy, self.precision, self.recall, self.f1
        ));
        for (c, m) in self.per_class.iter().enumerate() {
            out.push_str(&format!(
                "class {c:<4} {:>8} {:>8.4} {:>8.4} {:>8.4}  (support {})\n",
                "", m.precision, m.recall, m.f1, m.support
            ));
        }
        out
    }
}

/// One named row of aggregate metrics for the comparative table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelScore {
    pub name: String,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl ModelScore {
    pub fn from_report(name: impl Into<String>, report: &EvalReport) -> Self {
        Self {
            name: name.into(),
            accuracy: report.accuracy,
            precision: report.precision,
            recall: report.recall,
            f1: report.f1,
        }
    }

    fn metric(&self, i: usize) -> f64 {
        [self.accuracy, self.precision, self.recall, self.f1][i]
    }
}

/// Published CWRU benchmark rows (M1-M8), shipped as static reference data
/// for the comparative table. M1/M2/M3/M5 have no in-repo implementation.
pub fn published_reference() -> Vec<ModelScore> {
    let rows: [(&str, [f64; 4]); 8] = [
        ("M1-RF", [0.8945, 0.9011, 0.8945, 0.9133]),
        ("M2-SVM", [0.8278, 0.8107, 0.8278, 0.8117]),
        ("M3-XGBoost", [0.8983, 0.9020, 0.8983, 0.9000]),
        ("M4-MLP", [0.8963, 0.8910, 0.8963, 0.8934]),
        ("M5-GBM", [0.8727, 0.8764, 0.8727, 0.8731]),
        ("M6-LR", [0.6720, 0.6543, 0.6720, 0.6541]),
        ("M7-CP-NFC", [0.8779, 0.9169, 0.8779, 0.8931]),
        ("M8-Tucker-NFC", [0.9080, 0.9457, 0.9080, 0.9231]),
    ];
    rows.iter()
        .map(|(name, m)| ModelScore {
            name: (*name).into(),
            accuracy: m[0],
            precision: m[1],
            recall: m[2],
            f1: m[3],
        })
        .collect()
}

/// One ranked row of the comparative table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedRow {
    pub name: String,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Ordinal rank (1.0 is best) by mean per-metric rank.
    pub rank: f64,
    /// Number of the four aggregate metrics on which this row is best.
    pub wins: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankingTable {
    pub rows: Vec<RankedRow>,
}

impl RankingTable {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<16} {:>8} {:>8} {:>8} {:>8} {:>6} {:>9}\n",
            "Model", "Acc.", "Prec.", "Rec.", "F1", "Rank", "Win/Loss"
        ));
        for row in &self.rows {
            out.push_str(&format!(
                "{:<16} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>6.1} {:>8}/4\n",
                row.name, row.accuracy, row.precision, row.recall, row.f1, row.rank, row.wins
            ));
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Ranks evaluated models (plus optional reference rows) across the four
/// aggregate metrics. Each model gets a competition rank per metric; models
/// are ordered by the mean of those ranks and assigned ordinal positions.
/// `wins` counts the metrics on which a row matches the best value.
pub fn comparative_report(
    models: &[(String, EvalReport)],
    references: &[ModelScore],
) -> Result<RankingTable> {
    let mut scores: Vec<ModelScore> = models
        .iter()
        .map(|(name, report)| ModelScore::from_report(name.clone(), report))
        .collect();
    scores.extend(references.iter().cloned());
    if scores.is_empty() {
        return Err(NfcError::Parameter(
            "comparative report needs at least one model".into(),
        ));
    }
    let n = scores.len();
    let mut mean_rank = vec![0.0; n];
    let mut wins = vec![0u32; n];
    for metric in 0..4 {
        let best = scores
            .iter()
            .map(|s| s.metric(metric))
            .fold(f64::NEG_INFINITY, f64::max);
        for i in 0..n {
            let v = scores[i].metric(metric);
            let better = scores.iter().filter(|s| s.metric(metric) > v).count();
            mean_rank[i] += (better + 1) as f64 / 4.0;
            if v == best {
                wins[i] += 1;
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        mean_rank[a]
            .partial_cmp(&mean_rank[b])
            .expect("finite ranks")
            .then(a.cmp(&b))
    });
    let rows = order
        .iter()
        .enumerate()
        .map(|(pos, &i)| RankedRow {
            name: scores[i].name.clone(),
            accuracy: scores[i].accuracy,
            precision: scores[i].precision,
            recall: scores[i].recall,
            f1: scores[i].f1,
            rank: (pos + 1) as f64,
            wins: wins[i],
        })
        .collect();
    Ok(RankingTable { rows })
}
