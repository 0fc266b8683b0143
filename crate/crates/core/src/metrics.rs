//! Binary classification metrics: confusion matrix, precision/recall/F1,
//! per-class report and ROC/AUC.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::Label;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub positive: Label,
}

impl ConfusionMatrix {
    pub fn new(tp: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        ConfusionMatrix {
            tp,
            fp,
            fn_,
            tn,
            positive: Label::Fire,
        }
    }

    pub fn from_predictions(preds: &[Label], truth: &[Label], positive: Label) -> Result<Self> {
        if preds.len() != truth.len() {
            return Err(Error::input(format!(
                "{} predictions for {} ground-truth labels",
                preds.len(),
                truth.len()
            )));
        }
        let mut cm = ConfusionMatrix {
            positive,
            ..Self::new(0, 0, 0, 0)
        };
        for (&p, &t) in preds.iter().zip(truth) {
            match (p == positive, t == positive) {
                (true, true) => cm.tp += 1,
                (true, false) => cm.fp += 1,
                (false, true) => cm.fn_ += 1,
                (false, false) => cm.tn += 1,
            }
        }
        Ok(cm)
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// The same counts seen with the other class as positive.
    pub fn swapped(&self) -> Self {
        ConfusionMatrix {
            tp: self.tn,
            fp: self.fn_,
            fn_: self.fp,
            tn: self.tp,
            positive: match self.positive {
                Label::Fire => Label::NoFire,
                Label::NoFire => Label::Fire,
            },
        }
    }
}

pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    match cm.total() {
        0 => Err(Error::input("accuracy of an empty confusion matrix")),
        n => Ok((cm.tp + cm.tn) as f64 / n as f64),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrecisionRecallF1 {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when some denominator was zero and the affected value reported as 0.
    pub zero_division: bool,
}

fn ratio(num: usize, den: usize, flag: &mut bool) -> f64 {
    if den == 0 {
        *flag = true;
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn precision_recall_f1(cm: &ConfusionMatrix) -> PrecisionRecallF1 {
    let mut zero_division = false;
    let precision = ratio(cm.tp, cm.tp + cm.fp, &mut zero_division);
    let recall = ratio(cm.tp, cm.tp + cm.fn_, &mut zero_division);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        zero_division = true;
        0.0
    };
    PrecisionRecallF1 {
        precision,
        recall,
        f1,
        zero_division,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassRow {
    pub label: Label,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
    pub undefined: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AverageRow {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc: Option<f64>,
    pub confusion: ConfusionMatrix,
    /// NoFire first, then Fire.
    pub per_class: Vec<ClassRow>,
    pub macro_avg: AverageRow,
    pub weighted_avg: AverageRow,
}

/// Full report with Fire as the positive class for the aggregate figures.
pub fn classification_report(preds: &[Label], truth: &[Label]) -> Result<MetricsReport> {
    let cm = ConfusionMatrix::from_predictions(preds, truth, Label::Fire)?;
    report_from_confusion(&cm)
}

pub fn report_from_confusion(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    let cm = if cm.positive == Label::Fire {
        *cm
    } else {
        cm.swapped()
    };
    let acc = accuracy(&cm)?;
    let total = cm.total();
    let per_class: Vec<ClassRow> = Label::ALL
        .iter()
        .map(|&label| {
            let view = if label == Label::Fire { cm } else { cm.swapped() };
            let m = precision_recall_f1(&view);
            ClassRow {
                label,
                precision: m.precision,
                recall: m.recall,
                f1: m.f1,
                support: view.tp + view.fn_,
                undefined: m.zero_division,
            }
        })
        .collect();
    let mean = |f: fn(&ClassRow) -> f64| per_class.iter().map(f).sum::<f64>() / per_class.len() as f64;
    let weighted = |f: fn(&ClassRow) -> f64| {
        per_class.iter().map(|r| f(r) * r.support as f64).sum::<f64>() / total as f64
    };
    let macro_avg = AverageRow {
        precision: mean(|r| r.precision),
        recall: mean(|r| r.recall),
        f1: mean(|r| r.f1),
        support: total,
    };
    let weighted_avg = AverageRow {
        precision: weighted(|r| r.precision),
        recall: weighted(|r| r.recall),
        f1: weighted(|r| r.f1),
        support: total,
    };
    let agg = precision_recall_f1(&cm);
    Ok(MetricsReport {
        accuracy: acc,
        precision: agg.precision,
        recall: agg.recall,
        f1: agg.f1,
        auc: None,
        confusion: cm,
        per_class,
        macro_avg,
        weighted_avg,
    })
}

impl MetricsReport {
    pub fn row(&self, label: Label) -> &ClassRow {
        self.per_class
            .iter()
            .find(|r| r.label == label)
            .expect("both rows present")
    }

    /// Aggregate metrics at 6 decimals followed by the per-class table at 2.
    pub fn render_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "Accuracy: {:.6}", self.accuracy);
        let _ = writeln!(s, "Precision: {:.6}", self.precision);
        let _ = writeln!(s, "Recall: {:.6}", self.recall);
        let _ = writeln!(s, "F1-Score: {:.6}", self.f1);
        if let Some(auc) = self.auc {
            let _ = writeln!(s, "AUC: {auc:.6}");
        }
        let c = &self.confusion;
        let _ = writeln!(s, "\nConfusion matrix (positive = {}):", c.positive);
        let _ = writeln!(
            s,
            "  tp: {}\n  fp: {}\n  fn: {}\n  tn: {}",
            c.tp, c.fp, c.fn_, c.tn
        );
        s.push('\n');
        s.push_str(&self.render_table());
        s
    }

    /// Per-class table in the familiar scikit-learn layout.
    pub fn render_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:>12} {:>9} {:>9} {:>9} {:>9}\n",
            "", "precision", "recall", "f1-score", "support"
        );
        for r in &self.per_class {
            let flag = if r.undefined { "  (undefined)" } else { "" };
            let _ = writeln!(
                s,
                "{:>12} {:>9.2} {:>9.2} {:>9.2} {:>9}{flag}",
                r.label.display_name(),
                r.precision,
                r.recall,
                r.f1,
                r.support
            );
        }
        s.push('\n');
        let _ = writeln!(
            s,
            "{:>12} {:>9} {:>9} {:>9.2} {:>9}",
            "accuracy", "", "", self.accuracy, self.macro_avg.support
        );
        for (name, a) in [
            ("macro avg", &self.macro_avg),
            ("weighted avg", &self.weighted_avg),
        ] {
            let _ = writeln!(
                s,
                "{:>12} {:>9.2} {:>9.2} {:>9.2} {:>9}",
                name, a.precision, a.recall, a.f1, a.support
            );
        }
        s
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("report is serializable")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// Scores `>= threshold` are called positive; `+inf` for the origin.
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

impl RocCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("threshold,fpr,tpr\n");
        for p in &self.points {
            let _ = writeln!(s, "{},{},{}", p.threshold, p.fpr, p.tpr);
        }
        s
    }
}

/// Empirical ROC over the distinct scores (probability of Fire), with equal
/// scores forming a single step, and its trapezoidal area.
pub fn roc_auc(scores: &[f64], truth: &[Label]) -> Result<RocCurve> {
    if scores.len() != truth.len() {
        return Err(Error::input(format!(
            "{} scores for {} labels",
            scores.len(),
            truth.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::input("NaN score"));
    }
    let pos = truth.iter().filter(|&&l| l == Label::Fire).count();
    let neg = truth.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::input("ROC needs both classes in the ground truth"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if truth[order[i]] == Label::Fire {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold,
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
        });
    }
    let last = points.last().expect("non-empty");
    if last.fpr != 1.0 || last.tpr != 1.0 {
        points.push(RocPoint {
            threshold: f64::NEG_INFINITY,
            fpr: 1.0,
            tpr: 1.0,
        });
    }
    let auc = points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum();
    Ok(RocCurve { points, auc })
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::{Fire as F, NoFire as N};

    fn reference_cm() -> ConfusionMatrix {
        ConfusionMatrix::new(2269, 73, 32, 1932)
    }

    #[test]
    fn perfect_and_anti_classifier() {
        let truth = [F, N, F, N];
        let cm = ConfusionMatrix::from_predictions(&truth, &truth, F).unwrap();
        assert_eq!((cm.fp, cm.fn_), (0, 0));
        assert_eq!(accuracy(&cm).unwrap(), 1.0);
        let anti = [N, F, N, F];
        let cm = ConfusionMatrix::from_predictions(&anti, &truth, F).unwrap();
        assert_eq!((cm.tp, cm.tn), (0, 0));
        assert_eq!(accuracy(&cm).unwrap(), 0.0);
        assert!(ConfusionMatrix::from_predictions(&anti[..3], &truth, F).is_err());
    }

    #[test]
    fn reference_matrix_aggregates() {
        let cm = reference_cm();
        assert_eq!(cm.total(), 4306);
        assert!((accuracy(&cm).unwrap() - 0.975615).abs() < 5e-7);
        let m = precision_recall_f1(&cm);
        assert!((m.precision - 0.968830).abs() < 5e-7);
        assert!((m.recall - 0.986093).abs() < 5e-7);
        assert!((m.f1 - 0.977385).abs() < 1e-5);
        assert!(!m.zero_division);
    }

    #[test]
    fn zero_division_flagged() {
        let m = precision_recall_f1(&ConfusionMatrix::new(0, 0, 3, 5));
        assert_eq!((m.precision, m.f1), (0.0, 0.0));
        assert!(m.zero_division);
        assert!(accuracy(&ConfusionMatrix::new(0, 0, 0, 0)).is_err());
    }

    #[test]
    fn reference_rows_at_two_decimals() {
        let r = report_from_confusion(&reference_cm()).unwrap();
        let two = |v: f64| format!("{v:.2}");
        let nf = r.row(N);
        assert_eq!(
            (two(nf.precision), two(nf.recall), two(nf.f1), nf.support),
            ("0.98".into(), "0.96".into(), "0.97".into(), 2005)
        );
        let f = r.row(F);
        assert_eq!(
            (two(f.precision), two(f.recall), two(f.f1), f.support),
            ("0.97".into(), "0.99".into(), "0.98".into(), 2301)
        );
        assert!((r.weighted_avg.recall - r.accuracy).abs() < 1e-12);
        assert_eq!(r.weighted_avg.support, 4306);
        let text = r.render_text();
        assert!(text.contains("Accuracy: 0.975615"));
        assert!(text.contains("     No Fire      0.98      0.96      0.97      2005"));
    }

    #[test]
    fn json_fields() {
        let mut r = report_from_confusion(&reference_cm()).unwrap();
        r.auc = Some(0.99);
        let j = r.to_json();
        for k in [
            "accuracy",
            "precision",
            "recall",
            "f1",
            "auc",
            "confusion",
            "per_class",
        ] {
            assert!(j.get(k).is_some(), "{k}");
        }
        assert_eq!(j["confusion"]["fn"], 32);
    }

    #[test]
    fn single_class_truth_flags_rows() {
        let r = classification_report(&[F, F, N], &[F, F, F]).unwrap();
        assert!(r.row(N).undefined);
        assert_eq!(r.row(N).support, 0);
    }

    #[test]
    fn roc_extremes() {
        let truth = [N, N, F, F];
        let perfect = roc_auc(&[0.1, 0.2, 0.8, 0.9], &truth).unwrap();
        assert_eq!(perfect.auc, 1.0);
        let flat = roc_auc(&[0.5; 4], &truth).unwrap();
        assert_eq!(flat.auc, 0.5);
        assert_eq!(flat.points.len(), 2);
        assert!(roc_auc(&[0.5, 0.6], &[F, F]).is_err());
        let csv = perfect.to_csv();
        assert!(csv.starts_with("threshold,fpr,tpr\ninf,0,0\n"));
        assert!(csv.trim_end().ends_with(",1,1"));
    }
}
