//! Per-subject evaluation reports and their delimited-text form.
//!
//! CSV columns: `subject,label,dice,hd95,hd100`. One row per subject and
//! label 1..7, then a `mean` row per subject. The batch summary follows with
//! subject `__mean__` and `__std__` rows per label and `all`. Undefined
//! values are empty cells.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{dice, hd100, hd95};
use crate::error::{Error, Result};
use crate::volume::{LabelMap, LabelScheme};

pub const EVAL_LABELS: [u16; 7] = [1, 2, 3, 4, 5, 6, 7];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelMetrics {
    pub label: u16,
    pub dice: f64,
    pub hd95: Option<f64>,
    pub hd100: Option<f64>,
    /// Present in the prediction or the ground truth.
    pub present: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub subject: String,
    pub labels: Vec<LabelMetrics>,
    /// Over labels present on either side.
    pub mean_dice: Option<f64>,
    /// Over labels with a defined HD95.
    pub mean_hd95: Option<f64>,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Sample standard deviation; 0 for a single value.
fn std(v: &[f64]) -> Option<f64> {
    let m = mean(v)?;
    if v.len() < 2 {
        return Some(0.0);
    }
    Some((v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt())
}

pub fn evaluate(subject: &str, pred: &LabelMap, gt: &LabelMap) -> Result<EvalReport> {
    for (side, lm) in [("prediction", pred), ("ground truth", gt)] {
        if lm.scheme() != LabelScheme::Feta7 {
            return Err(Error::InvalidVolume(format!(
                "{side} of {subject} uses {} labels, expected FETA7",
                lm.scheme().name()
            )));
        }
    }
    pred.geometry().ensure_matches(gt.geometry())?;
    let labels = EVAL_LABELS
        .par_iter()
        .map(|&label| {
            Ok(LabelMetrics {
                label,
                dice: dice(pred, gt, label)?,
                hd95: hd95(pred, gt, label)?,
                hd100: hd100(pred, gt, label)?,
                present: pred.data().contains(&label) || gt.data().contains(&label),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let dices: Vec<f64> = labels.iter().filter(|l| l.present).map(|l| l.dice).collect();
    let hds: Vec<f64> = labels.iter().filter_map(|l| l.hd95).collect();
    Ok(EvalReport {
        subject: subject.to_string(),
        mean_dice: mean(&dices),
        mean_hd95: mean(&hds),
        labels,
    })
}

/// Mean and standard deviation across subjects for one label, or for the
/// per-subject means when `label` is `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub label: Option<u16>,
    pub n_dice: usize,
    pub dice_mean: Option<f64>,
    pub dice_std: Option<f64>,
    pub n_hd95: usize,
    pub hd95_mean: Option<f64>,
    pub hd95_std: Option<f64>,
}

impl SummaryRow {
    fn new(label: Option<u16>, dices: &[f64], hds: &[f64]) -> Self {
        Self {
            label,
            n_dice: dices.len(),
            dice_mean: mean(dices),
            dice_std: std(dices),
            n_hd95: hds.len(),
            hd95_mean: mean(hds),
            hd95_std: std(hds),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub reports: Vec<EvalReport>,
    pub summary: Vec<SummaryRow>,
}

/// Evaluates `(subject, prediction, ground truth)` triples in parallel;
/// reports keep input order.
pub fn batch_evaluate(pairs: &[(String, LabelMap, LabelMap)]) -> Result<BatchReport> {
    let reports = pairs
        .par_iter()
        .map(|(s, p, g)| evaluate(s, p, g))
        .collect::<Result<Vec<_>>>()?;
    let mut summary = Vec::new();
    for (k, &label) in EVAL_LABELS.iter().enumerate() {
        let dices: Vec<f64> = reports
            .iter()
            .map(|r| &r.labels[k])
            .filter(|l| l.present)
            .map(|l| l.dice)
            .collect();
        let hds: Vec<f64> = reports.iter().filter_map(|r| r.labels[k].hd95).collect();
        summary.push(SummaryRow::new(Some(label), &dices, &hds));
    }
    let dices: Vec<f64> = reports.iter().filter_map(|r| r.mean_dice).collect();
    let hds: Vec<f64> = reports.iter().filter_map(|r| r.mean_hd95).collect();
    summary.push(SummaryRow::new(None, &dices, &hds));
    Ok(BatchReport { reports, summary })
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

impl BatchReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| Error::Format(format!("writing report: {e}"));
        w.write_record(["subject", "label", "dice", "hd95", "hd100"]).map_err(csv_err)?;
        for r in &self.reports {
            for l in &r.labels {
                w.write_record([
                    r.subject.clone(),
                    l.label.to_string(),
                    cell(Some(l.dice)),
                    cell(l.hd95),
                    cell(l.hd100),
                ])
                .map_err(csv_err)?;
            }
            w.write_record([r.subject.clone(), "mean".into(), cell(r.mean_dice), cell(r.mean_hd95), String::new()])
                .map_err(csv_err)?;
        }
        for s in &self.summary {
            let label = s.label.map_or("all".to_string(), |l| l.to_string());
            w.write_record(["__mean__".into(), label.clone(), cell(s.dice_mean), cell(s.hd95_mean), String::new()])
                .map_err(csv_err)?;
            w.write_record(["__std__".into(), label, cell(s.dice_std), cell(s.hd95_std), String::new()])
                .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::Format(format!("writing report: {e}")))
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is UTF-8"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::fetal_phantom;
    use crate::volume::Geometry;

    fn without(lm: &LabelMap, label: u16) -> LabelMap {
        let data = lm.data().iter().map(|&v| if v == label { 3 } else { v }).collect();
        lm.with_data(data, LabelScheme::Feta7).unwrap()
    }

    #[test]
    fn identical_volumes_are_perfect() {
        let (lm, _) = fetal_phantom([32, 32, 32], [1.0; 3], 0.0, 0).unwrap();
        let r = evaluate("s", &lm, &lm).unwrap();
        assert!(r.labels.iter().all(|l| l.dice == 1.0 && l.hd95 == Some(0.0)));
        assert_eq!(r.mean_dice, Some(1.0));
        assert_eq!(r.mean_hd95, Some(0.0));
    }

    #[test]
    fn label_missing_on_both_sides() {
        let (lm, _) = fetal_phantom([32, 32, 32], [1.0; 3], 0.0, 0).unwrap();
        let a = without(&lm, 5);
        let r = evaluate("s", &a, &a).unwrap();
        let l5 = &r.labels[4];
        assert_eq!((l5.dice, l5.hd95, l5.present), (1.0, None, false));
        let defined = r.labels.iter().filter(|l| l.hd95.is_some()).count();
        assert_eq!(defined, 6);
    }

    #[test]
    fn batch_matches_single_calls() {
        let subjects: Vec<(String, LabelMap, LabelMap)> = (0..3)
            .map(|i| {
                let (gt, _) = fetal_phantom([28, 28, 28], [1.0; 3], 0.0, 0).unwrap();
                let pred = without(&gt, [4, 6, 7][i]);
                (format!("sub-{i}"), pred, gt)
            })
            .collect();
        let batch = batch_evaluate(&subjects).unwrap();
        for (r, (s, p, g)) in batch.reports.iter().zip(&subjects) {
            assert_eq!(r, &evaluate(s, p, g).unwrap());
        }
        assert_eq!(batch.summary.len(), 8);
        let csv = batch.to_csv_string().unwrap();
        assert!(csv.starts_with("subject,label,dice,hd95,hd100\n"));
        assert_eq!(csv.lines().count(), 1 + 3 * 8 + 16);
    }

    #[test]
    fn rejects_wrong_scheme_and_geometry() {
        let (lm, _) = fetal_phantom([16, 16, 16], [1.0; 3], 0.0, 0).unwrap();
        let other = lm.with_data(lm.data().to_vec(), LabelScheme::Subclass).unwrap();
        assert!(evaluate("s", &other, &lm).is_err());
        let g = Geometry::from_spacing([16, 16, 16], [2.0; 3]).unwrap();
        let moved = LabelMap::new(g, lm.data().to_vec(), LabelScheme::Feta7).unwrap();
        assert!(matches!(evaluate("s", &moved, &lm), Err(Error::Geometry(_))));
    }
}
