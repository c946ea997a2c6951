//! Segmentation overlap and boundary-distance metrics, rank-sum testing and
//! per-subject report tables.

mod distance;
mod report;
mod stats;

pub use distance::{boundary, directed_distances, hd100, hd95, hd_percentile, nearest_rank};
pub use report::{batch_evaluate, evaluate, BatchReport, EvalReport, LabelMetrics, SummaryRow, EVAL_LABELS};
pub use stats::{bonferroni, midranks, wilcoxon_rank_sum, wilcoxon_rank_sum_with, RankSumMethod, RankSumTest};

use crate::error::Result;
use crate::volume::LabelMap;

pub(crate) fn mask(lm: &LabelMap, label: u16) -> Vec<bool> {
    lm.data().iter().map(|&v| v == label).collect()
}

/// `2|A∩B| / (|A|+|B|)` for one label. Both empty gives 1, one empty 0.
pub fn dice(pred: &LabelMap, gt: &LabelMap, label: u16) -> Result<f64> {
    pred.geometry().ensure_matches(gt.geometry())?;
    let (mut a, mut b, mut both) = (0usize, 0usize, 0usize);
    for (&p, &g) in pred.data().iter().zip(gt.data()) {
        let (ip, ig) = (p == label, g == label);
        a += ip as usize;
        b += ig as usize;
        both += (ip && ig) as usize;
    }
    Ok(if a + b == 0 {
        1.0
    } else {
        2.0 * both as f64 / (a + b) as f64
    })
}
