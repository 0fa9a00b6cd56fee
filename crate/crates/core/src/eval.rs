//! Equal error rate and fold/tag report aggregation.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tags::{NUM_TAGS, TAG_LETTERS};

const NUM_FOLDS: usize = crate::audio_io::NUM_FOLDS as usize;

/// Describes how [`compute_eer`] picks its operating point; written into reports.
pub const EER_CONVENTION: &str = "positive iff score >= threshold; thresholds = unique scores and +inf; \
operating point minimizes |FNR - FPR|, ties to smaller FNR + FPR; EER = (FNR + FPR) / 2";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredChunk {
    pub chunk_id: String,
    pub tag: char,
    pub score: f64,
    pub reference: bool,
}

/// One threshold of the sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetPoint {
    /// `f64::INFINITY` for the reject-everything threshold.
    pub threshold: f64,
    pub false_negatives: usize,
    pub false_positives: usize,
    pub fnr: f64,
    pub fpr: f64,
}

fn class_counts(scored: &[ScoredChunk]) -> Result<(usize, usize)> {
    if let Some(bad) = scored.iter().find(|s| !s.score.is_finite()) {
        return Err(Error::UndefinedMetric(format!(
            "chunk `{}` has non-finite score {}",
            bad.chunk_id, bad.score
        )));
    }
    let positives = scored.iter().filter(|s| s.reference).count();
    let negatives = scored.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::UndefinedMetric(format!(
            "EER needs positive and negative references, got {positives} positive and {negatives} negative"
        )));
    }
    Ok((positives, negatives))
}

/// Every operating point of the threshold sweep, from +inf downwards.
pub fn det_points(scored: &[ScoredChunk]) -> Result<Vec<DetPoint>> {
    let (p, n) = class_counts(scored)?;
    let mut order: Vec<&ScoredChunk> = scored.iter().collect();
    order.sort_by(|a, b| b.score.total_cmp(&a.score));

    let point = |threshold, fn_: usize, fp: usize| DetPoint {
        threshold,
        false_negatives: fn_,
        false_positives: fp,
        fnr: fn_ as f64 / p as f64,
        fpr: fp as f64 / n as f64,
    };
    let mut points = vec![point(f64::INFINITY, p, 0)];
    let (mut fn_, mut fp) = (p, 0);
    let mut i = 0;
    while i < order.len() {
        let threshold = order[i].score;
        while i < order.len() && order[i].score == threshold {
            if order[i].reference {
                fn_ -= 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(point(threshold, fn_, fp));
    }
    Ok(points)
}

/// Equal error rate of one tag's scores; see [`EER_CONVENTION`].
pub fn compute_eer(scored: &[ScoredChunk]) -> Result<f64> {
    let (p, n) = class_counts(scored)?;
    let points = det_points(scored)?;
    // |FNR − FPR| and FNR + FPR scaled by P·N, so the comparison is exact.
    let key = |d: &DetPoint| {
        let a = (d.false_negatives * n) as i128;
        let b = (d.false_positives * p) as i128;
        ((a - b).abs(), a + b)
    };
    let best = points.iter().min_by_key(|d| key(d)).expect("sweep is never empty");
    Ok((best.fnr + best.fpr) / 2.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub system: String,
    /// Row per tag in `TAG_LETTERS` order, column per fold.
    pub per_tag_per_fold: Vec<[f64; NUM_FOLDS]>,
    pub per_tag_avg: Vec<f64>,
    pub overall_avg: f64,
}

/// Row means and their mean. Every cell must be present and lie in [0, 1].
pub fn aggregate(system: &str, cells: &[[Option<f64>; NUM_FOLDS]; NUM_TAGS]) -> Result<EvalReport> {
    let mut matrix = Vec::with_capacity(NUM_TAGS);
    for (t, row) in cells.iter().enumerate() {
        let mut full = [0.0; NUM_FOLDS];
        for (k, cell) in row.iter().enumerate() {
            let v = cell.ok_or_else(|| {
                Error::IncompleteReport(format!("no EER for tag {} in fold {}", TAG_LETTERS[t], k + 1))
            })?;
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::IncompleteReport(format!(
                    "EER {v} for tag {} in fold {} is outside [0, 1]",
                    TAG_LETTERS[t],
                    k + 1
                )));
            }
            full[k] = v;
        }
        matrix.push(full);
    }
    let per_tag_avg: Vec<f64> = matrix.iter().map(|r| r.iter().sum::<f64>() / NUM_FOLDS as f64).collect();
    let overall_avg = per_tag_avg.iter().sum::<f64>() / NUM_TAGS as f64;
    Ok(EvalReport {
        system: system.to_string(),
        per_tag_per_fold: matrix,
        per_tag_avg,
        overall_avg,
    })
}

#[derive(Serialize)]
struct CellRecord {
    tag: char,
    fold: usize,
    eer: f64,
}

#[derive(Serialize)]
struct ReportFile<'a, C: Serialize> {
    format: &'static str,
    version: u32,
    system: &'a str,
    eer_convention: &'static str,
    config: C,
    cells: Vec<CellRecord>,
    per_tag_avg: Vec<(char, f64)>,
    overall_avg: f64,
}

impl EvalReport {
    /// Machine-readable report. `config` is embedded verbatim.
    pub fn to_json<C: Serialize>(&self, config: C) -> String {
        let cells = self
            .per_tag_per_fold
            .iter()
            .enumerate()
            .flat_map(|(t, row)| {
                row.iter().enumerate().map(move |(k, &eer)| CellRecord {
                    tag: TAG_LETTERS[t],
                    fold: k + 1,
                    eer,
                })
            })
            .collect();
        let file = ReportFile {
            format: "audiotag-eval-report",
            version: 1,
            system: &self.system,
            eer_convention: EER_CONVENTION,
            config,
            cells,
            per_tag_avg: TAG_LETTERS.iter().copied().zip(self.per_tag_avg.iter().copied()).collect(),
            overall_avg: self.overall_avg,
        };
        let mut text = serde_json::to_string_pretty(&file).expect("report serializes");
        text.push('\n');
        text
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        writeln!(out, "# system: {}", self.system).unwrap();
        writeln!(out, "# EER convention: {EER_CONVENTION}").unwrap();
        write!(out, "{:<5}", "tag").unwrap();
        for k in 1..=NUM_FOLDS {
            write!(out, "{:>9}", format!("fold{k}")).unwrap();
        }
        writeln!(out, "{:>9}", "avg").unwrap();
        for (t, row) in self.per_tag_per_fold.iter().enumerate() {
            write!(out, "{:<5}", TAG_LETTERS[t]).unwrap();
            for v in row {
                write!(out, "{v:>9.4}").unwrap();
            }
            writeln!(out, "{:>9.4}", self.per_tag_avg[t]).unwrap();
        }
        writeln!(out, "{:<5}{:>54.4}", "all", self.overall_avg).unwrap();
        out
    }
}

/// Tab-separated DET points: `tag fold threshold fnr fpr`.
pub fn format_det(curves: &[(char, usize, Vec<DetPoint>)]) -> String {
    let mut out = String::from("tag\tfold\tthreshold\tfnr\tfpr\n");
    for (tag, fold, points) in curves {
        for p in points {
            writeln!(out, "{tag}\t{fold}\t{}\t{}\t{}", p.threshold, p.fnr, p.fpr).unwrap();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn scored(pairs: &[(f64, bool)]) -> Vec<ScoredChunk> {
        pairs
            .iter()
            .enumerate()
            .map(|(i, &(score, reference))| ScoredChunk {
                chunk_id: format!("c{i}"),
                tag: 'b',
                score,
                reference,
            })
            .collect()
    }

    /// Direct enumeration: every candidate threshold, counted from scratch.
    fn brute_force_eer(items: &[ScoredChunk]) -> f64 {
        let p = items.iter().filter(|s| s.reference).count();
        let n = items.len() - p;
        let mut thresholds: Vec<f64> = items.iter().map(|s| s.score).collect();
        thresholds.push(f64::INFINITY);
        let mut best: Option<((usize, usize), f64)> = None;
        for &theta in &thresholds {
            let fn_ = items.iter().filter(|s| s.reference && s.score < theta).count();
            let fp = items.iter().filter(|s| !s.reference && s.score >= theta).count();
            let (a, b) = (fn_ * n, fp * p);
            let key = (a.abs_diff(b), a + b);
            let eer = (fn_ as f64 / p as f64 + fp as f64 / n as f64) / 2.0;
            if best.is_none_or(|(k, _)| key < k) {
                best = Some((key, eer));
            }
        }
        best.unwrap().1
    }

    #[test]
    fn separable_scores_have_zero_eer() {
        let s = scored(&[(0.9, true), (0.8, true), (0.3, false), (0.1, false)]);
        assert_eq!(compute_eer(&s).unwrap(), 0.0);
    }

    #[test]
    fn hand_placed_scores() {
        let s = scored(&[(0.9, true), (0.4, true), (0.6, false), (0.1, false)]);
        let points = det_points(&s).unwrap();
        let at = points.iter().find(|p| p.threshold == 0.6).unwrap();
        assert_eq!((at.fnr, at.fpr), (0.5, 0.5));
        assert_eq!(compute_eer(&s).unwrap(), 0.5);
        assert_eq!(brute_force_eer(&s), 0.5);
    }

    #[test]
    fn interleaved_worst_case_is_one_half() {
        let pairs: Vec<(f64, bool)> = (0..20).map(|i| (i as f64, i % 2 == 0)).collect();
        assert_eq!(compute_eer(&scored(&pairs)).unwrap(), 0.5);
        assert_eq!(brute_force_eer(&scored(&pairs)), 0.5);
    }

    #[test]
    fn inverted_scores_have_unit_eer() {
        let s = scored(&[(0.1, true), (0.2, true), (0.8, false), (0.9, false)]);
        assert_eq!(compute_eer(&s).unwrap(), 1.0);
    }

    #[test]
    fn single_class_is_undefined() {
        let s = scored(&[(0.1, true), (0.2, true)]);
        assert!(matches!(compute_eer(&s), Err(Error::UndefinedMetric(_))));
        let s = scored(&[(f64::NAN, true), (0.2, false)]);
        assert!(matches!(compute_eer(&s), Err(Error::UndefinedMetric(_))));
    }

    fn column(avgs: [f64; 7]) -> [[Option<f64>; 5]; 7] {
        avgs.map(|v| [Some(v); 5])
    }

    #[test]
    fn constant_matrix() {
        let r = aggregate("x", &column([0.3; 7])).unwrap();
        assert!(r.per_tag_avg.iter().all(|&v| (v - 0.3).abs() < 1e-15));
        assert!((r.overall_avg - 0.3).abs() < 1e-15);
    }

    #[test]
    fn published_columns() {
        let dnn = aggregate("dnn", &column([0.0868, 0.1686, 0.2409, 0.1943, 0.2867, 0.2197, 0.0530])).unwrap();
        // Exact mean is 0.178571..., printed truncated to four places.
        assert!((dnn.overall_avg - 0.1785).abs() < 5e-3);
        assert_eq!((dnn.overall_avg * 1e4).floor() / 1e4, 0.1785);
        let gmm = aggregate("gmm", &column([0.0755, 0.2107, 0.3037, 0.2847, 0.2903, 0.2613, 0.0484])).unwrap();
        assert!((gmm.overall_avg - 0.21).abs() < 5e-3);
        let misvm = aggregate("misvm", &column([0.1672, 0.6466, 0.7626, 0.7046, 0.7303, 0.6724, 0.1481])).unwrap();
        assert!((misvm.overall_avg - 0.5474).abs() < 5e-5);
    }

    #[test]
    fn missing_cell_is_incomplete() {
        let mut cells = column([0.2; 7]);
        cells[3][2] = None;
        assert!(matches!(aggregate("x", &cells), Err(Error::IncompleteReport(_))));
    }

    #[test]
    fn report_outputs_cover_every_cell() {
        let r = aggregate("dnn", &column([0.1; 7])).unwrap();
        let json: serde_json::Value = serde_json::from_str(&r.to_json(serde_json::json!({"seed": "1"}))).unwrap();
        assert_eq!(json["cells"].as_array().unwrap().len(), 35);
        assert_eq!(json["cells"][0]["tag"], "b");
        assert_eq!(json["cells"][34]["tag"], "v");
        let table = r.to_table();
        assert_eq!(table.lines().count(), 2 + 1 + 7 + 1);
    }

    fn arb_scores() -> impl Strategy<Value = Vec<(f64, bool)>> {
        // Coarse grid so ties are common.
        prop::collection::vec(((0i32..12).prop_map(|v| v as f64 * 0.25), any::<bool>()), 2..50)
            .prop_filter("two classes", |v| v.iter().any(|p| p.1) && v.iter().any(|p| !p.1))
    }

    proptest! {
        #[test]
        fn matches_brute_force(pairs in arb_scores()) {
            let s = scored(&pairs);
            prop_assert_eq!(compute_eer(&s).unwrap(), brute_force_eer(&s));
        }

        #[test]
        fn invariant_under_monotone_transform(pairs in arb_scores()) {
            let s = scored(&pairs);
            let t: Vec<(f64, bool)> = pairs.iter().map(|&(x, y)| ((x * 0.7).exp() - 3.0, y)).collect();
            prop_assert_eq!(compute_eer(&s).unwrap(), compute_eer(&scored(&t)).unwrap());
        }

        #[test]
        fn flip_symmetry(pairs in arb_scores()) {
            let s = scored(&pairs);
            let flipped: Vec<(f64, bool)> = pairs.iter().map(|&(x, y)| (-x, !y)).collect();
            let e = compute_eer(&s).unwrap();
            prop_assert!(e >= 0.0 && e <= 1.0);
            prop_assert!((e - compute_eer(&scored(&flipped)).unwrap()).abs() < 1e-12);
        }
    }
}
