//! Evaluation metrics: word/token error rate, binary accuracy, equal error
//! rate, and the per-setting report table.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::anonymizer::Setting;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("reference token sequence is empty")]
    EmptyReference,
    #[error("prediction/label length mismatch: {predictions} vs {labels}")]
    LengthMismatch { predictions: usize, labels: usize },
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("manifest ids misaligned: {0:?}")]
    IdMisalignment(Vec<String>),
}

/// Word error rate in percent: `100 * levenshtein(ref, hyp) / |ref|`.
/// May exceed 100 when the hypothesis inserts tokens.
pub fn wer<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> Result<f64, MetricError> {
    if reference.is_empty() {
        return Err(MetricError::EmptyReference);
    }
    Ok(100.0 * levenshtein(reference, hypothesis) as f64 / reference.len() as f64)
}

/// Unit-cost edit distance by dynamic programming over two rows.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut curr = vec![0usize; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        curr[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            curr[j + 1] = sub.min(prev[j + 1] + 1).min(curr[j] + 1);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}

/// Percentage of predictions equal to labels: `100 * (TP+TN) / total`.
pub fn binary_accuracy<T: PartialEq>(predictions: &[T], labels: &[T]) -> Result<f64, MetricError> {
    if predictions.len() != labels.len() {
        return Err(MetricError::LengthMismatch {
            predictions: predictions.len(),
            labels: labels.len(),
        });
    }
    if predictions.is_empty() {
        return Err(MetricError::EmptyInput("predictions"));
    }
    let correct = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(100.0 * correct as f64 / predictions.len() as f64)
}

/// Equal error rate in percent. Sweeps thresholds over the distinct scores
/// with `FRR(t) = |genuine < t| / G` and `FAR(t) = |impostor >= t| / I`, and
/// linearly interpolates between the two thresholds bracketing the
/// `FAR = FRR` crossing. Rank-based, so any strictly increasing transform of
/// all scores leaves the result unchanged.
pub fn eer(genuine: &[f64], impostor: &[f64]) -> Result<f64, MetricError> {
    if genuine.is_empty() {
        return Err(MetricError::EmptyInput("genuine scores"));
    }
    if impostor.is_empty() {
        return Err(MetricError::EmptyInput("impostor scores"));
    }
    let mut thresholds: Vec<f64> = genuine.iter().chain(impostor).cloned().collect();
    thresholds.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
    thresholds.dedup();
    // Extend below the minimum so the sweep starts at FRR=0, FAR=1.
    thresholds.insert(0, thresholds[0] - 1.0);

    let rates = |t: f64| -> (f64, f64) {
        let frr = genuine.iter().filter(|&&s| s < t).count() as f64 / genuine.len() as f64;
        let far = impostor.iter().filter(|&&s| s >= t).count() as f64 / impostor.len() as f64;
        (frr, far)
    };

    let mut prev = rates(thresholds[0]);
    if prev.1 <= prev.0 {
        // Degenerate: FAR already at or below FRR at the lowest threshold.
        return Ok(100.0 * (prev.0 + prev.1) / 2.0);
    }
    for &t in &thresholds[1..] {
        let (frr, far) = rates(t);
        if (far - frr).abs() < 1e-15 {
            return Ok(100.0 * frr);
        }
        if far < frr {
            // Crossing sits between the previous threshold and this one.
            let (frr0, far0) = prev;
            let d0 = far0 - frr0;
            let d1 = far - frr;
            let alpha = d0 / (d0 - d1);
            let e = frr0 + alpha * (frr - frr0);
            let e_far = far0 + alpha * (far - far0);
            return Ok(100.0 * (e + e_far) / 2.0);
        }
        prev = (frr, far);
    }
    // FAR stayed above FRR for every threshold: past the top everything is
    // rejected (FRR=1, FAR=0); interpolate toward that virtual endpoint.
    let (frr0, far0) = prev;
    let d0 = far0 - frr0;
    let alpha = d0 / (d0 + 1.0);
    Ok(100.0 * (frr0 + alpha * (1.0 - frr0) + far0 + alpha * (0.0 - far0)) / 2.0)
}

/// One row of the evaluation table.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ReportRow {
    pub setting: String,
    pub wer_pct: f64,
    pub gender_acc_pct: f64,
    pub ger_pct: f64,
    pub eer_pct: f64,
}

impl ReportRow {
    pub fn new(setting: &str, wer_pct: f64, gender_acc_pct: f64, eer_pct: f64) -> Self {
        Self {
            setting: setting.to_string(),
            wer_pct,
            gender_acc_pct,
            ger_pct: 100.0 - gender_acc_pct,
            eer_pct,
        }
    }
}

/// Per-setting utility/privacy table plus the clean-audio baseline row.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
pub struct EvaluationReport {
    pub rows: Vec<ReportRow>,
}

impl EvaluationReport {
    pub fn row(&self, setting: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.setting == setting)
    }

    /// Aligned plain-text table: Settings, WER, Acc, EER, GER.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<10} {:>8} {:>8} {:>8} {:>8}\n",
            "Settings", "WER", "Acc", "EER", "GER"
        ));
        for r in &self.rows {
            out.push_str(&format!(
                "{:<10} {:>8.2} {:>8.2} {:>8.2} {:>8.2}\n",
                r.setting, r.wer_pct, r.gender_acc_pct, r.eer_pct, r.ger_pct
            ));
        }
        out
    }

    /// One JSON record per row.
    pub fn to_jsonl(&self) -> String {
        self.rows
            .iter()
            .map(|r| serde_json::to_string(r).expect("report row serializes"))
            .map(|s| s + "\n")
            .collect()
    }
}

/// Settings in their fixed report order.
pub fn report_order() -> Vec<Setting> {
    vec![Setting::Si, Setting::Ri, Setting::Rg, Setting::Sirg, Setting::Risg]
}

/// Check that two manifests cover identical utterance ids; returns the sorted
/// list of offenders otherwise.
pub fn check_id_alignment(
    clean_ids: &[String],
    anonymized_ids: &[String],
) -> Result<(), MetricError> {
    let mut counts: BTreeMap<&str, i64> = BTreeMap::new();
    for id in clean_ids {
        *counts.entry(id.as_str()).or_default() += 1;
    }
    for id in anonymized_ids {
        *counts.entry(id.as_str()).or_default() -= 1;
    }
    let offenders: Vec<String> = counts
        .into_iter()
        .filter(|(_, c)| *c != 0)
        .map(|(id, _)| id.to_string())
        .collect();
    if offenders.is_empty() {
        Ok(())
    } else {
        Err(MetricError::IdMisalignment(offenders))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    /// Exhaustive-alignment edit distance: recursive minimum over delete /
    /// insert / substitute, no memoization. Independent of the DP path.
    fn brute_force_edit(a: &[u8], b: &[u8]) -> usize {
        match (a.is_empty(), b.is_empty()) {
            (true, _) => b.len(),
            (_, true) => a.len(),
            _ => {
                let sub = brute_force_edit(&a[1..], &b[1..]) + usize::from(a[0] != b[0]);
                let del = brute_force_edit(&a[1..], b) + 1;
                let ins = brute_force_edit(a, &b[1..]) + 1;
                sub.min(del).min(ins)
            }
        }
    }

    /// Dense-grid EER oracle: minimize |FAR-FRR| over a fine threshold grid.
    pub(crate) fn eer_brute_force(genuine: &[f64], impostor: &[f64]) -> f64 {
        let lo = genuine
            .iter()
            .chain(impostor)
            .cloned()
            .fold(f64::INFINITY, f64::min)
            - 1e-3;
        let hi = genuine
            .iter()
            .chain(impostor)
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
            + 1e-3;
        let mut best = (f64::INFINITY, 0.0);
        for k in 0..=200_000 {
            let t = lo + (hi - lo) * k as f64 / 200_000.0;
            let frr = genuine.iter().filter(|&&s| s < t).count() as f64 / genuine.len() as f64;
            let far = impostor.iter().filter(|&&s| s >= t).count() as f64 / impostor.len() as f64;
            let gap = (far - frr).abs();
            if gap < best.0 {
                best = (gap, (far + frr) / 2.0);
            }
        }
        100.0 * best.1
    }

    #[test]
    fn wer_identity_is_zero() {
        assert_eq!(wer(&[1, 2, 3], &[1, 2, 3]).unwrap(), 0.0);
    }

    #[test]
    fn wer_single_substitution() {
        let w = wer(&[1, 2, 3], &[1, 9, 3]).unwrap();
        assert!((w - 100.0 / 3.0).abs() < 1e-9, "got {w}");
    }

    #[test]
    fn wer_can_exceed_100_on_insertions() {
        // 2 insertions over a 1-token reference.
        assert_eq!(wer(&[1], &[1, 2, 3]).unwrap(), 200.0);
    }

    #[test]
    fn wer_empty_reference_errors() {
        assert_eq!(wer::<u8>(&[], &[1]), Err(MetricError::EmptyReference));
    }

    #[test]
    fn levenshtein_matches_brute_force_up_to_len_6() {
        // All pairs over a 3-symbol alphabet with lengths <= 6 is too many to
        // enumerate fully; cover all lengths with a seeded scan plus the full
        // cross product for lengths <= 3.
        fn seqs(len: usize) -> Vec<Vec<u8>> {
            if len == 0 {
                return vec![vec![]];
            }
            seqs(len - 1)
                .into_iter()
                .flat_map(|s| {
                    (0..3u8).map(move |c| {
                        let mut s = s.clone();
                        s.push(c);
                        s
                    })
                })
                .collect()
        }
        let short: Vec<Vec<u8>> = (0..=3).flat_map(seqs).collect();
        for a in &short {
            for b in &short {
                assert_eq!(levenshtein(a, b), brute_force_edit(a, b), "{a:?} vs {b:?}");
            }
        }
        let mut rng = StdRng::seed_from_u64(42);
        for _ in 0..400 {
            let la = rng.gen_range(0..=6);
            let lb = rng.gen_range(0..=6);
            let a: Vec<u8> = (0..la).map(|_| rng.gen_range(0..3)).collect();
            let b: Vec<u8> = (0..lb).map(|_| rng.gen_range(0..3)).collect();
            assert_eq!(levenshtein(&a, &b), brute_force_edit(&a, &b), "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(binary_accuracy(&[1, 0, 1], &[1, 0, 1]).unwrap(), 100.0);
        assert_eq!(binary_accuracy(&[0, 1, 0], &[1, 0, 1]).unwrap(), 0.0);
        // F,M,M,F vs F,M,F,F -> 3/4 correct.
        assert_eq!(binary_accuracy(&['F', 'M', 'M', 'F'], &['F', 'M', 'F', 'F']).unwrap(), 75.0);
    }

    #[test]
    fn accuracy_complement_sums_to_100() {
        let mut rng = StdRng::seed_from_u64(3);
        let labels: Vec<u8> = (0..31).map(|_| rng.gen_range(0..2)).collect();
        let preds: Vec<u8> = (0..31).map(|_| rng.gen_range(0..2)).collect();
        let flipped: Vec<u8> = preds.iter().map(|p| 1 - p).collect();
        let a = binary_accuracy(&preds, &labels).unwrap();
        let b = binary_accuracy(&flipped, &labels).unwrap();
        assert!((a + b - 100.0).abs() < 1e-9);
    }

    #[test]
    fn accuracy_errors() {
        assert!(matches!(
            binary_accuracy(&[1], &[1, 0]),
            Err(MetricError::LengthMismatch { .. })
        ));
        assert!(binary_accuracy::<u8>(&[], &[]).is_err());
    }

    #[test]
    fn eer_perfect_separation_is_zero() {
        assert_eq!(eer(&[0.9, 0.8], &[0.1, 0.2]).unwrap(), 0.0);
    }

    #[test]
    fn eer_identical_distributions_is_50() {
        let scores = [0.1, 0.4, 0.6, 0.9];
        let e = eer(&scores, &scores).unwrap();
        assert!((e - 50.0).abs() < 1e-9, "got {e}");
        let odd = [0.2, 0.5, 0.7];
        let e = eer(&odd, &odd).unwrap();
        assert!((e - 50.0).abs() < 1e-9, "got {e}");
    }

    #[test]
    fn eer_interpolated_example() {
        let e = eer(&[0.9, 0.7, 0.6], &[0.8, 0.3, 0.2]).unwrap();
        assert!((e - 100.0 / 3.0).abs() < 1e-9, "got {e}");
    }

    #[test]
    fn eer_empty_errors() {
        assert!(eer(&[], &[0.1]).is_err());
        assert!(eer(&[0.1], &[]).is_err());
    }

    #[test]
    fn eer_matches_brute_force_on_random_sets() {
        let mut rng = StdRng::seed_from_u64(7);
        for case in 0..100 {
            let ng = rng.gen_range(2..=50);
            let ni = rng.gen_range(2..=50);
            let shift = rng.gen_range(-0.3..0.8);
            let genuine: Vec<f64> = (0..ng).map(|_| rng.gen_range(0.0..1.0) + shift).collect();
            let impostor: Vec<f64> = (0..ni).map(|_| rng.gen_range(0.0..1.0)).collect();
            let fast = eer(&genuine, &impostor).unwrap();
            let brute = eer_brute_force(&genuine, &impostor);
            assert!(
                (fast - brute).abs() <= 0.1,
                "case {case}: fast {fast} vs brute {brute}"
            );
        }
    }

    proptest! {
        #[test]
        fn eer_invariant_under_increasing_transform(
            g in proptest::collection::vec(-1.0f64..1.0, 2..20),
            i in proptest::collection::vec(-1.0f64..1.0, 2..20),
        ) {
            let before = eer(&g, &i).unwrap();
            // strictly increasing map: x -> exp(2x) + x
            let tg: Vec<f64> = g.iter().map(|x| (2.0 * x).exp() + x).collect();
            let ti: Vec<f64> = i.iter().map(|x| (2.0 * x).exp() + x).collect();
            let after = eer(&tg, &ti).unwrap();
            prop_assert!((before - after).abs() < 1e-9);
        }
    }

    #[test]
    fn report_ger_is_complement() {
        let row = ReportRow::new("SI", 12.0, 80.0, 10.0);
        assert_eq!(row.ger_pct, 20.0);
        let report = EvaluationReport { rows: vec![row] };
        let table = report.to_table();
        assert!(table.contains("Settings"));
        assert!(table.contains("SI"));
        let jsonl = report.to_jsonl();
        assert!(jsonl.contains("\"setting\":\"SI\""));
    }

    #[test]
    fn id_alignment_lists_offenders() {
        let clean = vec!["a".to_string(), "b".to_string()];
        let anon = vec!["a".to_string(), "c".to_string()];
        match check_id_alignment(&clean, &anon) {
            Err(MetricError::IdMisalignment(ids)) => assert_eq!(ids, vec!["b", "c"]),
            other => panic!("expected misalignment, got {other:?}"),
        }
        assert!(check_id_alignment(&clean, &clean).is_ok());
    }
}
