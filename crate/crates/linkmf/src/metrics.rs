//! Ranking metrics over scored binary labels.
//!
//! `auc` is the Mann-Whitney statistic: the probability that a random
//! positive outscores a random negative, ties counted half. `aupr` is
//! non-interpolated average precision; tied scores are collapsed into one
//! operating point so every tied positive is credited with the precision at
//! the end of its block. Both have streaming counterparts that never hold
//! negative scores in memory, for candidate sets in the tens of millions.

use crate::error::{Error, Result};

/// How the area under the precision-recall curve is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AuprMode {
    /// Non-interpolated average precision (the default).
    #[default]
    AveragePrecision,
    /// Trapezoidal integration of the PR curve.
    Trapezoid,
}

impl std::str::FromStr for AuprMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ap" | "average_precision" => Ok(Self::AveragePrecision),
            "trapezoid" => Ok(Self::Trapezoid),
            other => Err(Error::InvalidInput(format!(
                "unknown aupr mode '{other}' (expected 'ap' or 'trapezoid')"
            ))),
        }
    }
}

fn check_lengths(scores: &[f64], labels: &[bool]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::NonFinite(format!("score {bad}")));
    }
    Ok(())
}

/// Indices sorted by descending score; the shared preprocessing step.
fn descending_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_unstable_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .expect("scores are finite")
    });
    order
}

/// Area under the ROC curve via tied-block counting. Exact: concordant and
/// tied pair counts are accumulated as integers in doubled units.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_lengths(scores, labels)?;
    let order = descending_order(scores);
    let n = order.len();
    let total_pos = labels.iter().filter(|&&l| l).count() as u64;
    let total_neg = n as u64 - total_pos;
    if total_pos == 0 || total_neg == 0 {
        return Err(Error::InvalidInput(format!(
            "degenerate label set: {total_pos} positives, {total_neg} negatives"
        )));
    }

    // Walk descending; a positive beats every negative ranked strictly
    // below it and half-beats negatives inside its own tied block.
    let mut doubled: u128 = 0; // 2 * concordant + tied
    let mut neg_seen: u64 = 0;
    let mut idx = 0;
    while idx < n {
        let mut end = idx + 1;
        while end < n && scores[order[end]] == scores[order[idx]] {
            end += 1;
        }
        let mut block_pos = 0u64;
        let mut block_neg = 0u64;
        for &item in &order[idx..end] {
            if labels[item] {
                block_pos += 1;
            } else {
                block_neg += 1;
            }
        }
        let neg_below = total_neg - neg_seen - block_neg;
        doubled += u128::from(block_pos) * (2 * u128::from(neg_below) + u128::from(block_neg));
        neg_seen += block_neg;
        idx = end;
    }
    Ok(doubled as f64 / (2.0 * total_pos as f64 * total_neg as f64))
}

/// Area under the precision-recall curve in the requested mode.
pub fn aupr_with(scores: &[f64], labels: &[bool], mode: AuprMode) -> Result<f64> {
    check_lengths(scores, labels)?;
    let order = descending_order(scores);
    let n = order.len();
    let total_pos = labels.iter().filter(|&&l| l).count() as u64;
    if total_pos == 0 {
        return Err(Error::InvalidInput("no positives for aupr".into()));
    }

    let mut seen: u64 = 0;
    let mut tp: u64 = 0;
    let mut area = 0.0;
    let mut prev_recall = 0.0;
    let mut prev_precision = 1.0;
    let mut idx = 0;
    while idx < n {
        let mut end = idx + 1;
        while end < n && scores[order[end]] == scores[order[idx]] {
            end += 1;
        }
        let block_pos = order[idx..end].iter().filter(|&&i| labels[i]).count() as u64;
        seen += (end - idx) as u64;
        tp += block_pos;
        let precision = tp as f64 / seen as f64;
        let recall = tp as f64 / total_pos as f64;
        match mode {
            AuprMode::AveragePrecision => {
                area += block_pos as f64 * precision;
            }
            AuprMode::Trapezoid => {
                area += (recall - prev_recall) * 0.5 * (precision + prev_precision);
            }
        }
        prev_recall = recall;
        prev_precision = precision;
        idx = end;
    }
    Ok(match mode {
        AuprMode::AveragePrecision => area / total_pos as f64,
        AuprMode::Trapezoid => area,
    })
}

/// Non-interpolated average precision.
pub fn aupr(scores: &[f64], labels: &[bool]) -> Result<f64> {
    aupr_with(scores, labels, AuprMode::AveragePrecision)
}

/// One operating point of the ROC and PR curves, taken at a distinct
/// positive score treated as the decision threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub threshold: f64,
    /// Recall at this threshold.
    pub true_positive_rate: f64,
    pub false_positive_rate: f64,
    pub precision: f64,
}

/// Two-pass exact AUC/AUPR over a candidate stream: positive scores are
/// collected up front (they are few), negatives are streamed and only
/// counted against the positive thresholds. Produces results identical to
/// the in-memory functions.
#[derive(Debug)]
pub struct StreamingMetrics {
    /// Distinct positive score values, descending.
    thresholds: Vec<f64>,
    /// Positives per distinct value, aligned with `thresholds`.
    pos_at: Vec<u64>,
    /// Negatives with score strictly above threshold[t], filled on the fly
    /// as `count where score > v`, finalized in `finish`.
    neg_above: Vec<u64>,
    /// Negatives exactly equal to threshold[t].
    neg_at: Vec<u64>,
    total_pos: u64,
    total_neg: u64,
}

impl StreamingMetrics {
    pub fn new(mut positive_scores: Vec<f64>) -> Result<Self> {
        if positive_scores.is_empty() {
            return Err(Error::InvalidInput("no positives for metrics".into()));
        }
        if let Some(bad) = positive_scores.iter().find(|s| !s.is_finite()) {
            return Err(Error::NonFinite(format!("positive score {bad}")));
        }
        positive_scores.sort_unstable_by(|a, b| b.partial_cmp(a).expect("finite scores"));
        let total_pos = positive_scores.len() as u64;
        let mut thresholds = Vec::new();
        let mut pos_at = Vec::new();
        for s in positive_scores {
            match thresholds.last() {
                Some(&last) if last == s => *pos_at.last_mut().expect("aligned") += 1,
                _ => {
                    thresholds.push(s);
                    pos_at.push(1);
                }
            }
        }
        let k = thresholds.len();
        Ok(Self {
            thresholds,
            pos_at,
            neg_above: vec![0; k],
            neg_at: vec![0; k],
            total_pos,
            total_neg: 0,
        })
    }

    /// Account one negative candidate.
    pub fn add_negative(&mut self, score: f64) {
        self.total_neg += 1;
        // Thresholds are descending: find the first index with value <= score.
        let idx = self.thresholds.partition_point(|&v| v > score);
        if idx < self.thresholds.len() && self.thresholds[idx] == score {
            self.neg_at[idx] += 1;
        } else if idx < self.thresholds.len() {
            // score falls strictly between thresholds[idx-1] and
            // thresholds[idx]; it is "above" every threshold from idx on.
            self.neg_above[idx] += 1;
        }
        // score below every threshold: contributes to no counter.
    }

    pub fn total_negatives(&self) -> u64 {
        self.total_neg
    }

    fn cumulative_neg_ge(&self) -> Vec<u64> {
        let mut running = 0u64;
        self.neg_above
            .iter()
            .zip(&self.neg_at)
            .map(|(&above, &at)| {
                running += above;
                let ge = running + at;
                running += at;
                ge
            })
            .collect()
    }

    /// ROC/PR operating points at every distinct positive score,
    /// descending; the text form of the curves.
    pub fn curve_points(&self) -> Vec<CurvePoint> {
        let neg_ge = self.cumulative_neg_ge();
        let mut pos_cum = 0u64;
        self.thresholds
            .iter()
            .enumerate()
            .map(|(t, &threshold)| {
                pos_cum += self.pos_at[t];
                let seen = pos_cum + neg_ge[t];
                CurvePoint {
                    threshold,
                    true_positive_rate: pos_cum as f64 / self.total_pos as f64,
                    false_positive_rate: if self.total_neg == 0 {
                        0.0
                    } else {
                        neg_ge[t] as f64 / self.total_neg as f64
                    },
                    precision: pos_cum as f64 / seen as f64,
                }
            })
            .collect()
    }

    /// Finish the pass and compute (auc, aupr).
    pub fn finish(self, mode: AuprMode) -> Result<(f64, f64)> {
        if self.total_neg == 0 {
            return Err(Error::InvalidInput(
                "degenerate label set: no negatives".into(),
            ));
        }
        let k = self.thresholds.len();
        // Cumulative negatives with score >= thresholds[t].
        let neg_ge = self.cumulative_neg_ge();

        // AUC: positives at threshold t beat every negative below, and
        // half-beat the negatives tied at t.
        let mut doubled: u128 = 0;
        let mut pos_cum = 0u64;
        let mut area = 0.0;
        let mut prev_recall = 0.0;
        let mut prev_precision = 1.0;
        for t in 0..k {
            let neg_below = self.total_neg - neg_ge[t];
            doubled += u128::from(self.pos_at[t])
                * (2 * u128::from(neg_below) + u128::from(self.neg_at[t]));

            // Negatives strictly between the previous threshold and this one
            // hold recall constant but drag precision down; for the
            // trapezoid rule that moves the left edge of this segment.
            if mode == AuprMode::Trapezoid {
                let neg_gt = neg_ge[t] - self.neg_at[t];
                let gap = neg_gt - if t > 0 { neg_ge[t - 1] } else { 0 };
                if gap > 0 {
                    prev_precision = pos_cum as f64 / (pos_cum + neg_gt) as f64;
                }
            }

            pos_cum += self.pos_at[t];
            let seen = pos_cum + neg_ge[t];
            let precision = pos_cum as f64 / seen as f64;
            let recall = pos_cum as f64 / self.total_pos as f64;
            match mode {
                AuprMode::AveragePrecision => area += self.pos_at[t] as f64 * precision,
                AuprMode::Trapezoid => {
                    area += (recall - prev_recall) * 0.5 * (precision + prev_precision)
                }
            }
            prev_recall = recall;
            prev_precision = precision;
        }
        let auc = doubled as f64 / (2.0 * self.total_pos as f64 * self.total_neg as f64);
        let aupr = match mode {
            AuprMode::AveragePrecision => area / self.total_pos as f64,
            AuprMode::Trapezoid => area,
        };
        Ok((auc, aupr))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// O(P*N) pairwise comparison oracle, doubled-unit integers.
    fn auc_brute_force(scores: &[f64], labels: &[bool]) -> f64 {
        let mut doubled = 0u64;
        let mut pairs = 0u64;
        for (i, &li) in labels.iter().enumerate() {
            if !li {
                continue;
            }
            for (j, &lj) in labels.iter().enumerate() {
                if lj {
                    continue;
                }
                pairs += 1;
                if scores[i] > scores[j] {
                    doubled += 2;
                } else if scores[i] == scores[j] {
                    doubled += 1;
                }
            }
        }
        doubled as f64 / (2.0 * pairs as f64)
    }

    /// Step integration of the PR curve one item at a time; only valid for
    /// tie-free scores.
    fn aupr_pr_integration(scores: &[f64], labels: &[bool]) -> f64 {
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
        let total_pos = labels.iter().filter(|&&l| l).count() as f64;
        let mut tp = 0.0;
        let mut area = 0.0;
        let mut prev_recall = 0.0;
        for (rank, &i) in order.iter().enumerate() {
            if labels[i] {
                tp += 1.0;
            }
            let precision = tp / (rank as f64 + 1.0);
            let recall = tp / total_pos;
            area += (recall - prev_recall) * precision;
            prev_recall = recall;
        }
        area
    }

    #[test]
    fn auc_hand_examples() {
        assert_eq!(auc(&[0.9, 0.3, 0.7], &[true, false, false]).unwrap(), 1.0);
        assert_eq!(auc(&[0.8, 0.6, 0.4], &[true, false, true]).unwrap(), 0.5);
        // Inverted separation.
        assert_eq!(auc(&[0.1, 0.2, 0.9], &[true, true, false]).unwrap(), 0.0);
        // All scores equal: every pair is a tie.
        assert_eq!(
            auc(&[0.5, 0.5, 0.5, 0.5], &[true, false, true, false]).unwrap(),
            0.5
        );
    }

    #[test]
    fn auc_rejects_degenerate_labels() {
        assert!(auc(&[0.1, 0.2], &[true, true]).is_err());
        assert!(auc(&[0.1, 0.2], &[false, false]).is_err());
    }

    #[test]
    fn auc_matches_brute_force_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for round in 0..100 {
            let n = rng.random_range(2..500);
            // Quantized scores so ties actually happen.
            let scores: Vec<f64> = (0..n)
                .map(|_| (rng.random_range(0..25) as f64) / 25.0)
                .collect();
            let mut labels: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < 0.3).collect();
            if labels.iter().all(|&l| l) {
                labels[0] = false;
            }
            if labels.iter().all(|&l| !l) {
                labels[0] = true;
            }
            let fast = auc(&scores, &labels).unwrap();
            let brute = auc_brute_force(&scores, &labels);
            assert_eq!(fast, brute, "round {round}");
        }
    }

    #[test]
    fn aupr_hand_examples() {
        // Single positive ranked first / last.
        assert_eq!(aupr(&[0.9, 0.5, 0.1], &[true, false, false]).unwrap(), 1.0);
        let n = 4;
        let last = aupr(&[0.9, 0.8, 0.7, 0.1], &[false, false, false, true]).unwrap();
        assert!((last - 1.0 / n as f64).abs() < 1e-15);
        // Alternating example: 1/2 (1/1 + 2/3).
        let ap = aupr(&[0.9, 0.8, 0.7, 0.6], &[true, false, true, false]).unwrap();
        assert!((ap - 0.5 * (1.0 + 2.0 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn aupr_of_constant_scores_is_prevalence() {
        let scores = [0.5; 10];
        let labels: Vec<bool> = (0..10).map(|i| i < 3).collect();
        let ap = aupr(&scores, &labels).unwrap();
        assert!((ap - 0.3).abs() < 1e-15);
    }

    #[test]
    fn aupr_rejects_zero_positives() {
        assert!(aupr(&[0.5, 0.6], &[false, false]).is_err());
    }

    #[test]
    fn aupr_matches_pr_integration_on_tie_free_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let n = rng.random_range(2..300);
            let mut scores: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            scores.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
            scores.dedup();
            let n = scores.len();
            let mut labels: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < 0.4).collect();
            if labels.iter().all(|&l| !l) {
                labels[n / 2] = true;
            }
            let fast = aupr(&scores, &labels).unwrap();
            let oracle = aupr_pr_integration(&scores, &labels);
            assert!((fast - oracle).abs() <= 1e-12, "{fast} vs {oracle}");
        }
    }

    #[test]
    fn trapezoid_mode_agrees_on_smooth_curves() {
        // On tie-free data the step and trapezoid areas differ, but both
        // must be within [0, 1] and rank the same classifiers.
        let scores = [0.9, 0.8, 0.7, 0.6, 0.5];
        let good = [true, true, false, false, false];
        let bad = [false, false, false, true, true];
        for mode in [AuprMode::AveragePrecision, AuprMode::Trapezoid] {
            let g = aupr_with(&scores, &good, mode).unwrap();
            let b = aupr_with(&scores, &bad, mode).unwrap();
            assert!((0.0..=1.0).contains(&g));
            assert!((0.0..=1.0).contains(&b));
            assert!(g > b);
        }
    }

    #[test]
    fn metrics_are_invariant_under_monotone_transforms() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let n = 200;
        let scores: Vec<f64> = (0..n)
            .map(|_| (rng.random_range(0..40) as f64) / 40.0)
            .collect();
        let labels: Vec<bool> = (0..n).map(|i| i % 7 == 0).collect();
        let transformed: Vec<f64> = scores.iter().map(|s| (3.0 * s + 1.0).exp()).collect();
        assert_eq!(
            auc(&scores, &labels).unwrap(),
            auc(&transformed, &labels).unwrap()
        );
        assert_eq!(
            aupr(&scores, &labels).unwrap(),
            aupr(&transformed, &labels).unwrap()
        );
    }

    #[test]
    fn label_shuffle_keeps_auc_near_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let n = 400;
        let scores: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let mut sum = 0.0;
        let trials = 100;
        for _ in 0..trials {
            let labels: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < 0.25).collect();
            if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
                continue;
            }
            sum += auc(&scores, &labels).unwrap();
        }
        let mean = sum / trials as f64;
        // Null AUC variance is roughly 1/(12 min(P, N)); 3 sigma at P ~ 100.
        assert!((mean - 0.5).abs() < 0.03, "mean null AUC {mean}");
    }

    #[test]
    fn curve_points_by_hand() {
        let mut stream = StreamingMetrics::new(vec![0.9, 0.5]).unwrap();
        stream.add_negative(0.7);
        stream.add_negative(0.3);
        let curve = stream.curve_points();
        assert_eq!(
            curve,
            vec![
                CurvePoint {
                    threshold: 0.9,
                    true_positive_rate: 0.5,
                    false_positive_rate: 0.0,
                    precision: 1.0,
                },
                CurvePoint {
                    threshold: 0.5,
                    true_positive_rate: 1.0,
                    false_positive_rate: 0.5,
                    precision: 2.0 / 3.0,
                },
            ]
        );
        // Recall grows and the false positive rate never shrinks along the
        // curve.
        for w in curve.windows(2) {
            assert!(w[1].true_positive_rate >= w[0].true_positive_rate);
            assert!(w[1].false_positive_rate >= w[0].false_positive_rate);
        }
    }

    #[test]
    fn streaming_matches_in_memory_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for mode in [AuprMode::AveragePrecision, AuprMode::Trapezoid] {
            for _ in 0..50 {
                let n = rng.random_range(5..300);
                let scores: Vec<f64> = (0..n)
                    .map(|_| (rng.random_range(0..30) as f64) / 30.0)
                    .collect();
                let mut labels: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < 0.2).collect();
                if labels.iter().all(|&l| l) {
                    labels[0] = false;
                }
                if labels.iter().all(|&l| !l) {
                    labels[0] = true;
                }
                let pos: Vec<f64> = scores
                    .iter()
                    .zip(&labels)
                    .filter(|&(_, &l)| l)
                    .map(|(&s, _)| s)
                    .collect();
                let mut stream = StreamingMetrics::new(pos).unwrap();
                for (s, &l) in scores.iter().zip(&labels) {
                    if !l {
                        stream.add_negative(*s);
                    }
                }
                let (s_auc, s_aupr) = stream.finish(mode).unwrap();
                assert_eq!(s_auc, auc(&scores, &labels).unwrap());
                assert_eq!(s_aupr, aupr_with(&scores, &labels, mode).unwrap());
            }
        }
    }
}
