//! Cross-validation over positive pairs, candidate ranking, and metric
//! reports.
//!
//! The candidate universe of a fold is every unordered pair that is not a
//! training positive, labeled 1 for held-out positives and 0 otherwise.
//! Candidate scores are streamed into the exact two-pass metric
//! accumulator, so the ~m^2/2 of them are never held in memory at once.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::InteractionStore;
use crate::error::{Error, Result};
use crate::factor::{probability, train, FactorModel, Hyperparameters, TrainOptions};
use crate::graph::GraphLaplacian;
use crate::metrics::{AuprMode, CurvePoint, StreamingMetrics};
use crate::weights::{WeightScheme, WeightView};

/// Disjoint folds of positive pairs; sizes differ by at most one.
#[derive(Debug, Clone)]
pub struct FoldPlan {
    folds: Vec<Vec<(u32, u32)>>,
    seed: u64,
}

impl FoldPlan {
    pub fn folds(&self) -> &[Vec<(u32, u32)>] {
        &self.folds
    }

    pub fn num_folds(&self) -> usize {
        self.folds.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Split the positive set into `n_folds` disjoint folds: a seeded shuffle
/// followed by round-robin assignment. Deterministic given the seed.
pub fn make_folds(y: &InteractionStore, n_folds: usize, seed: u64) -> Result<FoldPlan> {
    if n_folds < 2 {
        return Err(Error::InvalidInput(format!(
            "cannot cross-validate with {n_folds} fold(s); need at least 2"
        )));
    }
    let positives: Vec<(u32, u32)> = y.pairs().iter().map(|&(i, j, _)| (i, j)).collect();
    if positives.len() < n_folds {
        return Err(Error::InvalidInput(format!(
            "too few positives ({}) for {n_folds} folds",
            positives.len()
        )));
    }
    let mut order: Vec<usize> = (0..positives.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![Vec::new(); n_folds];
    for (slot, &idx) in order.iter().enumerate() {
        folds[slot % n_folds].push(positives[idx]);
    }
    for fold in &mut folds {
        fold.sort_unstable();
    }
    Ok(FoldPlan { folds, seed })
}

/// Metrics of one evaluated fold, plus the ROC/PR operating points at each
/// distinct positive score for text emission of the curves.
#[derive(Debug, Clone)]
pub struct FoldMetrics {
    pub auc: f64,
    pub aupr: f64,
    pub test_positives: usize,
    pub candidates: usize,
    pub curve: Vec<CurvePoint>,
}

/// Score every candidate pair of one fold and compute AUC/AUPR.
///
/// Rejects any test positive still present in the training positives.
pub fn evaluate_fold(
    train_y: &InteractionStore,
    test_positives: &[(u32, u32)],
    model: &FactorModel,
    mode: AuprMode,
) -> Result<FoldMetrics> {
    let m = train_y.m();
    if model.m() != m {
        return Err(Error::DimensionMismatch(format!(
            "model has {} rows but the store has m = {m}",
            model.m()
        )));
    }
    let mut test_set: HashSet<(u32, u32)> = HashSet::with_capacity(test_positives.len());
    for &(a, b) in test_positives {
        if a == b {
            return Err(Error::InvalidInput(format!("test self-pair ({a}, {a})")));
        }
        let pair = if a < b { (a, b) } else { (b, a) };
        if train_y.is_positive(pair.0, pair.1) {
            return Err(Error::Leakage {
                i: pair.0,
                j: pair.1,
            });
        }
        test_set.insert(pair);
    }

    let mut positive_scores = Vec::with_capacity(test_set.len());
    for &(i, j) in &test_set {
        positive_scores.push(model.score(i, j)?);
    }
    let mut stream = StreamingMetrics::new(positive_scores)?;

    // Stream the negatives: upper-triangle pairs that are neither training
    // positives nor held-out positives. Scores pass through the same dot
    // product as `FactorModel::score`, and only the few positive scores are
    // ever held in memory.
    let u = model.u();
    for i in 0..m {
        let ui = u.row(i);
        let ui = ui.as_slice().expect("row-major factors");
        let row_positives = train_y.row(i as u32);
        let mut rp = row_positives.partition_point(|&(j, _)| j <= i as u32);
        for j in (i + 1)..m {
            while rp < row_positives.len() && (row_positives[rp].0 as usize) < j {
                rp += 1;
            }
            if rp < row_positives.len() && row_positives[rp].0 as usize == j {
                continue; // training positive: not a candidate
            }
            if test_set.contains(&(i as u32, j as u32)) {
                continue; // counted as a positive already
            }
            let uj = u.row(j);
            let uj = uj.as_slice().expect("row-major factors");
            stream.add_negative(probability(ui, uj));
        }
    }

    let test_count = test_set.len();
    let candidates = test_count + stream.total_negatives() as usize;
    let curve = stream.curve_points();
    let (auc, aupr) = stream.finish(mode)?;
    Ok(FoldMetrics {
        auc,
        aupr,
        test_positives: test_count,
        candidates,
        curve,
    })
}

/// Per-fold metrics plus their mean and sample standard deviation.
#[derive(Debug, Clone)]
pub struct MetricReport {
    pub folds: Vec<FoldMetrics>,
}

fn mean(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = values.clone().count();
    if n == 0 {
        return 0.0;
    }
    values.sum::<f64>() / n as f64
}

fn sample_std(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = values.clone().count();
    if n < 2 {
        return 0.0;
    }
    let mu = mean(values.clone());
    let ss: f64 = values.map(|v| (v - mu) * (v - mu)).sum();
    (ss / (n as f64 - 1.0)).sqrt()
}

impl MetricReport {
    pub fn mean_auc(&self) -> f64 {
        mean(self.folds.iter().map(|f| f.auc))
    }

    pub fn std_auc(&self) -> f64 {
        sample_std(self.folds.iter().map(|f| f.auc))
    }

    pub fn mean_aupr(&self) -> f64 {
        mean(self.folds.iter().map(|f| f.aupr))
    }

    pub fn std_aupr(&self) -> f64 {
        sample_std(self.folds.iter().map(|f| f.aupr))
    }

    /// Machine-readable key-value lines; floats in shortest round-trip form.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("folds {}\n", self.folds.len()));
        for (idx, f) in self.folds.iter().enumerate() {
            let n = idx + 1;
            out.push_str(&format!("fold.{n}.auc {}\n", f.auc));
            out.push_str(&format!("fold.{n}.aupr {}\n", f.aupr));
            out.push_str(&format!("fold.{n}.test_positives {}\n", f.test_positives));
            out.push_str(&format!("fold.{n}.candidates {}\n", f.candidates));
        }
        out.push_str(&format!("mean.auc {}\n", self.mean_auc()));
        out.push_str(&format!("std.auc {}\n", self.std_auc()));
        out.push_str(&format!("mean.aupr {}\n", self.mean_aupr()));
        out.push_str(&format!("std.aupr {}\n", self.std_aupr()));
        out
    }

    /// Human-readable table.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("fold    auc       aupr      positives  candidates\n");
        for (idx, f) in self.folds.iter().enumerate() {
            out.push_str(&format!(
                "{:<7} {:<9.4} {:<9.4} {:<10} {}\n",
                idx + 1,
                f.auc,
                f.aupr,
                f.test_positives,
                f.candidates
            ));
        }
        out.push_str(&format!(
            "mean    {:.4} +/- {:.4}   aupr {:.4} +/- {:.4}\n",
            self.mean_auc(),
            self.std_auc(),
            self.mean_aupr(),
            self.std_aupr()
        ));
        out
    }
}

/// Cross-validation knobs.
#[derive(Debug, Clone)]
pub struct CvOptions {
    pub n_folds: usize,
    pub seed: u64,
    pub aupr_mode: AuprMode,
    pub train: TrainOptions,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self {
            n_folds: 5,
            seed: 42,
            aupr_mode: AuprMode::AveragePrecision,
            train: TrainOptions::default(),
        }
    }
}

/// For each fold: blind its positives, retrain, evaluate on the full
/// candidate set. The Laplacians do not depend on the interaction data and
/// are shared across folds.
pub fn cross_validate(
    y: &InteractionStore,
    scheme: WeightScheme,
    lg: Option<&GraphLaplacian>,
    lp: Option<&GraphLaplacian>,
    h: &Hyperparameters,
    opts: &CvOptions,
) -> Result<MetricReport> {
    let plan = make_folds(y, opts.n_folds, opts.seed)?;
    let mut folds = Vec::with_capacity(plan.num_folds());
    for fold in plan.folds() {
        let drop: HashSet<(u32, u32)> = fold.iter().copied().collect();
        let train_y = y.without_pairs(&drop)?;
        let view = WeightView::new(&train_y, scheme);
        let model = train(&view, lg, lp, h, &opts.train)?;
        folds.push(evaluate_fold(&train_y, fold, &model, opts.aupr_mode)?);
    }
    Ok(MetricReport { folds })
}

/// Candidate pairs ordered by descending score, ties broken toward the
/// lexicographically smaller pair, truncated to `top_k`.
#[derive(Debug, Clone)]
pub struct RankedPredictions {
    entries: Vec<(u32, u32, f64)>,
}

impl RankedPredictions {
    pub fn entries(&self) -> &[(u32, u32, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(PartialEq)]
struct RankEntry {
    score: f64,
    pair: (u32, u32),
}

impl Eq for RankEntry {}

impl Ord for RankEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Higher score is better; on ties the smaller pair is better.
        self.score
            .partial_cmp(&other.score)
            .expect("scores are finite")
            .then_with(|| other.pair.cmp(&self.pair))
    }
}

impl PartialOrd for RankEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Select the `top_k` best-scoring candidates with a bounded min-heap.
pub fn rank_candidates<I>(
    model: &FactorModel,
    candidates: I,
    top_k: usize,
) -> Result<RankedPredictions>
where
    I: IntoIterator<Item = (u32, u32)>,
{
    use std::cmp::Reverse;
    use std::collections::BinaryHeap;

    let mut heap: BinaryHeap<Reverse<RankEntry>> = BinaryHeap::new();
    for (i, j) in candidates {
        let score = model.score(i, j)?;
        let pair = if i < j { (i, j) } else { (j, i) };
        let entry = RankEntry { score, pair };
        if heap.len() < top_k {
            heap.push(Reverse(entry));
        } else if let Some(worst) = heap.peek() {
            if entry > worst.0 {
                heap.pop();
                heap.push(Reverse(entry));
            }
        }
    }
    let mut entries: Vec<RankEntry> = heap.into_iter().map(|r| r.0).collect();
    entries.sort_unstable_by(|a, b| b.cmp(a));
    Ok(RankedPredictions {
        entries: entries
            .into_iter()
            .map(|e| (e.pair.0, e.pair.1, e.score))
            .collect(),
    })
}

/// Iterator over all unordered pairs absent from the positive set: the
/// prediction candidates of a trained model.
pub fn candidate_pairs(y: &InteractionStore) -> CandidatePairs<'_> {
    CandidatePairs { y, i: 0, j: 1 }
}

pub struct CandidatePairs<'a> {
    y: &'a InteractionStore,
    i: usize,
    j: usize,
}

impl Iterator for CandidatePairs<'_> {
    type Item = (u32, u32);

    fn next(&mut self) -> Option<Self::Item> {
        let m = self.y.m();
        loop {
            if self.i + 1 >= m {
                return None;
            }
            if self.j >= m {
                self.i += 1;
                self.j = self.i + 1;
                continue;
            }
            let (i, j) = (self.i as u32, self.j as u32);
            self.j += 1;
            if !self.y.is_positive(i, j) {
                return Some((i, j));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factor::{init_factors, FactorModel, TrainStats};
    use ndarray::Array2;

    fn store(m: usize, pairs: Vec<(u32, u32)>) -> InteractionStore {
        InteractionStore::from_pairs(m, pairs.into_iter().map(|(i, j)| (i, j, 1.0))).unwrap()
    }

    fn model_from(u: Array2<f64>) -> FactorModel {
        let d = u.ncols();
        FactorModel::from_matrix(
            u,
            Hyperparameters {
                d,
                ..Default::default()
            },
            TrainStats::default(),
        )
        .unwrap()
    }

    #[test]
    fn folds_are_balanced_and_deterministic() {
        let pairs: Vec<(u32, u32)> = (0..10).map(|k| (k, k + 10)).collect();
        let y = store(20, pairs);
        let plan = make_folds(&y, 5, 7).unwrap();
        assert_eq!(plan.num_folds(), 5);
        for fold in plan.folds() {
            assert_eq!(fold.len(), 2);
        }
        let again = make_folds(&y, 5, 7).unwrap();
        assert_eq!(plan.folds(), again.folds());
        let different = make_folds(&y, 5, 8).unwrap();
        assert_ne!(plan.folds(), different.folds());
    }

    #[test]
    fn folds_partition_the_positive_set() {
        let pairs: Vec<(u32, u32)> = (0..23).map(|k| (k, k + 23)).collect();
        let y = store(46, pairs.clone());
        let plan = make_folds(&y, 5, 3).unwrap();
        let mut sizes: Vec<usize> = plan.folds().iter().map(Vec::len).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![4, 4, 5, 5, 5]);
        let mut all: Vec<(u32, u32)> = plan.folds().iter().flatten().copied().collect();
        all.sort_unstable();
        let mut expected = pairs;
        expected.sort_unstable();
        assert_eq!(all, expected);
    }

    #[test]
    fn paper_scale_fold_sizes_differ_by_at_most_one() {
        // 19,667 positives fit in m = 200 (19,900 unordered pairs).
        let m = 200u32;
        let mut pairs = Vec::new();
        'outer: for i in 0..m {
            for j in (i + 1)..m {
                pairs.push((i, j));
                if pairs.len() == 19_667 {
                    break 'outer;
                }
            }
        }
        let y = store(200, pairs);
        let plan = make_folds(&y, 5, 42).unwrap();
        let sizes: Vec<usize> = plan.folds().iter().map(Vec::len).collect();
        assert_eq!(sizes.iter().sum::<usize>(), 19_667);
        let min = sizes.iter().min().unwrap();
        let max = sizes.iter().max().unwrap();
        assert!(max - min <= 1, "sizes {sizes:?}");
    }

    #[test]
    fn too_few_positives_is_an_error() {
        let y = store(10, vec![(0, 1), (2, 3)]);
        assert!(make_folds(&y, 5, 0).is_err());
        assert!(make_folds(&y, 1, 0).is_err());
    }

    #[test]
    fn leakage_is_rejected() {
        let y = store(6, vec![(0, 1), (2, 3)]);
        let model = model_from(init_factors(6, 2, 1));
        let err = evaluate_fold(&y, &[(2, 3)], &model, AuprMode::AveragePrecision);
        match err {
            Err(Error::Leakage { i: 2, j: 3 }) => {}
            other => panic!("expected leakage error, got {other:?}"),
        }
        // Orientation does not matter.
        assert!(matches!(
            evaluate_fold(&y, &[(3, 2)], &model, AuprMode::AveragePrecision),
            Err(Error::Leakage { .. })
        ));
    }

    #[test]
    fn evaluate_fold_counts_the_candidate_universe() {
        // m = 5: 10 unordered pairs, 2 training positives -> 8 candidates.
        let y = store(5, vec![(0, 1), (1, 2)]);
        let model = model_from(init_factors(5, 2, 3));
        let frag = evaluate_fold(&y, &[(3, 4)], &model, AuprMode::AveragePrecision).unwrap();
        assert_eq!(frag.candidates, 8);
        assert_eq!(frag.test_positives, 1);
    }

    #[test]
    fn evaluate_fold_matches_in_memory_metrics() {
        let y = store(7, vec![(0, 1), (2, 3), (4, 5)]);
        let model = model_from(init_factors(7, 3, 11));
        let test = vec![(0, 2), (5, 6)];
        let frag = evaluate_fold(&y, &test, &model, AuprMode::AveragePrecision).unwrap();

        let test_set: HashSet<(u32, u32)> = test.iter().copied().collect();
        let mut scores = Vec::new();
        let mut labels = Vec::new();
        for i in 0..7u32 {
            for j in (i + 1)..7 {
                if y.is_positive(i, j) {
                    continue;
                }
                scores.push(model.score(i, j).unwrap());
                labels.push(test_set.contains(&(i, j)));
            }
        }
        assert_eq!(frag.auc, crate::metrics::auc(&scores, &labels).unwrap());
        assert_eq!(frag.aupr, crate::metrics::aupr(&scores, &labels).unwrap());
        assert_eq!(frag.candidates, scores.len());
    }

    #[test]
    fn report_mean_and_std_are_recomputable() {
        let report = MetricReport {
            folds: vec![
                FoldMetrics {
                    auc: 0.8,
                    aupr: 0.3,
                    test_positives: 2,
                    candidates: 10,
                    curve: Vec::new(),
                },
                FoldMetrics {
                    auc: 0.9,
                    aupr: 0.5,
                    test_positives: 2,
                    candidates: 10,
                    curve: Vec::new(),
                },
            ],
        };
        assert!((report.mean_auc() - 0.85).abs() < 1e-15);
        let expected_std = ((0.05f64 * 0.05 + 0.05 * 0.05) / 1.0).sqrt();
        assert!((report.std_auc() - expected_std).abs() < 1e-15);
        let kv = report.to_kv();
        assert!(kv.contains("fold.1.auc 0.8"));
        assert!(kv.contains("mean.auc 0.85"));
    }

    #[test]
    fn ranking_orders_by_score_then_pair() {
        // Rows engineered so score(0,1) > score(2,3) = score(2,4) = 0.5.
        let mut u = Array2::<f64>::zeros((5, 2));
        u[[0, 0]] = 2.0;
        u[[1, 0]] = 2.0;
        let model = model_from(u);
        let candidates = vec![(2, 3), (0, 1), (2, 4)];
        let ranked = rank_candidates(&model, candidates.clone(), 10).unwrap();
        let pairs: Vec<(u32, u32)> = ranked.entries().iter().map(|&(i, j, _)| (i, j)).collect();
        assert_eq!(pairs, vec![(0, 1), (2, 3), (2, 4)]);

        let top1 = rank_candidates(&model, candidates, 1).unwrap();
        assert_eq!(top1.len(), 1);
        assert_eq!(top1.entries()[0].0, 0);
        assert_eq!(top1.entries()[0].1, 1);
    }

    #[test]
    fn ranking_scores_are_non_increasing() {
        let model = model_from(init_factors(10, 3, 5));
        let y = store(10, vec![(0, 1)]);
        let ranked = rank_candidates(&model, candidate_pairs(&y), 20).unwrap();
        assert_eq!(ranked.len(), 20);
        for w in ranked.entries().windows(2) {
            assert!(w[0].2 >= w[1].2);
        }
    }

    #[test]
    fn candidate_pairs_excludes_positives() {
        let y = store(4, vec![(0, 1), (2, 3)]);
        let cands: Vec<(u32, u32)> = candidate_pairs(&y).collect();
        assert_eq!(cands, vec![(0, 2), (0, 3), (1, 2), (1, 3)]);
    }

    #[test]
    fn top_k_beyond_candidate_count_returns_all() {
        let y = store(4, vec![(0, 1)]);
        let model = model_from(init_factors(4, 2, 9));
        let ranked = rank_candidates(&model, candidate_pairs(&y), 100).unwrap();
        assert_eq!(ranked.len(), 5);
    }
}
