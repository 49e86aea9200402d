//! Planted low-rank instances with known ground truth, for desk-scale
//! validation of training, ranking and the metric stack.
//!
//! True factors are Gaussian; pair probabilities follow the logistic of
//! their dot products; labels are the top quantile by probability with
//! optional flip noise; the two similarity sources are noisy cosine
//! similarities of the true factor rows, sparsified per row.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{EntityIndex, InteractionStore, SimilarityStore};
use crate::error::{Error, Result};
use crate::factor::sigmoid;

/// Per-dimension scale decay of the planted factors. A decaying spectrum
/// concentrates the top probability quantile on a core of well-connected
/// entities; with an isotropic spectrum the positive graph degenerates into
/// a near-matching that no unregularized factorization can recover from.
const FACTOR_DECAY: f64 = 0.5;

/// Parameters of a generated instance.
#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    /// Entity count.
    pub m: usize,
    /// Planted rank of the true factors.
    pub d_true: usize,
    /// Fraction of unordered pairs labeled positive before noise.
    pub positive_rate: f64,
    /// Probability of flipping each label.
    pub noise: f64,
    /// Standard deviation of the perturbation added to cosine similarities.
    pub sim_noise: f64,
    /// Entries kept per row when sparsifying the similarity matrices.
    pub sim_neighbors: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            m: 200,
            d_true: 5,
            positive_rate: 0.01,
            noise: 0.0,
            sim_noise: 0.0,
            sim_neighbors: 20,
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(Error::InvalidInput(format!(
                "m = {} is too small to form pairs",
                self.m
            )));
        }
        if self.d_true == 0 {
            return Err(Error::InvalidInput("d_true must be at least 1".into()));
        }
        if !(self.positive_rate > 0.0 && self.positive_rate < 1.0) {
            return Err(Error::InvalidInput(format!(
                "positive_rate must lie strictly between 0 and 1, got {}",
                self.positive_rate
            )));
        }
        if !(0.0..0.5).contains(&self.noise) {
            return Err(Error::InvalidInput(format!(
                "noise must lie in [0, 0.5), got {}",
                self.noise
            )));
        }
        if self.sim_noise < 0.0 || !self.sim_noise.is_finite() {
            return Err(Error::InvalidInput(format!(
                "sim_noise must be finite and nonnegative, got {}",
                self.sim_noise
            )));
        }
        if self.sim_neighbors == 0 || self.sim_neighbors >= self.m {
            return Err(Error::InvalidInput(format!(
                "sim_neighbors must lie in [1, m), got {}",
                self.sim_neighbors
            )));
        }
        Ok(())
    }
}

/// A generated instance: stores ready for training plus the clean ground
/// truth for oracle checks.
#[derive(Debug)]
pub struct SyntheticData {
    pub index: EntityIndex,
    pub interactions: InteractionStore,
    pub sim_a: SimilarityStore,
    pub sim_b: SimilarityStore,
    /// Positive pairs before noise, canonical order.
    pub clean_positives: Vec<(u32, u32)>,
    /// The planted factors; pair probabilities are the logistic of their
    /// row dot products.
    pub true_factors: Array2<f64>,
    /// Probability cutoff that realized `positive_rate`.
    pub threshold: f64,
}

impl SyntheticData {
    /// Probability of a pair under the planted model.
    pub fn true_probability(&self, i: u32, j: u32) -> f64 {
        let vi = self.true_factors.row(i as usize);
        let vj = self.true_factors.row(j as usize);
        sigmoid(vi.dot(&vj))
    }
}

fn cosine(v: &Array2<f64>, i: usize, j: usize) -> f64 {
    let a = v.row(i);
    let b = v.row(j);
    let dot = a.dot(&b);
    let na = a.dot(&a).sqrt();
    let nb = b.dot(&b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na * nb)
}

/// Build one similarity source: cosine of true factor rows plus Gaussian
/// perturbation, keeping the strongest `keep` positive entries per row.
fn similarity_source(
    v: &Array2<f64>,
    tag: &str,
    sim_noise: f64,
    keep: usize,
    rng: &mut ChaCha8Rng,
) -> Result<SimilarityStore> {
    let m = v.nrows();
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    // Dense perturbed cosine, upper triangle.
    let mut perturbed = vec![0.0f64; m * m];
    for i in 0..m {
        for j in (i + 1)..m {
            let mut s = cosine(v, i, j);
            if sim_noise > 0.0 {
                s += sim_noise * noise.sample(rng);
            }
            perturbed[i * m + j] = s;
            perturbed[j * m + i] = s;
        }
    }
    let mut entries = Vec::new();
    for i in 0..m {
        let mut row: Vec<(u32, f64)> = (0..m)
            .filter(|&j| j != i)
            .map(|j| (j as u32, perturbed[i * m + j]))
            .filter(|&(_, s)| s > 0.0)
            .collect();
        row.sort_unstable_by(|a, b| b.1.partial_cmp(&a.1).expect("finite").then(a.0.cmp(&b.0)));
        row.truncate(keep);
        for (j, s) in row {
            entries.push((i as u32, j, s));
        }
    }
    SimilarityStore::from_entries(m, tag, entries)
}

/// Generate a planted instance. Deterministic given the parameters.
pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let m = spec.m;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut v = Array2::from_shape_fn((m, spec.d_true), |_| normal.sample(&mut rng));
    for k in 0..spec.d_true {
        let scale = FACTOR_DECAY.powi(k as i32);
        v.column_mut(k).mapv_inplace(|x| x * scale);
    }

    // Rank all pairs by true probability and take the top quantile.
    let n_pairs = m * (m - 1) / 2;
    let n_pos = (spec.positive_rate * n_pairs as f64).round() as usize;
    if n_pos == 0 || n_pos >= n_pairs {
        return Err(Error::InvalidInput(format!(
            "positive_rate {} yields {n_pos} positives out of {n_pairs} pairs",
            spec.positive_rate
        )));
    }
    let mut scored: Vec<(u32, u32, f64)> = Vec::with_capacity(n_pairs);
    for i in 0..m as u32 {
        for j in (i + 1)..m as u32 {
            let p = sigmoid(v.row(i as usize).dot(&v.row(j as usize)));
            scored.push((i, j, p));
        }
    }
    scored.sort_unstable_by(|a, b| {
        b.2.partial_cmp(&a.2)
            .expect("finite probabilities")
            .then((a.0, a.1).cmp(&(b.0, b.1)))
    });
    let threshold = scored[n_pos - 1].2;
    let mut clean_positives: Vec<(u32, u32)> =
        scored[..n_pos].iter().map(|&(i, j, _)| (i, j)).collect();
    clean_positives.sort_unstable();
    let clean_set: std::collections::HashSet<(u32, u32)> =
        clean_positives.iter().copied().collect();

    // Flip noise, then attach confidences to the observed positives.
    let mut observed: Vec<(u32, u32, f64)> = Vec::new();
    for i in 0..m as u32 {
        for j in (i + 1)..m as u32 {
            let mut label = clean_set.contains(&(i, j));
            if spec.noise > 0.0 && rng.random::<f64>() < spec.noise {
                label = !label;
            }
            if label {
                let eps = 0.25 + 0.75 * rng.random::<f64>();
                observed.push((i, j, eps));
            }
        }
    }
    let interactions = InteractionStore::from_pairs(m, observed)?;

    let sim_a = similarity_source(&v, "sim_a", spec.sim_noise, spec.sim_neighbors, &mut rng)?;
    let sim_b = similarity_source(&v, "sim_b", spec.sim_noise, spec.sim_neighbors, &mut rng)?;

    let width = (m - 1).to_string().len();
    let index = EntityIndex::from_names((0..m).map(|i| format!("g{i:0width$}")));

    Ok(SyntheticData {
        index,
        interactions,
        sim_a,
        sim_b,
        clean_positives,
        true_factors: v,
        threshold,
    })
}

/// File names produced by [`write_dataset`].
pub const DATASET_FILES: [&str; 4] = ["interactions.tsv", "sim_a.tsv", "sim_b.tsv", "truth.tsv"];

/// Write the instance in the standard triplet formats: interactions with
/// confidences, both similarity sources, and the clean positives (before
/// noise) as a ground-truth file.
pub fn write_dataset(data: &SyntheticData, dir: &std::path::Path) -> Result<()> {
    use std::io::Write;
    crate::data::write_interactions(
        &dir.join("interactions.tsv"),
        &data.index,
        &data.interactions,
    )?;
    crate::data::write_similarity(&dir.join("sim_a.tsv"), &data.index, &data.sim_a)?;
    crate::data::write_similarity(&dir.join("sim_b.tsv"), &data.index, &data.sim_b)?;
    let truth_path = dir.join("truth.tsv");
    let file = std::fs::File::create(&truth_path).map_err(|source| Error::Io {
        path: truth_path.clone(),
        source,
    })?;
    let mut w = std::io::BufWriter::new(file);
    let io_err = |source| Error::Io {
        path: truth_path.clone(),
        source,
    };
    for &(i, j) in &data.clean_positives {
        writeln!(w, "{}\t{}\t1", data.index.name(i), data.index.name(j)).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::auc;

    #[test]
    fn generation_is_deterministic() {
        let spec = SyntheticSpec {
            m: 60,
            ..Default::default()
        };
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a.interactions.pairs(), b.interactions.pairs());
        assert_eq!(a.sim_a.entries(), b.sim_a.entries());
        assert_eq!(a.sim_b.entries(), b.sim_b.entries());
        assert_eq!(a.clean_positives, b.clean_positives);
        assert_eq!(a.true_factors, b.true_factors);
    }

    #[test]
    fn positive_rate_is_hit_exactly_without_noise() {
        let spec = SyntheticSpec {
            m: 200,
            positive_rate: 0.001,
            ..Default::default()
        };
        let data = generate(&spec).unwrap();
        // 19900 pairs * 0.001 rounds to 20.
        assert_eq!(data.interactions.num_pairs(), 20);
        assert_eq!(data.clean_positives.len(), 20);
        let sparsity = 1.0 - data.interactions.density().unwrap();
        assert!(sparsity > 0.998);
    }

    #[test]
    fn infeasible_positive_rate_is_rejected() {
        for rate in [0.0, 1.0, -0.5, 1e-9] {
            let spec = SyntheticSpec {
                m: 50,
                positive_rate: rate,
                ..Default::default()
            };
            assert!(generate(&spec).is_err(), "rate {rate} should fail");
        }
    }

    #[test]
    fn generated_store_satisfies_data_invariants() {
        let spec = SyntheticSpec {
            m: 80,
            positive_rate: 0.05,
            noise: 0.1,
            sim_noise: 0.1,
            ..Default::default()
        };
        let data = generate(&spec).unwrap();
        for &(i, j, eps) in data.interactions.pairs() {
            assert!(i < j);
            assert!(eps > 0.0);
            assert!(data.interactions.is_positive(j, i));
        }
        assert_eq!(data.index.len(), 80);
        // Names sort in id order.
        for id in 0..80u32 {
            assert_eq!(data.index.id(data.index.name(id)), Some(id));
        }
        for &(i, j, s) in data.sim_a.entries() {
            assert!(i < j);
            assert!(s > 0.0);
        }
    }

    #[test]
    fn true_probabilities_perfectly_rank_clean_labels() {
        let spec = SyntheticSpec {
            m: 100,
            positive_rate: 0.02,
            ..Default::default()
        };
        let data = generate(&spec).unwrap();
        let clean: std::collections::HashSet<(u32, u32)> =
            data.clean_positives.iter().copied().collect();
        let mut scores = Vec::new();
        let mut labels = Vec::new();
        for i in 0..100u32 {
            for j in (i + 1)..100 {
                scores.push(data.true_probability(i, j));
                labels.push(clean.contains(&(i, j)));
            }
        }
        let bayes_auc = auc(&scores, &labels).unwrap();
        assert!(
            bayes_auc >= 1.0 - 1e-12,
            "thresholded labels must be perfectly ranked by the planted scores, got {bayes_auc}"
        );
    }
}
