//! k-nearest-neighbor adjacency construction and graph Laplacians.
//!
//! The adjacency is directed: row `i` holds the neighbors `i` selected.
//! Symmetrization happens only inside the Laplacian, `L = D - (A + A^T)`
//! with `d_ii = sum_j (a_ij + a_ji)`, so every row of `L` sums to zero and
//! the quadratic form `1/2 tr(U^T L U)` equals the direct neighbor sum
//! `1/2 sum_i sum_{j in N(i)} s_ij ||U_i - U_j||^2`.

use ndarray::{Array2, ArrayView2};

use crate::data::SimilarityStore;
use crate::error::{Error, Result};

/// Directed k-NN adjacency over a similarity source: row `i` holds the (at
/// most) `k` most similar neighbors of `i` with positive similarity.
#[derive(Debug, Clone)]
pub struct KnnAdjacency {
    m: usize,
    k: usize,
    rows: Vec<Vec<(u32, f64)>>,
    tag: String,
}

/// Select the top-k positive-similarity neighbors of every entity.
/// Ties are resolved toward the smaller entity id. Rows with fewer than `k`
/// positive similarities keep all of them; rows with none stay empty.
pub fn build_knn(sim: &SimilarityStore, k: usize) -> Result<KnnAdjacency> {
    let m = sim.m();
    if k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    if k >= m {
        return Err(Error::InvalidInput(format!(
            "k = {k} must be smaller than m = {m} (neighbors exclude self)"
        )));
    }
    let mut rows = Vec::with_capacity(m);
    for i in 0..m {
        let mut candidates: Vec<(u32, f64)> = sim
            .row(i as u32)
            .iter()
            .filter(|&&(_, s)| s > 0.0)
            .copied()
            .collect();
        candidates.sort_unstable_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .expect("similarities are finite")
                .then(a.0.cmp(&b.0))
        });
        candidates.truncate(k);
        candidates.sort_unstable_by_key(|&(j, _)| j);
        rows.push(candidates);
    }
    Ok(KnnAdjacency {
        m,
        k,
        rows,
        tag: sim.tag().to_string(),
    })
}

impl KnnAdjacency {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    /// Neighbors chosen by `i`, sorted by id.
    pub fn row(&self, i: u32) -> &[(u32, f64)] {
        &self.rows[i as usize]
    }

    pub fn num_edges(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// Directed edges (i, j, s_ij) in row order; used by the CLI debug dump.
    pub fn edges(&self) -> impl Iterator<Item = (u32, u32, f64)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().map(move |&(j, s)| (i as u32, j, s)))
    }

    /// Build `L = D - (A + A^T)` from this adjacency.
    pub fn laplacian(&self) -> GraphLaplacian {
        let m = self.m;
        // Accumulate w_ij = a_ij + a_ji on the upper triangle.
        let mut sym: Vec<Vec<(u32, f64)>> = vec![Vec::new(); m];
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, s) in row {
                let (a, b) = if (i as u32) < j {
                    (i as u32, j)
                } else {
                    (j, i as u32)
                };
                sym[a as usize].push((b, s));
            }
        }
        let mut diag = vec![0.0; m];
        let mut off: Vec<Vec<(u32, f64)>> = vec![Vec::new(); m];
        for i in 0..m {
            sym[i].sort_unstable_by_key(|&(j, _)| j);
            let mut merged: Vec<(u32, f64)> = Vec::with_capacity(sym[i].len());
            for &(j, s) in &sym[i] {
                match merged.last_mut() {
                    Some(last) if last.0 == j => last.1 += s,
                    _ => merged.push((j, s)),
                }
            }
            for (j, w) in merged {
                off[i].push((j, w));
                off[j as usize].push((i as u32, w));
            }
        }
        for (i, row) in off.iter_mut().enumerate() {
            row.sort_unstable_by_key(|&(j, _)| j);
            diag[i] = row.iter().map(|&(_, w)| w).sum();
        }
        GraphLaplacian { m, diag, off }
    }
}

/// Symmetric positive semidefinite graph Laplacian stored sparsely:
/// `L_ii = diag[i]`, `L_ij = -w` for each off-diagonal entry `(j, w)`.
#[derive(Debug, Clone)]
pub struct GraphLaplacian {
    m: usize,
    diag: Vec<f64>,
    off: Vec<Vec<(u32, f64)>>,
}

impl GraphLaplacian {
    /// The zero matrix; what an empty adjacency produces.
    pub fn zeros(m: usize) -> Self {
        Self {
            m,
            diag: vec![0.0; m],
            off: vec![Vec::new(); m],
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    /// Off-diagonal weights of row `i`: entries `(j, w)` with `L_ij = -w`.
    pub fn off_diagonal(&self, i: u32) -> &[(u32, f64)] {
        &self.off[i as usize]
    }

    pub fn num_off_diagonal(&self) -> usize {
        self.off.iter().map(Vec::len).sum::<usize>()
    }

    /// Row sum `L_ii + sum_j L_ij`; zero up to rounding by construction.
    pub fn row_sum(&self, i: u32) -> f64 {
        let w: f64 = self.off[i as usize].iter().map(|&(_, w)| w).sum();
        self.diag[i as usize] - w
    }

    /// `out += coeff * L * u`, row by row.
    pub fn scaled_mul_add(&self, u: &ArrayView2<f64>, coeff: f64, out: &mut Array2<f64>) {
        let d = u.ncols();
        for i in 0..self.m {
            let di = self.diag[i];
            if di == 0.0 && self.off[i].is_empty() {
                continue;
            }
            for c in 0..d {
                let mut acc = di * u[[i, c]];
                for &(j, w) in &self.off[i] {
                    acc -= w * u[[j as usize, c]];
                }
                out[[i, c]] += coeff * acc;
            }
        }
    }

    /// `x^T L x` for a vector; used for spot-checking positive
    /// semidefiniteness.
    pub fn vector_quad_form(&self, x: &[f64]) -> f64 {
        let mut total = 0.0;
        for i in 0..self.m {
            let mut acc = self.diag[i] * x[i];
            for &(j, w) in &self.off[i] {
                acc -= w * x[j as usize];
            }
            total += x[i] * acc;
        }
        total
    }

    /// `1/2 tr(U^T L U)` computed via sparse row products.
    pub fn quad_form(&self, u: &ArrayView2<f64>) -> Result<f64> {
        if u.nrows() != self.m {
            return Err(Error::DimensionMismatch(format!(
                "laplacian is {m} x {m} but U has {rows} rows",
                m = self.m,
                rows = u.nrows()
            )));
        }
        let d = u.ncols();
        let mut total = 0.0;
        for i in 0..self.m {
            let di = self.diag[i];
            if di == 0.0 && self.off[i].is_empty() {
                continue;
            }
            for c in 0..d {
                let mut acc = di * u[[i, c]];
                for &(j, w) in &self.off[i] {
                    acc -= w * u[[j as usize, c]];
                }
                total += u[[i, c]] * acc;
            }
        }
        Ok(0.5 * total)
    }
}

/// Direct evaluation of the neighbor-sum form
/// `1/2 sum_i sum_{j in N(i)} s_ij ||U_i - U_j||^2`; the dense counterpart
/// of [`GraphLaplacian::quad_form`], kept for equivalence checks.
pub fn neighbor_sum_quad_form(adj: &KnnAdjacency, u: &ArrayView2<f64>) -> f64 {
    let d = u.ncols();
    let mut total = 0.0;
    for i in 0..adj.m() {
        for &(j, s) in adj.row(i as u32) {
            let mut dist2 = 0.0;
            for c in 0..d {
                let diff = u[[i, c]] - u[[j as usize, c]];
                dist2 += diff * diff;
            }
            total += s * dist2;
        }
    }
    0.5 * total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SimilarityStore;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sim(m: usize, entries: Vec<(u32, u32, f64)>) -> SimilarityStore {
        SimilarityStore::from_entries(m, "test", entries).unwrap()
    }

    #[test]
    fn top_k_selection_by_hand() {
        let s = sim(3, vec![(0, 1, 0.9), (0, 2, 0.4)]);
        let adj = build_knn(&s, 1).unwrap();
        assert_eq!(adj.row(0), &[(1, 0.9)]);
        assert_eq!(adj.row(1), &[(0, 0.9)]);
        assert_eq!(adj.row(2), &[(0, 0.4)]);
    }

    #[test]
    fn ties_break_toward_smaller_id() {
        let s = sim(4, vec![(3, 0, 0.5), (3, 1, 0.5), (3, 2, 0.5)]);
        let adj = build_knn(&s, 2).unwrap();
        assert_eq!(adj.row(3), &[(0, 0.5), (1, 0.5)]);
    }

    #[test]
    fn zero_similarities_never_become_neighbors() {
        let s = sim(3, vec![(0, 1, 0.0), (1, 2, 0.0)]);
        let adj = build_knn(&s, 2).unwrap();
        for i in 0..3 {
            assert!(adj.row(i).is_empty());
        }
        let lap = adj.laplacian();
        assert_eq!(lap.num_off_diagonal(), 0);
        assert!(lap.diagonal().iter().all(|&d| d == 0.0));
    }

    #[test]
    fn k_at_least_m_is_rejected() {
        let s = sim(3, vec![(0, 1, 0.9)]);
        assert!(build_knn(&s, 3).is_err());
        assert!(build_knn(&s, 2).is_ok());
    }

    #[test]
    fn k_of_m_minus_one_keeps_every_positive_neighbor() {
        // Dense similarities with k = m - 1 reproduce the all-neighbors
        // setting.
        let m = 6;
        let mut entries = Vec::new();
        for i in 0..m as u32 {
            for j in (i + 1)..m as u32 {
                entries.push((i, j, 0.1 + (i + j) as f64));
            }
        }
        let s = sim(m, entries);
        let adj = build_knn(&s, m - 1).unwrap();
        for i in 0..m as u32 {
            assert_eq!(adj.row(i).len(), m - 1);
            assert_eq!(adj.row(i), s.row(i));
        }
    }

    #[test]
    fn laplacian_of_single_directed_edge() {
        // A single entry a_01 = 0.5 symmetrizes into both rows.
        let mut rows = vec![Vec::new(); 2];
        rows[0].push((1u32, 0.5));
        let adj = KnnAdjacency {
            m: 2,
            k: 1,
            rows,
            tag: "test".into(),
        };
        let lap = adj.laplacian();
        assert_eq!(lap.diagonal(), &[0.5, 0.5]);
        assert_eq!(lap.off_diagonal(0), &[(1, 0.5)]);
        assert_eq!(lap.off_diagonal(1), &[(0, 0.5)]);
        assert_eq!(lap.row_sum(0), 0.0);
        assert_eq!(lap.row_sum(1), 0.0);
    }

    #[test]
    fn laplacian_of_mutual_edge_doubles_weight() {
        let mut rows = vec![Vec::new(); 3];
        rows[0].push((1u32, 1.0));
        rows[1].push((0u32, 1.0));
        let adj = KnnAdjacency {
            m: 3,
            k: 1,
            rows,
            tag: "test".into(),
        };
        let lap = adj.laplacian();
        assert_eq!(lap.diagonal(), &[2.0, 2.0, 0.0]);
        assert_eq!(lap.off_diagonal(0), &[(1, 2.0)]);
        assert_eq!(lap.off_diagonal(1), &[(0, 2.0)]);
        assert!(lap.off_diagonal(2).is_empty());
    }

    #[test]
    fn quad_form_is_zero_for_constant_rows() {
        let s = sim(4, vec![(0, 1, 0.9), (1, 2, 0.7), (2, 3, 0.2)]);
        let lap = build_knn(&s, 2).unwrap().laplacian();

        let zeros = Array2::<f64>::zeros((4, 3));
        assert_eq!(lap.quad_form(&zeros.view()).unwrap(), 0.0);

        let mut constant = Array2::<f64>::zeros((4, 3));
        constant.fill(1.25);
        let q = lap.quad_form(&constant.view()).unwrap();
        assert!(q.abs() < 1e-12, "constant rows should be annihilated: {q}");
    }

    #[test]
    fn quad_form_dimension_mismatch_is_an_error() {
        let s = sim(3, vec![(0, 1, 0.9)]);
        let lap = build_knn(&s, 1).unwrap().laplacian();
        let u = Array2::<f64>::zeros((4, 2));
        assert!(lap.quad_form(&u.view()).is_err());
    }

    fn random_instance(seed: u64, m: usize, k: usize, d: usize) -> (KnnAdjacency, Array2<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut entries = Vec::new();
        for i in 0..m as u32 {
            for j in (i + 1)..m as u32 {
                if rng.random::<f64>() < 0.6 {
                    entries.push((i, j, rng.random::<f64>()));
                }
            }
        }
        let adj = build_knn(&sim(m, entries), k).unwrap();
        let u = Array2::from_shape_fn((m, d), |_| rng.random::<f64>() * 2.0 - 1.0);
        (adj, u)
    }

    #[test]
    fn quad_form_matches_direct_neighbor_sum() {
        for seed in 0..20 {
            let (adj, u) = random_instance(seed, 10, 3, 4);
            let lap = adj.laplacian();
            let via_laplacian = lap.quad_form(&u.view()).unwrap();
            let direct = neighbor_sum_quad_form(&adj, &u.view());
            let denom = direct.abs().max(1.0);
            assert!(
                (via_laplacian - direct).abs() / denom < 1e-10,
                "seed {seed}: {via_laplacian} vs {direct}"
            );
        }
    }

    #[test]
    fn laplacian_is_positive_semidefinite() {
        let (adj, _) = random_instance(99, 12, 4, 1);
        let lap = adj.laplacian();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let x: Vec<f64> = (0..12).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
            let norm2: f64 = x.iter().map(|v| v * v).sum();
            let q = lap.vector_quad_form(&x);
            assert!(q >= -1e-10 * norm2, "x^T L x = {q} too negative");
        }
    }

    #[test]
    fn row_sums_are_zero() {
        let (adj, _) = random_instance(3, 15, 5, 1);
        let lap = adj.laplacian();
        for i in 0..15 {
            assert!(lap.row_sum(i).abs() < 1e-12);
        }
    }

    #[test]
    fn neighbor_rows_grow_monotonically_in_k() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut entries = Vec::new();
        for i in 0..8u32 {
            for j in (i + 1)..8 {
                entries.push((i, j, rng.random::<f64>()));
            }
        }
        let s = sim(8, entries);
        for k in 1..6 {
            let small = build_knn(&s, k).unwrap();
            let large = build_knn(&s, k + 1).unwrap();
            for i in 0..8u32 {
                for entry in small.row(i) {
                    assert!(
                        large.row(i).contains(entry),
                        "k={k} row {i}: {entry:?} missing at k+1"
                    );
                }
            }
        }
    }
}
