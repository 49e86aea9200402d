//! The numerical core: pair probabilities, the importance-weighted logistic
//! loss with dual Laplacian regularization, its matrix gradient, and the
//! AdaGrad training loop.
//!
//! The loss over latent factors `U` (m x d) is
//!
//! ```text
//!   1/2 sum_{i,j} w_ij [ln(1 + exp(U_i . U_j)) - y_ij U_i . U_j]
//!     + lambda/2 ||U||_F^2 + alpha/2 tr(U^T L_g U) + beta/2 tr(U^T L_p U)
//! ```
//!
//! and its gradient is `[W .* (P - Y) + lambda I + alpha L_g + beta L_p] U`
//! where `P` is the pair probability matrix. The `W .* (P - Y)` term is
//! evaluated lazily in row blocks: unknown pairs contribute `p_ij`, known
//! pairs `c_ij (p_ij - 1)`, the diagonal nothing. The dense m x m
//! probability matrix is never materialized beyond one row block.

use std::path::Path;

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::data::EntityIndex;
use crate::error::{Error, Result};
use crate::graph::GraphLaplacian;
use crate::weights::WeightView;

/// Rows per block in the dense-pair sweeps.
pub const DEFAULT_BLOCK_SIZE: usize = 512;

/// Numerically stable logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable `ln(1 + exp(z))`; never exponentiates a large
/// positive argument.
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Interaction probability of two latent vectors: the logistic of their dot
/// product.
pub fn probability(ui: &[f64], uj: &[f64]) -> f64 {
    debug_assert_eq!(ui.len(), uj.len());
    let dot: f64 = ui.iter().zip(uj).map(|(a, b)| a * b).sum();
    sigmoid(dot)
}

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparameters {
    /// Latent dimensionality.
    pub d: usize,
    /// L2 coefficient (inverse prior variance).
    pub lambda: f64,
    /// Coefficient of the first (GO-slot) Laplacian.
    pub alpha: f64,
    /// Coefficient of the second (PPI-slot) Laplacian.
    pub beta: f64,
    /// Learning rate.
    pub gamma: f64,
    /// Number of gradient iterations.
    pub max_iter: usize,
    /// Seed for factor initialization.
    pub seed: u64,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            d: 50,
            lambda: 0.01,
            alpha: 1.0,
            beta: 10.0,
            gamma: 0.03125,
            max_iter: 1000,
            seed: 42,
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::InvalidInput("d must be at least 1".into()));
        }
        for (name, v) in [
            ("lambda", self.lambda),
            ("alpha", self.alpha),
            ("beta", self.beta),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "{name} must be finite and nonnegative, got {v}"
                )));
            }
        }
        if !self.gamma.is_finite() || self.gamma <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "gamma must be positive and finite, got {}",
                self.gamma
            )));
        }
        Ok(())
    }
}

/// Knobs of the training loop that are not model hyperparameters.
#[derive(Debug, Clone)]
pub struct TrainOptions {
    /// Rows per block in the gradient and loss sweeps.
    pub block_size: usize,
    /// Optional early stop on relative gradient norm ||Z||_F / ||U||_F.
    /// Off by default: the reference procedure is a fixed-count loop.
    pub early_stop: Option<f64>,
    /// Record the loss every this many iterations (0 = only at the ends).
    pub log_every: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            block_size: DEFAULT_BLOCK_SIZE,
            early_stop: None,
            log_every: 0,
        }
    }
}

/// Outcome metadata of a training run.
#[derive(Debug, Clone, Default)]
pub struct TrainStats {
    pub iterations_run: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    /// (iteration, loss) samples at the configured cadence.
    pub history: Vec<(usize, f64)>,
}

/// Learned latent factors plus the hyperparameters that produced them.
#[derive(Debug, Clone)]
pub struct FactorModel {
    u: Array2<f64>,
    hyper: Hyperparameters,
    stats: TrainStats,
}

impl FactorModel {
    /// Wrap an existing factor matrix; rejects non-finite entries.
    pub fn from_matrix(u: Array2<f64>, hyper: Hyperparameters, stats: TrainStats) -> Result<Self> {
        if u.ncols() != hyper.d {
            return Err(Error::DimensionMismatch(format!(
                "factor matrix has {} columns but d = {}",
                u.ncols(),
                hyper.d
            )));
        }
        if let Some(bad) = u.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("factor matrix entry {bad}")));
        }
        Ok(Self { u, hyper, stats })
    }

    pub fn u(&self) -> ArrayView2<'_, f64> {
        self.u.view()
    }

    pub fn m(&self) -> usize {
        self.u.nrows()
    }

    pub fn d(&self) -> usize {
        self.u.ncols()
    }

    pub fn hyper(&self) -> &Hyperparameters {
        &self.hyper
    }

    pub fn stats(&self) -> &TrainStats {
        &self.stats
    }

    /// Predicted interaction probability for a pair of entities.
    /// Symmetric in (i, j); the diagonal is undefined.
    pub fn score(&self, i: u32, j: u32) -> Result<f64> {
        if i == j {
            return Err(Error::InvalidInput(format!(
                "score of a self-pair ({i}, {i}) is undefined"
            )));
        }
        let m = self.m() as u32;
        if i >= m || j >= m {
            return Err(Error::InvalidInput(format!(
                "pair ({i}, {j}) out of range for m = {m}"
            )));
        }
        let ui = self.u.row(i as usize);
        let uj = self.u.row(j as usize);
        Ok(probability(
            ui.as_slice().expect("row-major factors"),
            uj.as_slice().expect("row-major factors"),
        ))
    }

    /// Persist the model as a versioned text file; all floats are written
    /// in shortest-round-trip form so reloading is lossless.
    pub fn save(&self, path: &Path, index: Option<&EntityIndex>) -> Result<()> {
        use std::io::Write;
        let file = std::fs::File::create(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut w = std::io::BufWriter::new(file);
        let res = (|| -> std::io::Result<()> {
            writeln!(w, "linkmf-model 1")?;
            writeln!(w, "m {}", self.m())?;
            writeln!(w, "d {}", self.hyper.d)?;
            writeln!(w, "seed {}", self.hyper.seed)?;
            writeln!(w, "lambda {}", self.hyper.lambda)?;
            writeln!(w, "alpha {}", self.hyper.alpha)?;
            writeln!(w, "beta {}", self.hyper.beta)?;
            writeln!(w, "gamma {}", self.hyper.gamma)?;
            writeln!(w, "max_iter {}", self.hyper.max_iter)?;
            writeln!(w, "iterations_run {}", self.stats.iterations_run)?;
            writeln!(w, "initial_loss {}", self.stats.initial_loss)?;
            writeln!(w, "final_loss {}", self.stats.final_loss)?;
            if let Some(index) = index {
                writeln!(w, "names_digest {:016x}", index.digest())?;
            }
            writeln!(w, "matrix")?;
            for row in self.u.rows() {
                let mut first = true;
                for v in row {
                    if !first {
                        write!(w, " ")?;
                    }
                    write!(w, "{v}")?;
                    first = false;
                }
                writeln!(w)?;
            }
            w.flush()
        })();
        res.map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Load a model saved by [`FactorModel::save`].
    pub fn load(path: &Path) -> Result<LoadedModel> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let fmt_err = |msg: String| Error::ModelFormat {
            path: path.to_path_buf(),
            msg,
        };
        let mut lines = text.lines();
        match lines.next() {
            Some("linkmf-model 1") => {}
            other => {
                return Err(fmt_err(format!(
                    "unsupported header {:?} (expected 'linkmf-model 1')",
                    other.unwrap_or("")
                )))
            }
        }
        let mut m = None;
        let mut hyper = Hyperparameters::default();
        let mut stats = TrainStats::default();
        let mut names_digest = None;
        loop {
            let line = lines
                .next()
                .ok_or_else(|| fmt_err("missing 'matrix' section".into()))?;
            if line == "matrix" {
                break;
            }
            let (key, value) = line
                .split_once(' ')
                .ok_or_else(|| fmt_err(format!("malformed header line '{line}'")))?;
            let parse_f = || {
                value
                    .parse::<f64>()
                    .map_err(|_| fmt_err(format!("bad value for {key}: '{value}'")))
            };
            let parse_u = || {
                value
                    .parse::<usize>()
                    .map_err(|_| fmt_err(format!("bad value for {key}: '{value}'")))
            };
            match key {
                "m" => m = Some(parse_u()?),
                "d" => hyper.d = parse_u()?,
                "seed" => {
                    hyper.seed = value
                        .parse::<u64>()
                        .map_err(|_| fmt_err(format!("bad value for seed: '{value}'")))?
                }
                "lambda" => hyper.lambda = parse_f()?,
                "alpha" => hyper.alpha = parse_f()?,
                "beta" => hyper.beta = parse_f()?,
                "gamma" => hyper.gamma = parse_f()?,
                "max_iter" => hyper.max_iter = parse_u()?,
                "iterations_run" => stats.iterations_run = parse_u()?,
                "initial_loss" => stats.initial_loss = parse_f()?,
                "final_loss" => stats.final_loss = parse_f()?,
                "names_digest" => {
                    names_digest = Some(
                        u64::from_str_radix(value, 16)
                            .map_err(|_| fmt_err(format!("bad names_digest '{value}'")))?,
                    )
                }
                other => return Err(fmt_err(format!("unknown header key '{other}'"))),
            }
        }
        let m = m.ok_or_else(|| fmt_err("missing m".into()))?;
        let mut u = Array2::<f64>::zeros((m, hyper.d));
        for i in 0..m {
            let line = lines
                .next()
                .ok_or_else(|| fmt_err(format!("matrix truncated at row {i}")))?;
            let mut count = 0;
            for (c, field) in line.split_whitespace().enumerate() {
                if c >= hyper.d {
                    return Err(fmt_err(format!(
                        "row {i} has more than d = {} values",
                        hyper.d
                    )));
                }
                u[[i, c]] = field
                    .parse::<f64>()
                    .map_err(|_| fmt_err(format!("bad matrix value '{field}' in row {i}")))?;
                count += 1;
            }
            if count != hyper.d {
                return Err(fmt_err(format!(
                    "row {i} has {count} values, expected {}",
                    hyper.d
                )));
            }
        }
        let model = FactorModel::from_matrix(u, hyper, stats)?;
        Ok(LoadedModel {
            model,
            names_digest,
        })
    }
}

/// A model read back from disk, with the digest of the entity index it was
/// trained against when one was recorded.
#[derive(Debug)]
pub struct LoadedModel {
    pub model: FactorModel,
    pub names_digest: Option<u64>,
}

fn check_dims(
    u: &ArrayView2<f64>,
    w: &WeightView<'_>,
    lg: Option<&GraphLaplacian>,
    lp: Option<&GraphLaplacian>,
    h: &Hyperparameters,
) -> Result<()> {
    let m = w.store().m();
    if u.nrows() != m {
        return Err(Error::DimensionMismatch(format!(
            "U has {} rows but the interaction store has m = {m}",
            u.nrows()
        )));
    }
    if u.ncols() != h.d {
        return Err(Error::DimensionMismatch(format!(
            "U has {} columns but d = {}",
            u.ncols(),
            h.d
        )));
    }
    for (name, lap) in [("first", lg), ("second", lp)] {
        if let Some(lap) = lap {
            if lap.m() != m {
                return Err(Error::DimensionMismatch(format!(
                    "{name} laplacian is {lm} x {lm} but m = {m}",
                    lm = lap.m()
                )));
            }
        }
    }
    Ok(())
}

fn block_ranges(m: usize, block_size: usize) -> Vec<(usize, usize)> {
    let bs = block_size.max(1);
    (0..m.div_ceil(bs))
        .map(|b| (b * bs, ((b + 1) * bs).min(m)))
        .collect()
}

/// Full objective value at `U`. Runs over the complete pair grid in row
/// blocks; errors if the total is not finite.
pub fn loss(
    u: &ArrayView2<f64>,
    w: &WeightView<'_>,
    lg: Option<&GraphLaplacian>,
    lp: Option<&GraphLaplacian>,
    h: &Hyperparameters,
    block_size: usize,
) -> Result<f64> {
    check_dims(u, w, lg, lp, h)?;
    let store = w.store();
    let scheme = w.scheme();
    let m = store.m();

    // S_all = sum over ordered pairs i != j of softplus(U_i . U_j), as if
    // every off-diagonal pair were unknown.
    let blocks = block_ranges(m, block_size);
    let partials: Vec<f64> = blocks
        .par_iter()
        .map(|&(b0, b1)| {
            let ub = u.slice(s![b0..b1, ..]);
            let zb = ub.dot(&u.t());
            let mut acc = 0.0;
            for (r, row) in zb.rows().into_iter().enumerate() {
                for &z in row {
                    acc += softplus(z);
                }
                acc -= softplus(zb[[r, b0 + r]]);
            }
            acc
        })
        .collect();
    let s_all: f64 = partials.iter().sum();

    // Correct the known pairs from weight 1/label 0 to weight c_ij/label 1.
    // Each unordered pair appears twice in the ordered grid, cancelling the
    // global 1/2.
    let mut correction = 0.0;
    for &(i, j, eps) in store.pairs() {
        let ui = u.row(i as usize);
        let uj = u.row(j as usize);
        let z = ui.dot(&uj);
        let sp = softplus(z);
        let c = scheme.positive_weight(eps);
        correction += c * (sp - z) - sp;
    }

    let mut total = 0.5 * s_all + correction;
    if h.lambda > 0.0 {
        let frob2: f64 = u.iter().map(|v| v * v).sum();
        total += 0.5 * h.lambda * frob2;
    }
    if h.alpha > 0.0 {
        if let Some(lg) = lg {
            total += h.alpha * lg.quad_form(u)?;
        }
    }
    if h.beta > 0.0 {
        if let Some(lp) = lp {
            total += h.beta * lp.quad_form(u)?;
        }
    }
    if !total.is_finite() {
        return Err(Error::NonFinite(format!("loss evaluated to {total}")));
    }
    Ok(total)
}

/// Gradient of the objective with respect to `U`:
/// `[W .* (P - Y) + lambda I + alpha L_g + beta L_p] U`.
pub fn gradient(
    u: &ArrayView2<f64>,
    w: &WeightView<'_>,
    lg: Option<&GraphLaplacian>,
    lp: Option<&GraphLaplacian>,
    h: &Hyperparameters,
    block_size: usize,
) -> Result<Array2<f64>> {
    check_dims(u, w, lg, lp, h)?;
    let store = w.store();
    let scheme = w.scheme();
    let m = store.m();
    let d = h.d;

    let mut grad = Array2::<f64>::zeros((m, d));
    let blocks = block_ranges(m, block_size);
    grad.axis_chunks_iter_mut(Axis(0), block_size.max(1))
        .into_par_iter()
        .zip(blocks.par_iter())
        .for_each(|(mut gb, &(b0, b1))| {
            let ub = u.slice(s![b0..b1, ..]);
            // Probabilities of this row block against every entity.
            let mut pb = ub.dot(&u.t());
            pb.mapv_inplace(sigmoid);
            // Unknown-pair default: every j != i contributes p_ij * U_j.
            gb.assign(&pb.dot(u));
            for (r, i) in (b0..b1).enumerate() {
                // Remove the diagonal term the dense product added.
                let pii = pb[[r, i]];
                // Known pairs: replace p_ij by c_ij (p_ij - 1).
                let mut row = gb.row_mut(r);
                for c in 0..d {
                    row[c] -= pii * u[[i, c]];
                }
                for &(j, eps) in store.row(i as u32) {
                    let p = pb[[r, j as usize]];
                    let factor = scheme.positive_weight(eps) * (p - 1.0) - p;
                    for c in 0..d {
                        row[c] += factor * u[[j as usize, c]];
                    }
                }
            }
        });

    if h.lambda > 0.0 {
        grad.scaled_add(h.lambda, u);
    }
    if h.alpha > 0.0 {
        if let Some(lg) = lg {
            lg.scaled_mul_add(u, h.alpha, &mut grad);
        }
    }
    if h.beta > 0.0 {
        if let Some(lp) = lp {
            lp.scaled_mul_add(u, h.beta, &mut grad);
        }
    }

    if let Some(bad) = grad.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("gradient entry {bad}")));
    }
    Ok(grad)
}

/// Draw the initial factor matrix: zero-mean Gaussian entries with standard
/// deviation `1/sqrt(d)`, filled in row-major order from a seeded stream.
pub fn init_factors(m: usize, d: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0 / (d as f64).sqrt()).expect("valid std");
    Array2::from_shape_fn((m, d), |_| normal.sample(&mut rng))
}

/// Mutable optimizer state: current factors, the entrywise nondecreasing
/// accumulator of squared gradients, and the iteration counter.
struct TrainerState {
    u: Array2<f64>,
    phi: Array2<f64>,
    iter: usize,
}

impl TrainerState {
    fn new(m: usize, d: usize, seed: u64) -> Self {
        Self {
            u: init_factors(m, d, seed),
            phi: Array2::zeros((m, d)),
            iter: 0,
        }
    }

    /// One AdaGrad step. Coordinates whose accumulator is still zero have
    /// seen only zero gradients and are left untouched. Returns the squared
    /// Frobenius norms of the gradient and of the pre-update factors.
    fn step(&mut self, z: &Array2<f64>, gamma: f64) -> (f64, f64) {
        let mut znorm2 = 0.0;
        let mut unorm2 = 0.0;
        for ((uv, pv), &zv) in self.u.iter_mut().zip(self.phi.iter_mut()).zip(z.iter()) {
            znorm2 += zv * zv;
            unorm2 += *uv * *uv;
            *pv += zv * zv;
            if *pv > 0.0 {
                *uv -= gamma * zv / pv.sqrt();
            }
        }
        self.iter += 1;
        (znorm2, unorm2)
    }
}

/// Run the AdaGrad loop: per coordinate, accumulate squared gradients and
/// divide the step by their square root, skipping coordinates whose
/// accumulator is still zero. Deterministic given the seed.
pub fn train(
    w: &WeightView<'_>,
    lg: Option<&GraphLaplacian>,
    lp: Option<&GraphLaplacian>,
    h: &Hyperparameters,
    opts: &TrainOptions,
) -> Result<FactorModel> {
    h.validate()?;
    let m = w.store().m();
    let mut state = TrainerState::new(m, h.d, h.seed);
    check_dims(&state.u.view(), w, lg, lp, h)?;

    let diverged = |iteration: usize| {
        move |e: Error| match e {
            Error::NonFinite(detail) => Error::Diverged { iteration, detail },
            other => other,
        }
    };

    let mut history = Vec::new();
    let initial_loss = loss(&state.u.view(), w, lg, lp, h, opts.block_size)?;
    if opts.log_every > 0 {
        history.push((0, initial_loss));
    }

    for iter in 1..=h.max_iter {
        let z = gradient(&state.u.view(), w, lg, lp, h, opts.block_size)
            .map_err(diverged(iter))?;
        let (znorm2, unorm2) = state.step(&z, h.gamma);

        if opts.log_every > 0 && iter % opts.log_every == 0 {
            let l = loss(&state.u.view(), w, lg, lp, h, opts.block_size)
                .map_err(diverged(iter))?;
            history.push((iter, l));
        }
        if let Some(tol) = opts.early_stop {
            if znorm2.sqrt() < tol * unorm2.sqrt().max(1e-12) {
                break;
            }
        }
    }

    let final_loss = if state.iter == 0 {
        initial_loss
    } else {
        loss(&state.u.view(), w, lg, lp, h, opts.block_size).map_err(diverged(state.iter))?
    };

    FactorModel::from_matrix(
        state.u,
        h.clone(),
        TrainStats {
            iterations_run: state.iter,
            initial_loss,
            final_loss,
            history,
        },
    )
}
