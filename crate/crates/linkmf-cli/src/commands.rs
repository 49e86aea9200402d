//! Implementations of the five subcommands.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use linkmf::data::{load_dataset, Dataset};
use linkmf::eval::{candidate_pairs, cross_validate, rank_candidates};
use linkmf::factor::{train, FactorModel, TrainOptions};
use linkmf::graph::{build_knn, GraphLaplacian, KnnAdjacency};
use linkmf::synth::{generate, write_dataset, SyntheticSpec};
use linkmf::{CvOptions, EntityIndex, Hyperparameters, WeightView};

use crate::config::RunConfig;
use crate::UsageError;

struct Prepared {
    dataset: Dataset,
    lg: Option<GraphLaplacian>,
    lp: Option<GraphLaplacian>,
    /// Config hyperparameters with the coefficient of any absent
    /// similarity source forced to zero.
    hyper: Hyperparameters,
}

fn load_and_build(cfg: &RunConfig, dump_dir: Option<&Path>) -> Result<Prepared> {
    let mut sims: Vec<(String, PathBuf)> = Vec::new();
    if let Some(p) = &cfg.sim_go {
        sims.push(("go".to_string(), p.clone()));
    }
    if let Some(p) = &cfg.sim_ppi {
        sims.push(("ppi".to_string(), p.clone()));
    }
    let dataset = load_dataset(&cfg.interactions, &sims)?;
    println!(
        "loaded {} entities, {} interaction pairs",
        dataset.index.len(),
        dataset.interactions.num_pairs()
    );

    let mut hyper = cfg.hyper.clone();
    let mut lg = None;
    let mut lp = None;
    for loaded in &dataset.similarities {
        let store = &loaded.store;
        let (k, slot) = match store.tag() {
            "go" => (cfg.k1, &mut lg),
            _ => (cfg.k2, &mut lp),
        };
        if loaded.skipped > 0 {
            println!(
                "similarity {}: {} entries, {} skipped (unknown entities)",
                store.tag(),
                store.num_entries(),
                loaded.skipped
            );
        } else {
            println!(
                "similarity {}: {} entries",
                store.tag(),
                store.num_entries()
            );
        }
        let adj = build_knn(store, k)?;
        if let Some(dir) = dump_dir {
            dump_adjacency(
                &adj,
                &dataset.index,
                &dir.join(format!("knn_{}.tsv", store.tag())),
            )?;
        }
        *slot = Some(adj.laplacian());
    }
    if lg.is_none() {
        hyper.alpha = 0.0;
    }
    if lp.is_none() {
        hyper.beta = 0.0;
    }
    Ok(Prepared {
        dataset,
        lg,
        lp,
        hyper,
    })
}

fn dump_adjacency(adj: &KnnAdjacency, index: &EntityIndex, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for (i, j, s) in adj.edges() {
        writeln!(w, "{}\t{}\t{}", index.name(i), index.name(j), s)?;
    }
    w.flush()?;
    Ok(())
}

fn train_options(cfg: &RunConfig) -> TrainOptions {
    TrainOptions {
        block_size: cfg.block_size,
        early_stop: cfg.early_stop,
        log_every: cfg.log_every,
    }
}

fn write_train_log(path: &Path, cfg: &RunConfig, model: &FactorModel) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let h = model.hyper();
    writeln!(w, "# training log")?;
    writeln!(
        w,
        "# d={} lambda={} alpha={} beta={} gamma={} max_iter={} seed={} scheme={}",
        h.d, h.lambda, h.alpha, h.beta, h.gamma, h.max_iter, h.seed, cfg.scheme
    )?;
    for &(iter, loss) in &model.stats().history {
        writeln!(w, "iter {iter} loss {loss}")?;
    }
    writeln!(w, "iterations_run {}", model.stats().iterations_run)?;
    writeln!(w, "initial_loss {}", model.stats().initial_loss)?;
    writeln!(w, "final_loss {}", model.stats().final_loss)?;
    w.flush()?;
    Ok(())
}

pub fn cmd_train(cfg: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.out)
        .with_context(|| format!("cannot create output directory {}", cfg.out.display()))?;
    let prepared = load_and_build(cfg, cfg.dump_knn.then_some(cfg.out.as_path()))?;
    let view = WeightView::new(&prepared.dataset.interactions, cfg.scheme);
    let model = train(
        &view,
        prepared.lg.as_ref(),
        prepared.lp.as_ref(),
        &prepared.hyper,
        &train_options(cfg),
    )?;

    let model_path = cfg.out.join("model.bin");
    model.save(&model_path, Some(&prepared.dataset.index))?;
    write_train_log(&cfg.out.join("train.log"), cfg, &model)?;
    println!(
        "trained {} iterations, loss {} -> {}",
        model.stats().iterations_run,
        model.stats().initial_loss,
        model.stats().final_loss
    );
    println!("model written to {}", model_path.display());
    Ok(())
}

pub fn cmd_cv(cfg: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.out)
        .with_context(|| format!("cannot create output directory {}", cfg.out.display()))?;
    let prepared = load_and_build(cfg, cfg.dump_knn.then_some(cfg.out.as_path()))?;
    let opts = CvOptions {
        n_folds: cfg.n_folds,
        seed: cfg.hyper.seed,
        aupr_mode: cfg.aupr_mode,
        train: train_options(cfg),
    };
    let report = cross_validate(
        &prepared.dataset.interactions,
        cfg.scheme,
        prepared.lg.as_ref(),
        prepared.lp.as_ref(),
        &prepared.hyper,
        &opts,
    )?;

    std::fs::write(cfg.out.join("metrics.kv"), report.to_kv())?;
    if cfg.dump_curves {
        for (idx, fold) in report.folds.iter().enumerate() {
            let path = cfg.out.join(format!("curve_fold_{}.tsv", idx + 1));
            let mut w = BufWriter::new(File::create(&path)?);
            writeln!(w, "# threshold\ttpr\tfpr\tprecision")?;
            for p in &fold.curve {
                writeln!(
                    w,
                    "{}\t{}\t{}\t{}",
                    p.threshold, p.true_positive_rate, p.false_positive_rate, p.precision
                )?;
            }
            w.flush()?;
        }
    }
    let mut text = String::new();
    text.push_str(&format!(
        "{}-fold cross-validation, scheme {}, d={} lambda={} alpha={} beta={} gamma={} \
         max_iter={} seed={}\n",
        cfg.n_folds,
        cfg.scheme,
        prepared.hyper.d,
        prepared.hyper.lambda,
        prepared.hyper.alpha,
        prepared.hyper.beta,
        prepared.hyper.gamma,
        prepared.hyper.max_iter,
        prepared.hyper.seed
    ));
    text.push_str(&report.to_text());
    std::fs::write(cfg.out.join("metrics.txt"), &text)?;

    println!(
        "cv complete: auc {:.4} +/- {:.4}, aupr {:.4} +/- {:.4}",
        report.mean_auc(),
        report.std_auc(),
        report.mean_aupr(),
        report.std_aupr()
    );
    println!("reports written to {}", cfg.out.display());
    Ok(())
}

pub fn cmd_rank(cfg: &RunConfig, model_path: &Path, top_k: usize) -> Result<()> {
    if top_k == 0 {
        bail!(UsageError("--top-k must be at least 1".into()));
    }
    std::fs::create_dir_all(&cfg.out)
        .with_context(|| format!("cannot create output directory {}", cfg.out.display()))?;
    // Ranking needs the entity index and the positive set, not the k-NN
    // graphs; similarity files still participate so the index matches the
    // one the model was trained on.
    let mut sims: Vec<(String, PathBuf)> = Vec::new();
    if let Some(p) = &cfg.sim_go {
        sims.push(("go".to_string(), p.clone()));
    }
    if let Some(p) = &cfg.sim_ppi {
        sims.push(("ppi".to_string(), p.clone()));
    }
    let dataset = load_dataset(&cfg.interactions, &sims)?;
    let index = &dataset.index;
    let loaded = FactorModel::load(model_path)?;
    if loaded.model.m() != index.len() {
        bail!(linkmf::Error::ModelMismatch(format!(
            "model was trained on {} entities but the loaded data has {}",
            loaded.model.m(),
            index.len()
        )));
    }
    if let Some(digest) = loaded.names_digest {
        if digest != index.digest() {
            bail!(linkmf::Error::ModelMismatch(
                "entity names differ from the ones the model was trained on".into()
            ));
        }
    }

    let ranked = rank_candidates(&loaded.model, candidate_pairs(&dataset.interactions), top_k)?;
    let path = cfg.out.join("rankings.tsv");
    let mut w = BufWriter::new(File::create(&path)?);
    for &(i, j, score) in ranked.entries() {
        writeln!(w, "{}\t{}\t{}", index.name(i), index.name(j), score)?;
    }
    w.flush()?;
    println!("{} predictions written to {}", ranked.len(), path.display());
    Ok(())
}

pub fn cmd_synth(spec: &SyntheticSpec, out: &Path) -> Result<()> {
    spec.validate().map_err(|e| UsageError(e.to_string()))?;
    std::fs::create_dir_all(out)
        .with_context(|| format!("cannot create output directory {}", out.display()))?;
    let data = generate(spec)?;
    write_dataset(&data, out)?;
    println!(
        "generated {} entities, {} observed pairs ({} clean positives) into {}",
        spec.m,
        data.interactions.num_pairs(),
        data.clean_positives.len(),
        out.display()
    );
    Ok(())
}

pub fn cmd_inspect(
    interactions: &Path,
    sim_go: Option<&Path>,
    sim_ppi: Option<&Path>,
) -> Result<()> {
    let mut sims: Vec<(String, PathBuf)> = Vec::new();
    if let Some(p) = sim_go {
        sims.push(("go".to_string(), p.to_path_buf()));
    }
    if let Some(p) = sim_ppi {
        sims.push(("ppi".to_string(), p.to_path_buf()));
    }
    let ds = load_dataset(interactions, &sims)?;
    println!("entities {}", ds.index.len());
    let density = ds.interactions.density()?;
    println!(
        "interactions {} density {:.6} sparsity {:.6}",
        ds.interactions.num_pairs(),
        density,
        1.0 - density
    );
    for loaded in &ds.similarities {
        let d = loaded.store.density()?;
        println!(
            "similarity {} entries {} density {:.6} sparsity {:.6} skipped {}",
            loaded.store.tag(),
            loaded.store.num_entries(),
            d,
            1.0 - d,
            loaded.skipped
        );
    }
    Ok(())
}
