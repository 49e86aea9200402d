//! Entity indexing and the sparse symmetric stores consumed by every other
//! module.
//!
//! File format: whitespace- or tab-separated triplets `name_a name_b value`,
//! one per line. Blank lines and lines starting with `#` are ignored. Names
//! are UTF-8 without internal whitespace. The value column is a nonnegative
//! confidence for interaction files (optional, default 1.0) and a required
//! nonnegative score for similarity files.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Bidirectional map between entity names and dense ids `0..m`.
///
/// Ids are assigned by lexicographic name order, so the same input files
/// always produce the same index.
#[derive(Debug, Clone)]
pub struct EntityIndex {
    names: Vec<String>,
    ids: HashMap<String, u32>,
}

impl EntityIndex {
    /// Build an index from a collection of names. Duplicates are collapsed
    /// and names are sorted before id assignment.
    pub fn from_names<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut names: Vec<String> = names.into_iter().map(Into::into).collect();
        names.sort_unstable();
        names.dedup();
        let ids = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i as u32))
            .collect();
        Self { names, ids }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<u32> {
        self.ids.get(name).copied()
    }

    pub fn name(&self, id: u32) -> &str {
        &self.names[id as usize]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// FNV-1a digest over the ordered name list; used to detect
    /// model/index mismatches without storing every name in a model file.
    pub fn digest(&self) -> u64 {
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        for name in &self.names {
            for &b in name.as_bytes() {
                hash ^= u64::from(b);
                hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
            }
            hash ^= 0xff;
            hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        }
        hash
    }
}

/// Sparse symmetric binary interaction matrix with per-pair confidences.
///
/// Each unordered pair is stored once with `i < j`; queries are symmetric.
#[derive(Debug, Clone)]
pub struct InteractionStore {
    m: usize,
    pairs: Vec<(u32, u32, f64)>,
    rows: Vec<Vec<(u32, f64)>>,
}

impl InteractionStore {
    /// Build a store from (i, j, confidence) triples. Pairs are
    /// canonicalized to `i < j`; duplicates (either orientation) are
    /// collapsed keeping the maximum confidence.
    pub fn from_pairs<I>(m: usize, pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (u32, u32, f64)>,
    {
        let mut canon: Vec<(u32, u32, f64)> = Vec::new();
        for (a, b, eps) in pairs {
            if a == b {
                return Err(Error::InvalidInput(format!("self-pair ({a}, {a})")));
            }
            if (a as usize) >= m || (b as usize) >= m {
                return Err(Error::InvalidInput(format!(
                    "pair ({a}, {b}) out of range for m = {m}"
                )));
            }
            if !eps.is_finite() || eps < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "confidence {eps} for pair ({a}, {b}) must be finite and nonnegative"
                )));
            }
            let (i, j) = if a < b { (a, b) } else { (b, a) };
            canon.push((i, j, eps));
        }
        canon.sort_unstable_by_key(|&(i, j, _)| (i, j));
        let mut pairs: Vec<(u32, u32, f64)> = Vec::with_capacity(canon.len());
        for (i, j, eps) in canon {
            match pairs.last_mut() {
                Some(last) if last.0 == i && last.1 == j => last.2 = last.2.max(eps),
                _ => pairs.push((i, j, eps)),
            }
        }
        let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); m];
        for &(i, j, eps) in &pairs {
            rows[i as usize].push((j, eps));
            rows[j as usize].push((i, eps));
        }
        for row in &mut rows {
            row.sort_unstable_by_key(|&(j, _)| j);
        }
        Ok(Self { m, pairs, rows })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn num_pairs(&self) -> usize {
        self.pairs.len()
    }

    /// Stored pairs in canonical `i < j`, sorted order.
    pub fn pairs(&self) -> &[(u32, u32, f64)] {
        &self.pairs
    }

    /// Positive neighbors of `i` (both orientations), sorted by id.
    pub fn row(&self, i: u32) -> &[(u32, f64)] {
        &self.rows[i as usize]
    }

    /// y(i, j); symmetric, false on the diagonal.
    pub fn is_positive(&self, i: u32, j: u32) -> bool {
        self.confidence(i, j).is_some()
    }

    /// Confidence of a stored pair, None for unknown pairs and the diagonal.
    pub fn confidence(&self, i: u32, j: u32) -> Option<f64> {
        if i == j {
            return None;
        }
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        self.pairs
            .binary_search_by(|&(a, b, _)| (a, b).cmp(&(i, j)))
            .ok()
            .map(|idx| self.pairs[idx].2)
    }

    /// Fraction of unordered off-diagonal pairs that are stored.
    pub fn density(&self) -> Result<f64> {
        density(self.m, self.pairs.len())
    }

    /// Copy of this store without the given (unordered) pairs; used by the
    /// cross-validation harness to blind test folds.
    pub fn without_pairs(&self, drop: &std::collections::HashSet<(u32, u32)>) -> Result<Self> {
        let kept = self
            .pairs
            .iter()
            .filter(|&&(i, j, _)| !drop.contains(&(i, j)))
            .copied();
        Self::from_pairs(self.m, kept)
    }
}

/// Sparse symmetric matrix of nonnegative pairwise similarities.
#[derive(Debug, Clone)]
pub struct SimilarityStore {
    m: usize,
    tag: String,
    entries: Vec<(u32, u32, f64)>,
    rows: Vec<Vec<(u32, f64)>>,
}

impl SimilarityStore {
    /// Build a store from (i, j, score) triples. Diagonal entries are
    /// dropped; conflicting symmetric entries are resolved by maximum.
    pub fn from_entries<I>(m: usize, tag: &str, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (u32, u32, f64)>,
    {
        let mut canon: Vec<(u32, u32, f64)> = Vec::new();
        for (a, b, s) in entries {
            if (a as usize) >= m || (b as usize) >= m {
                return Err(Error::InvalidInput(format!(
                    "similarity entry ({a}, {b}) out of range for m = {m}"
                )));
            }
            if !s.is_finite() || s < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "similarity {s} for pair ({a}, {b}) must be finite and nonnegative"
                )));
            }
            if a == b {
                continue;
            }
            let (i, j) = if a < b { (a, b) } else { (b, a) };
            canon.push((i, j, s));
        }
        canon.sort_unstable_by_key(|&(i, j, _)| (i, j));
        let mut entries: Vec<(u32, u32, f64)> = Vec::with_capacity(canon.len());
        for (i, j, s) in canon {
            match entries.last_mut() {
                Some(last) if last.0 == i && last.1 == j => last.2 = last.2.max(s),
                _ => entries.push((i, j, s)),
            }
        }
        let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); m];
        for &(i, j, s) in &entries {
            rows[i as usize].push((j, s));
            rows[j as usize].push((i, s));
        }
        for row in &mut rows {
            row.sort_unstable_by_key(|&(j, _)| j);
        }
        Ok(Self {
            m,
            tag: tag.to_string(),
            entries,
            rows,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    pub fn num_entries(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[(u32, u32, f64)] {
        &self.entries
    }

    /// Neighbors of `i` with their similarities, sorted by id.
    pub fn row(&self, i: u32) -> &[(u32, f64)] {
        &self.rows[i as usize]
    }

    /// s(i, j); symmetric, 0.0 for absent entries and the diagonal.
    pub fn get(&self, i: u32, j: u32) -> f64 {
        if i == j {
            return 0.0;
        }
        let row = &self.rows[i as usize];
        match row.binary_search_by_key(&j, |&(id, _)| id) {
            Ok(idx) => row[idx].1,
            Err(_) => 0.0,
        }
    }

    pub fn density(&self) -> Result<f64> {
        density(self.m, self.entries.len())
    }
}

fn density(m: usize, stored: usize) -> Result<f64> {
    if m < 2 {
        return Err(Error::InvalidInput(format!(
            "density undefined for m = {m} (need m >= 2)"
        )));
    }
    let total = m as f64 * (m as f64 - 1.0) / 2.0;
    Ok(stored as f64 / total)
}

/// One parsed data line: names, optional value, and its 1-based line number.
#[derive(Debug)]
struct Triplet {
    a: String,
    b: String,
    value: f64,
    line: usize,
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Read triplet lines from a file. `value_required` distinguishes similarity
/// files (score mandatory) from interaction files (confidence defaults to 1).
fn read_triplets(path: &Path, value_required: bool, value_name: &str) -> Result<Vec<Triplet>> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        let value = match fields.len() {
            2 if !value_required => 1.0,
            2 => {
                return Err(parse_err(
                    path,
                    line_no,
                    format!("missing {value_name} column"),
                ))
            }
            3 => fields[2].parse::<f64>().map_err(|_| {
                parse_err(
                    path,
                    line_no,
                    format!("unparseable {value_name} '{}'", fields[2]),
                )
            })?,
            n => {
                return Err(parse_err(
                    path,
                    line_no,
                    format!("expected 2-3 fields, found {n}"),
                ))
            }
        };
        if !value.is_finite() {
            return Err(parse_err(
                path,
                line_no,
                format!("{value_name} '{}' is not finite", fields[2]),
            ));
        }
        if value < 0.0 {
            return Err(parse_err(
                path,
                line_no,
                format!("negative {value_name} '{}'", fields[2]),
            ));
        }
        out.push(Triplet {
            a: fields[0].to_string(),
            b: fields[1].to_string(),
            value,
            line: line_no,
        });
    }
    Ok(out)
}

/// Load an interaction file on its own. The index covers exactly the names
/// appearing in this file; use [`load_dataset`] when similarity files should
/// contribute entities too.
pub fn load_interactions(path: &Path) -> Result<(EntityIndex, InteractionStore)> {
    let trips = read_triplets(path, false, "confidence")?;
    let index = EntityIndex::from_names(
        trips
            .iter()
            .flat_map(|t| [t.a.as_str(), t.b.as_str()])
            .map(str::to_string),
    );
    let store = interactions_from_triplets(path, &trips, &index)?;
    Ok((index, store))
}

/// Load an interaction file against an existing index. Every name must be
/// present in the index.
pub fn load_interactions_with_index(path: &Path, index: &EntityIndex) -> Result<InteractionStore> {
    let trips = read_triplets(path, false, "confidence")?;
    interactions_from_triplets(path, &trips, index)
}

fn interactions_from_triplets(
    path: &Path,
    trips: &[Triplet],
    index: &EntityIndex,
) -> Result<InteractionStore> {
    if trips.is_empty() {
        return Err(Error::NoInteractions {
            path: path.to_path_buf(),
        });
    }
    let mut pairs = Vec::with_capacity(trips.len());
    for t in trips {
        if t.a == t.b {
            return Err(parse_err(
                path,
                t.line,
                format!("self-pair '{}' rejected", t.a),
            ));
        }
        let i = index
            .id(&t.a)
            .ok_or_else(|| parse_err(path, t.line, format!("unknown entity '{}'", t.a)))?;
        let j = index
            .id(&t.b)
            .ok_or_else(|| parse_err(path, t.line, format!("unknown entity '{}'", t.b)))?;
        pairs.push((i, j, t.value));
    }
    InteractionStore::from_pairs(index.len(), pairs)
}

/// A similarity store plus the count of entries skipped because a name was
/// absent from the index.
#[derive(Debug)]
pub struct LoadedSimilarity {
    pub store: SimilarityStore,
    pub skipped: usize,
}

/// Load a similarity file restricted to the entities of `index`. Unknown
/// names are skipped and counted, not fatal; zero overlap is an error.
pub fn load_similarity(path: &Path, index: &EntityIndex, tag: &str) -> Result<LoadedSimilarity> {
    let trips = read_triplets(path, true, "score")?;
    similarity_from_triplets(path, &trips, index, tag)
}

fn similarity_from_triplets(
    path: &Path,
    trips: &[Triplet],
    index: &EntityIndex,
    tag: &str,
) -> Result<LoadedSimilarity> {
    let mut entries = Vec::with_capacity(trips.len());
    let mut skipped = 0usize;
    for t in trips {
        match (index.id(&t.a), index.id(&t.b)) {
            (Some(i), Some(j)) => entries.push((i, j, t.value)),
            _ => skipped += 1,
        }
    }
    if entries.is_empty() {
        return Err(Error::NoOverlap {
            path: path.to_path_buf(),
            skipped,
        });
    }
    let store = SimilarityStore::from_entries(index.len(), tag, entries)?;
    Ok(LoadedSimilarity { store, skipped })
}

/// A fully loaded run: union entity index, interactions, and any similarity
/// sources.
#[derive(Debug)]
pub struct Dataset {
    pub index: EntityIndex,
    pub interactions: InteractionStore,
    pub similarities: Vec<LoadedSimilarity>,
}

/// Load interactions plus similarity files, building the entity index over
/// the union of names from all files so entities that appear only in a
/// similarity source can still receive predictions.
pub fn load_dataset(interactions: &Path, similarities: &[(String, PathBuf)]) -> Result<Dataset> {
    let inter_trips = read_triplets(interactions, false, "confidence")?;
    let mut sim_trips = Vec::with_capacity(similarities.len());
    for (tag, path) in similarities {
        sim_trips.push((
            tag.as_str(),
            path.as_path(),
            read_triplets(path, true, "score")?,
        ));
    }

    let mut names: Vec<String> = Vec::new();
    for t in &inter_trips {
        names.push(t.a.clone());
        names.push(t.b.clone());
    }
    for (_, _, trips) in &sim_trips {
        for t in trips {
            names.push(t.a.clone());
            names.push(t.b.clone());
        }
    }
    let index = EntityIndex::from_names(names);

    let interactions = interactions_from_triplets(interactions, &inter_trips, &index)?;
    let mut sims = Vec::with_capacity(sim_trips.len());
    for (tag, path, trips) in &sim_trips {
        sims.push(similarity_from_triplets(path, trips, &index, tag)?);
    }
    Ok(Dataset {
        index,
        interactions,
        similarities: sims,
    })
}

/// Write a store in the canonical triplet format (sorted, `i < j`).
/// Re-loading the written file reproduces the store exactly.
pub fn write_interactions(
    path: &Path,
    index: &EntityIndex,
    store: &InteractionStore,
) -> Result<()> {
    let mut w = open_writer(path)?;
    for &(i, j, eps) in store.pairs() {
        writeln!(w, "{}\t{}\t{}", index.name(i), index.name(j), eps).map_err(|source| {
            Error::Io {
                path: path.to_path_buf(),
                source,
            }
        })?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Write a similarity store in the canonical triplet format.
pub fn write_similarity(path: &Path, index: &EntityIndex, store: &SimilarityStore) -> Result<()> {
    let mut w = open_writer(path)?;
    for &(i, j, s) in store.entries() {
        writeln!(w, "{}\t{}\t{}", index.name(i), index.name(j), s).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn open_writer(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
}
