//! Portable on-disk dataset format.
//!
//! A dataset is a directory of UTF-8, LF-terminated files with 0-based
//! decimal indices:
//!
//! | file           | contents                                                     |
//! |----------------|--------------------------------------------------------------|
//! | `meta.json`    | `{"n", "features", "classes", "name", "format_version": 1}`  |
//! | `edges.tsv`    | `u<TAB>v` per line, undirected, duplicates tolerated         |
//! | `features.tsv` | `node<TAB>feature<TAB>value` sparse triplets                 |
//! | `labels.tsv`   | `node<TAB>class`; nodes not listed are unlabeled             |
//! | `train.txt`, `val.txt`, `test.txt` | one node index per line                  |
//!
//! The split files are optional as a group. When all three are missing the
//! standard split is regenerated from the labels with a fixed seed.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{normalize_adjacency, EdgeList, SparseGraph};
use crate::tensor::DenseMatrix;

pub const FORMAT_VERSION: u32 = 1;

/// Seed used when a dataset ships without split files.
pub const DEFAULT_SPLIT_SEED: u64 = 0;
pub const TRAIN_PER_CLASS: usize = 20;
pub const VAL_SIZE: usize = 500;
pub const TEST_SIZE: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub n: usize,
    pub features: usize,
    pub classes: usize,
    pub name: String,
    pub format_version: u32,
    /// Informational edge count written by converters.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<usize>,
}

/// Disjoint, sorted node subsets.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Splits {
    fn named(&self) -> [(&'static str, &Vec<usize>); 3] {
        [
            ("train", &self.train),
            ("val", &self.val),
            ("test", &self.test),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub graph: SparseGraph,
    pub features: DenseMatrix<f32>,
    pub labels: Vec<Option<usize>>,
    pub num_classes: usize,
    pub splits: Splits,
    /// Non-blank lines in `edges.tsv` (the raw input edge count).
    pub input_edges: usize,
}

impl Dataset {
    /// Assembles a dataset from in-memory parts and checks every invariant.
    pub fn new(
        name: impl Into<String>,
        edges: &EdgeList,
        features: DenseMatrix<f32>,
        labels: Vec<Option<usize>>,
        num_classes: usize,
        splits: Splits,
    ) -> Result<Self> {
        let n = features.rows();
        let graph = normalize_adjacency(edges, n)?;
        let dataset = Self {
            name: name.into(),
            graph,
            features,
            labels,
            num_classes,
            splits: canonical_splits(splits),
            input_edges: edges.edges.len(),
        };
        dataset.validate()?;
        Ok(dataset)
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.graph.n();
        if self.features.rows() != n || self.labels.len() != n {
            return Err(Error::Dataset(format!(
                "graph has {n} nodes, features {} rows, labels {} entries",
                self.features.rows(),
                self.labels.len()
            )));
        }
        if self.num_classes < 2 {
            return Err(Error::Dataset(format!(
                "need at least 2 classes, got {}",
                self.num_classes
            )));
        }
        for (node, label) in self.labels.iter().enumerate() {
            if let Some(label) = *label {
                if label >= self.num_classes {
                    return Err(Error::LabelOutOfRange {
                        node,
                        label,
                        classes: self.num_classes,
                    });
                }
            }
        }
        let mut owner: Vec<Option<&'static str>> = vec![None; n];
        for (mask, nodes) in self.splits.named() {
            for &node in nodes {
                if node >= n {
                    return Err(Error::Dataset(format!(
                        "{mask} mask node {node} outside 0..{n}"
                    )));
                }
                if let Some(first) = owner[node] {
                    if first != mask {
                        return Err(Error::MaskOverlap {
                            node,
                            first,
                            second: mask,
                        });
                    }
                }
                owner[node] = Some(mask);
                if self.labels[node].is_none() {
                    return Err(Error::UnlabeledMaskedNode { node, mask });
                }
            }
        }
        if !self.graph.is_symmetric(1e-12) {
            return Err(Error::Dataset(
                "normalized adjacency is not symmetric".into(),
            ));
        }
        Ok(())
    }

    /// Replaces the features by their row-normalized version.
    pub fn with_normalized_features(mut self) -> Self {
        self.features = row_normalize_features(&self.features);
        self
    }

    /// Undirected edges `(i, j)`, `i < j`, recovered from the adjacency.
    pub fn edge_pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.graph.n() {
            out.extend(
                self.graph
                    .row(i)
                    .filter(|&(j, _)| j > i)
                    .map(|(j, _)| (i, j)),
            );
        }
        out
    }

    pub fn meta(&self) -> Meta {
        Meta {
            n: self.n(),
            features: self.feature_dim(),
            classes: self.num_classes,
            name: self.name.clone(),
            format_version: FORMAT_VERSION,
            edges: None,
        }
    }
}

fn canonical_splits(mut splits: Splits) -> Splits {
    for v in [&mut splits.train, &mut splits.val, &mut splits.test] {
        v.sort_unstable();
        v.dedup();
    }
    splits
}

/// Divides each row by its L1 norm; all-zero rows stay zero.
pub fn row_normalize_features(x: &DenseMatrix<f32>) -> DenseMatrix<f32> {
    let mut out = x.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let norm: f64 = row.iter().map(|v| v.abs() as f64).sum();
        if norm > 0.0 {
            for v in row.iter_mut() {
                *v = (*v as f64 / norm) as f32;
            }
        }
    }
    out
}

/// Planetoid-style split: the first `per_class` labeled nodes of every class
/// (in node order) train; `val` and `test` nodes are drawn from the rest.
pub fn standard_split<R: Rng + ?Sized>(
    labels: &[Option<usize>],
    per_class: usize,
    val: usize,
    test: usize,
    rng: &mut R,
) -> Result<Splits> {
    let classes = labels.iter().flatten().max().map_or(0, |&c| c + 1);
    let mut taken = vec![0usize; classes];
    let mut train = Vec::with_capacity(per_class * classes);
    let mut rest = Vec::new();
    for (node, label) in labels.iter().enumerate() {
        if let Some(c) = *label {
            if taken[c] < per_class {
                taken[c] += 1;
                train.push(node);
            } else {
                rest.push(node);
            }
        }
    }
    if let Some((class, &count)) = taken.iter().enumerate().find(|&(_, &c)| c < per_class) {
        return Err(Error::Dataset(format!(
            "class {class} has {count} labeled nodes, {per_class} needed for training"
        )));
    }
    if rest.len() < val + test {
        return Err(Error::Dataset(format!(
            "{} labeled nodes remain after training selection, {} needed for val+test",
            rest.len(),
            val + test
        )));
    }
    rest.shuffle(rng);
    let mut val_nodes = rest[..val].to_vec();
    let mut test_nodes = rest[val..val + test].to_vec();
    val_nodes.sort_unstable();
    test_nodes.sort_unstable();
    Ok(Splits {
        train,
        val: val_nodes,
        test: test_nodes,
    })
}

/// Non-blank lines of `path` with 1-based line numbers.
fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r').to_string()))
        .collect())
}

fn parse_fields<'a>(
    path: &Path,
    line_no: usize,
    line: &'a str,
    count: usize,
) -> Result<Vec<&'a str>> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != count {
        return Err(Error::Parse {
            file: path.to_path_buf(),
            line: line_no,
            msg: format!(
                "expected {count} tab-separated fields, found {}",
                fields.len()
            ),
        });
    }
    Ok(fields)
}

fn parse_num<T: FromStr>(path: &Path, line_no: usize, field: &str) -> Result<T> {
    field.trim().parse().map_err(|_| Error::Parse {
        file: path.to_path_buf(),
        line: line_no,
        msg: format!("cannot parse {field:?}"),
    })
}

fn check_index(path: &Path, line: usize, index: usize, limit: usize) -> Result<usize> {
    if index >= limit {
        return Err(Error::IndexOutOfRange {
            file: path.to_path_buf(),
            line,
            index,
            limit,
        });
    }
    Ok(index)
}

pub fn load_meta(dir: &Path) -> Result<Meta> {
    let path = dir.join("meta.json");
    if !path.exists() {
        return Err(Error::MissingFile(path));
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let meta: Meta = serde_json::from_str(&text).map_err(|e| Error::Parse {
        file: path.clone(),
        line: e.line(),
        msg: e.to_string(),
    })?;
    if meta.format_version != FORMAT_VERSION {
        return Err(Error::Dataset(format!(
            "unsupported format_version {} in {}",
            meta.format_version,
            path.display()
        )));
    }
    if meta.n == 0 || meta.features == 0 {
        return Err(Error::Dataset("meta.json declares an empty dataset".into()));
    }
    Ok(meta)
}

/// Raw edge lines of `edges.tsv`, validated against `n`.
pub fn load_edges(dir: &Path, n: usize) -> Result<EdgeList> {
    let path = dir.join("edges.tsv");
    let mut edges = Vec::new();
    for (line, text) in read_lines(&path)? {
        let f = parse_fields(&path, line, &text, 2)?;
        let u = check_index(&path, line, parse_num(&path, line, f[0])?, n)?;
        let v = check_index(&path, line, parse_num(&path, line, f[1])?, n)?;
        edges.push((u, v));
    }
    Ok(EdgeList::new(edges))
}

fn load_features(dir: &Path, meta: &Meta) -> Result<DenseMatrix<f32>> {
    let path = dir.join("features.tsv");
    let mut x = DenseMatrix::zeros(meta.n, meta.features);
    let mut seen = BTreeMap::new();
    for (line, text) in read_lines(&path)? {
        let f = parse_fields(&path, line, &text, 3)?;
        let node = check_index(&path, line, parse_num(&path, line, f[0])?, meta.n)?;
        let feat = check_index(&path, line, parse_num(&path, line, f[1])?, meta.features)?;
        let value: f32 = parse_num(&path, line, f[2])?;
        if !value.is_finite() {
            return Err(Error::Parse {
                file: path.clone(),
                line,
                msg: format!("non-finite feature value {value}"),
            });
        }
        if let Some(first) = seen.insert((node, feat), line) {
            return Err(Error::Parse {
                file: path.clone(),
                line,
                msg: format!("entry ({node}, {feat}) already given on line {first}"),
            });
        }
        x.set(node, feat, value);
    }
    Ok(x)
}

fn load_labels(dir: &Path, meta: &Meta) -> Result<Vec<Option<usize>>> {
    let path = dir.join("labels.tsv");
    let mut labels = vec![None; meta.n];
    for (line, text) in read_lines(&path)? {
        let f = parse_fields(&path, line, &text, 2)?;
        let node = check_index(&path, line, parse_num(&path, line, f[0])?, meta.n)?;
        let class: usize = parse_num(&path, line, f[1])?;
        if class >= meta.classes {
            return Err(Error::LabelOutOfRange {
                node,
                label: class,
                classes: meta.classes,
            });
        }
        match labels[node] {
            Some(prev) if prev != class => {
                return Err(Error::Parse {
                    file: path.clone(),
                    line,
                    msg: format!("node {node} relabeled from {prev} to {class}"),
                })
            }
            _ => labels[node] = Some(class),
        }
    }
    Ok(labels)
}

fn load_mask(path: &Path, n: usize) -> Result<Vec<usize>> {
    let mut nodes = Vec::new();
    for (line, text) in read_lines(path)? {
        let node = check_index(path, line, parse_num(path, line, &text)?, n)?;
        nodes.push(node);
    }
    nodes.sort_unstable();
    nodes.dedup();
    Ok(nodes)
}

fn load_splits(dir: &Path, labels: &[Option<usize>]) -> Result<Splits> {
    let paths: Vec<PathBuf> = ["train.txt", "val.txt", "test.txt"]
        .iter()
        .map(|f| dir.join(f))
        .collect();
    let present = paths.iter().filter(|p| p.exists()).count();
    if present == 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(DEFAULT_SPLIT_SEED);
        return standard_split(labels, TRAIN_PER_CLASS, VAL_SIZE, TEST_SIZE, &mut rng);
    }
    if let Some(missing) = paths.iter().find(|p| !p.exists()) {
        return Err(Error::MissingFile(missing.clone()));
    }
    let n = labels.len();
    Ok(Splits {
        train: load_mask(&paths[0], n)?,
        val: load_mask(&paths[1], n)?,
        test: load_mask(&paths[2], n)?,
    })
}

/// Reads a portable-format directory. The result does not depend on the
/// line order of any file.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(Error::MissingFile(dir.to_path_buf()));
    }
    let meta = load_meta(dir)?;
    let edges = load_edges(dir, meta.n)?;
    let features = load_features(dir, &meta)?;
    let labels = load_labels(dir, &meta)?;
    let splits = load_splits(dir, &labels)?;
    Dataset::new(meta.name, &edges, features, labels, meta.classes, splits)
}

/// Writes `dataset` in the portable format, split files included.
pub fn write_dataset(dataset: &Dataset, dir: impl AsRef<Path>) -> Result<()> {
    use std::fmt::Write as _;

    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let put = |name: &str, text: String| {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| Error::io(path, e))
    };

    let mut meta = dataset.meta();
    let pairs = dataset.edge_pairs();
    meta.edges = Some(pairs.len());
    put("meta.json", serde_json::to_string_pretty(&meta)? + "\n")?;

    let mut text = String::new();
    for (u, v) in pairs {
        writeln!(text, "{u}\t{v}").unwrap();
    }
    put("edges.tsv", text)?;

    let mut text = String::new();
    for i in 0..dataset.n() {
        for (j, &v) in dataset.features.row(i).iter().enumerate() {
            if v != 0.0 {
                writeln!(text, "{i}\t{j}\t{v}").unwrap();
            }
        }
    }
    put("features.tsv", text)?;

    let mut text = String::new();
    for (i, label) in dataset.labels.iter().enumerate() {
        if let Some(c) = label {
            writeln!(text, "{i}\t{c}").unwrap();
        }
    }
    put("labels.tsv", text)?;

    for (name, nodes) in dataset.splits.named() {
        let mut text = String::new();
        for node in nodes {
            writeln!(text, "{node}").unwrap();
        }
        put(&format!("{name}.txt"), text)?;
    }
    Ok(())
}
