//! Dataset synthesis, the contaminated-split protocol, and persistence.
//!
//! Training data is an unlabeled matrix `U` (normals secretly mixed with
//! seen anomalies) plus a small labeled-anomaly matrix `A`. The test set
//! carries three-way labels so seen- and unseen-anomaly detection can be
//! scored separately. Hidden per-row labels for `U` are kept only for
//! diagnostics; nothing in training reads them.

mod csv;
mod idx;

pub use csv::{load_csv, save_csv};
pub use idx::load_idx_images;

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::seeding::{rng_stream, stream};

/// Row-major matrix of f64 rows. Unlike `Tensor`, a matrix may have zero
/// rows (an empty anomaly set) or zero columns (a pure label table).
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::Shape(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn empty(cols: usize) -> Self {
        Matrix {
            rows: 0,
            cols,
            data: Vec::new(),
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Ok(Matrix::empty(0));
        }
        let cols = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::Shape(format!(
                    "row {i} has {} values, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Matrix::new(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_tensor(&self, i: usize) -> Tensor {
        Tensor::vector(self.row(i).to_vec()).expect("matrix rows are non-empty")
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn push_row(&mut self, row: &[f64]) -> Result<()> {
        if self.rows == 0 && self.data.is_empty() && self.cols == 0 {
            self.cols = row.len();
        }
        if row.len() != self.cols {
            return Err(Error::Shape(format!(
                "pushed row has {} values, expected {}",
                row.len(),
                self.cols
            )));
        }
        self.data.extend_from_slice(row);
        self.rows += 1;
        Ok(())
    }

    /// All rows as per-point tensors.
    pub fn row_tensors(&self) -> Vec<Tensor> {
        (0..self.rows).map(|i| self.row_tensor(i)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestLabel {
    Normal,
    Seen,
    Unseen,
}

impl TestLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            TestLabel::Normal => "normal",
            TestLabel::Seen => "seen",
            TestLabel::Unseen => "unseen",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "normal" => Ok(TestLabel::Normal),
            "seen" => Ok(TestLabel::Seen),
            "unseen" => Ok(TestLabel::Unseen),
            other => Err(Error::Format(format!("unknown test label {other:?}"))),
        }
    }

    pub fn is_anomaly(&self) -> bool {
        !matches!(self, TestLabel::Normal)
    }
}

/// Hidden ground truth for one unlabeled training row. Diagnostics only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HiddenLabel {
    Normal,
    Seen,
}

impl HiddenLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            HiddenLabel::Normal => "normal",
            HiddenLabel::Seen => "seen",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "normal" => Ok(HiddenLabel::Normal),
            "seen" => Ok(HiddenLabel::Seen),
            other => Err(Error::Format(format!("unknown hidden label {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestSplit {
    pub points: Matrix,
    pub labels: Vec<TestLabel>,
}

impl TestSplit {
    pub fn count(&self, label: TestLabel) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset {
    pub unlabeled: Matrix,
    pub anomalies: Matrix,
    pub val_unlabeled: Matrix,
    pub val_anomalies: Matrix,
    pub test: TestSplit,
    pub true_unlabeled_labels: Vec<HiddenLabel>,
}

/// Training-side view; evaluation takes `TestSplit` only, so test rows
/// cannot leak into training code paths by construction.
#[derive(Debug, Clone, Copy)]
pub struct TrainData<'a> {
    pub unlabeled: &'a Matrix,
    pub anomalies: &'a Matrix,
    pub val_unlabeled: &'a Matrix,
    pub val_anomalies: &'a Matrix,
}

impl SplitDataset {
    pub fn dim(&self) -> usize {
        self.unlabeled.cols()
    }

    pub fn train_view(&self) -> TrainData<'_> {
        TrainData {
            unlabeled: &self.unlabeled,
            anomalies: &self.anomalies,
            val_unlabeled: &self.val_unlabeled,
            val_anomalies: &self.val_anomalies,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.unlabeled.rows() == 0 {
            return Err(Error::Contract("unlabeled split is empty".into()));
        }
        let d = self.unlabeled.cols();
        for (name, m) in [
            ("anomalies", &self.anomalies),
            ("val_unlabeled", &self.val_unlabeled),
            ("val_anomalies", &self.val_anomalies),
            ("test_points", &self.test.points),
        ] {
            if m.rows() > 0 && m.cols() != d {
                return Err(Error::Shape(format!(
                    "{name} has dimension {}, expected {d}",
                    m.cols()
                )));
            }
        }
        if self.true_unlabeled_labels.len() != self.unlabeled.rows() {
            return Err(Error::Contract(
                "hidden labels misaligned with unlabeled rows".into(),
            ));
        }
        if self.test.labels.len() != self.test.points.rows() {
            return Err(Error::Contract(
                "test labels misaligned with test rows".into(),
            ));
        }
        let n_normal = self.test.count(TestLabel::Normal);
        let n_anom = self.test.labels.iter().filter(|l| l.is_anomaly()).count();
        if n_normal == 0 || n_anom == 0 {
            return Err(Error::Contract(format!(
                "test split needs at least one normal and one anomaly row, got {n_normal} normal / {n_anom} anomalous"
            )));
        }
        Ok(())
    }

    /// Write the six split CSVs into `dir`, returning the paths written.
    pub fn save_dir(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let hidden: Vec<String> = self
            .true_unlabeled_labels
            .iter()
            .map(|l| l.as_str().to_string())
            .collect();
        let test_labels: Vec<String> = self
            .test
            .labels
            .iter()
            .map(|l| l.as_str().to_string())
            .collect();
        let files = [
            ("unlabeled.csv", &self.unlabeled, Some(&hidden)),
            ("anomalies.csv", &self.anomalies, None),
            ("val_unlabeled.csv", &self.val_unlabeled, None),
            ("val_anomalies.csv", &self.val_anomalies, None),
            ("test_points.csv", &self.test.points, None),
        ];
        let mut written = Vec::new();
        for (name, matrix, labels) in files {
            let path = dir.join(name);
            save_csv(matrix, labels.map(|l| l.as_slice()), &path)?;
            written.push(path);
        }
        let labels_path = dir.join("test_labels.csv");
        save_csv(&Matrix::empty(0), Some(&test_labels), &labels_path)?;
        written.push(labels_path);
        Ok(written)
    }

    /// Load a directory written by `save_dir`. Missing anomaly files are
    /// treated as empty sets so unsupervised runs work; supervised loss
    /// kinds reject the empty matrix downstream.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let (unlabeled, hidden) = load_csv(&dir.join("unlabeled.csv"))?;
        let hidden = hidden.ok_or_else(|| {
            Error::Format("unlabeled.csv is missing its hidden label column".into())
        })?;
        let true_unlabeled_labels: Vec<HiddenLabel> = hidden
            .iter()
            .map(|s| HiddenLabel::parse(s))
            .collect::<Result<_>>()?;
        let d = unlabeled.cols();
        let load_optional = |name: &str| -> Result<Matrix> {
            let path = dir.join(name);
            if path.exists() {
                Ok(load_csv(&path)?.0)
            } else {
                Ok(Matrix::empty(d))
            }
        };
        let anomalies = load_optional("anomalies.csv")?;
        let val_unlabeled = load_optional("val_unlabeled.csv")?;
        let val_anomalies = load_optional("val_anomalies.csv")?;
        let (test_points, _) = load_csv(&dir.join("test_points.csv"))?;
        let (_, test_label_col) = load_csv(&dir.join("test_labels.csv"))?;
        let labels: Vec<TestLabel> = test_label_col
            .ok_or_else(|| Error::Format("test_labels.csv has no label column".into()))?
            .iter()
            .map(|s| TestLabel::parse(s))
            .collect::<Result<_>>()?;
        let ds = SplitDataset {
            unlabeled,
            anomalies,
            val_unlabeled,
            val_anomalies,
            test: TestSplit {
                points: test_points,
                labels,
            },
            true_unlabeled_labels,
        };
        ds.validate()?;
        Ok(ds)
    }
}

/// Cluster layout for the 2-D toy problem: two normal blobs, one seen
/// anomaly blob, and one unseen blob away from everything in training.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyGeometry {
    pub normal_centers: Vec<[f64; 2]>,
    pub normal_sigma: f64,
    pub seen_center: [f64; 2],
    pub seen_sigma: f64,
    pub unseen_center: [f64; 2],
    pub unseen_sigma: f64,
}

impl Default for ToyGeometry {
    fn default() -> Self {
        ToyGeometry {
            normal_centers: vec![[-2.0, 0.0], [2.0, 0.0]],
            normal_sigma: 0.5,
            seen_center: [0.0, 3.0],
            seen_sigma: 0.4,
            unseen_center: [0.0, -3.0],
            unseen_sigma: 0.4,
        }
    }
}

impl ToyGeometry {
    fn validate(&self) -> Result<()> {
        if self.normal_centers.is_empty() {
            return Err(Error::Config(
                "toy geometry needs at least one normal cluster".into(),
            ));
        }
        for (name, s) in [
            ("toy_normal_sigma", self.normal_sigma),
            ("toy_seen_sigma", self.seen_sigma),
            ("toy_unseen_sigma", self.unseen_sigma),
        ] {
            if s.is_nan() || s <= 0.0 {
                return Err(Error::Config(format!(
                    "{name} must be positive, got {s} (degenerate covariance)"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub seed: u64,
    pub n_unlabeled_normal: usize,
    pub n_unlabeled_seen: usize,
    pub n_labeled_seen: usize,
    pub test_normal_cap: usize,
    pub test_seen_cap: usize,
    pub test_unseen_cap: usize,
    pub val_fraction: f64,
    pub toy: ToyGeometry,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            seed: 0,
            n_unlabeled_normal: 900,
            n_unlabeled_seen: 100,
            n_labeled_seen: 100,
            test_normal_cap: 200,
            test_seen_cap: 100,
            test_unseen_cap: 100,
            val_fraction: 0.1,
            toy: ToyGeometry::default(),
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=0.5).contains(&self.val_fraction) {
            return Err(Error::Config(format!(
                "val_fraction must be in [0, 0.5], got {}",
                self.val_fraction
            )));
        }
        if self.n_unlabeled_normal + self.n_unlabeled_seen == 0 {
            return Err(Error::Config("unlabeled split would be empty".into()));
        }
        self.toy.validate()
    }

    /// Contamination rate of the unlabeled training data implied by the
    /// counts, before validation carving.
    pub fn contamination_rate(&self) -> f64 {
        self.n_unlabeled_seen as f64 / (self.n_unlabeled_normal + self.n_unlabeled_seen) as f64
    }
}

/// Source pools the split builder draws from without replacement.
#[derive(Debug, Clone)]
pub struct Pools {
    pub normal: Matrix,
    pub seen: Matrix,
    pub unseen: Matrix,
}

/// Split a class-labeled matrix into normal/seen/unseen pools.
pub fn pools_from_labeled(
    data: &Matrix,
    labels: &[u8],
    normal_class: u8,
    unseen_class: u8,
) -> Result<Pools> {
    if labels.len() != data.rows() {
        return Err(Error::Contract(format!(
            "{} labels for {} rows",
            labels.len(),
            data.rows()
        )));
    }
    if normal_class == unseen_class {
        return Err(Error::Config("normal_class equals unseen_class".into()));
    }
    let mut normal = Matrix::empty(data.cols());
    let mut seen = Matrix::empty(data.cols());
    let mut unseen = Matrix::empty(data.cols());
    for (i, &label) in labels.iter().enumerate() {
        let target = if label == normal_class {
            &mut normal
        } else if label == unseen_class {
            &mut unseen
        } else {
            &mut seen
        };
        target.push_row(data.row(i))?;
    }
    Ok(Pools {
        normal,
        seen,
        unseen,
    })
}

fn sample_cluster(rng: &mut ChaCha8Rng, center: &[f64; 2], sigma: f64) -> Vec<f64> {
    let z0: f64 = rng.sample(StandardNormal);
    let z1: f64 = rng.sample(StandardNormal);
    vec![center[0] + sigma * z0, center[1] + sigma * z1]
}

/// Draw the toy pools sized to cover the configured split exactly.
pub fn gen_toy_pools(cfg: &GenConfig) -> Result<Pools> {
    cfg.validate()?;
    let geom = &cfg.toy;
    let mut rng = rng_stream(cfg.seed, stream::POOLS);
    let n_normal = cfg.n_unlabeled_normal + cfg.test_normal_cap;
    let n_seen = cfg.n_unlabeled_seen + cfg.n_labeled_seen + cfg.test_seen_cap;
    let n_unseen = cfg.test_unseen_cap;

    let mut normal = Matrix::empty(2);
    for _ in 0..n_normal {
        let c = geom.normal_centers[rng.gen_range(0..geom.normal_centers.len())];
        normal.push_row(&sample_cluster(&mut rng, &c, geom.normal_sigma))?;
    }
    let mut seen = Matrix::empty(2);
    for _ in 0..n_seen {
        seen.push_row(&sample_cluster(
            &mut rng,
            &geom.seen_center,
            geom.seen_sigma,
        ))?;
    }
    let mut unseen = Matrix::empty(2);
    for _ in 0..n_unseen {
        unseen.push_row(&sample_cluster(
            &mut rng,
            &geom.unseen_center,
            geom.unseen_sigma,
        ))?;
    }
    Ok(Pools {
        normal,
        seen,
        unseen,
    })
}

/// Generate the complete 2-D toy dataset: pools plus contaminated split.
pub fn gen_toy2d(cfg: &GenConfig) -> Result<SplitDataset> {
    let pools = gen_toy_pools(cfg)?;
    build_contaminated_split(&pools, cfg)
}

fn rounded(fraction: f64, n: usize) -> usize {
    (fraction * n as f64).round() as usize
}

/// Assemble the contaminated split: unlabeled = normals + hidden seen
/// anomalies (shuffled), labeled anomalies disjoint from them,
/// stratified validation carve, and a held-out test set up to the caps.
/// All draws are without replacement, so the splits are disjoint by
/// source row.
pub fn build_contaminated_split(pools: &Pools, cfg: &GenConfig) -> Result<SplitDataset> {
    cfg.validate()?;
    let d = pools.normal.cols();
    if pools.normal.rows() < cfg.n_unlabeled_normal {
        return Err(Error::Capacity(format!(
            "normal pool has {} rows, the split needs {}",
            pools.normal.rows(),
            cfg.n_unlabeled_normal
        )));
    }
    let seen_need = cfg.n_unlabeled_seen + cfg.n_labeled_seen;
    if pools.seen.rows() < seen_need {
        return Err(Error::Capacity(format!(
            "seen pool has {} rows, the split needs {seen_need}",
            pools.seen.rows()
        )));
    }

    let mut rng = rng_stream(cfg.seed, stream::SPLIT);
    let mut normal_idx: Vec<usize> = (0..pools.normal.rows()).collect();
    normal_idx.shuffle(&mut rng);
    let mut seen_idx: Vec<usize> = (0..pools.seen.rows()).collect();
    seen_idx.shuffle(&mut rng);
    let mut unseen_idx: Vec<usize> = (0..pools.unseen.rows()).collect();
    unseen_idx.shuffle(&mut rng);

    let unl_normal = &normal_idx[..cfg.n_unlabeled_normal];
    let rest_normal = &normal_idx[cfg.n_unlabeled_normal..];
    let test_normal = &rest_normal[..cfg.test_normal_cap.min(rest_normal.len())];

    let unl_seen = &seen_idx[..cfg.n_unlabeled_seen];
    let labeled_seen = &seen_idx[cfg.n_unlabeled_seen..seen_need];
    let rest_seen = &seen_idx[seen_need..];
    let test_seen = &rest_seen[..cfg.test_seen_cap.min(rest_seen.len())];

    let test_unseen = &unseen_idx[..cfg.test_unseen_cap.min(unseen_idx.len())];

    // Stratified carve keeps the validation contamination within one
    // sample of the training rate.
    let k_normal = rounded(cfg.val_fraction, unl_normal.len());
    let k_seen = rounded(cfg.val_fraction, unl_seen.len());
    let k_anom = rounded(cfg.val_fraction, labeled_seen.len());
    let (train_normal, val_normal) = unl_normal.split_at(unl_normal.len() - k_normal);
    let (train_seen, val_seen) = unl_seen.split_at(unl_seen.len() - k_seen);
    let (train_anom, val_anom) = labeled_seen.split_at(labeled_seen.len() - k_anom);

    let mut train_rows: Vec<(usize, bool)> = train_normal
        .iter()
        .map(|&i| (i, false))
        .chain(train_seen.iter().map(|&i| (i, true)))
        .collect();
    train_rows.shuffle(&mut rng);
    let mut val_rows: Vec<(usize, bool)> = val_normal
        .iter()
        .map(|&i| (i, false))
        .chain(val_seen.iter().map(|&i| (i, true)))
        .collect();
    val_rows.shuffle(&mut rng);

    let gather = |pool: &Matrix, idx: &[usize]| -> Result<Matrix> {
        let mut m = Matrix::empty(d);
        for &i in idx {
            m.push_row(pool.row(i))?;
        }
        Ok(m)
    };

    let mut unlabeled = Matrix::empty(d);
    let mut true_unlabeled_labels = Vec::with_capacity(train_rows.len());
    for &(i, is_seen) in &train_rows {
        let pool = if is_seen { &pools.seen } else { &pools.normal };
        unlabeled.push_row(pool.row(i))?;
        true_unlabeled_labels.push(if is_seen {
            HiddenLabel::Seen
        } else {
            HiddenLabel::Normal
        });
    }
    let mut val_unlabeled = Matrix::empty(d);
    for &(i, is_seen) in &val_rows {
        let pool = if is_seen { &pools.seen } else { &pools.normal };
        val_unlabeled.push_row(pool.row(i))?;
    }

    let anomalies = gather(&pools.seen, train_anom)?;
    let val_anomalies = gather(&pools.seen, val_anom)?;

    let mut test_points = Matrix::empty(d);
    let mut test_labels = Vec::new();
    for &i in test_normal {
        test_points.push_row(pools.normal.row(i))?;
        test_labels.push(TestLabel::Normal);
    }
    for &i in test_seen {
        test_points.push_row(pools.seen.row(i))?;
        test_labels.push(TestLabel::Seen);
    }
    for &i in test_unseen {
        test_points.push_row(pools.unseen.row(i))?;
        test_labels.push(TestLabel::Unseen);
    }

    let ds = SplitDataset {
        unlabeled,
        anomalies,
        val_unlabeled,
        val_anomalies,
        test: TestSplit {
            points: test_points,
            labels: test_labels,
        },
        true_unlabeled_labels,
    };
    ds.validate()?;
    Ok(ds)
}

/// Block-mean pooling of square images stored one per row.
pub fn downsample_images(images: &Matrix, factor: usize) -> Result<Matrix> {
    if factor == 0 {
        return Err(Error::Contract("downsample factor must be positive".into()));
    }
    let d = images.cols();
    let side = (d as f64).sqrt().round() as usize;
    if side * side != d {
        return Err(Error::Contract(format!(
            "rows of length {d} are not square images"
        )));
    }
    if !side.is_multiple_of(factor) {
        return Err(Error::Contract(format!(
            "image side {side} is not divisible by factor {factor}"
        )));
    }
    let out_side = side / factor;
    let norm = 1.0 / (factor * factor) as f64;
    let mut out = Matrix::empty(out_side * out_side);
    let mut row_buf = vec![0.0; out_side * out_side];
    for r in 0..images.rows() {
        let src = images.row(r);
        for oy in 0..out_side {
            for ox in 0..out_side {
                let mut acc = 0.0;
                for dy in 0..factor {
                    for dx in 0..factor {
                        acc += src[(oy * factor + dy) * side + (ox * factor + dx)];
                    }
                }
                row_buf[oy * out_side + ox] = acc * norm;
            }
        }
        out.push_row(&row_buf)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_cfg() -> GenConfig {
        GenConfig {
            seed: 3,
            n_unlabeled_normal: 60,
            n_unlabeled_seen: 10,
            n_labeled_seen: 8,
            test_normal_cap: 20,
            test_seen_cap: 10,
            test_unseen_cap: 10,
            val_fraction: 0.1,
            toy: ToyGeometry::default(),
        }
    }

    #[test]
    fn toy_generation_is_deterministic() {
        let a = gen_toy2d(&toy_cfg()).unwrap();
        let b = gen_toy2d(&toy_cfg()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_contamination_means_all_hidden_normal() {
        let mut cfg = toy_cfg();
        cfg.n_unlabeled_seen = 0;
        let ds = gen_toy2d(&cfg).unwrap();
        assert!(ds
            .true_unlabeled_labels
            .iter()
            .all(|l| *l == HiddenLabel::Normal));
    }

    #[test]
    fn cluster_means_are_statistically_consistent() {
        let mut cfg = toy_cfg();
        cfg.n_unlabeled_normal = 4000;
        cfg.toy.normal_centers = vec![[1.5, -0.5]];
        let pools = gen_toy_pools(&cfg).unwrap();
        let n = pools.normal.rows() as f64;
        let bound = 3.0 * cfg.toy.normal_sigma / n.sqrt();
        for dim in 0..2 {
            let mean: f64 = pools.normal.iter_rows().map(|r| r[dim]).sum::<f64>() / n;
            let target = cfg.toy.normal_centers[0][dim];
            assert!(
                (mean - target).abs() < bound,
                "dim {dim}: mean {mean} vs {target} (bound {bound})"
            );
        }
    }

    #[test]
    fn paper_counts_produce_4750_and_250() {
        let cfg = GenConfig {
            seed: 1,
            n_unlabeled_normal: 4500,
            n_unlabeled_seen: 250,
            n_labeled_seen: 250,
            test_normal_cap: 1000,
            test_seen_cap: 500,
            test_unseen_cap: 500,
            val_fraction: 0.0,
            toy: ToyGeometry::default(),
        };
        let ds = gen_toy2d(&cfg).unwrap();
        assert_eq!(ds.unlabeled.rows(), 4750);
        assert_eq!(ds.anomalies.rows(), 250);
    }

    #[test]
    fn zero_labeled_anomalies_gives_empty_matrix() {
        let mut cfg = toy_cfg();
        cfg.n_labeled_seen = 0;
        let ds = gen_toy2d(&cfg).unwrap();
        assert_eq!(ds.anomalies.rows(), 0);
        assert_eq!(ds.val_anomalies.rows(), 0);
    }

    #[test]
    fn splits_are_pairwise_disjoint_by_content() {
        // Continuous draws are unique a.s., so row content identifies the
        // source row; every row must appear in exactly one split.
        let ds = gen_toy2d(&toy_cfg()).unwrap();
        let mut seen_rows: Vec<Vec<u64>> = Vec::new();
        let mut push_all = |m: &Matrix| {
            for row in m.iter_rows() {
                let key: Vec<u64> = row.iter().map(|v| v.to_bits()).collect();
                assert!(
                    !seen_rows.contains(&key),
                    "row {key:?} appears in two splits"
                );
                seen_rows.push(key);
            }
        };
        push_all(&ds.unlabeled);
        push_all(&ds.anomalies);
        push_all(&ds.val_unlabeled);
        push_all(&ds.val_anomalies);
        push_all(&ds.test.points);
    }

    #[test]
    fn contamination_rate_is_exact_before_carving() {
        let mut cfg = toy_cfg();
        cfg.val_fraction = 0.0;
        let ds = gen_toy2d(&cfg).unwrap();
        let seen = ds
            .true_unlabeled_labels
            .iter()
            .filter(|l| **l == HiddenLabel::Seen)
            .count();
        let rate = seen as f64 / ds.unlabeled.rows() as f64;
        assert_eq!(rate, cfg.contamination_rate());
    }

    #[test]
    fn contamination_rate_within_one_sample_after_carving() {
        let cfg = toy_cfg();
        let ds = gen_toy2d(&cfg).unwrap();
        let n = ds.unlabeled.rows() as f64;
        let seen = ds
            .true_unlabeled_labels
            .iter()
            .filter(|l| **l == HiddenLabel::Seen)
            .count() as f64;
        let rate = seen / n;
        assert!(
            (rate - cfg.contamination_rate()).abs() <= 1.0 / n,
            "rate {rate} vs target {}",
            cfg.contamination_rate()
        );
    }

    #[test]
    fn capacity_errors_name_the_pool() {
        let cfg = toy_cfg();
        let pools = gen_toy_pools(&cfg).unwrap();
        let mut big = cfg.clone();
        big.n_unlabeled_normal = pools.normal.rows() + 1;
        let err = build_contaminated_split(&pools, &big).unwrap_err();
        assert!(err.to_string().contains("normal pool"), "{err}");
        let mut big = cfg;
        big.n_labeled_seen = pools.seen.rows();
        let err = build_contaminated_split(&pools, &big).unwrap_err();
        assert!(err.to_string().contains("seen pool"), "{err}");
    }

    #[test]
    fn degenerate_covariance_is_a_config_error() {
        let mut cfg = toy_cfg();
        cfg.toy.seen_sigma = 0.0;
        assert!(matches!(gen_toy2d(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn downsample_identity_and_block_mean() {
        let m = Matrix::new(1, 4, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        let same = downsample_images(&m, 1).unwrap();
        assert_eq!(same, m);
        let half = downsample_images(&m, 2).unwrap();
        assert_eq!(half.row(0), &[0.5]);
    }

    #[test]
    fn downsample_matches_brute_force() {
        let mut rng = rng_stream(9, 0);
        let vals: Vec<f64> = (0..16).map(|_| rng.gen_range(0.0..1.0)).collect();
        let m = Matrix::new(1, 16, vals.clone()).unwrap();
        let out = downsample_images(&m, 2).unwrap();
        for oy in 0..2 {
            for ox in 0..2 {
                let mut acc = 0.0;
                for dy in 0..2 {
                    for dx in 0..2 {
                        acc += vals[(oy * 2 + dy) * 4 + (ox * 2 + dx)];
                    }
                }
                assert!((out.row(0)[oy * 2 + ox] - acc / 4.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn downsample_rejects_non_square_and_indivisible() {
        let m = Matrix::new(1, 6, vec![0.0; 6]).unwrap();
        assert!(downsample_images(&m, 2).is_err());
        let m = Matrix::new(1, 9, vec![0.0; 9]).unwrap();
        assert!(downsample_images(&m, 2).is_err());
    }

    #[test]
    fn save_and_load_dir_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let ds = gen_toy2d(&toy_cfg()).unwrap();
        let files = ds.save_dir(dir.path()).unwrap();
        assert_eq!(files.len(), 6);
        let back = SplitDataset::load_dir(dir.path()).unwrap();
        assert_eq!(ds, back);
    }

    #[test]
    fn pools_from_labeled_routes_classes() {
        let data = Matrix::from_rows(&[
            vec![0.0, 0.0],
            vec![1.0, 1.0],
            vec![2.0, 2.0],
            vec![3.0, 3.0],
        ])
        .unwrap();
        let pools = pools_from_labeled(&data, &[1, 0, 5, 1], 1, 0).unwrap();
        assert_eq!(pools.normal.rows(), 2);
        assert_eq!(pools.unseen.rows(), 1);
        assert_eq!(pools.seen.rows(), 1);
        assert!(pools_from_labeled(&data, &[1, 0, 5, 1], 1, 1).is_err());
    }
}
