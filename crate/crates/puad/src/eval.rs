//! Scoring, AUROC with seen/unseen breakdown, sweeps, and contour grids.

use rayon::prelude::*;

use crate::autodiff::{Graph, Tensor};
use crate::data::{
    build_contaminated_split, GenConfig, Matrix, Pools, SplitDataset, TestLabel, TestSplit,
};
use crate::error::{Error, Result};
use crate::losses::Alpha;
use crate::models::{Model, ModelSpec};
use crate::trainer::{train, TrainConfig, TrainHistory};

/// Anomaly score of one point: reconstruction error for AE models,
/// squared center distance for SVDD, raw logit for the classifier
/// (rank-equivalent to its sigmoid).
pub fn score_point(model: &Model, x: &Tensor) -> Result<f64> {
    let mut g = Graph::new();
    let bound = model.params().bind(&mut g);
    let id = match model {
        Model::Ae(m) => m.reconstruction_error(&mut g, &bound, x, None)?,
        Model::Svdd(m) => m.svdd_score(&mut g, &bound, x)?,
        Model::Classifier(m) => m.logit(&mut g, &bound, x)?,
    };
    Ok(g.value(id).item())
}

pub fn score_dataset(model: &Model, points: &Matrix) -> Result<Vec<f64>> {
    if points.rows() == 0 {
        return Err(Error::Contract("cannot score an empty dataset".into()));
    }
    let mut g = Graph::new();
    let bound = model.params().bind(&mut g);
    let mut scores = Vec::with_capacity(points.rows());
    for i in 0..points.rows() {
        let x = points.row_tensor(i);
        let id = match model {
            Model::Ae(m) => m.reconstruction_error(&mut g, &bound, &x, None)?,
            Model::Svdd(m) => m.svdd_score(&mut g, &bound, &x)?,
            Model::Classifier(m) => m.logit(&mut g, &bound, &x)?,
        };
        scores.push(g.value(id).item());
    }
    Ok(scores)
}

/// Rank-based AUROC: (concordant + 0.5 * tied) / (P * N), computed in
/// O(n log n) with midrank tie handling. Matches the pairwise count
/// exactly, ties included.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Contract(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Numeric("NaN score in AUROC input".into()));
    }
    let p = labels.iter().filter(|&&l| l).count();
    let n = labels.len() - p;
    if p == 0 || n == 0 {
        return Err(Error::Contract(
            "AUROC needs at least one positive and one negative label".into(),
        ));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("no NaNs"));
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j < idx.len() && scores[idx[j]] == scores[idx[i]] {
            j += 1;
        }
        let midrank = (i + 1 + j) as f64 / 2.0;
        for &k in &idx[i..j] {
            if labels[k] {
                rank_sum_pos += midrank;
            }
        }
        i = j;
    }
    let p_f = p as f64;
    let u = rank_sum_pos - p_f * (p_f + 1.0) / 2.0;
    Ok(u / (p_f * n as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub auroc_overall: f64,
    pub auroc_seen: Option<f64>,
    pub auroc_unseen: Option<f64>,
    pub n_normal: usize,
    pub n_seen: usize,
    pub n_unseen: usize,
    pub warning: Option<String>,
    pub seed: Option<u64>,
    pub config_echo: Vec<(String, String)>,
}

impl EvalReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("auroc_overall={}\n", self.auroc_overall));
        if let Some(v) = self.auroc_seen {
            out.push_str(&format!("auroc_seen={v}\n"));
        }
        if let Some(v) = self.auroc_unseen {
            out.push_str(&format!("auroc_unseen={v}\n"));
        }
        out.push_str(&format!("n_normal={}\n", self.n_normal));
        out.push_str(&format!("n_seen={}\n", self.n_seen));
        out.push_str(&format!("n_unseen={}\n", self.n_unseen));
        if let Some(seed) = self.seed {
            out.push_str(&format!("seed={seed}\n"));
        }
        if let Some(w) = &self.warning {
            out.push_str(&format!("warning={w}\n"));
        }
        for (k, v) in &self.config_echo {
            out.push_str(&format!("config.{k}={v}\n"));
        }
        out
    }
}

/// Score the test split and compute overall, seen-only, and unseen-only
/// AUROC. A missing anomaly class leaves its metric absent.
pub fn report(model: &Model, test: &TestSplit) -> Result<EvalReport> {
    let n_normal = test.count(TestLabel::Normal);
    let n_seen = test.count(TestLabel::Seen);
    let n_unseen = test.count(TestLabel::Unseen);
    if n_normal == 0 {
        return Err(Error::Contract("test split has no normal rows".into()));
    }
    if n_seen + n_unseen == 0 {
        return Err(Error::Contract("test split has no anomalies".into()));
    }
    let scores = score_dataset(model, &test.points)?;

    let subset_auroc = |keep: &dyn Fn(TestLabel) -> bool| -> Result<f64> {
        let mut s = Vec::new();
        let mut l = Vec::new();
        for (score, label) in scores.iter().zip(&test.labels) {
            if keep(*label) {
                s.push(*score);
                l.push(label.is_anomaly());
            }
        }
        auroc(&s, &l)
    };

    let auroc_overall = subset_auroc(&|_| true)?;
    let auroc_seen = if n_seen > 0 {
        Some(subset_auroc(&|l| l != TestLabel::Unseen)?)
    } else {
        None
    };
    let auroc_unseen = if n_unseen > 0 {
        Some(subset_auroc(&|l| l != TestLabel::Seen)?)
    } else {
        None
    };
    let warning = if scores.windows(2).all(|w| w[0] == w[1]) {
        Some("all test scores are identical; AUROC degenerates to 0.5".to_string())
    } else {
        None
    };
    Ok(EvalReport {
        auroc_overall,
        auroc_seen,
        auroc_unseen,
        n_normal,
        n_seen,
        n_unseen,
        warning,
        seed: None,
        config_echo: Vec::new(),
    })
}

/// Build the model for a config, train it, and evaluate the test split.
pub fn run_experiment(
    spec: &ModelSpec,
    cfg: &TrainConfig,
    data: &SplitDataset,
) -> Result<(Model, TrainHistory, EvalReport)> {
    let mut model = spec.build_for(&cfg.loss_kind, data.dim(), &data.unlabeled, cfg)?;
    let history = train(&mut model, &data.train_view(), cfg)?;
    let rep = report(&model, &data.test)?;
    Ok((model, history, rep))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub value: f64,
    pub seed: u64,
    pub auroc: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub n_ok: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub parameter: String,
    pub cells: Vec<SweepCell>,
}

impl SweepResult {
    /// Per-value mean and sample standard deviation over the seeds that
    /// completed; failed cells stay out of the aggregates.
    pub fn summary(&self) -> Vec<SweepRow> {
        let mut values: Vec<f64> = Vec::new();
        for c in &self.cells {
            if !values.contains(&c.value) {
                values.push(c.value);
            }
        }
        values
            .iter()
            .map(|&value| {
                let ok: Vec<f64> = self
                    .cells
                    .iter()
                    .filter(|c| c.value == value)
                    .filter_map(|c| c.auroc)
                    .collect();
                let n_ok = ok.len();
                let mean = (n_ok > 0).then(|| ok.iter().sum::<f64>() / n_ok as f64);
                let std = mean.map(|m| {
                    if n_ok > 1 {
                        (ok.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n_ok - 1) as f64)
                            .sqrt()
                    } else {
                        0.0
                    }
                });
                SweepRow {
                    value,
                    mean,
                    std,
                    n_ok,
                }
            })
            .collect()
    }

    pub fn cells_csv(&self) -> String {
        let mut out = format!("{},seed,auroc,error\n", self.parameter);
        for c in &self.cells {
            let auroc = c.auroc.map_or(String::new(), |v| format!("{v}"));
            let error = c.error.clone().unwrap_or_default();
            out.push_str(&format!("{},{},{auroc},{error}\n", c.value, c.seed));
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = format!("{},mean_auroc,std_auroc,n_ok\n", self.parameter);
        for row in self.summary() {
            let mean = row.mean.map_or(String::new(), |v| format!("{v}"));
            let std = row.std.map_or(String::new(), |v| format!("{v}"));
            out.push_str(&format!("{},{mean},{std},{}\n", row.value, row.n_ok));
        }
        out
    }
}

fn run_cells<F>(cells: Vec<(f64, u64)>, workers: usize, run: F) -> Vec<SweepCell>
where
    F: Fn(f64, u64) -> Result<f64> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| {
        cells
            .par_iter()
            .map(|&(value, seed)| match run(value, seed) {
                Ok(auroc) => SweepCell {
                    value,
                    seed,
                    auroc: Some(auroc),
                    error: None,
                },
                Err(e) => SweepCell {
                    value,
                    seed,
                    auroc: None,
                    error: Some(e.to_string()),
                },
            })
            .collect()
    })
}

/// Train and evaluate per (alpha value, seed); cell failures are
/// recorded, not propagated.
pub fn alpha_sweep(
    values: &[f64],
    spec: &ModelSpec,
    base: &TrainConfig,
    data: &SplitDataset,
    n_seeds: u64,
    workers: usize,
) -> Result<SweepResult> {
    if base.loss_kind.alpha().is_none() {
        return Err(Error::Contract(format!(
            "alpha sweep needs a PU loss kind, got {}",
            base.loss_kind.name()
        )));
    }
    if n_seeds == 0 {
        return Err(Error::Contract("sweep needs at least one seed".into()));
    }
    for &v in values {
        Alpha::new(v)?;
    }
    let mut cells = Vec::new();
    for &v in values {
        for s in 0..n_seeds {
            cells.push((v, base.seed + s));
        }
    }
    let run = |value: f64, seed: u64| -> Result<f64> {
        let cfg = TrainConfig {
            loss_kind: base.loss_kind.with_alpha(Alpha::new(value)?),
            seed,
            ..base.clone()
        };
        let (_, _, rep) = run_experiment(spec, &cfg, data)?;
        Ok(rep.auroc_overall)
    };
    Ok(SweepResult {
        parameter: "alpha".to_string(),
        cells: run_cells(cells, workers, run),
    })
}

/// Rebuild the split per contamination count with alpha pinned to the
/// true rate, then train and evaluate per seed.
pub fn contamination_sweep(
    counts: &[usize],
    spec: &ModelSpec,
    base: &TrainConfig,
    pools: &Pools,
    gen_cfg: &GenConfig,
    n_seeds: u64,
    workers: usize,
) -> Result<SweepResult> {
    if base.loss_kind.alpha().is_none() {
        return Err(Error::Contract(format!(
            "contamination sweep needs a PU loss kind, got {}",
            base.loss_kind.name()
        )));
    }
    if n_seeds == 0 {
        return Err(Error::Contract("sweep needs at least one seed".into()));
    }
    let mut cells = Vec::new();
    for &c in counts {
        for s in 0..n_seeds {
            cells.push((c as f64, base.seed + s));
        }
    }
    let run = |value: f64, seed: u64| -> Result<f64> {
        let count = value as usize;
        let gen = GenConfig {
            n_unlabeled_seen: count,
            ..gen_cfg.clone()
        };
        let data = build_contaminated_split(pools, &gen)?;
        let cfg = TrainConfig {
            loss_kind: base
                .loss_kind
                .with_alpha(Alpha::new(gen.contamination_rate())?),
            seed,
            ..base.clone()
        };
        let (_, _, rep) = run_experiment(spec, &cfg, &data)?;
        Ok(rep.auroc_overall)
    };
    Ok(SweepResult {
        parameter: "n_unlabeled_seen".to_string(),
        cells: run_cells(cells, workers, run),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContourGrid {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// Row-major: `scores[iy * xs.len() + ix]`.
    pub scores: Vec<f64>,
}

impl ContourGrid {
    /// One `x,y,score` row per lattice point, row-major, so the file is
    /// self-describing for external plotting.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,score\n");
        for (iy, &y) in self.ys.iter().enumerate() {
            for (ix, &x) in self.xs.iter().enumerate() {
                out.push_str(&format!(
                    "{x},{y},{}\n",
                    self.scores[iy * self.xs.len() + ix]
                ));
            }
        }
        out
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Score a 2-D model on an inclusive lattice over the given ranges.
pub fn contour_grid(
    model: &Model,
    x_range: (f64, f64),
    y_range: (f64, f64),
    resolution: (usize, usize),
) -> Result<ContourGrid> {
    if model.input_dim() != 2 {
        return Err(Error::Contract(format!(
            "contour grids need a 2-D model, got input dimension {}",
            model.input_dim()
        )));
    }
    if resolution.0 < 2 || resolution.1 < 2 {
        return Err(Error::Contract(format!(
            "resolution must be at least 2 per axis, got {resolution:?}"
        )));
    }
    let xs = linspace(x_range.0, x_range.1, resolution.0);
    let ys = linspace(y_range.0, y_range.1, resolution.1);
    let mut scores = Vec::with_capacity(xs.len() * ys.len());
    for &y in &ys {
        for &x in &xs {
            scores.push(score_point(model, &Tensor::vector(vec![x, y])?)?);
        }
    }
    Ok(ContourGrid { xs, ys, scores })
}
