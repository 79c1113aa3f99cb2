//! The five subcommands behind the `puad` binary.

use std::path::{Path, PathBuf};
use std::time::Instant;

use super::config::{DataMode, RunConfig};
use super::manifest::{sha256_file, RunManifest};
use crate::data::{
    build_contaminated_split, downsample_images, gen_toy_pools, load_csv, load_idx_images,
    pools_from_labeled, Pools, SplitDataset, TestLabel, TestSplit,
};
use crate::error::{Error, Result};
use crate::eval::{alpha_sweep, contamination_sweep, contour_grid, report, run_experiment};
use crate::models::Model;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    Alpha,
    Contamination,
}

fn hash_inputs(paths: &[PathBuf]) -> Result<Vec<(String, String)>> {
    paths
        .iter()
        .map(|p| Ok((p.display().to_string(), sha256_file(p)?)))
        .collect()
}

fn sibling_manifest(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest");
    PathBuf::from(s)
}

/// Source pools for the configured data mode.
fn build_pools(cfg: &RunConfig) -> Result<(Pools, Vec<PathBuf>)> {
    match &cfg.mode {
        DataMode::Toy2d => Ok((gen_toy_pools(&cfg.gen)?, Vec::new())),
        DataMode::Idx {
            images,
            labels,
            normal_class,
            unseen_class,
            downsample_factor,
        } => {
            let (matrix, class_labels) = load_idx_images(images, labels)?;
            let matrix = if *downsample_factor > 1 {
                downsample_images(&matrix, *downsample_factor)?
            } else {
                matrix
            };
            let pools = pools_from_labeled(&matrix, &class_labels, *normal_class, *unseen_class)?;
            Ok((pools, vec![images.clone(), labels.clone()]))
        }
    }
}

fn build_dataset(cfg: &RunConfig) -> Result<(SplitDataset, Vec<PathBuf>)> {
    let (pools, inputs) = build_pools(cfg)?;
    Ok((build_contaminated_split(&pools, &cfg.gen)?, inputs))
}

pub fn cmd_generate(config_path: &Path, sets: &[(String, String)], out_dir: &Path) -> Result<()> {
    let started = Instant::now();
    let cfg = RunConfig::load(config_path, sets)?;
    let (data, mut inputs) = build_dataset(&cfg)?;
    let written = data.save_dir(out_dir)?;
    inputs.insert(0, config_path.to_path_buf());
    RunManifest {
        command: "generate".into(),
        seed: cfg.seed,
        resolved: cfg.resolved().to_vec(),
        inputs: hash_inputs(&inputs)?,
        outputs: written.iter().map(|p| p.display().to_string()).collect(),
        duration: started.elapsed(),
    }
    .write_atomic(&out_dir.join("manifest.txt"))?;
    Ok(())
}

const SPLIT_FILES: &[&str] = &[
    "unlabeled.csv",
    "anomalies.csv",
    "val_unlabeled.csv",
    "val_anomalies.csv",
    "test_points.csv",
    "test_labels.csv",
];

pub fn cmd_train(
    config_path: &Path,
    sets: &[(String, String)],
    data_dir: &Path,
    out_dir: &Path,
) -> Result<()> {
    let started = Instant::now();
    let cfg = RunConfig::load(config_path, sets)?;
    let data = SplitDataset::load_dir(data_dir)?;
    let (model, history, _) = run_experiment(&cfg.model, &cfg.train, &data)?;

    std::fs::create_dir_all(out_dir)?;
    let model_path = out_dir.join("model.txt");
    model.save(&model_path)?;
    let history_path = out_dir.join("history.csv");
    history.write_csv(&history_path)?;

    let mut inputs = vec![config_path.to_path_buf()];
    for name in SPLIT_FILES {
        let p = data_dir.join(name);
        if p.exists() {
            inputs.push(p);
        }
    }
    RunManifest {
        command: "train".into(),
        seed: cfg.seed,
        resolved: cfg.resolved().to_vec(),
        inputs: hash_inputs(&inputs)?,
        outputs: vec![
            model_path.display().to_string(),
            history_path.display().to_string(),
        ],
        duration: started.elapsed(),
    }
    .write_atomic(&out_dir.join("manifest.txt"))?;
    Ok(())
}

fn load_test_split(data_dir: &Path) -> Result<TestSplit> {
    let (points, _) = load_csv(&data_dir.join("test_points.csv"))?;
    let (_, labels) = load_csv(&data_dir.join("test_labels.csv"))?;
    let labels: Vec<TestLabel> = labels
        .ok_or_else(|| Error::Format("test_labels.csv has no label column".into()))?
        .iter()
        .map(|s| TestLabel::parse(s))
        .collect::<Result<_>>()?;
    if labels.len() != points.rows() {
        return Err(Error::Format(format!(
            "{} test labels for {} test rows",
            labels.len(),
            points.rows()
        )));
    }
    Ok(TestSplit { points, labels })
}

pub fn cmd_eval(model_path: &Path, data_dir: &Path, out_path: &Path) -> Result<()> {
    let started = Instant::now();
    let model = Model::load(model_path)?;
    let test = load_test_split(data_dir)?;
    let mut rep = report(&model, &test)?;
    rep.config_echo = vec![
        ("model".into(), model_path.display().to_string()),
        ("data".into(), data_dir.display().to_string()),
    ];
    std::fs::write(out_path, rep.to_text())?;

    let inputs = vec![
        model_path.to_path_buf(),
        data_dir.join("test_points.csv"),
        data_dir.join("test_labels.csv"),
    ];
    RunManifest {
        command: "eval".into(),
        seed: 0,
        resolved: Vec::new(),
        inputs: hash_inputs(&inputs)?,
        outputs: vec![out_path.display().to_string()],
        duration: started.elapsed(),
    }
    .write_atomic(&sibling_manifest(out_path))?;
    Ok(())
}

pub fn cmd_sweep(
    kind: SweepKind,
    config_path: &Path,
    sets: &[(String, String)],
    out_dir: &Path,
) -> Result<()> {
    let started = Instant::now();
    let cfg = RunConfig::load(config_path, sets)?;
    let workers = cfg.effective_workers();
    let (result, mut inputs) = match kind {
        SweepKind::Alpha => {
            let (data, inputs) = build_dataset(&cfg)?;
            let result = alpha_sweep(
                &cfg.sweep_alphas,
                &cfg.model,
                &cfg.train,
                &data,
                cfg.sweep_seeds,
                workers,
            )?;
            (result, inputs)
        }
        SweepKind::Contamination => {
            let (pools, inputs) = build_pools(&cfg)?;
            let result = contamination_sweep(
                &cfg.sweep_counts,
                &cfg.model,
                &cfg.train,
                &pools,
                &cfg.gen,
                cfg.sweep_seeds,
                workers,
            )?;
            (result, inputs)
        }
    };

    std::fs::create_dir_all(out_dir)?;
    let cells_path = out_dir.join("sweep_cells.csv");
    std::fs::write(&cells_path, result.cells_csv())?;
    let summary_path = out_dir.join("sweep_summary.csv");
    std::fs::write(&summary_path, result.summary_csv())?;

    inputs.insert(0, config_path.to_path_buf());
    RunManifest {
        command: match kind {
            SweepKind::Alpha => "sweep-alpha".into(),
            SweepKind::Contamination => "sweep-contamination".into(),
        },
        seed: cfg.seed,
        resolved: cfg.resolved().to_vec(),
        inputs: hash_inputs(&inputs)?,
        outputs: vec![
            cells_path.display().to_string(),
            summary_path.display().to_string(),
        ],
        duration: started.elapsed(),
    }
    .write_atomic(&out_dir.join("manifest.txt"))?;
    Ok(())
}

pub fn cmd_contour(
    model_path: &Path,
    bounds: (f64, f64, f64, f64),
    resolution: (usize, usize),
    out_path: &Path,
) -> Result<()> {
    let started = Instant::now();
    let model = Model::load(model_path)?;
    let grid = contour_grid(
        &model,
        (bounds.0, bounds.1),
        (bounds.2, bounds.3),
        resolution,
    )?;
    std::fs::write(out_path, grid.to_csv())?;
    RunManifest {
        command: "contour".into(),
        seed: 0,
        resolved: Vec::new(),
        inputs: hash_inputs(&[model_path.to_path_buf()])?,
        outputs: vec![out_path.display().to_string()],
        duration: started.elapsed(),
    }
    .write_atomic(&sibling_manifest(out_path))?;
    Ok(())
}
