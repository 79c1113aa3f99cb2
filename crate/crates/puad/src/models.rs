//! Model backbones producing per-point anomaly scores.
//!
//! Three dense backbones: an autoencoder scored by reconstruction error
//! (optionally denoising), a bias-free feature extractor scored by
//! squared distance to a fixed center, and a single-logit classifier for
//! the PU binary baseline. Hidden layers use leaky-relu (slope 0.01);
//! each network's final layer is linear.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{BoundParams, Graph, NodeId, ParameterSet, Tensor};
use crate::data::Matrix;
use crate::error::{Error, Result};
use crate::losses::LossKind;
use crate::seeding::{rng_stream, stream};
use crate::trainer::{train, TrainConfig};

pub const HIDDEN_LEAKY_SLOPE: f64 = 0.01;

/// Center coordinates below this magnitude are pushed away from zero so
/// the center never collapses onto the all-zero feature solution.
pub const CENTER_CLAMP: f64 = 0.1;

fn glorot_uniform(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Vec<f64> {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..fan_in * fan_out)
        .map(|_| rng.gen_range(-a..a))
        .collect()
}

fn init_mlp(
    params: &mut ParameterSet,
    prefix: &str,
    widths: &[usize],
    bias: bool,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    if widths.len() < 2 || widths.contains(&0) {
        return Err(Error::Contract(format!(
            "{prefix} widths must list at least input and output, all positive: {widths:?}"
        )));
    }
    for i in 0..widths.len() - 1 {
        let (n_in, n_out) = (widths[i], widths[i + 1]);
        params.insert(
            &format!("{prefix}{i}_w"),
            Tensor::matrix(n_in, n_out, glorot_uniform(rng, n_in, n_out))?,
        )?;
        if bias {
            params.insert(&format!("{prefix}{i}_b"), Tensor::zeros(&[n_out])?)?;
        }
    }
    Ok(())
}

fn mlp_forward(
    g: &mut Graph,
    bound: &BoundParams,
    prefix: &str,
    widths: &[usize],
    bias: bool,
    mut x: NodeId,
) -> Result<NodeId> {
    let n_layers = widths.len() - 1;
    for i in 0..n_layers {
        let w = bound.id(&format!("{prefix}{i}_w"));
        let b = bias.then(|| bound.id(&format!("{prefix}{i}_b")));
        x = g.affine(x, w, b)?;
        if i + 1 < n_layers {
            x = g.leaky_relu(x, HIDDEN_LEAKY_SLOPE);
        }
    }
    Ok(x)
}

/// Autoencoder; `noise_sigma > 0` makes it denoising during training.
#[derive(Debug, Clone, PartialEq)]
pub struct AeModel {
    pub encoder_widths: Vec<usize>,
    pub decoder_widths: Vec<usize>,
    pub noise_sigma: f64,
    pub params: ParameterSet,
}

impl AeModel {
    pub fn new(
        input_dim: usize,
        hidden: &[usize],
        latent_dim: usize,
        noise_sigma: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if latent_dim == 0 {
            return Err(Error::Contract("latent_dim must be at least 1".into()));
        }
        if noise_sigma < 0.0 {
            return Err(Error::Contract("noise_sigma must be nonnegative".into()));
        }
        let mut encoder_widths = vec![input_dim];
        encoder_widths.extend_from_slice(hidden);
        encoder_widths.push(latent_dim);
        let mut decoder_widths = vec![latent_dim];
        decoder_widths.extend(hidden.iter().rev());
        decoder_widths.push(input_dim);
        let mut params = ParameterSet::new();
        init_mlp(&mut params, "enc", &encoder_widths, true, rng)?;
        init_mlp(&mut params, "dec", &decoder_widths, true, rng)?;
        Ok(AeModel {
            encoder_widths,
            decoder_widths,
            noise_sigma,
            params,
        })
    }

    pub fn from_parts(
        encoder_widths: Vec<usize>,
        decoder_widths: Vec<usize>,
        noise_sigma: f64,
        params: ParameterSet,
    ) -> Result<Self> {
        if encoder_widths.first() != decoder_widths.last() {
            return Err(Error::Contract(
                "decoder output dimension must equal the input dimension".into(),
            ));
        }
        if encoder_widths.last() != decoder_widths.first() {
            return Err(Error::Contract(
                "decoder input must equal the latent dimension".into(),
            ));
        }
        Ok(AeModel {
            encoder_widths,
            decoder_widths,
            noise_sigma,
            params,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.encoder_widths[0]
    }

    pub fn latent_dim(&self) -> usize {
        *self.encoder_widths.last().expect("non-empty widths")
    }

    pub fn encode(&self, g: &mut Graph, bound: &BoundParams, x: NodeId) -> Result<NodeId> {
        mlp_forward(g, bound, "enc", &self.encoder_widths, true, x)
    }

    pub fn decode(&self, g: &mut Graph, bound: &BoundParams, z: NodeId) -> Result<NodeId> {
        mlp_forward(g, bound, "dec", &self.decoder_widths, true, z)
    }

    /// ||D(E(x + noise)) - x||. `noise` is `Some` only during denoising
    /// training; evaluation passes `None` regardless of `noise_sigma`.
    pub fn reconstruction_error(
        &self,
        g: &mut Graph,
        bound: &BoundParams,
        x: &Tensor,
        noise: Option<&Tensor>,
    ) -> Result<NodeId> {
        if x.shape() != [self.input_dim()] {
            return Err(Error::Shape(format!(
                "input has shape {:?}, model expects [{}]",
                x.shape(),
                self.input_dim()
            )));
        }
        let x_leaf = g.leaf(x.clone());
        let encoder_input = match noise {
            Some(eps) => {
                if self.noise_sigma == 0.0 {
                    return Err(Error::Contract(
                        "noise passed to a model with noise_sigma = 0".into(),
                    ));
                }
                if eps.shape() != x.shape() {
                    return Err(Error::Shape(format!(
                        "noise shape {:?} does not match input {:?}",
                        eps.shape(),
                        x.shape()
                    )));
                }
                let eps_leaf = g.leaf(eps.clone());
                g.add(x_leaf, eps_leaf)?
            }
            None => x_leaf,
        };
        let z = self.encode(g, bound, encoder_input)?;
        let recon = self.decode(g, bound, z)?;
        let diff = g.sub(recon, x_leaf)?;
        Ok(g.l2_norm(diff))
    }
}

/// Bias-free feature extractor with a fixed nonzero center.
#[derive(Debug, Clone, PartialEq)]
pub struct SvddModel {
    pub widths: Vec<usize>,
    pub center: Tensor,
    pub params: ParameterSet,
}

impl SvddModel {
    pub fn from_parts(widths: Vec<usize>, center: Tensor, params: ParameterSet) -> Result<Self> {
        if center.shape() != [*widths.last().expect("non-empty widths")] {
            return Err(Error::Shape(format!(
                "center has shape {:?}, extractor produces [{}]",
                center.shape(),
                widths.last().expect("non-empty widths")
            )));
        }
        if center.data().iter().all(|&v| v == 0.0) {
            return Err(Error::Contract("center must not be the zero vector".into()));
        }
        if let Some(name) = params.names().find(|n| n.ends_with("_b")) {
            return Err(Error::Contract(format!(
                "SVDD parameters must be bias-free, found {name:?}"
            )));
        }
        Ok(SvddModel {
            widths,
            center,
            params,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn features(&self, g: &mut Graph, bound: &BoundParams, x: NodeId) -> Result<NodeId> {
        mlp_forward(g, bound, "enc", &self.widths, false, x)
    }

    /// ||f(x) - c||^2.
    pub fn svdd_score(&self, g: &mut Graph, bound: &BoundParams, x: &Tensor) -> Result<NodeId> {
        if x.shape() != [self.input_dim()] {
            return Err(Error::Shape(format!(
                "input has shape {:?}, model expects [{}]",
                x.shape(),
                self.input_dim()
            )));
        }
        let x_leaf = g.leaf(x.clone());
        let f = self.features(g, bound, x_leaf)?;
        let c = g.leaf(self.center.clone());
        let diff = g.sub(f, c)?;
        Ok(g.sq_l2_norm(diff))
    }
}

/// Dense network ending in one unbounded logit.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    pub widths: Vec<usize>,
    pub params: ParameterSet,
}

impl ClassifierModel {
    pub fn new(input_dim: usize, hidden: &[usize], rng: &mut ChaCha8Rng) -> Result<Self> {
        let mut widths = vec![input_dim];
        widths.extend_from_slice(hidden);
        widths.push(1);
        let mut params = ParameterSet::new();
        init_mlp(&mut params, "clf", &widths, true, rng)?;
        Ok(ClassifierModel { widths, params })
    }

    pub fn from_parts(widths: Vec<usize>, params: ParameterSet) -> Result<Self> {
        if widths.last() != Some(&1) {
            return Err(Error::Contract("classifier must end in one logit".into()));
        }
        Ok(ClassifierModel { widths, params })
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn logit(&self, g: &mut Graph, bound: &BoundParams, x: &Tensor) -> Result<NodeId> {
        if x.shape() != [self.input_dim()] {
            return Err(Error::Shape(format!(
                "input has shape {:?}, model expects [{}]",
                x.shape(),
                self.input_dim()
            )));
        }
        let x_leaf = g.leaf(x.clone());
        mlp_forward(g, bound, "clf", &self.widths, true, x_leaf)
    }
}

/// Mean extractor output over the unlabeled data, with small coordinates
/// clamped to `sign * CENTER_CLAMP` (sign of 0 taken as +) so the center
/// is never the zero vector.
pub fn init_center(widths: &[usize], params: &ParameterSet, unlabeled: &Matrix) -> Result<Tensor> {
    if unlabeled.rows() == 0 {
        return Err(Error::Contract(
            "init_center needs a non-empty dataset".into(),
        ));
    }
    let feature_dim = *widths.last().expect("non-empty widths");
    let mut acc = vec![0.0; feature_dim];
    let mut g = Graph::new();
    let bound = params.bind(&mut g);
    for i in 0..unlabeled.rows() {
        let x = g.leaf(unlabeled.row_tensor(i));
        let f = mlp_forward(&mut g, &bound, "enc", widths, false, x)?;
        for (a, v) in acc.iter_mut().zip(g.value(f).data()) {
            *a += v;
        }
    }
    let n = unlabeled.rows() as f64;
    let center: Vec<f64> = acc
        .into_iter()
        .map(|s| {
            let c = s / n;
            if c.abs() < CENTER_CLAMP {
                if c < 0.0 {
                    -CENTER_CLAMP
                } else {
                    CENTER_CLAMP
                }
            } else {
                c
            }
        })
        .collect();
    Tensor::vector(center)
}

/// DeepSVDD pretraining protocol: train an autoencoder on the unlabeled
/// data, keep the encoder weight matrices (biases dropped), then set the
/// center to the mean extractor output.
pub fn pretrain_svdd(
    input_dim: usize,
    hidden: &[usize],
    feature_dim: usize,
    unlabeled: &Matrix,
    cfg: &TrainConfig,
) -> Result<SvddModel> {
    let mut rng = rng_stream(cfg.seed, stream::INIT);
    let ae = AeModel::new(input_dim, hidden, feature_dim, 0.0, &mut rng)?;
    let widths = ae.encoder_widths.clone();

    let pretrain_cfg = TrainConfig {
        loss_kind: LossKind::Ae,
        max_epochs: cfg.pretrain_epochs,
        ..cfg.clone()
    };
    let empty = Matrix::empty(input_dim);
    let view = crate::data::TrainData {
        unlabeled,
        anomalies: &empty,
        val_unlabeled: &empty,
        val_anomalies: &empty,
    };
    let mut model = Model::Ae(ae);
    train(&mut model, &view, &pretrain_cfg)?;
    let Model::Ae(trained) = model else {
        unreachable!("pretraining preserves the model kind");
    };

    let mut params = ParameterSet::new();
    for i in 0..widths.len() - 1 {
        let name = format!("enc{i}_w");
        let w = trained
            .params
            .get(&name)
            .ok_or_else(|| Error::Contract(format!("missing {name} after pretraining")))?;
        params.insert(&name, w.clone())?;
    }
    let center = init_center(&widths, &params, unlabeled)?;
    SvddModel::from_parts(widths, center, params)
}

/// A trained (or initialized) detector of any backbone kind.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Ae(AeModel),
    Svdd(SvddModel),
    Classifier(ClassifierModel),
}

impl Model {
    pub fn params(&self) -> &ParameterSet {
        match self {
            Model::Ae(m) => &m.params,
            Model::Svdd(m) => &m.params,
            Model::Classifier(m) => &m.params,
        }
    }

    pub fn params_mut(&mut self) -> &mut ParameterSet {
        match self {
            Model::Ae(m) => &mut m.params,
            Model::Svdd(m) => &mut m.params,
            Model::Classifier(m) => &mut m.params,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Model::Ae(m) => m.input_dim(),
            Model::Svdd(m) => m.input_dim(),
            Model::Classifier(m) => m.input_dim(),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Model::Ae(_) => "ae",
            Model::Svdd(_) => "svdd",
            Model::Classifier(_) => "classifier",
        }
    }

    /// Header lines (kind, widths, noise sigma, center) followed by the
    /// parameter table.
    pub fn to_text(&self) -> String {
        let join = |w: &[usize]| {
            w.iter()
                .map(|d| d.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        let mut out = String::from("puad-model v1\n");
        match self {
            Model::Ae(m) => {
                out.push_str("kind=ae\n");
                out.push_str(&format!("encoder_widths={}\n", join(&m.encoder_widths)));
                out.push_str(&format!("decoder_widths={}\n", join(&m.decoder_widths)));
                out.push_str(&format!("noise_sigma={:.16e}\n", m.noise_sigma));
            }
            Model::Svdd(m) => {
                out.push_str("kind=svdd\n");
                out.push_str(&format!("widths={}\n", join(&m.widths)));
                let center: Vec<String> = m
                    .center
                    .data()
                    .iter()
                    .map(|v| format!("{v:.16e}"))
                    .collect();
                out.push_str(&format!("center={}\n", center.join(",")));
            }
            Model::Classifier(m) => {
                out.push_str("kind=classifier\n");
                out.push_str(&format!("widths={}\n", join(&m.widths)));
            }
        }
        out.push_str("params:\n");
        out.push_str(&self.params().to_text());
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some("puad-model v1") {
            return Err(Error::Format("not a puad-model v1 file".into()));
        }
        let mut header = std::collections::HashMap::new();
        let mut body = String::new();
        let mut in_params = false;
        for line in lines {
            if in_params {
                body.push_str(line);
                body.push('\n');
            } else if line == "params:" {
                in_params = true;
            } else if let Some((k, v)) = line.split_once('=') {
                header.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        if !in_params {
            return Err(Error::Format("model file has no params section".into()));
        }
        let params = ParameterSet::from_text(&body)?;
        let widths_of = |key: &str| -> Result<Vec<usize>> {
            header
                .get(key)
                .ok_or_else(|| Error::Format(format!("model header missing {key}")))?
                .split(',')
                .map(|d| {
                    d.parse::<usize>()
                        .map_err(|_| Error::Format(format!("bad width {d:?} in {key}")))
                })
                .collect()
        };
        match header.get("kind").map(String::as_str) {
            Some("ae") => {
                let noise_sigma = header
                    .get("noise_sigma")
                    .ok_or_else(|| Error::Format("model header missing noise_sigma".into()))?
                    .parse::<f64>()
                    .map_err(|_| Error::Format("bad noise_sigma".into()))?;
                AeModel::from_parts(
                    widths_of("encoder_widths")?,
                    widths_of("decoder_widths")?,
                    noise_sigma,
                    params,
                )
                .map(Model::Ae)
            }
            Some("svdd") => {
                let center: Vec<f64> = header
                    .get("center")
                    .ok_or_else(|| Error::Format("model header missing center".into()))?
                    .split(',')
                    .map(|v| {
                        v.parse::<f64>()
                            .map_err(|_| Error::Format(format!("bad center value {v:?}")))
                    })
                    .collect::<Result<_>>()?;
                SvddModel::from_parts(widths_of("widths")?, Tensor::vector(center)?, params)
                    .map(Model::Svdd)
            }
            Some("classifier") => {
                ClassifierModel::from_parts(widths_of("widths")?, params).map(Model::Classifier)
            }
            other => Err(Error::Format(format!("unknown model kind {other:?}"))),
        }
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Model::from_text(&text)
    }
}

/// Architecture knobs shared by every backbone; which backbone gets
/// built follows from the loss kind.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub hidden: Vec<usize>,
    pub latent_dim: usize,
    pub noise_sigma: f64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            hidden: vec![32],
            latent_dim: 2,
            noise_sigma: 0.0,
        }
    }
}

impl ModelSpec {
    pub fn build_for(
        &self,
        loss: &LossKind,
        input_dim: usize,
        unlabeled: &Matrix,
        cfg: &TrainConfig,
    ) -> Result<Model> {
        match loss {
            LossKind::Ae | LossKind::Dae | LossKind::Abc | LossKind::PuBce(_) => {
                let mut rng = rng_stream(cfg.seed, stream::INIT);
                let sigma = if matches!(loss, LossKind::Dae) && self.noise_sigma == 0.0 {
                    0.1
                } else {
                    self.noise_sigma
                };
                Ok(Model::Ae(AeModel::new(
                    input_dim,
                    &self.hidden,
                    self.latent_dim,
                    sigma,
                    &mut rng,
                )?))
            }
            LossKind::Svdd | LossKind::Sad | LossKind::PuSad(_) => Ok(Model::Svdd(pretrain_svdd(
                input_dim,
                &self.hidden,
                self.latent_dim,
                unlabeled,
                cfg,
            )?)),
            LossKind::PuLogistic(_) => {
                let mut rng = rng_stream(cfg.seed, stream::INIT);
                Ok(Model::Classifier(ClassifierModel::new(
                    input_dim,
                    &self.hidden,
                    &mut rng,
                )?))
            }
        }
    }
}
