//! The full loss family: per-point losses, dataset objectives, and the
//! positive-unlabeled decomposition with its absolute-value correction.
//!
//! The PU objective estimates the normal-class risk from unlabeled and
//! labeled-anomaly means as `L_U^- - alpha * L_A^-`, which is unbiased
//! but can go negative on a minibatch; the training objective wraps it
//! in |.| so the gradient stays useful instead of diverging:
//! `alpha * L_A^+ + |L_U^- - alpha * L_A^-|`.

use crate::autodiff::{BoundParams, Graph, NodeId, Tensor};
use crate::error::{Error, Result};
use crate::models::Model;

/// Per-point reconstruction losses smaller than this are floored before
/// the `-log(1 - exp(-l))` branch, which is undefined at 0.
pub const BCE_FLOOR: f64 = 1e-7;

/// Floor under the per-point score in the `y/score` branch of the SAD
/// loss, which otherwise divides by zero when features hit the center.
pub const SAD_FLOOR: f64 = 1e-6;

/// Probability of anomaly occurrence in the unlabeled data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Alpha(f64);

impl Alpha {
    pub fn new(value: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::Config(format!(
                "alpha must be in [0, 1], got {value}"
            )));
        }
        Ok(Alpha(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Which objective a training run minimizes. PU variants carry the
/// mixture weight alpha.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossKind {
    Ae,
    Dae,
    Abc,
    Svdd,
    Sad,
    PuBce(Alpha),
    PuSad(Alpha),
    PuLogistic(Alpha),
}

impl LossKind {
    pub fn needs_anomalies(&self) -> bool {
        matches!(
            self,
            LossKind::Abc
                | LossKind::Sad
                | LossKind::PuBce(_)
                | LossKind::PuSad(_)
                | LossKind::PuLogistic(_)
        )
    }

    pub fn alpha(&self) -> Option<Alpha> {
        match self {
            LossKind::PuBce(a) | LossKind::PuSad(a) | LossKind::PuLogistic(a) => Some(*a),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LossKind::Ae => "ae",
            LossKind::Dae => "dae",
            LossKind::Abc => "abc",
            LossKind::Svdd => "svdd",
            LossKind::Sad => "sad",
            LossKind::PuBce(_) => "pu_bce",
            LossKind::PuSad(_) => "pu_sad",
            LossKind::PuLogistic(_) => "pu_logistic",
        }
    }

    /// Parse a config tag; `alpha` is used by the PU variants only.
    pub fn parse(tag: &str, alpha: f64) -> Result<Self> {
        match tag {
            "ae" => Ok(LossKind::Ae),
            "dae" => Ok(LossKind::Dae),
            "abc" => Ok(LossKind::Abc),
            "svdd" => Ok(LossKind::Svdd),
            "sad" => Ok(LossKind::Sad),
            "pu_bce" => Ok(LossKind::PuBce(Alpha::new(alpha)?)),
            "pu_sad" => Ok(LossKind::PuSad(Alpha::new(alpha)?)),
            "pu_logistic" => Ok(LossKind::PuLogistic(Alpha::new(alpha)?)),
            other => Err(Error::Config(format!("unknown loss kind {other:?}"))),
        }
    }

    pub fn with_alpha(&self, alpha: Alpha) -> Self {
        match self {
            LossKind::PuBce(_) => LossKind::PuBce(alpha),
            LossKind::PuSad(_) => LossKind::PuSad(alpha),
            LossKind::PuLogistic(_) => LossKind::PuLogistic(alpha),
            other => *other,
        }
    }
}

fn check_y(y: u8) -> Result<()> {
    if y > 1 {
        return Err(Error::Contract(format!("label must be 0 or 1, got {y}")));
    }
    Ok(())
}

/// Binary cross entropy over the reconstruction-error likelihood:
/// `(1-y) * l - y * log(1 - exp(-l))`, with `l` floored at `BCE_FLOOR`
/// in the y = 1 branch and the log term computed via expm1. For y = 0
/// this returns `ell` itself, exactly.
pub fn bce_point_loss(g: &mut Graph, ell: NodeId, y: u8) -> Result<NodeId> {
    check_y(y)?;
    if y == 0 {
        return Ok(ell);
    }
    let floored = g.floor_at(ell, BCE_FLOOR);
    let neg = g.scale(floored, -1.0);
    let em1 = g.expm1(neg);
    let one_minus = g.scale(em1, -1.0);
    let ln = g.log(one_minus)?;
    Ok(g.scale(ln, -1.0))
}

/// DeepSAD per-point loss `(1-y) * s + y / max(s, SAD_FLOOR)`.
pub fn sad_point_loss(g: &mut Graph, ell_tilde: NodeId, y: u8) -> Result<NodeId> {
    check_y(y)?;
    if y == 0 {
        return Ok(ell_tilde);
    }
    let floored = g.floor_at(ell_tilde, SAD_FLOOR);
    g.recip(floored)
}

/// Logistic surrogate for the PU binary classifier:
/// `softplus(-(2y - 1) * logit)` in the stable branch form.
pub fn logistic_point_loss(g: &mut Graph, logit: NodeId, y: u8) -> Result<NodeId> {
    check_y(y)?;
    let z = if y == 1 { g.scale(logit, -1.0) } else { logit };
    Ok(g.softplus(z))
}

/// Per-point loss selector used by the PU machinery.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointLoss {
    Bce,
    Sad,
    Logistic,
}

impl PointLoss {
    pub fn apply(self, g: &mut Graph, score: NodeId, y: u8) -> Result<NodeId> {
        match self {
            PointLoss::Bce => bce_point_loss(g, score, y),
            PointLoss::Sad => sad_point_loss(g, score, y),
            PointLoss::Logistic => logistic_point_loss(g, score, y),
        }
    }
}

/// Arithmetic mean of a per-point loss over a batch.
pub fn mean_objective<F>(g: &mut Graph, points: &[Tensor], mut point_loss: F) -> Result<NodeId>
where
    F: FnMut(&mut Graph, &Tensor) -> Result<NodeId>,
{
    if points.is_empty() {
        return Err(Error::Contract("mean objective over an empty batch".into()));
    }
    let mut losses = Vec::with_capacity(points.len());
    for x in points {
        losses.push(point_loss(g, x)?);
    }
    g.mean_many(&losses)
}

/// The three minibatch means of the PU decomposition.
#[derive(Debug, Clone, Copy)]
pub struct PuTerms {
    /// Mean anomaly-batch loss at y = 1.
    pub la_plus: NodeId,
    /// Mean unlabeled-batch loss at y = 0.
    pub lu_minus: NodeId,
    /// Mean anomaly-batch loss at y = 0.
    pub la_minus: NodeId,
}

/// Build the three PU terms from per-point score nodes. Each anomaly
/// score feeds both its y = 1 and y = 0 loss, so the network runs once
/// per point.
pub fn pu_terms_from_scores(
    g: &mut Graph,
    u_scores: &[NodeId],
    a_scores: &[NodeId],
    loss: PointLoss,
) -> Result<PuTerms> {
    if u_scores.is_empty() || a_scores.is_empty() {
        return Err(Error::Contract("PU terms need non-empty batches".into()));
    }
    let mut u_losses = Vec::with_capacity(u_scores.len());
    for &s in u_scores {
        u_losses.push(loss.apply(g, s, 0)?);
    }
    let mut a_plus = Vec::with_capacity(a_scores.len());
    let mut a_minus = Vec::with_capacity(a_scores.len());
    for &s in a_scores {
        a_plus.push(loss.apply(g, s, 1)?);
        a_minus.push(loss.apply(g, s, 0)?);
    }
    Ok(PuTerms {
        lu_minus: g.mean_many(&u_losses)?,
        la_plus: g.mean_many(&a_plus)?,
        la_minus: g.mean_many(&a_minus)?,
    })
}

/// Score both batches with `score`, then assemble the PU terms.
pub fn pu_terms<S>(
    g: &mut Graph,
    batch_u: &[Tensor],
    batch_a: &[Tensor],
    mut score: S,
    loss: PointLoss,
) -> Result<PuTerms>
where
    S: FnMut(&mut Graph, &Tensor) -> Result<NodeId>,
{
    if batch_u.is_empty() || batch_a.is_empty() {
        return Err(Error::Contract("PU terms need non-empty batches".into()));
    }
    let mut u_scores = Vec::with_capacity(batch_u.len());
    for x in batch_u {
        u_scores.push(score(g, x)?);
    }
    let mut a_scores = Vec::with_capacity(batch_a.len());
    for x in batch_a {
        a_scores.push(score(g, x)?);
    }
    pu_terms_from_scores(g, &u_scores, &a_scores, loss)
}

/// The abs-corrected PU objective
/// `alpha * L_A^+ + |L_U^- - alpha * L_A^-|`. The gradient flows through
/// |.| with sign semantics (0 at the kink).
pub fn pu_objective(g: &mut Graph, alpha: Alpha, terms: &PuTerms) -> Result<NodeId> {
    let la_plus_scaled = g.scale(terms.la_plus, alpha.value());
    let la_minus_scaled = g.scale(terms.la_minus, alpha.value());
    let diff = g.sub(terms.lu_minus, la_minus_scaled)?;
    let corrected = g.abs(diff);
    g.add(la_plus_scaled, corrected)
}

/// Value of the uncorrected estimator
/// `alpha * L_A^+ + L_U^- - alpha * L_A^-` on an already-built graph.
pub fn uncorrected_pu_value(g: &Graph, alpha: Alpha, terms: &PuTerms) -> f64 {
    let a = alpha.value();
    a * g.value(terms.la_plus).item() + g.value(terms.lu_minus).item()
        - a * g.value(terms.la_minus).item()
}

/// Ideal positive-negative risk
/// `alpha * E_A[loss(.,1)] + (1-alpha) * E_N[loss(.,0)]`, evaluated on
/// plug-in batches. Test-harness only: the normal batch is drawn from
/// the true normal distribution, which training never sees.
pub fn pn_ideal_objective<F>(
    alpha: Alpha,
    batch_a: &[Tensor],
    batch_n: &[Tensor],
    mut point_loss_value: F,
) -> Result<f64>
where
    F: FnMut(&Tensor, u8) -> Result<f64>,
{
    if batch_a.is_empty() || batch_n.is_empty() {
        return Err(Error::Contract(
            "PN objective needs non-empty batches".into(),
        ));
    }
    let mut a_sum = 0.0;
    for x in batch_a {
        a_sum += point_loss_value(x, 1)?;
    }
    let mut n_sum = 0.0;
    for x in batch_n {
        n_sum += point_loss_value(x, 0)?;
    }
    Ok(alpha.value() * a_sum / batch_a.len() as f64
        + (1.0 - alpha.value()) * n_sum / batch_n.len() as f64)
}

fn point_score(
    g: &mut Graph,
    model: &Model,
    bound: &BoundParams,
    x: &Tensor,
    noise: Option<&Tensor>,
) -> Result<NodeId> {
    match model {
        Model::Ae(m) => m.reconstruction_error(g, bound, x, noise),
        Model::Svdd(m) => {
            if noise.is_some() {
                return Err(Error::Contract("noise applies to AE models only".into()));
            }
            m.svdd_score(g, bound, x)
        }
        Model::Classifier(m) => {
            if noise.is_some() {
                return Err(Error::Contract("noise applies to AE models only".into()));
            }
            m.logit(g, bound, x)
        }
    }
}

fn check_model_kind(kind: &LossKind, model: &Model) -> Result<()> {
    let ok = matches!(
        (kind, model),
        (
            LossKind::Ae | LossKind::Dae | LossKind::Abc | LossKind::PuBce(_),
            Model::Ae(_)
        ) | (
            LossKind::Svdd | LossKind::Sad | LossKind::PuSad(_),
            Model::Svdd(_)
        ) | (LossKind::PuLogistic(_), Model::Classifier(_))
    );
    if ok {
        Ok(())
    } else {
        Err(Error::Contract(format!(
            "loss kind {} cannot drive a {} model",
            kind.name(),
            model.kind_name()
        )))
    }
}

/// Build the full minibatch objective for one loss kind.
///
/// `batch_a` must be present exactly when the kind is supervised.
/// Noise slices align with the corresponding batch and appear only for
/// denoising-AE training steps.
///
/// ABC and SAD combine their unlabeled and labeled terms pooled over
/// the combined dataset (weights N/(N+M) and M/(N+M)), matching how
/// those baselines are defined and trained in their source papers.
/// `set_sizes` supplies the dataset sizes (N, M) when the batches are
/// stratified subsamples; `None` means the batches are the full sets.
/// The PU kinds use the per-term means of the risk decomposition and
/// ignore `set_sizes`.
#[allow(clippy::too_many_arguments)]
pub fn objective_for(
    g: &mut Graph,
    kind: &LossKind,
    model: &Model,
    bound: &BoundParams,
    batch_u: &[Tensor],
    batch_a: Option<&[Tensor]>,
    noise_u: Option<&[Tensor]>,
    noise_a: Option<&[Tensor]>,
    set_sizes: Option<(usize, usize)>,
) -> Result<NodeId> {
    check_model_kind(kind, model)?;
    if batch_u.is_empty() {
        return Err(Error::Contract("unlabeled batch is empty".into()));
    }
    match (kind.needs_anomalies(), batch_a) {
        (true, None) => {
            return Err(Error::Contract(format!(
                "loss kind {} requires an anomaly batch",
                kind.name()
            )))
        }
        (false, Some(_)) => {
            return Err(Error::Contract(format!(
                "loss kind {} does not take an anomaly batch",
                kind.name()
            )))
        }
        _ => {}
    }
    if let Some(a) = batch_a {
        if a.is_empty() {
            return Err(Error::Contract("anomaly batch is empty".into()));
        }
    }
    for (name, noise, batch) in [
        ("unlabeled", noise_u, Some(batch_u)),
        ("anomaly", noise_a, batch_a),
    ] {
        if let Some(ns) = noise {
            let len = batch.map_or(0, <[Tensor]>::len);
            if ns.len() != len {
                return Err(Error::Contract(format!(
                    "{name} noise has {} entries for {len} points",
                    ns.len()
                )));
            }
        }
    }

    fn noise_at(ns: Option<&[Tensor]>, i: usize) -> Option<&Tensor> {
        ns.map(|ns| &ns[i])
    }

    let mut u_scores = Vec::with_capacity(batch_u.len());
    for (i, x) in batch_u.iter().enumerate() {
        u_scores.push(point_score(g, model, bound, x, noise_at(noise_u, i))?);
    }

    match kind {
        LossKind::Ae | LossKind::Dae | LossKind::Svdd => g.mean_many(&u_scores),
        LossKind::Abc | LossKind::Sad => {
            let loss = if matches!(kind, LossKind::Abc) {
                PointLoss::Bce
            } else {
                PointLoss::Sad
            };
            let batch_a = batch_a.expect("presence checked above");
            let (n, m) = set_sizes.unwrap_or((batch_u.len(), batch_a.len()));
            if n == 0 || m == 0 {
                return Err(Error::Contract(
                    "pooled objective needs positive set sizes".into(),
                ));
            }
            let mut u_losses = Vec::with_capacity(u_scores.len());
            for &s in &u_scores {
                u_losses.push(loss.apply(g, s, 0)?);
            }
            let mut a_losses = Vec::with_capacity(batch_a.len());
            for (i, x) in batch_a.iter().enumerate() {
                let s = point_score(g, model, bound, x, noise_at(noise_a, i))?;
                a_losses.push(loss.apply(g, s, 1)?);
            }
            let u_mean = g.mean_many(&u_losses)?;
            let a_mean = g.mean_many(&a_losses)?;
            let total = (n + m) as f64;
            let u_scaled = g.scale(u_mean, n as f64 / total);
            let a_scaled = g.scale(a_mean, m as f64 / total);
            g.add(u_scaled, a_scaled)
        }
        LossKind::PuBce(alpha) | LossKind::PuSad(alpha) | LossKind::PuLogistic(alpha) => {
            let loss = match kind {
                LossKind::PuBce(_) => PointLoss::Bce,
                LossKind::PuSad(_) => PointLoss::Sad,
                _ => PointLoss::Logistic,
            };
            let batch_a = batch_a.expect("presence checked above");
            let mut a_scores = Vec::with_capacity(batch_a.len());
            for (i, x) in batch_a.iter().enumerate() {
                a_scores.push(point_score(g, model, bound, x, noise_at(noise_a, i))?);
            }
            let terms = pu_terms_from_scores(g, &u_scores, &a_scores, loss)?;
            pu_objective(g, *alpha, &terms)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    use crate::autodiff::{grad_check, ParameterSet};
    use crate::models::AeModel;
    use crate::seeding::rng_stream;

    // Extended-precision oracle values (frozen).
    const BCE_5_1: f64 = 0.006760749449488558;
    const SOFTPLUS_1_5: f64 = 1.7014132779827524;
    const BCE_AT_FLOOR: f64 = 16.118095700958319;
    const SOFTPLUS_NEG_40: f64 = 4.248354255291589e-18;

    fn scalar_loss<F>(build: F) -> f64
    where
        F: FnOnce(&mut Graph) -> NodeId,
    {
        let mut g = Graph::new();
        let id = build(&mut g);
        g.value(id).item()
    }

    #[test]
    fn alpha_bounds() {
        assert!(Alpha::new(0.0).is_ok());
        assert!(Alpha::new(1.0).is_ok());
        assert!(Alpha::new(-0.1).is_err());
        assert!(Alpha::new(1.1).is_err());
    }

    #[test]
    fn bce_y0_is_the_score_itself() {
        let mut g = Graph::new();
        let ell = g.constant(0.37);
        let out = bce_point_loss(&mut g, ell, 0).unwrap();
        assert_eq!(out, ell);
    }

    #[test]
    fn bce_values() {
        let v = scalar_loss(|g| {
            let ell = g.constant(0.0);
            bce_point_loss(g, ell, 0).unwrap()
        });
        assert_eq!(v, 0.0);

        let ln2 = std::f64::consts::LN_2;
        let v = scalar_loss(|g| {
            let ell = g.constant(ln2);
            bce_point_loss(g, ell, 1).unwrap()
        });
        assert!((v - ln2).abs() < 1e-12);

        let v = scalar_loss(|g| {
            let ell = g.constant(5.0);
            bce_point_loss(g, ell, 1).unwrap()
        });
        assert!((v - BCE_5_1).abs() < 1e-12, "got {v}");

        // ell = 0 with y = 1 activates the floor.
        let v = scalar_loss(|g| {
            let ell = g.constant(0.0);
            bce_point_loss(g, ell, 1).unwrap()
        });
        assert!((v - BCE_AT_FLOOR).abs() < 1e-9, "got {v}");
    }

    #[test]
    fn bce_rejects_bad_label() {
        let mut g = Graph::new();
        let ell = g.constant(1.0);
        assert!(bce_point_loss(&mut g, ell, 2).is_err());
    }

    #[test]
    fn sad_values() {
        let v = scalar_loss(|g| {
            let s = g.constant(3.0);
            sad_point_loss(g, s, 0).unwrap()
        });
        assert_eq!(v, 3.0);
        let v = scalar_loss(|g| {
            let s = g.constant(2.0);
            sad_point_loss(g, s, 1).unwrap()
        });
        assert_eq!(v, 0.5);
        let v = scalar_loss(|g| {
            let s = g.constant(0.0);
            sad_point_loss(g, s, 1).unwrap()
        });
        assert_eq!(v, 1e6);
    }

    #[test]
    fn logistic_values() {
        let ln2 = std::f64::consts::LN_2;
        for y in [0u8, 1] {
            let v = scalar_loss(|g| {
                let l = g.constant(0.0);
                logistic_point_loss(g, l, y).unwrap()
            });
            assert!((v - ln2).abs() < 1e-15);
        }
        // Large positive logit with y = 1: near zero, no overflow.
        let v = scalar_loss(|g| {
            let l = g.constant(40.0);
            logistic_point_loss(g, l, 1).unwrap()
        });
        assert!(v.is_finite() && v >= 0.0);
        assert!((v - SOFTPLUS_NEG_40).abs() < 1e-30, "got {v}");

        let v = scalar_loss(|g| {
            let l = g.constant(1.5);
            logistic_point_loss(g, l, 0).unwrap()
        });
        assert!((v - SOFTPLUS_1_5).abs() < 1e-12);
    }

    #[test]
    fn mean_objective_values() {
        let pts: Vec<Tensor> = [1.0, 3.0].iter().map(|&v| Tensor::scalar(v)).collect();
        let mut g = Graph::new();
        let m = mean_objective(&mut g, &pts, |g, x| Ok(g.leaf(x.clone()))).unwrap();
        assert_eq!(g.value(m).item(), 2.0);

        let zeros: Vec<Tensor> = (0..4).map(|_| Tensor::scalar(0.0)).collect();
        let mut g = Graph::new();
        let m = mean_objective(&mut g, &zeros, |g, x| Ok(g.leaf(x.clone()))).unwrap();
        assert_eq!(g.value(m).item(), 0.0);

        let mut g = Graph::new();
        assert!(mean_objective(&mut g, &[], |g, x| Ok(g.leaf(x.clone()))).is_err());
    }

    #[test]
    fn mean_objective_matches_sum_over_len() {
        let mut rng = rng_stream(5, 0);
        let vals: Vec<f64> = (0..17).map(|_| rng.gen_range(0.0..4.0)).collect();
        let pts: Vec<Tensor> = vals.iter().map(|&v| Tensor::scalar(v)).collect();
        let mut g = Graph::new();
        let m = mean_objective(&mut g, &pts, |g, x| Ok(g.leaf(x.clone()))).unwrap();
        let expected = vals.iter().sum::<f64>() / vals.len() as f64;
        assert!((g.value(m).item() - expected).abs() < 1e-15);
    }

    fn score_first_coord(g: &mut Graph, x: &Tensor) -> Result<NodeId> {
        // score(x) = x[0]^2, a simple nonnegative differentiable stand-in
        let leaf = g.leaf(Tensor::scalar(x.data()[0]));
        g.mul(leaf, leaf)
    }

    #[test]
    fn pu_terms_identical_batches_have_equal_minus_terms() {
        let batch: Vec<Tensor> = [0.4, 1.2, -0.3]
            .iter()
            .map(|&v| Tensor::vector(vec![v]).unwrap())
            .collect();
        let mut g = Graph::new();
        let terms = pu_terms(&mut g, &batch, &batch, score_first_coord, PointLoss::Bce).unwrap();
        assert_eq!(
            g.value(terms.lu_minus).item().to_bits(),
            g.value(terms.la_minus).item().to_bits()
        );
    }

    #[test]
    fn pu_terms_single_zero_score_floors_la_plus() {
        let batch = vec![Tensor::vector(vec![0.0]).unwrap()];
        let mut g = Graph::new();
        let terms = pu_terms(&mut g, &batch, &batch, score_first_coord, PointLoss::Bce).unwrap();
        assert_eq!(g.value(terms.lu_minus).item(), 0.0);
        assert_eq!(g.value(terms.la_minus).item(), 0.0);
        assert!((g.value(terms.la_plus).item() - BCE_AT_FLOOR).abs() < 1e-9);
    }

    #[test]
    fn pu_terms_match_independent_means() {
        let mut rng = rng_stream(6, 0);
        let u: Vec<Tensor> = (0..9)
            .map(|_| Tensor::vector(vec![rng.gen_range(-2.0..2.0)]).unwrap())
            .collect();
        let a: Vec<Tensor> = (0..4)
            .map(|_| Tensor::vector(vec![rng.gen_range(-2.0..2.0)]).unwrap())
            .collect();
        let mut g = Graph::new();
        let terms = pu_terms(&mut g, &u, &a, score_first_coord, PointLoss::Bce).unwrap();

        // straight-line recomputation of the three means
        let bce1 = |s: f64| -(-(-s.max(BCE_FLOOR)).exp_m1()).ln();
        let score = |x: &Tensor| x.data()[0] * x.data()[0];
        let lu: f64 = u.iter().map(&score).sum::<f64>() / u.len() as f64;
        let la_m: f64 = a.iter().map(&score).sum::<f64>() / a.len() as f64;
        let la_p: f64 = a.iter().map(|x| bce1(score(x))).sum::<f64>() / a.len() as f64;

        assert!((g.value(terms.lu_minus).item() - lu).abs() < 1e-12);
        assert!((g.value(terms.la_minus).item() - la_m).abs() < 1e-12);
        assert!((g.value(terms.la_plus).item() - la_p).abs() < 1e-12);
    }

    fn terms_from_values(g: &mut Graph, la_plus: f64, lu_minus: f64, la_minus: f64) -> PuTerms {
        PuTerms {
            la_plus: g.constant(la_plus),
            lu_minus: g.constant(lu_minus),
            la_minus: g.constant(la_minus),
        }
    }

    #[test]
    fn pu_objective_alpha_zero_reduces_to_unlabeled_term() {
        let mut g = Graph::new();
        let terms = terms_from_values(&mut g, 2.7, 0.81, 5.3);
        let obj = pu_objective(&mut g, Alpha::new(0.0).unwrap(), &terms).unwrap();
        assert_eq!(g.value(obj).item().to_bits(), 0.81f64.to_bits());
    }

    #[test]
    fn pu_objective_alpha_one_identical_batches_is_la_plus() {
        let batch: Vec<Tensor> = [0.9, -1.4]
            .iter()
            .map(|&v| Tensor::vector(vec![v]).unwrap())
            .collect();
        let mut g = Graph::new();
        let terms = pu_terms(&mut g, &batch, &batch, score_first_coord, PointLoss::Bce).unwrap();
        let obj = pu_objective(&mut g, Alpha::new(1.0).unwrap(), &terms).unwrap();
        assert_eq!(
            g.value(obj).item().to_bits(),
            g.value(terms.la_plus).item().to_bits()
        );
    }

    #[test]
    fn pu_objective_hand_arithmetic() {
        let mut g = Graph::new();
        let terms = terms_from_values(&mut g, 2.0, 0.3, 5.0);
        let obj = pu_objective(&mut g, Alpha::new(0.1).unwrap(), &terms).unwrap();
        assert!((g.value(obj).item() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn pn_ideal_objective_edges_and_random() {
        let a: Vec<Tensor> = [1.0, 2.0].iter().map(|&v| Tensor::scalar(v)).collect();
        let n: Vec<Tensor> = [3.0, 5.0].iter().map(|&v| Tensor::scalar(v)).collect();
        let loss = |x: &Tensor, y: u8| Ok(x.item() + y as f64);
        let v = pn_ideal_objective(Alpha::new(0.0).unwrap(), &a, &n, loss).unwrap();
        assert_eq!(v, 4.0); // mean normal loss
        let v = pn_ideal_objective(Alpha::new(1.0).unwrap(), &a, &n, loss).unwrap();
        assert_eq!(v, 2.5); // mean anomaly loss
        let v = pn_ideal_objective(Alpha::new(0.25).unwrap(), &a, &n, loss).unwrap();
        assert!((v - (0.25 * 2.5 + 0.75 * 4.0)).abs() < 1e-15);
    }

    /// The mixture identity: when batch_u is exactly the anomaly batch
    /// plus pure normals with alpha = |A| / |U|, the estimated normal
    /// term equals the plug-in normal mean algebraically.
    #[test]
    fn mixture_identity_holds_on_exact_mixtures() {
        let mut rng = rng_stream(8, 0);
        for _ in 0..20 {
            let n_a = rng.gen_range(1..6);
            let n_n = rng.gen_range(1..10);
            let a: Vec<Tensor> = (0..n_a)
                .map(|_| Tensor::vector(vec![rng.gen_range(-2.0..2.0)]).unwrap())
                .collect();
            let n: Vec<Tensor> = (0..n_n)
                .map(|_| Tensor::vector(vec![rng.gen_range(-2.0..2.0)]).unwrap())
                .collect();
            let mut u = a.clone();
            u.extend(n.iter().cloned());
            let alpha = n_a as f64 / (n_a + n_n) as f64;

            let mut g = Graph::new();
            let terms = pu_terms(&mut g, &u, &a, score_first_coord, PointLoss::Bce).unwrap();
            let estimated = g.value(terms.lu_minus).item() - alpha * g.value(terms.la_minus).item();
            let normal_mean: f64 =
                n.iter().map(|x| x.data()[0] * x.data()[0]).sum::<f64>() / n_n as f64;
            let expected = (1.0 - alpha) * normal_mean;
            assert!(
                (estimated - expected).abs() < 1e-12,
                "estimated {estimated} vs expected {expected}"
            );
        }
    }

    fn tiny_ae(seed: u64) -> AeModel {
        let mut rng = rng_stream(seed, 1);
        AeModel::new(2, &[3], 2, 0.0, &mut rng).unwrap()
    }

    fn batch(rng: &mut rand_chacha::ChaCha8Rng, n: usize) -> Vec<Tensor> {
        (0..n)
            .map(|_| {
                Tensor::vector(vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)]).unwrap()
            })
            .collect()
    }

    // Straight-line reimplementation of the full objective family on an
    // AE backbone, independent of the graph.
    mod straight_line {
        use super::*;

        #[allow(clippy::needless_range_loop)]
        pub fn mlp(widths: &[usize], params: &ParameterSet, prefix: &str, x: &[f64]) -> Vec<f64> {
            let mut cur = x.to_vec();
            let n_layers = widths.len() - 1;
            for i in 0..n_layers {
                let w = params.get(&format!("{prefix}{i}_w")).unwrap();
                let b = params.get(&format!("{prefix}{i}_b")).unwrap();
                let (n_in, n_out) = (widths[i], widths[i + 1]);
                let mut next = b.data().to_vec();
                for k in 0..n_in {
                    for j in 0..n_out {
                        next[j] += cur[k] * w.data()[k * n_out + j];
                    }
                }
                if i + 1 < n_layers {
                    for v in next.iter_mut() {
                        if *v <= 0.0 {
                            *v *= crate::models::HIDDEN_LEAKY_SLOPE;
                        }
                    }
                }
                cur = next;
            }
            cur
        }

        pub fn recon_err(m: &AeModel, x: &[f64]) -> f64 {
            let z = mlp(&m.encoder_widths, &m.params, "enc", x);
            let r = mlp(&m.decoder_widths, &m.params, "dec", &z);
            r.iter()
                .zip(x)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        }

        pub fn bce(ell: f64, y: u8) -> f64 {
            if y == 0 {
                ell
            } else {
                -(-(-ell.max(BCE_FLOOR)).exp_m1()).ln()
            }
        }
    }

    #[test]
    fn objective_for_matches_straight_line_reimplementation() {
        let model = tiny_ae(31);
        let mut rng = rng_stream(32, 0);
        let u = batch(&mut rng, 5);
        let a = batch(&mut rng, 3);
        let alpha = Alpha::new(0.2).unwrap();

        let eval = |kind: &LossKind, with_a: bool| {
            let mut g = Graph::new();
            let m = Model::Ae(model.clone());
            let bound = m.params().bind(&mut g);
            let obj = objective_for(
                &mut g,
                kind,
                &m,
                &bound,
                &u,
                with_a.then_some(a.as_slice()),
                None,
                None,
                None,
            )
            .unwrap();
            g.value(obj).item()
        };

        let ells_u: Vec<f64> = u
            .iter()
            .map(|x| straight_line::recon_err(&model, x.data()))
            .collect();
        let ells_a: Vec<f64> = a
            .iter()
            .map(|x| straight_line::recon_err(&model, x.data()))
            .collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;

        // AE: mean reconstruction error.
        let expected_ae = mean(&ells_u);
        assert!((eval(&LossKind::Ae, false) - expected_ae).abs() < 1e-12);

        // ABC: pooled BCE over the combined set, so the two means carry
        // weights |U|/(|U|+|A|) and |A|/(|U|+|A|).
        let (wu, wa) = (
            u.len() as f64 / (u.len() + a.len()) as f64,
            a.len() as f64 / (u.len() + a.len()) as f64,
        );
        let expected_abc = wu * mean(&ells_u)
            + wa * mean(
                &ells_a
                    .iter()
                    .map(|&e| straight_line::bce(e, 1))
                    .collect::<Vec<_>>(),
            );
        assert!((eval(&LossKind::Abc, true) - expected_abc).abs() < 1e-12);

        // PU-BCE: alpha * L_A^+ + |L_U^- - alpha * L_A^-|.
        let la_plus = mean(
            &ells_a
                .iter()
                .map(|&e| straight_line::bce(e, 1))
                .collect::<Vec<_>>(),
        );
        let expected_pu =
            alpha.value() * la_plus + (mean(&ells_u) - alpha.value() * mean(&ells_a)).abs();
        assert!((eval(&LossKind::PuBce(alpha), true) - expected_pu).abs() < 1e-12);
    }

    #[test]
    fn objective_for_svdd_and_classifier_match_oracle() {
        let mut rng = rng_stream(33, 1);
        let mut params = ParameterSet::new();
        // weights drawn the same way the models module draws them
        let w: Vec<f64> = (0..6).map(|_| rng.gen_range(-0.8..0.8)).collect();
        params
            .insert("enc0_w", Tensor::matrix(2, 3, w.clone()).unwrap())
            .unwrap();
        let center = Tensor::vector(vec![0.4, -0.2, 0.7]).unwrap();
        let svdd =
            crate::models::SvddModel::from_parts(vec![2, 3], center.clone(), params).unwrap();

        let mut rng2 = rng_stream(34, 0);
        let u = batch(&mut rng2, 4);
        let a = batch(&mut rng2, 2);

        let score = |x: &[f64]| -> f64 {
            let mut f = [0.0; 3];
            for k in 0..2 {
                for j in 0..3 {
                    f[j] += x[k] * w[k * 3 + j];
                }
            }
            f.iter()
                .zip(center.data())
                .map(|(v, c)| (v - c) * (v - c))
                .sum()
        };
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let su: Vec<f64> = u.iter().map(|x| score(x.data())).collect();
        let sa: Vec<f64> = a.iter().map(|x| score(x.data())).collect();

        let m = Model::Svdd(svdd);
        let eval = |kind: &LossKind, with_a: bool| {
            let mut g = Graph::new();
            let bound = m.params().bind(&mut g);
            let obj = objective_for(
                &mut g,
                kind,
                &m,
                &bound,
                &u,
                with_a.then_some(a.as_slice()),
                None,
                None,
                None,
            )
            .unwrap();
            g.value(obj).item()
        };

        assert!((eval(&LossKind::Svdd, false) - mean(&su)).abs() < 1e-12);

        let sad1 = |s: f64| 1.0 / s.max(SAD_FLOOR);
        let (wu, wa) = (
            u.len() as f64 / (u.len() + a.len()) as f64,
            a.len() as f64 / (u.len() + a.len()) as f64,
        );
        let expected_sad =
            wu * mean(&su) + wa * mean(&sa.iter().map(|&s| sad1(s)).collect::<Vec<_>>());
        assert!((eval(&LossKind::Sad, true) - expected_sad).abs() < 1e-12);

        let alpha = Alpha::new(0.3).unwrap();
        let expected_pusad = alpha.value() * mean(&sa.iter().map(|&s| sad1(s)).collect::<Vec<_>>())
            + (mean(&su) - alpha.value() * mean(&sa)).abs();
        assert!((eval(&LossKind::PuSad(alpha), true) - expected_pusad).abs() < 1e-12);
    }

    #[test]
    fn pooled_weighting_uses_dataset_sizes_for_stratified_batches() {
        let model = Model::Ae(tiny_ae(39));
        let mut rng = rng_stream(40, 0);
        let u = batch(&mut rng, 4);
        let a = batch(&mut rng, 4);
        let eval = |sizes: Option<(usize, usize)>| {
            let mut g = Graph::new();
            let bound = model.params().bind(&mut g);
            let obj = objective_for(
                &mut g,
                &LossKind::Abc,
                &model,
                &bound,
                &u,
                Some(&a),
                None,
                None,
                sizes,
            )
            .unwrap();
            g.value(obj).item()
        };
        // equal batch sizes pool 1:1 when the batches are the full sets
        let balanced = eval(None);
        // dataset sizes 90:10 shift the weights to 0.9 / 0.1
        let weighted = eval(Some((90, 10)));
        let Model::Ae(ae) = &model else {
            unreachable!()
        };
        let mean_u: f64 = u
            .iter()
            .map(|x| straight_line::recon_err(ae, x.data()))
            .sum::<f64>()
            / u.len() as f64;
        let mean_a: f64 = a
            .iter()
            .map(|x| straight_line::bce(straight_line::recon_err(ae, x.data()), 1))
            .sum::<f64>()
            / a.len() as f64;
        assert!((balanced - (0.5 * mean_u + 0.5 * mean_a)).abs() < 1e-12);
        assert!((weighted - (0.9 * mean_u + 0.1 * mean_a)).abs() < 1e-12);
    }

    #[test]
    fn objective_for_enforces_batch_presence() {
        let model = Model::Ae(tiny_ae(35));
        let mut rng = rng_stream(36, 0);
        let u = batch(&mut rng, 2);
        let a = batch(&mut rng, 2);

        let mut g = Graph::new();
        let bound = model.params().bind(&mut g);
        // supervised kind without anomalies
        assert!(objective_for(
            &mut g,
            &LossKind::Abc,
            &model,
            &bound,
            &u,
            None,
            None,
            None,
            None
        )
        .is_err());
        // unsupervised kind with anomalies
        assert!(objective_for(
            &mut g,
            &LossKind::Ae,
            &model,
            &bound,
            &u,
            Some(&a),
            None,
            None,
            None
        )
        .is_err());
        // kind/model mismatch
        assert!(objective_for(
            &mut g,
            &LossKind::Svdd,
            &model,
            &bound,
            &u,
            None,
            None,
            None,
            None
        )
        .is_err());
    }

    #[test]
    fn pu_objective_gradients_pass_grad_check() {
        let model = tiny_ae(37);
        let mut rng = rng_stream(38, 0);
        let u = batch(&mut rng, 3);
        let a = batch(&mut rng, 2);
        for kind in [
            LossKind::PuBce(Alpha::new(0.25).unwrap()),
            LossKind::Abc,
            LossKind::Ae,
        ] {
            // objective_for reads weights through `bound`, which
            // grad_check rebinds to each perturbed parameter copy
            let err = grad_check(&model.params, 1e-5, |g, bound| {
                objective_for(
                    g,
                    &kind,
                    &Model::Ae(model.clone()),
                    bound,
                    &u,
                    kind.needs_anomalies().then_some(a.as_slice()),
                    None,
                    None,
                    None,
                )
            })
            .unwrap();
            assert!(err < 1e-4, "{}: grad error {err}", kind.name());
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn pu_objective_dominates_positive_term(
            la_plus in 0.0f64..10.0,
            lu_minus in 0.0f64..10.0,
            la_minus in 0.0f64..10.0,
            alpha in 0.0f64..=1.0
        ) {
            let mut g = Graph::new();
            let terms = terms_from_values(&mut g, la_plus, lu_minus, la_minus);
            let alpha = Alpha::new(alpha).unwrap();
            let obj = pu_objective(&mut g, alpha, &terms).unwrap();
            prop_assert!(g.value(obj).item() >= alpha.value() * la_plus - 1e-15);
        }

        #[test]
        fn bce_y1_is_strictly_decreasing(values in proptest::collection::vec(1e-6f64..20.0, 2..20)) {
            let mut sorted = values.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            sorted.dedup();
            let losses: Vec<f64> = sorted
                .iter()
                .map(|&v| {
                    let mut g = Graph::new();
                    let ell = g.constant(v);
                    let l = bce_point_loss(&mut g, ell, 1).unwrap();
                    g.value(l).item()
                })
                .collect();
            for w in losses.windows(2) {
                prop_assert!(w[1] < w[0], "not decreasing: {losses:?}");
            }
        }
    }
}
