//! The part-aware recognition model: shared-weight view encoder, cross-view
//! association, weakly supervised part sampling, transformer-based part
//! refinement, and the combined classification loss.

use crate::autograd::{concat_cols, concat_rows, Gradients, Tape, Var};
use crate::error::{Error, Result};
use crate::shapegen::{augment, MultiViewSample};
use crate::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const LAYER_NORM_EPS: f64 = 1e-5;
pub const PROB_FLOOR: f64 = 1e-12;
pub const MAX_VIEWS: usize = 20;

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// Number of classes.
    pub k: usize,
    /// Input image resolution (square).
    pub r: usize,
    /// Encoder channel progression; starts at 1 (single-channel depth),
    /// ends at the feature width C. One conv + pool block per step,
    /// each halving the spatial extent.
    pub encoder_channels: Vec<usize>,
    /// Attention maps per view.
    pub m: usize,
    /// Part tokens.
    pub l: usize,
    /// Transformer layers in the refinement block.
    pub apr_depth: usize,
    /// Attention heads.
    pub heads: usize,
    /// Whether cross-view association is applied (ablation toggle).
    pub use_cva: bool,
}

impl HyperParams {
    /// Full-scale defaults: R=32, C=64, M=64, L=16, 2 layers, 4 heads.
    pub fn full() -> HyperParams {
        HyperParams {
            k: 6,
            r: 32,
            encoder_channels: vec![1, 16, 32, 64, 64],
            m: 64,
            l: 16,
            apr_depth: 2,
            heads: 4,
            use_cva: true,
        }
    }

    /// Tiny configuration for gradient checks: H=W=2, C=4, M=3, L=2, K=3.
    pub fn tiny() -> HyperParams {
        HyperParams {
            k: 3,
            r: 4,
            encoder_channels: vec![1, 4],
            m: 3,
            l: 2,
            apr_depth: 2,
            heads: 2,
            use_cva: true,
        }
    }

    pub fn feature_width(&self) -> usize {
        *self.encoder_channels.last().expect("non-empty encoder")
    }

    /// Encoder output spatial extent (stride-2 halving per block).
    pub fn feature_extent(&self) -> usize {
        self.r >> (self.encoder_channels.len() - 1)
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.feature_width();
        if self.encoder_channels.len() < 2 || self.encoder_channels[0] != 1 {
            return Err(Error::Config("encoder channels must start at 1".into()));
        }
        let blocks = self.encoder_channels.len() - 1;
        if self.feature_extent() == 0 || self.feature_extent() << blocks != self.r {
            return Err(Error::Config(format!(
                "resolution {} not divisible by 2^{} encoder blocks",
                self.r, blocks
            )));
        }
        if self.heads == 0 || c % self.heads != 0 {
            return Err(Error::Config(format!(
                "feature width {} not divisible by {} heads",
                c, self.heads
            )));
        }
        if self.k == 0 || self.m == 0 || self.l == 0 || self.apr_depth == 0 {
            return Err(Error::Config("K, M, L, depth must be positive".into()));
        }
        Ok(())
    }
}

/// One transformer layer of the part refinement block.
#[derive(Clone, Debug)]
pub struct AprLayer {
    pub ln1_gain: Tensor,
    pub ln1_bias: Tensor,
    pub wq: Tensor,
    pub bq: Tensor,
    pub wk: Tensor,
    pub wv: Tensor,
    pub bv: Tensor,
    pub wo: Tensor,
    pub bo: Tensor,
    pub ln2_gain: Tensor,
    pub ln2_bias: Tensor,
    pub mlp_w1: Tensor,
    pub mlp_b1: Tensor,
    pub mlp_w2: Tensor,
    pub mlp_b2: Tensor,
}

/// All learnable parameters. The encoder weights are one set shared by
/// every view.
#[derive(Clone, Debug)]
pub struct ModelParams {
    pub conv_w: Vec<Tensor>,
    pub conv_b: Vec<Tensor>,
    /// 1x1 conv producing M attention maps.
    pub psi_w: Tensor,
    pub psi_b: Tensor,
    /// L learnable part tokens.
    pub part_tokens: Tensor,
    pub apr: Vec<AprLayer>,
    pub head_p_w: Tensor,
    pub head_p_b: Tensor,
    pub head_q_w: Tensor,
    pub head_q_b: Tensor,
}

fn gaussian(rng: &mut ChaCha8Rng, shape: Vec<usize>, sigma: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal) * sigma)
        .collect();
    Tensor::new(shape, data)
}

impl ModelParams {
    /// He-initialized encoder, Xavier projections, sigma=0.02 part tokens.
    pub fn init(hp: &HyperParams, seed: u64) -> Result<ModelParams> {
        hp.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = hp.feature_width();
        let mut conv_w = Vec::new();
        let mut conv_b = Vec::new();
        for win in hp.encoder_channels.windows(2) {
            let (cin, cout) = (win[0], win[1]);
            let sigma = (2.0 / (9 * cin) as f64).sqrt();
            conv_w.push(gaussian(&mut rng, vec![3, 3, cin, cout], sigma));
            conv_b.push(Tensor::zeros(vec![cout]));
        }
        let xavier = |rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize| {
            let sigma = (2.0 / (fan_in + fan_out) as f64).sqrt();
            gaussian(rng, vec![fan_in, fan_out], sigma)
        };
        let apr = (0..hp.apr_depth)
            .map(|_| AprLayer {
                ln1_gain: Tensor::full(vec![c], 1.0),
                ln1_bias: Tensor::zeros(vec![c]),
                wq: xavier(&mut rng, c, c),
                bq: Tensor::zeros(vec![c]),
                wk: xavier(&mut rng, c, c),
                wv: xavier(&mut rng, c, c),
                bv: Tensor::zeros(vec![c]),
                wo: xavier(&mut rng, c, c),
                bo: Tensor::zeros(vec![c]),
                ln2_gain: Tensor::full(vec![c], 1.0),
                ln2_bias: Tensor::zeros(vec![c]),
                mlp_w1: xavier(&mut rng, c, 4 * c),
                mlp_b1: Tensor::zeros(vec![4 * c]),
                mlp_w2: xavier(&mut rng, 4 * c, c),
                mlp_b2: Tensor::zeros(vec![c]),
            })
            .collect();
        Ok(ModelParams {
            psi_w: gaussian(&mut rng, vec![1, 1, c, hp.m], (2.0 / c as f64).sqrt()),
            psi_b: Tensor::zeros(vec![hp.m]),
            part_tokens: gaussian(&mut rng, vec![hp.l, c], 0.02),
            apr,
            head_p_w: xavier(&mut rng, c, hp.k),
            head_p_b: Tensor::zeros(vec![hp.k]),
            head_q_w: xavier(&mut rng, hp.m * c, hp.k),
            head_q_b: Tensor::zeros(vec![hp.k]),
            conv_w,
            conv_b,
        })
    }

    /// Named views of every parameter, in a stable order shared with the
    /// optimizer state and checkpoint format.
    pub fn named(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (i, (w, b)) in self.conv_w.iter().zip(self.conv_b.iter()).enumerate() {
            out.push((format!("encoder.{}.w", i), w));
            out.push((format!("encoder.{}.b", i), b));
        }
        out.push(("psi.w".into(), &self.psi_w));
        out.push(("psi.b".into(), &self.psi_b));
        out.push(("part_tokens".into(), &self.part_tokens));
        for (i, l) in self.apr.iter().enumerate() {
            let p = |n: &str| format!("apr.{}.{}", i, n);
            out.push((p("ln1.g"), &l.ln1_gain));
            out.push((p("ln1.b"), &l.ln1_bias));
            out.push((p("wq"), &l.wq));
            out.push((p("bq"), &l.bq));
            out.push((p("wk"), &l.wk));
            out.push((p("wv"), &l.wv));
            out.push((p("bv"), &l.bv));
            out.push((p("wo"), &l.wo));
            out.push((p("bo"), &l.bo));
            out.push((p("ln2.g"), &l.ln2_gain));
            out.push((p("ln2.b"), &l.ln2_bias));
            out.push((p("mlp.w1"), &l.mlp_w1));
            out.push((p("mlp.b1"), &l.mlp_b1));
            out.push((p("mlp.w2"), &l.mlp_w2));
            out.push((p("mlp.b2"), &l.mlp_b2));
        }
        out.push(("head_p.w".into(), &self.head_p_w));
        out.push(("head_p.b".into(), &self.head_p_b));
        out.push(("head_q.w".into(), &self.head_q_w));
        out.push(("head_q.b".into(), &self.head_q_b));
        out
    }

    pub fn named_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out: Vec<(String, &mut Tensor)> = Vec::new();
        for (i, (w, b)) in self.conv_w.iter_mut().zip(self.conv_b.iter_mut()).enumerate() {
            out.push((format!("encoder.{}.w", i), w));
            out.push((format!("encoder.{}.b", i), b));
        }
        out.push(("psi.w".into(), &mut self.psi_w));
        out.push(("psi.b".into(), &mut self.psi_b));
        out.push(("part_tokens".into(), &mut self.part_tokens));
        for (i, l) in self.apr.iter_mut().enumerate() {
            let p = |n: &str| format!("apr.{}.{}", i, n);
            out.push((p("ln1.g"), &mut l.ln1_gain));
            out.push((p("ln1.b"), &mut l.ln1_bias));
            out.push((p("wq"), &mut l.wq));
            out.push((p("bq"), &mut l.bq));
            out.push((p("wk"), &mut l.wk));
            out.push((p("wv"), &mut l.wv));
            out.push((p("bv"), &mut l.bv));
            out.push((p("wo"), &mut l.wo));
            out.push((p("bo"), &mut l.bo));
            out.push((p("ln2.g"), &mut l.ln2_gain));
            out.push((p("ln2.b"), &mut l.ln2_bias));
            out.push((p("mlp.w1"), &mut l.mlp_w1));
            out.push((p("mlp.b1"), &mut l.mlp_b1));
            out.push((p("mlp.w2"), &mut l.mlp_w2));
            out.push((p("mlp.b2"), &mut l.mlp_b2));
        }
        out.push(("head_p.w".into(), &mut self.head_p_w));
        out.push(("head_p.b".into(), &mut self.head_p_b));
        out.push(("head_q.w".into(), &mut self.head_q_w));
        out.push(("head_q.b".into(), &mut self.head_q_b));
        out
    }
}

/// Parameters bound to leaf vars on a tape for one forward/backward pass.
pub struct BoundParams {
    pub conv_w: Vec<Var>,
    pub conv_b: Vec<Var>,
    pub psi_w: Var,
    pub psi_b: Var,
    pub part_tokens: Var,
    pub apr: Vec<BoundAprLayer>,
    pub head_p_w: Var,
    pub head_p_b: Var,
    pub head_q_w: Var,
    pub head_q_b: Var,
    /// Leaves in [`ModelParams::named`] order for gradient extraction.
    pub ordered: Vec<Var>,
}

pub struct BoundAprLayer {
    pub ln1_gain: Var,
    pub ln1_bias: Var,
    pub wq: Var,
    pub bq: Var,
    pub wk: Var,
    pub wv: Var,
    pub bv: Var,
    pub wo: Var,
    pub bo: Var,
    pub ln2_gain: Var,
    pub ln2_bias: Var,
    pub mlp_w1: Var,
    pub mlp_b1: Var,
    pub mlp_w2: Var,
    pub mlp_b2: Var,
}

pub fn bind(tape: &Tape, params: &ModelParams) -> BoundParams {
    let ordered: Vec<Var> = params
        .named()
        .iter()
        .map(|(_, t)| tape.leaf((*t).clone()))
        .collect();
    BoundParams::from_ordered(params.conv_w.len(), params.apr.len(), &ordered)
        .expect("named order matches from_ordered")
}

impl BoundParams {
    /// Arranges leaf vars given in [`ModelParams::named`] order.
    pub fn from_ordered(n_conv: usize, n_apr: usize, vars: &[Var]) -> Result<BoundParams> {
        let expected = 2 * n_conv + 3 + 15 * n_apr + 4;
        if vars.len() != expected {
            return Err(Error::Usage(format!(
                "expected {} parameter tensors, got {}",
                expected,
                vars.len()
            )));
        }
        let mut it = vars.iter().cloned();
        let mut next = move || it.next().unwrap();
        let mut conv_w = Vec::with_capacity(n_conv);
        let mut conv_b = Vec::with_capacity(n_conv);
        for _ in 0..n_conv {
            conv_w.push(next());
            conv_b.push(next());
        }
        let psi_w = next();
        let psi_b = next();
        let part_tokens = next();
        let apr = (0..n_apr)
            .map(|_| BoundAprLayer {
                ln1_gain: next(),
                ln1_bias: next(),
                wq: next(),
                bq: next(),
                wk: next(),
                wv: next(),
                bv: next(),
                wo: next(),
                bo: next(),
                ln2_gain: next(),
                ln2_bias: next(),
                mlp_w1: next(),
                mlp_b1: next(),
                mlp_w2: next(),
                mlp_b2: next(),
            })
            .collect();
        Ok(BoundParams {
            conv_w,
            conv_b,
            psi_w,
            psi_b,
            part_tokens,
            apr,
            head_p_w: next(),
            head_p_b: next(),
            head_q_w: next(),
            head_q_b: next(),
            ordered: vars.to_vec(),
        })
    }

    /// Gradients in [`ModelParams::named`] order.
    pub fn gradients(&self, grads: &Gradients) -> Vec<Tensor> {
        self.ordered.iter().map(|v| grads.of(v)).collect()
    }
}

/// Passes each view through the shared conv stack, in input order. Each
/// block is a size-preserving 3x3 conv + relu followed by 2x2 average
/// pooling, halving the spatial extent.
pub fn encode_views(bound: &BoundParams, views: &[Var]) -> Result<Vec<Var>> {
    let mut out = Vec::with_capacity(views.len());
    for view in views {
        if view.shape() != views[0].shape() {
            return Err(Error::Dim(format!(
                "encode_views: inconsistent view sizes {:?} vs {:?}",
                view.shape(),
                views[0].shape()
            )));
        }
        let mut x = view.clone();
        for (w, b) in bound.conv_w.iter().zip(bound.conv_b.iter()) {
            x = x.conv2d(w, 1, 1)?.add_bias(b)?.relu().avg_pool2()?;
        }
        out.push(x);
    }
    Ok(out)
}

/// Cross-view association: each view's feature map becomes a softmax convex
/// combination of all views' maps, scored by pooled-descriptor dot products.
pub fn cross_view_associate(features: &[Var]) -> Result<Vec<Var>> {
    let v = features.len();
    let shape = features[0].shape().to_vec();
    let (h, w, c) = (shape[0], shape[1], shape[2]);
    let pooled: Vec<Var> = features
        .iter()
        .map(|f| f.global_avg_pool()?.reshape(vec![1, c]))
        .collect::<Result<_>>()?;
    let g = concat_rows(&pooled.iter().collect::<Vec<_>>())?;
    let scores = g.matmul(&g.transpose()?)?;
    let alpha = scores.softmax_lastdim()?;
    let flat: Vec<Var> = features
        .iter()
        .map(|f| f.reshape(vec![1, h * w * c]))
        .collect::<Result<_>>()?;
    let stacked = concat_rows(&flat.iter().collect::<Vec<_>>())?;
    let mixed = alpha.matmul(&stacked)?;
    (0..v)
        .map(|i| mixed.slice_rows(i, i + 1)?.reshape(vec![h, w, c]))
        .collect()
}

/// psi: 1x1 conv + relu producing M non-negative attention maps per view.
pub fn attend_parts(bound: &BoundParams, feature: &Var) -> Result<Var> {
    Ok(feature
        .conv2d(&bound.psi_w, 1, 0)?
        .add_bias(&bound.psi_b)?
        .relu())
}

/// Attention-weighted spatial pooling: part j of view i is the per-channel
/// mean of the feature map weighted by attention map j. Rows are assembled
/// view-major then part-index.
pub fn sample_parts(features: &[Var], attention: &[Var]) -> Result<Var> {
    let mut per_view = Vec::with_capacity(features.len());
    for (f, a) in features.iter().zip(attention.iter()) {
        let (h, w, c) = (f.shape()[0], f.shape()[1], f.shape()[2]);
        let m = a.shape()[2];
        if a.shape()[0] != h || a.shape()[1] != w {
            return Err(Error::Dim(format!(
                "sample_parts: features {:?} vs attention {:?}",
                f.shape(),
                a.shape()
            )));
        }
        // t_{i,j} = mean_hw(F_i * A_{i,j}) as a single [M x HW][HW x C] product
        let a_flat = a.reshape(vec![h * w, m])?.transpose()?;
        let f_flat = f.reshape(vec![h * w, c])?;
        per_view.push(a_flat.matmul(&f_flat)?.scale(1.0 / (h * w) as f64));
    }
    concat_rows(&per_view.iter().collect::<Vec<_>>())
}

fn linear(x: &Var, w: &Var, b: &Var) -> Result<Var> {
    x.matmul(w)?.add_bias(b)
}

/// One pre-norm transformer layer (self-attention + MLP, both residual).
///
/// With `keep = Some(n)` only the first `n` query rows are computed; the
/// result equals the first `n` rows of the full layer, so the final layer
/// of the refinement block can skip rows that no output depends on.
pub fn transformer_layer(
    x: &Var,
    layer: &BoundAprLayer,
    heads: usize,
    keep: Option<usize>,
) -> Result<Var> {
    let rows = x.shape()[0];
    let c = x.shape()[1];
    let rq = keep.unwrap_or(rows);
    let dh = c / heads;
    let y = x.layer_norm(&layer.ln1_gain, &layer.ln1_bias, LAYER_NORM_EPS)?;
    let y_q = if rq == rows { y.clone() } else { y.slice_rows(0, rq)? };
    // scaling the queries once is cheaper than scaling each n x n score map
    let q = linear(&y_q, &layer.wq, &layer.bq)?.scale(1.0 / (dh as f64).sqrt());
    let k = y.matmul(&layer.wk)?;
    let v = linear(&y, &layer.wv, &layer.bv)?;
    let mut head_outs = Vec::with_capacity(heads);
    for h in 0..heads {
        let (lo, hi) = (h * dh, (h + 1) * dh);
        let qh = q.slice_cols(lo, hi)?;
        let kh = k.slice_cols(lo, hi)?;
        let vh = v.slice_cols(lo, hi)?;
        let att = qh.matmul(&kh.transpose()?)?.softmax_lastdim()?;
        head_outs.push(att.matmul(&vh)?);
    }
    let attn = linear(
        &concat_cols(&head_outs.iter().collect::<Vec<_>>())?,
        &layer.wo,
        &layer.bo,
    )?;
    let x_kept = if rq == rows { x.clone() } else { x.slice_rows(0, rq)? };
    let x1 = x_kept.add(&attn)?;
    let y2 = x1.layer_norm(&layer.ln2_gain, &layer.ln2_bias, LAYER_NORM_EPS)?;
    let mlp = linear(&linear(&y2, &layer.mlp_w1, &layer.mlp_b1)?.relu(), &layer.mlp_w2, &layer.mlp_b2)?;
    x1.add(&mlp)
}

/// Refines the part sequence: part tokens and view parts attend jointly,
/// and the first L rows come back as global parts. No positional encoding,
/// so the result is invariant to permutations of the sequence rows.
pub fn apr_refine(bound: &BoundParams, hp: &HyperParams, parts: &Var) -> Result<Var> {
    let mut x = concat_rows(&[&bound.part_tokens, parts])?;
    for (d, layer) in bound.apr.iter().enumerate() {
        let keep = if d + 1 == bound.apr.len() {
            Some(hp.l)
        } else {
            None
        };
        x = transformer_layer(&x, layer, hp.heads, keep)?;
    }
    debug_assert_eq!(x.shape(), &[hp.l, hp.feature_width()]);
    Ok(x)
}

/// Per-part class probabilities and their average.
pub fn predict_parts(bound: &BoundParams, global_parts: &Var) -> Result<(Var, Var)> {
    let probs = linear(global_parts, &bound.head_p_w, &bound.head_p_b)?.softmax_lastdim()?;
    let averaged = probs.mean_rows()?;
    Ok((probs, averaged))
}

/// Per-view probabilities from the flattened (part-major) view parts.
pub fn view_part_probs(bound: &BoundParams, parts: &Var, v: usize) -> Result<Var> {
    let n = parts.shape()[0];
    let c = parts.shape()[1];
    if v == 0 || n % v != 0 {
        return Err(Error::Dim(format!(
            "view_part_probs: {} rows not divisible by v = {}",
            n, v
        )));
    }
    let flat = parts.reshape(vec![v, (n / v) * c])?;
    linear(&flat, &bound.head_q_w, &bound.head_q_b)?.softmax_lastdim()
}

/// Smoothed target distribution: (1 - eps) * onehot(y) + eps / K.
pub fn label_smooth(y: usize, k: usize, eps: f64) -> Result<Vec<f64>> {
    if y >= k {
        return Err(Error::Usage(format!("label {} out of range (K = {})", y, k)));
    }
    if !(0.0..1.0).contains(&eps) {
        return Err(Error::Usage(format!("smoothing {} outside [0, 1)", eps)));
    }
    let mut t = vec![eps / k as f64; k];
    t[y] += 1.0 - eps;
    Ok(t)
}

/// Cross-entropy of the averaged prediction plus gamma times the mean
/// per-view part-aware loss, against the smoothed target.
pub fn total_loss(
    tape: &Tape,
    averaged: &Var,
    view_probs: &Var,
    y: usize,
    gamma: f64,
    eps: f64,
) -> Result<LossTerms> {
    let k = averaged.shape()[0];
    let v = view_probs.shape()[0];
    let target = label_smooth(y, k, eps)?;
    let t = tape.constant(Tensor::new(vec![k], target.clone()));
    let l_ce = averaged
        .log_clamped(PROB_FLOOR)
        .mul(&t)?
        .sum()
        .scale(-1.0);
    let t_rows = tape.constant(Tensor::new(
        vec![v, k],
        target.iter().cycle().take(v * k).copied().collect(),
    ));
    let l_awe = view_probs
        .log_clamped(PROB_FLOOR)
        .mul(&t_rows)?
        .sum()
        .scale(-1.0 / v as f64);
    let total = l_ce.add(&l_awe.scale(gamma))?;
    Ok(LossTerms { total, l_ce, l_awe })
}

pub struct LossTerms {
    pub total: Var,
    pub l_ce: Var,
    pub l_awe: Var,
}

/// Forward mode: evaluation is deterministic; training augments views.
#[derive(Clone, Copy, Debug)]
pub enum Mode {
    Eval,
    Train {
        aug_seed: u64,
        flip_prob: f64,
        erase_prob: f64,
    },
}

/// Everything one forward pass produces.
pub struct Forward {
    /// Averaged class probabilities, K entries.
    pub averaged: Var,
    pub loss: LossTerms,
    /// Attention map values per view, each [H x W x M].
    pub attention: Vec<Tensor>,
    /// View part sequence, [v*M x C].
    pub parts: Var,
    /// Global parts, [L x C].
    pub global_parts: Var,
}

/// Full pipeline: encode, associate, attend, sample parts, refine, predict.
pub fn forward(
    tape: &Tape,
    bound: &BoundParams,
    hp: &HyperParams,
    sample: &MultiViewSample,
    gamma: f64,
    smoothing: f64,
    mode: Mode,
) -> Result<Forward> {
    let v = sample.view_count();
    if v == 0 || v > MAX_VIEWS {
        return Err(Error::Usage(format!(
            "view count {} outside [1, {}]",
            v, MAX_VIEWS
        )));
    }
    let r = hp.r;
    let views: Vec<Var> = sample
        .views
        .iter()
        .enumerate()
        .map(|(i, img)| {
            if img.len() != r * r {
                return Err(Error::Dim(format!(
                    "view {} has {} pixels, expected {}x{}",
                    i,
                    img.len(),
                    r,
                    r
                )));
            }
            let pixels: Vec<f32> = match mode {
                Mode::Eval => img.clone(),
                Mode::Train {
                    aug_seed,
                    flip_prob,
                    erase_prob,
                } => {
                    let per_view = aug_seed ^ (i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
                    augment(img, r, per_view, flip_prob, erase_prob)
                }
            };
            Ok(tape.constant(Tensor::new(
                vec![r, r, 1],
                pixels.iter().map(|&p| p as f64).collect(),
            )))
        })
        .collect::<Result<_>>()?;

    let encoded = encode_views(bound, &views)?;
    let enhanced = if hp.use_cva {
        cross_view_associate(&encoded)?
    } else {
        encoded
    };
    let attention: Vec<Var> = enhanced
        .iter()
        .map(|f| attend_parts(bound, f))
        .collect::<Result<_>>()?;
    let parts = sample_parts(&enhanced, &attention)?;
    let global_parts = apr_refine(bound, hp, &parts)?;
    let (_, averaged) = predict_parts(bound, &global_parts)?;
    let view_probs = view_part_probs(bound, &parts, v)?;
    let loss = total_loss(tape, &averaged, &view_probs, sample.label as usize, gamma, smoothing)?;
    Ok(Forward {
        averaged,
        attention: attention.iter().map(|a| a.value().clone()).collect(),
        parts,
        global_parts,
        loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{finite_diff_check, DEFAULT_STEP};

    fn synth_sample(v: usize, r: usize, label: u32, seed: u64) -> MultiViewSample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        MultiViewSample {
            label,
            viewpoints: vec![[0.0, 0.0, 1.0]; v],
            views: (0..v)
                .map(|_| (0..r * r).map(|_| rng.gen_range(0.0..1.0f32)).collect())
                .collect(),
        }
    }

    fn random_var(tape: &Tape, shape: Vec<usize>, seed: u64) -> Var {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n: usize = shape.iter().product();
        tape.leaf(Tensor::new(
            shape,
            (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        ))
    }

    #[test]
    fn cva_single_view_is_identity() {
        let tape = Tape::new();
        let f = random_var(&tape, vec![2, 2, 3], 1);
        let out = cross_view_associate(&[f.clone()]).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].value().max_abs_diff(f.value()), 0.0);
    }

    #[test]
    fn cva_identical_views_unchanged() {
        let tape = Tape::new();
        let f = random_var(&tape, vec![2, 2, 3], 2);
        let out = cross_view_associate(&[f.clone(), f.clone(), f.clone()]).unwrap();
        for o in &out {
            assert!(o.value().max_abs_diff(f.value()) < 1e-12);
        }
    }

    #[test]
    fn cva_scalar_hand_value() {
        let tape = Tape::new();
        let a = tape.leaf(Tensor::new(vec![1, 1, 1], vec![2.0]));
        let b = tape.leaf(Tensor::new(vec![1, 1, 1], vec![4.0]));
        let out = cross_view_associate(&[a, b]).unwrap();
        let (w2, w4) = (4.0f64.exp(), 8.0f64.exp());
        let expected = (2.0 * w2 + 4.0 * w4) / (w2 + w4);
        assert!((out[0].value().item() - expected).abs() < 1e-12);
        assert!((out[0].value().item() - 3.9640).abs() < 1e-4);
    }

    #[test]
    fn attend_parts_zero_features_zero_attention() {
        let hp = HyperParams::tiny();
        let params = ModelParams::init(&hp, 3).unwrap();
        let tape = Tape::new();
        let bound = bind(&tape, &params);
        let f = tape.constant(Tensor::zeros(vec![2, 2, 4]));
        let a = attend_parts(&bound, &f).unwrap();
        assert_eq!(a.shape(), &[2, 2, 3]);
        assert!(a.value().data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn sample_parts_unit_attention_is_average() {
        let tape = Tape::new();
        let f = random_var(&tape, vec![2, 2, 3], 4);
        let a = tape.constant(Tensor::full(vec![2, 2, 2], 1.0));
        let t = sample_parts(&[f.clone()], &[a]).unwrap();
        let gap = f.global_avg_pool().unwrap();
        assert_eq!(t.shape(), &[2, 3]);
        for row in 0..2 {
            let got = t.slice_rows(row, row + 1).unwrap();
            assert!(got.value().max_abs_diff(&gap.value().reshaped(vec![1, 3])) < 1e-12);
        }
    }

    #[test]
    fn sample_parts_zero_attention_is_zero() {
        let tape = Tape::new();
        let f = random_var(&tape, vec![2, 2, 3], 5);
        let a = tape.constant(Tensor::zeros(vec![2, 2, 2]));
        let t = sample_parts(&[f], &[a]).unwrap();
        assert!(t.value().data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn sample_parts_hand_value() {
        let tape = Tape::new();
        let f = tape.leaf(Tensor::new(vec![1, 2, 1], vec![1.0, 3.0]));
        let a = tape.leaf(Tensor::new(vec![1, 2, 1], vec![0.0, 1.0]));
        let t = sample_parts(&[f], &[a]).unwrap();
        assert!((t.value().item() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn transformer_keep_matches_full_layer() {
        let hp = HyperParams::tiny();
        let params = ModelParams::init(&hp, 7).unwrap();
        let tape = Tape::new();
        let bound = bind(&tape, &params);
        let x = random_var(&tape, vec![5, 4], 8);
        let full = transformer_layer(&x, &bound.apr[0], hp.heads, None).unwrap();
        let kept = transformer_layer(&x, &bound.apr[0], hp.heads, Some(2)).unwrap();
        let head = full.slice_rows(0, 2).unwrap();
        assert!(kept.value().max_abs_diff(head.value()) < 1e-12);
    }

    #[test]
    fn apr_zero_mixing_weights_returns_tokens() {
        let hp = HyperParams::tiny();
        let mut params = ModelParams::init(&hp, 9).unwrap();
        let c = hp.feature_width();
        for l in params.apr.iter_mut() {
            l.wo = Tensor::zeros(vec![c, c]);
            l.mlp_w2 = Tensor::zeros(vec![4 * c, c]);
        }
        let tape = Tape::new();
        let bound = bind(&tape, &params);
        let parts = random_var(&tape, vec![6, c], 10);
        let refined = apr_refine(&bound, &hp, &parts).unwrap();
        assert_eq!(refined.value().max_abs_diff(&params.part_tokens), 0.0);
    }

    #[test]
    fn apr_permutation_invariance() {
        let hp = HyperParams::tiny();
        let params = ModelParams::init(&hp, 11).unwrap();
        let tape = Tape::new();
        let bound = bind(&tape, &params);
        let base = random_var(&tape, vec![6, 4], 12);
        let perm = [4usize, 0, 5, 2, 1, 3];
        let rows: Vec<Var> = perm
            .iter()
            .map(|&i| base.slice_rows(i, i + 1).unwrap())
            .collect();
        let shuffled = concat_rows(&rows.iter().collect::<Vec<_>>()).unwrap();
        let a = apr_refine(&bound, &hp, &base).unwrap();
        let b = apr_refine(&bound, &hp, &shuffled).unwrap();
        assert!(a.value().max_abs_diff(b.value()) < 1e-9);
    }

    #[test]
    fn label_smoothing_values() {
        assert_eq!(label_smooth(1, 3, 0.0).unwrap(), vec![0.0, 1.0, 0.0]);
        let t = label_smooth(0, 4, 0.1).unwrap();
        assert!((t[0] - 0.925).abs() < 1e-12);
        assert!((t[1] - 0.025).abs() < 1e-12);
        assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let t = label_smooth(2, 5, 0.1).unwrap();
        for (i, want) in [0.02, 0.02, 0.92, 0.02, 0.02].iter().enumerate() {
            assert!((t[i] - want).abs() < 1e-12);
        }
        assert!(label_smooth(4, 4, 0.1).is_err());
        assert!(label_smooth(0, 4, 1.0).is_err());
    }

    #[test]
    fn loss_uniform_is_twice_log_k() {
        let tape = Tape::new();
        let p = tape.constant(Tensor::full(vec![5], 0.2));
        let q = tape.constant(Tensor::full(vec![3, 5], 0.2));
        let terms = total_loss(&tape, &p, &q, 2, 1.0, 0.0).unwrap();
        let expected = 2.0 * 5.0f64.ln();
        assert!((terms.total.value().item() - expected).abs() < 1e-12);
    }

    #[test]
    fn loss_hand_value() {
        let tape = Tape::new();
        let p = tape.constant(Tensor::new(vec![2], vec![0.75, 0.25]));
        let q = tape.constant(Tensor::new(vec![1, 2], vec![0.5, 0.5]));
        let terms = total_loss(&tape, &p, &q, 0, 1.0, 0.0).unwrap();
        let expected = -(0.75f64.ln()) - 0.5f64.ln();
        assert!((terms.total.value().item() - expected).abs() < 1e-12);
        assert!((terms.total.value().item() - 0.9808).abs() < 1e-4);
        assert!((terms.l_ce.value().item() + 0.75f64.ln()).abs() < 1e-12);
        assert!((terms.l_awe.value().item() + 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn loss_rejects_bad_label() {
        let tape = Tape::new();
        let p = tape.constant(Tensor::full(vec![2], 0.5));
        let q = tape.constant(Tensor::full(vec![1, 2], 0.5));
        assert!(matches!(
            total_loss(&tape, &p, &q, 2, 1.0, 0.0),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn forward_probabilities_sum_to_one() {
        let hp = HyperParams::tiny();
        let params = ModelParams::init(&hp, 13).unwrap();
        for v in [1usize, 5, 10, 20] {
            let sample = synth_sample(v, hp.r, 0, v as u64);
            let tape = Tape::new();
            let bound = bind(&tape, &params);
            let fwd = forward(&tape, &bound, &hp, &sample, 1.0, 0.1, Mode::Eval).unwrap();
            let sum: f64 = fwd.averaged.value().data().iter().sum();
            assert!((sum - 1.0).abs() < 1e-9, "v = {}, sum = {}", v, sum);
        }
    }

    #[test]
    fn forward_view_permutation_invariance() {
        let hp = HyperParams::tiny();
        let params = ModelParams::init(&hp, 17).unwrap();
        let sample = synth_sample(6, hp.r, 2, 19);
        let perm = [3usize, 5, 0, 4, 2, 1];
        let permuted = MultiViewSample {
            label: sample.label,
            viewpoints: perm.iter().map(|&i| sample.viewpoints[i]).collect(),
            views: perm.iter().map(|&i| sample.views[i].clone()).collect(),
        };
        let run = |s: &MultiViewSample| {
            let tape = Tape::new();
            let bound = bind(&tape, &params);
            forward(&tape, &bound, &hp, s, 1.0, 0.1, Mode::Eval)
                .unwrap()
                .averaged
                .value()
                .clone()
        };
        assert!(run(&sample).max_abs_diff(&run(&permuted)) < 1e-9);
    }

    #[test]
    fn forward_rejects_bad_view_counts() {
        let hp = HyperParams::tiny();
        let params = ModelParams::init(&hp, 23).unwrap();
        let tape = Tape::new();
        let bound = bind(&tape, &params);
        for v in [0usize, 21] {
            let sample = synth_sample(v, hp.r, 0, 1);
            assert!(forward(&tape, &bound, &hp, &sample, 1.0, 0.1, Mode::Eval).is_err());
        }
    }

    #[test]
    fn tiny_end_to_end_gradient_check() {
        let hp = HyperParams::tiny();
        let params = ModelParams::init(&hp, 29).unwrap();
        let theta: Vec<Tensor> = params.named().iter().map(|(_, t)| (*t).clone()).collect();
        let sample = synth_sample(2, hp.r, 1, 31);
        let (n_conv, n_apr) = (params.conv_w.len(), params.apr.len());
        let err = finite_diff_check(&theta, DEFAULT_STEP, None, |tape, vars| {
            let bound = BoundParams::from_ordered(n_conv, n_apr, vars)?;
            let fwd = forward(tape, &bound, &hp, &sample, 1.0, 0.1, Mode::Eval)?;
            Ok(fwd.loss.total)
        })
        .unwrap();
        assert!(err < 1e-3, "max relative error {}", err);
    }
}
