use rayon::prelude::*;

use super::config::ModelConfig;
use super::layers::{attention_backward, attention_forward, gelu, gelu_grad, AttnShape, LayerNorm, LnCache, Linear};
use super::params::{BlockParams, Params};
use crate::error::{KcrError, Result};
use crate::numerics::{Matrix, Rng};
use crate::selection::{flops_block, Architecture, ChannelSelector, CostModel};

/// Vision transformer whose MLPs run over a selectable channel subset.
#[derive(Debug, Clone, PartialEq)]
pub struct KcrNet {
    pub config: ModelConfig,
    pub params: Params,
    /// Channel set each block's MLP operates on (all `D` for a supernet).
    pub channels: Vec<Vec<usize>>,
    /// Architecture parameters; `None` for pruned blocks.
    pub selectors: Vec<Option<ChannelSelector>>,
}

/// Per-block logistic noise for one soft forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftNoise(pub Vec<Vec<f64>>);

impl SoftNoise {
    pub fn draw(net: &KcrNet, rng: &mut Rng) -> Result<Self> {
        net.selectors
            .iter()
            .enumerate()
            .map(|(j, s)| match s {
                Some(sel) => Ok(sel.draw_noise(rng)),
                None => Err(KcrError::Argument(format!("block {j} has no channel selector"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(SoftNoise)
    }

    /// Zero noise, giving the expected mask `σ(α/τ)`.
    pub fn zeros(net: &KcrNet) -> Self {
        SoftNoise(net.channels.iter().map(|c| vec![0.0; c.len()]).collect())
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Mode<'a> {
    /// Every channel of the block's set, no mask.
    MaskFree,
    /// Hardened selector masks with gathered weights.
    Hard,
    /// Gumbel-sigmoid masks from the given noise.
    Soft(&'a SoftNoise),
    /// Explicit per-block masks.
    Masked(&'a [Vec<f64>]),
}

/// Gradients mirroring [`Params`], plus `∂/∂α` for blocks that have a selector.
#[derive(Debug, Clone, PartialEq)]
pub struct GradBundle {
    pub params: Params,
    pub alpha: Vec<Option<Vec<f64>>>,
}

impl GradBundle {
    pub fn named(&self) -> Vec<(String, &Matrix)> {
        self.params.named()
    }

    pub fn is_finite(&self) -> bool {
        self.params.is_finite() && self.alpha.iter().flatten().flatten().all(|v| v.is_finite())
    }
}

/// A penalty on pooled features; returns its value and gradient w.r.t. the features.
pub trait FeatureRegularizer {
    fn value_and_grad(&self, features: &Matrix) -> Result<(f64, Matrix)>;
}

impl<F: Fn(&Matrix) -> Result<(f64, Matrix)>> FeatureRegularizer for F {
    fn value_and_grad(&self, features: &Matrix) -> Result<(f64, Matrix)> {
        self(features)
    }
}

/// Terms of the composite objective: CE + kcr_weight·regularizer + λ ln(soft cost).
#[derive(Clone, Copy, Default)]
pub struct LossSpec<'a> {
    pub kcr_weight: f64,
    pub regularizer: Option<&'a dyn FeatureRegularizer>,
    pub cost_lambda: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub ce: f64,
    /// Weighted regularizer term.
    pub kcr: f64,
    pub cost: f64,
    pub total: f64,
}

struct MlpCache {
    /// Positions within the block's channel set when weights were gathered.
    gathered: Option<Vec<usize>>,
    idx: Vec<usize>,
    layers: Vec<Linear>,
    mask: Option<Vec<f64>>,
    u_s: Matrix,
    inputs: Vec<Matrix>,
    z: Vec<Matrix>,
    a: Vec<Matrix>,
}

struct BlockCache {
    ln1: LnCache,
    y1: Matrix,
    q: Matrix,
    k: Matrix,
    v: Matrix,
    probs: Vec<f64>,
    ctx: Matrix,
    ln2: LnCache,
    mlp: MlpCache,
}

struct Cache {
    batch: usize,
    patches: Matrix,
    blocks: Vec<BlockCache>,
    ln_f: LnCache,
    features: Matrix,
    soft: Vec<Option<Vec<f64>>>,
}

/// Non-overlapping patches of an `H×W×ch` image (channel-last), raster order.
pub fn patchify(image: &[f64], side: usize, channels: usize, patch: usize) -> Result<Matrix> {
    if patch == 0 || side % patch != 0 {
        return Err(KcrError::Config(format!("image side {side} not divisible by patch {patch}")));
    }
    if image.len() != side * side * channels {
        return Err(KcrError::Dimension(format!(
            "image has {} values, expected {side}×{side}×{channels}",
            image.len()
        )));
    }
    let per = side / patch;
    let pd = patch * patch * channels;
    let mut out = Matrix::zeros(per * per, pd);
    for py in 0..per {
        for px in 0..per {
            let row = out.row_mut(py * per + px);
            let mut c = 0;
            for dy in 0..patch {
                for dx in 0..patch {
                    let base = ((py * patch + dy) * side + px * patch + dx) * channels;
                    row[c..c + channels].copy_from_slice(&image[base..base + channels]);
                    c += channels;
                }
            }
        }
    }
    Ok(out)
}

fn mask_columns(m: &mut Matrix, mask: &[f64]) {
    let c = m.cols();
    for row in m.data_mut().chunks_exact_mut(c) {
        for (x, g) in row.iter_mut().zip(mask) {
            *x *= g;
        }
    }
}

fn column_dot(a: &Matrix, b: &Matrix, acc: &mut [f64]) {
    let c = a.cols();
    for (ra, rb) in a.data().chunks_exact(c).zip(b.data().chunks_exact(c)) {
        for j in 0..c {
            acc[j] += ra[j] * rb[j];
        }
    }
}

fn scatter_columns(src: &Matrix, idx: &[usize], width: usize) -> Matrix {
    let mut out = Matrix::zeros(src.rows(), width);
    for i in 0..src.rows() {
        let s = src.row(i);
        let o = out.row_mut(i);
        for (k, &j) in idx.iter().enumerate() {
            o[j] = s[k];
        }
    }
    out
}

/// Mean cross-entropy and its gradient w.r.t. the logits.
pub fn cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    let (b, c) = logits.shape();
    if labels.len() != b {
        return Err(KcrError::Dimension(format!("{} labels for {b} rows", labels.len())));
    }
    if b == 0 {
        return Err(KcrError::Argument("empty batch".into()));
    }
    let mut grad = Matrix::zeros(b, c);
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        if y >= c {
            return Err(KcrError::Argument(format!("label {y} out of range for {c} classes")));
        }
        let row = logits.row(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let lse = max + sum.ln();
        total += lse - row[y];
        let g = grad.row_mut(i);
        for j in 0..c {
            g[j] = (row[j] - lse).exp() / b as f64;
        }
        g[y] -= 1.0 / b as f64;
    }
    Ok((total / b as f64, grad))
}

pub fn loss_ce(logits: &Matrix, labels: &[usize]) -> Result<f64> {
    cross_entropy(logits, labels).map(|(l, _)| l)
}

fn init_block(cfg: &ModelConfig, width: usize, rng: &mut Rng) -> BlockParams {
    let d = cfg.dim;
    BlockParams {
        ln1: LayerNorm::new(d),
        q: Linear::init(d, d, rng),
        k: Linear::init(d, d, rng),
        v: Linear::init(d, d, rng),
        o: Linear::init(d, d, rng),
        ln2: LayerNorm::new(d),
        mlp: (0..cfg.mlp_layers).map(|_| Linear::init(width, width, rng)).collect(),
    }
}

impl KcrNet {
    fn build(cfg: &ModelConfig, channels: Vec<Vec<usize>>, tau_init: Option<f64>, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.dim;
        let patch_embed = Linear::init(cfg.patch_dim(), d, rng);
        let pos_embed = cfg.pos_embed.then(|| Matrix::from_fn(cfg.tokens(), d, |_, _| 0.02 * rng.normal()));
        let blocks = channels.iter().map(|c| init_block(cfg, c.len(), rng)).collect();
        let selectors = match tau_init {
            Some(tau) => (0..cfg.depth)
                .map(|_| ChannelSelector::new(d, cfg.alpha_init, tau, cfg.d_min).map(Some))
                .collect::<Result<Vec<_>>>()?,
            None => vec![None; cfg.depth],
        };
        Ok(Self {
            config: cfg.clone(),
            params: Params {
                patch_embed,
                pos_embed,
                blocks,
                ln_f: LayerNorm::new(d),
                head: Matrix::zeros(d, cfg.classes),
            },
            channels,
            selectors,
        })
    }

    /// Freshly initialized network over the given channel sets, no selectors.
    pub(crate) fn skeleton(cfg: &ModelConfig, channels: Vec<Vec<usize>>, rng: &mut Rng) -> Result<Self> {
        if channels.len() != cfg.depth {
            return Err(KcrError::Config("one channel set per block required".into()));
        }
        Self::build(cfg, channels, None, rng)
    }

    /// Full-width network with a channel selector in every block.
    pub fn supernet(cfg: &ModelConfig, tau_init: f64, rng: &mut Rng) -> Result<Self> {
        let all: Vec<usize> = (0..cfg.dim).collect();
        Self::build(cfg, vec![all; cfg.depth], Some(tau_init), rng)
    }

    /// Plain transformer: full-width MLPs, no selectors.
    pub fn dense(cfg: &ModelConfig, rng: &mut Rng) -> Result<Self> {
        let all: Vec<usize> = (0..cfg.dim).collect();
        Self::build(cfg, vec![all; cfg.depth], None, rng)
    }

    /// Freshly initialized network with MLPs restricted to a searched architecture.
    pub fn pruned(cfg: &ModelConfig, arch: &Architecture, rng: &mut Rng) -> Result<Self> {
        arch.validate(cfg.dim)?;
        if arch.blocks.len() != cfg.depth {
            return Err(KcrError::Config(format!(
                "architecture has {} blocks, model depth is {}",
                arch.blocks.len(),
                cfg.depth
            )));
        }
        if arch.blocks.iter().any(|b| b.layers != cfg.mlp_layers) {
            return Err(KcrError::Config("architecture layer count differs from mlp_layers".into()));
        }
        let channels = arch.masks().iter().map(|m| m.kept_indices()).collect();
        Self::build(cfg, channels, None, rng)
    }

    pub fn depth(&self) -> usize {
        self.channels.len()
    }

    /// Widths the MLPs would run at in hard mode.
    pub fn hard_widths(&self) -> Vec<usize> {
        self.channels
            .iter()
            .zip(&self.selectors)
            .map(|(c, s)| match s {
                Some(sel) => sel.harden().d_tilde(),
                None => c.len(),
            })
            .collect()
    }

    /// Hard-mode MLP FLOPs summed over blocks.
    pub fn flops(&self) -> u64 {
        self.hard_widths().iter().map(|&w| flops_block(self.config.mlp_layers, w)).sum()
    }

    /// Hardened architecture of a supernet.
    pub fn architecture(&self) -> Result<Architecture> {
        let masks = self
            .selectors
            .iter()
            .enumerate()
            .map(|(j, s)| {
                s.as_ref()
                    .map(|sel| sel.harden())
                    .ok_or_else(|| KcrError::Argument(format!("block {j} has no channel selector")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Architecture::from_masks(&masks, self.config.mlp_layers))
    }

    /// Cost model over the blocks that carry selectors.
    pub fn cost_model(&self, lambda: f64) -> CostModel<'_> {
        CostModel::new(
            self.selectors.iter().flatten().map(|s| (self.config.mlp_layers, s)).collect(),
            lambda,
        )
    }

    fn patch_batch(&self, images: &Matrix) -> Result<Matrix> {
        let cfg = &self.config;
        if images.rows() == 0 {
            return Err(KcrError::Argument("empty batch".into()));
        }
        if images.cols() != cfg.pixels() {
            return Err(KcrError::Dimension(format!(
                "images have {} values per row, expected {}",
                images.cols(),
                cfg.pixels()
            )));
        }
        let parts = (0..images.rows())
            .map(|i| patchify(images.row(i), cfg.image_side, cfg.channels, cfg.patch))
            .collect::<Result<Vec<_>>>()?;
        Matrix::vstack(&parts)
    }

    #[allow(clippy::type_complexity)]
    fn mlp_plan(&self, j: usize, mode: Mode<'_>) -> Result<(Option<Vec<usize>>, Vec<usize>, Vec<Linear>, Option<Vec<f64>>)> {
        let base = &self.channels[j];
        let full = &self.params.blocks[j].mlp;
        let sel = self.selectors[j].as_ref();
        let need_sel = || KcrError::Argument(format!("soft mode needs a channel selector in block {j}"));
        match mode {
            Mode::MaskFree => Ok((None, base.clone(), full.clone(), None)),
            Mode::Hard => match sel {
                Some(s) => {
                    let kept = s.harden().kept_indices();
                    let idx = kept.iter().map(|&i| base[i]).collect();
                    let layers = full.iter().map(|l| l.gather(&kept)).collect();
                    Ok((Some(kept), idx, layers, None))
                }
                None => Ok((None, base.clone(), full.clone(), None)),
            },
            Mode::Soft(noise) => {
                let s = sel.ok_or_else(need_sel)?;
                let eps = noise.0.get(j).ok_or_else(|| KcrError::Argument(format!("no soft noise for block {j}")))?;
                if eps.len() != base.len() {
                    return Err(KcrError::Dimension(format!("block {j}: noise length {} != {}", eps.len(), base.len())));
                }
                Ok((None, base.clone(), full.clone(), Some(s.soft_mask_with_noise(eps))))
            }
            Mode::Masked(masks) => {
                if masks.len() != self.depth() {
                    return Err(KcrError::Dimension(format!("{} masks for {} blocks", masks.len(), self.depth())));
                }
                if masks[j].len() != base.len() {
                    return Err(KcrError::Dimension(format!("block {j}: mask length {} != {}", masks[j].len(), base.len())));
                }
                Ok((None, base.clone(), full.clone(), Some(masks[j].clone())))
            }
        }
    }

    fn forward_cached(&self, images: &Matrix, mode: Mode<'_>) -> Result<(Matrix, Cache)> {
        let cfg = &self.config;
        let d = cfg.dim;
        let n_tok = cfg.tokens();
        let batch = images.rows();
        let patches = self.patch_batch(images)?;
        let p = &self.params;
        let mut x = p.patch_embed.forward(&patches);
        if let Some(pos) = &p.pos_embed {
            for (r, row) in x.data_mut().chunks_exact_mut(d).enumerate() {
                for (v, e) in row.iter_mut().zip(pos.row(r % n_tok)) {
                    *v += e;
                }
            }
        }
        let shape = AttnShape { batch, tokens: n_tok, heads: cfg.heads, dim: d };
        let mut blocks = Vec::with_capacity(self.depth());
        let mut soft = Vec::with_capacity(self.depth());
        for (j, bp) in p.blocks.iter().enumerate() {
            let (y1, ln1) = bp.ln1.forward(&x);
            let q = bp.q.forward(&y1);
            let k = bp.k.forward(&y1);
            let v = bp.v.forward(&y1);
            let (ctx, probs) = attention_forward(&q, &k, &v, shape);
            x.add_assign(&bp.o.forward(&ctx));

            let (y2, ln2) = bp.ln2.forward(&x);
            let (gathered, idx, layers, mask) = self.mlp_plan(j, mode)?;
            let u_s = y2.select_columns(&idx);
            let mut h = u_s.clone();
            if let Some(m) = &mask {
                mask_columns(&mut h, m);
            }
            let l = layers.len();
            let mut inputs = Vec::with_capacity(l);
            let mut zs = Vec::with_capacity(l);
            let mut acts = Vec::with_capacity(l);
            for (li, layer) in layers.iter().enumerate() {
                let z = layer.forward(&h);
                let mut a = z.clone();
                if let Some(m) = &mask {
                    mask_columns(&mut a, m);
                }
                let next = if li + 1 < l { a.map(gelu) } else { a.clone() };
                inputs.push(std::mem::replace(&mut h, next));
                zs.push(z);
                acts.push(a);
            }
            x.add_assign(&scatter_columns(&h, &idx, d));
            soft.push(if matches!(mode, Mode::Soft(_)) { mask.clone() } else { None });
            blocks.push(BlockCache {
                ln1,
                y1,
                q,
                k,
                v,
                probs,
                ctx,
                ln2,
                mlp: MlpCache { gathered, idx, layers, mask, u_s, inputs, z: zs, a: acts },
            });
        }
        let (yf, ln_f) = p.ln_f.forward(&x);
        let mut features = Matrix::zeros(batch, d);
        for b in 0..batch {
            let out = features.row_mut(b);
            for t in 0..n_tok {
                for (o, v) in out.iter_mut().zip(yf.row(b * n_tok + t)) {
                    *o += v;
                }
            }
            for o in out.iter_mut() {
                *o /= n_tok as f64;
            }
        }
        let logits = features.mm(&p.head);
        Ok((logits, Cache { batch, patches, blocks, ln_f, features, soft }))
    }

    /// Logits `B × C` and pooled features `B × d_feat`.
    pub fn forward(&self, images: &Matrix, mode: Mode<'_>) -> Result<(Matrix, Matrix)> {
        let (logits, cache) = self.forward_cached(images, mode)?;
        Ok((logits, cache.features))
    }

    fn backward(&self, cache: &Cache, dlogits: &Matrix, dfeat_extra: Option<&Matrix>) -> GradBundle {
        let cfg = &self.config;
        let d = cfg.dim;
        let n_tok = cfg.tokens();
        let p = &self.params;
        let mut g = p.zeros_like();
        let mut alpha: Vec<Option<Vec<f64>>> = vec![None; self.depth()];

        g.head = cache.features.tn(dlogits);
        let mut dfeat = dlogits.nt(&p.head);
        if let Some(extra) = dfeat_extra {
            dfeat.add_assign(extra);
        }
        let mut dyf = Matrix::zeros(cache.batch * n_tok, d);
        for b in 0..cache.batch {
            let src = dfeat.row(b);
            for t in 0..n_tok {
                for (o, v) in dyf.row_mut(b * n_tok + t).iter_mut().zip(src) {
                    *o = v / n_tok as f64;
                }
            }
        }
        let mut dx = p.ln_f.backward(&cache.ln_f, &dyf, &mut g.ln_f);
        let shape = AttnShape { batch: cache.batch, tokens: n_tok, heads: cfg.heads, dim: d };

        for j in (0..self.depth()).rev() {
            let bp = &p.blocks[j];
            let bc = &cache.blocks[j];
            let mc = &bc.mlp;
            let gb = &mut g.blocks[j];

            let l = mc.layers.len();
            let mut sub_grads: Vec<Linear> = mc.layers.iter().map(Linear::zeros_like).collect();
            let mut dm = vec![0.0; mc.idx.len()];
            let mut dh = dx.select_columns(&mc.idx);
            for li in (0..l).rev() {
                let mut da = dh;
                if li + 1 < l {
                    let a = &mc.a[li];
                    for (v, &av) in da.data_mut().iter_mut().zip(a.data()) {
                        *v *= gelu_grad(av);
                    }
                }
                let mut dz = da;
                if let Some(m) = &mc.mask {
                    column_dot(&dz, &mc.z[li], &mut dm);
                    mask_columns(&mut dz, m);
                }
                dh = mc.layers[li].backward(&mc.inputs[li], &dz, &mut sub_grads[li]);
            }
            if let Some(m) = &mc.mask {
                column_dot(&dh, &mc.u_s, &mut dm);
                mask_columns(&mut dh, m);
            }
            match &mc.gathered {
                Some(kept) => {
                    for (full, sub) in gb.mlp.iter_mut().zip(&sub_grads) {
                        full.scatter_add(sub, kept);
                    }
                }
                None => gb.mlp = sub_grads,
            }
            if let (Some(gm), Some(sel)) = (&cache.soft[j], &self.selectors[j]) {
                let slope = sel.mask_slope(gm);
                alpha[j] = Some(dm.iter().zip(slope).map(|(a, b)| a * b).collect());
            }
            let du = scatter_columns(&dh, &mc.idx, d);
            dx.add_assign(&bp.ln2.backward(&bc.ln2, &du, &mut gb.ln2));

            let dctx = bp.o.backward(&bc.ctx, &dx, &mut gb.o);
            let (dq, dk, dv) = attention_backward(&bc.q, &bc.k, &bc.v, &bc.probs, &dctx, shape);
            let mut dy1 = bp.q.backward(&bc.y1, &dq, &mut gb.q);
            dy1.add_assign(&bp.k.backward(&bc.y1, &dk, &mut gb.k));
            dy1.add_assign(&bp.v.backward(&bc.y1, &dv, &mut gb.v));
            dx.add_assign(&bp.ln1.backward(&bc.ln1, &dy1, &mut gb.ln1));
        }
        if let Some(gp) = &mut g.pos_embed {
            for (r, row) in dx.data().chunks_exact(d).enumerate() {
                for (o, v) in gp.row_mut(r % n_tok).iter_mut().zip(row) {
                    *o += v;
                }
            }
        }
        p.patch_embed.backward_params(&cache.patches, &dx, &mut g.patch_embed);
        for (j, s) in self.selectors.iter().enumerate() {
            if s.is_some() && alpha[j].is_none() {
                alpha[j] = Some(vec![0.0; self.channels[j].len()]);
            }
        }
        GradBundle { params: g, alpha }
    }

    /// Composite loss and its exact gradient w.r.t. all parameters and `α`.
    pub fn loss_and_grad(
        &self,
        images: &Matrix,
        labels: &[usize],
        mode: Mode<'_>,
        spec: LossSpec<'_>,
    ) -> Result<(LossParts, GradBundle)> {
        let (logits, cache) = self.forward_cached(images, mode)?;
        let (ce, dlogits) = cross_entropy(&logits, labels)?;
        if !ce.is_finite() {
            return Err(KcrError::Numeric(format!("cross-entropy term is not finite ({ce})")));
        }
        let mut kcr = 0.0;
        let mut dfeat = None;
        if spec.kcr_weight != 0.0 {
            if let Some(reg) = spec.regularizer {
                let (v, gf) = reg.value_and_grad(&cache.features)?;
                kcr = spec.kcr_weight * v;
                if !kcr.is_finite() {
                    return Err(KcrError::Numeric(format!("kcr regularizer term is not finite ({kcr})")));
                }
                dfeat = Some(gf.scale(spec.kcr_weight));
            }
        }
        let mut grads = self.backward(&cache, &dlogits, dfeat.as_ref());
        let mut cost = 0.0;
        if spec.cost_lambda != 0.0 {
            let model = self.cost_model(spec.cost_lambda);
            cost = model.search_cost_term()?;
            if !cost.is_finite() {
                return Err(KcrError::Numeric(format!("cost term is not finite ({cost})")));
            }
            let mut cg = model.search_cost_grad().into_iter();
            for (j, s) in self.selectors.iter().enumerate() {
                if s.is_some() {
                    let add = cg.next().unwrap_or_default();
                    if let Some(a) = &mut grads.alpha[j] {
                        for (x, y) in a.iter_mut().zip(add) {
                            *x += y;
                        }
                    }
                }
            }
        }
        let total = ce + kcr + cost;
        if !grads.is_finite() {
            return Err(KcrError::Numeric("gradient contains non-finite entries".into()));
        }
        Ok((LossParts { ce, kcr, cost, total }, grads))
    }

    /// Hard-mode logits and features over all rows, in row order, chunked
    /// across the current rayon pool.
    pub fn predict(&self, images: &Matrix, chunk: usize) -> Result<(Matrix, Matrix)> {
        let chunk = chunk.max(1);
        let n = images.rows();
        let starts: Vec<usize> = (0..n).step_by(chunk).collect();
        let parts = starts
            .par_iter()
            .map(|&s| {
                let idx: Vec<usize> = (s..(s + chunk).min(n)).collect();
                self.forward(&images.select_rows(&idx), Mode::Hard)
            })
            .collect::<Result<Vec<_>>>()?;
        let (logits, feats): (Vec<_>, Vec<_>) = parts.into_iter().unzip();
        Ok((Matrix::vstack(&logits)?, Matrix::vstack(&feats)?))
    }

    /// Hard-mode features `n × d_feat`, rows aligned with the input rows.
    pub fn extract_features(&self, images: &Matrix, chunk: usize) -> Result<Matrix> {
        self.predict(images, chunk).map(|(_, f)| f)
    }
}
