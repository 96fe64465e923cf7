//! Vision transformer over log-Mel images.
//!
//! Input path: optional conv stem, optional coordinate channels, patchify,
//! linear embedding. Then `depth` pre-norm blocks
//! (`x + MHSA(LN(x))`, `x + MLP(LN(x))`). The output of the last block is
//! the feature map; its token mean feeds a two-layer GELU classifier.
//! There is no class token and no learned positional embedding.

use ndarray::{s, Array1, Array2, Array3, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use vser_nn::module::join;
use vser_nn::norm::NormCache;
use vser_nn::{
    gelu, gelu_backward, AttentionCache, AttentionConfig, Checkpoint, LayerNorm, Linear, Module,
    MultiHeadSelfAttention, Scalar, Tensor,
};

use crate::coords::{coordinate_encode, CoordinateGrid};
use crate::error::{shape_err, Error, Result};
use crate::patch::{patchify, unpatchify};
use crate::spec::{ModelSpec, Positional};
use crate::stem::{ConvStem, StemCache};

/// Two linear layers with a GELU between them.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    pub fc1: Linear<T>,
    pub fc2: Linear<T>,
}

#[derive(Debug, Clone)]
pub struct MlpCache<T> {
    x: Array2<T>,
    pre: Array2<T>,
    act: Array2<T>,
}

impl<T: Scalar> Mlp<T> {
    pub fn new<R: Rng>(d_in: usize, hidden: usize, d_out: usize, rng: &mut R) -> Self {
        Self {
            fc1: Linear::new(d_in, hidden, rng),
            fc2: Linear::new(hidden, d_out, rng),
        }
    }

    pub fn forward(&self, x: ArrayView2<T>) -> Result<(Array2<T>, MlpCache<T>)> {
        let pre = self.fc1.forward(x)?;
        let act = gelu(&pre);
        let y = self.fc2.forward(act.view())?;
        Ok((y, MlpCache { x: x.to_owned(), pre, act }))
    }

    pub fn backward(&mut self, cache: &MlpCache<T>, dy: ArrayView2<T>) -> Result<Array2<T>> {
        let dact = self.fc2.backward(cache.act.view(), dy)?;
        let dpre = gelu_backward(&cache.pre, &dact);
        Ok(self.fc1.backward(cache.x.view(), dpre.view())?)
    }
}

impl<T: Scalar> Module<T> for Mlp<T> {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>) {
        self.fc1.params(&join(prefix, "fc1"), out);
        self.fc2.params(&join(prefix, "fc2"), out);
    }

    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>) {
        self.fc1.params_mut(&join(prefix, "fc1"), out);
        self.fc2.params_mut(&join(prefix, "fc2"), out);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block<T> {
    pub ln1: LayerNorm<T>,
    pub attn: MultiHeadSelfAttention<T>,
    pub ln2: LayerNorm<T>,
    pub mlp: Mlp<T>,
}

#[derive(Debug, Clone)]
pub struct BlockCache<T> {
    ln1: NormCache<T>,
    pub attn: AttentionCache<T>,
    ln2: NormCache<T>,
    mlp: MlpCache<T>,
}

impl<T: Scalar> Block<T> {
    pub fn new<R: Rng>(spec: &ModelSpec, rng: &mut R) -> Result<Self> {
        let cfg = AttentionConfig::new(spec.token_dim, spec.heads, spec.head_dim)?;
        Ok(Self {
            ln1: LayerNorm::new(spec.token_dim),
            attn: MultiHeadSelfAttention::new(cfg, rng),
            ln2: LayerNorm::new(spec.token_dim),
            mlp: Mlp::new(spec.token_dim, spec.mlp_hidden, spec.token_dim, rng),
        })
    }

    pub fn forward(&self, x: ArrayView2<T>) -> Result<(Array2<T>, BlockCache<T>)> {
        let (h1, ln1) = self.ln1.forward(x)?;
        let (a, attn) = self.attn.forward(h1.view())?;
        let x1 = &x + &a;
        let (h2, ln2) = self.ln2.forward(x1.view())?;
        let (m, mlp) = self.mlp.forward(h2.view())?;
        Ok((x1 + m, BlockCache { ln1, attn, ln2, mlp }))
    }

    pub fn backward(&mut self, cache: &BlockCache<T>, dy: ArrayView2<T>) -> Result<Array2<T>> {
        let dh2 = self.mlp.backward(&cache.mlp, dy)?;
        let dx1 = &dy + &self.ln2.backward(&cache.ln2, dh2.view())?;
        let dh1 = self.attn.backward(&cache.attn, dx1.view())?;
        Ok(dx1 + self.ln1.backward(&cache.ln1, dh1.view())?)
    }
}

impl<T: Scalar> Module<T> for Block<T> {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>) {
        self.ln1.params(&join(prefix, "ln1"), out);
        self.attn.params(&join(prefix, "attn"), out);
        self.ln2.params(&join(prefix, "ln2"), out);
        self.mlp.params(&join(prefix, "mlp"), out);
    }

    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>) {
        self.ln1.params_mut(&join(prefix, "ln1"), out);
        self.attn.params_mut(&join(prefix, "attn"), out);
        self.ln2.params_mut(&join(prefix, "ln2"), out);
        self.mlp.params_mut(&join(prefix, "mlp"), out);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VitModel<T> {
    pub spec: ModelSpec,
    pub stem: Option<ConvStem<T>>,
    pub grid: Option<CoordinateGrid>,
    pub embed: Linear<T>,
    pub blocks: Vec<Block<T>>,
    pub head: Mlp<T>,
}

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    stem: Option<StemCache<T>>,
    tokens: Array2<T>,
    blocks: Vec<BlockCache<T>>,
    head: MlpCache<T>,
}

#[derive(Debug, Clone)]
pub struct Forward<T> {
    pub logits: Array1<T>,
    /// Output of the last block, `[n_tokens, token_dim]`.
    pub feature_map: Array2<T>,
    pub cache: ForwardCache<T>,
}

impl<T: Scalar> Forward<T> {
    /// Attention weights of every block, each `[heads, T, T]`.
    pub fn attn_stack(&self) -> Vec<&Array3<T>> {
        self.cache.blocks.iter().map(|b| &b.attn.attn).collect()
    }

    /// The tokens that entered the embedding.
    pub fn tokens(&self) -> &Array2<T> {
        &self.cache.tokens
    }
}

impl<T: Scalar> VitModel<T> {
    pub fn new<R: Rng>(spec: &ModelSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let stem = spec.use_conv_stem.then(|| ConvStem::new(&spec.stem_channels, rng));
        let grid = (spec.positional == Positional::ImageCoordinate)
            .then(|| CoordinateGrid::new(spec.image_h, spec.image_w));
        let embed = Linear::new(spec.patch_dim(), spec.token_dim, rng);
        let blocks = (0..spec.depth).map(|_| Block::new(spec, rng)).collect::<Result<_>>()?;
        let head = Mlp::new(spec.token_dim, spec.head_hidden, spec.n_classes, rng);
        Ok(Self {
            spec: spec.clone(),
            stem,
            grid,
            embed,
            blocks,
            head,
        })
    }

    /// Image `[H, W]` -> patch tokens, through the stem and coordinate
    /// channels when the spec has them.
    pub fn tokenize(&self, image: ArrayView2<T>) -> Result<(Array2<T>, Option<StemCache<T>>)> {
        if image.dim() != (self.spec.image_h, self.spec.image_w) {
            return shape_err(format!(
                "image {:?}, model expects {}x{}",
                image.dim(),
                self.spec.image_h,
                self.spec.image_w
            ));
        }
        let x = image.insert_axis(Axis(0));
        let (mut x, stem_cache) = match &self.stem {
            Some(stem) => {
                let (y, c) = stem.forward(x)?;
                (y, Some(c))
            }
            None => (x.to_owned(), None),
        };
        if let Some(grid) = &self.grid {
            x = coordinate_encode(x.view(), grid)?;
        }
        Ok((patchify(x.view(), self.spec.patch_h, self.spec.patch_w)?, stem_cache))
    }

    pub fn forward(&self, image: ArrayView2<T>) -> Result<Forward<T>> {
        let (tokens, stem) = self.tokenize(image)?;
        let mut fwd = self.forward_tokens(tokens.view())?;
        fwd.cache.stem = stem;
        Ok(fwd)
    }

    /// Run from patch tokens `[n_tokens, patch_dim]`.
    pub fn forward_tokens(&self, tokens: ArrayView2<T>) -> Result<Forward<T>> {
        if tokens.dim() != (self.spec.n_tokens(), self.spec.patch_dim()) {
            return shape_err(format!(
                "tokens {:?}, model expects {}x{}",
                tokens.dim(),
                self.spec.n_tokens(),
                self.spec.patch_dim()
            ));
        }
        let mut x = self.embed.forward(tokens)?;
        let mut caches = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let (y, c) = block.forward(x.view())?;
            caches.push(c);
            x = y;
        }
        let pooled = x.mean_axis(Axis(0)).expect("at least one token").insert_axis(Axis(0));
        let (logits, head) = self.head.forward(pooled.view())?;
        Ok(Forward {
            logits: logits.index_axis_move(Axis(0), 0),
            feature_map: x,
            cache: ForwardCache {
                stem: None,
                tokens: tokens.to_owned(),
                blocks: caches,
                head,
            },
        })
    }

    /// Accumulate parameter gradients for upstream gradients on the logits
    /// and/or the feature map. Returns the gradient on the patch tokens.
    pub fn backward(
        &mut self,
        fwd: &Forward<T>,
        dlogits: Option<ArrayView1<T>>,
        dfeature: Option<ArrayView2<T>>,
    ) -> Result<Array2<T>> {
        let n = fwd.feature_map.nrows();
        let mut g = match dfeature {
            Some(d) if d.dim() != fwd.feature_map.dim() => {
                return shape_err(format!("feature gradient {:?}", d.dim()));
            }
            Some(d) => d.to_owned(),
            None => Array2::zeros(fwd.feature_map.dim()),
        };
        if let Some(dl) = dlogits {
            if dl.len() != self.spec.n_classes {
                return shape_err(format!("logit gradient length {}", dl.len()));
            }
            let dpool = self.head.backward(&fwd.cache.head, dl.insert_axis(Axis(0)))?;
            let share = dpool.row(0).mapv(|v| v / T::of(n as f64));
            g += &share;
        }
        for (block, cache) in self.blocks.iter_mut().zip(&fwd.cache.blocks).rev() {
            g = block.backward(cache, g.view())?;
        }
        let dtokens = self.embed.backward(fwd.cache.tokens.view(), g.view())?;
        if let (Some(stem), Some(cache)) = (self.stem.as_mut(), fwd.cache.stem.as_ref()) {
            let sp = &self.spec;
            let dx = unpatchify(
                dtokens.view(),
                sp.patch_channels(),
                sp.image_h,
                sp.image_w,
                sp.patch_h,
                sp.patch_w,
            )?;
            let c = stem.out_channels();
            stem.backward(cache, dx.slice(s![..c, .., ..]))?;
        }
        Ok(dtokens)
    }

    pub fn head_params_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut out = Vec::new();
        self.head.params_mut("head", &mut out);
        out
    }

    /// Freeze or unfreeze the classifier head.
    pub fn set_head_trainable(&mut self, trainable: bool) {
        for (_, t) in self.head_params_mut() {
            t.requires_grad = trainable;
            if trainable && t.grad.is_none() {
                t.grad = Some(ndarray::ArrayD::zeros(t.data.raw_dim()));
            }
        }
    }

    /// Fresh classifier head with the usual initialization.
    pub fn reset_head<R: Rng>(&mut self, rng: &mut R) {
        self.head = Mlp::new(self.spec.token_dim, self.spec.head_hidden, self.spec.n_classes, rng);
    }

    /// Parameters and spec as a checkpoint.
    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint::from_module(self).with_metadata(self.spec.to_metadata())
    }

    /// Rebuild a model from a checkpoint's spec and tensors.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let spec = ModelSpec::from_metadata(&ck.metadata)?;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut model = Self::new(&spec, &mut rng)?;
        ck.load_into(&mut model)?;
        Ok(model)
    }

    /// Load weights; the stored spec must equal this model's spec.
    pub fn load_checkpoint(&mut self, ck: &Checkpoint) -> Result<()> {
        let stored = ModelSpec::from_metadata(&ck.metadata)?;
        if stored != self.spec {
            return Err(Error::Checkpoint(format!(
                "checkpoint holds a {} spec that differs from the model's {} spec",
                stored.role, self.spec.role
            )));
        }
        ck.load_into(self)?;
        Ok(())
    }

    /// Same weights in another precision.
    pub fn convert<U: Scalar>(&self) -> VitModel<U> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut out = VitModel::<U>::new(&self.spec, &mut rng).expect("spec already validated");
        let src = vser_nn::named_parameters(self);
        for ((_, dst), (_, s)) in vser_nn::module::named_parameters_mut(&mut out).into_iter().zip(src) {
            *dst = s.cast();
        }
        out
    }
}

impl<T: Scalar> Module<T> for VitModel<T> {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>) {
        if let Some(stem) = &self.stem {
            stem.params(&join(prefix, "stem"), out);
        }
        self.embed.params(&join(prefix, "embed"), out);
        for (i, b) in self.blocks.iter().enumerate() {
            b.params(&join(prefix, &format!("blocks.{i}")), out);
        }
        self.head.params(&join(prefix, "head"), out);
    }

    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>) {
        if let Some(stem) = &mut self.stem {
            stem.params_mut(&join(prefix, "stem"), out);
        }
        self.embed.params_mut(&join(prefix, "embed"), out);
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.params_mut(&join(prefix, &format!("blocks.{i}")), out);
        }
        self.head.params_mut(&join(prefix, "head"), out);
    }
}
