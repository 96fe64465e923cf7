//! Multi-head scaled dot-product self-attention.

use ndarray::{s, Array2, Array3, ArrayView2, Axis};
use rand::Rng;

use crate::error::{shape_err, NnError, Result};
use crate::linear::Linear;
use crate::loss::softmax_rows;
use crate::module::{join, Module};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttentionConfig {
    pub token_dim: usize,
    pub heads: usize,
    pub head_dim: usize,
}

impl AttentionConfig {
    pub fn new(token_dim: usize, heads: usize, head_dim: usize) -> Result<Self> {
        if token_dim == 0 || heads == 0 || head_dim == 0 {
            return Err(NnError::InvalidConfig(format!(
                "attention dims must be positive: token {token_dim}, heads {heads}, head {head_dim}"
            )));
        }
        Ok(Self {
            token_dim,
            heads,
            head_dim,
        })
    }

    pub fn inner_dim(&self) -> usize {
        self.heads * self.head_dim
    }
}

/// Query, key and value come from one fused projection `[d, 3 * inner]`
/// (columns `[Q | K | V]`, each split into heads of `head_dim`); the
/// concatenated head outputs are projected back to `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiHeadSelfAttention<T> {
    pub cfg: AttentionConfig,
    pub qkv: Linear<T>,
    pub out: Linear<T>,
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct AttentionCache<T> {
    pub x: Array2<T>,
    pub qkv: Array2<T>,
    /// `[heads, T, T]`; each row is a softmax distribution over keys.
    pub attn: Array3<T>,
    pub concat: Array2<T>,
}

impl<T: Scalar> MultiHeadSelfAttention<T> {
    pub fn new<R: Rng>(cfg: AttentionConfig, rng: &mut R) -> Self {
        Self {
            cfg,
            qkv: Linear::new(cfg.token_dim, 3 * cfg.inner_dim(), rng),
            out: Linear::new(cfg.inner_dim(), cfg.token_dim, rng),
        }
    }

    fn head_cols(&self, part: usize, head: usize) -> std::ops::Range<usize> {
        let start = part * self.cfg.inner_dim() + head * self.cfg.head_dim;
        start..start + self.cfg.head_dim
    }

    /// `x: [T, d]` -> `([T, d], cache)`; `cache.attn` holds the weights.
    pub fn forward(&self, x: ArrayView2<T>) -> Result<(Array2<T>, AttentionCache<T>)> {
        let (tokens, d) = x.dim();
        if tokens == 0 || d != self.cfg.token_dim {
            return shape_err(format!(
                "attention: input {:?}, token_dim {}",
                x.dim(),
                self.cfg.token_dim
            ));
        }
        let qkv = self.qkv.forward(x)?;
        let scale = T::one() / T::of(self.cfg.head_dim as f64).sqrt();
        let mut attn = Array3::zeros((self.cfg.heads, tokens, tokens));
        let mut concat = Array2::zeros((tokens, self.cfg.inner_dim()));
        for h in 0..self.cfg.heads {
            let q = qkv.slice(s![.., self.head_cols(0, h)]);
            let k = qkv.slice(s![.., self.head_cols(1, h)]);
            let v = qkv.slice(s![.., self.head_cols(2, h)]);
            let scores = q.dot(&k.t()) * scale;
            let a = softmax_rows(scores.view());
            concat
                .slice_mut(s![.., h * self.cfg.head_dim..(h + 1) * self.cfg.head_dim])
                .assign(&a.dot(&v));
            attn.index_axis_mut(Axis(0), h).assign(&a);
        }
        let y = self.out.forward(concat.view())?;
        Ok((
            y,
            AttentionCache {
                x: x.to_owned(),
                qkv,
                attn,
                concat,
            },
        ))
    }

    pub fn backward(&mut self, cache: &AttentionCache<T>, dy: ArrayView2<T>) -> Result<Array2<T>> {
        let dconcat = self.out.backward(cache.concat.view(), dy)?;
        let scale = T::one() / T::of(self.cfg.head_dim as f64).sqrt();
        let mut dqkv = Array2::zeros(cache.qkv.dim());
        for h in 0..self.cfg.heads {
            let q = cache.qkv.slice(s![.., self.head_cols(0, h)]);
            let k = cache.qkv.slice(s![.., self.head_cols(1, h)]);
            let v = cache.qkv.slice(s![.., self.head_cols(2, h)]);
            let a = cache.attn.index_axis(Axis(0), h);
            let dout = dconcat.slice(s![.., h * self.cfg.head_dim..(h + 1) * self.cfg.head_dim]);
            let da = dout.dot(&v.t());
            let dv = a.t().dot(&dout);
            // softmax backward, row-wise: a * (da - <da, a>)
            let mut ds = &da * &a;
            let dots = ds.sum_axis(Axis(1)).insert_axis(Axis(1));
            ds = &ds - &(&a * &dots);
            ds.mapv_inplace(|v| v * scale);
            dqkv.slice_mut(s![.., self.head_cols(0, h)]).assign(&ds.dot(&k));
            dqkv.slice_mut(s![.., self.head_cols(1, h)]).assign(&ds.t().dot(&q));
            dqkv.slice_mut(s![.., self.head_cols(2, h)]).assign(&dv);
        }
        self.qkv.backward(cache.x.view(), dqkv.view())
    }
}

impl<T: Scalar> Module<T> for MultiHeadSelfAttention<T> {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>) {
        self.qkv.params(&join(prefix, "qkv"), out);
        self.out.params(&join(prefix, "out"), out);
    }

    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>) {
        self.qkv.params_mut(&join(prefix, "qkv"), out);
        self.out.params_mut(&join(prefix, "out"), out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn single_token_attends_to_itself() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = AttentionConfig::new(8, 2, 4).unwrap();
        let mha = MultiHeadSelfAttention::<f64>::new(cfg, &mut rng);
        let x = Array2::from_shape_fn((1, 8), |(_, j)| j as f64 * 0.1);
        let (y, cache) = mha.forward(x.view()).unwrap();
        assert!(cache.attn.iter().all(|&a| a == 1.0));
        // output is the out-projection of V
        let v = cache.qkv.slice(s![.., 16..24]).to_owned();
        let expected = mha.out.forward(v.view()).unwrap();
        assert!((&y - &expected).iter().all(|d| d.abs() < 1e-14));
    }

    #[test]
    fn rows_are_distributions() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = AttentionConfig::new(16, 5, 8).unwrap();
        let mha = MultiHeadSelfAttention::<f32>::new(cfg, &mut rng);
        let d = Normal::new(0.0, 3.0).unwrap();
        let x = Array2::from_shape_fn((12, 16), |_| d.sample(&mut rng));
        let (y, cache) = mha.forward(x.view()).unwrap();
        assert_eq!(y.dim(), (12, 16));
        assert_eq!(cache.attn.dim(), (5, 12, 12));
        for h in 0..5 {
            for row in cache.attn.index_axis(Axis(0), h).rows() {
                assert!((row.sum() - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn rejects_bad_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mha = MultiHeadSelfAttention::<f64>::new(AttentionConfig::new(8, 2, 4).unwrap(), &mut rng);
        assert!(mha.forward(Array2::zeros((3, 7)).view()).is_err());
        assert!(mha.forward(Array2::zeros((0, 8)).view()).is_err());
        assert!(AttentionConfig::new(8, 0, 4).is_err());
    }
}
