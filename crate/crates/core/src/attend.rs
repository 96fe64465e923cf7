//! Attention masks in image space.
//!
//! The mask for an image is built from the last block's attention: the
//! heads are averaged, each key token gets the mean attention it receives
//! over all queries, and that scalar is painted over the token's patch
//! footprint. A `128 x 1` patch paints a whole column, a `16 x 16` patch a
//! square. The result is min-max normalized to `[0, 1]`.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use vser_nn::Scalar;

use crate::error::{Error, Result};
use crate::vit::VitModel;

pub const DEFAULT_SIGMA: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMask {
    /// Image-sized grid in `[0, 1]`.
    pub mask: Array2<f64>,
    /// Smoothing width, if smoothed.
    pub sigma: Option<f64>,
}

/// Min-max normalize; a constant grid becomes all zeros.
pub fn normalize(grid: &Array2<f64>) -> Array2<f64> {
    let (lo, hi) = grid
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let range = hi - lo;
    if !(range > 0.0) {
        return Array2::zeros(grid.dim());
    }
    grid.mapv(|v| (v - lo) / range)
}

/// Attention received by each token in the last block, averaged over heads
/// and queries. Sums to 1 over tokens.
pub fn received_attention<T: Scalar>(model: &VitModel<T>, image: ArrayView2<T>) -> Result<Array1<f64>> {
    let fwd = model.forward(image)?;
    let last = fwd
        .attn_stack()
        .pop()
        .ok_or_else(|| Error::Config("model has no transformer blocks".into()))?
        .mapv(|v| v.as_f64());
    let heads_mean = last.mean_axis(Axis(0)).expect("at least one head");
    Ok(heads_mean.mean_axis(Axis(0)).expect("at least one token"))
}

/// Spread per-token values over their patches, row-major patch order.
pub fn paint(values: &Array1<f64>, h: usize, w: usize, ph: usize, pw: usize) -> Result<Array2<f64>> {
    let gw = w / pw;
    if h % ph != 0 || w % pw != 0 || values.len() != (h / ph) * gw {
        return Err(Error::Shape(format!(
            "{} tokens do not tile a {h}x{w} image with {ph}x{pw} patches",
            values.len()
        )));
    }
    Ok(Array2::from_shape_fn((h, w), |(y, x)| values[(y / ph) * gw + x / pw]))
}

pub fn extract_attention_mask<T: Scalar>(model: &VitModel<T>, image: ArrayView2<T>) -> Result<AttentionMask> {
    let s = &model.spec;
    let received = received_attention(model, image)?;
    let painted = paint(&received, s.image_h, s.image_w, s.patch_h, s.patch_w)?;
    Ok(AttentionMask {
        mask: normalize(&painted),
        sigma: None,
    })
}

/// Truncated Gaussian taps for offsets `-r..=r`, `r = ceil(3 sigma)`,
/// scaled to unit sum.
fn kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as i64;
    let taps: Vec<f64> = (-r..=r).map(|d| (-((d * d) as f64) / (2.0 * sigma * sigma)).exp()).collect();
    let mass: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / mass).collect()
}

/// Index into `0..n` of position `i` on the half-sample mirrored line
/// `.. x1 x0 | x0 x1 .. x(n-1) | x(n-1) ..`.
fn mirror(i: i64, n: usize) -> usize {
    let period = 2 * n as i64;
    let m = i.rem_euclid(period);
    if m < n as i64 {
        m as usize
    } else {
        (period - 1 - m) as usize
    }
}

/// Blur along axis 0 with mirrored edges. The taps that fall outside the
/// grid are folded back onto it, so every row of the operator sums to one
/// (constants stay constant) and, the kernel being symmetric, so does
/// every column (the total is conserved).
fn blur_rows(grid: &Array2<f64>, k: &[f64]) -> Array2<f64> {
    let r = (k.len() / 2) as i64;
    let (h, w) = grid.dim();
    let mut out = Array2::zeros((h, w));
    for y in 0..h as i64 {
        let mut acc = out.row_mut(y as usize);
        for d in -r..=r {
            acc.scaled_add(k[(d + r) as usize], &grid.row(mirror(y + d, h)));
        }
    }
    out
}

/// 2-D Gaussian blur, not normalized afterwards. The truncated 2-D kernel
/// is a product of 1-D kernels and the mirrored extension of a box is a
/// product of 1-D extensions, so two 1-D passes equal the direct 2-D sum.
pub fn gaussian_blur(grid: &Array2<f64>, sigma: f64) -> Result<Array2<f64>> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidSigma(sigma));
    }
    if grid.is_empty() {
        return Ok(grid.clone());
    }
    let k = kernel(sigma);
    let vertical = blur_rows(grid, &k);
    let horizontal = blur_rows(&vertical.t().to_owned(), &k);
    Ok(horizontal.t().as_standard_layout().into_owned())
}

/// Blur then min-max normalize again.
pub fn gaussian_smooth(mask: &AttentionMask, sigma: f64) -> Result<AttentionMask> {
    Ok(AttentionMask {
        mask: normalize(&gaussian_blur(&mask.mask, sigma)?),
        sigma: Some(sigma),
    })
}
