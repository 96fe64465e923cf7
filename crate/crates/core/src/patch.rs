//! Non-overlapping patch tokenization.
//!
//! Patches are numbered row-major over the patch grid. Inside a token the
//! values run channel by channel, each channel's patch flattened
//! column-major: element `(ch, i, j)` of a `ph x pw` patch lands at
//! `ch * ph * pw + j * ph + i`. With `128 x 1` patches token `t` is image
//! column `t`.

use ndarray::{Array2, Array3, ArrayView2, ArrayView3};
use vser_nn::Scalar;

use crate::error::{shape_err, Result};

fn check(h: usize, w: usize, ph: usize, pw: usize) -> Result<()> {
    if ph == 0 || pw == 0 || h % ph != 0 || w % pw != 0 {
        return shape_err(format!("patch {ph}x{pw} does not tile {h}x{w}"));
    }
    Ok(())
}

/// `[C, H, W]` -> `[n_tokens, C * ph * pw]`.
pub fn patchify<T: Scalar>(x: ArrayView3<T>, ph: usize, pw: usize) -> Result<Array2<T>> {
    let (c, h, w) = x.dim();
    check(h, w, ph, pw)?;
    let cols = w / pw;
    let area = ph * pw;
    Ok(Array2::from_shape_fn(((h / ph) * cols, c * area), |(t, k)| {
        let (pr, pc) = (t / cols, t % cols);
        let (ch, rem) = (k / area, k % area);
        let (j, i) = (rem / ph, rem % ph);
        x[[ch, pr * ph + i, pc * pw + j]]
    }))
}

/// Inverse of [`patchify`].
pub fn unpatchify<T: Scalar>(
    tokens: ArrayView2<T>,
    c: usize,
    h: usize,
    w: usize,
    ph: usize,
    pw: usize,
) -> Result<Array3<T>> {
    check(h, w, ph, pw)?;
    let cols = w / pw;
    if tokens.dim() != ((h / ph) * cols, c * ph * pw) {
        return shape_err(format!("unpatchify: tokens {:?} for {c}x{h}x{w}", tokens.dim()));
    }
    Ok(Array3::from_shape_fn((c, h, w), |(ch, r, col)| {
        let t = (r / ph) * cols + col / pw;
        let k = ch * ph * pw + (col % pw) * ph + r % ph;
        tokens[[t, k]]
    }))
}
