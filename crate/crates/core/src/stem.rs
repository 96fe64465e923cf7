//! Convolutional stem: repeated `conv3x3 -> instance norm -> GELU`, stride
//! 1 and zero padding, so the spatial size never changes.

use ndarray::{Array3, ArrayView3};
use rand::Rng;
use vser_nn::norm::NormCache;
use vser_nn::{gelu, gelu_backward, Conv2d3x3, InstanceNorm, Module, Scalar, Tensor};

use crate::error::{shape_err, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ConvStem<T> {
    pub convs: Vec<Conv2d3x3<T>>,
    pub norms: Vec<InstanceNorm<T>>,
}

/// Per-stage input, norm statistics and pre-activation.
#[derive(Debug, Clone)]
pub struct StemCache<T> {
    inputs: Vec<Array3<T>>,
    norms: Vec<NormCache<T>>,
    pre_act: Vec<Array3<T>>,
}

impl<T: Scalar> ConvStem<T> {
    /// One stage per entry of `channels`, starting from a single channel.
    pub fn new<R: Rng>(channels: &[usize], rng: &mut R) -> Self {
        let mut c_in = 1;
        let mut convs = Vec::with_capacity(channels.len());
        let mut norms = Vec::with_capacity(channels.len());
        for &c_out in channels {
            convs.push(Conv2d3x3::new(c_in, c_out, rng));
            norms.push(InstanceNorm::new(c_out));
            c_in = c_out;
        }
        Self { convs, norms }
    }

    pub fn out_channels(&self) -> usize {
        self.convs.last().map_or(1, |c| c.c_out())
    }

    /// `[1, H, W]` -> `[C_last, H, W]`.
    pub fn forward(&self, x: ArrayView3<T>) -> Result<(Array3<T>, StemCache<T>)> {
        if x.dim().0 != 1 {
            return shape_err(format!("stem expects one input channel, got {:?}", x.dim()));
        }
        let mut cache = StemCache {
            inputs: Vec::with_capacity(self.convs.len()),
            norms: Vec::with_capacity(self.convs.len()),
            pre_act: Vec::with_capacity(self.convs.len()),
        };
        let mut h = x.to_owned();
        for (conv, norm) in self.convs.iter().zip(&self.norms) {
            let z = conv.forward(h.view())?;
            let (n, nc) = norm.forward(z.view())?;
            let next = gelu(&n);
            cache.inputs.push(h);
            cache.norms.push(nc);
            cache.pre_act.push(n);
            h = next;
        }
        Ok((h, cache))
    }

    /// Accumulates parameter gradients; returns the input gradient.
    pub fn backward(&mut self, cache: &StemCache<T>, dy: ArrayView3<T>) -> Result<Array3<T>> {
        let mut g = dy.to_owned();
        for i in (0..self.convs.len()).rev() {
            let dn = gelu_backward(&cache.pre_act[i], &g);
            let dz = self.norms[i].backward(&cache.norms[i], dn.view())?;
            g = self.convs[i].backward(cache.inputs[i].view(), dz.view())?;
        }
        Ok(g)
    }
}

impl<T: Scalar> Module<T> for ConvStem<T> {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>) {
        for (i, (c, n)) in self.convs.iter().zip(&self.norms).enumerate() {
            c.params(&vser_nn::module::join(prefix, &format!("conv{i}")), out);
            n.params(&vser_nn::module::join(prefix, &format!("norm{i}")), out);
        }
    }

    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>) {
        for (i, (c, n)) in self.convs.iter_mut().zip(self.norms.iter_mut()).enumerate() {
            c.params_mut(&vser_nn::module::join(prefix, &format!("conv{i}")), out);
            n.params_mut(&vser_nn::module::join(prefix, &format!("norm{i}")), out);
        }
    }
}
