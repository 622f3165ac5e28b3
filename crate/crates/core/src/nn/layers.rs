use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use crate::error::{Error, Result};

/// He-uniform initialization: `U(-sqrt(6 / fan_in), sqrt(6 / fan_in))`.
fn he_uniform<R: Rng + ?Sized>(rng: &mut R, fan_in: usize, shape: (usize, usize)) -> Array2<f64> {
    let bound = (6.0 / fan_in as f64).sqrt();
    Array2::from_shape_simple_fn(shape, || rng.gen_range(-bound..bound))
}

/// Fully connected layer, `y = x W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        Dense {
            weight: he_uniform(rng, inputs, (inputs, outputs)),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            weight: Array2::zeros((inputs, outputs)),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.weight.ncols()
    }

    pub(crate) fn forward(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        x.dot(&self.weight) + &self.bias
    }

    /// Returns `(grad_input, grad_weight, grad_bias)`.
    pub(crate) fn backward(
        &self,
        x: ArrayView2<'_, f64>,
        grad: ArrayView2<'_, f64>,
    ) -> (Array2<f64>, Array2<f64>, Array1<f64>) {
        let gw = x.t().dot(&grad);
        let gb = grad.sum_axis(Axis(0));
        let gx = grad.dot(&self.weight.t());
        (gx, gw, gb)
    }
}

/// 2-D convolution with stride 1 and "same" zero padding. Activations are
/// flattened channel-major, `(channels, height, width)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub height: usize,
    pub width: usize,
    /// `(out_channels, in_channels * kernel * kernel)`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Conv2d {
    pub fn new<R: Rng + ?Sized>(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        height: usize,
        width: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if kernel.is_multiple_of(2) {
            return Err(Error::InvalidInput(format!(
                "same-padded convolution needs an odd kernel, got {kernel}"
            )));
        }
        let fan_in = in_channels * kernel * kernel;
        Ok(Conv2d {
            in_channels,
            out_channels,
            kernel,
            height,
            width,
            weight: he_uniform(rng, fan_in, (out_channels, fan_in)),
            bias: Array1::zeros(out_channels),
        })
    }

    pub fn inputs(&self) -> usize {
        self.in_channels * self.height * self.width
    }

    pub fn outputs(&self) -> usize {
        self.out_channels * self.height * self.width
    }

    fn im2col(&self, x: &[f64]) -> Array2<f64> {
        let (h, w, k) = (self.height, self.width, self.kernel);
        let pad = (k / 2) as isize;
        let mut cols = Array2::zeros((self.in_channels * k * k, h * w));
        for c in 0..self.in_channels {
            for ky in 0..k {
                for kx in 0..k {
                    let row = (c * k + ky) * k + kx;
                    for oy in 0..h {
                        let iy = oy as isize + ky as isize - pad;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for ox in 0..w {
                            let ix = ox as isize + kx as isize - pad;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            cols[[row, oy * w + ox]] = x[(c * h + iy as usize) * w + ix as usize];
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, cols: &Array2<f64>, out: &mut [f64]) {
        let (h, w, k) = (self.height, self.width, self.kernel);
        let pad = (k / 2) as isize;
        for c in 0..self.in_channels {
            for ky in 0..k {
                for kx in 0..k {
                    let row = (c * k + ky) * k + kx;
                    for oy in 0..h {
                        let iy = oy as isize + ky as isize - pad;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for ox in 0..w {
                            let ix = ox as isize + kx as isize - pad;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            out[(c * h + iy as usize) * w + ix as usize] +=
                                cols[[row, oy * w + ox]];
                        }
                    }
                }
            }
        }
    }

    pub(crate) fn forward(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let hw = self.height * self.width;
        let mut out = Array2::zeros((x.nrows(), self.outputs()));
        for (row, mut dst) in x.outer_iter().zip(out.outer_iter_mut()) {
            let cols = self.im2col(&row.to_vec());
            let y = self.weight.dot(&cols);
            for o in 0..self.out_channels {
                let b = self.bias[o];
                for (d, v) in dst
                    .slice_mut(s![o * hw..(o + 1) * hw])
                    .iter_mut()
                    .zip(y.row(o))
                {
                    *d = v + b;
                }
            }
        }
        out
    }

    pub(crate) fn backward(
        &self,
        x: ArrayView2<'_, f64>,
        grad: ArrayView2<'_, f64>,
    ) -> (Array2<f64>, Array2<f64>, Array1<f64>) {
        let hw = self.height * self.width;
        let mut gw = Array2::zeros(self.weight.dim());
        let mut gb = Array1::zeros(self.out_channels);
        let mut gx = Array2::zeros(x.dim());
        for ((row, g), mut dst) in x
            .outer_iter()
            .zip(grad.outer_iter())
            .zip(gx.outer_iter_mut())
        {
            let cols = self.im2col(&row.to_vec());
            let g = g
                .to_owned()
                .into_shape((self.out_channels, hw))
                .expect("gradient row has conv output size");
            gw += &g.dot(&cols.t());
            gb += &g.sum_axis(Axis(1));
            let dcols = self.weight.t().dot(&g);
            let mut buf = vec![0.0; self.inputs()];
            self.col2im(&dcols, &mut buf);
            for (d, v) in dst.iter_mut().zip(buf) {
                *d = v;
            }
        }
        (gx, gw, gb)
    }
}

/// 2x2 max pooling with stride 2 over `(channels, height, width)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaxPool2d {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl MaxPool2d {
    pub fn new(channels: usize, height: usize, width: usize) -> Result<Self> {
        if !height.is_multiple_of(2) || !width.is_multiple_of(2) {
            return Err(Error::InvalidInput(format!(
                "2x2 pooling needs even spatial dims, got {height}x{width}"
            )));
        }
        Ok(MaxPool2d {
            channels,
            height,
            width,
        })
    }

    pub fn inputs(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn outputs(&self) -> usize {
        self.channels * (self.height / 2) * (self.width / 2)
    }

    /// Index of the winning input for every output cell; ties go to the
    /// first position in row-major order.
    fn argmax(&self, x: &[f64]) -> Vec<usize> {
        let (h, w) = (self.height, self.width);
        let (oh, ow) = (h / 2, w / 2);
        let mut idx = Vec::with_capacity(self.outputs());
        for c in 0..self.channels {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = (c * h + 2 * oy) * w + 2 * ox;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let i = (c * h + 2 * oy + dy) * w + 2 * ox + dx;
                        if x[i] > x[best] {
                            best = i;
                        }
                    }
                    idx.push(best);
                }
            }
        }
        idx
    }

    pub(crate) fn forward(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = Array2::zeros((x.nrows(), self.outputs()));
        for (row, mut dst) in x.outer_iter().zip(out.outer_iter_mut()) {
            let row = row.to_vec();
            for (d, i) in dst.iter_mut().zip(self.argmax(&row)) {
                *d = row[i];
            }
        }
        out
    }

    pub(crate) fn backward(
        &self,
        x: ArrayView2<'_, f64>,
        grad: ArrayView2<'_, f64>,
    ) -> Array2<f64> {
        let mut gx = Array2::zeros(x.dim());
        for ((row, g), mut dst) in x
            .outer_iter()
            .zip(grad.outer_iter())
            .zip(gx.outer_iter_mut())
        {
            for (gv, i) in g.iter().zip(self.argmax(&row.to_vec())) {
                dst[i] += gv;
            }
        }
        gx
    }
}

pub(crate) fn relu_forward(x: ArrayView2<'_, f64>) -> Array2<f64> {
    x.mapv(|v| v.max(0.0))
}

pub(crate) fn relu_backward(x: ArrayView2<'_, f64>, grad: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut gx = grad.to_owned();
    gx.zip_mut_with(&x, |g, &v| {
        if v <= 0.0 {
            *g = 0.0
        }
    });
    gx
}
