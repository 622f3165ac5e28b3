//! A small feed-forward network with hand-written backward passes.
//!
//! The network ends in a linear layer producing logits; the loss module
//! supplies `dL/dz` directly, so nothing here ever differentiates through
//! softmax probabilities.

mod checkpoint;
mod gradcheck;
mod layers;
mod optim;

use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;

use crate::error::{Error, Result};

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};
pub use gradcheck::{grad_check, DEFAULT_GRADCHECK_STEP};
pub use layers::{Conv2d, Dense, MaxPool2d};
pub use optim::{optimizer_step, OptimizerKind, OptimizerSpec};

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Dense(Dense),
    Relu { width: usize },
    Conv2d(Conv2d),
    MaxPool2d(MaxPool2d),
}

impl Layer {
    pub fn inputs(&self) -> usize {
        match self {
            Layer::Dense(d) => d.inputs(),
            Layer::Relu { width } => *width,
            Layer::Conv2d(c) => c.inputs(),
            Layer::MaxPool2d(p) => p.inputs(),
        }
    }

    pub fn outputs(&self) -> usize {
        match self {
            Layer::Dense(d) => d.outputs(),
            Layer::Relu { width } => *width,
            Layer::Conv2d(c) => c.outputs(),
            Layer::MaxPool2d(p) => p.outputs(),
        }
    }

    fn forward(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        match self {
            Layer::Dense(d) => d.forward(x),
            Layer::Relu { .. } => layers::relu_forward(x),
            Layer::Conv2d(c) => c.forward(x),
            Layer::MaxPool2d(p) => p.forward(x),
        }
    }

    fn params(&self) -> Vec<&[f64]> {
        match self {
            Layer::Dense(d) => vec![
                d.weight.as_slice().expect("standard layout"),
                d.bias.as_slice().expect("standard layout"),
            ],
            Layer::Conv2d(c) => vec![
                c.weight.as_slice().expect("standard layout"),
                c.bias.as_slice().expect("standard layout"),
            ],
            _ => Vec::new(),
        }
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            Layer::Dense(d) => vec![
                d.weight.as_slice_mut().expect("standard layout"),
                d.bias.as_slice_mut().expect("standard layout"),
            ],
            Layer::Conv2d(c) => vec![
                c.weight.as_slice_mut().expect("standard layout"),
                c.bias.as_slice_mut().expect("standard layout"),
            ],
            _ => Vec::new(),
        }
    }
}

/// Parameter gradients, one flat vector per parameter tensor in model order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<Vec<f64>>);

impl Gradients {
    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.0.iter().map(Vec::as_slice)
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.0.iter().flatten().copied().collect()
    }
}

/// Optimizer state for one parameter tensor.
#[derive(Debug, Clone, Default, PartialEq)]
pub(crate) struct Slots {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    layers: Vec<Layer>,
    /// Inputs seen by each layer during the last `forward`.
    cache: Option<Vec<Array2<f64>>>,
    pub(crate) slots: Vec<Slots>,
}

impl Model {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("a model needs at least one layer".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(Error::Shape(format!(
                    "layer {i} emits {} values but layer {} expects {}",
                    pair[0].outputs(),
                    i + 1,
                    pair[1].inputs()
                )));
            }
        }
        let tensors = layers.iter().map(|l| l.params().len()).sum();
        Ok(Model {
            layers,
            cache: None,
            slots: vec![Slots::default(); tensors],
        })
    }

    /// Dense/ReLU stack: `inputs -> hidden... -> classes`. An empty
    /// `hidden` gives a linear (softmax regression) model.
    pub fn mlp<R: Rng + ?Sized>(
        inputs: usize,
        hidden: &[usize],
        classes: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut layers = Vec::new();
        let mut width = inputs;
        for &h in hidden {
            layers.push(Layer::Dense(Dense::new(width, h, rng)));
            layers.push(Layer::Relu { width: h });
            width = h;
        }
        layers.push(Layer::Dense(Dense::new(width, classes, rng)));
        Model::new(layers)
    }

    /// Two 3x3 conv + ReLU + 2x2 pool stages followed by a dense classifier.
    pub fn small_cnn<R: Rng + ?Sized>(
        channels: usize,
        height: usize,
        width: usize,
        classes: usize,
        filters: (usize, usize),
        rng: &mut R,
    ) -> Result<Self> {
        if !height.is_multiple_of(4) || !width.is_multiple_of(4) {
            return Err(Error::Shape(format!(
                "small CNN needs spatial dims divisible by 4, got {height}x{width}"
            )));
        }
        let (f1, f2) = filters;
        let (h2, w2) = (height / 2, width / 2);
        let layers = vec![
            Layer::Conv2d(Conv2d::new(channels, f1, 3, height, width, rng)?),
            Layer::Relu {
                width: f1 * height * width,
            },
            Layer::MaxPool2d(MaxPool2d::new(f1, height, width)?),
            Layer::Conv2d(Conv2d::new(f1, f2, 3, h2, w2, rng)?),
            Layer::Relu {
                width: f2 * h2 * w2,
            },
            Layer::MaxPool2d(MaxPool2d::new(f2, h2, w2)?),
            Layer::Dense(Dense::new(f2 * (h2 / 2) * (w2 / 2), classes, rng)),
        ];
        Model::new(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn params(&self) -> Vec<&[f64]> {
        self.layers.iter().flat_map(Layer::params).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers.iter_mut().flat_map(Layer::params_mut).collect()
    }

    fn check_input(&self, x: &ArrayView2<'_, f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "model expects {} features, batch has {}",
                self.input_dim(),
                x.ncols()
            )));
        }
        Ok(())
    }

    /// Training-mode forward pass; caches layer inputs for [`Model::backward`].
    pub fn forward(&mut self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut current = x.to_owned();
        for layer in &self.layers {
            let next = layer.forward(current.view());
            inputs.push(current);
            current = next;
        }
        self.cache = Some(inputs);
        Ok(current)
    }

    /// Inference-mode forward pass; leaves the cache untouched.
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        let mut current = x.to_owned();
        for layer in &self.layers {
            current = layer.forward(current.view());
        }
        Ok(current)
    }

    /// Reverse pass from the gradient of the objective with respect to the
    /// logits of the last `forward` batch.
    pub fn backward(&self, grad_logits: ArrayView2<'_, f64>) -> Result<Gradients> {
        let inputs = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::Shape("backward called before forward".into()))?;
        let rows = inputs[0].nrows();
        if grad_logits.dim() != (rows, self.output_dim()) {
            return Err(Error::Shape(format!(
                "expected logit gradient of shape {:?}, got {:?}",
                (rows, self.output_dim()),
                grad_logits.dim()
            )));
        }
        let mut grads: Vec<Vec<f64>> = Vec::new();
        let mut upstream = grad_logits.to_owned();
        for (layer, x) in self.layers.iter().zip(inputs).rev() {
            upstream = match layer {
                Layer::Dense(d) => {
                    let (gx, gw, gb) = d.backward(x.view(), upstream.view());
                    grads.push(into_vec1(gb));
                    grads.push(into_vec2(gw));
                    gx
                }
                Layer::Conv2d(c) => {
                    let (gx, gw, gb) = c.backward(x.view(), upstream.view());
                    grads.push(into_vec1(gb));
                    grads.push(into_vec2(gw));
                    gx
                }
                Layer::Relu { .. } => layers::relu_backward(x.view(), upstream.view()),
                Layer::MaxPool2d(p) => p.backward(x.view(), upstream.view()),
            };
        }
        grads.reverse();
        Ok(Gradients(grads))
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}

fn into_vec2(a: Array2<f64>) -> Vec<f64> {
    if a.is_standard_layout() {
        a.into_raw_vec()
    } else {
        a.iter().copied().collect()
    }
}

fn into_vec1(a: Array1<f64>) -> Vec<f64> {
    a.to_vec()
}
