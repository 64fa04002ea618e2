//! Named parameter tensors and their initialisation.

use ndarray::Array2;
use rand::Rng;

use crate::autodiff::Float;
use crate::config::{Aggregator, Encoder, ModelConfig, Scorer};
use crate::error::{GpnError, Result};

/// Parameter names and shapes in storage order.
pub fn layout(config: &ModelConfig) -> Vec<(String, (usize, usize))> {
    let h = config.hidden;
    let d = h / config.heads;
    let mut out = Vec::new();
    for l in 0..config.layers {
        let input = if l == 0 { config.features } else { h };
        match config.encoder {
            Encoder::Gat => {
                out.push((format!("gat{l}.W"), (input, h)));
                out.push((format!("gat{l}.att_src"), (d, config.heads)));
                out.push((format!("gat{l}.att_dst"), (d, config.heads)));
            }
            Encoder::Gcn => out.push((format!("gcn{l}.W"), (input, h))),
        }
    }
    if config.aggregator == Aggregator::Lstm {
        out.push(("lstm.Wx".into(), (h, 4 * h)));
        out.push(("lstm.Wh".into(), (h, 4 * h)));
        out.push(("lstm.b".into(), (1, 4 * h)));
    }
    match config.scorer {
        Scorer::Attention => {
            out.push(("W2".into(), (h, h)));
            out.push(("W3".into(), (h, h)));
        }
        Scorer::Mlp => {
            out.push(("mlp.W_node".into(), (h, h)));
            out.push(("mlp.W_ctx".into(), (h, h)));
            out.push(("mlp.b".into(), (1, h)));
            out.push(("mlp.w_out".into(), (h, 1)));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub config: ModelConfig,
    names: Vec<String>,
    tensors: Vec<Array2<T>>,
}

impl<T: Float> ModelParams<T> {
    /// Glorot-uniform weights, zero biases.
    pub fn init(config: &ModelConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let mut names = Vec::new();
        let mut tensors = Vec::new();
        for (name, (r, c)) in layout(config) {
            let t = if r == 1 {
                Array2::zeros((r, c))
            } else {
                let limit = (6.0 / (r + c) as f64).sqrt();
                Array2::from_shape_simple_fn((r, c), || T::of(rng.gen_range(-limit..limit)))
            };
            names.push(name);
            tensors.push(t);
        }
        Ok(ModelParams {
            config: config.clone(),
            names,
            tensors,
        })
    }

    /// Builds from named tensors, checking them against the layout.
    pub fn from_tensors(config: &ModelConfig, named: Vec<(String, Array2<T>)>) -> Result<Self> {
        config.validate()?;
        let expected = layout(config);
        if expected.len() != named.len() {
            return Err(GpnError::Shape(format!(
                "expected {} parameter blocks, got {}",
                expected.len(),
                named.len()
            )));
        }
        for ((name, shape), (got, t)) in expected.iter().zip(&named) {
            if name != got || t.dim() != *shape {
                return Err(GpnError::Shape(format!(
                    "block {got} {:?} does not match {name} {shape:?}",
                    t.dim()
                )));
            }
        }
        let (names, tensors) = named.into_iter().unzip();
        Ok(ModelParams {
            config: config.clone(),
            names,
            tensors,
        })
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Array2<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Array2<T>] {
        &mut self.tensors
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn get(&self, name: &str) -> Option<&Array2<T>> {
        self.index(name).map(|i| &self.tensors[i])
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    pub fn cast<U: Float>(&self) -> ModelParams<U> {
        ModelParams {
            config: self.config.clone(),
            names: self.names.clone(),
            tensors: self.tensors.iter().map(|t| t.mapv(|v| U::of(v.to_f64()))).collect(),
        }
    }

    /// Zero tensors of matching shapes.
    pub fn zeros_like(&self) -> Vec<Array2<T>> {
        self.tensors.iter().map(|t| Array2::zeros(t.raw_dim())).collect()
    }

    /// Error naming the first block with a non-finite entry.
    pub fn check_finite(&self) -> Result<()> {
        for (name, t) in self.names.iter().zip(&self.tensors) {
            if t.iter().any(|v| !v.is_finite()) {
                return Err(GpnError::NonFinite(format!("parameter {name}")));
            }
        }
        Ok(())
    }
}
