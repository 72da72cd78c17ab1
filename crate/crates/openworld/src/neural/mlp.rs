use crate::error::{Error, Result};
use crate::neural::layer::{DenseLayer, LayerGradients};

/// Ordered stack of dense layers with matching inner dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<DenseLayer>,
}

/// Everything the backward pass needs from one layer's forward step.
#[derive(Debug, Clone)]
pub struct LayerTrace {
    pub input: Vec<f64>,
    pub pre: Vec<f64>,
    pub output: Vec<f64>,
}

/// Recorded forward pass through a stack; owning the trace is the proof
/// that a forward pass happened, so backward cannot be called without one.
#[derive(Debug, Clone)]
pub struct StackTrace {
    layers: Vec<LayerTrace>,
}

impl StackTrace {
    pub fn output(&self) -> &[f64] {
        &self.layers.last().expect("trace has at least one layer").output
    }
}

impl Mlp {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::EmptyInput("mlp needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::ShapeMismatch(format!(
                    "layer output dim {} feeds layer input dim {}",
                    pair[0].out_dim, pair[1].in_dim
                )));
            }
        }
        Ok(Mlp { layers })
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().expect("non-empty").out_dim
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::param_count).sum()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let trace = self.forward_trace(x)?;
        Ok(trace.layers.into_iter().last().expect("non-empty trace").output)
    }

    /// Forward pass that records inputs, pre-activations, and outputs of
    /// every layer for a later backward pass.
    pub fn forward_trace(&self, x: &[f64]) -> Result<StackTrace> {
        if x.len() != self.in_dim() {
            return Err(Error::ShapeMismatch(format!(
                "input dim {} but network expects {}",
                x.len(),
                self.in_dim()
            )));
        }
        let mut traces = Vec::with_capacity(self.layers.len());
        let mut current = x.to_vec();
        for layer in &self.layers {
            let mut pre = vec![0.0; layer.out_dim];
            let mut out = vec![0.0; layer.out_dim];
            layer.forward_into(&current, &mut pre, &mut out);
            let next = out.clone();
            traces.push(LayerTrace {
                input: current,
                pre,
                output: out,
            });
            current = next;
        }
        Ok(StackTrace { layers: traces })
    }

    /// Backpropagate `d_output` (dL/d activation of the last layer) through
    /// the recorded pass, accumulating parameter gradients into `grads`.
    /// Returns dL/d input of the first layer.
    pub fn backward(&self, trace: &StackTrace, d_output: &[f64], grads: &mut [LayerGradients]) -> Vec<f64> {
        assert_eq!(trace.layers.len(), self.layers.len(), "trace layer count");
        assert_eq!(grads.len(), self.layers.len(), "gradient layer count");
        assert_eq!(d_output.len(), self.out_dim(), "output gradient dim");

        let mut d_out = d_output.to_vec();
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            let t = &trace.layers[idx];
            let g = &mut grads[idx];
            let mut d_in = vec![0.0; layer.in_dim];
            for o in 0..layer.out_dim {
                let dz = d_out[o] * layer.activation.derivative(t.pre[o], t.output[o]);
                if dz == 0.0 {
                    continue;
                }
                g.bias[o] += dz;
                let row = o * layer.in_dim;
                for i in 0..layer.in_dim {
                    g.weights[row + i] += dz * t.input[i];
                    d_in[i] += layer.weights[row + i] * dz;
                }
            }
            d_out = d_in;
        }
        d_out
    }

    pub fn zero_grads(&self) -> Vec<LayerGradients> {
        self.layers.iter().map(LayerGradients::zeros_like).collect()
    }
}
