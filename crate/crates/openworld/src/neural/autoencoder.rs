use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::neural::layer::{Activation, DenseLayer, LayerGradients};
use crate::neural::mlp::{Mlp, StackTrace};
use crate::types::Embedding;

/// Mean squared error between a vector and its reconstruction:
/// mean over coordinates of the squared difference.
pub fn mse_loss(x: &[f64], reconstruction: &[f64]) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::EmptyInput("mse over empty vectors".into()));
    }
    if x.len() != reconstruction.len() {
        return Err(Error::ShapeMismatch(format!(
            "mse between dims {} and {}",
            x.len(),
            reconstruction.len()
        )));
    }
    let sum: f64 = x
        .iter()
        .zip(reconstruction)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / x.len() as f64)
}

/// Encoder/decoder pair sharing one embedding space. The same instance
/// serves both domains; the target domain adapts it online.
#[derive(Debug, Clone, PartialEq)]
pub struct Autoencoder {
    encoder: Mlp,
    decoder: Mlp,
}

/// Parameter gradients for a whole autoencoder, one accumulator per layer.
#[derive(Debug, Clone)]
pub struct GradientSet {
    pub encoder: Vec<LayerGradients>,
    pub decoder: Vec<LayerGradients>,
}

impl GradientSet {
    pub fn zeros_like(ae: &Autoencoder) -> Self {
        GradientSet {
            encoder: ae.encoder.zero_grads(),
            decoder: ae.decoder.zero_grads(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.encoder.iter().chain(self.decoder.iter()).all(LayerGradients::is_finite)
    }

    /// Flat view over all gradient entries in the same order as
    /// [`Autoencoder::param`]: encoder layers then decoder layers, each as
    /// weights row-major followed by biases.
    pub fn flat(&self, index: usize) -> f64 {
        let mut i = index;
        for g in self.encoder.iter().chain(self.decoder.iter()) {
            if i < g.weights.len() {
                return g.weights[i];
            }
            i -= g.weights.len();
            if i < g.bias.len() {
                return g.bias[i];
            }
            i -= g.bias.len();
        }
        panic!("gradient index {index} out of range");
    }
}

/// Recorded round trip used to backpropagate reconstruction error.
pub struct ReconstructionTrace {
    pub encode: StackTrace,
    pub decode: StackTrace,
}

impl Autoencoder {
    pub fn new(encoder: Mlp, decoder: Mlp) -> Result<Self> {
        if encoder.out_dim() != decoder.in_dim() {
            return Err(Error::ShapeMismatch(format!(
                "encoder emits dim {} but decoder expects {}",
                encoder.out_dim(),
                decoder.in_dim()
            )));
        }
        if decoder.out_dim() != encoder.in_dim() {
            return Err(Error::ShapeMismatch(format!(
                "decoder emits dim {} but encoder expects {}",
                decoder.out_dim(),
                encoder.in_dim()
            )));
        }
        Ok(Autoencoder { encoder, decoder })
    }

    /// Seeded build: encoder `input -> hidden... -> embed`, decoder the
    /// given mirror `embed -> hidden... -> input`. Hidden layers are relu,
    /// output layers identity; weights are Xavier-uniform.
    pub fn from_dims(
        input_dim: usize,
        encoder_hidden: &[usize],
        embed_dim: usize,
        decoder_hidden: &[usize],
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let build = |dims: &[usize], rng: &mut ChaCha8Rng| -> Result<Mlp> {
            let mut layers = Vec::new();
            for (i, pair) in dims.windows(2).enumerate() {
                let act = if i + 2 == dims.len() {
                    Activation::Identity
                } else {
                    Activation::Relu
                };
                layers.push(DenseLayer::xavier(pair[0], pair[1], act, rng)?);
            }
            Mlp::new(layers)
        };
        let mut enc_dims = vec![input_dim];
        enc_dims.extend_from_slice(encoder_hidden);
        enc_dims.push(embed_dim);
        let mut dec_dims = vec![embed_dim];
        dec_dims.extend_from_slice(decoder_hidden);
        dec_dims.push(input_dim);
        let encoder = build(&enc_dims, &mut rng)?;
        let decoder = build(&dec_dims, &mut rng)?;
        Autoencoder::new(encoder, decoder)
    }

    pub fn encoder(&self) -> &Mlp {
        &self.encoder
    }

    pub fn decoder(&self) -> &Mlp {
        &self.decoder
    }

    pub fn encoder_mut(&mut self) -> &mut Mlp {
        &mut self.encoder
    }

    pub fn decoder_mut(&mut self) -> &mut Mlp {
        &mut self.decoder
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.in_dim()
    }

    pub fn embed_dim(&self) -> usize {
        self.encoder.out_dim()
    }

    pub fn encode(&self, x: &[f64]) -> Result<Embedding> {
        self.encoder.forward(x)
    }

    pub fn decode(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.decoder.forward(y)
    }

    pub fn reconstruct(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.decode(&self.encode(x)?)
    }

    pub fn encode_batch(&self, rows: &[Vec<f64>]) -> Result<Vec<Embedding>> {
        rows.iter().map(|r| self.encode(r)).collect()
    }

    /// Forward round trip with recorded traces.
    pub fn trace(&self, x: &[f64]) -> Result<ReconstructionTrace> {
        let encode = self.encoder.forward_trace(x)?;
        let decode = self.decoder.forward_trace(encode.output())?;
        Ok(ReconstructionTrace { encode, decode })
    }

    /// Mean reconstruction MSE over a batch together with its exact
    /// parameter gradients. `scale` multiplies the loss term (used to fold
    /// this into a weighted combined objective); pass 1.0 for the plain loss.
    /// The returned loss is unscaled.
    pub fn reconstruction_grads_scaled(
        &self,
        batch: &[Vec<f64>],
        scale: f64,
        grads: &mut GradientSet,
    ) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::EmptyInput("reconstruction over empty batch".into()));
        }
        let dim = self.input_dim() as f64;
        let n = batch.len() as f64;
        let mut total = 0.0;
        for x in batch {
            let trace = self.trace(x)?;
            let recon = trace.decode.output();
            total += mse_loss(x, recon)?;
            // d(total_mse)/d recon_j = 2 (recon_j - x_j) / (dim * n).
            let d_recon: Vec<f64> = recon
                .iter()
                .zip(x)
                .map(|(r, xi)| scale * 2.0 * (r - xi) / (dim * n))
                .collect();
            let d_embed = self.decoder.backward(&trace.decode, &d_recon, &mut grads.decoder);
            self.encoder.backward(&trace.encode, &d_embed, &mut grads.encoder);
        }
        Ok(total / n)
    }

    /// Plain mean reconstruction MSE and gradients for a batch.
    pub fn reconstruction_grads(&self, batch: &[Vec<f64>]) -> Result<(f64, GradientSet)> {
        let mut grads = GradientSet::zeros_like(self);
        let loss = self.reconstruction_grads_scaled(batch, 1.0, &mut grads)?;
        Ok((loss, grads))
    }

    pub fn param_count(&self) -> usize {
        self.encoder.param_count() + self.decoder.param_count()
    }

    /// Read one parameter by flat index (encoder layers then decoder
    /// layers; weights row-major, then biases).
    pub fn param(&self, index: usize) -> f64 {
        let mut i = index;
        for layer in self.encoder.layers().iter().chain(self.decoder.layers()) {
            if i < layer.weights.len() {
                return layer.weights[i];
            }
            i -= layer.weights.len();
            if i < layer.bias.len() {
                return layer.bias[i];
            }
            i -= layer.bias.len();
        }
        panic!("parameter index {index} out of range");
    }

    /// Write one parameter by flat index.
    pub fn set_param(&mut self, index: usize, value: f64) {
        let mut i = index;
        for layer in self
            .encoder
            .layers_mut()
            .iter_mut()
            .chain(self.decoder.layers_mut().iter_mut())
        {
            if i < layer.weights.len() {
                layer.weights[i] = value;
                return;
            }
            i -= layer.weights.len();
            if i < layer.bias.len() {
                layer.bias[i] = value;
                return;
            }
            i -= layer.bias.len();
        }
        panic!("parameter index {index} out of range");
    }

    /// Serialize to the stable text snapshot format:
    ///
    /// ```text
    /// autoencoder v1
    /// encoder <#layers>
    /// decoder <#layers>
    /// layer <in> <out> <activation>   (encoder layers, then decoder layers)
    /// w <in*out weights, row-major, space-separated>
    /// b <out biases>
    /// ```
    ///
    /// Floats use Rust's shortest round-trip notation.
    pub fn to_snapshot(&self) -> String {
        let mut s = String::new();
        s.push_str("autoencoder v1\n");
        let _ = writeln!(s, "encoder {}", self.encoder.layers().len());
        let _ = writeln!(s, "decoder {}", self.decoder.layers().len());
        for layer in self.encoder.layers().iter().chain(self.decoder.layers()) {
            let _ = writeln!(s, "layer {} {} {}", layer.in_dim, layer.out_dim, layer.activation.as_str());
            s.push('w');
            for w in &layer.weights {
                let _ = write!(s, " {w:?}");
            }
            s.push('\n');
            s.push('b');
            for b in &layer.bias {
                let _ = write!(s, " {b:?}");
            }
            s.push('\n');
        }
        s
    }

    pub fn from_snapshot(text: &str, path: &str) -> Result<Self> {
        let bad = |reason: &str| Error::MalformedFile {
            path: path.to_string(),
            reason: reason.to_string(),
        };
        let mut lines = text.lines();
        if lines.next() != Some("autoencoder v1") {
            return Err(bad("missing `autoencoder v1` header"));
        }
        let mut counts = [0usize; 2];
        for (i, name) in ["encoder", "decoder"].iter().enumerate() {
            let line = lines.next().ok_or_else(|| bad("truncated header"))?;
            let rest = line
                .strip_prefix(name)
                .ok_or_else(|| bad(&format!("expected `{name} <layers>`")))?;
            counts[i] = rest
                .trim()
                .parse()
                .map_err(|_| bad(&format!("bad layer count in `{line}`")))?;
        }
        let mut stacks: [Vec<DenseLayer>; 2] = [Vec::new(), Vec::new()];
        for (i, count) in counts.iter().enumerate() {
            for _ in 0..*count {
                let header = lines.next().ok_or_else(|| bad("missing layer header"))?;
                let parts: Vec<&str> = header.split_whitespace().collect();
                if parts.len() != 4 || parts[0] != "layer" {
                    return Err(bad(&format!("bad layer header `{header}`")));
                }
                let in_dim: usize = parts[1].parse().map_err(|_| bad("bad layer in_dim"))?;
                let out_dim: usize = parts[2].parse().map_err(|_| bad("bad layer out_dim"))?;
                let activation = Activation::parse(parts[3])?;
                let weights = parse_values(lines.next(), 'w', in_dim * out_dim, path)?;
                let bias = parse_values(lines.next(), 'b', out_dim, path)?;
                stacks[i].push(DenseLayer::from_parts(in_dim, out_dim, activation, weights, bias)?);
            }
        }
        let [enc, dec] = stacks;
        Autoencoder::new(Mlp::new(enc)?, Mlp::new(dec)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_snapshot()).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Autoencoder::from_snapshot(&text, &path.display().to_string())
    }
}

fn parse_values(line: Option<&str>, tag: char, expect: usize, path: &str) -> Result<Vec<f64>> {
    let bad = |reason: String| Error::MalformedFile {
        path: path.to_string(),
        reason,
    };
    let line = line.ok_or_else(|| bad(format!("missing `{tag}` line")))?;
    let rest = line
        .strip_prefix(tag)
        .ok_or_else(|| bad(format!("expected line starting with `{tag}`")))?;
    let values: Vec<f64> = rest
        .split_whitespace()
        .map(|v| v.parse::<f64>().map_err(|_| bad(format!("bad float `{v}`"))))
        .collect::<Result<_>>()?;
    if values.len() != expect {
        return Err(bad(format!(
            "`{tag}` line has {} values, expected {expect}",
            values.len()
        )));
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_of_unit_offsets_is_one() {
        // Hand oracle: x = (0, 0), x' = (1, 1) -> mean of (1, 1) = 1.0.
        assert_eq!(mse_loss(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 1.0);
    }

    #[test]
    fn mse_rejects_empty_and_mismatched() {
        assert!(mse_loss(&[], &[]).is_err());
        assert!(mse_loss(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn round_trip_dims_match_input() {
        let ae = Autoencoder::from_dims(6, &[5], 3, &[5], 42).unwrap();
        let x = vec![0.1, -0.2, 0.3, 0.0, 1.0, -1.0];
        let recon = ae.reconstruct(&x).unwrap();
        assert_eq!(recon.len(), x.len());
        assert_eq!(ae.encode(&x).unwrap().len(), 3);
    }

    #[test]
    fn new_rejects_non_mirrored_pair() {
        let enc = Autoencoder::from_dims(4, &[], 2, &[], 0).unwrap().encoder.clone();
        let dec_wrong = Autoencoder::from_dims(5, &[], 2, &[], 0).unwrap().decoder.clone();
        assert!(Autoencoder::new(enc, dec_wrong).is_err());
    }

    #[test]
    fn same_seed_same_parameters() {
        let a = Autoencoder::from_dims(8, &[6], 4, &[6], 9).unwrap();
        let b = Autoencoder::from_dims(8, &[6], 4, &[6], 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn flat_param_indexing_round_trips() {
        let mut ae = Autoencoder::from_dims(3, &[4], 2, &[4], 1).unwrap();
        let n = ae.param_count();
        assert_eq!(n, (3 * 4 + 4) + (4 * 2 + 2) + (2 * 4 + 4) + (4 * 3 + 3));
        for i in 0..n {
            let v = ae.param(i);
            ae.set_param(i, v + 1.0);
            assert_eq!(ae.param(i), v + 1.0);
            ae.set_param(i, v);
        }
    }

    #[test]
    fn snapshot_round_trips_exactly() {
        let ae = Autoencoder::from_dims(5, &[4], 2, &[4], 77).unwrap();
        let text = ae.to_snapshot();
        let back = Autoencoder::from_snapshot(&text, "test").unwrap();
        assert_eq!(ae, back, "snapshot must preserve every bit of every weight");
    }

    #[test]
    fn snapshot_rejects_truncation() {
        let ae = Autoencoder::from_dims(5, &[4], 2, &[4], 77).unwrap();
        let text = ae.to_snapshot();
        let truncated: String = text.lines().take(4).collect::<Vec<_>>().join("\n");
        assert!(Autoencoder::from_snapshot(&truncated, "test").is_err());
    }

    #[test]
    fn reconstruction_grads_reject_empty_batch() {
        let ae = Autoencoder::from_dims(3, &[], 2, &[], 0).unwrap();
        assert!(ae.reconstruction_grads(&[]).is_err());
    }
}
