//! Multilayer perceptron with rectified hidden layers.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor_io::{self, DenseMatrix, LogitMatrix};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    pub activation: String,
}

impl Architecture {
    pub fn new(input_dim: usize, hidden: Vec<usize>, output_dim: usize) -> Self {
        Architecture { input_dim, hidden, output_dim, activation: "relu".into() }
    }

    fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim];
        w.extend(&self.hidden);
        w.push(self.output_dim);
        w
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs x inputs`.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub arch: Architecture,
    pub layers: Vec<Layer>,
}

/// Gradient buffers laid out like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weight: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(model: &ModelParams) -> Self {
        Gradients {
            weight: model.layers.iter().map(|l| vec![0.0; l.weight.len()]).collect(),
            bias: model.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in self.weight.iter_mut().chain(self.bias.iter_mut()) {
            v.iter_mut().for_each(|x| *x *= s);
        }
    }
}

impl ModelParams {
    /// Uniform fan-in initialization `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn init(arch: Architecture, seed: u64) -> Result<Self> {
        if arch.input_dim == 0 || arch.output_dim < 2 || arch.hidden.contains(&0) {
            return Err(Error::Validation(format!("invalid architecture {arch:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let widths = arch.widths();
        let layers = widths
            .windows(2)
            .map(|w| {
                let (inputs, outputs) = (w[0], w[1]);
                let bound = 1.0 / (inputs as f64).sqrt();
                let weight = (0..inputs * outputs).map(|_| rng.gen_range(-bound..bound)).collect();
                let bias = (0..outputs).map(|_| rng.gen_range(-bound..bound)).collect();
                Layer { inputs, outputs, weight, bias }
            })
            .collect();
        Ok(ModelParams { arch, layers })
    }

    pub fn n_classes(&self) -> usize {
        self.arch.output_dim
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    /// Returns the activations of every layer; the last entry is the logits.
    fn forward_trace(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = vec![x.to_vec()];
        let last = self.layers.len() - 1;
        for (li, l) in self.layers.iter().enumerate() {
            let input = acts.last().unwrap();
            let mut out = l.bias.clone();
            for (o, out_v) in out.iter_mut().enumerate() {
                let row = &l.weight[o * l.inputs..(o + 1) * l.inputs];
                *out_v += row.iter().zip(input).map(|(w, v)| w * v).sum::<f64>();
            }
            if li != last {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(out);
        }
        acts
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.forward_trace(x).pop().unwrap()
    }

    /// Forward pass, then backpropagates `dloss(logits)` into `grads`.
    pub fn backward<F>(&self, x: &[f64], grads: &mut Gradients, dloss: F) -> Result<()>
    where
        F: FnOnce(&[f64]) -> Result<Vec<f64>>,
    {
        let acts = self.forward_trace(x);
        let mut delta = dloss(acts.last().unwrap())?;
        for li in (0..self.layers.len()).rev() {
            let l = &self.layers[li];
            let input = &acts[li];
            let gw = &mut grads.weight[li];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                grads.bias[li][o] += d;
                let row = &mut gw[o * l.inputs..(o + 1) * l.inputs];
                row.iter_mut().zip(input).for_each(|(g, v)| *g += d * v);
            }
            if li > 0 {
                let mut prev = vec![0.0; l.inputs];
                for (o, &d) in delta.iter().enumerate() {
                    let row = &l.weight[o * l.inputs..(o + 1) * l.inputs];
                    prev.iter_mut().zip(row).for_each(|(p, w)| *p += d * w);
                }
                // ReLU derivative from the stored post-activation.
                for (p, &a) in prev.iter_mut().zip(input) {
                    if a <= 0.0 {
                        *p = 0.0;
                    }
                }
                delta = prev;
            }
        }
        Ok(())
    }

    /// Logits for every row of `features`, keeping labels and split tag.
    pub fn logits(&self, features: &LogitMatrix) -> Result<LogitMatrix> {
        if features.cols() != self.arch.input_dim {
            return Err(Error::Validation(format!(
                "features have {} columns, model expects {}",
                features.cols(),
                self.arch.input_dim
            )));
        }
        let c = self.n_classes();
        let mut data = Vec::with_capacity(features.rows() * c);
        for i in 0..features.rows() {
            let start = data.len();
            data.extend(self.forward(&features.row_f64(i)).into_iter().map(|v| v as f32));
            if data[start..].iter().any(|v| !v.is_finite()) {
                return Err(Error::LogitOverflow { row: i });
            }
        }
        LogitMatrix::new(
            features.rows(),
            c,
            data,
            features.labels().map(<[u32]>::to_vec),
            features.split(),
        )
    }

    /// Writes `arch.json` plus `layer{k}.weight.bin` / `layer{k}.bias.bin`
    /// into `dir`. Returns the file names with their checksums.
    pub fn save(&self, dir: &Path) -> Result<Vec<(String, String)>> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut out = vec![("arch.json".to_string(), tensor_io::write_json(&self.arch, &dir.join("arch.json"))?)];
        for (k, l) in self.layers.iter().enumerate() {
            let w = DenseMatrix::new(l.outputs, l.inputs, l.weight.clone())?;
            let b = DenseMatrix::new(1, l.outputs, l.bias.clone())?;
            let wn = format!("layer{k}.weight.bin");
            let bn = format!("layer{k}.bias.bin");
            out.push((wn.clone(), tensor_io::write_dense(&w, &dir.join(&wn))?));
            out.push((bn.clone(), tensor_io::write_dense(&b, &dir.join(&bn))?));
        }
        Ok(out)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let arch: Architecture = tensor_io::read_json(&dir.join("arch.json"))?;
        let widths = arch.widths();
        let mut layers = Vec::new();
        for (k, w) in widths.windows(2).enumerate() {
            let weight = tensor_io::read_dense(&dir.join(format!("layer{k}.weight.bin")))?;
            let bias = tensor_io::read_dense(&dir.join(format!("layer{k}.bias.bin")))?;
            if weight.rows != w[1] || weight.cols != w[0] || bias.rows != 1 || bias.cols != w[1] {
                return Err(Error::Format(format!("layer {k} shape does not match architecture")));
            }
            layers.push(Layer { inputs: w[0], outputs: w[1], weight: weight.data, bias: bias.data });
        }
        Ok(ModelParams { arch, layers })
    }
}
