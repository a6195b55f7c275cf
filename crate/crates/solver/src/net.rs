//! Small fully connected networks with hand-rolled backprop.
//!
//! Rectifier hidden layers; linear output for critics, tanh for actors.
//! Gradients are exact (checked against central finite differences in the
//! acceptance suite), and updates are plain SGD with global-norm clipping.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("bad checkpoint file: {0}")]
    BadCheckpoint(String),
    #[error("input width {got} does not match network width {want}")]
    WidthMismatch { got: usize, want: usize },
    #[error("shape mismatch between networks")]
    ShapeMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputActivation {
    Linear,
    Tanh,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// [out, in]
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Layer>,
    pub output: OutputActivation,
    /// Seed recorded at initialization; persisted in checkpoints.
    pub init_seed: u64,
}

pub struct ForwardCache {
    /// Layer inputs: activations[0] is the network input.
    activations: Vec<Array2<f64>>,
    /// Pre-activation outputs of every layer.
    pre: Vec<Array2<f64>>,
}

#[derive(Debug, Clone)]
pub struct LayerGrads {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Mlp {
    /// Xavier-uniform initialization over the given layer widths.
    pub fn new(dims: &[usize], output: OutputActivation, seed: u64, rng: &mut ChaCha8Rng) -> Mlp {
        assert!(dims.len() >= 2, "need at least input and output widths");
        let layers = dims
            .windows(2)
            .map(|w| {
                let (n_in, n_out) = (w[0], w[1]);
                let limit = (6.0 / (n_in + n_out) as f64).sqrt();
                let weights =
                    Array2::from_shape_fn((n_out, n_in), |_| rng.gen_range(-limit..limit));
                Layer {
                    w: weights,
                    b: Array1::zeros(n_out),
                }
            })
            .collect();
        Mlp {
            layers,
            output,
            init_seed: seed,
        }
    }

    pub fn zeroed(dims: &[usize], output: OutputActivation) -> Mlp {
        let layers = dims
            .windows(2)
            .map(|w| Layer {
                w: Array2::zeros((w[1], w[0])),
                b: Array1::zeros(w[1]),
            })
            .collect();
        Mlp {
            layers,
            output,
            init_seed: 0,
        }
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].w.ncols()
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().unwrap().w.nrows()
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.input_width()];
        d.extend(self.layers.iter().map(|l| l.w.nrows()));
        d
    }

    fn check_width(&self, x: &Array2<f64>) -> Result<(), NetError> {
        if x.ncols() != self.input_width() {
            return Err(NetError::WidthMismatch {
                got: x.ncols(),
                want: self.input_width(),
            });
        }
        Ok(())
    }

    /// Forward pass over a batch of rows.
    pub fn forward(&self, x: &Array2<f64>) -> Result<Array2<f64>, NetError> {
        Ok(self.forward_cached(x)?.1)
    }

    /// Forward pass for a single input.
    pub fn forward_one(&self, x: &[f64]) -> Result<Vec<f64>, NetError> {
        let arr = Array2::from_shape_vec((1, x.len()), x.to_vec())
            .map_err(|e| NetError::BadCheckpoint(e.to_string()))?;
        Ok(self.forward(&arr)?.row(0).to_vec())
    }

    /// Scalar output convenience for critics.
    pub fn value(&self, x: &[f64]) -> Result<f64, NetError> {
        Ok(self.forward_one(x)?[0])
    }

    pub fn forward_cached(&self, x: &Array2<f64>) -> Result<(ForwardCache, Array2<f64>), NetError> {
        self.check_width(x)?;
        let mut activations = vec![x.clone()];
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = cur.dot(&layer.w.t());
            z += &layer.b;
            pre.push(z.clone());
            let last = k + 1 == self.layers.len();
            cur = if last {
                match self.output {
                    OutputActivation::Linear => z,
                    OutputActivation::Tanh => z.mapv(f64::tanh),
                }
            } else {
                z.mapv(|v| v.max(0.0))
            };
            activations.push(cur.clone());
        }
        let out = activations.last().unwrap().clone();
        Ok((ForwardCache { activations, pre }, out))
    }

    /// Backpropagate `grad_out` (dL/dy) through the cached pass. Returns the
    /// parameter gradients and dL/dx.
    pub fn backward(&self, cache: &ForwardCache, grad_out: &Array2<f64>) -> (Vec<LayerGrads>, Array2<f64>) {
        let n_layers = self.layers.len();
        let mut grads: Vec<LayerGrads> = Vec::with_capacity(n_layers);
        let mut dz = match self.output {
            OutputActivation::Linear => grad_out.clone(),
            OutputActivation::Tanh => {
                let y = cache.activations.last().unwrap();
                grad_out * &y.mapv(|v| 1.0 - v * v)
            }
        };
        for k in (0..n_layers).rev() {
            let input = &cache.activations[k];
            let dw = dz.t().dot(input);
            let db = dz.sum_axis(Axis(0));
            let dx = dz.dot(&self.layers[k].w);
            grads.push(LayerGrads { w: dw, b: db });
            if k > 0 {
                let mask = cache.pre[k - 1].mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
                dz = dx * &mask;
            } else {
                grads.reverse();
                return (grads, dx);
            }
        }
        unreachable!("network has at least one layer")
    }

    /// One SGD step with global-norm gradient clipping.
    pub fn apply_grads(&mut self, grads: &[LayerGrads], lr: f64, max_grad_norm: f64) {
        let norm_sq: f64 = grads
            .iter()
            .map(|g| g.w.iter().map(|v| v * v).sum::<f64>() + g.b.iter().map(|v| v * v).sum::<f64>())
            .sum();
        let norm = norm_sq.sqrt();
        let scale = if max_grad_norm > 0.0 && norm > max_grad_norm {
            max_grad_norm / norm
        } else {
            1.0
        };
        for (layer, g) in self.layers.iter_mut().zip(grads) {
            layer.w.scaled_add(-lr * scale, &g.w);
            layer.b.scaled_add(-lr * scale, &g.b);
        }
    }

    /// target <- (1 - tau) * target + tau * online, elementwise.
    pub fn soft_update_from(&mut self, online: &Mlp, tau: f64) -> Result<(), NetError> {
        if self.dims() != online.dims() {
            return Err(NetError::ShapeMismatch);
        }
        for (t, o) in self.layers.iter_mut().zip(&online.layers) {
            t.w.zip_mut_with(&o.w, |a, b| *a = (1.0 - tau) * *a + tau * *b);
            t.b.zip_mut_with(&o.b, |a, b| *a = (1.0 - tau) * *a + tau * *b);
        }
        Ok(())
    }

    pub fn param_l2_distance(&self, other: &Mlp) -> f64 {
        self.layers
            .iter()
            .zip(&other.layers)
            .map(|(a, b)| {
                let dw: f64 = (&a.w - &b.w).iter().map(|v| v * v).sum();
                let db: f64 = (&a.b - &b.b).iter().map(|v| v * v).sum();
                dw + db
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Versioned checkpoint: header with layer sizes and the init seed, then
    /// parameters as little-endian 64-bit floats.
    pub fn save(&self, path: &Path) -> Result<(), NetError> {
        let mut buf: Vec<u8> = Vec::new();
        buf.extend_from_slice(b"BSC1");
        buf.extend_from_slice(&1u32.to_le_bytes());
        buf.push(match self.output {
            OutputActivation::Linear => 0,
            OutputActivation::Tanh => 1,
        });
        let dims = self.dims();
        buf.extend_from_slice(&(dims.len() as u32).to_le_bytes());
        for d in &dims {
            buf.extend_from_slice(&(*d as u32).to_le_bytes());
        }
        buf.extend_from_slice(&self.init_seed.to_le_bytes());
        for layer in &self.layers {
            for v in layer.w.iter() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            for v in layer.b.iter() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let mut f = fs::File::create(path)?;
        f.write_all(&buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Mlp, NetError> {
        let mut bytes = Vec::new();
        fs::File::open(path)?.read_to_end(&mut bytes)?;
        let mut cur = 0usize;
        let take = |cur: &mut usize, n: usize| -> Result<&[u8], NetError> {
            if *cur + n > bytes.len() {
                return Err(NetError::BadCheckpoint("truncated".into()));
            }
            let s = &bytes[*cur..*cur + n];
            *cur += n;
            Ok(s)
        };
        if take(&mut cur, 4)? != b"BSC1" {
            return Err(NetError::BadCheckpoint("bad magic".into()));
        }
        let version = u32::from_le_bytes(take(&mut cur, 4)?.try_into().unwrap());
        if version != 1 {
            return Err(NetError::BadCheckpoint(format!("unsupported version {version}")));
        }
        let output = match take(&mut cur, 1)?[0] {
            0 => OutputActivation::Linear,
            1 => OutputActivation::Tanh,
            o => return Err(NetError::BadCheckpoint(format!("unknown activation {o}"))),
        };
        let n_dims = u32::from_le_bytes(take(&mut cur, 4)?.try_into().unwrap()) as usize;
        if n_dims < 2 || n_dims > 64 {
            return Err(NetError::BadCheckpoint(format!("implausible layer count {n_dims}")));
        }
        let mut dims = Vec::with_capacity(n_dims);
        for _ in 0..n_dims {
            dims.push(u32::from_le_bytes(take(&mut cur, 4)?.try_into().unwrap()) as usize);
        }
        let init_seed = u64::from_le_bytes(take(&mut cur, 8)?.try_into().unwrap());
        let read_f64 = |cur: &mut usize| -> Result<f64, NetError> {
            Ok(f64::from_le_bytes(take(cur, 8)?.try_into().unwrap()))
        };
        let mut layers = Vec::with_capacity(n_dims - 1);
        for w in dims.windows(2) {
            let (n_in, n_out) = (w[0], w[1]);
            let mut weights = Array2::zeros((n_out, n_in));
            for i in 0..n_out {
                for j in 0..n_in {
                    weights[(i, j)] = read_f64(&mut cur)?;
                }
            }
            let mut b = Array1::zeros(n_out);
            for i in 0..n_out {
                b[i] = read_f64(&mut cur)?;
            }
            layers.push(Layer { w: weights, b });
        }
        if cur != bytes.len() {
            return Err(NetError::BadCheckpoint("trailing bytes".into()));
        }
        Ok(Mlp {
            layers,
            output,
            init_seed,
        })
    }
}

/// Mean-squared-error loss and its gradient wrt predictions.
pub fn mse_loss(pred: &Array2<f64>, target: &Array2<f64>) -> (f64, Array2<f64>) {
    let diff = pred - target;
    let n = pred.len() as f64;
    let loss = diff.iter().map(|v| v * v).sum::<f64>() / n;
    let grad = diff.mapv(|v| 2.0 * v / n);
    (loss, grad)
}
