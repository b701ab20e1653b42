//! Feed-forward networks with hand-written reverse-mode gradients.
//!
//! Policy and value function are plain MLPs with tanh hidden activations
//! ([400, 300, 200] at full size). The policy mean passes through a final
//! tanh so actions land in [−1, 1] before torque scaling. Batches are
//! column-major: one sample per column.

pub mod adam;
pub mod checkpoint;
pub mod policy;

pub use adam::Adam;
pub use policy::GaussianPolicy;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: expected input of {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("checkpoint layout version {got} does not match binary ({expected})")]
    LayoutVersionMismatch { expected: u32, got: u32 },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Architecture description: sizes plus whether the output passes through a
/// final tanh.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpSpec {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub output: usize,
    pub output_tanh: bool,
}

impl MlpSpec {
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::new();
        let mut prev = self.input;
        for &h in &self.hidden {
            dims.push((h, prev));
            prev = h;
        }
        dims.push((self.output, prev));
        dims
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims().iter().map(|(o, i)| o * i + o).sum()
    }
}

#[derive(Debug, Clone)]
pub struct Mlp {
    pub spec: MlpSpec,
    /// Per layer, `out × in`.
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
}

/// Per-layer parameter gradients, same shapes as the parameters.
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
}

/// Activations recorded by [`Mlp::forward_batch_cached`], consumed by
/// [`Mlp::backward_batch`].
pub struct ForwardCache {
    /// Layer inputs: activations[0] is the network input, activations[l]
    /// the input to layer l.
    activations: Vec<DMatrix<f64>>,
    /// Output of the final layer (after the optional output tanh).
    output: DMatrix<f64>,
}

impl ForwardCache {
    pub fn output(&self) -> &DMatrix<f64> {
        &self.output
    }
}

fn orthogonal(rows: usize, cols: usize, gain: f64, rng: &mut impl Rng) -> DMatrix<f64> {
    let (r, c) = (rows.max(cols), rows.min(cols));
    let a = DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = a.qr();
    let mut q = qr.q();
    let rm = qr.r();
    // Fix signs so the decomposition is unique.
    for j in 0..c {
        if rm[(j, j)] < 0.0 {
            for i in 0..r {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    let m = if rows >= cols { q } else { q.transpose() };
    m * gain
}

impl Mlp {
    /// Orthogonal initialization: hidden layers with the given gain, final
    /// layer scaled by `final_gain` (small values keep initial outputs
    /// near zero).
    pub fn init(spec: MlpSpec, gain: f64, final_gain: f64, rng: &mut impl Rng) -> Self {
        let dims = spec.layer_dims();
        let last = dims.len() - 1;
        let mut weights = Vec::with_capacity(dims.len());
        let mut biases = Vec::with_capacity(dims.len());
        for (l, &(out, inp)) in dims.iter().enumerate() {
            let g = if l == last { final_gain } else { gain };
            weights.push(orthogonal(out, inp, g, rng));
            biases.push(DVector::zeros(out));
        }
        Self {
            spec,
            weights,
            biases,
        }
    }

    pub fn zeros(spec: MlpSpec) -> Self {
        let dims = spec.layer_dims();
        Self {
            weights: dims.iter().map(|&(o, i)| DMatrix::zeros(o, i)).collect(),
            biases: dims.iter().map(|&(o, _)| DVector::zeros(o)).collect(),
            spec,
        }
    }

    pub fn forward(&self, input: &[f64]) -> Result<DVector<f64>, NnError> {
        if input.len() != self.spec.input {
            return Err(NnError::ShapeMismatch {
                expected: self.spec.input,
                got: input.len(),
            });
        }
        let x = DMatrix::from_column_slice(input.len(), 1, input);
        let out = self.forward_batch(&x)?;
        Ok(DVector::from_column_slice(out.column(0).as_slice()))
    }

    /// Forward pass over a batch (inputs as columns).
    pub fn forward_batch(&self, input: &DMatrix<f64>) -> Result<DMatrix<f64>, NnError> {
        Ok(self.forward_batch_cached(input)?.output)
    }

    pub fn forward_batch_cached(&self, input: &DMatrix<f64>) -> Result<ForwardCache, NnError> {
        if input.nrows() != self.spec.input {
            return Err(NnError::ShapeMismatch {
                expected: self.spec.input,
                got: input.nrows(),
            });
        }
        let last = self.weights.len() - 1;
        let mut activations = Vec::with_capacity(self.weights.len());
        let mut a = input.clone();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            activations.push(a.clone());
            let mut z = w * &a;
            for mut col in z.column_iter_mut() {
                col += b;
            }
            let apply_tanh = l < last || self.spec.output_tanh;
            if apply_tanh {
                z.apply(|v| *v = v.tanh());
            }
            a = z;
        }
        Ok(ForwardCache {
            activations,
            output: a,
        })
    }

    /// Backpropagates `d_output` (gradient of the scalar loss w.r.t. the
    /// network output, same shape as the output batch) and returns the
    /// parameter gradients.
    pub fn backward_batch(&self, cache: &ForwardCache, d_output: &DMatrix<f64>) -> MlpGrads {
        let last = self.weights.len() - 1;
        let mut grads = MlpGrads {
            weights: self
                .weights
                .iter()
                .map(|w| DMatrix::zeros(w.nrows(), w.ncols()))
                .collect(),
            biases: self.biases.iter().map(|b| DVector::zeros(b.len())).collect(),
        };
        let mut delta = d_output.clone();
        for l in (0..self.weights.len()).rev() {
            // Output of layer l: cache.activations[l+1] or final output.
            let y = if l == last {
                &cache.output
            } else {
                &cache.activations[l + 1]
            };
            let through_tanh = l < last || self.spec.output_tanh;
            if through_tanh {
                // dZ = dY ⊙ (1 − y²)
                delta.zip_apply(y, |d, yv| *d *= 1.0 - yv * yv);
            }
            let x = &cache.activations[l];
            grads.weights[l] = &delta * x.transpose();
            let mut db = DVector::zeros(self.biases[l].len());
            for col in delta.column_iter() {
                db += col;
            }
            grads.biases[l] = db;
            if l > 0 {
                delta = self.weights[l].transpose() * delta;
            }
        }
        grads
    }

    /// Flattens parameters in layer order, weights (column-major) before
    /// biases.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.spec.param_count());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b.as_slice());
        }
        out
    }

    pub fn unflatten_into(&mut self, params: &[f64]) -> Result<(), NnError> {
        if params.len() != self.spec.param_count() {
            return Err(NnError::ShapeMismatch {
                expected: self.spec.param_count(),
                got: params.len(),
            });
        }
        let mut at = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            let wn = w.nrows() * w.ncols();
            w.as_mut_slice().copy_from_slice(&params[at..at + wn]);
            at += wn;
            let bn = b.len();
            b.as_mut_slice().copy_from_slice(&params[at..at + bn]);
            at += bn;
        }
        Ok(())
    }
}

impl MlpGrads {
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b.as_slice());
        }
        out
    }

    pub fn scale(&mut self, s: f64) {
        for w in &mut self.weights {
            *w *= s;
        }
        for b in &mut self.biases {
            *b *= s;
        }
    }

    pub fn add(&mut self, other: &MlpGrads) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            *a += b;
        }
    }

    pub fn global_norm(&self) -> f64 {
        let mut s = 0.0;
        for w in &self.weights {
            s += w.iter().map(|v| v * v).sum::<f64>();
        }
        for b in &self.biases {
            s += b.iter().map(|v| v * v).sum::<f64>();
        }
        s.sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn micro_spec(output_tanh: bool) -> MlpSpec {
        MlpSpec {
            input: 3,
            hidden: vec![4, 5],
            output: 2,
            output_tanh,
        }
    }

    #[test]
    fn zero_network_outputs_zero() {
        let mlp = Mlp::zeros(micro_spec(true));
        let y = mlp.forward(&[0.3, -0.7, 1.2]).unwrap();
        assert!(y.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn forward_matches_hand_computation_on_tiny_net() {
        // 2-2-1 net with known weights and tanh everywhere.
        let spec = MlpSpec {
            input: 2,
            hidden: vec![2],
            output: 1,
            output_tanh: true,
        };
        let mut mlp = Mlp::zeros(spec);
        mlp.weights[0] = DMatrix::from_row_slice(2, 2, &[0.5, -0.25, 1.0, 0.75]);
        mlp.biases[0] = DVector::from_column_slice(&[0.1, -0.2]);
        mlp.weights[1] = DMatrix::from_row_slice(1, 2, &[2.0, -1.5]);
        mlp.biases[1] = DVector::from_column_slice(&[0.05]);
        let x = [0.3, -0.6];
        let h0 = (0.5 * 0.3 + (-0.25) * (-0.6) + 0.1f64).tanh();
        let h1 = (1.0 * 0.3 + 0.75 * (-0.6) - 0.2f64).tanh();
        let expected = (2.0 * h0 - 1.5 * h1 + 0.05f64).tanh();
        let y = mlp.forward(&x).unwrap();
        assert!((y[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn output_stays_in_unit_box_with_output_tanh() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mlp = Mlp::init(micro_spec(true), 5.0 / 3.0, 1.0, &mut rng);
        for _ in 0..100 {
            use rand::Rng;
            let x: Vec<f64> = (0..3).map(|_| rng.gen::<f64>() * 20.0 - 10.0).collect();
            let y = mlp.forward(&x).unwrap();
            assert!(y.iter().all(|v| v.abs() <= 1.0));
        }
    }

    #[test]
    fn forward_is_pure() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mlp = Mlp::init(micro_spec(false), 1.0, 0.01, &mut rng);
        let x = [0.1, 0.2, 0.3];
        let a = mlp.forward(&x).unwrap();
        let b = mlp.forward(&x).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mlp = Mlp::zeros(micro_spec(false));
        assert!(matches!(
            mlp.forward(&[1.0, 2.0]),
            Err(NnError::ShapeMismatch { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn orthogonal_init_has_orthonormal_rows_or_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = orthogonal(6, 4, 1.0, &mut rng);
        let gram = m.transpose() * &m;
        for i in 0..4 {
            for j in 0..4 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((gram[(i, j)] - expect).abs() < 1e-10);
            }
        }
    }

    /// Central-difference gradient check over every parameter of micro
    /// nets, for a squared loss against fixed targets.
    #[test]
    fn analytic_gradients_match_finite_differences() {
        for output_tanh in [false, true] {
            let mut rng = ChaCha8Rng::seed_from_u64(13);
            let mut mlp = Mlp::init(micro_spec(output_tanh), 1.0, 0.5, &mut rng);
            use rand::Rng;
            let batch = 4;
            let x = DMatrix::from_fn(3, batch, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
            let target = DMatrix::from_fn(2, batch, |_, _| rng.gen::<f64>() * 2.0 - 1.0);

            let loss = |mlp: &Mlp| -> f64 {
                let y = mlp.forward_batch(&x).unwrap();
                let d = &y - &target;
                d.iter().map(|v| v * v).sum::<f64>() / (2.0 * batch as f64)
            };

            let cache = mlp.forward_batch_cached(&x).unwrap();
            let d_out = (cache.output() - &target) / batch as f64;
            let grads = mlp.backward_batch(&cache, &d_out);
            let flat_grads = grads.flatten();

            let params = mlp.flatten();
            let h = 1e-5;
            let mut max_rel: f64 = 0.0;
            for p in 0..params.len() {
                let mut plus = params.clone();
                plus[p] += h;
                mlp.unflatten_into(&plus).unwrap();
                let lp = loss(&mlp);
                let mut minus = params.clone();
                minus[p] -= h;
                mlp.unflatten_into(&minus).unwrap();
                let lm = loss(&mlp);
                let numeric = (lp - lm) / (2.0 * h);
                let denom = numeric.abs().max(flat_grads[p].abs()).max(1e-8);
                max_rel = max_rel.max((numeric - flat_grads[p]).abs() / denom);
            }
            mlp.unflatten_into(&params).unwrap();
            assert!(
                max_rel < 1e-4,
                "output_tanh={output_tanh}: max relative error {max_rel}"
            );
        }
    }

    #[test]
    fn linear_single_layer_gradient_matches_closed_form() {
        // y = Wx + b, loss = ||y - t||²/2: dW = (y-t)xᵀ, db = (y-t).
        let spec = MlpSpec {
            input: 3,
            hidden: vec![],
            output: 2,
            output_tanh: false,
        };
        let mut mlp = Mlp::zeros(spec);
        mlp.weights[0] = DMatrix::from_row_slice(2, 3, &[0.2, -0.4, 0.6, 1.0, 0.3, -0.9]);
        mlp.biases[0] = DVector::from_column_slice(&[0.1, -0.1]);
        let x = DMatrix::from_column_slice(3, 1, &[0.5, -1.0, 2.0]);
        let t = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let cache = mlp.forward_batch_cached(&x).unwrap();
        let resid = cache.output() - &t;
        let grads = mlp.backward_batch(&cache, &resid);
        let expected_dw = &resid * x.transpose();
        assert!((&grads.weights[0] - expected_dw).norm() < 1e-14);
        assert!((&grads.biases[0] - DVector::from_column_slice(&[resid[(0, 0)], resid[(1, 0)]])).norm() < 1e-14);
    }

    #[test]
    fn constant_loss_gives_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mlp = Mlp::init(micro_spec(false), 1.0, 1.0, &mut rng);
        let x = DMatrix::from_column_slice(3, 2, &[0.1, 0.2, 0.3, -0.1, -0.2, -0.3]);
        let cache = mlp.forward_batch_cached(&x).unwrap();
        let d_out = DMatrix::zeros(2, 2);
        let grads = mlp.backward_batch(&cache, &d_out);
        assert_eq!(grads.global_norm(), 0.0);
    }

    #[test]
    fn flatten_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mlp = Mlp::init(micro_spec(true), 1.0, 0.01, &mut rng);
        let flat = mlp.flatten();
        let mut other = Mlp::zeros(micro_spec(true));
        other.unflatten_into(&flat).unwrap();
        assert_eq!(mlp.flatten(), other.flatten());
    }
}
