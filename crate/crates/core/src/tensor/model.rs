use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::{Matrix, ParameterVector, TensorError};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// Examples-by-features matrix with one class label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    features: Matrix,
    labels: Vec<usize>,
}

impl Batch {
    pub fn new(features: Matrix, labels: Vec<usize>) -> Result<Self, TensorError> {
        if labels.is_empty() {
            return Err(TensorError::Config(
                "batch must contain at least one example".into(),
            ));
        }
        if features.rows() != labels.len() {
            return Err(TensorError::Shape(format!(
                "{} feature rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        Ok(Self { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn example(&self, j: usize) -> (&[f64], usize) {
        (self.features.row(j), self.labels[j])
    }

    /// Batch of the given row indices, in order. Indices may repeat.
    pub fn select(&self, indices: &[usize]) -> Result<Self, TensorError> {
        let cols = self.features.cols();
        let mut data = Vec::with_capacity(indices.len() * cols);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(TensorError::Shape(format!(
                    "row {i} out of range for batch of {}",
                    self.len()
                )));
            }
            data.extend_from_slice(self.features.row(i));
            labels.push(self.labels[i]);
        }
        Batch::new(Matrix::from_vec(indices.len(), cols, data)?, labels)
    }

    /// Single-example batch.
    pub fn single(&self, j: usize) -> Self {
        self.select(&[j]).expect("index in range")
    }
}

/// One gradient per example, all of the same dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct PerExampleGrads {
    grads: Vec<ParameterVector>,
}

impl PerExampleGrads {
    pub fn new(grads: Vec<ParameterVector>) -> Result<Self, TensorError> {
        let first = grads
            .first()
            .ok_or_else(|| TensorError::Config("no per-example gradients".into()))?
            .dim();
        if let Some(g) = grads.iter().find(|g| g.dim() != first) {
            return Err(TensorError::DimMismatch {
                expected: first,
                found: g.dim(),
            });
        }
        Ok(Self { grads })
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.grads[0].dim()
    }

    pub fn grads(&self) -> &[ParameterVector] {
        &self.grads
    }

    pub fn into_inner(self) -> Vec<ParameterVector> {
        self.grads
    }

    pub fn norms(&self) -> Vec<f64> {
        self.grads.iter().map(ParameterVector::norm).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Dense {
    weights: Matrix,
    bias: Vec<f64>,
}

/// Fully connected network: ReLU on hidden layers, identity on the output.
///
/// Weight matrix `k` has shape `layer_dims[k + 1] x layer_dims[k]`.
/// Flattening visits layers in order, each as row-major weights followed
/// by the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layer_dims: Vec<usize>,
    layers: Vec<Dense>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Checkpoint {
    format_version: u32,
    layer_dims: Vec<usize>,
    flat_params: Vec<f64>,
}

impl MlpModel {
    fn validate_dims(layer_dims: &[usize]) -> Result<(), TensorError> {
        if layer_dims.len() < 2 {
            return Err(TensorError::Config(
                "an MLP needs at least an input and an output width".into(),
            ));
        }
        if layer_dims.contains(&0) {
            return Err(TensorError::Config("layer widths must be positive".into()));
        }
        Ok(())
    }

    pub fn zeros(layer_dims: &[usize]) -> Result<Self, TensorError> {
        Self::validate_dims(layer_dims)?;
        let layers = layer_dims
            .windows(2)
            .map(|w| Dense {
                weights: Matrix::zeros(w[1], w[0]),
                bias: vec![0.0; w[1]],
            })
            .collect();
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            layers,
        })
    }

    /// Kaiming-uniform weights `U(-sqrt(6/fan_in), sqrt(6/fan_in))`, zero biases.
    pub fn init(layer_dims: &[usize], seed: u64) -> Result<Self, TensorError> {
        let mut model = Self::zeros(layer_dims)?;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        for layer in &mut model.layers {
            let bound = (6.0 / layer.weights.cols() as f64).sqrt();
            for w in layer.weights.data_mut() {
                *w = rng.random_range(-bound..bound);
            }
        }
        Ok(model)
    }

    pub fn from_layers(layers: Vec<(Matrix, Vec<f64>)>) -> Result<Self, TensorError> {
        let first = layers
            .first()
            .ok_or_else(|| TensorError::Config("no layers".into()))?;
        let mut dims = vec![first.0.cols()];
        for (w, b) in &layers {
            if w.cols() != *dims.last().expect("non-empty") || b.len() != w.rows() {
                return Err(TensorError::Shape("inconsistent layer shapes".into()));
            }
            dims.push(w.rows());
        }
        Self::validate_dims(&dims)?;
        Ok(Self {
            layer_dims: dims,
            layers: layers
                .into_iter()
                .map(|(weights, bias)| Dense { weights, bias })
                .collect(),
        })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn num_classes(&self) -> usize {
        *self.layer_dims.last().expect("validated")
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
    }

    pub fn flatten(&self) -> ParameterVector {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            out.extend_from_slice(layer.weights.data());
            out.extend_from_slice(&layer.bias);
        }
        ParameterVector::new(out).expect("model parameters are finite")
    }

    pub fn unflatten(layer_dims: &[usize], params: &ParameterVector) -> Result<Self, TensorError> {
        let mut model = Self::zeros(layer_dims)?;
        model.load_params(params)?;
        Ok(model)
    }

    fn load_params(&mut self, params: &ParameterVector) -> Result<(), TensorError> {
        if params.dim() != self.param_count() {
            return Err(TensorError::DimMismatch {
                expected: self.param_count(),
                found: params.dim(),
            });
        }
        let mut rest = params.as_slice();
        for layer in &mut self.layers {
            let n = layer.weights.data().len();
            layer.weights.data_mut().copy_from_slice(&rest[..n]);
            rest = &rest[n..];
            let m = layer.bias.len();
            layer.bias.copy_from_slice(&rest[..m]);
            rest = &rest[m..];
        }
        Ok(())
    }

    pub fn with_params(&self, params: &ParameterVector) -> Result<Self, TensorError> {
        let mut model = self.clone();
        model.load_params(params)?;
        Ok(model)
    }

    pub fn to_checkpoint_json(&self) -> String {
        let ck = Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            layer_dims: self.layer_dims.clone(),
            flat_params: self.flatten().into_vec(),
        };
        serde_json::to_string(&ck).expect("checkpoint serializes")
    }

    pub fn from_checkpoint_json(json: &str) -> Result<Self, TensorError> {
        let ck: Checkpoint =
            serde_json::from_str(json).map_err(|e| TensorError::Config(e.to_string()))?;
        if ck.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(TensorError::Config(format!(
                "unsupported checkpoint format_version {}",
                ck.format_version
            )));
        }
        Self::unflatten(&ck.layer_dims, &ParameterVector::new(ck.flat_params)?)
    }

    fn check_input(&self, batch: &Batch) -> Result<(), TensorError> {
        if batch.input_dim() != self.input_dim() {
            return Err(TensorError::Shape(format!(
                "batch has {} features, model expects {}",
                batch.input_dim(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Pre-activations of every layer for one input; the last entry is the logits.
    fn forward_one(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut act: Vec<f64> = x.to_vec();
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = layer.weights.matvec(&act);
            for (zi, bi) in z.iter_mut().zip(&layer.bias) {
                *zi += bi;
            }
            act = if k + 1 < self.layers.len() {
                z.iter().map(|v| v.max(0.0)).collect()
            } else {
                z.clone()
            };
            pre.push(z);
        }
        pre
    }

    pub fn forward(&self, batch: &Batch) -> Result<Matrix, TensorError> {
        self.check_input(batch)?;
        let out_dim = self.num_classes();
        let mut data = Vec::with_capacity(batch.len() * out_dim);
        for j in 0..batch.len() {
            let pre = self.forward_one(batch.example(j).0);
            data.extend_from_slice(pre.last().expect("at least one layer"));
        }
        Matrix::from_vec(batch.len(), out_dim, data)
    }

    fn check_label(&self, label: usize) -> Result<(), TensorError> {
        if label >= self.num_classes() {
            return Err(TensorError::Config(format!(
                "label {label} out of range for {} classes",
                self.num_classes()
            )));
        }
        Ok(())
    }

    /// Loss of one example plus `dL/dz` at every layer.
    fn backprop_one(&self, x: &[f64], label: usize) -> Result<(f64, Vec<f64>), TensorError> {
        self.check_label(label)?;
        let pre = self.forward_one(x);
        let logits = pre.last().expect("at least one layer");
        let (loss, mut delta) = softmax_cross_entropy(logits, label)?;

        let mut grad = vec![0.0; self.param_count()];
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut off = 0;
        for layer in &self.layers {
            offsets.push(off);
            off += layer.weights.data().len() + layer.bias.len();
        }

        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let input: Vec<f64> = if k == 0 {
                x.to_vec()
            } else {
                pre[k - 1].iter().map(|v| v.max(0.0)).collect()
            };
            let cols = layer.weights.cols();
            let base = offsets[k];
            for (r, d) in delta.iter().enumerate() {
                if *d != 0.0 {
                    let row = &mut grad[base + r * cols..base + (r + 1) * cols];
                    for (g, a) in row.iter_mut().zip(&input) {
                        *g = d * a;
                    }
                }
            }
            let bias_base = base + layer.weights.data().len();
            grad[bias_base..bias_base + delta.len()].copy_from_slice(&delta);
            if k > 0 {
                let back = layer.weights.transpose_matvec(&delta);
                delta = back
                    .into_iter()
                    .zip(&pre[k - 1])
                    .map(|(b, z)| if *z > 0.0 { b } else { 0.0 })
                    .collect();
            }
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(TensorError::NumericOverflow("non-finite gradient".into()));
        }
        Ok((loss, grad))
    }

    /// Mean softmax cross-entropy and the gradient of each example's own loss.
    pub fn loss_and_grad_per_example(
        &self,
        batch: &Batch,
    ) -> Result<(f64, PerExampleGrads), TensorError> {
        self.check_input(batch)?;
        let mut total = 0.0;
        let mut grads = Vec::with_capacity(batch.len());
        for j in 0..batch.len() {
            let (x, y) = batch.example(j);
            let (loss, g) = self.backprop_one(x, y)?;
            total += loss;
            grads.push(ParameterVector::new(g)?);
        }
        Ok((total / batch.len() as f64, PerExampleGrads::new(grads)?))
    }

    /// Gradient of the mean loss, computed layer-at-a-time over the whole
    /// batch rather than example by example.
    pub fn batch_gradient(&self, batch: &Batch) -> Result<(f64, ParameterVector), TensorError> {
        self.check_input(batch)?;
        let n = batch.len();
        let mut acts: Vec<Matrix> = vec![batch.features().clone()];
        let mut pres: Vec<Matrix> = Vec::new();
        for (k, layer) in self.layers.iter().enumerate() {
            let input = acts.last().expect("non-empty");
            let mut z = Matrix::zeros(n, layer.weights.rows());
            for j in 0..n {
                let zj = layer.weights.matvec(input.row(j));
                for (r, v) in zj.into_iter().enumerate() {
                    z.set(j, r, v + layer.bias[r]);
                }
            }
            if k + 1 < self.layers.len() {
                let mut a = z.clone();
                a.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
                acts.push(a);
            }
            pres.push(z);
        }
        let logits = pres.last().expect("non-empty");
        let mut delta = Matrix::zeros(n, self.num_classes());
        let mut loss = 0.0;
        for j in 0..n {
            let label = batch.labels()[j];
            self.check_label(label)?;
            let (l, d) = softmax_cross_entropy(logits.row(j), label)?;
            loss += l;
            for (c, v) in d.into_iter().enumerate() {
                delta.set(j, c, v / n as f64);
            }
        }
        let mut per_layer: Vec<Vec<f64>> = vec![Vec::new(); self.layers.len()];
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let input = &acts[k];
            let (rows, cols) = (layer.weights.rows(), layer.weights.cols());
            let mut gw = vec![0.0; rows * cols];
            let mut gb = vec![0.0; rows];
            for j in 0..n {
                for r in 0..rows {
                    let d = delta.get(j, r);
                    gb[r] += d;
                    for c in 0..cols {
                        gw[r * cols + c] += d * input.get(j, c);
                    }
                }
            }
            gw.extend_from_slice(&gb);
            per_layer[k] = gw;
            if k > 0 {
                let mut next = Matrix::zeros(n, cols);
                for j in 0..n {
                    let back = layer.weights.transpose_matvec(delta.row(j));
                    for (c, b) in back.into_iter().enumerate() {
                        if pres[k - 1].get(j, c) > 0.0 {
                            next.set(j, c, b);
                        }
                    }
                }
                delta = next;
            }
        }
        Ok((loss / n as f64, ParameterVector::new(per_layer.concat())?))
    }

    /// Mean loss and fraction of correctly classified examples.
    pub fn evaluate(&self, batch: &Batch) -> Result<(f64, f64), TensorError> {
        let logits = self.forward(batch)?;
        let mut loss = 0.0;
        let mut correct = 0usize;
        for j in 0..batch.len() {
            let label = batch.labels()[j];
            self.check_label(label)?;
            let row = logits.row(j);
            loss += softmax_cross_entropy(row, label)?.0;
            let argmax = row
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &v)| {
                    if v > best.1 {
                        (i, v)
                    } else {
                        best
                    }
                })
                .0;
            if argmax == label {
                correct += 1;
            }
        }
        Ok((
            loss / batch.len() as f64,
            correct as f64 / batch.len() as f64,
        ))
    }

    /// Central-difference gradient of the mean loss over `example`.
    pub fn finite_difference_gradient(
        &self,
        example: &Batch,
        step: f64,
    ) -> Result<ParameterVector, TensorError> {
        if !(step > 0.0) {
            return Err(TensorError::Config(
                "finite-difference step must be positive".into(),
            ));
        }
        self.check_input(example)?;
        let theta = self.flatten().into_vec();
        let mut probe = self.clone();
        let mut grad = Vec::with_capacity(theta.len());
        let mut shifted = theta.clone();
        for k in 0..theta.len() {
            shifted[k] = theta[k] + step;
            probe.load_params(&ParameterVector::new(shifted.clone())?)?;
            let plus = probe.evaluate(example)?.0;
            shifted[k] = theta[k] - step;
            probe.load_params(&ParameterVector::new(shifted.clone())?)?;
            let minus = probe.evaluate(example)?.0;
            shifted[k] = theta[k];
            grad.push((plus - minus) / (2.0 * step));
        }
        ParameterVector::new(grad)
    }

    /// `θ - η · aggregate / batch_total`, returning a new model.
    pub fn apply_update(
        &self,
        aggregate: &ParameterVector,
        learning_rate: f64,
        batch_total: usize,
    ) -> Result<Self, TensorError> {
        if batch_total == 0 {
            return Err(TensorError::Config("batch_total must be at least 1".into()));
        }
        if aggregate.dim() != self.param_count() {
            return Err(TensorError::DimMismatch {
                expected: self.param_count(),
                found: aggregate.dim(),
            });
        }
        let theta = self.flatten();
        let scale = learning_rate / batch_total as f64;
        let updated: Vec<f64> = theta
            .as_slice()
            .iter()
            .zip(aggregate.as_slice())
            .map(|(t, a)| t - scale * a)
            .collect();
        self.with_params(&ParameterVector::new(updated)?)
    }
}

/// Max-subtracted softmax cross-entropy: loss and `softmax(z) - onehot(label)`.
fn softmax_cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>), TensorError> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(TensorError::NumericOverflow("non-finite logits".into()));
    }
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = sum.ln() - (logits[label] - max);
    if !loss.is_finite() {
        return Err(TensorError::NumericOverflow("non-finite loss".into()));
    }
    let mut delta: Vec<f64> = exps.iter().map(|e| e / sum).collect();
    delta[label] -= 1.0;
    Ok((loss, delta))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch(rows: &[Vec<f64>], labels: &[usize]) -> Batch {
        Batch::new(Matrix::from_rows(rows).unwrap(), labels.to_vec()).unwrap()
    }

    #[test]
    fn identity_model_passes_input_through() {
        let model = MlpModel::from_layers(vec![(Matrix::identity(3), vec![0.0; 3])]).unwrap();
        let b = batch(&[vec![1.0, -2.0, 0.5]], &[0]);
        assert_eq!(model.forward(&b).unwrap().data(), &[1.0, -2.0, 0.5]);
    }

    #[test]
    fn zero_model_gives_zero_logits() {
        let model = MlpModel::zeros(&[3, 4, 2]).unwrap();
        let b = batch(&[vec![1.0, 2.0, 3.0], vec![-1.0, 0.0, 9.0]], &[0, 1]);
        assert!(model.forward(&b).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hand_computed_two_layer_net() {
        // h = relu(W1 x + b1), z = W2 h + b2
        // x = (1, 2); W1 = [[1, -1], [0.5, 0.5]], b1 = (0, -1)
        //   W1 x + b1 = (-1, 0.5) -> h = (0, 0.5)
        // W2 = [[2, 1], [-1, 3]], b2 = (0.1, -0.2)
        //   z = (0.5 + 0.1, 1.5 - 0.2) = (0.6, 1.3)
        let w1 = Matrix::from_rows(&[vec![1.0, -1.0], vec![0.5, 0.5]]).unwrap();
        let w2 = Matrix::from_rows(&[vec![2.0, 1.0], vec![-1.0, 3.0]]).unwrap();
        let model =
            MlpModel::from_layers(vec![(w1, vec![0.0, -1.0]), (w2, vec![0.1, -0.2])]).unwrap();
        let z = model.forward(&batch(&[vec![1.0, 2.0]], &[0])).unwrap();
        assert!((z.get(0, 0) - 0.6).abs() < 1e-15);
        assert!((z.get(0, 1) - 1.3).abs() < 1e-15);
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let model = MlpModel::zeros(&[3, 2]).unwrap();
        assert!(matches!(
            model.forward(&batch(&[vec![1.0, 2.0]], &[0])),
            Err(TensorError::Shape(_))
        ));
    }

    #[test]
    fn single_example_grad_equals_batch_grad() {
        let model = MlpModel::init(&[4, 3, 2], 9).unwrap();
        let b = batch(&[vec![0.3, -0.1, 0.8, 1.2]], &[1]);
        let (l1, per) = model.loss_and_grad_per_example(&b).unwrap();
        let (l2, g) = model.batch_gradient(&b).unwrap();
        assert!((l1 - l2).abs() < 1e-15);
        assert!(per.grads()[0].max_abs_diff(&g) < 1e-15);
    }

    #[test]
    fn bad_label_is_rejected() {
        let model = MlpModel::zeros(&[2, 2]).unwrap();
        assert!(model
            .loss_and_grad_per_example(&batch(&[vec![1.0, 1.0]], &[5]))
            .is_err());
    }

    #[test]
    fn overflowing_logits_are_reported() {
        let w = Matrix::from_rows(&[vec![f64::MAX], vec![-f64::MAX]]).unwrap();
        let model = MlpModel::from_layers(vec![(w, vec![0.0, 0.0])]).unwrap();
        let r = model.loss_and_grad_per_example(&batch(&[vec![10.0]], &[0]));
        assert!(matches!(r, Err(TensorError::NumericOverflow(_))));
    }

    #[test]
    fn softmax_is_stable_for_large_logits() {
        let (loss, d) = softmax_cross_entropy(&[1000.0, 0.0], 0).unwrap();
        assert!(loss >= 0.0 && loss < 1e-300_f64.max(1e-12));
        assert!(d.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn apply_update_arithmetic() {
        // 2-parameter model: 1x1 weight plus bias.
        let model =
            MlpModel::unflatten(&[1, 1], &ParameterVector::new(vec![1.0, 1.0]).unwrap()).unwrap();
        let agg = ParameterVector::new(vec![2.0, 4.0]).unwrap();
        let next = model.apply_update(&agg, 0.5, 2).unwrap();
        assert_eq!(next.flatten().as_slice(), &[0.5, 0.0]);
        assert_eq!(model.flatten().as_slice(), &[1.0, 1.0]);
        assert_eq!(model.apply_update(&agg, 0.0, 2).unwrap(), model);
        assert_eq!(
            model
                .apply_update(&ParameterVector::zeros(2), 0.7, 3)
                .unwrap(),
            model
        );
        assert!(model
            .apply_update(&ParameterVector::zeros(3), 0.1, 1)
            .is_err());
        assert!(model.apply_update(&agg, 0.1, 0).is_err());
    }

    #[test]
    fn finite_difference_on_linear_layer() {
        // For a single linear layer dL/db = softmax(z) - onehot(y), which the
        // central difference reproduces to O(h^2).
        let w = Matrix::from_rows(&[vec![0.2, -0.4], vec![0.1, 0.3]]).unwrap();
        let model = MlpModel::from_layers(vec![(w, vec![0.05, -0.05])]).unwrap();
        let b = batch(&[vec![1.5, -0.5]], &[1]);
        let fd = model.finite_difference_gradient(&b, 1e-5).unwrap();
        let (_, per) = model.loss_and_grad_per_example(&b).unwrap();
        assert!(fd.max_abs_diff(&per.grads()[0]) < 1e-9);
        assert!(model.finite_difference_gradient(&b, 0.0).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let model = MlpModel::init(&[5, 4, 3], 1).unwrap();
        let json = model.to_checkpoint_json();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["format_version"], 1);
        assert_eq!(v["layer_dims"], serde_json::json!([5, 4, 3]));
        assert_eq!(MlpModel::from_checkpoint_json(&json).unwrap(), model);
        let bad = json.replace("\"format_version\":1", "\"format_version\":7");
        assert!(MlpModel::from_checkpoint_json(&bad).is_err());
    }

    #[test]
    fn select_checks_bounds() {
        let b = batch(&[vec![1.0], vec![2.0]], &[0, 1]);
        assert_eq!(b.select(&[1, 1]).unwrap().labels(), &[1, 1]);
        assert!(b.select(&[2]).is_err());
        assert!(Batch::new(Matrix::zeros(0, 1), vec![]).is_err());
        assert!(Batch::new(Matrix::zeros(2, 1), vec![0]).is_err());
    }
}
