//! Multi-layer perceptrons over a fixed dataset.
//!
//! Value and gradient are computed by reverse accumulation over the full
//! dataset (or a minibatch of it); the Hessian falls back to central finite
//! differences of the gradient, which is affordable at the desk scales these
//! experiments run at.

use crate::error::CoreError;
use crate::linalg::{Matrix, SymMatrix, Vector};
use crate::rng::RngStream;

use super::{fd_hessian_of_grad, Dataset, HessianKind, LossModel, PerExampleGrad};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Sigmoid,
}

impl Activation {
    fn apply(&self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Sigmoid => sigmoid(z),
        }
    }

    /// Derivative expressed through the activation output `a`.
    fn derivative_from_output(&self, a: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Sigmoid => a * (1.0 - a),
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Loss head applied to the (linear) network output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossHead {
    /// Multi-class softmax cross-entropy, averaged over samples.
    CrossEntropy,
    /// Binary logistic loss averaged over samples plus `(lambda/2) ||theta||^2`.
    LogisticL2 { lambda: f64 },
    /// Mean squared error, averaged over samples.
    Mse,
}

/// Layer widths and head for [`mlp_model`]. The activation applies to hidden
/// layers; the output layer is always linear (the head supplies the link).
#[derive(Debug, Clone)]
pub struct MlpArch {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub output: usize,
    pub activation: Activation,
    pub head: LossHead,
}

impl MlpArch {
    fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut widths = vec![self.input];
        widths.extend_from_slice(&self.hidden);
        widths.push(self.output);
        widths.windows(2).map(|w| (w[1], w[0])).collect()
    }

    /// Total parameter count: weights plus biases for every layer.
    pub fn dim(&self) -> usize {
        self.layer_shapes()
            .iter()
            .map(|&(out, inp)| out * inp + out)
            .sum()
    }
}

pub struct MlpModel {
    arch: MlpArch,
    dataset: Dataset,
    shapes: Vec<(usize, usize)>,
    dim: usize,
}

/// Builds an MLP loss over `dataset`, validating the arch against it.
pub fn mlp_model(arch: MlpArch, dataset: Dataset) -> Result<MlpModel, CoreError> {
    if dataset.num_features() != arch.input {
        return Err(CoreError::invalid(format!(
            "arch expects {} input features, dataset has {}",
            arch.input,
            dataset.num_features()
        )));
    }
    match arch.head {
        LossHead::CrossEntropy => {
            let classes = dataset.num_classes().ok_or_else(|| {
                CoreError::invalid("cross-entropy head requires integer class labels")
            })?;
            if classes > arch.output {
                return Err(CoreError::invalid(format!(
                    "dataset has {} classes but arch outputs {}",
                    classes, arch.output
                )));
            }
        }
        LossHead::LogisticL2 { .. } => {
            if arch.output != 1 {
                return Err(CoreError::invalid("logistic head requires a single output"));
            }
            if dataset.labels.iter().any(|&l| l != 0.0 && l != 1.0) {
                return Err(CoreError::invalid("logistic head requires 0/1 labels"));
            }
        }
        LossHead::Mse => {
            if arch.output != 1 {
                return Err(CoreError::invalid("MSE head expects a single output"));
            }
        }
    }
    let shapes = arch.layer_shapes();
    let dim = arch.dim();
    Ok(MlpModel {
        arch,
        dataset,
        shapes,
        dim,
    })
}

struct Layers {
    weights: Vec<Matrix>,
    biases: Vec<Vector>,
}

impl MlpModel {
    pub fn arch(&self) -> &MlpArch {
        &self.arch
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    fn unpack(&self, x: &Vector) -> Layers {
        let mut weights = Vec::with_capacity(self.shapes.len());
        let mut biases = Vec::with_capacity(self.shapes.len());
        let mut offset = 0;
        for &(out, inp) in &self.shapes {
            weights.push(Matrix::from_column_slice(
                out,
                inp,
                &x.as_slice()[offset..offset + out * inp],
            ));
            offset += out * inp;
            biases.push(Vector::from_column_slice(
                &x.as_slice()[offset..offset + out],
            ));
            offset += out;
        }
        Layers { weights, biases }
    }

    /// Forward pass on `features` (rows are samples); returns per-layer
    /// activations, starting with the input.
    fn forward(&self, layers: &Layers, features: &Matrix) -> Vec<Matrix> {
        let mut acts = Vec::with_capacity(self.shapes.len() + 1);
        acts.push(features.clone());
        let last = self.shapes.len() - 1;
        for (l, (w, b)) in layers.weights.iter().zip(&layers.biases).enumerate() {
            let mut z = &acts[l] * w.transpose();
            for mut row in z.row_iter_mut() {
                row += b.transpose();
            }
            if l < last {
                z.apply(|v| *v = self.arch.activation.apply(*v));
            }
            acts.push(z);
        }
        acts
    }

    /// Network output (linear head) for external callers such as the
    /// teacher-student data generator.
    pub fn predict(&self, x: &Vector, features: &Matrix) -> Matrix {
        let layers = self.unpack(x);
        self.forward(&layers, features)
            .pop()
            .expect("forward produces at least the input")
    }

    fn subset(&self, indices: &[usize]) -> (Matrix, Vec<f64>) {
        let p = self.dataset.num_features();
        let mut features = Matrix::zeros(indices.len(), p);
        let mut labels = Vec::with_capacity(indices.len());
        for (row, &i) in indices.iter().enumerate() {
            features.set_row(row, &self.dataset.features.row(i));
            labels.push(self.dataset.labels[i]);
        }
        (features, labels)
    }

    fn loss_on(&self, x: &Vector, features: &Matrix, labels: &[f64]) -> f64 {
        let layers = self.unpack(x);
        let acts = self.forward(&layers, features);
        let out = acts.last().unwrap();
        let n = features.nrows() as f64;
        match self.arch.head {
            LossHead::CrossEntropy => {
                let mut total = 0.0;
                for (i, &label) in labels.iter().enumerate() {
                    let row = out.row(i);
                    let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                    let logsum = row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln() + max;
                    total += logsum - row[label as usize];
                }
                total / n
            }
            LossHead::LogisticL2 { lambda } => {
                // -ln sigma(z) = softplus(-z), so the per-sample loss is
                // y softplus(-z) + (1-y) softplus(z)
                let mut total = 0.0;
                for (i, &label) in labels.iter().enumerate() {
                    let z = out[(i, 0)];
                    total += label * softplus_stable(-z) + (1.0 - label) * softplus_stable(z);
                }
                total / n + 0.5 * lambda * x.norm_squared()
            }
            LossHead::Mse => {
                let mut total = 0.0;
                for (i, &label) in labels.iter().enumerate() {
                    let e = out[(i, 0)] - label;
                    total += e * e;
                }
                total / n
            }
        }
    }

    fn grad_on(&self, x: &Vector, features: &Matrix, labels: &[f64]) -> Vector {
        let layers = self.unpack(x);
        let acts = self.forward(&layers, features);
        let out = acts.last().unwrap();
        let n = features.nrows() as f64;

        // dLoss/d(output)
        let mut delta = Matrix::zeros(out.nrows(), out.ncols());
        match self.arch.head {
            LossHead::CrossEntropy => {
                for (i, &label) in labels.iter().enumerate() {
                    let row = out.row(i);
                    let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                    let exps: Vec<f64> = row.iter().map(|&v| (v - max).exp()).collect();
                    let sum: f64 = exps.iter().sum();
                    for (j, e) in exps.iter().enumerate() {
                        delta[(i, j)] = (e / sum) / n;
                    }
                    delta[(i, label as usize)] -= 1.0 / n;
                }
            }
            LossHead::LogisticL2 { .. } => {
                for (i, &label) in labels.iter().enumerate() {
                    delta[(i, 0)] = (sigmoid(out[(i, 0)]) - label) / n;
                }
            }
            LossHead::Mse => {
                for (i, &label) in labels.iter().enumerate() {
                    delta[(i, 0)] = 2.0 * (out[(i, 0)] - label) / n;
                }
            }
        }

        let mut grad = Vector::zeros(self.dim);
        // walk layers backwards, filling the packed gradient
        let mut offsets = Vec::with_capacity(self.shapes.len());
        let mut offset = 0;
        for &(o, i) in &self.shapes {
            offsets.push(offset);
            offset += o * i + o;
        }
        for l in (0..self.shapes.len()).rev() {
            let (out_w, in_w) = self.shapes[l];
            let dw = delta.transpose() * &acts[l];
            let db = delta.row_sum().transpose();
            let base = offsets[l];
            grad.as_mut_slice()[base..base + out_w * in_w].copy_from_slice(dw.as_slice());
            grad.as_mut_slice()[base + out_w * in_w..base + out_w * in_w + out_w]
                .copy_from_slice(db.as_slice());
            if l > 0 {
                let mut back = delta * &layers.weights[l];
                for (bv, av) in back.iter_mut().zip(acts[l].iter()) {
                    *bv *= self.arch.activation.derivative_from_output(*av);
                }
                delta = back;
            }
        }

        if let LossHead::LogisticL2 { lambda } = self.arch.head {
            grad += lambda * x;
        }
        grad
    }
}

fn softplus_stable(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

impl LossModel for MlpModel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &Vector) -> f64 {
        self.loss_on(x, &self.dataset.features, &self.dataset.labels)
    }

    fn grad(&self, x: &Vector) -> Vector {
        self.grad_on(x, &self.dataset.features, &self.dataset.labels)
    }

    fn hessian(&self, x: &Vector) -> SymMatrix {
        fd_hessian_of_grad(&|y| self.grad(y), x)
    }

    fn hessian_kind(&self) -> HessianKind {
        HessianKind::FiniteDifference
    }

    fn per_example(&self) -> Option<&dyn PerExampleGrad> {
        Some(self)
    }
}

impl PerExampleGrad for MlpModel {
    fn num_examples(&self) -> usize {
        self.dataset.num_examples()
    }

    fn batch_grad(&self, x: &Vector, indices: &[usize]) -> Vector {
        let (features, labels) = self.subset(indices);
        self.grad_on(x, &features, &labels)
    }
}

/// Generates a regression dataset from a randomly-initialized linear teacher
/// with `depth` hidden layers of `width` nodes, returning the dataset and the
/// teacher's parameter vector (for the identity-activation, MSE-head arch).
///
/// Features are raw standard normal draws, not re-standardized, so a student
/// with the teacher's weights fits the data exactly.
pub fn teacher_student_dataset(
    input: usize,
    depth: usize,
    width: usize,
    n: usize,
    seed: u64,
) -> (Dataset, Vector, MlpArch) {
    let arch = MlpArch {
        input,
        hidden: vec![width; depth],
        output: 1,
        activation: Activation::Identity,
        head: LossHead::Mse,
    };
    let mut rng = RngStream::new(seed, 2_000_029);
    // 1/sqrt(fan_in) scaling keeps the deep linear product well-conditioned
    let mut params = Vector::zeros(arch.dim());
    {
        let mut offset = 0;
        for (out, inp) in arch.layer_shapes() {
            let scale = 1.0 / (inp as f64).sqrt();
            for v in &mut params.as_mut_slice()[offset..offset + out * inp] {
                *v = scale * rng.standard_normal();
            }
            offset += out * inp + out; // biases stay zero
        }
    }
    let features = Matrix::from_fn(n, input, |_, _| rng.standard_normal());
    let probe = Dataset {
        features: features.clone(),
        labels: vec![0.0; n],
    };
    let teacher = mlp_model(arch.clone(), probe).expect("arch matches generated data");
    let out = teacher.predict(&params, &features);
    let labels = (0..n).map(|i| out[(i, 0)]).collect();
    (Dataset { features, labels }, params, arch)
}
