//! Feed-forward surrogate network with exact analytic derivatives.
//!
//! The network is a tanh multilayer perceptron with an identity output
//! layer, wrapped in affine input/output normalization so the model is
//! invariant to the units of its training data. Because tanh is entire,
//! the composed map is infinitely differentiable; the input jacobian is
//! computed by a reverse pass over the analytic rules and
//! Hessian-vector products by forward-over-reverse tangent propagation,
//! both exact to round-off.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Result, TerraError};

/// Model file format version accepted by [`Mlp::load`].
const FORMAT_VERSION: u32 = 1;

/// Training summary stored alongside the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    /// Layer sizes, input to output.
    pub layer_sizes: Vec<usize>,
    /// Seed of the selected ensemble member.
    pub train_seed: u64,
    /// Content hash of the training dataset.
    pub dataset_sha256: String,
    /// Mean squared error on the training split [N²].
    pub train_mse: f64,
    /// Mean squared error on the validation split [N²].
    pub val_mse: f64,
    /// Mean squared error on the held-out test split [N²].
    pub test_mse: f64,
}

/// Tanh multilayer perceptron with affine input/output normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    /// Layer widths, input to output, e.g. [10, 35, 35, 35, 1].
    pub widths: Vec<usize>,
    /// Weight matrices, one per layer, shaped (out, in).
    pub weights: Vec<Array2<f64>>,
    /// Bias vectors, one per layer.
    pub biases: Vec<Array1<f64>>,
    /// Per-feature input shift: x_norm = (x − shift) / scale.
    pub input_shift: Vec<f64>,
    /// Per-feature input scale.
    pub input_scale: Vec<f64>,
    /// Output de-normalization: y = shift + scale · y_norm.
    pub output_shift: f64,
    /// Output scale.
    pub output_scale: f64,
    /// Provenance of a trained model, absent on fresh initialization.
    pub manifest: Option<ModelManifest>,
}

impl Mlp {
    /// Fresh network with uniform init in ±1/√fan_in per layer and
    /// identity normalization.
    pub fn new(widths: &[usize], seed: u64) -> Result<Self> {
        if widths.len() < 2 || widths.iter().any(|&w| w == 0) {
            return Err(TerraError::InvalidInput(format!(
                "invalid layer widths {widths:?}"
            )));
        }
        if *widths.last().unwrap() != 1 {
            return Err(TerraError::InvalidInput(
                "the surrogate has a single force output".into(),
            ));
        }
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..widths.len() - 1 {
            let (fan_in, fan_out) = (widths[l], widths[l + 1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            weights.push(Array2::from_shape_fn((fan_out, fan_in), |_| {
                rng.random_range(-bound..bound)
            }));
            biases.push(Array1::from_shape_fn(fan_out, |_| {
                rng.random_range(-bound..bound)
            }));
        }
        Ok(Self {
            widths: widths.to_vec(),
            weights,
            biases,
            input_shift: vec![0.0; widths[0]],
            input_scale: vec![1.0; widths[0]],
            output_shift: 0.0,
            output_scale: 1.0,
            manifest: None,
        })
    }

    /// Input dimension.
    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    /// Total number of trainable parameters.
    pub fn param_count(&self) -> usize {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| w.len() + b.len())
            .sum()
    }

    /// Installs normalization records mapping the given per-feature
    /// bounds and target bounds onto [−1, 1].
    pub fn set_normalization(&mut self, input_bounds: &[[f64; 2]], target_bounds: [f64; 2]) {
        assert_eq!(input_bounds.len(), self.input_dim());
        self.input_shift = input_bounds.iter().map(|b| 0.5 * (b[0] + b[1])).collect();
        self.input_scale = input_bounds
            .iter()
            .map(|b| (0.5 * (b[1] - b[0])).max(f64::MIN_POSITIVE))
            .collect();
        self.output_shift = 0.5 * (target_bounds[0] + target_bounds[1]);
        self.output_scale = (0.5 * (target_bounds[1] - target_bounds[0])).max(f64::MIN_POSITIVE);
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(TerraError::InvalidInput(format!(
                "expected {} inputs, got {}",
                self.input_dim(),
                x.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(TerraError::InvalidInput("non-finite network input".into()));
        }
        Ok(())
    }

    fn normalize(&self, x: &[f64]) -> Array1<f64> {
        Array1::from_iter(
            x.iter()
                .zip(self.input_shift.iter().zip(&self.input_scale))
                .map(|(v, (s, c))| (v - s) / c),
        )
    }

    /// Hidden activations for a normalized input; `a[l]` is the output
    /// of hidden layer `l`.
    fn hidden_activations(&self, z: &Array1<f64>) -> Vec<Array1<f64>> {
        let hidden = self.weights.len() - 1;
        let mut activations = Vec::with_capacity(hidden);
        let mut a = z.clone();
        for l in 0..hidden {
            a = (self.weights[l].dot(&a) + &self.biases[l]).mapv(f64::tanh);
            activations.push(a.clone());
        }
        activations
    }

    /// Network output [N] at a physical input.
    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        let z = self.normalize(x);
        let hidden = self.weights.len() - 1;
        let mut a = z;
        for l in 0..hidden {
            a = (self.weights[l].dot(&a) + &self.biases[l]).mapv(f64::tanh);
        }
        let y_norm = self.weights[hidden].dot(&a)[0] + self.biases[hidden][0];
        Ok(self.output_shift + self.output_scale * y_norm)
    }

    /// Exact derivative of the output with respect to each physical
    /// input coordinate.
    pub fn jacobian(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let z = self.normalize(x);
        let activations = self.hidden_activations(&z);
        let hidden = self.weights.len() - 1;
        // dy/da for the last hidden layer, then pulled back.
        let mut g = self.weights[hidden].row(0).mapv(|w| w * self.output_scale);
        for l in (0..hidden).rev() {
            let p = &g * &activations[l].mapv(|a| 1.0 - a * a);
            g = self.weights[l].t().dot(&p);
        }
        Ok(g
            .iter()
            .zip(&self.input_scale)
            .map(|(v, c)| v / c)
            .collect())
    }

    /// Exact Hessian-vector product H(x)·v by forward-over-reverse
    /// tangent propagation: the forward pass carries activation
    /// tangents along v, and the reverse pass differentiates the
    /// jacobian computation using tanh' = 1 − a² and its tangent
    /// −2·a·ȧ.
    pub fn hessian_vec(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        if v.len() != self.input_dim() || v.iter().any(|c| !c.is_finite()) {
            return Err(TerraError::InvalidInput(
                "direction must be a finite input-sized vector".into(),
            ));
        }
        let z = self.normalize(x);
        let z_dot = Array1::from_iter(v.iter().zip(&self.input_scale).map(|(c, s)| c / s));

        let hidden = self.weights.len() - 1;
        let mut activations = Vec::with_capacity(hidden);
        let mut tangents = Vec::with_capacity(hidden);
        let (mut a, mut a_dot) = (z, z_dot);
        for l in 0..hidden {
            let s_dot = self.weights[l].dot(&a_dot);
            a = (self.weights[l].dot(&a) + &self.biases[l]).mapv(f64::tanh);
            a_dot = a.mapv(|t| 1.0 - t * t) * &s_dot;
            activations.push(a.clone());
            tangents.push(a_dot.clone());
        }

        let mut g = self.weights[hidden].row(0).mapv(|w| w * self.output_scale);
        let mut g_dot = Array1::zeros(g.len());
        for l in (0..hidden).rev() {
            let phi1 = activations[l].mapv(|t| 1.0 - t * t);
            let phi1_dot = -2.0 * (&activations[l] * &tangents[l]);
            let p = &g * &phi1;
            let p_dot = &g_dot * &phi1 + &g * &phi1_dot;
            g = self.weights[l].t().dot(&p);
            g_dot = self.weights[l].t().dot(&p_dot);
        }
        Ok(g_dot
            .iter()
            .zip(&self.input_scale)
            .map(|(h, c)| h / c)
            .collect())
    }

    /// Serializes the model to a versioned JSON container. Floats use
    /// shortest round-trip encoding, so save→load is bit-exact.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = ModelFile {
            format_version: FORMAT_VERSION,
            widths: self.widths.clone(),
            weights: self
                .weights
                .iter()
                .map(|w| w.iter().copied().collect())
                .collect(),
            biases: self.biases.iter().map(|b| b.to_vec()).collect(),
            input_shift: self.input_shift.clone(),
            input_scale: self.input_scale.clone(),
            output_shift: self.output_shift,
            output_scale: self.output_scale,
            manifest: self.manifest.clone(),
        };
        let json = serde_json::to_string_pretty(&file)
            .map_err(|e| TerraError::Serialization(e.to_string()))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    /// Loads a model saved by [`Mlp::save`], validating version and
    /// shape consistency.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: ModelFile = serde_json::from_str(&text).map_err(|e| {
            TerraError::Serialization(format!("corrupt model file {}: {e}", path.display()))
        })?;
        if file.format_version != FORMAT_VERSION {
            return Err(TerraError::Serialization(format!(
                "model format version {} unsupported (expected {FORMAT_VERSION})",
                file.format_version
            )));
        }
        let layers = file.widths.len().saturating_sub(1);
        if layers == 0
            || file.weights.len() != layers
            || file.biases.len() != layers
            || file.input_shift.len() != file.widths[0]
            || file.input_scale.len() != file.widths[0]
        {
            return Err(TerraError::Serialization(
                "model file has inconsistent layer shapes".into(),
            ));
        }
        let mut weights = Vec::with_capacity(layers);
        let mut biases = Vec::with_capacity(layers);
        for l in 0..layers {
            let (rows, cols) = (file.widths[l + 1], file.widths[l]);
            if file.weights[l].len() != rows * cols || file.biases[l].len() != rows {
                return Err(TerraError::Serialization(format!(
                    "layer {l} has wrong parameter count"
                )));
            }
            weights.push(
                Array2::from_shape_vec((rows, cols), file.weights[l].clone())
                    .map_err(|e| TerraError::Serialization(e.to_string()))?,
            );
            biases.push(Array1::from_vec(file.biases[l].clone()));
        }
        let model = Self {
            widths: file.widths,
            weights,
            biases,
            input_shift: file.input_shift,
            input_scale: file.input_scale,
            output_shift: file.output_shift,
            output_scale: file.output_scale,
            manifest: file.manifest,
        };
        if model
            .weights
            .iter()
            .any(|w| w.iter().any(|v| !v.is_finite()))
        {
            return Err(TerraError::Serialization(
                "model file contains non-finite parameters".into(),
            ));
        }
        Ok(model)
    }
}

/// On-disk model representation.
#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    widths: Vec<usize>,
    /// Row-major weight entries per layer.
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    input_shift: Vec<f64>,
    input_scale: Vec<f64>,
    output_shift: f64,
    output_scale: f64,
    manifest: Option<ModelManifest>,
}
