//! MLP construction, the named parameter store, and the Adam optimizer.

use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{AqlError, Result};
use crate::rng::DetRng;
use crate::scalar::Scalar;
use crate::tape::{GradMap, NodeId, Tape};
use crate::tensor::{matmul_acc, Tensor};

/// Hidden-layer nonlinearity. The output layer is always linear.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
}

/// Fully-connected network shape: `layer_widths[0]` is the input width,
/// the last entry the output width.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpSpec {
    pub layer_widths: Vec<usize>,
    pub activation: Activation,
}

impl MlpSpec {
    pub fn new(layer_widths: Vec<usize>, activation: Activation) -> Result<Self> {
        if layer_widths.len() < 2 {
            return Err(AqlError::Config(format!(
                "an MLP needs an input and an output width, got {:?}",
                layer_widths
            )));
        }
        if layer_widths.iter().any(|&w| w == 0) {
            return Err(AqlError::Config(format!(
                "zero-width layer in {:?}",
                layer_widths
            )));
        }
        Ok(MlpSpec {
            layer_widths,
            activation,
        })
    }

    pub fn input_width(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.layer_widths.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.layer_widths.len() - 1
    }
}

/// One named parameter with its Adam moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry<F: Scalar> {
    pub shape: Vec<usize>,
    pub values: Vec<F>,
    pub adam_m: Vec<F>,
    pub adam_v: Vec<F>,
}

/// Named, shaped flat arrays for every network parameter, plus optimizer
/// state. This is the unit that checkpoints and snapshots move around.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterStore<F: Scalar> {
    entries: BTreeMap<String, ParamEntry<F>>,
    step_count: u64,
}

impl<F: Scalar> Default for ParameterStore<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar> ParameterStore<F> {
    pub fn new() -> Self {
        ParameterStore {
            entries: BTreeMap::new(),
            step_count: 0,
        }
    }

    pub fn insert(&mut self, name: &str, shape: Vec<usize>, values: Vec<F>) -> Result<()> {
        let numel: usize = shape.iter().product();
        if numel != values.len() {
            return Err(AqlError::Usage(format!(
                "parameter {}: shape {:?} vs {} values",
                name,
                shape,
                values.len()
            )));
        }
        if self.entries.contains_key(name) {
            return Err(AqlError::Usage(format!("duplicate parameter name {}", name)));
        }
        let n = values.len();
        self.entries.insert(
            name.to_string(),
            ParamEntry {
                shape,
                values,
                adam_m: vec![F::zero(); n],
                adam_v: vec![F::zero(); n],
            },
        );
        Ok(())
    }

    pub(crate) fn insert_entry(&mut self, name: String, entry: ParamEntry<F>) {
        self.entries.insert(name, entry);
    }

    pub fn get(&self, name: &str) -> Option<&ParamEntry<F>> {
        self.entries.get(name)
    }

    pub fn tensor(&self, name: &str) -> Result<Tensor<F>> {
        let e = self
            .entries
            .get(name)
            .ok_or_else(|| AqlError::Usage(format!("unknown parameter {}", name)))?;
        Tensor::from_vec(e.shape.clone(), e.values.clone())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|s| s.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ParamEntry<F>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub(crate) fn set_step_count(&mut self, step: u64) {
        self.step_count = step;
    }

    /// Merge another store's entries into this one. Names must not collide.
    pub fn absorb(&mut self, other: ParameterStore<F>) -> Result<()> {
        for (name, entry) in other.entries {
            if self.entries.contains_key(&name) {
                return Err(AqlError::Usage(format!("duplicate parameter name {}", name)));
            }
            self.entries.insert(name, entry);
        }
        Ok(())
    }
}

/// Create the weight and bias entries for an MLP under `prefix`.
///
/// Weights are uniform in +/- 1/sqrt(fan_in); biases start at zero.
pub fn init_mlp_params<F: Scalar>(
    store: &mut ParameterStore<F>,
    prefix: &str,
    spec: &MlpSpec,
    rng: &mut DetRng,
) -> Result<()> {
    for layer in 0..spec.num_layers() {
        let (fan_in, fan_out) = (spec.layer_widths[layer], spec.layer_widths[layer + 1]);
        let bound = (1.0 / fan_in as f64).sqrt();
        let w: Vec<F> = (0..fan_in * fan_out)
            .map(|_| F::from_f64_lit(rng.gen_range(-bound..bound)))
            .collect();
        store.insert(&format!("{}/w{}", prefix, layer), vec![fan_in, fan_out], w)?;
        store.insert(
            &format!("{}/b{}", prefix, layer),
            vec![fan_out],
            vec![F::zero(); fan_out],
        )?;
    }
    Ok(())
}

fn check_mlp_input<F: Scalar>(spec: &MlpSpec, input_cols: usize) -> Result<()> {
    if input_cols != spec.input_width() {
        return Err(AqlError::Config(format!(
            "MLP expects input width {}, got {}",
            spec.input_width(),
            input_cols
        )));
    }
    Ok(())
}

/// Tape-recorded forward pass through `spec` using parameters under `prefix`.
pub fn mlp_forward<F: Scalar>(
    tape: &mut Tape<F>,
    store: &ParameterStore<F>,
    prefix: &str,
    spec: &MlpSpec,
    input: NodeId,
) -> Result<NodeId> {
    check_mlp_input(spec, tape.value(input).cols())?;
    let mut x = input;
    for layer in 0..spec.num_layers() {
        let w = tape_param(tape, store, &format!("{}/w{}", prefix, layer))?;
        let b = tape_param(tape, store, &format!("{}/b{}", prefix, layer))?;
        let z = tape.matmul(x, w)?;
        let z = tape.add_bias(z, b)?;
        x = if layer + 1 < spec.num_layers() {
            match spec.activation {
                Activation::Tanh => tape.tanh(z)?,
                Activation::Relu => tape.relu(z)?,
            }
        } else {
            z
        };
    }
    Ok(x)
}

/// Register a store entry on the tape as a parameter leaf.
pub fn tape_param<F: Scalar>(
    tape: &mut Tape<F>,
    store: &ParameterStore<F>,
    name: &str,
) -> Result<NodeId> {
    Ok(tape.param(name, store.tensor(name)?))
}

/// Plain forward pass (no tape) on a `[rows, input_width]` batch.
///
/// Uses the same matrix kernel as the tape path; per-row outputs are
/// independent of the batch size.
pub fn mlp_eval<F: Scalar>(
    store: &ParameterStore<F>,
    prefix: &str,
    spec: &MlpSpec,
    input: &Tensor<F>,
) -> Result<Tensor<F>> {
    check_mlp_input(spec, input.cols())?;
    let rows = input.rows();
    let mut x = input.data().to_vec();
    let mut width = input.cols();
    for layer in 0..spec.num_layers() {
        let w = store
            .get(&format!("{}/w{}", prefix, layer))
            .ok_or_else(|| AqlError::Config(format!("missing weights {}/w{}", prefix, layer)))?;
        let b = store
            .get(&format!("{}/b{}", prefix, layer))
            .ok_or_else(|| AqlError::Config(format!("missing bias {}/b{}", prefix, layer)))?;
        let out_w = spec.layer_widths[layer + 1];
        if w.shape != [width, out_w] {
            return Err(AqlError::Config(format!(
                "weights {}/w{} have shape {:?}, expected {:?}",
                prefix,
                layer,
                w.shape,
                [width, out_w]
            )));
        }
        let mut z = vec![F::zero(); rows * out_w];
        matmul_acc(&x, &w.values, &mut z, rows, width, out_w);
        for r in 0..rows {
            for j in 0..out_w {
                z[r * out_w + j] += b.values[j];
            }
        }
        if layer + 1 < spec.num_layers() {
            match spec.activation {
                Activation::Tanh => z.iter_mut().for_each(|v| *v = v.tanh()),
                Activation::Relu => z.iter_mut().for_each(|v| {
                    if *v < F::zero() {
                        *v = F::zero()
                    }
                }),
            }
        }
        x = z;
        width = out_w;
    }
    Tensor::matrix(rows, width, x).map_err(|_| {
        AqlError::Numeric(format!("non-finite activation in MLP '{}'", prefix))
    })
}

/// Adam hyperparameters. Defaults are the canonical beta/epsilon settings.
#[derive(Debug, Clone, Copy)]
pub struct AdamHyper<F: Scalar> {
    pub learning_rate: F,
    pub beta1: F,
    pub beta2: F,
    pub epsilon: F,
}

impl<F: Scalar> AdamHyper<F> {
    pub fn with_lr(learning_rate: F) -> Self {
        AdamHyper {
            learning_rate,
            beta1: F::from_f64_lit(0.9),
            beta2: F::from_f64_lit(0.999),
            epsilon: F::from_f64_lit(1e-8),
        }
    }
}

/// One Adam update in place.
///
/// Entries absent from `grads` are treated as zero-gradient: their moments
/// update by pure decay, which leaves never-touched parameters exactly fixed.
/// Uses the step-size formulation `lr_t = lr * sqrt(1-b2^t) / (1-b1^t)` with
/// epsilon outside the bias correction.
pub fn adam_step<F: Scalar>(
    store: &mut ParameterStore<F>,
    grads: &GradMap<F>,
    hyper: &AdamHyper<F>,
) -> Result<()> {
    for (name, g) in grads {
        let entry = store
            .entries
            .get(name)
            .ok_or_else(|| AqlError::Usage(format!("gradient for unknown parameter {}", name)))?;
        if g.shape() != entry.shape.as_slice() {
            return Err(AqlError::Usage(format!(
                "gradient shape {:?} vs parameter {} shape {:?}",
                g.shape(),
                name,
                entry.shape
            )));
        }
    }

    store.step_count += 1;
    let t = store.step_count as i32;
    let one = F::one();
    let lr_t = hyper.learning_rate * (one - hyper.beta2.powi(t)).sqrt() / (one - hyper.beta1.powi(t));

    for (name, entry) in store.entries.iter_mut() {
        let grad = grads.get(name.as_str()).map(|t| t.data());
        for i in 0..entry.values.len() {
            let g = grad.map_or(F::zero(), |g| g[i]);
            entry.adam_m[i] = hyper.beta1 * entry.adam_m[i] + (one - hyper.beta1) * g;
            entry.adam_v[i] = hyper.beta2 * entry.adam_v[i] + (one - hyper.beta2) * g * g;
            entry.values[i] =
                entry.values[i] - lr_t * entry.adam_m[i] / (entry.adam_v[i].sqrt() + hyper.epsilon);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamSeed;
    use crate::tape::backward;
    use std::collections::BTreeMap;

    fn store_with(name: &str, shape: Vec<usize>, values: Vec<f64>) -> ParameterStore<f64> {
        let mut s = ParameterStore::new();
        s.insert(name, shape, values).unwrap();
        s
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let spec = MlpSpec::new(vec![3, 4, 2], Activation::Tanh).unwrap();
        let mut store = ParameterStore::new();
        store.insert("net/w0", vec![3, 4], vec![0.0; 12]).unwrap();
        store.insert("net/b0", vec![4], vec![0.0; 4]).unwrap();
        store.insert("net/w1", vec![4, 2], vec![0.0; 8]).unwrap();
        store.insert("net/b1", vec![2], vec![0.0; 2]).unwrap();
        let input = Tensor::matrix(2, 3, vec![1.0, -2.0, 3.0, 0.5, 0.0, -1.0]).unwrap();
        let out = mlp_eval(&store, "net", &spec, &input).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_single_layer() {
        let spec = MlpSpec::new(vec![2, 2], Activation::Tanh).unwrap();
        let mut store = ParameterStore::new();
        store
            .insert("net/w0", vec![2, 2], vec![1.0, 0.0, 0.0, 1.0])
            .unwrap();
        store.insert("net/b0", vec![2], vec![0.0, 0.0]).unwrap();
        let input = Tensor::matrix(1, 2, vec![1.0, 2.0]).unwrap();
        let out = mlp_eval(&store, "net", &spec, &input).unwrap();
        assert_eq!(out.data(), &[1.0, 2.0]);
    }

    #[test]
    fn random_two_layer_matches_nested_loop_oracle() {
        let spec = MlpSpec::new(vec![3, 5, 2], Activation::Tanh).unwrap();
        let mut rng = StreamSeed::root(41).child("init").rng();
        let mut store = ParameterStore::new();
        init_mlp_params(&mut store, "net", &spec, &mut rng).unwrap();
        let input = vec![0.3, -1.2, 0.7];

        // Independent oracle: direct nested loops over the stored arrays.
        let w0 = store.get("net/w0").unwrap();
        let b0 = store.get("net/b0").unwrap();
        let w1 = store.get("net/w1").unwrap();
        let b1 = store.get("net/b1").unwrap();
        let mut hidden = [0.0f64; 5];
        for j in 0..5 {
            let mut acc = b0.values[j];
            for (i, &x) in input.iter().enumerate() {
                acc += x * w0.values[i * 5 + j];
            }
            hidden[j] = acc.tanh();
        }
        let mut want = [0.0f64; 2];
        for j in 0..2 {
            let mut acc = b1.values[j];
            for (i, &h) in hidden.iter().enumerate() {
                acc += h * w1.values[i * 2 + j];
            }
            want[j] = acc;
        }

        let out = mlp_eval(
            &store,
            "net",
            &spec,
            &Tensor::matrix(1, 3, input.clone()).unwrap(),
        )
        .unwrap();
        for (o, w) in out.data().iter().zip(&want) {
            assert!((o - w).abs() < 1e-14);
        }

        // The tape path computes the same forward values.
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::matrix(1, 3, input).unwrap());
        let y = mlp_forward(&mut tape, &store, "net", &spec, x).unwrap();
        assert_eq!(tape.value(y).data(), out.data());
    }

    #[test]
    fn shape_mismatch_is_config_error() {
        let spec = MlpSpec::new(vec![3, 2], Activation::Tanh).unwrap();
        let store = store_with("net/w0", vec![3, 2], vec![0.0; 6]);
        let input = Tensor::matrix(1, 4, vec![0.0; 4]).unwrap();
        let err = mlp_eval(&store, "net", &spec, &input).unwrap_err();
        assert!(matches!(err, AqlError::Config(_)));
    }

    #[test]
    fn mlp_gradients_match_finite_differences() {
        let spec = MlpSpec::new(vec![4, 6, 3, 1], Activation::Tanh).unwrap();
        let mut rng = StreamSeed::root(17).child("init").rng();
        let mut store = ParameterStore::new();
        init_mlp_params(&mut store, "net", &spec, &mut rng).unwrap();
        let input = Tensor::matrix(3, 4, (0..12).map(|i| (i as f64 * 0.37).sin()).collect())
            .unwrap();

        let loss_of = |s: &ParameterStore<f64>| -> f64 {
            let mut tape = Tape::new();
            let x = tape.constant(input.clone());
            let y = mlp_forward(&mut tape, s, "net", &spec, x).unwrap();
            let sq = tape.square(y).unwrap();
            let l = tape.mean_all(sq).unwrap();
            tape.value(l).scalar_value()
        };

        let mut tape = Tape::new();
        let x = tape.constant(input.clone());
        let y = mlp_forward(&mut tape, &store, "net", &spec, x).unwrap();
        let sq = tape.square(y).unwrap();
        let l = tape.mean_all(sq).unwrap();
        let grads = backward(&tape, l).unwrap();

        let h = 1e-5;
        let names: Vec<String> = store.names().map(|s| s.to_string()).collect();
        for name in names {
            let n = store.get(&name).unwrap().values.len();
            for i in (0..n).step_by(3) {
                let orig = store.get(&name).unwrap().values[i];
                store.entries.get_mut(&name).unwrap().values[i] = orig + h;
                let up = loss_of(&store);
                store.entries.get_mut(&name).unwrap().values[i] = orig - h;
                let down = loss_of(&store);
                store.entries.get_mut(&name).unwrap().values[i] = orig;
                let fd = (up - down) / (2.0 * h);
                let an = grads[&name].data()[i];
                let denom = an.abs().max(fd.abs()).max(1.0);
                assert!(
                    ((an - fd) / denom).abs() < 1e-6,
                    "{}[{}]: analytic {} vs fd {}",
                    name,
                    i,
                    an,
                    fd
                );
            }
        }
    }

    #[test]
    fn adam_first_step_matches_formula() {
        let g = [0.4f64, -2.0, 0.001];
        let mut store = store_with("w", vec![3], vec![1.0, 2.0, 3.0]);
        let mut grads: GradMap<f64> = BTreeMap::new();
        grads.insert(
            "w".into(),
            Tensor::from_vec(vec![3], g.to_vec()).unwrap(),
        );
        let hyper = AdamHyper::with_lr(0.01);
        adam_step(&mut store, &grads, &hyper).unwrap();

        // Direct evaluation of the update formulas at t = 1.
        let (b1, b2, eps, lr) = (0.9f64, 0.999, 1e-8, 0.01);
        let lr_t = lr * (1.0 - b2).sqrt() / (1.0 - b1);
        for (i, &gi) in g.iter().enumerate() {
            let m = (1.0 - b1) * gi;
            let v = (1.0 - b2) * gi * gi;
            let want = [1.0, 2.0, 3.0][i] - lr_t * m / (v.sqrt() + eps);
            assert!((store.get("w").unwrap().values[i] - want).abs() < 1e-15);
        }
        assert_eq!(store.step_count(), 1);
    }

    #[test]
    fn adam_zero_gradient_leaves_values() {
        let mut store = store_with("w", vec![2], vec![0.5, -0.5]);
        let grads: GradMap<f64> = BTreeMap::new();
        adam_step(&mut store, &grads, &AdamHyper::with_lr(0.1)).unwrap();
        assert_eq!(store.get("w").unwrap().values, vec![0.5, -0.5]);
        assert_eq!(store.step_count(), 1);
    }

    #[test]
    fn adam_two_steps_match_hand_recursion() {
        let g = 0.7f64;
        let mut store = store_with("w", vec![1], vec![0.0]);
        let mut grads: GradMap<f64> = BTreeMap::new();
        grads.insert("w".into(), Tensor::from_vec(vec![1], vec![g]).unwrap());
        let hyper = AdamHyper::with_lr(0.05);
        adam_step(&mut store, &grads, &hyper).unwrap();
        adam_step(&mut store, &grads, &hyper).unwrap();

        let (b1, b2, eps, lr) = (0.9f64, 0.999, 1e-8, 0.05);
        let mut w = 0.0f64;
        let mut m = 0.0f64;
        let mut v = 0.0f64;
        for t in 1..=2 {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let lr_t = lr * (1.0 - b2.powi(t)).sqrt() / (1.0 - b1.powi(t));
            w -= lr_t * m / (v.sqrt() + eps);
        }
        assert!((store.get("w").unwrap().values[0] - w).abs() < 1e-15);
        assert_eq!(store.step_count(), 2);
    }

    #[test]
    fn adam_rejects_shape_mismatch() {
        let mut store = store_with("w", vec![2], vec![0.0, 0.0]);
        let mut grads: GradMap<f64> = BTreeMap::new();
        grads.insert("w".into(), Tensor::from_vec(vec![3], vec![0.0; 3]).unwrap());
        let err = adam_step(&mut store, &grads, &AdamHyper::with_lr(0.1)).unwrap_err();
        assert!(matches!(err, AqlError::Usage(_)));
    }
}
