//! Feed-forward encoder with a linear classification head.
//!
//! All parameters live in one flat vector. Each layer owns a row-major
//! `out x in` weight block followed by an `out` bias block; the head is the
//! last layer, so the encoder parameters are a prefix of the vector.

use ndarray::{s, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::EncoderConfig;
use crate::error::{Error, Result};
use crate::gbdt::objective::softmax_into;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerSlot {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: usize,
    pub bias: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamLayout {
    /// Encoder layers, then the head.
    pub slots: Vec<LayerSlot>,
    pub len: usize,
}

impl ParamLayout {
    pub fn new(config: &EncoderConfig) -> Self {
        let mut slots = Vec::new();
        let mut offset = 0;
        for (inputs, outputs) in config.layer_dims() {
            let weight = offset;
            let bias = weight + inputs * outputs;
            offset = bias + outputs;
            slots.push(LayerSlot { inputs, outputs, weight, bias });
        }
        Self { slots, len: offset }
    }

    pub fn head(&self) -> LayerSlot {
        *self.slots.last().expect("layout always has a head")
    }

    pub fn encoder_slots(&self) -> &[LayerSlot] {
        &self.slots[..self.slots.len() - 1]
    }

    /// Number of leading parameters that belong to the encoder.
    pub fn encoder_len(&self) -> usize {
        self.head().weight
    }
}

/// Adam moment estimates, one entry per parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self { step: 0, m: vec![0.0; len], v: vec![0.0; len] }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Dropout active, driven by the model's RNG.
    Train,
    /// Deterministic and side-effect free.
    Eval,
}

/// Encoder and head parameters with optimizer and RNG state.
#[derive(Clone, Debug)]
pub struct ModelState {
    pub config: EncoderConfig,
    pub layout: ParamLayout,
    pub params: Vec<f64>,
    pub optimizer: AdamState,
    pub rng: ChaCha8Rng,
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    pub inputs: Array2<f64>,
    /// Post-activation output of every encoder layer.
    activations: Vec<Array2<f64>>,
    /// Inverted-dropout multipliers applied to the last activation.
    mask: Option<Array2<f64>>,
    /// The feature vector (the head's input), one row per sample.
    pub features: Array2<f64>,
    pub logits: Array2<f64>,
}

fn init_slot(params: &mut [f64], slot: LayerSlot, rng: &mut ChaCha8Rng) {
    let bound = 1.0 / (slot.inputs as f64).sqrt();
    for p in &mut params[slot.weight..slot.bias + slot.outputs] {
        *p = rng.gen_range(-bound..bound);
    }
}

impl ModelState {
    /// Fresh model with fan-in scaled uniform initialization.
    pub fn new(config: EncoderConfig) -> Result<Self> {
        config.validate()?;
        let layout = ParamLayout::new(&config);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = vec![0.0; layout.len];
        for &slot in &layout.slots {
            init_slot(&mut params, slot, &mut rng);
        }
        let optimizer = AdamState::new(layout.len);
        Ok(Self { config, layout, params, optimizer, rng })
    }

    /// Replace the head with a randomly initialized one for `num_classes`
    /// classes and restart the optimizer. The encoder is untouched.
    pub fn reset_head(&mut self, num_classes: usize) -> Result<()> {
        let config = EncoderConfig { num_classes, ..self.config.clone() };
        config.validate()?;
        let layout = ParamLayout::new(&config);
        self.params.truncate(layout.encoder_len());
        self.params.resize(layout.len, 0.0);
        init_slot(&mut self.params, layout.head(), &mut self.rng);
        self.optimizer = AdamState::new(layout.len);
        self.config = config;
        self.layout = layout;
        Ok(())
    }

    pub fn weight(&self, slot: LayerSlot) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((slot.outputs, slot.inputs), &self.params[slot.weight..slot.bias])
            .expect("layout matches parameter vector")
    }

    pub fn bias(&self, slot: LayerSlot) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.params[slot.bias..slot.bias + slot.outputs])
    }

    fn affine(&self, x: &ArrayView2<'_, f64>, slot: LayerSlot) -> Array2<f64> {
        let mut z = x.dot(&self.weight(slot).t());
        z += &self.bias(slot);
        z
    }

    fn check_inputs(&self, inputs: &ArrayView2<'_, f64>) -> Result<()> {
        if inputs.ncols() != self.config.input_dim {
            return Err(Error::ShapeMismatch {
                expected: format!("{} input columns", self.config.input_dim),
                actual: format!("{} columns", inputs.ncols()),
            });
        }
        if let Some(((row, column), _)) = inputs.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { row, column });
        }
        Ok(())
    }

    fn run(&self, inputs: ArrayView2<'_, f64>, mask: Option<Array2<f64>>) -> ForwardCache {
        let act = self.config.activation;
        let mut activations = Vec::with_capacity(self.layout.slots.len() - 1);
        let mut h = inputs.to_owned();
        for &slot in self.layout.encoder_slots() {
            let mut z = self.affine(&h.view(), slot);
            z.mapv_inplace(|v| act.apply(v));
            activations.push(z.clone());
            h = z;
        }
        let features = match &mask {
            Some(m) => h * m,
            None => h,
        };
        let logits = self.affine(&features.view(), self.layout.head());
        ForwardCache { inputs: inputs.to_owned(), activations, mask, features, logits }
    }

    /// Forward pass. Train mode draws a fresh dropout mask from the model's
    /// RNG; eval mode never touches the state.
    pub fn forward(&mut self, inputs: ArrayView2<'_, f64>, mode: Mode) -> Result<ForwardCache> {
        self.check_inputs(&inputs)?;
        let rate = self.config.dropout_rate;
        let mask = match mode {
            Mode::Train if rate > 0.0 => {
                let keep = 1.0 / (1.0 - rate);
                let shape = (inputs.nrows(), self.config.feature_dim);
                Some(Array2::from_shape_simple_fn(shape, || if self.rng.gen::<f64>() < rate { 0.0 } else { keep }))
            }
            _ => None,
        };
        Ok(self.run(inputs, mask))
    }

    pub fn forward_eval(&self, inputs: ArrayView2<'_, f64>) -> Result<ForwardCache> {
        self.check_inputs(&inputs)?;
        Ok(self.run(inputs, None))
    }

    /// Eval-mode feature vectors only.
    pub fn features(&self, inputs: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        Ok(self.forward_eval(inputs)?.features)
    }

    pub fn predict_class(&self, inputs: ArrayView2<'_, f64>) -> Result<Vec<usize>> {
        let logits = self.forward_eval(inputs)?.logits;
        Ok(crate::gbdt::argmax_rows(&logits))
    }

    /// Mean cross-entropy loss of the cached logits and its exact gradient
    /// with respect to every parameter.
    pub fn backward(&self, cache: &ForwardCache, labels: &[usize]) -> Result<(f64, Vec<f64>)> {
        let b = cache.logits.nrows();
        if labels.len() != b {
            return Err(Error::ShapeMismatch {
                expected: format!("{b} labels"),
                actual: format!("{} labels", labels.len()),
            });
        }
        let loss = cross_entropy_loss(cache.logits.view(), labels)?;
        let k = cache.logits.ncols();
        let mut dlogits = Array2::zeros((b, k));
        let mut p = vec![0.0; k];
        for i in 0..b {
            softmax_into(&cache.logits.row(i).to_vec(), &mut p);
            for c in 0..k {
                let y = if labels[i] == c { 1.0 } else { 0.0 };
                dlogits[[i, c]] = (p[c] - y) / b as f64;
            }
        }

        let mut grads = vec![0.0; self.layout.len];
        let head = self.layout.head();
        write_layer_grads(&mut grads, head, &dlogits, &cache.features);
        let mut dh = dlogits.dot(&self.weight(head));
        if let Some(m) = &cache.mask {
            dh *= m;
        }
        let act = self.config.activation;
        let slots = self.layout.encoder_slots();
        for l in (0..slots.len()).rev() {
            let out = &cache.activations[l];
            let mut dz = dh;
            dz.zip_mut_with(out, |d, &y| *d *= act.derivative_from_output(y));
            let input = if l == 0 { &cache.inputs } else { &cache.activations[l - 1] };
            write_layer_grads(&mut grads, slots[l], &dz, input);
            dh = dz.dot(&self.weight(slots[l]));
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::Diverged(format!("non-finite gradient at parameter {i}")));
        }
        Ok((loss, grads))
    }

    /// Loss and gradients for one minibatch in the given mode.
    pub fn loss_and_gradients(
        &mut self,
        inputs: ArrayView2<'_, f64>,
        labels: &[usize],
        mode: Mode,
    ) -> Result<(f64, Vec<f64>)> {
        let cache = self.forward(inputs, mode)?;
        self.backward(&cache, labels)
    }

    /// FNV-1a hash of the encoder parameter bits.
    pub fn encoder_fingerprint(&self) -> u64 {
        fingerprint(&self.params[..self.layout.encoder_len()])
    }

    /// FNV-1a hash of every parameter, optimizer moment and the RNG position.
    pub fn state_fingerprint(&self) -> u64 {
        let mut h = fingerprint(&self.params);
        h ^= fingerprint(&self.optimizer.m).rotate_left(1);
        h ^= fingerprint(&self.optimizer.v).rotate_left(2);
        h ^ (self.rng.get_word_pos() as u64).wrapping_mul(0x100000001b3)
    }
}

pub(crate) fn fingerprint(values: &[f64]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for v in values {
        for byte in v.to_bits().to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    }
    h
}

fn write_layer_grads(grads: &mut [f64], slot: LayerSlot, delta: &Array2<f64>, input: &Array2<f64>) {
    let gw = delta.t().dot(input);
    let mut w = ndarray::ArrayViewMut2::from_shape((slot.outputs, slot.inputs), &mut grads[slot.weight..slot.bias])
        .expect("layout matches gradient vector");
    w.assign(&gw);
    let gb = delta.sum_axis(Axis(0));
    grads[slot.bias..slot.bias + slot.outputs].iter_mut().zip(gb.iter()).for_each(|(g, &v)| *g = v);
}

/// Mean over the batch of `-log softmax(logits)[y]`.
pub fn cross_entropy_loss(logits: ArrayView2<'_, f64>, labels: &[usize]) -> Result<f64> {
    let (b, k) = logits.dim();
    if labels.len() != b || b == 0 {
        return Err(Error::ShapeMismatch {
            expected: format!("{b} labels (at least one)"),
            actual: format!("{} labels", labels.len()),
        });
    }
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        if y >= k {
            return Err(Error::LabelOutOfRange { row: i, label: y, num_classes: k });
        }
        let row = logits.slice(s![i, ..]);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
        total += lse - row[y];
    }
    Ok(total / b as f64)
}

#[cfg(test)]
mod tests {
    use ndarray::array;

    use super::super::config::Activation;
    use super::*;

    fn config(act: Activation) -> EncoderConfig {
        EncoderConfig {
            input_dim: 5,
            hidden_dims: vec![7, 6],
            feature_dim: 4,
            num_classes: 3,
            activation: act,
            dropout_rate: 0.0,
            seed: 3,
        }
    }

    #[test]
    fn zero_network_outputs_zero() {
        let mut m = ModelState::new(config(Activation::Tanh)).unwrap();
        m.params.iter_mut().for_each(|p| *p = 0.0);
        let out = m.forward_eval(array![[1.0, -2.0, 3.0, 0.5, 9.0]].view()).unwrap();
        assert!(out.features.iter().all(|&v| v == 0.0));
        assert!(out.logits.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_layer_passes_nonnegative_input() {
        let cfg = EncoderConfig {
            input_dim: 3,
            hidden_dims: vec![],
            feature_dim: 3,
            activation: Activation::Relu,
            dropout_rate: 0.0,
            ..config(Activation::Relu)
        };
        let mut m = ModelState::new(cfg).unwrap();
        let slot = m.layout.slots[0];
        m.params[slot.weight..slot.bias + slot.outputs].iter_mut().for_each(|p| *p = 0.0);
        for i in 0..3 {
            m.params[slot.weight + i * 3 + i] = 1.0;
        }
        let x = array![[0.5, 2.0, 0.0]];
        assert_eq!(m.forward(x.view(), Mode::Train).unwrap().features, x);
    }

    #[test]
    fn eval_forward_is_deterministic() {
        let m = ModelState::new(EncoderConfig { dropout_rate: 0.3, ..config(Activation::Tanh) }).unwrap();
        let x = array![[0.1, 0.2, 0.3, 0.4, 0.5], [1.0, 0.0, -1.0, 2.0, 0.0]];
        let before = m.rng.get_word_pos();
        let a = m.forward_eval(x.view()).unwrap();
        let b = m.forward_eval(x.view()).unwrap();
        assert_eq!(a.logits, b.logits);
        assert_eq!(m.rng.get_word_pos(), before);
    }

    #[test]
    fn cross_entropy_examples() {
        let l = cross_entropy_loss(array![[0.0, 0.0, 0.0]].view(), &[1]).unwrap();
        assert!((l - 3f64.ln()).abs() < 1e-15);
        let l = cross_entropy_loss(array![[30.0, -30.0]].view(), &[0]).unwrap();
        assert!(l < 1e-20);
        assert!(cross_entropy_loss(array![[0.0, 0.0]].view(), &[2]).is_err());
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let m = ModelState::new(config(Activation::Tanh)).unwrap();
        assert!(matches!(m.forward_eval(array![[1.0, 2.0]].view()), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn zero_inputs_give_zero_first_layer_weight_gradients() {
        let mut m = ModelState::new(config(Activation::Tanh)).unwrap();
        let first = m.layout.slots[0];
        m.params[first.bias..first.bias + first.outputs].iter_mut().for_each(|p| *p = 0.0);
        let x = Array2::zeros((4, 5));
        let (_, g) = m.loss_and_gradients(x.view(), &[0, 1, 2, 0], Mode::Eval).unwrap();
        assert!(g[first.weight..first.bias].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn duplicated_batch_keeps_mean_gradients() {
        let mut m = ModelState::new(config(Activation::Relu)).unwrap();
        let x = array![[0.3, -0.2, 0.9, 0.0, 1.1], [-0.5, 0.4, 0.1, 0.7, -0.9]];
        let y = [2, 0];
        let (l1, g1) = m.loss_and_gradients(x.view(), &y, Mode::Eval).unwrap();
        let xx = ndarray::concatenate(Axis(0), &[x.view(), x.view()]).unwrap();
        let (l2, g2) = m.loss_and_gradients(xx.view(), &[2, 0, 2, 0], Mode::Eval).unwrap();
        assert!((l1 - l2).abs() < 1e-14);
        for (a, b) in g1.iter().zip(&g2) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn reset_head_keeps_encoder() {
        let mut m = ModelState::new(config(Activation::Tanh)).unwrap();
        let enc = m.encoder_fingerprint();
        let n_enc = m.layout.encoder_len();
        let prefix = m.params[..n_enc].to_vec();
        m.reset_head(5).unwrap();
        assert_eq!(m.encoder_fingerprint(), enc);
        assert_eq!(&m.params[..n_enc], prefix.as_slice());
        assert_eq!(m.layout.head().outputs, 5);
        assert_eq!(m.params.len(), m.layout.len);
        assert_eq!(m.optimizer.m.len(), m.layout.len);
    }
}
