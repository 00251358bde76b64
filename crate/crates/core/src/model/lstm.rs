//! Stacked LSTM over one-hot melody tokens with a softmax head, plus the
//! batched forward and backward passes used in training.

use ndarray::{s, Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chord::ChordLabel;
use crate::tokenizer::{BarTokens, TOKENS_PER_BAR, TOKEN_VOCAB};

pub type Tokens = [u8; TOKENS_PER_BAR];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input: usize,
    pub hidden: usize,
    pub layers: usize,
    pub classes: usize,
    /// Dropout applied to the output sequence of every layer but the last.
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input: TOKEN_VOCAB,
            hidden: 80,
            layers: 2,
            classes: crate::chord::NUM_CHORDS,
            dropout: 0.2,
        }
    }
}

impl ModelConfig {
    pub fn small(hidden: usize) -> Self {
        ModelConfig {
            hidden,
            ..Self::default()
        }
    }

    fn layer_input(&self, l: usize) -> usize {
        if l == 0 {
            self.input
        } else {
            self.hidden
        }
    }
}

/// One LSTM layer. Rows of `w` are the input, forget, cell and output gate
/// blocks in that order; columns are `[x_t, h_{t-1}]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmLayer {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Weights {
    pub layers: Vec<LstmLayer>,
    pub w_out: Array2<f64>,
    pub b_out: Array1<f64>,
}

impl Weights {
    pub fn zeros(cfg: &ModelConfig) -> Self {
        let h = cfg.hidden;
        Weights {
            layers: (0..cfg.layers)
                .map(|l| LstmLayer {
                    w: Array2::zeros((4 * h, cfg.layer_input(l) + h)),
                    b: Array1::zeros(4 * h),
                })
                .collect(),
            w_out: Array2::zeros((cfg.classes, h)),
            b_out: Array1::zeros(cfg.classes),
        }
    }

    /// Tensor names and shapes in serialization order.
    pub fn shapes(cfg: &ModelConfig) -> Vec<(String, Vec<usize>)> {
        let h = cfg.hidden;
        let mut out = Vec::new();
        for l in 0..cfg.layers {
            out.push((format!("lstm{l}.w"), vec![4 * h, cfg.layer_input(l) + h]));
            out.push((format!("lstm{l}.b"), vec![4 * h]));
        }
        out.push(("dense.w".into(), vec![cfg.classes, h]));
        out.push(("dense.b".into(), vec![cfg.classes]));
        out
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = Vec::new();
        for l in &self.layers {
            v.push(l.w.as_slice().expect("standard layout"));
            v.push(l.b.as_slice().expect("standard layout"));
        }
        v.push(self.w_out.as_slice().expect("standard layout"));
        v.push(self.b_out.as_slice().expect("standard layout"));
        v
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = Vec::new();
        for l in &mut self.layers {
            v.push(l.w.as_slice_mut().expect("standard layout"));
            v.push(l.b.as_slice_mut().expect("standard layout"));
        }
        v.push(self.w_out.as_slice_mut().expect("standard layout"));
        v.push(self.b_out.as_slice_mut().expect("standard layout"));
        v
    }

    pub fn num_params(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.slices()
            .iter()
            .all(|s| s.iter().all(|x| x.is_finite()))
    }
}

/// Inverted-dropout masks, one `B x H` matrix per time step for each
/// layer boundary. Entries are 0 or 1/(1-p).
#[derive(Clone, Debug)]
pub struct DropoutMasks {
    pub masks: Vec<Vec<Array2<f64>>>,
}

impl DropoutMasks {
    pub fn sample<R: Rng>(cfg: &ModelConfig, batch: usize, rng: &mut R) -> Option<Self> {
        if cfg.dropout <= 0.0 || cfg.layers < 2 {
            return None;
        }
        let keep = 1.0 - cfg.dropout;
        let masks = (0..cfg.layers - 1)
            .map(|_| {
                (0..TOKENS_PER_BAR)
                    .map(|_| {
                        Array2::from_shape_simple_fn((batch, cfg.hidden), || {
                            if rng.random::<f64>() < keep {
                                1.0 / keep
                            } else {
                                0.0
                            }
                        })
                    })
                    .collect()
            })
            .collect();
        Some(DropoutMasks { masks })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChordClassifier {
    pub config: ModelConfig,
    pub weights: Weights,
}

struct LayerCache {
    concat: Vec<Array2<f64>>,
    /// Activated gates, `B x 4H`.
    gates: Vec<Array2<f64>>,
    c: Vec<Array2<f64>>,
    tanh_c: Vec<Array2<f64>>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn one_hot_steps(batch: &[Tokens], vocab: usize) -> Vec<Array2<f64>> {
    (0..TOKENS_PER_BAR)
        .map(|t| {
            let mut x = Array2::zeros((batch.len(), vocab));
            for (r, seq) in batch.iter().enumerate() {
                x[[r, seq[t] as usize]] = 1.0;
            }
            x
        })
        .collect()
}

fn layer_forward(
    layer: &LstmLayer,
    xs: &[Array2<f64>],
    hidden: usize,
) -> (Vec<Array2<f64>>, LayerCache) {
    let b = xs[0].nrows();
    let inp = xs[0].ncols();
    let h = hidden;
    let mut h_prev = Array2::<f64>::zeros((b, h));
    let mut c_prev = Array2::<f64>::zeros((b, h));
    let mut hs = Vec::with_capacity(xs.len());
    let mut cache = LayerCache {
        concat: Vec::with_capacity(xs.len()),
        gates: Vec::with_capacity(xs.len()),
        c: Vec::with_capacity(xs.len()),
        tanh_c: Vec::with_capacity(xs.len()),
    };
    for x in xs {
        let mut concat = Array2::zeros((b, inp + h));
        concat.slice_mut(s![.., ..inp]).assign(x);
        concat.slice_mut(s![.., inp..]).assign(&h_prev);
        let mut z = concat.dot(&layer.w.t());
        z += &layer.b;
        let mut c = Array2::zeros((b, h));
        let mut tc = Array2::zeros((b, h));
        let mut hn = Array2::zeros((b, h));
        for r in 0..b {
            for k in 0..h {
                let i = sigmoid(z[[r, k]]);
                let f = sigmoid(z[[r, h + k]]);
                let g = z[[r, 2 * h + k]].tanh();
                let o = sigmoid(z[[r, 3 * h + k]]);
                z[[r, k]] = i;
                z[[r, h + k]] = f;
                z[[r, 2 * h + k]] = g;
                z[[r, 3 * h + k]] = o;
                let cv = f * c_prev[[r, k]] + i * g;
                let t = cv.tanh();
                c[[r, k]] = cv;
                tc[[r, k]] = t;
                hn[[r, k]] = o * t;
            }
        }
        cache.concat.push(concat);
        cache.gates.push(z);
        cache.c.push(c.clone());
        cache.tanh_c.push(tc);
        hs.push(hn.clone());
        h_prev = hn;
        c_prev = c;
    }
    (hs, cache)
}

/// Backpropagate through one layer. Accumulates into `grad` and returns
/// the gradient with respect to each input step.
fn layer_backward(
    layer: &LstmLayer,
    cache: &LayerCache,
    dh_ext: &[Array2<f64>],
    grad: &mut LstmLayer,
    hidden: usize,
) -> Vec<Array2<f64>> {
    let steps = cache.concat.len();
    let b = cache.concat[0].nrows();
    let inp = cache.concat[0].ncols() - hidden;
    let h = hidden;
    let mut dh_next = Array2::<f64>::zeros((b, h));
    let mut dc_next = Array2::<f64>::zeros((b, h));
    let mut dxs = vec![Array2::<f64>::zeros((0, 0)); steps];
    for t in (0..steps).rev() {
        let gates = &cache.gates[t];
        let tc = &cache.tanh_c[t];
        let mut dz = Array2::<f64>::zeros((b, 4 * h));
        for r in 0..b {
            for k in 0..h {
                let i = gates[[r, k]];
                let f = gates[[r, h + k]];
                let g = gates[[r, 2 * h + k]];
                let o = gates[[r, 3 * h + k]];
                let c_prev = if t > 0 { cache.c[t - 1][[r, k]] } else { 0.0 };
                let dh = dh_ext[t][[r, k]] + dh_next[[r, k]];
                let tck = tc[[r, k]];
                let d_o = dh * tck;
                let dc = dh * o * (1.0 - tck * tck) + dc_next[[r, k]];
                let di = dc * g;
                let dg = dc * i;
                let df = dc * c_prev;
                dc_next[[r, k]] = dc * f;
                dz[[r, k]] = di * i * (1.0 - i);
                dz[[r, h + k]] = df * f * (1.0 - f);
                dz[[r, 2 * h + k]] = dg * (1.0 - g * g);
                dz[[r, 3 * h + k]] = d_o * o * (1.0 - o);
            }
        }
        grad.w += &dz.t().dot(&cache.concat[t]);
        grad.b += &dz.sum_axis(Axis(0));
        let dconcat = dz.dot(&layer.w);
        dxs[t] = dconcat.slice(s![.., ..inp]).to_owned();
        dh_next = dconcat.slice(s![.., inp..]).to_owned();
    }
    dxs
}

fn softmax_rows(logits: &mut Array2<f64>) {
    for mut row in logits.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
}

impl ChordClassifier {
    /// Uniform fan-in initialization with forget-gate bias 1.
    pub fn init<R: Rng>(config: ModelConfig, rng: &mut R) -> Self {
        let mut weights = Weights::zeros(&config);
        let h = config.hidden;
        for layer in &mut weights.layers {
            let bound = 1.0 / ((layer.w.ncols()) as f64).sqrt();
            layer.w.mapv_inplace(|_| rng.random_range(-bound..bound));
            layer.b.slice_mut(s![h..2 * h]).fill(1.0);
        }
        let bound = 1.0 / (h as f64).sqrt();
        weights
            .w_out
            .mapv_inplace(|_| rng.random_range(-bound..bound));
        ChordClassifier { config, weights }
    }

    pub fn seeded(config: ModelConfig, seed: u64) -> Self {
        Self::init(config, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn zeros(config: ModelConfig) -> Self {
        let weights = Weights::zeros(&config);
        ChordClassifier { config, weights }
    }

    fn top_hidden(
        &self,
        batch: &[Tokens],
        masks: Option<&DropoutMasks>,
    ) -> (Vec<Array2<f64>>, Vec<LayerCache>) {
        let h = self.config.hidden;
        let mut xs = one_hot_steps(batch, self.config.input);
        let mut caches = Vec::with_capacity(self.config.layers);
        for (l, layer) in self.weights.layers.iter().enumerate() {
            let (mut hs, cache) = layer_forward(layer, &xs, h);
            caches.push(cache);
            if let Some(m) = masks.and_then(|m| m.masks.get(l)) {
                for (hv, mv) in hs.iter_mut().zip(m) {
                    *hv *= mv;
                }
            }
            xs = hs;
        }
        (xs, caches)
    }

    /// Class probabilities for a batch, inference mode (no dropout).
    pub fn forward_batch(&self, batch: &[Tokens]) -> Array2<f64> {
        if batch.is_empty() {
            return Array2::zeros((0, self.config.classes));
        }
        let (hs, _) = self.top_hidden(batch, None);
        let last = hs.last().expect("sequence is nonempty");
        let mut logits = last.dot(&self.weights.w_out.t());
        logits += &self.weights.b_out;
        softmax_rows(&mut logits);
        logits
    }

    pub fn forward(&self, bar: &BarTokens) -> Vec<f64> {
        self.forward_batch(&[bar.tokens]).row(0).to_vec()
    }

    /// Most probable class; ties resolve to the lower index.
    pub fn predict(&self, tokens: &Tokens) -> ChordLabel {
        let p = self.forward_batch(&[*tokens]);
        ChordLabel::from_index(argmax(p.row(0).as_slice().expect("row")))
            .expect("class in vocabulary")
    }

    pub fn predict_batch(&self, batch: &[Tokens]) -> Vec<usize> {
        let p = self.forward_batch(batch);
        p.rows()
            .into_iter()
            .map(|r| argmax(r.as_slice().expect("row")))
            .collect()
    }

    /// Mean cross-entropy over the batch and its gradient.
    pub fn loss_and_grad(
        &self,
        batch: &[Tokens],
        labels: &[usize],
        masks: Option<&DropoutMasks>,
    ) -> (f64, Weights) {
        assert_eq!(batch.len(), labels.len());
        let n = batch.len() as f64;
        let h = self.config.hidden;
        let (hs, caches) = self.top_hidden(batch, masks);
        let last = hs.last().expect("sequence is nonempty");
        let mut probs = last.dot(&self.weights.w_out.t());
        probs += &self.weights.b_out;
        softmax_rows(&mut probs);

        let mut loss = 0.0;
        let mut dlogits = probs;
        for (r, &y) in labels.iter().enumerate() {
            loss -= dlogits[[r, y]].max(f64::MIN_POSITIVE).ln();
            dlogits[[r, y]] -= 1.0;
        }
        dlogits /= n;
        loss /= n;

        let mut grad = Weights::zeros(&self.config);
        grad.w_out = dlogits.t().dot(last);
        grad.b_out = dlogits.sum_axis(Axis(0));

        let steps = TOKENS_PER_BAR;
        let b = batch.len();
        let mut dh_ext: Vec<Array2<f64>> = (0..steps).map(|_| Array2::zeros((b, h))).collect();
        dh_ext[steps - 1] = dlogits.dot(&self.weights.w_out);
        for l in (0..self.config.layers).rev() {
            let dxs = layer_backward(
                &self.weights.layers[l],
                &caches[l],
                &dh_ext,
                &mut grad.layers[l],
                h,
            );
            if l == 0 {
                break;
            }
            dh_ext = dxs;
            if let Some(m) = masks.and_then(|m| m.masks.get(l - 1)) {
                for (d, mv) in dh_ext.iter_mut().zip(m) {
                    *d *= mv;
                }
            }
        }
        (loss, grad)
    }

    pub fn loss(&self, batch: &[Tokens], labels: &[usize], masks: Option<&DropoutMasks>) -> f64 {
        let (hs, _) = self.top_hidden(batch, masks);
        let last = hs.last().expect("sequence is nonempty");
        let mut probs = last.dot(&self.weights.w_out.t());
        probs += &self.weights.b_out;
        softmax_rows(&mut probs);
        -labels
            .iter()
            .enumerate()
            .map(|(r, &y)| probs[[r, y]].max(f64::MIN_POSITIVE).ln())
            .sum::<f64>()
            / batch.len() as f64
    }
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn zero_output_weights_give_uniform() {
        let mut m = ChordClassifier::seeded(ModelConfig::default(), 3);
        m.weights.w_out.fill(0.0);
        let p = m.forward(&BarTokens::from_tokens([1; 16]));
        for x in p {
            assert!((x - 1.0 / 7.0).abs() < 1e-15);
        }
    }

    #[test]
    fn initial_loss_is_near_ln7() {
        let m = ChordClassifier::seeded(ModelConfig::default(), 11);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let batch: Vec<Tokens> = (0..256)
            .map(|_| std::array::from_fn(|_| rng.random_range(0..13)))
            .collect();
        let labels: Vec<usize> = (0..256).map(|i| i % 7).collect();
        let l = m.loss(&batch, &labels, None);
        assert!((l - 7f64.ln()).abs() < 0.1, "{l}");
    }

    #[test]
    fn shapes_match_declared() {
        let cfg = ModelConfig::default();
        let w = Weights::zeros(&cfg);
        let declared = Weights::shapes(&cfg);
        let sizes: Vec<usize> = declared.iter().map(|(_, s)| s.iter().product()).collect();
        let actual: Vec<usize> = w.slices().iter().map(|s| s.len()).collect();
        assert_eq!(sizes, actual);
        assert_eq!(w.layers[0].w.dim(), (320, 93));
        assert_eq!(w.layers[1].w.dim(), (320, 160));
        assert_eq!(w.w_out.dim(), (7, 80));
    }

    #[test]
    fn forget_bias_starts_at_one() {
        let m = ChordClassifier::seeded(ModelConfig::small(4), 1);
        assert_eq!(
            m.weights.layers[0].b.to_vec(),
            [0., 0., 0., 0., 1., 1., 1., 1., 0., 0., 0., 0., 0., 0., 0., 0.]
        );
    }

    #[test]
    fn zero_model_output_bias_gradient_is_softmax_minus_onehot() {
        let m = ChordClassifier::zeros(ModelConfig::small(4));
        let (_, g) = m.loss_and_grad(&[[3; 16]], &[2], None);
        for k in 0..7 {
            let expected = 1.0 / 7.0 - if k == 2 { 1.0 } else { 0.0 };
            assert!((g.b_out[k] - expected).abs() < 1e-15);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn probabilities_sum_to_one(tokens in prop::array::uniform16(0u8..13), seed in 0u64..1000) {
            let m = ChordClassifier::seeded(ModelConfig::small(8), seed);
            let p = m.forward(&BarTokens::from_tokens(tokens));
            prop_assert_eq!(p.len(), 7);
            prop_assert!(p.iter().all(|&x| x >= 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
