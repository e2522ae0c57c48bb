//! Small fully-connected network `v(t, x)` with hand-written backprop.
//!
//! Topology: `layer_n ∘ … ∘ layer_1 ∘ (x_embed(x) + t_embed(t))`, where the
//! embeddings are affine maps to the hidden width (the time embedding acts on
//! sinusoidal features of `t`), layers `1..n-1` are affine + activation, and
//! layer `n` is affine back to the input dimension.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Shortest and longest periods of the sinusoidal time features.
pub const MIN_PERIOD: f64 = 1e-3;
pub const MAX_PERIOD: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Gelu,
    Silu,
}

/// `tanh` through a single `exp`; saturates correctly at both ends.
#[inline]
fn fast_tanh<T: Scalar>(y: T) -> T {
    T::one() - T::lit(2.0) / (T::one() + (y + y).exp())
}

impl Activation {
    #[inline]
    fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            // tanh approximation
            Activation::Gelu => {
                let c = T::lit(0.797_884_560_802_865_4);
                let inner = c * (x + T::lit(0.044715) * x * x * x);
                T::lit(0.5) * x * (T::one() + fast_tanh(inner))
            }
            Activation::Silu => x / (T::one() + (-x).exp()),
        }
    }

    /// Value and derivative at `x`.
    #[inline]
    fn apply_with_derivative<T: Scalar>(self, x: T) -> (T, T) {
        match self {
            Activation::Gelu => {
                let c = T::lit(0.797_884_560_802_865_4);
                let a = T::lit(0.044715);
                let th = fast_tanh(c * (x + a * x * x * x));
                let half = T::lit(0.5);
                let d = half * (T::one() + th) + half * x * (T::one() - th * th) * c * (T::one() + T::lit(3.0) * a * x * x);
                (half * x * (T::one() + th), d)
            }
            Activation::Silu => {
                let s = T::one() / (T::one() + (-x).exp());
                (x * s, s * (T::one() + x * (T::one() - s)))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub n_layers: usize,
    /// Number of sinusoidal frequencies; the time embedding sees `2 * t_embed_dim` features.
    pub t_embed_dim: usize,
    #[serde(default)]
    pub activation: Activation,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden_dim: usize, n_layers: usize) -> Self {
        Self {
            input_dim,
            hidden_dim,
            n_layers,
            t_embed_dim: 64,
            activation: Activation::Gelu,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_layers < 2 {
            return Err(Error::InvalidConfig(format!("n_layers must be >= 2, got {}", self.n_layers)));
        }
        if self.input_dim == 0 || self.hidden_dim == 0 || self.t_embed_dim == 0 {
            return Err(Error::InvalidConfig("network dimensions must be positive".into()));
        }
        Ok(())
    }

    /// Parameter blocks in storage order.
    pub fn layout(&self) -> Vec<LayoutEntry> {
        let (d, h) = (self.input_dim, self.hidden_dim);
        let mut blocks: Vec<(String, usize, usize)> = vec![
            ("x_embed.weight".into(), d, h),
            ("x_embed.bias".into(), 1, h),
            ("t_embed.weight".into(), 2 * self.t_embed_dim, h),
            ("t_embed.bias".into(), 1, h),
        ];
        for l in 1..self.n_layers {
            blocks.push((format!("layer_{l}.weight"), h, h));
            blocks.push((format!("layer_{l}.bias"), 1, h));
        }
        blocks.push((format!("layer_{}.weight", self.n_layers), h, d));
        blocks.push((format!("layer_{}.bias", self.n_layers), 1, d));
        let mut offset = 0;
        blocks
            .into_iter()
            .map(|(name, rows, cols)| {
                let e = LayoutEntry {
                    name,
                    offset,
                    rows,
                    cols,
                };
                offset += rows * cols;
                e
            })
            .collect()
    }

    pub fn n_params(&self) -> usize {
        self.layout().iter().map(|e| e.rows * e.cols).sum()
    }

    pub fn time_features<T: Scalar>(&self, t: T) -> Vec<T> {
        let mut out = vec![T::zero(); 2 * self.t_embed_dim];
        fill_time_features(&self.angular_frequencies(), t, &mut out);
        out
    }

    /// `2 pi / P_j` with periods spaced geometrically from `MAX_PERIOD` down to `MIN_PERIOD`.
    pub fn angular_frequencies<T: Scalar>(&self) -> Vec<T> {
        let f = self.t_embed_dim;
        (0..f)
            .map(|j| {
                let frac = if f > 1 { j as f64 / (f - 1) as f64 } else { 0.0 };
                let period = MAX_PERIOD * (MIN_PERIOD / MAX_PERIOD).powf(frac);
                T::lit(2.0 * std::f64::consts::PI / period)
            })
            .collect()
    }
}

fn fill_time_features<T: Scalar>(omega: &[T], t: T, out: &mut [T]) {
    for (j, &w) in omega.iter().enumerate() {
        let (s, c) = (w * t).sin_cos();
        out[2 * j] = s;
        out[2 * j + 1] = c;
    }
}

/// One weight or bias block inside the flat parameter vector. Weights are
/// stored row-major as `(fan_in, fan_out)`; biases as `(1, fan_out)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutEntry {
    pub name: String,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl LayoutEntry {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams<T> {
    pub values: Vec<T>,
    pub layout: Vec<LayoutEntry>,
}

impl<T: Scalar> MlpParams<T> {
    pub fn zeros(spec: &MlpSpec) -> Self {
        Self {
            values: vec![T::zero(); spec.n_params()],
            layout: spec.layout(),
        }
    }

    fn block(&self, idx: usize) -> ArrayView2<'_, T> {
        let e = &self.layout[idx];
        ArrayView2::from_shape((e.rows, e.cols), &self.values[e.range()]).expect("layout matches storage")
    }

    fn bias(&self, idx: usize) -> ArrayView1<'_, T> {
        let e = &self.layout[idx];
        ArrayView1::from(&self.values[e.range()])
    }
}

/// Per-element or shared time input for a batch.
#[derive(Clone, Copy, Debug)]
pub enum Times<'a, T> {
    Shared(T),
    PerSample(&'a [T]),
}

/// Training example set for a weighted squared-error regression.
#[derive(Clone, Debug)]
pub struct RegressionBatch<T> {
    pub t: Vec<T>,
    pub x: Array2<T>,
    pub target: Array2<T>,
    pub weight: Vec<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<T> {
    pub spec: MlpSpec,
    pub params: MlpParams<T>,
}

struct Cache<T> {
    x: Array2<T>,
    features: Option<Array2<T>>,
    /// Inputs to each affine layer: `h_0 = embed`, `h_l = act(pre_l)`.
    hidden: Vec<Array2<T>>,
    /// `act'(pre_l)`.
    slope: Vec<Array2<T>>,
}

impl<T: Scalar> Mlp<T> {
    pub fn zeros(spec: MlpSpec) -> Result<Self> {
        spec.validate()?;
        let params = MlpParams::zeros(&spec);
        Ok(Self { spec, params })
    }

    /// Uniform `±1/sqrt(fan_in)` initialization for every weight and bias.
    pub fn init<R: Rng + ?Sized>(spec: MlpSpec, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(spec)?;
        let layout = net.params.layout.clone();
        for (i, e) in layout.iter().enumerate() {
            // biases share the fan-in of the weight block right before them
            let fan_in = if e.name.ends_with(".bias") { layout[i - 1].rows } else { e.rows };
            let bound = 1.0 / (fan_in as f64).sqrt();
            for v in &mut net.params.values[e.range()] {
                *v = T::lit(bound * (2.0 * rng.random::<f64>() - 1.0));
            }
        }
        Ok(net)
    }

    /// Sets the last affine layer to zero so the network is the zero function.
    pub fn zero_output_layer(&mut self) {
        let n = self.params.layout.len();
        for e in &self.params.layout[n - 2..] {
            for v in &mut self.params.values[e.offset..e.offset + e.rows * e.cols] {
                *v = T::zero();
            }
        }
    }

    pub fn n_params(&self) -> usize {
        self.params.values.len()
    }

    pub fn forward(&self, t: T, x: &[T]) -> Vec<T> {
        let xs = ArrayView2::from_shape((1, x.len()), x).expect("row vector");
        self.forward_batch(Times::Shared(t), xs).into_raw_vec_and_offset().0
    }

    pub fn forward_batch(&self, t: Times<'_, T>, x: ArrayView2<'_, T>) -> Array2<T> {
        self.run(t, x, false).0
    }

    fn embed(&self, t: Times<'_, T>, x: ArrayView2<'_, T>) -> (Array2<T>, Option<Array2<T>>) {
        assert_eq!(x.ncols(), self.spec.input_dim, "input dimension");
        let mut h0 = x.dot(&self.params.block(0));
        h0 += &self.params.bias(1);
        let features = match t {
            Times::Shared(tv) => {
                let f = Array1::from(self.spec.time_features(tv));
                let mut emb = f.dot(&self.params.block(2));
                emb += &self.params.bias(3);
                h0 += &emb;
                None
            }
            Times::PerSample(ts) => {
                assert_eq!(ts.len(), x.nrows(), "one time per sample");
                let width = 2 * self.spec.t_embed_dim;
                let omega = self.spec.angular_frequencies::<T>();
                let mut feats = Array2::zeros((ts.len(), width));
                for (mut row, &tv) in feats.axis_iter_mut(Axis(0)).zip(ts) {
                    fill_time_features(&omega, tv, row.as_slice_mut().expect("contiguous"));
                }
                h0 += &feats.dot(&self.params.block(2));
                h0 += &self.params.bias(3);
                Some(feats)
            }
        };
        (h0, features)
    }

    fn run(&self, t: Times<'_, T>, x: ArrayView2<'_, T>, keep: bool) -> (Array2<T>, Option<Cache<T>>) {
        let (mut h, features) = self.embed(t, x);
        let act = self.spec.activation;
        let n = self.spec.n_layers;
        let mut hidden = Vec::new();
        let mut slope = Vec::new();
        for l in 1..n {
            let w = self.params.block(4 + 2 * (l - 1));
            let b = self.params.bias(5 + 2 * (l - 1));
            let mut p = h.dot(&w);
            p += &b;
            if keep {
                let mut d = Array2::zeros(p.raw_dim());
                ndarray::Zip::from(&mut p).and(&mut d).for_each(|v, dv| {
                    let (a, s) = act.apply_with_derivative(*v);
                    *v = a;
                    *dv = s;
                });
                hidden.push(h);
                slope.push(d);
            } else {
                p.mapv_inplace(|v| act.apply(v));
            }
            h = p;
        }
        let mut out = h.dot(&self.params.block(4 + 2 * (n - 1)));
        out += &self.params.bias(5 + 2 * (n - 1));
        let cache = keep.then(|| {
            hidden.push(h);
            Cache {
                x: x.to_owned(),
                features,
                hidden,
                slope,
            }
        });
        (out, cache)
    }

    /// Weighted mean squared error and its exact parameter gradient:
    /// `loss = mean_b w_b |v(t_b, x_b) - target_b|^2`.
    pub fn loss_and_grad(&self, batch: &RegressionBatch<T>) -> (T, Vec<T>) {
        let b = batch.x.nrows();
        assert!(b > 0, "empty batch");
        assert_eq!(batch.target.dim(), batch.x.dim());
        assert_eq!(batch.weight.len(), b);
        let (out, cache) = self.run(Times::PerSample(&batch.t), batch.x.view(), true);
        let cache = cache.expect("cache requested");
        let inv_b = T::one() / T::from_usize_lossy(b);
        let mut resid = out - &batch.target;
        let mut loss = T::zero();
        for (mut row, &w) in resid.axis_iter_mut(Axis(0)).zip(&batch.weight) {
            loss += w * row.iter().fold(T::zero(), |acc, &r| acc + r * r);
            let s = T::lit(2.0) * w * inv_b;
            row.mapv_inplace(|r| r * s);
        }
        (loss * inv_b, self.backward(cache, resid))
    }

    fn backward(&self, cache: Cache<T>, d_out: Array2<T>) -> Vec<T> {
        let n = self.spec.n_layers;
        let mut grad = vec![T::zero(); self.n_params()];
        let layout = &self.params.layout;

        let mut delta = d_out;
        // output layer
        let last = 4 + 2 * (n - 1);
        write_block(&mut grad, &layout[last], cache.hidden[n - 1].t().dot(&delta).view());
        write_bias(&mut grad, &layout[last + 1], &delta);
        let mut d_h = delta.dot(&self.params.block(last).t());

        for l in (1..n).rev() {
            let wi = 4 + 2 * (l - 1);
            delta = d_h;
            delta *= &cache.slope[l - 1];
            write_block(&mut grad, &layout[wi], cache.hidden[l - 1].t().dot(&delta).view());
            write_bias(&mut grad, &layout[wi + 1], &delta);
            d_h = delta.dot(&self.params.block(wi).t());
        }

        // embeddings share the gradient of h_0
        write_block(&mut grad, &layout[0], cache.x.t().dot(&d_h).view());
        write_bias(&mut grad, &layout[1], &d_h);
        let feats = cache.features.expect("training uses per-sample times");
        write_block(&mut grad, &layout[2], feats.t().dot(&d_h).view());
        write_bias(&mut grad, &layout[3], &d_h);
        grad
    }
}

fn write_block<T: Scalar>(grad: &mut [T], e: &LayoutEntry, g: ArrayView2<'_, T>) {
    let mut dst = ArrayViewMut2::from_shape((e.rows, e.cols), &mut grad[e.range()]).expect("layout");
    dst.assign(&g);
}

fn write_bias<T: Scalar>(grad: &mut [T], e: &LayoutEntry, delta: &Array2<T>) {
    let sums = delta.sum_axis(Axis(0));
    grad[e.range()].copy_from_slice(sums.as_slice().expect("contiguous"));
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamHyper {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub step: u64,
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub hyper: AdamHyper,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(n_params: usize, hyper: AdamHyper) -> Self {
        Self {
            step: 0,
            m: vec![T::zero(); n_params],
            v: vec![T::zero(); n_params],
            hyper,
        }
    }

    /// Bias-corrected Adam update applied in place.
    pub fn step(&mut self, params: &mut [T], grad: &[T]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        self.step += 1;
        let h = &self.hyper;
        let (b1, b2) = (T::lit(h.beta1), T::lit(h.beta2));
        let c1 = T::one() - T::lit(h.beta1.powi(self.step as i32));
        let c2 = T::one() - T::lit(h.beta2.powi(self.step as i32));
        let lr = T::lit(h.lr);
        let eps = T::lit(h.eps);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = b1 * self.m[i] + (T::one() - b1) * g;
            self.v[i] = b2 * self.v[i] + (T::one() - b2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

/// Copies row `i` of `m` into a fresh vector.
pub fn row_vec<T: Scalar>(m: &Array2<T>, i: usize) -> Vec<T> {
    m.slice(s![i, ..]).to_vec()
}
