//! Alternating adjoint-matching / corrector-matching training, the AS
//! baseline, the VP memoryless variant and the reference-sample warm start.

use std::collections::VecDeque;

use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::baseproc::{BaseDrift, BaseProcess, Control, Prior, SdeConfig};
use crate::diffnet::{Activation, AdamHyper, AdamState, Mlp, MlpSpec, RegressionBatch, Times};
use crate::energy::{EnergyModel, GradClipRule};
use crate::error::{Error, Result};
use crate::rng::{self, stream_id};
use crate::scalar::Scalar;

const TAG_INIT: u64 = 0x696e_6974;
const TAG_AM: u64 = 0x616d;
const TAG_CM: u64 = 0x636d;
const TAG_WARM: u64 = 0x7761_726d;

/// Largest time drawn by the warm-start objective. The per-sample loss grows like
/// `kappa_{1|t}^{-3/2}` near `t = 1`, so later draws swamp the gradient.
pub const WARM_START_T_MAX: f64 = 1.0 - 1e-2;

#[derive(Clone, Debug, PartialEq)]
pub struct Record<T> {
    pub x0: Vec<T>,
    pub x1: Vec<T>,
    pub target: Option<Vec<T>>,
}

/// Fixed-capacity FIFO of simulated endpoint pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplayBuffer<T> {
    capacity: usize,
    items: VecDeque<Record<T>>,
    inserted: u64,
    evicted: u64,
}

impl<T: Scalar> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "buffer capacity must be positive");
        Self {
            capacity,
            items: VecDeque::with_capacity(capacity),
            inserted: 0,
            evicted: 0,
        }
    }

    pub fn push(&mut self, rec: Record<T>) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
            self.evicted += 1;
        }
        self.items.push_back(rec);
        self.inserted += 1;
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn evicted(&self) -> u64 {
        self.evicted
    }

    /// Index 0 is the oldest record.
    pub fn get(&self, i: usize) -> &Record<T> {
        &self.items[i]
    }

    /// Uniform draw (with replacement) of `count` indices.
    pub fn sample_indices<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Vec<usize> {
        assert!(!self.is_empty(), "sampling from an empty buffer");
        (0..count).map(|_| rng.random_range(0..self.items.len())).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetConfig {
    pub hidden_dim: usize,
    pub n_layers: usize,
    pub t_embed_dim: usize,
    pub activation: Activation,
    /// Start the control from the zero function by zeroing its output layer.
    pub zero_init: bool,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 64,
            n_layers: 4,
            t_embed_dim: 64,
            activation: Activation::Gelu,
            zero_init: false,
        }
    }
}

impl NetConfig {
    pub fn spec(&self, dim: usize) -> MlpSpec {
        MlpSpec {
            input_dim: dim,
            hidden_dim: self.hidden_dim,
            n_layers: self.n_layers,
            t_embed_dim: self.t_embed_dim,
            activation: self.activation,
        }
    }
}

/// Loop counts and optimizer settings of a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Outer stages `K`.
    pub stages: usize,
    /// Adjoint-matching epochs per stage.
    pub am_epochs: usize,
    /// Corrector-matching epochs per stage.
    pub cm_epochs: usize,
    /// Simulated paths per epoch `N`.
    pub n_resample: usize,
    /// Gradient steps per epoch `L`.
    pub grad_steps: usize,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    /// Per-sample gradient norm cap; `None` disables clipping.
    pub alpha_max: Option<f64>,
    pub lr_control: f64,
    pub lr_corrector: f64,
    pub warm_start_steps: usize,
    pub sde: SdeConfig,
    pub control_net: NetConfig,
    pub corrector_net: NetConfig,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            stages: 5,
            am_epochs: 100,
            cm_epochs: 20,
            n_resample: 1000,
            grad_steps: 200,
            buffer_capacity: 10_000,
            batch_size: 512,
            alpha_max: None,
            lr_control: 1e-3,
            lr_corrector: 1e-3,
            warm_start_steps: 0,
            sde: SdeConfig::default(),
            control_net: NetConfig::default(),
            corrector_net: NetConfig::default(),
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_resample", self.n_resample),
            ("grad_steps", self.grad_steps),
            ("buffer_capacity", self.buffer_capacity),
            ("batch_size", self.batch_size),
            ("sde.n_steps", self.sde.n_steps),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if let Some(a) = self.alpha_max {
            if a.is_nan() || a <= 0.0 {
                return Err(Error::InvalidConfig("alpha_max must be positive".into()));
            }
        }
        for (name, lr) in [("lr_control", self.lr_control), ("lr_corrector", self.lr_corrector)] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        self.control_net.spec(1).validate()?;
        self.corrector_net.spec(1).validate()
    }

    fn clip<T: Scalar>(&self) -> GradClipRule<T> {
        match self.alpha_max {
            Some(a) if a.is_finite() => GradClipRule::new(T::lit(a)),
            _ => GradClipRule::unbounded(),
        }
    }
}

/// Terminal correction `h(x)` added to the energy gradient in the adjoint target.
#[derive(Clone, Debug, PartialEq)]
pub enum Corrector<T> {
    /// Learned `h(x) = v_phi(1, x)`.
    Net { net: Mlp<T>, opt: AdamState<T> },
    /// Fixed Gaussian score `h(x) = -(x - mean) / var`.
    Gaussian { mean: T, var: T },
}

impl<T: Scalar> Corrector<T> {
    pub fn eval(&self, x: ArrayView2<'_, T>) -> Array2<T> {
        match self {
            Corrector::Net { net, .. } => net.forward_batch(Times::Shared(T::one()), x),
            Corrector::Gaussian { mean, var } => x.mapv(|v| -(v - *mean) / *var),
        }
    }

    pub fn is_learned(&self) -> bool {
        matches!(self, Corrector::Net { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpochKind {
    Adjoint,
    Corrector,
    WarmStart,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub kind: EpochKind,
    pub stage: usize,
    pub epoch: usize,
    pub mean_loss: f64,
    pub buffer_len: usize,
}

/// Learned sampler: control `u(t, x) = sigma_t v_theta(t, x)` plus its corrector.
#[derive(Clone, Debug)]
pub struct TrainedSampler<T> {
    pub control: Mlp<T>,
    pub control_opt: AdamState<T>,
    pub corrector: Corrector<T>,
    pub base: BaseProcess<T>,
    pub energy: EnergyModel<T>,
    pub cfg: RunConfig,
    pub adj_buffer: ReplayBuffer<T>,
    pub crt_buffer: ReplayBuffer<T>,
    /// Completed stages.
    pub stage: usize,
    pub control_steps: u64,
    pub corrector_steps: u64,
    pub trace: Vec<EpochRecord>,
}

/// The learned control as an SDE drift.
pub struct NetControl<'a, T> {
    pub net: &'a Mlp<T>,
    pub base: &'a BaseProcess<T>,
}

impl<T: Scalar> Control<T> for NetControl<'_, T> {
    fn control(&self, t: T, x: ArrayView2<'_, T>) -> Array2<T> {
        let sigma = self.base.sigma(t);
        let mut v = self.net.forward_batch(Times::Shared(t), x);
        v.mapv_inplace(|a| sigma * a);
        v
    }
}

/// Per-sample adjoint-matching loss along both parametrizations:
/// `(lambda_t |u + sigma_t a|^2` with `lambda_t = 1/sigma_t^2`, `|v + a|^2)`.
pub fn am_loss_both_paths<T: Scalar>(net: &Mlp<T>, base: &BaseProcess<T>, t: T, x: &[T], a: &[T]) -> (T, T) {
    let v = net.forward(t, x);
    let sigma = base.sigma(t);
    let lambda = T::one() / (sigma * sigma);
    let mut u_path = T::zero();
    let mut v_path = T::zero();
    for (&vi, &ai) in v.iter().zip(a) {
        let ui = sigma * vi;
        u_path += (ui + sigma * ai) * (ui + sigma * ai);
        v_path += (vi + ai) * (vi + ai);
    }
    (lambda * u_path, v_path)
}

impl<T: Scalar> TrainedSampler<T> {
    /// Fresh control net and the given corrector; a `None` corrector means a
    /// learned net initialized to the zero function.
    pub fn new(base: BaseProcess<T>, energy: EnergyModel<T>, cfg: RunConfig, corrector: Option<Corrector<T>>) -> Result<Self> {
        cfg.validate()?;
        if energy.dim() != base.dim {
            return Err(Error::SizeMismatch(format!(
                "energy dimension {} vs base process dimension {}",
                energy.dim(),
                base.dim
            )));
        }
        let dim = base.dim;
        let mut init_rng = rng::stream(cfg.seed, stream_id(&[TAG_INIT, 0]));
        let mut control = Mlp::init(cfg.control_net.spec(dim), &mut init_rng)?;
        if cfg.control_net.zero_init {
            control.zero_output_layer();
        }
        let control_opt = AdamState::new(control.n_params(), AdamHyper::with_lr(cfg.lr_control));
        let corrector = match corrector {
            Some(c) => c,
            None => {
                let mut r = rng::stream(cfg.seed, stream_id(&[TAG_INIT, 1]));
                let mut net = Mlp::init(cfg.corrector_net.spec(dim), &mut r)?;
                net.zero_output_layer();
                let opt = AdamState::new(net.n_params(), AdamHyper::with_lr(cfg.lr_corrector));
                Corrector::Net { net, opt }
            }
        };
        Ok(Self {
            control,
            control_opt,
            corrector,
            base,
            energy,
            adj_buffer: ReplayBuffer::new(cfg.buffer_capacity),
            crt_buffer: ReplayBuffer::new(cfg.buffer_capacity),
            cfg,
            stage: 0,
            control_steps: 0,
            corrector_steps: 0,
            trace: Vec::new(),
        })
    }

    /// Rebuilds a sampler around restored networks. Replay buffers start empty.
    pub fn from_parts(
        base: BaseProcess<T>,
        energy: EnergyModel<T>,
        cfg: RunConfig,
        control: Mlp<T>,
        control_opt: AdamState<T>,
        corrector: Corrector<T>,
    ) -> Result<Self> {
        let mut s = Self::new(base, energy, cfg, Some(corrector))?;
        if control.spec.input_dim != s.dim() || control_opt.m.len() != control.n_params() {
            return Err(Error::SizeMismatch("restored control does not fit the base process".into()));
        }
        if let Corrector::Net { net, .. } = &s.corrector {
            if net.spec.input_dim != s.dim() {
                return Err(Error::SizeMismatch("restored corrector does not fit the base process".into()));
            }
        }
        s.control = control;
        s.control_opt = control_opt;
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.base.dim
    }

    /// Seed-derived stream reserved for the warm start.
    pub fn warm_start_rng(&self) -> rng::SimRng {
        rng::stream(self.cfg.seed, stream_id(&[TAG_WARM]))
    }

    /// `u(t, x)` on a single state.
    pub fn control_at(&self, t: T, x: &[T]) -> Vec<T> {
        let s = self.base.sigma(t);
        self.control.forward(t, x).into_iter().map(|v| s * v).collect()
    }

    /// `h(x)` on a single state.
    pub fn corrector_at(&self, x: &[T]) -> Vec<T> {
        let xs = ArrayView2::from_shape((1, x.len()), x).expect("row vector");
        self.corrector.eval(xs).into_raw_vec_and_offset().0
    }

    pub fn sample<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Result<Array2<T>> {
        Ok(self.rollout(rng, count)?.1)
    }

    fn rollout<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Result<(Array2<T>, Array2<T>)> {
        let ctrl = NetControl {
            net: &self.control,
            base: &self.base,
        };
        let sde = SdeConfig {
            record_trajectory: false,
            ..self.cfg.sde
        };
        let out = self.base.simulate(&ctrl, &sde, rng, count)?;
        Ok((out.x0, out.x1))
    }

    /// Adjoint targets `a = clip(∇E(x1)) + h(x1)` for a batch of terminal states.
    pub fn adjoint_targets(&self, x1: ArrayView2<'_, T>) -> Result<Array2<T>> {
        let mut g = self.energy.grad_batch(x1)?;
        let rule = self.cfg.clip::<T>();
        for mut row in g.axis_iter_mut(Axis(0)) {
            rule.apply(row.as_slice_mut().expect("contiguous"));
        }
        g += &self.corrector.eval(x1);
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("adjoint target".into()));
        }
        Ok(g)
    }

    /// One adjoint-matching epoch with the corrector frozen. On error the
    /// sampler is left exactly as it was before the call.
    pub fn am_epoch<R: Rng + ?Sized>(&mut self, rng: &mut R, epoch: usize) -> Result<f64> {
        let saved = (self.control.clone(), self.control_opt.clone(), self.adj_buffer.clone(), self.control_steps);
        let res = self.am_epoch_inner(rng, epoch);
        if res.is_err() {
            (self.control, self.control_opt, self.adj_buffer, self.control_steps) = saved;
        }
        res
    }

    fn am_epoch_inner<R: Rng + ?Sized>(&mut self, rng: &mut R, epoch: usize) -> Result<f64> {
        let (x0, x1) = self.rollout(rng, self.cfg.n_resample)?;
        let a = self.adjoint_targets(x1.view())?;
        for i in 0..x0.nrows() {
            self.adj_buffer.push(Record {
                x0: x0.row(i).to_vec(),
                x1: x1.row(i).to_vec(),
                target: Some(a.row(i).to_vec()),
            });
        }
        let vp = self.base.drift == BaseDrift::Vp;
        let mut total = 0.0;
        for _ in 0..self.cfg.grad_steps {
            let batch = self.bridge_batch(rng, |base, t, rec, target| {
                let a = rec.target.as_ref().expect("adjoint record");
                // VP targets are attenuated by kappa_t = exp(-½∫_t^1 beta)
                let scale = if vp { base.vp_coeffs(t).0 } else { T::one() };
                for (o, &ai) in target.iter_mut().zip(a) {
                    *o = -scale * ai;
                }
                T::one()
            });
            total += self.control_step(&batch)?;
        }
        let mean = total / self.cfg.grad_steps as f64;
        self.trace.push(EpochRecord {
            kind: EpochKind::Adjoint,
            stage: self.stage,
            epoch,
            mean_loss: mean,
            buffer_len: self.adj_buffer.len(),
        });
        Ok(mean)
    }

    /// Builds a regression batch on bridge points `X_t ~ p_base(.|X0, X1)`, `t ~ U[0,1]`.
    /// `fill` writes the target and returns the weight.
    fn bridge_batch<R, F>(&self, rng: &mut R, fill: F) -> RegressionBatch<T>
    where
        R: Rng + ?Sized,
        F: Fn(&BaseProcess<T>, T, &Record<T>, &mut [T]) -> T,
    {
        let b = self.cfg.batch_size;
        let d = self.dim();
        let buf = &self.adj_buffer;
        let idx = buf.sample_indices(rng, b);
        let mut x = Array2::zeros((b, d));
        let mut target = Array2::zeros((b, d));
        let mut t = Vec::with_capacity(b);
        let mut weight = Vec::with_capacity(b);
        for (r, &i) in idx.iter().enumerate() {
            let rec = buf.get(i);
            let ti = rng::uniform::<T, _>(rng);
            let mut xr = x.row_mut(r);
            self.base.bridge_sample_into(&rec.x0, &rec.x1, ti, rng, xr.as_slice_mut().expect("contiguous"));
            let mut tr = target.row_mut(r);
            weight.push(fill(&self.base, ti, rec, tr.as_slice_mut().expect("contiguous")));
            t.push(ti);
        }
        RegressionBatch { t, x, target, weight }
    }

    fn control_step(&mut self, batch: &RegressionBatch<T>) -> Result<f64> {
        let (loss, grad) = self.control.loss_and_grad(batch);
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("control loss {:e}", loss.as_f64())));
        }
        self.control_opt.step(&mut self.control.params.values, &grad);
        self.control_steps += 1;
        Ok(loss.as_f64())
    }

    /// One corrector-matching epoch with the control frozen.
    pub fn cm_epoch<R: Rng + ?Sized>(&mut self, rng: &mut R, epoch: usize) -> Result<f64> {
        if !self.corrector.is_learned() {
            return Err(Error::InvalidConfig("corrector matching needs a learned corrector".into()));
        }
        if self.base.drift != BaseDrift::Zero {
            return Err(Error::UnsupportedBase("corrector matching requires a zero base drift".into()));
        }
        let saved = (self.corrector.clone(), self.crt_buffer.clone(), self.corrector_steps);
        let res = self.cm_epoch_inner(rng, epoch);
        if res.is_err() {
            (self.corrector, self.crt_buffer, self.corrector_steps) = saved;
        }
        res
    }

    fn cm_epoch_inner<R: Rng + ?Sized>(&mut self, rng: &mut R, epoch: usize) -> Result<f64> {
        let (x0, x1) = self.rollout(rng, self.cfg.n_resample)?;
        for i in 0..x0.nrows() {
            self.crt_buffer.push(Record {
                x0: x0.row(i).to_vec(),
                x1: x1.row(i).to_vec(),
                target: None,
            });
        }
        let b = self.cfg.batch_size;
        let d = self.dim();
        let mut total = 0.0;
        for _ in 0..self.cfg.grad_steps {
            let idx = self.crt_buffer.sample_indices(rng, b);
            let mut x = Array2::zeros((b, d));
            let mut target = Array2::zeros((b, d));
            for (r, &i) in idx.iter().enumerate() {
                let rec = self.crt_buffer.get(i);
                x.row_mut(r).assign(&ndarray::aview1(&rec.x1));
                let s = self.base.base_score(&rec.x0, &rec.x1)?;
                target.row_mut(r).assign(&ndarray::aview1(&s));
            }
            let batch = RegressionBatch {
                t: vec![T::one(); b],
                x,
                target,
                weight: vec![T::one(); b],
            };
            let Corrector::Net { net, opt } = &mut self.corrector else {
                unreachable!("checked by cm_epoch")
            };
            let (loss, grad) = net.loss_and_grad(&batch);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite(format!("corrector loss {:e}", loss.as_f64())));
            }
            opt.step(&mut net.params.values, &grad);
            self.corrector_steps += 1;
            total += loss.as_f64();
        }
        let mean = total / self.cfg.grad_steps as f64;
        self.trace.push(EpochRecord {
            kind: EpochKind::Corrector,
            stage: self.stage,
            epoch,
            mean_loss: mean,
            buffer_len: self.crt_buffer.len(),
        });
        Ok(mean)
    }

    /// Runs the configured stages from the current stage onward. `on_stage`
    /// is called after each completed stage.
    pub fn run_stages<F>(&mut self, mut on_stage: F) -> Result<()>
    where
        F: FnMut(&Self) -> Result<()>,
    {
        while self.stage < self.cfg.stages {
            let k = self.stage as u64;
            for m in 0..self.cfg.am_epochs {
                let mut r = rng::stream(self.cfg.seed, stream_id(&[TAG_AM, k, m as u64]));
                self.am_epoch(&mut r, m)?;
            }
            if self.corrector.is_learned() {
                for m in 0..self.cfg.cm_epochs {
                    let mut r = rng::stream(self.cfg.seed, stream_id(&[TAG_CM, k, m as u64]));
                    self.cm_epoch(&mut r, m)?;
                }
            }
            self.stage += 1;
            on_stage(self)?;
        }
        Ok(())
    }

    /// Regresses the control onto the bridge drift towards reference samples:
    /// `lambda~ |u(t, X_t) - (sigma_t / kappa_{1|t})(X1 - X_t)|^2`,
    /// `lambda~ = sqrt(sigma_t / kappa_{1|t})`, `X0 ~ prior`, `X1` uniform over `reference`.
    pub fn warm_start<R: Rng + ?Sized>(&mut self, reference: ArrayView2<'_, T>, steps: usize, rng: &mut R) -> Result<f64> {
        if reference.nrows() == 0 {
            return Err(Error::EmptyReference);
        }
        if reference.ncols() != self.dim() {
            return Err(Error::SizeMismatch(format!(
                "reference has {} columns, expected {}",
                reference.ncols(),
                self.dim()
            )));
        }
        if self.base.drift != BaseDrift::Zero {
            return Err(Error::UnsupportedBase("warm start requires a zero base drift".into()));
        }
        let saved = (self.control.clone(), self.control_opt.clone(), self.control_steps);
        let res = self.warm_start_inner(reference, steps, rng);
        if res.is_err() {
            (self.control, self.control_opt, self.control_steps) = saved;
        }
        res
    }

    fn warm_start_inner<R: Rng + ?Sized>(&mut self, reference: ArrayView2<'_, T>, steps: usize, rng: &mut R) -> Result<f64> {
        let b = self.cfg.batch_size;
        let d = self.dim();
        let t_max = T::lit(WARM_START_T_MAX);
        let mut total = 0.0;
        for _ in 0..steps {
            let x0 = self.base.sample_prior(rng, b);
            let mut x = Array2::zeros((b, d));
            let mut target = Array2::zeros((b, d));
            let mut t = Vec::with_capacity(b);
            let mut weight = Vec::with_capacity(b);
            for r in 0..b {
                let j = rng.random_range(0..reference.nrows());
                let mut x1 = reference.row(j).to_vec();
                if let Some((n, k)) = self.base.zcom {
                    crate::energy::zcom_project_in_place(&mut x1, n, k);
                }
                let ti = rng::uniform::<T, _>(rng).min(t_max);
                let x0r = x0.row(r).to_vec();
                let mut xr = x.row_mut(r);
                let xs = xr.as_slice_mut().expect("contiguous");
                self.base.bridge_sample_into(&x0r, &x1, ti, rng, xs);
                let sigma = self.base.sigma(ti);
                let k1t = self.base.kappa(ti, T::one());
                for c in 0..d {
                    target[[r, c]] = (x1[c] - xs[c]) / k1t;
                }
                // lambda~ |sigma v - sigma tgt|^2 = lambda~ sigma^2 |v - tgt|^2
                weight.push((sigma / k1t).sqrt() * sigma * sigma);
                t.push(ti);
            }
            let batch = RegressionBatch { t, x, target, weight };
            total += self.control_step(&batch)?;
        }
        let mean = if steps > 0 { total / steps as f64 } else { 0.0 };
        if steps > 0 {
            self.trace.push(EpochRecord {
                kind: EpochKind::WarmStart,
                stage: self.stage,
                epoch: 0,
                mean_loss: mean,
                buffer_len: 0,
            });
        }
        Ok(mean)
    }
}

/// Full alternating run: corrector initialized to the zero function, then `K`
/// stages of adjoint and corrector matching.
pub fn run_asbs<T: Scalar, F>(base: BaseProcess<T>, energy: EnergyModel<T>, cfg: RunConfig, on_stage: F) -> Result<TrainedSampler<T>>
where
    F: FnMut(&TrainedSampler<T>) -> Result<()>,
{
    if base.drift != BaseDrift::Zero {
        return Err(Error::UnsupportedBase("the alternating scheme requires a zero base drift".into()));
    }
    let mut s = TrainedSampler::new(base, energy, cfg, None)?;
    s.run_stages(on_stage)?;
    Ok(s)
}

/// Adjoint Sampling: Dirac prior, analytic corrector `h(x) = -x / kappa_{1|0}`, adjoint epochs only.
pub fn run_as_baseline<T: Scalar, F>(base: BaseProcess<T>, energy: EnergyModel<T>, cfg: RunConfig, on_stage: F) -> Result<TrainedSampler<T>>
where
    F: FnMut(&TrainedSampler<T>) -> Result<()>,
{
    let mut s = as_baseline_sampler(base, energy, cfg)?;
    s.run_stages(on_stage)?;
    Ok(s)
}

/// Untrained AS sampler; `run_as_baseline` without the stages.
pub fn as_baseline_sampler<T: Scalar>(base: BaseProcess<T>, energy: EnergyModel<T>, cfg: RunConfig) -> Result<TrainedSampler<T>> {
    let Prior::Dirac { point } = base.prior else {
        return Err(Error::InvalidConfig("the AS baseline requires a Dirac prior".into()));
    };
    if base.drift != BaseDrift::Zero {
        return Err(Error::UnsupportedBase("the AS baseline requires a zero base drift".into()));
    }
    let corrector = Corrector::Gaussian {
        mean: point,
        var: base.kappa(T::zero(), T::one()),
    };
    TrainedSampler::new(base, energy, cfg, Some(corrector))
}

/// Adjoint matching under the memoryless VP process with a standard normal
/// prior; the terminal score of `p_base_1 = N(0, I)` is analytic.
pub fn run_memoryless_demo<T: Scalar, F>(base: BaseProcess<T>, energy: EnergyModel<T>, cfg: RunConfig, on_stage: F) -> Result<TrainedSampler<T>>
where
    F: FnMut(&TrainedSampler<T>) -> Result<()>,
{
    if base.drift != BaseDrift::Vp {
        return Err(Error::UnsupportedBase("the memoryless demo requires the VP process".into()));
    }
    match base.prior {
        Prior::Gaussian { mean, stdev } if mean == T::zero() && stdev == T::one() => {}
        _ => return Err(Error::InvalidConfig("the memoryless demo requires a N(0, I) prior".into())),
    }
    let corrector = Corrector::Gaussian {
        mean: T::zero(),
        var: T::one(),
    };
    let mut s = TrainedSampler::new(base, energy, cfg, Some(corrector))?;
    s.run_stages(on_stage)?;
    Ok(s)
}
