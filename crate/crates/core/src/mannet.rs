//! The unfolded analog-precoder network.
//!
//! Each of the L layers mimics one projected-gradient step on the stacked
//! least-squares objective: with `u = -z_bar + sum_k Bbar[k] x`, the layer
//! computes `x_l = psi_t(w_{l,1} o x_{l-1} + w_{l,2} o u_{l-1})`. Only
//! same-index nodes are connected, so a layer is two element-wise products.
//! Training is unsupervised: the loss sums the log-weighted residuals of all
//! layers, and gradients are hand-derived reverse-mode (the topology is
//! fixed, no general autodiff needed).

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::channel::{optimal_digital_precoder, realization_rng, ChannelTensor, DigitalOptimal};
use crate::error::{Error, Result};
use crate::linalg::{CMat, RVec};
use crate::precoding::{
    derealify, ls_digital, random_unit_modulus, spectral_efficiency, sub_connected_project,
    unit_modulus_project, waterfilling_digital, AnalogPrecoder, BlockSparse, RealStack,
};
use crate::subnet::{dynamic_mapping, select_best_subcarrier, MappingMatrix, MappingMode,
    MaskVector};

pub mod adam;
pub mod model;

use adam::{Adam, AdamConfig};

/// RNG stream id for training; keeps training draws disjoint from data
/// generation substreams under one master seed.
const TRAIN_STREAM_BASE: u64 = 1 << 33;

/// Weights of one layer: `w1` gates the previous activation, `w2` gates the
/// gradient-direction input. Both have the analog stack length.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub w1: RVec,
    pub w2: RVec,
}

/// Unfolded network: per-layer weight pairs plus the activation parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct UnfoldedNet {
    n_tx: usize,
    n_rf: usize,
    t: f64,
    layers: Vec<LayerWeights>,
}

impl UnfoldedNet {
    /// Fresh network with weights drawn from Normal(0, 0.01).
    ///
    /// Rejects fewer than two layers: the first layer's loss weight
    /// `ln(1) = 0` would make a single-layer network untrainable.
    pub fn new(
        n_tx: usize,
        n_rf: usize,
        n_layers: usize,
        t: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if n_layers < 2 {
            return Err(Error::Config(
                "network needs at least 2 layers (layer weight ln(1) = 0)".into(),
            ));
        }
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::Config("activation parameter t must be positive".into()));
        }
        let len = 2 * n_tx * n_rf;
        let dist = Normal::new(0.0, 0.1).expect("valid normal");
        let layers = (0..n_layers)
            .map(|_| LayerWeights {
                w1: RVec::from_fn(len, |_, _| dist.sample(rng)),
                w2: RVec::from_fn(len, |_, _| dist.sample(rng)),
            })
            .collect();
        Ok(Self {
            n_tx,
            n_rf,
            t,
            layers,
        })
    }

    pub(crate) fn from_parts(
        n_tx: usize,
        n_rf: usize,
        t: f64,
        layers: Vec<LayerWeights>,
    ) -> Result<Self> {
        if layers.len() < 2 {
            return Err(Error::Format("model must have at least 2 layers".into()));
        }
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::Format("activation parameter must be positive".into()));
        }
        let len = 2 * n_tx * n_rf;
        for l in &layers {
            if l.w1.len() != len || l.w2.len() != len {
                return Err(Error::Format("weight vector length mismatch".into()));
            }
            if l.w1.iter().chain(l.w2.iter()).any(|v| !v.is_finite()) {
                return Err(Error::Format("non-finite weight in model".into()));
            }
        }
        Ok(Self {
            n_tx,
            n_rf,
            t,
            layers,
        })
    }

    pub fn n_tx(&self) -> usize {
        self.n_tx
    }

    pub fn n_rf(&self) -> usize {
        self.n_rf
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn layers(&self) -> &[LayerWeights] {
        &self.layers
    }

    /// Length of the real analog stack the network operates on.
    pub fn stack_len(&self) -> usize {
        2 * self.n_tx * self.n_rf
    }
}

/// Saturating activation: linear with slope `1/t` on `[-t, t]`, clamped to
/// `-1`/`1` outside, which keeps every activation in `[-1, 1]`.
pub fn psi(x: f64, t: f64) -> f64 {
    if x >= t {
        1.0
    } else if x <= -t {
        -1.0
    } else {
        x / t
    }
}

/// Derivative of [`psi`]: `1/t` strictly inside the linear region, zero
/// outside and at the kinks (subgradient convention).
pub fn psi_deriv(x: f64, t: f64) -> f64 {
    if x.abs() < t {
        1.0 / t
    } else {
        0.0
    }
}

/// Gradient-direction input `u = -z_bar + sum_k Bbar[k] x`, evaluated through
/// the compressed Gram matrices.
pub fn compute_u(x: &RVec, z_bar: &RVec, grams: &[CMat], n_tx: usize) -> Result<RVec> {
    if x.len() != z_bar.len() {
        return Err(Error::Dim("stack length mismatch".into()));
    }
    let mut u = -z_bar.clone();
    if let Some(first) = grams.first() {
        let n_rf = first.nrows();
        let mut total = CMat::zeros(n_rf, n_rf);
        for g in grams {
            if g.nrows() != n_rf || g.ncols() != n_rf {
                return Err(Error::Dim("gram matrix shape mismatch".into()));
            }
            total += g;
        }
        u += BlockSparse::gram_apply(&total, x, n_tx)?;
    }
    Ok(u)
}

/// Per-layer forward values retained for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// Activations `x_0 .. x_L` with `x_0 = 0`.
    pub x: Vec<RVec>,
    /// Pre-activations `x_hat_1 .. x_hat_L`.
    pub x_hat: Vec<RVec>,
    /// Raw gradient inputs `u_0 .. u_{L-1}` (before any masking).
    pub u: Vec<RVec>,
}

impl ForwardTrace {
    pub fn output(&self) -> &RVec {
        self.x.last().expect("trace has layers")
    }
}

/// Runs the network from `x_0 = 0`. With a mask, the gradient input is
/// gated (`c o u`) and so is every activation (`c o psi`), which pins masked
/// coordinates to exactly zero at every layer.
pub fn forward(
    net: &UnfoldedNet,
    z_bar: &RVec,
    grams: &[CMat],
    mask: Option<&MaskVector>,
) -> Result<ForwardTrace> {
    let len = net.stack_len();
    if z_bar.len() != len {
        return Err(Error::Dim(format!(
            "z_bar length {} does not match network stack {}",
            z_bar.len(),
            len
        )));
    }
    if let Some(m) = mask {
        if m.len() != len {
            return Err(Error::Dim("mask length mismatch".into()));
        }
    }
    let mut x = Vec::with_capacity(net.n_layers() + 1);
    let mut x_hat = Vec::with_capacity(net.n_layers());
    let mut u_all = Vec::with_capacity(net.n_layers());
    x.push(RVec::zeros(len));
    for layer in &net.layers {
        let x_prev = x.last().unwrap();
        let u = compute_u(x_prev, z_bar, grams, net.n_tx)?;
        let u_in = match mask {
            Some(m) => u.component_mul(m.values()),
            None => u.clone(),
        };
        let mut pre = layer.w1.component_mul(x_prev);
        pre += layer.w2.component_mul(&u_in);
        let mut act = pre.map(|v| psi(v, net.t));
        if let Some(m) = mask {
            act.component_mul_assign(m.values());
        }
        u_all.push(u);
        x_hat.push(pre);
        x.push(act);
    }
    Ok(ForwardTrace {
        x,
        x_hat,
        u: u_all,
    })
}

/// Log-weighted multi-layer loss of one realization:
/// `sum_l ln(l) (1 / (K b)) sum_k ||z[k] - B[k] x_l||^2` with `b` the batch
/// size. Summing over a batch's realizations yields the batch loss.
pub fn trace_loss(trace: &ForwardTrace, stack: &RealStack, batch_size: usize) -> Result<f64> {
    let k = stack.n_subcarriers() as f64;
    let norm = 1.0 / (k * batch_size as f64);
    let mut total = 0.0;
    for (l, x_l) in trace.x.iter().enumerate().skip(1) {
        let weight = (l as f64).ln();
        if weight == 0.0 {
            continue;
        }
        total += weight * norm * stack.residual_at(x_l)?;
    }
    Ok(total)
}

/// Reverse-mode gradients of [`trace_loss`] for every weight vector.
///
/// Both paths are propagated: the direct appearance of `x_l` in its layer's
/// residual term and the recurrent path `x_l -> u_l -> x_{l+1}`. The
/// activation derivative is zero outside (and at the edge of) the linear
/// region.
pub fn backward(
    trace: &ForwardTrace,
    net: &UnfoldedNet,
    stack: &RealStack,
    batch_size: usize,
    mask: Option<&MaskVector>,
) -> Result<Vec<LayerWeights>> {
    let l_count = net.n_layers();
    let len = net.stack_len();
    let k = stack.n_subcarriers() as f64;
    let norm = 1.0 / (k * batch_size as f64);

    let mut gram_total = CMat::zeros(net.n_rf, net.n_rf);
    for g in &stack.grams {
        gram_total += g;
    }

    let mut grads: Vec<LayerWeights> = (0..l_count)
        .map(|_| LayerWeights {
            w1: RVec::zeros(len),
            w2: RVec::zeros(len),
        })
        .collect();

    let mut carry = RVec::zeros(len);
    for l in (1..=l_count).rev() {
        // Residual-term gradient at x_l: 2 c_l (sum_k Bbar x_l - z_bar).
        let c_l = (l as f64).ln() * norm;
        let mut lambda = carry;
        if c_l != 0.0 {
            let u_at_xl = compute_u(&trace.x[l], &stack.z_bar, &stack.grams, net.n_tx)?;
            lambda += u_at_xl * (2.0 * c_l);
        }
        if let Some(m) = mask {
            lambda.component_mul_assign(m.values());
        }
        let s = RVec::from_fn(len, |i, _| {
            psi_deriv(trace.x_hat[l - 1][i], net.t) * lambda[i]
        });
        let u_in = match mask {
            Some(m) => trace.u[l - 1].component_mul(m.values()),
            None => trace.u[l - 1].clone(),
        };
        grads[l - 1].w1 = s.component_mul(&trace.x[l - 1]);
        grads[l - 1].w2 = s.component_mul(&u_in);

        // Carry into x_{l-1}: through the direct gate and through u.
        let mut through_u = net.layers[l - 1].w2.component_mul(&s);
        if let Some(m) = mask {
            through_u.component_mul_assign(m.values());
        }
        let mut next = net.layers[l - 1].w1.component_mul(&s);
        next += BlockSparse::gram_apply(&gram_total, &through_u, net.n_tx)?;
        carry = next;
    }
    Ok(grads)
}

/// Variant marker for the two trainable networks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetKind {
    FullyConnected,
    SubConnected,
}

/// Unsupervised training hyperparameters.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Inner iterations per batch: each rebuilds the stacks from the current
    /// precoders, steps the optimizer, and refreshes the precoders.
    pub inner_iters: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub n_layers: usize,
    pub activation_t: f64,
    /// SNR context used to build the training targets.
    pub rho: f64,
    pub noise_power: f64,
}

impl TrainConfig {
    pub fn desk_default() -> Self {
        Self {
            epochs: 30,
            batch_size: 20,
            inner_iters: 3,
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 1,
            n_layers: 4,
            activation_t: 0.5,
            rho: 10.0,
            noise_power: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.epochs >= 1
            && self.batch_size >= 1
            && self.inner_iters >= 1
            && self.learning_rate > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0
            && self.activation_t > 0.0
            && self.rho > 0.0
            && self.noise_power > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config("training parameters must be positive".into()))
        }
    }
}

/// One logged loss value; the schedule is epochs x batches x inner
/// iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct LossRecord {
    pub epoch: usize,
    pub batch: usize,
    pub inner_iter: usize,
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub net: UnfoldedNet,
    pub loss_log: Vec<LossRecord>,
}

impl TrainResult {
    /// Mean of the losses recorded during one epoch (all inner iterations).
    pub fn epoch_mean_loss(&self, epoch: usize) -> Option<f64> {
        let vals: Vec<f64> = self
            .loss_log
            .iter()
            .filter(|r| r.epoch == epoch)
            .map(|r| r.loss)
            .collect();
        if vals.is_empty() {
            None
        } else {
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    }

    pub fn n_epochs(&self) -> usize {
        self.loss_log.iter().map(|r| r.epoch).max().unwrap_or(0)
    }
}

/// Unsupervised training of the fully connected network.
pub fn train(dataset: &[ChannelTensor], config: &TrainConfig) -> Result<TrainResult> {
    train_with_mode(dataset, config, NetKind::FullyConnected)
}

/// Shared training loop. Per batch: one random unit-modulus analog starting
/// point, per-realization digital precoders by least squares, then
/// `inner_iters` rounds of forward / loss / backward / optimizer step /
/// precoder refresh. The sub-connected variant gates the network with the
/// mask of the batch's first realization.
pub fn train_with_mode(
    dataset: &[ChannelTensor],
    config: &TrainConfig,
    kind: NetKind,
) -> Result<TrainResult> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let dims = dataset[0].dims.clone();
    for ch in dataset {
        if ch.dims != dims {
            return Err(Error::Dim("training set mixes dimensions".into()));
        }
    }
    let n_s = dims.n_streams;
    let f_opt: Vec<DigitalOptimal> = dataset
        .iter()
        .map(|ch| optimal_digital_precoder(ch, config.rho, config.noise_power, n_s))
        .collect::<Result<_>>()?;

    let stream = TRAIN_STREAM_BASE
        + match kind {
            NetKind::FullyConnected => 0,
            NetKind::SubConnected => 1,
        };
    let mut rng = realization_rng(config.seed, stream);
    let mut net = UnfoldedNet::new(dims.n_tx, dims.n_rf, config.n_layers, config.activation_t, &mut rng)?;
    let shapes = vec![net.stack_len(); 2 * net.n_layers()];
    let mut adam = Adam::new(
        AdamConfig {
            learning_rate: config.learning_rate,
            beta1: config.beta1,
            beta2: config.beta2,
            epsilon: config.epsilon,
        },
        &shapes,
    );

    let mut loss_log = Vec::new();
    let mut indices: Vec<usize> = (0..dataset.len()).collect();
    for epoch in 1..=config.epochs {
        shuffle(&mut indices, &mut rng);
        let chunks: Vec<Vec<usize>> = indices
            .chunks(config.batch_size)
            .map(|c| c.to_vec())
            .collect();
        for (batch_idx, chunk) in chunks.iter().enumerate() {
            let batch_len = chunk.len();
            let batch_map = match kind {
                NetKind::FullyConnected => None,
                NetKind::SubConnected => {
                    let lead = &dataset[chunk[0]];
                    let k_star = select_best_subcarrier(lead);
                    Some(dynamic_mapping(
                        &lead.h[k_star],
                        dims.n_rf,
                        MappingMode::GainMatched,
                    )?)
                }
            };
            let mask = batch_map.as_ref().map(MaskVector::from_mapping);
            let mut f_rf_init = random_unit_modulus(dims.n_tx, dims.n_rf, &mut rng);
            if let Some(map) = &batch_map {
                f_rf_init = map.mask_matrix(&f_rf_init)?;
            }
            let mut f_rf: Vec<CMat> = vec![f_rf_init; batch_len];
            let mut f_bb: Vec<Vec<CMat>> = chunk
                .iter()
                .enumerate()
                .map(|(slot, &r)| {
                    f_opt[r]
                        .f_opt
                        .iter()
                        .map(|fo| ls_digital(&f_rf[slot], fo))
                        .collect()
                })
                .collect();

            for inner in 1..=config.inner_iters {
                let mut batch_loss = 0.0;
                let mut grad_acc: Vec<RVec> = vec![RVec::zeros(net.stack_len()); 2 * net.n_layers()];
                let mut outputs: Vec<RVec> = Vec::with_capacity(batch_len);
                for (slot, &r) in chunk.iter().enumerate() {
                    let stack = RealStack::build(&f_opt[r].f_opt, &f_rf[slot], &f_bb[slot])?;
                    let trace = forward(&net, &stack.z_bar, &stack.grams, mask.as_ref())?;
                    batch_loss += trace_loss(&trace, &stack, batch_len)?;
                    let grads = backward(&trace, &net, &stack, batch_len, mask.as_ref())?;
                    for (i, g) in grads.iter().enumerate() {
                        grad_acc[2 * i] += &g.w1;
                        grad_acc[2 * i + 1] += &g.w2;
                    }
                    outputs.push(trace.output().clone());
                }
                if !batch_loss.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "training loss at epoch {epoch}, batch {}, iteration {inner}",
                        batch_idx + 1
                    )));
                }
                {
                    let mut params: Vec<&mut RVec> = Vec::with_capacity(2 * net.layers.len());
                    for layer in net.layers.iter_mut() {
                        params.push(&mut layer.w1);
                        params.push(&mut layer.w2);
                    }
                    adam.step(&mut params, &grad_acc);
                }
                loss_log.push(LossRecord {
                    epoch,
                    batch: batch_idx + 1,
                    inner_iter: inner,
                    loss: batch_loss,
                });
                // Refresh the precoders from the network output. The
                // reconstruction is projected onto the feasible set, exactly
                // as in the online design: rebuilding from the raw output
                // lets a small output shrink F_RF, blow up the next
                // least-squares stage, and collapse training.
                for (slot, &r) in chunk.iter().enumerate() {
                    let analog = match &mask {
                        None => unit_modulus_project(&outputs[slot], dims.n_tx, dims.n_rf)?,
                        Some(_) => {
                            let map = batch_map.as_ref().expect("mask implies mapping");
                            sub_connected_project(&outputs[slot], dims.n_tx, dims.n_rf, map)?
                        }
                    };
                    f_rf[slot] = analog.matrix;
                    f_bb[slot] = f_opt[r]
                        .f_opt
                        .iter()
                        .map(|fo| ls_digital(&f_rf[slot], fo))
                        .collect();
                }
            }
        }
    }
    Ok(TrainResult { net, loss_log })
}

fn shuffle(indices: &mut [usize], rng: &mut impl Rng) {
    for i in (1..indices.len()).rev() {
        let j = rng.gen_range(0..=i);
        indices.swap(i, j);
    }
}

/// Hybrid design produced by the unfolded procedures.
#[derive(Debug, Clone)]
pub struct HbfDesign {
    pub f_rf: AnalogPrecoder,
    pub f_bb: Vec<CMat>,
    pub se: f64,
}

/// Fully connected hybrid design: iteratively rebuild the stacks, run the
/// network, project the output onto the feasible set, and refresh the
/// digital precoders (least squares for all but the last iteration, then
/// water-filling to meet the transmit power constraint).
pub fn fc_hbf_design(
    net: &UnfoldedNet,
    h: &ChannelTensor,
    f_opt: &DigitalOptimal,
    rho: f64,
    noise_power: f64,
    i_net: usize,
    rng: &mut impl Rng,
) -> Result<HbfDesign> {
    design_with_optional_mapping(net, h, f_opt, rho, noise_power, i_net, None, rng)
}

/// Shared design loop; a mapping switches the projection and the network
/// gating to the sub-connected feasible set.
#[allow(clippy::too_many_arguments)]
pub fn design_with_optional_mapping(
    net: &UnfoldedNet,
    h: &ChannelTensor,
    f_opt: &DigitalOptimal,
    rho: f64,
    noise_power: f64,
    i_net: usize,
    mapping: Option<&MappingMatrix>,
    rng: &mut impl Rng,
) -> Result<HbfDesign> {
    if i_net < 1 {
        return Err(Error::Config("need at least one design iteration".into()));
    }
    let dims = &h.dims;
    if net.n_tx() != dims.n_tx || net.n_rf() != dims.n_rf {
        return Err(Error::Dim(format!(
            "network built for {}x{}, channel needs {}x{}",
            net.n_tx(),
            net.n_rf(),
            dims.n_tx,
            dims.n_rf
        )));
    }
    if f_opt.f_opt.len() != h.h.len() {
        return Err(Error::Dim("target precoder count != subcarriers".into()));
    }
    let n_s = dims.n_streams;
    let mask = mapping.map(MaskVector::from_mapping);

    let mut f_rf = random_unit_modulus(dims.n_tx, dims.n_rf, rng);
    if let Some(map) = mapping {
        f_rf = map.mask_matrix(&f_rf)?;
    }
    let mut f_bb: Vec<CMat> = f_opt.f_opt.iter().map(|fo| ls_digital(&f_rf, fo)).collect();
    let mut analog = AnalogPrecoder {
        matrix: f_rf.clone(),
        architecture: crate::precoding::Architecture::FullyConnected,
    };
    for i in 1..=i_net {
        let stack = RealStack::build(&f_opt.f_opt, &f_rf, &f_bb)?;
        let trace = forward(net, &stack.z_bar, &stack.grams, mask.as_ref())?;
        analog = match mapping {
            None => unit_modulus_project(trace.output(), dims.n_tx, dims.n_rf)?,
            Some(map) => sub_connected_project(trace.output(), dims.n_tx, dims.n_rf, map)?,
        };
        f_rf = analog.matrix.clone();
        if i < i_net {
            f_bb = f_opt.f_opt.iter().map(|fo| ls_digital(&f_rf, fo)).collect();
        } else {
            f_bb = h
                .h
                .iter()
                .map(|hk| waterfilling_digital(hk, &f_rf, rho, noise_power, n_s))
                .collect::<Result<_>>()?;
        }
    }
    let se = spectral_efficiency(h, &f_rf, &f_bb, rho, noise_power)?;
    Ok(HbfDesign {
        f_rf: analog,
        f_bb,
        se,
    })
}
