//! The Q-network: two branches of valid convolutions over the local and
//! global observation tensors, flattened and concatenated with the budget
//! scalar, then three ReLU hidden layers and a linear head of Q-values.
//!
//! Forward and backward passes are hand-written over flat f64 buffers in
//! channel-major layout. Parameters are kept f32-representable at all
//! times (initialization and every update round through f32), so
//! checkpoints storing 32-bit reals round-trip bit-exactly.

use crate::obs::{ObsConfig, Observation};
use crate::rng::{derive_seed, rng_from, tags};
use rand::Rng as _;
use thiserror::Error;

/// Channels entering each branch: the three map layers plus the target.
pub const OBS_CHANNELS: usize = 4;

#[derive(Debug, Error, PartialEq)]
pub enum NetError {
    #[error("invalid architecture: {0}")]
    InvalidArch(String),
    #[error("input shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

/// Fixed network hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ArchConfig {
    /// Convolution layers per branch.
    pub n_k: usize,
    /// Kernels per convolution layer.
    pub n_c: usize,
    /// Kernel side length.
    pub s_k: usize,
    pub hidden_sizes: [usize; 3],
    pub action_count: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig {
            n_k: 2,
            n_c: 16,
            s_k: 5,
            hidden_sizes: [256, 256, 256],
            action_count: crate::env::ACTION_COUNT,
        }
    }
}

impl ArchConfig {
    pub fn validate(&self) -> Result<(), NetError> {
        if self.n_k < 1 {
            return Err(NetError::InvalidArch("n_k must be >= 1".into()));
        }
        if self.n_c < 1 {
            return Err(NetError::InvalidArch("n_c must be >= 1".into()));
        }
        if self.s_k % 2 == 0 || self.s_k == 0 {
            return Err(NetError::InvalidArch("s_k must be odd".into()));
        }
        if self.hidden_sizes.iter().any(|&h| h == 0) {
            return Err(NetError::InvalidArch("hidden sizes must be positive".into()));
        }
        if self.action_count == 0 {
            return Err(NetError::InvalidArch("action_count must be positive".into()));
        }
        Ok(())
    }
}

/// Input geometry the network is built for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NetShape {
    pub local_side: usize,
    pub global_side: usize,
    pub in_channels: usize,
}

impl NetShape {
    pub fn from_obs(cfg: &ObsConfig, grid_size: usize) -> NetShape {
        NetShape {
            local_side: cfg.proj,
            global_side: cfg.global_side(grid_size),
            in_channels: OBS_CHANNELS,
        }
    }
}

/// A valid (no padding, stride 1) convolution layer. Weights are laid out
/// `[out_ch][in_ch][ky][kx]`, activations `[ch][y][x]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv {
    pub in_ch: usize,
    pub out_ch: usize,
    pub k: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

/// A fully connected layer with weights laid out `[out][in]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub n_in: usize,
    pub n_out: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

/// All parameter tensors. Also used as the gradient container, since a
/// gradient has exactly the parameter shapes.
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    pub local_convs: Vec<Conv>,
    pub global_convs: Vec<Conv>,
    pub hidden: Vec<Dense>,
    pub head: Dense,
}

/// A named view of one parameter tensor.
pub struct TensorRef<'a> {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: &'a [f64],
}

impl Params {
    pub fn zeros_like(&self) -> Params {
        let zc = |c: &Conv| Conv {
            w: vec![0.0; c.w.len()],
            b: vec![0.0; c.b.len()],
            ..*c
        };
        let zd = |d: &Dense| Dense {
            w: vec![0.0; d.w.len()],
            b: vec![0.0; d.b.len()],
            ..*d
        };
        Params {
            local_convs: self.local_convs.iter().map(zc).collect(),
            global_convs: self.global_convs.iter().map(zc).collect(),
            hidden: self.hidden.iter().map(zd).collect(),
            head: zd(&self.head),
        }
    }

    /// Named tensors in a fixed order (the checkpoint and flat-index order).
    pub fn tensor_refs(&self) -> Vec<TensorRef<'_>> {
        let mut out = Vec::new();
        for (branch, convs) in [("local", &self.local_convs), ("global", &self.global_convs)] {
            for (i, c) in convs.iter().enumerate() {
                out.push(TensorRef {
                    name: format!("{branch}_conv{i}.w"),
                    dims: vec![c.out_ch, c.in_ch, c.k, c.k],
                    data: &c.w,
                });
                out.push(TensorRef {
                    name: format!("{branch}_conv{i}.b"),
                    dims: vec![c.out_ch],
                    data: &c.b,
                });
            }
        }
        for (i, d) in self.hidden.iter().enumerate() {
            out.push(TensorRef {
                name: format!("hidden{i}.w"),
                dims: vec![d.n_out, d.n_in],
                data: &d.w,
            });
            out.push(TensorRef {
                name: format!("hidden{i}.b"),
                dims: vec![d.n_out],
                data: &d.b,
            });
        }
        out.push(TensorRef {
            name: "head.w".into(),
            dims: vec![self.head.n_out, self.head.n_in],
            data: &self.head.w,
        });
        out.push(TensorRef {
            name: "head.b".into(),
            dims: vec![self.head.n_out],
            data: &self.head.b,
        });
        out
    }

    /// Mutable slices over every tensor, in [`Params::tensor_refs`] order.
    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out: Vec<&mut Vec<f64>> = Vec::new();
        for c in self.local_convs.iter_mut().chain(self.global_convs.iter_mut()) {
            out.push(&mut c.w);
            out.push(&mut c.b);
        }
        for d in self.hidden.iter_mut() {
            out.push(&mut d.w);
            out.push(&mut d.b);
        }
        out.push(&mut self.head.w);
        out.push(&mut self.head.b);
        out
    }

    pub fn param_count(&self) -> usize {
        self.tensor_refs().iter().map(|t| t.data.len()).sum()
    }

    pub fn get_flat(&self, mut idx: usize) -> f64 {
        for t in self.tensor_refs() {
            if idx < t.data.len() {
                return t.data[idx];
            }
            idx -= t.data.len();
        }
        panic!("flat index out of range");
    }

    pub fn set_flat(&mut self, mut idx: usize, v: f64) {
        for t in self.tensors_mut() {
            if idx < t.len() {
                t[idx] = v;
                return;
            }
            idx -= t.len();
        }
        panic!("flat index out of range");
    }

    /// Applies `f(self_elem, other_elem)` elementwise across all tensors.
    pub fn zip_apply(&mut self, other: &Params, f: impl Fn(&mut f64, f64)) {
        let other_refs: Vec<*const f64> = other.tensor_refs().iter().map(|t| t.data.as_ptr()).collect();
        let other_lens: Vec<usize> = other.tensor_refs().iter().map(|t| t.data.len()).collect();
        for (ti, t) in self.tensors_mut().into_iter().enumerate() {
            assert_eq!(t.len(), other_lens[ti], "parameter shape mismatch");
            // Safety: other outlives this loop and the pointers index
            // within each tensor's length, checked above.
            let src = unsafe { std::slice::from_raw_parts(other_refs[ti], other_lens[ti]) };
            for (a, &b) in t.iter_mut().zip(src) {
                f(a, b);
            }
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.tensor_refs()
            .iter()
            .flat_map(|t| t.data.iter())
            .map(|&v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, s: f64) {
        for t in self.tensors_mut() {
            for v in t.iter_mut() {
                *v *= s;
            }
        }
    }
}

/// Rounds through f32 so the value survives a 32-bit checkpoint exactly.
#[inline]
pub(crate) fn quantize_f32(x: f64) -> f64 {
    x as f32 as f64
}

/// Network input: the two branch tensors flattened channel-major plus the
/// budget scalar.
#[derive(Clone, Debug, PartialEq)]
pub struct NetInput {
    pub local: Vec<f64>,
    pub global: Vec<f64>,
    pub budget: f64,
}

impl NetInput {
    /// Stacks the three map channels and the target channel of each view.
    pub fn from_observation(o: &Observation) -> NetInput {
        let stack = |map: &ndarray::Array3<f64>, target: &ndarray::Array2<f64>| {
            let (side, _, ch) = map.dim();
            let mut out = Vec::with_capacity(side * side * (ch + 1));
            for c in 0..ch {
                for y in 0..side {
                    for x in 0..side {
                        out.push(map[(y, x, c)]);
                    }
                }
            }
            for y in 0..side {
                for x in 0..side {
                    out.push(target[(y, x)]);
                }
            }
            out
        };
        NetInput {
            local: stack(&o.local_map, &o.local_target),
            global: stack(&o.global_map, &o.global_target),
            budget: o.budget,
        }
    }
}

/// One training sample: input, the action taken, and the regression target.
pub struct GradSample<'a> {
    pub input: &'a NetInput,
    pub action: usize,
    pub target: f64,
}

struct ForwardCache {
    local_acts: Vec<Vec<f64>>,
    global_acts: Vec<Vec<f64>>,
    flat: Vec<f64>,
    hidden_acts: Vec<Vec<f64>>,
    q: Vec<f64>,
}

/// The two-branch Q-network.
#[derive(Clone, Debug, PartialEq)]
pub struct QNetwork {
    pub arch: ArchConfig,
    pub shape: NetShape,
    pub params: Params,
}

impl QNetwork {
    /// Builds the network with He-style uniform fan-in initialization from
    /// an explicit seed. Biases start at zero.
    pub fn new(arch: ArchConfig, shape: NetShape, seed: u64) -> Result<QNetwork, NetError> {
        arch.validate()?;
        Self::conv_out_side(shape.local_side, &arch, "local")?;
        Self::conv_out_side(shape.global_side, &arch, "global")?;
        let mut rng = rng_from(derive_seed(seed, tags::NET_INIT, 0));
        let mut conv_stack = |side: usize| -> Vec<Conv> {
            let _ = side;
            (0..arch.n_k)
                .map(|l| {
                    let in_ch = if l == 0 { shape.in_channels } else { arch.n_c };
                    let fan_in = in_ch * arch.s_k * arch.s_k;
                    let limit = (6.0 / fan_in as f64).sqrt();
                    Conv {
                        in_ch,
                        out_ch: arch.n_c,
                        k: arch.s_k,
                        w: (0..arch.n_c * in_ch * arch.s_k * arch.s_k)
                            .map(|_| quantize_f32(rng.random_range(-limit..limit)))
                            .collect(),
                        b: vec![0.0; arch.n_c],
                    }
                })
                .collect()
        };
        let local_convs = conv_stack(shape.local_side);
        let global_convs = conv_stack(shape.global_side);
        let local_out = Self::conv_out_side(shape.local_side, &arch, "local")?;
        let global_out = Self::conv_out_side(shape.global_side, &arch, "global")?;
        let flat_len = arch.n_c * (local_out * local_out + global_out * global_out) + 1;
        let dense = |n_in: usize, n_out: usize, rng: &mut crate::rng::Rng| -> Dense {
            let limit = (6.0 / n_in as f64).sqrt();
            Dense {
                n_in,
                n_out,
                w: (0..n_in * n_out)
                    .map(|_| quantize_f32(rng.random_range(-limit..limit)))
                    .collect(),
                b: vec![0.0; n_out],
            }
        };
        let hidden = vec![
            dense(flat_len, arch.hidden_sizes[0], &mut rng),
            dense(arch.hidden_sizes[0], arch.hidden_sizes[1], &mut rng),
            dense(arch.hidden_sizes[1], arch.hidden_sizes[2], &mut rng),
        ];
        let head = dense(arch.hidden_sizes[2], arch.action_count, &mut rng);
        Ok(QNetwork {
            arch,
            shape,
            params: Params {
                local_convs,
                global_convs,
                hidden,
                head,
            },
        })
    }

    fn conv_out_side(side: usize, arch: &ArchConfig, which: &str) -> Result<usize, NetError> {
        let out = side as i64 - (arch.n_k * (arch.s_k - 1)) as i64;
        if out < 1 {
            return Err(NetError::InvalidArch(format!(
                "conv stack drives the {which} side from {side} to {out}"
            )));
        }
        Ok(out as usize)
    }

    /// Flatten width (both branch feature maps plus the budget scalar).
    pub fn flatten_len(&self) -> usize {
        let lo = self.shape.local_side - self.arch.n_k * (self.arch.s_k - 1);
        let go = self.shape.global_side - self.arch.n_k * (self.arch.s_k - 1);
        self.arch.n_c * (lo * lo + go * go) + 1
    }

    fn check_input(&self, input: &NetInput) -> Result<(), NetError> {
        let want_local = self.shape.in_channels * self.shape.local_side * self.shape.local_side;
        let want_global =
            self.shape.in_channels * self.shape.global_side * self.shape.global_side;
        if input.local.len() != want_local || input.global.len() != want_global {
            return Err(NetError::ShapeMismatch(format!(
                "got local {} / global {}, expected {want_local} / {want_global}",
                input.local.len(),
                input.global.len()
            )));
        }
        Ok(())
    }

    /// Q-values for one observation.
    pub fn forward(&self, input: &NetInput) -> Result<Vec<f64>, NetError> {
        Ok(self.forward_cached(input)?.q)
    }

    fn forward_cached(&self, input: &NetInput) -> Result<ForwardCache, NetError> {
        self.check_input(input)?;
        let run_branch = |convs: &[Conv], side: usize, data: &[f64]| {
            let mut acts = Vec::with_capacity(convs.len() + 1);
            acts.push(data.to_vec());
            let mut cur_side = side;
            for conv in convs {
                let out = conv_forward(acts.last().unwrap(), cur_side, conv);
                cur_side = cur_side - conv.k + 1;
                acts.push(out);
            }
            acts
        };
        let local_acts = run_branch(&self.params.local_convs, self.shape.local_side, &input.local);
        let global_acts =
            run_branch(&self.params.global_convs, self.shape.global_side, &input.global);
        let mut flat =
            Vec::with_capacity(local_acts.last().unwrap().len() + global_acts.last().unwrap().len() + 1);
        flat.extend_from_slice(local_acts.last().unwrap());
        flat.extend_from_slice(global_acts.last().unwrap());
        flat.push(input.budget);
        let mut hidden_acts = Vec::with_capacity(3);
        let mut cur = flat.clone();
        for layer in &self.params.hidden {
            cur = dense_forward(&cur, layer, true);
            hidden_acts.push(cur.clone());
        }
        let q = dense_forward(&cur, &self.params.head, false);
        Ok(ForwardCache {
            local_acts,
            global_acts,
            flat,
            hidden_acts,
            q,
        })
    }

    /// Mean-squared-error loss of the batch under the current parameters.
    pub fn batch_loss(&self, batch: &[GradSample<'_>]) -> Result<f64, NetError> {
        let mut loss = 0.0;
        for s in batch {
            let q = self.forward(s.input)?;
            let d = q[s.action] - s.target;
            loss += d * d;
        }
        Ok(loss / batch.len() as f64)
    }

    /// Exact gradient of the batch MSE loss with respect to every
    /// parameter tensor, plus the loss value.
    pub fn q_gradient(&self, batch: &[GradSample<'_>]) -> Result<(Params, f64), NetError> {
        if batch.is_empty() {
            return Err(NetError::ShapeMismatch("empty batch".into()));
        }
        for s in batch {
            if !s.target.is_finite() {
                return Err(NetError::NonFinite("target"));
            }
        }
        let mut grad = self.params.zeros_like();
        let inv_b = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        for s in batch {
            let cache = self.forward_cached(s.input)?;
            let diff = cache.q[s.action] - s.target;
            loss += diff * diff * inv_b;
            let mut dq = vec![0.0; cache.q.len()];
            dq[s.action] = 2.0 * diff * inv_b;
            self.backward_sample(&cache, &dq, &mut grad);
        }
        if !loss.is_finite() {
            return Err(NetError::NonFinite("loss"));
        }
        Ok((grad, loss))
    }

    fn backward_sample(&self, cache: &ForwardCache, dq: &[f64], grad: &mut Params) {
        // Head (linear).
        let h_last = cache.hidden_acts.last().unwrap();
        let mut dh = vec![0.0; h_last.len()];
        dense_backward(
            h_last,
            dq,
            &self.params.head,
            &mut grad.head,
            Some(&mut dh),
        );
        // Hidden layers in reverse, through ReLU.
        for l in (0..self.params.hidden.len()).rev() {
            let post = &cache.hidden_acts[l];
            let dpre: Vec<f64> = dh
                .iter()
                .zip(post)
                .map(|(&d, &a)| if a > 0.0 { d } else { 0.0 })
                .collect();
            let input = if l == 0 {
                &cache.flat
            } else {
                &cache.hidden_acts[l - 1]
            };
            let mut dinput = vec![0.0; input.len()];
            dense_backward(
                input,
                &dpre,
                &self.params.hidden[l],
                &mut grad.hidden[l],
                Some(&mut dinput),
            );
            dh = dinput;
        }
        // Split the flat gradient into the two branch tails (budget scalar
        // has no parameters).
        let local_len = cache.local_acts.last().unwrap().len();
        let global_len = cache.global_acts.last().unwrap().len();
        let dlocal = dh[..local_len].to_vec();
        let dglobal = dh[local_len..local_len + global_len].to_vec();
        self.backward_branch(
            &self.params.local_convs,
            &cache.local_acts,
            self.shape.local_side,
            dlocal,
            &mut grad.local_convs,
        );
        self.backward_branch(
            &self.params.global_convs,
            &cache.global_acts,
            self.shape.global_side,
            dglobal,
            &mut grad.global_convs,
        );
    }

    fn backward_branch(
        &self,
        convs: &[Conv],
        acts: &[Vec<f64>],
        in_side: usize,
        mut dpost: Vec<f64>,
        grads: &mut [Conv],
    ) {
        let mut sides = Vec::with_capacity(convs.len() + 1);
        sides.push(in_side);
        for conv in convs {
            sides.push(sides.last().unwrap() - conv.k + 1);
        }
        for l in (0..convs.len()).rev() {
            let want_dinput = l > 0;
            let dinput = conv_backward(
                &acts[l],
                sides[l],
                &acts[l + 1],
                sides[l + 1],
                &convs[l],
                &dpost,
                &mut grads[l],
                want_dinput,
            );
            if let Some(d) = dinput {
                dpost = d;
            }
        }
    }

    /// One gradient-descent step; parameters stay f32-representable.
    pub fn sgd_step(&mut self, grad: &Params, learning_rate: f64) {
        self.params
            .zip_apply(grad, |p, g| *p = quantize_f32(*p - learning_rate * g));
    }
}

fn conv_forward(input: &[f64], in_side: usize, conv: &Conv) -> Vec<f64> {
    let out_side = in_side - conv.k + 1;
    let mut out = vec![0.0; conv.out_ch * out_side * out_side];
    for oc in 0..conv.out_ch {
        for oy in 0..out_side {
            for ox in 0..out_side {
                let mut acc = conv.b[oc];
                for ic in 0..conv.in_ch {
                    for ky in 0..conv.k {
                        let in_base = (ic * in_side + oy + ky) * in_side + ox;
                        let w_base = ((oc * conv.in_ch + ic) * conv.k + ky) * conv.k;
                        let in_row = &input[in_base..in_base + conv.k];
                        let w_row = &conv.w[w_base..w_base + conv.k];
                        acc += in_row.iter().zip(w_row).map(|(a, b)| a * b).sum::<f64>();
                    }
                }
                out[(oc * out_side + oy) * out_side + ox] = acc.max(0.0);
            }
        }
    }
    out
}

fn dense_forward(input: &[f64], layer: &Dense, relu: bool) -> Vec<f64> {
    let mut out = Vec::with_capacity(layer.n_out);
    for o in 0..layer.n_out {
        let row = &layer.w[o * layer.n_in..(o + 1) * layer.n_in];
        let mut acc = layer.b[o];
        for (x, w) in input.iter().zip(row) {
            acc += x * w;
        }
        out.push(if relu { acc.max(0.0) } else { acc });
    }
    out
}

/// Accumulates dW/db for one dense layer and optionally the gradient with
/// respect to its input. `dout` is already the pre-activation gradient.
fn dense_backward(
    input: &[f64],
    dout: &[f64],
    layer: &Dense,
    grad: &mut Dense,
    dinput: Option<&mut Vec<f64>>,
) {
    for (o, &d) in dout.iter().enumerate() {
        if d == 0.0 {
            continue;
        }
        grad.b[o] += d;
        let row = &mut grad.w[o * layer.n_in..(o + 1) * layer.n_in];
        for (g, &x) in row.iter_mut().zip(input) {
            *g += d * x;
        }
    }
    if let Some(di) = dinput {
        for (o, &d) in dout.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            let row = &layer.w[o * layer.n_in..(o + 1) * layer.n_in];
            for (g, &w) in di.iter_mut().zip(row) {
                *g += d * w;
            }
        }
    }
}

/// Accumulates dW/db for one conv layer given the post-activation gradient
/// `dpost`, and returns the gradient with respect to the layer input when
/// requested. ReLU masking uses the cached post-activations.
#[allow(clippy::too_many_arguments)]
fn conv_backward(
    input: &[f64],
    in_side: usize,
    post: &[f64],
    out_side: usize,
    conv: &Conv,
    dpost: &[f64],
    grad: &mut Conv,
    want_dinput: bool,
) -> Option<Vec<f64>> {
    let mut dinput = if want_dinput {
        Some(vec![0.0; input.len()])
    } else {
        None
    };
    for oc in 0..conv.out_ch {
        for oy in 0..out_side {
            for ox in 0..out_side {
                let o_idx = (oc * out_side + oy) * out_side + ox;
                if post[o_idx] <= 0.0 {
                    continue; // ReLU gradient is zero here
                }
                let delta = dpost[o_idx];
                if delta == 0.0 {
                    continue;
                }
                grad.b[oc] += delta;
                for ic in 0..conv.in_ch {
                    for ky in 0..conv.k {
                        let in_base = (ic * in_side + oy + ky) * in_side + ox;
                        let w_base = ((oc * conv.in_ch + ic) * conv.k + ky) * conv.k;
                        let in_row = &input[in_base..in_base + conv.k];
                        let gw_row = &mut grad.w[w_base..w_base + conv.k];
                        for (g, &x) in gw_row.iter_mut().zip(in_row) {
                            *g += delta * x;
                        }
                        if let Some(di) = dinput.as_mut() {
                            let w_row = &conv.w[w_base..w_base + conv.k];
                            let di_row = &mut di[in_base..in_base + conv.k];
                            for (g, &w) in di_row.iter_mut().zip(w_row) {
                                *g += delta * w;
                            }
                        }
                    }
                }
            }
        }
    }
    dinput
}
