//! Three-branch convolutional actor-critic with exact reverse-mode
//! gradients.
//!
//! Each branch runs [conv3x3 -> ReLU -> max-pool] stages, then an FC mixing
//! the channel axis, a transpose, and an FC mixing the spatial axis. Branch
//! features are concatenated and fused by one FC; linear actor (4 logits)
//! and critic (1 value) heads sit on the trunk. Parameters live in one flat
//! array whose layout is defined by [`crate::spec::layout`]. Forward passes
//! record every intermediate needed for the hand-written backward pass; no
//! autodiff framework is involved, so gradients are checked against finite
//! differences in the tests.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use thiserror::Error;

use piloc_core::perception::ObservationStack;
use piloc_core::scalar::Scalar;

use crate::spec::{LayerSpec, StageDims};

#[derive(Debug, Error, PartialEq)]
pub enum NetError {
    #[error("invalid layer spec: {0}")]
    Spec(#[from] crate::spec::SpecError),
    #[error("parameter count mismatch: spec wants {expected}, got {got}")]
    ParamCount { expected: usize, got: usize },
    #[error("observation shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite gradient at parameter index {0}")]
    NonFiniteGradient(usize),
}

/// Actor and critic outputs for one observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetOutput<T> {
    pub logits: [T; 4],
    pub probs: [T; 4],
    pub value: T,
}

#[derive(Debug, Clone, Copy)]
struct Mat {
    w: usize,
    b: usize,
}

#[derive(Debug, Clone)]
struct BranchOffsets {
    convs: Vec<Mat>,
    chan: Mat,
    spat: Mat,
}

#[derive(Debug, Clone)]
struct TrunkOffsets {
    branches: Vec<BranchOffsets>,
    fusion: Mat,
}

#[derive(Debug, Clone)]
struct Offsets {
    actor_trunk: TrunkOffsets,
    actor_head: Mat,
    /// Present only with a split trunk.
    critic_trunk: Option<TrunkOffsets>,
    critic_head: Mat,
}

/// Consume the layout slots in order to produce structured offsets.
fn offsets(spec: &LayerSpec) -> Offsets {
    let slots = crate::spec::layout(spec);
    let mut cursor = slots.iter();
    let mut next = || cursor.next().expect("layout covers all slots").offset;
    let take_trunk = |next: &mut dyn FnMut() -> usize| TrunkOffsets {
        branches: spec
            .branches()
            .iter()
            .map(|b| BranchOffsets {
                convs: b
                    .stages
                    .iter()
                    .map(|_| Mat {
                        w: next(),
                        b: next(),
                    })
                    .collect(),
                chan: Mat {
                    w: next(),
                    b: next(),
                },
                spat: Mat {
                    w: next(),
                    b: next(),
                },
            })
            .collect(),
        fusion: Mat {
            w: next(),
            b: next(),
        },
    };
    if spec.shared_trunk {
        let trunk = take_trunk(&mut next);
        let actor_head = Mat {
            w: next(),
            b: next(),
        };
        let critic_head = Mat {
            w: next(),
            b: next(),
        };
        Offsets {
            actor_trunk: trunk,
            actor_head,
            critic_trunk: None,
            critic_head,
        }
    } else {
        let actor_trunk = take_trunk(&mut next);
        let actor_head = Mat {
            w: next(),
            b: next(),
        };
        let critic_trunk = take_trunk(&mut next);
        let critic_head = Mat {
            w: next(),
            b: next(),
        };
        Offsets {
            actor_trunk,
            actor_head,
            critic_trunk: Some(critic_trunk),
            critic_head,
        }
    }
}

/// Intermediates of one branch forward pass.
#[derive(Debug, Clone)]
struct BranchTrace<T> {
    input: Vec<T>,
    /// Post-ReLU conv outputs per stage.
    conv_outs: Vec<Vec<T>>,
    /// Pool outputs per stage.
    pool_outs: Vec<Vec<T>>,
    /// Flat conv-out index feeding each pooled element, per stage.
    argmaxes: Vec<Vec<usize>>,
    /// Post-ReLU channel-FC output, laid out `[channel_out, S]`.
    chan_out: Vec<T>,
    /// Post-ReLU spatial-FC output, laid out `[spatial_out, channel_out]`;
    /// its flattening is the branch feature.
    spat_out: Vec<T>,
}

#[derive(Debug, Clone)]
struct TrunkTrace<T> {
    branches: Vec<BranchTrace<T>>,
    fused_in: Vec<T>,
    /// Post-ReLU fusion output.
    trunk_out: Vec<T>,
}

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone)]
pub struct Trace<T> {
    actor: TrunkTrace<T>,
    critic: Option<TrunkTrace<T>>,
}

/// The policy/value network: a layer spec plus one flat parameter array.
#[derive(Debug, Clone)]
pub struct Network<T> {
    spec: LayerSpec,
    params: Vec<T>,
    offs: Offsets,
}

impl<T: Scalar> Network<T> {
    pub fn new(spec: LayerSpec, params: Vec<T>) -> Result<Self, NetError> {
        spec.validate()?;
        let expected = spec.param_count();
        if params.len() != expected {
            return Err(NetError::ParamCount {
                expected,
                got: params.len(),
            });
        }
        let offs = offsets(&spec);
        Ok(Network { spec, params, offs })
    }

    /// Random initialization: orthogonal rows scaled by sqrt(2) for hidden
    /// layers, 0.01 on the actor head for a near-uniform initial policy,
    /// 1.0 on the critic head, zero head biases. Hidden biases start at a
    /// small positive value so no ReLU unit begins dead (and none sits
    /// exactly on the kink).
    pub fn init(spec: LayerSpec, seed: u64) -> Result<Self, NetError> {
        spec.validate()?;
        let mut params = vec![T::zero(); spec.param_count()];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let offs = offsets(&spec);
        let relu_gain = 2.0f64.sqrt();
        let hidden_bias = T::of(0.01);
        let init_trunk = |params: &mut [T], trunk: &TrunkOffsets, rng: &mut ChaCha8Rng| {
            for (b, off) in spec.branches().iter().zip(&trunk.branches) {
                let dims = b.stage_dims().expect("validated");
                for (stage, (sd, mat)) in b.stages.iter().zip(dims.iter().zip(&off.convs)) {
                    orthogonal_into(
                        &mut params[mat.w..],
                        stage.out_channels,
                        sd.in_channels * stage.kernel * stage.kernel,
                        relu_gain,
                        rng,
                    );
                    params[mat.b..mat.b + stage.out_channels].fill(hidden_bias);
                }
                let (c, s) = b.fc_input();
                orthogonal_into(&mut params[off.chan.w..], b.channel_out, c, relu_gain, rng);
                params[off.chan.b..off.chan.b + b.channel_out].fill(hidden_bias);
                orthogonal_into(&mut params[off.spat.w..], b.spatial_out, s, relu_gain, rng);
                params[off.spat.b..off.spat.b + b.spatial_out].fill(hidden_bias);
            }
            orthogonal_into(
                &mut params[trunk.fusion.w..],
                spec.trunk_dim,
                spec.fused_dim(),
                relu_gain,
                rng,
            );
            params[trunk.fusion.b..trunk.fusion.b + spec.trunk_dim].fill(hidden_bias);
        };
        init_trunk(&mut params, &offs.actor_trunk, &mut rng);
        if let Some(critic_trunk) = &offs.critic_trunk {
            init_trunk(&mut params, critic_trunk, &mut rng);
        }
        orthogonal_into(
            &mut params[offs.actor_head.w..],
            spec.num_actions,
            spec.trunk_dim,
            0.01,
            &mut rng,
        );
        orthogonal_into(&mut params[offs.critic_head.w..], 1, spec.trunk_dim, 1.0, &mut rng);
        Network::new(spec, params)
    }

    pub fn spec(&self) -> &LayerSpec {
        &self.spec
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    fn check_shapes(&self, obs: &ObservationStack<T>) -> Result<(), NetError> {
        let b = &self.spec.obstacle;
        if obs.height != b.input_height || obs.width != b.input_width {
            return Err(NetError::ShapeMismatch(format!(
                "map channels are {}x{}, spec wants {}x{}",
                obs.height, obs.width, b.input_height, b.input_width
            )));
        }
        let p = &self.spec.pheromone;
        if obs.window != p.input_height {
            return Err(NetError::ShapeMismatch(format!(
                "pheromone patch is {0}x{0}, spec wants {1}x{1}",
                obs.window, p.input_height
            )));
        }
        debug_assert_eq!(obs.obstacle.len(), obs.height * obs.width);
        debug_assert_eq!(obs.pheromone.len(), obs.window * obs.window);
        Ok(())
    }

    pub fn forward(&self, obs: &ObservationStack<T>) -> Result<NetOutput<T>, NetError> {
        self.forward_traced(obs).map(|(out, _)| out)
    }

    pub fn forward_traced(
        &self,
        obs: &ObservationStack<T>,
    ) -> Result<(NetOutput<T>, Trace<T>), NetError> {
        self.check_shapes(obs)?;
        let inputs = [&obs.obstacle, &obs.exploration, &obs.pheromone];

        let actor_trace = self.trunk_forward(&self.offs.actor_trunk, &inputs);
        let logits_v = self.head_forward(
            self.offs.actor_head,
            self.spec.num_actions,
            &actor_trace.trunk_out,
        );
        let mut logits = [T::zero(); 4];
        logits.copy_from_slice(&logits_v);

        let (value, critic_trace) = match &self.offs.critic_trunk {
            None => (
                self.head_forward(self.offs.critic_head, 1, &actor_trace.trunk_out)[0],
                None,
            ),
            Some(ct) => {
                let trace = self.trunk_forward(ct, &inputs);
                let v = self.head_forward(self.offs.critic_head, 1, &trace.trunk_out)[0];
                (v, Some(trace))
            }
        };

        let probs = softmax4(&logits);
        Ok((
            NetOutput {
                logits,
                probs,
                value,
            },
            Trace {
                actor: actor_trace,
                critic: critic_trace,
            },
        ))
    }

    fn trunk_forward(&self, trunk: &TrunkOffsets, inputs: &[&Vec<T>; 3]) -> TrunkTrace<T> {
        let mut branches = Vec::with_capacity(3);
        let mut fused_in = Vec::with_capacity(self.spec.fused_dim());
        for ((b, off), input) in self
            .spec
            .branches()
            .iter()
            .zip(&trunk.branches)
            .zip(inputs)
        {
            let trace = self.branch_forward(b, off, input);
            fused_in.extend_from_slice(&trace.spat_out);
            branches.push(trace);
        }
        let d = self.spec.trunk_dim;
        let f = fused_in.len();
        let w = &self.params[trunk.fusion.w..trunk.fusion.w + d * f];
        let bias = &self.params[trunk.fusion.b..trunk.fusion.b + d];
        let mut trunk_out = Vec::with_capacity(d);
        for j in 0..d {
            let row = &w[j * f..(j + 1) * f];
            let mut acc = bias[j];
            for (wi, xi) in row.iter().zip(&fused_in) {
                acc = acc + *wi * *xi;
            }
            trunk_out.push(acc.max(T::zero()));
        }
        TrunkTrace {
            branches,
            fused_in,
            trunk_out,
        }
    }

    fn head_forward(&self, head: Mat, rows: usize, trunk_out: &[T]) -> Vec<T> {
        let d = trunk_out.len();
        let w = &self.params[head.w..head.w + rows * d];
        let bias = &self.params[head.b..head.b + rows];
        (0..rows)
            .map(|j| {
                let mut acc = bias[j];
                for (wi, xi) in w[j * d..(j + 1) * d].iter().zip(trunk_out) {
                    acc = acc + *wi * *xi;
                }
                acc
            })
            .collect()
    }

    fn branch_forward(
        &self,
        b: &crate::spec::BranchSpec,
        off: &BranchOffsets,
        input: &[T],
    ) -> BranchTrace<T> {
        let dims = b.stage_dims().expect("validated");
        let mut conv_outs = Vec::with_capacity(b.stages.len());
        let mut pool_outs: Vec<Vec<T>> = Vec::with_capacity(b.stages.len());
        let mut argmaxes = Vec::with_capacity(b.stages.len());
        for (i, (stage, d)) in b.stages.iter().zip(&dims).enumerate() {
            let stage_in: &[T] = if i == 0 { input } else { &pool_outs[i - 1] };
            let mat = off.convs[i];
            let conv = conv_relu_forward(
                stage_in,
                d,
                stage.kernel,
                &self.params[mat.w..],
                &self.params[mat.b..mat.b + stage.out_channels],
            );
            let (pool, argmax) = max_pool_forward(&conv, d, stage.pool);
            conv_outs.push(conv);
            pool_outs.push(pool);
            argmaxes.push(argmax);
        }
        let (c, s) = b.fc_input();
        let chan_in: &[T] = pool_outs.last().map(|v| v.as_slice()).unwrap_or(input);
        debug_assert_eq!(chan_in.len(), c * s);

        // FC over the channel axis: out[c2, s] over all spatial positions.
        let c2n = b.channel_out;
        let wch = &self.params[off.chan.w..off.chan.w + c2n * c];
        let bch = &self.params[off.chan.b..off.chan.b + c2n];
        let mut chan_out = vec![T::zero(); c2n * s];
        for c2 in 0..c2n {
            let row = &wch[c2 * c..(c2 + 1) * c];
            for si in 0..s {
                let mut acc = bch[c2];
                for (ci, wv) in row.iter().enumerate() {
                    acc = acc + *wv * chan_in[ci * s + si];
                }
                chan_out[c2 * s + si] = acc.max(T::zero());
            }
        }

        // Transpose then FC over the spatial axis: out[s2, c2].
        let s2n = b.spatial_out;
        let wsp = &self.params[off.spat.w..off.spat.w + s2n * s];
        let bsp = &self.params[off.spat.b..off.spat.b + s2n];
        let mut spat_out = vec![T::zero(); s2n * c2n];
        for s2 in 0..s2n {
            let row = &wsp[s2 * s..(s2 + 1) * s];
            for c2 in 0..c2n {
                let mut acc = bsp[s2];
                for (si, wv) in row.iter().enumerate() {
                    acc = acc + *wv * chan_out[c2 * s + si];
                }
                spat_out[s2 * c2n + c2] = acc.max(T::zero());
            }
        }

        BranchTrace {
            input: input.to_vec(),
            conv_outs,
            pool_outs,
            argmaxes,
            chan_out,
            spat_out,
        }
    }

    /// Accumulate `d(loss)/d(params)` into `grads` given the adjoints of the
    /// heads. `grads` must have the full parameter length.
    pub fn backward(&self, trace: &Trace<T>, d_logits: &[T; 4], d_value: T, grads: &mut [T]) {
        assert_eq!(grads.len(), self.params.len());

        // Actor head.
        let d = self.spec.trunk_dim;
        let mut d_actor_trunk = vec![T::zero(); d];
        self.head_backward(
            self.offs.actor_head,
            &d_logits[..self.spec.num_actions],
            &trace.actor.trunk_out,
            &mut d_actor_trunk,
            grads,
        );

        match (&self.offs.critic_trunk, &trace.critic) {
            (None, None) => {
                // Shared trunk: the critic head contributes to the same
                // trunk adjoint.
                self.head_backward(
                    self.offs.critic_head,
                    &[d_value],
                    &trace.actor.trunk_out,
                    &mut d_actor_trunk,
                    grads,
                );
                self.trunk_backward(&self.offs.actor_trunk, &trace.actor, &d_actor_trunk, grads);
            }
            (Some(ct), Some(critic_trace)) => {
                let mut d_critic_trunk = vec![T::zero(); d];
                self.head_backward(
                    self.offs.critic_head,
                    &[d_value],
                    &critic_trace.trunk_out,
                    &mut d_critic_trunk,
                    grads,
                );
                self.trunk_backward(&self.offs.actor_trunk, &trace.actor, &d_actor_trunk, grads);
                self.trunk_backward(ct, critic_trace, &d_critic_trunk, grads);
            }
            _ => unreachable!("trace shape matches offsets shape"),
        }
    }

    fn head_backward(
        &self,
        head: Mat,
        d_out: &[T],
        trunk_out: &[T],
        d_trunk: &mut [T],
        grads: &mut [T],
    ) {
        let d = trunk_out.len();
        for (j, &dj) in d_out.iter().enumerate() {
            grads[head.b + j] = grads[head.b + j] + dj;
            let wrow = head.w + j * d;
            for (i, &t) in trunk_out.iter().enumerate() {
                grads[wrow + i] = grads[wrow + i] + dj * t;
                d_trunk[i] = d_trunk[i] + self.params[wrow + i] * dj;
            }
        }
    }

    fn trunk_backward(
        &self,
        trunk: &TrunkOffsets,
        trace: &TrunkTrace<T>,
        d_trunk_out: &[T],
        grads: &mut [T],
    ) {
        let dn = self.spec.trunk_dim;
        let f = trace.fused_in.len();
        // ReLU gate on the fusion output.
        let d_pre: Vec<T> = d_trunk_out
            .iter()
            .zip(&trace.trunk_out)
            .map(|(&g, &o)| if o > T::zero() { g } else { T::zero() })
            .collect();
        let mut d_fused = vec![T::zero(); f];
        for j in 0..dn {
            let dj = d_pre[j];
            if dj == T::zero() {
                continue;
            }
            grads[trunk.fusion.b + j] = grads[trunk.fusion.b + j] + dj;
            let wrow = trunk.fusion.w + j * f;
            for i in 0..f {
                grads[wrow + i] = grads[wrow + i] + dj * trace.fused_in[i];
                d_fused[i] = d_fused[i] + self.params[wrow + i] * dj;
            }
        }
        let mut start = 0;
        for ((b, off), btrace) in self
            .spec
            .branches()
            .iter()
            .zip(&trunk.branches)
            .zip(&trace.branches)
        {
            let len = b.feature_dim();
            self.branch_backward(b, off, btrace, &d_fused[start..start + len], grads);
            start += len;
        }
    }

    fn branch_backward(
        &self,
        b: &crate::spec::BranchSpec,
        off: &BranchOffsets,
        trace: &BranchTrace<T>,
        d_feature: &[T],
        grads: &mut [T],
    ) {
        let (c, s) = b.fc_input();
        let c2n = b.channel_out;
        let s2n = b.spatial_out;

        // Spatial FC backward (with its ReLU gate).
        let wsp = off.spat;
        let mut d_chan_out = vec![T::zero(); c2n * s];
        for s2 in 0..s2n {
            for c2 in 0..c2n {
                let o = trace.spat_out[s2 * c2n + c2];
                if o <= T::zero() {
                    continue;
                }
                let g = d_feature[s2 * c2n + c2];
                if g == T::zero() {
                    continue;
                }
                grads[wsp.b + s2] = grads[wsp.b + s2] + g;
                let wrow = wsp.w + s2 * s;
                for si in 0..s {
                    grads[wrow + si] = grads[wrow + si] + g * trace.chan_out[c2 * s + si];
                    d_chan_out[c2 * s + si] =
                        d_chan_out[c2 * s + si] + self.params[wrow + si] * g;
                }
            }
        }

        // Channel FC backward.
        let wch = off.chan;
        let chan_in: &[T] = trace
            .pool_outs
            .last()
            .map(|v| v.as_slice())
            .unwrap_or(&trace.input);
        let mut d_chan_in = vec![T::zero(); c * s];
        for c2 in 0..c2n {
            let wrow = wch.w + c2 * c;
            for si in 0..s {
                let o = trace.chan_out[c2 * s + si];
                if o <= T::zero() {
                    continue;
                }
                let g = d_chan_out[c2 * s + si];
                if g == T::zero() {
                    continue;
                }
                grads[wch.b + c2] = grads[wch.b + c2] + g;
                for ci in 0..c {
                    grads[wrow + ci] = grads[wrow + ci] + g * chan_in[ci * s + si];
                    d_chan_in[ci * s + si] =
                        d_chan_in[ci * s + si] + self.params[wrow + ci] * g;
                }
            }
        }

        // Conv stages in reverse.
        let dims = b.stage_dims().expect("validated");
        let mut d_pool = d_chan_in;
        for (i, (stage, d)) in b.stages.iter().zip(&dims).enumerate().rev() {
            // Un-pool: route each pooled gradient to its argmax source.
            let conv_len = d.out_channels * d.conv_height * d.conv_width;
            let mut d_conv = vec![T::zero(); conv_len];
            for (pi, &src) in trace.argmaxes[i].iter().enumerate() {
                d_conv[src] = d_conv[src] + d_pool[pi];
            }
            // ReLU gate on the conv output.
            for (g, &o) in d_conv.iter_mut().zip(&trace.conv_outs[i]) {
                if o <= T::zero() {
                    *g = T::zero();
                }
            }
            let stage_in: &[T] = if i == 0 {
                &trace.input
            } else {
                &trace.pool_outs[i - 1]
            };
            let mat = off.convs[i];
            let k = stage.kernel;
            let (ic, ih, iw) = (d.in_channels, d.in_height, d.in_width);
            let (oc, oh, ow) = (d.out_channels, d.conv_height, d.conv_width);
            let mut d_in = vec![T::zero(); ic * ih * iw];
            for o in 0..oc {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let g = d_conv[(o * oh + oy) * ow + ox];
                        if g == T::zero() {
                            continue;
                        }
                        grads[mat.b + o] = grads[mat.b + o] + g;
                        for ci in 0..ic {
                            for ky in 0..k {
                                let in_row = (ci * ih + oy + ky) * iw + ox;
                                let w_row = mat.w + ((o * ic + ci) * k + ky) * k;
                                for kx in 0..k {
                                    grads[w_row + kx] =
                                        grads[w_row + kx] + g * stage_in[in_row + kx];
                                    d_in[in_row + kx] =
                                        d_in[in_row + kx] + self.params[w_row + kx] * g;
                                }
                            }
                        }
                    }
                }
            }
            d_pool = d_in;
        }
    }
}

fn conv_relu_forward<T: Scalar>(
    input: &[T],
    d: &StageDims,
    k: usize,
    w: &[T],
    bias: &[T],
) -> Vec<T> {
    let (ic, ih, iw) = (d.in_channels, d.in_height, d.in_width);
    let (oc, oh, ow) = (d.out_channels, d.conv_height, d.conv_width);
    let mut out = vec![T::zero(); oc * oh * ow];
    for o in 0..oc {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = bias[o];
                for ci in 0..ic {
                    for ky in 0..k {
                        let in_row = (ci * ih + oy + ky) * iw + ox;
                        let w_row = ((o * ic + ci) * k + ky) * k;
                        for kx in 0..k {
                            acc = acc + w[w_row + kx] * input[in_row + kx];
                        }
                    }
                }
                out[(o * oh + oy) * ow + ox] = acc.max(T::zero());
            }
        }
    }
    out
}

/// Max-pool with stride = window; ties keep the first (row-major) index so
/// the backward routing is deterministic.
fn max_pool_forward<T: Scalar>(conv: &[T], d: &StageDims, p: usize) -> (Vec<T>, Vec<usize>) {
    let (oc, oh, ow) = (d.out_channels, d.conv_height, d.conv_width);
    let (ph, pw) = (d.pool_height, d.pool_width);
    let mut out = vec![T::zero(); oc * ph * pw];
    let mut argmax = vec![0usize; oc * ph * pw];
    for c in 0..oc {
        for py in 0..ph {
            for px in 0..pw {
                let mut best_idx = (c * oh + py * p) * ow + px * p;
                let mut best = conv[best_idx];
                for ky in 0..p {
                    for kx in 0..p {
                        let idx = (c * oh + py * p + ky) * ow + px * p + kx;
                        if conv[idx] > best {
                            best = conv[idx];
                            best_idx = idx;
                        }
                    }
                }
                let oi = (c * ph + py) * pw + px;
                out[oi] = best;
                argmax[oi] = best_idx;
            }
        }
    }
    (out, argmax)
}

/// Numerically stable softmax over 4 logits.
pub fn softmax4<T: Scalar>(logits: &[T; 4]) -> [T; 4] {
    let m = logits.iter().cloned().fold(logits[0], T::max);
    let exps = logits.map(|z| (z - m).exp());
    let sum: T = exps.iter().cloned().sum();
    exps.map(|e| e / sum)
}

/// Numerically stable log-softmax over 4 logits.
pub fn log_softmax4<T: Scalar>(logits: &[T; 4]) -> [T; 4] {
    let m = logits.iter().cloned().fold(logits[0], T::max);
    let sum: T = logits.iter().map(|&z| (z - m).exp()).sum();
    let lse = m + sum.ln();
    logits.map(|z| z - lse)
}

/// Sample an action from the categorical distribution; returns the action
/// index and its log-probability.
pub fn sample_action<T: Scalar, R: Rng>(output: &NetOutput<T>, rng: &mut R) -> (usize, T) {
    let u: f64 = rng.gen();
    let mut cum = 0.0f64;
    let mut action = 3;
    for (i, p) in output.probs.iter().enumerate() {
        cum += p.to_f64_lossy();
        if u < cum {
            action = i;
            break;
        }
    }
    let log_probs = log_softmax4(&output.logits);
    (action, log_probs[action])
}

/// Index of the first non-finite entry, if any.
pub fn find_non_finite<T: Scalar>(values: &[T]) -> Option<usize> {
    values.iter().position(|v| !v.is_finite())
}

/// Orthogonal-style init: Gaussian rows orthonormalized by modified
/// Gram-Schmidt (columns when rows > cols), scaled by `gain`.
fn orthogonal_into<T: Scalar>(out: &mut [T], rows: usize, cols: usize, gain: f64, rng: &mut ChaCha8Rng) {
    let mut m = vec![0.0f64; rows * cols];
    for v in m.iter_mut() {
        *v = gaussian(rng);
    }
    if rows <= cols {
        gram_schmidt_rows(&mut m, rows, cols, rng);
    } else {
        // Orthonormalize the columns via the transpose.
        let mut t = vec![0.0f64; rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                t[c * rows + r] = m[r * cols + c];
            }
        }
        gram_schmidt_rows(&mut t, cols, rows, rng);
        for r in 0..rows {
            for c in 0..cols {
                m[r * cols + c] = t[c * rows + r];
            }
        }
    }
    for (o, v) in out[..rows * cols].iter_mut().zip(&m) {
        *o = T::of(*v * gain);
    }
}

fn gram_schmidt_rows(m: &mut [f64], rows: usize, cols: usize, rng: &mut ChaCha8Rng) {
    for r in 0..rows {
        loop {
            for prev in 0..r {
                let dot: f64 = (0..cols).map(|c| m[r * cols + c] * m[prev * cols + c]).sum();
                for c in 0..cols {
                    m[r * cols + c] -= dot * m[prev * cols + c];
                }
            }
            let norm: f64 = (0..cols).map(|c| m[r * cols + c].powi(2)).sum::<f64>().sqrt();
            if norm > 1e-8 {
                for c in 0..cols {
                    m[r * cols + c] /= norm;
                }
                break;
            }
            // Degenerate draw; resample the row.
            for c in 0..cols {
                m[r * cols + c] = gaussian(rng);
            }
        }
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller.
    let u1: f64 = rng.gen::<f64>().max(1e-300);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
