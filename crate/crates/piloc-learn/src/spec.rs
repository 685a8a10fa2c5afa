//! Network layer specification and the flat parameter layout.
//!
//! Every size lives here so nothing downstream hard-codes shapes: each
//! observation branch is a stack of valid 3x3 convolutions with max-pooling,
//! followed by a fully connected mix over the channel axis, a transpose,
//! and a fully connected mix over the spatial axis. Branch features are
//! concatenated channel-wise into the fusion layer; linear actor and critic
//! heads sit on top.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Bump when the parameter layout walk changes.
pub const LAYOUT_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum SpecError {
    #[error("branch {0}: spatial dims collapse to zero at stage {1}")]
    CollapsedSpatial(String, usize),
    #[error("action head must have 4 outputs, got {0}")]
    BadActionCount(usize),
    #[error("{0} must be positive")]
    ZeroDim(&'static str),
}

/// One convolution + ReLU + max-pool stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvStage {
    pub out_channels: usize,
    /// Square kernel side; convolutions are valid (no padding), stride 1.
    pub kernel: usize,
    /// Square pooling window and stride; the ragged remainder is dropped.
    pub pool: usize,
}

/// One observation branch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchSpec {
    pub input_height: usize,
    pub input_width: usize,
    pub stages: Vec<ConvStage>,
    /// Output channels of the FC applied across the channel axis.
    pub channel_out: usize,
    /// Output size of the FC applied across the spatial axis.
    pub spatial_out: usize,
}

/// Dimensions of one stage's tensors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageDims {
    pub in_channels: usize,
    pub in_height: usize,
    pub in_width: usize,
    pub conv_height: usize,
    pub conv_width: usize,
    pub pool_height: usize,
    pub pool_width: usize,
    pub out_channels: usize,
}

impl BranchSpec {
    /// Per-stage tensor dimensions, or an error if some stage collapses.
    pub fn stage_dims(&self) -> Result<Vec<StageDims>, (usize, ())> {
        let mut c = 1usize;
        let mut h = self.input_height;
        let mut w = self.input_width;
        let mut out = Vec::with_capacity(self.stages.len());
        for (i, stage) in self.stages.iter().enumerate() {
            if h < stage.kernel || w < stage.kernel {
                return Err((i, ()));
            }
            let ch = h - stage.kernel + 1;
            let cw = w - stage.kernel + 1;
            let ph = ch / stage.pool;
            let pw = cw / stage.pool;
            if ph == 0 || pw == 0 {
                return Err((i, ()));
            }
            out.push(StageDims {
                in_channels: c,
                in_height: h,
                in_width: w,
                conv_height: ch,
                conv_width: cw,
                pool_height: ph,
                pool_width: pw,
                out_channels: stage.out_channels,
            });
            c = stage.out_channels;
            h = ph;
            w = pw;
        }
        Ok(out)
    }

    /// Channels and flat spatial size entering the FC pair.
    pub fn fc_input(&self) -> (usize, usize) {
        let dims = self.stage_dims().expect("validated spec");
        match dims.last() {
            Some(d) => (d.out_channels, d.pool_height * d.pool_width),
            None => (1, self.input_height * self.input_width),
        }
    }

    /// Flattened branch feature length.
    pub fn feature_dim(&self) -> usize {
        self.channel_out * self.spatial_out
    }

    fn param_count(&self) -> usize {
        let dims = self.stage_dims().expect("validated spec");
        let mut n = 0;
        for (stage, d) in self.stages.iter().zip(&dims) {
            n += stage.out_channels * d.in_channels * stage.kernel * stage.kernel;
            n += stage.out_channels;
        }
        let (c, s) = self.fc_input();
        n += self.channel_out * c + self.channel_out;
        n += self.spatial_out * s + self.spatial_out;
        n
    }
}

/// Complete network shape.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub obstacle: BranchSpec,
    pub exploration: BranchSpec,
    pub pheromone: BranchSpec,
    /// Fusion layer width.
    pub trunk_dim: usize,
    pub num_actions: usize,
    /// One trunk with two heads (true) or disjoint actor/critic networks.
    pub shared_trunk: bool,
}

impl LayerSpec {
    /// Default shapes for `map_height x map_width` observation maps and an
    /// `l x l` pheromone patch: two conv stages (8 then 16 channels) on the
    /// map branches, one stage on the small pheromone branch, 8x8 branch
    /// features, and a 128-wide fusion.
    pub fn defaults(map_height: usize, map_width: usize, l: usize) -> Self {
        let map_branch = BranchSpec {
            input_height: map_height,
            input_width: map_width,
            stages: vec![
                ConvStage {
                    out_channels: 8,
                    kernel: 3,
                    pool: 2,
                },
                ConvStage {
                    out_channels: 16,
                    kernel: 3,
                    pool: 2,
                },
            ],
            channel_out: 8,
            spatial_out: 8,
        };
        LayerSpec {
            obstacle: map_branch.clone(),
            exploration: map_branch,
            pheromone: BranchSpec {
                input_height: l,
                input_width: l,
                stages: vec![ConvStage {
                    out_channels: 8,
                    kernel: 3,
                    pool: 2,
                }],
                channel_out: 8,
                spatial_out: 8,
            },
            trunk_dim: 128,
            num_actions: 4,
            shared_trunk: true,
        }
    }

    pub fn branches(&self) -> [&BranchSpec; 3] {
        [&self.obstacle, &self.exploration, &self.pheromone]
    }

    pub fn fused_dim(&self) -> usize {
        self.branches().iter().map(|b| b.feature_dim()).sum()
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        if self.num_actions != 4 {
            return Err(SpecError::BadActionCount(self.num_actions));
        }
        if self.trunk_dim == 0 {
            return Err(SpecError::ZeroDim("trunk_dim"));
        }
        for (name, b) in [
            ("obstacle", &self.obstacle),
            ("exploration", &self.exploration),
            ("pheromone", &self.pheromone),
        ] {
            if b.channel_out == 0 || b.spatial_out == 0 {
                return Err(SpecError::ZeroDim("branch fc dims"));
            }
            if let Err((i, ())) = b.stage_dims() {
                return Err(SpecError::CollapsedSpatial(name.to_string(), i));
            }
        }
        Ok(())
    }

    fn trunk_param_count(&self) -> usize {
        let per_branch: usize = self.branches().iter().map(|b| b.param_count()).sum();
        per_branch + self.trunk_dim * self.fused_dim() + self.trunk_dim
    }

    /// Total flat parameter count, a pure function of the spec.
    pub fn param_count(&self) -> usize {
        let actor_head = self.num_actions * self.trunk_dim + self.num_actions;
        let critic_head = self.trunk_dim + 1;
        if self.shared_trunk {
            self.trunk_param_count() + actor_head + critic_head
        } else {
            2 * self.trunk_param_count() + actor_head + critic_head
        }
    }

    /// Canonical serialization used for the checkpoint digest.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("spec serializes")
    }

    /// SHA-256 of the canonical serialization plus the layout version.
    pub fn digest(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        hasher.update(LAYOUT_VERSION.to_le_bytes());
        hasher.update(self.canonical_json().as_bytes());
        hasher.finalize().into()
    }
}

/// Named view into the flat parameter array.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Slot {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

struct LayoutBuilder {
    slots: Vec<Slot>,
    offset: usize,
}

impl LayoutBuilder {
    fn push(&mut self, name: String, len: usize) {
        self.slots.push(Slot {
            name,
            offset: self.offset,
            len,
        });
        self.offset += len;
    }

    fn push_trunk(&mut self, spec: &LayerSpec, prefix: &str) {
        let branch_names = ["obstacle", "exploration", "pheromone"];
        for (bname, b) in branch_names.iter().zip(spec.branches()) {
            let dims = b.stage_dims().expect("validated spec");
            for (i, (stage, d)) in b.stages.iter().zip(&dims).enumerate() {
                self.push(
                    format!("{prefix}{bname}.conv{i}.w"),
                    stage.out_channels * d.in_channels * stage.kernel * stage.kernel,
                );
                self.push(format!("{prefix}{bname}.conv{i}.b"), stage.out_channels);
            }
            let (c, s) = b.fc_input();
            self.push(format!("{prefix}{bname}.chan_fc.w"), b.channel_out * c);
            self.push(format!("{prefix}{bname}.chan_fc.b"), b.channel_out);
            self.push(format!("{prefix}{bname}.spat_fc.w"), b.spatial_out * s);
            self.push(format!("{prefix}{bname}.spat_fc.b"), b.spatial_out);
        }
        self.push(
            format!("{prefix}fusion.w"),
            spec.trunk_dim * spec.fused_dim(),
        );
        self.push(format!("{prefix}fusion.b"), spec.trunk_dim);
    }
}

/// Ordered parameter layout: branch convs, branch FCs, fusion, then heads.
/// With a split trunk, the critic's copy follows the actor head.
pub fn layout(spec: &LayerSpec) -> Vec<Slot> {
    let mut b = LayoutBuilder {
        slots: Vec::new(),
        offset: 0,
    };
    if spec.shared_trunk {
        b.push_trunk(spec, "");
        b.push("actor.w".into(), spec.num_actions * spec.trunk_dim);
        b.push("actor.b".into(), spec.num_actions);
        b.push("critic.w".into(), spec.trunk_dim);
        b.push("critic.b".into(), 1);
    } else {
        b.push_trunk(spec, "actor/");
        b.push("actor.w".into(), spec.num_actions * spec.trunk_dim);
        b.push("actor.b".into(), spec.num_actions);
        b.push_trunk(spec, "critic/");
        b.push("critic.w".into(), spec.trunk_dim);
        b.push("critic.b".into(), 1);
    }
    b.slots
}

/// A small spec for fast numerical tests: 8x8 map channels, 5x5 pheromone
/// patch, one conv stage per branch, well under 2000 parameters.
pub fn mini_spec(shared_trunk: bool) -> LayerSpec {
    let map_branch = BranchSpec {
        input_height: 8,
        input_width: 8,
        stages: vec![ConvStage {
            out_channels: 2,
            kernel: 3,
            pool: 2,
        }],
        channel_out: 2,
        spatial_out: 4,
    };
    LayerSpec {
        obstacle: map_branch.clone(),
        exploration: map_branch,
        pheromone: BranchSpec {
            input_height: 5,
            input_width: 5,
            stages: vec![ConvStage {
                out_channels: 2,
                kernel: 3,
                pool: 2,
            }],
            channel_out: 2,
            spatial_out: 4,
        },
        trunk_dim: 16,
        num_actions: 4,
        shared_trunk,
    }
}
