//! Parameterised building blocks shared by the model components.

use muse_autograd::ops::BatchNormStats;
use muse_autograd::{Graph, ParamId, ParamStore, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::Result;

/// Registers parameters under a hierarchical name prefix with seeded init.
pub struct ParamBuilder<'a> {
    store: &'a mut ParamStore,
    rng: ChaCha8Rng,
    prefix: Vec<String>,
}

impl<'a> ParamBuilder<'a> {
    pub fn new(store: &'a mut ParamStore, seed: u64) -> Self {
        ParamBuilder { store, rng: ChaCha8Rng::seed_from_u64(seed), prefix: Vec::new() }
    }

    pub fn scoped<R>(&mut self, name: &str, f: impl FnOnce(&mut Self) -> Result<R>) -> Result<R> {
        self.prefix.push(name.to_string());
        let out = f(self);
        self.prefix.pop();
        out
    }

    pub fn path(&self, leaf: &str) -> String {
        let mut p = self.prefix.join(".");
        if !p.is_empty() {
            p.push('.');
        }
        p.push_str(leaf);
        p
    }

    /// Current prefix, with a trailing dot.
    pub fn prefix(&self) -> String {
        self.path("")
    }

    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn uniform(&mut self, leaf: &str, shape: &[usize], fan_in: usize) -> Result<ParamId> {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| self.rng.random_range(-bound..bound)).collect();
        let t = Tensor::from_vec(shape, data)?;
        Ok(self.store.add_weight(&self.path(leaf), t)?)
    }

    pub fn constant(&mut self, leaf: &str, shape: &[usize], value: f64) -> Result<ParamId> {
        Ok(self.store.add_weight(&self.path(leaf), Tensor::full(shape, value))?)
    }

    pub fn buffer(&mut self, leaf: &str, shape: &[usize], value: f64) -> Result<ParamId> {
        Ok(self.store.add_buffer(&self.path(leaf), Tensor::full(shape, value))?)
    }

    pub fn store(&self) -> &ParamStore {
        self.store
    }
}

/// Width-1 convolution with optional bias.
#[derive(Clone, Debug)]
pub struct Conv1x1 {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
}

impl Conv1x1 {
    pub fn new(pb: &mut ParamBuilder, name: &str, c_in: usize, c_out: usize, bias: bool) -> Result<Self> {
        pb.scoped(name, |pb| {
            let weight = pb.uniform("w", &[c_out, c_in], c_in)?;
            let bias = if bias { Some(pb.uniform("b", &[c_out], c_in)?) } else { None };
            Ok(Conv1x1 { weight, bias })
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let w = g.param(store, self.weight);
        let b = self.bias.map(|b| g.param(store, b));
        Ok(g.pointwise_conv(x, w, b)?)
    }
}

/// Depth-wise convolution, kernel 3 unless stated, "same" padding.
#[derive(Clone, Debug)]
pub struct DepthwiseConv {
    pub weight: ParamId,
    pub bias: ParamId,
    pub dilation: usize,
}

impl DepthwiseConv {
    pub fn new(pb: &mut ParamBuilder, name: &str, channels: usize, kernel: usize, dilation: usize) -> Result<Self> {
        pb.scoped(name, |pb| {
            Ok(DepthwiseConv {
                weight: pb.uniform("w", &[channels, kernel], kernel)?,
                bias: pb.uniform("b", &[channels], kernel)?,
                dilation,
            })
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let w = g.param(store, self.weight);
        let b = g.param(store, self.bias);
        Ok(g.depthwise_conv(x, w, Some(b), self.dilation)?)
    }
}

#[derive(Clone, Debug)]
pub struct BatchNorm1d {
    pub gamma: ParamId,
    pub beta: ParamId,
    stats: BatchNormStats,
}

impl BatchNorm1d {
    pub const MOMENTUM: f64 = 0.1;
    pub const EPS: f64 = 1e-5;

    pub fn new(pb: &mut ParamBuilder, name: &str, channels: usize) -> Result<Self> {
        pb.scoped(name, |pb| {
            Ok(BatchNorm1d {
                gamma: pb.constant("gamma", &[channels], 1.0)?,
                beta: pb.constant("beta", &[channels], 0.0)?,
                stats: BatchNormStats {
                    running_mean: pb.buffer("running_mean", &[channels], 0.0)?,
                    running_var: pb.buffer("running_var", &[channels], 1.0)?,
                    momentum: Self::MOMENTUM,
                    eps: Self::EPS,
                },
            })
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let gamma = g.param(store, self.gamma);
        let beta = g.param(store, self.beta);
        Ok(g.batch_norm(x, gamma, beta, store, self.stats)?)
    }
}

/// Global layer norm (gLN): statistics over channels and time per item.
#[derive(Clone, Debug)]
pub struct GlobalLayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl GlobalLayerNorm {
    pub const EPS: f64 = 1e-8;

    pub fn new(pb: &mut ParamBuilder, name: &str, channels: usize) -> Result<Self> {
        pb.scoped(name, |pb| {
            Ok(GlobalLayerNorm {
                gamma: pb.constant("gamma", &[channels], 1.0)?,
                beta: pb.constant("beta", &[channels], 0.0)?,
            })
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let gamma = g.param(store, self.gamma);
        let beta = g.param(store, self.beta);
        Ok(g.global_layer_norm(x, gamma, beta, Self::EPS)?)
    }
}

#[derive(Clone, Debug)]
pub struct PRelu {
    pub alpha: ParamId,
}

impl PRelu {
    pub fn new(pb: &mut ParamBuilder, name: &str) -> Result<Self> {
        Ok(PRelu { alpha: pb.constant(&format!("{name}.alpha"), &[1], 0.25)? })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let a = g.param(store, self.alpha);
        Ok(g.prelu(x, a)?)
    }
}

/// Ids of every entry (weights and buffers) under a name prefix.
pub fn ids_with_prefix(store: &ParamStore, prefix: &str) -> Vec<ParamId> {
    store.ids().filter(|&id| store.name(id).starts_with(prefix)).collect()
}
