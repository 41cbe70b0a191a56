//! Transformer building blocks on top of [`crate::autograd`].

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::autograd::{AttentionMask, Matrix, ParamId, Parameters, Tape, Var};
use crate::rng::{self, Rng};

/// Allocates named parameters with seeded initial values.
pub struct ParamBuilder {
    pub params: Parameters,
    rng: Rng,
}

impl ParamBuilder {
    pub fn new(seed: u64) -> Self {
        Self { params: Parameters::new(), rng: rng::seeded(seed) }
    }

    fn uniform(&mut self, name: String, rows: usize, cols: usize, bound: f64) -> ParamId {
        let data = (0..rows * cols).map(|_| self.rng.random_range(-bound..bound)).collect();
        self.params.add(name, Matrix::from_vec(rows, cols, data))
    }

    /// Glorot-uniform weight matrix.
    pub fn weight(&mut self, name: String, rows: usize, cols: usize) -> ParamId {
        let bound = libm::sqrt(6.0 / (rows + cols) as f64);
        self.uniform(name, rows, cols, bound)
    }

    pub fn embedding(&mut self, name: String, rows: usize, cols: usize) -> ParamId {
        self.uniform(name, rows, cols, 0.1)
    }

    pub fn constant(&mut self, name: String, rows: usize, cols: usize, v: f64) -> ParamId {
        self.params.add(name, Matrix::filled(rows, cols, v))
    }

    pub fn linear(&mut self, name: &str, input: usize, output: usize) -> Linear {
        Linear {
            weight: self.weight(format!("{name}.weight"), input, output),
            bias: self.constant(format!("{name}.bias"), 1, output, 0.0),
        }
    }

    pub fn layer_norm(&mut self, name: &str, dim: usize) -> LayerNorm {
        LayerNorm {
            gain: self.constant(format!("{name}.gain"), 1, dim, 1.0),
            bias: self.constant(format!("{name}.bias"), 1, dim, 0.0),
        }
    }

    pub fn attention(&mut self, name: &str, dim: usize, heads: usize) -> Attention {
        assert!(heads > 0 && dim.is_multiple_of(heads), "dim must divide into heads");
        Attention {
            query: self.linear(&format!("{name}.query"), dim, dim),
            key: self.linear(&format!("{name}.key"), dim, dim),
            value: self.linear(&format!("{name}.value"), dim, dim),
            output: self.linear(&format!("{name}.output"), dim, dim),
            heads,
        }
    }

    pub fn feed_forward(&mut self, name: &str, dim: usize, hidden: usize) -> FeedForward {
        FeedForward {
            inner: self.linear(&format!("{name}.inner"), dim, hidden),
            outer: self.linear(&format!("{name}.outer"), hidden, dim),
        }
    }

    pub fn encoder_block(&mut self, name: &str, dim: usize, heads: usize, ff: usize) -> EncoderBlock {
        EncoderBlock {
            attn_norm: self.layer_norm(&format!("{name}.attn_norm"), dim),
            attn: self.attention(&format!("{name}.attn"), dim, heads),
            ff_norm: self.layer_norm(&format!("{name}.ff_norm"), dim),
            ff: self.feed_forward(&format!("{name}.ff"), dim, ff),
        }
    }

    pub fn decoder_block(&mut self, name: &str, dim: usize, heads: usize, ff: usize) -> DecoderBlock {
        DecoderBlock {
            self_norm: self.layer_norm(&format!("{name}.self_norm"), dim),
            self_attn: self.attention(&format!("{name}.self_attn"), dim, heads),
            cross_norm: self.layer_norm(&format!("{name}.cross_norm"), dim),
            cross_attn: self.attention(&format!("{name}.cross_attn"), dim, heads),
            ff_norm: self.layer_norm(&format!("{name}.ff_norm"), dim),
            ff: self.feed_forward(&format!("{name}.ff"), dim, ff),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn forward(&self, t: &mut Tape<'_>, x: Var) -> Var {
        let w = t.param(self.weight);
        let b = t.param(self.bias);
        let y = t.matmul(x, w);
        t.add_row(y, b)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    pub fn forward(&self, t: &mut Tape<'_>, x: Var) -> Var {
        let n = t.normalize(x);
        let g = t.param(self.gain);
        let b = t.param(self.bias);
        let y = t.mul_row(n, g);
        t.add_row(y, b)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Attention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub heads: usize,
}

impl Attention {
    /// Multi-head scaled dot-product attention of `queries` over `memory`.
    pub fn forward(&self, t: &mut Tape<'_>, queries: Var, memory: Var, mask: &AttentionMask) -> Var {
        let q = self.query.forward(t, queries);
        let k = self.key.forward(t, memory);
        let v = self.value.forward(t, memory);
        let dim = t.value(q).cols;
        let head_dim = dim / self.heads;
        let scale = 1.0 / libm::sqrt(head_dim as f64);
        let mut outs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = t.slice_cols(q, h * head_dim, head_dim);
            let kh = t.slice_cols(k, h * head_dim, head_dim);
            let vh = t.slice_cols(v, h * head_dim, head_dim);
            let scores = t.matmul_bt(qh, kh);
            let scores = t.scale(scores, scale);
            let probs = t.softmax(scores, mask.clone());
            outs.push(t.matmul(probs, vh));
        }
        let joined = if outs.len() == 1 { outs[0] } else { t.concat_cols(&outs) };
        self.output.forward(t, joined)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FeedForward {
    pub inner: Linear,
    pub outer: Linear,
}

impl FeedForward {
    pub fn forward(&self, t: &mut Tape<'_>, x: Var) -> Var {
        let h = self.inner.forward(t, x);
        let h = t.gelu(h);
        self.outer.forward(t, h)
    }
}

/// Pre-norm self-attention block.
#[derive(Debug, Clone, Copy)]
pub struct EncoderBlock {
    pub attn_norm: LayerNorm,
    pub attn: Attention,
    pub ff_norm: LayerNorm,
    pub ff: FeedForward,
}

impl EncoderBlock {
    pub fn forward(&self, t: &mut Tape<'_>, x: Var, mask: &AttentionMask) -> Var {
        let h = self.attn_norm.forward(t, x);
        let a = self.attn.forward(t, h, h, mask);
        let x = t.add(x, a);
        let h = self.ff_norm.forward(t, x);
        let f = self.ff.forward(t, h);
        t.add(x, f)
    }
}

/// Pre-norm decoder block: causal self-attention, optional cross-attention
/// to encoder states, feed-forward.
#[derive(Debug, Clone, Copy)]
pub struct DecoderBlock {
    pub self_norm: LayerNorm,
    pub self_attn: Attention,
    pub cross_norm: LayerNorm,
    pub cross_attn: Attention,
    pub ff_norm: LayerNorm,
    pub ff: FeedForward,
}

impl DecoderBlock {
    pub fn forward(&self, t: &mut Tape<'_>, x: Var, memory: Option<Var>) -> Var {
        let h = self.self_norm.forward(t, x);
        let a = self.self_attn.forward(t, h, h, &AttentionMask::Causal { offset: 0 });
        let mut x = t.add(x, a);
        if let Some(mem) = memory {
            let h = self.cross_norm.forward(t, x);
            let c = self.cross_attn.forward(t, h, mem, &AttentionMask::Full);
            x = t.add(x, c);
        }
        let h = self.ff_norm.forward(t, x);
        let f = self.ff.forward(t, h);
        t.add(x, f)
    }
}
