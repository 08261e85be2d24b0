//! Deterministic frozen-weight miniature vision-language model.
//!
//! Images are split into non-overlapping patches, linearly projected, and
//! concatenated with token embeddings; a small causal transformer maps the
//! sequence to next-token logits through a shared unembedding for visual and
//! text positions alike. All weights are drawn from a seeded splitmix64
//! stream at construction and never change: the model is a fixed victim, and
//! gradients flow only to the image pixels.

mod layout;
mod tokenizer;

pub use layout::TokenLayout;
pub use tokenizer::{Tokenizer, BOS, EOS, PAD, UNK};

use crate::error::{CiaError, Result};
use crate::image::{ImageTensor, CHANNELS};
use crate::rng::SplitMix64;
use crate::scalar::Scalar;
use crate::tensor::{Tape, Tensor, TensorId};
use serde::{Deserialize, Serialize};

/// Weight initialization range: uniform in [−0.08, 0.08]. Small enough that
/// initial logits sit near uniform (cross-entropy ≈ ln V), which the tests
/// use as an anchor.
pub const INIT_RANGE: f64 = 0.08;

/// Feed-forward hidden width as a multiple of the model width.
pub const FFN_MULT: usize = 4;

/// Additive mask value for future positions. Far enough below any reachable
/// score that the stabilized softmax underflows masked probabilities to an
/// exact 0.0, making causality bitwise rather than approximate.
const MASK_NEG: f64 = -1e9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelDims {
    pub vocab_size: usize,
    pub d_model: usize,
    pub blocks: usize,
    pub patch_size: usize,
    pub image_size: usize,
    pub end_v: usize,
    pub max_seq: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        ModelDims {
            vocab_size: 64,
            d_model: 32,
            blocks: 2,
            patch_size: 4,
            image_size: 16,
            end_v: 16,
            max_seq: 64,
        }
    }
}

impl ModelDims {
    /// Default dims for a different (square) image size.
    pub fn for_image(image_size: usize) -> Self {
        let mut d = ModelDims { image_size, ..Default::default() };
        if d.patch_size > 0 && image_size % d.patch_size == 0 {
            d.end_v = (image_size / d.patch_size).pow(2);
        }
        d
    }

    pub fn patch_dim(&self) -> usize {
        self.patch_size * self.patch_size * CHANNELS
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model < 8 {
            return Err(CiaError::Config(format!("d_model {} below minimum 8", self.d_model)));
        }
        if self.blocks < 1 {
            return Err(CiaError::Config("at least one transformer block required".into()));
        }
        if self.vocab_size < 8 {
            return Err(CiaError::Config(format!(
                "vocab_size {} below minimum 8",
                self.vocab_size
            )));
        }
        if self.patch_size == 0 || self.image_size % self.patch_size != 0 {
            return Err(CiaError::Config(format!(
                "image size {} not divisible by patch size {}",
                self.image_size, self.patch_size
            )));
        }
        let grid = self.image_size / self.patch_size;
        if grid * grid != self.end_v {
            return Err(CiaError::Config(format!(
                "end_v {} inconsistent with ({}/{})^2 = {}",
                self.end_v,
                self.image_size,
                self.patch_size,
                grid * grid
            )));
        }
        if self.max_seq < self.end_v + 2 {
            return Err(CiaError::Config(format!(
                "max_seq {} leaves no room for text after {} visual tokens",
                self.max_seq, self.end_v
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct BlockWeights<S> {
    wq: Tensor<S>,
    wk: Tensor<S>,
    wv: Tensor<S>,
    wo: Tensor<S>,
    w1: Tensor<S>,
    w2: Tensor<S>,
}

/// Frozen victim model. Regenerating with the same seed yields bitwise
/// identical weights; the instance is immutable after construction.
#[derive(Clone, Debug)]
pub struct ModelWeights<S> {
    dims: ModelDims,
    seed: u64,
    patch_proj: Tensor<S>,
    token_embed: Tensor<S>,
    pos_embed: Tensor<S>,
    blocks: Vec<BlockWeights<S>>,
    unembed: Tensor<S>,
}

/// Tape handles produced by mounting an image: the pixel leaf (the gradient
/// target) and the visual embedding matrix derived from it.
#[derive(Clone, Copy, Debug)]
pub struct VisualEncoding {
    pub pixels: TensorId,
    pub visual: TensorId,
}

/// Tape handles of a full forward pass.
#[derive(Clone, Copy, Debug)]
pub struct ForwardPass {
    pub pixels: TensorId,
    pub logits: TensorId,
    pub seq_len: usize,
}

/// Draw weights for the given seed and dimensions. Matrices are filled
/// row-major from a single splitmix64 stream in a fixed documented order:
/// patch projection, token embeddings, positional embeddings, then per block
/// (wq, wk, wv, wo, w1, w2), and finally the unembedding.
pub fn init_model<S: Scalar>(seed: u64, dims: ModelDims) -> Result<ModelWeights<S>> {
    dims.validate()?;
    let mut rng = SplitMix64::new(seed);
    let mut draw = |rows: usize, cols: usize| -> Tensor<S> {
        let vals: Vec<S> = (0..rows * cols)
            .map(|_| S::of_f64(rng.next_range(-INIT_RANGE, INIT_RANGE)))
            .collect();
        Tensor::new(vec![rows, cols], vals).expect("init values are finite by construction")
    };
    let d = dims.d_model;
    let patch_proj = draw(dims.patch_dim(), d);
    let token_embed = draw(dims.vocab_size, d);
    let pos_embed = draw(dims.max_seq, d);
    let blocks = (0..dims.blocks)
        .map(|_| BlockWeights {
            wq: draw(d, d),
            wk: draw(d, d),
            wv: draw(d, d),
            wo: draw(d, d),
            w1: draw(d, FFN_MULT * d),
            w2: draw(FFN_MULT * d, d),
        })
        .collect();
    let unembed = draw(d, dims.vocab_size);
    Ok(ModelWeights {
        dims,
        seed,
        patch_proj,
        token_embed,
        pos_embed,
        blocks,
        unembed,
    })
}

impl<S: Scalar> ModelWeights<S> {
    pub fn init(seed: u64, dims: ModelDims) -> Result<Self> {
        init_model(seed, dims)
    }

    pub fn dims(&self) -> &ModelDims {
        &self.dims
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Flat checksum access for determinism tests: every weight value in
    /// draw order.
    pub fn weight_values(&self) -> Vec<S> {
        let mut out = Vec::new();
        out.extend_from_slice(self.patch_proj.values());
        out.extend_from_slice(self.token_embed.values());
        out.extend_from_slice(self.pos_embed.values());
        for b in &self.blocks {
            out.extend_from_slice(b.wq.values());
            out.extend_from_slice(b.wk.values());
            out.extend_from_slice(b.wv.values());
            out.extend_from_slice(b.wo.values());
            out.extend_from_slice(b.w1.values());
            out.extend_from_slice(b.w2.values());
        }
        out.extend_from_slice(self.unembed.values());
        out
    }

    /// Gather order that reorders a flat (y, x, channel) pixel buffer into
    /// patch-major rows: index j of the result reads pixel `order[j]`.
    fn patch_order(&self) -> Vec<usize> {
        let p = self.dims.patch_size;
        let w = self.dims.image_size;
        let grid = w / p;
        let mut order = Vec::with_capacity(w * w * CHANNELS);
        for pi in 0..grid {
            for pj in 0..grid {
                for py in 0..p {
                    for px in 0..p {
                        for c in 0..CHANNELS {
                            let (y, x) = (pi * p + py, pj * p + px);
                            order.push((y * w + x) * CHANNELS + c);
                        }
                    }
                }
            }
        }
        order
    }

    fn check_image(&self, image: &ImageTensor<S>) -> Result<()> {
        if image.height() != self.dims.image_size || image.width() != self.dims.image_size {
            return Err(CiaError::BadOperand {
                op: "encode_image",
                message: format!(
                    "model expects {0}x{0} images, got {1}x{2}",
                    self.dims.image_size,
                    image.height(),
                    image.width()
                ),
            });
        }
        Ok(())
    }

    /// Mount an image on the tape: patchify, project, add positions.
    /// Differentiable with respect to the returned pixel leaf.
    pub fn encode_image(
        &self,
        tape: &mut Tape<S>,
        image: &ImageTensor<S>,
    ) -> Result<VisualEncoding> {
        self.check_image(image)?;
        let pixels = tape.input(image.to_row_tensor());
        let gathered = tape.gather_flat(pixels, self.patch_order())?;
        let patches = tape.reshape(gathered, vec![self.dims.end_v, self.dims.patch_dim()])?;
        let proj_w = tape.constant(self.patch_proj.clone());
        let projected = tape.matmul(patches, proj_w)?;
        let pos: Vec<f64> = self.pos_embed.values()[..self.dims.end_v * self.dims.d_model]
            .iter()
            .map(|v| v.as_f64())
            .collect();
        let pos_c = tape.constant(Tensor::from_f64(
            vec![self.dims.end_v, self.dims.d_model],
            &pos,
        )?);
        let visual = tape.add(projected, pos_c)?;
        Ok(VisualEncoding { pixels, visual })
    }

    /// Token embedding plus positional embedding rows for positions
    /// `end_v..end_v+tokens.len()`, placed below `end_v` zero rows so the
    /// result can be added to the placed visual embeddings.
    fn token_part(&self, tokens: &[usize], seq_len: usize) -> Result<Tensor<S>> {
        let d = self.dims.d_model;
        let mut vals = vec![0.0f64; seq_len * d];
        for (j, &tok) in tokens.iter().enumerate() {
            if tok >= self.dims.vocab_size {
                return Err(CiaError::TargetOutOfRange {
                    index: tok,
                    vocab: self.dims.vocab_size,
                });
            }
            let row = self.dims.end_v + j;
            for k in 0..d {
                vals[row * d + k] = self.token_embed.at(tok, k).as_f64()
                    + self.pos_embed.at(row, k).as_f64();
            }
        }
        Tensor::from_f64(vec![seq_len, d], &vals)
    }

    /// Full causal forward pass over [visual tokens | text tokens]; row i of
    /// the returned logits predicts the token at position i+1.
    pub fn forward_logits(
        &self,
        tape: &mut Tape<S>,
        image: &ImageTensor<S>,
        tokens: &[usize],
    ) -> Result<ForwardPass> {
        if tokens.is_empty() {
            return Err(CiaError::BadOperand {
                op: "forward_logits",
                message: "token sequence is empty".to_string(),
            });
        }
        let seq_len = self.dims.end_v + tokens.len();
        if seq_len > self.dims.max_seq {
            return Err(CiaError::SequenceTooLong {
                len: seq_len,
                max: self.dims.max_seq,
            });
        }
        let enc = self.encode_image(tape, image)?;
        let d = self.dims.d_model;

        // Place the visual block into rows 0..end_v of an L×d matrix via a
        // constant 0/1 selector, then add the (constant) token rows.
        let mut placer = vec![0.0f64; seq_len * self.dims.end_v];
        for i in 0..self.dims.end_v {
            placer[i * self.dims.end_v + i] = 1.0;
        }
        let placer_c = tape.constant(Tensor::from_f64(vec![seq_len, self.dims.end_v], &placer)?);
        let placed = tape.matmul(placer_c, enc.visual)?;
        let tok_c = tape.constant(self.token_part(tokens, seq_len)?);
        let mut x = tape.add(placed, tok_c)?;

        let mut mask = vec![0.0f64; seq_len * seq_len];
        for i in 0..seq_len {
            for j in (i + 1)..seq_len {
                mask[i * seq_len + j] = MASK_NEG;
            }
        }
        let mask_c = tape.constant(Tensor::from_f64(vec![seq_len, seq_len], &mask)?);
        let inv_sqrt_d = 1.0 / (d as f64).sqrt();

        for block in &self.blocks {
            let wq = tape.constant(block.wq.clone());
            let wk = tape.constant(block.wk.clone());
            let wv = tape.constant(block.wv.clone());
            let wo = tape.constant(block.wo.clone());
            let q = tape.matmul(x, wq)?;
            let k = tape.matmul(x, wk)?;
            let v = tape.matmul(x, wv)?;
            let kt = tape.transpose(k)?;
            let scores = tape.matmul(q, kt)?;
            let scaled = tape.scale(scores, inv_sqrt_d)?;
            let masked = tape.add(scaled, mask_c)?;
            let attn = tape.softmax(masked)?;
            let ctx = tape.matmul(attn, v)?;
            let proj = tape.matmul(ctx, wo)?;
            x = tape.add(x, proj)?;

            let w1 = tape.constant(block.w1.clone());
            let w2 = tape.constant(block.w2.clone());
            let h = tape.matmul(x, w1)?;
            let h = tape.tanh(h)?;
            let h = tape.matmul(h, w2)?;
            x = tape.add(x, h)?;
        }

        let unembed = tape.constant(self.unembed.clone());
        let logits = tape.matmul(x, unembed)?;
        Ok(ForwardPass {
            pixels: enc.pixels,
            logits,
            seq_len,
        })
    }

    /// Logit values without tape bookkeeping exposure: convenience for
    /// evaluation paths that never differentiate.
    pub fn logits_for(&self, image: &ImageTensor<S>, tokens: &[usize]) -> Result<Tensor<S>> {
        let mut tape = Tape::new();
        let fwd = self.forward_logits(&mut tape, image, tokens)?;
        Ok(tape.value(fwd.logits)?.clone())
    }

    /// Greedy decoding: repeatedly append the argmax of the final logit row,
    /// stopping at `<eos>` or after `max_new` tokens. Ties break toward the
    /// lowest token id. The returned list includes `<eos>` when generated.
    pub fn generate_greedy(
        &self,
        image: &ImageTensor<S>,
        prompt_tokens: &[usize],
        max_new: usize,
    ) -> Result<Vec<usize>> {
        let mut context = prompt_tokens.to_vec();
        let mut out = Vec::new();
        for _ in 0..max_new {
            let logits = self.logits_for(image, &context)?;
            let rows = logits.shape()[0];
            let v = logits.shape()[1];
            let mut best = 0usize;
            let mut best_val = logits.at(rows - 1, 0).as_f64();
            for j in 1..v {
                let val = logits.at(rows - 1, j).as_f64();
                if val > best_val {
                    best = j;
                    best_val = val;
                }
            }
            out.push(best);
            if best == EOS {
                break;
            }
            context.push(best);
        }
        Ok(out)
    }
}
