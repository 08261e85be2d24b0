//! Injection objective: target tiling, misleading-text construction, prompt
//! padding, the three per-segment losses, and their weighted total.
//!
//! Each segment loss is a per-position mean (not a sum), so the weighting
//! between segments stays comparable when segment lengths differ; the mean
//! is a positive rescaling of the joint log-probability either way.

use crate::error::{CiaError, Result};
use crate::model::{ModelDims, TokenLayout, Tokenizer, BOS, EOS, UNK};
use crate::scalar::Scalar;
use crate::tensor::{Tape, TensorId};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Trade-off weights: `alpha` balances context injection against output
/// forcing, `beta` balances visual against textual context.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    #[serde(deserialize_with = "crate::fraction::float_or_fraction")]
    pub alpha: f64,
    #[serde(deserialize_with = "crate::fraction::float_or_fraction")]
    pub beta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { alpha: 0.6, beta: 0.6 }
    }
}

impl LossWeights {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        let w = LossWeights { alpha, beta };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(0.0..=1.0).contains(&v) || !v.is_finite() {
                return Err(CiaError::Config(format!("{name} must lie in [0,1], got {v}")));
            }
        }
        Ok(())
    }
}

/// Where filler tokens are placed relative to the prompt.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PaddingStrategy {
    None,
    Prefix,
    Suffix,
    Mixed,
}

impl fmt::Display for PaddingStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PaddingStrategy::None => "none",
            PaddingStrategy::Prefix => "prefix",
            PaddingStrategy::Suffix => "suffix",
            PaddingStrategy::Mixed => "mixed",
        };
        f.write_str(s)
    }
}

impl FromStr for PaddingStrategy {
    type Err = CiaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(PaddingStrategy::None),
            "prefix" => Ok(PaddingStrategy::Prefix),
            "suffix" => Ok(PaddingStrategy::Suffix),
            "mixed" => Ok(PaddingStrategy::Mixed),
            other => Err(CiaError::Config(format!(
                "unknown padding strategy '{other}' (expected none|prefix|suffix|mixed)"
            ))),
        }
    }
}

/// What to inject and how: the target word, the misleading description
/// template, and the optional filler-token padding applied to prompts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InjectionSpec {
    pub target_text: String,
    pub misleading_template: String,
    pub padding_token: String,
    pub padding_strategy: PaddingStrategy,
    pub padding_count: usize,
}

impl Default for InjectionSpec {
    fn default() -> Self {
        InjectionSpec::new("dog")
    }
}

pub const TEMPLATE_PLACEHOLDER: &str = "{target}";
pub const DEFAULT_TEMPLATE: &str = "this image shows a {target}";

impl InjectionSpec {
    pub fn new(target: impl Into<String>) -> Self {
        InjectionSpec {
            target_text: target.into(),
            misleading_template: DEFAULT_TEMPLATE.to_string(),
            padding_token: "+".to_string(),
            padding_strategy: PaddingStrategy::None,
            padding_count: 0,
        }
    }

    pub fn validate(&self, tokenizer: &Tokenizer) -> Result<()> {
        let occurrences = self.misleading_template.matches(TEMPLATE_PLACEHOLDER).count();
        if occurrences != 1 {
            return Err(CiaError::Config(format!(
                "template must contain exactly one {TEMPLATE_PLACEHOLDER} placeholder, found {occurrences}"
            )));
        }
        if tokenizer.tokenize(&self.target_text).contains(&UNK) {
            return Err(CiaError::Tokenization(format!(
                "target '{}' contains out-of-vocabulary words",
                self.target_text
            )));
        }
        if self.padding_token.chars().count() != 1
            || self.padding_token.chars().any(|c| c.is_whitespace() || c.is_control())
        {
            return Err(CiaError::Config(format!(
                "padding token must be a single printable character, got '{}'",
                self.padding_token
            )));
        }
        if self.uses_padding() && tokenizer.id_of(&self.padding_token).is_none() {
            return Err(CiaError::Config(format!(
                "padding token '{}' is not in the vocabulary",
                self.padding_token
            )));
        }
        Ok(())
    }

    fn uses_padding(&self) -> bool {
        self.padding_strategy != PaddingStrategy::None && self.padding_count > 0
    }

    /// The misleading description with the target substituted in.
    pub fn filled_template(&self) -> String {
        self.misleading_template
            .replace(TEMPLATE_PLACEHOLDER, &self.target_text)
    }
}

/// Cyclically tile `target_tokens` to exactly `end_v` entries.
pub fn tile_targets_visual(target_tokens: &[usize], end_v: usize) -> Result<Vec<usize>> {
    if target_tokens.is_empty() {
        return Err(CiaError::BadOperand {
            op: "tile_targets_visual",
            message: "target token list is empty".to_string(),
        });
    }
    if end_v == 0 {
        return Err(CiaError::BadOperand {
            op: "tile_targets_visual",
            message: "end_v must be at least 1".to_string(),
        });
    }
    Ok((0..end_v).map(|i| target_tokens[i % target_tokens.len()]).collect())
}

/// Tokenize the filled misleading template and tile it across the text
/// segment. The alignment with an arbitrary prompt is unspecified in
/// general, so cyclic tiling keeps the construction total and deterministic.
pub fn build_misleading_tokens(
    spec: &InjectionSpec,
    tokenizer: &Tokenizer,
    text_segment_len: usize,
) -> Result<Vec<usize>> {
    if text_segment_len == 0 {
        return Err(CiaError::BadOperand {
            op: "build_misleading_tokens",
            message: "text segment length must be at least 1".to_string(),
        });
    }
    let template_tokens = tokenizer.tokenize(&spec.filled_template());
    if template_tokens.is_empty() {
        return Err(CiaError::Tokenization(
            "misleading template tokenizes to nothing".to_string(),
        ));
    }
    Ok((0..text_segment_len)
        .map(|i| template_tokens[i % template_tokens.len()])
        .collect())
}

/// Insert filler tokens into a prompt according to the padding strategy.
/// `mixed` places one filler after each prompt token until the budget is
/// spent, then appends the remainder.
pub fn apply_padding(
    prompt_tokens: &[usize],
    spec: &InjectionSpec,
    tokenizer: &Tokenizer,
) -> Result<Vec<usize>> {
    if !spec.uses_padding() {
        return Ok(prompt_tokens.to_vec());
    }
    let pad = tokenizer.id_of(&spec.padding_token).ok_or_else(|| {
        CiaError::Config(format!(
            "padding token '{}' is not in the vocabulary",
            spec.padding_token
        ))
    })?;
    let count = spec.padding_count;
    let mut out = Vec::with_capacity(prompt_tokens.len() + count);
    match spec.padding_strategy {
        PaddingStrategy::None => out.extend_from_slice(prompt_tokens),
        PaddingStrategy::Prefix => {
            out.extend(std::iter::repeat(pad).take(count));
            out.extend_from_slice(prompt_tokens);
        }
        PaddingStrategy::Suffix => {
            out.extend_from_slice(prompt_tokens);
            out.extend(std::iter::repeat(pad).take(count));
        }
        PaddingStrategy::Mixed => {
            let mut placed = 0usize;
            for &t in prompt_tokens {
                out.push(t);
                if placed < count {
                    out.push(pad);
                    placed += 1;
                }
            }
            out.extend(std::iter::repeat(pad).take(count - placed));
        }
    }
    Ok(out)
}

/// Everything needed to run and score one teacher-forced pass for a prompt:
/// the text-side input tokens, the segment layout, and per-segment targets.
#[derive(Clone, Debug, PartialEq)]
pub struct SequencePlan {
    /// `<bos>` + padded prompt + output targets; fed to the forward pass.
    pub tokens: Vec<usize>,
    pub layout: TokenLayout,
    /// Target id per visual position (length `end_v`).
    pub visual_targets: Vec<usize>,
    /// Misleading description id per scored text row (length `end_t − end_v − 1`).
    pub text_targets: Vec<usize>,
    /// Teacher-forced output ids (length `horizon`): filled template + `<eos>`.
    pub output_targets: Vec<usize>,
}

/// Assemble the full attack sequence for one prompt.
pub fn plan_sequence(
    tokenizer: &Tokenizer,
    dims: &ModelDims,
    spec: &InjectionSpec,
    prompt: &str,
) -> Result<SequencePlan> {
    spec.validate(tokenizer)?;
    let target_tokens = tokenizer.tokenize(&spec.target_text);
    if target_tokens.is_empty() {
        return Err(CiaError::Tokenization("target text produced no tokens".to_string()));
    }
    let prompt_tokens = tokenizer.tokenize(prompt);
    if prompt_tokens.is_empty() {
        return Err(CiaError::Tokenization(format!("prompt '{prompt}' produced no tokens")));
    }
    let padded = apply_padding(&prompt_tokens, spec, tokenizer)?;

    let mut output_targets = tokenizer.tokenize(&spec.filled_template());
    if output_targets.is_empty() {
        return Err(CiaError::Tokenization(
            "misleading template tokenizes to nothing".to_string(),
        ));
    }
    output_targets.push(EOS);

    let end_v = dims.end_v;
    let end_t = end_v + 1 + padded.len();
    let n = end_t + output_targets.len();
    if n > dims.max_seq {
        return Err(CiaError::SequenceTooLong { len: n, max: dims.max_seq });
    }
    let layout = TokenLayout::new(end_v, end_t, n, dims.vocab_size)?;

    let visual_targets = tile_targets_visual(&target_tokens, end_v)?;
    let text_targets = build_misleading_tokens(spec, tokenizer, layout.text_segment_len())?;

    let mut tokens = Vec::with_capacity(n - end_v);
    tokens.push(BOS);
    tokens.extend_from_slice(&padded);
    tokens.extend_from_slice(&output_targets);

    Ok(SequencePlan {
        tokens,
        layout,
        visual_targets,
        text_targets,
        output_targets,
    })
}

/// Mean cross-entropy of the tiled targets at visual rows `0..end_v`.
pub fn loss_visual<S: Scalar>(
    tape: &mut Tape<S>,
    logits: TensorId,
    tiled_targets: &[usize],
) -> Result<TensorId> {
    tape.ce_mean_rows(logits, 0, tiled_targets)
}

/// Mean cross-entropy of the misleading tokens over the scored text rows
/// `end_v..end_t−1`: row i predicts position i+1, so the last text row is
/// `end_t − 2`.
pub fn loss_textual<S: Scalar>(
    tape: &mut Tape<S>,
    logits: TensorId,
    misleading_tokens: &[usize],
    layout: &TokenLayout,
) -> Result<TensorId> {
    if misleading_tokens.len() != layout.text_segment_len() {
        return Err(CiaError::BadOperand {
            op: "loss_textual",
            message: format!(
                "expected {} misleading tokens for the text segment, got {}",
                layout.text_segment_len(),
                misleading_tokens.len()
            ),
        });
    }
    tape.ce_mean_rows(logits, layout.end_v, misleading_tokens)
}

/// Mean cross-entropy of the teacher-forced output targets over rows
/// `end_t−1..n−1`.
pub fn loss_output<S: Scalar>(
    tape: &mut Tape<S>,
    logits: TensorId,
    target_output_tokens: &[usize],
    layout: &TokenLayout,
) -> Result<TensorId> {
    if target_output_tokens.is_empty() {
        return Err(CiaError::BadOperand {
            op: "loss_output",
            message: "empty output target".to_string(),
        });
    }
    if target_output_tokens.len() != layout.horizon {
        return Err(CiaError::BadOperand {
            op: "loss_output",
            message: format!(
                "expected {} output targets for the horizon, got {}",
                layout.horizon,
                target_output_tokens.len()
            ),
        });
    }
    tape.ce_mean_rows(logits, layout.end_t - 1, target_output_tokens)
}

/// α·(β·l_v + (1−β)·l_t) + (1−α)·l_o, evaluated in the nested form so the
/// weight collapses (α=1 ∧ β=1 → l_v, α=0 → l_o) are exact.
pub fn total_loss(l_v: f64, l_t: f64, l_o: f64, w: &LossWeights) -> f64 {
    w.alpha * (w.beta * l_v + (1.0 - w.beta) * l_t) + (1.0 - w.alpha) * l_o
}

/// The same nested combination built from tape scalars, for the gradient
/// path.
pub fn total_loss_on_tape<S: Scalar>(
    tape: &mut Tape<S>,
    l_v: TensorId,
    l_t: TensorId,
    l_o: TensorId,
    w: &LossWeights,
) -> Result<TensorId> {
    w.validate()?;
    let sv = tape.scale(l_v, w.beta)?;
    let st = tape.scale(l_t, 1.0 - w.beta)?;
    let inner = tape.add(sv, st)?;
    let weighted = tape.scale(inner, w.alpha)?;
    let so = tape.scale(l_o, 1.0 - w.alpha)?;
    tape.add(weighted, so)
}

/// Scalar values of one iteration's losses. `l_total` is recomputed from
/// the stored components with [`total_loss`], so the breakdown always
/// satisfies the weighted-sum identity by construction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_v: f64,
    pub l_t: f64,
    pub l_o: f64,
    pub l_total: f64,
    pub weights: LossWeights,
}

impl LossBreakdown {
    pub fn new(l_v: f64, l_t: f64, l_o: f64, weights: LossWeights) -> Self {
        LossBreakdown {
            l_v,
            l_t,
            l_o,
            l_total: total_loss(l_v, l_t, l_o, &weights),
            weights,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.l_v.is_finite() && self.l_t.is_finite() && self.l_o.is_finite() && self.l_total.is_finite()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use crate::tensor::Tensor;

    fn tok() -> Tokenizer {
        Tokenizer::new()
    }

    #[test]
    fn tile_single_token_repeats() {
        assert_eq!(tile_targets_visual(&[7], 4).unwrap(), vec![7, 7, 7, 7]);
    }

    #[test]
    fn tile_cycles_and_truncates() {
        assert_eq!(tile_targets_visual(&[7, 9], 5).unwrap(), vec![7, 9, 7, 9, 7]);
        assert_eq!(tile_targets_visual(&[1, 2, 3], 2).unwrap(), vec![1, 2]);
    }

    #[test]
    fn tile_rejects_empty_target() {
        assert!(tile_targets_visual(&[], 4).is_err());
    }

    #[test]
    fn misleading_tokens_tile_the_template() {
        let t = tok();
        let spec = InjectionSpec::new("dog");
        let ids: Vec<usize> = ["this", "image", "shows", "a", "dog"]
            .iter()
            .map(|w| t.id_of(w).unwrap())
            .collect();
        assert_eq!(build_misleading_tokens(&spec, &t, 5).unwrap(), ids);
        assert_eq!(build_misleading_tokens(&spec, &t, 3).unwrap(), ids[..3].to_vec());
        let mut long = ids.clone();
        long.extend_from_slice(&ids[..2]);
        assert_eq!(build_misleading_tokens(&spec, &t, 7).unwrap(), long);
    }

    #[test]
    fn padding_none_is_identity() {
        let t = tok();
        let spec = InjectionSpec::new("dog");
        assert_eq!(apply_padding(&[5, 6], &spec, &t).unwrap(), vec![5, 6]);
    }

    #[test]
    fn padding_prefix_suffix_mixed() {
        let t = tok();
        let pad = t.id_of("+").unwrap();
        let mut spec = InjectionSpec::new("dog");
        spec.padding_count = 2;

        spec.padding_strategy = PaddingStrategy::Prefix;
        assert_eq!(apply_padding(&[5, 6], &spec, &t).unwrap(), vec![pad, pad, 5, 6]);

        spec.padding_strategy = PaddingStrategy::Suffix;
        assert_eq!(apply_padding(&[5, 6], &spec, &t).unwrap(), vec![5, 6, pad, pad]);

        spec.padding_strategy = PaddingStrategy::Mixed;
        assert_eq!(apply_padding(&[5, 6], &spec, &t).unwrap(), vec![5, pad, 6, pad]);

        spec.padding_count = 4;
        assert_eq!(
            apply_padding(&[5, 6], &spec, &t).unwrap(),
            vec![5, pad, 6, pad, pad, pad]
        );

        spec.padding_count = 1;
        assert_eq!(apply_padding(&[5, 6], &spec, &t).unwrap(), vec![5, pad, 6]);
    }

    #[test]
    fn padding_token_must_be_in_vocabulary() {
        let t = tok();
        let mut spec = InjectionSpec::new("dog");
        spec.padding_token = "%".to_string();
        spec.padding_strategy = PaddingStrategy::Prefix;
        spec.padding_count = 1;
        assert!(apply_padding(&[5], &spec, &t).is_err());
        assert!(spec.validate(&t).is_err());
    }

    #[test]
    fn template_must_have_exactly_one_placeholder() {
        let t = tok();
        let mut spec = InjectionSpec::new("dog");
        spec.misleading_template = "no placeholder here".to_string();
        assert!(spec.validate(&t).is_err());
        spec.misleading_template = "{target} and {target}".to_string();
        assert!(spec.validate(&t).is_err());
        spec.misleading_template = DEFAULT_TEMPLATE.to_string();
        assert!(spec.validate(&t).is_ok());
    }

    #[test]
    fn out_of_vocabulary_target_rejected() {
        let t = tok();
        let spec = InjectionSpec::new("zebra");
        assert!(matches!(spec.validate(&t), Err(CiaError::Tokenization(_))));
    }

    #[test]
    fn total_loss_default_weights_worked_example() {
        let w = LossWeights { alpha: 0.6, beta: 0.6 };
        let got = total_loss(1.0, 2.0, 3.0, &w);
        assert!((got - 2.04).abs() < 1e-12, "got {got}");
    }

    #[test]
    fn total_loss_weight_collapses_are_exact() {
        let (l_v, l_t, l_o) = (1.234567891234, 2.71828182845, 3.14159265358);
        let w11 = LossWeights { alpha: 1.0, beta: 1.0 };
        assert_eq!(total_loss(l_v, l_t, l_o, &w11).to_bits(), l_v.to_bits());
        for beta in [0.0, 0.3, 1.0] {
            let w0 = LossWeights { alpha: 0.0, beta };
            assert_eq!(total_loss(l_v, l_t, l_o, &w0).to_bits(), l_o.to_bits());
        }
    }

    #[test]
    fn total_loss_matches_affine_coefficient_form() {
        let mut rng = SplitMix64::new(99);
        for _ in 0..1000 {
            let w = LossWeights {
                alpha: rng.next_unit(),
                beta: rng.next_unit(),
            };
            let (l_v, l_t, l_o) = (
                rng.next_range(0.0, 10.0),
                rng.next_range(0.0, 10.0),
                rng.next_range(0.0, 10.0),
            );
            let nested = total_loss(l_v, l_t, l_o, &w);
            let affine = w.alpha * w.beta * l_v + w.alpha * (1.0 - w.beta) * l_t
                + (1.0 - w.alpha) * l_o;
            assert!((nested - affine).abs() < 1e-9);
        }
    }

    #[test]
    fn tape_total_collapses_bitwise() {
        let mut tape = Tape::<f32>::new();
        let l_v = tape.input(Tensor::scalar(1.25f32));
        let l_t = tape.input(Tensor::scalar(2.5f32));
        let l_o = tape.input(Tensor::scalar(0.75f32));
        let w = LossWeights { alpha: 1.0, beta: 1.0 };
        let total = total_loss_on_tape(&mut tape, l_v, l_t, l_o, &w).unwrap();
        assert_eq!(tape.value(total).unwrap().item().unwrap(), 1.25f32);
        let w0 = LossWeights { alpha: 0.0, beta: 0.4 };
        let total0 = total_loss_on_tape(&mut tape, l_v, l_t, l_o, &w0).unwrap();
        assert_eq!(tape.value(total0).unwrap().item().unwrap(), 0.75f32);
    }

    #[test]
    fn uniform_logits_give_log_vocab_for_every_segment() {
        let layout = TokenLayout::new(4, 8, 11, 16).unwrap();
        let mut tape = Tape::<f64>::new();
        let logits = tape.input(Tensor::zeros(vec![11, 16]));
        let ln_v = 16f64.ln();
        let lv = loss_visual(&mut tape, logits, &[1, 2, 3, 4]).unwrap();
        let lt = loss_textual(&mut tape, logits, &[5, 6, 7], &layout).unwrap();
        let lo = loss_output(&mut tape, logits, &[8, 9, 10], &layout).unwrap();
        for id in [lv, lt, lo] {
            let v = tape.value(id).unwrap().item().unwrap();
            assert!((v - ln_v).abs() < 1e-5, "got {v}");
        }
    }

    #[test]
    fn single_position_segment_reduces_to_plain_cross_entropy() {
        let layout = TokenLayout::new(2, 4, 5, 8).unwrap();
        let mut rng = SplitMix64::new(5);
        let vals: Vec<f64> = (0..40).map(|_| rng.next_range(-1.0, 1.0)).collect();
        let mut tape = Tape::<f64>::new();
        let logits = tape.input(Tensor::new(vec![5, 8], vals.clone()).unwrap());
        let lt = loss_textual(&mut tape, logits, &[3], &layout).unwrap();
        let row = tape.slice_rows(logits, 2, 3).unwrap();
        let ce = tape.cross_entropy_from_logits(row, 3).unwrap();
        assert_eq!(
            tape.value(lt).unwrap().item().unwrap(),
            tape.value(ce).unwrap().item().unwrap()
        );
    }

    #[test]
    fn saturated_logits_drive_loss_to_zero() {
        let mut vals = vec![0.0f64; 4 * 8];
        let targets = [2usize, 5, 0, 7];
        for (r, &t) in targets.iter().enumerate() {
            vals[r * 8 + t] = 30.0;
        }
        let mut tape = Tape::<f64>::new();
        let logits = tape.input(Tensor::new(vec![4, 8], vals).unwrap());
        let lv = loss_visual(&mut tape, logits, &targets).unwrap();
        let v = tape.value(lv).unwrap().item().unwrap();
        assert!(v >= 0.0 && v < 1e-6, "got {v}");
    }

    #[test]
    fn segment_length_mismatches_are_errors() {
        let layout = TokenLayout::new(4, 8, 11, 16).unwrap();
        let mut tape = Tape::<f64>::new();
        let logits = tape.input(Tensor::zeros(vec![11, 16]));
        assert!(loss_textual(&mut tape, logits, &[1, 2], &layout).is_err());
        assert!(loss_output(&mut tape, logits, &[1, 2], &layout).is_err());
        assert!(loss_output(&mut tape, logits, &[], &layout).is_err());
    }

    #[test]
    fn plan_sequence_layout_arithmetic() {
        let t = tok();
        let dims = ModelDims::default();
        let spec = InjectionSpec::new("dog");
        let plan = plan_sequence(&t, &dims, &spec, "classify the content of this image").unwrap();
        let prompt_len = t.tokenize("classify the content of this image").len();
        assert_eq!(plan.layout.end_v, 16);
        assert_eq!(plan.layout.end_t, 16 + 1 + prompt_len);
        // output = 5 template tokens + <eos>
        assert_eq!(plan.layout.horizon, 6);
        assert_eq!(plan.layout.n, plan.layout.end_t + 6);
        assert_eq!(plan.tokens[0], BOS);
        assert_eq!(*plan.tokens.last().unwrap(), EOS);
        assert_eq!(plan.tokens.len(), plan.layout.n - plan.layout.end_v);
        assert_eq!(plan.visual_targets, vec![t.id_of("dog").unwrap(); 16]);
        assert_eq!(plan.text_targets.len(), plan.layout.text_segment_len());
        assert_eq!(plan.output_targets.len(), 6);
    }

    #[test]
    fn plan_sequence_rejects_overlong_sequences() {
        let t = tok();
        let dims = ModelDims::default();
        let mut spec = InjectionSpec::new("dog");
        spec.padding_strategy = PaddingStrategy::Suffix;
        spec.padding_count = 40;
        let err = plan_sequence(&t, &dims, &spec, "classify the content of this image");
        assert!(matches!(err, Err(CiaError::SequenceTooLong { .. })));
    }

    #[test]
    fn breakdown_satisfies_weighted_sum_identity() {
        let mut rng = SplitMix64::new(17);
        for _ in 0..100 {
            let w = LossWeights {
                alpha: rng.next_unit(),
                beta: rng.next_unit(),
            };
            let b = LossBreakdown::new(
                rng.next_range(0.0, 8.0),
                rng.next_range(0.0, 8.0),
                rng.next_range(0.0, 8.0),
                w,
            );
            let rhs = w.alpha * (w.beta * b.l_v + (1.0 - w.beta) * b.l_t)
                + (1.0 - w.alpha) * b.l_o;
            assert!((b.l_total - rhs).abs() < 1e-6);
        }
    }
}
