//! Sign-gradient PGD attack loop with L∞ projection, image-range clamping,
//! and the baseline variants.
//!
//! The perturbation lives outside the tape: each iteration composes
//! `original + delta` into a fresh image, runs one forward/backward pass,
//! and steps `delta` with the sign of the pixel gradient. Because the
//! composition is the identity map from delta to the pixel leaf, the pixel
//! gradient is exactly the delta gradient.
//!
//! Exactness contract (holds in f64 even for f32 storage):
//! - `max |delta| ≤ epsilon_v` after every step — the clamp bound is the
//!   stored rounding of ε stepped down until it does not exceed ε;
//! - every adversarial pixel lies in `[0,1]` — the upper clamp walks δ down
//!   by ulps until `o + δ ≤ 1`, the lower clamp sets δ = −o (exact).

use crate::error::{CiaError, Result};
use crate::image::ImageTensor;
use crate::model::{ModelDims, ModelWeights, Tokenizer};
use crate::objective::{
    loss_output, loss_textual, loss_visual, plan_sequence, total_loss_on_tape, InjectionSpec,
    LossBreakdown, LossWeights, SequencePlan,
};
use crate::rng::SplitMix64;
use crate::scalar::Scalar;
use crate::tensor::Tape;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Which loss combination the optimizer follows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Full weighted objective over all three segments.
    Cia,
    /// Visual-context injection only: β forced to 1 (drops the text loss).
    CiaImage,
    /// Textual-context injection only: β forced to 0 (drops the visual loss).
    CiaText,
    /// Output loss only, first training prompt only.
    SingleP,
    /// Output loss only, all training prompts.
    MultiP,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::SingleP,
        Variant::MultiP,
        Variant::CiaImage,
        Variant::CiaText,
        Variant::Cia,
    ];

    /// The weights the optimizer actually uses for this variant.
    pub fn effective_weights(&self, configured: LossWeights) -> LossWeights {
        match self {
            Variant::Cia => configured,
            Variant::CiaImage => LossWeights { alpha: configured.alpha, beta: 1.0 },
            Variant::CiaText => LossWeights { alpha: configured.alpha, beta: 0.0 },
            Variant::SingleP | Variant::MultiP => {
                LossWeights { alpha: 0.0, beta: configured.beta }
            }
        }
    }

    /// The training prompts the optimizer actually cycles over.
    pub fn effective_prompts<'a>(&self, prompts: &'a [String]) -> &'a [String] {
        match self {
            Variant::SingleP if !prompts.is_empty() => &prompts[..1],
            _ => prompts,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Variant::Cia => "cia",
            Variant::CiaImage => "cia_image",
            Variant::CiaText => "cia_text",
            Variant::SingleP => "single_p",
            Variant::MultiP => "multi_p",
        };
        f.write_str(s)
    }
}

impl FromStr for Variant {
    type Err = CiaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cia" => Ok(Variant::Cia),
            "cia_image" => Ok(Variant::CiaImage),
            "cia_text" => Ok(Variant::CiaText),
            "single_p" => Ok(Variant::SingleP),
            "multi_p" => Ok(Variant::MultiP),
            other => Err(CiaError::Config(format!(
                "unknown attack variant '{other}' (expected cia|cia_image|cia_text|single_p|multi_p)"
            ))),
        }
    }
}

/// Everything one attack run needs besides the model and the image.
/// Fields left out of a config file take these defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackConfig {
    /// L∞ bound on the perturbation.
    #[serde(deserialize_with = "crate::fraction::float_or_fraction")]
    pub epsilon_v: f64,
    /// Step size of the sign update.
    #[serde(deserialize_with = "crate::fraction::float_or_fraction")]
    pub eta: f64,
    pub max_iters: usize,
    pub weights: LossWeights,
    pub variant: Variant,
    pub train_prompts: Vec<String>,
    pub injection: InjectionSpec,
    pub seed: u64,
    /// Stop early once the total loss drops below this value.
    #[serde(default, deserialize_with = "crate::fraction::opt_float_or_fraction")]
    pub early_stop_loss: Option<f64>,
}

pub const DEFAULT_EPSILON: f64 = 16.0 / 255.0;
pub const DEFAULT_ETA: f64 = 0.05;
pub const DEFAULT_MAX_ITERS: usize = 2000;

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            epsilon_v: DEFAULT_EPSILON,
            eta: DEFAULT_ETA,
            max_iters: DEFAULT_MAX_ITERS,
            weights: LossWeights::default(),
            variant: Variant::Cia,
            train_prompts: Vec::new(),
            injection: InjectionSpec::new("dog"),
            seed: 0,
            early_stop_loss: None,
        }
    }
}

impl AttackConfig {
    /// Degenerate values (ε=0, η=0, max_iters=0) are allowed: they turn the
    /// attack into an identity, which is occasionally useful as a control.
    pub fn validate(&self) -> Result<()> {
        if !self.epsilon_v.is_finite() || self.epsilon_v < 0.0 {
            return Err(CiaError::Config(format!(
                "epsilon_v must be a finite non-negative number, got {}",
                self.epsilon_v
            )));
        }
        if !self.eta.is_finite() || self.eta < 0.0 {
            return Err(CiaError::Config(format!(
                "eta must be a finite non-negative number, got {}",
                self.eta
            )));
        }
        self.weights.validate()?;
        if self.train_prompts.is_empty() {
            return Err(CiaError::EmptyPromptSet);
        }
        if let Some(t) = self.early_stop_loss {
            if !t.is_finite() {
                return Err(CiaError::Config(format!(
                    "early_stop_loss must be finite, got {t}"
                )));
            }
        }
        Ok(())
    }
}

/// The evolving perturbation plus its audit trail. `delta` is stored flat in
/// the image's row-major (y, x, channel) layout.
#[derive(Clone, Debug, PartialEq)]
pub struct PerturbationState<S> {
    pub delta: Vec<S>,
    pub height: usize,
    pub width: usize,
    /// Completed iterations; always equals `loss_history.len()`.
    pub iteration: usize,
    pub loss_history: Vec<LossBreakdown>,
}

impl<S: Scalar> PerturbationState<S> {
    pub fn zeros(original: &ImageTensor<S>) -> Self {
        PerturbationState {
            delta: vec![S::of_f64(0.0); original.values().len()],
            height: original.height(),
            width: original.width(),
            iteration: 0,
            loss_history: Vec::new(),
        }
    }

    /// Check internal consistency against the image the state belongs to:
    /// shape, the ε-ball bound, the pixel range, and the iteration count.
    pub fn validate(&self, original: &ImageTensor<S>, epsilon: f64) -> Result<()> {
        if self.height != original.height()
            || self.width != original.width()
            || self.delta.len() != original.values().len()
        {
            return Err(CiaError::ShapeMismatch {
                op: "perturbation_state",
                lhs: vec![self.height, self.width, self.delta.len()],
                rhs: vec![original.height(), original.width(), original.values().len()],
            });
        }
        if self.iteration != self.loss_history.len() {
            return Err(CiaError::BadOperand {
                op: "perturbation_state",
                message: format!(
                    "iteration count {} disagrees with loss history length {}",
                    self.iteration,
                    self.loss_history.len()
                ),
            });
        }
        for (i, (&d, &o)) in self.delta.iter().zip(original.values()).enumerate() {
            if !d.as_f64().is_finite() || d.as_f64().abs() > epsilon {
                return Err(CiaError::BadOperand {
                    op: "perturbation_state",
                    message: format!(
                        "delta[{i}] = {} escapes the ε-ball of radius {epsilon}",
                        d.as_f64()
                    ),
                });
            }
            let pixel = o + d;
            if pixel < S::of_f64(0.0) || pixel > S::of_f64(1.0) {
                return Err(CiaError::BadOperand {
                    op: "perturbation_state",
                    message: format!(
                        "adversarial pixel {i} = {} escapes [0,1]",
                        pixel.as_f64()
                    ),
                });
            }
        }
        Ok(())
    }
}

/// The stored-scalar clamp bound for ε: rounding ε into S may round up, so
/// step down until the stored value does not exceed ε in f64.
fn clamp_bound<S: Scalar>(epsilon: f64) -> S {
    let mut b = S::of_f64(epsilon);
    while b.as_f64() > epsilon {
        b = b.next_down();
    }
    b
}

/// Clamp every entry into `[−ε, ε]`.
pub fn project_linf<S: Scalar>(delta: &[S], epsilon: f64) -> Vec<S> {
    debug_assert!(epsilon >= 0.0, "project_linf: negative radius {epsilon}");
    let bound = clamp_bound::<S>(epsilon.max(0.0));
    delta
        .iter()
        .map(|&d| {
            if d > bound {
                bound
            } else if d < -bound {
                -bound
            } else {
                d
            }
        })
        .collect()
}

/// One sign-gradient step followed by the ε-ball projection and the image
/// range clamp. `sign(0) = 0`, so zero-gradient pixels never move.
pub fn pgd_step<S: Scalar>(
    delta: &[S],
    grad: &[f64],
    eta: f64,
    epsilon: f64,
    original: &ImageTensor<S>,
) -> Result<Vec<S>> {
    if delta.len() != grad.len() {
        return Err(CiaError::ShapeMismatch {
            op: "pgd_step",
            lhs: vec![delta.len()],
            rhs: vec![grad.len()],
        });
    }
    if delta.len() != original.values().len() {
        return Err(CiaError::ShapeMismatch {
            op: "pgd_step",
            lhs: vec![delta.len()],
            rhs: vec![original.values().len()],
        });
    }
    let eta_s = S::of_f64(eta);
    let bound = clamp_bound::<S>(epsilon);
    let one = S::of_f64(1.0);
    let zero = S::of_f64(0.0);
    let mut out = Vec::with_capacity(delta.len());
    for ((&d0, &g), &o) in delta.iter().zip(grad).zip(original.values()) {
        let step = if g > 0.0 {
            eta_s
        } else if g < 0.0 {
            -eta_s
        } else {
            zero
        };
        let mut d = d0 - step;
        if d > bound {
            d = bound;
        } else if d < -bound {
            d = -bound;
        }
        if o + d > one {
            d = one - o;
            while o + d > one {
                d = d.next_down();
            }
        } else if o + d < zero {
            d = -o;
        }
        out.push(d);
    }
    Ok(out)
}

/// `original + delta` as a validated image. The clamping in [`pgd_step`]
/// guarantees the sum stays in range; a violation here means state
/// corruption and surfaces as the image constructor's range error.
pub fn compose_adversarial<S: Scalar>(
    original: &ImageTensor<S>,
    delta: &[S],
) -> Result<ImageTensor<S>> {
    if delta.len() != original.values().len() {
        return Err(CiaError::ShapeMismatch {
            op: "compose_adversarial",
            lhs: vec![original.values().len()],
            rhs: vec![delta.len()],
        });
    }
    let values: Vec<S> = original
        .values()
        .iter()
        .zip(delta)
        .map(|(&o, &d)| o + d)
        .collect();
    ImageTensor::new(original.height(), original.width(), values)
}

/// Precomputed per-prompt sequence plans plus the schedule offset.
struct Schedule {
    plans: Vec<SequencePlan>,
    offset: usize,
}

impl Schedule {
    fn build<S: Scalar>(
        tokenizer: &Tokenizer,
        dims: &ModelDims,
        config: &AttackConfig,
        _model: &ModelWeights<S>,
    ) -> Result<Self> {
        let prompts = config.variant.effective_prompts(&config.train_prompts);
        if prompts.is_empty() {
            return Err(CiaError::EmptyPromptSet);
        }
        let plans = prompts
            .iter()
            .map(|p| plan_sequence(tokenizer, dims, &config.injection, p))
            .collect::<Result<Vec<_>>>()?;
        let offset = (SplitMix64::new(config.seed).next_u64() % plans.len() as u64) as usize;
        Ok(Schedule { plans, offset })
    }

    /// The plan for an absolute iteration index. Indexing by the absolute
    /// count (not the count within this call) makes resumed runs follow the
    /// same prompt sequence as uninterrupted ones.
    fn plan_for(&self, iteration: usize) -> &SequencePlan {
        &self.plans[(self.offset + iteration) % self.plans.len()]
    }
}

fn run_iterations<S: Scalar>(
    model: &ModelWeights<S>,
    original: &ImageTensor<S>,
    config: &AttackConfig,
    state: &mut PerturbationState<S>,
    iters: usize,
) -> Result<()> {
    let tokenizer = Tokenizer::new();
    let schedule = Schedule::build(&tokenizer, model.dims(), config, model)?;
    let weights = config.variant.effective_weights(config.weights);
    for _ in 0..iters {
        let adv = compose_adversarial(original, &state.delta)?;
        let mut tape = Tape::new();
        let plan = schedule.plan_for(state.iteration);
        let fwd = model.forward_logits(&mut tape, &adv, &plan.tokens)?;
        let l_v = loss_visual(&mut tape, fwd.logits, &plan.visual_targets)?;
        let l_t = loss_textual(&mut tape, fwd.logits, &plan.text_targets, &plan.layout)?;
        let l_o = loss_output(&mut tape, fwd.logits, &plan.output_targets, &plan.layout)?;
        let total = total_loss_on_tape(&mut tape, l_v, l_t, l_o, &weights)?;

        let breakdown = LossBreakdown::new(
            tape.value(l_v)?.item()?.as_f64(),
            tape.value(l_t)?.item()?.as_f64(),
            tape.value(l_o)?.item()?.as_f64(),
            weights,
        );
        if !breakdown.is_finite() {
            return Err(CiaError::NonFiniteLoss { iteration: state.iteration });
        }
        state.loss_history.push(breakdown);
        state.iteration += 1;
        if let Some(threshold) = config.early_stop_loss {
            if breakdown.l_total < threshold {
                break;
            }
        }

        let grads = tape.backward(total)?;
        let pixel_grad = grads.wrt(fwd.pixels).ok_or(CiaError::UnknownTensor {
            id: fwd.pixels.0,
        })?;
        let grad_f64 = pixel_grad.values_f64();
        state.delta = pgd_step(&state.delta, &grad_f64, config.eta, config.epsilon_v, original)?;

        #[cfg(debug_assertions)]
        {
            let eps = config.epsilon_v;
            for (&d, &o) in state.delta.iter().zip(original.values()) {
                debug_assert!(d.as_f64().abs() <= eps, "delta escaped the ε-ball");
                let p = o + d;
                debug_assert!(
                    p >= S::of_f64(0.0) && p <= S::of_f64(1.0),
                    "adversarial pixel escaped [0,1]"
                );
            }
        }
    }
    Ok(())
}

/// Run the configured attack from a zero perturbation. Returns the final
/// adversarial image and the full perturbation state (delta, iteration
/// count, per-iteration loss breakdowns).
pub fn run_attack<S: Scalar>(
    model: &ModelWeights<S>,
    image: &ImageTensor<S>,
    config: &AttackConfig,
) -> Result<(ImageTensor<S>, PerturbationState<S>)> {
    config.validate()?;
    let mut state = PerturbationState::zeros(image);
    run_iterations(model, image, config, &mut state, config.max_iters)?;
    let adv = compose_adversarial(image, &state.delta)?;
    Ok((adv, state))
}

/// Continue a finished or interrupted run for `extra_iters` more iterations.
/// Given the same model, image, and config, `resume` after k iterations
/// followed by m more is bitwise identical to a single (k+m)-iteration run.
pub fn resume<S: Scalar>(
    model: &ModelWeights<S>,
    image: &ImageTensor<S>,
    config: &AttackConfig,
    mut state: PerturbationState<S>,
    extra_iters: usize,
) -> Result<(ImageTensor<S>, PerturbationState<S>)> {
    config.validate()?;
    state.validate(image, config.epsilon_v)?;
    run_iterations(model, image, config, &mut state, extra_iters)?;
    let adv = compose_adversarial(image, &state.delta)?;
    Ok((adv, state))
}
