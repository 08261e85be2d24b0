//! Evaluation harness: cross-prompt attack-success-rate, per-position
//! cross-entropy diagnostics, top-k decoding, hyperparameter sweeps, and the
//! method comparison table.
//!
//! Every function here is a pure computation of its arguments — repeated
//! calls agree bitwise — so sweep cells can run on a thread pool without
//! affecting results.

use crate::attack::{run_attack, AttackConfig, Variant};
use crate::error::{CiaError, Result};
use crate::image::ImageTensor;
use crate::model::{ModelWeights, Tokenizer, BOS, UNK};
use crate::objective::{plan_sequence, InjectionSpec};
use crate::scalar::Scalar;
use crate::tensor::{stable_cross_entropy, stable_softmax};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Default greedy-generation horizon for evaluation: long enough for the
/// misleading template sentence, short enough for fast sweeps.
pub const DEFAULT_MAX_NEW: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Category {
    #[serde(rename = "CLS")]
    Cls,
    #[serde(rename = "CAP")]
    Cap,
    #[serde(rename = "VQA")]
    Vqa,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Cls, Category::Cap, Category::Vqa];
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Category::Cls => "CLS",
            Category::Cap => "CAP",
            Category::Vqa => "VQA",
        })
    }
}

impl FromStr for Category {
    type Err = CiaError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "CLS" => Ok(Category::Cls),
            "CAP" => Ok(Category::Cap),
            "VQA" => Ok(Category::Vqa),
            other => Err(CiaError::Config(format!(
                "unknown prompt category '{other}' (expected CLS|CAP|VQA)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Eval,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Eval => "eval",
        })
    }
}

impl FromStr for Split {
    type Err = CiaError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "eval" => Ok(Split::Eval),
            other => Err(CiaError::Config(format!(
                "unknown split '{other}' (expected train|eval)"
            ))),
        }
    }
}

/// A named group of prompts from one category and one split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PromptSet {
    pub category: Category,
    pub split: Split,
    pub prompts: Vec<String>,
}

impl PromptSet {
    pub fn new(category: Category, split: Split, prompts: Vec<String>) -> Result<Self> {
        let set = PromptSet { category, split, prompts };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        if self.prompts.is_empty() {
            return Err(CiaError::EmptyPromptSet);
        }
        for (i, p) in self.prompts.iter().enumerate() {
            if self.prompts[..i].contains(p) {
                return Err(CiaError::Config(format!(
                    "duplicate prompt in {} {} set: '{p}'",
                    self.category, self.split
                )));
            }
        }
        Ok(())
    }
}

/// One prompt's evaluation outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PromptVerdict {
    pub category: Category,
    pub prompt: String,
    pub generated: String,
    pub hit: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoryAsr {
    pub category: Category,
    pub hits: usize,
    pub total: usize,
    pub asr: f64,
}

/// Attack-success-rate report: the fraction of prompts whose greedy output
/// contains the target, per category and overall.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsrReport {
    pub target: String,
    pub max_new: usize,
    pub verdicts: Vec<PromptVerdict>,
    pub per_category: Vec<CategoryAsr>,
    pub hits: usize,
    pub total: usize,
    pub overall_asr: f64,
}

/// True when `needle` occurs in `hay` as a contiguous run.
fn contains_subsequence(hay: &[usize], needle: &[usize]) -> bool {
    !needle.is_empty() && needle.len() <= hay.len()
        && hay.windows(needle.len()).any(|w| w == needle)
}

/// Aggregate verdicts into a report: per-category ASR in first-appearance
/// order, overall ASR as the exact hits/total ratio.
fn aggregate_verdicts(target: &str, max_new: usize, verdicts: Vec<PromptVerdict>) -> AsrReport {
    let mut per_category: Vec<CategoryAsr> = Vec::new();
    for v in &verdicts {
        match per_category.iter_mut().find(|c| c.category == v.category) {
            Some(c) => {
                c.total += 1;
                c.hits += usize::from(v.hit);
            }
            None => per_category.push(CategoryAsr {
                category: v.category,
                hits: usize::from(v.hit),
                total: 1,
                asr: 0.0,
            }),
        }
    }
    for c in &mut per_category {
        c.asr = c.hits as f64 / c.total as f64;
    }
    let hits = verdicts.iter().filter(|v| v.hit).count();
    let total = verdicts.len();
    AsrReport {
        target: target.to_string(),
        max_new,
        verdicts,
        per_category,
        hits,
        total,
        overall_asr: hits as f64 / total as f64,
    }
}

fn target_token_ids(tokenizer: &Tokenizer, target: &str) -> Result<Vec<usize>> {
    let ids = tokenizer.tokenize(target);
    if ids.is_empty() {
        return Err(CiaError::Tokenization(
            "target text produced no tokens".to_string(),
        ));
    }
    if ids.contains(&UNK) {
        return Err(CiaError::Tokenization(format!(
            "target '{target}' contains out-of-vocabulary words"
        )));
    }
    Ok(ids)
}

/// Greedy-generate `max_new` tokens for every prompt and score hits: a hit
/// is the target's token ids appearing as a contiguous run in the output.
pub fn evaluate_asr<S: Scalar>(
    model: &ModelWeights<S>,
    image: &ImageTensor<S>,
    prompt_sets: &[PromptSet],
    target: &str,
    max_new: usize,
) -> Result<AsrReport> {
    if prompt_sets.iter().map(|s| s.prompts.len()).sum::<usize>() == 0 {
        return Err(CiaError::EmptyPromptSet);
    }
    let tokenizer = Tokenizer::new();
    let target_ids = target_token_ids(&tokenizer, target)?;
    let mut verdicts = Vec::new();
    for set in prompt_sets {
        for prompt in &set.prompts {
            let prompt_ids = tokenizer.tokenize(prompt);
            if prompt_ids.is_empty() {
                return Err(CiaError::Tokenization(format!(
                    "prompt '{prompt}' produced no tokens"
                )));
            }
            let mut seq = Vec::with_capacity(prompt_ids.len() + 1);
            seq.push(BOS);
            seq.extend_from_slice(&prompt_ids);
            let generated = model.generate_greedy(image, &seq, max_new)?;
            verdicts.push(PromptVerdict {
                category: set.category,
                prompt: prompt.clone(),
                generated: tokenizer.detokenize(&generated)?,
                hit: contains_subsequence(&generated, &target_ids),
            });
        }
    }
    Ok(aggregate_verdicts(target, max_new, verdicts))
}

/// Segment a logit row belongs to in a planned attack sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Segment {
    Visual,
    Text,
    Generated,
}

impl fmt::Display for Segment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Segment::Visual => "visual",
            Segment::Text => "text",
            Segment::Generated => "generated",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CePoint {
    pub position: usize,
    pub segment: Segment,
    pub ce: f64,
}

/// Cross-entropy of one target token at every logit row of a planned
/// sequence, with per-segment arithmetic means.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CeProfile {
    pub target: String,
    pub points: Vec<CePoint>,
    pub visual_mean: f64,
    pub text_mean: f64,
    pub generated_mean: f64,
}

impl CeProfile {
    pub fn segment_mean(&self, segment: Segment) -> f64 {
        match segment {
            Segment::Visual => self.visual_mean,
            Segment::Text => self.text_mean,
            Segment::Generated => self.generated_mean,
        }
    }
}

/// CE of the (single-token) target at every logit row of the attack
/// sequence planned for `prompt`. Rows split into the visual segment
/// `[0, end_v)`, the input-text segment `[end_v, end_t−1)`, and the
/// generated segment `[end_t−1, n)` — the same rows the three losses score.
pub fn ce_by_position<S: Scalar>(
    model: &ModelWeights<S>,
    image: &ImageTensor<S>,
    prompt: &str,
    target: &str,
    injection: &InjectionSpec,
) -> Result<CeProfile> {
    let tokenizer = Tokenizer::new();
    let target_ids = target_token_ids(&tokenizer, target)?;
    if target_ids.len() != 1 {
        return Err(CiaError::Tokenization(format!(
            "cross-entropy profile needs a single-token target, '{target}' has {} tokens",
            target_ids.len()
        )));
    }
    let target_id = target_ids[0];
    let plan = plan_sequence(&tokenizer, model.dims(), injection, prompt)?;
    let logits = model.logits_for(image, &plan.tokens)?;
    let n = plan.layout.n;
    let v = plan.layout.vocab_size;
    let mut points = Vec::with_capacity(n);
    let mut sums = [0.0f64; 3];
    let mut counts = [0usize; 3];
    for r in 0..n {
        let row: Vec<f64> = (0..v).map(|j| logits.at(r, j).as_f64()).collect();
        let segment = if r < plan.layout.end_v {
            Segment::Visual
        } else if r < plan.layout.end_t - 1 {
            Segment::Text
        } else {
            Segment::Generated
        };
        let ce = stable_cross_entropy(&row, target_id);
        let s = segment as usize;
        sums[s] += ce;
        counts[s] += 1;
        points.push(CePoint { position: r, segment, ce });
    }
    Ok(CeProfile {
        target: target.to_string(),
        points,
        visual_mean: sums[0] / counts[0] as f64,
        text_mean: sums[1] / counts[1] as f64,
        generated_mean: sums[2] / counts[2] as f64,
    })
}

/// One decoded token with its softmax probability.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TokenProb {
    pub token: usize,
    pub text: String,
    pub probability: f64,
}

/// Top `k` of one probability row: descending probability, ties broken
/// toward the lower token id.
fn top_k_of_row(probs: &[f64], k: usize) -> Vec<(usize, f64)> {
    let mut indexed: Vec<(usize, f64)> = probs.iter().copied().enumerate().collect();
    indexed.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.0.cmp(&b.0))
    });
    indexed.truncate(k);
    indexed
}

/// Decode the `k` most probable tokens at every logit row of
/// `<bos> + prompt` (no injection, no teacher forcing).
pub fn topk_decode_by_position<S: Scalar>(
    model: &ModelWeights<S>,
    image: &ImageTensor<S>,
    prompt: &str,
    k: usize,
) -> Result<Vec<Vec<TokenProb>>> {
    let v = model.dims().vocab_size;
    if k == 0 || k > v {
        return Err(CiaError::Config(format!(
            "top-k size must lie in 1..={v}, got {k}"
        )));
    }
    let tokenizer = Tokenizer::new();
    let prompt_ids = tokenizer.tokenize(prompt);
    if prompt_ids.is_empty() {
        return Err(CiaError::Tokenization(format!(
            "prompt '{prompt}' produced no tokens"
        )));
    }
    let mut seq = Vec::with_capacity(prompt_ids.len() + 1);
    seq.push(BOS);
    seq.extend_from_slice(&prompt_ids);
    let logits = model.logits_for(image, &seq)?;
    let rows = logits.shape()[0];
    let mut out = Vec::with_capacity(rows);
    for r in 0..rows {
        let row: Vec<f64> = (0..v).map(|j| logits.at(r, j).as_f64()).collect();
        let probs = stable_softmax(&row);
        let top = top_k_of_row(&probs, k)
            .into_iter()
            .map(|(token, probability)| {
                Ok(TokenProb {
                    token,
                    text: tokenizer.token(token)?.to_string(),
                    probability,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(top);
    }
    Ok(out)
}

/// ASR with the filled misleading template prepended to every prompt and
/// the image left untouched: measures how far text alone carries the
/// injection. An empty template reduces this to [`evaluate_asr`] exactly.
pub fn textual_injection_eval<S: Scalar>(
    model: &ModelWeights<S>,
    image: &ImageTensor<S>,
    prompt_sets: &[PromptSet],
    injection: &InjectionSpec,
    max_new: usize,
) -> Result<AsrReport> {
    let prefix = injection.filled_template();
    let modified: Vec<PromptSet> = if prefix.trim().is_empty() {
        prompt_sets.to_vec()
    } else {
        prompt_sets
            .iter()
            .map(|s| PromptSet {
                category: s.category,
                split: s.split,
                prompts: s.prompts.iter().map(|p| format!("{prefix} {p}")).collect(),
            })
            .collect()
    };
    evaluate_asr(model, image, &modified, &injection.target_text, max_new)
}

/// Run `f` over `items`, on a local thread pool when `jobs > 1`. Results
/// keep input order, so the parallel and sequential paths agree exactly.
fn map_cells<T, U, F>(jobs: usize, items: Vec<T>, f: F) -> Result<Vec<U>>
where
    T: Send,
    U: Send,
    F: Fn(T) -> Result<U> + Sync,
{
    if jobs <= 1 || items.len() <= 1 {
        return items.into_iter().map(f).collect();
    }
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CiaError::Config(format!("worker pool: {e}")))?;
    pool.install(|| items.into_par_iter().map(&f).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepAbCell {
    pub alpha: f64,
    pub beta: f64,
    pub overall_asr: f64,
}

/// Attack + evaluate once per (α, β) pair. Cell order matches the input
/// grid; any cell failure is reported with its coordinates attached.
pub fn sweep_alpha_beta<S: Scalar>(
    model: &ModelWeights<S>,
    image: &ImageTensor<S>,
    base_config: &AttackConfig,
    grid: &[(f64, f64)],
    eval_prompts: &[PromptSet],
    max_new: usize,
    jobs: usize,
) -> Result<Vec<SweepAbCell>> {
    if grid.is_empty() {
        return Err(CiaError::Config("empty α/β grid".to_string()));
    }
    map_cells(jobs, grid.to_vec(), |(alpha, beta)| {
        let cell = |alpha: f64, beta: f64| -> Result<SweepAbCell> {
            let mut config = base_config.clone();
            config.weights = crate::objective::LossWeights::new(alpha, beta)?;
            let (adv, _) = run_attack(model, image, &config)?;
            let report = evaluate_asr(
                model,
                &adv,
                eval_prompts,
                &config.injection.target_text,
                max_new,
            )?;
            Ok(SweepAbCell { alpha, beta, overall_asr: report.overall_asr })
        };
        cell(alpha, beta).map_err(|source| CiaError::SweepCell {
            alpha,
            beta,
            source: Box::new(source),
        })
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonReport {
    pub epsilon: f64,
    pub report: AsrReport,
}

/// Attack + evaluate once per perturbation budget, in input order.
pub fn sweep_epsilon<S: Scalar>(
    model: &ModelWeights<S>,
    image: &ImageTensor<S>,
    base_config: &AttackConfig,
    eps_list: &[f64],
    eval_prompts: &[PromptSet],
    max_new: usize,
    jobs: usize,
) -> Result<Vec<EpsilonReport>> {
    if eps_list.is_empty() {
        return Err(CiaError::Config("empty ε list".to_string()));
    }
    for &e in eps_list {
        if !e.is_finite() || e <= 0.0 {
            return Err(CiaError::Config(format!(
                "sweep ε values must be positive, got {e}"
            )));
        }
    }
    map_cells(jobs, eps_list.to_vec(), |epsilon| {
        let mut config = base_config.clone();
        config.epsilon_v = epsilon;
        let (adv, _) = run_attack(model, image, &config)?;
        let report = evaluate_asr(
            model,
            &adv,
            eval_prompts,
            &config.injection.target_text,
            max_new,
        )?;
        Ok(EpsilonReport { epsilon, report })
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantReport {
    pub variant: Variant,
    pub report: AsrReport,
}

/// One attack + evaluation per variant under a shared seed, image, and
/// prompt discipline. Row order is fixed: single_p, multi_p, cia_image,
/// cia_text, cia.
pub fn compare_methods<S: Scalar>(
    model: &ModelWeights<S>,
    image: &ImageTensor<S>,
    base_config: &AttackConfig,
    eval_prompts: &[PromptSet],
    max_new: usize,
    jobs: usize,
) -> Result<Vec<VariantReport>> {
    map_cells(jobs, Variant::ALL.to_vec(), |variant| {
        let mut config = base_config.clone();
        config.variant = variant;
        let (adv, _) = run_attack(model, image, &config)?;
        let report = evaluate_asr(
            model,
            &adv,
            eval_prompts,
            &config.injection.target_text,
            max_new,
        )?;
        Ok(VariantReport { variant, report })
    })
}
