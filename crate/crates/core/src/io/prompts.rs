//! Prompt files and the bundled evaluation corpus.
//!
//! Prompt files are UTF-8 text, one prompt per line; lines whose first
//! non-blank character is `#` are comments, blank lines are skipped, and
//! duplicate lines collapse to the first occurrence.
//!
//! The bundled corpus carries ten prompts per category (classification,
//! captioning, visual question answering). Prompts may use words outside
//! the model vocabulary; those tokenize to `<unk>`, which is fine for
//! evaluation — only attack targets must tokenize cleanly.

use crate::error::{CiaError, Result};
use crate::eval::{Category, PromptSet, Split};
use crate::rng::SplitMix64;
use std::fs;
use std::path::Path;

pub const CLS_PROMPTS: [&str; 10] = [
    "If this image were turned into a jigsaw puzzle, what would the box label say to describe the picture inside?",
    "Classify the content of this image.",
    "If you were to label this image, what label would you give?",
    "What category best describes this image?",
    "Describe the central subject of this image in a single word.",
    "Provide a classification for the object depicted in this image.",
    "If this image were in a photo album, what would its label be?",
    "Categorize the content of the image.",
    "If you were to sort this image into a category, which one would it be?",
    "What keyword would you associate with this image?",
];

pub const CAP_PROMPTS: [&str; 10] = [
    "Describe the content of this image.",
    "What's happening in this image?",
    "Provide a brief caption for this image.",
    "Tell a story about this image in one sentence.",
    "If this image could speak, what would it say?",
    "Summarize the scenario depicted in this image.",
    "What is the central theme or event shown in the picture?",
    "Create a headline for this image.",
    "Explain the scene captured in this image.",
    "If this were a postcard, what message would it convey?",
];

pub const VQA_PROMPTS: [&str; 10] = [
    "Any cutlery items visible in the image?",
    "Can you find any musical instruments in this image?",
    "Does the image appear to be a cartoon or comic strip?",
    "How many animals are present in the image?",
    "Is a chair noticeable in the image?",
    "How many statues or monuments stand prominently in the scene?",
    "How many different patterns or motifs are evident in clothing or objects?",
    "What is the spacing between objects or subjects in the image?",
    "Would you describe the image as bright or dark?",
    "What type of textures can be felt if one could touch the image's content?",
];

/// Per-category prompts bundled with the tool.
pub fn bundled_prompts(category: Category) -> &'static [&'static str] {
    match category {
        Category::Cls => &CLS_PROMPTS,
        Category::Cap => &CAP_PROMPTS,
        Category::Vqa => &VQA_PROMPTS,
    }
}

/// Bundled-corpus train/eval prompts, three sets each (CLS, CAP, VQA).
#[derive(Clone, Debug, PartialEq)]
pub struct CorpusSplit {
    pub train: Vec<PromptSet>,
    pub eval: Vec<PromptSet>,
}

impl CorpusSplit {
    pub fn set(&self, category: Category, split: Split) -> &PromptSet {
        let group = match split {
            Split::Train => &self.train,
            Split::Eval => &self.eval,
        };
        group
            .iter()
            .find(|s| s.category == category)
            .expect("corpus split always carries all three categories")
    }
}

pub const TRAIN_PER_CATEGORY: usize = 6;
pub const EVAL_PER_CATEGORY: usize = 4;

/// Shuffle each category with a single seeded generator and split 6/4 into
/// train/eval. The same seed always produces the same split.
pub fn split_bundled_corpus(seed: u64) -> CorpusSplit {
    let mut rng = SplitMix64::new(seed);
    let mut train = Vec::with_capacity(3);
    let mut eval = Vec::with_capacity(3);
    for category in Category::ALL {
        let mut prompts: Vec<String> = bundled_prompts(category)
            .iter()
            .map(|p| p.to_string())
            .collect();
        rng.shuffle(&mut prompts);
        let eval_part = prompts.split_off(TRAIN_PER_CATEGORY);
        train.push(PromptSet {
            category,
            split: Split::Train,
            prompts,
        });
        eval.push(PromptSet {
            category,
            split: Split::Eval,
            prompts: eval_part,
        });
    }
    CorpusSplit { train, eval }
}

/// Load a prompt file into a set tagged with the given category and split.
pub fn load_prompts(
    path: impl AsRef<Path>,
    category: Category,
    split: Split,
) -> Result<PromptSet> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| CiaError::io(path.display().to_string(), e))?;
    let mut prompts: Vec<String> = Vec::new();
    for line in text.lines() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if !prompts.iter().any(|p| p == trimmed) {
            prompts.push(trimmed.to_string());
        }
    }
    if prompts.is_empty() {
        return Err(CiaError::format(
            path.display().to_string(),
            "no prompts left after dropping comments and blank lines",
        ));
    }
    PromptSet::new(category, split, prompts)
}
