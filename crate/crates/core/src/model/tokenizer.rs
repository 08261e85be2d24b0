//! Fixed 64-entry vocabulary and the word/punctuation tokenizer.

use crate::error::{CiaError, Result};
use std::collections::HashMap;

pub const BOS: usize = 0;
pub const EOS: usize = 1;
pub const UNK: usize = 2;
pub const PAD: usize = 3;

/// The vocabulary ships as a fixed ordered list: four reserved tokens, the
/// full set of attack target words, the misleading-description template
/// words, the most frequent words of the bundled prompt corpus, and the
/// punctuation characters used both by the prompts and as padding fillers.
const VOCABULARY: [&str; 64] = [
    "<bos>", "<eos>", "<unk>", "<pad>", // reserved
    "dog", "fish", "bomb", "poison", "sure", "unknown", "yes", "no", "good", "bad", "sorry",
    "cat", "bird", "flower", "green", "human", "blood", "gun", "drug", "virus", "porn", // targets
    "this", "image", "shows", "a", // template
    "the", "in", "what", "would", "or", "if", "you", "were", "of", "label", "to", "describe",
    "content", "be", "for", "one", "it", "is", "how", "many", "say", "picture", "category",
    "central", "provide", // corpus fillers
    "!", "@", "+", "*", "&", "#", "/", ".", "?", ",", // punctuation
];

#[derive(Debug)]
pub struct Tokenizer {
    ids: HashMap<&'static str, usize>,
}

impl Default for Tokenizer {
    fn default() -> Self {
        Self::new()
    }
}

impl Tokenizer {
    pub fn new() -> Self {
        let ids = VOCABULARY.iter().enumerate().map(|(i, &w)| (w, i)).collect();
        Tokenizer { ids }
    }

    pub fn vocab_size(&self) -> usize {
        VOCABULARY.len()
    }

    pub fn vocabulary(&self) -> &'static [&'static str] {
        &VOCABULARY
    }

    pub fn id_of(&self, word: &str) -> Option<usize> {
        self.ids.get(word).copied()
    }

    pub fn token(&self, id: usize) -> Result<&'static str> {
        VOCABULARY
            .get(id)
            .copied()
            .ok_or(CiaError::TargetOutOfRange { index: id, vocab: VOCABULARY.len() })
    }

    pub fn is_reserved(&self, id: usize) -> bool {
        id < 4
    }

    /// Lowercase, split into alphanumeric runs and single punctuation
    /// characters, map out-of-vocabulary pieces to `<unk>`. Non-empty input
    /// always yields at least one token.
    pub fn tokenize(&self, text: &str) -> Vec<usize> {
        let mut out = Vec::new();
        let lower = text.to_lowercase();
        let mut word = String::new();
        let flush = |word: &mut String, out: &mut Vec<usize>| {
            if !word.is_empty() {
                out.push(self.id_of(word).unwrap_or(UNK));
                word.clear();
            }
        };
        for ch in lower.chars() {
            if ch.is_alphanumeric() {
                word.push(ch);
            } else {
                flush(&mut word, &mut out);
                if !ch.is_whitespace() {
                    let mut buf = [0u8; 4];
                    out.push(self.id_of(ch.encode_utf8(&mut buf)).unwrap_or(UNK));
                }
            }
        }
        flush(&mut word, &mut out);
        if out.is_empty() && !text.is_empty() {
            out.push(UNK);
        }
        out
    }

    /// Space-joined vocabulary entries; reserved tokens are omitted.
    pub fn detokenize(&self, tokens: &[usize]) -> Result<String> {
        let mut words = Vec::with_capacity(tokens.len());
        for &id in tokens {
            let word = self.token(id)?;
            if !self.is_reserved(id) {
                words.push(word);
            }
        }
        Ok(words.join(" "))
    }

    /// True when `text` tokenizes to at least one token and none are `<unk>`.
    pub fn tokenizes_cleanly(&self, text: &str) -> bool {
        let toks = self.tokenize(text);
        !toks.is_empty() && toks.iter().all(|&t| t != UNK)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vocabulary_is_unique_and_reserved_ids_fixed() {
        let t = Tokenizer::new();
        assert_eq!(t.vocab_size(), 64);
        let mut seen = std::collections::HashSet::new();
        for w in t.vocabulary() {
            assert!(seen.insert(*w), "duplicate vocabulary entry {w}");
        }
        assert_eq!(t.id_of("<bos>"), Some(BOS));
        assert_eq!(t.id_of("<eos>"), Some(EOS));
        assert_eq!(t.id_of("<unk>"), Some(UNK));
        assert_eq!(t.id_of("<pad>"), Some(PAD));
    }

    #[test]
    fn all_target_words_present() {
        let t = Tokenizer::new();
        for target in [
            "dog", "fish", "bomb", "poison", "sure", "unknown", "yes", "no", "good", "bad",
            "sorry", "cat", "bird", "flower", "green", "human", "blood", "gun", "drug", "virus",
            "porn",
        ] {
            assert!(t.id_of(target).is_some(), "missing target {target}");
        }
    }

    #[test]
    fn empty_input_gives_no_tokens() {
        assert!(Tokenizer::new().tokenize("").is_empty());
    }

    #[test]
    fn case_folding() {
        let t = Tokenizer::new();
        let dog = t.id_of("dog").unwrap();
        assert_eq!(t.tokenize("Dog dog"), vec![dog, dog]);
    }

    #[test]
    fn out_of_vocabulary_maps_to_unk() {
        let t = Tokenizer::new();
        assert_eq!(t.tokenize("zxqv"), vec![UNK]);
    }

    #[test]
    fn whitespace_only_input_yields_unk() {
        let t = Tokenizer::new();
        assert_eq!(t.tokenize("   "), vec![UNK]);
    }

    #[test]
    fn punctuation_split_into_single_tokens() {
        let t = Tokenizer::new();
        let got = t.tokenize("what is this?");
        let expect = vec![
            t.id_of("what").unwrap(),
            t.id_of("is").unwrap(),
            t.id_of("this").unwrap(),
            t.id_of("?").unwrap(),
        ];
        assert_eq!(got, expect);
    }

    #[test]
    fn round_trip_for_in_vocabulary_words() {
        let t = Tokenizer::new();
        let toks = t.tokenize("a dog");
        assert_eq!(t.detokenize(&toks).unwrap(), "a dog");
    }

    #[test]
    fn detokenize_omits_reserved_tokens() {
        let t = Tokenizer::new();
        let dog = t.id_of("dog").unwrap();
        assert_eq!(t.detokenize(&[BOS, dog, EOS]).unwrap(), "dog");
    }

    #[test]
    fn detokenize_rejects_out_of_range_ids() {
        let t = Tokenizer::new();
        assert!(matches!(
            t.detokenize(&[64]),
            Err(CiaError::TargetOutOfRange { index: 64, vocab: 64 })
        ));
    }

    #[test]
    fn template_sentence_tokenizes_cleanly() {
        let t = Tokenizer::new();
        assert!(t.tokenizes_cleanly("this image shows a dog"));
        let toks = t.tokenize("this image shows a dog");
        assert_eq!(toks.len(), 5);
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            // Any sequence of unreserved tokens survives a detokenize /
            // tokenize round trip, punctuation included.
            #[test]
            fn unreserved_sequences_round_trip(ids in prop::collection::vec(4usize..64, 0..12)) {
                let t = Tokenizer::new();
                let text = t.detokenize(&ids).unwrap();
                prop_assert_eq!(t.tokenize(&text), ids);
            }

            #[test]
            fn arbitrary_text_maps_into_vocabulary(text in ".*") {
                let t = Tokenizer::new();
                for id in t.tokenize(&text) {
                    prop_assert!(id < t.vocab_size());
                }
            }
        }
    }
}
