//! Position bookkeeping for the three token segments.

use crate::error::{CiaError, Result};

/// Segment boundaries of one assembled sequence:
/// positions `0..end_v` are visual tokens, `end_v..end_t` the input text
/// (`<bos>` plus the possibly-padded prompt), and `end_t..n` the
/// teacher-forced output targets. `horizon` is the output segment length.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TokenLayout {
    pub end_v: usize,
    pub end_t: usize,
    pub n: usize,
    pub vocab_size: usize,
    pub horizon: usize,
}

impl TokenLayout {
    pub fn new(end_v: usize, end_t: usize, n: usize, vocab_size: usize) -> Result<Self> {
        if !(0 < end_v && end_v < end_t && end_t <= n) {
            return Err(CiaError::Config(format!(
                "token layout requires 0 < end_v < end_t <= n, got end_v={end_v}, end_t={end_t}, n={n}"
            )));
        }
        Ok(TokenLayout {
            end_v,
            end_t,
            n,
            vocab_size,
            horizon: n - end_t,
        })
    }

    /// Number of input-text positions excluding `<bos>`; equals the number
    /// of logit rows scored by the textual loss.
    pub fn text_segment_len(&self) -> usize {
        self.end_t - self.end_v - 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn horizon_is_output_segment_length() {
        let l = TokenLayout::new(16, 25, 32, 64).unwrap();
        assert_eq!(l.horizon, 7);
        assert_eq!(l.text_segment_len(), 8);
    }

    #[test]
    fn ordering_invariants_enforced() {
        assert!(TokenLayout::new(0, 5, 10, 64).is_err());
        assert!(TokenLayout::new(5, 5, 10, 64).is_err());
        assert!(TokenLayout::new(5, 11, 10, 64).is_err());
        assert!(TokenLayout::new(5, 10, 10, 64).is_ok()); // empty output segment
    }
}
