//! Token vocabulary with fixed reserved ids.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::corpus::Sentence;
use crate::error::{Error, Result};

pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const EOS: u32 = 2;
pub const UNK: u32 = 3;
pub const NUM_RESERVED: usize = 4;

const RESERVED_RENDERING: [&str; NUM_RESERVED] = ["<PAD>", "<BOS>", "<EOS>", "<UNK>"];

/// Maps surface tokens to ids `NUM_RESERVED..size` and back. Ids `0..4` are
/// PAD, BOS, EOS, UNK in that order and never collide with corpus tokens.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    /// Builds from an explicit token list, ids assigned in list order.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, tok) in tokens.iter().enumerate() {
            if tok.is_empty() || tok.chars().any(char::is_whitespace) {
                return Err(Error::InvalidArgument(format!(
                    "vocabulary token {tok:?} is empty or contains whitespace"
                )));
            }
            if RESERVED_RENDERING.contains(&tok.as_str()) {
                return Err(Error::InvalidArgument(format!(
                    "token {tok:?} collides with a reserved rendering"
                )));
            }
            let id = (i + NUM_RESERVED) as u32;
            if index.insert(tok.clone(), id).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate token {tok:?}")));
            }
        }
        Ok(Vocabulary { tokens, index })
    }

    /// Builds from whitespace-tokenized text: tokens ranked by frequency
    /// (ties broken lexicographically), truncated to `max_size` surface
    /// tokens.
    pub fn build(lines: &[String], max_size: usize) -> Result<Self> {
        let mut counts: HashMap<&str, u64> = HashMap::new();
        for line in lines {
            for tok in line.split_whitespace() {
                *counts.entry(tok).or_insert(0) += 1;
            }
        }
        let mut ranked: Vec<(&str, u64)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(max_size);
        Self::from_tokens(ranked.into_iter().map(|(t, _)| t.to_string()).collect())
    }

    /// Total id space including the four reserved ids.
    pub fn size(&self) -> usize {
        self.tokens.len() + NUM_RESERVED
    }

    /// Id for a surface token; unknown tokens map to UNK.
    pub fn token_to_id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    /// Surface form for an id. Reserved ids render as `<PAD>`, `<BOS>`,
    /// `<EOS>`, `<UNK>`.
    pub fn id_to_token(&self, id: u32) -> Result<&str> {
        if (id as usize) < NUM_RESERVED {
            return Ok(RESERVED_RENDERING[id as usize]);
        }
        self.tokens
            .get(id as usize - NUM_RESERVED)
            .map(String::as_str)
            .ok_or(Error::TokenOutOfRange {
                id,
                vocab_size: self.size(),
            })
    }

    /// Tokenizes on whitespace and encodes; out-of-vocabulary tokens become
    /// UNK.
    pub fn encode(&self, raw: &str) -> Result<Sentence> {
        Sentence::new(raw.split_whitespace().map(|t| self.token_to_id(t)).collect())
    }

    /// Space-joined surface forms; UNK renders as `<UNK>`.
    pub fn decode(&self, sentence: &Sentence) -> Result<String> {
        let mut parts = Vec::with_capacity(sentence.len());
        for &id in sentence.ids() {
            parts.push(self.id_to_token(id)?);
        }
        Ok(parts.join(" "))
    }

    /// One surface token per line; line number determines the id.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = self.tokens.join("\n");
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_tokens(text.lines().map(str::to_string).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reserved_ids_are_pinned() {
        assert_eq!((PAD, BOS, EOS, UNK), (0, 1, 2, 3));
        let v = Vocabulary::from_tokens(vec!["cat".into(), "dog".into()]).unwrap();
        assert_eq!(v.size(), 6);
        assert_eq!(v.token_to_id("cat"), 4);
        assert_eq!(v.token_to_id("dog"), 5);
        assert_eq!(v.id_to_token(0).unwrap(), "<PAD>");
        assert_eq!(v.id_to_token(3).unwrap(), "<UNK>");
    }

    #[test]
    fn unknown_token_becomes_unk() {
        let v = Vocabulary::from_tokens(vec!["cat".into()]).unwrap();
        assert_eq!(v.token_to_id("zebra"), UNK);
        let s = v.encode("cat zebra cat").unwrap();
        assert_eq!(s.ids(), &[4, UNK, 4]);
        assert_eq!(v.decode(&s).unwrap(), "cat <UNK> cat");
    }

    #[test]
    fn encode_decode_roundtrip_for_known_tokens() {
        let v = Vocabulary::from_tokens(vec!["a".into(), "b".into(), "c".into()]).unwrap();
        let s = v.encode("c a b b").unwrap();
        assert_eq!(v.decode(&s).unwrap(), "c a b b");
    }

    #[test]
    fn out_of_range_id_is_error() {
        let v = Vocabulary::from_tokens(vec!["a".into()]).unwrap();
        assert!(v.id_to_token(5).is_err());
    }

    #[test]
    fn build_ranks_by_frequency_then_lexicographic() {
        let lines = vec![
            "b b b a a c".to_string(),
            "a d d".to_string(),
        ];
        // Counts: a=3, b=3, d=2, c=1. Frequency desc, ties lexicographic.
        let v = Vocabulary::build(&lines, 3).unwrap();
        assert_eq!(v.token_to_id("a"), 4);
        assert_eq!(v.token_to_id("b"), 5);
        assert_eq!(v.token_to_id("d"), 6);
        assert_eq!(v.token_to_id("c"), UNK);
    }

    #[test]
    fn rejects_bad_tokens() {
        assert!(Vocabulary::from_tokens(vec!["<UNK>".into()]).is_err());
        assert!(Vocabulary::from_tokens(vec!["a b".into()]).is_err());
        assert!(Vocabulary::from_tokens(vec!["".into()]).is_err());
        assert!(Vocabulary::from_tokens(vec!["x".into(), "x".into()]).is_err());
    }

    #[test]
    fn save_load_preserves_order() {
        let dir = std::env::temp_dir().join("dualoop-vocab-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("vocab.txt");
        let v = Vocabulary::from_tokens(vec!["q".into(), "p".into(), "r".into()]).unwrap();
        v.save(&path).unwrap();
        let loaded = Vocabulary::load(&path).unwrap();
        assert_eq!(v, loaded);
        std::fs::remove_dir_all(&dir).ok();
    }
}
