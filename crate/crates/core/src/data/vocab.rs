//! Word-level vocabulary with reserved PAD/MASK/UNK ids.

use std::collections::BTreeMap;
use std::path::Path;

use crate::data::TEXT_LEN;
use crate::error::Error;
use crate::Result;

pub const PAD_ID: u32 = 0;
pub const MASK_ID: u32 = 1;
pub const UNK_ID: u32 = 2;
/// Number of reserved ids preceding corpus words.
pub const RESERVED_IDS: u32 = 3;

/// Bijective word -> token-id map. Corpus words occupy contiguous ids
/// `3..V` in lexicographic order; ids 0..2 are PAD, MASK, UNK.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(transparent)]
pub struct Vocabulary {
    words: BTreeMap<String, u32>,
}

impl Vocabulary {
    /// Total size V including the three reserved ids.
    pub fn size(&self) -> usize {
        self.words.len() + RESERVED_IDS as usize
    }

    /// Token id for `word`, or UNK when out of vocabulary.
    pub fn id_of(&self, word: &str) -> u32 {
        self.words.get(word).copied().unwrap_or(UNK_ID)
    }

    /// Word for a non-reserved id.
    pub fn word_of(&self, id: u32) -> Option<&str> {
        if id < RESERVED_IDS {
            return None;
        }
        self.words
            .iter()
            .find(|(_, &v)| v == id)
            .map(|(w, _)| w.as_str())
    }

    /// Uniformly random non-reserved token id. Panics on an empty word set.
    pub fn random_word_id(&self, rng: &mut impl rand::Rng) -> u32 {
        assert!(!self.words.is_empty(), "vocabulary has no corpus words");
        RESERVED_IDS + rng.random_range(0..self.words.len() as u32)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let v: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        // Ids must be the contiguous lexicographic assignment produced by
        // build_vocabulary; reject hand-edited files that break the bijection.
        for (i, (_, &id)) in v.words.iter().enumerate() {
            if id != RESERVED_IDS + i as u32 {
                return Err(Error::Dataset(format!(
                    "vocab ids are not contiguous lexicographic from {RESERVED_IDS} (found {id} at position {i})"
                )));
            }
        }
        Ok(v)
    }
}

/// Build a vocabulary from tokenized transcripts. Words are sorted
/// lexicographically and assigned ids from 3 upward.
pub fn build_vocabulary<S: AsRef<str>>(transcripts: &[Vec<S>]) -> Result<Vocabulary> {
    let mut sorted: Vec<&str> = transcripts
        .iter()
        .flat_map(|t| t.iter().map(|w| w.as_ref()))
        .collect();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let words = sorted
        .into_iter()
        .enumerate()
        .map(|(i, w)| (w.to_string(), RESERVED_IDS + i as u32))
        .collect();
    Ok(Vocabulary { words })
}

/// Fixed-length token sequence for one clip.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TextSequence {
    pub token_ids: [u32; TEXT_LEN],
    /// Count of non-PAD tokens; positions >= valid_len are PAD.
    pub valid_len: usize,
}

impl TextSequence {
    pub fn ids_usize(&self) -> Vec<usize> {
        self.token_ids.iter().map(|&i| i as usize).collect()
    }
}

/// Map words to ids, truncate to 32 tokens, and zero-pad. Out-of-vocabulary
/// words become UNK. Over-long input is truncated silently; callers that care
/// compare `words.len()` against [`TEXT_LEN`].
pub fn tokenize<S: AsRef<str>>(words: &[S], vocab: &Vocabulary) -> TextSequence {
    let mut token_ids = [PAD_ID; TEXT_LEN];
    let valid_len = words.len().min(TEXT_LEN);
    for (slot, word) in token_ids.iter_mut().zip(words.iter()) {
        *slot = vocab.id_of(word.as_ref());
    }
    TextSequence { token_ids, valid_len }
}

/// Words for the non-PAD positions of a sequence. Reserved ids render as
/// `<mask>` / `<unk>`.
pub fn detokenize(seq: &TextSequence, vocab: &Vocabulary) -> Vec<String> {
    seq.token_ids[..seq.valid_len]
        .iter()
        .map(|&id| match id {
            MASK_ID => "<mask>".to_string(),
            UNK_ID => "<unk>".to_string(),
            other => vocab.word_of(other).unwrap_or("<unk>").to_string(),
        })
        .collect()
}
