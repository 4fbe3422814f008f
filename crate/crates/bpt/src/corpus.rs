//! Corpus loading, vocabularies and train/valid/test splits.
//!
//! Held-out test data is wrapped in [`TestSplit`], whose contents can only be
//! reached through [`TestSplit::for_evaluation`]. Training entry points take
//! [`TrainData`], which has no test field at all.

use std::collections::HashMap;

use bpt_core::model::{Sample, PAD_ID};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{HarnessError, Result};

pub const UNK_ID: u32 = 1;
pub const EOS_ID: u32 = 2;

const SPECIALS: [&str; 3] = ["<pad>", "<unk>", "<eos>"];

/// Symbol table with the reserved ids PAD = 0, UNK = 1, EOS = 2; further
/// symbols are numbered by first occurrence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    symbols: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    pub fn from_symbols<S: AsRef<str>>(symbols: impl IntoIterator<Item = S>) -> Self {
        let mut vocab = Vocab { symbols: Vec::new(), index: HashMap::new() };
        for s in SPECIALS {
            vocab.insert(s);
        }
        for s in symbols {
            vocab.insert(s.as_ref());
        }
        vocab
    }

    /// Rebuilds a vocabulary from its full symbol list, specials included.
    pub fn from_table(symbols: Vec<String>) -> Result<Self> {
        if symbols.len() < SPECIALS.len() || symbols[..3] != SPECIALS {
            return Err(HarnessError::Data("vocabulary table lacks the reserved symbols".into()));
        }
        let vocab = Self::from_symbols(&symbols[3..]);
        if vocab.len() != symbols.len() {
            return Err(HarnessError::Data("vocabulary table has duplicate symbols".into()));
        }
        Ok(vocab)
    }

    fn insert(&mut self, s: &str) {
        if !self.index.contains_key(s) {
            self.index.insert(s.to_owned(), self.symbols.len() as u32);
            self.symbols.push(s.to_owned());
        }
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Id of `symbol`, or UNK when unseen.
    pub fn id(&self, symbol: &str) -> u32 {
        self.index.get(symbol).copied().unwrap_or(UNK_ID)
    }

    pub fn symbol(&self, id: u32) -> Option<&str> {
        self.symbols.get(id as usize).map(String::as_str)
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }
}

/// Data that must not influence training. Only evaluation code unwraps it.
#[derive(Debug, Clone, PartialEq)]
pub struct TestSplit<T>(T);

impl<T> TestSplit<T> {
    pub fn for_evaluation(&self) -> &T {
        &self.0
    }
}

/// Everything a training run may look at.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainData {
    pub train: Vec<Sample>,
    pub valid: Vec<Sample>,
    pub vocab: Vocab,
    /// Class names for classification, empty for language modeling.
    pub labels: Vec<String>,
}

fn split_sizes(len: usize, valid_fraction: f64, test_fraction: f64) -> Result<(usize, usize, usize)> {
    let test = (len as f64 * test_fraction).floor() as usize;
    let valid = (len as f64 * valid_fraction).floor() as usize;
    let train = len.saturating_sub(test + valid);
    if train == 0 || valid == 0 || (test_fraction > 0.0 && test == 0) {
        return Err(HarnessError::Data(format!(
            "{len} items cannot be split into non-empty train/valid/test parts \
             (valid_fraction = {valid_fraction}, test_fraction = {test_fraction})"
        )));
    }
    Ok((train, valid, test))
}

/// Character stream split in order into train, valid and test.
#[derive(Debug, Clone, PartialEq)]
pub struct LmCorpus {
    pub vocab: Vocab,
    pub train: Vec<u32>,
    pub valid: Vec<u32>,
    pub test: TestSplit<Vec<u32>>,
}

impl LmCorpus {
    /// The vocabulary comes from the train part only; other characters map
    /// to UNK.
    pub fn from_text(text: &str, valid_fraction: f64, test_fraction: f64) -> Result<Self> {
        let chars: Vec<char> = text.chars().collect();
        let (n_train, n_valid, _) = split_sizes(chars.len(), valid_fraction, test_fraction)?;
        let (train, rest) = chars.split_at(n_train);
        let (valid, test) = rest.split_at(n_valid);
        let mut buf = [0u8; 4];
        let vocab = Vocab::from_symbols(train.iter().map(|c| c.encode_utf8(&mut buf).to_owned()));
        Ok(Self {
            train: encode_chars(&vocab, train),
            valid: encode_chars(&vocab, valid),
            test: TestSplit(encode_chars(&vocab, test)),
            vocab,
        })
    }

    /// Drops the test split and chunks the rest into training samples.
    pub fn training_data(&self, n_max: usize) -> Result<TrainData> {
        Ok(TrainData {
            train: lm_chunks(&self.train, n_max)?,
            valid: lm_chunks(&self.valid, n_max)?,
            vocab: self.vocab.clone(),
            labels: Vec::new(),
        })
    }
}

/// Encodes characters with an existing vocabulary.
pub fn encode_chars(vocab: &Vocab, chars: &[char]) -> Vec<u32> {
    let mut buf = [0u8; 4];
    chars.iter().map(|c| vocab.id(c.encode_utf8(&mut buf))).collect()
}

/// Non-overlapping windows of `n_max` ids. Each position's target is the
/// next id of the stream; the final position of the stream predicts EOS.
pub fn lm_chunks(stream: &[u32], n_max: usize) -> Result<Vec<Sample>> {
    if n_max == 0 {
        return Err(HarnessError::Data("n_max must be positive".into()));
    }
    Ok(stream
        .chunks(n_max)
        .enumerate()
        .map(|(c, tokens)| {
            let start = c * n_max;
            let targets = (0..tokens.len()).map(|t| stream.get(start + t + 1).copied().unwrap_or(EOS_ID)).collect();
            Sample::Lm { tokens: tokens.to_vec(), targets, mask: vec![true; tokens.len()] }
        })
        .collect())
}

/// One `label<TAB>text` record with whitespace-split words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledText {
    pub label: String,
    pub words: Vec<String>,
}

pub fn parse_labeled_lines(text: &str) -> Result<Vec<LabeledText>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (label, body) = line
            .split_once('\t')
            .ok_or_else(|| HarnessError::Data(format!("line {}: expected label<TAB>text", i + 1)))?;
        let label = label.trim();
        let words: Vec<String> = body.split_whitespace().map(str::to_owned).collect();
        if label.is_empty() || words.is_empty() {
            return Err(HarnessError::Data(format!("line {}: empty label or text", i + 1)));
        }
        out.push(LabeledText { label: label.to_owned(), words });
    }
    Ok(out)
}

/// Labeled sequences, shuffled once with `seed` and split into train, valid
/// and test. Vocabulary and label set come from the train part.
#[derive(Debug, Clone, PartialEq)]
pub struct ClsCorpus {
    pub vocab: Vocab,
    pub labels: Vec<String>,
    pub train: Vec<LabeledText>,
    pub valid: Vec<LabeledText>,
    pub test: TestSplit<Vec<LabeledText>>,
}

impl ClsCorpus {
    pub fn from_text(text: &str, valid_fraction: f64, test_fraction: f64, seed: u64) -> Result<Self> {
        let mut records = parse_labeled_lines(text)?;
        let (n_train, n_valid, _) = split_sizes(records.len(), valid_fraction, test_fraction)?;
        records.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let test = records.split_off(n_train + n_valid);
        let valid = records.split_off(n_train);
        let train = records;
        let vocab = Vocab::from_symbols(train.iter().flat_map(|r| r.words.iter()));
        let mut labels: Vec<String> = Vec::new();
        for r in &train {
            if !labels.contains(&r.label) {
                labels.push(r.label.clone());
            }
        }
        Ok(Self { vocab, labels, train, valid, test: TestSplit(test) })
    }

    pub fn training_data(&self, n_max: usize) -> Result<TrainData> {
        Ok(TrainData {
            train: encode_labeled(&self.train, &self.vocab, &self.labels, n_max)?,
            valid: encode_labeled(&self.valid, &self.vocab, &self.labels, n_max)?,
            vocab: self.vocab.clone(),
            labels: self.labels.clone(),
        })
    }
}

/// Maps words and labels to ids. Texts longer than `n_max` keep their first
/// `n_max` words; labels outside `labels` are a data error.
pub fn encode_labeled(records: &[LabeledText], vocab: &Vocab, labels: &[String], n_max: usize) -> Result<Vec<Sample>> {
    let mut truncated = 0;
    let samples = records
        .iter()
        .map(|r| {
            let label = labels
                .iter()
                .position(|l| *l == r.label)
                .ok_or_else(|| HarnessError::Data(format!("label {:?} is not in the label set {labels:?}", r.label)))?;
            if r.words.len() > n_max {
                truncated += 1;
            }
            let tokens = r.words.iter().take(n_max).map(|w| vocab.id(w)).collect();
            Ok(Sample::Cls { tokens, label })
        })
        .collect::<Result<Vec<_>>>()?;
    if truncated > 0 {
        log::warn!("{truncated} texts longer than {n_max} words were truncated");
    }
    Ok(samples)
}

/// Prepends `shift` PAD placeholders to every sample.
pub fn shift_samples(samples: &[Sample], shift: usize, n_max: usize) -> Result<Vec<Sample>> {
    samples
        .iter()
        .map(|s| match s {
            Sample::Cls { tokens, label } => {
                if tokens.len() + shift > n_max {
                    return Err(HarnessError::Data(format!(
                        "shift {shift} makes a {}-token text exceed n_max = {n_max}",
                        tokens.len()
                    )));
                }
                let mut shifted = vec![PAD_ID; shift];
                shifted.extend_from_slice(tokens);
                Ok(Sample::Cls { tokens: shifted, label: *label })
            }
            Sample::Lm { .. } => Err(HarnessError::Data("shifting applies to classification data".into())),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vocab_ids_follow_first_occurrence() {
        let v = Vocab::from_symbols(["b", "a", "b", "c"]);
        assert_eq!(v.len(), 6);
        assert_eq!((v.id("b"), v.id("a"), v.id("c")), (3, 4, 5));
        assert_eq!(v.id("zzz"), UNK_ID);
        assert_eq!(Vocab::from_table(v.symbols().to_vec()).unwrap(), v);
        assert!(Vocab::from_table(vec!["x".into()]).is_err());
    }

    #[test]
    fn lm_split_and_unknowns() {
        let c = LmCorpus::from_text("aaaaaaaabz", 0.1, 0.1).unwrap();
        assert_eq!(c.train.len(), 8);
        assert_eq!(c.valid, vec![UNK_ID]);
        assert_eq!(c.test.for_evaluation(), &vec![UNK_ID]);
        assert_eq!(c.vocab.len(), 4);
    }

    #[test]
    fn tiny_corpus_rejected() {
        assert!(matches!(LmCorpus::from_text("ab", 0.1, 0.1), Err(HarnessError::Data(_))));
    }

    #[test]
    fn chunks_predict_next_symbol() {
        let chunks = lm_chunks(&[3, 4, 5, 6, 7], 2).unwrap();
        assert_eq!(chunks.len(), 3);
        assert_eq!(chunks[0], Sample::Lm { tokens: vec![3, 4], targets: vec![4, 5], mask: vec![true; 2] });
        assert_eq!(chunks[1], Sample::Lm { tokens: vec![5, 6], targets: vec![6, 7], mask: vec![true; 2] });
        assert_eq!(chunks[2], Sample::Lm { tokens: vec![7], targets: vec![EOS_ID], mask: vec![true] });
    }

    #[test]
    fn labeled_lines() {
        let recs = parse_labeled_lines("pos\tgood film\n\nneg\t bad  one \n").unwrap();
        assert_eq!(recs[1].words, vec!["bad", "one"]);
        assert!(parse_labeled_lines("no tab here").is_err());
        assert!(parse_labeled_lines("x\t   ").is_err());
    }

    #[test]
    fn unknown_label_is_data_error() {
        let recs = parse_labeled_lines("a\tx y\nb\tz").unwrap();
        let vocab = Vocab::from_symbols(["x"]);
        let err = encode_labeled(&recs, &vocab, &["a".to_owned()], 8).unwrap_err();
        assert!(matches!(err, HarnessError::Data(_)));
    }

    #[test]
    fn shift_prepends_pad_and_checks_length() {
        let s = vec![Sample::Cls { tokens: vec![5, 6], label: 1 }];
        assert_eq!(shift_samples(&s, 2, 4).unwrap(), vec![Sample::Cls { tokens: vec![0, 0, 5, 6], label: 1 }]);
        assert!(matches!(shift_samples(&s, 3, 4), Err(HarnessError::Data(_))));
    }
}
