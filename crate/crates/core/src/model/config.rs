use core::fmt;
use core::str::FromStr;

use crate::error::{bail, Error, Result};
use crate::graph::{Mode, RelationLayout, TreeShape};
use crate::numeric::AdamConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    /// Causal next-token prediction from every token node.
    LanguageModel,
    /// Sequence classification from the root node.
    Classification,
}

/// `Verify` runs in 64-bit with dropout forced off; `Fast` runs in 32-bit
/// with the configured dropout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    Verify,
    Fast,
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Precision::Verify => "verify",
            Precision::Fast => "fast",
        })
    }
}

impl FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "verify" => Ok(Precision::Verify),
            "fast" => Ok(Precision::Fast),
            _ => bail!(InvalidInput, "unknown precision {s:?} (expected verify or fast)"),
        }
    }
}

/// Inverted-dropout rates: embeddings, sublayer outputs, attention weights,
/// and the root state before the classifier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DropoutRates {
    pub input: f64,
    pub hidden: f64,
    pub attention: f64,
    pub classifier: f64,
}

impl DropoutRates {
    pub const NONE: Self = Self { input: 0.0, hidden: 0.0, attention: 0.0, classifier: 0.0 };
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub n_max: usize,
    pub k: usize,
    pub layers: usize,
    pub d_model: usize,
    pub heads: usize,
    pub d_ff: usize,
    pub mode: Mode,
    /// 0 means "take it from the corpus".
    pub vocab_size: usize,
    pub num_classes: usize,
    pub dropout: DropoutRates,
    pub seed: u64,
    pub precision: Precision,
    pub optimizer: AdamConfig,
    pub steps: u64,
    pub batch_size: usize,
    pub log_every: u64,
    pub valid_fraction: f64,
    pub test_fraction: f64,
}

impl Default for RunConfig {
    /// Desk-scale character language model.
    fn default() -> Self {
        Self {
            n_max: 128,
            k: 16,
            layers: 2,
            d_model: 64,
            heads: 4,
            d_ff: 256,
            mode: Mode::Causal,
            vocab_size: 0,
            num_classes: 0,
            dropout: DropoutRates { input: 0.1, hidden: 0.1, attention: 0.1, classifier: 0.1 },
            seed: 0,
            precision: Precision::Fast,
            optimizer: AdamConfig::default(),
            steps: 2000,
            batch_size: 8,
            log_every: 100,
            valid_fraction: 0.05,
            test_fraction: 0.05,
        }
    }
}

impl RunConfig {
    /// Desk-scale word-level classifier.
    pub fn classification() -> Self {
        Self {
            n_max: 64,
            k: 4,
            mode: Mode::Bidirectional,
            dropout: DropoutRates { input: 0.4, hidden: 0.1, attention: 0.3, classifier: 0.4 },
            steps: 1000,
            batch_size: 16,
            log_every: 50,
            valid_fraction: 0.1,
            test_fraction: 0.1,
            ..Self::default()
        }
    }

    pub fn task(&self) -> Task {
        match self.mode {
            Mode::Causal => Task::LanguageModel,
            Mode::Bidirectional => Task::Classification,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: alloc::string::String| Err(Error::Config(msg));
        if self.k == 0 {
            return fail("k must be at least 1".into());
        }
        if self.n_max == 0 {
            return fail("n_max must be at least 1".into());
        }
        if self.layers == 0 {
            return fail("layers must be at least 1".into());
        }
        if self.d_model == 0 || self.d_ff == 0 {
            return fail("d_model and d_ff must be positive".into());
        }
        if self.heads == 0 || !self.d_model.is_multiple_of(self.heads) {
            return fail(alloc::format!("heads = {} must divide d_model = {}", self.heads, self.d_model));
        }
        let d = &self.dropout;
        for (name, p) in
            [("input", d.input), ("hidden", d.hidden), ("attention", d.attention), ("classifier", d.classifier)]
        {
            if !(0.0..1.0).contains(&p) {
                return fail(alloc::format!("dropout_{name} = {p} outside [0, 1)"));
            }
        }
        let o = &self.optimizer;
        if o.lr.is_nan()
            || o.lr < 0.0
            || !(0.0..1.0).contains(&o.beta1)
            || !(0.0..1.0).contains(&o.beta2)
            || o.eps.is_nan()
            || o.eps <= 0.0
        {
            return fail("optimizer settings out of range".into());
        }
        if self.batch_size == 0 || self.log_every == 0 {
            return fail("batch_size and log_every must be positive".into());
        }
        let (v, t) = (self.valid_fraction, self.test_fraction);
        if !(0.0..1.0).contains(&v) || !(0.0..1.0).contains(&t) || v + t >= 1.0 {
            return fail("valid_fraction + test_fraction must lie in [0, 1)".into());
        }
        Ok(())
    }

    pub fn padded_len(&self) -> usize {
        self.n_max.next_power_of_two()
    }

    pub fn levels(&self) -> Result<u32> {
        Ok(TreeShape::new(self.n_max)?.levels())
    }

    pub fn relation_layout(&self) -> Result<RelationLayout> {
        RelationLayout::new(self.k, self.levels()?)
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }

    /// Dropout rates in effect for training under this precision.
    pub fn training_dropout(&self) -> DropoutRates {
        match self.precision {
            Precision::Verify => DropoutRates::NONE,
            Precision::Fast => self.dropout,
        }
    }

    pub fn output_size(&self) -> usize {
        match self.task() {
            Task::LanguageModel => self.vocab_size,
            Task::Classification => self.num_classes,
        }
    }
}
