//! Tool configuration: which of the three tool groups an episode may use.

use std::fmt;
use std::str::FromStr;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// One of the three tool factors under study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Factor {
    /// Expert drafter: an external fine-tuned translation endpoint.
    Translator,
    /// Compiler feedback: whole-file elaboration diagnostics.
    Feedback,
    /// Symbol search: existence/type queries, fuzzy name resolution, web search.
    Search,
}

impl Factor {
    pub const ALL: [Factor; 3] = [Factor::Translator, Factor::Feedback, Factor::Search];

    /// Single-letter label used in tables and config codes.
    pub fn letter(self) -> char {
        match self {
            Factor::Translator => 'T',
            Factor::Feedback => 'F',
            Factor::Search => 'S',
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Factor::Translator => "Translation (T)",
            Factor::Feedback => "Feedback (F)",
            Factor::Search => "Search (S)",
        }
    }
}

impl fmt::Display for Factor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

/// An unordered pair of distinct factors, for interaction estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FactorPair(pub Factor, pub Factor);

impl FactorPair {
    pub const ALL: [FactorPair; 3] = [
        FactorPair(Factor::Feedback, Factor::Search),
        FactorPair(Factor::Feedback, Factor::Translator),
        FactorPair(Factor::Search, Factor::Translator),
    ];

    /// The factor left free, averaged over.
    pub fn remaining(self) -> Factor {
        Factor::ALL
            .into_iter()
            .find(|f| *f != self.0 && *f != self.1)
            .expect("a pair of distinct factors leaves one factor free")
    }

    pub fn label(self) -> String {
        format!("{}x{}", self.0.letter(), self.1.letter())
    }
}

/// The (T, F, S) bit triple selecting which tool groups are active.
///
/// Rendered as a three-character code in T, F, S order, e.g. `"110"` means
/// drafter and compiler feedback on, search off. `"000"` is the one-shot
/// baseline: an agent loop with zero tools reduces to plain generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ToolConfig {
    pub translator: bool,
    pub feedback: bool,
    pub search: bool,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid tool config code {0:?}: expected three characters over {{0,1}} in T,F,S order")]
pub struct ConfigCodeError(pub String);

impl ToolConfig {
    pub const BASELINE: ToolConfig = ToolConfig::new(false, false, false);

    /// All eight configurations in ascending code order (000 .. 111).
    pub const ALL: [ToolConfig; 8] = [
        ToolConfig::new(false, false, false),
        ToolConfig::new(false, false, true),
        ToolConfig::new(false, true, false),
        ToolConfig::new(false, true, true),
        ToolConfig::new(true, false, false),
        ToolConfig::new(true, false, true),
        ToolConfig::new(true, true, false),
        ToolConfig::new(true, true, true),
    ];

    pub const fn new(translator: bool, feedback: bool, search: bool) -> Self {
        ToolConfig { translator, feedback, search }
    }

    /// Three-character code over {0,1} in T, F, S order.
    pub fn code(self) -> String {
        let bit = |b: bool| if b { '1' } else { '0' };
        [bit(self.translator), bit(self.feedback), bit(self.search)]
            .iter()
            .collect()
    }

    /// The one-shot baseline with zero tools.
    pub fn is_baseline(self) -> bool {
        self == Self::BASELINE
    }

    /// Level of the given factor in this configuration.
    pub fn level(self, factor: Factor) -> bool {
        match factor {
            Factor::Translator => self.translator,
            Factor::Feedback => self.feedback,
            Factor::Search => self.search,
        }
    }

    /// The configuration with one factor forced to the given level.
    pub fn with_level(self, factor: Factor, level: bool) -> Self {
        let mut out = self;
        match factor {
            Factor::Translator => out.translator = level,
            Factor::Feedback => out.feedback = level,
            Factor::Search => out.search = level,
        }
        out
    }
}

impl FromStr for ToolConfig {
    type Err = ConfigCodeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bits: Vec<char> = s.chars().collect();
        if bits.len() != 3 || bits.iter().any(|c| *c != '0' && *c != '1') {
            return Err(ConfigCodeError(s.to_string()));
        }
        Ok(ToolConfig::new(bits[0] == '1', bits[1] == '1', bits[2] == '1'))
    }
}

impl fmt::Display for ToolConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.code())
    }
}

// Serialize as the bare code string so run records stay compact and greppable.
impl Serialize for ToolConfig {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.code())
    }
}

impl<'de> Deserialize<'de> for ToolConfig {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let code = String::deserialize(deserializer)?;
        code.parse().map_err(D::Error::custom)
    }
}
