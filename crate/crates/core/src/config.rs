//! Training configuration and its flat `key = value` text form.

use std::fmt;
use std::str::FromStr;

use crate::corpus::SemanticType;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    /// Partially connected document graph with iterative inference.
    EoG,
    /// Every node pair connected, entity pairs included.
    Full,
    /// No inference; entity pairs are represented by their node embeddings.
    NoInf,
    /// Trained and evaluated on single sentences, merged per entity pair.
    Sent,
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "eog" => Ok(Self::EoG),
            "full" => Ok(Self::Full),
            "noinf" => Ok(Self::NoInf),
            "sent" => Ok(Self::Sent),
            _ => Err(Error::Config(format!("unknown variant `{s}`"))),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::EoG => "EoG",
            Self::Full => "Full",
            Self::NoInf => "NoInf",
            Self::Sent => "Sent",
        })
    }
}

/// Which initial edge families are built.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EdgeFlags {
    pub mm: bool,
    pub me: bool,
    pub ms: bool,
    pub es: bool,
    pub ss_direct: bool,
    pub ss_indirect: bool,
}

impl Default for EdgeFlags {
    fn default() -> Self {
        Self {
            mm: true,
            me: true,
            ms: true,
            es: true,
            ss_direct: true,
            ss_indirect: true,
        }
    }
}

impl EdgeFlags {
    pub fn none() -> Self {
        Self {
            mm: false,
            me: false,
            ms: false,
            es: false,
            ss_direct: false,
            ss_indirect: false,
        }
    }

    /// Comma-separated family names; `SS` stands for both sentence families.
    pub fn parse(s: &str) -> Result<Self> {
        let mut f = Self::none();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part.to_ascii_uppercase().as_str() {
                "MM" => f.mm = true,
                "ME" => f.me = true,
                "MS" => f.ms = true,
                "ES" => f.es = true,
                "SS" => {
                    f.ss_direct = true;
                    f.ss_indirect = true;
                }
                "SS_DIRECT" => f.ss_direct = true,
                "SS_INDIRECT" => f.ss_indirect = true,
                _ => return Err(Error::Config(format!("unknown edge family `{part}`"))),
            }
        }
        Ok(f)
    }
}

impl fmt::Display for EdgeFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        for (on, name) in [
            (self.mm, "MM"),
            (self.me, "ME"),
            (self.ms, "MS"),
            (self.es, "ES"),
            (self.ss_direct, "SS_direct"),
            (self.ss_indirect, "SS_indirect"),
        ] {
            if on {
                parts.push(name);
            }
        }
        f.write_str(&parts.join(","))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub gradient_clipping: f64,
    pub early_stop_patience: usize,
    pub regularization: f64,
    pub dropout_word: f64,
    pub dropout_classification: f64,
    pub word_dim: usize,
    pub node_type_dim: usize,
    pub distance_dim: usize,
    pub edge_dim: usize,
    pub hidden_dim: usize,
    pub beta: f64,
    pub inference_iterations: usize,
    pub variant: Variant,
    pub edges: EdgeFlags,
    pub node_types: bool,
    pub mm_context: bool,
    pub distances: bool,
    pub seed: u64,
    pub max_epochs: usize,
    pub head_type: SemanticType,
    pub tail_type: SemanticType,
    pub freeze_words: bool,
    /// Also drop excluded pairs from the training loss, not only from scoring.
    pub exclude_in_training: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 2,
            learning_rate: 0.002,
            gradient_clipping: 10.0,
            early_stop_patience: 10,
            regularization: 1e-4,
            dropout_word: 0.5,
            dropout_classification: 0.3,
            word_dim: 200,
            node_type_dim: 10,
            distance_dim: 10,
            edge_dim: 100,
            hidden_dim: 100,
            beta: 0.8,
            inference_iterations: 3,
            variant: Variant::EoG,
            edges: EdgeFlags::default(),
            node_types: true,
            mm_context: true,
            distances: true,
            seed: 0,
            max_epochs: 300,
            head_type: SemanticType::Chemical,
            tail_type: SemanticType::Disease,
            freeze_words: false,
            exclude_in_training: false,
        }
    }
}

pub const KEYS: &[&str] = &[
    "batch_size",
    "learning_rate",
    "gradient_clipping",
    "early_stop_patience",
    "regularization",
    "dropout_word",
    "dropout_classification",
    "word_dim",
    "node_type_dim",
    "distance_dim",
    "edge_dim",
    "hidden_dim",
    "beta",
    "inference_iterations",
    "variant",
    "edges",
    "node_types",
    "mm_context",
    "distances",
    "seed",
    "max_epochs",
    "head_type",
    "tail_type",
    "freeze_words",
    "exclude_in_training",
];

fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}`")))
}

fn flag(key: &str, v: &str) -> Result<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("`{key}`: expected a boolean, got `{v}`"))),
    }
}

impl TrainConfig {
    /// CDR settings; the same as [`Default`].
    pub fn cdr() -> Self {
        Self::default()
    }

    /// GDA settings: batch 3, gene-disease pairs, 16-step edges.
    pub fn gda() -> Self {
        Self {
            batch_size: 3,
            head_type: SemanticType::Gene,
            inference_iterations: 4,
            ..Self::default()
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "batch_size" => self.batch_size = num(key, v)?,
            "learning_rate" => self.learning_rate = num(key, v)?,
            "gradient_clipping" => self.gradient_clipping = num(key, v)?,
            "early_stop_patience" => self.early_stop_patience = num(key, v)?,
            "regularization" => self.regularization = num(key, v)?,
            "dropout_word" => self.dropout_word = num(key, v)?,
            "dropout_classification" => self.dropout_classification = num(key, v)?,
            "word_dim" => self.word_dim = num(key, v)?,
            "node_type_dim" => self.node_type_dim = num(key, v)?,
            "distance_dim" => self.distance_dim = num(key, v)?,
            "edge_dim" => self.edge_dim = num(key, v)?,
            "hidden_dim" => self.hidden_dim = num(key, v)?,
            "beta" => self.beta = num(key, v)?,
            "inference_iterations" => self.inference_iterations = num(key, v)?,
            "variant" => self.variant = v.parse()?,
            "edges" => self.edges = EdgeFlags::parse(v)?,
            "node_types" => self.node_types = flag(key, v)?,
            "mm_context" => self.mm_context = flag(key, v)?,
            "distances" => self.distances = flag(key, v)?,
            "seed" => self.seed = num(key, v)?,
            "max_epochs" => self.max_epochs = num(key, v)?,
            "head_type" => self.head_type = v.parse()?,
            "tail_type" => self.tail_type = v.parse()?,
            "freeze_words" => self.freeze_words = flag(key, v)?,
            "exclude_in_training" => self.exclude_in_training = flag(key, v)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines over `self`; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`", i + 1))
            })?;
            self.set(k.trim(), v)
                .map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(text)?;
        c.validate()?;
        Ok(c)
    }

    /// Canonical text form: every key, in a fixed order.
    pub fn to_text(&self) -> String {
        let values: Vec<String> = vec![
            self.batch_size.to_string(),
            self.learning_rate.to_string(),
            self.gradient_clipping.to_string(),
            self.early_stop_patience.to_string(),
            self.regularization.to_string(),
            self.dropout_word.to_string(),
            self.dropout_classification.to_string(),
            self.word_dim.to_string(),
            self.node_type_dim.to_string(),
            self.distance_dim.to_string(),
            self.edge_dim.to_string(),
            self.hidden_dim.to_string(),
            self.beta.to_string(),
            self.inference_iterations.to_string(),
            self.variant.to_string(),
            self.edges.to_string(),
            self.node_types.to_string(),
            self.mm_context.to_string(),
            self.distances.to_string(),
            self.seed.to_string(),
            self.max_epochs.to_string(),
            self.head_type.to_string(),
            self.tail_type.to_string(),
            self.freeze_words.to_string(),
            self.exclude_in_training.to_string(),
        ];
        KEYS.iter()
            .zip(values)
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: &str| Err(Error::Config(m.to_string()));
        if self.batch_size == 0 {
            return err("batch_size must be positive");
        }
        if !(self.learning_rate > 0.0) || !(self.gradient_clipping > 0.0) {
            return err("learning_rate and gradient_clipping must be positive");
        }
        if !(self.regularization >= 0.0) {
            return err("regularization must be non-negative");
        }
        for (name, r) in [
            ("dropout_word", self.dropout_word),
            ("dropout_classification", self.dropout_classification),
        ] {
            if !(0.0..1.0).contains(&r) {
                return Err(Error::Config(format!("{name} must lie in [0, 1)")));
            }
        }
        if self.word_dim == 0 || self.edge_dim == 0 || self.hidden_dim == 0 {
            return err("word_dim, edge_dim and hidden_dim must be positive");
        }
        if self.node_types && self.node_type_dim == 0 || self.distances && self.distance_dim == 0 {
            return err("enabled node types or distances need a positive dimension");
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return err("beta must lie in [0, 1]");
        }
        if self.max_epochs == 0 {
            return err("max_epochs must be positive");
        }
        if self.head_type == self.tail_type {
            return err("head_type and tail_type must differ");
        }
        match self.variant {
            Variant::NoInf if self.inference_iterations > 0 => {
                return err("variant NoInf requires inference_iterations = 0")
            }
            Variant::Full if self.edges != EdgeFlags::default() => {
                return err("variant Full connects every node pair; edge ablations do not apply")
            }
            _ => {}
        }
        Ok(())
    }
}
