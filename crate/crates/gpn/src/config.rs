use serde::{Deserialize, Serialize};

use crate::error::{GpnError, Result};
use crate::features::FEATURE_DIM;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Encoder {
    Gat,
    Gcn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregator {
    Lstm,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scorer {
    Attention,
    Mlp,
}

/// How often node embeddings are recomputed during a rollout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reencode {
    PerStep,
    PerEpisode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub hidden: usize,
    pub heads: usize,
    pub layers: usize,
    pub features: usize,
    pub encoder: Encoder,
    pub aggregator: Aggregator,
    pub scorer: Scorer,
    pub logit_scale: f64,
    pub epsilon: f64,
    pub max_user: usize,
    pub leaky_slope: f64,
    pub reencode: Reencode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden: 128,
            heads: 4,
            layers: 2,
            features: FEATURE_DIM,
            encoder: Encoder::Gat,
            aggregator: Aggregator::Lstm,
            scorer: Scorer::Attention,
            logit_scale: 10.0,
            epsilon: 1e-15,
            max_user: 20,
            leaky_slope: 0.2,
            reencode: Reencode::PerStep,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(GpnError::Config(m));
        if self.hidden == 0 || self.heads == 0 || self.layers == 0 {
            return bad("hidden, heads and layers must be positive".into());
        }
        if self.hidden % self.heads != 0 {
            return bad(format!("hidden {} is not divisible by {} heads", self.hidden, self.heads));
        }
        if self.features != FEATURE_DIM {
            return bad(format!("feature dimension must be {FEATURE_DIM}, got {}", self.features));
        }
        if !(self.logit_scale > 0.0) {
            return bad(format!("logit scale must be positive, got {}", self.logit_scale));
        }
        if !(self.epsilon >= 0.0) || self.max_user == 0 {
            return bad("epsilon must be non-negative and max_user positive".into());
        }
        Ok(())
    }

    /// Short label used for ablation variants.
    pub fn variant(&self) -> String {
        let mut parts = Vec::new();
        if self.encoder == Encoder::Gcn {
            parts.push("gcn");
        }
        if self.aggregator == Aggregator::None {
            parts.push("no-lstm");
        }
        if self.scorer == Scorer::Mlp {
            parts.push("mlp");
        }
        if parts.is_empty() {
            "full".into()
        } else {
            parts.join("+")
        }
    }

    /// The named ablation variant of this configuration.
    pub fn with_variant(&self, name: &str) -> Result<Self> {
        let mut c = self.clone();
        c.encoder = Encoder::Gat;
        c.aggregator = Aggregator::Lstm;
        c.scorer = Scorer::Attention;
        match name {
            "full" => {}
            "gcn" => c.encoder = Encoder::Gcn,
            "no-lstm" => c.aggregator = Aggregator::None,
            "mlp" => c.scorer = Scorer::Mlp,
            other => return Err(GpnError::Config(format!("unknown variant {other:?}"))),
        }
        Ok(c)
    }
}

pub const VARIANTS: [&str; 4] = ["full", "gcn", "no-lstm", "mlp"];
