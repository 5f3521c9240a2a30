use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Network architecture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// Shared weights across orders `1..=p`, fused by element-wise max.
    #[serde(rename = "HLHG")]
    Hlhg,
    /// Classical two-layer GCN, first-order propagation only.
    #[serde(rename = "GCN_BASELINE")]
    GcnBaseline,
    /// Separate weights per order, outputs concatenated column-wise.
    #[serde(rename = "CONCAT_BASELINE")]
    ConcatBaseline,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Hlhg => "HLHG",
            Variant::GcnBaseline => "GCN_BASELINE",
            Variant::ConcatBaseline => "CONCAT_BASELINE",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub variant: Variant,
    pub order_p: usize,
    pub hidden_units: usize,
    pub input_dim: usize,
    pub num_classes: usize,
    pub dropout_rate: f64,
    pub l2_weight: f64,
    /// Apply the L2 term to every weight matrix instead of the first layer only.
    #[serde(default)]
    pub l2_all_layers: bool,
}

impl ModelConfig {
    pub fn hlhg(order_p: usize, input_dim: usize, hidden_units: usize, num_classes: usize) -> Self {
        Self {
            variant: Variant::Hlhg,
            order_p,
            hidden_units,
            input_dim,
            num_classes,
            dropout_rate: 0.0,
            l2_weight: 0.0,
            l2_all_layers: false,
        }
    }

    pub fn gcn(input_dim: usize, hidden_units: usize, num_classes: usize) -> Self {
        Self {
            variant: Variant::GcnBaseline,
            order_p: 1,
            ..Self::hlhg(1, input_dim, hidden_units, num_classes)
        }
    }

    pub fn concat(
        order_p: usize,
        input_dim: usize,
        hidden_units: usize,
        num_classes: usize,
    ) -> Self {
        Self {
            variant: Variant::ConcatBaseline,
            ..Self::hlhg(order_p, input_dim, hidden_units, num_classes)
        }
    }

    pub fn with_dropout(mut self, rate: f64) -> Self {
        self.dropout_rate = rate;
        self
    }

    pub fn with_l2(mut self, weight: f64) -> Self {
        self.l2_weight = weight;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.order_p == 0 {
            return fail("order_p must be at least 1".into());
        }
        if self.hidden_units == 0 || self.input_dim == 0 {
            return fail("hidden_units and input_dim must be positive".into());
        }
        if self.num_classes < 2 {
            return fail(format!("need at least 2 classes, got {}", self.num_classes));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return fail(format!("dropout_rate {} outside [0, 1)", self.dropout_rate));
        }
        if !(self.l2_weight >= 0.0 && self.l2_weight.is_finite()) {
            return fail(format!(
                "l2_weight {} must be finite and non-negative",
                self.l2_weight
            ));
        }
        match self.variant {
            Variant::GcnBaseline if self.order_p != 1 => fail(format!(
                "GCN_BASELINE is first-order; got order_p = {}",
                self.order_p
            )),
            Variant::ConcatBaseline if self.order_p < 2 => {
                fail("CONCAT_BASELINE requires order_p >= 2".into())
            }
            _ => Ok(()),
        }
    }

    /// Width of the first layer's output.
    pub fn layer1_width(&self) -> usize {
        match self.variant {
            Variant::ConcatBaseline => self.order_p * self.hidden_units,
            _ => self.hidden_units,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation_rules() {
        assert!(ModelConfig::hlhg(2, 10, 4, 3).validate().is_ok());
        assert!(ModelConfig::hlhg(0, 10, 4, 3).validate().is_err());
        assert!(ModelConfig::hlhg(2, 10, 4, 1).validate().is_err());
        assert!(ModelConfig::concat(1, 10, 4, 3).validate().is_err());
        assert!(ModelConfig::concat(2, 10, 4, 3).validate().is_ok());
        let mut gcn = ModelConfig::gcn(10, 4, 3);
        assert!(gcn.validate().is_ok());
        gcn.order_p = 2;
        assert!(gcn.validate().is_err());
        assert!(ModelConfig::hlhg(2, 10, 4, 3)
            .with_dropout(1.0)
            .validate()
            .is_err());
        assert!(ModelConfig::hlhg(2, 10, 4, 3)
            .with_l2(-1.0)
            .validate()
            .is_err());
    }

    #[test]
    fn variant_names_round_trip() {
        for v in [Variant::Hlhg, Variant::GcnBaseline, Variant::ConcatBaseline] {
            let s = serde_json::to_string(&v).unwrap();
            assert_eq!(s, format!("\"{}\"", v.name()));
            assert_eq!(serde_json::from_str::<Variant>(&s).unwrap(), v);
        }
    }
}
