//! Cost of predicting activations per neuron versus per cluster.
//!
//! Direct prediction costs `N_ffn * L * T * C`; cluster-level prediction
//! costs `K * L * T * C` with `K = clusters_per_sublayer * sublayers`. Their
//! ratio `N_ffn / K` does not depend on `L`, `T` or `C`.

use serde::{Deserialize, Serialize};

use crate::error::{ApcError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostModelParams {
    pub total_params: f64,
    pub ffn_fraction: f64,
    pub layers: u64,
    pub tokens: u64,
    pub per_neuron_cost: f64,
    pub clusters_per_sublayer: u64,
    pub sublayers: u64,
}

impl Default for CostModelParams {
    /// A 7B-parameter model with two thirds of its parameters in the FFN
    /// blocks, 32 layers, 2048-token sequences and 2048 clusters for each of
    /// the gate, up and down projections.
    fn default() -> Self {
        Self {
            total_params: 7e9,
            ffn_fraction: 2.0 / 3.0,
            layers: 32,
            tokens: 2048,
            per_neuron_cost: 1.0,
            clusters_per_sublayer: 2048,
            sublayers: 3,
        }
    }
}

/// All outputs of the model, as printed by the `cost` subcommand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostSummary {
    pub n_ffn: f64,
    pub k: u64,
    pub direct: f64,
    pub clustered: f64,
    pub gain: f64,
}

fn finite(x: f64, what: &'static str) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(ApcError::Overflow(what))
    }
}

impl CostModelParams {
    pub fn validate(&self) -> Result<()> {
        let positive_reals = [
            ("total_params", self.total_params),
            ("per_neuron_cost", self.per_neuron_cost),
        ];
        for (name, v) in positive_reals {
            if !(v.is_finite() && v > 0.0) {
                return Err(ApcError::InvalidConfig(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if !(self.ffn_fraction > 0.0 && self.ffn_fraction <= 1.0) {
            return Err(ApcError::InvalidConfig(format!(
                "ffn_fraction must lie in (0, 1], got {}",
                self.ffn_fraction
            )));
        }
        let counts = [
            ("layers", self.layers),
            ("tokens", self.tokens),
            ("clusters_per_sublayer", self.clusters_per_sublayer),
            ("sublayers", self.sublayers),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(ApcError::InvalidConfig(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    /// Neurons in the FFN blocks: `total_params * ffn_fraction`.
    pub fn ffn_neuron_count(&self) -> Result<f64> {
        self.validate()?;
        finite(self.total_params * self.ffn_fraction, "ffn neuron count")
    }

    /// Total number of clusters across sub-layers.
    pub fn total_clusters(&self) -> Result<u64> {
        self.validate()?;
        self.clusters_per_sublayer
            .checked_mul(self.sublayers)
            .ok_or(ApcError::Overflow("total cluster count"))
    }

    fn per_prediction_scale(&self) -> Result<f64> {
        finite(
            self.layers as f64 * self.tokens as f64 * self.per_neuron_cost,
            "layers x tokens x cost",
        )
    }

    pub fn direct_cost(&self) -> Result<f64> {
        finite(
            self.ffn_neuron_count()? * self.per_prediction_scale()?,
            "direct cost",
        )
    }

    pub fn clustered_cost(&self) -> Result<f64> {
        finite(
            self.total_clusters()? as f64 * self.per_prediction_scale()?,
            "clustered cost",
        )
    }

    /// `direct / clustered`, computed as `N_ffn / K`.
    pub fn efficiency_gain(&self) -> Result<f64> {
        finite(
            self.ffn_neuron_count()? / self.total_clusters()? as f64,
            "efficiency gain",
        )
    }

    pub fn summary(&self) -> Result<CostSummary> {
        Ok(CostSummary {
            n_ffn: self.ffn_neuron_count()?,
            k: self.total_clusters()?,
            direct: self.direct_cost()?,
            clustered: self.clustered_cost()?,
            gain: self.efficiency_gain()?,
        })
    }
}

/// Rounds to `digits` significant figures.
pub fn round_sig(x: f64, digits: u32) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let magnitude = x.abs().log10().floor() as i32;
    let scale = 10f64.powi(digits as i32 - 1 - magnitude);
    (x * scale).round() / scale
}
