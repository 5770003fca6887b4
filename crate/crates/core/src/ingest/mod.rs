//! Reading and writing pattern matrices and codebooks, dataset manifests, and
//! the planted-prototype synthetic generator.

pub mod format;
pub mod text;

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codebook::{Assignment, Centroid, CentroidSet};
use crate::error::{ApcError, Result};
use crate::pattern::{fraction_count, PatternMatrix};

pub use format::{
    load_binary_matrix, load_codebook, load_patterns, load_real_matrix, read_binary_matrix,
    read_codebook, read_real_matrix, save_binary_matrix, save_codebook, save_real_matrix,
    write_binary_matrix, write_codebook, write_real_matrix,
};
pub use text::{read_text_matrix, write_text_matrix};

/// Feed-forward sub-layer a dump was taken from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SublayerLabel {
    Gate,
    Up,
    Down,
    Synthetic,
}

impl SublayerLabel {
    /// Expected feature width for real dumps of a 7B-class gated FFN.
    pub fn expected_dim(self) -> Option<usize> {
        match self {
            SublayerLabel::Gate | SublayerLabel::Up => Some(14336),
            SublayerLabel::Down => Some(4096),
            SublayerLabel::Synthetic => None,
        }
    }
}

/// JSON sidecar describing a pattern dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub sublayer_label: SublayerLabel,
    pub dim: usize,
    pub n_rows: usize,
    pub source: String,
    pub format_version: u16,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        match self.sublayer_label.expected_dim() {
            Some(d) if d != self.dim => Err(ApcError::DimensionMismatch {
                expected: d,
                actual: self.dim,
            }),
            _ => Ok(()),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut json = serde_json::to_string_pretty(self)?;
        json.push('\n');
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let m: Self = serde_json::from_slice(&std::fs::read(path)?)?;
        m.validate()?;
        Ok(m)
    }
}

/// Parameters of the planted-prototype generator.
///
/// Prototype `i` has density `proto_densities[i % len]`, so a single value
/// gives homogeneous prototypes and a list gives a mix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_prototypes: usize,
    pub dim: usize,
    pub n_rows: usize,
    pub proto_densities: Vec<f64>,
    /// Independent per-bit flip probability.
    pub flip_noise: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(
        n_prototypes: usize,
        dim: usize,
        n_rows: usize,
        proto_density: f64,
        flip_noise: f64,
        seed: u64,
    ) -> Self {
        Self {
            n_prototypes,
            dim,
            n_rows,
            proto_densities: vec![proto_density],
            flip_noise,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_prototypes == 0 || self.n_prototypes > self.n_rows {
            return Err(ApcError::InvalidConfig(format!(
                "need 1 <= n_prototypes <= n_rows, got {} prototypes for {} rows",
                self.n_prototypes, self.n_rows
            )));
        }
        if self.dim == 0 {
            return Err(ApcError::InvalidConfig("dimension must be positive".into()));
        }
        if self.proto_densities.is_empty() {
            return Err(ApcError::InvalidConfig(
                "at least one prototype density is required".into(),
            ));
        }
        for &p in &self.proto_densities {
            if !(p > 0.0 && p < 1.0) {
                return Err(ApcError::InvalidConfig(format!(
                    "prototype density must lie in (0, 1), got {p}"
                )));
            }
            if fraction_count(p, self.dim, false) == 0 {
                return Err(ApcError::InvalidConfig(format!(
                    "prototype density {p} leaves no active features at dimension {}",
                    self.dim
                )));
            }
        }
        if !(0.0..0.5).contains(&self.flip_noise) {
            return Err(ApcError::InvalidConfig(format!(
                "flip noise must lie in [0, 0.5), got {}",
                self.flip_noise
            )));
        }
        Ok(())
    }

    pub fn density_of(&self, prototype: usize) -> f64 {
        self.proto_densities[prototype % self.proto_densities.len()]
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub matrix: PatternMatrix,
    pub planted: Assignment,
    pub prototypes: CentroidSet,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Generates noisy copies of random prototype supports.
///
/// Rows go to prototypes round-robin. Each bit of the prototype is flipped
/// with probability `flip_noise`, and active bits draw an intensity from
/// `(0.1, 1.0]`. Prototypes use RNG stream 0 and row `i` uses stream
/// `i + 1`, so the output does not depend on thread scheduling.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let dim = spec.dim;
    let mut proto_rng = stream(spec.seed, 0);
    let supports: Vec<Vec<usize>> = (0..spec.n_prototypes)
        .map(|p| {
            let size = fraction_count(spec.density_of(p), dim, false);
            let mut s = rand::seq::index::sample(&mut proto_rng, dim, size).into_vec();
            s.sort_unstable();
            s
        })
        .collect();
    let masks: Vec<Vec<bool>> = supports
        .iter()
        .map(|s| {
            let mut m = vec![false; dim];
            for &j in s {
                m[j] = true;
            }
            m
        })
        .collect();

    let rows: Vec<Vec<f64>> = (0..spec.n_rows)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(spec.seed, i as u64 + 1);
            let mask = &masks[i % spec.n_prototypes];
            let mut row = vec![0.0f64; dim];
            for (v, &on) in row.iter_mut().zip(mask) {
                let flip = rng.gen::<f64>() < spec.flip_noise;
                let u: f32 = rng.gen();
                if on != flip {
                    *v = f64::from(1.0f32 - 0.9f32 * u);
                }
            }
            row
        })
        .collect();

    let matrix = PatternMatrix::new(spec.n_rows, dim, rows.concat())?;
    let planted = Assignment::new(
        (0..spec.n_rows).map(|i| i % spec.n_prototypes).collect(),
        spec.n_prototypes,
    )?;
    let uniform = spec
        .proto_densities
        .iter()
        .all(|&p| p == spec.proto_densities[0]);
    let prototypes = CentroidSet::new(
        dim,
        uniform.then(|| spec.proto_densities[0]),
        supports
            .into_iter()
            .map(|s| Centroid::from_support(dim, s))
            .collect::<Result<Vec<_>>>()?,
    )?;
    Ok(SyntheticData {
        matrix,
        planted,
        prototypes,
    })
}
