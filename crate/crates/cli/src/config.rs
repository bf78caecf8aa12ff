//! Run configuration: one JSON file drives every subcommand.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use nalgebra::DMatrix;
use noisy_synth_core::data::SystemPair;
use noisy_synth_core::error::{Error, Result};
use noisy_synth_core::io;
use noisy_synth_core::noise::NoiseModel;
use noisy_synth_core::symmat::SymMatrix;
use noisy_synth_core::synth::PerformanceSpec;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub system: Option<SystemFiles>,
    pub data: Option<DataSection>,
    pub noise: Option<NoiseSection>,
    pub synth: Option<SynthSection>,
    pub simulate: Option<SimulateSection>,
    pub verify: Option<VerifySection>,
    pub slemma: Option<SlemmaSection>,
    pub experiment: Option<ExperimentSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemFiles {
    pub a: PathBuf,
    pub b: PathBuf,
    pub c: Option<PathBuf>,
    pub d: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub trajectory: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NoiseSection {
    /// `W W^t <= bound`; the bound is a CSV matrix or `scale * I`.
    Energy {
        bound: Option<PathBuf>,
        scale: Option<f64>,
    },
    /// Per-sample bound `|w(t)|^2 <= eps`.
    SampleNorm { eps: f64 },
    /// Sample-covariance bound with mandatory regularization.
    Covariance { bound: PathBuf, delta: f64 },
    /// Explicit `phi11.csv` / `phi12.csv` / `phi22.csv` triple.
    Files { dir: PathBuf },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    pub kind: SynthKind,
    pub gamma: Option<f64>,
    /// Per-sample bound for the multi-multiplier design.
    pub eps: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthKind {
    Stab,
    H2,
    Hinf,
    StabMulti,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    /// Horizon (number of input samples).
    pub t: usize,
    /// Gaussian noise standard deviation (exclusive with `eps`).
    pub sigma: Option<f64>,
    /// Uniform-in-ball per-sample noise bound (exclusive with `sigma`).
    pub eps: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    pub controller: Option<PathBuf>,
    pub samples: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlemmaSection {
    pub m: PathBuf,
    pub n: PathBuf,
    /// Identity-block size of both forms.
    pub k: usize,
    /// "nonstrict" | "strict" | "structured"
    pub form: String,
    pub budget: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub name: String,
    pub trials: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }
}

impl SystemFiles {
    pub fn load_pair(&self, base: &Path) -> Result<SystemPair> {
        let a = io::read_matrix(&base.join(&self.a))?;
        let b = io::read_matrix(&base.join(&self.b))?;
        SystemPair::new(a, b)
    }

    pub fn load_performance(&self, base: &Path, gamma: Option<f64>) -> Result<Option<PerformanceSpec>> {
        match (&self.c, &self.d) {
            (Some(c), Some(d)) => {
                let c = io::read_matrix(&base.join(c))?;
                let d = io::read_matrix(&base.join(d))?;
                Ok(Some(PerformanceSpec::new(c, d, gamma)?))
            }
            (Some(c), None) => {
                let c = io::read_matrix(&base.join(c))?;
                let m = self.load_pair(base)?.input_dim();
                let d = DMatrix::zeros(c.nrows(), m);
                Ok(Some(PerformanceSpec::new(c, d, gamma)?))
            }
            _ => Ok(None),
        }
    }

    pub fn input_paths(&self) -> Vec<&PathBuf> {
        let mut v = vec![&self.a, &self.b];
        if let Some(c) = &self.c {
            v.push(c);
        }
        if let Some(d) = &self.d {
            v.push(d);
        }
        v
    }
}

impl NoiseSection {
    /// Materialize the model for an `n x T` noise matrix.
    pub fn build(&self, base: &Path, n: usize, t: usize) -> Result<NoiseModel> {
        match self {
            NoiseSection::Energy { bound, scale } => {
                let b = match (bound, scale) {
                    (Some(path), None) => SymMatrix::new(io::read_matrix(&base.join(path))?)?,
                    (None, Some(s)) => SymMatrix::scaled_identity(n, *s),
                    _ => {
                        return Err(Error::Parse(
                            "energy noise takes exactly one of `bound` or `scale`".into(),
                        ));
                    }
                };
                NoiseModel::from_energy_bound(b, t)
            }
            NoiseSection::SampleNorm { eps } => NoiseModel::from_sample_norm_bound(*eps, n, t),
            NoiseSection::Covariance { bound, delta } => {
                let b = SymMatrix::new(io::read_matrix(&base.join(bound))?)?;
                NoiseModel::from_sample_covariance(b, t, Some(*delta))
            }
            NoiseSection::Files { dir } => NoiseModel::read_dir(&base.join(dir)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_synth_config() {
        let cfg: RunConfig = serde_json::from_str(
            r#"{
                "seed": 1,
                "data": {"trajectory": "traj.csv"},
                "noise": {"kind": "sample-norm", "eps": 0.5},
                "synth": {"kind": "stab"}
            }"#,
        )
        .unwrap();
        assert_eq!(cfg.seed, Some(1));
        assert!(matches!(cfg.noise, Some(NoiseSection::SampleNorm { .. })));
        assert_eq!(cfg.synth.unwrap().kind, SynthKind::Stab);
    }

    #[test]
    fn rejects_unknown_fields() {
        let r: std::result::Result<RunConfig, _> =
            serde_json::from_str(r#"{"seed": 1, "bogus": true}"#);
        assert!(r.is_err());
    }
}
