//! Experiment manifests: which data, which algorithms, which budget.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::SvmConfig;
use crate::error::{AwarError, Result};
use crate::war::WarParams;

/// Master seed used when a manifest does not name one.
pub const DEFAULT_SEED: u64 = 20_160_901;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "BL")]
    Bl,
    #[serde(rename = "TL")]
    Tl,
    #[serde(rename = "ATL")]
    Atl,
    #[serde(rename = "wAR-RLS")]
    WarRls,
    #[serde(rename = "wAR-SVM")]
    WarSvm,
    #[serde(rename = "AwAR-RLS")]
    AwarRls,
    #[serde(rename = "AwAR-SVM")]
    AwarSvm,
    #[serde(rename = "AwAR-RLS-EC")]
    AwarRlsEc,
    #[serde(rename = "AwAR-SVM-EC")]
    AwarSvmEc,
    #[serde(rename = "BL-EC")]
    BlEc,
}

impl Algorithm {
    pub const ALL: [Algorithm; 10] = [
        Algorithm::Bl,
        Algorithm::Tl,
        Algorithm::Atl,
        Algorithm::WarRls,
        Algorithm::WarSvm,
        Algorithm::AwarRls,
        Algorithm::AwarSvm,
        Algorithm::AwarRlsEc,
        Algorithm::AwarSvmEc,
        Algorithm::BlEc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Bl => "BL",
            Algorithm::Tl => "TL",
            Algorithm::Atl => "ATL",
            Algorithm::WarRls => "wAR-RLS",
            Algorithm::WarSvm => "wAR-SVM",
            Algorithm::AwarRls => "AwAR-RLS",
            Algorithm::AwarSvm => "AwAR-SVM",
            Algorithm::AwarRlsEc => "AwAR-RLS-EC",
            Algorithm::AwarSvmEc => "AwAR-SVM-EC",
            Algorithm::BlEc => "BL-EC",
        }
    }

    /// Labels a shared random batch each iteration rather than choosing its own.
    pub fn labels_randomly(self) -> bool {
        matches!(self, Algorithm::Bl | Algorithm::Tl | Algorithm::WarRls | Algorithm::WarSvm | Algorithm::BlEc)
    }

    /// Needs the all-channel target companion file.
    pub fn needs_all_channels(self) -> bool {
        matches!(self, Algorithm::AwarRlsEc | Algorithm::AwarSvmEc | Algorithm::BlEc)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = AwarError;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| AwarError::InvalidParameter(format!("unknown algorithm {s:?}")))
    }
}

fn default_k() -> usize {
    5
}
fn default_iterations() -> usize {
    20
}
fn default_repeats() -> usize {
    30
}
fn default_subsample() -> usize {
    200
}
fn default_pca() -> usize {
    20
}
fn default_seed() -> u64 {
    DEFAULT_SEED
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentManifest {
    pub source: PathBuf,
    pub target: PathBuf,
    /// Target rows with every channel, row-aligned with `target`.
    #[serde(default)]
    pub target_all: Option<PathBuf>,
    pub algorithms: Vec<Algorithm>,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default = "default_subsample")]
    pub source_subsample: usize,
    #[serde(default)]
    pub war: WarParams,
    #[serde(default)]
    pub svm: SvmConfig,
    #[serde(default = "default_pca")]
    pub pca_dim: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

impl ExperimentManifest {
    /// Manifest with default settings for the given files and algorithms.
    pub fn new(source: impl Into<PathBuf>, target: impl Into<PathBuf>, algorithms: Vec<Algorithm>) -> Self {
        ExperimentManifest {
            source: source.into(),
            target: target.into(),
            target_all: None,
            algorithms,
            k: default_k(),
            max_iterations: default_iterations(),
            repeats: default_repeats(),
            source_subsample: default_subsample(),
            war: WarParams::default(),
            svm: SvmConfig::default(),
            pca_dim: default_pca(),
            seed: DEFAULT_SEED,
        }
    }

    /// Read a JSON manifest; relative data paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| AwarError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut m: ExperimentManifest = serde_json::from_str(&text).map_err(|source| AwarError::Json {
            path: path.display().to_string(),
            source,
        })?;
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        m.resolve_paths(base);
        m.validate()?;
        Ok(m)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.source);
        fix(&mut self.target);
        if let Some(p) = self.target_all.as_mut() {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(AwarError::InvalidParameter(msg));
        if self.algorithms.is_empty() {
            return bad("manifest lists no algorithms".into());
        }
        let mut seen = self.algorithms.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.algorithms.len() {
            return bad("manifest lists an algorithm twice".into());
        }
        if self.k == 0 || self.max_iterations == 0 || self.repeats == 0 {
            return bad("k, max_iterations and repeats must be positive".into());
        }
        if self.source_subsample == 0 || self.pca_dim == 0 {
            return bad("source_subsample and pca_dim must be positive".into());
        }
        if self.target_all.is_none() {
            if let Some(a) = self.algorithms.iter().find(|a| a.needs_all_channels()) {
                return bad(format!("{a} needs target_all in the manifest"));
            }
        }
        self.war.validate()?;
        self.svm.validate()
    }

    /// Total number of target labels requested per algorithm.
    pub fn label_budget(&self) -> usize {
        self.k * self.max_iterations
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
            let json = serde_json::to_string(&a).unwrap();
            assert_eq!(json, format!("\"{}\"", a.name()));
        }
        assert!("awar".parse::<Algorithm>().is_err());
    }

    #[test]
    fn defaults_fill_in() {
        let m: ExperimentManifest =
            serde_json::from_str(r#"{"source": "s.csv", "target": "t.csv", "algorithms": ["BL", "AwAR-RLS"]}"#).unwrap();
        assert_eq!((m.k, m.max_iterations, m.repeats, m.source_subsample, m.pca_dim), (5, 20, 30, 200, 20));
        assert_eq!(m.seed, DEFAULT_SEED);
        assert_eq!(m.war, WarParams::default());
        m.validate().unwrap();
    }

    #[test]
    fn validation_failures() {
        let base = ExperimentManifest::new("s", "t", vec![Algorithm::Bl]);
        assert!(ExperimentManifest { algorithms: vec![], ..base.clone() }.validate().is_err());
        assert!(ExperimentManifest { k: 0, ..base.clone() }.validate().is_err());
        assert!(ExperimentManifest { algorithms: vec![Algorithm::AwarRlsEc], ..base.clone() }.validate().is_err());
        assert!(ExperimentManifest { algorithms: vec![Algorithm::Bl, Algorithm::Bl], ..base.clone() }.validate().is_err());
        let unknown = serde_json::from_str::<ExperimentManifest>(r#"{"source": "s", "target": "t", "algorithms": ["BL"], "bogus": 1}"#);
        assert!(unknown.is_err());
    }

    #[test]
    fn relative_paths_follow_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        std::fs::write(&path, r#"{"source": "data/s.csv", "target": "/abs/t.csv", "algorithms": ["TL"]}"#).unwrap();
        let m = ExperimentManifest::load(&path).unwrap();
        assert_eq!(m.source, dir.path().join("data/s.csv"));
        assert_eq!(m.target, PathBuf::from("/abs/t.csv"));
        assert!(matches!(ExperimentManifest::load(&dir.path().join("nope.json")), Err(AwarError::Io { .. })));
    }
}
