//! TOML pipeline configuration. Relative paths resolve against the config file's directory.

use std::path::{Path, PathBuf};

use perspectives_core::corpus::ColumnMapping;
use perspectives_core::homophily::BootstrapConfig;
use perspectives_core::model::{AdamConfig, ModelConfig, Variant};
use perspectives_core::synth::{self, PopulationSpec};
use perspectives_core::trainer::RunConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub output_dir: PathBuf,
    /// 0 quiet, 1 progress lines on stderr.
    #[serde(default)]
    pub verbosity: u8,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub prep: PrepSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub homophily: BootstrapConfig,
    pub synth: Option<PopulationSpec>,
}

/// Input files. Any path left out falls back to the `synth` output of the same run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub annotations: Option<PathBuf>,
    pub profiles: Option<PathBuf>,
    pub text_embeddings: Option<PathBuf>,
    pub socio_embeddings: Option<PathBuf>,
    pub columns: ColumnMapping,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PrepSection {
    pub min_annotators_per_text: usize,
    pub min_annotations_per_annotator: usize,
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for PrepSection {
    fn default() -> Self {
        Self {
            min_annotators_per_text: 1,
            min_annotations_per_annotator: 1,
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub variants: Vec<Variant>,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seeds: Vec<u64>,
    pub adam: AdamConfig,
    pub simple_per_annotation: bool,
    /// Also train socio_contrastive with the contrastive weight at 0.
    pub ablation: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        let run = RunConfig::default();
        Self {
            variants: Variant::ALL.to_vec(),
            lr: run.lr,
            batch_size: run.batch_size,
            epochs: run.epochs,
            seeds: run.seeds,
            adam: run.adam,
            simple_per_annotation: run.simple_per_annotation,
            ablation: true,
        }
    }
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub variant: Option<Variant>,
    pub lambda: Option<f64>,
}

/// Concrete input paths after falling back to synthetic outputs.
#[derive(Debug, Clone)]
pub struct DataPaths {
    pub annotations: PathBuf,
    pub profiles: PathBuf,
    pub text_embeddings: PathBuf,
    pub socio_embeddings: Option<PathBuf>,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        for p in [
            &mut self.data.annotations,
            &mut self.data.profiles,
            &mut self.data.text_embeddings,
            &mut self.data.socio_embeddings,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<(), CliError> {
        if let Some(seed) = o.seed {
            self.train.seeds = vec![seed];
        }
        if let Some(v) = o.variant {
            self.train.variants = vec![v];
        }
        if let Some(l) = o.lambda {
            self.model.contrastive_weight = l;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let p = &self.prep;
        if p.min_annotators_per_text == 0 || p.min_annotations_per_annotator == 0 {
            return Err(CliError::Config("prep thresholds must be at least 1".into()));
        }
        if !(p.train_fraction > 0.0 && p.train_fraction < 1.0) {
            return Err(CliError::Config(format!("train_fraction {} must lie in (0, 1)", p.train_fraction)));
        }
        if self.train.variants.is_empty() {
            return Err(CliError::Config("train.variants is empty".into()));
        }
        self.run_config(Variant::Simple).validate()?;
        if let Some(s) = &self.synth {
            s.validate()?;
        }
        let h = &self.homophily;
        if h.k == 0 || h.iterations == 0 {
            return Err(CliError::Config("homophily k and iterations must be at least 1".into()));
        }
        Ok(())
    }

    pub fn run_config(&self, variant: Variant) -> RunConfig {
        let t = &self.train;
        RunConfig {
            variant,
            model: self.model.clone(),
            lr: t.lr,
            batch_size: t.batch_size,
            epochs: t.epochs,
            seeds: t.seeds.clone(),
            adam: t.adam,
            simple_per_annotation: t.simple_per_annotation,
        }
    }

    pub fn synth_dir(&self) -> PathBuf {
        self.output_dir.join("synth")
    }

    pub fn data_paths(&self) -> Result<DataPaths, CliError> {
        let synth_dir = self.synth_dir();
        let pick = |given: &Option<PathBuf>, file: &str, name: &str| -> Result<PathBuf, CliError> {
            match given {
                Some(p) => Ok(p.clone()),
                None if self.synth.is_some() => Ok(synth_dir.join(file)),
                None => Err(CliError::Config(format!("data.{name} is not set and there is no [synth] section"))),
            }
        };
        let socio = match &self.data.socio_embeddings {
            Some(p) => Some(p.clone()),
            None if self.synth.is_some() => Some(synth_dir.join(synth::SOCIO_EMBEDDINGS_FILE)),
            None => None,
        };
        Ok(DataPaths {
            annotations: pick(&self.data.annotations, synth::ANNOTATIONS_FILE, "annotations")?,
            profiles: pick(&self.data.profiles, synth::PROFILES_FILE, "profiles")?,
            text_embeddings: pick(&self.data.text_embeddings, synth::TEXT_EMBEDDINGS_FILE, "text_embeddings")?,
            socio_embeddings: socio,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = PipelineConfig::parse("output_dir = \"out\"\n[synth]\n").unwrap();
        assert_eq!(cfg.train.seeds.len(), 6);
        assert_eq!(cfg.model.hidden_dims, [512, 256]);
        assert_eq!(cfg.homophily.k, 50);
        assert!(cfg.data_paths().unwrap().annotations.ends_with("synth/annotations.csv"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(PipelineConfig::parse("output_dir = \"o\"\nbogus = 1\n"), Err(CliError::Config(_))));
        assert!(matches!(
            PipelineConfig::parse("output_dir = \"o\"\n[train]\nepoch = 3\n"),
            Err(CliError::Config(_))
        ));
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(PipelineConfig::parse("output_dir = \"o\"\n[prep]\ntrain_fraction = 1.0\n").is_err());
        assert!(PipelineConfig::parse("output_dir = \"o\"\n[model]\ncontrastive_weight = -1.0\n").is_err());
        assert!(PipelineConfig::parse("output_dir = \"o\"\n[train]\nbatch_size = 1\n").is_err());
    }

    #[test]
    fn overrides_narrow_the_run() {
        let mut cfg = PipelineConfig::parse("output_dir = \"o\"\n[synth]\n").unwrap();
        cfg.apply(&Overrides {
            seed: Some(9),
            variant: Some(Variant::Multitask),
            lambda: Some(0.5),
        })
        .unwrap();
        assert_eq!(cfg.train.seeds, vec![9]);
        assert_eq!(cfg.train.variants, vec![Variant::Multitask]);
        assert_eq!(cfg.model.contrastive_weight, 0.5);
    }

    #[test]
    fn missing_data_without_synth_is_a_config_error() {
        let cfg = PipelineConfig::parse("output_dir = \"o\"\n").unwrap();
        assert!(matches!(cfg.data_paths(), Err(CliError::Config(_))));
    }
}
