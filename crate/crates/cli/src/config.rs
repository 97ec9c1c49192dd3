//! Declarative run description, read from TOML.

use std::path::{Path, PathBuf};

use edgeattn::dataio::{generate_shapes, load_dataset, scan_dataset, Dataset, SyntheticShapesSpec};
use edgeattn::model::{build_shallow_backbone, make_variant_with, standard_blocks, BlockSpec, NetworkGraph, Variant};
use edgeattn::{EamConfig, Error, Result, SplitSpec, TrainConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSource {
    Synthetic(SyntheticShapesSpec),
    Directory(DirectorySource),
}

/// A `root/<class>/<image>` tree of PGM/PPM files, resized on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirectorySource {
    pub path: PathBuf,
    pub height: usize,
    pub width: usize,
}

impl Default for DatasetSource {
    fn default() -> Self {
        DatasetSource::Synthetic(SyntheticShapesSpec::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    /// Output channels per standard block. Ignored when `blocks` is given.
    pub widths: Vec<usize>,
    pub convs_per_block: usize,
    /// Explicit block list.
    pub blocks: Option<Vec<BlockSpec>>,
    pub variant: Variant,
    /// Branch template; the attach point is set per variant.
    pub eam: EamConfig,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            widths: vec![16, 32, 64],
            convs_per_block: 1,
            blocks: None,
            variant: Variant::Eam,
            eam: EamConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Master seed. Overrides the seeds of the dataset, split and training
    /// sections, and seeds parameter initialisation.
    pub seed: u64,
    pub out: PathBuf,
    pub dataset: DatasetSource,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub split: SplitSpec,
    /// Share of each cross-validation training fold held out for early
    /// stopping.
    pub crossval_val_fraction: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("runs"),
            dataset: DatasetSource::default(),
            model: ModelSection::default(),
            train: TrainConfig::default(),
            split: SplitSpec::default(),
            crossval_val_fraction: 0.2,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads `path` and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })?;
        let mut config = Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.out = base.join(&config.out);
        if let DatasetSource::Directory(d) = &mut config.dataset {
            d.path = base.join(&d.path);
        }
        Ok(config)
    }

    /// Applies command-line overrides and propagates the master seed.
    pub fn resolve(mut self, seed: Option<u64>, out: Option<PathBuf>) -> Self {
        if let Some(s) = seed {
            self.seed = s;
        }
        if let Some(o) = out {
            self.out = o;
        }
        self.train.seed = self.seed;
        self.split.seed = self.seed;
        if let DatasetSource::Synthetic(s) = &mut self.dataset {
            s.seed = self.seed;
        }
        self
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("run configs serialise")
    }

    pub fn num_classes(&self) -> Result<usize> {
        match &self.dataset {
            DatasetSource::Synthetic(s) => Ok(s.classes.len()),
            DatasetSource::Directory(d) => Ok(scan_dataset(&d.path)?.classes.len()),
        }
    }

    pub fn input_shape(&self) -> Result<[usize; 3]> {
        match &self.dataset {
            DatasetSource::Synthetic(s) => Ok([1, s.resolution, s.resolution]),
            DatasetSource::Directory(d) => {
                let m = scan_dataset(&d.path)?;
                let color = m
                    .classes
                    .iter()
                    .flat_map(|c| &c.files)
                    .any(|f| edgeattn::dataio::read_pnm(f).map(|i| i.channels == 3).unwrap_or(false));
                Ok([if color { 3 } else { 1 }, d.height, d.width])
            }
        }
    }

    pub fn backbone(&self) -> Result<NetworkGraph> {
        let shape = self.input_shape()?;
        let blocks = match &self.model.blocks {
            Some(b) => b.clone(),
            None => standard_blocks(shape[0], &self.model.widths, self.model.convs_per_block),
        };
        build_shallow_backbone(blocks, self.num_classes()?, shape)
    }

    pub fn graph(&self, variant: Variant) -> Result<NetworkGraph> {
        make_variant_with(&self.backbone()?, variant, &self.model.eam)
    }

    /// Checks everything that can be checked without touching pixel data.
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.split.validate()?;
        if !(self.crossval_val_fraction > 0.0 && self.crossval_val_fraction < 1.0) {
            return Err(Error::Config(format!(
                "crossval_val_fraction {} must lie in (0, 1)",
                self.crossval_val_fraction
            )));
        }
        if let DatasetSource::Synthetic(s) = &self.dataset {
            s.validate()?;
        }
        if self.model.blocks.is_none() && self.model.widths.is_empty() {
            return Err(Error::Config("model.widths is empty".into()));
        }
        self.graph(self.model.variant)?;
        Ok(())
    }

    pub fn load_data(&self) -> Result<Dataset> {
        match &self.dataset {
            DatasetSource::Synthetic(s) => Ok(generate_shapes(s)?.dataset),
            DatasetSource::Directory(d) => load_dataset(&scan_dataset(&d.path)?, (d.height, d.width)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_default() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in [
            "sede = 3",
            "[train]\nbase_lr = 0.1\nbatchsize = 4",
            "[dataset]\nkind = \"synthetic\"\nresolutoin = 32",
            "[model.eam]\nratio = 8",
        ] {
            let err = RunConfig::parse(text).unwrap_err();
            assert!(matches!(err, Error::Config(_)), "{text}");
        }
    }

    #[test]
    fn round_trips_through_toml() {
        let mut c = RunConfig::default();
        c.model.variant = Variant::Eam2;
        c.dataset = DatasetSource::Directory(DirectorySource { path: "imgs".into(), height: 32, width: 32 });
        assert_eq!(RunConfig::parse(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn shipped_config_is_valid() {
        let c = RunConfig::parse(include_str!("../../../configs/shapes.toml")).unwrap();
        assert_eq!(c.model.eam, EamConfig::default());
        c.validate().unwrap();
    }

    #[test]
    fn seed_propagates() {
        let c = RunConfig::default().resolve(Some(9), None);
        assert_eq!((c.train.seed, c.split.seed), (9, 9));
        let DatasetSource::Synthetic(s) = c.dataset else { panic!() };
        assert_eq!(s.seed, 9);
    }

    #[test]
    fn shallow_eam2_names_missing_tap() {
        let mut c = RunConfig::default();
        c.model.widths = vec![8, 16];
        c.model.variant = Variant::Eam2;
        let err = c.validate().unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        let msg = err.to_string();
        assert!(msg.contains("third-last") && msg.contains("block_1, block_2"), "{msg}");
    }
}
