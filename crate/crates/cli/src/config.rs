//! `RunConfig`: the JSON document driving `ltcnn train`.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use ltcnn::data::{AugmentConfig, AugmentKind};
use ltcnn::network::NetworkSpec;
use ltcnn::train::TrainConfig;

/// Architecture overrides. Class names default to the dataset's classes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_channels: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_height: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_width: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conv1_filters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conv2_filters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fc1: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fc2: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dropout_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_classes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_names: Option<Vec<String>>,
}

impl NetworkSection {
    /// Full spec, taking class names from the section or else from `classes`.
    pub fn resolve(&self, classes: Option<&[String]>) -> anyhow::Result<NetworkSpec> {
        let names: Vec<String> = match (&self.class_names, self.n_classes, classes) {
            (Some(names), _, _) => names.clone(),
            (None, _, Some(classes)) => classes.to_vec(),
            (None, Some(n), None) => (0..n).map(|i| format!("class{i}")).collect(),
            (None, None, None) => {
                bail!("network: class names are unknown; set n_classes or class_names")
            }
        };
        if let Some(n) = self.n_classes {
            if n != names.len() {
                bail!(
                    "network.n_classes is {n} but there are {} classes",
                    names.len()
                );
            }
        }
        if let (Some(classes), Some(given)) = (classes, &self.class_names) {
            if classes != given.as_slice() {
                bail!("network.class_names {given:?} do not match dataset classes {classes:?}");
            }
        }
        let mut spec = NetworkSpec::with_classes(names);
        let set = |target: &mut usize, v: Option<usize>| {
            if let Some(v) = v {
                *target = v;
            }
        };
        set(&mut spec.input_channels, self.input_channels);
        set(&mut spec.input_height, self.input_height);
        set(&mut spec.input_width, self.input_width);
        set(&mut spec.conv1_filters, self.conv1_filters);
        set(&mut spec.conv2_filters, self.conv2_filters);
        set(&mut spec.kernel, self.kernel);
        set(&mut spec.fc1, self.fc1);
        set(&mut spec.fc2, self.fc2);
        if let Some(rate) = self.dropout_rate {
            spec.dropout_rate = rate;
        }
        spec.validate().context("network")?;
        Ok(spec)
    }

    pub fn from_spec(spec: &NetworkSpec) -> Self {
        Self {
            input_channels: Some(spec.input_channels),
            input_height: Some(spec.input_height),
            input_width: Some(spec.input_width),
            conv1_filters: Some(spec.conv1_filters),
            conv2_filters: Some(spec.conv2_filters),
            kernel: Some(spec.kernel),
            fc1: Some(spec.fc1),
            fc2: Some(spec.fc2),
            dropout_rate: Some(spec.dropout_rate),
            n_classes: Some(spec.n_classes),
            class_names: Some(spec.class_names.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub root: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val_root: Option<PathBuf>,
    /// Held-out fraction of `root` used for validation when `val_root` is absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split_ratio: Option<f64>,
    /// Augmentations applied to the training side only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub augment_ops: Option<Vec<AugmentKind>>,
    #[serde(default)]
    pub augment: AugmentConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub network: NetworkSection,
    pub train: TrainConfig,
    pub data: DataSection,
    pub output_dir: PathBuf,
}

impl RunConfig {
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).context("invalid run config")?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    /// Field-level checks that do not need the dataset.
    pub fn validate(&self) -> anyhow::Result<()> {
        self.train.validate().context("train")?;
        if !self.data.root.is_dir() {
            bail!("data.root: {} is not a directory", self.data.root.display());
        }
        if let Some(val) = &self.data.val_root {
            if !val.is_dir() {
                bail!("data.val_root: {} is not a directory", val.display());
            }
            if self.data.split_ratio.is_some() {
                bail!("data: set either val_root or split_ratio, not both");
            }
        }
        if let Some(r) = self.data.split_ratio {
            if !(r > 0.0 && r < 1.0) {
                bail!("data.split_ratio must be in (0, 1), got {r}");
            }
        }
        if matches!(&self.data.augment_ops, Some(ops) if ops.is_empty()) {
            bail!("data.augment_ops must not be empty when present");
        }
        let a = &self.data.augment;
        if !(a.max_rotation_deg >= 0.0 && a.max_shear >= 0.0) {
            bail!("data.augment ranges must be non-negative");
        }
        Ok(())
    }

    /// Copy with every network default written out.
    pub fn resolved(&self, spec: &NetworkSpec) -> Self {
        Self {
            network: NetworkSection::from_spec(spec),
            ..self.clone()
        }
    }
}
