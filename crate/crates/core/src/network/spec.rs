use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Declarative description of the two-block network.
///
/// Defaults reproduce the reference configuration: 3×224×224 input,
/// 6 and 16 filters of 5×5, fully connected widths 120 and 84, dropout 0.2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    #[serde(default = "defaults::input_channels")]
    pub input_channels: usize,
    #[serde(default = "defaults::input_size")]
    pub input_height: usize,
    #[serde(default = "defaults::input_size")]
    pub input_width: usize,
    #[serde(default = "defaults::conv1_filters")]
    pub conv1_filters: usize,
    #[serde(default = "defaults::conv2_filters")]
    pub conv2_filters: usize,
    #[serde(default = "defaults::kernel")]
    pub kernel: usize,
    #[serde(default = "defaults::fc1")]
    pub fc1: usize,
    #[serde(default = "defaults::fc2")]
    pub fc2: usize,
    #[serde(default = "defaults::dropout_rate")]
    pub dropout_rate: f64,
    pub n_classes: usize,
    pub class_names: Vec<String>,
}

pub(crate) mod defaults {
    pub fn input_channels() -> usize {
        3
    }
    pub fn input_size() -> usize {
        224
    }
    pub fn conv1_filters() -> usize {
        6
    }
    pub fn conv2_filters() -> usize {
        16
    }
    pub fn kernel() -> usize {
        5
    }
    pub fn fc1() -> usize {
        120
    }
    pub fn fc2() -> usize {
        84
    }
    pub fn dropout_rate() -> f64 {
        0.2
    }
}

/// Spatial sizes after each stage, as `(height, width)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShapeChain {
    pub conv1: (usize, usize),
    pub pool1: (usize, usize),
    pub conv2: (usize, usize),
    pub pool2: (usize, usize),
    pub flatten: usize,
}

impl NetworkSpec {
    /// Reference configuration with the given class names.
    pub fn with_classes<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Self {
        let class_names: Vec<String> = names.into_iter().map(Into::into).collect();
        Self {
            input_channels: defaults::input_channels(),
            input_height: defaults::input_size(),
            input_width: defaults::input_size(),
            conv1_filters: defaults::conv1_filters(),
            conv2_filters: defaults::conv2_filters(),
            kernel: defaults::kernel(),
            fc1: defaults::fc1(),
            fc2: defaults::fc2(),
            dropout_rate: defaults::dropout_rate(),
            n_classes: class_names.len(),
            class_names,
        }
    }

    /// Reference configuration with classes named `class0..class{n-1}`.
    pub fn with_class_count(n: usize) -> Self {
        Self::with_classes((0..n).map(|i| format!("class{i}")))
    }

    pub fn with_input_size(mut self, height: usize, width: usize) -> Self {
        self.input_height = height;
        self.input_width = width;
        self
    }

    pub fn shape_chain(&self) -> Result<ShapeChain> {
        let k = self.kernel;
        let conv = |layer: &str, (h, w): (usize, usize)| {
            if h < k || w < k {
                Err(Error::Spec(format!(
                    "{layer}: {h}x{w} input is smaller than the {k}x{k} kernel"
                )))
            } else {
                Ok((h - k + 1, w - k + 1))
            }
        };
        let pool = |layer: &str, (h, w): (usize, usize)| {
            if h < 2 || w < 2 {
                Err(Error::Spec(format!(
                    "{layer}: {h}x{w} input is too small for 2x2 pooling"
                )))
            } else {
                Ok((h / 2, w / 2))
            }
        };
        let conv1 = conv("conv1", (self.input_height, self.input_width))?;
        let pool1 = pool("pool1", conv1)?;
        let conv2 = conv("conv2", pool1)?;
        let pool2 = pool("pool2", conv2)?;
        Ok(ShapeChain {
            conv1,
            pool1,
            conv2,
            pool2,
            flatten: self.conv2_filters * pool2.0 * pool2.1,
        })
    }

    pub fn flatten_len(&self) -> Result<usize> {
        Ok(self.shape_chain()?.flatten)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("input_channels", self.input_channels),
            ("conv1_filters", self.conv1_filters),
            ("conv2_filters", self.conv2_filters),
            ("kernel", self.kernel),
            ("fc1", self.fc1),
            ("fc2", self.fc2),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Spec(format!("{name} must be positive")));
        }
        if self.n_classes < 2 {
            return Err(Error::Spec(format!(
                "n_classes must be at least 2, got {}",
                self.n_classes
            )));
        }
        if self.class_names.len() != self.n_classes {
            return Err(Error::Spec(format!(
                "n_classes is {} but {} class names were given",
                self.n_classes,
                self.class_names.len()
            )));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = self.class_names.iter().find(|n| !seen.insert(n.as_str())) {
            return Err(Error::Spec(format!("duplicate class name {dup:?}")));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Spec(format!(
                "dropout_rate must be in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        self.shape_chain().map(|_| ())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_chain() {
        let chain = NetworkSpec::with_class_count(2).shape_chain().unwrap();
        assert_eq!(chain.conv1, (220, 220));
        assert_eq!(chain.pool1, (110, 110));
        assert_eq!(chain.conv2, (106, 106));
        assert_eq!(chain.pool2, (53, 53));
        assert_eq!(chain.flatten, 44_944);
    }

    #[test]
    fn small_inputs() {
        let spec = NetworkSpec::with_class_count(2).with_input_size(32, 32);
        assert_eq!(spec.flatten_len().unwrap(), 400);

        let err = NetworkSpec::with_class_count(2)
            .with_input_size(8, 8)
            .validate()
            .unwrap_err();
        assert!(err.to_string().contains("conv2"), "{err}");
    }

    #[test]
    fn class_table_rules() {
        let mut spec = NetworkSpec::with_classes(["a", "b"]);
        assert!(spec.validate().is_ok());
        spec.class_names[1] = "a".into();
        assert!(spec.validate().is_err());
        assert!(NetworkSpec::with_class_count(1).validate().is_err());
        assert!(NetworkSpec::with_class_count(0).validate().is_err());
    }

    #[test]
    fn json_defaults_and_unknown_keys() {
        let spec: NetworkSpec =
            serde_json::from_str(r#"{"n_classes": 2, "class_names": ["x", "y"]}"#).unwrap();
        assert_eq!(spec, NetworkSpec::with_classes(["x", "y"]));
        let bad = serde_json::from_str::<NetworkSpec>(
            r#"{"n_classes": 2, "class_names": ["x", "y"], "dropout": 0.5}"#,
        );
        assert!(bad.is_err());
    }
}
