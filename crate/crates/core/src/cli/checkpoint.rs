//! Parameter checkpoints as JSON text: explicit shapes, decimal values that
//! round-trip exactly, a config snapshot and the run seed.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::numerics::Tensor;
use crate::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Component {
    Agent,
    Backend,
}

impl Component {
    pub fn as_str(self) -> &'static str {
        match self {
            Component::Agent => "agent",
            Component::Backend => "backend",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub component: Component,
    pub seed: u64,
    pub config: serde_json::Value,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn new<'a, C: Serialize>(
        component: Component,
        seed: u64,
        config: &C,
        tensors: impl IntoIterator<Item = (&'a str, &'a Tensor)>,
    ) -> Result<Self> {
        Ok(Self {
            format_version: FORMAT_VERSION,
            component,
            seed,
            config: serde_json::to_value(config)?,
            tensors: tensors
                .into_iter()
                .map(|(name, t)| NamedTensor {
                    name: name.to_string(),
                    shape: t.shape().to_vec(),
                    values: t.data().to_vec(),
                })
                .collect(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        // peek at the version first so a future format fails with a clear message
        let raw: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| Error::Checkpoint(format!("corrupt file: {e}")))?;
        match raw.get("format_version").and_then(|v| v.as_u64()) {
            Some(v) if v == FORMAT_VERSION as u64 => {}
            Some(v) => {
                return Err(Error::Checkpoint(format!(
                    "format_version {v} is not supported (expected {FORMAT_VERSION})"
                )))
            }
            None => return Err(Error::Checkpoint("missing format_version".into())),
        }
        serde_json::from_value(raw).map_err(|e| Error::Checkpoint(format!("corrupt file: {e}")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn expect(&self, component: Component) -> Result<()> {
        if self.component != component {
            return Err(Error::Checkpoint(format!(
                "expected {} checkpoint, found {}",
                component.as_str(),
                self.component.as_str()
            )));
        }
        Ok(())
    }

    /// Decode the config snapshot.
    pub fn config_as<C: serde::de::DeserializeOwned>(&self) -> Result<C> {
        serde_json::from_value(self.config.clone())
            .map_err(|e| Error::Checkpoint(format!("config snapshot: {e}")))
    }

    /// Materialize every tensor, validating shape against value count.
    pub fn tensors(&self) -> Result<Vec<(String, Tensor)>> {
        self.tensors
            .iter()
            .map(|t| {
                Tensor::new(t.shape.clone(), t.values.clone())
                    .map(|v| (t.name.clone(), v))
                    .map_err(|e| Error::Checkpoint(format!("tensor {}: {e}", t.name)))
            })
            .collect()
    }
}
