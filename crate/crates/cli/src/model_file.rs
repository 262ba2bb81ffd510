//! JSON model description: structure only, no numeric scenario.

use serde::{Deserialize, Serialize};
use vcomp::{Design, EffectKind, Factor, ModelSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpecFile {
    pub design: Design,
    pub factors: Vec<FactorEntry>,
    pub replicates: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interaction_kind: Option<EffectKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorEntry {
    pub name: String,
    pub levels: usize,
    pub kind: EffectKind,
}

impl ModelSpecFile {
    pub fn parse(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_spec(&self) -> vcomp::Result<ModelSpec> {
        let factors = self
            .factors
            .iter()
            .map(|f| Factor::new(f.name.clone(), f.levels, f.kind))
            .collect();
        ModelSpec::new(self.design, factors, self.replicates, self.interaction_kind)
    }
}

impl From<&ModelSpec> for ModelSpecFile {
    fn from(spec: &ModelSpec) -> Self {
        ModelSpecFile {
            design: spec.design(),
            factors: spec
                .factors()
                .iter()
                .map(|f| FactorEntry {
                    name: f.name.clone(),
                    levels: f.levels,
                    kind: f.kind,
                })
                .collect(),
            replicates: spec.replicates(),
            interaction_kind: spec.interaction_kind(),
        }
    }
}
