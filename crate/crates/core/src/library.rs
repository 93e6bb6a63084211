//! Registry of agents, their implementations, hardware SKUs and the execution
//! profiles that tie an implementation to an allocation on a SKU.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::MediaKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SkuClass {
    Cpu,
    Gpu,
}

impl fmt::Display for SkuClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SkuClass::Cpu => "cpu",
            SkuClass::Gpu => "gpu",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardwareSku {
    pub sku_id: String,
    pub class: SkuClass,
    pub generation: String,
    /// What one unit is, e.g. "core" or "device".
    pub capacity_unit: String,
    pub busy_watts: f64,
    pub idle_watts: f64,
    pub dollars_per_unit_hour: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArgKind {
    Number,
    /// Non-negative integer; collapses to zero for empty inputs.
    Count,
    Text,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArgSpec {
    pub name: String,
    pub kind: ArgKind,
    #[serde(default = "yes")]
    pub required: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub capability: String,
    pub schema: Vec<ArgSpec>,
    pub consumes: Vec<MediaKind>,
    pub produces: MediaKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Implementation {
    pub name: String,
    pub capability: String,
    /// Ordinal rank; only comparisons are meaningful.
    pub quality: u32,
    pub sku_classes: BTreeSet<SkuClass>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExecutionProfile {
    pub implementation: String,
    pub sku: String,
    pub units: u32,
    /// Work units per second for the whole allocation of `units`.
    pub throughput: f64,
    pub setup_s: f64,
}

impl ExecutionProfile {
    pub fn key(&self) -> ProfileKey {
        (self.implementation.clone(), self.sku.clone(), self.units)
    }

    /// Seconds to process `work` on a cold allocation.
    pub fn predict_elapsed(&self, work: f64) -> f64 {
        self.setup_s + work / self.throughput
    }
}

pub type ProfileKey = (String, String, u32);

#[derive(Debug, Clone, PartialEq)]
pub enum Entity {
    Agent(AgentSpec),
    Implementation(Implementation),
    Sku(HardwareSku),
    Profile(ExecutionProfile),
}

/// Key of a registered entity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EntityKey {
    Agent(String),
    Implementation(String),
    Sku(String),
    Profile(ProfileKey),
}

#[derive(Debug, Error, PartialEq)]
pub enum LibraryError {
    #[error("duplicate key {0}")]
    DuplicateKey(String),
    #[error("dangling reference: {0}")]
    DanglingReference(String),
    #[error("unknown capability `{0}`")]
    UnknownCapability(String),
    #[error("invalid entity: {0}")]
    InvalidEntity(String),
    #[error("degenerate observation: elapsed {elapsed_s}s does not exceed setup {setup_s}s")]
    DegenerateObservation { elapsed_s: f64, setup_s: f64 },
    #[error("catalog error: {0}")]
    Catalog(String),
}

#[derive(Debug, Clone, Default)]
pub struct AgentLibrary {
    agents: BTreeMap<String, AgentSpec>,
    implementations: BTreeMap<String, Implementation>,
    skus: BTreeMap<String, HardwareSku>,
    profiles: BTreeMap<ProfileKey, ExecutionProfile>,
}

impl AgentLibrary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, entity: Entity) -> Result<EntityKey, LibraryError> {
        match entity {
            Entity::Agent(a) => {
                if self.agents.contains_key(&a.capability) {
                    return Err(LibraryError::DuplicateKey(format!("agent {}", a.capability)));
                }
                if a.consumes.is_empty() {
                    return Err(LibraryError::InvalidEntity(format!("agent {} consumes nothing", a.capability)));
                }
                let key = a.capability.clone();
                self.agents.insert(key.clone(), a);
                Ok(EntityKey::Agent(key))
            }
            Entity::Implementation(i) => {
                if self.implementations.contains_key(&i.name) {
                    return Err(LibraryError::DuplicateKey(format!("implementation {}", i.name)));
                }
                if !self.agents.contains_key(&i.capability) {
                    return Err(LibraryError::DanglingReference(format!(
                        "implementation {} names unknown capability {}",
                        i.name, i.capability
                    )));
                }
                if i.sku_classes.is_empty() {
                    return Err(LibraryError::InvalidEntity(format!(
                        "implementation {} supports no SKU class",
                        i.name
                    )));
                }
                let key = i.name.clone();
                self.implementations.insert(key.clone(), i);
                Ok(EntityKey::Implementation(key))
            }
            Entity::Sku(s) => {
                if self.skus.contains_key(&s.sku_id) {
                    return Err(LibraryError::DuplicateKey(format!("sku {}", s.sku_id)));
                }
                let finite =
                    [s.busy_watts, s.idle_watts, s.dollars_per_unit_hour].iter().all(|v| v.is_finite() && *v >= 0.0);
                if !finite || s.busy_watts < s.idle_watts {
                    return Err(LibraryError::InvalidEntity(format!(
                        "sku {}: power and rates must be non-negative with busy >= idle",
                        s.sku_id
                    )));
                }
                let key = s.sku_id.clone();
                self.skus.insert(key.clone(), s);
                Ok(EntityKey::Sku(key))
            }
            Entity::Profile(p) => {
                let imp = self.implementations.get(&p.implementation).ok_or_else(|| {
                    LibraryError::DanglingReference(format!(
                        "profile names unknown implementation {}",
                        p.implementation
                    ))
                })?;
                let sku = self
                    .skus
                    .get(&p.sku)
                    .ok_or_else(|| LibraryError::DanglingReference(format!("profile names unknown sku {}", p.sku)))?;
                if !imp.sku_classes.contains(&sku.class) {
                    return Err(LibraryError::InvalidEntity(format!(
                        "{} does not run on {} SKUs",
                        imp.name, sku.class
                    )));
                }
                if !(p.throughput.is_finite() && p.throughput > 0.0)
                    || !(p.setup_s.is_finite() && p.setup_s >= 0.0)
                    || p.units == 0
                {
                    return Err(LibraryError::InvalidEntity(format!(
                        "profile {}@{}x{}: throughput > 0, setup >= 0 and units >= 1 required",
                        p.implementation, p.sku, p.units
                    )));
                }
                let key = p.key();
                if self.profiles.contains_key(&key) {
                    return Err(LibraryError::DuplicateKey(format!("profile {}@{}x{}", key.0, key.1, key.2)));
                }
                self.profiles.insert(key.clone(), p);
                Ok(EntityKey::Profile(key))
            }
        }
    }

    /// Builds a library from the three catalog documents.
    pub fn from_catalogs(skus_json: &str, agents_json: &str, profiles_json: &str) -> Result<Self, LibraryError> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct AgentsFile {
            agents: Vec<AgentSpec>,
            implementations: Vec<Implementation>,
        }
        let skus: Vec<HardwareSku> =
            serde_json::from_str(skus_json).map_err(|e| LibraryError::Catalog(format!("sku catalog: {e}")))?;
        let agents: AgentsFile =
            serde_json::from_str(agents_json).map_err(|e| LibraryError::Catalog(format!("agent catalog: {e}")))?;
        let profiles: Vec<ExecutionProfile> =
            serde_json::from_str(profiles_json).map_err(|e| LibraryError::Catalog(format!("profile catalog: {e}")))?;

        let mut lib = Self::new();
        for s in skus {
            lib.register(Entity::Sku(s))?;
        }
        for a in agents.agents {
            lib.register(Entity::Agent(a))?;
        }
        for i in agents.implementations {
            lib.register(Entity::Implementation(i))?;
        }
        for p in profiles {
            lib.register(Entity::Profile(p))?;
        }
        Ok(lib)
    }

    pub fn agent(&self, capability: &str) -> Option<&AgentSpec> {
        self.agents.get(capability)
    }

    pub fn agents(&self) -> impl Iterator<Item = &AgentSpec> {
        self.agents.values()
    }

    pub fn implementation(&self, name: &str) -> Option<&Implementation> {
        self.implementations.get(name)
    }

    pub fn implementations(&self) -> impl Iterator<Item = &Implementation> {
        self.implementations.values()
    }

    pub fn sku(&self, id: &str) -> Option<&HardwareSku> {
        self.skus.get(id)
    }

    pub fn skus(&self) -> impl Iterator<Item = &HardwareSku> {
        self.skus.values()
    }

    pub fn profile(&self, implementation: &str, sku: &str, units: u32) -> Option<&ExecutionProfile> {
        self.profiles.get(&(implementation.to_string(), sku.to_string(), units))
    }

    /// Profiles of one implementation in (sku, units) order.
    pub fn profiles_for<'a>(&'a self, implementation: &'a str) -> impl Iterator<Item = &'a ExecutionProfile> + 'a {
        self.profiles.values().filter(move |p| p.implementation == implementation)
    }

    pub fn profiles(&self) -> impl Iterator<Item = &ExecutionProfile> {
        self.profiles.values()
    }

    /// Implementations of `capability` at or above `quality_floor`, best first.
    pub fn implementations_for(
        &self,
        capability: &str,
        quality_floor: u32,
    ) -> Result<Vec<&Implementation>, LibraryError> {
        if !self.agents.contains_key(capability) {
            return Err(LibraryError::UnknownCapability(capability.to_string()));
        }
        let mut out: Vec<&Implementation> = self
            .implementations
            .values()
            .filter(|i| i.capability == capability && i.quality >= quality_floor)
            .collect();
        out.sort_by(|a, b| b.quality.cmp(&a.quality).then_with(|| a.name.cmp(&b.name)));
        Ok(out)
    }
}

/// A recorded run of one implementation on one allocation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub work_units: f64,
    pub elapsed_s: f64,
    pub units: u32,
    pub setup_s: f64,
}

/// Fits a linear-throughput profile to one observation.
pub fn calibrate_profile(implementation: &str, sku: &str, obs: &Observation) -> Result<ExecutionProfile, LibraryError> {
    if obs.elapsed_s.partial_cmp(&obs.setup_s) != Some(std::cmp::Ordering::Greater) || obs.setup_s < 0.0 {
        return Err(LibraryError::DegenerateObservation { elapsed_s: obs.elapsed_s, setup_s: obs.setup_s });
    }
    if obs.work_units.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) || obs.units == 0 {
        return Err(LibraryError::InvalidEntity("observation needs positive work and at least one unit".into()));
    }
    Ok(ExecutionProfile {
        implementation: implementation.to_string(),
        sku: sku.to_string(),
        units: obs.units,
        throughput: obs.work_units / (obs.elapsed_s - obs.setup_s),
        setup_s: obs.setup_s,
    })
}
