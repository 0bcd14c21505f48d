//! Model registry.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeClass {
    Small,
    Medium,
    Large,
}

impl SizeClass {
    pub const ALL: [SizeClass; 3] = [SizeClass::Small, SizeClass::Medium, SizeClass::Large];

    pub fn name(self) -> &'static str {
        match self {
            SizeClass::Small => "Small",
            SizeClass::Medium => "Medium",
            SizeClass::Large => "Large",
        }
    }
}

fn default_temperature() -> f64 {
    1.0
}

fn default_max_retries() -> u32 {
    3
}

fn default_concurrency() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub registry_key: String,
    pub display_name: String,
    /// Identifier the serving endpoint expects in the request.
    #[serde(default)]
    pub served_model: String,
    pub endpoint_url: String,
    pub size_class: SizeClass,
    pub family: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    /// Extra attempts per slot after an output that is not an allowed label.
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    /// In-flight request limit for this model's endpoint.
    #[serde(default = "default_concurrency")]
    pub max_concurrency: usize,
    /// Environment variable holding a bearer token for the endpoint.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
}

impl ModelSpec {
    pub fn new(registry_key: &str, size_class: SizeClass, family: &str, endpoint_url: &str) -> Self {
        Self {
            registry_key: registry_key.into(),
            display_name: registry_key.into(),
            served_model: registry_key.into(),
            endpoint_url: endpoint_url.into(),
            size_class,
            family: family.into(),
            temperature: default_temperature(),
            max_retries: default_max_retries(),
            max_concurrency: default_concurrency(),
            api_key_env: None,
        }
    }

    /// The identifier sent to the endpoint.
    pub fn request_model(&self) -> &str {
        if self.served_model.is_empty() {
            &self.registry_key
        } else {
            &self.served_model
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RegistryError {
    #[error("duplicate registry key {0}")]
    DuplicateKey(String),
    #[error("model {key}: temperature {temperature} outside [0, 2]")]
    Temperature { key: String, temperature: f64 },
    #[error("model {0}: max_concurrency must be at least 1")]
    Concurrency(String),
    #[error("unknown model {0}")]
    UnknownModel(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelRegistry {
    #[serde(rename = "model", default)]
    models: Vec<ModelSpec>,
}

impl ModelRegistry {
    pub fn new(models: Vec<ModelSpec>) -> Result<Self, RegistryError> {
        let registry = Self { models };
        registry.validate()?;
        Ok(registry)
    }

    pub fn validate(&self) -> Result<(), RegistryError> {
        let mut seen = BTreeSet::new();
        for m in &self.models {
            if !seen.insert(m.registry_key.as_str()) {
                return Err(RegistryError::DuplicateKey(m.registry_key.clone()));
            }
            if !(0.0..=2.0).contains(&m.temperature) {
                return Err(RegistryError::Temperature {
                    key: m.registry_key.clone(),
                    temperature: m.temperature,
                });
            }
            if m.max_concurrency == 0 {
                return Err(RegistryError::Concurrency(m.registry_key.clone()));
            }
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Result<&ModelSpec, RegistryError> {
        self.models
            .iter()
            .find(|m| m.registry_key == key)
            .ok_or_else(|| RegistryError::UnknownModel(key.into()))
    }

    pub fn contains(&self, key: &str) -> bool {
        self.models.iter().any(|m| m.registry_key == key)
    }

    pub fn models(&self) -> &[ModelSpec] {
        &self.models
    }

    /// The twelve open instruction-tuned models, all pointed at one
    /// OpenAI-compatible endpoint.
    pub fn builtin(endpoint_url: &str) -> Self {
        use SizeClass::*;
        let entries: [(&str, &str, SizeClass, &str); 12] = [
            ("mistral-7b", "mistralai/Mistral-7B-Instruct-v0.3", Small, "Mistral"),
            ("llama-8b", "meta-llama/Llama-3.1-8B-Instruct", Small, "Llama"),
            ("olmo2-7b", "allenai/OLMo-2-1124-7B-Instruct", Small, "Olmo2"),
            ("qwen2.5-7b", "Qwen/Qwen2.5-7B-Instruct", Small, "Qwen2.5"),
            ("command-r-7b", "CohereLabs/c4ai-command-r7b-12-2024", Small, "Command-r"),
            ("mixtral-8x7b", "mistralai/Mixtral-8x7B-Instruct-v0.1", Medium, "Mistral"),
            ("mistral-22b", "mistralai/Mistral-Small-Instruct-2409", Medium, "Mistral"),
            ("olmo2-32b", "allenai/OLMo-2-0325-32B-Instruct", Medium, "Olmo2"),
            ("mixtral-8x22b", "mistralai/Mixtral-8x22B-Instruct-v0.1", Medium, "Mistral"),
            ("llama-70b", "meta-llama/Llama-3.3-70B-Instruct", Large, "Llama"),
            ("qwen2.5-72b", "Qwen/Qwen2.5-72B-Instruct", Large, "Qwen2.5"),
            ("command-r-104b", "CohereLabs/c4ai-command-r-plus-08-2024", Large, "Command-r"),
        ];
        let display = [
            "Mistral-7B", "Llama-8B", "Olmo2-7B", "Qwen2.5-7B", "Command-r-7B", "Mixtral-8x7B",
            "Mistral-22B", "Olmo2-32B", "Mixtral-8x22B", "Llama-70B", "Qwen2.5-72B", "Command-r-104B",
        ];
        let models = entries
            .iter()
            .zip(display)
            .map(|((key, served, size, family), name)| {
                let mut spec = ModelSpec::new(key, *size, family, endpoint_url);
                spec.display_name = name.into();
                spec.served_model = (*served).into();
                spec
            })
            .collect();
        Self { models }
    }
}
