//! Scenarios shipped with the binary, addressed as `@name`.

use std::path::Path;

use crate::config::ScenarioConfig;
use crate::error::HarnessError;

pub const BUNDLED: &[(&str, &str)] = &[
    ("desk-both", include_str!("../scenarios/desk-both.toml")),
    ("male-only", include_str!("../scenarios/male-only.toml")),
    ("female-only", include_str!("../scenarios/female-only.toml")),
    ("obs-admissible", include_str!("../scenarios/obs-admissible.toml")),
    ("obs-witness", include_str!("../scenarios/obs-witness.toml")),
    ("empty", include_str!("../scenarios/empty.toml")),
    ("short-horizon", include_str!("../scenarios/short-horizon.toml")),
    ("study-temporal", include_str!("../scenarios/study-temporal.toml")),
    ("study-spatial", include_str!("../scenarios/study-spatial.toml")),
];

pub fn bundled(name: &str) -> Result<ScenarioConfig, HarnessError> {
    BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| HarnessError::Config(format!("no bundled scenario named {name:?}")))
        .and_then(|(_, text)| ScenarioConfig::parse(text))
}

/// `@name` for a bundled scenario, anything else is a path.
pub fn load(spec: &str) -> Result<ScenarioConfig, HarnessError> {
    match spec.strip_prefix('@') {
        Some(name) => bundled(name),
        None => {
            let path = Path::new(spec);
            let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
                path: spec.to_string(),
                source,
            })?;
            ScenarioConfig::parse(&text)
        }
    }
}
