//! Named weight presets, shipped as `profiles/profiles.json`.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::objective::ObjectiveParams;

const PROFILES: &str = include_str!("../profiles/profiles.json");

pub const DEFAULT_PROFILE: &str = "default";

pub fn all() -> BTreeMap<String, ObjectiveParams> {
    serde_json::from_str(PROFILES).expect("bundled profiles are valid JSON")
}

pub fn names() -> Vec<String> {
    all().into_keys().collect()
}

pub fn profile(name: &str) -> Result<ObjectiveParams> {
    let key = name.to_ascii_lowercase();
    let p = all().remove(&key).ok_or_else(|| {
        Error::InvalidParams(format!(
            "unknown profile {name:?}; available: {}",
            names().join(", ")
        ))
    })?;
    p.validate()?;
    Ok(p)
}
