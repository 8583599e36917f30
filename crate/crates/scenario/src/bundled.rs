//! Scenarios shipped inside the binary.

use crate::error::ScenarioError;
use crate::scenario::Scenario;

pub const BUNDLED: &[(&str, &str)] = &[
    ("fig1", include_str!("../scenarios/fig1.json")),
    ("so3_jets", include_str!("../scenarios/so3_jets.json")),
    (
        "so3_covariant_oracle",
        include_str!("../scenarios/so3_covariant_oracle.json"),
    ),
    ("underactuated", include_str!("../scenarios/underactuated.json")),
    ("sweep_demo", include_str!("../scenarios/sweep_demo.json")),
];

pub fn bundled_names() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(n, _)| *n)
}

pub fn bundled_source(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn bundled(name: &str) -> Result<Scenario, ScenarioError> {
    let text = bundled_source(name).ok_or_else(|| ScenarioError::UnknownBundled(name.to_string()))?;
    Scenario::from_json(text)
}
