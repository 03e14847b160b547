use super::synth::GeneratorSpec;
use super::HarnessError;

const PRESETS: [(&str, &str); 3] = [
    ("traffic", include_str!("../../presets/traffic.toml")),
    ("glaucoma", include_str!("../../presets/glaucoma.toml")),
    ("bird", include_str!("../../presets/bird.toml")),
];

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

/// A built-in generator spec by name.
pub fn preset(name: &str) -> Result<GeneratorSpec, HarnessError> {
    let (_, text) = PRESETS.iter().find(|(n, _)| *n == name).ok_or_else(|| {
        HarnessError::Config(format!(
            "unknown preset {name:?} (known: {})",
            preset_names().collect::<Vec<_>>().join(", ")
        ))
    })?;
    GeneratorSpec::from_toml(text)
}
