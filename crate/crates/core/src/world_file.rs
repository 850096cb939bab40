//! TOML world documents and the worlds shipped with the crate.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::geometry::{GeometryError, WorldSpec};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum WorldFileError {
    #[error("cannot read world file {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed world document: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("cannot encode world: {0}")]
    Encode(#[from] toml::ser::Error),
    #[error(transparent)]
    Invalid(#[from] GeometryError),
    #[error("no shipped world named `{0}`")]
    UnknownBuiltin(String),
}

const BUILTIN: &[(&str, &str)] = &[
    ("env1_cluttered", include_str!("../worlds/env1_cluttered.toml")),
    ("env2_corridor", include_str!("../worlds/env2_corridor.toml")),
    ("env1_desk", include_str!("../worlds/env1_desk.toml")),
];

pub fn builtin_names() -> impl Iterator<Item = &'static str> {
    BUILTIN.iter().map(|(n, _)| *n)
}

pub fn builtin_world<T: Scalar>(name: &str) -> Result<WorldSpec<T>, WorldFileError> {
    let (_, doc) = BUILTIN
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| WorldFileError::UnknownBuiltin(name.to_string()))?;
    parse_world(doc)
}

pub fn parse_world<T: Scalar>(doc: &str) -> Result<WorldSpec<T>, WorldFileError> {
    let world: WorldSpec<T> = toml::from_str(doc)?;
    world.validate()?;
    Ok(world)
}

pub fn world_to_string<T: Scalar>(world: &WorldSpec<T>) -> Result<String, WorldFileError> {
    Ok(toml::to_string(world)?)
}

/// Loads a world from a file path, or from a shipped world when `spec` names one
/// (e.g. `env1_desk`) and no such file exists.
pub fn load_world<T: Scalar>(spec: impl AsRef<Path>) -> Result<WorldSpec<T>, WorldFileError> {
    let path = spec.as_ref();
    if !path.exists() {
        if let Some(name) = path.to_str().filter(|s| BUILTIN.iter().any(|(n, _)| n == s)) {
            return builtin_world(name);
        }
    }
    let doc = fs::read_to_string(path).map_err(|source| WorldFileError::Io { path: path.display().to_string(), source })?;
    parse_world(&doc)
}

pub fn save_world<T: Scalar>(world: &WorldSpec<T>, path: impl AsRef<Path>) -> Result<(), WorldFileError> {
    let path = path.as_ref();
    fs::write(path, world_to_string(world)?).map_err(|source| WorldFileError::Io { path: path.display().to_string(), source })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Shape;

    #[test]
    fn shipped_worlds_load_and_round_trip() {
        for name in builtin_names() {
            let world: WorldSpec<f64> = builtin_world(name).unwrap();
            assert_eq!(world.name, name);
            let text = world_to_string(&world).unwrap();
            let back: WorldSpec<f64> = parse_world(&text).unwrap();
            assert_eq!(back, world);
            assert_eq!(world_to_string(&back).unwrap(), text);
        }
    }

    #[test]
    fn shipped_world_sizes() {
        let env1: WorldSpec<f64> = builtin_world("env1_cluttered").unwrap();
        assert!((5..=9).contains(&env1.obstacles.len()));
        assert_eq!(env1.bounds.width(), 4.0);
        let desk: WorldSpec<f64> = builtin_world("env1_desk").unwrap();
        assert_eq!(desk.obstacles.len(), 5);
        let corridor: WorldSpec<f64> = builtin_world("env2_corridor").unwrap();
        assert_eq!(corridor.bounds.height(), 1.5);
    }

    #[test]
    fn awkward_floats_round_trip() {
        let mut world: WorldSpec<f64> = builtin_world("env1_desk").unwrap();
        world.obstacles.push(Shape::circle([0.1 + 0.2, -1.0 / 3.0].into(), std::f64::consts::PI / 17.0).unwrap());
        let back: WorldSpec<f64> = parse_world(&world_to_string(&world).unwrap()).unwrap();
        assert_eq!(back, world);
    }

    #[test]
    fn invalid_documents_are_rejected() {
        let bad = r#"
name = "bad"
bounds = { min = [0.0, 0.0], max = [1.0, 1.0] }
spawn_region = { min = [0.0, 0.0], max = [2.0, 1.0] }
goal_region = { min = [0.0, 0.0], max = [1.0, 1.0] }
"#;
        assert!(matches!(parse_world::<f64>(bad), Err(WorldFileError::Invalid(_))));
        assert!(matches!(parse_world::<f64>("name = 3"), Err(WorldFileError::Parse(_))));
        assert!(builtin_world::<f64>("nope").is_err());
    }
}
