//! Synthetic aerial environment: semantic heightmap scenes, depth and label
//! rendering, action execution and episode definitions.

mod action;
mod episode;
mod scene;

use thiserror::Error;

use crate::docfmt::DocError;

pub use action::{
    apply_action, Action, ActionLimits, ActionOutcome, ActionVerb, UnknownVerb, COLLISION_MARGIN,
};
pub(crate) use episode::pose_to_text;
pub use episode::{parse_episode_document, Episode, DEFAULT_MAX_ACTIONS, EPISODE_HEADER};
pub use scene::{
    parse_scene_document, Canopy, Hit, Scene, View, DEFAULT_CEILING, SCENE_HEADER,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error("{}", format_violations(.0))]
    Parse(Vec<DocError>),
    #[error("out of bounds: {0}")]
    OutOfBounds(String),
}

fn format_violations(v: &[DocError]) -> String {
    match v {
        [] => "invalid document".to_string(),
        [one] => one.to_string(),
        [first, rest @ ..] => format!("{first} (and {} more)", rest.len()),
    }
}

/// Loads and validates a scene document.
pub fn load_scene(text: &str) -> Result<Scene, WorldError> {
    Scene::parse(text)
}
