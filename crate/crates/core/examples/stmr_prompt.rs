//! Runs the agent part of the way along a reference route and prints the
//! prompt it sends to the model, once per map encoder.

use stmr::eval::{AgentConfig, Harness};
use stmr::perception::{OraclePerceptor, RuleBasedExtractor};
use stmr::planner::{parse_script, Encoder, ScriptedBackend};
use stmr::synth::{riverside_scene, riverside_suite, script_text};

/// Prompt text at `step` of episode e07 for each encoder.
pub fn prompts_at(step: usize) -> Vec<(Encoder, String)> {
    let scene = riverside_scene();
    let fixture = riverside_suite(&scene)
        .into_iter()
        .find(|f| f.episode.id == "e07")
        .expect("e07 exists");
    let script = parse_script(&script_text(&fixture.actions)).expect("generated script parses");
    let backend = ScriptedBackend::new().with_script("e07", script);
    let extractor = RuleBasedExtractor::for_legend(scene.legend());
    Encoder::ALL
        .iter()
        .map(|&encoder| {
            let config = AgentConfig {
                encoder,
                max_actions: Some(step + 1),
                ..AgentConfig::default()
            };
            let harness = Harness {
                scene: &scene,
                perceptor: &OraclePerceptor,
                backend: &backend,
                extractor: &extractor,
                config: &config,
            };
            let result = harness.run_episode(&fixture.episode);
            let prompt = result.steps.last().expect("at least one step").prompt.clone();
            (encoder, prompt)
        })
        .collect()
}

pub fn run() -> Vec<(Encoder, String)> {
    prompts_at(14)
}

#[allow(dead_code)]
fn main() {
    for (encoder, prompt) in run() {
        println!("======== {} ========\n{prompt}", encoder.as_str());
    }
}
