//! Runs the fixture suite under every map encoder and plan strategy. With
//! the bundled scripts the actions do not depend on the prompt, so the
//! interesting columns are prompt size and the random baseline; point
//! `STMR_REMOTE_URL` at a chat-completions endpoint to ablate a real model.

use stmr::eval::{aggregate, AgentConfig, Harness, Summary};
use stmr::perception::{OraclePerceptor, RuleBasedExtractor};
use stmr::plan::PlanStrategy;
use stmr::planner::{parse_script, Encoder, LlmBackend, RandomBackend, RemoteBackend, RemoteConfig, ScriptedBackend};
use stmr::synth::{riverside_scene, riverside_suite, script_text};

pub struct Row {
    pub backend: &'static str,
    pub encoder: Encoder,
    pub strategy: PlanStrategy,
    pub summary: Summary,
    pub mean_prompt_chars: f64,
}

/// `max_actions` caps each episode to keep the sweep short.
pub fn sweep(max_actions: Option<usize>) -> Vec<Row> {
    let scene = riverside_scene();
    let suite = riverside_suite(&scene);
    let episodes: Vec<_> = suite.iter().map(|f| f.episode.clone()).collect();
    let mut scripted = ScriptedBackend::new();
    for f in &suite {
        scripted = scripted.with_script(f.episode.id.clone(), parse_script(&script_text(&f.actions)).expect("script"));
    }
    let mut backends: Vec<(&'static str, Box<dyn LlmBackend>)> =
        vec![("scripted", Box::new(scripted)), ("random", Box::new(RandomBackend::new(7)))];
    if let Ok(url) = std::env::var("STMR_REMOTE_URL") {
        backends.push(("remote", Box::new(RemoteBackend::new(RemoteConfig::new(url)))));
    }
    let extractor = RuleBasedExtractor::for_legend(scene.legend());
    let mut rows = Vec::new();
    for (name, backend) in &backends {
        for encoder in Encoder::ALL {
            for strategy in [PlanStrategy::Stateful, PlanStrategy::Regenerate] {
                let config = AgentConfig {
                    encoder,
                    plan_strategy: strategy,
                    max_actions,
                    ..AgentConfig::default()
                };
                let harness = Harness {
                    scene: &scene,
                    perceptor: &OraclePerceptor,
                    backend: backend.as_ref(),
                    extractor: &extractor,
                    config: &config,
                };
                let results = harness.run_suite(&episodes, 4).expect("thread pool");
                let prompts: Vec<usize> = results.iter().flat_map(|r| r.steps.iter().map(|s| s.prompt.len())).collect();
                rows.push(Row {
                    backend: name,
                    encoder,
                    strategy,
                    summary: aggregate(&results).expect("non-empty suite"),
                    mean_prompt_chars: prompts.iter().sum::<usize>() as f64 / prompts.len().max(1) as f64,
                });
            }
        }
    }
    rows
}

pub fn run() -> Vec<Row> {
    sweep(Some(6))
}

#[allow(dead_code)]
fn main() {
    println!("{:<9} {:<7} {:<11} {:>7} {:>6} {:>6} {:>8}", "backend", "encoder", "plan", "NE/m", "SR/%", "OSR/%", "chars");
    for r in sweep(None) {
        println!(
            "{:<9} {:<7} {:<11} {:>7.1} {:>6.1} {:>6.1} {:>8.0}",
            r.backend,
            r.encoder.as_str(),
            format!("{:?}", r.strategy),
            r.summary.mean_ne,
            r.summary.sr,
            r.summary.osr,
            r.mean_prompt_chars
        );
    }
}
