use nalgebra::Point3;
use rayon::prelude::*;

use crate::geometry::{
    backproject_image, backproject_pixel, camera_to_world, CameraIntrinsics, CameraMount, CameraRig,
    UavPose,
};
use crate::legend::LabelId;
use crate::mapping::{project_top_down, TopDownMap, VoxelGrid};
use crate::perception::{
    extract_landmarks, filter_masks, masks_to_label_image, LandmarkExtractor, PerceivedMask,
    Perceptor, DEFAULT_THRESHOLD,
};
use crate::plan::{current_subgoal_labels, decompose_instruction, PlanStrategy, PlanTracker};
use crate::planner::{
    build_prompt, parse_response, BackendError, Encoder, HistoryEntry, LlmBackend, LlmResponse,
    PlannerError, PromptInputs, PromptSettings, PromptTemplate, QueryRequest,
};
use crate::stmr::{
    encode_metric, encode_topo, extract_local_window, legend_line, pool_to_matrix, serialize_matrix,
    MatrixConfig, MetricObservation, TopoGraph,
};
use crate::world::{apply_action, Action, ActionLimits, ActionVerb, Episode, Scene, View};

use super::{
    navigation_error, oracle_success, success, EpisodeResult, EvalError, StepTrace, StopReason,
    DEFAULT_SUCCESS_RADIUS,
};

/// Every tunable of the agent loop.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    pub tau: f64,
    pub matrix: MatrixConfig,
    pub voxel_size: f64,
    pub limits: ActionLimits,
    pub success_radius: f64,
    /// Overrides each episode's own budget when set.
    pub max_actions: Option<usize>,
    pub encoder: Encoder,
    pub plan_strategy: PlanStrategy,
    pub rig: CameraRig,
    /// Extra queries for a step whose reply cannot be parsed.
    pub max_requery: usize,
    /// Consecutive unparseable steps before the episode is abandoned.
    pub max_fallback_steps: usize,
    /// Places closer than this (meters) merge in the topological encoding.
    pub topo_merge_radius: f64,
    /// Custom template text; the encoder's bundled template otherwise.
    pub template: Option<String>,
}

pub const DEFAULT_CAMERA_TILT_DEG: f64 = 45.0;
pub const DEFAULT_IMAGE_WIDTH: usize = 32;
pub const DEFAULT_IMAGE_HEIGHT: usize = 24;
pub const DEFAULT_HFOV_DEG: f64 = 90.0;

pub fn default_rig() -> CameraRig {
    CameraRig::new(
        CameraIntrinsics::from_fov(DEFAULT_IMAGE_WIDTH, DEFAULT_IMAGE_HEIGHT, DEFAULT_HFOV_DEG.to_radians())
            .expect("default intrinsics"),
        CameraMount::pitched_down(DEFAULT_CAMERA_TILT_DEG.to_radians()),
    )
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            tau: DEFAULT_THRESHOLD,
            matrix: MatrixConfig::default(),
            voxel_size: crate::mapping::DEFAULT_VOXEL_SIZE,
            limits: ActionLimits::default(),
            success_radius: DEFAULT_SUCCESS_RADIUS,
            max_actions: None,
            encoder: Encoder::Stmr,
            plan_strategy: PlanStrategy::Stateful,
            rig: default_rig(),
            max_requery: 2,
            max_fallback_steps: 3,
            topo_merge_radius: crate::stmr::DEFAULT_CELL_METRIC,
            template: None,
        }
    }
}

/// The components one suite run shares across episodes.
pub struct Harness<'a> {
    pub scene: &'a Scene,
    pub perceptor: &'a dyn Perceptor,
    pub backend: &'a dyn LlmBackend,
    pub extractor: &'a dyn LandmarkExtractor,
    pub config: &'a AgentConfig,
}

/// Reply for one step after re-queries.
struct Decision {
    parsed: Option<LlmResponse>,
    responses: Vec<String>,
    transcripts: Vec<String>,
    notes: Vec<String>,
}

impl Harness<'_> {
    fn template(&self) -> Result<PromptTemplate, PlannerError> {
        match &self.config.template {
            Some(t) => PromptTemplate::parse(t),
            None => Ok(PromptTemplate::builtin(self.config.encoder)),
        }
    }

    fn settings(&self) -> PromptSettings {
        PromptSettings {
            matrix_size: self.config.matrix.size,
            cell_metric: self.config.matrix.cell_metric,
            limits: self.config.limits,
        }
    }

    fn decide(&self, episode: &Episode, step: usize, prompt: &str) -> Result<Decision, BackendError> {
        let mut d = Decision {
            parsed: None,
            responses: Vec::new(),
            transcripts: Vec::new(),
            notes: Vec::new(),
        };
        for attempt in 0..=self.config.max_requery {
            let reply = self.backend.query(&QueryRequest {
                episode_id: &episode.id,
                step,
                attempt,
                prompt,
            })?;
            d.responses.push(reply.text.clone());
            d.transcripts.extend(reply.transcript);
            match parse_response(&reply.text, &self.config.limits) {
                Ok(r) => {
                    d.notes.extend(r.notes.iter().cloned());
                    d.parsed = Some(r);
                    break;
                }
                Err(e) => d.notes.push(format!("attempt {attempt}: {e}")),
            }
        }
        Ok(d)
    }

    /// Runs one episode to a stop action, the action budget or an error.
    pub fn run_episode(&self, episode: &Episode) -> EpisodeResult {
        let cfg = self.config;
        let legend = self.scene.legend();
        let max_actions = cfg.max_actions.unwrap_or(episode.max_actions);
        let mut pose = episode.start;
        let mut trajectory = vec![pose];
        let mut steps = Vec::new();
        let mut history: Vec<HistoryEntry> = Vec::new();
        let mut grid = VoxelGrid::new(cfg.voxel_size);
        let mut track = TopDownMap::new(cfg.voxel_size);
        track.mark_waypoint(&pose);
        let mut topo = TopoGraph::default();
        let mut fallbacks = 0;
        let legend_text = legend_line(legend);

        let finish = |trajectory: Vec<UavPose>, steps, stopped_by, error: Option<String>| {
            let stop_pose = *trajectory.last().expect("trajectory starts with the start pose");
            let ne = navigation_error(&stop_pose.position(), &episode.goal);
            EpisodeResult {
                episode_id: episode.id.clone(),
                oracle_success: oracle_success(&trajectory, &episode.goal, cfg.success_radius),
                success: success(ne, stopped_by, cfg.success_radius),
                trajectory,
                stop_pose,
                stopped_by,
                error,
                ne,
                steps,
            }
        };

        let setup = (|| -> Result<_, String> {
            let landmarks = extract_landmarks(&episode.instruction, self.extractor).map_err(|e| e.to_string())?;
            let plan = decompose_instruction(&episode.instruction, self.extractor).map_err(|e| e.to_string())?;
            let template = self.template().map_err(|e| e.to_string())?;
            Ok((landmarks, PlanTracker::new(cfg.plan_strategy, plan), template))
        })();
        let (landmarks, mut plan, template) = match setup {
            Ok(s) => s,
            Err(e) => return finish(trajectory, steps, StopReason::Error, Some(e)),
        };

        for step in 0..max_actions {
            let fail = |trajectory, steps, e: String| finish(trajectory, steps, StopReason::Error, Some(format!("step {step}: {e}")));
            // perceive
            let view = match self.scene.render(&pose, &cfg.rig) {
                Ok(v) => v,
                Err(e) => return fail(trajectory, steps, e.to_string()),
            };
            let masks = match self.perceptor.perceive(&view, legend, step) {
                Ok(m) => m,
                Err(e) => return fail(trajectory, steps, e.to_string()),
            };
            let kept = filter_masks(masks, &landmarks, cfg.tau);
            // map
            let (w, h) = view.labels.dims();
            let labels = masks_to_label_image(&kept, w, h);
            let cloud = match backproject_image(&view.depth, &labels, &cfg.rig, &pose) {
                Ok(c) => c,
                Err(e) => return fail(trajectory, steps, e.to_string()),
            };
            if let Err(e) = grid.insert_points(&cloud, legend) {
                return fail(trajectory, steps, e.to_string());
            }
            let (subgoal, warnings) = current_subgoal_labels(plan.state(), legend, cfg.tau);
            let map = with_track(project_top_down(&grid, &subgoal), &track);
            let matrix = match extract_local_window(&map, &pose, &cfg.matrix)
                .and_then(|win| pool_to_matrix(&win, cfg.matrix.size, &subgoal, legend))
            {
                Ok(m) => m,
                Err(e) => return fail(trajectory, steps, e.to_string()),
            };
            plan.step(&matrix, legend, cfg.tau);
            // prompt
            let matrix_text = serialize_matrix(&matrix, &pose);
            let map_text = match cfg.encoder {
                Encoder::Stmr => matrix_text.clone(),
                Encoder::Topo => {
                    let captions: Vec<String> = kept.iter().map(|m| m.caption.clone()).collect();
                    topo.visit(&pose, &captions, cfg.topo_merge_radius);
                    encode_topo(&topo)
                }
                Encoder::Metric => encode_metric(&observations(&kept, &view, &cfg.rig, &pose, legend)),
            };
            let plan_text = plan.state().to_text();
            let prompt = match build_prompt(
                &template,
                &PromptInputs {
                    instruction: &episode.instruction,
                    history: &history,
                    map_text: &map_text,
                    plan_text: &plan_text,
                    legend_line: &legend_text,
                },
                &self.settings(),
            ) {
                Ok(p) => p.text,
                Err(e) => return fail(trajectory, steps, e.to_string()),
            };
            // decide
            let decision = match self.decide(episode, step, &prompt) {
                Ok(d) => d,
                Err(e) => return fail(trajectory, steps, e.to_string()),
            };
            let mut notes = warnings;
            notes.extend(decision.notes);
            let action = match &decision.parsed {
                Some(r) => {
                    fallbacks = 0;
                    notes.extend(plan.reconcile(&r.plan_block).into_iter().map(|n| format!("plan: {n}")));
                    r.action
                }
                None => {
                    fallbacks += 1;
                    notes.push("no parseable reply, holding position".into());
                    Action::new(ActionVerb::Straight, 0.0, 0.0)
                }
            };
            let mut trace = StepTrace {
                step,
                pose,
                prompt,
                responses: decision.responses,
                transcripts: decision.transcripts,
                action,
                notes,
                matrix_text,
                map_dump: map.dump(legend),
                plan_text,
            };
            if decision.parsed.is_none() && fallbacks >= cfg.max_fallback_steps {
                steps.push(trace);
                return fail(trajectory, steps, format!("{fallbacks} consecutive unparseable replies"));
            }
            if action.verb == ActionVerb::Stop {
                steps.push(trace);
                return finish(trajectory, steps, StopReason::StopAction, None);
            }
            // act
            let outcome = apply_action(self.scene, &pose, &action);
            if outcome.collided {
                trace.notes.push(format!("collision after {:.2} m", outcome.travelled));
            }
            steps.push(trace);
            track.mark_segment(&pose, &outcome.pose);
            history.push(HistoryEntry {
                action,
                collided: outcome.collided,
            });
            pose = outcome.pose;
            trajectory.push(pose);
        }
        finish(trajectory, steps, StopReason::MaxActions, None)
    }

    /// Runs episodes on up to `parallel` threads. Results keep input order.
    pub fn run_suite(&self, episodes: &[Episode], parallel: usize) -> Result<Vec<EpisodeResult>, EvalError> {
        if parallel <= 1 {
            return Ok(episodes.iter().map(|e| self.run_episode(e)).collect());
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(parallel)
            .build()
            .map_err(|e| EvalError::Pool(e.to_string()))?;
        Ok(pool.install(|| episodes.par_iter().map(|e| self.run_episode(e)).collect()))
    }
}

fn with_track(mut map: TopDownMap, track: &TopDownMap) -> TopDownMap {
    for c in track.trajectory() {
        map.mark_cell(c);
    }
    map
}

/// Centroid bearing and range of each kept mask.
fn observations(
    kept: &[PerceivedMask],
    view: &View,
    rig: &CameraRig,
    pose: &UavPose,
    legend: &crate::legend::Legend,
) -> Vec<MetricObservation> {
    let w = view.depth.width();
    kept.iter()
        .filter_map(|m| {
            let mut sum = Point3::origin().coords;
            let mut n = 0usize;
            for &p in &m.pixels {
                let (u, v) = (p % w, p / w);
                let d = *view.depth.get(u, v);
                if !(d > 0.0 && d <= rig.max_range) {
                    continue;
                }
                let cam = backproject_pixel(u as f64, v as f64, d, &rig.intrinsics).ok()?;
                sum += camera_to_world(&cam, pose, &rig.mount).ok()?.coords;
                n += 1;
            }
            if n == 0 {
                return None;
            }
            let name = m
                .label
                .and_then(|l: LabelId| legend.name(l))
                .unwrap_or(&m.caption)
                .to_string();
            Some(MetricObservation::from_world(name, &Point3::from(sum / n as f64), pose))
        })
        .collect()
}
