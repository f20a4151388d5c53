//! Command-line front end: `run`, `dump-map` and `validate`.
//!
//! Exit codes: 0 success, 1 data or IO error, 2 usage error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::docfmt::Document;
use crate::eval::{
    aggregate, count_steps, read_step, results_table, write_suite, AgentConfig, Harness, RESULTS_CSV,
};
use crate::geometry::{CameraIntrinsics, CameraMount, CameraRig};
use crate::legend::Legend;
use crate::mapping::TopDownMap;
use crate::perception::{DegradedPerceptor, OraclePerceptor, Perceptor, RuleBasedExtractor};
use crate::planner::{
    EchoBackend, LlmBackend, RandomBackend, RemoteBackend, RemoteConfig, ScriptedBackend,
};
use crate::plan::PlanStrategy;
use crate::world::{parse_episode_document, parse_scene_document, Episode, Scene, EPISODE_HEADER, SCENE_HEADER};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 1,
        }
    }
}

fn data(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "stmr", about = "Language-guided UAV navigation with a semantic-topo-metric map prompt")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an episode suite and write results plus per-step traces.
    Run(RunArgs),
    /// Print a recorded step's matrix and full map.
    DumpMap(DumpArgs),
    /// Check scene and episode files.
    Validate {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
}

#[derive(Debug, clap::Args)]
pub struct RunArgs {
    #[arg(long)]
    pub scene: PathBuf,
    /// Episode files, directories or glob patterns.
    #[arg(long, num_args = 1.., required = true)]
    pub episodes: Vec<String>,
    /// scripted:<path> | remote:<url> | echo | random[:<seed>]
    #[arg(long, default_value = "echo")]
    pub backend: String,
    /// oracle | degraded:<rate>[:<seed>]
    #[arg(long, default_value = "oracle")]
    pub perceptor: String,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub parallel: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// key = value settings; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DumpFormat {
    Ascii,
    Pgm,
}

#[derive(Debug, clap::Args)]
pub struct DumpArgs {
    /// Episode trace directory, `<out>/<episode-id>`.
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long)]
    pub step: usize,
    #[arg(long, value_enum, default_value = "ascii")]
    pub format: DumpFormat,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BackendSpec {
    Scripted(PathBuf),
    Remote(String),
    Echo,
    Random(Option<u64>),
}

impl FromStr for BackendSpec {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self, CliError> {
        let (kind, arg) = s.split_once(':').map_or((s, None), |(k, a)| (k, Some(a)));
        match (kind, arg) {
            ("scripted", Some(p)) if !p.is_empty() => Ok(Self::Scripted(p.into())),
            ("remote", Some(u)) if !u.is_empty() => Ok(Self::Remote(u.to_string())),
            ("echo", None) => Ok(Self::Echo),
            ("random", None) => Ok(Self::Random(None)),
            ("random", Some(seed)) => seed
                .parse()
                .map(|s| Self::Random(Some(s)))
                .map_err(|_| usage(format!("bad random seed `{seed}`"))),
            _ => Err(usage(format!("unknown backend `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PerceptorSpec {
    Oracle,
    Degraded { rate: f64, seed: Option<u64> },
}

impl FromStr for PerceptorSpec {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self, CliError> {
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            ["oracle"] => Ok(Self::Oracle),
            ["degraded", rate, rest @ ..] if rest.len() <= 1 => {
                let rate: f64 = rate.parse().map_err(|_| usage(format!("bad drop rate `{rate}`")))?;
                if !(0.0..=1.0).contains(&rate) {
                    return Err(usage("drop rate must be in [0, 1]"));
                }
                let seed = rest
                    .first()
                    .map(|s| s.parse().map_err(|_| usage(format!("bad perceptor seed `{s}`"))))
                    .transpose()?;
                Ok(Self::Degraded { rate, seed })
            }
            _ => Err(usage(format!("unknown perceptor `{s}`"))),
        }
    }
}

/// Remote client settings read from the config file.
#[derive(Debug, Clone, PartialEq)]
pub struct RemoteSettings {
    pub model: String,
    pub temperature: Option<f64>,
    pub token_env: String,
    pub timeout_secs: u64,
    pub max_retries: usize,
    pub backoff_ms: u64,
}

impl Default for RemoteSettings {
    fn default() -> Self {
        let d = RemoteConfig::new("");
        Self {
            model: d.model,
            temperature: d.temperature,
            token_env: d.token_env,
            timeout_secs: d.timeout.as_secs(),
            max_retries: d.max_retries,
            backoff_ms: d.backoff.as_millis() as u64,
        }
    }
}

/// Everything a `run` needs after merging config file and flags.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scene: PathBuf,
    pub episodes: Vec<String>,
    pub backend: BackendSpec,
    pub perceptor: PerceptorSpec,
    pub out: PathBuf,
    pub parallel: usize,
    pub seed: u64,
    pub agent: AgentConfig,
    pub remote: RemoteSettings,
}

/// Config-file keys and what they control.
pub const CONFIG_KEYS: &[&str] = &[
    "tau",
    "cell_metric",
    "matrix_size",
    "voxel_size",
    "max_degree",
    "max_distance",
    "success_radius",
    "max_actions",
    "encoder",
    "plan_strategy",
    "camera_tilt_deg",
    "image_width",
    "image_height",
    "hfov_deg",
    "max_range",
    "max_requery",
    "max_fallback_steps",
    "topo_merge_radius",
    "template",
    "parallel",
    "seed",
    "remote_model",
    "remote_temperature",
    "remote_token_env",
    "remote_timeout_secs",
    "remote_max_retries",
    "remote_backoff_ms",
];

fn get<T: FromStr>(doc: &Document, key: &str) -> Result<Option<T>, CliError> {
    doc.parsed::<T>(key).map_err(|e| usage(format!("config: {e}")))
}

/// Applies a `key = value` config document on top of defaults. Relative
/// template paths resolve against `base`.
pub fn apply_config(
    text: &str,
    base: &Path,
    agent: &mut AgentConfig,
    remote: &mut RemoteSettings,
) -> Result<(Option<usize>, Option<u64>), CliError> {
    let doc = Document::parse(text, "").map_err(|e| usage(format!("config: {e}")))?;
    for key in doc.entries.iter().map(|e| e.key.as_str()) {
        if !CONFIG_KEYS.contains(&key) {
            return Err(usage(format!("config: unknown key `{key}`")));
        }
    }
    if let Some(v) = get(&doc, "tau")? {
        agent.tau = v;
    }
    if let Some(v) = get(&doc, "cell_metric")? {
        agent.matrix.cell_metric = v;
    }
    if let Some(v) = get(&doc, "matrix_size")? {
        agent.matrix.size = v;
    }
    if let Some(v) = get(&doc, "voxel_size")? {
        agent.voxel_size = v;
    }
    if let Some(v) = get(&doc, "max_degree")? {
        agent.limits.max_degree = v;
    }
    if let Some(v) = get(&doc, "max_distance")? {
        agent.limits.max_distance = v;
    }
    if let Some(v) = get(&doc, "success_radius")? {
        agent.success_radius = v;
    }
    if let Some(v) = get(&doc, "max_actions")? {
        agent.max_actions = Some(v);
    }
    if let Some(v) = get::<String>(&doc, "encoder")? {
        agent.encoder = v.parse().map_err(usage)?;
    }
    if let Some(v) = get::<String>(&doc, "plan_strategy")? {
        agent.plan_strategy = v.parse::<PlanStrategy>().map_err(usage)?;
    }
    let tilt: Option<f64> = get(&doc, "camera_tilt_deg")?;
    let width: Option<usize> = get(&doc, "image_width")?;
    let height: Option<usize> = get(&doc, "image_height")?;
    let hfov: Option<f64> = get(&doc, "hfov_deg")?;
    if width.is_some() || height.is_some() || hfov.is_some() {
        let k = &agent.rig.intrinsics;
        let (w, h) = (width.unwrap_or(k.width), height.unwrap_or(k.height));
        let hfov = hfov.unwrap_or_else(|| 2.0 * (k.width as f64 / 2.0 / k.fx).atan().to_degrees());
        agent.rig.intrinsics = CameraIntrinsics::from_fov(w, h, hfov.to_radians()).map_err(|e| usage(format!("config: {e}")))?;
    }
    if let Some(t) = tilt {
        agent.rig = CameraRig {
            mount: CameraMount::pitched_down(t.to_radians()),
            ..agent.rig
        };
    }
    if let Some(v) = get(&doc, "max_range")? {
        agent.rig.max_range = v;
    }
    if let Some(v) = get(&doc, "max_requery")? {
        agent.max_requery = v;
    }
    if let Some(v) = get(&doc, "max_fallback_steps")? {
        agent.max_fallback_steps = v;
    }
    if let Some(v) = get(&doc, "topo_merge_radius")? {
        agent.topo_merge_radius = v;
    }
    if let Some(p) = get::<String>(&doc, "template")? {
        let path = base.join(p);
        agent.template = Some(fs::read_to_string(&path).map_err(|e| data(format!("{}: {e}", path.display())))?);
    }
    if let Some(v) = get(&doc, "remote_model")? {
        remote.model = v;
    }
    if let Some(v) = get(&doc, "remote_temperature")? {
        remote.temperature = Some(v);
    }
    if let Some(v) = get(&doc, "remote_token_env")? {
        remote.token_env = v;
    }
    if let Some(v) = get(&doc, "remote_timeout_secs")? {
        remote.timeout_secs = v;
    }
    if let Some(v) = get(&doc, "remote_max_retries")? {
        remote.max_retries = v;
    }
    if let Some(v) = get(&doc, "remote_backoff_ms")? {
        remote.backoff_ms = v;
    }
    Ok((get(&doc, "parallel")?, get(&doc, "seed")?))
}

impl RunConfig {
    pub fn from_args(args: &RunArgs) -> Result<Self, CliError> {
        let mut agent = AgentConfig::default();
        let mut remote = RemoteSettings::default();
        let (mut parallel, mut seed) = (None, None);
        if let Some(path) = &args.config {
            let text = fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
            let base = path.parent().unwrap_or(Path::new("."));
            (parallel, seed) = apply_config(&text, base, &mut agent, &mut remote)?;
        }
        let cfg = RunConfig {
            scene: args.scene.clone(),
            episodes: args.episodes.clone(),
            backend: args.backend.parse()?,
            perceptor: args.perceptor.parse()?,
            out: args.out.clone(),
            parallel: args.parallel.or(parallel).unwrap_or(1),
            seed: args.seed.or(seed).unwrap_or(0),
            agent,
            remote,
        };
        cfg.check()?;
        Ok(cfg)
    }

    pub fn check(&self) -> Result<(), CliError> {
        let a = &self.agent;
        if !(a.tau > 0.0 && a.tau < 1.0) {
            return Err(usage("tau must be in (0, 1)"));
        }
        if a.matrix.size < 2 || a.matrix.size % 2 != 0 {
            return Err(usage("matrix_size must be even and at least 2"));
        }
        if self.parallel == 0 {
            return Err(usage("parallel must be at least 1"));
        }
        if !(a.matrix.cell_metric > 0.0 && a.voxel_size > 0.0) {
            return Err(usage("cell_metric and voxel_size must be positive"));
        }
        Ok(())
    }

    fn build_backend(&self) -> Result<Box<dyn LlmBackend>, CliError> {
        Ok(match &self.backend {
            BackendSpec::Scripted(p) => Box::new(ScriptedBackend::load(p).map_err(data)?),
            BackendSpec::Remote(url) => {
                let r = &self.remote;
                Box::new(RemoteBackend::new(RemoteConfig {
                    url: url.clone(),
                    model: r.model.clone(),
                    temperature: r.temperature,
                    token_env: r.token_env.clone(),
                    timeout: Duration::from_secs(r.timeout_secs),
                    max_retries: r.max_retries,
                    backoff: Duration::from_millis(r.backoff_ms),
                }))
            }
            BackendSpec::Echo => Box::new(EchoBackend),
            BackendSpec::Random(seed) => Box::new(RandomBackend::new(seed.unwrap_or(self.seed))),
        })
    }

    fn build_perceptor(&self) -> Box<dyn Perceptor> {
        match self.perceptor {
            PerceptorSpec::Oracle => Box::new(OraclePerceptor),
            PerceptorSpec::Degraded { rate, seed } => Box::new(DegradedPerceptor::new(rate, seed.unwrap_or(self.seed))),
        }
    }
}

/// Expands files, directories (`*.episode` inside) and glob patterns, each
/// group sorted by path.
pub fn expand_episode_paths(patterns: &[String]) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    for p in patterns {
        let path = Path::new(p);
        let mut group: Vec<PathBuf> = if path.is_dir() {
            fs::read_dir(path)
                .map_err(|e| data(format!("{p}: {e}")))?
                .flatten()
                .map(|e| e.path())
                .filter(|p| p.extension().is_some_and(|x| x == "episode"))
                .collect()
        } else if path.is_file() {
            vec![path.to_path_buf()]
        } else {
            glob::glob(p)
                .map_err(|e| usage(format!("bad pattern `{p}`: {e}")))?
                .flatten()
                .collect()
        };
        if group.is_empty() {
            return Err(data(format!("no episodes match `{p}`")));
        }
        group.sort();
        out.extend(group);
    }
    Ok(out)
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| data(format!("{}: {e}", path.display())))
}

pub fn load_scene_file(path: &Path) -> Result<Scene, CliError> {
    Scene::parse(&read(path)?).map_err(|e| match e {
        crate::world::WorldError::Parse(errs) => {
            let mut msg = format!("{}: {} violations", path.display(), errs.len());
            for e in errs {
                msg.push_str(&format!("\n  {e}"));
            }
            CliError::Data(msg)
        }
        other => data(format!("{}: {other}", path.display())),
    })
}

pub fn load_episode_file(path: &Path) -> Result<Episode, CliError> {
    Episode::parse(&read(path)?).map_err(|e| data(format!("{}: {e}", path.display())))
}

/// Runs the suite and writes `<out>`; returns the summary table.
pub fn cmd_run(cfg: &RunConfig) -> Result<String, CliError> {
    let scene = load_scene_file(&cfg.scene)?;
    let episodes = expand_episode_paths(&cfg.episodes)?
        .iter()
        .map(|p| load_episode_file(p))
        .collect::<Result<Vec<_>, _>>()?;
    let backend = cfg.build_backend()?;
    let perceptor = cfg.build_perceptor();
    let extractor = RuleBasedExtractor::for_legend(scene.legend());
    let harness = Harness {
        scene: &scene,
        perceptor: perceptor.as_ref(),
        backend: backend.as_ref(),
        extractor: &extractor,
        config: &cfg.agent,
    };
    let results = harness.run_suite(&episodes, cfg.parallel).map_err(data)?;
    write_suite(&cfg.out, &results).map_err(data)?;
    let mut report = results_table(&results).map_err(data)?;
    let s = aggregate(&results).map_err(data)?;
    writeln!(
        report,
        "{} episodes, SR {:.1}%, OSR {:.1}%, mean NE {:.1} m; results in {}",
        s.episodes,
        s.sr,
        s.osr,
        s.mean_ne,
        cfg.out.join(RESULTS_CSV).display()
    )
    .unwrap();
    Ok(report)
}

/// Character for a label id in the ASCII map: digits, then letters.
fn label_char(id: u32) -> char {
    match id {
        1..=9 => char::from_digit(id, 10).unwrap(),
        10..=35 => (b'a' + (id - 10) as u8) as char,
        _ => '#',
    }
}

/// Full map with `.` unexplored, `*` trajectory and `@` the UAV, north up.
pub fn ascii_map(map: &TopDownMap, legend: &Legend, uav: (i64, i64)) -> String {
    let (i0, j0, i1, j1) = map.extent().unwrap_or((uav.0, uav.1, uav.0, uav.1));
    let (i0, j0, i1, j1) = (i0.min(uav.0), j0.min(uav.1), i1.max(uav.0), j1.max(uav.1));
    let mut s = String::new();
    let key: Vec<String> = legend.iter().map(|(id, n)| format!("{}={n}", label_char(id.0))).collect();
    writeln!(s, "key: .=unexplored *=trajectory @=uav {}", key.join(" ")).unwrap();
    for j in (j0..=j1).rev() {
        let row: String = (i0..=i1)
            .map(|i| {
                if (i, j) == uav {
                    '@'
                } else if map.is_trajectory((i, j)) {
                    '*'
                } else {
                    map.label((i, j)).map_or('.', |l| label_char(l.0))
                }
            })
            .collect();
        writeln!(s, "{row}").unwrap();
    }
    s
}

/// Plain (`P2`) graymap: unexplored black, trajectory and UAV white,
/// labels in between by id.
pub fn pgm_map(map: &TopDownMap, legend: &Legend, uav: (i64, i64)) -> String {
    let (i0, j0, i1, j1) = map.extent().unwrap_or((uav.0, uav.1, uav.0, uav.1));
    let (i0, j0, i1, j1) = (i0.min(uav.0), j0.min(uav.1), i1.max(uav.0), j1.max(uav.1));
    let max_id = legend.iter().map(|(id, _)| id.0).max().unwrap_or(1).max(1);
    let mut s = format!("P2\n{} {}\n255\n", i1 - i0 + 1, j1 - j0 + 1);
    for j in (j0..=j1).rev() {
        let row: Vec<String> = (i0..=i1)
            .map(|i| {
                let v = if (i, j) == uav || map.is_trajectory((i, j)) {
                    255
                } else {
                    map.label((i, j)).map_or(0, |l| 40 + l.0 * 180 / max_id)
                };
                v.to_string()
            })
            .collect();
        writeln!(s, "{}", row.join(" ")).unwrap();
    }
    s
}

pub fn cmd_dump_map(args: &DumpArgs) -> Result<String, CliError> {
    let n = count_steps(&args.trace).map_err(data)?;
    if args.step >= n {
        return Err(usage(format!("step {} out of range, trace has {n} steps", args.step)));
    }
    let rec = read_step(&args.trace, args.step).map_err(data)?;
    let (map, legend) = TopDownMap::parse_dump(&rec.map_dump).map_err(data)?;
    let uav = map.cell_of(rec.pose.x, rec.pose.y);
    Ok(match args.format {
        DumpFormat::Ascii => format!("{}\n{}", rec.matrix_text, ascii_map(&map, &legend, uav)),
        DumpFormat::Pgm => pgm_map(&map, &legend, uav),
    })
}

fn first_line(text: &str) -> &str {
    text.lines()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with('#'))
        .unwrap_or("")
}

/// Checks each file; episode files are also checked against the scene
/// given among `paths`, if any. Returns the report and the violation count.
pub fn cmd_validate(paths: &[PathBuf]) -> Result<(String, usize), CliError> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut inner: Vec<PathBuf> = fs::read_dir(p)
                .map_err(|e| data(format!("{}: {e}", p.display())))?
                .flatten()
                .map(|e| e.path())
                .filter(|p| p.extension().is_some_and(|x| x == "scene" || x == "episode"))
                .collect();
            inner.sort();
            files.extend(inner);
        } else {
            files.push(p.clone());
        }
    }
    let texts = files
        .iter()
        .map(|p| read(p).map(|t| (p, t)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut report = String::new();
    let mut count = 0;
    let mut scene = None;
    for (p, text) in &texts {
        if first_line(text) == SCENE_HEADER {
            let (s, errs) = parse_scene_document(text);
            for e in &errs {
                writeln!(report, "{}: {e}", p.display()).unwrap();
            }
            count += errs.len();
            if errs.is_empty() {
                scene = s;
            }
        }
    }
    for (p, text) in &texts {
        match first_line(text) {
            SCENE_HEADER => {}
            EPISODE_HEADER => {
                let (ep, errs) = parse_episode_document(text);
                for e in &errs {
                    writeln!(report, "{}: {e}", p.display()).unwrap();
                }
                count += errs.len();
                if let (Some(ep), Some(scene)) = (ep, &scene) {
                    for v in ep.check_against(scene) {
                        writeln!(report, "{}: {v}", p.display()).unwrap();
                        count += 1;
                    }
                }
            }
            other => {
                writeln!(report, "{}: unrecognised header `{other}`", p.display()).unwrap();
                count += 1;
            }
        }
    }
    writeln!(report, "{count} violations").unwrap();
    Ok((report, count))
}

/// Parses arguments, runs the command and returns the exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let outcome = match &cli.command {
        Command::Run(a) => RunConfig::from_args(a).and_then(|c| cmd_run(&c)).map(|s| (s, 0)),
        Command::DumpMap(a) => cmd_dump_map(a).map(|s| (s, 0)),
        Command::Validate { paths } => cmd_validate(paths).map(|(s, n)| (s, i32::from(n > 0))),
    };
    match outcome {
        Ok((text, code)) => {
            print!("{text}");
            code
        }
        Err(e) => {
            eprintln!("stmr: {e}");
            e.exit_code()
        }
    }
}
