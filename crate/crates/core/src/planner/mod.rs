//! Prompt assembly, LLM backends and response parsing.

mod backend;
mod response;

pub use backend::*;
pub use response::*;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::stmr::{check_matrix_text, StmrError};
use crate::world::{Action, ActionLimits, ActionVerb};

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error("template: {0}")]
    Template(String),
    #[error("map block: {0}")]
    MapFormat(#[from] StmrError),
    #[error("unparseable response: {0}")]
    Unparseable(String),
    #[error("action: {0}")]
    ActionParse(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// Which map encoding the prompt carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Encoder {
    #[default]
    Stmr,
    Topo,
    Metric,
}

impl Encoder {
    pub const ALL: [Encoder; 3] = [Encoder::Stmr, Encoder::Topo, Encoder::Metric];

    pub fn as_str(self) -> &'static str {
        match self {
            Encoder::Stmr => "stmr",
            Encoder::Topo => "topo",
            Encoder::Metric => "metric",
        }
    }

    pub fn builtin_template(self) -> &'static str {
        match self {
            Encoder::Stmr => include_str!("../../templates/stmr_v1.txt"),
            Encoder::Topo => include_str!("../../templates/topo_v1.txt"),
            Encoder::Metric => include_str!("../../templates/metric_v1.txt"),
        }
    }
}

impl fmt::Display for Encoder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Encoder {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Encoder::ALL
            .into_iter()
            .find(|e| e.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown encoder `{s}`"))
    }
}

const TEMPLATE_MAGIC: &str = "# stmr-template v1";
const REQUIRED: [&str; 5] = ["instruction", "history", "map", "plan", "legend"];
const OPTIONAL: [&str; 5] = ["matrix_size", "center", "cell_metric", "max_degree", "max_distance"];

/// A parsed prompt template: a header `# stmr-template v1 <encoder>` followed
/// by text with `{name}` placeholders.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    pub encoder: Encoder,
    body: String,
}

impl PromptTemplate {
    pub fn parse(text: &str) -> Result<Self, PlannerError> {
        let (header, body) = text
            .split_once('\n')
            .ok_or_else(|| PlannerError::Template("missing header line".into()))?;
        let encoder = header
            .trim()
            .strip_prefix(TEMPLATE_MAGIC)
            .ok_or_else(|| PlannerError::Template(format!("header must start with `{TEMPLATE_MAGIC}`")))?
            .trim()
            .parse::<Encoder>()
            .map_err(PlannerError::Template)?;
        let names = placeholders(body)?;
        for want in REQUIRED {
            if !names.iter().any(|n| n == want) {
                return Err(PlannerError::Template(format!("placeholder {{{want}}} missing")));
            }
        }
        for n in &names {
            if !REQUIRED.contains(&n.as_str()) && !OPTIONAL.contains(&n.as_str()) {
                return Err(PlannerError::Template(format!("unknown placeholder {{{n}}}")));
            }
        }
        Ok(Self {
            encoder,
            body: body.to_string(),
        })
    }

    pub fn builtin(encoder: Encoder) -> Self {
        Self::parse(encoder.builtin_template()).expect("bundled template is valid")
    }

    /// Substitutes every placeholder in one pass; substituted text is not
    /// rescanned.
    fn render(&self, lookup: impl Fn(&str) -> String) -> String {
        let mut out = String::with_capacity(self.body.len() * 2);
        let mut rest = self.body.as_str();
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let close = rest[open..].find('}').expect("checked at parse") + open;
            out.push_str(&lookup(&rest[open + 1..close]));
            rest = &rest[close + 1..];
        }
        out.push_str(rest);
        out
    }
}

fn placeholders(body: &str) -> Result<Vec<String>, PlannerError> {
    let mut out = Vec::new();
    let mut rest = body;
    while let Some(open) = rest.find(['{', '}']) {
        if rest.as_bytes()[open] == b'}' {
            return Err(PlannerError::Template("unmatched `}`".into()));
        }
        let close = rest[open..]
            .find('}')
            .ok_or_else(|| PlannerError::Template("unclosed `{`".into()))?
            + open;
        let name = &rest[open + 1..close];
        if name.is_empty() || !name.chars().all(|c| c.is_ascii_lowercase() || c == '_') {
            return Err(PlannerError::Template(format!("bad placeholder `{{{name}}}`")));
        }
        out.push(name.to_string());
        rest = &rest[close + 1..];
    }
    Ok(out)
}

/// One executed action as the history block sees it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryEntry {
    pub action: Action,
    pub collided: bool,
}

/// Merges runs of the same verb into one longer movement. Collisions end a
/// run so the annotation stays attached to the action that hit.
pub fn merge_history(entries: &[HistoryEntry]) -> Vec<HistoryEntry> {
    let mut out: Vec<HistoryEntry> = Vec::new();
    for e in entries {
        match out.last_mut() {
            Some(last)
                if !last.collided
                    && last.action.verb == e.action.verb
                    && e.action.verb != ActionVerb::Stop =>
            {
                last.action.degree += e.action.degree;
                last.action.distance += e.action.distance;
                last.collided = e.collided;
            }
            _ => out.push(*e),
        }
    }
    out
}

fn describe(e: &HistoryEntry) -> String {
    let a = &e.action;
    let mut s = a.verb.as_str().to_string();
    if a.degree > 0.0 {
        s.push_str(&format!(" {} degrees", a.degree));
    }
    if a.distance > 0.0 {
        s.push_str(&format!(" {} meters", a.distance));
    }
    if e.collided {
        s.push_str(" (blocked by obstacle)");
    }
    s
}

/// `[lift 20 meters, left 30 degrees 10 meters, ...]`, `[]` when empty.
pub fn render_history(entries: &[HistoryEntry]) -> String {
    let items: Vec<String> = merge_history(entries).iter().map(describe).collect();
    format!("[{}]", items.join(", "))
}

/// Numeric settings the templates may reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PromptSettings {
    pub matrix_size: usize,
    pub cell_metric: f64,
    pub limits: ActionLimits,
}

impl Default for PromptSettings {
    fn default() -> Self {
        Self {
            matrix_size: crate::stmr::DEFAULT_MATRIX_SIZE,
            cell_metric: crate::stmr::DEFAULT_CELL_METRIC,
            limits: ActionLimits::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptBundle {
    pub encoder: Encoder,
    pub task_description: String,
    pub instruction: String,
    pub history: String,
    pub map_text: String,
    pub plan_text: String,
    pub legend_line: String,
    /// The full prompt.
    pub text: String,
}

/// Inputs for one prompt.
#[derive(Debug, Clone, Copy)]
pub struct PromptInputs<'a> {
    pub instruction: &'a str,
    pub history: &'a [HistoryEntry],
    pub map_text: &'a str,
    pub plan_text: &'a str,
    pub legend_line: &'a str,
}

pub fn build_prompt(
    template: &PromptTemplate,
    inputs: &PromptInputs<'_>,
    settings: &PromptSettings,
) -> Result<PromptBundle, PlannerError> {
    if template.encoder == Encoder::Stmr {
        check_matrix_text(inputs.map_text, settings.matrix_size)?;
    }
    let history = render_history(inputs.history);
    let map = inputs.map_text.trim_end();
    let plan = inputs.plan_text.trim_end();
    let text = template.render(|name| match name {
        "instruction" => inputs.instruction.to_string(),
        "history" => history.clone(),
        "map" => map.to_string(),
        "plan" => plan.to_string(),
        "legend" => inputs.legend_line.to_string(),
        "matrix_size" => settings.matrix_size.to_string(),
        "center" => (settings.matrix_size / 2).to_string(),
        "cell_metric" => settings.cell_metric.to_string(),
        "max_degree" => settings.limits.max_degree.to_string(),
        "max_distance" => settings.limits.max_distance.to_string(),
        other => unreachable!("placeholder {other} validated at parse"),
    });
    let task_description = text
        .split_once("\nInstruction:")
        .map(|(t, _)| t.trim_end().to_string())
        .unwrap_or_default();
    Ok(PromptBundle {
        encoder: template.encoder,
        task_description,
        instruction: inputs.instruction.to_string(),
        history,
        map_text: map.to_string(),
        plan_text: plan.to_string(),
        legend_line: inputs.legend_line.to_string(),
        text,
    })
}

/// The blocks of a prompt laid out like the bundled templates.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptSections {
    pub task_description: String,
    pub instruction: String,
    pub history: String,
    pub map: String,
    pub plan: String,
    /// Everything after the plan lines: the reply format.
    pub reply_format: String,
}

fn is_plan_line(line: &str) -> bool {
    let Some((num, rest)) = line.split_once(". (") else {
        return false;
    };
    !num.is_empty() && num.bytes().all(|b| b.is_ascii_digit()) && rest.contains(") ")
}

/// Splits a prompt into its blocks and checks their order: task
/// description, `Instruction:`, `History: [...]`, `Map:`, `Plan:` with
/// numbered status lines, then a reply format asking for an `Action:`.
pub fn check_prompt_sections(text: &str) -> Result<PromptSections, PlannerError> {
    let bad = |m: &str| PlannerError::Template(format!("prompt layout: {m}"));
    let body = text
        .strip_prefix("[Task Description]\n")
        .ok_or_else(|| bad("missing [Task Description] header"))?;
    let (task, rest) = body.split_once("\nInstruction: ").ok_or_else(|| bad("no Instruction line"))?;
    let (instruction, rest) = rest.split_once("\nHistory: ").ok_or_else(|| bad("no History line"))?;
    let (history, rest) = rest.split_once("\nMap:\n").ok_or_else(|| bad("no Map block"))?;
    if !(history.starts_with('[') && history.ends_with(']')) {
        return Err(bad("history is not a bracketed list"));
    }
    let (map, rest) = rest.split_once("\nPlan:\n").ok_or_else(|| bad("no Plan block"))?;
    let plan_lines: Vec<&str> = rest.lines().take_while(|l| is_plan_line(l)).collect();
    if plan_lines.is_empty() {
        return Err(bad("plan has no numbered lines"));
    }
    let numbered = plan_lines
        .iter()
        .enumerate()
        .all(|(i, l)| l.starts_with(&format!("{}. (", i + 1)));
    if !numbered {
        return Err(bad("plan lines not numbered from 1"));
    }
    let reply_format: String = rest.lines().skip(plan_lines.len()).collect::<Vec<_>>().join("\n");
    if !reply_format.lines().any(|l| l.starts_with("Action:")) {
        return Err(bad("reply format does not ask for an Action"));
    }
    Ok(PromptSections {
        task_description: task.to_string(),
        instruction: instruction.to_string(),
        history: history.to_string(),
        map: map.to_string(),
        plan: plan_lines.join("\n"),
        reply_format,
    })
}
