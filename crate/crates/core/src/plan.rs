//! Sub-goal plan ledger. Sub-goal texts are fixed at decomposition time and
//! only their statuses change afterwards.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::legend::{LabelId, Legend};
use crate::perception::{match_to_legend, tokenize, LandmarkExtractor, LandmarkSet, PerceptionError};
use crate::stmr::StmrMatrix;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("instruction is empty")]
    EmptyInstruction,
    #[error("planning backend: {0}")]
    Backend(#[from] PerceptionError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Status {
    Todo,
    InProcess,
    Completed,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Todo => "TODO",
            Status::InProcess => "In Process",
            Status::Completed => "Completed",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        let norm: String = s
            .chars()
            .filter(|c| c.is_alphanumeric())
            .collect::<String>()
            .to_lowercase();
        match norm.as_str() {
            "todo" => Some(Status::Todo),
            "inprocess" | "inprogress" => Some(Status::InProcess),
            "completed" | "complete" | "done" => Some(Status::Completed),
            _ => None,
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubGoal {
    pub index: usize,
    pub text: String,
    pub landmarks: LandmarkSet,
    pub status: Status,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanState {
    subgoals: Vec<SubGoal>,
}

const CONNECTIVES: &[&str] = &["and then", "and", "then", "after that", "next", "finally", "afterwards"];

/// Splits an instruction on `, ; . ! ?` and on the words `then` and `and`.
pub fn split_clauses(instruction: &str) -> Vec<String> {
    let mut out = Vec::new();
    for piece in instruction.split([',', ';', '.', '!', '?']) {
        let mut current: Vec<&str> = Vec::new();
        for word in piece.split_whitespace() {
            let w = word.to_lowercase();
            if w == "then" || w == "and" {
                if !current.is_empty() {
                    out.push(current.join(" "));
                    current.clear();
                }
            } else {
                current.push(word);
            }
        }
        if !current.is_empty() {
            out.push(current.join(" "));
        }
    }
    out.into_iter()
        .map(|c| strip_connectives(&c).to_string())
        .filter(|c| !tokenize(c).is_empty())
        .collect()
}

fn strip_connectives(clause: &str) -> &str {
    let mut rest = clause.trim();
    loop {
        let lower = rest.to_lowercase();
        let hit = CONNECTIVES.iter().find(|c| {
            lower.starts_with(*c)
                && lower[c.len()..].chars().next().is_none_or(|ch| !ch.is_alphanumeric())
        });
        match hit {
            Some(c) => rest = rest[c.len()..].trim_start(),
            None => return rest,
        }
    }
}

/// Cuts the instruction into sub-goals, each with its own landmarks. The
/// first sub-goal starts in process.
pub fn decompose_instruction(
    instruction: &str,
    extractor: &dyn LandmarkExtractor,
) -> Result<PlanState, PlanError> {
    let clauses = split_clauses(instruction);
    if clauses.is_empty() {
        return Err(PlanError::EmptyInstruction);
    }
    let mut subgoals = Vec::with_capacity(clauses.len());
    for (index, text) in clauses.into_iter().enumerate() {
        let landmarks = LandmarkSet::new(extractor.extract(&text)?);
        subgoals.push(SubGoal {
            index,
            text,
            landmarks,
            status: Status::Todo,
        });
    }
    Ok(PlanState::new(subgoals))
}

impl PlanState {
    /// Builds a plan and resets statuses to the initial pattern.
    pub fn new(mut subgoals: Vec<SubGoal>) -> Self {
        for (i, g) in subgoals.iter_mut().enumerate() {
            g.index = i;
            g.status = if i == 0 { Status::InProcess } else { Status::Todo };
        }
        Self { subgoals }
    }

    pub fn subgoals(&self) -> &[SubGoal] {
        &self.subgoals
    }

    pub fn len(&self) -> usize {
        self.subgoals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subgoals.is_empty()
    }

    /// Index of the first non-completed sub-goal, `len()` once exhausted.
    pub fn pointer(&self) -> usize {
        self.subgoals
            .iter()
            .position(|g| g.status != Status::Completed)
            .unwrap_or(self.subgoals.len())
    }

    pub fn current(&self) -> Option<&SubGoal> {
        self.subgoals.get(self.pointer())
    }

    /// All sub-goals completed: the agent may stop.
    pub fn is_exhausted(&self) -> bool {
        self.pointer() == self.subgoals.len()
    }

    pub fn completed_count(&self) -> usize {
        self.subgoals.iter().filter(|g| g.status == Status::Completed).count()
    }

    /// Marks the current sub-goal completed and starts the next one.
    pub fn complete_current(&mut self) {
        let p = self.pointer();
        if let Some(g) = self.subgoals.get_mut(p) {
            g.status = Status::Completed;
        }
        if let Some(g) = self.subgoals.get_mut(p + 1) {
            g.status = Status::InProcess;
        }
    }

    /// `Completed* (In Process)? TODO*`, with the pointer at the in-process
    /// entry when one exists.
    pub fn statuses_well_formed(&self) -> bool {
        let mut phase = 0;
        let mut in_process = 0;
        for g in &self.subgoals {
            let p = match g.status {
                Status::Completed => 0,
                Status::InProcess => {
                    in_process += 1;
                    1
                }
                Status::Todo => 2,
            };
            if p < phase {
                return false;
            }
            phase = p;
        }
        in_process <= 1
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for g in &self.subgoals {
            s.push_str(&format!("{}. ({}) {}\n", g.index + 1, g.status, display_text(&g.text)));
        }
        s
    }
}

fn display_text(text: &str) -> String {
    let mut chars = text.chars();
    let mut s: String = match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    };
    if !s.ends_with('.') {
        s.push('.');
    }
    s
}

/// Legend ids of the current sub-goal's landmarks, plus a warning for each
/// landmark with no legend match.
pub fn current_subgoal_labels(plan: &PlanState, legend: &Legend, tau: f64) -> (BTreeSet<LabelId>, Vec<String>) {
    let Some(g) = plan.current() else {
        return (BTreeSet::new(), Vec::new());
    };
    let (matched, missing) = match_to_legend(&g.landmarks, legend, tau);
    let warnings = missing
        .into_iter()
        .map(|m| format!("landmark `{m}` of sub-goal {} not in legend", g.index + 1))
        .collect();
    (matched.into_values().collect(), warnings)
}

/// Completes sub-goals while the current one has a landmark label within
/// one cell of the matrix center. Repeats, so a second call on the same
/// matrix changes nothing.
pub fn update_plan_state(plan: &PlanState, matrix: &StmrMatrix, legend: &Legend, tau: f64) -> PlanState {
    let mut next = plan.clone();
    let near: BTreeSet<i32> = matrix.near_center(1).collect();
    loop {
        let (labels, _) = current_subgoal_labels(&next, legend, tau);
        if labels.iter().any(|l| near.contains(&(l.0 as i32))) {
            next.complete_current();
        } else {
            return next;
        }
    }
}

/// Plan lines echoed back by a model, as `(number, status, text)`.
pub fn parse_plan_block(text: &str) -> Vec<(usize, Status, String)> {
    let mut out = Vec::new();
    for line in text.lines() {
        let line = line.trim().trim_start_matches(['-', '*', ' ']);
        let Some((num, rest)) = line.split_once('.') else {
            continue;
        };
        let Ok(num) = num.trim().parse::<usize>() else {
            continue;
        };
        let rest = rest.trim();
        let Some(rest) = rest.strip_prefix('(') else {
            continue;
        };
        let Some((status, body)) = rest.split_once(')') else {
            continue;
        };
        if let Some(status) = Status::parse(status) {
            out.push((num, status, body.trim().to_string()));
        }
    }
    out
}

/// Compares the model's echoed plan against the ledger and returns one
/// line per disagreement. The ledger wins, with one exception: a current
/// sub-goal without landmarks has nothing to check proximity against, so a
/// model report of `Completed` for it is accepted.
pub fn reconcile(plan: &mut PlanState, echoed: &str) -> Vec<String> {
    let lines = parse_plan_block(echoed);
    let mut notes = Vec::new();
    if lines.is_empty() {
        if !echoed.trim().is_empty() {
            notes.push("plan block not in numbered form".to_string());
        }
        return notes;
    }
    while let Some(g) = plan.current() {
        let number = g.index + 1;
        let reported_done = lines
            .iter()
            .any(|(n, st, _)| *n == number && *st == Status::Completed);
        if !(g.landmarks.is_empty() && reported_done) {
            break;
        }
        plan.complete_current();
        notes.push(format!("item {number}: accepted model completion, no landmark to check"));
    }
    if lines.len() != plan.len() {
        notes.push(format!("model listed {} items, ledger has {}", lines.len(), plan.len()));
    }
    for (num, status, _) in &lines {
        match plan.subgoals.get(num.wrapping_sub(1)) {
            Some(g) if g.status != *status => notes.push(format!(
                "item {num}: model says {status}, ledger says {}",
                g.status
            )),
            Some(_) => {}
            None => notes.push(format!("item {num} not in ledger")),
        }
    }
    notes
}

/// How the plan evolves across steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PlanStrategy {
    /// Keep the ledger and update statuses each step.
    #[default]
    Stateful,
    /// Discard the ledger and rebuild it from the instruction each step.
    Regenerate,
}

impl std::str::FromStr for PlanStrategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "stateful" | "state" | "w-state" => Ok(Self::Stateful),
            "regenerate" | "stateless" | "wo-state" => Ok(Self::Regenerate),
            _ => Err(format!("unknown plan strategy `{s}`")),
        }
    }
}

impl fmt::Display for PlanStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Stateful => "stateful",
            Self::Regenerate => "regenerate",
        })
    }
}

/// Per-episode plan keeper applying a [`PlanStrategy`].
#[derive(Debug, Clone)]
pub struct PlanTracker {
    strategy: PlanStrategy,
    initial: PlanState,
    state: PlanState,
}

impl PlanTracker {
    pub fn new(strategy: PlanStrategy, initial: PlanState) -> Self {
        Self {
            strategy,
            state: initial.clone(),
            initial,
        }
    }

    pub fn strategy(&self) -> PlanStrategy {
        self.strategy
    }

    pub fn state(&self) -> &PlanState {
        &self.state
    }

    pub fn step(&mut self, matrix: &StmrMatrix, legend: &Legend, tau: f64) -> &PlanState {
        let base = match self.strategy {
            PlanStrategy::Stateful => &self.state,
            PlanStrategy::Regenerate => &self.initial,
        };
        self.state = update_plan_state(base, matrix, legend, tau);
        &self.state
    }

    /// Applies [`reconcile`] to the current state.
    pub fn reconcile(&mut self, echoed: &str) -> Vec<String> {
        reconcile(&mut self.state, echoed)
    }
}
