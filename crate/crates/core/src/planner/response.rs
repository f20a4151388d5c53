use crate::world::{Action, ActionLimits, ActionVerb};

use super::PlannerError;

/// An action plus notes about values that had to be clamped.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedAction {
    pub action: Action,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LlmResponse {
    pub thought: String,
    pub observation: String,
    pub plan_block: String,
    pub action: Action,
    pub notes: Vec<String>,
    pub raw: String,
}

const LABELS: [&str; 4] = ["thought", "observation", "plan", "action"];

fn is_decoration(c: char) -> bool {
    c.is_whitespace() || "*#`'\"->_".contains(c)
}

/// If `line` opens a labelled block, the label index and the rest of the line.
fn block_label(line: &str) -> Option<(usize, &str)> {
    let s = line.trim_start_matches(is_decoration);
    LABELS.iter().enumerate().find_map(|(i, label)| {
        let head = s.get(..label.len())?;
        if !head.eq_ignore_ascii_case(label) {
            return None;
        }
        let after = s[label.len()..].trim_start_matches(is_decoration);
        let rest = after.strip_prefix(':')?;
        Some((i, rest.trim_start_matches(is_decoration)))
    })
}

/// Splits a reply into Thought, Observation, Plan and Action blocks. Labels
/// are case-insensitive, may come in any order and may carry markdown. Only
/// the Action block is required.
pub fn parse_response(raw: &str, limits: &ActionLimits) -> Result<LlmResponse, PlannerError> {
    let mut blocks: [Option<String>; 4] = Default::default();
    let mut current: Option<usize> = None;
    for line in raw.lines() {
        if let Some((i, rest)) = block_label(line) {
            // a repeated label keeps its first occurrence
            if blocks[i].is_none() {
                blocks[i] = Some(rest.trim_end().to_string());
                current = Some(i);
            } else {
                current = None;
            }
            continue;
        }
        if let Some(i) = current {
            let b = blocks[i].as_mut().expect("open block");
            if !b.is_empty() {
                b.push('\n');
            }
            b.push_str(line.trim_end());
        }
    }
    let [thought, observation, plan, action] = blocks.map(|b| b.map(|s| s.trim().to_string()));
    let action_text = action.ok_or_else(|| PlannerError::Unparseable("no Action block".into()))?;
    let parsed = parse_action(&action_text, limits)?;
    Ok(LlmResponse {
        thought: thought.unwrap_or_default(),
        observation: observation.unwrap_or_default(),
        plan_block: plan.unwrap_or_default(),
        action: parsed.action,
        notes: parsed.notes,
        raw: raw.to_string(),
    })
}

const FILLER: &[&str] = &["turn", "go", "move", "fly", "rotate", "by", "the", "for", "and"];

#[derive(Clone, Copy, PartialEq)]
enum Unit {
    Degree,
    Meter,
}

fn unit_of(word: &str) -> Option<Unit> {
    match word {
        "degree" | "degrees" | "deg" | "°" => Some(Unit::Degree),
        "meter" | "meters" | "metre" | "metres" | "m" => Some(Unit::Meter),
        _ => None,
    }
}

/// Splits `15deg` / `10m` / `15°` into number and unit text.
fn split_number(tok: &str) -> Option<(f64, &str)> {
    let end = tok
        .char_indices()
        .find(|&(i, c)| !(c.is_ascii_digit() || c == '.' || (i == 0 && (c == '-' || c == '+'))))
        .map_or(tok.len(), |(i, _)| i);
    let (num, unit) = tok.split_at(end);
    if num.is_empty() || !num.chars().any(|c| c.is_ascii_digit()) {
        return None;
    }
    num.parse::<f64>().ok().map(|v| (v, unit))
}

fn clamp(value: f64, max: f64, what: &str, notes: &mut Vec<String>) -> f64 {
    if value < 0.0 {
        notes.push(format!("{what} {value} below 0, clamped to 0"));
        0.0
    } else if value > max {
        notes.push(format!("{what} {value} above {max}, clamped to {max}"));
        max
    } else {
        value
    }
}

/// Parses `verb [, degree [unit]] [, distance [unit]]`. Parentheses, commas
/// and a leading `Action:` label are optional. Numbers with a unit go to that
/// slot, bare numbers fill degree then distance. Out-of-range values are
/// clamped and noted.
pub fn parse_action(text: &str, limits: &ActionLimits) -> Result<ParsedAction, PlannerError> {
    let err = |m: String| PlannerError::ActionParse(m);
    let first_line = text.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("");
    let mut line = first_line.to_lowercase();
    if let Some((head, rest)) = line.split_once(':') {
        if head.trim_matches(is_decoration) == "action" {
            line = rest.to_string();
        }
    }
    let cleaned: String = line
        .chars()
        .map(|c| if "(),;[]*`'\"".contains(c) { ' ' } else { c })
        .collect();
    let mut words = cleaned
        .split_whitespace()
        .map(|w| w.trim_end_matches(['.', '!']))
        .filter(|w| !w.is_empty() && !FILLER.contains(w))
        .peekable();

    let verb_word = words.next().ok_or_else(|| err("empty action".into()))?;
    let verb: ActionVerb = verb_word.parse().map_err(|e| err(format!("{e}")))?;

    let mut slots: [Option<f64>; 2] = [None, None];
    while let Some(w) = words.next() {
        let (value, attached) =
            split_number(w).ok_or_else(|| err(format!("unexpected word `{w}`")))?;
        if !value.is_finite() {
            return Err(err(format!("non-finite value `{w}`")));
        }
        let unit = if !attached.is_empty() {
            Some(unit_of(attached).ok_or_else(|| err(format!("unknown unit `{attached}`")))?)
        } else if let Some(u) = words.peek().and_then(|n| unit_of(n)) {
            words.next();
            Some(u)
        } else {
            None
        };
        let slot = match unit {
            Some(Unit::Degree) => 0,
            Some(Unit::Meter) => 1,
            None => slots
                .iter()
                .position(Option::is_none)
                .ok_or_else(|| err("more than two numbers".into()))?,
        };
        if slots[slot].replace(value).is_some() {
            let what = if slot == 0 { "degree" } else { "distance" };
            return Err(err(format!("{what} given twice")));
        }
    }
    let mut notes = Vec::new();
    let degree = clamp(slots[0].unwrap_or(0.0), limits.max_degree, "degree", &mut notes);
    let distance = clamp(slots[1].unwrap_or(0.0), limits.max_distance, "distance", &mut notes);
    let action = if verb == ActionVerb::Stop {
        if degree != 0.0 || distance != 0.0 {
            notes.push("stop ignores degree and distance".into());
        }
        Action::stop()
    } else {
        Action::new(verb, degree, distance)
    };
    Ok(ParsedAction { action, notes })
}

/// `Action: (straight), (0 degrees), (10 meters)`
pub fn serialize_action(a: &Action) -> String {
    format!("Action: ({}), ({} degrees), ({} meters)", a.verb, a.degree, a.distance)
}
