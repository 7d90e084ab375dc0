//! ReAct-style tool traces: prompt scaffold, transcript grammar, loss masks.
//!
//! A transcript is a sequence of `Label: payload` lines. Payloads may span
//! several lines; a line is a label line only if it starts with one of the
//! six labels followed by a colon. Rendering writes exactly one space after
//! the colon and parsing strips at most one, so payloads round-trip.

mod mask;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use mask::{compute_loss_mask, mask_oracle_sum, MaskPolicy, MaskedSample, DEFAULT_MAX_LENGTH};

pub const FINAL_THOUGHT: &str = "I now know the final answer";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    Question,
    Thought,
    Action,
    ActionInput,
    Observation,
    FinalAnswer,
}

impl Label {
    pub const ALL: [Label; 6] = [
        Label::Question,
        Label::Thought,
        Label::ActionInput,
        Label::Action,
        Label::Observation,
        Label::FinalAnswer,
    ];

    pub fn text(self) -> &'static str {
        match self {
            Label::Question => "Question:",
            Label::Thought => "Thought:",
            Label::Action => "Action:",
            Label::ActionInput => "Action Input:",
            Label::Observation => "Observation:",
            Label::FinalAnswer => "Final Answer:",
        }
    }

    fn strip(line: &str) -> Option<(Label, &str)> {
        Label::ALL.iter().find_map(|&l| {
            line.strip_prefix(l.text())
                .map(|rest| (l, rest.strip_prefix(' ').unwrap_or(rest)))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolDescriptor {
    pub name: String,
    pub description: String,
    #[serde(default)]
    pub input_schema_note: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceStep {
    pub thought: String,
    pub action: String,
    pub action_input: String,
    pub observation: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolTrace {
    #[serde(default)]
    pub question: String,
    #[serde(default)]
    pub steps: Vec<TraceStep>,
    #[serde(default)]
    pub final_thought: String,
    pub final_answer: String,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TraceError {
    #[error("prompt needs at least one tool")]
    NoTools,
    #[error("duplicate tool name {0}")]
    DuplicateTool(String),
    #[error("invalid tool name {0:?}")]
    BadToolName(String),
    #[error("trace has no Final Answer")]
    IncompleteTrace,
    #[error("line {line}: expected {expected}, found {found:?}")]
    Grammar {
        line: usize,
        expected: String,
        found: String,
    },
    #[error("{field} contains the label {label:?}")]
    LabelInPayload { field: String, label: String },
    #[error("final answer is empty")]
    EmptyFinalAnswer,
    #[error("step {step} uses undeclared tool {action}")]
    UndeclaredTool { step: usize, action: String },
}

const SCAFFOLD_HEAD: &str = "Answer the following questions as best you can. In this level, you are calling the tools in natural language format, since the tools are actually an intelligent agent like you, but they expert only in one area. Several things to remember.

(1) Remember to follow the format of passing natural language as the Action Input.
(2) DO NOT use your imagination, only use concrete information given by the tools.
(3) If the observation contains images or urls which has useful information, YOU MUST INCLUDE ALL USEFUL IMAGES and links in your Answer and Final Answers using format ![img](url). BUT DO NOT provide any imaginary links.
(4) The information in your Final Answer should include ALL the information returned by the tools.
(5) If a user's query is a language other than English, please translate it to English without tools, and translate it back to the source language in Final Answer. You have access to the following tools (Only use these tools we provide you):";

const FORMAT_BLOCK: &str = "Use the following format:

Question: the input question you must answer
Thought: you should always think about what to do
Action: the action to take, should be one of [{tools}]
Action Input: the input to the action
Observation: the result of the action
... (this Thought/Action/Action Input/Observation can repeat N times)
Thought: I now know the final answer
Final Answer: the final answer to the original input question";

fn tool_line(t: &ToolDescriptor) -> String {
    let mut line = format!("{}: {}", t.name, t.description);
    if !t.input_schema_note.is_empty() {
        line.push(' ');
        line.push_str(&t.input_schema_note);
    }
    line
}

pub fn render_tool_prompt(tools: &[ToolDescriptor], question: &str) -> Result<String, TraceError> {
    if tools.is_empty() {
        return Err(TraceError::NoTools);
    }
    let mut names: Vec<&str> = Vec::new();
    for t in tools {
        let bad = t.name.trim().is_empty() || t.name.contains(['\n', '\r', ',', '[', ']']) || t.name.trim() != t.name;
        if bad {
            return Err(TraceError::BadToolName(t.name.clone()));
        }
        if names.contains(&t.name.as_str()) {
            return Err(TraceError::DuplicateTool(t.name.clone()));
        }
        names.push(&t.name);
    }
    let tool_lines: Vec<String> = tools.iter().map(tool_line).collect();
    Ok(format!(
        "{SCAFFOLD_HEAD}\n{}\n\n{}\n\nQuestion: {question}\nThought:",
        tool_lines.join("\n"),
        FORMAT_BLOCK.replace("{tools}", &names.join(", "))
    ))
}

/// Role of a rendered byte range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SegmentKind {
    Label,
    Question,
    Thought,
    Action,
    ActionInput,
    Observation,
    FinalThought,
    FinalAnswer,
}

impl SegmentKind {
    /// Payloads that receive loss.
    pub fn is_trained(self) -> bool {
        matches!(
            self,
            SegmentKind::Thought
                | SegmentKind::Action
                | SegmentKind::ActionInput
                | SegmentKind::FinalThought
                | SegmentKind::FinalAnswer
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub kind: SegmentKind,
    /// Kind of the payload a label introduces; equals `kind` for payloads.
    pub field: SegmentKind,
    pub start: usize,
    pub end: usize,
}

/// Rendered transcript plus the byte range of every label and payload.
pub fn render_with_segments(trace: &ToolTrace, include_question: bool) -> (String, Vec<Segment>) {
    let mut text = String::new();
    let mut segs = Vec::new();
    let mut line = |label: Label, field: SegmentKind, payload: &str| {
        if !text.is_empty() {
            text.push('\n');
        }
        let ls = text.len();
        text.push_str(label.text());
        segs.push(Segment {
            kind: SegmentKind::Label,
            field,
            start: ls,
            end: text.len(),
        });
        text.push(' ');
        let ps = text.len();
        text.push_str(payload);
        segs.push(Segment {
            kind: field,
            field,
            start: ps,
            end: text.len(),
        });
    };
    if include_question && !trace.question.is_empty() {
        line(Label::Question, SegmentKind::Question, &trace.question);
    }
    for s in &trace.steps {
        line(Label::Thought, SegmentKind::Thought, &s.thought);
        line(Label::Action, SegmentKind::Action, &s.action);
        line(Label::ActionInput, SegmentKind::ActionInput, &s.action_input);
        line(Label::Observation, SegmentKind::Observation, &s.observation);
    }
    if !trace.final_thought.is_empty() {
        line(Label::Thought, SegmentKind::FinalThought, &trace.final_thought);
    }
    line(Label::FinalAnswer, SegmentKind::FinalAnswer, &trace.final_answer);
    (text, segs)
}

pub fn render_trace(trace: &ToolTrace) -> String {
    render_with_segments(trace, true).0
}

/// Checks payloads for label literals and, when `tools` is given, that every
/// action names a declared tool.
pub fn validate_trace(trace: &ToolTrace, tools: Option<&[ToolDescriptor]>) -> Result<(), TraceError> {
    if trace.final_answer.trim().is_empty() {
        return Err(TraceError::EmptyFinalAnswer);
    }
    let mut fields: Vec<(String, &str)> = vec![
        ("question".into(), &trace.question),
        ("final thought".into(), &trace.final_thought),
        ("final answer".into(), &trace.final_answer),
    ];
    for (i, s) in trace.steps.iter().enumerate() {
        fields.push((format!("step {i} thought"), &s.thought));
        fields.push((format!("step {i} action"), &s.action));
        fields.push((format!("step {i} action input"), &s.action_input));
        fields.push((format!("step {i} observation"), &s.observation));
    }
    for (field, value) in fields {
        if let Some(l) = Label::ALL.iter().find(|l| value.contains(l.text())) {
            return Err(TraceError::LabelInPayload {
                field,
                label: l.text().to_string(),
            });
        }
    }
    if let Some(tools) = tools {
        for (i, s) in trace.steps.iter().enumerate() {
            if !tools.iter().any(|t| t.name == s.action) {
                return Err(TraceError::UndeclaredTool {
                    step: i,
                    action: s.action.clone(),
                });
            }
        }
    }
    Ok(())
}

struct LabelLine {
    label: Label,
    line: usize,
    payload: String,
}

fn label_lines(text: &str) -> Result<Vec<LabelLine>, TraceError> {
    let mut out: Vec<LabelLine> = Vec::new();
    for (i, raw) in text.split('\n').enumerate() {
        match Label::strip(raw) {
            Some((label, payload)) => out.push(LabelLine {
                label,
                line: i + 1,
                payload: payload.to_string(),
            }),
            None => match out.last_mut() {
                Some(prev) => {
                    prev.payload.push('\n');
                    prev.payload.push_str(raw);
                }
                None if raw.trim().is_empty() => {}
                None => {
                    return Err(TraceError::Grammar {
                        line: i + 1,
                        expected: "a label line".into(),
                        found: raw.to_string(),
                    })
                }
            },
        }
    }
    Ok(out)
}

fn grammar(l: &LabelLine, expected: &str) -> TraceError {
    TraceError::Grammar {
        line: l.line,
        expected: expected.to_string(),
        found: l.label.text().to_string(),
    }
}

/// Strict inverse of [`render_trace`].
pub fn parse_trace(text: &str) -> Result<ToolTrace, TraceError> {
    let lines = label_lines(text)?;
    let mut it = lines.into_iter().peekable();
    let mut trace = ToolTrace {
        question: String::new(),
        steps: Vec::new(),
        final_thought: String::new(),
        final_answer: String::new(),
    };
    if let Some(l) = it.next_if(|l| l.label == Label::Question) {
        trace.question = l.payload;
    }
    loop {
        let Some(l) = it.next() else {
            return Err(TraceError::IncompleteTrace);
        };
        match l.label {
            Label::FinalAnswer => {
                trace.final_answer = l.payload;
                break;
            }
            Label::Thought => match it.peek().map(|n| n.label) {
                Some(Label::Action) => {
                    let action = it.next().unwrap();
                    let input = it.next().ok_or(TraceError::IncompleteTrace)?;
                    if input.label != Label::ActionInput {
                        return Err(grammar(&input, "Action Input:"));
                    }
                    let obs = it.next().ok_or(TraceError::IncompleteTrace)?;
                    if obs.label != Label::Observation {
                        return Err(grammar(&obs, "Observation:"));
                    }
                    trace.steps.push(TraceStep {
                        thought: l.payload,
                        action: action.payload,
                        action_input: input.payload,
                        observation: obs.payload,
                    });
                }
                Some(Label::FinalAnswer) => {
                    trace.final_thought = l.payload;
                }
                Some(_) => return Err(grammar(it.peek().unwrap(), "Action: or Final Answer:")),
                None => return Err(TraceError::IncompleteTrace),
            },
            _ => return Err(grammar(&l, "Thought: or Final Answer:")),
        }
    }
    if let Some(extra) = it.next() {
        return Err(grammar(&extra, "end of trace"));
    }
    Ok(trace)
}

/// A transcript that may stop before the final answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartialTrace {
    pub question: String,
    pub steps: Vec<TraceStep>,
    pub final_thought: String,
    pub final_answer: Option<String>,
}

fn unquote(s: &str) -> String {
    let t = s.trim();
    t.strip_prefix('"')
        .and_then(|x| x.strip_suffix('"'))
        .unwrap_or(t)
        .to_string()
}

/// Lenient reader for hand-written transcripts: payloads are trimmed and
/// unquoted, and a trace may end after any line. Steps may lack their
/// observation.
pub fn parse_partial_trace(text: &str) -> Result<PartialTrace, TraceError> {
    let mut out = PartialTrace {
        question: String::new(),
        steps: Vec::new(),
        final_thought: String::new(),
        final_answer: None,
    };
    let mut pending_thought: Option<String> = None;
    for l in label_lines(text)? {
        let p = unquote(&l.payload);
        match l.label {
            Label::Question if out.steps.is_empty() && pending_thought.is_none() => out.question = p,
            Label::Thought => {
                if let Some(t) = pending_thought.replace(p) {
                    out.final_thought = t;
                }
            }
            Label::Action => out.steps.push(TraceStep {
                thought: pending_thought.take().unwrap_or_default(),
                action: p,
                action_input: String::new(),
                observation: String::new(),
            }),
            Label::ActionInput if !out.steps.is_empty() => out.steps.last_mut().unwrap().action_input = p,
            Label::Observation if !out.steps.is_empty() => out.steps.last_mut().unwrap().observation = p,
            Label::FinalAnswer => {
                if let Some(t) = pending_thought.take() {
                    out.final_thought = t;
                }
                out.final_answer = Some(p);
            }
            _ => return Err(grammar(&l, "a label in trace order")),
        }
    }
    if let Some(t) = pending_thought {
        out.final_thought = t;
    }
    Ok(out)
}
