//! The fixed relation label set.
//!
//! Fourteen prototype nodes over four tasks. Node order follows the
//! dependency-matrix layout: coreference, temporal, causal, subevent, each
//! task starting with its `None` label.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Coreference,
    Temporal,
    Causal,
    Subevent,
}

impl Task {
    pub const ALL: [Task; 4] = [Task::Coreference, Task::Temporal, Task::Causal, Task::Subevent];

    /// Tasks whose relations are directional and scored with micro P/R/F1.
    pub const DIRECTIONAL: [Task; 3] = [Task::Temporal, Task::Causal, Task::Subevent];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Task::Coreference => "coreference",
            Task::Temporal => "temporal",
            Task::Causal => "causal",
            Task::Subevent => "subevent",
        }
    }

    /// Labels of this task in node order; the first is always `None`.
    pub fn labels(self) -> &'static [Label] {
        use Label::*;
        match self {
            Task::Coreference => &[NoneCoref, Coref],
            Task::Temporal => &[NoneTemporal, Before, Overlap, Contains, Simultaneous, EndsOn, BeginsOn],
            Task::Causal => &[NoneCausal, Precondition, Cause],
            Task::Subevent => &[NoneSubevent, Subevent],
        }
    }

    pub fn none(self) -> Label {
        self.labels()[0]
    }

    pub fn num_labels(self) -> usize {
        self.labels().len()
    }

    /// Parse a relation label name within this task (case-insensitive,
    /// `_`/`-` agnostic, `None`/`NONE` accepted).
    pub fn parse_label(self, s: &str) -> Result<Label, Error> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        self.labels()
            .iter()
            .copied()
            .find(|l| l.short_name().to_ascii_lowercase() == norm)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown {} label {s:?}", self.name())))
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "coreference" | "coref" => Ok(Task::Coreference),
            "temporal" => Ok(Task::Temporal),
            "causal" => Ok(Task::Causal),
            "subevent" => Ok(Task::Subevent),
            other => Err(Error::InvalidArgument(format!("unknown task {other:?}"))),
        }
    }
}

/// One of the fourteen prototype nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    NoneCoref,
    Coref,
    NoneTemporal,
    Before,
    Overlap,
    Contains,
    Simultaneous,
    EndsOn,
    BeginsOn,
    NoneCausal,
    Precondition,
    Cause,
    NoneSubevent,
    Subevent,
}

pub const NUM_LABELS: usize = 14;

impl Label {
    pub const ALL: [Label; NUM_LABELS] = [
        Label::NoneCoref,
        Label::Coref,
        Label::NoneTemporal,
        Label::Before,
        Label::Overlap,
        Label::Contains,
        Label::Simultaneous,
        Label::EndsOn,
        Label::BeginsOn,
        Label::NoneCausal,
        Label::Precondition,
        Label::Cause,
        Label::NoneSubevent,
        Label::Subevent,
    ];

    /// Row/column index in the dependency matrix and prototype bank.
    pub fn node(self) -> usize {
        self as usize
    }

    pub fn from_node(i: usize) -> Label {
        Label::ALL[i]
    }

    pub fn task(self) -> Task {
        use Label::*;
        match self {
            NoneCoref | Coref => Task::Coreference,
            NoneTemporal | Before | Overlap | Contains | Simultaneous | EndsOn | BeginsOn => Task::Temporal,
            NoneCausal | Precondition | Cause => Task::Causal,
            NoneSubevent | Subevent => Task::Subevent,
        }
    }

    pub fn is_none(self) -> bool {
        matches!(self, Label::NoneCoref | Label::NoneTemporal | Label::NoneCausal | Label::NoneSubevent)
    }

    /// Position of this label inside its task's label list.
    pub fn index_in_task(self) -> usize {
        self.node() - self.task().none().node()
    }

    /// Name without task qualification (`None` for every none label).
    pub fn short_name(self) -> &'static str {
        use Label::*;
        match self {
            NoneCoref | NoneTemporal | NoneCausal | NoneSubevent => "None",
            Coref => "Coref",
            Before => "Before",
            Overlap => "Overlap",
            Contains => "Contains",
            Simultaneous => "Simultaneous",
            EndsOn => "Ends-on",
            BeginsOn => "Begins-on",
            Precondition => "Precondition",
            Cause => "Cause",
            Subevent => "Subevent",
        }
    }

    /// Unique display name, e.g. `None(temporal)`.
    pub fn display_name(self) -> String {
        match self {
            Label::NoneCoref => "None(coref.)".to_string(),
            l if l.is_none() => format!("None({})", l.task().name()),
            l => l.short_name().to_string(),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.display_name())
    }
}

impl FromStr for Label {
    type Err = Error;

    /// Accepts display names (`None(causal)`) and unambiguous short names.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(l) = Label::ALL.iter().find(|l| l.display_name().eq_ignore_ascii_case(s.trim())) {
            return Ok(*l);
        }
        if let Some(inner) = s.trim().strip_prefix("None(").and_then(|r| r.strip_suffix(')')) {
            return inner.trim_end_matches('.').parse::<Task>().map(Task::none);
        }
        let hits: Vec<Label> = Task::ALL.iter().filter_map(|t| t.parse_label(s).ok()).collect();
        match hits.as_slice() {
            [one] => Ok(*one),
            [] => Err(Error::InvalidArgument(format!("unknown label {s:?}"))),
            _ => Err(Error::InvalidArgument(format!("ambiguous label {s:?}; qualify it, e.g. None(temporal)"))),
        }
    }
}

/// The four labels attached to one ordered pair, one per task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PairLabels {
    pub coreference: Label,
    pub temporal: Label,
    pub causal: Label,
    pub subevent: Label,
}

impl Default for PairLabels {
    fn default() -> Self {
        Self {
            coreference: Label::NoneCoref,
            temporal: Label::NoneTemporal,
            causal: Label::NoneCausal,
            subevent: Label::NoneSubevent,
        }
    }
}

impl PairLabels {
    pub fn get(&self, task: Task) -> Label {
        match task {
            Task::Coreference => self.coreference,
            Task::Temporal => self.temporal,
            Task::Causal => self.causal,
            Task::Subevent => self.subevent,
        }
    }

    pub fn set(&mut self, label: Label) {
        match label.task() {
            Task::Coreference => self.coreference = label,
            Task::Temporal => self.temporal = label,
            Task::Causal => self.causal = label,
            Task::Subevent => self.subevent = label,
        }
    }

    /// The four node ids in task order.
    pub fn nodes(&self) -> [usize; 4] {
        Task::ALL.map(|t| self.get(t).node())
    }

    pub fn is_all_none(&self) -> bool {
        Task::ALL.iter().all(|&t| self.get(t).is_none())
    }
}
