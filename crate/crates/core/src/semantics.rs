//! Policy-level trace semantics.
//!
//! Abstract events carry a timestamp, the datum they touch and one of the
//! thirteen event shapes. The abstract state maps each datum to an entry
//! `(t, v, actby, π, H_has)`; a datum with no entry is undefined. Events are
//! applied one at a time and traces are left folds from the all-undefined
//! initial state.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::model::{
    ActBy, ActionId, ActionKind, ActivitySets, DataId, DataRef, Datum, Policy, PolicyModel,
    Principal, Purpose, Time, UserId, UserSet,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventKind {
    Own {
        or: Principal,
        value: Option<String>,
    },
    Store,
    Use {
        purposes: BTreeSet<Purpose>,
    },
    DeleteReq {
        or: Principal,
    },
    Delete,
    GroupAct {
        or: Principal,
        tar: Principal,
        action: ActionId,
    },
    UngroupAct {
        or: Principal,
        tar: Principal,
        action: ActionId,
    },
    GroupHas {
        or: Principal,
        tar: Principal,
    },
    UngroupHas {
        or: Principal,
        tar: Principal,
    },
    Act1 {
        or: Principal,
        action: ActionId,
    },
    UnAct1 {
        or: Principal,
        action: ActionId,
    },
    Act2 {
        or: Principal,
        tar: Principal,
        action: ActionId,
    },
    UnAct2 {
        or: Principal,
        tar: Principal,
        action: ActionId,
    },
}

impl EventKind {
    /// Surface name of the event: `own`, `grouplike`, `tag`, ...
    pub fn name(&self) -> String {
        match self {
            EventKind::Own { .. } => "own".into(),
            EventKind::Store => "store".into(),
            EventKind::Use { .. } => "use".into(),
            EventKind::DeleteReq { .. } => "deletereq".into(),
            EventKind::Delete => "delete".into(),
            EventKind::GroupAct { action, .. } => format!("group{action}"),
            EventKind::UngroupAct { action, .. } => format!("ungroup{action}"),
            EventKind::GroupHas { .. } => "grouphas".into(),
            EventKind::UngroupHas { .. } => "ungrouphas".into(),
            EventKind::Act1 { action, .. }
            | EventKind::UnAct1 { action, .. }
            | EventKind::Act2 { action, .. }
            | EventKind::UnAct2 { action, .. } => action.to_string(),
        }
    }

    pub fn performer(&self) -> Option<&Principal> {
        match self {
            EventKind::Own { or, .. }
            | EventKind::DeleteReq { or }
            | EventKind::GroupAct { or, .. }
            | EventKind::UngroupAct { or, .. }
            | EventKind::GroupHas { or, .. }
            | EventKind::UngroupHas { or, .. }
            | EventKind::Act1 { or, .. }
            | EventKind::UnAct1 { or, .. }
            | EventKind::Act2 { or, .. }
            | EventKind::UnAct2 { or, .. } => Some(or),
            EventKind::Store | EventKind::Use { .. } | EventKind::Delete => None,
        }
    }

    pub fn target(&self) -> Option<&Principal> {
        match self {
            EventKind::GroupAct { tar, .. }
            | EventKind::UngroupAct { tar, .. }
            | EventKind::GroupHas { tar, .. }
            | EventKind::UngroupHas { tar, .. }
            | EventKind::Act2 { tar, .. }
            | EventKind::UnAct2 { tar, .. } => Some(tar),
            _ => None,
        }
    }

    pub fn principals(&self) -> impl Iterator<Item = &Principal> {
        self.performer().into_iter().chain(self.target())
    }

    pub fn is_group_family(&self) -> bool {
        matches!(
            self,
            EventKind::GroupAct { .. }
                | EventKind::UngroupAct { .. }
                | EventKind::GroupHas { .. }
                | EventKind::UngroupHas { .. }
        )
    }

    /// True when any principal position holds an index variable.
    pub fn is_template(&self) -> bool {
        self.principals().any(Principal::is_var)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AbstractEvent {
    pub time: Time,
    pub datum: DataId,
    pub kind: EventKind,
    /// Name of the alias call this event was expanded from, if any.
    pub via: Option<String>,
}

impl AbstractEvent {
    pub fn new(time: Time, datum: impl Into<DataId>, kind: EventKind) -> Self {
        Self {
            time,
            datum: datum.into(),
            kind,
            via: None,
        }
    }
}

/// One event template as produced by [`possible_events`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventTemplate {
    pub datum: DataId,
    pub kind: EventKind,
}

impl EventTemplate {
    /// The template as an event at time `t`, principals left as variables.
    pub fn at(&self, t: Time) -> AbstractEvent {
        AbstractEvent::new(t, self.datum.clone(), self.kind.clone())
    }
}

impl fmt::Display for EventTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let dt = &self.datum;
        match &self.kind {
            EventKind::Own { .. } => write!(f, "(own, t, or, {dt}, π)"),
            EventKind::Store => write!(f, "(store, t, {dt}, π)"),
            EventKind::Use { .. } => write!(f, "(use, t, {dt}, purposes)"),
            EventKind::DeleteReq { .. } => write!(f, "(deletereq, t, or, {dt}, π)"),
            EventKind::Delete => write!(f, "(delete, t, {dt})"),
            EventKind::GroupAct { action, .. } | EventKind::UngroupAct { action, .. } => write!(
                f,
                "({}, t, or, tar, {dt}, π.acp.G^can_{action})",
                self.kind.name()
            ),
            EventKind::GroupHas { .. } | EventKind::UngroupHas { .. } => write!(
                f,
                "({}, t, or, tar, {dt}, π.has.G^group_has)",
                self.kind.name()
            ),
            EventKind::Act1 { action, .. } | EventKind::UnAct1 { action, .. } => {
                write!(f, "({action}, t, or, {dt}, π)")
            }
            EventKind::Act2 { action, .. } | EventKind::UnAct2 { action, .. } => {
                write!(f, "({action}, t, or, tar, {dt}, π)")
            }
        }
    }
}

/// All event shapes possible for one datum: own, store, use, deletereq,
/// delete; a group/ungroup pair per positive action; grouphas/ungrouphas;
/// then one template per action of A1, UA1, A2 and UA2, in that order.
pub fn possible_events(sets: &ActivitySets, dt: &DataRef, policy: &Policy) -> Vec<EventTemplate> {
    let or = || Principal::Var("or".into());
    let tar = || Principal::Var("tar".into());
    let mut kinds = vec![
        EventKind::Own {
            or: or(),
            value: None,
        },
        EventKind::Store,
        EventKind::Use {
            purposes: policy.purposes.clone(),
        },
        EventKind::DeleteReq { or: or() },
        EventKind::Delete,
    ];
    for action in sets.positive() {
        kinds.push(EventKind::GroupAct {
            or: or(),
            tar: tar(),
            action: action.clone(),
        });
        kinds.push(EventKind::UngroupAct {
            or: or(),
            tar: tar(),
            action: action.clone(),
        });
    }
    kinds.push(EventKind::GroupHas {
        or: or(),
        tar: tar(),
    });
    kinds.push(EventKind::UngroupHas {
        or: or(),
        tar: tar(),
    });
    for a in &sets.a1 {
        kinds.push(EventKind::Act1 {
            or: or(),
            action: a.clone(),
        });
    }
    for a in &sets.ua1 {
        kinds.push(EventKind::UnAct1 {
            or: or(),
            action: a.clone(),
        });
    }
    for a in &sets.a2 {
        kinds.push(EventKind::Act2 {
            or: or(),
            tar: tar(),
            action: a.clone(),
        });
    }
    for a in &sets.ua2 {
        kinds.push(EventKind::UnAct2 {
            or: or(),
            tar: tar(),
            action: a.clone(),
        });
    }
    kinds
        .into_iter()
        .map(|kind| EventTemplate {
            datum: dt.id.clone(),
            kind,
        })
        .collect()
}

/// The per-datum entry `(t, v, actby, π, H_has)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateEntry {
    pub t: Time,
    pub v: Option<String>,
    pub actby: ActBy,
    pub policy: Policy,
    pub h_has: UserSet,
}

/// Σ: data without an entry are undefined.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AbstractState {
    entries: BTreeMap<DataId, Arc<StateEntry>>,
}

impl AbstractState {
    /// Σ0, every datum undefined.
    pub fn initial() -> Self {
        Self::default()
    }

    pub fn entry(&self, id: &DataId) -> Option<&StateEntry> {
        self.entries.get(id).map(|e| e.as_ref())
    }

    pub fn is_defined(&self, id: &DataId) -> bool {
        self.entries.contains_key(id)
    }

    pub fn defined(&self) -> impl Iterator<Item = (&DataId, &StateEntry)> {
        self.entries.iter().map(|(k, v)| (k, v.as_ref()))
    }

    pub fn set(&mut self, id: DataId, entry: StateEntry) {
        self.entries.insert(id, Arc::new(entry));
    }

    pub fn undefine(&mut self, id: &DataId) {
        self.entries.remove(id);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SemanticsError {
    #[error("unknown datum {0}")]
    UnknownDatum(DataId),
    #[error("{event} on undefined datum {datum}")]
    UndefinedEntry { datum: DataId, event: String },
    #[error("datum {0} is already owned")]
    DuplicateOwn(DataId),
    #[error("own of {datum} by {by}, but its owner is {owner}")]
    NotOwner {
        datum: DataId,
        by: UserId,
        owner: UserId,
    },
    #[error("deletereq on {0}, whose deletion policy has no manual mode")]
    NoManualDeletion(DataId),
    #[error("event {0} is a template (index variable in principal position)")]
    Template(String),
    #[error("action {0} is not declared with this shape")]
    BadAction(ActionId),
    #[error("event {index}: {source}")]
    AtIndex {
        index: usize,
        #[source]
        source: Box<SemanticsError>,
    },
}

/// Whether an event's `or ∈ G^can` guard applied and how it resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Guard {
    None,
    Passed,
    Failed,
}

/// What one application of the transition did, beyond the new state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepInfo {
    pub guard: Guard,
    /// Users the event's rule adds to (or, for revoke shapes, removes from)
    /// `H_has`, whether or not they were already present.
    pub granted: UserSet,
}

impl StepInfo {
    fn plain() -> Self {
        Self {
            guard: Guard::None,
            granted: UserSet::new(),
        }
    }
}

fn concrete(p: &Principal, e: &AbstractEvent) -> Result<UserId, SemanticsError> {
    p.as_user()
        .cloned()
        .ok_or_else(|| SemanticsError::Template(e.kind.name()))
}

fn check_kind(
    sets: &ActivitySets,
    action: &ActionId,
    want: ActionKind,
) -> Result<(), SemanticsError> {
    if sets.kind_of(action) == Some(want) {
        Ok(())
    } else {
        Err(SemanticsError::BadAction(action.clone()))
    }
}

/// The positive action a revoke event refers to for its `S^by`/`G^by_has`
/// bookkeeping.
fn paired(sets: &ActivitySets, unact: &ActionId) -> Result<ActionId, SemanticsError> {
    sets.revoked(unact)
        .cloned()
        .ok_or_else(|| SemanticsError::BadAction(unact.clone()))
}

/// Applies one event; `j` is the event's 1-based position and has no effect.
pub fn apply_event(
    model: &PolicyModel,
    state: &AbstractState,
    event: &AbstractEvent,
    j: usize,
) -> Result<AbstractState, SemanticsError> {
    apply_event_traced(model, state, event, j).map(|(s, _)| s)
}

/// As [`apply_event`], also reporting the guard outcome and granted users.
pub fn apply_event_traced(
    model: &PolicyModel,
    state: &AbstractState,
    event: &AbstractEvent,
    _j: usize,
) -> Result<(AbstractState, StepInfo), SemanticsError> {
    let datum: &Datum = model
        .datum(&event.datum)
        .ok_or_else(|| SemanticsError::UnknownDatum(event.datum.clone()))?;
    let id = &event.datum;
    let sets = &model.sets;
    let mut next = state.clone();
    let mut info = StepInfo::plain();

    if let EventKind::Own { or, value } = &event.kind {
        let or = concrete(or, event)?;
        if state.is_defined(id) {
            return Err(SemanticsError::DuplicateOwn(id.clone()));
        }
        if or != datum.data.ow {
            return Err(SemanticsError::NotOwner {
                datum: id.clone(),
                by: or,
                owner: datum.data.ow.clone(),
            });
        }
        info.granted.insert(or.clone());
        next.set(
            id.clone(),
            StateEntry {
                t: event.time,
                v: value.clone(),
                actby: ActBy::default(),
                policy: datum.policy.clone(),
                h_has: [or].into(),
            },
        );
        return Ok((next, info));
    }

    let entry = state
        .entry(id)
        .ok_or_else(|| SemanticsError::UndefinedEntry {
            datum: id.clone(),
            event: event.kind.name(),
        })?;
    let mut e = entry.clone();
    e.t = event.time;

    match &event.kind {
        EventKind::Own { .. } => unreachable!("handled above"),
        EventKind::Store => {
            if e.policy.storage.sp_can_read() {
                e.h_has.insert(UserId::sp());
                info.granted.insert(UserId::sp());
            } else {
                return Ok((next, info));
            }
        }
        EventKind::Use { .. } => return Ok((next, info)),
        EventKind::DeleteReq { or } => {
            concrete(or, event)?;
            if e.policy.deletion.manual_delay().is_none() {
                return Err(SemanticsError::NoManualDeletion(id.clone()));
            }
            return Ok((next, info));
        }
        EventKind::Delete => {
            next.undefine(id);
            return Ok((next, info));
        }
        EventKind::GroupAct { or, tar, action } | EventKind::UngroupAct { or, tar, action } => {
            concrete(or, event)?;
            let tar = concrete(tar, event)?;
            if !matches!(
                sets.kind_of(action),
                Some(k) if k != ActionKind::Predefined
            ) {
                return Err(SemanticsError::BadAction(action.clone()));
            }
            let group = e.policy.acp.can.entry(action.clone()).or_default();
            if matches!(event.kind, EventKind::GroupAct { .. }) {
                group.insert(tar.clone());
                e.h_has.insert(tar.clone());
            } else {
                group.remove(&tar);
                e.h_has.remove(&tar);
            }
            info.granted.insert(tar);
        }
        EventKind::GroupHas { or, tar } | EventKind::UngroupHas { or, tar } => {
            concrete(or, event)?;
            let tar = concrete(tar, event)?;
            if matches!(event.kind, EventKind::GroupHas { .. }) {
                e.policy.has.group.insert(tar.clone());
                e.h_has.insert(tar.clone());
            } else {
                e.policy.has.group.remove(&tar);
                e.h_has.remove(&tar);
            }
            info.granted.insert(tar);
        }
        EventKind::Act1 { or, action } => {
            check_kind(sets, action, ActionKind::Unary)?;
            let or = concrete(or, event)?;
            if !e.policy.acp.allows(action, &or) {
                info.guard = Guard::Failed;
                return Ok((next, info));
            }
            info.guard = Guard::Passed;
            let gained = e.policy.has.by(action, &or);
            e.actby.by.entry(action.clone()).or_default().insert(or);
            e.h_has.extend(gained.iter().cloned());
            info.granted = gained;
        }
        EventKind::UnAct1 { or, action } => {
            check_kind(sets, action, ActionKind::UnaryRevoke)?;
            let or = concrete(or, event)?;
            let act = paired(sets, action)?;
            if !e.policy.acp.allows(action, &or) {
                info.guard = Guard::Failed;
                return Ok((next, info));
            }
            info.guard = Guard::Passed;
            let lost = e.policy.has.by(&act, &or);
            e.actby.by.entry(act).or_default().remove(&or);
            e.h_has.retain(|u| !lost.contains(u));
            info.granted = lost;
        }
        EventKind::Act2 { or, tar, action } => {
            check_kind(sets, action, ActionKind::Binary)?;
            let or = concrete(or, event)?;
            let tar = concrete(tar, event)?;
            if !e.policy.acp.allows(action, &or) {
                info.guard = Guard::Failed;
                return Ok((next, info));
            }
            info.guard = Guard::Passed;
            let gained: UserSet = e
                .policy
                .has
                .by(action, &or)
                .intersection(&e.policy.has.been(action, &tar))
                .cloned()
                .collect();
            e.actby.by.entry(action.clone()).or_default().insert(or);
            e.actby.been.entry(action.clone()).or_default().insert(tar);
            e.h_has.extend(gained.iter().cloned());
            info.granted = gained;
        }
        EventKind::UnAct2 { or, tar, action } => {
            check_kind(sets, action, ActionKind::BinaryRevoke)?;
            let or = concrete(or, event)?;
            let tar = concrete(tar, event)?;
            let act = paired(sets, action)?;
            if !e.policy.acp.allows(action, &or) {
                info.guard = Guard::Failed;
                return Ok((next, info));
            }
            info.guard = Guard::Passed;
            let lost: UserSet = e
                .policy
                .has
                .by(&act, &or)
                .intersection(&e.policy.has.been(&act, &tar))
                .cloned()
                .collect();
            e.actby.by.entry(act.clone()).or_default().remove(&or);
            e.actby.been.entry(act).or_default().remove(&tar);
            e.h_has.retain(|u| !lost.contains(u));
            info.granted = lost;
        }
    }
    next.set(id.clone(), e);
    Ok((next, info))
}

/// A fully executed trace: `states[i]` is the state after the first `i`
/// events and `steps[i]` describes event `i + 1`.
#[derive(Debug, Clone)]
pub struct Execution {
    pub states: Vec<AbstractState>,
    pub steps: Vec<StepInfo>,
}

impl Execution {
    pub fn final_state(&self) -> &AbstractState {
        self.states
            .last()
            .expect("execution always holds the initial state")
    }
}

/// Runs every event, keeping all intermediate states.
pub fn execute(model: &PolicyModel, trace: &[AbstractEvent]) -> Result<Execution, SemanticsError> {
    let mut states = Vec::with_capacity(trace.len() + 1);
    let mut steps = Vec::with_capacity(trace.len());
    states.push(AbstractState::initial());
    for (k, event) in trace.iter().enumerate() {
        let (next, info) = apply_event_traced(model, &states[k], event, k + 1).map_err(|e| {
            SemanticsError::AtIndex {
                index: k + 1,
                source: Box::new(e),
            }
        })?;
        states.push(next);
        steps.push(info);
    }
    Ok(Execution { states, steps })
}

/// F_A from Σ0.
pub fn run_trace(
    model: &PolicyModel,
    trace: &[AbstractEvent],
) -> Result<AbstractState, SemanticsError> {
    let mut state = AbstractState::initial();
    for (k, event) in trace.iter().enumerate() {
        state = apply_event(model, &state, event, k + 1).map_err(|e| SemanticsError::AtIndex {
            index: k + 1,
            source: Box::new(e),
        })?;
    }
    Ok(state)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StateAtError {
    #[error("prefix length {index} exceeds trace length {len}")]
    OutOfRange { index: usize, len: usize },
    #[error(transparent)]
    Semantics(#[from] SemanticsError),
}

/// State_A(τ, i): the state after the prefix of length `i`.
pub fn state_at(
    model: &PolicyModel,
    trace: &[AbstractEvent],
    i: usize,
) -> Result<AbstractState, StateAtError> {
    if i > trace.len() {
        return Err(StateAtError::OutOfRange {
            index: i,
            len: trace.len(),
        });
    }
    Ok(run_trace(model, &trace[..i])?)
}
