//! User states, the global state and the event semantics over them.

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use super::event::{ArchEvent, ArchEventKind};
use super::{
    have_act1_set, have_act2_set, ActForm, Architecture, GroupKind, PermKey, Term, Value, Variable,
};
use crate::model::{ActionId, Polarity, Time, UserId, UserSet};

/// A user's permission state: each group `G(grantor = owner of the state,
/// key, X)` with its members.
pub type PermState = BTreeMap<(PermKey, Variable), UserSet>;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum UserState {
    Active {
        /// Bound terms; an absent term is ⊥.
        vars: BTreeMap<Term, Value>,
        perms: Arc<PermState>,
        time: Time,
    },
    /// The user's trace hit an error and terminated.
    Failed,
}

impl UserState {
    pub fn initial(perms: PermState) -> Self {
        UserState::Active {
            vars: BTreeMap::new(),
            perms: Arc::new(perms),
            time: 0,
        }
    }

    pub fn is_failed(&self) -> bool {
        matches!(self, UserState::Failed)
    }

    pub fn value(&self, term: &Term) -> Option<&Value> {
        match self {
            UserState::Active { vars, .. } => vars.get(term),
            UserState::Failed => None,
        }
    }

    pub fn time(&self) -> Option<Time> {
        match self {
            UserState::Active { time, .. } => Some(*time),
            UserState::Failed => None,
        }
    }

    pub fn perms(&self) -> Option<&PermState> {
        match self {
            UserState::Active { perms, .. } => Some(perms),
            UserState::Failed => None,
        }
    }

    /// Members of one of the user's permission groups (empty when ⊥).
    pub fn group(&self, key: &PermKey, x: &Variable) -> UserSet {
        self.perms()
            .and_then(|p| p.get(&(key.clone(), x.clone())))
            .cloned()
            .unwrap_or_default()
    }
}

/// Who performed / was the target of each action on a variable (`Z^by`,
/// `Z^been`).
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Record {
    pub by: BTreeMap<ActionId, UserSet>,
    pub been: BTreeMap<ActionId, UserSet>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GlobalState {
    pub users: BTreeMap<UserId, UserState>,
    pub records: BTreeMap<Variable, Record>,
}

impl GlobalState {
    /// `Init^PA` over the architecture's users, `sp` and `extra`, with each
    /// permission state seeded from the declared tables.
    pub fn init(pa: &Architecture, extra: impl IntoIterator<Item = UserId>) -> Self {
        let mut all = pa.users();
        all.insert(UserId::sp());
        all.extend(extra);
        let users = all
            .into_iter()
            .map(|u| {
                let st = UserState::initial(pa.initial_permissions(&u));
                (u, st)
            })
            .collect();
        Self {
            users,
            records: BTreeMap::new(),
        }
    }

    pub fn user(&self, u: &UserId) -> Option<&UserState> {
        self.users.get(u)
    }

    pub fn value(&self, u: &UserId, term: &Term) -> Option<&Value> {
        self.user(u).and_then(|s| s.value(term))
    }

    fn perms_of(&self, u: &UserId) -> Option<&PermState> {
        self.user(u).and_then(UserState::perms)
    }

    fn active_mut(
        &mut self,
        u: &UserId,
    ) -> Option<(&mut BTreeMap<Term, Value>, &mut Arc<PermState>, &mut Time)> {
        match self.users.get_mut(u) {
            Some(UserState::Active { vars, perms, time }) => Some((vars, perms, time)),
            _ => None,
        }
    }

    fn bind(&mut self, u: &UserId, term: Term, value: Option<Value>, t: Time) {
        if let Some((vars, _, time)) = self.active_mut(u) {
            match value {
                Some(v) => vars.insert(term, v),
                None => vars.remove(&term),
            };
            *time = t;
        }
    }

    fn edit_group(
        &mut self,
        u: &UserId,
        key: PermKey,
        x: &Variable,
        tar: &UserId,
        add: bool,
        t: Time,
    ) {
        if let Some((_, perms, time)) = self.active_mut(u) {
            let set = Arc::make_mut(perms).entry((key, x.clone())).or_default();
            if add {
                set.insert(tar.clone());
            } else {
                set.remove(tar);
            }
            *time = t;
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ArchError {
    #[error("user {0} has terminated and cannot take part in further events")]
    TerminatedUser(UserId),
    #[error("unknown alias {0}")]
    UnknownAlias(String),
    #[error("revoke action {0} has no paired action")]
    UnpairedRevoke(ActionId),
    #[error("time {time} does not follow {prev}")]
    NonMonotoneTime { prev: Time, time: Time },
    #[error("{user} is not the owner of {var}")]
    NotOwner { user: UserId, var: Variable },
    #[error("event {index}: {source}")]
    AtIndex {
        index: usize,
        #[source]
        source: Box<ArchError>,
    },
}

/// Outcome of an act/unact guard check.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ArchStep {
    /// `Some(false)` when the performer failed the guard and terminated.
    pub guard: Option<bool>,
    /// Users whose variable state the event rebound or unbound.
    pub receivers: UserSet,
}

/// `S_E`: one event's effect on the global state.
pub fn apply_arch_event(
    pa: &Architecture,
    sigma: &GlobalState,
    event: &ArchEvent,
) -> Result<GlobalState, ArchError> {
    apply_arch_event_traced(pa, sigma, event).map(|(s, _)| s)
}

pub fn apply_arch_event_traced(
    pa: &Architecture,
    sigma: &GlobalState,
    event: &ArchEvent,
) -> Result<(GlobalState, ArchStep), ArchError> {
    for u in event.involved() {
        if sigma.user(&u).is_some_and(UserState::is_failed) {
            return Err(ArchError::TerminatedUser(u));
        }
    }
    let mut next = sigma.clone();
    for u in event.involved() {
        next.users
            .entry(u.clone())
            .or_insert_with(|| UserState::initial(pa.initial_permissions(&u)));
    }
    let t = event.time;
    let mut step = ArchStep::default();
    match &event.kind {
        ArchEventKind::Own { by, term, value } => {
            next.bind(by, term.clone(), Some(value.clone()), t);
            step.receivers.insert(by.clone());
        }
        ArchEventKind::Possess { bound } => {
            next.bind(&UserId::sp(), bound.term(), Some(bound.value()), t);
            step.receivers.insert(UserId::sp());
        }
        ArchEventKind::Group {
            undo,
            kind,
            by,
            tar,
            var,
            value,
        } => {
            group_update(
                &mut next,
                &mut step,
                kind,
                !undo,
                by,
                tar,
                var,
                value.as_ref(),
                t,
            );
        }
        ArchEventKind::Alias {
            name,
            by,
            tar,
            var,
            value,
        } => {
            let alias = pa
                .aliases
                .get(name)
                .ok_or_else(|| ArchError::UnknownAlias(name.clone()))?;
            let add = alias.polarity == Polarity::Group;
            for a in &alias.actions {
                group_update(
                    &mut next,
                    &mut step,
                    &GroupKind::Act(a.clone()),
                    add,
                    by,
                    tar,
                    var,
                    None,
                    t,
                );
            }
            if alias.include_has {
                group_update(
                    &mut next,
                    &mut step,
                    &GroupKind::Has,
                    add,
                    by,
                    tar,
                    var,
                    value.as_ref(),
                    t,
                );
            }
        }
        ArchEventKind::DeleteReq { .. } => {}
        ArchEventKind::Delete { var, .. } => {
            let term = Term::Var(var.clone());
            let users: Vec<UserId> = next.users.keys().cloned().collect();
            for u in users {
                if !next.users[&u].is_failed() {
                    next.bind(&u, term.clone(), None, t);
                    step.receivers.insert(u);
                }
            }
        }
        ArchEventKind::Act {
            form,
            action,
            by,
            tar,
            var,
            value,
        } => {
            let allowed = next
                .user(&var.ow)
                .map(|o| o.group(&PermKey::Can(action.clone()), var))
                .unwrap_or_default()
                .contains(by);
            step.guard = Some(allowed);
            if !allowed {
                next.users.insert(by.clone(), UserState::Failed);
                return Ok((next, step));
            }
            let positive = if form.is_revoke() {
                pa.revokes
                    .get(action)
                    .cloned()
                    .ok_or_else(|| ArchError::UnpairedRevoke(action.clone()))?
            } else {
                action.clone()
            };
            let have = match (form, tar) {
                (ActForm::Act2 | ActForm::UnAct2, Some(tar)) => {
                    have_act2_set(by, tar, var, &positive, |u| next.perms_of(u))
                }
                _ => have_act1_set(by, var, &positive, |u| next.perms_of(u)),
            };
            let bound = (!form.is_revoke()).then(|| value.clone());
            for j in &have {
                if next.user(j).is_some_and(|s| !s.is_failed()) {
                    next.bind(j, Term::Var(var.clone()), bound.clone(), t);
                    step.receivers.insert(j.clone());
                }
            }
            let rec = next.records.entry(var.clone()).or_default();
            if form.is_revoke() {
                rec.by.entry(positive.clone()).or_default().remove(by);
                if let Some(tar) = tar {
                    rec.been.entry(positive).or_default().remove(tar);
                }
            } else {
                rec.by
                    .entry(positive.clone())
                    .or_default()
                    .insert(by.clone());
                if let Some(tar) = tar {
                    rec.been.entry(positive).or_default().insert(tar.clone());
                }
            }
        }
    }
    Ok((next, step))
}

#[allow(clippy::too_many_arguments)]
fn group_update(
    sigma: &mut GlobalState,
    step: &mut ArchStep,
    kind: &GroupKind,
    add: bool,
    by: &UserId,
    tar: &UserId,
    var: &Variable,
    value: Option<&Value>,
    t: Time,
) {
    let key = match kind {
        GroupKind::Act(a) => PermKey::Can(a.clone()),
        GroupKind::Has => PermKey::Group,
    };
    let before = sigma
        .user(by)
        .map(|s| s.group(&key, var))
        .unwrap_or_default();
    sigma.edit_group(by, key.clone(), var, tar, add, t);
    let Some(v) = value else { return };
    let members = if add {
        sigma
            .user(by)
            .map(|s| s.group(&key, var))
            .unwrap_or_default()
    } else {
        before
    };
    let bound = add.then(|| v.clone());
    for j in members {
        if sigma.user(&j).is_some_and(|s| !s.is_failed()) {
            sigma.bind(&j, Term::Var(var.clone()), bound.clone(), t);
            step.receivers.insert(j);
        }
    }
}

/// `S_T`: left fold of [`apply_arch_event`] from `init`.
pub fn run_arch_trace(
    pa: &Architecture,
    trace: &[ArchEvent],
    init: &GlobalState,
) -> Result<GlobalState, ArchError> {
    let mut sigma = init.clone();
    for (k, e) in trace.iter().enumerate() {
        sigma = apply_arch_event(pa, &sigma, e).map_err(|source| ArchError::AtIndex {
            index: k + 1,
            source: Box::new(source),
        })?;
    }
    Ok(sigma)
}

/// A consistent trace has strictly increasing times, own events only by the
/// variable's owner, and never involves a terminated user.
pub fn is_trace_consistent(pa: &Architecture, trace: &[ArchEvent]) -> Result<(), ArchError> {
    let at = |index: usize, source: ArchError| ArchError::AtIndex {
        index,
        source: Box::new(source),
    };
    let mut prev: Option<Time> = None;
    for (k, e) in trace.iter().enumerate() {
        if let Some(p) = prev {
            if e.time <= p {
                return Err(at(
                    k + 1,
                    ArchError::NonMonotoneTime {
                        prev: p,
                        time: e.time,
                    },
                ));
            }
        }
        prev = Some(e.time);
        if let ArchEventKind::Own {
            by,
            term: Term::Var(v),
            ..
        } = &e.kind
        {
            if *by != v.ow {
                return Err(at(
                    k + 1,
                    ArchError::NotOwner {
                        user: by.clone(),
                        var: v.clone(),
                    },
                ));
            }
        }
    }
    run_arch_trace(pa, trace, &GlobalState::init(pa, [])).map(|_| ())
}
