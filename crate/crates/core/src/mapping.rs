//! From policies to architectures: the datum/variable correspondence, the
//! storage and permission mappings, architecture extraction from events,
//! the policy/architecture correspondence check, and policy and
//! architecture comparison.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use similar::TextDiff;
use thiserror::Error;

use crate::arch::{
    is_consistent, ActForm, Activity, ArchEvent, ArchEventKind, Architecture, Grantor, GroupKind,
    PermKey, PermSlot, Term, Value, Variable,
};
use crate::compliance::{deletion_requests, holder_audit, sp_holdings};
use crate::dsl::{render_activity, serialize_architecture};
use crate::logic::{applicable_rules, HRule, LogicError};
use crate::model::{
    ActionId, ActivitySets, DataId, DataRef, DeletionMode, GroupAlias, Location, Polarity, Policy,
    PolicyModel, Principal, StorageForm, StorageSpec, TypeName, UserId, UserSet,
};
use crate::semantics::{execute, AbstractEvent, EventKind, SemanticsError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MappingError {
    #[error("unknown datum {0}")]
    UnknownDatum(DataId),
    #[error("storage of {datum} cannot be mapped: {detail}")]
    UnmappedStorage { datum: DataId, detail: String },
    #[error("delete on {0} but its policy has no deletion delay")]
    MissingDeletionDelay(DataId),
    #[error("no {0} alias declared; --simplify-friends needs one per polarity")]
    NoFriendsAlias(&'static str),
    #[error("event {index} ({event}) names a ?variable; a concrete principal is required")]
    Template { index: usize, event: String },
    #[error("derived architecture is inconsistent: {term} is owned by more than one user (events {sources:?})")]
    Inconsistent {
        term: Box<Term>,
        sources: Vec<usize>,
    },
    #[error("policies are over different activity sets")]
    DifferentActions,
    #[error(transparent)]
    Semantics(#[from] SemanticsError),
    #[error(transparent)]
    Logic(#[from] LogicError),
}

/// `D(ow, ds, θ, id)`: the architecture variable standing for a datum.
pub fn data_variable(dt: &DataRef) -> Variable {
    Variable::new(dt.ow.clone(), dt.ds.clone(), dt.id.clone())
}

/// A policy model together with its datum ↔ variable table.
#[derive(Debug, Clone)]
pub struct MappingContext<'m> {
    pub model: &'m PolicyModel,
    vars: BTreeMap<DataId, Variable>,
}

impl<'m> MappingContext<'m> {
    pub fn new(model: &'m PolicyModel) -> Self {
        let vars = model
            .data
            .iter()
            .map(|(id, d)| (id.clone(), data_variable(&d.data)))
            .collect();
        Self { model, vars }
    }

    pub fn variable(&self, id: &DataId) -> Result<&Variable, MappingError> {
        self.vars
            .get(id)
            .ok_or_else(|| MappingError::UnknownDatum(id.clone()))
    }

    /// The datum a variable stands for.
    pub fn datum_of(&self, x: &Variable) -> Option<&DataId> {
        self.vars.iter().find(|(_, v)| *v == x).map(|(id, _)| id)
    }

    /// `TYPE(X) = θ` for every mapped variable.
    pub fn types(&self) -> BTreeMap<DataId, TypeName> {
        self.model
            .data
            .iter()
            .map(|(id, d)| (id.clone(), d.data.ty.clone()))
            .collect()
    }

    fn policy(&self, id: &DataId) -> Result<&'m Policy, MappingError> {
        self.model
            .datum(id)
            .map(|d| &d.policy)
            .ok_or_else(|| MappingError::UnknownDatum(id.clone()))
    }
}

/// `W(wh, ho)`, taken as the union over every (location, form) pair the
/// storage spec allows.
pub fn map_storage(
    x: &Variable,
    storage: &StorageSpec,
) -> Result<BTreeSet<Activity>, MappingError> {
    let datum = || {
        x.data_id()
            .cloned()
            .unwrap_or_else(|| DataId::new(x.id.to_string()))
    };
    if storage.wh.is_empty() || (storage.wh.contains(&Location::SpLoc) && storage.ho.is_empty()) {
        return Err(MappingError::UnmappedStorage {
            datum: datum(),
            detail: "empty storage location or form".into(),
        });
    }
    let owner = Principal::User(x.ow.clone());
    let own = |term| Activity::Own {
        by: owner.clone(),
        term,
    };
    let possess = |term| Activity::Possess { term };
    let enc = |key: UserId| {
        Term::Func(
            crate::arch::FuncName::Enc,
            vec![Term::Var(x.clone()), Term::Key(key)],
        )
    };
    let mut out = BTreeSet::new();
    out.insert(own(Term::Var(x.clone())));
    if storage.wh.contains(&Location::SpLoc) {
        for form in &storage.ho {
            match form {
                StorageForm::Plain => {
                    out.insert(possess(Term::Var(x.clone())));
                }
                StorageForm::EncSpKey => {
                    out.insert(possess(enc(UserId::sp())));
                    out.insert(possess(Term::Key(UserId::sp())));
                }
                StorageForm::EncClKey => {
                    out.insert(own(Term::Key(x.ow.clone())));
                    out.insert(possess(enc(x.ow.clone())));
                }
            }
        }
    }
    Ok(out)
}

pub type PermTable = BTreeMap<PermSlot, UserSet>;

fn slot(key: PermKey, x: &Variable) -> PermSlot {
    PermSlot {
        grantor: Grantor::Any,
        key,
        var: x.clone(),
    }
}

/// Every permission set of a datum's policy, copied to the architecture's
/// tables for its variable. Non-empty sets only.
pub fn map_permissions(dt: &DataRef, policy: &Policy) -> PermTable {
    let x = data_variable(dt);
    let mut out = PermTable::new();
    for a in policy.acp.can.keys() {
        out.extend(p_a(&x, policy, a));
    }
    for a in policy.has.by.keys().chain(policy.has.been.keys()) {
        out.extend(p_h_by(&x, policy, a));
        out.extend(p_h_been(&x, policy, a));
    }
    if !policy.has.group.is_empty() {
        out.insert(slot(PermKey::Group, &x), policy.has.group.clone());
    }
    out
}

/// `P_A`: `G^can_act(·, X)` from the action policy.
pub fn p_a(x: &Variable, policy: &Policy, action: &ActionId) -> PermTable {
    let set = policy.acp.can(action);
    let mut out = PermTable::new();
    if !set.is_empty() {
        out.insert(slot(PermKey::Can(action.clone()), x), set);
    }
    out
}

/// `P_H` by-rows: `G^by_has(·, {U_i}, X)` per performer.
pub fn p_h_by(x: &Variable, policy: &Policy, action: &ActionId) -> PermTable {
    per_user(x, policy.has.by.get(action), |u| {
        PermKey::By(action.clone(), u)
    })
}

/// `P_H` been-rows: `G^been_has(·, {U_tar}, X)` per target.
pub fn p_h_been(x: &Variable, policy: &Policy, action: &ActionId) -> PermTable {
    per_user(x, policy.has.been.get(action), |u| {
        PermKey::Been(action.clone(), u)
    })
}

fn per_user(
    x: &Variable,
    table: Option<&BTreeMap<UserId, UserSet>>,
    key: impl Fn(UserId) -> PermKey,
) -> PermTable {
    table
        .into_iter()
        .flatten()
        .filter(|(_, set)| !set.is_empty())
        .map(|(u, set)| (slot(key(u.clone()), x), set.clone()))
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DeriveOptions {
    /// Map every group-family event to the model's grouping/ungrouping
    /// alias (e.g. `addfriends`/`unfriends`).
    pub simplify_friends: bool,
}

/// Adds everything in `frag` to `pa`.
pub fn merge(pa: &mut Architecture, frag: Architecture) {
    pa.activities.extend(frag.activities);
    for (slot, set) in frag.permissions {
        pa.grant(slot, set);
    }
    pa.revokes.extend(frag.revokes);
    pa.aliases.extend(frag.aliases);
}

fn alias_fragment(
    pa: &mut Architecture,
    alias: &GroupAlias,
    or: &Principal,
    tar: &Principal,
    x: &Variable,
    policy: &Policy,
) {
    pa.insert(Activity::Alias {
        name: alias.name.clone(),
        by: or.clone(),
        tar: tar.clone(),
        var: x.clone(),
    });
    pa.aliases.insert(alias.name.clone(), alias.clone());
    if alias.polarity == Polarity::Group {
        for a in &alias.actions {
            for (s, set) in p_a(x, policy, a) {
                pa.grant(s, set);
            }
        }
    }
}

/// `Arch(e)` for one event under policy `policy`.
pub fn arch_of_event(
    ctx: &MappingContext<'_>,
    e: &AbstractEvent,
    policy: &Policy,
    opts: DeriveOptions,
) -> Result<Architecture, MappingError> {
    let x = ctx.variable(&e.datum)?.clone();
    let sets: &ActivitySets = &ctx.model.sets;
    let mut pa = Architecture::new();
    let grant_all = |pa: &mut Architecture, t: PermTable| {
        for (s, set) in t {
            pa.grant(s, set);
        }
    };
    if e.kind.is_group_family() {
        let (or, tar) = (
            e.kind.performer().expect("group events have a performer"),
            e.kind.target().expect("group events have a target"),
        );
        let polarity = match e.kind {
            EventKind::GroupAct { .. } | EventKind::GroupHas { .. } => Polarity::Group,
            _ => Polarity::Ungroup,
        };
        let alias = if opts.simplify_friends {
            Some(
                ctx.model
                    .alias_for(polarity)
                    .ok_or(MappingError::NoFriendsAlias(match polarity {
                        Polarity::Group => "grouping",
                        Polarity::Ungroup => "ungrouping",
                    }))?,
            )
        } else {
            e.via.as_deref().and_then(|n| ctx.model.alias(n))
        };
        if let Some(alias) = alias {
            alias_fragment(&mut pa, alias, or, tar, &x, policy);
            return Ok(pa);
        }
    }
    match &e.kind {
        EventKind::Own { .. } => {
            pa.insert(Activity::Own {
                by: Principal::User(x.ow.clone()),
                term: Term::Var(x.clone()),
            });
        }
        EventKind::Store => {
            for a in map_storage(&x, &policy.storage)? {
                pa.insert(a);
            }
        }
        EventKind::Use { .. } => {}
        EventKind::DeleteReq { or } => {
            pa.insert(Activity::DeleteReq {
                by: or.clone(),
                var: x.clone(),
            });
        }
        EventKind::Delete => {
            let dd = policy
                .deletion
                .effective_delay()
                .ok_or_else(|| MappingError::MissingDeletionDelay(e.datum.clone()))?;
            pa.insert(Activity::Delete { var: x.clone(), dd });
        }
        EventKind::GroupAct { or, tar, action } | EventKind::UngroupAct { or, tar, action } => {
            let undo = matches!(e.kind, EventKind::UngroupAct { .. });
            pa.insert(Activity::Group {
                undo,
                kind: GroupKind::Act(action.clone()),
                by: or.clone(),
                tar: tar.clone(),
                var: x.clone(),
            });
            if !undo {
                grant_all(&mut pa, p_a(&x, policy, action));
            }
        }
        EventKind::GroupHas { or, tar } | EventKind::UngroupHas { or, tar } => {
            pa.insert(Activity::Group {
                undo: matches!(e.kind, EventKind::UngroupHas { .. }),
                kind: GroupKind::Has,
                by: or.clone(),
                tar: tar.clone(),
                var: x.clone(),
            });
        }
        EventKind::Act1 { or, action } | EventKind::Act2 { or, action, .. } => {
            let binary = matches!(e.kind, EventKind::Act2 { .. });
            pa.insert(Activity::Act {
                form: if binary { ActForm::Act2 } else { ActForm::Act1 },
                action: action.clone(),
                by: or.clone(),
                tar: e.kind.target().cloned(),
                var: x.clone(),
            });
            grant_all(&mut pa, p_a(&x, policy, action));
            grant_all(&mut pa, p_h_by(&x, policy, action));
            if binary {
                grant_all(&mut pa, p_h_been(&x, policy, action));
            }
        }
        EventKind::UnAct1 { or, action } | EventKind::UnAct2 { or, action, .. } => {
            let binary = matches!(e.kind, EventKind::UnAct2 { .. });
            pa.insert(Activity::Act {
                form: if binary {
                    ActForm::UnAct2
                } else {
                    ActForm::UnAct1
                },
                action: action.clone(),
                by: or.clone(),
                tar: e.kind.target().cloned(),
                var: x.clone(),
            });
            grant_all(&mut pa, p_a(&x, policy, action));
            if let Some(act) = sets.revoked(action) {
                pa.revokes.insert(action.clone(), act.clone());
            }
        }
    }
    Ok(pa)
}

fn derive_with(
    ctx: &MappingContext<'_>,
    events: &[AbstractEvent],
    opts: DeriveOptions,
    policy_at: impl Fn(usize, &AbstractEvent) -> Result<Policy, MappingError>,
) -> Result<Architecture, MappingError> {
    let mut pa = Architecture::new();
    let mut owners: BTreeMap<Term, Vec<(UserId, usize)>> = BTreeMap::new();
    for (k, e) in events.iter().enumerate() {
        let policy = policy_at(k, e)?;
        let frag = arch_of_event(ctx, e, &policy, opts)?;
        for a in &frag.activities {
            if let Activity::Own {
                by: Principal::User(u),
                term,
            } = a
            {
                owners
                    .entry(term.clone())
                    .or_default()
                    .push((u.clone(), k + 1));
            }
        }
        merge(&mut pa, frag);
    }
    if let (false, Some(term)) = is_consistent(&pa) {
        let sources = owners
            .get(&term)
            .map(|v| v.iter().map(|(_, k)| *k).collect())
            .unwrap_or_default();
        return Err(MappingError::Inconsistent {
            term: Box::new(term),
            sources,
        });
    }
    Ok(pa)
}

/// Union of `Arch(e)` over a set of events (templates allowed), each under
/// its datum's declared policy.
pub fn derive_architecture(
    model: &PolicyModel,
    events: &[AbstractEvent],
    opts: DeriveOptions,
) -> Result<Architecture, MappingError> {
    let ctx = MappingContext::new(model);
    derive_with(&ctx, events, opts, |_, e| ctx.policy(&e.datum).cloned())
}

/// As [`derive_architecture`] for a concrete trace, with each event read
/// under the policy its datum carries in the state the event is applied to
/// (group events may have widened it).
pub fn derive_from_trace(
    model: &PolicyModel,
    trace: &[AbstractEvent],
    opts: DeriveOptions,
) -> Result<Architecture, MappingError> {
    let ctx = MappingContext::new(model);
    let exec = execute(model, trace)?;
    derive_with(&ctx, trace, opts, |k, e| {
        match exec.states[k].entry(&e.datum) {
            Some(entry) => Ok(entry.policy.clone()),
            None => ctx.policy(&e.datum).cloned(),
        }
    })
}

/// Default value a datum carries when its `own` event names none.
pub fn default_value(id: &DataId) -> String {
    format!("v_{id}")
}

/// The event-wise architecture image of a concrete policy trace: same
/// names, same times, the datum's variable and its current value. `store`
/// and `use` have no image; an alias call becomes one alias event.
pub fn image_trace(
    model: &PolicyModel,
    trace: &[AbstractEvent],
) -> Result<Vec<ArchEvent>, MappingError> {
    let ctx = MappingContext::new(model);
    let mut values: BTreeMap<DataId, String> = BTreeMap::new();
    let mut out: Vec<ArchEvent> = Vec::new();
    let mut last_alias: Option<(String, u64, DataId)> = None;
    for (k, e) in trace.iter().enumerate() {
        let x = ctx.variable(&e.datum)?.clone();
        let user = |p: &Principal| {
            p.as_user().cloned().ok_or_else(|| MappingError::Template {
                index: k + 1,
                event: e.kind.name(),
            })
        };
        let current = |values: &BTreeMap<DataId, String>| {
            Value::atom(
                values
                    .get(&e.datum)
                    .cloned()
                    .unwrap_or_else(|| default_value(&e.datum)),
            )
        };
        if let Some(name) = &e.via {
            let key = (name.clone(), e.time, e.datum.clone());
            if last_alias.as_ref() == Some(&key) {
                continue;
            }
            let (Some(or), Some(tar)) = (e.kind.performer(), e.kind.target()) else {
                continue;
            };
            out.push(ArchEvent::new(
                ArchEventKind::Alias {
                    name: name.clone(),
                    by: user(or)?,
                    tar: user(tar)?,
                    var: x,
                    value: Some(current(&values)),
                },
                e.time,
            ));
            last_alias = Some(key);
            continue;
        }
        last_alias = None;
        let kind = match &e.kind {
            EventKind::Own { or, value } => {
                let v = value.clone().unwrap_or_else(|| default_value(&e.datum));
                values.insert(e.datum.clone(), v.clone());
                ArchEventKind::Own {
                    by: user(or)?,
                    term: Term::Var(x),
                    value: Value::atom(v),
                }
            }
            EventKind::Store | EventKind::Use { .. } => continue,
            EventKind::DeleteReq { or } => ArchEventKind::DeleteReq {
                by: user(or)?,
                var: x,
                value: current(&values),
            },
            EventKind::Delete => {
                let value = current(&values);
                values.remove(&e.datum);
                ArchEventKind::Delete { var: x, value }
            }
            EventKind::GroupAct { or, tar, action } | EventKind::UngroupAct { or, tar, action } => {
                ArchEventKind::Group {
                    undo: matches!(e.kind, EventKind::UngroupAct { .. }),
                    kind: GroupKind::Act(action.clone()),
                    by: user(or)?,
                    tar: user(tar)?,
                    var: x,
                    value: None,
                }
            }
            EventKind::GroupHas { or, tar } | EventKind::UngroupHas { or, tar } => {
                ArchEventKind::Group {
                    undo: matches!(e.kind, EventKind::UngroupHas { .. }),
                    kind: GroupKind::Has,
                    by: user(or)?,
                    tar: user(tar)?,
                    var: x,
                    value: Some(current(&values)),
                }
            }
            EventKind::Act1 { or, action }
            | EventKind::UnAct1 { or, action }
            | EventKind::Act2 { or, action, .. }
            | EventKind::UnAct2 { or, action, .. } => {
                let form = match e.kind {
                    EventKind::Act1 { .. } => ActForm::Act1,
                    EventKind::UnAct1 { .. } => ActForm::UnAct1,
                    EventKind::Act2 { .. } => ActForm::Act2,
                    _ => ActForm::UnAct2,
                };
                ArchEventKind::Act {
                    form,
                    action: action.clone(),
                    by: user(or)?,
                    tar: e.kind.target().map(user).transpose()?,
                    var: x,
                    value: current(&values),
                }
            }
        };
        out.push(ArchEvent::new(kind, e.time));
    }
    Ok(out)
}

// ------------------------------------------------------- correspondence

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Correspondence {
    P1,
    P2,
    P3,
    P4,
    P5,
    P6,
}

impl Correspondence {
    pub const ALL: [Correspondence; 6] = [
        Correspondence::P1,
        Correspondence::P2,
        Correspondence::P3,
        Correspondence::P4,
        Correspondence::P5,
        Correspondence::P6,
    ];

    /// The policy-level and architecture-level conditions it relates.
    pub fn sides(self) -> (&'static str, &'static str) {
        match self {
            Correspondence::P1 => ("C3 never applicable", "H9"),
            Correspondence::P2 => ("C3/(i)", "H1"),
            Correspondence::P3 => ("C3/(ii)", "H2"),
            Correspondence::P4 => ("C3/(iii)", "H3"),
            Correspondence::P5 => ("C4", "H8(a)/(b)"),
            Correspondence::P6 => ("C5", "H10"),
        }
    }
}

impl fmt::Display for Correspondence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// One `(property, user, datum)` comparison.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorrespondenceRow {
    pub property: Correspondence,
    pub user: UserId,
    pub datum: DataId,
    pub policy_side: bool,
    pub arch_side: bool,
}

impl CorrespondenceRow {
    pub fn agrees(&self) -> bool {
        self.policy_side == self.arch_side
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PropertyStatus {
    Holds,
    Fails(CorrespondenceRow),
    Inapplicable,
}

impl fmt::Display for PropertyStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PropertyStatus::Holds => f.write_str("holds"),
            PropertyStatus::Inapplicable => f.write_str("inapplicable"),
            PropertyStatus::Fails(w) => {
                let (p, a) = w.property.sides();
                write!(
                    f,
                    "fails for ({}, {}): {p} {} but {a} {}",
                    w.user,
                    w.datum,
                    if w.policy_side {
                        "applies"
                    } else {
                        "does not apply"
                    },
                    if w.arch_side {
                        "applies"
                    } else {
                        "does not apply"
                    },
                )
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorrespondenceReport {
    pub status: BTreeMap<Correspondence, PropertyStatus>,
    pub rows: Vec<CorrespondenceRow>,
    /// Always true: the "any possible trace" quantifiers are checked over
    /// the supplied traces only.
    pub bounded: bool,
}

impl CorrespondenceReport {
    pub fn all_hold(&self) -> bool {
        !self
            .status
            .values()
            .any(|s| matches!(s, PropertyStatus::Fails(_)))
    }

    pub fn status(&self, p: Correspondence) -> &PropertyStatus {
        &self.status[&p]
    }
}

#[derive(Default)]
struct PolicyFacts {
    held: BTreeSet<(DataId, UserId)>,
    owner: BTreeSet<(DataId, UserId)>,
    act1: BTreeSet<(DataId, UserId)>,
    act2: BTreeSet<(DataId, UserId)>,
    sp_held: BTreeSet<DataId>,
    delete_requested: BTreeSet<DataId>,
}

fn policy_facts(
    model: &PolicyModel,
    trace: &[AbstractEvent],
    facts: &mut PolicyFacts,
) -> Result<(), MappingError> {
    let exec = execute(model, trace)?;
    for ((dt, u), j) in holder_audit(model, trace, &exec).held {
        let key = (dt, u);
        facts.held.insert(key.clone());
        if j.owner {
            facts.owner.insert(key.clone());
        }
        if j.act1 {
            facts.act1.insert(key.clone());
        }
        if j.act2 {
            facts.act2.insert(key);
        }
    }
    facts
        .sp_held
        .extend(sp_holdings(&exec).into_iter().map(|(_, dt, _)| dt));
    facts
        .delete_requested
        .extend(deletion_requests(trace, &exec).into_iter().map(|r| r.1));
    Ok(())
}

/// Checks P1–P6 for every user and datum of the model over the supplied
/// `(τ, θ)` runs, with `pa` as the architecture.
pub fn check_correspondence(
    model: &PolicyModel,
    runs: &[(Vec<AbstractEvent>, Vec<ArchEvent>)],
    pa: &Architecture,
) -> Result<CorrespondenceReport, MappingError> {
    let ctx = MappingContext::new(model);
    let mut facts = PolicyFacts::default();
    let mut users: BTreeSet<UserId> = model.principals();
    for (tau, _) in runs {
        policy_facts(model, tau, &mut facts)?;
        for e in tau {
            users.extend(e.kind.principals().filter_map(|p| p.as_user().cloned()));
        }
    }
    users.remove(&UserId::sp());

    let mut rules: BTreeMap<(UserId, DataId), BTreeSet<HRule>> = BTreeMap::new();
    let mut rules_for = |u: &UserId, dt: &DataId| -> Result<BTreeSet<HRule>, MappingError> {
        if let Some(r) = rules.get(&(u.clone(), dt.clone())) {
            return Ok(r.clone());
        }
        let x = ctx.variable(dt)?;
        let mut acc = BTreeSet::new();
        for (_, theta) in runs {
            acc.extend(applicable_rules(pa, theta, u, x)?);
        }
        if runs.is_empty() {
            acc.extend(applicable_rules(pa, &[], u, x)?);
        }
        rules.insert((u.clone(), dt.clone()), acc.clone());
        Ok(acc)
    };

    let mut rows = Vec::new();
    for (dt, d) in &model.data {
        for u in &users {
            let r = rules_for(u, dt)?;
            let key = (dt.clone(), u.clone());
            let mut row = |property, policy_side, arch_side| {
                rows.push(CorrespondenceRow {
                    property,
                    user: u.clone(),
                    datum: dt.clone(),
                    policy_side,
                    arch_side,
                })
            };
            row(
                Correspondence::P1,
                !facts.held.contains(&key),
                r.contains(&HRule::H9),
            );
            row(
                Correspondence::P2,
                facts.owner.contains(&key),
                r.contains(&HRule::H1),
            );
            row(
                Correspondence::P3,
                facts.act1.contains(&key),
                r.contains(&HRule::H2),
            );
            row(
                Correspondence::P4,
                facts.act2.contains(&key),
                r.contains(&HRule::H3),
            );
        }
        let sp = rules_for(&UserId::sp(), dt)?;
        rows.push(CorrespondenceRow {
            property: Correspondence::P5,
            user: UserId::sp(),
            datum: dt.clone(),
            policy_side: facts.sp_held.contains(dt),
            arch_side: sp.contains(&HRule::H8a) || sp.contains(&HRule::H8b),
        });
        let ow = rules_for(&d.data.ow, dt)?;
        rows.push(CorrespondenceRow {
            property: Correspondence::P6,
            user: d.data.ow.clone(),
            datum: dt.clone(),
            policy_side: facts.delete_requested.contains(dt),
            arch_side: ow.contains(&HRule::H10),
        });
    }

    let status = Correspondence::ALL
        .into_iter()
        .map(|p| {
            let mine: Vec<&CorrespondenceRow> = rows.iter().filter(|r| r.property == p).collect();
            let s = if let Some(bad) = mine.iter().find(|r| !r.agrees()) {
                PropertyStatus::Fails((*bad).clone())
            } else if mine.iter().any(|r| r.policy_side)
                || (p == Correspondence::P1 && !mine.is_empty())
            {
                PropertyStatus::Holds
            } else {
                PropertyStatus::Inapplicable
            };
            (p, s)
        })
        .collect();
    Ok(CorrespondenceReport {
        status,
        rows,
        bounded: true,
    })
}

// ----------------------------------------------------------- comparison

/// How the left operand relates to the right one. `Stricter` means the
/// left permits no more than the right.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Relation {
    Equal,
    Stricter,
    Looser,
    Incomparable,
}

impl Relation {
    fn of_sets<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> Self {
        match (a.is_subset(b), b.is_subset(a)) {
            (true, true) => Relation::Equal,
            (true, false) => Relation::Stricter,
            (false, true) => Relation::Looser,
            (false, false) => Relation::Incomparable,
        }
    }

    /// Delays: shorter is stricter; an absent mode is unbounded.
    fn of_delays(a: Option<u64>, b: Option<u64>) -> Self {
        let key = |d: Option<u64>| d.unwrap_or(u64::MAX);
        match key(a).cmp(&key(b)) {
            std::cmp::Ordering::Equal => Relation::Equal,
            std::cmp::Ordering::Less => Relation::Stricter,
            std::cmp::Ordering::Greater => Relation::Looser,
        }
    }

    /// Combination of component relations.
    pub fn combine(rs: impl IntoIterator<Item = Relation>) -> Self {
        let mut stricter = true;
        let mut looser = true;
        for r in rs {
            match r {
                Relation::Equal => {}
                Relation::Stricter => looser = false,
                Relation::Looser => stricter = false,
                Relation::Incomparable => return Relation::Incomparable,
            }
        }
        match (stricter, looser) {
            (true, true) => Relation::Equal,
            (true, false) => Relation::Stricter,
            (false, true) => Relation::Looser,
            (false, false) => Relation::Incomparable,
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Relation::Equal => "equal",
            Relation::Stricter => "stricter",
            Relation::Looser => "looser",
            Relation::Incomparable => "incomparable",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyComparison {
    pub components: Vec<(String, Relation)>,
    pub overall: Relation,
}

/// Component-wise comparison of two policies over the same activity sets.
pub fn compare_policies(a: &Policy, b: &Policy) -> PolicyComparison {
    let mut components = vec![(
        "purposes".to_string(),
        Relation::of_sets(&a.purposes, &b.purposes),
    )];
    for mode in [DeletionMode::Man, DeletionMode::Aut] {
        components.push((
            format!("delete {mode}"),
            Relation::of_delays(a.deletion.delay(mode), b.deletion.delay(mode)),
        ));
    }
    components.push((
        "where".into(),
        Relation::of_sets(&a.storage.wh, &b.storage.wh),
    ));
    components.push((
        "how".into(),
        Relation::of_sets(&a.storage.ho, &b.storage.ho),
    ));
    let actions: BTreeSet<&ActionId> = a.acp.can.keys().chain(b.acp.can.keys()).collect();
    for act in actions {
        components.push((
            format!("can {act}"),
            Relation::of_sets(&a.acp.can(act), &b.acp.can(act)),
        ));
    }
    for (kw, ta, tb) in [
        ("by", &a.has.by, &b.has.by),
        ("been", &a.has.been, &b.has.been),
    ] {
        let keys: BTreeSet<(&ActionId, &UserId)> = ta
            .iter()
            .chain(tb.iter())
            .flat_map(|(act, per)| per.keys().map(move |u| (act, u)))
            .collect();
        for (act, u) in keys {
            let get = |t: &BTreeMap<ActionId, BTreeMap<UserId, UserSet>>| {
                t.get(act)
                    .and_then(|m| m.get(u))
                    .cloned()
                    .unwrap_or_default()
            };
            components.push((
                format!("has {kw} {act} {u}"),
                Relation::of_sets(&get(ta), &get(tb)),
            ));
        }
    }
    components.push((
        "has group".into(),
        Relation::of_sets(&a.has.group, &b.has.group),
    ));
    let overall = Relation::combine(components.iter().map(|(_, r)| *r));
    PolicyComparison {
        components,
        overall,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelComparison {
    /// Per datum; `None` when the datum exists on one side only.
    pub data: Vec<(DataId, Option<PolicyComparison>)>,
    pub overall: Relation,
}

/// Compares two policy files datum by datum.
pub fn compare_models(a: &PolicyModel, b: &PolicyModel) -> Result<ModelComparison, MappingError> {
    if a.sets != b.sets {
        return Err(MappingError::DifferentActions);
    }
    let ids: BTreeSet<&DataId> = a.data.keys().chain(b.data.keys()).collect();
    let data: Vec<(DataId, Option<PolicyComparison>)> = ids
        .into_iter()
        .map(|id| {
            let c = match (a.datum(id), b.datum(id)) {
                (Some(x), Some(y)) => Some(compare_policies(&x.policy, &y.policy)),
                _ => None,
            };
            (id.clone(), c)
        })
        .collect();
    let overall = Relation::combine(
        data.iter()
            .map(|(_, c)| c.as_ref().map_or(Relation::Incomparable, |c| c.overall)),
    );
    Ok(ModelComparison { data, overall })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SetRelation {
    Equal,
    Subset,
    Superset,
    Incomparable,
}

impl fmt::Display for SetRelation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SetRelation::Equal => "equal",
            SetRelation::Subset => "subset",
            SetRelation::Superset => "superset",
            SetRelation::Incomparable => "incomparable",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchComparison {
    pub relation: SetRelation,
    /// Canonical items present only on the left / right.
    pub only_left: Vec<String>,
    pub only_right: Vec<String>,
    /// Unified diff of the canonical serializations.
    pub diff: String,
}

/// Canonical one-line items of an architecture: activities, permission
/// entries, revoke pairs and alias declarations.
pub fn architecture_items(pa: &Architecture) -> BTreeSet<String> {
    let text = serialize_architecture(pa);
    let mut items: BTreeSet<String> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with("architecture") && *l != "}")
        .map(str::to_owned)
        .collect();
    items.extend(
        pa.activities
            .iter()
            .map(|a| format!("{};", render_activity(a))),
    );
    items
}

pub fn compare_architectures(left: &Architecture, right: &Architecture) -> ArchComparison {
    let l = architecture_items(left);
    let r = architecture_items(right);
    let relation = match (l.is_subset(&r), r.is_subset(&l)) {
        (true, true) => SetRelation::Equal,
        (true, false) => SetRelation::Subset,
        (false, true) => SetRelation::Superset,
        (false, false) => SetRelation::Incomparable,
    };
    let (ls, rs) = (serialize_architecture(left), serialize_architecture(right));
    let diff = TextDiff::from_lines(&ls, &rs)
        .unified_diff()
        .header("left", "right")
        .to_string();
    ArchComparison {
        relation,
        only_left: l.difference(&r).cloned().collect(),
        only_right: r.difference(&l).cloned().collect(),
        diff,
    }
}
