//! HAS properties: deduction with rules H1–H10 over an architecture and a
//! trace, and semantic evaluation by bounded state enumeration.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::arch::{
    apply_arch_event, enumerate_states, have_act1_set, have_act2_set, is_compatible, is_consistent,
    is_trace_consistent, ActForm, Activity, ArchError, ArchEvent, ArchEventKind, Architecture,
    BoundTerm, EnumerateError, Enumeration, FuncName, GlobalState, GroupKind, Index, PermKey,
    PermState, Term, Universe, UserState, Value, Variable,
};
use crate::model::{ActionId, Polarity, Principal, Time, UserId, UserSet};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum HasProperty {
    HasSp(Variable),
    Has {
        user: UserId,
        var: Variable,
        time: Time,
    },
    HasNot {
        user: UserId,
        var: Variable,
        time: Time,
    },
    HasNever {
        user: UserId,
        var: Variable,
    },
    And(Box<HasProperty>, Box<HasProperty>),
}

impl HasProperty {
    pub fn and(a: HasProperty, b: HasProperty) -> Self {
        HasProperty::And(Box::new(a), Box::new(b))
    }

    /// Users and variables the formula mentions.
    pub fn atoms(&self) -> Vec<(UserId, &Variable)> {
        match self {
            HasProperty::HasSp(v) => vec![(UserId::sp(), v)],
            HasProperty::Has { user, var, .. }
            | HasProperty::HasNot { user, var, .. }
            | HasProperty::HasNever { user, var } => vec![(user.clone(), var)],
            HasProperty::And(a, b) => a.atoms().into_iter().chain(b.atoms()).collect(),
        }
    }
}

impl fmt::Display for HasProperty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HasProperty::HasSp(v) => write!(f, "HAS[sp]({v})"),
            HasProperty::Has { user, var, time } => write!(f, "HAS[{user}]({var}, t={time})"),
            HasProperty::HasNot { user, var, time } => {
                write!(f, "HAS_not[{user}]({var}, t={time})")
            }
            HasProperty::HasNever { user, var } => write!(f, "HAS_never[{user}]({var})"),
            HasProperty::And(a, b) => {
                let wrap = |p: &HasProperty| match p {
                    HasProperty::And(..) => format!("({p})"),
                    _ => p.to_string(),
                };
                write!(f, "{} AND {}", wrap(a), wrap(b))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum HRule {
    H1,
    H2,
    H3,
    H4,
    H5,
    H6,
    H7,
    H8a,
    H8b,
    H9,
    H10,
}

impl fmt::Display for HRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            HRule::H8a => "H8(a)",
            HRule::H8b => "H8(b)",
            other => return write!(f, "{other:?}"),
        };
        f.write_str(s)
    }
}

/// One rule application: the activities and (1-based) events it matched.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DerivationStep {
    pub rule: HRule,
    pub activities: Vec<Activity>,
    pub events: Vec<(usize, ArchEvent)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Derivable,
    NotDerivable,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeductionResult {
    pub property: HasProperty,
    pub verdict: Verdict,
    /// Rule applications for an atomic property (empty iff not derivable).
    pub steps: Vec<DerivationStep>,
    /// One result per conjunct of an `And`.
    pub conjuncts: Vec<DeductionResult>,
}

impl DeductionResult {
    pub fn derivable(&self) -> bool {
        self.verdict == Verdict::Derivable
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LogicError {
    #[error("architecture is inconsistent: {0} has more than one owner")]
    InconsistentArchitecture(Term),
    #[error("event {0} is not compatible with the architecture")]
    IncompatibleTrace(usize),
    #[error("inconsistent trace: {0}")]
    InconsistentTrace(#[from] ArchError),
    #[error("unknown user {0}")]
    UnknownUser(UserId),
    #[error("unknown variable {0}")]
    UnknownVariable(Variable),
    #[error(transparent)]
    Enumerate(#[from] EnumerateError),
}

/// Derive `φ` from `(pa, θ)` with the deduction rules.
pub fn deduce(
    pa: &Architecture,
    trace: &[ArchEvent],
    phi: &HasProperty,
) -> Result<DeductionResult, LogicError> {
    if let (false, Some(t)) = is_consistent(pa) {
        return Err(LogicError::InconsistentArchitecture(t));
    }
    if let Some(k) = is_compatible(trace, pa).first_incompatible {
        return Err(LogicError::IncompatibleTrace(k));
    }
    is_trace_consistent(pa, trace)?;
    check_known(pa, trace, phi)?;
    let ctx = Context::new(pa, trace, phi);
    Ok(ctx.deduce(phi))
}

fn check_known(
    pa: &Architecture,
    trace: &[ArchEvent],
    phi: &HasProperty,
) -> Result<(), LogicError> {
    let mut users = pa.users();
    users.insert(UserId::sp());
    let mut vars: Vec<Variable> = pa
        .activities
        .iter()
        .flat_map(|a| a.variables().into_iter().cloned())
        .chain(pa.permissions.keys().map(|s| s.var.clone()))
        .collect();
    for e in trace {
        users.extend(e.involved());
        vars.extend(e.variable().cloned());
    }
    for (u, x) in phi.atoms() {
        if !users.contains(&u) {
            return Err(LogicError::UnknownUser(u));
        }
        let known = vars.iter().any(|v| {
            v.ow == x.ow && v.ds == x.ds && (v.id == x.id || matches!(v.id, Index::Var(_)))
        });
        if !known {
            return Err(LogicError::UnknownVariable(x.clone()));
        }
    }
    Ok(())
}

/// A trace folded once: `states[k]` is the state before event `k` (0-based)
/// and `states[n]` the final one.
struct Context<'a> {
    pa: &'a Architecture,
    trace: &'a [ArchEvent],
    states: Vec<GlobalState>,
}

impl<'a> Context<'a> {
    fn new(pa: &'a Architecture, trace: &'a [ArchEvent], phi: &HasProperty) -> Self {
        let extra = phi.atoms().into_iter().map(|(u, _)| u);
        let mut states = vec![GlobalState::init(pa, extra)];
        for e in trace {
            let next = apply_arch_event(pa, states.last().expect("nonempty"), e)
                .expect("trace already checked for consistency");
            states.push(next);
        }
        Self { pa, trace, states }
    }

    fn deduce(&self, phi: &HasProperty) -> DeductionResult {
        if let HasProperty::And(a, b) = phi {
            let ra = self.deduce(a);
            let rb = self.deduce(b);
            let verdict = if ra.derivable() && rb.derivable() {
                Verdict::Derivable
            } else {
                Verdict::NotDerivable
            };
            return DeductionResult {
                property: phi.clone(),
                verdict,
                steps: vec![],
                conjuncts: vec![ra, rb],
            };
        }
        let steps = match phi {
            HasProperty::HasSp(x) => self.has_sp(x),
            HasProperty::Has { user, var, time } => self.has(user, var, *time),
            HasProperty::HasNot { user, var, time } => self.has_not(user, var, *time),
            HasProperty::HasNever { user, var } => self.has_never(user, var),
            HasProperty::And(..) => unreachable!(),
        };
        DeductionResult {
            property: phi.clone(),
            verdict: if steps.is_empty() {
                Verdict::NotDerivable
            } else {
                Verdict::Derivable
            },
            steps,
            conjuncts: vec![],
        }
    }

    fn activities_of(&self, e: &ArchEvent) -> Vec<Activity> {
        self.pa
            .activities
            .iter()
            .filter(|a| e.instantiates(a))
            .cloned()
            .collect()
    }

    fn step(&self, rule: HRule, events: &[usize]) -> Option<DerivationStep> {
        let mut activities = Vec::new();
        for &k in events {
            activities.extend(self.activities_of(&self.trace[k]));
        }
        (!activities.is_empty()).then(|| DerivationStep {
            rule,
            activities,
            events: events
                .iter()
                .map(|&k| (k + 1, self.trace[k].clone()))
                .collect(),
        })
    }

    fn active_before(&self, k: usize, j: &UserId) -> bool {
        self.states[k].user(j).is_some_and(|s| !s.is_failed())
    }

    fn perms_before<'s>(&'s self, k: usize) -> impl Fn(&UserId) -> Option<&'s PermState> + 's {
        move |u| self.states[k].user(u).and_then(UserState::perms)
    }

    fn guard(&self, k: usize, by: &UserId, x: &Variable, action: &ActionId) -> bool {
        self.states[k]
            .user(&x.ow)
            .map(|o| o.group(&PermKey::Can(action.clone()), x))
            .unwrap_or_default()
            .contains(by)
    }

    fn positive(&self, form: ActForm, action: &ActionId) -> Option<ActionId> {
        if form.is_revoke() {
            self.pa.revokes.get(action).cloned()
        } else {
            Some(action.clone())
        }
    }

    fn have(
        &self,
        k: usize,
        form: ActForm,
        action: &ActionId,
        by: &UserId,
        tar: Option<&UserId>,
        x: &Variable,
    ) -> UserSet {
        let Some(p) = self.positive(form, action) else {
            return UserSet::new();
        };
        match tar {
            Some(tar) if form.is_binary() => have_act2_set(by, tar, x, &p, self.perms_before(k)),
            _ => have_act1_set(by, x, &p, self.perms_before(k)),
        }
    }

    /// The has-group of `by` for `x` before (`post = false`) or after event `k`.
    fn group_members(&self, k: usize, by: &UserId, x: &Variable, post: bool) -> UserSet {
        let s = &self.states[if post { k + 1 } else { k }];
        s.user(by)
            .map(|u| u.group(&PermKey::Group, x))
            .unwrap_or_default()
    }

    fn has(&self, j: &UserId, x: &Variable, t: Time) -> Vec<DerivationStep> {
        let mut out = Vec::new();
        for (k, e) in self.trace.iter().enumerate() {
            if e.time != t {
                continue;
            }
            let rule = match &e.kind {
                ArchEventKind::Own {
                    by,
                    term: Term::Var(v),
                    value,
                } if v == x && by == j && *by == x.ow && value.completely_defined() => {
                    Some(HRule::H1)
                }
                ArchEventKind::Act {
                    form,
                    action,
                    by,
                    tar,
                    var,
                    value,
                } if var == x
                    && !form.is_revoke()
                    && value.completely_defined()
                    && self.guard(k, by, x, action)
                    && self.active_before(k, j)
                    && self.have(k, *form, action, by, tar.as_ref(), x).contains(j) =>
                {
                    Some(if form.is_binary() {
                        HRule::H3
                    } else {
                        HRule::H2
                    })
                }
                ArchEventKind::Group {
                    undo: false,
                    kind: GroupKind::Has,
                    by,
                    var,
                    value: Some(value),
                    ..
                } if var == x
                    && value.completely_defined()
                    && self.active_before(k, j)
                    && self.group_members(k, by, x, true).contains(j) =>
                {
                    Some(HRule::H4)
                }
                ArchEventKind::Alias {
                    name,
                    by,
                    var,
                    value: Some(value),
                    ..
                } if var == x
                    && self.alias_has(name, Polarity::Group)
                    && value.completely_defined()
                    && self.active_before(k, j)
                    && self.group_members(k, by, x, true).contains(j) =>
                {
                    Some(HRule::H4)
                }
                _ => None,
            };
            out.extend(rule.and_then(|r| self.step(r, &[k])));
        }
        out
    }

    fn alias_has(&self, name: &str, polarity: Polarity) -> bool {
        self.pa
            .aliases
            .get(name)
            .is_some_and(|a| a.include_has && a.polarity == polarity)
    }

    fn has_not(&self, j: &UserId, x: &Variable, t: Time) -> Vec<DerivationStep> {
        let mut out = Vec::new();
        for (k, e) in self.trace.iter().enumerate() {
            if e.time != t {
                continue;
            }
            match &e.kind {
                ArchEventKind::Act {
                    form,
                    action,
                    by,
                    tar,
                    var,
                    ..
                } if var == x
                    && form.is_revoke()
                    && self.guard(k, by, x, action)
                    && self.active_before(k, j)
                    && self.have(k, *form, action, by, tar.as_ref(), x).contains(j) =>
                {
                    let r = if form.is_binary() {
                        HRule::H6
                    } else {
                        HRule::H5
                    };
                    out.extend(self.step(r, &[k]));
                }
                ArchEventKind::Group {
                    undo: true,
                    kind: GroupKind::Has,
                    by,
                    var,
                    value: Some(_),
                    ..
                } if var == x
                    && self.active_before(k, j)
                    && self.group_members(k, by, x, false).contains(j) =>
                {
                    out.extend(self.step(HRule::H7, &[k]));
                }
                ArchEventKind::Alias {
                    name,
                    by,
                    var,
                    value: Some(_),
                    ..
                } if var == x
                    && self.alias_has(name, Polarity::Ungroup)
                    && self.active_before(k, j)
                    && self.group_members(k, by, x, false).contains(j) =>
                {
                    out.extend(self.step(HRule::H7, &[k]));
                }
                ArchEventKind::Delete { var, .. } if var == x && self.active_before(k, j) => {
                    let dds: Vec<Time> = self
                        .pa
                        .activities
                        .iter()
                        .filter(|a| e.instantiates(a))
                        .filter_map(|a| match a {
                            Activity::Delete { dd, .. } => Some(*dd),
                            _ => None,
                        })
                        .collect();
                    let req = self.trace[..k].iter().rposition(|r| {
                        matches!(&r.kind, ArchEventKind::DeleteReq { var, .. } if var == x)
                            && r.time < e.time
                            && dds.iter().any(|dd| e.time - r.time <= *dd)
                    });
                    if let Some(r) = req {
                        out.extend(self.step(HRule::H10, &[r, k]));
                    }
                }
                _ => {}
            }
        }
        out
    }

    fn has_sp(&self, x: &Variable) -> Vec<DerivationStep> {
        let sp = UserId::sp();
        let v = || Value::atom("");
        let var_ev = ArchEvent::new(
            ArchEventKind::Possess {
                bound: BoundTerm::Var(x.clone(), v()),
            },
            0,
        );
        let mut out = Vec::new();
        let direct = self.activities_of(&var_ev);
        if !direct.is_empty() {
            out.push(DerivationStep {
                rule: HRule::H8b,
                activities: direct,
                events: vec![],
            });
        }
        let enc_ev = ArchEvent::new(
            ArchEventKind::Possess {
                bound: BoundTerm::Func(
                    FuncName::Enc,
                    vec![
                        BoundTerm::Var(x.clone(), v()),
                        BoundTerm::Key(sp.clone(), v()),
                    ],
                ),
            },
            0,
        );
        let key_ev = ArchEvent::new(
            ArchEventKind::Possess {
                bound: BoundTerm::Key(sp, v()),
            },
            0,
        );
        let enc = self.activities_of(&enc_ev);
        let key = self.activities_of(&key_ev);
        if !enc.is_empty() && !key.is_empty() {
            out.push(DerivationStep {
                rule: HRule::H8a,
                activities: enc.into_iter().chain(key).collect(),
                events: vec![],
            });
        }
        out
    }

    /// H9: no way for `j` to come to hold `x` anywhere in the architecture.
    fn has_never(&self, j: &UserId, x: &Variable) -> Vec<DerivationStep> {
        if h9_blockers(self.pa, self.trace, j, x).is_empty() {
            vec![DerivationStep {
                rule: HRule::H9,
                activities: vec![],
                events: vec![],
            }]
        } else {
            vec![]
        }
    }
}

/// Every rule whose premise is met for `(j, x)` somewhere in `θ`, at any of
/// the trace's time points. Unlike [`deduce`], events that instantiate no
/// activity are tolerated (they simply support no rule), so mutated
/// architectures can be probed.
pub fn applicable_rules(
    pa: &Architecture,
    trace: &[ArchEvent],
    j: &UserId,
    x: &Variable,
) -> Result<BTreeSet<HRule>, LogicError> {
    is_trace_consistent(pa, trace)?;
    let phi = HasProperty::HasNever {
        user: j.clone(),
        var: x.clone(),
    };
    let ctx = Context::new(pa, trace, &phi);
    let times: BTreeSet<Time> = trace.iter().map(|e| e.time).collect();
    let mut steps = Vec::new();
    for t in times {
        steps.extend(ctx.has(j, x, t));
        steps.extend(ctx.has_not(j, x, t));
    }
    steps.extend(ctx.has_never(j, x));
    if j.is_sp() {
        steps.extend(ctx.has_sp(x));
    }
    Ok(steps.into_iter().map(|s| s.rule).collect())
}

const OTHER_USER: &str = "\u{2217}other";

/// Activities that could let `j` hold `x`, i.e. that defeat H9's premise.
pub fn h9_blockers(
    pa: &Architecture,
    trace: &[ArchEvent],
    j: &UserId,
    x: &Variable,
) -> Vec<Activity> {
    let mut candidates = pa.users();
    candidates.insert(UserId::sp());
    candidates.insert(j.clone());
    candidates.insert(UserId::new(OTHER_USER));
    for e in trace {
        candidates.extend(e.involved());
    }
    let principal_may_be = |p: &Principal, u: &UserId| match p {
        Principal::User(p) => p == u,
        Principal::Var(_) => true,
    };
    let var_matches = |v: &Variable| {
        v.ow == x.ow && v.ds == x.ds && (v.id == x.id || matches!(v.id, Index::Var(_)))
    };
    let declared_group: bool = pa
        .permissions
        .iter()
        .any(|(slot, set)| slot.key == PermKey::Group && var_matches(&slot.var) && set.contains(j));
    let perms = |u: &UserId| pa.initial_permissions(u);
    let mut out = Vec::new();
    for a in &pa.activities {
        let blocks = match a {
            Activity::Own {
                by,
                term: Term::Var(v),
            } => var_matches(v) && principal_may_be(by, j),
            Activity::Possess { term: Term::Var(v) } => j.is_sp() && var_matches(v),
            Activity::PossessOneOf { vars } => j.is_sp() && vars.iter().any(var_matches),
            Activity::Group {
                undo: false,
                kind: GroupKind::Has,
                tar,
                var,
                ..
            } => var_matches(var) && (principal_may_be(tar, j) || declared_group),
            Activity::Group {
                undo: false,
                kind: GroupKind::Act(_),
                tar,
                var,
                ..
            } => var_matches(var) && principal_may_be(tar, j),
            Activity::Alias { name, tar, var, .. } => {
                let alias = pa.aliases.get(name);
                let grouping = alias.is_none_or(|al| al.polarity == Polarity::Group);
                let has = alias.is_none_or(|al| al.include_has);
                var_matches(var)
                    && grouping
                    && (principal_may_be(tar, j) || (has && declared_group))
            }
            Activity::Act {
                form: form @ (ActForm::Act1 | ActForm::Act2),
                action,
                by,
                tar,
                var,
            } if var_matches(var) => {
                let concrete = Variable {
                    id: x.id.clone(),
                    ..var.clone()
                };
                let performers: Vec<&UserId> = candidates
                    .iter()
                    .filter(|u| principal_may_be(by, u))
                    .collect();
                let targets: Vec<&UserId> = match tar {
                    Some(p) => candidates
                        .iter()
                        .filter(|u| principal_may_be(p, u))
                        .collect(),
                    None => vec![],
                };
                let owned: Vec<(UserId, PermState)> =
                    candidates.iter().map(|u| (u.clone(), perms(u))).collect();
                let lookup = |u: &UserId| owned.iter().find(|(w, _)| w == u).map(|(_, p)| p);
                performers.iter().any(|i| {
                    if *form == ActForm::Act1 {
                        have_act1_set(i, &concrete, action, lookup).contains(j)
                    } else {
                        targets
                            .iter()
                            .any(|t| have_act2_set(i, t, &concrete, action, lookup).contains(j))
                    }
                })
            }
            _ => false,
        };
        if blocks {
            out.push(a.clone());
        }
    }
    out
}

/// Result of semantic evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SemanticVerdict {
    pub holds: bool,
    /// The enumeration was cut off by the length bound, so universal claims
    /// are only established up to it.
    pub bounded: bool,
}

/// Evaluate `φ` over `S(PA)` restricted to the universe and trace bound.
pub fn eval_semantic(
    pa: &Architecture,
    phi: &HasProperty,
    max_len: usize,
    universe: &Universe,
    max_states: usize,
) -> Result<SemanticVerdict, LogicError> {
    let mut u = universe.clone();
    u.users.extend(phi.atoms().into_iter().map(|(u, _)| u));
    let e = enumerate_states(pa, max_len, &u, max_states)?;
    Ok(eval_on(&e, phi))
}

/// Evaluate `φ` over an already enumerated state set.
pub fn eval_on(e: &Enumeration, phi: &HasProperty) -> SemanticVerdict {
    SemanticVerdict {
        holds: holds(&e.states, phi),
        bounded: !e.complete,
    }
}

fn holds(states: &BTreeSet<GlobalState>, phi: &HasProperty) -> bool {
    let var_of =
        |s: &GlobalState, u: &UserId, x: &Variable| s.value(u, &Term::Var(x.clone())).cloned();
    match phi {
        HasProperty::Has { user, var, time } => states.iter().any(|s| {
            s.user(user).and_then(UserState::time) == Some(*time)
                && var_of(s, user, var).is_some_and(|v| v.completely_defined())
        }),
        HasProperty::HasNot { user, var, time } => states.iter().any(|s| {
            s.user(user).and_then(UserState::time) == Some(*time) && var_of(s, user, var).is_none()
        }),
        HasProperty::HasNever { user, var } => {
            states.iter().all(|s| var_of(s, user, var).is_none())
        }
        HasProperty::HasSp(x) => states.iter().any(|s| sp_has(s, x)),
        HasProperty::And(a, b) => holds(states, a) && holds(states, b),
    }
}

fn sp_has(s: &GlobalState, x: &Variable) -> bool {
    let Some(UserState::Active { vars, .. }) = s.user(&UserId::sp()) else {
        return false;
    };
    if vars
        .get(&Term::Var(x.clone()))
        .is_some_and(Value::completely_defined)
    {
        return true;
    }
    vars.iter().any(|(t, v)| match (t, v) {
        (Term::Func(FuncName::Enc, targs), Value::Func(FuncName::Enc, vargs)) => {
            matches!(targs.as_slice(), [Term::Var(y), Term::Key(k)] if y == x
                && matches!(vargs.as_slice(), [vx, vk] if vx.completely_defined()
                    && vars.get(&Term::Key(k.clone())) == Some(vk)))
        }
        _ => false,
    })
}

/// Indented rule tree.
pub fn render_derivation(r: &DeductionResult) -> String {
    let mut out = String::new();
    render_into(r, 0, &mut out);
    out
}

fn render_into(r: &DeductionResult, depth: usize, out: &mut String) {
    let pad = "  ".repeat(depth);
    let verdict = if r.derivable() {
        "derivable"
    } else {
        "not derivable"
    };
    out.push_str(&format!("{pad}{}: {verdict}\n", r.property));
    for s in &r.steps {
        out.push_str(&format!("{pad}  by {}\n", s.rule));
        for a in &s.activities {
            out.push_str(&format!(
                "{pad}    activity {}\n",
                crate::dsl::render_activity(a)
            ));
        }
        for (k, e) in &s.events {
            out.push_str(&format!(
                "{pad}    event {k}: {}\n",
                crate::dsl::render_arch_event(e)
            ));
        }
    }
    for c in &r.conjuncts {
        render_into(c, depth + 1, out);
    }
}
