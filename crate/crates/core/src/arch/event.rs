//! Architecture-level events and their matching against activities.

use std::collections::BTreeMap;

use super::{ActForm, Activity, Architecture, FuncName, GroupKind, Index, Term, Value, Variable};
use crate::model::{ActionId, DataId, Principal, Time, UserId};

/// A term with values bound at its leaves, as carried by `possess` events.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BoundTerm {
    Var(Variable, Value),
    Key(UserId, Value),
    Func(FuncName, Vec<BoundTerm>),
    Const(Variable, String),
}

impl BoundTerm {
    /// The term with values stripped.
    pub fn term(&self) -> Term {
        match self {
            BoundTerm::Var(v, _) => Term::Var(v.clone()),
            BoundTerm::Key(u, _) => Term::Key(u.clone()),
            BoundTerm::Func(f, args) => Term::Func(*f, args.iter().map(BoundTerm::term).collect()),
            BoundTerm::Const(v, c) => Term::Const(v.clone(), c.clone()),
        }
    }

    pub fn value(&self) -> Value {
        match self {
            BoundTerm::Var(_, v) | BoundTerm::Key(_, v) => v.clone(),
            BoundTerm::Func(f, args) => {
                Value::Func(*f, args.iter().map(BoundTerm::value).collect())
            }
            BoundTerm::Const(_, c) => Value::Atom(c.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ArchEventKind {
    /// `own_i(T:V)`; `T` is a variable or a key.
    Own {
        by: UserId,
        term: Term,
        value: Value,
    },
    Possess {
        bound: BoundTerm,
    },
    Group {
        undo: bool,
        kind: GroupKind,
        by: UserId,
        tar: UserId,
        var: Variable,
        /// Only group-has events may carry the datum's value.
        value: Option<Value>,
    },
    Alias {
        name: String,
        by: UserId,
        tar: UserId,
        var: Variable,
        value: Option<Value>,
    },
    DeleteReq {
        by: UserId,
        var: Variable,
        value: Value,
    },
    Delete {
        var: Variable,
        value: Value,
    },
    Act {
        form: ActForm,
        action: ActionId,
        by: UserId,
        tar: Option<UserId>,
        var: Variable,
        value: Value,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ArchEvent {
    pub kind: ArchEventKind,
    pub time: Time,
}

impl ArchEvent {
    pub fn new(kind: ArchEventKind, time: Time) -> Self {
        Self { kind, time }
    }

    /// Users that take part in the event as actor or target.
    pub fn involved(&self) -> Vec<UserId> {
        match &self.kind {
            ArchEventKind::Own { by, .. } | ArchEventKind::DeleteReq { by, .. } => vec![by.clone()],
            ArchEventKind::Possess { .. } | ArchEventKind::Delete { .. } => vec![UserId::sp()],
            ArchEventKind::Group { by, tar, .. } | ArchEventKind::Alias { by, tar, .. } => {
                vec![by.clone(), tar.clone()]
            }
            ArchEventKind::Act { by, tar, .. } => {
                std::iter::once(by.clone()).chain(tar.clone()).collect()
            }
        }
    }

    /// The data variable the event concerns, when it has exactly one.
    pub fn variable(&self) -> Option<&Variable> {
        match &self.kind {
            ArchEventKind::Own {
                term: Term::Var(v), ..
            } => Some(v),
            ArchEventKind::Possess {
                bound: BoundTerm::Var(v, _),
            } => Some(v),
            ArchEventKind::Group { var, .. }
            | ArchEventKind::Alias { var, .. }
            | ArchEventKind::DeleteReq { var, .. }
            | ArchEventKind::Delete { var, .. }
            | ArchEventKind::Act { var, .. } => Some(var),
            _ => None,
        }
    }

    /// Does this event instantiate the activity?
    pub fn instantiates(&self, activity: &Activity) -> bool {
        let mut b = Bindings::default();
        match (&self.kind, activity) {
            (ArchEventKind::Own { by, term, .. }, Activity::Own { by: p, term: t }) => {
                b.principal(p, by) && b.term(t, term)
            }
            (ArchEventKind::Possess { bound }, Activity::Possess { term }) => {
                b.term(term, &bound.term())
            }
            (
                ArchEventKind::Possess {
                    bound: BoundTerm::Var(v, _),
                },
                Activity::PossessOneOf { vars },
            ) => vars.iter().any(|p| Bindings::default().var(p, v)),
            (
                ArchEventKind::Group {
                    undo,
                    kind,
                    by,
                    tar,
                    var,
                    value,
                },
                Activity::Group {
                    undo: u2,
                    kind: k2,
                    by: p1,
                    tar: p2,
                    var: v2,
                },
            ) => {
                undo == u2
                    && kind == k2
                    && (value.is_none() || *kind == GroupKind::Has)
                    && b.principal(p1, by)
                    && b.principal(p2, tar)
                    && b.var(v2, var)
            }
            (
                ArchEventKind::Alias {
                    name, by, tar, var, ..
                },
                Activity::Alias {
                    name: n2,
                    by: p1,
                    tar: p2,
                    var: v2,
                },
            ) => name == n2 && b.principal(p1, by) && b.principal(p2, tar) && b.var(v2, var),
            (ArchEventKind::DeleteReq { by, var, .. }, Activity::DeleteReq { by: p, var: v2 }) => {
                b.principal(p, by) && b.var(v2, var)
            }
            (ArchEventKind::Delete { var, .. }, Activity::Delete { var: v2, .. }) => b.var(v2, var),
            (
                ArchEventKind::Act {
                    form,
                    action,
                    by,
                    tar,
                    var,
                    ..
                },
                Activity::Act {
                    form: f2,
                    action: a2,
                    by: p1,
                    tar: p2,
                    var: v2,
                },
            ) => {
                form == f2
                    && action == a2
                    && b.principal(p1, by)
                    && match (p2, tar) {
                        (None, None) => true,
                        (Some(p), Some(t)) => b.principal(p, t),
                        _ => false,
                    }
                    && b.var(v2, var)
            }
            _ => false,
        }
    }
}

/// Consistent instantiation of index variables while matching one activity.
#[derive(Debug, Default)]
struct Bindings {
    users: BTreeMap<String, UserId>,
    ids: BTreeMap<String, DataId>,
}

impl Bindings {
    fn principal(&mut self, pat: &Principal, u: &UserId) -> bool {
        match pat {
            Principal::User(p) => p == u,
            Principal::Var(name) => match self.users.get(name) {
                Some(bound) => bound == u,
                None => {
                    self.users.insert(name.clone(), u.clone());
                    true
                }
            },
        }
    }

    fn var(&mut self, pat: &Variable, v: &Variable) -> bool {
        if pat.ow != v.ow || pat.ds != v.ds {
            return false;
        }
        match (&pat.id, &v.id) {
            (Index::Const(a), Index::Const(b)) => a == b,
            (Index::Var(name), Index::Const(c)) => match self.ids.get(name) {
                Some(bound) => bound == c,
                None => {
                    self.ids.insert(name.clone(), c.clone());
                    true
                }
            },
            (_, Index::Var(_)) => false,
        }
    }

    fn term(&mut self, pat: &Term, t: &Term) -> bool {
        match (pat, t) {
            (Term::Var(p), Term::Var(v)) => self.var(p, v),
            (Term::Key(a), Term::Key(b)) => a == b,
            (Term::Func(f, ps), Term::Func(g, ts)) => {
                f == g && ps.len() == ts.len() && ps.iter().zip(ts).all(|(p, t)| self.term(p, t))
            }
            (Term::Const(p, a), Term::Const(v, b)) => a == b && self.var(p, v),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Compatibility {
    pub compatible: bool,
    /// 1-based index of the first event no activity admits.
    pub first_incompatible: Option<usize>,
}

/// Every event must instantiate some activity of the architecture.
pub fn is_compatible(trace: &[ArchEvent], pa: &Architecture) -> Compatibility {
    let first = trace
        .iter()
        .position(|e| !pa.activities.iter().any(|a| e.instantiates(a)))
        .map(|k| k + 1);
    Compatibility {
        compatible: first.is_none(),
        first_incompatible: first,
    }
}
