//! Bounded enumeration of the reachable states `S(PA)`.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use thiserror::Error;

use super::event::{ArchEvent, ArchEventKind, BoundTerm};
use super::state::{apply_arch_event, GlobalState};
use super::{Activity, Architecture, GroupKind, Index, Term, Value, Variable};
use crate::model::{DataId, Principal, Time, UserId, UserSet};

pub const DEFAULT_MAX_STATES: usize = 1_000_000;

/// The explosion guard: `DATACTL_MAX_STATES` when set and valid, else the
/// default.
pub fn max_states_from_env() -> usize {
    std::env::var("DATACTL_MAX_STATES")
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or(DEFAULT_MAX_STATES)
}

/// The finite domain traces are drawn from.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Universe {
    /// Users beyond those the architecture names.
    pub users: UserSet,
    pub values: Vec<Value>,
    /// Event times; traces use them in strictly increasing order.
    pub times: Vec<Time>,
    /// Constants substituted for index variables.
    pub ids: Vec<DataId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Enumeration {
    pub states: BTreeSet<GlobalState>,
    /// No trace longer than the bound could reach anything new: the state
    /// set is exact for the universe, not just up to the bound.
    pub complete: bool,
    /// Distinct (state, last time) nodes explored.
    pub explored: usize,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EnumerateError {
    #[error("state limit of {limit} exceeded")]
    LimitExceeded { limit: usize },
}

/// All states reachable from `Init^PA` by consistent, compatible traces of
/// length at most `max_len` over the universe.
pub fn enumerate_states(
    pa: &Architecture,
    max_len: usize,
    universe: &Universe,
    max_states: usize,
) -> Result<Enumeration, EnumerateError> {
    let init = GlobalState::init(pa, universe.users.iter().cloned());
    let users: Vec<UserId> = init.users.keys().cloned().collect();
    let kinds = instances(pa, &users, universe);
    let mut times = universe.times.clone();
    times.sort_unstable();
    times.dedup();

    let mut visited: HashSet<(GlobalState, Option<Time>)> = HashSet::new();
    let mut states: HashSet<GlobalState> = HashSet::new();
    visited.insert((init.clone(), None));
    states.insert(init.clone());
    let mut frontier = vec![(init, None::<Time>)];
    let mut depth = 0;
    while !frontier.is_empty() && depth < max_len {
        let mut next = Vec::new();
        for (sigma, last) in &frontier {
            for &t in times.iter().filter(|&&t| last.is_none_or(|l| t > l)) {
                for kind in &kinds {
                    let ev = ArchEvent::new(kind.clone(), t);
                    let Ok(s) = apply_arch_event(pa, sigma, &ev) else {
                        continue;
                    };
                    let node = (s, Some(t));
                    if visited.contains(&node) {
                        continue;
                    }
                    if visited.len() >= max_states {
                        return Err(EnumerateError::LimitExceeded { limit: max_states });
                    }
                    states.insert(node.0.clone());
                    visited.insert(node.clone());
                    next.push(node);
                }
            }
        }
        frontier = next;
        depth += 1;
    }
    Ok(Enumeration {
        states: states.into_iter().collect(),
        complete: frontier.is_empty(),
        explored: visited.len(),
    })
}

/// Every time-less event instantiating some activity of `pa` over `users`
/// and the universe, deduplicated and in a fixed order.
pub fn instances(pa: &Architecture, users: &[UserId], universe: &Universe) -> Vec<ArchEventKind> {
    let mut out = BTreeSet::new();
    for a in &pa.activities {
        for (pb, ib) in bindings(a, users, &universe.ids) {
            instantiate(pa, a, &pb, &ib, universe, &mut out);
        }
    }
    out.into_iter().collect()
}

type PrincipalBinding = BTreeMap<String, UserId>;
type IndexBinding = BTreeMap<String, DataId>;

fn bindings(
    a: &Activity,
    users: &[UserId],
    ids: &[DataId],
) -> Vec<(PrincipalBinding, IndexBinding)> {
    let pvars: BTreeSet<&String> = a
        .principals()
        .into_iter()
        .filter_map(|p| match p {
            Principal::Var(n) => Some(n),
            Principal::User(_) => None,
        })
        .collect();
    let ivars: BTreeSet<&String> = a
        .variables()
        .into_iter()
        .filter_map(|v| match &v.id {
            Index::Var(n) => Some(n),
            Index::Const(_) => None,
        })
        .collect();
    let mut acc = vec![(PrincipalBinding::new(), IndexBinding::new())];
    for n in pvars {
        acc = acc
            .into_iter()
            .flat_map(|(pb, ib)| {
                users.iter().map(move |u| {
                    let mut pb = pb.clone();
                    pb.insert(n.clone(), u.clone());
                    (pb, ib.clone())
                })
            })
            .collect();
    }
    for n in ivars {
        acc = acc
            .into_iter()
            .flat_map(|(pb, ib)| {
                ids.iter().map(move |c| {
                    let mut ib = ib.clone();
                    ib.insert(n.clone(), c.clone());
                    (pb.clone(), ib)
                })
            })
            .collect();
    }
    acc
}

fn instantiate(
    pa: &Architecture,
    a: &Activity,
    pb: &PrincipalBinding,
    ib: &IndexBinding,
    universe: &Universe,
    out: &mut BTreeSet<ArchEventKind>,
) {
    let user = |p: &Principal| match p {
        Principal::User(u) => u.clone(),
        Principal::Var(n) => pb[n].clone(),
    };
    let var = |v: &Variable| match &v.id {
        Index::Const(_) => v.clone(),
        Index::Var(n) => Variable {
            id: Index::Const(ib[n].clone()),
            ..v.clone()
        },
    };
    let values = &universe.values;
    match a {
        Activity::Own { by, term } => {
            let by = user(by);
            let term = subst_term(term, &var);
            if let Term::Var(x) = &term {
                if x.ow != by {
                    return;
                }
            }
            for v in values {
                out.insert(ArchEventKind::Own {
                    by: by.clone(),
                    term: term.clone(),
                    value: v.clone(),
                });
            }
        }
        Activity::Possess { term } => {
            for bound in bind_term(&subst_term(term, &var), values) {
                out.insert(ArchEventKind::Possess { bound });
            }
        }
        Activity::PossessOneOf { vars } => {
            for x in vars {
                for v in values {
                    out.insert(ArchEventKind::Possess {
                        bound: BoundTerm::Var(var(x), v.clone()),
                    });
                }
            }
        }
        Activity::Group {
            undo,
            kind,
            by,
            tar,
            var: x,
        } => {
            let mk = |value: Option<Value>| ArchEventKind::Group {
                undo: *undo,
                kind: kind.clone(),
                by: user(by),
                tar: user(tar),
                var: var(x),
                value,
            };
            out.insert(mk(None));
            if *kind == GroupKind::Has {
                for v in values {
                    out.insert(mk(Some(v.clone())));
                }
            }
        }
        Activity::Alias {
            name,
            by,
            tar,
            var: x,
        } => {
            let mk = |value: Option<Value>| ArchEventKind::Alias {
                name: name.clone(),
                by: user(by),
                tar: user(tar),
                var: var(x),
                value,
            };
            out.insert(mk(None));
            if pa.aliases.get(name).is_some_and(|al| al.include_has) {
                for v in values {
                    out.insert(mk(Some(v.clone())));
                }
            }
        }
        Activity::DeleteReq { by, var: x } => {
            for v in values {
                out.insert(ArchEventKind::DeleteReq {
                    by: user(by),
                    var: var(x),
                    value: v.clone(),
                });
            }
        }
        Activity::Delete { var: x, .. } => {
            for v in values {
                out.insert(ArchEventKind::Delete {
                    var: var(x),
                    value: v.clone(),
                });
            }
        }
        Activity::Act {
            form,
            action,
            by,
            tar,
            var: x,
        } => {
            for v in values {
                out.insert(ArchEventKind::Act {
                    form: *form,
                    action: action.clone(),
                    by: user(by),
                    tar: tar.as_ref().map(user),
                    var: var(x),
                    value: v.clone(),
                });
            }
        }
    }
}

fn subst_term(t: &Term, var: &impl Fn(&Variable) -> Variable) -> Term {
    match t {
        Term::Var(v) => Term::Var(var(v)),
        Term::Const(v, c) => Term::Const(var(v), c.clone()),
        Term::Key(u) => Term::Key(u.clone()),
        Term::Func(f, args) => Term::Func(*f, args.iter().map(|a| subst_term(a, var)).collect()),
    }
}

/// Every way of binding universe values to the leaves of a term.
fn bind_term(t: &Term, values: &[Value]) -> Vec<BoundTerm> {
    match t {
        Term::Var(v) => values
            .iter()
            .map(|x| BoundTerm::Var(v.clone(), x.clone()))
            .collect(),
        Term::Key(u) => values
            .iter()
            .map(|x| BoundTerm::Key(u.clone(), x.clone()))
            .collect(),
        Term::Const(v, c) => vec![BoundTerm::Const(v.clone(), c.clone())],
        Term::Func(f, args) => {
            let mut acc: Vec<Vec<BoundTerm>> = vec![vec![]];
            for a in args {
                let opts = bind_term(a, values);
                acc = acc
                    .into_iter()
                    .flat_map(|prefix| {
                        opts.iter().map(move |o| {
                            let mut p = prefix.clone();
                            p.push(o.clone());
                            p
                        })
                    })
                    .collect();
            }
            acc.into_iter()
                .map(|args| BoundTerm::Func(*f, args))
                .collect()
        }
    }
}
