//! The architecture language: terms, activities, permission tables,
//! architecture-level events and their state semantics.

mod enumerate;
mod event;
mod state;

pub use enumerate::{
    enumerate_states, instances, max_states_from_env, EnumerateError, Enumeration, Universe,
    DEFAULT_MAX_STATES,
};
pub use event::{is_compatible, ArchEvent, ArchEventKind, BoundTerm, Compatibility};
pub use state::{
    apply_arch_event, apply_arch_event_traced, is_trace_consistent, run_arch_trace, ArchError,
    ArchStep, GlobalState, PermState, Record, UserState,
};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::model::{ActionId, DataId, GroupAlias, Principal, Time, TypeName, UserId, UserSet};

/// The id position of a variable: a constant `ck` or an index variable `xk`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Index {
    Const(DataId),
    Var(String),
}

impl fmt::Display for Index {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Index::Const(c) => write!(f, "{c}"),
            Index::Var(v) => write!(f, "?{v}"),
        }
    }
}

/// `X^{ow,ds}_{id}`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Variable {
    pub ow: UserId,
    pub ds: UserSet,
    pub id: Index,
}

impl Variable {
    pub fn new(ow: impl Into<UserId>, ds: UserSet, id: impl Into<DataId>) -> Self {
        Self {
            ow: ow.into(),
            ds,
            id: Index::Const(id.into()),
        }
    }

    pub fn is_concrete(&self) -> bool {
        matches!(self.id, Index::Const(_))
    }

    pub fn data_id(&self) -> Option<&DataId> {
        match &self.id {
            Index::Const(c) => Some(c),
            Index::Var(_) => None,
        }
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "X{{ow={}, ds={{", self.ow)?;
        for (k, u) in self.ds.iter().enumerate() {
            if k > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{u}")?;
        }
        write!(f, "}}, id={}}}", self.id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FuncName {
    Enc,
    Hash,
    Sig,
}

impl FuncName {
    pub fn as_str(self) -> &'static str {
        match self {
            FuncName::Enc => "enc",
            FuncName::Hash => "hash",
            FuncName::Sig => "sig",
        }
    }

    /// Fixed arity, where the function has one.
    pub fn arity(self) -> Option<usize> {
        match self {
            FuncName::Enc => Some(2),
            FuncName::Hash | FuncName::Sig => None,
        }
    }
}

impl fmt::Display for FuncName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Var(Variable),
    /// `X^owner_key`.
    Key(UserId),
    Func(FuncName, Vec<Term>),
    /// `D^{ow,ds}_{id}` with its constant value.
    Const(Variable, String),
}

impl Term {
    /// Every variable occurring in the term.
    pub fn variables(&self) -> Vec<&Variable> {
        match self {
            Term::Var(v) | Term::Const(v, _) => vec![v],
            Term::Key(_) => vec![],
            Term::Func(_, args) => args.iter().flat_map(|a| a.variables()).collect(),
        }
    }

    pub fn is_concrete(&self) -> bool {
        self.variables().iter().all(|v| v.is_concrete())
    }

    /// TYPE(T): data variables take their datum's type (or `Data` when the
    /// table has none), keys are `Key`, functions compose their argument
    /// types.
    pub fn type_of(&self, types: &BTreeMap<DataId, TypeName>) -> TypeName {
        match self {
            Term::Var(v) | Term::Const(v, _) => v
                .data_id()
                .and_then(|id| types.get(id).cloned())
                .unwrap_or_else(|| TypeName::new("Data")),
            Term::Key(_) => TypeName::new("Key"),
            Term::Func(name, args) => {
                let inner: Vec<String> =
                    args.iter().map(|a| a.type_of(types).to_string()).collect();
                TypeName::new(format!("{name}({})", inner.join(",")))
            }
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => write!(f, "{v}"),
            Term::Key(u) => write!(f, "key[{u}]"),
            Term::Func(name, args) => {
                write!(f, "{name}(")?;
                for (k, a) in args.iter().enumerate() {
                    if k > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
            Term::Const(v, value) => write!(f, "D{} = {value:?}", &v.to_string()[1..]),
        }
    }
}

/// Values bound to terms. `Bot` only ever appears nested inside a function
/// value; a top-level ⊥ binding is represented by absence.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Value {
    Atom(String),
    Func(FuncName, Vec<Value>),
    Bot,
}

impl Value {
    pub fn atom(s: impl Into<String>) -> Self {
        Value::Atom(s.into())
    }

    /// No ⊥ anywhere inside.
    pub fn completely_defined(&self) -> bool {
        match self {
            Value::Atom(_) => true,
            Value::Bot => false,
            Value::Func(_, args) => args.iter().all(Value::completely_defined),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Atom(s) => write!(f, "{s:?}"),
            Value::Bot => f.write_str("bot"),
            Value::Func(name, args) => {
                write!(f, "{name}(")?;
                for (k, a) in args.iter().enumerate() {
                    if k > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ActForm {
    Act1,
    UnAct1,
    Act2,
    UnAct2,
}

impl ActForm {
    pub fn is_binary(self) -> bool {
        matches!(self, ActForm::Act2 | ActForm::UnAct2)
    }

    pub fn is_revoke(self) -> bool {
        matches!(self, ActForm::UnAct1 | ActForm::UnAct2)
    }

    pub fn name(self) -> &'static str {
        match self {
            ActForm::Act1 => "Act1",
            ActForm::UnAct1 => "UnAct1",
            ActForm::Act2 => "Act2",
            ActForm::UnAct2 => "UnAct2",
        }
    }
}

/// The permission group a group activity edits: `G^can_act` or
/// `G^group_has`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GroupKind {
    Act(ActionId),
    Has,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Activity {
    Own {
        by: Principal,
        term: Term,
    },
    /// `Possess_sp(T)` for a variable, key or function term.
    Possess {
        term: Term,
    },
    /// `Possess_sp(X), X ∈ {…}`.
    PossessOneOf {
        vars: BTreeSet<Variable>,
    },
    Group {
        undo: bool,
        kind: GroupKind,
        by: Principal,
        tar: Principal,
        var: Variable,
    },
    /// A named bundle of group activities (e.g. `AddFriends`).
    Alias {
        name: String,
        by: Principal,
        tar: Principal,
        var: Variable,
    },
    DeleteReq {
        by: Principal,
        var: Variable,
    },
    Delete {
        var: Variable,
        dd: Time,
    },
    Act {
        form: ActForm,
        action: ActionId,
        by: Principal,
        tar: Option<Principal>,
        var: Variable,
    },
}

impl Activity {
    /// The variable(s) the activity is about.
    pub fn variables(&self) -> Vec<&Variable> {
        match self {
            Activity::Own { term, .. } | Activity::Possess { term } => term.variables(),
            Activity::PossessOneOf { vars } => vars.iter().collect(),
            Activity::Group { var, .. }
            | Activity::Alias { var, .. }
            | Activity::DeleteReq { var, .. }
            | Activity::Delete { var, .. }
            | Activity::Act { var, .. } => vec![var],
        }
    }

    pub fn principals(&self) -> Vec<&Principal> {
        match self {
            Activity::Own { by, .. } | Activity::DeleteReq { by, .. } => vec![by],
            Activity::Group { by, tar, .. } | Activity::Alias { by, tar, .. } => vec![by, tar],
            Activity::Act { by, tar, .. } => std::iter::once(by).chain(tar.as_ref()).collect(),
            Activity::Possess { .. } | Activity::PossessOneOf { .. } | Activity::Delete { .. } => {
                vec![]
            }
        }
    }
}

/// Who granted a permission entry: a specific user, or every user alike.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Grantor {
    Any,
    User(UserId),
}

impl Grantor {
    pub fn covers(&self, u: &UserId) -> bool {
        match self {
            Grantor::Any => true,
            Grantor::User(g) => g == u,
        }
    }
}

/// `G^can_act`, `G^by_has(·, {subject})`, `G^been_has(·, {subject})` or
/// `G^group_has`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PermKey {
    Can(ActionId),
    By(ActionId, UserId),
    Been(ActionId, UserId),
    Group,
}

/// One declared permission table cell.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PermSlot {
    pub grantor: Grantor,
    pub key: PermKey,
    pub var: Variable,
}

/// A set of activities with the permission tables that initialise user
/// permission states, the revoke pairing and the group aliases in use.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Architecture {
    pub activities: BTreeSet<Activity>,
    pub permissions: BTreeMap<PermSlot, UserSet>,
    /// revoke action -> action it revokes
    pub revokes: BTreeMap<ActionId, ActionId>,
    pub aliases: BTreeMap<String, GroupAlias>,
}

impl Architecture {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, a: Activity) -> bool {
        self.activities.insert(a)
    }

    /// Adds users to a permission cell (union with what is there).
    pub fn grant(&mut self, slot: PermSlot, users: impl IntoIterator<Item = UserId>) {
        self.permissions.entry(slot).or_default().extend(users);
    }

    pub fn is_empty(&self) -> bool {
        self.activities.is_empty()
            && self.permissions.is_empty()
            && self.revokes.is_empty()
            && self.aliases.is_empty()
    }

    /// Every concrete user named anywhere in the architecture.
    pub fn users(&self) -> UserSet {
        let mut out = UserSet::new();
        let add_var = |v: &Variable, out: &mut UserSet| {
            out.insert(v.ow.clone());
            out.extend(v.ds.iter().cloned());
        };
        for a in &self.activities {
            for p in a.principals() {
                if let Principal::User(u) = p {
                    out.insert(u.clone());
                }
            }
            for v in a.variables() {
                add_var(v, &mut out);
            }
            if let Activity::Own {
                term: Term::Key(u), ..
            }
            | Activity::Possess { term: Term::Key(u) } = a
            {
                out.insert(u.clone());
            }
        }
        for (slot, set) in &self.permissions {
            if let Grantor::User(u) = &slot.grantor {
                out.insert(u.clone());
            }
            if let PermKey::By(_, u) | PermKey::Been(_, u) = &slot.key {
                out.insert(u.clone());
            }
            add_var(&slot.var, &mut out);
            out.extend(set.iter().cloned());
        }
        out
    }

    /// Declared permissions as seen by `user`'s initial permission state.
    pub fn initial_permissions(&self, user: &UserId) -> PermState {
        let mut p = PermState::new();
        for (slot, set) in &self.permissions {
            if slot.grantor.covers(user) {
                p.entry((slot.key.clone(), slot.var.clone()))
                    .or_default()
                    .extend(set.iter().cloned());
            }
        }
        p
    }

    /// Consistency: each variable (or key) has at most one owning principal.
    /// Returns the offending terms.
    pub fn inconsistencies(&self) -> Vec<Term> {
        let mut owners: BTreeMap<&Term, BTreeSet<&Principal>> = BTreeMap::new();
        for a in &self.activities {
            if let Activity::Own { by, term } = a {
                owners.entry(term).or_default().insert(by);
            }
        }
        owners
            .into_iter()
            .filter(|(_, o)| o.len() > 1)
            .map(|(t, _)| t.clone())
            .collect()
    }
}

/// `(true, None)` when consistent, otherwise the first duplicated variable.
pub fn is_consistent(pa: &Architecture) -> (bool, Option<Term>) {
    let bad = pa.inconsistencies();
    (bad.is_empty(), bad.into_iter().next())
}

/// `Have_Act1_i = G^by_has(U_i,{U_i},X) ∩ G^by_has(U_ow,{U_i},X)`,
/// where `perms_of(u)` yields user `u`'s permission state.
pub fn have_act1_set<'a>(
    i: &UserId,
    x: &Variable,
    action: &ActionId,
    perms_of: impl Fn(&UserId) -> Option<&'a PermState>,
) -> UserSet {
    let by = |grantor: &UserId| {
        lookup(
            perms_of(grantor),
            &PermKey::By(action.clone(), i.clone()),
            x,
        )
    };
    by(i).intersection(&by(&x.ow)).cloned().collect()
}

/// The six-way intersection of the by/been grants of `U_i`,
/// `U_ow` and `U_tar`.
pub fn have_act2_set<'a>(
    i: &UserId,
    tar: &UserId,
    x: &Variable,
    action: &ActionId,
    perms_of: impl Fn(&UserId) -> Option<&'a PermState>,
) -> UserSet {
    let by_key = PermKey::By(action.clone(), i.clone());
    let been_key = PermKey::Been(action.clone(), tar.clone());
    let mut acc: Option<UserSet> = None;
    for grantor in [i, &x.ow, tar] {
        for key in [&by_key, &been_key] {
            let s = lookup(perms_of(grantor), key, x);
            acc = Some(match acc {
                None => s,
                Some(a) => a.intersection(&s).cloned().collect(),
            });
        }
    }
    acc.unwrap_or_default()
}

fn lookup(p: Option<&PermState>, key: &PermKey, x: &Variable) -> UserSet {
    p.and_then(|p| p.get(&(key.clone(), x.clone())))
        .cloned()
        .unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn users(xs: &[&str]) -> UserSet {
        xs.iter().map(|x| UserId::from(*x)).collect()
    }

    fn x() -> Variable {
        Variable::new("alice", users(&["alice"]), "photo1")
    }

    fn perms(entries: &[(PermKey, &[&str])]) -> PermState {
        entries
            .iter()
            .map(|(k, s)| ((k.clone(), x()), users(s)))
            .collect()
    }

    #[test]
    fn have_act1_intersects_performer_and_owner_grants() {
        let by =
            |s: &'static [&'static str]| perms(&[(PermKey::By("like".into(), "bob".into()), s)]);
        let bob = by(&["bob", "carol"]);
        let alice = by(&["carol"]);
        let f = |u: &UserId| match u.as_str() {
            "bob" => Some(&bob),
            "alice" => Some(&alice),
            _ => None,
        };
        assert_eq!(
            have_act1_set(&"bob".into(), &x(), &"like".into(), f),
            users(&["carol"])
        );
    }

    #[test]
    fn have_act1_empty_when_owner_grants_nothing() {
        let bob = perms(&[(PermKey::By("like".into(), "bob".into()), &["carol"])]);
        let f = |u: &UserId| (u.as_str() == "bob").then_some(&bob);
        assert!(have_act1_set(&"bob".into(), &x(), &"like".into(), f).is_empty());
    }

    #[test]
    fn have_act2_is_six_way() {
        let full = perms(&[
            (PermKey::By("tag".into(), "bob".into()), &["carol", "dave"]),
            (
                PermKey::Been("tag".into(), "erin".into()),
                &["carol", "dave"],
            ),
        ]);
        let narrow = perms(&[
            (PermKey::By("tag".into(), "bob".into()), &["carol", "dave"]),
            (PermKey::Been("tag".into(), "erin".into()), &["dave"]),
        ]);
        let f = |u: &UserId| match u.as_str() {
            "erin" => Some(&narrow),
            _ => Some(&full),
        };
        assert_eq!(
            have_act2_set(&"bob".into(), &"erin".into(), &x(), &"tag".into(), f),
            users(&["dave"])
        );
        let g = |u: &UserId| (u.as_str() != "erin").then_some(&full);
        assert!(have_act2_set(&"bob".into(), &"erin".into(), &x(), &"tag".into(), g).is_empty());
    }

    #[test]
    fn consistency_flags_two_owners() {
        let mut pa = Architecture::new();
        assert!(is_consistent(&pa).0);
        pa.insert(Activity::Own {
            by: Principal::user("alice"),
            term: Term::Var(x()),
        });
        assert!(is_consistent(&pa).0);
        pa.insert(Activity::Own {
            by: Principal::user("bob"),
            term: Term::Var(x()),
        });
        assert_eq!(is_consistent(&pa), (false, Some(Term::Var(x()))));
    }

    #[test]
    fn completely_defined_sees_nested_bot() {
        let v = Value::Func(FuncName::Enc, vec![Value::atom("v"), Value::Bot]);
        assert!(!v.completely_defined());
        assert!(Value::atom("v").completely_defined());
    }
}
