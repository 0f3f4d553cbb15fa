//! Shared vocabulary: principals, actions, data references and their
//! data-control policies.
//!
//! A policy is attached to each datum and is the tuple
//! `(purposes, deletion, where, how, action policy, has policy)`. All lookups
//! into permission groups are total: a missing key reads as the empty set.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

/// Name of the distinguished service-provider principal.
pub const SP: &str = "sp";

/// Actions every model carries regardless of its activity sets.
pub const PREDEFINED_ACTIONS: [&str; 9] = [
    "own",
    "store",
    "use",
    "deletereq",
    "delete",
    "groupact",
    "ungroupact",
    "grouphas",
    "ungrouphas",
];

macro_rules! token_newtype {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(String);

        impl $name {
            pub fn new(s: impl Into<String>) -> Self {
                Self(s.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }
    };
}

token_newtype!(
    /// A principal. Equality is token equality; `sp` is the service provider.
    UserId
);
token_newtype!(ActionId);
token_newtype!(
    /// Unique identifier of a datum within a model.
    DataId
);
token_newtype!(TypeName);
token_newtype!(Purpose);

impl UserId {
    pub fn sp() -> Self {
        Self(SP.to_owned())
    }

    pub fn is_sp(&self) -> bool {
        self.0 == SP
    }
}

/// A principal position in an event or activity: either a concrete user or
/// an index variable (`?i`) standing for any user.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Principal {
    User(UserId),
    Var(String),
}

impl Principal {
    pub fn user(name: impl Into<String>) -> Self {
        Principal::User(UserId::new(name))
    }

    pub fn as_user(&self) -> Option<&UserId> {
        match self {
            Principal::User(u) => Some(u),
            Principal::Var(_) => None,
        }
    }

    pub fn is_var(&self) -> bool {
        matches!(self, Principal::Var(_))
    }
}

impl fmt::Display for Principal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Principal::User(u) => write!(f, "{u}"),
            Principal::Var(v) => write!(f, "?{v}"),
        }
    }
}

impl From<UserId> for Principal {
    fn from(u: UserId) -> Self {
        Principal::User(u)
    }
}

/// Abstract time. Units are left to the model author.
pub type Time = u64;

pub type UserSet = BTreeSet<UserId>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ActionKind {
    Unary,
    UnaryRevoke,
    Binary,
    BinaryRevoke,
    Predefined,
}

impl ActionKind {
    pub fn is_binary(self) -> bool {
        matches!(self, ActionKind::Binary | ActionKind::BinaryRevoke)
    }

    pub fn is_revoke(self) -> bool {
        matches!(self, ActionKind::UnaryRevoke | ActionKind::BinaryRevoke)
    }
}

/// The four service-specific activity sets and the revoke pairing between
/// them. Order of declaration is preserved.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ActivitySets {
    pub a1: Vec<ActionId>,
    pub ua1: Vec<ActionId>,
    pub a2: Vec<ActionId>,
    pub ua2: Vec<ActionId>,
    /// revoke action -> the action it revokes
    pub revokes: BTreeMap<ActionId, ActionId>,
}

impl ActivitySets {
    /// Adds a unary action together with its revoke counterpart.
    pub fn add_unary(&mut self, act: impl Into<ActionId>, unact: impl Into<ActionId>) {
        let (act, unact) = (act.into(), unact.into());
        self.a1.push(act.clone());
        self.ua1.push(unact.clone());
        self.revokes.insert(unact, act);
    }

    pub fn add_binary(&mut self, act: impl Into<ActionId>, unact: impl Into<ActionId>) {
        let (act, unact) = (act.into(), unact.into());
        self.a2.push(act.clone());
        self.ua2.push(unact.clone());
        self.revokes.insert(unact, act);
    }

    pub fn kind_of(&self, action: &ActionId) -> Option<ActionKind> {
        if self.a1.contains(action) {
            Some(ActionKind::Unary)
        } else if self.ua1.contains(action) {
            Some(ActionKind::UnaryRevoke)
        } else if self.a2.contains(action) {
            Some(ActionKind::Binary)
        } else if self.ua2.contains(action) {
            Some(ActionKind::BinaryRevoke)
        } else if PREDEFINED_ACTIONS.contains(&action.as_str()) {
            Some(ActionKind::Predefined)
        } else {
            None
        }
    }

    /// The positive action a revoke action undoes.
    pub fn revoked(&self, unact: &ActionId) -> Option<&ActionId> {
        self.revokes.get(unact)
    }

    /// The revoke counterpart of a positive action.
    pub fn revoker(&self, act: &ActionId) -> Option<&ActionId> {
        self.revokes.iter().find(|(_, a)| *a == act).map(|(u, _)| u)
    }

    /// A1 ∪ A2 in declaration order.
    pub fn positive(&self) -> impl Iterator<Item = &ActionId> {
        self.a1.iter().chain(self.a2.iter())
    }

    pub fn all(&self) -> impl Iterator<Item = &ActionId> {
        self.a1
            .iter()
            .chain(self.ua1.iter())
            .chain(self.a2.iter())
            .chain(self.ua2.iter())
    }

    pub fn is_empty(&self) -> bool {
        self.a1.is_empty() && self.ua1.is_empty() && self.a2.is_empty() && self.ua2.is_empty()
    }
}

/// The fixed part of a datum: `(ow, ds, type, id)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DataRef {
    pub ow: UserId,
    pub ds: UserSet,
    pub ty: TypeName,
    pub id: DataId,
}

/// Who performed, and who was the target of, each action on a datum.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ActBy {
    pub by: BTreeMap<ActionId, UserSet>,
    pub been: BTreeMap<ActionId, UserSet>,
}

impl ActBy {
    pub fn by(&self, action: &ActionId) -> UserSet {
        self.by.get(action).cloned().unwrap_or_default()
    }

    pub fn been(&self, action: &ActionId) -> UserSet {
        self.been.get(action).cloned().unwrap_or_default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Location {
    ClientLoc,
    SpLoc,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Location::ClientLoc => "clientloc",
            Location::SpLoc => "sploc",
        })
    }
}

/// Storage form: `(plain, none)`, `(enc, spkey)` or `(enc, clkey)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StorageForm {
    Plain,
    EncSpKey,
    EncClKey,
}

impl fmt::Display for StorageForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StorageForm::Plain => "plain",
            StorageForm::EncSpKey => "enc(spkey)",
            StorageForm::EncClKey => "enc(clkey)",
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StorageSpec {
    pub wh: BTreeSet<Location>,
    pub ho: BTreeSet<StorageForm>,
}

impl StorageSpec {
    /// True when storing places the datum in the service provider's reach:
    /// plaintext at sploc, or encrypted under the provider's key at sploc.
    pub fn sp_can_read(&self) -> bool {
        self.wh.contains(&Location::SpLoc)
            && (self.ho.contains(&StorageForm::Plain) || self.ho.contains(&StorageForm::EncSpKey))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DeletionMode {
    Man,
    Aut,
}

impl fmt::Display for DeletionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DeletionMode::Man => "man",
            DeletionMode::Aut => "aut",
        })
    }
}

/// `(mode, delay)` pairs. Kept as a list so duplicates can be reported.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DeletionSpec {
    pub entries: Vec<(DeletionMode, Time)>,
}

impl DeletionSpec {
    pub fn delay(&self, mode: DeletionMode) -> Option<Time> {
        self.entries
            .iter()
            .find(|(m, _)| *m == mode)
            .map(|(_, d)| *d)
    }

    pub fn manual_delay(&self) -> Option<Time> {
        self.delay(DeletionMode::Man)
    }

    /// Manual delay, falling back to the automatic one.
    pub fn effective_delay(&self) -> Option<Time> {
        self.manual_delay()
            .or_else(|| self.delay(DeletionMode::Aut))
    }
}

/// `G^can_act`: who may perform each action.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ActionPolicy {
    pub can: BTreeMap<ActionId, UserSet>,
}

impl ActionPolicy {
    pub fn can(&self, action: &ActionId) -> UserSet {
        self.can.get(action).cloned().unwrap_or_default()
    }

    pub fn allows(&self, action: &ActionId, user: &UserId) -> bool {
        self.can.get(action).is_some_and(|s| s.contains(user))
    }
}

/// `G^by_has`, `G^been_has` (per performer / per target) and `G^group_has`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HasPolicy {
    pub by: BTreeMap<ActionId, BTreeMap<UserId, UserSet>>,
    pub been: BTreeMap<ActionId, BTreeMap<UserId, UserSet>>,
    pub group: UserSet,
}

impl HasPolicy {
    pub fn by(&self, action: &ActionId, performer: &UserId) -> UserSet {
        self.by
            .get(action)
            .and_then(|m| m.get(performer))
            .cloned()
            .unwrap_or_default()
    }

    pub fn been(&self, action: &ActionId, target: &UserId) -> UserSet {
        self.been
            .get(action)
            .and_then(|m| m.get(target))
            .cloned()
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Policy {
    pub purposes: BTreeSet<Purpose>,
    pub deletion: DeletionSpec,
    pub storage: StorageSpec,
    pub acp: ActionPolicy,
    pub has: HasPolicy,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Datum {
    pub data: DataRef,
    pub policy: Policy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Polarity {
    Group,
    Ungroup,
}

/// A named bundle of group (or ungroup) events, e.g. `addfriends`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupAlias {
    pub name: String,
    pub polarity: Polarity,
    pub actions: Vec<ActionId>,
    pub include_has: bool,
}

/// A parsed policy file: activity sets, aliases and per-datum policies.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PolicyModel {
    pub sets: ActivitySets,
    pub aliases: Vec<GroupAlias>,
    pub data: BTreeMap<DataId, Datum>,
}

impl PolicyModel {
    pub fn datum(&self, id: &DataId) -> Option<&Datum> {
        self.data.get(id)
    }

    pub fn alias(&self, name: &str) -> Option<&GroupAlias> {
        self.aliases.iter().find(|a| a.name == name)
    }

    pub fn alias_for(&self, polarity: Polarity) -> Option<&GroupAlias> {
        self.aliases.iter().find(|a| a.polarity == polarity)
    }

    /// Every principal named anywhere in the model, plus `sp`.
    pub fn principals(&self) -> UserSet {
        let mut out = UserSet::new();
        out.insert(UserId::sp());
        for d in self.data.values() {
            out.insert(d.data.ow.clone());
            out.extend(d.data.ds.iter().cloned());
            let p = &d.policy;
            for s in p.acp.can.values() {
                out.extend(s.iter().cloned());
            }
            for m in p.has.by.values().chain(p.has.been.values()) {
                for (k, s) in m {
                    out.insert(k.clone());
                    out.extend(s.iter().cloned());
                }
            }
            out.extend(p.has.group.iter().cloned());
        }
        out
    }
}

/// A structural problem found by validation.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("action {0} has no revoke counterpart")]
    MissingRevoke(ActionId),
    #[error("revoke action {0} does not revoke a declared action")]
    DanglingRevoke(ActionId),
    #[error("revoke pairing of {0} crosses unary/binary sets")]
    MismatchedRevoke(ActionId),
    #[error("activity sets differ in size: {0}")]
    CardinalityMismatch(String),
    #[error("action {0} is declared more than once")]
    DuplicateAction(ActionId),
    #[error("action {0} clashes with a predefined action")]
    PredefinedClash(ActionId),
    #[error("undeclared action {0}")]
    UndeclaredAction(ActionId),
    #[error("has-{kind} grant for {action}: only {allowed} actions carry it")]
    MisplacedHasGrant {
        kind: &'static str,
        action: ActionId,
        allowed: &'static str,
    },
    #[error("storage location set (where) is empty")]
    EmptyWhere,
    #[error("storage form set (how) is empty")]
    EmptyHow,
    #[error("duplicate deletion mode {0}")]
    DuplicateDeletionMode(DeletionMode),
    #[error("alias {0}: {1}")]
    BadAlias(String, String),
    #[error("datum {0}: key does not match its id")]
    DataIdMismatch(DataId),
}

/// Checks the activity-set invariants: sizes match, revoke pairing is a
/// bijection within the unary and binary families, names are unique and
/// disjoint from the predefined names.
pub fn validate_activity_sets(sets: &ActivitySets) -> Vec<ModelError> {
    let mut errors = Vec::new();
    let mut seen = BTreeSet::new();
    for a in sets.all() {
        if !seen.insert(a) {
            errors.push(ModelError::DuplicateAction(a.clone()));
        }
        if PREDEFINED_ACTIONS.contains(&a.as_str()) {
            errors.push(ModelError::PredefinedClash(a.clone()));
        }
    }

    let check_family =
        |pos: &[ActionId], neg: &[ActionId], label: &str, errors: &mut Vec<ModelError>| {
            if pos.len() != neg.len() {
                errors.push(ModelError::CardinalityMismatch(format!(
                    "{label}: {} actions vs {} revokes",
                    pos.len(),
                    neg.len()
                )));
            }
            for act in pos {
                let paired: Vec<_> = sets.revokes.iter().filter(|(_, a)| *a == act).collect();
                match paired.as_slice() {
                    [] => errors.push(ModelError::MissingRevoke(act.clone())),
                    [(u, _)] if !neg.contains(u) => {
                        errors.push(ModelError::MismatchedRevoke(act.clone()))
                    }
                    [_] => {}
                    _ => errors.push(ModelError::DuplicateAction(act.clone())),
                }
            }
            for unact in neg {
                match sets.revokes.get(unact) {
                    None => errors.push(ModelError::DanglingRevoke(unact.clone())),
                    Some(a) if !pos.contains(a) => {
                        errors.push(ModelError::MismatchedRevoke(unact.clone()))
                    }
                    Some(_) => {}
                }
            }
        };
    check_family(&sets.a1, &sets.ua1, "unary", &mut errors);
    check_family(&sets.a2, &sets.ua2, "binary", &mut errors);
    for unact in sets.revokes.keys() {
        if !sets.ua1.contains(unact) && !sets.ua2.contains(unact) {
            errors.push(ModelError::DanglingRevoke(unact.clone()));
        }
    }
    errors
}

/// Checks a policy against the activity sets it is written over.
pub fn validate_policy(policy: &Policy, sets: &ActivitySets) -> Vec<ModelError> {
    let mut errors = Vec::new();
    for action in policy.acp.can.keys() {
        if sets.kind_of(action).is_none() {
            errors.push(ModelError::UndeclaredAction(action.clone()));
        }
    }
    for (kind, grants, binary_only) in [
        ("by", &policy.has.by, false),
        ("been", &policy.has.been, true),
    ] {
        for action in grants.keys() {
            match sets.kind_of(action) {
                None => errors.push(ModelError::UndeclaredAction(action.clone())),
                Some(ActionKind::Binary) => {}
                Some(ActionKind::Unary) if !binary_only => {}
                Some(_) => errors.push(ModelError::MisplacedHasGrant {
                    kind,
                    action: action.clone(),
                    allowed: if binary_only { "binary (A2)" } else { "A1/A2" },
                }),
            }
        }
    }
    if policy.storage.wh.is_empty() {
        errors.push(ModelError::EmptyWhere);
    }
    if policy.storage.ho.is_empty() {
        errors.push(ModelError::EmptyHow);
    }
    let mut modes = BTreeSet::new();
    for (mode, _) in &policy.deletion.entries {
        if !modes.insert(*mode) {
            errors.push(ModelError::DuplicateDeletionMode(*mode));
        }
    }
    errors
}

/// Validates a whole model: sets, aliases and every datum's policy.
pub fn validate_model(model: &PolicyModel) -> Vec<ModelError> {
    let mut errors = validate_activity_sets(&model.sets);
    for alias in &model.aliases {
        if PREDEFINED_ACTIONS.contains(&alias.name.as_str())
            || model
                .sets
                .kind_of(&ActionId::new(alias.name.clone()))
                .is_some()
        {
            errors.push(ModelError::BadAlias(
                alias.name.clone(),
                "name clashes with an action".into(),
            ));
        }
        for a in &alias.actions {
            if model
                .sets
                .kind_of(a)
                .is_none_or(|k| k == ActionKind::Predefined)
            {
                errors.push(ModelError::BadAlias(
                    alias.name.clone(),
                    format!("undeclared action {a}"),
                ));
            }
        }
    }
    for (id, datum) in &model.data {
        if *id != datum.data.id {
            errors.push(ModelError::DataIdMismatch(id.clone()));
        }
        errors.extend(validate_policy(&datum.policy, &model.sets));
    }
    errors
}
