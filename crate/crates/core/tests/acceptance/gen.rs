//! Random small policy models and traces that are compliant by
//! construction. Compliance is ensured by the generator's own bookkeeping
//! (who may act, who may hold each datum), not by the checker under test.

use std::collections::{BTreeMap, BTreeSet};

use datactl::model::{
    ActionId, DataId, DataRef, Datum, DeletionMode, Location, Policy, PolicyModel, Principal,
    Purpose, StorageForm, StorageSpec, TypeName, UserId, UserSet,
};
use datactl::semantics::{AbstractEvent, EventKind};
use rand::rngs::StdRng;
use rand::seq::{IteratorRandom, SliceRandom};
use rand::Rng;

pub const PURPOSES: [&str; 3] = ["p0", "p1", "p2"];
pub const GROUPABLE: [&str; 4] = ["like", "unlike", "tag", "untag"];

pub struct World {
    pub model: PolicyModel,
    /// Users that may own, act and be granted data.
    pub insiders: Vec<UserId>,
    /// A user no policy set ever names and the generator never grants.
    pub outsider: UserId,
    /// A datum whose storage keeps it out of the provider's reach.
    pub sealed: DataId,
}

fn subset(rng: &mut StdRng, of: &[UserId]) -> UserSet {
    of.iter().filter(|_| rng.gen_bool(0.5)).cloned().collect()
}

fn storage(wh: Location, ho: &[StorageForm]) -> StorageSpec {
    StorageSpec {
        wh: [wh].into(),
        ho: ho.iter().copied().collect(),
    }
}

fn random_policy(rng: &mut StdRng, insiders: &[UserId], ow: &UserId, sealed: bool) -> Policy {
    let mut p = Policy::default();
    let k = rng.gen_range(1..=PURPOSES.len());
    p.purposes = PURPOSES
        .choose_multiple(rng, k)
        .map(|s| Purpose::new(*s))
        .collect();
    p.deletion
        .entries
        .push((DeletionMode::Man, 2 * rng.gen_range(1..=3)));
    if rng.gen_bool(0.3) {
        p.deletion
            .entries
            .push((DeletionMode::Aut, rng.gen_range(1..=9)));
    }
    let options: Vec<StorageSpec> = if sealed {
        vec![
            storage(Location::ClientLoc, &[StorageForm::Plain]),
            storage(Location::SpLoc, &[StorageForm::EncClKey]),
        ]
    } else {
        vec![
            storage(Location::ClientLoc, &[StorageForm::Plain]),
            storage(Location::SpLoc, &[StorageForm::Plain]),
            storage(Location::SpLoc, &[StorageForm::EncSpKey]),
            storage(Location::SpLoc, &[StorageForm::EncClKey]),
        ]
    };
    p.storage = options.choose(rng).unwrap().clone();
    for a in GROUPABLE {
        let set = subset(rng, insiders);
        if !set.is_empty() {
            p.acp.can.insert(ActionId::new(a), set);
        }
    }
    let mut del = subset(rng, insiders);
    del.insert(ow.clone());
    p.acp.can.insert(ActionId::new("delete"), del);
    for u in insiders {
        for (been, action) in [(false, "like"), (false, "tag"), (true, "tag")] {
            let set = subset(rng, insiders);
            if !set.is_empty() {
                let table = if been { &mut p.has.been } else { &mut p.has.by };
                table
                    .entry(ActionId::new(action))
                    .or_default()
                    .insert(u.clone(), set);
            }
        }
    }
    p.has.group = subset(rng, insiders);
    p
}

pub fn random_world(rng: &mut StdRng) -> World {
    let n = rng.gen_range(2..=4);
    let all: Vec<UserId> = (0..n).map(|i| UserId::new(format!("u{i}"))).collect();
    let insiders = all[..n - 1].to_vec();
    let outsider = all[n - 1].clone();
    let mut model = PolicyModel::default();
    model.sets.add_unary("like", "unlike");
    model.sets.add_binary("tag", "untag");
    let m = rng.gen_range(1..=3);
    for i in 0..m {
        let id = DataId::new(format!("d{i}"));
        let ow = insiders.choose(rng).unwrap().clone();
        let policy = random_policy(rng, &insiders, &ow, i == 0);
        let data = DataRef {
            ow: ow.clone(),
            ds: [ow].into(),
            ty: TypeName::new("T"),
            id: id.clone(),
        };
        model.data.insert(id, Datum { data, policy });
    }
    World {
        model,
        insiders,
        outsider,
        sealed: DataId::new("d0"),
    }
}

/// The generator's view of one datum.
#[derive(Debug, Clone, Default)]
pub struct Book {
    pub defined: bool,
    pub can: BTreeMap<ActionId, UserSet>,
    /// Users that may hold the datum: its owner and act1/act2 recipients.
    pub justified: UserSet,
}

pub struct Ledger<'w> {
    world: &'w World,
    pub books: BTreeMap<DataId, Book>,
}

impl<'w> Ledger<'w> {
    pub fn new(world: &'w World) -> Self {
        let books = world
            .model
            .data
            .keys()
            .map(|id| (id.clone(), Book::default()))
            .collect();
        Self { world, books }
    }

    pub fn defined(&self) -> Vec<DataId> {
        self.books
            .iter()
            .filter(|(_, b)| b.defined)
            .map(|(id, _)| id.clone())
            .collect()
    }

    fn policy(&self, id: &DataId) -> &'w Policy {
        &self.world.model.data[id].policy
    }

    /// Apply the bookkeeping effect of an event the generator emitted.
    pub fn record(&mut self, e: &AbstractEvent) {
        let policy = self.policy(&e.datum);
        let ow = self.world.model.data[&e.datum].data.ow.clone();
        let book = self.books.get_mut(&e.datum).unwrap();
        let user = |p: &Principal| p.as_user().unwrap().clone();
        match &e.kind {
            EventKind::Own { .. } => {
                *book = Book {
                    defined: true,
                    can: policy.acp.can.clone(),
                    justified: [ow].into(),
                };
            }
            EventKind::Delete => book.defined = false,
            EventKind::GroupAct { tar, action, .. } => {
                book.can
                    .entry(action.clone())
                    .or_default()
                    .insert(user(tar));
            }
            EventKind::UngroupAct { tar, action, .. } => {
                book.can
                    .entry(action.clone())
                    .or_default()
                    .remove(&user(tar));
            }
            EventKind::Act1 { or, action }
                if book.can.get(action).is_some_and(|s| s.contains(&user(or))) =>
            {
                book.justified.extend(policy.has.by(action, &user(or)));
            }
            EventKind::Act2 { or, tar, action }
                if book.can.get(action).is_some_and(|s| s.contains(&user(or))) =>
            {
                let by = policy.has.by(action, &user(or));
                let been = policy.has.been(action, &user(tar));
                book.justified.extend(by.intersection(&been).cloned());
            }
            _ => {}
        }
    }
}

fn time_of(k: usize) -> u64 {
    2 * (k as u64 + 1)
}

/// A compliant trace of at most `max_len` events with times 2, 4, 6, ...
pub fn compliant_trace(world: &World, rng: &mut StdRng, max_len: usize) -> Vec<AbstractEvent> {
    generate(world, rng, max_len, true)
}

/// As [`compliant_trace`], but a deleted datum is never owned again.
pub fn single_lifecycle_trace(
    world: &World,
    rng: &mut StdRng,
    max_len: usize,
) -> Vec<AbstractEvent> {
    generate(world, rng, max_len, false)
}

fn generate(world: &World, rng: &mut StdRng, max_len: usize, reown: bool) -> Vec<AbstractEvent> {
    let len = rng.gen_range(1..=max_len);
    let mut ledger = Ledger::new(world);
    let mut owned: BTreeSet<DataId> = BTreeSet::new();
    let mut out: Vec<AbstractEvent> = Vec::new();
    let u = |x: &UserId| Principal::User(x.clone());
    while out.len() < len {
        let t = time_of(out.len());
        let mut options: Vec<Vec<EventKind>> = Vec::new();
        let mut on: Vec<DataId> = Vec::new();
        for (id, d) in &world.model.data {
            let book = &ledger.books[id];
            let ow = &d.data.ow;
            let push =
                |options: &mut Vec<Vec<EventKind>>, on: &mut Vec<DataId>, ks: Vec<EventKind>| {
                    options.push(ks);
                    on.push(id.clone());
                };
            if !book.defined {
                if !reown && owned.contains(id) {
                    continue;
                }
                push(
                    &mut options,
                    &mut on,
                    vec![EventKind::Own {
                        or: u(ow),
                        value: Some(format!("v{}", out.len())),
                    }],
                );
                continue;
            }
            push(&mut options, &mut on, vec![EventKind::Store]);
            let k = rng.gen_range(1..=d.policy.purposes.len());
            let purposes = d
                .policy
                .purposes
                .iter()
                .cloned()
                .choose_multiple(rng, k)
                .into_iter()
                .collect();
            push(&mut options, &mut on, vec![EventKind::Use { purposes }]);
            if out.len() + 2 <= len {
                push(
                    &mut options,
                    &mut on,
                    vec![EventKind::DeleteReq { or: u(ow) }, EventKind::Delete],
                );
            }
            let action = ActionId::new(*GROUPABLE.choose(rng).unwrap());
            if let Some(tar) = book.justified.iter().choose(rng) {
                push(
                    &mut options,
                    &mut on,
                    vec![EventKind::GroupAct {
                        or: u(ow),
                        tar: u(tar),
                        action: action.clone(),
                    }],
                );
                push(
                    &mut options,
                    &mut on,
                    vec![EventKind::GroupHas {
                        or: u(ow),
                        tar: u(tar),
                    }],
                );
            }
            let anyone = world.insiders.choose(rng).unwrap();
            push(
                &mut options,
                &mut on,
                vec![EventKind::UngroupAct {
                    or: u(ow),
                    tar: u(anyone),
                    action,
                }],
            );
            push(
                &mut options,
                &mut on,
                vec![EventKind::UngroupHas {
                    or: u(ow),
                    tar: u(anyone),
                }],
            );
            let target = world.insiders.choose(rng).unwrap();
            for (name, binary) in [
                ("like", false),
                ("unlike", false),
                ("tag", true),
                ("untag", true),
            ] {
                let action = ActionId::new(name);
                let Some(by) = book.can.get(&action).and_then(|s| s.iter().choose(rng)) else {
                    continue;
                };
                let kind = match (binary, name.starts_with("un")) {
                    (false, false) => EventKind::Act1 { or: u(by), action },
                    (false, true) => EventKind::UnAct1 { or: u(by), action },
                    (true, false) => EventKind::Act2 {
                        or: u(by),
                        tar: u(target),
                        action,
                    },
                    (true, true) => EventKind::UnAct2 {
                        or: u(by),
                        tar: u(target),
                        action,
                    },
                };
                push(&mut options, &mut on, vec![kind]);
            }
        }
        if options.is_empty() {
            break;
        }
        let pick = rng.gen_range(0..options.len());
        for kind in options.swap_remove(pick) {
            let e = AbstractEvent::new(time_of(out.len()), on[pick].clone(), kind);
            ledger.record(&e);
            owned.insert(e.datum.clone());
            out.push(e);
        }
        debug_assert!(out.last().unwrap().time >= t);
    }
    out
}

/// Ledger state after each prefix: `states[k]` is after the first k events.
pub fn defined_after(world: &World, trace: &[AbstractEvent]) -> Vec<Vec<DataId>> {
    let mut ledger = Ledger::new(world);
    let mut out = vec![ledger.defined()];
    for e in trace {
        ledger.record(e);
        out.push(ledger.defined());
    }
    out
}
