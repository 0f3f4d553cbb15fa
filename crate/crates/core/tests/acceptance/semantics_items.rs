//! One check per event rule of the policy-level transition, each comparing
//! the result with a state written out by hand.

use datactl::model::{
    ActionId, DataId, DataRef, Datum, DeletionMode, Location, Policy, PolicyModel, Principal,
    Purpose, StorageForm, TypeName, UserId, UserSet,
};
use datactl::semantics::{apply_event, AbstractEvent, AbstractState, EventKind, StateEntry};

pub type Check = Result<(), String>;

pub type Item = (&'static str, fn() -> Check);

pub const ITEMS: [Item; 12] = [
    ("own", own),
    ("store", store),
    ("deletereq", deletereq),
    ("delete", delete),
    ("groupact", groupact),
    ("ungroupact", ungroupact),
    ("grouphas", grouphas),
    ("ungrouphas", ungrouphas),
    ("act1", act1),
    ("unact1", unact1),
    ("act2", act2),
    ("unact2", unact2),
];

fn users(xs: &[&str]) -> UserSet {
    xs.iter().map(|x| UserId::from(*x)).collect()
}

fn id() -> DataId {
    DataId::new("photo1")
}

fn policy() -> Policy {
    let mut p = Policy::default();
    p.purposes.insert(Purpose::new("share"));
    p.deletion.entries.push((DeletionMode::Man, 2));
    p.storage.wh.insert(Location::SpLoc);
    p.storage.ho.insert(StorageForm::EncSpKey);
    p.acp.can.insert("like".into(), users(&["alice", "bob"]));
    p.acp.can.insert("unlike".into(), users(&["bob"]));
    p.acp.can.insert("tag".into(), users(&["alice"]));
    p.acp.can.insert("untag".into(), users(&["alice"]));
    p.has
        .by
        .entry("like".into())
        .or_default()
        .insert("bob".into(), users(&["bob", "carol"]));
    p.has
        .by
        .entry("tag".into())
        .or_default()
        .insert("alice".into(), users(&["bob", "carol"]));
    p.has
        .been
        .entry("tag".into())
        .or_default()
        .insert("bob".into(), users(&["carol", "dave"]));
    p
}

fn model_with(p: Policy) -> PolicyModel {
    let mut m = PolicyModel::default();
    m.sets.add_unary("like", "unlike");
    m.sets.add_binary("tag", "untag");
    let data = DataRef {
        ow: "alice".into(),
        ds: users(&["alice"]),
        ty: TypeName::new("UpPhotos"),
        id: id(),
    };
    m.data.insert(id(), Datum { data, policy: p });
    m
}

fn model() -> PolicyModel {
    model_with(policy())
}

/// The entry right after `own(t=1, alice, "img")`.
fn base_entry() -> StateEntry {
    StateEntry {
        t: 1,
        v: Some("img".into()),
        actby: Default::default(),
        policy: policy(),
        h_has: users(&["alice"]),
    }
}

fn state(entry: StateEntry) -> AbstractState {
    let mut s = AbstractState::initial();
    s.set(id(), entry);
    s
}

fn user(u: &str) -> Principal {
    Principal::user(u)
}

fn ev(t: u64, kind: EventKind) -> AbstractEvent {
    AbstractEvent::new(t, id(), kind)
}

fn expect(m: &PolicyModel, from: &AbstractState, e: AbstractEvent, want: &AbstractState) -> Check {
    let got = apply_event(m, from, &e, 1).map_err(|err| format!("{e:?}: {err}"))?;
    if &got == want {
        Ok(())
    } else {
        Err(format!("{e:?}\n  got  {got:?}\n  want {want:?}"))
    }
}

/// A failed guard leaves the state exactly as it was.
fn unchanged(m: &PolicyModel, from: &AbstractState, e: AbstractEvent) -> Check {
    expect(m, from, e, from)
}

pub fn own() -> Check {
    let e = ev(
        1,
        EventKind::Own {
            or: user("alice"),
            value: Some("img".into()),
        },
    );
    expect(&model(), &AbstractState::initial(), e, &state(base_entry()))
}

pub fn store() -> Check {
    let mut want = base_entry();
    want.t = 2;
    want.h_has = users(&["alice", "sp"]);
    expect(
        &model(),
        &state(base_entry()),
        ev(2, EventKind::Store),
        &state(want),
    )?;

    let mut client = policy();
    client.storage.wh = [Location::ClientLoc].into();
    let m = model_with(client.clone());
    let mut from = base_entry();
    from.policy = client;
    unchanged(&m, &state(from), ev(2, EventKind::Store))
}

pub fn deletereq() -> Check {
    unchanged(
        &model(),
        &state(base_entry()),
        ev(2, EventKind::DeleteReq { or: user("alice") }),
    )
}

pub fn delete() -> Check {
    expect(
        &model(),
        &state(base_entry()),
        ev(2, EventKind::Delete),
        &AbstractState::initial(),
    )
}

pub fn groupact() -> Check {
    let mut want = base_entry();
    want.t = 2;
    want.policy
        .acp
        .can
        .insert("like".into(), users(&["alice", "bob", "dave"]));
    want.h_has = users(&["alice", "dave"]);
    let e = ev(
        2,
        EventKind::GroupAct {
            or: user("alice"),
            tar: user("dave"),
            action: "like".into(),
        },
    );
    expect(&model(), &state(base_entry()), e, &state(want))
}

pub fn ungroupact() -> Check {
    let mut from = base_entry();
    from.h_has = users(&["alice", "bob"]);
    let mut want = base_entry();
    want.t = 3;
    want.policy.acp.can.insert("like".into(), users(&["alice"]));
    let e = ev(
        3,
        EventKind::UngroupAct {
            or: user("alice"),
            tar: user("bob"),
            action: "like".into(),
        },
    );
    expect(&model(), &state(from), e, &state(want))
}

pub fn grouphas() -> Check {
    let mut want = base_entry();
    want.t = 2;
    want.policy.has.group = users(&["carol"]);
    want.h_has = users(&["alice", "carol"]);
    let e = ev(
        2,
        EventKind::GroupHas {
            or: user("alice"),
            tar: user("carol"),
        },
    );
    expect(&model(), &state(base_entry()), e, &state(want))
}

pub fn ungrouphas() -> Check {
    let mut from = base_entry();
    from.policy.has.group = users(&["carol"]);
    from.h_has = users(&["alice", "carol"]);
    let mut want = base_entry();
    want.t = 3;
    let e = ev(
        3,
        EventKind::UngroupHas {
            or: user("alice"),
            tar: user("carol"),
        },
    );
    expect(&model(), &state(from), e, &state(want))
}

pub fn act1() -> Check {
    let like = ActionId::new("like");
    let mut want = base_entry();
    want.t = 2;
    want.actby.by.insert(like.clone(), users(&["bob"]));
    want.h_has = users(&["alice", "bob", "carol"]);
    let by = |u: &str| {
        ev(
            2,
            EventKind::Act1 {
                or: user(u),
                action: like.clone(),
            },
        )
    };
    expect(&model(), &state(base_entry()), by("bob"), &state(want))?;
    unchanged(&model(), &state(base_entry()), by("carol"))
}

pub fn unact1() -> Check {
    let like = ActionId::new("like");
    let mut from = base_entry();
    from.t = 2;
    from.actby.by.insert(like.clone(), users(&["bob"]));
    from.h_has = users(&["alice", "bob", "carol"]);
    let mut want = base_entry();
    want.t = 3;
    want.actby.by.insert(like, UserSet::new());
    let by = |u: &str| {
        ev(
            3,
            EventKind::UnAct1 {
                or: user(u),
                action: "unlike".into(),
            },
        )
    };
    expect(&model(), &state(from.clone()), by("bob"), &state(want))?;
    unchanged(&model(), &state(from), by("alice"))
}

pub fn act2() -> Check {
    let tag = ActionId::new("tag");
    let mut want = base_entry();
    want.t = 2;
    want.actby.by.insert(tag.clone(), users(&["alice"]));
    want.actby.been.insert(tag.clone(), users(&["bob"]));
    // {bob, carol} ∩ {carol, dave}
    want.h_has = users(&["alice", "carol"]);
    let by = |u: &str| {
        ev(
            2,
            EventKind::Act2 {
                or: user(u),
                tar: user("bob"),
                action: tag.clone(),
            },
        )
    };
    expect(&model(), &state(base_entry()), by("alice"), &state(want))?;
    unchanged(&model(), &state(base_entry()), by("bob"))
}

pub fn unact2() -> Check {
    let tag = ActionId::new("tag");
    let mut from = base_entry();
    from.t = 2;
    from.actby.by.insert(tag.clone(), users(&["alice"]));
    from.actby.been.insert(tag.clone(), users(&["bob"]));
    from.h_has = users(&["alice", "carol"]);
    let mut want = base_entry();
    want.t = 3;
    want.actby.by.insert(tag.clone(), UserSet::new());
    want.actby.been.insert(tag, UserSet::new());
    let by = |u: &str| {
        ev(
            3,
            EventKind::UnAct2 {
                or: user(u),
                tar: user("bob"),
                action: "untag".into(),
            },
        )
    };
    expect(&model(), &state(from.clone()), by("alice"), &state(want))?;
    unchanged(&model(), &state(from), by("bob"))
}
