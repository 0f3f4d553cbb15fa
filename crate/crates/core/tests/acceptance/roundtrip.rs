//! Serializing then parsing returns the same document, for generated
//! documents of every kind.

use std::collections::BTreeSet;

use datactl::arch::{
    instances, ActForm, Activity, ArchEvent, Architecture, FuncName, Grantor, GroupKind, Index,
    PermKey, PermSlot, Term, Universe, Value, Variable,
};
use datactl::dsl::{parse_document, serialize_payload, serialize_trace, DocKind, Payload};
use datactl::logic::HasProperty;
use datactl::mapping::image_trace;
use datactl::model::{ActionId, DataId, GroupAlias, Polarity, PolicyModel, Principal, UserId};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

use crate::gen::{compliant_trace, random_world, World};

pub const DOCUMENTS: usize = 1_000;

const USERS: [&str; 4] = ["alice", "bob", "carol", "sp"];
const ACTIONS: [(&str, &str, bool); 2] = [("like", "unlike", false), ("tag", "untag", true)];

fn with_aliases(mut world: World, rng: &mut StdRng) -> World {
    let pick = |rng: &mut StdRng| -> Vec<ActionId> {
        ["like", "unlike", "tag", "untag"]
            .iter()
            .filter(|_| rng.gen_bool(0.5))
            .map(|a| ActionId::new(*a))
            .collect()
    };
    for (name, polarity) in [
        ("friends", Polarity::Group),
        ("unfriends", Polarity::Ungroup),
    ] {
        if rng.gen_bool(0.7) {
            let actions = pick(rng);
            let include_has = actions.is_empty() || rng.gen_bool(0.5);
            world.model.aliases.push(GroupAlias {
                name: name.into(),
                polarity,
                actions,
                include_has,
            });
        }
    }
    world
}

fn policy(rng: &mut StdRng) -> Payload {
    let world = with_aliases(random_world(rng), rng);
    Payload::Policy(world.model)
}

/// A generated trace, sometimes with alias calls spliced into its text.
fn trace(rng: &mut StdRng) -> Result<(Payload, PolicyModel), String> {
    let world = with_aliases(random_world(rng), rng);
    let events = compliant_trace(&world, rng, 10);
    let model = world.model;
    if model.aliases.is_empty() || rng.gen_bool(0.5) {
        return Ok((Payload::Trace(events), model));
    }
    let text = serialize_trace(&events, Some(&model));
    let alias = model.aliases.choose(rng).unwrap();
    let dt = model.data.keys().next().unwrap();
    let ow = &model.data[dt].data.ow;
    let t = events.last().map_or(1, |e| e.time + 1);
    let call = format!(
        "  {}(t={t}, or={ow}, tar={}, dt={dt});\n}}",
        alias.name,
        USERS.choose(rng).unwrap()
    );
    let close = text.rfind('}').ok_or("trace text has no closing brace")?;
    let spliced = format!("{}{}", &text[..close], call);
    let doc = parse_document(DocKind::Trace, &spliced, Some(&model))
        .map_err(|e| format!("{e}\n{spliced}"))?;
    Ok((doc.payload, model))
}

fn user(rng: &mut StdRng) -> UserId {
    UserId::from(*USERS.choose(rng).unwrap())
}

fn principal(rng: &mut StdRng) -> Principal {
    if rng.gen_bool(0.3) {
        Principal::Var(["or", "tar"].choose(rng).unwrap().to_string())
    } else {
        Principal::User(user(rng))
    }
}

fn variable(rng: &mut StdRng) -> Variable {
    let ow = UserId::from(*USERS[..3].choose(rng).unwrap());
    let mut ds: BTreeSet<UserId> = [ow.clone()].into();
    if rng.gen_bool(0.3) {
        ds.insert(user(rng));
    }
    let id = if rng.gen_bool(0.2) {
        Index::Var("i".into())
    } else {
        Index::Const(DataId::new(format!("d{}", rng.gen_range(0..3))))
    };
    Variable { ow, ds, id }
}

fn term(rng: &mut StdRng, depth: usize) -> Term {
    match rng.gen_range(0..if depth == 0 { 3 } else { 5 }) {
        0 => Term::Var(variable(rng)),
        1 => Term::Key(user(rng)),
        2 => Term::Const(
            variable(rng),
            ["v", "two words", "q\"uote"]
                .choose(rng)
                .unwrap()
                .to_string(),
        ),
        3 => Term::Func(
            FuncName::Enc,
            vec![term(rng, depth - 1), Term::Key(user(rng))],
        ),
        _ => {
            let f = *[FuncName::Hash, FuncName::Sig].choose(rng).unwrap();
            let n = rng.gen_range(1..=3);
            Term::Func(f, (0..n).map(|_| term(rng, depth - 1)).collect())
        }
    }
}

fn activity(rng: &mut StdRng, aliases: &[String]) -> Activity {
    let (act, unact, binary) = *ACTIONS.choose(rng).unwrap();
    match rng.gen_range(0..9) {
        0 => {
            let x = variable(rng);
            Activity::Own {
                by: Principal::User(x.ow.clone()),
                term: Term::Var(x),
            }
        }
        1 => {
            let u = UserId::from(*USERS[..3].choose(rng).unwrap());
            Activity::Own {
                by: Principal::User(u.clone()),
                term: Term::Key(u),
            }
        }
        2 => Activity::Possess { term: term(rng, 2) },
        3 => Activity::PossessOneOf {
            vars: (0..rng.gen_range(1..=3)).map(|_| variable(rng)).collect(),
        },
        4 => Activity::Group {
            undo: rng.gen(),
            kind: if rng.gen() {
                GroupKind::Has
            } else {
                GroupKind::Act(act.into())
            },
            by: principal(rng),
            tar: principal(rng),
            var: variable(rng),
        },
        5 if !aliases.is_empty() => Activity::Alias {
            name: aliases.choose(rng).unwrap().clone(),
            by: principal(rng),
            tar: principal(rng),
            var: variable(rng),
        },
        6 => Activity::DeleteReq {
            by: principal(rng),
            var: variable(rng),
        },
        7 => Activity::Delete {
            var: variable(rng),
            dd: rng.gen_range(0..5),
        },
        _ => {
            let revoke = rng.gen_bool(0.4);
            let form = match (binary, revoke) {
                (false, false) => ActForm::Act1,
                (false, true) => ActForm::UnAct1,
                (true, false) => ActForm::Act2,
                (true, true) => ActForm::UnAct2,
            };
            Activity::Act {
                form,
                action: if revoke { unact } else { act }.into(),
                by: principal(rng),
                tar: binary.then(|| principal(rng)),
                var: variable(rng),
            }
        }
    }
}

fn random_architecture(rng: &mut StdRng) -> Architecture {
    let mut pa = Architecture::new();
    for (act, unact, _) in ACTIONS {
        if rng.gen() {
            pa.revokes.insert(unact.into(), act.into());
        }
    }
    if rng.gen() {
        pa.aliases.insert(
            "addfriends".into(),
            GroupAlias {
                name: "addfriends".into(),
                polarity: Polarity::Group,
                actions: vec!["like".into()],
                include_has: rng.gen(),
            },
        );
    }
    let aliases: Vec<String> = pa.aliases.keys().cloned().collect();
    for _ in 0..rng.gen_range(0..12) {
        let a = activity(rng, &aliases);
        let mut candidate = pa.clone();
        candidate.insert(a);
        if candidate.inconsistencies().is_empty() {
            pa = candidate;
        }
    }
    for _ in 0..rng.gen_range(0..5) {
        let key = match rng.gen_range(0..4) {
            0 => PermKey::Can(ActionId::new(ACTIONS.choose(rng).unwrap().0)),
            1 => PermKey::By(ActionId::new("tag"), user(rng)),
            2 => PermKey::Been(ActionId::new("tag"), user(rng)),
            _ => PermKey::Group,
        };
        let grantor = if rng.gen() {
            Grantor::Any
        } else {
            Grantor::User(user(rng))
        };
        let set: Vec<UserId> = (0..rng.gen_range(1..=3)).map(|_| user(rng)).collect();
        pa.grant(
            PermSlot {
                grantor,
                key,
                var: variable(rng),
            },
            set,
        );
    }
    pa
}

fn arch_trace(rng: &mut StdRng) -> Result<Payload, String> {
    if rng.gen_bool(0.5) {
        let world = random_world(rng);
        let events = compliant_trace(&world, rng, 10);
        let theta = image_trace(&world.model, &events).map_err(|e| e.to_string())?;
        return Ok(Payload::ArchTrace(theta));
    }
    let pa = random_architecture(rng);
    let universe = Universe {
        users: Default::default(),
        values: vec![Value::atom("v"), Value::atom("a b"), Value::Bot],
        times: vec![],
        ids: vec![DataId::new("d9")],
    };
    let users: Vec<UserId> = USERS.iter().map(|u| UserId::from(*u)).collect();
    let kinds = instances(&pa, &users, &universe);
    let mut t = 0;
    let mut events = Vec::new();
    for _ in 0..rng.gen_range(0..8) {
        let Some(kind) = kinds.choose(rng).cloned() else {
            break;
        };
        t += rng.gen_range(1..4);
        events.push(ArchEvent::new(kind, t));
    }
    Ok(Payload::ArchTrace(events))
}

fn query(rng: &mut StdRng, depth: usize) -> HasProperty {
    let concrete = |rng: &mut StdRng| {
        let mut x = variable(rng);
        if let Index::Var(_) = x.id {
            x.id = Index::Const(DataId::new("d0"));
        }
        x
    };
    match rng.gen_range(0..if depth == 0 { 4 } else { 6 }) {
        0 => HasProperty::HasSp(concrete(rng)),
        1 => HasProperty::Has {
            user: user(rng),
            var: concrete(rng),
            time: rng.gen_range(0..20),
        },
        2 => HasProperty::HasNot {
            user: user(rng),
            var: concrete(rng),
            time: rng.gen_range(0..20),
        },
        3 => HasProperty::HasNever {
            user: user(rng),
            var: concrete(rng),
        },
        _ => HasProperty::and(query(rng, depth - 1), query(rng, depth - 1)),
    }
}

fn round_trip(kind: DocKind, payload: &Payload, model: Option<&PolicyModel>) -> Result<(), String> {
    let text = serialize_payload(payload, model);
    let back = parse_document(kind, &text, model).map_err(|e| format!("{kind:?}: {e}\n{text}"))?;
    if &back.payload == payload {
        Ok(())
    } else {
        Err(format!("{kind:?} changed across a round trip:\n{text}"))
    }
}

pub fn run() -> Result<String, String> {
    let mut rng = StdRng::seed_from_u64(0x7e57_da7a);
    let mut per_kind = [0usize; 5];
    for n in 0..DOCUMENTS {
        let k = n % DocKind::ALL.len();
        let kind = DocKind::ALL[k];
        let (payload, model) = match kind {
            DocKind::Policy => (policy(&mut rng), None),
            DocKind::Trace => {
                let (p, m) = trace(&mut rng).map_err(|e| format!("document {n}: {e}"))?;
                (p, Some(m))
            }
            DocKind::Architecture => (Payload::Architecture(random_architecture(&mut rng)), None),
            DocKind::ArchTrace => (arch_trace(&mut rng)?, None),
            DocKind::Query => (Payload::Query(query(&mut rng, 3)), None),
        };
        round_trip(kind, &payload, model.as_ref()).map_err(|e| format!("document {n}: {e}"))?;
        per_kind[k] += 1;
    }
    let summary: Vec<String> = DocKind::ALL
        .iter()
        .zip(per_kind)
        .map(|(k, c)| format!("{c} .{}", k.extension()))
        .collect();
    Ok(format!(
        "{DOCUMENTS} documents round-trip ({})",
        summary.join(", ")
    ))
}
