//! Everything the deduction rules derive from a random small architecture
//! and one of its traces also holds over the enumerated state space.

use datactl::arch::{
    apply_arch_event, enumerate_states, instances, ArchEvent, Architecture, EnumerateError,
    GlobalState, Universe, Value, Variable,
};
use datactl::dsl::parse_architecture;
use datactl::logic::{deduce, eval_on, HasProperty, LogicError};
use datactl::model::UserId;
use rand::rngs::StdRng;
use rand::seq::{IteratorRandom, SliceRandom};
use rand::{Rng, SeedableRng};

const ARCHITECTURES: usize = 30;
const TRACES_PER_ARCHITECTURE: usize = 20;
const MAX_LEN: usize = 5;
const MAX_STATES: usize = 30_000;

const X1: &str = "X{ow=a, ds={a}, id=d1}";
const X2: &str = "X{ow=b, ds={b}, id=d2}";
const USERS: [&str; 3] = ["a", "b", "c"];

const OPTIONAL: [&str; 15] = [
    "Own[b](X2);",
    "Possess[sp](X1);",
    "Possess[sp](enc(X1, key[sp])); Possess[sp](key[sp]);",
    "Own[a](key[a]); Possess[sp](enc(X1, key[a]));",
    "GroupAct<like>[a, ?tar](X1);",
    "UnGroupAct<like>[a, ?tar](X1);",
    "GroupHas[a, ?tar](X1);",
    "UnGroupHas[a, ?tar](X1);",
    "Act1<like>[?or](X1);",
    "UnAct1<unlike>[?or](X1);",
    "Act2<tag>[?or, ?tar](X1);",
    "UnAct2<untag>[?or, ?tar](X1);",
    "DeleteReq[a](X1); Delete[sp](X1, dd=1);",
    "Act1<like>[?or](X2);",
    "Possess[sp](X2);",
];

const PERMITS: [&str; 7] = [
    "can like (*, X1)",
    "can unlike (*, X1)",
    "can tag (*, X1)",
    "by like b (*, X1)",
    "by tag a (*, X1)",
    "been tag c (*, X1)",
    "group (*, X1)",
];

fn random_architecture(rng: &mut StdRng) -> String {
    let mut body = String::from("revoke unlike = like; revoke untag = tag; Own[a](X1);\n");
    let k = rng.gen_range(2..=5);
    for line in OPTIONAL.choose_multiple(rng, k) {
        body.push_str(line);
        body.push('\n');
    }
    for p in PERMITS {
        let set: Vec<&str> = USERS
            .iter()
            .copied()
            .filter(|_| rng.gen_bool(0.4))
            .collect();
        if !set.is_empty() {
            body.push_str(&format!("permit {p} = {{{}}};\n", set.join(", ")));
        }
    }
    format!(
        "architecture {{\n{}}}\n",
        body.replace("X1", X1).replace("X2", X2)
    )
}

fn universe() -> Universe {
    Universe {
        users: USERS.iter().map(|u| UserId::from(*u)).collect(),
        values: vec![Value::atom("v")],
        times: (1..=MAX_LEN as u64).collect(),
        ids: vec![],
    }
}

fn random_trace(pa: &Architecture, u: &Universe, rng: &mut StdRng) -> Vec<ArchEvent> {
    let mut sigma = GlobalState::init(pa, u.users.iter().cloned());
    let users: Vec<UserId> = sigma.users.keys().cloned().collect();
    let kinds = instances(pa, &users, u);
    let len = rng.gen_range(0..=MAX_LEN);
    let mut out = Vec::new();
    for k in 0..len {
        let t = k as u64 + 1;
        let next = kinds
            .iter()
            .filter_map(|kind| {
                let e = ArchEvent::new(kind.clone(), t);
                apply_arch_event(pa, &sigma, &e).ok().map(|s| (e, s))
            })
            .choose(rng);
        let Some((e, s)) = next else { break };
        out.push(e);
        sigma = s;
    }
    out
}

fn queries() -> Vec<HasProperty> {
    let x1 = Variable::new("a", ["a".into()].into(), "d1");
    let x2 = Variable::new("b", ["b".into()].into(), "d2");
    let mut out = Vec::new();
    for x in [&x1, &x2] {
        out.push(HasProperty::HasSp(x.clone()));
        for u in USERS.iter().map(|u| UserId::from(*u)).chain([UserId::sp()]) {
            out.push(HasProperty::HasNever {
                user: u.clone(),
                var: x.clone(),
            });
            for time in 1..=MAX_LEN as u64 {
                out.push(HasProperty::Has {
                    user: u.clone(),
                    var: x.clone(),
                    time,
                });
                out.push(HasProperty::HasNot {
                    user: u.clone(),
                    var: x.clone(),
                    time,
                });
            }
        }
    }
    out
}

pub fn run() -> Result<String, String> {
    let mut rng = StdRng::seed_from_u64(0x5eed_4a55);
    let u = universe();
    let queries = queries();
    let (mut derived, mut confirmed, mut bounded, mut resampled) = (0usize, 0usize, 0usize, 0usize);
    let mut n = 0;
    while n < ARCHITECTURES {
        let text = random_architecture(&mut rng);
        let pa = parse_architecture(&text).map_err(|e| format!("architecture {n}: {e}\n{text}"))?;
        // Architectures whose bounded state space exceeds the cap are
        // replaced by fresh samples rather than checked partially.
        let space = match enumerate_states(&pa, MAX_LEN, &u, MAX_STATES) {
            Ok(space) => space,
            Err(EnumerateError::LimitExceeded { .. }) => {
                resampled += 1;
                continue;
            }
        };
        n += 1;
        if !space.complete {
            bounded += 1;
        }
        for _ in 0..TRACES_PER_ARCHITECTURE {
            let trace = random_trace(&pa, &u, &mut rng);
            for phi in &queries {
                let r = match deduce(&pa, &trace, phi) {
                    Ok(r) => r,
                    Err(LogicError::UnknownUser(_) | LogicError::UnknownVariable(_)) => continue,
                    Err(e) => return Err(format!("architecture {n}, {phi}: {e}")),
                };
                if !r.derivable() {
                    continue;
                }
                derived += 1;
                if eval_on(&space, phi).holds {
                    confirmed += 1;
                } else {
                    return Err(format!(
                        "{phi} derivable but not semantically valid\n{text}\ntrace {trace:?}"
                    ));
                }
            }
        }
    }
    if derived == 0 {
        return Err("no property was derivable; the sample is vacuous".into());
    }
    Ok(format!(
        "{confirmed}/{derived} derivable results confirmed over {ARCHITECTURES} architectures \
         ({bounded} state spaces cut at length {MAX_LEN}, {resampled} over {MAX_STATES} states resampled)"
    ))
}
