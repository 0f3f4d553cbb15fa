//! Compliant traces stay clean; each single injected violation is found
//! under the rule it targets.

use datactl::compliance::{check_trace, Rule};
use datactl::model::{DataId, Principal, Purpose, UserId};
use datactl::semantics::{AbstractEvent, EventKind};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::SeedableRng;

use crate::gen::{compliant_trace, defined_after, random_world, World};

const TRACES: usize = 150;

/// Position and datum for an inserted event, extending the trace with an
/// `own` when no datum satisfying `want` is ever defined.
fn site(
    world: &World,
    trace: &mut Vec<AbstractEvent>,
    rng: &mut StdRng,
    want: impl Fn(&DataId) -> bool,
) -> (usize, DataId) {
    let defined = defined_after(world, trace);
    let sites: Vec<(usize, DataId)> = defined
        .iter()
        .enumerate()
        .flat_map(|(k, ds)| ds.iter().filter(|d| want(d)).map(move |d| (k, d.clone())))
        .collect();
    if let Some(s) = sites.choose(rng) {
        return s.clone();
    }
    let id = world.model.data.keys().find(|d| want(d)).unwrap().clone();
    let ow = world.model.data[&id].data.ow.clone();
    let t = trace.last().map_or(2, |e| e.time + 2);
    trace.push(AbstractEvent::new(
        t,
        id.clone(),
        EventKind::Own {
            or: Principal::User(ow),
            value: None,
        },
    ));
    (trace.len(), id)
}

/// Insert `kind` on the datum right after the first `k` events, at an odd
/// time between its neighbours.
fn insert_at(trace: &mut Vec<AbstractEvent>, k: usize, id: DataId, kind: EventKind) {
    let t = if k == 0 { 1 } else { trace[k - 1].time + 1 };
    trace.insert(k, AbstractEvent::new(t, id, kind));
}

fn inject(
    world: &World,
    base: &[AbstractEvent],
    rule: Rule,
    rng: &mut StdRng,
) -> Vec<AbstractEvent> {
    let mut t = base.to_vec();
    let owner = |id: &DataId| Principal::User(world.model.data[id].data.ow.clone());
    let outsider = Principal::User(world.outsider.clone());
    match rule {
        Rule::C1 => {
            let (k, id) = site(world, &mut t, rng, |_| true);
            let purposes = [Purpose::new("p_unlisted")].into();
            insert_at(&mut t, k, id, EventKind::Use { purposes });
        }
        Rule::C2 => {
            let (k, id) = site(world, &mut t, rng, |_| true);
            insert_at(
                &mut t,
                k,
                id,
                EventKind::Act1 {
                    or: outsider,
                    action: "like".into(),
                },
            );
        }
        Rule::C3 => {
            let (k, id) = site(world, &mut t, rng, |_| true);
            let or = owner(&id);
            insert_at(
                &mut t,
                k,
                id,
                EventKind::GroupAct {
                    or,
                    tar: outsider,
                    action: "like".into(),
                },
            );
        }
        Rule::C4 => {
            let sealed = world.sealed.clone();
            let (k, id) = site(world, &mut t, rng, |d| *d == sealed);
            let or = owner(&id);
            insert_at(
                &mut t,
                k,
                id,
                EventKind::GroupAct {
                    or,
                    tar: Principal::User(UserId::sp()),
                    action: "like".into(),
                },
            );
        }
        Rule::C5 => {
            // Appended last, so no delete can follow within the delay.
            let defined = defined_after(world, &t);
            let id = match defined.last().unwrap().choose(rng) {
                Some(id) => id.clone(),
                None => {
                    let id = world.model.data.keys().next().unwrap().clone();
                    let time = t.last().map_or(2, |e| e.time + 2);
                    t.push(AbstractEvent::new(
                        time,
                        id.clone(),
                        EventKind::Own {
                            or: owner(&id),
                            value: None,
                        },
                    ));
                    id
                }
            };
            let time = t.last().map_or(2, |e| e.time + 2);
            let or = owner(&id);
            t.push(AbstractEvent::new(time, id, EventKind::DeleteReq { or }));
        }
    }
    t
}

pub fn run() -> Result<String, String> {
    let mut rng = StdRng::seed_from_u64(0x00c0_ffee);
    let mut injected = 0usize;
    let mut detected = 0usize;
    let mut failures = Vec::new();
    for n in 0..TRACES {
        let world = random_world(&mut rng);
        let trace = compliant_trace(&world, &mut rng, 20);
        let report = check_trace(&world.model, &trace).map_err(|e| format!("trace {n}: {e}"))?;
        if !report.compliant {
            return Err(format!(
                "false positive on generated trace {n}: {:?}\n{trace:#?}",
                report.violations
            ));
        }
        for rule in Rule::ALL {
            let mutated = inject(&world, &trace, rule, &mut rng);
            injected += 1;
            match check_trace(&world.model, &mutated) {
                Ok(r) if r.violations.iter().any(|v| v.rule == rule) => detected += 1,
                Ok(r) => failures.push(format!("trace {n} {rule}: got {:?}", r.violations)),
                Err(e) => failures.push(format!("trace {n} {rule}: {e}")),
            }
        }
    }
    if failures.is_empty() {
        Ok(format!(
            "{TRACES} compliant traces, 0 false positives, {detected}/{injected} injections detected"
        ))
    } else {
        Err(format!(
            "{detected}/{injected} detected; first misses: {}",
            failures
                .iter()
                .take(3)
                .cloned()
                .collect::<Vec<_>>()
                .join("; ")
        ))
    }
}
