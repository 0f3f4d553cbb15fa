//! Derived architectures agree with their policies on every correspondence
//! property, and removing the activity or permission a property rests on
//! makes exactly that property fail.

use datactl::arch::{ActForm, Activity, Architecture, PermKey, Term};
use datactl::mapping::{
    check_correspondence, data_variable, derive_from_trace, image_trace, Correspondence,
    CorrespondenceReport, DeriveOptions, PropertyStatus,
};
use datactl::model::{DataId, PolicyModel};
use datactl::semantics::AbstractEvent;
use rand::rngs::StdRng;
use rand::SeedableRng;

use crate::gen::{random_world, single_lifecycle_trace};

const MODELS: usize = 60;

type Run = (Vec<AbstractEvent>, Vec<datactl::arch::ArchEvent>);

fn report(
    model: &PolicyModel,
    run: &Run,
    pa: &Architecture,
) -> Result<CorrespondenceReport, String> {
    check_correspondence(model, std::slice::from_ref(run), pa).map_err(|e| e.to_string())
}

/// Data for which the policy side of `p` is true.
fn applicable(r: &CorrespondenceReport, p: Correspondence) -> Vec<DataId> {
    let mut out: Vec<DataId> = r
        .rows
        .iter()
        .filter(|row| row.property == p && row.policy_side)
        .map(|row| row.datum.clone())
        .collect();
    out.dedup();
    out
}

fn drop_activities(pa: &Architecture, doomed: impl Fn(&Activity) -> bool) -> Architecture {
    let mut out = pa.clone();
    out.activities.retain(|a| !doomed(a));
    out
}

/// Architecture mutations, each paired with the property it must break.
fn mutations(
    model: &PolicyModel,
    pa: &Architecture,
    r: &CorrespondenceReport,
) -> Vec<(String, Correspondence, Architecture)> {
    let mut out = Vec::new();
    let var = |dt: &DataId| data_variable(&model.data[dt].data);
    for dt in applicable(r, Correspondence::P2) {
        let x = var(&dt);
        let m = drop_activities(
            pa,
            |a| matches!(a, Activity::Own { term: Term::Var(v), .. } if *v == x),
        );
        out.push((format!("drop Own of {dt}"), Correspondence::P2, m));
    }
    for dt in applicable(r, Correspondence::P3) {
        let x = var(&dt);
        let m = drop_activities(
            pa,
            |a| matches!(a, Activity::Act { form: ActForm::Act1, var, .. } if *var == x),
        );
        out.push((format!("drop Act1 on {dt}"), Correspondence::P3, m));
        let mut m = pa.clone();
        m.permissions
            .retain(|slot, _| !(slot.var == x && matches!(slot.key, PermKey::By(..))));
        out.push((
            format!("drop by-permissions of {dt}"),
            Correspondence::P3,
            m,
        ));
    }
    for dt in applicable(r, Correspondence::P4) {
        let x = var(&dt);
        let m = drop_activities(
            pa,
            |a| matches!(a, Activity::Act { form: ActForm::Act2, var, .. } if *var == x),
        );
        out.push((format!("drop Act2 on {dt}"), Correspondence::P4, m));
    }
    for dt in applicable(r, Correspondence::P5) {
        let x = var(&dt);
        let m = drop_activities(pa, |a| {
            matches!(a, Activity::Possess { .. } | Activity::PossessOneOf { .. })
                && a.variables().contains(&&x)
        });
        out.push((format!("drop Possess of {dt}"), Correspondence::P5, m));
    }
    for dt in applicable(r, Correspondence::P6) {
        let x = var(&dt);
        let m = drop_activities(
            pa,
            |a| matches!(a, Activity::Delete { var, .. } if *var == x),
        );
        out.push((format!("drop Delete of {dt}"), Correspondence::P6, m));
    }
    out
}

pub fn run() -> Result<String, String> {
    let mut rng = StdRng::seed_from_u64(0x0c0e_55e5);
    let (mut mutated, mut flipped) = (0usize, 0usize);
    let mut misses = Vec::new();
    for n in 0..MODELS {
        let world = random_world(&mut rng);
        // Re-owning a deleted datum resets its policy but not the users'
        // permission state, so the two levels are compared per lifecycle.
        let trace = single_lifecycle_trace(&world, &mut rng, 12);
        let model = &world.model;
        let pa = derive_from_trace(model, &trace, DeriveOptions::default())
            .map_err(|e| format!("model {n}: {e}"))?;
        let theta = image_trace(model, &trace).map_err(|e| format!("model {n}: {e}"))?;
        let run = (trace, theta);
        let r = report(model, &run, &pa).map_err(|e| format!("model {n}: {e}"))?;
        for p in Correspondence::ALL {
            if let PropertyStatus::Fails(_) = r.status(p) {
                return Err(format!(
                    "model {n}: {p} {}\n{}\n{}\n{}",
                    r.status(p),
                    datactl::dsl::serialize_policy(model),
                    datactl::dsl::serialize_trace(&run.0, Some(model)),
                    datactl::dsl::serialize_architecture(&pa)
                ));
            }
        }
        for (what, p, m) in mutations(model, &pa, &r) {
            mutated += 1;
            match report(model, &run, &m) {
                Ok(after) if matches!(after.status(p), PropertyStatus::Fails(_)) => flipped += 1,
                Ok(after) => misses.push(format!("model {n}, {what}: {p} {}", after.status(p))),
                Err(e) => misses.push(format!("model {n}, {what}: {e}")),
            }
        }
    }
    if !misses.is_empty() {
        return Err(format!(
            "{flipped}/{mutated} mutations flipped; {}",
            misses
                .iter()
                .take(3)
                .cloned()
                .collect::<Vec<_>>()
                .join("; ")
        ));
    }
    if mutated == 0 {
        return Err("no mutation was applicable".into());
    }
    Ok(format!(
        "{MODELS} models correspond; {flipped}/{mutated} mutations flipped the targeted property"
    ))
}
