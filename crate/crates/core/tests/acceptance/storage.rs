//! The storage mapping for each location/form case, against activity sets
//! written out in the architecture syntax.

use datactl::arch::Variable;
use datactl::dsl::parse_architecture;
use datactl::mapping::map_storage;
use datactl::model::{Location, StorageForm, StorageSpec};

const X: &str = "X{ow=alice, ds={alice}, id=photo1}";

fn case(wh: Location, ho: &[StorageForm]) -> StorageSpec {
    StorageSpec {
        wh: [wh].into(),
        ho: ho.iter().copied().collect(),
    }
}

pub fn cases() -> Vec<(&'static str, StorageSpec, String)> {
    vec![
        (
            "clientloc",
            case(Location::ClientLoc, &[]),
            format!("Own[alice]({X});"),
        ),
        (
            "sploc plain",
            case(Location::SpLoc, &[StorageForm::Plain]),
            format!("Own[alice]({X}); Possess[sp]({X});"),
        ),
        (
            "sploc enc(spkey)",
            case(Location::SpLoc, &[StorageForm::EncSpKey]),
            format!("Own[alice]({X}); Possess[sp](enc({X}, key[sp])); Possess[sp](key[sp]);"),
        ),
        (
            "sploc enc(clkey)",
            case(Location::SpLoc, &[StorageForm::EncClKey]),
            format!("Own[alice]({X}); Own[alice](key[alice]); Possess[sp](enc({X}, key[alice]));"),
        ),
    ]
}

pub fn run() -> Result<String, String> {
    let x = Variable::new("alice", ["alice".into()].into(), "photo1");
    let mut ok = 0;
    let all = cases();
    for (name, spec, body) in &all {
        let want = parse_architecture(&format!("architecture {{ {body} }}"))
            .map_err(|e| format!("{name}: expected set does not parse: {e}"))?
            .activities;
        let got = map_storage(&x, spec).map_err(|e| format!("{name}: {e}"))?;
        if got != want {
            return Err(format!("{name}: got {got:?}, want {want:?}"));
        }
        ok += 1;
    }
    Ok(format!("{ok}/{} storage cases", all.len()))
}
