//! The social-network example: declared action sets, the event template
//! inventory and both derived architectures against their goldens.

use std::path::PathBuf;

use datactl::dsl::{parse_architecture, parse_policy, parse_trace};
use datactl::mapping::{compare_architectures, derive_architecture, DeriveOptions, SetRelation};
use datactl::model::{ActionId, DataId};
use datactl::semantics::possible_events;

fn fixture(name: &str) -> Result<String, String> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures/facebook")
        .join(name);
    std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))
}

fn names(xs: &[&str]) -> Vec<ActionId> {
    xs.iter().map(|x| ActionId::new(*x)).collect()
}

pub fn run() -> Result<String, String> {
    let m = parse_policy(&fixture("fb.dcp")?).map_err(|e| e.to_string())?;
    let expected = [
        (&m.sets.a1, names(&["like", "comment"])),
        (&m.sets.ua1, names(&["unlike", "uncomment"])),
        (&m.sets.a2, names(&["post", "tag", "mention", "share"])),
        (
            &m.sets.ua2,
            names(&["unpost", "untag", "unmention", "unshare"]),
        ),
    ];
    for (got, want) in expected {
        if *got != want {
            return Err(format!("action set {got:?}, want {want:?}"));
        }
    }
    let photo = m.datum(&DataId::new("photo1")).ok_or("photo1 missing")?;
    let templates = possible_events(&m.sets, &photo.data, &photo.policy);
    if templates.len() != 31 {
        return Err(format!("{} event templates, want 31", templates.len()));
    }
    let events = parse_trace(&fixture("fb_all.dct")?, &m).map_err(|e| e.to_string())?;
    let instantiated: Vec<_> = templates.iter().zip(1..).map(|(t, k)| t.at(k)).collect();
    if instantiated != events {
        return Err("template inventory differs from fb_all.dct".into());
    }
    for (golden, simplify_friends) in [("full.dca", false), ("simplified.dca", true)] {
        let derived = derive_architecture(&m, &events, DeriveOptions { simplify_friends })
            .map_err(|e| format!("{golden}: {e}"))?;
        let want = parse_architecture(&fixture(golden)?).map_err(|e| format!("{golden}: {e}"))?;
        let cmp = compare_architectures(&derived, &want);
        if cmp.relation != SetRelation::Equal || derived != want {
            return Err(format!("{golden} differs:\n{}", cmp.diff));
        }
    }
    Ok("action sets, 31 templates, full.dca and simplified.dca match".into())
}
