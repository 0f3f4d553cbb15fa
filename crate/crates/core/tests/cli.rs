use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use datactl::dsl::{parse_architecture, serialize_architecture};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures/facebook")
        .join(name)
}

fn datactl(args: &[&dyn AsRef<std::ffi::OsStr>]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_datactl"))
        .args(args.iter().map(|a| a.as_ref()))
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

const SMALL_ARCH: &str = "architecture {
  Own[alice](X{ow=alice, ds={alice}, id=d});
  Possess[sp](X{ow=alice, ds={alice}, id=d});
}
";

#[test]
fn validate_accepts_fixture_policy() {
    let o = datactl(&[&"validate", &fixture("fb.dcp")]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn clean_trace_exits_zero() {
    let o = datactl(&[&"check-trace", &fixture("fb.dcp"), &fixture("fb_clean.dct")]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("compliant"));
}

#[test]
fn violation_exits_one() {
    let o = datactl(&[
        &"check-trace",
        &fixture("fb.dcp"),
        &fixture("fb_badpurpose.dct"),
    ]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("C1"));
}

#[test]
fn usage_and_parse_errors_exit_two() {
    assert_eq!(code(&datactl(&[&"no-such-command"])), 2);
    assert_eq!(code(&datactl(&[&"validate", &"/nonexistent/x.dcp"])), 2);
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.dcp", "actions { unary like }");
    let o = datactl(&[&"validate", &bad]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("1:"));
}

#[test]
fn derived_architecture_equals_golden_and_is_canonical() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("derived.dca");
    let o = datactl(&[
        &"derive-arch",
        &fixture("fb.dcp"),
        &"--events",
        &fixture("fb_all.dct"),
        &"--simplify-friends",
        &"-o",
        &out,
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(
        serialize_architecture(&parse_architecture(&text).unwrap()),
        text
    );

    let o = datactl(&[&"compare-archs", &out, &fixture("simplified.dca")]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("equal"));
    let o = datactl(&[&"compare-archs", &out, &fixture("full.dca")]);
    assert_eq!(code(&o), 1);
}

#[test]
fn derivation_is_deterministic() {
    let run = || {
        stdout(&datactl(&[
            &"derive-arch",
            &fixture("fb.dcp"),
            &"--events",
            &fixture("fb_all.dct"),
        ]))
    };
    assert_eq!(run(), run());
}

#[test]
fn correspondence_holds_on_clean_trace() {
    let o = datactl(&[
        &"check-correspondence",
        &fixture("fb.dcp"),
        &fixture("fb_clean.dct"),
    ]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
}

#[test]
fn has_query_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let arch = write(dir.path(), "a.dca", SMALL_ARCH);
    let sp = write(
        dir.path(),
        "sp.dcq",
        "HAS[sp](X{ow=alice, ds={alice}, id=d})",
    );
    let never = write(
        dir.path(),
        "never.dcq",
        "HAS_never[sp](X{ow=alice, ds={alice}, id=d})",
    );
    assert_eq!(code(&datactl(&[&"eval-has", &arch, &sp])), 0);
    assert_eq!(code(&datactl(&[&"eval-has", &arch, &never])), 1);
    let both = datactl(&[&"eval-has", &arch, &sp, &"--mode", &"both"]);
    assert_eq!(code(&both), 0, "{}", stdout(&both));
}

#[test]
fn state_limit_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let arch = write(dir.path(), "a.dca", SMALL_ARCH);
    let o = datactl(&[&"enumerate", &arch, &"--max-states", &"1"]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn tsv_output_is_tab_separated() {
    let o = datactl(&[
        &"--format",
        &"tsv",
        &"check-trace",
        &fixture("fb.dcp"),
        &fixture("fb_badpurpose.dct"),
    ]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).lines().any(|l| l.contains('\t')));
}
