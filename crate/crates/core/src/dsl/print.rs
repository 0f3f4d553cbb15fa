//! Canonical serializers. Every output parses back to an equal value.

use std::fmt::Write;

use super::lexer::quote;
use super::parser::expand_alias;
use crate::arch::{
    ActForm, Activity, ArchEvent, ArchEventKind, Architecture, BoundTerm, Grantor, GroupKind,
    PermKey, PermSlot, Term, Value, Variable,
};
use crate::logic::HasProperty;
use crate::model::{GroupAlias, Polarity, PolicyModel, UserSet};
use crate::semantics::{AbstractEvent, EventKind};

fn join<T>(items: impl IntoIterator<Item = T>, f: impl Fn(T) -> String) -> String {
    items.into_iter().map(f).collect::<Vec<_>>().join(", ")
}

fn users(set: &UserSet) -> String {
    format!("{{{}}}", join(set, |u| u.to_string()))
}

fn var(v: &Variable) -> String {
    format!("X{}", var_body(v))
}

fn var_body(v: &Variable) -> String {
    format!("{{ow={}, ds={}, id={}}}", v.ow, users(&v.ds), v.id)
}

fn term(t: &Term) -> String {
    match t {
        Term::Var(v) => var(v),
        Term::Key(u) => format!("key[{u}]"),
        Term::Func(f, args) => format!("{f}({})", join(args, term)),
        Term::Const(v, s) => format!("D{} = {}", var_body(v), quote(s)),
    }
}

fn value(v: &Value) -> String {
    match v {
        Value::Atom(s) => quote(s),
        Value::Bot => "bot".into(),
        Value::Func(f, args) => format!("{f}({})", join(args, value)),
    }
}

fn bound(b: &BoundTerm) -> String {
    match b {
        BoundTerm::Var(v, val) => format!("{}: {}", var(v), value(val)),
        BoundTerm::Key(u, val) => format!("key[{u}]: {}", value(val)),
        BoundTerm::Func(f, args) => format!("{f}({})", join(args, bound)),
        BoundTerm::Const(v, s) => format!("D{} = {}", var_body(v), quote(s)),
    }
}

fn alias_decl(a: &GroupAlias) -> String {
    let (act, has) = match a.polarity {
        Polarity::Group => ("groupact", "grouphas"),
        Polarity::Ungroup => ("ungroupact", "ungrouphas"),
    };
    let mut parts = Vec::new();
    if !a.actions.is_empty() {
        parts.push(format!("{act}({})", join(&a.actions, |x| x.to_string())));
    }
    if a.include_has {
        parts.push(has.to_string());
    }
    format!("alias {} = {};", a.name, parts.join(" + "))
}

pub fn serialize_policy(m: &PolicyModel) -> String {
    let mut out = String::from("actions {\n");
    for (act, unary) in m
        .sets
        .a1
        .iter()
        .map(|a| (a, true))
        .chain(m.sets.a2.iter().map(|a| (a, false)))
    {
        let un = m
            .sets
            .revoker(act)
            .map(|u| u.to_string())
            .unwrap_or_default();
        let kw = if unary { "unary" } else { "binary" };
        let _ = writeln!(out, "  {kw} {act}/{un};");
    }
    out.push_str("}\n");
    for a in &m.aliases {
        let _ = writeln!(out, "\n{}", alias_decl(a));
    }
    for d in m.data.values() {
        let r = &d.data;
        let p = &d.policy;
        let _ = writeln!(out, "\ndata {} {{", r.id);
        let _ = writeln!(out, "  ow = {};", r.ow);
        let _ = writeln!(out, "  ds = {};", users(&r.ds));
        let _ = writeln!(out, "  type = {};", r.ty);
        out.push_str("  policy {\n");
        if !p.purposes.is_empty() {
            let _ = writeln!(
                out,
                "    purposes = {{{}}};",
                join(&p.purposes, |x| x.to_string())
            );
        }
        if !p.deletion.entries.is_empty() {
            let _ = writeln!(
                out,
                "    delete = {{{}}};",
                join(&p.deletion.entries, |(m, d)| format!("{m}: {d}"))
            );
        }
        let _ = writeln!(
            out,
            "    where = {{{}}};",
            join(&p.storage.wh, |x| x.to_string())
        );
        let _ = writeln!(
            out,
            "    how = {{{}}};",
            join(&p.storage.ho, |x| x.to_string())
        );
        for (a, set) in &p.acp.can {
            let _ = writeln!(out, "    can {a} = {};", users(set));
        }
        for (kw, table) in [("by", &p.has.by), ("been", &p.has.been)] {
            for (a, per) in table {
                for (u, set) in per {
                    let _ = writeln!(out, "    has {kw} {a} {u} = {};", users(set));
                }
            }
        }
        if !p.has.group.is_empty() {
            let _ = writeln!(out, "    has group = {};", users(&p.has.group));
        }
        out.push_str("  }\n}\n");
    }
    out
}

/// One event in call syntax, without a trailing separator.
pub fn render_event(e: &AbstractEvent) -> String {
    let t = e.time;
    let dt = &e.datum;
    match &e.kind {
        EventKind::Own { or, value } => match value {
            Some(v) => format!("own(t={t}, or={or}, dt={dt}, value={})", quote(v)),
            None => format!("own(t={t}, or={or}, dt={dt})"),
        },
        EventKind::Store => format!("store(t={t}, dt={dt})"),
        EventKind::Use { purposes } => format!(
            "use(t={t}, dt={dt}, purposes={{{}}})",
            join(purposes, |p| p.to_string())
        ),
        EventKind::DeleteReq { or } => format!("deletereq(t={t}, or={or}, dt={dt})"),
        EventKind::Delete => format!("delete(t={t}, dt={dt})"),
        EventKind::GroupAct { or, tar, action } => {
            format!("groupact(t={t}, or={or}, tar={tar}, dt={dt}, action={action})")
        }
        EventKind::UngroupAct { or, tar, action } => {
            format!("ungroupact(t={t}, or={or}, tar={tar}, dt={dt}, action={action})")
        }
        EventKind::GroupHas { or, tar } => format!("grouphas(t={t}, or={or}, tar={tar}, dt={dt})"),
        EventKind::UngroupHas { or, tar } => {
            format!("ungrouphas(t={t}, or={or}, tar={tar}, dt={dt})")
        }
        EventKind::Act1 { or, action } | EventKind::UnAct1 { or, action } => {
            format!("{action}(t={t}, or={or}, dt={dt})")
        }
        EventKind::Act2 { or, tar, action } | EventKind::UnAct2 { or, tar, action } => {
            format!("{action}(t={t}, or={or}, tar={tar}, dt={dt})")
        }
    }
}

/// If `events` starts with a complete expansion of a declared alias, the
/// alias call and the number of events it covers.
fn alias_call(events: &[AbstractEvent], model: &PolicyModel) -> Option<(String, usize)> {
    let first = &events[0];
    let alias = model.alias(first.via.as_deref()?)?;
    let (or, tar) = match &first.kind {
        EventKind::GroupAct { or, tar, .. }
        | EventKind::UngroupAct { or, tar, .. }
        | EventKind::GroupHas { or, tar }
        | EventKind::UngroupHas { or, tar } => (or, tar),
        _ => return None,
    };
    let expected = expand_alias(alias, first.time, &first.datum, or, tar);
    let n = expected.len();
    if n == 0 || events.len() < n || events[..n] != expected[..] {
        return None;
    }
    let call = format!(
        "{}(t={}, or={or}, tar={tar}, dt={})",
        alias.name, first.time, first.datum
    );
    Some((call, n))
}

pub fn serialize_trace(events: &[AbstractEvent], model: Option<&PolicyModel>) -> String {
    if events.is_empty() {
        return "trace {}\n".into();
    }
    let mut out = String::from("trace {\n");
    let mut k = 0;
    while k < events.len() {
        let (line, n) = model
            .and_then(|m| alias_call(&events[k..], m))
            .unwrap_or_else(|| (render_event(&events[k]), 1));
        let _ = writeln!(out, "  {line};");
        k += n;
    }
    out.push_str("}\n");
    out
}

pub fn render_activity(a: &Activity) -> String {
    match a {
        Activity::Own { by, term: t } => format!("Own[{by}]({})", term(t)),
        Activity::Possess { term: t } => format!("Possess[sp]({})", term(t)),
        Activity::PossessOneOf { vars } => format!("PossessOneOf[sp]({{{}}})", join(vars, var)),
        Activity::Group {
            undo,
            kind,
            by,
            tar,
            var: x,
        } => {
            let un = if *undo { "Un" } else { "" };
            match kind {
                GroupKind::Act(action) => {
                    format!("{un}GroupAct<{action}>[{by}, {tar}]({})", var(x))
                }
                GroupKind::Has => format!("{un}GroupHas[{by}, {tar}]({})", var(x)),
            }
        }
        Activity::Alias {
            name,
            by,
            tar,
            var: x,
        } => format!("Alias<{name}>[{by}, {tar}]({})", var(x)),
        Activity::DeleteReq { by, var: x } => format!("DeleteReq[{by}]({})", var(x)),
        Activity::Delete { var: x, dd } => format!("Delete[sp]({}, dd={dd})", var(x)),
        Activity::Act {
            form,
            action,
            by,
            tar,
            var: x,
        } => match tar {
            Some(tar) => format!("{}<{action}>[{by}, {tar}]({})", form.name(), var(x)),
            None => format!("{}<{action}>[{by}]({})", form.name(), var(x)),
        },
    }
}

fn permit(slot: &PermSlot, set: &UserSet) -> String {
    let key = match &slot.key {
        PermKey::Can(a) => format!("can {a}"),
        PermKey::By(a, u) => format!("by {a} {u}"),
        PermKey::Been(a, u) => format!("been {a} {u}"),
        PermKey::Group => "group".into(),
    };
    let grantor = match &slot.grantor {
        Grantor::Any => "*".to_string(),
        Grantor::User(u) => u.to_string(),
    };
    format!(
        "permit {key} ({grantor}, {}) = {};",
        var(&slot.var),
        users(set)
    )
}

pub fn serialize_architecture(pa: &Architecture) -> String {
    if pa.is_empty() && pa.aliases.is_empty() && pa.revokes.is_empty() && pa.permissions.is_empty()
    {
        return "architecture {}\n".into();
    }
    let mut out = String::from("architecture {\n");
    for a in pa.aliases.values() {
        let _ = writeln!(out, "  {}", alias_decl(a));
    }
    for (un, act) in &pa.revokes {
        let _ = writeln!(out, "  revoke {un} = {act};");
    }
    for a in &pa.activities {
        let _ = writeln!(out, "  {};", render_activity(a));
    }
    for (slot, set) in &pa.permissions {
        let _ = writeln!(out, "  {}", permit(slot, set));
    }
    out.push_str("}\n");
    out
}

fn opt_value(x: &Variable, v: &Option<Value>) -> String {
    match v {
        Some(v) => format!("{}: {}", var(x), value(v)),
        None => var(x),
    }
}

pub fn render_arch_event(e: &ArchEvent) -> String {
    let t = e.time;
    match &e.kind {
        ArchEventKind::Own {
            by,
            term: tm,
            value: v,
        } => format!("own[{by}]({}: {}, t={t})", term(tm), value(v)),
        ArchEventKind::Possess { bound: b } => format!("possess[sp]({}, t={t})", bound(b)),
        ArchEventKind::Group {
            undo,
            kind,
            by,
            tar,
            var: x,
            value: v,
        } => {
            let un = if *undo { "un" } else { "" };
            match kind {
                GroupKind::Act(a) => format!("{un}groupact<{a}>[{by}, {tar}]({}, t={t})", var(x)),
                GroupKind::Has => {
                    format!("{un}grouphas[{by}, {tar}]({}, t={t})", opt_value(x, v))
                }
            }
        }
        ArchEventKind::Alias {
            name,
            by,
            tar,
            var: x,
            value: v,
        } => format!("alias<{name}>[{by}, {tar}]({}, t={t})", opt_value(x, v)),
        ArchEventKind::DeleteReq {
            by,
            var: x,
            value: v,
        } => {
            format!("deletereq[{by}]({}: {}, t={t})", var(x), value(v))
        }
        ArchEventKind::Delete { var: x, value: v } => {
            format!("delete[sp]({}: {}, t={t})", var(x), value(v))
        }
        ArchEventKind::Act {
            form,
            action,
            by,
            tar,
            var: x,
            value: v,
        } => {
            let name = match form {
                ActForm::Act1 => "act1",
                ActForm::UnAct1 => "unact1",
                ActForm::Act2 => "act2",
                ActForm::UnAct2 => "unact2",
            };
            let who = match tar {
                Some(tar) => format!("{by}, {tar}"),
                None => by.to_string(),
            };
            format!("{name}<{action}>[{who}]({}: {}, t={t})", var(x), value(v))
        }
    }
}

pub fn serialize_arch_trace(events: &[ArchEvent]) -> String {
    if events.is_empty() {
        return "archtrace {}\n".into();
    }
    let mut out = String::from("archtrace {\n");
    for e in events {
        let _ = writeln!(out, "  {};", render_arch_event(e));
    }
    out.push_str("}\n");
    out
}

pub fn serialize_query(q: &HasProperty) -> String {
    fn go(q: &HasProperty) -> String {
        match q {
            HasProperty::HasSp(x) => format!("HAS[sp]({})", var(x)),
            HasProperty::Has { user, var: x, time } => format!("HAS[{user}]({}, t={time})", var(x)),
            HasProperty::HasNot { user, var: x, time } => {
                format!("HAS_not[{user}]({}, t={time})", var(x))
            }
            HasProperty::HasNever { user, var: x } => format!("HAS_never[{user}]({})", var(x)),
            HasProperty::And(a, b) => {
                let wrap = |p: &HasProperty| match p {
                    HasProperty::And(..) => format!("({})", go(p)),
                    _ => go(p),
                };
                format!("{} AND {}", wrap(a), wrap(b))
            }
        }
    }
    format!("{}\n", go(q))
}
