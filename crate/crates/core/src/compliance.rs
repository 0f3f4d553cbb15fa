//! Trace compliance rules C1–C5.
//!
//! Every rule is evaluated over one execution of the trace (all prefix
//! states plus per-step provenance), so the five checks agree on the states
//! they look at. Violations are collected exhaustively.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::model::{ActionId, DataId, PolicyModel, UserId};
use crate::semantics::{execute, AbstractEvent, EventKind, Execution, Guard, SemanticsError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Rule {
    C1,
    C2,
    C3,
    C4,
    C5,
}

impl Rule {
    pub const ALL: [Rule; 5] = [Rule::C1, Rule::C2, Rule::C3, Rule::C4, Rule::C5];
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for Rule {
    type Err = ComplianceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "C1" => Ok(Rule::C1),
            "C2" => Ok(Rule::C2),
            "C3" => Ok(Rule::C3),
            "C4" => Ok(Rule::C4),
            "C5" => Ok(Rule::C5),
            _ => Err(ComplianceError::UnknownRule(s.to_owned())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub rule: Rule,
    /// Event index (1-based) for event rules; state index for C3/C4.
    pub event_index: Option<usize>,
    pub datum: DataId,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let idx = self
            .event_index
            .map(|i| i.to_string())
            .unwrap_or_else(|| "-".into());
        write!(f, "{}\t{}\t{}\t{}", self.rule, idx, self.datum, self.detail)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ComplianceReport {
    pub violations: Vec<Violation>,
    /// Checks that could not be carried out, e.g. C2 for a delete with no
    /// preceding request.
    pub warnings: Vec<String>,
    pub compliant: bool,
}

impl ComplianceReport {
    pub fn rules(&self) -> BTreeSet<Rule> {
        self.violations.iter().map(|v| v.rule).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ComplianceError {
    #[error("unknown rule {0}")]
    UnknownRule(String),
    #[error("trace does not execute: {0}")]
    Execution(#[from] SemanticsError),
}

/// Why a holder of a datum may hold it, per C3's three disjuncts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Justification {
    pub owner: bool,
    pub act1: bool,
    pub act2: bool,
}

impl Justification {
    pub fn any(self) -> bool {
        self.owner || self.act1 || self.act2
    }
}

/// Per (datum, user): whether the user ever held the datum and which C3
/// disjuncts were satisfied at some state where they did.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HolderAudit {
    pub held: BTreeMap<(DataId, UserId), Justification>,
}

/// Runs the trace and evaluates one rule.
pub fn check_rule(
    model: &PolicyModel,
    rule: Rule,
    trace: &[AbstractEvent],
) -> Result<Vec<Violation>, ComplianceError> {
    let exec = execute(model, trace)?;
    let mut warnings = Vec::new();
    Ok(rule_on(model, trace, &exec, rule, &mut warnings))
}

/// All five rules; violations ordered by rule, then index.
pub fn check_trace(
    model: &PolicyModel,
    trace: &[AbstractEvent],
) -> Result<ComplianceReport, ComplianceError> {
    let exec = execute(model, trace)?;
    Ok(check_execution(model, trace, &exec))
}

pub fn check_execution(
    model: &PolicyModel,
    trace: &[AbstractEvent],
    exec: &Execution,
) -> ComplianceReport {
    let mut violations = Vec::new();
    let mut warnings = Vec::new();
    for rule in Rule::ALL {
        let mut v = rule_on(model, trace, exec, rule, &mut warnings);
        v.sort_by_key(|v| v.event_index);
        violations.extend(v);
    }
    ComplianceReport {
        compliant: violations.is_empty(),
        violations,
        warnings,
    }
}

fn rule_on(
    model: &PolicyModel,
    trace: &[AbstractEvent],
    exec: &Execution,
    rule: Rule,
    warnings: &mut Vec<String>,
) -> Vec<Violation> {
    match rule {
        Rule::C1 => c1(trace, exec),
        Rule::C2 => c2(trace, exec, warnings),
        Rule::C3 => c3(model, trace, exec),
        Rule::C4 => c4(exec),
        Rule::C5 => c5(trace, exec),
    }
}

fn c1(trace: &[AbstractEvent], exec: &Execution) -> Vec<Violation> {
    let mut out = Vec::new();
    for (k, e) in trace.iter().enumerate() {
        let EventKind::Use { purposes } = &e.kind else {
            continue;
        };
        let Some(entry) = exec.states[k].entry(&e.datum) else {
            continue;
        };
        let extra: Vec<_> = purposes
            .difference(&entry.policy.purposes)
            .map(|p| p.to_string())
            .collect();
        if !extra.is_empty() {
            out.push(Violation {
                rule: Rule::C1,
                event_index: Some(k + 1),
                datum: e.datum.clone(),
                detail: format!("purpose {} not authorised", extra.join(",")),
            });
        }
    }
    out
}

fn c2(trace: &[AbstractEvent], exec: &Execution, warnings: &mut Vec<String>) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut last_request: BTreeMap<&DataId, UserId> = BTreeMap::new();
    for (k, e) in trace.iter().enumerate() {
        let pre = exec.states[k].entry(&e.datum);
        let (action, or): (ActionId, UserId) = match &e.kind {
            EventKind::DeleteReq { or } => {
                if let Some(u) = or.as_user() {
                    last_request.insert(&e.datum, u.clone());
                }
                continue;
            }
            EventKind::Delete => match last_request.remove(&e.datum) {
                Some(u) => (ActionId::new("delete"), u),
                None => {
                    warnings.push(format!(
                        "C2 skipped for delete at event {} on {}: no deletion request names a performer",
                        k + 1,
                        e.datum
                    ));
                    continue;
                }
            },
            EventKind::Act1 { or, action }
            | EventKind::UnAct1 { or, action }
            | EventKind::Act2 { or, action, .. }
            | EventKind::UnAct2 { or, action, .. } => match or.as_user() {
                Some(u) => (action.clone(), u.clone()),
                None => continue,
            },
            _ => continue,
        };
        let Some(entry) = pre else { continue };
        if !entry.policy.acp.allows(&action, &or) {
            out.push(Violation {
                rule: Rule::C2,
                event_index: Some(k + 1),
                datum: e.datum.clone(),
                detail: format!("{or} may not perform {action}"),
            });
        }
    }
    out
}

/// Walks the execution and records, per holder, which C3 disjuncts hold.
/// Also returns the first state index at which each holder was unjustified.
fn audit(
    model: &PolicyModel,
    trace: &[AbstractEvent],
    exec: &Execution,
) -> (HolderAudit, BTreeMap<(DataId, UserId), usize>) {
    let mut witnessed: BTreeMap<(DataId, UserId), Justification> = BTreeMap::new();
    let mut audit = HolderAudit::default();
    let mut first_bad = BTreeMap::new();
    for (k, e) in trace.iter().enumerate() {
        let step = &exec.steps[k];
        if step.guard == Guard::Passed {
            let is_act1 = matches!(e.kind, EventKind::Act1 { .. });
            let is_act2 = matches!(e.kind, EventKind::Act2 { .. });
            for u in &step.granted {
                let w = witnessed.entry((e.datum.clone(), u.clone())).or_default();
                w.act1 |= is_act1;
                w.act2 |= is_act2;
            }
        }
        let i = k + 1;
        for (id, entry) in exec.states[i].defined() {
            let ow = model.datum(id).map(|d| &d.data.ow);
            for tar in &entry.h_has {
                if tar.is_sp() {
                    continue;
                }
                let key = (id.clone(), tar.clone());
                let mut j = witnessed.get(&key).copied().unwrap_or_default();
                j.owner = Some(tar) == ow;
                let slot = audit.held.entry(key.clone()).or_default();
                slot.owner |= j.owner;
                slot.act1 |= j.act1;
                slot.act2 |= j.act2;
                if !j.any() {
                    first_bad.entry(key).or_insert(i);
                }
            }
        }
    }
    (audit, first_bad)
}

/// C3 applicability facts for the correspondence check.
pub fn holder_audit(model: &PolicyModel, trace: &[AbstractEvent], exec: &Execution) -> HolderAudit {
    audit(model, trace, exec).0
}

fn c3(model: &PolicyModel, trace: &[AbstractEvent], exec: &Execution) -> Vec<Violation> {
    let (_, first_bad) = audit(model, trace, exec);
    first_bad
        .into_iter()
        .map(|((datum, user), i)| Violation {
            rule: Rule::C3,
            event_index: Some(i),
            datum,
            detail: format!(
                "{user} holds the datum but is neither owner nor an act1/act2 recipient"
            ),
        })
        .collect()
}

/// State indices at which `sp` held each datum, paired with whether storage
/// allowed it.
pub fn sp_holdings(exec: &Execution) -> Vec<(usize, DataId, bool)> {
    let mut out = Vec::new();
    for (i, state) in exec.states.iter().enumerate() {
        for (id, entry) in state.defined() {
            if entry.h_has.contains(&UserId::sp()) {
                out.push((i, id.clone(), entry.policy.storage.sp_can_read()));
            }
        }
    }
    out
}

fn c4(exec: &Execution) -> Vec<Violation> {
    let mut reported = BTreeSet::new();
    let mut out = Vec::new();
    for (i, id, allowed) in sp_holdings(exec) {
        if !allowed && reported.insert(id.clone()) {
            out.push(Violation {
                rule: Rule::C4,
                event_index: Some(i),
                datum: id,
                detail: "sp holds the datum but storage is neither plain nor enc(spkey) at sploc"
                    .into(),
            });
        }
    }
    out
}

/// For each deletion request: (event index, datum, request time, delay,
/// whether a delete followed within the delay).
pub fn deletion_requests(
    trace: &[AbstractEvent],
    exec: &Execution,
) -> Vec<(usize, DataId, u64, u64, bool)> {
    let mut out = Vec::new();
    for (k, e) in trace.iter().enumerate() {
        if !matches!(e.kind, EventKind::DeleteReq { .. }) {
            continue;
        }
        let Some(dd) = exec.states[k]
            .entry(&e.datum)
            .and_then(|en| en.policy.deletion.manual_delay())
        else {
            continue;
        };
        let t1 = e.time;
        let met = trace.iter().any(|d| {
            matches!(d.kind, EventKind::Delete)
                && d.datum == e.datum
                && t1 < d.time
                && d.time <= t1.saturating_add(dd)
        });
        out.push((k + 1, e.datum.clone(), t1, dd, met));
    }
    out
}

fn c5(trace: &[AbstractEvent], exec: &Execution) -> Vec<Violation> {
    deletion_requests(trace, exec)
        .into_iter()
        .filter(|r| !r.4)
        .map(|(i, datum, t, dd, _)| Violation {
            rule: Rule::C5,
            event_index: Some(i),
            datum,
            detail: format!("no delete in ({t}, {}]", t.saturating_add(dd)),
        })
        .collect()
}

/// Renders the report as tab-separated lines plus a summary line.
pub fn render(report: &ComplianceReport) -> String {
    let mut s = String::new();
    for v in &report.violations {
        s.push_str(&v.to_string());
        s.push('\n');
    }
    for w in &report.warnings {
        s.push_str("warning\t");
        s.push_str(w);
        s.push('\n');
    }
    if report.compliant {
        s.push_str("compliant\n");
    } else {
        s.push_str(&format!(
            "non-compliant: {} violation(s)\n",
            report.violations.len()
        ));
    }
    s
}
