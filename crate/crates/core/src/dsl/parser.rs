//! Recursive-descent parsers for every document kind.

use std::collections::BTreeMap;

use super::lexer::{tokenize, Tok, Token};
use super::{ParseError, SourceSpan};
use crate::arch::{
    is_consistent, ActForm, Activity, ArchEvent, ArchEventKind, Architecture, BoundTerm, FuncName,
    Grantor, GroupKind, Index, PermKey, PermSlot, Term, Value, Variable,
};
use crate::logic::HasProperty;
use crate::model::{
    validate_model, ActionId, ActionKind, ActivitySets, DataId, DataRef, Datum, DeletionMode,
    GroupAlias, Location, Polarity, Policy, PolicyModel, Principal, Purpose, StorageForm, Time,
    TypeName, UserId, UserSet,
};
use crate::semantics::{AbstractEvent, EventKind};

type Result<T> = std::result::Result<T, ParseError>;

struct Cursor {
    toks: Vec<Token>,
    pos: usize,
}

impl Cursor {
    fn new(text: &str) -> Result<Self> {
        Ok(Self {
            toks: tokenize(text)?,
            pos: 0,
        })
    }

    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn peek_tok(&self) -> &Tok {
        &self.peek().tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].tok
    }

    fn span(&self) -> SourceSpan {
        self.peek().span.clone()
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn at_eof(&self) -> bool {
        self.peek_tok() == &Tok::Eof
    }

    fn is_punct(&self, c: char) -> bool {
        self.peek_tok() == &Tok::Punct(c)
    }

    fn is_ident(&self, s: &str) -> bool {
        matches!(self.peek_tok(), Tok::Ident(i) if i == s)
    }

    fn eat_punct(&mut self, c: char) -> bool {
        let hit = self.is_punct(c);
        if hit {
            self.bump();
        }
        hit
    }

    fn eat_ident(&mut self, s: &str) -> bool {
        let hit = self.is_ident(s);
        if hit {
            self.bump();
        }
        hit
    }

    fn unexpected(&self, expected: &[&str]) -> ParseError {
        let mut e = ParseError::new(self.span(), format!("unexpected {}", self.peek_tok()));
        e.expected = expected.iter().map(|s| s.to_string()).collect();
        e
    }

    fn expect_punct(&mut self, c: char) -> Result<SourceSpan> {
        if self.is_punct(c) {
            Ok(self.bump().span)
        } else {
            Err(self.unexpected(&[&format!("'{c}'")]))
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<SourceSpan> {
        if self.is_ident(kw) {
            Ok(self.bump().span)
        } else {
            Err(self.unexpected(&[&format!("'{kw}'")]))
        }
    }

    fn ident(&mut self, what: &str) -> Result<(String, SourceSpan)> {
        match self.peek_tok().clone() {
            Tok::Ident(s) => Ok((s, self.bump().span)),
            _ => Err(self.unexpected(&[what])),
        }
    }

    fn int(&mut self, what: &str) -> Result<u64> {
        match self.peek_tok().clone() {
            Tok::Int(n) => {
                self.bump();
                Ok(n)
            }
            _ => Err(self.unexpected(&[what])),
        }
    }

    fn string(&mut self, what: &str) -> Result<String> {
        match self.peek_tok().clone() {
            Tok::Str(s) => {
                self.bump();
                Ok(s)
            }
            _ => Err(self.unexpected(&[what])),
        }
    }

    fn user(&mut self) -> Result<UserId> {
        self.ident("user name").map(|(s, _)| UserId::new(s))
    }

    fn principal(&mut self) -> Result<Principal> {
        match self.peek_tok().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(Principal::User(UserId::new(s)))
            }
            Tok::Var(s) => {
                self.bump();
                Ok(Principal::Var(s))
            }
            _ => Err(self.unexpected(&["user name", "?variable"])),
        }
    }

    /// `{a, b}` or a single bare element.
    fn set_of<T>(
        &mut self,
        what: &str,
        mut item: impl FnMut(&mut Self) -> Result<T>,
    ) -> Result<Vec<T>> {
        if !self.eat_punct('{') {
            return Ok(vec![item(self)?]);
        }
        let mut out = Vec::new();
        if self.eat_punct('}') {
            return Ok(out);
        }
        loop {
            out.push(item(self)?);
            if self.eat_punct('}') {
                return Ok(out);
            }
            if !self.eat_punct(',') {
                return Err(self.unexpected(&["','", "'}'", what]));
            }
        }
    }

    fn user_set(&mut self) -> Result<UserSet> {
        Ok(self.set_of("user name", Self::user)?.into_iter().collect())
    }

    fn ident_set(&mut self, what: &str) -> Result<Vec<String>> {
        let w = what.to_string();
        self.set_of(what, move |c| c.ident(&w).map(|(s, _)| s))
    }

    fn expect_eof(&mut self) -> Result<()> {
        if self.at_eof() {
            Ok(())
        } else {
            Err(self.unexpected(&["end of input"]))
        }
    }
}

// ---------------------------------------------------------------- policy

pub fn policy(text: &str) -> Result<(PolicyModel, Vec<SourceSpan>)> {
    let mut c = Cursor::new(text)?;
    let mut spans = Vec::new();
    if !c.is_ident("actions") {
        let mut e = ParseError::new(c.span(), "expected 'actions' block");
        e.expected.insert("'actions'".into());
        return Err(e);
    }
    let mut model = PolicyModel::default();
    spans.push(c.span());
    model.sets = actions_block(&mut c)?;
    let mut data_spans: BTreeMap<DataId, SourceSpan> = BTreeMap::new();
    let mut alias_spans: BTreeMap<String, SourceSpan> = BTreeMap::new();
    while !c.at_eof() {
        let span = c.span();
        spans.push(span.clone());
        if c.is_ident("alias") {
            let a = alias_decl(&mut c)?;
            if model.alias(&a.name).is_some() {
                return Err(ParseError::new(
                    span,
                    format!("alias {} declared twice", a.name),
                ));
            }
            alias_spans.insert(a.name.clone(), span);
            model.aliases.push(a);
        } else if c.is_ident("data") {
            let d = data_block(&mut c)?;
            if model.data.contains_key(&d.data.id) {
                return Err(ParseError::new(
                    span,
                    format!("datum {} declared twice", d.data.id),
                ));
            }
            data_spans.insert(d.data.id.clone(), span);
            model.data.insert(d.data.id.clone(), d);
        } else {
            return Err(c.unexpected(&["'alias'", "'data'", "end of input"]));
        }
    }
    let errors = validate_model(&model);
    if let Some(first) = errors.first() {
        let span = spans.first().cloned().unwrap_or_default();
        let mut e = ParseError::new(span, format!("invalid policy: {first}"));
        if errors.len() > 1 {
            e.message
                .push_str(&format!(" (and {} more)", errors.len() - 1));
        }
        return Err(e);
    }
    Ok((model, spans))
}

fn actions_block(c: &mut Cursor) -> Result<ActivitySets> {
    c.expect_keyword("actions")?;
    c.expect_punct('{')?;
    let mut sets = ActivitySets::default();
    loop {
        if c.eat_punct('}') {
            return Ok(sets);
        }
        let binary = if c.eat_ident("unary") {
            false
        } else if c.eat_ident("binary") {
            true
        } else {
            return Err(c.unexpected(&["'unary'", "'binary'", "'}'"]));
        };
        let (act, _) = c.ident("action name")?;
        c.expect_punct('/')?;
        let (unact, _) = c.ident("revoke action name")?;
        c.expect_punct(';')?;
        if binary {
            sets.add_binary(act.as_str(), unact.as_str());
        } else {
            sets.add_unary(act.as_str(), unact.as_str());
        }
    }
}

fn alias_decl(c: &mut Cursor) -> Result<GroupAlias> {
    let start = c.expect_keyword("alias")?;
    let (name, _) = c.ident("alias name")?;
    c.expect_punct('=')?;
    let mut polarity: Option<Polarity> = None;
    let mut actions = Vec::new();
    let mut include_has = false;
    let mut set_polarity = |p: Polarity, span: &SourceSpan| -> Result<()> {
        match polarity {
            Some(q) if q != p => Err(ParseError::new(
                span.clone(),
                "alias mixes group and ungroup parts",
            )),
            _ => {
                polarity = Some(p);
                Ok(())
            }
        }
    };
    loop {
        let span = c.span();
        if c.eat_ident("groupact") || c.is_ident("ungroupact") {
            let p = if c.eat_ident("ungroupact") {
                Polarity::Ungroup
            } else {
                Polarity::Group
            };
            set_polarity(p, &span)?;
            c.expect_punct('(')?;
            loop {
                let (a, _) = c.ident("action name")?;
                actions.push(ActionId::new(a));
                if c.eat_punct(')') {
                    break;
                }
                c.expect_punct(',')?;
            }
        } else if c.eat_ident("grouphas") {
            set_polarity(Polarity::Group, &span)?;
            include_has = true;
        } else if c.eat_ident("ungrouphas") {
            set_polarity(Polarity::Ungroup, &span)?;
            include_has = true;
        } else {
            return Err(c.unexpected(&[
                "'groupact'",
                "'ungroupact'",
                "'grouphas'",
                "'ungrouphas'",
            ]));
        }
        if !c.eat_punct('+') {
            break;
        }
    }
    c.expect_punct(';')?;
    let polarity = polarity.ok_or_else(|| ParseError::new(start, "empty alias"))?;
    Ok(GroupAlias {
        name,
        polarity,
        actions,
        include_has,
    })
}

fn data_block(c: &mut Cursor) -> Result<Datum> {
    let start = c.expect_keyword("data")?;
    let (id, _) = c.ident("datum id")?;
    c.expect_punct('{')?;
    let mut ow = None;
    let mut ds = None;
    let mut ty = None;
    let mut policy = None;
    loop {
        let span = c.span();
        let dup =
            |what: &str| ParseError::new(span.clone(), format!("duplicate '{what}' in datum {id}"));
        if c.eat_punct('}') {
            break;
        } else if c.eat_ident("ow") {
            c.expect_punct('=')?;
            if ow.replace(c.user()?).is_some() {
                return Err(dup("ow"));
            }
            c.expect_punct(';')?;
        } else if c.eat_ident("ds") {
            c.expect_punct('=')?;
            if ds.replace(c.user_set()?).is_some() {
                return Err(dup("ds"));
            }
            c.expect_punct(';')?;
        } else if c.eat_ident("type") {
            c.expect_punct('=')?;
            let (t, _) = c.ident("type name")?;
            if ty.replace(TypeName::new(t)).is_some() {
                return Err(dup("type"));
            }
            c.expect_punct(';')?;
        } else if c.is_ident("policy") {
            let p = policy_block(c)?;
            if policy.replace(p).is_some() {
                return Err(dup("policy"));
            }
        } else {
            return Err(c.unexpected(&["'ow'", "'ds'", "'type'", "'policy'", "'}'"]));
        }
    }
    let missing =
        |what: &str| ParseError::new(start.clone(), format!("datum {id} has no '{what}'"));
    let data = DataRef {
        ow: ow.ok_or_else(|| missing("ow"))?,
        ds: ds.ok_or_else(|| missing("ds"))?,
        ty: ty.ok_or_else(|| missing("type"))?,
        id: DataId::new(id.clone()),
    };
    Ok(Datum {
        data,
        policy: policy.ok_or_else(|| missing("policy"))?,
    })
}

fn policy_block(c: &mut Cursor) -> Result<Policy> {
    c.expect_keyword("policy")?;
    c.expect_punct('{')?;
    let mut p = Policy::default();
    loop {
        if c.eat_punct('}') {
            return Ok(p);
        }
        if c.eat_ident("purposes") {
            c.expect_punct('=')?;
            p.purposes = c
                .ident_set("purpose")?
                .into_iter()
                .map(Purpose::new)
                .collect();
        } else if c.eat_ident("delete") {
            c.expect_punct('=')?;
            p.deletion.entries = c.set_of("deletion mode", |c| {
                let mode = if c.eat_ident("man") {
                    DeletionMode::Man
                } else if c.eat_ident("aut") {
                    DeletionMode::Aut
                } else {
                    return Err(c.unexpected(&["'man'", "'aut'"]));
                };
                c.expect_punct(':')?;
                Ok((mode, c.int("deletion delay")?))
            })?;
        } else if c.eat_ident("where") {
            c.expect_punct('=')?;
            p.storage.wh = c
                .set_of("location", |c| {
                    if c.eat_ident("clientloc") {
                        Ok(Location::ClientLoc)
                    } else if c.eat_ident("sploc") {
                        Ok(Location::SpLoc)
                    } else {
                        Err(c.unexpected(&["'clientloc'", "'sploc'"]))
                    }
                })?
                .into_iter()
                .collect();
        } else if c.eat_ident("how") {
            c.expect_punct('=')?;
            p.storage.ho = c
                .set_of("storage form", |c| {
                    if c.eat_ident("plain") {
                        return Ok(StorageForm::Plain);
                    }
                    if !c.eat_ident("enc") {
                        return Err(c.unexpected(&["'plain'", "'enc'"]));
                    }
                    c.expect_punct('(')?;
                    let form = if c.eat_ident("spkey") {
                        StorageForm::EncSpKey
                    } else if c.eat_ident("clkey") {
                        StorageForm::EncClKey
                    } else {
                        return Err(c.unexpected(&["'spkey'", "'clkey'"]));
                    };
                    c.expect_punct(')')?;
                    Ok(form)
                })?
                .into_iter()
                .collect();
        } else if c.eat_ident("can") {
            let (a, _) = c.ident("action name")?;
            c.expect_punct('=')?;
            let set = c.user_set()?;
            p.acp.can.entry(ActionId::new(a)).or_default().extend(set);
        } else if c.eat_ident("has") {
            if c.eat_ident("group") {
                c.expect_punct('=')?;
                let set = c.user_set()?;
                p.has.group.extend(set);
            } else {
                let by = if c.eat_ident("by") {
                    true
                } else if c.eat_ident("been") {
                    false
                } else {
                    return Err(c.unexpected(&["'by'", "'been'", "'group'"]));
                };
                let (a, _) = c.ident("action name")?;
                let u = c.user()?;
                c.expect_punct('=')?;
                let set = c.user_set()?;
                let table = if by { &mut p.has.by } else { &mut p.has.been };
                table
                    .entry(ActionId::new(a))
                    .or_default()
                    .entry(u)
                    .or_default()
                    .extend(set);
            }
        } else {
            return Err(c.unexpected(&[
                "'purposes'",
                "'delete'",
                "'where'",
                "'how'",
                "'can'",
                "'has'",
                "'}'",
            ]));
        }
        c.expect_punct(';')?;
    }
}

// ----------------------------------------------------------------- trace

#[derive(Debug, Clone)]
enum Arg {
    Int(u64),
    Name(Principal),
    Str(String),
    Set(Vec<String>),
}

struct Args {
    call: String,
    span: SourceSpan,
    map: BTreeMap<String, (Arg, SourceSpan)>,
}

impl Args {
    fn err(&self, msg: impl Into<String>) -> ParseError {
        ParseError::new(self.span.clone(), msg)
    }

    fn take(&mut self, key: &str) -> Option<(Arg, SourceSpan)> {
        self.map.remove(key)
    }

    fn time(&mut self) -> Result<Time> {
        match self.take("t") {
            Some((Arg::Int(n), _)) => Ok(n),
            Some((_, s)) => Err(ParseError::new(s, "t must be an integer")),
            None => Err(self.err(format!("{} requires t", self.call))),
        }
    }

    fn principal(&mut self, key: &str) -> Result<Principal> {
        match self.take(key) {
            Some((Arg::Name(p), _)) => Ok(p),
            Some((_, s)) => Err(ParseError::new(s, format!("{key} must be a user"))),
            None => Err(self.err(format!("arity error: {} requires {key}", self.call))),
        }
    }

    fn name(&mut self, key: &str) -> Result<(String, SourceSpan)> {
        match self.take(key) {
            Some((Arg::Name(Principal::User(u)), s)) => Ok((u.as_str().to_owned(), s)),
            Some((_, s)) => Err(ParseError::new(s, format!("{key} must be a name"))),
            None => Err(self.err(format!("{} requires {key}", self.call))),
        }
    }

    fn finish(self) -> Result<()> {
        match self.map.into_iter().next() {
            Some((k, (_, s))) => Err(ParseError::new(
                s,
                format!("unexpected argument {k} for {}", self.call),
            )),
            None => Ok(()),
        }
    }
}

fn args(c: &mut Cursor, call: &str, span: SourceSpan) -> Result<Args> {
    c.expect_punct('(')?;
    let mut map = BTreeMap::new();
    if !c.eat_punct(')') {
        loop {
            let (key, kspan) = c.ident("argument name")?;
            c.expect_punct('=')?;
            let value = match c.peek_tok().clone() {
                Tok::Int(n) => {
                    c.bump();
                    Arg::Int(n)
                }
                Tok::Str(s) => {
                    c.bump();
                    Arg::Str(s)
                }
                Tok::Ident(_) | Tok::Var(_) => Arg::Name(c.principal()?),
                Tok::Punct('{') => Arg::Set(c.ident_set("name")?),
                _ => return Err(c.unexpected(&["integer", "string", "name", "'{'"])),
            };
            if map.insert(key.clone(), (value, kspan.clone())).is_some() {
                return Err(ParseError::new(kspan, format!("duplicate argument {key}")));
            }
            if c.eat_punct(')') {
                break;
            }
            if !c.eat_punct(',') {
                return Err(c.unexpected(&["','", "')'"]));
            }
        }
    }
    Ok(Args {
        call: call.to_owned(),
        span,
        map,
    })
}

enum Resolved {
    Simple(&'static str),
    Group {
        undo: bool,
        action: Option<ActionId>,
    },
    Act(ActionKind, ActionId),
    Alias(GroupAlias),
}

fn resolve(name: &str, model: &PolicyModel) -> Option<Resolved> {
    let declared = |a: &str| {
        model
            .sets
            .kind_of(&ActionId::new(a))
            .filter(|k| *k != ActionKind::Predefined)
    };
    Some(match name {
        "own" => Resolved::Simple("own"),
        "store" => Resolved::Simple("store"),
        "use" => Resolved::Simple("use"),
        "deletereq" => Resolved::Simple("deletereq"),
        "delete" => Resolved::Simple("delete"),
        "grouphas" => Resolved::Simple("grouphas"),
        "ungrouphas" => Resolved::Simple("ungrouphas"),
        "groupact" => Resolved::Group {
            undo: false,
            action: None,
        },
        "ungroupact" => Resolved::Group {
            undo: true,
            action: None,
        },
        _ => {
            if let Some(k) = declared(name) {
                Resolved::Act(k, ActionId::new(name))
            } else if let Some(a) = model.alias(name) {
                Resolved::Alias(a.clone())
            } else if let Some(rest) = name
                .strip_prefix("ungroup")
                .filter(|r| declared(r).is_some())
            {
                Resolved::Group {
                    undo: true,
                    action: Some(ActionId::new(rest)),
                }
            } else {
                let rest = name
                    .strip_prefix("group")
                    .filter(|r| declared(r).is_some())?;
                Resolved::Group {
                    undo: false,
                    action: Some(ActionId::new(rest)),
                }
            }
        }
    })
}

pub fn trace(text: &str, model: &PolicyModel) -> Result<(Vec<AbstractEvent>, Vec<SourceSpan>)> {
    let mut c = Cursor::new(text)?;
    let mut events = Vec::new();
    let mut spans = Vec::new();
    let mut last: Option<Time> = None;
    let (close, sep) = if c.eat_ident("trace") {
        c.expect_punct('{')?;
        (Some('}'), ';')
    } else if c.eat_punct('[') {
        (Some(']'), ',')
    } else {
        (None, ';')
    };
    loop {
        match close {
            Some(cl) if c.eat_punct(cl) => break,
            None if c.at_eof() => break,
            _ => {}
        }
        let span = c.span();
        let batch = trace_event(&mut c, model, span.clone())?;
        let t = batch[0].time;
        if let Some(prev) = last {
            if t <= prev {
                return Err(ParseError::new(
                    span,
                    format!("timestamps must be strictly increasing: {t} after {prev}"),
                ));
            }
        }
        last = Some(t);
        for e in batch {
            spans.push(span.clone());
            events.push(e);
        }
        match close {
            Some(cl) if sep == ',' => {
                if !c.eat_punct(',') && !c.is_punct(cl) {
                    return Err(c.unexpected(&["','", "']'"]));
                }
            }
            _ => {
                c.expect_punct(';')?;
            }
        }
    }
    c.expect_eof()?;
    Ok((events, spans))
}

fn trace_event(
    c: &mut Cursor,
    model: &PolicyModel,
    span: SourceSpan,
) -> Result<Vec<AbstractEvent>> {
    let (name, _) = c.ident("event name")?;
    let resolved = resolve(&name, model)
        .ok_or_else(|| ParseError::new(span.clone(), format!("unknown action {name}")))?;
    let mut a = args(c, &name, span.clone())?;
    let time = a.time()?;
    let (dt, dspan) = a.name("dt")?;
    let datum = DataId::new(dt.clone());
    if model.datum(&datum).is_none() {
        return Err(ParseError::new(dspan, format!("unknown datum {dt}")));
    }
    let mk = |kind| AbstractEvent::new(time, datum.clone(), kind);
    let out = match resolved {
        Resolved::Simple("own") => {
            let or = a.principal("or")?;
            let value = match a.take("value") {
                Some((Arg::Str(s), _)) => Some(s),
                Some((_, s)) => return Err(ParseError::new(s, "value must be a string")),
                None => None,
            };
            vec![mk(EventKind::Own { or, value })]
        }
        Resolved::Simple("store") => vec![mk(EventKind::Store)],
        Resolved::Simple("use") => {
            let purposes = match a.take("purposes") {
                Some((Arg::Set(s), _)) => s.into_iter().map(Purpose::new).collect(),
                Some((Arg::Name(Principal::User(u)), _)) => [Purpose::new(u.as_str())].into(),
                Some((_, s)) => return Err(ParseError::new(s, "purposes must be a set")),
                None => return Err(a.err("use requires purposes")),
            };
            vec![mk(EventKind::Use { purposes })]
        }
        Resolved::Simple("deletereq") => vec![mk(EventKind::DeleteReq {
            or: a.principal("or")?,
        })],
        Resolved::Simple("delete") => vec![mk(EventKind::Delete)],
        Resolved::Simple(has) => {
            let or = a.principal("or")?;
            let tar = a.principal("tar")?;
            vec![mk(if has == "grouphas" {
                EventKind::GroupHas { or, tar }
            } else {
                EventKind::UngroupHas { or, tar }
            })]
        }
        Resolved::Group { undo, action } => {
            let or = a.principal("or")?;
            let tar = a.principal("tar")?;
            let action = match action {
                Some(act) => act,
                None => {
                    let (act, s) = a.name("action")?;
                    let id = ActionId::new(act.clone());
                    if !matches!(model.sets.kind_of(&id), Some(k) if k != ActionKind::Predefined) {
                        return Err(ParseError::new(s, format!("unknown action {act}")));
                    }
                    id
                }
            };
            vec![mk(if undo {
                EventKind::UngroupAct { or, tar, action }
            } else {
                EventKind::GroupAct { or, tar, action }
            })]
        }
        Resolved::Act(kind, action) => {
            let or = a.principal("or")?;
            if kind.is_binary() {
                let tar = a.principal("tar")?;
                vec![mk(if kind.is_revoke() {
                    EventKind::UnAct2 { or, tar, action }
                } else {
                    EventKind::Act2 { or, tar, action }
                })]
            } else {
                if a.map.contains_key("tar") {
                    return Err(a.err(format!("arity error: {name} takes no tar")));
                }
                vec![mk(if kind.is_revoke() {
                    EventKind::UnAct1 { or, action }
                } else {
                    EventKind::Act1 { or, action }
                })]
            }
        }
        Resolved::Alias(alias) => {
            let or = a.principal("or")?;
            let tar = a.principal("tar")?;
            expand_alias(&alias, time, &datum, &or, &tar)
        }
    };
    a.finish()?;
    Ok(out)
}

/// The group events an alias call stands for, in declaration order.
pub fn expand_alias(
    alias: &GroupAlias,
    time: Time,
    datum: &DataId,
    or: &Principal,
    tar: &Principal,
) -> Vec<AbstractEvent> {
    let undo = alias.polarity == Polarity::Ungroup;
    let mut kinds: Vec<EventKind> = alias
        .actions
        .iter()
        .map(|action| {
            let (or, tar, action) = (or.clone(), tar.clone(), action.clone());
            if undo {
                EventKind::UngroupAct { or, tar, action }
            } else {
                EventKind::GroupAct { or, tar, action }
            }
        })
        .collect();
    if alias.include_has {
        let (or, tar) = (or.clone(), tar.clone());
        kinds.push(if undo {
            EventKind::UngroupHas { or, tar }
        } else {
            EventKind::GroupHas { or, tar }
        });
    }
    kinds
        .into_iter()
        .map(|kind| AbstractEvent {
            time,
            datum: datum.clone(),
            kind,
            via: Some(alias.name.clone()),
        })
        .collect()
}

// ---------------------------------------------------------- architecture

pub fn architecture(text: &str) -> Result<(Architecture, Vec<SourceSpan>)> {
    let mut c = Cursor::new(text)?;
    c.expect_keyword("architecture")?;
    c.expect_punct('{')?;
    let mut pa = Architecture::new();
    let mut spans = Vec::new();
    let mut alias_uses: Vec<(String, SourceSpan)> = Vec::new();
    loop {
        if c.eat_punct('}') {
            break;
        }
        let span = c.span();
        spans.push(span.clone());
        if c.is_ident("permit") {
            let (slot, set) = permit(&mut c)?;
            pa.grant(slot, set);
        } else if c.eat_ident("revoke") {
            let (un, _) = c.ident("revoke action")?;
            c.expect_punct('=')?;
            let (act, _) = c.ident("action")?;
            c.expect_punct(';')?;
            pa.revokes.insert(ActionId::new(un), ActionId::new(act));
        } else if c.is_ident("alias") {
            let a = alias_decl(&mut c)?;
            if pa.aliases.contains_key(&a.name) {
                return Err(ParseError::new(
                    span,
                    format!("alias {} declared twice", a.name),
                ));
            }
            pa.aliases.insert(a.name.clone(), a);
        } else {
            let a = activity(&mut c)?;
            if let Activity::Alias { name, .. } = &a {
                alias_uses.push((name.clone(), span));
            }
            c.expect_punct(';')?;
            pa.insert(a);
        }
    }
    c.expect_eof()?;
    for (name, span) in alias_uses {
        if !pa.aliases.contains_key(&name) {
            return Err(ParseError::new(span, format!("undeclared alias {name}")));
        }
    }
    let dups = pa.inconsistencies();
    if !dups.is_empty() {
        let list: Vec<String> = dups.iter().map(|t| t.to_string()).collect();
        return Err(ParseError::new(
            SourceSpan::new(1, 1),
            format!(
                "inconsistent architecture: more than one owner for {}",
                list.join("; ")
            ),
        ));
    }
    debug_assert!(is_consistent(&pa).0);
    Ok((pa, spans))
}

fn permit(c: &mut Cursor) -> Result<(PermSlot, UserSet)> {
    c.expect_keyword("permit")?;
    let key = if c.eat_ident("can") {
        PermKey::Can(ActionId::new(c.ident("action")?.0))
    } else if c.eat_ident("by") {
        let a = ActionId::new(c.ident("action")?.0);
        PermKey::By(a, c.user()?)
    } else if c.eat_ident("been") {
        let a = ActionId::new(c.ident("action")?.0);
        PermKey::Been(a, c.user()?)
    } else if c.eat_ident("group") {
        PermKey::Group
    } else {
        return Err(c.unexpected(&["'can'", "'by'", "'been'", "'group'"]));
    };
    c.expect_punct('(')?;
    let grantor = if c.eat_punct('*') {
        Grantor::Any
    } else {
        Grantor::User(c.user()?)
    };
    c.expect_punct(',')?;
    let var = variable(c)?;
    c.expect_punct(')')?;
    c.expect_punct('=')?;
    let set = c.user_set()?;
    c.expect_punct(';')?;
    Ok((PermSlot { grantor, key, var }, set))
}

fn variable(c: &mut Cursor) -> Result<Variable> {
    c.expect_keyword("X")?;
    variable_body(c)
}

fn variable_body(c: &mut Cursor) -> Result<Variable> {
    c.expect_punct('{')?;
    c.expect_keyword("ow")?;
    c.expect_punct('=')?;
    let ow = c.user()?;
    c.expect_punct(',')?;
    c.expect_keyword("ds")?;
    c.expect_punct('=')?;
    let ds = c.user_set()?;
    c.expect_punct(',')?;
    c.expect_keyword("id")?;
    c.expect_punct('=')?;
    let id = match c.peek_tok().clone() {
        Tok::Ident(s) => {
            c.bump();
            Index::Const(DataId::new(s))
        }
        Tok::Var(s) => {
            c.bump();
            Index::Var(s)
        }
        _ => return Err(c.unexpected(&["datum id", "?variable"])),
    };
    c.expect_punct('}')?;
    Ok(Variable { ow, ds, id })
}

fn func_name(c: &Cursor) -> Option<FuncName> {
    if !matches!(c.peek_at(1), Tok::Punct('(')) {
        return None;
    }
    match c.peek_tok() {
        Tok::Ident(s) if s == "enc" => Some(FuncName::Enc),
        Tok::Ident(s) if s == "hash" => Some(FuncName::Hash),
        Tok::Ident(s) if s == "sig" => Some(FuncName::Sig),
        _ => None,
    }
}

fn check_arity(f: FuncName, n: usize, span: SourceSpan) -> Result<()> {
    match f.arity() {
        Some(k) if k != n => Err(ParseError::new(
            span,
            format!("{f} takes {k} arguments, found {n}"),
        )),
        _ if n == 0 => Err(ParseError::new(span, format!("{f} needs arguments"))),
        _ => Ok(()),
    }
}

fn term(c: &mut Cursor) -> Result<Term> {
    let span = c.span();
    if let Some(f) = func_name(c) {
        c.bump();
        c.expect_punct('(')?;
        let mut args = vec![term(c)?];
        while c.eat_punct(',') {
            args.push(term(c)?);
        }
        c.expect_punct(')')?;
        check_arity(f, args.len(), span)?;
        return Ok(Term::Func(f, args));
    }
    if c.eat_ident("key") {
        c.expect_punct('[')?;
        let u = c.user()?;
        c.expect_punct(']')?;
        return Ok(Term::Key(u));
    }
    if c.eat_ident("D") {
        let v = variable_body(c)?;
        c.expect_punct('=')?;
        let s = c.string("constant value")?;
        return Ok(Term::Const(v, s));
    }
    if c.is_ident("X") {
        return Ok(Term::Var(variable(c)?));
    }
    Err(c.unexpected(&["'X'", "'D'", "'key'", "'enc'", "'hash'", "'sig'"]))
}

fn bracket_principals(c: &mut Cursor, n: usize) -> Result<Vec<Principal>> {
    c.expect_punct('[')?;
    let mut out = vec![c.principal()?];
    for _ in 1..n {
        c.expect_punct(',')?;
        out.push(c.principal()?);
    }
    c.expect_punct(']')?;
    Ok(out)
}

fn angle_name(c: &mut Cursor, what: &str) -> Result<String> {
    c.expect_punct('<')?;
    let (s, _) = c.ident(what)?;
    c.expect_punct('>')?;
    Ok(s)
}

fn sp_bracket(c: &mut Cursor) -> Result<()> {
    c.expect_punct('[')?;
    c.expect_keyword("sp")?;
    c.expect_punct(']')?;
    Ok(())
}

fn paren_var(c: &mut Cursor) -> Result<Variable> {
    c.expect_punct('(')?;
    let v = variable(c)?;
    c.expect_punct(')')?;
    Ok(v)
}

const ACTIVITY_NAMES: [&str; 15] = [
    "'Own'",
    "'Possess'",
    "'PossessOneOf'",
    "'GroupAct'",
    "'UnGroupAct'",
    "'GroupHas'",
    "'UnGroupHas'",
    "'Alias'",
    "'DeleteReq'",
    "'Delete'",
    "'Act1'",
    "'UnAct1'",
    "'Act2'",
    "'UnAct2'",
    "'permit'",
];

fn activity(c: &mut Cursor) -> Result<Activity> {
    let Tok::Ident(head) = c.peek_tok().clone() else {
        return Err(c.unexpected(&ACTIVITY_NAMES));
    };
    match head.as_str() {
        "Own" => {
            c.bump();
            let by = bracket_principals(c, 1)?.remove(0);
            c.expect_punct('(')?;
            let term = term(c)?;
            c.expect_punct(')')?;
            Ok(Activity::Own { by, term })
        }
        "Possess" => {
            c.bump();
            sp_bracket(c)?;
            c.expect_punct('(')?;
            let term = term(c)?;
            c.expect_punct(')')?;
            Ok(Activity::Possess { term })
        }
        "PossessOneOf" => {
            c.bump();
            sp_bracket(c)?;
            c.expect_punct('(')?;
            let vars = c.set_of("variable", variable)?.into_iter().collect();
            c.expect_punct(')')?;
            Ok(Activity::PossessOneOf { vars })
        }
        "GroupAct" | "UnGroupAct" => {
            c.bump();
            let action = ActionId::new(angle_name(c, "action")?);
            let p = bracket_principals(c, 2)?;
            let var = paren_var(c)?;
            Ok(Activity::Group {
                undo: head == "UnGroupAct",
                kind: GroupKind::Act(action),
                by: p[0].clone(),
                tar: p[1].clone(),
                var,
            })
        }
        "GroupHas" | "UnGroupHas" => {
            c.bump();
            let p = bracket_principals(c, 2)?;
            let var = paren_var(c)?;
            Ok(Activity::Group {
                undo: head == "UnGroupHas",
                kind: GroupKind::Has,
                by: p[0].clone(),
                tar: p[1].clone(),
                var,
            })
        }
        "Alias" => {
            c.bump();
            let name = angle_name(c, "alias name")?;
            let p = bracket_principals(c, 2)?;
            let var = paren_var(c)?;
            Ok(Activity::Alias {
                name,
                by: p[0].clone(),
                tar: p[1].clone(),
                var,
            })
        }
        "DeleteReq" => {
            c.bump();
            let by = bracket_principals(c, 1)?.remove(0);
            let var = paren_var(c)?;
            Ok(Activity::DeleteReq { by, var })
        }
        "Delete" => {
            c.bump();
            sp_bracket(c)?;
            c.expect_punct('(')?;
            let var = variable(c)?;
            c.expect_punct(',')?;
            c.expect_keyword("dd")?;
            c.expect_punct('=')?;
            let dd = c.int("deletion delay")?;
            c.expect_punct(')')?;
            Ok(Activity::Delete { var, dd })
        }
        "Act1" | "UnAct1" | "Act2" | "UnAct2" => {
            c.bump();
            let form = match head.as_str() {
                "Act1" => ActForm::Act1,
                "UnAct1" => ActForm::UnAct1,
                "Act2" => ActForm::Act2,
                _ => ActForm::UnAct2,
            };
            let action = ActionId::new(angle_name(c, "action")?);
            let mut p = bracket_principals(c, if form.is_binary() { 2 } else { 1 })?;
            let var = paren_var(c)?;
            let tar = if form.is_binary() {
                Some(p.remove(1))
            } else {
                None
            };
            Ok(Activity::Act {
                form,
                action,
                by: p.remove(0),
                tar,
                var,
            })
        }
        _ => Err(c.unexpected(&ACTIVITY_NAMES)),
    }
}

// ---------------------------------------------------- architecture trace

pub fn arch_trace(text: &str) -> Result<(Vec<ArchEvent>, Vec<SourceSpan>)> {
    let mut c = Cursor::new(text)?;
    let block = c.eat_ident("archtrace");
    if block {
        c.expect_punct('{')?;
    }
    let mut events: Vec<ArchEvent> = Vec::new();
    let mut spans = Vec::new();
    loop {
        if block && c.eat_punct('}') {
            break;
        }
        if !block && c.at_eof() {
            break;
        }
        let span = c.span();
        let e = arch_event(&mut c)?;
        if let Some(prev) = events.last() {
            if e.time <= prev.time {
                return Err(ParseError::new(
                    span,
                    format!(
                        "timestamps must be strictly increasing: {} after {}",
                        e.time, prev.time
                    ),
                ));
            }
        }
        c.expect_punct(';')?;
        spans.push(span);
        events.push(e);
    }
    c.expect_eof()?;
    Ok((events, spans))
}

fn bracket_users(c: &mut Cursor, n: usize) -> Result<Vec<UserId>> {
    c.expect_punct('[')?;
    let mut out = vec![c.user()?];
    for _ in 1..n {
        c.expect_punct(',')?;
        out.push(c.user()?);
    }
    c.expect_punct(']')?;
    Ok(out)
}

fn value(c: &mut Cursor) -> Result<Value> {
    let span = c.span();
    if let Some(f) = func_name(c) {
        c.bump();
        c.expect_punct('(')?;
        let mut args = vec![value(c)?];
        while c.eat_punct(',') {
            args.push(value(c)?);
        }
        c.expect_punct(')')?;
        check_arity(f, args.len(), span)?;
        return Ok(Value::Func(f, args));
    }
    if c.eat_ident("bot") {
        return Ok(Value::Bot);
    }
    match c.peek_tok().clone() {
        Tok::Str(s) => {
            c.bump();
            Ok(Value::Atom(s))
        }
        _ => Err(c.unexpected(&["string", "'bot'", "'enc'", "'hash'", "'sig'"])),
    }
}

fn bound_term(c: &mut Cursor) -> Result<BoundTerm> {
    let span = c.span();
    if let Some(f) = func_name(c) {
        c.bump();
        c.expect_punct('(')?;
        let mut args = vec![bound_term(c)?];
        while c.eat_punct(',') {
            args.push(bound_term(c)?);
        }
        c.expect_punct(')')?;
        check_arity(f, args.len(), span)?;
        return Ok(BoundTerm::Func(f, args));
    }
    match term(c)? {
        Term::Var(v) => {
            c.expect_punct(':')?;
            Ok(BoundTerm::Var(v, value(c)?))
        }
        Term::Key(u) => {
            c.expect_punct(':')?;
            Ok(BoundTerm::Key(u, value(c)?))
        }
        Term::Const(v, s) => Ok(BoundTerm::Const(v, s)),
        Term::Func(..) => unreachable!("function terms are handled above"),
    }
}

fn time_arg(c: &mut Cursor) -> Result<Time> {
    c.expect_punct(',')?;
    c.expect_keyword("t")?;
    c.expect_punct('=')?;
    c.int("time")
}

fn var_value(c: &mut Cursor) -> Result<(Variable, Value)> {
    let v = variable(c)?;
    c.expect_punct(':')?;
    Ok((v, value(c)?))
}

fn opt_value(c: &mut Cursor) -> Result<(Variable, Option<Value>)> {
    let v = variable(c)?;
    let val = if c.eat_punct(':') {
        Some(value(c)?)
    } else {
        None
    };
    Ok((v, val))
}

fn arch_event(c: &mut Cursor) -> Result<ArchEvent> {
    let Tok::Ident(head) = c.peek_tok().clone() else {
        return Err(c.unexpected(&["event name"]));
    };
    let kind;
    let time;
    match head.as_str() {
        "own" => {
            c.bump();
            let by = bracket_users(c, 1)?.remove(0);
            c.expect_punct('(')?;
            let t = term(c)?;
            c.expect_punct(':')?;
            let v = value(c)?;
            time = time_arg(c)?;
            kind = ArchEventKind::Own {
                by,
                term: t,
                value: v,
            };
        }
        "possess" => {
            c.bump();
            sp_bracket(c)?;
            c.expect_punct('(')?;
            let bound = bound_term(c)?;
            time = time_arg(c)?;
            kind = ArchEventKind::Possess { bound };
        }
        "groupact" | "ungroupact" => {
            c.bump();
            let action = ActionId::new(angle_name(c, "action")?);
            let u = bracket_users(c, 2)?;
            c.expect_punct('(')?;
            let var = variable(c)?;
            time = time_arg(c)?;
            kind = ArchEventKind::Group {
                undo: head == "ungroupact",
                kind: GroupKind::Act(action),
                by: u[0].clone(),
                tar: u[1].clone(),
                var,
                value: None,
            };
        }
        "grouphas" | "ungrouphas" => {
            c.bump();
            let u = bracket_users(c, 2)?;
            c.expect_punct('(')?;
            let (var, value) = opt_value(c)?;
            time = time_arg(c)?;
            kind = ArchEventKind::Group {
                undo: head == "ungrouphas",
                kind: GroupKind::Has,
                by: u[0].clone(),
                tar: u[1].clone(),
                var,
                value,
            };
        }
        "alias" => {
            c.bump();
            let name = angle_name(c, "alias name")?;
            let u = bracket_users(c, 2)?;
            c.expect_punct('(')?;
            let (var, value) = opt_value(c)?;
            time = time_arg(c)?;
            kind = ArchEventKind::Alias {
                name,
                by: u[0].clone(),
                tar: u[1].clone(),
                var,
                value,
            };
        }
        "deletereq" => {
            c.bump();
            let by = bracket_users(c, 1)?.remove(0);
            c.expect_punct('(')?;
            let (var, value) = var_value(c)?;
            time = time_arg(c)?;
            kind = ArchEventKind::DeleteReq { by, var, value };
        }
        "delete" => {
            c.bump();
            sp_bracket(c)?;
            c.expect_punct('(')?;
            let (var, value) = var_value(c)?;
            time = time_arg(c)?;
            kind = ArchEventKind::Delete { var, value };
        }
        "act1" | "unact1" | "act2" | "unact2" => {
            c.bump();
            let form = match head.as_str() {
                "act1" => ActForm::Act1,
                "unact1" => ActForm::UnAct1,
                "act2" => ActForm::Act2,
                _ => ActForm::UnAct2,
            };
            let action = ActionId::new(angle_name(c, "action")?);
            let mut u = bracket_users(c, if form.is_binary() { 2 } else { 1 })?;
            c.expect_punct('(')?;
            let (var, value) = var_value(c)?;
            time = time_arg(c)?;
            let tar = if form.is_binary() {
                Some(u.remove(1))
            } else {
                None
            };
            kind = ArchEventKind::Act {
                form,
                action,
                by: u.remove(0),
                tar,
                var,
                value,
            };
        }
        _ => {
            return Err(c.unexpected(&[
                "'own'",
                "'possess'",
                "'groupact'",
                "'ungroupact'",
                "'grouphas'",
                "'ungrouphas'",
                "'alias'",
                "'deletereq'",
                "'delete'",
                "'act1'",
                "'unact1'",
                "'act2'",
                "'unact2'",
            ]))
        }
    }
    c.expect_punct(')')?;
    Ok(ArchEvent::new(kind, time))
}

// ----------------------------------------------------------------- query

pub fn query(text: &str) -> Result<HasProperty> {
    let mut c = Cursor::new(text)?;
    let phi = conjunction(&mut c)?;
    c.eat_punct(';');
    c.expect_eof()?;
    Ok(phi)
}

fn conjunction(c: &mut Cursor) -> Result<HasProperty> {
    let mut phi = atom(c)?;
    while c.eat_ident("AND") {
        let rhs = atom(c)?;
        phi = HasProperty::and(phi, rhs);
    }
    Ok(phi)
}

fn atom(c: &mut Cursor) -> Result<HasProperty> {
    if c.eat_punct('(') {
        let phi = conjunction(c)?;
        c.expect_punct(')')?;
        return Ok(phi);
    }
    let which = match c.peek_tok() {
        Tok::Ident(s) if s == "HAS" || s == "HAS_not" || s == "HAS_never" => s.clone(),
        _ => return Err(c.unexpected(&["'HAS'", "'HAS_not'", "'HAS_never'", "'('"])),
    };
    c.bump();
    c.expect_punct('[')?;
    let user = c.user()?;
    c.expect_punct(']')?;
    c.expect_punct('(')?;
    let var = variable(c)?;
    let time = if c.eat_punct(',') {
        c.expect_keyword("t")?;
        c.expect_punct('=')?;
        Some(c.int("time")?)
    } else {
        None
    };
    let span = c.span();
    c.expect_punct(')')?;
    match (which.as_str(), time) {
        ("HAS", Some(time)) => Ok(HasProperty::Has { user, var, time }),
        ("HAS", None) if user.is_sp() => Ok(HasProperty::HasSp(var)),
        ("HAS_not", Some(time)) => Ok(HasProperty::HasNot { user, var, time }),
        ("HAS_never", None) => Ok(HasProperty::HasNever { user, var }),
        ("HAS_never", Some(_)) => Err(ParseError::new(span, "HAS_never takes no time")),
        (w, _) => {
            let mut e = ParseError::new(span, format!("{w}[{user}] requires a time"));
            e.expected.insert("','".into());
            Err(e)
        }
    }
}
