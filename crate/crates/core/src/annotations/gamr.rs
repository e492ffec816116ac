use std::fmt;
use std::iter::Peekable;
use std::str::Chars;

use serde::{Deserialize, Serialize};

use super::{jsonl, AnnotationError};
use crate::blockworld::{BlockId, Color, Descriptor, Shape};
use crate::participants::Participant;

const FORMAT: &str = "gestures";

const CONFIRM_WORDS: &[&str] = &[
    "nod", "yes", "agree", "confirm", "thumbs-up", "thumbsup", "ok", "okay", "affirm",
];
const DENY_WORDS: &[&str] = &[
    "shake", "headshake", "head-shake", "no", "disagree", "deny", "thumbs-down", "thumbsdown",
    "negate",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GestureKind {
    Deixis,
    Iconic,
    Emblem,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Confirm,
    Deny,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GestureTarget {
    Block(BlockId),
    Descriptor(Descriptor),
    Group,
    /// A referent that is neither a block nor a block type, kept verbatim.
    Other(String),
}

impl fmt::Display for GestureTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GestureTarget::Block(b) => write!(f, "{b}"),
            GestureTarget::Descriptor(d) => write!(f, "{d}"),
            GestureTarget::Group => f.write_str("group"),
            GestureTarget::Other(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GestureMeaning {
    Polarity(Polarity),
    /// Uninterpreted concept of an iconic gesture.
    Token(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Addressee {
    Participant(Participant),
    Group,
}

impl fmt::Display for Addressee {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Addressee::Participant(p) => write!(f, "{p}"),
            Addressee::Group => f.write_str("group"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GestureSemantics {
    pub gesturer: Participant,
    pub kind: GestureKind,
    pub target: Option<GestureTarget>,
    pub meaning: Option<GestureMeaning>,
    pub addressee: Addressee,
}

impl GestureSemantics {
    pub fn polarity(&self) -> Option<Polarity> {
        match self.meaning {
            Some(GestureMeaning::Polarity(p)) => Some(p),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GestureEvent {
    pub id: String,
    pub start: f64,
    pub end: f64,
    pub semantics: GestureSemantics,
    /// The annotation text as read, kept for round trips.
    pub gamr: String,
}

impl GestureEvent {
    pub fn gesturer(&self) -> Participant {
        self.semantics.gesturer
    }

    pub fn kind(&self) -> GestureKind {
        self.semantics.kind
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Value {
    Node(Node),
    Atom(String),
}

#[derive(Debug, Clone, PartialEq)]
struct Node {
    var: String,
    concept: String,
    roles: Vec<(String, Value)>,
}

impl Node {
    fn role(&self, name: &str) -> Option<&Value> {
        self.roles
            .iter()
            .find(|(r, _)| r.eq_ignore_ascii_case(name))
            .map(|(_, v)| v)
    }
}

impl Value {
    /// The concept of a node, or the atom itself.
    fn concept(&self) -> &str {
        match self {
            Value::Node(n) => &n.concept,
            Value::Atom(a) => a,
        }
    }

    fn var(&self) -> Option<&str> {
        match self {
            Value::Node(n) => Some(&n.var),
            Value::Atom(_) => None,
        }
    }
}

struct Parser<'a> {
    chars: Peekable<Chars<'a>>,
}

fn malformed(msg: impl Into<String>) -> AnnotationError {
    AnnotationError::MalformedGraph(msg.into())
}

impl Parser<'_> {
    fn skip_ws(&mut self) {
        while self.chars.next_if(|c| c.is_whitespace()).is_some() {}
    }

    fn expect(&mut self, want: char) -> Result<(), AnnotationError> {
        self.skip_ws();
        match self.chars.next() {
            Some(c) if c == want => Ok(()),
            Some(c) => Err(malformed(format!("expected `{want}`, found `{c}`"))),
            None => Err(malformed(format!("expected `{want}`, found end of text"))),
        }
    }

    fn symbol(&mut self) -> Result<String, AnnotationError> {
        self.skip_ws();
        if self.chars.next_if_eq(&'"').is_some() {
            let mut s = String::new();
            loop {
                match self.chars.next() {
                    Some('"') => return Ok(s),
                    Some('\\') => s.extend(self.chars.next()),
                    Some(c) => s.push(c),
                    None => return Err(malformed("unterminated string")),
                }
            }
        }
        let mut s = String::new();
        while let Some(c) = self
            .chars
            .next_if(|c| !c.is_whitespace() && !matches!(c, '(' | ')' | '/' | ':'))
        {
            s.push(c);
        }
        if s.is_empty() {
            return Err(match self.chars.peek() {
                Some(c) => malformed(format!("unexpected `{c}`")),
                None => malformed("unexpected end of text"),
            });
        }
        Ok(s)
    }

    fn node(&mut self) -> Result<Node, AnnotationError> {
        self.expect('(')?;
        let var = self.symbol()?;
        self.expect('/')?;
        let concept = self.symbol()?;
        let mut roles = Vec::new();
        loop {
            self.skip_ws();
            match self.chars.peek() {
                Some(')') => {
                    self.chars.next();
                    return Ok(Node {
                        var,
                        concept,
                        roles,
                    });
                }
                Some(':') => {
                    self.chars.next();
                    let role = self.symbol()?;
                    self.skip_ws();
                    let value = if self.chars.peek() == Some(&'(') {
                        Value::Node(self.node()?)
                    } else {
                        Value::Atom(self.symbol()?)
                    };
                    roles.push((role, value));
                }
                Some(c) => return Err(malformed(format!("unexpected `{c}` in `{concept}` node"))),
                None => return Err(malformed("unbalanced parentheses")),
            }
        }
    }
}

fn parse_graph(text: &str) -> Result<Node, AnnotationError> {
    let mut p = Parser {
        chars: text.chars().peekable(),
    };
    let node = p.node()?;
    p.skip_ws();
    if let Some(c) = p.chars.next() {
        return Err(malformed(format!("trailing `{c}` after graph")));
    }
    Ok(node)
}

/// `nod-GA`, `nod-01` and `Nod` all reduce to `nod`.
fn frame(concept: &str) -> String {
    let mut c = concept.to_ascii_lowercase();
    for suffix in ["-ga", "-gesture"] {
        if let Some(s) = c.strip_suffix(suffix) {
            c = s.to_string();
        }
    }
    if let Some((head, sense)) = c.rsplit_once('-') {
        if !sense.is_empty() && sense.bytes().all(|b| b.is_ascii_digit()) {
            c = head.to_string();
        }
    }
    c
}

fn word_polarity(word: &str) -> Option<Polarity> {
    if CONFIRM_WORDS.contains(&word) {
        Some(Polarity::Confirm)
    } else if DENY_WORDS.contains(&word) {
        Some(Polarity::Deny)
    } else {
        None
    }
}

/// Reads `blue-square-1`, `blue-square`, `bs1` or `BlueShort`.
fn block_term(token: &str) -> Option<GestureTarget> {
    if let Ok(b) = token.parse::<BlockId>() {
        return Some(GestureTarget::Block(b));
    }
    if let Ok(d) = token.parse::<Descriptor>() {
        return Some(GestureTarget::Descriptor(d));
    }
    let words: Vec<String> = token
        .split(['-', '_', ' '])
        .filter(|w| !w.is_empty())
        .map(str::to_ascii_lowercase)
        .collect();
    let (color, shape, rest) = match words.as_slice() {
        [c, s, rest @ ..] => (c.parse::<Color>().ok()?, Shape::from_word(s)?, rest),
        _ => return None,
    };
    match rest {
        [] => Some(GestureTarget::Descriptor(Descriptor { color, shape })),
        [w] if w == "block" => Some(GestureTarget::Descriptor(Descriptor { color, shape })),
        [n] => {
            let index: u32 = n.parse().ok().filter(|i| *i > 0)?;
            Some(GestureTarget::Block(BlockId::new(color, shape, index)))
        }
        _ => None,
    }
}

fn target(value: &Value) -> GestureTarget {
    let concept = value.concept();
    if concept.eq_ignore_ascii_case("group") {
        return GestureTarget::Group;
    }
    block_term(concept)
        .or_else(|| value.var().and_then(block_term))
        .unwrap_or_else(|| GestureTarget::Other(concept.to_string()))
}

fn participant(value: &Value) -> Option<Participant> {
    Participant::normalize(value.concept()).or_else(|| value.var().and_then(Participant::normalize))
}

/// Interprets one GAMR-lite graph. Pointing (`deixis-GA`) needs a gesturer
/// and a target; emblems are recognised by their frame or by an `emblem`
/// frame whose `:ARG1` or `:polarity` names the gesture; every other frame is
/// treated as iconic and keeps its concept as an opaque token.
pub fn parse_gamr(text: &str) -> Result<GestureSemantics, AnnotationError> {
    let root = parse_graph(text)?;
    let arg0 = root
        .role("ARG0")
        .ok_or_else(|| AnnotationError::MissingRole("ARG0".into()))?;
    let gesturer = participant(arg0).ok_or_else(|| {
        malformed(format!("`{}` is not a participant", arg0.concept()))
    })?;
    let addressee = match root.role("ARG2") {
        Some(v) => participant(v).map_or(Addressee::Group, Addressee::Participant),
        None => Addressee::Group,
    };
    let arg1 = root.role("ARG1");
    let f = frame(&root.concept);

    let (kind, target, meaning) = if f == "deixis" || f == "point" {
        let arg1 = arg1.ok_or_else(|| AnnotationError::MissingRole("ARG1".into()))?;
        (GestureKind::Deixis, Some(target(arg1)), None)
    } else if let Some(p) = word_polarity(&f) {
        (GestureKind::Emblem, arg1.map(target), Some(GestureMeaning::Polarity(p)))
    } else if f == "emblem" {
        let polarity = match root.role("polarity").map(Value::concept) {
            Some("-") => Some(Polarity::Deny),
            Some("+") => Some(Polarity::Confirm),
            _ => arg1.and_then(|v| word_polarity(&frame(v.concept()))),
        };
        match polarity {
            Some(p) => (GestureKind::Emblem, None, Some(GestureMeaning::Polarity(p))),
            None => (
                GestureKind::Iconic,
                None,
                Some(GestureMeaning::Token(
                    arg1.map_or(root.concept.clone(), |v| v.concept().to_string()),
                )),
            ),
        }
    } else {
        (
            GestureKind::Iconic,
            arg1.map(target),
            Some(GestureMeaning::Token(root.concept.clone())),
        )
    };
    Ok(GestureSemantics {
        gesturer,
        kind,
        target,
        meaning,
        addressee,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GestureRecord {
    t_start: f64,
    t_end: f64,
    gamr: String,
}

/// Parses `gestures.jsonl`. Events get ids `g1`, `g2`, … in file order.
pub fn parse_gestures(text: &str) -> Result<Vec<GestureEvent>, AnnotationError> {
    let mut out = Vec::new();
    for (n, (line, rec)) in jsonl::records::<GestureRecord>(text, FORMAT)?.into_iter().enumerate() {
        if rec.t_start > rec.t_end {
            return Err(AnnotationError::schema(
                line,
                format!("gesture ends ({}) before it starts ({})", rec.t_end, rec.t_start),
            ));
        }
        let semantics = parse_gamr(&rec.gamr).map_err(|e| match e {
            AnnotationError::MalformedGraph(m) => malformed(format!("line {line}: {m}")),
            other => other,
        })?;
        out.push(GestureEvent {
            id: format!("g{}", n + 1),
            start: rec.t_start,
            end: rec.t_end,
            semantics,
            gamr: rec.gamr,
        });
    }
    Ok(out)
}

pub fn serialize_gestures(events: &[GestureEvent]) -> String {
    jsonl::write(
        FORMAT,
        events.iter().map(|e| GestureRecord {
            t_start: e.start,
            t_end: e.end,
            gamr: e.gamr.clone(),
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pointing_at_a_blue_square() {
        let g = parse_gamr(
            "(d / deixis-GA\n    :ARG0 (d1 / director-1)\n    :ARG1 (bs1 / blue-square-1)\n    :ARG2 (g / group))",
        )
        .unwrap();
        assert_eq!(g.kind, GestureKind::Deixis);
        assert_eq!(g.gesturer, Participant::D1);
        assert_eq!(g.target, Some(GestureTarget::Block("bs1".parse().unwrap())));
        assert_eq!(g.addressee, Addressee::Group);
    }

    #[test]
    fn nods_and_shakes() {
        let g = parse_gamr("(n / nod-GA :ARG0 (d2 / director-2))").unwrap();
        assert_eq!(g.kind, GestureKind::Emblem);
        assert_eq!(g.gesturer, Participant::D2);
        assert_eq!(g.polarity(), Some(Polarity::Confirm));

        let g = parse_gamr("(e / emblem-GA :ARG0 (b / builder) :ARG1 (s / shake-01) :ARG2 (d / director-3))")
            .unwrap();
        assert_eq!(g.polarity(), Some(Polarity::Deny));
        assert_eq!(g.addressee, Addressee::Participant(Participant::D3));

        let g = parse_gamr("(e / emblem-GA :ARG0 (b / builder) :polarity -)").unwrap();
        assert_eq!(g.polarity(), Some(Polarity::Deny));
    }

    #[test]
    fn unknown_frames_are_iconic() {
        let g = parse_gamr("(i / stack-GA :ARG0 (d3 / director-3) :ARG1 (y / yellow-rectangle))").unwrap();
        assert_eq!(g.kind, GestureKind::Iconic);
        assert_eq!(g.meaning, Some(GestureMeaning::Token("stack-GA".into())));
        assert_eq!(
            g.target,
            Some(GestureTarget::Descriptor("YellowLong".parse().unwrap()))
        );
    }

    #[test]
    fn missing_roles_and_bad_syntax() {
        assert_eq!(
            parse_gamr("(d / deixis-GA :ARG1 (bs1 / blue-square-1))"),
            Err(AnnotationError::MissingRole("ARG0".into()))
        );
        assert_eq!(
            parse_gamr("(d / deixis-GA :ARG0 (d1 / director-1))"),
            Err(AnnotationError::MissingRole("ARG1".into()))
        );
        assert!(matches!(
            parse_gamr("(d / deixis-GA :ARG0 (d1 / director-1)"),
            Err(AnnotationError::MalformedGraph(_))
        ));
        assert!(matches!(parse_gamr("d / x"), Err(AnnotationError::MalformedGraph(_))));
    }

    #[test]
    fn jsonl_round_trip() {
        let text = format!(
            "{}\n{}\n",
            jsonl::header(FORMAT),
            r#"{"t_start":4.0,"t_end":5.5,"gamr":"(n / nod-GA :ARG0 (d2 / director-2))"}"#
        );
        let events = parse_gestures(&text).unwrap();
        assert_eq!(events[0].id, "g1");
        assert_eq!(serialize_gestures(&events), text);
    }

    #[test]
    fn reversed_interval_is_rejected() {
        let text = format!(
            "{}\n{}\n",
            jsonl::header(FORMAT),
            r#"{"t_start":6.0,"t_end":5.5,"gamr":"(n / nod-GA :ARG0 (d2 / director-2))"}"#
        );
        assert!(matches!(parse_gestures(&text), Err(AnnotationError::Schema { line: 2, .. })));
    }
}
