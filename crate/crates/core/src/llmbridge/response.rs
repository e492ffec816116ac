use std::collections::{BTreeMap, BTreeSet};

use serde_json::{json, Map, Value};

use super::Experiment;
use crate::blockworld::{RelationAtom, RelationRecord, Side, SideView};
use crate::metrics::{parse_view_grid, view_grid_to_relations};
use crate::participants::Participant;
use crate::warning::{Warning, WarningKind};

/// `(group, proposition)`, the unit of common-ground comparison.
pub type CgKey = (BTreeSet<Participant>, RelationAtom);

/// The first balanced `{...}` in `text`, honouring JSON string quoting.
pub fn extract_json_object(text: &str) -> Option<&str> {
    let bytes = text.as_bytes();
    let mut search = 0;
    while let Some(off) = text[search..].find('{') {
        let start = search + off;
        let (mut depth, mut in_str, mut escaped) = (0usize, false, false);
        for (i, &c) in bytes.iter().enumerate().skip(start) {
            if in_str {
                match c {
                    _ if escaped => escaped = false,
                    b'\\' => escaped = true,
                    b'"' => in_str = false,
                    _ => {}
                }
                continue;
            }
            match c {
                b'"' => in_str = true,
                b'{' => depth += 1,
                b'}' => {
                    depth -= 1;
                    if depth == 0 {
                        return Some(&text[start..=i]);
                    }
                }
                _ => {}
            }
        }
        search = start + 1;
    }
    None
}

fn parse_failure(what: &str, detail: impl std::fmt::Display) -> Warning {
    Warning::new(WarningKind::ParseFailure, format!("{what}: {detail}"))
}

fn dropped(detail: String) -> Warning {
    Warning::new(WarningKind::DroppedItem, detail)
}

fn object(text: &str, what: &str) -> Result<Map<String, Value>, Warning> {
    let raw = extract_json_object(text).ok_or_else(|| parse_failure(what, "no JSON object in reply"))?;
    match serde_json::from_str::<Value>(raw) {
        Ok(Value::Object(m)) => Ok(m),
        Ok(_) => Err(parse_failure(what, "reply is not a JSON object")),
        Err(e) => Err(parse_failure(what, e)),
    }
}

fn get_ci<'a>(m: &'a Map<String, Value>, key: &str) -> Option<&'a Value> {
    m.iter().find(|(k, _)| k.eq_ignore_ascii_case(key)).map(|(_, v)| v)
}

fn relation(item: &Value) -> Result<RelationAtom, String> {
    let mut v = item.clone();
    // models sometimes answer with a 1-based layer string or number
    if let Some(Value::String(s)) = v.get("layer") {
        if let Ok(n) = s.trim().parse::<u8>() {
            v["layer"] = json!(n);
        }
    }
    if v.get("side").is_some_and(|s| s.as_str().is_some_and(|s| s.is_empty() || s == "null")) {
        v["side"] = Value::Null;
    }
    let rec: RelationRecord = serde_json::from_value(v).map_err(|e| e.to_string())?;
    rec.to_atom().map_err(|e| e.to_string())
}

fn rows(v: &Value) -> Option<Vec<Vec<String>>> {
    v.as_array()?
        .iter()
        .map(|row| {
            row.as_array()?
                .iter()
                .map(|c| match c {
                    Value::String(s) => Some(s.clone()),
                    Value::Null => Some("empty".into()),
                    _ => None,
                })
                .collect()
        })
        .collect()
}

/// Relations predicted by a structure reply. Experiment 1 replies carry three
/// side views, translated through the view-grid reading; experiment 2
/// replies carry a relation list. Bad items are dropped one by one; a reply
/// with no usable JSON yields the empty set and a `ParseFailure`.
pub fn parse_structure_response(
    text: &str,
    experiment: Experiment,
) -> (BTreeSet<RelationAtom>, Vec<Warning>) {
    let mut warnings = Vec::new();
    let m = match object(text, "structure reply") {
        Ok(m) => m,
        Err(w) => return (BTreeSet::new(), vec![w]),
    };
    match experiment {
        Experiment::ActionsToStructure => {
            let views_obj = get_ci(&m, "views").and_then(Value::as_object).unwrap_or(&m);
            let mut views: Vec<SideView> = Vec::new();
            for side in Side::ALL {
                let Some(v) = get_ci(views_obj, side.as_str()) else {
                    warnings.push(dropped(format!("{side} view missing")));
                    continue;
                };
                match rows(v).ok_or_else(|| "not a list of lists of strings".to_string()).and_then(
                    |r| parse_view_grid(side, &r).map_err(|e| e.to_string()),
                ) {
                    Ok(view) => views.push(view),
                    Err(e) => warnings.push(dropped(format!("{side} view dropped: {e}"))),
                }
            }
            if views.is_empty() {
                warnings.push(parse_failure("structure reply", "no usable view"));
            }
            (view_grid_to_relations(&views), warnings)
        }
        _ => {
            let Some(items) = get_ci(&m, "relations").and_then(Value::as_array) else {
                return (
                    BTreeSet::new(),
                    vec![parse_failure("structure reply", "no `relations` list")],
                );
            };
            let mut out = BTreeSet::new();
            for (i, item) in items.iter().enumerate() {
                match relation(item) {
                    Ok(a) => {
                        out.insert(a);
                    }
                    Err(e) => warnings.push(dropped(format!("relation {}: {e}", i + 1))),
                }
            }
            (out, warnings)
        }
    }
}

/// Shared-belief keys predicted by an experiment 4 reply. Participant names
/// are normalised; entries naming fewer than two known participants are
/// dropped with a warning.
pub fn parse_cg_response(text: &str) -> (BTreeSet<CgKey>, Vec<Warning>) {
    let mut warnings = Vec::new();
    let m = match object(text, "common-ground reply") {
        Ok(m) => m,
        Err(w) => return (BTreeSet::new(), vec![w]),
    };
    let Some(items) = get_ci(&m, "common_ground")
        .or_else(|| get_ci(&m, "commonground"))
        .and_then(Value::as_array)
    else {
        return (
            BTreeSet::new(),
            vec![parse_failure("common-ground reply", "no `common_ground` list")],
        );
    };
    let mut out = BTreeSet::new();
    for (i, item) in items.iter().enumerate() {
        let n = i + 1;
        let Some(obj) = item.as_object() else {
            warnings.push(dropped(format!("common-ground entry {n}: not an object")));
            continue;
        };
        let names = get_ci(obj, "participants").and_then(Value::as_array);
        let mut group = BTreeSet::new();
        let mut ok = names.is_some();
        for name in names.into_iter().flatten() {
            match name.as_str().and_then(Participant::normalize) {
                Some(p) => {
                    group.insert(p);
                }
                None => {
                    warnings.push(dropped(format!("common-ground entry {n}: unknown participant {name}")));
                    ok = false;
                }
            }
        }
        if !ok || group.len() < 2 {
            warnings.push(dropped(format!("common-ground entry {n}: needs at least two participants")));
            continue;
        }
        let rel = match get_ci(obj, "relation") {
            Some(v @ Value::Object(_)) => relation(v),
            _ => relation(item),
        };
        match rel {
            Ok(a) => {
                out.insert((group, a));
            }
            Err(e) => warnings.push(dropped(format!("common-ground entry {n}: {e}"))),
        }
    }
    (out, warnings)
}

fn relation_value(a: &RelationAtom) -> Value {
    serde_json::to_value(a).expect("serializable")
}

/// A well-formed experiment 2 reply naming exactly `atoms`.
pub fn relations_reply_json(atoms: &BTreeSet<RelationAtom>) -> String {
    json!({ "relations": atoms.iter().map(relation_value).collect::<Vec<_>>() }).to_string()
}

/// A well-formed experiment 1 reply showing `views`.
pub fn views_reply_json(views: &[SideView]) -> String {
    let mut m = Map::new();
    for v in views {
        m.insert(v.side.as_str().to_string(), json!(v.rows()));
    }
    Value::Object(m).to_string()
}

/// A well-formed experiment 4 reply with the given common ground.
pub fn cg_reply_json(keys: &BTreeSet<CgKey>) -> String {
    let mut beliefs: BTreeMap<Participant, Vec<Value>> =
        Participant::ALL.into_iter().map(|p| (p, Vec::new())).collect();
    for (group, a) in keys {
        for p in group {
            beliefs.get_mut(p).expect("all participants").push(relation_value(a));
        }
    }
    let cg: Vec<Value> = keys
        .iter()
        .map(|(g, a)| {
            json!({
                "participants": g.iter().map(|p| p.as_str()).collect::<Vec<_>>(),
                "relation": relation_value(a),
            })
        })
        .collect();
    let beliefs: Map<String, Value> = beliefs
        .into_iter()
        .map(|(p, v)| (p.as_str().to_string(), Value::Array(v)))
        .collect();
    json!({ "beliefs": beliefs, "common_ground": cg }).to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blockworld::{Color, Term};

    #[test]
    fn extracts_first_balanced_object() {
        assert_eq!(extract_json_object("Sure! {\"a\": {\"b\": \"}\"}} and {\"c\": 1}"), Some("{\"a\": {\"b\": \"}\"}}"));
        assert_eq!(extract_json_object("no json here"), None);
        assert_eq!(extract_json_object("{ unclosed { \"x\": 1 }"), Some("{ \"x\": 1 }"));
    }

    #[test]
    fn grid_reply() {
        let text = r#"Here you go: {"front": [["empty","empty","empty"],["empty","empty","empty"],["green","red","empty"]],
            "left": [["empty","empty","empty"],["empty","empty","empty"],["green","empty","empty"]],
            "right": [["empty","empty","empty"],["empty","empty","empty"],["empty","empty","red"]]}"#;
        let (atoms, w) = parse_structure_response(text, Experiment::ActionsToStructure);
        assert!(w.is_empty(), "{w:?}");
        assert!(atoms.contains(&RelationAtom::leftof(
            Term::Color(Color::Green),
            Term::Color(Color::Red),
            Side::Front,
            Some(0)
        )));
    }

    #[test]
    fn prose_is_a_parse_failure() {
        for e in [Experiment::ActionsToStructure, Experiment::EventsToStructure] {
            let (atoms, w) = parse_structure_response("I think the red block is on top.", e);
            assert!(atoms.is_empty());
            assert_eq!(w[0].kind, WarningKind::ParseFailure);
        }
        let (keys, w) = parse_cg_response("no idea");
        assert!(keys.is_empty());
        assert_eq!(w[0].kind, WarningKind::ParseFailure);
    }

    #[test]
    fn unknown_predicate_is_dropped() {
        let text = r#"{"relations": [
            {"relation": "touches", "arg1": "rs1", "arg2": "gs1"},
            {"relation": "rightof", "arg1": "rs1", "arg2": "gs1", "side": "front", "layer": 0}]}"#;
        let (atoms, w) = parse_structure_response(text, Experiment::EventsToStructure);
        assert_eq!(atoms.len(), 1);
        assert_eq!(atoms.iter().next().unwrap().arg1.to_string(), "gs1");
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].kind, WarningKind::DroppedItem);
    }

    #[test]
    fn cg_reply_with_aliases() {
        let text = r#"{"common_ground": [{"participants": ["D1", "Director 2"],
            "relation": {"relation": "on", "arg1": "rs1", "arg2": "base", "layer": 0}}]}"#;
        let (keys, w) = parse_cg_response(text);
        assert!(w.is_empty());
        let (group, _) = keys.iter().next().unwrap();
        assert_eq!(*group, BTreeSet::from([Participant::D1, Participant::D2]));
        let (keys, _) = parse_cg_response(r#"{"common_ground": []}"#);
        assert!(keys.is_empty());
    }

    #[test]
    fn oracle_replies_parse_back() {
        let a = RelationAtom::leftof(
            Term::Block("gs1".parse().unwrap()),
            Term::Block("rs2".parse().unwrap()),
            Side::Left,
            Some(1),
        );
        let atoms = BTreeSet::from([a]);
        let (back, w) = parse_structure_response(&relations_reply_json(&atoms), Experiment::EventsToStructure);
        assert!(w.is_empty());
        assert_eq!(back, atoms);
        let keys = BTreeSet::from([(BTreeSet::from([Participant::D3, Participant::Builder]), a)]);
        assert_eq!(parse_cg_response(&cg_reply_json(&keys)).0, keys);
    }
}
