//! Maps a released group directory of CSV tables onto the canonical
//! annotation files.
//!
//! Tables are recognised by file name: `*speech*`, `*utterance*` or
//! `*proposition*` for speech; `*sat*`, `*structure*` or `*block*` for the
//! structure log; `*gesture*` or `*gamr*` for gestures; `*stance*` or
//! `*belief*` for stances. Column names are matched loosely (case and
//! punctuation are ignored, common synonyms accepted). Layers in the source
//! are numbered from 1 and stored from 0. Every source row is either written
//! out or listed in `import_log.jsonl` with the reason it was skipped.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::annotations::{
    jsonl_write, parse_gamr, parse_gestures, parse_sat_log, parse_speech_props, parse_stances,
    AnnotationError, SatLog, SatRow, Stance, GESTURE_FILE, SAT_FILE, SPEECH_FILE, STANCE_FILE,
};
use crate::blockworld::{BlockId, RawRelation, Term};
use crate::participants::{Participant, SideAssignment};

pub const IMPORT_LOG_FILE: &str = "import_log.jsonl";

#[derive(Debug, thiserror::Error)]
pub enum ImportError {
    #[error("no recognisable annotation tables in {dir}; found: [{}]", .listing.join(", "))]
    UnrecognizedLayout { dir: PathBuf, listing: Vec<String> },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{file}: produced output failed validation: {source}")]
    Validation {
        file: String,
        source: AnnotationError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableKind {
    Speech,
    Sat,
    Gestures,
    Stances,
}

impl TableKind {
    pub fn target(self) -> &'static str {
        match self {
            TableKind::Speech => SPEECH_FILE,
            TableKind::Sat => SAT_FILE,
            TableKind::Gestures => GESTURE_FILE,
            TableKind::Stances => STANCE_FILE,
        }
    }

    fn detect(file_name: &str) -> Option<TableKind> {
        let n = file_name.to_ascii_lowercase();
        if !n.ends_with(".csv") {
            return None;
        }
        let has = |words: &[&str]| words.iter().any(|w| n.contains(w));
        if has(&["speech", "utterance", "proposition"]) {
            Some(TableKind::Speech)
        } else if has(&["gesture", "gamr"]) {
            Some(TableKind::Gestures)
        } else if has(&["stance", "belief"]) {
            Some(TableKind::Stances)
        } else if has(&["sat", "structure", "block"]) {
            Some(TableKind::Sat)
        } else {
            None
        }
    }
}

/// One line of the import log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub file: String,
    /// 1-based data row; absent for file-level notes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub row: Option<usize>,
    pub skipped: bool,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileReport {
    pub kind: TableKind,
    pub sources: Vec<String>,
    pub source_records: usize,
    pub imported: usize,
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportReport {
    pub files: Vec<FileReport>,
    pub log: Vec<LogEntry>,
}

fn squash(s: &str) -> String {
    s.chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .collect::<String>()
        .to_ascii_lowercase()
}

const COLUMNS: &[(&str, &[&str])] = &[
    ("id", &["id", "propid", "propositionid"]),
    ("t", &["t", "time", "timestamp", "start", "starttime", "tstart"]),
    ("t_end", &["tend", "end", "endtime", "stop"]),
    ("speaker", &["speaker", "participant", "gesturer", "who"]),
    ("relation", &["relation", "predicate", "rel"]),
    ("arg1", &["arg1", "subject", "block1", "a"]),
    ("arg2", &["arg2", "object", "block2", "b"]),
    ("side", &["side", "perspective", "view"]),
    ("layer", &["layer", "level"]),
    ("block", &["block", "blockid"]),
    ("x", &["x"]),
    ("y", &["y"]),
    ("z", &["z"]),
    ("orientation", &["orientation", "orient"]),
    ("removed", &["removed", "deleted"]),
    ("gamr", &["gamr", "graph", "annotation"]),
    ("prop_id", &["propid", "proposition", "prop", "propositionid"]),
    ("stance", &["stance", "label", "belief"]),
];

fn needed(kind: TableKind) -> &'static [&'static str] {
    match kind {
        TableKind::Speech => &["id", "t", "speaker", "relation", "arg1", "arg2", "side", "layer"],
        TableKind::Sat => &["t", "block", "x", "y", "z", "orientation", "removed"],
        TableKind::Gestures => &["t", "t_end", "gamr"],
        TableKind::Stances => &["t", "speaker", "prop_id", "stance"],
    }
}

/// Maps canonical field names to column positions; unmatched headers are
/// returned separately.
fn map_columns(kind: TableKind, headers: &csv::StringRecord) -> (BTreeMap<&'static str, usize>, Vec<String>) {
    let mut map = BTreeMap::new();
    let mut extra = Vec::new();
    for (i, h) in headers.iter().enumerate() {
        let key = squash(h);
        let field = COLUMNS
            .iter()
            .filter(|(f, _)| needed(kind).contains(f))
            .find(|(f, aliases)| aliases.contains(&key.as_str()) && !map.contains_key(f))
            .map(|(f, _)| *f);
        match field {
            Some(f) => {
                map.insert(f, i);
            }
            None => extra.push(h.to_string()),
        }
    }
    (map, extra)
}

struct Row<'a> {
    cols: &'a BTreeMap<&'static str, usize>,
    rec: &'a csv::StringRecord,
}

impl Row<'_> {
    fn get(&self, field: &str) -> Option<&str> {
        let v = self.rec.get(*self.cols.get(field)?)?.trim();
        (!v.is_empty() && !v.eq_ignore_ascii_case("na") && !v.eq_ignore_ascii_case("null"))
            .then_some(v)
    }

    fn req(&self, field: &str) -> Result<&str, String> {
        self.get(field).ok_or_else(|| format!("missing {field}"))
    }

    fn num(&self, field: &str) -> Result<f64, String> {
        let v = self.req(field)?;
        v.parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| format!("{field} `{v}` is not a number"))
    }
}

fn speech_record(row: &Row<'_>, n: usize) -> Result<Value, String> {
    let t = row.num("t")?;
    let speaker = row.req("speaker")?;
    let speaker = Participant::normalize(speaker).ok_or_else(|| format!("unknown speaker `{speaker}`"))?;
    let relation = row.req("relation")?;
    relation
        .parse::<RawRelation>()
        .map_err(|_| format!("unknown relation `{relation}`"))?;
    let mut args = Vec::new();
    for f in ["arg1", "arg2"] {
        let v = row.req(f)?;
        v.parse::<Term>().map_err(|_| format!("{f} `{v}` is not a block, descriptor or base"))?;
        args.push(v.to_string());
    }
    let side = match row.get("side") {
        Some(s) => {
            SideAssignment::default()
                .resolve(s)
                .ok_or_else(|| format!("unknown side `{s}`"))?;
            Value::String(s.to_string())
        }
        None => Value::Null,
    };
    let mut m = Map::new();
    m.insert("id".into(), json!(row.get("id").map_or_else(|| format!("p{n}"), str::to_string)));
    m.insert("t".into(), json!(t));
    m.insert("speaker".into(), json!(speaker.as_str()));
    m.insert("relation".into(), json!(relation));
    m.insert("arg1".into(), json!(args[0]));
    m.insert("arg2".into(), json!(args[1]));
    m.insert("side".into(), side);
    if let Some(l) = row.get("layer") {
        let l: u8 = l
            .parse()
            .ok()
            .filter(|l| (1..=3).contains(l))
            .ok_or_else(|| format!("layer `{l}` is not 1, 2 or 3"))?;
        m.insert("layer".into(), json!(l - 1));
    }
    Ok(Value::Object(m))
}

fn sat_row(row: &Row<'_>) -> Result<SatRow, String> {
    let t = row.num("t")?;
    let block = row.req("block")?;
    block
        .parse::<BlockId>()
        .map_err(|_| format!("`{block}` is not a block id"))?;
    let removed = row
        .get("removed")
        .is_some_and(|v| matches!(v.to_ascii_lowercase().as_str(), "1" | "true" | "yes" | "y"));
    let coord = |f: &str| -> Result<Option<i64>, String> {
        match row.get(f) {
            None if removed => Ok(None),
            None => Err(format!("missing {f}")),
            Some(v) => v.parse::<i64>().map(Some).map_err(|_| format!("{f} `{v}` is not an integer")),
        }
    };
    Ok(SatRow {
        t,
        block: block.to_string(),
        x: coord("x")?,
        y: coord("y")?,
        z: coord("z")?,
        orientation: row.get("orientation").map(|o| o.to_ascii_lowercase()),
        removed,
    })
}

fn gesture_record(row: &Row<'_>) -> Result<Value, String> {
    let t = row.num("t")?;
    let t_end = match row.get("t_end") {
        Some(_) => row.num("t_end")?,
        None => t,
    };
    if t_end < t {
        return Err(format!("ends ({t_end}) before it starts ({t})"));
    }
    let gamr = row.req("gamr")?;
    parse_gamr(gamr).map_err(|e| e.to_string())?;
    Ok(json!({"t_start": t, "t_end": t_end, "gamr": gamr}))
}

fn stance_record(row: &Row<'_>, known: &BTreeSet<String>) -> Result<Value, String> {
    let t = row.num("t")?;
    let who = row.req("speaker")?;
    let who = Participant::normalize(who).ok_or_else(|| format!("unknown participant `{who}`"))?;
    let stance = row.req("stance")?;
    let stance: Stance = stance
        .parse()
        .map_err(|_| format!("unknown stance `{stance}`"))?;
    let ids: Vec<String> = row
        .req("prop_id")?
        .split(['+', ';', '|'])
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    if let Some(missing) = ids.iter().find(|id| !known.contains(*id)) {
        return Err(format!("refers to unknown proposition `{missing}`"));
    }
    let prop = if ids.len() == 1 { json!(ids[0]) } else { json!(ids) };
    Ok(json!({"t": t, "participant": who.as_str(), "prop_id": prop, "stance": stance.as_str()}))
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ImportError + '_ {
    move |source| ImportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

struct Table {
    name: String,
    cols: BTreeMap<&'static str, usize>,
    rows: Vec<csv::StringRecord>,
}

fn read_table(path: &Path, kind: TableKind, log: &mut Vec<LogEntry>) -> Result<Table, ImportError> {
    let name = path.file_name().unwrap_or_default().to_string_lossy().to_string();
    let csv_err = |source| ImportError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err)?;
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let (cols, extra) = map_columns(kind, &headers);
    for c in extra {
        log.push(LogEntry {
            file: name.clone(),
            row: None,
            skipped: false,
            reason: format!("column `{c}` not used"),
        });
    }
    let rows = rdr.records().collect::<Result<Vec<_>, _>>().map_err(csv_err)?;
    Ok(Table { name, cols, rows })
}

/// Converts one group. Writes the four canonical files and the import log
/// into `dest`, creating it if needed.
pub fn import_group(src: &Path, dest: &Path) -> Result<ImportReport, ImportError> {
    let mut listing: Vec<String> = fs::read_dir(src)
        .map_err(io_err(src))?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().to_string())
        .collect();
    listing.sort();
    let mut by_kind: BTreeMap<TableKind, Vec<PathBuf>> = BTreeMap::new();
    for name in &listing {
        if let Some(k) = TableKind::detect(name) {
            by_kind.entry(k).or_default().push(src.join(name));
        }
    }
    if by_kind.is_empty() {
        return Err(ImportError::UnrecognizedLayout {
            dir: src.to_path_buf(),
            listing,
        });
    }
    fs::create_dir_all(dest).map_err(io_err(dest))?;

    let mut log = Vec::new();
    let mut files = Vec::new();
    let mut known_props = BTreeSet::new();
    // speech first so stances can be checked against its ids
    for kind in [TableKind::Speech, TableKind::Sat, TableKind::Gestures, TableKind::Stances] {
        let paths = by_kind.get(&kind).cloned().unwrap_or_default();
        if paths.is_empty() {
            log.push(LogEntry {
                file: kind.target().into(),
                row: None,
                skipped: false,
                reason: "no source table; written empty".into(),
            });
        }
        let mut report = FileReport {
            kind,
            sources: Vec::new(),
            source_records: 0,
            imported: 0,
            skipped: 0,
        };
        let mut values = Vec::new();
        let mut sat_rows = Vec::new();
        for path in &paths {
            let table = read_table(path, kind, &mut log)?;
            report.sources.push(table.name.clone());
            for (i, rec) in table.rows.iter().enumerate() {
                report.source_records += 1;
                let row = Row {
                    cols: &table.cols,
                    rec,
                };
                let outcome = match kind {
                    TableKind::Speech => speech_record(&row, values.len() + 1).and_then(|v| {
                        let id = v["id"].as_str().expect("set").to_string();
                        if known_props.insert(id.clone()) {
                            Ok(v)
                        } else {
                            Err(format!("duplicate proposition id `{id}`"))
                        }
                    }),
                    TableKind::Gestures => gesture_record(&row),
                    TableKind::Stances => stance_record(&row, &known_props),
                    TableKind::Sat => sat_row(&row).map(|r| {
                        sat_rows.push(r);
                        Value::Null
                    }),
                };
                match outcome {
                    Ok(v) => {
                        report.imported += 1;
                        if kind != TableKind::Sat {
                            values.push(v);
                        }
                    }
                    Err(reason) => {
                        report.skipped += 1;
                        log.push(LogEntry {
                            file: table.name.clone(),
                            row: Some(i + 1),
                            skipped: true,
                            reason,
                        });
                    }
                }
            }
        }
        let text = match kind {
            TableKind::Sat => {
                if sat_rows.windows(2).any(|w| w[1].t < w[0].t) {
                    sat_rows.sort_by(|a, b| a.t.total_cmp(&b.t));
                    log.push(LogEntry {
                        file: SAT_FILE.into(),
                        row: None,
                        skipped: false,
                        reason: "rows reordered by time".into(),
                    });
                }
                SatLog::new(sat_rows).to_json()
            }
            TableKind::Speech => jsonl_write("speech", &values),
            TableKind::Gestures => jsonl_write("gestures", &values),
            TableKind::Stances => jsonl_write("stances", &values),
        };
        let invalid = |source| ImportError::Validation {
            file: kind.target().into(),
            source,
        };
        match kind {
            TableKind::Speech => parse_speech_props(&text, &SideAssignment::default()).map(|_| ()),
            TableKind::Sat => parse_sat_log(&text).map(|_| ()),
            TableKind::Gestures => parse_gestures(&text).map(|_| ()),
            TableKind::Stances => parse_stances(&text, &known_props).map(|_| ()),
        }
        .map_err(invalid)?;
        let out = dest.join(kind.target());
        fs::write(&out, text).map_err(io_err(&out))?;
        files.push(report);
    }

    let log_path = dest.join(IMPORT_LOG_FILE);
    let log_text: String = log
        .iter()
        .map(|e| serde_json::to_string(e).expect("serializable") + "\n")
        .collect();
    fs::write(&log_path, log_text).map_err(io_err(&log_path))?;
    Ok(ImportReport { files, log })
}
