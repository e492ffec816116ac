//! Per-group wiring: loading, action extraction, alignment, common-ground
//! inference and the four experiments.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::actionlog::{extract_actions, state_at, ActionEvent, ActionLogError, Snapshot, DEFAULT_TAU_MOVE};
use crate::alignment::{align, AlignConfig, AlignedEvent, Source};
use crate::annotations::{
    parse_gestures, parse_sat_log, parse_speech_props, parse_stances, AnnotationError,
    GestureEvent, ParsedSatLog, Proposition, StanceLabel, GESTURE_FILE, SAT_FILE, SPEECH_FILE,
    STANCE_FILE,
};
use crate::blockworld::{
    derive_all_relations, project_side_view, BoardAction, RelationAtom, Side, SideView,
    StructureState,
};
use crate::cgc::{cg_keys, cg_relation_set, run_cgc, CgcError, CgcOutput, Turn};
use crate::llmbridge::{
    build_prompt, cg_reply_json, parse_cg_response, parse_structure_response, relations_reply_json,
    render_cg, render_relations, views_reply_json, AuditLog, ChatClient, CgKey, Experiment, LlmError,
    ModelConfig, Query, TurnContext,
};
use crate::metrics::{dice, mean, per_turn_dsc, view_grid_to_relations, DscMode, MetricsError};
use crate::participants::SideAssignment;
use crate::warning::{Warning, WarningKind};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("missing input file {}", .path.display())]
    MissingInput { path: PathBuf },
    #[error("{}: {source}", .file.display())]
    Annotation {
        file: PathBuf,
        source: AnnotationError,
    },
    #[error("group {group}: {source}")]
    Actions {
        group: String,
        source: ActionLogError,
    },
    #[error("group {group}: {source}")]
    Cgc { group: String, source: CgcError },
    #[error("group {group}, turn {turn}: {source}")]
    Llm {
        group: String,
        turn: usize,
        source: LlmError,
    },
    #[error("group {group}: {source}")]
    Metrics {
        group: String,
        source: MetricsError,
    },
    #[error("group {group}: experiment {experiment} needs the structure annotation, which is skipped for this run")]
    StructureTruthSkipped { group: String, experiment: Experiment },
    #[error("group {group}: experiment {experiment} needs a model client (configure an endpoint or a mock)")]
    NoClient { group: String, experiment: Experiment },
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl PipelineError {
    /// True for failures of the model endpoint itself.
    pub fn is_endpoint(&self) -> bool {
        matches!(self, PipelineError::Llm { source, .. } if source.is_endpoint())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub align: AlignConfig,
    pub tau_move: f64,
    pub dsc_mode: DscMode,
    pub sides: SideAssignment,
    /// Refuse experiments whose ground truth is the structure annotation.
    pub skip_structure_truth: bool,
    pub model: ModelConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            align: AlignConfig::default(),
            tau_move: DEFAULT_TAU_MOVE,
            dsc_mode: DscMode::default(),
            sides: SideAssignment::default(),
            skip_structure_truth: false,
            model: ModelConfig::default(),
        }
    }
}

impl RunConfig {
    /// Reads `key = value` lines (`#` starts a comment). Pipeline keys are
    /// `grounding_window`, `window_before`, `window_after`, `emblem_window`,
    /// `tau_move`, `dsc_mode`, `sides` (e.g. `front,left,right` for D1..D3)
    /// and `skip_structure_truth`; every other key goes to the model config.
    pub fn from_kv_text(text: &str) -> Result<Self, PipelineError> {
        let mut cfg = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| PipelineError::Config { line: i + 1, message };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, found `{line}`")))?;
            cfg.set(k.trim(), v.trim().trim_matches('"')).map_err(err)?;
        }
        cfg.model.validate().map_err(|e| PipelineError::Config {
            line: 0,
            message: e.to_string(),
        })?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn secs(key: &str, v: &str) -> Result<f64, String> {
            match v.parse::<f64>() {
                Ok(x) if x.is_finite() && x >= 0.0 => Ok(x),
                _ => Err(format!("`{key}` needs a non-negative number of seconds, found `{v}`")),
            }
        }
        match key {
            "grounding_window" => self.align.grounding_window = secs(key, value)?,
            "window_before" => self.align.window_before = secs(key, value)?,
            "window_after" => self.align.window_after = secs(key, value)?,
            "emblem_window" => self.align.emblem_window = secs(key, value)?,
            "tau_move" => self.tau_move = secs(key, value)?,
            "dsc_mode" => self.dsc_mode = value.parse::<DscMode>().map_err(|e| e.to_string())?,
            "skip_structure_truth" => {
                self.skip_structure_truth = value
                    .parse()
                    .map_err(|_| format!("`{key}` needs true or false, found `{value}`"))?
            }
            "sides" => {
                let parsed: Vec<Side> = value
                    .split(',')
                    .map(|s| s.trim().parse::<Side>().map_err(|_| format!("unknown side `{}`", s.trim())))
                    .collect::<Result<_, _>>()?;
                self.sides = match parsed[..] {
                    [a, b, c] => SideAssignment::new(a, b, c),
                    _ => None,
                }
                .ok_or_else(|| format!("`sides` needs three distinct sides, found `{value}`"))?;
            }
            _ => self.model.set(key, value)?,
        }
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "align": self.align,
            "tau_move": self.tau_move,
            "dsc_mode": self.dsc_mode,
            "sides": self.sides.sides().map(|s| s.as_str()),
            "skip_structure_truth": self.skip_structure_truth,
            "model": self.model,
        })
    }

    /// Short digest of every setting that can change a result.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_json().to_string().as_bytes());
        hex::encode(&digest[..8])
    }
}

/// Parsed annotation files of one group.
#[derive(Debug, Clone)]
pub struct GroupData {
    pub name: String,
    pub dir: PathBuf,
    pub props: Vec<Proposition>,
    pub sat: ParsedSatLog,
    pub gestures: Vec<GestureEvent>,
    pub stances: Vec<StanceLabel>,
}

fn read(dir: &Path, file: &str) -> Result<(PathBuf, String), PipelineError> {
    let path = dir.join(file);
    if !path.is_file() {
        return Err(PipelineError::MissingInput { path });
    }
    let text = fs::read_to_string(&path).map_err(|source| PipelineError::Io {
        path: path.clone(),
        source,
    })?;
    Ok((path, text))
}

pub fn group_name(dir: &Path) -> String {
    dir.file_name()
        .map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().to_string())
}

pub fn load_group(dir: &Path, sides: &SideAssignment) -> Result<GroupData, PipelineError> {
    let ann = |file: PathBuf| move |source| PipelineError::Annotation { file, source };
    let (p, text) = read(dir, SPEECH_FILE)?;
    let props = parse_speech_props(&text, sides).map_err(ann(p))?;
    let (p, text) = read(dir, SAT_FILE)?;
    let sat = parse_sat_log(&text).map_err(ann(p))?;
    let (p, text) = read(dir, GESTURE_FILE)?;
    let gestures = parse_gestures(&text).map_err(ann(p))?;
    let (p, text) = read(dir, STANCE_FILE)?;
    let known: BTreeSet<String> = props.iter().map(|p| p.id.clone()).collect();
    let stances = parse_stances(&text, &known).map_err(ann(p))?;
    Ok(GroupData {
        name: group_name(dir),
        dir: dir.to_path_buf(),
        props,
        sat,
        gestures,
        stances,
    })
}

/// Drops placements that cannot stand on the board, lowest layer first, so
/// the action extractor only ever sees valid boards.
pub fn sanitize_snapshots(snapshots: &[Snapshot]) -> (Vec<Snapshot>, Vec<Warning>) {
    let mut warnings = Vec::new();
    let mut reported = BTreeSet::new();
    let mut out = Vec::with_capacity(snapshots.len());
    for s in snapshots {
        let mut placements = s.placements.clone();
        placements.sort_by_key(|p| (p.layer(), p.block));
        let mut state = StructureState::empty();
        let mut kept = Vec::new();
        for p in placements {
            match state.apply(&BoardAction::Put(p)) {
                Ok(next) => {
                    state = next;
                    kept.push(p);
                }
                Err(e) => {
                    if reported.insert(p) {
                        warnings.push(Warning::new(
                            WarningKind::DroppedItem,
                            format!("{p} left out of replay from t={}: {e}", s.timestamp),
                        ));
                    }
                }
            }
        }
        out.push(Snapshot::new(s.timestamp, kept));
    }
    (out, warnings)
}

/// A group carried through extraction, alignment and common-ground inference.
#[derive(Debug, Clone)]
pub struct GroupRun {
    pub data: GroupData,
    pub actions: Vec<ActionEvent>,
    pub timeline: Vec<AlignedEvent>,
    pub cgc: CgcOutput,
    pub warnings: Vec<Warning>,
}

pub fn process_group(data: GroupData, config: &RunConfig) -> Result<GroupRun, PipelineError> {
    let mut warnings = data.sat.warnings.clone();
    let (snapshots, w) = sanitize_snapshots(&data.sat.snapshots);
    warnings.extend(w);
    let actions = extract_actions(&snapshots, config.tau_move).map_err(|source| {
        PipelineError::Actions {
            group: data.name.clone(),
            source,
        }
    })?;
    let (timeline, w) = align(&data.props, &data.gestures, &actions, &data.stances, &config.align);
    warnings.extend(w);
    let cgc = run_cgc(&timeline).map_err(|source| PipelineError::Cgc {
        group: data.name.clone(),
        source,
    })?;
    Ok(GroupRun {
        data,
        actions,
        timeline,
        cgc,
        warnings,
    })
}

pub fn run_group_dir(dir: &Path, config: &RunConfig) -> Result<GroupRun, PipelineError> {
    process_group(load_group(dir, &config.sides)?, config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub group: String,
    pub propositions: usize,
    pub snapshots: usize,
    pub actions: usize,
    pub gestures: usize,
    pub stances: usize,
    pub timeline_events: usize,
    pub cg_records: usize,
    pub warnings: Vec<Warning>,
}

pub fn validate_group(dir: &Path, config: &RunConfig) -> Result<ValidationReport, PipelineError> {
    let run = run_group_dir(dir, config)?;
    Ok(ValidationReport {
        group: run.data.name.clone(),
        propositions: run.data.props.len(),
        snapshots: run.data.sat.snapshots.len(),
        actions: run.actions.len(),
        gestures: run.data.gestures.len(),
        stances: run.data.stances.len(),
        timeline_events: run.timeline.len(),
        cg_records: run.cgc.records.len(),
        warnings: run.warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnScore {
    pub turn: usize,
    pub end: f64,
    pub dsc: f64,
    pub predicted: usize,
    pub truth: usize,
    #[serde(default)]
    pub parse_failures: usize,
    #[serde(default)]
    pub dropped_items: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub group: String,
    pub experiment: Experiment,
    pub label: String,
    pub dsc_mode: DscMode,
    pub average_dsc: f64,
    pub global_dsc: f64,
    pub parse_failures: usize,
    pub dropped_items: usize,
    pub per_turn: Vec<TurnScore>,
    pub config_hash: String,
    #[serde(default)]
    pub warnings: Vec<Warning>,
}

fn views(state: &StructureState) -> Vec<SideView> {
    Side::ALL.into_iter().map(|s| project_side_view(state, s)).collect()
}

fn views_text(state: &StructureState) -> String {
    views(state)
        .iter()
        .map(|v| format!("{} view (top layer first):\n{}", v.side, v.to_text()))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Turns used for scoring; a timeline without turns is scored as one turn
/// ending at the last action.
fn scoring_turns(run: &GroupRun) -> Vec<Turn> {
    if !run.cgc.turns.is_empty() {
        return run.cgc.turns.clone();
    }
    let end = run.actions.last().map_or(0.0, |a| a.timestamp);
    vec![Turn {
        index: 0,
        start: end.min(0.0),
        end,
        events: Vec::new(),
        boundary: None,
    }]
}

struct Prepared<T> {
    truth: BTreeSet<T>,
    prompt: Option<String>,
    oracle: Option<String>,
    prompt_warnings: Vec<Warning>,
}

fn replay(run: &GroupRun, at: f64) -> Result<StructureState, PipelineError> {
    state_at(&run.actions, at).map_err(|e| PipelineError::Actions {
        group: run.data.name.clone(),
        source: ActionLogError::ReplayMismatch {
            timestamp: at,
            detail: e.to_string(),
        },
    })
}

fn turn_events(run: &GroupRun, turn: &Turn) -> Vec<AlignedEvent> {
    turn.events.iter().map(|&i| run.timeline[i].clone()).collect()
}

fn turn_actions(run: &GroupRun, turn: &Turn) -> Vec<ActionEvent> {
    let ids: BTreeSet<&str> = turn
        .events
        .iter()
        .map(|&i| &run.timeline[i])
        .filter(|e| e.source == Source::Action)
        .map(|e| e.id.as_str())
        .collect();
    run.actions
        .iter()
        .filter(|a| ids.contains(a.id.as_str()))
        .cloned()
        .collect()
}

/// Issues the model calls for all turns, at most `max_in_flight` at a time,
/// and returns the replies in turn order.
fn call_model(
    group: &str,
    experiment: Experiment,
    prompts: &[(String, Option<String>)],
    client: &dyn ChatClient,
    audit: Option<&AuditLog>,
    max_in_flight: usize,
) -> Result<Vec<String>, PipelineError> {
    let mut replies = Vec::with_capacity(prompts.len());
    for (chunk_no, chunk) in prompts.chunks(max_in_flight.max(1)).enumerate() {
        let results: Vec<Result<String, LlmError>> = std::thread::scope(|s| {
            let handles: Vec<_> = chunk
                .iter()
                .enumerate()
                .map(|(j, (prompt, oracle))| {
                    let turn = chunk_no * max_in_flight.max(1) + j;
                    s.spawn(move || {
                        let q = Query {
                            prompt,
                            key: format!("{group}/exp{}/turn{turn}", experiment.number()),
                            oracle: oracle.clone(),
                        };
                        let out = client.complete(&q);
                        if let Some(log) = audit {
                            let _ = log.record(&q, &out);
                        }
                        out.map(|c| c.text)
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("model call thread")).collect()
        });
        for (j, r) in results.into_iter().enumerate() {
            replies.push(r.map_err(|source| PipelineError::Llm {
                group: group.to_string(),
                turn: chunk_no * max_in_flight.max(1) + j,
                source,
            })?);
        }
    }
    Ok(replies)
}

#[allow(clippy::too_many_arguments)]
fn finish<T: Ord + Clone>(
    run: &GroupRun,
    experiment: Experiment,
    config: &RunConfig,
    turns: &[Turn],
    preds: Vec<BTreeSet<T>>,
    truths: Vec<BTreeSet<T>>,
    failures: Vec<(usize, usize)>,
    warnings: Vec<Warning>,
) -> Result<ExperimentReport, PipelineError> {
    let dsc = per_turn_dsc(&preds, &truths, config.dsc_mode).map_err(|source| PipelineError::Metrics {
        group: run.data.name.clone(),
        source,
    })?;
    let empty = BTreeSet::new();
    let global = dice(preds.last().unwrap_or(&empty), truths.last().unwrap_or(&empty));
    let per_turn: Vec<TurnScore> = turns
        .iter()
        .enumerate()
        .map(|(k, t)| TurnScore {
            turn: k,
            end: t.end,
            dsc: dsc[k],
            predicted: preds[k].len(),
            truth: truths[k].len(),
            parse_failures: failures[k].0,
            dropped_items: failures[k].1,
        })
        .collect();
    Ok(ExperimentReport {
        group: run.data.name.clone(),
        experiment,
        label: experiment.label().to_string(),
        dsc_mode: config.dsc_mode,
        average_dsc: mean(&dsc),
        global_dsc: global,
        parse_failures: failures.iter().map(|f| f.0).sum(),
        dropped_items: failures.iter().map(|f| f.1).sum(),
        per_turn,
        config_hash: config.hash(),
        warnings,
    })
}

fn count(ws: &[Warning]) -> (usize, usize) {
    (
        ws.iter().filter(|w| w.kind == WarningKind::ParseFailure).count(),
        ws.iter().filter(|w| w.kind == WarningKind::DroppedItem).count(),
    )
}

/// Scores one experiment for one processed group. Experiments 1, 2 and 4
/// need `client`; experiment 3 never calls a model.
pub fn run_experiment(
    run: &GroupRun,
    experiment: Experiment,
    config: &RunConfig,
    client: Option<&dyn ChatClient>,
    audit: Option<&AuditLog>,
) -> Result<ExperimentReport, PipelineError> {
    let group = run.data.name.as_str();
    if config.skip_structure_truth && experiment == Experiment::ActionsToStructure {
        return Err(PipelineError::StructureTruthSkipped {
            group: group.to_string(),
            experiment,
        });
    }
    let turns = scoring_turns(run);
    let records = &run.cgc.records;

    if experiment == Experiment::EventsToCg {
        let mut prepared: Vec<Prepared<CgKey>> = Vec::new();
        for t in &turns {
            let truth = cg_keys(records, t.end);
            let events = turn_events(run, t);
            let p = build_prompt(experiment, TurnContext::Events(&events), &render_cg(&cg_keys(records, t.start)))
                .expect("model experiment");
            prepared.push(Prepared {
                oracle: Some(cg_reply_json(&truth)),
                truth,
                prompt: Some(p.text),
                prompt_warnings: p.warnings.into_iter().map(|w| w.in_turn(prepared.len())).collect(),
            });
        }
        let client = client.ok_or_else(|| PipelineError::NoClient {
            group: group.to_string(),
            experiment,
        })?;
        let prompts: Vec<_> = prepared
            .iter()
            .map(|p| (p.prompt.clone().expect("set"), p.oracle.clone()))
            .collect();
        let replies = call_model(group, experiment, &prompts, client, audit, config.model.max_in_flight)?;
        let mut warnings: Vec<Warning> = prepared.iter().flat_map(|p| p.prompt_warnings.clone()).collect();
        let mut preds = Vec::new();
        let mut failures = Vec::new();
        for (k, r) in replies.iter().enumerate() {
            let (keys, w) = parse_cg_response(r);
            failures.push(count(&w));
            warnings.extend(w.into_iter().map(|w| w.in_turn(k)));
            preds.push(keys);
        }
        let truths = prepared.into_iter().map(|p| p.truth).collect();
        return finish(run, experiment, config, &turns, preds, truths, failures, warnings);
    }

    let mut prepared: Vec<Prepared<RelationAtom>> = Vec::new();
    for t in &turns {
        let after = replay(run, t.end)?;
        let (truth, prompt, oracle) = match experiment {
            Experiment::ActionsToStructure => {
                let truth = view_grid_to_relations(&views(&after));
                let actions = turn_actions(run, t);
                let before = replay(run, t.start)?;
                let p = build_prompt(experiment, TurnContext::Actions(&actions), &views_text(&before))
                    .expect("model experiment");
                (truth, Some(p), Some(views_reply_json(&views(&after))))
            }
            Experiment::EventsToStructure => {
                let truth = derive_all_relations(&after);
                let events = turn_events(run, t);
                let before = derive_all_relations(&replay(run, t.start)?);
                let p = build_prompt(experiment, TurnContext::Events(&events), &render_relations(&before))
                    .expect("model experiment");
                let oracle = relations_reply_json(&truth);
                (truth, Some(p), Some(oracle))
            }
            _ => (derive_all_relations(&after), None, None),
        };
        prepared.push(Prepared {
            truth,
            prompt_warnings: prompt
                .as_ref()
                .map(|p| p.warnings.iter().cloned().map(|w| w.in_turn(prepared.len())).collect())
                .unwrap_or_default(),
            prompt: prompt.map(|p| p.text),
            oracle,
        });
    }

    let mut warnings: Vec<Warning> = prepared.iter().flat_map(|p| p.prompt_warnings.clone()).collect();
    let mut preds = Vec::new();
    let mut failures = Vec::new();
    if experiment == Experiment::CgcToStructure {
        for t in &turns {
            preds.push(cg_relation_set(records, t.end));
            failures.push((0, 0));
        }
    } else {
        let client = client.ok_or_else(|| PipelineError::NoClient {
            group: group.to_string(),
            experiment,
        })?;
        let prompts: Vec<_> = prepared
            .iter()
            .map(|p| (p.prompt.clone().expect("set"), p.oracle.clone()))
            .collect();
        let replies = call_model(group, experiment, &prompts, client, audit, config.model.max_in_flight)?;
        for (k, r) in replies.iter().enumerate() {
            let (atoms, w) = parse_structure_response(r, experiment);
            failures.push(count(&w));
            warnings.extend(w.into_iter().map(|w| w.in_turn(k)));
            preds.push(atoms);
        }
    }
    let truths = prepared.into_iter().map(|p| p.truth).collect();
    finish(run, experiment, config, &turns, preds, truths, failures, warnings)
}

/// Runs one experiment over many group directories, one worker per group.
/// Results come back in the order of `dirs`.
pub fn run_groups(
    dirs: &[PathBuf],
    experiment: Experiment,
    config: &RunConfig,
    client: Option<&dyn ChatClient>,
    audit: Option<&AuditLog>,
) -> Vec<Result<ExperimentReport, PipelineError>> {
    let workers = std::thread::available_parallelism().map_or(4, |n| n.get());
    let mut out = Vec::with_capacity(dirs.len());
    for chunk in dirs.chunks(workers) {
        let results: Vec<_> = std::thread::scope(|s| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|d| {
                    s.spawn(move || {
                        let run = run_group_dir(d, config)?;
                        run_experiment(&run, experiment, config, client, audit)
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("group worker")).collect()
        });
        out.extend(results);
    }
    out
}

/// Sample standard deviation; 0 for fewer than two values.
fn sample_sd(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}

/// Table with one row per (experiment, metric) and one column per group,
/// followed by the mean and standard deviation across groups.
pub fn summary_csv(reports: &[ExperimentReport]) -> String {
    let groups: BTreeSet<&str> = reports.iter().map(|r| r.group.as_str()).collect();
    let mut by_exp: BTreeMap<Experiment, BTreeMap<&str, &ExperimentReport>> = BTreeMap::new();
    for r in reports {
        by_exp.entry(r.experiment).or_default().insert(&r.group, r);
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["experiment".to_string(), "metric".to_string()];
    header.extend(groups.iter().map(|g| g.to_string()));
    header.extend(["mean".to_string(), "sd".to_string()]);
    w.write_record(&header).expect("in-memory write");
    for (exp, rows) in &by_exp {
        for (metric, get) in [
            ("average", (|r: &ExperimentReport| r.average_dsc) as fn(&ExperimentReport) -> f64),
            ("global", |r: &ExperimentReport| r.global_dsc),
        ] {
            let mut rec = vec![exp.label().to_string(), metric.to_string()];
            let mut values = Vec::new();
            for g in &groups {
                match rows.get(g) {
                    Some(r) => {
                        values.push(get(r));
                        rec.push(format!("{:.3}", get(r)));
                    }
                    None => rec.push(String::new()),
                }
            }
            rec.push(format!("{:.3}", mean(&values)));
            rec.push(format!("{:.3}", sample_sd(&values)));
            w.write_record(&rec).expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

/// Writes `report_exp{n}.json` and `report_exp{n}.csv` into `dir`.
pub fn write_reports(dir: &Path, experiment: Experiment, reports: &[ExperimentReport]) -> Result<(PathBuf, PathBuf), PipelineError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| PipelineError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let json_path = dir.join(format!("report_exp{}.json", experiment.number()));
    let csv_path = dir.join(format!("report_exp{}.csv", experiment.number()));
    let text = serde_json::to_string_pretty(reports).expect("serializable") + "\n";
    fs::write(&json_path, text).map_err(io(&json_path))?;
    fs::write(&csv_path, summary_csv(reports)).map_err(io(&csv_path))?;
    Ok((json_path, csv_path))
}

/// Reads back every `report_exp*.json` in `dir`.
pub fn read_reports(dir: &Path) -> Result<Vec<ExperimentReport>, PipelineError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| PipelineError::Io { path, source }
    };
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("report_exp") && n.ends_with(".json"))
        })
        .collect();
    paths.sort();
    let mut out = Vec::new();
    for p in paths {
        let text = fs::read_to_string(&p).map_err(io(&p))?;
        let reports: Vec<ExperimentReport> = serde_json::from_str(&text).map_err(|e| PipelineError::Io {
            path: p.clone(),
            source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
        })?;
        out.extend(reports);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blockworld::Placement;

    #[test]
    fn sanitizing_drops_floating_blocks() {
        let s = Snapshot::new(
            1.0,
            vec![
                Placement::short("rs1".parse().unwrap(), 0, 0, 1),
                Placement::short("gs1".parse().unwrap(), 1, 0, 0),
            ],
        );
        let (out, w) = sanitize_snapshots(&[s.clone(), Snapshot::new(2.0, s.placements.clone())]);
        assert_eq!(out[0].placements.len(), 1);
        assert_eq!(w.len(), 1);
    }

    #[test]
    fn config_hash_is_stable_and_sensitive() {
        let a = RunConfig::default();
        assert_eq!(a.hash(), RunConfig::default().hash());
        let b = RunConfig {
            tau_move: 1.0,
            ..RunConfig::default()
        };
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn kv_config_splits_pipeline_and_model_keys() {
        let cfg = RunConfig::from_kv_text(
            "# run\ntau_move = 2\nsides = left, front, right\nmodel = m1\ndsc_mode = delta\n",
        )
        .unwrap();
        assert_eq!(cfg.tau_move, 2.0);
        assert_eq!(cfg.sides.side_of(crate::Participant::D1), Some(Side::Left));
        assert_eq!(cfg.model.model, "m1");
        assert_eq!(cfg.dsc_mode, DscMode::Delta);
        assert!(matches!(
            RunConfig::from_kv_text("api_key = sk-123"),
            Err(PipelineError::Config { line: 1, .. })
        ));
        assert!(RunConfig::from_kv_text("sides = front,front,left").is_err());
    }

    #[test]
    fn summary_table_layout() {
        let r = |g: &str, v: f64| ExperimentReport {
            group: g.into(),
            experiment: Experiment::CgcToStructure,
            label: Experiment::CgcToStructure.label().into(),
            dsc_mode: DscMode::Cumulative,
            average_dsc: v,
            global_dsc: v,
            parse_failures: 0,
            dropped_items: 0,
            per_turn: vec![],
            config_hash: String::new(),
            warnings: vec![],
        };
        let csv = summary_csv(&[r("g1", 0.5), r("g2", 1.0)]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "experiment,metric,g1,g2,mean,sd");
        assert_eq!(lines[1], "CGC->Structure,average,0.500,1.000,0.750,0.354");
    }
}
