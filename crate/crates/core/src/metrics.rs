//! Set-overlap and agreement metrics.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::blockworld::{
    Cell, Color, RelationAtom, Side, SideView, StructureState, Term,
};
use crate::warning::{Warning, WarningKind};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("predicted sequence has {pred} turns but the reference has {truth}")]
    TurnCountMismatch { pred: usize, truth: usize },
    #[error("label sequences differ in length ({a} vs {b})")]
    LengthMismatch { a: usize, b: usize },
    #[error("view grid must be 3 rows of 3 cells: {0}")]
    BadGridShape(String),
    #[error("unknown color token `{0}`")]
    UnknownColorToken(String),
}

/// Dice similarity `2|a∩b| / (|a|+|b|)`; two empty sets score 1.
pub fn dice<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let common = a.intersection(b).count();
    2.0 * common as f64 / (a.len() + b.len()) as f64
}

/// Dice of the final sets.
pub fn global_dsc<T: Ord>(pred_final: &BTreeSet<T>, truth_final: &BTreeSet<T>) -> f64 {
    dice(pred_final, truth_final)
}

/// What each per-turn set stands for when averaging.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DscMode {
    /// The cumulative state after each turn.
    #[default]
    Cumulative,
    /// Only what the turn added or removed relative to the previous one.
    Delta,
}

impl std::str::FromStr for DscMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cumulative" => Ok(DscMode::Cumulative),
            "delta" => Ok(DscMode::Delta),
            other => Err(format!("unknown DSC mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Change<T> {
    Added(T),
    Removed(T),
}

/// Per-turn changes of a cumulative sequence, starting from the empty set.
pub fn turn_deltas<T: Ord + Clone>(states: &[BTreeSet<T>]) -> Vec<BTreeSet<Change<T>>> {
    let empty = BTreeSet::new();
    let mut prev = &empty;
    let mut out = Vec::with_capacity(states.len());
    for s in states {
        let mut d: BTreeSet<Change<T>> = s.difference(prev).cloned().map(Change::Added).collect();
        d.extend(prev.difference(s).cloned().map(Change::Removed));
        out.push(d);
        prev = s;
    }
    out
}

/// Dice per turn; the sequences must have the same length.
pub fn per_turn_dsc<T: Ord + Clone>(
    pred: &[BTreeSet<T>],
    truth: &[BTreeSet<T>],
    mode: DscMode,
) -> Result<Vec<f64>, MetricsError> {
    if pred.len() != truth.len() {
        return Err(MetricsError::TurnCountMismatch {
            pred: pred.len(),
            truth: truth.len(),
        });
    }
    Ok(match mode {
        DscMode::Cumulative => pred.iter().zip(truth).map(|(p, t)| dice(p, t)).collect(),
        DscMode::Delta => turn_deltas(pred)
            .iter()
            .zip(&turn_deltas(truth))
            .map(|(p, t)| dice(p, t))
            .collect(),
    })
}

/// Mean of the cumulative per-turn dice values. With no turns at all the
/// sequences trivially agree and the result is 1.
pub fn average_turn_dsc<T: Ord + Clone>(
    pred: &[BTreeSet<T>],
    truth: &[BTreeSet<T>],
) -> Result<f64, MetricsError> {
    average_turn_dsc_with(pred, truth, DscMode::Cumulative)
}

pub fn average_turn_dsc_with<T: Ord + Clone>(
    pred: &[BTreeSet<T>],
    truth: &[BTreeSet<T>],
    mode: DscMode,
) -> Result<f64, MetricsError> {
    Ok(mean(&per_turn_dsc(pred, truth, mode)?))
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        1.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Kappa {
    pub value: f64,
    pub observed: f64,
    pub expected: f64,
    pub warning: Option<Warning>,
}

/// Cohen's kappa between two labelings of the same items.
///
/// When chance agreement is 1 (both raters use a single, shared label, or the
/// sequences are empty) the ratio is undefined; the value is then 1 if the
/// raters agree everywhere and 0 otherwise, and a warning is attached.
pub fn cohen_kappa<L: Ord>(a: &[L], b: &[L]) -> Result<Kappa, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch {
            a: a.len(),
            b: b.len(),
        });
    }
    let n = a.len() as f64;
    let mut ma: BTreeMap<&L, usize> = BTreeMap::new();
    let mut mb: BTreeMap<&L, usize> = BTreeMap::new();
    let mut agree = 0usize;
    for (x, y) in a.iter().zip(b) {
        *ma.entry(x).or_default() += 1;
        *mb.entry(y).or_default() += 1;
        agree += usize::from(x == y);
    }
    let (observed, expected) = if a.is_empty() {
        (1.0, 1.0)
    } else {
        let pe = ma
            .iter()
            .map(|(l, ca)| *ca as f64 * mb.get(l).copied().unwrap_or(0) as f64)
            .sum::<f64>()
            / (n * n);
        (agree as f64 / n, pe)
    };
    if (1.0 - expected).abs() < 1e-12 {
        let value = if (observed - 1.0).abs() < 1e-12 { 1.0 } else { 0.0 };
        return Ok(Kappa {
            value,
            observed,
            expected,
            warning: Some(Warning::new(
                WarningKind::DegenerateMarginals,
                format!("chance agreement is 1; kappa reported as {value}"),
            )),
        });
    }
    Ok(Kappa {
        value: (observed - expected) / (1.0 - expected),
        observed,
        expected,
        warning: None,
    })
}

/// Agreement between two annotated structures: kappa over the 27 cells,
/// each labelled with the color and shape of its occupant (or empty).
pub fn structure_kappa(a: &StructureState, b: &StructureState) -> Kappa {
    let labels = |s: &StructureState| -> Vec<Option<(Color, crate::Shape)>> {
        let occ = s.occupancy();
        Cell::all()
            .map(|c| occ.get(&c).map(|id| (id.color, id.shape)))
            .collect()
    };
    cohen_kappa(&labels(a), &labels(b)).expect("both label 27 cells")
}

fn color_token(tok: &str) -> Result<Option<Color>, MetricsError> {
    let t = tok.trim();
    if t.is_empty() || matches!(t, "." | "-" | "_") || t.eq_ignore_ascii_case("empty") || t.eq_ignore_ascii_case("none") {
        return Ok(None);
    }
    if let Ok(c) = t.parse::<Color>() {
        return Ok(Some(c));
    }
    let mut chars = t.chars();
    if let (Some(c), None) = (chars.next(), chars.next()) {
        if let Some(color) = Color::from_initial(c.to_ascii_lowercase()) {
            return Ok(Some(color));
        }
    }
    Err(MetricsError::UnknownColorToken(t.to_string()))
}

/// Reads a 3×3 grid of color tokens, top layer first, as a side view.
/// Empty cells may be written `empty`, `none`, `.` or `-`.
pub fn parse_view_grid<S: AsRef<str>>(side: Side, rows: &[Vec<S>]) -> Result<SideView, MetricsError> {
    if rows.len() != 3 {
        return Err(MetricsError::BadGridShape(format!("{} rows", rows.len())));
    }
    let mut view = SideView::empty(side);
    for (r, row) in rows.iter().enumerate() {
        if row.len() != 3 {
            return Err(MetricsError::BadGridShape(format!(
                "row {} has {} cells",
                r + 1,
                row.len()
            )));
        }
        let layer = 2 - r;
        for (col, tok) in row.iter().enumerate() {
            view.cells[layer][col] = color_token(tok.as_ref())?;
        }
    }
    Ok(view)
}

/// Relations readable off side views, with color tokens as arguments.
///
/// Per view: `on(c, base)` for bottom-row cells, `on(upper, lower)` for
/// vertically adjacent cells, and `leftof` between filled cells of the same
/// row (plus `nextto` when the columns touch). Two touching cells of the same
/// color may be one long block, so no horizontal atom is read from them.
pub fn view_grid_to_relations(views: &[SideView]) -> BTreeSet<RelationAtom> {
    let mut out = BTreeSet::new();
    for v in views {
        for layer in 0..3u8 {
            for col in 0..3u8 {
                let Some(c) = v.get(col, layer) else { continue };
                let tc = Term::Color(c);
                if layer == 0 {
                    out.insert(RelationAtom::on(tc, Term::Base, Some(0)));
                } else if let Some(below) = v.get(col, layer - 1) {
                    out.insert(RelationAtom::on(tc, Term::Color(below), Some(layer - 1)));
                }
                for right in col + 1..3 {
                    let Some(d) = v.get(right, layer) else { continue };
                    let adjacent = right == col + 1;
                    if adjacent && c == d {
                        continue;
                    }
                    let td = Term::Color(d);
                    out.insert(RelationAtom::leftof(tc, td, v.side, Some(layer)));
                    if adjacent {
                        out.insert(RelationAtom::nextto(tc, td, Some(layer)));
                    }
                }
            }
        }
    }
    out
}

/// Block identities dropped from every atom.
pub fn token_projection(atoms: &BTreeSet<RelationAtom>) -> BTreeSet<RelationAtom> {
    atoms.iter().map(|a| a.to_tokens()).collect()
}
