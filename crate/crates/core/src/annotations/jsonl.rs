use serde::de::DeserializeOwned;
use serde::Serialize;

use super::AnnotationError;

pub const SCHEMA_VERSION: u32 = 1;

pub(crate) fn header(format: &str) -> String {
    format!("{{\"schema_version\":{SCHEMA_VERSION},\"format\":\"{format}\"}}")
}

/// Splits a JSONL document into `(line number, record)` pairs after checking
/// the header. Blank lines are skipped.
pub(crate) fn records<T: DeserializeOwned>(
    text: &str,
    format: &str,
) -> Result<Vec<(usize, T)>, AnnotationError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let (hline, hdr) = lines
        .next()
        .ok_or_else(|| AnnotationError::schema(1, "missing schema_version header"))?;
    let hdr: serde_json::Value = serde_json::from_str(hdr)
        .map_err(|e| AnnotationError::schema(hline, format!("unparseable header: {e}")))?;
    match hdr.get("schema_version").and_then(|v| v.as_u64()) {
        Some(v) if v == SCHEMA_VERSION as u64 => {}
        Some(v) => {
            return Err(AnnotationError::schema(
                hline,
                format!("unsupported schema_version {v}"),
            ))
        }
        None => return Err(AnnotationError::schema(hline, "missing schema_version header")),
    }
    if let Some(found) = hdr.get("format").and_then(|v| v.as_str()) {
        if found != format {
            return Err(AnnotationError::schema(
                hline,
                format!("expected a {format} file, found {found}"),
            ));
        }
    }
    lines
        .map(|(n, l)| {
            serde_json::from_str(l)
                .map(|r| (n, r))
                .map_err(|e| AnnotationError::schema(n, e.to_string()))
        })
        .collect()
}

pub(crate) fn write<T: Serialize>(format: &str, items: impl IntoIterator<Item = T>) -> String {
    let mut out = header(format);
    out.push('\n');
    for item in items {
        out.push_str(&serde_json::to_string(&item).expect("serializable record"));
        out.push('\n');
    }
    out
}
