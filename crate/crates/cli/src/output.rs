use std::cmp::Ordering;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use chemostat_core::basin::{BasinPoint, Crossing, DilutionSurface};
use chemostat_core::{Trajectory, WinnerLabel};
use serde::Serialize;

use crate::error::CliError;
use crate::scenario::FORMAT_VERSION;

/// Round-trip-safe fixed layout: 17 significant digits.
pub fn number(v: f64) -> String {
    format!("{v:.16e}")
}

fn header(columns: &[String]) -> String {
    format!("# format_version = {FORMAT_VERSION}\n{}\n", columns.join(","))
}

fn row(values: impl IntoIterator<Item = String>) -> String {
    let mut line = values.into_iter().collect::<Vec<_>>().join(",");
    line.push('\n');
    line
}

pub fn trajectory_csv(columns: &[String], trajectory: &Trajectory) -> String {
    let mut names = vec!["t".to_string()];
    names.extend_from_slice(columns);
    let mut out = header(&names);
    for (t, y) in trajectory.times.iter().zip(&trajectory.states) {
        out.push_str(&row(std::iter::once(number(*t)).chain(y.iter().copied().map(number))));
    }
    out
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or_else(|| a.len().cmp(&b.len()))
}

/// One labeled initial state per row, sorted by coordinates then `D`.
pub fn basin_csv(columns: &[String], rows: &[(Vec<f64>, WinnerLabel, f64)]) -> String {
    let mut sorted: Vec<&(Vec<f64>, WinnerLabel, f64)> = rows.iter().collect();
    sorted.sort_by(|a, b| lexicographic(&a.0, &b.0).then(a.2.total_cmp(&b.2)));
    let mut names = columns.to_vec();
    names.extend(["label".to_string(), "D".to_string()]);
    let mut out = header(&names);
    for (x, label, d) in sorted {
        out.push_str(&row(x
            .iter()
            .copied()
            .map(number)
            .chain([label.to_string(), number(*d)])));
    }
    out
}

pub fn basin_rows(points: &[BasinPoint], d: f64) -> Vec<(Vec<f64>, WinnerLabel, f64)> {
    points.iter().map(|p| (p.initial.clone(), p.label, d)).collect()
}

pub fn separatrix_csv(columns: &[String], crossings: &[(&Crossing, f64)]) -> String {
    let mut sorted = crossings.to_vec();
    sorted.sort_by(|a, b| lexicographic(&a.0.point, &b.0.point).then(a.1.total_cmp(&b.1)));
    let mut names = columns.to_vec();
    names.extend(["lower_label", "upper_label", "bracket_length", "D"].map(String::from));
    let mut out = header(&names);
    for (c, d) in sorted {
        out.push_str(&row(c.point.iter().copied().map(number).chain([
            c.lower_label.to_string(),
            c.upper_label.to_string(),
            number(c.bracket_length),
            number(d),
        ])));
    }
    out
}

/// One row per ray: base coordinates, crossing level (empty when the ray
/// does not cross) and the end labels.
pub fn surface_csv(columns: &[String], axes: [usize; 2], ray: usize, surfaces: &[DilutionSurface]) -> String {
    let names: Vec<String> = [
        "D".to_string(),
        columns[axes[0]].clone(),
        columns[axes[1]].clone(),
        format!("{}_crossing", columns[ray]),
        "lower_label".into(),
        "upper_label".into(),
        "sided".into(),
    ]
    .into();
    let mut out = header(&names);
    let mut rows: Vec<(f64, [f64; 2], String)> = Vec::new();
    for s in surfaces {
        for r in &s.rays {
            let label = |l: Option<WinnerLabel>| l.map(|l| l.to_string()).unwrap_or_default();
            let mut line = String::new();
            let _ = write!(
                line,
                "{},{},{},{},{},{},{}",
                number(s.dilution),
                number(r.base[0]),
                number(r.base[1]),
                r.level.map(number).unwrap_or_default(),
                label(r.lower_label()),
                label(r.upper_label()),
                r.sided && r.failure.is_none(),
            );
            rows.push((s.dilution, r.base, line));
        }
    }
    rows.sort_by(|a, b| a.0.total_cmp(&b.0).then(lexicographic(&a.1, &b.1)));
    for (_, _, line) in rows {
        out.push_str(&line);
        out.push('\n');
    }
    out
}

/// Pretty JSON with a trailing newline.
pub fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize to JSON");
    s.push('\n');
    s
}

/// Writes `contents` to `dir/name` through a temporary file in the same
/// directory, so the target is either complete or absent.
pub fn write_atomic(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    let target = dir.join(name);
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(contents.as_bytes())
        .and_then(|_| tmp.as_file().sync_all())
        .map_err(|e| CliError::io(&target, e))?;
    tmp.persist(&target).map_err(|e| CliError::io(&target, e.error))?;
    Ok(())
}
