//! Parsers for initial-data and forcing spec strings.
//!
//! Profiles (`h`, `f`):
//! * `const:<v>`
//! * `circle:<r>` or `circle:<r>@<cx>,<cy>`
//! * `harmonic:<a0>,cos<m>=<a>,sin<m>=<b>,...`
//!
//! Forcing: `const:<v>` or `table:<path>`, the file holding two columns `t,c`
//! with an optional header row.

use std::path::Path;

use hmcf_core::geometry::HarmonicSeries;
use hmcf_core::ForcingSchedule;

fn number(text: &str, what: &str) -> Result<f64, String> {
    let v: f64 = text
        .trim()
        .parse()
        .map_err(|_| format!("{what}: expected a number, found {text:?}"))?;
    if !v.is_finite() {
        return Err(format!("{what}: value must be finite, found {text:?}"));
    }
    Ok(v)
}

/// A profile on the circle. Circles become the series `r + cx cos θ + cy sin θ`.
pub fn parse_profile(spec: &str) -> Result<HarmonicSeries, String> {
    let (kind, body) = spec
        .split_once(':')
        .ok_or_else(|| format!("expected <kind>:<parameters>, found {spec:?}"))?;
    match kind {
        "const" => Ok(HarmonicSeries::constant(number(body, "const value")?)),
        "circle" => {
            let (r, center) = match body.split_once('@') {
                Some((r, c)) => {
                    let (cx, cy) = c
                        .split_once(',')
                        .ok_or_else(|| format!("circle center must be <cx>,<cy>, found {c:?}"))?;
                    (
                        r,
                        [
                            number(cx, "circle center x")?,
                            number(cy, "circle center y")?,
                        ],
                    )
                }
                None => (body, [0.0, 0.0]),
            };
            let r = number(r, "circle radius")?;
            if !(r > center[0].hypot(center[1])) {
                return Err(format!(
                    "circle radius {r} must exceed the center offset {} so the origin is interior",
                    center[0].hypot(center[1])
                ));
            }
            let mut terms = Vec::new();
            if center != [0.0, 0.0] {
                terms.push((1, center[0], center[1]));
            }
            Ok(HarmonicSeries { a0: r, terms })
        }
        "harmonic" => {
            let mut parts = body.split(',');
            let a0 = number(parts.next().unwrap_or(""), "harmonic a0")?;
            let mut terms: Vec<(u32, f64, f64)> = Vec::new();
            for part in parts {
                let (key, value) = part.split_once('=').ok_or_else(|| {
                    format!("harmonic term must be cos<m>=<a> or sin<m>=<b>, found {part:?}")
                })?;
                let (is_cos, m) = if let Some(m) = key.strip_prefix("cos") {
                    (true, m)
                } else if let Some(m) = key.strip_prefix("sin") {
                    (false, m)
                } else {
                    return Err(format!(
                        "harmonic term key must start with cos or sin, found {key:?}"
                    ));
                };
                let m: u32 =
                    m.parse().ok().filter(|m| *m >= 1).ok_or_else(|| {
                        format!("harmonic mode must be an integer >= 1, found {m:?}")
                    })?;
                let v = number(value, key)?;
                let slot = match terms.iter().position(|t| t.0 == m) {
                    Some(j) => j,
                    None => {
                        terms.push((m, 0.0, 0.0));
                        terms.len() - 1
                    }
                };
                if is_cos {
                    terms[slot].1 = v;
                } else {
                    terms[slot].2 = v;
                }
            }
            Ok(HarmonicSeries { a0, terms })
        }
        other => Err(format!(
            "unknown profile kind {other:?} (expected const, circle or harmonic)"
        )),
    }
}

/// Two-column `t,c` table, optionally preceded by a non-numeric header.
pub fn read_forcing_table(path: &Path) -> Result<ForcingSchedule, String> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| format!("cannot read forcing table {}: {e}", path.display()))?;
    let (mut times, mut values) = (Vec::new(), Vec::new());
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| format!("forcing table {}: {e}", path.display()))?;
        if rec.len() != 2 {
            return Err(format!(
                "forcing table row {}: expected 2 columns, found {}",
                row + 1,
                rec.len()
            ));
        }
        let parsed = (rec[0].parse::<f64>(), rec[1].parse::<f64>());
        match parsed {
            (Ok(t), Ok(c)) => {
                times.push(t);
                values.push(c);
            }
            _ if row == 0 => continue,
            _ => {
                return Err(format!(
                    "forcing table row {}: expected numbers, found {:?}",
                    row + 1,
                    rec
                ))
            }
        }
    }
    ForcingSchedule::table(times, values).map_err(|e| e.to_string())
}

pub fn parse_forcing(spec: &str) -> Result<ForcingSchedule, String> {
    match spec.split_once(':') {
        Some(("const", v)) => {
            ForcingSchedule::constant(number(v, "const value")?).map_err(|e| e.to_string())
        }
        Some(("table", path)) => read_forcing_table(Path::new(path)),
        _ => Err(format!(
            "expected const:<value> or table:<path>, found {spec:?}"
        )),
    }
}

/// Comma-separated list of numbers.
pub fn parse_list(spec: &str, what: &str) -> Result<Vec<f64>, String> {
    spec.split(',').map(|v| number(v, what)).collect()
}
