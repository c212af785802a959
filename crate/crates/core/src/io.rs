//! Trajectory CSV and report JSON.
//!
//! A trajectory file is CSV with `.` decimals and every float written with 17
//! significant digits, so a write/read cycle is bit exact. Lines whose first
//! field starts with `#` carry metadata:
//!
//! ```text
//! #grid,<n_nodes>
//! #forcing,const,<c>            or  #forcing,table,<t0>,<c0>,<t1>,<c1>,...
//! #stop,<tag>,<tau_stop>,<min_S>,<max_k>,<tv_k>
//! tau,theta_index,S,W,k
//! #snapshot,<tau>,<L>,<min_k>,<max_k>,<min_S>
//! <tau>,<i>,<S_i>,<W_i>,<k_i>      one row per node
//! ...
//! ```

use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::error::FlowError;
use crate::forcing::{ForcingKind, ForcingSchedule};
use crate::geometry::{curvature_from_support, AngularGrid, SupportState};
use crate::ma_solver::{Diagnostics, FlowTrajectory, Snapshot, StopDetail, StopReason, StopTag};

pub const COLUMNS: [&str; 5] = ["tau", "theta_index", "S", "W", "k"];

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("line {line}: {reason}")]
    Format { line: u64, reason: String },
    #[error(transparent)]
    Flow(#[from] FlowError),
}

/// Float text with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_trajectory<W: Write>(traj: &FlowTrajectory, out: W) -> Result<(), IoError> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
    w.write_record(["#grid".to_string(), traj.grid().n_nodes().to_string()])?;
    let mut forcing = vec!["#forcing".to_string()];
    match traj.forcing.kind() {
        ForcingKind::Constant { value } => forcing.extend(["const".to_string(), fmt_f64(*value)]),
        ForcingKind::Table { times, values } => {
            forcing.push("table".to_string());
            for (t, c) in times.iter().zip(values) {
                forcing.extend([fmt_f64(*t), fmt_f64(*c)]);
            }
        }
    }
    w.write_record(&forcing)?;
    let s = &traj.stop;
    w.write_record([
        "#stop".to_string(),
        s.tag.as_str().to_string(),
        fmt_f64(s.tau_stop),
        fmt_f64(s.detail.min_s),
        fmt_f64(s.detail.max_k),
        fmt_f64(s.detail.tv_k),
    ])?;
    w.write_record(COLUMNS)?;
    for snap in &traj.snapshots {
        let d = &snap.diagnostics;
        let tau = fmt_f64(snap.state.tau);
        w.write_record([
            "#snapshot".to_string(),
            tau.clone(),
            fmt_f64(d.length),
            fmt_f64(d.min_k),
            fmt_f64(d.max_k),
            fmt_f64(d.min_s),
        ])?;
        let k = curvature_from_support(&snap.state)
            .unwrap_or_else(|_| vec![f64::NAN; snap.state.s.len()]);
        for (i, ((s, w_i), k)) in snap.state.s.iter().zip(&snap.state.w).zip(&k).enumerate() {
            w.write_record([
                tau.clone(),
                i.to_string(),
                fmt_f64(*s),
                fmt_f64(*w_i),
                fmt_f64(*k),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_trajectory(traj: &FlowTrajectory, path: &Path) -> Result<(), IoError> {
    write_trajectory(traj, std::fs::File::create(path)?)
}

fn parse_f64(field: &str, line: u64) -> Result<f64, IoError> {
    field.trim().parse().map_err(|_| IoError::Format {
        line,
        reason: format!("expected a number, found {field:?}"),
    })
}

fn field(rec: &csv::StringRecord, i: usize, line: u64) -> Result<&str, IoError> {
    rec.get(i).ok_or_else(|| IoError::Format {
        line,
        reason: format!("missing field {i}"),
    })
}

struct PartialSnapshot {
    tau: f64,
    diagnostics: Diagnostics,
    s: Vec<f64>,
    w: Vec<f64>,
}

/// Reads a trajectory written by [`write_trajectory`]. States, diagnostics
/// and the stop record are restored exactly; the `k` column is not read back.
pub fn read_trajectory<R: Read>(input: R) -> Result<FlowTrajectory, IoError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(input);
    let mut grid = None;
    let mut forcing = None;
    let mut stop = None;
    let mut parts: Vec<PartialSnapshot> = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let head = field(&rec, 0, line)?;
        let num = |i: usize| parse_f64(field(&rec, i, line)?, line);
        match head {
            "#grid" => {
                let n: usize = field(&rec, 1, line)?.parse().map_err(|_| IoError::Format {
                    line,
                    reason: "grid size must be an integer".into(),
                })?;
                grid = Some(AngularGrid::new(n)?);
            }
            "#forcing" => {
                forcing = Some(match field(&rec, 1, line)? {
                    "const" => ForcingSchedule::constant(num(2)?)?,
                    "table" => {
                        let vals = (2..rec.len()).map(num).collect::<Result<Vec<_>, _>>()?;
                        if vals.len() % 2 != 0 {
                            return Err(IoError::Format {
                                line,
                                reason: "forcing table has an odd field count".into(),
                            });
                        }
                        let (t, c) = vals.chunks(2).map(|p| (p[0], p[1])).unzip();
                        ForcingSchedule::table(t, c)?
                    }
                    other => {
                        return Err(IoError::Format {
                            line,
                            reason: format!("unknown forcing kind {other:?}"),
                        });
                    }
                });
            }
            "#stop" => {
                let tag = field(&rec, 1, line)?;
                let tag = StopTag::parse(tag).ok_or_else(|| IoError::Format {
                    line,
                    reason: format!("unknown stop tag {tag:?}"),
                })?;
                stop = Some(StopReason {
                    tag,
                    tau_stop: num(2)?,
                    detail: StopDetail {
                        min_s: num(3)?,
                        max_k: num(4)?,
                        tv_k: num(5)?,
                    },
                });
            }
            "#snapshot" => parts.push(PartialSnapshot {
                tau: num(1)?,
                diagnostics: Diagnostics {
                    length: num(2)?,
                    min_k: num(3)?,
                    max_k: num(4)?,
                    min_s: num(5)?,
                },
                s: Vec::new(),
                w: Vec::new(),
            }),
            "tau" => {}
            _ => {
                let snap = parts.last_mut().ok_or_else(|| IoError::Format {
                    line,
                    reason: "node row before any snapshot header".into(),
                })?;
                let index: usize = field(&rec, 1, line)?.parse().map_err(|_| IoError::Format {
                    line,
                    reason: "theta_index must be an integer".into(),
                })?;
                if index != snap.s.len() || num(0)? != snap.tau {
                    return Err(IoError::Format {
                        line,
                        reason: "node rows out of order".into(),
                    });
                }
                snap.s.push(num(2)?);
                snap.w.push(num(3)?);
            }
        }
    }
    let missing = |what: &str| IoError::Format {
        line: 0,
        reason: format!("missing {what} record"),
    };
    let grid = grid.ok_or_else(|| missing("#grid"))?;
    let forcing = forcing.ok_or_else(|| missing("#forcing"))?;
    let stop = stop.ok_or_else(|| missing("#stop"))?;
    if parts.is_empty() {
        return Err(missing("#snapshot"));
    }
    let snapshots = parts
        .into_iter()
        .map(|p| {
            Ok(Snapshot {
                state: SupportState::new(grid, p.s, p.w, p.tau)?,
                diagnostics: p.diagnostics,
            })
        })
        .collect::<Result<Vec<_>, FlowError>>()?;
    Ok(FlowTrajectory {
        snapshots,
        stop,
        forcing,
    })
}

pub fn load_trajectory(path: &Path) -> Result<FlowTrajectory, IoError> {
    read_trajectory(std::fs::File::open(path)?)
}

/// Pretty-printed UTF-8 JSON with struct fields in declaration order.
pub fn write_report_json<T: Serialize, W: Write>(report: &T, mut out: W) -> Result<(), IoError> {
    serde_json::to_writer_pretty(&mut out, report)?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn save_report_json<T: Serialize>(report: &T, path: &Path) -> Result<(), IoError> {
    write_report_json(report, std::fs::File::create(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::HarmonicSeries;
    use crate::ma_solver::{evolve, EvolveOptions};
    use crate::verification::{check_convexity_preservation, check_length_monotonicity};

    fn sample_run(forcing: ForcingSchedule) -> FlowTrajectory {
        let g = AngularGrid::new(32).unwrap();
        let h = HarmonicSeries {
            a0: 1.0,
            terms: vec![(2, 0.2, 0.05), (3, 0.0, 0.01)],
        }
        .sample(&g);
        let opts = EvolveOptions {
            horizon: 0.3,
            output_interval: Some(0.1),
            ..EvolveOptions::default()
        };
        evolve(g, &h, &vec![0.7; 32], &forcing, &opts).unwrap()
    }

    fn roundtrip(traj: &FlowTrajectory) -> (String, FlowTrajectory) {
        let mut buf = Vec::new();
        write_trajectory(traj, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let back = read_trajectory(text.as_bytes()).unwrap();
        (text, back)
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        for forcing in [
            ForcingSchedule::constant(-0.1).unwrap(),
            ForcingSchedule::table(vec![0.0, 0.1, 1.0], vec![0.0, -0.3, -1.0 / 3.0]).unwrap(),
        ] {
            let traj = sample_run(forcing);
            let (text, back) = roundtrip(&traj);
            assert_eq!(back, traj);
            for (a, b) in traj.snapshots.iter().zip(&back.snapshots) {
                assert_eq!(Diagnostics::of(&b.state).unwrap(), a.diagnostics);
            }
            // writing the re-read trajectory reproduces the file byte for byte
            assert_eq!(roundtrip(&back).0, text);
        }
    }

    #[test]
    fn checks_on_reloaded_trajectory_are_identical() {
        let traj = sample_run(ForcingSchedule::constant(-0.1).unwrap());
        let (_, back) = roundtrip(&traj);
        assert_eq!(
            check_convexity_preservation(&traj, 1e-3).unwrap(),
            check_convexity_preservation(&back, 1e-3).unwrap()
        );
        assert_eq!(
            check_length_monotonicity(&traj, 1e-3).unwrap(),
            check_length_monotonicity(&back, 1e-3).unwrap()
        );
    }

    #[test]
    fn layout_matches_contract() {
        let traj = sample_run(ForcingSchedule::zero());
        let (text, _) = roundtrip(&traj);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "#grid,32");
        assert!(lines[1].starts_with("#forcing,const,"));
        assert!(lines[2].starts_with("#stop,HorizonReached,"));
        assert_eq!(lines[3], "tau,theta_index,S,W,k");
        assert!(lines[4].starts_with("#snapshot,0.0000000000000000e0,"));
        assert_eq!(lines.len(), 4 + traj.snapshots.len() * 33);
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(-1.25), "-1.2500000000000000e0");
    }

    #[test]
    fn malformed_input_is_rejected() {
        let traj = sample_run(ForcingSchedule::zero());
        let (text, _) = roundtrip(&traj);
        let bad = text.replacen("#stop,HorizonReached", "#stop,Exploded", 1);
        assert!(matches!(
            read_trajectory(bad.as_bytes()),
            Err(IoError::Format { line: 3, .. })
        ));
        let bad = text.replacen(",1,", ",2,", 1);
        assert!(read_trajectory(bad.as_bytes()).is_err());
        let truncated: String = text.lines().take(3).map(|l| format!("{l}\n")).collect();
        assert!(read_trajectory(truncated.as_bytes()).is_err());
    }

    #[test]
    fn report_json_ends_with_newline() {
        let mut buf = Vec::new();
        write_report_json(&serde_json::json!({"name": "x"}), &mut buf).unwrap();
        assert!(buf.ends_with(b"}\n"));
    }
}
