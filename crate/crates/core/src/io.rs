//! File formats: radio map JSON, query CSV, result CSV.
//!
//! Query CSV layout, after a `# format_version=1` line:
//!
//! ```text
//! trace_id,t,ap_id,rss,truth_x,truth_y,ap_t,step_len_m,heading_rad
//! ```
//!
//! One row per (scan, AP). Consecutive rows sharing `trace_id` and `t` form a
//! scan. `ap_t` is the time the reading was taken (defaults to `t`);
//! `truth_*` and the motion columns may be empty and are repeated on every
//! row of a scan.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::FORMAT_VERSION;
use crate::error::{Error, Result};
use crate::eval::{format_value, QueryOutcome};
use crate::fingerprint::{ApId, Fingerprint, Location, Reading};
use crate::radio_map::{MapEntry, RadioMap};
use crate::trace::{QueryTrace, TraceScan};

#[derive(Serialize, Deserialize)]
struct SampleFile {
    readings: BTreeMap<ApId, Reading>,
}

#[derive(Serialize, Deserialize)]
struct LocationFile {
    x: f64,
    y: f64,
    samples: Vec<SampleFile>,
}

#[derive(Serialize, Deserialize)]
struct MapFile {
    format_version: u32,
    grid_spacing: f64,
    locations: Vec<LocationFile>,
}

fn check_version(found: u32) -> Result<()> {
    if found != FORMAT_VERSION {
        return Err(Error::FormatVersion {
            found,
            expected: FORMAT_VERSION,
        });
    }
    Ok(())
}

pub fn map_to_json(map: &RadioMap) -> Result<String> {
    let file = MapFile {
        format_version: FORMAT_VERSION,
        grid_spacing: map.grid_spacing(),
        locations: map
            .entries()
            .iter()
            .map(|e| LocationFile {
                x: e.location.x,
                y: e.location.y,
                samples: e
                    .samples
                    .iter()
                    .map(|s| SampleFile {
                        readings: s.readings().clone(),
                    })
                    .collect(),
            })
            .collect(),
    };
    Ok(serde_json::to_string(&file)?)
}

pub fn map_from_json(text: &str) -> Result<RadioMap> {
    let file: MapFile = serde_json::from_str(text)?;
    check_version(file.format_version)?;
    let entries = file
        .locations
        .into_iter()
        .map(|l| {
            let samples = l
                .samples
                .into_iter()
                .map(|s| Fingerprint::new(s.readings))
                .collect::<Result<Vec<_>>>()?;
            Ok(MapEntry {
                location: Location::new(l.x, l.y),
                samples,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    RadioMap::new(file.grid_spacing, entries)
}

pub fn write_map(map: &RadioMap, path: &Path) -> Result<()> {
    std::fs::write(path, map_to_json(map)?)?;
    Ok(())
}

pub fn read_map(path: &Path) -> Result<RadioMap> {
    map_from_json(&std::fs::read_to_string(path)?)
}

const QUERY_HEADER: [&str; 9] = [
    "trace_id",
    "t",
    "ap_id",
    "rss",
    "truth_x",
    "truth_y",
    "ap_t",
    "step_len_m",
    "heading_rad",
];

fn opt(v: Option<f64>, prec: usize) -> String {
    v.map(|x| format!("{x:.prec$}")).unwrap_or_default()
}

/// Write traces as query CSV. RSS is rounded to 0.1 dB, times to 1 ms.
pub fn write_queries<W: Write>(traces: &[QueryTrace], mut w: W) -> Result<()> {
    writeln!(w, "# format_version={FORMAT_VERSION}")?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(QUERY_HEADER)?;
    for trace in traces {
        for scan in &trace.scans {
            let (tx, ty) = (scan.truth.map(|l| l.x), scan.truth.map(|l| l.y));
            let (sl, hd) = (scan.step.map(|s| s.0), scan.step.map(|s| s.1));
            for (ap, r) in scan.fingerprint.readings() {
                out.write_record([
                    trace.id.clone(),
                    format!("{:.3}", scan.t),
                    ap.to_string(),
                    format!("{:.1}", r.rss),
                    opt(tx, 4),
                    opt(ty, 4),
                    format!("{:.3}", r.t),
                    opt(sl, 4),
                    opt(hd, 5),
                ])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_queries_file(traces: &[QueryTrace], path: &Path) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_queries(traces, std::io::BufWriter::new(f))
}

#[derive(Deserialize)]
struct QueryRow {
    trace_id: String,
    t: f64,
    ap_id: String,
    rss: f64,
    truth_x: Option<f64>,
    truth_y: Option<f64>,
    ap_t: Option<f64>,
    step_len_m: Option<f64>,
    heading_rad: Option<f64>,
}

/// Parse query CSV into traces, in file order.
pub fn read_queries<R: Read>(r: R) -> Result<Vec<QueryTrace>> {
    let mut reader = BufReader::new(r);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    let version = first
        .trim()
        .strip_prefix('#')
        .and_then(|s| s.trim().strip_prefix("format_version="))
        .ok_or_else(|| Error::Parse("query file must start with '# format_version=N'".into()))?;
    let version: u32 = version
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("bad format version '{version}'")))?;
    check_version(version)?;

    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut traces: Vec<QueryTrace> = Vec::new();
    let mut current: Option<(String, f64, ScanBuilder)> = None;
    for (line, row) in csv.deserialize::<QueryRow>().enumerate() {
        let row = row?;
        let same = matches!(&current, Some((id, t, _)) if *id == row.trace_id && *t == row.t);
        if !same {
            if let Some((id, _, b)) = current.take() {
                push_scan(&mut traces, id, b.finish()?);
            }
            let truth = match (row.truth_x, row.truth_y) {
                (Some(x), Some(y)) => Some(Location::new(x, y)),
                (None, None) => None,
                _ => return Err(Error::Parse(format!("row {}: truth_x and truth_y must both be set", line + 2))),
            };
            let step = match (row.step_len_m, row.heading_rad) {
                (Some(l), Some(h)) => Some((l, h)),
                (None, None) => None,
                _ => {
                    return Err(Error::Parse(format!(
                        "row {}: step_len_m and heading_rad must both be set",
                        line + 2
                    )))
                }
            };
            current = Some((
                row.trace_id.clone(),
                row.t,
                ScanBuilder {
                    t: row.t,
                    truth,
                    step,
                    readings: BTreeMap::new(),
                },
            ));
        }
        let (_, _, b) = current.as_mut().expect("scan started above");
        let ap = ApId::new(row.ap_id)?;
        if b.readings.contains_key(&ap) {
            return Err(Error::Parse(format!("row {}: duplicate AP {ap} in a scan", line + 2)));
        }
        b.readings.insert(
            ap,
            Reading {
                rss: row.rss,
                t: row.ap_t.unwrap_or(row.t),
            },
        );
    }
    if let Some((id, _, b)) = current.take() {
        push_scan(&mut traces, id, b.finish()?);
    }
    Ok(traces)
}

struct ScanBuilder {
    t: f64,
    truth: Option<Location>,
    step: Option<(f64, f64)>,
    readings: BTreeMap<ApId, Reading>,
}

impl ScanBuilder {
    fn finish(self) -> Result<TraceScan> {
        Ok(TraceScan {
            t: self.t,
            fingerprint: Fingerprint::new(self.readings)?,
            truth: self.truth,
            step: self.step,
        })
    }
}

fn push_scan(traces: &mut Vec<QueryTrace>, id: String, scan: TraceScan) {
    match traces.last_mut() {
        Some(t) if t.id == id => t.scans.push(scan),
        _ => traces.push(QueryTrace { id, scans: vec![scan] }),
    }
}

pub fn read_queries_file(path: &Path) -> Result<Vec<QueryTrace>> {
    read_queries(std::fs::File::open(path)?)
}

/// Per-query localization results.
pub fn write_results<W: Write>(outcomes: &[QueryOutcome], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["trace_id", "t", "est_x", "est_y", "truth_x", "truth_y", "error_m", "phi"])?;
    for o in outcomes {
        let est = o.estimate.as_ref();
        out.write_record([
            o.trace_id.clone(),
            format!("{:.3}", o.t),
            opt(est.map(|e| e.location.x), 4),
            opt(est.map(|e| e.location.y), 4),
            opt(o.truth.map(|l| l.x), 4),
            opt(o.truth.map(|l| l.y), 4),
            opt(o.error_m, 4),
            est.map(|e| format_value(e.score.phi)).unwrap_or_else(|| "inf".into()),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traces() -> Vec<QueryTrace> {
        let id = |s: &str| ApId::new(s).unwrap();
        let mut scans = Vec::new();
        for k in 0..3 {
            let t = 1.4 * k as f64;
            let mut m = BTreeMap::new();
            m.insert(id("a"), Reading { rss: -50.04, t });
            m.insert(id("b"), Reading { rss: -71.26, t: 0.0 });
            scans.push(TraceScan {
                t,
                fingerprint: Fingerprint::new(m).unwrap(),
                truth: Some(Location::new(k as f64, 0.5)),
                step: Some((1.0, 0.0)),
            });
        }
        vec![
            QueryTrace { id: "w0".into(), scans },
            QueryTrace {
                id: "s0".into(),
                scans: vec![TraceScan {
                    t: 0.0,
                    fingerprint: Fingerprint::from_rss(0.0, [("c", -60.0)]).unwrap(),
                    truth: None,
                    step: None,
                }],
            },
        ]
    }

    #[test]
    fn query_round_trip() {
        let mut buf = Vec::new();
        write_queries(&traces(), &mut buf).unwrap();
        let back = read_queries(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].scans.len(), 3);
        let r = back[0].scans[2].fingerprint.readings()[&ApId::new("b").unwrap()];
        assert_eq!((r.rss, r.t), (-71.3, 0.0));
        assert_eq!(back[0].scans[2].t, 2.8);
        assert_eq!(back[1].scans[0].truth, None);
        assert_eq!(back[1].scans[0].step, None);
        let mut again = Vec::new();
        write_queries(&back, &mut again).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn query_errors() {
        let body = "trace_id,t,ap_id,rss,truth_x,truth_y,ap_t,step_len_m,heading_rad\nq,0,a,-50,,,,,\n";
        assert!(matches!(read_queries(body.as_bytes()), Err(Error::Parse(_))));
        let v2 = format!("# format_version=2\n{body}");
        assert!(matches!(read_queries(v2.as_bytes()), Err(Error::FormatVersion { found: 2, .. })));
        let ok = format!("# format_version=1\n{body}");
        let t = read_queries(ok.as_bytes()).unwrap();
        assert_eq!(t[0].scans[0].fingerprint.latest_t(), 0.0);
        let dup = format!("{ok}q,0,a,-51,,,,,\n");
        assert!(read_queries(dup.as_bytes()).is_err());
        let half = "# format_version=1\ntrace_id,t,ap_id,rss,truth_x,truth_y,ap_t,step_len_m,heading_rad\nq,0,a,-50,1,,,,\n";
        assert!(read_queries(half.as_bytes()).is_err());
    }

    #[test]
    fn map_round_trip() {
        let fp = |r: f64| Fingerprint::from_rss(0.0, [("a", r), ("b", r - 10.0)]).unwrap();
        let map = RadioMap::new(
            1.0,
            vec![
                MapEntry {
                    location: Location::new(0.0, 0.0),
                    samples: vec![fp(-50.123456789), fp(-51.0)],
                },
                MapEntry {
                    location: Location::new(1.0, 0.0),
                    samples: vec![fp(-60.0)],
                },
            ],
        )
        .unwrap();
        let text = map_to_json(&map).unwrap();
        let back = map_from_json(&text).unwrap();
        assert_eq!(back.entries(), map.entries());
        let bad = text.replace("\"format_version\":1", "\"format_version\":7");
        assert!(matches!(map_from_json(&bad), Err(Error::FormatVersion { found: 7, .. })));
    }
}
