//! Trace files: the native event log and the classic BonnMotion waypoint list.
//!
//! Native files start with `#srw-trace v1 a_x a_y` followed by one
//! `node_id t x y flag` line per event, where the flag is `H` for a home
//! visit (including the start at time 0) and `W` for any other waypoint.
//! BonnMotion files hold one line per node of `t x y` triples.

use std::io::Write;
use std::path::Path;

use thiserror::Error;

use crate::geometry::{BoundaryMode, Point2, RectDomain, Segment};
use crate::mobility::WalkerTrajectory;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("no trajectories to export")]
    Empty,
    #[error("trajectory of node {0} was pruned and no longer starts at time 0")]
    Pruned(usize),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceFormat {
    Native,
    BonnMotion,
}

fn check(trajs: &[WalkerTrajectory]) -> Result<(), TraceError> {
    if trajs.is_empty() {
        return Err(TraceError::Empty);
    }
    match trajs.iter().position(|t| t.pruned > 0) {
        Some(i) => Err(TraceError::Pruned(i)),
        None => Ok(()),
    }
}

/// `(t, position, at_home)` for the start and every recorded waypoint.
fn events(traj: &WalkerTrajectory) -> impl Iterator<Item = (f64, Point2, bool)> + '_ {
    std::iter::once((0.0, traj.home, true)).chain(
        traj.legs
            .iter()
            .zip(&traj.home_arrivals)
            .map(|(l, &h)| (l.t_end, traj.domain.wrap(l.end), h)),
    )
}

pub fn export_trace(trajs: &[WalkerTrajectory], format: TraceFormat) -> Result<String, TraceError> {
    check(trajs)?;
    let dom = trajs[0].domain;
    let mut out = String::new();
    match format {
        TraceFormat::Native => {
            out.push_str(&format!("#srw-trace v1 {:.6} {:.6}\n", dom.width, dom.height));
            for (id, traj) in trajs.iter().enumerate() {
                for (t, p, home) in events(traj) {
                    let flag = if home { 'H' } else { 'W' };
                    out.push_str(&format!("{id} {t:.6} {:.6} {:.6} {flag}\n", p.x, p.y));
                }
            }
        }
        TraceFormat::BonnMotion => {
            for traj in trajs {
                let line: Vec<String> =
                    events(traj).map(|(t, p, _)| format!("{t:.6} {:.6} {:.6}", p.x, p.y)).collect();
                out.push_str(&line.join(" "));
                out.push('\n');
            }
        }
    }
    Ok(out)
}

/// Writes the trace to `path`, removing the file again if writing fails.
pub fn write_trace(path: &Path, trajs: &[WalkerTrajectory], format: TraceFormat) -> Result<(), TraceError> {
    let text = export_trace(trajs, format)?;
    let result = std::fs::File::create(path).and_then(|mut f| f.write_all(text.as_bytes()));
    if let Err(e) = result {
        let _ = std::fs::remove_file(path);
        return Err(e.into());
    }
    Ok(())
}

/// Reads a native trace back into trajectories. Legs run between consecutive
/// events of a node at the speed implied by their duration.
pub fn import_native(text: &str, boundary: BoundaryMode) -> Result<Vec<WalkerTrajectory>, TraceError> {
    let bad = |line: usize, message: &str| TraceError::Malformed { line, message: message.to_string() };
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| bad(1, "missing header"))?;
    let head: Vec<&str> = header.split_whitespace().collect();
    if head.len() != 4 || head[0] != "#srw-trace" || head[1] != "v1" {
        return Err(bad(1, "expected `#srw-trace v1 a_x a_y`"));
    }
    let side = |s: &str| s.parse::<f64>().map_err(|_| bad(1, "domain side is not a number"));
    let dom = RectDomain::new(side(head[2])?, side(head[3])?, boundary).map_err(|_| bad(1, "invalid domain"))?;

    let mut nodes: Vec<Vec<(f64, Point2, bool)>> = Vec::new();
    for (i, raw) in lines {
        let line = i + 1;
        if raw.trim().is_empty() || raw.starts_with('#') {
            continue;
        }
        let tok: Vec<&str> = raw.split_whitespace().collect();
        if tok.len() != 5 {
            return Err(bad(line, "expected `node_id t x y flag`"));
        }
        let id: usize = tok[0].parse().map_err(|_| bad(line, "node id is not an integer"))?;
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(line, "not a number"));
        let (t, x, y) = (num(tok[1])?, num(tok[2])?, num(tok[3])?);
        let home = match tok[4] {
            "H" => true,
            "W" => false,
            _ => return Err(bad(line, "flag must be H or W")),
        };
        if id > nodes.len() {
            return Err(bad(line, "node ids must appear in order"));
        }
        if id == nodes.len() {
            if t != 0.0 || !home {
                return Err(bad(line, "each node must start at home at time 0"));
            }
            nodes.push(Vec::new());
        }
        let last = nodes.len() - 1;
        if id != last || nodes[id].last().is_some_and(|e| e.0 > t) {
            return Err(bad(line, "events must be grouped by node and ordered in time"));
        }
        nodes[id].push((t, Point2::new(x, y), home));
    }
    if nodes.is_empty() {
        return Err(TraceError::Empty);
    }
    Ok(nodes
        .into_iter()
        .map(|ev| {
            let home = ev[0].1;
            let mut legs = Vec::with_capacity(ev.len() - 1);
            let mut arrivals = Vec::with_capacity(ev.len() - 1);
            for w in ev.windows(2) {
                let (t0, p0, _) = w[0];
                let (t1, p1, h) = w[1];
                let end = p0 + dom.displacement(p0, p1);
                let dt = t1 - t0;
                let speed = if dt > 0.0 { p0.dist(end) / dt } else { 0.0 };
                legs.push(Segment { start: p0, end, t_start: t0, t_end: t1, speed });
                arrivals.push(h);
            }
            WalkerTrajectory::from_legs(home, dom, legs, arrivals)
        })
        .collect())
}
