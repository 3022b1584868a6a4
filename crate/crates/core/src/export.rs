//! Run and report serialization: RFC 4180 CSV (CRLF rows), Graphviz
//! DOT, and JSON with a stable field order.

use crate::analysis::ConfirmedSet;
use crate::engine::ProcessState;
use crate::regen::RegenReport;
use serde::Serialize;
use std::io::{self, Write};

const CRLF: &str = "\r\n";

/// Per-time leaf count and height, one row per time including 0.
pub fn write_series_csv<W: Write>(out: &mut W, state: &ProcessState) -> io::Result<()> {
    write!(out, "t,leaf_count,max_depth{CRLF}")?;
    for t in 0..=state.time() as usize {
        write!(
            out,
            "{},{},{}{CRLF}",
            t,
            state.leaf_series()[t],
            state.max_depth_series()[t]
        )?;
    }
    Ok(())
}

/// Edge list in creation order, endpoints given by mark.
pub fn write_edges_csv<W: Write>(out: &mut W, state: &ProcessState) -> io::Result<()> {
    write!(out, "mark_src,mark_dst{CRLF}")?;
    for id in 0..state.vertex_count() {
        for &tgt in state.out_targets(id) {
            write!(out, "{},{}{CRLF}", state.mark_of(id), state.mark_of(tgt))?;
        }
    }
    Ok(())
}

/// Certified regeneration times with forward gaps; the last row has no
/// successor so its gap field is empty.
pub fn write_regen_csv<W: Write>(out: &mut W, report: &RegenReport) -> io::Result<()> {
    write!(out, "time,gap{CRLF}")?;
    for (i, &t) in report.times.iter().enumerate() {
        match report.times.get(i + 1) {
            Some(&next) => write!(out, "{},{}{CRLF}", t, next - t)?,
            None => write!(out, "{},{CRLF}", t)?,
        }
    }
    Ok(())
}

/// Graphviz rendering: node names carry the id, labels the mark, and
/// confirmed vertices are filled when a confirmation set is supplied.
pub fn write_dot<W: Write>(
    out: &mut W,
    state: &ProcessState,
    confirmed: Option<&ConfirmedSet>,
) -> io::Result<()> {
    writeln!(out, "digraph acm {{")?;
    writeln!(out, "  rankdir=RL;")?;
    for id in 0..state.vertex_count() {
        let tag = match confirmed {
            Some(set) if set.contains_id(id) => ",style=filled,fillcolor=gray85",
            _ => "",
        };
        writeln!(out, "  v{} [label=\"{}\"{}];", id, state.mark_of(id), tag)?;
    }
    for id in 0..state.vertex_count() {
        for &tgt in state.out_targets(id) {
            writeln!(out, "  v{} -> v{};", id, tgt)?;
        }
    }
    writeln!(out, "}}")
}

/// Pretty JSON with a trailing newline. Struct fields keep declaration
/// order, so output is byte-stable for a fixed input.
pub fn to_json_pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}
