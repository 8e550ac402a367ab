//! Line-oriented text formats for partitions, classifiers and densities.
//!
//! Every document starts with a `dpuc-<kind> v1` header line followed by
//! `key value...` lines. Blank lines and lines starting with `#` are
//! ignored. Floats are written in Rust's shortest round-trip form, so
//! `parse(write(x)) == x` bit for bit.
//!
//! ```text
//! dpuc-partition v1
//! kind metric
//! space circle
//! radius 0.5
//! centers 2
//! 0.0
//! 0.5
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::classify::PartitionClassifier;
use crate::density::PiecewiseConstantDensity;
use crate::error::{Error, Result};
use crate::partition::{CellPartition, GridCell, GridPartition, MetricPartition, SpaceDescriptor, UnitCubeGrid};

/// Types with a stable text form.
pub trait TextFormat: Sized {
    fn write_text(&self) -> String;
    fn parse_text(text: &str) -> Result<Self>;
}

/// Opaque cursor over the significant lines of a document.
pub struct Lines<'a> {
    inner: Vec<(usize, Vec<&'a str>)>,
    pos: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        let inner = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
            .map(|(i, l)| (i, l.split_whitespace().collect()))
            .collect();
        Lines { inner, pos: 0 }
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        let line = self
            .inner
            .get(self.pos.saturating_sub(1))
            .map_or(0, |(l, _)| *l);
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }

    fn next(&mut self) -> Result<Vec<&'a str>> {
        let Some((_, toks)) = self.inner.get(self.pos) else {
            self.pos += 1;
            return Err(self.err("unexpected end of input"));
        };
        self.pos += 1;
        Ok(toks.clone())
    }

    /// Next line, which must start with `key`; returns the remaining tokens.
    fn keyed(&mut self, key: &str) -> Result<Vec<&'a str>> {
        let toks = self.next()?;
        if toks.first() != Some(&key) {
            return Err(self.err(format!("expected `{key}`, found `{}`", toks.join(" "))));
        }
        Ok(toks[1..].to_vec())
    }

    fn one<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let toks = self.keyed(key)?;
        match toks.as_slice() {
            [v] => v.parse().map_err(|_| self.err(format!("bad value for `{key}`: {v}"))),
            _ => Err(self.err(format!("`{key}` takes one value"))),
        }
    }

    fn floats(&self, toks: &[&str]) -> Result<Vec<f64>> {
        toks.iter()
            .map(|t| t.parse().map_err(|_| self.err(format!("bad number `{t}`"))))
            .collect()
    }

    fn header(&mut self, kind: &str) -> Result<()> {
        let toks = self.next()?;
        if toks != [format!("dpuc-{kind}").as_str(), "v1"] {
            return Err(self.err(format!("expected header `dpuc-{kind} v1`")));
        }
        Ok(())
    }

    fn finish(&mut self) -> Result<()> {
        if self.pos < self.inner.len() {
            self.pos += 1;
            return Err(self.err("trailing content"));
        }
        Ok(())
    }

    fn wrap<T>(&self, r: Result<T>) -> Result<T> {
        r.map_err(|e| match e {
            Error::Parse { .. } => e,
            other => self.err(other.to_string()),
        })
    }
}

fn floats_line(out: &mut String, key: &str, xs: &[f64]) {
    out.push_str(key);
    for x in xs {
        let _ = write!(out, " {x:?}");
    }
    out.push('\n');
}

fn bit(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

fn parse_bit(lines: &Lines, t: &str) -> Result<bool> {
    match t {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(lines.err(format!("expected 0 or 1, found `{t}`"))),
    }
}

/// Partitions that can be embedded in a classifier document.
pub trait PartitionText: CellPartition + Sized {
    fn write_body(&self, out: &mut String);
    fn parse_body(lines: &mut Lines<'_>) -> Result<Self>;
    fn write_cell(cell: &Self::Cell, out: &mut String);
    fn parse_cell(lines: &Lines<'_>, toks: &[&str]) -> Result<Self::Cell>;
}

fn write_grid_cell(cell: &GridCell, out: &mut String) {
    let ids: Vec<String> = cell.0.iter().map(i64::to_string).collect();
    out.push_str(&ids.join(" "));
}

fn parse_grid_cell(lines: &Lines<'_>, toks: &[&str]) -> Result<GridCell> {
    toks.iter()
        .map(|t| t.parse().map_err(|_| lines.err(format!("bad cell index `{t}`"))))
        .collect::<Result<_>>()
        .map(GridCell)
}

impl PartitionText for GridPartition {
    fn write_body(&self, out: &mut String) {
        out.push_str("kind grid\n");
        let _ = writeln!(out, "side {:?}", self.side());
        floats_line(out, "anchor", self.anchor());
    }

    fn parse_body(lines: &mut Lines<'_>) -> Result<Self> {
        let kind: String = lines.one("kind")?;
        if kind != "grid" {
            return Err(lines.err(format!("expected kind grid, found {kind}")));
        }
        let side = lines.one("side")?;
        let toks = lines.keyed("anchor")?;
        let anchor = lines.floats(&toks)?;
        lines.wrap(GridPartition::new(side, anchor))
    }

    fn write_cell(cell: &GridCell, out: &mut String) {
        write_grid_cell(cell, out)
    }

    fn parse_cell(lines: &Lines<'_>, toks: &[&str]) -> Result<GridCell> {
        parse_grid_cell(lines, toks)
    }
}

impl PartitionText for UnitCubeGrid {
    fn write_body(&self, out: &mut String) {
        out.push_str("kind unit_cube_grid\n");
        let _ = writeln!(out, "dim {}", self.dim());
        let _ = writeln!(out, "side {:?}", self.grid().side());
    }

    fn parse_body(lines: &mut Lines<'_>) -> Result<Self> {
        let kind: String = lines.one("kind")?;
        if kind != "unit_cube_grid" {
            return Err(lines.err(format!("expected kind unit_cube_grid, found {kind}")));
        }
        let dim = lines.one("dim")?;
        let side = lines.one("side")?;
        lines.wrap(UnitCubeGrid::new(dim, side))
    }

    fn write_cell(cell: &GridCell, out: &mut String) {
        write_grid_cell(cell, out)
    }

    fn parse_cell(lines: &Lines<'_>, toks: &[&str]) -> Result<GridCell> {
        parse_grid_cell(lines, toks)
    }
}

impl PartitionText for MetricPartition {
    fn write_body(&self, out: &mut String) {
        out.push_str("kind metric\n");
        match self.space() {
            SpaceDescriptor::UnitCube { dim } => {
                let _ = writeln!(out, "space unit_cube {dim}");
            }
            SpaceDescriptor::Circle => out.push_str("space circle\n"),
        }
        let _ = writeln!(out, "radius {:?}", self.radius());
        let _ = writeln!(out, "centers {}", self.len());
        for c in self.centers() {
            let parts: Vec<String> = c.iter().map(|v| format!("{v:?}")).collect();
            out.push_str(&parts.join(" "));
            out.push('\n');
        }
    }

    fn parse_body(lines: &mut Lines<'_>) -> Result<Self> {
        let kind: String = lines.one("kind")?;
        if kind != "metric" {
            return Err(lines.err(format!("expected kind metric, found {kind}")));
        }
        let toks = lines.keyed("space")?;
        let space = match toks.as_slice() {
            ["circle"] => SpaceDescriptor::Circle,
            ["unit_cube", d] => SpaceDescriptor::UnitCube {
                dim: d.parse().map_err(|_| lines.err("bad dimension"))?,
            },
            _ => return Err(lines.err("unknown space")),
        };
        let radius = lines.one("radius")?;
        let count: usize = lines.one("centers")?;
        let mut centers = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            let toks = lines.next()?;
            centers.push(lines.floats(&toks)?);
        }
        lines.wrap(MetricPartition::from_centers(space, centers, radius))
    }

    fn write_cell(cell: &usize, out: &mut String) {
        let _ = write!(out, "{cell}");
    }

    fn parse_cell(lines: &Lines<'_>, toks: &[&str]) -> Result<usize> {
        match toks {
            [t] => t.parse().map_err(|_| lines.err(format!("bad cell id `{t}`"))),
            _ => Err(lines.err("metric cells are single integers")),
        }
    }
}

macro_rules! partition_document {
    ($t:ty) => {
        impl TextFormat for $t {
            fn write_text(&self) -> String {
                let mut out = String::from("dpuc-partition v1\n");
                self.write_body(&mut out);
                out
            }

            fn parse_text(text: &str) -> Result<Self> {
                let mut lines = Lines::new(text);
                lines.header("partition")?;
                let p = <$t>::parse_body(&mut lines)?;
                lines.finish()?;
                Ok(p)
            }
        }
    };
}

partition_document!(GridPartition);
partition_document!(UnitCubeGrid);
partition_document!(MetricPartition);

/// ```text
/// dpuc-classifier v1
/// default 0
/// kind unit_cube_grid
/// dim 1
/// side 0.5
/// decisions 2
/// 0 : 1
/// 1 : 0
/// ```
impl<P: PartitionText> TextFormat for PartitionClassifier<P> {
    fn write_text(&self) -> String {
        let mut out = String::from("dpuc-classifier v1\n");
        let _ = writeln!(out, "default {}", bit(self.default_label()));
        self.partition().write_body(&mut out);
        let _ = writeln!(out, "decisions {}", self.decisions().len());
        for (cell, d) in self.decisions() {
            P::write_cell(cell, &mut out);
            let _ = writeln!(out, " : {}", bit(*d));
        }
        out
    }

    fn parse_text(text: &str) -> Result<Self> {
        let mut lines = Lines::new(text);
        lines.header("classifier")?;
        let t: String = lines.one("default")?;
        let default = parse_bit(&lines, &t)?;
        let partition = P::parse_body(&mut lines)?;
        let count: usize = lines.one("decisions")?;
        let mut decisions = BTreeMap::new();
        for _ in 0..count {
            let toks = lines.next()?;
            let [cell @ .., ":", d] = toks.as_slice() else {
                return Err(lines.err("expected `<cell> : <0|1>`"));
            };
            let cell = P::parse_cell(&lines, cell)?;
            if decisions.insert(cell, parse_bit(&lines, d)?).is_some() {
                return Err(lines.err("duplicate cell"));
            }
        }
        lines.finish()?;
        Ok(PartitionClassifier::new(partition, decisions, default))
    }
}

/// ```text
/// dpuc-density v1
/// fallback 0
/// kind grid
/// side 0.5
/// anchor 0.0
/// cells 1
/// 1 : 2.0
/// ```
impl TextFormat for PiecewiseConstantDensity {
    fn write_text(&self) -> String {
        let mut out = String::from("dpuc-density v1\n");
        let _ = writeln!(out, "fallback {}", bit(self.is_fallback()));
        self.grid().write_body(&mut out);
        let _ = writeln!(out, "cells {}", self.values().len());
        for (cell, v) in self.values() {
            write_grid_cell(cell, &mut out);
            let _ = writeln!(out, " : {v:?}");
        }
        out
    }

    fn parse_text(text: &str) -> Result<Self> {
        let mut lines = Lines::new(text);
        lines.header("density")?;
        let t: String = lines.one("fallback")?;
        let fallback = parse_bit(&lines, &t)?;
        let grid = GridPartition::parse_body(&mut lines)?;
        let count: usize = lines.one("cells")?;
        let mut values = BTreeMap::new();
        for _ in 0..count {
            let toks = lines.next()?;
            let [cell @ .., ":", v] = toks.as_slice() else {
                return Err(lines.err("expected `<cell> : <value>`"));
            };
            let cell = parse_grid_cell(&lines, cell)?;
            let v: f64 = v.parse().map_err(|_| lines.err(format!("bad value `{v}`")))?;
            if values.insert(cell, v).is_some() {
                return Err(lines.err("duplicate cell"));
            }
        }
        lines.finish()?;
        let f = lines.wrap(PiecewiseConstantDensity::new(grid, values))?;
        Ok(f.with_fallback_flag(fallback))
    }
}
