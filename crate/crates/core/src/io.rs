//! CSV import and export for traces, fields, grids, and boundary profiles.
//!
//! Floats are written with the shortest representation that parses back to
//! the same bits, so a write/read cycle reproduces every sample exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::forward::{SpaceTimeField, TimeGrid};
use crate::geometry::{BoundaryProfile, Grids, InteriorField};

const TRACE_HEADER: &str = "t,boundary_node_id,value";

/// Write a boundary trace, row-major by time.
pub fn write_trace_csv(path: impl AsRef<Path>, trace: &SpaceTimeField) -> Result<()> {
    let path = path.as_ref();
    let time = trace.time();
    let mut out = String::with_capacity(trace.values().len() * 24);
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for k in 0..time.n_nodes() {
        let t = time.t(k);
        for j in 0..trace.n_boundary() {
            writeln!(out, "{t},{j},{}", trace.at(k, j)).expect("string write");
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Read a trace written by [`write_trace_csv`], reconstructing its layout
/// from the node-id cycle and the time column.
pub fn read_trace_csv(path: impl AsRef<Path>) -> Result<SpaceTimeField> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows: Vec<(f64, usize, f64)> = Vec::new();
    let mut saw_header = false;
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if !saw_header {
            if line != TRACE_HEADER {
                return Err(parse_error(path, idx + 1, format!("expected header {TRACE_HEADER:?}")));
            }
            saw_header = true;
            continue;
        }
        let mut cols = line.split(',');
        let t = parse_float(cols.next(), path, idx + 1, "t")?;
        let j = parse_index(cols.next(), path, idx + 1, "boundary_node_id")?;
        let v = parse_float(cols.next(), path, idx + 1, "value")?;
        if cols.next().is_some() {
            return Err(parse_error(path, idx + 1, "expected exactly 3 columns".into()));
        }
        rows.push((t, j, v));
    }
    if rows.is_empty() {
        return Err(parse_error(path, 1, "no data rows".into()));
    }
    let nb = rows
        .iter()
        .skip(1)
        .position(|r| r.1 == 0)
        .map(|p| p + 1)
        .unwrap_or(rows.len());
    if rows.len() % nb != 0 {
        return Err(parse_error(
            path,
            rows.len() + 1,
            format!("{} rows do not tile into blocks of {nb} boundary nodes", rows.len()),
        ));
    }
    for (i, row) in rows.iter().enumerate() {
        if row.1 != i % nb {
            return Err(parse_error(
                path,
                i + 2,
                format!("expected boundary node {} but found {}", i % nb, row.1),
            ));
        }
    }
    let steps = rows.len() / nb - 1;
    if steps == 0 {
        return Err(parse_error(path, 1, "trace has a single time node".into()));
    }
    let dt = rows[nb].0;
    let time = TimeGrid::new(dt, steps)?;
    let two_t = time.two_t();
    let t_last = rows[rows.len() - nb].0;
    if (t_last - two_t).abs() > 1e-9 * (1.0 + two_t.abs()) {
        return Err(parse_error(
            path,
            rows.len() + 1,
            format!("time column ends at {t_last} but the step pattern implies {two_t}"),
        ));
    }
    SpaceTimeField::from_values(time, nb, rows.into_iter().map(|r| r.2).collect())
}

/// Write an interior field as `node_id,x,y,value`.
pub fn write_interior_field_csv(path: impl AsRef<Path>, field: &InteriorField) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    out.push_str("node_id,x,y,value\n");
    for (id, p) in field.grids().interior.points().iter().enumerate() {
        writeln!(out, "{id},{},{},{}", p[0], p[1], field.value(id)).expect("string write");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Write interior node coordinates and quadrature weights.
pub fn write_grid_csv(path: impl AsRef<Path>, grids: &Grids) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    out.push_str("node_id,x,y,weight\n");
    for (id, p) in grids.interior.points().iter().enumerate() {
        writeln!(out, "{id},{},{},{}", p[0], p[1], grids.interior.weight(id)).expect("string write");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Write boundary node coordinates and quadrature weights.
pub fn write_boundary_grid_csv(path: impl AsRef<Path>, grids: &Grids) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    out.push_str("boundary_node_id,x,y,weight\n");
    for (j, p) in grids.boundary.points().iter().enumerate() {
        writeln!(out, "{j},{},{},{}", p[0], p[1], grids.boundary.weight(j)).expect("string write");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Write a boundary profile as `boundary_node_id,value`.
pub fn write_boundary_profile_csv(path: impl AsRef<Path>, profile: &BoundaryProfile) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    out.push_str("boundary_node_id,value\n");
    for (j, v) in profile.values().iter().enumerate() {
        writeln!(out, "{j},{v}").expect("string write");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Read a boundary profile from `index,value` rows (extra middle columns,
/// such as coordinates, are ignored).
pub fn read_boundary_profile_csv(
    path: impl AsRef<Path>,
    expected_len: usize,
) -> Result<BoundaryProfile> {
    BoundaryProfile::from_values(read_indexed_values(path.as_ref(), expected_len)?)
}

/// Read per-node speed samples from `index,value` rows.
pub fn read_speed_samples_csv(path: impl AsRef<Path>, expected_len: usize) -> Result<Vec<f64>> {
    read_indexed_values(path.as_ref(), expected_len)
}

/// Write a family of boundary profiles as `element_id,boundary_node_id,value`.
pub fn write_elements_csv(path: impl AsRef<Path>, elements: &[BoundaryProfile]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    out.push_str("element_id,boundary_node_id,value\n");
    for (e, profile) in elements.iter().enumerate() {
        for (j, v) in profile.values().iter().enumerate() {
            writeln!(out, "{e},{j},{v}").expect("string write");
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Read a profile family written by [`write_elements_csv`]. Elements must be
/// numbered consecutively from zero and each must cover every boundary node.
pub fn read_elements_csv(
    path: impl AsRef<Path>,
    expected_len: usize,
) -> Result<Vec<BoundaryProfile>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut slots: Vec<Vec<Option<f64>>> = Vec::new();
    let mut first_data_line = true;
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if first_data_line && cols[0].trim().parse::<usize>().is_err() {
            first_data_line = false;
            continue;
        }
        first_data_line = false;
        if cols.len() != 3 {
            return Err(parse_error(path, idx + 1, "expected 3 columns".into()));
        }
        let e = parse_index(Some(cols[0]), path, idx + 1, "element_id")?;
        let j = parse_index(Some(cols[1]), path, idx + 1, "boundary_node_id")?;
        let v = parse_float(Some(cols[2]), path, idx + 1, "value")?;
        if j >= expected_len {
            return Err(parse_error(
                path,
                idx + 1,
                format!("boundary node {j} out of range for {expected_len} nodes"),
            ));
        }
        if e >= slots.len() {
            slots.resize(e + 1, vec![None; expected_len]);
        }
        if slots[e][j].is_some() {
            return Err(parse_error(
                path,
                idx + 1,
                format!("duplicate entry for element {e}, node {j}"),
            ));
        }
        slots[e][j] = Some(v);
    }
    if slots.is_empty() {
        return Err(parse_error(path, 1, "no element rows".into()));
    }
    slots
        .into_iter()
        .enumerate()
        .map(|(e, row)| {
            let values = row
                .into_iter()
                .enumerate()
                .map(|(j, s)| {
                    s.ok_or_else(|| {
                        parse_error(path, 1, format!("element {e} is missing node {j}"))
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            BoundaryProfile::from_values(values)
        })
        .collect()
}

/// Parse `index,...,value` rows into a dense vector, requiring each index in
/// `0..expected_len` exactly once. A non-numeric first line is treated as a
/// header.
fn read_indexed_values(path: &Path, expected_len: usize) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut slots: Vec<Option<f64>> = vec![None; expected_len];
    let mut first_data_line = true;
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() < 2 {
            return Err(parse_error(path, idx + 1, "expected at least 2 columns".into()));
        }
        if first_data_line && cols[0].trim().parse::<usize>().is_err() {
            first_data_line = false;
            continue;
        }
        first_data_line = false;
        let i = parse_index(Some(cols[0]), path, idx + 1, "index")?;
        let v = parse_float(cols.last().copied(), path, idx + 1, "value")?;
        if i >= expected_len {
            return Err(parse_error(
                path,
                idx + 1,
                format!("index {i} out of range for {expected_len} nodes"),
            ));
        }
        if slots[i].is_some() {
            return Err(parse_error(path, idx + 1, format!("duplicate index {i}")));
        }
        slots[i] = Some(v);
    }
    slots
        .into_iter()
        .enumerate()
        .map(|(i, s)| s.ok_or_else(|| parse_error(path, 1, format!("missing index {i}"))))
        .collect()
}

fn parse_float(col: Option<&str>, path: &Path, line: usize, name: &str) -> Result<f64> {
    let raw = col.ok_or_else(|| parse_error(path, line, format!("missing column {name}")))?;
    raw.trim()
        .parse::<f64>()
        .map_err(|_| parse_error(path, line, format!("column {name}: {raw:?} is not a number")))
}

fn parse_index(col: Option<&str>, path: &Path, line: usize, name: &str) -> Result<usize> {
    let raw = col.ok_or_else(|| parse_error(path, line, format!("missing column {name}")))?;
    raw.trim()
        .parse::<usize>()
        .map_err(|_| parse_error(path, line, format!("column {name}: {raw:?} is not an index")))
}

fn parse_error(path: &Path, line: usize, message: String) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    }
}
