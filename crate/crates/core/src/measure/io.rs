//! CSV form: a `# model=<tag> dropped_mass=<x>` line, then `element,mass` rows.

use std::io::{BufRead, BufReader, Read, Write};
use std::sync::Arc;

use super::SparseMeasure;
use crate::error::{Error, Result};
use crate::group::{GroupKind, GroupModel};

pub(super) fn write_csv<W: Write>(mu: &SparseMeasure, mut w: W) -> Result<()> {
    writeln!(w, "# model={} dropped_mass={}", mu.model.kind(), mu.dropped_mass)?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["element", "mass"])?;
    for (g, p) in &mu.atoms {
        out.write_record([g.to_string(), p.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

pub(super) fn read_csv<R: Read>(model: Arc<GroupModel>, r: R) -> Result<SparseMeasure> {
    let mut reader = BufReader::new(r);
    let mut header = String::new();
    reader.read_line(&mut header)?;
    // The comment line is optional for inline blocks; without it the first
    // line is the column header and the measure is exact.
    let (dropped, pending) = if header.trim_start().starts_with('#') {
        let (kind, dropped) = parse_header(header.trim())?;
        if kind != model.kind() {
            return Err(Error::ModelMismatch(format!(
                "measure file is for {kind}, expected {}",
                model.kind()
            )));
        }
        (dropped, String::new())
    } else {
        (0.0, header)
    };
    let reader = std::io::Cursor::new(pending.into_bytes()).chain(reader);
    let mut rows = csv::Reader::from_reader(reader);
    let mut atoms = Vec::new();
    for rec in rows.records() {
        let rec = rec?;
        let (Some(g), Some(p)) = (rec.get(0), rec.get(1)) else {
            return Err(Error::Parse(format!("malformed measure row {rec:?}")));
        };
        let g = model.parse_element(g)?;
        let p: f64 = p.trim().parse().map_err(|_| Error::Parse(format!("bad mass {p:?}")))?;
        if !(p > 0.0 && p.is_finite()) {
            return Err(Error::Parse(format!("mass {p} at {g} is not positive")));
        }
        atoms.push((g, p));
    }
    atoms.sort_by(|a, b| a.0.cmp(&b.0));
    if atoms.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Error::Parse("duplicate element in measure file".into()));
    }
    let mu = SparseMeasure::from_sorted(model, atoms, dropped);
    if (mu.total_mass() + dropped - 1.0).abs() > 1e-9 || mu.atoms.is_empty() {
        return Err(Error::Parse(format!(
            "masses sum to {} with dropped mass {dropped}",
            mu.total_mass()
        )));
    }
    Ok(mu)
}

fn parse_header(line: &str) -> Result<(GroupKind, f64)> {
    let bad = || Error::Parse(format!("bad measure header {line:?}"));
    let body = line.strip_prefix('#').ok_or_else(bad)?;
    let mut kind = None;
    let mut dropped = 0.0;
    for field in body.split_whitespace() {
        match field.split_once('=') {
            Some(("model", v)) => kind = Some(GroupKind::parse_tag(v)?),
            Some(("dropped_mass", v)) => dropped = v.parse().map_err(|_| bad())?,
            _ => return Err(bad()),
        }
    }
    Ok((kind.ok_or_else(bad)?, dropped))
}
