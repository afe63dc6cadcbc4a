//! Plain-text field dumps and dataset files.
//!
//! Both formats are a `key value` header closed by a `data` line, followed
//! by whitespace-separated rows. Floats are written in shortest round-trip
//! form, so reading a file back reproduces every value bit for bit.
//!
//! Field rows are `j s m k_index re im`; dataset rows are
//! `k_index j s g0_re g0_im g1_re g1_im`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::forward_sim::MeasuredBoundaryData;
use crate::grid::{Field, GridSpec, C64};

const FIELD_MAGIC: &str = "# convexify field";
const DATASET_MAGIC: &str = "# convexify dataset";

fn grid_header(out: &mut String, g: &GridSpec) {
    let _ = writeln!(out, "n_h {}", g.n_h);
    let _ = writeln!(out, "n_z {}", g.n_z);
    let _ = writeln!(out, "b {:?}", g.b);
    let _ = writeln!(out, "xi {:?}", g.xi);
    let _ = writeln!(out, "d {:?}", g.d);
    let _ = writeln!(out, "n_k {}", g.n_k);
    let _ = writeln!(out, "k_min {:?}", g.k_min);
    let _ = writeln!(out, "k_max {:?}", g.k_max);
}

/// Field dump with optional `meta` entries (keys without whitespace).
pub fn format_field(f: &Field, meta: &[(&str, String)]) -> String {
    let g = f.grid();
    let mut out = String::with_capacity(64 * f.values().len() + 256);
    out.push_str(FIELD_MAGIC);
    out.push('\n');
    grid_header(&mut out, g);
    let _ = writeln!(out, "layers {}", f.layers());
    for (k, v) in meta {
        let _ = writeln!(out, "meta {k} {v}");
    }
    out.push_str("data\n");
    for l in 0..f.layers() {
        for j in 0..g.n_h {
            for s in 0..g.n_h {
                for m in 0..g.n_z {
                    let v = f.get(l, j, s, m);
                    let _ = writeln!(out, "{j} {s} {m} {l} {:?} {:?}", v.re, v.im);
                }
            }
        }
    }
    out
}

pub fn write_field(path: &Path, f: &Field, meta: &[(&str, String)]) -> Result<()> {
    std::fs::write(path, format_field(f, meta))?;
    Ok(())
}

struct Header<'a> {
    entries: BTreeMap<&'a str, (usize, &'a str)>,
    meta: Vec<(String, String)>,
    data_line: usize,
}

fn read_header<'a>(
    lines: &mut impl Iterator<Item = (usize, &'a str)>,
    magic: &str,
) -> Result<Header<'a>> {
    match lines.next() {
        Some((_, l)) if l.trim() == magic => {}
        _ => return Err(Error::parse(1, format!("expected `{magic}`"))),
    }
    let mut entries = BTreeMap::new();
    let mut meta = Vec::new();
    for (n, line) in lines.by_ref() {
        let line = line.trim();
        if line == "data" {
            return Ok(Header {
                entries,
                meta,
                data_line: n,
            });
        }
        let (key, value) = line
            .split_once(' ')
            .ok_or_else(|| Error::parse(n, format!("malformed header line `{line}`")))?;
        if key == "meta" {
            let (k, v) = value
                .split_once(' ')
                .ok_or_else(|| Error::parse(n, "meta entry needs a key and a value"))?;
            meta.push((k.to_string(), v.to_string()));
        } else if entries.insert(key, (n, value.trim())).is_some() {
            return Err(Error::parse(n, format!("duplicate header key `{key}`")));
        }
    }
    Err(Error::parse(0, "missing `data` line"))
}

impl Header<'_> {
    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let (n, v) = self
            .entries
            .get(key)
            .ok_or_else(|| Error::parse(self.data_line, format!("missing header key `{key}`")))?;
        v.parse()
            .map_err(|_| Error::parse(*n, format!("bad value `{v}` for `{key}`")))
    }

    fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(
            self.get("b")?,
            self.get("xi")?,
            self.get("d")?,
            self.get("n_h")?,
            self.get("n_z")?,
            self.get("k_min")?,
            self.get("k_max")?,
            self.get("n_k")?,
        )
    }

    fn reject_unknown(&self, known: &[&str]) -> Result<()> {
        match self.entries.iter().find(|(k, _)| !known.contains(k)) {
            Some((k, (n, _))) => Err(Error::parse(*n, format!("unknown header key `{k}`"))),
            None => Ok(()),
        }
    }
}

const GRID_KEYS: [&str; 8] = ["n_h", "n_z", "b", "xi", "d", "n_k", "k_min", "k_max"];

fn parse_row<const N: usize, const F: usize>(
    n: usize,
    line: &str,
) -> Result<([usize; N], [f64; F])> {
    let mut it = line.split_ascii_whitespace();
    let mut idx = [0usize; N];
    let mut vals = [0.0f64; F];
    for slot in idx.iter_mut() {
        *slot = it
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::parse(n, "bad index column"))?;
    }
    for slot in vals.iter_mut() {
        *slot = it
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::parse(n, "bad value column"))?;
    }
    if it.next().is_some() {
        return Err(Error::parse(n, "too many columns"));
    }
    Ok((idx, vals))
}

/// Parses a field dump, returning the field and its metadata.
pub fn parse_field(text: &str) -> Result<(Field, Vec<(String, String)>)> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let header = read_header(&mut lines, FIELD_MAGIC)?;
    let mut known = GRID_KEYS.to_vec();
    known.push("layers");
    header.reject_unknown(&known)?;
    let grid = header.grid()?;
    let layers: usize = header.get("layers")?;
    if layers != 1 && layers != grid.n_k {
        return Err(Error::parse(
            header.data_line,
            format!("layer count {layers} is neither 1 nor n_k"),
        ));
    }
    let mut field = if layers == 1 {
        Field::zeros(grid)
    } else {
        Field::zeros_k(grid)
    };
    let mut seen = vec![false; field.values().len()];
    for (n, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let ([j, s, m, l], [re, im]) = parse_row::<4, 2>(n, line)?;
        if j >= grid.n_h || s >= grid.n_h || m >= grid.n_z || l >= layers {
            return Err(Error::parse(n, "index out of range"));
        }
        let i = l * grid.layer_len() + grid.idx(j, s, m);
        if std::mem::replace(&mut seen[i], true) {
            return Err(Error::parse(n, "duplicate node"));
        }
        field.values_mut()[i] = C64::new(re, im);
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::parse(0, "field dump is missing nodes"));
    }
    Ok((field, header.meta))
}

pub fn read_field(path: &Path) -> Result<(Field, Vec<(String, String)>)> {
    parse_field(&std::fs::read_to_string(path)?)
}

/// Dataset file holding `g0` and `g1` (the measured traces).
pub fn format_dataset(data: &MeasuredBoundaryData) -> String {
    let g = &data.grid;
    let mut out = String::with_capacity(96 * data.g0.len() + 256);
    out.push_str(DATASET_MAGIC);
    out.push('\n');
    grid_header(&mut out, g);
    let _ = writeln!(out, "delta {:?}", data.delta);
    let _ = writeln!(out, "seed {}", data.seed);
    out.push_str("data\n");
    for l in 0..g.n_k {
        for j in 0..g.n_h {
            for s in 0..g.n_h {
                let i = data.trace_index(l, j, s);
                let (a, b) = (data.g0[i], data.g1[i]);
                let _ = writeln!(
                    out,
                    "{l} {j} {s} {:?} {:?} {:?} {:?}",
                    a.re, a.im, b.re, b.im
                );
            }
        }
    }
    out
}

/// Parses a dataset file; the noiseless traces are set equal to the
/// measured ones.
pub fn parse_dataset(text: &str) -> Result<MeasuredBoundaryData> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let header = read_header(&mut lines, DATASET_MAGIC)?;
    let mut known = GRID_KEYS.to_vec();
    known.extend(["delta", "seed"]);
    header.reject_unknown(&known)?;
    let grid = header.grid()?;
    let n = grid.n_k * grid.n_h * grid.n_h;
    let zero = C64::new(0.0, 0.0);
    let mut data = MeasuredBoundaryData {
        grid,
        delta: header.get("delta")?,
        seed: header.get("seed")?,
        g0: vec![zero; n],
        g1: vec![zero; n],
        g0_clean: Vec::new(),
        g1_clean: Vec::new(),
    };
    let mut seen = vec![false; n];
    for (ln, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let ([l, j, s], [a, b, c, d]) = parse_row::<3, 4>(ln, line)?;
        if l >= grid.n_k || j >= grid.n_h || s >= grid.n_h {
            return Err(Error::parse(ln, "index out of range"));
        }
        let i = data.trace_index(l, j, s);
        if std::mem::replace(&mut seen[i], true) {
            return Err(Error::parse(ln, "duplicate trace sample"));
        }
        data.g0[i] = C64::new(a, b);
        data.g1[i] = C64::new(c, d);
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::parse(0, "dataset is missing trace samples"));
    }
    data.g0_clean = data.g0.clone();
    data.g1_clean = data.g1.clone();
    data.validate()?;
    Ok(data)
}

pub fn write_dataset(path: &Path, data: &MeasuredBoundaryData) -> Result<()> {
    std::fs::write(path, format_dataset(data))?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<MeasuredBoundaryData> {
    parse_dataset(&std::fs::read_to_string(path)?)
}

/// Reads a measured dataset and attaches the noiseless traces from `oracle`.
pub fn read_dataset_with_oracle(path: &Path, oracle: &Path) -> Result<MeasuredBoundaryData> {
    let mut data = read_dataset(path)?;
    let clean = read_dataset(oracle)?;
    if clean.grid != data.grid {
        return Err(Error::structural(
            "oracle dataset grid differs from the measured one",
        ));
    }
    data.g0_clean = clean.g0;
    data.g1_clean = clean.g1;
    Ok(data)
}
