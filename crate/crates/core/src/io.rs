//! Output formats: CSV with an embedded run header, binary PGM with a
//! `.meta` sidecar, and flat `key=value` run configurations.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// A resolved run configuration, serializable to `key=value` lines.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RunConfig {
    pub entries: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn new(subcommand: &str) -> RunConfig {
        let mut c = RunConfig::default();
        c.set("subcommand", subcommand);
        c
    }

    pub fn set(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.entries.insert(key.to_string(), value.to_string());
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn extend<I: IntoIterator<Item = (String, String)>>(&mut self, pairs: I) -> &mut Self {
        self.entries.extend(pairs);
        self
    }

    pub fn to_text(&self) -> String {
        self.entries.iter().fold(String::new(), |mut s, (k, v)| {
            let _ = writeln!(s, "{k}={v}");
            s
        })
    }

    /// Parses `key=value` lines; blank lines and `#` comments are skipped.
    pub fn from_text(text: &str) -> Result<RunConfig> {
        let mut c = RunConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected key=value", i + 1)))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(Error::Parse(format!("line {}: empty key", i + 1)));
            }
            c.set(k, v.trim());
        }
        Ok(c)
    }

    pub fn read(path: &Path) -> Result<RunConfig> {
        RunConfig::from_text(&fs::read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    /// Header lines `# key=value`, led by the crate version.
    pub fn header(&self) -> String {
        let mut s = format!("# version={VERSION}\n");
        for (k, v) in &self.entries {
            let _ = writeln!(s, "# {k}={v}");
        }
        s
    }
}

/// 17 significant digits, enough to round-trip an f64.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(x: f64) -> Cell {
        Cell::Num(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Cell {
        Cell::Int(x as i64)
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Cell {
        Cell::Int(x as i64)
    }
}

impl From<u32> for Cell {
    fn from(x: u32) -> Cell {
        Cell::Int(x as i64)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Cell {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Cell {
        Cell::Text(s)
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(x) => fmt_f64(*x),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) if s.contains([',', '"', '\n']) => {
                format!("\"{}\"", s.replace('"', "\"\""))
            }
            Cell::Text(s) => s.clone(),
        }
    }
}

/// CSV text: config header, column names, rows.
pub fn csv_string(config: &RunConfig, columns: &[&str], rows: &[Vec<Cell>]) -> Result<String> {
    let mut s = config.header();
    s.push_str(&columns.join(","));
    s.push('\n');
    for (i, row) in rows.iter().enumerate() {
        if row.len() != columns.len() {
            return Err(Error::InvalidParams(format!(
                "row {i} has {} cells, expected {}",
                row.len(),
                columns.len()
            )));
        }
        let line: Vec<String> = row.iter().map(Cell::render).collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    Ok(s)
}

pub fn write_csv(
    path: &Path,
    config: &RunConfig,
    columns: &[&str],
    rows: &[Vec<Cell>],
) -> Result<()> {
    fs::write(path, csv_string(config, columns, rows)?)?;
    Ok(())
}

/// Data rows of a CSV written by [`write_csv`], header comments dropped.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let cols = lines
        .next()
        .ok_or_else(|| Error::Parse("empty CSV".into()))?
        .split(',')
        .map(String::from)
        .collect();
    let rows = lines
        .map(|l| l.split(',').map(String::from).collect())
        .collect();
    Ok((cols, rows))
}

pub fn meta_path(pgm: &Path) -> PathBuf {
    let mut s = pgm.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

/// Writes `values` (row-major, `width × height`) as an 8-bit P5 image scaled
/// linearly from `[min, max]`, plus `<name>.meta` with the range and `meta`.
pub fn write_pgm(
    path: &Path,
    width: usize,
    height: usize,
    values: &[f64],
    config: &RunConfig,
) -> Result<(f64, f64)> {
    if values.len() != width * height || width == 0 || height == 0 {
        return Err(Error::InvalidParams(format!(
            "{} values for a {width}x{height} image",
            values.len()
        )));
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if max > min { max - min } else { 1.0 };
    let mut buf = format!("P5\n{width} {height}\n255\n").into_bytes();
    buf.extend(
        values
            .iter()
            .map(|v| ((v - min) / span * 255.0).round().clamp(0.0, 255.0) as u8),
    );
    fs::File::create(path)?.write_all(&buf)?;
    let mut meta = config.clone();
    meta.set("min", fmt_f64(min))
        .set("max", fmt_f64(max))
        .set("grid", format!("{width}x{height}"))
        .set("version", VERSION);
    meta.write(&meta_path(path))?;
    Ok((min, max))
}

/// Reads back a P5 image: `(width, height, pixels)`.
pub fn read_pgm(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let bytes = fs::read(path)?;
    let mut fields = Vec::new();
    let mut i = 0;
    while fields.len() < 4 {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return Err(Error::Parse("truncated PGM header".into()));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..i]).into_owned());
    }
    if fields[0] != "P5" {
        return Err(Error::Parse("not a binary PGM".into()));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|e| Error::Parse(e.to_string()));
    let (w, h) = (num(&fields[1])?, num(&fields[2])?);
    let data = bytes.get(i + 1..).unwrap_or_default().to_vec();
    if data.len() != w * h {
        return Err(Error::Parse(format!(
            "expected {} pixels, got {}",
            w * h,
            data.len()
        )));
    }
    Ok((w, h, data))
}
