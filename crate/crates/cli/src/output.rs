//! Deterministic output files: a `# ` comment header, then the payload.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Echoes the artifact version and the resolved config, one `# ` line each.
pub fn header(command: &str, resolved: &str) -> String {
    let mut h = format!("# levymv {VERSION}\n# command: {command}\n# resolved config:\n");
    for line in resolved.lines() {
        if line.is_empty() {
            h.push_str("#\n");
        } else {
            let _ = writeln!(h, "# {line}");
        }
    }
    h
}

/// 17 significant digits, enough to round-trip any double.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub struct OutputDir {
    dir: PathBuf,
    header: String,
    pub written: Vec<PathBuf>,
}

impl OutputDir {
    pub fn create(dir: &Path, header: String) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_owned(),
            header,
            written: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, body: &str) -> Result<()> {
        let path = self.dir.join(name);
        let mut text = String::with_capacity(self.header.len() + body.len());
        text.push_str(&self.header);
        text.push_str(body);
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        self.written.push(path);
        Ok(())
    }
}

/// Accumulates CSV rows from pre-formatted fields.
pub struct Csv {
    buf: String,
}

impl Csv {
    pub fn new(columns: &[&str]) -> Self {
        let mut buf = columns.join(",");
        buf.push('\n');
        Self { buf }
    }

    pub fn row<I, S>(&mut self, fields: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut first = true;
        for f in fields {
            if !first {
                self.buf.push(',');
            }
            first = false;
            let f = f.as_ref();
            if f.contains(',') || f.contains('"') {
                self.buf.push('"');
                self.buf.push_str(&f.replace('"', "\"\""));
                self.buf.push('"');
            } else {
                self.buf.push_str(f);
            }
        }
        self.buf.push('\n');
    }

    pub fn finish(self) -> String {
        self.buf
    }
}
