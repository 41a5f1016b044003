//! Staged output files with provenance headers.
//!
//! Commands add files to an [`Outputs`] set in memory; nothing touches the
//! output directory until [`Outputs::commit`], which writes each file to a
//! temporary sibling and renames it into place.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config_hash: String,
    pub instance_hash: String,
    pub seedless: bool,
}

impl Provenance {
    pub fn new(command: &str, config_hash: String, instance_hashes: &[String], seedless: bool) -> Self {
        let instance_hash = match instance_hashes {
            [one] => one.clone(),
            many => diabatic::cache::content_hash(many),
        };
        Self {
            tool: "diabatic",
            version: TOOL_VERSION,
            command: command.to_string(),
            config_hash,
            instance_hash,
            seedless,
        }
    }

    fn csv_comment(&self) -> String {
        format!(
            "# {} {} command={} config={} instance={} seedless={}\n",
            self.tool, self.version, self.command, self.config_hash, self.instance_hash, self.seedless
        )
    }
}

#[derive(Serialize)]
struct Wrapped<'a, T: Serialize> {
    provenance: &'a Provenance,
    data: &'a T,
}

pub struct Outputs {
    provenance: Provenance,
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    pub fn new(provenance: Provenance) -> Self {
        Self { provenance, files: Vec::new() }
    }

    /// CSV with a provenance comment line, then the header row.
    pub fn csv<R: AsRef<[String]>>(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = R>) {
        let mut buf = self.provenance.csv_comment().into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(header).expect("in-memory write");
            for r in rows {
                w.write_record(r.as_ref()).expect("in-memory write");
            }
            w.flush().expect("in-memory write");
        }
        self.files.push((name.to_string(), buf));
    }

    /// JSON object `{provenance, data}`.
    pub fn json<T: Serialize>(&mut self, name: &str, data: &T) {
        let mut buf = serde_json::to_vec_pretty(&Wrapped {
            provenance: &self.provenance,
            data,
        })
        .expect("outputs serialise");
        buf.push(b'\n');
        self.files.push((name.to_string(), buf));
    }

    pub fn commit(self, dir: &Path) -> std::io::Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::with_capacity(self.files.len());
        for (name, bytes) in self.files {
            let path = dir.join(&name);
            let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
            tmp.write_all(&bytes)?;
            tmp.flush()?;
            tmp.persist(&path).map_err(|e| e.error)?;
            written.push(path);
        }
        Ok(written)
    }
}

/// Shortest round-trip decimal of `x`.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x:e}")
    }
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// File-name friendly rendering of a parameter value.
pub fn tag(x: f64) -> String {
    format!("{x}").replace('-', "m").replace('.', "p")
}
