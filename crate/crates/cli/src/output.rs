//! Output staging: every file of a run is written to a temporary file in
//! the output directory and renamed into place only after all of them
//! were written, so a failed run leaves no partial results.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use tempfile::NamedTempFile;

pub struct Output {
    dir: PathBuf,
    staged: Vec<(NamedTempFile, PathBuf)>,
}

impl Output {
    pub fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self { dir: dir.to_path_buf(), staged: Vec::new() })
    }

    pub fn write_with(&mut self, name: &str, f: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
        let mut tmp = NamedTempFile::new_in(&self.dir).with_context(|| format!("staging {name}"))?;
        {
            let mut w = std::io::BufWriter::new(tmp.as_file_mut());
            f(&mut w).with_context(|| format!("writing {name}"))?;
            w.flush()?;
        }
        self.staged.push((tmp, self.dir.join(name)));
        Ok(())
    }

    /// CSV with a header line and one row per record.
    pub fn csv<R: IntoIterator<Item = String>>(&mut self, name: &str, header: &str, rows: R) -> Result<()> {
        self.write_with(name, |w| {
            writeln!(w, "{header}")?;
            for row in rows {
                writeln!(w, "{row}")?;
            }
            Ok(())
        })
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value)?;
        self.write_with(name, |w| writeln!(w, "{text}"))
    }

    /// Moves every staged file into place.
    pub fn commit(self) -> Result<Vec<PathBuf>> {
        let mut written = Vec::with_capacity(self.staged.len());
        for (tmp, path) in self.staged {
            tmp.persist(&path).with_context(|| format!("moving output into {}", path.display()))?;
            written.push(path);
        }
        Ok(written)
    }
}
