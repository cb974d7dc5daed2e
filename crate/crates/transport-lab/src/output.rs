//! Run-directory writing: CSV tables and JSON documents, staged in a
//! temporary directory and atomically renamed into place so failed runs
//! leave no partial output behind.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{LabError, Result};

/// Collects the artifacts of one run; nothing is visible at the destination
/// until [`RunWriter::finalize`] renames the staging directory.
pub struct RunWriter {
    staging: PathBuf,
    dest: PathBuf,
    files: Vec<String>,
    finalized: bool,
}

impl RunWriter {
    pub fn create(dest: &Path) -> Result<Self> {
        if dest.exists() {
            return Err(LabError::InvalidConfig(format!(
                "output directory {} already exists",
                dest.display()
            )));
        }
        let parent = dest.parent().unwrap_or(Path::new("."));
        fs::create_dir_all(parent)?;
        let staging = parent.join(format!(
            ".tmp-{}-{}",
            std::process::id(),
            dest.file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "run".into())
        ));
        if staging.exists() {
            fs::remove_dir_all(&staging)?;
        }
        fs::create_dir_all(&staging)?;
        Ok(RunWriter {
            staging,
            dest: dest.to_path_buf(),
            files: Vec::new(),
            finalized: false,
        })
    }

    pub fn write_csv<I>(&mut self, name: &str, header: &str, rows: I) -> Result<()>
    where
        I: IntoIterator<Item = String>,
    {
        let path = self.staging.join(name);
        let mut f = fs::File::create(&path)?;
        writeln!(f, "{header}")?;
        for row in rows {
            writeln!(f, "{row}")?;
        }
        f.sync_all()?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn write_json<T: serde::Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let path = self.staging.join(name);
        let text = serde_json::to_string_pretty(value)
            .map_err(|e| LabError::InvalidConfig(format!("serialize {name}: {e}")))?;
        let mut f = fs::File::create(&path)?;
        f.write_all(text.as_bytes())?;
        f.write_all(b"\n")?;
        f.sync_all()?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<()> {
        let path = self.staging.join(name);
        fs::write(&path, text)?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    /// Atomically publishes the staged directory.
    pub fn finalize(mut self) -> Result<PathBuf> {
        fs::rename(&self.staging, &self.dest)?;
        self.finalized = true;
        Ok(self.dest.clone())
    }
}

impl Drop for RunWriter {
    fn drop(&mut self) {
        if !self.finalized {
            let _ = fs::remove_dir_all(&self.staging);
        }
    }
}

/// Floats in CSV use the shortest round-trip representation, which is
/// deterministic across runs.
pub fn fmt_f64(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else {
        format!("{v}")
    }
}
