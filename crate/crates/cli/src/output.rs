//! Artifact staging. Files are written to a private directory inside the
//! output directory and moved into place only when the run succeeds.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

pub struct Artifacts {
    out: PathBuf,
    staging: PathBuf,
    created_out: bool,
    names: Vec<String>,
}

impl Artifacts {
    pub fn new(out: &Path) -> anyhow::Result<Self> {
        let created_out = !out.exists();
        fs::create_dir_all(out)?;
        let staging = out.join(format!(".staging-{}", std::process::id()));
        fs::create_dir_all(&staging)?;
        Ok(Artifacts { out: out.to_path_buf(), staging, created_out, names: Vec::new() })
    }

    fn claim(&mut self, name: &str) -> anyhow::Result<PathBuf> {
        anyhow::ensure!(
            !name.contains(['/', '\\']) && !name.starts_with('.') && !self.names.iter().any(|n| n == name),
            "bad or repeated artifact name {name:?}"
        );
        self.names.push(name.to_string());
        Ok(self.staging.join(name))
    }

    /// Opens a staged file and hands a buffered writer to `f`.
    pub fn write<F>(&mut self, name: &str, f: F) -> anyhow::Result<()>
    where
        F: FnOnce(&mut BufWriter<File>) -> anyhow::Result<()>,
    {
        let path = self.claim(name)?;
        let mut w = BufWriter::new(File::create(path)?);
        f(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> anyhow::Result<()> {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            writeln!(w)?;
            Ok(())
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Moves every staged file into the output directory.
    pub fn commit(self) -> anyhow::Result<Vec<String>> {
        for name in &self.names {
            fs::rename(self.staging.join(name), self.out.join(name))?;
        }
        fs::remove_dir_all(&self.staging)?;
        Ok(self.names)
    }

    /// Drops staged files. The output directory is removed too when this run
    /// created it and `keep_dir` is false.
    pub fn discard(self, keep_dir: bool) {
        let _ = fs::remove_dir_all(&self.staging);
        if self.created_out && !keep_dir {
            let _ = fs::remove_dir(&self.out);
        }
    }
}
