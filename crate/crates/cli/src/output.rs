//! Output bookkeeping: partial outputs are removed unless the run commits,
//! and every committed run leaves a manifest beside its artifacts.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use antispoof::{Error, Result};
use sha2::{Digest, Sha256};

pub fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Everything recorded about a run apart from the output hashes.
#[derive(Debug, Default)]
pub struct RunInfo {
    pub command: String,
    pub args: Vec<String>,
    pub config: Option<(PathBuf, String)>,
    pub seeds: Vec<(String, u64)>,
    pub settings: Vec<(String, String)>,
}

impl RunInfo {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            // the binary path varies between installs; leave it out
            args: std::env::args().skip(1).collect(),
            ..Default::default()
        }
    }

    pub fn seed(&mut self, name: &str, value: u64) -> &mut Self {
        self.seeds.push((name.to_string(), value));
        self
    }

    pub fn set(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.settings.push((key.to_string(), value.to_string()));
        self
    }
}

enum Created {
    File(PathBuf),
    Dir(PathBuf),
}

/// Tracks files and directories written by this run.
pub struct Outputs {
    manifest: PathBuf,
    created: Vec<Created>,
    artifacts: Vec<PathBuf>,
    committed: bool,
}

impl Outputs {
    /// Outputs rooted in a directory; the manifest is `dir/manifest.txt`.
    pub fn in_dir(dir: &Path) -> Result<Self> {
        let mut out = Self::empty(dir.join("manifest.txt"));
        out.dir(dir)?;
        out.created.push(Created::File(out.manifest.clone()));
        Ok(out)
    }

    /// A single output file; the manifest is `<file>.manifest`.
    pub fn for_file(file: &Path) -> Result<Self> {
        let mut name = file.as_os_str().to_owned();
        name.push(".manifest");
        let mut out = Self::empty(PathBuf::from(name));
        if let Some(parent) = file.parent().filter(|p| !p.as_os_str().is_empty()) {
            out.dir(parent)?;
        }
        out.created.push(Created::File(out.manifest.clone()));
        out.file(file)?;
        Ok(out)
    }

    fn empty(manifest: PathBuf) -> Self {
        Self {
            manifest,
            created: Vec::new(),
            artifacts: Vec::new(),
            committed: false,
        }
    }

    /// Creates `dir` if needed. Only directories this run created are
    /// removed on failure.
    pub fn dir(&mut self, dir: &Path) -> Result<()> {
        let mut top = None;
        let mut p = Some(dir);
        while let Some(cur) = p.filter(|c| !c.as_os_str().is_empty() && !c.exists()) {
            top = Some(cur.to_path_buf());
            p = cur.parent();
        }
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        if let Some(t) = top {
            self.created.push(Created::Dir(t));
        }
        Ok(())
    }

    /// Registers an artifact path (parent directories are created).
    pub fn file(&mut self, path: &Path) -> Result<PathBuf> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            self.dir(parent)?;
        }
        self.created.push(Created::File(path.to_path_buf()));
        self.artifacts.push(path.to_path_buf());
        Ok(path.to_path_buf())
    }

    pub fn write(&mut self, path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
        let path = self.file(path)?;
        std::fs::write(&path, contents).map_err(io_err(&path))
    }

    /// Writes the manifest and keeps everything.
    pub fn commit(mut self, info: &RunInfo) -> Result<()> {
        let base = self.manifest.parent().unwrap_or(Path::new("")).to_path_buf();
        let mut text = String::from("# antispoof run manifest v1\n");
        writeln!(text, "command = {}", info.command).unwrap();
        writeln!(text, "args = {}", info.args.join(" ")).unwrap();
        writeln!(text, "version = antispoof-cli {} / antispoof {}", env!("CARGO_PKG_VERSION"), antispoof::VERSION).unwrap();
        if let Some((path, hash)) = &info.config {
            writeln!(text, "config = {}\nconfig_sha256 = {hash}", path.display()).unwrap();
        }
        for (name, v) in &info.seeds {
            writeln!(text, "seed.{name} = {v}").unwrap();
        }
        for (k, v) in &info.settings {
            writeln!(text, "{k} = {v}").unwrap();
        }
        text.push_str("[outputs]\n");
        let mut artifacts = self.artifacts.clone();
        artifacts.sort();
        artifacts.dedup();
        for a in &artifacts {
            let shown = a.strip_prefix(&base).unwrap_or(a);
            writeln!(text, "{}  {}", sha256_file(a)?, shown.display()).unwrap();
        }
        std::fs::write(&self.manifest, text).map_err(io_err(&self.manifest))?;
        self.committed = true;
        Ok(())
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for c in self.created.iter().rev() {
            let _ = match c {
                Created::File(p) => std::fs::remove_file(p),
                Created::Dir(p) => std::fs::remove_dir_all(p),
            };
        }
    }
}
