//! Artifact writing: atomic replacement and self-describing headers.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{Context, Result};

pub const TOOL_VERSION: &str = concat!("carbonlace ", env!("CARGO_PKG_VERSION"));

/// Provenance written at the top of every artifact.
#[derive(Debug, Clone)]
pub struct Header {
    pub command: String,
    pub config_hash: String,
    pub case_hash: String,
    pub seed: u64,
}

impl Header {
    pub fn pairs(&self) -> Vec<(String, String)> {
        vec![
            ("tool".into(), TOOL_VERSION.into()),
            ("command".into(), self.command.clone()),
            ("config_hash".into(), self.config_hash.clone()),
            ("case_hash".into(), self.case_hash.clone()),
            ("run_seed".into(), self.seed.to_string()),
        ]
    }

    /// `# key=value` comment lines.
    pub fn comment(&self) -> String {
        self.pairs().iter().map(|(k, v)| format!("# {k}={v}\n")).collect()
    }
}

/// Writes `contents` to a temporary file next to `path` and renames it into
/// place, so readers never observe a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("temp file in {}", dir.display()))?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .map_err(|e| e.error)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// CSV with the provenance header prepended.
pub fn write_csv(path: &Path, header: &Header, body: &str) -> Result<()> {
    write_atomic(path, format!("{}{body}", header.comment()).as_bytes())
}

/// Wall-clock times go to their own file so CSV outputs stay reproducible.
pub fn write_timing(dir: &Path, command: &str, phases: &[(&str, Duration)]) -> Result<PathBuf> {
    let path = dir.join(format!("timing_{command}.csv"));
    let mut s = String::from("phase,seconds\n");
    for (name, t) in phases {
        s.push_str(&format!("{name},{:.3}\n", t.as_secs_f64()));
    }
    write_atomic(&path, s.as_bytes())?;
    Ok(path)
}

/// Strips `#` comment lines.
pub fn csv_body(text: &str) -> String {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect()
}

/// Value of a `# key=value` comment, if present.
pub fn header_value(text: &str, key: &str) -> Option<String> {
    text.lines()
        .filter_map(|l| l.strip_prefix('#'))
        .filter_map(|l| l.trim().split_once('='))
        .find(|(k, _)| k.trim() == key)
        .map(|(_, v)| v.trim().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_contents() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub").join("a.csv");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(std::fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }

    #[test]
    fn header_round_trips() {
        let h = Header {
            command: "sls".into(),
            config_hash: "abc".into(),
            case_hash: "def".into(),
            seed: 3,
        };
        let text = format!("{}x,y\n1,2\n", h.comment());
        assert_eq!(header_value(&text, "config_hash").as_deref(), Some("abc"));
        assert_eq!(csv_body(&text), "x,y\n1,2\n");
    }
}
