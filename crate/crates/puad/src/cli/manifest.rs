//! Run manifests: resolved config, input hashes, output paths.

use std::path::Path;
use std::time::Duration;

use sha2::{Digest, Sha256};

use crate::error::Result;

/// Record of one command invocation, written atomically at run end.
/// Everything except `duration` is reproducible given the same inputs.
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub command: String,
    pub seed: u64,
    pub resolved: Vec<(String, String)>,
    /// (path, sha256) of every input file the command consumed.
    pub inputs: Vec<(String, String)>,
    pub outputs: Vec<String>,
    pub duration: Duration,
}

impl RunManifest {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("command={}\n", self.command));
        out.push_str(&format!("seed={}\n", self.seed));
        out.push_str(&format!(
            "duration_seconds={:.3}\n",
            self.duration.as_secs_f64()
        ));
        for (k, v) in &self.resolved {
            out.push_str(&format!("config.{k}={v}\n"));
        }
        for (path, hash) in &self.inputs {
            out.push_str(&format!("input.{path}={hash}\n"));
        }
        for path in &self.outputs {
            out.push_str(&format!("output.{path}\n"));
        }
        out
    }

    /// Write via a temp file + rename so readers never see a partial
    /// manifest.
    pub fn write_atomic(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_text())?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trips_through_atomic_write() {
        let dir = tempfile::tempdir().unwrap();
        let m = RunManifest {
            command: "generate".into(),
            seed: 3,
            resolved: vec![("alpha".into(), "0.1".into())],
            inputs: vec![("cfg.txt".into(), "abc123".into())],
            outputs: vec!["unlabeled.csv".into()],
            duration: Duration::from_millis(1500),
        };
        let path = dir.path().join("manifest.txt");
        m.write_atomic(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("command=generate"));
        assert!(text.contains("config.alpha=0.1"));
        assert!(text.contains("input.cfg.txt=abc123"));
        assert!(text.contains("duration_seconds=1.500"));
        assert!(!path.with_extension("tmp").exists());
    }

    #[test]
    fn sha256_matches_known_vector() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f");
        std::fs::write(&path, b"abc").unwrap();
        assert_eq!(
            sha256_file(&path).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
