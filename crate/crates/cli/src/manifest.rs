//! Run manifest written beside every output: the effective configuration and
//! SHA-256 digests of every input and output file.

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::CliResult;

pub fn file_sha256(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path).map_err(|e| sdm_core::Error::io(path, e))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Debug, Clone, Default)]
pub struct Manifest {
    pub command: String,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            ..Default::default()
        }
    }

    /// Writes `<out>/<command>.manifest.toml` and returns its path.
    pub fn write(&self, cfg: &RunConfig, out: &Path) -> CliResult<PathBuf> {
        let mut text = format!(
            "command = \"{}\"\nversion = \"{}\"\n\n[inputs]\n",
            self.command,
            env!("CARGO_PKG_VERSION")
        );
        let digests = |files: &[PathBuf], text: &mut String| -> CliResult<()> {
            for f in files {
                text.push_str(&format!("{:?} = \"{}\"\n", f.display().to_string(), file_sha256(f)?));
            }
            Ok(())
        };
        digests(&self.inputs, &mut text)?;
        text.push_str("\n[outputs]\n");
        digests(&self.outputs, &mut text)?;
        text.push_str("\n# Effective configuration\n[config]\n");
        let echo = cfg.to_toml();
        // Nest the echoed tables under [config].
        for line in echo.lines() {
            if let Some(section) = line.strip_prefix('[') {
                text.push_str(&format!("[config.{section}\n"));
            } else {
                text.push_str(line);
                text.push('\n');
            }
        }
        let path = out.join(format!("{}.manifest.toml", self.command));
        std::fs::write(&path, text).map_err(|e| sdm_core::Error::io(&path, e))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_is_valid_toml_with_config_echo() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.txt");
        std::fs::write(&input, "abc").unwrap();
        let mut cfg = RunConfig::default();
        cfg.seed = Some(9);
        let m = Manifest {
            command: "fit".into(),
            inputs: vec![input.clone()],
            outputs: vec![],
        };
        let path = m.write(&cfg, dir.path()).unwrap();
        let parsed: toml::Table = std::fs::read_to_string(path).unwrap().parse().unwrap();
        assert_eq!(
            parsed["inputs"][&input.display().to_string()].as_str().unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        let echoed: RunConfig = parsed["config"].clone().try_into().unwrap();
        assert_eq!(echoed, cfg);
    }
}
