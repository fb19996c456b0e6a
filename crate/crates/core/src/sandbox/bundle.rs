//! Task bundles: the program template with its sentinel-delimited editable
//! region, how to run it, and what data it may use.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analytics::CleanRules;
use crate::error::BundleError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CleanupPolicy {
    Keep,
    /// Delete scratch directories of executions that produced a score.
    #[default]
    Delete,
}

/// One optimization target. Serialized whole into the run journal so a run can
/// be resumed without the original bundle directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskBundle {
    pub name: String,
    pub task_description: String,
    pub data_available_note: String,
    pub features_note: String,
    pub template: String,
    pub sentinel_begin: String,
    pub sentinel_end: String,
    pub run_command: Vec<String>,
    /// File name of the spliced program inside the scratch directory.
    pub program_file: String,
    pub dataset_path: PathBuf,
    pub time_limit_seconds: u64,
    pub cleanup: CleanupPolicy,
    pub clean: CleanRules,
    /// Directory the manifest was loaded from; relative commands resolve here.
    pub root: PathBuf,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    #[serde(default)]
    name: Option<String>,
    task_description: String,
    #[serde(default)]
    data_available_note: String,
    #[serde(default)]
    features_note: String,
    template: PathBuf,
    sentinel_begin: String,
    sentinel_end: String,
    run_command: Vec<String>,
    #[serde(default)]
    program_file: Option<String>,
    #[serde(default)]
    dataset_path: Option<PathBuf>,
    #[serde(default = "default_limit")]
    time_limit_seconds: u64,
    #[serde(default)]
    cleanup: CleanupPolicy,
    #[serde(default)]
    clean: CleanRules,
}

fn default_limit() -> u64 {
    600
}

/// Location of the begin/end sentinel lines, as line indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Region {
    begin: usize,
    end: usize,
}

impl TaskBundle {
    /// Load a `bundle.toml` manifest (or a directory containing one).
    pub fn load(path: &Path) -> Result<Self, BundleError> {
        let manifest_path = if path.is_dir() { path.join("bundle.toml") } else { path.to_path_buf() };
        let io_err = |p: &Path| {
            let p = p.to_path_buf();
            move |source| BundleError::Io { path: p, source }
        };
        let text = std::fs::read_to_string(&manifest_path).map_err(io_err(&manifest_path))?;
        let manifest: Manifest = toml::from_str(&text).map_err(|e| BundleError::Manifest {
            path: manifest_path.clone(),
            reason: e.to_string(),
        })?;
        let root = manifest_path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        let root = std::fs::canonicalize(&root).unwrap_or(root);
        let template_path = root.join(&manifest.template);
        let template = std::fs::read_to_string(&template_path).map_err(io_err(&template_path))?;
        let program_file = manifest.program_file.unwrap_or_else(|| {
            manifest
                .template
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| "candidate".to_string())
        });
        let dataset_path = root.join(manifest.dataset_path.unwrap_or_else(|| PathBuf::from(".")));
        let bundle = TaskBundle {
            name: manifest.name.unwrap_or_else(|| {
                root.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
            }),
            task_description: manifest.task_description,
            data_available_note: manifest.data_available_note,
            features_note: manifest.features_note,
            template,
            sentinel_begin: manifest.sentinel_begin,
            sentinel_end: manifest.sentinel_end,
            run_command: manifest.run_command,
            program_file,
            dataset_path,
            time_limit_seconds: manifest.time_limit_seconds,
            cleanup: manifest.cleanup,
            clean: manifest.clean,
            root,
        };
        Ok(bundle)
    }

    /// Check sentinels and that the run command resolves to an executable.
    pub fn validate(&self) -> Result<(), BundleError> {
        self.region()?;
        self.resolve_command()?;
        Ok(())
    }

    fn is_line(line: &str, sentinel: &str) -> bool {
        line.strip_suffix('\r').unwrap_or(line) == sentinel
    }

    fn region(&self) -> Result<Region, BundleError> {
        let find = |sentinel: &str, which: &'static str| {
            let mut hits = self
                .template
                .split('\n')
                .enumerate()
                .filter(|(_, l)| Self::is_line(l, sentinel))
                .map(|(i, _)| i);
            let first = hits.next().ok_or(BundleError::SentinelMissing(which))?;
            if hits.next().is_some() {
                return Err(BundleError::SentinelDuplicated(which));
            }
            Ok(first)
        };
        let begin = find(&self.sentinel_begin, "begin")?;
        let end = find(&self.sentinel_end, "end")?;
        if begin >= end {
            return Err(BundleError::SentinelOrder);
        }
        Ok(Region { begin, end })
    }

    /// The current editable-region text (without a final newline).
    pub fn extract_region(&self, program: &str) -> Result<String, BundleError> {
        let probe = TaskBundle { template: program.to_string(), ..self.clone() };
        let region = probe.region()?;
        let lines: Vec<&str> = program.split('\n').collect();
        Ok(lines[region.begin + 1..region.end].join("\n"))
    }

    /// The template's own editable-region text.
    pub fn template_region(&self) -> Result<String, BundleError> {
        self.extract_region(&self.template)
    }

    /// Replace the text strictly between the sentinel lines with `region_code`.
    /// Everything outside the region is kept byte for byte.
    pub fn splice(&self, region_code: &str) -> Result<String, BundleError> {
        if region_code.trim().is_empty() {
            return Err(BundleError::EmptyRegion);
        }
        if region_code
            .split('\n')
            .any(|l| Self::is_line(l, &self.sentinel_begin) || Self::is_line(l, &self.sentinel_end))
        {
            return Err(BundleError::RegionContainsSentinel);
        }
        let region = self.region()?;
        let lines: Vec<&str> = self.template.split('\n').collect();
        let mut out = String::with_capacity(self.template.len() + region_code.len());
        for line in &lines[..=region.begin] {
            out.push_str(line);
            out.push('\n');
        }
        out.push_str(region_code);
        out.push('\n');
        out.push_str(&lines[region.end..].join("\n"));
        Ok(out)
    }

    /// Absolute argv for the run command, with the program path not yet appended.
    pub fn resolve_command(&self) -> Result<Vec<String>, BundleError> {
        let program = self.run_command.first().ok_or(BundleError::EmptyRunCommand)?;
        let resolved = if program.contains('/') {
            let p = self.root.join(program);
            is_executable(&p).then(|| p.to_string_lossy().into_owned())
        } else {
            find_in_path(program)
        };
        let resolved = resolved.ok_or_else(|| BundleError::CommandNotFound(program.clone()))?;
        let mut argv = vec![resolved];
        argv.extend(self.run_command[1..].iter().cloned());
        Ok(argv)
    }

    pub fn time_limit(&self) -> std::time::Duration {
        std::time::Duration::from_secs(self.time_limit_seconds)
    }
}

fn is_executable(path: &Path) -> bool {
    use std::os::unix::fs::PermissionsExt;
    path.metadata().map(|m| m.is_file() && m.permissions().mode() & 0o111 != 0).unwrap_or(false)
}

fn find_in_path(program: &str) -> Option<String> {
    let path = std::env::var_os("PATH")?;
    std::env::split_paths(&path)
        .map(|dir| dir.join(program))
        .find(|p| is_executable(p))
        .map(|p| p.to_string_lossy().into_owned())
}
