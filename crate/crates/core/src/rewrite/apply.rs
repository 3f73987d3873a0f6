//! Preview, sidecar and in-place application of a plan.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use similar::TextDiff;

use super::{sha256_hex, Patch, RewritePlan};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WriteMode {
    Preview,
    Sidecar,
    Replace,
}

impl WriteMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "preview" => Some(Self::Preview),
            "sidecar" => Some(Self::Sidecar),
            "replace" => Some(Self::Replace),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Preview => "preview",
            Self::Sidecar => "sidecar",
            Self::Replace => "replace",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApplyResult {
    pub write_mode: WriteMode,
    pub written_paths: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub backup_paths: Vec<String>,
    pub diff_text: String,
    pub applied: bool,
}

/// `<stem>.citecheck.<ext>` next to the original, forward-slash relative path.
pub fn sidecar_path(rel: &str) -> String {
    let (dir, name) = match rel.rfind('/') {
        Some(i) => (&rel[..=i], &rel[i + 1..]),
        None => ("", rel),
    };
    match name.rfind('.') {
        Some(i) if i > 0 => format!("{dir}{}.citecheck{}", &name[..i], &name[i..]),
        _ => format!("{dir}{name}.citecheck"),
    }
}

pub fn backup_path(rel: &str) -> String {
    format!("{rel}.bak")
}

/// Apply patches in descending span order so earlier offsets stay valid.
pub fn apply_patches(original: &[u8], patches: &[&Patch]) -> Vec<u8> {
    let mut sorted: Vec<&&Patch> = patches.iter().collect();
    sorted.sort_by(|a, b| b.span.cmp(&a.span));
    let mut out = original.to_vec();
    for p in sorted {
        out.splice(p.span.0..p.span.1, p.replacement_text.bytes());
    }
    out
}

fn check_digest(root: &Path, rel: &str, plan: &RewritePlan) -> Result<Vec<u8>> {
    let path = root.join(rel);
    let bytes = fs::read(&path).map_err(|source| Error::UnreadableFile { path: path.clone(), source })?;
    match plan.digests.get(rel) {
        Some(d) if *d == sha256_hex(&bytes) => Ok(bytes),
        _ => Err(Error::StaleFile(path)),
    }
}

fn write_new(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::OpenOptions::new()
        .write(true)
        .create_new(true)
        .open(path)
        .map_err(|e| Error::WriteDenied {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
    f.write_all(bytes)?;
    f.sync_all()?;
    Ok(())
}

fn replace_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = tmp_sibling(path);
    let denied = |e: std::io::Error| Error::WriteDenied {
        path: path.to_path_buf(),
        reason: e.to_string(),
    };
    fs::write(&tmp, bytes).map_err(denied)?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        denied(e)
    })
}

fn tmp_sibling(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".citecheck-tmp");
    path.with_file_name(name)
}

pub fn apply_rewrite(root: &Path, plan: &RewritePlan, mode: WriteMode) -> Result<ApplyResult> {
    if mode != WriteMode::Preview && plan.is_blocked() {
        return Err(Error::BlockedByPolicy(plan.blocked_reasons.clone()));
    }
    let mut by_target: BTreeMap<&str, Vec<&Patch>> = BTreeMap::new();
    for p in &plan.patches {
        by_target.entry(p.target_path.as_str()).or_default().push(p);
    }

    // Validate everything before writing anything.
    let mut staged = Vec::new();
    let mut diff_text = String::new();
    for (rel, _) in plan.digests.iter() {
        check_digest(root, rel, plan)?;
    }
    for (rel, patches) in &by_target {
        let original = check_digest(root, rel, plan)?;
        let updated = apply_patches(&original, patches);
        let (a, b) = (String::from_utf8_lossy(&original), String::from_utf8_lossy(&updated));
        let diff = TextDiff::from_lines(a.as_ref(), b.as_ref());
        let target_name = match mode {
            WriteMode::Sidecar => sidecar_path(rel),
            _ => rel.to_string(),
        };
        diff_text.push_str(
            &diff
                .unified_diff()
                .context_radius(3)
                .header(&format!("a/{rel}"), &format!("b/{target_name}"))
                .to_string(),
        );
        staged.push((rel.to_string(), updated, original));
    }

    let mut result = ApplyResult {
        write_mode: mode,
        written_paths: Vec::new(),
        backup_paths: Vec::new(),
        diff_text,
        applied: false,
    };
    match mode {
        WriteMode::Preview => {}
        WriteMode::Sidecar => {
            for (rel, _, _) in &staged {
                let side = sidecar_path(rel);
                if root.join(&side).exists() {
                    return Err(Error::WriteDenied {
                        path: root.join(&side),
                        reason: "sidecar already exists".into(),
                    });
                }
            }
            for (rel, updated, _) in &staged {
                let side = sidecar_path(rel);
                write_new(&root.join(&side), updated)?;
                result.written_paths.push(side);
            }
        }
        WriteMode::Replace => {
            for (rel, _, _) in &staged {
                let bak = backup_path(rel);
                if root.join(&bak).exists() {
                    return Err(Error::WriteDenied {
                        path: root.join(&bak),
                        reason: "backup already exists".into(),
                    });
                }
            }
            for (rel, updated, original) in &staged {
                let bak = backup_path(rel);
                write_new(&root.join(&bak), original)?;
                result.backup_paths.push(bak);
                replace_file(&root.join(rel), updated)?;
                result.written_paths.push(rel.clone());
            }
        }
    }
    result.applied = !result.written_paths.is_empty();
    Ok(result)
}
