use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::store::{manifest_dir, read_embedding_tensor, Manifest};

#[derive(Debug)]
pub struct ModalityDiagnostic {
    pub name: String,
    pub path: PathBuf,
    /// `(n, t, d)` when the file decoded cleanly.
    pub shape: Result<(usize, usize, usize)>,
}

/// Per-modality findings for a manifest. Never fails; problems are collected.
#[derive(Debug, Default)]
pub struct Diagnostics {
    pub modalities: Vec<ModalityDiagnostic>,
    pub problems: Vec<Error>,
}

impl Diagnostics {
    pub fn is_ok(&self) -> bool {
        self.problems.is_empty() && self.modalities.iter().all(|m| m.shape.is_ok())
    }

    pub fn sample_count(&self) -> Option<usize> {
        self.modalities.first()?.shape.as_ref().ok().map(|s| s.0)
    }

    /// The first problem found, in manifest order.
    pub fn first_error(&self) -> Option<&Error> {
        self.problems
            .iter()
            .chain(self.modalities.iter().filter_map(|m| m.shape.as_ref().err()))
            .next()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for m in &self.modalities {
            match &m.shape {
                Ok((n, t, d)) => {
                    let _ = writeln!(out, "{}: n={n} t={t} d={d} finite ({})", m.name, m.path.display());
                }
                Err(e) => {
                    let _ = writeln!(out, "{}: {}: {e}", m.name, e.kind());
                }
            }
        }
        for p in &self.problems {
            let _ = writeln!(out, "{}: {p}", p.kind());
        }
        if self.is_ok() {
            let _ = writeln!(
                out,
                "OK, n={}, M={}",
                self.sample_count().unwrap_or(0),
                self.modalities.len()
            );
        } else {
            let _ = writeln!(out, "FAILED");
        }
        out
    }
}

/// Checks that every modality decodes, is finite and aligned in `n`.
pub fn validate_inputs(manifest_path: impl AsRef<Path>) -> Diagnostics {
    let manifest_path = manifest_path.as_ref();
    let mut diag = Diagnostics::default();
    let manifest = match Manifest::read(manifest_path) {
        Ok(m) => m,
        Err(e) => {
            diag.problems.push(e);
            return diag;
        }
    };
    let paths = manifest.resolved_paths(&manifest_dir(manifest_path));
    for (entry, path) in manifest.modalities.iter().zip(paths) {
        let shape = read_embedding_tensor(&path).map(|t| (t.n(), t.t(), t.d()));
        diag.modalities.push(ModalityDiagnostic {
            name: entry.name.clone(),
            path,
            shape,
        });
    }
    let shapes: Vec<(&str, usize)> = diag
        .modalities
        .iter()
        .filter_map(|m| m.shape.as_ref().ok().map(|s| (m.name.as_str(), s.0)))
        .collect();
    if let Some(&(first, n)) = shapes.first() {
        for &(name, other) in &shapes[1..] {
            if other != n {
                diag.problems.push(Error::Alignment(format!(
                    "modality '{name}' has n={other} but '{first}' has n={n}"
                )));
            }
        }
    }
    diag
}
