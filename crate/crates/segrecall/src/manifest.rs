//! Dataset manifests: a class spec plus a list of (probability map, label map)
//! entries whose paths are relative to the manifest file.
//!
//! ```json
//! {
//!   "classes": "camvid",
//!   "entries": [{"probs": "probs/0001.sft", "labels": "labels/0001.pgm"}]
//! }
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use segrecall_core::{ClassSpec, Error, LabelMap, ProbMap};

use crate::config::ClassesRef;
use crate::{pgm, sft};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntryFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probs: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestFile {
    pub classes: ClassesRef,
    pub entries: Vec<EntryFile>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub probs: Option<PathBuf>,
    pub labels: Option<PathBuf>,
}

impl Entry {
    /// File name used for per-entry outputs: the label map's name when
    /// present, otherwise the probability map's stem with `.pgm`.
    pub fn output_name(&self) -> Option<String> {
        if let Some(l) = &self.labels {
            return l.file_name().map(|n| n.to_string_lossy().into_owned());
        }
        let stem = self.probs.as_ref()?.file_stem()?;
        Some(format!("{}.pgm", stem.to_string_lossy()))
    }
}

#[derive(Debug, Clone)]
pub struct DatasetManifest {
    pub path: PathBuf,
    pub sha256: String,
    pub classes: ClassSpec,
    pub entries: Vec<Entry>,
    /// Common `(height, width)` of every referenced map; `None` when empty.
    pub resolution: Option<(usize, usize)>,
}

impl DatasetManifest {
    /// Parses the manifest and checks that every referenced map exists, has
    /// the expected class count and shares one resolution. Only headers are
    /// read here.
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).with_context(|| format!("cannot read manifest {}", path.display()))?;
        let sha256 = hex::encode(Sha256::digest(&bytes));
        let file: ManifestFile =
            serde_json::from_slice(&bytes).with_context(|| format!("cannot parse manifest {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let classes = file.classes.resolve(base)?;
        let entries: Vec<Entry> = file
            .entries
            .iter()
            .map(|e| Entry {
                probs: e.probs.as_ref().map(|p| base.join(p)),
                labels: e.labels.as_ref().map(|p| base.join(p)),
            })
            .collect();
        let mut seen = std::collections::HashSet::new();
        for (i, e) in entries.iter().enumerate() {
            let name = e.output_name().ok_or_else(|| anyhow!("manifest entry {i} has neither probs nor labels"))?;
            if !seen.insert(name.clone()) {
                bail!("manifest entries share the output name {name:?}");
            }
        }
        let mut manifest = Self { path: path.to_path_buf(), sha256, classes, entries, resolution: None };
        manifest.check_resolution()?;
        Ok(manifest)
    }

    fn check_resolution(&mut self) -> Result<()> {
        let c = self.classes.num_classes();
        let mut first: Option<((usize, usize), PathBuf)> = None;
        let mut check = |dims: (usize, usize), path: &Path| -> Result<()> {
            match &first {
                None => first = Some((dims, path.to_path_buf())),
                Some((d, p)) if *d != dims => {
                    return Err(Error::ShapeMismatch {
                        expected: format!("{}x{} (as {})", d.0, d.1, p.display()),
                        found: format!("{}x{} in {}", dims.0, dims.1, path.display()),
                    }
                    .into())
                }
                Some(_) => {}
            }
            Ok(())
        };
        for e in &self.entries {
            if let Some(p) = &e.probs {
                let (_, dims) = sft::load_header(p).with_context(|| format!("{}", p.display()))?;
                let [h, w, k] = <[u32; 3]>::try_from(dims.as_slice()).map_err(|_| {
                    anyhow!("{}: probability maps are rank-3 [height, width, classes], got {dims:?}", p.display())
                })?;
                if k as usize != c {
                    return Err(Error::DimensionMismatch(format!(
                        "{} has {k} channels but the manifest declares {c} classes",
                        p.display()
                    ))
                    .into());
                }
                check((h as usize, w as usize), p)?;
            }
            if let Some(l) = &e.labels {
                let dims = pgm::load_dims(l).with_context(|| format!("{}", l.display()))?;
                check(dims, l)?;
            }
        }
        self.resolution = first.map(|(d, _)| d);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Label map of entry `i`, validated against the class spec.
    pub fn load_labels(&self, i: usize) -> Result<LabelMap> {
        let path = self.entries[i].labels.as_ref().ok_or_else(|| anyhow!("manifest entry {i} has no label map"))?;
        load_labels(path, &self.classes)
    }

    pub fn load_probs(&self, i: usize) -> Result<ProbMap> {
        let path =
            self.entries[i].probs.as_ref().ok_or_else(|| anyhow!("manifest entry {i} has no probability map"))?;
        load_probs(path)
    }
}

/// Reads a PGM and re-tags it with the spec's ignore id before validating.
pub fn load_labels(path: &Path, classes: &ClassSpec) -> Result<LabelMap> {
    let raw = pgm::load(path).with_context(|| format!("{}", path.display()))?;
    let map = LabelMap::with_ignore_id(raw.height(), raw.width(), raw.into_data(), classes.ignore_id())?;
    map.validate(classes).with_context(|| format!("{}", path.display()))?;
    Ok(map)
}

pub fn load_probs(path: &Path) -> Result<ProbMap> {
    let t = sft::load(path).with_context(|| format!("{}", path.display()))?;
    ProbMap::try_from(&t).with_context(|| format!("{}", path.display()))
}
