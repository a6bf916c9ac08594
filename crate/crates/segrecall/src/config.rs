//! JSON documents: class specs, importance groups, loss configs, class
//! graphs and the run records written next to every output.

use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use segrecall_core::gcn::{build_graph, GraphSpec, Normalization};
use segrecall_core::losses::{ImportanceConfig, TargetVector, DEFAULT_ALPHA, DEFAULT_LAMBDA};
use segrecall_core::metrics::{Group, GroupSpec};
use segrecall_core::types::DEFAULT_IGNORE_ID;
use segrecall_core::ClassSpec;

pub const CLASS_PRESETS: [&str; 2] = ["camvid", "cityscapes"];

fn default_ignore() -> u8 {
    DEFAULT_IGNORE_ID
}

/// `{"names": [...], "ignore_id": 255}`
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassSpecFile {
    pub names: Vec<String>,
    #[serde(default = "default_ignore")]
    pub ignore_id: u8,
}

impl ClassSpecFile {
    pub fn resolve(&self) -> Result<ClassSpec> {
        Ok(ClassSpec::new(self.names.clone(), self.ignore_id)?)
    }
}

impl From<&ClassSpec> for ClassSpecFile {
    fn from(spec: &ClassSpec) -> Self {
        Self { names: spec.names().to_vec(), ignore_id: spec.ignore_id() }
    }
}

/// Either an inline class spec or a string naming a preset or a JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ClassesRef {
    Inline(ClassSpecFile),
    Named(String),
}

fn class_preset(name: &str) -> Option<ClassSpec> {
    match name {
        "camvid" => Some(ClassSpec::camvid()),
        "cityscapes" => Some(ClassSpec::cityscapes()),
        _ => None,
    }
}

/// Resolves a preset name or a class-spec file path (relative to `base`).
pub fn load_classes(name_or_path: &str, base: &Path) -> Result<ClassSpec> {
    if let Some(spec) = class_preset(name_or_path) {
        return Ok(spec);
    }
    let path = base.join(name_or_path);
    let file: ClassSpecFile = read_json(&path)?;
    file.resolve().with_context(|| format!("invalid class spec in {}", path.display()))
}

impl ClassesRef {
    pub fn resolve(&self, base: &Path) -> Result<ClassSpec> {
        match self {
            ClassesRef::Inline(f) => f.resolve(),
            ClassesRef::Named(s) => load_classes(s, base),
        }
    }
}

/// A class named by id or by name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ClassRef {
    Id(usize),
    Name(String),
}

impl ClassRef {
    fn resolve(&self, spec: &ClassSpec) -> Result<usize> {
        match self {
            ClassRef::Id(k) if *k < spec.num_classes() => Ok(*k),
            ClassRef::Id(k) => bail!("class id {k} out of range for {} classes", spec.num_classes()),
            ClassRef::Name(n) => spec.class_id(n).ok_or_else(|| anyhow!("unknown class name {n:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupFile {
    pub name: String,
    pub classes: Vec<ClassRef>,
}

/// Groups ordered from least to most important, or a preset name
/// (`camvid`, `cityscapes`, `single`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GroupsRef {
    Preset(String),
    Groups(Vec<GroupFile>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct GroupsDoc {
    groups: GroupsRef,
}

impl GroupsRef {
    pub fn resolve(&self, spec: &ClassSpec) -> Result<GroupSpec> {
        match self {
            GroupsRef::Preset(p) if p == "single" => Ok(GroupSpec::single(spec.num_classes())),
            GroupsRef::Preset(p) => {
                let preset = class_preset(p)
                    .ok_or_else(|| anyhow!("unknown group preset {p:?} (expected camvid, cityscapes or single)"))?;
                if preset.names() != spec.names() {
                    bail!("group preset {p:?} only applies to the {p} class list");
                }
                Ok(if p == "camvid" { GroupSpec::camvid() } else { GroupSpec::cityscapes() })
            }
            GroupsRef::Groups(list) => {
                let groups = list
                    .iter()
                    .map(|g| {
                        let classes = g
                            .classes
                            .iter()
                            .map(|c| c.resolve(spec))
                            .collect::<Result<Vec<_>>>()
                            .with_context(|| format!("group {:?}", g.name))?;
                        Ok(Group { name: g.name.clone(), classes })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(GroupSpec::new(spec.num_classes(), groups)?)
            }
        }
    }

    /// The class spec implied by a preset, if any.
    pub fn preset_classes(&self) -> Option<ClassSpec> {
        match self {
            GroupsRef::Preset(p) => class_preset(p),
            GroupsRef::Groups(_) => None,
        }
    }
}

/// Resolves a group preset name or a `{"groups": [...]}` file.
pub fn load_groups(name_or_path: &str, spec: &ClassSpec) -> Result<GroupSpec> {
    if class_preset(name_or_path).is_some() || name_or_path == "single" {
        return GroupsRef::Preset(name_or_path.into()).resolve(spec);
    }
    let doc: GroupsDoc = read_json(Path::new(name_or_path))?;
    doc.groups.resolve(spec)
}

fn default_lambda() -> f64 {
    DEFAULT_LAMBDA
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

/// Importance-aware loss configuration. `targets`, when present, replaces the
/// default per-level target vectors; `null` entries mask a class out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImportanceConfigFile {
    pub groups: GroupsRef,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub targets: Option<Vec<TargetVector>>,
}

impl ImportanceConfigFile {
    pub fn resolve(&self, spec: &ClassSpec) -> Result<ImportanceConfig> {
        let groups = self.groups.resolve(spec)?;
        Ok(match &self.targets {
            Some(t) => ImportanceConfig::with_targets(groups, t.clone(), self.lambda, self.alpha)?,
            None => ImportanceConfig::new(groups, self.lambda, self.alpha)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum NormalizationName {
    #[default]
    Row,
    Symmetric,
}

impl From<NormalizationName> for Normalization {
    fn from(n: NormalizationName) -> Self {
        match n {
            NormalizationName::Row => Normalization::RowStochastic,
            NormalizationName::Symmetric => Normalization::Symmetric,
        }
    }
}

fn yes() -> bool {
    true
}

/// A class graph: either an explicit `adjacency` (rows are source nodes) or
/// the importance rule applied to `groups`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<ClassesRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adjacency: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groups: Option<GroupsRef>,
    #[serde(default = "yes")]
    pub directed: bool,
    #[serde(default)]
    pub normalization: NormalizationName,
}

impl GraphFile {
    pub fn resolve(&self, base: &Path) -> Result<GraphSpec> {
        let graph = match (&self.adjacency, &self.groups) {
            (Some(rows), None) => {
                let n = rows.len();
                if let Some(r) = rows.iter().find(|r| r.len() != n) {
                    return Err(segrecall_core::Error::DimensionMismatch(format!(
                        "adjacency row of length {} in a {n}-node graph",
                        r.len()
                    ))
                    .into());
                }
                GraphSpec::new(n, rows.concat(), self.directed)?
            }
            (None, Some(groups)) => {
                if !self.directed {
                    bail!("the importance rule produces a directed graph; drop \"directed\": false");
                }
                let spec = match (&self.classes, groups.preset_classes()) {
                    (Some(c), _) => c.resolve(base)?,
                    (None, Some(c)) => c,
                    (None, None) => bail!("a group-rule graph with explicit groups needs \"classes\""),
                };
                build_graph(&groups.resolve(&spec)?)?
            }
            _ => bail!("graph needs exactly one of \"adjacency\" or \"groups\""),
        };
        Ok(graph.with_normalization(self.normalization.into()))
    }
}

/// The effective configuration of one invocation, echoed next to its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: serde_json::Value,
}

impl RunRecord {
    pub fn new(command: &str, config: serde_json::Value) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config,
        }
    }
}

/// Reproducibility sidecar of a priors tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorsSidecar {
    pub sigma: f64,
    pub floor: f64,
    /// `[height, width, classes]`
    pub shape: [usize; 3],
    pub maps: usize,
    pub manifest_sha256: String,
    pub classes: ClassSpecFile,
    pub run: RunRecord,
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("cannot parse {}", path.display()))
}

/// Pretty JSON with a trailing newline; field order follows the type, so the
/// bytes are stable across runs.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_spec_file_defaults_ignore() {
        let f: ClassSpecFile = serde_json::from_str(r#"{"names": ["a", "b"]}"#).unwrap();
        let spec = f.resolve().unwrap();
        assert_eq!(spec.ignore_id(), 255);
        assert_eq!(spec.num_classes(), 2);
        assert!(serde_json::from_str::<ClassSpecFile>(r#"{"names": [], "extra": 1}"#).is_err());
    }

    #[test]
    fn groups_accept_ids_and_names() {
        let spec = ClassSpec::with_default_ignore(["bg", "car", "sign"]).unwrap();
        let g: GroupsRef =
            serde_json::from_str(r#"[{"name": "G1", "classes": [0]}, {"name": "G2", "classes": ["car", 2]}]"#).unwrap();
        let gs = g.resolve(&spec).unwrap();
        assert_eq!(gs.groups()[1].classes, vec![1, 2]);
        let bad: GroupsRef = serde_json::from_str(r#"[{"name": "G1", "classes": ["truck"]}]"#).unwrap();
        assert!(bad.resolve(&spec).is_err());
    }

    #[test]
    fn presets_must_match_the_class_list() {
        let spec = ClassSpec::with_default_ignore(["a", "b"]).unwrap();
        assert!(GroupsRef::Preset("cityscapes".into()).resolve(&spec).is_err());
        assert_eq!(
            GroupsRef::Preset("cityscapes".into()).resolve(&ClassSpec::cityscapes()).unwrap(),
            GroupSpec::cityscapes()
        );
        assert_eq!(GroupsRef::Preset("single".into()).resolve(&spec).unwrap().len(), 1);
    }

    #[test]
    fn importance_config_defaults_and_masked_targets() {
        let spec = ClassSpec::with_default_ignore(["a", "b"]).unwrap();
        let f: ImportanceConfigFile =
            serde_json::from_str(r#"{"groups": [{"name": "G1", "classes": ["a"]}, {"name": "G2", "classes": ["b"]}]}"#)
                .unwrap();
        let cfg = f.resolve(&spec).unwrap();
        assert_eq!((cfg.lambda(), cfg.alpha()), (0.5, 1.0));
        assert_eq!(cfg.targets(), &[vec![Some(0.0), Some(1.0)]]);
        let f: ImportanceConfigFile = serde_json::from_str(
            r#"{"groups": [{"name": "G1", "classes": ["a"]}, {"name": "G2", "classes": ["b"]}],
                "lambda": 0.25, "targets": [[null, 1.0]]}"#,
        )
        .unwrap();
        let cfg = f.resolve(&spec).unwrap();
        assert_eq!(cfg.targets(), &[vec![None, Some(1.0)]]);
        assert_eq!(cfg.lambda(), 0.25);
    }

    #[test]
    fn graph_from_preset_matches_build_graph() {
        let f: GraphFile = serde_json::from_str(r#"{"groups": "cityscapes"}"#).unwrap();
        let g = f.resolve(Path::new(".")).unwrap();
        assert_eq!(g, build_graph(&GroupSpec::cityscapes()).unwrap());
        let f: GraphFile =
            serde_json::from_str(r#"{"adjacency": [[1, 0], [1, 1]], "normalization": "symmetric"}"#).unwrap();
        let g = f.resolve(Path::new(".")).unwrap();
        assert_eq!(g.normalization(), Normalization::Symmetric);
        assert_eq!(g.edge(1, 0), 1.0);
        let f: GraphFile = serde_json::from_str(r#"{"adjacency": [[1, 0], [1]]}"#).unwrap();
        assert!(f.resolve(Path::new(".")).is_err());
        let f: GraphFile = serde_json::from_str(r#"{}"#).unwrap();
        assert!(f.resolve(Path::new(".")).is_err());
    }
}
