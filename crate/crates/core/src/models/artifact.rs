//! Self-describing text container for trained models.
//!
//! ```text
//! esg-readability-artifact 1
//! kind syntax
//! meta vocab_fingerprint 3f9a...
//! array hidden1.bias 256
//! 0
//! ...
//! end
//! ```
//!
//! Metadata values run to the end of the line. Numbers are written with
//! Rust's shortest round-trip formatting, so save followed by load is
//! bit-exact.

use std::path::Path;

use super::gbt::{GbtModel, Node, Tree};
use super::linear::LinearModel;
use super::mlp::{Dense, MlpModel};
use super::ModelError;

pub const MAGIC: &str = "esg-readability-artifact 1";

#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub kind: String,
    pub meta: Vec<(String, String)>,
    pub arrays: Vec<(String, Vec<f64>)>,
}

fn bad(line: usize, msg: impl Into<String>) -> ModelError {
    ModelError::Artifact { line, msg: msg.into() }
}

impl Artifact {
    pub fn new(kind: &str) -> Self {
        Artifact { kind: kind.to_string(), meta: Vec::new(), arrays: Vec::new() }
    }

    /// Sets a metadata entry, replacing an existing one with the same key.
    pub fn set_meta(&mut self, key: &str, value: impl Into<String>) {
        let value = value.into();
        assert!(!key.contains(char::is_whitespace) && !value.contains('\n'), "invalid meta entry {key:?}");
        match self.meta.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value,
            None => self.meta.push((key.to_string(), value)),
        }
    }

    pub fn push_array(&mut self, name: &str, values: Vec<f64>) {
        assert!(!name.contains(char::is_whitespace), "invalid array name {name:?}");
        self.arrays.push((name.to_string(), values));
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn require_meta(&self, key: &str) -> Result<&str, ModelError> {
        self.meta(key).ok_or_else(|| bad(0, format!("missing meta entry {key:?}")))
    }

    pub fn array(&self, name: &str) -> Result<&[f64], ModelError> {
        self.arrays
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
            .ok_or_else(|| bad(0, format!("missing array {name:?}")))
    }

    fn expect_kind(&self, kind: &str) -> Result<(), ModelError> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(bad(2, format!("artifact holds a {:?} model, expected {kind:?}", self.kind)))
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(MAGIC);
        out.push('\n');
        out.push_str(&format!("kind {}\n", self.kind));
        for (k, v) in &self.meta {
            out.push_str(&format!("meta {k} {v}\n"));
        }
        for (name, values) in &self.arrays {
            out.push_str(&format!("array {name} {}\n", values.len()));
            for v in values {
                out.push_str(&v.to_string());
                out.push('\n');
            }
        }
        out.push_str("end\n");
        out
    }

    pub fn parse(text: &str) -> Result<Self, ModelError> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, MAGIC)) => {}
            _ => return Err(bad(1, format!("expected {MAGIC:?}"))),
        }
        let kind = match lines.next() {
            Some((_, l)) if l.starts_with("kind ") => l["kind ".len()..].to_string(),
            _ => return Err(bad(2, "expected kind line")),
        };
        let mut art = Artifact::new(&kind);
        loop {
            let Some((n, line)) = lines.next() else {
                return Err(bad(0, "truncated artifact (no end line)"));
            };
            if line == "end" {
                break;
            }
            if let Some(rest) = line.strip_prefix("meta ") {
                let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                if art.meta(k).is_some() {
                    return Err(bad(n, format!("duplicate meta entry {k:?}")));
                }
                art.meta.push((k.to_string(), v.to_string()));
            } else if let Some(rest) = line.strip_prefix("array ") {
                let (name, len) = rest.split_once(' ').ok_or_else(|| bad(n, "expected array name and length"))?;
                let len: usize = len.parse().map_err(|_| bad(n, format!("bad array length {len:?}")))?;
                if art.arrays.iter().any(|(a, _)| a == name) {
                    return Err(bad(n, format!("duplicate array {name:?}")));
                }
                let mut values = Vec::with_capacity(len);
                for _ in 0..len {
                    let (m, v) = lines.next().ok_or_else(|| bad(n, format!("array {name:?} truncated")))?;
                    let v: f64 = v.parse().map_err(|_| bad(m, format!("bad number {v:?}")))?;
                    values.push(v);
                }
                art.arrays.push((name.to_string(), values));
            } else {
                return Err(bad(n, format!("unexpected line {line:?}")));
            }
        }
        if let Some((n, _)) = lines.find(|(_, l)| !l.trim().is_empty()) {
            return Err(bad(n, "content after end line"));
        }
        Ok(art)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        std::fs::write(path, self.render())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

fn scalar(art: &Artifact, name: &str) -> Result<f64, ModelError> {
    match art.array(name)? {
        [v] => Ok(*v),
        other => Err(bad(0, format!("array {name:?} has {} values, expected 1", other.len()))),
    }
}

fn index(v: f64, what: &str) -> Result<usize, ModelError> {
    if v >= 0.0 && v.fract() == 0.0 && v < (1u64 << 53) as f64 {
        Ok(v as usize)
    } else {
        Err(bad(0, format!("{what} {v} is not a valid index")))
    }
}

pub const LENGTH_KIND: &str = "length";
pub const GBT_KIND: &str = "formulae";
pub const MLP_KIND: &str = "syntax";

pub fn linear_to_artifact(model: &LinearModel) -> Artifact {
    let mut art = Artifact::new(LENGTH_KIND);
    art.push_array("weight", vec![model.weight]);
    art.push_array("bias", vec![model.bias]);
    art
}

pub fn linear_from_artifact(art: &Artifact) -> Result<LinearModel, ModelError> {
    art.expect_kind(LENGTH_KIND)?;
    let model = LinearModel { weight: scalar(art, "weight")?, bias: scalar(art, "bias")? };
    if !(model.weight.is_finite() && model.bias.is_finite()) {
        return Err(ModelError::NonFinite("linear model coefficients".into()));
    }
    Ok(model)
}

const LEAF: f64 = 0.0;
const SPLIT: f64 = 1.0;

/// Trees are flattened to five numbers per node: tag, feature, value or
/// threshold, left child, right child.
pub fn gbt_to_artifact(model: &GbtModel) -> Artifact {
    let mut art = Artifact::new(GBT_KIND);
    art.push_array("base_score", vec![model.base_score]);
    art.push_array("learning_rate", vec![model.learning_rate]);
    art.push_array("max_depth", vec![model.max_depth as f64]);
    art.push_array("n_features", vec![model.n_features as f64]);
    art.push_array("tree_sizes", model.trees.iter().map(|t| t.nodes.len() as f64).collect());
    let mut flat = Vec::new();
    for node in model.trees.iter().flat_map(|t| &t.nodes) {
        match *node {
            Node::Leaf(v) => flat.extend([LEAF, 0.0, v, 0.0, 0.0]),
            Node::Split { feature, threshold, left, right } => {
                flat.extend([SPLIT, feature as f64, threshold, left as f64, right as f64])
            }
        }
    }
    art.push_array("nodes", flat);
    art
}

pub fn gbt_from_artifact(art: &Artifact) -> Result<GbtModel, ModelError> {
    art.expect_kind(GBT_KIND)?;
    let sizes = art.array("tree_sizes")?;
    let flat = art.array("nodes")?;
    let total: usize = sizes.iter().map(|&s| index(s, "tree size")).sum::<Result<_, _>>()?;
    if flat.len() != 5 * total {
        return Err(bad(0, format!("{} node values for {total} nodes", flat.len())));
    }
    let mut chunks = flat.chunks_exact(5);
    let mut trees = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let mut nodes = Vec::new();
        for c in chunks.by_ref().take(size as usize) {
            nodes.push(if c[0] == LEAF {
                Node::Leaf(c[2])
            } else if c[0] == SPLIT {
                Node::Split {
                    feature: index(c[1], "feature")?,
                    threshold: c[2],
                    left: index(c[3], "child")?,
                    right: index(c[4], "child")?,
                }
            } else {
                return Err(bad(0, format!("unknown node tag {}", c[0])));
            });
        }
        trees.push(Tree { nodes });
    }
    let model = GbtModel {
        base_score: scalar(art, "base_score")?,
        trees,
        learning_rate: scalar(art, "learning_rate")?,
        max_depth: index(scalar(art, "max_depth")?, "max depth")?,
        n_features: index(scalar(art, "n_features")?, "feature count")?,
    };
    model.check()?;
    Ok(model)
}

pub fn mlp_to_artifact(model: &MlpModel) -> Artifact {
    let mut art = Artifact::new(MLP_KIND);
    art.set_meta("vocab_fingerprint", model.vocab_fingerprint.clone());
    art.push_array("dropout_rate", vec![model.dropout_rate]);
    for (name, layer) in MlpModel::LAYER_NAMES.iter().zip(model.layers()) {
        art.push_array(&format!("{name}.shape"), vec![layer.in_dim as f64, layer.out_dim as f64]);
        art.push_array(&format!("{name}.weights"), layer.weights.clone());
        art.push_array(&format!("{name}.bias"), layer.bias.clone());
    }
    art
}

pub fn mlp_from_artifact(art: &Artifact) -> Result<MlpModel, ModelError> {
    art.expect_kind(MLP_KIND)?;
    let layer = |name: &str| -> Result<Dense, ModelError> {
        let shape = art.array(&format!("{name}.shape"))?;
        let [i, o] = shape else {
            return Err(bad(0, format!("layer {name} shape must have two entries")));
        };
        Ok(Dense {
            in_dim: index(*i, "layer input width")?,
            out_dim: index(*o, "layer output width")?,
            weights: art.array(&format!("{name}.weights"))?.to_vec(),
            bias: art.array(&format!("{name}.bias"))?.to_vec(),
        })
    };
    let [a, b, c, d, e] = MlpModel::LAYER_NAMES;
    let model = MlpModel {
        ngram_compress: layer(a)?,
        other_expand: layer(b)?,
        hidden1: layer(c)?,
        hidden2: layer(d)?,
        output: layer(e)?,
        dropout_rate: scalar(art, "dropout_rate")?,
        vocab_fingerprint: art.require_meta("vocab_fingerprint")?.to_string(),
    };
    model.check_shapes()?;
    if model.layers().iter().any(|l| l.weights.iter().chain(&l.bias).any(|v| !v.is_finite())) {
        return Err(ModelError::NonFinite("network parameters".into()));
    }
    Ok(model)
}
