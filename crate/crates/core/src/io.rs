//! File formats: ranking datasets, serialized models, and synthetic data.
//!
//! Ranking files are plain text. The first non-comment line is a header,
//! e.g. `n=5 notation=ordering counted=true`; every following line is one
//! record of `n` whitespace-separated 1-based indices, with a trailing count
//! when the file is counted. `ordering` notation (the default) lists items
//! from most to least preferred — the natural ballot form — while `ranking`
//! notation lists each item's rank. Lines starting with `#` are comments.
//!
//! Models are versioned JSON documents mirroring the tree structure:
//! internal nodes carry an interleaving (explicit table, biased-riffle
//! parameter, or mixture) and two children; leaves carry a dense factor.
//! Item indices in files are 1-based; everything in memory is 0-based.

use std::fs;
use std::path::Path;

use rand::rngs::StdRng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::dense::{DenseDistribution, SampleSet};
use crate::model::{
    HierarchicalModel, InterleavingDistribution, InterleavingKind, ModelNode, TreeShape,
};
use crate::perm::Ranking;
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// Ranking files
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Notation {
    /// Items listed from most to least preferred (ballot form).
    Ordering,
    /// The i-th number is the rank of item i.
    Ranking,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RankingHeader {
    pub n: usize,
    pub notation: Notation,
    pub counted: bool,
}

fn parse_header(line: &str, lineno: usize) -> Result<RankingHeader> {
    let mut n = None;
    let mut notation = Notation::Ordering;
    let mut counted = false;
    for tok in line.split_whitespace() {
        let (key, value) = tok.split_once('=').ok_or_else(|| Error::Parse {
            line: lineno,
            msg: format!("expected key=value in header, got {:?}", tok),
        })?;
        match key {
            "n" => {
                n = Some(value.parse::<usize>().map_err(|_| Error::Parse {
                    line: lineno,
                    msg: format!("bad item count {:?}", value),
                })?)
            }
            "notation" => {
                notation = match value {
                    "ordering" => Notation::Ordering,
                    "ranking" => Notation::Ranking,
                    other => {
                        return Err(Error::Parse {
                            line: lineno,
                            msg: format!(
                                "notation must be \"ordering\" or \"ranking\", got {:?}",
                                other
                            ),
                        })
                    }
                }
            }
            "counted" => {
                counted = match value {
                    "true" => true,
                    "false" => false,
                    other => {
                        return Err(Error::Parse {
                            line: lineno,
                            msg: format!("counted must be true or false, got {:?}", other),
                        })
                    }
                }
            }
            other => {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("unknown header key {:?}", other),
                })
            }
        }
    }
    let n = n.ok_or(Error::Parse {
        line: lineno,
        msg: "header is missing n=<items>".into(),
    })?;
    if n == 0 {
        return Err(Error::Parse {
            line: lineno,
            msg: "n must be positive".into(),
        })
    }
    Ok(RankingHeader {
        n,
        notation,
        counted,
    })
}

fn parse_record(header: &RankingHeader, line: &str, lineno: usize) -> Result<(Ranking, u64)> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    let expected = header.n + usize::from(header.counted);
    if fields.len() != expected {
        return Err(Error::Parse {
            line: lineno,
            msg: format!("expected {} fields, got {}", expected, fields.len()),
        });
    }
    let mut values = Vec::with_capacity(header.n);
    for f in &fields[..header.n] {
        let v: usize = f.parse().map_err(|_| Error::Parse {
            line: lineno,
            msg: format!("bad index {:?}", f),
        })?;
        if v == 0 || v > header.n {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("index {} out of range 1..={}", v, header.n),
            });
        }
        values.push(v - 1);
    }
    let mut seen = vec![false; header.n];
    for &v in &values {
        if seen[v] {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("duplicate value {}", v + 1),
            });
        }
        seen[v] = true;
    }
    let ranking = match header.notation {
        Notation::Ordering => Ranking::from_ordering(&values),
        Notation::Ranking => Ranking::new(values),
    }
    .map_err(|e| Error::Parse {
        line: lineno,
        msg: e.to_string(),
    })?;
    let count = if header.counted {
        let c: u64 = fields[header.n].parse().map_err(|_| Error::Parse {
            line: lineno,
            msg: format!("bad count {:?}", fields[header.n]),
        })?;
        if c == 0 {
            return Err(Error::Parse {
                line: lineno,
                msg: "count must be positive".into(),
            });
        }
        c
    } else {
        1
    };
    Ok((ranking, count))
}

/// Parse a complete ranking file from text.
pub fn parse_rankings(text: &str) -> Result<SampleSet> {
    let mut header: Option<RankingHeader> = None;
    let mut records = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match &header {
            None => header = Some(parse_header(line, lineno)?),
            Some(h) => records.push(parse_record(h, line, lineno)?),
        }
    }
    let header = header.ok_or(Error::Parse {
        line: 0,
        msg: "empty file: missing header".into(),
    })?;
    SampleSet::new(header.n, records)
}

pub fn load_rankings(path: impl AsRef<Path>) -> Result<SampleSet> {
    parse_rankings(&fs::read_to_string(path)?)
}

/// Render a sample set in the given notation, counts included.
pub fn format_rankings(samples: &SampleSet, notation: Notation) -> String {
    let tag = match notation {
        Notation::Ordering => "ordering",
        Notation::Ranking => "ranking",
    };
    let mut out = format!("n={} notation={} counted=true\n", samples.n(), tag);
    for (r, c) in samples.records() {
        let values: Vec<usize> = match notation {
            Notation::Ordering => r.ordering().iter().map(|v| v + 1).collect(),
            Notation::Ranking => r.to_one_based(),
        };
        let fields: Vec<String> = values.iter().map(|v| v.to_string()).collect();
        out.push_str(&fields.join(" "));
        out.push_str(&format!(" {}\n", c));
    }
    out
}

pub fn save_rankings(
    samples: &SampleSet,
    path: impl AsRef<Path>,
    notation: Notation,
) -> Result<()> {
    fs::write(path, format_rankings(samples, notation))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Model documents
// ---------------------------------------------------------------------------

pub const MODEL_FORMAT: &str = "riffle-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format: String,
    pub version: u32,
    pub root: NodeDocument,
}

/// One node of the serialized tree. Internal nodes have `interleaving` and
/// exactly two `children`; leaves have `factor`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NodeDocument {
    /// 1-based item indices.
    pub items: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interleaving: Option<InterleavingDocument>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub children: Option<Vec<NodeDocument>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub factor: Option<FactorDocument>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InterleavingDocument {
    Table { probs: Vec<f64> },
    Biased { alpha: f64 },
    Mixture { weights: Vec<f64>, alphas: Vec<f64> },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FactorDocument {
    pub probs: Vec<f64>,
}

fn node_to_document(node: &ModelNode) -> NodeDocument {
    match node {
        ModelNode::Leaf { items, factor } => NodeDocument {
            items: items.iter().map(|i| i + 1).collect(),
            interleaving: None,
            children: None,
            factor: Some(FactorDocument {
                probs: factor.probs().to_vec(),
            }),
        },
        ModelNode::Internal {
            items,
            interleaving,
            left,
            right,
        } => {
            let doc = match interleaving.kind() {
                InterleavingKind::Table => InterleavingDocument::Table {
                    probs: interleaving.probs().to_vec(),
                },
                InterleavingKind::Biased { alpha } => {
                    InterleavingDocument::Biased { alpha: *alpha }
                }
                InterleavingKind::Mixture { weights, alphas } => InterleavingDocument::Mixture {
                    weights: weights.clone(),
                    alphas: alphas.clone(),
                },
            };
            NodeDocument {
                items: items.iter().map(|i| i + 1).collect(),
                interleaving: Some(doc),
                children: Some(vec![node_to_document(left), node_to_document(right)]),
                factor: None,
            }
        }
    }
}

fn node_from_document(doc: &NodeDocument) -> Result<ModelNode> {
    let mut items = Vec::with_capacity(doc.items.len());
    for &i in &doc.items {
        if i == 0 {
            return Err(Error::Schema("item index 0 (items are 1-based)".into()));
        }
        items.push(i - 1);
    }
    match (&doc.children, &doc.factor, &doc.interleaving) {
        (None, Some(factor), None) => {
            let f = DenseDistribution::new(items.len(), factor.probs.clone())?;
            Ok(ModelNode::Leaf { items, factor: f })
        }
        (Some(children), None, Some(interleaving)) => {
            if children.len() != 2 {
                return Err(Error::Schema(format!(
                    "internal node needs exactly 2 children, got {}",
                    children.len()
                )));
            }
            let left = node_from_document(&children[0])?;
            let right = node_from_document(&children[1])?;
            let (p, q) = (children[0].items.len(), children[1].items.len());
            let m = match interleaving {
                InterleavingDocument::Table { probs } => {
                    InterleavingDistribution::from_table(p, q, probs.clone())?
                }
                InterleavingDocument::Biased { alpha } => {
                    InterleavingDistribution::biased(p, q, *alpha)?
                }
                InterleavingDocument::Mixture { weights, alphas } => {
                    InterleavingDistribution::mixture(p, q, weights, alphas)?
                }
            };
            Ok(ModelNode::Internal {
                items,
                interleaving: m,
                left: Box::new(left),
                right: Box::new(right),
            })
        }
        _ => Err(Error::Schema(
            "node must have either a factor (leaf) or an interleaving plus children".into(),
        )),
    }
}

pub fn model_to_document(model: &HierarchicalModel) -> ModelDocument {
    ModelDocument {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        root: node_to_document(model.root()),
    }
}

pub fn model_from_document(doc: &ModelDocument) -> Result<HierarchicalModel> {
    if doc.format != MODEL_FORMAT {
        return Err(Error::Schema(format!(
            "unknown document format {:?}",
            doc.format
        )));
    }
    if doc.version != MODEL_VERSION {
        return Err(Error::Schema(format!(
            "unsupported model version {} (expected {})",
            doc.version, MODEL_VERSION
        )));
    }
    HierarchicalModel::new(node_from_document(&doc.root)?)
}

pub fn save_model(model: &HierarchicalModel, path: impl AsRef<Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(&model_to_document(model))
        .map_err(|e| Error::Schema(e.to_string()))?;
    fs::write(path, text)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<HierarchicalModel> {
    let text = fs::read_to_string(path)?;
    let doc: ModelDocument =
        serde_json::from_str(&text).map_err(|e| Error::Schema(e.to_string()))?;
    model_from_document(&doc)
}

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

/// Draw a random model over the given tree and sample `m` rankings from it;
/// fully determined by the seed.
pub fn synth(shape: &TreeShape, m: usize, seed: u64) -> Result<(HierarchicalModel, SampleSet)> {
    let mut rng = StdRng::seed_from_u64(seed);
    let model = HierarchicalModel::random(shape, &mut rng)?;
    let samples =
        SampleSet::from_rankings(model.n(), (0..m).map(|_| model.sample(&mut rng)))?;
    Ok((model, samples))
}
