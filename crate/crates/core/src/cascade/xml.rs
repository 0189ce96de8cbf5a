//! Reader for the XML cascade files distributed with OpenCV.
//!
//! Two layouts exist in the wild:
//!
//! * the current one (`<cascade type_id="opencv-cascade-classifier">`) stores
//!   features in a shared `<features>` list and each weak classifier as flat
//!   `internalNodes` quadruples `left right feature threshold` plus `leafValues`;
//!   child indices `<= 0` point at leaf `-index`;
//! * the legacy one (`type_id="opencv-haar-classifier"`) inlines every feature in
//!   its tree node and uses `left_val`/`right_val` or `left_node`/`right_node`.

use std::path::Path;

use roxmltree::{Document, Node};

use super::{CascadeModel, CascadeStage, Child, HaarFeature, HaarRect, TreeNode, WeakClassifier};
use crate::error::{Error, Result};

fn perr(msg: impl Into<String>) -> Error {
    Error::Parse(msg.into())
}

fn child<'a, 'i>(node: Node<'a, 'i>, name: &str) -> Option<Node<'a, 'i>> {
    node.children().find(|c| c.has_tag_name(name))
}

fn req_child<'a, 'i>(node: Node<'a, 'i>, name: &str) -> Result<Node<'a, 'i>> {
    child(node, name).ok_or_else(|| perr(format!("<{}> is missing <{name}>", node.tag_name().name())))
}

fn items<'a, 'i>(node: Node<'a, 'i>) -> impl Iterator<Item = Node<'a, 'i>> {
    node.children().filter(|c| c.has_tag_name("_"))
}

fn text<'a>(node: Node<'a, '_>) -> &'a str {
    node.text().unwrap_or("").trim()
}

fn num<T: std::str::FromStr>(tok: &str, what: &str) -> Result<T> {
    tok.parse().map_err(|_| perr(format!("bad {what} value {tok:?}")))
}

fn child_num<T: std::str::FromStr>(node: Node, name: &str) -> Result<T> {
    num(text(req_child(node, name)?), name)
}

fn parse_rect(s: &str) -> Result<HaarRect> {
    let toks: Vec<&str> = s.split_whitespace().collect();
    if toks.len() != 5 {
        return Err(perr(format!("rect needs 5 fields, got {s:?}")));
    }
    Ok(HaarRect {
        x: num(toks[0], "rect x")?,
        y: num(toks[1], "rect y")?,
        w: num(toks[2], "rect w")?,
        h: num(toks[3], "rect h")?,
        weight: num(toks[4], "rect weight")?,
    })
}

fn parse_feature(node: Node) -> Result<HaarFeature> {
    if let Some(t) = child(node, "tilted") {
        if text(t) != "0" {
            return Err(Error::UnsupportedFeature("tilted (45 degree) Haar feature".into()));
        }
    }
    let rects = items(req_child(node, "rects")?)
        .map(|r| parse_rect(text(r)))
        .collect::<Result<Vec<_>>>()?;
    if rects.is_empty() || rects.len() > 3 {
        return Err(perr(format!("feature has {} rects, expected 1-3", rects.len())));
    }
    Ok(HaarFeature { rects })
}

/// Parses a cascade from the raw bytes of an XML model file.
pub fn load_cascade(model_text: &[u8]) -> Result<CascadeModel> {
    let text = std::str::from_utf8(model_text).map_err(|e| perr(format!("not UTF-8: {e}")))?;
    if text.trim().is_empty() {
        return Err(perr("empty model"));
    }
    let doc = Document::parse(text).map_err(|e| perr(e.to_string()))?;
    let root = doc.root_element();
    let cascade = root
        .children()
        .find(|c| c.is_element())
        .ok_or_else(|| perr("no cascade element"))?;
    let model = if child(cascade, "stageType").is_some() || child(cascade, "features").is_some() {
        parse_current(cascade)?
    } else if child(cascade, "size").is_some() {
        parse_legacy(cascade)?
    } else {
        return Err(perr(format!(
            "unrecognized cascade element <{}>",
            cascade.tag_name().name()
        )));
    };
    validate(&model)?;
    Ok(model)
}

pub fn load_cascade_file(path: impl AsRef<Path>) -> Result<CascadeModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    load_cascade(&bytes)
}

fn parse_current(cascade: Node) -> Result<CascadeModel> {
    if let Some(st) = child(cascade, "stageType") {
        if text(st) != "BOOST" {
            return Err(Error::UnsupportedFeature(format!("stage type {}", text(st))));
        }
    }
    if let Some(ft) = child(cascade, "featureType") {
        if text(ft) != "HAAR" {
            return Err(Error::UnsupportedFeature(format!("feature type {}", text(ft))));
        }
    }
    let window_w: usize = child_num(cascade, "width")?;
    let window_h: usize = child_num(cascade, "height")?;
    let features = items(req_child(cascade, "features")?)
        .map(parse_feature)
        .collect::<Result<Vec<_>>>()?;

    let mut stages = Vec::new();
    for st in items(req_child(cascade, "stages")?) {
        let threshold: f64 = child_num(st, "stageThreshold")?;
        let mut weak = Vec::new();
        for wc in items(req_child(st, "weakClassifiers")?) {
            let nodes_raw: Vec<&str> = text(req_child(wc, "internalNodes")?).split_whitespace().collect();
            if nodes_raw.is_empty() || !nodes_raw.len().is_multiple_of(4) {
                return Err(perr("internalNodes must hold groups of 4 values"));
            }
            let leaves = text(req_child(wc, "leafValues")?)
                .split_whitespace()
                .map(|t| num::<f64>(t, "leaf"))
                .collect::<Result<Vec<_>>>()?;
            let to_child = |v: i64| {
                if v > 0 {
                    Child::Node(v as usize)
                } else {
                    Child::Leaf((-v) as usize)
                }
            };
            let nodes = nodes_raw
                .chunks_exact(4)
                .map(|q| {
                    Ok(TreeNode {
                        left: to_child(num(q[0], "left")?),
                        right: to_child(num(q[1], "right")?),
                        feature: num(q[2], "feature index")?,
                        threshold: num(q[3], "node threshold")?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            weak.push(WeakClassifier { nodes, leaves });
        }
        stages.push(CascadeStage { weak, threshold });
    }
    Ok(CascadeModel {
        window_w,
        window_h,
        stages,
        features,
    })
}

fn parse_legacy(cascade: Node) -> Result<CascadeModel> {
    let size: Vec<usize> = text(req_child(cascade, "size")?)
        .split_whitespace()
        .map(|t| num(t, "size"))
        .collect::<Result<_>>()?;
    let [window_w, window_h] = size[..] else {
        return Err(perr("size needs two values"));
    };
    let mut features = Vec::new();
    let mut stages = Vec::new();
    for st in items(req_child(cascade, "stages")?) {
        let threshold: f64 = child_num(st, "stage_threshold")?;
        let mut weak = Vec::new();
        for tree in items(req_child(st, "trees")?) {
            let mut nodes = Vec::new();
            let mut leaves = Vec::new();
            for n in items(tree) {
                let feature = features.len();
                features.push(parse_feature(req_child(n, "feature")?)?);
                let mut side = |val: &str, node: &str| -> Result<Child> {
                    if let Some(v) = child(n, val) {
                        leaves.push(num(text(v), val)?);
                        Ok(Child::Leaf(leaves.len() - 1))
                    } else {
                        Ok(Child::Node(child_num(n, node)?))
                    }
                };
                let left = side("left_val", "left_node")?;
                let right = side("right_val", "right_node")?;
                nodes.push(TreeNode {
                    feature,
                    threshold: child_num(n, "threshold")?,
                    left,
                    right,
                });
            }
            weak.push(WeakClassifier { nodes, leaves });
        }
        stages.push(CascadeStage { weak, threshold });
    }
    Ok(CascadeModel {
        window_w,
        window_h,
        stages,
        features,
    })
}

fn validate(m: &CascadeModel) -> Result<()> {
    if m.window_w == 0 || m.window_h == 0 {
        return Err(perr("window dimensions must be >= 1"));
    }
    if m.stages.is_empty() {
        return Err(perr("cascade has no stages"));
    }
    for (si, st) in m.stages.iter().enumerate() {
        if st.weak.is_empty() {
            return Err(perr(format!("stage {si} has no weak classifiers")));
        }
        for wc in &st.weak {
            if wc.nodes.is_empty() {
                return Err(perr(format!("stage {si}: weak classifier without nodes")));
            }
            for n in &wc.nodes {
                if n.feature >= m.features.len() {
                    return Err(perr(format!("stage {si}: feature index {} out of range", n.feature)));
                }
                for c in [n.left, n.right] {
                    let ok = match c {
                        Child::Node(i) => i < wc.nodes.len(),
                        Child::Leaf(i) => i < wc.leaves.len(),
                    };
                    if !ok {
                        return Err(perr(format!("stage {si}: dangling tree reference {c:?}")));
                    }
                }
            }
        }
    }
    for (fi, f) in m.features.iter().enumerate() {
        for r in &f.rects {
            if (r.x + r.w) as usize > m.window_w || (r.y + r.h) as usize > m.window_h || r.w == 0 || r.h == 0 {
                return Err(perr(format!("feature {fi}: rect {r:?} leaves the model window")));
            }
        }
    }
    Ok(())
}
