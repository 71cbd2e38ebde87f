use std::collections::{BTreeMap, HashSet};
use std::fmt::Write;

use crate::imaging::PatchSet;
use crate::msesearch::MseRecord;
use crate::subexplain::SubExplanationNode;

pub const DEFAULT_MAX_CHILDREN: usize = 3;

/// Sub-explanation nodes keyed by root bitmask.
pub type SagNodes = BTreeMap<u64, Vec<SubExplanationNode>>;

fn escape(text: &str) -> String {
    text.replace('\\', "\\\\").replace('"', "\\\"")
}

/// One digraph per image, one tree per root.
///
/// Children of a node are its single-patch deletions present in that root's
/// node list and not yet drawn, sorted by descending ratio (ties by
/// bitmask) and cut to `max_children`. Each subset is drawn at most once per
/// tree, under the first parent that reaches it breadth-first.
pub fn export_sag_dot(image_id: &str, roots: &[MseRecord], nodes: &SagNodes, max_children: usize) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "digraph \"{}\" {{", escape(image_id));
    if !roots.is_empty() {
        out.push_str("  node [shape=box, fontname=\"monospace\"];\n");
    }
    for (t, root) in roots.iter().enumerate() {
        let id = |s: PatchSet| format!("t{t}_{}", s.to_hex());
        let ratios: BTreeMap<u64, f64> = nodes
            .get(&root.patches.bits())
            .into_iter()
            .flatten()
            .map(|n| (n.subset.bits(), n.confidence_ratio))
            .collect();
        let node_line = |out: &mut String, s: PatchSet, ratio: f64, is_root: bool| {
            let style = if is_root { ", style=bold" } else { "" };
            let _ = writeln!(out, "  {} [label=\"{}\\n{:.2}\"{style}];", id(s), s.to_hex(), ratio);
        };
        node_line(&mut out, root.patches, root.ratio(), true);

        let mut drawn: HashSet<u64> = HashSet::from([root.patches.bits()]);
        let mut frontier = vec![root.patches];
        let mut edges = Vec::new();
        while !frontier.is_empty() {
            let mut next = Vec::new();
            for parent in frontier {
                let mut children: Vec<(PatchSet, f64)> = parent
                    .immediate_subsets()
                    .filter(|c| !drawn.contains(&c.bits()))
                    .filter_map(|c| ratios.get(&c.bits()).map(|r| (c, *r)))
                    .collect();
                children.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.bits().cmp(&b.0.bits())));
                children.truncate(max_children);
                for (child, ratio) in children {
                    drawn.insert(child.bits());
                    node_line(&mut out, child, ratio, false);
                    edges.push((parent, child));
                    next.push(child);
                }
            }
            frontier = next;
        }
        for (a, b) in edges {
            let _ = writeln!(out, "  {} -> {};", id(a), id(b));
        }
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::msesearch::Minimality;
    use crate::oracle::ClassLabel;

    fn root(bits: u64) -> MseRecord {
        MseRecord {
            image_id: "img".into(),
            class: ClassLabel(0),
            patches: PatchSet::from_bits(bits, 9).unwrap(),
            confidence: 0.95,
            full_confidence: 1.0,
            minimality: Minimality::ImmediateSubsets,
        }
    }

    fn node(bits: u64, ratio: f64) -> SubExplanationNode {
        SubExplanationNode {
            subset: PatchSet::from_bits(bits, 9).unwrap(),
            confidence_ratio: ratio,
        }
    }

    #[test]
    fn one_root_two_children() {
        let nodes = SagNodes::from([(0b11, vec![node(0b01, 0.7), node(0b10, 0.6)])]);
        let dot = export_sag_dot("img", &[root(0b11)], &nodes, 3);
        assert_eq!(dot.matches("[label=").count(), 3);
        assert_eq!(dot.matches("->").count(), 2);
        assert!(dot.contains("label=\"0x3\\n0.95\""));
        assert_eq!(dot, export_sag_dot("img", &[root(0b11)], &nodes, 3));
    }

    #[test]
    fn empty_and_truncated() {
        assert_eq!(export_sag_dot("x", &[], &SagNodes::new(), 3), "digraph \"x\" {\n}\n");

        let kids = (0..5).map(|i| node(0b11111 & !(1 << i), 0.5 + i as f64 / 10.0)).collect();
        let nodes = SagNodes::from([(0b11111, kids)]);
        let dot = export_sag_dot("x", &[root(0b11111)], &nodes, 3);
        assert_eq!(dot.matches("->").count(), 3);
        // highest ratios first: patches 4, 3, 2 removed
        let lines: Vec<&str> = dot.lines().filter(|l| l.contains("label")).collect();
        assert!(lines[1].contains("0xf\\n0.90"));
        assert!(lines[2].contains("0x17\\n0.80"));
        assert!(lines[3].contains("0x1b\\n0.70"));
    }
}
