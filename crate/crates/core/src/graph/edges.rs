use std::collections::HashMap;

use super::attention::mm_context;
use super::nodes::NodeSet;
use super::structure::{distance_bucket, mention_distance, EdgeFamily, EdgeSpec, NodeLayout};
use super::GraphParams;
use crate::autodiff::{Tape, Tensor, Var};
use crate::corpus::Document;
use crate::error::{Error, Result};

/// Reduced edge representations laid out as an `n*n x edge_dim` matrix, row
/// `i*n + j` holding cell `(i, j)`.
#[derive(Clone, Debug)]
pub struct EdgeGraph {
    pub n: usize,
    pub cells: Var,
    pub mask: Vec<bool>,
}

/// Raw features `x_z` of every edge of `edges` reduced by `W_z` and placed
/// symmetrically into the edge matrix.
pub fn build_edges(
    tape: &mut Tape,
    params: &GraphParams,
    doc: &Document,
    nodes: &NodeSet,
    edges: &[EdgeSpec],
) -> Result<EdgeGraph> {
    let layout = nodes.layout;
    let n = layout.len();
    let mut transposed: HashMap<usize, Var> = HashMap::new();
    let mut reduced = Vec::new();
    let mut upper = Vec::new();
    let mut lower = Vec::new();
    for family in EdgeFamily::ALL {
        let group: Vec<&EdgeSpec> = edges.iter().filter(|e| e.family == family).collect();
        if group.is_empty() {
            continue;
        }
        let weight = params.reductions[family.index()].ok_or_else(|| {
            Error::InvalidArgument(format!("no reduction layer for {family} edges"))
        })?;
        let (left, right): (Vec<usize>, Vec<usize>) = group
            .iter()
            .map(|e| match family {
                EdgeFamily::ME => (e.b, e.a),
                _ => (e.a, e.b),
            })
            .unzip();
        let l = tape.select_rows(nodes.nodes, &left)?;
        let r = tape.select_rows(nodes.nodes, &right)?;
        let mut parts = vec![l, r];
        match family {
            EdgeFamily::MM => {
                if params.options.mm_context {
                    let mut ctx = Vec::with_capacity(group.len());
                    for e in &group {
                        ctx.push(pair_context(tape, params, doc, nodes, &layout, e, &mut transposed)?);
                    }
                    parts.push(tape.stack_rows(&ctx)?);
                }
                if let Some(table) = params.mention_distance {
                    let buckets: Vec<usize> = group
                        .iter()
                        .map(|e| {
                            let i = layout.node(e.a).1;
                            let j = layout.node(e.b).1;
                            distance_bucket(mention_distance(doc, i, j))
                        })
                        .collect();
                    parts.push(tape.lookup(table, &buckets)?);
                }
            }
            EdgeFamily::SS => {
                if let Some(table) = params.sentence_distance {
                    let buckets: Vec<usize> = group
                        .iter()
                        .map(|e| distance_bucket(layout.node(e.b).1.abs_diff(layout.node(e.a).1)))
                        .collect();
                    parts.push(tape.lookup(table, &buckets)?);
                }
            }
            _ => {}
        }
        let x = tape.concat(&parts)?;
        let w = tape.param(weight);
        reduced.push(tape.matmul(x, w)?);
        for e in group {
            upper.push(e.a * n + e.b);
            lower.push(e.b * n + e.a);
        }
    }
    let mut mask = vec![false; n * n];
    for (&u, &l) in upper.iter().zip(&lower) {
        mask[u] = true;
        mask[l] = true;
    }
    let cells = if reduced.is_empty() {
        tape.constant(Tensor::zeros(&[n * n, params.options.edge_dim]))
    } else {
        let all = tape.stack_rows(&reduced)?;
        let k = upper.len();
        let rows: Vec<usize> = (0..k).chain(0..k).collect();
        let both = tape.select_rows(all, &rows)?;
        upper.extend(lower);
        tape.scatter_rows(both, &upper, n * n)?
    };
    Ok(EdgeGraph { n, cells, mask })
}

/// Attention context of a mention-mention edge; mentions in different
/// sentences get a zero context.
fn pair_context(
    tape: &mut Tape,
    params: &GraphParams,
    doc: &Document,
    nodes: &NodeSet,
    layout: &NodeLayout,
    e: &EdgeSpec,
    transposed: &mut HashMap<usize, Var>,
) -> Result<Var> {
    let (i, j) = (layout.node(e.a).1, layout.node(e.b).1);
    let (mi, mj) = (&doc.mentions[i], &doc.mentions[j]);
    if mi.sentence != mj.sentence {
        return Ok(tape.constant(Tensor::zeros(&[1, params.options.word_dim])));
    }
    let h = nodes.sentences[mi.sentence];
    let h_t = match transposed.get(&mi.sentence) {
        Some(&v) => v,
        None => {
            let v = tape.transpose(h);
            transposed.insert(mi.sentence, v);
            v
        }
    };
    let ui = tape.select_rows(nodes.word_parts, &[e.a])?;
    let uj = tape.select_rows(nodes.word_parts, &[e.b])?;
    Ok(mm_context(tape, h, h_t, (ui, mi.tokens()), (uj, mj.tokens()))?.context)
}

/// `W_EE [n_head; n_tail]` for each entity pair, one row per pair.
pub fn entity_pair_features(
    tape: &mut Tape,
    params: &GraphParams,
    nodes: &NodeSet,
    pairs: &[(usize, usize)],
) -> Result<Var> {
    let weight = params.reductions[EdgeFamily::EE.index()]
        .ok_or_else(|| Error::InvalidArgument("no reduction layer for EE edges".into()))?;
    let heads: Vec<usize> = pairs.iter().map(|p| nodes.layout.entity(p.0)).collect();
    let tails: Vec<usize> = pairs.iter().map(|p| nodes.layout.entity(p.1)).collect();
    let h = tape.select_rows(nodes.nodes, &heads)?;
    let t = tape.select_rows(nodes.nodes, &tails)?;
    let x = tape.concat(&[h, t])?;
    let w = tape.param(weight);
    tape.matmul(x, w)
}
