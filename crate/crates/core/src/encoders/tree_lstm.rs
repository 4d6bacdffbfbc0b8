//! Child-sum Tree-LSTM over the query tree, and a variant without the
//! memory cell (`h = tanh(W·x + U·Σh_child + b)`).
//!
//! Node inputs are token embeddings: an anchor is its entity token; a
//! projection is the `[P]` token with two children, a relation-token leaf
//! and the subquery; intersection, union and negation are their operator
//! tokens over their operands. Layers stack node-wise.

use ndarray::{Array1, Array2, ArrayView1, Axis};

use super::nn::{add_outer, sigmoid};
use super::params::{ParamLayout, Tensor};
use crate::linearize::{LinearizeError, Token, Vocabulary};
use crate::query::{Node, Query};

/// The query tree in post-order; the root is the last node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlatTree {
    pub tokens: Vec<Token>,
    pub children: Vec<Vec<usize>>,
}

impl FlatTree {
    pub fn from_query(q: &Query, vocab: &Vocabulary) -> Result<FlatTree, LinearizeError> {
        let mut t = FlatTree { tokens: Vec::new(), children: Vec::new() };
        t.push_node(q, vocab)?;
        Ok(t)
    }

    fn push(&mut self, token: Token, children: Vec<usize>) -> usize {
        self.tokens.push(token);
        self.children.push(children);
        self.tokens.len() - 1
    }

    fn push_node(&mut self, q: &Query, vocab: &Vocabulary) -> Result<usize, LinearizeError> {
        Ok(match q {
            Node::Anchor(e) => {
                let t = vocab.entity_token(*e).ok_or(LinearizeError::IdOutOfVocabulary { kind: "entity", id: e.0 })?;
                self.push(t, vec![])
            }
            Node::Projection(r, c) => {
                let t =
                    vocab.relation_token(*r).ok_or(LinearizeError::IdOutOfVocabulary { kind: "relation", id: r.0 })?;
                let rel = self.push(t, vec![]);
                let sub = self.push_node(c, vocab)?;
                self.push(Token::P, vec![rel, sub])
            }
            Node::Intersection(b) | Node::Union(b) => {
                let kids = b.iter().map(|c| self.push_node(c, vocab)).collect::<Result<Vec<_>, _>>()?;
                let op = if matches!(q, Node::Intersection(_)) { Token::I } else { Token::U };
                self.push(op, kids)
            }
            Node::Negation(c) => {
                let sub = self.push_node(c, vocab)?;
                self.push(Token::N, vec![sub])
            }
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Layer {
    Cell { w_iou: Tensor, u_iou: Tensor, b_iou: Tensor, w_f: Tensor, u_f: Tensor, b_f: Tensor },
    NoCell { w: Tensor, u: Tensor, b: Tensor },
}

pub fn build(layout: &mut ParamLayout, d: usize, layers: usize, memory_cell: bool) -> Vec<Layer> {
    (0..layers)
        .map(|l| {
            let mut add = |n: &str, r, c| layout.add(format!("tree.{l}.{n}"), r, c);
            if memory_cell {
                Layer::Cell {
                    w_iou: add("w_iou", d, 3 * d),
                    u_iou: add("u_iou", d, 3 * d),
                    b_iou: add("b_iou", 1, 3 * d),
                    w_f: add("w_f", d, d),
                    u_f: add("u_f", d, d),
                    b_f: add("b_f", 1, d),
                }
            } else {
                Layer::NoCell { w: add("w", d, d), u: add("u", d, d), b: add("b", 1, d) }
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
struct LayerTrace {
    x: Array2<f64>,
    /// Σ of children's hidden states per node.
    hs: Array2<f64>,
    /// `[i | o | u]` for cells, `h` for the no-cell variant.
    gates: Array2<f64>,
    /// Forget gate per (node, child), in child order.
    forget: Vec<Array2<f64>>,
    c: Array2<f64>,
    h: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct Trace {
    layers: Vec<LayerTrace>,
}

fn run(layer: &Layer, p: &[f64], tree: &FlatTree, x: Array2<f64>) -> LayerTrace {
    let n = tree.len();
    let d = x.ncols();
    let mut hs = Array2::zeros((n, d));
    let mut c = Array2::zeros((n, d));
    let mut h = Array2::<f64>::zeros((n, d));
    let mut forget = Vec::with_capacity(n);
    let mut gates;
    match *layer {
        Layer::Cell { w_iou, u_iou, b_iou, w_f, u_f, b_f } => {
            gates = Array2::zeros((n, 3 * d));
            let xw = x.dot(&w_iou.view(p)) + b_iou.vec(p);
            let xf = x.dot(&w_f.view(p)) + b_f.vec(p);
            for j in 0..n {
                let kids = &tree.children[j];
                let mut sum = Array1::zeros(d);
                for &k in kids {
                    sum += &h.row(k);
                }
                let z = &xw.row(j) + &sum.dot(&u_iou.view(p));
                let mut f = Array2::zeros((kids.len(), d));
                let mut cj = Array1::zeros(d);
                for (ci, &k) in kids.iter().enumerate() {
                    let zf = &xf.row(j) + &h.row(k).dot(&u_f.view(p));
                    let fk = zf.mapv(sigmoid);
                    cj += &(&fk * &c.row(k));
                    f.row_mut(ci).assign(&fk);
                }
                for m in 0..d {
                    let ig = sigmoid(z[m]);
                    let og = sigmoid(z[d + m]);
                    let ug = z[2 * d + m].tanh();
                    gates[[j, m]] = ig;
                    gates[[j, d + m]] = og;
                    gates[[j, 2 * d + m]] = ug;
                    cj[m] += ig * ug;
                    h[[j, m]] = og * cj[m].tanh();
                }
                c.row_mut(j).assign(&cj);
                hs.row_mut(j).assign(&sum);
                forget.push(f);
            }
        }
        Layer::NoCell { w, u, b } => {
            let xw = x.dot(&w.view(p)) + b.vec(p);
            for j in 0..n {
                let mut sum = Array1::zeros(d);
                for &k in &tree.children[j] {
                    sum += &h.row(k);
                }
                let z = &xw.row(j) + &sum.dot(&u.view(p));
                h.row_mut(j).assign(&z.mapv(f64::tanh));
                hs.row_mut(j).assign(&sum);
            }
            gates = h.clone();
        }
    }
    LayerTrace { x, hs, gates, forget, c, h }
}

fn run_backward(
    layer: &Layer,
    p: &[f64],
    tree: &FlatTree,
    tr: &LayerTrace,
    mut dh: Array2<f64>,
    grad: &mut [f64],
) -> Array2<f64> {
    let (n, d) = dh.dim();
    let mut dx = Array2::zeros((n, d));
    match *layer {
        Layer::Cell { w_iou, u_iou, b_iou, w_f, u_f, b_f } => {
            let mut dc = Array2::<f64>::zeros((n, d));
            let mut dz_iou = Array2::zeros((n, 3 * d));
            for j in (0..n).rev() {
                let kids = &tree.children[j];
                let mut dcj = dc.row(j).to_owned();
                let mut dz = Array1::zeros(3 * d);
                for m in 0..d {
                    let (ig, og, ug) = (tr.gates[[j, m]], tr.gates[[j, d + m]], tr.gates[[j, 2 * d + m]]);
                    let tc = tr.c[[j, m]].tanh();
                    let dog = dh[[j, m]] * tc;
                    dcj[m] += dh[[j, m]] * og * (1.0 - tc * tc);
                    dz[m] = dcj[m] * ug * ig * (1.0 - ig);
                    dz[d + m] = dog * og * (1.0 - og);
                    dz[2 * d + m] = dcj[m] * ig * (1.0 - ug * ug);
                }
                let dsum = dz.dot(&u_iou.view(p).t());
                add_outer(u_iou.view_mut(grad), tr.hs.row(j), dz.view());
                dz_iou.row_mut(j).assign(&dz);
                let mut dxf = Array1::<f64>::zeros(d);
                for (ci, &k) in kids.iter().enumerate() {
                    let f = tr.forget[j].row(ci);
                    let dzf = &dcj * &tr.c.row(k) * f * &f.mapv(|v| 1.0 - v);
                    let dck = &dcj * &f;
                    let mut r = dc.row_mut(k);
                    r += &dck;
                    add_outer(u_f.view_mut(grad), tr.h.row(k), dzf.view());
                    add_outer(w_f.view_mut(grad), tr.x.row(j), dzf.view());
                    b_f.vec_mut(grad).scaled_add(1.0, &dzf);
                    let dhk = &dsum + &dzf.dot(&u_f.view(p).t());
                    let mut r = dh.row_mut(k);
                    r += &dhk;
                    dxf += &dzf;
                }
                let mut r = dx.row_mut(j);
                r += &dxf.dot(&w_f.view(p).t());
            }
            super::nn::add_at_b(w_iou.view_mut(grad), tr.x.view(), dz_iou.view());
            super::nn::add_row_sums(b_iou.vec_mut(grad), dz_iou.view());
            dx += &dz_iou.dot(&w_iou.view(p).t());
        }
        Layer::NoCell { w, u, b } => {
            let mut dzs = Array2::zeros((n, d));
            for j in (0..n).rev() {
                let dz = &dh.row(j) * &tr.h.row(j).mapv(|v| 1.0 - v * v);
                let dsum = dz.dot(&u.view(p).t());
                add_outer(u.view_mut(grad), tr.hs.row(j), dz.view());
                for &k in &tree.children[j] {
                    let mut r = dh.row_mut(k);
                    r += &dsum;
                }
                dzs.row_mut(j).assign(&dz);
            }
            super::nn::add_at_b(w.view_mut(grad), tr.x.view(), dzs.view());
            b.vec_mut(grad).scaled_add(1.0, &dzs.sum_axis(Axis(0)));
            dx = dzs.dot(&w.view(p).t());
        }
    }
    dx
}

/// Runs the layers bottom-up; the readout is the root's top-layer state.
pub fn forward(layers: &[Layer], p: &[f64], tree: &FlatTree, x: Array2<f64>) -> (Array1<f64>, Trace) {
    let mut traces = Vec::with_capacity(layers.len());
    let mut cur = x;
    for layer in layers {
        let tr = run(layer, p, tree, cur);
        cur = tr.h.clone();
        traces.push(tr);
    }
    (cur.row(tree.len() - 1).to_owned(), Trace { layers: traces })
}

pub fn backward(
    layers: &[Layer],
    p: &[f64],
    tree: &FlatTree,
    tr: &Trace,
    dout: ArrayView1<f64>,
    grad: &mut [f64],
) -> Array2<f64> {
    let n = tree.len();
    let mut dh = Array2::zeros((n, dout.len()));
    dh.row_mut(n - 1).assign(&dout);
    for (l, layer) in layers.iter().enumerate().rev() {
        dh = run_backward(layer, p, tree, &tr.layers[l], dh, grad);
    }
    dh
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::build::*;

    #[test]
    fn flattening_is_post_order() {
        let v = Vocabulary::new(10, 4);
        let q = inter(vec![proj(1, anchor(2)), neg(anchor(3))]);
        let t = FlatTree::from_query(&q, &v).unwrap();
        let r1 = v.relation_token(crate::graph::RelationId(1)).unwrap();
        let e2 = v.entity_token(crate::graph::EntityId(2)).unwrap();
        let e3 = v.entity_token(crate::graph::EntityId(3)).unwrap();
        assert_eq!(t.tokens, vec![r1, e2, Token::P, e3, Token::N, Token::I]);
        assert_eq!(t.children, vec![vec![], vec![], vec![0, 1], vec![], vec![3], vec![2, 4]]);
    }
}
