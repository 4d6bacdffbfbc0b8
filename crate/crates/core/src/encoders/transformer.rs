//! Pre-norm Transformer encoder. Positions are either a learned absolute
//! table added to the input, or learned relative-distance key embeddings
//! (clipped, shared by all heads of a layer) added to attention logits.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};

use super::nn::{add_at_b, add_row_sums, layer_norm, layer_norm_backward, softmax_rows, LayerNormCache};
use super::params::{ParamLayout, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PositionKind {
    Absolute { max_len: usize },
    Relative { clip: usize },
}

#[derive(Debug, Clone, Copy)]
pub enum Positions {
    Absolute { table: Tensor },
    Relative { clip: usize },
}

#[derive(Debug, Clone, Copy)]
struct Linear {
    w: Tensor,
    b: Tensor,
}

impl Linear {
    fn new(layout: &mut ParamLayout, name: &str, i: usize, o: usize) -> Self {
        Linear { w: layout.add(format!("{name}.w"), i, o), b: layout.add(format!("{name}.b"), 1, o) }
    }

    fn forward(&self, p: &[f64], x: ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.w.view(p)) + self.b.vec(p)
    }

    fn backward(&self, p: &[f64], x: ArrayView2<f64>, dy: ArrayView2<f64>, grad: &mut [f64]) -> Array2<f64> {
        add_at_b(self.w.view_mut(grad), x, dy);
        add_row_sums(self.b.vec_mut(grad), dy);
        dy.dot(&self.w.view(p).t())
    }
}

#[derive(Debug, Clone, Copy)]
struct Norm {
    gain: Tensor,
    shift: Tensor,
}

impl Norm {
    fn new(layout: &mut ParamLayout, name: &str, d: usize) -> Self {
        Norm { gain: layout.add(format!("{name}.gain"), 1, d), shift: layout.add(format!("{name}.shift"), 1, d) }
    }
}

#[derive(Debug, Clone, Copy)]
struct Block {
    ln1: Norm,
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
    rel: Option<Tensor>,
    ln2: Norm,
    ff1: Linear,
    ff2: Linear,
}

#[derive(Debug, Clone)]
pub struct Transformer {
    blocks: Vec<Block>,
    final_norm: Norm,
    pub positions: Positions,
    heads: usize,
}

impl Transformer {
    pub fn build(layout: &mut ParamLayout, d: usize, layers: usize, heads: usize, kind: PositionKind) -> Self {
        let dk = d / heads;
        let positions = match kind {
            PositionKind::Absolute { max_len } => Positions::Absolute { table: layout.add("tf.pos", max_len, d) },
            PositionKind::Relative { clip } => Positions::Relative { clip },
        };
        let blocks = (0..layers)
            .map(|l| {
                let n = |s: &str| format!("tf.{l}.{s}");
                Block {
                    ln1: Norm::new(layout, &n("ln1"), d),
                    q: Linear::new(layout, &n("q"), d, d),
                    k: Linear::new(layout, &n("k"), d, d),
                    v: Linear::new(layout, &n("v"), d, d),
                    o: Linear::new(layout, &n("o"), d, d),
                    rel: match positions {
                        Positions::Relative { clip } => Some(layout.add(n("rel"), 2 * clip + 1, dk)),
                        Positions::Absolute { .. } => None,
                    },
                    ln2: Norm::new(layout, &n("ln2"), d),
                    ff1: Linear::new(layout, &n("ff1"), d, 4 * d),
                    ff2: Linear::new(layout, &n("ff2"), 4 * d, d),
                }
            })
            .collect();
        let final_norm = Norm::new(layout, "tf.final", d);
        Transformer { blocks, final_norm, positions, heads }
    }

    /// Layer norm gains start at one and shifts at zero.
    pub fn init_norms(&self, p: &mut [f64]) {
        let norms = self.blocks.iter().flat_map(|b| [b.ln1, b.ln2]).chain([self.final_norm]);
        for n in norms {
            p[n.gain.range()].fill(1.0);
            p[n.shift.range()].fill(0.0);
        }
    }

    pub fn max_len(&self) -> Option<usize> {
        match self.positions {
            Positions::Absolute { table } => Some(table.rows),
            Positions::Relative { .. } => None,
        }
    }
}

struct BlockTrace {
    ln1: LayerNormCache,
    a: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    probs: Vec<Array2<f64>>,
    heads_out: Array2<f64>,
    ln2: LayerNormCache,
    b: Array2<f64>,
    hidden: Array2<f64>,
}

pub struct Trace {
    blocks: Vec<BlockTrace>,
    final_ln: LayerNormCache,
    len: usize,
}

fn rel_index(i: usize, j: usize, clip: usize) -> usize {
    let dist = (j as i64 - i as i64).clamp(-(clip as i64), clip as i64);
    (dist + clip as i64) as usize
}

impl Transformer {
    fn clip(&self) -> usize {
        match self.positions {
            Positions::Relative { clip } => clip,
            Positions::Absolute { .. } => 0,
        }
    }

    fn attention(
        &self,
        blk: &Block,
        p: &[f64],
        q: &Array2<f64>,
        k: &Array2<f64>,
        v: &Array2<f64>,
    ) -> (Vec<Array2<f64>>, Array2<f64>) {
        let (t, d) = q.dim();
        let dk = d / self.heads;
        let scale = 1.0 / (dk as f64).sqrt();
        let mut probs = Vec::with_capacity(self.heads);
        let mut out = Array2::zeros((t, d));
        for h in 0..self.heads {
            let cols = s![.., h * dk..(h + 1) * dk];
            let qh = q.slice(cols);
            let mut logits = qh.dot(&k.slice(cols).t());
            if let Some(rel) = blk.rel {
                let rq = qh.dot(&rel.view(p).t());
                for i in 0..t {
                    for j in 0..t {
                        logits[[i, j]] += rq[[i, rel_index(i, j, self.clip())]];
                    }
                }
            }
            logits *= scale;
            softmax_rows(&mut logits);
            out.slice_mut(cols).assign(&logits.dot(&v.slice(cols)));
            probs.push(logits);
        }
        (probs, out)
    }

    /// Encodes `x` (T×d); the readout is position 0 after the final norm.
    pub fn forward(&self, p: &[f64], mut x: Array2<f64>) -> (Array1<f64>, Trace) {
        if let Positions::Absolute { table } = self.positions {
            x += &table.view(p).slice(s![..x.nrows(), ..]);
        }
        let len = x.nrows();
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for blk in &self.blocks {
            let (a, ln1) = layer_norm(x.view(), blk.ln1.gain.vec(p), blk.ln1.shift.vec(p));
            let q = blk.q.forward(p, a.view());
            let k = blk.k.forward(p, a.view());
            let v = blk.v.forward(p, a.view());
            let (probs, heads_out) = self.attention(blk, p, &q, &k, &v);
            let mid = &x + &blk.o.forward(p, heads_out.view());
            let (b, ln2) = layer_norm(mid.view(), blk.ln2.gain.vec(p), blk.ln2.shift.vec(p));
            let hidden = blk.ff1.forward(p, b.view()).mapv(|z| z.max(0.0));
            let out = &mid + &blk.ff2.forward(p, hidden.view());
            blocks.push(BlockTrace { ln1, a, q, k, v, probs, heads_out, ln2, b, hidden });
            x = out;
        }
        let (y, final_ln) = layer_norm(x.view(), self.final_norm.gain.vec(p), self.final_norm.shift.vec(p));
        (y.row(0).to_owned(), Trace { blocks, final_ln, len })
    }

    pub fn backward(&self, p: &[f64], tr: &Trace, dout: ArrayView1<f64>, grad: &mut [f64]) -> Array2<f64> {
        let d = dout.len();
        let t = tr.len;
        let dk = d / self.heads;
        let scale = 1.0 / (dk as f64).sqrt();
        let mut dy = Array2::zeros((t, d));
        dy.row_mut(0).assign(&dout);
        let fnorm = self.final_norm;
        let (g, sh) = (fnorm.gain, fnorm.shift);
        let gain = g.vec(p).to_owned();
        let mut dx = {
            let (dg, ds) = split_two(grad, g, sh);
            layer_norm_backward(dy.view(), &tr.final_ln, gain.view(), dg, ds)
        };
        for (blk, bt) in self.blocks.iter().zip(&tr.blocks).rev() {
            // feed-forward residual
            let dhidden = blk.ff2.backward(p, bt.hidden.view(), dx.view(), grad);
            let dpre = &dhidden * &bt.hidden.mapv(|h| if h > 0.0 { 1.0 } else { 0.0 });
            let db = blk.ff1.backward(p, bt.b.view(), dpre.view(), grad);
            let gain = blk.ln2.gain.vec(p).to_owned();
            let dmid = {
                let (dg, ds) = split_two(grad, blk.ln2.gain, blk.ln2.shift);
                layer_norm_backward(db.view(), &bt.ln2, gain.view(), dg, ds)
            } + &dx;
            // attention residual
            let dheads = blk.o.backward(p, bt.heads_out.view(), dmid.view(), grad);
            let mut dq = Array2::zeros((t, d));
            let mut dk_ = Array2::zeros((t, d));
            let mut dv = Array2::zeros((t, d));
            for h in 0..self.heads {
                let cols = s![.., h * dk..(h + 1) * dk];
                let pr = &bt.probs[h];
                let doh = dheads.slice(cols);
                let dp = doh.dot(&bt.v.slice(cols).t());
                dv.slice_mut(cols).assign(&pr.t().dot(&doh));
                let mut ds = pr * &dp;
                for i in 0..t {
                    let row_sum: f64 = ds.row(i).sum();
                    for j in 0..t {
                        ds[[i, j]] -= pr[[i, j]] * row_sum;
                    }
                }
                ds *= scale;
                let qh = bt.q.slice(cols);
                let mut dqh = ds.dot(&bt.k.slice(cols));
                dk_.slice_mut(cols).assign(&ds.t().dot(&qh));
                if let Some(rel) = blk.rel {
                    let r = rel.view(p);
                    let mut dr = Array2::<f64>::zeros(r.dim());
                    for i in 0..t {
                        for j in 0..t {
                            let idx = rel_index(i, j, self.clip());
                            let w = ds[[i, j]];
                            dqh.row_mut(i).scaled_add(w, &r.row(idx));
                            dr.row_mut(idx).scaled_add(w, &qh.row(i));
                        }
                    }
                    let mut g = rel.view_mut(grad);
                    g += &dr;
                }
                dq.slice_mut(cols).assign(&dqh);
            }
            let da = blk.q.backward(p, bt.a.view(), dq.view(), grad)
                + blk.k.backward(p, bt.a.view(), dk_.view(), grad)
                + blk.v.backward(p, bt.a.view(), dv.view(), grad);
            let gain = blk.ln1.gain.vec(p).to_owned();
            dx = {
                let (dg, ds) = split_two(grad, blk.ln1.gain, blk.ln1.shift);
                layer_norm_backward(da.view(), &bt.ln1, gain.view(), dg, ds)
            } + &dmid;
        }
        if let Positions::Absolute { table } = self.positions {
            let mut g = table.view_mut(grad);
            let mut rows = g.slice_mut(s![..t, ..]);
            rows += &dx;
        }
        dx
    }
}

/// Mutable views of two disjoint 1×n tensors, the second placed after the first.
fn split_two(
    grad: &mut [f64],
    a: Tensor,
    b: Tensor,
) -> (ndarray::ArrayViewMut1<'_, f64>, ndarray::ArrayViewMut1<'_, f64>) {
    debug_assert!(a.range().end <= b.offset);
    let (lo, hi) = grad.split_at_mut(b.offset);
    (ndarray::ArrayViewMut1::from(&mut lo[a.range()]), ndarray::ArrayViewMut1::from(&mut hi[..b.len()]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_index_clips() {
        assert_eq!(rel_index(0, 0, 2), 2);
        assert_eq!(rel_index(0, 5, 2), 4);
        assert_eq!(rel_index(5, 0, 2), 0);
        assert_eq!(rel_index(3, 2, 2), 1);
    }
}
