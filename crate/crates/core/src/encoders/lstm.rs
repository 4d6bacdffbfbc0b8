//! Stacked bidirectional LSTM. Each direction has width d/2; a layer's
//! output at position t is `[h_fwd(t) ; h_bwd(t)]`.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::nn::{add_at_b, add_outer, add_row_sums, sigmoid};
use super::params::{ParamLayout, Tensor};

#[derive(Debug, Clone, Copy)]
pub struct Direction {
    w: Tensor,
    u: Tensor,
    b: Tensor,
}

#[derive(Debug, Clone, Copy)]
pub struct Layer {
    fwd: Direction,
    bwd: Direction,
}

pub fn build(layout: &mut ParamLayout, d: usize, layers: usize) -> Vec<Layer> {
    let h = d / 2;
    (0..layers)
        .map(|l| {
            let mut dir = |tag: &str| Direction {
                w: layout.add(format!("lstm.{l}.{tag}.w"), d, 4 * h),
                u: layout.add(format!("lstm.{l}.{tag}.u"), h, 4 * h),
                b: layout.add(format!("lstm.{l}.{tag}.b"), 1, 4 * h),
            };
            Layer { fwd: dir("fwd"), bwd: dir("bwd") }
        })
        .collect()
}

#[derive(Debug, Clone)]
struct DirTrace {
    /// Activated gates `[i | f | g | o]` per position.
    gates: Array2<f64>,
    c: Array2<f64>,
    h: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct Trace {
    inputs: Vec<Array2<f64>>,
    dirs: Vec<(DirTrace, DirTrace)>,
}

fn order(t: usize, reverse: bool) -> impl DoubleEndedIterator<Item = usize> + Clone {
    (0..t).map(move |s| if reverse { t - 1 - s } else { s })
}

fn run(dir: &Direction, p: &[f64], x: ArrayView2<f64>, reverse: bool) -> DirTrace {
    let h = dir.u.rows;
    let t = x.nrows();
    let zx = x.dot(&dir.w.view(p)) + dir.b.vec(p);
    let u = dir.u.view(p);
    let mut gates = Array2::zeros((t, 4 * h));
    let mut c = Array2::zeros((t, h));
    let mut hs = Array2::zeros((t, h));
    let mut hp = Array1::zeros(h);
    let mut cp = Array1::<f64>::zeros(h);
    for i in order(t, reverse) {
        let z = &zx.row(i) + &hp.dot(&u);
        for k in 0..h {
            let ig = sigmoid(z[k]);
            let fg = sigmoid(z[h + k]);
            let g = z[2 * h + k].tanh();
            let og = sigmoid(z[3 * h + k]);
            let cn = fg * cp[k] + ig * g;
            gates[[i, k]] = ig;
            gates[[i, h + k]] = fg;
            gates[[i, 2 * h + k]] = g;
            gates[[i, 3 * h + k]] = og;
            c[[i, k]] = cn;
            hs[[i, k]] = og * cn.tanh();
        }
        hp = hs.row(i).to_owned();
        cp = c.row(i).to_owned();
    }
    DirTrace { gates, c, h: hs }
}

fn run_backward(
    dir: &Direction,
    p: &[f64],
    tr: &DirTrace,
    x: ArrayView2<f64>,
    dh_out: ArrayView2<f64>,
    reverse: bool,
    grad: &mut [f64],
) -> Array2<f64> {
    let h = dir.u.rows;
    let t = x.nrows();
    let u = dir.u.view(p);
    let mut dz = Array2::zeros((t, 4 * h));
    let mut dh_next = Array1::<f64>::zeros(h);
    let mut dc_next = Array1::<f64>::zeros(h);
    let steps: Vec<usize> = order(t, reverse).collect();
    for s in (0..t).rev() {
        let i = steps[s];
        let prev = s.checked_sub(1).map(|q| steps[q]);
        for k in 0..h {
            let (ig, fg, g, og) =
                (tr.gates[[i, k]], tr.gates[[i, h + k]], tr.gates[[i, 2 * h + k]], tr.gates[[i, 3 * h + k]]);
            let tc = tr.c[[i, k]].tanh();
            let c_prev = prev.map_or(0.0, |q| tr.c[[q, k]]);
            let dh = dh_out[[i, k]] + dh_next[k];
            let dog = dh * tc;
            let dc = dh * og * (1.0 - tc * tc) + dc_next[k];
            dc_next[k] = dc * fg;
            dz[[i, k]] = dc * g * ig * (1.0 - ig);
            dz[[i, h + k]] = dc * c_prev * fg * (1.0 - fg);
            dz[[i, 2 * h + k]] = dc * ig * (1.0 - g * g);
            dz[[i, 3 * h + k]] = dog * og * (1.0 - og);
        }
        dh_next = dz.row(i).dot(&u.t());
        if let Some(q) = prev {
            add_outer(dir.u.view_mut(grad), tr.h.row(q), dz.row(i));
        }
    }
    add_at_b(dir.w.view_mut(grad), x, dz.view());
    add_row_sums(dir.b.vec_mut(grad), dz.view());
    dz.dot(&dir.w.view(p).t())
}

/// Runs all layers over `x` (T×d) and reads out position 0 of the top layer.
pub fn forward(layers: &[Layer], p: &[f64], x: Array2<f64>) -> (Array1<f64>, Trace) {
    let mut inputs = Vec::with_capacity(layers.len());
    let mut dirs = Vec::with_capacity(layers.len());
    let mut cur = x;
    for layer in layers {
        let f = run(&layer.fwd, p, cur.view(), false);
        let b = run(&layer.bwd, p, cur.view(), true);
        let next = ndarray::concatenate(Axis(1), &[f.h.view(), b.h.view()]).expect("equal heights");
        inputs.push(std::mem::replace(&mut cur, next));
        dirs.push((f, b));
    }
    (cur.row(0).to_owned(), Trace { inputs, dirs })
}

/// Backpropagates `dout` (gradient of the readout) and returns the gradient
/// with respect to the input rows.
pub fn backward(layers: &[Layer], p: &[f64], tr: &Trace, dout: ArrayView1<f64>, grad: &mut [f64]) -> Array2<f64> {
    let t = tr.inputs[0].nrows();
    let d = dout.len();
    let h = d / 2;
    let mut dy = Array2::zeros((t, d));
    dy.row_mut(0).assign(&dout);
    for (l, layer) in layers.iter().enumerate().rev() {
        let x = tr.inputs[l].view();
        let (f, b) = &tr.dirs[l];
        let dxf = run_backward(&layer.fwd, p, f, x, dy.slice(s![.., ..h]), false, grad);
        let dxb = run_backward(&layer.bwd, p, b, x, dy.slice(s![.., h..]), true, grad);
        dy = dxf + dxb;
    }
    dy
}
