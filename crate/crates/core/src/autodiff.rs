//! Reverse-mode automatic differentiation on a flat tape of `f64` matrices.
//!
//! Every value is a dense 2-D array; scalars are `[1 x 1]`, row vectors are
//! `[1 x d]`. Operations append nodes to a [`Graph`] and return lightweight
//! [`Tensor`] handles. [`Graph::backward`] walks the tape in reverse and
//! accumulates gradients for every node, so parameters, activations, and
//! intermediate values can all be differentiated against a scalar loss.
//!
//! The tape is rebuilt for every forward pass. That keeps each op's backward
//! rule local and lets autoregressive loops (where outputs feed back into the
//! graph) differentiate through the whole chain with no special casing.

use std::cell::RefCell;

use ndarray::{concatenate, s, Array2, Axis};

/// Handle to a node in a [`Graph`]. Only valid for the graph that created it.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Tensor(usize);

/// Sink receiving (parent id, gradient contribution) pairs during backward.
type GradSink<'a> = dyn FnMut(usize, Array2<f64>) + 'a;

type BackwardFn = Box<dyn Fn(&Array2<f64>, &mut GradSink)>;

struct Node {
    value: Array2<f64>,
    backward: Option<BackwardFn>,
}

/// Tape of nodes for one forward pass.
#[derive(Default)]
pub struct Graph {
    nodes: RefCell<Vec<Node>>,
}

/// Per-node gradients produced by [`Graph::backward`].
pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
}

impl Gradients {
    /// Gradient of the loss w.r.t. `t`, or `None` if the loss does not depend on it.
    pub fn get(&self, t: Tensor) -> Option<&Array2<f64>> {
        self.grads.get(t.0).and_then(|g| g.as_ref())
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Array2<f64>, backward: Option<BackwardFn>) -> Tensor {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, backward });
        Tensor(nodes.len() - 1)
    }

    /// Clone of the node's value.
    pub fn value(&self, t: Tensor) -> Array2<f64> {
        self.nodes.borrow()[t.0].value.clone()
    }

    /// Value of a `[1 x 1]` node as a scalar.
    pub fn scalar(&self, t: Tensor) -> f64 {
        let nodes = self.nodes.borrow();
        let v = &nodes[t.0].value;
        assert_eq!(v.dim(), (1, 1), "scalar() on non-scalar node");
        v[[0, 0]]
    }

    pub fn shape(&self, t: Tensor) -> (usize, usize) {
        self.nodes.borrow()[t.0].value.dim()
    }

    fn with<R>(&self, t: Tensor, f: impl FnOnce(&Array2<f64>) -> R) -> R {
        f(&self.nodes.borrow()[t.0].value)
    }

    /// Leaf node with no gradient consumers of its own inputs.
    pub fn constant(&self, value: Array2<f64>) -> Tensor {
        self.push(value, None)
    }

    /// Leaf node intended as a trainable parameter. Identical to
    /// [`Graph::constant`] on the tape; the distinction lives in the caller,
    /// which reads this node's gradient after backward.
    pub fn param(&self, value: Array2<f64>) -> Tensor {
        self.push(value, None)
    }

    pub fn scalar_constant(&self, v: f64) -> Tensor {
        self.constant(Array2::from_elem((1, 1), v))
    }

    /// Element-wise sum of two same-shape tensors.
    pub fn add(&self, a: Tensor, b: Tensor) -> Tensor {
        let v = self.with(a, |va| self.with(b, |vb| va + vb));
        self.push(
            v,
            Some(Box::new(move |g, sink| {
                sink(a.0, g.clone());
                sink(b.0, g.clone());
            })),
        )
    }

    /// `a [n x d] + b [1 x d]` broadcast over rows.
    pub fn add_row(&self, a: Tensor, b: Tensor) -> Tensor {
        let v = self.with(a, |va| self.with(b, |vb| va + &vb.row(0)));
        self.push(
            v,
            Some(Box::new(move |g, sink| {
                sink(a.0, g.clone());
                sink(b.0, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
            })),
        )
    }

    /// Element-wise difference of two same-shape tensors.
    pub fn sub(&self, a: Tensor, b: Tensor) -> Tensor {
        let v = self.with(a, |va| self.with(b, |vb| va - vb));
        self.push(
            v,
            Some(Box::new(move |g, sink| {
                sink(a.0, g.clone());
                sink(b.0, -g);
            })),
        )
    }

    /// `a [n x d] - b [1 x d]` broadcast over rows.
    pub fn sub_row(&self, a: Tensor, b: Tensor) -> Tensor {
        let v = self.with(a, |va| self.with(b, |vb| va - &vb.row(0)));
        self.push(
            v,
            Some(Box::new(move |g, sink| {
                sink(a.0, g.clone());
                sink(b.0, -g.sum_axis(Axis(0)).insert_axis(Axis(0)));
            })),
        )
    }

    /// Hadamard product.
    pub fn mul(&self, a: Tensor, b: Tensor) -> Tensor {
        let va = self.value(a);
        let vb = self.value(b);
        let v = &va * &vb;
        self.push(
            v,
            Some(Box::new(move |g, sink| {
                sink(a.0, g * &vb);
                sink(b.0, g * &va);
            })),
        )
    }

    /// Multiply by a compile-time constant scalar.
    pub fn scale(&self, a: Tensor, c: f64) -> Tensor {
        let v = self.with(a, |va| va * c);
        self.push(v, Some(Box::new(move |g, sink| sink(a.0, g * c))))
    }

    /// `a [n x k] . b [k x m]`.
    pub fn matmul(&self, a: Tensor, b: Tensor) -> Tensor {
        let va = self.value(a);
        let vb = self.value(b);
        let v = va.dot(&vb);
        self.push(
            v,
            Some(Box::new(move |g, sink| {
                sink(a.0, g.dot(&vb.t()));
                sink(b.0, va.t().dot(g));
            })),
        )
    }

    /// `a [n x k] . b^T [k x m]` for `b [m x k]`.
    pub fn matmul_nt(&self, a: Tensor, b: Tensor) -> Tensor {
        let va = self.value(a);
        let vb = self.value(b);
        let v = va.dot(&vb.t());
        self.push(
            v,
            Some(Box::new(move |g, sink| {
                sink(a.0, g.dot(&vb));
                sink(b.0, g.t().dot(&va));
            })),
        )
    }

    /// Smooth GELU (tanh approximation), applied element-wise.
    pub fn gelu(&self, a: Tensor) -> Tensor {
        const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
        const K: f64 = 0.044_715;
        let va = self.value(a);
        let v = va.mapv(|x| 0.5 * x * (1.0 + (C * (x + K * x * x * x)).tanh()));
        self.push(
            v,
            Some(Box::new(move |g, sink| {
                let dv = va.mapv(|x| {
                    let u = C * (x + K * x * x * x);
                    let t = u.tanh();
                    let sech2 = 1.0 - t * t;
                    0.5 * (1.0 + t) + 0.5 * x * sech2 * C * (1.0 + 3.0 * K * x * x)
                });
                sink(a.0, g * &dv);
            })),
        )
    }

    /// Row-wise softmax.
    pub fn softmax_rows(&self, a: Tensor) -> Tensor {
        let va = self.value(a);
        let mut v = va;
        for mut row in v.rows_mut() {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            row.mapv_inplace(|x| (x - m).exp());
            let s: f64 = row.sum();
            row.mapv_inplace(|x| x / s);
        }
        let y = v.clone();
        self.push(
            v,
            Some(Box::new(move |g, sink| {
                let gy = g * &y;
                let dot = gy.sum_axis(Axis(1)).insert_axis(Axis(1));
                sink(a.0, &gy - &(&y * &dot));
            })),
        )
    }

    /// Row-wise layer normalization with learned gain and bias.
    pub fn layer_norm(&self, a: Tensor, gamma: Tensor, beta: Tensor, eps: f64) -> Tensor {
        let va = self.value(a);
        let vg = self.value(gamma);
        let vb = self.value(beta);
        let mean = va.mean_axis(Axis(1)).unwrap().insert_axis(Axis(1));
        let centered = &va - &mean;
        let var = centered.mapv(|x| x * x).mean_axis(Axis(1)).unwrap();
        let inv_std = var.mapv(|v| 1.0 / (v + eps).sqrt()).insert_axis(Axis(1));
        let xhat = &centered * &inv_std;
        let v = &xhat * &vg.row(0) + &vb.row(0);
        self.push(
            v,
            Some(Box::new(move |g, sink| {
                sink(gamma.0, (g * &xhat).sum_axis(Axis(0)).insert_axis(Axis(0)));
                sink(beta.0, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                let dxhat = g * &vg.row(0);
                let m1 = dxhat.mean_axis(Axis(1)).unwrap().insert_axis(Axis(1));
                let m2 = (&dxhat * &xhat)
                    .mean_axis(Axis(1))
                    .unwrap()
                    .insert_axis(Axis(1));
                let dx = (&dxhat - &m1 - &(&xhat * &m2)) * &inv_std;
                sink(a.0, dx);
            })),
        )
    }

    /// Gather rows of `table [V x e]` at `ids`, producing `[ids.len() x e]`.
    pub fn embedding(&self, table: Tensor, ids: &[usize]) -> Tensor {
        let vt = self.value(table);
        let (vocab, dim) = vt.dim();
        for &id in ids {
            assert!(id < vocab, "embedding id {id} out of range {vocab}");
        }
        let mut v = Array2::zeros((ids.len(), dim));
        for (i, &id) in ids.iter().enumerate() {
            v.row_mut(i).assign(&vt.row(id));
        }
        let ids = ids.to_vec();
        self.push(
            v,
            Some(Box::new(move |g, sink| {
                let mut dt = Array2::zeros((vocab, dim));
                for (i, &id) in ids.iter().enumerate() {
                    let mut row = dt.row_mut(id);
                    row += &g.row(i);
                }
                sink(table.0, dt);
            })),
        )
    }

    /// Stack tensors vertically (all must share the column count).
    pub fn concat_rows(&self, parts: &[Tensor]) -> Tensor {
        assert!(!parts.is_empty());
        let values: Vec<Array2<f64>> = parts.iter().map(|&p| self.value(p)).collect();
        let views: Vec<_> = values.iter().map(|v| v.view()).collect();
        let v = concatenate(Axis(0), &views).expect("concat_rows shape mismatch");
        let parts = parts.to_vec();
        let row_counts: Vec<usize> = values.iter().map(|v| v.nrows()).collect();
        self.push(
            v,
            Some(Box::new(move |g, sink| {
                let mut r = 0;
                for (&p, &n) in parts.iter().zip(&row_counts) {
                    sink(p.0, g.slice(s![r..r + n, ..]).to_owned());
                    r += n;
                }
            })),
        )
    }

    /// Stack tensors horizontally (all must share the row count).
    pub fn concat_cols(&self, parts: &[Tensor]) -> Tensor {
        assert!(!parts.is_empty());
        let values: Vec<Array2<f64>> = parts.iter().map(|&p| self.value(p)).collect();
        let views: Vec<_> = values.iter().map(|v| v.view()).collect();
        let v = concatenate(Axis(1), &views).expect("concat_cols shape mismatch");
        let parts = parts.to_vec();
        let col_counts: Vec<usize> = values.iter().map(|v| v.ncols()).collect();
        self.push(
            v,
            Some(Box::new(move |g, sink| {
                let mut c = 0;
                for (&p, &n) in parts.iter().zip(&col_counts) {
                    sink(p.0, g.slice(s![.., c..c + n]).to_owned());
                    c += n;
                }
            })),
        )
    }

    /// Rows `r0..r1` of `a`.
    pub fn slice_rows(&self, a: Tensor, r0: usize, r1: usize) -> Tensor {
        let (n, d) = self.shape(a);
        assert!(r0 < r1 && r1 <= n, "slice_rows {r0}..{r1} of {n}");
        let v = self.with(a, |va| va.slice(s![r0..r1, ..]).to_owned());
        self.push(
            v,
            Some(Box::new(move |g, sink| {
                let mut da = Array2::zeros((n, d));
                da.slice_mut(s![r0..r1, ..]).assign(g);
                sink(a.0, da);
            })),
        )
    }

    /// Columns `c0..c1` of `a`.
    pub fn slice_cols(&self, a: Tensor, c0: usize, c1: usize) -> Tensor {
        let (n, d) = self.shape(a);
        assert!(c0 < c1 && c1 <= d, "slice_cols {c0}..{c1} of {d}");
        let v = self.with(a, |va| va.slice(s![.., c0..c1]).to_owned());
        self.push(
            v,
            Some(Box::new(move |g, sink| {
                let mut da = Array2::zeros((n, d));
                da.slice_mut(s![.., c0..c1]).assign(g);
                sink(a.0, da);
            })),
        )
    }

    /// Repeat a `[1 x d]` row `k` times into `[k x d]`.
    pub fn repeat_rows(&self, a: Tensor, k: usize) -> Tensor {
        let va = self.value(a);
        assert_eq!(va.nrows(), 1, "repeat_rows expects a [1 x d] input");
        let d = va.ncols();
        let mut v = Array2::zeros((k, d));
        for mut row in v.rows_mut() {
            row.assign(&va.row(0));
        }
        self.push(
            v,
            Some(Box::new(move |g, sink| {
                sink(a.0, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
            })),
        )
    }

    /// Row-wise select: row i comes from `b` where `mask[i]`, else from `a`.
    pub fn select_rows(&self, a: Tensor, b: Tensor, mask: &[bool]) -> Tensor {
        let va = self.value(a);
        let vb = self.value(b);
        assert_eq!(va.dim(), vb.dim());
        assert_eq!(mask.len(), va.nrows());
        let mut v = va;
        for (i, &m) in mask.iter().enumerate() {
            if m {
                v.row_mut(i).assign(&vb.row(i));
            }
        }
        let mask = mask.to_vec();
        self.push(
            v,
            Some(Box::new(move |g, sink| {
                let mut da = g.clone();
                let mut db = Array2::zeros(g.dim());
                for (i, &m) in mask.iter().enumerate() {
                    if m {
                        db.row_mut(i).assign(&g.row(i));
                        da.row_mut(i).fill(0.0);
                    }
                }
                sink(a.0, da);
                sink(b.0, db);
            })),
        )
    }

    /// Sum of all elements, as `[1 x 1]`.
    pub fn sum_all(&self, a: Tensor) -> Tensor {
        let (n, d) = self.shape(a);
        let v = self.with(a, |va| Array2::from_elem((1, 1), va.sum()));
        self.push(
            v,
            Some(Box::new(move |g, sink| {
                sink(a.0, Array2::from_elem((n, d), g[[0, 0]]));
            })),
        )
    }

    /// Mean of all elements, as `[1 x 1]`.
    pub fn mean_all(&self, a: Tensor) -> Tensor {
        let (n, d) = self.shape(a);
        let count = (n * d) as f64;
        let v = self.with(a, |va| Array2::from_elem((1, 1), va.sum() / count));
        self.push(
            v,
            Some(Box::new(move |g, sink| {
                sink(a.0, Array2::from_elem((n, d), g[[0, 0]] / count));
            })),
        )
    }

    /// Column-wise mean over rows: `[n x d] -> [1 x d]`.
    pub fn mean_rows(&self, a: Tensor) -> Tensor {
        let (n, _) = self.shape(a);
        let v = self.with(a, |va| {
            va.mean_axis(Axis(0)).unwrap().insert_axis(Axis(0))
        });
        self.push(
            v,
            Some(Box::new(move |g, sink| {
                let mut da = Array2::zeros((n, g.ncols()));
                for mut row in da.rows_mut() {
                    row.assign(&(&g.row(0) / n as f64));
                }
                sink(a.0, da);
            })),
        )
    }

    /// Element-wise absolute value (subgradient 0 at 0).
    pub fn abs(&self, a: Tensor) -> Tensor {
        let va = self.value(a);
        let v = va.mapv(f64::abs);
        self.push(
            v,
            Some(Box::new(move |g, sink| {
                sink(a.0, g * &va.mapv(f64::signum).mapv(|s| if s == 0.0 { 0.0 } else { s }));
            })),
        )
    }

    /// Clamp into `[lo, hi]`; gradient passes only through the interior.
    pub fn clamp(&self, a: Tensor, lo: f64, hi: f64) -> Tensor {
        let va = self.value(a);
        let v = va.mapv(|x| x.clamp(lo, hi));
        self.push(
            v,
            Some(Box::new(move |g, sink| {
                let gate = va.mapv(|x| if x > lo && x < hi { 1.0 } else { 0.0 });
                sink(a.0, g * &gate);
            })),
        )
    }

    /// Mean token-level cross-entropy of `logits [n x V]` against `targets`,
    /// restricted to positions where `active` is true. Zero when no position
    /// is active.
    pub fn cross_entropy_mean(&self, logits: Tensor, targets: &[usize], active: &[bool]) -> Tensor {
        let vl = self.value(logits);
        let (n, vocab) = vl.dim();
        assert_eq!(targets.len(), n);
        assert_eq!(active.len(), n);
        let mut probs = vl.clone();
        for mut row in probs.rows_mut() {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            row.mapv_inplace(|x| (x - m).exp());
            let s: f64 = row.sum();
            row.mapv_inplace(|x| x / s);
        }
        let count = active.iter().filter(|&&a| a).count();
        let mut total = 0.0;
        for i in 0..n {
            if active[i] {
                assert!(targets[i] < vocab);
                total -= probs[[i, targets[i]]].max(1e-300).ln();
            }
        }
        let value = if count == 0 { 0.0 } else { total / count as f64 };
        let targets = targets.to_vec();
        let active = active.to_vec();
        self.push(
            Array2::from_elem((1, 1), value),
            Some(Box::new(move |g, sink| {
                if count == 0 {
                    return;
                }
                let scale = g[[0, 0]] / count as f64;
                let mut dl = Array2::zeros((n, vocab));
                for i in 0..n {
                    if active[i] {
                        let mut row = dl.row_mut(i);
                        row.assign(&(&probs.row(i) * scale));
                        row[targets[i]] -= scale;
                    }
                }
                sink(logits.0, dl);
            })),
        )
    }

    /// Backpropagate from a `[1 x 1]` loss node through the whole tape.
    pub fn backward(&self, loss: Tensor) -> Gradients {
        let nodes = self.nodes.borrow();
        assert_eq!(nodes[loss.0].value.dim(), (1, 1), "loss must be scalar");
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; nodes.len()];
        grads[loss.0] = Some(Array2::from_elem((1, 1), 1.0));
        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            if let Some(back) = nodes[id].backward.as_ref() {
                back(&g, &mut |pid, contrib| {
                    match &mut grads[pid] {
                        Some(acc) => *acc += &contrib,
                        slot => *slot = Some(contrib),
                    }
                });
            }
            grads[id] = Some(g);
        }
        Gradients { grads }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn rand_mat(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Array2<f64> {
        Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0))
    }

    /// Central finite differences against the analytic gradient for an
    /// arbitrary scalar-valued graph builder.
    fn check_grads(build: impl Fn(&Graph, &[Tensor]) -> Tensor, inputs: &[Array2<f64>], tol: f64) {
        let g = Graph::new();
        let handles: Vec<Tensor> = inputs.iter().map(|a| g.param(a.clone())).collect();
        let loss = build(&g, &handles);
        let grads = g.backward(loss);

        let h = 1e-5;
        for (k, base) in inputs.iter().enumerate() {
            let analytic = grads
                .get(handles[k])
                .cloned()
                .unwrap_or_else(|| Array2::zeros(base.dim()));
            for i in 0..base.nrows() {
                for j in 0..base.ncols() {
                    let eval = |delta: f64| {
                        let mut perturbed: Vec<Array2<f64>> = inputs.to_vec();
                        perturbed[k][[i, j]] += delta;
                        let g2 = Graph::new();
                        let hs: Vec<Tensor> =
                            perturbed.iter().map(|a| g2.param(a.clone())).collect();
                        let l = build(&g2, &hs);
                        g2.scalar(l)
                    };
                    let numeric = (eval(h) - eval(-h)) / (2.0 * h);
                    let a = analytic[[i, j]];
                    let denom = a.abs().max(numeric.abs()).max(1e-6);
                    assert!(
                        (a - numeric).abs() / denom < tol,
                        "input {k} [{i},{j}]: analytic {a} vs numeric {numeric}"
                    );
                }
            }
        }
    }

    #[test]
    fn matmul_and_bias_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = rand_mat(&mut rng, 3, 4);
        let w = rand_mat(&mut rng, 4, 5);
        let b = rand_mat(&mut rng, 1, 5);
        check_grads(
            |g, t| {
                let y = g.add_row(g.matmul(t[0], t[1]), t[2]);
                g.mean_all(g.mul(y, y))
            },
            &[x, w, b],
            1e-6,
        );
    }

    #[test]
    fn matmul_nt_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = rand_mat(&mut rng, 3, 4);
        let b = rand_mat(&mut rng, 6, 4);
        check_grads(
            |g, t| g.mean_all(g.abs(g.matmul_nt(t[0], t[1]))),
            &[a, b],
            1e-6,
        );
    }

    #[test]
    fn gelu_softmax_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = rand_mat(&mut rng, 4, 6);
        check_grads(
            |g, t| {
                let y = g.softmax_rows(g.gelu(t[0]));
                g.sum_all(g.mul(y, y))
            },
            &[x],
            1e-6,
        );
    }

    #[test]
    fn layer_norm_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = rand_mat(&mut rng, 3, 8);
        let gamma = rand_mat(&mut rng, 1, 8);
        let beta = rand_mat(&mut rng, 1, 8);
        check_grads(
            |g, t| {
                let y = g.layer_norm(t[0], t[1], t[2], 1e-5);
                g.mean_all(g.mul(y, y))
            },
            &[x, gamma, beta],
            1e-5,
        );
    }

    #[test]
    fn embedding_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let table = rand_mat(&mut rng, 7, 3);
        check_grads(
            |g, t| {
                let e = g.embedding(t[0], &[2, 5, 2, 0]);
                g.sum_all(g.mul(e, e))
            },
            &[table],
            1e-6,
        );
    }

    #[test]
    fn slicing_and_concat_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = rand_mat(&mut rng, 5, 4);
        let b = rand_mat(&mut rng, 2, 4);
        check_grads(
            |g, t| {
                let top = g.slice_rows(t[0], 0, 2);
                let joined = g.concat_rows(&[top, t[1]]);
                let left = g.slice_cols(joined, 0, 2);
                let right = g.slice_cols(joined, 2, 4);
                let mixed = g.concat_cols(&[right, left]);
                g.mean_all(g.abs(mixed))
            },
            &[a, b],
            1e-6,
        );
    }

    #[test]
    fn select_and_repeat_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = rand_mat(&mut rng, 4, 3);
        let v = rand_mat(&mut rng, 1, 3);
        check_grads(
            |g, t| {
                let rep = g.repeat_rows(t[1], 4);
                let sel = g.select_rows(t[0], rep, &[false, true, true, false]);
                g.sum_all(g.mul(sel, sel))
            },
            &[a, v],
            1e-6,
        );
    }

    #[test]
    fn reductions_and_clamp_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = rand_mat(&mut rng, 4, 5);
        check_grads(
            |g, t| {
                let m = g.mean_rows(t[0]);
                let c = g.sub_row(t[0], m);
                let clamped = g.clamp(c, -0.5, 0.5);
                g.mean_all(g.mul(clamped, clamped))
            },
            &[x],
            1e-6,
        );
    }

    #[test]
    fn cross_entropy_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let logits = rand_mat(&mut rng, 5, 6);
        check_grads(
            |g, t| {
                g.cross_entropy_mean(
                    t[0],
                    &[1, 0, 3, 5, 2],
                    &[true, true, false, true, false],
                )
            },
            &[logits],
            1e-6,
        );
    }

    #[test]
    fn cross_entropy_uniform_logits_is_ln_v() {
        let g = Graph::new();
        let logits = g.constant(Array2::zeros((4, 10)));
        let ce = g.cross_entropy_mean(logits, &[0, 1, 2, 3], &[true; 4]);
        assert!((g.scalar(ce) - 10.0_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn gradient_accumulates_across_reuse() {
        // y = x + x should have gradient 2 everywhere.
        let g = Graph::new();
        let x = g.param(Array2::from_elem((2, 2), 3.0));
        let y = g.add(x, x);
        let loss = g.sum_all(y);
        let grads = g.backward(loss);
        assert_eq!(grads.get(x).unwrap(), &Array2::from_elem((2, 2), 2.0));
    }

    #[test]
    fn constant_nodes_have_no_gradient_path() {
        let g = Graph::new();
        let x = g.param(Array2::from_elem((1, 1), 2.0));
        let c = g.constant(Array2::from_elem((1, 1), 4.0));
        let loss = g.mul(c, c);
        let loss = g.add(loss, g.mul(x, x));
        let loss = g.sum_all(loss);
        let grads = g.backward(loss);
        assert!((grads.get(x).unwrap()[[0, 0]] - 4.0).abs() < 1e-12);
    }
}
