//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Every operation appends a node holding its forward value; `backward`
//! walks the tape once in reverse and accumulates adjoints. Parameters are
//! bound as leaves tagged with a [`ParamKey`] so their adjoints can be
//! collected after the sweep.

use std::collections::BTreeMap;

use super::{ApproxError, Tensor};

/// Identifies one parameter array: `slot` names the owning network inside a
/// tape, `index` the array inside that network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamKey {
    pub slot: usize,
    pub index: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Param(ParamKey),
    Linear {
        x: usize,
        w: usize,
        b: usize,
    },
    Conv2d {
        x: usize,
        w: usize,
        b: usize,
        stride: usize,
        pad: usize,
    },
    Relu(usize),
    Sigmoid(usize),
    Log(usize, f64),
    Square(usize),
    Abs(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    MaskTile {
        mask: usize,
        feat: usize,
    },
    Reshape(usize),
    Concat(usize, usize),
    Gather(usize, Vec<usize>),
    SelectRows(usize, Vec<usize>),
    RowSum(usize),
    Sum(usize),
    Mean(usize),
    CosineRows(usize, usize),
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Parameter adjoints produced by [`Tape::backward`], keyed by parameter.
#[derive(Clone, Debug, Default)]
pub struct Gradients {
    map: BTreeMap<ParamKey, Vec<f64>>,
}

impl Gradients {
    pub fn get(&self, key: ParamKey) -> Option<&[f64]> {
        self.map.get(&key).map(Vec::as_slice)
    }

    /// All arrays bound under `slot`, ordered by parameter index.
    pub fn slot(&self, slot: usize) -> Vec<(usize, &[f64])> {
        self.map
            .range(ParamKey { slot, index: 0 }..ParamKey {
                slot: slot + 1,
                index: 0,
            })
            .map(|(k, v)| (k.index, v.as_slice()))
            .collect()
    }

    pub fn slots(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self.map.keys().map(|k| k.slot).collect();
        out.dedup();
        out
    }

    pub fn l2_norm(&self, slot: usize) -> f64 {
        self.slot(slot)
            .iter()
            .flat_map(|(_, g)| g.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Constant input; receives no gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    pub fn param(&mut self, key: ParamKey, t: Tensor) -> Var {
        self.push(t, Op::Param(key))
    }

    /// Copies the value of `v` into a fresh constant (stop-gradient).
    pub fn detach(&mut self, v: Var) -> Var {
        let t = self.value(v).clone();
        self.constant(t)
    }

    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        let batch = xv.batch();
        let fan_in = xv.row_len();
        let out = wv.shape()[0];
        debug_assert_eq!(wv.shape()[1], fan_in, "linear fan-in mismatch");
        debug_assert_eq!(bv.len(), out);
        let (xd, wd, bd) = (xv.data(), wv.data(), bv.data());
        // Accumulate over inputs against W^T so the inner loop is a
        // contiguous axpy; each output still sums bias, then inputs in order.
        let mut wt = vec![0.0; fan_in * out];
        for o in 0..out {
            for i in 0..fan_in {
                wt[i * out + o] = wd[o * fan_in + i];
            }
        }
        let mut y = vec![0.0; batch * out];
        for (xr, yr) in xd.chunks_exact(fan_in).zip(y.chunks_exact_mut(out)) {
            yr.copy_from_slice(bd);
            for (xi, wrow) in xr.iter().zip(wt.chunks_exact(out)) {
                for (yo, wo) in yr.iter_mut().zip(wrow) {
                    *yo += xi * wo;
                }
            }
        }
        let t = Tensor::new(vec![batch, out], y).expect("linear output shape");
        self.push(t, Op::Linear { x: x.0, w: w.0, b: b.0 })
    }

    /// 2-D convolution, `x: [B, C, H, W]`, `w: [O, C, k, k]`, `b: [O]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Var {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        let (bs, c, h, wd) = dims4(xv.shape());
        let (o, wc, k, _) = dims4(wv.shape());
        debug_assert_eq!(wc, c, "conv channel mismatch");
        let ho = (h + 2 * pad - k) / stride + 1;
        let wo = (wd + 2 * pad - k) / stride + 1;
        let (xd, wdat, bdat) = (xv.data(), wv.data(), bv.data());
        let mut y = vec![0.0; bs * o * ho * wo];
        for n in 0..bs {
            for oc in 0..o {
                let base = (n * o + oc) * ho * wo;
                y[base..base + ho * wo].fill(bdat[oc]);
                for ic in 0..c {
                    let xbase = (n * c + ic) * h * wd;
                    for ky in 0..k {
                        for kx in 0..k {
                            let wgt = wdat[((oc * c + ic) * k + ky) * k + kx];
                            for oy in 0..ho {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                let xrow = xbase + iy as usize * wd;
                                let yrow = base + oy * wo;
                                for ox in 0..wo {
                                    let ix = (ox * stride + kx) as isize - pad as isize;
                                    if ix < 0 || ix >= wd as isize {
                                        continue;
                                    }
                                    y[yrow + ox] += wgt * xd[xrow + ix as usize];
                                }
                            }
                        }
                    }
                }
            }
        }
        let t = Tensor::new(vec![bs, o, ho, wo], y).expect("conv output shape");
        self.push(
            t,
            Op::Conv2d {
                x: x.0,
                w: w.0,
                b: b.0,
                stride,
                pad,
            },
        )
    }

    fn map(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let av = self.value(a);
        let data = av.data().iter().map(|&x| f(x)).collect();
        let t = Tensor::new(av.shape().to_vec(), data).expect("unary shape");
        self.push(t, op)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.map(a, |x| x.max(0.0), Op::Relu(a.0))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, sigmoid, Op::Sigmoid(a.0))
    }

    /// `ln(a + eps)`.
    pub fn log(&mut self, a: Var, eps: f64) -> Var {
        self.map(a, move |x| (x + eps).ln(), Op::Log(a.0, eps))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.map(a, |x| x * x, Op::Square(a.0))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.map(a, f64::abs, Op::Abs(a.0))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.map(a, move |x| x * c, Op::Scale(a.0, c))
    }

    fn zip(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.len(), bv.len(), "elementwise operands differ in size");
        let data = av
            .data()
            .iter()
            .zip(bv.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let t = Tensor::new(av.shape().to_vec(), data).expect("binary shape");
        self.push(t, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x + y, Op::Add(a.0, b.0))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x - y, Op::Sub(a.0, b.0))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x * y, Op::Mul(a.0, b.0))
    }

    /// Sums a non-empty list of equally shaped values left to right.
    pub fn add_all(&mut self, vars: &[Var]) -> Var {
        let mut acc = vars[0];
        for &v in &vars[1..] {
            acc = self.add(acc, v);
        }
        acc
    }

    /// Multiplies `feat: [B, C·P]` by `mask: [B, P]` repeated over the C
    /// channel blocks. With `C == 1` this is a plain elementwise product.
    pub fn mask_tile(&mut self, mask: Var, feat: Var) -> Var {
        let (mv, fv) = (self.value(mask), self.value(feat));
        let bs = fv.batch();
        let p = mv.row_len();
        let fw = fv.row_len();
        assert!(p > 0 && fw % p == 0, "mask does not tile features");
        let mut data = fv.data().to_vec();
        for n in 0..bs {
            let m = &mv.data()[n * p..(n + 1) * p];
            for (j, x) in data[n * fw..(n + 1) * fw].iter_mut().enumerate() {
                *x *= m[j % p];
            }
        }
        let t = Tensor::new(fv.shape().to_vec(), data).expect("mask tile shape");
        self.push(
            t,
            Op::MaskTile {
                mask: mask.0,
                feat: feat.0,
            },
        )
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Var {
        let t = self.value(a).clone().reshape(shape).expect("reshape size");
        self.push(t, Op::Reshape(a.0))
    }

    /// Flattens everything after the leading axis.
    pub fn flatten(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let shape = [v.batch(), v.row_len()];
        self.reshape(a, &shape)
    }

    /// Row-wise concatenation of `[B, n]` and `[B, m]`.
    pub fn concat(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        let bs = av.batch();
        let (n, m) = (av.row_len(), bv.row_len());
        let mut data = Vec::with_capacity(bs * (n + m));
        for r in 0..bs {
            data.extend_from_slice(av.row(r));
            data.extend_from_slice(bv.row(r));
        }
        let t = Tensor::new(vec![bs, n + m], data).expect("concat shape");
        self.push(t, Op::Concat(a.0, b.0))
    }

    /// Picks `a[r, idx[r]]` for each row, giving `[B]`.
    pub fn gather(&mut self, a: Var, idx: &[usize]) -> Var {
        let av = self.value(a);
        let w = av.row_len();
        let data = idx
            .iter()
            .enumerate()
            .map(|(r, &i)| av.data()[r * w + i])
            .collect();
        let t = Tensor::new(vec![idx.len()], data).expect("gather shape");
        self.push(t, Op::Gather(a.0, idx.to_vec()))
    }

    pub fn select_rows(&mut self, a: Var, rows: &[usize]) -> Var {
        let av = self.value(a);
        let mut data = Vec::with_capacity(rows.len() * av.row_len());
        for &r in rows {
            data.extend_from_slice(av.row(r));
        }
        let mut shape = av.shape().to_vec();
        shape[0] = rows.len();
        let t = Tensor::new(shape, data).expect("select shape");
        self.push(t, Op::SelectRows(a.0, rows.to_vec()))
    }

    /// Sums each row, `[B, ...] -> [B]`.
    pub fn row_sum(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let data = (0..av.batch()).map(|r| av.row(r).iter().sum()).collect();
        let t = Tensor::new(vec![av.batch()], data).expect("row sum shape");
        self.push(t, Op::RowSum(a.0))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::new(vec![1], vec![s]).unwrap(), Op::Sum(a.0))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let s = v.data().iter().sum::<f64>() / v.len() as f64;
        self.push(Tensor::new(vec![1], vec![s]).unwrap(), Op::Mean(a.0))
    }

    /// Cosine similarity between matching rows, `[B]`.
    pub fn cosine_rows(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        let data = (0..av.batch())
            .map(|r| {
                let (x, y) = (av.row(r), bv.row(r));
                let dot: f64 = x.iter().zip(y).map(|(p, q)| p * q).sum();
                dot / (norm(x) * norm(y))
            })
            .collect();
        let t = Tensor::new(vec![av.batch()], data).expect("cosine shape");
        self.push(t, Op::CosineRows(a.0, b.0))
    }

    /// Sign pattern of every ReLU and |·| input on the tape. Finite
    /// difference probes compare it to skip points straddling a kink.
    pub fn kink_signature(&self) -> Vec<bool> {
        let mut sig = Vec::new();
        for node in &self.nodes {
            match node.op {
                Op::Relu(a) | Op::Abs(a) => {
                    sig.extend(self.nodes[a].value.data().iter().map(|&x| x > 0.0))
                }
                _ => {}
            }
        }
        sig
    }

    /// Reverse sweep from a scalar loss; returns adjoints of all bound
    /// parameters.
    pub fn backward(&self, loss: Var) -> Result<Gradients, ApproxError> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(ApproxError::ShapeMismatch {
                expected: vec![1],
                found: lv.shape().to_vec(),
            });
        }
        if !lv.scalar().is_finite() {
            return Err(ApproxError::NonFiniteLoss(lv.scalar()));
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(vec![1.0]);
        let mut grads = Gradients::default();

        for id in (0..=loss.0).rev() {
            let Some(g) = adj[id].take() else { continue };
            let node = &self.nodes[id];
            match &node.op {
                Op::Leaf => {}
                Op::Param(key) => {
                    let slot = grads
                        .map
                        .entry(*key)
                        .or_insert_with(|| vec![0.0; g.len()]);
                    for (s, d) in slot.iter_mut().zip(&g) {
                        *s += d;
                    }
                }
                &Op::Linear { x, w, b } => {
                    let (xv, wv) = (&self.nodes[x].value, &self.nodes[w].value);
                    let bs = xv.batch();
                    let fan_in = xv.row_len();
                    let out = wv.shape()[0];
                    let mut gx = vec![0.0; xv.len()];
                    let mut gw = vec![0.0; wv.len()];
                    let mut gb = vec![0.0; out];
                    for r in 0..bs {
                        let xr = xv.row(r);
                        for o in 0..out {
                            let go = g[r * out + o];
                            if go == 0.0 {
                                continue;
                            }
                            gb[o] += go;
                            let wr = &wv.data()[o * fan_in..(o + 1) * fan_in];
                            let gwr = &mut gw[o * fan_in..(o + 1) * fan_in];
                            let gxr = &mut gx[r * fan_in..(r + 1) * fan_in];
                            for i in 0..fan_in {
                                gxr[i] += go * wr[i];
                                gwr[i] += go * xr[i];
                            }
                        }
                    }
                    accumulate(&mut adj, x, gx);
                    accumulate(&mut adj, w, gw);
                    accumulate(&mut adj, b, gb);
                }
                &Op::Conv2d {
                    x,
                    w,
                    b,
                    stride,
                    pad,
                } => {
                    let (xv, wv) = (&self.nodes[x].value, &self.nodes[w].value);
                    let (bs, c, h, wd) = dims4(xv.shape());
                    let (o, _, k, _) = dims4(wv.shape());
                    let (_, _, ho, wo) = dims4(node.value.shape());
                    let (xd, wdat) = (xv.data(), wv.data());
                    let mut gx = vec![0.0; xv.len()];
                    let mut gw = vec![0.0; wv.len()];
                    let mut gb = vec![0.0; o];
                    for n in 0..bs {
                        for oc in 0..o {
                            let base = (n * o + oc) * ho * wo;
                            gb[oc] += g[base..base + ho * wo].iter().sum::<f64>();
                            for ic in 0..c {
                                let xbase = (n * c + ic) * h * wd;
                                for ky in 0..k {
                                    for kx in 0..k {
                                        let widx = ((oc * c + ic) * k + ky) * k + kx;
                                        let wgt = wdat[widx];
                                        let mut acc = 0.0;
                                        for oy in 0..ho {
                                            let iy = (oy * stride + ky) as isize - pad as isize;
                                            if iy < 0 || iy >= h as isize {
                                                continue;
                                            }
                                            let xrow = xbase + iy as usize * wd;
                                            let grow = base + oy * wo;
                                            for ox in 0..wo {
                                                let ix =
                                                    (ox * stride + kx) as isize - pad as isize;
                                                if ix < 0 || ix >= wd as isize {
                                                    continue;
                                                }
                                                let gy = g[grow + ox];
                                                acc += gy * xd[xrow + ix as usize];
                                                gx[xrow + ix as usize] += gy * wgt;
                                            }
                                        }
                                        gw[widx] += acc;
                                    }
                                }
                            }
                        }
                    }
                    accumulate(&mut adj, x, gx);
                    accumulate(&mut adj, w, gw);
                    accumulate(&mut adj, b, gb);
                }
                &Op::Relu(a) => {
                    let av = self.nodes[a].value.data();
                    let ga = g
                        .iter()
                        .zip(av)
                        .map(|(&d, &x)| if x > 0.0 { d } else { 0.0 })
                        .collect();
                    accumulate(&mut adj, a, ga);
                }
                &Op::Sigmoid(a) => {
                    let yv = node.value.data();
                    let ga = g.iter().zip(yv).map(|(&d, &y)| d * y * (1.0 - y)).collect();
                    accumulate(&mut adj, a, ga);
                }
                &Op::Log(a, eps) => {
                    let av = self.nodes[a].value.data();
                    let ga = g.iter().zip(av).map(|(&d, &x)| d / (x + eps)).collect();
                    accumulate(&mut adj, a, ga);
                }
                &Op::Square(a) => {
                    let av = self.nodes[a].value.data();
                    let ga = g.iter().zip(av).map(|(&d, &x)| 2.0 * d * x).collect();
                    accumulate(&mut adj, a, ga);
                }
                &Op::Abs(a) => {
                    let av = self.nodes[a].value.data();
                    let ga = g
                        .iter()
                        .zip(av)
                        .map(|(&d, &x)| if x > 0.0 { d } else if x < 0.0 { -d } else { 0.0 })
                        .collect();
                    accumulate(&mut adj, a, ga);
                }
                &Op::Add(a, b) => {
                    accumulate(&mut adj, a, g.clone());
                    accumulate(&mut adj, b, g);
                }
                &Op::Sub(a, b) => {
                    let neg = g.iter().map(|d| -d).collect();
                    accumulate(&mut adj, a, g);
                    accumulate(&mut adj, b, neg);
                }
                &Op::Mul(a, b) => {
                    let (av, bv) = (self.nodes[a].value.data(), self.nodes[b].value.data());
                    let ga = g.iter().zip(bv).map(|(d, y)| d * y).collect();
                    let gb = g.iter().zip(av).map(|(d, x)| d * x).collect();
                    accumulate(&mut adj, a, ga);
                    accumulate(&mut adj, b, gb);
                }
                &Op::Scale(a, c) => {
                    accumulate(&mut adj, a, g.iter().map(|d| d * c).collect());
                }
                &Op::MaskTile { mask, feat } => {
                    let (mv, fv) = (&self.nodes[mask].value, &self.nodes[feat].value);
                    let bs = fv.batch();
                    let p = mv.row_len();
                    let fw = fv.row_len();
                    let mut gm = vec![0.0; mv.len()];
                    let mut gf = vec![0.0; fv.len()];
                    for n in 0..bs {
                        for j in 0..fw {
                            let idx = n * fw + j;
                            let m = mv.data()[n * p + j % p];
                            gf[idx] = g[idx] * m;
                            gm[n * p + j % p] += g[idx] * fv.data()[idx];
                        }
                    }
                    accumulate(&mut adj, mask, gm);
                    accumulate(&mut adj, feat, gf);
                }
                &Op::Reshape(a) => accumulate(&mut adj, a, g),
                &Op::Concat(a, b) => {
                    let (av, bv) = (&self.nodes[a].value, &self.nodes[b].value);
                    let (n, m) = (av.row_len(), bv.row_len());
                    let mut ga = Vec::with_capacity(av.len());
                    let mut gb = Vec::with_capacity(bv.len());
                    for r in 0..av.batch() {
                        let row = &g[r * (n + m)..(r + 1) * (n + m)];
                        ga.extend_from_slice(&row[..n]);
                        gb.extend_from_slice(&row[n..]);
                    }
                    accumulate(&mut adj, a, ga);
                    accumulate(&mut adj, b, gb);
                }
                Op::Gather(a, idx) => {
                    let av = &self.nodes[*a].value;
                    let w = av.row_len();
                    let mut ga = vec![0.0; av.len()];
                    for (r, &i) in idx.iter().enumerate() {
                        ga[r * w + i] += g[r];
                    }
                    accumulate(&mut adj, *a, ga);
                }
                Op::SelectRows(a, rows) => {
                    let av = &self.nodes[*a].value;
                    let w = av.row_len();
                    let mut ga = vec![0.0; av.len()];
                    for (k, &r) in rows.iter().enumerate() {
                        for j in 0..w {
                            ga[r * w + j] += g[k * w + j];
                        }
                    }
                    accumulate(&mut adj, *a, ga);
                }
                &Op::RowSum(a) => {
                    let av = &self.nodes[a].value;
                    let w = av.row_len();
                    let ga = (0..av.len()).map(|j| g[j / w]).collect();
                    accumulate(&mut adj, a, ga);
                }
                &Op::Sum(a) => {
                    let n = self.nodes[a].value.len();
                    accumulate(&mut adj, a, vec![g[0]; n]);
                }
                &Op::Mean(a) => {
                    let n = self.nodes[a].value.len();
                    accumulate(&mut adj, a, vec![g[0] / n as f64; n]);
                }
                &Op::CosineRows(a, b) => {
                    let (av, bv) = (&self.nodes[a].value, &self.nodes[b].value);
                    let w = av.row_len();
                    let mut ga = vec![0.0; av.len()];
                    let mut gb = vec![0.0; bv.len()];
                    for r in 0..av.batch() {
                        let (x, y) = (av.row(r), bv.row(r));
                        let (nx, ny) = (norm(x), norm(y));
                        let cos = node.value.data()[r];
                        for j in 0..w {
                            ga[r * w + j] = g[r] * (y[j] / (nx * ny) - cos * x[j] / (nx * nx));
                            gb[r * w + j] = g[r] * (x[j] / (nx * ny) - cos * y[j] / (ny * ny));
                        }
                    }
                    accumulate(&mut adj, a, ga);
                    accumulate(&mut adj, b, gb);
                }
            }
        }
        Ok(grads)
    }
}

fn accumulate(adj: &mut [Option<Vec<f64>>], id: usize, g: Vec<f64>) {
    match &mut adj[id] {
        Some(existing) => {
            for (e, d) in existing.iter_mut().zip(&g) {
                *e += d;
            }
        }
        slot @ None => *slot = Some(g),
    }
}

fn dims4(shape: &[usize]) -> (usize, usize, usize, usize) {
    assert_eq!(shape.len(), 4, "expected a rank-4 tensor, got {shape:?}");
    (shape[0], shape[1], shape[2], shape[3])
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
