//! Reverse-mode differentiation tape.
//!
//! Every op appends a node holding its output value; inputs always have
//! smaller indices than the node that consumes them, so a single reverse
//! sweep visits each node once in a valid order.

use std::sync::atomic::{AtomicU64, Ordering};

use super::conv::{self, Conv2dParams, Dims, KernelDims};
use super::{conv2d_output_len, conv2d_transpose_output_len, Tensor};
use crate::error::{Error, Result};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    index: usize,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Conv2d {
        input: Var,
        kernel: Var,
        bias: Option<Var>,
        params: Conv2dParams,
    },
    Conv2dTranspose {
        input: Var,
        kernel: Var,
        bias: Option<Var>,
        params: Conv2dParams,
    },
    Relu(Var),
    LeakyRelu(Var, f64),
    Add(Var, Var),
    Sub(Var, Var),
    MulScalar(Var, f64),
    MaskMul(Var, Tensor),
    Sum(Var),
    L1(Var, Var),
    L2(Var, Var),
    Crop {
        input: Var,
        top: usize,
        left: usize,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    requires_grad: bool,
    op: Op,
}

/// Ordered record of the ops applied to a set of leaves.
#[derive(Debug)]
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    tape: u64,
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient for `var`, or `None` if it does not require grad.
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        if var.tape != self.tape {
            return None;
        }
        self.grads.get(var.index).and_then(Option::as_ref)
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor> {
        if var.tape != self.tape {
            return None;
        }
        self.grads.get_mut(var.index).and_then(Option::take)
    }
}

fn dims(t: &Tensor) -> Dims {
    let s = t.shape();
    Dims {
        n: s[0],
        c: s[1],
        h: s[2],
        w: s[3],
    }
}

fn kdims(t: &Tensor) -> KernelDims {
    let s = t.shape();
    KernelDims {
        o: s[0],
        i: s[1],
        kh: s[2],
        kw: s[3],
    }
}

fn accumulate(slot: &mut Option<Tensor>, delta: Tensor) {
    match slot {
        Some(acc) => acc
            .data_mut()
            .iter_mut()
            .zip(delta.data())
            .for_each(|(a, d)| *a += d),
        None => *slot = Some(delta),
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn node(&self, var: Var) -> Result<&Node> {
        if var.tape != self.id {
            return Err(Error::invalid("variable belongs to a different tape"));
        }
        Ok(&self.nodes[var.index])
    }

    pub fn value(&self, var: Var) -> &Tensor {
        assert_eq!(var.tape, self.id, "variable belongs to a different tape");
        &self.nodes[var.index].value
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        var.tape == self.id && self.nodes[var.index].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, op_name: &'static str, inputs: &[Var]) -> Result<Var> {
        let value = value.check_finite(op_name)?;
        let requires_grad = inputs.iter().any(|v| self.nodes[v.index].requires_grad);
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        Ok(Var {
            tape: self.id,
            index: self.nodes.len() - 1,
        })
    }

    fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            op: Op::Leaf,
        });
        Var {
            tape: self.id,
            index: self.nodes.len() - 1,
        }
    }

    /// Record a trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    /// Record a leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn conv2d(&mut self, input: Var, kernel: Var, bias: Option<Var>, params: Conv2dParams) -> Result<Var> {
        let x = &self.node(input)?.value;
        let k = &self.node(kernel)?.value;
        let (xd, kd) = check_conv_operands("conv2d", x, k)?;
        if xd.c != kd.i {
            return Err(Error::shape("conv2d", x.shape(), k.shape()));
        }
        let oh = conv2d_output_len(xd.h, kd.kh, params.stride, params.padding);
        let ow = conv2d_output_len(xd.w, kd.kw, params.stride, params.padding);
        let (Some(oh), Some(ow)) = (oh, ow) else {
            return Err(Error::shape("conv2d", x.shape(), k.shape()));
        };
        let od = Dims {
            n: xd.n,
            c: kd.o,
            h: oh,
            w: ow,
        };
        let mut out = conv::forward(x.data(), xd, k.data(), kd, params, od);
        if let Some(b) = bias {
            let b = &self.node(b)?.value;
            if b.shape() != [kd.o] {
                return Err(Error::shape("conv2d bias", b.shape(), &[kd.o]));
            }
            conv::add_channel_bias(&mut out, od, b.data());
        }
        let value = Tensor::from_parts(vec![od.n, od.c, od.h, od.w], out);
        let mut inputs = vec![input, kernel];
        inputs.extend(bias);
        self.push(
            value,
            Op::Conv2d {
                input,
                kernel,
                bias,
                params,
            },
            "conv2d",
            &inputs,
        )
    }

    /// Transposed convolution: the adjoint of [`Tape::conv2d`] with the same
    /// kernel tensor, plus an optional bias on its `I` output channels.
    pub fn conv2d_transpose(
        &mut self,
        input: Var,
        kernel: Var,
        bias: Option<Var>,
        params: Conv2dParams,
        output_padding: usize,
    ) -> Result<Var> {
        let y = &self.node(input)?.value;
        let k = &self.node(kernel)?.value;
        let (yd, kd) = check_conv_operands("conv2d_transpose", y, k)?;
        if yd.c != kd.o {
            return Err(Error::shape("conv2d_transpose", y.shape(), k.shape()));
        }
        let oh = conv2d_transpose_output_len(yd.h, kd.kh, params.stride, params.padding, output_padding);
        let ow = conv2d_transpose_output_len(yd.w, kd.kw, params.stride, params.padding, output_padding);
        let (Some(oh), Some(ow)) = (oh, ow) else {
            return Err(Error::shape("conv2d_transpose", y.shape(), k.shape()));
        };
        let od = Dims {
            n: yd.n,
            c: kd.i,
            h: oh,
            w: ow,
        };
        let mut out = conv::backward_input(y.data(), yd, k.data(), kd, params, od);
        if let Some(b) = bias {
            let b = &self.node(b)?.value;
            if b.shape() != [kd.i] {
                return Err(Error::shape("conv2d_transpose bias", b.shape(), &[kd.i]));
            }
            conv::add_channel_bias(&mut out, od, b.data());
        }
        let value = Tensor::from_parts(vec![od.n, od.c, od.h, od.w], out);
        let mut inputs = vec![input, kernel];
        inputs.extend(bias);
        self.push(
            value,
            Op::Conv2dTranspose {
                input,
                kernel,
                bias,
                params,
            },
            "conv2d_transpose",
            &inputs,
        )
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let value = self.node(x)?.value.map(|v| if v > 0.0 { v } else { 0.0 });
        self.push(value, Op::Relu(x), "relu", &[x])
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Result<Var> {
        let value = self.node(x)?.value.map(|v| if v > 0.0 { v } else { slope * v });
        self.push(value, Op::LeakyRelu(x, slope), "leaky_relu", &[x])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip_values("add", a, b, |x, y| x + y)?;
        self.push(value, Op::Add(a, b), "add", &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip_values("sub", a, b, |x, y| x - y)?;
        self.push(value, Op::Sub(a, b), "sub", &[a, b])
    }

    pub fn mul_scalar(&mut self, x: Var, c: f64) -> Result<Var> {
        if !c.is_finite() {
            return Err(Error::NonFinite { op: "mul_scalar" });
        }
        let value = self.node(x)?.value.map(|v| v * c);
        self.push(value, Op::MulScalar(x, c), "mul_scalar", &[x])
    }

    /// Elementwise product with a constant 0/1 mask.
    pub fn mask_mul(&mut self, x: Var, mask: &Tensor) -> Result<Var> {
        let xv = &self.node(x)?.value;
        xv.expect_same_shape("mask_mul", mask)?;
        if mask.data().iter().any(|&m| m != 0.0 && m != 1.0) {
            return Err(Error::invalid("mask_mul: mask values must be 0 or 1"));
        }
        let data = xv
            .data()
            .iter()
            .zip(mask.data())
            .map(|(&v, &m)| if m == 1.0 { v } else { 0.0 })
            .collect();
        let value = Tensor::from_parts(xv.shape().to_vec(), data);
        self.push(value, Op::MaskMul(x, mask.clone()), "mask_mul", &[x])
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let value = Tensor::scalar(self.node(x)?.value.sum());
        self.push(value, Op::Sum(x), "sum", &[x])
    }

    /// Mean absolute error.
    pub fn l1_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        let diff = self.zip_values("l1_loss", pred, target, |p, t| (p - t).abs())?;
        let value = Tensor::scalar(diff.sum() / diff.len() as f64);
        self.push(value, Op::L1(pred, target), "l1_loss", &[pred, target])
    }

    /// Mean squared error.
    pub fn l2_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        let diff = self.zip_values("l2_loss", pred, target, |p, t| (p - t) * (p - t))?;
        let value = Tensor::scalar(diff.sum() / diff.len() as f64);
        self.push(value, Op::L2(pred, target), "l2_loss", &[pred, target])
    }

    pub fn crop(&mut self, x: Var, top: usize, left: usize, height: usize, width: usize) -> Result<Var> {
        let value = self.node(x)?.value.crop(top, left, height, width)?;
        self.push(value, Op::Crop { input: x, top, left }, "crop", &[x])
    }

    fn zip_values(&self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let av = &self.node(a)?.value;
        let bv = &self.node(b)?.value;
        av.expect_same_shape(op, bv)?;
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        Ok(Tensor::from_parts(av.shape().to_vec(), data))
    }

    /// Reverse sweep from a scalar `root`. Gradients are accumulated for every
    /// node that requires grad; constants and their subgraphs are skipped.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let root_node = self.node(root).map_err(|_| Error::DetachedRoot)?;
        if !root_node.value.is_scalar() {
            return Err(Error::NonScalarRoot(root_node.value.shape().to_vec()));
        }
        if !root_node.requires_grad {
            return Err(Error::DetachedRoot);
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; root.index + 1];
        grads[root.index] = Some(Tensor::ones(root_node.value.shape()));

        for index in (0..=root.index).rev() {
            let Some(g) = grads[index].take() else { continue };
            let node = &self.nodes[index];
            let contributions = self.node_backward(node, &g)?;
            grads[index] = Some(g);
            for (var, delta) in contributions {
                if self.nodes[var.index].requires_grad {
                    accumulate(&mut grads[var.index], delta.check_finite("backward")?);
                }
            }
        }
        // Drop intermediate grads of nodes that do not require them.
        for (slot, node) in grads.iter_mut().zip(&self.nodes) {
            if !node.requires_grad {
                *slot = None;
            }
        }
        Ok(Gradients { tape: self.id, grads })
    }

    fn node_backward(&self, node: &Node, g: &Tensor) -> Result<Vec<(Var, Tensor)>> {
        let val = |v: Var| &self.nodes[v.index].value;
        let needs = |v: Var| self.nodes[v.index].requires_grad;
        let mut out = Vec::new();
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d {
                input,
                kernel,
                bias,
                params,
            } => {
                let (x, k) = (val(*input), val(*kernel));
                let (xd, kd, gd) = (dims(x), kdims(k), dims(g));
                if needs(*input) {
                    let gx = conv::backward_input(g.data(), gd, k.data(), kd, *params, xd);
                    out.push((*input, Tensor::from_parts(x.shape().to_vec(), gx)));
                }
                if needs(*kernel) {
                    let gk = conv::backward_kernel(g.data(), gd, x.data(), xd, kd, *params);
                    out.push((*kernel, Tensor::from_parts(k.shape().to_vec(), gk)));
                }
                if let Some(b) = bias.filter(|b| needs(*b)) {
                    out.push((b, Tensor::from_parts(vec![gd.c], conv::channel_sums(g.data(), gd))));
                }
            }
            Op::Conv2dTranspose {
                input,
                kernel,
                bias,
                params,
            } => {
                let (y, k) = (val(*input), val(*kernel));
                let (yd, kd, gd) = (dims(y), kdims(k), dims(g));
                if needs(*input) {
                    let gy = conv::forward(g.data(), gd, k.data(), kd, *params, yd);
                    out.push((*input, Tensor::from_parts(y.shape().to_vec(), gy)));
                }
                if needs(*kernel) {
                    let gk = conv::backward_kernel(y.data(), yd, g.data(), gd, kd, *params);
                    out.push((*kernel, Tensor::from_parts(k.shape().to_vec(), gk)));
                }
                if let Some(b) = bias.filter(|b| needs(*b)) {
                    out.push((b, Tensor::from_parts(vec![gd.c], conv::channel_sums(g.data(), gd))));
                }
            }
            Op::Relu(x) => {
                let data = val(*x)
                    .data()
                    .iter()
                    .zip(g.data())
                    .map(|(&v, &gv)| if v > 0.0 { gv } else { 0.0 })
                    .collect();
                out.push((*x, Tensor::from_parts(g.shape().to_vec(), data)));
            }
            Op::LeakyRelu(x, slope) => {
                let data = val(*x)
                    .data()
                    .iter()
                    .zip(g.data())
                    .map(|(&v, &gv)| if v > 0.0 { gv } else { slope * gv })
                    .collect();
                out.push((*x, Tensor::from_parts(g.shape().to_vec(), data)));
            }
            Op::Add(a, b) => {
                out.push((*a, g.clone()));
                out.push((*b, g.clone()));
            }
            Op::Sub(a, b) => {
                out.push((*a, g.clone()));
                out.push((*b, g.map(|v| -v)));
            }
            Op::MulScalar(x, c) => out.push((*x, g.map(|v| v * c))),
            Op::MaskMul(x, mask) => {
                let data = g
                    .data()
                    .iter()
                    .zip(mask.data())
                    .map(|(&gv, &m)| if m == 1.0 { gv } else { 0.0 })
                    .collect();
                out.push((*x, Tensor::from_parts(g.shape().to_vec(), data)));
            }
            Op::Sum(x) => out.push((*x, Tensor::full(val(*x).shape(), g.item()))),
            Op::L1(p, t) => {
                let (pv, tv) = (val(*p), val(*t));
                let scale = g.item() / pv.len() as f64;
                let d: Vec<f64> = pv
                    .data()
                    .iter()
                    .zip(tv.data())
                    .map(|(&a, &b)| {
                        let diff = a - b;
                        if diff > 0.0 {
                            scale
                        } else if diff < 0.0 {
                            -scale
                        } else {
                            0.0
                        }
                    })
                    .collect();
                let dp = Tensor::from_parts(pv.shape().to_vec(), d);
                if needs(*t) {
                    out.push((*t, dp.map(|v| -v)));
                }
                out.push((*p, dp));
            }
            Op::L2(p, t) => {
                let (pv, tv) = (val(*p), val(*t));
                let scale = 2.0 * g.item() / pv.len() as f64;
                let d = pv.data().iter().zip(tv.data()).map(|(&a, &b)| scale * (a - b)).collect();
                let dp = Tensor::from_parts(pv.shape().to_vec(), d);
                if needs(*t) {
                    out.push((*t, dp.map(|v| -v)));
                }
                out.push((*p, dp));
            }
            Op::Crop { input, top, left } => {
                let x = val(*input);
                let (_, _, h, w) = x.dims4()?;
                let (_, _, ch, cw) = g.dims4()?;
                let mut gx = vec![0.0; x.len()];
                for (plane, gplane) in gx.chunks_exact_mut(h * w).zip(g.data().chunks_exact(ch * cw)) {
                    for y in 0..ch {
                        let dst = (top + y) * w + left;
                        plane[dst..dst + cw].copy_from_slice(&gplane[y * cw..(y + 1) * cw]);
                    }
                }
                out.push((*input, Tensor::from_parts(x.shape().to_vec(), gx)));
            }
        }
        Ok(out)
    }
}

fn check_conv_operands(op: &'static str, x: &Tensor, k: &Tensor) -> Result<(Dims, KernelDims)> {
    if x.rank() != 4 || k.rank() != 4 {
        return Err(Error::shape(op, x.shape(), k.shape()));
    }
    Ok((dims(x), kdims(k)))
}
