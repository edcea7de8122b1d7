use super::kernels::{self, axis_split};
use super::{c, numel, BackwardCtx, Element, Tensor};
use crate::error::{Error, Result};

fn check_axis(op: &'static str, shape: &[usize], axis: usize) -> Result<()> {
    if axis >= shape.len() {
        return Err(Error::invalid(
            op,
            format!("axis {axis} out of range for shape {shape:?}"),
        ));
    }
    Ok(())
}

#[derive(Clone, Copy)]
enum Bcast {
    Same,
    LhsScalar,
    RhsScalar,
}

fn broadcast_kind(op: &'static str, a: &[usize], b: &[usize]) -> Result<(Bcast, Vec<usize>)> {
    if a == b {
        Ok((Bcast::Same, a.to_vec()))
    } else if numel(a) == 1 {
        Ok((Bcast::LhsScalar, b.to_vec()))
    } else if numel(b) == 1 {
        Ok((Bcast::RhsScalar, a.to_vec()))
    } else {
        Err(Error::shape(op, a, b))
    }
}

/// Reduces a full-size gradient onto an operand that may have been a
/// broadcast scalar.
fn reduce_to<T: Element>(g: Vec<T>, scalar: bool) -> Vec<T> {
    if scalar {
        let mut s = T::zero();
        for v in g {
            s = s + v;
        }
        vec![s]
    } else {
        g
    }
}

type Partial<T> = fn(T, T, T) -> T;

fn binary<T: Element>(
    op: &'static str,
    a: &Tensor<T>,
    b: &Tensor<T>,
    f: fn(T, T) -> T,
    da: Partial<T>,
    db: Partial<T>,
) -> Result<Tensor<T>> {
    let (kind, shape) = broadcast_kind(op, a.shape(), b.shape())?;
    let (ad, bd) = (a.data(), b.data());
    let n = numel(&shape);
    let data: Vec<T> = match kind {
        Bcast::Same => ad.iter().zip(bd).map(|(&x, &y)| f(x, y)).collect(),
        Bcast::LhsScalar => bd.iter().map(|&y| f(ad[0], y)).collect(),
        Bcast::RhsScalar => ad.iter().map(|&x| f(x, bd[0])).collect(),
    };
    debug_assert_eq!(data.len(), n);
    Ok(Tensor::from_op(
        shape,
        data,
        vec![a.clone(), b.clone()],
        Box::new(move |ctx: &BackwardCtx<'_, T>| {
            let (ad, bd) = (ctx.parents[0].data(), ctx.parents[1].data());
            let ia = |i: usize| if matches!(kind, Bcast::LhsScalar) { 0 } else { i };
            let ib = |i: usize| if matches!(kind, Bcast::RhsScalar) { 0 } else { i };
            let ga = ctx.needs(0).then(|| {
                let g: Vec<T> = (0..ctx.grad.len())
                    .map(|i| da(ad[ia(i)], bd[ib(i)], ctx.out[i]) * ctx.grad[i])
                    .collect();
                reduce_to(g, matches!(kind, Bcast::LhsScalar))
            });
            let gb = ctx.needs(1).then(|| {
                let g: Vec<T> = (0..ctx.grad.len())
                    .map(|i| db(ad[ia(i)], bd[ib(i)], ctx.out[i]) * ctx.grad[i])
                    .collect();
                reduce_to(g, matches!(kind, Bcast::RhsScalar))
            });
            vec![ga, gb]
        }),
    ))
}

#[inline]
fn unary<T: Element>(
    x: &Tensor<T>,
    f: impl Fn(T) -> T,
    df: impl Fn(T, T) -> T + 'static,
) -> Tensor<T> {
    let data = x.data().iter().map(|&v| f(v)).collect();
    Tensor::from_op(
        x.shape().to_vec(),
        data,
        vec![x.clone()],
        Box::new(move |ctx: &BackwardCtx<'_, T>| {
            let xd = ctx.parents[0].data();
            let g = xd
                .iter()
                .zip(ctx.out)
                .zip(ctx.grad)
                .map(|((&x, &y), &g)| df(x, y) * g)
                .collect();
            vec![Some(g)]
        }),
    )
}

#[inline(always)]
fn gelu_parts<T: Element>(x: T) -> (T, T) {
    // tanh approximation
    let k: T = c(0.797_884_560_802_865_4);
    let a: T = c(0.044_715);
    let half: T = c(0.5);
    let inner = k * (x + a * x * x * x);
    let t = inner.fast_tanh();
    let y = half * x * (T::one() + t);
    let dinner = k * (T::one() + c::<T>(3.0) * a * x * x);
    let dy = half * (T::one() + t) + half * x * (T::one() - t * t) * dinner;
    (y, dy)
}

pub(crate) fn permute_data<T: Element>(data: &[T], shape: &[usize], perm: &[usize]) -> Vec<T> {
    let nd = shape.len();
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let mut in_strides = vec![1usize; nd];
    for i in (0..nd.saturating_sub(1)).rev() {
        in_strides[i] = in_strides[i + 1] * shape[i + 1];
    }
    // stride in the input for each output axis
    let strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let total = data.len();
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; nd];
    let mut offset = 0usize;
    for _ in 0..total {
        out.push(data[offset]);
        // increment multi-index over out_shape
        for ax in (0..nd).rev() {
            idx[ax] += 1;
            offset += strides[ax];
            if idx[ax] < out_shape[ax] {
                break;
            }
            offset -= strides[ax] * out_shape[ax];
            idx[ax] = 0;
        }
    }
    out
}

impl<T: Element> Tensor<T> {
    pub fn add(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        binary("add", self, other, |x, y| x + y, |_, _, _| T::one(), |_, _, _| T::one())
    }

    pub fn sub(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        binary("sub", self, other, |x, y| x - y, |_, _, _| T::one(), |_, _, _| -T::one())
    }

    pub fn mul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        binary("mul", self, other, |x, y| x * y, |_, y, _| y, |x, _, _| x)
    }

    pub fn div(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        binary(
            "div",
            self,
            other,
            |x, y| x / y,
            |_, y, _| T::one() / y,
            |x, y, _| -x / (y * y),
        )
    }

    pub fn scale(&self, s: f64) -> Tensor<T> {
        let s: T = c(s);
        unary(self, move |x| x * s, move |_, _| s)
    }

    pub fn add_scalar(&self, s: f64) -> Tensor<T> {
        let s: T = c(s);
        unary(self, move |x| x + s, |_, _| T::one())
    }

    pub fn neg(&self) -> Tensor<T> {
        unary(self, |x| -x, |_, _| -T::one())
    }

    pub fn exp(&self) -> Tensor<T> {
        unary(self, |x| x.exp(), |_, y| y)
    }

    pub fn ln(&self) -> Tensor<T> {
        unary(self, |x| x.ln(), |x, _| T::one() / x)
    }

    pub fn sqrt(&self) -> Tensor<T> {
        unary(self, |x| x.sqrt(), |_, y| c::<T>(0.5) / y)
    }

    pub fn square(&self) -> Tensor<T> {
        unary(self, |x| x * x, |x, _| x + x)
    }

    pub fn relu(&self) -> Tensor<T> {
        unary(
            self,
            |x| if x > T::zero() { x } else { T::zero() },
            |x, _| if x > T::zero() { T::one() } else { T::zero() },
        )
    }

    pub fn tanh(&self) -> Tensor<T> {
        unary(self, |x| x.tanh(), |_, y| T::one() - y * y)
    }

    pub fn gelu(&self) -> Tensor<T> {
        unary(self, |x| gelu_parts(x).0, |x, _| gelu_parts(x).1)
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor<T>> {
        if numel(shape) != self.numel() || shape.iter().any(|&d| d == 0) {
            return Err(Error::shape("reshape", self.shape(), shape));
        }
        Ok(Tensor::from_op(
            shape.to_vec(),
            self.data().to_vec(),
            vec![self.clone()],
            Box::new(|ctx: &BackwardCtx<'_, T>| vec![Some(ctx.grad.to_vec())]),
        ))
    }

    pub fn permute(&self, perm: &[usize]) -> Result<Tensor<T>> {
        let nd = self.ndim();
        let mut seen = vec![false; nd];
        if perm.len() != nd || perm.iter().any(|&p| p >= nd || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::invalid(
                "permute",
                format!("{perm:?} is not a permutation of {nd} axes"),
            ));
        }
        let shape = self.shape().to_vec();
        let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
        let data = permute_data(self.data(), &shape, perm);
        let mut inverse = vec![0usize; nd];
        for (i, &p) in perm.iter().enumerate() {
            inverse[p] = i;
        }
        let grad_shape = out_shape.clone();
        Ok(Tensor::from_op(
            out_shape,
            data,
            vec![self.clone()],
            Box::new(move |ctx: &BackwardCtx<'_, T>| {
                vec![Some(permute_data(ctx.grad, &grad_shape, &inverse))]
            }),
        ))
    }

    /// Swaps the last two axes.
    pub fn transpose(&self) -> Result<Tensor<T>> {
        let nd = self.ndim();
        if nd < 2 {
            return Err(Error::invalid("transpose", format!("needs ≥2 dims, got {:?}", self.shape())));
        }
        let mut perm: Vec<usize> = (0..nd).collect();
        perm.swap(nd - 2, nd - 1);
        self.permute(&perm)
    }

    /// `[m,k]·[k,n]`, or batched `[b,m,k]·[b,k,n]`.
    pub fn matmul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        let (a, b) = (self.shape(), other.shape());
        let (batch, m, k, n) = match (a.len(), b.len()) {
            (2, 2) if a[1] == b[0] => (1, a[0], a[1], b[1]),
            (3, 3) if a[0] == b[0] && a[2] == b[1] => (a[0], a[1], a[2], b[2]),
            _ => return Err(Error::shape("matmul", a, b)),
        };
        let out_shape = if a.len() == 2 { vec![m, n] } else { vec![batch, m, n] };
        let mut out = vec![T::zero(); batch * m * n];
        let (ad, bd) = (self.data(), other.data());
        for bi in 0..batch {
            kernels::gemm_nn(
                &ad[bi * m * k..(bi + 1) * m * k],
                &bd[bi * k * n..(bi + 1) * k * n],
                &mut out[bi * m * n..(bi + 1) * m * n],
                m,
                k,
                n,
            );
        }
        Ok(Tensor::from_op(
            out_shape,
            out,
            vec![self.clone(), other.clone()],
            Box::new(move |ctx: &BackwardCtx<'_, T>| {
                let (ad, bd) = (ctx.parents[0].data(), ctx.parents[1].data());
                let g = ctx.grad;
                let ga = ctx.needs(0).then(|| {
                    let mut ga = vec![T::zero(); batch * m * k];
                    for bi in 0..batch {
                        kernels::gemm_nt(
                            &g[bi * m * n..(bi + 1) * m * n],
                            &bd[bi * k * n..(bi + 1) * k * n],
                            &mut ga[bi * m * k..(bi + 1) * m * k],
                            m,
                            k,
                            n,
                        );
                    }
                    ga
                });
                let gb = ctx.needs(1).then(|| {
                    let mut gb = vec![T::zero(); batch * k * n];
                    for bi in 0..batch {
                        kernels::gemm_tn(
                            &ad[bi * m * k..(bi + 1) * m * k],
                            &g[bi * m * n..(bi + 1) * m * n],
                            &mut gb[bi * k * n..(bi + 1) * k * n],
                            m,
                            k,
                            n,
                        );
                    }
                    gb
                });
                vec![ga, gb]
            }),
        ))
    }

    /// Sum over one axis; the axis is removed (a rank-1 input gives shape `[1]`).
    pub fn sum_axis(&self, axis: usize) -> Result<Tensor<T>> {
        check_axis("sum", self.shape(), axis)?;
        let shape = self.shape().to_vec();
        let (outer, len, inner) = axis_split(&shape, axis);
        let mut out = vec![T::zero(); outer * inner];
        let x = self.data();
        for o in 0..outer {
            let dst = &mut out[o * inner..(o + 1) * inner];
            for l in 0..len {
                let base = (o * len + l) * inner;
                kernels::add_assign(dst, &x[base..base + inner]);
            }
        }
        let mut out_shape: Vec<usize> = shape.clone();
        out_shape.remove(axis);
        if out_shape.is_empty() {
            out_shape.push(1);
        }
        Ok(Tensor::from_op(
            out_shape,
            out,
            vec![self.clone()],
            Box::new(move |ctx: &BackwardCtx<'_, T>| {
                let mut g = vec![T::zero(); outer * len * inner];
                for o in 0..outer {
                    for l in 0..len {
                        let base = (o * len + l) * inner;
                        g[base..base + inner].copy_from_slice(&ctx.grad[o * inner..(o + 1) * inner]);
                    }
                }
                vec![Some(g)]
            }),
        ))
    }

    pub fn mean_axis(&self, axis: usize) -> Result<Tensor<T>> {
        check_axis("mean", self.shape(), axis)?;
        let len = self.shape()[axis] as f64;
        Ok(self.sum_axis(axis)?.scale(1.0 / len))
    }

    pub fn sum(&self) -> Tensor<T> {
        let mut s = T::zero();
        for &v in self.data() {
            s = s + v;
        }
        let n = self.numel();
        Tensor::from_op(
            vec![1],
            vec![s],
            vec![self.clone()],
            Box::new(move |ctx: &BackwardCtx<'_, T>| vec![Some(vec![ctx.grad[0]; n])]),
        )
    }

    pub fn mean(&self) -> Tensor<T> {
        let n = self.numel() as f64;
        self.sum().scale(1.0 / n)
    }

    /// Softmax along `axis`, max-subtracted.
    pub fn softmax(&self, axis: usize) -> Result<Tensor<T>> {
        check_axis("softmax", self.shape(), axis)?;
        let (outer, len, inner) = axis_split(self.shape(), axis);
        let x = self.data();
        let mut out = vec![T::zero(); x.len()];
        if inner == 1 {
            for (xr, yr) in x.chunks_exact(len).zip(out.chunks_exact_mut(len)) {
                let mx = xr.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
                for (y, &v) in yr.iter_mut().zip(xr) {
                    *y = (v - mx).fast_exp();
                }
                let s = yr.iter().fold(T::zero(), |s, &v| s + v);
                let inv = T::one() / s;
                for y in yr.iter_mut() {
                    *y = *y * inv;
                }
            }
        } else {
            for o in 0..outer {
                for i in 0..inner {
                    let at = |l: usize| (o * len + l) * inner + i;
                    let mut mx = T::neg_infinity();
                    for l in 0..len {
                        mx = mx.max(x[at(l)]);
                    }
                    let mut s = T::zero();
                    for l in 0..len {
                        let e = (x[at(l)] - mx).fast_exp();
                        out[at(l)] = e;
                        s = s + e;
                    }
                    let inv = T::one() / s;
                    for l in 0..len {
                        out[at(l)] = out[at(l)] * inv;
                    }
                }
            }
        }
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            out,
            vec![self.clone()],
            Box::new(move |ctx: &BackwardCtx<'_, T>| {
                let (y, g) = (ctx.out, ctx.grad);
                let mut dx = vec![T::zero(); y.len()];
                if inner == 1 {
                    for ((yr, gr), dr) in y.chunks_exact(len).zip(g.chunks_exact(len)).zip(dx.chunks_exact_mut(len)) {
                        let s = yr.iter().zip(gr).fold(T::zero(), |s, (&yv, &gv)| s + gv * yv);
                        for ((d, &yv), &gv) in dr.iter_mut().zip(yr).zip(gr) {
                            *d = yv * (gv - s);
                        }
                    }
                } else {
                    for o in 0..outer {
                        for i in 0..inner {
                            let at = |l: usize| (o * len + l) * inner + i;
                            let mut s = T::zero();
                            for l in 0..len {
                                s = s + g[at(l)] * y[at(l)];
                            }
                            for l in 0..len {
                                dx[at(l)] = y[at(l)] * (g[at(l)] - s);
                            }
                        }
                    }
                }
                vec![Some(dx)]
            }),
        ))
    }

    pub fn log_softmax(&self, axis: usize) -> Result<Tensor<T>> {
        check_axis("log_softmax", self.shape(), axis)?;
        let (outer, len, inner) = axis_split(self.shape(), axis);
        let x = self.data();
        let mut out = vec![T::zero(); x.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |l: usize| (o * len + l) * inner + i;
                let mut mx = T::neg_infinity();
                for l in 0..len {
                    mx = mx.max(x[at(l)]);
                }
                let mut s = T::zero();
                for l in 0..len {
                    s = s + (x[at(l)] - mx).exp();
                }
                let lse = mx + s.ln();
                for l in 0..len {
                    out[at(l)] = x[at(l)] - lse;
                }
            }
        }
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            out,
            vec![self.clone()],
            Box::new(move |ctx: &BackwardCtx<'_, T>| {
                let (y, g) = (ctx.out, ctx.grad);
                let mut dx = vec![T::zero(); y.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |l: usize| (o * len + l) * inner + i;
                        let mut s = T::zero();
                        for l in 0..len {
                            s = s + g[at(l)];
                        }
                        for l in 0..len {
                            dx[at(l)] = g[at(l)] - y[at(l)].exp() * s;
                        }
                    }
                }
                vec![Some(dx)]
            }),
        ))
    }

    /// Standardizes the last axis: `(x − mean) / sqrt(var + eps)`, no affine.
    pub fn layernorm(&self, eps: f64) -> Result<Tensor<T>> {
        let nd = self.ndim();
        let d = self.shape()[nd - 1];
        let rows = self.numel() / d;
        let x = self.data();
        let eps_t: T = c(eps);
        let inv_d: T = c(1.0 / d as f64);
        let mut out = vec![T::zero(); x.len()];
        let mut inv_std = vec![T::zero(); rows];
        for r in 0..rows {
            let row = &x[r * d..(r + 1) * d];
            let mut mean = T::zero();
            for &v in row {
                mean = mean + v;
            }
            mean = mean * inv_d;
            let mut var = T::zero();
            for &v in row {
                var = var + (v - mean) * (v - mean);
            }
            var = var * inv_d;
            let is = T::one() / (var + eps_t).sqrt();
            inv_std[r] = is;
            for (o, &v) in out[r * d..(r + 1) * d].iter_mut().zip(row) {
                *o = (v - mean) * is;
            }
        }
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            out,
            vec![self.clone()],
            Box::new(move |ctx: &BackwardCtx<'_, T>| {
                let (y, g) = (ctx.out, ctx.grad);
                let mut dx = vec![T::zero(); y.len()];
                for r in 0..rows {
                    let yr = &y[r * d..(r + 1) * d];
                    let gr = &g[r * d..(r + 1) * d];
                    let mut mg = T::zero();
                    let mut mgy = T::zero();
                    for (&gv, &yv) in gr.iter().zip(yr) {
                        mg = mg + gv;
                        mgy = mgy + gv * yv;
                    }
                    mg = mg * inv_d;
                    mgy = mgy * inv_d;
                    for ((o, &gv), &yv) in dx[r * d..(r + 1) * d].iter_mut().zip(gr).zip(yr) {
                        *o = inv_std[r] * (gv - mg - yv * mgy);
                    }
                }
                vec![Some(dx)]
            }),
        ))
    }

    /// `x / max(‖x‖₂, 1e-12)` along `axis`.
    pub fn l2_normalize(&self, axis: usize) -> Result<Tensor<T>> {
        check_axis("l2_normalize", self.shape(), axis)?;
        let (outer, len, inner) = axis_split(self.shape(), axis);
        let x = self.data();
        let floor: T = c(1e-12);
        let mut out = vec![T::zero(); x.len()];
        let mut norms = vec![T::zero(); outer * inner];
        for o in 0..outer {
            for i in 0..inner {
                let at = |l: usize| (o * len + l) * inner + i;
                let mut s = T::zero();
                for l in 0..len {
                    s = s + x[at(l)] * x[at(l)];
                }
                let nrm = s.sqrt().max(floor);
                norms[o * inner + i] = nrm;
                for l in 0..len {
                    out[at(l)] = x[at(l)] / nrm;
                }
            }
        }
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            out,
            vec![self.clone()],
            Box::new(move |ctx: &BackwardCtx<'_, T>| {
                let (y, g) = (ctx.out, ctx.grad);
                let mut dx = vec![T::zero(); y.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |l: usize| (o * len + l) * inner + i;
                        let nrm = norms[o * inner + i];
                        if nrm <= floor {
                            for l in 0..len {
                                dx[at(l)] = g[at(l)] / nrm;
                            }
                            continue;
                        }
                        let mut s = T::zero();
                        for l in 0..len {
                            s = s + g[at(l)] * y[at(l)];
                        }
                        for l in 0..len {
                            dx[at(l)] = (g[at(l)] - y[at(l)] * s) / nrm;
                        }
                    }
                }
                vec![Some(dx)]
            }),
        ))
    }

    fn row_op(&self, v: &Tensor<T>, op: &'static str, mul: bool) -> Result<Tensor<T>> {
        let d = *self.shape().last().expect("non-empty shape");
        if v.numel() != d || v.ndim() != 1 {
            return Err(Error::shape(op, self.shape(), v.shape()));
        }
        let x = self.data();
        let vd = v.data();
        let mut out = x.to_vec();
        for row in out.chunks_mut(d) {
            for (o, &b) in row.iter_mut().zip(vd) {
                *o = if mul { *o * b } else { *o + b };
            }
        }
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            out,
            vec![self.clone(), v.clone()],
            Box::new(move |ctx: &BackwardCtx<'_, T>| {
                let g = ctx.grad;
                let (x, vd) = (ctx.parents[0].data(), ctx.parents[1].data());
                let gx = ctx.needs(0).then(|| {
                    if mul {
                        let mut gx = g.to_vec();
                        for row in gx.chunks_mut(d) {
                            for (o, &b) in row.iter_mut().zip(vd) {
                                *o = *o * b;
                            }
                        }
                        gx
                    } else {
                        g.to_vec()
                    }
                });
                let gv = ctx.needs(1).then(|| {
                    let mut gv = vec![T::zero(); d];
                    for (r, grow) in g.chunks(d).enumerate() {
                        if mul {
                            let xrow = &x[r * d..(r + 1) * d];
                            for ((o, &gg), &xx) in gv.iter_mut().zip(grow).zip(xrow) {
                                *o = *o + gg * xx;
                            }
                        } else {
                            kernels::add_assign(&mut gv, grow);
                        }
                    }
                    gv
                });
                vec![gx, gv]
            }),
        ))
    }

    /// Adds a rank-1 vector to every row along the last axis.
    pub fn add_row(&self, v: &Tensor<T>) -> Result<Tensor<T>> {
        self.row_op(v, "add_row", false)
    }

    /// Multiplies every row along the last axis by a rank-1 vector.
    pub fn mul_row(&self, v: &Tensor<T>) -> Result<Tensor<T>> {
        self.row_op(v, "mul_row", true)
    }

    /// Selects entries along axis 0. Indices may repeat; gradients of
    /// repeated rows are summed.
    pub fn gather_rows(&self, indices: &[usize]) -> Result<Tensor<T>> {
        let rows = self.shape()[0];
        if indices.is_empty() {
            return Err(Error::invalid("gather_rows", "empty index list"));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= rows) {
            return Err(Error::invalid(
                "gather_rows",
                format!("index {bad} out of range for {rows} rows"),
            ));
        }
        let width = self.numel() / rows;
        let x = self.data();
        let mut out = Vec::with_capacity(indices.len() * width);
        for &i in indices {
            out.extend_from_slice(&x[i * width..(i + 1) * width]);
        }
        let mut shape = self.shape().to_vec();
        shape[0] = indices.len();
        let idx = indices.to_vec();
        Ok(Tensor::from_op(
            shape,
            out,
            vec![self.clone()],
            Box::new(move |ctx: &BackwardCtx<'_, T>| {
                let mut g = vec![T::zero(); rows * width];
                for (k, &i) in idx.iter().enumerate() {
                    kernels::add_assign(
                        &mut g[i * width..(i + 1) * width],
                        &ctx.grad[k * width..(k + 1) * width],
                    );
                }
                vec![Some(g)]
            }),
        ))
    }

    /// Contiguous slice `[start, start+len)` along `axis`.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Result<Tensor<T>> {
        check_axis("narrow", self.shape(), axis)?;
        let (outer, full, inner) = axis_split(self.shape(), axis);
        if len == 0 || start + len > full {
            return Err(Error::invalid(
                "narrow",
                format!("range {start}..{} outside axis of length {full}", start + len),
            ));
        }
        let x = self.data();
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * full + start) * inner;
            out.extend_from_slice(&x[base..base + len * inner]);
        }
        let mut shape = self.shape().to_vec();
        shape[axis] = len;
        Ok(Tensor::from_op(
            shape,
            out,
            vec![self.clone()],
            Box::new(move |ctx: &BackwardCtx<'_, T>| {
                let mut g = vec![T::zero(); outer * full * inner];
                for o in 0..outer {
                    let base = (o * full + start) * inner;
                    g[base..base + len * inner]
                        .copy_from_slice(&ctx.grad[o * len * inner..(o + 1) * len * inner]);
                }
                vec![Some(g)]
            }),
        ))
    }

    pub fn concat(parts: &[Tensor<T>], axis: usize) -> Result<Tensor<T>> {
        let first = parts
            .first()
            .ok_or_else(|| Error::invalid("concat", "no inputs"))?;
        check_axis("concat", first.shape(), axis)?;
        for p in &parts[1..] {
            let ok = p.ndim() == first.ndim()
                && p.shape()
                    .iter()
                    .zip(first.shape())
                    .enumerate()
                    .all(|(i, (a, b))| i == axis || a == b);
            if !ok {
                return Err(Error::shape("concat", first.shape(), p.shape()));
            }
        }
        let (outer, _, inner) = axis_split(first.shape(), axis);
        let lens: Vec<usize> = parts.iter().map(|p| p.shape()[axis]).collect();
        let total: usize = lens.iter().sum();
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (p, &l) in parts.iter().zip(&lens) {
                out.extend_from_slice(&p.data()[o * l * inner..(o + 1) * l * inner]);
            }
        }
        let mut shape = first.shape().to_vec();
        shape[axis] = total;
        Ok(Tensor::from_op(
            shape,
            out,
            parts.to_vec(),
            Box::new(move |ctx: &BackwardCtx<'_, T>| {
                let mut grads: Vec<Option<Vec<T>>> = Vec::with_capacity(lens.len());
                let mut offset = 0;
                for (pi, &l) in lens.iter().enumerate() {
                    if ctx.needs(pi) {
                        let mut g = Vec::with_capacity(outer * l * inner);
                        for o in 0..outer {
                            let base = (o * total + offset) * inner;
                            g.extend_from_slice(&ctx.grad[base..base + l * inner]);
                        }
                        grads.push(Some(g));
                    } else {
                        grads.push(None);
                    }
                    offset += l;
                }
                grads
            }),
        ))
    }

    /// For a `[n, k]` tensor, picks `x[i, cols[i]]` giving `[n]`.
    pub fn pick_per_row(&self, cols: &[usize]) -> Result<Tensor<T>> {
        if self.ndim() != 2 || cols.len() != self.shape()[0] {
            return Err(Error::shape("pick_per_row", self.shape(), &[cols.len()]));
        }
        let k = self.shape()[1];
        if let Some(&bad) = cols.iter().find(|&&j| j >= k) {
            return Err(Error::invalid("pick_per_row", format!("column {bad} ≥ {k}")));
        }
        let x = self.data();
        let out: Vec<T> = cols.iter().enumerate().map(|(i, &j)| x[i * k + j]).collect();
        let cols = cols.to_vec();
        let n = cols.len();
        Ok(Tensor::from_op(
            vec![n],
            out,
            vec![self.clone()],
            Box::new(move |ctx: &BackwardCtx<'_, T>| {
                let mut g = vec![T::zero(); n * k];
                for (i, &j) in cols.iter().enumerate() {
                    g[i * k + j] = ctx.grad[i];
                }
                vec![Some(g)]
            }),
        ))
    }

    /// `x·W + b` for `x: [m, k]`, `W: [k, n]`, `b: [n]`.
    pub fn linear(&self, weight: &Tensor<T>, bias: Option<&Tensor<T>>) -> Result<Tensor<T>> {
        let y = self.matmul(weight)?;
        match bias {
            Some(b) => y.add_row(b),
            None => Ok(y),
        }
    }

    /// Mean cross-entropy of `[n, k]` logits against integer labels.
    pub fn cross_entropy(&self, labels: &[usize]) -> Result<Tensor<T>> {
        let lp = self.log_softmax(1)?;
        Ok(lp.pick_per_row(labels)?.mean().neg())
    }
}
