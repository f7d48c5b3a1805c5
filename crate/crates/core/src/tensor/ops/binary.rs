//! Elementwise binary operations with trailing-dimension broadcasting, plus
//! tensor-scalar variants.

use std::rc::Rc;

use super::{aligned_strides, broadcast_shape, finish_op, for_each_broadcast, upstream};
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor, TensorInner};

#[derive(Clone, Copy, PartialEq, Eq)]
enum BinKind {
    Add,
    Sub,
    Mul,
    Div,
    Min,
    Max,
}

impl BinKind {
    fn name(self) -> &'static str {
        match self {
            BinKind::Add => "add",
            BinKind::Sub => "sub",
            BinKind::Mul => "mul",
            BinKind::Div => "div",
            BinKind::Min => "minimum",
            BinKind::Max => "maximum",
        }
    }

    #[inline(always)]
    fn eval<E: Element>(self, a: E, b: E) -> E {
        match self {
            BinKind::Add => a + b,
            BinKind::Sub => a - b,
            BinKind::Mul => a * b,
            BinKind::Div => a / b,
            BinKind::Min => a.minimum(b),
            BinKind::Max => a.maximum(b),
        }
    }

    /// Local partial derivatives (d/da, d/db) at one element.
    #[inline(always)]
    fn partials<E: Element>(self, a: E, b: E) -> (E, E) {
        match self {
            BinKind::Add => (E::ONE, E::ONE),
            BinKind::Sub => (E::ONE, -E::ONE),
            BinKind::Mul => (b, a),
            BinKind::Div => (E::ONE / b, -a / (b * b)),
            // Ties route to the first operand.
            BinKind::Min => {
                if a <= b {
                    (E::ONE, E::ZERO)
                } else {
                    (E::ZERO, E::ONE)
                }
            }
            BinKind::Max => {
                if a >= b {
                    (E::ONE, E::ZERO)
                } else {
                    (E::ZERO, E::ONE)
                }
            }
        }
    }
}

fn binary<E: Element>(kind: BinKind, a: &Tensor<E>, b: &Tensor<E>) -> Result<Tensor<E>> {
    let out_shape = broadcast_shape(a.shape(), b.shape()).ok_or_else(|| {
        Error::dim(format!(
            "{}: shapes {:?} and {:?} do not broadcast",
            kind.name(),
            a.shape(),
            b.shape()
        ))
    })?;
    if kind == BinKind::Div && b.values().iter().any(|v| *v == E::ZERO) {
        return Err(Error::domain("division by a zero element"));
    }

    let same_shape = a.shape() == b.shape();
    let n: usize = out_shape.iter().product();
    let mut values = vec![E::ZERO; n];
    if same_shape {
        let av = a.values();
        let bv = b.values();
        for ((o, &x), &y) in values.iter_mut().zip(av).zip(bv) {
            *o = kind.eval(x, y);
        }
    } else {
        let sa = aligned_strides(a.shape(), &out_shape);
        let sb = aligned_strides(b.shape(), &out_shape);
        let av = a.values();
        let bv = b.values();
        for_each_broadcast(&out_shape, &sa, &sb, |i, ai, bi| {
            values[i] = kind.eval(av[ai], bv[bi]);
        });
    }

    let a_in = Rc::clone(&a.inner);
    let b_in = Rc::clone(&b.inner);
    let shape_c = out_shape.clone();
    finish_op(kind.name(), &[a, b], out_shape, values, move |out| {
        Box::new(move || backward_binary(kind, &a_in, &b_in, &out, same_shape, &shape_c))
    })
}

fn backward_binary<E: Element>(
    kind: BinKind,
    a: &TensorInner<E>,
    b: &TensorInner<E>,
    out: &TensorInner<E>,
    same_shape: bool,
    out_shape: &[usize],
) {
    let Some(g) = upstream(out) else { return };
    let want_a = a.needs_grad();
    let want_b = b.needs_grad();
    let mut ga = vec![E::ZERO; if want_a { a.values.len() } else { 0 }];
    let mut gb = vec![E::ZERO; if want_b { b.values.len() } else { 0 }];
    if same_shape {
        match (want_a, want_b) {
            (true, true) => {
                for i in 0..g.len() {
                    let (da, db) = kind.partials(a.values[i], b.values[i]);
                    ga[i] = g[i] * da;
                    gb[i] = g[i] * db;
                }
            }
            (true, false) => {
                for i in 0..g.len() {
                    ga[i] = g[i] * kind.partials(a.values[i], b.values[i]).0;
                }
            }
            (false, true) => {
                for i in 0..g.len() {
                    gb[i] = g[i] * kind.partials(a.values[i], b.values[i]).1;
                }
            }
            (false, false) => {}
        }
    } else {
        let sa = aligned_strides(&a.shape, out_shape);
        let sb = aligned_strides(&b.shape, out_shape);
        for_each_broadcast(out_shape, &sa, &sb, |i, ai, bi| {
            let (da, db) = kind.partials(a.values[ai], b.values[bi]);
            if want_a {
                ga[ai] += g[i] * da;
            }
            if want_b {
                gb[bi] += g[i] * db;
            }
        });
    }
    drop(g);
    if want_a {
        a.accumulate(ga);
    }
    if want_b {
        b.accumulate(gb);
    }
}

fn scalar_map<E: Element>(
    name: &'static str,
    x: &Tensor<E>,
    f: impl Fn(E) -> E,
    dfdx: impl Fn(E) -> E + 'static,
) -> Result<Tensor<E>> {
    let values: Vec<E> = x.values().iter().map(|&v| f(v)).collect();
    let x_in = Rc::clone(&x.inner);
    finish_op(name, &[x], x.shape().to_vec(), values, move |out| {
        Box::new(move || {
            let Some(g) = upstream(&out) else { return };
            let ga: Vec<E> = x_in
                .values
                .iter()
                .zip(g.iter())
                .map(|(&v, &gi)| gi * dfdx(v))
                .collect();
            drop(g);
            x_in.accumulate(ga);
        })
    })
}

impl<E: Element> Tensor<E> {
    pub fn add(&self, other: &Tensor<E>) -> Result<Tensor<E>> {
        binary(BinKind::Add, self, other)
    }
    pub fn sub(&self, other: &Tensor<E>) -> Result<Tensor<E>> {
        binary(BinKind::Sub, self, other)
    }
    pub fn mul(&self, other: &Tensor<E>) -> Result<Tensor<E>> {
        binary(BinKind::Mul, self, other)
    }
    /// Elementwise division. Any exactly-zero divisor element is a domain
    /// error rather than a silent infinity.
    pub fn div(&self, other: &Tensor<E>) -> Result<Tensor<E>> {
        binary(BinKind::Div, self, other)
    }
    /// Elementwise minimum; ties route their gradient to `self`.
    pub fn minimum(&self, other: &Tensor<E>) -> Result<Tensor<E>> {
        binary(BinKind::Min, self, other)
    }
    pub fn maximum(&self, other: &Tensor<E>) -> Result<Tensor<E>> {
        binary(BinKind::Max, self, other)
    }

    pub fn add_scalar(&self, s: f64) -> Result<Tensor<E>> {
        let se = E::from_f64(s);
        scalar_map("add_scalar", self, move |v| v + se, |_| E::ONE)
    }
    pub fn sub_scalar(&self, s: f64) -> Result<Tensor<E>> {
        self.add_scalar(-s)
    }
    pub fn mul_scalar(&self, s: f64) -> Result<Tensor<E>> {
        let se = E::from_f64(s);
        scalar_map("mul_scalar", self, move |v| v * se, move |_| se)
    }
    pub fn div_scalar(&self, s: f64) -> Result<Tensor<E>> {
        if s == 0.0 {
            return Err(Error::domain("division by scalar zero"));
        }
        self.mul_scalar(1.0 / s)
    }
    pub fn neg(&self) -> Result<Tensor<E>> {
        self.mul_scalar(-1.0)
    }

    /// max(x, lo): clamps from below, zero gradient where saturated.
    pub fn clamp_min(&self, lo: f64) -> Result<Tensor<E>> {
        let le = E::from_f64(lo);
        scalar_map(
            "clamp_min",
            self,
            move |v| v.maximum(le),
            move |v| if v >= le { E::ONE } else { E::ZERO },
        )
    }
    pub fn clamp_max(&self, hi: f64) -> Result<Tensor<E>> {
        let he = E::from_f64(hi);
        scalar_map(
            "clamp_max",
            self,
            move |v| v.minimum(he),
            move |v| if v <= he { E::ONE } else { E::ZERO },
        )
    }
    pub fn clamp(&self, lo: f64, hi: f64) -> Result<Tensor<E>> {
        if lo > hi {
            return Err(Error::domain(format!("clamp bounds inverted: [{lo}, {hi}]")));
        }
        self.clamp_min(lo)?.clamp_max(hi)
    }
}
