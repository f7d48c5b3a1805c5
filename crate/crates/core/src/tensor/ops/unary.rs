//! Unary maps: activations and the scalar special functions used elsewhere in
//! the crate (smoothness exponentials, axis-angle rotation coefficients).

use std::rc::Rc;

use super::{finish_op, upstream};
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Activation kinds available to network blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Activation {
    Elu,
    Sigmoid,
    Identity,
}

fn unary<E: Element>(
    name: &'static str,
    x: &Tensor<E>,
    f: impl Fn(E) -> E,
    // derivative from (input value, output value)
    df: impl Fn(E, E) -> E + 'static,
    check_finite: bool,
) -> Result<Tensor<E>> {
    let values: Vec<E> = x.values().iter().map(|&v| f(v)).collect();
    if check_finite {
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::domain(format!("{name} produced non-finite value {v}")));
        }
    }
    let x_in = Rc::clone(&x.inner);
    finish_op(name, &[x], x.shape().to_vec(), values, move |out| {
        Box::new(move || {
            let Some(g) = upstream(&out) else { return };
            let ga: Vec<E> = x_in
                .values
                .iter()
                .zip(out.values.iter())
                .zip(g.iter())
                .map(|((&xv, &yv), &gi)| gi * df(xv, yv))
                .collect();
            drop(g);
            x_in.accumulate(ga);
        })
    })
}

#[inline]
fn sigmoid_stable<E: Element>(x: E) -> E {
    if x >= E::ZERO {
        E::ONE / (E::ONE + (-x).exp())
    } else {
        let e = x.exp();
        e / (E::ONE + e)
    }
}

// Series / closed-form crossover for the rotation coefficients. The closed
// forms lose ~eps/u^2 to cancellation, the truncated series lose the first
// omitted term; at 1e-2 both sides sit near 1e-12.
const ROT_SERIES_CUTOFF: f64 = 1e-2;

/// a(u) = sin(sqrt(u)) / sqrt(u), smooth at u = 0.
fn rot_a(u: f64) -> f64 {
    if u <= ROT_SERIES_CUTOFF {
        1.0 - u / 6.0 + u * u / 120.0 - u * u * u / 5040.0
    } else {
        let t = u.sqrt();
        t.sin() / t
    }
}

fn rot_a_deriv(u: f64) -> f64 {
    if u <= ROT_SERIES_CUTOFF {
        -1.0 / 6.0 + u / 60.0 - u * u / 1680.0 + u * u * u / 90720.0
    } else {
        (u.sqrt().cos() - rot_a(u)) / (2.0 * u)
    }
}

/// b(u) = (1 - cos(sqrt(u))) / u, smooth at u = 0.
fn rot_b(u: f64) -> f64 {
    if u <= ROT_SERIES_CUTOFF {
        0.5 - u / 24.0 + u * u / 720.0 - u * u * u / 40320.0
    } else {
        (1.0 - u.sqrt().cos()) / u
    }
}

fn rot_b_deriv(u: f64) -> f64 {
    if u <= ROT_SERIES_CUTOFF {
        -1.0 / 24.0 + u / 360.0 - u * u / 13440.0 + u * u * u / 907200.0
    } else {
        (rot_a(u) - 2.0 * rot_b(u)) / (2.0 * u)
    }
}

impl<E: Element> Tensor<E> {
    pub fn exp(&self) -> Result<Tensor<E>> {
        unary("exp", self, |v| v.exp(), |_, y| y, true)
    }

    /// |x|; the subgradient at zero is taken as 0.
    pub fn abs(&self) -> Result<Tensor<E>> {
        unary(
            "abs",
            self,
            |v| v.abs(),
            |x, _| {
                if x > E::ZERO {
                    E::ONE
                } else if x < E::ZERO {
                    -E::ONE
                } else {
                    E::ZERO
                }
            },
            false,
        )
    }

    /// 1/x; any exactly-zero element is a domain error.
    pub fn recip(&self) -> Result<Tensor<E>> {
        if self.values().iter().any(|v| *v == E::ZERO) {
            return Err(Error::domain("reciprocal of a zero element"));
        }
        unary("recip", self, |v| E::ONE / v, |_, y| -(y * y), false)
    }

    pub fn elu(&self) -> Result<Tensor<E>> {
        unary(
            "elu",
            self,
            |v| if v >= E::ZERO { v } else { v.exp() - E::ONE },
            |x, y| if x >= E::ZERO { E::ONE } else { y + E::ONE },
            false,
        )
    }

    pub fn sigmoid(&self) -> Result<Tensor<E>> {
        unary(
            "sigmoid",
            self,
            sigmoid_stable,
            |_, y| y * (E::ONE - y),
            false,
        )
    }

    pub fn activation(&self, kind: Activation) -> Result<Tensor<E>> {
        match kind {
            Activation::Elu => self.elu(),
            Activation::Sigmoid => self.sigmoid(),
            Activation::Identity => unary("identity", self, |v| v, |_, _| E::ONE, false),
        }
    }

    /// Rotation coefficient sin(sqrt(u))/sqrt(u) for u = squared rotation
    /// angle. Requires u >= 0.
    pub fn rodrigues_coeff_a(&self) -> Result<Tensor<E>> {
        if self.values().iter().any(|v| *v < E::ZERO) {
            return Err(Error::domain("rodrigues_coeff_a requires nonnegative input"));
        }
        unary(
            "rodrigues_coeff_a",
            self,
            |v| E::from_f64(rot_a(v.to_f64())),
            |x, _| E::from_f64(rot_a_deriv(x.to_f64())),
            false,
        )
    }

    /// Rotation coefficient (1 - cos(sqrt(u)))/u for u = squared rotation
    /// angle. Requires u >= 0.
    pub fn rodrigues_coeff_b(&self) -> Result<Tensor<E>> {
        if self.values().iter().any(|v| *v < E::ZERO) {
            return Err(Error::domain("rodrigues_coeff_b requires nonnegative input"));
        }
        unary(
            "rodrigues_coeff_b",
            self,
            |v| E::from_f64(rot_b(v.to_f64())),
            |x, _| E::from_f64(rot_b_deriv(x.to_f64())),
            false,
        )
    }
}
