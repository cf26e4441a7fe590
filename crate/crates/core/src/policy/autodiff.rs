//! Scalar reverse-mode automatic differentiation on a tape.
//!
//! This is the general-purpose gradient: any loss built from [`Var`]
//! operations can be differentiated exactly. The training loop uses the
//! specialised layer-wise backward pass in [`super::mlp`], which is much
//! faster; both are checked against finite differences.

use std::cell::RefCell;
use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
struct Node {
    parents: [(usize, f64); 2],
    arity: u8,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    error: RefCell<Option<Error>>,
}

#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    idx: usize,
    val: f64,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var({}, #{})", self.val, self.idx)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&self, parents: [(usize, f64); 2], arity: u8) -> usize {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { parents, arity });
        nodes.len() - 1
    }

    /// A leaf that gradients are taken with respect to.
    pub fn var(&self, val: f64) -> Var<'_> {
        let idx = self.push([(0, 0.0); 2], 0);
        Var {
            tape: self,
            idx,
            val,
        }
    }

    pub fn constant(&self, val: f64) -> Var<'_> {
        self.var(val)
    }

    fn fail(&self, op: &'static str, reason: String) {
        let mut e = self.error.borrow_mut();
        if e.is_none() {
            *e = Some(Error::NonDifferentiable { op, reason });
        }
    }

    fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    /// Adjoints of every node with respect to `out`.
    fn adjoints(&self, out: Var<'_>) -> Vec<f64> {
        let nodes = self.nodes.borrow();
        let mut adj = vec![0.0; nodes.len()];
        adj[out.idx] = 1.0;
        for i in (0..=out.idx).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            let node = nodes[i];
            for &(p, w) in &node.parents[..node.arity as usize] {
                adj[p] += a * w;
            }
        }
        adj
    }
}

impl<'t> Var<'t> {
    pub fn value(&self) -> f64 {
        self.val
    }

    fn unary(self, val: f64, d: f64) -> Var<'t> {
        let idx = self.tape.push([(self.idx, d), (0, 0.0)], 1);
        Var {
            tape: self.tape,
            idx,
            val,
        }
    }

    fn binary(self, other: Var<'t>, val: f64, da: f64, db: f64) -> Var<'t> {
        let idx = self.tape.push([(self.idx, da), (other.idx, db)], 2);
        Var {
            tape: self.tape,
            idx,
            val,
        }
    }

    fn lift(self, c: f64) -> Var<'t> {
        self.tape.constant(c)
    }

    pub fn exp(self) -> Var<'t> {
        let e = self.val.exp();
        self.unary(e, e)
    }

    pub fn ln(self) -> Var<'t> {
        if !(self.val > 0.0) {
            self.tape.fail("ln", format!("argument {} is not positive", self.val));
        }
        self.unary(self.val.ln(), 1.0 / self.val)
    }

    pub fn tanh(self) -> Var<'t> {
        let t = self.val.tanh();
        self.unary(t, 1.0 - t * t)
    }

    pub fn sqrt(self) -> Var<'t> {
        if !(self.val > 0.0) {
            self.tape.fail("sqrt", format!("argument {} is not positive", self.val));
        }
        let s = self.val.sqrt();
        self.unary(s, 0.5 / s)
    }

    pub fn powi(self, n: i32) -> Var<'t> {
        self.unary(self.val.powi(n), n as f64 * self.val.powi(n - 1))
    }

    pub fn abs(self) -> Var<'t> {
        if self.val == 0.0 {
            self.tape.fail("abs", "kink at zero".into());
        }
        self.unary(self.val.abs(), self.val.signum())
    }

    /// Ties propagate the gradient to `self`.
    pub fn min(self, other: Var<'t>) -> Var<'t> {
        if self.val <= other.val {
            self.binary(other, self.val, 1.0, 0.0)
        } else {
            self.binary(other, other.val, 0.0, 1.0)
        }
    }

    /// Ties propagate the gradient to `self`.
    pub fn max(self, other: Var<'t>) -> Var<'t> {
        if self.val >= other.val {
            self.binary(other, self.val, 1.0, 0.0)
        } else {
            self.binary(other, other.val, 0.0, 1.0)
        }
    }

    pub fn clamp(self, lo: f64, hi: f64) -> Var<'t> {
        if self.val < lo {
            self.unary(lo, 0.0)
        } else if self.val > hi {
            self.unary(hi, 0.0)
        } else {
            self.unary(self.val, 1.0)
        }
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, o: Var<'t>) -> Var<'t> {
        self.binary(o, self.val + o.val, 1.0, 1.0)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, o: Var<'t>) -> Var<'t> {
        self.binary(o, self.val - o.val, 1.0, -1.0)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, o: Var<'t>) -> Var<'t> {
        self.binary(o, self.val * o.val, o.val, self.val)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, o: Var<'t>) -> Var<'t> {
        if o.val == 0.0 {
            self.tape.fail("div", "division by zero".into());
        }
        self.binary(o, self.val / o.val, 1.0 / o.val, -self.val / (o.val * o.val))
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.unary(-self.val, -1.0)
    }
}

macro_rules! scalar_ops {
    ($($tr:ident $m:ident),*) => {$(
        impl<'t> $tr<f64> for Var<'t> {
            type Output = Var<'t>;
            fn $m(self, c: f64) -> Var<'t> {
                let c = self.lift(c);
                $tr::$m(self, c)
            }
        }
        impl<'t> $tr<Var<'t>> for f64 {
            type Output = Var<'t>;
            fn $m(self, v: Var<'t>) -> Var<'t> {
                let c = v.lift(self);
                $tr::$m(c, v)
            }
        }
    )*};
}

scalar_ops!(Add add, Sub sub, Mul mul, Div div);

/// Sum of a slice of variables; an empty slice yields a zero constant.
pub fn sum<'t>(tape: &'t Tape, vars: &[Var<'t>]) -> Var<'t> {
    vars.iter()
        .copied()
        .reduce(|a, b| a + b)
        .unwrap_or_else(|| tape.constant(0.0))
}

/// Exact gradient of `loss` at `theta`.
///
/// Fails when the loss passes through a point where one of its primitives is
/// not differentiable, or when it is not finite.
pub fn gradient<F>(theta: &[f64], loss: F) -> Result<Vec<f64>>
where
    F: for<'t> FnOnce(&'t Tape, &[Var<'t>]) -> Var<'t>,
{
    value_and_gradient(theta, loss).map(|(_, g)| g)
}

pub fn value_and_gradient<F>(theta: &[f64], loss: F) -> Result<(f64, Vec<f64>)>
where
    F: for<'t> FnOnce(&'t Tape, &[Var<'t>]) -> Var<'t>,
{
    let tape = Tape::new();
    let leaves: Vec<Var<'_>> = theta.iter().map(|&v| tape.var(v)).collect();
    let out = loss(&tape, &leaves);
    if !std::ptr::eq(out.tape, &tape) || out.idx >= tape.len() {
        return Err(Error::NonDifferentiable {
            op: "output",
            reason: "loss was not built on the provided tape".into(),
        });
    }
    if let Some(e) = tape.error.borrow_mut().take() {
        return Err(e);
    }
    if !out.val.is_finite() {
        return Err(Error::NonDifferentiable {
            op: "output",
            reason: format!("loss value {} is not finite", out.val),
        });
    }
    let adj = tape.adjoints(out);
    let grad: Vec<f64> = leaves.iter().map(|l| adj[l.idx]).collect();
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonDifferentiable {
            op: "output",
            reason: "gradient is not finite".into(),
        });
    }
    Ok((out.val, grad))
}
