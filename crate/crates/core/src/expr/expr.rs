//! Expression trees used to write templates.

use std::ops::{Add, Div, Mul, Neg, Sub};

use super::builder::{BlockId, ParamId};

/// One coordinate of a variable reference, resolved per instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IndexTerm {
    /// `tuple[slot] + offset`
    Slot { slot: usize, offset: i64 },
    /// A constant coordinate.
    Fixed(usize),
}

impl IndexTerm {
    pub fn slot(slot: usize) -> Self {
        IndexTerm::Slot { slot, offset: 0 }
    }

    pub fn shifted(slot: usize, offset: i64) -> Self {
        IndexTerm::Slot { slot, offset }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct VarRef {
    pub block: BlockId,
    pub index: Vec<IndexTerm>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Square,
    Recip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

/// Expression over one instance of an index tuple.
///
/// Supported operators are `+ − × ÷`, negation, `square` and `recip`; the
/// set is closed under what the bundled models need and can be extended by
/// adding variants plus their first and second partials in the tape.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Param(ParamId),
    /// Per-instance data value attached to the index set.
    Data(usize),
    Var(VarRef),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn var(block: BlockId, index: &[IndexTerm]) -> Self {
        Expr::Var(VarRef { block, index: index.to_vec() })
    }

    pub fn param(p: ParamId) -> Self {
        Expr::Param(p)
    }

    pub fn data(slot: usize) -> Self {
        Expr::Data(slot)
    }

    pub fn constant(v: f64) -> Self {
        Expr::Const(v)
    }

    pub fn square(self) -> Self {
        Expr::Unary(UnaryOp::Square, Box::new(self))
    }

    pub fn recip(self) -> Self {
        Expr::Unary(UnaryOp::Recip, Box::new(self))
    }

    fn binary(op: BinaryOp, a: Expr, b: Expr) -> Self {
        Expr::Binary(op, Box::new(a), Box::new(b))
    }
}

impl From<f64> for Expr {
    fn from(v: f64) -> Self {
        Expr::Const(v)
    }
}

impl Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::Unary(UnaryOp::Neg, Box::new(self))
    }
}

macro_rules! binop {
    ($trait:ident, $method:ident, $op:expr) => {
        impl $trait<Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::binary($op, self, rhs)
            }
        }
        impl $trait<f64> for Expr {
            type Output = Expr;
            fn $method(self, rhs: f64) -> Expr {
                Expr::binary($op, self, Expr::Const(rhs))
            }
        }
        impl $trait<Expr> for f64 {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::binary($op, Expr::Const(self), rhs)
            }
        }
    };
}

binop!(Add, add, BinaryOp::Add);
binop!(Sub, sub, BinaryOp::Sub);
binop!(Mul, mul, BinaryOp::Mul);
binop!(Div, div, BinaryOp::Div);
