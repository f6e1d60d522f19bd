"""The operator library: elementwise maths, reductions, matmul, constants,
placeholder assignment and sequencing.

Every node works on the flat column-major windows it was bound to and uses
``out=`` numpy calls exclusively, so evaluation never allocates array
buffers.  Scalar operands are passed to ufuncs as length-1 views for the
same reason (a bare Python float would be boxed into a fresh 0-d array).
"""

import builtins
import math

import numpy as np

from .core import (
    MATRIX,
    SCALAR,
    VECTOR,
    Expr,
    IndexRef,
    Shape,
    Var,
    as_expr,
    seed_slot,
    shaped,
)
from .errors import DomainError, ShapeError


def _const(x):
    a = np.full(1, x)
    a.flags.writeable = False
    return a


_ONE = _const(1.0)
_HALF = _const(0.5)


class Constant(Expr):
    """Immutable data.  Backward is a no-op; storage is (size, 0)."""

    requires_grad = False
    has_forward = False
    has_backward = False

    def __init__(self, data):
        arr = np.asarray(data, dtype=np.float64)
        self.shape = Shape.of(arr)
        self.data = np.array(arr.reshape(-1, order="F"))
        self.data.flags.writeable = False
        # number of times anything asked this node for a seed buffer
        self.adjoint_writes = 0

    def storage_need(self):
        return self.shape.size, 0

    def _bind(self, arena):
        self.view = arena.take_view(self.shape, adjoint=False)
        np.copyto(self.view.value, self.data)
        self.value = self.view.value
        self.adjoint = self.view.adjoint

    def _seed_target(self):
        self.adjoint_writes += 1
        return None

    @property
    def array(self):
        return shaped(self.data, self.shape)


def constant(data):
    return Constant(data)


def _first(flat):
    return flat[:1].reshape(())


# ---------------------------------------------------------------- unary ops

class Unary(Expr):
    op = None

    def __init__(self, child):
        self.child = as_expr(child)
        self.children = (self.child,)
        self.shape = self.child.shape
        self.requires_grad = self.child.requires_grad

    def _prepare(self):
        self.c = self.child.value
        self._ct, self._cc = seed_slot(self.child)
        self._v0 = _first(self.value)

    def _commit(self):
        if self._cc is not None:
            self._cc()


class Sin(Unary):
    op = "sin"

    def _forward(self):
        np.sin(self.c, out=self.value)

    def _backward(self):
        t = self._ct
        if t is None:
            return
        np.cos(self.c, out=t)
        np.multiply(t, self.adjoint, out=t)
        self._commit()


class Cos(Unary):
    op = "cos"

    def _forward(self):
        np.cos(self.c, out=self.value)

    def _backward(self):
        t = self._ct
        if t is None:
            return
        np.sin(self.c, out=t)
        np.negative(t, out=t)
        np.multiply(t, self.adjoint, out=t)
        self._commit()


class Tan(Unary):
    op = "tan"

    def _forward(self):
        np.tan(self.c, out=self.value)

    def _backward(self):
        t = self._ct
        if t is None:
            return
        # d tan = 1 + tan^2, reusing the forward result
        np.square(self.value, out=t)
        np.add(t, _ONE, out=t)
        np.multiply(t, self.adjoint, out=t)
        self._commit()


class Exp(Unary):
    op = "exp"

    def _forward(self):
        np.exp(self.c, out=self.value)

    def _backward(self):
        t = self._ct
        if t is None:
            return
        np.multiply(self.adjoint, self.value, out=t)
        self._commit()


class Log(Unary):
    op = "log"

    def _forward(self):
        np.minimum.reduce(self.c, out=self._v0)
        if float(self._v0) <= 0.0:
            raise DomainError(f"log of non-positive value {float(self._v0)}")
        np.log(self.c, out=self.value)

    def _backward(self):
        t = self._ct
        if t is None:
            return
        np.divide(self.adjoint, self.c, out=t)
        self._commit()


class Sqrt(Unary):
    """Square root; ``strict=True`` also rejects zero (for use as a divisor)."""

    op = "sqrt"

    def __init__(self, child, strict=False):
        super().__init__(child)
        self.strict = strict

    def _forward(self):
        np.minimum.reduce(self.c, out=self._v0)
        lo = float(self._v0)
        if lo < 0.0 or (self.strict and lo == 0.0):
            raise DomainError(f"sqrt of {'non-positive' if self.strict else 'negative'} value {lo}")
        np.sqrt(self.c, out=self.value)

    def _backward(self):
        t = self._ct
        if t is None:
            return
        np.divide(self.adjoint, self.value, out=t)
        np.multiply(t, _HALF, out=t)
        self._commit()


class Neg(Unary):
    op = "neg"

    def _forward(self):
        np.negative(self.c, out=self.value)

    def _backward(self):
        t = self._ct
        if t is None:
            return
        np.negative(self.adjoint, out=t)
        self._commit()


UNARY_OPS = {cls.op: cls for cls in (Sin, Cos, Tan, Exp, Log, Sqrt, Neg)}


def elementwise_unary(op, child):
    try:
        return UNARY_OPS[op](child)
    except KeyError:
        raise ValueError(f"unknown unary op {op!r}") from None


def sin(x):
    return Sin(x)


def cos(x):
    return Cos(x)


def tan(x):
    return Tan(x)


def exp(x):
    return Exp(x)


def log(x):
    return Log(x)


def sqrt(x, strict=False):
    return Sqrt(x, strict)


def neg(x):
    return Neg(x)


# --------------------------------------------------------------- binary ops

def broadcast_shape(a, b):
    if a == b:
        return a
    if a.is_scalar:
        return b
    if b.is_scalar:
        return a
    raise ShapeError(f"incompatible operand shapes {a} and {b}")


class Binary(Expr):
    """Elementwise binary node.  A scalar operand broadcasts over the other;
    its seed is the sum of the broadcast seeds."""

    op = None

    def __init__(self, left, right):
        self.left = as_expr(left)
        self.right = as_expr(right)
        self.children = (self.left, self.right)
        self.shape = broadcast_shape(self.left.shape, self.right.shape)
        self.requires_grad = self.left.requires_grad or self.right.requires_grad
        # which side (if any) is a scalar broadcast against a larger output
        self.lb = self.left.shape.is_scalar and not self.shape.is_scalar
        self.rb = self.right.shape.is_scalar and not self.shape.is_scalar

    def _prepare(self):
        self.L = self.left.value
        self.R = self.right.value
        self._lt, self._lc = seed_slot(self.left)
        self._rt, self._rc = seed_slot(self.right)
        self._lt0 = _first(self._lt) if self._lt is not None else None
        self._rt0 = _first(self._rt) if self._rt is not None else None


class Add(Binary):
    op = "add"

    def _forward(self):
        np.add(self.L, self.R, out=self.value)

    def _backward(self):
        s = self.adjoint
        if self._rt is not None:
            if self.rb:
                np.add.reduce(s, out=self._rt0)
            else:
                np.copyto(self._rt, s)
            if self._rc is not None:
                self._rc()
        if self._lt is not None:
            if self.lb:
                np.add.reduce(s, out=self._lt0)
            else:
                np.copyto(self._lt, s)
            if self._lc is not None:
                self._lc()


class Sub(Binary):
    op = "sub"

    def _forward(self):
        np.subtract(self.L, self.R, out=self.value)

    def _backward(self):
        s = self.adjoint
        if self._rt is not None:
            if self.rb:
                np.add.reduce(s, out=self._rt0)
                np.negative(self._rt, out=self._rt)
            else:
                np.negative(s, out=self._rt)
            if self._rc is not None:
                self._rc()
        if self._lt is not None:
            if self.lb:
                np.add.reduce(s, out=self._lt0)
            else:
                np.copyto(self._lt, s)
            if self._lc is not None:
                self._lc()


class Mul(Binary):
    op = "mul"

    def _forward(self):
        np.multiply(self.L, self.R, out=self.value)

    def _backward(self):
        s = self.adjoint
        if self._rt is not None:
            if self.rb:
                np.dot(s, self.L, out=self._rt0)
            else:
                np.multiply(s, self.L, out=self._rt)
            if self._rc is not None:
                self._rc()
        if self._lt is not None:
            if self.lb:
                np.dot(s, self.R, out=self._lt0)
            else:
                np.multiply(s, self.R, out=self._lt)
            if self._lc is not None:
                self._lc()


class Div(Binary):
    op = "div"

    def workspace_size(self):
        # sum_i seed_i / r_i for a broadcast numerator needs a scratch vector
        return self.shape.size if self.lb else 0

    def _forward(self):
        np.divide(self.L, self.R, out=self.value)

    def _backward(self):
        s = self.adjoint
        rt = self._rt
        if rt is not None:
            # d(l/r)/dr = -(l/r)/r
            if self.rb:
                np.dot(s, self.value, out=self._rt0)
            else:
                np.multiply(s, self.value, out=rt)
            np.divide(rt, self.R, out=rt)
            np.negative(rt, out=rt)
            if self._rc is not None:
                self._rc()
        if self._lt is not None:
            if self.lb:
                np.divide(s, self.R, out=self.work)
                np.add.reduce(self.work, out=self._lt0)
            else:
                np.divide(s, self.R, out=self._lt)
            if self._lc is not None:
                self._lc()


class Pow(Binary):
    op = "pow"

    def workspace_size(self):
        return self.shape.size if (self.lb or self.rb) else 0

    def _prepare(self):
        super()._prepare()
        self._v0 = _first(self.value)

    def _forward(self):
        if self.right.requires_grad:
            np.minimum.reduce(self.L, out=self._v0)
            if float(self._v0) <= 0.0:
                raise DomainError("pow with a differentiable exponent needs a positive base")
        np.power(self.L, self.R, out=self.value)

    def _backward(self):
        s = self.adjoint
        rt = self._rt
        if rt is not None:
            # d(l^r)/dr = l^r log l
            if self.rb:
                w = self.work
                np.log(self.L, out=w)
                np.multiply(w, self.value, out=w)
                np.dot(w, s, out=self._rt0)
            else:
                np.log(self.L, out=rt)
                np.multiply(rt, self.value, out=rt)
                np.multiply(rt, s, out=rt)
            if self._rc is not None:
                self._rc()
        lt = self._lt
        if lt is not None:
            # d(l^r)/dl = r l^(r-1)
            w = self.work if self.lb else lt
            np.subtract(self.R, _ONE, out=w)
            np.power(self.L, w, out=w)
            np.multiply(w, self.R, out=w)
            if self.lb:
                np.dot(w, s, out=self._lt0)
            else:
                np.multiply(w, s, out=w)
            if self._lc is not None:
                self._lc()


BINARY_OPS = {cls.op: cls for cls in (Add, Sub, Mul, Div, Pow)}


def elementwise_binary(op, left, right):
    try:
        return BINARY_OPS[op](left, right)
    except KeyError:
        raise ValueError(f"unknown binary op {op!r}") from None


def add(a, b):
    return Add(a, b)


def sub(a, b):
    return Sub(a, b)


def mul(a, b):
    return Mul(a, b)


def div(a, b):
    return Div(a, b)


def pow(a, b):  # noqa: A001
    return Pow(a, b)


# ---------------------------------------------------------------- reductions

class Reduce(Expr):
    def __init__(self, child):
        self.child = as_expr(child)
        self.children = (self.child,)
        self.shape = Shape.scalar()
        self.requires_grad = self.child.requires_grad

    def _prepare(self):
        self.c = self.child.value
        self._ct, self._cc = seed_slot(self.child)
        self._v0 = _first(self.value)


class Sum(Reduce):
    op = "sum"

    def _forward(self):
        np.add.reduce(self.c, out=self._v0)

    def _backward(self):
        t = self._ct
        if t is None:
            return
        np.copyto(t, self.adjoint)
        if self._cc is not None:
            self._cc()


class Prod(Reduce):
    """Product of all elements.

    Backward uses ``P / x_i`` when no element is zero.  With exactly one zero
    at ``k`` only that component gets a (leave-one-out) gradient; with two or
    more zeros the gradient vanishes.
    """

    op = "prod"

    def _forward(self):
        np.multiply.reduce(self.c, out=self._v0)

    def _backward(self):
        t = self._ct
        if t is None:
            return
        c = self.c
        zeros = c.size - np.count_nonzero(c)
        if zeros == 0:
            np.divide(self.value, c, out=t)
            np.multiply(t, self.adjoint, out=t)
        else:
            t.fill(0.0)
            if zeros == 1:
                k = next(i for i in range(c.size) if c[i] == 0.0)
                rest = math.prod(c[:k].tolist()) * math.prod(c[k + 1:].tolist())
                t[k] = float(self.adjoint[0]) * rest
        if self._cc is not None:
            self._cc()


def reduce_sum(x):
    return Sum(x)


def reduce_prod(x):
    return Prod(x)


sum = reduce_sum  # noqa: A001
prod = reduce_prod


# -------------------------------------------------------------------- matmul

def _as_matrix(shape):
    return shape.rows, shape.cols


class MatMul(Expr):
    """Matrix product; vectors are columns.  Backward:
    left seed = G R^T, right seed = L^T G."""

    op = "matmul"

    def __init__(self, left, right):
        self.left = as_expr(left)
        self.right = as_expr(right)
        self.children = (self.left, self.right)
        r, k = _as_matrix(self.left.shape)
        k2, c = _as_matrix(self.right.shape)
        if k != k2:
            raise ShapeError(
                f"matmul inner dimensions differ: {self.left.shape} @ {self.right.shape}")
        if self.left.shape.is_scalar and self.right.shape.is_scalar:
            self.shape = Shape.scalar()
        elif self.right.shape.kind == VECTOR:
            self.shape = Shape.vector(r)
        else:
            self.shape = Shape.matrix(r, c)
        self._dims = (r, k, c)
        self.requires_grad = self.left.requires_grad or self.right.requires_grad

    def _prepare(self):
        r, k, c = self._dims
        self.Lm = self.left.value.reshape((r, k), order="F")
        self.Rm = self.right.value.reshape((k, c), order="F")
        self.Om = self.value.reshape((r, c), order="F")
        self.Gm = self.adjoint.reshape((r, c), order="F")
        lt, self._lc = seed_slot(self.left)
        rt, self._rc = seed_slot(self.right)
        self._ltm = lt.reshape((r, k), order="F") if lt is not None else None
        self._rtm = rt.reshape((k, c), order="F") if rt is not None else None

    def _forward(self):
        np.matmul(self.Lm, self.Rm, out=self.Om)

    def _backward(self):
        if self._rtm is not None:
            np.matmul(self.Lm.T, self.Gm, out=self._rtm)
            if self._rc is not None:
                self._rc()
        if self._ltm is not None:
            np.matmul(self.Gm, self.Rm.T, out=self._ltm)
            if self._lc is not None:
                self._lc()


def matmul(a, b):
    return MatMul(a, b)


# ------------------------------------------------- placeholders and sequencing

class Assign(Expr):
    """``target := child`` for a placeholder Var.

    Later references to ``target`` read the assigned value.  In the reverse
    sweep the adjoint accumulated in ``target`` becomes the child's seed and
    is then cleared, because it belonged to the value this node produced,
    not to whatever ``target`` held before.
    """

    accumulates = True
    requires_grad = True

    def __init__(self, target, child):
        self.target = target
        self.child = as_expr(child)
        self.children = (self.child,)
        if self.child.shape != target.shape:
            raise ShapeError(f"cannot assign {self.child.shape} to {target.shape} placeholder")
        self.shape = target.shape
        self.value = target.values

    def storage_need(self):
        return 0, 0

    def _bind(self, arena):
        self.value = self.target.values
        self._ct, self._cc = seed_slot(self.child)
        self.c = self.child.value

    def _forward(self):
        np.copyto(self.target.values, self.c)

    def _backward(self):
        adj = self.target.adjoints
        if self._ct is not None:
            np.copyto(self._ct, adj)
        adj.fill(0.0)
        if self._cc is not None:
            self._cc()

    def _seed_target(self):
        return self.target._stage

    def _seed_commit(self):
        a = self.target.adjoints
        np.add(a, self.target._stage, out=a)


class IndexAssign(Expr):
    """``target[i] := child`` for a vector placeholder and a scalar child."""

    accumulates = True
    requires_grad = True

    def __init__(self, target, index, child):
        self.target = target
        self.index = index
        self.child = as_expr(child)
        self.children = (self.child,)
        if not self.child.shape.is_scalar:
            raise ShapeError(f"element assignment needs a scalar, got {self.child.shape}")
        self.shape = Shape.scalar()
        self._val = target.values[index:index + 1]
        self._adj = target.adjoints[index:index + 1]
        self._stage = target._stage[index:index + 1]
        self.value = self._val

    def storage_need(self):
        return 0, 0

    def _bind(self, arena):
        self._ct, self._cc = seed_slot(self.child)
        self.c = self.child.value

    def _forward(self):
        np.copyto(self._val, self.c)

    def _backward(self):
        if self._ct is not None:
            np.copyto(self._ct, self._adj)
        self._adj.fill(0.0)
        if self._cc is not None:
            self._cc()

    def _seed_target(self):
        return self._stage

    def _seed_commit(self):
        np.add(self._adj, self._stage, out=self._adj)


def assign(target, child):
    """Placeholder assignment: ``assign(x, y * z)`` or ``assign(h[0], ...)``."""
    if isinstance(target, IndexRef):
        return IndexAssign(target.var, target.index, child)
    if isinstance(target, Var):
        return Assign(target, child)
    raise TypeError("assignment target must be a Var or an element of one")


class Seq(Expr):
    """Evaluate sub-expressions in order; the value is the last one's.

    The reverse sweep visits them in the opposite order.  Only the last
    sub-expression is seeded by the parent; earlier ones contribute through
    the placeholders they assign (any other earlier expression gets a zero
    seed).
    """

    has_forward = False

    def __init__(self, *exprs):
        if not exprs:
            raise ValueError("seq needs at least one expression")
        self.children = tuple(as_expr(e) for e in exprs)
        self.last = self.children[-1]
        self.shape = self.last.shape
        self.requires_grad = builtins.any(c.requires_grad for c in self.children)
        self.accumulates = self.last.accumulates

    def storage_need(self):
        return 0, 0

    def _bind(self, arena):
        self.value = self.last.value
        self._zero = []
        for c in self.children[:-1]:
            t, _ = seed_slot(c)
            if t is not None and not c.accumulates:
                self._zero.append(t)

    def _backward(self):
        for t in self._zero:
            t.fill(0.0)

    def _seed_target(self):
        return self.last._seed_target() if self.last.requires_grad else None

    def _seed_commit(self):
        self.last._seed_commit()


def seq(*exprs):
    if len(exprs) == 1 and isinstance(exprs[0], (list, tuple)):
        exprs = tuple(exprs[0])
    return Seq(*exprs)


__all__ = [
    "Constant", "constant", "Unary", "Sin", "Cos", "Tan", "Exp", "Log", "Sqrt", "Neg",
    "elementwise_unary", "sin", "cos", "tan", "exp", "log", "sqrt", "neg",
    "Binary", "Add", "Sub", "Mul", "Div", "Pow", "elementwise_binary",
    "add", "sub", "mul", "div", "pow", "broadcast_shape",
    "Sum", "Prod", "reduce_sum", "reduce_prod", "sum", "prod",
    "MatMul", "matmul", "Assign", "IndexAssign", "assign", "Seq", "seq",
    "MATRIX", "SCALAR", "VECTOR",
]
