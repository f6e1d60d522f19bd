"""Shapes, leaf containers, the arena and the two-pass evaluation driver.

An expression is a tree of :class:`Expr` nodes.  Building it allocates nothing
for values or adjoints; :func:`bind_size` reports exactly how much storage the
tree needs, an :class:`Arena` provides it as two contiguous buffers, and
:func:`bind` hands every node its window.  Afterwards :func:`forward`,
:func:`backward` and :func:`autodiff` only write into memory that already
exists.

Variables (:class:`Var`) are containers, not nodes.  Every time a ``Var``
appears in an expression a fresh :class:`VarRef` leaf is created, so a graph
in which one variable feeds several parents is automatically a tree whose
leaves all increment the same adjoint buffer.

Matrices are stored column-major throughout.
"""

from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, ShapeError

SCALAR = "scalar"
VECTOR = "vector"
MATRIX = "matrix"


@dataclass(frozen=True)
class Shape:
    kind: str
    rows: int = 1
    cols: int = 1

    def __post_init__(self):
        if self.kind not in (SCALAR, VECTOR, MATRIX):
            raise ShapeError(f"unknown shape kind {self.kind!r}")
        if self.rows < 1 or self.cols < 1:
            raise ShapeError(f"shape dimensions must be positive, got {self.rows}x{self.cols}")
        if self.kind == SCALAR and (self.rows, self.cols) != (1, 1):
            raise ShapeError("a scalar shape is 1x1")
        if self.kind == VECTOR and self.cols != 1:
            raise ShapeError("a vector shape is n x 1")

    @classmethod
    def scalar(cls):
        return cls(SCALAR)

    @classmethod
    def vector(cls, n):
        return cls(VECTOR, int(n), 1)

    @classmethod
    def matrix(cls, rows, cols):
        return cls(MATRIX, int(rows), int(cols))

    @classmethod
    def of(cls, array):
        """Infer a shape from the dimensionality of ``array``."""
        a = np.asarray(array)
        if a.ndim == 0:
            return cls.scalar()
        if a.ndim == 1:
            return cls.vector(a.shape[0])
        if a.ndim == 2:
            return cls.matrix(*a.shape)
        raise ShapeError(f"arrays of dimension {a.ndim} are not supported")

    @property
    def size(self):
        return self.rows * self.cols

    @property
    def is_scalar(self):
        return self.kind == SCALAR

    @property
    def array_shape(self):
        if self.kind == SCALAR:
            return ()
        if self.kind == VECTOR:
            return (self.rows,)
        return (self.rows, self.cols)

    def __str__(self):
        if self.kind == SCALAR:
            return "scalar"
        if self.kind == VECTOR:
            return f"vector({self.rows})"
        return f"matrix({self.rows},{self.cols})"


def shaped(flat, shape):
    """Column-major view of a flat buffer with the natural numpy shape."""
    return flat.reshape(shape.array_shape, order="F")


class Operand:
    """Operator overloads shared by variables and expression nodes."""

    __array_priority__ = 100  # make ndarray defer to our reflected operators

    def __add__(self, other):
        return _nodes.add(self, other)

    def __radd__(self, other):
        return _nodes.add(other, self)

    def __sub__(self, other):
        return _nodes.sub(self, other)

    def __rsub__(self, other):
        return _nodes.sub(other, self)

    def __mul__(self, other):
        return _nodes.mul(self, other)

    def __rmul__(self, other):
        return _nodes.mul(other, self)

    def __truediv__(self, other):
        return _nodes.div(self, other)

    def __rtruediv__(self, other):
        return _nodes.div(other, self)

    def __pow__(self, other):
        return _nodes.pow(self, other)

    def __rpow__(self, other):
        return _nodes.pow(other, self)

    def __neg__(self):
        return _nodes.neg(self)

    def __matmul__(self, other):
        return _nodes.matmul(self, other)

    def __rmatmul__(self, other):
        return _nodes.matmul(other, self)


class Var(Operand):
    """A leaf container owning a value buffer and a same-sized adjoint buffer.

    ``value`` may be a float (scalar), a 1-d array (vector) or a 2-d array
    (matrix).  ``values`` and ``adjoints`` are the flat column-major buffers;
    ``value`` and ``grad`` are shaped views of them.
    """

    def __init__(self, value=0.0, shape=None, name=None):
        arr = np.asarray(value, dtype=np.float64)
        if shape is None:
            shape = Shape.of(arr)
        self.shape = shape
        self.name = name
        n = shape.size
        self.values = np.zeros(n)
        self.adjoints = np.zeros(n)
        # per-seed staging area; a parent writes a seed here, then it is
        # added into `adjoints`
        self._stage = np.zeros(n)
        self.set_value(arr)

    @classmethod
    def zeros(cls, shape, name=None):
        return cls(0.0, shape=shape, name=name)

    @property
    def value(self):
        return shaped(self.values, self.shape)

    @property
    def grad(self):
        return shaped(self.adjoints, self.shape)

    def set_value(self, value):
        np.copyto(self.value, np.asarray(value, dtype=np.float64))

    def reset_adjoints(self):
        self.adjoints.fill(0.0)

    def __getitem__(self, i):
        if self.shape.kind != VECTOR:
            raise ShapeError("element access is only defined for vector variables")
        return IndexRef(self, i)

    def __len__(self):
        return self.shape.size

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"<Var{label} {self.shape}>"


@dataclass
class ValueAdjView:
    value_offset: int
    adjoint_offset: int
    shape: Shape
    value: np.ndarray
    adjoint: np.ndarray


class Arena:
    """Contiguous value and adjoint regions consumed front to back by binding."""

    def __init__(self, n_values, n_adjoints):
        self.value_region = np.zeros(int(n_values))
        self.adjoint_region = np.zeros(int(n_adjoints))
        self.value_offset = 0
        self.adjoint_offset = 0

    @classmethod
    def for_expr(cls, expr):
        return cls(*bind_size(expr))

    @property
    def capacity(self):
        return self.value_region.size, self.adjoint_region.size

    @property
    def remaining(self):
        return (self.value_region.size - self.value_offset,
                self.adjoint_region.size - self.adjoint_offset)

    def reset(self):
        self.value_offset = 0
        self.adjoint_offset = 0

    def take_view(self, shape, adjoint=True):
        n = shape.size
        na = n if adjoint else 0
        if self.value_offset + n > self.value_region.size:
            raise CapacityError("value region exhausted")
        if self.adjoint_offset + na > self.adjoint_region.size:
            raise CapacityError("adjoint region exhausted")
        v0, a0 = self.value_offset, self.adjoint_offset
        self.value_offset += n
        self.adjoint_offset += na
        return ValueAdjView(v0, a0, shape,
                            self.value_region[v0:v0 + n],
                            self.adjoint_region[a0:a0 + na])

    def take_work(self, n):
        """Scratch space from the value region (counted in ``bind_size``)."""
        if self.value_offset + n > self.value_region.size:
            raise CapacityError("value region exhausted")
        v0 = self.value_offset
        self.value_offset += n
        return self.value_region[v0:v0 + n]


class Expr(Operand):
    """Base class of every expression node.

    Subclasses set ``shape``, ``children`` and ``requires_grad`` in their
    constructor and implement ``_forward`` / ``_backward``.  A node's backward
    reads its own seed from ``self.adjoint`` and writes each child's seed into
    the buffer returned by that child's ``_seed_target``; for children that
    ``accumulate`` (leaf references, placeholder assignments) it then calls
    the child's ``_seed_commit`` so the seed is added to the container.
    """

    children = ()
    requires_grad = True
    accumulates = False
    has_forward = True
    has_backward = True

    value = None
    adjoint = None
    work = None

    def storage_need(self):
        n = self.shape.size
        return n + self.workspace_size(), n

    def workspace_size(self):
        return 0

    def _bind(self, arena):
        self.view = arena.take_view(self.shape)
        self.value = self.view.value
        self.adjoint = self.view.adjoint
        w = self.workspace_size()
        if w:
            self.work = arena.take_work(w)
        self._prepare()

    def _prepare(self):
        """Cache child views once everything below this node is bound."""

    def _forward(self):
        raise NotImplementedError

    def _backward(self):
        raise NotImplementedError

    def _seed_target(self):
        return self.adjoint

    def _seed_commit(self):
        pass

    def __repr__(self):
        return f"<{type(self).__name__} {self.shape}>"


def seed_slot(child):
    """(buffer, commit) pair a parent uses to hand ``child`` its seed.

    ``buffer`` is None when the child needs no seed at all (constants and
    constant sub-trees); ``commit`` is None unless the child accumulates.
    """
    if not child.requires_grad:
        return None, None
    target = child._seed_target()
    if target is None:
        return None, None
    return target, (child._seed_commit if child.accumulates else None)


class VarRef(Expr):
    """One reference to a :class:`Var` inside an expression tree."""

    accumulates = True
    has_forward = False
    has_backward = False

    def __init__(self, var):
        self.var = var
        self.shape = var.shape
        self.value = var.values

    def storage_need(self):
        return 0, 0

    def _bind(self, arena):
        self.value = self.var.values

    def _seed_target(self):
        return self.var._stage

    def _seed_commit(self):
        a = self.var.adjoints
        np.add(a, self.var._stage, out=a)

    def __repr__(self):
        return f"<VarRef {self.var!r}>"


class IndexRef(Expr):
    """A reference to element ``i`` of a vector :class:`Var` (a scalar leaf)."""

    accumulates = True
    has_forward = False
    has_backward = False

    def __init__(self, var, i):
        n = var.shape.size
        if not -n <= i < n:
            raise IndexError(f"index {i} out of range for {var.shape}")
        i = i % n
        self.var = var
        self.index = i
        self.shape = Shape.scalar()
        self.value = var.values[i:i + 1]
        self._adj = var.adjoints[i:i + 1]
        self._stage = var._stage[i:i + 1]

    def storage_need(self):
        return 0, 0

    def _bind(self, arena):
        pass

    def _seed_target(self):
        return self._stage

    def _seed_commit(self):
        np.add(self._adj, self._stage, out=self._adj)

    def __repr__(self):
        return f"<IndexRef {self.var!r}[{self.index}]>"


def as_expr(obj):
    """Coerce a Var, number or array into an expression node."""
    if isinstance(obj, Expr):
        return obj
    if isinstance(obj, Var):
        return VarRef(obj)
    return _nodes.Constant(obj)


def postorder(root):
    """Nodes in forward-evaluation order (depth-first, left to right).

    Raises ValueError if a node object occurs twice: sub-expressions must
    form a tree.  Share values through a placeholder ``Var`` and ``assign``.
    """
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            raise ValueError(
                f"{node!r} appears more than once in the expression; "
                "reuse a value through a placeholder Var instead")
        seen.add(id(node))
        stack.append((node, True))
        for child in reversed(node.children):
            stack.append((child, False))
    return order


def bind_size(expr):
    """Exact (value_count, adjoint_count) needed to bind ``expr``."""
    nv = na = 0
    for node in postorder(as_expr(expr)):
        v, a = node.storage_need()
        nv += v
        na += a
    return nv, na


class BoundExpr:
    """An expression whose nodes all hold windows into one arena."""

    def __init__(self, expr, arena, nodes):
        self.expr = expr
        self.arena = arena
        self.nodes = nodes
        self.shape = expr.shape
        self._fwd = [n._forward for n in nodes if n.has_forward]
        self._bwd = [n._backward for n in reversed(nodes)
                     if n.has_backward and n.requires_grad]
        self._root_value = shaped(expr.value, expr.shape)
        self._root_seed, self._root_commit = seed_slot(expr)
        self._forwarded = False

    def forward(self):
        for f in self._fwd:
            f()
        self._forwarded = True
        return self._root_value

    def backward(self, seed=1.0):
        if not self._forwarded:
            raise RuntimeError("backward() called before forward()")
        target = self._root_seed
        if target is not None:
            if isinstance(seed, (float, int)):
                target.fill(seed)
            else:
                s = np.asarray(seed, dtype=np.float64)
                if s.shape != self.shape.array_shape and s.size != self.shape.size:
                    raise ShapeError(f"seed of shape {s.shape} for a {self.shape} root")
                np.copyto(target, s.reshape(-1, order="F"))
            if self._root_commit is not None:
                self._root_commit()
        for b in self._bwd:
            b()

    def autodiff(self):
        if not self.shape.is_scalar:
            raise ShapeError(f"autodiff needs a scalar root, got {self.shape}")
        self.forward()
        self.backward(1.0)
        return float(self.expr.value[0])

    @property
    def value(self):
        return self._root_value


def bind(expr, arena=None):
    """Assign arena windows to every node of ``expr`` in forward order.

    With ``arena=None`` an exactly sized arena is created.
    """
    expr = as_expr(expr)
    nodes = postorder(expr)
    need = (0, 0)
    for node in nodes:
        v, a = node.storage_need()
        need = (need[0] + v, need[1] + a)
    if arena is None:
        arena = Arena(*need)
    free_v, free_a = arena.remaining
    if need[0] > free_v or need[1] > free_a:
        raise CapacityError(
            f"expression needs {need} values/adjoints, arena has {(free_v, free_a)} free")
    for node in nodes:
        node._bind(arena)
    return BoundExpr(expr, arena, nodes)


def forward(bound):
    return bound.forward()


def backward(bound, seed=1.0):
    bound.backward(seed)


def autodiff(bound):
    """Forward pass, then backward with seed 1; returns the scalar value."""
    return bound.autodiff()


def reset_adjoints(variables):
    for v in variables:
        v.adjoints.fill(0.0)


from . import nodes as _nodes  # noqa: E402  (operator overloads need the node library)
