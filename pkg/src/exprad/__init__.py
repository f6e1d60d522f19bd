"""Reverse-mode automatic differentiation over statically composed expressions.

Build an expression from :class:`Var` leaves and the node library, bind it
once to an exactly sized arena, then evaluate it repeatedly without creating
array temporaries::

    >>> import exprad as ad
    >>> x = ad.Var([0.0, 0.0])
    >>> f = ad.bind(ad.log(ad.sum(ad.exp(x))))
    >>> round(f.autodiff(), 6)
    0.693147
    >>> x.grad.tolist()
    [0.5, 0.5]
"""

from .core import (Arena, BoundExpr, Expr, Shape, ValueAdjView, Var, autodiff, backward,
                   bind, bind_size, forward, reset_adjoints)
from .errors import CapacityError, ConfigError, DomainError, ExpradError, ShapeError
from .nodes import (assign, constant, cos, elementwise_binary, elementwise_unary, exp, log,
                    matmul, neg, prod, reduce_prod, reduce_sum, seq, sin, sqrt, sum, tan)
from .stats import cauchy_lpdf, normal_lpdf, uniform_lpdf

__all__ = [
    "Arena", "BoundExpr", "Expr", "Shape", "ValueAdjView", "Var",
    "autodiff", "backward", "bind", "bind_size", "forward", "reset_adjoints",
    "CapacityError", "ConfigError", "DomainError", "ExpradError", "ShapeError",
    "assign", "constant", "cos", "elementwise_binary", "elementwise_unary", "exp", "log",
    "matmul", "neg", "prod", "reduce_prod", "reduce_sum", "seq", "sin", "sqrt", "sum", "tan",
    "cauchy_lpdf", "normal_lpdf", "uniform_lpdf",
]
