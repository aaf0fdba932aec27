"""Define-then-run dense computation graph with reverse-mode differentiation.

A :class:`Graph` is built once from named inputs and primitive operations,
then evaluated any number of times with different bindings::

    g = Graph()
    x = g.leaf("x", (2,))
    y = g.const("y", (2,))
    f = g.dot(x, y)
    trace = g.forward({"x": [1.0, 2.0], "y": [3.0, 4.0]})
    trace.output          # 11.0
    trace.backward()      # {"x": array([3., 4.]), "y": array([0., 0.])}

Leaves receive gradients; constants are bound the same way but act as
stop-gradient inputs (their entry in the gradient map is always zero).
Values are 64-bit numpy arrays; shape rules are checked when a node is added.
"""

from __future__ import annotations

import contextlib
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

log = logging.getLogger(__name__)

LOG_FLOOR = 1e-30
NORM_FLOOR = 1e-12

PRIMITIVES = (
    "add", "sub", "mul", "scale", "matmul", "transpose", "concat_rows",
    "tanh", "exp", "log", "sum", "mean", "l2norm", "dot", "cosine",
    "softmax_rows", "frobenius", "squared_error",
)


class _GuardFilter(logging.Filter):
    def filter(self, record):
        return "guard engaged" not in record.getMessage()


class guards_expected(contextlib.AbstractContextManager):
    """Silence guard warnings inside a block whose inputs are known to be degenerate.

    Reusable: the same instance may be entered more than once.
    """

    def __init__(self):
        self._filter = _GuardFilter()

    def __enter__(self):
        log.addFilter(self._filter)
        return self

    def __exit__(self, *exc):
        log.removeFilter(self._filter)
        return False


class ShapeError(ValueError):
    """A node's inputs violate its operation's shape rule."""


class NumericError(ArithmeticError):
    """A forward value or gradient became non-finite."""


class UsageError(ValueError):
    pass


@dataclass(frozen=True)
class Node:
    op: str
    inputs: tuple[int, ...]
    shape: tuple[int, ...]
    attr: object = None
    name: str | None = None


class Var:
    """Handle to a node; supports ``+ - * @`` and ``.T`` for readability."""

    __slots__ = ("graph", "id")

    def __init__(self, graph: "Graph", node_id: int):
        self.graph = graph
        self.id = node_id

    @property
    def shape(self) -> tuple[int, ...]:
        return self.graph.nodes[self.id].shape

    def __add__(self, other):
        return self.graph.add(self, _lift(self.graph, other))

    def __radd__(self, other):
        return self.graph.add(_lift(self.graph, other), self)

    def __sub__(self, other):
        return self.graph.sub(self, _lift(self.graph, other))

    def __rsub__(self, other):
        return self.graph.sub(_lift(self.graph, other), self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return self.graph.scale(self, float(other))
        return self.graph.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return self.graph.scale(self, -1.0)

    def __matmul__(self, other):
        return self.graph.matmul(self, other)

    @property
    def T(self):
        return self.graph.transpose(self)

    def __repr__(self):
        node = self.graph.nodes[self.id]
        return f"Var(#{self.id} {node.op} {node.shape})"


def _lift(graph: "Graph", x) -> "Var":
    return x if isinstance(x, Var) else graph.literal(x)


def _row_broadcast_ok(a: tuple, b: tuple) -> bool:
    return b == a or b == () or (len(a) == 2 and b == (a[1],))


def _row_scale_ok(a: tuple, b: tuple) -> bool:
    return b == a or b == () or (len(a) == 2 and b == (a[0],))


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    if shape == ():
        return np.asarray(grad.sum())
    return grad.sum(axis=0)


class Graph:
    """Append-only list of primitive nodes. Inputs come first, by name."""

    def __init__(self):
        self.nodes: list[Node] = []
        self.inputs: dict[str, int] = {}
        self._trainable: dict[str, bool] = {}

    # inputs -----------------------------------------------------------
    def _input(self, name: str, shape, trainable: bool) -> Var:
        if name in self.inputs:
            raise UsageError(f"input {name!r} declared twice")
        shape = tuple(int(s) for s in shape)
        if any(s < 1 for s in shape):
            raise ShapeError(f"input {name!r}: dimensions must be positive, got {shape}")
        self.nodes.append(Node("input", (), shape, name=name))
        self.inputs[name] = len(self.nodes) - 1
        self._trainable[name] = trainable
        return Var(self, len(self.nodes) - 1)

    def literal(self, value) -> Var:
        """A fixed constant stored in the graph itself (no binding needed)."""
        arr = np.array(value, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise NumericError("literal contains non-finite values")
        arr.setflags(write=False)
        self.nodes.append(Node("literal", (), arr.shape, arr))
        return Var(self, len(self.nodes) - 1)

    def leaf(self, name: str, shape) -> Var:
        return self._input(name, shape, True)

    def const(self, name: str, shape) -> Var:
        return self._input(name, shape, False)

    @property
    def leaves(self) -> list[str]:
        return [n for n, t in self._trainable.items() if t]

    def var(self, name: str) -> Var:
        return Var(self, self.inputs[name])

    def _add(self, op: str, inputs: Sequence[Var], shape, attr=None) -> Var:
        for v in inputs:
            if v.graph is not self:
                raise UsageError(f"{op}: operand belongs to another graph")
        self.nodes.append(Node(op, tuple(v.id for v in inputs), tuple(shape), attr))
        return Var(self, len(self.nodes) - 1)

    def _fail(self, op: str, *shapes) -> ShapeError:
        return ShapeError(f"node #{len(self.nodes)} ({op}): incompatible shapes {shapes}")

    # primitives -------------------------------------------------------
    def add(self, a: Var, b: Var) -> Var:
        if not _row_broadcast_ok(a.shape, b.shape):
            if _row_broadcast_ok(b.shape, a.shape):
                a, b = b, a
            else:
                raise self._fail("add", a.shape, b.shape)
        return self._add("add", (a, b), a.shape)

    def sub(self, a: Var, b: Var) -> Var:
        if not _row_broadcast_ok(a.shape, b.shape):
            raise self._fail("sub", a.shape, b.shape)
        return self._add("sub", (a, b), a.shape)

    def mul(self, a: Var, b: Var) -> Var:
        """Elementwise product; ``b`` may also be a scalar or one factor per row."""
        if not _row_scale_ok(a.shape, b.shape):
            if _row_scale_ok(b.shape, a.shape):
                a, b = b, a
            else:
                raise self._fail("mul", a.shape, b.shape)
        return self._add("mul", (a, b), a.shape)

    def scale(self, a: Var, c: float) -> Var:
        if not math.isfinite(c):
            raise UsageError(f"scale factor must be finite, got {c}")
        return self._add("scale", (a,), a.shape, float(c))

    def matmul(self, a: Var, b: Var) -> Var:
        sa, sb = a.shape, b.shape
        if len(sa) == 2 and len(sb) == 2 and sa[1] == sb[0]:
            out = (sa[0], sb[1])
        elif len(sa) == 2 and len(sb) == 1 and sa[1] == sb[0]:
            out = (sa[0],)
        elif len(sa) == 1 and len(sb) == 2 and sa[0] == sb[0]:
            out = (sb[1],)
        else:
            raise self._fail("matmul", sa, sb)
        return self._add("matmul", (a, b), out)

    def transpose(self, a: Var) -> Var:
        if len(a.shape) != 2:
            raise self._fail("transpose", a.shape)
        return self._add("transpose", (a,), a.shape[::-1])

    def concat_rows(self, parts: Sequence[Var]) -> Var:
        """Stack vectors (each one row) and matrices along the row axis."""
        if not parts:
            raise UsageError("concat_rows needs at least one operand")
        cols = {p.shape[-1] for p in parts if p.shape}
        if len(cols) != 1 or any(len(p.shape) not in (1, 2) for p in parts):
            raise self._fail("concat_rows", *(p.shape for p in parts))
        rows = sum(1 if len(p.shape) == 1 else p.shape[0] for p in parts)
        return self._add("concat_rows", parts, (rows, cols.pop()))

    def tanh(self, a: Var) -> Var:
        return self._add("tanh", (a,), a.shape)

    def exp(self, a: Var) -> Var:
        return self._add("exp", (a,), a.shape)

    def log(self, a: Var) -> Var:
        """Natural log of ``max(a, 1e-30)``."""
        return self._add("log", (a,), a.shape)

    def _reduce_shape(self, op: str, a: Var, axis):
        if axis is None:
            return ()
        if len(a.shape) != 2 or axis not in (0, 1):
            raise self._fail(op, a.shape)
        return (a.shape[1 - axis],)

    def sum(self, a: Var, axis: int | None = None) -> Var:
        return self._add("sum", (a,), self._reduce_shape("sum", a, axis), axis)

    def mean(self, a: Var, axis: int | None = None) -> Var:
        return self._add("mean", (a,), self._reduce_shape("mean", a, axis), axis)

    def l2norm(self, a: Var, axis: int | None = None) -> Var:
        """Euclidean norm of everything (``axis=None``) or of each row (``axis=1``)."""
        if axis not in (None, 1) or (axis == 1 and len(a.shape) != 2):
            raise self._fail("l2norm", a.shape)
        return self._add("l2norm", (a,), () if axis is None else (a.shape[0],), axis)

    def dot(self, a: Var, b: Var) -> Var:
        if a.shape != b.shape or len(a.shape) not in (1, 2):
            raise self._fail("dot", a.shape, b.shape)
        return self._add("dot", (a, b), () if len(a.shape) == 1 else (a.shape[0],))

    def cosine(self, a: Var, b: Var) -> Var:
        """Cosine similarity of vectors, or row by row (``b`` may be one shared row)."""
        sa, sb = a.shape, b.shape
        if len(sa) == 1 and sb == sa:
            out = ()
        elif len(sa) == 2 and (sb == sa or sb == (sa[1],)):
            out = (sa[0],)
        else:
            raise self._fail("cosine", sa, sb)
        return self._add("cosine", (a, b), out)

    def softmax_rows(self, a: Var) -> Var:
        if len(a.shape) != 2:
            raise self._fail("softmax_rows", a.shape)
        return self._add("softmax_rows", (a,), a.shape)

    def frobenius(self, a: Var) -> Var:
        if len(a.shape) != 2:
            raise self._fail("frobenius", a.shape)
        return self._add("frobenius", (a,), ())

    def squared_error(self, a: Var, b: Var) -> Var:
        if a.shape != b.shape:
            raise self._fail("squared_error", a.shape, b.shape)
        return self._add("squared_error", (a, b), ())

    # composites -------------------------------------------------------
    def reciprocal(self, a: Var) -> Var:
        """``1/a`` for positive ``a``, as ``exp(-log a)``."""
        return self.exp(self.scale(self.log(a), -1.0))

    def abs(self, a: Var) -> Var:
        """Elementwise absolute value of a vector via per-row norms of a column."""
        if len(a.shape) != 1:
            raise self._fail("abs", a.shape)
        return self.l2norm(self.transpose(self.concat_rows([a])), axis=1)

    # execution --------------------------------------------------------
    def forward(self, bindings: Mapping[str, object]) -> "Trace":
        values: list[np.ndarray | None] = [None] * len(self.nodes)
        missing = set(self.inputs) - set(bindings)
        if missing:
            raise UsageError(f"unbound inputs: {sorted(missing)}")
        for name, nid in self.inputs.items():
            arr = np.asarray(bindings[name], dtype=np.float64)
            node = self.nodes[nid]
            if arr.shape != node.shape:
                raise ShapeError(f"input {name!r}: expected shape {node.shape}, got {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise NumericError(f"input {name!r} contains non-finite values")
            values[nid] = arr
        for nid, node in enumerate(self.nodes):
            if node.op == "input":
                continue
            if node.op == "literal":
                values[nid] = node.attr
                continue
            with np.errstate(over="ignore", invalid="ignore"):  # reported below instead
                out = _FORWARD[node.op](node, *(values[i] for i in node.inputs))
            if not np.all(np.isfinite(out)):
                raise NumericError(f"node #{nid} ({node.op}) produced non-finite values")
            values[nid] = out
        return Trace(self, values)


@dataclass
class Trace:
    """Cached node values of one forward evaluation."""

    graph: Graph
    values: list
    _grads: dict = field(default_factory=dict, repr=False)

    @property
    def output(self) -> np.ndarray:
        return self.values[-1]

    def __getitem__(self, v: Var) -> np.ndarray:
        return self.values[v.id]

    def backward(self, output: Var | int | None = None) -> dict[str, np.ndarray]:
        """Gradient of a scalar node with respect to every named input."""
        nodes = self.graph.nodes
        out_id = len(nodes) - 1 if output is None else getattr(output, "id", output)
        if nodes[out_id].shape != ():
            raise UsageError(f"backward needs a scalar output, node #{out_id} has shape {nodes[out_id].shape}")
        grads: list[np.ndarray | None] = [None] * (out_id + 1)
        grads[out_id] = np.asarray(1.0)
        for nid in range(out_id, -1, -1):
            g = grads[nid]
            node = nodes[nid]
            if g is None or node.op in ("input", "literal"):
                continue
            ins = [self.values[i] for i in node.inputs]
            for pos, gi in enumerate(_BACKWARD[node.op](node, g, self.values[nid], *ins)):
                if gi is None:
                    continue
                src = node.inputs[pos]
                grads[src] = gi if grads[src] is None else grads[src] + gi
        result = {}
        for name, nid in self.graph.inputs.items():
            g = grads[nid] if nid <= out_id else None
            if g is None or not self.graph._trainable[name]:
                g = np.zeros(nodes[nid].shape)
            if not np.all(np.isfinite(g)):
                raise NumericError(f"gradient for {name!r} is non-finite")
            result[name] = np.array(g, dtype=np.float64)
        return result


# forward rules --------------------------------------------------------

def _f_sum(node, a):
    return np.asarray(a.sum()) if node.attr is None else a.sum(axis=node.attr)


def _f_mean(node, a):
    return np.asarray(a.mean()) if node.attr is None else a.mean(axis=node.attr)


def _norm(a, axis):
    if axis is None:
        return np.asarray(math.sqrt(float(np.sum(a * a))))
    return np.sqrt(np.sum(a * a, axis=1))


def _f_l2norm(node, a):
    return _norm(a, node.attr)


def _f_mul(node, a, b):
    if b.ndim == 1 and a.ndim == 2 and b.shape != a.shape:
        return a * b[:, None]
    return a * b


def _f_log(node, a):
    if np.any(a < LOG_FLOOR):
        log.warning("log guard engaged: argument below %g", LOG_FLOOR)
    return np.log(np.maximum(a, LOG_FLOOR))


def _guarded(n: np.ndarray, what: str) -> np.ndarray:
    if np.any(n < NORM_FLOOR):
        log.warning("%s guard engaged: norm below %g", what, NORM_FLOOR)
    return np.maximum(n, NORM_FLOOR)


def _f_cosine(node, a, b):
    if a.ndim == 1:
        na = _guarded(_norm(a, None), "cosine")
        nb = _guarded(_norm(b, None), "cosine")
        return np.asarray(float(a @ b) / (float(na) * float(nb)))
    bb = np.broadcast_to(b, a.shape)
    na = _guarded(_norm(a, 1), "cosine")
    nb = _guarded(_norm(bb, 1), "cosine")
    return np.sum(a * bb, axis=1) / (na * nb)


def _f_softmax(node, a):
    z = np.exp(a - a.max(axis=1, keepdims=True))
    return z / z.sum(axis=1, keepdims=True)


def _f_concat(node, *parts):
    return np.vstack([p[None, :] if p.ndim == 1 else p for p in parts])


_FORWARD: dict[str, Callable] = {
    "add": lambda n, a, b: a + b,
    "sub": lambda n, a, b: a - b,
    "mul": _f_mul,
    "scale": lambda n, a: a * n.attr,
    "matmul": lambda n, a, b: a @ b,
    "transpose": lambda n, a: a.T.copy(),
    "concat_rows": _f_concat,
    "tanh": lambda n, a: np.tanh(a),
    "exp": lambda n, a: np.exp(a),
    "log": _f_log,
    "sum": _f_sum,
    "mean": _f_mean,
    "l2norm": _f_l2norm,
    "dot": lambda n, a, b: np.asarray(float(a @ b)) if a.ndim == 1 else np.sum(a * b, axis=1),
    "cosine": _f_cosine,
    "softmax_rows": _f_softmax,
    "frobenius": lambda n, a: _norm(a, None),
    "squared_error": lambda n, a, b: np.asarray(float(np.sum((a - b) ** 2))),
}


# backward rules: (node, upstream grad, output value, *input values) -> per-input grads

def _b_add(n, g, out, a, b):
    return g, _unbroadcast(g, b.shape)


def _b_sub(n, g, out, a, b):
    return g, -_unbroadcast(g, b.shape)


def _b_mul(n, g, out, a, b):
    if b.shape == a.shape:
        return g * b, g * a
    if b.shape == ():
        return g * b, np.asarray(np.sum(g * a))
    return g * b[:, None], np.sum(g * a, axis=1)


def _b_matmul(n, g, out, a, b):
    if a.ndim == 2 and b.ndim == 2:
        return g @ b.T, a.T @ g
    if a.ndim == 2:
        return np.outer(g, b), a.T @ g
    return b @ g, np.outer(a, g)


def _b_concat(n, g, out, *parts):
    res, row = [], 0
    for p in parts:
        if p.ndim == 1:
            res.append(g[row])
            row += 1
        else:
            res.append(g[row:row + p.shape[0]])
            row += p.shape[0]
    return res


def _b_reduce(n, g, out, a, mean: bool):
    if n.attr is None:
        full = np.full(a.shape, float(g))
        return (full / a.size if mean else full,)
    grad = np.expand_dims(g, axis=n.attr)
    grad = np.broadcast_to(grad, a.shape).copy()
    return (grad / a.shape[n.attr] if mean else grad,)


def _b_l2norm(n, g, out, a):
    if n.attr is None:
        return (a * (float(g) / max(float(out), NORM_FLOOR)),)
    return (a * (g / np.maximum(out, NORM_FLOOR))[:, None],)


def _b_dot(n, g, out, a, b):
    if a.ndim == 1:
        return float(g) * b, float(g) * a
    return g[:, None] * b, g[:, None] * a


def _cos_grad(a, b, na_raw, nb_raw):
    na = np.maximum(na_raw, NORM_FLOOR)
    nb = np.maximum(nb_raw, NORM_FLOOR)
    c = np.sum(a * b, axis=-1) / (na * nb)
    # d/da of a.b / (max(|a|,eps) max(|b|,eps)); the norm term vanishes inside the guard
    ka = np.where(na_raw > NORM_FLOOR, c / na ** 2, 0.0)
    kb = np.where(nb_raw > NORM_FLOOR, c / nb ** 2, 0.0)
    inv = 1.0 / (na * nb)
    da = b * inv[..., None] - a * ka[..., None]
    db = a * inv[..., None] - b * kb[..., None]
    return da, db


def _b_cosine(n, g, out, a, b):
    if a.ndim == 1:
        da, db = _cos_grad(a[None], b[None], _norm(a, None)[None], _norm(b, None)[None])
        return float(g) * da[0], float(g) * db[0]
    bb = np.broadcast_to(b, a.shape)
    da, db = _cos_grad(a, bb, _norm(a, 1), _norm(bb, 1))
    da = da * g[:, None]
    db = db * g[:, None]
    return da, (db if b.shape == a.shape else db.sum(axis=0))


def _b_softmax(n, g, out, a):
    inner = np.sum(g * out, axis=1, keepdims=True)
    return (out * (g - inner),)


def _b_frobenius(n, g, out, a):
    return (a * (float(g) / max(float(out), NORM_FLOOR)),)


def _b_sqerr(n, g, out, a, b):
    d = 2.0 * float(g) * (a - b)
    return d, -d


_BACKWARD: dict[str, Callable] = {
    "add": _b_add,
    "sub": _b_sub,
    "mul": _b_mul,
    "scale": lambda n, g, out, a: (g * n.attr,),
    "matmul": _b_matmul,
    "transpose": lambda n, g, out, a: (g.T,),
    "concat_rows": _b_concat,
    "tanh": lambda n, g, out, a: (g * (1.0 - out * out),),
    "exp": lambda n, g, out, a: (g * out,),
    "log": lambda n, g, out, a: (np.where(a > LOG_FLOOR, g / np.maximum(a, LOG_FLOOR), 0.0),),
    "sum": lambda n, g, out, a: _b_reduce(n, g, out, a, False),
    "mean": lambda n, g, out, a: _b_reduce(n, g, out, a, True),
    "l2norm": _b_l2norm,
    "dot": _b_dot,
    "cosine": _b_cosine,
    "softmax_rows": _b_softmax,
    "frobenius": _b_frobenius,
    "squared_error": _b_sqerr,
}

assert set(_FORWARD) == set(_BACKWARD) == set(PRIMITIVES)


@dataclass
class GradCheckReport:
    max_rel_error: float
    passed: bool
    worst: str = ""


def grad_check(graph: Graph, point: Mapping[str, object], h: float = 1e-5,
               tol: float = 1e-4, output: Var | None = None) -> GradCheckReport:
    """Compare backward gradients with central differences at every leaf coordinate.

    Relative error per coordinate is ``|a-b| / max(1e-12, |a|+|b|)``.
    """
    if h <= 0:
        raise UsageError("step h must be positive")
    point = {k: np.array(v, dtype=np.float64) for k, v in point.items()}
    out_id = len(graph.nodes) - 1 if output is None else output.id

    def f(bind):
        return float(graph.forward(bind).values[out_id])

    analytic = graph.forward(point).backward(out_id)
    worst, where = 0.0, ""
    for name in graph.leaves:
        base = point[name]
        flat = base.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = f(point)
            flat[i] = orig - h
            fm = f(point)
            flat[i] = orig
            num = (fp - fm) / (2.0 * h)
            ana = float(analytic[name].reshape(-1)[i])
            rel = abs(ana - num) / max(1e-12, abs(ana) + abs(num))
            if rel > worst:
                worst, where = rel, f"{name}[{i}]"
    return GradCheckReport(worst, worst < tol, where)
