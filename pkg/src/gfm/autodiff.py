"""A small differentiable-array engine on top of numpy.

Three kinds of values flow through the functions of this module:

* plain ``numpy`` arrays, which are constants and take the fast path
  (every function here degrades to the corresponding numpy call);
* :class:`Tensor`, a node of a reverse-mode graph (the "tape"): it holds its
  value, its parents and a closure mapping the output adjoint to parent
  adjoints;
* :class:`Dual`, a forward-mode pair ``(primal, tangent)``.

The primal and tangent of a :class:`Dual` may themselves be Tensors, and all
forward-mode rules are written with the generic functions of this module.
Reverse mode therefore differentiates through JVPs without special casing,
which is what losses such as ``|d/dt X(t) - target|^2`` need.

Reverse-mode closures work on raw numpy arrays, so reverse-over-reverse is not
supported; nested duals are not supported either.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ContractError, DomainError

TWO_PI = 2.0 * np.pi


class Tensor:
    """Reverse-mode graph node."""

    __slots__ = ("value", "parents", "backward")
    __array_ufunc__ = None  # make numpy defer to our reflected operators

    def __init__(self, value, parents: tuple = (), backward=None):
        self.value = value
        self.parents = parents
        self.backward = backward

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __repr__(self):
        return f"Tensor(shape={self.value.shape})"

    def __add__(self, o):
        return add(self, o)

    def __radd__(self, o):
        return add(o, self)

    def __sub__(self, o):
        return sub(self, o)

    def __rsub__(self, o):
        return sub(o, self)

    def __mul__(self, o):
        return mul(self, o)

    def __rmul__(self, o):
        return mul(o, self)

    def __truediv__(self, o):
        return div(self, o)

    def __rtruediv__(self, o):
        return div(o, self)

    def __matmul__(self, o):
        return matmul(self, o)

    def __rmatmul__(self, o):
        return matmul(o, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, n):
        return power(self, n)

    def __getitem__(self, idx):
        return getitem(self, idx)


class Dual:
    """Forward-mode value: ``primal`` plus a directional derivative ``tangent``."""

    __slots__ = ("primal", "tangent")
    __array_ufunc__ = None

    def __init__(self, primal, tangent):
        self.primal = primal
        self.tangent = tangent

    @property
    def shape(self):
        return np.shape(value(self.primal))

    @property
    def ndim(self):
        return len(self.shape)

    def __repr__(self):
        return f"Dual(shape={self.shape})"

    __add__ = Tensor.__add__
    __radd__ = Tensor.__radd__
    __sub__ = Tensor.__sub__
    __rsub__ = Tensor.__rsub__
    __mul__ = Tensor.__mul__
    __rmul__ = Tensor.__rmul__
    __truediv__ = Tensor.__truediv__
    __rtruediv__ = Tensor.__rtruediv__
    __matmul__ = Tensor.__matmul__
    __rmatmul__ = Tensor.__rmatmul__
    __neg__ = Tensor.__neg__
    __pow__ = Tensor.__pow__
    __getitem__ = Tensor.__getitem__


# ---------------------------------------------------------------------------
# helpers


def value(x) -> np.ndarray:
    """Numeric value of any supported object (drops all derivative info)."""
    if isinstance(x, Tensor):
        return x.value
    if isinstance(x, Dual):
        return value(x.primal)
    return np.asarray(x, dtype=np.float64) if not isinstance(x, np.ndarray) else x


def is_traced(x) -> bool:
    return isinstance(x, (Tensor, Dual))


def _primal(x):
    return x.primal if isinstance(x, Dual) else x


def _tangent(x):
    return x.tangent if isinstance(x, Dual) else None


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _tsum(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return add(a, b)


def _fit(t, shape):
    """Broadcast a tangent to the primal shape it belongs to."""
    if t is None or np.shape(value(t)) == shape:
        return t
    return broadcast_to(t, shape)


def _dual(p, t):
    if t is None:
        return p
    return Dual(p, _fit(t, np.shape(value(p))))


# ---------------------------------------------------------------------------
# arithmetic


def add(a, b):
    if isinstance(a, Dual) or isinstance(b, Dual):
        return _dual(add(_primal(a), _primal(b)), _tsum(_tangent(a), _tangent(b)))
    ta, tb = isinstance(a, Tensor), isinstance(b, Tensor)
    if not (ta or tb):
        return np.add(a, b)
    av = a.value if ta else a
    bv = b.value if tb else b
    sa, sb = np.shape(av), np.shape(bv)

    def bw(g):
        return (_unbroadcast(g, sa) if ta else None, _unbroadcast(g, sb) if tb else None)

    return Tensor(np.add(av, bv), (a, b), bw)


def sub(a, b):
    if isinstance(a, Dual) or isinstance(b, Dual):
        tb = _tangent(b)
        return _dual(
            sub(_primal(a), _primal(b)),
            _tsum(_tangent(a), None if tb is None else neg(tb)),
        )
    ta, tb = isinstance(a, Tensor), isinstance(b, Tensor)
    if not (ta or tb):
        return np.subtract(a, b)
    av = a.value if ta else a
    bv = b.value if tb else b
    sa, sb = np.shape(av), np.shape(bv)

    def bw(g):
        return (_unbroadcast(g, sa) if ta else None, _unbroadcast(-g, sb) if tb else None)

    return Tensor(np.subtract(av, bv), (a, b), bw)


def neg(a):
    if isinstance(a, Dual):
        return Dual(neg(a.primal), neg(a.tangent))
    if isinstance(a, Tensor):
        return Tensor(-a.value, (a,), lambda g: (-g,))
    return np.negative(a)


def mul(a, b):
    if isinstance(a, Dual) or isinstance(b, Dual):
        ap, bp = _primal(a), _primal(b)
        ta, tb = _tangent(a), _tangent(b)
        t = _tsum(None if ta is None else mul(ta, bp), None if tb is None else mul(ap, tb))
        return _dual(mul(ap, bp), t)
    ta, tb = isinstance(a, Tensor), isinstance(b, Tensor)
    if not (ta or tb):
        return np.multiply(a, b)
    av = a.value if ta else a
    bv = b.value if tb else b
    sa, sb = np.shape(av), np.shape(bv)

    def bw(g):
        return (
            _unbroadcast(g * bv, sa) if ta else None,
            _unbroadcast(g * av, sb) if tb else None,
        )

    return Tensor(np.multiply(av, bv), (a, b), bw)


def div(a, b):
    if isinstance(a, Dual) or isinstance(b, Dual):
        ap, bp = _primal(a), _primal(b)
        out = div(ap, bp)
        ta, tb = _tangent(a), _tangent(b)
        num = _tsum(ta, None if tb is None else neg(mul(out, tb)))
        return _dual(out, div(num, bp))
    ta, tb = isinstance(a, Tensor), isinstance(b, Tensor)
    if not (ta or tb):
        return np.divide(a, b)
    av = a.value if ta else a
    bv = b.value if tb else b
    out = np.divide(av, bv)
    sa, sb = np.shape(av), np.shape(bv)

    def bw(g):
        gb = g / bv
        return (
            _unbroadcast(gb, sa) if ta else None,
            _unbroadcast(-gb * out, sb) if tb else None,
        )

    return Tensor(out, (a, b), bw)


def power(a, n: float):
    """``a ** n`` for a constant exponent."""
    if isinstance(a, Dual):
        ap = a.primal
        return Dual(power(ap, n), mul(mul(n, power(ap, n - 1)), a.tangent))
    if isinstance(a, Tensor):
        av = a.value
        return Tensor(av**n, (a,), lambda g: (g * n * av ** (n - 1),))
    return np.power(a, n)


def matmul(a, b):
    if isinstance(a, Dual) or isinstance(b, Dual):
        ap, bp = _primal(a), _primal(b)
        ta, tb = _tangent(a), _tangent(b)
        t = _tsum(
            None if ta is None else matmul(ta, bp), None if tb is None else matmul(ap, tb)
        )
        return _dual(matmul(ap, bp), t)
    ta, tb = isinstance(a, Tensor), isinstance(b, Tensor)
    if not (ta or tb):
        return np.matmul(a, b)
    av = a.value if ta else a
    bv = b.value if tb else b
    if av.ndim < 2 or bv.ndim < 2:
        raise ContractError("matmul operands must be at least 2-d")
    sa, sb = av.shape, bv.shape

    def bw(g):
        ga = _unbroadcast(g @ np.swapaxes(bv, -1, -2), sa) if ta else None
        gb = _unbroadcast(np.swapaxes(av, -1, -2) @ g, sb) if tb else None
        return ga, gb

    return Tensor(np.matmul(av, bv), (a, b), bw)


def linear(x, w, b):
    """Dense layer ``x @ w + b`` as a single node (x has shape (..., n_in))."""
    if isinstance(w, Dual) or isinstance(b, Dual):
        raise ContractError("linear: weights cannot carry forward-mode tangents")
    if isinstance(x, Dual):
        return _dual(linear(x.primal, w, b), matmul(x.tangent, w))
    tx, tw, tb = isinstance(x, Tensor), isinstance(w, Tensor), isinstance(b, Tensor)
    xv = x.value if tx else x
    wv = w.value if tw else w
    bv = b.value if tb else b
    out = xv @ wv + bv
    if not (tx or tw or tb):
        return out

    def bw(g):
        gx = g @ wv.T if tx else None
        gw = None
        if tw:
            n_in, n_out = wv.shape
            gw = xv.reshape(-1, n_in).T @ g.reshape(-1, n_out)
        gb = g.reshape(-1, g.shape[-1]).sum(axis=0) if tb else None
        return gx, gw, gb

    return Tensor(out, (x, w, b), bw)


# ---------------------------------------------------------------------------
# shape manipulation


def sum(x, axis=None, keepdims: bool = False):  # noqa: A001 - mirrors numpy
    if isinstance(x, Dual):
        return Dual(sum(x.primal, axis, keepdims), sum(x.tangent, axis, keepdims))
    if isinstance(x, Tensor):
        shape = x.value.shape
        out = x.value.sum(axis=axis, keepdims=keepdims)

        def bw(g):
            if not keepdims and axis is not None:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape),)

        return Tensor(out, (x,), bw)
    return np.sum(x, axis=axis, keepdims=keepdims)


def mean(x, axis=None, keepdims: bool = False):
    n = value(x).size if axis is None else value(x).shape[axis]
    return mul(sum(x, axis, keepdims), 1.0 / n)


def reshape(x, shape):
    if isinstance(x, Dual):
        return Dual(reshape(x.primal, shape), reshape(x.tangent, shape))
    if isinstance(x, Tensor):
        old = x.value.shape
        return Tensor(x.value.reshape(shape), (x,), lambda g: (g.reshape(old),))
    return np.reshape(x, shape)


def swapaxes(x, a1: int, a2: int):
    if isinstance(x, Dual):
        return Dual(swapaxes(x.primal, a1, a2), swapaxes(x.tangent, a1, a2))
    if isinstance(x, Tensor):
        return Tensor(np.swapaxes(x.value, a1, a2), (x,), lambda g: (np.swapaxes(g, a1, a2),))
    return np.swapaxes(x, a1, a2)


def broadcast_to(x, shape):
    if isinstance(x, Dual):
        return Dual(broadcast_to(x.primal, shape), broadcast_to(x.tangent, shape))
    if isinstance(x, Tensor):
        old = x.value.shape
        return Tensor(
            np.broadcast_to(x.value, shape), (x,), lambda g: (_unbroadcast(g, old),)
        )
    return np.broadcast_to(x, shape)


def getitem(x, idx):
    if isinstance(x, Dual):
        return Dual(getitem(x.primal, idx), getitem(x.tangent, idx))
    if isinstance(x, Tensor):
        xv = x.value

        basic = all(isinstance(i, (slice, int, type(Ellipsis), type(None))) for i in
                    (idx if isinstance(idx, tuple) else (idx,)))

        def bw(g):
            full = np.zeros_like(xv)
            if basic:
                full[idx] = g
            else:
                np.add.at(full, idx, g)
            return (full,)

        return Tensor(xv[idx], (x,), bw)
    return np.asarray(x)[idx]


def concatenate(xs: Sequence, axis: int = -1):
    xs = list(xs)
    if any(isinstance(x, Dual) for x in xs):
        tangents = []
        for x in xs:
            t = _tangent(x)
            tangents.append(np.zeros(np.shape(value(x))) if t is None else t)
        return Dual(concatenate([_primal(x) for x in xs], axis), concatenate(tangents, axis))
    if not any(isinstance(x, Tensor) for x in xs):
        return np.concatenate(xs, axis=axis)
    vals = [value(x) for x in xs]
    sizes = np.cumsum([v.shape[axis] for v in vals])[:-1]

    def bw(g):
        return tuple(np.split(g, sizes, axis=axis))

    return Tensor(np.concatenate(vals, axis=axis), tuple(xs), bw)


def where(mask, a, b):
    """Select elementwise; ``mask`` is a constant boolean array."""
    mask = np.asarray(mask)
    if isinstance(a, Dual) or isinstance(b, Dual):
        shape = np.broadcast_shapes(mask.shape, np.shape(value(a)), np.shape(value(b)))
        ta = _tangent(a)
        tb = _tangent(b)
        ta = np.zeros(shape) if ta is None else ta
        tb = np.zeros(shape) if tb is None else tb
        return _dual(where(mask, _primal(a), _primal(b)), where(mask, ta, tb))
    ta, tb = isinstance(a, Tensor), isinstance(b, Tensor)
    av = a.value if ta else a
    bv = b.value if tb else b
    out = np.where(mask, av, bv)
    if not (ta or tb):
        return out
    sa, sb = np.shape(av), np.shape(bv)

    def bw(g):
        return (
            _unbroadcast(np.where(mask, g, 0.0), sa) if ta else None,
            _unbroadcast(np.where(mask, 0.0, g), sb) if tb else None,
        )

    return Tensor(out, (a, b), bw)


def clip(x, lo, hi):
    """Clamp with a pass-through derivative inside ``[lo, hi]``."""
    inside = (value(x) >= lo) & (value(x) <= hi)
    if isinstance(x, Dual):
        return _dual(clip(x.primal, lo, hi), where(inside, x.tangent, 0.0))
    if isinstance(x, Tensor):
        return Tensor(np.clip(x.value, lo, hi), (x,), lambda g: (np.where(inside, g, 0.0),))
    return np.clip(x, lo, hi)


def stop_gradient(x):
    """Value passes through; reverse adjoints and forward tangents are zero."""
    if isinstance(x, Dual):
        return stop_gradient(x.primal)
    if isinstance(x, Tensor):
        return x.value
    return x


def _pass_through(np_fn):
    """Elementwise map whose derivative is the identity (angle wrapping)."""

    def op(x):
        if isinstance(x, Dual):
            return Dual(op(x.primal), x.tangent)
        if isinstance(x, Tensor):
            return Tensor(np_fn(x.value), (x,), lambda g: (g,))
        return np_fn(x)

    return op


def _wrap_np(x):
    out = np.mod(x, TWO_PI)
    # np.mod can round tiny negatives up to exactly 2*pi
    return np.where(out >= TWO_PI, 0.0, out)


def _wrap_pm_np(x):
    return _wrap_np(np.asarray(x) + np.pi) - np.pi


wrap_angle = _pass_through(_wrap_np)
wrap_angle.__doc__ = "Wrap angles to [0, 2*pi) with unit derivative."
wrap_pm = _pass_through(_wrap_pm_np)
wrap_pm.__doc__ = "Wrap angle differences to [-pi, pi) with unit derivative."


# ---------------------------------------------------------------------------
# elementwise primitives


class Elementwise:
    """Unary elementwise primitive with a chain of derivative primitives.

    ``deriv`` is another :class:`Elementwise` (or ``None`` past the last
    supported order). Reverse mode uses ``deriv.fn`` on numpy values; forward
    mode calls ``deriv`` generically so that its tangent stays differentiable.
    """

    __slots__ = ("name", "fn", "deriv", "check")

    def __init__(self, name: str, fn: Callable, deriv=None, check: Callable | None = None):
        self.name = name
        self.fn = fn
        self.deriv = deriv
        self.check = check

    def _need_deriv(self):
        if self.deriv is None:
            raise NotImplementedError(f"derivative of {self.name} beyond supported order")
        return self.deriv

    def __call__(self, x):
        if isinstance(x, Dual):
            d = self._need_deriv()
            return Dual(self(x.primal), mul(d(x.primal), x.tangent))
        if isinstance(x, Tensor):
            xv = x.value
            if self.check is not None:
                self.check(xv)
            d = self._need_deriv()
            return Tensor(self.fn(xv), (x,), lambda g: (g * d.fn(xv),))
        xv = np.asarray(x, dtype=np.float64)
        if self.check is not None:
            self.check(xv)
        return self.fn(xv)

    def __repr__(self):
        return f"Elementwise({self.name})"


def _chain(name: str, fns: Sequence[Callable], check=None) -> Elementwise:
    """Build ``f, f', f'', ...`` as linked primitives; returns ``f``."""
    ops = [Elementwise(f"{name}^({k})", fn, check=check) for k, fn in enumerate(fns)]
    ops[0].name = name
    for k in range(len(ops) - 1):
        ops[k].deriv = ops[k + 1]
    return ops[0]


def _cycle(names_fns):
    ops = [Elementwise(n, f) for n, f in names_fns]
    for k, op in enumerate(ops):
        op.deriv = ops[(k + 1) % len(ops)]
    return ops


sin, cos, _neg_sin, _neg_cos = _cycle(
    [
        ("sin", np.sin),
        ("cos", np.cos),
        ("-sin", lambda x: -np.sin(x)),
        ("-cos", lambda x: -np.cos(x)),
    ]
)
exp = Elementwise("exp", np.exp)
exp.deriv = exp


def _check_positive(x):
    if np.any(x <= 0):
        raise DomainError("log/sqrt-type primitive evaluated at a non-positive value")


def _check_nonneg(x):
    if np.any(x < 0):
        raise DomainError("sqrt evaluated at a negative value")


def _check_open_unit(x):
    if np.any(np.abs(x) >= 1.0):
        raise DomainError("artanh evaluated with |x| >= 1")


log = _chain(
    "log",
    [np.log, lambda x: 1.0 / x, lambda x: -1.0 / x**2, lambda x: 2.0 / x**3, lambda x: -6.0 / x**4],
    check=_check_positive,
)
sqrt = _chain(
    "sqrt",
    [
        np.sqrt,
        lambda x: 0.5 / np.sqrt(x),
        lambda x: -0.25 * x**-1.5,
        lambda x: 0.375 * x**-2.5,
    ],
    check=_check_nonneg,
)


def _tanh_d(k):
    def f(x):
        t = np.tanh(x)
        s = 1.0 - t * t
        return (t, s, -2.0 * t * s, s * (6.0 * t * t - 2.0))[k]

    return f


tanh = _chain("tanh", [_tanh_d(k) for k in range(4)])

artanh = _chain(
    "artanh",
    [
        np.arctanh,
        lambda x: 1.0 / (1.0 - x * x),
        lambda x: 2.0 * x / (1.0 - x * x) ** 2,
        lambda x: (2.0 + 6.0 * x * x) / (1.0 - x * x) ** 3,
    ],
    check=_check_open_unit,
)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _silu_d(k):
    def f(x):
        s = _sigmoid(x)
        if k == 0:
            return x * s
        if k == 1:
            return s * (1.0 + x * (1.0 - s))
        ds = s * (1.0 - s)
        if k == 2:
            return ds * (2.0 + x * (1.0 - 2.0 * s))
        return ds * ((1.0 - 2.0 * s) * (3.0 + x * (1.0 - 2.0 * s)) - 2.0 * x * ds)

    return f


silu = _chain("silu", [_silu_d(k) for k in range(4)])
sigmoid = Elementwise("sigmoid", _sigmoid)


def square(x):
    return mul(x, x)


def norm(x, axis: int = -1, keepdims: bool = True):
    """Euclidean norm; not differentiable at zero (use squared norms there)."""
    return sqrt(sum(mul(x, x), axis=axis, keepdims=keepdims))


def dot(a, b, axis: int = -1, keepdims: bool = True):
    return sum(mul(a, b), axis=axis, keepdims=keepdims)


# ---------------------------------------------------------------------------
# drivers


def _toposort(root: Tensor) -> list:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if isinstance(p, Tensor) and id(p) not in seen:
                stack.append((p, False))
    return order


def grad(loss, wrt: Sequence[Tensor]) -> list[np.ndarray]:
    """Reverse-mode gradient of a scalar ``loss`` with respect to leaf Tensors."""
    if isinstance(loss, Dual):
        raise ContractError("grad: loss still carries a forward tangent; take .primal")
    if not isinstance(loss, Tensor):
        return [np.zeros_like(w.value) for w in wrt]
    if loss.value.size != 1:
        raise ContractError(f"grad: loss must be scalar, got shape {loss.value.shape}")
    adj = {id(loss): np.ones_like(loss.value)}
    keep = {id(w) for w in wrt}
    leaves = {}
    for node in reversed(_toposort(loss)):
        g = adj.get(id(node)) if id(node) in keep else adj.pop(id(node), None)
        if g is None:
            continue
        if id(node) in keep:
            leaves[id(node)] = g
        if node.backward is None:
            continue
        for p, gp in zip(node.parents, node.backward(g)):
            if gp is None or not isinstance(p, Tensor):
                continue
            k = id(p)
            if k in adj:
                adj[k] = adj[k] + gp
            else:
                adj[k] = gp
    return [np.array(leaves.get(id(w), np.zeros_like(w.value)), dtype=np.float64) for w in wrt]


def value_and_grad(fn: Callable, params: Sequence[np.ndarray]):
    """Evaluate ``fn(list_of_tensors)`` and its gradient w.r.t. each parameter."""
    leaves = [Tensor(np.asarray(p, dtype=np.float64)) for p in params]
    out = fn(leaves)
    grads = grad(out, leaves)
    return float(value(out)), grads


def jvp(fn: Callable, primals: Iterable, tangents: Iterable):
    """Forward-mode Jacobian-vector product.

    Returns ``(fn(*primals), d fn(*primals)[tangents])``. Primals may be
    Tensors, in which case both outputs remain differentiable.
    """
    primals, tangents = tuple(primals), tuple(tangents)
    if len(primals) != len(tangents):
        raise ContractError("jvp: need one tangent per primal")
    args = []
    for p, t in zip(primals, tangents):
        if np.shape(value(p)) != np.shape(value(t)):
            raise ContractError(
                f"jvp: tangent shape {np.shape(value(t))} != primal shape {np.shape(value(p))}"
            )
        args.append(Dual(p, t))
    out = fn(*args)
    if isinstance(out, Dual):
        return out.primal, _fit(out.tangent, np.shape(value(out.primal)))
    return out, np.zeros(np.shape(value(out)))


def evaluate(fn: Callable, *inputs):
    """Evaluate an expression on constant inputs; returns numpy values."""
    return value(fn(*[np.asarray(x, dtype=np.float64) for x in inputs]))
