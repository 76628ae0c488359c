"""Reverse-mode differentiation over numpy arrays and flat parameter vectors.

The engine is a classic tape: every arithmetic operation on a ``Tensor``
records its parents and a backward closure, and ``Tensor.backward`` walks the
graph in reverse topological order.  It supports exactly the elementary
operations the model is composed of (add, multiply, divide, matrix product,
exp, constant powers, sums, reshapes and slices) and nothing more.

Parameters live in a ``ParamVector``: one flat float64 array plus a
``Layout`` naming disjoint segments.  Losses are written against a
``SegmentView``, which resolves segment names on either a ``Tensor`` (for
gradients) or a plain ndarray (for evaluation and finite differences), so
the same loss code serves both paths.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

# Absolute floor in relative-error denominators; keeps near-zero gradient
# coordinates from blowing up the reported mismatch.
EPS_ABS = 1e-8


class NonFiniteError(RuntimeError):
    """A loss or gradient evaluated to NaN or infinity."""


class LayoutMismatchError(ValueError):
    """Two ParamVectors with different layouts were combined."""


class Layout:
    """Ordered named segments tiling a flat parameter vector exactly once."""

    __slots__ = ("_segments", "size")

    def __init__(self, segments: Iterable[tuple[str, tuple[int, ...]]]):
        self._segments: dict[str, tuple[int, int, tuple[int, ...]]] = {}
        offset = 0
        for name, shape in segments:
            if name in self._segments:
                raise ValueError(f"duplicate segment name {name!r}")
            n = int(np.prod(shape, dtype=np.int64)) if shape else 1
            self._segments[name] = (offset, offset + n, tuple(shape))
            offset += n
        self.size = offset

    def names(self) -> list[str]:
        return list(self._segments)

    def spec(self, name: str) -> tuple[int, int, tuple[int, ...]]:
        return self._segments[name]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Layout):
            return NotImplemented
        return list(self._segments.items()) == list(other._segments.items())

    def __hash__(self):
        return hash(tuple(self._segments.items()))

    def __repr__(self) -> str:
        inner = ", ".join(f"{k}{v[2]}" for k, v in self._segments.items())
        return f"Layout({inner})"


@dataclass(eq=False)
class ParamVector:
    """Flat float64 parameter values plus the layout naming them.

    Values are treated as immutable once handed to the engine; all
    operations return fresh vectors.
    """

    values: np.ndarray
    layout: Layout

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if self.values.size != self.layout.size:
            raise LayoutMismatchError(
                f"value length {self.values.size} != layout size {self.layout.size}"
            )

    @classmethod
    def zeros(cls, layout: Layout) -> "ParamVector":
        return cls(np.zeros(layout.size), layout)

    def segment(self, name: str) -> np.ndarray:
        start, stop, shape = self.layout.spec(name)
        return self.values[start:stop].reshape(shape)

    def copy(self) -> "ParamVector":
        return ParamVector(self.values.copy(), self.layout)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand's shape."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _acc(t: "Tensor", g: np.ndarray) -> None:
    t.grad = g if t.grad is None else t.grad + g


class Tensor:
    """One node of the reverse-mode tape, wrapping a float64 ndarray."""

    __slots__ = ("data", "grad", "_parents", "_bw")
    # Keep numpy from absorbing Tensor operands elementwise; reflected
    # operators below must win.
    __array_ufunc__ = None

    def __init__(self, data, parents=(), bw=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self._parents = parents
        self._bw = bw

    @property
    def shape(self):
        return self.data.shape

    # -- graph traversal ---------------------------------------------------

    def backward(self) -> None:
        if self.data.shape != ():
            raise ValueError("backward() requires a scalar output")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        self.grad = np.ones(())
        for node in reversed(topo):
            if node._bw is not None and node.grad is not None:
                node._bw(node.grad)

    # -- elementary operations ----------------------------------------------

    def __add__(self, other):
        if isinstance(other, Tensor):
            out = Tensor(self.data + other.data, (self, other))
            a_shape, b_shape = self.data.shape, other.data.shape

            def bw(g, a=self, b=other):
                _acc(a, _unbroadcast(g, a_shape))
                _acc(b, _unbroadcast(g, b_shape))

        else:
            out = Tensor(self.data + other, (self,))
            a_shape = self.data.shape

            def bw(g, a=self):
                _acc(a, _unbroadcast(g, a_shape))

        out._bw = bw
        return out

    __radd__ = __add__

    def __neg__(self):
        out = Tensor(-self.data, (self,))

        def bw(g, a=self):
            _acc(a, -g)

        out._bw = bw
        return out

    def __sub__(self, other):
        if isinstance(other, Tensor):
            out = Tensor(self.data - other.data, (self, other))
            a_shape, b_shape = self.data.shape, other.data.shape

            def bw(g, a=self, b=other):
                _acc(a, _unbroadcast(g, a_shape))
                _acc(b, _unbroadcast(-g, b_shape))

        else:
            out = Tensor(self.data - other, (self,))
            a_shape = self.data.shape

            def bw(g, a=self):
                _acc(a, _unbroadcast(g, a_shape))

        out._bw = bw
        return out

    def __rsub__(self, other):
        out = Tensor(other - self.data, (self,))
        a_shape = self.data.shape

        def bw(g, a=self):
            _acc(a, _unbroadcast(-g, a_shape))

        out._bw = bw
        return out

    def __mul__(self, other):
        if isinstance(other, Tensor):
            out = Tensor(self.data * other.data, (self, other))
            a_shape, b_shape = self.data.shape, other.data.shape

            def bw(g, a=self, b=other):
                _acc(a, _unbroadcast(g * b.data, a_shape))
                _acc(b, _unbroadcast(g * a.data, b_shape))

        else:
            out = Tensor(self.data * other, (self,))
            a_shape = self.data.shape

            def bw(g, a=self, c=other):
                _acc(a, _unbroadcast(g * c, a_shape))

        out._bw = bw
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            out = Tensor(self.data / other.data, (self, other))
            a_shape, b_shape = self.data.shape, other.data.shape

            def bw(g, a=self, b=other, o=out):
                _acc(a, _unbroadcast(g / b.data, a_shape))
                _acc(b, _unbroadcast(-g * o.data / b.data, b_shape))

        else:
            out = Tensor(self.data / other, (self,))
            a_shape = self.data.shape

            def bw(g, a=self, c=other):
                _acc(a, _unbroadcast(g / c, a_shape))

        out._bw = bw
        return out

    def __rtruediv__(self, other):
        out = Tensor(other / self.data, (self,))
        a_shape = self.data.shape

        def bw(g, a=self, o=out):
            _acc(a, _unbroadcast(-g * o.data / a.data, a_shape))

        out._bw = bw
        return out

    def __pow__(self, exponent):
        if isinstance(exponent, Tensor):
            raise TypeError("only constant exponents are supported")
        out = Tensor(self.data**exponent, (self,))

        def bw(g, a=self, n=exponent):
            _acc(a, g * n * a.data ** (n - 1))

        out._bw = bw
        return out

    def __matmul__(self, other):
        if isinstance(other, Tensor):
            out = Tensor(self.data @ other.data, (self, other))

            def bw(g, a=self, b=other):
                _acc(a, g @ b.data.T)
                _acc(b, a.data.T @ g)

        else:
            out = Tensor(self.data @ other, (self,))

            def bw(g, a=self, c=other):
                _acc(a, g @ c.T)

        out._bw = bw
        return out

    def __rmatmul__(self, other):
        out = Tensor(other @ self.data, (self,))

        def bw(g, b=self, c=other):
            _acc(b, c.T @ g)

        out._bw = bw
        return out

    def exp(self) -> "Tensor":
        out = Tensor(np.exp(self.data), (self,))

        def bw(g, a=self, o=out):
            _acc(a, g * o.data)

        out._bw = bw
        return out

    def sum(self, axis=None, keepdims=False) -> "Tensor":
        out = Tensor(self.data.sum(axis=axis, keepdims=keepdims), (self,))
        shape = self.data.shape

        def bw(g, a=self):
            gg = g
            if axis is not None and not keepdims:
                gg = np.expand_dims(gg, axis)
            _acc(a, np.broadcast_to(gg, shape))

        out._bw = bw
        return out

    def reshape(self, shape) -> "Tensor":
        out = Tensor(self.data.reshape(shape), (self,))
        old = self.data.shape

        def bw(g, a=self):
            _acc(a, g.reshape(old))

        out._bw = bw
        return out

    def transpose(self) -> "Tensor":
        out = Tensor(self.data.T, (self,))

        def bw(g, a=self):
            _acc(a, g.T)

        out._bw = bw
        return out

    @property
    def T(self) -> "Tensor":
        return self.transpose()

    def __getitem__(self, key) -> "Tensor":
        out = Tensor(self.data[key], (self,))
        shape = self.data.shape

        def bw(g, a=self, k=key):
            full = np.zeros(shape)
            full[k] = g
            _acc(a, full)

        out._bw = bw
        return out

    def __repr__(self) -> str:
        return f"Tensor({self.data!r})"


# -- tape/ndarray dispatch helpers -------------------------------------------
#
# The model forward pass is written once against these helpers, so it runs
# on the tape (for gradients) and on raw ndarrays (for prediction and the
# finite-difference probes) with identical arithmetic.


def raw(x):
    """Underlying ndarray of a Tensor, or the value itself."""
    return x.data if isinstance(x, Tensor) else x


def exp(x):
    return x.exp() if isinstance(x, Tensor) else np.exp(x)


def asum(x, axis=None, keepdims=False):
    if isinstance(x, Tensor):
        return x.sum(axis=axis, keepdims=keepdims)
    return x.sum(axis=axis, keepdims=keepdims)


def reshape(x, shape):
    return x.reshape(shape)


def transpose(x):
    return x.T


class SegmentView:
    """Named read access to layout segments of a flat Tensor or ndarray."""

    __slots__ = ("_flat", "_layout")

    def __init__(self, flat, layout: Layout):
        self._flat = flat
        self._layout = layout

    def __getitem__(self, name: str):
        start, stop, shape = self._layout.spec(name)
        return self._flat[start:stop].reshape(shape)


LossFn = Callable[[SegmentView], object]


@dataclass
class GradReport:
    """Analytic vs central-difference gradients and their worst mismatch.

    ``max_rel_err`` is the max over coordinates of |analytic - numeric| /
    max(|analytic|, |numeric|, EPS_ABS).
    """

    analytic: ParamVector
    numeric: ParamVector
    max_rel_err: float


def _segments_with_nonfinite(values: np.ndarray, layout: Layout) -> list[str]:
    bad = []
    for name in layout.names():
        start, stop, _ = layout.spec(name)
        if not np.all(np.isfinite(values[start:stop])):
            bad.append(name)
    return bad


def value_and_gradient(loss: LossFn, theta: ParamVector) -> tuple[float, ParamVector]:
    """Evaluate ``loss`` at ``theta`` and return (value, exact gradient)."""
    root = Tensor(theta.values.copy())
    out = loss(SegmentView(root, theta.layout))
    if not isinstance(out, Tensor):
        raise TypeError("loss must return a Tensor built from the provided view")
    if out.data.shape != ():
        raise ValueError(f"loss must be scalar, got shape {out.data.shape}")
    value = float(out.data)
    if not np.isfinite(value):
        raise NonFiniteError(f"loss evaluated to {value}")
    out.backward()
    g = root.grad if root.grad is not None else np.zeros(theta.layout.size)
    if not np.all(np.isfinite(g)):
        bad = _segments_with_nonfinite(g, theta.layout)
        raise NonFiniteError(f"non-finite gradient in segment(s): {', '.join(bad)}")
    return value, ParamVector(g, theta.layout)


def gradient(loss: LossFn, theta: ParamVector) -> ParamVector:
    """Exact reverse-mode gradient of a scalar loss at ``theta``."""
    return value_and_gradient(loss, theta)[1]


def evaluate(loss: LossFn, values: np.ndarray, layout: Layout) -> float:
    """Run the loss on plain ndarrays (no tape), returning a float."""
    out = loss(SegmentView(np.asarray(values, dtype=np.float64), layout))
    return float(raw(out))


def fd_check(loss: LossFn, theta: ParamVector, step: float) -> GradReport:
    """Compare the analytic gradient against central finite differences."""
    if step <= 0:
        raise ValueError("step must be positive")

    def probe(values: np.ndarray) -> float:
        v = evaluate(loss, values, theta.layout)
        if not np.isfinite(v):
            raise NonFiniteError("loss non-finite at finite-difference probe point")
        return v

    probe(theta.values)
    numeric = np.empty(theta.layout.size)
    for k in range(theta.layout.size):
        up = theta.values.copy()
        up[k] += step
        down = theta.values.copy()
        down[k] -= step
        numeric[k] = (probe(up) - probe(down)) / (2.0 * step)

    analytic = gradient(loss, theta)
    denom = np.maximum(np.maximum(np.abs(analytic.values), np.abs(numeric)), EPS_ABS)
    max_rel_err = float(np.max(np.abs(analytic.values - numeric) / denom)) if theta.layout.size else 0.0
    return GradReport(analytic, ParamVector(numeric, theta.layout), max_rel_err)


def sgd_step(
    theta: ParamVector,
    grad: ParamVector,
    eta: float,
    nonneg_segments: frozenset[str] | set[str] = frozenset(),
) -> ParamVector:
    """One projected gradient-descent step.

    Coordinates in ``nonneg_segments`` are clamped to zero from below after
    the update, so constrained parameters can reach exactly zero.
    """
    if eta < 0:
        raise ValueError("learning rate must be nonnegative")
    if theta.layout != grad.layout:
        raise LayoutMismatchError("parameter and gradient layouts differ")
    new = theta.values - eta * grad.values
    for name in nonneg_segments:
        start, stop, _ = theta.layout.spec(name)
        np.maximum(new[start:stop], 0.0, out=new[start:stop])
    return ParamVector(new, theta.layout)
