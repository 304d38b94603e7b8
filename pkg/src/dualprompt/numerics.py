"""Dense float64 linear algebra with a minimal reverse-mode tape.

Everything differentiable in the pipeline is built from the small op set
below (matmul, tanh, row means, row normalization, row log-softmax, entry
selection, affine combinations).  Each op records a closure on a ``Tape``;
``Tape.backward`` replays the recording in reverse and accumulates into the
``grad`` field of every participating ``Dual``.  Gradients are additive:
callers zero parameter grads between optimizer steps.

``finite_diff_grad`` is the independent oracle used to check every analytic
gradient; it never touches the tape.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

Matrix = np.ndarray  # 2-D float64 throughout


class ZeroVectorError(ValueError):
    """A vector or matrix row had (numerically) zero norm."""


class NonPositiveTemperatureError(ValueError):
    pass


class TapeEmptyError(RuntimeError):
    """backward() called before any forward op was recorded."""


class DimensionMismatchError(ValueError):
    pass


_NORM_FLOOR = 1e-12


def as_matrix(x, name: str = "matrix") -> Matrix:
    """Coerce to a 2-D float64 array; 1-D input becomes a single row."""
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 1:
        a = a.reshape(1, -1)
    if a.ndim != 2:
        raise DimensionMismatchError(f"{name} must be 1-D or 2-D, got ndim={a.ndim}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    return np.ascontiguousarray(a)


def cosine_sim(a, b) -> float:
    """a.b / (|a| |b|) for two nonzero vectors of equal dimension."""
    va = np.asarray(a, dtype=np.float64).reshape(-1)
    vb = np.asarray(b, dtype=np.float64).reshape(-1)
    if va.shape != vb.shape:
        raise DimensionMismatchError(f"vector dims differ: {va.shape} vs {vb.shape}")
    na = float(np.linalg.norm(va))
    nb = float(np.linalg.norm(vb))
    if na < _NORM_FLOOR or nb < _NORM_FLOOR:
        raise ZeroVectorError("cosine similarity of a zero vector is undefined")
    return float(np.dot(va, vb) / (na * nb))


def l2_normalize_rows(m: Matrix) -> Matrix:
    m = as_matrix(m)
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    if np.any(norms < _NORM_FLOOR):
        raise ZeroVectorError("cannot L2-normalize a zero row")
    return m / norms


def logsumexp_rows(m: Matrix) -> Matrix:
    """Row-wise log-sum-exp with max shift; returns a column (r x 1)."""
    shift = np.max(m, axis=1, keepdims=True)
    return shift + np.log(np.sum(np.exp(m - shift), axis=1, keepdims=True))


def softmax_rows(m: Matrix, temperature: float = 1.0) -> Matrix:
    """Row-wise softmax of m / temperature, computed via a log-sum-exp shift."""
    if not temperature > 0.0:
        raise NonPositiveTemperatureError(f"temperature must be > 0, got {temperature}")
    scaled = as_matrix(m) / temperature
    return np.exp(scaled - logsumexp_rows(scaled))


class Dual:
    """A value matrix paired with an accumulated gradient of the same shape."""

    __slots__ = ("value", "grad", "requires_grad")

    def __init__(self, value, requires_grad: bool = True, _validate: bool = True):
        self.value = as_matrix(value) if _validate else value
        self.grad = np.zeros_like(self.value)
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self) -> None:
        self.grad[...] = 0.0


class Tape:
    """Records forward ops in order; backward() replays them reversed.

    Recording order is an evaluation order, so its reverse is a valid
    topological order for reverse-mode accumulation.  Ops whose inputs all
    have ``requires_grad=False`` are not recorded at all, which makes the
    same code usable for gradient-free inference.
    """

    def __init__(self):
        self._records: list[tuple[Dual, Callable[[Matrix], None]]] = []

    def __len__(self) -> int:
        return len(self._records)

    def constant(self, value) -> Dual:
        return Dual(value, requires_grad=False)

    def _emit(self, value: Matrix, needs_grad: bool, backward) -> Dual:
        out = Dual(value, requires_grad=needs_grad, _validate=False)
        if needs_grad:
            self._records.append((out, backward))
        return out

    def backward(self, loss: Dual) -> None:
        if not self._records:
            raise TapeEmptyError("no operations recorded before backward()")
        if loss.shape != (1, 1):
            raise DimensionMismatchError(f"loss must be 1x1, got {loss.shape}")
        loss.grad[0, 0] += 1.0
        for out, bw in reversed(self._records):
            bw(out.grad)

    # -- ops ---------------------------------------------------------------

    def add(self, a: Dual, b: Dual) -> Dual:
        if a.shape != b.shape:
            raise DimensionMismatchError(f"add: {a.shape} vs {b.shape}")

        def bw(g):
            if a.requires_grad:
                a.grad += g
            if b.requires_grad:
                b.grad += g

        return self._emit(a.value + b.value, a.requires_grad or b.requires_grad, bw)

    def sub(self, a: Dual, b: Dual) -> Dual:
        if a.shape != b.shape:
            raise DimensionMismatchError(f"sub: {a.shape} vs {b.shape}")

        def bw(g):
            if a.requires_grad:
                a.grad += g
            if b.requires_grad:
                b.grad -= g

        return self._emit(a.value - b.value, a.requires_grad or b.requires_grad, bw)

    def scale(self, a: Dual, c: float) -> Dual:
        c = float(c)

        def bw(g):
            if a.requires_grad:
                a.grad += c * g

        return self._emit(c * a.value, a.requires_grad, bw)

    def matmul(self, a: Dual, b: Dual) -> Dual:
        if a.shape[1] != b.shape[0]:
            raise DimensionMismatchError(f"matmul: {a.shape} @ {b.shape}")

        def bw(g):
            # d(AB) -> dA = G B^T, dB = A^T G
            if a.requires_grad:
                a.grad += g @ b.value.T
            if b.requires_grad:
                b.grad += a.value.T @ g

        return self._emit(a.value @ b.value, a.requires_grad or b.requires_grad, bw)

    def transpose(self, a: Dual) -> Dual:
        def bw(g):
            if a.requires_grad:
                a.grad += g.T

        return self._emit(np.ascontiguousarray(a.value.T), a.requires_grad, bw)

    def tanh(self, a: Dual) -> Dual:
        y = np.tanh(a.value)

        def bw(g):
            if a.requires_grad:
                a.grad += g * (1.0 - y * y)

        return self._emit(y, a.requires_grad, bw)

    def mean_rows(self, a: Dual) -> Dual:
        r = a.shape[0]
        y = a.value.mean(axis=0, keepdims=True)

        def bw(g):
            if a.requires_grad:
                a.grad += np.broadcast_to(g / r, a.shape)

        return self._emit(y, a.requires_grad, bw)

    def vstack(self, parts: Sequence[Dual]) -> Dual:
        if not parts:
            raise DimensionMismatchError("vstack of zero parts")
        cols = parts[0].shape[1]
        for p in parts:
            if p.shape[1] != cols:
                raise DimensionMismatchError("vstack: column counts differ")
        offsets = np.cumsum([0] + [p.shape[0] for p in parts])

        def bw(g):
            for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
                if p.requires_grad:
                    p.grad += g[lo:hi]

        needs = any(p.requires_grad for p in parts)
        return self._emit(np.vstack([p.value for p in parts]), needs, bw)

    def l2_normalize_rows(self, a: Dual) -> Dual:
        norms = np.linalg.norm(a.value, axis=1, keepdims=True)
        if np.any(norms < _NORM_FLOOR):
            raise ZeroVectorError("cannot L2-normalize a zero row")
        y = a.value / norms

        def bw(g):
            # y = x/|x|: dx = (g - y (y.g)) / |x| per row
            if a.requires_grad:
                a.grad += (g - y * np.sum(y * g, axis=1, keepdims=True)) / norms

        return self._emit(y, a.requires_grad, bw)

    def log_softmax_rows(self, a: Dual) -> Dual:
        y = a.value - logsumexp_rows(a.value)
        p = np.exp(y)

        def bw(g):
            # d lsm = g - softmax * rowsum(g)
            if a.requires_grad:
                a.grad += g - p * np.sum(g, axis=1, keepdims=True)

        return self._emit(y, a.requires_grad, bw)

    def select(self, a: Dual, rows, cols) -> Dual:
        """Gather entries a[rows[k], cols[k]] into a (k x 1) column."""
        rows = np.asarray(rows, dtype=np.intp)
        cols = np.asarray(cols, dtype=np.intp)
        if rows.shape != cols.shape or rows.ndim != 1:
            raise DimensionMismatchError("select: rows/cols must be equal-length 1-D")
        y = a.value[rows, cols].reshape(-1, 1).copy()

        def bw(g):
            if a.requires_grad:
                np.add.at(a.grad, (rows, cols), g[:, 0])

        return self._emit(y, a.requires_grad, bw)

    def mean_all(self, a: Dual) -> Dual:
        n = a.value.size

        def bw(g):
            if a.requires_grad:
                a.grad += g[0, 0] / n

        return self._emit(np.array([[a.value.mean()]]), a.requires_grad, bw)


def finite_diff_grad(loss_fn: Callable[[Matrix], float], params, eps: float = 1e-5) -> Matrix:
    """Central-difference gradient of a scalar loss, entry by entry.

    Independent of the tape machinery by construction: it only ever calls
    ``loss_fn`` on perturbed copies of ``params``.
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ValueError(f"eps must lie in [1e-7, 1e-3], got {eps}")
    p = as_matrix(params).copy()
    grad = np.zeros_like(p)
    for i, j in np.ndindex(p.shape):
        orig = p[i, j]
        p[i, j] = orig + eps
        f_plus = float(loss_fn(p))
        p[i, j] = orig - eps
        f_minus = float(loss_fn(p))
        p[i, j] = orig
        grad[i, j] = (f_plus - f_minus) / (2.0 * eps)
    return grad


def max_relative_error(analytic: Matrix, numeric: Matrix, floor: float = 1e-6) -> float:
    """Elementwise |a - n| / max(|n|, floor), reduced to the worst entry."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    if analytic.shape != numeric.shape:
        raise DimensionMismatchError("gradient shapes differ")
    denom = np.maximum(np.abs(numeric), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))
