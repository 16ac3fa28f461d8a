"""Dense numeric kernel shared by the two neural models.

Everything is float64 numpy so finite-difference gradient checks stay
tight. Parameters live in a ParamStore that pairs each named matrix with
a gradient buffer of the same shape; iteration order is always
lexicographic by name so training, serialization and checks are
deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError


def affine(w: np.ndarray, x: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-major matrix-vector product plus bias: w @ x + b."""
    w = np.asarray(w, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if w.ndim != 2 or x.ndim != 1 or b.ndim != 1:
        raise ValueError(f"affine expects (matrix, vector, vector), got ndim {w.ndim},{x.ndim},{b.ndim}")
    if w.shape[1] != x.shape[0] or w.shape[0] != b.shape[0]:
        raise ValueError(f"affine shape mismatch: w{w.shape} x{x.shape} b{b.shape}")
    return w @ x + b


def softmax(z: np.ndarray) -> np.ndarray:
    """Numerically stable softmax (max subtraction)."""
    z = np.asarray(z, dtype=np.float64)
    if z.size == 0:
        raise ValueError("softmax of empty vector")
    e = np.exp(z - z.max())
    return e / e.sum()


def tanh_vec(z: np.ndarray) -> np.ndarray:
    return np.tanh(np.asarray(z, dtype=np.float64))


def sigmoid_vec(z: np.ndarray) -> np.ndarray:
    """Elementwise logistic function, stable for large |z|."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def cross_entropy(probabilities: np.ndarray, target: int) -> float:
    """Negative log probability of the target index, clamped at 1e-12."""
    p = np.asarray(probabilities, dtype=np.float64)
    if not 0 <= target < p.shape[0]:
        raise ValueError(f"target {target} out of range for distribution of length {p.shape[0]}")
    return float(-math.log(max(p[target], 1e-12)))


class ParamStore:
    """Named parameter matrices with paired gradient buffers.

    On first use the parameters and gradients are packed into two flat
    float64 buffers (lexicographic name order) and the per-name arrays
    become contiguous views into them, so optimizers can run as a few
    whole-vector operations instead of touring every matrix.
    """

    def __init__(self):
        self._params: dict[str, np.ndarray] = {}
        self._grads: dict[str, np.ndarray] = {}
        self._flat: np.ndarray | None = None
        self._flat_grad: np.ndarray | None = None
        self._slices: dict[str, slice] = {}

    def add(self, name: str, value: np.ndarray) -> np.ndarray:
        if name in self._params:
            raise ValueError(f"duplicate parameter name {name!r}")
        if self._flat is not None:
            raise RuntimeError("cannot add parameters after the store has been packed")
        arr = np.asarray(value, dtype=np.float64)
        self._params[name] = arr
        self._grads[name] = np.zeros_like(arr)
        return arr

    def _pack(self) -> None:
        if self._flat is not None:
            return
        names = self.names()
        total = sum(self._params[n].size for n in names)
        flat = np.empty(total)
        flat_grad = np.empty(total)
        offset = 0
        for name in names:
            arr = self._params[name]
            block = slice(offset, offset + arr.size)
            flat[block] = arr.ravel()
            flat_grad[block] = self._grads[name].ravel()
            self._params[name] = flat[block].reshape(arr.shape)
            self._grads[name] = flat_grad[block].reshape(arr.shape)
            self._slices[name] = block
            offset += arr.size

        self._flat = flat
        self._flat_grad = flat_grad

    def flat_params(self) -> np.ndarray:
        self._pack()
        return self._flat

    def flat_grads(self) -> np.ndarray:
        self._pack()
        return self._flat_grad

    def slice_of(self, name: str) -> slice:
        self._pack()
        return self._slices[name]

    def names(self) -> list[str]:
        return sorted(self._params)

    def items(self):
        for name in self.names():
            yield name, self._params[name]

    def __getitem__(self, name: str) -> np.ndarray:
        return self._params[name]

    def __setitem__(self, name: str, value: np.ndarray) -> None:
        if name not in self._params:
            raise KeyError(name)
        value = np.asarray(value, dtype=np.float64)
        if value.shape != self._params[name].shape:
            raise ValueError(f"shape change for {name!r}: {self._params[name].shape} -> {value.shape}")
        if self._flat is None:
            self._params[name] = value
        else:
            self._params[name][...] = value

    def grad(self, name: str) -> np.ndarray:
        return self._grads[name]

    def zero_grads(self) -> None:
        if self._flat_grad is not None:
            self._flat_grad.fill(0.0)
        else:
            for g in self._grads.values():
                g.fill(0.0)

    def n_params(self) -> int:
        return sum(p.size for p in self._params.values())

    def copy(self) -> "ParamStore":
        clone = ParamStore()
        for name in self.names():
            clone.add(name, self._params[name].copy())
        return clone

    def allclose(self, other: "ParamStore") -> bool:
        return self.names() == other.names() and all(
            np.array_equal(self._params[n], other._params[n]) for n in self.names()
        )


def init_uniform(store: ParamStore, name: str, shape, rng: np.random.Generator, scale: float = 0.1) -> np.ndarray:
    """Add a parameter initialized uniformly in [-scale, scale]."""
    return store.add(name, rng.uniform(-scale, scale, size=shape))


def init_zeros(store: ParamStore, name: str, shape) -> np.ndarray:
    return store.add(name, np.zeros(shape))


def global_grad_norm(store: ParamStore) -> float:
    g = store.flat_grads()
    return math.sqrt(float(g @ g))


def check_finite_grads(store: ParamStore) -> None:
    """Raise NumericalError naming a parameter with a non-finite gradient."""
    if np.all(np.isfinite(store.flat_grads())):
        return
    for name in store.names():
        if not np.all(np.isfinite(store.grad(name))):
            raise NumericalError(f"non-finite gradient in parameter {name!r}")


def sgd_step(store: ParamStore, learning_rate: float, clip: float = 5.0) -> None:
    """One SGD update with global L2 gradient-norm clipping.

    Raises NumericalError naming the first parameter whose gradient
    contains a non-finite entry. Gradients are zeroed after the update.
    """
    check_finite_grads(store)
    grads = store.flat_grads()
    norm = global_grad_norm(store)
    scale = 1.0 if norm <= clip else clip / norm
    store.flat_params()[...] -= (learning_rate * scale) * grads
    grads.fill(0.0)


@dataclass
class ParamCheck:
    name: str
    n_checked: int
    max_rel_error: float
    worst_index: tuple


@dataclass
class GradCheckReport:
    checks: list[ParamCheck]
    epsilon: float
    tolerance: float

    @property
    def max_rel_error(self) -> float:
        return max((c.max_rel_error for c in self.checks), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tolerance

    def format(self) -> str:
        lines = [
            f"{c.name:>8s}  checked={c.n_checked:<5d} max_rel_err={c.max_rel_error:.3e}"
            for c in self.checks
        ]
        verdict = "PASS" if self.passed else "FAIL"
        lines.append(f"overall max_rel_err={self.max_rel_error:.3e} tolerance={self.tolerance:.1e} -> {verdict}")
        return "\n".join(lines)


def grad_check(
    store: ParamStore,
    loss_and_grad,
    epsilon: float = 1e-5,
    tolerance: float = 1e-4,
    full_limit: int = 2000,
    coords_per_param: int = 200,
    seed: int = 0,
) -> GradCheckReport:
    """Compare analytic gradients against central finite differences.

    ``loss_and_grad`` must be a zero-argument callable that evaluates a
    deterministic loss at the store's current parameters, writes fresh
    gradients into the store, and returns the loss. All coordinates are
    checked when the store holds at most ``full_limit`` parameters,
    otherwise ``coords_per_param`` seeded-random coordinates per matrix.
    Relative error per coordinate is |ga - gfd| / max(|ga|, |gfd|, 1e-8).
    """
    loss_and_grad()
    analytic = {name: store.grad(name).copy() for name in store.names()}

    rng = np.random.default_rng(seed)
    check_all = store.n_params() <= full_limit
    checks = []
    for name in store.names():
        param = store._params[name]
        flat = param.ravel()
        if check_all or flat.size <= coords_per_param:
            coords = np.arange(flat.size)
        else:
            coords = rng.choice(flat.size, size=coords_per_param, replace=False)
        worst = (0.0, ())
        for k in coords:
            orig = flat[k]
            flat[k] = orig + epsilon
            loss_plus = loss_and_grad()
            flat[k] = orig - epsilon
            loss_minus = loss_and_grad()
            flat[k] = orig
            g_fd = (loss_plus - loss_minus) / (2.0 * epsilon)
            g_an = analytic[name].ravel()[k]
            rel = abs(g_an - g_fd) / max(abs(g_an), abs(g_fd), 1e-8)
            if rel > worst[0]:
                worst = (rel, np.unravel_index(int(k), param.shape))
        checks.append(ParamCheck(name, len(coords), worst[0], worst[1]))
    # leave the store with gradients for the unperturbed parameters
    loss_and_grad()
    return GradCheckReport(checks=checks, epsilon=epsilon, tolerance=tolerance)
