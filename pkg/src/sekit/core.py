"""Finite domains, exact probability vectors, and uncertainty functions.

All probability arithmetic is carried in log space with max-shifted
log-sum-exp so that hard-zero scores (-inf) are first-class citizens.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

SUM_TOL = 1e-9
POINTWISE_TOL = 1e-12


class AllNegInfinity(ValueError):
    """Every score is -inf: nothing to normalize."""


class BoundaryPoint(ValueError):
    """Operation requires an interior point of the simplex."""


@dataclass(frozen=True)
class Domain:
    """A finite configuration space, optionally with (X, Y) product structure.

    Product indexing convention: t = x * n_y + y.
    """

    labels: Tuple[str, ...]
    factor_sizes: Optional[Tuple[int, int]] = None

    def __post_init__(self):
        if len(self.labels) < 1:
            raise ValueError("domain must have at least one configuration")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("domain labels must be unique")
        if self.factor_sizes is not None:
            nx, ny = self.factor_sizes
            if nx * ny != len(self.labels):
                raise ValueError(
                    f"product structure {nx}x{ny} does not match size {len(self.labels)}"
                )

    @property
    def size(self) -> int:
        return len(self.labels)

    @property
    def n_x(self) -> int:
        self._require_product()
        return self.factor_sizes[0]

    @property
    def n_y(self) -> int:
        self._require_product()
        return self.factor_sizes[1]

    def _require_product(self):
        if self.factor_sizes is None:
            raise ValueError("domain has no product structure")

    def pair(self, x: int, y: int) -> int:
        self._require_product()
        nx, ny = self.factor_sizes
        if not (0 <= x < nx and 0 <= y < ny):
            raise IndexError(f"({x}, {y}) out of range for {nx}x{ny} domain")
        return x * ny + y

    def unpair(self, t: int) -> Tuple[int, int]:
        self._require_product()
        ny = self.factor_sizes[1]
        if not (0 <= t < self.size):
            raise IndexError(f"index {t} out of range")
        return divmod(t, ny)

    def index_of(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"unknown configuration {label!r}") from None

    @staticmethod
    def of_size(n: int, prefix: str = "t") -> "Domain":
        return Domain(tuple(f"{prefix}{i}" for i in range(n)))

    @staticmethod
    def product(x_labels: Sequence[str], y_labels: Sequence[str]) -> "Domain":
        labels = tuple(f"{x}|{y}" for x in x_labels for y in y_labels)
        return Domain(labels, (len(x_labels), len(y_labels)))


class Dist:
    """An exact probability vector with a consistent log-space companion.

    p_i >= 0, sums to 1 within 1e-9; logp_i = -inf exactly where p_i = 0.
    Immutable after construction.
    """

    __slots__ = ("logp", "p")

    def __init__(self, logp: np.ndarray, _p: Optional[np.ndarray] = None):
        logp = np.asarray(logp, dtype=float)
        if logp.ndim != 1:
            raise ValueError("logp must be a vector")
        if np.any(np.isnan(logp)) or np.any(logp == np.inf):
            raise ValueError("logp entries must be in [-inf, finite]")
        p = np.exp(logp) if _p is None else np.asarray(_p, dtype=float)
        if np.any(p < 0):
            raise ValueError("negative probability")
        total = p.sum()
        if abs(total - 1.0) > SUM_TOL:
            raise ValueError(f"probabilities sum to {total}, not 1")
        logp = logp.copy()
        p = p.copy()
        logp.flags.writeable = False
        p.flags.writeable = False
        self.logp = logp
        self.p = p

    def __setattr__(self, name, value):
        if name in ("logp", "p") and not hasattr(self, name):
            object.__setattr__(self, name, value)
        else:
            raise AttributeError("Dist is immutable")

    @property
    def size(self) -> int:
        return self.p.shape[0]

    @classmethod
    def from_probs(cls, p) -> "Dist":
        p = np.asarray(p, dtype=float)
        with np.errstate(divide="ignore"):
            logp = np.where(p > 0, np.log(np.where(p > 0, p, 1.0)), -np.inf)
        return cls(logp, _p=p)

    @classmethod
    def uniform(cls, n: int) -> "Dist":
        return cls.from_probs(np.full(n, 1.0 / n))

    @classmethod
    def point_mass(cls, n: int, i: int) -> "Dist":
        logp = np.full(n, -np.inf)
        logp[i] = 0.0
        return cls(logp)

    def support(self) -> np.ndarray:
        return self.p > 0

    def tv(self, other: "Dist") -> float:
        return 0.5 * float(np.abs(self.p - other.p).sum())

    def expect(self, values: np.ndarray) -> float:
        """E[values] with the 0 * (-inf) = 0 convention on zero-mass points."""
        values = np.asarray(values, dtype=float)
        mask = self.p > 0
        if np.any(np.isneginf(values[mask])):
            return -np.inf
        return float(self.p[mask] @ values[mask])

    def __repr__(self):
        return f"Dist({np.array2string(self.p, precision=6)})"


def normalize_log(scores) -> Dist:
    """Normalize extended-real scores into a Dist via max-shifted log-sum-exp."""
    scores = np.asarray(scores, dtype=float)
    if np.all(np.isneginf(scores)):
        raise AllNegInfinity("all scores are -inf")
    if np.any(np.isnan(scores)) or np.any(scores == np.inf):
        raise ValueError("scores must be in [-inf, finite]")
    shifted = scores - np.max(scores)  # explicit shift: exact at any magnitude
    return Dist(shifted - logsumexp(shifted))


@dataclass(frozen=True)
class UncertaintyFn:
    """Shannon entropy or Tsallis entropy with entropic index k."""

    kind: str = "shannon"
    tsallis_k: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("shannon", "tsallis"):
            raise ValueError(f"unknown uncertainty kind {self.kind!r}")
        if self.kind == "tsallis":
            k = self.tsallis_k
            if k is None or k <= 0 or k == 1:
                raise ValueError("tsallis requires index k > 0, k != 1")


SHANNON = UncertaintyFn("shannon")


def entropy(q: Dist, h: UncertaintyFn = SHANNON) -> float:
    if h.kind == "shannon":
        mask = q.p > 0
        return float(-(q.p[mask] @ q.logp[mask]))
    k = h.tsallis_k
    return float((1.0 - np.sum(q.p**k)) / (k - 1.0))


def entropy_grad(q: Dist, h: UncertaintyFn = SHANNON) -> np.ndarray:
    """d entropy / d q_i, defined on the interior of the simplex only."""
    if np.any(q.p == 0):
        raise BoundaryPoint("entropy gradient needs q_i > 0 for all i")
    if h.kind == "shannon":
        return -q.logp - 1.0
    k = h.tsallis_k
    return -k * q.p ** (k - 1.0) / (k - 1.0)
