"""Tabular softmax target models with exact likelihoods and analytic gradients.

Three families: a flat softmax over a domain, a row-wise conditional softmax
(policy), and a latent-variable mixture.  All are value types; updates return
new models.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np
from scipy.special import logsumexp

from .core import Dist, Domain


class IndexOutOfRange(IndexError):
    pass


class ShapeMismatch(ValueError):
    pass


class ZeroMarginal(ValueError):
    pass


class NonFiniteGradient(ValueError):
    pass


def _log_softmax(v: np.ndarray, axis: int = -1) -> np.ndarray:
    return v - logsumexp(v, axis=axis, keepdims=True)


@dataclass(frozen=True)
class SoftmaxModel:
    """p_theta(t) = softmax(theta)_t over a flat domain."""

    theta: np.ndarray
    domain: Domain

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        if theta.shape != (self.domain.size,):
            raise ShapeMismatch("theta must be a length-N vector")
        if not np.all(np.isfinite(theta) | np.isneginf(theta)):
            raise ValueError("theta entries must be finite or -inf")
        theta = theta.copy()
        theta.flags.writeable = False
        object.__setattr__(self, "theta", theta)

    @classmethod
    def zeros(cls, domain: Domain) -> "SoftmaxModel":
        return cls(np.zeros(domain.size), domain)

    def log_probs(self) -> np.ndarray:
        return _log_softmax(self.theta)

    def dist(self) -> Dist:
        return Dist(self.log_probs())

    def log_prob(self, t: int) -> float:
        if not (0 <= t < self.domain.size):
            raise IndexOutOfRange(f"index {t} out of range")
        return float(self.log_probs()[t])

    def with_theta(self, theta: np.ndarray) -> "SoftmaxModel":
        return SoftmaxModel(theta, self.domain)


@dataclass(frozen=True)
class ConditionalSoftmaxModel:
    """p_theta(y|x) = softmax over each row of an |X| x |Y| logit matrix."""

    theta: np.ndarray
    domain: Domain  # product domain, factor sizes (|X|, |Y|)

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        nx, ny = self.domain.factor_sizes
        if theta.shape != (nx, ny):
            raise ShapeMismatch(f"theta must be {nx}x{ny}")
        theta = theta.copy()
        theta.flags.writeable = False
        object.__setattr__(self, "theta", theta)

    @classmethod
    def zeros(cls, domain: Domain) -> "ConditionalSoftmaxModel":
        return cls(np.zeros(domain.factor_sizes), domain)

    def log_probs(self) -> np.ndarray:
        """|X| x |Y| matrix of log p(y|x)."""
        return _log_softmax(self.theta, axis=1)

    def probs(self) -> np.ndarray:
        return np.exp(self.log_probs())

    def log_prob(self, x: int, y: int) -> float:
        nx, ny = self.domain.factor_sizes
        if not (0 <= x < nx and 0 <= y < ny):
            raise IndexOutOfRange(f"({x}, {y}) out of range")
        return float(self.log_probs()[x, y])

    def row_dist(self, x: int) -> Dist:
        return Dist(self.log_probs()[x])

    def joint_log_probs(self, p_x: np.ndarray) -> np.ndarray:
        """log[p(y|x) p_x(x)] flattened with t = x * |Y| + y."""
        p_x = np.asarray(p_x, dtype=float)
        with np.errstate(divide="ignore"):
            log_px = np.where(p_x > 0, np.log(np.where(p_x > 0, p_x, 1.0)), -np.inf)
        return (self.log_probs() + log_px[:, None]).ravel()

    def with_theta(self, theta: np.ndarray) -> "ConditionalSoftmaxModel":
        return ConditionalSoftmaxModel(theta, self.domain)


@dataclass(frozen=True)
class MixtureModel:
    """Joint p_theta(x, y) = softmax(mix)_y * softmax(comp_y)_x.

    y in {0..K-1} indexes the mixture component; the joint lives on the
    product domain with factor sizes (|X|, K) and index t = x * K + y.
    """

    mixture_logits: np.ndarray  # (K,)
    component_logits: np.ndarray  # (K, |X|)
    domain: Domain

    def __post_init__(self):
        mix = np.asarray(self.mixture_logits, dtype=float)
        comp = np.asarray(self.component_logits, dtype=float)
        nx, k = self.domain.factor_sizes
        if mix.shape != (k,):
            raise ShapeMismatch(f"mixture logits must have length {k}")
        if comp.shape != (k, nx):
            raise ShapeMismatch(f"component logits must be {k}x{nx}")
        mix = mix.copy()
        comp = comp.copy()
        mix.flags.writeable = False
        comp.flags.writeable = False
        object.__setattr__(self, "mixture_logits", mix)
        object.__setattr__(self, "component_logits", comp)

    @property
    def n_components(self) -> int:
        return self.domain.factor_sizes[1]

    @classmethod
    def zeros(cls, domain: Domain) -> "MixtureModel":
        nx, k = domain.factor_sizes
        return cls(np.zeros(k), np.zeros((k, nx)), domain)

    def log_joint(self) -> np.ndarray:
        """|X| x K matrix of log p(x, y)."""
        log_pi = _log_softmax(self.mixture_logits)  # (K,)
        log_c = _log_softmax(self.component_logits, axis=1)  # (K, |X|)
        return (log_pi[:, None] + log_c).T  # (|X|, K)

    def log_probs(self) -> np.ndarray:
        """Flattened log joint with t = x * K + y."""
        return self.log_joint().ravel()

    def dist(self) -> Dist:
        return Dist(self.log_probs())

    def log_prob(self, x: int, y: int) -> float:
        nx, k = self.domain.factor_sizes
        if not (0 <= x < nx and 0 <= y < k):
            raise IndexOutOfRange(f"({x}, {y}) out of range")
        return float(self.log_joint()[x, y])

    def log_marginal_x(self) -> np.ndarray:
        return logsumexp(self.log_joint(), axis=1)

    def with_logits(self, mix: np.ndarray, comp: np.ndarray) -> "MixtureModel":
        return MixtureModel(mix, comp, self.domain)


Model = Union[SoftmaxModel, ConditionalSoftmaxModel, MixtureModel]


def posterior(model: MixtureModel, x: int) -> Dist:
    """q(y | x) by Bayes rule on the exact joint."""
    log_joint_x = model.log_joint()[x]
    if np.all(np.isneginf(log_joint_x)):
        raise ZeroMarginal(f"p_theta(x={x}) = 0")
    return Dist(log_joint_x - logsumexp(log_joint_x))


def grad_expected_log_prob(model: Model, q: Dist):
    """Gradient of E_q[log p_theta] with respect to the model logits.

    For the conditional model the joint convention p(y|x) p0(x) is used, so
    only the conditional part contributes; q lives on the product domain.
    """
    if isinstance(model, SoftmaxModel):
        if q.size != model.domain.size:
            raise ShapeMismatch("q does not match the model domain")
        return q.p - np.exp(model.log_probs())
    if isinstance(model, ConditionalSoftmaxModel):
        nx, ny = model.domain.factor_sizes
        if q.size != nx * ny:
            raise ShapeMismatch("q does not match the product domain")
        q_xy = q.p.reshape(nx, ny)
        q_x = q_xy.sum(axis=1)
        return q_xy - q_x[:, None] * model.probs()
    if isinstance(model, MixtureModel):
        nx, k = model.domain.factor_sizes
        if q.size != nx * k:
            raise ShapeMismatch("q does not match the product domain")
        q_xy = q.p.reshape(nx, k)
        q_y = q_xy.sum(axis=0)  # (K,)
        pi = np.exp(_log_softmax(model.mixture_logits))
        comp = np.exp(_log_softmax(model.component_logits, axis=1))  # (K, |X|)
        grad_mix = q_y - pi
        grad_comp = q_xy.T - q_y[:, None] * comp
        return grad_mix, grad_comp
    raise TypeError(f"unsupported model type {type(model)!r}")


def expected_log_prob(model: Model, q: Dist) -> float:
    if isinstance(model, (SoftmaxModel, MixtureModel)):
        return q.expect(model.log_probs())
    if isinstance(model, ConditionalSoftmaxModel):
        return q.expect(model.log_probs().ravel())
    raise TypeError(f"unsupported model type {type(model)!r}")


def exact_fit(model: Model, q: Dist) -> Model:
    """Install the exact maximizer of E_q[log p_theta] (all families here are
    fully expressive for their respective factorization)."""
    if isinstance(model, SoftmaxModel):
        return model.with_theta(q.logp.copy())
    if isinstance(model, ConditionalSoftmaxModel):
        nx, ny = model.domain.factor_sizes
        q_xy = q.p.reshape(nx, ny)
        q_x = q_xy.sum(axis=1)
        theta = model.theta.copy()
        with np.errstate(divide="ignore", invalid="ignore"):
            for x in range(nx):
                if q_x[x] > 0:
                    cond = q_xy[x] / q_x[x]
                    theta[x] = np.where(cond > 0, np.log(np.where(cond > 0, cond, 1.0)), -np.inf)
        return model.with_theta(theta)
    if isinstance(model, MixtureModel):
        nx, k = model.domain.factor_sizes
        q_xy = q.p.reshape(nx, k)
        q_y = q_xy.sum(axis=0)
        with np.errstate(divide="ignore", invalid="ignore"):
            mix = np.where(q_y > 0, np.log(np.where(q_y > 0, q_y, 1.0)), -np.inf)
            comp = np.empty((k, nx))
            for y in range(k):
                if q_y[y] > 0:
                    c = q_xy[:, y] / q_y[y]
                    comp[y] = np.where(c > 0, np.log(np.where(c > 0, c, 1.0)), -np.inf)
                else:
                    comp[y] = model.component_logits[y]
        return model.with_logits(mix, comp)
    raise TypeError(f"unsupported model type {type(model)!r}")


def fit_to(model: Model, q: Dist, steps: int = 100, step_size: float = 1.0) -> Model:
    """Fit p_theta to q by maximizing E_q[log p_theta].

    SoftmaxModel attains q exactly; structured models run gradient ascent
    with backtracking so the objective is non-decreasing per step.
    """
    if steps < 0 or step_size <= 0:
        raise ValueError("steps >= 0 and step_size > 0 required")
    if isinstance(model, SoftmaxModel):
        return exact_fit(model, q)
    current = model
    obj = expected_log_prob(current, q)
    for _ in range(steps):
        grad = grad_expected_log_prob(current, q)
        flat = np.concatenate([g.ravel() for g in grad]) if isinstance(grad, tuple) else grad.ravel()
        if not np.all(np.isfinite(flat)):
            raise NonFiniteGradient("gradient has non-finite entries")
        eta = step_size
        for _halving in range(30):
            candidate = _apply_step(current, grad, eta)
            new_obj = expected_log_prob(candidate, q)
            if new_obj >= obj:
                break
            eta /= 2.0
        else:
            return current  # no ascent direction at this scale
        current, obj = candidate, new_obj
    return current


def _apply_step(model: Model, grad, eta: float) -> Model:
    if isinstance(model, ConditionalSoftmaxModel):
        return model.with_theta(model.theta + eta * grad)
    if isinstance(model, MixtureModel):
        grad_mix, grad_comp = grad
        return model.with_logits(
            model.mixture_logits + eta * grad_mix,
            model.component_logits + eta * grad_comp,
        )
    raise TypeError(f"unsupported model type {type(model)!r}")
