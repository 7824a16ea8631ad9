"""Gaussian signal model: exact posterior variance, its asymptotic limit, and gradients.

The model has K jointly normal states and N observable sources. One observation of
source i realizes ``<c_i, theta> + N(0, 1)`` where ``c_i`` is row i of the coefficient
matrix. Because prior and signals are Gaussian, the posterior covariance after any
vector of observation counts is deterministic: posterior precision is the prior
precision plus ``sum_i q_i c_i c_i'``.

The quantity tracked throughout is the weighted posterior variance of one or more
target directions ``u_r``:

    V(q) = sum_r w_r * u_r' (Sigma0^-1 + C' diag(q) C)^-1 u_r

and its scale-free limit for observation frequencies ``lam``:

    Vinf(lam) = sum_r w_r * u_r' (C' diag(lam) C)^-1 u_r

where the inverse in ``Vinf`` is the spectral continuous extension to singular
matrices (zero eigenvalues contribute 0 for orthogonal targets, +inf otherwise).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

__all__ = [
    "DimensionError",
    "NotPositiveDefiniteError",
    "NonDifferentiableError",
    "Environment",
    "GaussianPrior",
    "DivisionVector",
    "FrequencyVector",
    "BeliefState",
    "posterior_variance",
    "variance_reduction",
    "asymptotic_variance",
    "grad_posterior_variance",
    "grad_asymptotic_variance",
]

# Relative eigenvalue cutoff for rank decisions in the continuous-extension inverse.
# The scale is floored at 1 so that uniformly tiny matrices are treated as rank zero.
EIGENVALUE_CUTOFF = 1e-10

# Relative tolerance for "this vector component is exactly zero" span decisions.
SPAN_TOL = 1e-9


class DimensionError(ValueError):
    """Shapes of environment, prior, or count/frequency vectors disagree."""


class NotPositiveDefiniteError(ValueError):
    """A covariance or precision matrix is not (numerically) positive definite."""


class NonDifferentiableError(ValueError):
    """The asymptotic variance is not differentiable at the requested frequencies."""


def _readonly(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=float, copy=True)
    out.setflags(write=False)
    return out


@dataclass(eq=False)
class Environment:
    """Signal coefficient matrix plus the weighted target direction(s).

    Parameters
    ----------
    coefficients : (N, K) array
        Row i holds the loading of source i on each of the K states.
    objective : sequence of (weight, direction) pairs, optional
        Weighted quadratic-loss targets. Defaults to weight 1 on the first
        coordinate direction, which is the plain one-state prediction problem.
    """

    coefficients: np.ndarray
    objective: tuple[tuple[float, np.ndarray], ...] = None  # type: ignore[assignment]

    def __post_init__(self) -> None:
        c = np.asarray(self.coefficients, dtype=float)
        if c.ndim != 2 or c.shape[0] < 1 or c.shape[1] < 1:
            raise DimensionError("coefficients must be a non-empty N x K matrix")
        if not np.all(np.isfinite(c)):
            raise ValueError("coefficients must be finite")
        self.coefficients = _readonly(c)
        k = c.shape[1]
        if self.objective is None:
            e1 = np.zeros(k)
            e1[0] = 1.0
            self.objective = ((1.0, _readonly(e1)),)
        else:
            pairs = []
            for w, d in self.objective:
                d = np.asarray(d, dtype=float)
                if d.shape != (k,):
                    raise DimensionError("objective direction has wrong length")
                if not np.all(np.isfinite(d)) or not np.any(d):
                    raise ValueError("objective directions must be finite and non-zero")
                if not (w > 0 and math.isfinite(w)):
                    raise ValueError("objective weights must be positive")
                pairs.append((float(w), _readonly(d)))
            if not pairs:
                raise ValueError("objective must be non-empty")
            self.objective = tuple(pairs)

    @property
    def num_sources(self) -> int:
        return self.coefficients.shape[0]

    @property
    def num_states(self) -> int:
        return self.coefficients.shape[1]

    @property
    def directions(self) -> np.ndarray:
        """All target directions stacked as an (R, K) array."""
        return np.array([d for _, d in self.objective])

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for w, _ in self.objective])

    def single_direction(self) -> np.ndarray:
        """The unique target direction, or raise if the objective is weighted over several."""
        if len(self.objective) != 1:
            raise ValueError("operation requires a single-direction objective")
        return self.objective[0][1]

    @property
    def source_outers(self) -> np.ndarray:
        """(N, K, K) stack of c_i c_i' rank-one precision increments."""
        cached = getattr(self, "_outers", None)
        if cached is None:
            c = self.coefficients
            cached = np.einsum("ni,nj->nij", c, c)
            cached.setflags(write=False)
            self._outers = cached
        return cached


@dataclass(eq=False)
class GaussianPrior:
    """Multivariate normal belief over the K states (full-rank covariance)."""

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self) -> None:
        cov = np.asarray(self.covariance, dtype=float)
        mean = np.asarray(self.mean, dtype=float)
        if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
            raise DimensionError("covariance must be square")
        if mean.shape != (cov.shape[0],):
            raise DimensionError("mean length must match covariance size")
        if not np.all(np.isfinite(cov)) or not np.all(np.isfinite(mean)):
            raise ValueError("prior entries must be finite")
        asym = np.max(np.abs(cov - cov.T))
        scale = max(1.0, float(np.max(np.abs(cov))))
        if asym > 1e-10 * scale:
            raise NotPositiveDefiniteError("covariance is not symmetric")
        cov = 0.5 * (cov + cov.T)
        eigs = np.linalg.eigvalsh(cov)
        if eigs[0] <= 1e-12 * max(eigs[-1], 0.0):
            raise NotPositiveDefiniteError(
                f"covariance is not positive definite (eigenvalues {eigs[0]:.3e}..{eigs[-1]:.3e})"
            )
        self.mean = _readonly(mean)
        self.covariance = _readonly(cov)

    @property
    def num_states(self) -> int:
        return self.covariance.shape[0]

    @property
    def precision(self) -> np.ndarray:
        """Inverse covariance, computed once by Cholesky solve against the identity."""
        cached = getattr(self, "_precision", None)
        if cached is None:
            factor = cho_factor(self.covariance, lower=True)
            cached = cho_solve(factor, np.eye(self.num_states))
            cached = 0.5 * (cached + cached.T)
            cached.setflags(write=False)
            self._precision = cached
        return cached

    @classmethod
    def from_diagonal(cls, variances) -> "GaussianPrior":
        v = np.asarray(variances, dtype=float)
        return cls(mean=np.zeros(v.size), covariance=np.diag(v))


@dataclass(eq=False)
class DivisionVector:
    """Non-negative integer observation counts per source."""

    counts: np.ndarray

    def __post_init__(self) -> None:
        c = np.asarray(self.counts)
        if c.ndim != 1:
            raise DimensionError("counts must be a vector")
        if np.any(c < 0) or not np.all(np.equal(np.mod(c, 1), 0)):
            raise ValueError("counts must be non-negative integers")
        arr = c.astype(np.int64)
        arr.setflags(write=False)
        self.counts = arr

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @classmethod
    def zeros(cls, num_sources: int) -> "DivisionVector":
        return cls(np.zeros(num_sources, dtype=np.int64))


@dataclass(eq=False)
class FrequencyVector:
    """Non-negative observation frequencies per source."""

    weights: np.ndarray

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1:
            raise DimensionError("weights must be a vector")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be non-negative and finite")
        self.weights = _readonly(w)

    @property
    def simplex_normalized(self) -> bool:
        return abs(float(self.weights.sum()) - 1.0) <= 1e-12

    def support(self, tol: float = 0.0) -> tuple[int, ...]:
        return tuple(int(i) for i in np.nonzero(self.weights > tol)[0])


@dataclass(eq=False)
class BeliefState:
    """Posterior belief, stored as the precision matrix plus (optionally tracked) mean."""

    precision: np.ndarray
    mean: np.ndarray

    @classmethod
    def from_counts(
        cls,
        env: Environment,
        prior: GaussianPrior,
        counts,
        replication: int = 1,
    ) -> "BeliefState":
        q = _as_count_array(env, counts)
        p = prior.precision + _signal_precision(env, replication * q)
        return cls(precision=p, mean=np.array(prior.mean))

    def objective_variance(self, env: Environment) -> float:
        return _objective_variance(env, self.precision)


def _as_count_array(env: Environment, counts, allow_real: bool = True) -> np.ndarray:
    if isinstance(counts, DivisionVector):
        q = counts.counts.astype(float)
    else:
        q = np.asarray(counts, dtype=float)
    if q.shape != (env.num_sources,):
        raise DimensionError(
            f"count vector has length {q.shape}, expected {env.num_sources}"
        )
    if not np.all(np.isfinite(q)) or np.any(q < 0):
        raise ValueError("counts must be finite and non-negative")
    if not allow_real and np.any(np.mod(q, 1) != 0):
        raise ValueError("counts must be integers")
    return q


def _as_frequency_array(env: Environment, lam) -> np.ndarray:
    if isinstance(lam, FrequencyVector):
        w = np.array(lam.weights)
    else:
        w = np.asarray(lam, dtype=float)
    if w.shape != (env.num_sources,):
        raise DimensionError(
            f"frequency vector has length {w.shape}, expected {env.num_sources}"
        )
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("frequencies must be non-negative and finite")
    return w


def _signal_precision(env: Environment, q: np.ndarray) -> np.ndarray:
    """sum_i q_i c_i c_i' assembled as (C' diag(q) C), symmetric by construction."""
    c = env.coefficients
    return (c.T * q) @ c


def _check_prior(env: Environment, prior: GaussianPrior) -> None:
    if prior.num_states != env.num_states:
        raise DimensionError(
            f"prior has {prior.num_states} states, environment has {env.num_states}"
        )


def _objective_variance(env: Environment, precision: np.ndarray) -> float:
    try:
        factor = cho_factor(precision, lower=True)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError("posterior precision is not positive definite") from exc
    dirs = env.directions  # (R, K)
    sols = cho_solve(factor, dirs.T)  # (K, R)
    return float(np.dot(env.weights, np.einsum("rk,kr->r", dirs, sols)))


def posterior_variance(env: Environment, prior: GaussianPrior, counts) -> float:
    """Exact weighted posterior variance of the targets after the given counts.

    Counts may be real-valued: the formula extends continuously to fractional
    observations, which the derivative checks rely on. Deterministic; signal
    realizations never enter.
    """
    _check_prior(env, prior)
    q = _as_count_array(env, counts)
    precision = prior.precision + _signal_precision(env, q)
    return _objective_variance(env, precision)


def variance_reduction(env: Environment, prior: GaussianPrior, counts, source: int) -> float:
    """Drop in posterior variance from one more observation of ``source``.

    Non-negative for every source: additional observations never hurt.
    """
    if not 0 <= source < env.num_sources:
        raise IndexError(f"source index {source} out of range")
    q = _as_count_array(env, counts)
    step = q.copy()
    step[source] += 1
    return posterior_variance(env, prior, q) - posterior_variance(env, prior, step)


def _pseudo_inverse_quadratic(matrix: np.ndarray, direction: np.ndarray) -> float:
    """d' M^-1 d under the spectral continuous extension of the inverse.

    Eigenvalues below ``EIGENVALUE_CUTOFF * max(largest, 1)`` count as zero. A zero
    eigenvalue contributes nothing when the direction is orthogonal to its
    eigenvector (0/0 := 0) and +inf otherwise (z/0 := +inf for z > 0).
    """
    eigvals, eigvecs = np.linalg.eigh(matrix)
    cutoff = EIGENVALUE_CUTOFF * max(float(eigvals[-1]), 1.0)
    proj = eigvecs.T @ direction
    zero_tol = SPAN_TOL * max(float(np.linalg.norm(direction)), 1e-300)
    total = 0.0
    for d, p in zip(eigvals, proj):
        if d > cutoff:
            total += p * p / d
        elif abs(p) > zero_tol:
            return math.inf
    return total


def asymptotic_variance(env: Environment, frequencies) -> float:
    """Scale-free limit of t * V at observation frequencies ``lam``.

    Returns +inf when some target direction has a component outside the span of
    the positively weighted sources. Homogeneous of degree -1 in ``lam``.
    """
    lam = _as_frequency_array(env, frequencies)
    info = _signal_precision(env, lam)
    total = 0.0
    for w, d in env.objective:
        v = _pseudo_inverse_quadratic(info, d)
        if math.isinf(v):
            return math.inf
        total += w * v
    return total


def grad_posterior_variance(env: Environment, prior: GaussianPrior, counts) -> np.ndarray:
    """Partial derivatives of ``posterior_variance`` in each count.

    Component j equals ``-sum_r w_r (u_r' P^-1 c_j)^2`` where P is the posterior
    precision; every component is non-positive.
    """
    _check_prior(env, prior)
    q = _as_count_array(env, counts)
    precision = prior.precision + _signal_precision(env, q)
    try:
        factor = cho_factor(precision, lower=True)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError("posterior precision is not positive definite") from exc
    sols = cho_solve(factor, env.directions.T)  # (K, R)
    gammas = env.coefficients @ sols  # (N, R), entry (j, r) = u_r' P^-1 c_j
    return -(gammas**2) @ env.weights


def grad_asymptotic_variance(env: Environment, frequencies) -> np.ndarray:
    """Partial derivatives of ``asymptotic_variance`` at frequencies with full-rank information.

    Raises ``NonDifferentiableError`` when the information matrix is singular:
    the asymptotic variance has kinks there and no silent number is returned.
    """
    lam = _as_frequency_array(env, frequencies)
    info = _signal_precision(env, lam)
    eigvals = np.linalg.eigvalsh(info)
    cutoff = EIGENVALUE_CUTOFF * max(float(eigvals[-1]), 1.0)
    if eigvals[0] <= cutoff:
        raise NonDifferentiableError(
            "information matrix is singular at these frequencies; "
            "the asymptotic variance is not differentiable here"
        )
    factor = cho_factor(info, lower=True)
    sols = cho_solve(factor, env.directions.T)
    gammas = env.coefficients @ sols
    return -(gammas**2) @ env.weights
