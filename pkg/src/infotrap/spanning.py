"""Minimal spanning sets, their learning speeds, and trap-prior construction.

A subset S of sources *spans* the target direction u when u lies in the span of its
coefficient vectors; it is *minimally spanning* when no proper subset does. For a
minimally spanning S the representation ``u = sum_{i in S} beta_i c_i`` is unique
with every beta_i nonzero, and the key statistic is

    phi(S) = sum_i |beta_i|

the asymptotic standard deviation: sampling S forever at the frequencies
``|beta_i| / phi(S)`` drives posterior variance to ``phi(S)^2 / t``. Smaller phi
means faster learning, and the phi-minimal set is the long-run optimum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .gaussian import (
    Environment,
    FrequencyVector,
    GaussianPrior,
    SPAN_TOL,
)

__all__ = [
    "SpanError",
    "SpanningSetReport",
    "AssumptionReport",
    "enumerate_minimal_spanning_sets",
    "beta_phi_lambda",
    "best_set",
    "phi_by_l1",
    "subspace_closure",
    "is_subspace_optimal",
    "check_assumptions",
    "construct_trap_prior",
    "fit_perturbation_eta",
]

# Two phi values within this relative distance count as tied.
PHI_TIE_TOL = 1e-9

MAX_SOURCES_ENUMERATION = 20


class SpanError(ValueError):
    """A source set is not (minimally) spanning, or enumeration is unsupported."""


@dataclass(eq=False)
class SpanningSetReport:
    """One minimal spanning set with its representation and optimal frequencies."""

    indices: tuple[int, ...]
    beta: dict[int, float]
    phi: float
    lambda_star: FrequencyVector

    def beta_vector(self, num_sources: int) -> np.ndarray:
        out = np.zeros(num_sources)
        for i, b in self.beta.items():
            out[i] = b
        return out


@dataclass
class AssumptionReport:
    """Results of the genericity checks that govern long-run behavior."""

    unique_minimizer: bool
    gap: float
    strong_linear_independence: bool
    unique_minimizer_every_subspace: bool
    all_minimal_sets_size_K: bool
    witnesses: list[tuple[int, ...]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "unique_minimizer": self.unique_minimizer,
            "gap": self.gap,
            "strong_linear_independence": self.strong_linear_independence,
            "unique_minimizer_every_subspace": self.unique_minimizer_every_subspace,
            "all_minimal_sets_size_K": self.all_minimal_sets_size_K,
            "witnesses": [list(w) for w in self.witnesses],
        }


def _target(env: Environment) -> np.ndarray:
    try:
        return env.single_direction()
    except ValueError as exc:
        raise SpanError(
            "spanning-set enumeration supports only a single target direction; "
            "use the numeric frequency optimizer for weighted multi-target objectives"
        ) from exc


def _check_size(env: Environment) -> None:
    if env.num_sources > MAX_SOURCES_ENUMERATION:
        raise SpanError(
            f"exhaustive subset search supports at most {MAX_SOURCES_ENUMERATION} sources"
        )


def _independent(rows: np.ndarray) -> bool:
    sv = np.linalg.svd(rows, compute_uv=False)
    return sv.size > 0 and sv[-1] > SPAN_TOL * sv[0]


def _solve_representation(rows: np.ndarray, u: np.ndarray) -> np.ndarray | None:
    """Coefficients beta with rows' beta = u, or None when u is outside the span."""
    beta, *_ = np.linalg.lstsq(rows.T, u, rcond=None)
    residual = np.linalg.norm(rows.T @ beta - u, np.inf)
    if residual > SPAN_TOL * max(1.0, float(np.linalg.norm(u, np.inf))):
        return None
    return beta


def _report_from(indices: tuple[int, ...], beta: np.ndarray, num_sources: int) -> SpanningSetReport:
    phi = float(np.sum(np.abs(beta)))
    lam = np.zeros(num_sources)
    for i, b in zip(indices, beta):
        lam[i] = abs(b) / phi
    return SpanningSetReport(
        indices=indices,
        beta={int(i): float(b) for i, b in zip(indices, beta)},
        phi=phi,
        lambda_star=FrequencyVector(lam),
    )


def _enumerate(env: Environment, allowed: tuple[int, ...] | None = None) -> list[SpanningSetReport]:
    u = _target(env)
    _check_size(env)
    pool = tuple(range(env.num_sources)) if allowed is None else tuple(sorted(allowed))
    c = env.coefficients
    reports = []
    for size in range(1, min(env.num_states, len(pool)) + 1):
        for subset in combinations(pool, size):
            rows = c[list(subset)]
            if not _independent(rows):
                continue
            beta = _solve_representation(rows, u)
            if beta is None:
                continue
            # A zero coefficient means a proper subset already spans the target.
            if np.min(np.abs(beta)) <= SPAN_TOL * np.max(np.abs(beta)):
                continue
            reports.append(_report_from(subset, beta, env.num_sources))
    reports.sort(key=lambda r: (r.phi, r.indices))
    return reports


def enumerate_minimal_spanning_sets(env: Environment) -> list[SpanningSetReport]:
    """All minimal spanning sets, sorted by phi ascending (ties by indices).

    Only single-target objectives are supported, and the exhaustive search is
    capped at 20 sources.
    """
    return _enumerate(env)


def beta_phi_lambda(env: Environment, indices) -> SpanningSetReport:
    """Representation, phi, and optimal frequencies for one minimally spanning set."""
    u = _target(env)
    subset = tuple(sorted(int(i) for i in indices))
    if len(set(subset)) != len(subset):
        raise SpanError("duplicate indices")
    if not subset or subset[0] < 0 or subset[-1] >= env.num_sources:
        raise SpanError("source indices out of range")
    rows = env.coefficients[list(subset)]
    if not _independent(rows):
        raise SpanError(f"sources {subset} are linearly dependent, not minimally spanning")
    beta = _solve_representation(rows, u)
    if beta is None:
        raise SpanError(f"sources {subset} do not span the target direction")
    if np.min(np.abs(beta)) <= SPAN_TOL * np.max(np.abs(beta)):
        raise SpanError(f"sources {subset} are not minimal: some coefficient is zero")
    return _report_from(subset, beta, env.num_sources)


def best_set(env: Environment) -> SpanningSetReport:
    """The phi-minimal spanning set (first under the tie ordering)."""
    reports = _enumerate(env)
    if not reports:
        raise SpanError("no spanning set: the target is not identified from the sources")
    return reports[0]


def phi_by_l1(env: Environment) -> tuple[float, np.ndarray]:
    """Minimum of sum|beta_i| over all representations of the target.

    Solved exactly over basic solutions: every candidate optimum is carried by a
    linearly independent subset of coefficient vectors, so scanning independent
    subsets that span the target is exhaustive at this scale. The value always
    coincides with the phi-minimum over minimal spanning sets.
    """
    u = _target(env)
    _check_size(env)
    c = env.coefficients
    best_val = math.inf
    best_beta: np.ndarray | None = None
    for size in range(1, min(env.num_states, env.num_sources) + 1):
        for subset in combinations(range(env.num_sources), size):
            rows = c[list(subset)]
            if not _independent(rows):
                continue
            beta = _solve_representation(rows, u)
            if beta is None:
                continue
            val = float(np.sum(np.abs(beta)))
            if val < best_val * (1 - 1e-15) or best_beta is None:
                best_val = val
                full = np.zeros(env.num_sources)
                full[list(subset)] = beta
                best_beta = full
    if best_beta is None:
        raise SpanError("infeasible: the sources jointly do not span the target")
    return best_val, best_beta


def subspace_closure(env: Environment, indices) -> tuple[int, ...]:
    """All sources whose coefficient vectors lie in the span of the given sources."""
    subset = sorted(set(int(i) for i in indices))
    if subset and (subset[0] < 0 or subset[-1] >= env.num_sources):
        raise SpanError("source indices out of range")
    if not subset:
        return ()
    rows = env.coefficients[subset]  # (s, K)
    closure = []
    for j in range(env.num_sources):
        cj = env.coefficients[j]
        coef, *_ = np.linalg.lstsq(rows.T, cj, rcond=None)
        residual = np.linalg.norm(rows.T @ coef - cj)
        if residual <= SPAN_TOL * max(float(np.linalg.norm(cj)), 1e-300):
            closure.append(j)
    return tuple(closure)


def is_subspace_optimal(env: Environment, indices) -> bool:
    """Whether the set strictly minimizes phi among minimal spanning sets in its own span."""
    report = beta_phi_lambda(env, indices)
    closure = subspace_closure(env, report.indices)
    for rival in _enumerate(env, allowed=closure):
        if rival.indices == report.indices:
            continue
        if rival.phi <= report.phi * (1 + PHI_TIE_TOL):
            return False
    return True


def check_assumptions(env: Environment) -> AssumptionReport:
    """Evaluate the genericity conditions by exhaustive enumeration."""
    u = _target(env)
    _check_size(env)
    reports = _enumerate(env)
    witnesses: list[tuple[int, ...]] = []

    if not reports:
        raise SpanError("no spanning set: the target is not identified from the sources")

    phis = [r.phi for r in reports]
    if len(reports) == 1:
        unique_minimizer = True
        gap = math.inf
    else:
        gap = phis[1] - phis[0]
        unique_minimizer = gap > PHI_TIE_TOL * max(phis[1], phis[0])
        if not unique_minimizer:
            witnesses.extend(r.indices for r in reports if r.phi <= phis[0] * (1 + PHI_TIE_TOL))
            gap = 0.0

    n, k = env.num_sources, env.num_states
    sli = n >= k
    if sli:
        for subset in combinations(range(n), k):
            sub = env.coefficients[list(subset)]
            sv = np.linalg.svd(sub, compute_uv=False)
            if sv[-1] <= SPAN_TOL * max(sv[0], 1e-300):
                sli = False
                witnesses.append(subset)

    all_size_k = all(len(r.indices) == k for r in reports)

    unique_everywhere = True
    seen: set[tuple[int, ...]] = set()
    for size in range(1, k + 1):
        for subset in combinations(range(n), size):
            rows = env.coefficients[list(subset)]
            if not _independent(rows):
                continue
            if _solve_representation(rows, u) is None:
                continue  # subspace does not identify the target: vacuous
            closure = subspace_closure(env, subset)
            if closure in seen:
                continue
            seen.add(closure)
            local = _enumerate(env, allowed=closure)
            if len(local) >= 2 and local[1].phi - local[0].phi <= PHI_TIE_TOL * local[1].phi:
                unique_everywhere = False
                witnesses.append(local[0].indices)
                witnesses.append(local[1].indices)

    dedup = sorted(set(witnesses))
    return AssumptionReport(
        unique_minimizer=unique_minimizer,
        gap=float(gap),
        strong_linear_independence=sli,
        unique_minimizer_every_subspace=unique_everywhere,
        all_minimal_sets_size_K=all_size_k,
        witnesses=dedup,
    )


def construct_trap_prior(env: Environment, indices, eps: float) -> GaussianPrior:
    """A prior under which greedy acquisition locks onto the given set forever.

    Works in transformed coordinates where each chosen source measures a single
    state: the measured states get tiny variance eps / lambda*_i (so their
    uncertainty profile matches stationary sampling of the set), the unmeasured
    states get huge variance 1/eps. Valid only for subspace-optimal sets; for a
    set of size K this forces the set to be the global optimum, in which case the
    "trap" is simply the efficient outcome.
    """
    if not (eps > 0):
        raise ValueError("eps must be positive")
    report = beta_phi_lambda(env, indices)
    k, kk = len(report.indices), env.num_states
    if not is_subspace_optimal(env, report.indices):
        if k == kk:
            raise SpanError(
                f"sources {report.indices} span all states but are not the best set; "
                "no prior makes greedy agents stay on a full-rank suboptimal set"
            )
        raise SpanError(
            f"sources {report.indices} are not subspace-optimal; a faster set inside "
            "their span would eventually be discovered"
        )
    rows = env.coefficients[list(report.indices)]  # (k, K)
    _, _, vh = np.linalg.svd(rows)
    transform = np.vstack([rows, vh[k:]])  # states -> measured coords + complement
    lam = report.lambda_star.weights[list(report.indices)]
    variances = np.concatenate([eps / lam, np.full(kk - k, 1.0 / eps)])
    inv_t = np.linalg.inv(transform)
    cov = inv_t @ np.diag(variances) @ inv_t.T
    cov = 0.5 * (cov + cov.T)
    return GaussianPrior(mean=np.zeros(kk), covariance=cov)


def fit_perturbation_eta(env: Environment) -> float:
    """Largest mass-penalty coefficient eta valid in the lower bound

        Vinf(lam) >= phi(S*)^2 / (1 - eta * rho)

    where rho is the frequency mass outside the best set. Derived by scaling all
    outside sources up by (1 + h) with the largest h that keeps the best set
    strictly best, then eta = (2h + h^2) / (1 + h)^2.
    """
    reports = _enumerate(env)
    if not reports:
        raise SpanError("no spanning set")
    star = reports[0]
    if len(reports) >= 2 and reports[1].phi - star.phi <= PHI_TIE_TOL * reports[1].phi:
        raise SpanError("perturbation bound requires a unique phi-minimal set")
    inside = set(star.indices)
    h_cap = 10.0
    for rival in reports[1:]:
        a = sum(abs(b) for i, b in rival.beta.items() if i in inside)
        b = sum(abs(b) for i, b in rival.beta.items() if i not in inside)
        if a >= star.phi or b <= 0:
            continue
        h_cap = min(h_cap, b / (star.phi - a) - 1.0)
    h = max(h_cap, 0.0) * (1.0 - 1e-9)
    return (2.0 * h + h * h) / (1.0 + h) ** 2
