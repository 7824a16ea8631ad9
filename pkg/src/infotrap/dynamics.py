"""Greedy sequential acquisition, interventions, and long-run classification.

Each period one agent adds observations where the immediate posterior-variance
drop is largest. The variance path is deterministic (Gaussian updating), so the
whole choice sequence is too, up to tie-breaking. Signal realizations, when
sampled, only move the posterior mean and never the choices.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .gaussian import (
    DivisionVector,
    Environment,
    FrequencyVector,
    GaussianPrior,
)
from .spanning import (
    SpanError,
    SpanningSetReport,
    beta_phi_lambda,
    best_set,
    enumerate_minimal_spanning_sets,
)

__all__ = [
    "SearchBoundError",
    "TieBreak",
    "NoIntervention",
    "PrecisionReplicate",
    "BatchAllocate",
    "FreeSignals",
    "Intervention",
    "Classification",
    "SimulationTrace",
    "greedy_step",
    "simulate",
    "apply_free_signals",
    "design_free_signals",
    "escalate_gamma",
    "compositions",
]

# Candidates whose end-of-period variance is within this relative distance of the
# best are treated as tied; the process is defined up to arbitrary tie resolution.
TIE_TOL = 1e-12

MAX_BATCH = 12
MAX_BATCH_SOURCES = 8

# Classification uses the second half of the run; "efficient" additionally requires
# the empirical frequencies to be this close (sup-norm) to the optimal ones.
EFFICIENT_FREQ_TOL = 0.05


class SearchBoundError(ValueError):
    """An exhaustive search would exceed its configured size bound."""


@dataclass(frozen=True)
class TieBreak:
    """Tie resolution rule: deterministic lowest index, or seeded-random choice."""

    kind: str = "lowest_index"
    seed: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("lowest_index", "random"):
            raise ValueError(f"unknown tie-break kind {self.kind!r}")
        if self.kind == "random" and self.seed is None:
            raise ValueError("random tie-break needs a seed")

    @classmethod
    def lowest_index(cls) -> "TieBreak":
        return cls("lowest_index")

    @classmethod
    def random(cls, seed: int) -> "TieBreak":
        return cls("random", int(seed))

    def make_rng(self) -> np.random.Generator | None:
        return np.random.default_rng(self.seed) if self.kind == "random" else None


@dataclass(frozen=True)
class NoIntervention:
    pass


@dataclass(frozen=True)
class PrecisionReplicate:
    """Each acquisition yields ``batch`` independent draws of the chosen source."""

    batch: int

    def __post_init__(self) -> None:
        if self.batch < 1:
            raise ValueError("batch size must be >= 1")


@dataclass(frozen=True)
class BatchAllocate:
    """Each agent spreads ``batch`` observations across sources to minimize variance."""

    batch: int

    def __post_init__(self) -> None:
        if self.batch < 1:
            raise ValueError("batch size must be >= 1")


@dataclass(eq=False)
class FreeSignals:
    """One-shot public signals ``<p_j, theta> + N(0,1)`` released before period 1."""

    vectors: tuple[np.ndarray, ...]
    gamma: float | None = None

    def __post_init__(self) -> None:
        vecs = []
        for v in self.vectors:
            arr = np.asarray(v, dtype=float)
            if arr.ndim != 1 or not np.all(np.isfinite(arr)):
                raise ValueError("free-signal vectors must be finite 1-d arrays")
            vecs.append(arr)
        self.vectors = tuple(vecs)
        if self.gamma is None and vecs:
            self.gamma = max(float(np.linalg.norm(v)) for v in vecs)
        if self.gamma is not None:
            for v in vecs:
                if np.linalg.norm(v) > self.gamma * (1 + 1e-12):
                    raise ValueError("free-signal vector exceeds the declared norm bound")


Intervention = Union[NoIntervention, PrecisionReplicate, BatchAllocate, FreeSignals]


@dataclass(eq=False)
class Classification:
    kind: str  # "efficient" | "trap" | "undetermined"
    trapped: tuple[int, ...] = ()

    def __str__(self) -> str:
        if self.kind == "trap":
            return f"trap({set(self.trapped)})"
        return self.kind


@dataclass(eq=False)
class SimulationTrace:
    """Full record of one greedy run."""

    choices: list
    variance_path: np.ndarray
    final_counts: DivisionVector
    classification: Classification
    inefficiency_ratio: float | None
    frequency_estimate: FrequencyVector
    final_mean: np.ndarray | None = None

    def counts_matrix(self) -> np.ndarray:
        """(horizon, N) cumulative counts after each period."""
        n = len(self.final_counts.counts)
        out = np.zeros((len(self.choices), n), dtype=np.int64)
        running = np.zeros(n, dtype=np.int64)
        for t, choice in enumerate(self.choices):
            if isinstance(choice, (int, np.integer)):
                running[choice] += 1
            else:
                running += np.asarray(choice, dtype=np.int64)
            out[t] = running
        return out


def compositions(total: int, parts: int) -> np.ndarray:
    """All ways to split ``total`` observations over ``parts`` sources, lexicographic."""
    if parts == 1:
        return np.array([[total]], dtype=np.int64)
    blocks = []
    for first in range(total + 1):
        rest = compositions(total - first, parts - 1)
        blocks.append(
            np.hstack([np.full((rest.shape[0], 1), first, dtype=np.int64), rest])
        )
    return np.vstack(blocks)


def _fold_prior(prior: GaussianPrior, intervention: Intervention) -> GaussianPrior:
    if isinstance(intervention, FreeSignals) and intervention.vectors:
        return apply_free_signals(prior, intervention.vectors)
    return prior


class _Engine:
    """Shared per-run state: posterior precision, counts, candidate evaluation."""

    def __init__(
        self,
        env: Environment,
        prior: GaussianPrior,
        intervention: Intervention,
        tie_rng: np.random.Generator | None,
    ):
        self.env = env
        self.intervention = intervention
        self.tie_rng = tie_rng
        self.precision = np.array(_fold_prior(prior, intervention).precision)
        self.counts = np.zeros(env.num_sources, dtype=np.int64)
        self.replication = (
            intervention.batch if isinstance(intervention, PrecisionReplicate) else 1
        )
        if isinstance(intervention, BatchAllocate):
            if intervention.batch > MAX_BATCH or env.num_sources > MAX_BATCH_SOURCES:
                raise SearchBoundError(
                    f"batch allocation search supports batch <= {MAX_BATCH} "
                    f"and <= {MAX_BATCH_SOURCES} sources"
                )
            self._comps = compositions(intervention.batch, env.num_sources)
        else:
            self._comps = None

    def _pick(self, values: np.ndarray) -> int:
        """Index of the minimum of ``values`` with tolerant ties under the rule."""
        best = float(values.min())
        tied = np.nonzero(values <= best + TIE_TOL * max(abs(best), 1e-300))[0]
        if len(tied) == 1 or self.tie_rng is None:
            return int(tied[0])
        return int(self.tie_rng.choice(tied))

    def step(self) -> tuple[object, float]:
        """Choose this period's allocation; returns (choice, variance after update)."""
        env = self.env
        if self._comps is not None:
            outers = env.source_outers
            precisions = self.precision[None, :, :] + np.einsum(
                "mn,nij->mij", self._comps.astype(float), outers
            )
            dirs = env.directions  # (R, K)
            rhs = np.broadcast_to(dirs.T, (precisions.shape[0],) + dirs.T.shape)
            sols = np.linalg.solve(precisions, rhs)  # (M, K, R)
            values = np.einsum("rk,mkr->mr", dirs, sols) @ env.weights
            j = self._pick(values)
            choice = self._comps[j]
            self.counts += choice
            self.precision += np.einsum("n,nij->ij", choice.astype(float), env.source_outers)
            return np.array(choice), float(values[j])

        factor = cho_factor(self.precision, lower=True)
        dirs = env.directions
        sols = cho_solve(factor, dirs.T)  # (K, R)
        current = float(np.dot(env.weights, np.einsum("rk,kr->r", dirs, sols)))
        gammas = env.coefficients @ sols  # (N, R): u_r' Sigma c_i
        quad = np.einsum(
            "nk,kn->n", env.coefficients, cho_solve(factor, env.coefficients.T)
        )
        m = float(self.replication)
        reductions = ((gammas**2) @ env.weights) * m / (1.0 + m * quad)
        i = self._pick(-reductions)
        self.counts[i] += 1
        self.precision += m * env.source_outers[i]
        return int(i), current - float(reductions[i])


def greedy_step(
    env: Environment,
    prior: GaussianPrior,
    counts,
    rule: TieBreak = TieBreak.lowest_index(),
    intervention: Intervention = NoIntervention(),
):
    """The allocation a single myopic agent picks at the given history.

    Returns a source index, or a count vector summing to the batch size under
    batch allocation.
    """
    engine = _Engine(env, prior, intervention, rule.make_rng())
    q = counts.counts if isinstance(counts, DivisionVector) else np.asarray(counts)
    base = np.asarray(q, dtype=float) * engine.replication
    engine.precision += (env.coefficients.T * base) @ env.coefficients
    choice, _ = engine.step()
    return choice


def _classify(
    env: Environment,
    counts_end: np.ndarray,
    counts_half: np.ndarray,
) -> tuple[Classification, float | None, FrequencyVector]:
    window = counts_end - counts_half
    total = int(window.sum())
    freq = FrequencyVector(window / max(total, 1))
    observed = tuple(int(i) for i in np.nonzero(window)[0])

    try:
        star = best_set(env)
    except (SpanError, ValueError):
        # No single-direction spanning benchmark; report honest indecision.
        return Classification("undetermined"), None, freq

    support = star.lambda_star.support(tol=0.0)
    if observed == support:
        gap = float(np.max(np.abs(freq.weights - star.lambda_star.weights)))
        if gap <= EFFICIENT_FREQ_TOL:
            return Classification("efficient"), 1.0, freq

    try:
        report = beta_phi_lambda(env, observed) if observed else None
    except SpanError:
        report = None
    if report is not None and report.phi > star.phi * (1 + 1e-9):
        return Classification("trap", observed), report.phi / star.phi, freq
    return Classification("undetermined"), None, freq


def simulate(
    env: Environment,
    prior: GaussianPrior,
    horizon: int,
    rule: TieBreak = TieBreak.lowest_index(),
    intervention: Intervention = NoIntervention(),
    sample_realizations: bool = False,
    seed: int = 0,
) -> SimulationTrace:
    """Run the greedy process for ``horizon`` periods and classify the outcome.

    Classification looks at the second half of the run: a set of sources that is
    minimally spanning but slower than the best set is a trap; matching the
    optimal support and frequencies (sup-norm 0.05) is efficient; anything else
    is left undetermined rather than forced into a bucket.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    engine = _Engine(env, prior, intervention, rule.make_rng())

    theta = None
    info_vec = None
    real_rng = None
    if sample_realizations:
        real_rng = np.random.default_rng(seed)
        chol = np.linalg.cholesky(prior.covariance)
        theta = prior.mean + chol @ real_rng.standard_normal(env.num_states)
        info_vec = engine.precision @ prior.mean

    choices: list = []
    variance_path = np.empty(horizon)
    half_mark = horizon // 2
    counts_half = np.zeros(env.num_sources, dtype=np.int64)

    for t in range(horizon):
        choice, value = engine.step()
        choices.append(choice)
        variance_path[t] = value
        if sample_realizations:
            per_source = (
                {int(choice): engine.replication}
                if isinstance(choice, int)
                else {i: int(b) for i, b in enumerate(choice) if b > 0}
            )
            for i, n_obs in per_source.items():
                c = env.coefficients[i]
                draws = float(c @ theta) * n_obs + real_rng.standard_normal(n_obs).sum()
                info_vec = info_vec + c * draws
        if t + 1 == half_mark:
            counts_half = engine.counts.copy()

    classification, ratio, freq = _classify(env, engine.counts, counts_half)
    final_mean = None
    if sample_realizations:
        final_mean = np.linalg.solve(engine.precision, info_vec)

    return SimulationTrace(
        choices=choices,
        variance_path=variance_path,
        final_counts=DivisionVector(engine.counts),
        classification=classification,
        inefficiency_ratio=ratio,
        frequency_estimate=freq,
        final_mean=final_mean,
    )


def apply_free_signals(prior: GaussianPrior, vectors) -> GaussianPrior:
    """Prior updated by one public observation of each direction vector.

    Precision gains ``p p'`` per vector; the mean is left at its prior value
    since realizations never influence acquisition choices.
    """
    vecs = [np.asarray(v, dtype=float) for v in vectors]
    if not vecs:
        return prior
    k = prior.num_states
    for v in vecs:
        if v.shape != (k,):
            raise ValueError("free-signal vector dimension must match the state count")
    precision = np.array(prior.precision)
    for v in vecs:
        precision += np.outer(v, v)
    factor = cho_factor(precision, lower=True)
    cov = cho_solve(factor, np.eye(k))
    cov = 0.5 * (cov + cov.T)
    return GaussianPrior(mean=np.array(prior.mean), covariance=cov)


def design_free_signals(env: Environment, gamma: float) -> list[np.ndarray]:
    """Signal directions that reveal the confounders of the best spanning set.

    Spans the best set's coefficient subspace with the target direction plus an
    orthonormal complement; the complement directions, scaled to norm ``gamma``,
    are the signals to release. Empty when the best set is a single source (its
    subspace holds no confounder to reveal).
    """
    if not (gamma > 0):
        raise ValueError("gamma must be positive")
    star = _unique_best(env)
    k = len(star.indices)
    if k == 1:
        return []
    u = env.single_direction()
    rows = env.coefficients[list(star.indices)]
    _, _, vh = np.linalg.svd(rows)
    basis = vh[:k]  # orthonormal basis of the set's coefficient subspace
    u_coords = basis @ u
    u_coords = u_coords / np.linalg.norm(u_coords)
    # Orthonormal complement of the target inside the subspace.
    _, _, inner = np.linalg.svd(u_coords[None, :])
    directions = inner[1:] @ basis  # (k-1, K)
    out = []
    for d in directions:
        lead = np.argmax(np.abs(d))
        if d[lead] < 0:
            d = -d
        out.append(gamma * d)
    return out


def _unique_best(env: Environment) -> SpanningSetReport:
    reports = enumerate_minimal_spanning_sets(env)
    if not reports:
        raise SpanError("no spanning set")
    if len(reports) >= 2 and reports[1].phi - reports[0].phi <= 1e-9 * reports[1].phi:
        raise SpanError("tied phi-minimal sets: no unique best set to target")
    return reports[0]


def escalate_gamma(
    env: Environment,
    prior: GaussianPrior,
    horizon: int,
    gamma0: float,
    rule: TieBreak = TieBreak.lowest_index(),
    sample_realizations: bool = False,
    seed: int = 0,
    max_doublings: int = 20,
) -> tuple[float, SimulationTrace]:
    """Double the free-signal precision bound until the run classifies efficient.

    Returns the first successful (gamma, trace), or the last failing pair after
    ``max_doublings`` doublings.
    """
    if not (gamma0 > 0):
        raise ValueError("gamma0 must be positive")
    gamma = float(gamma0)
    result = None
    for _ in range(max_doublings + 1):
        vectors = design_free_signals(env, gamma)
        trace = simulate(
            env,
            prior,
            horizon,
            rule=rule,
            intervention=FreeSignals(tuple(vectors), gamma=gamma),
            sample_realizations=sample_realizations,
            seed=seed,
        )
        result = (gamma, trace)
        if trace.classification.kind == "efficient":
            return result
        gamma *= 2.0
    return result
