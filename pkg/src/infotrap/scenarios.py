"""Scenario files, batch execution, prior sweeps, and report emission.

A scenario is a JSON document pinning everything a run needs: coefficients,
objective, prior, horizon, tie-break rule, intervention, and seeds. Outputs are
a per-period trace CSV and a report JSON; both are byte-stable across repeated
runs with the same inputs.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .gaussian import Environment, GaussianPrior, NotPositiveDefiniteError
from .spanning import SpanError, check_assumptions, enumerate_minimal_spanning_sets
from .dynamics import (
    BatchAllocate,
    FreeSignals,
    Intervention,
    NoIntervention,
    PrecisionReplicate,
    SimulationTrace,
    TieBreak,
    escalate_gamma,
    simulate,
)

__all__ = [
    "ScenarioError",
    "Scenario",
    "SweepSpec",
    "parse_scenario",
    "parse_scenario_file",
    "emit_scenario",
    "scenario_to_dict",
    "run_scenario",
    "run_batch",
    "sweep",
    "bundled_scenario",
    "bundled_scenario_names",
]

THREADS_ENV_VAR = "INFOTRAP_THREADS"


class ScenarioError(ValueError):
    """A scenario document is malformed; the message carries the offending path."""


@dataclass(eq=False)
class Scenario:
    name: str
    environment: Environment
    prior: GaussianPrior
    horizon: int
    tie_break: TieBreak
    intervention: Intervention | dict
    sample_realizations: bool
    seed: int

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Scenario):
            return NotImplemented
        return scenario_to_dict(self) == scenario_to_dict(other)


@dataclass(eq=False)
class SweepSpec:
    """Vary one prior diagonal entry of a base scenario across a grid."""

    base: Scenario
    state_index: int
    grid: np.ndarray

    def __post_init__(self) -> None:
        grid = np.asarray(self.grid, dtype=float)
        if grid.ndim != 1 or grid.size == 0:
            raise ScenarioError("grid: must be a non-empty list")
        if np.any(grid <= 0):
            raise ScenarioError("grid: variances must be positive")
        if np.any(np.diff(grid) <= 0):
            raise ScenarioError("grid: must be strictly increasing")
        if not 0 <= self.state_index < self.base.prior.num_states:
            raise ScenarioError("state_index: out of range")
        self.grid = grid


def _require(doc: dict, key: str, path: str):
    if key not in doc:
        raise ScenarioError(f"{path}.{key}: missing required field")
    return doc[key]


def _parse_intervention(raw, path: str):
    if raw == "none" or raw is None:
        return NoIntervention()
    if not isinstance(raw, dict) or len(raw) != 1:
        raise ScenarioError(
            f'{path}: expected "none" or an object with exactly one of '
            'precision/batch/free_signals/free_signals_auto'
        )
    (kind, value), = raw.items()
    try:
        if kind == "precision":
            return PrecisionReplicate(int(value))
        if kind == "batch":
            return BatchAllocate(int(value))
        if kind == "free_signals":
            return FreeSignals(tuple(np.asarray(v, dtype=float) for v in value))
        if kind == "free_signals_auto":
            gamma0 = float(value["gamma0"])
            if gamma0 <= 0:
                raise ScenarioError(f"{path}.free_signals_auto.gamma0: must be positive")
            return {"free_signals_auto": {"gamma0": gamma0}}
    except ScenarioError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ScenarioError(f"{path}.{kind}: {exc}") from exc
    raise ScenarioError(f"{path}: unknown intervention kind {kind!r}")


def parse_scenario(doc, path: str = "scenario") -> Scenario:
    """Validate one scenario document (dict or JSON text) into a Scenario."""
    if isinstance(doc, (str, bytes)):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise ScenarioError(f"{path}: expected an object")

    name = _require(doc, "name", path)
    if not isinstance(name, str) or not name:
        raise ScenarioError(f"{path}.name: must be a non-empty string")

    try:
        coefficients = np.asarray(_require(doc, "coefficients", path), dtype=float)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{path}.coefficients: {exc}") from exc
    objective = None
    if "objective" in doc and doc["objective"] is not None:
        try:
            objective = tuple(
                (float(item["weight"]), np.asarray(item["direction"], dtype=float))
                for item in doc["objective"]
            )
        except (TypeError, KeyError, ValueError) as exc:
            raise ScenarioError(f"{path}.objective: {exc}") from exc
    try:
        environment = Environment(coefficients, objective)
    except ValueError as exc:
        raise ScenarioError(f"{path}.coefficients/objective: {exc}") from exc

    try:
        prior = GaussianPrior(
            mean=np.asarray(_require(doc, "prior_mean", path), dtype=float),
            covariance=np.asarray(_require(doc, "prior_cov", path), dtype=float),
        )
    except NotPositiveDefiniteError as exc:
        raise ScenarioError(f"{path}.prior_cov: {exc}") from exc
    except ValueError as exc:
        raise ScenarioError(f"{path}.prior: {exc}") from exc
    if prior.num_states != environment.num_states:
        raise ScenarioError(f"{path}.prior_cov: size does not match coefficient columns")

    horizon = _require(doc, "horizon", path)
    if not isinstance(horizon, int) or horizon < 1:
        raise ScenarioError(f"{path}.horizon: must be a positive integer")

    raw_tb = doc.get("tie_break", "lowest_index")
    if raw_tb == "lowest_index":
        tie_break = TieBreak.lowest_index()
    elif isinstance(raw_tb, dict) and set(raw_tb) == {"random"}:
        tie_break = TieBreak.random(int(raw_tb["random"]))
    else:
        raise ScenarioError(f'{path}.tie_break: expected "lowest_index" or {{"random": seed}}')

    intervention = _parse_intervention(doc.get("intervention", "none"), f"{path}.intervention")
    if isinstance(intervention, FreeSignals):
        for v in intervention.vectors:
            if v.shape != (environment.num_states,):
                raise ScenarioError(
                    f"{path}.intervention.free_signals: vector length must be {environment.num_states}"
                )

    sample_realizations = doc.get("sample_realizations", False)
    if not isinstance(sample_realizations, bool):
        raise ScenarioError(f"{path}.sample_realizations: must be a boolean")
    seed = doc.get("seed", 0)
    if not isinstance(seed, int) or seed < 0 or seed >= 2**64:
        raise ScenarioError(f"{path}.seed: must be an unsigned 64-bit integer")

    return Scenario(
        name=name,
        environment=environment,
        prior=prior,
        horizon=horizon,
        tie_break=tie_break,
        intervention=intervention,
        sample_realizations=sample_realizations,
        seed=seed,
    )


def parse_scenario_file(path) -> list[Scenario]:
    """Parse a scenario file holding one scenario object or an array of them."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: invalid JSON ({exc})") from exc
    if isinstance(doc, list):
        scenarios = [parse_scenario(item, f"scenario[{i}]") for i, item in enumerate(doc)]
    else:
        scenarios = [parse_scenario(doc)]
    names = [s.name for s in scenarios]
    if len(set(names)) != len(names):
        raise ScenarioError("batch: scenario names must be unique within a file")
    return scenarios


def _intervention_to_json(iv) -> object:
    if isinstance(iv, NoIntervention):
        return "none"
    if isinstance(iv, PrecisionReplicate):
        return {"precision": iv.batch}
    if isinstance(iv, BatchAllocate):
        return {"batch": iv.batch}
    if isinstance(iv, FreeSignals):
        return {"free_signals": [list(v) for v in iv.vectors]}
    if isinstance(iv, dict):  # free_signals_auto passthrough
        return iv
    raise TypeError(f"unknown intervention {iv!r}")


def scenario_to_dict(s: Scenario) -> dict:
    tie = "lowest_index" if s.tie_break.kind == "lowest_index" else {"random": s.tie_break.seed}
    return {
        "name": s.name,
        "coefficients": s.environment.coefficients.tolist(),
        "objective": [
            {"weight": w, "direction": list(d)} for w, d in s.environment.objective
        ],
        "prior_mean": list(s.prior.mean),
        "prior_cov": s.prior.covariance.tolist(),
        "horizon": s.horizon,
        "tie_break": tie,
        "intervention": _intervention_to_json(s.intervention),
        "sample_realizations": s.sample_realizations,
        "seed": s.seed,
    }


def emit_scenario(s: Scenario) -> str:
    return json.dumps(scenario_to_dict(s), indent=2) + "\n"


def _json_safe(x):
    if isinstance(x, float):
        return x if math.isfinite(x) else None
    if isinstance(x, dict):
        return {k: _json_safe(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_json_safe(v) for v in x]
    return x


def analysis_fields(env: Environment) -> dict:
    """Best-set statistics for reports; numeric fallback for multi-target objectives."""
    try:
        reports = enumerate_minimal_spanning_sets(env)
    except SpanError:
        from .oracle import optimal_frequency_numeric

        freq, info = optimal_frequency_numeric(env, full_output=True)
        return {
            "phi_best": math.sqrt(info["value"]),
            "best_set": [i + 1 for i in freq.support(tol=1e-9)],
            "lambda_star": list(freq.weights),
            "assumption_report": None,
        }
    if not reports:
        raise SpanError("no spanning set: the target is not identified from the sources")
    star = reports[0]
    return {
        "phi_best": star.phi,
        "best_set": [i + 1 for i in star.indices],
        "lambda_star": list(star.lambda_star.weights),
        "assumption_report": check_assumptions(env).to_dict(),
    }


def build_report(scenario: Scenario, trace: SimulationTrace, gamma_final: float | None) -> dict:
    cls = trace.classification
    report = {
        "name": scenario.name,
        "classification": cls.kind,
        "trapped_set": [i + 1 for i in cls.trapped],
        "inefficiency_ratio": trace.inefficiency_ratio,
        "frequency_estimate": list(trace.frequency_estimate.weights),
    }
    report.update(analysis_fields(scenario.environment))
    if gamma_final is not None:
        report["gamma_final"] = gamma_final
    return _json_safe(report)


def run_scenario(scenario: Scenario) -> tuple[SimulationTrace, dict]:
    """Execute one scenario and build its report dictionary."""
    gamma_final = None
    if isinstance(scenario.intervention, dict):  # free_signals_auto
        gamma0 = scenario.intervention["free_signals_auto"]["gamma0"]
        gamma_final, trace = escalate_gamma(
            scenario.environment,
            scenario.prior,
            scenario.horizon,
            gamma0,
            rule=scenario.tie_break,
            sample_realizations=scenario.sample_realizations,
            seed=scenario.seed,
        )
    else:
        trace = simulate(
            scenario.environment,
            scenario.prior,
            scenario.horizon,
            rule=scenario.tie_break,
            intervention=scenario.intervention,
            sample_realizations=scenario.sample_realizations,
            seed=scenario.seed,
        )
    return trace, build_report(scenario, trace, gamma_final)


def write_trace_csv(path, scenario: Scenario, trace: SimulationTrace) -> None:
    """Trace CSV with per-period choice, variance, and cumulative counts.

    Source indices are 1-based in artifacts; batch choices are written as
    semicolon-joined per-source counts. Floats carry 17 significant digits.
    """
    n = scenario.environment.num_sources
    counts = trace.counts_matrix()
    lines = ["t,choice,posterior_variance," + ",".join(f"count_{i+1}" for i in range(n))]
    for t, choice in enumerate(trace.choices):
        if isinstance(choice, (int, np.integer)):
            choice_txt = str(int(choice) + 1)
        else:
            choice_txt = ";".join(str(int(b)) for b in choice)
        row = [str(t + 1), choice_txt, format(trace.variance_path[t], ".17g")]
        row.extend(str(int(c)) for c in counts[t])
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_report_json(path, report: dict) -> None:
    Path(path).write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")


def _max_workers() -> int:
    raw = os.environ.get(THREADS_ENV_VAR)
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return os.cpu_count() or 1


def run_batch(scenarios: list[Scenario], out_dir, quiet: bool = False) -> list[dict]:
    """Run scenarios (in parallel) and write trace CSV plus report JSON for each.

    Classification outcomes never affect success; only execution failures
    propagate. Parallelism is capped by the INFOTRAP_THREADS environment
    variable.
    """
    names = [s.name for s in scenarios]
    if len(set(names)) != len(names):
        raise ScenarioError("batch: scenario names must be unique")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not scenarios:
        return []
    workers = min(_max_workers(), len(scenarios))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(run_scenario, scenarios))
    reports = []
    for scenario, (trace, report) in zip(scenarios, results):
        write_trace_csv(out / f"{scenario.name}_trace.csv", scenario, trace)
        write_report_json(out / f"{scenario.name}_report.json", report)
        reports.append(report)
        if not quiet:
            ratio = report["inefficiency_ratio"]
            ratio_txt = "n/a" if ratio is None else f"{ratio:.6g}"
            label = report["classification"]
            if report["trapped_set"]:
                label += f" on sources {report['trapped_set']}"
            print(
                f"{scenario.name}: {label} "
                f"(inefficiency {ratio_txt}) -> {out / (scenario.name + '_report.json')}"
            )
    return reports


def _with_prior_variance(scenario: Scenario, state: int, value: float) -> Scenario:
    cov = np.array(scenario.prior.covariance)
    cov[state, state] = value
    return Scenario(
        name=f"{scenario.name}_v{state + 1}_{value:g}",
        environment=scenario.environment,
        prior=GaussianPrior(mean=np.array(scenario.prior.mean), covariance=cov),
        horizon=scenario.horizon,
        tie_break=scenario.tie_break,
        intervention=scenario.intervention,
        sample_realizations=scenario.sample_realizations,
        seed=scenario.seed,
    )


def sweep(spec: SweepSpec) -> dict:
    """Classify the base scenario across a grid of one prior variance.

    Reports each grid point plus the empirical threshold: the first grid value
    whose classification differs from its predecessor (None when uniform).
    """
    rows = []
    previous = None
    threshold = None
    for value in spec.grid:
        run = _with_prior_variance(spec.base, spec.state_index, float(value))
        trace, _ = run_scenario(run)
        cls = trace.classification
        rows.append(
            {
                "variance": float(value),
                "classification": cls.kind,
                "trapped_set": [i + 1 for i in cls.trapped],
                "inefficiency_ratio": trace.inefficiency_ratio,
            }
        )
        signature = (cls.kind, cls.trapped)
        if previous is not None and signature != previous and threshold is None:
            threshold = float(value)
        previous = signature
    return _json_safe(
        {
            "name": spec.base.name,
            "state": spec.state_index + 1,
            "grid": [float(v) for v in spec.grid],
            "rows": rows,
            "threshold": threshold,
        }
    )


def bundled_scenario_names() -> list[str]:
    from importlib import resources

    root = resources.files("infotrap").joinpath("data")
    return sorted(p.name[: -len(".json")] for p in root.iterdir() if p.name.endswith(".json"))


def bundled_scenario(name: str) -> Scenario:
    """Load one of the scenario files shipped with the package."""
    from importlib import resources

    path = resources.files("infotrap").joinpath("data", f"{name}.json")
    return parse_scenario(path.read_text(encoding="utf-8"), path=name)
