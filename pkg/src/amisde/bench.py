"""Benchmark experiments: comparative ESS growth, runtime scaling, and the
inconsistency counterexample, with machine-readable CSV/JSON output.

The CSV schema is fixed:

    experiment,scheme,run,iteration,total_samples,psi_hat,ess_hat,j_hat,adapt_ns,generate_ns,reweight_ns

Reruns with identical configuration and seeds reproduce the psi_hat and
ess_hat columns byte for byte; the *_ns timing columns are exempt.
"""

import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .adaptation import (
    FULL_RECOMPUTE,
    INCREMENTAL,
    ForcedControls,
    NoAdaptation,
    PathIntegralAdaptation,
)
from .basis import AffineBasis, ConstantBasis, PiecewiseTimeBasis
from .engine import AmisResult, run_amis
from .errors import ConfigurationError
from .problems import (
    COUNTEREXAMPLE_PSI,
    counterexample_problem,
    gaussian_target_problem,
)
from .reweighting import (
    Balance,
    DiscardFixed,
    DiscardOptimized,
    Flat,
    NonMixingLastBatch,
)
from .sde import DiffusionProblem, constant_control

CSV_HEADER = (
    "experiment,scheme,run,iteration,total_samples,psi_hat,ess_hat,j_hat,"
    "adapt_ns,generate_ns,reweight_ns"
)

UPPER_BOUND_SLOPE = 0.75**3  # reported reference value for d = 3


@dataclass(frozen=True)
class ResultRow:
    experiment: str
    scheme: str
    run: int
    iteration: int
    total_samples: int
    psi_hat: float
    ess_hat: float
    j_hat: float
    adapt_ns: int
    generate_ns: int
    reweight_ns: int

    def to_csv(self) -> str:
        return ",".join(
            [
                self.experiment,
                self.scheme,
                str(self.run),
                str(self.iteration),
                str(self.total_samples),
                repr(float(self.psi_hat)),
                repr(float(self.ess_hat)),
                repr(float(self.j_hat)),
                str(self.adapt_ns),
                str(self.generate_ns),
                str(self.reweight_ns),
            ]
        )


def result_rows(experiment: str, scheme_name: str, run: int, result: AmisResult):
    return [
        ResultRow(
            experiment=experiment,
            scheme=scheme_name,
            run=run,
            iteration=o.iteration,
            total_samples=o.total_samples,
            psi_hat=o.psi_hat,
            ess_hat=o.ess.ess_hat,
            j_hat=o.j_hat,
            adapt_ns=o.adapt_ns,
            generate_ns=o.generate_ns,
            reweight_ns=o.reweight_ns,
        )
        for o in result.outputs
    ]


def write_rows(path: str, rows) -> None:
    with open(path, "w") as fh:
        fh.write(CSV_HEADER + "\n")
        for row in rows:
            fh.write(row.to_csv() + "\n")


def write_json(path: str, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


def _check_keys(d: dict, allowed: set[str], where: str) -> None:
    unknown = set(d) - allowed
    if unknown:
        raise ConfigurationError(f"unknown keys {sorted(unknown)} in {where}")


def _build_problem(spec: dict) -> DiffusionProblem:
    kind = spec.get("kind")
    if kind == "example71":
        _check_keys(spec, {"kind", "dim", "target", "num_steps", "horizon"}, "problem")
        dim = int(spec.get("dim", 3))
        target = spec.get("target", [2.0] * dim)
        return gaussian_target_problem(
            dim=dim,
            target=target,
            num_steps=int(spec.get("num_steps", 100)),
            horizon=float(spec.get("horizon", 1.0)),
        )
    if kind == "counterexample32":
        _check_keys(spec, {"kind"}, "problem")
        return counterexample_problem()
    raise ConfigurationError(f"unknown problem kind {kind!r}")


def _build_scheme(spec: dict):
    kind = spec.get("kind")
    if kind == "flat":
        _check_keys(spec, {"kind"}, "scheme")
        return Flat()
    if kind == "balance":
        _check_keys(spec, {"kind"}, "scheme")
        return Balance()
    if kind == "discard_fixed":
        _check_keys(spec, {"kind"}, "scheme")
        return DiscardFixed()
    if kind == "discard_optimized":
        _check_keys(spec, {"kind", "candidate_set", "min_retained"}, "scheme")
        return DiscardOptimized(
            candidate_set=spec.get("candidate_set", "all"),
            min_retained=int(spec.get("min_retained", 2)),
        )
    if kind == "nonmixing":
        _check_keys(spec, {"kind"}, "scheme")
        return NonMixingLastBatch()
    raise ConfigurationError(f"unknown scheme kind {kind!r}")


def _build_basis(spec: dict, problem: DiffusionProblem):
    kind = spec.get("kind", "constant")
    if kind == "constant":
        _check_keys(spec, {"kind"}, "basis")
        return ConstantBasis()
    if kind == "affine":
        _check_keys(spec, {"kind"}, "basis")
        return AffineBasis(problem.state_dim)
    if kind == "piecewise":
        _check_keys(spec, {"kind", "inner", "num_intervals"}, "basis")
        inner = _build_basis(spec.get("inner", {"kind": "constant"}), problem)
        return PiecewiseTimeBasis(
            inner, int(spec.get("num_intervals", 2)), problem.horizon
        )
    raise ConfigurationError(f"unknown basis kind {kind!r}")


def _build_adaptation_factory(
    spec: dict, problem: DiffusionProblem, schedule: list[int]
) -> Callable:
    kind = spec.get("kind", "path_integral")
    if kind == "none":
        _check_keys(spec, {"kind"}, "adaptation")
        return NoAdaptation
    if kind == "path_integral":
        _check_keys(spec, {"kind", "basis", "mode", "clamp_bound"}, "adaptation")
        basis = _build_basis(spec.get("basis", {"kind": "constant"}), problem)
        mode = spec.get("mode", INCREMENTAL)
        clamp = spec.get("clamp_bound")
        clamp = float(clamp) if clamp is not None else None
        return lambda: PathIntegralAdaptation(basis, mode=mode, clamp_bound=clamp)
    if kind == "forced_constant":
        _check_keys(spec, {"kind", "values"}, "adaptation")
        values = spec.get("values")
        if not values:
            raise ConfigurationError("forced_constant adaptation needs values")
        controls = [constant_control(v) for v in values]
        return lambda: ForcedControls(controls)
    if kind == "iteration_index":
        # u_k = k * ones(m): the counterexample's forced proposal sequence
        _check_keys(spec, {"kind"}, "adaptation")
        m = problem.noise_dim
        controls = [constant_control([float(k)] * m) for k in range(1, len(schedule) + 1)]
        return lambda: ForcedControls(controls)
    raise ConfigurationError(f"unknown adaptation kind {kind!r}")


@dataclass
class ExperimentConfig:
    """A fully resolved experiment: problem, scheme, adaptation, schedule,
    seeds, and output location."""

    experiment: str
    problem: DiffusionProblem
    scheme: object
    schedule: list[int]
    seeds: list[int]
    adaptation_factory: Callable
    scheme_name: str = ""
    retain_paths: bool = True
    output: str | None = None

    def __post_init__(self):
        if not self.scheme_name:
            self.scheme_name = self.scheme.name

    @property
    def num_runs(self) -> int:
        return len(self.seeds)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        _check_keys(
            raw,
            {
                "experiment",
                "problem",
                "scheme",
                "adaptation",
                "schedule",
                "seeds",
                "retain_paths",
                "output",
            },
            "config",
        )
        for key in ("experiment", "problem", "scheme", "schedule", "seeds"):
            if key not in raw:
                raise ConfigurationError(f"missing config key {key!r}")
        problem = _build_problem(raw["problem"])
        scheme = _build_scheme(raw["scheme"])
        sched_spec = raw["schedule"]
        _check_keys(sched_spec, {"iterations", "batch_size"}, "schedule")
        iterations = int(sched_spec["iterations"])
        batch = int(sched_spec.get("batch_size", 1))
        if iterations < 1 or batch < 1:
            raise ConfigurationError("iterations and batch_size must be positive")
        schedule = [batch] * iterations
        seeds_spec = raw["seeds"]
        if isinstance(seeds_spec, dict):
            _check_keys(seeds_spec, {"base", "count"}, "seeds")
            base = int(seeds_spec.get("base", 0))
            count = int(seeds_spec["count"])
            seeds = [base + i for i in range(count)]
        else:
            seeds = [int(s) for s in seeds_spec]
        if not seeds:
            raise ConfigurationError("at least one seed is required")
        factory = _build_adaptation_factory(
            raw.get("adaptation", {"kind": "none"}), problem, schedule
        )
        return cls(
            experiment=str(raw["experiment"]),
            problem=problem,
            scheme=scheme,
            schedule=schedule,
            seeds=seeds,
            adaptation_factory=factory,
            retain_paths=bool(raw.get("retain_paths", True)),
            output=raw.get("output"),
        )

    @classmethod
    def from_json_file(cls, path: str) -> "ExperimentConfig":
        with open(path) as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigurationError(f"invalid JSON in {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigurationError("config root must be a JSON object")
        return cls.from_dict(raw)


def run_experiment(config: ExperimentConfig, threads: int = 1):
    """All runs of one experiment; rows ordered by (run, iteration)."""

    def one(run_and_seed):
        run, seed = run_and_seed
        result = run_amis(
            config.problem,
            config.scheme,
            config.adaptation_factory(),
            config.schedule,
            seed,
            retain_paths=config.retain_paths,
        )
        return result_rows(config.experiment, config.scheme_name, run, result), result

    jobs = list(enumerate(config.seeds))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(one, jobs))
    else:
        outcomes = [one(j) for j in jobs]
    rows = [row for row_list, _ in outcomes for row in row_list]
    results = [res for _, res in outcomes]
    return rows, results


# ---------------------------------------------------------------------------
# figure and table experiments
# ---------------------------------------------------------------------------


def fit_late_slope(total_samples: np.ndarray, mean_curve: np.ndarray) -> float | None:
    """Least-squares slope of the curve over its final 50% of iterations.

    None when the window holds fewer than two points (degenerate curve).
    """
    k = len(mean_curve)
    start = k // 2
    x = np.asarray(total_samples, dtype=float)[start:]
    y = np.asarray(mean_curve, dtype=float)[start:]
    if len(x) < 2:
        return None
    return float(np.polyfit(x - x.mean(), y, 1)[0])  # centered for conditioning


def _scheme_summary(results: list[AmisResult]) -> dict:
    ess = np.array([[o.ess.ess_hat for o in r.outputs] for r in results])
    totals = np.array([o.total_samples for o in results[0].outputs])
    mean_curve = ess.mean(axis=0)
    final = ess[:, -1]
    return {
        "slope": fit_late_slope(totals, mean_curve),
        "final_ess_mean": float(final.mean()),
        "final_ess_stderr": float(final.std(ddof=1) / math.sqrt(len(final))),
    }


def _variant_config(
    experiment: str,
    problem: DiffusionProblem,
    scheme,
    basis,
    mode: str,
    iterations: int,
    batch: int,
    seeds: list[int],
) -> ExperimentConfig:
    return ExperimentConfig(
        experiment=experiment,
        problem=problem,
        scheme=scheme,
        schedule=[batch] * iterations,
        seeds=seeds,
        adaptation_factory=lambda: PathIntegralAdaptation(basis, mode=mode),
    )


def run_fig2(
    out_dir: str,
    runs: int = 100,
    iterations: int = 300,
    seed_base: int = 0,
    threads: int = 1,
    nonmixing_batch: int = 10,
    include_flat: bool = False,
) -> dict:
    """ESS growth of the four re-weighting schemes with g = 1 adaptation.

    ``include_flat`` adds the un-discarded flat variant, which is excluded
    from the default figure because of its very large error bars.
    """
    os.makedirs(out_dir, exist_ok=True)
    problem = gaussian_target_problem()
    basis = ConstantBasis()
    seeds = [seed_base + i for i in range(runs)]
    variants = [
        ("balance", Balance(), FULL_RECOMPUTE, iterations, 1),
        ("discard_optimized", DiscardOptimized(), INCREMENTAL, iterations, 1),
        ("discard_fixed", DiscardFixed(), INCREMENTAL, iterations, 1),
        (
            "nonmixing",
            NonMixingLastBatch(),
            INCREMENTAL,
            max(iterations // nonmixing_batch, 1),
            nonmixing_batch,
        ),
    ]
    if include_flat:
        variants.append(("flat", Flat(), INCREMENTAL, iterations, 1))
    all_rows: list[ResultRow] = []
    summary: dict = {"upper_bound_slope": UPPER_BOUND_SLOPE, "schemes": {}}
    for name, scheme, mode, iters, batch in variants:
        config = _variant_config("fig2", problem, scheme, basis, mode, iters, batch, seeds)
        rows, results = run_experiment(config, threads)
        all_rows.extend(rows)
        summary["schemes"][name] = _scheme_summary(results)
    write_rows(os.path.join(out_dir, "fig2.csv"), all_rows)
    write_json(os.path.join(out_dir, "fig2_summary.json"), summary)
    return summary


def run_fig3(
    out_dir: str,
    runs: int = 100,
    iterations: int = 60,
    batch: int = 25,
    seed_base: int = 0,
    threads: int = 1,
) -> dict:
    """Balance vs optimized discarding with g = (1, x) adaptation, plus a
    g = 1 reference at the same sample budget.

    The default schedule (25 x 60 = 1500 samples) is large enough for the
    linear-feedback parameters to converge; the state-feedback class then
    visibly dominates the constant-control class.
    """
    os.makedirs(out_dir, exist_ok=True)
    problem = gaussian_target_problem()
    seeds = [seed_base + i for i in range(runs)]
    schemes = [
        ("balance", Balance(), FULL_RECOMPUTE),
        ("discard_optimized", DiscardOptimized(), INCREMENTAL),
    ]
    all_rows: list[ResultRow] = []
    summary: dict = {"basis": "affine", "schemes": {}, "constant_reference": {}}
    for name, scheme, mode in schemes:
        affine = _variant_config(
            "fig3_affine", problem, scheme, AffineBasis(problem.state_dim), mode,
            iterations, batch, seeds,
        )
        rows, results = run_experiment(affine, threads)
        all_rows.extend(rows)
        summary["schemes"][name] = _scheme_summary(results)
        const = _variant_config(
            "fig3_constant", problem, scheme, ConstantBasis(), mode,
            iterations, batch, seeds,
        )
        rows, results = run_experiment(const, threads)
        all_rows.extend(rows)
        summary["constant_reference"][name] = _scheme_summary(results)
    write_rows(os.path.join(out_dir, "fig3.csv"), all_rows)
    write_json(os.path.join(out_dir, "fig3_summary.json"), summary)
    return summary


TIMING_ITERATIONS = (10, 25, 50, 100, 200)
TIMING_TOTAL_SAMPLES = 200


def run_timing(
    out_dir: str,
    runs: int = 100,
    seed_base: int = 0,
) -> dict:
    """Wall time at fixed N = 200 while sweeping the iteration count,
    reproducing the runtime-scaling table."""
    os.makedirs(out_dir, exist_ok=True)
    problem = gaussian_target_problem()
    basis = AffineBasis(problem.state_dim)
    seeds = [seed_base + i for i in range(runs)]
    schemes = [
        ("balance", Balance(), FULL_RECOMPUTE),
        ("discard_optimized", DiscardOptimized(), INCREMENTAL),
    ]
    seconds: dict = {}
    finite: dict = {}
    for name, scheme, mode in schemes:
        seconds[name] = {}
        finite[name] = {}
        for k in TIMING_ITERATIONS:
            batch = TIMING_TOTAL_SAMPLES // k
            schedule = [batch] * k
            elapsed = 0.0
            all_finite = True
            for seed in seeds:
                strategy = PathIntegralAdaptation(basis, mode=mode)
                t0 = time.perf_counter()
                result = run_amis(problem, scheme, strategy, schedule, seed)
                elapsed += time.perf_counter() - t0
                all_finite &= bool(np.isfinite(result.outputs[-1].psi_hat))
            seconds[name][str(k)] = elapsed
            finite[name][str(k)] = all_finite
    k_lo, k_hi = str(TIMING_ITERATIONS[0]), str(TIMING_ITERATIONS[-1])
    payload = {
        "total_samples": TIMING_TOTAL_SAMPLES,
        "runs": runs,
        "iterations": list(TIMING_ITERATIONS),
        "seconds": seconds,
        "ratios": {
            name: seconds[name][k_hi] / seconds[name][k_lo] for name, _, _ in schemes
        },
        "psi_finite": finite,
    }
    write_json(os.path.join(out_dir, "timing.json"), payload)
    return payload


COUNTEREXAMPLE_U_PANELS = (1.0, 2.0, 3.0, 7.0)


def counterexample_densities(us=COUNTEREXAMPLE_U_PANELS, lo=-4.0, hi=11.0, n=1501):
    """Long-format density curves for the counterexample illustration:
    h q / p^u, p^u, and the u-independent product h q."""
    x = np.linspace(lo, hi, n)
    phi = np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)
    h = np.exp(-0.5 * x * x)
    hq = h * phi
    rows = []
    for u in us:
        pu = np.exp(-0.5 * (x - u) ** 2) / np.sqrt(2.0 * np.pi)
        rows.extend(zip([u] * n, x, hq / pu, pu, hq))
    return rows


def run_counterexample(
    out_dir: str,
    runs: int = 100,
    iterations: int = 100,
    seed_base: int = 0,
    threads: int = 1,
) -> dict:
    """Flat re-weighting under the forced proposal sequence u_k = k: the
    estimator collapses toward zero even though psi = 1/sqrt(2)."""
    os.makedirs(out_dir, exist_ok=True)
    config = ExperimentConfig.from_dict(
        {
            "experiment": "counterexample32",
            "problem": {"kind": "counterexample32"},
            "scheme": {"kind": "flat"},
            "adaptation": {"kind": "iteration_index"},
            "schedule": {"iterations": iterations, "batch_size": 1},
            "seeds": {"base": seed_base, "count": runs},
        }
    )
    rows, results = run_experiment(config, threads)
    write_rows(os.path.join(out_dir, "counterexample.csv"), rows)
    threshold = 0.1 * COUNTEREXAMPLE_PSI
    finals = np.array([r.outputs[-1].psi_hat for r in results])
    summary = {
        "psi_reference": COUNTEREXAMPLE_PSI,
        "threshold": threshold,
        "fraction_below": float(np.mean(finals < threshold)),
        "runs": runs,
        "iterations": iterations,
    }
    write_json(os.path.join(out_dir, "counterexample_summary.json"), summary)
    dens_path = os.path.join(out_dir, "counterexample_densities.csv")
    with open(dens_path, "w") as fh:
        fh.write("u,x,hq_over_pu,pu,hq\n")
        for u, x, a, b, c in counterexample_densities():
            fh.write(
                f"{float(u)!r},{float(x)!r},{float(a)!r},{float(b)!r},{float(c)!r}\n"
            )
    return summary
