"""Seeded Monte-Carlo benchmark harness.

Builds problems from a declarative config, fans solver runs out over a
thread pool, records traces as JSONL, and aggregates per-epoch curves
(mean and standard error across runs) into a JSON report that the plot
path turns into CSV files and figures.

Reproducibility contract: the same config and master seed produce
byte-identical JSONL and report files.  Per-run seeds come from a stable
hash of (master seed, run index) so runs are order-independent; wall-clock
fields never reach disk.
"""

from __future__ import annotations

import json
import os
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .datasets import (
    Dataset,
    build_graph_matrix,
    gen_quadratic_instance,
    parse_libsvm,
    split_train_test,
)
from .gradients import derive_run_seed
from .linalg import RealMatrix, stack_rows
from .problems import ConstrainedProblem, L1Regularizer, SigmoidLoss
from .solvers import SolveResult, SolverConfig, solve
from .theory import make_psi_hook, optimal_eta, optimal_theta, rho_lower_bound, theory_params_for

__all__ = [
    "PROBLEM_KINDS",
    "PLOT_KINDS",
    "ExperimentConfig",
    "ProblemFactory",
    "resolve_solver_config",
    "run_experiment",
    "evaluate_accuracy",
    "emit_plot_data",
    "load_report",
    "trace_record_dict",
]

PROBLEM_KINDS = ("synthetic_quadratic", "fused_lasso", "rlr")

# epoch budgets at desk scale when the config leaves ``epochs`` unset
_EPOCH_DEFAULTS = {"synthetic_quadratic": 30, "fused_lasso": 15, "rlr": 15}

# plot kind -> metric key in the report
PLOT_KINDS = {
    "loss_vs_epoch": "loss_gap",
    "variance_vs_epoch": "variance",
    "accuracy_vs_epoch": "accuracy",
    "psi_vs_iter": "psi",
}

_TRACE_KEYS = ("run_id", "epoch", "inner", "objective", "al_value",
               "constraint_residual", "variance_estimate", "psi",
               "theta_used", "rho_used")


@dataclass(frozen=True)
class ExperimentConfig:
    """Declarative description of one Monte-Carlo experiment.

    ``problem`` holds a ``kind`` from :data:`PROBLEM_KINDS` plus its
    parameters; ``solvers`` entries mirror ``SolverConfig`` field names and
    may carry a ``label`` used in output file names.  ``epochs`` of None
    picks the per-kind default.
    """

    problem: dict
    solvers: tuple
    monte_carlo: int
    output_dir: str
    master_seed: int
    epochs: int | None = None

    def __post_init__(self):
        if self.monte_carlo < 1:
            raise ValueError("monte_carlo must be at least 1")
        if not self.solvers:
            raise ValueError("solver list must be nonempty")
        solvers = tuple(dict(s) for s in self.solvers)
        object.__setattr__(self, "solvers", solvers)
        problem = dict(self.problem)
        kind = problem.get("kind")
        if kind not in PROBLEM_KINDS:
            raise ValueError(f"unknown problem kind {kind!r}")
        object.__setattr__(self, "problem", problem)
        if self.epochs is not None and self.epochs < 1:
            raise ValueError("epochs must be at least 1")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {"problem", "solvers", "monte_carlo", "output_dir",
                 "master_seed", "epochs"}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        missing = {"problem", "solvers", "monte_carlo", "output_dir",
                   "master_seed"} - set(d)
        if missing:
            raise ValueError(f"missing config keys: {sorted(missing)}")
        return cls(
            problem=dict(d["problem"]),
            solvers=tuple(d["solvers"]),
            monte_carlo=int(d["monte_carlo"]),
            output_dir=str(d["output_dir"]),
            master_seed=int(d["master_seed"]),
            epochs=None if d.get("epochs") is None else int(d["epochs"]),
        )

    @classmethod
    def from_json_file(cls, path) -> "ExperimentConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return {
            "problem": dict(self.problem),
            "solvers": [dict(s) for s in self.solvers],
            "monte_carlo": self.monte_carlo,
            "output_dir": self.output_dir,
            "master_seed": self.master_seed,
            "epochs": self.epochs,
        }


def _sigmoid_problem(ds: Dataset, A: RealMatrix, lambda1: float) -> ConstrainedProblem:
    losses = tuple(SigmoidLoss(ds.row(i), float(ds.labels[i])) for i in range(ds.n))
    d = A.rows
    return ConstrainedProblem(losses, L1Regularizer(lambda1), A,
                              RealMatrix.scaled_identity(d, -1.0), np.zeros(d))


class ProblemFactory:
    """Turns the config's problem block into per-run problem instances.

    Synthetic instances are regenerated from each run seed so every Monte
    Carlo repetition sees fresh data (solvers sharing a run index see the
    same instance).  Dataset-backed problems are built once: the data is
    fixed, only the sampling seed varies across runs.
    """

    def __init__(self, problem: dict, master_seed: int):
        self.kind = problem["kind"]
        self.params = {k: v for k, v in problem.items() if k != "kind"}
        self.master_seed = master_seed
        self._fixed: tuple[ConstrainedProblem, Dataset | None] | None = None
        if self.kind == "synthetic_quadratic":
            allowed = {"n", "d1", "a_mode", "lambda1", "scale", "init"}
            if self.params.get("init", "normal") not in ("normal", "zeros"):
                raise ValueError("init must be 'normal' or 'zeros'")
        elif self.kind == "fused_lasso":
            allowed = {"dataset", "lambda1", "corr_threshold"}
        else:
            allowed = {"dataset", "lambda1", "train_fraction"}
        extra = set(self.params) - allowed
        if extra:
            raise ValueError(f"unknown {self.kind} keys: {sorted(extra)}")
        if self.kind != "synthetic_quadratic":
            self._fixed = self._build_fixed()

    def _build_fixed(self) -> tuple[ConstrainedProblem, Dataset | None]:
        ds = parse_libsvm(Path(self.params["dataset"]).read_text(encoding="utf-8"))
        if self.kind == "fused_lasso":
            lambda1 = float(self.params.get("lambda1", 1e-5))
            graph = build_graph_matrix(ds, float(self.params.get("corr_threshold", 0.5)))
            A = stack_rows(graph.G, RealMatrix.identity(ds.d1))
            return _sigmoid_problem(ds, A, lambda1), None
        lambda1 = float(self.params.get("lambda1", 2e-5))
        fraction = float(self.params.get("train_fraction", 0.6))
        train, test = split_train_test(ds, fraction, self.master_seed)
        return _sigmoid_problem(train, RealMatrix.identity(ds.d1), lambda1), test

    def build(self, run_seed: int) -> tuple[ConstrainedProblem, Dataset | None]:
        if self._fixed is not None:
            return self._fixed
        return (
            gen_quadratic_instance(
                int(self.params["n"]), int(self.params["d1"]), run_seed,
                a_mode=self.params.get("a_mode", "identity"),
                lambda1=float(self.params.get("lambda1", 1e-4)),
                scale=float(self.params.get("scale", 1.0)),
            ),
            None,
        )

    def initial_point(self, run_seed: int, p: ConstrainedProblem):
        """Seeded start for synthetic runs; zero is a stationary point of
        the quadratic family, so those default to a unit normal draw.
        Dataset problems keep the conventional zero start."""
        if self.kind != "synthetic_quadratic":
            return None
        if self.params.get("init", "normal") == "zeros":
            return None
        rng = np.random.default_rng(derive_run_seed(run_seed, 1))
        return rng.standard_normal(p.d1)

    @property
    def epoch_default(self) -> int:
        return _EPOCH_DEFAULTS[self.kind]


def _sanitize_label(label: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", label.strip()) or "solver"


def solver_labels(entries) -> list[str]:
    """Stable, unique, filename-safe labels: given one or the algorithm
    name, with _2, _3 ... appended on collision."""
    seen: dict[str, int] = {}
    out = []
    for entry in entries:
        base = _sanitize_label(str(entry.get("label", entry.get("algorithm", "solver"))))
        seen[base] = seen.get(base, 0) + 1
        out.append(base if seen[base] == 1 else f"{base}_{seen[base]}")
    return out


def resolve_solver_config(entry: dict, p: ConstrainedProblem, epochs: int,
                          run_seed: int) -> SolverConfig:
    """Concrete SolverConfig for one run: defaults filled (m = component
    count, epoch budget, run seed) and "optimal" knobs replaced by the
    closed-form values for this problem's spectra."""
    d = {k: v for k, v in entry.items() if k != "label"}
    d.setdefault("m", max(p.n, 1))
    d.setdefault("epochs", epochs)
    d["seed"] = run_seed
    cfg = SolverConfig(**d)
    if cfg.eta_mode == "optimal" or cfg.theta_mode == "optimal":
        if cfg.algorithm not in ("asvrg", "svrg"):
            raise ValueError("optimal step sizes come from the momentum analysis; "
                             "use them with the variance-reduced drivers")
        if cfg.q_mode != "identity":
            raise ValueError("optimal step sizes are derived for Q = I")
        if cfg.rho_mode != "fixed":
            raise ValueError("optimal step sizes need a fixed rho")
        probe_theta = cfg.theta if cfg.theta_mode == "fixed" else 0.5
        tp = theory_params_for(p, replace(cfg, eta_mode="fixed"), theta=probe_theta)
        if cfg.theta_mode == "optimal":
            theta_val, _ = optimal_theta(tp)
            cfg = replace(cfg, theta=theta_val, theta_mode="fixed")
        if cfg.eta_mode == "optimal":
            cfg = replace(cfg, eta=optimal_eta(tp), eta_mode="fixed")
    return cfg


def _wire_callbacks(p: ConstrainedProblem, cfg: SolverConfig):
    """Potential recording and the adaptive-penalty bound, when asked for.

    Both come from the momentum-driver analysis, so they require the
    variance-reduced algorithms; the potential additionally needs fixed
    penalty and momentum (its constants are built once per run).
    """
    psi_hook = None
    rho_bound = None
    vr = cfg.algorithm in ("asvrg", "svrg")
    theta_for_theory = 1.0 if cfg.algorithm == "svrg" else None
    if cfg.lambda_hist:
        if not vr:
            raise ValueError("potential recording applies to the "
                             "variance-reduced drivers only")
        if cfg.rho_mode != "fixed":
            raise ValueError("potential recording needs a fixed rho")
        if cfg.algorithm == "asvrg" and cfg.theta_mode != "fixed":
            raise ValueError("potential recording needs a fixed theta")
        tp = theory_params_for(p, cfg, theta=theta_for_theory)
        psi_hook = make_psi_hook(p, tp)
    if cfg.rho_mode == "adaptive":
        if not vr:
            raise ValueError("the adaptive penalty schedule applies to the "
                             "variance-reduced drivers only")
        if cfg.algorithm == "asvrg" and cfg.theta_mode != "fixed":
            raise ValueError("the adaptive penalty bound needs a fixed theta")
        th = 1.0 if cfg.algorithm == "svrg" else cfg.theta

        def rho_bound(rho: float) -> float:
            return rho_lower_bound(theory_params_for(p, cfg, rho=rho, theta=th)).value

    return psi_hook, rho_bound


def trace_record_dict(rec) -> dict:
    """JSON-ready view of one trace record; wall-clock time stays out so
    files are byte-reproducible."""
    return {
        "run_id": int(rec.run_id),
        "epoch": int(rec.epoch),
        "inner": int(rec.inner),
        "objective": float(rec.objective),
        "al_value": float(rec.al_value),
        "constraint_residual": float(rec.constraint_residual),
        "variance_estimate": float(rec.variance_estimate),
        "psi": None if rec.psi is None else float(rec.psi),
        "theta_used": float(rec.theta_used),
        "rho_used": float(rec.rho_used),
    }


def evaluate_accuracy(x: np.ndarray, test: Dataset) -> float:
    """Fraction of test samples with sign(a @ x) = label; sign(0) counts
    as +1."""
    if test.n == 0:
        raise ValueError("empty test set")
    scores = test.samples @ np.asarray(x, dtype=np.float64)
    preds = np.where(scores >= 0.0, 1.0, -1.0)
    return float(np.mean(preds == test.labels))


@dataclass
class _RunPayload:
    label: str
    run_idx: int
    status: str
    records: list
    epoch_objective: list      # objective at each epoch boundary (0..S)
    epoch_variance: list       # mean estimator variance within each epoch
    accuracy: list | None      # per-epoch test accuracy, dataset problems
    psi: list | None           # (global step, psi) pairs when recorded


def _epoch_series(records: list[dict], m: int, epochs: int):
    obj = [records[0]["objective"]]
    var = [0.0]
    for s in range(1, epochs + 1):
        inner = [r for r in records if r["epoch"] == s]
        if len(inner) != m:
            return None, None  # truncated by divergence
        obj.append(inner[-1]["objective"])
        var.append(float(np.mean([r["variance_estimate"] for r in inner])))
    return obj, var


def _run_one(factory: ProblemFactory, entry: dict, label: str, run_idx: int,
             master_seed: int, epochs: int) -> _RunPayload:
    run_seed = derive_run_seed(master_seed, run_idx)
    p, test = factory.build(run_seed)
    cfg = resolve_solver_config(entry, p, epochs, run_seed)
    psi_hook, rho_bound = _wire_callbacks(p, cfg)
    res: SolveResult = solve(p, cfg, init=factory.initial_point(run_seed, p),
                             psi_hook=psi_hook, rho_bound=rho_bound,
                             run_id=run_idx)
    records = [trace_record_dict(r) for r in res.trace]
    obj, var = _epoch_series(records, cfg.m, cfg.epochs)
    acc = None
    if test is not None and res.status == "completed":
        acc = [evaluate_accuracy(xt, test) for xt in res.x_tilde_hist]
    psi = [(g, r["psi"]) for g, r in enumerate(records) if r["psi"] is not None]
    return _RunPayload(label, run_idx, res.status, records, obj, var,
                       acc, psi or None)


def _mean_stderr(rows: list[list[float]]) -> tuple[list[float], list[float]]:
    arr = np.asarray(rows, dtype=np.float64)
    mean = arr.mean(axis=0)
    if arr.shape[0] > 1:
        stderr = arr.std(axis=0, ddof=1) / np.sqrt(arr.shape[0])
    else:
        stderr = np.zeros(arr.shape[1])
    return [float(v) for v in mean], [float(v) for v in stderr]


def _aggregate(index, rows):
    mean, stderr = _mean_stderr(rows)
    return {"index": list(index), "mean": mean, "stderr": stderr}


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Run the full Monte-Carlo grid and write traces + report.

    Solver x run tasks execute on a thread pool (capped by BENCH_THREADS);
    every output is keyed by (solver label, run index) so scheduling order
    never reaches the files.  Diverged runs keep their partial trace on
    disk but are excluded from the aggregates and counted in the report.
    """
    factory = ProblemFactory(cfg.problem, cfg.master_seed)
    epochs = cfg.epochs if cfg.epochs is not None else factory.epoch_default
    labels = solver_labels(cfg.solvers)
    out = Path(cfg.output_dir)
    traces_dir = out / "traces"
    traces_dir.mkdir(parents=True, exist_ok=True)

    threads = os.environ.get("BENCH_THREADS")
    max_workers = max(1, int(threads) if threads else (os.cpu_count() or 1))
    tasks = [(entry, label, run_idx)
             for entry, label in zip(cfg.solvers, labels)
             for run_idx in range(cfg.monte_carlo)]
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        payloads = list(pool.map(
            lambda t: _run_one(factory, t[0], t[1], t[2], cfg.master_seed, epochs),
            tasks))

    by_solver: dict[str, list[_RunPayload]] = {label: [] for label in labels}
    for pay in payloads:
        by_solver[pay.label].append(pay)
    for runs in by_solver.values():
        runs.sort(key=lambda pay: pay.run_idx)

    trace_files: dict[str, list[str]] = {}
    for label in labels:
        files = []
        for pay in by_solver[label]:
            path = traces_dir / f"{label}_run{pay.run_idx:04d}.jsonl"
            with open(path, "w", encoding="utf-8") as fh:
                for rec in pay.records:
                    fh.write(json.dumps(rec, separators=(",", ":")) + "\n")
            files.append(str(path.relative_to(out)))
        trace_files[label] = files

    used = {label: [pay for pay in runs if pay.status == "completed"]
            for label, runs in by_solver.items()}
    best = min(
        (rec["objective"] for runs in used.values() for pay in runs
         for rec in pay.records),
        default=0.0)

    solvers_report = {}
    for label, entry in zip(labels, cfg.solvers):
        runs = by_solver[label]
        ok = used[label]
        metrics = {"loss_gap": None, "variance": None, "accuracy": None, "psi": None}
        if ok:
            epoch_idx = list(range(epochs + 1))
            metrics["loss_gap"] = _aggregate(
                epoch_idx,
                [[o - best for o in pay.epoch_objective] for pay in ok])
            metrics["variance"] = _aggregate(
                epoch_idx, [pay.epoch_variance for pay in ok])
            if all(pay.accuracy is not None for pay in ok):
                metrics["accuracy"] = _aggregate(
                    epoch_idx, [pay.accuracy for pay in ok])
            if all(pay.psi is not None for pay in ok):
                steps = [g for g, _ in ok[0].psi]
                if all([g for g, _ in pay.psi] == steps for pay in ok):
                    metrics["psi"] = _aggregate(
                        steps, [[v for _, v in pay.psi] for pay in ok])
        solvers_report[label] = {
            "algorithm": entry.get("algorithm", "asvrg"),
            "runs_total": len(runs),
            "runs_used": len(ok),
            "runs_diverged": len(runs) - len(ok),
            "final_loss_gap_mean": (metrics["loss_gap"]["mean"][-1]
                                    if metrics["loss_gap"] else None),
            "metrics": metrics,
            "trace_files": trace_files[label],
        }

    report = {
        "config": cfg.to_dict(),
        "epochs": epochs,
        "best_objective": float(best),
        "solvers": solvers_report,
    }
    with open(out / "report.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    return report


def load_report(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


# ---------------------------------------------------------------------- #
# plot data
# ---------------------------------------------------------------------- #

_PLOT_SCRIPT = '''\
#!/usr/bin/env python3
"""Render every curve CSV in this directory to PNG.

Each CSV has columns epoch,mean,stderr; files are named <kind>_<label>.csv
and series sharing a kind land on one figure.  Only the CSVs are read.
"""
import csv
import sys
from collections import defaultdict
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).parent
groups = defaultdict(list)
for path in sorted(here.glob("*_*.csv")):
    kind, _, label = path.stem.partition("_")
    groups[kind].append((label, path))
for kind, entries in sorted(groups.items()):
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, path in entries:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        xs = [float(r["epoch"]) for r in rows]
        ys = [float(r["mean"]) for r in rows]
        es = [float(r["stderr"]) for r in rows]
        ax.errorbar(xs, ys, yerr=es, label=label, capsize=2)
    ax.set_xlabel("epoch")
    ax.set_ylabel(kind)
    ax.legend()
    fig.tight_layout()
    fig.savefig(here / f"{kind}.png", dpi=120)
    plt.close(fig)
print(f"rendered {len(groups)} figure(s) in {here}")
'''


def emit_plot_data(report: dict, kind: str, out_dir=None) -> list[Path]:
    """Write one (epoch, mean, stderr) CSV per solver for ``kind``, plus a
    standalone rendering script; returns the CSV paths.

    Re-emission over the same report is byte-identical.  Solvers that did
    not record the requested metric are skipped; if none did, that is an
    error.
    """
    if kind not in PLOT_KINDS:
        raise ValueError(f"unknown plot kind {kind!r}; "
                         f"choose from {sorted(PLOT_KINDS)}")
    metric_key = PLOT_KINDS[kind]
    if out_dir is None:
        out_dir = Path(report["config"]["output_dir"]) / "plots"
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for label, entry in report["solvers"].items():
        metric = entry["metrics"].get(metric_key)
        if metric is None:
            continue
        path = out_dir / f"{kind}_{label}.csv"
        lines = ["epoch,mean,stderr"]
        for i, mean, err in zip(metric["index"], metric["mean"], metric["stderr"]):
            lines.append(f"{i},{float(mean)!r},{float(err)!r}")
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        paths.append(path)
    if not paths:
        raise ValueError(f"no solver in the report recorded data for {kind!r}")
    script = out_dir / "plot_curves.py"
    script.write_text(_PLOT_SCRIPT, encoding="utf-8")
    return paths
