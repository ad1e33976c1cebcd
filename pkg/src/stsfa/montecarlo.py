"""Simulation design for the spatio-temporal frontier and the replicate runner.

DGP, one input, one output::

    y_it = b0 + b1 * x_i + v_i - u_it
    u_it = exp(-eta (t - T)) * [(I - rho W)^{-1} utilde]_i,   utilde_i ~ |N(0, 1)|

``x_i ~ U(0, 1)`` and ``v_i`` are drawn once per unit and repeated over t.
W is the row-standardized k-nearest-neighbour matrix on uniform random
coordinates in the unit square, ``k = round(k_frac * n)``.

Seeding: replicate ``r`` of grid cell ``c`` uses
``SeedSequence([master_seed, c, r]).generate_state(1, uint64)[0]``, so a
replicate's data do not depend on which worker runs it.
"""

from __future__ import annotations

import csv
import io
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .estimator import FitOptions, ModelSpec, fit
from .frontier import ParamVector, decay_profile
from .panel import PanelDataset
from .weights import knn_weights, row_standardize, spatial_inverse_apply

RHO_GRID = (0.05, 0.2, 0.4, 0.6, 0.8)
ETA_GRID = (-0.10, -0.05, 0.0, 0.05, 0.10)
N_GRID = (100, 200, 400)
LITERAL_V_MEAN = 0.75 * (math.pi - 2.0) / math.pi


@dataclass(frozen=True)
class DgpConfig:
    n: int
    rho: float
    eta: float
    t: int = 5
    beta0: float = 5.0
    beta1: float = 5.0
    k_frac: float = 0.10
    v_spec: str = "literal_paper"
    standardize: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be >= 2")
        if self.t < 1:
            raise ValueError("t must be >= 1")
        if self.v_spec not in ("literal_paper", "zero_mean"):
            raise ValueError("v_spec must be 'literal_paper' or 'zero_mean'")
        k = self.k
        if k < 1 or k >= self.n:
            raise ValueError(f"k = round(k_frac * n) = {k} must be in [1, n)")
        bound = 1.0 if self.standardize else 1.0 / k
        if not abs(self.rho) < bound:
            raise ValueError(f"rho={self.rho} outside admissible range (|rho| < {bound:g})")

    @property
    def k(self) -> int:
        # round half away from zero, not banker's rounding
        return int(math.floor(self.k_frac * self.n + 0.5))

    @property
    def v_mean(self) -> float:
        return LITERAL_V_MEAN if self.v_spec == "literal_paper" else 0.0


@dataclass(frozen=True, eq=False)
class Simulation:
    data: PanelDataset
    weights: object
    truth: ParamVector
    u: np.ndarray
    utilde: np.ndarray
    coords: np.ndarray

    def __iter__(self):
        return iter((self.data, self.weights, self.truth))


def simulate_dgp(config: DgpConfig) -> Simulation:
    rng = np.random.default_rng(config.seed)
    n, t = config.n, config.t
    coords = rng.uniform(size=(n, 2))
    x = rng.uniform(size=n)
    v = rng.normal(config.v_mean, 1.0, size=n)
    utilde = np.abs(rng.normal(0.0, 1.0, size=n))
    W = knn_weights(coords, config.k)
    if config.standardize:
        W = row_standardize(W)
    ids = tuple(range(n))
    W = W.with_ids(ids)
    u_space = spatial_inverse_apply(W, config.rho, utilde)
    u = np.outer(u_space, decay_profile(config.eta, t))
    y = config.beta0 + config.beta1 * x[:, None] + v[:, None] - u
    X = np.empty((n, t, 2))
    X[:, :, 0] = 1.0
    X[:, :, 1] = x[:, None]
    data = PanelDataset(ids, tuple(range(1, t + 1)), y, X, ("(Intercept)", "x"))
    return Simulation(data, W, simulate_truth(config), u, utilde, coords)


def replicate_seed(master_seed: int, cell: int, rep: int) -> int:
    ss = np.random.SeedSequence([int(master_seed) & (2**64 - 1), cell, rep])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def summarize(estimates, truth) -> dict:
    """Bias, sample sd (R-1 denominator) and MSE per column."""
    est = np.asarray(estimates, dtype=float)
    if est.ndim == 1:
        est = est[:, None]
    r = est.shape[0]
    if r < 2:
        raise ValueError("need at least two replicates")
    truth = np.broadcast_to(np.asarray(truth, dtype=float), (est.shape[1],))
    err = est - truth
    bias = err.mean(axis=0)
    sd = est.std(axis=0, ddof=1)
    mse = np.mean(err**2, axis=0)
    return {"bias": bias, "sd": sd, "mse": mse}


def param_names(spec: ModelSpec) -> list:
    names = ["beta0", "beta1", "sigma2_v", "sigma2_u"]
    if spec.spatial:
        names.append("rho")
    if spec.time_varying:
        names.append("eta")
    return names


def _truth_vector(truth: ParamVector, names) -> np.ndarray:
    lookup = {"beta0": truth.beta[0], "beta1": truth.beta[1], "sigma2_v": truth.sigma2_v,
              "sigma2_u": truth.sigma2_u, "rho": truth.rho, "eta": truth.eta}
    return np.array([lookup[k] for k in names])


def _run_one(task):
    config, spec, options = task
    sim = simulate_dgp(config)
    names = param_names(spec)
    try:
        res = fit(spec, sim.data, sim.weights if spec.spatial else None, options)
    except Exception as exc:  # a failed replicate is recorded, not fatal
        return np.full(len(names), np.nan), False, f"{type(exc).__name__}: {exc}"
    p = res.params
    vals = {"beta0": p.beta[0], "beta1": p.beta[1], "sigma2_v": p.sigma2_v,
            "sigma2_u": p.sigma2_u, "rho": p.rho, "eta": p.eta}
    return np.array([vals[k] for k in names]), res.converged, res.convergence


@dataclass
class CellResult:
    config: DgpConfig
    names: list
    truth: np.ndarray
    estimates: np.ndarray
    converged: np.ndarray
    status: list

    @property
    def n_total(self) -> int:
        return int(self.converged.size)

    @property
    def n_converged(self) -> int:
        return int(self.converged.sum())

    def stats(self) -> dict:
        ok = self.estimates[self.converged]
        if ok.shape[0] < 2:
            nan = np.full(len(self.names), np.nan)
            return {"bias": nan, "sd": nan, "mse": nan}
        return summarize(ok, self.truth)


@dataclass
class MonteCarloReport:
    cells: list = field(default_factory=list)
    runtime: float = 0.0

    def cell(self, rho, eta, n) -> CellResult:
        for c in self.cells:
            if math.isclose(c.config.rho, rho) and math.isclose(c.config.eta, eta) and c.config.n == n:
                return c
        raise KeyError((rho, eta, n))

    def rows(self):
        for c in self.cells:
            st = c.stats()
            for j, nm in enumerate(c.names):
                yield {
                    "rho": c.config.rho, "eta": c.config.eta, "n": c.config.n, "param": nm,
                    "bias": st["bias"][j], "sd": st["sd"][j], "mse": st["mse"][j],
                    "n_converged": c.n_converged, "n_total": c.n_total,
                }

    def to_csv(self) -> str:
        buf = io.StringIO()
        cols = ["rho", "eta", "n", "param", "bias", "sd", "mse", "n_converged", "n_total"]
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in self.rows():
            w.writerow([_num(r[c]) for c in cols])
        return buf.getvalue()

    def estimates_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        names = self.cells[0].names if self.cells else []
        w.writerow(["rho", "eta", "n", "rep", "converged", *names])
        for c in self.cells:
            for r in range(c.n_total):
                w.writerow([_num(c.config.rho), _num(c.config.eta), c.config.n, r, int(c.converged[r]),
                            *(_num(v) for v in c.estimates[r])])
        return buf.getvalue()

    def table(self, n: int, params=("beta1", "rho", "eta")) -> str:
        """Text table in the bias / sd / MSE by (eta, rho) layout."""
        cells = [c for c in self.cells if c.config.n == n]
        rhos = sorted({c.config.rho for c in cells})
        etas = sorted({c.config.eta for c in cells})
        head = f"{'param':<8}{'eta':>7}  {'stat':<5}" + "".join(f"{r:>10g}" for r in rhos)
        lines = [f"Monte Carlo results ({n} units)", head, "-" * len(head)]
        for pname in params:
            if not cells or pname not in cells[0].names:
                continue
            j = cells[0].names.index(pname)
            for e in etas:
                for stat in ("bias", "sd", "mse"):
                    vals = []
                    for r in rhos:
                        try:
                            c = self.cell(r, e, n)
                            vals.append(f"{c.stats()[stat][j]:>10.4f}")
                        except KeyError:
                            vals.append(f"{'-':>10}")
                    label = pname if (e == etas[0] and stat == "bias") else ""
                    elabel = f"{e:g}" if stat == "bias" else ""
                    lines.append(f"{label:<8}{elabel:>7}  {stat:<5}" + "".join(vals))
            lines.append("-" * len(head))
        return "\n".join(lines) + "\n"


def _num(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return x


def build_grid(ns=N_GRID, rhos=RHO_GRID, etas=ETA_GRID, **kw) -> list:
    return [DgpConfig(n=n, rho=r, eta=e, **kw) for n in ns for e in etas for r in rhos]


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get("STSFA_THREADS", "1")))
    except ValueError:
        return 1


def run_experiment(grid: Sequence[DgpConfig], reps: int, spec: Optional[ModelSpec] = None,
                   master_seed: int = 0, threads: int = 1, options: Optional[FitOptions] = None,
                   progress=None) -> MonteCarloReport:
    if reps < 2:
        raise ValueError("reps must be >= 2")
    spec = spec or ModelSpec(temporal="time_varying", spatial=True)
    options = options or FitOptions(std_errors=False)
    tasks = []
    for ci, cfg in enumerate(grid):
        for r in range(reps):
            tasks.append((replace(cfg, seed=replicate_seed(master_seed, ci, r)), spec, options))
    start = time.perf_counter()
    if threads <= 1:
        results = []
        for i, task in enumerate(tasks):
            results.append(_run_one(task))
            if progress:
                progress(i + 1, len(tasks))
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_run_one, tasks, chunksize=max(1, len(tasks) // (8 * threads))))
    names = param_names(spec)
    report = MonteCarloReport()
    for ci, cfg in enumerate(grid):
        chunk = results[ci * reps:(ci + 1) * reps]
        truth = _truth_vector(simulate_truth(cfg), names)
        report.cells.append(CellResult(
            cfg, names, truth,
            np.array([c[0] for c in chunk]),
            np.array([bool(c[1]) for c in chunk]),
            [c[2] for c in chunk],
        ))
    report.runtime = time.perf_counter() - start
    return report


def simulate_truth(cfg: DgpConfig) -> ParamVector:
    return ParamVector([cfg.beta0, cfg.beta1], 1.0, 1.0, cfg.rho, cfg.eta)
