"""Maximum-likelihood fitting of the six frontier variants.

Variants are the cross product of {cross_section, time_invariant,
time_varying} and {spatial, non-spatial}. All of them go through
:func:`stsfa.frontier.panel_loglik`; the cross-sectional model is its T=1
case and the time-invariant model its zero-decay case.

Optimisation runs in unconstrained coordinates::

    beta            -> beta
    sigma2_v        -> log sigma2_v
    sigma2_u        -> log sigma2_u
    rho             -> atanh(rho / B),  B = (1 - 1e-6) / max(1, max row sum)
    eta             -> eta
"""

from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import linalg, optimize
from scipy.stats import norm

from . import frontier
from .frontier import LikelihoodError, ParamVector
from .panel import PanelDataset
from .weights import SpatialWeights, delta as spatial_delta, morans_i

log = logging.getLogger(__name__)

TEMPORAL = ("cross_section", "time_invariant", "time_varying")
MODEL_NAMES = {
    "sfa": ("cross_section", False),
    "ssfa": ("cross_section", True),
    "tsfa-ti": ("time_invariant", False),
    "tsfa-tv": ("time_varying", False),
    "stsfa-ti": ("time_invariant", True),
    "stsfa-tv": ("time_varying", True),
}
BOUND_TOL = 1e-6
SQRT_2_PI = math.sqrt(2.0 / math.pi)


class EstimationError(RuntimeError):
    pass


class AlignmentError(EstimationError):
    """Weights and data disagree on unit identity or order."""


class StartError(EstimationError):
    """Log-likelihood is not finite at the starting values."""


class CollinearityError(EstimationError):
    def __init__(self, columns):
        self.columns = list(columns)
        super().__init__(f"X'X is singular; dependent column(s): {', '.join(map(str, self.columns))}")


@dataclass(frozen=True)
class ModelSpec:
    temporal: str = "time_invariant"
    spatial: bool = False
    s: int = frontier.PRODUCTION
    te_mode: str = "bc92"
    pooled: bool = False

    def __post_init__(self):
        if self.temporal not in TEMPORAL:
            raise ValueError(f"temporal must be one of {TEMPORAL}")
        frontier.check_sign(self.s)
        if self.te_mode not in ("paper", "bc92"):
            raise ValueError("te_mode must be 'paper' or 'bc92'")

    @classmethod
    def from_name(cls, name: str, **kw) -> "ModelSpec":
        try:
            temporal, spatial = MODEL_NAMES[name]
        except KeyError:
            raise ValueError(f"unknown model {name!r}; choose from {sorted(MODEL_NAMES)}") from None
        return cls(temporal=temporal, spatial=spatial, **kw)

    @property
    def name(self) -> str:
        for k, v in MODEL_NAMES.items():
            if v == (self.temporal, self.spatial):
                return k
        raise AssertionError

    @property
    def time_varying(self) -> bool:
        return self.temporal == "time_varying"

    def free_names(self, beta_names) -> list:
        names = list(beta_names) + ["sigma2_v", "sigma2_u"]
        if self.spatial:
            names.append("rho")
        if self.time_varying:
            names.append("eta")
        return names

    def n_free(self, p: int) -> int:
        return p + 2 + int(self.spatial) + int(self.time_varying)


@dataclass
class FitOptions:
    max_iter: int = 2000
    gtol: float = 1e-5
    xtol: float = 1e-9
    simplex: bool = True
    simplex_maxfev: Optional[int] = None
    fixed: dict = field(default_factory=dict)
    std_errors: bool = True
    init: Optional[ParamVector] = None


@dataclass
class FitResult:
    spec: ModelSpec
    params: ParamVector
    std_errors: dict
    loglik: float
    aic: float
    efficiency: np.ndarray
    convergence: str
    iterations: int
    init: ParamVector
    param_names: list
    init_loglik: float = float("nan")
    grad_norm: float = float("nan")
    n_evals: int = 0
    rho_identified: bool = True
    hessian_ok: bool = True
    notes: list = field(default_factory=list)
    unit_ids: tuple = ()
    time_ids: tuple = ()
    mean_rowsum: float = 1.0

    @property
    def k(self) -> int:
        return self.spec.n_free(self.params.beta.size)

    @property
    def converged(self) -> bool:
        return self.convergence in ("converged", "boundary")

    def estimates(self) -> dict:
        out = dict(zip(self.param_names[: self.params.beta.size], self.params.beta.tolist()))
        out["sigma2_v"] = self.params.sigma2_v
        out["sigma2_u"] = self.params.sigma2_u
        if self.spec.spatial:
            out["rho"] = self.params.rho
        if self.spec.time_varying:
            out["eta"] = self.params.eta
        return out

    def to_dict(self) -> dict:
        return {
            "model": self.spec.name,
            "spec": {
                "temporal": self.spec.temporal,
                "spatial": self.spec.spatial,
                "s": self.spec.s,
                "te_mode": self.spec.te_mode,
                "pooled": self.spec.pooled,
            },
            "estimates": self.estimates(),
            "std_errors": self.std_errors,
            "sigma2_u_total": self.sigma2_u_total(),
            "loglik": self.loglik,
            "aic": self.aic,
            "k": self.k,
            "convergence": self.convergence,
            "iterations": self.iterations,
            "n_evals": self.n_evals,
            "grad_norm": self.grad_norm,
            "init": _pv_dict(self.init, self.param_names, self.spec),
            "init_loglik": self.init_loglik,
            "rho_identified": self.rho_identified,
            "hessian_ok": self.hessian_ok,
            "notes": list(self.notes),
            "unit_ids": [_jsonable(u) for u in self.unit_ids],
            "time_ids": [_jsonable(t) for t in self.time_ids],
            "efficiency": self.efficiency.tolist(),
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    def sigma2_u_total(self) -> float:
        """Spatially inflated inefficiency variance ``sigma2_u / delta^2`` at the mean row sum."""
        if not self.spec.spatial:
            return self.params.sigma2_u
        return self.params.sigma2_u / (1.0 - self.params.rho * self.mean_rowsum) ** 2

    def table(self) -> str:
        return format_table([self])


def _jsonable(v):
    if isinstance(v, np.generic):
        return v.item()
    return v


def _pv_dict(pv: ParamVector, names, spec: ModelSpec) -> dict:
    out = dict(zip(names[: pv.beta.size], pv.beta.tolist()))
    out.update(sigma2_v=pv.sigma2_v, sigma2_u=pv.sigma2_u)
    if spec.spatial:
        out["rho"] = pv.rho
    if spec.time_varying:
        out["eta"] = pv.eta
    return out


# ---------------------------------------------------------------------------
# problem setup

def _prepare(spec: ModelSpec, data: PanelDataset, W: Optional[SpatialWeights]):
    if spec.temporal == "cross_section" and data.t != 1:
        if not spec.pooled:
            raise EstimationError("cross-section model needs T=1 data or pooled=True")
        if spec.spatial:
            raise EstimationError("pooled cross-section is only available without spatial weights")
        data = _pool(data)
    if spec.spatial:
        if W is None:
            raise AlignmentError("spatial model requires weights")
        check_alignment(data, W)
    elif W is not None:
        raise EstimationError("weights supplied for a non-spatial model")
    return data


def _pool(data: PanelDataset) -> PanelDataset:
    n, t, p = data.X.shape
    ids = tuple((u, tt) for u in data.unit_ids for tt in data.time_ids)
    return PanelDataset(ids, (data.time_ids[-1],), data.y.reshape(n * t, 1), data.X.reshape(n * t, 1, p), data.column_names)


def check_alignment(data: PanelDataset, W: SpatialWeights) -> None:
    if W.n != data.n:
        raise AlignmentError(f"weights have {W.n} units, data has {data.n}")
    if W.unit_ids is None:
        return
    if tuple(map(str, W.unit_ids)) != tuple(map(str, data.unit_ids)):
        wset, dset = set(map(str, W.unit_ids)), set(map(str, data.unit_ids))
        only_w = sorted(wset - dset)[:10]
        only_d = sorted(dset - wset)[:10]
        if only_w or only_d:
            raise AlignmentError(f"unit ids differ: only in weights {only_w}, only in data {only_d}")
        raise AlignmentError("weights and data list the same units in a different order")


def rho_identified(W: Optional[SpatialWeights]) -> bool:
    """rho is separable from sigma2_u only when row sums differ across units."""
    if W is None:
        return False
    return np.unique(W.row_sums).size > 1


class _Problem:
    """Log-likelihood over a vector of free parameters."""

    def __init__(self, spec: ModelSpec, data: PanelDataset, W, fixed: dict):
        self.spec = spec
        self.data = data
        self.W = W
        self.p = data.p
        self.bound = W.rho_bound() if spec.spatial else 1.0
        self.rowsums = W.row_sums if spec.spatial else None
        self.ones_t = np.ones(data.t)
        names = spec.free_names(range(self.p))
        self.all_names = ["beta"] * self.p + names[self.p:]
        self.fixed = dict(fixed)
        for key in self.fixed:
            if key not in names[self.p:]:
                raise EstimationError(f"cannot fix {key!r} in model {spec.name}")
        self.free_idx = [i for i, nm in enumerate(self.all_names) if nm not in self.fixed]
        self.n_evals = 0

    # natural <-> full vector
    def full_natural(self, pv: ParamVector) -> np.ndarray:
        v = list(pv.beta) + [pv.sigma2_v, pv.sigma2_u]
        if self.spec.spatial:
            v.append(pv.rho)
        if self.spec.time_varying:
            v.append(pv.eta)
        return np.array(v, dtype=float)

    def to_pv(self, full: np.ndarray) -> ParamVector:
        full = np.asarray(full, dtype=float)
        p = self.p
        rest = dict(zip(self.all_names[p:], full[p:]))
        for k, v in self.fixed.items():
            rest[k] = v
        return ParamVector(full[:p], rest["sigma2_v"], rest["sigma2_u"], rest.get("rho", 0.0), rest.get("eta", 0.0))

    def _placeholder(self, pv: ParamVector) -> ParamVector:
        # fixed entries never reach the optimizer; any transformable value will do
        return pv.replace(**{k: (1.0 if k.startswith("sigma2") else 0.0) for k in self.fixed})

    def transform(self, pv: ParamVector) -> np.ndarray:
        return transform(self._placeholder(pv), self.spec, self.bound)[self.free_idx]

    def untransform(self, theta: np.ndarray) -> ParamVector:
        full = transform(self._placeholder(self._base), self.spec, self.bound)
        full[self.free_idx] = theta
        return untransform(full, self.spec, self.bound, self.p, self.fixed)

    def set_base(self, pv: ParamVector):
        fixed = dict(self.fixed)
        self._base = ParamVector(
            pv.beta, fixed.get("sigma2_v", pv.sigma2_v), fixed.get("sigma2_u", pv.sigma2_u),
            fixed.get("rho", pv.rho), fixed.get("eta", pv.eta),
        )

    def loglik_pv(self, pv: ParamVector) -> float:
        self.n_evals += 1
        d = spatial_delta(self.W, pv.rho) if self.spec.spatial else 1.0
        h = frontier.decay_profile(pv.eta, self.data.t) if self.spec.time_varying else self.ones_t
        return frontier.panel_loglik(self.data.y, self.data.X, pv.beta, h, d, pv.sigma2_v, pv.sigma2_u, self.spec.s)

    def negll_theta(self, theta) -> float:
        try:
            pv = self.untransform(theta)
            return -self.loglik_pv(pv)
        except (LikelihoodError, ValueError, OverflowError, FloatingPointError):
            return np.inf

    def loglik_natural(self, x_free: np.ndarray) -> float:
        full = self.full_natural(self._base)
        full[self.free_idx] = x_free
        return self.loglik_pv(self.to_pv(full))


def transform(pv: ParamVector, spec: ModelSpec, bound: float = 1.0) -> np.ndarray:
    """Natural -> unconstrained coordinates (full vector)."""
    if not pv.sigma2_v > 0 or not pv.sigma2_u > 0:
        raise ValueError("variances must be > 0 to transform")
    v = list(pv.beta) + [math.log(pv.sigma2_v), math.log(pv.sigma2_u)]
    if spec.spatial:
        if not abs(pv.rho) < bound:
            raise ValueError(f"rho={pv.rho} outside admissible (-{bound}, {bound})")
        v.append(math.atanh(pv.rho / bound))
    if spec.time_varying:
        v.append(pv.eta)
    return np.array(v, dtype=float)


def untransform(theta, spec: ModelSpec, bound: float, p: int, fixed: Optional[dict] = None) -> ParamVector:
    theta = np.asarray(theta, dtype=float)
    fixed = fixed or {}
    i = p + 2
    rho = eta = 0.0
    if spec.spatial:
        rho = bound * math.tanh(theta[i])
        i += 1
    if spec.time_varying:
        eta = theta[i]
    return ParamVector(
        theta[:p],
        fixed.get("sigma2_v", math.exp(theta[p])),
        fixed.get("sigma2_u", math.exp(theta[p + 1])),
        fixed.get("rho", rho),
        fixed.get("eta", eta),
    )


# ---------------------------------------------------------------------------
# initial values

def _ols(y, X, names):
    q, r, piv = linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    rank = int(np.sum(diag > diag[0] * max(X.shape) * np.finfo(float).eps)) if diag.size else 0
    if rank < X.shape[1]:
        raise CollinearityError([names[j] for j in sorted(piv[rank:])])
    beta = linalg.solve_triangular(r, q.T @ y)
    out = np.empty_like(beta)
    out[piv] = beta
    return out


def initialize(spec: ModelSpec, data: PanelDataset, W: Optional[SpatialWeights] = None) -> ParamVector:
    """Starting values: OLS slopes, moment split of the residual variance,
    Moran's I for rho and zero decay."""
    data = _prepare(spec, data, W)
    n, t, p = data.X.shape
    Xf = data.X.reshape(n * t, p)
    yf = data.y.reshape(n * t)
    beta = _ols(yf, Xf, data.column_names)
    e = yf - Xf @ beta
    ec = e - e.mean()
    with np.errstate(over="ignore", invalid="ignore"):
        # overflow here surfaces as a StartError in fit
        m2 = float(np.mean(ec**2))
        m3 = float(np.mean(ec**3))
    s = spec.s

    rho0 = 0.0
    bound = 1.0
    if spec.spatial:
        bound = W.rho_bound()
        rho0 = morans_i(e.reshape(n, t).mean(axis=1), W)
        rho0 = float(np.clip(rho0, -0.99 * bound, 0.99 * bound))

    skew_term = -s * m3
    sigma2_u_tot = None
    if skew_term > 0:
        su = (skew_term / (SQRT_2_PI * (4.0 / math.pi - 1.0))) ** (1.0 / 3.0)
        s2v = m2 - (1.0 - 2.0 / math.pi) * su * su
        if s2v > 0:
            sigma2_u_tot = su * su
    if sigma2_u_tot is None:
        s2v = s2u = 0.5 * m2
    else:
        d0 = spatial_delta(W, rho0) if spec.spatial else np.ones(n)
        s2u = sigma2_u_tot * float(np.mean(d0**2))
    ic = data.intercept_column()
    if ic is not None:
        beta[ic] += s * SQRT_2_PI * math.sqrt(s2u if sigma2_u_tot is None else sigma2_u_tot)
    floor = 1e-10 * max(m2, 1e-300) if m2 > 0 else 1e-10
    return ParamVector(beta, max(s2v, floor), max(s2u, floor), rho0, 0.0)


# ---------------------------------------------------------------------------
# numerical derivatives

def numeric_gradient(f: Callable, x, rel_step: float = 1e-4) -> np.ndarray:
    """Five-point central-difference gradient."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for j in range(x.size):
        h = rel_step * max(abs(x[j]), 1.0)
        xp = x.copy()
        vals = []
        for k in (-2, -1, 1, 2):
            xp[j] = x[j] + k * h
            vals.append(f(xp))
        g[j] = (vals[0] - 8 * vals[1] + 8 * vals[2] - vals[3]) / (12 * h)
    return g


def _central_gradient(f, x, rel_step=1e-6):
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for j in range(x.size):
        h = rel_step * max(abs(x[j]), 1.0)
        xp = x.copy()
        xp[j] = x[j] + h
        fp = f(xp)
        xp[j] = x[j] - h
        fm = f(xp)
        g[j] = (fp - fm) / (2 * h)
    return g


def numeric_hessian(f: Callable, x, rel_step: float = 1e-4) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    k = x.size
    h = rel_step * np.maximum(np.abs(x), 1e-2)
    f0 = f(x)
    H = np.empty((k, k))
    for i in range(k):
        ei = np.zeros(k)
        ei[i] = h[i]
        H[i, i] = (f(x + ei) - 2 * f0 + f(x - ei)) / h[i] ** 2
        for j in range(i):
            ej = np.zeros(k)
            ej[j] = h[j]
            H[i, j] = H[j, i] = (
                f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)
            ) / (4 * h[i] * h[j])
    return H


def hessian_std_errors(loglik: Callable, at, at_bound=None):
    """Standard errors from the inverted negative Hessian in natural coordinates.

    Entries flagged in ``at_bound`` get ``None`` and are excluded from the
    Hessian. Returns ``(std_errors, ok)``; ``ok`` is False when the Hessian
    was not negative definite and a pseudo-inverse was used.
    """
    at = np.asarray(at, dtype=float)
    mask = np.zeros(at.size, bool) if at_bound is None else np.asarray(at_bound, bool)
    idx = np.flatnonzero(~mask)
    out: list = [None] * at.size
    if idx.size == 0:
        return out, True

    def sub(xs):
        full = at.copy()
        full[idx] = xs
        return loglik(full)

    H = numeric_hessian(sub, at[idx])
    ok = True
    try:
        np.linalg.cholesky(-H)
        cov = np.linalg.inv(-H)
    except np.linalg.LinAlgError:
        ok = False
        warnings.warn("Hessian is not negative definite; using pseudo-inverse", RuntimeWarning, stacklevel=2)
        cov = np.linalg.pinv(-H)
    d = np.diag(cov)
    for j, i in enumerate(idx):
        out[i] = float(np.sqrt(d[j])) if d[j] > 0 else None
    return out, ok


# ---------------------------------------------------------------------------
# fitting

def aic(loglik: float, k: int) -> float:
    if k < 1:
        raise ValueError("k must be >= 1")
    return -2.0 * loglik + 2.0 * k


def fit(spec: ModelSpec, data: PanelDataset, W: Optional[SpatialWeights] = None,
        options: Optional[FitOptions] = None) -> FitResult:
    options = options or FitOptions()
    orig = data
    data = _prepare(spec, data, W)
    init = options.init if options.init is not None else initialize(spec, orig, W)
    notes = []
    fixed = dict(options.fixed)
    identified = True
    if spec.spatial and "rho" not in fixed and not rho_identified(W):
        identified = False
        fixed["rho"] = init.rho
        notes.append(
            "rho not identified: all row sums equal, so the likelihood depends on rho and "
            "sigma2_u only through sigma2_u/delta^2; rho held at its starting value"
        )
    prob = _Problem(spec, data, W, fixed)
    prob.set_base(init)
    init = prob._base

    theta0 = prob.transform(init)
    f0 = prob.negll_theta(theta0)
    if not np.isfinite(f0):
        raise StartError(f"log-likelihood not finite at starting values {init.as_tuple()}")

    best_theta, best_f = theta0, f0
    iters = 0
    if options.simplex and theta0.size:
        maxfev = options.simplex_maxfev or 200 * theta0.size
        res = optimize.minimize(
            prob.negll_theta, theta0, method="Nelder-Mead",
            options={"maxfev": maxfev, "xatol": 1e-4, "fatol": 1e-7, "adaptive": theta0.size > 4},
        )
        iters += res.nit
        if res.fun < best_f:
            best_theta, best_f = res.x, res.fun

    def grad(th):
        return _central_gradient(prob.negll_theta, th, 1e-6)

    last_step = np.inf
    if theta0.size:
        remaining = max(options.max_iter - iters, 1)
        res = optimize.minimize(
            prob.negll_theta, best_theta, jac=grad, method="BFGS",
            options={"gtol": options.gtol, "maxiter": remaining, "xrtol": options.xtol},
        )
        iters += res.nit
        if res.fun <= best_f:
            last_step = float(np.max(np.abs(res.x - best_theta))) if res.nit else 0.0
            best_theta, best_f = res.x, res.fun

    g = numeric_gradient(prob.negll_theta, best_theta) if theta0.size else np.zeros(0)
    gnorm = float(np.max(np.abs(g))) if g.size else 0.0
    newton = 0
    while gnorm > options.gtol and iters < options.max_iter and newton < 50:
        newton += 1
        iters += 1
        H = numeric_hessian(prob.negll_theta, best_theta)
        try:
            step = -np.linalg.solve(H + 1e-10 * np.eye(H.shape[0]) * max(1.0, np.abs(H).max()), g)
        except np.linalg.LinAlgError:
            step = -g
        t = 1.0
        improved = False
        while t > 1e-8:
            cand = best_theta + t * step
            fc = prob.negll_theta(cand)
            if fc <= best_f:
                improved = True
                break
            t *= 0.5
        if not improved:
            last_step = 0.0
            break
        last_step = float(np.max(np.abs(cand - best_theta)))
        best_theta, best_f = cand, fc
        g = numeric_gradient(prob.negll_theta, best_theta)
        gnorm = float(np.max(np.abs(g)))
        if last_step <= options.xtol:
            break

    params = prob.untransform(best_theta) if theta0.size else init
    loglik = -best_f
    if gnorm <= options.gtol or last_step <= options.xtol:
        status = "converged"
    else:
        status = "max_iter"
    bound_flags = _at_bound(prob, params, fixed)
    free_at_bound = [f for f, nm in zip(bound_flags, prob.all_names) if nm not in fixed]
    if status == "converged" and any(free_at_bound[prob.p:]):
        status = "boundary"

    names = spec.free_names(data.column_names)
    se_list = [None] * len(names)
    hess_ok = True
    if options.std_errors:
        full = prob.full_natural(params)
        free_mask = np.array([nm not in fixed for nm in prob.all_names])

        def ll_nat(x):
            try:
                return prob.loglik_pv(prob.to_pv(x))
            except (LikelihoodError, ValueError):
                return -np.inf

        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            se_list, hess_ok = hessian_std_errors(ll_nat, full, np.array(bound_flags) | ~free_mask)
        notes.extend(str(w.message) for w in caught)
    std_errors = dict(zip(names, se_list))

    result = FitResult(
        spec=spec, params=params, std_errors=std_errors, loglik=float(loglik),
        aic=aic(loglik, spec.n_free(data.p)), efficiency=np.empty((0, 0)), convergence=status,
        iterations=int(iters), init=init, param_names=names, init_loglik=float(-f0),
        grad_norm=gnorm, n_evals=prob.n_evals, rho_identified=identified, hessian_ok=hess_ok,
        notes=notes, unit_ids=orig.unit_ids, time_ids=orig.time_ids,
    )
    if spec.spatial:
        result.mean_rowsum = float(np.mean(W.row_sums))
    result.efficiency = efficiency_scores(result, orig, W)
    return result


def _at_bound(prob: _Problem, pv: ParamVector, fixed) -> list:
    flags = [False] * prob.p + [pv.sigma2_v <= BOUND_TOL, pv.sigma2_u <= BOUND_TOL]
    if prob.spec.spatial:
        flags.append(abs(pv.rho) >= prob.bound - BOUND_TOL)
    if prob.spec.time_varying:
        flags.append(False)
    return flags


def efficiency_scores(fit_result: FitResult, data: PanelDataset, W: Optional[SpatialWeights] = None) -> np.ndarray:
    """N x T technical efficiency at the fitted parameters."""
    spec = fit_result.spec
    pv = fit_result.params
    pooled = spec.temporal == "cross_section" and data.t != 1
    d_data = _pool(data) if pooled else data
    d = spatial_delta(W, pv.rho) if spec.spatial else np.ones(d_data.n)
    eps = frontier.residuals(d_data.y, d_data.X, pv.beta)
    vp = pv.variances
    if spec.time_varying:
        h = frontier.decay_profile(pv.eta, d_data.t)
        pm = frontier.posterior_moments_tv(eps, h, d, vp, spec.s)
        te = frontier.technical_efficiency_tv(pm, h, spec.te_mode)
    else:
        pm = frontier.posterior_moments_ti(eps.mean(axis=1), d, vp, d_data.t, spec.s)
        te = np.repeat(frontier.technical_efficiency_ti(pm)[:, None], d_data.t, axis=1)
    if pooled:
        te = te.reshape(data.n, data.t)
    return te


# ---------------------------------------------------------------------------
# reporting

def stars(estimate: float, se) -> str:
    if se is None or not se > 0:
        return ""
    p = 2.0 * norm.sf(abs(estimate / se))
    return "***" if p < 0.01 else "**" if p < 0.05 else "*" if p < 0.10 else ""


def _fmt(x) -> str:
    return f"{x:.6g}"


def format_table(fits) -> str:
    """Coefficient table with one column per fit, significance from Wald z-tests."""
    rows: list = []
    seen = set()
    for f in fits:
        for nm in f.param_names:
            if nm not in seen:
                seen.add(nm)
                rows.append(nm)
    if any(f.spec.spatial for f in fits):
        rows.insert(rows.index("sigma2_u") + 1, "sigma2_u_total")
    header = [""] + [f.spec.name for f in fits]
    body = []
    for nm in rows:
        line = [nm]
        for f in fits:
            est = f.estimates()
            if nm == "sigma2_u_total":
                line.append(_fmt(f.sigma2_u_total()) if f.spec.spatial else "-")
            elif nm in est:
                se = f.std_errors.get(nm)
                line.append(_fmt(est[nm]) + stars(est[nm], se))
            else:
                line.append("-")
        body.append(line)
        se_line = [""]
        for f in fits:
            se = f.std_errors.get(nm)
            se_line.append(f"({_fmt(se)})" if se is not None else "")
        if any(se_line[1:]):
            body.append(se_line)
    body.append(["loglik"] + [_fmt(f.loglik) for f in fits])
    body.append(["AIC"] + [_fmt(f.aic) for f in fits])
    body.append(["convergence"] + [f.convergence for f in fits])
    widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]
    sep = "-" * (sum(widths) + 2 * (len(widths) - 1))
    out = [sep, "  ".join(h.ljust(w) for h, w in zip(header, widths)), sep]
    out += ["  ".join(c.ljust(w) for c, w in zip(r, widths)) for r in body]
    out += [sep, "* p<0.10, ** p<0.05, *** p<0.01 (normal approximation)"]
    return "\n".join(out) + "\n"
