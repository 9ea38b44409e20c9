"""Sweeps over k, log-log rate fits and pass/fail verdicts."""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import bargmann_model as bm
from . import pointwise_core as pc
from . import torus_model as tm

ZERO_FLOOR = 1e-13
MAX_RMS = 0.35

TORUS_K = (8, 12, 16, 24, 32, 48, 64)
BARGMANN_K = (4, 8, 12, 16, 24, 32)


class InsufficientData(ValueError):
    pass


class ModelError(RuntimeError):
    pass


# --- experiment records ----------------------------------------------------------

def _parse_tau(v) -> complex:
    if isinstance(v, (list, tuple)) and len(v) == 2:
        return complex(float(v[0]), float(v[1]))
    if isinstance(v, str):
        return complex(v.replace(" ", "").replace("i", "j"))
    return complex(v)


def _parse_trig(v) -> tm.TrigPoly:
    named = {"cos_x": tm.TrigPoly.cos_x(), "cos_y": tm.TrigPoly.cos_y()}
    if isinstance(v, str):
        if v not in named:
            raise ValueError(f"unknown function name {v!r}; use cos_x, cos_y or coefficient triples")
        return named[v]
    return tm.TrigPoly({(int(p), int(q)): _parse_tau(c) for p, q, c in v})


FAMILIES = {
    "functoriality": {
        "model": "torus", "window": (-1.4, -0.6),
        "params": {"tau_a": [0.0, 1.0], "tau_b": [0.5, 1.5], "tau_c": [-0.3, 0.8]},
    },
    "transport_vs_fio": {
        "model": "torus", "window": (-1.4, -0.6),
        "params": {"path": [[0.0, 1.0], [0.0, 2.0]]},
    },
    "curvature_decay": {
        "model": "torus", "window": (-math.inf, -0.6),
        "params": {"center": [0.0, 1.0], "eta": [1.0, 0.0], "mu": [0.0, 1.0], "eps": 0.25},
    },
    "curvature_nodecay": {
        "model": "torus", "window": (-0.3, math.inf), "min_defect": 0.05,
        "params": {"center": [0.0, 1.0], "eta": [1.0, 0.0], "mu": [0.0, 1.0], "eps": 0.25},
    },
    "commutator_decay": {
        "model": "torus", "window": (-math.inf, -1.6),
        "params": {"tau": [0.3, 1.1], "f": "cos_x", "g": "cos_y"},
    },
    "schrodinger": {
        "model": "bargmann", "window": (-math.inf, -0.6),
        "params": {"hamiltonian": [1.0, 0.0, 1.0], "t": math.pi / 3, "cutoff": 48, "window": None},
    },
    "spectrum": {
        "model": "bargmann", "max_defect": 1e-6,
        "params": {"hamiltonian": [1.0, 0.0, 1.0], "cutoff": 48, "corrected": True},
    },
}


@dataclass(frozen=True)
class Experiment:
    id: str
    family: str
    params: dict = field(default_factory=dict)
    k_list: tuple = ()
    tolerances: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown experiment family {self.family!r}")
        spec = FAMILIES[self.family]
        unknown = set(self.params) - set(spec["params"]) - {"grid_scale"}
        if unknown:
            raise ValueError(f"unknown params for {self.family}: {sorted(unknown)}")
        params = dict(spec["params"])
        params.update(self.params)
        object.__setattr__(self, "params", params)
        ks = tuple(int(k) for k in (self.k_list or (BARGMANN_K if spec["model"] == "bargmann" else TORUS_K)))
        if len(ks) < 4 or any(b <= a for a, b in zip(ks, ks[1:])) or ks[0] < 1:
            raise ValueError("k_list must be strictly increasing positive integers, length >= 4")
        object.__setattr__(self, "k_list", ks)
        bad = set(self.tolerances) - {"window", "max_rms", "min_defect", "max_defect"}
        if bad:
            raise ValueError(f"unknown tolerance overrides: {sorted(bad)}")

    def window(self):
        w = self.tolerances.get("window", FAMILIES[self.family].get("window"))
        if w is None:
            return None
        lo, hi = (-math.inf if w[0] is None else float(w[0])), (math.inf if w[1] is None else float(w[1]))
        return lo, hi


# --- defect evaluators -------------------------------------------------------------

def _grid(k, params):
    return tm.grid_size(k) * int(params.get("grid_scale", 1))


def _functoriality(k, p):
    ta, tb, tc = (_parse_tau(p[n]) for n in ("tau_a", "tau_b", "tau_c"))
    n = _grid(k, p)
    a, b, c = (tm.cached_space(k, t, True, n) for t in (ta, tb, tc))
    m_ab, m_bc = tm.torus_morphism(ta, tb), tm.torus_morphism(tb, tc)
    m_ac = pc.halfform_compose(m_bc, m_ab)
    u_ab = tm.fio_unitary(a, b, m_ab.scalar).m
    u_bc = tm.fio_unitary(b, c, m_bc.scalar).m
    u_ac = tm.fio_unitary(a, c, m_ac.scalar).m
    return tm.opnorm(u_bc @ u_ab - u_ac), {"grid": n, "gram_cond": max(a.gram_cond, b.gram_cond, c.gram_cond)}


def _transport(k, p):
    path = tm.ModuliPath.polygon([_parse_tau(v) for v in p["path"]])
    n = _grid(k, p)
    taus = path.taus()
    a, b = tm.cached_space(k, taus[0], True, n), tm.cached_space(k, taus[-1], True, n)
    u = tm.fio_unitary(a, b, tm.path_morphism_scalar(path)).m
    t = tm.transport(path, k, True, n)
    return tm.opnorm(t.m - u), {"grid": n, "gram_cond": max(a.gram_cond, b.gram_cond),
                                "pre_polar_defect": t.info["unitarity_defect"], "ode_error": t.info["ode_error"]}


def _curvature(half_form):
    def run(k, p):
        n = _grid(k, p)
        r, err = tm.curvature_richardson(_parse_tau(p["center"]), _parse_tau(p["eta"]), _parse_tau(p["mu"]),
                                         float(p["eps"]), k, half_form, n)
        return tm.opnorm(r), {"grid": n, "richardson_error": err}
    return run


def _commutator(k, p):
    n = _grid(k, p)
    space = tm.cached_space(k, _parse_tau(p["tau"]), True, n)
    d = tm.commutator_defect(space, _parse_trig(p["f"]), _parse_trig(p["g"]), corrected=True)
    return d, {"grid": n, "gram_cond": space.gram_cond}


def _hamiltonian(p):
    return bm.QuadraticHamiltonian(*[float(v) for v in p["hamiltonian"]])


def _cutoff(p):
    return int(p["cutoff"]) * int(p.get("grid_scale", 1))


def _schrodinger(k, p):
    cutoff = _cutoff(p)
    d = bm.schrodinger_vs_transport(k, _hamiltonian(p), float(p["t"]), cutoff, p.get("window"))
    return d, {"cutoff": cutoff}


def _spectrum(k, p):
    cutoff = _cutoff(p)
    space = bm.fock_space(k, 0.0, cutoff)
    q = bm.qm_op(space, _hamiltonian(p), corrected=bool(p["corrected"])).m
    w = space.window
    ev = np.sort(np.linalg.eigvalsh(k * q))[:w]
    offset = 0.5 if p["corrected"] else 1.0
    return float(np.abs(ev - (np.arange(w) + offset)).max()), {"cutoff": cutoff, "window": w}


EVALUATORS = {
    "functoriality": _functoriality,
    "transport_vs_fio": _transport,
    "curvature_decay": _curvature(True),
    "curvature_nodecay": _curvature(False),
    "commutator_decay": _commutator,
    "schrodinger": _schrodinger,
    "spectrum": _spectrum,
}


def evaluate(family: str, k: int, params: dict):
    try:
        defect, diag = EVALUATORS[family](int(k), params)
    except Exception as exc:  # annotate and re-raise with the failing k
        raise ModelError(f"{family} failed at k={k}: {exc}") from exc
    return float(defect), diag


def run(experiment: Experiment, jobs: int = 1) -> list[dict]:
    """Table of rows {k, defect, **diagnostics} in k order."""
    def one(k):
        d, diag = evaluate(experiment.family, k, experiment.params)
        return {"k": k, "defect": d, **diag}

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(one, experiment.k_list))
    else:
        rows = [one(k) for k in experiment.k_list]
    return rows


# --- fitting and verdicts ---------------------------------------------------------

@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    residual_rms: float
    slope_ci_halfwidth: float
    n_points: int
    excluded: int = 0
    exact: bool = False


def fit_rate(table, defects=None) -> RateFit:
    """OLS of log(defect) on log(k) with a 95% t-interval for the slope.

    ``table`` is a list of {k, defect} rows, or a k sequence with ``defects`` given.
    Defects below ZERO_FLOOR count as exact zeros and are excluded; if every point
    is excluded the fit is the sentinel ``exact``.
    """
    if defects is None:
        ks = np.array([r["k"] for r in table], dtype=float)
        ds = np.array([r["defect"] for r in table], dtype=float)
    else:
        ks, ds = np.asarray(table, dtype=float), np.asarray(defects, dtype=float)
    if not np.all(np.isfinite(ds)):
        raise ValueError("defects must be finite")
    keep = ds >= ZERO_FLOOR
    excluded = int(np.sum(~keep))
    if excluded == len(ds):
        return RateFit(-math.inf, -math.inf, 0.0, 0.0, 0, excluded, exact=True)
    if excluded:
        warnings.warn(f"{excluded} defect(s) below {ZERO_FLOOR:g} excluded from the fit", stacklevel=2)
    x, y = np.log(ks[keep]), np.log(ds[keep])
    n = len(x)
    if n < 4:
        raise InsufficientData(f"need at least 4 usable points, have {n}")
    xm = x.mean()
    sxx = np.sum((x - xm) ** 2)
    slope = float(np.sum((x - xm) * (y - y.mean())) / sxx)
    intercept = float(y.mean() - slope * xm)
    resid = y - (intercept + slope * x)
    rms = float(np.sqrt(np.mean(resid**2)))
    se = math.sqrt(np.sum(resid**2) / (n - 2) / sxx)
    half = float(stats.t.ppf(0.975, n - 2) * se)
    return RateFit(slope, intercept, rms, half, n, excluded)


def verdict(fit: RateFit, window, max_rms: float = MAX_RMS) -> dict:
    """Pass iff the slope lies in the window and the log residual rms is small.

    An exact fit passes only when the window is unbounded below.
    """
    lo, hi = window
    if fit.exact:
        ok = lo == -math.inf
        reason = "exact (all defects below floor)" + ("" if ok else "; window requires a finite decay rate")
    else:
        in_window = lo <= fit.slope <= hi
        ok = in_window and fit.residual_rms <= max_rms
        reason = "ok" if ok else ("slope outside window" if not in_window else "residual rms too large")
    return {"pass": bool(ok), "exact": fit.exact, "slope": fit.slope, "intercept": fit.intercept,
            "residual_rms": fit.residual_rms, "slope_ci_halfwidth": fit.slope_ci_halfwidth,
            "n_points": fit.n_points, "excluded": fit.excluded,
            "window": [lo, hi], "max_rms": max_rms, "reason": reason}


def judge(experiment: Experiment, table: list[dict]) -> dict:
    """Verdict record for one experiment's table."""
    spec = FAMILIES[experiment.family]
    tol = experiment.tolerances
    defects = [r["defect"] for r in table]
    record = {"id": experiment.id, "family": experiment.family, "k_list": list(experiment.k_list)}
    if experiment.family == "spectrum":
        limit = float(tol.get("max_defect", spec["max_defect"]))
        worst = max(defects)
        record.update({"pass": worst <= limit, "exact": False, "max_defect": worst,
                       "max_allowed": limit, "reason": "ok" if worst <= limit else "eigenvalue offset"})
        return record
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        fit = fit_rate(table)
    v = verdict(fit, experiment.window(), float(tol.get("max_rms", MAX_RMS)))
    record.update(v)
    if "min_defect" in spec or "min_defect" in tol:
        floor = float(tol.get("min_defect", spec.get("min_defect")))
        record["min_defect"] = min(defects)
        if min(defects) < floor:
            record["pass"] = False
            record["reason"] = f"defect fell below {floor:g}"
    return record


def refinement_changes(experiment: Experiment, jobs: int = 1) -> list[float]:
    """Relative change of each defect when the grid (or cutoff) is doubled."""
    base = run(experiment, jobs)
    params = dict(experiment.params)
    params["grid_scale"] = 2 * int(params.get("grid_scale", 1))
    fine = run(Experiment(experiment.id, experiment.family, params, experiment.k_list, experiment.tolerances), jobs)
    return [abs(f["defect"] - b["defect"]) / abs(b["defect"]) if b["defect"] else abs(f["defect"])
            for b, f in zip(base, fine)]
