"""Experiment drivers writing CSV tables and a JSON run manifest."""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import os
import re
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .. import __version__
from ..exceptions import MdrkError
from ..integrate import LANDING_TOL, MAX_LANDING_ITERS, integrate
from ..problems import get_problem, problem_names
from ..relaxation import RelaxationConfig
from ..stability import ScanConfig, a_alpha_angle
from ..stepping import ImplicitSolveConfig
from ..tableaux import available, registry_get
from .analysis import ROUNDOFF_FLOOR, fit_order

__all__ = [
    "EXPERIMENTS",
    "ExperimentConfig",
    "run",
    "run_convergence",
    "run_entropy",
    "run_error_growth",
    "run_stability_angles",
    "split_names",
]

log = logging.getLogger(__name__)

EXPERIMENTS = ("convergence", "error-growth", "entropy-evolution", "stability-angles")
CSV_SCHEMA_VERSION = 1


def split_names(text):
    """Split a comma-separated list, keeping commas inside parentheses (``CT(4,2)``)."""
    return [p.strip() for p in re.split(r",(?![^()]*\))", text) if p.strip()]


@dataclass
class ExperimentConfig:
    experiment: str
    problem: str = "oscillator"
    problem_params: dict = field(default_factory=dict)
    schemes: list = field(default_factory=lambda: ["CT(4,2)"])
    modes: list = field(default_factory=lambda: ["off", "relaxation"])
    dts: Optional[list] = None          # convergence
    dt: Optional[float] = None          # time-series runs; problem default if unset
    T: Optional[float] = None           # problem default if unset
    output_dir: str = "results"
    seed: int = 0
    relaxation: dict = field(default_factory=dict)   # RelaxationConfig fields except mode
    solver: dict = field(default_factory=dict)       # ImplicitSolveConfig fields
    gammas: Optional[list] = None       # stability-angles
    scan: dict = field(default_factory=dict)         # ScanConfig fields
    fit_floor: float = ROUNDOFF_FLOOR

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"experiment must be one of {EXPERIMENTS}, got {self.experiment!r}")
        if isinstance(self.schemes, str):
            self.schemes = split_names(self.schemes)
        if isinstance(self.modes, str):
            self.modes = split_names(self.modes)
        if not self.schemes:
            raise ValueError("at least one scheme is required")
        if self.dts is not None:
            self.dts = [float(v) for v in self.dts]
            if not self.dts or any(v <= 0 for v in self.dts):
                raise ValueError("dts must be a non-empty list of positive values")
        if self.dt is not None and self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.T is not None and self.T < 0:
            raise ValueError("T must be non-negative")
        if self.experiment == "convergence" and not self.dts:
            raise ValueError("convergence needs a list of step sizes (dts)")
        for mode in self.modes:
            RelaxationConfig(mode=mode)
        if self.problem not in problem_names():
            raise ValueError(f"unknown problem {self.problem!r}; available: {', '.join(problem_names())}")
        for scheme in self.schemes:
            if scheme not in available():
                raise ValueError(f"unknown scheme {scheme!r}; available: {', '.join(available())}")

    def relaxation_config(self, mode):
        return RelaxationConfig(mode=mode, **{k: (tuple(v) if isinstance(v, list) else v)
                                              for k, v in self.relaxation.items()})

    def solver_config(self):
        return ImplicitSolveConfig(**self.solver)

    def to_dict(self):
        return dataclasses.asdict(self)

    def digest(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _slug(text):
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", text).strip("_")


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _filename(cfg, scheme, mode):
    return f"{_slug(cfg.experiment)}__{_slug(cfg.problem)}__{_slug(scheme)}__{_slug(mode)}.csv"


def _problem(cfg):
    return get_problem(cfg.problem, **cfg.problem_params)


def _final_time(cfg, prob):
    return float(cfg.T if cfg.T is not None else prob.t_final)


def _write_manifest(cfg, files, summary):
    solver = dataclasses.asdict(cfg.solver_config())
    tolerances = {
        "relaxation": {m: dataclasses.asdict(cfg.relaxation_config(m)) for m in cfg.modes},
        "implicit_solver": solver,
        "landing_tol": LANDING_TOL,
        "max_landing_iters": MAX_LANDING_ITERS,
        "fit_floor": cfg.fit_floor,
    }
    manifest = {
        "library": "mdrelax",
        "version": __version__,
        "csv_schema": CSV_SCHEMA_VERSION,
        "experiment": cfg.experiment,
        "config": cfg.to_dict(),
        "config_sha256": cfg.digest(),
        "tolerances": tolerances,
        "files": [os.path.basename(f) for f in files],
        "summary": summary,
    }
    path = os.path.join(cfg.output_dir, f"manifest__{_slug(cfg.experiment)}__{_slug(cfg.problem)}.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    return path


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"not serialisable: {type(obj).__name__}")


def run_convergence(cfg):
    """Final-time errors over ``cfg.dts``; one CSV per (scheme, mode)."""
    prob = _problem(cfg)
    if not prob.has_solution:
        raise ValueError(f"{prob.name} has no solution to measure errors against")
    T = _final_time(cfg, prob)
    os.makedirs(cfg.output_dir, exist_ok=True)
    files, summary = [], []
    for scheme in cfg.schemes:
        tab = registry_get(scheme)
        for mode in cfg.modes:
            rcfg, scfg = cfg.relaxation_config(mode), cfg.solver_config()
            results = []
            for dt in cfg.dts:
                try:
                    tr = integrate(prob, tab, dt, T, rcfg, scfg, store=False)
                    err = prob.norm(tr.final - prob.solution(tr.t_final))
                    results.append((dt, tr.t_final, err, "ok"))
                except MdrkError as exc:
                    log.info("%s %s dt=%g failed: %s", scheme, mode, dt, exc)
                    results.append((dt, float("nan"), float("nan"), f"failed:{type(exc).__name__}"))
            order = fit_order([r[0] for r in results], [r[2] for r in results], cfg.fit_floor)
            rows = [(scheme, mode, dt, tf, err, order, status) for dt, tf, err, status in results]
            path = os.path.join(cfg.output_dir, _filename(cfg, scheme, mode))
            _write_csv(path, ["scheme", "mode", "dt", "t_final", "final_error_l2", "fitted_order", "status"], rows)
            files.append(path)
            summary.append({"scheme": scheme, "mode": mode, "fitted_order": order,
                            "errors": [r[2] for r in results]})
    manifest = _write_manifest(cfg, files, summary)
    return {"files": files, "manifest": manifest, "summary": summary}


def _series(cfg, with_error):
    prob = _problem(cfg)
    if with_error and not prob.has_solution:
        raise ValueError(f"{prob.name} has no solution to measure errors against")
    T = _final_time(cfg, prob)
    dt = float(cfg.dt if cfg.dt is not None else prob.dt)
    os.makedirs(cfg.output_dir, exist_ok=True)
    files, summary = [], []
    for scheme in cfg.schemes:
        tab = registry_get(scheme)
        for mode in cfg.modes:
            status = "ok"
            try:
                tr = integrate(prob, tab, dt, T, cfg.relaxation_config(mode), cfg.solver_config())
            except MdrkError as exc:
                status = f"failed:{type(exc).__name__}"
                log.info("%s %s failed: %s", scheme, mode, exc)
                tr = None
            path = os.path.join(cfg.output_dir, _filename(cfg, scheme, mode))
            if tr is None:
                header = ["scheme", "mode", "t", "status"]
                _write_csv(path, header, [(scheme, mode, float("nan"), status)])
                files.append(path)
                summary.append({"scheme": scheme, "mode": mode, "status": status})
                continue
            eta0 = tr.eta[0]
            if with_error:
                err = np.array([prob.norm(u - prob.solution(t)) for t, u in zip(tr.t, tr.u)])
                header = ["scheme", "mode", "t", "error_l2", "eta", "gamma"]
                rows = [(scheme, mode, t, e, eta, g) for t, e, eta, g in zip(tr.t, err, tr.eta, tr.gamma)]
            else:
                header = ["scheme", "mode", "t", "eta", "eta_minus_eta0", "gamma"]
                rows = [(scheme, mode, t, eta, eta - eta0, g) for t, eta, g in zip(tr.t, tr.eta, tr.gamma)]
            _write_csv(path, header, rows)
            files.append(path)
            entry = {"scheme": scheme, "mode": mode, "status": status, "t_final": tr.t_final,
                     "max_entropy_deviation": float(np.max(np.abs(tr.eta - eta0)))}
            if with_error:
                entry["final_error"] = float(err[-1])
            summary.append(entry)
    manifest = _write_manifest(cfg, files, summary)
    return {"files": files, "manifest": manifest, "summary": summary}


def run_error_growth(cfg):
    """Error, entropy and gamma at every accepted step (relaxed time coordinate)."""
    return _series(cfg, with_error=True)


def run_entropy(cfg):
    """Entropy history at every accepted step; needs no reference solution."""
    return _series(cfg, with_error=False)


def default_gammas():
    return [round(1.0 + 0.005 * i, 10) for i in range(41)]


def run_stability_angles(cfg):
    """A(alpha) angle of the relaxed update over a grid of fixed gammas."""
    gammas = cfg.gammas if cfg.gammas is not None else default_gammas()
    scan = ScanConfig(**cfg.scan)
    os.makedirs(cfg.output_dir, exist_ok=True)
    files, summary = [], []
    for scheme in cfg.schemes:
        tab = registry_get(scheme)
        rows, alphas = [], []
        for g in gammas:
            rep = a_alpha_angle(tab, float(g), scan)
            rows.append((scheme, float(g), rep.alpha_deg))
            alphas.append(rep.alpha_deg)
        path = os.path.join(cfg.output_dir, _filename(cfg, scheme, "relaxed"))
        _write_csv(path, ["scheme", "gamma", "alpha_deg"], rows)
        files.append(path)
        summary.append({"scheme": scheme, "gammas": [float(g) for g in gammas], "alpha_deg": alphas})
    manifest = _write_manifest(cfg, files, summary)
    return {"files": files, "manifest": manifest, "summary": summary}


_RUNNERS = {
    "convergence": run_convergence,
    "error-growth": run_error_growth,
    "entropy-evolution": run_entropy,
    "stability-angles": run_stability_angles,
}


def run(cfg):
    return _RUNNERS[cfg.experiment](cfg)
