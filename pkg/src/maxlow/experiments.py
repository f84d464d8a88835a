"""Configuration-driven verification experiments with CSV/JSON artifacts.

Each runner consumes an :class:`ExperimentConfig`, produces a
:class:`SweepResult` with rows, fitted slopes and pass/fail flags computed
from the stated tolerances only, and can write its artifacts (versioned CSV
plus a JSON summary) atomically.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import statics as mst
from . import operator as mop
from .errors import ConfigError
from .greens import HelmholtzKernel
from .grid import GridDomain, Kind, MaterialLaw, StaggeredField
from .sources import generic_sources, random_bump_field, solenoidal_sources
from .wholespace import (
    box_points,
    fit_loglog_slope,
    limiting_absorption_sweep,
    points_norm,
    radiation_sweep,
    solve_whole_space,
    static_limit_solution,
)

__all__ = [
    "ExperimentConfig",
    "SweepResult",
    "run_whole_space_solve",
    "run_lowfreq_convergence",
    "run_limabs",
    "run_neumann_check",
    "run_spectrum",
    "run_static",
    "run_verify_b1",
    "run_estimate_probe",
    "run_experiment",
    "write_csv",
    "write_json",
]

EXPERIMENTS = (
    "whole-space-solve",
    "lowfreq-sweep",
    "limabs-sweep",
    "neumann-check",
    "spectrum",
    "static-solve",
    "verify-b1",
    "estimate-probe",
)

_DEFAULTS: dict = {
    "whole-space-solve": {
        "cells": 16, "spacing": 0.25, "omega": 1.0, "radius": 1.0,
        "eps0": 1.0, "mu0": 1.0, "residual_tol": 0.5, "dump_fields": False,
    },
    "lowfreq-sweep": {
        "cells": 16, "spacing": 0.25, "radius": 1.0, "eps0": 1.0, "mu0": 1.0,
        "omegas": [1.0, 0.5, 0.25, 0.125, 0.0625],
        "box_side": 4.0, "box_points": 9, "weight_exponent": -1.0,
    },
    "limabs-sweep": {
        "cells": 12, "spacing": 0.3, "omega": 1.0, "radius": 0.9,
        "eps0": 1.0, "mu0": 1.0,
        "deltas": [1e-1, 1e-2, 1e-3, 1e-4],
        "box_side": 3.0, "box_points": 8, "weight_exponent": -1.0,
    },
    "neumann-check": {
        "cells": 10, "spacing": 0.5, "eps0": 1.0, "mu0": 1.0,
        "omega_fractions": [0.05, 0.1, 0.2, 0.4], "tol": 1e-8,
    },
    "spectrum": {
        "cells": 10, "spacing": 0.5, "geometry": "cavity",
        "eps0": 1.0, "mu0": 1.0, "expected_dims": None,
    },
    "static-solve": {
        "cells": 10, "spacing": 0.5, "eps0": 1.0, "mu0": 1.0, "tol": 1e-8,
    },
    "verify-b1": {
        "cells": 10, "spacing": 0.5, "geometry": "cavity",
        "eps0": 1.0, "mu0": 1.0, "side": 1,
    },
    "estimate-probe": {
        "cells": 16, "spacing": 0.25, "radius": 1.0, "eps0": 1.0, "mu0": 1.0,
        "omega_decades": 3, "omega_points": 7, "band_factor": 2.0,
        "eval_cells": 20, "eval_spacing": 0.4, "poincare_probes": 50,
        "weight_exponent": -1.0,
    },
}


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int
    out_dir: Optional[str] = None
    threads: Optional[int] = None
    params: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if self.seed is None:
            raise ConfigError("a seed is mandatory")
        self.seed = int(self.seed)
        merged = dict(_DEFAULTS[self.experiment])
        merged.update(self.params)
        self.params = merged
        for key, val in self.params.items():
            if key.startswith("tol") or key.endswith("tol"):
                if not val > 0:
                    raise ConfigError(f"tolerance {key} must be positive")
        for key in ("omegas", "deltas", "omega_fractions"):
            vals = self.params.get(key)
            if vals is not None and any(v == 0 for v in vals):
                raise ConfigError(f"{key} entries must be nonzero")
            if vals is not None and len(vals) == 0:
                raise ConfigError(f"{key} must be nonempty")

    @classmethod
    def from_json(cls, path: str, **overrides) -> "ExperimentConfig":
        with open(path) as fh:
            doc = json.load(fh)
        known = {"experiment", "seed", "out_dir", "threads"}
        kw = {k: doc[k] for k in known if k in doc}
        params = doc.get("params", {k: v for k, v in doc.items() if k not in known})
        kw.setdefault("params", params)
        for k, v in overrides.items():
            if v is not None:
                kw[k] = v
        if "seed" not in kw:
            raise ConfigError("a seed is mandatory")
        return cls(**kw)


@dataclass
class SweepResult:
    name: str
    rows: list
    columns: list
    slopes: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.flags.values())


# -------------------------------------------------------------- file output


def _atomic_write(path: str, text: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(os.path.abspath(path)))
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(result: SweepResult, path: str) -> None:
    lines = ["# maxlow-csv v1", ",".join(result.columns)]
    for row in result.rows:
        lines.append(",".join(_fmt(row.get(c)) for c in result.columns))
    _atomic_write(path, "\n".join(lines) + "\n")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, complex):
        return f"{v.real:.17g}{v.imag:+.17g}j"
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_json(doc: dict, path: str) -> None:
    _atomic_write(path, json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n")


# ----------------------------------------------------------- domain helpers


def _source_grid(p: dict) -> GridDomain:
    n = int(p["cells"])
    return GridDomain.build((n, n, n), float(p["spacing"]), label=2)


def _bounded_domain(p: dict) -> GridDomain:
    geo = p.get("geometry", "cavity")
    n = int(p["cells"])
    h = float(p["spacing"])
    if geo == "solid":
        return GridDomain.build((n, n, n), h, label=1)
    if geo == "cavity":
        obst = np.zeros((n, n, n), dtype=bool)
        lo = max(1, n // 2 - 1)
        hi = min(n - 1, n // 2 + 1)
        obst[lo:hi, lo:hi, lo:hi] = True
        return GridDomain.build((n, n, n), h, obstacle=obst, label=1)
    if geo == "ring":
        nz = max(3, n // 3)
        act = np.ones((n, n, nz), dtype=bool)
        lo, hi = n // 3, n - n // 3
        act[lo:hi, lo:hi, :] = False
        return GridDomain.build((n, n, nz), h, obstacle=~act, label=1)
    raise ConfigError(f"unknown geometry {geo!r}")


def _law(p: dict) -> MaterialLaw:
    return MaterialLaw(eps0=float(p["eps0"]), mu0=float(p["mu0"]))


def _strictly_decreasing(vals) -> bool:
    return all(b < a for a, b in zip(vals, vals[1:]))


# ------------------------------------------------------------------ runners


def run_whole_space_solve(cfg: ExperimentConfig) -> SweepResult:
    """Single whole-space solve with an interior-residual diagnostic."""
    from .wholespace import maxwell_residual, solve_on_grid

    p = cfg.params
    grid = _source_grid(p)
    F, G = solenoidal_sources(grid, cfg.seed, radius=p["radius"])
    kernel = HelmholtzKernel(p["omega"], p["eps0"], p["mu0"])
    E, H = solve_on_grid(F, G, kernel, grid)
    res = maxwell_residual(E, H, F, G, kernel)
    rows = [{"omega": p["omega"], "residual": res}]
    flags = {"residual_ok": bool(res < p["residual_tol"])}
    result = SweepResult("whole-space-solve", rows, ["omega", "residual"],
                         flags=flags, summary={"cells": p["cells"]})
    if p.get("dump_fields") and cfg.out_dir:
        from .sfld import write_sfld
        write_sfld(os.path.join(cfg.out_dir, "E.sfld"), E)
        write_sfld(os.path.join(cfg.out_dir, "H.sfld"), H)
    return result


def _lowfreq_rows(cfg: ExperimentConfig):
    p = cfg.params
    grid = _source_grid(p)
    F, G = solenoidal_sources(grid, cfg.seed, radius=p["radius"])
    pts, vol = box_points((0.0, 0.0, 0.0), p["box_side"] * p["radius"],
                          int(p["box_points"]))
    from .wholespace import IsotropicBlockConstants
    zero_f = StaggeredField.zeros(grid, Kind.NODE)
    const = IsotropicBlockConstants(p["eps0"], p["mu0"])
    E0 = static_limit_solution(G, zero_f, const, pts)
    t = p["weight_exponent"]
    rows = []
    for om in p["omegas"]:
        kernel = HelmholtzKernel(om, p["eps0"], p["mu0"])
        sol = solve_whole_space(F, G, kernel, pts)
        diff = points_norm(sol.E - E0, pts, t, vol)
        rows.append({"omega": om, "difference": diff})
    return rows


def run_lowfreq_convergence(cfg: ExperimentConfig) -> SweepResult:
    """Distance of the radiating solution to its static limit versus omega."""
    rows = sorted(_lowfreq_rows(cfg), key=lambda r: -r["omega"])
    diffs = [r["difference"] for r in rows]
    oms = [r["omega"] for r in rows]
    slope = fit_loglog_slope(oms, diffs) if len(rows) > 1 else 0.0
    flags = {
        "strictly_decreasing": _strictly_decreasing(diffs) or len(rows) == 1,
        "final_below_tenth": diffs[-1] < 0.1 * diffs[0] or len(rows) == 1,
    }
    return SweepResult("lowfreq-sweep", rows, ["omega", "difference"],
                       slopes={"loglog": slope}, flags=flags)


def run_limabs(cfg: ExperimentConfig) -> SweepResult:
    """Limiting-absorption sweep: omega + i*delta solutions versus delta."""
    p = cfg.params
    grid = _source_grid(p)
    F, G = solenoidal_sources(grid, cfg.seed, radius=p["radius"])
    pts, vol = box_points((0.0, 0.0, 0.0), p["box_side"] * p["radius"],
                          int(p["box_points"]))
    rows_raw, slope = limiting_absorption_sweep(
        F, G, p["omega"], p["deltas"], pts, vol,
        t=p["weight_exponent"], eps0=p["eps0"], mu0=p["mu0"])
    rows = [{"delta": d, "difference": v} for d, v in rows_raw]
    diffs = [r["difference"] for r in rows]
    flags = {
        "strictly_decreasing": _strictly_decreasing(diffs),
        "final_below_tenth": diffs[-1] < 0.1 * diffs[0],
    }
    return SweepResult("limabs-sweep", rows, ["delta", "difference"],
                       slopes={"loglog": slope}, flags=flags)


def run_neumann_check(cfg: ExperimentConfig) -> SweepResult:
    """Neumann-series solve versus the direct resolvent inside the gap."""
    p = cfg.params
    domain = _bounded_domain({**p, "geometry": p.get("geometry", "cavity")})
    law = _law(p)
    op = mop.assemble(domain, law)
    sd = op.spectral()
    rng = np.random.default_rng(cfg.seed)
    F = StaggeredField.zeros(domain, Kind.EDGE)
    G = StaggeredField.zeros(domain, Kind.FACE)
    me = domain.free_mask(Kind.EDGE, 1)
    mf = domain.active_mask(Kind.FACE)
    F.values[me] = rng.standard_normal(me.sum()) + 1j * rng.standard_normal(me.sum())
    G.values[mf] = rng.standard_normal(mf.sum()) + 1j * rng.standard_normal(mf.sum())
    rows = []
    for frac in p["omega_fractions"]:
        om = frac * sd.sigma_min
        if abs(om) >= sd.sigma_min:
            raise ConfigError("frequency fraction must stay below 1")
        (En, Hn), diag = mop.neumann_series(op, om, F, G)
        Er, Hr = mop.resolvent_solve(op, om, F, G)
        num = np.linalg.norm(op.pair_to_vec(En - Er, Hn - Hr))
        den = np.linalg.norm(op.pair_to_vec(Er, Hr))
        tn = diag["term_norms"]
        ratio = tn[-2] and tn[-1] / tn[-2] if len(tn) > 1 else 0.0
        rows.append({
            "omega": om, "relative_error": num / den,
            "term_ratio": ratio, "predicted_ratio": diag["predicted_ratio"],
            "terms_used": diag["terms_used"],
        })
    near = min(rows, key=lambda r: abs(r["omega"] - 0.1 * sd.sigma_min))
    flags = {
        "match_at_tenth": near["relative_error"] <= p["tol"],
        "ratio_within_20pct": all(
            abs(r["term_ratio"] - r["predicted_ratio"]) <= 0.2 * r["predicted_ratio"]
            for r in rows if r["terms_used"] > 2
        ),
    }
    cols = ["omega", "relative_error", "term_ratio", "predicted_ratio", "terms_used"]
    return SweepResult("neumann-check", rows, cols, flags=flags,
                       summary={"sigma_min": sd.sigma_min})


def run_spectrum(cfg: ExperimentConfig) -> SweepResult:
    """Harmonic-field dimensions and spectral-gap report for one geometry."""
    p = cfg.params
    domain = _bounded_domain(p)
    law = _law(p)
    op = mop.assemble(domain, law)
    sd = op.spectral()
    hb_e = mop.kernel_basis(op, side="electric")
    hb_m = mop.kernel_basis(op, side="magnetic")
    rows = [{
        "geometry": p["geometry"], "electric_dim": hb_e.dimension,
        "magnetic_dim": hb_m.dimension, "sigma_min": sd.sigma_min,
        "gap_ok": sd.gap_ok and hb_e.gap_ok and hb_m.gap_ok,
    }]
    flags = {"gap_ok": rows[0]["gap_ok"]}
    expected = p.get("expected_dims")
    if expected is not None:
        flags["dims_expected"] = (
            hb_e.dimension == expected[0] and hb_m.dimension == expected[1]
        )
    cols = ["geometry", "electric_dim", "magnetic_dim", "sigma_min", "gap_ok"]
    return SweepResult("spectrum", rows, cols, flags=flags)


def run_static(cfg: ExperimentConfig) -> SweepResult:
    """Manufactured electro-static round trip on the cavity domain."""
    p = cfg.params
    domain = _bounded_domain({**p, "geometry": p.get("geometry", "cavity")})
    law = _law(p)
    op = mop.assemble(domain, law)
    B1 = mst.build_B(domain, 1, law)
    rng = np.random.default_rng(cfg.seed)
    we = law.dof_weights(domain, Kind.EDGE, "eps")
    Estar = StaggeredField.zeros(domain, Kind.EDGE)
    m = domain.free_mask(Kind.EDGE, 1)
    Estar.values[m] = rng.standard_normal(m.sum()) + 1j * rng.standard_normal(m.sum())
    G = StaggeredField.zeros(domain, Kind.FACE)
    G.values[:] = domain.operator("curl", 1) @ Estar.values
    f = StaggeredField.zeros(domain, Kind.NODE)
    f.values[:] = domain.operator("div_dual", 1) @ (we * Estar.values)
    zeta = np.array([mst._weighted_ip(domain, we, Estar.values, Bl.values)
                     for Bl in B1.elements])
    E = mst.solve_static(mst.StaticProblemData(G, f, zeta), op, B1)
    err = np.linalg.norm(E.values - Estar.values) / np.linalg.norm(Estar.values)
    zero = mst.solve_static(
        mst.StaticProblemData(StaggeredField.zeros(domain, Kind.FACE),
                              StaggeredField.zeros(domain, Kind.NODE),
                              np.zeros(B1.d, complex)), op, B1)
    moments = np.array([mst._weighted_ip(domain, we, E.values, Bl.values)
                        for Bl in B1.elements])
    mom_err = float(np.max(np.abs(moments - zeta))) if B1.d else 0.0
    rows = [{"round_trip_error": err, "zero_data_max": float(np.abs(zero.values).max()),
             "moment_error": mom_err, "basis_dim": B1.d}]
    flags = {
        "round_trip": err <= p["tol"],
        "zero_is_zero": rows[0]["zero_data_max"] == 0.0,
        "moments": mom_err <= p["tol"],
    }
    cols = ["round_trip_error", "zero_data_max", "moment_error", "basis_dim"]
    return SweepResult("static-solve", rows, cols, flags=flags)


def run_verify_b1(cfg: ExperimentConfig) -> SweepResult:
    """Collar-basis construction rank checks (Steps 1-3)."""
    p = cfg.params
    domain = _bounded_domain(p)
    law = _law(p)
    report = mst.verify_steps(domain, law, side=int(p["side"]))
    rows = [{
        "step1_min_sv": report["step1_min_sv"],
        "step2_min_sv": report["step2_min_sv"],
        "step3_min_sv": report["step3_min_sv"],
        "basis_dim": report["dims"]["basis"],
        "domain_dim": report["dims"]["domain_harmonics"],
    }]
    flags = {
        "step1": report["step1_injective"],
        "step2": report["step2_injective"],
        "step3": report["step3_nondegenerate"],
        "dims_equal": report["dims_equal"],
    }
    cols = list(rows[0].keys())
    return SweepResult("verify-b1", rows, cols, flags=flags, summary=report["dims"])


def run_estimate_probe(cfg: ExperimentConfig) -> SweepResult:
    """A-priori ratio band over omega plus a Poincare-type gradient probe."""
    p = cfg.params
    grid = _source_grid(p)
    F, G = generic_sources(grid, cfg.seed, radius=p["radius"])
    ne = int(p["eval_cells"])
    he = float(p["eval_spacing"])
    eval_grid = GridDomain.build((ne, ne, ne), he, label=2)
    t = p["weight_exponent"]
    oms = np.logspace(-p["omega_decades"], 0, int(p["omega_points"]))
    from .wholespace import apriori_ratio
    rows = []
    for om in oms:
        ratio = apriori_ratio(F, G, float(om), eval_grid, t=t,
                              eps0=p["eps0"], mu0=p["mu0"])
        rows.append({"omega": float(om), "ratio": ratio})
    ratios = [r["ratio"] for r in rows]
    band = max(ratios) / min(ratios)
    # scalar Poincare probe: weighted norm of gradients of seeded potentials
    rng = np.random.default_rng(cfg.seed + 1)
    from .grid import discrete_grad, field_norm
    worst = 0.0
    for _ in range(int(p["poincare_probes"])):
        w = random_bump_field(grid, Kind.NODE, int(rng.integers(1 << 31)),
                              radius=p["radius"] * 1.5)
        gw = discrete_grad(w, None)
        num = field_norm(w, t=-1.0)
        den = field_norm(gw, t=0.0)
        if den > 0:
            worst = max(worst, num / den)
    flags = {"band_within_factor": band <= p["band_factor"],
             "poincare_finite": np.isfinite(worst)}
    return SweepResult("estimate-probe", rows, ["omega", "ratio"],
                       slopes={}, flags=flags,
                       summary={"band": band, "poincare_max_ratio": worst})


_RUNNERS = {
    "whole-space-solve": run_whole_space_solve,
    "lowfreq-sweep": run_lowfreq_convergence,
    "limabs-sweep": run_limabs,
    "neumann-check": run_neumann_check,
    "spectrum": run_spectrum,
    "static-solve": run_static,
    "verify-b1": run_verify_b1,
    "estimate-probe": run_estimate_probe,
}


def run_experiment(cfg: ExperimentConfig) -> SweepResult:
    """Dispatch a config to its runner and write artifacts if requested."""
    result = _RUNNERS[cfg.experiment](cfg)
    if cfg.out_dir:
        write_csv(result, os.path.join(cfg.out_dir, f"{result.name}.csv"))
        write_json(
            {
                "experiment": cfg.experiment,
                "seed": cfg.seed,
                "params": cfg.params,
                "flags": result.flags,
                "slopes": result.slopes,
                "summary": result.summary,
                "passed": result.passed,
            },
            os.path.join(cfg.out_dir, f"{result.name}.summary.json"),
        )
    return result
