"""Configuration, presets, experiment runners and the command-line entry point.

Config files are flat ``section.key = value`` lines; ``#`` starts a comment.
Lists are comma separated or written ``start:stop:count`` (inclusive linspace).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, replace

import numpy as np

from . import __version__
from .correlations import correlation_trace
from .gate_analysis import (
    SQRT_SWAP,
    GateSettings,
    averaged_fidelity,
    fidelity_map,
    hamiltonian_table,
    process_overlap,
    reconstruct_gate,
    sweep_scattering,
    universality_suite,
)
from .grid_oracle import GridStabilityError, Grid2D, oracle_run, write_frame
from .physical_model import (
    BOHR_RADIUS,
    MASS_RB85,
    MASS_RB87,
    DomainError,
    InvalidParameterError,
    PhysicalParams,
    derive_dimensionless,
)
from .propagator import IntegrationError, population_trace, propagate
from .sp_basis import QuadratureGrid, ResolutionError, build_orthonormal_basis, dump_basis_csv
from .tp_basis import computational_embedding, enumerate_basis

log = logging.getLogger(__name__)

KINDS = ("gate", "sweep-scattering", "fidelity-map", "entanglement-trace", "snapshots", "verify")
VERBS = {
    "simulate": "gate",
    "sweep": "sweep-scattering",
    "map": "fidelity-map",
    "correlations": "entanglement-trace",
    "snapshots": "snapshots",
    "verify": "verify",
}
SPECIES_MASS = {"rb87": MASS_RB87, "rb85": MASS_RB85}


class ConfigError(ValueError):
    """Syntax error, unknown key or out-of-range value in a run configuration."""


@dataclass(frozen=True)
class RunConfig:
    kind: str = "gate"
    omega_x: float = 1.25e4
    omega_p: float = 7.9e6
    species: str = "rb87"
    a_t_bohr: float = 106.0
    a_max: float = 5.0
    a_min: float = 1.99
    t_r: float = 70.0
    t_i: float = 69.0
    n_sp: int = 8
    tol: float = 1e-9
    couplings: bool = True
    knots: int = 801
    samples: int = 400
    grid_points: int = 256
    grid_dt: float = 2e-3
    grid_half_width: float = 0.0  # 0 selects a_max + 6
    grid_sigma: float = -1.0  # contact width; negative selects 2 h, 0 a point contact
    sweep_a_t_bohr: tuple = tuple(np.linspace(0.0, 127.2, 25).round(10))
    map_t_r: tuple = tuple(np.linspace(40.0, 100.0, 25).round(10))
    map_a_min: tuple = tuple(np.linspace(1.69, 2.29, 25).round(10))
    map_t_i: float = 69.0
    snapshot_count: int = 7
    snapshot_labels: tuple = ("00", "01", "11")
    out: str = "out"
    workers: int = 1
    dump_basis: bool = False

    @property
    def mass(self) -> float:
        return SPECIES_MASS[self.species]

    def physical_params(self) -> PhysicalParams:
        return PhysicalParams(
            self.omega_x, self.omega_p, self.mass, self.a_t_bohr * BOHR_RADIUS,
            self.a_max, self.a_min, self.t_r, self.t_i,
        )

    def gate_settings(self) -> GateSettings:
        return GateSettings(self.n_sp, self.tol, self.couplings, self.knots, self.samples)

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}


# config key -> RunConfig field
KEYS = {
    "run.kind": "kind", "run.out": "out", "run.workers": "workers",
    "run.dump_basis": "dump_basis",
    "physics.omega_x": "omega_x", "physics.omega_p": "omega_p",
    "physics.species": "species", "physics.a_t_bohr": "a_t_bohr",
    "trajectory.a_max": "a_max", "trajectory.a_min": "a_min",
    "trajectory.t_r": "t_r", "trajectory.t_i": "t_i",
    "basis.n_sp": "n_sp",
    "integrator.tol": "tol", "integrator.couplings": "couplings",
    "integrator.knots": "knots", "integrator.samples": "samples",
    "grid.points": "grid_points", "grid.dt": "grid_dt", "grid.half_width": "grid_half_width",
    "grid.sigma": "grid_sigma",
    "sweep.a_t_bohr": "sweep_a_t_bohr",
    "map.t_r": "map_t_r", "map.a_min": "map_a_min", "map.t_i": "map_t_i",
    "snapshots.count": "snapshot_count", "snapshots.labels": "snapshot_labels",
}


def _parse_list(text: str, cast):
    text = text.strip()
    if text.count(":") == 2:
        start, stop, count = text.split(":")
        return tuple(float(v) for v in np.linspace(float(start), float(stop), int(count)).round(10))
    return tuple(cast(v.strip()) for v in text.split(",") if v.strip())


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _coerce(name: str, text: str):
    default = getattr(RunConfig, name, None)
    if name == "snapshot_labels":
        return _parse_list(text, str)
    if isinstance(default, tuple):
        return _parse_list(text, float)
    if isinstance(default, bool):
        return _parse_bool(text)
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    return text.strip()


def validate(cfg: RunConfig) -> RunConfig:
    def bad(names, msg):
        raise ConfigError(f"range violation in {names}: {msg}")

    if cfg.kind not in KINDS:
        bad("run.kind", f"{cfg.kind!r} not one of {', '.join(KINDS)}")
    if cfg.species not in SPECIES_MASS:
        bad("physics.species", f"{cfg.species!r} not one of {', '.join(SPECIES_MASS)}")
    for name in ("omega_x", "omega_p", "t_r", "tol", "grid_dt"):
        if not getattr(cfg, name) > 0:
            bad(name, "must be positive")
    if not cfg.a_max >= cfg.a_min:
        bad("trajectory.a_min, trajectory.a_max", f"a_min={cfg.a_min} exceeds a_max={cfg.a_max}")
    if not cfg.a_min > 0.05:
        bad("trajectory.a_min", "must exceed the degeneracy floor 0.05")
    if cfg.t_i < 0 or cfg.map_t_i < 0:
        bad("trajectory.t_i", "must be non-negative")
    if cfg.n_sp % 2 or not 4 <= cfg.n_sp <= 12:
        bad("basis.n_sp", "must be even within 4..12")
    if cfg.knots < 4 or cfg.samples < 400:
        bad("integrator.knots, integrator.samples", "need knots >= 4 and samples >= 400")
    if cfg.grid_dt > 5e-3:
        bad("grid.dt", "must not exceed 5e-3")
    if cfg.grid_points < 16 or cfg.grid_points % 2:
        bad("grid.points", "must be even and >= 16")
    if cfg.workers < 1:
        bad("run.workers", "must be >= 1")
    if cfg.snapshot_count < 2:
        bad("snapshots.count", "must be >= 2")
    if not cfg.sweep_a_t_bohr or not cfg.map_t_r or not cfg.map_a_min:
        bad("sweep/map lists", "must be nonempty")
    return cfg


def parse_config(text: str, base: RunConfig | None = None) -> RunConfig:
    """Parse a key-value document on top of ``base`` (defaults if omitted)."""
    updates = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            updates[KEYS[key]] = _coerce(KEYS[key], value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None
    return validate(replace(base or RunConfig(), **updates))


PRESETS = {
    "fig2": """
        run.kind = sweep-scattering
        sweep.a_t_bohr = 0:127.2:25
    """,
    "fig3": """
        run.kind = gate
    """,
    "fig4": """
        run.kind = gate
        physics.species = rb85
        physics.omega_p = 1.6e6
        physics.a_t_bohr = -369
        trajectory.a_min = 1.956
        trajectory.t_r = 77
        trajectory.t_i = 97.2
    """,
    "fig6a": """
        run.kind = fidelity-map
        map.t_i = 69
    """,
    "fig6b": """
        run.kind = fidelity-map
        map.t_i = 20
    """,
}


def load_preset(name: str) -> RunConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}")
    return parse_config(PRESETS[name])


# ---------------------------------------------------------------- output helpers

def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.12g}"
    return str(value)


def write_csv(path, header, rows) -> None:
    """RFC-4180 CSV; rows are dicts keyed by ``header`` or plain sequences."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, quoting=csv.QUOTE_MINIMAL, lineterminator="\r\n")
        writer.writerow(header)
        for row in rows:
            values = [row.get(h, "") for h in header] if isinstance(row, dict) else row
            writer.writerow([fmt(v) for v in values])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": float(f"{obj.real:.12g}"), "im": float(f"{obj.imag:.12g}")}
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return float(f"{v:.12g}") if np.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_manifest(path, cfg: RunConfig, results: dict, wall: float) -> dict:
    model = derive_dimensionless(cfg.physical_params())
    manifest = {
        "code_version": __version__,
        "kind": cfg.kind,
        "config": cfg.to_dict(),
        "derived": {
            "g": model.g,
            "alpha_inv_m": model.alpha_inv,
            "total_time": model.trajectory.total_time,
            "gate_duration_s": model.trajectory.total_time / cfg.omega_x,
        },
        "results": results,
        "wall_time_s": wall,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(manifest), fh, indent=2, ensure_ascii=False)
        fh.write("\n")
    return manifest


# ---------------------------------------------------------------- runners

def _matrix_rows(u):
    return [[f"{z.real:.12g}{z.imag:+.12g}j" for z in row] for row in u]


def run_gate(cfg: RunConfig) -> dict:
    model = derive_dimensionless(cfg.physical_params())
    traj = model.trajectory
    settings = cfg.gate_settings()
    table = hamiltonian_table(traj.a_min, traj.a_max, cfg.n_sp, cfg.knots)
    gate = reconstruct_gate(model, settings, table)
    basis = table.basis
    for label in ("00", "01", "11"):
        res = propagate(computational_embedding(label, basis), model, table, cfg.tol,
                        cfg.couplings, cfg.samples)
        rows = population_trace(res)
        header = list(rows[0])
        write_csv(os.path.join(cfg.out, f"populations_{label}.csv"), header, rows)
    write_csv(
        os.path.join(cfg.out, "gate_matrix.csv"), ["row", "00", "01", "10", "11"],
        [[lab] + r for lab, r in zip(("00", "01", "10", "11"), _matrix_rows(gate.matrix))],
    )
    return {
        "fidelity": averaged_fidelity(gate),
        "process_overlap": process_overlap(gate),
        "leakage": gate.leakage,
        "gate_matrix": gate.matrix,
        "target": SQRT_SWAP,
        "norm_drift": gate.norm_drift,
        "include_couplings": cfg.couplings,
    }


def run_sweep(cfg: RunConfig) -> dict:
    values = [a * BOHR_RADIUS for a in cfg.sweep_a_t_bohr]
    rows = sweep_scattering(cfg.physical_params(), values, cfg.gate_settings(), cfg.workers)
    header = ["a_t_bohr", "g", "status", "p01_01", "p01_10", "p01_double", "p01_other",
              "p11_11", "p11_02", "p11_double", "fidelity"]
    write_csv(os.path.join(cfg.out, "scattering_sweep.csv"), header, rows)
    return {"points": len(rows), "failed": sum(r["status"] != "ok" for r in rows)}


def run_map(cfg: RunConfig) -> dict:
    fmap = fidelity_map(
        cfg.physical_params(), cfg.map_t_r, cfg.map_a_min, cfg.map_t_i, cfg.gate_settings(),
        cfg.workers, checkpoint=os.path.join(cfg.out, "fidelity_map.checkpoint.jsonl"),
    )
    header = ["t_r"] + [fmt(a) for a in fmap.a_min]
    write_csv(os.path.join(cfg.out, "fidelity_map.csv"), header,
              [[t] + list(r) for t, r in zip(fmap.t_r, fmap.fidelity)])
    return {"best": fmap.best(), "nan_points": int(np.isnan(fmap.fidelity).sum()),
            "t_i": fmap.t_i}


def run_entanglement(cfg: RunConfig) -> dict:
    model = derive_dimensionless(cfg.physical_params())
    traj = model.trajectory
    table = hamiltonian_table(traj.a_min, traj.a_max, cfg.n_sp, cfg.knots)
    res = propagate(computational_embedding("01", table.basis), model, table, cfg.tol,
                    cfg.couplings, cfg.samples)
    samples = correlation_trace(res.states())
    rows = [s.row() for s in samples]
    header = ["time", "S_B_half", "slater_rank", "S", "p_single", "S_p_single", "S_Z"]
    write_csv(os.path.join(cfg.out, "correlations.csv"), header, rows)
    s_z = np.array([s.occupation_entropy for s in samples])
    return {
        "S_B_final": samples[-1].bosonic_entropy,
        "S_final": samples[-1].projected_entropy,
        "p_single_final": samples[-1].p_single,
        "S_Z_initial": s_z[0],
        "S_Z_final": s_z[-1],
        "S_Z_max": s_z.max(),
    }


def run_snapshots(cfg: RunConfig) -> dict:
    model = derive_dimensionless(cfg.physical_params())
    traj = model.trajectory
    half = cfg.grid_half_width or traj.a_max + 6.0
    grid = Grid2D(half, cfg.grid_points)
    labels = list(cfg.snapshot_labels)
    times = np.linspace(0.0, traj.total_time, cfg.snapshot_count)
    sigma = None if cfg.grid_sigma < 0 else cfg.grid_sigma
    result = oracle_run(model, labels, grid, cfg.grid_dt, cfg.n_sp, sigma=sigma,
                        snapshot_times=times, workers=cfg.workers)
    frames = []
    for k, snap in enumerate(result.snapshots):
        for j, label in enumerate(labels):
            name = f"frame_{label}_{k:03d}.bin"
            write_frame(os.path.join(cfg.out, name), snap.density[j], grid)
            frames.append({"file": name, "label": label, "time": snap.time})
    final = [{"label": lab, "residual": float(r), **pops}
             for lab, r, pops in zip(labels, result.residual, result.populations)]
    return {"grid": {"points": grid.points, "half_width": grid.half_width,
                     "spacing": grid.spacing, "header": "b'MTG1', int32 N_g, float64 L_g"},
            "frames": frames, "final_populations": final}


def run_verify(cfg: RunConfig) -> dict:
    from .correlations import takagi

    checks = []
    for a in (0.5, 1.0, 1.99, 5.0, 10.0):
        sp = build_orthonormal_basis(cfg.n_sp, a, QuadratureGrid.for_separation(a))
        err = float(np.max(np.abs(sp.gram() - np.eye(cfg.n_sp))))
        checks.append({"check": f"gram a={a}", "error": err, "limit": 1e-10})
    for name, err in universality_suite().items():
        checks.append({"check": f"algebra {name}", "error": err, "limit": 1e-14})
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(100):
        v = rng.normal(size=(cfg.n_sp, cfg.n_sp)) + 1j * rng.normal(size=(cfg.n_sp, cfg.n_sp))
        v = v + v.T
        u, lam = takagi(v)
        worst = max(worst, float(np.max(np.abs(u @ np.diag(lam) @ u.T - v))))
    checks.append({"check": "takagi roundtrip", "error": worst, "limit": 1e-10})
    for c in checks:
        c["pass"] = c["error"] <= c["limit"]
    width = max(len(c["check"]) for c in checks)
    for c in checks:
        print(f"{c['check']:<{width}}  {c['error']:.3e}  {'PASS' if c['pass'] else 'FAIL'}")
    return {"checks": checks, "all_pass": all(c["pass"] for c in checks)}


RUNNERS = {
    "gate": run_gate,
    "sweep-scattering": run_sweep,
    "fidelity-map": run_map,
    "entanglement-trace": run_entanglement,
    "snapshots": run_snapshots,
    "verify": run_verify,
}


def run(cfg: RunConfig) -> tuple[int, dict]:
    """Execute ``cfg``; returns the exit status and the manifest."""
    os.makedirs(cfg.out, exist_ok=True)
    if cfg.dump_basis:
        sp = build_orthonormal_basis(cfg.n_sp, cfg.a_min, QuadratureGrid.for_separation(cfg.a_max))
        dump_basis_csv(sp, os.path.join(cfg.out, "basis_a_min.csv"))
    start = time.perf_counter()
    results = RUNNERS[cfg.kind](cfg)
    manifest = write_manifest(
        os.path.join(cfg.out, "manifest.json"), cfg, results, time.perf_counter() - start
    )
    status = 0 if results.get("all_pass", True) else 4
    return status, manifest


ERROR_CATEGORIES = (
    (ConfigError, "config", 2),
    (InvalidParameterError, "invalid-parameter", 2),
    (DomainError, "domain", 3),
    (IntegrationError, "integration", 3),
    (GridStabilityError, "grid-stability", 3),
    (ResolutionError, "resolution", 3),
)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="microtrap-gate", description=__doc__.splitlines()[0])
    p.add_argument("verb", choices=sorted(VERBS))
    p.add_argument("--config", help="key-value config file (applied on top of --preset)")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--out", help="output directory")
    p.add_argument("--workers", type=int)
    p.add_argument("--tolerance", type=float, help="integrator relative tolerance")
    p.add_argument("--no-derivative-couplings", action="store_true")
    p.add_argument("--dump-basis", action="store_true", help="write the basis at a_min as CSV")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a single config key")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def resolve_config(args) -> RunConfig:
    cfg = load_preset(args.preset) if args.preset else RunConfig()
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            cfg = parse_config(fh.read(), cfg)
    if args.set:
        cfg = parse_config("\n".join(args.set), cfg)
    updates = {"kind": VERBS[args.verb]}
    if args.out:
        updates["out"] = args.out
    if args.workers is not None:
        updates["workers"] = args.workers
    if args.tolerance is not None:
        updates["tol"] = args.tolerance
    if args.no_derivative_couplings:
        updates["couplings"] = False
    if args.dump_basis:
        updates["dump_basis"] = True
    return validate(replace(cfg, **updates))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        status, manifest = run(cfg)
    except Exception as exc:
        for kind, category, code in ERROR_CATEGORIES:
            if isinstance(exc, kind):
                break
        else:
            category, code = "internal", 1
        print(json.dumps({"error": category, "message": str(exc)}), file=sys.stderr)
        return code
    summary = {k: v for k, v in manifest["results"].items() if k in
               ("fidelity", "best", "all_pass", "points", "S_Z_max")}
    print(json.dumps(_jsonable({"out": cfg.out, "kind": cfg.kind, **summary})))
    return status


if __name__ == "__main__":
    sys.exit(main())
