"""End-to-end case execution: oracle solve, IINN, PINN, metrics and files."""

from __future__ import annotations

import logging
import platform
import time
import traceback
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy
import torch

from . import io, neural
from .config import ExperimentConfig
from .grid import ComplexField, relative_l2
from .iinn import network_field, seed_on_grid, train_iinn
from .pinn import modulus_volume, predict_field, train_pinn
from .potentials import is_real
from .spectral import (ConvergenceError, StationaryProblem, evolve_split_step, linear_spectrum,
                       residual_norm, solve_stationary)

log = logging.getLogger(__name__)

STAGES = ("oracle", "iinn", "reference", "pinn")


@dataclass
class CaseReport:
    case_id: str
    status: str = "running"          # ok | failed_thresholds | error
    failed_stage: str | None = None
    error: str | None = None
    metrics: dict = field(default_factory=dict)
    acceptance: dict = field(default_factory=dict)
    stages: dict = field(default_factory=dict)
    files: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    environment: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.status == "ok"

    @property
    def exit_code(self) -> int:
        return {"ok": 0, "failed_thresholds": 1}.get(self.status, 2)

    def to_dict(self) -> dict:
        return {"case_id": self.case_id, "status": self.status,
                "failed_stage": self.failed_stage, "error": self.error,
                "metrics": self.metrics, "acceptance": self.acceptance,
                "stages": self.stages, "files": self.files, "timing": self.timing,
                "config": self.config, "environment": self.environment}

    @classmethod
    def from_dict(cls, d: dict) -> "CaseReport":
        return cls(**{k: d.get(k) for k in cls.__dataclass_fields__ if k in d})


def environment_info() -> dict:
    return {"python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "torch": torch.__version__,
            "torch_threads": torch.get_num_threads()}


def stationary_metric(pred: ComplexField, oracle: ComplexField, potential) -> float:
    """Relative L2 against the oracle; phase-aligned when the state may be complex.

    Stationary states are only defined up to a global phase, so for complex
    potentials the constant phase minimizing the error is removed first.
    """
    from .grid import phase_aligned_relative_l2
    if is_real(potential):
        return relative_l2(pred, oracle)
    return phase_aligned_relative_l2(pred, oracle)


def evaluate_thresholds(metrics: dict, thresholds: dict) -> dict:
    out = {}
    for name, bound in sorted(thresholds.items()):
        value = metrics.get(name)
        ok = value is not None and np.isfinite(value) and value <= bound
        out[name] = {"value": value, "threshold": bound, "pass": bool(ok)}
    return out


def run_oracle(cfg: ExperimentConfig, info: dict | None = None) -> ComplexField:
    grid = cfg.grid()
    problem = StationaryProblem(cfg.mu, cfg.potential, grid)
    seed = seed_on_grid(cfg.seed, cfg.potential, grid)
    return solve_stationary(problem, seed, tol=cfg.oracle.tol, max_iter=cfg.oracle.max_iter,
                            info=info)


def run_spectrum(cfg: ExperimentConfig, n_modes: int = 6) -> list:
    return linear_spectrum(cfg.potential, cfg.grid(), n_modes)


def run_case(config: ExperimentConfig, out_dir=None, write_files: bool = True) -> CaseReport:
    """Run every stage of a case and write the report (plus fields and traces).

    A failing stage stops the pipeline; the partial report names it in
    ``failed_stage``. ``status`` is ``ok`` only when all thresholds for the
    configured budget scale pass.
    """
    cfg = config.scaled()
    seeds = cfg.stage_seeds()
    out = Path(out_dir or Path(cfg.out_dir) / cfg.case_id)
    if write_files:
        out.mkdir(parents=True, exist_ok=True)
    rep = CaseReport(cfg.case_id, config=config.to_dict(), environment=environment_info())
    rep.config["stage_seeds"] = seeds
    grid = cfg.grid()
    problem = StationaryProblem(cfg.mu, cfg.potential, grid)
    stage = "oracle"
    try:
        # oracle
        t0 = time.perf_counter()
        info: dict = {}
        oracle = run_oracle(cfg, info)
        rep.timing["oracle_s"] = time.perf_counter() - t0
        rep.stages["oracle"] = {k: v for k, v in info.items() if k != "grid"}
        rep.metrics["oracle.residual"] = info["residual"]
        rep.metrics["oracle.iterations"] = info["iterations"]
        if write_files:
            io.write_cf2d(oracle, out / "oracle.cf2d")
            io.emit_heatmap(oracle, out / "oracle.ppm")
            rep.files["oracle"] = "oracle.cf2d"

        # IINN
        stage = "iinn"
        icfg = replace(cfg.iinn, rng_seed=seeds["iinn"])
        iparams, ireport = train_iinn(cfg.seed, problem, icfg, oracle=oracle)
        itrace = ireport.pop("trace")
        rep.timing["iinn_s"] = ireport.pop("wall_clock_s")
        learned = network_field(iparams, grid)
        rep.metrics["iinn.rel_l2"] = stationary_metric(learned, oracle, cfg.potential)
        rep.metrics["iinn.rel_l2_p"] = ireport.get("rel_l2_p")
        if "rel_l2_q" in ireport:
            rep.metrics["iinn.rel_l2_q"] = ireport["rel_l2_q"]
        rep.metrics["iinn.stage1_final_loss"] = ireport["stage1_final_loss"]
        rep.metrics["iinn.stage2_final_loss"] = ireport["stage2_final_loss"]
        rep.metrics["iinn.grid_residual"] = residual_norm(learned, problem)
        rep.stages["iinn"] = ireport
        if write_files:
            io.write_cf2d(learned, out / "iinn.cf2d")
            io.emit_heatmap(learned, out / "iinn.ppm")
            itrace.to_csv(out / "iinn_trace.csv")
            neural.save_checkpoint(iparams, out / "iinn.ckpt", counter=len(itrace))
            rep.files.update({"iinn": "iinn.cf2d",
                              "iinn_trace": "iinn_trace.csv", "iinn_checkpoint": "iinn.ckpt"})

        if not cfg.run_pinn:
            return _finish(rep, cfg, out, write_files)

        # split-step reference from the PINN's own initial field
        stage = "reference"
        domain = cfg.domain()
        times = [0.0, domain.t_max / 2, domain.t_max]
        if cfg.pinn_initial == "iinn":
            initial_field = learned

            def initial(x, y):
                v = neural.forward(iparams, np.column_stack([x, y]))
                return v[:, 0] if v.shape[1] == 1 else v[:, 0] + 1j * v[:, 1]
        else:
            initial_field = initial = oracle
        t0 = time.perf_counter()
        reference = evolve_split_step(initial_field, cfg.potential, domain.t_max,
                                      dt=cfg.oracle.dt, times=times)
        rep.timing["reference_s"] = time.perf_counter() - t0
        rep.stages["reference"] = {"dt": cfg.oracle.dt, "times": times,
                                   "initial": cfg.pinn_initial}

        # PINN
        stage = "pinn"
        pcfg = replace(cfg.pinn, rng_seed=seeds["pinn"])
        pparams, preport = train_pinn(initial, cfg.potential, domain, pcfg, reference=reference)
        ptrace = preport.pop("trace")
        rep.timing["pinn_s"] = preport.pop("wall_clock_s")
        per_time = preport.pop("per_time_rel_l2_psi")
        for key in ("rel_l2_psi", "rel_l2_p", "rel_l2_q"):
            rep.metrics[f"pinn.{key}"] = preport[key]
        rep.metrics["pinn.per_time_rel_l2_psi"] = per_time
        rep.metrics["pinn.final_loss"] = preport["final_loss"]
        rep.metrics["pinn.stalled"] = preport["stalled"]
        rep.stages["pinn"] = preport
        if write_files:
            pred = predict_field(pparams, grid, times)
            io.write_series(pred, out / "pinn_series", stem="psi")
            io.write_series(reference, out / "reference_series", stem="psi")
            for k, f in enumerate(pred.fields):
                io.emit_heatmap(f, out / f"pinn_t{k}.ppm")
            np.save(out / "pinn_modulus_volume.npy", modulus_volume(pred))
            ptrace.to_csv(out / "pinn_trace.csv")
            neural.save_checkpoint(pparams, out / "pinn.ckpt", counter=len(ptrace))
            rep.files.update({"pinn_series": "pinn_series/psi.json",
                              "reference_series": "reference_series/psi.json",
                              "pinn_trace": "pinn_trace.csv", "pinn_checkpoint": "pinn.ckpt"})
    except (ConvergenceError, FloatingPointError, RuntimeError, ValueError) as e:
        log.error("stage %s failed: %s", stage, e)
        rep.status = "error"
        rep.failed_stage = stage
        rep.error = f"{type(e).__name__}: {e}"
        rep.stages.setdefault(stage, {})["traceback"] = traceback.format_exc(limit=5)
        if write_files:
            io.write_json(rep.to_dict(), out / "report.json")
        return rep
    return _finish(rep, cfg, out, write_files)


def _finish(rep: CaseReport, cfg: ExperimentConfig, out: Path, write_files: bool) -> CaseReport:
    thresholds = cfg.active_thresholds()
    if not cfg.run_pinn:
        thresholds = {k: v for k, v in thresholds.items() if not k.startswith("pinn.")}
    rep.acceptance = evaluate_thresholds(rep.metrics, thresholds)
    rep.status = "ok" if all(a["pass"] for a in rep.acceptance.values()) else "failed_thresholds"
    if write_files:
        io.write_json(rep.to_dict(), out / "report.json")
    return rep


def metrics_block(report: CaseReport | dict) -> str:
    """Canonical JSON text of the metrics section (used for determinism checks)."""
    m = report.metrics if isinstance(report, CaseReport) else report["metrics"]
    return io.dumps_json(m)


def rerender_report(directory) -> dict:
    """Recompute field metrics from the files of a finished run directory."""
    d = Path(directory)
    rep = io.read_json(d / "report.json")
    cfg = ExperimentConfig.from_dict({k: v for k, v in rep["config"].items() if k != "stage_seeds"})
    metrics = dict(rep.get("metrics", {}))
    if (d / "oracle.cf2d").exists() and (d / "iinn.cf2d").exists():
        oracle = io.read_cf2d(d / "oracle.cf2d")
        learned = io.read_cf2d(d / "iinn.cf2d")
        metrics["iinn.rel_l2"] = stationary_metric(learned, oracle, cfg.potential)
    if (d / "pinn_series" / "psi.json").exists():
        pred = io.read_series(d / "pinn_series" / "psi.json")
        ref = io.read_series(d / "reference_series" / "psi.json")
        a, b = pred.stack(), ref.stack()
        metrics["pinn.rel_l2_psi"] = relative_l2(a, b)
        metrics["pinn.rel_l2_p"] = relative_l2(a.real, b.real)
        metrics["pinn.rel_l2_q"] = relative_l2(a.imag, b.imag)
    scaled = cfg.scaled()
    thresholds = scaled.active_thresholds()
    if not cfg.run_pinn:
        thresholds = {k: v for k, v in thresholds.items() if not k.startswith("pinn.")}
    return {"case_id": rep["case_id"], "metrics": metrics,
            "acceptance": evaluate_thresholds(metrics, thresholds)}
