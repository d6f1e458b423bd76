"""Experiment configuration, JSON round-trip and the built-in case library."""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .grid import Grid2D, SpaceTimeDomain, make_grid
from .iinn import GaussianSum, IinnConfig, LinearModeSeed, SeedSpec
from .pinn import PinnConfig
from .potentials import PotentialSpec, PtHog, QuadWell, potential_from_dict, potential_to_dict

SCHEMA_VERSION = 1


@dataclass
class OracleSettings:
    nx: int = 256
    ny: int = 256
    dt: float = 1e-3
    tol: float = 1e-9
    max_iter: int = 20000

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise ValueError("oracle grid needs at least 2 points per axis")
        if not (self.dt > 0 and self.tol > 0 and self.max_iter >= 1):
            raise ValueError("oracle dt, tol and max_iter must be positive")


@dataclass
class ExperimentConfig:
    """One reproducible case.

    ``thresholds`` maps a budget scale (as a string, e.g. ``"0.25"``) to metric
    bounds such as ``{"iinn.rel_l2": 5e-2}``; a run at scale ``s`` is gated by
    the entry with the largest scale not above ``s``.
    """

    case_id: str
    potential: PotentialSpec
    mu: float
    bounds: tuple[float, float, float, float]
    t_max: float
    seed: SeedSpec
    iinn: IinnConfig = field(default_factory=IinnConfig)
    pinn: PinnConfig = field(default_factory=PinnConfig)
    oracle: OracleSettings = field(default_factory=OracleSettings)
    scale: float = 1.0
    rng_seed: int = 0
    pinn_initial: str = "iinn"
    pinn_t_max: float | None = None
    run_pinn: bool = True
    thresholds: dict = field(default_factory=dict)
    out_dir: str = "runs"

    def __post_init__(self):
        self.bounds = tuple(float(b) for b in self.bounds)
        self.validate()

    def validate(self):
        if not self.case_id:
            raise ValueError("case_id must be non-empty")
        if len(self.bounds) != 4:
            raise ValueError("bounds must be (x_min, x_max, y_min, y_max)")
        make_grid(self.bounds, 2, 2)
        if not np.isfinite(self.mu):
            raise ValueError("mu must be finite")
        if not (np.isfinite(self.t_max) and self.t_max > 0):
            raise ValueError("t_max must be positive")
        if self.pinn_t_max is not None and not self.pinn_t_max > 0:
            raise ValueError("pinn_t_max must be positive")
        if not (np.isfinite(self.scale) and self.scale > 0):
            raise ValueError(f"budget scale must be > 0, got {self.scale}")
        if not 0 <= int(self.rng_seed) < 2**64:
            raise ValueError("rng_seed must fit in 64 bits")
        if self.pinn_initial not in ("iinn", "oracle"):
            raise ValueError("pinn_initial must be 'iinn' or 'oracle'")
        for k in self.thresholds:
            float(k)

    # -- derived geometry
    def grid(self) -> Grid2D:
        return make_grid(self.bounds, self.oracle.nx, self.oracle.ny)

    def domain(self) -> SpaceTimeDomain:
        return SpaceTimeDomain(self.grid(), self.pinn_t_max or self.t_max)

    def stage_seeds(self) -> dict:
        """Independent 64-bit seeds for each stage, split from ``rng_seed``."""
        ss = np.random.SeedSequence(int(self.rng_seed))
        a, b = ss.spawn(2)
        return {"iinn": int(a.generate_state(1, np.uint64)[0]),
                "pinn": int(b.generate_state(1, np.uint64)[0])}

    def active_thresholds(self) -> dict:
        keys = sorted((float(k), k) for k in self.thresholds)
        chosen = {}
        for s, k in keys:
            if s <= self.scale + 1e-12:
                chosen = self.thresholds[k]
        return dict(chosen)

    def scaled(self) -> "ExperimentConfig":
        """Stage configs with iteration and sample counts multiplied by ``scale``."""
        s = self.scale
        it = self.iinn
        pc = self.pinn
        iinn = replace(it, n_points=_scale(it.n_points, s), stage1_iters=_scale(it.stage1_iters, s),
                       stage2_iters=_scale(it.stage2_iters, s),
                       stage2_lbfgs_iters=_scale(it.stage2_lbfgs_iters, s, allow_zero=True))
        pinn = replace(pc, n_collocation=_scale(pc.n_collocation, s),
                       n_boundary=_scale(pc.n_boundary, s), n_initial=_scale(pc.n_initial, s),
                       adam_steps=_scale(pc.adam_steps, s, allow_zero=True),
                       lbfgs_steps=_scale(pc.lbfgs_steps, s, allow_zero=True))
        return replace(self, iinn=iinn, pinn=pinn)

    def with_overrides(self, **kw) -> "ExperimentConfig":
        return replace(self, **kw)

    # -- serialization
    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "case_id": self.case_id,
            "potential": potential_to_dict(self.potential),
            "mu": self.mu,
            "bounds": list(self.bounds),
            "t_max": self.t_max,
            "seed": seed_to_dict(self.seed),
            "iinn": _plain(asdict(self.iinn)),
            "pinn": _plain(asdict(self.pinn)),
            "oracle": asdict(self.oracle),
            "scale": self.scale,
            "rng_seed": int(self.rng_seed),
            "pinn_initial": self.pinn_initial,
            "pinn_t_max": self.pinn_t_max,
            "run_pinn": self.run_pinn,
            "thresholds": copy.deepcopy(self.thresholds),
            "out_dir": self.out_dir,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        schema = d.pop("schema", SCHEMA_VERSION)
        if schema != SCHEMA_VERSION:
            raise ValueError(f"unsupported config schema {schema}")
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        d["potential"] = potential_from_dict(d["potential"])
        d["seed"] = seed_from_dict(d["seed"])
        if "iinn" in d:
            d["iinn"] = _build(IinnConfig, d["iinn"])
        if "pinn" in d:
            d["pinn"] = _build(PinnConfig, d["pinn"])
        if "oracle" in d:
            d["oracle"] = _build(OracleSettings, d["oracle"])
        d["bounds"] = tuple(d["bounds"])
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))

    def save(self, path) -> Path:
        Path(path).write_text(self.to_json() + "\n")
        return Path(path)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_json(Path(path).read_text())


def _scale(n: int, s: float, allow_zero: bool = False) -> int:
    if n == 0 and allow_zero:
        return 0
    return max(1, int(round(n * s)))


def _plain(d: dict) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


def _build(cls, d: dict):
    names = {f.name for f in fields(cls)}
    extra = set(d) - names
    if extra:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(extra)}")
    return cls(**d)


def seed_to_dict(seed: SeedSpec) -> dict:
    if isinstance(seed, GaussianSum):
        return {"kind": "gaussian_sum", "amplitudes": list(seed.amplitudes), "k": seed.k,
                "centers": None if seed.centers is None else [list(c) for c in seed.centers]}
    if isinstance(seed, LinearModeSeed):
        return {"kind": "linear_mode",
                "weights": [[int(i), [complex(w).real, complex(w).imag]] for i, w in seed.weights],
                "scale": seed.scale, "grid_n": seed.grid_n}
    raise TypeError(f"unknown seed spec {seed!r}")


def seed_from_dict(d: dict) -> SeedSpec:
    kind = d.get("kind")
    if kind == "gaussian_sum":
        centers = d.get("centers")
        return GaussianSum(tuple(float(a) for a in d["amplitudes"]), float(d["k"]),
                           None if centers is None else tuple(tuple(map(float, c)) for c in centers))
    if kind == "linear_mode":
        weights = []
        for i, w in d["weights"]:
            w = complex(w[0], w[1]) if isinstance(w, (list, tuple)) else complex(w)
            weights.append((int(i), w))
        return LinearModeSeed(tuple(weights), float(d.get("scale", 1.0)), int(d.get("grid_n", 128)))
    raise ValueError(f"unknown seed kind {kind!r}")


# -- case library ---------------------------------------------------------------

QW_AMPLITUDES = {
    "QW-A0": (0.46, 0.46, 0.46, 0.46),
    "QW-A1": (0.46, 0.0, 0.0, 0.0),
    "QW-A3": (0.3, 0.0, 0.3, 0.0),
    "QW-A4": (0.46, 0.46, 0.46, 0.0),
}
# (stage-1 Adam steps, stage-2 L-BFGS iterations) per branch.  The library
# wells sit at (+-5, +-5): at +-4 the four droplets overlap enough that
# stage 2 settles into a merged flat-top state instead of the oracle branch.
QW_WELL = 5.0
QW_BUDGET = {"QW-A0": (20000, 3000), "QW-A1": (10000, 5000),
             "QW-A3": (15000, 5000), "QW-A4": (20000, 3000)}

# mu, linear-mode index, IINN stage-2 iterations, PINN L-BFGS steps
PT_CASES = {
    "PT-1": (2.0, 0, 10000, 10000),
    "PT-2": (2.8, 1, 10000, 15000),
    "PT-3": (4.3, 3, 10000, 15000),
    "PT-4": (4.2, 5, 20000, 15000),
}

QW_THRESHOLDS = {
    "0.25": {"iinn.rel_l2": 5e-2, "pinn.rel_l2_psi": 8e-2},
    "1.0": {"iinn.rel_l2": 1.5e-2, "pinn.rel_l2_psi": 3e-2},
}
PT_THRESHOLDS = {
    "0.25": {"pinn.rel_l2_psi": 1e-1},
    "1.0": {"iinn.rel_l2": 4e-2, "pinn.rel_l2_psi": 4e-2},
}


class CaseLibrary:
    """The eight built-in cases (four quadruple-well branches, four PT cases)."""

    @staticmethod
    def ids() -> list[str]:
        return [*QW_AMPLITUDES, *PT_CASES]

    @staticmethod
    def get(case_id: str) -> ExperimentConfig:
        if case_id in QW_AMPLITUDES:
            s1, s2 = QW_BUDGET[case_id]
            return ExperimentConfig(
                case_id=case_id,
                potential=QuadWell(V0=-0.5, k=0.1, x0=QW_WELL, y0=QW_WELL),
                mu=-0.5, bounds=(-12.0, 12.0, -12.0, 12.0), t_max=5.0,
                seed=GaussianSum(QW_AMPLITUDES[case_id], 0.1),
                iinn=IinnConfig(n_points=20000, stage1_iters=s1, stage2_iters=s2,
                                stage2_optimizer="lbfgs"),
                pinn=PinnConfig(n_collocation=20000, n_boundary=150, n_initial=1000,
                                adam_steps=40000, lbfgs_steps=10000),
                oracle=OracleSettings(nx=256, ny=256),
                thresholds=copy.deepcopy(QW_THRESHOLDS))
        if case_id in PT_CASES:
            mu, mode, s2, lb = PT_CASES[case_id]
            return ExperimentConfig(
                case_id=case_id,
                potential=PtHog(V0=-1 / 16, W0=1.0),
                mu=mu, bounds=(-8.0, 8.0, -8.0, 8.0), t_max=3.0,
                seed=LinearModeSeed(((mode, 1.0),)),
                iinn=IinnConfig(n_points=10000, stage1_iters=10000, stage2_iters=s2,
                                stage2_optimizer="lbfgs"),
                pinn=PinnConfig(n_collocation=20000, n_boundary=150, n_initial=1000,
                                adam_steps=30000, lbfgs_steps=lb),
                oracle=OracleSettings(nx=192, ny=192),
                thresholds=copy.deepcopy(PT_THRESHOLDS))
        raise KeyError(f"unknown case {case_id!r}; known: {', '.join(CaseLibrary.ids())}")

    @staticmethod
    def all() -> list[ExperimentConfig]:
        return [CaseLibrary.get(c) for c in CaseLibrary.ids()]


def load_config(ref: str) -> ExperimentConfig:
    """A case id from the library or a path to a JSON config."""
    if ref in CaseLibrary.ids():
        return CaseLibrary.get(ref)
    p = Path(ref)
    if not p.exists():
        raise FileNotFoundError(f"{ref!r} is neither a built-in case nor a config file")
    return ExperimentConfig.load(p)
