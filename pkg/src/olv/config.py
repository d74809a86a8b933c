"""Scenario configuration: a plain-text INI dialect plus builders that
turn its sections into the toolkit's typed specs.

Grammar (standard INI as read by :mod:`configparser`; ``#`` and ``;``
start comments; keys are case-sensitive; vectors are whitespace
separated)::

    [run]                       # bookkeeping, all optional
    seed = 1234                 # master seed, default 0
    out = runs/demo             # output directory, default "."
    threads = 1                 # worker count, default 1

    [universe]                  # closed universe
    box = 10 10 10              # edge lengths
    n = 1000                    # particle count
    mass = 1.0                  # default 1
    temperature = 1.0           # default 1

    [region]                    # open subdomain of the universe
    lo = 4 4 4                  # omega lower corner
    hi = 6 6 6                  # omega upper corner
    delta = 1.25                # buffer thickness, default 0

    [potential]                 # pair interaction
    kind = wca                  # ideal | lennard_jones | wca
    epsilon = 1.0
    sigma = 1.0
    cutoff = 2.5                # lennard_jones only; omit for the default

    [engine]                    # integrator
    dt = 0.002
    steps = 20000
    thermostat = langevin       # off | langevin, default off
    gamma = 1.0
    thermostat_mask = everywhere   # everywhere | outside_omega
    frame_stride = 10           # 0: first and last frame only
    tracer_mode = false
    init = lattice              # lattice | ideal (initial condition)

    [estimators]                # occupancy statistics
    stride = auto               # auto | positive integer
    n_max = 0                   # histogram cap, 0: automatic
    resamples = 200             # bootstrap resamples

    [oracle]                    # exchange-ensemble state point
    beta = 1.0
    mu = -1.0
    volume = 8.0                # subdomain volume, default from [region]
    h = 1.0
    mass = 1.0
    sweeps = 20000
    checkpoint_stride = 0
    insertions_per_frame = 200  # test-particle insertions (widom)

    [bl]                        # stochastic reservoir chain
    nu = 2.0
    omega = 2 2 2               # subdomain edge lengths, default from [region]
    dt = 0.002                  # integrator step between jumps
    dt_max = 0.05               # span length of the jump loop
    steps = 20000               # number of spans
    birth_bias = 1.0
    frame_stride = 0

    [grid]                      # phase-space hierarchy solver
    length = 1.0
    omega = 0.25 0.75
    nx = 60
    p_max = 8.0
    np_cells = 24
    dt = 0.002
    mass = 1.0
    steps = 1000
    levels = 2                  # 1 | 2
    epsilon = 0.0               # soft pair potential; 0: ideal
    width = 0.1

    [closure]                   # reservoir model for the grid solver
    mode = grand_canonical      # factorized | grand_canonical
    rho = 0.5                   # factorized reservoir density
    temperature = 1.0
    drift = 0.0
    beta = 1.0                  # grand-canonical parameters
    mu = -1.0
    h = 1.0
    reflect = true              # orientation of the incoming profile

Unknown sections and keys are rejected so typos fail loudly.  Cross
checks at load time: the engine step-size guard, and a warning when the
buffer is thinner than the interaction range.
"""

from __future__ import annotations

import configparser
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigInvalid

_KNOWN = {
    "run": {"seed", "out", "threads"},
    "universe": {"box", "n", "mass", "temperature"},
    "region": {"lo", "hi", "delta"},
    "potential": {"kind", "epsilon", "sigma", "cutoff"},
    "engine": {"dt", "steps", "thermostat", "gamma", "thermostat_mask",
               "frame_stride", "tracer_mode", "init"},
    "estimators": {"stride", "n_max", "resamples"},
    "oracle": {"beta", "mu", "volume", "h", "mass", "sweeps",
               "checkpoint_stride", "insertions_per_frame"},
    "bl": {"nu", "omega", "dt", "dt_max", "steps", "birth_bias",
           "frame_stride"},
    "grid": {"length", "omega", "nx", "p_max", "np_cells", "dt", "mass",
             "steps", "levels", "epsilon", "width"},
    "closure": {"mode", "rho", "temperature", "drift", "beta", "mu", "h",
                "reflect"},
}


@dataclass
class ScenarioConfig:
    """Parsed scenario: raw text (hashed into the manifest), the section
    map, and typed builders for each module's specs."""

    text: str
    sections: dict

    # -- scalar accessors ---------------------------------------------------

    @property
    def seed(self) -> int:
        return self._int("run", "seed", 0)

    @property
    def out_dir(self) -> str:
        return self._get("run", "out", ".")

    @property
    def threads(self) -> int:
        n = self._int("run", "threads", 1)
        if n < 1:
            raise ConfigInvalid("threads must be at least 1")
        return n

    def has(self, section: str) -> bool:
        return section in self.sections

    def get_int(self, section: str, key: str, default: int | None = None) -> int:
        return self._int(section, key, default)

    def get_float(self, section: str, key: str,
                  default: float | None = None) -> float:
        return self._float(section, key, default)

    # -- builders -----------------------------------------------------------

    def build_universe(self):
        from .geometry import UniverseSpec

        self._require("universe", "box", "n")
        return UniverseSpec(
            box_lengths=self._vec("universe", "box", 3),
            n_total=self._int("universe", "n"),
            mass=self._float("universe", "mass", 1.0),
            temperature=self._float("universe", "temperature", 1.0),
            seed=self.seed,
        )

    def build_region(self):
        from .geometry import RegionSpec

        self._require("region", "lo", "hi")
        return RegionSpec(
            omega_lo=self._vec("region", "lo", 3),
            omega_hi=self._vec("region", "hi", 3),
            delta_thickness=self._float("region", "delta", 0.0),
        )

    def build_potential(self):
        from .potentials import IDEAL, PairPotentialSpec

        kind = self._get("potential", "kind", IDEAL)
        kwargs = {}
        if self._get("potential", "cutoff", "") != "":
            kwargs["cutoff"] = self._float("potential", "cutoff")
        return PairPotentialSpec(
            kind=kind,
            epsilon=self._float("potential", "epsilon", 1.0),
            sigma=self._float("potential", "sigma", 1.0),
            **kwargs,
        )

    def build_engine(self):
        from .engine import EngineConfig, ThermostatSpec

        self._require("engine", "dt", "steps")
        thermostat = ThermostatSpec(
            kind=self._get("engine", "thermostat", "off"),
            gamma=self._float("engine", "gamma", 1.0),
        )
        kwargs = {}
        mask = self._get("engine", "thermostat_mask", "")
        if mask:
            kwargs["thermostat_mask"] = mask
        return EngineConfig(
            dt=self._float("engine", "dt"),
            steps=self._int("engine", "steps"),
            thermostat=thermostat,
            frame_stride=self._int("engine", "frame_stride", 0),
            tracer_mode=self._bool("engine", "tracer_mode", False),
            seed=self.seed,
            **kwargs,
        )

    @property
    def initial_kind(self) -> str:
        kind = self._get("engine", "init", "lattice")
        if kind not in ("lattice", "ideal"):
            raise ConfigInvalid(f"unknown initial condition {kind!r}")
        return kind

    def estimator_options(self) -> dict:
        stride = self._get("estimators", "stride", "auto")
        n_max = self._int("estimators", "n_max", 0)
        return {
            "stride": None if stride == "auto" else _positive_int(stride, "stride"),
            "n_max": n_max if n_max > 0 else None,
            "n_resamples": self._int("estimators", "resamples", 200),
        }

    def build_gc_params(self, volume: float | None = None):
        from .ensembles import GCParams

        self._require("oracle", "beta", "mu")
        if volume is None:
            if self._get("oracle", "volume", "") != "":
                volume = self._float("oracle", "volume")
            elif self.has("region"):
                region = self.build_region()
                volume = region.volume
            else:
                raise ConfigInvalid(
                    "[oracle] needs volume, or a [region] to take it from")
        return GCParams(
            beta=self._float("oracle", "beta"),
            mu=self._float("oracle", "mu"),
            volume_omega=float(volume),
            h=self._float("oracle", "h", 1.0),
            mass=self._float("oracle", "mass", 1.0),
        )

    def build_kernel(self):
        from .bergmann_lebowitz import BLKernelSpec

        self._require("bl", "nu")
        if self._get("bl", "omega", "") != "":
            lengths = self._vec("bl", "omega", 3)
        elif self.has("region"):
            region = self.build_region()
            lengths = region.omega_hi - region.omega_lo
        else:
            raise ConfigInvalid("[bl] needs omega, or a [region] to take it from")
        params = self.build_gc_params(volume=float(np.prod(lengths)))
        return BLKernelSpec(
            nu=self._float("bl", "nu"),
            params=params,
            omega_lengths=tuple(lengths),
            dt=self._float("bl", "dt", 0.002),
            birth_bias=self._float("bl", "birth_bias", 1.0),
        )

    def build_grid(self):
        from .hierarchy import GridSpec

        self._require("grid", "length", "omega", "nx", "p_max", "np_cells", "dt")
        omega = self._vec("grid", "omega", 2)
        return GridSpec(
            length=self._float("grid", "length"),
            omega=(float(omega[0]), float(omega[1])),
            nx=self._int("grid", "nx"),
            p_max=self._float("grid", "p_max"),
            np_cells=self._int("grid", "np_cells"),
            dt=self._float("grid", "dt"),
            mass=self._float("grid", "mass", 1.0),
        )

    def build_grid_potential(self):
        from .hierarchy import SoftGaussianPotential

        return SoftGaussianPotential(
            epsilon=self._float("grid", "epsilon", 0.0),
            width=self._float("grid", "width", 0.1),
        )

    def build_closure(self):
        from .hierarchy import GRAND_CANONICAL, ClosureSpec

        self._require("closure", "mode")
        mode = self._get("closure", "mode")
        kwargs = {}
        if mode == GRAND_CANONICAL:
            self._require("closure", "beta", "mu")
            kwargs.update(
                gc_beta=self._float("closure", "beta"),
                gc_mu=self._float("closure", "mu"),
                gc_h=self._float("closure", "h", 1.0),
            )
        return ClosureSpec(
            mode=mode,
            rho_res=self._float("closure", "rho", 0.0),
            temperature=self._float("closure", "temperature", 1.0),
            drift_momentum=self._float("closure", "drift", 0.0),
            reflect_incoming=self._bool("closure", "reflect", True),
            **kwargs,
        )

    # -- cross-field validation --------------------------------------------

    def validate(self) -> None:
        """Checks that span sections: the MD step-size guard and the
        buffer-versus-cutoff warning.  Single-section validity is checked
        by each spec's own constructor when it is built."""
        if self.has("region") and self.has("potential"):
            region = self.build_region()
            potential = self.build_potential()
            if 0 < region.delta_thickness < potential.r_cut:
                warnings.warn(
                    f"buffer thickness {region.delta_thickness:g} is below the "
                    f"interaction range {potential.r_cut:g}; reservoir "
                    "statistics next to the boundary will be distorted",
                    UserWarning, stacklevel=2)
        if self.has("engine") and self.has("universe"):
            from .engine import check_step_size

            check_step_size(
                self.build_engine(), self.build_universe(),
                self.build_region() if self.has("region") else None,
                self.build_potential())

    # -- low-level accessors ------------------------------------------------

    def _get(self, section: str, key: str, default=None) -> str:
        values = self.sections.get(section, {})
        if key in values:
            return values[key]
        if default is None:
            raise ConfigInvalid(f"[{section}] is missing the key {key!r}")
        return default

    def _require(self, section: str, *keys: str) -> None:
        if section not in self.sections:
            raise ConfigInvalid(f"missing required section [{section}]")
        missing = [k for k in keys if k not in self.sections[section]]
        if missing:
            raise ConfigInvalid(
                f"[{section}] is missing required keys: {', '.join(missing)}")

    def _float(self, section: str, key: str, default: float | None = None):
        raw = self._get(section, key, None if default is None else repr(default))
        try:
            return float(raw)
        except ValueError:
            raise ConfigInvalid(
                f"[{section}] {key} = {raw!r} is not a number") from None

    def _int(self, section: str, key: str, default: int | None = None):
        raw = self._get(section, key, None if default is None else str(default))
        try:
            return int(raw)
        except ValueError:
            raise ConfigInvalid(
                f"[{section}] {key} = {raw!r} is not an integer") from None

    def _bool(self, section: str, key: str, default: bool):
        raw = self._get(section, key, str(default)).strip().lower()
        if raw in ("true", "yes", "on", "1"):
            return True
        if raw in ("false", "no", "off", "0"):
            return False
        raise ConfigInvalid(f"[{section}] {key} = {raw!r} is not a boolean")

    def _vec(self, section: str, key: str, length: int) -> np.ndarray:
        raw = self._get(section, key)
        try:
            v = np.array([float(tok) for tok in raw.split()], dtype=float)
        except ValueError:
            raise ConfigInvalid(
                f"[{section}] {key} = {raw!r} is not a vector") from None
        if v.size != length:
            raise ConfigInvalid(
                f"[{section}] {key} needs {length} components, got {v.size}")
        return v


def _positive_int(raw: str, name: str) -> int:
    try:
        n = int(raw)
    except ValueError:
        raise ConfigInvalid(f"{name} = {raw!r} is not an integer") from None
    if n < 1:
        raise ConfigInvalid(f"{name} must be positive")
    return n


def loads(text: str) -> ScenarioConfig:
    """Parse and cross-validate a scenario from INI text."""
    parser = configparser.ConfigParser(
        interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigInvalid(f"config does not parse: {exc}") from None
    sections = {}
    for name in parser.sections():
        if name not in _KNOWN:
            raise ConfigInvalid(f"unknown section [{name}]")
        stray = set(parser[name]) - _KNOWN[name]
        if stray:
            raise ConfigInvalid(
                f"unknown keys in [{name}]: {', '.join(sorted(stray))}")
        sections[name] = dict(parser[name])
    cfg = ScenarioConfig(text=text, sections=sections)
    cfg.validate()
    return cfg


def load(path) -> ScenarioConfig:
    """Parse and cross-validate a scenario file."""
    p = Path(path)
    if not p.exists():
        raise ConfigInvalid(f"config file {path} does not exist")
    return loads(p.read_text())
