"""Run configuration as line-oriented ``key = value`` text.

Lines starting with ``#`` are comments.  A phantom is either a preset name
(``phantom = cat``) or an explicit blob table given by indexed keys::

    blob.0.amplitude = 1.0
    blob.0.sigma = 0.05
    blob.0.c0 = 0.0, 0.0, 0.0      # center polynomial coefficients (t^0 .. t^3)
    blob.0.c1 = 0.1, 0.0, 0.0

The marching schedule is either explicit (``schedule = K:Q:iters:step, ...``)
or generated by :meth:`MarchingSchedule.alternating` from ``march.*`` keys.
"""

from __future__ import annotations

import dataclasses
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .hypervolume import ShellGrid
from .parambasis import BasisKind, ParamBasisSpec
from .phantom import GaussianBlobPhantom, load_preset
from .reconstruct import MarchingSchedule, ReconConfig, Stage


class ConfigError(ValueError):
    pass


_BASIS_NAMES = {"legendre": BasisKind.LEGENDRE, "chebyshev": BasisKind.CHEBYSHEV, "haar": BasisKind.HAAR}


@dataclass
class RunConfig:
    """Everything needed to simulate, reconstruct and evaluate one run.

    Defaults are the desk-scale preset used by the acceptance suite.
    """

    phantom: str = "cat"
    blobs: list[dict] = field(default_factory=list)  # explicit blob table, overrides ``phantom``
    N: int = 33
    pixel_size: float | None = None  # default 1/N
    images: int = 5000
    snr: float = 1.0 / 16.0
    seed: int = 0
    K: int = 12
    delta_omega: float = 2.5
    L_max: int = 64
    basis: str = "legendre"
    Q: int = 3
    # explicit "K:Q:iters:step, ..." (empty -> march.* parameters)
    schedule: str = "3:0:60:0.5, 5:0:60:0.45, 7:0:60:0.4, 7:1:60:0.35, 9:1:80:0.3, 9:2:80:0.27, 11:2:100:0.24, 11:3:100:0.2, 12:3:200:0.2"
    march_K_start: int = 3
    march_K_step: int = 2
    march_iters: int = 60
    march_step: float = 0.5
    march_decay: float = 0.5
    march_min_step: float = 0.1
    minibatch: int = 64
    directions: int = 256
    t_samples: int = 21
    t_sampling: str = "grid"
    n_psi: int = 64
    final_directions: int = 1024
    new_q_scale: float = 0.05
    t_temperature: float | None = 8.0
    output: str = "."

    # ------------------------------------------------------------------
    @property
    def h(self) -> float:
        return 1.0 / self.N if self.pixel_size is None else self.pixel_size

    def grid(self) -> ShellGrid:
        return ShellGrid.make(self.K, self.delta_omega, self.L_max)

    def basis_spec(self) -> ParamBasisSpec:
        return ParamBasisSpec(_BASIS_NAMES[self.basis], self.Q)

    def make_phantom(self) -> GaussianBlobPhantom:
        if not self.blobs:
            return load_preset(self.phantom)
        amps = [b["amplitude"] for b in self.blobs]
        sig = [b["sigma"] for b in self.blobs]
        traj = [[b.get(f"c{d}", (0.0, 0.0, 0.0)) for d in range(4)] for b in self.blobs]
        return GaussianBlobPhantom(np.array(amps), np.array(sig), np.array(traj, dtype=float))

    def marching(self) -> MarchingSchedule:
        if self.schedule.strip():
            stages = []
            for item in self.schedule.split(","):
                parts = item.strip().split(":")
                if len(parts) != 4:
                    raise ConfigError(f"schedule entry {item.strip()!r} is not K:Q:iters:step")
                stages.append(Stage(int(parts[0]), int(parts[1]), int(parts[2]), float(parts[3])))
            return MarchingSchedule(tuple(stages))
        return MarchingSchedule.alternating(
            self.march_K_start, self.K, self.Q, self.march_iters, self.march_step, self.march_decay, self.march_K_step, self.march_min_step
        )

    def recon_config(self) -> ReconConfig:
        return ReconConfig(
            schedule=self.marching(),
            basis_kind=_BASIS_NAMES[self.basis],
            minibatch=self.minibatch,
            n_directions=self.directions,
            n_t=self.t_samples,
            t_sampling=self.t_sampling,
            n_psi=self.n_psi,
            final_directions=self.final_directions,
            new_q_scale=self.new_q_scale,
            t_temperature=self.t_temperature,
            seed=self.seed,
        )

    def validate(self) -> "RunConfig":
        try:
            for name in ("N", "images", "K", "delta_omega", "snr", "minibatch", "directions", "t_samples", "n_psi", "final_directions", "L_max"):
                if not getattr(self, name) > 0:
                    raise ConfigError(f"{name} must be positive")
            if self.pixel_size is not None and not self.pixel_size > 0:
                raise ConfigError("pixel_size must be positive")
            if self.Q < 0 or self.seed < 0:
                raise ConfigError("Q and seed must be non-negative")
            if self.basis not in _BASIS_NAMES:
                raise ConfigError(f"basis must be one of {sorted(_BASIS_NAMES)}")
            grid = self.grid()
            grid.check_nyquist(self.h)
            sched = self.marching()
            if sched.Q_max != self.Q or sched.K_max > self.K:
                raise ConfigError("schedule must end at the configured Q and stay within K shells")
            self.recon_config().validate(grid)
            self.make_phantom()
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return self

    # ------------------------------------------------------------------
    def to_text(self) -> str:
        lines = ["# hypermol run configuration"]
        for f in dataclasses.fields(self):
            if f.name == "blobs":
                continue
            v = getattr(self, f.name)
            if v is None:
                continue
            lines.append(f"{_key_of(f.name)} = {v!r}" if isinstance(v, float) else f"{_key_of(f.name)} = {v}")
        for i, b in enumerate(self.blobs):
            for k, v in b.items():
                val = ", ".join(repr(float(x)) for x in v) if isinstance(v, (tuple, list)) else repr(float(v))
                lines.append(f"blob.{i}.{k} = {val}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        kwargs: dict = {}
        blobs: dict[int, dict] = {}
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            m = re.fullmatch(r"blob\.(\d+)\.(amplitude|sigma|c[0-3])", key)
            if m:
                vals = [float(x) for x in value.split(",")]
                blob = blobs.setdefault(int(m.group(1)), {})
                if m.group(2) in ("amplitude", "sigma"):
                    if len(vals) != 1:
                        raise ConfigError(f"line {lineno}: {key} takes one number")
                    blob[m.group(2)] = vals[0]
                else:
                    if len(vals) != 3:
                        raise ConfigError(f"line {lineno}: {key} takes three numbers")
                    blob[m.group(2)] = tuple(vals)
                continue
            name = _name_of(key)
            if name not in types or name == "blobs":
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            kwargs[name] = _convert(types[name], value, lineno, key)
        if blobs:
            if sorted(blobs) != list(range(len(blobs))):
                raise ConfigError("blob indices must be 0, 1, 2, ... without gaps")
            for i, b in blobs.items():
                if "amplitude" not in b or "sigma" not in b:
                    raise ConfigError(f"blob {i} needs amplitude and sigma")
            kwargs["blobs"] = [blobs[i] for i in range(len(blobs))]
        return cls(**kwargs).validate()

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.from_text(Path(path).read_text())


def _key_of(name: str) -> str:
    return name.replace("march_", "march.", 1) if name.startswith("march_") else name


def _name_of(key: str) -> str:
    return key.replace("march.", "march_", 1) if key.startswith("march.") else key


def _convert(typ: str, value: str, lineno: int, key: str):
    try:
        if "int" in typ:
            return int(value)
        if "float" in typ:
            return None if value.lower() == "none" else float(value)
        return value
    except ValueError:
        raise ConfigError(f"line {lineno}: bad value {value!r} for {key}") from None
