"""Experiment configuration: flat key = value text with dotted section keys.

Grammar (one assignment per line, '#' comments):

    shape = sphere | harmonics
    shape.radius = 1.0            # sphere only
    shape.center = 0.0, 0.0, 0.0
    shape.constant = 0.8          # harmonics only
    shape.coeffs = (2, 0, 0.1); (3, 2, 0.05)
    pulse.r0 = 2.0
    pulse.R0 = 3.0
    pulse.kreg = 7
    pulse.amplitude = auto        # or a number
    epsilons = 0.02, 0.04, 0.08, 0.16
    shell.r_ff = 2.0
    shell.R_ff = 3.0
    freq.omega_max = 40.0
    freq.n_omega = 400
    time.t_max = 10.0
    time.n_t = 201
    time.t0 = 5.5
    bem.n_theta = 20
    bem.n_phi = 40
    output_dir = out
    workers = 1

Unknown keys are rejected with the offending key named.  The worker count
may be overridden by the SMALLSCAT_WORKERS environment variable.
"""

from __future__ import annotations

import hashlib
import os
import re
from dataclasses import dataclass, field

from .geometry import ShellRegion, StarShape
from .incident import ShellPulse


class ConfigError(ValueError):
    pass


_KNOWN_KEYS = {
    "shape", "shape.radius", "shape.center", "shape.constant", "shape.coeffs",
    "pulse.r0", "pulse.R0", "pulse.kreg", "pulse.amplitude", "pulse.center",
    "epsilons", "shell.r_ff", "shell.R_ff",
    "freq.omega_max", "freq.n_omega",
    "time.t_max", "time.n_t", "time.t0",
    "bem.n_theta", "bem.n_phi",
    "output_dir", "workers",
}

_DEFAULTS = {
    "shape": "sphere",
    "shape.radius": "1.0",
    "shape.center": "0.0, 0.0, 0.0",
    "shape.constant": "0.8",
    "shape.coeffs": "(2, 0, 0.10); (3, 2, 0.05)",
    "pulse.r0": "2.0",
    "pulse.R0": "3.0",
    "pulse.kreg": "7",
    "pulse.amplitude": "auto",
    "pulse.center": "0.0, 0.0, 0.0",
    "epsilons": "0.02, 0.04, 0.08, 0.16",
    "shell.r_ff": "2.0",
    "shell.R_ff": "3.0",
    "freq.omega_max": "40.0",
    "freq.n_omega": "400",
    "time.t_max": "10.0",
    "time.n_t": "201",
    "time.t0": "5.5",
    "bem.n_theta": "20",
    "bem.n_phi": "40",
    "output_dir": "out",
    "workers": "1",
}


@dataclass(frozen=True)
class ExperimentConfig:
    shape: StarShape
    pulse: ShellPulse
    epsilons: tuple[float, ...]
    shell: ShellRegion
    omega_max: float
    n_omega: int
    t_max: float
    n_t: int
    t0: float
    n_theta: int
    n_phi: int
    output_dir: str
    workers: int
    raw: tuple[tuple[str, str], ...] = field(default=(), repr=False)

    @property
    def t_star(self) -> float:
        """Arrival of the reflected wave at the outer observation radius."""
        return self.pulse.R0 + self.shell.outer

    def config_hash(self) -> str:
        canonical = "\n".join(f"{k} = {v}" for k, v in sorted(self.raw))
        return hashlib.sha256(canonical.encode()).hexdigest()[:12]


def _parse_floats(text: str, key: str) -> list[float]:
    try:
        return [float(tok) for tok in re.split(r"[,\s]+", text.strip()) if tok]
    except ValueError as exc:
        raise ConfigError(f"invalid numeric list for key '{key}': {text!r}") from exc


def _parse_coeffs(text: str, key: str):
    """Coefficient list '(l, m, c); (l, m, c)' (parentheses optional)."""
    out = []
    for chunk in re.split(r";", text):
        chunk = chunk.strip().strip("()")
        if not chunk:
            continue
        parts = [tok for tok in re.split(r"[,\s]+", chunk) if tok]
        if len(parts) != 3:
            raise ConfigError(f"invalid (l, m, c) triple in key '{key}': {chunk!r}")
        try:
            out.append((int(parts[0]), int(parts[1]), float(parts[2])))
        except ValueError as exc:
            raise ConfigError(f"invalid (l, m, c) triple in key '{key}': {chunk!r}") from exc
    return tuple(out)


def parse_config_text(text: str) -> ExperimentConfig:
    values = dict(_DEFAULTS)
    seen = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {stripped!r}")
        key, val = (part.strip() for part in stripped.split("=", 1))
        if key not in _KNOWN_KEYS:
            raise ConfigError(f"line {lineno}: unknown configuration key '{key}'")
        values[key] = val
        seen.append((key, val))

    def fnum(key):
        try:
            return float(values[key])
        except ValueError as exc:
            raise ConfigError(f"invalid number for key '{key}': {values[key]!r}") from exc

    def inum(key):
        try:
            return int(values[key])
        except ValueError as exc:
            raise ConfigError(f"invalid integer for key '{key}': {values[key]!r}") from exc

    kind = values["shape"].strip().lower()
    center = _parse_floats(values["shape.center"], "shape.center")
    if len(center) != 3:
        raise ConfigError("shape.center must be three numbers")
    try:
        if kind == "sphere":
            shape = StarShape(center=center, constant=fnum("shape.radius"))
        elif kind == "harmonics":
            shape = StarShape(center=center, constant=fnum("shape.constant"),
                              harmonics=_parse_coeffs(values["shape.coeffs"], "shape.coeffs"))
        else:
            raise ConfigError(f"unknown shape kind '{values['shape']}' (expected sphere | harmonics)")
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid shape.* configuration: {exc}") from exc

    amp = values["pulse.amplitude"].strip().lower()
    amplitude = None if amp in ("auto", "none", "") else fnum("pulse.amplitude")
    pcenter = _parse_floats(values["pulse.center"], "pulse.center")
    if len(pcenter) != 3:
        raise ConfigError("pulse.center must be three numbers")
    try:
        pulse = ShellPulse(r0=fnum("pulse.r0"), R0=fnum("pulse.R0"),
                           k_reg=inum("pulse.kreg"), amplitude=amplitude,
                           center=tuple(pcenter))
    except ValueError as exc:
        raise ConfigError(f"invalid pulse.* configuration: {exc}") from exc

    epsilons = tuple(_parse_floats(values["epsilons"], "epsilons"))
    if not epsilons:
        raise ConfigError("key 'epsilons' must list at least one scale")
    try:
        shell = ShellRegion(fnum("shell.r_ff"), fnum("shell.R_ff"))
    except ValueError as exc:
        raise ConfigError(f"invalid shell.* configuration: {exc}") from exc
    if max(epsilons) >= min(pulse.r0, shell.inner) / 4.0:
        raise ConfigError(
            f"key 'epsilons': max eps {max(epsilons)} must be < min(r0, r_ff)/4 "
            f"= {min(pulse.r0, shell.inner) / 4.0}")
    for key, lo in (("freq.n_omega", 1), ("time.n_t", 2), ("bem.n_theta", 4),
                    ("bem.n_phi", 4), ("workers", 1)):
        if inum(key) < lo:
            raise ConfigError(f"key '{key}' must be >= {lo}")
    if fnum("freq.omega_max") <= 0 or fnum("time.t_max") <= 0:
        raise ConfigError("freq.omega_max and time.t_max must be positive")

    workers = inum("workers")
    env_workers = os.environ.get("SMALLSCAT_WORKERS")
    if env_workers:
        try:
            workers = int(env_workers)
        except ValueError as exc:
            raise ConfigError(f"invalid SMALLSCAT_WORKERS value {env_workers!r}") from exc

    raw = tuple(sorted({**dict(_DEFAULTS), **dict(seen)}.items()))
    return ExperimentConfig(
        shape=shape, pulse=pulse, epsilons=epsilons, shell=shell,
        omega_max=fnum("freq.omega_max"), n_omega=inum("freq.n_omega"),
        t_max=fnum("time.t_max"), n_t=inum("time.n_t"), t0=fnum("time.t0"),
        n_theta=inum("bem.n_theta"), n_phi=inum("bem.n_phi"),
        output_dir=values["output_dir"], workers=workers, raw=raw,
    )


def parse_config_file(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            return parse_config_text(fh.read())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc


def default_config() -> ExperimentConfig:
    return parse_config_text("")
