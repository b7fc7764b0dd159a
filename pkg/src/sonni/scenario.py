"""Scenario configuration: parameters, seed derivation, validation, INI files."""
from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass
from pathlib import Path

import numpy as np

LEGACY = "legacy"
SONNI = "sonni"

# stable small integers for seed derivation
_STREAMS = {"input": 1, "model": 2, "client": 3, "provider": 4, "server": 5}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Scenario:
    slots: int = 1024
    d: int = 1000
    m: int = 24
    degree: int = 3
    input_range: tuple = (-1.0, 1.0)
    coeff_range: tuple = (-1.0, 1.0)
    quant_step: float = 1e-3
    encrypt_noise: float = 1e-9
    op_noise: float = 1e-9
    r_min: float = 0.1
    mode: str = SONNI
    server_strategy: str = "honest"
    provider_strategy: str = "honest"
    client_strategy: str = "honest"
    k: int = 1
    seed: int = 0
    round: int = 0
    boundary_avoidance: bool = True
    debug_payloads: bool = False

    @property
    def width(self) -> int:
        return self.d + self.m

    @property
    def legacy(self) -> bool:
        return self.mode == LEGACY

    def replace(self, **changes) -> "Scenario":
        return dataclasses.replace(self, **changes)

    def seed_for(self, stream: str) -> int:
        """Seed derived from (master seed, stream, round); the model ignores the round."""
        rnd = 0 if stream == "model" else self.round
        ss = np.random.SeedSequence([self.seed, _STREAMS[stream], rnd])
        return int(ss.generate_state(1, np.uint64)[0])

    def seeds(self) -> dict:
        return {name: self.seed_for(name) for name in _STREAMS}

    def noise_bound(self) -> float:
        return analytic_noise_bound(self)

    def validate(self) -> "Scenario":
        if self.slots < 1 or self.slots & (self.slots - 1):
            raise ConfigError(f"slots must be a power of two (got {self.slots})")
        if self.mode not in (LEGACY, SONNI):
            raise ConfigError(f"mode must be '{LEGACY}' or '{SONNI}' (got {self.mode!r})")
        if self.d < 0 or self.m < 0:
            raise ConfigError("d and m must be non-negative")
        if self.legacy and self.m != 0:
            raise ConfigError("legacy mode carries no canary slots: m must be 0")
        if not self.legacy and self.m < 1:
            raise ConfigError("sonni mode needs m >= 1 canary slots")
        if self.width > self.slots:
            raise ConfigError(f"d+m <= N violated: {self.d}+{self.m} > {self.slots}")
        if self.degree < 1:
            raise ConfigError("model degree must be >= 1")
        if not 0 < self.r_min <= 1:
            raise ConfigError("r_min must lie in (0, 1]")
        if self.quant_step <= 0:
            raise ConfigError("quantization step must be positive")
        for lo, hi in (self.input_range, self.coeff_range):
            if not lo < hi:
                raise ConfigError(f"empty range ({lo}, {hi})")
        bound = self.noise_bound()
        if not self.quant_step > 2 * bound:
            raise ConfigError(
                f"quantization step must exceed twice the noise bound: "
                f"{self.quant_step:g} <= 2 * {bound:g}")
        return self


def _shuffle_bound(m: int, eta0: float, sigma: float) -> float:
    # per step the moved value gains 2 sigma and lands on a zero slot whose own
    # bound is at most eta0 + i*sigma, so the worst slot grows additively
    bound = eta0
    for i in range(m):
        bound += eta0 + (i + 3) * sigma
    return bound


def analytic_noise_bound(sc: Scenario) -> float:
    """Worst-case |payload - ideal| on the masked result ciphertext."""
    eta0, sigma = sc.encrypt_noise, sc.op_noise
    if sc.legacy:
        in_noise = eta0
    else:
        in_noise = _shuffle_bound(sc.m, eta0, sigma) + eta0
    x_mag = max(abs(v) for v in sc.input_range) + in_noise
    c_mag = max(abs(v) for v in sc.coeff_range) + eta0
    acc_noise, acc_mag = eta0, c_mag
    for _ in range(sc.degree):
        acc_noise = acc_noise * x_mag + in_noise * acc_mag + acc_noise * in_noise + sigma
        acc_mag = acc_mag * x_mag + sigma
        acc_noise += eta0
        acc_mag += c_mag
    if sc.legacy:
        return acc_noise
    return acc_noise + sigma  # plaintext mask with |rand| <= 1


def _parse_range(text: str) -> tuple:
    lo, hi = (float(v) for v in text.replace(",", " ").split())
    return (lo, hi)


_FIELD_SECTIONS = {
    "slots": "scenario", "d": "scenario", "m": "scenario", "degree": "scenario",
    "mode": "scenario", "k": "scenario", "round": "scenario",
    "input_range": "scenario", "coeff_range": "scenario",
    "quant_step": "protocol", "r_min": "protocol", "boundary_avoidance": "protocol",
    "encrypt_noise": "noise", "op_noise": "noise",
    "server_strategy": "strategy", "provider_strategy": "strategy",
    "client_strategy": "strategy",
    "seed": "seeds", "debug_payloads": "output",
}


def _coerce(name: str, raw: str):
    default = getattr(Scenario, name)
    if name.endswith("_range"):
        return _parse_range(raw)
    if isinstance(default, bool):
        return raw.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw.strip()


def parse_assignments(pairs) -> dict:
    """Turn ``["d=10", "input_range=-2 2"]`` into typed Scenario overrides."""
    values = {}
    for pair in pairs or ():
        key, sep, raw = pair.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or key not in _FIELD_SECTIONS:
            raise ConfigError(f"expected FIELD=VALUE with a scenario field, got {pair!r}")
        try:
            values[key] = _coerce(key, raw)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}") from None
    return values


def load_scenario(path, **overrides) -> Scenario:
    parser = configparser.ConfigParser()
    if not parser.read(path):
        raise ConfigError(f"cannot read config {path}")
    values = {}
    known = set(_FIELD_SECTIONS)
    for section in parser.sections():
        for key, raw in parser.items(section):
            if key not in known:
                raise ConfigError(f"unknown key [{section}] {key}")
            values[key] = _coerce(key, raw)
    values.update({k: v for k, v in overrides.items() if v is not None})
    return Scenario(**values)


def dump_scenario(sc: Scenario, path) -> None:
    parser = configparser.ConfigParser()
    for name, section in _FIELD_SECTIONS.items():
        if not parser.has_section(section):
            parser.add_section(section)
        value = getattr(sc, name)
        if isinstance(value, tuple):
            value = f"{value[0]!r} {value[1]!r}"
        parser.set(section, name, str(value))
    with open(Path(path), "w") as fh:
        parser.write(fh)
