"""Protocol parameters, fault thresholds, and quorum arithmetic.

All threshold math uses exact rational arithmetic: with gamma = 2/3 and
n = 3 the edge threshold n*(1-gamma) + f + 1 must come out exactly 2, which
float arithmetic does not guarantee.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from fractions import Fraction
from math import ceil


class ConfigError(ValueError):
    """Raised for infeasible or malformed protocol configurations."""


def parse_gamma(value) -> Fraction:
    """Parse a fairness parameter into an exact Fraction.

    Accepts Fractions, ints, strings like "2/3" or "0.8", and floats
    (converted via their decimal string, so 0.8 -> 4/5 exactly).
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise ConfigError(f"gamma must be a number, got {value!r}")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        if "/" in value:
            num, den = value.split("/", 1)
            return Fraction(int(num), int(den))
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(str(value))
    raise ConfigError(f"cannot parse gamma from {value!r}")


def check_thresholds(n: int, f: int, gamma: Fraction) -> None:
    """Validate the fault-tolerance constraint n > 4f/(2*gamma - 1)."""
    if not (Fraction(1, 2) < gamma <= 1):
        raise ConfigError(f"gamma must be in (1/2, 1], got {gamma}")
    if n < 1:
        raise ConfigError(f"replica count must be positive, got {n}")
    if f < 0:
        raise ConfigError(f"fault budget must be non-negative, got {f}")
    if Fraction(n) * (2 * gamma - 1) <= 4 * f:
        raise ConfigError(
            f"n={n}, f={f}, gamma={gamma} violates n > 4f/(2*gamma - 1)"
        )


def quorum_size(n: int, f: int, gamma) -> int:
    """Vertices referenced per round: (k-1)*f + 1 with k = ceil(4/(2*gamma-1)).

    For gamma = 1 this is k = 4, i.e. 3f+1 references.
    """
    g = parse_gamma(gamma)
    check_thresholds(n, f, g)
    k = ceil(Fraction(4) / (2 * g - 1))
    return (k - 1) * f + 1


def edge_threshold(n: int, f: int, gamma) -> Fraction:
    """Shaded/edge threshold tau = n*(1-gamma) + f + 1 (exact)."""
    g = parse_gamma(gamma)
    return Fraction(n) * (1 - g) + f + 1


def solid_threshold(n: int, f: int) -> int:
    """Solid support threshold tau_s = n - 2f."""
    return n - 2 * f


def meets(count: int, threshold) -> bool:
    """count >= threshold with exact comparison (threshold may be a Fraction)."""
    return Fraction(count) >= Fraction(threshold)


@dataclass
class SimConfig:
    """Parameters of one deterministic simulation run."""

    n: int
    f: int
    gamma: Fraction = Fraction(1)
    wave_len: int = 2
    seed: int = 0
    max_rounds: int = 40
    delivery_model: str = "uniform"  # "uniform" or "lockstep"
    delay_min: int = 1
    delay_max: int = 6
    self_reference: bool = True  # ablation switch; correct replicas self-ref
    batch_wire: str = ""  # "", "json" or "binary": round-trip every batch on the wire
    task_slots: int = 4  # concurrent fairness task slots for replays

    def __post_init__(self) -> None:
        self.gamma = parse_gamma(self.gamma)
        check_thresholds(self.n, self.f, self.gamma)
        if self.wave_len < 2:
            raise ConfigError(f"wave_len must be >= 2, got {self.wave_len}")
        if self.delivery_model not in ("uniform", "lockstep"):
            raise ConfigError(f"unknown delivery model {self.delivery_model!r}")
        if self.batch_wire not in ("", "json", "binary"):
            raise ConfigError(f"unknown batch wire format {self.batch_wire!r}")
        if not (0 <= self.seed < 2**64):
            raise ConfigError("seed must fit in 64 bits")

    @property
    def quorum(self) -> int:
        return quorum_size(self.n, self.f, self.gamma)

    @property
    def readiness(self) -> int:
        """Certificates a replica waits for before proposing the next round.

        The fairness threshold only needs (k-1)f+1 references, but waiting for
        n-f (the base DAG's rule) keeps the DAG connected when f is small; at
        f=0 the quorum alone collapses to one vertex and the DAG would
        degenerate into disconnected per-replica chains.
        """
        return max(self.quorum, self.n - self.f)

    @property
    def tau(self) -> Fraction:
        return edge_threshold(self.n, self.f, self.gamma)

    @property
    def tau_s(self) -> int:
        return solid_threshold(self.n, self.f)

    def to_dict(self) -> dict:
        d = {fld.name: getattr(self, fld.name) for fld in fields(self)}
        d["gamma"] = str(self.gamma)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        known = {fld.name for fld in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)
