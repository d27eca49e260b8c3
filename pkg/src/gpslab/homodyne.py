"""Synthetic phase-tagged homodyne data.

Samples are drawn by inverse-CDF from the quadrature marginal of the
state after a pure-loss channel modelling detector inefficiency. Each phase
gets its own child stream ``SeedSequence(seed).spawn(...)[i]`` of a PCG64
generator, so the record order is phase-major and fixed.
"""

from __future__ import annotations

import hashlib
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError
from .fock import FockState, loss_channel, to_json
from .phase_space import marginal

__all__ = [
    "DEFAULT_PHASES",
    "DEFAULT_SAMPLES_PER_PHASE",
    "SAMPLING_GRID",
    "RNG_ALGORITHM",
    "HomodyneDataset",
    "state_hash",
    "sample",
    "read_dataset",
]

DEFAULT_PHASES = (0.0, 30.0, 60.0, 90.0, 120.0, 150.0)
DEFAULT_SAMPLES_PER_PHASE = 20_000
SAMPLING_GRID = np.linspace(-8.0, 8.0, 4001)
RNG_ALGORITHM = "numpy-PCG64/SeedSequence-spawn-per-phase/inverse-cdf-linear"


@dataclass(frozen=True)
class HomodyneDataset:
    thetas: np.ndarray
    values: np.ndarray
    seed: int
    meta: dict = field(default_factory=dict)

    @property
    def phases(self) -> list:
        """Distinct phases in record order."""
        seen = []
        for th in self.thetas:
            if th not in seen:
                seen.append(float(th))
        return seen

    def samples_at(self, theta: float) -> np.ndarray:
        return self.values[self.thetas == theta]

    def __len__(self):
        return self.values.size

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# seed={self.seed}\n")
        buf.write(f"# eta_hd={float(self.meta.get('homodyne_efficiency', 1.0))!r}\n")
        for key in ("samples_per_phase", "state_hash", "rng"):
            if key in self.meta:
                buf.write(f"# {key}={self.meta[key]}\n")
        buf.write("theta_deg,x\n")
        for th, x in zip(self.thetas.tolist(), self.values.tolist()):
            buf.write(f"{th!r},{x!r}\n")
        return buf.getvalue()


def state_hash(rho) -> str:
    return hashlib.sha256(to_json(rho).encode()).hexdigest()


def _as_density(state):
    return state.density() if isinstance(state, FockState) else state


def _inverse_cdf(pdf, grid):
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (pdf[1:] + pdf[:-1]) * np.diff(grid))])
    cdf /= cdf[-1]
    # np.interp needs strictly increasing abscissae; drop flat stretches
    keep = np.concatenate([[True], np.diff(cdf) > 0])
    return cdf[keep], grid[keep]


def sample(rho, phases=DEFAULT_PHASES, n_per_phase: int = DEFAULT_SAMPLES_PER_PHASE, eta_hd: float = 1.0, seed: int = 0) -> HomodyneDataset:
    rho = _as_density(rho)
    lossy = loss_channel(rho, eta_hd)
    children = np.random.SeedSequence(seed).spawn(len(phases))
    thetas, values = [], []
    for theta, child in zip(phases, children):
        pdf = marginal(lossy, theta, SAMPLING_GRID).pdf
        cdf, xs = _inverse_cdf(pdf, SAMPLING_GRID)
        u = np.random.Generator(np.random.PCG64(child)).random(n_per_phase)
        values.append(np.interp(u, cdf, xs))
        thetas.append(np.full(n_per_phase, float(theta)))
    meta = {
        "state_hash": state_hash(rho),
        "homodyne_efficiency": float(eta_hd),
        "samples_per_phase": int(n_per_phase),
        "rng": RNG_ALGORITHM,
    }
    return HomodyneDataset(
        np.concatenate(thetas) if thetas else np.empty(0),
        np.concatenate(values) if values else np.empty(0),
        int(seed),
        meta,
    )


def read_dataset(text: str) -> HomodyneDataset:
    """Parse the ``theta_deg,x`` CSV contract (with ``# key=value`` comments)."""
    meta = {}
    rows = []
    header_seen = False
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition("=")
            meta[key.strip()] = val.strip()
            continue
        if not header_seen:
            if [c.strip() for c in line.split(",")] != ["theta_deg", "x"]:
                raise ContractError(f"line {lineno}: expected header 'theta_deg,x'", field="header")
            header_seen = True
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise ContractError(f"line {lineno}: expected 2 columns", field="theta_deg")
        try:
            th, x = float(parts[0]), float(parts[1])
        except ValueError:
            raise ContractError(f"line {lineno}: non-numeric value", field="x") from None
        if not (np.isfinite(th) and np.isfinite(x)):
            raise ContractError(f"line {lineno}: non-finite value", field="x")
        rows.append((th, x))
    if not header_seen:
        raise ContractError("missing header 'theta_deg,x'", field="header")
    if "seed" not in meta:
        raise ContractError("missing '# seed=' comment", field="seed")
    try:
        seed = int(meta["seed"])
    except ValueError:
        raise ContractError("seed is not an integer", field="seed") from None
    parsed = dict(meta)
    parsed.pop("seed")
    if "eta_hd" in parsed:
        parsed["homodyne_efficiency"] = float(parsed.pop("eta_hd"))
    if "samples_per_phase" in parsed:
        parsed["samples_per_phase"] = int(parsed["samples_per_phase"])
    arr = np.array(rows, dtype=float).reshape(-1, 2)
    return HomodyneDataset(arr[:, 0], arr[:, 1], seed, parsed)
