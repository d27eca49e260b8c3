"""Generalized photon subtraction: source preparation, heralding and s0 fits.

The two squeezed vacua meet on a variable beam splitter of reflectivity
``R`` (transmissivity ``1 - R``). The signal input port carries squeezer 2
rotated by ``relative_phase`` (90 degrees gives a p-squeezed vacuum); the
idler input port carries squeezer 1 squeezed along x. Parametric gain maps
to squeezing as ``G = exp(2 r)``.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from .errors import ContractError, DomainError, ModelMismatchWarning, TruncationWarning, UnheraldableError
from .fock import (
    DEFAULT_DIM,
    LEAK_WARN,
    DensityOperator,
    FockState,
    TwoModeState,
    _normalized_hermite_table,
    beam_splitter,
    loss_channel_adjoint,
    rotate_phase,
    squeezed_vacuum,
    to_json,
)

__all__ = [
    "SNSPD_BANK",
    "DEFAULT_MODE_RATE",
    "GpsConfig",
    "S0Fit",
    "HeraldedState",
    "gain_to_squeezing",
    "build_input",
    "herald_ideal",
    "click_probabilities",
    "click_povm",
    "herald_realistic",
    "calibrate_mode_rate",
    "analytic_target",
    "extract_s0",
]

# (efficiency, dark-count rate in cps) for the four-element SNSPD array
SNSPD_BANK = ((0.75, 40.0), (0.67, 97.0), (0.75, 26.0), (0.62, 32.0))

# Calibrated so the default configuration at R = 0.4 with k = 3 clicks gives
# 12.2 cps; see calibrate_mode_rate().
DEFAULT_MODE_RATE = 29686.189225687704
UNHERALDABLE_PROB = 1e-15


def gain_to_squeezing(gain: float) -> float:
    if gain <= 0:
        raise DomainError(f"parametric gain must be positive, got {gain}")
    return 0.5 * math.log(gain)


@dataclass(frozen=True)
class GpsConfig:
    gain1: float = 2.11
    gain2: float = 2.05
    relative_phase: float = 90.0
    reflectivity: float = 0.4
    herald_n: int = 3
    dim: int = DEFAULT_DIM
    idler_efficiency: float = 1.0
    detector_bank: tuple = SNSPD_BANK
    window: float = 100e-9
    mode_rate: float = DEFAULT_MODE_RATE

    def __post_init__(self):
        bank = tuple((float(e), float(d)) for e, d in self.detector_bank)
        object.__setattr__(self, "detector_bank", bank)
        if self.gain1 <= 0 or self.gain2 <= 0:
            raise DomainError("gains must be positive")
        if not 0.0 <= self.reflectivity <= 1.0:
            raise DomainError(f"reflectivity must lie in [0, 1], got {self.reflectivity}")
        if not 0.0 <= self.idler_efficiency <= 1.0:
            raise DomainError("idler_efficiency must lie in [0, 1]")
        if any(not 0.0 <= e <= 1.0 for e, _ in bank) or any(d < 0 for _, d in bank):
            raise DomainError("detector efficiencies must lie in [0, 1] and dark rates be >= 0")
        if self.herald_n < 0 or self.dim < 2 or self.window < 0 or self.mode_rate < 0:
            raise DomainError("herald_n, dim, window and mode_rate out of range")

    @property
    def r1(self) -> float:
        return gain_to_squeezing(self.gain1)

    @property
    def r2(self) -> float:
        return gain_to_squeezing(self.gain2)

    def replace(self, **changes) -> "GpsConfig":
        data = asdict(self)
        data.update(changes)
        return GpsConfig(**data)

    def to_dict(self) -> dict:
        data = asdict(self)
        data["detector_bank"] = [list(p) for p in self.detector_bank]
        data["r1"] = self.r1
        data["r2"] = self.r2
        return data

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, data: dict) -> "GpsConfig":
        """Build from a mapping; unknown keys are rejected.

        ``r1``/``r2`` are derived from the gains; if present they must agree.
        """
        known = {f for f in cls.__dataclass_fields__} | {"r1", "r2"}
        for key in data:
            if key not in known:
                raise ContractError(f"unknown GpsConfig key '{key}'", field=key)
        kwargs = {k: v for k, v in data.items() if k not in ("r1", "r2")}
        try:
            cfg = cls(**kwargs)
        except (TypeError, ValueError) as exc:
            raise ContractError(str(exc), field=_first_bad_field(kwargs)) from exc
        for name in ("r1", "r2"):
            if name in data and abs(float(data[name]) - getattr(cfg, name)) > 1e-12:
                raise ContractError(f"'{name}' is inconsistent with the gain", field=name)
        return cfg

    @classmethod
    def from_json(cls, text: str) -> "GpsConfig":
        return cls.from_dict(json.loads(text))


def _first_bad_field(kwargs):
    probe = GpsConfig()
    for key, val in kwargs.items():
        try:
            probe.replace(**{key: val})
        except (TypeError, ValueError):
            return key
    return None


@dataclass(frozen=True)
class S0Fit:
    s0: float
    scale: float
    fidelity: float

    def as_dict(self):
        return {"s0": self.s0, "lambda": self.scale, "fit_fidelity": self.fidelity}


@dataclass(frozen=True)
class HeraldedState:
    state: DensityOperator
    herald_prob: float
    event_rate_cps: float
    s0_fit: S0Fit | None = None

    def with_fit(self, n: int) -> "HeraldedState":
        return HeraldedState(self.state, self.herald_prob, self.event_rate_cps, extract_s0(self.state, n))

    def meta(self) -> dict:
        return {
            "herald_prob": self.herald_prob,
            "event_rate_cps": self.event_rate_cps,
            "s0_fit": None if self.s0_fit is None else self.s0_fit.as_dict(),
        }

    def to_json(self) -> str:
        return to_json(self.state, meta=self.meta())


# ---------------------------------------------------------------------------
# Source and heralding


def build_input(cfg: GpsConfig) -> TwoModeState:
    """Two squeezed vacua after the variable beam splitter."""
    idler_in = squeezed_vacuum(cfg.r1, cfg.dim)
    signal_in = rotate_phase(squeezed_vacuum(cfg.r2, cfg.dim), cfg.relative_phase)
    return beam_splitter(TwoModeState.product(signal_in, idler_in), 1.0 - cfg.reflectivity)


def herald_ideal(state: TwoModeState, n: int):
    """Project the idler onto ``|n>``; returns ``(signal FockState, probability)``."""
    if not 0 <= n < state.dim:
        raise DomainError(f"herald count {n} must be below the truncation {state.dim}")
    vec = state.amps[:, n]
    prob = float(np.sum(np.abs(vec) ** 2))
    if prob < UNHERALDABLE_PROB:
        raise UnheraldableError(f"heralding on {n} photons has probability {prob:.3g}", prob)
    return FockState(vec / np.sqrt(prob)), prob


def _dark_probs(bank, window):
    return np.array([1.0 - math.exp(-rate * window) for _, rate in bank])


def click_probabilities(bank, window: float, dim: int) -> np.ndarray:
    """``P[k, n]``: probability of exactly ``k`` clicks given ``n`` photons.

    Photons are routed uniformly and independently to the detectors. A
    detector stays silent iff it has no dark click and none of the photons
    routed to it are registered. For a set ``Z`` of detectors,
    ``P(all of Z silent | n) = prod_{i in Z}(1 - d_i) * (1 - sum_{i in Z} eta_i / M)^n``;
    exact click sets follow by inclusion-exclusion over supersets.
    """
    eff = np.array([e for e, _ in bank])
    dark = _dark_probs(bank, window)
    m = len(bank)
    n = np.arange(dim)
    silent = {}
    for mask in range(1 << m):
        members = [i for i in range(m) if mask >> i & 1]
        base = 1.0 - eff[members].sum() / m
        silent[mask] = np.prod(1.0 - dark[members]) * np.power(base, n)
    full = (1 << m) - 1
    probs = np.zeros((m + 1, dim))
    for clicked in range(1 << m):
        quiet = full ^ clicked
        exact = np.zeros(dim)
        # supersets Z of the quiet set: Z = quiet | S for S subset of clicked
        sub = clicked
        while True:
            z = quiet | sub
            exact += (-1) ** bin(sub).count("1") * silent[z]
            if sub == 0:
                break
            sub = (sub - 1) & clicked
        probs[bin(clicked).count("1")] += exact
    return probs


def click_povm(bank, window: float, k: int, dim: int) -> np.ndarray:
    """Diagonal POVM element (as a matrix) for exactly ``k`` clicks."""
    if not 0 <= k <= len(bank):
        raise DomainError(f"click count must lie in [0, {len(bank)}], got {k}")
    return np.diag(click_probabilities(bank, window, dim)[k])


def herald_realistic(cfg: GpsConfig, k: int, state: TwoModeState | None = None) -> HeraldedState:
    """Herald on exactly ``k`` clicks of the detector array.

    The idler first passes a pure-loss channel of ``cfg.idler_efficiency``;
    since the click POVM is diagonal, this is folded into the per-photon-
    number click probabilities.
    """
    if state is None:
        state = build_input(cfg)
    probs_k = np.diag(click_povm(cfg.detector_bank, cfg.window, k, cfg.dim))
    if cfg.idler_efficiency < 1.0:
        probs_k = np.real(np.diag(loss_channel_adjoint(np.diag(probs_k), cfg.idler_efficiency)))
    weights = np.clip(probs_k, 0.0, None)
    amps = state.amps
    unnorm = (amps * weights[None, :]) @ amps.conj().T
    prob = float(np.real(np.trace(unnorm)))
    if prob < UNHERALDABLE_PROB:
        raise UnheraldableError(f"{k} clicks have probability {prob:.3g}", prob)
    rho = DensityOperator(0.5 * (unnorm + unnorm.conj().T) / prob)
    return HeraldedState(rho, prob, prob * cfg.mode_rate)


def calibrate_mode_rate(cfg: GpsConfig, target_cps: float = 12.2, k: int | None = None) -> float:
    """Mode rate that makes ``cfg`` herald at ``target_cps``."""
    k = cfg.herald_n if k is None else k
    return target_cps / herald_realistic(cfg, k).herald_prob


# ---------------------------------------------------------------------------
# Analytic family and parameter extraction


def _target_amps(n: int, s0: float, scale: float, dim: int) -> np.ndarray:
    """Fock coefficients of ``H_n(lam x) exp(-(1+s0) lam^2 x^2 / 2)``.

    ``c_k = int phi_k(x) psi(x) dx``. After pulling out the combined
    Gaussian the integrand is a polynomial of degree ``k + n``, so
    Gauss-Hermite with ``dim + n`` nodes is exact up to rounding.
    """
    width = 0.5 * (1.0 + (1.0 + s0) * scale**2)
    nodes, weights = np.polynomial.hermite.hermgauss(dim + n + 1)
    x = nodes / np.sqrt(width)
    fock_poly = _normalized_hermite_table(dim, x)
    herm_poly = _normalized_hermite_table(n + 1, scale * x)[n]
    coeffs = fock_poly @ (weights * herm_poly) / np.sqrt(width)
    coeffs[(np.arange(dim) - n) % 2 == 1] = 0.0
    return coeffs


def analytic_target(n: int, s0: float, dim: int = DEFAULT_DIM, scale: float = 1.0) -> FockState:
    """Ideal GPS state ``phi_0(lam x)^s0 phi_n(lam x)``, renormalized in ``dim`` levels."""
    if not math.isfinite(s0):
        raise DomainError("s0 must be finite")
    if n < 0 or scale <= 0:
        raise DomainError("need n >= 0 and scale > 0")
    coeffs = _target_amps(n, s0, scale, dim)
    norm = np.linalg.norm(coeffs)
    if norm == 0:
        raise DomainError(f"target n={n} has no support below dim={dim}")
    leak = max(0.0, 1.0 - norm**2 / _untruncated_norm2(n, s0, scale))
    if leak > LEAK_WARN:
        warnings.warn(
            f"target n={n} s0={s0} loses {leak:.2e} of its norm at dim={dim}",
            TruncationWarning,
            stacklevel=2,
        )
    return FockState(coeffs / norm, leak)


def _untruncated_norm2(n, s0, scale):
    # int (h_n(lam x))^2 exp(-(1+s0) lam^2 x^2) dx with h_n the normalized Hermite
    nodes, weights = np.polynomial.hermite.hermgauss(n + 2)
    b = (1.0 + s0) * scale**2
    x = nodes / np.sqrt(b)
    h = _normalized_hermite_table(n + 1, scale * x)[n]
    return float(np.sum(weights * h**2) / np.sqrt(b))


def _overlap(state, target_amps) -> float:
    if isinstance(state, FockState):
        return float(abs(np.vdot(target_amps, state.amps)) ** 2)
    return float(np.real(np.vdot(target_amps, state.mat @ target_amps)))


FIT_S0_GRID = np.geomspace(1e-3, 10.0, 25)
FIT_SCALE_GRID = np.linspace(0.3, 3.0, 28)
FIT_S0_BOUNDS = (0.0, 50.0)
FIT_SCALE_BOUNDS = (0.05, 10.0)


def extract_s0(state, n: int) -> S0Fit:
    """Best-fit ``(s0, lambda)`` of the scaled ideal GPS state to ``state``.

    Maximizes the fidelity of ``Psi_{n,s0}(lam x)`` with ``state``: a coarse
    grid (log-spaced in s0), then bounded Nelder-Mead from the best grid
    point. Ties on the grid go to the smaller s0.

    For ``n <= 1`` the family depends on ``(1 + s0) lam^2`` only; the fit
    is then one-dimensional and reported with ``lam = 1`` whenever that
    gives ``s0 >= 0``.
    """
    dim = state.dim
    total = state.norm() ** 2 if isinstance(state, FockState) else state.trace()

    def infidelity(s0, scale):
        return 1.0 - _overlap(state, _target_coeffs(n, s0, scale, dim)) / total

    if n <= 1:

        def split(log_width):
            b = math.exp(log_width)
            return (b - 1.0, 1.0) if b >= 1.0 else (0.0, math.sqrt(b))

        res = minimize_scalar(
            lambda lw: infidelity(*split(lw)),
            bounds=(math.log(1e-3), math.log(500.0)),
            method="bounded",
            options={"xatol": 1e-12},
        )
        s0, scale = split(res.x)
        fit = S0Fit(s0, scale, 1.0 - infidelity(s0, scale))
    else:
        best = None
        for s0 in FIT_S0_GRID:
            for scale in FIT_SCALE_GRID:
                val = infidelity(s0, scale)
                if best is None or val < best[0] - 1e-12:
                    best = (val, s0, scale)
        res = minimize(
            lambda v: infidelity(v[0], v[1]),
            x0=np.array(best[1:]),
            method="Nelder-Mead",
            bounds=[FIT_S0_BOUNDS, FIT_SCALE_BOUNDS],
            options={"xatol": 1e-10, "fatol": 1e-15, "maxiter": 4000},
        )
        s0, scale = float(res.x[0]), float(res.x[1])
        fit = S0Fit(s0, scale, 1.0 - infidelity(s0, scale))
    if fit.fidelity < 0.9:
        warnings.warn(
            f"fit fidelity {fit.fidelity:.3f} < 0.9 for n={n}", ModelMismatchWarning, stacklevel=2
        )
    return fit


def _target_coeffs(n, s0, scale, dim):
    c = _target_amps(n, s0, scale, dim)
    return c / np.linalg.norm(c)
