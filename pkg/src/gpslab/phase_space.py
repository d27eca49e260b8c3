"""Wigner functions, quadrature marginals and negativity diagnostics.

Wigner functions use the convention ``integral W dx dp = 1`` with
``x = (a + a^dag)/sqrt(2)``, so the vacuum is ``exp(-x^2 - p^2) / pi`` and
``W(0, 0) = (-1)^n / pi`` for ``|n>``. Quadrature angles are in degrees,
``x_theta = x cos(theta) + p sin(theta)``.
"""

from __future__ import annotations

import io
import json
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .errors import GridWarning
from .fock import DensityOperator, FockState, fock_wavefunctions

__all__ = [
    "GridAxis",
    "WignerGrid",
    "MarginalDistribution",
    "NegativityMetrics",
    "DEFAULT_AXIS",
    "wigner",
    "wigner_values",
    "marginal",
    "negativity_metrics",
    "phase_averaged_marginal",
    "fringe_contrast",
    "central_extremum_contrast",
    "fringe_phase",
]

DIP_THRESHOLD = 1e-3
MARGINAL_CLIP = -1e-12
_CHUNK = 16384


@dataclass(frozen=True)
class GridAxis:
    min: float
    max: float
    n: int

    @property
    def points(self) -> np.ndarray:
        return np.linspace(self.min, self.max, self.n)

    @property
    def step(self) -> float:
        return (self.max - self.min) / (self.n - 1)

    @property
    def span(self) -> float:
        return self.max - self.min

    def as_dict(self):
        return {"min": self.min, "max": self.max, "n": self.n}


DEFAULT_AXIS = GridAxis(-7.0, 7.0, 281)


def _as_density(state):
    return state.density() if isinstance(state, FockState) else state


@dataclass(frozen=True)
class WignerGrid:
    """``values[i, j] = W(x_axis[i], p_axis[j])``."""

    x_axis: GridAxis
    p_axis: GridAxis
    values: np.ndarray

    def total(self) -> float:
        return float(self.values.sum() * self.x_axis.step * self.p_axis.step)

    def to_json(self) -> str:
        return json.dumps(
            {
                "x_axis": self.x_axis.as_dict(),
                "p_axis": self.p_axis.as_dict(),
                "convention": "x=(a+a^dag)/sqrt2, integral W dx dp = 1, W_vac(0,0)=1/pi",
                "values": self.values.tolist(),
            }
        )

    def to_csv(self) -> str:
        xs, ps = np.meshgrid(self.x_axis.points, self.p_axis.points, indexing="ij")
        buf = io.StringIO()
        buf.write("x,p,w\n")
        for x, p, w in zip(xs.ravel().tolist(), ps.ravel().tolist(), self.values.ravel().tolist()):
            buf.write(f"{x!r},{p!r},{w!r}\n")
        return buf.getvalue()

    def cut(self, theta_deg: float = 0.0, points: int | None = None):
        """Linear interpolation of W along the line through the origin."""
        half = min(abs(self.x_axis.min), abs(self.x_axis.max), abs(self.p_axis.min), abs(self.p_axis.max))
        points = points or max(self.x_axis.n, self.p_axis.n)
        t = np.linspace(-half, half, points)
        th = np.deg2rad(theta_deg)
        # snap tiny trig residue so axis-aligned cuts hit grid nodes exactly
        c, s = np.round(np.cos(th), 15), np.round(np.sin(th), 15)
        pts = np.column_stack([np.clip(t * c, self.x_axis.min, self.x_axis.max),
                               np.clip(t * s, self.p_axis.min, self.p_axis.max)])
        interp = RegularGridInterpolator((self.x_axis.points, self.p_axis.points), self.values)
        return t, interp(pts)


@dataclass(frozen=True)
class MarginalDistribution:
    theta: float
    x: np.ndarray
    pdf: np.ndarray

    def integral(self) -> float:
        return float(np.trapezoid(self.pdf, self.x))

    def mean(self) -> float:
        return float(np.trapezoid(self.x * self.pdf, self.x))

    def variance(self) -> float:
        mu = self.mean()
        return float(np.trapezoid((self.x - mu) ** 2 * self.pdf, self.x))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# theta_deg={float(self.theta)!r}\n")
        buf.write("x,pdf\n")
        for x, p in zip(self.x.tolist(), self.pdf.tolist()):
            buf.write(f"{x!r},{p!r}\n")
        return buf.getvalue()


def wigner_values(rho, x, p) -> np.ndarray:
    """Wigner function at arbitrary (broadcast-compatible) points.

    Uses the stable two-index recurrence for the Fock-basis kernels
    ``W_{|m><n|}``, which are proportional to
    ``(2 alpha)^(n-m) exp(-2|alpha|^2) L_m^(n-m)(4|alpha|^2)`` with
    ``alpha = (x + i p)/sqrt(2)``. Points are processed in fixed-size
    chunks so the result does not depend on memory layout.
    """
    rho = _as_density(rho)
    x, p = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(p, dtype=float))
    shape = x.shape
    flat_x = x.ravel()
    flat_p = p.ravel()
    out = np.empty(flat_x.size)
    for start in range(0, flat_x.size, _CHUNK):
        stop = start + _CHUNK
        alpha = (flat_x[start:stop] + 1j * flat_p[start:stop]) / np.sqrt(2.0)
        out[start:stop] = _wigner_chunk(rho.mat, alpha)
    return out.reshape(shape)


def _wigner_chunk(mat, alpha):
    dim = mat.shape[0]
    two_a = 2.0 * alpha
    two_ac = np.conj(two_a)
    row = np.empty((dim, alpha.size), dtype=complex)
    # row m holds W_{|m><n|} for n >= m
    row[0] = np.exp(-2.0 * np.abs(alpha) ** 2) / np.pi
    w = np.real(mat[0, 0]) * row[0].real
    for n in range(1, dim):
        row[n] = two_a * row[n - 1] / np.sqrt(n)
        w += 2.0 * np.real(mat[0, n] * row[n])
    for m in range(1, dim):
        prev_diag = row[m].copy()
        row[m] = (two_ac * prev_diag - np.sqrt(m) * row[m - 1]) / np.sqrt(m)
        w += np.real(mat[m, m]) * row[m].real
        upper = prev_diag
        for n in range(m + 1, dim):
            nxt = (two_a * row[n - 1] - np.sqrt(m) * upper) / np.sqrt(n)
            upper = row[n].copy()
            row[n] = nxt
            w += 2.0 * np.real(mat[m, n] * row[n])
    return w


def wigner(rho, x_axis: GridAxis = DEFAULT_AXIS, p_axis: GridAxis | None = None) -> WignerGrid:
    p_axis = p_axis or x_axis
    if min(x_axis.span, p_axis.span) < 4:
        warnings.warn("grid span below 4 units; normalization check unreliable", GridWarning, stacklevel=2)
    xs, ps = np.meshgrid(x_axis.points, p_axis.points, indexing="ij")
    return WignerGrid(x_axis, p_axis, wigner_values(rho, xs, ps))


def marginal(rho, theta: float, x=None) -> MarginalDistribution:
    """Quadrature distribution ``p(x; theta) = <x_theta| rho |x_theta>``.

    With ``<m|x_theta> = exp(i m theta) phi_m(x)`` this is
    ``sum_{m,k} exp(-i (m - k) theta) rho_mk phi_m(x) phi_k(x)``.
    Values below -1e-12 are not expected; everything negative is clipped
    to zero and the result renormalized on the grid.
    """
    rho = _as_density(rho)
    x = np.linspace(-8.0, 8.0, 4001) if x is None else np.asarray(x, dtype=float)
    phi = fock_wavefunctions(rho.dim, x)
    ket = np.exp(1j * np.deg2rad(theta) * np.arange(rho.dim))[:, None] * phi
    pdf = np.real(np.sum(ket.conj() * (rho.mat @ ket), axis=0))
    if pdf.min() < MARGINAL_CLIP:
        warnings.warn(f"marginal dips to {pdf.min():.2e}", GridWarning, stacklevel=2)
    pdf = np.clip(pdf, 0.0, None)
    pdf = pdf / np.trapezoid(pdf, x)
    return MarginalDistribution(float(theta), x, pdf)


def phase_averaged_marginal(rho, x=None) -> MarginalDistribution:
    """Average of ``p(x; theta)`` over all phases: ``sum_m rho_mm phi_m(x)^2``."""
    rho = _as_density(rho)
    x = np.linspace(-8.0, 8.0, 4001) if x is None else np.asarray(x, dtype=float)
    phi = fock_wavefunctions(rho.dim, x)
    pdf = np.real(np.diag(rho.mat)) @ phi**2
    pdf = np.clip(pdf, 0.0, None)
    return MarginalDistribution(float("nan"), x, pdf / np.trapezoid(pdf, x))


def fringe_contrast(rho, theta: float, x=None) -> float:
    """Phase-resolved fringe visibility at angle ``theta``.

    Total-variation distance between ``p(x; theta)`` and the phase-averaged
    marginal. Zero for any Fock-diagonal state, approaching 1 for strongly
    phase-sensitive (cat-like) interference.
    """
    x = np.linspace(-8.0, 8.0, 4001) if x is None else np.asarray(x, dtype=float)
    p_theta = marginal(rho, theta, x).pdf
    p_avg = phase_averaged_marginal(rho, x).pdf
    return 0.5 * float(np.trapezoid(np.abs(p_theta - p_avg), x))


def fringe_phase(rho, phases=(0.0, 30.0, 60.0, 90.0, 120.0, 150.0)) -> float:
    """Phase (from ``phases``) with the largest fringe contrast."""
    vals = [fringe_contrast(rho, th) for th in phases]
    return float(phases[int(np.argmax(vals))])


def central_extremum_contrast(dist: MarginalDistribution) -> float:
    """``(max - min) / (max + min)`` over the three extrema nearest x = 0."""
    pdf = dist.pdf
    idx = [
        i for i in range(1, pdf.size - 1)
        if (pdf[i] > pdf[i - 1] and pdf[i] > pdf[i + 1]) or (pdf[i] < pdf[i - 1] and pdf[i] < pdf[i + 1])
    ]
    if len(idx) < 3:
        return 0.0
    idx = sorted(idx, key=lambda i: abs(dist.x[i]))[:3]
    vals = pdf[idx]
    hi, lo = vals.max(), vals.min()
    return float((hi - lo) / (hi + lo)) if hi + lo > 0 else 0.0


@dataclass(frozen=True)
class NegativityMetrics:
    min_value: float
    negative_volume: float
    dip_count: int

    def as_dict(self):
        return {"min_value": self.min_value, "negative_volume": self.negative_volume, "dip_count": self.dip_count}


def count_dips(values, threshold: float = DIP_THRESHOLD) -> int:
    """Strict interior local minima below ``-threshold``."""
    v = np.asarray(values)
    inner = v[1:-1]
    mask = (inner < v[:-2]) & (inner < v[2:]) & (inner < -threshold)
    return int(np.count_nonzero(mask))


def negativity_metrics(grid: WignerGrid, cut_theta: float = 0.0, threshold: float = DIP_THRESHOLD) -> NegativityMetrics:
    if min(grid.x_axis.n, grid.p_axis.n) < 201 or min(grid.x_axis.span, grid.p_axis.span) < 8:
        warnings.warn("negativity metrics want >= 201x201 points over span >= 8", GridWarning, stacklevel=2)
    cell = grid.x_axis.step * grid.p_axis.step
    vals = grid.values
    _, cut = grid.cut(cut_theta)
    return NegativityMetrics(
        min_value=float(vals.min()),
        negative_volume=float(np.clip(-vals, 0.0, None).sum() * cell),
        dip_count=count_dips(cut, threshold),
    )
