"""Maximum-likelihood homodyne tomography with the RrhoR fixed-point iteration."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DomainError, NumericalError
from .fock import DensityOperator, fock_wavefunctions, loss_channel_adjoint, to_json, trace_distance
from .homodyne import HomodyneDataset

__all__ = [
    "DEFAULT_EDGES",
    "BinnedData",
    "PovmSet",
    "MleResult",
    "bin_dataset",
    "build_povm",
    "rrr_step",
    "log_likelihood",
    "mle_reconstruct",
]

# 120 uniform bins on [-6, 6]; the two open-ended bins are implicit.
DEFAULT_EDGES = np.linspace(-6.0, 6.0, 121)
GL_NODES = 32
PROB_FLOOR = 1e-300


@dataclass(frozen=True)
class BinnedData:
    """Counts per phase over bins ``(-inf, e0], (e0, e1], ..., (e_last, inf)``."""

    phases: tuple
    bin_edges: np.ndarray
    counts: np.ndarray

    @property
    def n_bins(self) -> int:
        return self.bin_edges.size + 1

    def totals(self) -> np.ndarray:
        return self.counts.sum(axis=1)


def bin_dataset(dataset: HomodyneDataset, bin_edges=DEFAULT_EDGES, phases=None) -> BinnedData:
    """Histogram each phase; a sample equal to an edge goes to the bin that edge closes."""
    edges = np.asarray(bin_edges, dtype=float)
    if edges.ndim != 1 or np.any(np.diff(edges) <= 0):
        raise DomainError("bin edges must be strictly increasing")
    phases = tuple(dataset.phases if phases is None else phases)
    counts = np.zeros((len(phases), edges.size + 1), dtype=np.int64)
    for i, theta in enumerate(phases):
        idx = np.searchsorted(edges, dataset.samples_at(theta), side="left")
        counts[i] = np.bincount(idx, minlength=edges.size + 1)
    return BinnedData(phases, edges, counts)


def _tail_limit(dim: int) -> float:
    # beyond the classical turning point of |dim-1> by a wide margin
    return float(np.sqrt(2 * dim + 1) + 8.0)


def _interval_gram(a: float, b: float, dim: int) -> np.ndarray:
    """``G_mk = integral_a^b phi_m phi_k dx`` with composite Gauss-Legendre.

    Infinite ends are cut where every ``phi_m`` (m < dim) is negligible.
    Long intervals are split into unit-length panels of ``GL_NODES`` nodes.
    """
    lim = _tail_limit(dim)
    a = max(a, -lim)
    b = min(b, lim)
    if b <= a:
        return np.zeros((dim, dim))
    panels = max(1, int(np.ceil(b - a)))
    nodes, weights = np.polynomial.legendre.leggauss(GL_NODES)
    cuts = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(cuts)
    mid = 0.5 * (cuts[1:] + cuts[:-1])
    x = (mid[:, None] + half[:, None] * nodes[None, :]).ravel()
    w = (half[:, None] * weights[None, :]).ravel()
    phi = fock_wavefunctions(dim, x)
    return (phi * w) @ phi.T


@dataclass(frozen=True)
class PovmSet:
    """``elements[t, j]`` is the projector for phase ``t`` and bin ``j``."""

    phases: tuple
    bin_edges: np.ndarray
    dim: int
    eta: float
    elements: np.ndarray

    def completeness_error(self) -> float:
        eye = np.eye(self.dim)
        return float(max(np.max(np.abs(self.elements[t].sum(axis=0) - eye)) for t in range(len(self.phases))))

    def probabilities(self, rho) -> np.ndarray:
        """``Tr[rho Pi]`` for every element, shape (phases, bins)."""
        mat = rho.mat if isinstance(rho, DensityOperator) else np.asarray(rho)
        return np.real(np.einsum("tjab,ba->tj", self.elements, mat))


def build_povm(phases, bin_edges=DEFAULT_EDGES, dim: int = 15, eta: float = 1.0) -> PovmSet:
    """Binned rotated-quadrature projectors.

    ``<m|Pi_{theta,j}|k> = exp(i (m - k) theta) int_bin phi_m phi_k dx``;
    with ``eta < 1`` each element is pulled back through the loss channel.
    """
    if dim > 100:
        raise DomainError("dim must be <= 100")
    edges = np.asarray(bin_edges, dtype=float)
    if edges.ndim != 1 or np.any(np.diff(edges) <= 0):
        raise DomainError("bin edges must be strictly increasing")
    bounds = np.concatenate([[-np.inf], edges, [np.inf]])
    grams = np.stack([_interval_gram(lo, hi, dim) for lo, hi in zip(bounds[:-1], bounds[1:])])
    k = np.arange(dim)
    elements = np.empty((len(phases), grams.shape[0], dim, dim), dtype=complex)
    for t, theta in enumerate(phases):
        ph = np.exp(1j * np.deg2rad(theta) * k)
        elements[t] = ph[None, :, None] * grams * ph.conj()[None, None, :]
    if eta < 1.0:
        elements = loss_channel_adjoint(elements, eta)
    povm = PovmSet(tuple(float(p) for p in phases), edges, dim, float(eta), elements)
    err = povm.completeness_error()
    if err > 1e-6:
        raise DomainError(f"POVM incomplete by {err:.2e}; widen the bin edges")
    return povm


def log_likelihood(counts, probs) -> float:
    return float(np.sum(counts * np.log(np.maximum(probs, PROB_FLOOR))))


def rrr_step(rho, frequencies, povm: PovmSet) -> DensityOperator:
    """One normalized ``R rho R`` update for the given relative frequencies."""
    mat = rho.mat if isinstance(rho, DensityOperator) else np.asarray(rho)
    probs = np.maximum(povm.probabilities(mat), PROB_FLOOR)
    ratio = np.asarray(frequencies) / probs
    r_op = np.einsum("tj,tjab->ab", ratio, povm.elements)
    new = r_op @ mat @ r_op
    new = 0.5 * (new + new.conj().T)
    return DensityOperator(new / np.real(np.trace(new)))


@dataclass(frozen=True)
class MleResult:
    rho: DensityOperator
    loglik_trace: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False

    def to_json(self) -> str:
        return to_json(
            self.rho,
            loglik_trace=list(self.loglik_trace),
            iterations=self.iterations,
            converged=self.converged,
        )


def mle_reconstruct(data: BinnedData, povm: PovmSet, max_iter: int = 2000, tol: float = 1e-9) -> MleResult:
    """Iterate ``rho <- N[R rho R]`` from the maximally mixed state.

    Stops when the trace distance between successive iterates falls below
    ``tol`` or after ``max_iter`` updates. The log-likelihood of every
    iterate (including the start) is recorded.
    """
    if tuple(data.phases) != tuple(povm.phases):
        raise ContractError("data and POVM phases differ", field="phases")
    if data.bin_edges.shape != povm.bin_edges.shape or np.any(data.bin_edges != povm.bin_edges):
        raise ContractError("data and POVM bin edges differ", field="bin_edges")
    counts = np.asarray(data.counts, dtype=float)
    total = counts.sum()
    if total <= 0:
        raise ContractError("no counts to reconstruct from", field="counts")
    freqs = counts / total
    rho = DensityOperator.maximally_mixed(povm.dim)
    trace = [log_likelihood(counts, povm.probabilities(rho))]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        new = rrr_step(rho, freqs, povm)
        ll = log_likelihood(counts, povm.probabilities(new))
        if not np.isfinite(ll) or not np.all(np.isfinite(new.mat)):
            raise NumericalError(f"non-finite likelihood at iteration {it}", iteration=it)
        trace.append(ll)
        step = trace_distance(new, rho)
        rho = new
        if step < tol:
            converged = True
            break
    return MleResult(rho, trace, it, converged)


def read_mle_result(text: str) -> MleResult:
    from .fock import from_json

    doc = json.loads(text)
    rho = from_json(doc)
    if not isinstance(rho, DensityOperator):
        raise ContractError("expected a density operator", field="re")
    return MleResult(rho, doc.get("loglik_trace", []), doc.get("iterations", 0), doc.get("converged", False))
