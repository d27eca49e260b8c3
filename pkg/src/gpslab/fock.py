"""Truncated Fock-space states and channels for one and two bosonic modes.

Quadrature convention: ``x = (a + a^dag) / sqrt(2)``, so the vacuum has
quadrature variance 1/2 and the number-state wavefunctions are

    phi_n(x) = H_n(x) exp(-x^2 / 2) / (pi^(1/4) sqrt(2^n n!)).

Amplitude index ``k`` always refers to the Fock level ``|k>``.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import gammaln

from .errors import DimensionMismatchError, DomainError, TruncationWarning

__all__ = [
    "DEFAULT_DIM",
    "MAX_HERMITE_ORDER",
    "FockState",
    "DensityOperator",
    "TwoModeState",
    "hermite",
    "fock_wavefunction",
    "fock_wavefunctions",
    "squeezed_vacuum",
    "rotate_phase",
    "beam_splitter",
    "loss_channel",
    "loss_channel_adjoint",
    "fidelity",
    "uhlmann_fidelity",
    "trace_distance",
    "quadrature_moments",
    "to_json",
    "from_json",
]

DEFAULT_DIM = 40
MAX_HERMITE_ORDER = 200
LEAK_WARN = 1e-3


def _frozen(arr):
    arr = np.array(arr, dtype=complex)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class FockState:
    """Pure single-mode state ``sum_k amps[k] |k>``.

    ``truncation_leak`` is the norm discarded when the state was built
    (1 - squared norm before renormalization); zero for exact states.
    """

    amps: np.ndarray
    truncation_leak: float = 0.0

    def __post_init__(self):
        amps = _frozen(self.amps)
        if amps.ndim != 1 or amps.size < 1:
            raise DomainError("FockState amplitudes must be a non-empty vector")
        object.__setattr__(self, "amps", amps)

    @property
    def dim(self) -> int:
        return self.amps.size

    @classmethod
    def basis(cls, n: int, dim: int = DEFAULT_DIM) -> "FockState":
        if not 0 <= n < dim:
            raise DomainError(f"Fock level {n} outside truncation {dim}")
        amps = np.zeros(dim, dtype=complex)
        amps[n] = 1.0
        return cls(amps)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))

    def normalize(self) -> "FockState":
        nrm = self.norm()
        if nrm == 0.0:
            raise DomainError("cannot normalize the zero vector")
        return FockState(self.amps / nrm, self.truncation_leak)

    def density(self) -> "DensityOperator":
        return DensityOperator(np.outer(self.amps, self.amps.conj()))

    def photon_distribution(self) -> np.ndarray:
        return np.abs(self.amps) ** 2


@dataclass(frozen=True)
class DensityOperator:
    """Mixed single-mode state as a ``dim x dim`` matrix in the Fock basis."""

    mat: np.ndarray

    def __post_init__(self):
        mat = _frozen(self.mat)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1] or mat.shape[0] < 1:
            raise DomainError("density matrix must be square and non-empty")
        object.__setattr__(self, "mat", mat)

    @property
    def dim(self) -> int:
        return self.mat.shape[0]

    @classmethod
    def from_pure(cls, state: FockState) -> "DensityOperator":
        return state.density()

    @classmethod
    def maximally_mixed(cls, dim: int) -> "DensityOperator":
        return cls(np.eye(dim) / dim)

    def trace(self) -> float:
        return float(np.real(np.trace(self.mat)))

    def normalize(self) -> "DensityOperator":
        return DensityOperator(self.mat / self.trace())

    def hermitian_defect(self) -> float:
        return float(np.max(np.abs(self.mat - self.mat.conj().T)))

    def min_eigenvalue(self) -> float:
        herm = 0.5 * (self.mat + self.mat.conj().T)
        return float(np.linalg.eigvalsh(herm)[0])

    def check(self, herm_tol=1e-10, trace_tol=1e-9, psd_tol=1e-8):
        """Raise ``DomainError`` unless Hermitian, unit-trace and PSD."""
        if self.hermitian_defect() > herm_tol:
            raise DomainError(f"not Hermitian (defect {self.hermitian_defect():.3g})")
        if abs(self.trace() - 1.0) > trace_tol:
            raise DomainError(f"trace {self.trace():.12g} != 1")
        if self.min_eigenvalue() < -psd_tol:
            raise DomainError(f"negative eigenvalue {self.min_eigenvalue():.3g}")
        return self

    def photon_distribution(self) -> np.ndarray:
        return np.real(np.diag(self.mat)).copy()

    def mean_photon_number(self) -> float:
        return float(np.dot(np.arange(self.dim), self.photon_distribution()))

    def truncate(self, dim: int) -> "DensityOperator":
        """Project onto the first ``dim`` levels (or zero-pad) and renormalize."""
        out = np.zeros((dim, dim), dtype=complex)
        m = min(dim, self.dim)
        out[:m, :m] = self.mat[:m, :m]
        return DensityOperator(out / np.real(np.trace(out)))


@dataclass(frozen=True)
class TwoModeState:
    """Pure two-mode state; ``amps[j, k]`` multiplies ``|j>_signal |k>_idler``."""

    amps: np.ndarray
    truncation_leak: float = field(default=0.0)

    def __post_init__(self):
        amps = _frozen(self.amps)
        if amps.ndim != 2 or amps.shape[0] != amps.shape[1]:
            raise DomainError("two-mode amplitudes must be a square matrix")
        object.__setattr__(self, "amps", amps)

    @property
    def dim(self) -> int:
        return self.amps.shape[0]

    @classmethod
    def product(cls, signal: FockState, idler: FockState) -> "TwoModeState":
        if signal.dim != idler.dim:
            raise DimensionMismatchError("per-mode truncations differ")
        leak = 1.0 - (1.0 - signal.truncation_leak) * (1.0 - idler.truncation_leak)
        return cls(np.outer(signal.amps, idler.amps), leak)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))

    def schmidt_coefficients(self) -> np.ndarray:
        return np.linalg.svd(self.amps, compute_uv=False)

    def schmidt_rank(self, tol: float = 1e-9) -> int:
        return int(np.sum(self.schmidt_coefficients() > tol))

    def reduced_signal(self) -> DensityOperator:
        return DensityOperator(self.amps @ self.amps.conj().T)

    def reduced_idler(self) -> DensityOperator:
        return DensityOperator((self.amps.T @ self.amps.conj()))


# ---------------------------------------------------------------------------
# Special functions


def hermite(n: int, x):
    """Physicists' Hermite polynomial ``H_n(x)`` by three-term recurrence."""
    if n < 0 or n > MAX_HERMITE_ORDER:
        raise DomainError(f"Hermite order must lie in [0, {MAX_HERMITE_ORDER}], got {n}")
    x = np.asarray(x, dtype=float)
    h_prev = np.ones_like(x)
    if n == 0:
        return h_prev if h_prev.ndim else float(h_prev)
    h = 2.0 * x
    for k in range(1, n):
        h_prev, h = h, 2.0 * x * h - 2.0 * k * h_prev
    return h if h.ndim else float(h)


def _normalized_hermite_table(dim: int, x):
    """Rows ``k`` hold ``H_k(x) / (pi^(1/4) sqrt(2^k k!))`` for k < dim.

    The normalized recurrence never forms ``2^k k!`` explicitly, which
    keeps it finite for large ``k``.
    """
    x = np.asarray(x, dtype=float)
    out = np.empty((dim,) + x.shape)
    out[0] = np.pi ** -0.25
    if dim > 1:
        out[1] = np.sqrt(2.0) * x * out[0]
    for k in range(1, dim - 1):
        out[k + 1] = np.sqrt(2.0 / (k + 1)) * x * out[k] - np.sqrt(k / (k + 1)) * out[k - 1]
    return out


def fock_wavefunctions(dim: int, x) -> np.ndarray:
    """All number-state wavefunctions ``phi_0 .. phi_{dim-1}`` on ``x``.

    Returns an array of shape ``(dim,) + x.shape``.
    """
    if dim - 1 > MAX_HERMITE_ORDER:
        raise DomainError(f"Fock order above {MAX_HERMITE_ORDER}")
    x = np.asarray(x, dtype=float)
    # Fold the Gaussian in before the recurrence to stay finite in the tails.
    table = np.empty((dim,) + x.shape)
    table[0] = np.pi ** -0.25 * np.exp(-0.5 * x**2)
    if dim > 1:
        table[1] = np.sqrt(2.0) * x * table[0]
    for k in range(1, dim - 1):
        table[k + 1] = np.sqrt(2.0 / (k + 1)) * x * table[k] - np.sqrt(k / (k + 1)) * table[k - 1]
    return table


def fock_wavefunction(n: int, x):
    """Harmonic-oscillator eigenfunction ``phi_n(x)``."""
    if n < 0 or n > MAX_HERMITE_ORDER:
        raise DomainError(f"Fock order must lie in [0, {MAX_HERMITE_ORDER}], got {n}")
    val = fock_wavefunctions(n + 1, x)[n]
    return val if np.ndim(val) else float(val)


# ---------------------------------------------------------------------------
# States and operations


def squeezed_vacuum(r: float, dim: int = DEFAULT_DIM) -> FockState:
    """Single-mode squeezed vacuum; ``r > 0`` squeezes x to variance e^{-2r}/2.

    Coefficients are ``c_2k = sech(r)^(1/2) (-tanh r)^k sqrt((2k)!) / (2^k k!)``,
    evaluated in the log domain. The state is renormalized after truncation
    and the discarded norm is recorded on the result.
    """
    if abs(r) > 3:
        raise DomainError(f"|r| must be <= 3, got {r}")
    amps = np.zeros(dim, dtype=complex)
    if r == 0:
        amps[0] = 1.0
        return FockState(amps)
    k = np.arange((dim + 1) // 2)
    t = np.tanh(abs(r))
    log_mag = (
        -0.5 * np.log(np.cosh(r))
        + k * np.log(t)
        + 0.5 * gammaln(2 * k + 1)
        - k * np.log(2.0)
        - gammaln(k + 1)
    )
    sign = np.where(k % 2 == 0, 1.0, -np.sign(r))
    amps[0::2] = sign * np.exp(log_mag)
    norm2 = float(np.sum(np.abs(amps) ** 2))
    leak = max(0.0, 1.0 - norm2)
    if leak > LEAK_WARN:
        warnings.warn(
            f"squeezed vacuum r={r} loses {leak:.2e} of its norm at dim={dim}",
            TruncationWarning,
            stacklevel=2,
        )
    return FockState(amps / np.sqrt(norm2), leak)


def _phase_factors(dim: int, degrees: float) -> np.ndarray:
    """``exp(-i k phi)`` for k < dim; exact for multiples of 90 degrees."""
    k = np.arange(dim)
    quarter = degrees / 90.0
    if float(quarter).is_integer():
        return (-1j) ** ((k * int(quarter)) % 4)
    return np.exp(-1j * k * np.deg2rad(degrees))


def rotate_phase(state, degrees: float):
    """Apply ``exp(-i phi n)`` to a ket or density operator."""
    if isinstance(state, FockState):
        return FockState(state.amps * _phase_factors(state.dim, degrees), state.truncation_leak)
    u = _phase_factors(state.dim, degrees)
    return DensityOperator(u[:, None] * state.mat * u.conj()[None, :])


@lru_cache(maxsize=32)
def _bs_blocks(dim: int, transmissivity: float, inverse: bool):
    """Image of every input ``|j, k>`` (j, k < dim) under the beam splitter.

    Returns a dict mapping ``(j, k)`` to the output amplitude vector over
    ``|m, j + k - m>``, m = 0 .. j + k. Built by applying the transformed
    creation operators one photon at a time, which is norm-stable.
    """
    t = np.sqrt(transmissivity)
    r = np.sqrt(1.0 - transmissivity)
    if inverse:
        r = -r
    # a^dag -> t a'^dag - r b'^dag ; b^dag -> r a'^dag + t b'^dag
    blocks = {(0, 0): np.array([1.0])}

    def create(vec, ca, cb):
        n = vec.size - 1
        m = np.arange(n + 1)
        out = np.zeros(n + 2)
        out[1:] += ca * np.sqrt(m + 1) * vec
        out[:-1] += cb * np.sqrt(n - m + 1) * vec
        return out

    for k in range(1, dim):
        blocks[(0, k)] = create(blocks[(0, k - 1)], r, t) / np.sqrt(k)
    for k in range(dim):
        for j in range(1, dim):
            blocks[(j, k)] = create(blocks[(j - 1, k)], t, -r) / np.sqrt(j)
    return blocks


def beam_splitter(state: TwoModeState, transmissivity: float, inverse: bool = False) -> TwoModeState:
    """Real-coupling beam splitter on (signal, idler).

    Heisenberg convention ``a_out = sqrt(T) a + sqrt(1-T) b`` and
    ``b_out = -sqrt(1-T) a + sqrt(T) b``. With ``inverse=True`` the coupling
    signs are swapped, undoing the forward map. Output components with a
    mode above the truncation are dropped; their weight is added to
    ``truncation_leak``.
    """
    if not 0.0 <= transmissivity <= 1.0:
        raise DomainError(f"transmissivity must lie in [0, 1], got {transmissivity}")
    dim = state.dim
    blocks = _bs_blocks(dim, float(transmissivity), bool(inverse))
    out = np.zeros((dim, dim), dtype=complex)
    amps = state.amps
    for (j, k), vec in blocks.items():
        c = amps[j, k]
        if c == 0:
            continue
        n = j + k
        lo = max(0, n - dim + 1)
        hi = min(n, dim - 1)
        m = np.arange(lo, hi + 1)
        out[m, n - m] += c * vec[lo : hi + 1]
    norm2 = float(np.sum(np.abs(out) ** 2))
    in_norm2 = float(np.sum(np.abs(amps) ** 2))
    leak = state.truncation_leak + max(0.0, in_norm2 - norm2)
    return TwoModeState(out, leak)


def _loss_weights(dim: int, eta: float):
    """``w[l, m] = sqrt(C(m+l, l) eta^m (1-eta)^l)`` for the Kraus sum."""
    m = np.arange(dim)[None, :]
    l = np.arange(dim)[:, None]
    log_binom = gammaln(m + l + 1) - gammaln(m + 1) - gammaln(l + 1)
    log_eta = np.log(eta) if eta > 0 else -np.inf
    log_rest = np.log1p(-eta) if eta < 1 else -np.inf
    # 0 * log(0) must read as 0 so that eta in {0, 1} is exact.
    with np.errstate(invalid="ignore"):
        term_m = np.where(m == 0, 0.0, m * log_eta)
        term_l = np.where(l == 0, 0.0, l * log_rest)
    return np.exp(0.5 * (log_binom + term_m + term_l))


def loss_channel(rho: DensityOperator, eta: float) -> DensityOperator:
    """Pure-loss channel of efficiency ``eta`` as an exact Kraus sum."""
    if not 0.0 <= eta <= 1.0:
        raise DomainError(f"efficiency must lie in [0, 1], got {eta}")
    if eta == 1.0:
        return DensityOperator(rho.mat)
    dim = rho.dim
    w = _loss_weights(dim, eta)
    out = np.zeros((dim, dim), dtype=complex)
    for l in range(dim):
        size = dim - l
        wl = w[l, :size]
        out[:size, :size] += np.outer(wl, wl) * rho.mat[l:, l:]
    return DensityOperator(out)


def loss_channel_adjoint(op: np.ndarray, eta: float) -> np.ndarray:
    """Heisenberg-picture loss map; unital on the truncated space."""
    if not 0.0 <= eta <= 1.0:
        raise DomainError(f"efficiency must lie in [0, 1], got {eta}")
    op = np.asarray(op)
    if eta == 1.0:
        return op.copy()
    dim = op.shape[-1]
    w = _loss_weights(dim, eta)
    out = np.zeros_like(op, dtype=complex)
    for l in range(dim):
        size = dim - l
        wl = w[l, :size]
        out[..., l:, l:] += np.outer(wl, wl) * op[..., :size, :size]
    return out


def fidelity(psi: FockState, rho: DensityOperator) -> float:
    """Pure-target fidelity ``<psi|rho|psi>``, clamped to [0, 1]."""
    if psi.dim != rho.dim:
        raise DimensionMismatchError(f"dims differ: {psi.dim} vs {rho.dim}")
    val = float(np.real(np.vdot(psi.amps, rho.mat @ psi.amps)))
    return min(1.0, max(0.0, val))


def _psd_sqrt(mat):
    herm = 0.5 * (mat + mat.conj().T)
    vals, vecs = np.linalg.eigh(herm)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.conj().T


def uhlmann_fidelity(rho: DensityOperator, sigma: DensityOperator) -> float:
    """Mixed-state fidelity ``(Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2``."""
    if rho.dim != sigma.dim:
        raise DimensionMismatchError(f"dims differ: {rho.dim} vs {sigma.dim}")
    # nuclear norm of sqrt(rho) sqrt(sigma); avoids square roots of
    # round-off eigenvalues that a sqrt(rho) sigma sqrt(rho) route would take
    sv = np.linalg.svd(_psd_sqrt(rho.mat) @ _psd_sqrt(sigma.mat), compute_uv=False)
    f = float(np.sum(sv) ** 2)
    return min(1.0, max(0.0, f))


def trace_distance(a, b) -> float:
    diff = np.asarray(getattr(a, "mat", a)) - np.asarray(getattr(b, "mat", b))
    vals = np.linalg.eigvalsh(0.5 * (diff + diff.conj().T))
    return 0.5 * float(np.sum(np.abs(vals)))


def quadrature_moments(rho, theta_deg: float = 0.0):
    """Mean and variance of ``x_theta = x cos(theta) + p sin(theta)``."""
    mat = rho.mat if isinstance(rho, DensityOperator) else rho.density().mat
    dim = mat.shape[0]
    a = np.diag(np.sqrt(np.arange(1, dim)), 1)
    ph = np.exp(-1j * np.deg2rad(theta_deg))
    xq = (a * ph + a.conj().T * np.conj(ph)) / np.sqrt(2.0)
    mean = float(np.real(np.trace(mat @ xq)))
    second = float(np.real(np.trace(mat @ xq @ xq)))
    return mean, second - mean**2


# ---------------------------------------------------------------------------
# JSON operator format: {"dim", "re", "im"}, flattened row-major.


def _to_doc(obj):
    arr = obj.amps if isinstance(obj, FockState) else obj.mat
    flat = np.asarray(arr).reshape(-1)
    return {
        "dim": int(arr.shape[0]),
        "re": [float(v) for v in flat.real],
        "im": [float(v) for v in flat.imag],
    }


def to_json(obj, **extra) -> str:
    """Serialize a ``FockState`` or ``DensityOperator``.

    Extra keyword blocks (e.g. ``meta``) are appended verbatim. Floats are
    written with ``repr`` precision, so reading back is bit-exact.
    """
    doc = _to_doc(obj)
    doc.update(extra)
    return json.dumps(doc)


def from_json(doc):
    """Inverse of ``to_json``; accepts a string or an already-parsed dict.

    A vector of length ``dim`` gives a ``FockState``; ``dim*dim`` entries
    give a ``DensityOperator``.
    """
    from .errors import ContractError

    if isinstance(doc, (str, bytes)):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as exc:
            raise ContractError(f"invalid JSON: {exc}") from exc
    for key in ("dim", "re", "im"):
        if key not in doc:
            raise ContractError(f"missing field '{key}'", field=key)
    dim = doc["dim"]
    if not isinstance(dim, int) or dim < 1:
        raise ContractError("'dim' must be a positive integer", field="dim")
    re = np.asarray(doc["re"], dtype=float)
    im = np.asarray(doc["im"], dtype=float)
    if re.shape != im.shape:
        raise ContractError("'re' and 'im' lengths differ", field="im")
    vals = re + 1j * im
    if vals.size == dim:
        return FockState(vals)
    if vals.size == dim * dim:
        return DensityOperator(vals.reshape(dim, dim))
    raise ContractError(f"'re' has {vals.size} entries, expected {dim} or {dim * dim}", field="re")
