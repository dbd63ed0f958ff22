"""Random fields on the rectangle (0, a) x (0, b) with Dirichlet boundary.

Everything here is diagonal in the sine basis

    u_kl(x, y) = sin(k pi x / a) sin(l pi y / b),

which diagonalizes both the continuous Laplacian and its five-point finite
difference version on the interior grid ``(i h_x, j h_y)``,
``h_x = a / (m + 1)``, ``h_y = b / (n + 1)``.

Grid inner product is ``h_x h_y sum(u v)``. The discrete modes are scaled
to unit norm under that weight, so the grid Parseval identity is exact and
:func:`dst2_forward` / :func:`dst2_inverse` are exact inverses.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.fft

from .errors import IndexOutOfRange, ShapeMismatch, UnsupportedLaw
from .rng import as_generator
from .spectral_ops import Basis, SpectralOperator


@dataclass(frozen=True)
class RectDomain:
    a: float
    b: float
    m: int
    n: int

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ValueError("side lengths must be positive")
        if self.m < 1 or self.n < 1:
            raise ValueError("grid needs at least one interior node per direction")

    @property
    def hx(self) -> float:
        return self.a / (self.m + 1)

    @property
    def hy(self) -> float:
        return self.b / (self.n + 1)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.m, self.n)

    @property
    def cell_area(self) -> float:
        return self.hx * self.hy

    def nodes(self) -> tuple[np.ndarray, np.ndarray]:
        """Meshgrid (``indexing="ij"``) of interior node coordinates."""
        x = self.hx * np.arange(1, self.m + 1)
        y = self.hy * np.arange(1, self.n + 1)
        return np.meshgrid(x, y, indexing="ij")


# Covariance laws ------------------------------------------------------------

SEQUENCE_RULES = ("const", "inv", "inv_sq")


@dataclass(frozen=True)
class InversePower:
    """(-Δ)^(-alpha)."""
    alpha: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be > 0")


@dataclass(frozen=True)
class HeatKernel:
    """exp(T Δ), eigenvalues exp(-T λ)."""
    T: float

    def __post_init__(self):
        # T = 0 is allowed: it is the identity
        if self.T < 0:
            raise ValueError("T must be >= 0")


@dataclass(frozen=True)
class EigenvalueSequence:
    """λ_n = 1, 1/n or 1/n² along the diagonal ordering of the modes."""
    rule: str

    def __post_init__(self):
        if self.rule not in SEQUENCE_RULES:
            raise ValueError(f"rule must be one of {SEQUENCE_RULES}")

    def values(self, count: int) -> np.ndarray:
        n = np.arange(1, count + 1, dtype=float)
        if self.rule == "const":
            return np.ones(count)
        if self.rule == "inv":
            return 1.0 / n
        return 1.0 / n**2


CovarianceLaw = InversePower | HeatKernel | EigenvalueSequence

_SEQ_ALIASES = {
    "const": "const", "constant": "const", "constant-1": "const",
    "inv": "inv", "inverse": "inv", "inverse-n": "inv",
    "inv_sq": "inv_sq", "inverse-n-squared": "inv_sq",
}


def parse_law(text: str) -> CovarianceLaw:
    """Parse ``inverse_power:2.0``, ``heat_kernel:0.5`` or ``seq:inv_sq``."""
    kind, sep, arg = text.strip().partition(":")
    if not sep:
        raise ValueError(f"malformed covariance law {text!r}")
    kind, arg = kind.strip(), arg.strip()
    if kind == "inverse_power":
        return InversePower(float(arg))
    if kind == "heat_kernel":
        return HeatKernel(float(arg))
    if kind == "seq":
        if arg not in _SEQ_ALIASES:
            raise ValueError(f"unknown eigenvalue sequence {arg!r}")
        return EigenvalueSequence(_SEQ_ALIASES[arg])
    raise ValueError(f"unknown covariance law kind {kind!r}")


def format_law(law: CovarianceLaw) -> str:
    if isinstance(law, InversePower):
        return f"inverse_power:{law.alpha!r}"
    if isinstance(law, HeatKernel):
        return f"heat_kernel:{law.T!r}"
    return f"seq:{law.rule}"


def trace_is_finite(law: CovarianceLaw) -> bool:
    """Analytic trace criterion for the infinite-dimensional operator."""
    if isinstance(law, InversePower):
        return law.alpha > 1
    if isinstance(law, HeatKernel):
        return law.T > 0
    return law.rule == "inv_sq"


# Eigenvalues ----------------------------------------------------------------

def continuous_eigenvalue(k, l, dom: RectDomain):
    """Eigenvalue ``(k pi / a)² + (l pi / b)²`` of -Δ on the rectangle."""
    k = np.asarray(k, dtype=float)
    l = np.asarray(l, dtype=float)
    if np.any(k < 1) or np.any(l < 1):
        raise IndexOutOfRange("mode indices start at 1")
    out = (k * np.pi / dom.a) ** 2 + (l * np.pi / dom.b) ** 2
    return float(out) if out.ndim == 0 else out


def discrete_eigenvalue(k, l, dom: RectDomain):
    """Eigenvalue of the five-point Laplacian for mode ``(k, l)``, 1 <= k <= m, 1 <= l <= n."""
    k = np.asarray(k)
    l = np.asarray(l)
    if np.any(k < 1) or np.any(k > dom.m) or np.any(l < 1) or np.any(l > dom.n):
        raise IndexOutOfRange(f"mode ({k}, {l}) outside 1..{dom.m} x 1..{dom.n}")
    sx = np.sin(k * np.pi / (2 * (dom.m + 1))) / dom.hx
    sy = np.sin(l * np.pi / (2 * (dom.n + 1))) / dom.hy
    out = 4 * sx**2 + 4 * sy**2
    return float(out) if out.ndim == 0 else out


def laplacian_eigenvalues(dom: RectDomain, discrete: bool = False) -> np.ndarray:
    """All ``m x n`` eigenvalues, entry ``[k-1, l-1]`` for mode ``(k, l)``."""
    k, l = np.meshgrid(np.arange(1, dom.m + 1), np.arange(1, dom.n + 1), indexing="ij")
    if discrete:
        return discrete_eigenvalue(k, l, dom)
    return continuous_eigenvalue(k, l, dom)


def diagonal_order(m: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    """1-based ``(k, l)`` of the ``m x n`` modes sorted by ``k + l``, then ``k``."""
    k, l = np.meshgrid(np.arange(1, m + 1), np.arange(1, n + 1), indexing="ij")
    k, l = k.ravel(), l.ravel()
    order = np.lexsort((k, k + l))
    return k[order], l[order]


def _diagonal_modes(count: int) -> tuple[np.ndarray, np.ndarray]:
    """First ``count`` modes of the infinite quadrant in diagonal order."""
    d = int(math.ceil((1 + math.sqrt(1 + 8 * count)) / 2)) + 1
    s = np.arange(2, d + 1)
    k = np.concatenate([np.arange(1, j) for j in s])
    l = np.concatenate([j - np.arange(1, j) for j in s])
    return k[:count], l[:count]


def law_eigenvalues(law: CovarianceLaw, lam):
    """Map Laplacian eigenvalues ``lam`` through an operator law."""
    lam = np.asarray(lam, dtype=float)
    if isinstance(law, InversePower):
        return lam ** (-law.alpha)
    if isinstance(law, HeatKernel):
        return np.exp(-law.T * lam)
    raise UnsupportedLaw("eigenvalue-sequence laws are not functions of the Laplacian")


def covariance_eigs(law: CovarianceLaw, dom: RectDomain, discrete: bool = False) -> SpectralOperator:
    """Covariance operator of ``law`` on the sine basis of ``dom``.

    ``discrete`` selects the finite-difference eigenvalues instead of the
    continuous ones. Sequence laws ignore it and assign ``λ_1, λ_2, ...``
    along the diagonal order of the modes.
    """
    basis = Basis.sine(dom.m, dom.n)
    if isinstance(law, EigenvalueSequence):
        k, l = diagonal_order(dom.m, dom.n)
        eig = np.empty(dom.shape)
        eig[k - 1, l - 1] = law.values(k.size)
    else:
        eig = law_eigenvalues(law, laplacian_eigenvalues(dom, discrete))
    return SpectralOperator(basis, eig, psd=True)


# Fields and transforms ------------------------------------------------------

@dataclass(frozen=True)
class GridField:
    domain: RectDomain
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.domain.shape:
            raise ShapeMismatch(f"values {v.shape} on a {self.domain.shape} grid")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", v)

    def l2_norm_sq(self) -> float:
        """Grid quadrature of the squared L² norm."""
        return float(self.domain.cell_area * np.sum(self.values**2))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["i", "j", "value"])
            for i in range(self.domain.m):
                for j in range(self.domain.n):
                    w.writerow([i + 1, j + 1, repr(float(self.values[i, j]))])

    @classmethod
    def from_csv(cls, path, domain: RectDomain) -> "GridField":
        values = np.full(domain.shape, np.nan)
        with open(path, newline="") as fh:
            rows = csv.reader(fh)
            header = next(rows)
            if header != ["i", "j", "value"]:
                raise ValueError(f"unexpected header {header}")
            for i, j, v in rows:
                values[int(i) - 1, int(j) - 1] = float(v)
        return cls(domain, values)


def _mode_scale(dom: RectDomain) -> float:
    # discrete norm² of an unnormalized mode: h_x h_y (m+1)(n+1)/4 = ab/4
    return 2.0 / math.sqrt(dom.a * dom.b)


def sine_mode(k: int, l: int, dom: RectDomain, normalized: bool = True) -> GridField:
    """Mode ``(k, l)`` on the grid; unit grid norm when ``normalized``."""
    if not (1 <= k <= dom.m and 1 <= l <= dom.n):
        raise IndexOutOfRange(f"mode ({k}, {l}) outside the grid")
    i = np.arange(1, dom.m + 1)[:, None]
    j = np.arange(1, dom.n + 1)[None, :]
    u = np.sin(i * k * np.pi / (dom.m + 1)) * np.sin(j * l * np.pi / (dom.n + 1))
    return GridField(dom, u * _mode_scale(dom) if normalized else u)


def dst2_forward(field: GridField) -> np.ndarray:
    """Coefficients ``c[k-1, l-1] = <field, φ_kl>`` in the normalized sine modes."""
    dom = field.domain
    # DST-I computes 2 sum_i f_i sin(pi k i / (m+1)) along each axis
    raw = scipy.fft.dstn(field.values, type=1)
    return raw * (dom.cell_area * _mode_scale(dom) / 4.0)


def dst2_inverse(coeffs, dom: RectDomain) -> GridField:
    """Field ``sum_kl c_kl φ_kl`` on the grid of ``dom``."""
    c = np.asarray(coeffs, dtype=float)
    if c.shape != dom.shape:
        raise ShapeMismatch(f"coefficients {c.shape} for a {dom.shape} grid")
    raw = scipy.fft.dstn(c, type=1)
    return GridField(dom, raw * (_mode_scale(dom) / 4.0))


def _check_sine(cov: SpectralOperator, dom: RectDomain | None = None):
    if cov.basis.kind != "sine":
        raise ShapeMismatch("operator is not on a sine basis")
    if dom is not None and cov.basis.shape != dom.shape:
        raise ShapeMismatch(f"operator basis {cov.basis.shape} vs grid {dom.shape}")


def sample_field(cov: SpectralOperator, dom: RectDomain, rng=None,
                 normalized: bool = True) -> GridField:
    """One draw of the Gaussian field with covariance ``cov``.

    Karhunen-Loève sum ``U = sum_kl λ_kl^{1/2} ξ_kl v_kl`` with i.i.d.
    standard normal ``ξ``. With ``normalized`` the modes ``v_kl`` have unit
    grid norm, so the DST coefficients of ``U`` have variance ``λ_kl`` and
    ``E |U|² = sum λ``. Otherwise ``v_kl`` are the raw sines ``u_kl`` and
    ``E |U|² = (ab/4) sum λ``.
    """
    _check_sine(cov, dom)
    if np.any(cov.eigenvalues < 0):
        raise ValueError("covariance has negative eigenvalues")
    xi = as_generator(rng).standard_normal(dom.shape)
    coeffs = np.sqrt(cov.eigenvalues) * xi
    if not normalized:
        coeffs = coeffs / _mode_scale(dom)
    return dst2_inverse(coeffs, dom)


def apply_covariance(cov: SpectralOperator, w: GridField) -> GridField:
    """``C w`` via forward DST, scaling by the eigenvalues, inverse DST."""
    _check_sine(cov, w.domain)
    return dst2_inverse(cov.eigenvalues * dst2_forward(w), w.domain)


def dense_kernel(cov: SpectralOperator, dom: RectDomain) -> np.ndarray:
    """Kernel matrix ``sum_kl λ_kl φ_kl(x) φ_kl(y)`` on grid nodes, shape ``(mn, mn)``.

    Acts on flattened fields as ``h_x h_y K w``. Quadratic in grid size;
    meant for checking :func:`apply_covariance` on small grids.
    """
    _check_sine(cov, dom)
    i = np.arange(1, dom.m + 1)
    j = np.arange(1, dom.n + 1)
    sx = np.sin(np.outer(i, i) * np.pi / (dom.m + 1))
    sy = np.sin(np.outer(j, j) * np.pi / (dom.n + 1))
    # phi[(i,j), (k,l)]
    phi = np.kron(sx, sy) * _mode_scale(dom)
    return (phi * cov.eigenvalues.ravel()) @ phi.T


# Trace and Sobolev diagnostics ----------------------------------------------

@dataclass(frozen=True)
class SeriesReport:
    """Partial sums of an eigenvalue series and the analytic verdict."""

    counts: np.ndarray
    partial_sums: np.ndarray
    converges: bool
    tail_bounds: np.ndarray
    consistent: bool

    @property
    def verdict(self) -> str:
        return "converges" if self.converges else "diverges"


def _truncations(K: int) -> np.ndarray:
    counts = [1]
    while counts[-1] * 4 < K:
        counts.append(counts[-1] * 4)
    counts.append(K)
    return np.array(sorted(set(counts)), dtype=int)


def _power_tail(alpha: float, s: float, dom: RectDomain, first_diag: np.ndarray) -> np.ndarray:
    """Bound on sum over modes with k + l >= D of (k² + l²)^s λ_kl^(-alpha).

    Uses λ_kl >= π² (k + l)² / (2 c²), c = max(a, b), and
    (k² + l²) <= (k + l)², then sums j^(1 - r) over diagonals j >= D with
    r = 2 alpha - 2 s; infinite when r <= 2.
    """
    c2 = max(dom.a, dom.b) ** 2
    r = 2 * alpha - 2 * s
    D = first_diag.astype(float)
    if r <= 2:
        return np.full(D.shape, np.inf)
    const = (2 * c2 / np.pi**2) ** alpha
    q = r - 1
    return const * (D ** (-q) + D ** (1 - q) / (q - 1))


def _heat_tail(T: float, dom: RectDomain, first_diag: np.ndarray) -> np.ndarray:
    """Bound on sum over modes with k + l >= D of exp(-T λ_kl)."""
    beta = T * np.pi**2 / (2 * max(dom.a, dom.b) ** 2)
    D = first_diag.astype(float)
    out = np.empty(D.shape)
    for idx, d in enumerate(D):
        # j e^{-beta j²} decreases for j >= 1/sqrt(2 beta); sum the head exactly
        start = max(d, math.ceil(1.0 / math.sqrt(2 * beta)) + 1)
        head = sum(j * math.exp(-beta * j * j) for j in range(int(d), int(start)))
        out[idx] = head + start * math.exp(-beta * start**2) + math.exp(-beta * start**2) / (2 * beta)
    return out


def trace_partial_sums(law: CovarianceLaw, dom: RectDomain, K: int) -> SeriesReport:
    """Partial sums of the covariance eigenvalues over the first ``K`` modes.

    Modes are taken in diagonal order of the infinite operator (continuous
    Laplacian eigenvalues on the sides of ``dom``). The verdict is the
    analytic criterion; partial sums are reported alongside and checked for
    consistency with the analytic tail bound, never used as proof.
    """
    if K < 2:
        raise ValueError("K must be >= 2")
    k, l = _diagonal_modes(K)
    if isinstance(law, EigenvalueSequence):
        terms = law.values(K)
    else:
        terms = law_eigenvalues(law, continuous_eigenvalue(k, l, dom))
    counts = _truncations(K)
    sums = np.cumsum(terms)[counts - 1]
    converges = trace_is_finite(law)
    tails = _tail_after(law, 0.0, dom, k, l, counts)
    return SeriesReport(counts, sums, converges, tails, _consistent(sums, tails, converges))


def _tail_after(law, s, dom, k, l, counts) -> np.ndarray:
    K = k.size
    # diagonal index of the first mode left out after each truncation
    next_diag = np.array([k[c] + l[c] if c < K else k[-1] + l[-1] + 1 for c in counts])
    # a partially used diagonal still counts entirely toward the bound
    first_out = np.minimum(next_diag, np.array([k[c - 1] + l[c - 1] for c in counts]))
    if isinstance(law, InversePower):
        return _power_tail(law.alpha, s, dom, first_out)
    if isinstance(law, HeatKernel):
        if law.T <= 0:
            return np.full(counts.shape, np.inf)
        return _heat_tail(law.T, dom, first_out)
    if law.rule == "inv_sq":
        return 1.0 / (counts.astype(float))
    return np.full(counts.shape, np.inf)


def _consistent(sums: np.ndarray, tails: np.ndarray, converges: bool) -> bool:
    if not converges:
        return bool(np.all(np.diff(sums) >= 0))
    # S_K - S_j must stay under the tail bound after truncation j
    return bool(np.all(sums[-1] - sums[:-1] <= tails[:-1] * (1 + 1e-12)))


def sobolev_energy(law: CovarianceLaw, s: float, dom: RectDomain, K: int) -> SeriesReport:
    """Partial sums of ``sum_{p+q=s} k^{2p} l^{2q} λ_kl^{-alpha}`` and the verdict ``alpha > 1 + s``.

    Integer ``s`` sums over derivative multi-indices; non-integer ``s`` uses
    the equivalent weight ``(k² + l²)^s``.
    """
    if not isinstance(law, InversePower):
        raise UnsupportedLaw("Sobolev energy is defined for inverse-power laws only")
    if s < 0:
        raise ValueError("s must be >= 0")
    if K < 2:
        raise ValueError("K must be >= 2")
    k, l = _diagonal_modes(K)
    kf, lf = k.astype(float), l.astype(float)
    if float(s).is_integer():
        si = int(s)
        weight = sum(kf ** (2 * p) * lf ** (2 * (si - p)) for p in range(si + 1))
    else:
        weight = (kf**2 + lf**2) ** s
    terms = weight * law_eigenvalues(law, continuous_eigenvalue(k, l, dom))
    counts = _truncations(K)
    sums = np.cumsum(terms)[counts - 1]
    converges = law.alpha > 1 + s
    tails = _tail_after(law, s, dom, k, l, counts)
    return SeriesReport(counts, sums, converges, tails, _consistent(sums, tails, converges))


def write_series_csv(report: SeriesReport, path) -> None:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["count", "partial_sum", "tail_bound"])
        for c, s, t in zip(report.counts, report.partial_sums, report.tail_bounds):
            w.writerow([int(c), repr(float(s)), repr(float(t))])
        w.writerow(["# verdict", report.verdict, "consistent" if report.consistent else "inconsistent"])
