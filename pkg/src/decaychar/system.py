"""Constant-coefficient partially dissipative systems in normal form.

A system is written as

    d/dt V + sum_i A^i d/dx_i V + L V = 0,      L = blockdiag(0, D),

with symmetric A^i, positive definite D acting on the last n2 components,
and a vanishing top-left n1 x n1 block in every A^i.  This module validates
such systems, builds the Fourier-side generator E(xi), and runs the
stability diagnostics (kernel-eigenvector margin, spectral scan, strong
ellipticity of the effective diffusion operator).
"""

from __future__ import annotations

import math

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import (
    AsymmetricMatrix,
    DimensionMismatch,
    EigenSolveFailure,
    NonPositiveDissipation,
    NonzeroA11,
)

SYMMETRY_TOL = 1e-12
KERNEL_MARGIN_EPS = 1e-8  # double-precision eigenvector noise floor, with margin
IM_CROSSING_TOL = 1e-10
DEFAULT_RADII = (1e-3, 1e3, 200)


@dataclass(frozen=True)
class SystemSpec:
    """Validated normal-form system: dimensions, flux matrices, dissipation block."""

    d: int
    n1: int
    n2: int
    A: tuple[np.ndarray, ...]
    D: np.ndarray
    name: str
    kappa: float  # min eigenvalue of D

    @property
    def n(self) -> int:
        return self.n1 + self.n2

    @property
    def L(self) -> np.ndarray:
        out = np.zeros((self.n, self.n))
        out[self.n1:, self.n1:] = self.D
        return out

    def A_blocks(self, i: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(A12, A21, A22) blocks of A^i."""
        n1 = self.n1
        Ai = self.A[i]
        return Ai[:n1, n1:], Ai[n1:, :n1], Ai[n1:, n1:]

    def fingerprint(self) -> bytes:
        parts = [np.asarray([self.d, self.n1, self.n2], float).tobytes()]
        parts += [Ai.tobytes() for Ai in self.A]
        parts.append(self.D.tobytes())
        return b"".join(parts)


@dataclass(frozen=True)
class SKReport:
    """Stability diagnostics from the kernel test and the spectral scan."""

    passes: bool
    kernel_margin: float
    max_re_lambda: float
    dissipation_c: float
    ellipticity_min: float
    lambda0: float
    n_omega: int = 0
    n_radii: int = 0

    def as_dict(self) -> dict:
        return {
            "passes": self.passes,
            "kernel_margin": self.kernel_margin,
            "max_re_lambda": self.max_re_lambda,
            "dissipation_c": self.dissipation_c,
            "ellipticity_min": self.ellipticity_min,
            "lambda0": self.lambda0,
            "n_omega": self.n_omega,
            "n_radii": self.n_radii,
        }


def validate(A: list, D, d: int, n1: int, n2: int, name: str = "system") -> SystemSpec:
    """Check the normal-form invariants and return a validated SystemSpec.

    Raises DimensionMismatch, AsymmetricMatrix(i), NonzeroA11(i) or
    NonPositiveDissipation on the first violated invariant.
    """
    if d < 1 or d > 3:
        raise DimensionMismatch(f"spatial dimension must be 1..3, got {d}")
    if n1 < 1 or n2 < 1:
        raise DimensionMismatch(f"block sizes must be positive, got n1={n1}, n2={n2}")
    n = n1 + n2
    if len(A) != d:
        raise DimensionMismatch(f"expected {d} flux matrices, got {len(A)}")
    mats = []
    for i, Ai in enumerate(A):
        Ai = np.asarray(Ai, dtype=float)
        if Ai.shape != (n, n):
            raise DimensionMismatch(f"A[{i}] has shape {Ai.shape}, expected {(n, n)}")
        defect = float(np.max(np.abs(Ai - Ai.T))) if Ai.size else 0.0
        if defect > SYMMETRY_TOL:
            raise AsymmetricMatrix(i, defect)
        a11 = float(np.max(np.abs(Ai[:n1, :n1])))
        if a11 > SYMMETRY_TOL:
            raise NonzeroA11(i, a11)
        mats.append(0.5 * (Ai + Ai.T))
    Dm = np.asarray(D, dtype=float)
    if Dm.shape != (n2, n2):
        raise DimensionMismatch(f"D has shape {Dm.shape}, expected {(n2, n2)}")
    if float(np.max(np.abs(Dm - Dm.T))) > SYMMETRY_TOL:
        raise AsymmetricMatrix(-1, float(np.max(np.abs(Dm - Dm.T))))
    kappa = float(np.linalg.eigvalsh(0.5 * (Dm + Dm.T)).min())
    if kappa <= 0:
        raise NonPositiveDissipation(kappa)
    return SystemSpec(d=d, n1=n1, n2=n2, A=tuple(mats), D=0.5 * (Dm + Dm.T),
                      name=name, kappa=kappa)


def symbol(sys: SystemSpec, xi) -> np.ndarray:
    """Fourier-side generator E(xi) = -(i sum_k A^k xi_k + L).

    The per-mode solution of the linear system is V_hat(t) = exp(t E(xi)) V_hat(0).
    """
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    if xi.shape != (sys.d,):
        raise DimensionMismatch(f"xi has shape {xi.shape}, expected ({sys.d},)")
    E = -1j * sum(x * Ai for x, Ai in zip(xi, sys.A))
    return E - sys.L


def symbol_batch(sys: SystemSpec, xis: np.ndarray) -> np.ndarray:
    """E(xi) for a stack of frequencies, shape (m, d) -> (m, n, n)."""
    xis = np.asarray(xis, dtype=float).reshape(-1, sys.d)
    Astack = np.stack(sys.A)  # (d, n, n)
    E = -1j * np.einsum("md,dij->mij", xis, Astack)
    E -= sys.L
    return E


def sphere_samples(d: int, n_omega: int | None = None) -> np.ndarray:
    """Deterministic direction samples on S^{d-1}.

    d=1 uses {+1, -1}; d=2 equispaced angles; d=3 a latitude-longitude grid.
    A(omega) has degree-1 entries in omega, so modest oversampling suffices.
    """
    if d == 1:
        return np.array([[1.0], [-1.0]])
    if d == 2:
        m = 256 if n_omega is None else int(n_omega)
        if m < 64:
            raise DimensionMismatch(f"need at least 64 angular samples in d=2, got {m}")
        th = 2 * np.pi * np.arange(m) / m
        return np.column_stack([np.cos(th), np.sin(th)])
    m = 64 if n_omega is None else int(n_omega)
    if m < 64:
        raise DimensionMismatch(f"need at least 64 longitude samples in d=3, got {m}")
    n_lat = max(32, m // 2)
    lat = np.pi * (np.arange(n_lat) + 0.5) / n_lat
    lon = 2 * np.pi * np.arange(m) / m
    LT, LN = np.meshgrid(lat, lon, indexing="ij")
    return np.column_stack([
        (np.sin(LT) * np.cos(LN)).ravel(),
        (np.sin(LT) * np.sin(LN)).ravel(),
        np.cos(LT).ravel(),
    ])


def _kernel_margin_at(sys: SystemSpec, omega: np.ndarray) -> float:
    """min over eigenspaces of A(omega) of the dissipative-part fraction.

    Degenerate eigenvalues are clustered and the margin is the smallest
    singular value of the dissipative rows of an orthonormal basis of the
    cluster span, i.e. the minimum of |{I-P} v| over unit v in the eigenspace.
    """
    Aw = sum(w * Ai for w, Ai in zip(omega, sys.A))
    try:
        vals, vecs = np.linalg.eigh(Aw)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - eigh on symmetric is robust
        raise EigenSolveFailure(omega, str(exc)) from exc
    scale = max(float(np.max(np.abs(vals))), 1.0)
    margin = np.inf
    i = 0
    while i < len(vals):
        k = i + 1
        while k < len(vals) and abs(vals[k] - vals[i]) <= 1e-8 * scale:
            k += 1
        basis = vecs[:, i:k]              # orthonormal columns
        bottom = basis[sys.n1:, :]        # dissipative rows
        sv = np.linalg.svd(bottom, compute_uv=False)
        smin = float(sv.min()) if sv.size else 0.0
        margin = min(margin, smin)
        i = k
    return margin


def check_strong_ellipticity(sys: SystemSpec, n_omega: int | None = None) -> float:
    """min over sampled omega of the smallest eigenvalue of the symmetric part of

        sum_{i,l} A^i_{12} D^{-1} A^l_{21} omega_i omega_l.

    Positive iff the effective diffusion operator is strongly elliptic, which
    is equivalent to the stability condition when A^i_{11} = 0.
    """
    Dinv = np.linalg.inv(sys.D)
    blocks = [sys.A_blocks(i) for i in range(sys.d)]
    out = np.inf
    for omega in sphere_samples(sys.d, n_omega):
        M = np.zeros((sys.n1, sys.n1))
        for i in range(sys.d):
            for l in range(sys.d):
                M += omega[i] * omega[l] * (blocks[i][0] @ Dinv @ blocks[l][1])
        lam = float(np.linalg.eigvalsh(0.5 * (M + M.T)).min())
        out = min(out, lam)
    return out


def check_sk(sys: SystemSpec, n_omega: int | None = None,
             xi_grid: np.ndarray | None = None) -> SKReport:
    """Run the stability diagnostics.

    kernel_margin: min over sampled omega / eigenspaces of A(omega) of the
        dissipative fraction of kernel-candidate eigenvectors; > eps means no
        flux eigenvector hides inside the undamped subspace.
    max_re_lambda: max over the radial scan of max Re eig E(xi), xi != 0.
    dissipation_c: min over the scan of -Re lambda_max(xi) (1+|xi|^2)/|xi|^2.
    lambda0: 0.9 x the first scanned radius at which some eigenvalue pair of
        E(xi) turns complex (paper-style low-frequency boundary), capped at
        the scan top.
    """
    omegas = sphere_samples(sys.d, n_omega)
    margin = min(_kernel_margin_at(sys, omega) for omega in omegas)

    if xi_grid is None:
        lo, hi, m = DEFAULT_RADII
        radii = np.geomspace(lo, hi, int(m))
    else:
        radii = np.asarray(xi_grid, dtype=float)
    max_re = -np.inf
    diss_c = np.inf
    crossing_radius = None
    for rad in radii:
        xis = rad * omegas
        E = symbol_batch(sys, xis)
        try:
            vals = np.linalg.eigvals(E)
        except np.linalg.LinAlgError as exc:
            raise EigenSolveFailure(rad, str(exc)) from exc
        re_max = float(vals.real.max())
        max_re = max(max_re, re_max)
        diss_c = min(diss_c, -re_max * (1.0 + rad * rad) / (rad * rad))
        if crossing_radius is None and float(np.abs(vals.imag).max()) > IM_CROSSING_TOL:
            crossing_radius = float(rad)
    lambda0 = 0.9 * crossing_radius if crossing_radius is not None else float(radii[-1])
    lambda0 = min(lambda0, float(radii[-1]))

    ell = check_strong_ellipticity(sys, n_omega)
    passes = bool((margin > KERNEL_MARGIN_EPS) and (max_re < 0.0) and (diss_c > 0.0))
    return SKReport(passes=passes, kernel_margin=float(margin),
                    max_re_lambda=max_re, dissipation_c=float(diss_c),
                    ellipticity_min=float(ell), lambda0=float(lambda0),
                    n_omega=len(omegas), n_radii=len(radii))


# ---------------------------------------------------------------------------
# builtin fixtures and the key-value file format


def euler1d_spec(c_star: float = 1.0) -> SystemSpec:
    """Symmetrized linear damped Euler in 1D (variables (c* a, m))."""
    A1 = c_star * np.array([[0.0, 1.0], [1.0, 0.0]])
    return validate([A1], [[1.0]], d=1, n1=1, n2=1, name="euler1d")


def euler2d_spec(c_star: float = 1.0) -> SystemSpec:
    A1 = c_star * np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
    A2 = c_star * np.array([[0.0, 0.0, 1.0], [0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    return validate([A1, A2], np.eye(2), d=2, n1=1, n2=2, name="euler2d")


def decoupled1d_spec() -> SystemSpec:
    """Negative fixture: flux never couples the blocks, so (1,0) sits in ker L."""
    A1 = np.array([[0.0, 0.0], [0.0, 1.0]])
    return validate([A1], [[1.0]], d=1, n1=1, n2=1, name="decoupled1d")


def toy_relaxation_spec(kappa: float = 1.0) -> SystemSpec:
    A1 = np.array([[0.0, 1.0], [1.0, 0.0]])
    return validate([A1], [[float(kappa)]], d=1, n1=1, n2=1, name="toy-relaxation")


BUILTIN_SYSTEMS = {
    "euler1d": euler1d_spec,
    "euler2d": euler2d_spec,
    "decoupled1d": decoupled1d_spec,
    "toy-relaxation": toy_relaxation_spec,
}


def load_system_file(path: str | Path) -> SystemSpec:
    """Read a system from the key-value text format.

    Required keys: name, d, n1, n2, D (row-major), and A1..Ad (row-major).
    """
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    return system_from_dict(data)


def system_from_dict(data: dict) -> SystemSpec:
    try:
        d = int(data["d"])
        n1 = int(data["n1"])
        n2 = int(data["n2"])
        name = str(data.get("name", "system"))
        n = n1 + n2
        A = [np.asarray(data[f"A{i + 1}"], dtype=float).reshape(n, n) for i in range(d)]
        D = np.asarray(data["D"], dtype=float).reshape(n2, n2)
    except (KeyError, ValueError) as exc:
        raise DimensionMismatch(f"malformed system file: {exc}") from exc
    return validate(A, D, d=d, n1=n1, n2=n2, name=name)


def system_to_dict(sys: SystemSpec) -> dict:
    out = {"name": sys.name, "d": sys.d, "n1": sys.n1, "n2": sys.n2,
           "D": [float(x) for x in sys.D.ravel()]}
    for i, Ai in enumerate(sys.A):
        out[f"A{i + 1}"] = [float(x) for x in Ai.ravel()]
    return out


def resolve_system(name_or_path: str) -> SystemSpec:
    """Builtin name, shipped fixture, or path to a system file."""
    if name_or_path in BUILTIN_SYSTEMS:
        return BUILTIN_SYSTEMS[name_or_path]()
    p = Path(name_or_path)
    if p.exists():
        return load_system_file(p)
    fixture = resources.files("decaychar.systems").joinpath(f"{name_or_path}.toml")
    if fixture.is_file():
        with fixture.open("rb") as fh:
            return system_from_dict(tomllib.load(fh))
    raise FileNotFoundError(f"unknown system '{name_or_path}' (not builtin, not a file)")


def euler_eigenvalues(c_star: float, rad: np.ndarray) -> np.ndarray:
    """Closed-form acoustic eigenvalues -1/2 +- sqrt(1 - 4 c*^2 |xi|^2)/2."""
    rad = np.asarray(rad, dtype=float)
    r = np.lib.scimath.sqrt(1.0 - 4.0 * c_star**2 * rad**2)
    return np.stack([(-1.0 + r) / 2.0, (-1.0 - r) / 2.0], axis=-1)
