"""Exact per-mode evolution of the linear system and its parabolic shadow.

The linear system  d/dt V + sum A^i d_i V + L V = 0  diagonalizes per Fourier
mode: V_hat(t, xi) = exp(t E(xi)) V_hat(0, xi) with E(xi) = -(i A(xi) + L).
Eigendecomposition is used where the eigenvector basis is well conditioned;
defective modes (eigenvalue crossings) fall back to scaling-and-squaring.

Alongside the exact flow this module builds the objects of the effective
decomposition: the quantity Psi = V1 - sum A^i_12 D^-1 d_i V2 whose leading
dynamics is the parabolic semigroup exp(t A_eff), the damped mode
Z = V2 + sum D^-1 (A^i_21 d_i V1 + A^i_22 d_i V2), and the parabolic profile
V* = (exp(t A_eff) Psi0, -sum D^-1 A^i_21 d_i exp(t A_eff) Psi0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ExpmFailure, DimensionMismatch, NotElliptic, RegimeViolation
from .spectral import GridConfig, SpectralField, phi_profile
from .system import SystemSpec, check_sk, check_strong_ellipticity, symbol_batch

COND_LIMIT = 1e6  # eigenvector condition number above which Pade takes over


class Propagator:
    """Cached per-mode factorization of exp(t E(xi)) on a fixed set of modes."""

    def __init__(self, sys: SystemSpec, xis: np.ndarray):
        self.sys = sys
        self.xis = np.asarray(xis, dtype=float).reshape(-1, sys.d)
        E = symbol_batch(sys, self.xis)
        self._E = E
        m, n = E.shape[0], E.shape[1]
        try:
            w, V = np.linalg.eig(E)
        except np.linalg.LinAlgError as exc:  # pragma: no cover
            raise ExpmFailure(None, f"batched eig failed: {exc}") from exc
        cond = np.linalg.cond(V)
        good = np.isfinite(cond) & (cond < COND_LIMIT)
        self._good = good
        self._w = w
        self._V = V
        self._Vinv = np.zeros_like(V)
        if np.any(good):
            self._Vinv[good] = np.linalg.inv(V[good])
        self._bad_idx = np.nonzero(~good)[0]

    @property
    def n_modes(self) -> int:
        return self.xis.shape[0]

    def matrices(self, t: float) -> np.ndarray:
        """exp(t E(xi)) for every cached mode, shape (m, n, n)."""
        n = self._E.shape[1]
        if t == 0.0:
            return np.broadcast_to(np.eye(n, dtype=complex), self._E.shape).copy()
        out = np.empty_like(self._E)
        g = self._good
        if np.any(g):
            ew = np.exp(t * self._w[g])
            out[g] = np.einsum("mij,mj,mjk->mik", self._V[g], ew, self._Vinv[g])
        for i in self._bad_idx:
            try:
                out[i] = scipy.linalg.expm(t * self._E[i])
            except Exception as exc:  # pragma: no cover
                raise ExpmFailure(self.xis[i], str(exc)) from exc
        return out

    def apply(self, vhat: np.ndarray, t: float) -> np.ndarray:
        """exp(t E(xi)) @ vhat per mode; vhat has shape (m, n)."""
        if t == 0.0:
            return vhat.copy()
        out = np.empty_like(vhat)
        g = self._good
        if np.any(g):
            y = np.einsum("mjk,mk->mj", self._Vinv[g], vhat[g])
            y *= np.exp(t * self._w[g])
            out[g] = np.einsum("mij,mj->mi", self._V[g], y)
        for i in self._bad_idx:
            out[i] = scipy.linalg.expm(t * self._E[i]) @ vhat[i]
        return out


def _support_indices(fld: SpectralField) -> np.ndarray:
    flat = fld.coeffs.reshape(fld.n_comp, -1)
    return np.nonzero(np.any(flat != 0, axis=0))[0]


def evolve_linear(sys: SystemSpec, field0: SpectralField, times,
                  propagator: Propagator | None = None) -> list[SpectralField]:
    """Exact-in-time linear evolution at the requested times.

    The propagator cache is built on the spectral support of field0 only;
    modes with zero data stay zero under the linear flow.
    """
    times = np.asarray(list(times), dtype=float)
    if times.size and times[0] < 0:
        raise DimensionMismatch("times must be nonnegative")
    if np.any(np.diff(times) < 0):
        raise DimensionMismatch("times must be nondecreasing")
    if field0.n_comp != sys.n:
        raise DimensionMismatch(f"field has {field0.n_comp} components, system needs {sys.n}")
    grid = field0.grid
    idx = _support_indices(field0)
    if propagator is None:
        xis = grid.frequencies_flat()[idx]
        propagator = Propagator(sys, xis)
    v0 = field0.coeffs.reshape(sys.n, -1)[:, idx].T  # (m, n)
    out = []
    for t in times:
        vt = propagator.apply(v0, float(t))
        coeffs = np.zeros((sys.n, grid.n_modes), dtype=complex)
        coeffs[:, idx] = vt.T
        out.append(SpectralField(grid, coeffs.reshape((sys.n,) + grid.shape)))
    return out


# ---------------------------------------------------------------------------
# parabolic symbol and semigroup


def parabolic_matrices(sys: SystemSpec, xis: np.ndarray) -> np.ndarray:
    """Symbol of the effective diffusion operator at each xi:

        -sum_{i,l} A^i_12 D^-1 A^l_21 xi_i xi_l     (n1 x n1, symmetric).
    """
    xis = np.asarray(xis, dtype=float).reshape(-1, sys.d)
    Dinv = np.linalg.inv(sys.D)
    out = np.zeros((xis.shape[0], sys.n1, sys.n1))
    for i in range(sys.d):
        A12_i = sys.A_blocks(i)[0]
        for l in range(sys.d):
            A21_l = sys.A_blocks(l)[1]
            out -= np.einsum("m,jk->mjk", xis[:, i] * xis[:, l], A12_i @ Dinv @ A21_l)
    return out


def _check_elliptic(sys: SystemSpec) -> float:
    ell = check_strong_ellipticity(sys)
    if ell <= 0:
        raise NotElliptic(f"effective diffusion operator is not elliptic (min eig {ell:.3e})")
    return ell


def parabolic_semigroup(sys: SystemSpec, psi0: SpectralField, t: float) -> SpectralField:
    """exp(t A_eff) psi0, computed per mode through the symmetric eigendecomposition."""
    if psi0.n_comp != sys.n1:
        raise DimensionMismatch(f"psi0 has {psi0.n_comp} components, expected n1={sys.n1}")
    _check_elliptic(sys)
    grid = psi0.grid
    idx = _support_indices(psi0)
    xis = grid.frequencies_flat()[idx]
    M = parabolic_matrices(sys, xis)
    v0 = psi0.coeffs.reshape(sys.n1, -1)[:, idx].T
    if sys.n1 == 1:
        vt = np.exp(t * M[:, 0, 0])[:, None] * v0
    else:
        w, Q = np.linalg.eigh(M)
        y = np.einsum("mji,mj->mi", Q, v0)
        y *= np.exp(t * w)
        vt = np.einsum("mij,mj->mi", Q, y)
    coeffs = np.zeros((sys.n1, grid.n_modes), dtype=complex)
    coeffs[:, idx] = vt.T
    return SpectralField(grid, coeffs.reshape((sys.n1,) + grid.shape))


# ---------------------------------------------------------------------------
# effective quantity, damped mode, parabolic profile


def _gradient_factors(sys: SystemSpec, grid: GridConfig) -> list[np.ndarray]:
    """i*xi_i broadcast over the grid, one per direction."""
    return [1j * np.broadcast_to(ax, grid.shape) for ax in grid.frequency_axes]


def effective_quantity(sys: SystemSpec, fld: SpectralField) -> SpectralField:
    """Psi = V1 - sum_i A^i_12 D^-1 d_i V2 (Fourier-side multiplier)."""
    if fld.n_comp != sys.n:
        raise DimensionMismatch(f"field has {fld.n_comp} components, system needs {sys.n}")
    Dinv = np.linalg.inv(sys.D)
    v1 = fld.coeffs[: sys.n1]
    v2 = fld.coeffs[sys.n1:]
    out = v1.copy()
    for i, ik in enumerate(_gradient_factors(sys, fld.grid)):
        A12 = sys.A_blocks(i)[0]
        out -= np.einsum("jk,k...->j...", A12 @ Dinv, ik * v2)
    return SpectralField(fld.grid, out)


def damped_mode(sys: SystemSpec, fld: SpectralField) -> SpectralField:
    """Z = V2 + sum_i D^-1 (A^i_21 d_i V1 + A^i_22 d_i V2)."""
    if fld.n_comp != sys.n:
        raise DimensionMismatch(f"field has {fld.n_comp} components, system needs {sys.n}")
    Dinv = np.linalg.inv(sys.D)
    v1 = fld.coeffs[: sys.n1]
    v2 = fld.coeffs[sys.n1:]
    out = v2.copy()
    for i, ik in enumerate(_gradient_factors(sys, fld.grid)):
        _, A21, A22 = sys.A_blocks(i)
        out += np.einsum("jk,k...->j...", Dinv @ A21, ik * v1)
        out += np.einsum("jk,k...->j...", Dinv @ A22, ik * v2)
    return SpectralField(fld.grid, out)


def chapman_profile(sys: SystemSpec, psi0: SpectralField, t: float) -> SpectralField:
    """Parabolic asymptotic profile V* = (v, -sum_i D^-1 A^i_21 d_i v), v = exp(t A_eff) psi0."""
    v1 = parabolic_semigroup(sys, psi0, t)
    Dinv = np.linalg.inv(sys.D)
    grid = psi0.grid
    out = np.zeros((sys.n,) + grid.shape, dtype=complex)
    out[: sys.n1] = v1.coeffs
    for i, ik in enumerate(_gradient_factors(sys, grid)):
        A21 = sys.A_blocks(i)[1]
        out[sys.n1:] -= np.einsum("jk,k...->j...", Dinv @ A21, ik * v1.coeffs)
    return SpectralField(grid, out)


# ---------------------------------------------------------------------------
# diagonalized system residual (Psi, Z) machinery


def _b_inverse_matrices(sys: SystemSpec, xis: np.ndarray) -> np.ndarray:
    """Inverse of B(xi) = I + sum_i D^-1 A^i_22 (i xi_i)
                        - sum_{i,l} D^-1 A^i_21 A^l_12 D^-1 xi_i xi_l  (n2 x n2).

    Well defined for low frequencies; the caller is responsible for staying
    inside that regime.
    """
    xis = np.asarray(xis, dtype=float).reshape(-1, sys.d)
    Dinv = np.linalg.inv(sys.D)
    m = xis.shape[0]
    B = np.broadcast_to(np.eye(sys.n2, dtype=complex), (m, sys.n2, sys.n2)).copy()
    for i in range(sys.d):
        _, A21_i, A22_i = sys.A_blocks(i)
        B += 1j * np.einsum("m,jk->mjk", xis[:, i], Dinv @ A22_i)
        for l in range(sys.d):
            A12_l = sys.A_blocks(l)[0]
            B -= np.einsum("m,jk->mjk", xis[:, i] * xis[:, l], Dinv @ A21_i @ A12_l @ Dinv)
    return np.linalg.inv(B)


def apply_parabolic_operator(sys: SystemSpec, psi: SpectralField) -> SpectralField:
    """A_eff applied to an n1-component field (Fourier multiplier)."""
    grid = psi.grid
    idx = _support_indices(psi)
    xis = grid.frequencies_flat()[idx]
    M = parabolic_matrices(sys, xis)
    v = psi.coeffs.reshape(sys.n1, -1)[:, idx].T
    vt = np.einsum("mjk,mk->mj", M, v)
    coeffs = np.zeros((sys.n1, grid.n_modes), dtype=complex)
    coeffs[:, idx] = vt.T
    return SpectralField(grid, coeffs.reshape((sys.n1,) + grid.shape))


def apply_L1(sys: SystemSpec, psi: SpectralField, z: SpectralField) -> SpectralField:
    """Right side of the diagonalized Psi equation, as a multiplier in (Psi, Z):

        L1 = [sum_{i,l} A^i_12 D^-1 A^l_22 d^2_{il} + sum_i A_eff A^i_12 D^-1 d_i]
             B^-1 (Z - sum_i D^-1 A^i_21 d_i Psi).
    """
    grid = psi.grid
    idx = np.union1d(_support_indices(psi), _support_indices(z))
    xis = grid.frequencies_flat()[idx]
    m = xis.shape[0]
    Dinv = np.linalg.inv(sys.D)
    psi_v = psi.coeffs.reshape(sys.n1, -1)[:, idx].T
    z_v = z.coeffs.reshape(sys.n2, -1)[:, idx].T

    # V2 = B^-1 (Z - sum_i D^-1 A^i_21 (i xi_i) Psi)
    rhs = z_v.astype(complex).copy()
    for i in range(sys.d):
        A21 = sys.A_blocks(i)[1]
        rhs -= (1j * xis[:, i])[:, None] * np.einsum("jk,mk->mj", Dinv @ A21, psi_v)
    v2 = np.einsum("mjk,mk->mj", _b_inverse_matrices(sys, xis), rhs)

    Aeff = parabolic_matrices(sys, xis)  # (m, n1, n1)
    op = np.zeros((m, sys.n1, sys.n2), dtype=complex)
    for i in range(sys.d):
        A12_i = sys.A_blocks(i)[0]
        for l in range(sys.d):
            A22_l = sys.A_blocks(l)[2]
            op -= np.einsum("m,jk->mjk", xis[:, i] * xis[:, l], A12_i @ Dinv @ A22_l)
        op += (1j * xis[:, i])[:, None, None] * np.einsum("mjk,kl->mjl", Aeff, A12_i @ Dinv)
    out_v = np.einsum("mjk,mk->mj", op, v2)
    coeffs = np.zeros((sys.n1, grid.n_modes), dtype=complex)
    coeffs[:, idx] = out_v.T
    return SpectralField(grid, coeffs.reshape((sys.n1,) + grid.shape))


# ---------------------------------------------------------------------------
# annulus envelope experiment


@dataclass(frozen=True)
class EnvelopeReport:
    """Two-sided exponential envelope of frequency-localized linear evolution."""

    j: int
    r_lower: float        # shallow (late-window) decay rate of |V1|
    R_upper: float        # steep (early-window) decay rate of |V1|
    c0: float             # lower envelope constant: c0 e^{-R_upper t} <= ratio
    C0: float             # upper envelope constant: ratio <= C0 e^{-r_lower t}
    rate_ref: float       # ellipticity scale: c*^2-like mean of |xi|^2 over the data
    v2_damped_rate: float
    v2_fit_constant: float
    times: tuple[float, ...]

    def as_dict(self) -> dict:
        return {"j": self.j, "r_lower": self.r_lower, "R_upper": self.R_upper,
                "c0": self.c0, "C0": self.C0, "rate_ref": self.rate_ref,
                "v2_damped_rate": self.v2_damped_rate,
                "v2_fit_constant": self.v2_fit_constant}


def plateau_field(grid: GridConfig, j: int, n_comp: int, seed: int = 0,
                  components: slice | None = None) -> SpectralField:
    """Random-phase data on the plateau sub-annulus {4/3 <= |xi|/2^j <= 3/2}
    where phi_j == 1 (so the data belongs to block j alone)."""
    from .spectral import _hermitian_unit_phases  # shared phase construction

    rng = np.random.default_rng(seed)
    rad = grid.radius
    sel = (rad >= 4.0 / 3.0 * 2.0**j) & (rad <= 1.5 * 2.0**j)
    if not np.any(sel):
        raise RegimeViolation(f"no grid modes on the plateau of block {j}")
    coeffs = np.zeros((n_comp,) + grid.shape, dtype=complex)
    comp_range = range(n_comp) if components is None else range(*components.indices(n_comp))
    for c in comp_range:
        phases = _hermitian_unit_phases(grid, rng)
        coeffs[c][sel] = phases[sel]
    return SpectralField(grid, coeffs)


def _ols_rate(times: np.ndarray, values: np.ndarray) -> tuple[float, float]:
    """Least squares of log(value) = b - rate * t; returns (rate, intercept b)."""
    A = np.column_stack([-times, np.ones_like(times)])
    sol, *_ = np.linalg.lstsq(A, np.log(values), rcond=None)
    return float(sol[0]), float(sol[1])


def annulus_envelope(sys: SystemSpec, j: int, p: float = 2.0,
                     times: np.ndarray | None = None,
                     grid: GridConfig | None = None, seed: int = 0,
                     lambda0: float | None = None) -> EnvelopeReport:
    """Evolve block-j data and fit the two-sided diffusive envelope of |V1|.

    The early-window OLS rate is steeper (fast modes still alive), the
    late-window rate shallower; both bracket the observed diffusive decay and
    the envelope constants c0, C0 close the bounds over the sampled window.
    |V2| is checked against the damped-plus-diffusive-tail decomposition.
    """
    from .spectral import lp_norm

    if lambda0 is None:
        lambda0 = check_sk(sys).lambda0
    lam = 2.0**j
    if lam > lambda0:
        raise RegimeViolation(f"2^j = {lam} exceeds the low-frequency boundary {lambda0}")
    if grid is None:
        grid = GridConfig(d=sys.d, N=4096 if sys.d == 1 else 512,
                          box_scale=256 if sys.d == 1 else 64)
    fld = plateau_field(grid, j, n_comp=sys.n, seed=seed)
    rad = grid.radius
    sel = (rad >= 4.0 / 3.0 * lam) & (rad <= 1.5 * lam)
    mean_u2 = float(np.mean((rad[sel] / lam) ** 2))
    ell = check_strong_ellipticity(sys)
    rate_ref = ell * lam * lam * mean_u2
    if times is None:
        times = np.geomspace(0.1 / rate_ref, 20.0 / rate_ref, 40)
    times = np.asarray(times, dtype=float)
    # extra early samples so the e^{-kappa t/2} transient of V2 is observable
    kappa_rate = sys.kappa / 2.0
    early = np.geomspace(0.05 / kappa_rate, 0.95 * times[0], 12)
    all_times = np.unique(np.concatenate([early, times]))
    traj = evolve_linear(sys, fld, all_times)
    n1_all = np.array([lp_norm(f.component(slice(0, sys.n1)), p) for f in traj])
    n2_all = np.array([lp_norm(f.component(slice(sys.n1, sys.n)), p) for f in traj])
    win = np.isin(all_times, times)
    tw, n1 = all_times[win], n1_all[win]
    n1_0 = lp_norm(fld.component(slice(0, sys.n1)), p)
    half = len(tw) // 2
    R_upper, _ = _ols_rate(tw[:half], n1[:half])
    r_lower, _ = _ols_rate(tw[half:], n1[half:])
    ratio = n1 / n1_0
    c0 = float(np.min(ratio * np.exp(R_upper * tw)))
    C0 = float(np.max(ratio * np.exp(r_lower * tw)))

    # |V2| <= C (lam e^{-r t} (|V1_0| + lam |V2_0|) + e^{-kappa t / 2} |V2_0|):
    # nonnegative least squares on the two envelope shapes, fitted in relative
    # terms so both regimes carry weight.
    n2_0 = lp_norm(fld.component(slice(sys.n1, sys.n)), p)
    shape_diff = lam * np.exp(-r_lower * all_times) * (n1_0 + lam * n2_0)
    shape_damp = np.exp(-kappa_rate * all_times) * (lam * n1_0 + n2_0)
    keep = n2_all > 1e-200
    scale = n2_all[keep]
    coefs, _ = _nnls2(shape_diff[keep] / scale, shape_damp[keep] / scale,
                      np.ones_like(scale))
    resid = 1.0 - coefs[0] * shape_diff[keep] / scale - coefs[1] * shape_damp[keep] / scale
    fit_const = float(max(coefs)) * (1.0 + float(np.maximum(resid, 0.0).max()))
    return EnvelopeReport(j=j, r_lower=r_lower, R_upper=R_upper, c0=c0, C0=C0,
                          rate_ref=rate_ref, v2_damped_rate=kappa_rate,
                          v2_fit_constant=fit_const,
                          times=tuple(float(t) for t in times))


def _nnls2(a: np.ndarray, b: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, float]:
    """Two-column nonnegative least squares (tiny fixed-size active set)."""
    import scipy.optimize

    A = np.column_stack([a, b])
    coefs, rnorm = scipy.optimize.nnls(A, y)
    return coefs, float(rnorm)
