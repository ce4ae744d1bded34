"""Periodic-grid Fourier fields, dyadic (Littlewood-Paley) machinery, Besov norms.

Conventions
-----------
The domain is the torus [0, 2*pi*L)^d with N grid points per axis.  A field is
stored through its Fourier coefficients u_hat[k] (numpy FFT layout) such that

    u(x) = sum_k u_hat[k] exp(i (k/L) . x),

so the resolved physical frequencies are xi = k/L with |k| <= N/2, and
Parseval reads  int |u|^2 dx = (2 pi L)^d sum_k |u_hat[k]|^2.

The dyadic cutoffs follow the standard ladder: chi is a smooth radial bump
equal to 1 on B(0, 3/4) and 0 outside B(0, 4/3); phi(xi) = chi(xi/2) - chi(xi)
is supported on the annulus {3/4 <= |xi| <= 8/3} and sums to 1 over integer
dilations.  Block j applies phi(2^-j xi).  Low/high frequency bands split at
the threshold J0: low-band norms sum j <= J0, high-band norms sum j >= J0-1,
and the low-frequency part of a field keeps blocks j <= J0-1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft

from .errors import (
    BandOutOfRange,
    DimensionMismatch,
    InsufficientBlocks,
    UnresolvableSigma,
    UnresolvedBlock,
)

HERMITIAN_TOL = 1e-12
NORM_FLOOR = 1e-13
FIT_BLOCK_FACTOR = 4.0  # fitting uses blocks with 2^j >= 4 / L_box

_workers = 1


def set_workers(n: int) -> None:
    """FFT worker threads; results do not depend on this."""
    global _workers
    _workers = max(1, int(n))


def get_workers() -> int:
    return _workers


# ---------------------------------------------------------------------------
# radial bump profiles


def _g(x: np.ndarray) -> np.ndarray:
    out = np.zeros_like(x)
    m = x > 0
    with np.errstate(under="ignore"):
        out[m] = np.exp(-1.0 / x[m])
    return out


def smoothstep_down(x) -> np.ndarray:
    """C-infinity transition: exactly 1 for x <= 0, exactly 0 for x >= 1."""
    x = np.asarray(x, dtype=float)
    return _g(1.0 - x) / (_g(x) + _g(1.0 - x))


def chi_profile(rad) -> np.ndarray:
    """Radial low-pass bump: 1 on |xi| <= 3/4, 0 on |xi| >= 4/3."""
    rad = np.asarray(rad, dtype=float)
    return smoothstep_down((rad - 0.75) / (4.0 / 3.0 - 0.75))


def phi_profile(rad) -> np.ndarray:
    """Annulus bump chi(r/2) - chi(r), supported on [3/4, 8/3], == 1 on [4/3, 3/2]."""
    rad = np.asarray(rad, dtype=float)
    return chi_profile(rad / 2.0) - chi_profile(rad)


def radial_taper(rad, lo: float, hi: float) -> np.ndarray:
    """Smooth cutoff: 1 below lo, 0 above hi."""
    return smoothstep_down((np.asarray(rad, dtype=float) - lo) / (hi - lo))


# ---------------------------------------------------------------------------
# grid and fields


@dataclass(frozen=True)
class GridConfig:
    """Periodic grid: N points per axis on [0, 2 pi box_scale)^d."""

    d: int
    N: int
    box_scale: float

    def __post_init__(self):
        if self.d < 1 or self.d > 3:
            raise DimensionMismatch(f"dimension must be 1..3, got {self.d}")
        if self.N < 64 or (self.N & (self.N - 1)) != 0:
            raise DimensionMismatch(f"N must be a power of two >= 64, got {self.N}")
        if self.box_scale < 1:
            raise DimensionMismatch(f"box_scale must be >= 1, got {self.box_scale}")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.d

    @property
    def n_modes(self) -> int:
        return self.N**self.d

    @property
    def nyquist(self) -> float:
        return self.N / (2.0 * self.box_scale)

    @property
    def freq_spacing(self) -> float:
        return 1.0 / self.box_scale

    @property
    def volume(self) -> float:
        return (2.0 * math.pi * self.box_scale) ** self.d

    @cached_property
    def axis_wavenumbers(self) -> np.ndarray:
        """Integer wavenumbers in FFT layout (one axis)."""
        return np.fft.fftfreq(self.N, d=1.0 / self.N)

    @cached_property
    def frequency_axes(self) -> tuple[np.ndarray, ...]:
        k = self.axis_wavenumbers / self.box_scale
        return tuple(
            k.reshape((1,) * ax + (self.N,) + (1,) * (self.d - 1 - ax))
            for ax in range(self.d)
        )

    @cached_property
    def radius(self) -> np.ndarray:
        r2 = np.zeros(self.shape)
        for ax in self.frequency_axes:
            r2 = r2 + ax**2
        return np.sqrt(r2)

    def frequencies_flat(self) -> np.ndarray:
        """(n_modes, d) array of frequency vectors."""
        cols = [np.broadcast_to(ax, self.shape).ravel() for ax in self.frequency_axes]
        return np.column_stack(cols)

    def as_dict(self) -> dict:
        return {"d": self.d, "N": self.N, "box_scale": self.box_scale}


def _mirror(coeffs: np.ndarray, d: int) -> np.ndarray:
    """coeffs evaluated at -k (spatial axes are the last d axes)."""
    out = coeffs
    for ax in range(coeffs.ndim - d, coeffs.ndim):
        out = np.roll(np.flip(out, axis=ax), 1, axis=ax)
    return out


@dataclass
class SpectralField:
    """Fourier coefficients of an n_comp-component real field on a GridConfig."""

    grid: GridConfig
    coeffs: np.ndarray  # complex, shape (n_comp,) + grid.shape

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=complex)
        if self.coeffs.ndim == self.grid.d:
            self.coeffs = self.coeffs[None]
        if self.coeffs.shape[1:] != self.grid.shape:
            raise DimensionMismatch(
                f"coefficient shape {self.coeffs.shape} does not match grid {self.grid.shape}")

    @property
    def n_comp(self) -> int:
        return self.coeffs.shape[0]

    @classmethod
    def zeros(cls, grid: GridConfig, n_comp: int) -> "SpectralField":
        return cls(grid, np.zeros((n_comp,) + grid.shape, dtype=complex))

    @classmethod
    def from_physical(cls, grid: GridConfig, values: np.ndarray) -> "SpectralField":
        values = np.asarray(values, dtype=float)
        if values.ndim == grid.d:
            values = values[None]
        coeffs = scipy.fft.fftn(values, axes=tuple(range(1, grid.d + 1)),
                                workers=_workers) / grid.n_modes
        return cls(grid, coeffs)

    def copy(self) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs.copy())

    def component(self, sel) -> "SpectralField":
        """Sub-field with the selected component(s); sel is an int or a slice."""
        if isinstance(sel, int):
            sel = slice(sel, sel + 1)
        return SpectralField(self.grid, self.coeffs[sel])

    def to_physical(self, pad: int = 1) -> np.ndarray:
        """Real-space samples, optionally on a pad-times finer grid."""
        if pad == 1:
            out = scipy.fft.ifftn(self.coeffs, axes=tuple(range(1, self.grid.d + 1)),
                                  workers=_workers) * self.grid.n_modes
            return out.real
        M = pad * self.grid.N
        d = self.grid.d
        idx = (self.grid.axis_wavenumbers.astype(int)) % M
        big = np.zeros((self.n_comp,) + (M,) * d, dtype=complex)
        big[np.ix_(np.arange(self.n_comp), *([idx] * d))] = self.coeffs
        out = scipy.fft.ifftn(big, axes=tuple(range(1, d + 1)), workers=_workers) * (M**d)
        return out.real

    def hermitian_defect(self) -> float:
        """max |u_hat(-k) - conj(u_hat(k))| relative to the largest coefficient."""
        mirror = _mirror(self.coeffs, self.grid.d)
        top = float(np.max(np.abs(self.coeffs)))
        if top == 0.0:
            return 0.0
        return float(np.max(np.abs(mirror - np.conj(self.coeffs)))) / top

    def hermitize(self) -> "SpectralField":
        """Project onto Hermitian-symmetric (real-field) coefficients, in place."""
        mirror = _mirror(self.coeffs, self.grid.d)
        self.coeffs = 0.5 * (self.coeffs + np.conj(mirror))
        return self

    def scaled(self, c: float) -> "SpectralField":
        return SpectralField(self.grid, c * self.coeffs)


# ---------------------------------------------------------------------------
# dyadic ladder


def default_j_min(grid: GridConfig) -> int:
    """Smallest j whose block is fully resolved: 2^j * 3/4 >= 1/L."""
    return math.ceil(math.log2(4.0 / (3.0 * grid.box_scale)) - 1e-9)


def default_j_max(grid: GridConfig) -> int:
    """Largest j whose block fits under the Nyquist radius: 2^j * 8/3 <= N/(2L)."""
    return math.floor(math.log2(3.0 * grid.nyquist / 8.0) + 1e-9)


@dataclass
class DyadicLadder:
    """Precomputed dyadic multipliers phi_j on a grid, plus the low/high threshold."""

    grid: GridConfig
    j_min: int
    j_max: int
    J0: int
    _support: dict = field(default_factory=dict, repr=False)

    @property
    def js(self) -> range:
        return range(self.j_min, self.j_max + 1)

    @property
    def fit_j_min(self) -> int:
        """Torus-safe fitting floor: blocks with 2^j >= 4 / L_box."""
        return max(self.j_min,
                   math.ceil(math.log2(FIT_BLOCK_FACTOR / self.grid.box_scale) - 1e-9))

    def multiplier_support(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        """(flat indices, phi values) of block j on the grid; cached."""
        if j not in self._support:
            rad = self.grid.radius.ravel()
            lo, hi = 0.75 * 2.0**j, 8.0 / 3.0 * 2.0**j
            idx = np.nonzero((rad >= lo) & (rad <= hi))[0]
            self._support[j] = (idx, phi_profile(rad[idx] / 2.0**j))
        return self._support[j]

    def multiplier(self, j: int) -> np.ndarray:
        """phi_j on the full grid."""
        out = np.zeros(self.grid.n_modes)
        idx, vals = self.multiplier_support(j)
        out[idx] = vals
        return out.reshape(self.grid.shape)

    def low_pass(self, J: int) -> np.ndarray:
        """Multiplier of sum_{j <= J} phi_j = chi(xi / 2^{J+1}), with zero mean mode."""
        rad = self.grid.radius
        out = chi_profile(rad / 2.0 ** (J + 1))
        out.flat[0] = 0.0
        return out

    def partition_defect(self) -> float:
        """max |sum_j phi_j - 1| over grid radii inside the covered annulus

        [4/3 * 2^j_min, 4/3 * 2^j_max] (the inner edge is where the lowest
        block's own support ends and the ladder sum first reaches 1).
        """
        rad = self.grid.radius.ravel()
        lo, hi = 4.0 / 3.0 * 2.0**self.j_min, 4.0 / 3.0 * 2.0**self.j_max
        sel = (rad >= lo) & (rad <= hi)
        if not np.any(sel):
            return 0.0
        total = np.zeros(np.count_nonzero(sel))
        r = rad[sel]
        for j in self.js:
            total += phi_profile(r / 2.0**j)
        return float(np.max(np.abs(total - 1.0)))

    def as_dict(self) -> dict:
        return {"j_min": self.j_min, "j_max": self.j_max, "J0": self.J0,
                "fit_j_min": self.fit_j_min}


def make_ladder(grid: GridConfig, J0: int | None = None,
                j_min: int | None = None, j_max: int | None = None) -> DyadicLadder:
    """Build a ladder, checking that every block is resolved by the grid."""
    if j_min is None:
        j_min = default_j_min(grid)
    if j_max is None:
        j_max = default_j_max(grid)
    if J0 is None:
        J0 = -2
    if 2.0**j_min * 0.75 < grid.freq_spacing * (1.0 - 1e-12):
        raise UnresolvedBlock(j_min, f"2^j * 3/4 < 1/L_box = {grid.freq_spacing}")
    if 2.0**j_max * 8.0 / 3.0 > grid.nyquist * (1.0 + 1e-12):
        raise UnresolvedBlock(j_max, f"2^j * 8/3 > Nyquist radius {grid.nyquist}")
    if j_max < j_min:
        raise UnresolvedBlock(j_max, "empty ladder")
    return DyadicLadder(grid=grid, j_min=j_min, j_max=j_max, J0=int(J0))


def block(fld: SpectralField, ladder: DyadicLadder, j: int) -> SpectralField:
    """Frequency-localized piece: coefficients multiplied by phi(2^-j xi)."""
    if j < ladder.j_min or j > ladder.j_max:
        raise BandOutOfRange(f"block {j} outside ladder [{ladder.j_min}, {ladder.j_max}]")
    out = np.zeros_like(fld.coeffs)
    idx, vals = ladder.multiplier_support(j)
    flat = fld.coeffs.reshape(fld.n_comp, -1)
    out.reshape(fld.n_comp, -1)[:, idx] = flat[:, idx] * vals
    return SpectralField(fld.grid, out)


def low_frequency_part(fld: SpectralField, ladder: DyadicLadder) -> SpectralField:
    """u^l = sum_{j <= J0-1} block_j(u)."""
    mult = ladder.low_pass(ladder.J0 - 1)
    return SpectralField(fld.grid, fld.coeffs * mult)


def high_frequency_part(fld: SpectralField, ladder: DyadicLadder) -> SpectralField:
    """u^h = u - u^l (keeps the mean mode out, as u^l drops it too)."""
    mult = 1.0 - ladder.low_pass(ladder.J0 - 1)
    coeffs = fld.coeffs * mult
    coeffs[(slice(None),) + (0,) * fld.grid.d] = 0.0
    return SpectralField(fld.grid, coeffs)


# ---------------------------------------------------------------------------
# norms


def lp_norm(fld: SpectralField, p: float, pad: int = 2) -> float:
    """L^p norm over the torus of the pointwise Euclidean magnitude.

    p = 2 goes through Parseval on the coefficients; other p use quadrature
    on a pad-times oversampled physical grid (exact at p=2, spectrally
    accurate otherwise for band-limited fields).
    """
    if p == 2:
        return math.sqrt(fld.grid.volume * float(np.sum(np.abs(fld.coeffs) ** 2)))
    if not 1 <= p < math.inf:
        raise DimensionMismatch(f"p must be in [1, inf), got {p}")
    u = fld.to_physical(pad=pad)
    mag2 = np.sum(u * u, axis=0)
    cell = fld.grid.volume / mag2.size
    return float((cell * np.sum(mag2 ** (p / 2.0))) ** (1.0 / p))


def lp_norm_quadrature(fld: SpectralField, p: float, pad: int = 2) -> float:
    """Physical-space quadrature path for any p (cross-check for p=2)."""
    u = fld.to_physical(pad=pad)
    mag2 = np.sum(u * u, axis=0)
    cell = fld.grid.volume / mag2.size
    return float((cell * np.sum(mag2 ** (p / 2.0))) ** (1.0 / p))


def block_lp_norms(fld: SpectralField, ladder: DyadicLadder, p: float,
                   js: range | None = None) -> np.ndarray:
    """L^p norms of every dyadic block (vector magnitude over components)."""
    js = ladder.js if js is None else js
    if p == 2:
        power = np.sum(np.abs(fld.coeffs.reshape(fld.n_comp, -1)) ** 2, axis=0)
        vol = fld.grid.volume
        out = []
        for j in js:
            idx, vals = ladder.multiplier_support(j)
            out.append(math.sqrt(vol * float(np.sum(vals**2 * power[idx]))))
        return np.array(out)
    return np.array([lp_norm(block(fld, ladder, j), p) for j in js])


@dataclass(frozen=True)
class BesovSpec:
    """Which Besov-type norm to take: regularity s, integrability p, summation r,
    band in {full, low, high}; hybrid=(s1, s2) switches to the hybrid norm
    |u^l|_{B^{s1}_{p,1}} + |u|^h_{B^{s2}_{2,1}}."""

    s: float = 0.0
    p: float = 2.0
    r: float = 1.0
    band: str = "full"
    hybrid: tuple[float, float] | None = None

    def __post_init__(self):
        if not 1 <= self.p < math.inf:
            raise DimensionMismatch(f"p out of range: {self.p}")
        if not (self.r >= 1):
            raise DimensionMismatch(f"r out of range: {self.r}")
        if self.band not in ("full", "low", "high"):
            raise DimensionMismatch(f"unknown band {self.band!r}")
        if self.hybrid is not None and self.band != "full":
            raise DimensionMismatch("hybrid norm requires band='full'")

    def label(self) -> str:
        if self.hybrid is not None:
            return f"hybridB[{self.hybrid[0]:g},{self.hybrid[1]:g}]_p{self.p:g}"
        band = {"full": "", "low": "^l", "high": "^h"}[self.band]
        rtxt = "inf" if math.isinf(self.r) else f"{self.r:g}"
        return f"B^{self.s:g}_[{self.p:g},{rtxt}]{band}"


def _aggregate(weighted: np.ndarray, r: float) -> float:
    if math.isinf(r):
        return float(weighted.max()) if weighted.size else 0.0
    return float(np.sum(weighted**r) ** (1.0 / r)) if weighted.size else 0.0


def band_js(ladder: DyadicLadder, band: str) -> range:
    """Block range of a band: low sums j <= J0, high sums j >= J0 - 1."""
    if band == "full":
        return ladder.js
    if band == "low":
        if ladder.J0 < ladder.j_min:
            raise BandOutOfRange(f"low band empty: J0={ladder.J0} < j_min={ladder.j_min}")
        return range(ladder.j_min, min(ladder.J0, ladder.j_max) + 1)
    if ladder.J0 - 1 > ladder.j_max:
        raise BandOutOfRange(f"high band empty: J0-1={ladder.J0 - 1} > j_max={ladder.j_max}")
    return range(max(ladder.J0 - 1, ladder.j_min), ladder.j_max + 1)


def besov_norm(fld: SpectralField, ladder: DyadicLadder, spec: BesovSpec) -> float:
    """Dyadic-weighted l^r aggregation of block L^p norms (or the hybrid norm)."""
    if spec.hybrid is not None:
        s1, s2 = spec.hybrid
        low = low_frequency_part(fld, ladder)
        bn_low = block_lp_norms(low, ladder, spec.p,
                                range(ladder.j_min, min(ladder.J0, ladder.j_max) + 1))
        w_low = 2.0 ** (s1 * np.arange(ladder.j_min, min(ladder.J0, ladder.j_max) + 1))
        high_js = band_js(ladder, "high")
        bn_high = block_lp_norms(fld, ladder, 2.0, high_js)
        w_high = 2.0 ** (s2 * np.asarray(list(high_js)))
        return _aggregate(bn_low * w_low, 1.0) + _aggregate(bn_high * w_high, 1.0)
    js = band_js(ladder, spec.band)
    p_eff = spec.p if spec.band != "high" else spec.p
    bn = block_lp_norms(fld, ladder, p_eff, js)
    w = 2.0 ** (spec.s * np.asarray(list(js)))
    return _aggregate(bn * w, spec.r)


# ---------------------------------------------------------------------------
# decay-character synthesis and estimation


def _hermitian_unit_phases(grid: GridConfig, rng: np.random.Generator) -> np.ndarray:
    """Unit-modulus phases with exact Hermitian pairing (deterministic magnitudes).

    Self-conjugate modes (k == -k mod N) get phase +1.
    """
    shape = grid.shape
    theta = rng.uniform(0.0, 2.0 * np.pi, size=shape)
    phases = np.exp(1j * theta)
    k_axes = [grid.axis_wavenumbers.reshape((-1,) + (1,) * (grid.d - 1 - ax)).astype(int)
              for ax in range(grid.d)]
    # canonical half-space: first nonzero wavenumber component is positive
    canon = np.zeros(shape, dtype=bool)
    tie = np.ones(shape, dtype=bool)
    for ax in range(grid.d):
        k = grid.axis_wavenumbers.reshape((1,) * ax + (-1,) + (1,) * (grid.d - 1 - ax))
        canon |= tie & np.broadcast_to(k > 0, shape)
        tie = tie & np.broadcast_to(k == 0, shape)
    half = np.where(canon, phases, 0.0)
    out = half + np.conj(_mirror(half, grid.d))
    out[tie] = 1.0  # self-conjugate modes (includes k=0 and Nyquist lines)
    return out


def synth_decay_character(grid: GridConfig, sigma1: float, p: float = 2.0,
                          seed: int = 0, mode: str = "radial",
                          cutoff: float = 1.0, gap: int = 2,
                          ladder: DyadicLadder | None = None,
                          n_comp: int = 1) -> SpectralField:
    """Random-phase field whose low-frequency decay character is sigma1 (at p=2).

    radial: |f_hat(xi)| = |xi|^a * theta(|xi|) with a = -sigma1 - d/2 and theta
        a smooth cutoff equal to 1 below 3/4*cutoff and 0 above cutoff, so
        block L^2 norms scale like 2^{-sigma1 j}.
    lacunary: energy only on blocks j_k = j_top - k*gap (on the plateau
        sub-annulus where phi_j == 1, so neighboring blocks stay empty), with
        per-block amplitudes tuned to the same 2^{-sigma1 j} law.
    """
    if not 1 < p < math.inf:
        raise DimensionMismatch(f"p must be in (1, inf), got {p}")
    if ladder is None:
        ladder = make_ladder(grid)
    span = ladder.j_max - ladder.fit_j_min + 1
    if abs(sigma1) * span * math.log10(2.0) > 12.0:
        raise UnresolvableSigma(
            f"sigma1={sigma1} spans {abs(sigma1) * span * math.log10(2.0):.1f} decades "
            f"over {span} blocks")
    rng = np.random.default_rng(seed)
    rad = grid.radius
    a = -sigma1 - grid.d / 2.0
    coeffs = np.empty((n_comp,) + grid.shape, dtype=complex)
    if mode == "radial":
        with np.errstate(divide="ignore"):
            amp = np.where(rad > 0, rad, 1.0) ** a
        amp *= radial_taper(rad, 0.75 * cutoff, cutoff)
        amp.flat[0] = 0.0
        for c in range(n_comp):
            coeffs[c] = amp * _hermitian_unit_phases(grid, rng)
        return SpectralField(grid, coeffs)
    if mode != "lacunary":
        raise DimensionMismatch(f"unknown synth mode {mode!r}")
    if gap < 1:
        raise DimensionMismatch(f"lacunary gap must be >= 1, got {gap}")
    j_top = min(ladder.J0, ladder.j_max)
    blocks = list(range(j_top, ladder.fit_j_min - 1, -gap))
    if len(blocks) < 2:
        raise UnresolvableSigma(f"gap {gap} leaves {len(blocks)} resolvable block(s)")
    coeffs[:] = 0.0
    vol = grid.volume
    for c in range(n_comp):
        phases = _hermitian_unit_phases(grid, rng)
        for j in blocks:
            sel = (rad >= 4.0 / 3.0 * 2.0**j) & (rad <= 1.5 * 2.0**j)
            weight = math.sqrt(vol * float(np.count_nonzero(sel)))
            if weight == 0.0:
                raise UnresolvableSigma(f"no grid modes on the plateau of block {j}")
            coeffs[c][sel] = (2.0 ** (-sigma1 * j) / weight) * phases[sel]
    return SpectralField(grid, coeffs)


@dataclass(frozen=True)
class DecayCharacter:
    """Fitted low-frequency regularity: slope, two-sided constants, dyadic gap."""

    sigma1_hat: float
    c_lower: float
    C_upper: float
    gap_M: int
    fit_js: tuple[int, ...]
    block_norms: tuple[float, ...]

    def as_dict(self) -> dict:
        return {"sigma1_hat": self.sigma1_hat, "c_lower": self.c_lower,
                "C_upper": self.C_upper, "gap_M": self.gap_M,
                "fit_js": list(self.fit_js), "block_norms": list(self.block_norms)}


def estimate_decay_character(fld: SpectralField, ladder: DyadicLadder,
                             p: float = 2.0) -> DecayCharacter:
    """Least-squares slope of log2 block norms over the torus-safe low blocks.

    The fit range is [fit_j_min, J0]; it must contain at least 5 resolved
    blocks, of which at least 2 must carry norm above the floor (lacunary
    data legitimately leaves intermediate blocks empty).
    """
    j_lo = ladder.fit_j_min
    j_hi = min(ladder.J0, ladder.j_max)
    js = list(range(j_lo, j_hi + 1))
    if len(js) < 5:
        raise InsufficientBlocks(
            f"fit range [{j_lo}, {j_hi}] has {len(js)} blocks; need at least 5")
    bn = block_lp_norms(fld, ladder, p, range(j_lo, j_hi + 1))
    top = float(bn.max()) if bn.size else 0.0
    populated = bn > NORM_FLOOR * top if top > 0 else np.zeros(len(js), dtype=bool)
    n_pop = int(np.count_nonzero(populated))
    if n_pop < 2:
        raise InsufficientBlocks(f"only {n_pop} block(s) carry norm above the floor")
    js_pop = np.asarray(js, dtype=float)[populated]
    ln = np.log2(bn[populated])
    slope = float(np.polyfit(js_pop, ln, 1)[0])
    sigma1_hat = -slope
    weighted = 2.0 ** (sigma1_hat * js_pop) * bn[populated]
    c_lower = float(weighted.min())
    C_upper = float(weighted.max())
    significant = js_pop[weighted >= 0.5 * c_lower]
    gaps = np.diff(np.sort(significant))
    gap_M = int(gaps.max()) if gaps.size else 1
    return DecayCharacter(sigma1_hat=sigma1_hat, c_lower=c_lower, C_upper=C_upper,
                          gap_M=gap_M, fit_js=tuple(int(j) for j in js_pop),
                          block_norms=tuple(float(b) for b in bn[populated]))
