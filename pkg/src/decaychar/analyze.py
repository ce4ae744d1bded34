"""Rate fitting and theorem-shaped verdicts on norm time series.

The decay statements under test all have the form

    c (1+t)^{-beta}  <=  ||V(t)||  <=  C (1+t)^{-beta},

so the two instruments here are a log-log least-squares slope (with RMS
residual) and a two-sided envelope check (min/max of t^beta * value over a
window).  The prediction table evaluates the exponents of the asymptotic
stability statements:

    alpha* = 1                       if -d/p <= sigma1 < d/p - 2,
             d/p - 1 - sigma1 - eps1 if d/p - 2 <= sigma1 < d/p - 1,

with 0 < eps1 < d/p - 1 - sigma1, and piecewise sigma1*, sigma2* equal to
alpha* or alpha*/2 depending on where the tested regularity sits, plus
beta* = (d/p + 1 - sigma1 - alpha*/2 - eps1) / 2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    InsufficientSamples,
    MismatchedTimes,
    NonpositiveValue,
    SigmaOutOfRange,
    SparseTrajectory,
)
from .spectral import BesovSpec, DyadicLadder, SpectralField, block_lp_norms, low_frequency_part

DEFAULT_SLOPE_TOL = 0.07
DEFAULT_RATIO_CAP = 5.0
NOISE_FLOOR = 1e-10  # relative to the reference scale


@dataclass(frozen=True)
class NormSeries:
    """A labelled norm time series."""

    label: str
    times: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.times) != len(self.values):
            raise MismatchedTimes("times and values differ in length")
        if any(not math.isfinite(v) for v in self.values):
            raise NonpositiveValue("series contains non-finite values")
        if any(t2 <= t1 for t1, t2 in zip(self.times, self.times[1:])):
            raise MismatchedTimes("times must be strictly increasing")

    @classmethod
    def make(cls, label: str, times, values) -> "NormSeries":
        return cls(label, tuple(float(t) for t in times), tuple(float(v) for v in values))

    def window(self, t_min: float, t_max: float) -> "NormSeries":
        sel = [(t, v) for t, v in zip(self.times, self.values) if t_min <= t <= t_max]
        return NormSeries(self.label, tuple(t for t, _ in sel), tuple(v for _, v in sel))

    def as_dict(self) -> dict:
        return {"label": self.label, "times": list(self.times), "values": list(self.values)}


def fit_decay(series: NormSeries, window: tuple[float, float]) -> tuple[float, float, float]:
    """OLS of log(value) against log(t) inside the window.

    Returns (slope, intercept, rms_residual).
    """
    sub = series.window(*window)
    if len(sub.times) < 8:
        raise InsufficientSamples(
            f"{len(sub.times)} samples in window {window}; need at least 8")
    values = np.asarray(sub.values)
    if np.any(values <= 0):
        raise NonpositiveValue("log-log fit needs positive values")
    x = np.log(np.asarray(sub.times))
    y = np.log(values)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    return float(slope), float(intercept), float(np.sqrt(np.mean(resid**2)))


@dataclass(frozen=True)
class DecayReport:
    """Slope + two-sided envelope verdict for one norm series."""

    label: str
    predicted_rate: float
    fitted_rate: float
    residual: float
    c_lower: float
    C_upper: float
    window: tuple[float, float]
    tol: float
    ratio_cap: float
    slope_ok: bool
    envelope_ok: bool
    verdict: str  # "pass" | "fail" | "below_noise_floor" | "degenerate"

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def as_dict(self) -> dict:
        return {
            "label": self.label,
            "predicted_rate": self.predicted_rate,
            "fitted_rate": self.fitted_rate,
            "residual": self.residual,
            "c_lower": self.c_lower,
            "C_upper": self.C_upper,
            "window": list(self.window),
            "tol": self.tol,
            "ratio_cap": self.ratio_cap,
            "slope_ok": self.slope_ok,
            "envelope_ok": self.envelope_ok,
            "verdict": self.verdict,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DecayReport":
        d = dict(data)
        d["window"] = tuple(d["window"])
        return cls(**d)


def two_sided_check(series: NormSeries, predicted_rate: float,
                    tol: float = DEFAULT_SLOPE_TOL,
                    ratio_cap: float = DEFAULT_RATIO_CAP,
                    window: tuple[float, float] | None = None) -> DecayReport:
    """Check c t^rate <= value <= C t^rate: slope within tol AND C/c <= ratio_cap.

    The envelope constants are min/max of t^{-predicted_rate} * value over the
    window, so the envelope verdict subsumes the slope verdict.
    """
    if window is None:
        window = (series.times[0], series.times[-1])
    slope, _, resid = fit_decay(series, window)
    sub = series.window(*window)
    t = np.asarray(sub.times)
    v = np.asarray(sub.values)
    weighted = v * t ** (-predicted_rate)
    c_lower = float(weighted.min())
    C_upper = float(weighted.max())
    slope_ok = abs(slope - predicted_rate) <= tol
    envelope_ok = (c_lower > 0) and (C_upper / c_lower <= ratio_cap)
    verdict = "pass" if (slope_ok and envelope_ok) else "fail"
    return DecayReport(label=series.label, predicted_rate=predicted_rate,
                       fitted_rate=slope, residual=resid, c_lower=c_lower,
                       C_upper=C_upper, window=tuple(window), tol=tol,
                       ratio_cap=ratio_cap, slope_ok=slope_ok,
                       envelope_ok=envelope_ok, verdict=verdict)


# ---------------------------------------------------------------------------
# prediction table


@dataclass(frozen=True)
class PredictionTable:
    """Asymptotic-stability exponents for data of character sigma1 at (d, p)."""

    sigma1: float
    d: int
    p: float
    epsilon1: float
    alpha_star: float
    sigma1_star: float  # evaluated at the conservative test regularity sigma
    sigma2_star: float  # evaluated at the dissipative test regularity sigma'
    beta_star: float
    sigma: float
    sigma_prime: float

    def as_dict(self) -> dict:
        return {"sigma1": self.sigma1, "d": self.d, "p": self.p,
                "epsilon1": self.epsilon1, "alpha_star": self.alpha_star,
                "sigma1_star": self.sigma1_star, "sigma2_star": self.sigma2_star,
                "beta_star": self.beta_star, "sigma": self.sigma,
                "sigma_prime": self.sigma_prime}


def predictions(sigma1: float, d: int, p: float,
                sigma: float = 0.0, sigma_prime: float = 0.0) -> PredictionTable:
    """Evaluate the exponent table at data character sigma1 and norm indices
    sigma (conservative part) and sigma' (dissipative part).

    Case splits are half-open exactly as stated:
      alpha* = 1 on -d/p <= sigma1 < d/p-2, else d/p-1-sigma1-eps1 on
      d/p-2 <= sigma1 < d/p-1;  sigma1* = alpha* for sigma <= d/p-1 and
      alpha*/2 on (d/p-1, d/p+1-alpha*];  sigma2* = alpha* for
      sigma' <= d/p-2 and alpha*/2 on (d/p-2, d/p-alpha*].
    """
    dp = d / p
    if not (-dp <= sigma1 < dp - 1.0):
        raise SigmaOutOfRange(
            f"sigma1={sigma1} outside [-d/p, d/p-1) = [{-dp}, {dp - 1.0})")
    epsilon1 = min(0.1, (dp - 1.0 - sigma1) / 2.0)
    if sigma1 < dp - 2.0:
        alpha_star = 1.0
    else:
        alpha_star = dp - 1.0 - sigma1 - epsilon1
    if not (sigma1 < sigma <= dp + 1.0 - alpha_star):
        raise SigmaOutOfRange(
            f"sigma={sigma} outside (sigma1, d/p+1-alpha*] = ({sigma1}, {dp + 1.0 - alpha_star}]")
    # the stability window for the dissipative index is (sigma1+1, d/p-alpha*];
    # the closed lower end is tolerated so boundary regularities (the common
    # B^0 test at sigma1 = -d/p) can still be measured
    if not (sigma1 + 1.0 <= sigma_prime <= dp - alpha_star):
        raise SigmaOutOfRange(
            f"sigma'={sigma_prime} outside [sigma1+1, d/p-alpha*] "
            f"= [{sigma1 + 1.0}, {dp - alpha_star}]")
    sigma1_star = alpha_star if sigma <= dp - 1.0 else alpha_star / 2.0
    sigma2_star = alpha_star if sigma_prime <= dp - 2.0 else alpha_star / 2.0
    beta_star = 0.5 * (dp + 1.0 - sigma1 - alpha_star / 2.0 - epsilon1)
    return PredictionTable(sigma1=sigma1, d=d, p=p, epsilon1=epsilon1,
                           alpha_star=alpha_star, sigma1_star=sigma1_star,
                           sigma2_star=sigma2_star, beta_star=beta_star,
                           sigma=sigma, sigma_prime=sigma_prime)


# ---------------------------------------------------------------------------
# profile and nonlinear-linear comparisons


@dataclass(frozen=True)
class ProfileGapReport:
    slope_V: float
    slope_gap: float
    threshold: float
    passed: bool
    degenerate: bool = False

    def as_dict(self) -> dict:
        return {"slope_V": self.slope_V, "slope_gap": self.slope_gap,
                "threshold": self.threshold, "passed": self.passed,
                "degenerate": self.degenerate}


def profile_gap(series_V: NormSeries, series_gap: NormSeries,
                sigma_star: float, window: tuple[float, float],
                margin: float = 0.1) -> ProfileGapReport:
    """Compare the decay slope of ||V - V*|| against that of ||V||.

    pass iff slope(gap) - slope(V) <= -sigma_star/2 + margin.  A gap series
    at the floor (V* == V) is reported degenerate instead of fitted.
    """
    if series_V.times != series_gap.times:
        raise MismatchedTimes("trajectory and profile series sampled at different times")
    ref = max(series_V.values)
    if max(series_gap.values) <= NOISE_FLOOR * ref:
        return ProfileGapReport(slope_V=0.0, slope_gap=0.0, threshold=0.0,
                                passed=False, degenerate=True)
    slope_V, _, _ = fit_decay(series_V, window)
    slope_G, _, _ = fit_decay(series_gap, window)
    gap = slope_G - slope_V
    threshold = -sigma_star / 2.0 + margin
    return ProfileGapReport(slope_V=slope_V, slope_gap=gap, threshold=threshold,
                            passed=gap <= threshold)


def delta_v_report(times, nonlinear_traj: list[SpectralField],
                   linear_traj: list[SpectralField], ladder: DyadicLadder,
                   n1: int, table: PredictionTable,
                   window: tuple[float, float], p: float = 2.0,
                   tol: float = DEFAULT_SLOPE_TOL) -> list[DecayReport]:
    """Rate reports for delta V = V - V_L against the predicted accelerations.

    Both trajectories must come from identical initial data and share the
    snapshot times.  The conservative component is checked in B^sigma_{p,1}
    at the predicted rate -(sigma - sigma1 + sigma1*)/2 and the dissipative
    one at -(sigma' - sigma1 + 1 + sigma2*)/2; differences at the noise
    floor are flagged instead of fitted.
    """
    times = tuple(float(t) for t in times)
    if len(nonlinear_traj) != len(linear_traj) or len(times) != len(nonlinear_traj):
        raise MismatchedTimes("trajectories have different snapshot counts")
    from .spectral import besov_norm

    n = nonlinear_traj[0].n_comp
    comps = {
        "P": (slice(0, n1), BesovSpec(s=table.sigma, p=p, r=1.0),
              -(table.sigma - table.sigma1 + table.sigma1_star) / 2.0),
        "IP": (slice(n1, n), BesovSpec(s=table.sigma_prime, p=p, r=1.0),
               -(table.sigma_prime - table.sigma1 + 1.0 + table.sigma2_star) / 2.0),
    }
    reports = []
    for key, (sel, spec, predicted) in comps.items():
        ref_vals = []
        dv_vals = []
        for fN, fL in zip(nonlinear_traj, linear_traj):
            delta = SpectralField(fN.grid, fN.coeffs[sel] - fL.coeffs[sel])
            dv_vals.append(besov_norm(delta, ladder, spec))
            ref_vals.append(besov_norm(fN.component(sel), ladder, spec))
        label = f"delta_{key}_{spec.label()}"
        if max(dv_vals) <= NOISE_FLOOR * max(ref_vals):
            reports.append(DecayReport(
                label=label, predicted_rate=predicted, fitted_rate=float("nan"),
                residual=float("nan"), c_lower=0.0, C_upper=0.0, window=window,
                tol=tol, ratio_cap=math.inf, slope_ok=False, envelope_ok=False,
                verdict="below_noise_floor"))
            continue
        dv = NormSeries.make(label, times, dv_vals)
        slope, _, resid = fit_decay(dv, window)
        sub = dv.window(*window)
        weighted = np.asarray(sub.values) * np.asarray(sub.times) ** (-predicted)
        reports.append(DecayReport(
            label=label, predicted_rate=predicted, fitted_rate=slope,
            residual=resid, c_lower=float(weighted.min()), C_upper=float(weighted.max()),
            window=window, tol=tol, ratio_cap=math.inf,
            slope_ok=slope <= predicted + tol, envelope_ok=True,
            verdict="pass" if slope <= predicted + tol else "fail"))
    return reports


# ---------------------------------------------------------------------------
# Chemin-Lerner time norms


def _hybrid_block_table(fld: SpectralField, ladder: DyadicLadder, p: float):
    """Per-block L^p norms of the low part and L^2 norms of the high band."""
    low = low_frequency_part(fld, ladder)
    js_low = range(ladder.j_min, min(ladder.J0, ladder.j_max) + 1)
    js_high = range(max(ladder.J0 - 1, ladder.j_min), ladder.j_max + 1)
    bn_low = block_lp_norms(low, ladder, p, js_low)
    bn_high = block_lp_norms(fld, ladder, 2.0, js_high)
    return js_low, bn_low, js_high, bn_high


def hybrid_energy(fld: SpectralField, ladder: DyadicLadder, p: float, n1: int) -> float:
    """Single-time value of the hybrid energy functional (the E integrand):
    conservative part in B^{d/p-1, d/2+1} and dissipative part in B^{d/p, d/2+1}."""
    grid = fld.grid
    dp = grid.d / p
    s_high = grid.d / 2.0 + 1.0
    total = 0.0
    for sel, s_low in ((slice(0, n1), dp - 1.0), (slice(n1, fld.n_comp), dp)):
        js_low, bn_low, js_high, bn_high = _hybrid_block_table(fld.component(sel), ladder, p)
        total += float(np.sum(bn_low * 2.0 ** (s_low * np.asarray(list(js_low)))))
        total += float(np.sum(bn_high * 2.0 ** (s_high * np.asarray(list(js_high)))))
    return total


def chemin_lerner_norms(times, fields: list[SpectralField], ladder: DyadicLadder,
                        p: float, n1: int,
                        s_low_E: float | None = None) -> tuple[float, float]:
    """Time-space energy and dissipation functionals of a trajectory.

    E_tilde: sup-in-time per block, then the hybrid sum with low exponent
    d/p - 1 on the conservative part and d/p on the dissipative part (high
    exponent d/2 + 1 for both).
    D: trapezoidal time integral per block with low exponents d/p + 1 / d/p.

    Requires at least 20 snapshots (geometric sampling recommended).
    """
    times = np.asarray(list(times), dtype=float)
    if len(fields) < 20 or times.size != len(fields):
        raise SparseTrajectory(f"need >= 20 snapshots, got {len(fields)}")
    grid = fields[0].grid
    d = grid.d
    dp = d / p
    s_high = d / 2.0 + 1.0
    comps = {"P": (slice(0, n1), dp - 1.0 if s_low_E is None else s_low_E, dp + 1.0),
             "IP": (slice(n1, fields[0].n_comp), dp, dp)}
    E_total = 0.0
    D_total = 0.0
    for key, (sel, sE, sD) in comps.items():
        tables = [_hybrid_block_table(f.component(sel), ladder, p) for f in fields]
        js_low, _, js_high, _ = tables[0]
        low_mat = np.array([t[1] for t in tables])   # (time, j)
        high_mat = np.array([t[3] for t in tables])
        wE_low = 2.0 ** (sE * np.asarray(list(js_low)))
        wD_low = 2.0 ** (sD * np.asarray(list(js_low)))
        w_high = 2.0 ** (s_high * np.asarray(list(js_high)))
        E_total += float(np.sum(low_mat.max(axis=0) * wE_low))
        E_total += float(np.sum(high_mat.max(axis=0) * w_high))
        D_total += float(np.sum(np.trapz(low_mat, times, axis=0) * wD_low))
        D_total += float(np.sum(np.trapz(high_mat, times, axis=0) * w_high))
    return E_total, D_total
