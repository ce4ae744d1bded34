"""Canned experiments: one per acceptance criterion, plus generic runners.

Every experiment is deterministic for its pinned seed, writes a JSON report,
CSV series, and a gnuplot script into the output directory, and returns the
report document with a boolean "passed".

Grid sizes here are per-experiment choices, recorded in the reports: the
time-decay fits need the infrared far better resolved than the module
defaults (low-frequency dyadic sums converge slowly in j, so a truncated
torus bends the late-time norms downward), while the high-frequency and
oracle experiments run on small grids.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from . import analyze, euler, propagate, reporting, spectral, system
from .analyze import NormSeries
from .errors import DecayCharError
from .spectral import BesovSpec, GridConfig, SpectralField

AC_RUNTIME_NOTE = "torus-IR-resolved grid chosen per experiment; fits use blocks with 2^j >= 4/L"


def _ensure_dir(out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _finish(out_dir, name: str, doc: dict, series: list[NormSeries] | None = None) -> dict:
    out = _ensure_dir(out_dir)
    if series:
        csv_path = reporting.write_series_csv(out / f"{name}.csv", series)
        reporting.write_gnuplot_script(out / f"{name}.gp", csv_path.name,
                                       [s.label for s in series], name)
    reporting.write_report_json(out / f"{name}.json", doc)
    return doc


def _linear_r2(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_res = float(np.sum(resid**2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), r2


def _component_series(label: str, times, fields, sel: slice, ladder, spec: BesovSpec) -> NormSeries:
    vals = [spectral.besov_norm(f.component(sel), ladder, spec) for f in fields]
    return NormSeries.make(label, times, vals)


# ---------------------------------------------------------------------------
# AC-1: oracle equivalence


def exp_oracle_equivalence(out_dir, seed: int = 0) -> dict:
    """Generic per-mode propagator against the closed-form Green matrix,
    200 log-spaced radii in [1e-3, 10] plus the defective radius, t in
    {0.1, 1, 10}, in both d=1 and d=2."""
    tol = 1e-8
    worst = 0.0
    details = {}
    for d in (1, 2):
        sys = system.euler1d_spec() if d == 1 else system.euler2d_spec()
        radii = np.geomspace(1e-3, 10.0, 200)
        radii = np.sort(np.append(radii, 0.5))  # defective radius for c*=1
        if d == 1:
            xis = radii[:, None]
        else:
            ang = 0.43
            xis = radii[:, None] * np.array([math.cos(ang), math.sin(ang)])[None, :]
        prop = propagate.Propagator(sys, xis)
        w = 0.0
        for t in (0.1, 1.0, 10.0):
            M = prop.matrices(t)
            for i, rad in enumerate(radii):
                G = euler.green_oracle(1.0, xis[i], t).G_hat
                err = float(np.max(np.abs(M[i] - G)) / max(np.max(np.abs(G)), 1e-300))
                w = max(w, err)
        details[f"d{d}_max_rel_err"] = w
        worst = max(worst, w)
    passed = worst <= tol
    doc = reporting.assemble_report(
        "oracle-equivalence", None, None, None, None, [],
        extra={"max_rel_err": worst, "tol": tol, "passed": passed, **details})
    return _finish(out_dir, "oracle-equivalence", doc)


# ---------------------------------------------------------------------------
# AC-2: stability verdicts


def exp_sk_verdicts(out_dir, seed: int = 0) -> dict:
    fixtures = {
        "euler1d": (system.euler1d_spec(), True),
        "euler2d": (system.euler2d_spec(), True),
        "decoupled1d": (system.decoupled1d_spec(), False),
        "toy-relaxation": (system.toy_relaxation_spec(2.0), True),
    }
    rows = {}
    ok = True
    for name, (sys, expect) in fixtures.items():
        rep = system.check_sk(sys)
        agree = (rep.ellipticity_min > 0) == rep.passes
        entry = rep.as_dict()
        entry["expected"] = expect
        entry["ellipticity_agrees"] = agree
        rows[name] = entry
        ok = ok and (rep.passes == expect) and agree
        if name == "decoupled1d":
            ok = ok and abs(rep.kernel_margin) <= 1e-10
    doc = reporting.assemble_report("sk-verdicts", None, None, None, None, [],
                                    extra={"fixtures": rows, "passed": ok})
    return _finish(out_dir, "sk-verdicts", doc)


# ---------------------------------------------------------------------------
# AC-3: heat-semigroup decay character


def exp_heat_character_1d(out_dir, seed: int = 7) -> dict:
    """Two-sided t^{-3/4} for the B^1_{2,1} norm of heat flow on sigma1=-1/2 data."""
    grid = GridConfig(d=1, N=8192, box_scale=512)
    ladder = spectral.make_ladder(grid, J0=-2)
    sys = system.euler1d_spec()  # effective diffusion = Laplacian for c*=1
    fld = spectral.synth_decay_character(grid, sigma1=-0.5, p=2.0, seed=seed,
                                         ladder=ladder)
    times = np.geomspace(5.0, 4000.0, 48)
    spec = BesovSpec(s=1.0, p=2.0, r=1.0)
    vals = [spectral.besov_norm(propagate.parabolic_semigroup(sys, fld, t), ladder, spec)
            for t in times]
    series = NormSeries.make("heat_" + spec.label(), times, vals)
    rep = analyze.two_sided_check(series, predicted_rate=-0.75, tol=0.05,
                                  ratio_cap=5.0, window=(10.0, 2000.0))
    doc = reporting.assemble_report(
        "heat-character-1d", {"name": sys.name}, grid.as_dict(), ladder.as_dict(),
        None, [rep], extra={"seed": seed, "sigma1": -0.5, "note": AC_RUNTIME_NOTE})
    return _finish(out_dir, "heat-character-1d", doc, [series])


# ---------------------------------------------------------------------------
# AC-4 + AC-5: linear damped Euler rates and parabolic-profile gap (d=2)


def _linear_rates_2d_run(seed: int):
    grid = GridConfig(d=2, N=2048, box_scale=1024)
    ladder = spectral.make_ladder(grid, J0=-2)
    sys = system.euler2d_spec()
    scalar = spectral.synth_decay_character(grid, sigma1=-1.0, p=2.0, seed=seed,
                                            cutoff=0.3, ladder=ladder)
    field0 = SpectralField.zeros(grid, sys.n)
    field0.coeffs[0] = scalar.coeffs[0]
    psi0 = propagate.effective_quantity(sys, field0)
    times = np.geomspace(2.0, 2000.0, 36)
    idx = np.nonzero(np.any(field0.coeffs.reshape(sys.n, -1) != 0, axis=0))[0]
    prop = propagate.Propagator(sys, grid.frequencies_flat()[idx])
    spec0 = BesovSpec(s=0.0, p=2.0, r=1.0)
    P_sel, IP_sel = slice(0, sys.n1), slice(sys.n1, sys.n)
    rows = {"P": [], "IP": [], "P_gap": [], "IP_gap": []}
    for t in times:
        fld = propagate.evolve_linear(sys, field0, [t], propagator=prop)[0]
        vstar = propagate.chapman_profile(sys, psi0, float(t))
        gap = SpectralField(grid, fld.coeffs - vstar.coeffs)
        rows["P"].append(spectral.besov_norm(fld.component(P_sel), ladder, spec0))
        rows["IP"].append(spectral.besov_norm(fld.component(IP_sel), ladder, spec0))
        rows["P_gap"].append(spectral.besov_norm(gap.component(P_sel), ladder, spec0))
        rows["IP_gap"].append(spectral.besov_norm(gap.component(IP_sel), ladder, spec0))
    series = {k: NormSeries.make(k + "_B0_21", times, v) for k, v in rows.items()}
    return sys, grid, ladder, series


_LINEAR_2D_CACHE: dict = {}


def _linear_rates_2d_cached(seed: int):
    if seed not in _LINEAR_2D_CACHE:
        _LINEAR_2D_CACHE[seed] = _linear_rates_2d_run(seed)
    return _LINEAR_2D_CACHE[seed]


def exp_linear_rates_2d(out_dir, seed: int = 11) -> dict:
    """slope(|PV|_B0) = -1/2 and slope(|(I-P)V|_B0) = -1 with two-sided envelopes."""
    sys, grid, ladder, series = _linear_rates_2d_cached(seed)
    window = (20.0, 1000.0)
    rep_P = analyze.two_sided_check(series["P"], -0.5, tol=0.07, ratio_cap=5.0,
                                    window=window)
    rep_IP = analyze.two_sided_check(series["IP"], -1.0, tol=0.07, ratio_cap=5.0,
                                     window=window)
    doc = reporting.assemble_report(
        "linear-rates-2d", {"name": sys.name}, grid.as_dict(), ladder.as_dict(),
        None, [rep_P, rep_IP],
        extra={"seed": seed, "sigma1": -1.0, "note": AC_RUNTIME_NOTE})
    return _finish(out_dir, "linear-rates-2d", doc, list(series.values()))


def exp_chapman_gap_2d(out_dir, seed: int = 11) -> dict:
    """|P(V-V*)| and |(I-P)(V-V*)| decay at least 0.3 steeper than V itself."""
    sys, grid, ladder, series = _linear_rates_2d_cached(seed)
    window = (20.0, 1000.0)
    table = analyze.predictions(-1.0, 2, 2.0)
    gap_P = analyze.profile_gap(series["P"], series["P_gap"], table.sigma1_star,
                                window)
    gap_IP = analyze.profile_gap(series["IP"], series["IP_gap"], table.sigma2_star,
                                 window)
    required = -0.3
    ok = (gap_P.slope_gap <= required and gap_IP.slope_gap <= required
          and gap_P.passed and gap_IP.passed)
    doc = reporting.assemble_report(
        "chapman-gap-2d", {"name": sys.name}, grid.as_dict(), ladder.as_dict(),
        table.as_dict(), [],
        extra={"seed": seed, "gap_P": gap_P.as_dict(), "gap_IP": gap_IP.as_dict(),
               "required_gap": required, "passed": ok})
    return _finish(out_dir, "chapman-gap-2d", doc, list(series.values()))


# ---------------------------------------------------------------------------
# AC-6: high-frequency exponential decay


def exp_highfreq_decay_2d(out_dir, seed: int = 17) -> dict:
    """log of the high-band B^{d/2+1}_{2,1} norm is linear in t with slope <= -0.2.

    The data sits where the acoustic eigenvalues are genuinely complex
    (|xi| > 1/(2c*)), which is the regime the uniform exponential bound
    describes; blocks straddling the crossing would decay diffusively and
    mask it.
    """
    grid = GridConfig(d=2, N=256, box_scale=16)
    ladder = spectral.make_ladder(grid, J0=-2)
    sys = system.euler2d_spec()
    rng_field = spectral.synth_decay_character(grid, sigma1=0.0, p=2.0, seed=seed,
                                               cutoff=1.0, ladder=ladder)
    # reshape the amplitude onto [0.8, 2.8]: pure complex-eigenvalue band
    rad = grid.radius
    amp = spectral.radial_taper(rad, 2.4, 2.8) * (rad >= 0.8)
    phases = rng_field.coeffs[0]
    with np.errstate(invalid="ignore", divide="ignore"):
        unit = np.where(np.abs(phases) > 0, phases / np.abs(phases), 0.0)
    field0 = SpectralField.zeros(grid, sys.n)
    field0.coeffs[0] = amp * unit
    times = np.linspace(0.0, 20.0, 41)
    traj = propagate.evolve_linear(sys, field0, times)
    spec_h = BesovSpec(s=grid.d / 2.0 + 1.0, p=2.0, r=1.0, band="high")
    vals = [spectral.besov_norm(f, ladder, spec_h) for f in traj]
    series = NormSeries.make("highband_" + spec_h.label(), times, vals)
    slope, r2 = _linear_r2(times, np.log(np.asarray(vals)))
    passed = (slope <= -0.2) and (r2 >= 0.99)
    doc = reporting.assemble_report(
        "highfreq-decay-2d", {"name": sys.name}, grid.as_dict(), ladder.as_dict(),
        None, [], extra={"seed": seed, "slope": slope, "r_squared": r2,
                         "slope_cap": -0.2, "r2_floor": 0.99, "passed": passed})
    return _finish(out_dir, "highfreq-decay-2d", doc, [series])


# ---------------------------------------------------------------------------
# AC-7: annulus two-sided envelope


def exp_annulus_envelope_1d(out_dir, seed: int = 2) -> dict:
    sys = system.euler1d_spec()
    env = propagate.annulus_envelope(sys, j=-5, p=2.0, seed=seed, lambda0=0.45)
    lo, hi = env.r_lower / env.rate_ref, env.R_upper / env.rate_ref
    passed = (0.5 <= lo <= 2.0) and (0.5 <= hi <= 2.0) and env.v2_fit_constant <= 10.0
    doc = reporting.assemble_report(
        "annulus-envelope-1d", {"name": sys.name}, None, None, None, [],
        extra={"seed": seed, "envelope": env.as_dict(),
               "rate_ratios": [lo, hi], "passed": passed})
    return _finish(out_dir, "annulus-envelope-1d", doc)


# ---------------------------------------------------------------------------
# AC-8: nonlinear-linear gap (d=2 Euler)


def exp_nonlinear_gap_2d(out_dir, seed: int = 13, epsilon: float = 1e-2,
                         t_end: float = 500.0) -> dict:
    grid = GridConfig(d=2, N=512, box_scale=128)
    ladder = spectral.make_ladder(grid, J0=-2)
    cfg = euler.EulerConfig(d=2, grid=grid, rho_bar=1.0, K=0.5, gamma=2.0,
                            epsilon=epsilon)
    sys = euler.to_system_spec(cfg)  # c* = 1
    scalar = spectral.synth_decay_character(grid, sigma1=-1.0, p=2.0, seed=seed,
                                            cutoff=0.5, ladder=ladder)
    sup = float(np.max(np.abs(scalar.to_physical())))
    field0 = SpectralField.zeros(grid, 3)
    field0.coeffs[0] = (epsilon / sup) * scalar.coeffs[0]
    times_req = np.geomspace(1.0, t_end, 28)
    actual, traj_N = euler.evolve_euler_nonlinear(cfg, field0, times_req)
    traj_L = euler.linear_euler_trajectory(cfg, field0, actual)
    window = (20.0, t_end)
    spec0 = BesovSpec(s=0.0, p=2.0, r=1.0)
    P_sel, IP_sel = slice(0, 1), slice(1, 3)
    s_PV = _component_series("P_nonlinear_B0", actual, traj_N, P_sel, ladder, spec0)
    s_PL = _component_series("P_linear_B0", actual, traj_L, P_sel, ladder, spec0)
    delta_series = []
    for fN, fL in zip(traj_N, traj_L):
        delta_series.append(SpectralField(grid, fN.coeffs - fL.coeffs))
    s_Pd = _component_series("P_delta_B0", actual, delta_series, P_sel, ladder, spec0)
    s_IPd = _component_series("IP_delta_B0", actual, delta_series, IP_sel, ladder, spec0)

    table = analyze.predictions(-1.0, 2, 2.0)
    slope_PV = analyze.fit_decay(s_PV, window)[0]
    slope_Pd = analyze.fit_decay(s_Pd, window)[0]
    gap_ok = slope_Pd <= slope_PV - 0.25
    reports = analyze.delta_v_report(actual, traj_N, traj_L, ladder, 1, table,
                                     window)

    # hybrid energy functional stays bounded relative to its initial value
    E_tilde, D_int = analyze.chemin_lerner_norms(actual, traj_N, ladder, 2.0, n1=1)
    E0 = analyze.hybrid_energy(traj_N[0], ladder, 2.0, n1=1)
    energy_ok = E_tilde <= 20.0 * E0
    passed = bool(gap_ok and energy_ok)
    doc = reporting.assemble_report(
        "nonlinear-gap-2d", {"name": sys.name}, grid.as_dict(), ladder.as_dict(),
        table.as_dict(), reports,
        extra={"seed": seed, "epsilon": epsilon,
               "slope_PV": slope_PV, "slope_P_delta": slope_Pd,
               "required_gap": -0.25, "gap_ok": gap_ok,
               "E_tilde": E_tilde, "E_tilde_0": E0, "D_integral": D_int,
               "energy_ok": energy_ok, "passed": passed})
    return _finish(out_dir, "nonlinear-gap-2d", doc, [s_PV, s_PL, s_Pd, s_IPd])


# ---------------------------------------------------------------------------
# AC-9: fast property suite


def exp_property_suite(out_dir, seed: int = 5) -> dict:
    checks: dict[str, bool] = {}
    values: dict[str, float] = {}

    grid = GridConfig(d=1, N=4096, box_scale=256)
    ladder = spectral.make_ladder(grid)
    defect = ladder.partition_defect()
    values["partition_defect"] = defect
    checks["partition_of_unity"] = defect <= 1e-12

    # Bernstein two-sided constants on a pure-annulus fixture (p=2 gradient)
    fld = propagate.plateau_field(grid, j=-3, n_comp=1, seed=seed)
    blocked = spectral.block(fld, ladder, -3)
    xi = np.broadcast_to(grid.frequency_axes[0], grid.shape)
    grad = SpectralField(grid, 1j * xi * blocked.coeffs)
    ratio = spectral.lp_norm(grad, 2) / (2.0**-3 * spectral.lp_norm(blocked, 2))
    values["bernstein_ratio"] = ratio
    checks["bernstein"] = (0.75 * (1 - 1e-6) <= ratio <= 8.0 / 3.0 * (1 + 1e-6))

    # Plancherel cross-check
    rnd = spectral.synth_decay_character(grid, sigma1=-0.5, p=2.0, seed=seed)
    n_par = spectral.lp_norm(rnd, 2)
    n_quad = spectral.lp_norm_quadrature(rnd, 2)
    values["plancherel_rel_diff"] = abs(n_par - n_quad) / n_par
    checks["plancherel"] = values["plancherel_rel_diff"] <= 1e-12

    # semigroup property and t=0 identity on sampled modes
    sys = system.euler1d_spec()
    prop = propagate.Propagator(sys, np.array([[0.05], [0.3], [0.7], [2.0]]))
    ident = np.max(np.abs(prop.matrices(0.0) - np.eye(2)))
    semi = np.max(np.abs(np.einsum("mij,mjk->mik", prop.matrices(0.7),
                                   prop.matrices(1.9)) - prop.matrices(2.6)))
    values["expm_identity_defect"] = float(ident)
    values["semigroup_defect"] = float(semi)
    checks["expm_identity"] = ident <= 1e-14
    checks["semigroup"] = semi <= 1e-10

    # prediction-table branch boundaries (half-open exactly as stated);
    # need d/p > 1 for the alpha* = 1 branch to be nonempty, so probe at d=3
    try:
        eps = 1e-9
        b1 = analyze.predictions(-0.5 - eps, 3, 2.0, sigma=0.4, sigma_prime=0.5)
        b2 = analyze.predictions(-0.5, 3, 2.0, sigma=0.4, sigma_prime=0.5)
        boundary_ok = (b1.alpha_star == 1.0) and (b2.alpha_star < 1.0)
        # sigma1* switches at sigma = d/p - 1 (closed on the left branch)
        s_edge = analyze.predictions(-1.0, 3, 2.0, sigma=0.5, sigma_prime=0.0)
        s_past = analyze.predictions(-1.0, 3, 2.0, sigma=0.5 + eps, sigma_prime=0.0)
        boundary_ok = boundary_ok and s_edge.sigma1_star == s_edge.alpha_star
        boundary_ok = boundary_ok and s_past.sigma1_star == s_past.alpha_star / 2.0
        # sigma2* switches at sigma' = d/p - 2 (window requires sigma1 = -d/p)
        p_edge = analyze.predictions(-1.5, 3, 2.0, sigma=0.5, sigma_prime=-0.5)
        p_past = analyze.predictions(-1.5, 3, 2.0, sigma=0.5, sigma_prime=-0.5 + eps)
        boundary_ok = boundary_ok and p_edge.sigma2_star == p_edge.alpha_star
        boundary_ok = boundary_ok and p_past.sigma2_star == p_past.alpha_star / 2.0
        # sigma1 window is [-d/p, d/p-1): both edges must be honored
        analyze.predictions(-1.5, 3, 2.0, sigma=0.0, sigma_prime=0.0)
        try:
            analyze.predictions(-1.5 - eps, 3, 2.0, sigma=0.0, sigma_prime=0.0)
            boundary_ok = False
        except DecayCharError:
            pass
        try:
            analyze.predictions(0.5, 3, 2.0, sigma=0.6, sigma_prime=1.5)
            boundary_ok = False
        except DecayCharError:
            pass
    except DecayCharError:
        boundary_ok = False
    checks["prediction_branches"] = boundary_ok

    # synth -> estimate round trip
    rt_ok = True
    for sig in (-0.5, 0.0, -0.25):
        f = spectral.synth_decay_character(grid, sigma1=sig, p=2.0, seed=seed)
        est = spectral.estimate_decay_character(f, ladder, 2.0)
        values[f"roundtrip_sigma1_{sig}"] = est.sigma1_hat
        rt_ok = rt_ok and abs(est.sigma1_hat - sig) <= 0.05
    checks["synth_estimate_roundtrip"] = rt_ok

    # deterministic CSV bytes
    out = _ensure_dir(out_dir)
    ser = NormSeries.make("det", [1.0, 2.0, 4.0], [1.0, 0.5, 0.25])
    p1 = reporting.write_series_csv(out / "det_a.csv", [ser])
    p2 = reporting.write_series_csv(out / "det_b.csv", [ser])
    checks["deterministic_csv"] = p1.read_bytes() == p2.read_bytes()

    passed = all(checks.values())
    doc = reporting.assemble_report(
        "property-suite", None, None, None, None, [],
        extra={"seed": seed, "checks": checks, "values": values, "passed": passed})
    return _finish(out_dir, "property-suite", doc)


# ---------------------------------------------------------------------------
# registry


EXPERIMENTS = {
    "oracle-equivalence": exp_oracle_equivalence,
    "sk-verdicts": exp_sk_verdicts,
    "heat-character-1d": exp_heat_character_1d,
    "linear-rates-2d": exp_linear_rates_2d,
    "chapman-gap-2d": exp_chapman_gap_2d,
    "highfreq-decay-2d": exp_highfreq_decay_2d,
    "annulus-envelope-1d": exp_annulus_envelope_1d,
    "nonlinear-gap-2d": exp_nonlinear_gap_2d,
    "property-suite": exp_property_suite,
}

CRITERION_OF = {
    "oracle-equivalence": "AC-1",
    "sk-verdicts": "AC-2",
    "heat-character-1d": "AC-3",
    "linear-rates-2d": "AC-4",
    "chapman-gap-2d": "AC-5",
    "highfreq-decay-2d": "AC-6",
    "annulus-envelope-1d": "AC-7",
    "nonlinear-gap-2d": "AC-8",
    "property-suite": "AC-9",
}


def run_reproduction(name: str, out_dir, seed: int | None = None) -> dict:
    if name not in EXPERIMENTS:
        raise KeyError(f"unknown experiment '{name}'; have {sorted(EXPERIMENTS)}")
    fn = EXPERIMENTS[name]
    if seed is None:
        return fn(out_dir)
    return fn(out_dir, seed=seed)


# ---------------------------------------------------------------------------
# config-driven generic runners (the CLI/service pipelines)


try:
    import tomllib as _toml
except ModuleNotFoundError:  # Python < 3.11
    import tomli as _toml

from dataclasses import dataclass, field as _field

from .errors import ConfigError


@dataclass
class ExperimentConfig:
    """Mirror of the structured-text run config (see README for the format)."""

    kind: str
    name: str = "experiment"
    system: str = "euler1d"
    seed: int = 0
    out_dir: str = "out"
    grid: dict = _field(default_factory=dict)     # d, N, box_scale
    ladder: dict = _field(default_factory=dict)   # J0, j_min, j_max
    data: dict = _field(default_factory=dict)     # sigma1, p, mode, cutoff, gap, amplitude
    times: dict = _field(default_factory=dict)    # t_min, t_max, count, spacing
    norms: list = _field(default_factory=list)    # [{s,p,r,band,component,predicted_rate}]
    fit: dict = _field(default_factory=dict)      # window, tol, ratio_cap
    euler: dict = _field(default_factory=dict)    # rho_bar, K, gamma
    series_csv: str | None = None

    KINDS = ("check", "synth", "run-linear", "run-euler", "decay", "profile",
             "delta-v", "reproduce")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ConfigError(f"unknown kind '{self.kind}'; expected one of {self.KINDS}")

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "kind" not in raw:
            raise ConfigError("config requires a 'kind'")
        return cls(**raw)

    @classmethod
    def from_toml(cls, path) -> "ExperimentConfig":
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        with open(p, "rb") as fh:
            return cls.from_dict(_toml.load(fh))


def _default_times(cfg: ExperimentConfig) -> np.ndarray:
    t = cfg.times
    t_min = float(t.get("t_min", 1.0))
    t_max = float(t.get("t_max", 100.0))
    count = int(t.get("count", 24))
    spacing = t.get("spacing", "geometric")
    if spacing == "geometric":
        return np.geomspace(max(t_min, 1e-12), t_max, count)
    return np.linspace(t_min, t_max, count)


def _build_grid(cfg: ExperimentConfig, d: int) -> GridConfig:
    g = cfg.grid
    if d == 1:
        N, L = int(g.get("N", 4096)), float(g.get("box_scale", 256))
    else:
        N, L = int(g.get("N", 1024)), float(g.get("box_scale", 64))
    return GridConfig(d=d, N=N, box_scale=L)


def _build_ladder(cfg: ExperimentConfig, grid: GridConfig):
    lad = cfg.ladder
    return spectral.make_ladder(grid, J0=lad.get("J0"),
                                j_min=lad.get("j_min"), j_max=lad.get("j_max"))


def _synth_initial(cfg: ExperimentConfig, sys, grid: GridConfig, ladder,
                   normalize_sup: bool = False) -> SpectralField:
    d = cfg.data
    field0 = SpectralField.zeros(grid, sys.n)
    comps = d.get("components", "conservative")
    n_fill = sys.n1 if comps == "conservative" else sys.n
    scalar = spectral.synth_decay_character(
        grid, sigma1=float(d.get("sigma1", -grid.d / 2.0)), p=float(d.get("p", 2.0)),
        seed=cfg.seed, mode=d.get("mode", "radial"), cutoff=float(d.get("cutoff", 1.0)),
        gap=int(d.get("gap", 2)), ladder=ladder, n_comp=n_fill)
    amp = float(d.get("amplitude", 1.0))
    if normalize_sup:
        amp /= float(np.max(np.abs(scalar.to_physical())))
    field0.coeffs[:n_fill] = amp * scalar.coeffs
    return field0


def _norm_spec(entry: dict) -> tuple[BesovSpec, str, float | None]:
    hybrid = entry.get("hybrid")
    spec = BesovSpec(s=float(entry.get("s", 0.0)), p=float(entry.get("p", 2.0)),
                     r=float(entry.get("r", 1.0)), band=entry.get("band", "full"),
                     hybrid=tuple(hybrid) if hybrid else None)
    return spec, entry.get("component", "all"), entry.get("predicted_rate")


def _component_slice(sys, which: str) -> slice:
    if which == "conservative":
        return slice(0, sys.n1)
    if which == "dissipative":
        return slice(sys.n1, sys.n)
    return slice(0, sys.n)


def _series_and_reports(cfg, sys, ladder, times, fields):
    norm_entries = cfg.norms or [{"s": 0.0, "p": 2.0, "r": 1.0, "component": "all"}]
    series, reports = [], []
    for entry in norm_entries:
        spec, comp, predicted = _norm_spec(entry)
        sel = _component_slice(sys, comp)
        label = f"{comp}_{spec.label()}"
        ser = _component_series(label, times, fields, sel, ladder, spec)
        series.append(ser)
        if predicted is not None:
            window = tuple(cfg.fit.get("window", (times[0], times[-1])))
            reports.append(analyze.two_sided_check(
                ser, float(predicted), tol=float(cfg.fit.get("tol", 0.07)),
                ratio_cap=float(cfg.fit.get("ratio_cap", 5.0)), window=window))
    return series, reports


def run_check(cfg: ExperimentConfig) -> dict:
    sys = system.resolve_system(cfg.system)
    rep = system.check_sk(sys)
    agree = (rep.ellipticity_min > 0) == rep.passes
    doc = reporting.assemble_report(
        cfg.name, system.system_to_dict(sys), None, None, None, [],
        extra={"sk_report": rep.as_dict(), "ellipticity_agrees": bool(agree),
               "passed": bool(rep.passes and agree)})
    return _finish(cfg.out_dir, cfg.name, doc)


def run_synth(cfg: ExperimentConfig) -> dict:
    d = int(cfg.grid.get("d", cfg.data.get("d", 1)))
    grid = _build_grid(cfg, d)
    ladder = _build_ladder(cfg, grid)
    data = cfg.data
    sigma1 = float(data.get("sigma1", -d / 2.0))
    fld = spectral.synth_decay_character(
        grid, sigma1=sigma1, p=float(data.get("p", 2.0)), seed=cfg.seed,
        mode=data.get("mode", "radial"), cutoff=float(data.get("cutoff", 1.0)),
        gap=int(data.get("gap", 2)), ladder=ladder)
    est = spectral.estimate_decay_character(fld, ladder, float(data.get("p", 2.0)))
    out = _ensure_dir(cfg.out_dir)
    reporting.save_field(out / f"{cfg.name}_field.npz", fld,
                         meta={"sigma1": sigma1, "seed": cfg.seed})
    bn = spectral.block_lp_norms(fld, ladder, float(data.get("p", 2.0)))
    reporting.write_block_norms_csv(out / f"{cfg.name}_blocks.csv",
                                    list(ladder.js), bn, sigma1)
    passed = abs(est.sigma1_hat - sigma1) <= 0.05
    doc = reporting.assemble_report(
        cfg.name, None, grid.as_dict(), ladder.as_dict(), None, [],
        extra={"seed": cfg.seed, "sigma1": sigma1, "estimate": est.as_dict(),
               "passed": bool(passed)})
    return _finish(cfg.out_dir, cfg.name, doc)


def run_linear(cfg: ExperimentConfig) -> dict:
    sys = system.resolve_system(cfg.system)
    grid = _build_grid(cfg, sys.d)
    ladder = _build_ladder(cfg, grid)
    field0 = _synth_initial(cfg, sys, grid, ladder)
    times = _default_times(cfg)
    fields = propagate.evolve_linear(sys, field0, times)
    series, reports = _series_and_reports(cfg, sys, ladder, times, fields)
    doc = reporting.assemble_report(
        cfg.name, system.system_to_dict(sys), grid.as_dict(), ladder.as_dict(),
        None, reports, extra={"seed": cfg.seed})
    return _finish(cfg.out_dir, cfg.name, doc, series)


def _euler_config(cfg: ExperimentConfig, grid: GridConfig) -> euler.EulerConfig:
    e = cfg.euler
    return euler.EulerConfig(
        d=grid.d, grid=grid, rho_bar=float(e.get("rho_bar", 1.0)),
        K=float(e.get("K", 0.5)), gamma=float(e.get("gamma", 2.0)),
        epsilon=float(cfg.data.get("amplitude", 1e-2)))


def run_euler_cmd(cfg: ExperimentConfig) -> dict:
    d = int(cfg.grid.get("d", 2))
    grid = _build_grid(cfg, d)
    ladder = _build_ladder(cfg, grid)
    ecfg = _euler_config(cfg, grid)
    sys = euler.to_system_spec(ecfg)
    field0 = _synth_initial(cfg, sys, grid, ladder, normalize_sup=True)
    times = _default_times(cfg)
    actual, fields = euler.evolve_euler_nonlinear(ecfg, field0, times)
    series, reports = _series_and_reports(cfg, sys, ladder, actual, fields)
    mass0 = complex(field0.coeffs[0].flat[0]).real
    mass1 = complex(fields[-1].coeffs[0].flat[0]).real
    doc = reporting.assemble_report(
        cfg.name, system.system_to_dict(sys), grid.as_dict(), ladder.as_dict(),
        None, reports,
        extra={"seed": cfg.seed, "epsilon": ecfg.epsilon, "c_star": ecfg.c_star,
               "actual_times": [float(t) for t in actual],
               "mass_drift": abs(mass1 - mass0)})
    return _finish(cfg.out_dir, cfg.name, doc, series)


def run_decay(cfg: ExperimentConfig) -> dict:
    if not cfg.series_csv:
        raise ConfigError("decay runs need series_csv")
    series = reporting.read_series_csv(cfg.series_csv)
    window = tuple(cfg.fit.get("window", (series[0].times[0], series[0].times[-1])))
    predicted = float(cfg.fit.get("predicted_rate", -0.5))
    reports = [analyze.two_sided_check(
        s, predicted, tol=float(cfg.fit.get("tol", 0.07)),
        ratio_cap=float(cfg.fit.get("ratio_cap", 5.0)), window=window)
        for s in series]
    doc = reporting.assemble_report(cfg.name, None, None, None, None, reports)
    return _finish(cfg.out_dir, cfg.name, doc, series)


def run_profile(cfg: ExperimentConfig) -> dict:
    sys = system.resolve_system(cfg.system)
    grid = _build_grid(cfg, sys.d)
    ladder = _build_ladder(cfg, grid)
    field0 = _synth_initial(cfg, sys, grid, ladder)
    psi0 = propagate.effective_quantity(sys, field0)
    times = _default_times(cfg)
    sigma1 = float(cfg.data.get("sigma1", -grid.d / 2.0))
    p = float(cfg.data.get("p", 2.0))
    table = analyze.predictions(sigma1, grid.d, p)
    spec0 = BesovSpec(s=0.0, p=p, r=1.0)
    fields = propagate.evolve_linear(sys, field0, times)
    rows = {"P": [], "IP": [], "P_gap": [], "IP_gap": []}
    for t, fld in zip(times, fields):
        vstar = propagate.chapman_profile(sys, psi0, float(t))
        gap = SpectralField(grid, fld.coeffs - vstar.coeffs)
        rows["P"].append(spectral.besov_norm(fld.component(slice(0, sys.n1)), ladder, spec0))
        rows["IP"].append(spectral.besov_norm(fld.component(slice(sys.n1, sys.n)), ladder, spec0))
        rows["P_gap"].append(spectral.besov_norm(gap.component(slice(0, sys.n1)), ladder, spec0))
        rows["IP_gap"].append(spectral.besov_norm(gap.component(slice(sys.n1, sys.n)), ladder, spec0))
    series = {k: NormSeries.make(k, times, v) for k, v in rows.items()}
    window = tuple(cfg.fit.get("window", (times[0], times[-1])))
    gap_P = analyze.profile_gap(series["P"], series["P_gap"], table.sigma1_star, window)
    gap_IP = analyze.profile_gap(series["IP"], series["IP_gap"], table.sigma2_star, window)
    doc = reporting.assemble_report(
        cfg.name, system.system_to_dict(sys), grid.as_dict(), ladder.as_dict(),
        table.as_dict(), [],
        extra={"seed": cfg.seed, "gap_P": gap_P.as_dict(), "gap_IP": gap_IP.as_dict(),
               "passed": bool(gap_P.passed and gap_IP.passed)})
    return _finish(cfg.out_dir, cfg.name, doc, list(series.values()))


def run_delta_v(cfg: ExperimentConfig) -> dict:
    d = int(cfg.grid.get("d", 2))
    grid = _build_grid(cfg, d)
    ladder = _build_ladder(cfg, grid)
    ecfg = _euler_config(cfg, grid)
    sys = euler.to_system_spec(ecfg)
    field0 = _synth_initial(cfg, sys, grid, ladder, normalize_sup=True)
    times = _default_times(cfg)
    actual, traj_N = euler.evolve_euler_nonlinear(ecfg, field0, times)
    traj_L = euler.linear_euler_trajectory(ecfg, field0, actual)
    sigma1 = float(cfg.data.get("sigma1", -grid.d / 2.0))
    p = float(cfg.data.get("p", 2.0))
    table = analyze.predictions(sigma1, grid.d, p)
    window = tuple(cfg.fit.get("window", (actual[len(actual) // 3], actual[-1])))
    reports = analyze.delta_v_report(actual, traj_N, traj_L, ladder, sys.n1,
                                     table, window, p=p)
    spec0 = BesovSpec(s=0.0, p=p, r=1.0)
    series = [
        _component_series("P_nonlinear", actual, traj_N, slice(0, sys.n1), ladder, spec0),
        _component_series("P_linear", actual, traj_L, slice(0, sys.n1), ladder, spec0),
    ]
    doc = reporting.assemble_report(
        cfg.name, system.system_to_dict(sys), grid.as_dict(), ladder.as_dict(),
        table.as_dict(), reports, extra={"seed": cfg.seed, "epsilon": ecfg.epsilon})
    return _finish(cfg.out_dir, cfg.name, doc, series)


def run_config(cfg: ExperimentConfig) -> dict:
    """Dispatch a parsed config to its pipeline; returns the report document."""
    runners = {
        "check": run_check,
        "synth": run_synth,
        "run-linear": run_linear,
        "run-euler": run_euler_cmd,
        "decay": run_decay,
        "profile": run_profile,
        "delta-v": run_delta_v,
    }
    if cfg.kind == "reproduce":
        return run_reproduction(cfg.name, cfg.out_dir)
    return runners[cfg.kind](cfg)
