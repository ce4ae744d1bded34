"""Exception types shared across the toolkit.

Every error carries enough context (indices, offending values) to name the
violated invariant in CLI/service output.
"""

from __future__ import annotations


class DecayCharError(Exception):
    """Base class for all toolkit errors."""


# ---------------------------------------------------------------------------
# system module


class DimensionMismatch(DecayCharError):
    pass


class AsymmetricMatrix(DecayCharError):
    def __init__(self, index: int, defect: float):
        self.index = index
        self.defect = defect
        super().__init__(f"A[{index}] is not symmetric (max |A - A^T| = {defect:.3e})")


class NonPositiveDissipation(DecayCharError):
    def __init__(self, min_eig: float):
        self.min_eig = min_eig
        super().__init__(f"dissipation block is not positive definite (min eigenvalue {min_eig:.3e})")


class NonzeroA11(DecayCharError):
    def __init__(self, index: int, norm: float):
        self.index = index
        self.norm = norm
        super().__init__(f"A[{index}] has nonzero conservative-conservative block (max entry {norm:.3e})")


class EigenSolveFailure(DecayCharError):
    def __init__(self, xi, detail: str = ""):
        self.xi = xi
        super().__init__(f"eigenvalue solve failed at xi={xi}: {detail}")


# ---------------------------------------------------------------------------
# spectral module


class UnresolvedBlock(DecayCharError):
    def __init__(self, j: int, detail: str = ""):
        self.j = j
        super().__init__(f"dyadic block j={j} is not resolved by the grid{': ' + detail if detail else ''}")


class BandOutOfRange(DecayCharError):
    pass


class UnresolvableSigma(DecayCharError):
    pass


class InsufficientBlocks(DecayCharError):
    pass


# ---------------------------------------------------------------------------
# propagate module


class ExpmFailure(DecayCharError):
    def __init__(self, xi, detail: str = ""):
        self.xi = xi
        super().__init__(f"matrix exponential failed at xi={xi}: {detail}")


class NotElliptic(DecayCharError):
    pass


class RegimeViolation(DecayCharError):
    pass


# ---------------------------------------------------------------------------
# euler module


class ZeroFrequency(DecayCharError):
    pass


class DensityFloorViolation(DecayCharError):
    def __init__(self, t: float, min_density: float):
        self.t = t
        self.min_density = min_density
        super().__init__(f"density fell to {min_density:.6g} at t={t:.6g} (floor is rho_bar/2)")


class CFLViolation(DecayCharError):
    def __init__(self, t: float, detail: str = ""):
        self.t = t
        super().__init__(f"CFL constraint violated at t={t:.6g}{': ' + detail if detail else ''}")


# ---------------------------------------------------------------------------
# analyze module


class InsufficientSamples(DecayCharError):
    pass


class NonpositiveValue(DecayCharError):
    pass


class SigmaOutOfRange(DecayCharError):
    pass


class MismatchedTimes(DecayCharError):
    pass


class SparseTrajectory(DecayCharError):
    pass


# ---------------------------------------------------------------------------
# cli / config


class ConfigError(DecayCharError):
    pass
