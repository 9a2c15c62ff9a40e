"""Time evolution of quasi-spinors under the mass-decay matrix.

The CP-diagonal case (no CP violation in the evolution) is a pair of damped
phases; the general non-Hermitian 2x2 case is solved by exact
eigen-decomposition rather than ODE stepping, since the kaon width ratio
(Gamma_S/Gamma_L ~ 580) makes the system stiff for integrators.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .core import ComplexEnergy, KaonParams, QuasiSpinor, _check_finite
from .errors import DegenerateEvolutionError

_NORM_TOL = 1e-9


@dataclass(frozen=True)
class SuperpositionState:
    """Coherent superposition of exponential modes, sum_k alpha_k e^{-iE_k t}.

    ``modes`` is a sequence of (amplitude, ComplexEnergy) pairs with the
    amplitudes normalised to sum |alpha_k|^2 = 1.  Use
    :meth:`from_amplitudes` to normalise raw amplitudes.
    """

    modes: tuple

    def __post_init__(self):
        modes = tuple((complex(a), e) for a, e in self.modes)
        if len(modes) < 1:
            raise ValueError("need at least one mode")
        for amp, energy in modes:
            _check_finite("amplitude", amp)
            if not isinstance(energy, ComplexEnergy):
                raise TypeError("mode energies must be ComplexEnergy")
        total = sum(abs(a) ** 2 for a, _ in modes)
        if abs(total - 1.0) > _NORM_TOL:
            raise ValueError(f"amplitudes must satisfy sum |alpha|^2 = 1, got {total}")
        object.__setattr__(self, "modes", modes)

    @classmethod
    def from_amplitudes(cls, amplitudes, energies) -> "SuperpositionState":
        """Build a state from unnormalised amplitudes."""
        amps = [complex(a) for a in amplitudes]
        total = math.sqrt(sum(abs(a) ** 2 for a in amps))
        if total == 0.0:
            raise ValueError("all amplitudes vanish")
        return cls(tuple((a / total, e) for a, e in zip(amps, energies, strict=True)))

    def amplitudes(self) -> np.ndarray:
        return np.array([a for a, _ in self.modes], dtype=complex)

    def masses(self) -> np.ndarray:
        return np.array([e.mass for _, e in self.modes], dtype=float)

    def widths(self) -> np.ndarray:
        return np.array([e.width for _, e in self.modes], dtype=float)


@dataclass(frozen=True)
class MassDecayMatrix:
    """Non-Hermitian 2x2 generator H = M - i*Gamma/2 in the CP basis.

    The Hermitian part M and anti-Hermitian part Gamma are both observables
    (masses and widths), so Gamma must be positive semidefinite; the
    constructor rejects matrices whose eigen-widths are negative.
    """

    m11: complex
    m12: complex
    m21: complex
    m22: complex

    def __post_init__(self):
        for name in ("m11", "m12", "m21", "m22"):
            value = complex(getattr(self, name))
            object.__setattr__(self, name, value)
            _check_finite(name, value)
        gamma = 1j * (self.as_array() - self.as_array().conj().T)
        eigs = np.linalg.eigvalsh(gamma)
        scale = max(1.0, float(np.max(np.abs(eigs))))
        if np.min(eigs) < -1e-12 * scale:
            raise ValueError("width matrix must be positive semidefinite "
                             f"(eigen-widths {eigs})")

    def as_array(self) -> np.ndarray:
        return np.array([[self.m11, self.m12], [self.m21, self.m22]], dtype=complex)

    @classmethod
    def diagonal(cls, params: KaonParams) -> "MassDecayMatrix":
        """CP-diagonal generator with the package mass convention
        (short mass 0, long mass delta_m)."""
        return cls(complex(0.0, -0.5 * params.gamma_s), 0.0, 0.0,
                   complex(params.delta_m, -0.5 * params.gamma_l))


def _check_time(t):
    t = float(t)
    if not math.isfinite(t):
        raise ValueError(f"time must be finite, got {t}")
    if t < 0:
        raise ValueError(f"time must be >= 0, got {t}")
    return t


def evolve_diagonal(initial: QuasiSpinor, params: KaonParams, t: float) -> QuasiSpinor:
    """Evolve a CP spinor under the decoupled (epsilon-free) channels.

    psi1 picks up exp(-i(0 - i*Gamma_S/2) t), psi2 picks up
    exp(-i(delta_m - i*Gamma_L/2) t), so the channel intensities decay as
    exp(-Gamma_S t) and exp(-Gamma_L t).
    """
    t = _check_time(t)
    f1 = cmath.exp(-1j * complex(0.0, -0.5 * params.gamma_s) * t)
    f2 = cmath.exp(-1j * complex(params.delta_m, -0.5 * params.gamma_l) * t)
    return QuasiSpinor(initial.psi1 * f1, initial.psi2 * f2)


def evolve_matrix(matrix: MassDecayMatrix, initial: QuasiSpinor, t: float) -> QuasiSpinor:
    """Evolve a spinor under a general mass-decay matrix.

    Solved exactly through the eigen-decomposition of H.  Matrices with
    coincident eigenvalues (non-diagonalisable, Jordan-block evolution) are
    rejected: they cannot occur for physical kaon parameters and handling
    them would only blur the kernel.
    """
    t = _check_time(t)
    h = matrix.as_array()
    eigvals, eigvecs = np.linalg.eig(h)
    scale = max(1.0, float(np.max(np.abs(eigvals))))
    if abs(eigvals[0] - eigvals[1]) <= 1e-12 * scale:
        raise DegenerateEvolutionError(
            f"mass-decay matrix has coincident eigenvalues {eigvals}")
    coeffs = np.linalg.solve(eigvecs, np.array([initial.psi1, initial.psi2]))
    evolved = eigvecs @ (coeffs * np.exp(-1j * eigvals * t))
    return QuasiSpinor(evolved[0], evolved[1])


def _sl_phases(params: KaonParams, t: float) -> tuple[complex, complex]:
    e_s = cmath.exp(-1j * complex(0.0, -0.5 * params.gamma_s) * t)
    e_l = cmath.exp(-1j * complex(params.delta_m, -0.5 * params.gamma_l) * t)
    return e_s, e_l


def cronin_fitch_amplitudes(params: KaonParams, t: float) -> QuasiSpinor:
    """CP-basis amplitudes at time t of a K0 prepared at t = 0.

    The K0 decomposes into (K_S + K_L) * sqrt(1+|eps|^2)/(sqrt2 (1+eps));
    each component evolves with its own complex energy, giving

        psi1(t) = (e_S(t) + eps*e_L(t)) / (sqrt2 (1+eps))
        psi2(t) = (eps*e_S(t) + e_L(t)) / (sqrt2 (1+eps))

    with e_X(t) = exp(-i(m_X - i*Gamma_X/2) t).
    """
    t = _check_time(t)
    eps = params.epsilon
    denom = math.sqrt(2.0) * (1.0 + eps)
    if abs(1.0 + eps) < 1e-12:
        raise ValueError("normalisation singular at epsilon = -1")
    e_s, e_l = _sl_phases(params, t)
    return QuasiSpinor((e_s + eps * e_l) / denom, (eps * e_s + e_l) / denom)


def long_time_projection(params: KaonParams, t: float) -> QuasiSpinor:
    """K_L-only amplitudes of an initial K0, valid once exp(-Gamma_S t) is
    negligible: (eps, 1) * e_L(t) / (sqrt2 (1+eps)).

    The ratio |psi1/psi2| is |eps| for every t since the common factor
    cancels.
    """
    t = _check_time(t)
    eps = params.epsilon
    if abs(1.0 + eps) < 1e-12:
        raise ValueError("normalisation singular at epsilon = -1")
    _, e_l = _sl_phases(params, t)
    factor = e_l / (math.sqrt(2.0) * (1.0 + eps))
    return QuasiSpinor(eps * factor, factor)
