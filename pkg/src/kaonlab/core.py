"""Physical constants, complex-energy arithmetic and quasi-spin basis transforms.

Everything downstream works in natural units (hbar = c = 1): times are in
seconds, masses and widths in s^-1, so a metastable mode is the pair
(m, Gamma) entering the amplitude exp(-i(m - i*Gamma/2) t).

Only the mass difference between the short and long modes is observable in
any quantity computed here, so the short mass is pinned to 0 and the long
mass to ``delta_m`` throughout the package.
"""

from __future__ import annotations

import cmath
import enum
import math
from dataclasses import dataclass

# Kaon lifetimes and CP-violation parameter (PDG-era textbook values).
TAU_S = 8.92e-11
"""K_S lifetime in seconds."""

TAU_L = 5.17e-8
"""K_L lifetime in seconds."""

EPSILON_ABS = 2.27e-3
"""Magnitude of the CP-violation parameter epsilon."""

EPSILON_ARG_DEG = 43.37
"""Phase of epsilon, degrees."""

DEFAULT_EPSILON = EPSILON_ABS * cmath.exp(1j * math.radians(EPSILON_ARG_DEG))


def _check_finite(name, value):
    if isinstance(value, complex):
        if not (math.isfinite(value.real) and math.isfinite(value.imag)):
            raise ValueError(f"{name} must be finite, got {value!r}")
    else:
        if not math.isfinite(value):
            raise ValueError(f"{name} must be finite, got {value!r}")


class DecayModel(enum.Enum):
    """Selector among the three rival decay-time laws.

    STANDARD        identifies |psi(t)|^2 with the survival probability;
                    the decay pdf is its negative time derivative.
    HYBRID          treats |psi(t)|^2 directly as the decay intensity while
                    still reading it as a survival weight; the convention
                    found in much of the phenomenology literature.
    TIME_OPERATOR   temporal-wave-function reading: the decay pdf is the
                    modulus squared of an amplitude carrying sqrt(Gamma)
                    mode weights.
    """

    STANDARD = "standard"
    HYBRID = "hybrid"
    TIME_OPERATOR = "twfo"

    @classmethod
    def parse(cls, name: str) -> "DecayModel":
        key = name.strip().lower().replace("-", "_")
        aliases = {
            "standard": cls.STANDARD,
            "hybrid": cls.HYBRID,
            "twfo": cls.TIME_OPERATOR,
            "time_operator": cls.TIME_OPERATOR,
            "timeoperator": cls.TIME_OPERATOR,
        }
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown decay model {name!r}; "
                             "expected standard, hybrid or twfo") from None


@dataclass(frozen=True)
class ComplexEnergy:
    """One exponential mode exp(-i(mass - i*width/2) t).

    mass and width are in s^-1; width must be nonnegative.
    """

    mass: float
    width: float

    def __post_init__(self):
        _check_finite("mass", float(self.mass))
        _check_finite("width", float(self.width))
        if self.width < 0:
            raise ValueError(f"width must be >= 0, got {self.width}")

    @property
    def value(self) -> complex:
        """The complex energy m - i*Gamma/2."""
        return complex(self.mass, -0.5 * self.width)


@dataclass(frozen=True)
class KaonParams:
    """Kaon parameter set: widths, mass splitting and epsilon.

    Defaults reproduce the textbook kaon numbers: Gamma_S = 1/tau_S,
    Gamma_L = 1/tau_L, |epsilon| = 2.27e-3 at arg 43.37 deg, and
    delta_m = (Gamma_S + Gamma_L)/2 (the kaon coincidence used throughout
    the closed forms; override it explicitly if you need another value).
    """

    gamma_s: float = 1.0 / TAU_S
    gamma_l: float = 1.0 / TAU_L
    delta_m: float | None = None
    epsilon: complex = DEFAULT_EPSILON

    def __post_init__(self):
        _check_finite("gamma_s", float(self.gamma_s))
        _check_finite("gamma_l", float(self.gamma_l))
        if not (self.gamma_s > self.gamma_l > 0):
            raise ValueError(
                f"require gamma_s > gamma_l > 0, got {self.gamma_s}, {self.gamma_l}")
        if self.delta_m is None:
            object.__setattr__(self, "delta_m", 0.5 * (self.gamma_s + self.gamma_l))
        _check_finite("delta_m", float(self.delta_m))
        if self.delta_m < 0:
            raise ValueError(f"delta_m must be >= 0, got {self.delta_m}")
        eps = complex(self.epsilon)
        object.__setattr__(self, "epsilon", eps)
        _check_finite("epsilon", eps)
        if abs(eps) >= 1:
            raise ValueError(f"|epsilon| must be < 1, got {abs(eps)}")

    @property
    def tau_s(self) -> float:
        return 1.0 / self.gamma_s

    @property
    def tau_l(self) -> float:
        return 1.0 / self.gamma_l

    @property
    def gamma_mean(self) -> float:
        """(Gamma_S + Gamma_L)/2, the interference decay rate."""
        return 0.5 * (self.gamma_s + self.gamma_l)

    def short_energy(self) -> ComplexEnergy:
        """Short mode; its mass is the zero of the mass scale."""
        return ComplexEnergy(0.0, self.gamma_s)

    def long_energy(self) -> ComplexEnergy:
        return ComplexEnergy(self.delta_m, self.gamma_l)

    @classmethod
    def from_polar_epsilon(cls, epsilon_abs, epsilon_arg_rad, **kwargs) -> "KaonParams":
        eps = epsilon_abs * cmath.exp(1j * epsilon_arg_rad)
        return cls(epsilon=eps, **kwargs)


@dataclass(frozen=True)
class QuasiSpinor:
    """Two-component CP-basis amplitude: psi1 (CP=+1) and psi2 (CP=-1)."""

    psi1: complex
    psi2: complex

    def __post_init__(self):
        object.__setattr__(self, "psi1", complex(self.psi1))
        object.__setattr__(self, "psi2", complex(self.psi2))
        _check_finite("psi1", self.psi1)
        _check_finite("psi2", self.psi2)

    @property
    def norm_sq(self) -> float:
        return abs(self.psi1) ** 2 + abs(self.psi2) ** 2


@dataclass(frozen=True)
class InterferenceWeights:
    """Polar form of (Gamma1+Gamma2)/2 - i(m2-m1).

    r_mod * exp(i*psi_phase) equals that complex number, so r_mod**2 =
    ((Gamma1+Gamma2)/2)**2 + delta_m**2 and psi_phase is the phase shift the
    interference term of a two-mode decay rate picks up relative to the
    survival probability's cosine.
    """

    r_mod: float
    psi_phase: float


def cp_basis_from_strangeness(k0_amp: complex, k0bar_amp: complex) -> QuasiSpinor:
    """Rotate strangeness-basis amplitudes (K0, K0bar) into the CP basis.

    Returns (psi1, psi2) = ((K0 - K0bar)/sqrt2, (K0 + K0bar)/sqrt2), the
    amplitudes on the CP=+1 and CP=-1 eigenstates.
    """
    k0_amp = complex(k0_amp)
    k0bar_amp = complex(k0bar_amp)
    _check_finite("k0_amp", k0_amp)
    _check_finite("k0bar_amp", k0bar_amp)
    inv_sqrt2 = 1.0 / math.sqrt(2.0)
    return QuasiSpinor((k0_amp - k0bar_amp) * inv_sqrt2,
                       (k0_amp + k0bar_amp) * inv_sqrt2)


def cp_basis_from_sl(amp_s: complex, amp_l: complex, epsilon: complex) -> QuasiSpinor:
    """CP-basis amplitudes of a state given on the (K_S, K_L) basis.

    Uses K_S = (K1 + eps*K2)/sqrt(1+|eps|^2) and
    K_L = (eps*K1 + K2)/sqrt(1+|eps|^2).
    """
    eps = complex(epsilon)
    _check_finite("epsilon", eps)
    if abs(eps) >= 1:
        raise ValueError(f"|epsilon| must be < 1, got {abs(eps)}")
    norm = math.sqrt(1.0 + abs(eps) ** 2)
    amp_s = complex(amp_s)
    amp_l = complex(amp_l)
    _check_finite("amp_s", amp_s)
    _check_finite("amp_l", amp_l)
    return QuasiSpinor((amp_s + eps * amp_l) / norm,
                       (eps * amp_s + amp_l) / norm)


def sl_basis_from_cp(spinor: QuasiSpinor, epsilon: complex) -> tuple[complex, complex]:
    """Invert :func:`cp_basis_from_sl`: (K_S, K_L) amplitudes of a CP spinor.

    The transform is singular at epsilon**2 = 1, hence the |epsilon| < 1
    requirement.  Round-tripping with the forward transform reproduces the
    input to better than 1e-12 relative for |epsilon| <= 0.1.
    """
    eps = complex(epsilon)
    _check_finite("epsilon", eps)
    if abs(eps) >= 1:
        raise ValueError(f"|epsilon| must be < 1 (transform singular at "
                         f"epsilon^2 = 1), got {abs(eps)}")
    norm = math.sqrt(1.0 + abs(eps) ** 2)
    det = 1.0 - eps * eps
    amp_s = (spinor.psi1 - eps * spinor.psi2) * norm / det
    amp_l = (spinor.psi2 - eps * spinor.psi1) * norm / det
    return amp_s, amp_l


def interference_weights(e1: ComplexEnergy, e2: ComplexEnergy) -> InterferenceWeights:
    """Polar decomposition R*exp(i*psi) = (Gamma1+Gamma2)/2 - i(m2-m1).

    R and psi govern how the interference term of a coherent two-mode decay
    rate relates to the survival probability's: differentiating
    exp(-at)*cos(bt + c) (a = mean width, b = m2-m1) yields
    R*exp(-at)*cos(bt + c + psi).  For the kaon defaults, where delta_m
    equals the mean width, psi = -pi/4.
    """
    a = 0.5 * (e1.width + e2.width)
    b = e2.mass - e1.mass
    r = math.hypot(a, b)
    psi = math.atan2(-b, a) if r > 0 else 0.0
    if psi <= -math.pi:
        psi += 2.0 * math.pi
    return InterferenceWeights(r, psi)
