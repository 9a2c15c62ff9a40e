"""Energy-spectrum duality of exponential decay, and interrupted evolution.

A decaying mode (m, Gamma) is Fourier-dual to a Breit-Wigner line of
half-width Gamma/2 centred on m.  Two survival conventions are provided
for a truncated spectrum:

autocorrelation  P(t) = |integral dE e^{-iEt} rho(E)|^2, the overlap of the
                 evolved state with itself;
time_operator    the decay pdf is |Psi(t)|^2 with Psi the Fourier transform
                 of the resonant amplitude, and the survival is the pdf
                 mass beyond t.

Both reduce to exp(-Gamma t) as the cutoffs widen; narrow cutoffs flatten
the short-time behaviour (the Zeno regime).  Only t >= 0 is evaluated: the
meaning of the autocorrelation at negative times for a truncated line is
an open interpretive question this package does not take a side on.

Oscillatory Fourier integrals over the sampled spectrum use panel-exact
(Filon-type) trapezoid rules, so there is no aliasing at large t; the
time-operator pdf is generated on an oversampled FFT grid.

The Zeno part simulates instantaneous CP measurements interposed in the
decoupled-channel evolution.  With exponential channels the interposed
collapses leave every outcome probability unchanged, an exact telescoping
identity; the analytic mode asserts it and serves as the oracle for the
Monte Carlo mode.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import ComplexEnergy, KaonParams, QuasiSpinor
from .errors import UnsupportedRegimeError
from .sampler import RunSeed

_TRAPZ_TOL = 1e-8


@dataclass(frozen=True)
class EnergySpectrum:
    """A sampled energy distribution |psi_hat(E)|^2 on [e_min, e_max].

    ``density`` is nonnegative and unit-normalised under the trapezoid
    rule on ``energies``; ``amplitude``, when present, samples the complex
    amplitude whose modulus squared is the density (the time-operator
    convention needs it, the autocorrelation does not).
    """

    energies: np.ndarray
    density: np.ndarray
    e_min: float
    e_max: float
    amplitude: np.ndarray | None = None

    def __post_init__(self):
        e = np.asarray(self.energies, dtype=float)
        rho = np.asarray(self.density, dtype=float)
        if e.ndim != 1 or e.size < 3 or rho.shape != e.shape:
            raise ValueError("energies and density must be 1-d arrays of equal length")
        if not np.all(np.diff(e) > 0):
            raise ValueError("energy grid must be strictly increasing")
        if not (np.all(np.isfinite(e)) and np.all(np.isfinite(rho))):
            raise ValueError("spectrum contains non-finite entries")
        if np.min(rho) < 0:
            raise ValueError("density must be nonnegative")
        if not (self.e_min <= e[0] and e[-1] <= self.e_max):
            raise ValueError("grid must lie inside [e_min, e_max]")
        total = float(np.trapezoid(rho, e))
        if abs(total - 1.0) > _TRAPZ_TOL:
            raise ValueError(f"density must integrate to 1 (trapezoid), got {total}")
        object.__setattr__(self, "energies", e)
        object.__setattr__(self, "density", rho)
        if self.amplitude is not None:
            amp = np.asarray(self.amplitude, dtype=complex)
            if amp.shape != e.shape:
                raise ValueError("amplitude must match the energy grid")
            object.__setattr__(self, "amplitude", amp)


def captured_mass(energy: ComplexEnergy, e_min: float, e_max: float) -> float:
    """Probability mass of the full-line Breit-Wigner inside [e_min, e_max]
    (closed-form Cauchy distribution)."""
    half = 0.5 * energy.width
    return (math.atan((e_max - energy.mass) / half)
            - math.atan((e_min - energy.mass) / half)) / math.pi


def lorentzian_spectrum(energy: ComplexEnergy, e_min: float, e_max: float,
                        n_points: int = 8001) -> EnergySpectrum:
    """Breit-Wigner line density(E) = N / ((E-m)^2 + (Gamma/2)^2).

    Nodes follow the Cauchy quantile map (equal full-line mass per panel),
    so the peak is automatically resolved however wide the cutoffs are.
    N is fixed by the discrete trapezoid rule so the type invariant holds
    exactly.  A zero width would be a delta line, which a sampled grid
    cannot represent.
    """
    if energy.width <= 0:
        raise ValueError("width must be > 0 (a zero-width line is a delta function)")
    if not (e_min < energy.mass < e_max):
        raise ValueError("cutoffs must bracket the line centre")
    if n_points < 99:
        raise ValueError("n_points too small to resolve the line")
    half = 0.5 * energy.width
    u = np.linspace(math.atan((e_min - energy.mass) / half),
                    math.atan((e_max - energy.mass) / half), int(n_points))
    grid = energy.mass + half * np.tan(u)
    grid[0], grid[-1] = e_min, e_max
    # log-spaced tail nodes: the quantile map leaves the far tails with a
    # handful of huge panels whose chords overshoot the convex 1/E^2 decay
    n_tail = max(int(n_points) // 4, 256)
    extra = [grid]
    for sign, cut in ((-1.0, energy.mass - e_min), (1.0, e_max - energy.mass)):
        if cut > 4.0 * energy.width:
            extra.append(energy.mass + sign * np.geomspace(2.0 * energy.width,
                                                           cut, n_tail))
    grid = np.unique(np.concatenate(extra))
    grid = grid[(grid >= e_min) & (grid <= e_max)]
    raw = 1.0 / ((grid - energy.mass) ** 2 + half ** 2)
    norm = float(np.trapezoid(raw, grid))
    density = raw / norm
    # resonant amplitude: |amplitude|^2 == density on the same grid
    resonant = -1j / (grid - (energy.mass - 1j * half))
    amplitude = resonant * np.sqrt(density) / np.abs(resonant)
    return EnergySpectrum(grid, density, float(e_min), float(e_max), amplitude)


def _filon_segments(theta):
    """Panel moments A = int_0^1 e^{-i theta x} dx and
    B = int_0^1 x e^{-i theta x} dx, stable for small theta."""
    theta = np.asarray(theta, dtype=float)
    small = np.abs(theta) < 1e-3
    th = np.where(small, 1.0, theta)
    phase = np.exp(-1j * theta)
    a = (1.0 - phase) / (1j * th)
    b = (a - phase) / (1j * th)
    t2 = theta * theta
    a_series = 1.0 - 0.5j * theta - t2 / 6.0 + 1j * theta * t2 / 24.0 + t2 * t2 / 120.0
    b_series = 0.5 - 1j * theta / 3.0 - t2 / 8.0 + 1j * theta * t2 / 30.0 + t2 * t2 / 144.0
    return np.where(small, a_series, a), np.where(small, b_series, b)


def fourier_transform_sampled(energies, values, times) -> np.ndarray:
    """integral dE e^{-iEt} f(E) for f sampled on a grid, panel-exact in the
    oscillatory factor (linear interpolation of f per panel)."""
    energies = np.asarray(energies, dtype=float)
    values = np.asarray(values)
    times = np.atleast_1d(np.asarray(times, dtype=float))
    e0 = energies[:-1]
    h = np.diff(energies)
    f0 = values[:-1]
    df = values[1:] - values[:-1]
    out = np.zeros(times.shape, dtype=complex)
    chunk = max(1, int(4e6 / max(times.size, 1)))
    for start in range(0, h.size, chunk):
        sl = slice(start, start + chunk)
        theta = np.multiply.outer(times, h[sl])
        a, b = _filon_segments(theta)
        panel = h[None, sl] * np.exp(-1j * np.multiply.outer(times, e0[sl])) \
            * (f0[None, sl] * a + df[None, sl] * b)
        out += panel.sum(axis=1)
    return out


def _time_operator_survival_table(spec: EnergySpectrum,
                                  n_window: int = 1 << 19,
                                  n_fft: int = 1 << 22):
    """Survival of the time-operator pdf |Psi(t)|^2 on a dense t >= 0 grid.

    Psi is generated by an oversampled zero-padded FFT of the amplitude;
    the pdf is integrated backwards (trapezoid) and normalised over t >= 0.
    """
    if spec.amplitude is None:
        raise ValueError("time-operator convention needs the spectrum amplitude")
    e = np.linspace(spec.energies[0], spec.energies[-1], n_window)
    amp_re = np.interp(e, spec.energies, spec.amplitude.real)
    amp_im = np.interp(e, spec.energies, spec.amplitude.imag)
    amp = amp_re + 1j * amp_im
    amp[0] *= 0.5
    amp[-1] *= 0.5
    de = e[1] - e[0]
    padded = np.zeros(n_fft, dtype=complex)
    padded[:n_window] = amp
    # Psi(t_k) = de * e^{-i e0 t_k} * FFT(padded)[k],  t_k = 2 pi k / (n_fft de)
    spectrum_fft = np.fft.fft(padded)
    t = 2.0 * math.pi * np.arange(n_fft // 2) / (n_fft * de)
    psi = de * np.exp(-1j * e[0] * t) * spectrum_fft[: n_fft // 2]
    pdf = np.abs(psi) ** 2
    # reverse trapezoid: mass beyond each grid point
    dt = t[1] - t[0]
    seg = 0.5 * (pdf[:-1] + pdf[1:]) * dt
    tail = np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]])
    total = tail[0]
    if total <= 0:
        raise ValueError("time-operator pdf has no mass at t >= 0")
    return t, tail / total


def survival_from_spectrum(spec: EnergySpectrum, t,
                           convention: str = "autocorrelation"):
    """Survival probability implied by a (possibly truncated) spectrum.

    autocorrelation: |FT of the density|^2, normalised to 1 at t = 0.
    time_operator:   mass of the pdf |FT of the amplitude|^2 beyond t,
                     normalised over t >= 0.

    Wide cutoffs reproduce exp(-Gamma t) in either convention; narrow
    cutoffs flatten the t -> 0 slope (Zeno regime) and leave truncation
    ripple at the sub-permille level.
    """
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    if not np.all(np.isfinite(t_arr)):
        raise ValueError("times must be finite")
    if np.any(t_arr < 0):
        raise ValueError("times must be >= 0 (negative-time survival is undefined "
                         "for a truncated line)")
    if convention == "autocorrelation":
        amp = fourier_transform_sampled(spec.energies, spec.density, t_arr)
        amp0 = fourier_transform_sampled(spec.energies, spec.density, np.array([0.0]))
        out = np.abs(amp) ** 2 / abs(amp0[0]) ** 2
    elif convention == "time_operator":
        grid, tail = _time_operator_survival_table(spec)
        if np.any(t_arr > grid[-1]):
            raise ValueError("requested time beyond the transform range")
        out = np.interp(t_arr, grid, tail)
    else:
        raise ValueError(f"unknown convention {convention!r}")
    return out if np.ndim(t) else float(out[0])


@dataclass(frozen=True)
class MeasurementSchedule:
    """Instants of interposed instantaneous CP measurements, plus the
    readout time at which the final CP measurement happens."""

    times: tuple
    readout: float

    def __post_init__(self):
        times = tuple(float(x) for x in self.times)
        readout = float(self.readout)
        if not math.isfinite(readout) or readout <= 0:
            raise ValueError("readout must be finite and > 0")
        if any(not math.isfinite(x) or x < 0 for x in times):
            raise ValueError("measurement times must be finite and >= 0")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("measurement times must be strictly increasing")
        if times and times[-1] >= readout:
            raise ValueError("all measurement times must precede the readout")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "readout", readout)


@dataclass(frozen=True)
class ZenoOutcome:
    """Readout statistics: P(survive and CP=+1), P(survive and CP=-1),
    and their sum, the survival probability."""

    p_plus: float
    p_minus: float
    p_survival: float
    trials: int
    mode: str


def _require_decoupled(params: KaonParams):
    if params.epsilon != 0:
        raise UnsupportedRegimeError(
            "interposed-measurement analysis assumes decoupled exponential "
            "channels; set epsilon = 0")


def zeno_outcome_analytic(initial: QuasiSpinor, params: KaonParams,
                          schedule: MeasurementSchedule) -> ZenoOutcome:
    """Exact outcome probabilities, computed segment by segment.

    Each interposed CP measurement collapses the state, but with decoupled
    exponential channels the product of per-segment survival factors
    telescopes, so the readout statistics cannot depend on the schedule.
    The per-segment computation is kept (rather than a single closed form)
    so that the identity is exercised, not assumed.
    """
    _require_decoupled(params)
    norm = initial.norm_sq
    if norm <= 0:
        raise ValueError("initial spinor has zero norm")
    p1 = abs(initial.psi1) ** 2 / norm
    p2 = abs(initial.psi2) ** 2 / norm
    instants = list(schedule.times) + [schedule.readout]
    prev = 0.0
    for instant in instants:
        dt = instant - prev
        p1 *= math.exp(-params.gamma_s * dt)
        p2 *= math.exp(-params.gamma_l * dt)
        prev = instant
    return ZenoOutcome(p1, p2, p1 + p2, 0, "analytic")


def zeno_sequence(initial: QuasiSpinor, params: KaonParams,
                  schedule: MeasurementSchedule, trials: int,
                  seed: RunSeed) -> ZenoOutcome:
    """Monte Carlo trajectories through the measurement schedule.

    Between measurements each definite CP channel survives exponentially;
    at each scheduled instant a surviving superposition collapses onto K1
    or K2 with the conditional Born weights.  The readout performs a final
    CP measurement on survivors.  The analytic mode is the oracle: the
    empirical rates converge to it for any schedule.
    """
    _require_decoupled(params)
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    norm = initial.norm_sq
    if norm <= 0:
        raise ValueError("initial spinor has zero norm")
    p1_0 = abs(initial.psi1) ** 2 / norm
    p2_0 = abs(initial.psi2) ** 2 / norm
    rng = seed.generator()
    n = int(trials)
    alive = np.ones(n, dtype=bool)
    channel = np.zeros(n, dtype=np.int8)  # 0 = still a superposition
    instants = list(schedule.times) + [schedule.readout]
    prev = 0.0
    p1, p2 = p1_0, p2_0  # superposition weights, updated along the flight
    for k, instant in enumerate(instants):
        dt = instant - prev
        fs = math.exp(-params.gamma_s * dt)
        fl = math.exp(-params.gamma_l * dt)
        u_surv = rng.random(n)
        in_super = channel == 0
        s_super = p1 * fs + p2 * fl
        survive_prob = np.where(in_super, s_super,
                                np.where(channel == 1, fs, fl))
        alive &= u_surv < survive_prob
        is_last = k == len(instants) - 1
        u_col = rng.random(n)
        cond_plus = (p1 * fs / s_super) if s_super > 0 else 0.0
        collapse = alive & in_super
        channel = np.where(collapse, np.where(u_col < cond_plus, 1, 2), channel)
        p1, p2 = p1 * fs / max(s_super, 1e-300), p2 * fl / max(s_super, 1e-300)
        prev = instant
        if is_last:
            break
    p_plus = float(np.mean(alive & (channel == 1)))
    p_minus = float(np.mean(alive & (channel == 2)))
    return ZenoOutcome(p_plus, p_minus, p_plus + p_minus, n, "monte-carlo")
