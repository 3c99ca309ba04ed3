"""Black-body decoherence rates and interference visibility.

A dielectric nanosphere held in spatial superposition decoheres through
scattering, absorption and emission of thermal photons.  In the
long-wavelength limit (thermal photon wavelength much larger than both the
particle radius and the superposition separation) the three channels enter
as localization rates Lambda (m^-2 s^-1) and the fringe visibility decays as

    V = exp(-(Lambda_sc + Lambda_abs + Lambda_em) * d^2 * t2).

Rate prefactors follow the standard long-wavelength black-body decoherence
results for a dielectric sphere of complex permittivity eps:

    Lambda_sc  = 8 * 8! * zeta(9) / (9 pi) * c * R^6 * (kB T_env / hbar c)^9
                 * |(eps-1)/(eps+2)|^2
    Lambda_abs = 16 pi^5 / 189 * c * R^3 * (kB T_env / hbar c)^6
                 * Im[(eps-1)/(eps+2)]
    Lambda_em  = same as Lambda_abs with the internal temperature T_int.

Scattering scales as T^9, absorption and emission as T^6.  Everything here
is a pure function of its inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from scipy.special import zeta

HBAR = 1.054571817e-34     # J s
KB = 1.380649e-23          # J/K
C_LIGHT = 299792458.0      # m/s

# Residual-gas pressure below which gas-collision decoherence is neglected.
GAS_PRESSURE_LIMIT = 1e-13     # Pa
_M_GAS = 3.35e-27              # kg, H2 (dominant residual species)

# Long-wavelength regime: thermal wavelength must exceed the particle
# radius and the separation by at least this factor.
REGIME_MARGIN = 10.0

_SC_PREFACTOR = 8.0 * math.factorial(8) * float(zeta(9)) / (9.0 * math.pi)
_ABS_PREFACTOR = 16.0 * math.pi ** 5 / 189.0


@dataclass
class Particle:
    """Dielectric nanosphere with a constant complex permittivity model."""

    radius: float = 90e-9          # m
    density: float = 5510.0        # kg/m^3
    epsilon: complex = 3.4 + 0.05j  # dense flint glass, thermal wavelengths

    def __post_init__(self):
        if not (50e-9 <= self.radius <= 200e-9):
            raise ValueError(
                f"radius {self.radius:g} m outside the long-wavelength "
                "validity range [50, 200] nm")
        if self.density <= 0:
            raise ValueError("density must be positive")
        if self.epsilon.imag < 0:
            raise ValueError("Im(epsilon) must be >= 0 (passive medium)")

    @property
    def mass(self):
        """kg, from radius and density."""
        return 4.0 / 3.0 * math.pi * self.radius ** 3 * self.density

    @property
    def polarizability_factor(self):
        """Clausius-Mossotti factor (eps-1)/(eps+2)."""
        return (self.epsilon - 1.0) / (self.epsilon + 2.0)


@dataclass
class ExperimentTimeline:
    """Interferometry timing and superposition scale."""

    t1: float = 1.0            # s, pre-superposition free expansion
    t2: float = 100.0          # s, evolution of the prepared superposition
    separation: float = 1e-7   # m, effective superposition separation d

    def __post_init__(self):
        for v, name in ((self.t1, "t1"), (self.t2, "t2"),
                        (self.separation, "separation")):
            if v <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class EnvState:
    """Radiative environment seen by the particle."""

    t_env: float = 16.4        # K, environmental (test volume) temperature
    t_int: float = 16.4        # K, internal particle temperature
    pressure: float = 0.0      # Pa

    def __post_init__(self):
        if self.t_env < 0 or self.t_int < 0:
            raise ValueError("temperatures must be >= 0")
        if self.pressure < 0:
            raise ValueError("pressure must be >= 0")


@dataclass
class VisibilityResult:
    lambda_scattering: float       # m^-2 s^-1
    lambda_absorption: float
    lambda_emission: float
    visibility: float              # [0, 1]
    regime_valid: bool             # long-wavelength check passed
    gas_flagged: bool = False      # pressure above the neglect threshold
    warnings: list = field(default_factory=list)


def thermal_wavelength(T: float) -> float:
    """Characteristic thermal photon wavelength hbar c / (kB T), m."""
    if T <= 0:
        return math.inf
    return HBAR * C_LIGHT / (KB * T)


def regime_check(p: Particle, env: EnvState, separation: float | None = None):
    """(valid, warnings) for the long-wavelength treatment."""
    warnings = []
    lam = min(thermal_wavelength(env.t_env), thermal_wavelength(env.t_int))
    scales = [("radius", p.radius)]
    if separation is not None:
        scales.append(("separation", separation))
    for name, s in scales:
        if lam < REGIME_MARGIN * s:
            warnings.append(
                f"thermal wavelength {lam:.3g} m below {REGIME_MARGIN:g}x "
                f"{name} {s:.3g} m; long-wavelength treatment marginal")
    return (not warnings), warnings


def blackbody_rates(p: Particle, env: EnvState):
    """(Lambda_sc, Lambda_abs, Lambda_em) localization rates, m^-2 s^-1."""
    x = p.polarizability_factor
    k_env = KB * env.t_env / (HBAR * C_LIGHT)     # thermal wavenumber, 1/m
    k_int = KB * env.t_int / (HBAR * C_LIGHT)
    lam_sc = _SC_PREFACTOR * C_LIGHT * p.radius ** 6 * k_env ** 9 * abs(x) ** 2
    lam_abs = _ABS_PREFACTOR * C_LIGHT * p.radius ** 3 * k_env ** 6 * x.imag
    lam_em = _ABS_PREFACTOR * C_LIGHT * p.radius ** 3 * k_int ** 6 * x.imag
    return lam_sc, lam_abs, lam_em


def _gas_collision_rate(p: Particle, env: EnvState) -> float:
    """Mean gas-particle collision rate (1/s), hard-sphere kinetic theory.

    Any single collision resolves a superposition much larger than the gas
    de Broglie wavelength, so the rate bounds the visibility suppression.
    A 4 K floor on the gas temperature avoids the degenerate T=0 density.
    """
    T = max(env.t_env, 4.0)
    n = env.pressure / (KB * T)
    v_mean = math.sqrt(8.0 * KB * T / (math.pi * _M_GAS))
    return n * v_mean * math.pi * p.radius ** 2


def visibility(p: Particle, env: EnvState,
               tl: ExperimentTimeline) -> VisibilityResult:
    """Predicted interference visibility after the evolution time t2."""
    lam_sc, lam_abs, lam_em = blackbody_rates(p, env)
    valid, warns = regime_check(p, env, tl.separation)
    v = math.exp(-(lam_sc + lam_abs + lam_em) * tl.separation ** 2 * tl.t2)
    gas_flagged = env.pressure > GAS_PRESSURE_LIMIT
    if gas_flagged:
        v *= math.exp(-_gas_collision_rate(p, env) * tl.t2)
        warns = warns + [
            f"pressure {env.pressure:.3g} Pa above the gas-scattering "
            f"neglect threshold {GAS_PRESSURE_LIMIT:g} Pa; collision "
            "suppression applied"]
    return VisibilityResult(lam_sc, lam_abs, lam_em, v, valid,
                            gas_flagged, warns)


# ---------------------------------------------------------------------------
# Curve tabulation
# ---------------------------------------------------------------------------

def visibility_curve(p: Particle, tl: ExperimentTimeline, temperatures,
                     mode: str = "coupled", t_env: float | None = None,
                     pressure: float = 0.0):
    """Tabulate V over a temperature grid.

    ``mode="coupled"`` sets T_int = T_env = T at each grid point (idealized
    fully thermalized case); ``mode="internal"`` holds T_env fixed at
    ``t_env`` and sweeps the internal temperature.  Returns a list of row
    dicts; all three rates are included in both modes.
    """
    if mode not in ("coupled", "internal"):
        raise ValueError(f"unknown curve mode {mode!r}")
    if mode == "internal" and t_env is None:
        raise ValueError("mode='internal' requires t_env")
    rows = []
    for T in temperatures:
        if mode == "coupled":
            env = EnvState(t_env=T, t_int=T, pressure=pressure)
        else:
            env = EnvState(t_env=t_env, t_int=T, pressure=pressure)
        r = visibility(p, env, tl)
        rows.append({
            "temperature": float(T),
            "t_env": env.t_env, "t_int": env.t_int,
            "lambda_scattering": r.lambda_scattering,
            "lambda_absorption": r.lambda_absorption,
            "lambda_emission": r.lambda_emission,
            "visibility": r.visibility,
            "regime_valid": r.regime_valid,
            "gas_flagged": r.gas_flagged,
            # reserved for alternative (macrorealistic) model predictions
            "v_macro": "",
        })
    return rows


def emit_visibility_curves(path, p: Particle, tl: ExperimentTimeline,
                           temperatures, mode="coupled", t_env=None,
                           pressure=0.0):
    """Write a visibility curve CSV (deterministic bytes)."""
    import csv

    rows = visibility_curve(p, tl, temperatures, mode=mode, t_env=t_env,
                            pressure=pressure)
    cols = ["temperature", "t_env", "t_int", "lambda_scattering",
            "lambda_absorption", "lambda_emission", "visibility",
            "regime_valid", "gas_flagged", "v_macro"]
    with open(path, "w", newline="") as fh:
        fh.write(f"# cryobench visibility curve: mode={mode}\n")
        fh.write(f"# radius={p.radius:.12g} density={p.density:.12g} "
                 f"epsilon={p.epsilon.real:.12g}+{p.epsilon.imag:.12g}j\n")
        fh.write(f"# t1={tl.t1:.12g} t2={tl.t2:.12g} "
                 f"separation={tl.separation:.12g}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([format(r[c], ".12g") if isinstance(r[c], float)
                        else r[c] for c in cols])
    return rows
