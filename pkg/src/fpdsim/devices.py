"""First-order device models: square-law MOSFET, photodiode, TFT switch, comparator.

All voltages for a PMOS device are taken in the physical (signed) convention,
so a conducting PMOS sees vgs < 0 and vds < 0. Internally every device is
evaluated in the normalized NMOS frame where the overdrive and drain-source
voltage are non-negative.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .errors import DomainError

MISMATCH_TRUNCATION = 4.0


class Polarity(str, Enum):
    NMOS = "nmos"
    PMOS = "pmos"

    @property
    def sign(self) -> float:
        return 1.0 if self is Polarity.NMOS else -1.0


@dataclass(frozen=True)
class MosfetParams:
    polarity: Polarity = Polarity.NMOS
    vth: float = 0.8          # threshold magnitude [V]
    kp: float = 5e-5          # includes W/L [A/V^2]
    lam: float = 0.02         # channel-length modulation [1/V]
    sigma_rel: float = 0.0    # relative mismatch sigma for kp and vth

    def __post_init__(self):
        object.__setattr__(self, "polarity", Polarity(self.polarity))
        for name in ("vth", "kp", "lam", "sigma_rel"):
            if not math.isfinite(getattr(self, name)):
                raise DomainError(f"MosfetParams.{name} must be finite")
        if self.vth <= 0:
            raise DomainError("MosfetParams.vth must be > 0")
        if self.kp <= 0:
            raise DomainError("MosfetParams.kp must be > 0")
        if self.lam < 0:
            raise DomainError("MosfetParams.lam must be >= 0")
        if self.sigma_rel < 0:
            raise DomainError("MosfetParams.sigma_rel must be >= 0")


# Plausible values for a 0.6 um, 5 V CMOS process; not measured data.
NMOS_DEFAULT = MosfetParams(Polarity.NMOS, vth=0.8, kp=5e-5, lam=0.02)
PMOS_DEFAULT = MosfetParams(Polarity.PMOS, vth=0.9, kp=1.7e-5, lam=0.02)


@dataclass(frozen=True)
class PhotodiodeParams:
    responsivity: float = 1e-8   # [A/lux]
    dark_current: float = 1e-11  # [A]
    c_node: float = 1e-12        # [F]

    def __post_init__(self):
        if not self.responsivity > 0:
            raise DomainError("PhotodiodeParams.responsivity must be > 0")
        if not self.dark_current >= 0:
            raise DomainError("PhotodiodeParams.dark_current must be >= 0")
        if not self.c_node > 0:
            raise DomainError("PhotodiodeParams.c_node must be > 0")


@dataclass(frozen=True)
class TftSwitch:
    r_on: float = 0.0
    i_leak: float = 0.0
    gate_on: bool = False

    def __post_init__(self):
        if not self.r_on >= 0:
            raise DomainError("TftSwitch.r_on must be >= 0")
        if not self.i_leak >= 0:
            raise DomainError("TftSwitch.i_leak must be >= 0")


@dataclass(frozen=True)
class ComparatorSpec:
    v_ref: float
    v_high: float = 5.0
    v_low: float = 0.0

    def __post_init__(self):
        if not self.v_low < self.v_high:
            raise DomainError("ComparatorSpec requires v_low < v_high")


# --- square-law kernel, normalized frame --------------------------------------

def ids_normalized(m: MosfetParams, vov: float, vds: float) -> float:
    """Drain current for overdrive ``vov`` and ``vds >= 0`` in the NMOS frame."""
    if vov <= 0.0 or vds <= 0.0:
        return 0.0
    clm = 1.0 + m.lam * vds
    if vds < vov:
        return m.kp * (2.0 * vov * vds - vds * vds) * clm
    return m.kp * vov * vov * clm


def ids_partials(m: MosfetParams, vov: float, vds: float) -> tuple[float, float, float]:
    """Return (ids, d ids/d vov, d ids/d vds) in the normalized frame."""
    if vov <= 0.0 or vds <= 0.0:
        return 0.0, 0.0, 0.0
    clm = 1.0 + m.lam * vds
    if vds < vov:
        core = 2.0 * vov * vds - vds * vds
        return (m.kp * core * clm,
                m.kp * 2.0 * vds * clm,
                m.kp * ((2.0 * vov - 2.0 * vds) * clm + core * m.lam))
    core = vov * vov
    return m.kp * core * clm, m.kp * 2.0 * vov * clm, m.kp * core * m.lam


def diode_overdrive(m: MosfetParams, i_target: float) -> float:
    """Overdrive x >= 0 with ids_normalized(m, x, vth + x) == i_target."""
    if i_target <= 0.0:
        return 0.0
    a = 1.0 + m.lam * m.vth
    x = math.sqrt(i_target / (m.kp * a))
    if m.lam == 0.0:
        return x
    # f(x) = kp x^2 (a + lam x) is convex increasing on x >= 0 and the
    # lambda-free guess overshoots, so Newton descends monotonically.
    for _ in range(60):
        f = m.kp * x * x * (a + m.lam * x) - i_target
        df = m.kp * x * (2.0 * a + 3.0 * m.lam * x)
        step = f / df
        x_new = x - step
        if x_new >= x or x_new <= 0.0:
            break
        x = x_new
        if abs(step) <= 4e-16 * x:
            break
    return x


# --- public operations --------------------------------------------------------

def _normalize(m: MosfetParams, vgs: float, vds: float) -> tuple[float, float]:
    if not (math.isfinite(vgs) and math.isfinite(vds)):
        raise DomainError(f"non-finite terminal voltage (vgs={vgs}, vds={vds})")
    s = m.polarity.sign
    return s * vgs, s * vds


def drain_current(m: MosfetParams, vgs: float, vds: float) -> float:
    """Level-1 drain current magnitude [A].

    Cutoff for vgs <= vth, triode for vds < vgs - vth, saturation otherwise,
    with the (1 + lam*vds) factor applied in both conducting regions so the
    two branches meet exactly at the boundary.
    """
    vgs_n, vds_n = _normalize(m, vgs, vds)
    if vds_n < 0.0:
        raise DomainError(f"vds must be >= 0 in the normalized frame, got {vds_n}")
    return ids_normalized(m, vgs_n - m.vth, vds_n)


def diode_connected_vgs(m: MosfetParams, i_target: float) -> float:
    """Gate-source voltage at which the diode-connected device conducts ``i_target``.

    The result is signed by polarity (negative for PMOS), so that
    ``drain_current(m, v, v)`` reproduces ``i_target``.
    """
    if not math.isfinite(i_target):
        raise DomainError("i_target must be finite")
    if i_target < 0.0:
        raise DomainError(f"i_target must be >= 0, got {i_target}")
    return m.polarity.sign * (m.vth + diode_overdrive(m, i_target))


def photocurrent(pd: PhotodiodeParams, e: float) -> float:
    if not math.isfinite(e) or e < 0.0:
        raise DomainError(f"illuminance must be a finite value >= 0 lux, got {e}")
    return pd.responsivity * e + pd.dark_current


def comparator_out(c: ComparatorSpec, v_in: float) -> float:
    # Strictly greater: a tie reads low.
    return c.v_high if v_in > c.v_ref else c.v_low


def tft_pass(sw: TftSwitch, i_in: float) -> float:
    return i_in if sw.gate_on else sw.i_leak


def tft_drop(sw: TftSwitch, i: float) -> float:
    """Series voltage across a closed switch; zero with the default r_on."""
    return sw.r_on * i if sw.gate_on else 0.0


def _truncated_factor(rng: np.random.Generator, sigma: float) -> float:
    while True:
        z = rng.standard_normal()
        if abs(z) <= MISMATCH_TRUNCATION:
            return 1.0 + sigma * z


def apply_mismatch(m: MosfetParams, seed: int) -> MosfetParams:
    """Copy of ``m`` with kp and vth scaled by independent N(1, sigma_rel) factors.

    Draws are truncated at +/-4 sigma by rejection, so kp stays positive for
    any sigma_rel < 0.25. The result depends only on ``(m, seed)``.
    """
    if m.sigma_rel == 0.0:
        return m
    rng = np.random.default_rng(seed)
    kp_factor = _truncated_factor(rng, m.sigma_rel)
    vth_factor = _truncated_factor(rng, m.sigma_rel)
    return replace(m, kp=m.kp * kp_factor, vth=m.vth * vth_factor)
