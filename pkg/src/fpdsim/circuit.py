"""Readout chain of one pixel: PMOS pixel mirror feeding a line and a row NMOS mirror.

Topology (normalized frame, every device source-grounded to its rail)::

    photodiode --< M1 (diode, PMOS) ==> M2 --> M4 (diode, NMOS) ==> M5 --> line amp
                                   ==> M3 --> M4'(diode, NMOS) ==> M5'--> row amp

The unknowns are the overdrive voltages of the three diode-connected
references. The amplifier input nodes are held at ``v_bias`` and convert
current to voltage with gain ``r_trans``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .devices import (
    NMOS_DEFAULT,
    PMOS_DEFAULT,
    MosfetParams,
    PhotodiodeParams,
    Polarity,
    diode_overdrive,
    ids_normalized,
    ids_partials,
    photocurrent,
)
from .errors import ComplianceError, DomainError, SolverError


@dataclass(frozen=True)
class MirrorSpec:
    reference: MosfetParams
    ratio: float = 1.0
    outputs: tuple[MosfetParams, ...] = ()

    def __post_init__(self):
        if not self.ratio > 0:
            raise DomainError("MirrorSpec.ratio must be > 0")
        if not self.outputs:
            object.__setattr__(self, "outputs", (self.reference,))
        object.__setattr__(self, "outputs", tuple(self.outputs))
        for dev in self.outputs:
            if dev.polarity is not self.reference.polarity:
                raise DomainError("mirror outputs must share the reference polarity")

    @classmethod
    def matched(cls, device: MosfetParams, n_outputs: int = 1, ratio: float = 1.0) -> "MirrorSpec":
        return cls(device, ratio, (device,) * n_outputs)


@dataclass(frozen=True)
class SolverOptions:
    # Residuals are currents; tolerance is abstol + reltol * (branch current).
    abstol: float = 1e-30
    reltol: float = 1e-13
    max_iter: int = 100

    def __post_init__(self):
        if not (self.abstol >= 0 and self.reltol >= 0 and self.abstol + self.reltol > 0):
            raise DomainError("solver tolerances must be >= 0 and not both zero")
        if self.max_iter < 1:
            raise DomainError("solver max_iter must be >= 1")


@dataclass(frozen=True)
class ReadoutChain:
    pixel_mirror: MirrorSpec
    line_mirror: MirrorSpec
    row_mirror: MirrorSpec
    photodiode: PhotodiodeParams = field(default_factory=PhotodiodeParams)
    r_trans: float = 1e6
    vdd: float = 5.0
    v_bias: float = 2.5

    def __post_init__(self):
        if not self.vdd > 0:
            raise DomainError("ReadoutChain.vdd must be > 0")
        if not self.r_trans > 0:
            raise DomainError("ReadoutChain.r_trans must be > 0")
        if not 0 < self.v_bias <= self.vdd:
            raise DomainError("ReadoutChain.v_bias must lie in (0, vdd]")
        if self.pixel_mirror.reference.polarity is not Polarity.PMOS:
            raise DomainError("pixel mirror must be PMOS")
        if len(self.pixel_mirror.outputs) != 2:
            raise DomainError("pixel mirror needs two outputs (line, row)")
        for name in ("line_mirror", "row_mirror"):
            spec = getattr(self, name)
            if spec.reference.polarity is not Polarity.NMOS:
                raise DomainError(f"{name} must be NMOS")

    @property
    def c_node(self) -> float:
        return self.photodiode.c_node


def default_chain(
    nmos: MosfetParams = NMOS_DEFAULT,
    pmos: MosfetParams = PMOS_DEFAULT,
    photodiode: PhotodiodeParams | None = None,
    **kwargs,
) -> ReadoutChain:
    return ReadoutChain(
        pixel_mirror=MirrorSpec.matched(pmos, 2),
        line_mirror=MirrorSpec.matched(nmos, 1),
        row_mirror=MirrorSpec.matched(nmos, 1),
        photodiode=photodiode or PhotodiodeParams(),
        **kwargs,
    )


@dataclass(frozen=True)
class ReadoutSample:
    i_line: float
    i_row: float
    v_line: float
    v_row: float
    nodes: tuple[float, float, float] = (0.0, 0.0, 0.0)  # overdrives of M1, M4, M4'
    iterations: int = 0


@dataclass(frozen=True)
class Trace:
    t: np.ndarray
    i_out: np.ndarray
    v_out: np.ndarray

    def __len__(self):
        return len(self.t)

    def __eq__(self, other):
        if not isinstance(other, Trace):
            return NotImplemented
        return all(np.array_equal(getattr(self, k), getattr(other, k)) for k in ("t", "i_out", "v_out"))


# --- single mirror ------------------------------------------------------------

def mirror_dc(spec: MirrorSpec, i_in: float, v_out: float, output: int = 0, vdd: float = 5.0) -> float:
    """Output current of one mirror branch at drain-source voltage ``v_out``.

    The reference is solved with its own channel-length modulation, so an
    output at the same drain voltage as the reference copies i_in exactly.
    """
    if not math.isfinite(i_in) or i_in < 0:
        raise DomainError(f"i_in must be >= 0, got {i_in}")
    if not 0.0 <= v_out <= vdd:
        raise DomainError(f"v_out must lie in [0, {vdd}], got {v_out}")
    ref = spec.reference
    x_ref = diode_overdrive(ref, i_in)
    if ref.vth + x_ref > vdd:
        raise ComplianceError(f"mirror reference needs |vgs|={ref.vth + x_ref:.4g} V > vdd={vdd} V")
    dev = spec.outputs[output]
    return spec.ratio * ids_normalized(dev, x_ref + (ref.vth - dev.vth), v_out)


# --- chain equations ----------------------------------------------------------

def _pixel_node(chain: ReadoutChain, xp: float) -> tuple[float, float]:
    m1 = chain.pixel_mirror.reference
    i, d_ov, d_ds = ids_partials(m1, xp, m1.vth + xp)
    return i, d_ov + d_ds


def _branch(chain: ReadoutChain, k: int, xp: float, x: float) -> tuple[float, float, float, float]:
    """Residual of the NMOS reference node on branch ``k`` (0 line, 1 row).

    Returns (F, dF/dxp, dF/dx, scale), F = pixel output current - NMOS reference current.
    """
    pm = chain.pixel_mirror
    m1 = pm.reference
    src = pm.outputs[k]
    nm = chain.line_mirror if k == 0 else chain.row_mirror
    ref = nm.reference
    vds_src = chain.vdd - (ref.vth + x)
    i_src, s_ov, s_ds = ids_partials(src, xp + (m1.vth - src.vth), vds_src)
    i_ref, r_ov, r_ds = ids_partials(ref, x, ref.vth + x)
    i_src *= pm.ratio
    return (i_src - i_ref,
            pm.ratio * s_ov,
            -pm.ratio * s_ds - (r_ov + r_ds),
            max(i_src, i_ref))


def _branch_output(chain: ReadoutChain, k: int, x: float) -> float:
    nm = chain.line_mirror if k == 0 else chain.row_mirror
    ref, out = nm.reference, nm.outputs[0]
    return nm.ratio * ids_normalized(out, x + (ref.vth - out.vth), chain.v_bias)


def _check_compliance(chain: ReadoutChain, xp: float, xl: float, xr: float, i_photo: float):
    if chain.pixel_mirror.reference.vth + xp > chain.vdd:
        raise ComplianceError(f"pixel mirror out of compliance at i_photo={i_photo:.4g} A")
    for k, x in ((0, xl), (1, xr)):
        nm = chain.line_mirror if k == 0 else chain.row_mirror
        if nm.reference.vth + x > chain.vdd:
            raise ComplianceError(f"{'line' if k == 0 else 'row'} mirror out of compliance "
                                  f"at i_photo={i_photo:.4g} A")


def _newton(chain: ReadoutChain, i_photo: float, x0: tuple[float, float, float],
            opts: SolverOptions, solve_pixel: bool = True) -> tuple[tuple[float, float, float], int]:
    """Damped Newton on the three reference overdrives.

    The Jacobian is lower triangular (the pixel node does not see the NMOS
    nodes), so the linear solve is two back-substitutions. With
    ``solve_pixel=False`` the pixel overdrive is held fixed.
    """

    def evaluate(x):
        xp, xl, xr = x
        if solve_pixel:
            i1, a = _pixel_node(chain, xp)
            f0, tol0 = i1 - i_photo, opts.abstol + opts.reltol * max(i1, i_photo)
        else:
            f0, a, tol0 = 0.0, 1.0, math.inf
        f1, b1, c1, s1 = _branch(chain, 0, xp, xl)
        f2, b2, c2, s2 = _branch(chain, 1, xp, xr)
        res = (f0, f1, f2)
        tols = (tol0, opts.abstol + opts.reltol * s1, opts.abstol + opts.reltol * s2)
        return res, tols, (a, b1, c1, b2, c2)

    x = x0
    res, tols, jac = evaluate(x)
    norm = max(abs(r) for r in res)
    for it in range(opts.max_iter + 1):
        if all(abs(r) <= t for r, t in zip(res, tols)):
            return x, it
        if it == opts.max_iter:
            break
        a, b1, c1, b2, c2 = jac
        # A zero slope only occurs for a diode node sitting at zero overdrive;
        # jump to the square-law inverse of the current it has to carry.
        if a != 0.0 or not solve_pixel:
            dxp = -res[0] / a if solve_pixel else 0.0
        else:
            dxp = diode_overdrive(chain.pixel_mirror.reference, max(-res[0], 0.0)) - x[0]
        dxl = (-(res[1] + b1 * dxp) / c1 if c1 != 0.0
               else diode_overdrive(chain.line_mirror.reference, max(res[1], 0.0)) - x[1])
        dxr = (-(res[2] + b2 * dxp) / c2 if c2 != 0.0
               else diode_overdrive(chain.row_mirror.reference, max(res[2], 0.0)) - x[2])
        t = 1.0
        while True:
            trial = (max(x[0] + t * dxp, 0.0), max(x[1] + t * dxl, 0.0), max(x[2] + t * dxr, 0.0))
            res_t, tols_t, jac_t = evaluate(trial)
            norm_t = max(abs(r) for r in res_t)
            if norm_t <= norm or t < 1e-12:
                break
            t *= 0.5
        if trial == x:
            break
        x, res, tols, jac, norm = trial, res_t, tols_t, jac_t, norm_t
    raise SolverError(f"Newton did not converge in {opts.max_iter} iterations", residual=norm)


def _initial_guess(chain: ReadoutChain, i_photo: float) -> tuple[float, float, float]:
    """Ideal-mirror starting point, keeping each pixel output's own threshold.

    A pixel output that is cut off starts its NMOS node at exactly zero,
    which is the root of that branch; a generic guess there would converge
    only linearly onto the double root.
    """
    pm = chain.pixel_mirror
    m1 = pm.reference
    xp = diode_overdrive(m1, i_photo)
    guess = [xp]
    for k, nm in ((0, chain.line_mirror), (1, chain.row_mirror)):
        src = pm.outputs[k]
        i_src = pm.ratio * ids_normalized(src, xp + (m1.vth - src.vth), m1.vth + xp)
        guess.append(diode_overdrive(nm.reference, i_src))
    return tuple(guess)


def _sample(chain: ReadoutChain, x: tuple[float, float, float], iterations: int) -> ReadoutSample:
    i_line = _branch_output(chain, 0, x[1])
    i_row = _branch_output(chain, 1, x[2])
    return ReadoutSample(i_line, i_row, chain.r_trans * i_line, chain.r_trans * i_row, x, iterations)


def solve_pixel_chain(chain: ReadoutChain, i_photo: float, opts: SolverOptions | None = None) -> ReadoutSample:
    """DC operating point of the full chain for a given photodiode current."""
    if not math.isfinite(i_photo) or i_photo < 0:
        raise DomainError(f"i_photo must be >= 0, got {i_photo}")
    opts = opts or SolverOptions()
    x0 = _initial_guess(chain, i_photo)
    _check_compliance(chain, *x0, i_photo)
    x, its = _newton(chain, i_photo, x0, opts)
    _check_compliance(chain, *x, i_photo)
    return _sample(chain, x, its)


def sum_at_node(currents: Sequence[float]) -> float:
    """Kirchhoff sum of branch currents meeting at one node (exactly rounded)."""
    return math.fsum(currents)


def small_signal_tau(chain: ReadoutChain, i_photo: float) -> float:
    """Linearized time constant c_node / g of the pixel node at its DC point."""
    xp = diode_overdrive(chain.pixel_mirror.reference, i_photo)
    _, g = _pixel_node(chain, xp)
    return math.inf if g == 0.0 else chain.c_node / g


# --- transient ----------------------------------------------------------------

def _implicit_step(chain: ReadoutChain, xn: float, i_photo: float, h: float,
                   opts: SolverOptions, t: float) -> float:
    """Solve c (x - xn)/h + I_M1(x) - i_photo = 0 for x >= 0.

    The left side is strictly increasing, and its root lies in
    [0, max(xn, x_dc)], so Newton is safeguarded by bisection on that bracket.
    """
    c_h = chain.c_node / h
    m1 = chain.pixel_mirror.reference
    lo, hi = 0.0, max(xn, diode_overdrive(m1, i_photo))
    x = min(max(xn, lo), hi)
    for _ in range(opts.max_iter):
        i1, g = _pixel_node(chain, x)
        cap = c_h * (x - xn)
        f = cap + i1 - i_photo
        if abs(f) <= opts.abstol + opts.reltol * max(i1, i_photo, abs(cap)):
            return x
        if f > 0:
            hi = x
        else:
            lo = x
        x_new = x - f / (c_h + g)
        if not lo <= x_new <= hi:
            x_new = 0.5 * (lo + hi)
        # below one ulp of x the capacitor term c/h * dx can no longer be resolved
        if abs(x_new - x) <= 2 * math.ulp(x) or hi - lo <= 2 * math.ulp(hi):
            return x_new
        x = x_new
    raise SolverError("implicit Euler step did not converge", residual=abs(f), time=t)


def simulate_transient(
    chain: ReadoutChain,
    stimulus: Callable[[float], float],
    dt: float,
    t_end: float,
    opts: SolverOptions | None = None,
) -> Trace:
    """Backward-Euler response of the pixel node to a time-varying illuminance.

    ``stimulus`` maps time [s] to lux. The state starts at the DC point for
    ``stimulus(0)``; downstream mirror nodes are solved quasi-statically at
    every sample. The returned trace carries the line-branch output.
    """
    if not (math.isfinite(dt) and dt > 0):
        raise DomainError("dt must be > 0")
    if not t_end >= dt:
        raise DomainError("t_end must be >= dt")
    opts = opts or SolverOptions()
    n_steps = int(math.floor(t_end / dt * (1 + 1e-12)))
    pd = chain.photodiode

    t = np.arange(n_steps + 1, dtype=float) * dt
    i_out = np.empty(n_steps + 1)

    ip0 = photocurrent(pd, stimulus(0.0))
    x0 = _initial_guess(chain, ip0)
    x, _ = _newton(chain, ip0, x0, opts)
    _check_compliance(chain, *x, ip0)
    i_out[0] = _branch_output(chain, 0, x[1])

    for n in range(1, n_steps + 1):
        tn = t[n]
        ip = photocurrent(pd, stimulus(tn))
        xp = _implicit_step(chain, x[0], ip, dt, opts, tn)
        try:
            x, _ = _newton(chain, ip, (xp, x[1], x[2]), opts, solve_pixel=False)
        except SolverError as exc:
            raise SolverError("downstream mirror solve failed", residual=exc.residual, time=tn) from exc
        _check_compliance(chain, *x, ip)
        i_out[n] = _branch_output(chain, 0, x[1])

    return Trace(t, i_out, chain.r_trans * i_out)
