"""Bench experiments: comparator/AND LED matrix and pulsed-LED dynamic response."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .circuit import ReadoutChain, SolverOptions, Trace, simulate_transient, small_signal_tau, sum_at_node
from .devices import ComparatorSpec, comparator_out, photocurrent
from .errors import DomainError
from .panel import Panel, Scene, _check_scene, pixel_currents

# Illuminance of the calibrated blue LED used for the dynamic tests.
REFERENCE_LUX = 0.4


@dataclass(frozen=True)
class LedMatrixState:
    lit: np.ndarray               # bool, rows x cols
    line_out: tuple[float, ...]   # comparator output per panel row [V]
    row_out: tuple[float, ...]    # comparator output per panel column [V]
    v_line: tuple[float, ...]     # comparator inputs
    v_row: tuple[float, ...]

    def lit_set(self) -> set[tuple[int, int]]:
        return {(int(r), int(c)) for r, c in zip(*np.nonzero(self.lit))}


def led_test(panel: Panel, scene: Scene, v_ref: float) -> LedMatrixState:
    """Drive an LED matrix from per-line and per-row comparators ANDed together.

    Each line (panel row) comparator sees the summed line-branch current of
    its pixels through the transimpedance stage; each row (panel column)
    comparator likewise sees its summed row-branch current. LED (i, j) is lit
    when both comparators read high, so two bright pixels on a diagonal also
    light the two off-diagonal intersections.
    """
    _check_scene(panel, scene)
    comp = ComparatorSpec(v_ref)
    r_trans = panel.cfg.chain.r_trans
    i_line = pixel_currents(panel, scene, branch="line")
    i_row = pixel_currents(panel, scene, branch="row")
    v_line = tuple(r_trans * sum_at_node(i_line[r, :]) for r in range(panel.cfg.rows))
    v_row = tuple(r_trans * sum_at_node(i_row[:, c]) for c in range(panel.cfg.cols))
    line_out = tuple(comparator_out(comp, v) for v in v_line)
    row_out = tuple(comparator_out(comp, v) for v in v_row)
    hi_line = np.array([v == comp.v_high for v in line_out])
    hi_row = np.array([v == comp.v_high for v in row_out])
    lit = hi_line[:, None] & hi_row[None, :]
    return LedMatrixState(lit, line_out, row_out, v_line, v_row)


@dataclass(frozen=True)
class Stimulus:
    """LED drive waveform in lux.

    ``constant`` emits baseline + amplitude at all times. ``pulse`` is a
    triggered pulse train: baseline for t <= 0, then each period starts with
    an "on" interval of duty * period at baseline + amplitude.
    """

    kind: str = "pulse"
    amplitude: float = REFERENCE_LUX
    period: float = 1e-3
    duty: float = 0.5
    baseline: float = 0.0

    def __post_init__(self):
        if self.kind not in ("constant", "pulse"):
            raise DomainError(f"unknown stimulus kind {self.kind!r}")
        if not self.amplitude >= 0 or not self.baseline >= 0:
            raise DomainError("stimulus amplitude and baseline must be >= 0")
        if not 0.0 <= self.duty <= 1.0:
            raise DomainError("duty must lie in [0, 1]")
        if self.kind == "pulse" and not self.period > 0:
            raise DomainError("pulse period must be > 0")

    def __call__(self, t: float) -> float:
        if self.kind == "constant":
            return self.baseline + self.amplitude
        if t <= 0.0:
            return self.baseline
        on = self.duty >= 1.0 or math.fmod(t, self.period) < self.duty * self.period
        return self.baseline + self.amplitude if on else self.baseline

    @property
    def levels(self) -> tuple[float, float]:
        return self.baseline, self.baseline + self.amplitude


def step_stimulus(amplitude: float, baseline: float = 0.0):
    """Baseline up to t = 0, baseline + amplitude afterwards."""
    return lambda t: baseline + amplitude if t > 0.0 else baseline


def default_dt(chain: ReadoutChain, stim: Stimulus, per_tau: int = 50) -> float:
    """tau / per_tau at the brightest stimulus level (the fastest node)."""
    ip = photocurrent(chain.photodiode, max(stim.levels))
    tau = small_signal_tau(chain, ip)
    if not math.isfinite(tau):
        raise DomainError("pixel node has no DC conductance at zero current; set dt explicitly")
    return tau / per_tau


def pulsed_response(chain: ReadoutChain, stim: Stimulus, dt: float | None = None,
                    t_end: float | None = None, opts: SolverOptions | None = None) -> Trace:
    dt = dt if dt is not None else default_dt(chain, stim)
    t_end = t_end if t_end is not None else 10 * stim.period
    return simulate_transient(chain, stim, dt, t_end, opts)


def multi_pixel_response(panel: Panel, pixels: Iterable[tuple[int, int]], stim: Stimulus,
                         dt: float | None = None, t_end: float | None = None) -> Trace:
    """Summed-node output of several pixels driven by the same stimulus.

    Pixels only couple through the ideal summing node, so each chain is
    integrated on its own and the traces are added sample by sample
    (exactly rounded).
    """
    pixels = sorted(set((int(r), int(c)) for r, c in pixels))
    if not pixels:
        raise DomainError("pixel set must not be empty")
    rows, cols = panel.shape
    bad = [p for p in pixels if not (0 <= p[0] < rows and 0 <= p[1] < cols)]
    if bad:
        raise DomainError(f"pixels out of range: {bad}")
    first = panel.chain(*pixels[0])
    dt = dt if dt is not None else min(default_dt(panel.chain(*p), stim) for p in pixels)
    t_end = t_end if t_end is not None else 10 * stim.period
    # identical chains give identical traces, so each distinct chain is integrated once
    cache: dict = {}
    traces = []
    for p in pixels:
        ch = panel.chain(*p)
        if ch not in cache:
            cache[ch] = simulate_transient(ch, stim, dt, t_end, panel.cfg.solver)
        traces.append(cache[ch])
    stacked = np.stack([tr.i_out for tr in traces])
    i_sum = np.array([sum_at_node(stacked[:, n]) for n in range(stacked.shape[1])])
    return Trace(traces[0].t, i_sum, first.r_trans * i_sum)
