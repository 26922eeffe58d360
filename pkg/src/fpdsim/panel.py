"""Panel of readout chains: progressive scanning, binning by node summation, ADC."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Mapping

import numpy as np

from .circuit import (
    MirrorSpec,
    ReadoutChain,
    SolverOptions,
    default_chain,
    solve_pixel_chain,
    sum_at_node,
)
from .devices import MosfetParams, PhotodiodeParams, TftSwitch, apply_mismatch, photocurrent, tft_pass
from .errors import ConfigError, DomainError, PatternError

Coord = tuple[int, int]


@dataclass(frozen=True)
class PanelConfig:
    rows: int = 4
    cols: int = 4
    frame_time: float = 1e-3
    chain: ReadoutChain = field(default_factory=default_chain)
    seed: int = 0
    adc_bits: int = 12
    v_full_scale: float = 5.0
    tft: TftSwitch = field(default_factory=TftSwitch)
    solver: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        checks = (
            ("rows", isinstance(self.rows, int) and self.rows >= 1, "must be an integer >= 1"),
            ("cols", isinstance(self.cols, int) and self.cols >= 1, "must be an integer >= 1"),
            ("frame_time", self.frame_time > 0 and math.isfinite(self.frame_time), "must be > 0"),
            ("adc_bits", isinstance(self.adc_bits, int) and 1 <= self.adc_bits <= 24, "must be in [1, 24]"),
            ("v_full_scale", self.v_full_scale > 0 and math.isfinite(self.v_full_scale), "must be > 0"),
            ("seed", isinstance(self.seed, int) and self.seed >= 0, "must be a non-negative integer"),
        )
        for name, ok, msg in checks:
            if not ok:
                raise ConfigError(f"{msg}, got {getattr(self, name)!r}", key=name)

    @property
    def photodiode(self) -> PhotodiodeParams:
        return self.chain.photodiode


@dataclass(frozen=True)
class Panel:
    cfg: PanelConfig
    chains: tuple[tuple[ReadoutChain, ...], ...]

    @property
    def shape(self) -> tuple[int, int]:
        return self.cfg.rows, self.cfg.cols

    def chain(self, r: int, c: int) -> ReadoutChain:
        return self.chains[r][c]


@dataclass(frozen=True)
class Scene:
    """Illuminance map in lux, with optional per-pixel waveforms (t -> lux)."""

    lux: np.ndarray
    waveforms: Mapping[Coord, Callable[[float], float]] = field(default_factory=dict)

    def __post_init__(self):
        lux = np.array(self.lux, dtype=float)
        if lux.ndim != 2:
            raise DomainError("scene must be a 2-D illuminance map")
        if not np.all(np.isfinite(lux)) or np.any(lux < 0):
            raise DomainError("scene illuminance must be finite and >= 0")
        lux.setflags(write=False)
        object.__setattr__(self, "lux", lux)

    @property
    def shape(self) -> tuple[int, int]:
        return self.lux.shape

    @classmethod
    def uniform(cls, rows: int, cols: int, lux: float) -> "Scene":
        return cls(np.full((rows, cols), float(lux)))

    def at(self, t: float) -> np.ndarray:
        if not self.waveforms:
            return self.lux
        out = self.lux.copy()
        for (r, c), wave in self.waveforms.items():
            out[r, c] = wave(t)
        return out

    def transpose(self) -> "Scene":
        return Scene(self.lux.T, {(c, r): w for (r, c), w in self.waveforms.items()})


@dataclass(frozen=True)
class BinPattern:
    groups: tuple[tuple[Coord, ...], ...]
    grid: tuple[int, int] | None = None  # layout of groups when they tile a block grid
    name: str = "custom"

    def __post_init__(self):
        groups = tuple(tuple((int(r), int(c)) for r, c in g) for g in self.groups)
        object.__setattr__(self, "groups", groups)
        if self.grid is None:
            object.__setattr__(self, "grid", (1, len(groups)))

    @classmethod
    def singletons(cls, rows: int, cols: int) -> "BinPattern":
        return cls(tuple(((r, c),) for r in range(rows) for c in range(cols)), (rows, cols), "singleton")

    @classmethod
    def blocks(cls, rows: int, cols: int, br: int, bc: int) -> "BinPattern":
        """Tile the panel with br x bc blocks; edge blocks are clipped."""
        if br < 1 or bc < 1:
            raise PatternError(f"block size must be >= 1, got {br}x{bc}")
        groups = []
        for r0 in range(0, rows, br):
            for c0 in range(0, cols, bc):
                groups.append(tuple((r, c) for r in range(r0, min(r0 + br, rows))
                                    for c in range(c0, min(c0 + bc, cols))))
        grid = (-(-rows // br), -(-cols // bc))
        return cls(tuple(groups), grid, f"block{br}x{bc}")

    @classmethod
    def whole(cls, rows: int, cols: int) -> "BinPattern":
        return cls((tuple((r, c) for r in range(rows) for c in range(cols)),), (1, 1), "whole")

    def validate(self, rows: int, cols: int) -> None:
        seen: dict[Coord, int] = {}
        outside, overlap = [], []
        for gi, group in enumerate(self.groups):
            if not group:
                raise PatternError(f"group {gi} is empty")
            for rc in group:
                r, c = rc
                if not (0 <= r < rows and 0 <= c < cols):
                    outside.append(rc)
                elif rc in seen:
                    overlap.append(rc)
                else:
                    seen[rc] = gi
        missing = [(r, c) for r in range(rows) for c in range(cols) if (r, c) not in seen]
        problems = []
        if outside:
            problems.append(f"out of range {sorted(outside)}")
        if overlap:
            problems.append(f"overlapping {sorted(set(overlap))}")
        if missing:
            problems.append(f"uncovered {missing}")
        if problems:
            raise PatternError("invalid bin pattern: " + "; ".join(problems), outside + overlap + missing)
        if self.grid[0] * self.grid[1] != len(self.groups):
            raise PatternError(f"grid {self.grid} does not hold {len(self.groups)} groups")


@dataclass(frozen=True)
class ScanEvent:
    t_select: float
    row: int


@dataclass(frozen=True)
class Frame:
    codes: np.ndarray      # int64, shape = group grid
    currents: np.ndarray   # pre-quantization current per group [A]
    voltages: np.ndarray   # r_trans * current [V]
    frame_time: float
    adc_bits: int
    pattern: str
    seed: int
    mode: str = "pixel"    # pixel | sum | avg

    @property
    def shape(self) -> tuple[int, int]:
        return self.codes.shape

    @property
    def charge(self) -> np.ndarray:
        """Charge delivered over one integration window (the frame time)."""
        return self.currents * self.frame_time


# --- construction ---------------------------------------------------------------

def derive_seed(master: int, *path: int) -> int:
    """Deterministic 63-bit seed for one device from the master seed and its coordinates.

    Uses numpy's SeedSequence over the entropy tuple (master, *path); a pixel's
    seed depends only on its own coordinates, so resizing the panel leaves
    existing pixels unchanged.
    """
    state = np.random.SeedSequence([master, *path]).generate_state(2, np.uint32)
    return (int(state[0]) << 31) ^ int(state[1])


# Tags keep the per-device streams of different mirror kinds apart.
_PIXEL, _LINE, _ROW = 1, 2, 3


def _mismatched(spec: MirrorSpec, master: int, *path: int) -> MirrorSpec:
    ref = apply_mismatch(spec.reference, derive_seed(master, *path, 0))
    outs = tuple(apply_mismatch(dev, derive_seed(master, *path, k + 1)) for k, dev in enumerate(spec.outputs))
    return MirrorSpec(ref, spec.ratio, outs)


def build_panel(cfg: PanelConfig) -> Panel:
    """Instantiate one chain per pixel with per-device mismatch.

    Pixel mirrors are private to each pixel. The line mirror of panel row r
    and the row mirror of panel column c are shared by every pixel on them.
    """
    tpl = cfg.chain
    lines = [_mismatched(tpl.line_mirror, cfg.seed, _LINE, r) for r in range(cfg.rows)]
    cols = [_mismatched(tpl.row_mirror, cfg.seed, _ROW, c) for c in range(cfg.cols)]
    chains = tuple(
        tuple(
            replace(tpl,
                    pixel_mirror=_mismatched(tpl.pixel_mirror, cfg.seed, _PIXEL, r, c),
                    line_mirror=lines[r],
                    row_mirror=cols[c])
            for c in range(cfg.cols)
        )
        for r in range(cfg.rows)
    )
    return Panel(cfg, chains)


# --- readout --------------------------------------------------------------------

def adc_quantize(v: float, bits: int, v_full: float) -> int:
    if bits < 1:
        raise DomainError("bits must be >= 1")
    if not v_full > 0:
        raise DomainError("v_full must be > 0")
    if math.isnan(v):
        raise DomainError("cannot quantize NaN")
    top = (1 << bits) - 1
    if v <= 0:
        return 0
    if v >= v_full:
        return top
    return min(int(math.floor(v / v_full * (1 << bits))), top)


def _check_scene(panel: Panel, scene: Scene) -> None:
    if scene.shape != panel.shape:
        raise DomainError(f"scene is {scene.shape[0]}x{scene.shape[1]}, panel is "
                          f"{panel.shape[0]}x{panel.shape[1]}")


def pixel_currents(panel: Panel, scene: Scene, t: float = 0.0, branch: str = "line") -> np.ndarray:
    """Chain output current of every pixel with all gates on."""
    _check_scene(panel, scene)
    lux = scene.at(t)
    pd = panel.cfg.photodiode
    sw = replace(panel.cfg.tft, gate_on=True)
    out = np.empty(panel.shape)
    for r in range(panel.cfg.rows):
        for c in range(panel.cfg.cols):
            ip = tft_pass(sw, photocurrent(pd, float(lux[r, c])))
            s = solve_pixel_chain(panel.chains[r][c], ip, panel.cfg.solver)
            out[r, c] = s.i_line if branch == "line" else s.i_row
    return out


def _frame(panel: Panel, currents: np.ndarray, pattern: str, mode: str) -> Frame:
    cfg = panel.cfg
    r_trans = cfg.chain.r_trans
    volts = r_trans * currents
    codes = np.array([adc_quantize(float(v), cfg.adc_bits, cfg.v_full_scale) for v in volts.ravel()],
                     dtype=np.int64).reshape(currents.shape)
    return Frame(codes, currents, volts, cfg.frame_time, cfg.adc_bits, pattern, cfg.seed, mode)


def scan_frame(panel: Panel, scene: Scene) -> tuple[Frame, list[ScanEvent]]:
    """Progressive scan, one row at a time from the top.

    Each row is selected at ``r * frame_time / rows``; every pixel in the row
    is read through its chain. Pixels integrate continuously, so each value
    stands for a full frame_time window.
    """
    _check_scene(panel, scene)
    cfg = panel.cfg
    pd = cfg.photodiode
    row_period = cfg.frame_time / cfg.rows
    currents = np.empty(panel.shape)
    log = []
    for r in range(cfg.rows):
        t_sel = r * row_period
        log.append(ScanEvent(t_sel, r))
        lux = scene.at(t_sel)
        for c in range(cfg.cols):
            sw = replace(cfg.tft, gate_on=True)
            ip = tft_pass(sw, photocurrent(pd, float(lux[r, c])))
            currents[r, c] = solve_pixel_chain(panel.chains[r][c], ip, cfg.solver).i_line
    return _frame(panel, currents, "singleton", "pixel"), log


def _group_sums(panel: Panel, scene: Scene, pattern: BinPattern) -> tuple[np.ndarray, np.ndarray]:
    _check_scene(panel, scene)
    pattern.validate(*panel.shape)
    per_pixel = pixel_currents(panel, scene)
    sums = np.array([sum_at_node([per_pixel[r, c] for r, c in g]) for g in pattern.groups])
    sizes = np.array([len(g) for g in pattern.groups], dtype=float)
    return sums.reshape(pattern.grid), sizes.reshape(pattern.grid)


def binned_read(panel: Panel, scene: Scene, pattern: BinPattern) -> Frame:
    """One reading per group: member chain currents summed at a shared node."""
    sums, _ = _group_sums(panel, scene, pattern)
    return _frame(panel, sums, pattern.name, "sum")


def resolution_reduce(panel: Panel, scene: Scene, pattern: BinPattern) -> Frame:
    """Like binned_read, but each group reports its mean current."""
    sums, sizes = _group_sums(panel, scene, pattern)
    return _frame(panel, sums / sizes, pattern.name, "avg")
