"""Sectioned ``key = value`` configuration documents.

Example::

    [panel]
    rows = 4
    cols = 4

    [nmos]
    lambda = 0.02

Every key has a default, unknown sections and keys are rejected, and
``parse_config(print_config(cfg)) == cfg``. The line and row mirrors share
the ``[nmos]`` parameters; the pixel mirror uses ``[pmos]``.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Any, Callable

from .circuit import MirrorSpec, ReadoutChain, SolverOptions
from .devices import NMOS_DEFAULT, PMOS_DEFAULT, MosfetParams, PhotodiodeParams, Polarity, TftSwitch
from .errors import ConfigError
from .panel import PanelConfig

_SECTION = re.compile(r"^\[\s*([A-Za-z_][\w]*)\s*\]$")


@dataclass(frozen=True)
class _Key:
    kind: type
    default: Any
    check: Callable[[Any], bool]
    rule: str


def _pos(x):
    return x > 0


def _nonneg(x):
    return x >= 0


def _dev_keys(d: MosfetParams) -> dict[str, _Key]:
    return {
        "vth": _Key(float, d.vth, _pos, "must be > 0"),
        "kp": _Key(float, d.kp, _pos, "must be > 0"),
        "lambda": _Key(float, d.lam, _nonneg, "must be >= 0"),
        "sigma_rel": _Key(float, d.sigma_rel, lambda x: 0 <= x < 0.25, "must lie in [0, 0.25)"),
    }


_pd, _tft, _solver = PhotodiodeParams(), TftSwitch(), SolverOptions()
_chain = ReadoutChain.__dataclass_fields__
_panel = PanelConfig.__dataclass_fields__

SCHEMA: dict[str, dict[str, _Key]] = {
    "panel": {
        "rows": _Key(int, _panel["rows"].default, lambda x: x >= 1, "must be >= 1"),
        "cols": _Key(int, _panel["cols"].default, lambda x: x >= 1, "must be >= 1"),
        "frame_time": _Key(float, _panel["frame_time"].default, _pos, "must be > 0"),
        "seed": _Key(int, _panel["seed"].default, _nonneg, "must be >= 0"),
        "adc_bits": _Key(int, _panel["adc_bits"].default, lambda x: 1 <= x <= 24, "must lie in [1, 24]"),
        "v_full_scale": _Key(float, _panel["v_full_scale"].default, _pos, "must be > 0"),
    },
    "nmos": _dev_keys(NMOS_DEFAULT),
    "pmos": _dev_keys(PMOS_DEFAULT),
    "photodiode": {
        "responsivity": _Key(float, _pd.responsivity, _pos, "must be > 0"),
        "dark_current": _Key(float, _pd.dark_current, _nonneg, "must be >= 0"),
        "c_node": _Key(float, _pd.c_node, _pos, "must be > 0"),
    },
    "chain": {
        "r_trans": _Key(float, _chain["r_trans"].default, _pos, "must be > 0"),
        "vdd": _Key(float, _chain["vdd"].default, _pos, "must be > 0"),
        "v_bias": _Key(float, _chain["v_bias"].default, _pos, "must be > 0"),
        "pixel_ratio": _Key(float, 1.0, _pos, "must be > 0"),
        "line_ratio": _Key(float, 1.0, _pos, "must be > 0"),
        "row_ratio": _Key(float, 1.0, _pos, "must be > 0"),
    },
    "tft": {
        "r_on": _Key(float, _tft.r_on, _nonneg, "must be >= 0"),
        "i_leak": _Key(float, _tft.i_leak, _nonneg, "must be >= 0"),
    },
    "solver": {
        "abstol": _Key(float, _solver.abstol, _nonneg, "must be >= 0"),
        "reltol": _Key(float, _solver.reltol, _nonneg, "must be >= 0"),
        "max_iter": _Key(int, _solver.max_iter, lambda x: x >= 1, "must be >= 1"),
    },
}


def _convert(raw: str, key: _Key, name: str, lineno: int):
    try:
        if key.kind is int:
            if not re.fullmatch(r"[+-]?\d+", raw):
                raise ValueError
            value = int(raw)
        else:
            value = float(raw)
            if not math.isfinite(value):
                raise ValueError
    except ValueError:
        raise ConfigError(f"malformed {key.kind.__name__} {raw!r}", key=name, line=lineno) from None
    if not key.check(value):
        raise ConfigError(f"{key.rule}, got {raw}", key=name, line=lineno)
    return value


def parse_values(text: str) -> dict[str, dict[str, Any]]:
    """Parse a document into a fully defaulted ``{section: {key: value}}`` table."""
    values = {sec: {k: spec.default for k, spec in keys.items()} for sec, keys in SCHEMA.items()}
    lines_of: dict[tuple[str, str], int] = {}
    section = None
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].split(";", 1)[0].strip()
        if not line:
            continue
        m = _SECTION.match(line)
        if m:
            section = m.group(1).lower()
            if section not in SCHEMA:
                raise ConfigError(f"unknown section [{section}]", line=lineno)
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}", line=lineno)
        name, raw = (s.strip() for s in line.split("=", 1))
        if section is None:
            raise ConfigError("key outside of any [section]", key=name, line=lineno)
        dotted = f"{section}.{name}"
        if name not in SCHEMA[section]:
            raise ConfigError("unknown key", key=dotted, line=lineno)
        if (section, name) in lines_of:
            raise ConfigError(f"duplicate key (first set on line {lines_of[section, name]})",
                              key=dotted, line=lineno)
        lines_of[section, name] = lineno
        values[section][name] = _convert(raw, SCHEMA[section][name], name, lineno)

    ch = values["chain"]
    if ch["v_bias"] > ch["vdd"]:
        raise ConfigError(f"must not exceed vdd={ch['vdd']}", key="v_bias", line=lines_of.get(("chain", "v_bias")))
    solver = values["solver"]
    if solver["abstol"] + solver["reltol"] == 0:
        raise ConfigError("abstol and reltol cannot both be 0", key="reltol",
                          line=lines_of.get(("solver", "reltol")))
    return values


def _device(polarity: Polarity, v: dict) -> MosfetParams:
    return MosfetParams(polarity, v["vth"], v["kp"], v["lambda"], v["sigma_rel"])


def config_from_values(values: dict[str, dict[str, Any]]) -> PanelConfig:
    nmos = _device(Polarity.NMOS, values["nmos"])
    pmos = _device(Polarity.PMOS, values["pmos"])
    ch = values["chain"]
    chain = ReadoutChain(
        pixel_mirror=MirrorSpec.matched(pmos, 2, ch["pixel_ratio"]),
        line_mirror=MirrorSpec.matched(nmos, 1, ch["line_ratio"]),
        row_mirror=MirrorSpec.matched(nmos, 1, ch["row_ratio"]),
        photodiode=PhotodiodeParams(**values["photodiode"]),
        r_trans=ch["r_trans"],
        vdd=ch["vdd"],
        v_bias=ch["v_bias"],
    )
    p = values["panel"]
    return PanelConfig(
        rows=p["rows"], cols=p["cols"], frame_time=p["frame_time"], chain=chain, seed=p["seed"],
        adc_bits=p["adc_bits"], v_full_scale=p["v_full_scale"],
        tft=TftSwitch(**values["tft"]), solver=SolverOptions(**values["solver"]),
    )


def parse_config(text: str) -> PanelConfig:
    return config_from_values(parse_values(text))


def _uniform_reference(spec: MirrorSpec, what: str) -> MosfetParams:
    if any(dev != spec.reference for dev in spec.outputs):
        raise ConfigError(f"{what} outputs differ from the reference; not representable")
    return spec.reference


def config_to_values(cfg: PanelConfig) -> dict[str, dict[str, Any]]:
    ch = cfg.chain
    pmos = _uniform_reference(ch.pixel_mirror, "pixel mirror")
    nmos = _uniform_reference(ch.line_mirror, "line mirror")
    if _uniform_reference(ch.row_mirror, "row mirror") != nmos:
        raise ConfigError("line and row mirrors differ; not representable")

    def dev(d):
        return {"vth": d.vth, "kp": d.kp, "lambda": d.lam, "sigma_rel": d.sigma_rel}

    return {
        "panel": {"rows": cfg.rows, "cols": cfg.cols, "frame_time": cfg.frame_time, "seed": cfg.seed,
                  "adc_bits": cfg.adc_bits, "v_full_scale": cfg.v_full_scale},
        "nmos": dev(nmos),
        "pmos": dev(pmos),
        "photodiode": {"responsivity": ch.photodiode.responsivity,
                       "dark_current": ch.photodiode.dark_current, "c_node": ch.photodiode.c_node},
        "chain": {"r_trans": ch.r_trans, "vdd": ch.vdd, "v_bias": ch.v_bias,
                  "pixel_ratio": ch.pixel_mirror.ratio, "line_ratio": ch.line_mirror.ratio,
                  "row_ratio": ch.row_mirror.ratio},
        "tft": {"r_on": cfg.tft.r_on, "i_leak": cfg.tft.i_leak},
        "solver": {"abstol": cfg.solver.abstol, "reltol": cfg.solver.reltol, "max_iter": cfg.solver.max_iter},
    }


def print_config(cfg: PanelConfig) -> str:
    out = []
    for section, table in config_to_values(cfg).items():
        out.append(f"[{section}]")
        for k, v in table.items():
            out.append(f"{k} = {v!r}")
        out.append("")
    return "\n".join(out)
