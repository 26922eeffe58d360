"""Behavioral simulator of a flat-panel-detector active matrix read out through current mirrors."""
from .circuit import (
    MirrorSpec,
    ReadoutChain,
    ReadoutSample,
    SolverOptions,
    Trace,
    default_chain,
    mirror_dc,
    simulate_transient,
    small_signal_tau,
    solve_pixel_chain,
    sum_at_node,
)
from .config import parse_config, print_config
from .devices import (
    NMOS_DEFAULT,
    PMOS_DEFAULT,
    ComparatorSpec,
    MosfetParams,
    PhotodiodeParams,
    Polarity,
    TftSwitch,
    apply_mismatch,
    comparator_out,
    diode_connected_vgs,
    drain_current,
    photocurrent,
    tft_pass,
)
from .errors import (
    ComplianceError,
    ConfigError,
    DomainError,
    FpdSimError,
    OutputError,
    PatternError,
    SolverError,
)
from .fileio import load_scene, write_frame, write_led, write_trace
from .panel import (
    BinPattern,
    Frame,
    Panel,
    PanelConfig,
    ScanEvent,
    Scene,
    adc_quantize,
    binned_read,
    build_panel,
    resolution_reduce,
    scan_frame,
)
from .validation import LedMatrixState, Stimulus, led_test, multi_pixel_response, pulsed_response

__version__ = "0.1.0"
