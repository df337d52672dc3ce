"""Python bindings for the PV hardware-in-the-loop twin."""

import json

from ._core import (
    CodecError,
    ConfigError,
    DiodeFit,
    FitFailure,
    MpptState,
    PVModuleParams,
    ScriptParseError,
    current_at_voltage,
    decode_packet,
    default_module,
    encode_packet,
    fit,
    iv_curve,
    load_impedance,
    mpp,
    open_circuit_voltage,
    photocurrent,
    pno_step,
)
from . import _core

__all__ = [
    "CodecError",
    "ConfigError",
    "DiodeFit",
    "FitFailure",
    "MpptState",
    "PVModuleParams",
    "ScriptParseError",
    "current_at_voltage",
    "decode_packet",
    "default_config",
    "default_module",
    "encode_packet",
    "fit",
    "iv_curve",
    "load_impedance",
    "mpp",
    "open_circuit_voltage",
    "photocurrent",
    "pno_step",
    "run_scenario",
]


def default_config():
    """Effective default configuration as a dict."""
    return json.loads(_core.default_config_json())


def run_scenario(script, out=None, format="jsonl", config=None):
    """Runs a scenario script OFFLINE and returns the summary dict."""
    text = _core.run_scenario_offline(script, out, format, json.dumps(config) if config else "")
    return json.loads(text)
