"""Size caps and solver tolerances.

All caps can be overridden at runtime, either programmatically with
:func:`override` or from a JSON file through the command line ``--config``
option.
"""
from __future__ import annotations

import contextlib
import dataclasses
import json
from dataclasses import dataclass


@dataclass
class Caps:
    max_dim: int = 4096  # largest Hilbert-space dimension for tensor products
    sdp_block_dim: int = 512  # total real-embedded LMI dimension per SDP
    c0_blocks: int = 512  # binom(d, M) support blocks in incoherent-rank SDPs
    hash_enum: int = 10**6  # M**d functions for exhaustive hash search
    ensemble_n: int = 6  # copies for the phase ensemble (dimension 4**n)
    certify_n: int = 2  # copies for the SIO ceiling SDP without opt-in


@dataclass
class SolverTolerances:
    gap_tol: float = 1e-8
    feas_tol: float = 1e-7
    max_iter: int = 200


CAPS = Caps()
TOLERANCES = SolverTolerances()


def apply_overrides(values: dict) -> None:
    """Update :data:`CAPS` and :data:`TOLERANCES` in place from a flat mapping."""
    cap_fields = {f.name for f in dataclasses.fields(Caps)}
    tol_fields = {f.name for f in dataclasses.fields(SolverTolerances)}
    for key, val in values.items():
        if key in cap_fields:
            val = int(val)
            if val <= 0:
                raise ValueError(f"cap {key!r} must be positive, got {val}")
            setattr(CAPS, key, val)
        elif key in tol_fields:
            setattr(TOLERANCES, key, type(getattr(TOLERANCES, key))(val))
        else:
            raise KeyError(f"unknown config key {key!r}")


def load_config(path) -> dict:
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError("config file must hold a JSON object")
    apply_overrides(data)
    return data


@contextlib.contextmanager
def override(**values):
    """Temporarily override caps or tolerances, e.g. ``override(c0_blocks=3000)``."""
    saved_caps = dataclasses.replace(CAPS)
    saved_tol = dataclasses.replace(TOLERANCES)
    apply_overrides(values)
    try:
        yield
    finally:
        for f in dataclasses.fields(Caps):
            setattr(CAPS, f.name, getattr(saved_caps, f.name))
        for f in dataclasses.fields(SolverTolerances):
            setattr(TOLERANCES, f.name, getattr(saved_tol, f.name))
