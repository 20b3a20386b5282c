"""The four seven-channel systems used in the simulation study.

Transition probabilities and throughputs are the published values.  The CQI
likelihood matrix was not published; the shipped default is a two-level
matrix whose positive-signal mass (0.8) reproduces the reported discount
bounds, and every preset is flagged ``reconstructed_obs``.
"""

from __future__ import annotations

import numpy as np

from .belief import ChannelParams

# rows: CQI level 1 (poor), level 2 (good); columns: state 0, state 1
RECONSTRUCTED_OBS = ((0.9, 0.1), (0.1, 0.9))

_THROUGHPUT = (0.4998, 0.6668, 1.0000, 0.6296, 0.5830, 0.8334, 0.6668)

SYSTEMS = {
    "system-1": {
        "p11": (0.6, 0.4, 0.2, 0.2, 0.4, 0.1, 0.3),
        "p01": (0.8, 0.6, 0.4, 0.9, 0.8, 0.6, 0.7),
        "throughput": _THROUGHPUT,
    },
    "system-2": {
        "p11": (0.8, 0.6, 0.4, 0.9, 0.8, 0.6, 0.7),
        "p01": (0.6, 0.4, 0.2, 0.2, 0.4, 0.1, 0.3),
        "throughput": _THROUGHPUT,
    },
    "system-3": {
        "p11": (0.1, 0.4, 0.3, 0.5, 0.1, 0.3, 0.5),
        "p01": (0.3, 0.6, 0.4, 0.7, 0.2, 0.6, 0.8),
        "throughput": _THROUGHPUT,
    },
    "system-4": {
        "p11": (0.3, 0.6, 0.4, 0.7, 0.2, 0.6, 0.8),
        "p01": (0.1, 0.4, 0.3, 0.5, 0.1, 0.3, 0.5),
        "throughput": _THROUGHPUT,
    },
}

PRESET_NAMES = tuple(SYSTEMS)


def preset_channels(name: str, obs=RECONSTRUCTED_OBS) -> list[ChannelParams]:
    try:
        spec = SYSTEMS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {', '.join(PRESET_NAMES)}") from None
    obs = np.asarray(obs, dtype=float)
    return [
        ChannelParams(p01, p11, obs, B)
        for p01, p11, B in zip(spec["p01"], spec["p11"], spec["throughput"])
    ]


def preset_dict(name: str) -> dict:
    """JSON-ready description of a preset, including the reconstruction marker."""
    return {
        "name": name,
        "channels": [c.to_dict() for c in preset_channels(name)],
        "reconstructed_obs": True,
    }
