"""Experiment files: versioned JSON documents describing a batch of simulations.

A file lists named systems (a built-in preset or explicit channels), the
policies to compare, the discount factors (numbers or the ``"paper-bound"``
token) and run options.  The master seed is deliberately not part of the
file; it is always supplied on the command line.

Every validation error is reported against the line of the offending value.
"""

from __future__ import annotations

import json
import json.decoder
import json.scanner
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema

from .belief import ChannelParams
from .exceptions import ConfigError
from .index import system_beta_bound
from .policy import PolicySpec, TieBreak
from .presets import RECONSTRUCTED_OBS, preset_channels
from .sim import DEFAULT_HORIZON, DEFAULT_RUNS, STEADY_STATE, SystemConfig

FORMAT_VERSION = 1
PAPER_BOUND = "paper-bound"
SCHEMA_NAME = "experiment-v1.json"


def load_schema() -> dict:
    text = resources.files(__package__).joinpath("schema").joinpath(SCHEMA_NAME).read_text(encoding="utf-8")
    return json.loads(text)


# --------------------------------------------------------------------------
# JSON with source positions
# --------------------------------------------------------------------------


class _Located:
    __slots__ = ("value", "pos")

    def __init__(self, value, pos):
        self.value = value
        self.pos = pos


def _locating_scanner():
    """The stdlib pure-Python scanner, with every value wrapped in ``_Located``."""
    ctx = json.decoder.JSONDecoder()
    scan = None

    def parse_object(s_and_end, strict, _scan_once, object_hook, object_pairs_hook, memo):
        return json.decoder.JSONObject(s_and_end, strict, scan, object_hook, object_pairs_hook, memo)

    def parse_array(s_and_end, _scan_once):
        return json.decoder.JSONArray(s_and_end, scan)

    ctx.parse_object = parse_object
    ctx.parse_array = parse_array
    inner = json.scanner.py_make_scanner(ctx)

    def scan(s, idx):
        value, end = inner(s, idx)
        return _Located(value, idx), end

    return scan


def _unwrap(node, path, positions):
    positions[path] = node.pos
    v = node.value
    if isinstance(v, dict):
        return {k: _unwrap(c, path + (k,), positions) for k, c in v.items()}
    if isinstance(v, list):
        return [_unwrap(c, path + (i,), positions) for i, c in enumerate(v)]
    return v


def load_json_with_positions(text: str):
    """Parse JSON text; return ``(data, positions)``.

    ``positions`` maps each value's path (a tuple of keys and list indices)
    to its character offset in ``text``.
    """
    dec = json.decoder.JSONDecoder()
    dec.scan_once = _locating_scanner()
    located = dec.decode(text)
    positions: dict = {}
    return _unwrap(located, (), positions), positions


class _Locator:
    def __init__(self, text, positions, source):
        self.text = text
        self.positions = positions
        self.source = source

    def line(self, path) -> int | None:
        path = tuple(path)
        while path not in self.positions and path:
            path = path[:-1]
        pos = self.positions.get(path)
        return None if pos is None else self.text.count("\n", 0, pos) + 1

    def error(self, path, message) -> ConfigError:
        where = "/".join(str(p) for p in path) or "<root>"
        return ConfigError(f"{where}: {message}", line=self.line(path), source=self.source)


# --------------------------------------------------------------------------
# Document model
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SystemEntry:
    """One named system; ``preset`` is set when the channels come from a built-in."""

    name: str
    channels: tuple
    M: int = 1
    initial_belief: object = STEADY_STATE
    preset: str | None = None
    obs: tuple | None = None
    reconstructed_obs: bool = False

    @property
    def N(self) -> int:
        return len(self.channels)

    def paper_bound(self) -> float:
        return system_beta_bound(self.channels)

    def system_config(self, beta: float, horizon: int, runs: int, master_seed: int) -> SystemConfig:
        return SystemConfig(
            channels=self.channels,
            M=self.M,
            beta=beta,
            horizon=horizon,
            initial_belief=self.initial_belief,
            runs=runs,
            master_seed=master_seed,
            name=self.name,
        )

    def to_dict(self) -> dict:
        d: dict = {"name": self.name}
        if self.preset is not None:
            d["preset"] = self.preset
            if self.obs is not None:
                d["obs"] = [list(r) for r in self.obs]
        else:
            d["channels"] = [c.to_dict() for c in self.channels]
        d["M"] = self.M
        d["initial_belief"] = (
            STEADY_STATE if self.initial_belief == STEADY_STATE else list(self.initial_belief)
        )
        d["reconstructed_obs"] = self.reconstructed_obs
        return d


@dataclass(frozen=True)
class OutputOptions:
    path: str | None = None
    emit_trace: bool = False

    def to_dict(self) -> dict:
        d: dict = {"emit_trace": self.emit_trace}
        if self.path is not None:
            d["path"] = self.path
        return d


@dataclass(frozen=True)
class ExperimentFile:
    systems: tuple
    policies: tuple
    betas: tuple                      # floats and/or PAPER_BOUND
    runs: int = DEFAULT_RUNS
    horizon: int = DEFAULT_HORIZON
    tie_break: TieBreak = TieBreak.LOWEST_INDEX
    output: OutputOptions = field(default_factory=OutputOptions)
    version: int = FORMAT_VERSION

    def system(self, name: str) -> SystemEntry:
        for s in self.systems:
            if s.name == name:
                return s
        raise KeyError(f"no system named {name!r}")

    def resolve_beta(self, beta, system: SystemEntry) -> float:
        return system.paper_bound() if beta == PAPER_BOUND else float(beta)

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "systems": [s.to_dict() for s in self.systems],
            "policies": [_policy_text(p) for p in self.policies],
            "tie_break": self.tie_break.value,
            "betas": list(self.betas),
            "runs": self.runs,
            "horizon": self.horizon,
            "output": self.output.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def _policy_text(p: PolicySpec) -> str:
    return f"awi:{p.n}" if p.kind.value == "awi" else p.kind.value


# --------------------------------------------------------------------------
# Parsing
# --------------------------------------------------------------------------


def _schema_errors(data, loc: _Locator):
    validator = jsonschema.Draft202012Validator(load_schema())
    err = jsonschema.exceptions.best_match(validator.iter_errors(data))
    if err is not None:
        raise loc.error(tuple(err.absolute_path), err.message)


def _parse_system(raw: dict, i: int, loc: _Locator) -> SystemEntry:
    path = ("systems", i)
    try:
        if "preset" in raw:
            obs = raw.get("obs")
            channels = preset_channels(raw["preset"], RECONSTRUCTED_OBS if obs is None else obs)
            obs_t = None if obs is None else tuple(tuple(float(x) for x in r) for r in obs)
            reconstructed = obs is None
        else:
            channels = []
            for j, c in enumerate(raw["channels"]):
                try:
                    channels.append(ChannelParams.from_dict(c))
                except ValueError as exc:
                    raise loc.error(path + ("channels", j), str(exc)) from None
            obs_t = None
            reconstructed = bool(raw.get("reconstructed_obs", False))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise loc.error(path + ("obs",), str(exc)) from None

    M = raw.get("M", 1)
    if not M < len(channels):
        raise loc.error(path + ("M",), f"M={M} must be smaller than the number of channels ({len(channels)})")
    init = raw.get("initial_belief", STEADY_STATE)
    if init != STEADY_STATE:
        if len(init) != len(channels):
            raise loc.error(path + ("initial_belief",), f"{len(init)} initial beliefs for {len(channels)} channels")
        init = tuple(float(x) for x in init)
    return SystemEntry(
        name=raw["name"],
        channels=tuple(channels),
        M=M,
        initial_belief=init,
        preset=raw.get("preset"),
        obs=obs_t,
        reconstructed_obs=reconstructed,
    )


def parse_experiment(text: str, source: str = "<config>") -> ExperimentFile:
    """Parse and validate an experiment document, raising ``ConfigError`` with a line number."""
    try:
        data, positions = load_json_with_positions(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", line=exc.lineno, source=source) from None
    loc = _Locator(text, positions, source)
    if not isinstance(data, dict):
        raise loc.error((), "top level must be an object")
    if "version" in data and data["version"] != FORMAT_VERSION:
        raise loc.error(("version",), f"unsupported format version {data['version']!r}; expected {FORMAT_VERSION}")
    _schema_errors(data, loc)

    systems = []
    seen = set()
    for i, raw in enumerate(data["systems"]):
        if raw["name"] in seen:
            raise loc.error(("systems", i, "name"), f"duplicate system name {raw['name']!r}")
        seen.add(raw["name"])
        systems.append(_parse_system(raw, i, loc))

    tie_break = TieBreak(data.get("tie_break", TieBreak.LOWEST_INDEX.value))
    policies = []
    for j, p in enumerate(data["policies"]):
        try:
            policies.append(PolicySpec.parse(p, tie_break))
        except ValueError as exc:
            raise loc.error(("policies", j), str(exc)) from None
    if len(set(policies)) != len(policies):
        raise loc.error(("policies",), "duplicate policy")

    betas = tuple(b if b == PAPER_BOUND else float(b) for b in data["betas"])
    out = data.get("output", {})
    return ExperimentFile(
        systems=tuple(systems),
        policies=tuple(policies),
        betas=betas,
        runs=data.get("runs", DEFAULT_RUNS),
        horizon=data.get("horizon", DEFAULT_HORIZON),
        tie_break=tie_break,
        output=OutputOptions(out.get("path"), bool(out.get("emit_trace", False))),
        version=data["version"],
    )


def load_experiment(path) -> ExperimentFile:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", source=str(path)) from None
    return parse_experiment(text, source=str(path))


def preset_experiment(names, policies, betas, runs=DEFAULT_RUNS, horizon=DEFAULT_HORIZON) -> ExperimentFile:
    """Experiment over built-in presets, used when no config file is given."""
    systems = tuple(
        SystemEntry(name=n, channels=tuple(preset_channels(n)), preset=n, reconstructed_obs=True)
        for n in names
    )
    return ExperimentFile(systems=systems, policies=tuple(policies), betas=tuple(betas),
                          runs=runs, horizon=horizon)
