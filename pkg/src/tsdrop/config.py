"""Experiment configuration and its JSON form."""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, fields, replace
from typing import Any

from tsdrop.learning import Dropout, InferenceMode, MaskMode, Sgd, WUpdate
from tsdrop.model import InputDist, TeacherKind

DEFAULT_N = 1000
DEFAULT_ETA = 0.005
DEFAULT_P = 0.5


class Backend(str, enum.Enum):
    DIRECT = "direct"
    THERMO = "thermo"


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


Rule = Sgd | Dropout


@dataclass(frozen=True)
class SimConfig:
    M: int
    K: int
    steps: int
    seed: int
    rule: Rule = field(default_factory=Sgd)
    N: int = DEFAULT_N
    eta: float = DEFAULT_ETA
    teacher_kind: TeacherKind = TeacherKind.ORTHOGONAL
    backend: Backend = Backend.DIRECT
    input_dist: InputDist = InputDist.GAUSSIAN
    w_update: WUpdate = WUpdate.GRADIENT
    sample_every: int | None = None
    window: int | None = None
    v_value: float = 0.5
    orthonormalize: bool = False
    remeasure_every: int = 100_000
    slope_tol: float = 1e-5
    min_duration: float = 200.0
    band: tuple[float, float] = (0.8, 0.98)
    drop_factor: float = 0.5

    def __post_init__(self):
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        for key, kind in (("teacher_kind", TeacherKind), ("backend", Backend),
                          ("input_dist", InputDist), ("w_update", WUpdate)):
            try:
                set_(key, kind(getattr(self, key)))
            except ValueError:
                choices = ", ".join(c.value for c in kind)
                raise ConfigError(key, f"unknown value {getattr(self, key)!r} (choose from {choices})") from None
        if self.sample_every is None:
            set_("sample_every", self.N)
        if self.window is None:
            set_("window", self.N)
        set_("band", tuple(self.band))
        self._validate()

    def _validate(self):
        for key in ("M", "K", "N"):
            if getattr(self, key) < 1:
                raise ConfigError(key, "must be >= 1")
        if not self.eta > 0:
            raise ConfigError("eta", f"must be > 0, got {self.eta}")
        if self.steps < 0:
            raise ConfigError("steps", "must be >= 0")
        if self.sample_every < 1:
            raise ConfigError("sample_every", "must be >= 1")
        if self.window < 1:
            raise ConfigError("window", "must be >= 1")
        if self.remeasure_every < 1:
            raise ConfigError("remeasure_every", "must be >= 1")
        if self.teacher_kind is TeacherKind.SINGULAR and self.M != 2:
            raise ConfigError("teacher_kind", f"singular teacher requires M=2, got M={self.M}")
        if not isinstance(self.rule, (Sgd, Dropout)):
            raise ConfigError("rule", f"unsupported rule {self.rule!r}")
        lo, hi = self.band
        if not 0 < lo < hi < 1:
            raise ConfigError("band", f"need 0 < lo < hi < 1, got {self.band}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed", "must be a 64-bit unsigned integer")

    @property
    def keep_prob(self) -> float:
        return self.rule.keep_prob

    def with_(self, **changes) -> "SimConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, enum.Enum):
                value = value.value
            elif f.name == "rule":
                value = rule_to_json(value)
            elif f.name == "band":
                value = list(value)
            out[f.name] = value
        return out


REQUIRED = ("M", "K", "steps", "seed", "rule")
_FIELDS = {f.name for f in fields(SimConfig)}
_INT_KEYS = {"M", "K", "N", "steps", "seed", "sample_every", "window", "remeasure_every"}
_FLOAT_KEYS = {"eta", "v_value", "slope_tol", "min_duration", "drop_factor"}


def rule_from_json(value) -> Rule:
    if isinstance(value, str):
        value = {value: {}}
    if not isinstance(value, dict) or len(value) != 1:
        raise ConfigError("rule", f"expected 'sgd', 'dropout' or a one-key object, got {value!r}")
    (name, params), = value.items()
    params = params or {}
    if not isinstance(params, dict):
        raise ConfigError(f"rule.{name}", "parameters must be an object")
    if name == "sgd":
        if params:
            raise ConfigError("rule.sgd", f"takes no parameters, got {sorted(params)}")
        return Sgd()
    if name == "dropout":
        unknown = set(params) - {"p", "mask_mode", "inference_mode"}
        if unknown:
            raise ConfigError(f"rule.dropout.{sorted(unknown)[0]}", "unknown key")
        p = params.get("p", DEFAULT_P)
        if isinstance(p, bool) or not isinstance(p, (int, float)) or not 0 < p <= 1:
            raise ConfigError("rule.dropout.p", f"p out of range (0, 1]: {p!r}")
        try:
            return Dropout(float(p), MaskMode(params.get("mask_mode", MaskMode.FIXED_SIZE)),
                           InferenceMode(params.get("inference_mode", InferenceMode.RESCALED)))
        except ValueError as exc:
            raise ConfigError("rule.dropout", str(exc)) from None
    raise ConfigError("rule", f"unknown rule {name!r}")


def rule_to_json(rule: Rule):
    if isinstance(rule, Sgd):
        return "sgd"
    return {"dropout": {"p": rule.p, "mask_mode": rule.mask_mode.value,
                        "inference_mode": rule.inference_mode.value}}


def config_from_dict(raw: dict) -> SimConfig:
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    unknown = sorted(set(raw) - _FIELDS)
    if unknown:
        raise ConfigError(unknown[0], "unknown key")
    missing = [k for k in REQUIRED if k not in raw]
    if missing:
        raise ConfigError(missing[0], f"missing required keys {', '.join(missing)}")
    kwargs = dict(raw)
    for key in _INT_KEYS & set(kwargs):
        value = kwargs[key]
        if value is None and key in ("sample_every", "window"):
            continue
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(key, f"expected an integer, got {value!r}")
    for key in _FLOAT_KEYS & set(kwargs):
        value = kwargs[key]
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(key, f"expected a number, got {value!r}")
        kwargs[key] = float(value)
    if "band" in kwargs:
        band = kwargs["band"]
        if not (isinstance(band, (list, tuple)) and len(band) == 2):
            raise ConfigError("band", "expected [lo, hi]")
    kwargs["rule"] = rule_from_json(kwargs["rule"])
    return SimConfig(**kwargs)


def parse_config(text: str | bytes) -> SimConfig:
    """Parse a JSON config; unspecified fields take their documented defaults."""
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<json>", f"malformed JSON: {exc}") from None
    return config_from_dict(raw)


def _coerce(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(raw: dict, overrides: list[str], sections: tuple[str, ...] = ()) -> dict:
    """Apply ``dotted.key=value`` overrides to a raw config dict (copy).

    Values are read as JSON when possible, otherwise as strings. Assigning
    below ``rule`` when it is a bare string expands it to an object first.
    """
    out = json.loads(json.dumps(raw))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(item, "override must look like key=value")
        path, value = item.split("=", 1)
        keys = path.strip().split(".")
        if keys[0] not in _FIELDS and keys[0] not in sections:
            raise ConfigError(path, "unknown key")
        node = out
        for k in keys[:-1]:
            nxt = node.get(k)
            if isinstance(nxt, str):
                nxt = {nxt: {}}
            if not isinstance(nxt, dict):
                nxt = {}
            if k == "rule" and keys[-1] != k:
                # switching rule kind via an override drops the other kind
                nxt = {keys[1]: nxt.get(keys[1], {})} if len(keys) > 2 else nxt
            node[k] = nxt
            node = nxt
        node[keys[-1]] = _coerce(value)
    return out


__all__ = [
    "Backend", "ConfigError", "SimConfig", "apply_overrides", "config_from_dict",
    "parse_config", "rule_from_json", "rule_to_json",
]
