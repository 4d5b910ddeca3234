"""Experiment configuration, its text/JSON grammars and the compiled-in presets.

Flat text grammar, one ``key = value`` per line, ``#`` starts a comment::

    preset = starfish-S1        # optional base, later keys override it
    shape = starfish            # starfish | circle | kite1 | kite2
    k = 5
    sources = S1                # preset name S1..S5, or "x,y; x,y; ..."
    init_sources = dsm          # dsm, a preset name, or a point list
    receiver_R = 4
    aperture = 3pi/2            # float, "pi", "<a>pi" or "<a>pi/<b>"
    n_receivers = 90
    epsilon = 0.1
    seed = 0
    omega1 = 2.5                # half-width, or "xmin,xmax,ymin,ymax"
    omega1_n = 200
    omega2 = 1.5
    omega2_n = 100
    lambda_radius = 0.6
    alpha = 1e-8
    M = 8
    lm_ftol = 1e-6              # default 1e-6 full aperture, 1e-4 limited
    lm_xtol = 1e-6
    max_iters = 100
    n_quad = 64
    n_knots = 256

The JSON form is one object with the same keys; point lists may be given as
nested arrays.

Source placements without fixed coordinates use N points on a ring starting
at angle 0, with radius 2 around the circle, 2.4 around the kites and 2.2
around the starfish.
"""

import dataclasses
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from .geometry import SHAPES, TWO_PI, AuxiliaryCurve, ReceiverArray, SamplingGrid, make_shape, points_inside
from .inversion import InversionParams

SOURCE_PRESETS = {
    "S1": ((2, 2), (-0.5, 1.8), (-1.6, -1), (0, -2.2), (2, -1.2)),
    "S2": ((1.3, 0), (1.35, 0.1), (0, 2), (0, -2), (-2, 0)),
    "S3": ((2, 1), (1.8, 1.4), (0, 1.6), (-1.6, 1.8), (-2, 0), (-2, -2), (0, -2.1), (1.8, -1.9)),
    "S4": ((2.1, 0.9), (1.85, 1.3), (-0.1, 1.75), (-1.7, 1.7), (-1.9, 0.05), (-1.94, -1.9), (0, -2.13), (1.8, -1.8)),
    "S5": ((2.3, 1.3), (2.1, 1.7), (0.3, 1.3), (-1.3, 1.5), (-2.3, -0.3), (-2.3, -2.3), (-0.3, -1.8), (1.5, -1.6)),
}

STAR_SHAPED = {"starfish": True, "circle": True, "kite1": False, "kite2": False}


class ConfigError(ValueError):
    pass


def ring(n, radius):
    """n points on a circle, the first on the positive x axis."""
    th = TWO_PI * np.arange(n) / n
    pts = radius * np.stack([np.cos(th), np.sin(th)], axis=-1)
    return np.round(pts, 12) + 0.0


def ring_radius(shape):
    return {"circle": 2.0, "kite1": 2.4, "kite2": 2.4}.get(shape, 2.2)


def _bounds(value) -> Tuple[float, float, float, float]:
    v = np.atleast_1d(np.asarray(value, dtype=float)).ravel()
    if v.size == 1:
        return (-float(v[0]), float(v[0]), -float(v[0]), float(v[0]))
    if v.size == 4:
        return tuple(float(x) for x in v)
    raise ConfigError(f"grid bounds need 1 or 4 numbers, got {v.size}")


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    shape: str = "starfish"
    k: float = 5.0
    sources: np.ndarray = field(default_factory=lambda: np.array(SOURCE_PRESETS["S1"], dtype=float))
    init_sources: Optional[np.ndarray] = None
    receiver_R: float = 4.0
    aperture: float = TWO_PI
    n_receivers: int = 120
    epsilon: float = 0.1
    seed: int = 0
    omega1: Tuple[float, float, float, float] = (-2.5, 2.5, -2.5, 2.5)
    omega1_n: int = 200
    omega2: Tuple[float, float, float, float] = (-1.5, 1.5, -1.5, 1.5)
    omega2_n: int = 100
    lambda_radius: float = 0.6
    alpha: float = 1e-8
    M: int = 8
    lm_ftol: Optional[float] = None
    lm_xtol: Optional[float] = None
    max_iters: int = 100
    n_quad: int = 64
    n_knots: int = 256
    name: str = "custom"

    def __post_init__(self):
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        set_("sources", np.asarray(self.sources, dtype=float).reshape(-1, 2))
        if self.init_sources is not None:
            set_("init_sources", np.asarray(self.init_sources, dtype=float).reshape(-1, 2))
        set_("omega1", _bounds(self.omega1))
        set_("omega2", _bounds(self.omega2))
        self.validate()

    def validate(self):
        if self.shape not in SHAPES:
            raise ConfigError(f"unknown shape {self.shape!r}")
        if not self.k > 0:
            raise ConfigError("k must be positive")
        if len(self.sources) == 0:
            raise ConfigError("at least one source is required")
        if self.init_sources is not None and self.init_sources.shape != self.sources.shape:
            raise ConfigError("init_sources must have one point per source")
        if self.epsilon < 0:
            raise ConfigError("epsilon must be nonnegative")
        if min(self.omega1_n, self.omega2_n, self.n_quad, self.M, self.max_iters, self.n_knots) < 1:
            raise ConfigError("grid sizes, n_quad, M, max_iters and n_knots must be positive")
        o1, o2 = self.omega1, self.omega2
        if not (o1[0] <= o2[0] and o2[1] <= o1[1] and o1[2] <= o2[2] and o2[3] <= o1[3]):
            raise ConfigError("omega2 must lie inside omega1")
        try:
            self.receivers
            self.grid1
            self.grid2
            self.lambda_curve
            self.inversion_params
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        dist = np.hypot(self.sources[:, 0], self.sources[:, 1])
        if np.any(dist >= self.receiver_R):
            raise ConfigError("sources must lie inside the receiver circle")
        if np.any(points_inside(make_shape(self.shape), self.sources)):
            raise ConfigError("sources must lie outside the obstacle")

    @property
    def full_aperture(self) -> bool:
        return self.receivers.full_aperture

    @property
    def receivers(self) -> ReceiverArray:
        return ReceiverArray(self.receiver_R, self.aperture, self.n_receivers)

    @property
    def grid1(self) -> SamplingGrid:
        return SamplingGrid(*self.omega1, self.omega1_n, self.omega1_n)

    @property
    def grid2(self) -> SamplingGrid:
        return SamplingGrid(*self.omega2, self.omega2_n, self.omega2_n)

    @property
    def lambda_curve(self) -> AuxiliaryCurve:
        return AuxiliaryCurve(self.lambda_radius)

    @property
    def inversion_params(self) -> InversionParams:
        tol = 1e-6 if self.full_aperture else 1e-4
        return InversionParams(
            alpha=self.alpha,
            M=self.M,
            lm_ftol=tol if self.lm_ftol is None else self.lm_ftol,
            lm_xtol=tol if self.lm_xtol is None else self.lm_xtol,
            max_iters=self.max_iters,
        )

    @property
    def truth_is_starlike(self) -> bool:
        return STAR_SHAPED[self.shape]

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, np.ndarray):
                v = v.tolist()
            elif isinstance(v, tuple):
                v = list(v)
            out[f.name] = v
        return out


# -- presets -----------------------------------------------------------------

_STARFISH = dict(shape="starfish", omega1=2.5, omega2=1.5)
_CIRCLE = dict(shape="circle", omega1=2.5, omega2=1.2, alpha=1e-8)
_KITE = dict(omega1=2.5, omega2=1.5)
STARFISH_ALPHA = {5: 1e-8, 8: 1e-6}
KITE_ALPHA = {("kite1", 3): 1e-10, ("kite1", 5): 1e-9, ("kite2", 3): 1e-9, ("kite2", 5): 1e-8}
APERTURES = {"pi": (np.pi, 60), "3pi2": (1.5 * np.pi, 90)}


def _build_presets():
    p = {
        "starfish-S1": dict(_STARFISH, k=5.0, sources="S1", alpha=1e-8),
        "starfish-S2": dict(_STARFISH, k=5.0, sources="S2", omega1=2.2, omega2=1.2, alpha=1e-8),
    }
    for k in (5, 8):
        for n in (2, 4, 6, 8):
            p[f"circle-N{n}-k{k}"] = dict(_CIRCLE, k=float(k), sources=ring(n, ring_radius("circle")))
            star = ring(n, ring_radius("starfish"))
            p[f"starfish-N{n}-k{k}"] = dict(_STARFISH, k=float(k), sources=star, alpha=STARFISH_ALPHA[k])
        for tag, (theta, nr) in APERTURES.items():
            for n in (4, 8):
                star = ring(n, ring_radius("starfish"))
                p[f"limited-{tag}-N{n}-k{k}"] = dict(
                    _STARFISH, k=float(k), sources=star, alpha=1e-6, aperture=theta, n_receivers=nr, epsilon=0.05
                )
        for init in ("S4", "S5", "dsm"):
            p[f"circle-init-{init}-k{k}"] = dict(
                _CIRCLE, k=float(k), sources="S3", alpha=1e-9, init_sources=None if init == "dsm" else init
            )
    for m in (2, 4, 6, 8, 12, 20):
        p[f"kite1-M{m}"] = dict(_KITE, shape="kite1", k=5.0, sources=ring(12, ring_radius("kite1")), alpha=1e-6, M=m)
    for (shape, k), alpha in KITE_ALPHA.items():
        for n in (2, 4, 6, 8, 10):
            src = ring(n, ring_radius(shape))
            p[f"{shape}-N{n}-k{k}"] = dict(_KITE, shape=shape, k=float(k), sources=src, alpha=alpha)
    return p


PRESETS = _build_presets()


def _points(value, what):
    if value is None:
        return None
    if isinstance(value, str):
        if value.strip().upper() in SOURCE_PRESETS:
            return np.array(SOURCE_PRESETS[value.strip().upper()], dtype=float)
        try:
            rows = [[float(c) for c in item.split(",")] for item in value.split(";") if item.strip()]
            arr = np.array(rows, dtype=float)
        except ValueError:
            raise ConfigError(f"cannot parse {what} {value!r}") from None
    else:
        arr = np.asarray(value, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ConfigError(f"{what} must be a list of 2D points")
    return arr


_PI_RE = re.compile(r"^\s*([0-9.eE+-]*)\s*pi\s*(?:/\s*([0-9.eE+-]+))?\s*$")


def _angle(value) -> float:
    if isinstance(value, str):
        m = _PI_RE.match(value)
        if m:
            num = float(m.group(1)) if m.group(1) not in ("", "+") else 1.0
            den = float(m.group(2)) if m.group(2) else 1.0
            return num * np.pi / den
    return float(value)


_FLOATS = {"k", "receiver_R", "epsilon", "lambda_radius", "alpha", "lm_ftol", "lm_xtol"}
_INTS = {"n_receivers", "seed", "omega1_n", "omega2_n", "M", "max_iters", "n_quad", "n_knots"}


def _bounds_value(value):
    if isinstance(value, str):
        return [float(v) for v in value.split(",")]
    return value


def config_from_mapping(mapping: dict, base: Optional[dict] = None) -> ExperimentConfig:
    """Build a config from raw key/value pairs (strings or JSON values)."""
    raw = dict(mapping)
    name = raw.get("name")
    merged = {}
    if "preset" in raw:
        preset = raw.pop("preset")
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}")
        merged.update(PRESETS[preset])
        name = name or preset
    if base:
        merged.update(base)
    merged.update(raw)
    merged["name"] = name or merged.get("name", "custom")
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    kwargs = {}
    try:
        for key, value in merged.items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            if key in ("sources", "init_sources"):
                if isinstance(value, str) and value.strip().lower() in ("dsm", "none", ""):
                    value = None
                kwargs[key] = _points(value, key)
            elif key == "aperture":
                kwargs[key] = _angle(value)
            elif key in ("omega1", "omega2"):
                kwargs[key] = _bounds(_bounds_value(value))
            elif key in _FLOATS:
                kwargs[key] = None if value in (None, "none") else float(value)
            elif key in _INTS:
                kwargs[key] = int(value)
            else:
                kwargs[key] = str(value)
        return ExperimentConfig(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def parse_flat(text: str) -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        out[key.strip()] = value.strip()
    return out


def load_config(path=None, preset=None, overrides=None) -> ExperimentConfig:
    """Config from a flat or JSON file, a preset name, or both (file wins)."""
    mapping = {}
    if preset is not None:
        mapping["preset"] = preset
    if path is not None:
        text = Path(path).read_text()
        if text.lstrip().startswith("{"):
            try:
                mapping.update(json.loads(text))
            except json.JSONDecodeError as exc:
                raise ConfigError(f"invalid JSON config: {exc}") from None
        else:
            mapping.update(parse_flat(text))
    if not mapping:
        raise ConfigError("either a config file or a preset is required")
    mapping.update(overrides or {})
    return config_from_mapping(mapping)


def preset_config(name: str, **overrides) -> ExperimentConfig:
    return config_from_mapping({"preset": name, **overrides})
