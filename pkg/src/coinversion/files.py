"""On-disk formats.

measurements.csv
    Line 1: ``k=<k>,R=<R>,aperture=<aperture>,N_R=<N_R>,N=<N>``.
    Then N_R lines of 2N reals: Re u(x_r; z_1), Im u(x_r; z_1), Re u(x_r; z_2), ...
image CSV
    Line 1: ``xmin=..,xmax=..,ymin=..,ymax=..,nx=..,ny=..``, then ny lines of nx
    values; line i+2 holds grid row i (y increasing, x fastest).
image PGM
    Binary P5, 8 bit, values mapped linearly from [min, max] to [0, 255];
    the first raster row is y = ymax.

All reals are written with 17 significant digits, which round-trips IEEE
doubles exactly. Files are written to a temporary sibling and renamed.
"""

import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .forward import MeasurementSet
from .geometry import ReceiverArray, SamplingGrid


def fmt(x) -> str:
    return format(float(x), ".17g")


def atomic_write(path, payload) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(payload, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    return path


def _parse_header(line):
    out = {}
    for item in line.strip().split(","):
        key, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"malformed header field {item!r}")
        out[key.strip()] = value.strip()
    return out


def measurements_to_csv(ms: MeasurementSet) -> str:
    rec = ms.receivers
    lines = [f"k={fmt(ms.k)},R={fmt(rec.R)},aperture={fmt(rec.aperture)},N_R={rec.count},N={ms.n_sources}"]
    pairs = np.stack([ms.data.real, ms.data.imag], axis=-1).reshape(rec.count, -1)
    lines.extend(",".join(fmt(v) for v in row) for row in pairs)
    return "\n".join(lines) + "\n"


def measurements_from_csv(text: str) -> MeasurementSet:
    lines = text.strip("\n").split("\n")
    head = _parse_header(lines[0])
    try:
        k = float(head["k"])
        rec = ReceiverArray(float(head["R"]), float(head["aperture"]), int(head["N_R"]))
        n = int(head["N"])
    except KeyError as exc:
        raise ValueError(f"measurement header lacks {exc}") from None
    rows = lines[1:]
    if len(rows) != rec.count:
        raise ValueError(f"expected {rec.count} data rows, found {len(rows)}")
    vals = np.array([[float(v) for v in row.split(",")] if n else [] for row in rows], dtype=float)
    vals = vals.reshape(rec.count, 2 * n)
    data = vals[:, 0::2] + 1j * vals[:, 1::2]
    return MeasurementSet(k, rec, data)


def write_measurements(path, ms: MeasurementSet) -> Path:
    return atomic_write(path, measurements_to_csv(ms))


def read_measurements(path) -> MeasurementSet:
    return measurements_from_csv(Path(path).read_text())


def image_to_csv(image) -> str:
    g = image.grid
    lines = [f"xmin={fmt(g.xmin)},xmax={fmt(g.xmax)},ymin={fmt(g.ymin)},ymax={fmt(g.ymax)},nx={g.nx},ny={g.ny}"]
    rows = np.asarray(image.values).reshape(g.ny, g.nx)
    lines.extend(",".join(fmt(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def image_from_csv(text: str):
    from .sampling import ImageField

    lines = text.strip("\n").split("\n")
    h = _parse_header(lines[0])
    grid = SamplingGrid(
        float(h["xmin"]), float(h["xmax"]), float(h["ymin"]), float(h["ymax"]), int(h["nx"]), int(h["ny"])
    )
    values = np.array([[float(v) for v in row.split(",")] for row in lines[1:]]).ravel()
    return ImageField(grid, values)


def image_to_pgm(image) -> bytes:
    g = image.grid
    v = np.asarray(image.values, dtype=float).reshape(g.ny, g.nx)[::-1]
    lo, hi = v.min(), v.max()
    scaled = np.zeros_like(v) if hi == lo else (v - lo) / (hi - lo) * 255.0
    pixels = np.rint(scaled).astype(np.uint8)
    return f"P5\n{g.nx} {g.ny}\n255\n".encode("ascii") + pixels.tobytes()


def read_pgm(data: bytes) -> np.ndarray:
    magic, dims, maxval, rest = data.split(b"\n", 3)
    if magic != b"P5" or maxval != b"255":
        raise ValueError("not an 8-bit binary PGM")
    nx, ny = (int(v) for v in dims.split())
    return np.frombuffer(rest, dtype=np.uint8).reshape(ny, nx)


def write_image(stem, image):
    stem = Path(stem)
    csv_path = atomic_write(stem.with_suffix(".csv"), image_to_csv(image))
    pgm_path = atomic_write(stem.with_suffix(".pgm"), image_to_pgm(image))
    return csv_path, pgm_path


def dumps(obj, indent=2) -> str:
    """JSON with every float written to 17 significant digits."""

    def enc(o, level):
        pad = " " * (indent * (level + 1))
        end = " " * (indent * level)
        if isinstance(o, bool) or o is None:
            return json.dumps(o)
        if isinstance(o, (int, np.integer)):
            return str(int(o))
        if isinstance(o, (float, np.floating)):
            if not math.isfinite(o):
                raise ValueError("non-finite float in JSON output")
            return fmt(o)
        if isinstance(o, str):
            return json.dumps(o)
        if isinstance(o, dict):
            if not o:
                return "{}"
            items = [f"{pad}{json.dumps(str(k))}: {enc(v, level + 1)}" for k, v in o.items()]
            return "{\n" + ",\n".join(items) + "\n" + end + "}"
        if isinstance(o, (list, tuple, np.ndarray)):
            seq = list(o)
            if not seq:
                return "[]"
            if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in seq):
                return "[" + ", ".join(enc(v, level + 1) for v in seq) + "]"
            return "[\n" + ",\n".join(pad + enc(v, level + 1) for v in seq) + "\n" + end + "]"
        raise TypeError(f"cannot serialise {type(o).__name__}")

    return enc(obj, 0) + "\n"


def write_json(path, obj) -> Path:
    return atomic_write(path, dumps(obj))
