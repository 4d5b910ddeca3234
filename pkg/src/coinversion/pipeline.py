"""Staged experiment runner and table sweeps.

Stages run in order forward -> sample -> image -> invert. Each writes its
artifacts into the output directory; a failing stage removes everything the
run has written and raises :class:`StageError` naming the stage.
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import files
from .config import PRESETS, ExperimentConfig, preset_config
from .forward import NoiseModel, add_noise, synthesize_measurements
from .geometry import make_shape
from .inversion import ParameterVector, admissible_start_radius, reconstruct
from .metrics import ERROR_CSV_HEADER, error_report
from .sampling import SourceEstimate, dsm_indicators, initial_radius, locate_sources, rtm_image

logger = logging.getLogger(__name__)

STAGES = ("forward", "sample", "image", "invert")


class StageError(RuntimeError):
    def __init__(self, stage, cause):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class RunArtifacts:
    out_dir: Path
    measurements: Optional[Path] = None
    indicators: list = field(default_factory=list)
    rtm: Optional[Path] = None
    result: Optional[Path] = None
    errors: Optional[Path] = None
    summary: dict = field(default_factory=dict)

    def paths(self):
        found = [self.measurements, *self.indicators, self.rtm, self.result, self.errors]
        return [p for p in found if p is not None]


def run_experiment(config: ExperimentConfig, out_dir, stage: str = "invert", data_path=None) -> RunArtifacts:
    """Run the pipeline up to and including ``stage``.

    ``data_path`` replaces synthesis and noise with measurements read from a
    CSV file (the forward stage then only copies them into ``out_dir``).
    """
    if stage not in STAGES:
        raise ValueError(f"unknown stage {stage!r}")
    out = Path(out_dir)
    art = RunArtifacts(out)
    written = []
    summary = {"config": config.to_dict(), "stages": []}
    last = STAGES.index(stage)
    current = "forward"

    def keep(*paths):
        written.extend(paths)
        return paths[0] if len(paths) == 1 else paths

    try:
        truth = make_shape(config.shape)
        if data_path is None:
            clean = synthesize_measurements(truth, config.k, config.sources, config.receivers, config.n_quad)
            ms = add_noise(clean, NoiseModel(config.epsilon, config.seed))
        else:
            ms = files.read_measurements(data_path)
            if ms.k != config.k or ms.n_sources != len(config.sources):
                raise ValueError("measurement file does not match the configured k and source count")
        art.measurements = keep(files.write_measurements(out / "measurements.csv", ms))
        summary["stages"].append("forward")

        if last >= 1:
            current = "sample"
            images = dsm_indicators(ms, config.grid1)
            estimate = locate_sources(ms, config.grid1, indicators=images)
            for j, img in enumerate(images):
                art.indicators.extend(keep(*files.write_image(out / f"indicator_{j + 1}", img)))
            summary["dsm_sources"] = estimate.points.tolist()
            summary["dsm_source_errors"] = np.hypot(*(estimate.points - config.sources).T).tolist()
            summary["stages"].append("sample")

        if last >= 2:
            current = "image"
            init = estimate if config.init_sources is None else SourceEstimate(config.init_sources)
            rtm = rtm_image(ms, init, config.grid2)
            r0 = initial_radius(rtm)
            art.rtm = keep(*files.write_image(out / "rtm", rtm))[0]
            summary["initial_sources"] = init.points.tolist()
            summary["rtm_peak"] = rtm.peak.tolist()
            summary["initial_radius"] = r0
            summary["stages"].append("image")

        if last >= 3:
            current = "invert"
            cfg = config.inversion_params
            lam = config.lambda_curve
            start = admissible_start_radius(r0, lam.radius, cfg)
            if start != r0:
                logger.warning("initial radius %.4f clamped to %.4f", r0, start)
            summary["start_radius"] = start
            p0 = ParameterVector.initial(start, lam.radius, cfg.M, init.points)
            res = reconstruct(ms, p0, cfg, lam)
            curve = res.params.curve(lam.radius, cfg.bound_lo, cfg.bound_hi)
            report = error_report(
                curve, truth, res.params.sources, config.sources, config.truth_is_starlike, config.n_knots
            )
            summary["reconstruction"] = {
                "coefficients": res.params.boundary.tolist(),
                "sources": res.params.sources.tolist(),
                "defect_history": res.defect_history.tolist(),
                "iterations": res.iterations,
                "converged": res.converged,
                "reason": res.reason,
            }
            summary["errors"] = report.to_dict()
            csv = ERROR_CSV_HEADER + "\n" + report.csv_row(config.name) + "\n"
            art.errors = keep(files.atomic_write(out / "errors.csv", csv))
            summary["stages"].append("invert")

        art.result = keep(files.write_json(out / "result.json", summary))
    except Exception as exc:
        for p in written:
            Path(p).unlink(missing_ok=True)
        raise StageError(current, exc) from exc
    art.summary = summary
    return art


# -- tables --------------------------------------------------------------------


def _table_layout(name):
    """(row labels, column labels, preset name for each cell) of a table."""
    if name in ("starfish", "circle"):
        rows, cols = ["k=5", "k=8"], ["N=2", "N=4", "N=6", "N=8"]
        cell = lambda r, c: f"{name}-N{c[2:]}-k{r[2:]}"  # noqa: E731
    elif name == "limited":
        rows = [f"theta={t},k={k}" for t in ("pi", "3pi/2") for k in (5, 8)]
        cols = ["N=4", "N=8"]

        def cell(r, c):
            t, k = r.split(",")
            tag = "pi" if t == "theta=pi" else "3pi2"
            return f"limited-{tag}-N{c[2:]}-k{k[2:]}"

    elif name == "kite-M":
        rows, cols = ["kite1,k=5,N=12"], [f"M={m}" for m in (2, 4, 6, 8, 12, 20)]
        cell = lambda r, c: f"kite1-M{c[2:]}"  # noqa: E731
    elif name == "kite":
        rows = [f"{s},k={k}" for s in ("kite1", "kite2") for k in (3, 5)]
        cols = [f"N={n}" for n in (2, 4, 6, 8, 10)]

        def cell(r, c):
            s, k = r.split(",")
            return f"{s}-N{c[2:]}-k{k[2:]}"

    elif name == "initial-guess":
        rows, cols = ["k=5", "k=8"], ["S4", "S5", "DSM"]
        cell = lambda r, c: f"circle-init-{'dsm' if c == 'DSM' else c}-k{r[2:]}"  # noqa: E731
    else:
        raise ValueError(f"unknown table {name!r}; expected one of {', '.join(TABLES)}")
    return rows, cols, {(r, c): cell(r, c) for r in rows for c in cols}


TABLES = ("starfish", "circle", "limited", "kite-M", "kite", "initial-guess")


def _run_cell(args):
    preset, out_dir, overrides = args
    try:
        art = run_experiment(preset_config(preset, **overrides), out_dir)
        return preset, art.summary["errors"]["E_D"], None
    except Exception as exc:  # a failed cell must not stop the table
        logger.warning("cell %s failed: %s", preset, exc)
        return preset, None, str(exc)


def run_table(name: str, out_dir, overrides=None, jobs: int = 1) -> Path:
    """Sweep a table's cells and write ``<name>.csv`` (E_D in percent).

    Failed cells are written as FAILED. Every cell also keeps its own run
    directory under ``out_dir/cells``.
    """
    rows, cols, cells = _table_layout(name)
    for preset in cells.values():
        assert preset in PRESETS, preset
    out = Path(out_dir)
    overrides = dict(overrides or {})
    tasks = [(p, out / "cells" / p, overrides) for p in cells.values()]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            results = list(pool.map(_run_cell, tasks))
    else:
        results = [_run_cell(t) for t in tasks]
    by_preset = {p: (e, err) for p, e, err in results}
    lines = [",".join([name] + cols)]
    for r in rows:
        vals = []
        for c in cols:
            e, err = by_preset[cells[(r, c)]]
            vals.append("FAILED" if err is not None else f"{100 * e:.2f}")
        lines.append(",".join([f'"{r}"' if "," in r else r] + vals))
    return files.atomic_write(out / f"{name}.csv", "\n".join(lines) + "\n")
