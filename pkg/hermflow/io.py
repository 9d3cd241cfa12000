"""Snapshot, diagnostics and report files."""

from __future__ import annotations

import io as _io
import json
import logging
import os
import shutil
import tempfile
from contextlib import contextmanager
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel

from hermflow.errors import ConfigError
from hermflow.lattice import MetricField, TorusLattice

logger = logging.getLogger(__name__)

SNAPSHOT_MAGIC = "# hermflow-snapshot v1"
FLOAT_FORMAT = "%.17g"


def standard_result(status: str, message: str, file: str | None = None) -> dict:
    return {"status": status, "message": message, "file": file}


def write_snapshot(path: str | Path, field: MetricField, omega_c: float = 1.0) -> Path:
    """Text header plus one CSV row per site: site indices then re/im of every g_{k̄j}."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lat = field.lattice
    m = lat.m
    index = np.indices(lat.shape).reshape(lat.ndim, -1).T
    flat = field.g.reshape(-1, m, m)
    data = {f"i{r}": index[:, r] for r in lat.active}
    for k in range(m):
        for j in range(m):
            data[f"re_{k}_{j}"] = flat[:, k, j].real
            data[f"im_{k}_{j}"] = flat[:, k, j].imag
    header = [
        SNAPSHOT_MAGIC,
        f"# m={m}",
        f"# n={lat.n}",
        f"# reduction={lat.reduction}",
        f"# time={field.time!r}",
        f"# tag={field.tag}",
        f"# omega_c={omega_c!r}",
    ]
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(header) + "\n")
        pd.DataFrame(data).to_csv(f, index=False, float_format=FLOAT_FORMAT)
    logger.info("snapshot written to %s", path)
    return path


def read_snapshot(path: str | Path) -> tuple[MetricField, float]:
    """Inverse of ``write_snapshot``; returns the field and omega_c."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"snapshot not found: {path}")
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].strip() != SNAPSHOT_MAGIC:
        raise ConfigError(f"{path} is not a hermflow snapshot")
    meta = {}
    body = 1
    while body < len(lines) and lines[body].startswith("#"):
        key, _, value = lines[body][1:].strip().partition("=")
        meta[key] = value
        body += 1
    try:
        m, n = int(meta["m"]), int(meta["n"])
        lat = TorusLattice.from_reduction(m, n, meta["reduction"])
        table = pd.read_csv(_io.StringIO("\n".join(lines[body:])))
        g = np.zeros(lat.shape + (m, m), dtype=complex)
        zero = np.zeros(len(table), dtype=int)
        sites = tuple(table[f"i{r}"].to_numpy() if r in lat.active else zero for r in range(lat.ndim))
        for k in range(m):
            for j in range(m):
                g[sites + (k, j)] = table[f"re_{k}_{j}"].to_numpy() + 1j * table[f"im_{k}_{j}"].to_numpy()
        field = MetricField(lat, g, float(meta["time"]), meta.get("tag", ""))
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"malformed snapshot {path}: {exc}") from exc
    return field, float(meta.get("omega_c", 1.0))


def write_diagnostics(path: str | Path, rows: Sequence[BaseModel], extra: dict[str, Sequence[float]] | None = None) -> Path:
    """Diagnostics CSV, one row per stride, full double precision."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df = pd.DataFrame([r.model_dump() for r in rows])
    for name, values in (extra or {}).items():
        column = np.full(len(df), np.nan)
        column[: len(values)] = values
        df[name] = column
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    return path


def read_diagnostics(path: str | Path) -> pd.DataFrame:
    return pd.read_csv(path)


def write_reports(path: str | Path, reports: Iterable[BaseModel]) -> Path:
    """One JSON object per line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for report in reports:
            f.write(report.model_dump_json() + "\n")
    return path


@contextmanager
def staged_output(out: str | Path) -> Iterator[Path]:
    """Yield a fresh sibling directory to write into; on success its files land in ``out``.

    A new ``out`` appears in a single rename; into an existing one every file is moved
    with its own rename.  On error the staging directory is removed and ``out`` is untouched.
    """
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    stage = Path(tempfile.mkdtemp(prefix=f".{out.name}-", dir=out.parent))
    try:
        yield stage
    except BaseException:
        shutil.rmtree(stage, ignore_errors=True)
        raise
    if out.exists():
        for item in sorted(stage.iterdir()):
            os.replace(item, out / item.name)
        stage.rmdir()
    else:
        os.replace(stage, out)
    logger.info("outputs written to %s", out)


def write_manifest(path: str | Path, manifest: BaseModel) -> Path:
    path = Path(path)
    path.write_text(json.dumps(manifest.model_dump(), indent=2) + "\n", encoding="utf-8")
    return path
