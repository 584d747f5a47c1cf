"""Benchmark on the uniform grid test problem and report generation."""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .block_tree import AdmissibilityParams, build_block_tree
from .cluster_tree import build_cluster_tree, read_points
from .directions import build_direction_table
from .engine import matvec, setup
from .geometry import AxisBox
from .oracle import sample_rows, sampled_error

REPORT_FIELDS = (
    "k", "N", "kappa", "t_tot", "t_s", "t_nf", "t_ff", "nf_percent", "N_SC", "N_C", "N_LE",
    "M_D", "bytes_stored", "rel_error", "max_rel_error", "a2_max",
)
TIMING_FIELDS = ("t_tot", "t_s", "t_nf", "t_ff")
GRID_ROOT = AxisBox((-1.0, -1.0, -1.0), (1.0, 1.0, 1.0))


class ConfigError(ValueError):
    pass


@dataclass
class BenchConfig:
    """Parameters of one benchmark run.

    ``kappa`` and ``l_hf`` default to ``0.1 * 2**k`` and ``k - 4``; with a
    point file they have to be given explicitly.  ``aca_eps = None``
    disables compression and ``sample_rows = 0`` skips the error estimate.
    """

    k: Optional[int] = None
    kappa: Optional[float] = None
    n_max: int = 512
    eta2: float = 5.0
    l_hf: Optional[int] = None
    m: int = 4
    aca_eps: Optional[float] = 1e-6
    zero_diagonal: bool = True
    seed: int = 0
    sample_rows: int = 1024
    points_file: Optional[str] = None
    output: Optional[str] = None
    format: str = "json"

    def resolved(self) -> "BenchConfig":
        """Copy with defaults filled in; raises :class:`ConfigError`."""
        cfg = BenchConfig(**{k: v for k, v in asdict(self).items()})
        if cfg.points_file is None:
            if cfg.k is None:
                raise ConfigError("either k or a point file is required")
            if cfg.k < 3:
                raise ConfigError("grid exponent k must be at least 3")
            if cfg.kappa is None:
                cfg.kappa = 0.1 * 2**cfg.k
            if cfg.l_hf is None:
                cfg.l_hf = cfg.k - 4
        elif cfg.kappa is None or cfg.l_hf is None:
            raise ConfigError("kappa and l_hf are required together with a point file")
        if not cfg.kappa > 0:
            raise ConfigError("kappa must be positive")
        if cfg.l_hf < -1:
            raise ConfigError("l_hf must be >= -1")
        if cfg.n_max < 1:
            raise ConfigError("n_max must be positive")
        if not cfg.eta2 > 0:
            raise ConfigError("eta2 must be positive")
        if cfg.m < 0:
            raise ConfigError("degree must be nonnegative")
        if cfg.aca_eps is not None and not 0 < cfg.aca_eps < 1:
            raise ConfigError("aca_eps must lie in (0, 1)")
        if cfg.sample_rows < 0:
            raise ConfigError("sample_rows must be nonnegative")
        if cfg.format not in ("json", "csv"):
            raise ConfigError(f"unknown report format {cfg.format!r}")
        return cfg


def generate_grid_points(k: int) -> np.ndarray:
    """Tensor grid of ``8**k`` points ``(2n - 1) 2**-k - 1``, ``n = 1..2**k``."""
    if k < 3:
        raise ValueError("grid exponent k must be at least 3")
    x = (2.0 * np.arange(1, 2**k + 1) - 1.0) / 2**k - 1.0
    gx, gy, gz = np.meshgrid(x, x, x, indexing="ij")
    return np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=-1)


def random_vector(n: int, seed: int) -> np.ndarray:
    """Complex vector with real and imaginary parts uniform in ``[-1, 1]``."""
    rng = np.random.default_rng(seed)
    return rng.uniform(-1.0, 1.0, n) + 1j * rng.uniform(-1.0, 1.0, n)


@dataclass
class Problem:
    points: np.ndarray
    tree: object
    table: object
    block_tree: object
    operator: object


def build_problem(cfg: BenchConfig, points: Optional[np.ndarray] = None) -> Problem:
    """Trees, directions, block tree and operator for a resolved config.

    The same point set serves as targets and sources.
    """
    if points is None:
        points = read_points(cfg.points_file) if cfg.points_file else generate_grid_points(cfg.k)
    root = GRID_ROOT if cfg.points_file is None else None
    tree = build_cluster_tree(points, root, n_max=cfg.n_max)
    table = build_direction_table(cfg.l_hf, tree.depth)
    bt = build_block_tree(tree, tree, AdmissibilityParams(cfg.eta2, cfg.kappa), table)
    op = setup(tree, tree, bt, table, cfg.kappa, cfg.m, aca_eps=cfg.aca_eps,
               zero_diagonal=cfg.zero_diagonal)
    return Problem(points, tree, table, bt, op)


def run_benchmark(cfg: BenchConfig) -> dict:
    """Run one benchmark and return the report as a flat dict."""
    cfg = cfg.resolved()
    t0 = time.perf_counter()
    prob = build_problem(cfg)
    t_s = time.perf_counter() - t0
    n = len(prob.points)
    v = random_vector(n, cfg.seed)
    g = matvec(prob.operator, v)
    st = prob.operator.stats

    rel_error = max_rel = None
    if cfg.sample_rows > 0:
        rows = sample_rows(n, cfg.sample_rows, cfg.seed)
        rep = sampled_error(g, prob.points, prob.points, cfg.kappa, v, rows, cfg.zero_diagonal)
        rel_error, max_rel = rep.rel_l2, rep.max_rel

    report = {
        "k": cfg.k,
        "N": n,
        "kappa": cfg.kappa,
        "t_tot": round(st.t_tot, 3),
        "t_s": round(t_s, 3),
        "t_nf": round(st.t_nf, 3),
        "t_ff": round(st.t_ff, 3),
        "nf_percent": st.nf_percent,
        "N_SC": st.n_sc,
        "N_C": st.n_c,
        "N_LE": st.n_le,
        "M_D": st.m_d,
        "bytes_stored": st.bytes_stored,
        "rel_error": rel_error,
        "max_rel_error": max_rel,
        "a2_max": st.a2_max,
    }
    report["config"] = {k: v for k, v in asdict(cfg).items() if k not in ("output", "format")}
    return report


def format_report(report: dict, fmt: str = "json") -> str:
    if fmt == "json":
        return json.dumps(report, indent=2) + "\n"
    buf = io.StringIO()
    flat = {k: report[k] for k in REPORT_FIELDS}
    flat.update({f"config.{k}": v for k, v in report["config"].items()})
    writer = csv.DictWriter(buf, fieldnames=list(flat), lineterminator="\n")
    writer.writeheader()
    writer.writerow(flat)
    return buf.getvalue()


def write_report(report: dict, output: Optional[str], fmt: str) -> str:
    text = format_report(report, fmt)
    if output:
        Path(output).write_text(text)
    return text
