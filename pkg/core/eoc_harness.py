# core/eoc_harness.py

import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Tuple

import numpy as np
import pandas as pd

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from core.fem import P0Field, l2_norm, prolong
from core.mesh import refinement_ladder
from core.ocp_solver import ProblemSpec, SolveOptions, solve, write_report
from core.utils.errors import ConfigError, LqSparseError, MeshError
from utils.logger import log_error, log_metrics

DEFAULT_Q_SWEEP = (0.5, 0.41, 0.38, 0.31)
COLUMNS = ["q", "level", "n", "h", "error_l2", "eoc", "outer_iters", "kkt_residual",
           "support_fraction", "status"]


@dataclass(frozen=True)
class LadderConfig:
    base_n: int = 32
    levels: int = 4
    ref_extra: int = 2
    spec: ProblemSpec = field(default_factory=ProblemSpec)
    opts: SolveOptions = field(default_factory=SolveOptions)
    q_values: Tuple[float, ...] = DEFAULT_Q_SWEEP
    jobs: int = 1

    def __post_init__(self):
        if int(self.base_n) < 1:
            raise ConfigError(f"base_n must be >= 1, got {self.base_n}")
        if int(self.levels) < 3:
            raise ConfigError(f"a ladder needs L >= 3 levels, got {self.levels}")
        if int(self.ref_extra) < 1:
            raise ConfigError(f"reference needs r >= 1 extra refinements, got {self.ref_extra}")
        if int(self.jobs) < 1:
            raise ConfigError(f"jobs must be >= 1, got {self.jobs}")
        if not self.q_values:
            raise ConfigError("q sweep is empty")
        object.__setattr__(self, "q_values", tuple(float(q) for q in self.q_values))
        for q in self.q_values:
            self.spec.params.replace(q=q)


def eoc(e1, e2, h1, h2):
    """Experimental order of convergence; None when undefined"""
    values = np.array([e1, e2, h1, h2], dtype=float)
    if not np.all(np.isfinite(values)) or np.any(values <= 0) or h1 == h2:
        return None
    return float((np.log(e1) - np.log(e2)) / (np.log(h1) - np.log(h2)))


def prolong_p0(u_coarse, fine_mesh):
    """Coarse P0 field as a constant on every descendant element"""
    if not isinstance(u_coarse, P0Field):
        raise TypeError("prolong_p0 expects a P0Field")
    return prolong(u_coarse, fine_mesh)


def l2_error_p0(u_coarse, u_fine):
    """||u_coarse - u_fine||_{L2} evaluated exactly on the fine mesh"""
    return l2_norm(prolong_p0(u_coarse, u_fine.mesh) - u_fine)


class P0Transfer:
    """Error evaluation against a fixed fine-mesh field for controls on an ancestor mesh"""

    def __init__(self, u_fine, m_coarse):
        if not u_fine.mesh.descends_from(m_coarse):
            raise MeshError("fine field is not on a refinement of the coarse mesh")
        self.u_fine = u_fine
        self.m_coarse = m_coarse
        self.ancestors = u_fine.mesh.ancestor_map(m_coarse)

    def prolong(self, u_coarse):
        if u_coarse.mesh is not self.m_coarse:
            raise MeshError("coarse field does not live on the transfer's coarse mesh")
        return P0Field(self.u_fine.mesh, u_coarse.values[self.ancestors])

    def error(self, u_coarse):
        return l2_norm(self.prolong(u_coarse) - self.u_fine)


def transfer_p0(u_fine, m_coarse):
    return P0Transfer(u_fine, m_coarse)


def _fmt_q(q):
    return f"{q:g}"


@dataclass
class EocTable:
    """Errors against the reference and pairwise EOC per (q, level)"""
    rows: List[Dict] = field(default_factory=list)
    metadata: Dict = field(default_factory=dict)

    def to_frame(self):
        frame = pd.DataFrame(self.rows, columns=COLUMNS)
        return frame.sort_values(["q", "level"], ascending=[False, True], kind="stable").reset_index(drop=True)

    def to_csv(self, path):
        self.to_frame().to_csv(path, index=False, float_format="%.17g", na_rep="")
        return path

    @classmethod
    def from_csv(cls, path):
        frame = pd.read_csv(path, keep_default_na=True, float_precision="round_trip")
        rows = []
        for rec in frame.to_dict("records"):
            rec["eoc"] = None if pd.isna(rec["eoc"]) else float(rec["eoc"])
            rows.append(rec)
        return cls(rows=rows)

    def q_values(self):
        return sorted({row["q"] for row in self.rows}, reverse=True)

    def for_q(self, q):
        return sorted((row for row in self.rows if row["q"] == q), key=lambda r: r["level"])

    def recompute_eoc(self, q):
        rows = self.for_q(q)
        return [None] + [eoc(a["error_l2"], b["error_l2"], a["h"], b["h"]) for a, b in zip(rows, rows[1:])]

    def to_pretty(self):
        """Error (EOC) per level at 4 decimals, one line per q"""
        lines = []
        for q in self.q_values():
            rows = self.for_q(q)
            if not lines:
                lines.append("q      | " + " | ".join(f"h={row['h']:.4f}" for row in rows))
            cells = []
            for row in rows:
                err = row["error_l2"]
                cell = "failed" if row["status"] != "ok" or not np.isfinite(err) else f"{err:.4f}"
                if row["eoc"] is not None:
                    cell += f" ({row['eoc']:.4f})"
                cells.append(cell)
            lines.append(f"{_fmt_q(q):<6} | " + " | ".join(cells))
        return "\n".join(lines)

    def write_gnuplot(self, directory):
        """One file per q with columns -log(h), -log(error)"""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = []
        for q in self.q_values():
            path = directory / f"eoc_q{_fmt_q(q)}.dat"
            with open(path, "w") as f:
                f.write(f"# q = {_fmt_q(q)}: -log(h) -log(error_l2)\n")
                for row in self.for_q(q):
                    if row["status"] == "ok" and row["error_l2"] > 0:
                        f.write(f"{-np.log(row['h']):.17g} {-np.log(row['error_l2']):.17g}\n")
            paths.append(path)
        return paths


def _solve_task(spec, mesh, opts):
    try:
        return solve(spec, mesh, opts), None
    except LqSparseError as e:
        log_error(e, {"triangles": mesh.n_triangles, "q": spec.params.q})
        return None, str(e)


def _warm(mesh):
    # fill cached geometry before meshes are shared between worker threads
    for name in ("areas", "gradients", "interior", "dof_index", "barycenters", "corners", "h"):
        getattr(mesh, name)


def run_ladder(cfg, output_dir=None):
    """Solve every (q, level) and the reference per q; errors are measured on the reference mesh"""
    meshes = refinement_ladder(cfg.base_n, cfg.levels + cfg.ref_extra)
    ladder, reference = meshes[:cfg.levels], meshes[-1]
    for mesh in meshes:
        _warm(mesh)

    tasks = {}
    with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
        for q in cfg.q_values:
            spec = replace(cfg.spec, params=cfg.spec.params.replace(q=q))
            tasks[(q, "ref")] = pool.submit(_solve_task, spec, reference, cfg.opts)
            for k, mesh in enumerate(ladder):
                tasks[(q, k)] = pool.submit(_solve_task, spec, mesh, cfg.opts)
        results = {key: future.result() for key, future in tasks.items()}

    table = EocTable(metadata={
        "base_n": cfg.base_n, "levels": cfg.levels, "ref_extra": cfg.ref_extra,
        "reference_h": reference.h,
        "note": f"reference solved {cfg.ref_extra} refinements beyond the finest level, not at a converged scale",
    })
    for q in cfg.q_values:
        ref_report, ref_error = results[(q, "ref")]
        if output_dir is not None and ref_report is not None:
            write_report(ref_report, Path(output_dir) / f"q{_fmt_q(q)}" / "reference", formats=("csv",))
        prev = None
        for k, mesh in enumerate(ladder):
            report, error = results[(q, k)]
            status = "ok"
            err = float("nan")
            if report is None:
                status = "failed"
            elif ref_report is None:
                status = "reference_failed"
            else:
                err = l2_error_p0(report.u, ref_report.u)
                if output_dir is not None:
                    write_report(report, Path(output_dir) / f"q{_fmt_q(q)}" / f"level{k}", formats=("csv",))
            row = {
                "q": q, "level": k, "n": cfg.base_n * 2 ** k, "h": mesh.h, "error_l2": err,
                "eoc": eoc(prev["error_l2"], err, prev["h"], mesh.h) if prev else None,
                "outer_iters": report.outer_iterations if report else -1,
                "kkt_residual": report.kkt_residual if report else float("nan"),
                "support_fraction": report.support_fraction if report else float("nan"),
                "status": status,
            }
            table.rows.append(row)
            log_metrics(row, "eoc_row")
            prev = row
    return table


def trend_summary(table):
    """Per q: strict error decrease, mean EOC over the last three pairs, reference sanity"""
    summary = {}
    for q in table.q_values():
        rows = table.for_q(q)
        errors = np.array([row["error_l2"] for row in rows], dtype=float)
        eocs = [row["eoc"] for row in rows[1:]]
        tail = [e for e in eocs[-3:] if e is not None]
        ok = bool(np.all(np.isfinite(errors)))
        summary[q] = {
            "decreasing": ok and bool(np.all(np.diff(errors) < 0)),
            "mean_eoc_last3": float(np.mean(tail)) if tail and len(tail) == len(eocs[-3:]) else None,
            "reference_sane": ok and bool(errors[-1] <= errors[0]),
        }
    log_metrics({_fmt_q(q): s for q, s in summary.items()}, "eoc_trend")
    return summary
