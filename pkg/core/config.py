# core/config.py

import copy
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import yaml
from dotenv import load_dotenv

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from core.eoc_harness import LadderConfig
from core.fem import EllipticCoeffs
from core.ocp_solver import ProblemSpec, SolveOptions
from core.presets import resolve_preset
from core.scalar_reg import RegParams
from core.utils.errors import ConfigError
from utils.logger import to_plain

load_dotenv()

DEFAULT_CONFIG = str(Path(__file__).resolve().parent.parent / "config" / "paper_example.yaml")

DEFAULTS = {
    "problem": {
        "alpha": 0.24,
        "beta": 0.0002,
        "q": 0.5,
        "gamma": 16000.0,
        "u_a": -0.8,
        "u_b": 0.55,
        "y_d": "paper-example",
        "f": "zero",
        "c0": 0.0,
    },
    "mesh": {"n": 32, "levels": 4, "ref_extra": 2},
    "solver": {
        "tol_outer": 1e-9,
        "tol_inner": 1e-10,
        "max_outer": 200,
        "max_inner": 50,
        "damping": 1.0,
        "inner_method": "ssn",
        "polish": True,
        "switch_tol": None,
        "solve_method": "lu",
        "init": None,
    },
    "output": {"directory": None, "formats": ["csv", "vtk"]},
    "harness": {
        "q_values": [0.5, 0.41, 0.38, 0.31],
        "jobs": 1,
        "interp_function": "disk",
        "interp_norm": "L1",
    },
}

FORMATS = {"csv", "vtk", "gnuplot"}


def output_root():
    return Path(os.getenv("LQSPARSE_OUTPUT_ROOT", "runs"))


def _merge(base, update, path=""):
    for key, value in (update or {}).items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config section {where!r} must be a mapping")
            _merge(base[key], value, where + ".")
        else:
            base[key] = value
    return base


def load_config(path=None):
    """Defaults overlaid with the YAML file at `path`"""
    cfg = copy.deepcopy(DEFAULTS)
    if path is None:
        return cfg
    if not os.path.exists(path):
        raise ConfigError(f"Missing config file at {path}")
    try:
        with open(path, "r") as f:
            data = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise ConfigError(f"cannot parse {path}: {e}")
    if data is None:
        return cfg
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must contain a mapping of sections")
    return _merge(cfg, data)


def parse_override_args(args):
    """['--problem.beta', '0', '--q', '0.4'] -> [('problem.beta', '0'), ('q', '0.4')]"""
    pairs = []
    it = iter(args)
    for token in it:
        if not token.startswith("--"):
            raise ConfigError(f"unexpected argument {token!r}; overrides look like --section.key value")
        key = token[2:]
        if "=" in key:
            key, value = key.split("=", 1)
        else:
            try:
                value = next(it)
            except StopIteration:
                raise ConfigError(f"override {token} is missing a value")
        pairs.append((key, value))
    return pairs


def _resolve_key(cfg, key):
    if "." in key:
        section, name = key.split(".", 1)
        if section not in cfg or name not in cfg[section]:
            raise ConfigError(f"unknown config key {key!r}")
        return section, name
    owners = [s for s, values in cfg.items() if key in values]
    if not owners:
        raise ConfigError(f"unknown config key {key!r}")
    if len(owners) > 1:
        raise ConfigError(f"key {key!r} is ambiguous; use one of {[f'{s}.{key}' for s in owners]}")
    return owners[0], key


def apply_overrides(cfg, overrides):
    cfg = copy.deepcopy(cfg)
    for key, raw in overrides:
        section, name = _resolve_key(cfg, key.replace("-", "_"))
        try:
            value = yaml.safe_load(raw) if isinstance(raw, str) else raw
        except yaml.YAMLError as e:
            raise ConfigError(f"cannot parse value {raw!r} for {key}: {e}")
        cfg[section][name] = value
    return cfg


def _as_int(value, name):
    try:
        as_float = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    if as_float != int(as_float):
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    return int(as_float)


def _as_float(value, name):
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a number, got {value!r}")


@dataclass
class RunConfig:
    """Resolved and validated run configuration"""
    raw: Dict[str, Any]
    params: RegParams
    spec: ProblemSpec
    opts: SolveOptions
    n: int
    levels: int
    ref_extra: int
    q_values: Tuple[float, ...]
    jobs: int
    output_dir: Optional[Path]
    formats: List[str] = field(default_factory=lambda: ["csv", "vtk"])
    init_path: Optional[str] = None
    interp_function: str = "disk"
    interp_norm: str = "L1"
    source: Optional[str] = None

    @classmethod
    def from_dict(cls, cfg):
        prob, mesh, solver = cfg["problem"], cfg["mesh"], cfg["solver"]
        out, harness = cfg["output"], cfg["harness"]

        params = RegParams(**{k: _as_float(prob[k], k) for k in ("q", "gamma", "alpha", "beta", "u_a", "u_b")})
        c0 = _as_float(prob["c0"], "c0")
        if c0 < 0:
            raise ConfigError(f"c0 must be nonnegative, got {c0}")
        spec = ProblemSpec(
            params=params,
            yd=resolve_preset(prob["y_d"]),
            f=resolve_preset(prob["f"]),
            coeffs=EllipticCoeffs(c0=c0) if c0 else None,
            yd_label=str(prob["y_d"]),
            f_label=str(prob["f"]),
        )
        opts = SolveOptions(
            tol_outer=_as_float(solver["tol_outer"], "tol_outer"),
            tol_inner=_as_float(solver["tol_inner"], "tol_inner"),
            max_outer=_as_int(solver["max_outer"], "max_outer"),
            max_inner=_as_int(solver["max_inner"], "max_inner"),
            damping=_as_float(solver["damping"], "damping"),
            inner_method=str(solver["inner_method"]),
            polish=bool(solver["polish"]),
            switch_tol=None if solver["switch_tol"] is None else _as_float(solver["switch_tol"], "switch_tol"),
            solve_method=str(solver["solve_method"]),
        )

        formats = out["formats"]
        if isinstance(formats, str):
            formats = [formats]
        unknown = set(formats) - FORMATS
        if unknown:
            raise ConfigError(f"unknown output formats {sorted(unknown)}; choose from {sorted(FORMATS)}")
        q_values = harness["q_values"]
        if not isinstance(q_values, (list, tuple)):
            q_values = [q_values]
        norm = str(harness["interp_norm"])
        if norm not in ("L1", "L2"):
            raise ConfigError(f"interp_norm must be L1 or L2, got {norm!r}")

        rc = cls(
            raw=copy.deepcopy(cfg),
            params=params,
            spec=spec,
            opts=opts,
            n=_as_int(mesh["n"], "n"),
            levels=_as_int(mesh["levels"], "levels"),
            ref_extra=_as_int(mesh["ref_extra"], "ref_extra"),
            q_values=tuple(_as_float(q, "q_values") for q in q_values),
            jobs=_as_int(harness["jobs"], "jobs"),
            output_dir=Path(out["directory"]) if out["directory"] else None,
            formats=list(formats),
            init_path=solver["init"],
            interp_function=str(harness["interp_function"]),
            interp_norm=norm,
        )
        if rc.n < 1:
            raise ConfigError(f"mesh n must be >= 1, got {rc.n}")
        return rc

    def ladder(self):
        return LadderConfig(base_n=self.n, levels=self.levels, ref_extra=self.ref_extra, spec=self.spec,
                            opts=self.opts, q_values=self.q_values, jobs=self.jobs)

    def run_dir(self, command):
        return self.output_dir or output_root() / command


def load_run_config(path=None, overrides=()):
    """Parse, override, then validate"""
    cfg = apply_overrides(load_config(path), overrides)
    rc = RunConfig.from_dict(cfg)
    rc.source = None if path is None else str(path)
    return rc


def library_versions():
    import meshio
    import numpy
    import pandas
    import psutil
    import scipy

    return {"numpy": numpy.__version__, "scipy": scipy.__version__, "pandas": pandas.__version__,
            "pyyaml": yaml.__version__, "psutil": psutil.__version__, "meshio": meshio.__version__,
            "python": sys.version.split()[0]}


def write_manifest(directory, rc, command, extra=None):
    """Echo every resolved field, library versions and a resource snapshot into manifest.yaml"""
    from core.utils.health import get_system_health

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "config_file": rc.source,
        "config": rc.raw,
        "derived": {
            "delta_gamma": rc.params.delta_gamma,
            "s_star": rc.params.s_star,
            "jump_threshold": rc.params.jump_threshold,
            "lipschitz_j": rc.params.lipschitz_j,
        },
        "versions": library_versions(),
        "health": get_system_health(),
    }
    if extra:
        manifest["results"] = to_plain(extra)
    path = directory / "manifest.yaml"
    with open(path, "w") as f:
        yaml.safe_dump(manifest, f, sort_keys=False, default_flow_style=False)
    return path
