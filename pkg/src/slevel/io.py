"""LIBSVM parsing, metrics CSV output and run-config loading."""

from __future__ import annotations

import configparser
import csv
import io as _io
import math
import os
from dataclasses import dataclass, field, fields, replace

import numpy as np

METRICS_HEADER = ["outer_iter", "grad_iters", "data_passes", "r", "u_hat", "objective",
                  "max_violation", "relative_gap", "wall_ms"]


class LibsvmParseError(ValueError):
    def __init__(self, line_no, message):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class ConfigError(ValueError):
    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


# ---------------------------------------------------------------------------
# Datasets


@dataclass(frozen=True, eq=False)
class DatasetMatrix:
    """Sparse row-major matrix with relabeled class ids.

    ``indices`` keep the 1-based LIBSVM numbering; :meth:`csr` hands out
    0-based arrays for the compute kernels. ``labels`` are ``0..K-1`` in
    first-seen order and ``label_map[k]`` is the original label of class ``k``.
    """

    data: np.ndarray
    indices: np.ndarray
    indptr: np.ndarray
    labels: np.ndarray
    label_map: tuple
    feature_dim: int

    @property
    def row_count(self):
        return self.indptr.shape[0] - 1

    @property
    def nnz(self):
        return self.data.shape[0]

    @property
    def num_classes(self):
        return len(self.label_map)

    def csr(self):
        return self.data, self.indices - 1, self.indptr

    def class_rows(self, k):
        return np.flatnonzero(self.labels == k)

    def row(self, i):
        a, b = self.indptr[i], self.indptr[i + 1]
        return self.indices[a:b], self.data[a:b]

    def subset(self, rows):
        """Rows ``rows`` as a new matrix sharing the label map."""
        rows = np.asarray(rows, dtype=np.int64)
        starts, ends = self.indptr[rows], self.indptr[rows + 1]
        take = np.concatenate([np.arange(a, b) for a, b in zip(starts, ends)]) if len(rows) else np.zeros(0, np.int64)
        indptr = np.concatenate(([0], np.cumsum(ends - starts)))
        return DatasetMatrix(self.data[take], self.indices[take], indptr, self.labels[rows],
                             self.label_map, self.feature_dim)

    def dense(self):
        out = np.zeros((self.row_count, self.feature_dim))
        for i in range(self.row_count):
            idx, val = self.row(i)
            out[i, idx - 1] = val
        return out

    @classmethod
    def from_dense(cls, features, labels):
        """Build from a dense array; zeros are dropped."""
        features = np.asarray(features, dtype=np.float64)
        rows, cols = np.nonzero(features)
        indptr = np.concatenate(([0], np.cumsum(np.bincount(rows, minlength=features.shape[0]))))
        ids, label_map = _relabel(list(labels))
        return cls(features[rows, cols], cols.astype(np.int64) + 1, indptr.astype(np.int64),
                   ids, label_map, features.shape[1])


def _relabel(raw):
    seen = {}
    ids = np.empty(len(raw), dtype=np.int64)
    for i, lab in enumerate(raw):
        ids[i] = seen.setdefault(lab, len(seen))
    return ids, tuple(seen)


def _parse_label(tok):
    v = float(tok)
    if math.isfinite(v) and v == int(v):
        return int(v)
    return v


def parse_libsvm(stream, feature_dim=None) -> DatasetMatrix:
    """Parse LIBSVM text (``label idx:val ...`` per line, ``#`` comments).

    ``stream`` is a text file object, an iterable of lines or a string.
    """
    if isinstance(stream, str):
        stream = _io.StringIO(stream)
    data, indices, indptr, raw_labels = [], [], [0], []
    max_idx = 0
    for line_no, line in enumerate(stream, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        toks = line.split()
        try:
            raw_labels.append(_parse_label(toks[0]))
        except ValueError:
            raise LibsvmParseError(line_no, f"bad label {toks[0]!r}") from None
        prev = 0
        for tok in toks[1:]:
            idx_s, sep, val_s = tok.partition(":")
            if not sep:
                raise LibsvmParseError(line_no, f"expected index:value, got {tok!r}")
            try:
                idx = int(idx_s)
                val = float(val_s)
            except ValueError:
                raise LibsvmParseError(line_no, f"non-numeric token {tok!r}") from None
            if idx < 1:
                raise LibsvmParseError(line_no, f"index {idx} is below 1")
            if idx <= prev:
                raise LibsvmParseError(line_no, f"index {idx} does not increase")
            prev = idx
            indices.append(idx)
            data.append(val)
        max_idx = max(max_idx, prev)
        indptr.append(len(data))
    if not raw_labels:
        raise ValueError("empty LIBSVM input")
    if feature_dim is None:
        feature_dim = max_idx
    elif feature_dim < max_idx:
        raise ValueError(f"feature_dim {feature_dim} is below the largest index {max_idx}")
    ids, label_map = _relabel(raw_labels)
    return DatasetMatrix(np.array(data, dtype=np.float64), np.array(indices, dtype=np.int64),
                         np.array(indptr, dtype=np.int64), ids, label_map, int(feature_dim))


def load_libsvm(path, feature_dim=None):
    with open(path, encoding="utf-8") as fh:
        return parse_libsvm(fh, feature_dim)


def serialize_libsvm(dm: DatasetMatrix) -> str:
    out = []
    for i in range(dm.row_count):
        idx, val = dm.row(i)
        parts = [str(dm.label_map[dm.labels[i]])]
        parts += [f"{j}:{float(v)!r}" for j, v in zip(idx, val)]
        out.append(" ".join(parts))
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# Metrics


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_metrics_csv(trace, path, wall_time=True):
    """One row per outer iteration; floats use shortest round-trip repr.

    ``wall_time=False`` leaves the ``wall_ms`` cells empty so that repeated
    runs produce byte-identical files.
    """
    records = list(trace.records)
    if not records:
        raise ValueError("empty trace")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRICS_HEADER)
        for rec in records:
            m = rec.metrics
            w.writerow([_fmt(rec.outer_iter), _fmt(rec.grad_iters), _fmt(rec.data_passes),
                        _fmt(rec.r), _fmt(rec.u_hat), _fmt(m.objective_value),
                        _fmt(m.max_violation), _fmt(m.relative_gap),
                        _fmt(rec.wall_ms if wall_time else None)])


# ---------------------------------------------------------------------------
# Run configuration

PROBLEMS = ("toy1d", "toy2d", "np", "fairness", "alp")
SOLVERS = ("sfls", "dfls", "ovsmd-only")


@dataclass(frozen=True)
class ProblemSettings:
    name: str = "toy1d"
    noise: float = 0.0
    data_path: str = ""
    data_seed: int = 0
    num_points: int = 3000
    num_classes: int = 3
    feature_dim: int = 2
    radius: float = 5.0
    kappa: float = 0.95
    num_samples: int = 50
    cost_profile: int = 0


@dataclass(frozen=True)
class SolverSettings:
    name: str = "sfls"
    theta: float = 1.1
    iterations: int = 1000
    step_constant: float = 1.0
    step_rule: str = "fixed"
    batch_size: int = 1000
    delta: float = 0.1
    r0_mode: str = "margin"
    r0: float = float("nan")
    r0_margin: float = 0.0
    outer_limit: int = 20
    eps_opt: float = float("nan")
    max_data_passes: float = float("inf")
    reference_f_star: float = float("nan")


@dataclass(frozen=True)
class RunConfig:
    problem: ProblemSettings = field(default_factory=ProblemSettings)
    solver: SolverSettings = field(default_factory=SolverSettings)
    seeds: tuple = (0,)
    out: str = "runs"
    jobs: int = 1


def _parse_seeds(text):
    seeds = []
    for part in str(text).replace(" ", "").split(","):
        if not part:
            continue
        if "-" in part[1:]:
            a, b = part.split("-", 1)
            seeds.extend(range(int(a), int(b) + 1))
        else:
            seeds.append(int(part))
    if not seeds:
        raise ValueError("no seeds given")
    return tuple(seeds)


def _coerce(section_cls, key, raw, path):
    types = {f.name: f.type for f in fields(section_cls)}
    if key not in types:
        raise ConfigError(path, "unknown key")
    kind = types[key]
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        return str(raw)
    except ValueError:
        raise ConfigError(path, f"cannot read {raw!r} as {kind}") from None


def _validate(cfg: RunConfig):
    p, s = cfg.problem, cfg.solver
    if p.name not in PROBLEMS:
        raise ConfigError("problem.name", f"unknown problem {p.name!r}")
    if s.name not in SOLVERS:
        raise ConfigError("solver.name", f"unknown solver {s.name!r}")
    if not s.theta > 1:
        raise ConfigError("solver.theta", "theta must exceed 1 (level step parameter theta > 1)")
    if not 0 < s.delta < 1:
        raise ConfigError("solver.delta", "delta must lie in (0, 1)")
    for key in ("iterations", "batch_size", "outer_limit"):
        if getattr(s, key) < 1:
            raise ConfigError(f"solver.{key}", "must be at least 1")
    if not s.step_constant > 0:
        raise ConfigError("solver.step_constant", "must be positive")
    if s.step_rule not in ("fixed", "theory"):
        raise ConfigError("solver.step_rule", "must be 'fixed' or 'theory'")
    if s.r0_mode not in ("explicit", "margin"):
        raise ConfigError("solver.r0_mode", "must be 'explicit' or 'margin'")
    if s.r0_mode == "explicit" and not math.isfinite(s.r0):
        raise ConfigError("solver.r0", "explicit r0 mode needs a finite r0")
    if cfg.jobs < 1:
        raise ConfigError("run.jobs", "must be at least 1")
    return cfg


def apply_overrides(cfg: RunConfig, overrides):
    """Apply ``section.key=value`` strings on top of ``cfg``."""
    sections = {"problem": dict(), "solver": dict(), "run": dict()}
    for item in overrides:
        path, sep, value = item.partition("=")
        if not sep or "." not in path:
            raise ConfigError(path, "override must look like section.key=value")
        sec, key = path.strip().split(".", 1)
        if sec not in sections:
            raise ConfigError(path, "unknown section")
        sections[sec][key.strip()] = value.strip()
    return _apply(cfg, sections)


def _apply(cfg, sections):
    prob = {k: _coerce(ProblemSettings, k, v, f"problem.{k}") for k, v in sections.get("problem", {}).items()}
    solv = {k: _coerce(SolverSettings, k, v, f"solver.{k}") for k, v in sections.get("solver", {}).items()}
    run = dict(sections.get("run", {}))
    changes = {}
    for key, raw in run.items():
        if key == "seeds":
            changes["seeds"] = _parse_seeds(raw)
        elif key == "out":
            changes["out"] = str(raw)
        elif key == "jobs":
            changes["jobs"] = int(raw)
        else:
            raise ConfigError(f"run.{key}", "unknown key")
    cfg = replace(cfg, problem=replace(cfg.problem, **prob), solver=replace(cfg.solver, **solv), **changes)
    return _validate(cfg)


def load_run_config(path, overrides=()) -> RunConfig:
    """Read an INI-style config with ``[problem]``, ``[solver]`` and ``[run]`` sections.

    Missing keys take defaults (``theta = 1.1``, ``batch_size = 1000``,
    ``delta = 0.1``); unknown sections or keys are rejected.
    """
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    parser.read(path, encoding="utf-8")
    sections = {}
    for sec in parser.sections():
        if sec not in ("problem", "solver", "run"):
            raise ConfigError(sec, "unknown section")
        sections[sec] = dict(parser.items(sec))
    cfg = _apply(RunConfig(), sections)
    return apply_overrides(cfg, overrides) if overrides else cfg
