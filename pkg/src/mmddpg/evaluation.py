"""Robustness evaluation: disturbance sweeps, parameter grids and reports.

Every cell draws its randomness from streams derived from a hash of the
base seed and the cell coordinates, so cells can be evaluated in any order
(or in parallel) and still give identical numbers.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .envs import DisturbanceSpec, apply_param_scaling, finite_rows, sample_episode_disturbance
from .errors import ConfigError, InputError, ShapeError

CSV_COLUMNS = ("algorithm", "env", "condition_kind", "param1", "param2", "seed",
               "mean_cost", "std_cost", "episodes")
KINDS = ("sweep", "grid")


@dataclass
class SweepConfig:
    means: tuple = (0.0, 1.0, 2.0, 3.0, 5.0)
    stds: tuple = (0.0, 0.5, 1.0, 2.0)
    episodes_per_cell: int = 100
    gamma: float = 0.99
    seeds: tuple = (0, 1, 2, 3, 4)
    clamp: bool = True

    def validate(self):
        problems = []
        if int(self.episodes_per_cell) < 1:
            problems.append(("eval.episodes_per_cell", "must be >= 1"))
        if not 0.0 <= self.gamma < 1.0:
            problems.append(("eval.gamma", "must lie in [0, 1)"))
        if not self.means or any(not math.isfinite(m) or m < 0 for m in self.means):
            problems.append(("eval.means", "need a non-empty list of finite magnitudes >= 0"))
        if not self.stds or any(not math.isfinite(s) or s < 0 for s in self.stds):
            problems.append(("eval.stds", "need a non-empty list of finite values >= 0"))
        if problems:
            raise ConfigError(problems)


@dataclass
class GridConfig:
    damping_scales: tuple = (0.2, 0.5, 1.0, 2.0, 5.0)
    gear_scales: tuple = (0.5, 0.8, 1.0, 1.2, 1.5)
    episodes_per_cell: int = 50
    gamma: float = 0.99
    seeds: tuple = (0, 1, 2, 3, 4)

    def validate(self):
        problems = []
        if int(self.episodes_per_cell) < 1:
            problems.append(("eval.grid_episodes_per_cell", "must be >= 1"))
        if not 0.0 <= self.gamma < 1.0:
            problems.append(("eval.gamma", "must lie in [0, 1)"))
        if not self.damping_scales or any(not s >= 0 for s in self.damping_scales):
            problems.append(("eval.damping_scales", "need a non-empty list of values >= 0"))
        if not self.gear_scales or any(not s > 0 for s in self.gear_scales):
            problems.append(("eval.gear_scales", "need a non-empty list of values > 0"))
        if problems:
            raise ConfigError(problems)


@dataclass
class CellRecord:
    condition_kind: str
    param1: float
    param2: float
    seed: object          # int for single-seed reports, "pooled" after aggregation
    mean_cost: float
    std_cost: float
    episodes: int
    invalid: int = 0

    @property
    def key(self):
        return (self.condition_kind, self.param1, self.param2)


@dataclass
class RobustnessReport:
    algorithm: str
    env: str
    records: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def keys(self):
        return [r.key for r in self.records]

    def cell(self, param1, param2, kind=None):
        for r in self.records:
            if r.param1 == param1 and r.param2 == param2 and (kind is None or r.condition_kind == kind):
                return r
        raise KeyError((param1, param2))

    @property
    def invalid_episodes(self):
        return sum(r.invalid for r in self.records)

    def means(self):
        return np.array([r.mean_cost for r in self.records])


# seeding

def cell_seed_sequence(base_seed, kind, param1, param2):
    """SeedSequence for one cell, from a hash of the seed and the cell coordinates."""
    key = f"{int(base_seed)}|{kind}|{float(param1)!r}|{float(param2)!r}".encode()
    digest = hashlib.sha256(key).digest()
    words = [int.from_bytes(digest[i:i + 4], "little") for i in range(0, 32, 4)]
    return np.random.SeedSequence(words)


def cell_streams(base_seed, kind, param1, param2):
    """``(init_rng, disturbance_rng)`` for one cell."""
    init_ss, dist_ss = cell_seed_sequence(base_seed, kind, param1, param2).spawn(2)
    return np.random.default_rng(init_ss), np.random.default_rng(dist_ss)


# rollouts

def _policy_fn(policy):
    fn = getattr(policy, "policy", policy)
    if not callable(fn):
        raise InputError("policy must be callable or expose .policy(obs)")
    return fn


def rollout_batch(policy, env, gamma, rng, episodes, disturbances=None):
    """Discounted costs of ``episodes`` parallel noiseless rollouts.

    ``disturbances`` is ``None`` or an ``(episodes, d)`` array applied at
    every step of the matching episode. Returns ``(costs, valid)``; an
    episode whose state becomes non-finite is marked invalid and its cost
    is NaN.
    """
    fn = _policy_fn(policy)
    spec = env.spec
    if disturbances is None:
        w = np.zeros((episodes, spec.disturbance_dim))
    else:
        w = np.asarray(disturbances, dtype=np.float64)
        if w.shape != (episodes, spec.disturbance_dim):
            raise ShapeError(f"disturbances shape {w.shape} != {(episodes, spec.disturbance_dim)}")
    state = env.reset(rng, episodes)
    total = np.zeros(episodes)
    valid = np.ones(episodes, dtype=bool)
    disc = 1.0
    for _ in range(spec.horizon):
        obs = env.observe(state)
        a = np.asarray(fn(obs), dtype=np.float64)
        if a.shape != (episodes, spec.action_dim):
            raise ShapeError(f"policy output shape {a.shape} != {(episodes, spec.action_dim)}")
        state, cost, done = env.step(state, a, w, strict=False)
        ok = finite_rows(state, cost)
        if not ok.all():
            valid &= ok
            # park faulted rows at the origin so the policy keeps seeing finite inputs
            state.pos[~ok] = 0.0
            state.vel[~ok] = 0.0
            cost = np.where(ok, cost, 0.0)
        total += disc * cost
        disc *= gamma
        if done:
            break
    return np.where(valid, total, np.nan), valid


def rollout_discounted_cost(policy, env, disturbance, gamma, rng):
    """Discounted cost of one episode with a constant disturbance (or ``None``).

    Returns NaN for an invalid (faulted) episode.
    """
    w = None if disturbance is None else np.asarray(disturbance, dtype=np.float64).reshape(1, -1)
    costs, _ = rollout_batch(policy, env, gamma, rng, 1, w)
    return float(costs[0])


def _cell_record(kind, p1, p2, seed, costs, valid):
    good = costs[valid]
    n = int(good.size)
    mean = float(np.mean(good)) if n else float("nan")
    std = float(np.std(good)) if n else float("nan")
    return CellRecord(kind, float(p1), float(p2), seed, mean, std, n, int((~valid).sum()))


def sweep_disturbances(env, mean, std, episodes, rng, clamp=True):
    """Per-episode constant disturbances for one sweep cell.

    Each episode's mean vector is ``mean`` times a direction drawn
    uniformly on the unit sphere; the Gaussian draw around it has
    isotropic ``std``.
    """
    d = env.spec.disturbance_dim
    out = np.empty((episodes, d))
    for k in range(episodes):
        u = rng.standard_normal(d)
        u /= np.linalg.norm(u)
        spec = DisturbanceSpec("gaussian", tuple(mean * u), (float(std),) * d, clamp)
        out[k] = sample_episode_disturbance(spec, rng, env.spec.disturbance_bound)
    return out


def evaluate_cell(policy, env, episodes, gamma, base_seed, kind, param1, param2,
                  disturbed=False, clamp=True):
    init_rng, dist_rng = cell_streams(base_seed, kind, param1, param2)
    w = sweep_disturbances(env, param1, param2, episodes, dist_rng, clamp) if disturbed else None
    costs, valid = rollout_batch(policy, env, gamma, init_rng, episodes, w)
    return _cell_record(kind, param1, param2, base_seed, costs, valid)


def _metadata(policy, kind, extra):
    meta = {"kind": kind}
    checksum = getattr(policy, "checksum", None)
    meta["checkpoint_hash"] = checksum() if callable(checksum) else ""
    meta.update(extra)
    return meta


def disturbance_sweep(policy, env, config, seed=None, algorithm=None, cells=None):
    """Evaluate every ``(mean, std)`` cell with episode-constant Gaussian disturbances.

    ``cells`` optionally gives the evaluation order (a permutation of the
    grid); the report lists cells in grid order regardless.
    """
    config.validate()
    seed = config.seeds[0] if seed is None else int(seed)
    grid = [(float(m), float(s)) for m in config.means for s in config.stds]
    order = grid if cells is None else [(float(a), float(b)) for a, b in cells]
    if sorted(order) != sorted(grid):
        raise ConfigError([("eval.cells", "evaluation order must be a permutation of the grid")])
    done = {}
    for m, s in order:
        done[(m, s)] = evaluate_cell(policy, env, config.episodes_per_cell, config.gamma, seed,
                                     "sweep", m, s, disturbed=True, clamp=config.clamp)
    algo = algorithm or getattr(policy, "algorithm", "policy")
    meta = _metadata(policy, "sweep", {
        "clamp": bool(config.clamp), "gamma": config.gamma, "seeds": [seed],
        "episodes_per_cell": int(config.episodes_per_cell), "config": asdict(config)})
    report = RobustnessReport(algo, env.name, [done[c] for c in grid], meta)
    report.metadata["invalid_episodes"] = report.invalid_episodes
    return report


def parameter_grid_sweep(policy, env, config, seed=None, algorithm=None, cells=None):
    """Evaluate every ``(damping_scale, gear_scale)`` cell without disturbance.

    ``env`` itself is never modified; each cell uses a scaled copy.
    """
    config.validate()
    seed = config.seeds[0] if seed is None else int(seed)
    grid = [(float(d), float(g)) for d in config.damping_scales for g in config.gear_scales]
    order = grid if cells is None else [(float(a), float(b)) for a, b in cells]
    if sorted(order) != sorted(grid):
        raise ConfigError([("eval.cells", "evaluation order must be a permutation of the grid")])
    done = {}
    for d, g in order:
        scaled = apply_param_scaling(env, gear_scale=g, damping_scale=d)
        done[(d, g)] = evaluate_cell(policy, scaled, config.episodes_per_cell, config.gamma, seed,
                                     "grid", d, g)
    algo = algorithm or getattr(policy, "algorithm", "policy")
    meta = _metadata(policy, "grid", {
        "gamma": config.gamma, "seeds": [seed],
        "episodes_per_cell": int(config.episodes_per_cell), "config": asdict(config)})
    report = RobustnessReport(algo, env.name, [done[c] for c in grid], meta)
    report.metadata["invalid_episodes"] = report.invalid_episodes
    return report


def aggregate_across_seeds(reports):
    """Pool per-seed reports cell by cell.

    The pooled mean weights each seed's cell mean by its valid episode
    count, so it equals the mean over all raw episode costs (and the plain
    mean of means when no episode was invalid). ``std_cost`` of the pooled
    report is the across-seed standard deviation of the cell means.
    """
    reports = list(reports)
    if not reports:
        raise InputError("no reports to aggregate")
    keys = reports[0].keys()
    for r in reports[1:]:
        if r.keys() != keys:
            raise ConfigError([("reports", "condition grids differ between reports")])
        if (r.algorithm, r.env) != (reports[0].algorithm, reports[0].env):
            raise ConfigError([("reports", "reports mix algorithms or environments")])
    seeds = []
    for r in reports:
        seeds.extend(r.metadata.get("seeds", []))
    pooled = []
    for i, key in enumerate(keys):
        cells = [r.records[i] for r in reports]
        counts = np.array([c.episodes for c in cells], dtype=np.float64)
        means = np.array([c.mean_cost for c in cells])
        have = counts > 0
        n = int(counts.sum())
        mean = float(np.sum(counts[have] * means[have]) / counts.sum()) if n else float("nan")
        spread = float(np.std(means[have])) if have.any() else float("nan")
        pooled.append(CellRecord(key[0], key[1], key[2], "pooled", mean, spread, n,
                                 sum(c.invalid for c in cells)))
    meta = dict(reports[0].metadata)
    meta.update({"seeds": seeds, "seed_count": len(reports), "std_kind": "across_seed",
                 "invalid_episodes": sum(c.invalid for c in pooled)})
    meta.pop("checkpoint_hash", None)
    meta["checkpoint_hashes"] = [r.metadata.get("checkpoint_hash", "") for r in reports]
    return RobustnessReport(reports[0].algorithm, reports[0].env, pooled, meta)


# serialization

def _num(x):
    return format(float(x), ".17g")


def report_filename(algorithm, env, kind, seed, ext="csv"):
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}")
    return f"{algorithm}_{env}_{kind}_{seed}.{ext}"


def report_rows(report):
    for r in report.records:
        yield [report.algorithm, report.env, r.condition_kind, _num(r.param1), _num(r.param2),
               str(r.seed), _num(r.mean_cost), _num(r.std_cost), str(r.episodes)]


def _json_text(value, indent=0):
    pad = "  " * (indent + 1)
    if isinstance(value, bool) or value is None:
        return json.dumps(value)
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        if not math.isfinite(value):
            return json.dumps(None)
        return _num(value)
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, dict):
        if not value:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_json_text(v, indent + 1)}" for k, v in value.items()]
        return "{\n" + ",\n".join(items) + "\n" + "  " * indent + "}"
    if isinstance(value, (list, tuple)):
        if not value:
            return "[]"
        items = [f"{pad}{_json_text(v, indent + 1)}" for v in value]
        return "[\n" + ",\n".join(items) + "\n" + "  " * indent + "]"
    raise TypeError(f"cannot serialize {type(value).__name__}")


def report_to_csv_text(report):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    w.writerows(report_rows(report))
    return buf.getvalue()


def report_to_json_text(report):
    records = [dict(zip(CSV_COLUMNS, (report.algorithm, report.env, r.condition_kind, r.param1,
                                      r.param2, r.seed, r.mean_cost, r.std_cost, r.episodes)))
               for r in report.records]
    for rec, r in zip(records, report.records):
        rec["invalid"] = r.invalid
    doc = {"metadata": {"algorithm": report.algorithm, "env": report.env, **report.metadata},
           "records": records}
    return _json_text(doc) + "\n"


def atomic_write_text(path, text):
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def export_report(report, fmt, path):
    """Write ``report`` as ``"csv"`` or ``"json"`` to ``path``."""
    fmt = fmt.lower()
    if fmt == "csv":
        atomic_write_text(path, report_to_csv_text(report))
    elif fmt == "json":
        atomic_write_text(path, report_to_json_text(report))
    else:
        raise ValueError(f"unknown report format {fmt!r}")


def _parse_seed(text):
    try:
        return int(text)
    except (TypeError, ValueError):
        return text


def load_report(path):
    """Read a CSV or JSON report written by :func:`export_report`."""
    if str(path).endswith(".json"):
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        meta = dict(doc["metadata"])
        algorithm, env = meta.pop("algorithm"), meta.pop("env")
        records = [CellRecord(r["condition_kind"], float(r["param1"]), float(r["param2"]),
                              _parse_seed(r["seed"]), _float(r["mean_cost"]), _float(r["std_cost"]),
                              int(r["episodes"]), int(r.get("invalid", 0)))
                   for r in doc["records"]]
        return RobustnessReport(algorithm, env, records, meta)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != CSV_COLUMNS:
        raise InputError(f"{path}: not a report CSV (bad header)")
    algorithm = env = ""
    records = []
    for row in rows[1:]:
        if len(row) != len(CSV_COLUMNS):
            raise InputError(f"{path}: malformed row {row!r}")
        algorithm, env = row[0], row[1]
        records.append(CellRecord(row[2], float(row[3]), float(row[4]), _parse_seed(row[5]),
                                  float(row[6]), float(row[7]), int(row[8])))
    return RobustnessReport(algorithm, env, records, {})


def _float(x):
    return float("nan") if x is None else float(x)
