"""``mmddpg`` command line: ``train``, ``eval`` and ``compare``.

Any config key can be overridden with a flag of the same dotted name, e.g.
``--agent.gamma 0.95`` or ``--eval.means "[0, 1, 2]"``.
"""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import hashlib
import io
import logging
import os
import sys

import yaml

from . import __version__, kernels
from .agents import make_agent
from .checkpoint import (canonical_json, check_env_compatible, config_hash, load_checkpoint,
                         save_checkpoint)
from .config import load_config
from .errors import ConfigError, InputError, ShapeError, TrainingFault, UsageError
from .evaluation import (aggregate_across_seeds, atomic_write_text, disturbance_sweep, export_report,
                         load_report, parameter_grid_sweep, report_filename)
from .train import EpisodeSummary, Trainer, seed_streams

log = logging.getLogger("mmddpg")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INPUT = 3
EXIT_TRAINING = 4

_SHORTCUTS = {"seed": "run.seed", "algo": "run.algorithm", "env": "run.env",
              "out": "run.output_dir", "steps": "run.total_steps"}


def _timestamp():
    # SOURCE_DATE_EPOCH pins the manifest timestamps for reproducible builds of a run
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    when = (dt.datetime.fromtimestamp(int(epoch), dt.timezone.utc) if epoch
            else dt.datetime.now(dt.timezone.utc))
    return when.strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_overrides(extra):
    """``['--agent.gamma', '0.9', '--run.seed=3']`` -> ``{'agent.gamma': 0.9, 'run.seed': 3}``."""
    out, problems = {}, []
    i = 0
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--") or "." not in tok.split("=", 1)[0]:
            problems.append((tok, "unrecognized argument"))
            i += 1
            if tok.startswith("--") and "=" not in tok and i < len(extra) and not extra[i].startswith("--"):
                i += 1
            continue
        if "=" in tok:
            key, raw = tok[2:].split("=", 1)
            i += 1
        else:
            if i + 1 >= len(extra):
                problems.append((tok[2:], "missing value"))
                break
            key, raw = tok[2:], extra[i + 1]
            i += 2
        try:
            out[key] = yaml.safe_load(raw)
        except yaml.YAMLError:
            out[key] = raw
    return out, problems


def build_config(args, extra):
    overrides, problems = parse_overrides(extra)
    for flag, key in _SHORTCUTS.items():
        value = getattr(args, flag, None)
        if value is not None:
            overrides[key] = value
    try:
        cfg = load_config(args.config, overrides)
    except ConfigError as exc:
        problems.extend(exc.problems)
    if problems:
        raise ConfigError(problems)
    return cfg


# train

def cmd_train(cfg):
    """Run one seeded training job and write its artifacts. Returns the manifest dict."""
    run = cfg.run
    env = cfg.build_env()
    streams = seed_streams(run.seed)
    agent = make_agent(run.algorithm, env.spec, cfg.agent, streams["init"])
    trainer = Trainer(agent, env, streams, noise=cfg.noise)
    snapshot = cfg.to_mapping()

    out = run.output_dir
    ckpt_dir = os.path.join(out, "checkpoints")
    os.makedirs(ckpt_dir, exist_ok=True)
    log_path = os.path.join(out, "train_log.csv")
    started = _timestamp()
    checkpoints = []

    def checkpoint(step):
        name = f"step_{step:08d}.ckpt"
        digest = save_checkpoint(agent, os.path.join(ckpt_dir, name), step, snapshot)
        checkpoints.append({"step": step, "path": os.path.join("checkpoints", name),
                            "sha256": digest})
        log.info("checkpoint %s", name)

    written = 0
    with open(log_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(EpisodeSummary.columns())
        checkpoint(0)
        every = run.checkpoint_every
        done = 0
        while done < run.total_steps:
            chunk = min(every - done % every, run.total_steps - done)
            trainer.run(chunk)
            done += chunk
            for summary in trainer.summaries[written:]:
                writer.writerow(summary.row())
            written = len(trainer.summaries)
            fh.flush()
            if done % every == 0 or done == run.total_steps:
                checkpoint(done)

    manifest = {
        "package_version": __version__,
        "kernel_backend": kernels.BACKEND,
        "config": snapshot,
        "config_hash": config_hash(snapshot),
        "started": started,
        "finished": _timestamp(),
        "total_steps": run.total_steps,
        "episodes": len(trainer.summaries),
        "env_faults": trainer.faults,
        "checkpoints": checkpoints,
        "training_log": "train_log.csv",
    }
    atomic_write_text(os.path.join(out, "manifest.json"),
                      canonical_json(manifest) + "\n")
    return manifest


# eval

def cmd_eval(checkpoints, eval_kind, cfg):
    """Evaluate each checkpoint; returns the list of files written."""
    if eval_kind not in ("sweep", "grid"):
        raise ConfigError([("--eval-kind", "must be 'sweep' or 'grid'")])
    env = cfg.build_env()
    out = cfg.run.output_dir
    os.makedirs(out, exist_ok=True)
    reports, written, seeds = [], [], set()
    for path in checkpoints:
        agent, meta = load_checkpoint(path)
        check_env_compatible(meta, env)
        seed = int(meta.get("run_config", {}).get("run.seed", cfg.run.seed))
        if seed in seeds:
            raise UsageError(f"{path}: a checkpoint for seed {seed} was already given; "
                             "reports are named by seed, so evaluate it separately")
        seeds.add(seed)
        with open(path, "rb") as fh:
            digest = hashlib.sha256(fh.read()).hexdigest()
        if eval_kind == "sweep":
            report = disturbance_sweep(agent, env, cfg.eval.sweep(), seed=seed)
        else:
            report = parameter_grid_sweep(agent, env, cfg.eval.grid(), seed=seed)
        report.metadata["checkpoint_hash"] = digest
        report.metadata["checkpoint_step"] = meta.get("step", 0)
        reports.append(report)
        written.extend(_write_report(report, out, eval_kind, seed))
    if len(reports) > 1:
        written.extend(_write_report(aggregate_across_seeds(reports), out, eval_kind, "pooled"))
    return written


def _write_report(report, out, kind, seed):
    paths = []
    for ext in ("csv", "json"):
        path = os.path.join(out, report_filename(report.algorithm, report.env, kind, seed, ext))
        export_report(report, ext, path)
        paths.append(path)
    return paths


# compare

def _labels(reports):
    labels = [r.algorithm for r in reports]
    if len(set(labels)) < len(labels):
        labels = [f"{r.algorithm}_{r.records[0].seed if r.records else ''}" for r in reports]
    seen = {}
    unique = []
    for lab in labels:
        seen[lab] = seen.get(lab, 0) + 1
        unique.append(lab if seen[lab] == 1 else f"{lab}#{seen[lab]}")
    return unique


def compare_table(reports):
    """Rows keyed by condition with one mean column per report and ratios to the first."""
    if not reports:
        raise InputError("compare needs at least one report")
    keys = reports[0].keys()
    for r in reports[1:]:
        if r.keys() != keys:
            raise ConfigError([("reports", "condition grids differ between reports")])
    labels = _labels(reports)
    header = ["condition_kind", "param1", "param2"]
    header += [f"mean_{lab}" for lab in labels]
    header += [f"ratio_{lab}_{labels[0]}" for lab in labels[1:]]
    rows = []
    for i, key in enumerate(keys):
        means = [r.records[i].mean_cost for r in reports]
        ratios = [m / means[0] if means[0] != 0 else float("nan") for m in means[1:]]
        rows.append([key[0], key[1], key[2], *means, *ratios])
    return header, rows


def cmd_compare(paths, out=None):
    reports = [load_report(p) for p in paths]
    header, rows = compare_table(reports)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([v if isinstance(v, str) else format(v, ".17g") for v in row])
    text = buf.getvalue()
    if out is not None:
        os.makedirs(out, exist_ok=True)
        atomic_write_text(os.path.join(out, "compare.csv"), text)
    return text


# entry point

def build_parser():
    p = argparse.ArgumentParser(prog="mmddpg", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="YAML file of dotted keys")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--algo", choices=("mmddpg", "ddpg", "rarl"))
        sp.add_argument("--env", choices=("point_mass", "two_link"))
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--steps", type=int)
        sp.add_argument("-v", "--verbose", action="store_true")

    t = sub.add_parser("train", help="train one seeded run")
    common(t)
    e = sub.add_parser("eval", help="robustness evaluation of checkpoints")
    common(e)
    e.add_argument("checkpoints", nargs="+")
    e.add_argument("--eval-kind", choices=("sweep", "grid"), default="sweep")
    c = sub.add_parser("compare", help="merge reports into a comparison table")
    c.add_argument("reports", nargs="+")
    c.add_argument("--out", help="directory for compare.csv (stdout only if omitted)")
    c.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None):
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        if args.command == "compare":
            if extra:
                raise ConfigError([(extra[0], "unrecognized argument")])
            sys.stdout.write(cmd_compare(args.reports, args.out))
            return EXIT_OK
        cfg = build_config(args, extra)
        if args.command == "train":
            manifest = cmd_train(cfg)
            print(os.path.join(cfg.run.output_dir, "manifest.json"))
            log.info("%d episodes, %d env faults", manifest["episodes"], manifest["env_faults"])
        else:
            for path in cmd_eval(args.checkpoints, args.eval_kind, cfg):
                print(path)
        return EXIT_OK
    except ConfigError as exc:
        for key, msg in exc.problems:
            print(f"config error: {key}: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    except (InputError, ShapeError, UsageError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except TrainingFault as exc:
        print(f"training fault: {exc}", file=sys.stderr)
        return EXIT_TRAINING


if __name__ == "__main__":
    sys.exit(main())
