"""Deterministic agent checkpoints.

A checkpoint is a zip archive (stored, fixed timestamps, sorted entries)
holding ``meta.json`` plus one ``.npy`` per flat parameter or optimizer
buffer. Identical agent state therefore always produces identical bytes.
"""

from __future__ import annotations

import hashlib
import io
import json
import os
import zipfile
from dataclasses import asdict

import numpy as np

from .agents import AgentConfig, make_agent
from .envs import EnvSpec
from .errors import InputError, ShapeError

FORMAT_VERSION = 1
_EPOCH = (1980, 1, 1, 0, 0, 0)


def canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_jsonable)


def _jsonable(x):
    if isinstance(x, tuple):
        return list(x)
    if isinstance(x, np.generic):
        return x.item()
    raise TypeError(f"not JSON serializable: {type(x).__name__}")


def config_hash(config):
    """sha256 of the canonical JSON form of a config mapping."""
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()


def _npy_bytes(arr):
    buf = io.BytesIO()
    np.lib.format.write_array(buf, np.ascontiguousarray(arr, dtype=np.float64), allow_pickle=False)
    return buf.getvalue()


def checkpoint_bytes(agent, step=0, run_config=None):
    """Serialize ``agent`` to the checkpoint byte format."""
    run_config = run_config or {}
    nets = {}
    entries = {}
    for name, net in agent.nets.items():
        opt = agent.optim[name]
        nets[name] = {
            "layer_sizes": net.layer_sizes,
            "hidden_activation": net.hidden_activation,
            "output_activation": net.output_activation,
            "bound": net.bound,
            "adam": {"learning_rate": opt.learning_rate, "beta1": opt.beta1, "beta2": opt.beta2,
                     "epsilon_adam": opt.epsilon_adam, "step_count": opt.step_count},
        }
        entries[f"nets/{name}.npy"] = _npy_bytes(net.flat)
        entries[f"targets/{name}.npy"] = _npy_bytes(agent.targets[name].flat)
        entries[f"adam/{name}_m.npy"] = _npy_bytes(opt.m_flat)
        entries[f"adam/{name}_v.npy"] = _npy_bytes(opt.v_flat)
    meta = {
        "format_version": FORMAT_VERSION,
        "algorithm": agent.algorithm,
        "env_spec": asdict(agent.spec),
        "agent_config": asdict(agent.config),
        "step": int(step),
        "nets": nets,
        "run_config": run_config,
        "config_hash": config_hash(run_config),
    }
    entries["meta.json"] = canonical_json(meta).encode()
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", zipfile.ZIP_STORED) as zf:
        for name in sorted(entries):
            info = zipfile.ZipInfo(name, date_time=_EPOCH)
            info.external_attr = 0o644 << 16
            zf.writestr(info, entries[name])
    return buf.getvalue()


def save_checkpoint(agent, path, step=0, run_config=None):
    data = checkpoint_bytes(agent, step, run_config)
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)
    return hashlib.sha256(data).hexdigest()


def _read_npy(zf, name):
    with zf.open(name) as fh:
        return np.lib.format.read_array(io.BytesIO(fh.read()), allow_pickle=False)


def _fill(dst, src, what):
    if dst.shape != src.shape:
        raise ShapeError(f"checkpoint {what} has {src.size} values, network expects {dst.size}")
    dst[...] = src


def load_checkpoint(path):
    """Rebuild the agent stored at ``path``. Returns ``(agent, meta)``."""
    try:
        zf = zipfile.ZipFile(path)
    except (OSError, zipfile.BadZipFile) as exc:
        raise InputError(f"{path}: unreadable checkpoint ({exc})") from exc
    with zf:
        meta = json.loads(zf.read("meta.json"))
        if meta.get("format_version") != FORMAT_VERSION:
            raise InputError(f"{path}: unsupported checkpoint format {meta.get('format_version')}")
        spec = EnvSpec(**meta["env_spec"])
        cfg = dict(meta["agent_config"])
        cfg["hidden_sizes"] = tuple(cfg["hidden_sizes"])
        config = AgentConfig(**cfg)
        # init values are overwritten below; the generator only satisfies the constructor
        agent = make_agent(meta["algorithm"], spec, config, np.random.default_rng(0))
        if sorted(agent.nets) != sorted(meta["nets"]):
            raise InputError(f"{path}: network set does not match algorithm {meta['algorithm']}")
        for name, info in meta["nets"].items():
            net, target, opt = agent.nets[name], agent.targets[name], agent.optim[name]
            if net.layer_sizes != info["layer_sizes"]:
                raise ShapeError(f"{path}: {name} layer sizes {info['layer_sizes']} "
                                 f"!= {net.layer_sizes}")
            _fill(net.flat, _read_npy(zf, f"nets/{name}.npy"), f"{name} weights")
            _fill(target.flat, _read_npy(zf, f"targets/{name}.npy"), f"{name} target weights")
            _fill(opt.m_flat, _read_npy(zf, f"adam/{name}_m.npy"), f"{name} first moments")
            _fill(opt.v_flat, _read_npy(zf, f"adam/{name}_v.npy"), f"{name} second moments")
            adam = info["adam"]
            opt.learning_rate = adam["learning_rate"]
            opt.beta1, opt.beta2 = adam["beta1"], adam["beta2"]
            opt.epsilon_adam = adam["epsilon_adam"]
            opt.step_count = adam["step_count"]
            net.touch()
            target.touch()
    return agent, meta


def check_env_compatible(meta, env):
    """Raise unless the checkpoint's dimensions match ``env``."""
    saved = meta["env_spec"]
    ours = env.spec
    for name in ("state_dim", "action_dim", "disturbance_dim"):
        if saved[name] != getattr(ours, name):
            raise ShapeError(f"checkpoint {name}={saved[name]} does not match env "
                             f"{env.name} ({name}={getattr(ours, name)})")
