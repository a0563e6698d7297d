"""Canonical JSON/CSV serialization shared by the CLI.

All outputs are deterministic: JSON is dumped with sorted keys and default
(shortest round-trip) float formatting, CSV floats use repr, and every file
embeds the config hash and tool version.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from . import __version__
from .canonical import CanonicalSiso
from .exceptions import ConfigError
from .priors import (
    EigenPriorKind,
    EigenPriorSpec,
    NoisePriorKind,
    NoisePriorSpec,
    ParamPriorSpec,
)
from .systems import NoiseSpec, StateSpaceSystem, Trajectory

__all__ = [
    "config_hash",
    "dump_json",
    "load_config",
    "matrix_to_list",
    "system_to_dict",
    "system_from_dict",
    "noise_to_dict",
    "noise_from_dict",
    "eigen_prior_from_dict",
    "prior_from_dict",
    "write_trajectory_csv",
    "read_trajectory_csv",
]


def config_hash(config: dict) -> str:
    """Stable short hash of a JSON-serializable config."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def dump_json(obj: dict, path: Path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def matrix_to_list(M) -> list:
    return np.asarray(M, dtype=float).tolist()


def system_to_dict(sys: StateSpaceSystem) -> dict:
    return {
        "A": matrix_to_list(sys.A),
        "B": matrix_to_list(sys.B),
        "C": matrix_to_list(sys.C),
        "D": matrix_to_list(sys.D),
        "d_x": sys.d_x,
        "d_u": sys.d_u,
        "d_y": sys.d_y,
    }


def system_from_dict(d: dict) -> StateSpaceSystem:
    return StateSpaceSystem(
        A=np.asarray(d["A"], dtype=float),
        B=np.asarray(d["B"], dtype=float),
        C=np.asarray(d["C"], dtype=float),
        D=np.asarray(d["D"], dtype=float),
    )


def noise_to_dict(noise: NoiseSpec) -> dict:
    out = {
        "sigma_state": noise.sigma_state,
        "sigma_obs": noise.sigma_obs,
        "P0": matrix_to_list(noise.P0),
    }
    if noise.Sigma is not None:
        out["Sigma"] = matrix_to_list(noise.Sigma)
    return out


def noise_from_dict(d: dict, d_x: int) -> NoiseSpec:
    P0 = np.asarray(d["P0"], dtype=float) if "P0" in d else np.eye(d_x)
    Sigma = np.asarray(d["Sigma"], dtype=float) if "Sigma" in d else None
    return NoiseSpec(
        sigma_state=float(d.get("sigma_state", 0.3)),
        sigma_obs=float(d.get("sigma_obs", 0.5)),
        P0=P0,
        Sigma=Sigma,
    )


def canonical_from_dict(d: dict) -> CanonicalSiso:
    return CanonicalSiso(
        a=np.asarray(d["a"], dtype=float),
        b=np.asarray(d["b"], dtype=float),
        d0=float(d.get("d0", 0.0)),
    )


def eigen_prior_from_dict(d: dict) -> EigenPriorSpec:
    try:
        kind = EigenPriorKind(d["kind"])
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"invalid eigen prior spec: {d}") from exc
    return EigenPriorSpec(
        kind=kind,
        n=int(d["n"]),
        lo=float(d.get("lo", 0.0)),
        hi=float(d.get("hi", 0.9)),
    )


def prior_from_dict(d: dict) -> ParamPriorSpec:
    noise_d = d.get("noise_prior", {"kind": "fixed"})
    try:
        noise_kind = NoisePriorKind(noise_d.get("kind", "fixed"))
    except ValueError as exc:
        raise ConfigError(f"invalid noise prior {noise_d}") from exc
    return ParamPriorSpec(
        eigen=eigen_prior_from_dict(d["eigen"]),
        b_std=float(d.get("b_std", 1.0)),
        d0_std=float(d.get("d0_std", 1.0)),
        noise_prior=NoisePriorSpec(kind=noise_kind, scale=float(noise_d.get("scale", 1.0))),
        infer_sigma_state=bool(d.get("infer_sigma_state", False)),
        infer_sigma_obs=bool(d.get("infer_sigma_obs", False)),
    )


def _fmt(x: float) -> str:
    return repr(float(x))


def write_trajectory_csv(path, traj: Trajectory, meta: dict):
    """CSV columns t,u,y[,x1..x_dx]; latent states include x_0 shifted to t."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    d_x = traj.x.shape[1] if traj.x is not None else 0
    header = ["t", "u", "y"] + [f"x{i + 1}" for i in range(d_x)]
    lines = ["# " + " ".join(f"{k}={v}" for k, v in sorted(meta.items()))]
    lines.append(",".join(header))
    for t in range(traj.T):
        row = [str(t + 1), _fmt(traj.u[t, 0]), _fmt(traj.y[t, 0])]
        if traj.x is not None:
            row += [_fmt(v) for v in traj.x[t + 1]]
        lines.append(",".join(row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_trajectory_csv(path) -> Trajectory:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    lines = [ln for ln in lines if not ln.startswith("#")]
    if not lines:
        raise ConfigError(f"empty trajectory file {path}")
    header = lines[0].split(",")
    if header[:3] != ["t", "u", "y"]:
        raise ConfigError(f"unexpected trajectory header {header}")
    rows = [ln.split(",") for ln in lines[1:]]
    u = np.array([float(r[1]) for r in rows])
    y = np.array([float(r[2]) for r in rows])
    return Trajectory(u=u, y=y)


def write_samples_csv(path, samples, meta: dict):
    """Draw matrix as chain,iter,<param names>,log_post,divergent."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = samples.names()
    lines = ["# " + " ".join(f"{k}={v}" for k, v in sorted(meta.items()))]
    lines.append(",".join(["chain", "iter"] + names + ["log_post", "divergent"]))
    for c in range(samples.n_chains):
        for i in range(samples.n_kept):
            row = [str(c), str(i)]
            row += [_fmt(v) for v in samples.draws[c, i]]
            row.append(_fmt(samples.log_post[c, i]))
            row.append(str(int(samples.divergent[c, i])))
            lines.append(",".join(row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_samples_csv(path):
    """Returns (draws (m, n, dim), log_post (m, n), divergent, names)."""
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    lines = [ln for ln in lines if not ln.startswith("#")]
    header = lines[0].split(",")
    if header[:2] != ["chain", "iter"] or header[-2:] != ["log_post", "divergent"]:
        raise ConfigError(f"unexpected samples header in {path}")
    names = header[2:-2]
    chains: dict = {}
    for ln in lines[1:]:
        parts = ln.split(",")
        c = int(parts[0])
        chains.setdefault(c, []).append(
            [float(v) for v in parts[2 : 2 + len(names)]]
            + [float(parts[-2]), float(parts[-1])]
        )
    keys = sorted(chains)
    n = min(len(chains[c]) for c in keys)
    raw = np.array([chains[c][:n] for c in keys])
    draws = raw[:, :, : len(names)]
    log_post = raw[:, :, len(names)]
    divergent = raw[:, :, len(names) + 1].astype(bool)
    return draws, log_post, divergent, names
