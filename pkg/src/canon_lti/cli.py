"""Config-driven command line for reproducible experiments.

Subcommands: simulate, infer, fim, hokalman, experiment, diagnose.  JSON
configs are schema-validated on load; bulk numerics go to CSV and metadata
to JSON, each embedding the config hash and tool version.  Exit codes:
0 success, 2 schema error, 3 numerical failure, 4 non-convergence under
--strict.
"""

from __future__ import annotations

import argparse
import os
import sys as _sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .canonical import CanonicalSiso, canonical_to_statespace, to_controller_form
from .exceptions import CanonLtiError, ConfigError
from .fisher import (
    bvm_report,
    ellipsoid_log_volume,
    fim_kalman,
    fim_noiseless,
    fim_numeric_expected,
    fim_for_layout,
    standard_form_fim,
)
from .hokalman import HoKalmanConfig, estimate_markov, hke_in_canonical, ho_kalman
from .inference import SamplerConfig, point_estimates, pushforward_qoi, sample_posterior
from .params import ParamLayout, ParamMode
from .priors import EigenPriorSpec, ParamPriorSpec
from .serialize import (
    canonical_from_dict,
    config_hash,
    dump_json,
    eigen_prior_from_dict,
    load_config,
    matrix_to_list,
    noise_from_dict,
    noise_to_dict,
    prior_from_dict,
    read_samples_csv,
    read_trajectory_csv,
    system_from_dict,
    system_to_dict,
    write_samples_csv,
    write_trajectory_csv,
)
from .sysgen import balanced_system, random_stable_system
from .systems import (
    NoiseSpec,
    StateSpaceSystem,
    Trajectory,
    hankel_matrix,
    simulate,
)
from .diagnostics import diagnostics as _diag_op

EXIT_OK = 0
EXIT_SCHEMA = 2
EXIT_NUMERICAL = 3
EXIT_NONCONVERGED = 4

_EIGEN_PRIOR_SCHEMA = {
    "type": "object",
    "required": ["kind", "n"],
    "properties": {
        "kind": {
            "enum": [
                "restricted_real",
                "uniform_real",
                "polar_uniform",
                "uniform_stable_coeffs",
            ]
        },
        "n": {"type": "integer", "minimum": 1},
        "lo": {"type": "number"},
        "hi": {"type": "number"},
    },
}

_PRIOR_SCHEMA = {
    "type": "object",
    "required": ["eigen"],
    "properties": {
        "eigen": _EIGEN_PRIOR_SCHEMA,
        "b_std": {"type": "number", "exclusiveMinimum": 0},
        "d0_std": {"type": "number", "exclusiveMinimum": 0},
        "noise_prior": {
            "type": "object",
            "properties": {
                "kind": {"enum": ["fixed", "half_cauchy", "half_normal"]},
                "scale": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "infer_sigma_state": {"type": "boolean"},
        "infer_sigma_obs": {"type": "boolean"},
    },
}

_SYSTEM_SCHEMA = {
    "type": "object",
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["canonical", "matrices", "random", "balanced"]},
        "a": {"type": "array", "items": {"type": "number"}},
        "b": {"type": "array", "items": {"type": "number"}},
        "d0": {"type": "number"},
        "A": {"type": "array"},
        "B": {"type": "array"},
        "C": {"type": "array"},
        "D": {"type": "array"},
        "d_x": {"type": "integer", "minimum": 1},
        "n": {"type": "integer", "minimum": 2},
        "eigen_prior": _EIGEN_PRIOR_SCHEMA,
        "seed": {"type": "integer", "minimum": 0},
    },
}

_NOISE_SCHEMA = {
    "type": "object",
    "properties": {
        "sigma_state": {"type": "number", "minimum": 0},
        "sigma_obs": {"type": "number", "exclusiveMinimum": 0},
        "P0": {"type": "array"},
    },
}

_INPUT_SCHEMA = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["iid_gaussian", "impulse"]},
        "std": {"type": "number", "exclusiveMinimum": 0},
    },
}

_SAMPLER_SCHEMA = {
    "type": "object",
    "properties": {
        "n_chains": {"type": "integer", "minimum": 1},
        "n_steps": {"type": "integer", "minimum": 2},
        "n_warmup": {"type": "integer", "minimum": 1},
        "target_accept": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "max_tree_depth": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
    },
}

_SIMULATE_SCHEMA = {
    "type": "object",
    "required": ["system", "T"],
    "properties": {
        "system": _SYSTEM_SCHEMA,
        "noise": _NOISE_SCHEMA,
        "T": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "input": _INPUT_SCHEMA,
        "pin_x0": {"type": "boolean"},
    },
}

_INFER_SCHEMA = {
    "type": "object",
    "required": ["d_x"],
    "properties": {
        "trajectory": {"type": "string"},
        "simulate": _SIMULATE_SCHEMA,
        "mode": {"enum": ["canonical", "standard"]},
        "d_x": {"type": "integer", "minimum": 1},
        "include_d0": {"type": "boolean"},
        "prior": _PRIOR_SCHEMA,
        "sampler": _SAMPLER_SCHEMA,
        "noise": _NOISE_SCHEMA,
        "truth": {"type": "object"},
        "hankel_p": {"type": "integer", "minimum": 1},
        "hankel_q": {"type": "integer", "minimum": 1},
    },
}

_FIM_SCHEMA = {
    "type": "object",
    "required": ["system", "T"],
    "properties": {
        "system": _SYSTEM_SCHEMA,
        "noise": _NOISE_SCHEMA,
        "T": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "input": _INPUT_SCHEMA,
        "methods": {
            "type": "array",
            "items": {"enum": ["noiseless", "kalman", "numeric"]},
        },
        "M": {"type": "integer", "minimum": 2},
        "include_d0": {"type": "boolean"},
        "mode": {"enum": ["canonical", "standard"]},
        "confidence": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "samples": {"type": "string"},
        "truth": {"type": "object"},
    },
}

_HOKALMAN_SCHEMA = {
    "type": "object",
    "required": ["d_x"],
    "properties": {
        "trajectory": {"type": "string"},
        "simulate": _SIMULATE_SCHEMA,
        "d_x": {"type": "integer", "minimum": 1},
        "p": {"type": "integer", "minimum": 1},
        "q": {"type": "integer", "minimum": 1},
    },
}

_EXPERIMENT_SCHEMA = {
    "type": "object",
    "required": ["n_systems", "T_grid", "priors"],
    "properties": {
        "n_systems": {"type": "integer", "minimum": 1},
        "d_x": {"type": "integer", "minimum": 1},
        "T_grid": {"type": "array", "items": {"type": "integer", "minimum": 1}},
        "priors": {"type": "object", "minProperties": 1},
        "methods": {
            "type": "array",
            "items": {"enum": ["pme", "map", "hke"]},
        },
        "noise": _NOISE_SCHEMA,
        "sampler": _SAMPLER_SCHEMA,
        "seed": {"type": "integer", "minimum": 0},
        "truth_prior": _EIGEN_PRIOR_SCHEMA,
        "hankel_p": {"type": "integer", "minimum": 1},
        "hankel_q": {"type": "integer", "minimum": 1},
    },
}

_DIAGNOSE_SCHEMA = {
    "type": "object",
    "required": ["samples"],
    "properties": {"samples": {"type": "string"}},
}


def _validate(config: dict, schema: dict):
    try:
        jsonschema.validate(config, schema)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config field {path}: {exc.message}") from exc


def _meta(config: dict) -> dict:
    return {"config_hash": config_hash(config), "version": __version__}


def _realize_system(spec: dict, default_noise: dict):
    kind = spec["kind"]
    if kind == "canonical":
        c = canonical_from_dict(spec)
        sys = canonical_to_statespace(c)
    elif kind == "matrices":
        sys = system_from_dict(spec)
    elif kind == "balanced":
        sys = balanced_system(int(spec["n"]))
    elif kind == "random":
        d_x = int(spec["d_x"])
        prior = (
            eigen_prior_from_dict(spec["eigen_prior"])
            if "eigen_prior" in spec
            else EigenPriorSpec.polar_uniform(d_x)
        )
        sys, _, _ = random_stable_system(d_x, prior, seed=int(spec.get("seed", 0)))
    else:
        raise ConfigError(f"unknown system kind {kind}")
    noise = noise_from_dict(default_noise, sys.d_x)
    return sys, noise


def _make_input(input_spec: dict, T: int, rng) -> np.ndarray:
    kind = input_spec.get("kind", "iid_gaussian")
    if kind == "impulse":
        u = np.zeros(T)
        u[0] = 1.0
        return u
    std = float(input_spec.get("std", 1.0))
    return std * rng.standard_normal(T)


def cmd_simulate(config: dict, out: Path) -> int:
    _validate(config, _SIMULATE_SCHEMA)
    sys, noise = _realize_system(config["system"], config.get("noise", {}))
    T = int(config["T"])
    seed = int(config.get("seed", 0))
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(1,)))
    u = _make_input(config.get("input", {}), T, rng)
    x0 = np.zeros(sys.d_x) if config.get("pin_x0", False) else None
    traj = simulate(sys, noise, u, seed=np.random.SeedSequence(entropy=seed, spawn_key=(2,)), x0=x0)
    meta = _meta(config)
    write_trajectory_csv(out / "trajectory.csv", traj, meta)
    dump_json(
        {
            "system": system_to_dict(sys),
            "noise": noise_to_dict(noise),
            "seed": seed,
            "T": T,
            **meta,
        },
        out / "system.json",
    )
    return EXIT_OK


def _load_or_simulate_traj(config: dict, out: Path):
    if "trajectory" in config:
        return read_trajectory_csv(config["trajectory"]), None, None
    if "simulate" in config:
        sim = config["simulate"]
        _validate(sim, _SIMULATE_SCHEMA)
        sys, noise = _realize_system(sim["system"], sim.get("noise", {}))
        seed = int(sim.get("seed", 0))
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(1,)))
        u = _make_input(sim.get("input", {}), int(sim["T"]), rng)
        x0 = np.zeros(sys.d_x) if sim.get("pin_x0", False) else None
        traj = simulate(
            sys, noise, u, seed=np.random.SeedSequence(entropy=seed, spawn_key=(2,)), x0=x0
        )
        return traj, sys, noise
    raise ConfigError("config must provide either 'trajectory' or 'simulate'")


def _truth_canonical(truth_spec: dict):
    if "a" in truth_spec:
        return canonical_from_dict(truth_spec)
    sys = system_from_dict(truth_spec)
    c, _ = to_controller_form(sys)
    return c


def cmd_infer(config: dict, out: Path, strict=False, allow_standard=False, jobs=None) -> int:
    _validate(config, _INFER_SCHEMA)
    mode_name = config.get("mode", "canonical")
    if mode_name == "standard" and not allow_standard:
        raise ConfigError(
            "standard-mode inference is not identifiable; pass --allow-standard "
            "to acknowledge"
        )
    traj, sim_sys, sim_noise = _load_or_simulate_traj(config, out)
    d_x = int(config["d_x"])
    noise_block = config.get("noise", config.get("simulate", {}).get("noise", {}))
    noise = noise_from_dict(noise_block, d_x)
    prior = (
        prior_from_dict(config["prior"])
        if "prior" in config
        else ParamPriorSpec(eigen=EigenPriorSpec.uniform_stable_coeffs(d_x))
    )
    layout = ParamLayout(
        mode=ParamMode(mode_name),
        d_x=d_x,
        include_d0=bool(config.get("include_d0", False)),
        infer_sigma_state=prior.infer_sigma_state,
        infer_sigma_obs=prior.infer_sigma_obs,
        sigma_state=noise.sigma_state,
        sigma_obs=noise.sigma_obs,
        P0=noise.P0,
    )
    s = config.get("sampler", {})
    cfg = SamplerConfig(
        n_chains=int(s.get("n_chains", 4)),
        n_steps=int(s.get("n_steps", 20_000)),
        n_warmup=int(s.get("n_warmup", 5_000)),
        target_accept=float(s.get("target_accept", 0.8)),
        max_tree_depth=int(s.get("max_tree_depth", 10)),
        seed=int(s.get("seed", 0)),
    )
    samples = sample_posterior(cfg, prior, traj, layout, jobs=jobs)
    meta = _meta(config)
    write_samples_csv(out / "samples.csv", samples, meta)
    pme, map_v = point_estimates(samples)
    names = samples.names()
    summary = {
        "parameters": names,
        "pme": {k: v for k, v in zip(names, pme.tolist())},
        "map": {k: v for k, v in zip(names, map_v.tolist())},
        "divergences": samples.divergence_count.tolist(),
        "flagged": samples.flagged,
        "mode": mode_name,
        **meta,
    }
    if samples.ess is not None:
        summary["ess"] = {k: v for k, v in zip(names, samples.ess.tolist())}
        summary["rhat"] = {k: v for k, v in zip(names, samples.rhat.tolist())}
    eig = pushforward_qoi(samples, "eigenvalues")
    summary["eigenvalue_pushforward"] = {
        "mean_real": eig.real.mean(axis=0).tolist(),
        "mean_imag": eig.imag.mean(axis=0).tolist(),
        "mean_modulus": np.abs(eig).mean(axis=0).tolist(),
    }
    if "truth" in config:
        p = int(config.get("hankel_p", 2 * d_x))
        q = int(config.get("hankel_q", 2 * d_x))
        truth_c = _truth_canonical(config["truth"])
        truth_sys = canonical_to_statespace(truth_c)
        H_true = hankel_matrix(truth_sys, p, q)
        for label, vec in (("pme", pme), ("map", map_v)):
            sys_hat, _ = layout.decode(vec)
            H_hat = hankel_matrix(sys_hat, p, q)
            summary[f"hankel_error_{label}"] = float(
                np.linalg.norm(H_hat - H_true, "fro")
            )
        if layout.mode is ParamMode.CANONICAL:
            truth_vec = layout.encode_canonical(truth_c)
            summary["param_mse_pme"] = float(np.mean((pme - truth_vec) ** 2))
            summary["param_mse_map"] = float(np.mean((map_v - truth_vec) ** 2))
    dump_json(summary, out / "summary.json")
    if samples.rhat is not None and np.any(samples.rhat > 1.1):
        summary["converged"] = False
        dump_json(summary, out / "summary.json")
        if strict:
            return EXIT_NONCONVERGED
    return EXIT_OK


def _fim_to_dict(F, confidence):
    vol = ellipsoid_log_volume(F, confidence)
    return {
        "matrix": matrix_to_list(F.matrix),
        "method": F.method,
        "T": F.T,
        "eval_point": F.eval_point.tolist(),
        "log_ellipsoid_volume": vol.log_volume if np.isfinite(vol.log_volume) else "inf",
        "singular": vol.singular,
        "null_count": vol.null_count,
    }


def cmd_fim(config: dict, out: Path) -> int:
    _validate(config, _FIM_SCHEMA)
    sys, noise = _realize_system(config["system"], config.get("noise", {}))
    T = int(config["T"])
    seed = int(config.get("seed", 0))
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(1,)))
    u = _make_input(config.get("input", {}), T, rng)
    include_d0 = bool(config.get("include_d0", False))
    confidence = float(config.get("confidence", 0.95))
    mode = config.get("mode", "canonical")
    methods = config.get("methods", ["kalman"])
    meta = _meta(config)
    report: dict = {"T": T, "mode": mode, **meta}
    if mode == "standard":
        F = standard_form_fim(sys, noise, u)
        report["fim"] = {"standard": _fim_to_dict(F, confidence)}
        dump_json(report, out / "fim.json")
        return EXIT_OK
    c, _ = to_controller_form(sys)
    layout = ParamLayout(
        mode=ParamMode.CANONICAL,
        d_x=sys.d_x,
        include_d0=include_d0,
        sigma_state=noise.sigma_state,
        sigma_obs=noise.sigma_obs,
        P0=noise.P0,
    )
    theta = layout.encode_canonical(c)
    fims = {}
    if "noiseless" in methods:
        fims["noiseless"] = fim_noiseless(c, u, noise.sigma_obs, include_d0=include_d0)
    if "kalman" in methods:
        fims["kalman"] = fim_kalman(c, u, noise, include_d0=include_d0)
    if "numeric" in methods:
        fims["numeric"] = fim_numeric_expected(
            theta,
            layout,
            sys,
            noise,
            u,
            M=int(config.get("M", 100)),
            seed=seed,
        )
    report["fim"] = {k: _fim_to_dict(F, confidence) for k, F in fims.items()}
    vols = {
        k: ellipsoid_log_volume(F, confidence) for k, F in fims.items()
    }
    finite = {k: v.log_volume for k, v in vols.items() if not v.singular}
    if len(finite) >= 2:
        ks = sorted(finite)
        report["log_volume_ratios"] = {
            f"{k1}_vs_{k2}": finite[k1] - finite[k2]
            for i, k1 in enumerate(ks)
            for k2 in ks[i + 1 :]
        }
    if "samples" in config:
        draws, log_post, divergent, names = read_samples_csv(config["samples"])
        from .inference import PosteriorSamples

        samples = PosteriorSamples(
            draws=draws,
            log_post=log_post,
            divergent=divergent,
            warmup_len=0,
            layout=layout,
        )
        F_ref = fims.get("kalman") or next(iter(fims.values()))
        truth_vec = None
        if "truth" in config:
            truth_vec = layout.encode_canonical(_truth_canonical(config["truth"]))
        rep = bvm_report(samples, F_ref, truth=truth_vec)
        report["bvm"] = {
            "log_volume_ratio": rep.log_volume_ratio,
            "log_det_ratio": rep.log_det_ratio,
            "dim": rep.dim,
        }
        if rep.z_scores is not None:
            report["bvm"]["z_scores"] = rep.z_scores.tolist()
            report["bvm"]["mahalanobis"] = rep.mahalanobis
    dump_json(report, out / "fim.json")
    return EXIT_OK


def cmd_hokalman(config: dict, out: Path) -> int:
    _validate(config, _HOKALMAN_SCHEMA)
    traj, _, _ = _load_or_simulate_traj(config, out)
    d_x = int(config["d_x"])
    cfg = HoKalmanConfig(
        p=int(config.get("p", 2 * d_x)), q=int(config.get("q", 2 * d_x)), d_x=d_x
    )
    markov = estimate_markov(traj, cfg.p + cfg.q)
    sys_hat = ho_kalman(markov, cfg)
    result = {
        "system": system_to_dict(sys_hat),
        "markov_estimates": markov.tolist(),
        "p": cfg.p,
        "q": cfg.q,
        **_meta(config),
    }
    try:
        c = hke_in_canonical(traj, cfg)
        result["canonical"] = {"a": c.a.tolist(), "b": c.b.tolist(), "d0": c.d0}
    except CanonLtiError as exc:
        result["canonical_error"] = str(exc)
    dump_json(result, out / "hokalman.json")
    return EXIT_OK


def _experiment_cell(args):
    (sys_idx, T, prior_name, prior_dict, cfg) = args
    d_x = cfg["d_x"]
    truth_prior = cfg["truth_prior"]
    seed_sys = np.random.SeedSequence(entropy=cfg["seed"], spawn_key=(10, sys_idx))
    sys_true, _, _ = random_stable_system(
        d_x, truth_prior, seed=np.random.default_rng(seed_sys)
    )
    noise = noise_from_dict(cfg["noise"], d_x)
    c_true, _ = to_controller_form(sys_true)
    data_seed = np.random.SeedSequence(entropy=cfg["seed"], spawn_key=(20, sys_idx, T))
    rng_u = np.random.default_rng(
        np.random.SeedSequence(entropy=cfg["seed"], spawn_key=(21, sys_idx, T))
    )
    u = rng_u.standard_normal(T)
    traj = simulate(sys_true, noise, u, seed=data_seed)
    p, q = cfg["hankel_p"], cfg["hankel_q"]
    H_true = hankel_matrix(sys_true, p, q)
    prior = prior_from_dict(prior_dict)
    layout = ParamLayout(
        mode=ParamMode.CANONICAL,
        d_x=d_x,
        sigma_state=noise.sigma_state,
        sigma_obs=noise.sigma_obs,
        P0=noise.P0,
    )
    truth_vec = layout.encode_canonical(c_true)
    s = cfg["sampler"]
    chain_seed = int(
        np.random.SeedSequence(
            entropy=cfg["seed"], spawn_key=(30, sys_idx, T, cfg["prior_ids"][prior_name])
        ).generate_state(1)[0]
        % (2**31)
    )
    sampler_cfg = SamplerConfig(
        n_chains=int(s.get("n_chains", 2)),
        n_steps=int(s.get("n_steps", 2000)),
        n_warmup=int(s.get("n_warmup", 500)),
        target_accept=float(s.get("target_accept", 0.8)),
        max_tree_depth=int(s.get("max_tree_depth", 10)),
        seed=chain_seed,
    )
    rows = []
    failures = []
    try:
        samples = sample_posterior(sampler_cfg, prior, traj, layout, jobs=1)
        pme, map_v = point_estimates(samples)
        for method, vec in (("pme", pme), ("map", map_v)):
            if method not in cfg["methods"]:
                continue
            sys_hat, _ = layout.decode(vec)
            rows.append(
                {
                    "system": sys_idx,
                    "T": T,
                    "prior": prior_name,
                    "method": method,
                    "param_mse": float(np.mean((vec - truth_vec) ** 2)),
                    "hankel_error": float(
                        np.linalg.norm(hankel_matrix(sys_hat, p, q) - H_true, "fro")
                    ),
                    "max_rhat": float(np.max(samples.rhat))
                    if samples.rhat is not None
                    else float("nan"),
                }
            )
    except CanonLtiError as exc:
        failures.append(
            {"system": sys_idx, "T": T, "prior": prior_name, "error": str(exc)}
        )
    if "hke" in cfg["methods"] and cfg["prior_ids"][prior_name] == 0:
        try:
            hk_cfg = HoKalmanConfig.default(d_x)
            c_hat = hke_in_canonical(traj, hk_cfg)
            vec = layout.encode_canonical(c_hat)
            sys_hat = canonical_to_statespace(c_hat)
            rows.append(
                {
                    "system": sys_idx,
                    "T": T,
                    "prior": "none",
                    "method": "hke",
                    "param_mse": float(np.mean((vec - truth_vec) ** 2)),
                    "hankel_error": float(
                        np.linalg.norm(hankel_matrix(sys_hat, p, q) - H_true, "fro")
                    ),
                    "max_rhat": float("nan"),
                }
            )
        except (CanonLtiError, np.linalg.LinAlgError) as exc:
            failures.append(
                {"system": sys_idx, "T": T, "prior": "none", "error": str(exc)}
            )
    return rows, failures


def cmd_experiment(config: dict, out: Path, jobs=1) -> int:
    _validate(config, _EXPERIMENT_SCHEMA)
    d_x = int(config.get("d_x", 2))
    cfg = {
        "d_x": d_x,
        "seed": int(config.get("seed", 0)),
        "noise": config.get("noise", {"sigma_state": 0.0, "sigma_obs": 0.5}),
        "sampler": config.get("sampler", {}),
        "methods": config.get("methods", ["pme", "map", "hke"]),
        "truth_prior": (
            eigen_prior_from_dict(config["truth_prior"])
            if "truth_prior" in config
            else EigenPriorSpec.restricted_real(d_x)
        ),
        "hankel_p": int(config.get("hankel_p", 2 * d_x)),
        "hankel_q": int(config.get("hankel_q", 2 * d_x)),
        "prior_ids": {name: i for i, name in enumerate(sorted(config["priors"]))},
    }
    cells = [
        (sys_idx, T, prior_name, config["priors"][prior_name], cfg)
        for sys_idx in range(int(config["n_systems"]))
        for T in config["T_grid"]
        for prior_name in sorted(config["priors"])
    ]
    if jobs and jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outputs = list(pool.map(_experiment_cell, cells))
    else:
        outputs = [_experiment_cell(cell) for cell in cells]
    rows = [r for rows_i, _ in outputs for r in rows_i]
    failures = [f for _, fails in outputs for f in fails]
    rows.sort(key=lambda r: (r["system"], r["T"], r["prior"], r["method"]))
    meta = _meta(config)
    header = ["system", "T", "prior", "method", "param_mse", "hankel_error", "max_rhat"]
    lines = ["# " + " ".join(f"{k}={v}" for k, v in sorted(meta.items()))]
    lines.append(",".join(header))
    for r in rows:
        lines.append(
            ",".join(
                [
                    str(r["system"]),
                    str(r["T"]),
                    r["prior"],
                    r["method"],
                    repr(r["param_mse"]),
                    repr(r["hankel_error"]),
                    repr(r["max_rhat"]),
                ]
            )
        )
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "experiment.csv", "w") as fh:
        fh.write("\n".join(lines) + "\n")
    summary: dict = {"failures": failures, **meta}
    for metric in ("param_mse", "hankel_error"):
        agg: dict = {}
        for r in rows:
            key = f"{r['method']}|{r['prior']}|T={r['T']}"
            agg.setdefault(key, []).append(r[metric])
        summary[metric] = {
            k: {
                "median": float(np.median(v)),
                "p5": float(np.percentile(v, 5)),
                "p95": float(np.percentile(v, 95)),
                "count": len(v),
            }
            for k, v in sorted(agg.items())
        }
    dump_json(summary, out / "summary.json")
    return EXIT_OK


def cmd_diagnose(config: dict, out: Path, strict=False) -> int:
    _validate(config, _DIAGNOSE_SCHEMA)
    draws, log_post, divergent, names = read_samples_csv(config["samples"])
    ess, rhat = _diag_op(draws)
    report = {
        "parameters": names,
        "ess": {k: float(v) for k, v in zip(names, ess)},
        "rhat": {k: float(v) for k, v in zip(names, rhat)},
        "divergences": divergent.sum(axis=1).astype(int).tolist(),
        **_meta(config),
    }
    dump_json(report, out / "diagnostics.json")
    if strict and np.any(rhat > 1.1):
        return EXIT_NONCONVERGED
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="canon-lti",
        description="Bayesian identification of SISO LTI systems in canonical form",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("simulate", "infer", "fim", "hokalman", "experiment", "diagnose"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON config path")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--jobs", type=int, default=1, help="parallel grid cells")
        p.add_argument("--strict", action="store_true", help="exit 4 on R-hat > 1.1")
        p.add_argument(
            "--allow-standard",
            action="store_true",
            help="acknowledge non-identifiability of standard-mode inference",
        )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    jobs = args.jobs
    env_jobs = os.environ.get("CANON_LTI_THREADS")
    if env_jobs is not None:
        try:
            jobs = max(1, int(env_jobs))
        except ValueError:
            print(f"ignoring invalid CANON_LTI_THREADS={env_jobs!r}", file=_sys.stderr)
    out = Path(args.out)
    try:
        config = load_config(args.config)
        if args.seed is not None:
            config["seed"] = args.seed
            if "sampler" in config and isinstance(config["sampler"], dict):
                config["sampler"]["seed"] = args.seed
        if args.command == "simulate":
            return cmd_simulate(config, out)
        if args.command == "infer":
            return cmd_infer(
                config,
                out,
                strict=args.strict,
                allow_standard=args.allow_standard,
                jobs=jobs,
            )
        if args.command == "fim":
            return cmd_fim(config, out)
        if args.command == "hokalman":
            return cmd_hokalman(config, out)
        if args.command == "experiment":
            return cmd_experiment(config, out, jobs=jobs)
        if args.command == "diagnose":
            return cmd_diagnose(config, out, strict=args.strict)
        raise ConfigError(f"unknown command {args.command}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=_sys.stderr)
        return EXIT_SCHEMA
    except (CanonLtiError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=_sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    raise SystemExit(main())
