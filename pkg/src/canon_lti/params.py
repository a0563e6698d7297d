"""Flat parameter vectors and their fixed ordering contract.

Canonical mode packs [a (d_x), b (d_x), d0?, log_sigma_state?, log_sigma_obs?];
standard mode packs [vec(A) row-major, vec(B), vec(C), D?, noise logs].  Both
modes are SISO.  Dynamic-parameter counts are 2 d_x (+1 with feedthrough) in
canonical mode and d_x^2 + 2 d_x (+1) in standard mode.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .canonical import CanonicalForm, CanonicalSiso, canonical_to_statespace
from .exceptions import DecodeError
from .systems import NoiseSpec, StateSpaceSystem

__all__ = ["ParamMode", "ParamLayout", "ParamVector"]


class ParamMode(enum.Enum):
    CANONICAL = "canonical"
    STANDARD = "standard"


@dataclass(frozen=True)
class ParamLayout:
    """Ordering contract between flat vectors and (system, noise) pairs.

    ``sigma_state`` / ``sigma_obs`` hold the fixed noise scales used whenever
    the corresponding scale is not inferred.  ``P0`` defaults to the identity.
    """

    mode: ParamMode
    d_x: int
    include_d0: bool = False
    infer_sigma_state: bool = False
    infer_sigma_obs: bool = False
    sigma_state: float = 0.0
    sigma_obs: float = 1.0
    P0: Optional[np.ndarray] = None

    def __post_init__(self):
        P0 = np.eye(self.d_x) if self.P0 is None else np.asarray(self.P0, dtype=float)
        P0.setflags(write=False)
        object.__setattr__(self, "P0", P0)

    # -- sizes ---------------------------------------------------------
    @property
    def n_dynamic(self) -> int:
        base = 2 * self.d_x if self.mode is ParamMode.CANONICAL else self.d_x**2 + 2 * self.d_x
        return base + (1 if self.include_d0 else 0)

    @property
    def n_noise(self) -> int:
        return int(self.infer_sigma_state) + int(self.infer_sigma_obs)

    @property
    def size(self) -> int:
        return self.n_dynamic + self.n_noise

    def names(self):
        if self.mode is ParamMode.CANONICAL:
            out = [f"a{i}" for i in range(self.d_x)] + [f"b{i}" for i in range(self.d_x)]
        else:
            n = self.d_x
            out = [f"A{i}{j}" for i in range(n) for j in range(n)]
            out += [f"B{i}" for i in range(n)]
            out += [f"C{i}" for i in range(n)]
        if self.include_d0:
            out.append("d0")
        if self.infer_sigma_state:
            out.append("log_sigma_state")
        if self.infer_sigma_obs:
            out.append("log_sigma_obs")
        return out

    # -- packing -------------------------------------------------------
    def _check(self, values) -> np.ndarray:
        v = np.asarray(values, dtype=float).ravel()
        if v.size != self.size:
            raise DecodeError(f"expected {self.size} values, got {v.size}")
        if not np.all(np.isfinite(v)):
            raise DecodeError("parameter vector contains non-finite values")
        return v

    def split(self, values) -> dict:
        """Segment the flat vector per the layout contract."""
        v = self._check(values)
        n = self.d_x
        out: dict = {}
        if self.mode is ParamMode.CANONICAL:
            out["a"] = v[:n]
            out["b"] = v[n : 2 * n]
            i = 2 * n
        else:
            out["A"] = v[: n * n].reshape(n, n)
            out["B"] = v[n * n : n * n + n]
            out["C"] = v[n * n + n : n * n + 2 * n]
            i = n * n + 2 * n
        if self.include_d0:
            out["d0"] = float(v[i])
            i += 1
        if self.infer_sigma_state:
            out["ell_state"] = float(v[i])
            i += 1
        if self.infer_sigma_obs:
            out["ell_obs"] = float(v[i])
        return out

    def decode(self, values):
        """Realize the flat vector as (StateSpaceSystem, NoiseSpec)."""
        seg = self.split(values)
        sigma_state = (
            float(np.exp(seg["ell_state"])) if self.infer_sigma_state else self.sigma_state
        )
        sigma_obs = (
            float(np.exp(seg["ell_obs"])) if self.infer_sigma_obs else self.sigma_obs
        )
        noise = NoiseSpec(sigma_state=sigma_state, sigma_obs=sigma_obs, P0=self.P0)
        if self.mode is ParamMode.CANONICAL:
            c = CanonicalSiso(a=seg["a"], b=seg["b"], d0=seg.get("d0", 0.0))
            return canonical_to_statespace(c), noise
        n = self.d_x
        sys = StateSpaceSystem(
            A=seg["A"],
            B=seg["B"].reshape(n, 1),
            C=seg["C"].reshape(1, n),
            D=np.array([[seg.get("d0", 0.0)]]),
        )
        return sys, noise

    def decode_canonical(self, values) -> CanonicalSiso:
        if self.mode is not ParamMode.CANONICAL:
            raise DecodeError("layout is not in canonical mode")
        seg = self.split(values)
        return CanonicalSiso(a=seg["a"], b=seg["b"], d0=seg.get("d0", 0.0))

    def encode_canonical(self, c: CanonicalSiso, ell_state=0.0, ell_obs=0.0) -> np.ndarray:
        if self.mode is not ParamMode.CANONICAL:
            raise DecodeError("layout is not in canonical mode")
        if c.d_x != self.d_x:
            raise DecodeError(f"canonical d_x {c.d_x} does not match layout {self.d_x}")
        parts = [c.a, c.b]
        if self.include_d0:
            parts.append([c.d0])
        if self.infer_sigma_state:
            parts.append([ell_state])
        if self.infer_sigma_obs:
            parts.append([ell_obs])
        return np.concatenate([np.atleast_1d(np.asarray(p, dtype=float)) for p in parts])

    def encode_system(self, sys: StateSpaceSystem, ell_state=0.0, ell_obs=0.0) -> np.ndarray:
        if self.mode is not ParamMode.STANDARD:
            raise DecodeError("layout is not in standard mode")
        parts = [sys.A.ravel(), sys.B.ravel(), sys.C.ravel()]
        if self.include_d0:
            parts.append([float(sys.D[0, 0])])
        if self.infer_sigma_state:
            parts.append([ell_state])
        if self.infer_sigma_obs:
            parts.append([ell_obs])
        return np.concatenate([np.atleast_1d(np.asarray(p, dtype=float)) for p in parts])

    # -- derivative directions for the sensitivity filter ---------------
    def derivative_bases(self, values):
        """Dense stacks (dA, dB, dC, dD, dSigma, dGamma) per parameter.

        The noise directions depend on the current point through the log
        transform: d(sigma^2 I)/d(ell) = 2 sigma^2 I.
        """
        v = self._check(values)
        n = self.d_x
        N = self.size
        dA = np.zeros((N, n, n))
        dB = np.zeros((N, n))
        dC = np.zeros((N, n))
        dD = np.zeros(N)
        dSigma = np.zeros((N, n, n))
        dGamma = np.zeros(N)
        if self.mode is ParamMode.CANONICAL:
            for i in range(n):
                dA[i, n - 1, i] = -1.0
            for i in range(n):
                dC[n + i, i] = 1.0
            i = 2 * n
        else:
            k = 0
            for r in range(n):
                for c in range(n):
                    dA[k, r, c] = 1.0
                    k += 1
            for r in range(n):
                dB[k, r] = 1.0
                k += 1
            for r in range(n):
                dC[k, r] = 1.0
                k += 1
            i = k
        if self.include_d0:
            dD[i] = 1.0
            i += 1
        if self.infer_sigma_state:
            sig2 = float(np.exp(2.0 * v[i]))
            dSigma[i] = 2.0 * sig2 * np.eye(n)
            i += 1
        if self.infer_sigma_obs:
            sig2 = float(np.exp(2.0 * v[i]))
            dGamma[i] = 2.0 * sig2
        return dA, dB, dC, dD, dSigma, dGamma


@dataclass(frozen=True)
class ParamVector:
    """A flat parameter vector bound to its layout."""

    values: np.ndarray
    layout: ParamLayout

    def __post_init__(self):
        v = self.layout._check(self.values)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def decode(self):
        return self.layout.decode(self.values)
