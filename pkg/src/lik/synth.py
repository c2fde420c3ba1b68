"""Generative additive influence model and synthetic panels.

Responses are ``Y = S K + E`` where ``S[t, j] = g(X[t, j])``, ``K`` is the Gram
matrix of latent entity positions under a kernel and ``E`` is Gaussian noise.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from ._rng import make_rng
from .errors import InvalidDimensionError
from .matio import read_matrix, write_matrix

# Monte-Carlo settings used to center (and optionally standardize) signal functions.
MC_DRAWS = 1_000_000
MC_SEED = 20_171_031

KERNEL_KINDS = ("gaussian", "imq", "inner")


@dataclass(frozen=True)
class KernelSpec:
    kind: str
    sigma: float = 1.0
    c: float = 1.0
    alpha: float = 1.0

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "gaussian" and not self.sigma > 0:
            raise ValueError("Gaussian kernel needs sigma > 0")
        if self.kind == "imq" and not (self.c > 0 and self.alpha > 0):
            raise ValueError("IMQ kernel needs c > 0 and alpha > 0")

    @classmethod
    def gaussian(cls, sigma=1.0):
        return cls("gaussian", sigma=float(sigma))

    @classmethod
    def imq(cls, c=1.0, alpha=1.0):
        return cls("imq", c=float(c), alpha=float(alpha))

    @classmethod
    def inner_product(cls):
        return cls("inner")

    @classmethod
    def parse(cls, text):
        """Parse ``gaussian:1.0``, ``imq:1.0:0.5`` or ``inner``."""
        parts = text.strip().lower().split(":")
        if parts[0] == "gaussian":
            return cls.gaussian(float(parts[1]) if len(parts) > 1 else 1.0)
        if parts[0] == "imq":
            c = float(parts[1]) if len(parts) > 1 else 1.0
            alpha = float(parts[2]) if len(parts) > 2 else 1.0
            return cls.imq(c, alpha)
        if parts[0] in ("inner", "inner_product"):
            return cls.inner_product()
        raise ValueError(f"cannot parse kernel spec {text!r}")

    def describe(self):
        if self.kind == "gaussian":
            return f"gaussian:{self.sigma!r}"
        if self.kind == "imq":
            return f"imq:{self.c!r}:{self.alpha!r}"
        return "inner"

    @property
    def k_max(self):
        if self.kind == "gaussian":
            return 1.0
        if self.kind == "imq":
            return self.c ** (-2.0 * self.alpha)
        return math.inf

    def _from_sqdist(self, sq):
        if self.kind == "gaussian":
            return np.exp(-sq / self.sigma**2)
        return (self.c**2 + sq) ** (-self.alpha)


def kernel_eval(kernel: KernelSpec, a, b) -> float:
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if a.shape != b.shape:
        raise InvalidDimensionError(f"kernel arguments differ in length: {a.shape} vs {b.shape}")
    if kernel.kind == "inner":
        return float(a @ b)
    diff = a - b
    return float(kernel._from_sqdist(diff @ diff))


def gram_matrix(Z, kernel: KernelSpec) -> np.ndarray:
    """Pairwise kernel matrix ``K[i, j] = kernel(Z[i], Z[j])``."""
    Z = np.asarray(Z, dtype=float)
    if Z.ndim != 2:
        raise InvalidDimensionError(f"Z must be d x r, got shape {Z.shape}")
    if np.any(np.abs(Z) > 1.0):
        raise InvalidDimensionError("latent positions must lie in [-1, 1]^r")
    G = Z @ Z.T
    if kernel.kind == "inner":
        K = G
    else:
        sq = np.add.outer(np.diag(G), np.diag(G)) - 2.0 * G
        np.maximum(sq, 0.0, out=sq)
        np.fill_diagonal(sq, 0.0)
        K = kernel._from_sqdist(sq)
    return 0.5 * (K + K.T)


def sample_latent_positions(d: int, r: int, seed: int) -> np.ndarray:
    if d < 2 or r < 1:
        raise InvalidDimensionError(f"need d >= 2 and r >= 1, got d={d}, r={r}")
    return make_rng(seed).uniform(-1.0, 1.0, size=(d, r))


@dataclass(frozen=True, eq=False)
class SignalFn:
    """Scalar signal ``g: [-1, 1]^k -> R``.

    Build instances with :meth:`piecewise_constant`, :meth:`polynomial`,
    :meth:`sinusoid` or :meth:`zero`; those constructors center ``g`` by
    subtracting a Monte-Carlo estimate of its mean under uniform features.
    Evaluation is ``scale * (raw(x) - offset)``.
    """

    kind: str
    k: int
    params: dict = field(default_factory=dict)
    offset: float = 0.0
    scale: float = 1.0

    # -- constructors -------------------------------------------------
    @classmethod
    def piecewise_constant(cls, breaks, values, k=1, axis=0, center=True):
        breaks = np.asarray(breaks, dtype=float)
        values = np.asarray(values, dtype=float)
        if breaks.ndim != 1 or len(breaks) != len(values) + 1:
            raise InvalidDimensionError("need len(breaks) == len(values) + 1")
        if np.any(np.diff(breaks) <= 0):
            raise ValueError("breaks must be strictly increasing")
        if not 0 <= axis < k:
            raise InvalidDimensionError(f"axis {axis} outside feature range [0, {k})")
        fn = cls("piecewise", k, {"breaks": breaks, "values": values, "axis": axis})
        return fn.centered() if center else fn

    @classmethod
    def polynomial(cls, coeffs, interactions=(), center=True):
        """Additive polynomial ``sum_f sum_p coeffs[f, p] x_f**p`` plus
        pairwise terms ``coef * x_a * x_b`` for each ``(a, b, coef)``."""
        coeffs = np.atleast_2d(np.asarray(coeffs, dtype=float))
        k = coeffs.shape[0]
        inter = tuple((int(a), int(b), float(w)) for a, b, w in interactions)
        for a, b, _ in inter:
            if not (0 <= a < k and 0 <= b < k):
                raise InvalidDimensionError("interaction index outside feature range")
        fn = cls("polynomial", k, {"coeffs": coeffs, "interactions": inter})
        return fn.centered() if center else fn

    @classmethod
    def sinusoid(cls, freq, amp, center=True):
        freq = np.atleast_1d(np.asarray(freq, dtype=float))
        amp = np.atleast_1d(np.asarray(amp, dtype=float))
        if freq.shape != amp.shape or freq.ndim != 1:
            raise InvalidDimensionError("freq and amp must be matching vectors")
        fn = cls("sinusoid", len(freq), {"freq": freq, "amp": amp})
        return fn.centered() if center else fn

    @classmethod
    def zero(cls, k=1):
        return cls("polynomial", k, {"coeffs": np.zeros((k, 1)), "interactions": ()})

    # -- evaluation ---------------------------------------------------
    def raw(self, X):
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.k:
            raise InvalidDimensionError(f"signal expects {self.k} features, got {X.shape[-1]}")
        p = self.params
        if self.kind == "piecewise":
            x = np.clip(X[..., p["axis"]], -1.0, 1.0)
            cell = np.searchsorted(p["breaks"][1:-1], x, side="right")
            return p["values"][cell]
        if self.kind == "polynomial":
            out = np.zeros(X.shape[:-1])
            for f in range(self.k):
                # Horner on the reversed coefficient row.
                acc = np.zeros(X.shape[:-1])
                for c in p["coeffs"][f, ::-1]:
                    acc = acc * X[..., f] + c
                out += acc
            for a, b, w in p["interactions"]:
                out += w * X[..., a] * X[..., b]
            return out
        if self.kind == "sinusoid":
            return np.sin(np.pi * p["freq"] * X) @ p["amp"]
        raise ValueError(f"unknown signal kind {self.kind!r}")

    def __call__(self, X):
        return self.scale * (self.raw(X) - self.offset)

    # -- normalisation -------------------------------------------------
    def _mc_draws(self, seed=MC_SEED, draws=MC_DRAWS):
        return make_rng(seed).uniform(-1.0, 1.0, size=(draws, self.k))

    def centered(self):
        """Copy with the Monte-Carlo mean of the raw signal removed."""
        mean = float(self.raw(self._mc_draws()).mean())
        return dataclasses.replace(self, offset=mean)

    def standardized(self):
        """Copy rescaled to unit Monte-Carlo variance (keeps centering)."""
        vals = self.raw(self._mc_draws()) - self.offset
        sd = float(vals.std())
        if sd == 0.0:
            raise ValueError("cannot standardize a constant signal")
        return dataclasses.replace(self, scale=1.0 / sd)

    def mc_moments(self, seed=MC_SEED + 1, draws=MC_DRAWS):
        """(mean, std) of ``g`` under uniform features."""
        vals = self(self._mc_draws(seed, draws))
        return float(vals.mean()), float(vals.std())


@dataclass(frozen=True, eq=False)
class LatentModel:
    d: int
    r: int
    Z: np.ndarray
    kernel: KernelSpec
    g_true: SignalFn
    sigma_xi: float
    seed: int

    def __post_init__(self):
        if self.d < 2 or self.r < 1:
            raise InvalidDimensionError(f"need d >= 2 and r >= 1, got d={self.d}, r={self.r}")
        if self.Z.shape != (self.d, self.r):
            raise InvalidDimensionError(f"Z has shape {self.Z.shape}, expected {(self.d, self.r)}")
        if np.any(np.abs(self.Z) > 1.0):
            raise InvalidDimensionError("latent positions must lie in [-1, 1]^r")
        if self.sigma_xi < 0:
            raise ValueError("sigma_xi must be >= 0")

    @classmethod
    def create(cls, d, r, kernel, g_true, sigma_xi, seed):
        Z = sample_latent_positions(d, r, seed)
        return cls(d, r, Z, kernel, g_true, float(sigma_xi), int(seed))

    @cached_property
    def K(self):
        return gram_matrix(self.Z, self.kernel)


@dataclass(frozen=True, eq=False)
class PanelData:
    X: np.ndarray  # n x d x k
    Y: np.ndarray  # n x d
    S: np.ndarray | None = None
    E: np.ndarray | None = None

    def __post_init__(self):
        if self.X.ndim != 3 or self.Y.ndim != 2 or self.X.shape[:2] != self.Y.shape:
            raise InvalidDimensionError(
                f"inconsistent panel shapes X={self.X.shape}, Y={self.Y.shape}"
            )
        for name in ("S", "E"):
            M = getattr(self, name)
            if M is not None and M.shape != self.Y.shape:
                raise InvalidDimensionError(f"{name} has shape {M.shape}, expected {self.Y.shape}")

    @property
    def n(self):
        return self.Y.shape[0]

    @property
    def d(self):
        return self.Y.shape[1]

    @property
    def k(self):
        return self.X.shape[2]

    def rows(self, start, stop):
        sl = slice(start, stop)
        return PanelData(
            self.X[sl], self.Y[sl],
            None if self.S is None else self.S[sl],
            None if self.E is None else self.E[sl],
        )


def generate_panel(model: LatentModel, n: int, k: int | None = None, seed: int = 0) -> PanelData:
    """Draw ``n`` periods from the additive influence model."""
    k = model.g_true.k if k is None else k
    if k != model.g_true.k:
        raise InvalidDimensionError(f"signal takes {model.g_true.k} features, asked for k={k}")
    if n < 1:
        raise InvalidDimensionError("n must be >= 1")
    rng = make_rng(seed)
    X = rng.uniform(-1.0, 1.0, size=(n, model.d, k))
    E = rng.normal(0.0, 1.0, size=(n, model.d)) * model.sigma_xi
    S = model.g_true(X)
    Y = S @ model.K + E
    return PanelData(X, Y, S, E)


# -- serialization ------------------------------------------------------

META_KEYS = ("d", "n", "k", "r", "kernel", "sigma_xi", "seed")


def write_panel(out_dir, panel: PanelData, model: LatentModel, seed: int):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_matrix(out / "Y.csv", panel.Y)
    for j in range(panel.k):
        write_matrix(out / f"X_f{j}.csv", panel.X[:, :, j])
    if panel.S is not None:
        write_matrix(out / "S.csv", panel.S)
    write_matrix(out / "K_true.csv", model.K)
    meta = {
        "d": panel.d, "n": panel.n, "k": panel.k, "r": model.r,
        "kernel": model.kernel.describe(), "sigma_xi": repr(float(model.sigma_xi)), "seed": seed,
    }
    (out / "meta.txt").write_text("".join(f"{key}={meta[key]}\n" for key in META_KEYS))


def read_meta(panel_dir):
    meta = {}
    for line in (Path(panel_dir) / "meta.txt").read_text().splitlines():
        if line.strip():
            key, _, value = line.partition("=")
            meta[key.strip()] = value.strip()
    return meta


def read_panel(panel_dir) -> PanelData:
    """Load ``Y.csv`` and the ``X_f<j>.csv`` slices (plus ``S.csv`` when present)."""
    src = Path(panel_dir)
    Y = read_matrix(src / "Y.csv")
    slices = []
    j = 0
    while (src / f"X_f{j}.csv").exists():
        slices.append(read_matrix(src / f"X_f{j}.csv"))
        j += 1
    if not slices:
        raise FileNotFoundError(f"no feature files X_f0.csv in {src}")
    X = np.stack(slices, axis=-1)
    S = read_matrix(src / "S.csv") if (src / "S.csv").exists() else None
    return PanelData(X, Y, S)
