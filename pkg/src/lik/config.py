"""Plain ``key = value`` experiment configuration.

Lines starting with ``#`` are comments. Optional ``[block]`` headers group
keys; a key under a header must belong to that block. Unknown keys and
out-of-range values are rejected when the file is parsed.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields

import numpy as np

from .synth import KernelSpec, LatentModel, SignalFn

BLOCKS = {
    "model": ("d", "r", "kernel", "sigma", "imq_c", "imq_alpha", "g", "g_unit_var", "sigma_xi", "snr"),
    "data": ("n_train", "n_test", "k", "seed"),
    "kestim": ("delta", "hints", "betas", "exponentiate"),
    "gest": ("ell", "c"),
    "pvel": ("eta", "rounds"),
    "eval": ("nw_lag", "quantile", "weights", "horizon"),
}
KEY_BLOCK = {key: block for block, keys in BLOCKS.items() for key in keys}


class ConfigError(ValueError):
    pass


def _bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _delta(text):
    text = str(text).strip().lower()
    return None if text == "auto" else float(text)


def _nw_lag(text):
    text = str(text).strip().lower()
    return None if text in ("auto", "") else int(text)


def _str_list(text):
    return tuple(p.strip() for p in str(text).split(",") if p.strip())


def _float_list(text):
    return tuple(float(p) for p in _str_list(text))


@dataclass(frozen=True)
class ExperimentConfig:
    # model
    d: int = 100
    r: int = 2
    kernel: str = "gaussian"
    sigma: float = 1.0
    imq_c: float = 1.0
    imq_alpha: float = 1.0
    g: str = "cubic"
    g_unit_var: bool = True
    sigma_xi: float = 1.0
    # snr > 0 overrides sigma_xi with std(S K) / sqrt(snr)
    snr: float = 0.0
    # data
    n_train: int = 1000
    n_test: int = 0
    k: int = 1
    seed: int = 0
    # kestim; delta None means auto
    delta: float | None = None
    hints: tuple = ()
    betas: tuple = ()
    exponentiate: bool = False
    # gest
    ell: int = 10
    c: float = 0.5
    # pvel
    eta: float = 0.1
    rounds: int = 50
    # eval; nw_lag None means horizon - 1
    nw_lag: int | None = None
    quantile: float = 0.2
    weights: str = ""
    horizon: int = 5

    def __post_init__(self):
        checks = [
            (self.d >= 2, "d must be >= 2"),
            (self.r >= 1, "r must be >= 1"),
            (self.kernel in ("gaussian", "imq", "inner"), f"unknown kernel {self.kernel!r}"),
            (self.sigma > 0, "sigma must be > 0"),
            (self.imq_c > 0 and self.imq_alpha > 0, "imq_c and imq_alpha must be > 0"),
            (self.sigma_xi >= 0, "sigma_xi must be >= 0"),
            (self.snr >= 0, "snr must be >= 0"),
            (self.n_train >= 1, "n_train must be >= 1"),
            (self.n_test >= 0, "n_test must be >= 0"),
            (self.k >= 1, "k must be >= 1"),
            (self.seed >= 0, "seed must be >= 0"),
            (self.delta is None or self.delta > 0, "delta must be > 0 or auto"),
            (len(self.hints) == len(self.betas), "hints and betas need equal length"),
            (self.ell >= 2, "ell must be >= 2"),
            (self.c > 0, "c must be > 0"),
            (self.eta > 0, "eta must be > 0"),
            (self.rounds >= 1, "rounds must be >= 1"),
            (self.nw_lag is None or self.nw_lag >= 0, "nw_lag must be >= 0"),
            (0 < self.quantile <= 1, "quantile must lie in (0, 1]"),
            (self.horizon >= 1, "horizon must be >= 1"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)

    @property
    def lag(self):
        return self.horizon - 1 if self.nw_lag is None else self.nw_lag

    @property
    def annualization(self):
        return 252.0 / self.horizon

    def kernel_spec(self):
        if self.kernel == "gaussian":
            return KernelSpec.gaussian(self.sigma)
        if self.kernel == "imq":
            return KernelSpec.imq(self.imq_c, self.imq_alpha)
        return KernelSpec.inner_product()

    def signal(self):
        g = parse_signal(self.g, self.k)
        if self.g_unit_var and self.g.strip().lower() != "zero":
            g = g.standardized()
        return g

    def latent_model(self):
        g = self.signal()
        model = LatentModel.create(self.d, self.r, self.kernel_spec(), g, self.sigma_xi, self.seed)
        if self.snr > 0:
            model = dataclasses.replace(model, sigma_xi=noise_for_snr(model, self.snr))
        return model

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


def noise_for_snr(model, snr):
    """Noise level giving ``var(S K) / var(E) = snr`` for iid uniform features."""
    _, g_sd = model.g_true.mc_moments()
    signal_sd = g_sd * np.linalg.norm(model.K) / np.sqrt(model.d)
    return float(signal_sd / np.sqrt(snr))


_CONVERTERS = {
    "g_unit_var": _bool, "exponentiate": _bool, "delta": _delta, "nw_lag": _nw_lag,
    "hints": _str_list, "betas": _float_list,
}


def convert_value(key, text):
    if key not in KEY_BLOCK:
        raise ConfigError(f"unknown config key {key!r}")
    if key in _CONVERTERS:
        return _CONVERTERS[key](text)
    typ = {f.name: f.type for f in fields(ExperimentConfig)}[key]
    try:
        if typ == "int":
            value = float(text)
            if value != int(value):
                raise ValueError
            return int(value)
        if typ == "float":
            return float(text)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {text!r}") from None
    return str(text).strip()


def parse_config(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    values = {}
    block = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            block = line[1:-1].strip()
            if block not in BLOCKS:
                raise ConfigError(f"line {lineno}: unknown block [{block}]")
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, _, value = (part.strip() for part in line.partition("="))
        if key not in KEY_BLOCK:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        if block is not None and KEY_BLOCK[key] != block:
            raise ConfigError(f"line {lineno}: key {key!r} does not belong in [{block}]")
        values[key] = convert_value(key, value)
    base = base or ExperimentConfig()
    try:
        return base.replace(**values)
    except ConfigError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config(fh.read())


def parse_signal(spec: str, k: int) -> SignalFn:
    """Build a (centered) signal from a short text spec.

    ``zero`` | ``cubic`` | ``demo`` | ``poly:c0,c1,..[;..]`` | ``sin:freq,amp[;..]`` |
    ``step:v1,..,vL``. Per-feature groups are separated by ``;`` and padded
    with zeros up to ``k`` features.
    """
    text = spec.strip().lower()
    name, _, arg = text.partition(":")
    if name == "zero":
        return SignalFn.zero(k)
    if name == "cubic":
        coeffs = np.zeros((k, 4))
        coeffs[0, 3] = 1.0
        return SignalFn.polynomial(coeffs)
    if name == "demo":
        # cubic, linear and interaction parts with equal variance (1/3 each)
        if k < 3:
            raise ConfigError("g = demo needs k >= 3")
        coeffs = np.zeros((k, 4))
        coeffs[0, 3] = np.sqrt(7.0 / 3.0)
        coeffs[1, 1] = 1.0
        return SignalFn.polynomial(coeffs, interactions=[(0, 2, np.sqrt(3.0))])
    groups = [g for g in arg.split(";") if g.strip()]
    if len(groups) > k:
        raise ConfigError(f"signal spec has {len(groups)} feature groups but k={k}")
    if name == "poly":
        rows = [[float(v) for v in g.split(",")] for g in groups]
        width = max(len(r) for r in rows)
        coeffs = np.zeros((k, width))
        for f, row in enumerate(rows):
            coeffs[f, : len(row)] = row
        return SignalFn.polynomial(coeffs)
    if name == "sin":
        freq = np.ones(k)
        amp = np.zeros(k)
        for f, g in enumerate(groups):
            fr, am = (float(v) for v in g.split(","))
            freq[f], amp[f] = fr, am
        return SignalFn.sinusoid(freq, amp)
    if name == "step":
        values = [float(v) for v in arg.split(",")]
        breaks = np.linspace(-1.0, 1.0, len(values) + 1)
        return SignalFn.piecewise_constant(breaks, values, k=k, axis=0)
    raise ConfigError(f"cannot parse signal spec {spec!r}")
