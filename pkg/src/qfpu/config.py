"""Declarative run configuration in INI form.

Every parameter of a run lives in one document with the sections
``[chain]``, ``[sampler]``, ``[thermostat]``, ``[rpmd]``, ``[estimators]``
and ``[oracle]``.  ``dump_config`` writes every field, including defaults, so
``parse_config(dump_config(c)) == c`` and a written config suffices to repeat
a run bit for bit.

Empty index lists in ``[rpmd]`` and ``[estimators]`` select the boundary
particles and the central particle (N+1)//2.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, fields, replace

from .model import ChainSpec
from .pimd import SamplerConfig
from .rpmd import observable_from_label
from .thermostat import NHCParams

CONFIG_VERSION = 1


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RPMDSettings:
    observables: tuple = ()
    epsilon: float = 0.1
    n_points: int = 64
    t_max: float | None = None
    dt: float | None = None
    zeta_particles: tuple = ()


@dataclass(frozen=True)
class EstimatorSettings:
    subsets: tuple = ()
    bins: int | None = None
    kappa_max: float = 10.0
    n_kappa: int = 101
    force_particles: tuple = ()
    bead_select: int = 1


@dataclass(frozen=True)
class OracleSettings:
    temperatures: tuple = (0.01, 0.05, 0.1, 0.25, 0.5, 1.0, 2.0, 5.0)
    q_min: float = -3.0
    q_max: float = 3.0
    n_q: int = 241
    t_max: float = 10.0
    n_t: int = 201


@dataclass(frozen=True)
class RunConfig:
    sampler: SamplerConfig
    rpmd: RPMDSettings = field(default_factory=RPMDSettings)
    estimators: EstimatorSettings = field(default_factory=EstimatorSettings)
    oracle: OracleSettings = field(default_factory=OracleSettings)

    @property
    def chain(self) -> ChainSpec:
        return self.sampler.chain

    # empty index lists select the walls and the central particle
    @property
    def center(self) -> int:
        return (self.chain.n_particles + 1) // 2

    def observables(self) -> tuple:
        return self.rpmd.observables or (f"q{self.center}",)

    def zeta_particles(self) -> tuple:
        return self.rpmd.zeta_particles or (self.center,)

    def subsets(self) -> tuple:
        N = self.chain.n_particles
        return self.estimators.subsets or tuple(sorted({(1,), (self.center,), (N,)}))

    def force_particles(self) -> tuple:
        return self.estimators.force_particles or tuple(sorted({1, self.chain.n_particles}))

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, sampler=replace(self.sampler, seed=int(seed)))


# scalar codecs

def _fmt(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(" ".join(str(x) for x in item) if isinstance(item, tuple) else _fmt(item) for item in v)
    return str(v)


def _int(text):
    return int(text)


def _float(text):
    return float(text)


def _opt(conv):
    def f(text):
        return None if text.strip().lower() == "none" else conv(text)
    return f


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _list(conv):
    def f(text):
        return tuple(conv(x.strip()) for x in text.split(",") if x.strip())
    return f


def _subsets(text):
    return tuple(tuple(int(i) for i in part.split()) for part in text.split(",") if part.strip())


_CHAIN = {"N": ("n_particles", _int), "alpha": ("alpha", _float), "beta": ("beta", _opt(_float)),
          "allow_unequal": ("allow_unequal", _bool)}
_SAMPLER = {
    "T": _float, "P": _int, "dt": _opt(_float), "n_burn": _opt(_int), "stride": _opt(_int),
    "n_samples": _int, "seed": _int, "thermostat": _bool, "pilot_steps": _int, "tune_steps": _int,
    "drift_tol": _float, "tune_safety": _float, "max_halvings": _int,
}
_THERMO = {"M": _int, "tau_tilde": _opt(_float), "n_respa": _int, "order": _int}
_RPMD = {"observables": _list(str), "epsilon": _float, "n_points": _int, "t_max": _opt(_float),
         "dt": _opt(_float), "zeta_particles": _list(int)}
_EST = {"subsets": _subsets, "bins": _opt(_int), "kappa_max": _float, "n_kappa": _int,
        "force_particles": _list(int), "bead_select": _int}
_ORACLE = {"temperatures": _list(float), "q_min": _float, "q_max": _float, "n_q": _int,
           "t_max": _float, "n_t": _int}
_REQUIRED = {("chain", "N"), ("sampler", "T")}


def _section(cp, name, schema):
    out = {}
    if not cp.has_section(name):
        return out
    for key, raw in cp.items(name):
        if key not in schema:
            raise ConfigError(f"[{name}] {key}: unknown field")
        conv = schema[key]
        try:
            out[key] = conv(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[{name}] {key}: cannot parse {raw!r} ({exc})") from None
    return out


def parse_config(text: str) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    known = {"meta", "chain", "sampler", "thermostat", "rpmd", "estimators", "oracle"}
    for s in cp.sections():
        if s not in known:
            raise ConfigError(f"[{s}]: unknown section")
    for sec, key in sorted(_REQUIRED):
        if not cp.has_option(sec, key):
            raise ConfigError(f"[{sec}] {key}: required field missing")
    if cp.has_section("meta"):
        v = cp.get("meta", "version", fallback=str(CONFIG_VERSION))
        if v.strip() != str(CONFIG_VERSION):
            raise ConfigError(f"[meta] version: unsupported config version {v}")

    chain_raw = _section(cp, "chain", {k: c for k, (_, c) in _CHAIN.items()})
    chain_kw = {_CHAIN[k][0]: v for k, v in chain_raw.items()}
    try:
        chain = ChainSpec(**chain_kw)
    except ValueError as exc:
        raise ConfigError(f"[chain] {exc}") from None
    try:
        nhc = NHCParams(**_section(cp, "thermostat", _THERMO))
    except ValueError as exc:
        raise ConfigError(f"[thermostat] {exc}") from None
    try:
        sampler = SamplerConfig(chain=chain, nhc=nhc, **_section(cp, "sampler", _SAMPLER))
    except ValueError as exc:
        raise ConfigError(f"[sampler] {exc}") from None

    rpmd = RPMDSettings(**_section(cp, "rpmd", _RPMD))
    est = EstimatorSettings(**_section(cp, "estimators", _EST))
    oracle = OracleSettings(**_section(cp, "oracle", _ORACLE))
    cfg = RunConfig(sampler, rpmd, est, oracle)
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    N = cfg.chain.n_particles
    for label in cfg.rpmd.observables:
        try:
            observable_from_label(label, N)
        except ValueError as exc:
            raise ConfigError(f"[rpmd] observables: {exc}") from None
    if not cfg.rpmd.epsilon > 0:
        raise ConfigError("[rpmd] epsilon: must be positive")
    if cfg.rpmd.n_points < 2:
        raise ConfigError("[rpmd] n_points: need at least 2 time points")
    for j in cfg.rpmd.zeta_particles:
        if not 1 <= j <= N:
            raise ConfigError(f"[rpmd] zeta_particles: index {j} out of range 1..{N}")
    for J in cfg.estimators.subsets:
        if not J or len(J) > 3 or any(not 1 <= j <= N for j in J):
            raise ConfigError(f"[estimators] subsets: invalid subset {J} for N={N}")
    for j in cfg.estimators.force_particles:
        if not 1 <= j <= N:
            raise ConfigError(f"[estimators] force_particles: index {j} out of range 1..{N}")
    if not 1 <= cfg.estimators.bead_select <= cfg.sampler.P:
        raise ConfigError(f"[estimators] bead_select: must lie in 1..{cfg.sampler.P}")
    if cfg.estimators.bins is not None and cfg.estimators.bins < 1:
        raise ConfigError("[estimators] bins: must be positive")
    if any(not t > 0 for t in cfg.oracle.temperatures):
        raise ConfigError("[oracle] temperatures: must be positive")
    if not cfg.oracle.q_max > cfg.oracle.q_min:
        raise ConfigError("[oracle] q_max: must exceed q_min")


def dump_config(cfg: RunConfig) -> str:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp["meta"] = {"version": str(CONFIG_VERSION)}
    c = cfg.chain
    cp["chain"] = {"N": _fmt(c.n_particles), "alpha": _fmt(c.alpha), "beta": _fmt(c.beta),
                   "allow_unequal": _fmt(c.allow_unequal)}
    cp["sampler"] = {k: _fmt(getattr(cfg.sampler, k)) for k in _SAMPLER}
    cp["thermostat"] = {k: _fmt(getattr(cfg.sampler.nhc, k)) for k in _THERMO}
    for name, obj in (("rpmd", cfg.rpmd), ("estimators", cfg.estimators), ("oracle", cfg.oracle)):
        cp[name] = {f.name: _fmt(getattr(obj, f.name)) for f in fields(obj)}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
