"""Experiment configuration files.

Format::

    # comment
    [experiment]
    experiment = fgr
    seed = 42
    output_dir = runs/fgr
    M = 201
    v = 0.01
    coupling 3 k 0.01 0.0      # models only: explicit per-level coupling

Keys are strict: unknown keys, malformed numbers and out-of-range values are
all reported together with their line numbers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .exceptions import ConfigError, ZenoDecayError
from .stochastic import MASK64, MODES, POLICIES

EXPERIMENTS = ("qze", "compound", "ensemble", "fgr", "channels", "lineshape", "contrast")


def _int_list(text):
    vals = [int(float(p)) for p in text.replace(",", " ").split()]
    for p, v in zip(text.replace(",", " ").split(), vals):
        if float(p) != v:
            raise ValueError(p)
    return vals


def _uint64(text):
    v = int(text, 0)
    if not 0 <= v <= MASK64:
        raise ValueError(text)
    return v


def _int(text):
    f = float(text)
    if f != int(f):
        raise ValueError(text)
    return int(f)


# name -> (parser, default, check, message)
_pos = (lambda v: v > 0, "must be positive")
_nonneg = (lambda v: v >= 0, "must be non-negative")
_any = (lambda v: True, "")


def _key(parser, default, check=_any):
    return (parser, default, check[0], check[1])


_MODEL_KEYS = {
    "E_i": _key(float, 0.0),
    "W": _key(float, 2.0, _pos),
    "M": _key(_int, 201, _pos),
    "hbar": _key(float, 1.0, _pos),
    "v": _key(float, None),
}

SCHEMAS = {
    "qze": {
        "dim": _key(_int, 8, (lambda v: v >= 2, "must be >= 2")),
        "rank": _key(_int, 4, _pos),
        "n_cases": _key(_int, 100, _pos),
        "t_max": _key(float, 10.0, _pos),
        "steps": _key(_int, 1_000_000, _pos),
        "n_times": _key(_int, 11, (lambda v: v >= 2, "must be >= 2")),
    },
    "compound": {
        "g": _key(float, 0.25),
        "t": _key(float, 4.0, _pos),
        "hbar": _key(float, 1.0, _pos),
        "n_values": _key(_int_list, [10, 100, 1000, 10_000, 100_000, 1_000_000],
                          (lambda v: len(v) > 0 and all(n > 0 for n in v)
                           and all(b > a for a, b in zip(v, v[1:])), "must be positive and ascending")),
    },
    "ensemble": {
        "dim": _key(_int, 2, (lambda v: v >= 2, "must be >= 2")),
        "rank": _key(_int, 1, _pos),
        "mode": _key(str, "drift", (lambda v: v in MODES, f"must be one of {MODES}")),
        "gamma": _key(float, 0.2, _nonneg),
        "update_policy": _key(str, "luders", (lambda v: v in POLICIES, f"must be one of {POLICIES}")),
        "h_scale": _key(float, 0.0, _nonneg),
        "hbar": _key(float, 1.0, _pos),
        "t": _key(float, 1.0, _pos),
        "steps": _key(_int, 1000, _pos),
        "n_traj": _key(_int, 2000, (lambda v: v >= 2, "must be >= 2")),
        "fit_t_min": _key(float, None, _nonneg),
        "fit_t_max": _key(float, None, _pos),
    },
    "fgr": {
        **_MODEL_KEYS,
        "t_max": _key(float, 60.0, _pos),
        "n_times": _key(_int, 601, (lambda v: v >= 2, "must be >= 2")),
        "fit_t_min": _key(float, 5.0, _nonneg),
        "fit_t_max": _key(float, 40.0, _pos),
    },
    "channels": {
        **_MODEL_KEYS,
        "M": _key(_int, 402, _pos),
        "v_k": _key(float, 0.01),
        "v_l": _key(float, 0.02),
        "t_max": _key(float, 40.0, _pos),
        "n_times": _key(_int, 401, (lambda v: v >= 2, "must be >= 2")),
    },
    "lineshape": {
        **_MODEL_KEYS,
        "t": _key(float, 60.0, _nonneg),
    },
    "contrast": {
        **_MODEL_KEYS,
        "t_max": _key(float, 60.0, _pos),
        "n_times": _key(_int, 601, (lambda v: v >= 2, "must be >= 2")),
    },
}

MODEL_EXPERIMENTS = ("fgr", "channels", "lineshape", "contrast")


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    seed: int = 0
    output_dir: str = "out"
    params: dict = field(default_factory=dict)
    couplings: tuple = ()  # (m, channel, complex) from `coupling` lines

    def echo(self) -> dict:
        out = {"experiment": self.experiment, "seed": self.seed, "output_dir": self.output_dir}
        out.update({k: self.params[k] for k in sorted(self.params)})
        if self.couplings:
            out["couplings"] = [[m, c, [v.real, v.imag]] for m, c, v in self.couplings]
        return out


def default_config(experiment, seed=0, output_dir="out") -> ExperimentConfig:
    if experiment not in SCHEMAS:
        raise ConfigError(f"unknown experiment {experiment!r}; expected one of {EXPERIMENTS}")
    params = {k: s[1] for k, s in SCHEMAS[experiment].items()}
    cfg = ExperimentConfig(experiment, seed, output_dir, params)
    validate(cfg)
    return cfg


def parse_config(text, experiment=None) -> ExperimentConfig:
    """Parse and fully validate a configuration; raises :class:`ConfigError` listing every problem.

    ``experiment`` supplies the experiment name when the file omits it.
    """
    errors = []
    raw = {}
    lines_of = {}
    couplings = []
    seen_header = False
    for ln, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            if line != "[experiment]":
                errors.append((ln, f"unknown section {line}"))
            elif seen_header:
                errors.append((ln, "duplicate [experiment] header"))
            seen_header = True
            continue
        if not seen_header:
            errors.append((ln, "content before the [experiment] header"))
            continue
        if line.split()[0] == "coupling":
            parts = line.split()
            try:
                if len(parts) != 5:
                    raise ValueError
                couplings.append((ln, int(parts[1]), parts[2], complex(float(parts[3]), float(parts[4]))))
            except ValueError:
                errors.append((ln, "expected 'coupling m channel v_re v_im'"))
            continue
        if "=" not in line:
            errors.append((ln, f"expected 'key = value', got {line!r}"))
            continue
        key, value = (p.strip() for p in line.split("=", 1))
        if key in raw:
            errors.append((ln, f"duplicate key {key!r}"))
            continue
        raw[key] = value
        lines_of[key] = ln
    if not seen_header:
        errors.append((None, "missing [experiment] header"))

    name = raw.pop("experiment", experiment)
    if name is None:
        errors.append((None, "missing required key 'experiment'"))
        raise ConfigError(errors)
    if experiment is not None and name != experiment:
        errors.append((lines_of.get("experiment"), f"config is for {name!r}, not {experiment!r}"))
    if name not in SCHEMAS:
        errors.append((lines_of.get("experiment"), f"unknown experiment {name!r}; expected one of {EXPERIMENTS}"))
        raise ConfigError(errors)

    seed = 0
    if "seed" in raw:
        try:
            seed = _uint64(raw.pop("seed"))
        except ValueError:
            errors.append((lines_of["seed"], "seed must be an unsigned 64-bit integer"))
    output_dir = raw.pop("output_dir", "out")

    schema = SCHEMAS[name]
    params = {k: s[1] for k, s in schema.items()}
    for key, value in raw.items():
        ln = lines_of[key]
        if key not in schema:
            errors.append((ln, f"unknown key {key!r} for experiment {name!r}"))
            continue
        parser, _, check, msg = schema[key]
        try:
            parsed = parser(value)
        except (ValueError, TypeError):
            errors.append((ln, f"malformed value for {key!r}: {value!r}"))
            continue
        if not check(parsed):
            errors.append((ln, f"{key} = {value} {msg}"))
            continue
        params[key] = parsed
    if couplings and name not in MODEL_EXPERIMENTS:
        errors.append((couplings[0][0], f"coupling lines are not accepted by experiment {name!r}"))
    if errors:
        raise ConfigError(errors)
    cfg = ExperimentConfig(name, seed, output_dir, params, tuple((m, c, v) for _, m, c, v in couplings))
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig):
    """Check cross-key constraints by building the owning module's objects."""
    from . import experiments

    try:
        experiments.prepare(cfg)
    except ConfigError:
        raise
    except ZenoDecayError as exc:
        raise ConfigError([(None, str(exc))]) from exc
