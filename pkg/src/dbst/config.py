"""Experiment configuration: JSON files, shipped profiles and ``DBST_`` env overrides.

A config file is a JSON object with optional top-level keys ``profile``,
``seed`` and ``out`` plus three sections, ``data``, ``selftrain`` and
``adapt``. Keys inside a section map one-to-one onto the fields of
:class:`DataConfig`, :class:`~dbst.selftrain.SelfTrainConfig` and
:class:`AdaptConfig`. Resolution order, lowest to highest precedence:

1. field defaults
2. the named profile (``profile`` key or ``--profile``)
3. the config file itself
4. environment variables: ``DBST_SEED`` / ``DBST_OUT`` for top-level keys and
   ``DBST_<SECTION>__<KEY>`` for section keys, e.g. ``DBST_SELFTRAIN__GAMMA=0.3``.
   Values are parsed as JSON when possible and used as strings otherwise.

The selection hyperparameters listed in :data:`MANDATORY_SELFTRAIN` have no
silent default for ``selftrain`` commands: the merged profile+file+env view
must set each of them explicitly.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields
from importlib import resources

from .errors import ConfigError
from .selftrain import SelfTrainConfig

ENV_PREFIX = "DBST_"
SECTIONS = ("data", "selftrain", "adapt")
TOP_LEVEL = ("profile", "seed", "out")
MANDATORY_SELFTRAIN = (
    "gamma", "intercept", "nu", "prior_length_scale", "temperature", "T_mc", "quartile", "estimator",
)


@dataclass
class DataConfig:
    # blobs | csv | idx
    source: str = "blobs"
    # csv
    path: str | None = None
    test_path: str | None = None
    label_column: str = "label"
    # idx
    images: str | None = None
    labels: str | None = None
    test_images: str | None = None
    test_labels: str | None = None
    limit: int | None = None
    scale: float = 1.0
    # blobs
    classes: int = 2
    per_class: int = 510
    separation: float = 3.0
    dim: int = 10
    test_per_class: int = 500
    # splitting
    per_class_train: int = 5
    per_class_valid: int = 5
    standardize: bool = False
    manifest: str | None = None

    def __post_init__(self):
        if self.source not in ("blobs", "csv", "idx"):
            raise ConfigError(f"data.source must be blobs, csv or idx, got {self.source!r}")
        if self.per_class_train < 1 or self.per_class_valid < 0:
            raise ConfigError("per_class_train must be >= 1 and per_class_valid >= 0")


@dataclass
class AdaptConfig:
    # two_facet (synthetic) | csv
    source: str = "two_facet"
    d1: str | None = None
    d1_facet2: str | None = None
    d2: str | None = None
    test: str | None = None
    valid: str | None = None
    label_column: str = "label"
    k: int = 6
    per_centroid: int = 1
    n_init: int = 10
    prune: bool = True
    # score pruning on the test set itself instead of the validation set
    leaky_prune: bool = False
    # two_facet generator settings
    classes: int = 2
    modes: int = 3
    dim: int = 8
    angle: float = 30.0
    offset: float = 1.5

    def __post_init__(self):
        if self.source not in ("two_facet", "csv"):
            raise ConfigError(f"adapt.source must be two_facet or csv, got {self.source!r}")
        if self.k < 1 or self.per_centroid < 1 or self.n_init < 1:
            raise ConfigError("k, per_centroid and n_init must be >= 1")


_SECTION_TYPES = {"data": DataConfig, "selftrain": SelfTrainConfig, "adapt": AdaptConfig}


@dataclass
class ExperimentConfig:
    profile: str | None = None
    seed: int = 0
    out: str | None = None
    data: DataConfig = field(default_factory=DataConfig)
    selftrain: SelfTrainConfig = field(default_factory=SelfTrainConfig)
    adapt: AdaptConfig = field(default_factory=AdaptConfig)

    def to_dict(self):
        return {
            "profile": self.profile,
            "seed": self.seed,
            "out": self.out,
            "data": asdict(self.data),
            "selftrain": asdict(self.selftrain),
            "adapt": asdict(self.adapt),
        }

    def dumps(self):
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - set(TOP_LEVEL) - set(SECTIONS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        seed = d.get("seed", 0)
        if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
            raise ConfigError(f"seed must be a non-negative integer, got {seed!r}")
        sections = {}
        for name, typ in _SECTION_TYPES.items():
            body = dict(d.get(name) or {})
            allowed = {f.name for f in fields(typ)}
            bad = set(body) - allowed
            if bad:
                raise ConfigError(f"unknown {name} keys: {sorted(bad)}")
            if name == "selftrain":
                body["seed"] = seed
            try:
                sections[name] = typ(**body)
            except TypeError as exc:
                raise ConfigError(f"{name}: {exc}") from None
        return cls(profile=d.get("profile"), seed=seed, out=d.get("out"), **sections)


def profile_names():
    root = resources.files("dbst") / "profiles"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_profile(name):
    path = resources.files("dbst") / "profiles" / f"{name}.json"
    if not path.is_file():
        raise ConfigError(f"unknown profile {name!r}; available: {', '.join(profile_names())}")
    return json.loads(path.read_text())


def _merge(base, over):
    out = {k: (dict(v) if isinstance(v, dict) else v) for k, v in base.items()}
    for k, v in over.items():
        if k in SECTIONS and isinstance(v, dict):
            out[k] = {**out.get(k, {}), **v}
        else:
            out[k] = v
    return out


def _parse_env_value(raw):
    try:
        return json.loads(raw)
    except ValueError:
        return raw


def env_overrides(env):
    """Config fragment built from ``DBST_*`` variables; variables naming no config key are ignored."""
    out = {}
    for name, raw in sorted(env.items()):
        if not name.startswith(ENV_PREFIX):
            continue
        rest = name[len(ENV_PREFIX):].lower()
        if "__" in rest:
            section, key = rest.split("__", 1)
            if section not in SECTIONS:
                raise ConfigError(f"{name}: unknown section {section!r}")
            # env var names are upper case; recover the field's real spelling
            match = [f.name for f in fields(_SECTION_TYPES[section]) if f.name.lower() == key]
            if not match:
                raise ConfigError(f"{name}: unknown {section} key {key!r}")
            out.setdefault(section, {})[match[0]] = _parse_env_value(raw)
        elif rest in TOP_LEVEL:
            out[rest] = _parse_env_value(raw)
    return out


def resolve(file_dict=None, profile=None, env=None, require_selftrain=False):
    """Merge defaults, profile, file and environment into an :class:`ExperimentConfig`."""
    file_dict = dict(file_dict or {})
    env = os.environ if env is None else env
    env_part = env_overrides(env)
    name = profile or env_part.get("profile") or file_dict.get("profile")
    merged = load_profile(name) if name else {}
    merged = _merge(merged, file_dict)
    merged = _merge(merged, env_part)
    if name:
        merged["profile"] = name
    if require_selftrain:
        given = merged.get("selftrain") or {}
        missing = [k for k in MANDATORY_SELFTRAIN if k not in given]
        if missing:
            raise ConfigError(f"selftrain keys must be set explicitly: {', '.join(missing)}")
    return ExperimentConfig.from_dict(merged)


def load_config(path=None, profile=None, env=None, require_selftrain=False):
    file_dict = {}
    if path is not None:
        try:
            with open(path) as f:
                file_dict = json.load(f)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(file_dict, dict):
            raise ConfigError(f"{path}: top level must be a JSON object")
    return resolve(file_dict, profile, env, require_selftrain)
