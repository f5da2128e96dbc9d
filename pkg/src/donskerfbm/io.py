"""Files: CSV schemas, JSON manifests, digests and the run-directory cache.

Floats are written with 17 significant digits so that a CSV read back
reproduces the in-memory array bit for bit; that is what lets a resumed
study produce the same digests as an uninterrupted one.
"""

import configparser
import csv
import hashlib
import json
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .errors import DomainError

SCHEMA_VERSION = 1
FLOAT_FMT = "%.17g"


class ConfigError(DomainError):
    """Invalid configuration, reported with exit code 2."""


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def content_hash(obj, n=16):
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()[:n]


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2, allow_nan=False)
        fh.write("\n")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def _fmt(x):
    return FLOAT_FMT % x


def write_table(path, header, columns):
    """Columns of equal length, ints written as ints, floats at full precision."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        cols = [np.asarray(c) for c in columns]
        text = [c.astype(str) if np.issubdtype(c.dtype, np.integer) else [_fmt(v) for v in c]
                for c in cols]
        w.writerows(zip(*text))


def write_trajectory(path, t, values):
    """(t, X1..Xd) rows."""
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    header = ["t"] + [f"X{i + 1}" for i in range(values.shape[1])]
    write_table(path, header, [t] + [values[:, i] for i in range(values.shape[1])])


def write_ensemble(path, sample_ids, times, y):
    """(sample_id, time, y1..yn) long-format rows for y of shape (S, n_t, n)."""
    y = np.asarray(y, dtype=float)
    S, nt, n = y.shape
    ids = np.repeat(np.asarray(sample_ids, dtype=np.int64), nt)
    tt = np.tile(np.asarray(times, dtype=float), S)
    flat = y.reshape(S * nt, n)
    write_table(path, ["sample_id", "time"] + [f"y{k + 1}" for k in range(n)],
                [ids, tt] + [flat[:, k] for k in range(n)])


def read_ensemble(path):
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        rows = list(r)
    if header[:2] != ["sample_id", "time"]:
        raise DomainError(f"{path}: not an ensemble file")
    ids = np.array([int(row[0]) for row in rows])
    times = np.array([float(row[1]) for row in rows])
    vals = np.array([[float(v) for v in row[2:]] for row in rows])
    nt = int(np.sum(ids == ids[0]))
    S = len(ids) // nt
    return ids[::nt], times[:nt], vals.reshape(S, nt, -1)


def write_study_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["eps", "statistic", "value", "p", "seed"])
        for r in rows:
            w.writerow([_fmt(r["eps"]), r["statistic"], _fmt(r["value"]),
                        "" if r["p"] is None else _fmt(r["p"]), r["seed"]])


@dataclass
class ExperimentManifest:
    command: str
    config: dict
    seed: int
    outputs: dict = field(default_factory=dict)  # file name -> sha256
    created: str = None
    finished: str = None
    tool_version: str = __version__
    schema_version: int = SCHEMA_VERSION
    partial: dict = field(default_factory=dict)  # resumable pieces, name -> sha256

    def run_id(self):
        """Content hash of what determines the outputs (not timestamps or digests)."""
        return content_hash({"command": self.command, "config": self.config, "seed": self.seed,
                             "tool_version": self.tool_version, "schema_version": self.schema_version})

    def to_dict(self):
        return {
            "schema_version": self.schema_version,
            "tool_version": self.tool_version,
            "command": self.command,
            "config": self.config,
            "seed": self.seed,
            "run_id": self.run_id(),
            "created": self.created,
            "finished": self.finished,
            "outputs": dict(sorted(self.outputs.items())),
            "partial": dict(sorted(self.partial.items())),
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ConfigError(f"manifest schema_version {d.get('schema_version')} is not {SCHEMA_VERSION}")
        return cls(d["command"], d["config"], d["seed"], d.get("outputs", {}), d.get("created"),
                   d.get("finished"), d.get("tool_version", __version__), d["schema_version"],
                   d.get("partial", {}))


def now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


class RunDirectory:
    """runs/<run_id>/ holding outputs plus manifest.json.

    Re-opening an existing directory keeps its recorded partial results, so
    an interrupted command picks up where it stopped.
    """

    def __init__(self, root, manifest):
        self.manifest = manifest
        self.path = os.path.join(root, manifest.run_id())
        os.makedirs(self.path, exist_ok=True)
        mpath = self.manifest_path
        if os.path.exists(mpath):
            old = ExperimentManifest.from_dict(read_json(mpath))
            manifest.partial.update(old.partial)
            manifest.created = old.created
        if manifest.created is None:
            manifest.created = now()
        self.save()

    @property
    def manifest_path(self):
        return os.path.join(self.path, "manifest.json")

    def file(self, name):
        return os.path.join(self.path, name)

    def record(self, name, partial=False):
        digest = sha256_file(self.file(name))
        (self.manifest.partial if partial else self.manifest.outputs)[name] = digest
        self.save()
        return digest

    def has_valid(self, name):
        p = self.file(name)
        return name in self.manifest.partial and os.path.exists(p) and \
            sha256_file(p) == self.manifest.partial[name]

    def save(self):
        write_json(self.manifest_path, self.manifest.to_dict())

    def finish(self):
        self.manifest.finished = now()
        self.save()


class EnsembleCache:
    """get/put of (S, n_t, n) ensembles as CSV partials in a run directory."""

    def __init__(self, run, times, sample0=0):
        self.run = run
        self.times = np.asarray(times, dtype=float)
        self.sample0 = sample0

    @staticmethod
    def name(key):
        return "reference.csv" if key == "reference" else f"ensemble_eps{float(key)!r}.csv"

    def get(self, key):
        name = self.name(key)
        if not self.run.has_valid(name):
            return None
        _, _, y = read_ensemble(self.run.file(name))
        return y

    def put(self, key, y):
        name = self.name(key)
        ids = np.arange(self.sample0, self.sample0 + len(y))
        write_ensemble(self.run.file(name), ids, self.times, y)
        self.run.record(name, partial=True)


# configuration -------------------------------------------------------------

DEFAULTS = {
    "run": {"seed": 7, "threads": 1, "out": "runs"},
    "noise": {"law": "rademacher", "atoms": "", "eps": 0.1, "dims": 1},
    "driver": {"H": 0.4, "classical": False},
    "simulate": {"kind": "donsker", "grid": 1024, "samples": 1},
    "fbm": {"grid": 4096, "seed": 2, "ratio": 1},
    "solver": {"preset": "scalar-linear", "substeps": 2},
    "converge": {"eps_grid": "0.3,0.2,0.1,0.05", "samples": 10000, "times": "1.0",
                 "permutations": True},
    "verify": {"n_samples": 100000, "eps_grid": "0.2,0.1,0.05", "fib_max": 30,
               "u_grid": "0.5,1,2", "max_m": 3, "chen_triples": 20},
}


def _cast(section, key, raw, default):
    try:
        if isinstance(default, bool):
            low = str(raw).strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return str(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key} = {raw!r}: expected {type(default).__name__}") from None


def load_config(path=None, overrides=()):
    """Defaults, then the INI file, then ``section.key=value`` overrides."""
    cfg = {s: dict(v) for s, v in DEFAULTS.items()}
    if path:
        cp = configparser.ConfigParser()
        cp.optionxform = str
        try:
            with open(path) as fh:
                cp.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigError(f"{path}: {exc}".replace("\n", " ")) from None
        for section in cp.sections():
            if section not in cfg:
                raise ConfigError(f"{path}: unknown section [{section}]")
            for key, raw in cp.items(section):
                if key not in cfg[section]:
                    raise ConfigError(f"{path}: unknown key {key!r} in [{section}]")
                cfg[section][key] = _cast(section, key, raw, DEFAULTS[section][key])
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        lhs, raw = item.split("=", 1)
        section, key = lhs.split(".", 1)
        if section not in cfg or key not in cfg[section]:
            raise ConfigError(f"override {item!r}: unknown setting")
        cfg[section][key] = _cast(section, key, raw, DEFAULTS[section][key])
    return cfg


def float_list(text, what):
    try:
        vals = [float(x) for x in str(text).split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"{what}: {text!r} is not a comma-separated list of numbers") from None
    if not vals:
        raise ConfigError(f"{what} is empty")
    return vals
