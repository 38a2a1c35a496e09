"""Tabular data: CSV ingestion, monthly expansion, scaling, splitting, PLI labels,
and a synthetic source/target generator with a shared latent structure.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .errors import ConfigError, DataError

log = logging.getLogger(__name__)

ROLES = ("feature", "label", "drop")
CADENCES = ("monthly", "quarterly", "annual")

# Position of each observation on a 1..12 monthly axis (period midpoints).
QUARTER_MONTHS = {1: 2.0, 2: 5.0, 3: 8.0, 4: 11.0}
ANNUAL_MONTH = 6.5


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    role: str = "feature"
    cadence: str = "monthly"

    def __post_init__(self):
        if self.role not in ROLES:
            raise ConfigError(f"column {self.name!r}: role must be one of {ROLES}, got {self.role!r}")
        if self.cadence not in CADENCES:
            raise ConfigError(f"column {self.name!r}: cadence must be one of {CADENCES}, got {self.cadence!r}")


@dataclass(frozen=True)
class Scaler:
    mean: tuple
    std: tuple

    def transform(self, x):
        return (np.asarray(x, dtype=np.float64) - np.array(self.mean)) / np.array(self.std)

    def to_dict(self):
        return {"mean": list(self.mean), "std": list(self.std)}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(float(v) for v in d["mean"]), tuple(float(v) for v in d["std"]))


@dataclass
class Dataset:
    features: np.ndarray
    targets: np.ndarray
    specs: list = field(default_factory=list)
    scaler: Scaler | None = None

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        self.targets = np.ascontiguousarray(self.targets, dtype=np.float64).ravel()
        if self.features.ndim != 2:
            raise DataError(f"features must be 2-D, got shape {self.features.shape}")
        n, d = self.features.shape
        if n < 1 or d < 1:
            raise DataError(f"dataset needs at least one row and one feature, got {self.features.shape}")
        if self.targets.shape[0] != n:
            raise DataError(f"{n} feature rows but {self.targets.shape[0]} targets")
        if not (np.all(np.isfinite(self.features)) and np.all(np.isfinite(self.targets))):
            raise DataError("dataset contains NaN or infinite values")
        if not self.specs:
            self.specs = [ColumnSpec(f"x{j}") for j in range(d)] + [ColumnSpec("y", "label")]

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def d(self):
        return self.features.shape[1]

    @property
    def feature_names(self):
        return [s.name for s in self.specs if s.role == "feature"]

    @property
    def label_name(self):
        return next(s.name for s in self.specs if s.role == "label")

    @property
    def y(self):
        return self.targets.reshape(-1, 1)

    def take(self, idx):
        return Dataset(self.features[idx], self.targets[idx], list(self.specs), self.scaler)


# --- CSV -----------------------------------------------------------------


def load_schema(path):
    """Read a JSON schema: ``{"columns": [{"name", "role", "cadence"}, ...], ...}``.

    Returns ``(specs, extras)`` where ``extras`` holds the optional keys
    ``year_column``, ``month_column`` and ``group_by`` used by monthly expansion.
    """
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    try:
        specs = [ColumnSpec(**c) for c in doc["columns"]]
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"schema {path}: malformed columns entry ({exc})") from None
    _check_specs(specs)
    extras = {k: doc[k] for k in ("year_column", "month_column", "group_by") if k in doc}
    return specs, extras


def save_schema(path, specs, **extras):
    doc = {"columns": [asdict(s) for s in specs], **extras}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)


def _check_specs(specs):
    labels = [s.name for s in specs if s.role == "label"]
    if len(labels) != 1:
        raise ConfigError(f"exactly one label column required, got {labels}")
    if not any(s.role == "feature" for s in specs):
        raise ConfigError("at least one feature column required")
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise ConfigError("duplicate column names in schema")


def read_rows(path):
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise DataError(f"{path}: empty file") from None
            rows = [r for r in reader if r]
    except FileNotFoundError:
        raise DataError(f"{path}: no such file") from None
    return [h.strip() for h in header], rows


def _parse(cell, path, row, col):
    try:
        v = float(cell)
    except ValueError:
        raise DataError(f"{path}: row {row}, column {col!r}: cannot parse {cell!r} as a number") from None
    if not math.isfinite(v):
        raise DataError(f"{path}: row {row}, column {col!r}: non-finite value {cell!r}")
    return v


def load_csv(path, specs):
    """Load feature and label columns named in ``specs``; ``drop`` columns are ignored.

    Row numbers in error messages are 1-based data rows (the header is row 0).
    """
    _check_specs(specs)
    header, rows = read_rows(path)
    missing = [s.name for s in specs if s.role != "drop" and s.name not in header]
    if missing:
        raise DataError(f"{path}: missing column(s) {missing}")
    if not rows:
        raise DataError(f"{path}: no data rows")
    idx = {name: k for k, name in enumerate(header)}
    feat = [s for s in specs if s.role == "feature"]
    label = next(s for s in specs if s.role == "label")
    x = np.empty((len(rows), len(feat)))
    y = np.empty(len(rows))
    for i, r in enumerate(rows):
        if len(r) != len(header):
            raise DataError(f"{path}: row {i + 1} has {len(r)} cells, header has {len(header)}")
        for j, s in enumerate(feat):
            x[i, j] = _parse(r[idx[s.name]], path, i + 1, s.name)
        y[i] = _parse(r[idx[label.name]], path, i + 1, label.name)
    kept = [s for s in specs if s.role != "drop"]
    return Dataset(x, y, kept)


def load_features(path, names):
    """Feature matrix for the named columns only (no label needed), e.g. for scoring."""
    header, rows = read_rows(path)
    missing = [n for n in names if n not in header]
    if missing:
        raise DataError(f"{path}: missing column(s) {missing}")
    if not rows:
        raise DataError(f"{path}: no data rows")
    idx = [header.index(n) for n in names]
    x = np.empty((len(rows), len(names)))
    for i, r in enumerate(rows):
        if len(r) != len(header):
            raise DataError(f"{path}: row {i + 1} has {len(r)} cells, header has {len(header)}")
        for j, (k, n) in enumerate(zip(idx, names)):
            x[i, j] = _parse(r[k], path, i + 1, n)
    return x


def write_csv(path, ds):
    """Write feature and label columns; floats use ``repr`` so reloading is exact."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(ds.feature_names + [ds.label_name])
        for row, t in zip(ds.features, ds.targets):
            w.writerow([repr(float(v)) for v in row] + [repr(float(t))])


# --- monthly expansion ---------------------------------------------------


def _month_position(period, cadence, year):
    if cadence == "annual":
        return (int(period) - year) * 12 + ANNUAL_MONTH
    if isinstance(period, (tuple, list)):
        py, q = int(period[0]), int(period[1])
    else:
        py, q = year, int(period)
    if q not in QUARTER_MONTHS:
        raise DataError(f"quarter must be 1..4, got {q}")
    return (py - year) * 12 + QUARTER_MONTHS[q]


def expand_to_monthly(values, cadence, year):
    """Least-squares line through coarse observations, evaluated at months 1..12 of ``year``.

    ``values`` is a list of ``(period, value)``. For ``annual`` data the period
    is a calendar year and sits at month 6.5 of that year. For ``quarterly``
    data it is a quarter 1..4 of ``year`` (or a ``(year, quarter)`` pair) and
    sits at month 2, 5, 8 or 11.
    """
    if cadence not in ("quarterly", "annual"):
        raise ConfigError(f"expand_to_monthly handles quarterly or annual data, got {cadence!r}")
    if len(values) < 2:
        raise DataError(f"need at least 2 observations to fit a line, got {len(values)}")
    t = np.array([_month_position(p, cadence, year) for p, _ in values])
    v = np.array([float(val) for _, val in values])
    tc = t - t.mean()
    denom = float(tc @ tc)
    if denom == 0.0:
        raise DataError("observations share one time position; slope is undefined")
    slope = float(tc @ (v - v.mean())) / denom
    intercept = v.mean() - slope * t.mean()
    months = np.arange(1, 13, dtype=np.float64)
    return intercept + slope * months


def expand_table(header, rows, specs, year_column, month_column, group_by=()):
    """Replace quarterly/annual columns of a monthly table by their fitted monthly values.

    Coarse cells hold the value observed for their period (repeated or blank on
    other months of that period). Quarterly columns are fitted within each
    (group, year); annual columns across all years of a group.
    """
    idx = {name: k for k, name in enumerate(header)}
    for col in [year_column, month_column, *group_by]:
        if col not in idx:
            raise DataError(f"missing column {col!r} needed for monthly expansion")
    coarse = [s for s in specs if s.cadence != "monthly" and s.role == "feature"]
    out = [list(r) for r in rows]
    groups = {}
    for i, r in enumerate(rows):
        key = tuple(r[idx[g]] for g in group_by)
        groups.setdefault(key, []).append(i)
    for s in coarse:
        c = idx[s.name]
        for key, members in groups.items():
            obs = {}
            for i in members:
                cell = rows[i][c].strip()
                if not cell:
                    continue
                yr = int(_parse(rows[i][idx[year_column]], "table", i + 1, year_column))
                mo = int(_parse(rows[i][idx[month_column]], "table", i + 1, month_column))
                period = yr if s.cadence == "annual" else (yr, (mo - 1) // 3 + 1)
                obs.setdefault(period, _parse(cell, "table", i + 1, s.name))
            for i in members:
                yr = int(float(rows[i][idx[year_column]]))
                mo = int(float(rows[i][idx[month_column]]))
                if s.cadence == "annual":
                    pts = list(obs.items())
                else:
                    pts = [(p, v) for p, v in obs.items() if p[0] == yr]
                try:
                    fitted = expand_to_monthly(pts, s.cadence, yr)
                except DataError as exc:
                    raise DataError(f"column {s.name!r}, group {key}, year {yr}: {exc}") from None
                out[i][c] = repr(float(fitted[mo - 1]))
    return out


# --- scaling and splitting -----------------------------------------------


def fit_scaler(ds):
    if ds.n < 2:
        raise DataError("standardization needs at least 2 rows")
    mean = ds.features.mean(axis=0)
    std = ds.features.std(axis=0)
    names = ds.feature_names
    for j in np.flatnonzero(std == 0):
        log.warning("feature %r has zero variance; using std = 1", names[j])
    std = np.where(std == 0, 1.0, std)
    return Scaler(tuple(float(v) for v in mean), tuple(float(v) for v in std))


def standardize(ds, scaler=None):
    """Z-score the features. Fits a scaler on ``ds`` unless one is given.

    Raises if ``ds`` already carries a scaler, so data is never scaled twice.
    """
    if ds.scaler is not None:
        raise DataError("dataset is already standardized")
    scaler = scaler or fit_scaler(ds)
    if len(scaler.mean) != ds.d:
        raise DataError(f"scaler has {len(scaler.mean)} columns, dataset has {ds.d}")
    return Dataset(scaler.transform(ds.features), ds.targets.copy(), list(ds.specs), scaler)


def split(ds, test_fraction=0.2, seed=0):
    """Seeded shuffle, then ``floor(n * (1 - test_fraction))`` rows to train, the rest to test."""
    if not 0.0 < test_fraction < 1.0:
        raise DataError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    n = ds.n
    n_train = math.floor(round(n * (1.0 - test_fraction), 9))
    if n_train < 1 or n_train >= n:
        raise DataError(f"cannot split {n} rows with test_fraction={test_fraction}")
    perm = np.random.default_rng(seed).permutation(n)
    return ds.take(np.sort(perm[:n_train])), ds.take(np.sort(perm[n_train:]))


# --- PLI -----------------------------------------------------------------


def contamination_factors(concentrations, backgrounds):
    c = np.asarray(concentrations, dtype=np.float64).ravel()
    b = np.asarray(backgrounds, dtype=np.float64).ravel()
    if c.shape != b.shape or c.size == 0:
        raise DataError(f"need equal, non-empty concentration and background vectors ({c.size} vs {b.size})")
    if np.any(~np.isfinite(c)) or np.any(~np.isfinite(b)) or np.any(c <= 0) or np.any(b <= 0):
        raise DataError("concentrations and backgrounds must be finite and > 0")
    return c / b


def compute_pli(concentrations, backgrounds):
    """Pollution load index: geometric mean of the contamination factors C_i / B_i."""
    cf = contamination_factors(concentrations, backgrounds)
    return math.exp(math.fsum(math.log(v) for v in cf) / cf.size)


# --- synthetic data ------------------------------------------------------


@dataclass(frozen=True)
class SynthConfig:
    """Synthetic source/target task.

    Features are noisy affine images of a low-rank Gaussian latent vector
    (``latent_dim`` factors mixed into ``d`` columns), on widely different raw
    scales, so the columns are correlated the way monthly-expanded
    environmental series are. A fixed nonlinear score ``f`` of the latent vector
    drives both labels: the source label is ``25 + 7 f`` plus noise (PM2.5-like),
    the target label is a monotone squashing of ``f`` into (5, 20) (PLI-like)
    with a tenth of the noise.
    """

    n_source: int = 1526
    n_target: int = 6
    d: int = 12
    noise_std: float = 4.0
    shared_weight_scale: float = 2.5
    latent_dim: int = 8
    seed: int = 0
    n_holdout: int = 200

    def __post_init__(self):
        if self.n_target < 2:
            raise ConfigError("n_target must be >= 2 (batch-norm needs two rows)")
        if self.d < 2:
            raise ConfigError("d must be >= 2")
        if not 1 <= self.latent_dim <= self.d:
            raise ConfigError("latent_dim must lie in [1, d]")
        if self.n_source < 2 or self.n_holdout < 0:
            raise ConfigError("n_source must be >= 2 and n_holdout >= 0")
        if self.noise_std < 0:
            raise ConfigError("noise_std must be >= 0")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown synth fields: {sorted(unknown)}")
        return cls(**d)


_N_COMPONENTS = 3
_CALIBRATION_ROWS = 20000
_FEATURE_NOISE = 0.05


class _SynthTask:
    """The fixed generating process behind one ``SynthConfig``."""

    def __init__(self, cfg):
        self.cfg = cfg
        rng = np.random.default_rng([cfg.seed, 0])
        d, k = cfg.d, cfg.latent_dim
        self.loc = 10.0 ** rng.uniform(-1.0, 4.0, size=d)
        self.scale = self.loc * rng.uniform(0.1, 0.6, size=d)
        self.mixing = rng.normal(size=(k, d)) / math.sqrt(k)
        self.directions = rng.normal(size=(d, _N_COMPONENTS)) / math.sqrt(d)
        self.weights = rng.normal(size=_N_COMPONENTS)
        raw = self._raw_score(rng.normal(size=(_CALIBRATION_ROWS, k)) @ self.mixing)
        self.f_mean = float(raw.mean())
        self.f_std = float(raw.std()) or 1.0

    def _raw_score(self, z):
        return np.tanh(self.cfg.shared_weight_scale * (z @ self.directions)) @ self.weights

    def score(self, z):
        return (self._raw_score(z) - self.f_mean) / self.f_std

    def draw(self, rng, n):
        z = rng.normal(size=(n, self.cfg.latent_dim)) @ self.mixing
        x = self.loc + self.scale * (z + _FEATURE_NOISE * rng.normal(size=z.shape))
        return x, self.score(z)

    @staticmethod
    def source_label(f, eps, noise_std):
        return np.maximum(25.0 + 7.0 * f + noise_std * eps, 1.0)

    @staticmethod
    def target_label(f, eps, noise_std):
        return 5.0 + 15.0 / (1.0 + np.exp(-1.2 * f)) + 0.1 * noise_std * eps


def _specs(d, label):
    return [ColumnSpec(f"x{j + 1}") for j in range(d)] + [ColumnSpec(label, "label")]


def synth_generate(cfg):
    """Return ``(source, target)`` datasets sharing one feature schema."""
    task = _SynthTask(cfg)
    rng_s = np.random.default_rng([cfg.seed, 1])
    xs, fs = task.draw(rng_s, cfg.n_source)
    ys = task.source_label(fs, rng_s.normal(size=cfg.n_source), cfg.noise_std)
    rng_t = np.random.default_rng([cfg.seed, 2])
    xt, ft = task.draw(rng_t, cfg.n_target)
    yt = task.target_label(ft, rng_t.normal(size=cfg.n_target), cfg.noise_std)
    return Dataset(xs, ys, _specs(cfg.d, "pm25")), Dataset(xt, yt, _specs(cfg.d, "pli"))


def synth_holdout(cfg, n=None):
    """Fresh target-domain rows for out-of-sample evaluation (independent of ``synth_generate``)."""
    n = cfg.n_holdout if n is None else n
    if n < 1:
        raise ConfigError("holdout size must be >= 1")
    task = _SynthTask(cfg)
    rng = np.random.default_rng([cfg.seed, 3])
    x, f = task.draw(rng, n)
    y = task.target_label(f, rng.normal(size=n), cfg.noise_std)
    return Dataset(x, y, _specs(cfg.d, "pli"))


def with_specs(ds, specs):
    return replace(ds, specs=list(specs))
