"""Right-censored survival data: CSV ingest, standardization, splits, simulation."""

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np

NUMERIC = "numeric"
CATEGORICAL = "categorical"
UNKNOWN_LABEL = "__unknown__"


class DataError(ValueError):
    """Bad input data. ``line`` and ``column`` locate the cell when known."""

    def __init__(self, message, line=None, column=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column!r}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.line = line
        self.column = column


class SurvivalRecord(NamedTuple):
    time: float
    event: bool
    numeric_features: np.ndarray
    categorical_features: np.ndarray


@dataclass(frozen=True)
class FeatureSchema:
    """Feature names and kinds, plus the category vocabulary of each categorical.

    Category ``k`` of a feature maps to index ``k`` in first-seen order. With
    an open vocabulary, unseen levels map to the reserved index
    ``cardinality`` (one past the last known level).
    """

    names: tuple
    kinds: tuple
    vocabularies: tuple = ()
    closed: bool = False

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "kinds", tuple(self.kinds))
        if len(self.names) != len(self.kinds):
            raise ValueError("names and kinds differ in length")
        if len(set(self.names)) != len(self.names):
            raise ValueError("duplicate feature names")
        for kind in self.kinds:
            if kind not in (NUMERIC, CATEGORICAL):
                raise ValueError(f"unknown feature kind {kind!r}")
        vocabs = tuple(tuple(v) for v in self.vocabularies)
        if vocabs and len(vocabs) != len(self.categorical_names):
            raise ValueError("one vocabulary per categorical feature expected")
        object.__setattr__(self, "vocabularies", vocabs)

    @property
    def numeric_names(self):
        return tuple(n for n, k in zip(self.names, self.kinds) if k == NUMERIC)

    @property
    def categorical_names(self):
        return tuple(n for n, k in zip(self.names, self.kinds) if k == CATEGORICAL)

    @property
    def cardinalities(self):
        return tuple(len(v) for v in self.vocabularies)

    def to_dict(self):
        return {
            "names": list(self.names),
            "kinds": list(self.kinds),
            "vocabularies": [list(v) for v in self.vocabularies],
            "closed": self.closed,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["names"], d["kinds"], d.get("vocabularies", ()), d.get("closed", False))

    def fingerprint(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    @classmethod
    def numeric(cls, names):
        return cls(tuple(names), (NUMERIC,) * len(names))


@dataclass(frozen=True)
class StandardizationParams:
    """Target log-time location/scale and per-numeric-feature z-score parameters."""

    mu: float
    sigma: float
    feature_names: tuple = ()
    feature_means: np.ndarray = field(default_factory=lambda: np.zeros(0))
    feature_stds: np.ndarray = field(default_factory=lambda: np.ones(0))

    def to_dict(self):
        return {
            "mu": float(self.mu),
            "sigma": float(self.sigma),
            "feature_names": list(self.feature_names),
            "feature_means": [float(v) for v in self.feature_means],
            "feature_stds": [float(v) for v in self.feature_stds],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            float(d["mu"]),
            float(d["sigma"]),
            tuple(d["feature_names"]),
            np.asarray(d["feature_means"], dtype=np.float64),
            np.asarray(d["feature_stds"], dtype=np.float64),
        )

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))

    def standardize_time(self, t):
        return (np.log(np.asarray(t, dtype=np.float64)) - self.mu) / self.sigma

    def inverse_target(self, z):
        """Map standardized log-times back to original time units."""
        return np.exp(np.asarray(z, dtype=np.float64) * self.sigma + self.mu)


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SurvivalDataset:
    """Columnar, immutable collection of survival records.

    ``target`` holds standardized log-times ``(log y - mu) / sigma`` once
    :func:`apply_standardization` has been applied, and ``x_num`` is then
    z-scored with the same ``params``.
    """

    time: np.ndarray
    event: np.ndarray
    x_num: np.ndarray
    x_cat: np.ndarray
    schema: FeatureSchema
    params: Optional[StandardizationParams] = None
    target: Optional[np.ndarray] = None

    def __post_init__(self):
        n = len(self.time)
        x_num = np.asarray(self.x_num, dtype=np.float64).reshape(n, len(self.schema.numeric_names))
        x_cat = np.asarray(self.x_cat, dtype=np.int64).reshape(n, len(self.schema.categorical_names))
        object.__setattr__(self, "time", _frozen(self.time, np.float64))
        object.__setattr__(self, "event", _frozen(self.event, bool))
        object.__setattr__(self, "x_num", _frozen(x_num, np.float64))
        object.__setattr__(self, "x_cat", _frozen(x_cat, np.int64))
        if self.target is not None:
            object.__setattr__(self, "target", _frozen(self.target, np.float64))
        if self.event.shape != (n,):
            raise ValueError("time and event differ in length")
        if x_num.shape[1] != len(self.schema.numeric_names):
            raise ValueError("numeric feature count does not match schema")
        if x_cat.shape[1] != len(self.schema.categorical_names):
            raise ValueError("categorical feature count does not match schema")
        if n and not np.all(self.time > 0):
            raise DataError("times must be positive")
        if x_cat.size:
            card = np.asarray(self.schema.cardinalities)
            if np.any(x_cat < 0) or np.any(x_cat > card):
                raise DataError("category index outside declared cardinality")

    def __len__(self):
        return len(self.time)

    def __getitem__(self, i):
        return SurvivalRecord(float(self.time[i]), bool(self.event[i]), self.x_num[i], self.x_cat[i])

    def records(self):
        return (self[i] for i in range(len(self)))

    @property
    def is_standardized(self):
        return self.params is not None and self.target is not None

    @property
    def censoring_fraction(self):
        return 1.0 - float(np.mean(self.event)) if len(self) else 0.0

    def subset(self, index):
        index = np.asarray(index)
        return replace(
            self,
            time=self.time[index],
            event=self.event[index],
            x_num=self.x_num[index],
            x_cat=self.x_cat[index],
            target=None if self.target is None else self.target[index],
        )


# -- CSV ---------------------------------------------------------------------


def _parse_float(cell, line, column):
    if cell.strip() == "":
        raise DataError("missing value", line, column)
    try:
        value = float(cell)
    except ValueError:
        raise DataError(f"cannot parse {cell!r} as a number", line, column) from None
    if not math.isfinite(value):
        raise DataError(f"non-finite value {cell!r}", line, column)
    return value


def load_csv(path, schema=None, categorical=(), require_target=True):
    """Read ``time,event,<features...>`` rows into an unstandardized dataset.

    Parameters
    ----------
    path : str or Path
    schema : FeatureSchema, optional
        Expected features. Categorical features with a vocabulary map levels
        through it (unseen levels go to the reserved index, or raise when the
        schema is closed); without one, levels are indexed in first-seen
        order. When omitted, columns that all parse as numbers are numeric
        and the rest categorical.
    categorical : iterable of str
        Column names forced to be categorical when inferring the schema.
    require_target : bool
        When False, ``time``/``event`` may be absent, for prediction inputs;
        missing times are filled with 1.0 and missing events with False.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"data file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    body = [r for r in rows[1:] if any(c.strip() for c in r)]
    for k, r in enumerate(body):
        if len(r) != len(header):
            raise DataError(f"expected {len(header)} cells, found {len(r)}", k + 2)

    has_target = "time" in header and "event" in header
    if require_target:
        for col in ("time", "event"):
            if col not in header:
                raise DataError(f"missing column {col!r} in {path}")
    feature_cols = [h for h in header if h not in ("time", "event")]

    if schema is None:
        forced = set(categorical)
        kinds = []
        for name in feature_cols:
            j = header.index(name)
            numeric = name not in forced
            if numeric:
                for r in body:
                    try:
                        float(r[j])
                    except ValueError:
                        if r[j].strip() != "":
                            numeric = False
                            break
            kinds.append(NUMERIC if numeric else CATEGORICAL)
        schema = FeatureSchema(tuple(feature_cols), tuple(kinds))
    else:
        missing = [n for n in schema.names if n not in header]
        if missing:
            raise DataError(f"missing column {missing[0]!r} in {path}")
        extra = [n for n in feature_cols if n not in schema.names]
        if extra:
            raise DataError(f"unexpected column {extra[0]!r} in {path}")

    n = len(body)
    time = np.ones(n)
    event = np.zeros(n, dtype=bool)
    if has_target:
        jt, je = header.index("time"), header.index("event")
        for k, r in enumerate(body):
            t = _parse_float(r[jt], k + 2, "time")
            if t <= 0:
                raise DataError(f"time must be positive, got {t!r}", k + 2, "time")
            time[k] = t
            ev = r[je].strip()
            if ev not in ("0", "1", "0.0", "1.0"):
                raise DataError(f"event must be 0 or 1, got {ev!r}", k + 2, "event")
            event[k] = ev.startswith("1")

    x_num = np.zeros((n, len(schema.numeric_names)))
    for c, name in enumerate(schema.numeric_names):
        j = header.index(name)
        for k, r in enumerate(body):
            x_num[k, c] = _parse_float(r[j], k + 2, name)

    x_cat = np.zeros((n, len(schema.categorical_names)), dtype=np.int64)
    vocabs = []
    for c, name in enumerate(schema.categorical_names):
        j = header.index(name)
        if schema.vocabularies:
            vocab = list(schema.vocabularies[c])
            lookup = {v: i for i, v in enumerate(vocab)}
            for k, r in enumerate(body):
                level = r[j].strip()
                if level in lookup:
                    x_cat[k, c] = lookup[level]
                elif schema.closed:
                    raise DataError(f"unseen category {level!r}", k + 2, name)
                else:
                    x_cat[k, c] = len(vocab)
        else:
            lookup = {}
            for k, r in enumerate(body):
                level = r[j].strip()
                if level == "":
                    raise DataError("missing value", k + 2, name)
                x_cat[k, c] = lookup.setdefault(level, len(lookup))
            vocab = list(lookup)
        vocabs.append(tuple(vocab))
    schema = FeatureSchema(schema.names, schema.kinds, tuple(vocabs), schema.closed)
    return SurvivalDataset(time, event, x_num, x_cat, schema)


def write_csv(dataset, path):
    """Write ``dataset`` in the ingest format; floats use round-trip repr."""
    schema = dataset.schema
    num_idx = {n: i for i, n in enumerate(schema.numeric_names)}
    cat_idx = {n: i for i, n in enumerate(schema.categorical_names)}
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time", "event", *schema.names])
        for k in range(len(dataset)):
            row = [repr(float(dataset.time[k])), int(dataset.event[k])]
            for name in schema.names:
                if name in num_idx:
                    row.append(repr(float(dataset.x_num[k, num_idx[name]])))
                else:
                    c = cat_idx[name]
                    vocab = schema.vocabularies[c]
                    level = dataset.x_cat[k, c]
                    row.append(vocab[level] if level < len(vocab) else UNKNOWN_LABEL)
            w.writerow(row)


# -- standardization -----------------------------------------------------------


def fit_standardization(train):
    """Fit target and numeric-feature z-score parameters (sample std, ddof=1)."""
    if len(train) < 2:
        raise DataError("standardization needs at least two training records")
    log_t = np.log(train.time)
    mu = float(np.mean(log_t))
    sigma = float(np.std(log_t, ddof=1))
    if not sigma > 0:
        raise DataError("all observed times are equal; log-time standard deviation is 0")
    means = np.mean(train.x_num, axis=0)
    stds = np.std(train.x_num, axis=0, ddof=1)
    for name, s in zip(train.schema.numeric_names, stds):
        if not s > 0:
            raise DataError(f"numeric feature {name!r} has zero variance", column=name)
    return StandardizationParams(mu, sigma, train.schema.numeric_names, means, stds)


def apply_standardization(dataset, params):
    """Return a copy with z-scored numeric features and a standardized target."""
    if tuple(params.feature_names) != dataset.schema.numeric_names:
        raise DataError("standardization parameters do not match the dataset's numeric features")
    x = (dataset.x_num - params.feature_means) / params.feature_stds
    z = params.standardize_time(dataset.time)
    return replace(dataset, x_num=x, params=params, target=z)


# -- splits ----------------------------------------------------------------------


@dataclass(frozen=True)
class SplitSpec:
    """Train/validation/test fractions summing to one, plus the shuffle seed.

    The training fraction must lie in (0, 1); validation and test fractions
    may be zero to produce fewer splits.
    """

    train_fraction: float = 0.6
    valid_fraction: float = 0.2
    test_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        fr = (self.train_fraction, self.valid_fraction, self.test_fraction)
        if not 0 < self.train_fraction < 1 or any(not 0 <= f < 1 for f in fr):
            raise ValueError(f"split fractions out of range: {fr}")
        if abs(sum(fr) - 1.0) > 1e-9:
            raise ValueError(f"split fractions must sum to 1, got {sum(fr)}")


def split_dataset(dataset, spec):
    """Deterministically partition ``dataset`` into (train, valid, test)."""
    n = len(dataset)
    perm = np.random.default_rng(spec.seed).permutation(n)
    n_train = int(round(spec.train_fraction * n))
    n_valid = int(round(spec.valid_fraction * n))
    if spec.test_fraction == 0:
        n_valid = n - n_train
    parts = (perm[:n_train], perm[n_train:n_train + n_valid], perm[n_train + n_valid:])
    return tuple(dataset.subset(np.sort(p)) for p in parts)


def canonical_order(dataset):
    """Row order that depends only on record contents, not on input order."""
    keys = [dataset.x_cat[:, j] for j in range(dataset.x_cat.shape[1])[::-1]]
    keys += [dataset.x_num[:, j] for j in range(dataset.x_num.shape[1])[::-1]]
    keys += [dataset.event, dataset.time]
    return np.lexsort(keys)


# -- simulation ------------------------------------------------------------------

ERROR_DISTS = ("normal", "logistic", "extreme-value")


def nonlinear_signal(x):
    """Nonlinear regression function used by the simulator: x1*x2 + sin(x3)."""
    return x[:, 0] * x[:, 1] + np.sin(x[:, 2])


@dataclass(frozen=True)
class SimulationTruth:
    beta: tuple
    error_dist: str
    censor_rate: float
    nonlinear: bool
    seed: int
    noise_scale: float
    log_event_time: np.ndarray = field(repr=False, compare=False)
    signal: np.ndarray = field(repr=False, compare=False)

    def to_dict(self):
        return {
            "beta": list(self.beta),
            "error_dist": self.error_dist,
            "censor_rate": self.censor_rate,
            "nonlinear": self.nonlinear,
            "g": "x1*x2 + sin(x3)" if self.nonlinear else "beta . x",
            "seed": self.seed,
            "noise_scale": self.noise_scale,
        }


def simulate_aft(n, beta, error_dist="normal", censor_rate=0.0, nonlinear=False,
                 seed=0, noise_scale=1.0, return_truth=False):
    """Draw a right-censored sample from ``log T = g(x) + eps``.

    Features are i.i.d. standard normal, one per entry of ``beta``. ``g`` is
    ``beta . x``, or :func:`nonlinear_signal` when ``nonlinear`` is set
    (needs three or more features). Errors are standard normal, standard
    logistic, or standard minimum-extreme-value (Weibull AFT), times
    ``noise_scale``.

    Censoring times are independent log-normal with the spread of ``log T``;
    their location is set between order statistics so that exactly
    ``round(censor_rate * n)`` records are censored.
    """
    beta = np.asarray(beta, dtype=np.float64).ravel()
    if n < 1:
        raise ValueError("n must be at least 1")
    if not 0 <= censor_rate < 1:
        raise ValueError(f"censor_rate must lie in [0, 1), got {censor_rate}")
    if error_dist not in ERROR_DISTS:
        raise ValueError(f"error_dist must be one of {ERROR_DISTS}")
    if nonlinear and beta.size < 3:
        raise ValueError("nonlinear simulation needs at least three features")

    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, beta.size))
    if error_dist == "normal":
        eps = rng.standard_normal(n)
    elif error_dist == "logistic":
        eps = rng.logistic(size=n)
    else:
        eps = np.log(rng.standard_exponential(n))
    xi = rng.standard_normal(n)

    g = nonlinear_signal(x) if nonlinear else x @ beta
    log_t = g + noise_scale * eps
    n_cens = int(round(censor_rate * n))
    if n_cens == 0:
        log_y, event = log_t, np.ones(n, dtype=bool)
    else:
        spread = float(np.std(log_t)) if n > 1 else 1.0
        margin = np.sort(log_t - spread * xi)[::-1]
        if n_cens < n:
            loc = 0.5 * (margin[n_cens - 1] + margin[n_cens])
        else:
            loc = margin[-1] - 1.0
        log_c = loc + spread * xi
        event = log_t <= log_c
        log_y = np.minimum(log_t, log_c)
        if abs(np.mean(~event) - censor_rate) > max(0.02, 1.0 / n):
            raise RuntimeError("censoring calibration failed")

    names = tuple(f"x{j + 1}" for j in range(beta.size))
    ds = SurvivalDataset(np.exp(log_y), event, x, np.zeros((n, 0)), FeatureSchema.numeric(names))
    if not return_truth:
        return ds
    truth = SimulationTruth(tuple(float(b) for b in beta), error_dist, float(censor_rate),
                            bool(nonlinear), int(seed), float(noise_scale), log_t, g)
    return ds, truth
