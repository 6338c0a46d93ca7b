"""Observational datasets: CSV I/O, synthetic generation, splitting, scaling.

A dataset is a feature matrix X, a binary treatment vector W, factual
outcomes Y, and (when ground truth is known) the potential-outcome means
mu0/mu1 with their difference as the true individualized effect. CSV files
use one header row, columns ``x1..xd, w, y`` and optionally ``mu0, mu1``,
UTF-8, period decimals.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

SURFACES = ("LinearOffset", "ExpSurface")

# per-realization coefficient draw: mostly-zero sparse weights
BETA_VALUES = (0.0, 0.1, 0.2, 0.3, 0.4)
BETA_PROBS = (0.6, 0.1, 0.1, 0.1, 0.1)


class SchemaError(ValueError):
    """A required column is missing or the column set is inconsistent."""


class ParseError(ValueError):
    """A cell failed numeric parsing; carries 1-based data row and column name."""

    def __init__(self, row: int, column: str, message: str):
        super().__init__(f"row {row}, column {column!r}: {message}")
        self.row = row
        self.column = column


class ValidationError(ValueError):
    """Parsed values violate a dataset invariant (e.g. non-binary treatment)."""


@dataclass
class ObservationalDataset:
    """n subjects: features X (n x d), treatment W in {0,1}, factual outcome Y.

    ``mu0``/``mu1`` are optional noiseless potential-outcome means; when both
    are present ``true_ite`` is their elementwise difference.
    """

    X: np.ndarray
    W: np.ndarray
    Y: np.ndarray
    mu0: np.ndarray | None = None
    mu1: np.ndarray | None = None
    true_ite: np.ndarray | None = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        if self.X.ndim != 2:
            raise ValidationError("X must be 2-D (subjects x features)")
        n = self.X.shape[0]
        self.W = np.asarray(self.W)
        if self.W.shape != (n,):
            raise ValidationError("W length does not match X rows")
        if not np.isin(self.W, (0, 1)).all():
            raise ValidationError("treatment values must be 0 or 1")
        self.W = self.W.astype(np.int64)
        self.Y = np.asarray(self.Y, dtype=np.float64)
        if self.Y.shape != (n,):
            raise ValidationError("Y length does not match X rows")
        if (self.mu0 is None) != (self.mu1 is None):
            raise ValidationError("mu0 and mu1 must be supplied together")
        if self.mu0 is not None:
            self.mu0 = np.asarray(self.mu0, dtype=np.float64)
            self.mu1 = np.asarray(self.mu1, dtype=np.float64)
            if self.mu0.shape != (n,) or self.mu1.shape != (n,):
                raise ValidationError("mu0/mu1 lengths do not match X rows")
            derived = self.mu1 - self.mu0
            if self.true_ite is None:
                self.true_ite = derived
            else:
                self.true_ite = np.asarray(self.true_ite, dtype=np.float64)
                if not np.array_equal(self.true_ite, derived):
                    raise ValidationError("true_ite must equal mu1 - mu0")
        elif self.true_ite is not None:
            raise ValidationError("true_ite requires mu0 and mu1")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def has_ground_truth(self) -> bool:
        return self.mu0 is not None

    def subset(self, indices: np.ndarray) -> "ObservationalDataset":
        """Row selection preserving any ground-truth columns."""
        indices = np.asarray(indices)
        return ObservationalDataset(
            self.X[indices],
            self.W[indices],
            self.Y[indices],
            None if self.mu0 is None else self.mu0[indices],
            None if self.mu1 is None else self.mu1[indices],
        )

    def with_features(self, X: np.ndarray) -> "ObservationalDataset":
        """Same subjects, replaced feature matrix (used by standardization)."""
        return ObservationalDataset(X, self.W, self.Y, self.mu0, self.mu1)


@dataclass(frozen=True)
class CsvSchema:
    """Column mapping for `load_csv`.

    ``features=None`` means: every header column not claimed by the
    treatment/outcome/ground-truth names is a feature, in file order.
    """

    features: tuple[str, ...] | None = None
    treatment: str = "w"
    outcome: str = "y"
    mu0: str = "mu0"
    mu1: str = "mu1"


def _parse_cell(raw: str, row: int, column: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ParseError(row, column, f"not a number: {raw!r}") from None


def load_csv(path, schema: CsvSchema | None = None) -> ObservationalDataset:
    """Read a dataset from ``path`` according to ``schema`` (default names)."""
    schema = schema or CsvSchema()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError("empty file: no header row") from None
        rows = list(reader)

    positions = {name: i for i, name in enumerate(header)}
    for required in (schema.treatment, schema.outcome):
        if required not in positions:
            raise SchemaError(f"missing required column {required!r}")
    if schema.features is None:
        reserved = {schema.treatment, schema.outcome, schema.mu0, schema.mu1}
        feature_names = [name for name in header if name not in reserved]
    else:
        feature_names = list(schema.features)
        missing = [name for name in feature_names if name not in positions]
        if missing:
            raise SchemaError(f"missing feature columns: {missing}")
    if not feature_names:
        raise SchemaError("no feature columns")
    has_mu0 = schema.mu0 in positions
    has_mu1 = schema.mu1 in positions
    if has_mu0 != has_mu1:
        raise SchemaError("mu0 and mu1 columns must appear together")

    n = len(rows)
    if n == 0:
        raise SchemaError("no data rows")
    X = np.empty((n, len(feature_names)))
    W = np.empty(n)
    Y = np.empty(n)
    mu0 = np.empty(n) if has_mu0 else None
    mu1 = np.empty(n) if has_mu1 else None
    width = len(header)
    for i, row in enumerate(rows, start=1):
        if len(row) != width:
            raise ParseError(i, "<row>", f"expected {width} cells, got {len(row)}")
        for j, name in enumerate(feature_names):
            X[i - 1, j] = _parse_cell(row[positions[name]], i, name)
        w = _parse_cell(row[positions[schema.treatment]], i, schema.treatment)
        if w not in (0.0, 1.0):
            raise ValidationError(f"row {i}: treatment must be 0 or 1, got {w}")
        W[i - 1] = w
        Y[i - 1] = _parse_cell(row[positions[schema.outcome]], i, schema.outcome)
        if has_mu0:
            mu0[i - 1] = _parse_cell(row[positions[schema.mu0]], i, schema.mu0)
            mu1[i - 1] = _parse_cell(row[positions[schema.mu1]], i, schema.mu1)
    return ObservationalDataset(X, W, Y, mu0, mu1)


def save_csv(dataset: ObservationalDataset, path) -> None:
    """Write ``x1..xd, w, y[, mu0, mu1]`` with round-trip float formatting."""
    header = [f"x{j + 1}" for j in range(dataset.d)] + ["w", "y"]
    if dataset.has_ground_truth:
        header += ["mu0", "mu1"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(dataset.n):
            row = [repr(float(v)) for v in dataset.X[i]]
            row.append(str(int(dataset.W[i])))
            row.append(repr(float(dataset.Y[i])))
            if dataset.has_ground_truth:
                row.append(repr(float(dataset.mu0[i])))
                row.append(repr(float(dataset.mu1[i])))
            writer.writerow(row)


@dataclass(frozen=True)
class SyntheticConfig:
    """Generator knobs; ``seed`` is used when no explicit stream is passed."""

    n: int = 750
    d: int = 25
    bias_strength: float = 3.0
    noise_std: float = 1.0
    surface: str = "LinearOffset"
    seed: int | None = None

    def __post_init__(self):
        if self.n < 2:
            raise ValidationError("n must be at least 2")
        if self.d < 1:
            raise ValidationError("d must be at least 1")
        if self.bias_strength < 0:
            raise ValidationError("bias_strength must be non-negative")
        if self.noise_std < 0:
            raise ValidationError("noise_std must be non-negative")
        if self.surface not in SURFACES:
            raise ValidationError(f"surface must be one of {SURFACES}")


def generate_synthetic(
    config: SyntheticConfig,
    rng: np.random.Generator | None = None,
    covariates: np.ndarray | None = None,
) -> ObservationalDataset:
    """Draw a biased observational dataset with known potential outcomes.

    Treatment assignment follows p(x) = sigmoid(bias_strength * x'a) along
    the fixed direction a = 1/sqrt(d), so larger bias_strength means treated
    and control covariates drift further apart. Surfaces:

    - LinearOffset: mu0 = x'b, mu1 = x'b + 2 + x_1
    - ExpSurface:   mu0 = exp((x + 1/2)'b), mu1 = x'b

    with coefficients b drawn sparsely per call. Draw order is fixed
    (X, b, W, noise); ``covariates`` skips the X draw so repeated calls can
    redraw everything else over the same subjects.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    n, d = config.n, config.d
    if covariates is None:
        X = rng.standard_normal((n, d))
    else:
        X = np.asarray(covariates, dtype=np.float64)
        if X.shape != (n, d):
            raise ValidationError(f"covariates must have shape {(n, d)}")
    beta = rng.choice(BETA_VALUES, size=d, p=BETA_PROBS)
    direction = np.full(d, 1.0 / math.sqrt(d))
    logits = config.bias_strength * (X @ direction)
    propensity = 1.0 / (1.0 + np.exp(-logits))
    W = (rng.random(n) < propensity).astype(np.int64)
    if config.surface == "LinearOffset":
        mu0 = X @ beta
        mu1 = mu0 + 2.0 + X[:, 0]
    else:
        mu0 = np.exp((X + 0.5) @ beta)
        mu1 = X @ beta
    noise = rng.standard_normal(n)
    Y = np.where(W == 1, mu1, mu0) + config.noise_std * noise
    return ObservationalDataset(X, W, Y, mu0, mu1)


def train_test_split(
    dataset: ObservationalDataset, train_fraction: float, rng: np.random.Generator
) -> tuple[ObservationalDataset, ObservationalDataset]:
    """Uniform shuffle, then the first ceil(fraction * n) rows become train."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie strictly between 0 and 1")
    n = dataset.n
    n_train = math.ceil(train_fraction * n)
    if n_train <= 0 or n_train >= n:
        raise ValueError(f"split {n_train}/{n - n_train} leaves one side empty")
    perm = rng.permutation(n)
    return dataset.subset(perm[:n_train]), dataset.subset(perm[n_train:])


@dataclass
class Standardization:
    """Per-feature affine transform x -> (x - mean) / std fitted on training data."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.asarray(self.std, dtype=np.float64)
        if self.mean.shape != self.std.shape or self.mean.ndim != 1:
            raise ValueError("mean and std must be 1-D and the same length")
        if np.any(self.std <= 0):
            raise ValueError("std entries must be positive")

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.mean.shape[0]:
            raise ValueError(
                f"feature width {X.shape[-1]} does not match fitted width {self.mean.shape[0]}"
            )
        return (X - self.mean) / self.std

    def transform_dataset(self, dataset: ObservationalDataset) -> ObservationalDataset:
        return dataset.with_features(self.transform(dataset.X))

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, payload: dict) -> "Standardization":
        return cls(np.asarray(payload["mean"]), np.asarray(payload["std"]))


def standardize(
    dataset: ObservationalDataset,
) -> tuple[ObservationalDataset, Standardization]:
    """Center/scale each feature to mean 0, population std 1.

    Exactly constant columns map to all-zeros with std recorded as 1, so
    the transform never divides by zero and stays invertible.
    """
    if dataset.n < 2:
        raise ValueError("standardization needs at least 2 rows")
    X = dataset.X
    mean = X.mean(axis=0)
    std = X.std(axis=0)  # population (ddof=0)
    constant = np.all(X == X[0], axis=0)
    mean = np.where(constant, X[0], mean)
    std = np.where(constant | (std == 0.0), 1.0, std)
    transform = Standardization(mean, std)
    return transform.transform_dataset(dataset), transform
