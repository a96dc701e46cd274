"""Ingestion and validation of regression and elicitation data."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

log = logging.getLogger(__name__)

SE_TYPES = ("homoskedastic", "robust", "clustered")
INTERCEPT = "const"


class DataError(ValueError):
    """Raised when input data or configuration fails validation."""


@dataclass(frozen=True)
class OrdinalOutcome:
    codes: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        codes = np.asarray(self.codes)
        labels = np.asarray(self.labels, dtype=float)
        if labels.ndim != 1 or labels.size < 2:
            raise DataError("an ordinal outcome needs at least two categories")
        if np.any(np.diff(labels) <= 0):
            raise DataError("labels must be strictly increasing")
        if codes.size and not np.issubdtype(codes.dtype, np.integer):
            if not np.all(codes == np.round(codes)):
                raise DataError("codes must be integers")
            codes = codes.astype(int)
        if codes.size and (codes.min() < 1 or codes.max() > labels.size):
            raise DataError(f"code out of range 1..{labels.size}")
        object.__setattr__(self, "codes", codes.astype(int))
        object.__setattr__(self, "labels", labels)

    @property
    def K(self) -> int:
        return self.labels.size

    @property
    def L(self) -> float:
        return float(self.labels[-1] - self.labels[0])

    @property
    def values(self) -> np.ndarray:
        return self.labels[self.codes - 1]

    @property
    def empty_categories(self) -> list[int]:
        counts = np.bincount(self.codes, minlength=self.K + 1)[1:]
        return [k + 1 for k in np.flatnonzero(counts == 0)]

    @property
    def equidistant(self) -> bool:
        gaps = np.diff(self.labels)
        return bool(np.allclose(gaps, gaps.mean(), rtol=1e-12, atol=0))


@dataclass(frozen=True)
class DesignSpec:
    names: list[str]
    X: np.ndarray
    intercept_present: bool = True
    unit_ids: np.ndarray | None = None
    cluster_ids: np.ndarray | None = None
    instruments: dict[str, np.ndarray] = field(default_factory=dict)
    focal_names: list[str] = field(default_factory=list)

    @property
    def N(self) -> int:
        return self.X.shape[0]

    @property
    def M(self) -> int:
        return self.X.shape[1]

    @property
    def Z(self) -> np.ndarray | None:
        """Instrument matrix with each endogenous column replaced by its instrument."""
        if not self.instruments:
            return None
        Z = self.X.copy()
        for endog, z in self.instruments.items():
            Z[:, self.names.index(endog)] = z
        return Z


@dataclass(frozen=True)
class Dataset:
    outcome: OrdinalOutcome
    design: DesignSpec
    se_type: str = "homoskedastic"
    alpha_policy: str = "fixed2"
    epsilon_gap: float | None = None
    dropped: int = 0
    reference_levels: dict[str, Any] = field(default_factory=dict)

    @property
    def N(self) -> int:
        return self.design.N

    @property
    def K(self) -> int:
        return self.outcome.K

    @property
    def estimator(self) -> str:
        if self.design.unit_ids is not None:
            return "fe"
        if self.design.instruments:
            return "tsls"
        return "ols"


def dense_ids(values) -> np.ndarray:
    """Remap arbitrary ids to ``0..G-1`` in order of first sorted appearance."""
    _, inverse = np.unique(np.asarray(values), return_inverse=True)
    return inverse.astype(int)


def make_dataset(codes, X, names, labels=None, *, intercept=True, unit_ids=None,
                 cluster_ids=None, instruments=None, focal=None, se_type="homoskedastic",
                 alpha_policy="fixed2", epsilon_gap=None, dropped=0) -> Dataset:
    """Build and validate a Dataset from in-memory arrays.

    ``X`` excludes the intercept; it is prepended as ``const`` when
    ``intercept`` is true.
    """
    codes = np.asarray(codes)
    if labels is None:
        labels = np.arange(1, int(codes.max()) + 1, dtype=float)
    outcome = OrdinalOutcome(codes, labels)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    names = list(names)
    if X.shape[1] != len(names):
        raise DataError("covariate names do not match design columns")
    if intercept:
        X = np.column_stack([np.ones(X.shape[0]), X])
        names = [INTERCEPT] + names
    if X.shape[0] != codes.size:
        raise DataError("outcome and design have different row counts")
    instruments = {k: np.asarray(v, dtype=float) for k, v in (instruments or {}).items()}
    design = DesignSpec(
        names=names,
        X=X,
        intercept_present=intercept,
        unit_ids=None if unit_ids is None else dense_ids(unit_ids),
        cluster_ids=None if cluster_ids is None else dense_ids(cluster_ids),
        instruments=instruments,
        focal_names=list(focal) if focal is not None else [n for n in names if n != INTERCEPT],
    )
    data = Dataset(outcome, design, se_type=se_type, alpha_policy=alpha_policy,
                   epsilon_gap=epsilon_gap, dropped=dropped)
    validate(data)
    return data


def validate(data: Dataset) -> None:
    d = data.design
    N, M = d.X.shape
    if M >= N:
        raise DataError(f"need more observations ({N}) than regressors ({M})")
    for j, name in enumerate(d.names):
        if name == INTERCEPT:
            continue
        col = d.X[:, j]
        if np.all(col == col[0]):
            raise DataError(f"covariate {name!r} is constant")
    for name in d.focal_names:
        if name not in d.names:
            raise DataError(f"unknown focal coefficient {name!r}")
        if name == INTERCEPT:
            raise DataError("the intercept cannot be a focal coefficient")
    for endog in d.instruments:
        if endog not in d.names:
            raise DataError(f"instrumented regressor {endog!r} is not a covariate")
    if d.instruments and d.unit_ids is not None:
        raise DataError("fixed effects combined with instruments is not supported")
    if d.unit_ids is None and not d.intercept_present:
        raise DataError("an intercept is required unless unit fixed effects are used")
    if data.se_type not in SE_TYPES:
        raise DataError(f"se_type must be one of {SE_TYPES}")
    if data.se_type == "clustered":
        if d.cluster_ids is None:
            raise DataError("clustered standard errors need cluster ids")
        if np.unique(d.cluster_ids).size < 2:
            raise DataError("clustered standard errors need at least two clusters")
    empty = data.outcome.empty_categories
    if empty:
        log.warning("empty outcome categories: %s", empty)


# -- CSV ingestion ----------------------------------------------------------

def _read_config(config) -> dict:
    if isinstance(config, (str, Path)):
        with open(config, encoding="utf-8") as fh:
            return json.load(fh)
    return dict(config)


def _read_csv(path) -> pd.DataFrame:
    return pd.read_csv(path, encoding="utf-8", keep_default_na=True,
                       float_precision="round_trip")


def _require_columns(df: pd.DataFrame, cols) -> None:
    missing = [c for c in cols if c not in df.columns]
    if missing:
        raise DataError(f"unknown column(s): {', '.join(missing)}")


def load_dataset(csv_path, config) -> Dataset:
    cfg = _read_config(config)
    df = _read_csv(csv_path)

    outcome_col = cfg["outcome"]
    covs = cfg.get("covariates", [])
    cov_names = [c["name"] for c in covs]
    unit_col = cfg.get("unit_id")
    cluster_col = cfg.get("cluster_id")
    instruments = cfg.get("instruments") or []
    inst_cols = [i["name"] for i in instruments]

    used = [outcome_col, *cov_names, *inst_cols]
    used += [c for c in (unit_col, cluster_col) if c]
    _require_columns(df, used)

    complete = df[used].notna().all(axis=1)
    dropped = int((~complete).sum())
    df = df.loc[complete].reset_index(drop=True)
    if dropped:
        log.info("dropped %d incomplete rows", dropped)

    labels = cfg.get("labels")
    y = pd.to_numeric(df[outcome_col], errors="raise").to_numpy(dtype=float)
    if labels is None:
        labels = np.unique(y)
    labels = np.asarray(labels, dtype=float)
    if np.any(np.diff(labels) <= 0):
        raise DataError("label coding must be strictly increasing")
    codes = np.searchsorted(labels, y)
    bad = (codes >= labels.size) | (labels[np.minimum(codes, labels.size - 1)] != y)
    if np.any(bad):
        raise DataError(f"code out of range: outcome value {y[bad][0]!r} not in declared labels")
    codes = codes + 1

    columns, names, refs = [], [], {}
    for spec in covs:
        name, kind = spec["name"], spec.get("type", "numeric")
        if kind == "numeric":
            columns.append(pd.to_numeric(df[name], errors="raise").to_numpy(dtype=float))
            names.append(name)
        elif kind == "categorical":
            levels = sorted(df[name].astype(str).unique())
            ref = str(spec.get("reference", levels[0]))
            if ref not in levels:
                raise DataError(f"reference level {ref!r} not observed for {name!r}")
            refs[name] = ref
            vals = df[name].astype(str).to_numpy()
            for level in levels:
                if level == ref:
                    continue
                columns.append((vals == level).astype(float))
                names.append(f"{name}[{level}]")
        else:
            raise DataError(f"covariate type must be numeric or categorical, got {kind!r}")

    X = np.column_stack(columns) if columns else np.empty((len(df), 0))
    intercept = unit_col is None
    M = X.shape[1] + int(intercept)
    if len(df) < M + 2:
        raise DataError(f"only {len(df)} complete rows for {M} regressors")

    inst = {}
    for spec in instruments:
        inst[spec["endogenous"]] = pd.to_numeric(df[spec["name"]]).to_numpy(dtype=float)

    focal = cfg.get("focal") or None
    data = make_dataset(
        codes, X, names, labels,
        intercept=intercept,
        unit_ids=df[unit_col].to_numpy() if unit_col else None,
        cluster_ids=df[cluster_col].to_numpy() if cluster_col else None,
        instruments=inst,
        focal=focal,
        se_type=cfg.get("se_type", "homoskedastic"),
        alpha_policy=cfg.get("alpha_policy", "fixed2"),
        epsilon_gap=cfg.get("epsilon_gap"),
        dropped=dropped,
    )
    if refs:
        object.__setattr__(data, "reference_levels", refs)
    return data


def write_dataset(data: Dataset, csv_path, config_path=None) -> dict:
    """Write a Dataset as CSV (plus JSON config) that ``load_dataset`` reads back exactly."""
    d = data.design
    cols = [n for n in d.names if n != INTERCEPT]
    header = ["outcome", *cols]
    extra = {}
    if d.unit_ids is not None:
        header.append("unit_id")
        extra["unit_id"] = d.unit_ids
    if d.cluster_ids is not None:
        header.append("cluster_id")
        extra["cluster_id"] = d.cluster_ids
    inst_names = {endog: f"z_{endog}" for endog in d.instruments}
    header += list(inst_names.values())

    y = data.outcome.values
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(d.N):
            row = [repr(float(y[i]))]
            row += [repr(float(d.X[i, d.names.index(c)])) for c in cols]
            row += [str(int(v[i])) for v in extra.values()]
            row += [repr(float(d.instruments[e][i])) for e in inst_names]
            writer.writerow(row)

    cfg = {
        "outcome": "outcome",
        "labels": [float(x) for x in data.outcome.labels],
        "covariates": [{"name": c, "type": "numeric"} for c in cols],
        "focal": list(d.focal_names),
        "se_type": data.se_type,
        "alpha_policy": data.alpha_policy,
    }
    if "unit_id" in extra:
        cfg["unit_id"] = "unit_id"
    if "cluster_id" in extra:
        cfg["cluster_id"] = "cluster_id"
    if inst_names:
        cfg["instruments"] = [{"name": z, "endogenous": e} for e, z in inst_names.items()]
    if data.epsilon_gap is not None:
        cfg["epsilon_gap"] = data.epsilon_gap
    if config_path is not None:
        with open(config_path, "w", encoding="utf-8") as fh:
            json.dump(cfg, fh, indent=2)
    return cfg


# -- elicitation -------------------------------------------------------------

ARMS = ("unprompted", "linear_prompted")


@dataclass(frozen=True)
class ElicitationRecord:
    arm: str
    discrete_response: int | None = None
    continuous_response: float | None = None
    slider_positions: np.ndarray | None = None
    objective_value: float | None = None
    covariates: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.arm not in ARMS:
            raise DataError(f"unknown arm {self.arm!r}")
        if all(v is None for v in (self.discrete_response, self.continuous_response,
                                   self.slider_positions, self.objective_value)):
            raise DataError("elicitation record carries no response")


def _opt(value, cast):
    if value is None or (isinstance(value, float) and np.isnan(value)):
        return None
    return cast(value)


def load_elicitation(csv_path, config) -> list[ElicitationRecord]:
    """Read elicitation responses.

    Config keys: ``labels`` (K original labels), ``arm`` (column; optional,
    default all ``unprompted``), ``arm_values`` (mapping raw value -> arm),
    ``discrete``, ``continuous``, ``sliders`` (list of K columns),
    ``objective``, ``covariates`` (list of column names).
    """
    cfg = _read_config(config)
    df = _read_csv(csv_path)
    labels = np.asarray(cfg["labels"], dtype=float)
    K = labels.size
    lo, hi = labels[0], labels[-1]

    sliders = cfg.get("sliders") or []
    if sliders and len(sliders) != K:
        raise DataError(f"{len(sliders)} slider columns for K={K} categories")
    cols = [c for c in (cfg.get("arm"), cfg.get("discrete"), cfg.get("continuous"),
                        cfg.get("objective")) if c]
    cols += list(sliders) + list(cfg.get("covariates", []))
    _require_columns(df, cols)

    arm_map = {str(k): v for k, v in (cfg.get("arm_values") or {}).items()}
    records = []
    for row in df.to_dict(orient="records"):
        arm = "unprompted"
        if cfg.get("arm"):
            raw = str(row[cfg["arm"]])
            arm = arm_map.get(raw, raw)
        disc = _opt(row.get(cfg["discrete"]), int) if cfg.get("discrete") else None
        if disc is not None and not 0 <= disc <= K - 1:
            raise DataError(f"discrete response {disc} outside 0..{K - 1}")
        cont = _opt(row.get(cfg["continuous"]), float) if cfg.get("continuous") else None
        if cont is not None and not lo <= cont <= hi:
            raise DataError(f"continuous response {cont} outside [{lo}, {hi}]")
        slider = None
        if sliders:
            vals = np.array([row[c] for c in sliders], dtype=float)
            if not np.any(np.isnan(vals)):
                slider = vals
        obj = _opt(row.get(cfg["objective"]), float) if cfg.get("objective") else None
        covs = {c: float(row[c]) for c in cfg.get("covariates", [])}
        if all(v is None for v in (disc, cont, slider, obj)):
            continue
        records.append(ElicitationRecord(arm, disc, cont, slider, obj, covs))
    return records
