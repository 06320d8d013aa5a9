"""Candidate-function dictionaries and their evaluation on time series.

A :class:`DictionarySpec` is an ordered list of :class:`FeatureFunction`
objects.  Column ``j`` of the evaluated matrix always corresponds to
``spec.features[j]``.  :func:`evaluate` turns a spec plus a
:class:`TimeSeries` into the linear regression ``y = phi @ w + noise`` for one
state variable.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

FEATURE_KINDS = ("monomial", "hill_repress", "hill_activate", "pair_coupling", "constant")
COUPLINGS = ("sin_diff", "cos_diff", "lin_diff", "sin2_diff", "cos2_diff")
OUTPUT_MODES = ("next_state", "finite_difference")


class DictionaryEvaluationError(ValueError):
    """A feature produced a non-finite or out-of-domain value.

    Attributes
    ----------
    row, column : int
        Position in the regression matrix of the first offending entry.
    label : str
        Label of the offending feature.
    """

    def __init__(self, message: str, row: int, column: int, label: str):
        super().__init__(message)
        self.row = row
        self.column = column
        self.label = label


# ---------------------------------------------------------------------------
# Time series
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TimeSeries:
    """Sampled state (and optional input) trajectories.

    Parameters
    ----------
    times : array_like, shape (M+1,)
        Strictly increasing sample instants.
    states : array_like, shape (M+1, n_x)
        State samples, one row per instant.
    inputs : array_like, shape (M+1, n_u), optional
        Exogenous input samples.
    """

    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray | None = None

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float).reshape(-1)
        x = np.asarray(self.states, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if t.size < 2:
            raise ValueError("a time series needs at least 2 samples")
        if not np.all(np.diff(t) > 0):
            raise ValueError("times must be strictly increasing")
        if x.ndim != 2 or x.shape[0] != t.size:
            raise ValueError(f"states must have {t.size} rows, got shape {x.shape}")
        u = self.inputs
        if u is not None:
            u = np.asarray(u, dtype=float)
            if u.ndim == 1:
                u = u[:, None]
            if u.shape[0] != t.size:
                raise ValueError(f"inputs must have {t.size} rows, got shape {u.shape}")
            if u.shape[1] == 0:
                u = None
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "states", x)
        object.__setattr__(self, "inputs", u)

    @property
    def n_x(self) -> int:
        return self.states.shape[1]

    @property
    def n_u(self) -> int:
        return 0 if self.inputs is None else self.inputs.shape[1]

    @property
    def n_samples(self) -> int:
        return self.times.size

    def to_csv(self) -> str:
        """Serialise with header ``t,x1..xn[,u1..um]``."""
        header = ["t"] + [f"x{i + 1}" for i in range(self.n_x)]
        header += [f"u{i + 1}" for i in range(self.n_u)]
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        for k in range(self.n_samples):
            row = [self.times[k], *self.states[k]]
            if self.inputs is not None:
                row += list(self.inputs[k])
            writer.writerow([repr(float(v)) for v in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "TimeSeries":
        rows = [r for r in csv.reader(io.StringIO(text)) if r]
        if not rows:
            raise ValueError("empty CSV")
        header = [h.strip() for h in rows[0]]
        if not header or header[0] != "t":
            raise ValueError("CSV header must start with 't'")
        x_cols = [i for i, h in enumerate(header) if h.startswith("x")]
        u_cols = [i for i, h in enumerate(header) if h.startswith("u")]
        if len(x_cols) + len(u_cols) + 1 != len(header) or not x_cols:
            raise ValueError(f"unrecognised CSV header: {header}")
        try:
            data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
        except ValueError as exc:
            raise ValueError(f"non-numeric CSV entry: {exc}") from None
        if data.ndim != 2 or data.shape[1] != len(header):
            raise ValueError("ragged CSV rows")
        inputs = data[:, u_cols] if u_cols else None
        return cls(data[:, 0], data[:, x_cols], inputs)


# ---------------------------------------------------------------------------
# Features
# ---------------------------------------------------------------------------


def _var_name(block: str, index: int, lag: int) -> str:
    name = f"{block}{index + 1}"
    return name if lag == 0 else f"{name}[k-{lag}]"


@dataclass(frozen=True)
class FeatureFunction:
    """One candidate basis function.

    ``factors`` describes a monomial as ``((block, index, lag, power), ...)``
    with ``block`` either ``"x"`` or ``"u"``.  Hill kinds use ``target_var``
    and ``hill_coefficient``; pair couplings use ``pair = (j, i)`` and act on
    ``x_j - x_i``.
    """

    kind: str
    factors: tuple[tuple[str, int, int, int], ...] = ()
    target_var: int | None = None
    hill_coefficient: int | None = None
    pair: tuple[int, int] | None = None
    coupling: str | None = None

    def __post_init__(self):
        if self.kind not in FEATURE_KINDS:
            raise ValueError(f"unknown feature kind {self.kind!r}")
        if self.kind == "monomial":
            for block, index, lag, power in self.factors:
                if block not in ("x", "u") or index < 0 or lag < 0 or power < 0:
                    raise ValueError(f"invalid monomial factor {(block, index, lag, power)}")
        elif self.kind in ("hill_repress", "hill_activate"):
            if self.target_var is None or self.target_var < 0:
                raise ValueError("hill features need a valid target_var")
            if self.hill_coefficient is None or self.hill_coefficient < 1:
                raise ValueError("hill_coefficient must be >= 1")
        elif self.kind == "pair_coupling":
            if self.pair is None or self.coupling not in COUPLINGS:
                raise ValueError("pair couplings need a pair and a known coupling id")
            j, i = self.pair
            if j == i or j < 0 or i < 0:
                raise ValueError(f"invalid coupling pair {self.pair}")

    @property
    def label(self) -> str:
        if self.kind == "constant":
            return "1"
        if self.kind == "monomial":
            parts = []
            for block, index, lag, power in self.factors:
                if power == 0:
                    continue
                name = _var_name(block, index, lag)
                parts.append(name if power == 1 else f"{name}^{power}")
            return "*".join(parts) if parts else "1"
        if self.kind == "hill_repress":
            return f"1/(1+x{self.target_var + 1}^{self.hill_coefficient})"
        if self.kind == "hill_activate":
            p = f"x{self.target_var + 1}^{self.hill_coefficient}"
            return f"{p}/(1+{p})"
        j, i = self.pair
        d = f"x{j + 1}-x{i + 1}"
        return {
            "sin_diff": f"sin({d})",
            "cos_diff": f"cos({d})",
            "lin_diff": f"({d})",
            "sin2_diff": f"sin^2({d})",
            "cos2_diff": f"cos^2({d})",
        }[self.coupling]

    def max_lags(self) -> tuple[int, int]:
        """Largest state lag and input lag used by this feature."""
        mx = max((lag for b, _, lag, p in self.factors if b == "x" and p > 0), default=0)
        mu = max((lag for b, _, lag, p in self.factors if b == "u" and p > 0), default=0)
        return mx, mu

    def evaluate(self, states: np.ndarray, inputs: np.ndarray | None, rows: np.ndarray) -> np.ndarray:
        """Evaluate on sample indices ``rows`` (lags index backwards)."""
        n = rows.size
        if self.kind == "constant":
            return np.ones(n)
        if self.kind == "monomial":
            out = np.ones(n)
            for block, index, lag, power in self.factors:
                if power == 0:
                    continue
                src = states if block == "x" else inputs
                out = out * src[rows - lag, index] ** power
            return out
        if self.kind in ("hill_repress", "hill_activate"):
            p = states[rows, self.target_var] ** self.hill_coefficient
            if self.kind == "hill_repress":
                return 1.0 / (1.0 + p)
            return p / (1.0 + p)
        j, i = self.pair
        d = states[rows, j] - states[rows, i]
        if self.coupling == "sin_diff":
            return np.sin(d)
        if self.coupling == "cos_diff":
            return np.cos(d)
        if self.coupling == "lin_diff":
            return d.copy()
        if self.coupling == "sin2_diff":
            return np.sin(d) ** 2
        return np.cos(d) ** 2

    def to_dict(self) -> dict:
        d: dict = {"kind": self.kind}
        if self.kind == "monomial":
            d["factors"] = [list(f) for f in self.factors]
        elif self.kind in ("hill_repress", "hill_activate"):
            d["target_var"] = self.target_var
            d["hill_coefficient"] = self.hill_coefficient
        elif self.kind == "pair_coupling":
            d["pair"] = list(self.pair)
            d["coupling"] = self.coupling
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureFunction":
        kind = d["kind"]
        if kind == "monomial":
            return cls(kind, factors=tuple((str(b), int(i), int(l), int(p)) for b, i, l, p in d["factors"]))
        if kind in ("hill_repress", "hill_activate"):
            return cls(kind, target_var=int(d["target_var"]), hill_coefficient=int(d["hill_coefficient"]))
        if kind == "pair_coupling":
            j, i = d["pair"]
            return cls(kind, pair=(int(j), int(i)), coupling=d["coupling"])
        return cls(kind)


@dataclass(frozen=True)
class DictionarySpec:
    """Ordered feature list plus the dimensions and memory orders it assumes."""

    features: tuple[FeatureFunction, ...]
    n_x: int
    n_u: int = 0
    m_x: int = 0
    m_u: int = 0

    def __post_init__(self):
        feats = tuple(self.features)
        object.__setattr__(self, "features", feats)
        if not feats:
            raise ValueError("a dictionary needs at least one feature")
        if min(self.n_x, self.n_u, self.m_x, self.m_u) < 0:
            raise ValueError("dimensions and memory orders must be >= 0")
        for f in feats:
            mx, mu = f.max_lags()
            if mx > self.m_x or mu > self.m_u:
                raise ValueError(f"feature {f.label} exceeds the memory orders")
            for block, index, _, power in f.factors:
                bound = self.n_x if block == "x" else self.n_u
                if power > 0 and index >= bound:
                    raise ValueError(f"feature {f.label} references a missing variable")
            refs = [v for v in (f.target_var,) if v is not None] + list(f.pair or ())
            if any(v >= self.n_x for v in refs):
                raise ValueError(f"feature {f.label} references a missing state")

    def __len__(self) -> int:
        return len(self.features)

    @property
    def labels(self) -> list[str]:
        return [f.label for f in self.features]

    @property
    def max_lag(self) -> int:
        return max(self.m_x, self.m_u)

    def to_json(self) -> str:
        payload = {
            "n_x": self.n_x,
            "n_u": self.n_u,
            "m_x": self.m_x,
            "m_u": self.m_u,
            "features": [f.to_dict() for f in self.features],
            "labels": self.labels,
        }
        return json.dumps(payload, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "DictionarySpec":
        d = json.loads(text)
        feats = tuple(FeatureFunction.from_dict(f) for f in d["features"])
        return cls(feats, int(d["n_x"]), int(d.get("n_u", 0)), int(d.get("m_x", 0)), int(d.get("m_u", 0)))


@dataclass(frozen=True)
class RegressionProblem:
    """Linear regression ``y = phi @ w + noise`` for one state variable."""

    y: np.ndarray
    phi: np.ndarray
    column_labels: tuple[str, ...]
    target_label: str = ""
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).reshape(-1)
        phi = np.asarray(self.phi, dtype=float)
        if phi.ndim != 2 or phi.shape[0] != y.size:
            raise ValueError(f"phi must have {y.size} rows, got shape {phi.shape}")
        labels = tuple(self.column_labels)
        if len(labels) != phi.shape[1]:
            raise ValueError("one label per column of phi is required")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(phi))):
            raise ValueError("regression data must be finite")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "column_labels", labels)

    @property
    def shape(self) -> tuple[int, int]:
        return self.phi.shape


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------


def _monomials(variables: Sequence[tuple[str, int, int]], degree: int) -> list[tuple]:
    """All monomials of total degree <= ``degree``, graded then lexicographic."""
    out: list[tuple] = [()]
    for d in range(1, degree + 1):
        for combo in itertools.combinations_with_replacement(range(len(variables)), d):
            powers: dict[int, int] = {}
            for v in combo:
                powers[v] = powers.get(v, 0) + 1
            out.append(tuple((*variables[v], p) for v, p in sorted(powers.items())))
    return out


def build_narx_spec(n_x: int, n_u: int, d_x: int, d_u: int, m_x: int, m_u: int) -> DictionarySpec:
    """Polynomial NARX dictionary over lagged states and inputs.

    Each feature is the product of a state monomial of degree <= ``d_x`` in the
    ``(m_x+1)*n_x`` lagged states and an input monomial of degree <= ``d_u`` in
    the ``(m_u+1)*n_u`` lagged inputs.  State monomials form the outer loop;
    both blocks are ordered by degree, then lexicographically by
    ``(lag, variable)``.
    """
    args = (n_x, n_u, d_x, d_u, m_x, m_u)
    if any(a < 0 for a in args):
        raise ValueError("build_narx_spec arguments must be >= 0")
    if d_x + d_u < 1:
        raise ValueError("need d_x + d_u >= 1")
    xs = [("x", i, lag) for lag in range(m_x + 1) for i in range(n_x)]
    us = [("u", i, lag) for lag in range(m_u + 1) for i in range(n_u)]
    feats = []
    for sm in _monomials(xs, d_x):
        for um in _monomials(us, d_u):
            factors = sm + um
            feats.append(FeatureFunction("monomial", factors=factors) if factors else FeatureFunction("constant"))
    return DictionarySpec(tuple(feats), n_x, n_u, m_x if n_x else 0, m_u if n_u else 0)


def narx_feature_count(n_x: int, n_u: int, d_x: int, d_u: int, m_x: int, m_u: int) -> int:
    """Closed-form size of :func:`build_narx_spec`."""
    return math.comb((m_x + 1) * n_x + d_x, d_x) * math.comb((m_u + 1) * n_u + d_u, d_u)


def build_hill_spec(n_x: int, h_max: int) -> DictionarySpec:
    """Linear terms followed by repressing and activating Hill terms per ``h``."""
    if n_x < 1 or h_max < 1:
        raise ValueError("need n_x >= 1 and h_max >= 1")
    feats = [FeatureFunction("monomial", factors=(("x", i, 0, 1),)) for i in range(n_x)]
    for h in range(1, h_max + 1):
        feats += [FeatureFunction("hill_repress", target_var=i, hill_coefficient=h) for i in range(n_x)]
        feats += [FeatureFunction("hill_activate", target_var=i, hill_coefficient=h) for i in range(n_x)]
    return DictionarySpec(tuple(feats), n_x)


def hill_column(n_x: int, var: int, h: int, activating: bool = False) -> int:
    """Column index of a Hill term in :func:`build_hill_spec` order."""
    return n_x + (h - 1) * 2 * n_x + (n_x if activating else 0) + var


def build_kuramoto_spec(n: int, target: int) -> DictionarySpec:
    """Five couplings of ``x_j - x_target`` for every ``j != target``, then a constant."""
    if n < 2:
        raise ValueError("need n >= 2")
    if not 0 <= target < n:
        raise ValueError(f"target {target} out of range for n = {n}")
    feats = []
    for j in range(n):
        if j == target:
            continue
        feats += [FeatureFunction("pair_coupling", pair=(j, target), coupling=c) for c in COUPLINGS]
    feats.append(FeatureFunction("constant"))
    return DictionarySpec(tuple(feats), n)


def kuramoto_column(n: int, target: int, source: int, coupling: str = "sin_diff") -> int:
    """Column index of a coupling term in :func:`build_kuramoto_spec` order."""
    if source == target:
        raise ValueError("no self-coupling columns")
    slot = source if source < target else source - 1
    return 5 * slot + COUPLINGS.index(coupling)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def _check_domain(col: np.ndarray, feat: FeatureFunction, states: np.ndarray, rows: np.ndarray, j: int):
    if feat.kind in ("hill_repress", "hill_activate"):
        bad = np.flatnonzero(states[rows, feat.target_var] < 0)
        if bad.size:
            r = int(bad[0])
            raise DictionaryEvaluationError(
                f"Hill feature {feat.label} evaluated at negative state "
                f"{states[rows[r], feat.target_var]!r} (row {r}, column {j})",
                r, j, feat.label,
            )
    bad = np.flatnonzero(~np.isfinite(col))
    if bad.size:
        r = int(bad[0])
        raise DictionaryEvaluationError(
            f"non-finite value in feature {feat.label} (row {r}, column {j})", r, j, feat.label
        )


def evaluate_matrix(spec: DictionarySpec, ts: TimeSeries, rows: np.ndarray | None = None) -> np.ndarray:
    """Evaluate every feature on the given sample indices.

    With ``rows=None`` the regression rows ``max_lag .. n_samples-2`` are used.
    """
    if ts.n_x != spec.n_x:
        raise ValueError(f"spec expects {spec.n_x} states, series has {ts.n_x}")
    if spec.n_u and ts.n_u != spec.n_u:
        raise ValueError(f"spec expects {spec.n_u} inputs, series has {ts.n_u}")
    if rows is None:
        rows = np.arange(spec.max_lag, ts.n_samples - 1)
    rows = np.asarray(rows, dtype=np.int64)
    phi = np.empty((rows.size, len(spec)))
    with np.errstate(all="ignore"):
        for j, feat in enumerate(spec.features):
            col = feat.evaluate(ts.states, ts.inputs, rows)
            _check_domain(col, feat, ts.states, rows, j)
            phi[:, j] = col
    return phi


def evaluate(
    spec: DictionarySpec,
    ts: TimeSeries,
    target_state: int,
    output_mode: str = "finite_difference",
) -> RegressionProblem:
    """Build the regression problem for one state variable.

    Row ``k`` of ``phi`` holds the features at sample ``k`` (with lags) and
    ``y_k`` is either ``x(t_{k+1})`` (``next_state``) or the divided
    difference ``(x(t_{k+1}) - x(t_k)) / (t_{k+1} - t_k)``
    (``finite_difference``).  The number of rows is
    ``n_samples - 1 - max_lag``.

    Raises
    ------
    DictionaryEvaluationError
        If a feature is non-finite or out of its domain; the message names the
        row and column.
    """
    if output_mode not in OUTPUT_MODES:
        raise ValueError(f"output_mode must be one of {OUTPUT_MODES}")
    if not 0 <= target_state < ts.n_x:
        raise ValueError(f"target_state {target_state} out of range for {ts.n_x} states")
    if ts.n_samples - 1 - spec.max_lag < 1:
        raise ValueError("time series too short for the dictionary memory order")
    rows = np.arange(spec.max_lag, ts.n_samples - 1)
    phi = evaluate_matrix(spec, ts, rows)
    x = ts.states[:, target_state]
    if output_mode == "next_state":
        y = x[rows + 1].copy()
    else:
        y = (x[rows + 1] - x[rows]) / (ts.times[rows + 1] - ts.times[rows])
    return RegressionProblem(
        y,
        phi,
        tuple(spec.labels),
        f"x{target_state + 1}:{output_mode}",
        meta={"target_state": target_state, "output_mode": output_mode},
    )


def parse_dict_option(text: str, n_x: int, n_u: int = 0, target: int | None = None) -> DictionarySpec:
    """Build a spec from a short string: ``hill:H``, ``narx:dx,du,mx,mu`` or ``kuramoto``."""
    kind, _, arg = text.partition(":")
    kind = kind.strip().lower()
    if kind == "hill":
        return build_hill_spec(n_x, int(arg) if arg else 4)
    if kind == "narx":
        parts = [int(p) for p in arg.split(",")]
        if len(parts) != 4:
            raise ValueError("narx dictionary needs dx,du,mx,mu")
        return build_narx_spec(n_x, n_u, *parts)
    if kind == "kuramoto":
        if target is None:
            raise ValueError("kuramoto dictionaries depend on the target state")
        return build_kuramoto_spec(n_x, target)
    raise ValueError(f"unknown dictionary {text!r}")


def select_columns(spec: DictionarySpec, kinds: Iterable[str] = (), labels: Iterable[str] = ()) -> np.ndarray:
    """Indices of columns whose kind is in ``kinds`` or whose label matches a glob in ``labels``."""
    import fnmatch

    kinds = set(kinds)
    pats = list(labels)
    idx = [
        j
        for j, f in enumerate(spec.features)
        if f.kind in kinds or any(fnmatch.fnmatchcase(f.label, p) for p in pats)
    ]
    return np.array(idx, dtype=np.int64)
