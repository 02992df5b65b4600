"""Output-array encoding and the two adversarial loss functions.

A model's output is a stack of rows: row 0 scores the primary label, rows 1..K
score one confound each. Targets are one-hot rows. Both losses are weighted,
per-row-normalized binary cross-entropies; they differ only in the confound
targets. The regressor loss uses the true confound categories. The encoder loss
replaces every confound row with the constant first-category one-hot
[1, 0, ..., 0], so an encoder trained against it is rewarded for features from
which confounds cannot be recovered.

Rows are ragged (each row has its own arity) and each row is normalized by its
own arity. Rows whose target value is missing are skipped by both losses.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import InputError, ConfigError

# Probabilities are clamped to [PROB_EPS, 1 - PROB_EPS] before any log.
PROB_EPS = 1e-7

# Sentinel for a missing confound category in integer-coded data.
MISSING_CODE = 255


@dataclass(frozen=True)
class ConfoundSpec:
    """One confound: named categories, plus bin edges when the source is continuous.

    With `bin_edges = (e0, .., en)`, category i covers [e_i, e_{i+1}); values
    outside [e0, en) do not map and are treated as missing.
    """

    name: str
    categories: Tuple[str, ...]
    bin_edges: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        cats = tuple(str(c) for c in self.categories)
        object.__setattr__(self, "categories", cats)
        if len(cats) < 2:
            raise ConfigError(f"confound {self.name!r} needs at least 2 categories")
        if len(set(cats)) != len(cats):
            raise ConfigError(f"confound {self.name!r} has duplicate categories")
        if self.bin_edges is not None:
            edges = tuple(float(e) for e in self.bin_edges)
            object.__setattr__(self, "bin_edges", edges)
            if len(edges) != len(cats) + 1:
                raise ConfigError(
                    f"confound {self.name!r}: {len(cats)} categories need "
                    f"{len(cats) + 1} bin edges, got {len(edges)}"
                )
            if any(a >= b for a, b in zip(edges, edges[1:])):
                raise ConfigError(f"confound {self.name!r}: bin edges must strictly increase")

    @property
    def arity(self) -> int:
        return len(self.categories)

    @classmethod
    def categorical(cls, name: str, categories: Sequence[str]) -> "ConfoundSpec":
        return cls(name, tuple(categories))

    @classmethod
    def from_bins(cls, name: str, edges: Sequence[float]) -> "ConfoundSpec":
        edges = tuple(float(e) for e in edges)
        cats = tuple(f"[{lo:g},{hi:g})" for lo, hi in zip(edges, edges[1:]))
        return cls(name, cats, edges)

    def encode(self, value) -> Optional[int]:
        """Map a raw value to a category index; None when it does not map."""
        if value is None:
            return None
        if self.bin_edges is not None:
            try:
                v = float(value)
            except (TypeError, ValueError):
                return None
            if not np.isfinite(v) or v < self.bin_edges[0] or v >= self.bin_edges[-1]:
                return None
            return bisect.bisect_right(self.bin_edges, v) - 1
        if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
            return int(value) if 0 <= int(value) < self.arity else None
        s = str(value)
        return self.categories.index(s) if s in self.categories else None

    def midpoints(self) -> np.ndarray:
        """Bin midpoints for binned specs, category indices otherwise."""
        if self.bin_edges is None:
            return np.arange(self.arity, dtype=float)
        e = np.asarray(self.bin_edges)
        return (e[:-1] + e[1:]) / 2.0


def decade_age_spec(name: str = "age", start: float = 25.0, n_bins: int = 7) -> ConfoundSpec:
    """Decade-wide age bins starting at `start` (default [25,35), .., [85,95))."""
    edges = [start + 10.0 * i for i in range(n_bins + 1)]
    return ConfoundSpec.from_bins(name, edges)


@dataclass(frozen=True)
class OutputLayout:
    """Row structure of targets/predictions: label row plus K confound rows."""

    label_arity: int
    confounds: Tuple[ConfoundSpec, ...] = ()
    label_weight: float = 6.0

    def __post_init__(self):
        object.__setattr__(self, "confounds", tuple(self.confounds))
        if self.label_arity < 2:
            raise ConfigError("label arity must be >= 2")
        if self.label_weight <= 0:
            raise ConfigError("label weight must be positive")
        names = [c.name for c in self.confounds]
        if len(set(names)) != len(names):
            raise ConfigError("confound names must be unique")

    @property
    def n_confounds(self) -> int:
        return len(self.confounds)

    @property
    def n_rows(self) -> int:
        return 1 + len(self.confounds)

    @property
    def arities(self) -> Tuple[int, ...]:
        return (self.label_arity,) + tuple(c.arity for c in self.confounds)

    @property
    def total_width(self) -> int:
        return sum(self.arities)

    def row_slices(self) -> List[slice]:
        offs = np.cumsum((0,) + self.arities)
        return [slice(int(a), int(b)) for a, b in zip(offs[:-1], offs[1:])]

    def row_weights(self) -> np.ndarray:
        w = np.ones(self.n_rows)
        w[0] = self.label_weight
        return w

    def label_only(self) -> "OutputLayout":
        return OutputLayout(self.label_arity, (), self.label_weight)

    def confound_index(self, name: str) -> int:
        for i, c in enumerate(self.confounds):
            if c.name == name:
                return i
        raise InputError(f"no confound named {name!r}")


@dataclass
class OutputArray:
    """One sample's stack of rows. Targets are one-hot; predictions sum to 1 per row."""

    rows: List[np.ndarray]
    missing: List[bool] = field(default_factory=list)

    def __post_init__(self):
        self.rows = [np.asarray(r, dtype=float) for r in self.rows]
        if not self.missing:
            self.missing = [False] * len(self.rows)
        if len(self.missing) != len(self.rows):
            raise InputError("missing flags must match row count")

    @property
    def label_row(self) -> np.ndarray:
        return self.rows[0]

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    def flat(self) -> np.ndarray:
        return np.concatenate(self.rows)

    @classmethod
    def from_flat(cls, vec: np.ndarray, layout: OutputLayout,
                  missing: Optional[Sequence[bool]] = None) -> "OutputArray":
        vec = np.asarray(vec, dtype=float).ravel()
        if vec.size != layout.total_width:
            raise InputError(
                f"flat vector of size {vec.size} does not match layout width "
                f"{layout.total_width}"
            )
        rows = [vec[s].copy() for s in layout.row_slices()]
        return cls(rows, list(missing) if missing is not None else [])


def one_hot(index: int, arity: int) -> np.ndarray:
    if not 0 <= index < arity:
        raise InputError(f"index {index} out of range for arity {arity}")
    row = np.zeros(arity)
    row[index] = 1.0
    return row


def encode_sample(label: int, confound_values: Sequence, layout: OutputLayout) -> OutputArray:
    """Build the target array for one sample from raw label/confound values.

    Confound values that are absent or do not map to a category leave the row
    all-zero with its missing flag set.
    """
    label = int(label)
    if not 0 <= label < layout.label_arity:
        raise InputError(f"label {label} out of range for arity {layout.label_arity}")
    if len(confound_values) != layout.n_confounds:
        raise InputError(
            f"expected {layout.n_confounds} confound values, got {len(confound_values)}"
        )
    rows = [one_hot(label, layout.label_arity)]
    missing = [False]
    for spec, value in zip(layout.confounds, confound_values):
        idx = spec.encode(value)
        if idx is None:
            rows.append(np.zeros(spec.arity))
            missing.append(True)
        else:
            rows.append(one_hot(idx, spec.arity))
            missing.append(False)
    return OutputArray(rows, missing)


def target_from_codes(label: int, codes: Sequence[int], layout: OutputLayout) -> OutputArray:
    """Target array from pre-encoded category indices; MISSING_CODE/negatives are missing."""
    rows = [one_hot(int(label), layout.label_arity)]
    missing = [False]
    for spec, code in zip(layout.confounds, codes):
        code = int(code)
        if code == MISSING_CODE or code < 0:
            rows.append(np.zeros(spec.arity))
            missing.append(True)
        else:
            rows.append(one_hot(code, spec.arity))
            missing.append(False)
    return OutputArray(rows, missing)


def confound_mask(layout: OutputLayout) -> OutputArray:
    """The constant target rows the encoder is trained against.

    Every confound row is the first-category one-hot [1, 0, ..., 0]; the label
    row is left undefined (NaN) for the caller to fill with the true label.
    """
    rows = [np.full(layout.label_arity, np.nan)]
    for spec in layout.confounds:
        rows.append(one_hot(0, spec.arity))
    return OutputArray(rows)


def encoder_target(label: int, layout: OutputLayout,
                   missing: Optional[Sequence[bool]] = None) -> OutputArray:
    """True label row plus masked confound rows, as the encoder's training target.

    `missing` flags (length K) mark confound rows absent in the source sample;
    such rows are skipped by the loss exactly as in the regressor target.
    """
    arr = confound_mask(layout)
    arr.rows[0] = one_hot(int(label), layout.label_arity)
    if missing is not None:
        if len(missing) != layout.n_confounds:
            raise InputError("missing flags must have one entry per confound")
        for k, m in enumerate(missing):
            arr.missing[1 + k] = bool(m)
    return arr


def _check_layout_match(arr: OutputArray, layout: OutputLayout, what: str) -> None:
    if arr.n_rows != layout.n_rows:
        raise InputError(f"{what} has {arr.n_rows} rows, layout expects {layout.n_rows}")
    for row, arity in zip(arr.rows, layout.arities):
        if row.size != arity:
            raise InputError(f"{what} row width {row.size} does not match arity {arity}")


def weighted_bce(pred: OutputArray, target: OutputArray, layout: OutputLayout) -> float:
    """Per-row-normalized binary cross-entropy, label row weighted by label_weight.

    Rows flagged missing in the target contribute nothing. Probabilities are
    clamped away from {0, 1} before the logs.
    """
    _check_layout_match(pred, layout, "pred")
    _check_layout_match(target, layout, "target")
    weights = layout.row_weights()
    total = 0.0
    for w, p, t, miss in zip(weights, pred.rows, target.rows, target.missing):
        if miss:
            continue
        p = np.clip(p.astype(np.float64), PROB_EPS, 1.0 - PROB_EPS)
        t = t.astype(np.float64)
        total += w * (-np.mean(t * np.log(p) + (1.0 - t) * np.log(1.0 - p)))
    return float(total)


def encoder_loss(pred: OutputArray, true_label: Union[int, np.ndarray],
                 layout: OutputLayout, missing: Optional[Sequence[bool]] = None) -> float:
    """Loss that drives the encoder: true label, confound rows pinned to [1,0,...,0]."""
    if isinstance(true_label, (int, np.integer)):
        target = encoder_target(int(true_label), layout, missing)
    else:
        target = confound_mask(layout)
        row = np.asarray(true_label, dtype=float)
        if row.size != layout.label_arity:
            raise InputError("true label row width does not match label arity")
        target.rows[0] = row
        if missing is not None:
            for k, m in enumerate(missing):
                target.missing[1 + k] = bool(m)
    return weighted_bce(pred, target, layout)


def regressor_loss(pred: OutputArray, target: OutputArray, layout: OutputLayout) -> float:
    """Loss that drives the regressor: true label and true confound rows."""
    return weighted_bce(pred, target, layout)


# ---------------------------------------------------------------------------
# Batched forms used by the trainer. Targets are flat (batch, total_width)
# matrices plus a per-row inclusion mask; these agree with the per-sample ops
# above and additionally expose the gradient wrt the prediction matrix.
# ---------------------------------------------------------------------------

def batch_targets(labels: np.ndarray, codes: Optional[np.ndarray], layout: OutputLayout,
                  mask_confounds: bool) -> Tuple[np.ndarray, np.ndarray]:
    """Flat one-hot targets and row mask for a batch.

    With `mask_confounds`, confound rows are the constant first-category one-hot
    (the encoder's targets); otherwise they are the true categories. Missing
    codes switch the row off in the mask either way.
    """
    labels = np.asarray(labels, dtype=np.int64)
    n = labels.shape[0]
    if codes is None:
        codes = np.empty((n, 0), dtype=np.int64)
    codes = np.asarray(codes, dtype=np.int64)
    if codes.shape != (n, layout.n_confounds):
        raise InputError(
            f"confound codes shape {codes.shape} does not match "
            f"({n}, {layout.n_confounds})"
        )
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= layout.label_arity:
        raise InputError("label code out of range")
    target = np.zeros((n, layout.total_width), dtype=np.float64)
    row_mask = np.ones((n, layout.n_rows), dtype=bool)
    slices = layout.row_slices()
    target[np.arange(n), slices[0].start + labels] = 1.0
    for k, spec in enumerate(layout.confounds):
        sl = slices[1 + k]
        col = codes[:, k]
        absent = (col == MISSING_CODE) | (col < 0)
        row_mask[:, 1 + k] = ~absent
        if mask_confounds:
            target[:, sl.start] = 1.0
        else:
            ok = ~absent
            if np.any(col[ok] >= spec.arity):
                raise InputError(f"category code out of range for confound {spec.name!r}")
            target[np.flatnonzero(ok), sl.start + col[ok]] = 1.0
    return target, row_mask


def batch_loss_and_grad(pred: np.ndarray, target: np.ndarray, row_mask: np.ndarray,
                        layout: OutputLayout) -> Tuple[float, np.ndarray]:
    """Batch-mean weighted BCE and its gradient wrt the prediction matrix.

    The clamp is treated as pass-through for the gradient so saturated rows
    keep a training signal.
    """
    if pred.shape != target.shape or pred.shape[1] != layout.total_width:
        raise InputError("pred/target shape does not match layout")
    n = pred.shape[0]
    p = np.clip(pred.astype(np.float64), PROB_EPS, 1.0 - PROB_EPS)
    weights = layout.row_weights()
    loss = 0.0
    grad = np.zeros_like(p)
    for r, sl in enumerate(layout.row_slices()):
        arity = sl.stop - sl.start
        m = row_mask[:, r].astype(np.float64)
        t = target[:, sl]
        pr = p[:, sl]
        row_bce = -(t * np.log(pr) + (1.0 - t) * np.log(1.0 - pr)).sum(axis=1) / arity
        loss += weights[r] * float(m @ row_bce)
        grad[:, sl] = (weights[r] / arity) * m[:, None] * (
            -t / pr + (1.0 - t) / (1.0 - pr))
    loss /= n
    grad /= n
    return float(loss), grad.astype(pred.dtype, copy=False)
