"""Paired significance tests of group EER differences across models.

Each demographic group contributes one EER per model; two groups are
compared with a paired t-test over the per-model differences, measuring
whether models consistently rank one group above the other (not a
population-level claim).  Two-sided p-values come from the Student-t
survival function, computed via the regularized incomplete beta function so
small degrees of freedom are exact without an external stats dependency.

Cells render as "t / p / sig" with t to 2 decimals, p to 3, and stars
*** (p < 0.001), ** (p < 0.01), * (p < 0.05); all thresholds strict.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateDifferenceError, StatsError

DEFAULT_MIN_SPEAKERS = 4  # groups below this are flagged as underpowered

_BETACF_MAX_ITER = 300
_BETACF_EPS = 3.0e-16
_BETACF_FPMIN = 1.0e-300


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _BETACF_FPMIN:
        d = _BETACF_FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, _BETACF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _BETACF_FPMIN:
            d = _BETACF_FPMIN
        c = 1.0 + aa / c
        if abs(c) < _BETACF_FPMIN:
            c = _BETACF_FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _BETACF_FPMIN:
            d = _BETACF_FPMIN
        c = 1.0 + aa / c
        if abs(c) < _BETACF_FPMIN:
            c = _BETACF_FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _BETACF_EPS:
            return h
    raise StatsError(f"incomplete beta did not converge for a={a}, b={b}, x={x}")


def reg_inc_beta(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b) with the symmetry switch."""
    if a <= 0 or b <= 0:
        raise StatsError("beta parameters must be positive")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_sf(t: float, df: int) -> float:
    """Two-sided Student-t tail probability P(|T| >= |t|)."""
    if df < 1:
        raise StatsError(f"degrees of freedom must be >= 1, got {df}")
    if t == 0.0:
        return 1.0
    x = df / (df + t * t)
    return reg_inc_beta(df / 2.0, 0.5, x)


def significance_stars(p: float) -> str:
    if p < 0.001:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return ""


@dataclass(frozen=True)
class GroupEerVector:
    """Per-model EERs for one demographic group, as fractions in [0, 1]."""

    group_id: str
    speaker_count: int
    eers: tuple[float, ...]
    model_ids: tuple[str, ...]

    def __post_init__(self) -> None:
        eers = tuple(float(v) for v in self.eers)
        model_ids = tuple(self.model_ids)
        object.__setattr__(self, "eers", eers)
        object.__setattr__(self, "model_ids", model_ids)
        if len(eers) != len(model_ids):
            raise StatsError(f"group {self.group_id}: {len(eers)} EERs for {len(model_ids)} models")
        if any(not (0.0 <= v <= 1.0) for v in eers):
            raise StatsError(f"group {self.group_id}: EERs must be fractions in [0, 1]")


@dataclass(frozen=True)
class GroupComparison:
    """Paired-t result; t < 0 means group_b has the higher EER."""

    group_a: str
    group_b: str
    t_stat: float
    p_value: float
    stars: str
    n_models: int

    def cell(self) -> str:
        return f"{self.t_stat:.2f} / {self.p_value:.3f} / {self.stars}"


def paired_t(a: GroupEerVector, b: GroupEerVector) -> GroupComparison:
    """Paired t-test over per-model EER differences (a minus b)."""
    if a.model_ids != b.model_ids:
        raise StatsError(
            f"model order mismatch between {a.group_id} and {b.group_id}: "
            f"{a.model_ids} vs {b.model_ids}")
    n = len(a.eers)
    if n < 2:
        raise StatsError("paired t-test needs at least 2 models")
    d = np.asarray(a.eers) - np.asarray(b.eers)
    sd = float(d.std(ddof=1))
    if sd == 0.0:
        raise DegenerateDifferenceError(
            f"{a.group_id} vs {b.group_id}: all paired differences equal "
            f"({float(d.mean()):+g}); t statistic undefined")
    t = float(d.mean() / (sd / math.sqrt(n)))
    p = t_sf(t, n - 1)
    return GroupComparison(a.group_id, b.group_id, t, p, significance_stars(p), n)


def pairwise_matrix(groups: list[GroupEerVector]) -> list[list[GroupComparison | None]]:
    """Full antisymmetric comparison matrix; diagonal entries are None."""
    if len(groups) < 2:
        raise StatsError("pairwise matrix needs at least 2 groups")
    order = groups[0].model_ids
    for g in groups[1:]:
        if g.model_ids != order:
            raise StatsError(f"group {g.group_id} uses a different model order")
    n = len(groups)
    matrix: list[list[GroupComparison | None]] = [[None] * n for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            comp = paired_t(groups[i], groups[j])
            matrix[i][j] = comp
            matrix[j][i] = GroupComparison(
                comp.group_b, comp.group_a, -comp.t_stat, comp.p_value,
                comp.stars, comp.n_models)
    return matrix


def underpowered_groups(groups: list[GroupEerVector],
                        min_speakers: int = DEFAULT_MIN_SPEAKERS) -> list[str]:
    return [g.group_id for g in groups if g.speaker_count < min_speakers]


def _header(group: GroupEerVector) -> str:
    return f"{group.group_id} (n={group.speaker_count})"


def render_matrix_text(groups: list[GroupEerVector],
                       matrix: list[list[GroupComparison | None]],
                       min_speakers: int = DEFAULT_MIN_SPEAKERS) -> str:
    """Aligned-text matrix in the "t / p / sig" cell format."""
    headers = [_header(g) for g in groups]
    cells = [[("---" if c is None else c.cell()) for c in row] for row in matrix]
    widths = [max(len(headers[j]), max(len(row[j]) for row in cells)) for j in range(len(groups))]
    row_label_w = max(len(h) for h in headers)
    lines = ["Rows: Reference groups (with speaker count); "
             "Columns: Comparison groups. Cells: t / p / sig."]
    lines.append(" " * row_label_w + "  " + "  ".join(h.ljust(widths[j]) for j, h in enumerate(headers)))
    for i, row in enumerate(cells):
        lines.append(headers[i].ljust(row_label_w) + "  "
                     + "  ".join(row[j].ljust(widths[j]) for j in range(len(groups))))
    weak = underpowered_groups(groups, min_speakers)
    if weak:
        lines.append(f"Underpowered groups (fewer than {min_speakers} speakers): {', '.join(weak)}")
    return "\n".join(lines) + "\n"


def load_group_eers(path: str | Path, model_subset: list[str] | None = None) -> list[GroupEerVector]:
    """Load per-group EER vectors from a JSON override file.

    Schema: {"models": [...], "unit": "percent"|"fraction",
             "groups": [{"group_id", "speaker_count", "eers"}, ...]}.
    ``model_subset`` restricts and reorders the vectors to those models.
    """
    path = Path(path)
    if not path.exists():
        raise StatsError(f"group EER file not found: {path}")
    data = json.loads(path.read_text())
    models = list(data.get("models", []))
    if not models:
        raise StatsError(f"{path}: missing model list")
    unit = data.get("unit", "percent")
    if unit not in ("percent", "fraction"):
        raise StatsError(f"{path}: unit must be percent or fraction, got {unit!r}")
    scale = 0.01 if unit == "percent" else 1.0
    if model_subset:
        missing = [m for m in model_subset if m not in models]
        if missing:
            raise StatsError(f"{path}: model subset entries not present: {missing}")
        indices = [models.index(m) for m in model_subset]
        selected = list(model_subset)
    else:
        indices = list(range(len(models)))
        selected = models
    groups = []
    for entry in data.get("groups", []):
        eers = entry["eers"]
        if len(eers) != len(models):
            raise StatsError(f"{path}: group {entry.get('group_id')} has {len(eers)} EERs "
                             f"for {len(models)} models")
        groups.append(GroupEerVector(
            group_id=entry["group_id"],
            speaker_count=int(entry.get("speaker_count", 0)),
            eers=tuple(eers[i] * scale for i in indices),
            model_ids=tuple(selected),
        ))
    if not groups:
        raise StatsError(f"{path}: no groups defined")
    return groups


def render_matrix_csv(groups: list[GroupEerVector],
                      matrix: list[list[GroupComparison | None]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["reference_group"] + [_header(g) for g in groups])
    for i, g in enumerate(groups):
        writer.writerow([_header(g)] + [("---" if c is None else c.cell()) for c in matrix[i]])
    return buf.getvalue()
