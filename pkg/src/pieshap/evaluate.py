"""From Shapley values to an explanation subset and insertion/deletion faithfulness.

Because the explanation score is additive in the per-concept values, the
unconstrained argmax over subsets is simply the set of positive-value
concepts.  Faithfulness curves query the game at n+1 prefix coalitions of
the importance ranking; AUC is the exact rational trapezoid over the
fraction axis, rounded once at the end (so constant curves give exactly
their level and linear ramps exactly 0.5).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .coalitions import Coalition, coalition_from_members, full_coalition
from .fileformat import MissingEntryError, f2s, write_record
from .oracle import GameView
from .shapley import ShapleyEstimate


@dataclass(frozen=True)
class CurvePoint:
    step: int
    fraction: float
    coalition: Coalition
    utility: float


@dataclass
class ExplanationReport:
    ranking: list[int]
    selected: list[int]
    phi_selected: float
    insertion_curve: list[CurvePoint]
    deletion_curve: list[CurvePoint]
    insertion_auc: float
    deletion_auc: float
    timing: Optional[dict[str, float]] = None  # wall clock, excluded from records


def rank_concepts(est: ShapleyEstimate) -> list[int]:
    """Indices sorted by value descending; ties broken by ascending index."""
    return sorted(range(est.n), key=lambda i: (-est.values[i], i))


def select_explanation(
    est: ShapleyEstimate, min_size: int = 0
) -> tuple[list[int], float]:
    """Argmax subset of the additive score: all positive-value concepts.

    With ``min_size=1`` the single top concept is returned when every value
    is <= 0 (instead of the empty set).
    """
    selected = [i for i in range(est.n) if est.values[i] > 0]
    if not selected and min_size >= 1:
        selected = [rank_concepts(est)[0]]
    phi = float(sum(est.values[i] for i in selected))
    return selected, phi


def _curve(game: GameView, ranking: Sequence[int], insertion: bool) -> list[CurvePoint]:
    n = game.n
    if sorted(ranking) != list(range(n)):
        raise ValueError(f"ranking {ranking!r} is not a permutation of 0..{n - 1}")
    points: list[CurvePoint] = []
    missing: list[str] = []
    for j in range(n + 1):
        top = list(ranking[:j])
        if insertion:
            coalition = coalition_from_members(top, n)
        else:
            coalition = coalition_from_members(top, n).complement()
        try:
            u = game.u(coalition)
        except MissingEntryError as e:
            missing.extend(e.coalitions)
            u = float("nan")
        points.append(CurvePoint(step=j, fraction=j / n, coalition=coalition, utility=u))
    if missing:
        raise MissingEntryError(missing)
    return points


def insertion_curve(game: GameView, ranking: Sequence[int]) -> list[CurvePoint]:
    """u at step j over the coalition of the top-j ranked concepts."""
    return _curve(game, ranking, insertion=True)


def deletion_curve(game: GameView, ranking: Sequence[int]) -> list[CurvePoint]:
    """u at step j over the full coalition minus the top-j ranked concepts."""
    return _curve(game, ranking, insertion=False)


def auc(curve: Sequence[CurvePoint] | Sequence[tuple[float, float]]) -> float:
    """Trapezoidal area over the fraction axis, computed in exact rationals."""
    pts = [
        (p.fraction, p.utility) if isinstance(p, CurvePoint) else (p[0], p[1])
        for p in curve
    ]
    if len(pts) < 2:
        raise ValueError(f"curve needs at least 2 points, got {len(pts)}")
    fracs = [p[0] for p in pts]
    if fracs[0] != 0.0 or fracs[-1] != 1.0 or any(
        b <= a for a, b in zip(fracs, fracs[1:])
    ):
        raise ValueError("curve fractions must increase strictly from 0 to 1")
    total = Fraction(0)
    for (f0, v0), (f1, v1) in zip(pts, pts[1:]):
        if not (np.isfinite(v0) and np.isfinite(v1)):
            raise ValueError("non-finite curve value")
        total += (Fraction(f1) - Fraction(f0)) * (Fraction(v0) + Fraction(v1)) / 2
    return float(total)


def build_report(
    game: GameView,
    est: ShapleyEstimate,
    min_size: int = 0,
    timing: Optional[dict[str, float]] = None,
) -> ExplanationReport:
    ranking = rank_concepts(est)
    selected, phi = select_explanation(est, min_size=min_size)
    ins = insertion_curve(game, ranking)
    dele = deletion_curve(game, ranking)
    return ExplanationReport(
        ranking=ranking,
        selected=selected,
        phi_selected=phi,
        insertion_curve=ins,
        deletion_curve=dele,
        insertion_auc=auc(ins),
        deletion_auc=auc(dele),
        timing=timing,
    )


def curve_table(curve: Sequence[CurvePoint]) -> str:
    """Plain tabular text, one row per step: step, fraction, coalition, u."""
    lines = ["step\tfraction\tcoalition\tu"]
    for p in curve:
        lines.append(f"{p.step}\t{f2s(p.fraction)}\t{p.coalition.to_text()}\t{f2s(p.utility)}")
    return "\n".join(lines) + "\n"


def save_report(report: ExplanationReport, case_id: str, path: str | Path) -> Path:
    payload = {
        "case_id": case_id,
        "ranking": report.ranking,
        "selected": report.selected,
        "phi_selected": f2s(report.phi_selected),
        "insertion_auc": f2s(report.insertion_auc),
        "deletion_auc": f2s(report.deletion_auc),
        "insertion_curve": [
            {"step": p.step, "fraction": f2s(p.fraction), "coalition": p.coalition.to_text(), "u": f2s(p.utility)}
            for p in report.insertion_curve
        ],
        "deletion_curve": [
            {"step": p.step, "fraction": f2s(p.fraction), "coalition": p.coalition.to_text(), "u": f2s(p.utility)}
            for p in report.deletion_curve
        ],
    }
    return write_record(path, "explanation", payload)


def curve_svg(report: ExplanationReport, title: str = "") -> str:
    """Dependency-free SVG of both faithfulness curves with AUC annotation."""
    width, height, margin = 480, 320, 40

    def pts(curve: Sequence[CurvePoint]) -> str:
        coords = []
        for p in curve:
            x = margin + p.fraction * (width - 2 * margin)
            y = height - margin - p.utility * (height - 2 * margin)
            coords.append(f"{x:.2f},{y:.2f}")
        return " ".join(coords)

    ins = report.insertion_auc * 100
    dele = report.deletion_auc * 100
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">\n'
        f'<rect width="{width}" height="{height}" fill="white"/>\n'
        f'<text x="{margin}" y="20" font-size="13">{title}</text>\n'
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
        f'y2="{height - margin}" stroke="black"/>\n'
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" '
        f'stroke="black"/>\n'
        f'<polyline points="{pts(report.insertion_curve)}" fill="none" stroke="green"/>\n'
        f'<polyline points="{pts(report.deletion_curve)}" fill="none" stroke="red"/>\n'
        f'<text x="{margin}" y="{height - 10}" font-size="12" fill="green">'
        f"insertion AUC {ins:.2f}</text>\n"
        f'<text x="{width / 2}" y="{height - 10}" font-size="12" fill="red">'
        f"deletion AUC {dele:.2f}</text>\n"
        f"</svg>\n"
    )
