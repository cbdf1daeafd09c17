"""View selection and filtering: per-instruction best views, caption filtering,
the view-dependent object visibility filter, and diverse-view picking for
2x2 grids."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import geometry
from .errors import NoneVisible, NotVisible, NoViews, TooManyViews, UnknownObjectId
from .solvability import SceneObject, View


@dataclass(frozen=True)
class AlignmentConfig:
    """Visibility threshold for keeping objects aligned with a selected view.

    Unlike the witness predicate there is no minimum-area rule here: the
    filter is a bare overlap test against the image rectangle.
    """

    tau: float = 0.5

    def __post_init__(self):
        if not (0.0 < self.tau < 1.0):
            raise ValueError("tau must be in (0, 1)")


@dataclass(frozen=True)
class DiversityConfig:
    """Pose-based view diversity: translation distance plus weighted rotation angle."""

    k: int = 4
    lambda_rot: float = 1.0
    min_separation: float = 0.3

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.lambda_rot < 0 or self.min_separation < 0:
            raise ValueError("weights must be >= 0")


@dataclass(frozen=True)
class GridCell:
    view_id: str
    image_path: str | None


@dataclass(frozen=True)
class GridManifest:
    """Row-major placement of selected views into a grid; no pixels touched."""

    view_ids: tuple[str, ...]
    rows: int
    cols: int
    cells: tuple[tuple[GridCell | None, ...], ...]


@dataclass(frozen=True)
class DiverseSelection:
    """Selected view ids in pick order; short_selection marks early exhaustion."""

    view_ids: tuple[str, ...]
    short_selection: bool


def image_ref(view: View) -> str:
    """Image reference used in service calls: the image path, else the view id."""
    return view.image_path or view.view_id


def visible_objects(
    view: View,
    objects: Sequence[SceneObject],
    cfg: AlignmentConfig = AlignmentConfig(),
) -> set[int]:
    """Ids of objects whose projected box overlaps the image with IoSA > tau."""
    image_rect = view.intrinsics.image_rect
    kept = set()
    for obj in objects:
        try:
            rect = geometry.project_box(obj.box, view.intrinsics, view.pose)
        except NotVisible:
            continue
        if geometry.iosa(rect, image_rect) > cfg.tau:
            kept.add(obj.object_id)
    return kept


def select_view_for_qa(
    question_text: str,
    views: Sequence[View],
    scorer,
) -> tuple[str, float]:
    """View most semantically similar to the question text, via the scoring client.

    Scores are gathered for every view, then reduced canonically: highest
    score wins, ties broken by smaller view_id.  Returns (view_id, score).
    """
    if not views:
        raise NoViews("select_view_for_qa requires at least one view")
    scored = [
        (view.view_id, scorer.score_image_text(image_ref(view), [question_text]).scores[0])
        for view in views
    ]
    best_id, best_score = min(scored, key=lambda kv: (-kv[1], kv[0]))
    return best_id, best_score


def select_view_for_dc(
    target_object_id: int,
    views: Sequence[View],
    objects: Sequence[SceneObject],
) -> tuple[str, float]:
    """View that best captures the target object, by overlap with the image.

    Ties on overlap break toward the larger projected rectangle (the closer
    view), then the smaller view_id.  Raises NoneVisible when the target
    projects into no view.
    """
    by_id = {obj.object_id: obj for obj in objects}
    if target_object_id not in by_id:
        raise UnknownObjectId(f"unknown target object id {target_object_id}")
    target = by_id[target_object_id]
    candidates = []
    for view in views:
        try:
            rect = geometry.project_box(target.box, view.intrinsics, view.pose)
        except NotVisible:
            continue
        score = geometry.iosa(rect, view.intrinsics.image_rect)
        candidates.append((view.view_id, score, rect.area))
    if not candidates:
        raise NoneVisible(f"object {target_object_id} projects into no view")
    best = min(candidates, key=lambda c: (-c[1], -c[2], c[0]))
    return best[0], best[1]


def filter_captions(
    view: View,
    captions: Sequence[str],
    scorer,
    threshold: float,
) -> list[tuple[str, float]]:
    """Keep captions scoring >= threshold against the view, preserving order."""
    if not captions:
        return []
    scores = scorer.score_image_text(image_ref(view), list(captions)).scores
    return [
        (caption, score)
        for caption, score in zip(captions, scores)
        if score >= threshold
    ]


def pose_distance(a: View, b: View, lambda_rot: float = 1.0) -> float:
    """Translation distance plus lambda_rot times the rotation geodesic angle."""
    dt = float(np.linalg.norm(a.pose.translation - b.pose.translation))
    cos_angle = (np.trace(a.pose.rotation.T @ b.pose.rotation) - 1.0) / 2.0
    angle = math.acos(min(1.0, max(-1.0, cos_angle)))
    return dt + lambda_rot * angle


def select_diverse_views(
    views: Sequence[View],
    cfg: DiversityConfig = DiversityConfig(),
) -> DiverseSelection:
    """Greedy farthest-point pick of up to k pose-diverse views.

    Seeded at the lexicographically smallest view_id; each step adds the
    candidate maximizing its minimum pose distance to the already-selected
    views (ties toward the smaller view_id).  Candidates closer than
    min_separation to any selected view are skipped, so the result's
    pairwise distances are all >= min_separation.
    """
    if not views:
        raise NoViews("select_diverse_views requires at least one view")
    by_id = {view.view_id: view for view in views}
    seed_id = min(by_id)
    selected = [seed_id]
    remaining = sorted(vid for vid in by_id if vid != seed_id)
    while len(selected) < cfg.k and remaining:
        best_id, best_dist = None, -1.0
        for vid in remaining:
            dists = [
                pose_distance(by_id[vid], by_id[sid], cfg.lambda_rot) for sid in selected
            ]
            nearest = min(dists)
            if nearest < cfg.min_separation:
                continue
            if nearest > best_dist:
                best_id, best_dist = vid, nearest
        if best_id is None:
            break
        selected.append(best_id)
        remaining.remove(best_id)
    return DiverseSelection(
        view_ids=tuple(selected), short_selection=len(selected) < cfg.k
    )


def build_grid_manifest(views: Sequence[View]) -> GridManifest:
    """Place up to four views row-major into a 2x2 grid manifest."""
    if not views:
        raise NoViews("build_grid_manifest requires at least one view")
    if len(views) > 4:
        raise TooManyViews(f"grid holds at most 4 views, got {len(views)}")
    ids = [view.view_id for view in views]
    if len(set(ids)) != len(ids):
        raise ValueError("grid views must be distinct")
    slots: list[GridCell | None] = [None] * 4
    for i, view in enumerate(views):
        slots[i] = GridCell(view_id=view.view_id, image_path=view.image_path)
    return GridManifest(
        view_ids=tuple(ids),
        rows=2,
        cols=2,
        cells=(tuple(slots[0:2]), tuple(slots[2:4])),
    )
