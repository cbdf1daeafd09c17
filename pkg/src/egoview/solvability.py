"""Witness predicates and minimum-view analysis for egocentric view sets.

An object is "witnessed" by a view when its projected 3D box overlaps the
image rectangle with intersection-over-smaller-area above a threshold and the
projection is not impractically small.  An instruction is "solvable" under a
view set when every referenced object is witnessed by at least one view in
the set; the minimum number of views needed is a set-cover optimum over the
per-view witness sets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import geometry
from ._util import percent
from .errors import EmptyInput, NotVisible, UnknownObjectId, UnknownScene
from .geometry import NEAR_PLANE, CameraIntrinsics, CameraPose, OrientedBox3D

BUCKETS = ("1", "2", "3", "4+", "unsolvable")

# Above this many candidate views (after dominance pruning) the exact
# branch-and-bound search is abandoned in favour of greedy max-coverage.
EXACT_SEARCH_LIMIT = 24


@dataclass(eq=False)
class SceneObject:
    """An annotated scene object: id, label, oriented 3D box."""

    object_id: int
    label: str
    box: OrientedBox3D

    def __post_init__(self):
        if not self.label:
            raise ValueError("label must be non-empty")


@dataclass(eq=False)
class View:
    """A posed egocentric camera, optionally backed by an image file."""

    view_id: str
    intrinsics: CameraIntrinsics
    pose: CameraPose
    image_path: str | None = None


@dataclass(frozen=True)
class WitnessConfig:
    """Thresholds for the witness predicate.

    iosa_threshold is strict: overlap must exceed it.  min_area_ratio
    disregards projections smaller than that fraction of the image area,
    which the bare overlap ratio would otherwise count as fully visible.
    """

    iosa_threshold: float = 0.5
    min_area_ratio: float = 0.005

    def __post_init__(self):
        if not (0.0 < self.iosa_threshold < 1.0):
            raise ValueError("iosa_threshold must be in (0, 1)")
        if not (0.0 <= self.min_area_ratio < 1.0):
            raise ValueError("min_area_ratio must be in [0, 1)")


@dataclass(frozen=True)
class ViewRequirement:
    """Minimum-view result: n is None when unsolvable; solver is 'exact' or 'greedy'."""

    n: int | None
    solver: str

    @property
    def bucket(self) -> str:
        if self.n is None:
            return "unsolvable"
        if self.n >= 4:
            return "4+"
        return str(self.n)


def witnesses(view: View, obj: SceneObject, cfg: WitnessConfig = WitnessConfig()) -> bool:
    """True when the object is sufficiently visible in the view.

    Requires a finite projection, projected area at least
    min_area_ratio * image area, and overlap with the image rectangle
    strictly above iosa_threshold.  Geometry failures count as not witnessed.
    """
    try:
        rect = geometry.project_box(obj.box, view.intrinsics, view.pose)
    except NotVisible:
        return False
    image_rect = view.intrinsics.image_rect
    if rect.area < cfg.min_area_ratio * image_rect.area:
        return False
    return bool(geometry.iosa(rect, image_rect) > cfg.iosa_threshold)


def _witness_row(
    corner_block: np.ndarray,
    objects: Sequence[SceneObject],
    view: View,
    cfg: WitnessConfig,
) -> np.ndarray:
    """Witness booleans for one view over all objects.

    corner_block holds precomputed world corners, shape (n_objects, 8, 3).
    Fully-in-front boxes take a vectorized path; boxes straddling the near
    plane fall back to the scalar projector.
    """
    intr = view.intrinsics
    n = corner_block.shape[0]
    cam = (corner_block.reshape(-1, 3) - view.pose.translation) @ view.pose.rotation
    cam = cam.reshape(n, 8, 3)
    z = cam[:, :, 2]
    front = z > NEAR_PLANE
    n_front = front.sum(axis=1)

    x_min = np.full(n, np.nan)
    y_min = np.full(n, np.nan)
    x_max = np.full(n, np.nan)
    y_max = np.full(n, np.nan)

    full = n_front == 8
    if full.any():
        c = cam[full]
        u = intr.cx + intr.fx * c[:, :, 0] / c[:, :, 2]
        v = intr.cy + intr.fy * c[:, :, 1] / c[:, :, 2]
        x_min[full] = u.min(axis=1)
        x_max[full] = u.max(axis=1)
        y_min[full] = v.min(axis=1)
        y_max[full] = v.max(axis=1)

    for idx in np.nonzero((n_front > 0) & ~full)[0]:
        pts = geometry._clip_corners_to_near(cam[idx])
        us = [intr.cx + intr.fx * p[0] / p[2] for p in pts]
        vs = [intr.cy + intr.fy * p[1] / p[2] for p in pts]
        x_min[idx], x_max[idx] = min(us), max(us)
        y_min[idx], y_max[idx] = min(vs), max(vs)

    visible = n_front > 0
    area = np.where(visible, (x_max - x_min) * (y_max - y_min), 0.0)
    img_w, img_h = float(intr.width), float(intr.height)
    img_area = img_w * img_h

    inter_w = np.minimum(x_max, img_w) - np.maximum(x_min, 0.0)
    inter_h = np.minimum(y_max, img_h) - np.maximum(y_min, 0.0)
    inter = np.where(
        visible & (inter_w > 0.0) & (inter_h > 0.0), inter_w * inter_h, 0.0
    )
    smaller = np.minimum(area, img_area)
    ratio = np.zeros(n)
    pos = smaller > 0.0
    ratio[pos] = np.minimum(1.0, inter[pos] / smaller[pos])

    return visible & (area >= cfg.min_area_ratio * img_area) & (ratio > cfg.iosa_threshold)


def witness_matrix(
    scene_objects: Sequence[SceneObject],
    views: Sequence[View],
    cfg: WitnessConfig = WitnessConfig(),
) -> np.ndarray:
    """Boolean matrix of shape (n_views, n_objects): entry (i, j) is witnesses(views[i], objects[j])."""
    if not scene_objects or not views:
        raise EmptyInput("witness_matrix requires at least one view and one object")
    corner_block = np.stack([obj.box.corners() for obj in scene_objects])
    out = np.zeros((len(views), len(scene_objects)), dtype=bool)
    for i, view in enumerate(views):
        out[i] = _witness_row(corner_block, scene_objects, view, cfg)
    return out


def _objects_by_id(scene_objects: Sequence[SceneObject]) -> dict[int, SceneObject]:
    return {obj.object_id: obj for obj in scene_objects}


def _check_known(relevant_ids: Iterable[int], by_id: Mapping[int, SceneObject]) -> frozenset[int]:
    ids = frozenset(relevant_ids)
    missing = ids - by_id.keys()
    if missing:
        raise UnknownObjectId(f"unknown object ids: {sorted(missing)}")
    if not ids:
        raise EmptyInput("relevant object set is empty")
    return ids


def is_solvable(
    relevant_object_ids: Iterable[int],
    view_set: Sequence[View],
    scene_objects: Sequence[SceneObject],
    cfg: WitnessConfig = WitnessConfig(),
) -> bool:
    """True when every relevant object is witnessed by at least one view in the set."""
    by_id = _objects_by_id(scene_objects)
    ids = _check_known(relevant_object_ids, by_id)
    remaining = set(ids)
    for view in view_set:
        remaining = {oid for oid in remaining if not witnesses(view, by_id[oid], cfg)}
        if not remaining:
            return True
    return not remaining


def greedy_cover(
    sets_by_id: Sequence[tuple[str, frozenset]],
    universe: frozenset,
) -> list[str]:
    """Greedy max-coverage: repeatedly take the set covering the most uncovered
    elements, breaking ties by lexicographically smallest id.

    The union of the sets must cover the universe.
    """
    covered: set = set()
    chosen: list[str] = []
    ordered = sorted(sets_by_id, key=lambda kv: kv[0])
    members_of = dict(ordered)
    while covered != universe:
        best_id, best_gain = None, 0
        for set_id, members in ordered:
            gain = len(members - covered)
            if gain > best_gain:
                best_id, best_gain = set_id, gain
        if best_id is None:
            raise ValueError("sets do not cover the universe")
        chosen.append(best_id)
        covered |= members_of[best_id]
    return chosen


def _exact_cover_size(masks: Sequence[int], universe: int, upper_bound: int) -> int:
    """Minimum number of masks whose union covers `universe` (branch and bound).

    The masks must jointly cover the universe; upper_bound is a known
    feasible size used as the initial pruning bound.
    """
    element_bits = [1 << b for b in range(universe.bit_length()) if universe >> b & 1]
    masks_for = {
        bit: [m for m in masks if m & bit] for bit in element_bits
    }
    best = upper_bound

    def dfs(covered: int, used: int) -> None:
        nonlocal best
        if covered == universe:
            best = min(best, used)
            return
        remaining = universe & ~covered
        max_gain = max((m & remaining).bit_count() for m in masks)
        lower = used + math.ceil(remaining.bit_count() / max_gain)
        if lower >= best:
            return
        # Branch on the rarest uncovered element: smallest fan-out first.
        bit = min(
            (b for b in element_bits if remaining & b),
            key=lambda b: len(masks_for[b]),
        )
        candidates = sorted(
            masks_for[bit], key=lambda m: (m & remaining).bit_count(), reverse=True
        )
        for m in candidates:
            dfs(covered | m, used + 1)

    dfs(0, 0)
    return best


def min_cover(
    sets_by_id: Sequence[tuple[str, frozenset]],
    universe: frozenset,
    exact_limit: int = EXACT_SEARCH_LIMIT,
) -> ViewRequirement:
    """Minimum number of sets needed to cover the universe.

    Dominated sets (subsets of another candidate) are pruned first; that
    never changes the optimum.  When at most `exact_limit` candidates remain
    the optimum is found by branch and bound, otherwise greedy max-coverage
    provides an upper bound and the result is tagged 'greedy'.

    Returns an unsolvable requirement when some element is in no set.
    """
    if not universe:
        raise EmptyInput("universe is empty")
    union: set = set()
    for _, members in sets_by_id:
        union |= members
    if not universe <= union:
        return ViewRequirement(None, "exact")

    # Dominance pruning: keep a set only if no kept set is a strict superset
    # (equal sets keep the lexicographically smallest id).
    trimmed = [(set_id, members & universe) for set_id, members in sets_by_id]
    trimmed.sort(key=lambda kv: (-len(kv[1]), kv[0]))
    kept: list[tuple[str, frozenset]] = []
    for set_id, members in trimmed:
        if not members:
            continue
        if any(members <= other for _, other in kept):
            continue
        kept.append((set_id, frozenset(members)))

    greedy_ids = greedy_cover(kept, universe)
    if len(kept) > exact_limit:
        return ViewRequirement(len(greedy_ids), "greedy")

    elements = sorted(universe)
    bit_of = {el: 1 << i for i, el in enumerate(elements)}
    universe_mask = (1 << len(elements)) - 1
    masks = [
        sum(bit_of[el] for el in members) for _, members in kept
    ]
    n = _exact_cover_size(masks, universe_mask, upper_bound=len(greedy_ids))
    return ViewRequirement(n, "exact")


def min_view_count(
    relevant_object_ids: Iterable[int],
    views: Sequence[View],
    scene_objects: Sequence[SceneObject],
    cfg: WitnessConfig = WitnessConfig(),
) -> ViewRequirement:
    """Smallest number of views that jointly witness all relevant objects."""
    by_id = _objects_by_id(scene_objects)
    ids = _check_known(relevant_object_ids, by_id)
    relevant = [by_id[oid] for oid in sorted(ids)]
    if views:
        matrix = witness_matrix(relevant, views, cfg)
    else:
        matrix = np.zeros((0, len(relevant)), dtype=bool)
    sets_by_id = [
        (view.view_id, frozenset(obj.object_id for obj, seen in zip(relevant, matrix[i]) if seen))
        for i, view in enumerate(views)
    ]
    return min_cover(sets_by_id, ids)


@dataclass
class RequirementHistogram:
    """View-requirement distribution over a set of instructions."""

    counts: dict[str, int]
    total: int
    solver_counts: dict[str, int]
    stride: int
    config: WitnessConfig
    min_counts: list[int | None] = field(default_factory=list)

    def percentages(self) -> dict[str, float]:
        return {bucket: percent(self.counts[bucket], self.total) for bucket in BUCKETS}


def view_requirement_stats(
    instructions: Sequence,
    scenes_by_id: Mapping[str, object],
    cfg: WitnessConfig = WitnessConfig(),
    stride: int = 1,
) -> RequirementHistogram:
    """Bucket instructions by their minimum view count: {1, 2, 3, 4+, unsolvable}.

    Instructions must carry `scene_id` and `related_object_ids`; scenes must
    carry `views` and `objects`.  Candidate views are subsampled with
    `stride` (every stride-th view, first always included); the stride is
    recorded in the result rather than hidden.
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    counts = {bucket: 0 for bucket in BUCKETS}
    solver_counts = {"exact": 0, "greedy": 0}
    min_counts: list[int | None] = []
    for ins in instructions:
        scene = scenes_by_id.get(ins.scene_id)
        if scene is None:
            raise UnknownScene(f"scene {ins.scene_id!r} is not loaded")
        views = list(scene.views)[::stride]
        req = min_view_count(ins.related_object_ids, views, scene.objects, cfg)
        counts[req.bucket] += 1
        solver_counts[req.solver] += 1
        min_counts.append(req.n)
    return RequirementHistogram(
        counts=counts,
        total=len(min_counts),
        solver_counts=solver_counts,
        stride=stride,
        config=cfg,
        min_counts=min_counts,
    )
