"""Scene and instruction data model, file schemas, and triplet corpus building.

Scene files are JSON, one scene per file:

    {"scene_id": ..., "split": "train"|"val"|"test", "points_path"?: ...,
     "objects": [{"object_id", "label", "box": {"center": [3], "size": [3], "heading"}}],
     "views": [{"view_id", "image_path"?,
                "intrinsics": {"fx","fy","cx","cy","width","height"},
                "pose": {"rotation": [3][3], "translation": [3],
                         "convention": "camera_to_world"}}]}

Record files (instructions, triplets, predictions, composed questions) are
line-delimited JSON, UTF-8, with keys in a fixed order so identical inputs
produce byte-identical outputs.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .errors import DuplicateId, NoneVisible, SchemaError, UnknownScene
from .geometry import CameraIntrinsics, CameraPose, OrientedBox3D
from .selection import AlignmentConfig, image_ref, select_view_for_dc, select_view_for_qa, visible_objects
from .solvability import SceneObject, View

logger = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")
TASKS = ("qa", "dc", "caption")
TRIPLET_SOURCES = ("generated_caption", "extended_qa", "extended_dc")


@dataclass(eq=False)
class Scene:
    """A 3D scene: annotated objects, posed views, and a dataset split."""

    scene_id: str
    objects: list[SceneObject]
    views: list[View]
    split: str
    points_path: str | None = None

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ValueError(f"split must be one of {SPLITS}")
        object_ids = [obj.object_id for obj in self.objects]
        if len(set(object_ids)) != len(object_ids):
            raise DuplicateId(f"scene {self.scene_id}: duplicate object ids")
        view_ids = [view.view_id for view in self.views]
        if len(set(view_ids)) != len(view_ids):
            raise DuplicateId(f"scene {self.scene_id}: duplicate view ids")

    def objects_by_id(self) -> dict[int, SceneObject]:
        return {obj.object_id: obj for obj in self.objects}

    def views_by_id(self) -> dict[str, View]:
        return {view.view_id: view for view in self.views}


@dataclass(eq=False)
class Instruction:
    """A task record: question answering, dense captioning, or captioning."""

    instruction_id: str
    scene_id: str
    task: str
    text: str
    answer: str | None = None
    related_object_ids: frozenset[int] = frozenset()
    target_object_id: int | None = None

    def __post_init__(self):
        self.related_object_ids = frozenset(self.related_object_ids)
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}")
        if self.task == "dc" and self.target_object_id is None:
            raise ValueError("dc instructions require target_object_id")
        if self.task == "qa" and not self.answer:
            raise ValueError("qa instructions require an answer")


@dataclass(frozen=True)
class TripletProvenance:
    config_hash: str = ""
    retrieval_score: float | None = None
    parent_instruction_id: str | None = None


@dataclass(eq=False)
class TripletRecord:
    """One <2D view, set of 3D objects, text> alignment record."""

    triplet_id: str
    scene_id: str
    view_id: str
    object_ids: frozenset[int]
    text: str
    source: str
    provenance: TripletProvenance

    def __post_init__(self):
        self.object_ids = frozenset(self.object_ids)
        if not self.text:
            raise ValueError("triplet text must be non-empty")
        if self.source not in TRIPLET_SOURCES:
            raise ValueError(f"source must be one of {TRIPLET_SOURCES}")


@dataclass(frozen=True)
class CaptionBuildConfig:
    """Caption-strategy knobs: view stride, captions per view, keep threshold,
    and the visibility threshold for the aligned object set."""

    stride: int = 20
    num_captions: int = 3
    threshold: float = 0.5
    tau: float = 0.5

    def __post_init__(self):
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        if self.num_captions < 1:
            raise ValueError("num_captions must be >= 1")


@dataclass(frozen=True)
class ExtendConfig:
    """Extension-strategy knobs: visibility threshold for the aligned object set."""

    tau: float = 0.5


def _require(obj: dict, key: str, path: str):
    if key not in obj:
        raise SchemaError(f"{path}.{key}", "missing")
    return obj[key]


def _parse_box(data: dict, path: str) -> OrientedBox3D:
    try:
        return OrientedBox3D(
            center=_require(data, "center", path),
            size=_require(data, "size", path),
            heading=float(_require(data, "heading", path)),
        )
    except (TypeError, ValueError) as exc:
        raise SchemaError(path, str(exc)) from exc


def _parse_intrinsics(data: dict, path: str) -> CameraIntrinsics:
    try:
        return CameraIntrinsics(
            fx=float(_require(data, "fx", path)),
            fy=float(_require(data, "fy", path)),
            cx=float(_require(data, "cx", path)),
            cy=float(_require(data, "cy", path)),
            width=int(_require(data, "width", path)),
            height=int(_require(data, "height", path)),
        )
    except (TypeError, ValueError) as exc:
        raise SchemaError(path, str(exc)) from exc


def _parse_pose(data: dict, path: str) -> CameraPose:
    convention = _require(data, "convention", path)
    if convention != "camera_to_world":
        raise SchemaError(f"{path}.convention", f"unsupported convention {convention!r}")
    try:
        return CameraPose(
            rotation=_require(data, "rotation", path),
            translation=_require(data, "translation", path),
        )
    except (TypeError, ValueError) as exc:
        raise SchemaError(path, str(exc)) from exc


def load_scene(path: str | Path) -> Scene:
    """Parse and validate one scene file; raises SchemaError / DuplicateId."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(str(path), f"invalid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise SchemaError(str(path), "scene file must hold a JSON object")

    scene_id = _require(data, "scene_id", "scene")
    split = _require(data, "split", "scene")
    if split not in SPLITS:
        raise SchemaError("scene.split", f"must be one of {SPLITS}, got {split!r}")

    objects = []
    for i, entry in enumerate(_require(data, "objects", "scene")):
        where = f"objects[{i}]"
        try:
            objects.append(
                SceneObject(
                    object_id=int(_require(entry, "object_id", where)),
                    label=str(_require(entry, "label", where)),
                    box=_parse_box(_require(entry, "box", where), f"{where}.box"),
                )
            )
        except (TypeError, ValueError) as exc:
            raise SchemaError(where, str(exc)) from exc

    views = []
    for i, entry in enumerate(_require(data, "views", "scene")):
        where = f"views[{i}]"
        try:
            views.append(
                View(
                    view_id=str(_require(entry, "view_id", where)),
                    intrinsics=_parse_intrinsics(
                        _require(entry, "intrinsics", where), f"{where}.intrinsics"
                    ),
                    pose=_parse_pose(_require(entry, "pose", where), f"{where}.pose"),
                    image_path=entry.get("image_path"),
                )
            )
        except (TypeError, ValueError) as exc:
            raise SchemaError(where, str(exc)) from exc

    return Scene(
        scene_id=str(scene_id),
        objects=objects,
        views=views,
        split=str(split),
        points_path=data.get("points_path"),
    )


def load_scenes_dir(directory: str | Path) -> dict[str, Scene]:
    """Load every *.json scene file in a directory, keyed by scene_id."""
    scenes: dict[str, Scene] = {}
    for path in sorted(Path(directory).glob("*.json")):
        scene = load_scene(path)
        if scene.scene_id in scenes:
            raise DuplicateId(f"scene id {scene.scene_id!r} appears in multiple files")
        scenes[scene.scene_id] = scene
    return scenes


def read_instructions(path: str | Path) -> list[Instruction]:
    """Read instruction records from a JSONL file (provenance lines skipped)."""
    records = []
    for lineno, data in _iter_jsonl(path):
        where = f"{path}:{lineno}"
        try:
            records.append(
                Instruction(
                    instruction_id=str(_require(data, "instruction_id", where)),
                    scene_id=str(_require(data, "scene_id", where)),
                    task=str(_require(data, "task", where)),
                    text=str(_require(data, "text", where)),
                    answer=data.get("answer"),
                    related_object_ids=frozenset(
                        int(x) for x in data.get("related_object_ids", [])
                    ),
                    target_object_id=(
                        int(data["target_object_id"])
                        if data.get("target_object_id") is not None
                        else None
                    ),
                )
            )
        except (TypeError, ValueError) as exc:
            raise SchemaError(where, str(exc)) from exc
    return records


def _iter_jsonl(path: str | Path):
    """Yield (lineno, record) for each data line; skips provenance headers."""
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{path}:{lineno}", f"invalid JSON: {exc}") from exc
            if not isinstance(data, dict):
                raise SchemaError(f"{path}:{lineno}", "record must be a JSON object")
            if data.get("record") == "provenance":
                continue
            yield lineno, data


def _register_sidecar(clients, views: Sequence[View], objects, tau: float) -> dict[str, set[int]]:
    """Compute visible-object sets for views and register label sidecars on
    any stub clients.  Returns visible ids keyed by view_id."""
    cfg = AlignmentConfig(tau=tau)
    by_id = {obj.object_id: obj for obj in objects}
    visible: dict[str, set[int]] = {}
    for view in views:
        ids = visible_objects(view, objects, cfg)
        visible[view.view_id] = ids
        labels = sorted({by_id[oid].label for oid in ids})
        for client in clients:
            register = getattr(client, "register_view_labels", None)
            if register is not None:
                register(image_ref(view), labels)
    return visible


def build_caption_triplets(
    scene: Scene,
    caption_client,
    scorer_client,
    cfg: CaptionBuildConfig = CaptionBuildConfig(),
    config_hash: str = "",
) -> list[TripletRecord]:
    """Caption-strategy corpus: sample views, caption them, keep strong matches.

    Every stride-th view (first always included) is captioned num_captions
    times; captions scoring >= threshold against the view survive, each
    becoming one triplet whose object set is the view's visible objects.
    Output order is canonical: view order, then caption index.
    """
    if not scene.views:
        raise ValueError(f"scene {scene.scene_id} has no views")
    sampled = scene.views[:: cfg.stride]
    clients = [caption_client]
    if scorer_client is not caption_client:
        clients.append(scorer_client)
    visible = _register_sidecar(clients, sampled, scene.objects, cfg.tau)

    records = []
    for view in sampled:
        ref = image_ref(view)
        captions = caption_client.caption_image(ref, cfg.num_captions)
        scores = scorer_client.score_image_text(ref, captions).scores
        object_ids = frozenset(visible[view.view_id])
        for idx, (caption, score) in enumerate(zip(captions, scores)):
            if score < cfg.threshold:
                continue
            records.append(
                TripletRecord(
                    triplet_id=f"cap:{scene.scene_id}:{view.view_id}:{idx}",
                    scene_id=scene.scene_id,
                    view_id=view.view_id,
                    object_ids=object_ids,
                    text=caption,
                    source="generated_caption",
                    provenance=TripletProvenance(
                        config_hash=config_hash, retrieval_score=score
                    ),
                )
            )
    return records


def extend_dataset_triplets(
    instructions: Sequence[Instruction],
    scenes_by_id: Mapping[str, Scene],
    scorer_client,
    cfg: ExtendConfig = ExtendConfig(),
    config_hash: str = "",
) -> list[TripletRecord]:
    """Extension-strategy corpus: bind each instruction to its most informative view.

    qa (and caption) instructions pick the view most similar to their text;
    dc instructions pick the view that best captures the target object.
    dc targets visible in no view are logged and skipped, never fatal.
    """
    visible_cache: dict[str, dict[str, set[int]]] = {}
    records = []
    for ins in instructions:
        scene = scenes_by_id.get(ins.scene_id)
        if scene is None:
            raise UnknownScene(f"scene {ins.scene_id!r} is not loaded")
        if ins.scene_id not in visible_cache:
            visible_cache[ins.scene_id] = _register_sidecar(
                [scorer_client], scene.views, scene.objects, cfg.tau
            )
        visible = visible_cache[ins.scene_id]

        if ins.task == "dc":
            try:
                view_id, score = select_view_for_dc(
                    ins.target_object_id, scene.views, scene.objects
                )
            except NoneVisible:
                logger.warning(
                    "skipping %s: target object %s visible in no view of %s",
                    ins.instruction_id,
                    ins.target_object_id,
                    ins.scene_id,
                )
                continue
            source = "extended_dc"
        else:
            view_id, score = select_view_for_qa(ins.text, scene.views, scorer_client)
            source = "extended_qa"

        text = f"{ins.text} {ins.answer}" if ins.answer else ins.text
        records.append(
            TripletRecord(
                triplet_id=f"ext:{ins.instruction_id}",
                scene_id=ins.scene_id,
                view_id=view_id,
                object_ids=frozenset(visible[view_id]),
                text=text,
                source=source,
                provenance=TripletProvenance(
                    config_hash=config_hash,
                    retrieval_score=score,
                    parent_instruction_id=ins.instruction_id,
                ),
            )
        )
    return records


def split_records(records: Sequence, scenes_by_id: Mapping[str, Scene]) -> dict[str, list]:
    """Partition records into train/val/test by their scene's split."""
    out: dict[str, list] = {split: [] for split in SPLITS}
    for record in records:
        scene = scenes_by_id.get(record.scene_id)
        if scene is None:
            raise UnknownScene(f"scene {record.scene_id!r} is not loaded")
        out[scene.split].append(record)
    return out


def triplet_to_dict(record: TripletRecord) -> dict:
    """Serialize with fixed key order for byte-stable files."""
    return {
        "triplet_id": record.triplet_id,
        "scene_id": record.scene_id,
        "view_id": record.view_id,
        "object_ids": sorted(record.object_ids),
        "text": record.text,
        "source": record.source,
        "provenance": {
            "config_hash": record.provenance.config_hash,
            "retrieval_score": record.provenance.retrieval_score,
            "parent_instruction_id": record.provenance.parent_instruction_id,
        },
    }


def triplet_from_dict(data: dict, where: str = "triplet") -> TripletRecord:
    prov = data.get("provenance", {})
    try:
        return TripletRecord(
            triplet_id=str(_require(data, "triplet_id", where)),
            scene_id=str(_require(data, "scene_id", where)),
            view_id=str(_require(data, "view_id", where)),
            object_ids=frozenset(int(x) for x in _require(data, "object_ids", where)),
            text=str(_require(data, "text", where)),
            source=str(_require(data, "source", where)),
            provenance=TripletProvenance(
                config_hash=str(prov.get("config_hash", "")),
                retrieval_score=prov.get("retrieval_score"),
                parent_instruction_id=prov.get("parent_instruction_id"),
            ),
        )
    except (TypeError, ValueError) as exc:
        raise SchemaError(where, str(exc)) from exc


def write_jsonl(path: str | Path, rows: Sequence[dict], provenance: dict | None = None) -> None:
    """Write records as UTF-8 JSON lines with an optional provenance header."""
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        if provenance is not None:
            header = {"record": "provenance", **provenance}
            handle.write(json.dumps(header, ensure_ascii=False) + "\n")
        for row in rows:
            handle.write(json.dumps(row, ensure_ascii=False) + "\n")


def read_triplets(path: str | Path) -> list[TripletRecord]:
    return [
        triplet_from_dict(data, where=f"{path}:{lineno}")
        for lineno, data in _iter_jsonl(path)
    ]
