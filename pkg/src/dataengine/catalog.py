"""COCO-style annotation catalog and its textual rendering for prompts."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import IO, Optional

from .errors import SchemaError


@dataclass(frozen=True)
class ObjectBox:
    category: str
    bbox: tuple[float, float, float, float]  # x, y, w, h in pixels


@dataclass(frozen=True)
class ImageAnnotation:
    image_id: str
    width: int
    height: int
    captions: tuple[str, ...]
    objects: tuple[ObjectBox, ...]

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise SchemaError(f"image {self.image_id}: non-positive dimensions")
        if not self.captions:
            raise SchemaError(f"image {self.image_id}: at least one caption required")
        for obj in self.objects:
            x, y, w, h = obj.bbox
            if x < 0 or y < 0 or w <= 0 or h <= 0 or x + w > self.width or y + h > self.height:
                raise SchemaError(f"image {self.image_id}: bbox {obj.bbox} outside bounds")


@dataclass
class Catalog:
    annotations: dict[str, ImageAnnotation] = field(default_factory=dict)
    dropped_no_caption: int = 0
    clamp_warnings: int = 0

    def __contains__(self, image_id: str) -> bool:
        return image_id in self.annotations

    def __len__(self) -> int:
        return len(self.annotations)

    def get(self, image_id: str) -> Optional[ImageAnnotation]:
        return self.annotations.get(image_id)

    def image_ids(self) -> list[str]:
        return sorted(self.annotations)


def _load_json(source: IO, what: str) -> dict:
    try:
        obj = json.load(source)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{what}: invalid JSON: {exc}") from exc
    for key in ("images", "annotations"):
        if key not in obj:
            raise SchemaError(f"{what}: missing {key!r} array")
    return obj


def load_catalog(captions_source: IO, instances_source: IO) -> Catalog:
    """Merge COCO captions and instances files into per-image annotations.

    Images with no caption are dropped (counted). Boxes that overflow the image
    bounds (raw COCO occasionally does by sub-pixel amounts) are clamped with a
    warning count; conflicting duplicate image dimensions are an error.
    """
    captions_obj = _load_json(captions_source, "captions file")
    instances_obj = _load_json(instances_source, "instances file")

    dims: dict[str, tuple[int, int]] = {}
    for img in list(captions_obj["images"]) + list(instances_obj["images"]):
        image_id = str(img["id"])
        wh = (int(img["width"]), int(img["height"]))
        if image_id in dims and dims[image_id] != wh:
            raise SchemaError(f"image {image_id}: conflicting dimensions {dims[image_id]} vs {wh}")
        dims[image_id] = wh

    captions: dict[str, list[str]] = {}
    for ann in captions_obj["annotations"]:
        captions.setdefault(str(ann["image_id"]), []).append(ann["caption"])

    categories = {int(c["id"]): c["name"] for c in instances_obj.get("categories", [])}
    objects: dict[str, list[ObjectBox]] = {}
    clamp_warnings = 0
    for ann in instances_obj["annotations"]:
        image_id = str(ann["image_id"])
        if image_id not in dims:
            raise SchemaError(f"instance annotation references unknown image {image_id}")
        width, height = dims[image_id]
        x, y, w, h = (float(v) for v in ann["bbox"])
        cx, cy = max(x, 0.0), max(y, 0.0)
        cw = min(w, width - cx)
        ch = min(h, height - cy)
        if (cx, cy, cw, ch) != (x, y, w, h):
            clamp_warnings += 1
        if cw <= 0 or ch <= 0:
            raise SchemaError(f"image {image_id}: bbox {ann['bbox']} degenerate after clamping")
        category = categories.get(int(ann.get("category_id", -1)), ann.get("category", "object"))
        objects.setdefault(image_id, []).append(ObjectBox(category, (cx, cy, cw, ch)))

    catalog = Catalog(clamp_warnings=clamp_warnings)
    for image_id, (width, height) in dims.items():
        caps = captions.get(image_id)
        if not caps:
            catalog.dropped_no_caption += 1
            continue
        catalog.annotations[image_id] = ImageAnnotation(
            image_id=image_id,
            width=width,
            height=height,
            captions=tuple(caps),
            objects=tuple(objects.get(image_id, [])),
        )
    return catalog


def _round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5))


def render_annotation_text(ann: ImageAnnotation, max_captions: Optional[int] = None) -> str:
    """Deterministic text block: caption lines, then one "category: [x,y,w,h]"
    line per object with integer coordinates, in source order."""
    caps = ann.captions if max_captions is None else ann.captions[:max_captions]
    lines = list(caps)
    for obj in ann.objects:
        coords = ",".join(str(_round_half_up(v)) for v in obj.bbox)
        lines.append(f"{obj.category}: [{coords}]")
    return "\n".join(lines)
