"""Synthetic scenes: region features with known objects and attributes.

A scene holds one to three distinct objects. An object with count ``c``
occupies ``c`` regions; each of those regions carries the same prototype, a
set of scaled one-hot blocks (object identity, color, size, spatial
relation, semantic relation) laid out in disjoint index ranges of the
feature vector. Remaining regions are background (zero prototype). Gaussian
noise is added on top of every region.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .vocab import SubcategoryLexicon


class SceneConfigError(ValueError):
    pass


class DatasetParseError(ValueError):
    pass


@dataclass(frozen=True)
class SceneConfig:
    feature_dim: int = 64
    n_regions: int = 6
    objects: tuple[str, ...] = (
        "cat", "dog", "bird", "horse", "car", "bus",
        "table", "chair", "ball", "kite", "boat", "cup",
    )
    colors: tuple[str, ...] = ("red", "green", "blue", "yellow", "white", "black")
    # word for counts 2, 3, 4; a single object is rendered with the article "a"
    count_words: tuple[str, ...] = ("two", "three", "four")
    sizes: tuple[str, ...] = ("small", "large")
    spatial: tuple[str, ...] = ("on", "near", "behind")
    semantic: tuple[str, ...] = ("sitting", "playing", "flying", "standing")
    noise: float = 0.1
    signal: float = 1.0
    max_objects: int = 3
    max_count: int = 4
    p_color: float = 0.8
    p_size: float = 0.4
    p_semantic: float = 0.4
    p_spatial: float = 0.6
    n_references: int = 1

    def __post_init__(self):
        if self.n_regions < 1:
            raise SceneConfigError("n_regions must be >= 1")
        if self.block_width > self.feature_dim:
            raise SceneConfigError(
                f"feature_dim={self.feature_dim} cannot hold {self.block_width} prototype dimensions"
            )
        if self.max_count > len(self.count_words) + 1:
            raise SceneConfigError(f"max_count={self.max_count} has no count word")
        if not 1 <= self.max_objects <= len(self.objects):
            raise SceneConfigError(f"max_objects={self.max_objects} out of range")
        if not 1 <= self.n_references <= 5:
            raise SceneConfigError("n_references must be between 1 and 5")

    @property
    def block_width(self) -> int:
        return sum(len(b) for b in self._blocks())

    def _blocks(self):
        return (self.objects, self.colors, self.sizes, self.spatial, self.semantic)

    def block_offsets(self) -> dict[str, int]:
        names = ("object", "color", "size", "spatial", "semantic")
        offsets, pos = {}, 0
        for name, block in zip(names, self._blocks()):
            offsets[name] = pos
            pos += len(block)
        return offsets

    def lexicon(self) -> SubcategoryLexicon:
        return SubcategoryLexicon(
            object_set=self.objects,
            color_set=self.colors,
            count_set=self.count_words,
            size_set=self.sizes,
            spatial_set=self.spatial,
            semantic_set=self.semantic,
        )

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}

    @classmethod
    def from_dict(cls, data: dict) -> "SceneConfig":
        return cls(**{k: (tuple(v) if isinstance(v, list) else v) for k, v in data.items()})


PAPER_SCENE_CONFIG = dict(feature_dim=2048, n_regions=36)


@dataclass(frozen=True)
class ObjectSpec:
    name: str
    count: int = 1
    color: str | None = None
    size: str | None = None
    semantic: str | None = None


@dataclass(frozen=True)
class Layout:
    objects: tuple[ObjectSpec, ...]
    # spatial relation of objects[0] with respect to objects[1]
    relation: str | None = None

    def to_dict(self) -> dict:
        return {
            "objects": [o.__dict__.copy() for o in self.objects],
            "relation": self.relation,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Layout":
        return cls(tuple(ObjectSpec(**o) for o in data["objects"]), data.get("relation"))


@dataclass(eq=False)
class Scene:
    scene_id: str
    features: np.ndarray
    gt_objects: tuple[str, ...]
    gt_tuples: frozenset
    references: list[list[str]]
    layout: Layout | None = None

    @property
    def n_regions(self) -> int:
        return self.features.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Scene):
            return NotImplemented
        return (
            self.scene_id == other.scene_id
            and self.features.shape == other.features.shape
            and bool(np.array_equal(self.features, other.features))
            and self.gt_objects == other.gt_objects
            and self.gt_tuples == other.gt_tuples
            and self.references == other.references
            and self.layout == other.layout
        )

    def to_record(self) -> dict:
        return {
            "id": self.scene_id,
            "features": self.features.tolist(),
            "gt_objects": list(self.gt_objects),
            "gt_tuples": sorted(list(t) for t in self.gt_tuples),
            "references": self.references,
            "layout": None if self.layout is None else self.layout.to_dict(),
        }

    @classmethod
    def from_record(cls, rec: dict) -> "Scene":
        features = np.asarray(rec["features"], dtype=np.float64)
        if features.ndim != 2 or features.shape[0] < 1:
            raise ValueError(f"features must be a non-empty matrix, got shape {features.shape}")
        return cls(
            scene_id=str(rec["id"]),
            features=features,
            gt_objects=tuple(rec["gt_objects"]),
            gt_tuples=frozenset(tuple(t) for t in rec["gt_tuples"]),
            references=[list(r) for r in rec["references"]],
            layout=None if rec.get("layout") is None else Layout.from_dict(rec["layout"]),
        )


def count_word(count: int, config: SceneConfig) -> str:
    return "a" if count == 1 else config.count_words[count - 2]


def annotation_tuples(layout: Layout, config: SceneConfig) -> frozenset:
    tuples = set()
    for obj in layout.objects:
        if obj.count > 1:
            tuples.add(("count", obj.name, count_word(obj.count, config)))
        if obj.color:
            tuples.add(("color", obj.name, obj.color))
        if obj.size:
            tuples.add(("size", obj.name, obj.size))
        if obj.semantic:
            tuples.add(("semantic", obj.name, obj.semantic))
    if layout.relation and len(layout.objects) > 1:
        tuples.add(("spatial", layout.objects[0].name, layout.relation))
    return frozenset(tuples)


TEMPLATES = ("full", "brief", "attributes")


def _phrase(obj: ObjectSpec, config: SceneConfig, template: str) -> list[str]:
    words = [count_word(obj.count, config)]
    if template != "brief":
        if obj.size:
            words.append(obj.size)
        if obj.color:
            words.append(obj.color)
    words.append(obj.name if obj.count == 1 else obj.name + "s")
    if template == "full" and obj.semantic:
        words.append(obj.semantic)
    return words


def render_caption(scene_or_layout, template_id: int = 0, config: SceneConfig | None = None) -> list[str]:
    """Instantiate caption template ``template_id`` for a scene layout.

    Templates: 0 mentions every annotation, 1 only counts and nouns,
    2 counts, sizes, colors and nouns without relations.
    """
    config = config or SceneConfig()
    layout = scene_or_layout.layout if isinstance(scene_or_layout, Scene) else scene_or_layout
    template = TEMPLATES[template_id]
    phrases = [_phrase(o, config, template) for o in layout.objects]
    words = list(phrases[0])
    for i, phrase in enumerate(phrases[1:], start=1):
        if i == 1 and template == "full" and layout.relation:
            words.append(layout.relation)
        else:
            words.append("and")
        words.extend(phrase)
    return words


def scene_from_layout(
    layout: Layout,
    config: SceneConfig,
    rng: np.random.Generator,
    scene_id: str = "0",
) -> Scene:
    total = sum(o.count for o in layout.objects)
    if total > config.n_regions:
        raise SceneConfigError(f"layout needs {total} regions, only {config.n_regions} available")
    offsets = config.block_offsets()
    prototypes = []
    for k, obj in enumerate(layout.objects):
        proto = np.zeros(config.feature_dim)
        proto[offsets["object"] + config.objects.index(obj.name)] = config.signal
        if obj.color:
            proto[offsets["color"] + config.colors.index(obj.color)] = config.signal
        if obj.size:
            proto[offsets["size"] + config.sizes.index(obj.size)] = config.signal
        if obj.semantic:
            proto[offsets["semantic"] + config.semantic.index(obj.semantic)] = config.signal
        if k == 0 and layout.relation and len(layout.objects) > 1:
            proto[offsets["spatial"] + config.spatial.index(layout.relation)] = config.signal
        prototypes.extend([proto] * obj.count)
    prototypes.extend([np.zeros(config.feature_dim)] * (config.n_regions - total))
    order = rng.permutation(config.n_regions)
    features = np.stack(prototypes)[order]
    features = features + config.noise * rng.standard_normal(features.shape)

    references = [render_caption(layout, 0, config)]
    for _ in range(config.n_references - 1):
        references.append(render_caption(layout, int(rng.integers(len(TEMPLATES))), config))
    return Scene(
        scene_id=str(scene_id),
        features=features,
        gt_objects=tuple(sorted(o.name for o in layout.objects)),
        gt_tuples=annotation_tuples(layout, config),
        references=references,
        layout=layout,
    )


def random_layout(rng: np.random.Generator, config: SceneConfig) -> Layout:
    n_obj = int(rng.integers(1, min(config.max_objects, config.n_regions) + 1))
    # objects are mentioned in inventory order so captions are a function of the scene
    names = np.sort(rng.choice(len(config.objects), size=n_obj, replace=False))
    counts = [int(c) for c in rng.integers(1, config.max_count + 1, size=n_obj)]
    while sum(counts) > config.n_regions:
        counts[int(np.argmax(counts))] -= 1
    objects = []
    for idx, count in zip(names, counts):
        color = config.colors[int(rng.integers(len(config.colors)))] if rng.random() < config.p_color else None
        size = config.sizes[int(rng.integers(len(config.sizes)))] if rng.random() < config.p_size else None
        semantic = (
            config.semantic[int(rng.integers(len(config.semantic)))]
            if rng.random() < config.p_semantic
            else None
        )
        objects.append(ObjectSpec(config.objects[int(idx)], count, color, size, semantic))
    relation = None
    if n_obj > 1 and rng.random() < config.p_spatial:
        relation = config.spatial[int(rng.integers(len(config.spatial)))]
    return Layout(tuple(objects), relation)


def generate_scene(seed: int, config: SceneConfig | None = None, scene_id: str | None = None) -> Scene:
    """Sample one scene; a pure function of ``(seed, config)``."""
    config = config or SceneConfig()
    rng = np.random.default_rng(seed)
    layout = random_layout(rng, config)
    return scene_from_layout(layout, config, rng, scene_id=str(seed if scene_id is None else scene_id))


def generate_scenes(n: int, seed: int, config: SceneConfig | None = None, prefix: str = "") -> list[Scene]:
    seeds = np.random.SeedSequence(seed).generate_state(n, dtype=np.uint64)
    return [generate_scene(int(s), config, scene_id=f"{prefix}{i}") for i, s in enumerate(seeds)]


def caption_tokens(config: SceneConfig) -> list[str]:
    """Every token any template can emit, in a fixed order."""
    words = ["a", "and"]
    words += list(config.objects) + [o + "s" for o in config.objects]
    words += list(config.colors) + list(config.count_words) + list(config.sizes)
    words += list(config.spatial) + list(config.semantic)
    return words


def save_dataset(path: str | os.PathLike, scenes: Iterable[Scene]) -> None:
    with open(path, "w") as fh:
        for scene in scenes:
            fh.write(json.dumps(scene.to_record(), separators=(",", ":")))
            fh.write("\n")


def load_dataset(path: str | os.PathLike) -> list[Scene]:
    scenes = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                scenes.append(Scene.from_record(json.loads(line)))
            except (ValueError, KeyError, TypeError) as exc:
                raise DatasetParseError(f"{os.fspath(path)}: line {lineno}: {exc}") from exc
    return scenes


def generate_splits(sizes: dict[str, int], seed: int, config: SceneConfig | None = None) -> dict[str, list[Scene]]:
    """Named splits drawn from one seed stream, so no scene seed repeats across splits."""
    total = sum(sizes.values())
    seeds = np.random.SeedSequence(seed).generate_state(total, dtype=np.uint64)
    if len(set(seeds.tolist())) != total:
        raise SceneConfigError("scene seed collision; pick another seed")
    out, pos = {}, 0
    for name, n in sizes.items():
        out[name] = [
            generate_scene(int(s), config, scene_id=f"{name}{i}") for i, s in enumerate(seeds[pos : pos + n])
        ]
        pos += n
    return out
