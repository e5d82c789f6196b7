"""Corpus, vocabulary and checkpoint files.

Corpus files are JSON lines.  The first line is a header
``{"format": "ectc-corpus", "version": 1}``; every following line is one
record with the keys ``id``, ``features``, ``frame_labels``, ``ordering``
and ``annotations`` (the last three may be ``null``).  Frame indices are
0-based.  The JSON schema for a record ships as ``record.schema.json``.
"""
import json
import zipfile
from dataclasses import dataclass
from importlib import resources
from typing import List, Optional, Tuple

import jsonschema
import numpy as np

from .errors import FormatError, InvalidInputError, ShapeError, VocabMismatchError
from .lattice import LabelVocab, collapse

CORPUS_FORMAT = "ectc-corpus"
CORPUS_VERSION = 1
CHECKPOINT_FORMAT = "ectc-checkpoint"
CHECKPOINT_VERSION = 1
_EPOCH = (1980, 1, 1, 0, 0, 0)


@dataclass
class DatasetRecord:
    id: str
    features: np.ndarray
    frame_labels: Optional[List[str]] = None
    ordering: Optional[List[str]] = None
    annotations: Optional[List[Tuple[int, str]]] = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.annotations is not None:
            self.annotations = [(int(f), a) for f, a in self.annotations]
        if self.frame_labels is not None:
            self.frame_labels = list(self.frame_labels)
        if self.ordering is not None:
            self.ordering = list(self.ordering)

    @property
    def T(self):
        return self.features.shape[0]

    def validate(self, vocab=None):
        """Check every record invariant; raise :class:`FormatError` naming the record."""
        def fail(msg):
            raise FormatError(f"record {self.id!r}: {msg}")

        X = self.features
        if X.ndim != 2 or X.shape[0] == 0 or X.shape[1] == 0:
            fail(f"features must be a non-empty T x d matrix, got shape {X.shape}")
        if not np.all(np.isfinite(X)):
            fail("features contain non-finite values")
        T = X.shape[0]
        if self.frame_labels is not None and len(self.frame_labels) != T:
            fail(f"{len(self.frame_labels)} frame labels for {T} frames")
        if self.ordering is not None:
            if not self.ordering:
                fail("empty ordering")
            if collapse(self.ordering) != self.ordering:
                fail("ordering has adjacent repeats")
            if len(self.ordering) > T:
                fail("ordering longer than the sequence")
        if self.frame_labels is not None and self.ordering is not None:
            if collapse(self.frame_labels) != self.ordering:
                fail("ordering disagrees with the collapsed frame labels")
        if self.annotations is not None:
            last = -1
            for frame, action in self.annotations:
                if not 0 <= frame < T:
                    fail(f"annotation frame {frame} outside [0, {T})")
                if frame <= last:
                    fail("annotation frames must be strictly increasing")
                last = frame
                if self.frame_labels is not None and self.frame_labels[frame] != action:
                    fail(f"annotation {action!r} at frame {frame} disagrees with frame label")
        if vocab is not None:
            names = list(self.frame_labels or []) + list(self.ordering or [])
            names += [a for _, a in self.annotations or []]
            for name in names:
                if name not in vocab.actions:
                    fail(f"unknown action name {name!r}")
        return self

    def to_json(self):
        return {
            "id": self.id,
            "features": self.features.tolist(),
            "frame_labels": self.frame_labels,
            "ordering": self.ordering,
            "annotations": None if self.annotations is None else [[f, a] for f, a in self.annotations],
        }


def _load_schema():
    with resources.files("ectc").joinpath("record.schema.json").open("r") as fh:
        return json.load(fh)


RECORD_SCHEMA = _load_schema()
_validator = jsonschema.Draft7Validator(RECORD_SCHEMA)


def record_from_json(obj, vocab=None):
    errors = sorted(_validator.iter_errors(obj), key=lambda e: list(e.path))
    if errors:
        rid = obj.get("id", "?") if isinstance(obj, dict) else "?"
        raise FormatError(f"record {rid!r}: {errors[0].message}")
    try:
        features = np.array(obj["features"], dtype=np.float64)
    except ValueError as exc:
        raise FormatError(f"record {obj['id']!r}: ragged feature rows") from exc
    rec = DatasetRecord(
        id=obj["id"],
        features=features,
        frame_labels=obj.get("frame_labels"),
        ordering=obj.get("ordering"),
        annotations=obj.get("annotations"),
    )
    return rec.validate(vocab)


def write_corpus(corpus, path):
    with open(path, "w") as fh:
        fh.write(json.dumps({"format": CORPUS_FORMAT, "version": CORPUS_VERSION}) + "\n")
        for rec in corpus:
            fh.write(json.dumps(rec.to_json()) + "\n")


def read_corpus(path, vocab=None):
    """Parse and validate a corpus file; errors name the line or record."""
    corpus = []
    seen = set()
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: {exc.msg}") from exc
            if lineno == 1 and isinstance(obj, dict) and "format" in obj:
                if obj.get("format") != CORPUS_FORMAT or obj.get("version") != CORPUS_VERSION:
                    raise FormatError(f"{path}: unsupported corpus header {obj}")
                if set(obj) != {"format", "version"}:
                    raise FormatError(f"{path}: unknown header fields {sorted(set(obj) - {'format', 'version'})}")
                continue
            rec = record_from_json(obj, vocab)
            if rec.id in seen:
                raise FormatError(f"{path}:{lineno}: duplicate record id {rec.id!r}")
            seen.add(rec.id)
            corpus.append(rec)
    return corpus


def write_vocab(vocab, path):
    with open(path, "w") as fh:
        for name in vocab.actions:
            fh.write(name + "\n")


def read_vocab(path):
    with open(path) as fh:
        names = [line.rstrip("\n") for line in fh if line.strip()]
    try:
        return LabelVocab(tuple(names))
    except InvalidInputError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def save_checkpoint(path, params, vocab, config):
    """Write parameters (lossless float64) plus metadata to an ``.npz`` file."""
    meta = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "vocab": list(vocab.actions),
        "config": config,
        "dims": {name: list(arr.shape) for name, arr in params.items()},
    }
    arrays = {"__meta__": np.array(json.dumps(meta, sort_keys=True))}
    arrays.update({f"param/{name}": np.asarray(arr, dtype=np.float64) for name, arr in params.items()})
    # np.savez stamps the wall clock into the archive; fixed timestamps keep reruns byte-identical
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        for name, arr in arrays.items():
            info = zipfile.ZipInfo(name + ".npy", date_time=_EPOCH)
            with zf.open(info, "w") as fh:
                np.lib.format.write_array(fh, arr, allow_pickle=False)


def load_checkpoint(path, expected_vocab=None):
    """Return ``(params, vocab, config)``; raise on version, shape or vocab mismatch."""
    try:
        data = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as exc:
        raise FormatError(f"{path}: not a checkpoint ({exc})") from exc
    with data:
        if "__meta__" not in data.files:
            raise FormatError(f"{path}: missing metadata")
        meta = json.loads(str(data["__meta__"]))
        if meta.get("format") != CHECKPOINT_FORMAT or meta.get("version") != CHECKPOINT_VERSION:
            raise FormatError(f"{path}: unsupported checkpoint {meta.get('format')} v{meta.get('version')}")
        params = {}
        for name, dims in meta["dims"].items():
            key = f"param/{name}"
            if key not in data.files:
                raise ShapeError(f"{path}: parameter {name} missing")
            arr = data[key]
            if list(arr.shape) != list(dims):
                raise ShapeError(f"{path}: parameter {name} has shape {arr.shape}, header says {dims}")
            params[name] = arr
    vocab = LabelVocab(tuple(meta["vocab"]))
    if expected_vocab is not None and expected_vocab.actions != vocab.actions:
        raise VocabMismatchError(
            f"checkpoint vocabulary {list(vocab.actions)} differs from {list(expected_vocab.actions)}"
        )
    return params, vocab, meta["config"]
