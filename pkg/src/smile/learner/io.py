"""Flat binary files for tasks and trained heads.

Both formats share one layout::

    <magic line>\\n
    <JSON header, one line, sorted keys>\\n
    <raw little-endian arrays, concatenated in header order>

Task file (magic ``SMILE-TASK 1``)::

    header: n, input_dim, num_base, num_novel, k_shot, splits, spec,
            arrays = [["x", "<f8", [n, input_dim]], ["y", "<i8", [n]], ["tags", "|u1", [n]]]

``tags`` index into ``splits`` (``base``, ``novel``, ``test``).

Head file (magic ``SMILE-HEAD 1``)::

    header: input_dim, embed_dim, hidden_dim, prototype_ids (list or null),
            arrays = [["w1", "<f8", [in, hidden]], ["b1", ...], ["w2", ...], ["b2", ...],
                      optionally ["prototypes", "<f8", [classes, embed]]]

Arrays are written with ``tobytes`` and read with ``frombuffer``, so a save
followed by a load reproduces every value bit for bit.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import List, Tuple

import numpy as np

from .data import SPLITS, FewShotTask, SyntheticTaskSpec
from .head import PARAM_NAMES, ProjectionHead, Prototypes

TASK_MAGIC = b"SMILE-TASK 1"
HEAD_MAGIC = b"SMILE-HEAD 1"


class FormatError(ValueError):
    pass


def _write(path, magic: bytes, header: dict, arrays: List[Tuple[str, np.ndarray]]) -> None:
    layout, blobs = [], []
    for name, arr in arrays:
        arr = np.ascontiguousarray(arr)
        le = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
        layout.append([name, le.dtype.str, list(arr.shape)])
        blobs.append(le.tobytes())
    header = {**header, "arrays": layout}
    with open(path, "wb") as fh:
        fh.write(magic + b"\n")
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        for b in blobs:
            fh.write(b)


def _read(path, magic: bytes):
    raw = Path(path).read_bytes()
    first = raw.find(b"\n")
    if raw[:first] != magic:
        raise FormatError(f"{path}: expected {magic.decode()!r} header, got {raw[:first][:32]!r}")
    second = raw.find(b"\n", first + 1)
    header = json.loads(raw[first + 1:second])
    offset = second + 1
    arrays = {}
    for name, dtype, shape in header["arrays"]:
        dt = np.dtype(dtype)
        count = int(np.prod(shape)) if shape else 1
        size = count * dt.itemsize
        if offset + size > len(raw):
            raise FormatError(f"{path}: truncated while reading {name!r}")
        arrays[name] = np.frombuffer(raw, dtype=dt, count=count, offset=offset).reshape(shape).copy()
        offset += size
    if offset != len(raw):
        raise FormatError(f"{path}: {len(raw) - offset} trailing bytes")
    return header, arrays


def save_task(task: FewShotTask, path) -> None:
    header = {
        "n": int(task.x.shape[0]), "input_dim": int(task.x.shape[1]),
        "num_base": task.num_base, "num_novel": task.num_novel, "k_shot": task.k_shot,
        "splits": list(SPLITS), "spec": task.spec.to_dict() if task.spec else None,
    }
    _write(path, TASK_MAGIC, header, [("x", task.x), ("y", task.y), ("tags", task.tags)])


def load_task(path) -> FewShotTask:
    header, arrays = _read(path, TASK_MAGIC)
    if header["splits"] != list(SPLITS):
        raise FormatError(f"{path}: unsupported split tags {header['splits']}")
    spec = SyntheticTaskSpec(**header["spec"]) if header.get("spec") else None
    return FewShotTask(arrays["x"], arrays["y"], arrays["tags"], header["num_base"],
                       header["num_novel"], header["k_shot"], spec)


def save_head(head: ProjectionHead, path) -> None:
    arrays = [(k, head.params[k]) for k in PARAM_NAMES]
    proto_ids = None
    if head.prototypes is not None:
        proto_ids = head.prototypes.class_ids.tolist()
        arrays.append(("prototypes", head.prototypes.vectors))
    header = {"input_dim": head.input_dim, "embed_dim": head.embed_dim,
              "hidden_dim": head.hidden_dim, "prototype_ids": proto_ids}
    _write(path, HEAD_MAGIC, header, arrays)


def load_head(path) -> ProjectionHead:
    header, arrays = _read(path, HEAD_MAGIC)
    head = ProjectionHead(header["input_dim"], header["embed_dim"],
                          params={k: arrays[k] for k in PARAM_NAMES})
    if not head.finite():
        raise FormatError(f"{path}: weights contain non-finite values")
    if header.get("prototype_ids") is not None:
        head.prototypes = Prototypes(header["prototype_ids"], arrays["prototypes"])
    return head
