"""Binary file formats: attention dumps (RBAM1), packed pixels (RBIM1), checkpoints (RBCK1).

All integers are little-endian u32. RBAM1 and RBIM1 carry a fixed header and
raw row-major payload; RBCK1 is a JSON header followed by raw tensor bytes so
it can be inspected without unpickling anything.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
import torch

RBAM_MAGIC = b"RBAM1\0"
RBIM_MAGIC = b"RBIM1\0"
RBCK_MAGIC = b"RBCK1\0"
CHECKPOINT_VERSION = 1


class FormatError(ValueError):
    pass


def _read_exact(fh, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise FormatError(f"truncated {what}: wanted {n} bytes, got {len(buf)}")
    return buf


def write_rbam(path, maps) -> None:
    """N x L x H x W maps as float32."""
    a = np.ascontiguousarray(maps.detach().cpu().numpy() if isinstance(maps, torch.Tensor) else maps,
                             dtype="<f4")
    if a.ndim != 4:
        raise ValueError(f"attention dump needs a 4-D array, got shape {a.shape}")
    with open(path, "wb") as fh:
        fh.write(RBAM_MAGIC)
        fh.write(struct.pack("<4I", *a.shape))
        fh.write(a.tobytes(order="C"))


def read_rbam(path) -> np.ndarray:
    with open(path, "rb") as fh:
        if _read_exact(fh, 6, "magic") != RBAM_MAGIC:
            raise FormatError(f"{path}: not an RBAM1 file")
        shape = struct.unpack("<4I", _read_exact(fh, 16, "header"))
        n = int(np.prod(shape))
        data = np.frombuffer(_read_exact(fh, 4 * n, "payload"), dtype="<f4").reshape(shape)
        if fh.read(1):
            raise FormatError(f"{path}: trailing bytes after payload")
    return data.astype(np.float32)


def write_rbim(path, images: np.ndarray) -> None:
    """N x channels x H x W uint8 pixels."""
    a = np.ascontiguousarray(images)
    if a.dtype != np.uint8 or a.ndim != 4:
        raise ValueError(f"packed images must be 4-D uint8, got {a.dtype} {a.shape}")
    with open(path, "wb") as fh:
        fh.write(RBIM_MAGIC)
        fh.write(struct.pack("<4I", *a.shape))
        fh.write(a.tobytes(order="C"))


def read_rbim(path) -> np.ndarray:
    with open(path, "rb") as fh:
        if _read_exact(fh, 6, "magic") != RBIM_MAGIC:
            raise FormatError(f"{path}: not an RBIM1 file")
        shape = struct.unpack("<4I", _read_exact(fh, 16, "header"))
        n = int(np.prod(shape))
        return np.frombuffer(_read_exact(fh, n, "payload"), dtype=np.uint8).reshape(shape).copy()


def save_checkpoint(path, state: dict[str, torch.Tensor], meta: dict) -> None:
    """Named tensors plus a JSON-serializable ``meta`` (config, normalization, seed record...)."""
    entries, blobs, offset = [], [], 0
    for name, t in state.items():
        # ascontiguousarray would promote 0-d buffers to 1-d
        a = np.array(t.detach().cpu().numpy(), order="C")
        a = a.astype(a.dtype.newbyteorder("<"), copy=False)
        raw = a.tobytes(order="C")
        entries.append({"name": name, "dtype": a.dtype.str, "shape": list(a.shape),
                        "offset": offset, "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    header = json.dumps({"version": CHECKPOINT_VERSION, "meta": meta, "tensors": entries},
                        sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(RBCK_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for raw in blobs:
            fh.write(raw)


def load_checkpoint(path) -> tuple[dict[str, torch.Tensor], dict]:
    with open(path, "rb") as fh:
        if _read_exact(fh, 6, "magic") != RBCK_MAGIC:
            raise FormatError(f"{path}: not an RBCK1 checkpoint")
        (hlen,) = struct.unpack("<I", _read_exact(fh, 4, "header length"))
        header = json.loads(_read_exact(fh, hlen, "header"))
        if header.get("version") != CHECKPOINT_VERSION:
            raise FormatError(f"{path}: unsupported checkpoint version {header.get('version')}")
        payload = fh.read()
    state = {}
    for e in header["tensors"]:
        chunk = payload[e["offset"]:e["offset"] + e["nbytes"]]
        if len(chunk) != e["nbytes"]:
            raise FormatError(f"{path}: truncated tensor {e['name']}")
        arr = np.frombuffer(chunk, dtype=np.dtype(e["dtype"])).reshape(e["shape"])
        state[e["name"]] = torch.from_numpy(arr.copy())
    return state, header["meta"]


def load_pixels(manifest, root, image_size: int | None = None, channels: int = 1) -> np.ndarray:
    """Pixels for every record, in manifest order.

    ``store.rbim#123`` refers to row 123 of a packed file; anything else is an
    image file read with Pillow, converted to ``channels`` and resized to
    ``image_size`` when given.
    """
    root = Path(root)
    stores: dict[str, np.ndarray] = {}
    out = []
    for path, _ in manifest.records:
        if "#" in path and path.split("#", 1)[0].endswith(".rbim"):
            store, row = path.split("#", 1)
            if store not in stores:
                stores[store] = read_rbim(root / store)
            arr = stores[store]
            i = int(row)
            if not 0 <= i < len(arr):
                raise FormatError(f"{path}: row outside store of {len(arr)} images")
            out.append(arr[i])
        else:
            from PIL import Image

            with Image.open(root / path) as im:
                im = im.convert("L" if channels == 1 else "RGB")
                if image_size is not None and im.size != (image_size, image_size):
                    im = im.resize((image_size, image_size), Image.BILINEAR)
                a = np.asarray(im, dtype=np.uint8)
            out.append(a[None] if a.ndim == 2 else a.transpose(2, 0, 1))
    return np.stack(out)
