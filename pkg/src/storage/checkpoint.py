"""
Named-tensor checkpoint container.

Layout (little-endian):
    b"CFCK" | u16 version | u32 entry count |
    per entry: u32 name length, UTF-8 name, u8 dtype code, u8 rank, rank x u32 dims, raw payload

Reserved names: ``opt/m/<param>``, ``opt/v/<param>``, ``opt/t`` for optimizer state and
``meta/json`` for the JSON metadata document.
"""
import io
import json
import logging
import os
import struct
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple, Union

import numpy as np

from src.utils.errors import FormatError

logger = logging.getLogger(__name__)

MAGIC = b"CFCK"
FORMAT_VERSION = 1
META_ENTRY = "meta/json"

DTYPE_CODES = {
    0: np.dtype('<f4'),
    1: np.dtype('<f8'),
    2: np.dtype('<i8'),
    3: np.dtype('u1'),
}
CODE_FOR_DTYPE = {dtype: code for code, dtype in DTYPE_CODES.items()}


def _dtype_code(array: np.ndarray, name: str) -> int:
    dtype = array.dtype.newbyteorder('<') if array.dtype.byteorder == '>' else array.dtype
    for code, known in DTYPE_CODES.items():
        if dtype == known:
            return code
    raise FormatError(f"tensor '{name}' has unsupported dtype {array.dtype}")


def encode(entries: Mapping[str, np.ndarray], metadata: Optional[Dict[str, Any]] = None) -> bytes:
    """Serialize named arrays (and optional metadata) in insertion order"""
    items = list(entries.items())
    if metadata is not None:
        payload = json.dumps(metadata, sort_keys=True, separators=(',', ':')).encode('utf-8')
        items.append((META_ENTRY, np.frombuffer(payload, dtype=np.uint8)))

    buffer = io.BytesIO()
    buffer.write(MAGIC)
    buffer.write(struct.pack('<HI', FORMAT_VERSION, len(items)))
    for name, array in items:
        array = np.asarray(array)
        code = _dtype_code(array, name)
        encoded_name = name.encode('utf-8')
        buffer.write(struct.pack('<I', len(encoded_name)))
        buffer.write(encoded_name)
        buffer.write(struct.pack('<BB', code, array.ndim))
        buffer.write(struct.pack(f'<{array.ndim}I', *array.shape))
        buffer.write(np.ascontiguousarray(array, dtype=DTYPE_CODES[code]).tobytes())
    return buffer.getvalue()


def decode(blob: bytes) -> Tuple[Dict[str, np.ndarray], Optional[Dict[str, Any]]]:
    if blob[:4] != MAGIC:
        raise FormatError("not a checkpoint container (bad magic bytes)", offset=0)
    offset = 4
    try:
        version, count = struct.unpack_from('<HI', blob, offset)
        offset += 6
        if version != FORMAT_VERSION:
            raise FormatError(f"unsupported checkpoint version {version}", offset=4)

        entries: Dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack_from('<I', blob, offset)
            offset += 4
            name = blob[offset:offset + name_len].decode('utf-8')
            offset += name_len
            code, rank = struct.unpack_from('<BB', blob, offset)
            offset += 2
            if code not in DTYPE_CODES:
                raise FormatError(f"unknown dtype code {code} for '{name}'", offset=offset - 2)
            dims = struct.unpack_from(f'<{rank}I', blob, offset)
            offset += 4 * rank
            dtype = DTYPE_CODES[code]
            nbytes = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
            if offset + nbytes > len(blob):
                raise FormatError(f"payload of '{name}' is truncated", offset=offset)
            array = np.frombuffer(blob, dtype=dtype, count=nbytes // dtype.itemsize, offset=offset)
            entries[name] = array.reshape(dims).copy()
            offset += nbytes
    except struct.error as exc:
        raise FormatError(f"truncated checkpoint header ({exc})", offset=offset) from exc

    metadata = None
    if META_ENTRY in entries:
        metadata = json.loads(entries.pop(META_ENTRY).tobytes().decode('utf-8'))
    return entries, metadata


def save_checkpoint(path: Union[str, Path], entries: Mapping[str, np.ndarray],
                    metadata: Optional[Dict[str, Any]] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    blob = encode(entries, metadata)
    tmp_path = path.with_suffix(path.suffix + '.tmp')
    with open(tmp_path, 'wb') as handle:
        handle.write(blob)
    os.replace(tmp_path, path)
    logger.info(f"Wrote checkpoint {path} ({len(entries)} tensors, {len(blob)} bytes)")
    return path


def load_checkpoint(path: Union[str, Path]) -> Tuple[Dict[str, np.ndarray], Optional[Dict[str, Any]]]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    with open(path, 'rb') as handle:
        entries, metadata = decode(handle.read())
    logger.info(f"Loaded checkpoint {path} ({len(entries)} tensors)")
    return entries, metadata
