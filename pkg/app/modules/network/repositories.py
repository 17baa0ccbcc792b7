import json
import struct
from collections import OrderedDict

import numpy as np

from app.modules.autodiff.models import Tensor
from app.modules.network.models import Model, NetworkSpec
from core.repositories.BaseRepository import BaseRepository

MAGIC = b"RASW"
FORMAT_VERSION = 1
DTYPE_CODES = {np.dtype("<f4"): 0, np.dtype("<f8"): 1}
CODE_DTYPES = {code: dtype for dtype, code in DTYPE_CODES.items()}


class RASWFormatError(ValueError):
    def __init__(self, message: str, offset: int, source: str = "<bytes>"):
        super().__init__(f"{source}: {message} at byte offset {offset}")
        self.offset = offset


class _Reader:
    def __init__(self, payload: bytes, source: str):
        self.payload = payload
        self.offset = 0
        self.source = source

    def take(self, size: int, what: str) -> bytes:
        if self.offset + size > len(self.payload):
            raise RASWFormatError(
                f"truncated {what}: need {size} bytes, {len(self.payload) - self.offset} left", self.offset, self.source
            )
        chunk = self.payload[self.offset : self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))[0]


class WeightRepository(BaseRepository[Model]):
    """
    RASW weight files (little-endian).

    magic "RASW" | u32 version | u32 spec length + UTF-8 JSON NetworkSpec | u32 tensor count |
    per tensor: u16 name length + UTF-8 name, u8 rank, u32 dims, u8 dtype (0 f32, 1 f64), raw data.
    """

    extension = ".rasw"

    def encode(self, model: Model) -> bytes:
        spec_blob = json.dumps(model.spec.to_dict(), sort_keys=True, separators=(",", ":")).encode("utf-8")
        chunks = [MAGIC, struct.pack("<I", FORMAT_VERSION), struct.pack("<I", len(spec_blob)), spec_blob]
        chunks.append(struct.pack("<I", len(model.params)))
        for name, tensor in model.named_parameters():
            encoded_name = name.encode("utf-8")
            data = tensor.data.astype(tensor.data.dtype.newbyteorder("<"), copy=False)
            if data.dtype not in DTYPE_CODES:
                raise ValueError(f"Parameter '{name}' has unsupported dtype {tensor.data.dtype}")
            chunks.append(struct.pack("<H", len(encoded_name)))
            chunks.append(encoded_name)
            chunks.append(struct.pack("<B", data.ndim))
            chunks.append(struct.pack(f"<{data.ndim}I", *data.shape))
            chunks.append(struct.pack("<B", DTYPE_CODES[data.dtype]))
            chunks.append(np.ascontiguousarray(data).tobytes())
        return b"".join(chunks)

    def decode(self, payload: bytes, source: str = "<bytes>") -> Model:
        reader = _Reader(payload, source)
        magic = reader.take(4, "magic")
        if magic != MAGIC:
            raise RASWFormatError(f"bad magic {magic!r}, expected {MAGIC!r}", 0, source)
        version_offset = reader.offset
        version = reader.unpack("<I", "version")
        if version != FORMAT_VERSION:
            raise RASWFormatError(f"unsupported version {version}", version_offset, source)

        spec_length = reader.unpack("<I", "spec length")
        spec_offset = reader.offset
        try:
            spec = NetworkSpec.from_dict(json.loads(reader.take(spec_length, "spec blob").decode("utf-8")))
        except (UnicodeDecodeError, json.JSONDecodeError, TypeError, ValueError) as exc:
            if isinstance(exc, RASWFormatError):
                raise
            raise RASWFormatError(f"invalid NetworkSpec blob ({exc})", spec_offset, source) from exc

        count = reader.unpack("<I", "tensor count")
        params = OrderedDict()
        for _ in range(count):
            record_offset = reader.offset
            raw_name = reader.take(reader.unpack("<H", "name length"), "name")
            try:
                name = raw_name.decode("utf-8")
            except UnicodeDecodeError as exc:
                raise RASWFormatError(f"tensor name is not valid UTF-8 ({exc})", record_offset, source) from exc
            rank = reader.unpack("<B", "rank")
            dims = struct.unpack(f"<{rank}I", reader.take(4 * rank, "dims"))
            code_offset = reader.offset
            code = reader.unpack("<B", "dtype")
            if code not in CODE_DTYPES:
                raise RASWFormatError(f"unknown dtype code {code} for '{name}'", code_offset, source)
            dtype = CODE_DTYPES[code]
            size = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
            data = np.frombuffer(reader.take(size, f"data of '{name}'"), dtype=dtype).reshape(dims)
            if name in params:
                raise RASWFormatError(f"duplicate tensor name '{name}'", record_offset, source)
            params[name] = Tensor(data.astype(dtype.newbyteorder("="), copy=True), requires_grad=True)

        if reader.offset != len(payload):
            raise RASWFormatError(f"{len(payload) - reader.offset} trailing bytes", reader.offset, source)
        return Model(spec, params)
