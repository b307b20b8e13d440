"""Named parameter collections and the binary checkpoint format.

Checkpoint layout (all integers little-endian):

    magic   4 bytes  b"SFCK"
    version 1 byte   currently 1
    count   u32      number of parameter records
    record  repeated count times:
        name_len u16
        name     name_len bytes, UTF-8
        frozen   u8 (0 or 1)
        ndim     u8
        dims     ndim * u32
        data     numel * float32, row-major

Values are stored as 32-bit IEEE-754 floats regardless of the in-memory
dtype; loading restores float32 tensors.
"""

from __future__ import annotations

import io
import os
import struct
from dataclasses import dataclass, field
from typing import Iterator

import torch

from scenefuse.errors import ConfigurationError, ShapeError

CHECKPOINT_MAGIC = b"SFCK"
CHECKPOINT_VERSION = 1


@dataclass
class Parameter:
    """A named tensor with a freeze flag.

    Frozen parameters are excluded from gradient computation and from
    optimizer updates, but they are still part of checkpoints.
    """

    name: str
    value: torch.Tensor
    frozen: bool = False

    def __post_init__(self):
        if not self.name:
            raise ConfigurationError("parameter name must be non-empty")
        if not isinstance(self.value, torch.Tensor):
            self.value = torch.as_tensor(self.value)
        if not torch.isfinite(self.value.detach()).all():
            raise ShapeError(f"parameter {self.name!r} contains non-finite values")

    def clone(self) -> "Parameter":
        return Parameter(self.name, self.value.detach().clone(), self.frozen)


@dataclass
class ModelState:
    """An ordered, name-unique collection of parameters.

    Acts as the exchange format between modules, the trainer, and
    checkpoints.  Order follows insertion (for modules: the order of
    ``named_parameters()``).
    """

    params: dict[str, Parameter] = field(default_factory=dict)

    def add(self, param: Parameter) -> None:
        if param.name in self.params:
            raise ConfigurationError(f"duplicate parameter name {param.name!r}")
        self.params[param.name] = param

    def __iter__(self) -> Iterator[Parameter]:
        return iter(self.params.values())

    def __len__(self) -> int:
        return len(self.params)

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def __getitem__(self, name: str) -> Parameter:
        return self.params[name]

    @property
    def names(self) -> list[str]:
        return list(self.params)

    def trainable_names(self) -> list[str]:
        return [p.name for p in self if not p.frozen]

    def frozen_names(self) -> list[str]:
        return [p.name for p in self if p.frozen]

    def num_values(self) -> int:
        return sum(p.value.numel() for p in self)

    def clone(self) -> "ModelState":
        out = ModelState()
        for p in self:
            out.add(p.clone())
        return out

    def value_bytes(self) -> dict[str, bytes]:
        """Raw float32 bytes per parameter, for bit-level comparisons."""
        return {
            p.name: p.value.detach().to(torch.float32).contiguous().numpy().tobytes()
            for p in self
        }

    @classmethod
    def from_module(cls, module: torch.nn.Module, frozen: bool = False) -> "ModelState":
        """Capture a module's parameters. ``frozen`` marks every entry frozen."""
        state = cls()
        for name, value in module.named_parameters():
            state.add(Parameter(name, value.detach().clone(), frozen or not value.requires_grad))
        return state

    def load_into(self, module: torch.nn.Module, strict: bool = True) -> None:
        """Copy values into a module's parameters by name.

        Freeze flags are applied as ``requires_grad = not frozen``.
        """
        module_params = dict(module.named_parameters())
        if strict:
            missing = set(module_params) - set(self.params)
            extra = set(self.params) - set(module_params)
            if missing or extra:
                raise ConfigurationError(
                    f"state/module mismatch: missing={sorted(missing)} extra={sorted(extra)}"
                )
        with torch.no_grad():
            for name, tensor in module_params.items():
                if name not in self.params:
                    continue
                src = self.params[name].value
                if tuple(src.shape) != tuple(tensor.shape):
                    raise ShapeError(
                        f"parameter {name!r}: checkpoint shape {tuple(src.shape)} "
                        f"!= module shape {tuple(tensor.shape)}"
                    )
                tensor.copy_(src.to(tensor.dtype))
                tensor.requires_grad_(not self.params[name].frozen)

    def save(self, path: str | os.PathLike) -> None:
        save_checkpoint(self, path)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "ModelState":
        return load_checkpoint(path)


def save_checkpoint(state: ModelState, path: str | os.PathLike) -> None:
    """Write a ModelState to the binary checkpoint format (atomic)."""
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<B", CHECKPOINT_VERSION))
    buf.write(struct.pack("<I", len(state)))
    for p in state:
        name_bytes = p.name.encode("utf-8")
        if len(name_bytes) > 0xFFFF:
            raise ConfigurationError(f"parameter name too long: {p.name!r}")
        value = p.value.detach().to(torch.float32).contiguous()
        if value.dim() > 0xFF:
            raise ShapeError(f"parameter {p.name!r} has too many dimensions")
        buf.write(struct.pack("<H", len(name_bytes)))
        buf.write(name_bytes)
        buf.write(struct.pack("<B", 1 if p.frozen else 0))
        buf.write(struct.pack("<B", value.dim()))
        for d in value.shape:
            buf.write(struct.pack("<I", d))
        buf.write(value.numpy().tobytes())
    tmp = os.fspath(path) + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(buf.getvalue())
    os.replace(tmp, path)


def load_checkpoint(path: str | os.PathLike) -> ModelState:
    """Read a ModelState from the binary checkpoint format."""
    with open(path, "rb") as fh:
        data = fh.read()
    view = memoryview(data)
    off = 0

    def take(n: int) -> memoryview:
        nonlocal off
        if off + n > len(view):
            raise ConfigurationError(f"truncated checkpoint file: {os.fspath(path)}")
        chunk = view[off : off + n]
        off += n
        return chunk

    if bytes(take(4)) != CHECKPOINT_MAGIC:
        raise ConfigurationError(f"not a checkpoint file: {os.fspath(path)}")
    (version,) = struct.unpack("<B", take(1))
    if version != CHECKPOINT_VERSION:
        raise ConfigurationError(f"unsupported checkpoint version {version}")
    (count,) = struct.unpack("<I", take(4))
    state = ModelState()
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        name = bytes(take(name_len)).decode("utf-8")
        (frozen,) = struct.unpack("<B", take(1))
        (ndim,) = struct.unpack("<B", take(1))
        dims = [struct.unpack("<I", take(4))[0] for _ in range(ndim)]
        numel = 1
        for d in dims:
            numel *= d
        raw = bytes(take(numel * 4))
        tensor = torch.frombuffer(bytearray(raw), dtype=torch.float32).reshape(dims).clone()
        state.add(Parameter(name, tensor, frozen=bool(frozen)))
    if off != len(view):
        raise ConfigurationError(f"trailing bytes in checkpoint file: {os.fspath(path)}")
    return state
