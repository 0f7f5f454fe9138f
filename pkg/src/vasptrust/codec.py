"""Canonical byte encoding for protocol values.

Every wire format in this package is the canonical encoding of a declared
dataclass. The encoding is deterministic and injective: values of the same
type produce equal bytes iff they are equal, and decoding always reproduces
the original value. Framing is one tag byte + 4-byte big-endian length +
payload; integers are minimal big-endian; the decoder rejects every
non-canonical form (oversized ints, bad UTF-8, unknown tags, trailing bytes)
so that decode(encode(v)) == v and re-encoding reproduces the input bytes.

No floating point is representable on purpose.
"""

from __future__ import annotations

import dataclasses
import types
from enum import Enum
from functools import lru_cache
from typing import Any, Union, get_args, get_origin, get_type_hints

_UNION_ORIGINS = (Union, types.UnionType)

TAG_UINT = 0x01
TAG_BYTES = 0x02
TAG_STR = 0x03
TAG_BOOL = 0x04
TAG_NONE = 0x05
TAG_LIST = 0x06
TAG_STRUCT = 0x07
TAG_ENUM = 0x08
TAG_UNION = 0x09

_MAX_LEN = 2**32 - 1


class CodecError(Exception):
    """Value cannot be canonically encoded."""


class DecodeError(CodecError):
    """Bytes are not a canonical encoding of the expected type."""


def _frame(tag: int, payload: bytes) -> bytes:
    if len(payload) > _MAX_LEN:
        raise CodecError("payload too large for framing")
    return bytes([tag]) + len(payload).to_bytes(4, "big") + payload


def _encode_uint(value: int) -> bytes:
    if value < 0:
        raise CodecError("negative integers are not encodable")
    if value == 0:
        return _frame(TAG_UINT, b"")
    return _frame(TAG_UINT, value.to_bytes((value.bit_length() + 7) // 8, "big"))


@lru_cache(maxsize=None)
def _hints(cls: type) -> tuple[tuple[str, Any], ...]:
    resolved = get_type_hints(cls)
    return tuple((f.name, resolved[f.name]) for f in dataclasses.fields(cls))


def _union_members(typ: Any) -> tuple[bool, list[Any]]:
    """Split a Union into (allows_none, non-None member list)."""
    members = [a for a in get_args(typ) if a is not type(None)]
    return len(members) < len(get_args(typ)), members


def _encode(value: Any, typ: Any = None) -> bytes:
    # Declared-type handling first: unions need the declaration to pick
    # between an optional and a tagged variant.
    if typ is not None:
        origin = get_origin(typ)
        if origin in _UNION_ORIGINS:
            allows_none, members = _union_members(typ)
            if value is None:
                if not allows_none:
                    raise CodecError(f"None not permitted for {typ}")
                return _frame(TAG_NONE, b"")
            if len(members) == 1:
                return _encode(value, members[0])
            cls = type(value)
            if cls not in members:
                raise CodecError(f"{cls.__name__} is not a member of {typ}")
            name = _frame(TAG_STR, cls.__name__.encode("utf-8"))
            return _frame(TAG_UNION, name + _encode(value, cls))
        if origin in (list, tuple):
            args = get_args(typ)
            if origin is list:
                items = [_encode(v, args[0] if args else None) for v in value]
            elif len(args) == 2 and args[1] is Ellipsis:
                items = [_encode(v, args[0]) for v in value]
            else:
                if len(args) != len(value):
                    raise CodecError(f"tuple arity mismatch for {typ}")
                items = [_encode(v, t) for v, t in zip(value, args)]
            return _frame(TAG_LIST, b"".join(items))

    if value is None:
        return _frame(TAG_NONE, b"")
    if isinstance(value, bool):
        return _frame(TAG_BOOL, b"\x01" if value else b"\x00")
    if isinstance(value, int):
        return _encode_uint(value)
    if isinstance(value, (bytes, bytearray)):
        return _frame(TAG_BYTES, bytes(value))
    if isinstance(value, str):
        return _frame(TAG_STR, value.encode("utf-8"))
    if isinstance(value, Enum):
        return _frame(TAG_ENUM, value.name.encode("utf-8"))
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        parts = []
        for name, field_type in _hints(type(value)):
            parts.append(_encode(getattr(value, name), field_type))
        return _frame(TAG_STRUCT, b"".join(parts))
    if isinstance(value, (list, tuple)):
        return _frame(TAG_LIST, b"".join(_encode(v) for v in value))
    raise CodecError(f"cannot canonically encode {type(value).__name__}")


def canonical_encode(value: Any) -> bytes:
    """Encode a domain value to its canonical, injective byte form."""
    return _encode(value)


def struct_bytes(value: Any, exclude: tuple[str, ...] = ()) -> bytes:
    """Canonical struct of a dataclass with some fields omitted.

    Used to compute signing input or content identifiers that must not
    cover the signature/identifier field itself.
    """
    if not dataclasses.is_dataclass(value):
        raise CodecError("struct_bytes requires a dataclass instance")
    parts = []
    for name, field_type in _hints(type(value)):
        if name in exclude:
            continue
        parts.append(_encode(getattr(value, name), field_type))
    return _frame(TAG_STRUCT, b"".join(parts))


class _Reader:
    __slots__ = ("data", "pos")

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take_frame(self) -> tuple[int, bytes]:
        if self.pos + 5 > len(self.data):
            raise DecodeError("truncated frame header")
        tag = self.data[self.pos]
        length = int.from_bytes(self.data[self.pos + 1 : self.pos + 5], "big")
        start = self.pos + 5
        if start + length > len(self.data):
            raise DecodeError("truncated frame payload")
        self.pos = start + length
        return tag, self.data[start:start + length]

    def done(self) -> bool:
        return self.pos == len(self.data)


def _expect(reader: _Reader, tag: int) -> bytes:
    got, payload = reader.take_frame()
    if got != tag:
        raise DecodeError(f"expected tag {tag:#x}, found {got:#x}")
    return payload


def _decode_uint(payload: bytes) -> int:
    if payload and payload[0] == 0:
        raise DecodeError("non-minimal integer encoding")
    return int.from_bytes(payload, "big")


def _decode(reader: _Reader, typ: Any) -> Any:
    origin = get_origin(typ)

    if origin in _UNION_ORIGINS:
        allows_none, members = _union_members(typ)
        tag = reader.data[reader.pos] if reader.pos < len(reader.data) else -1
        if tag == TAG_NONE:
            if not allows_none:
                raise DecodeError(f"unexpected None for {typ}")
            payload = _expect(reader, TAG_NONE)
            if payload:
                raise DecodeError("None carries no payload")
            return None
        if len(members) == 1:
            return _decode(reader, members[0])
        payload = _expect(reader, TAG_UNION)
        inner = _Reader(payload)
        name_bytes = _expect(inner, TAG_STR)
        name = _decode_str(name_bytes)
        by_name = {m.__name__: m for m in members}
        if name not in by_name:
            raise DecodeError(f"unknown union member {name!r} for {typ}")
        value = _decode(inner, by_name[name])
        if not inner.done():
            raise DecodeError("trailing bytes inside union")
        return value

    if origin in (list, tuple):
        payload = _expect(reader, TAG_LIST)
        inner = _Reader(payload)
        args = get_args(typ)
        if origin is list:
            items = []
            while not inner.done():
                items.append(_decode(inner, args[0] if args else bytes))
            return items
        if len(args) == 2 and args[1] is Ellipsis:
            items = []
            while not inner.done():
                items.append(_decode(inner, args[0]))
            return tuple(items)
        items = [_decode(inner, t) for t in args]
        if not inner.done():
            raise DecodeError("trailing bytes inside tuple")
        return tuple(items)

    if typ is bool:
        payload = _expect(reader, TAG_BOOL)
        if payload == b"\x00":
            return False
        if payload == b"\x01":
            return True
        raise DecodeError("non-canonical bool")
    if typ is int:
        return _decode_uint(_expect(reader, TAG_UINT))
    if typ is bytes:
        return _expect(reader, TAG_BYTES)
    if typ is str:
        return _decode_str(_expect(reader, TAG_STR))
    if isinstance(typ, type) and issubclass(typ, Enum):
        name = _decode_str(_expect(reader, TAG_ENUM))
        try:
            return typ[name]
        except KeyError:
            raise DecodeError(f"unknown {typ.__name__} member {name!r}") from None
    if dataclasses.is_dataclass(typ):
        payload = _expect(reader, TAG_STRUCT)
        inner = _Reader(payload)
        kwargs = {}
        for name, field_type in _hints(typ):
            kwargs[name] = _decode(inner, field_type)
        if not inner.done():
            raise DecodeError(f"trailing bytes inside {typ.__name__}")
        return typ(**kwargs)
    raise DecodeError(f"no decoder for type {typ!r}")


def _decode_str(payload: bytes) -> str:
    try:
        return payload.decode("utf-8", errors="strict")
    except UnicodeDecodeError as exc:
        raise DecodeError("invalid UTF-8 in string") from exc


def canonical_decode(data: bytes, cls: Any) -> Any:
    """Decode canonical bytes back into a value of the declared type."""
    reader = _Reader(data)
    value = _decode(reader, cls)
    if not reader.done():
        raise DecodeError("trailing bytes after value")
    return value
