"""Byte-exact encodings used for hashing, signing and wire forms."""

from __future__ import annotations

import base64
import binascii
import hashlib
import json
from typing import Any

ZERO_HASH = "0" * 64


def canonical_json(obj: Any) -> bytes:
    """Key-sorted, whitespace-free, ASCII-only JSON."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True).encode("ascii")


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def b64u(data: bytes) -> str:
    return base64.urlsafe_b64encode(data).rstrip(b"=").decode("ascii")


def unb64u(text: str) -> bytes:
    """Strict base64url decode: rejects padding, stray characters and non-zero spare bits."""
    if not isinstance(text, str):
        raise ValueError("expected a base64url string")
    try:
        raw = base64.urlsafe_b64decode(text + "=" * (-len(text) % 4))
    except (binascii.Error, ValueError) as exc:
        raise ValueError(f"invalid base64url: {exc}") from exc
    # the stdlib decoder is lenient about spare bits and some characters
    if b64u(raw) != text:
        raise ValueError("non-canonical base64url")
    return raw


def multibase(data: bytes) -> str:
    """Multibase with the 'u' (base64url, no padding) prefix."""
    return "u" + b64u(data)


def unmultibase(text: str) -> bytes:
    if not isinstance(text, str) or not text.startswith("u"):
        raise ValueError("only 'u' multibase is supported")
    return unb64u(text[1:])


def base32_lower(data: bytes) -> str:
    return base64.b32encode(data).decode("ascii").rstrip("=").lower()
