"""Small shared helpers: half-up rounding, config hashing, token splitting."""

from __future__ import annotations

import hashlib
import json
import re
from decimal import ROUND_HALF_UP, Decimal
from typing import Mapping

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def round1(value: float) -> float:
    """Round to one decimal place, half away from zero (table precision)."""
    return float(Decimal(repr(value)).quantize(Decimal("0.1"), rounding=ROUND_HALF_UP))


def percent(count: int, total: int) -> float:
    return 0.0 if total == 0 else round1(100.0 * count / total)


def tokenize(text: str) -> list[str]:
    """Lowercased alphanumeric tokens, stopwords kept."""
    return _TOKEN_RE.findall(text.lower())


def config_hash(payload: Mapping) -> str:
    """Stable short hash of semantic configuration (never includes paths)."""
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]
