"""Entity templating: replace topic-entity mentions with category placeholders."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable, Sequence

from egp.exemplars.records import TopicEntity

TEMPLATING_VERSION = "1"

GENERIC_PLACEHOLDER = "<entity>"
_PLACEHOLDER_RE = re.compile(r"<[a-z0-9_][a-z0-9_ .\-]*>")


@dataclass(frozen=True)
class TemplatedQuestion:
    text: str
    placeholder_count: int
    skipped: tuple[str, ...] = field(default=(), compare=False)


def placeholder_for(category: str | None) -> str:
    if category and category.strip():
        return f"<{category.strip().lower()}>"
    return GENERIC_PLACEHOLDER


def template_question(
    text: str,
    annotations: Sequence[TopicEntity],
    category_lookup: Callable[[str], str | None] | None = None,
) -> TemplatedQuestion:
    """Replace each annotation's mention with ``<category>`` (or ``<entity>``).

    Longer mentions are placed first. Each mention claims every case-insensitive,
    word-bounded occurrence, scanning left to right, that does not overlap a span
    already claimed or an existing placeholder. No raw mention survives, so
    templating twice is the same as templating once. Mentions with no free
    occurrence are reported in ``skipped``.
    """
    blocked = [m.span() for m in _PLACEHOLDER_RE.finditer(text)]
    claims: list[tuple[int, int, str]] = []
    skipped = []

    order = sorted(range(len(annotations)), key=lambda i: (-len(annotations[i].mention), i))
    for i in order:
        ann = annotations[i]
        # angle brackets count as word characters so a new placeholder never creates a boundary
        pattern = re.compile(r"(?<![\w<>])" + re.escape(ann.mention) + r"(?![\w<>])", re.IGNORECASE)
        placeholder = None
        for m in pattern.finditer(text):
            start, end = m.span()
            if any(start < b and a < end for a, b in blocked):
                continue
            if placeholder is None:
                category = ann.category
                if category is None and category_lookup is not None:
                    category = category_lookup(ann.entity)
                placeholder = placeholder_for(category)
            claims.append((start, end, placeholder))
            blocked.append((start, end))
        if placeholder is None:
            skipped.append(ann.mention)

    pieces, cursor = [], 0
    for start, end, placeholder in sorted(claims):
        pieces.append(text[cursor:start])
        pieces.append(placeholder)
        cursor = end
    pieces.append(text[cursor:])
    return TemplatedQuestion("".join(pieces), len(claims), tuple(skipped))
