"""Answer-string normalisation shared by the planner and the evaluation harness."""

import re
import string

_WS_RE = re.compile(r"\s+")
_EDGE_PUNCT = string.punctuation + "‘’“”"


def normalize_answer(text: str) -> str:
    """Lowercase, trim, collapse whitespace and strip surrounding punctuation."""
    text = _WS_RE.sub(" ", str(text).lower()).strip()
    return text.strip(_EDGE_PUNCT).strip()
