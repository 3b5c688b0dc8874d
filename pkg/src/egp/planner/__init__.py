"""LLM-facing decision logic and providers."""

from egp.planner.planner import (
    Planner,
    PlannerError,
    ReflectionDecision,
    RelationSelection,
    SubObjectiveList,
    SufficiencyVerdict,
    extract_json,
)
from egp.planner.providers import (
    ChatProvider,
    Completion,
    Decoding,
    LlmError,
    LlmProvider,
    LlmTransportError,
    MockEntry,
    MockProvider,
    MockScriptError,
    ReplayProvider,
    Transcript,
    TranscriptRecord,
    prompt_tag,
)

__all__ = [
    "ChatProvider",
    "Completion",
    "Decoding",
    "LlmError",
    "LlmProvider",
    "LlmTransportError",
    "MockEntry",
    "MockProvider",
    "MockScriptError",
    "Planner",
    "PlannerError",
    "ReflectionDecision",
    "RelationSelection",
    "ReplayProvider",
    "SubObjectiveList",
    "SufficiencyVerdict",
    "Transcript",
    "TranscriptRecord",
    "extract_json",
    "prompt_tag",
]
