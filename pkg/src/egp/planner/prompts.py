"""Prompt templates. Each prompt starts with a ``### task: <name>`` header line.

Templates are versioned so recorded transcripts stay comparable; bump
``TEMPLATE_VERSION`` whenever wording changes.
"""

from __future__ import annotations

from typing import Callable, Sequence

from egp.kg import Direction, ReasoningPath, Triple

TEMPLATE_VERSION = "v1"

DECOMPOSE = "decompose"
PRUNE_RELATIONS = "prune_relations"
SELECT_PATHS = "select_paths"
EVALUATE_SUFFICIENCY = "evaluate_sufficiency"
FORCED_ANSWER = "forced_answer"
REFLECT = "reflect"
LOOKAHEAD_VERDICT = "lookahead_verdict"
UPDATE_STATUSES = "update_statuses"

REPROMPT_SUFFIX = (
    "\n\nYour previous reply could not be parsed. Reply again using exactly the requested format and nothing else."
)

_ONE_SHOT_DECOMPOSITION = (
    "Example:\n"
    "Question: What is the home stadium of the team that won the 2010 league title?\n"
    'Sub-objectives: ["find the team that won the 2010 league title", "find the home stadium of that team"]'
)

Label = Callable[[str], str]


def header(task: str) -> str:
    return f"### task: {task} (template {TEMPLATE_VERSION})"


def render_exemplars(exemplars: Sequence, label: Label | None = None) -> str:
    """Exemplar block: each question followed by its gold paths, one per line."""
    lines = []
    for i, ex in enumerate(exemplars, start=1):
        lines.append(f"Reference {i}: {ex.question.text}")
        for path in ex.question.gold_paths:
            lines.append(f"  Path: {path.render(label)}")
    return "\n".join(lines)


def render_objectives(items: Sequence[str], statuses: Sequence[str] | None = None) -> str:
    if statuses is None:
        return "\n".join(f"{i}. {o}" for i, o in enumerate(items, start=1))
    return "\n".join(f"{i}. {o} [status: {s}]" for i, (o, s) in enumerate(zip(items, statuses), start=1))


def render_paths(paths: Sequence[ReasoningPath], label: Label) -> str:
    if not paths:
        return "(none)"
    return "\n".join(f"- {p.render(label)}" for p in paths)


def decompose_prompt(question: str, topics: Sequence[str], exemplars: Sequence, label: Label) -> str:
    parts = [
        header(DECOMPOSE),
        "Split the question into an ordered list of sub-objectives. Each sub-objective should be "
        "answerable by following one or more relations in a knowledge graph, and later ones may "
        "depend on earlier ones.",
        'Reply with a JSON array of strings, e.g. ["first step", "second step"].',
    ]
    if exemplars:
        parts.append(
            "Similar questions and the knowledge-graph reasoning paths that answered them. "
            "Align the sub-objectives with the relations these paths use:\n" + render_exemplars(exemplars)
        )
    else:
        parts.append(_ONE_SHOT_DECOMPOSITION)
    parts.append(f"Topic entities: {', '.join(topics)}")
    parts.append(f"Question: {question}")
    return "\n\n".join(parts)


def prune_relations_prompt(
    question: str,
    objectives: Sequence[str],
    entity: str,
    candidates: Sequence[tuple[str, Direction]],
    exemplars: Sequence,
    label: Label,
) -> str:
    cand_lines = "\n".join(f"- {r} ({d.value})" for r, d in candidates)
    parts = [
        header(PRUNE_RELATIONS),
        "Choose the relations of the entity below that are most likely to lead towards the answer.",
        'Reply with a JSON object {"relations": [<relation names copied exactly from the list>]}.',
    ]
    if exemplars:
        parts.append("Similar solved questions and their reasoning paths:\n" + render_exemplars(exemplars))
    parts += [
        f"Question: {question}",
        "Sub-objectives:\n" + render_objectives(objectives),
        f"Entity: {label(entity)} ({entity})",
        "Candidate relations:\n" + cand_lines,
    ]
    return "\n\n".join(parts)


def select_paths_prompt(question: str, extended: Sequence[tuple[ReasoningPath, Triple]], label: Label) -> str:
    lines = []
    for i, (path, t) in enumerate(extended):
        lines.append(f"[{i}] {path.render(label)}    (new triple: {label(t.head)}, {t.relation}, {label(t.tail)})")
    return "\n\n".join([
        header(SELECT_PATHS),
        "Pick the reasoning paths most relevant to answering the question. They will be explored further.",
        "Reply with a JSON array of path indices, e.g. [0, 2].",
        f"Question: {question}",
        "Paths:\n" + "\n".join(lines),
    ])


_VERDICT_FORMAT = (
    'Reply with a JSON object {"sufficient": true|false, "answer": [<answer strings>], "reason": "<why>"}.'
)


def sufficiency_prompt(
    question: str,
    objectives: Sequence[str],
    statuses: Sequence[str],
    paths: Sequence[ReasoningPath],
    label: Label,
    forced: bool = False,
) -> str:
    if forced:
        instruction = (
            "The exploration budget is exhausted. Answer with best effort using the reasoning paths "
            "below and your own knowledge; set sufficient to true and give your best answer."
        )
    else:
        instruction = (
            "Decide whether the reasoning paths below are sufficient to answer the question. "
            "If they are, give the answer."
        )
    return "\n\n".join([
        header(FORCED_ANSWER if forced else EVALUATE_SUFFICIENCY),
        instruction,
        _VERDICT_FORMAT,
        f"Question: {question}",
        "Sub-objectives:\n" + render_objectives(objectives, statuses),
        "Reasoning paths:\n" + render_paths(paths, label),
    ])


def lookahead_prompt(question: str, path: ReasoningPath, label: Label) -> str:
    return "\n\n".join([
        header(LOOKAHEAD_VERDICT),
        "A reasoning path matching a solved similar question was found in the knowledge graph. "
        "Decide whether this single path is a correct and complete answer to the question. "
        "If it is, the answer must be an entity on the path.",
        _VERDICT_FORMAT,
        f"Question: {question}",
        f"Candidate path: {path.render(label)}",
    ])


def reflect_prompt(
    question: str,
    objectives: Sequence[str],
    statuses: Sequence[str],
    paths: Sequence[ReasoningPath],
    next_frontier: Sequence[str],
    historical: Sequence[str],
    label: Label,
    dead_end: bool = False,
) -> str:
    parts = [
        header(REFLECT),
        "The information gathered so far is not sufficient. Reflect on whether the current exploration "
        "direction is correct. If not, choose previously seen candidate entities to backtrack to.",
        'Reply with a JSON object {"correct_course": true|false, "backtrack": [<entity ids>], "reason": "<why>"}.',
    ]
    if dead_end:
        parts.append("Note: the last exploration step reached a dead end; no new paths were found.")
    frontier = ", ".join(f"{label(e)} ({e})" for e in next_frontier) or "(none)"
    hist = "\n".join(f"- {e} ({label(e)})" for e in historical) or "(none)"
    parts += [
        f"Question: {question}",
        "Sub-objectives:\n" + render_objectives(objectives, statuses),
        "Reasoning paths:\n" + render_paths(paths, label),
        f"Entities planned for the next step: {frontier}",
        "Historical candidate entities:\n" + hist,
    ]
    return "\n\n".join(parts)


def update_statuses_prompt(
    question: str,
    objectives: Sequence[str],
    statuses: Sequence[str],
    memory_summary: str,
    latest_paths: Sequence[ReasoningPath],
    label: Label,
) -> str:
    return "\n\n".join([
        header(UPDATE_STATUSES),
        "Update the status of every sub-objective given the latest exploration results. "
        'Use "unknown" until something is found.',
        "Reply with a JSON array holding one status string per sub-objective, in order.",
        f"Question: {question}",
        "Sub-objectives:\n" + render_objectives(objectives, statuses),
        "Memory:\n" + (memory_summary or "(empty)"),
        "Latest paths:\n" + render_paths(latest_paths, label),
    ])
