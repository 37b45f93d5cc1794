"""The nine-section augmentation prompt: representation, validation, rendering.

Templates are stored as JSON with one key per section and ``{{name}}``
placeholders. Rendering concatenates the sections in their fixed order,
substitutes placeholders, and always appends the exact output-structure
instruction that the completion parser relies on.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .dataset import LabeledResponse
from .errors import TemplateError

SECTION_ORDER = (
    "ROLE",
    "TASK",
    "ITEM_STATEMENT",
    "SCORING_RUBRIC",
    "EXAMPLES_TO_LEARN",
    "RESPONSE_CHARACTERISTICS",
    "GROUPING_RULES",
    "EXAMPLE_TO_AUGMENT",
)
REQUIRED_SECTIONS = tuple(s for s in SECTION_ORDER if s != "GROUPING_RULES")

# File keys (lowercase) to section names.
_FILE_KEYS = {
    "role": "ROLE",
    "task": "TASK",
    "item_statement": "ITEM_STATEMENT",
    "scoring_rubric": "SCORING_RUBRIC",
    "examples_to_learn": "EXAMPLES_TO_LEARN",
    "response_characteristics": "RESPONSE_CHARACTERISTICS",
}

DECLARED_PLACEHOLDERS = frozenset({"n_variants", "target_group", "exemplar", "examples_to_learn"})
_PLACEHOLDER_RE = re.compile(r"\{\{(\w+)\}\}")

_SECTION_HEADERS = {
    "ITEM_STATEMENT": "ITEM STATEMENT",
    "SCORING_RUBRIC": "SCORING RUBRIC",
    "EXAMPLES_TO_LEARN": "EXAMPLES TO LEARN",
    "RESPONSE_CHARACTERISTICS": "STUDENT RESPONSE CHARACTERISTICS",
    "GROUPING_RULES": "GROUPING RULES",
    "EXAMPLE_TO_AUGMENT": "EXAMPLE TO AUGMENT",
}

EXAMPLE_TO_AUGMENT_HEADER = "----- EXAMPLE TO AUGMENT -----"

DEFAULT_GROUP_MAP: dict[tuple[int, int], str] = {(0, 0): "A", (1, 0): "B", (0, 1): "C", (1, 1): "D"}


def variant_marker(k: int) -> str:
    """Marker heading variant ``k``; the first is pluralized like the source prompt."""
    word = "Responses" if k == 1 else "Response"
    return f"Augmented {word} {k}:"


def structure_instruction(n_variants: int) -> str:
    """The verbatim output-structure instruction for ``n_variants`` answers."""
    slots = ", ".join(f"{variant_marker(k)} ..." for k in range(1, n_variants + 1))
    return f'Repeat the augmented responses, strictly following the structure "{slots}"'


@dataclass(frozen=True)
class GroupingRule:
    """Maps the (DCI OR, SEP+CCC OR) bit pair to a group id."""

    dci_elements: frozenset[str]
    sepccc_elements: frozenset[str]
    group_map: Mapping[tuple[int, int], str] = None  # type: ignore[assignment]

    def __post_init__(self):
        if self.group_map is None:
            object.__setattr__(self, "group_map", dict(DEFAULT_GROUP_MAP))
        overlap = self.dci_elements & self.sepccc_elements
        if overlap:
            raise TemplateError(f"grouping rule element sets overlap: {sorted(overlap)}")
        if not self.dci_elements or not self.sepccc_elements:
            raise TemplateError("grouping rule needs non-empty element sets on both dimensions")
        missing = {(a, b) for a in (0, 1) for b in (0, 1)} - set(self.group_map)
        if missing:
            raise TemplateError(f"group map not total; missing bit pairs {sorted(missing)}")

    @property
    def groups(self) -> frozenset[str]:
        return frozenset(self.group_map.values())


def evaluate_grouping(elements: Mapping[str, int], rule: GroupingRule) -> str:
    """OR each dimension's elements and look the pair up in the group map."""
    missing = (rule.dci_elements | rule.sepccc_elements) - set(elements)
    if missing:
        raise TemplateError(f"missing element values: {sorted(missing)}")
    dci = int(any(elements[e] for e in rule.dci_elements))
    sep = int(any(elements[e] for e in rule.sepccc_elements))
    return rule.group_map[(dci, sep)]


@dataclass(frozen=True)
class PromptTemplate:
    sections: Mapping[str, str]
    target_group: str
    version: str = "1"
    grouping_rule: GroupingRule | None = None


def _placeholders_in(text: str) -> list[str]:
    return _PLACEHOLDER_RE.findall(text)


def validate_template(t: PromptTemplate, label_space: Sequence[str] | None = None) -> list[str]:
    """Deterministic list of issues; empty means the template is usable."""
    issues: list[str] = []
    for name in REQUIRED_SECTIONS:
        text = t.sections.get(name, "")
        if not text or not text.strip():
            issues.append(f"missing or empty section: {name}")

    seen: set[str] = set()
    for name in SECTION_ORDER:
        for ph in _placeholders_in(t.sections.get(name, "")):
            if ph not in DECLARED_PLACEHOLDERS and ph not in seen:
                issues.append(f"undeclared placeholder: {ph}")
                seen.add(ph)

    learn = t.sections.get("EXAMPLES_TO_LEARN", "")
    if learn.strip() and "{{examples_to_learn}}" not in learn:
        issues.append("EXAMPLES_TO_LEARN has no {{examples_to_learn}} slot")
    aug = t.sections.get("EXAMPLE_TO_AUGMENT", "")
    if aug.strip() and "{{exemplar}}" not in aug:
        issues.append("EXAMPLE_TO_AUGMENT has no {{exemplar}} slot")

    has_section = bool(t.sections.get("GROUPING_RULES", "").strip())
    if has_section and t.grouping_rule is None:
        issues.append("GROUPING_RULES section present but no grouping rule is defined")
    if t.grouping_rule is not None and not has_section:
        issues.append("grouping rule defined but GROUPING_RULES section is missing")

    if not t.target_group:
        issues.append("target_group is empty")
    elif t.grouping_rule is not None:
        if t.target_group not in t.grouping_rule.groups:
            issues.append(
                f"target_group {t.target_group!r} not among groups {sorted(t.grouping_rule.groups)}"
            )
    elif label_space is not None and t.target_group not in {str(c) for c in label_space}:
        issues.append(f"target_group {t.target_group!r} outside label space {list(label_space)}")
    return issues


def format_learn_examples(examples: Sequence[LabeledResponse]) -> str:
    blocks = []
    for k, ex in enumerate(examples, start=1):
        lines = [f"Example {k}", f'Student response: "{ex.text}"']
        if ex.elements:
            bits = ", ".join(f"{name}={ex.elements[name]}" for name in sorted(ex.elements))
            lines.append(f"(Elements: {bits})")
        else:
            lines.append(f"(Label: {ex.label})")
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks)


def _substitute(text: str, subs: Mapping[str, str]) -> str:
    def repl(m: re.Match) -> str:
        name = m.group(1)
        if name not in subs:
            raise TemplateError(f"undeclared placeholder: {name}")
        return subs[name]

    return _PLACEHOLDER_RE.sub(repl, text)


def render_prompt(
    t: PromptTemplate,
    exemplar: LabeledResponse,
    learn_examples: Sequence[LabeledResponse],
    n_variants: int,
) -> str:
    """One prompt text in section order, with the exemplar inserted verbatim."""
    issues = validate_template(t)
    if issues:
        raise TemplateError("invalid template: " + "; ".join(issues))
    if n_variants < 1:
        raise TemplateError("n_variants must be at least 1")
    if not learn_examples:
        raise TemplateError("learn_examples must be non-empty")

    subs = {
        "n_variants": str(n_variants),
        "target_group": t.target_group,
        "examples_to_learn": format_learn_examples(learn_examples),
        "exemplar": exemplar.text,
    }
    blocks: list[str] = []
    for name in SECTION_ORDER:
        raw = t.sections.get(name, "")
        if name == "GROUPING_RULES" and not raw.strip():
            continue
        text = _substitute(raw, subs)
        if name == "TASK":
            text = f"{text}\n{structure_instruction(n_variants)}"
        if name in ("ROLE", "TASK"):
            blocks.append(f"{name}: {text}")
        else:
            blocks.append(f"----- {_SECTION_HEADERS[name]} -----\n{text}")
    return "\n\n".join(blocks)


def _parse_group_map(raw: Mapping[str, str] | None) -> dict[tuple[int, int], str]:
    if raw is None:
        return dict(DEFAULT_GROUP_MAP)
    out: dict[tuple[int, int], str] = {}
    for key, group in raw.items():
        if len(key) != 2 or any(ch not in "01" for ch in key):
            raise TemplateError(f"group map key must be two bits like '10', got {key!r}")
        out[(int(key[0]), int(key[1]))] = str(group)
    return out


def load_template(path: str | Path) -> PromptTemplate:
    """Read the JSON template file format."""
    p = Path(path)
    if not p.exists():
        raise TemplateError(f"no such template file: {p}")
    try:
        raw = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise TemplateError(f"{p}: invalid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise TemplateError(f"{p}: template must be a JSON object")

    sections = {name: str(raw.get(key, "") or "") for key, name in _FILE_KEYS.items()}
    rule = None
    gr = raw.get("grouping_rules")
    if gr is not None:
        if not isinstance(gr, dict):
            raise TemplateError("grouping_rules must be an object")
        sections["GROUPING_RULES"] = str(gr.get("text", "") or "")
        rule = GroupingRule(
            dci_elements=frozenset(str(e) for e in gr.get("dci_elements", [])),
            sepccc_elements=frozenset(str(e) for e in gr.get("sepccc_elements", [])),
            group_map=_parse_group_map(gr.get("group_map")),
        )
    sections["EXAMPLE_TO_AUGMENT"] = str(raw.get("example_to_augment", "{{exemplar}}") or "")
    return PromptTemplate(
        sections=sections,
        target_group=str(raw.get("target_group", "") or ""),
        version=str(raw.get("version", "1")),
        grouping_rule=rule,
    )


def template_to_dict(t: PromptTemplate) -> dict:
    """Inverse of ``load_template`` for writing fixture templates."""
    out: dict[str, object] = {key: t.sections.get(name, "") for key, name in _FILE_KEYS.items()}
    out["example_to_augment"] = t.sections.get("EXAMPLE_TO_AUGMENT", "{{exemplar}}")
    out["target_group"] = t.target_group
    out["version"] = t.version
    if t.grouping_rule is not None:
        out["grouping_rules"] = {
            "text": t.sections.get("GROUPING_RULES", ""),
            "dci_elements": sorted(t.grouping_rule.dci_elements),
            "sepccc_elements": sorted(t.grouping_rule.sepccc_elements),
            "group_map": {f"{a}{b}": g for (a, b), g in sorted(t.grouping_rule.group_map.items())},
        }
    return out
