"""Survey codebook: the machine-readable schema that standardizes what raters collect.

A codebook is an ordered list of variable definitions. Each choice option
carries a written definition and an optional reference-image URL so that
every rater applies the same criteria. Codebooks are immutable after
parsing and safe to share across threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Optional

KINDS = ("single_choice", "multi_choice", "count", "free_text")
CHOICE_KINDS = ("single_choice", "multi_choice")


class CodebookError(Exception):
    """Base error for codebook parsing and validation."""


class CodebookSyntaxError(CodebookError):
    """Malformed document (not valid JSON)."""

    def __init__(self, msg: str, line: int, col: int):
        super().__init__(f"syntax error at line {line}, column {col}: {msg}")
        self.line = line
        self.col = col


class CodebookSchemaError(CodebookError):
    """Structurally valid document that violates the schema rules.

    ``variable_key`` names the offending variable when one can be blamed.
    """

    def __init__(self, msg: str, variable_key: Optional[str] = None):
        if variable_key is not None:
            msg = f"variable {variable_key!r}: {msg}"
        super().__init__(msg)
        self.variable_key = variable_key


@dataclass(frozen=True)
class OptionDef:
    code: str
    label: str
    definition: str = ""
    reference_image_url: Optional[str] = None


@dataclass(frozen=True)
class VariableDef:
    key: str
    label: str
    kind: str
    required: bool = False
    options: tuple[OptionDef, ...] = ()
    min_count: Optional[int] = None
    max_count: Optional[int] = None

    def option_codes(self) -> tuple[str, ...]:
        return tuple(o.code for o in self.options)


@dataclass(frozen=True)
class Codebook:
    schema_id: str
    version: str
    variables: tuple[VariableDef, ...]
    draft: bool = False

    def __getitem__(self, key: str) -> VariableDef:
        for v in self.variables:
            if v.key == key:
                return v
        raise KeyError(key)

    def __contains__(self, key: str) -> bool:
        return any(v.key == key for v in self.variables)

    def keys(self) -> tuple[str, ...]:
        return tuple(v.key for v in self.variables)

    def question_groups(self) -> tuple[VariableDef, ...]:
        """Variables rendered as form groups (everything except free text)."""
        return tuple(v for v in self.variables if v.kind != "free_text")


@dataclass(frozen=True)
class Answer:
    """One rater's answer to one variable; exactly one field is set."""

    choice: Optional[str] = None
    choices: Optional[frozenset[str]] = None
    count: Optional[int] = None
    text: Optional[str] = None

    def __post_init__(self) -> None:
        set_fields = [f for f in (self.choice, self.choices, self.count, self.text) if f is not None]
        if len(set_fields) != 1:
            raise ValueError("Answer must set exactly one of choice/choices/count/text")

    @property
    def kind(self) -> str:
        if self.choice is not None:
            return "single_choice"
        if self.choices is not None:
            return "multi_choice"
        if self.count is not None:
            return "count"
        return "free_text"

    def to_json(self) -> dict[str, Any]:
        if self.choice is not None:
            return {"choice": self.choice}
        if self.choices is not None:
            return {"choices": sorted(self.choices)}
        if self.count is not None:
            return {"count": self.count}
        return {"text": self.text}

    @staticmethod
    def from_json(obj: Any) -> "Answer":
        if not isinstance(obj, dict) or len(obj) != 1:
            raise ValueError(f"answer must be a single-key object, got {obj!r}")
        (tag, value), = obj.items()
        if tag == "choice":
            if not isinstance(value, str):
                raise ValueError("choice answer must be a string code")
            return Answer(choice=value)
        if tag == "choices":
            if not isinstance(value, list) or not all(isinstance(c, str) for c in value):
                raise ValueError("choices answer must be a list of string codes")
            if len(set(value)) != len(value):
                raise ValueError("choices answer contains duplicate codes")
            return Answer(choices=frozenset(value))
        if tag == "count":
            if not isinstance(value, int) or isinstance(value, bool):
                raise ValueError("count answer must be an integer")
            return Answer(count=value)
        if tag == "text":
            if not isinstance(value, str):
                raise ValueError("text answer must be a string")
            return Answer(text=value)
        raise ValueError(f"unknown answer tag {tag!r}")


@dataclass(frozen=True)
class Violation:
    variable_key: str
    reason: str


_CODEBOOK_FIELDS = {"schema_id", "version", "variables", "draft"}
_VARIABLE_FIELDS = {"key", "label", "kind", "required", "options", "min_count", "max_count"}
_OPTION_FIELDS = {"code", "label", "definition", "reference_image_url"}


def _require(obj: Mapping[str, Any], name: str, typ: type, where: str) -> Any:
    if name not in obj:
        raise CodebookSchemaError(f"missing field {name!r} in {where}")
    value = obj[name]
    if typ is bool and isinstance(value, bool):
        return value
    if typ is not bool and isinstance(value, bool):
        raise CodebookSchemaError(f"field {name!r} in {where} must be {typ.__name__}")
    if not isinstance(value, typ):
        raise CodebookSchemaError(f"field {name!r} in {where} must be {typ.__name__}")
    return value


def _reject_unknown(obj: Mapping[str, Any], allowed: set, where: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise CodebookSchemaError(f"unknown field(s) {sorted(unknown)} in {where}")


def _parse_option(obj: Any, var_key: str, draft: bool) -> OptionDef:
    where = f"option of variable {var_key!r}"
    if not isinstance(obj, dict):
        raise CodebookSchemaError("option must be an object", var_key)
    _reject_unknown(obj, _OPTION_FIELDS, where)
    code = _require(obj, "code", str, where)
    if not code or any(c.isspace() for c in code):
        raise CodebookSchemaError(f"option code {code!r} is empty or contains whitespace", var_key)
    label = _require(obj, "label", str, where)
    definition = obj.get("definition", "")
    if not isinstance(definition, str):
        raise CodebookSchemaError(f"option {code!r} definition must be a string", var_key)
    if not definition and not draft:
        raise CodebookSchemaError(
            f"option {code!r} has an empty definition in a non-draft codebook", var_key
        )
    url = obj.get("reference_image_url")
    if url is not None and not isinstance(url, str):
        raise CodebookSchemaError(f"option {code!r} reference_image_url must be a string", var_key)
    return OptionDef(code=code, label=label, definition=definition, reference_image_url=url)


def _parse_variable(obj: Any, draft: bool) -> VariableDef:
    if not isinstance(obj, dict):
        raise CodebookSchemaError("variable entry must be an object")
    key = obj.get("key")
    if not isinstance(key, str) or not key:
        raise CodebookSchemaError("variable is missing a non-empty string 'key'")
    where = f"variable {key!r}"
    _reject_unknown(obj, _VARIABLE_FIELDS, where)
    label = _require(obj, "label", str, where)
    kind = _require(obj, "kind", str, where)
    if kind not in KINDS:
        raise CodebookSchemaError(f"unknown kind {kind!r}", key)
    required = _require(obj, "required", bool, where)

    options: tuple[OptionDef, ...] = ()
    min_count = max_count = None
    if kind in CHOICE_KINDS:
        raw = obj.get("options")
        if not isinstance(raw, list) or len(raw) < 2:
            raise CodebookSchemaError("choice variable needs at least 2 options", key)
        options = tuple(_parse_option(o, key, draft) for o in raw)
        codes = [o.code for o in options]
        dupes = {c for c in codes if codes.count(c) > 1}
        if dupes:
            raise CodebookSchemaError(f"duplicate option code(s) {sorted(dupes)}", key)
        if "min_count" in obj or "max_count" in obj:
            raise CodebookSchemaError("choice variable may not set count bounds", key)
    else:
        if obj.get("options"):
            raise CodebookSchemaError(f"{kind} variable may not have options", key)
        if kind == "count":
            min_count = _require(obj, "min_count", int, where)
            max_count = _require(obj, "max_count", int, where)
            if not (0 <= min_count <= max_count):
                raise CodebookSchemaError(
                    f"count bounds must satisfy 0 <= min <= max, got [{min_count}, {max_count}]", key
                )
        elif "min_count" in obj or "max_count" in obj:
            raise CodebookSchemaError("free_text variable may not set count bounds", key)

    return VariableDef(
        key=key, label=label, kind=kind, required=required,
        options=options, min_count=min_count, max_count=max_count,
    )


def parse_codebook(document: bytes | str) -> Codebook:
    """Parse a codebook document (strict: unknown fields are rejected)."""
    if isinstance(document, bytes):
        try:
            document = document.decode("utf-8")
        except UnicodeDecodeError as e:
            raise CodebookSyntaxError(str(e), 0, 0) from e
    try:
        obj = json.loads(document)
    except json.JSONDecodeError as e:
        raise CodebookSyntaxError(e.msg, e.lineno, e.colno) from e
    if not isinstance(obj, dict):
        raise CodebookSchemaError("top level must be an object")
    _reject_unknown(obj, _CODEBOOK_FIELDS, "codebook")
    schema_id = _require(obj, "schema_id", str, "codebook")
    version = _require(obj, "version", str, "codebook")
    draft = obj.get("draft", False)
    if not isinstance(draft, bool):
        raise CodebookSchemaError("field 'draft' must be a boolean")
    raw_vars = _require(obj, "variables", list, "codebook")
    if not raw_vars:
        raise CodebookSchemaError("codebook must define at least one variable")
    variables = tuple(_parse_variable(v, draft) for v in raw_vars)
    keys = [v.key for v in variables]
    dupes = {k for k in keys if keys.count(k) > 1}
    if dupes:
        raise CodebookSchemaError(f"duplicate variable key(s) {sorted(dupes)}")
    return Codebook(schema_id=schema_id, version=version, variables=variables, draft=draft)


def codebook_to_json(cb: Codebook) -> dict[str, Any]:
    doc: dict[str, Any] = {"schema_id": cb.schema_id, "version": cb.version}
    if cb.draft:
        doc["draft"] = True
    doc["variables"] = []
    for v in cb.variables:
        entry: dict[str, Any] = {"key": v.key, "label": v.label, "kind": v.kind, "required": v.required}
        if v.kind in CHOICE_KINDS:
            entry["options"] = []
            for o in v.options:
                opt: dict[str, Any] = {"code": o.code, "label": o.label, "definition": o.definition}
                if o.reference_image_url is not None:
                    opt["reference_image_url"] = o.reference_image_url
                entry["options"].append(opt)
        elif v.kind == "count":
            entry["min_count"] = v.min_count
            entry["max_count"] = v.max_count
        doc["variables"].append(entry)
    return doc


def serialize_codebook(cb: Codebook) -> bytes:
    return (json.dumps(codebook_to_json(cb), indent=2, ensure_ascii=False) + "\n").encode("utf-8")


def validate_response_shape(cb: Codebook, answers: Mapping[str, Answer]) -> list[Violation]:
    """Check an answer map against the codebook; violations are data, not errors."""
    violations: list[Violation] = []
    known = set(cb.keys())
    for key in answers:
        if key not in known:
            violations.append(Violation(key, "unknown variable"))
    for var in cb.variables:
        ans = answers.get(var.key)
        if ans is None:
            if var.required:
                violations.append(Violation(var.key, "missing required answer"))
            continue
        if ans.kind != var.kind:
            violations.append(Violation(var.key, f"answer kind {ans.kind} does not match {var.kind}"))
            continue
        if var.kind == "single_choice":
            if ans.choice not in var.option_codes():
                violations.append(Violation(var.key, f"unknown option code {ans.choice!r}"))
        elif var.kind == "multi_choice":
            assert ans.choices is not None
            if not ans.choices:
                violations.append(Violation(var.key, "multi_choice answer must select at least one code"))
            else:
                bad = sorted(set(ans.choices) - set(var.option_codes()))
                if bad:
                    violations.append(Violation(var.key, f"unknown option code(s) {bad}"))
        elif var.kind == "count":
            assert ans.count is not None and var.min_count is not None and var.max_count is not None
            if not (var.min_count <= ans.count <= var.max_count):
                violations.append(Violation(
                    var.key,
                    f"count {ans.count} outside [{var.min_count}, {var.max_count}]",
                ))
    return violations


def answers_to_json(answers: Mapping[str, Answer]) -> dict[str, Any]:
    return {k: a.to_json() for k, a in answers.items()}


def answers_from_json(obj: Any) -> dict[str, Answer]:
    if not isinstance(obj, dict):
        raise ValueError("answers must be an object keyed by variable")
    return {k: Answer.from_json(v) for k, v in obj.items()}
