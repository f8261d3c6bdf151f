"""Dataset parsing: template instances, pronoun lexicons, variant expansion.

All supported families are normalized to one instance model. Raw
per-family JSON-lines files are parsed by the parse_* functions;
`dump_instances`/`load_instances` round-trip the canonical schema
(docs/formats.md). Templates carry exactly one `{P}` pronoun placeholder.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Sequence

from clozebias.errors import DegenerateInputError, FormatError, ValidationError

PLACEHOLDER = "{P}"
CONTEXT_KINDS = ("occupation", "noun", "verb", "concept", "group")
FAMILIES = ("genderlex", "genderlex-neutral", "winograd", "crows-pairs", "jp-pairs")

# context kinds an instance of each family must / may carry
_REQUIRED = {
    "genderlex": ("occupation", "noun", "verb"),
    "genderlex-neutral": ("noun", "verb"),
    "winograd": ("occupation", "verb"),
    "crows-pairs": ("concept",),
    "jp-pairs": ("concept",),
}
_FORBIDDEN = {"genderlex-neutral": ("occupation",)}

_TRAILING = " \t\r\n.,!?;:…。、」』）)\"'"


@dataclass(frozen=True, eq=True)
class TemplateInstance:
    """One dataset item: a template with annotated bias contexts."""

    id: str
    family: str
    template: str
    contexts: tuple[tuple[str, str], ...]  # (kind, surface) pairs, parse order
    human_label: str | None = None

    @property
    def context_map(self) -> dict[str, str]:
        return dict(self.contexts)

    def context(self, kind: str) -> str | None:
        return self.context_map.get(kind)

    def pronoun_final(self) -> bool:
        """True when `{P}` is the last token (ignoring trailing punctuation)."""
        return self.template.rstrip(_TRAILING).endswith(PLACEHOLDER)


class SentenceVariant(NamedTuple):
    label: str
    sentence: str
    char_start: int  # code-point range of the substituted pronoun
    char_end: int


@dataclass(frozen=True)
class GenderEntry:
    surface: str
    query_words: tuple[str, ...]


@dataclass(frozen=True)
class PronounLexicon:
    """Pronoun surface forms and embedding query words per gender label."""

    name: str
    entries: tuple[tuple[str, GenderEntry], ...]

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(label for label, _ in self.entries)

    def entry(self, label: str) -> GenderEntry:
        for key, value in self.entries:
            if key == label:
                return value
        raise ValidationError(f"lexicon {self.name!r} has no gender label {label!r}")


# --- instance validation ----------------------------------------------------


def _instance_problems(inst: TemplateInstance) -> list[str]:
    problems = []
    if inst.family not in FAMILIES:
        problems.append(f"unknown family {inst.family!r}")
        return problems
    count = inst.template.count(PLACEHOLDER)
    if count != 1:
        problems.append(
            f"template must contain exactly one {PLACEHOLDER} placeholder, found {count}"
        )
    seen = set()
    for kind, surface in inst.contexts:
        if kind not in CONTEXT_KINDS:
            problems.append(f"unknown context kind {kind!r}")
            continue
        if kind in seen:
            problems.append(f"duplicate context kind {kind!r}")
        seen.add(kind)
        if not surface:
            problems.append(f"empty {kind} context")
        elif surface not in inst.template:
            problems.append(f"{kind} word {surface!r} not found in template")
    for kind in _REQUIRED[inst.family]:
        if kind not in seen:
            problems.append(f"family {inst.family!r} requires a {kind} context")
    for kind in _FORBIDDEN.get(inst.family, ()):
        if kind in seen:
            problems.append(f"family {inst.family!r} forbids a {kind} context")
    return problems


def validate_instance(inst: TemplateInstance) -> None:
    problems = _instance_problems(inst)
    if problems:
        raise ValidationError(f"instance {inst.id!r}: " + "; ".join(problems))


def _read_jsonl(path: str | Path) -> Iterable[tuple[int, dict]]:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as err:
                raise FormatError(f"{path}:{lineno}: invalid JSON: {err}") from None
            if not isinstance(obj, dict):
                raise FormatError(f"{path}:{lineno}: expected a JSON object")
            yield lineno, obj


def _parse_family(
    path: str | Path,
    family: str,
    required_fields: Sequence[str],
    context_fields: Sequence[str],
) -> list[TemplateInstance]:
    instances = []
    errors = []
    for lineno, obj in _read_jsonl(path):
        missing = [f for f in required_fields if f not in obj]
        if missing:
            errors.append(f"line {lineno}: missing fields: {', '.join(missing)}")
            continue
        inst = TemplateInstance(
            id=str(obj.get("id", f"{family}-{lineno}")),
            family=family,
            template=str(obj["template"]),
            contexts=tuple(
                (kind, str(obj[kind])) for kind in context_fields if obj.get(kind) is not None
            ),
            human_label=None if obj.get("human_label") is None else str(obj["human_label"]),
        )
        problems = _instance_problems(inst)
        if problems:
            errors.extend(f"line {lineno}: {p}" for p in problems)
        else:
            instances.append(inst)
    if errors:
        raise ValidationError(f"{path}: " + "\n".join(errors))
    if not instances:
        raise DegenerateInputError(f"{path}: no instances")
    return instances


def parse_genderlex(path: str | Path) -> list[TemplateInstance]:
    """Parse occupation/noun/verb template records (see docs/formats.md)."""
    return _parse_family(
        path,
        "genderlex",
        required_fields=("id", "template", "occupation", "noun", "verb"),
        context_fields=("occupation", "noun", "verb"),
    )


def parse_winograd(path: str | Path, family_hint: str = "winograd") -> list[TemplateInstance]:
    """Parse Winograd-style records whose first entity is already neutralized.

    The pronoun may sit mid-sentence; such instances are scored in
    whole-sentence mode (pronoun_final() is False).
    """
    if family_hint not in ("winograd", "winobias", "winogender"):
        raise ValidationError(f"unknown winograd family hint: {family_hint!r}")
    return _parse_family(
        path,
        "winograd",
        required_fields=("template", "occupation", "verb"),
        context_fields=("occupation", "noun", "verb"),
    )


def parse_concept_pairs(path: str | Path, family: str = "crows-pairs") -> list[TemplateInstance]:
    """Parse stereotype-pair records carrying a single `concept` context."""
    if family not in ("crows-pairs", "jp-pairs"):
        raise ValidationError(f"unknown concept-pair family: {family!r}")
    return _parse_family(
        path,
        family,
        required_fields=("template", "concept"),
        context_fields=("concept",),
    )


_RAW_PARSERS = {
    "genderlex": parse_genderlex,
    "winograd": parse_winograd,
    "winobias": lambda p: parse_winograd(p, "winobias"),
    "winogender": lambda p: parse_winograd(p, "winogender"),
    "crows-pairs": lambda p: parse_concept_pairs(p, "crows-pairs"),
    "jp-pairs": lambda p: parse_concept_pairs(p, "jp-pairs"),
}


def parse_corpus(path: str | Path, family: str) -> list[TemplateInstance]:
    """Parse a corpus file: canonical records, or raw records of `family`.

    Files whose records carry a `family` field are treated as canonical
    regardless of the requested family (raw genderlex-neutral files do not
    exist; they come from `neutralize` or a canonical file).
    """
    if family == "canonical" or family == "genderlex-neutral":
        return load_instances(path)
    parser = _RAW_PARSERS.get(family)
    if parser is None:
        raise ValidationError(f"unknown corpus family: {family!r}")
    first = next(iter(_read_jsonl(path)), None)
    if first is not None and "family" in first[1]:
        return load_instances(path)
    return parser(path)


# --- canonical serialization -------------------------------------------------


def instance_to_obj(inst: TemplateInstance) -> dict:
    obj: dict = {
        "id": inst.id,
        "family": inst.family,
        "template": inst.template,
        "contexts": {kind: surface for kind, surface in inst.contexts},
    }
    if inst.human_label is not None:
        obj["human_label"] = inst.human_label
    return obj


def dump_instances(instances: Iterable[TemplateInstance]) -> str:
    return "".join(
        json.dumps(instance_to_obj(inst), ensure_ascii=False) + "\n" for inst in instances
    )


def load_instances(path: str | Path) -> list[TemplateInstance]:
    """Load canonical corpus records (inverse of dump_instances)."""
    instances = []
    errors = []
    for lineno, obj in _read_jsonl(path):
        missing = [f for f in ("id", "family", "template", "contexts") if f not in obj]
        if missing:
            errors.append(f"line {lineno}: missing fields: {', '.join(missing)}")
            continue
        contexts = obj["contexts"]
        if not isinstance(contexts, Mapping):
            errors.append(f"line {lineno}: contexts must be an object")
            continue
        inst = TemplateInstance(
            id=str(obj["id"]),
            family=str(obj["family"]),
            template=str(obj["template"]),
            contexts=tuple((str(k), str(v)) for k, v in contexts.items()),
            human_label=None if obj.get("human_label") is None else str(obj["human_label"]),
        )
        problems = _instance_problems(inst)
        if problems:
            errors.extend(f"line {lineno}: {p}" for p in problems)
        else:
            instances.append(inst)
    if errors:
        raise ValidationError(f"{path}: " + "\n".join(errors))
    if not instances:
        raise DegenerateInputError(f"{path}: no instances")
    return instances


# --- neutralization and variant expansion ------------------------------------

_ARTICLE_RE = re.compile(r"(?i)(?:^|(?<=\s))(the|an|a)\s+$")


def neutralize(inst: TemplateInstance, entity: str = "someone") -> TemplateInstance:
    """Replace the occupation with a gender-neutral entity.

    `someone` absorbs the article ("The chef" -> "Someone"); `person`
    keeps it ("The chef" -> "The person"). The occupation context is
    dropped and the instance moves to the genderlex-neutral family.
    """
    if entity not in ("someone", "person"):
        raise ValidationError(f"unknown neutral entity: {entity!r}")
    occupation = inst.context("occupation")
    if occupation is None:
        raise ValidationError(f"instance {inst.id!r} has no occupation context to neutralize")
    start = inst.template.find(occupation)
    end = start + len(occupation)
    article = _ARTICLE_RE.search(inst.template, 0, start)
    if entity == "someone":
        replacement = "someone"
        if article:
            start = article.start()
    else:
        replacement = "person" if article else "a person"
    if start == 0:
        replacement = replacement[0].upper() + replacement[1:]
    template = inst.template[:start] + replacement + inst.template[end:]
    out = TemplateInstance(
        id=inst.id,
        family="genderlex-neutral",
        template=template,
        contexts=tuple((k, v) for k, v in inst.contexts if k != "occupation"),
        human_label=inst.human_label,
    )
    validate_instance(out)
    return out


def expand_variants(
    inst: TemplateInstance,
    lexicon: PronounLexicon,
    genders: Sequence[str] | None = None,
) -> list[SentenceVariant]:
    """Substitute `{P}` per gender; records the pronoun's code-point range."""
    labels = lexicon.labels if genders is None else tuple(genders)
    idx = inst.template.index(PLACEHOLDER)
    variants = []
    for label in labels:
        surface = lexicon.entry(label).surface
        if idx == 0:
            surface = surface[0].upper() + surface[1:]
        sentence = inst.template[:idx] + surface + inst.template[idx + len(PLACEHOLDER) :]
        variants.append(SentenceVariant(label, sentence, idx, idx + len(surface)))
    return variants


# --- lexicon loading ----------------------------------------------------------

BUILTIN_LEXICONS = ("english-binary", "english-them", "japanese")


def _lexicon_from_obj(obj: dict, source: str) -> PronounLexicon:
    if not isinstance(obj, dict) or not isinstance(obj.get("genders"), Mapping):
        raise ValidationError(f"{source}: lexicon must be an object with a 'genders' table")
    entries = []
    for label, spec in obj["genders"].items():
        if not isinstance(spec, Mapping) or "surface" not in spec:
            raise ValidationError(f"{source}: gender {label!r} needs a 'surface' form")
        surface = str(spec["surface"])
        query = tuple(str(w) for w in spec.get("query_words", []) or [surface])
        if not surface:
            raise ValidationError(f"{source}: gender {label!r} has an empty surface form")
        if not query:
            raise ValidationError(f"{source}: gender {label!r} needs at least one query word")
        entries.append((str(label), GenderEntry(surface, query)))
    if not entries:
        raise ValidationError(f"{source}: lexicon defines no genders")
    surfaces = [e.surface for _, e in entries]
    if len(set(surfaces)) != len(surfaces):
        raise ValidationError(f"{source}: gender surface forms must be distinct")
    return PronounLexicon(name=str(obj.get("name", source)), entries=tuple(entries))


def load_lexicon(path: str | Path) -> PronounLexicon:
    """Load a pronoun lexicon from a JSON or TOML config file."""
    path = Path(path)
    if path.suffix.lower() == ".toml":
        try:
            import tomllib  # py >= 3.11
        except ImportError:
            import tomli as tomllib
        obj = tomllib.loads(path.read_text(encoding="utf-8"))
    else:
        obj = json.loads(path.read_text(encoding="utf-8"))
    return _lexicon_from_obj(obj, str(path))


def builtin_lexicon(name: str) -> PronounLexicon:
    """One of the shipped lexicons: english-binary, english-them, japanese."""
    from importlib.resources import files

    if name not in BUILTIN_LEXICONS:
        raise ValidationError(
            f"unknown lexicon {name!r}; built-ins: {', '.join(BUILTIN_LEXICONS)}"
        )
    data = files("clozebias").joinpath(f"lexicons/{name.replace('-', '_')}.json")
    return _lexicon_from_obj(json.loads(data.read_text(encoding="utf-8")), name)
