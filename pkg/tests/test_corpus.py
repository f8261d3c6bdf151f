import json

import pytest

from clozebias.corpus import (
    TemplateInstance,
    builtin_lexicon,
    dump_instances,
    expand_variants,
    load_instances,
    load_lexicon,
    neutralize,
    parse_concept_pairs,
    parse_corpus,
    parse_genderlex,
    parse_winograd,
)
from clozebias.errors import FormatError, ValidationError

CHEF = {
    "id": "1",
    "template": "The chef mentioned that the recipe was crafted by {P}.",
    "occupation": "chef",
    "noun": "recipe",
    "verb": "crafted",
}


def write_jsonl(tmp_path, rows, name="corpus.jsonl"):
    p = tmp_path / name
    p.write_text("".join(json.dumps(r, ensure_ascii=False) + "\n" for r in rows), "utf-8")
    return p


def chef_instance(tmp_path):
    return parse_genderlex(write_jsonl(tmp_path, [CHEF]))[0]


ENGLISH = builtin_lexicon("english-binary")
ENGLISH_THEM = builtin_lexicon("english-them")


# --- genderlex parsing -------------------------------------------------------


def test_parse_genderlex_example(tmp_path):
    inst = chef_instance(tmp_path)
    assert inst.family == "genderlex"
    assert inst.context_map == {"occupation": "chef", "noun": "recipe", "verb": "crafted"}
    assert inst.pronoun_final()


def test_template_without_placeholder_rejected(tmp_path):
    bad = dict(CHEF, template="The chef cooked.")
    with pytest.raises(ValidationError, match=r"exactly one \{P\}"):
        parse_genderlex(write_jsonl(tmp_path, [bad]))


def test_repeated_placeholder_rejected(tmp_path):
    bad = dict(CHEF, template="{P} said the recipe was crafted by {P}, chef.")
    with pytest.raises(ValidationError, match="found 2"):
        parse_genderlex(write_jsonl(tmp_path, [bad]))


def test_context_word_not_in_template_names_word(tmp_path):
    bad = dict(CHEF, noun="soup")
    with pytest.raises(ValidationError, match="'soup' not found"):
        parse_genderlex(write_jsonl(tmp_path, [bad]))


def test_all_bad_lines_reported(tmp_path):
    bad1 = dict(CHEF, noun="soup")
    bad2 = {"id": "2", "template": "x {P}"}
    try:
        parse_genderlex(write_jsonl(tmp_path, [bad1, bad2, CHEF]))
        raise AssertionError("expected ValidationError")
    except ValidationError as err:
        msg = str(err)
        assert "line 1" in msg and "line 2" in msg


def test_missing_field_reported(tmp_path):
    with pytest.raises(ValidationError, match="missing fields: verb"):
        parse_genderlex(write_jsonl(tmp_path, [{k: v for k, v in CHEF.items() if k != "verb"}]))


def test_invalid_json_is_format_error(tmp_path):
    p = tmp_path / "broken.jsonl"
    p.write_text('{"id": "1"\n', "utf-8")
    with pytest.raises(FormatError, match=":1:"):
        parse_genderlex(p)


# --- neutralize ---------------------------------------------------------------


def test_neutralize_someone_absorbs_article(tmp_path):
    inst = neutralize(chef_instance(tmp_path), "someone")
    assert inst.template == "Someone mentioned that the recipe was crafted by {P}."
    assert inst.family == "genderlex-neutral"
    assert inst.context_map == {"noun": "recipe", "verb": "crafted"}


def test_neutralize_person_keeps_article(tmp_path):
    inst = neutralize(chef_instance(tmp_path), "person")
    assert inst.template == "The person mentioned that the recipe was crafted by {P}."
    assert "occupation" not in inst.context_map


def test_neutralize_mid_sentence_occupation(tmp_path):
    row = {
        "id": "7",
        "template": "Yesterday the chef confirmed the recipe was crafted by {P}.",
        "occupation": "chef",
        "noun": "recipe",
        "verb": "crafted",
    }
    inst = neutralize(parse_genderlex(write_jsonl(tmp_path, [row]))[0], "someone")
    assert inst.template == "Yesterday someone confirmed the recipe was crafted by {P}."


def test_neutralize_twice_is_error(tmp_path):
    neutral = neutralize(chef_instance(tmp_path), "someone")
    with pytest.raises(ValidationError, match="no occupation"):
        neutralize(neutral, "someone")


def test_neutralize_never_leaks_occupation(tmp_path):
    inst = chef_instance(tmp_path)
    neutral = neutralize(inst, "someone")
    for variant in expand_variants(neutral, ENGLISH_THEM):
        assert "chef" not in variant.sentence


# --- expand_variants ------------------------------------------------------------


def test_expand_binary_pair_property(tmp_path):
    variants = expand_variants(chef_instance(tmp_path), ENGLISH, ["m", "w"])
    assert [v.label for v in variants] == ["m", "w"]
    m, w = variants
    assert m.sentence == "The chef mentioned that the recipe was crafted by him."
    assert w.sentence == "The chef mentioned that the recipe was crafted by her."
    # identical strings outside the pronoun char range
    assert m.sentence[: m.char_start] == w.sentence[: w.char_start]
    assert m.sentence[m.char_end :] == w.sentence[w.char_end :]
    assert m.sentence[m.char_start : m.char_end] == "him"
    assert w.sentence[w.char_start : w.char_end] == "her"


def test_expand_with_neutral_label(tmp_path):
    variants = expand_variants(chef_instance(tmp_path), ENGLISH_THEM)
    assert [v.label for v in variants] == ["m", "w", "neutral"]
    assert variants[2].sentence.endswith("crafted by them.")


def test_expand_japanese_offsets():
    inst = TemplateInstance(
        id="jp1",
        family="jp-pairs",
        template="{P}は家事が得意です。",
        contexts=(("concept", "家事"),),
    )
    jp = builtin_lexicon("japanese")
    him, her = expand_variants(inst, jp, ["m", "w"])
    assert him.sentence == "彼は家事が得意です。"
    assert (him.char_start, him.char_end) == (0, 1)
    assert her.sentence == "彼女は家事が得意です。"
    assert (her.char_start, her.char_end) == (0, 2)
    assert her.sentence[her.char_start : her.char_end] == "彼女"


def test_expand_capitalizes_at_sentence_start():
    inst = TemplateInstance(
        id="c1",
        family="crows-pairs",
        template="{P} are bad at learning.",
        contexts=(("concept", "learning"),),
    )
    lexicon = load_lexicon_obj({"m": "men", "w": "women"})
    men, women = expand_variants(inst, lexicon, ["m", "w"])
    assert men.sentence == "Men are bad at learning."
    assert (men.char_start, men.char_end) == (0, 3)
    assert women.sentence == "Women are bad at learning."


def load_lexicon_obj(surfaces):
    from clozebias.corpus import _lexicon_from_obj

    return _lexicon_from_obj(
        {"name": "t", "genders": {k: {"surface": v} for k, v in surfaces.items()}},
        "inline",
    )


# --- winograd -------------------------------------------------------------------


WINOBIAS = {
    "template": "The person argued with the designer and slapped {P} in the face.",
    "occupation": "designer",
    "verb": "slapped",
}
WINOGENDER = {
    "template": "The technician told the customer that {P} could pay with cash.",
    "occupation": "customer",
    "verb": "pay",
}


def test_parse_winograd_examples(tmp_path):
    insts = parse_winograd(write_jsonl(tmp_path, [WINOBIAS, WINOGENDER]))
    assert len(insts) == 2
    assert all(i.family == "winograd" for i in insts)
    # mid-sentence pronouns: flagged for whole-sentence scoring
    assert not insts[0].pronoun_final()
    assert not insts[1].pronoun_final()


def test_winograd_missing_occupation(tmp_path):
    with pytest.raises(ValidationError, match="missing fields: occupation"):
        parse_winograd(write_jsonl(tmp_path, [{k: v for k, v in WINOBIAS.items() if k != "occupation"}]))


# --- concept pairs ----------------------------------------------------------------


def test_parse_concept_pairs(tmp_path):
    rows = [{"template": "{P} are bad at learning.", "concept": "learning"}]
    inst = parse_concept_pairs(write_jsonl(tmp_path, rows))[0]
    assert inst.family == "crows-pairs"
    assert inst.context_map == {"concept": "learning"}


def test_parse_jp_pairs(tmp_path):
    rows = [{"template": "{P}は家事が得意です。", "concept": "家事", "human_label": "w"}]
    inst = parse_concept_pairs(write_jsonl(tmp_path, rows), "jp-pairs")[0]
    assert inst.family == "jp-pairs"
    assert inst.human_label == "w"


def test_concept_missing_rejected(tmp_path):
    with pytest.raises(ValidationError, match="missing fields: concept"):
        parse_concept_pairs(write_jsonl(tmp_path, [{"template": "{P} x."}]))


def test_empty_concept_rejected(tmp_path):
    with pytest.raises(ValidationError, match="empty concept"):
        parse_concept_pairs(write_jsonl(tmp_path, [{"template": "{P} x.", "concept": ""}]))


# --- round trips --------------------------------------------------------------------


def family_fixtures(tmp_path):
    genderlex = parse_genderlex(write_jsonl(tmp_path, [CHEF], "g.jsonl"))
    neutral = [neutralize(i, "someone") for i in genderlex]
    winograd = parse_winograd(write_jsonl(tmp_path, [WINOBIAS], "w.jsonl"))
    crows = parse_concept_pairs(
        write_jsonl(tmp_path, [{"template": "{P} are bad at learning.", "concept": "learning"}], "c.jsonl")
    )
    jp = parse_concept_pairs(
        write_jsonl(tmp_path, [{"template": "{P}は家事が得意です。", "concept": "家事"}], "j.jsonl"),
        "jp-pairs",
    )
    return {"genderlex": genderlex, "genderlex-neutral": neutral, "winograd": winograd,
            "crows-pairs": crows, "jp-pairs": jp}


@pytest.mark.parametrize("family", ["genderlex", "genderlex-neutral", "winograd", "crows-pairs", "jp-pairs"])
def test_serialize_roundtrip_is_identity(tmp_path, family):
    instances = family_fixtures(tmp_path)[family]
    path = tmp_path / "canonical.jsonl"
    path.write_text(dump_instances(instances), "utf-8")
    assert load_instances(path) == instances
    # a second cycle is also stable
    path.write_text(dump_instances(load_instances(path)), "utf-8")
    assert load_instances(path) == instances


def test_parse_corpus_autodetects_canonical(tmp_path):
    instances = family_fixtures(tmp_path)["genderlex"]
    path = tmp_path / "canonical.jsonl"
    path.write_text(dump_instances(instances), "utf-8")
    assert parse_corpus(path, "genderlex") == instances


def test_parse_corpus_raw(tmp_path):
    path = write_jsonl(tmp_path, [CHEF])
    assert parse_corpus(path, "genderlex")[0].context("occupation") == "chef"


# --- lexicons -------------------------------------------------------------------------


def test_builtin_lexicons_load():
    for name in ("english-binary", "english-them", "japanese"):
        lex = builtin_lexicon(name)
        assert lex.labels
        for label in lex.labels:
            assert lex.entry(label).query_words


def test_lexicon_from_json_file(tmp_path):
    p = tmp_path / "lex.json"
    p.write_text(
        json.dumps({"name": "x", "genders": {
            "m": {"surface": "he", "query_words": ["he", "him"]},
            "w": {"surface": "she", "query_words": ["she", "her"]},
        }}),
        "utf-8",
    )
    lex = load_lexicon(p)
    assert lex.entry("m").query_words == ("he", "him")


def test_lexicon_from_toml_file(tmp_path):
    p = tmp_path / "lex.toml"
    p.write_text(
        'name = "t"\n'
        "[genders.m]\nsurface = \"him\"\n"
        "[genders.w]\nsurface = \"her\"\nquery_words = [\"her\", \"she\"]\n",
        "utf-8",
    )
    lex = load_lexicon(p)
    assert lex.entry("m").query_words == ("him",)  # defaults to the surface
    assert lex.entry("w").query_words == ("her", "she")


def test_lexicon_duplicate_surfaces_rejected(tmp_path):
    p = tmp_path / "lex.json"
    p.write_text(json.dumps({"genders": {"m": {"surface": "x"}, "w": {"surface": "x"}}}), "utf-8")
    with pytest.raises(ValidationError, match="distinct"):
        load_lexicon(p)


def test_unknown_builtin_rejected():
    with pytest.raises(ValidationError, match="unknown lexicon"):
        builtin_lexicon("klingon")
