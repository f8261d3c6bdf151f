import json
from pathlib import Path

import pytest

from clozebias.errors import DegenerateInputError, MissingScoreError, ValidationError
from clozebias.lm import MockProvider, write_score_file
from clozebias.report import (
    ProviderSpec,
    RunConfig,
    emit,
    export_sentences,
    report_to_obj,
    run,
    write_manifest,
)

FIXTURES = Path(__file__).parent / "fixtures"
CORPUS = str(FIXTURES / "genderlex12.jsonl")
EMBEDDINGS = str(FIXTURES / "embeddings3d.txt")


def mock_config(**overrides):
    defaults = dict(
        corpus_path=CORPUS,
        family="genderlex",
        embeddings_path=EMBEDDINGS,
        provider=ProviderSpec(kind="mock"),
        context_kinds=("none", "occupation", "noun", "verb", "combined"),
    )
    defaults.update(overrides)
    return RunConfig(**defaults)


@pytest.fixture(scope="module")
def fixture_report():
    return run(mock_config())


# --- pipeline ------------------------------------------------------------------


def test_run_produces_all_rows(fixture_report):
    kinds = [row.context_kind for row in fixture_report.rows]
    assert kinds == ["none", "occupation", "noun", "verb", "combined"]
    for row in fixture_report.rows:
        assert row.n_instances == 12
        assert row.ratio("m") + row.ratio("w") == pytest.approx(1.0, abs=1e-9)
        assert row.kl >= 0.0


def test_run_baseline_row_has_zero_kl(fixture_report):
    none_row = fixture_report.rows[0]
    assert none_row.kl == 0.0
    assert none_row.weat is None


def test_run_is_deterministic():
    first = emit(run(mock_config()), "json")
    second = emit(run(mock_config()), "json")
    assert first == second


def test_run_emits_oov_warning(fixture_report):
    # instance i12's verb "limned" is not in the fixture embeddings
    assert any("limned" in w for w in fixture_report.warnings)


def test_run_reports_human_agreement(fixture_report):
    kinds = dict(fixture_report.human_agreement)
    assert set(kinds) == {"none", "occupation", "noun", "verb", "combined"}
    for value in kinds.values():
        assert 0.0 <= value <= 1.0


def test_run_defaults_context_kinds():
    report = run(mock_config(context_kinds=()))
    kinds = [row.context_kind for row in report.rows]
    assert kinds == ["none", "occupation", "noun", "verb", "combined"]


def test_invalid_context_kind_for_family():
    with pytest.raises(ValidationError, match="concept"):
        run(mock_config(context_kinds=("concept",)))


def test_error_names_failing_stage(tmp_path):
    missing = tmp_path / "nope.jsonl"
    with pytest.raises(FileNotFoundError):
        run(mock_config(corpus_path=str(missing)))
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"id": "1", "template": "no placeholder"}\n', "utf-8")
    try:
        run(mock_config(corpus_path=str(bad)))
        raise AssertionError("expected ValidationError")
    except ValidationError as err:
        assert err.stage == "corpus"


def test_empty_corpus_is_degenerate(tmp_path):
    empty = tmp_path / "empty.jsonl"
    empty.write_text("", "utf-8")
    with pytest.raises(DegenerateInputError):
        run(mock_config(corpus_path=str(empty)))


def test_mid_sentence_pronouns_force_cloze_all(tmp_path):
    rows = [
        {"template": "The person argued with the designer and slapped {P} in the face.",
         "occupation": "designer", "verb": "slapped"},
    ]
    corpus = tmp_path / "wino.jsonl"
    corpus.write_text("\n".join(json.dumps(r) for r in rows) + "\n", "utf-8")
    emb = tmp_path / "emb.txt"
    emb.write_text("him 1 0\nher 0 1\ndesigner 0.5 0.5\nslapped 0.9 0.1\n", "utf-8")
    report = run(
        RunConfig(
            corpus_path=str(corpus), family="winograd", embeddings_path=str(emb),
            provider=ProviderSpec(kind="mock"),
            context_kinds=("occupation", "verb"),
        )
    )
    assert report.config["mode"] == "cloze-all"
    assert any("mid-sentence" in w for w in report.warnings)


def test_file_provider_roundtrip_via_manifest(tmp_path):
    # completeness: scores generated from the manifest satisfy the whole run
    records, _ = export_sentences(mock_config())
    provider = MockProvider()
    scores = provider.fetch([r["text"] for r in records])
    logprobs = tmp_path / "scores.jsonl"
    write_score_file(scores, logprobs)
    config = mock_config(provider=ProviderSpec(kind="file", path=str(logprobs)))
    report = run(config)  # any missing sentence would raise MissingScoreError
    assert report.config["provider"]["kind"] == "file"
    # and the file-backed run matches the mock run exactly
    assert emit(report, "json") != b""
    mock_obj = report_to_obj(run(mock_config()))
    file_obj = report_to_obj(report)
    assert file_obj["rows"] == mock_obj["rows"]
    assert file_obj["instances"] == mock_obj["instances"]


def test_file_provider_missing_sentence_raises(tmp_path):
    records, _ = export_sentences(mock_config())
    provider = MockProvider()
    scores = provider.fetch([r["text"] for r in records[:3]])  # deliberately partial
    logprobs = tmp_path / "partial.jsonl"
    write_score_file(scores, logprobs)
    with pytest.raises(MissingScoreError):
        run(mock_config(provider=ProviderSpec(kind="file", path=str(logprobs))))


# --- emit ------------------------------------------------------------------------


def test_emit_json_roundtrips(fixture_report):
    obj = json.loads(emit(fixture_report, "json").decode())
    assert obj == report_to_obj(fixture_report)
    assert obj["config"]["n_instances"] == 12


def test_emit_tsv_row_count(fixture_report):
    lines = emit(fixture_report, "tsv").decode().splitlines()
    assert len(lines) == len(fixture_report.rows) + 1
    assert lines[0].split("\t")[:3] == ["context", "M", "W"]


def test_emit_markdown_table_layout(fixture_report):
    text = emit(fixture_report, "markdown").decode()
    assert "| context | M | W | KL | WEAT |" in text
    data_lines = [l for l in text.splitlines() if l.startswith("| none")]
    assert len(data_lines) == 1
    cells = [c.strip() for c in data_lines[0].strip("|").split("|")]
    assert len(cells) == 5


def test_emit_fixed_decimals(fixture_report):
    text = emit(fixture_report, "tsv").decode()
    value = text.splitlines()[1].split("\t")[1]
    assert len(value.split(".")[1]) == 6


# --- export_sentences ---------------------------------------------------------------


def test_export_two_lines_per_instance(tmp_path):
    corpus = tmp_path / "one.jsonl"
    corpus.write_text(
        json.dumps({"id": "1", "template": "The chef cooked the soup made by {P}.",
                    "occupation": "chef", "noun": "soup", "verb": "cooked"}) + "\n",
        "utf-8",
    )
    records, duplicates = export_sentences(mock_config(corpus_path=str(corpus)))
    assert len(records) == 2
    assert duplicates == 0


def test_export_three_lines_with_neutral_lexicon(tmp_path):
    corpus = tmp_path / "one.jsonl"
    corpus.write_text(
        json.dumps({"id": "1", "template": "The chef cooked the soup made by {P}.",
                    "occupation": "chef", "noun": "soup", "verb": "cooked"}) + "\n",
        "utf-8",
    )
    records, _ = export_sentences(
        mock_config(corpus_path=str(corpus), lexicon="english-them")
    )
    assert len(records) == 3


def test_export_dedupes_identical_sentences(tmp_path):
    row = {"id": "1", "template": "The chef cooked the soup made by {P}.",
           "occupation": "chef", "noun": "soup", "verb": "cooked"}
    corpus = tmp_path / "dup.jsonl"
    corpus.write_text(
        json.dumps(row) + "\n" + json.dumps(dict(row, id="2")) + "\n", "utf-8"
    )
    records, duplicates = export_sentences(mock_config(corpus_path=str(corpus)))
    assert len(records) == 2
    assert duplicates == 2


def test_manifest_file_shape(tmp_path, fixture_report):
    records, _ = export_sentences(mock_config())
    out = tmp_path / "manifest.jsonl"
    write_manifest(records, out)
    lines = out.read_text("utf-8").splitlines()
    assert len(lines) == len(records) == 24  # 12 instances x 2 genders, all unique
    parsed = [json.loads(l) for l in lines]
    assert all(set(p) == {"sentence_id", "text"} for p in parsed)
    assert parsed == sorted(parsed, key=lambda p: p["sentence_id"])


def test_tie_recorded_in_warnings(tmp_path):
    # identical logprobs for both variants at context none force an exact tie
    from dataclasses import replace

    from clozebias.corpus import builtin_lexicon, expand_variants, parse_genderlex

    row = {"id": "t1", "template": "The chef cooked the soup made by {P}.",
           "occupation": "chef", "noun": "soup", "verb": "cooked"}
    corpus = tmp_path / "tie.jsonl"
    corpus.write_text(json.dumps(row) + "\n", "utf-8")
    inst = parse_genderlex(corpus)[0]
    lexicon = builtin_lexicon("english-binary")
    scores = []
    for variant in expand_variants(inst, lexicon, ["m", "w"]):
        base = MockProvider().fetch([variant.sentence])[0]
        lps = [None] + [-1.25] * (len(base.tokens) - 1)
        scores.append(replace(base, logprobs=tuple(lps)))
    logprobs = tmp_path / "tie-scores.jsonl"
    write_score_file(scores, logprobs)
    report = run(
        mock_config(
            corpus_path=str(corpus),
            provider=ProviderSpec(kind="file", path=str(logprobs)),
            context_kinds=("none",),
        )
    )
    assert any("tie between m, w" in w for w in report.warnings)
    detail = report.instances[0]
    assert detail["tie"] is True and detail["winner"] is None
