"""Standalone logprob-record validator implementing the documented contract.

Deliberately independent of the consumer package: this is the exporter's own
reading of the wire format (docs/formats.md in the main repo).
"""

import hashlib


def assert_valid_record(record):
    required = ("sentence_id", "model_id", "text", "tokens", "logprobs", "token_offsets")
    for key in required:
        assert key in record, f"missing field {key}"
    text = record["text"]
    tokens = record["tokens"]
    logprobs = record["logprobs"]
    offsets = record["token_offsets"]
    assert len(tokens) == len(logprobs) == len(offsets), "length mismatch"
    assert len(tokens) >= 1, "no tokens"
    assert logprobs[0] is None, "first logprob must be null"
    for lp in logprobs[1:]:
        assert isinstance(lp, float) and lp <= 0.0, f"bad logprob {lp!r}"
    prev_end = None
    for token, (a, b) in zip(tokens, offsets):
        assert 0 <= a < b <= len(text), f"offset {(a, b)} out of range"
        assert token == text[a:b], f"token {token!r} != slice {text[a:b]!r}"
        if prev_end is not None:
            assert a >= prev_end, "overlapping offsets"
            assert text[prev_end:a].strip() == "", "non-whitespace gap"
        prev_end = b
    assert text[: offsets[0][0]].strip() == "", "uncovered text before first token"
    assert text[offsets[-1][1] :].strip() == "", "uncovered text after last token"
    expected = hashlib.sha256(
        f"{record['model_id']}\x00{text}".encode("utf-8")
    ).hexdigest()[:16]
    assert record["sentence_id"] == expected, "sentence_id does not hash (model_id, text)"
