"""Model loading and per-sentence logprob record computation.

Records follow the consumer's wire format (see the main package's
docs/formats.md): natural-log token probabilities, first token null,
character offsets from the tokenizer's offset mapping. Scoring is greedy
fp32 forward passes only; models whose tokenizers cannot produce offset
mappings are rejected rather than approximated.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence


class ExportError(Exception):
    pass


def sentence_id(model_id: str, text: str) -> str:
    """Record id per the wire format: sha256 of model id and text."""
    return hashlib.sha256(f"{model_id}\x00{text}".encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class ExportJob:
    manifest_path: str
    model: str  # model name or local path, as loadable by transformers
    out_path: str
    model_id: str | None = None  # recorded id; defaults to `model`
    batch_size: int = 8
    device: str = "cpu"


class ModelScorer:
    """One loaded causal LM plus its fast tokenizer."""

    def __init__(self, model: str, model_id: str | None = None, device: str = "cpu"):
        import torch
        from transformers import AutoModelForCausalLM, AutoTokenizer

        self.model_id = model_id or model
        self.device = device
        try:
            self.tokenizer = AutoTokenizer.from_pretrained(model, use_fast=True)
        except Exception as err:
            raise ExportError(f"cannot load tokenizer for {model!r}: {err}") from err
        if not getattr(self.tokenizer, "is_fast", False):
            raise ExportError(
                f"tokenizer for {model!r} has no offset mappings; only fast "
                "tokenizers are supported"
            )
        if self.tokenizer.pad_token is None:
            self.tokenizer.pad_token = self.tokenizer.eos_token or "<|pad|>"
        try:
            self.model = AutoModelForCausalLM.from_pretrained(model, torch_dtype=torch.float32)
        except Exception as err:
            raise ExportError(f"cannot load model {model!r}: {err}") from err
        self.model.eval().to(device)

    def score_texts(self, texts: Sequence[str], batch_size: int = 8) -> list[dict]:
        records = []
        for start in range(0, len(texts), max(1, batch_size)):
            records.extend(self._score_batch(texts[start : start + max(1, batch_size)]))
        return records

    def _score_batch(self, texts: Sequence[str]) -> list[dict]:
        import torch

        try:
            encoded = self.tokenizer(
                list(texts),
                return_offsets_mapping=True,
                padding=True,
                return_tensors="pt",
                add_special_tokens=False,
            )
        except Exception as err:
            raise ExportError(f"tokenization failed: {err}") from err
        input_ids = encoded["input_ids"].to(self.device)
        attention_mask = encoded["attention_mask"].to(self.device)
        for row, text in enumerate(texts):
            if int(attention_mask[row].sum().item()) == 0:
                raise ExportError(f"tokenization produced no tokens for {text!r}")
        with torch.no_grad():
            logits = self.model(input_ids=input_ids, attention_mask=attention_mask).logits
        logprobs = torch.log_softmax(logits.float(), dim=-1)

        records = []
        for row, text in enumerate(texts):
            length = int(attention_mask[row].sum().item())
            if length == 0:
                raise ExportError(f"tokenization produced no tokens for {text!r}")
            ids = input_ids[row, :length].tolist()
            offsets = [tuple(pair) for pair in encoded["offset_mapping"][row][:length].tolist()]
            for a, b in offsets:
                if a == b:
                    raise ExportError(
                        f"tokenizer emitted an empty-span token for {text!r}; "
                        "cannot produce faithful offsets"
                    )
            row_logprobs: list[float | None] = [None]
            for pos in range(1, length):
                value = float(logprobs[row, pos - 1, ids[pos]].item())
                row_logprobs.append(min(value, 0.0))
            records.append(
                {
                    "sentence_id": sentence_id(self.model_id, text),
                    "model_id": self.model_id,
                    "text": text,
                    "tokens": [text[a:b] for a, b in offsets],
                    "logprobs": row_logprobs,
                    "token_offsets": [[a, b] for a, b in offsets],
                }
            )
        return records


def read_manifest(path: str | Path) -> list[str]:
    """Unique sentence texts from a manifest, preserving first appearance."""
    texts: list[str] = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as err:
                raise ExportError(f"{path}:{lineno}: invalid JSON: {err}") from None
            if "text" not in obj:
                raise ExportError(f"{path}:{lineno}: manifest record lacks 'text'")
            text = str(obj["text"])
            if text not in seen:
                seen.add(text)
                texts.append(text)
    if not texts:
        raise ExportError(f"no sentences in manifest {path}")
    return texts


def write_records(records: Iterable[dict], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def export(job: ExportJob) -> int:
    """Score every manifest sentence into a logprob file; returns the count."""
    texts = read_manifest(job.manifest_path)
    scorer = ModelScorer(job.model, model_id=job.model_id, device=job.device)
    records = scorer.score_texts(texts, batch_size=job.batch_size)
    write_records(records, job.out_path)
    return len(records)
