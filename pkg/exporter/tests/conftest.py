import os
import sys

import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

os.environ.setdefault("HF_HUB_OFFLINE", "1")
os.environ.setdefault("TRANSFORMERS_OFFLINE", "1")

TRAINING_TEXT = [
    "The chef mentioned that the recipe was crafted by him.",
    "The chef mentioned that the recipe was crafted by her.",
    "The nurse confirmed that the bandage was wrapped by him.",
    "The nurse confirmed that the bandage was wrapped by her.",
    "Someone mentioned that the recipe was crafted by them.",
    "The developer insisted that the code was written by him.",
    "The teacher noted that the lesson was planned by her.",
    "The person argued with the designer and slapped him in the face.",
    "The technician told the customer that she could pay with cash.",
]


@pytest.fixture(scope="session")
def tiny_model_dir(tmp_path_factory):
    """A small randomly initialized GPT-2 with a locally trained BPE tokenizer.

    Built entirely offline; exercises the real export path (fast tokenizer
    offsets, causal forward pass, log-softmax gathering).
    """
    import torch
    from tokenizers.implementations import ByteLevelBPETokenizer
    from transformers import GPT2Config, GPT2LMHeadModel, GPT2TokenizerFast

    tok = ByteLevelBPETokenizer()
    tok.train_from_iterator(
        TRAINING_TEXT, vocab_size=400, min_frequency=1, special_tokens=["<|endoftext|>"]
    )
    fast = GPT2TokenizerFast(tokenizer_object=tok._tokenizer)
    fast.pad_token = "<|endoftext|>"

    path = tmp_path_factory.mktemp("tiny-lm")
    fast.save_pretrained(path)
    config = GPT2Config(
        vocab_size=len(fast),
        n_positions=128,
        n_embd=32,
        n_layer=2,
        n_head=2,
        bos_token_id=fast.convert_tokens_to_ids("<|endoftext|>"),
        eos_token_id=fast.convert_tokens_to_ids("<|endoftext|>"),
    )
    torch.manual_seed(20240811)
    model = GPT2LMHeadModel(config).eval()
    model.save_pretrained(path)
    return str(path)


@pytest.fixture(scope="session")
def scorer(tiny_model_dir):
    from clozebias_export.scoring import ModelScorer

    return ModelScorer(tiny_model_dir, model_id="tiny-test")
