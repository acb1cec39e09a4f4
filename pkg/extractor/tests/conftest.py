import os

import pytest
import torch
from transformers import BertConfig, BertModel, BertTokenizerFast

WORDS = ("alder aspen beech birch cedar elm fir hazel holly juniper oak pine "
         "willow the sat on mat and").split()
PIECES = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"] + WORDS + [
    "un", "##fath", "##om", "##able", ".", ",",
]


def build_checkpoint(directory, hidden_size, num_layers, num_heads,
                     intermediate, seed=0):
    os.makedirs(directory, exist_ok=True)
    vocab_path = os.path.join(directory, "vocab.txt")
    with open(vocab_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(PIECES) + "\n")
    tokenizer = BertTokenizerFast(vocab_path, do_lower_case=True)
    torch.manual_seed(seed)
    config = BertConfig(
        vocab_size=len(PIECES),
        hidden_size=hidden_size,
        num_hidden_layers=num_layers,
        num_attention_heads=num_heads,
        intermediate_size=intermediate,
        max_position_embeddings=64,
    )
    model = BertModel(config)
    model.eval()
    tokenizer.save_pretrained(directory)
    model.save_pretrained(directory)
    return str(directory)


@pytest.fixture(scope="session")
def tiny_checkpoint(tmp_path_factory):
    """2 layers x 32 dims: fast enough for every behavioural test."""
    return build_checkpoint(
        tmp_path_factory.mktemp("tiny_ckpt"), hidden_size=32, num_layers=2,
        num_heads=2, intermediate=64,
    )


@pytest.fixture(scope="session")
def base_checkpoint(tmp_path_factory):
    """12 layers x 768 dims, randomly initialized: the acceptance shape."""
    return build_checkpoint(
        tmp_path_factory.mktemp("base_ckpt"), hidden_size=768, num_layers=12,
        num_heads=12, intermediate=1024,
    )


@pytest.fixture()
def vocab_file(tmp_path):
    def write(words, name="vocab_words.txt"):
        path = tmp_path / name
        path.write_text("\n".join(words) + "\n")
        return str(path)

    return write


@pytest.fixture()
def corpus_file(tmp_path):
    def write(sentences, name="corpus.txt"):
        path = tmp_path / name
        path.write_text("\n".join(sentences) + "\n")
        return str(path)

    return write
