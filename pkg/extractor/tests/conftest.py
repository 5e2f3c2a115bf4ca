import json

import pytest
import torch
from PIL import Image

VOCAB = [
    "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]",
    "the", "a", "bad", "good", "evil", "great", "man", "woman", "hero",
    "villain", "victim", "save", "blame", "praise", "meme", "putin",
    "fauci", "batman", "covid", "did", "thing", "now", "here", "was",
    "and", "or", "not", "very", "so", "who", "this", "that",
] + list("abcdefghijklmnopqrstuvwxyz")


def _make_tokenizer(path):
    from transformers import BertTokenizer

    vocab_file = path / "vocab.txt"
    vocab_file.write_text("\n".join(VOCAB) + "\n", encoding="utf-8")
    tokenizer = BertTokenizer(str(vocab_file))
    tokenizer.save_pretrained(path)
    return tokenizer


def _bert_config():
    from transformers import BertConfig

    return BertConfig(
        vocab_size=len(VOCAB),
        hidden_size=32,
        num_hidden_layers=2,
        num_attention_heads=2,
        intermediate_size=64,
        max_position_embeddings=128,
    )


@pytest.fixture(scope="session")
def tiny_bert_dir(tmp_path_factory):
    from transformers import BertModel

    path = tmp_path_factory.mktemp("tiny-bert")
    _make_tokenizer(path)
    torch.manual_seed(0)
    BertModel(_bert_config()).save_pretrained(path)
    return path


@pytest.fixture(scope="session")
def tiny_mlm_dir(tmp_path_factory):
    from transformers import BertForMaskedLM

    path = tmp_path_factory.mktemp("tiny-mlm")
    _make_tokenizer(path)
    torch.manual_seed(1)
    BertForMaskedLM(_bert_config()).save_pretrained(path)
    return path


@pytest.fixture(scope="session")
def tiny_vit_dir(tmp_path_factory):
    from transformers import ViTConfig, ViTModel

    path = tmp_path_factory.mktemp("tiny-vit")
    config = ViTConfig(
        hidden_size=32,
        num_hidden_layers=2,
        num_attention_heads=2,
        intermediate_size=64,
        image_size=32,
        patch_size=8,
        num_channels=3,
    )
    torch.manual_seed(2)
    ViTModel(config).save_pretrained(path)
    return path


@pytest.fixture
def sample_dataset(tmp_path):
    """Three memes: two with readable PNGs, one with a missing image."""
    records = [
        {"id": "m1", "image": "m1.png", "text": "the bad man did a thing",
         "hero": [], "villain": ["bad man"], "victim": [], "other": []},
        {"id": "m2", "image": "m2.png", "text": "save fauci now",
         "hero": [], "villain": [], "victim": ["fauci"], "other": ["bad man"]},
        {"id": "m3", "image": "missing.png", "text": "who was this",
         "hero": ["batman"], "villain": [], "victim": [], "other": []},
    ]
    dataset = tmp_path / "memes.jsonl"
    with dataset.open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")
    Image.new("RGB", (48, 40), (200, 30, 30)).save(tmp_path / "m1.png")
    Image.new("RGB", (64, 64), (30, 200, 30)).save(tmp_path / "m2.png")
    return dataset
