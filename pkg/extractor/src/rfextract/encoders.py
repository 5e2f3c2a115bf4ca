"""Frozen encoder loading and image preprocessing.

All encoders run in eval mode with gradients disabled; a fixed torch
seed is set before loading so any randomly initialized heads are
reproducible. Images are resized on the shorter side, center cropped to
the encoder's native resolution, and normalized to [-1, 1].
"""

from __future__ import annotations

import torch
from PIL import Image

from rfextract.config import ExtractorError


def _freeze(model: torch.nn.Module) -> torch.nn.Module:
    model.eval()
    for p in model.parameters():
        p.requires_grad_(False)
    return model


def load_text_encoder(name: str, device: str = "cpu", seed: int = 0):
    from transformers import AutoModel, AutoTokenizer

    torch.manual_seed(seed)
    try:
        tokenizer = AutoTokenizer.from_pretrained(name)
        model = AutoModel.from_pretrained(name)
    except (OSError, ValueError) as exc:
        raise ExtractorError(f"cannot load text encoder {name!r}: {exc}") from exc
    return tokenizer, _freeze(model).to(device)


def load_masked_lm(name: str, device: str = "cpu", seed: int = 0):
    from transformers import AutoModelForMaskedLM, AutoTokenizer

    torch.manual_seed(seed)
    try:
        tokenizer = AutoTokenizer.from_pretrained(name)
        model = AutoModelForMaskedLM.from_pretrained(name)
    except (OSError, ValueError) as exc:
        raise ExtractorError(f"cannot load masked LM {name!r}: {exc}") from exc
    return tokenizer, _freeze(model).to(device)


def load_image_encoder(name: str, kind: str, device: str = "cpu", seed: int = 0):
    """Returns (model, native image size, output dim).

    ``kind`` "vit" loads a transformers vision model whose pooled output
    is the embedding. "efficientnet" builds a torchvision EfficientNet-b1
    and uses the penultimate layer (pooled convolutional features);
    ``name`` is then "pretrained", "random", or a state-dict path.
    """
    torch.manual_seed(seed)
    if kind == "vit":
        from transformers import AutoModel

        try:
            model = AutoModel.from_pretrained(name)
        except (OSError, ValueError) as exc:
            raise ExtractorError(f"cannot load image encoder {name!r}: {exc}") from exc
        return _freeze(model).to(device), model.config.image_size, model.config.hidden_size
    if kind == "efficientnet":
        from torchvision.models import EfficientNet_B1_Weights, efficientnet_b1

        if name == "pretrained":
            net = efficientnet_b1(weights=EfficientNet_B1_Weights.IMAGENET1K_V1)
        elif name == "random":
            net = efficientnet_b1(weights=None)
        else:
            net = efficientnet_b1(weights=None)
            try:
                net.load_state_dict(torch.load(name, map_location="cpu"))
            except (OSError, RuntimeError) as exc:
                raise ExtractorError(f"cannot load weights {name!r}: {exc}") from exc
        model = torch.nn.Sequential(net.features, net.avgpool, torch.nn.Flatten(1))
        return _freeze(model).to(device), 240, 1280
    raise ExtractorError(f"unknown image encoder kind {kind!r}")


def preprocess_image(path, size: int) -> torch.Tensor:
    """(3, size, size) tensor in [-1, 1]; raises OSError when unreadable."""
    with Image.open(path) as img:
        img = img.convert("RGB")
        w, h = img.size
        scale = size / min(w, h)
        img = img.resize((max(size, round(w * scale)), max(size, round(h * scale))),
                         Image.BILINEAR)
        w, h = img.size
        left = (w - size) // 2
        top = (h - size) // 2
        img = img.crop((left, top, left + size, top + size))
        data = torch.frombuffer(bytearray(img.tobytes()), dtype=torch.uint8)
    pixels = data.reshape(size, size, 3).permute(2, 0, 1).float() / 255.0
    return (pixels - 0.5) / 0.5
