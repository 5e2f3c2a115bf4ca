"""Embedding tables from pretrained encoders, plus a substitution provider.

The package turns a meme dataset (JSONL) into EMB1 embedding files for
meme texts, entity strings, and meme images, and can run as a long-lived
line-JSON process that performs masked-language-model word substitution.
"""

from rfextract.config import ExtractorConfig, ExtractorError
from rfextract.emb1 import write_emb1

__version__ = "0.1.0"

__all__ = ["ExtractorConfig", "ExtractorError", "write_emb1", "__version__"]
