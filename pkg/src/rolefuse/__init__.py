"""Entity role labeling for memes.

Two task formulations over the same annotated corpus:

* sequence labeling -- memes converted to BIO-tagged token streams and
  tagged with a linear-chain CRF (:mod:`rolefuse.conll`, :mod:`rolefuse.crf`);
* classification -- one example per (meme, entity) pair, classified with a
  block-term bilinear fusion network over precomputed entity/text/image
  embeddings (:mod:`rolefuse.fusion`), optionally with attention and
  class-balanced text augmentation (:mod:`rolefuse.augment`).

Embeddings cross the process boundary as EMB1 binary tables
(:mod:`rolefuse.embeddings`); metrics live in :mod:`rolefuse.evaluation`.
"""

__version__ = "0.1.0"

from rolefuse.data_model import (  # noqa: F401
    Role,
    MemeRecord,
    EntityInstance,
    RoleCounts,
    load_dataset,
    save_dataset,
    flatten_to_instances,
    class_distribution,
)
