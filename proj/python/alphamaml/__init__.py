"""Meta-learning toolkit: MAML and Alpha MAML with online learning-rate
adaptation, episodic task generators and an experiment harness."""

from ._core import (  # noqa: F401
    __version__,
    default_config,
    evaluate,
    grid,
    ingest,
    sample_episode,
    train,
    write_glyph_dataset,
)

__all__ = [
    "__version__",
    "default_config",
    "evaluate",
    "grid",
    "ingest",
    "sample_episode",
    "train",
    "write_glyph_dataset",
]
