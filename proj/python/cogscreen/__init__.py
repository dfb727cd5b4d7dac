"""Python bindings for the cogscreen C++ core."""

import os
from pathlib import Path

_data = Path(__file__).with_name("data")
if "COGSCREEN_DATA_DIR" not in os.environ and (_data / "lexicon_open.json").exists():
    os.environ["COGSCREEN_DATA_DIR"] = str(_data)

from ._cogscreen import (  # noqa: E402
    CogscreenError,
    bertscore,
    bleu,
    build_classification_prompt,
    build_finetune_prompt,
    confusion_f1,
    cue_hits,
    curve,
    extract_features,
    feature_names,
    fourgram_jaccard,
    hashed_embedding,
    load_manifest as _load_manifest,
    parse_chat,
    parse_label,
    roc_auc,
    run_cli,
    silhouette,
    tsne,
)


def load_manifest(path):
    """Transcripts of a CSV manifest as dicts; accepts str or os.PathLike."""
    return _load_manifest(os.fspath(path))


__all__ = [
    "CogscreenError",
    "bertscore",
    "bleu",
    "build_classification_prompt",
    "build_finetune_prompt",
    "confusion_f1",
    "cue_hits",
    "curve",
    "extract_features",
    "feature_names",
    "fourgram_jaccard",
    "hashed_embedding",
    "load_manifest",
    "parse_chat",
    "parse_label",
    "roc_auc",
    "run_cli",
    "silhouette",
    "tsne",
]
