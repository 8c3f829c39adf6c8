"""
Model checkpoints as reproducible ZIP archives.

Layout:
    meta.json            format version, byte order, architecture, vocabulary
    params/<name>.npy    one little-endian float64 array per parameter

Member timestamps are fixed, so saving the same model twice gives identical bytes.
"""
import io
import json
import logging
import zipfile
from pathlib import Path
from typing import Dict, Tuple, Union

import numpy as np

from .crf import CrfParams
from .data import Vocab
from .embeddings import EmbeddingTable
from .exceptions import CheckpointError, TaggerError
from .network import LstmParams, TaggerArchitecture, TaggerModel

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
BYTE_ORDER = "little"
ARRAY_DTYPE = "<f8"
META_NAME = "meta.json"
PARAMS_DIR = "params/"
FIXED_TIMESTAMP = (1980, 1, 1, 0, 0, 0)
LSTM_PREFIXES = ("char_fwd", "char_bwd", "word_fwd", "word_bwd")


def _all_arrays(model: TaggerModel) -> Dict[str, np.ndarray]:
    arrays = {
        "word_embeddings": model.word_table.matrix,
        "char_embeddings": model.char_table.matrix,
    }
    arrays.update(model.parameters())
    return arrays


def expected_shapes(arch: TaggerArchitecture, vocab: Vocab) -> Dict[str, Tuple[int, ...]]:
    shapes: Dict[str, Tuple[int, ...]] = {
        "word_embeddings": (len(vocab.words), arch.word_dim),
        "char_embeddings": (len(vocab.chars), arch.char_dim),
    }
    for prefix in LSTM_PREFIXES:
        hidden = arch.char_hidden if prefix.startswith("char") else arch.word_hidden
        inputs = arch.char_dim if prefix.startswith("char") else arch.token_dim
        shapes[f"{prefix}.w_ih"] = (4 * hidden, inputs)
        shapes[f"{prefix}.w_hh"] = (4 * hidden, hidden)
        shapes[f"{prefix}.b"] = (4 * hidden,)
    shapes["proj.w"] = (2 * arch.word_hidden, arch.tag_count)
    shapes["proj.b"] = (arch.tag_count,)
    k = arch.tag_count
    shapes.update({"crf.transitions": (k, k), "crf.start": (k,), "crf.stop": (k,)})
    return shapes


def _write_member(archive: zipfile.ZipFile, name: str, payload: bytes) -> None:
    info = zipfile.ZipInfo(name, date_time=FIXED_TIMESTAMP)
    info.compress_type = zipfile.ZIP_DEFLATED
    info.external_attr = 0o644 << 16
    archive.writestr(info, payload)


def save_checkpoint(model: TaggerModel, path: Union[str, Path]) -> Path:
    """
    Writes the model to a ZIP checkpoint.

    Raw (un-normalized) embedding tables are stored; normalization statistics
    are recomputed on load.

    Returns:
        Path: The written file.
    """
    path = Path(path)
    arrays = _all_arrays(model)
    meta = {
        "format_version": FORMAT_VERSION,
        "byte_order": BYTE_ORDER,
        "dtype": ARRAY_DTYPE,
        "architecture": model.arch.to_dict(),
        "vocab": model.vocab.to_dict(),
        "trainable": {
            "word_embeddings": model.word_table.trainable,
            "char_embeddings": model.char_table.trainable,
        },
        "char_frequency_weighting": model.char_frequency_weighting,
        "parameters": list(arrays),
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    with zipfile.ZipFile(path, "w") as archive:
        _write_member(archive, META_NAME, json.dumps(meta, sort_keys=True, indent=1).encode("utf-8"))
        for name, array in arrays.items():
            buffer = io.BytesIO()
            np.save(buffer, np.ascontiguousarray(array, dtype=ARRAY_DTYPE), allow_pickle=False)
            _write_member(archive, f"{PARAMS_DIR}{name}.npy", buffer.getvalue())
    logger.info(f"Saved checkpoint with {len(arrays)} arrays to {path}")
    return path


def load_checkpoint(path: Union[str, Path]) -> TaggerModel:
    """
    Reads a checkpoint written by save_checkpoint.

    Raises:
        CheckpointError: If the file is unreadable, from another format version
                         or byte order, or its arrays do not fit the stored
                         architecture and vocabulary.
    """
    path = Path(path)
    try:
        with zipfile.ZipFile(path) as archive:
            meta = json.loads(archive.read(META_NAME).decode("utf-8"))
            if meta.get("format_version") != FORMAT_VERSION:
                raise CheckpointError(f"{path}: unsupported format version {meta.get('format_version')}")
            if meta.get("byte_order") != BYTE_ORDER:
                raise CheckpointError(f"{path}: unsupported byte order {meta.get('byte_order')}")
            arch = TaggerArchitecture(**meta["architecture"])
            vocab = Vocab.from_dict(meta["vocab"])
            shapes = expected_shapes(arch, vocab)
            arrays = {}
            for name, shape in shapes.items():
                array = np.load(io.BytesIO(archive.read(f"{PARAMS_DIR}{name}.npy")), allow_pickle=False)
                if array.dtype != np.dtype(ARRAY_DTYPE) or array.shape != shape:
                    raise CheckpointError(f"{path}: {name} is {array.dtype}{array.shape}, expected {ARRAY_DTYPE}{shape}")
                arrays[name] = array.astype(np.float64)
    except (OSError, KeyError, ValueError, TypeError, zipfile.BadZipFile) as e:
        raise CheckpointError(f"{path}: unreadable checkpoint: {e}") from e
    except TaggerError as e:
        if isinstance(e, CheckpointError):
            raise
        raise CheckpointError(f"{path}: {e}") from e

    if arch.tag_count != len(vocab.tags):
        raise CheckpointError(f"{path}: architecture has {arch.tag_count} tags, vocabulary {len(vocab.tags)}")
    by_frequency = bool(meta.get("char_frequency_weighting", False))
    trainable = meta.get("trainable", {})
    model = TaggerModel(
        arch=arch,
        vocab=vocab,
        word_table=EmbeddingTable(arrays["word_embeddings"], vocab.word_weights(), trainable.get("word_embeddings", True)),
        char_table=EmbeddingTable(
            arrays["char_embeddings"], vocab.char_weights(by_frequency), trainable.get("char_embeddings", True)
        ),
        char_fwd=LstmParams(*(arrays[f"char_fwd.{p}"] for p in ("w_ih", "w_hh", "b"))),
        char_bwd=LstmParams(*(arrays[f"char_bwd.{p}"] for p in ("w_ih", "w_hh", "b"))),
        word_fwd=LstmParams(*(arrays[f"word_fwd.{p}"] for p in ("w_ih", "w_hh", "b"))),
        word_bwd=LstmParams(*(arrays[f"word_bwd.{p}"] for p in ("w_ih", "w_hh", "b"))),
        proj_w=arrays["proj.w"],
        proj_b=arrays["proj.b"],
        crf=CrfParams(arrays["crf.transitions"], arrays["crf.start"], arrays["crf.stop"]),
        char_frequency_weighting=by_frequency,
    )
    model.refresh_stats()
    logger.info(f"Loaded checkpoint {path}: {arch.tag_count} tags, {len(vocab.words)} words")
    return model
