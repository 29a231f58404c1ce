"""Pull embeddings out of a masked language model into .cseb files.

Two extractions share one loaded model:

* the vocabulary matrix: the model's output-projection rows (the weights
  that produce pre-softmax token scores), one row per tokenizer entry;
* per-instance mask embeddings: each corpus line is wrapped in a cloze
  template and the final encoder layer's hidden state at the mask position
  becomes the instance vector.

Everything runs on CPU in eval mode with no grad, so re-running a config
against the same model files produces byte-identical output.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

log = logging.getLogger("cseb_extract")

MASK_SLOT = "[MASK]"
TEXT_SLOT = "<S>"


class ModelLoadFailure(Exception):
    """The model or tokenizer could not be loaded."""


class UntiedHeadUnsupported(UserWarning):
    """Output projection is not tied to the input embeddings.

    Extraction continues with the output-projection rows, which are the
    pre-softmax weights either way.
    """


class MaskTruncated(UserWarning):
    """The template alone exceeds max_length, so the mask cannot fit."""


@dataclass(frozen=True)
class ExtractorConfig:
    model: str
    template: str
    corpus: str
    vocab_out: str
    instances_out: str
    texts_out: str
    manifest_out: str
    max_length: int = 128
    batch_size: int = 16
    revision: str | None = None

    def __post_init__(self):
        if self.template.count(TEXT_SLOT) != 1:
            raise ValueError(f"template needs exactly one {TEXT_SLOT} slot")
        if self.template.count(MASK_SLOT) != 1:
            raise ValueError(f"template needs exactly one {MASK_SLOT}")
        if self.max_length < 4:
            raise ValueError("max_length must be at least 4")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")


@dataclass
class ModelBundle:
    tokenizer: object
    model: object


def load_bundle(config: ExtractorConfig) -> ModelBundle:
    from transformers import AutoModelForMaskedLM, AutoTokenizer

    try:
        tokenizer = AutoTokenizer.from_pretrained(config.model,
                                                  revision=config.revision)
        model = AutoModelForMaskedLM.from_pretrained(config.model,
                                                     revision=config.revision)
    except Exception as exc:
        raise ModelLoadFailure(f"cannot load {config.model!r}: {exc}") from exc
    model.eval()
    return ModelBundle(tokenizer=tokenizer, model=model)


def extract_vocab(config: ExtractorConfig, bundle: ModelBundle | None = None):
    """Write the vocabulary .cseb; returns (ids, matrix, untied_head)."""
    from .cseb import escape_token, write_embedding_rows

    bundle = bundle or load_bundle(config)
    out_emb = bundle.model.get_output_embeddings()
    if out_emb is None:
        raise ModelLoadFailure(f"{config.model!r} has no output embeddings")
    in_emb = bundle.model.get_input_embeddings()
    untied = in_emb is None or out_emb.weight.data_ptr() != in_emb.weight.data_ptr()
    if untied:
        warnings.warn(UntiedHeadUnsupported(
            f"{config.model!r}: output head is not tied to input embeddings; "
            "using the output-projection rows"))

    with torch.inference_mode():
        matrix = out_emb.weight.detach().cpu().float().numpy().copy()
    tokens = bundle.tokenizer.convert_ids_to_tokens(list(range(matrix.shape[0])))
    ids = [escape_token(t) if t is not None else f"<extra_row_{i}>"
           for i, t in enumerate(tokens)]
    write_embedding_rows(config.vocab_out, "vocab", ids, matrix)
    return ids, matrix, untied


def _special_frame(tokenizer):
    """Token ids a tokenizer wraps around a single sequence, via a probe."""
    probe = tokenizer("a", add_special_tokens=False)["input_ids"]
    framed = tokenizer("a")["input_ids"]
    if not probe:
        return [], []
    for i in range(len(framed) - len(probe) + 1):
        if framed[i:i + len(probe)] == probe:
            return framed[:i], framed[i + len(probe):]
    raise ModelLoadFailure("cannot locate the special-token frame")


def _template_parts(config: ExtractorConfig, tokenizer):
    """Tokenized prefix/suffix around the text slot plus the mask location."""
    prefix, suffix = config.template.split(TEXT_SLOT)
    prefix = prefix.replace(MASK_SLOT, tokenizer.mask_token)
    suffix = suffix.replace(MASK_SLOT, tokenizer.mask_token)
    pre = tokenizer(prefix, add_special_tokens=False)["input_ids"] if prefix else []
    suf = tokenizer(suffix, add_special_tokens=False)["input_ids"] if suffix else []
    mask_id = tokenizer.mask_token_id
    hits = pre.count(mask_id) + suf.count(mask_id)
    if hits != 1:
        raise ValueError(
            f"template keeps {hits} mask tokens after tokenization, need 1")
    return pre, suf, mask_id


@dataclass
class InstanceStats:
    rows: int
    truncated: int
    skipped: list[int]


def extract_instances(config: ExtractorConfig,
                      bundle: ModelBundle | None = None) -> InstanceStats:
    """Write the instance .cseb and text sidecar; returns extraction stats."""
    from .cseb import write_embedding_rows, write_texts

    bundle = bundle or load_bundle(config)
    tokenizer, model = bundle.tokenizer, bundle.model
    frame_pre, frame_suf = _special_frame(tokenizer)
    pre, suf, mask_id = _template_parts(config, tokenizer)

    lines = Path(config.corpus).read_text(encoding="utf-8").splitlines()
    for i, line in enumerate(lines):
        if not line.strip():
            raise ValueError(f"corpus line {i} is empty")

    overhead = len(frame_pre) + len(pre) + len(suf) + len(frame_suf)
    budget = config.max_length - overhead
    kept: list[tuple[int, list[int], int]] = []  # (line index, input ids, mask pos)
    truncated = 0
    skipped: list[int] = []
    for i, line in enumerate(lines):
        if budget < 0:
            warnings.warn(MaskTruncated(
                f"line {i}: template overhead {overhead} exceeds "
                f"max_length {config.max_length}; instance skipped"))
            skipped.append(i)
            continue
        inst = tokenizer(line, add_special_tokens=False)["input_ids"]
        if len(inst) > budget:
            truncated += 1
            inst = inst[:budget]
        ids = frame_pre + pre + inst + suf + frame_suf
        if mask_id in pre:
            mask_pos = len(frame_pre) + pre.index(mask_id)
        else:
            mask_pos = len(frame_pre) + len(pre) + len(inst) + suf.index(mask_id)
        kept.append((i, ids, mask_pos))

    hidden = model.config.hidden_size
    rows = np.zeros((len(kept), hidden), dtype=np.float32)
    pad_id = tokenizer.pad_token_id or 0
    with torch.inference_mode():
        for start in range(0, len(kept), config.batch_size):
            chunk = kept[start:start + config.batch_size]
            width = max(len(ids) for _, ids, _ in chunk)
            input_ids = torch.full((len(chunk), width), pad_id, dtype=torch.long)
            attention = torch.zeros((len(chunk), width), dtype=torch.long)
            for r, (_, ids, _) in enumerate(chunk):
                input_ids[r, :len(ids)] = torch.tensor(ids, dtype=torch.long)
                attention[r, :len(ids)] = 1
            out = model(input_ids=input_ids, attention_mask=attention,
                        output_hidden_states=True)
            final = out.hidden_states[-1]
            for r, (_, _, mask_pos) in enumerate(chunk):
                rows[start + r] = final[r, mask_pos].cpu().float().numpy()

    write_embedding_rows(config.instances_out, "instance",
                         [str(i) for i, _, _ in kept], rows)
    write_texts(config.texts_out, [(str(i), lines[i]) for i, _, _ in kept])
    if truncated:
        log.info("truncated %d of %d instances to fit max_length %d",
                 truncated, len(lines), config.max_length)
    return InstanceStats(rows=len(kept), truncated=truncated, skipped=skipped)


def run(config: ExtractorConfig) -> dict:
    """Extract vocabulary and instances, then write the manifest."""
    bundle = load_bundle(config)
    vocab_ids, vocab_matrix, untied = extract_vocab(config, bundle)
    stats = extract_instances(config, bundle)
    manifest = {
        "model": config.model,
        "revision": config.revision,
        "template": config.template,
        "max_length": config.max_length,
        "batch_size": config.batch_size,
        "vocab_rows": len(vocab_ids),
        "dim": int(vocab_matrix.shape[1]),
        "instance_rows": stats.rows,
        "truncated": stats.truncated,
        "skipped": stats.skipped,
        "untied_head": untied,
    }
    Path(config.manifest_out).write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest
