import pytest
import torch
from transformers import BertConfig, BertForMaskedLM, BertTokenizerFast
from transformers.utils import logging as hf_logging

hf_logging.set_verbosity_error()
hf_logging.disable_progress_bar()

SPECIALS = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
LETTERS = list("abcdefghijklmnopqrstuvwxyz")
VOCAB = SPECIALS + LETTERS + ["##" + c for c in LETTERS] + ["."]
HIDDEN = 16


def _save_model(root, seed, tied):
    (root / "vocab.txt").write_text("\n".join(VOCAB), encoding="utf-8")
    tokenizer = BertTokenizerFast(str(root / "vocab.txt"), do_lower_case=True)
    torch.manual_seed(seed)
    config = BertConfig(vocab_size=len(VOCAB), hidden_size=HIDDEN,
                        num_hidden_layers=1, num_attention_heads=2,
                        intermediate_size=32, max_position_embeddings=64,
                        tie_word_embeddings=tied)
    model = BertForMaskedLM(config)
    model.save_pretrained(str(root))
    tokenizer.save_pretrained(str(root))
    return str(root)


@pytest.fixture(scope="session")
def model_dir(tmp_path_factory):
    return _save_model(tmp_path_factory.mktemp("tied-model"), seed=0, tied=True)


@pytest.fixture(scope="session")
def untied_model_dir(tmp_path_factory):
    return _save_model(tmp_path_factory.mktemp("untied-model"), seed=1, tied=False)


@pytest.fixture
def corpus(tmp_path):
    path = tmp_path / "corpus.txt"
    path.write_text("cat\ndog barks\nbird sings a song\n", encoding="utf-8")
    return str(path)


@pytest.fixture
def make_config(tmp_path, model_dir, corpus):
    from cseb_extract import ExtractorConfig

    def build(out="out", **overrides):
        outdir = tmp_path / out
        outdir.mkdir(exist_ok=True)
        kwargs = dict(model=model_dir,
                      template="<S>. it was [MASK].",
                      corpus=corpus,
                      vocab_out=str(outdir / "vocab.cseb"),
                      instances_out=str(outdir / "instances.cseb"),
                      texts_out=str(outdir / "texts.jsonl"),
                      manifest_out=str(outdir / "manifest.json"),
                      max_length=32, batch_size=2)
        kwargs.update(overrides)
        return ExtractorConfig(**kwargs)

    return build
