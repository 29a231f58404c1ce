import json

from cseb_extract.cli import main

from clozeselect import embed_io


def args_for(tmp_path, model_dir, corpus, **extra):
    argv = ["--model", model_dir, "--template", "<S>. it was [MASK].",
            "--corpus", corpus,
            "--vocab-out", str(tmp_path / "vocab.cseb"),
            "--instances-out", str(tmp_path / "instances.cseb"),
            "--texts-out", str(tmp_path / "texts.jsonl"),
            "--manifest-out", str(tmp_path / "manifest.json"),
            "--max-length", "32", "--batch-size", "2"]
    for flag, value in extra.items():
        argv += [f"--{flag.replace('_', '-')}", value]
    return argv


def test_cli_end_to_end(tmp_path, model_dir, corpus, capsys):
    assert main(args_for(tmp_path, model_dir, corpus)) == 0
    out = capsys.readouterr().out
    assert "58 rows" in out and "3 rows" in out
    vocab = embed_io.load_embedding_set(tmp_path / "vocab.cseb")
    inst = embed_io.load_embedding_set(tmp_path / "instances.cseb")
    assert vocab.dim == inst.dim == 16
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["instance_rows"] == 3


def test_cli_rejects_bad_template(tmp_path, model_dir, corpus, capsys):
    argv = args_for(tmp_path, model_dir, corpus, template="missing the slot")
    assert main(argv) == 1
    assert "error:" in capsys.readouterr().err


def test_cli_reports_model_load_failure(tmp_path, model_dir, corpus, capsys):
    argv = args_for(tmp_path, model_dir, corpus, model=str(tmp_path / "nowhere"))
    assert main(argv) == 2
    assert "error:" in capsys.readouterr().err
