"""Command-line interface.

Subcommands cover the whole pipeline: demo-data, train-tokenizer, train,
generate, extract-seeds, generate-corpus, deid, ptune, eval-re, eval-qa,
and the review service (serve / ingest / report).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np


def _cmd_demo_data(args) -> int:
    from . import datagen, text

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    corpus = datagen.make_clinical_corpus(n_docs=args.docs, seed=args.seed)
    text.write_corpus(corpus, out / "notes.jsonl")
    phi_docs, injections = datagen.make_phi_corpus(n_docs=max(args.docs // 20, 10), seed=args.seed + 1)
    text.write_corpus(phi_docs, out / "notes_with_phi.jsonl")
    (out / "phi_injections.json").write_text(
        json.dumps([inj.__dict__ for inj in injections], indent=1), encoding="utf-8"
    )
    print(f"wrote {len(corpus)} notes and {len(phi_docs)} identifier-injected notes to {out}")
    return 0


def _cmd_train_tokenizer(args) -> int:
    from . import bpe, text

    docs = list(text.read_corpus(args.corpus))
    vocab = bpe.train_tokenizer((d.full_text() for d in docs), args.vocab_size)
    bpe.save_vocab(vocab, args.out)
    print(f"trained vocabulary of {vocab.vocab_size} tokens -> {args.out}")
    return 0


def _load_corpus_ids(corpus_path: str, vocab) -> np.ndarray:
    from . import bpe, text

    ids: list[int] = []
    for doc in text.read_corpus(corpus_path):
        ids.extend(bpe.encode(vocab, doc.full_text() + "\n"))
    return np.asarray(ids, dtype=np.int64)


def _cmd_train(args) -> int:
    from . import bpe
    from .checkpoint import init_model, load_checkpoint, save_checkpoint
    from .model import ModelConfig
    from .optim import LrSchedule
    from .training import train

    vocab = bpe.load_vocab(args.vocab)
    if args.init_from:
        ckpt = load_checkpoint(args.init_from)
    else:
        cfg = json.loads(Path(args.config).read_text()) if args.config else {}
        config = ModelConfig(
            n_layers=cfg.get("n_layers", 2),
            hidden=cfg.get("hidden", 128),
            n_heads=cfg.get("n_heads", 4),
            vocab_size=vocab.vocab_size,
            context_len=cfg.get("context_len", 256),
            dropout=cfg.get("dropout", 0.1),
            init_seed=args.seed,
        )
        ckpt = init_model(config)
    corpus = _load_corpus_ids(args.corpus, vocab)
    schedule = LrSchedule(
        peak_lr=args.lr, warmup_steps=min(50, args.steps // 10), total_steps=max(args.steps, 1)
    )
    result = train(
        ckpt,
        corpus,
        steps=args.steps,
        batch_size=args.batch,
        schedule=schedule,
        seed=args.seed,
        seq_len=args.seq_len,
    )
    save_checkpoint(result.checkpoint, args.out)
    for entry in result.trace:
        tl = "-" if entry["train_loss"] is None else f"{entry['train_loss']:.4f}"
        print(f"step {entry['step']:>6d}  lr {entry['lr']:.2e}  train {tl}  val {entry['val_loss']:.4f}")
    print(f"saved checkpoint -> {args.out}")
    return 0


def _cmd_generate(args) -> int:
    from . import bpe
    from .checkpoint import load_checkpoint
    from .sampling import SamplerConfig, generate
    from .synthgen import word_count

    ckpt = load_checkpoint(args.ckpt)
    vocab = bpe.load_vocab(args.vocab)
    prompt_text = Path(args.prompt_file).read_text(encoding="utf-8") if args.prompt_file else args.prompt
    if not prompt_text:
        print("error: provide --prompt or --prompt-file", file=sys.stderr)
        return 2
    prompt_ids = bpe.encode(vocab, prompt_text)
    for variant in range(args.n_variants):
        cfg = SamplerConfig(
            top_p=args.top_p,
            temperature=args.temperature,
            max_new_tokens=args.max_tokens,
            rng_seed=args.seed + variant,
        )
        result = generate(ckpt, prompt_ids, cfg)
        text_out = bpe.decode(vocab, result.full_ids)
        record = {
            "record_id": f"cli-{variant:04d}",
            "seed_id": "cli-prompt",
            "rng_seed": cfg.rng_seed,
            "top_p": cfg.top_p,
            "temperature": cfg.temperature,
            "max_new_tokens": cfg.max_new_tokens,
            "output_text": text_out,
            "output_token_count": len(result.new_ids),
            "word_count": word_count(text_out),
        }
        print(json.dumps(record, ensure_ascii=False, sort_keys=True))
    return 0


def _cmd_extract_seeds(args) -> int:
    from . import bpe, text
    from .synthgen import extract_seeds

    vocab = bpe.load_vocab(args.vocab)
    docs = list(text.read_corpus(args.corpus))
    extraction = extract_seeds(docs, vocab)
    with open(args.out, "w", encoding="utf-8") as f:
        for seed in extraction.seeds:
            f.write(
                json.dumps(
                    {
                        "seed_id": seed.seed_id,
                        "source_doc_id": seed.source_doc_id,
                        "section_name": seed.section_name,
                        "token_ids": list(seed.token_ids),
                        "text": seed.text,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )
    print(
        f"{len(extraction.seeds)} seeds ({extraction.skipped_short} short sections skipped, "
        f"{extraction.collapsed_duplicates} duplicates collapsed) -> {args.out}"
    )
    return 0


def _cmd_generate_corpus(args) -> int:
    from . import bpe
    from .checkpoint import load_checkpoint
    from .sampling import SamplerConfig
    from .synthgen import SeedPrompt, generate_corpus, write_manifest

    ckpt = load_checkpoint(args.ckpt)
    vocab = bpe.load_vocab(args.vocab)
    seeds = []
    with open(args.seeds, encoding="utf-8") as f:
        for line in f:
            if line.strip():
                rec = json.loads(line)
                seeds.append(
                    SeedPrompt(
                        seed_id=rec["seed_id"],
                        source_doc_id=rec["source_doc_id"],
                        section_name=rec["section_name"],
                        token_ids=tuple(rec["token_ids"]),
                        text=rec["text"],
                    )
                )
    cfg = SamplerConfig(top_p=args.top_p, temperature=args.temperature, max_new_tokens=args.max_tokens)
    records, manifest = generate_corpus(
        ckpt,
        seeds,
        vocab,
        target_words=args.target_words,
        variants_per_seed=args.variants,
        cfg=cfg,
        base_seed=args.seed,
        out_path=args.out,
        resume=args.resume,
    )
    write_manifest(manifest, str(args.out) + ".manifest.json")
    status = "complete" if manifest["complete"] else f"SHORTFALL of {manifest['shortfall_words']} words"
    print(f"{manifest['records']} records, {manifest['total_words']} words ({status}) -> {args.out}")
    return 0 if manifest["complete"] else 1


def _cmd_deid(args) -> int:
    from . import text
    from .deid import category_counts, deidentify, load_ruleset

    ruleset = load_ruleset(args.rules)
    totals: dict[str, int] = {}
    docs_out = []
    for doc in text.read_corpus(args.infile):
        sections = []
        for name, body in doc.sections:
            clean, spans = deidentify(text.normalize(body), ruleset)
            sections.append((name, clean))
            for cat, count in category_counts(spans).items():
                totals[cat] = totals.get(cat, 0) + count
        docs_out.append(text.NoteDocument(doc_id=doc.doc_id, sections=sections, source=doc.source))
    text.write_corpus(docs_out, args.out)
    if args.report:
        Path(args.report).write_text(json.dumps(totals, indent=1, sort_keys=True), encoding="utf-8")
    print(f"de-identified {len(docs_out)} documents -> {args.out}")
    for cat, count in sorted(totals.items()):
        if count:
            print(f"  {cat}: {count}")
    return 0


def _cmd_ptune(args) -> int:
    from . import bpe
    from .checkpoint import load_checkpoint
    from .ptuning import PtuneHyperparams, SoftPromptConfig, ptune_train, save_prompt

    ckpt = load_checkpoint(args.ckpt)
    vocab = bpe.load_vocab(args.vocab)
    dataset = []
    with open(args.data, encoding="utf-8") as f:
        for line in f:
            if line.strip():
                rec = json.loads(line)
                x = np.asarray(bpe.encode(vocab, rec["input"]), dtype=np.int64)
                y = np.asarray(bpe.encode(vocab, rec["target"]), dtype=np.int64)
                dataset.append((x, y))
    spc = SoftPromptConfig(
        n_virtual=args.n_virtual,
        encoder_kind=args.encoder,
        encoder_hidden=args.encoder_hidden,
        task_name=args.task,
    )
    hp = PtuneHyperparams(steps=args.steps, batch_size=args.batch, seed=args.seed)
    weights, trace = ptune_train(ckpt, dataset, spc, hp)
    save_prompt(weights, args.out)
    for entry in trace:
        print(f"step {entry['step']:>6d}  lr {entry['lr']:.2e}  loss {entry['loss']:.4f}")
    print(f"saved prompt weights -> {args.out}")
    return 0


def _cmd_eval_re(args) -> int:
    from .tasks import Triplet, parse_triplets, score_re_corpus

    pairs = []
    with open(args.data, encoding="utf-8") as f:
        for line in f:
            if line.strip():
                rec = json.loads(line)
                gold = [Triplet(**t) for t in rec["gold"]]
                pred = parse_triplets(rec["generated"]).triplets
                pairs.append((gold, pred))
    score = score_re_corpus(pairs)
    print(json.dumps(score.__dict__, indent=1))
    return 0


def _cmd_eval_qa(args) -> int:
    from .tasks import QaExample, score_qa

    pairs = []
    with open(args.data, encoding="utf-8") as f:
        for line in f:
            if line.strip():
                rec = json.loads(line)
                ex = QaExample(
                    question=rec["question"],
                    choices=tuple(rec.get("choices", ())),
                    context=rec.get("context"),
                    gold=rec["gold"],
                    kind=rec.get("kind", "multiple_choice"),
                )
                pairs.append((ex, rec["generated"]))
    score = score_qa(pairs)
    print(json.dumps(score.__dict__, indent=1))
    return 0


def _cmd_review(args) -> int:
    from .review.core import SessionStore

    store = SessionStore(args.data_dir)
    if args.review_cmd == "serve":
        import uvicorn

        from .review.server import create_app

        uvicorn.run(create_app(store), host=args.host, port=args.port, log_level="info")
        return 0
    if args.review_cmd == "ingest":
        ai = [p for p in Path(args.ai).read_text(encoding="utf-8").split("\n\n") if p.strip()]
        human = [p for p in Path(args.human).read_text(encoding="utf-8").split("\n\n") if p.strip()]
        session = store.create_session(ai, human, args.raters.split(","), args.seed)
        print(f"created {session.session_id} with {len(session.items)} items")
        return 0
    if args.review_cmd == "report":
        from .stats import render_report

        print(render_report(store.report(args.session)))
        return 0
    if args.review_cmd == "export":
        sys.stdout.write(store.export_ratings(args.session))
        return 0
    print("unknown review subcommand", file=sys.stderr)
    return 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cliniclm")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("demo-data", help="write a synthetic demo corpus")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--docs", type=int, default=600)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_demo_data)

    p = sub.add_parser("train-tokenizer", help="train the subword vocabulary")
    p.add_argument("--corpus", required=True)
    p.add_argument("--vocab-size", type=int, default=8192)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train_tokenizer)

    p = sub.add_parser("train", help="train a language model")
    p.add_argument("--config", help="JSON file with model shape overrides")
    p.add_argument("--init-from", help="existing checkpoint to continue from")
    p.add_argument("--corpus", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--batch", type=int, default=16)
    p.add_argument("--seq-len", type=int, default=96)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("generate", help="sample text from a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--prompt")
    p.add_argument("--prompt-file")
    p.add_argument("--top-p", type=float, default=0.9)
    p.add_argument("--temperature", type=float, default=1.2)
    p.add_argument("--max-tokens", type=int, default=512)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-variants", type=int, default=1)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("extract-seeds", help="pull 15-token section seeds from a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_extract_seeds)

    p = sub.add_parser("generate-corpus", help="generate records until a word target")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--seeds", required=True)
    p.add_argument("--target-words", type=int, required=True)
    p.add_argument("--variants", type=int, default=2)
    p.add_argument("--top-p", type=float, default=0.9)
    p.add_argument("--temperature", type=float, default=1.2)
    p.add_argument("--max-tokens", type=int, default=512)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--resume", action="store_true")
    p.set_defaults(func=_cmd_generate_corpus)

    p = sub.add_parser("deid", help="de-identify a corpus")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--rules", default=None)
    p.add_argument("--report", default=None)
    p.set_defaults(func=_cmd_deid)

    p = sub.add_parser("ptune", help="soft-prompt tuning on a frozen checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--task", default="task")
    p.add_argument("--data", required=True, help="JSONL with input/target text fields")
    p.add_argument("--n-virtual", type=int, default=15)
    p.add_argument("--encoder", choices=["recurrent", "feedforward"], default="recurrent")
    p.add_argument("--encoder-hidden", type=int, default=2048)
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_ptune)

    p = sub.add_parser("eval-re", help="score generated relation clauses")
    p.add_argument("--data", required=True, help="JSONL with gold/generated fields")
    p.set_defaults(func=_cmd_eval_re)

    p = sub.add_parser("eval-qa", help="score generated answers")
    p.add_argument("--data", required=True)
    p.set_defaults(func=_cmd_eval_qa)

    p = sub.add_parser("review", help="blinded review service")
    rsub = p.add_subparsers(dest="review_cmd", required=True)
    ps = rsub.add_parser("serve")
    ps.add_argument("--port", type=int, default=8321)
    ps.add_argument("--host", default="127.0.0.1")
    ps.add_argument("--data-dir", required=True)
    ps.set_defaults(func=_cmd_review)
    pi = rsub.add_parser("ingest")
    pi.add_argument("--ai", required=True, help="file of AI passages separated by blank lines")
    pi.add_argument("--human", required=True)
    pi.add_argument("--raters", required=True, help="comma-separated rater ids")
    pi.add_argument("--seed", type=int, default=0)
    pi.add_argument("--data-dir", required=True)
    pi.set_defaults(func=_cmd_review)
    pr = rsub.add_parser("report")
    pr.add_argument("--session", required=True)
    pr.add_argument("--data-dir", required=True)
    pr.set_defaults(func=_cmd_review)
    pe = rsub.add_parser("export")
    pe.add_argument("--session", required=True)
    pe.add_argument("--data-dir", required=True)
    pe.set_defaults(func=_cmd_review)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
