"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line. Heavier pipelines (pretrained relation model, trained
clinical toy model) come from the session fixtures in conftest.
"""

import math
import sys
from contextlib import contextmanager
import numpy as np
import pytest
from scipy import stats as sps

from cliniclm import bpe, datagen
from cliniclm import tensor as T
from cliniclm.checkpoint import content_hash, init_model
from cliniclm.deid import deidentify, detect_phi, load_ruleset
from cliniclm.model import (
    ModelConfig,
    forward_graph,
    init_params,
    lm_loss,
    param_count,
    wrap_params,
)
from cliniclm.optim import LrSchedule
from cliniclm.ptuning import (
    PtuneHyperparams,
    SoftPromptConfig,
    init_prompt,
    prompt_graph,
    ptune_infer,
    ptune_train,
    _batch_loss,
)
from cliniclm.sampling import SamplerConfig, apply_temperature, generate, nucleus_filter, sample_next, softmax
from cliniclm.stats import (
    ContingencyTable2x2,
    ItemJudgment,
    RaterRecord,
    binom_test,
    gwet_ac1,
    percent_agreement,
    turing_report,
    welch_t,
)
from cliniclm.synthgen import extract_seeds, generate_corpus, read_records
from cliniclm.tasks import Triplet, parse_triplets, score_re_corpus, serialize_triplets
from cliniclm.text import dedup, normalize
from cliniclm.training import train


@contextmanager
def criterion(name):
    try:
        yield
    except BaseException:
        sys.stdout.write(f"[FAIL] {name}\n")
        raise
    sys.stdout.write(f"[PASS] {name}\n")


# -- shared trained artifacts --------------------------------------------


@pytest.fixture(scope="session")
def trained_clinic(clinic_lab):
    schedule = LrSchedule(peak_lr=3e-3, warmup_steps=50, total_steps=300)
    return train(
        clinic_lab.init_ckpt,
        clinic_lab.token_stream,
        steps=300,
        batch_size=16,
        schedule=schedule,
        seed=4,
        seq_len=96,
        log_interval=50,
    )


@pytest.fixture(scope="session")
def tuned_re(re_lab):
    spc = SoftPromptConfig(n_virtual=15, encoder_kind="recurrent", encoder_hidden=96, task_name="relation-extraction")
    hp = PtuneHyperparams(steps=300, batch_size=32, lr=2e-3, warmup_steps=50, seed=13, log_interval=1)
    hash_before = content_hash(re_lab.ckpt.params)
    weights, trace = ptune_train(re_lab.ckpt, re_lab.train_pairs, spc, hp)
    return {"spc": spc, "weights": weights, "trace": trace, "hash_before": hash_before}


def _re_scores(re_lab, weights):
    pairs = []
    for ex in re_lab.held_examples:
        out = ptune_infer(
            re_lab.ckpt,
            weights,
            re_lab.encode_input(ex),
            max_new_tokens=48,
            stop_ids=frozenset({re_lab.newline_id}),
        )
        generated = bpe.decode(re_lab.vocab, out)
        pairs.append(([ex.triplet], parse_triplets(generated).triplets))
    return score_re_corpus(pairs)


# -- statistics reproduction ----------------------------------------------


class TestStatisticsReproduction:
    def test_agreement_tables(self):
        with criterion("statistics: agreement coefficients on the two review tables"):
            readability = ContingencyTable2x2(42, 3, 10, 5)
            relevance = ContingencyTable2x2(44, 6, 7, 3)
            assert percent_agreement(readability) == 47 / 60
            assert 0.685 <= gwet_ac1(readability) <= 0.690
            assert 0.700 <= gwet_ac1(relevance) <= 0.710

    def test_welch_on_summary_groups(self):
        with criterion("statistics: Welch p-values on the rating summary groups"):
            def group(mean, sd, n, seed):
                base = np.linspace(-1, 1, n) + np.random.default_rng(seed).normal(0, 0.1, n)
                z = (base - base.mean()) / base.std(ddof=1)
                return mean + sd * z

            readability = welch_t(group(6.57, 1.22, 30, 1), group(6.93, 1.09, 30, 2))
            relevance = welch_t(group(7.00, 1.23, 30, 3), group(6.97, 1.07, 30, 4))
            assert 0.21 <= readability.p_value <= 0.24
            assert 0.90 <= relevance.p_value <= 0.93

    def test_exact_binomial_identification(self):
        with criterion("statistics: exact binomial identification tests"):
            human = binom_test(37, 60, 0.7, "lower")
            ai = binom_test(22, 60, 0.7, "lower")
            assert 0.095 <= human.p_value <= 0.115
            assert ai.p_value < 0.001

    def test_turing_report_pooled_cells(self):
        with criterion("statistics: pooled identification cells 36.7 / 61.7 / 49.2"):
            items = [(f"ai-{i}", "AI") for i in range(30)] + [(f"hu-{i}", "Human") for i in range(30)]
            plans = {"rater-1": (9, 17), "rater-2": (13, 20)}
            records = []
            for rater, (ai_ok, hu_ok) in plans.items():
                judgments = []
                for item_id, origin in items:
                    idx = int(item_id.split("-")[1])
                    correct = idx < (ai_ok if origin == "AI" else hu_ok)
                    guess = origin if correct else ("Human" if origin == "AI" else "AI")
                    judgments.append(ItemJudgment(item_id, origin, guess, 6, 7))
                records.append(RaterRecord(rater_id=rater, judgments=tuple(judgments)))
            report = turing_report(records)
            assert report.pooled["AI"].pct_str == "36.7%"
            assert report.pooled["Human"].pct_str == "61.7%"
            assert report.pooled["Total"].pct_str == "49.2%"


# -- architecture arithmetic ----------------------------------------------


class TestArchitectureArithmetic:
    def test_param_counts_near_published_sizes(self):
        with criterion("architecture: parameter counts within 10% of 5e9 and 2e10"):
            c5 = ModelConfig(n_layers=24, hidden=4096, n_heads=32, vocab_size=50257, context_len=2048)
            c20 = ModelConfig(n_layers=44, hidden=6144, n_heads=48, vocab_size=50257, context_len=2048)
            assert abs(param_count(c5) - 5.0e9) / 5.0e9 < 0.10
            assert abs(param_count(c20) - 2.0e10) / 2.0e10 < 0.10


# -- model and optimizer properties ----------------------------------------


class TestModelProperties:
    def test_initial_loss_is_log_vocab(self, clinic_lab):
        with criterion("model: fresh-model loss equals ln(V) within 2%"):
            rng = np.random.default_rng(0)
            toks = rng.integers(0, clinic_lab.config.vocab_size, size=(8, 48))
            params_t = wrap_params(clinic_lab.init_ckpt.params, requires_grad=False)
            loss = lm_loss(forward_graph(params_t, clinic_lab.config, toks), toks).item()
            target = math.log(clinic_lab.config.vocab_size)
            assert abs(loss - target) / target < 0.02

    def test_validation_loss_drops_30pct_in_300_steps(self, trained_clinic):
        with criterion("model: 300-step toy training cuts validation loss by >= 30%"):
            first = trained_clinic.trace[0]["val_loss"]
            last = trained_clinic.trace[-1]["val_loss"]
            assert last <= 0.7 * first, f"val {first:.3f} -> {last:.3f}"

    def test_full_gradient_check_fp64(self):
        with criterion("model: analytic gradients match finite differences < 1e-4 (fp64)"):
            cfg = ModelConfig(n_layers=2, hidden=16, n_heads=2, vocab_size=29, context_len=12, dropout=0.0, init_seed=6)
            params = init_params(cfg, dtype="fp64")
            toks = np.random.default_rng(8).integers(0, 29, size=(2, 8))

            def loss_at(arrays):
                pt = {k: T.Tensor(v) for k, v in arrays.items()}
                return lm_loss(forward_graph(pt, cfg, toks), toks).item()

            pt = {k: T.Tensor(v, requires_grad=True) for k, v in params.items()}
            T.backward(lm_loss(forward_graph(pt, cfg, toks), toks))
            rng = np.random.default_rng(9)
            h = 1e-5
            for name in params:
                for _ in range(3):
                    idx = tuple(rng.integers(0, s) for s in params[name].shape)
                    plus = {k: v.copy() for k, v in params.items()}
                    plus[name][idx] += h
                    minus = {k: v.copy() for k, v in params.items()}
                    minus[name][idx] -= h
                    fd = (loss_at(plus) - loss_at(minus)) / (2 * h)
                    an = pt[name].grad[idx]
                    assert abs(fd - an) / max(abs(fd), abs(an), 1e-8) < 1e-4, name

    def test_causality_1000_random_perturbations(self):
        with criterion("model: future-token perturbation never changes earlier logits (1000 trials)"):
            cfg = ModelConfig(n_layers=2, hidden=32, n_heads=2, vocab_size=64, context_len=16, init_seed=3)
            ckpt = init_model(cfg)
            rng = np.random.default_rng(10)
            for _ in range(1000):
                toks = rng.integers(0, 64, size=(1, 10))
                j = int(rng.integers(1, 10))
                base = ckpt.forward(toks)
                perturbed = toks.copy()
                perturbed[0, j] = (perturbed[0, j] + 1 + rng.integers(0, 62)) % 64
                after = ckpt.forward(perturbed)
                assert base[:, :j].tobytes() == after[:, :j].tobytes()


# -- sampling contract ------------------------------------------------------


class TestSamplingContract:
    def test_nucleus_hand_cases(self):
        with criterion("sampling: nucleus filter hand cases exact"):
            out = nucleus_filter(np.array([0.5, 0.3, 0.15, 0.05]), 0.9)
            np.testing.assert_allclose(out[:3], [0.5263, 0.3158, 0.1579], atol=1e-4)
            assert out[3] == 0.0
            probs = np.array([0.25, 0.25, 0.25, 0.25])
            np.testing.assert_array_equal(nucleus_filter(probs, 1.0), probs)
            np.testing.assert_allclose(nucleus_filter(np.array([0.1, 0.6, 0.3]), 0.05), [0, 1, 0])

    def test_monte_carlo_truncation_tv(self):
        with criterion("sampling: 100k draws within TV 0.01 of analytic truncated law"):
            logits = np.log(np.array([0.5, 0.3, 0.15, 0.05]))
            cfg = SamplerConfig(top_p=0.9, temperature=1.0, rng_seed=123)
            expected = nucleus_filter(softmax(logits), 0.9)
            rng = np.random.Generator(np.random.Philox(key=cfg.rng_seed))
            counts = np.zeros(4)
            n = 100_000
            for _ in range(n):
                token, _ = sample_next(logits, cfg, rng)
                counts[token] += 1
            assert 0.5 * np.abs(counts / n - expected).sum() < 0.01

    def test_chi_square_against_raw_softmax(self):
        with criterion("sampling: top_p=1, T=1 matches raw softmax (chi-square, alpha 0.01)"):
            cfg_model = ModelConfig(n_layers=2, hidden=64, n_heads=4, vocab_size=64, context_len=32, init_seed=7)
            ckpt = init_model(cfg_model)
            logits = ckpt.forward(np.array([[4, 9, 2]]))[0, -1]
            expected = softmax(logits)
            cfg = SamplerConfig(top_p=1.0, temperature=1.0, rng_seed=77)
            rng = np.random.Generator(np.random.Philox(key=cfg.rng_seed))
            n = 100_000
            counts = np.zeros(64)
            for _ in range(n):
                token, _ = sample_next(logits, cfg, rng)
                counts[token] += 1
            chi2 = ((counts - n * expected) ** 2 / (n * expected)).sum()
            assert sps.chi2.sf(chi2, 63) > 0.01

    def test_generation_cap_and_determinism(self, clinic_lab, trained_clinic):
        with criterion("sampling: all generations <= 512 tokens, fixed seed reproduces"):
            ckpt = trained_clinic.checkpoint
            prompt = clinic_lab.token_stream[:15].tolist()
            for seed in range(3):
                cfg = SamplerConfig(max_new_tokens=512, rng_seed=seed)
                out = generate(ckpt, prompt, cfg)
                assert len(out.new_ids) <= 512
            cfg = SamplerConfig(max_new_tokens=64, rng_seed=11)
            a = generate(ckpt, prompt, cfg)
            b = generate(ckpt, prompt, cfg)
            assert a.new_ids == b.new_ids and a.logprobs == b.logprobs

    def test_temperature_then_truncation_order(self):
        with criterion("sampling: temperature scaling precedes nucleus truncation"):
            logits = np.array([2.0, 1.0, 0.5, -1.0])
            cfg = SamplerConfig(top_p=0.8, temperature=1.2, rng_seed=0)
            expected = nucleus_filter(softmax(apply_temperature(logits, 1.2)), 0.8)
            rng = np.random.Generator(np.random.Philox(key=0))
            token, lp = sample_next(logits, cfg, rng)
            assert lp == pytest.approx(math.log(expected[token]))


# -- soft-prompt tuning contract --------------------------------------------


class TestPtuningContract:
    def test_frozen_base_hash(self, re_lab, tuned_re):
        with criterion("p-tuning: base checkpoint digest bit-identical across the run"):
            assert content_hash(re_lab.ckpt.params) == tuned_re["hash_before"]
            assert re_lab.ckpt.content_hash == tuned_re["hash_before"]

    def test_base_gradients_identically_zero(self, re_lab, tuned_re):
        with criterion("p-tuning: base-parameter gradients identically zero"):
            base_t = wrap_params(re_lab.ckpt.params, requires_grad=False)
            spc = tuned_re["spc"]
            weights_t = {
                k: T.Tensor(v, requires_grad=True) for k, v in tuned_re["weights"].params.items()
            }
            prompt = prompt_graph(weights_t, spc, re_lab.ckpt.config)
            loss = _batch_loss(base_t, re_lab.ckpt.config, prompt, re_lab.train_pairs[:8])
            T.backward(loss)
            for name, tensor in base_t.items():
                assert tensor.grad is None or not np.any(tensor.grad), name
            for name, tensor in weights_t.items():
                assert tensor.grad is not None and np.isfinite(tensor.grad).all(), name

    def test_f1_gap_on_separable_task(self, re_lab, tuned_re):
        with criterion("p-tuning: separable task F1 >= 0.9 tuned vs <= 0.2 untuned"):
            untuned = init_prompt(tuned_re["spc"], re_lab.ckpt.config, seed=3)
            untuned_score = _re_scores(re_lab, untuned)
            tuned_score = _re_scores(re_lab, tuned_re["weights"])
            sys.stdout.write(
                f"  untuned F1 {untuned_score.f1:.3f}, tuned F1 {tuned_score.f1:.3f}\n"
            )
            assert untuned_score.f1 <= 0.2
            assert tuned_score.f1 >= 0.9

    def test_smoothed_loss_decreases(self, tuned_re):
        with criterion("p-tuning: smoothed training loss never rises > 5% over a 50-step window"):
            losses = [e["loss"] for e in tuned_re["trace"]]
            smoothed = [losses[0]]
            for x in losses[1:]:
                smoothed.append(0.9 * smoothed[-1] + 0.1 * x)
            for i in range(len(smoothed) - 50):
                assert smoothed[i + 50] <= smoothed[i] * 1.05, f"step {i}"

    def test_triplet_roundtrip_1000_random_sets(self):
        with criterion("p-tuning: serialize/parse triplet round-trip over 1000 random sets"):
            rng = np.random.default_rng(12)
            alphabet = list("abcdefgh XYZ[];,.123")
            def field():
                while True:
                    s = "".join(rng.choice(alphabet) for _ in range(rng.integers(1, 10)))
                    if s.strip():
                        return s
            for _ in range(1000):
                triplets = {Triplet(field(), field(), field()) for _ in range(rng.integers(0, 4))}
                text = serialize_triplets(sorted(triplets, key=str))
                parsed = parse_triplets(text)
                assert {t.normalized() for t in parsed.triplets} == {t.normalized() for t in triplets}


# -- de-identification and text pipeline ------------------------------------


class TestDeidPipeline:
    def test_full_recall_on_injected_fixture(self):
        with criterion("de-id: 100% recall on injected identifiers across all 18 categories"):
            from cliniclm.deid import CATEGORIES

            ruleset = load_ruleset()
            docs, injections = datagen.make_phi_corpus(n_docs=30, seed=7)
            spans_by_doc = {d.doc_id: detect_phi(normalize(d.full_text()), ruleset) for d in docs}
            assert {i.category for i in injections} == set(CATEGORIES)
            for inj in injections:
                assert any(
                    s.matched_text == inj.value and s.category == inj.category
                    for s in spans_by_doc[inj.doc_id]
                ), inj

    def test_redaction_idempotent(self):
        with criterion("de-id: redaction is idempotent"):
            ruleset = load_ruleset()
            docs, _ = datagen.make_phi_corpus(n_docs=10, seed=5)
            for doc in docs:
                once, _ = deidentify(normalize(doc.full_text()), ruleset)
                twice, _ = deidentify(once, ruleset)
                assert once == twice

    def test_tokenizer_roundtrip_on_fuzz_set(self, clinic_lab):
        with criterion("pipeline: tokenizer round-trip lossless on fuzz set"):
            rng = np.random.default_rng(3)
            pieces = ["patient", " reports", "\n", "[**NAME**]", "é", "\U0001f600", " 50 mg", "q4h."]
            for _ in range(10_000):
                s = "".join(rng.choice(pieces) for _ in range(rng.integers(0, 10)))
                assert bpe.decode(clinic_lab.vocab, bpe.encode(clinic_lab.vocab, s)) == s

    def test_dedup_removes_exactly_seeded_duplicates(self, clinic_lab):
        with criterion("pipeline: dedup removes exactly the seeded duplicates"):
            rng = np.random.default_rng(4)
            docs = list(clinic_lab.corpus_docs[:40])
            seeded = 0
            for doc in clinic_lab.corpus_docs[:15]:
                copies = int(rng.integers(1, 3))
                for k in range(copies):
                    dup = type(doc)(doc_id=f"{doc.doc_id}-dup{k}", sections=list(doc.sections), source=doc.source)
                    docs.append(dup)
                    seeded += 1
            out = dedup(docs)
            assert len(out) == 40
            assert len(docs) - len(out) == seeded

    def test_long_deidentified_paragraph_fits_cap(self, clinic_lab):
        with criterion("pipeline: ~350-word de-identified paragraph stays within the 512-token cap"):
            ruleset = load_ruleset()
            docs, _ = datagen.make_phi_corpus(n_docs=2, seed=11)
            bodies = [body for doc in docs for _, body in doc.sections]
            paragraph = " ".join(" ".join(bodies).split()[:350])
            assert len(paragraph.split()) >= 300  # representative passage length
            clean, _ = deidentify(normalize(paragraph), ruleset)
            desk_vocab = bpe.train_tokenizer([clinic_lab.corpus_text], 8192)
            assert len(bpe.encode(desk_vocab, clean)) <= 512


# -- corpus harness ----------------------------------------------------------


class TestCorpusHarness:
    def test_word_target_manifest_and_determinism(self, clinic_lab, trained_clinic, tmp_path_factory):
        with criterion("corpus: 10k-word target met, manifest recounts, rerun byte-identical"):
            ckpt = trained_clinic.checkpoint
            extraction = extract_seeds(clinic_lab.corpus_docs[:120], clinic_lab.vocab)
            seeds = extraction.seeds
            assert len(seeds) >= 50
            cfg = SamplerConfig(top_p=0.9, temperature=1.2, max_new_tokens=192, rng_seed=0)
            out_dir = tmp_path_factory.mktemp("corpus")
            p1 = out_dir / "run1.jsonl"
            p2 = out_dir / "run2.jsonl"
            records, manifest = generate_corpus(
                ckpt, seeds, clinic_lab.vocab, target_words=10_000, variants_per_seed=2,
                cfg=cfg, base_seed=21, out_path=p1,
            )
            assert manifest["complete"], manifest
            total = sum(r.word_count for r in records)
            assert total >= 10_000
            assert total - records[-1].word_count < 10_000  # overshoot <= one record
            # manifest equals brute recount of the stream on disk
            loaded = list(read_records(p1))
            assert manifest["records"] == len(loaded)
            assert manifest["total_words"] == sum(r.word_count for r in loaded)
            assert manifest["total_tokens"] == sum(r.output_token_count for r in loaded)
            assert all(r.output_token_count <= 512 for r in loaded)
            # rerun determinism
            generate_corpus(
                ckpt, seeds, clinic_lab.vocab, target_words=10_000, variants_per_seed=2,
                cfg=cfg, base_seed=21, out_path=p2,
            )
            assert p1.read_bytes() == p2.read_bytes()
