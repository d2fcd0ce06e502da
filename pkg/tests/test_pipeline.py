import numpy as np
import pytest
import torch

from src.common.utils import get_logger
from src.corpus import ParallelDocument, Side, Unit, build_vocab, content_segments, make_instances
from src.latent import AugmentConfig, AugmentMode, LatentValue, sample_latent
from src.neural import Role, build_model, make_batch
from src.pipeline import (
    AugmentSide,
    CardinalityError,
    Origin,
    PipelineError,
    VocabMismatchError,
    both_augment,
    build_da_training_set,
    check_vocabularies,
    da_vocabularies,
    gold_corpus,
    jensen_gap,
    mt_examples,
    read_augmented,
    required_positions,
    sized_config,
    source_augment,
    target_augment,
    train_da,
    train_mt,
    write_augmented,
)
from src.pipeline.da import da_examples

logger = get_logger(__name__)


@pytest.fixture
def prior_config(augment_config):
    return augment_config.model_copy(update={"mode": AugmentMode.PRIOR})


@pytest.fixture
def augmented(sentence_instances, da_model, augment_config, span_map):
    """Target-side corpus over five sentence instances with M=3."""
    return target_augment(sentence_instances[:5], da_model, augment_config, seed=7, span_map=span_map)


class TestDaTrainingSet:
    def test_replicas_per_instance(self, sentence_instances, augment_config):
        records = build_da_training_set(sentence_instances, augment_config, seed=1, replicas=5)
        assert len(records) == len(sentence_instances) * 5
        assert [r.replica_index for r in records[:5]] == [1, 2, 3, 4, 5]
        assert records[0].parent_instance_id == sentence_instances[0].instance_id

    def test_rendered_latents_come_from_the_target(self, document_instances, augment_config):
        for record, instance in zip(build_da_training_set(document_instances, augment_config, seed=2, replicas=1),
                                    document_instances):
            latent = record.extended_input.latent_origin
            assert record.target == instance.target
            for start, length in latent.spans:
                span = instance.target[start:start + length]
                assert span == record.target[start:start + length]
            assert len(record.extended_input.tokens) == len(instance.source) + sum(n + 1 for _, n in latent.spans)

    def test_seeded(self, sentence_instances, augment_config):
        first = build_da_training_set(sentence_instances, augment_config, seed=3)
        second = build_da_training_set(sentence_instances, augment_config, seed=3)
        assert first == second

    def test_prior_mode_uses_the_bare_source(self, sentence_instances, prior_config):
        records = build_da_training_set(sentence_instances, prior_config, seed=1)
        assert len(records) == len(sentence_instances)
        assert all(r.extended_input.tokens == i.source for r, i in zip(records, sentence_instances))
        assert all(r.alpha is None for r in records)

    def test_train_da_returns_da_model(self, sentence_instances, augment_config, da_config, span_map, quick_train):
        records = build_da_training_set(sentence_instances, augment_config, seed=1, span_map=span_map)
        model, curve = train_da(records, da_config, quick_train)
        assert model.role is Role.DA
        assert len(curve.train_loss) == 2

    def test_latent_spans_decode_through_the_input_vocabulary(self):
        docs = [
            ParallelDocument(doc_id="u1", src_sentences=[["A", "B", "C"]],
                             tgt_sentences=[["societies", "accept", "limits"]]),
            ParallelDocument(doc_id="u2", src_sentences=[["x", "y", "z"]],
                             tgt_sentences=[["limits", "societies", "accept"]]),
        ]
        src_vocab, tgt_vocab = build_vocab(docs, Side.SRC), build_vocab(docs, Side.TGT)
        assert src_vocab.stoi["A"] == tgt_vocab.stoi["accept"]
        inputs, outputs, span_map = da_vocabularies(src_vocab, tgt_vocab)
        instances = make_instances(docs, Unit.SENTENCE, src_vocab, tgt_vocab)
        config = AugmentConfig(fixed_alpha=1.0, ngram_min=1, ngram_max=1)

        records = build_da_training_set(instances, config, seed=1, replicas=1, span_map=span_map)
        assert inputs.decode(records[0].extended_input.tokens) == [
            "A", "B", "C", "<sep>", "societies", "<sep>", "accept", "<sep>", "limits"]
        assert inputs.decode(records[1].extended_input.tokens) == [
            "x", "y", "z", "<sep>", "limits", "<sep>", "societies", "<sep>", "accept"]
        assert outputs.decode(records[0].target) == ["societies", "accept", "limits"]
        assert all(max(r.extended_input.tokens) < len(inputs) for r in records)

    def test_reverse_side_maps_source_spans(self, vocabs):
        src_vocab, tgt_vocab = vocabs
        inputs, outputs, span_map = da_vocabularies(src_vocab, tgt_vocab, AugmentSide.SOURCE)
        assert outputs == src_vocab
        assert inputs.itos[:len(tgt_vocab)] == tgt_vocab.itos
        assert [inputs.itos[span_map[src_vocab.stoi[t]]] for t in "abcde"] == list("abcde")

    def test_longest_document_fits_the_sized_model(self, tiny_config):
        sentences = [[f"w{i}" for i in range(100)] for _ in range(5)]
        docs = [ParallelDocument(doc_id="long", src_sentences=sentences,
                                 tgt_sentences=[[t.upper() for t in s] for s in sentences])]
        src_vocab, tgt_vocab = build_vocab(docs, Side.SRC), build_vocab(docs, Side.TGT)
        inputs, outputs, span_map = da_vocabularies(src_vocab, tgt_vocab)
        instances = make_instances(docs, Unit.DOCUMENT, src_vocab, tgt_vocab, max_len=512)
        config = AugmentConfig(fixed_alpha=1.0, ngram_min=1, ngram_max=1)

        record = build_da_training_set(instances, config, seed=2, replicas=1, span_map=span_map)[0]
        assert len(record.extended_input.tokens) == 504 + 2 * 500
        positions = required_positions(512, config)
        assert positions >= 1504

        model_config = sized_config(tiny_config, inputs, outputs, positions)
        assert model_config.max_len == positions
        model = build_model(model_config, Role.DA, seed=1).eval()
        batch = make_batch(da_examples([record]))
        with torch.no_grad():
            assert torch.isfinite(model(batch)).all()

    def test_sizing_never_shrinks_positions(self, tiny_config, vocabs):
        grown = tiny_config.model_copy(update={"max_len": 4096})
        assert sized_config(grown, *vocabs, positions=100).max_len == 4096
        assert sized_config(tiny_config, *vocabs).max_len == tiny_config.max_len


class TestTargetAugment:
    def test_cardinality(self, augmented):
        assert len(augmented.pairs) == 5 * (3 + 1)
        assert len(augmented.generated_pairs()) == 5 * 3
        for group in augmented.by_instance().values():
            assert group[0].origin is Origin.GOLD
            assert all(p.origin is Origin.GENERATED and p.side is AugmentSide.TARGET for p in group[1:])

    def test_generated_pairs_keep_the_gold_source(self, augmented, sentence_instances):
        for instance, group in zip(sentence_instances, augmented.by_instance().values()):
            assert all(p.source == instance.source for p in group)
            assert group[0].translation == instance.target

    def test_provenance(self, augmented):
        for group in augmented.by_instance().values():
            gold = group[0].translation
            for pair in group[1:]:
                assert 0.0 <= pair.alpha <= 1.0
                assert pair.beam_score <= 0.0
                assert all(start + n <= len(gold) for start, n in pair.spans)

    def test_seeded(self, sentence_instances, da_model, augment_config, span_map):
        first = target_augment(sentence_instances, da_model, augment_config, seed=4, span_map=span_map)
        second = target_augment(sentence_instances, da_model, augment_config, seed=4, span_map=span_map)
        assert first == second

    def test_thread_count_does_not_change_output(self, sentence_instances, da_model, augment_config, span_map):
        single = target_augment(sentence_instances, da_model, augment_config, seed=4, threads=1, span_map=span_map)
        pooled = target_augment(sentence_instances, da_model, augment_config, seed=4, threads=3, span_map=span_map)
        assert single.pairs == pooled.pairs

    def test_prior_mode_repeats_one_translation(self, sentence_instances, da_model, prior_config):
        corpus = target_augment(sentence_instances, da_model, prior_config, seed=5)
        for group in corpus.by_instance().values():
            generated = group[1:]
            assert len({tuple(p.translation) for p in generated}) == 1
            assert all(p.alpha == 0.0 and p.spans == [] for p in generated)

    def test_needs_a_da_model(self, sentence_instances, tiny_config, augment_config):
        mt_model = build_model(tiny_config, Role.MT, seed=1)
        with pytest.raises(PipelineError, match="DA model"):
            target_augment(sentence_instances, mt_model, augment_config, seed=1)


@pytest.fixture
def reverse_da(tiny_config, vocabs):
    """Untrained source-side DA model and its span map."""
    inputs, outputs, span_map = da_vocabularies(*vocabs, side=AugmentSide.SOURCE)
    return build_model(sized_config(tiny_config, inputs, outputs), Role.DA, seed=9).eval(), span_map


class TestOtherSides:
    def test_source_side_keeps_gold_targets(self, sentence_instances, reverse_da, augment_config):
        model, span_map = reverse_da
        corpus = source_augment(sentence_instances, model, augment_config, seed=6, span_map=span_map)
        assert corpus.meta.direction.value == "source"
        for instance, group in zip(sentence_instances, corpus.by_instance().values()):
            assert all(p.translation == instance.target for p in group)
            assert all(p.side is AugmentSide.SOURCE for p in group[1:])

    def test_both_sides(self, sentence_instances, da_model, span_map, reverse_da, augment_config):
        reverse, reverse_span_map = reverse_da
        corpus = both_augment(sentence_instances, da_model, reverse, augment_config, seed=6,
                              span_map=span_map, reverse_span_map=reverse_span_map)
        m = augment_config.num_samples
        assert len(corpus.pairs) == len(sentence_instances) * (2 * m + 1)
        sides = [p.side for p in corpus.pairs[1:2 * m + 1]]
        assert sides == [AugmentSide.TARGET] * m + [AugmentSide.SOURCE] * m

    def test_gold_corpus(self, sentence_instances):
        corpus = gold_corpus(sentence_instances, seed=1, config_sha256="abc")
        assert corpus.M == 0
        assert len(corpus.pairs) == len(sentence_instances)


class TestAugmentedFile:
    def test_round_trip(self, tmp_path, augmented, vocabs):
        path = tmp_path / "augmented.jsonl"
        digest = write_augmented(path, augmented, *vocabs)
        assert len(path.read_text(encoding="utf-8").splitlines()) == 1 + 20
        loaded = read_augmented(path, *vocabs)
        assert loaded.meta == augmented.meta
        assert loaded.pairs == augmented.pairs
        assert write_augmented(tmp_path / "again.jsonl", loaded, *vocabs) == digest

    def test_missing_pair_breaks_cardinality(self, tmp_path, augmented, vocabs):
        path = tmp_path / "augmented.jsonl"
        write_augmented(path, augmented, *vocabs)
        lines = path.read_text(encoding="utf-8").splitlines()
        path.write_text("\n".join(lines[:-1]) + "\n", encoding="utf-8")
        with pytest.raises(CardinalityError):
            read_augmented(path, *vocabs)


class TestMtExamples:
    def test_each_instance_weighs_the_same(self, augmented):
        examples = mt_examples(augmented)
        assert len(examples) == 20
        assert all(e.weight == pytest.approx(0.25) for e in examples)

    def test_drop_gold(self, augmented):
        examples = mt_examples(augmented, drop_gold=True)
        assert len(examples) == 15
        assert all(e.weight == pytest.approx(1 / 3) for e in examples)

    def test_train_mt(self, augmented, tiny_config, quick_train, sentence_instances):
        model, curve = train_mt(augmented, tiny_config, quick_train, dev_instances=sentence_instances[5:])
        assert model.role is Role.MT
        assert curve.best_epoch >= 1


def test_vocabulary_mismatch(da_model, da_vocabs, vocabs):
    inputs, outputs, _ = da_vocabs
    check_vocabularies(da_model, inputs, outputs)
    with pytest.raises(VocabMismatchError, match="source size"):
        check_vocabularies(da_model, *vocabs)
    da_model.vocab_sha256 = {"src": "0" * 64}
    with pytest.raises(VocabMismatchError, match="source vocabulary"):
        check_vocabularies(da_model, inputs, outputs)


def test_jensen_bound(da_model, document_instances, span_map):
    instance = document_instances[0]
    latents = [
        LatentValue(),
        LatentValue(spans=[(0, 1)], observed_ratio_requested=0.2, tokens_covered=1),
        LatentValue(spans=[(1, 2), (4, 1)], observed_ratio_requested=0.5, tokens_covered=3),
    ]
    lhs, rhs = jensen_gap(da_model, instance, latents, span_map)
    assert lhs <= rhs + 1e-9
    with pytest.raises(PipelineError):
        jensen_gap(da_model, instance, [])


def test_jensen_bound_on_random_draws(da_config, document_instances, sentence_instances, span_map):
    rng = np.random.default_rng(0)
    instances = document_instances + sentence_instances
    config = AugmentConfig(ngram_min=1, ngram_max=3)
    cases = 0
    for model_seed in range(10):
        model = build_model(da_config, Role.DA, seed=model_seed).eval()
        for _ in range(100):
            instance = instances[int(rng.integers(len(instances)))]
            segments = None
            if instance.unit is Unit.DOCUMENT:
                segments = content_segments(instance.target, instance.tgt_group_tags)
            latents = [sample_latent(instance.target, float(rng.uniform()), config, rng, segments)
                       for _ in range(int(rng.integers(1, 5)))]
            lhs, rhs = jensen_gap(model, instance, latents, span_map)
            assert lhs <= rhs + 1e-9
            cases += 1
    assert cases == 1000
