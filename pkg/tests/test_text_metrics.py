import itertools
import math

import numpy as np
import pytest

from components.metrics.text_metrics import (
    BLEU_EPSILON,
    MetricError,
    bleu,
    build_idf,
    compression_rate,
    cosine_similarity,
    count_syllables,
    flesch,
    lcs_length,
    rouge_l,
    rouge_n,
    split_sentences,
    tokenize,
)

ALPHABET = ['a', 'b', 'c', 'd']


def _random_sequences(n_pairs, max_len=8, seed=7):
    rng = np.random.default_rng(seed)
    for _ in range(n_pairs):
        la, lb = rng.integers(1, max_len + 1, size=2)
        yield list(rng.choice(ALPHABET, size=la)), list(rng.choice(ALPHABET, size=lb))


def _naive_overlap(cand, ref, n):
    cand_grams = [tuple(cand[i:i + n]) for i in range(len(cand) - n + 1)]
    remaining = [tuple(ref[i:i + n]) for i in range(len(ref) - n + 1)]
    hits = 0
    for gram in cand_grams:
        if gram in remaining:
            remaining.remove(gram)
            hits += 1
    return hits, len(cand_grams), len(ref) - n + 1 if len(ref) >= n else 0


def _is_subsequence(seq, of):
    it = iter(of)
    return all(x in it for x in seq)


def _brute_force_lcs(a, b):
    for size in range(min(len(a), len(b)), 0, -1):
        for idx in itertools.combinations(range(len(a)), size):
            if _is_subsequence([a[i] for i in idx], b):
                return size
    return 0


def test_tokenize_lowercases_and_drops_punctuation():
    assert tokenize("The Cat's hat, e.g. 42!") == ['the', 'cat', 's', 'hat', 'e', 'g', '42']
    assert tokenize("snake_case") == ['snake', 'case']
    assert tokenize("...") == []


def test_split_sentences():
    assert split_sentences("One. Two! Three? four") == ['One.', 'Two!', 'Three?', 'four']
    assert split_sentences("  ") == []


@pytest.mark.parametrize('word, expected', [
    ('a', 1), ('cat', 1), ('make', 1), ('be', 1), ('rhythm', 1), ('beautiful', 3), ('w0', 1),
])
def test_count_syllables(word, expected):
    assert count_syllables(word) == expected


def test_count_syllables_rejects_empty_word():
    with pytest.raises(MetricError):
        count_syllables('')


def test_flesch_single_word():
    result = flesch("a")
    assert (result.tw, result.tse, result.tsy) == (1, 1, 1)
    assert result.score == pytest.approx(121.22, abs=1e-9)


def test_flesch_two_sentences():
    assert flesch("cat sat. dog ran.").score == pytest.approx(120.205, abs=1e-9)


def test_flesch_is_unclamped():
    long_words = ' '.join(['internationalization'] * 30) + '.'
    assert flesch(long_words).score < 0


def test_flesch_rejects_text_without_words():
    with pytest.raises(MetricError):
        flesch("?!")


def test_flesch_duplication_invariance():
    rng = np.random.default_rng(3)
    vocabulary = ['cat', 'table', 'reading', 'on', 'beautiful', 'x', 'storm', 'came']
    for _ in range(50):
        sentences = [' '.join(rng.choice(vocabulary, size=rng.integers(1, 9))) + '.' for _ in range(rng.integers(1, 4))]
        text = ' '.join(sentences)
        assert flesch(text + ' ' + text).score == pytest.approx(flesch(text).score, abs=1e-9)


def test_compression_rate_units():
    assert compression_rate("two words", "one two three four") == 0.5
    assert compression_rate("ab", "abcd", unit='characters') == 0.5
    with pytest.raises(MetricError):
        compression_rate("x", "")
    with pytest.raises(MetricError):
        compression_rate("x", "y", unit='bytes')


@pytest.mark.parametrize('n', [1, 2])
def test_rouge_n_matches_multiset_oracle(n):
    for cand, ref in _random_sequences(200):
        hits, cand_total, ref_total = _naive_overlap(cand, ref, n)
        score = rouge_n(' '.join(cand), ' '.join(ref), n)
        assert score.precision == pytest.approx(hits / cand_total if cand_total else 0.0)
        assert score.recall == pytest.approx(hits / ref_total if ref_total else 0.0)


def test_lcs_matches_subsequence_enumeration():
    for cand, ref in _random_sequences(200):
        assert lcs_length(cand, ref) == _brute_force_lcs(cand, ref)


def test_rouge_l_hand_case():
    score = rouge_l("the cat sat on the mat", "the cat on the mat")
    assert score.precision == pytest.approx(5 / 6)
    assert score.recall == pytest.approx(1.0)
    assert score.f1 == pytest.approx(2 * (5 / 6) / (5 / 6 + 1))


def test_rouge_identical_and_disjoint():
    assert rouge_n("a b c", "a b c", 2).f1 == 1.0
    assert rouge_n("a b c", "x y z", 1).f1 == 0.0
    assert rouge_n("", "x y z", 1).f1 == 0.0


def test_bleu_of_candidate_against_itself_is_one():
    rng = np.random.default_rng(11)
    for _ in range(50):
        tokens = rng.choice(ALPHABET + ['e', 'f', 'g'], size=rng.integers(1, 12))
        candidate = ' '.join(tokens)
        assert bleu(candidate, [candidate]) == pytest.approx(1.0, abs=1e-12)


def test_bleu_clipping_fixture():
    expected = math.exp((math.log(0.25) + 3 * math.log(BLEU_EPSILON)) / 4)
    assert bleu("the the the the", ["the cat"]) == pytest.approx(expected, abs=1e-9)


def test_bleu_brevity_penalty_for_short_candidate():
    # c=2, r=4: unigram and bigram precisions are 1, penalty exp(1 - 4/2)
    assert bleu("a b", ["a b c d"]) == pytest.approx(math.exp(-1.0))


def test_bleu_uses_closest_reference_length():
    assert bleu("a b c", ["a b c d e f g", "a b c"]) == pytest.approx(1.0)


def test_bleu_empty_candidate():
    assert bleu("", ["a b"]) == 0.0


def test_cosine_similarity_bounds():
    assert cosine_similarity("a b c", "a b c") == pytest.approx(1.0)
    assert cosine_similarity("a b", "c d") == 0.0
    assert cosine_similarity("", "c d") == 0.0
    idf = build_idf(["a b", "a c"])
    assert 0.0 < cosine_similarity("a b", "a c", idf) < 1.0


def test_build_idf_weights_rare_tokens_higher():
    idf = build_idf(["a b", "a c", "a d"])
    assert idf['b'] > idf['a'] > 0
    assert idf['a'] == pytest.approx(1.0)


def test_tokenize_splits_model_names_and_decimals():
    assert tokenize("GPT-4o scores 41.71") == ['gpt', '4o', 'scores', '41', '71']


def test_rouge_l_transposed_middle():
    score = rouge_l("a b c d", "a c b d")
    assert score.precision == pytest.approx(0.75)
    assert score.recall == pytest.approx(0.75)


def test_rouge_f1_is_symmetric_under_swap():
    for cand, ref in _random_sequences(100, seed=19):
        a, b = ' '.join(cand), ' '.join(ref)
        for n in (1, 2):
            forward, backward = rouge_n(a, b, n), rouge_n(b, a, n)
            assert forward.f1 == pytest.approx(backward.f1)
            assert (forward.precision, forward.recall) == pytest.approx((backward.recall, backward.precision))
        assert rouge_l(a, b).f1 == pytest.approx(rouge_l(b, a).f1)


def test_cosine_similarity_hand_dot_product():
    # (2*1 + 1*2) / (sqrt(5) * sqrt(5))
    assert cosine_similarity("cat cat dog", "cat dog dog") == pytest.approx(0.8)


def test_cosine_similarity_of_text_with_itself_under_idf():
    idf = build_idf(["storm hit the coast", "the coast guard", "rain fell"])
    text = "storm storm hit the coast with rain"
    assert idf['storm'] != 1.0
    assert cosine_similarity(text, text, idf) == pytest.approx(1.0)
