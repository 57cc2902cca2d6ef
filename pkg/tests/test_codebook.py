import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from polarlab.codebook import (BhattacharyyaBEC, CodeSpec, Explicit, bhattacharyya_parameters,
                               bounded_distance_decode, bounded_distance_decode_batch,
                               code_from_config, decoding_radius, encode, hamming_distance,
                               int_to_bits, bits_to_int, kron_generator, min_distance,
                               nr_info_set, nr_reliability_order, order_by_reliability,
                               select_info_set)
from polarlab.errors import ConfigurationError, ValidationError

from .conftest import all_words


def test_kron_generator_small_cases():
    assert kron_generator(0).tolist() == [[1]]
    assert kron_generator(1).tolist() == [[1, 0], [1, 1]]
    assert kron_generator(2).tolist() == [[1, 0, 0, 0], [1, 1, 0, 0], [1, 0, 1, 0], [1, 1, 1, 1]]


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
def test_kron_generator_structure(n):
    G = kron_generator(n)
    assert np.array_equal(G, np.tril(G))
    assert np.all(np.diag(G) == 1)
    # inductive rule G^(n) = G (x) G^(n-1)
    assert np.array_equal(G, np.kron(kron_generator(1), kron_generator(n - 1)))


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_generator_is_involution(n):
    G = kron_generator(n).astype(int)
    assert np.array_equal((G @ G) % 2, np.eye(2**n, dtype=int))


def test_kron_generator_size_limit():
    with pytest.raises(ConfigurationError):
        kron_generator(11)
    with pytest.raises(ConfigurationError):
        CodeSpec(11, 1, (2048,))


def test_bhattacharyya_values_n8():
    z = bhattacharyya_parameters(8, 0.5)
    expected = [0.996, 0.879, 0.809, 0.316, 0.684, 0.191, 0.121, 0.004]
    np.testing.assert_allclose(z, expected, atol=5e-4)


def test_select_info_set_examples():
    assert select_info_set(8, 4, BhattacharyyaBEC(0.5)) == [4, 6, 7, 8]
    assert select_info_set(2, 2) == [1, 2]
    assert select_info_set(2, 2, Explicit([1, 2])) == [1, 2]
    explicit = [8, 10, 11, 12, 13, 14, 15, 16]
    assert select_info_set(16, 8, Explicit(explicit)) == explicit


def test_tie_break_prefers_larger_index():
    assert select_info_set(4, 1) == [4]
    assert order_by_reliability([0.5, 0.5, 0.5, 0.5]) == [3, 2, 1, 0]
    assert order_by_reliability([0.2, 0.1, 0.2, 0.3]) == [1, 2, 0, 3]


@pytest.mark.parametrize("bad", [[4, 6, 7], [6, 4, 7, 8], [0, 6, 7, 8], [4, 6, 7, 9], [4, 4, 7, 8]])
def test_explicit_info_set_validation(bad):
    with pytest.raises(ValidationError):
        select_info_set(8, 4, Explicit(bad))


def test_select_info_set_bad_sizes():
    with pytest.raises(ValidationError):
        select_info_set(6, 2)
    with pytest.raises(ValidationError):
        select_info_set(8, 9)
    with pytest.raises(ValidationError):
        BhattacharyyaBEC(1.0)


def test_generator_submatrix_rows(code168):
    G = kron_generator(4)
    for row, idx in zip(code168.G_A, code168.info_set):
        assert np.array_equal(row, G[idx - 1])


def test_toy_84_info_set_from_bhattacharyya(code84):
    # the worked re-encoding example must be reproducible by some 4-subset;
    # brute force confirms which subsets do it
    G = kron_generator(3)
    target = [0, 1, 0, 1, 0, 1, 0, 1]
    hits = [A for A in itertools.combinations(range(8), 4)
            if ((np.array([0, 0, 1, 1]) @ G[list(A)]) % 2).tolist() == target]
    assert (3, 5, 6, 7) in hits
    assert encode([0, 0, 1, 1], code84).tolist() == target


def test_encode_examples(code84, code168):
    assert encode(np.zeros(4, dtype=np.uint8), code84).tolist() == [0] * 8
    # the info position mapping to row 16 is the last one
    u = np.zeros(8, dtype=np.uint8)
    u[code168.info_set.index(16)] = 1
    assert encode(u, code168).tolist() == [1] * 16


def test_encode_length_mismatch(code84):
    with pytest.raises(ValidationError):
        encode([0, 1, 1], code84)
    with pytest.raises(ValidationError):
        encode([0, 1, 2, 0], code84)


@pytest.mark.parametrize("code_name", ["code84", "code168"])
def test_encode_linearity_exhaustive(code_name, request):
    code = request.getfixturevalue(code_name)
    msgs = code.messages
    cw = code.codewords
    ints = np.arange(len(msgs))
    for a in range(len(msgs)):
        summed = msgs[a] ^ msgs
        np.testing.assert_array_equal(encode(summed, code), cw[a] ^ cw[ints])


def test_message_int_round_trip():
    ints = np.arange(256)
    bits = int_to_bits(ints, 8)
    assert bits[1].tolist() == [0, 0, 0, 0, 0, 0, 0, 1]
    np.testing.assert_array_equal(bits_to_int(bits), ints)


def test_hamming_distance():
    assert hamming_distance([0, 0, 0, 0], [0, 0, 0, 0]) == 0
    assert hamming_distance([0, 1, 0, 1], [1, 1, 1, 1]) == 2
    a = np.array([0, 1, 1, 0, 1, 0, 0, 1])
    assert hamming_distance(a, 1 - a) == 8
    with pytest.raises(ValidationError):
        hamming_distance([0, 1], [0, 1, 1])


def _pairwise_min_distance(code):
    cw = code.codewords.astype(int)
    d = (cw[:, None, :] != cw[None, :, :]).sum(-1)
    d[np.eye(len(cw), dtype=bool)] = code.N + 1
    return int(d.min())


def test_min_distance_examples(code84):
    assert min_distance(code84) == 4
    assert min_distance(CodeSpec.build(1, 2)) == 1
    assert min_distance(CodeSpec.build(1, 1)) == 2


@pytest.mark.parametrize("n,K", [(2, 1), (2, 2), (2, 3), (3, 4), (3, 6), (4, 8), (4, 5)])
def test_min_distance_matches_pairwise_oracle(n, K):
    code = CodeSpec.build(n, K)
    assert min_distance(code) == _pairwise_min_distance(code)


def test_min_distance_16_8_both_info_sets(code168, code168_nr):
    assert min_distance(code168) == _pairwise_min_distance(code168) == 4
    assert min_distance(code168_nr) == _pairwise_min_distance(code168_nr) == 4


def test_enumeration_limit():
    code = CodeSpec(5, 21, tuple(range(12, 33)))
    with pytest.raises(ConfigurationError):
        min_distance(code)


@pytest.mark.parametrize("code_name", ["code84", "code168", "code168_nr"])
def test_hamming_balls_disjoint(code_name, request):
    code = request.getfixturevalue(code_name)
    r = decoding_radius(code)
    words = all_words(code.N).astype(np.int16)
    cw = code.codewords.astype(np.int16)
    dist = (code.N - (1 - 2 * words) @ (1 - 2 * cw).T) // 2
    # every word lies in at most one ball
    assert (dist <= r).sum(axis=1).max() == 1


def test_bdd_exact_codeword(code84):
    for m, c in zip(code84.messages, code84.codewords):
        np.testing.assert_array_equal(bounded_distance_decode(c, code84), m)


def test_bdd_single_flip_8_4(code84):
    assert decoding_radius(code84) == 1
    for m, c in zip(code84.messages, code84.codewords):
        for i in range(8):
            y = c.copy()
            y[i] ^= 1
            np.testing.assert_array_equal(bounded_distance_decode(y, code84), m)


def test_bdd_error_branch_8_4(code84):
    words = all_words(8)
    cw = code84.codewords
    far = [w for w in words if min(hamming_distance(w, c) for c in cw) >= 2]
    assert far, "enumeration must find a word outside every ball"
    for w in far:
        assert bounded_distance_decode(w, code84) is None


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 1), min_size=16, max_size=16))
def test_bdd_never_returns_far_codeword(bits):
    code = CodeSpec.build(4, 8)
    y = np.array(bits, dtype=np.uint8)
    out = bounded_distance_decode(y, code)
    if out is not None:
        assert hamming_distance(encode(out, code), y) <= decoding_radius(code)


def test_bdd_batch_matches_single(code84):
    words = all_words(8)
    msgs, ok = bounded_distance_decode_batch(words, code84)
    for w, m, good in zip(words, msgs, ok):
        single = bounded_distance_decode(w, code84)
        assert (single is not None) == bool(good)
        if good:
            np.testing.assert_array_equal(single, m)


def test_code_from_config_variants():
    c = code_from_config({"n": 3, "K": 4, "info_set": {"method": "bhattacharyya", "p0": 0.5}})
    assert c.info_set == (4, 6, 7, 8)
    c = code_from_config({"n": 3, "K": 4, "info_set": {"method": "explicit", "indices": [5, 6, 7, 8]}})
    assert c.info_set == (5, 6, 7, 8)
    with pytest.raises(ValidationError):
        code_from_config({"n": 3, "K": 4, "info_set": {"method": "magic"}})


def test_nr_reliability_order():
    order = nr_reliability_order(128)
    assert sorted(order) == list(range(1, 129))
    assert nr_reliability_order(16) == [1, 2, 3, 5, 9, 4, 6, 10, 7, 11, 13, 8, 12, 14, 15, 16]
    assert nr_info_set(16, 8).indices == (7, 8, 11, 12, 13, 14, 15, 16)
    with pytest.raises(ConfigurationError):
        nr_reliability_order(256)


def test_codespec_dict_round_trip(code168):
    assert CodeSpec.from_dict(code168.to_dict()) == code168
