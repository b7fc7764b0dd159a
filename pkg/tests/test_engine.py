import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sonni.engine import (CoverageError, DepthExceeded, DigestMismatch, Engine,
                          KeyNotInKeyset, LengthMismatch, NoiseModel, combine, decode_slots,
                          encode_slots, keygen, partial_dec)

C, P = 1, 2


@pytest.fixture
def keys():
    return keygen(C, 11), keygen(P, 12)


def exact(n=4, seed=0):
    return Engine(n, NoiseModel(0.0, 0.0), seed)


def test_encrypt_zero_noise_is_exact(keys):
    ct = exact().encrypt([1, 2, 3, 4], C)
    assert ct.payload.tolist() == [1, 2, 3, 4]
    assert ct.keyset == {C}
    assert ct.noise_bound == 0.0


def test_encrypt_zero_vector_stays_within_eta():
    eng = Engine(8, NoiseModel(1e-3, 0.0), seed=3)
    ct = eng.encrypt(np.zeros(8), C)
    assert np.all(np.abs(ct.payload) <= 1e-3)
    assert ct.noise_bound == 1e-3


def test_encrypt_noise_sampling():
    eng = Engine(16, NoiseModel(1e-9, 0.0), seed=4)
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(1000):
        pt = rng.uniform(-10, 10, 16)
        worst = max(worst, np.max(np.abs(eng.encrypt(pt, C).payload - pt)))
    assert worst <= 1e-9


def test_encrypt_rejects_wrong_length():
    with pytest.raises(LengthMismatch):
        exact().encrypt([1, 2, 3], C)


def test_engine_requires_power_of_two():
    with pytest.raises(ValueError):
        Engine(6)


def test_add_unions_keysets():
    eng = exact(2)
    out = eng.add(eng.encrypt([1, 1], C), eng.encrypt([2, 3], P))
    assert out.payload.tolist() == [3, 4]
    assert out.keyset == {C, P}
    assert out.op_counts.adds == 1


def test_add_plaintext_identity():
    eng = exact()
    ct = eng.encrypt([1.5, -2, 3, 4], C)
    out = eng.add(ct, np.zeros(4))
    assert np.array_equal(out.payload, ct.payload)
    assert out.keyset == {C}


def test_add_negation_cancels_within_two_eta():
    eta = 1e-6
    eng = Engine(8, NoiseModel(eta, 0.0), seed=5)
    rng = np.random.default_rng(1)
    for _ in range(200):
        x = rng.uniform(-10, 10, 8)
        out = eng.add(eng.encrypt(x, C), eng.encrypt(-x, C))
        assert np.all(np.abs(out.payload) <= 2 * eta + 1e-15)
        assert out.noise_bound == pytest.approx(2 * eta)


def test_mult_mask_by_basis_vector():
    eng = exact(2)
    out = eng.mult(eng.encrypt([2, 3], C), [1, 0])
    assert out.payload.tolist() == [2, 0]
    assert out.op_counts.mults == 1


def test_mult_identity():
    eng = exact()
    ct = eng.encrypt([1, 2, 3, 4], C)
    assert np.array_equal(eng.mult(ct, np.ones(4)).payload, ct.payload)


def test_mult_two_keys():
    eng = exact(2)
    out = eng.mult(eng.encrypt([2, 3], C), eng.encrypt([4, 5], P))
    assert out.payload.tolist() == [8, 15]
    assert out.keyset == {C, P}


def test_mult_noise_bound_never_exceeds_scalar_formula():
    eta, sigma = 1e-4, 1e-5
    eng = Engine(8, NoiseModel(eta, sigma), seed=6)
    a = eng.encrypt(np.linspace(-3, 3, 8), C)
    b = eng.encrypt(np.linspace(5, -1, 8), P)
    out = eng.mult(a, b)
    scalar = (a.noise_bound * np.abs(b.payload).max() + b.noise_bound * np.abs(a.payload).max()
              + a.noise_bound * b.noise_bound + sigma)
    assert out.noise_bound <= scalar + 1e-18
    assert out.depth == 1


def test_rotate_matches_documented_example():
    eng = exact()
    assert eng.rotate(eng.encrypt([1, 2, 3, 4], C), 1).payload.tolist() == [2, 3, 4, 1]


def test_rotate_zero_and_inverse():
    eng = exact(8)
    ct = eng.encrypt(np.arange(8.0), C)
    assert np.array_equal(eng.rotate(ct, 0).payload, ct.payload)
    for r in (-9, -3, 1, 5, 17):
        back = eng.rotate(eng.rotate(ct, r), -r)
        assert np.array_equal(back.payload, ct.payload)
        assert back.op_counts.rotations == 2


def test_partial_dec_structure(keys):
    kc, kp = keys
    eng = exact()
    ct = eng.mult(eng.encrypt([1, 2, 3, 4], C), eng.encrypt(np.ones(4), P))
    share = partial_dec(ct, kp.secret)
    assert share.ciphertext_digest == ct.digest
    assert share.removed_key == P
    assert partial_dec(ct, kp.secret).ciphertext_digest == share.ciphertext_digest


def test_partial_dec_wrong_key(keys):
    kc, kp = keys
    ct = exact().encrypt([1, 2, 3, 4], C)
    with pytest.raises(KeyNotInKeyset):
        partial_dec(ct, kp.secret)


def test_combine_two_keys(keys):
    kc, kp = keys
    eng = Engine(4, NoiseModel(1e-6, 1e-7), seed=8)
    v = np.array([0.5, -1.0, 2.0, 3.0])
    ct = eng.mult(eng.encrypt(v, C), eng.encrypt(np.ones(4), P))
    out = combine([partial_dec(ct, kp.secret)], ct, kc.secret)
    assert np.all(np.abs(out - v) <= ct.noise_bound)


def test_combine_single_key(keys):
    kc, _ = keys
    eng = Engine(4, NoiseModel(1e-6, 0.0), seed=9)
    v = np.array([1.0, 2.0, 3.0, 4.0])
    out = combine([], eng.encrypt(v, C), kc.secret)
    assert np.all(np.abs(out - v) <= 1e-6)


def test_combine_coverage_failure(keys):
    kc, kp = keys
    eng = exact()
    ct = eng.add(eng.encrypt([1, 2, 3, 4], C), eng.encrypt(np.zeros(4), P))
    with pytest.raises(CoverageError):
        combine([partial_dec(ct, kp.secret)], ct, None)
    with pytest.raises(CoverageError):
        combine([partial_dec(ct, kp.secret), partial_dec(ct, kp.secret)], ct, kc.secret)


def test_combine_digest_mismatch(keys):
    kc, kp = keys
    eng = exact()
    a = eng.add(eng.encrypt([1, 2, 3, 4], C), eng.encrypt(np.zeros(4), P))
    b = eng.add(a, np.zeros(4))  # same values, fresh randomness tag
    with pytest.raises(DigestMismatch):
        combine([partial_dec(a, kp.secret)], b, kc.secret)


def test_max_depth():
    eng = Engine(4, max_depth=2)
    ct = eng.encrypt(np.ones(4), C)
    ct = eng.mult(eng.mult(ct, ct), ct)
    with pytest.raises(DepthExceeded):
        eng.mult(ct, ct)


def test_slot_encoding_layout():
    raw = encode_slots([1.0, -2.5])
    assert raw[:4] == b"\x02\x00\x00\x00"
    assert raw[4:12] == np.float64(1.0).tobytes()  # little-endian host
    arr, end = decode_slots(raw)
    assert end == len(raw) and arr.tolist() == [1.0, -2.5]


def test_determinism_same_seed():
    def circuit(seed):
        eng = Engine(8, NoiseModel(1e-3, 1e-4), seed)
        a = eng.encrypt(np.arange(8.0), C)
        b = eng.encrypt(np.ones(8), P)
        return eng.rotate(eng.add(eng.mult(a, b), a), 3)

    x, y, z = circuit(1), circuit(1), circuit(2)
    assert x == y and x.digest == y.digest
    assert x.digest != z.digest


slot_values = st.lists(st.floats(-10, 10), min_size=8, max_size=8)


@settings(max_examples=200, deadline=None)
@given(slot_values, slot_values, st.integers(-20, 20), st.integers(0, 2**32 - 1))
def test_homomorphism(a, b, r, seed):
    eng = Engine(8, NoiseModel(1e-6, 1e-7), seed)
    a, b = np.array(a), np.array(b)
    ca, cb = eng.encrypt(a, C), eng.encrypt(b, P)
    for ct, ideal in ((eng.add(ca, cb), a + b), (eng.mult(ca, cb), a * b),
                      (eng.rotate(ca, r), np.roll(a, -r))):
        assert np.all(np.abs(ct.payload - ideal) <= ct.noise + 1e-12)
        assert ct.keyset >= ca.keyset


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.lists(st.sampled_from("amrp"), min_size=1, max_size=20))
def test_noise_bound_soundness_random_circuits(seed, ops):
    eng = Engine(8, NoiseModel(1e-6, 1e-7), seed)
    rng = np.random.default_rng(seed)
    ideal = rng.uniform(-10, 10, 8)
    ct = eng.encrypt(ideal, C)
    prev = ct.noise_bound
    for op in ops:
        other = rng.uniform(-1, 1, 8)
        if op == "a":
            ct, ideal = eng.add(ct, eng.encrypt(other, P)), ideal + other
        elif op == "m":
            ct, ideal = eng.mult(ct, eng.encrypt(other, P)), ideal * other
        elif op == "p":
            ct, ideal = eng.mult(ct, other), ideal * other
        else:
            r = int(rng.integers(-8, 8))
            ct, ideal = eng.rotate(ct, r), np.roll(ideal, -r)
        assert ct.noise_bound >= prev or op in "mp"
        prev = ct.noise_bound
        slack = 1e-12 * (1 + np.abs(ideal))
        assert np.all(np.abs(ct.payload - ideal) <= ct.noise + slack)
