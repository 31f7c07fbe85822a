import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neuperm.archive import ModelArchive
from neuperm.errors import CapacityError
from neuperm.rng import SeededRng, derive_seed
from neuperm.stego import (
    SS_MIN_RATIO,
    ChipPlan,
    _chip_block,
    decode_correlations,
    eligible_names,
    host_size,
    host_vector,
    lsb_embed,
    lsb_extract,
    make_chip_plan,
    parse_ecc,
    payload_matches,
    sample_positions,
    scatter_host,
    sign_embed,
    sign_extract,
    ss_despread_many,
    ss_embed,
    ss_extract,
)
from neuperm.tensor import Tensor, tensor

from conftest import random_payload


# --------------------------------------------------------------- hosts

def test_eligible_names_sorted_and_filtered():
    arch = ModelArchive(
        {
            "b": tensor([1.0]),
            "a": tensor([[1.0, 2.0]]),
            "c": tensor(np.zeros((2, 2), dtype=np.float32)),
        }
    )
    assert eligible_names(arch) == ("a", "b", "c")
    assert eligible_names(arch, min_ndim=2) == ("a", "c")


def test_host_vector_scatter_roundtrip(mlp_bundle):
    archive, _, _ = mlp_bundle
    names = eligible_names(archive)
    vec = host_vector(archive, names)
    assert vec.dtype == np.float32 and vec.size == host_size(archive, names)
    bumped = vec.copy()
    bumped[7] += 1.0
    back = scatter_host(archive, names, bumped)
    assert not back.same_bits(archive)
    restored = scatter_host(archive, names, vec)
    assert restored.same_bits(archive)


def test_scatter_host_keeps_f16_dtype(gqa_bundle):
    archive, _, _ = gqa_bundle
    names = eligible_names(archive)
    back = scatter_host(archive, names, host_vector(archive, names))
    for name in names:
        assert back.tensors[name].dtype == archive.tensors[name].dtype


def test_sample_positions_contract():
    pos = sample_positions(1000, 300, 5)
    assert pos.shape == (300,)
    assert len(set(pos.tolist())) == 300
    assert pos.min() >= 0 and pos.max() < 1000
    assert np.array_equal(pos, sample_positions(1000, 300, 5))
    assert not np.array_equal(pos, sample_positions(1000, 300, 6))
    with pytest.raises(CapacityError):
        sample_positions(10, 11, 0)
    assert sample_positions(5, 0, 1).size == 0


def test_sample_positions_uniformish():
    # draw counts per decile over many seeds: no decile should be starved
    counts = np.zeros(10)
    for seed in range(200):
        pos = sample_positions(1000, 50, seed)
        counts += np.bincount(pos // 100, minlength=10)
    assert counts.min() > 0.7 * counts.mean()


# ----------------------------------------------------------------- lsb

@pytest.mark.parametrize("bpp", [1, 2, 4, 8])
@pytest.mark.parametrize("spec", ["none", "hamming74", "repetition:3"])
def test_lsb_roundtrip(small_host_bundle, bpp, spec):
    archive, _, _ = small_host_bundle
    payload = random_payload(1001, 64)
    ecc = parse_ecc(spec)
    carrier = lsb_embed(archive, payload, bits_per_param=bpp, seed=17, ecc=ecc)
    got = lsb_extract(carrier, len(payload), bits_per_param=bpp, seed=17, ecc=ecc)
    assert got == payload


def test_lsb_perturbation_is_tiny(small_host_bundle):
    archive, _, _ = small_host_bundle
    payload = random_payload(1002, 64)
    carrier = lsb_embed(archive, payload, bits_per_param=2, seed=3)
    for name in archive.tensors:
        a = archive.tensors[name].f32()
        b = carrier.tensors[name].f32()
        # clearing/setting 2 mantissa bits moves a value by < 4 ulp
        ulp = np.spacing(np.abs(a).astype(np.float32))
        assert np.all(np.abs(a - b) <= 4 * ulp), name


def test_lsb_wrong_seed_fails(small_host_bundle):
    archive, _, _ = small_host_bundle
    payload = random_payload(1003, 64)
    carrier = lsb_embed(archive, payload, bits_per_param=1, seed=17)
    assert lsb_extract(carrier, len(payload), bits_per_param=1, seed=18) != payload


def test_lsb_untouched_outside_positions(small_host_bundle):
    archive, _, _ = small_host_bundle
    payload = random_payload(1004, 8)
    carrier = lsb_embed(archive, payload, bits_per_param=1, seed=9)
    names = eligible_names(archive)
    a = host_vector(archive, names).view(np.uint32)
    b = host_vector(carrier, names).view(np.uint32)
    changed = int((a != b).sum())
    assert changed <= 64  # at most one slot per coded bit


def test_lsb_capacity_error(mlp_bundle):
    archive, _, _ = mlp_bundle  # 450 params
    with pytest.raises(CapacityError):
        lsb_embed(archive, random_payload(1, 125), bits_per_param=1, seed=0)


def test_lsb_bpp_validation(mlp_bundle):
    archive, _, _ = mlp_bundle
    with pytest.raises(ValueError):
        lsb_embed(archive, b"x", bits_per_param=0, seed=0)
    with pytest.raises(ValueError):
        lsb_embed(archive, b"x", bits_per_param=9, seed=0)


# ---------------------------------------------------------------- sign

@pytest.mark.parametrize("spec", ["none", "repetition:3"])
def test_sign_roundtrip(small_host_bundle, spec):
    archive, _, _ = small_host_bundle
    payload = random_payload(1005, 32)
    ecc = parse_ecc(spec)
    carrier = sign_embed(archive, payload, seed=4, ecc=ecc)
    assert sign_extract(carrier, len(payload), seed=4, ecc=ecc) == payload


def test_sign_changes_only_signs(small_host_bundle):
    archive, _, _ = small_host_bundle
    payload = random_payload(1006, 32)
    carrier = sign_embed(archive, payload, seed=4)
    for name in archive.tensors:
        assert np.array_equal(
            np.abs(archive.tensors[name].f32()), np.abs(carrier.tensors[name].f32())
        ), name


def test_sign_wrong_seed_fails(small_host_bundle):
    archive, _, _ = small_host_bundle
    payload = random_payload(1007, 32)
    carrier = sign_embed(archive, payload, seed=4)
    assert sign_extract(carrier, len(payload), seed=5) != payload


# ------------------------------------------------------ spread spectrum

def _plan(archive, payload, gamma=0.02, seed=40, spec="repetition:3"):
    return make_chip_plan(archive, payload, gamma=gamma, seed=seed, ecc=parse_ecc(spec))


def test_chip_block_properties(small_host_bundle):
    archive, _, _ = small_host_bundle
    plan = _plan(archive, random_payload(1010, 16))
    block = _chip_block(plan, 0, 4096, plan.coded_bits)
    assert block.shape == (plan.coded_bits, 4096)
    assert set(np.unique(block).tolist()) == {-1.0, 1.0}
    assert abs(block.mean()) < 0.01  # balanced
    again = _chip_block(plan, 0, 4096, plan.coded_bits)
    assert np.array_equal(block, again)
    # different rows decorrelate
    r = block[0] @ block[1] / block.shape[1]
    assert abs(r) < 0.1


def test_ss_roundtrip_small_host(small_host_bundle):
    archive, _, _ = small_host_bundle
    payload = random_payload(1011, 16)
    plan = _plan(archive, payload)
    carrier = ss_embed(archive, payload, plan)
    got, reading = ss_extract(carrier, plan)
    assert got == payload
    assert payload_matches(plan, got)
    assert reading.snr_db > 0
    assert reading.coded_bits == plan.coded_bits


def test_ss_perturbation_magnitude(small_host_bundle):
    """Each host slot accumulates gamma * (sum of K +-1 chips): the deltas sit
    on the gamma lattice with standard deviation ~ gamma * sqrt(K)."""
    archive, _, _ = small_host_bundle
    payload = random_payload(1012, 16)
    gamma = 0.02
    plan = _plan(archive, payload, gamma=gamma)
    carrier = ss_embed(archive, payload, plan)
    names = eligible_names(archive, min_ndim=2)
    delta = (
        host_vector(carrier, names).astype(np.float64)
        - host_vector(archive, names).astype(np.float64)
    )
    k = plan.coded_bits
    assert np.max(np.abs(delta)) <= k * gamma + 1e-6
    steps = delta / gamma
    assert np.max(np.abs(steps - np.round(steps))) < 2e-2  # on the lattice (f32 noise)
    assert abs(delta.std() - gamma * math.sqrt(k)) < 0.25 * gamma * math.sqrt(k)


def test_ss_never_embedded_negative_snr(small_host_bundle):
    archive, _, _ = small_host_bundle
    plan = _plan(archive, random_payload(1013, 16))
    got, reading = ss_extract(archive, plan)
    assert got != plan and reading.snr_db < 0


def test_ss_capacity_error(mlp_bundle):
    archive, _, _ = mlp_bundle  # 450 params, none 2-D big enough
    with pytest.raises(CapacityError):
        _plan(archive, random_payload(1014, 16))


def test_ss_capacity_ratio_boundary(small_host_bundle):
    archive, _, _ = small_host_bundle  # 49152 host params
    n = host_size(archive, eligible_names(archive, min_ndim=2))
    max_coded = n // SS_MIN_RATIO  # 768
    ok_bytes = max_coded // 3 // 8  # exactly at the ratio with repetition:3
    _plan(archive, random_payload(1, ok_bytes))
    with pytest.raises(CapacityError):
        _plan(archive, random_payload(1, ok_bytes + 1))


def test_ss_embed_rejects_other_payload(small_host_bundle):
    archive, _, _ = small_host_bundle
    payload = random_payload(1015, 16)
    plan = _plan(archive, payload)
    with pytest.raises(ValueError, match="digest"):
        ss_embed(archive, random_payload(1016, 16), plan)


def test_ss_noise_floor_matches_theory(small_host_bundle):
    """Correlations of a clean host against the chips have the predicted
    variance (1 + gamma^2 (K-1)) / N with gamma = 0 here, i.e. sigma^2 = 1/N."""
    archive, _, _ = small_host_bundle
    plan = _plan(archive, random_payload(1017, 24))
    names = plan.eligible
    host = host_vector(archive, names)[None, :]
    y = ss_despread_many(host, plan)[0]
    sigma2 = float(np.var(y))
    want = 1.0 / plan.host_n
    assert 0.8 * want < sigma2 < 1.2 * want


def test_ss_despread_many_matches_single(small_host_bundle):
    archive, _, _ = small_host_bundle
    payload = random_payload(1018, 16)
    plan = _plan(archive, payload)
    carrier = ss_embed(archive, payload, plan)
    names = plan.eligible
    hosts = np.stack([host_vector(carrier, names), host_vector(archive, names)])
    ys = ss_despread_many(hosts, plan)
    got0, r0 = decode_correlations(ys[0], plan)
    got1, r1 = decode_correlations(ys[1], plan)
    assert got0 == payload and r0.snr_db > 0
    assert got1 != payload and r1.snr_db < 0
    # single-archive path must agree exactly
    direct, rd = ss_extract(carrier, plan)
    assert direct == got0 and rd.snr_db == pytest.approx(r0.snr_db)


def test_chip_plan_dict_roundtrip(small_host_bundle):
    archive, _, _ = small_host_bundle
    plan = _plan(archive, random_payload(1019, 16))
    back = ChipPlan.from_dict(plan.to_dict())
    assert back == plan
    assert back.ecc.spec == plan.ecc_spec


def test_snr_guard_on_constant_correlations():
    plan_like = ChipPlan(
        seed=1, gamma=0.5, payload_bits=8, ecc_spec="none",
        eligible=("w",), host_n=4096,
        payload_sha256="0" * 64,
    )
    y = np.full(8, 0.25)
    _, reading = decode_correlations(y, plan_like)
    assert math.isinf(reading.snr_db) and reading.snr_db > 0


@given(st.integers(1, 28), st.integers(0, 2**32))
@settings(max_examples=20, deadline=None)
def test_ss_roundtrip_property(small_host_bundle, nbytes, seed):
    archive, _, _ = small_host_bundle
    payload = random_payload(seed, nbytes)
    plan = _plan(archive, payload, seed=seed)
    carrier = ss_embed(archive, payload, plan)
    got, _ = ss_extract(carrier, plan)
    assert got == payload
