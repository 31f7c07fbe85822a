import numpy as np
import pytest

from neuperm.fixtures import ss_host, toy_cnn, toy_gqa, toy_mlp


@pytest.fixture(scope="session")
def mlp_bundle():
    return toy_mlp()


@pytest.fixture(scope="session")
def cnn_bundle():
    return toy_cnn()


@pytest.fixture(scope="session")
def gqa_bundle():
    return toy_gqa()


@pytest.fixture(scope="session")
def small_host_bundle():
    """49k-parameter dense host: large enough for every embedding method."""
    return ss_host(width=128, layers=3)


@pytest.fixture(scope="session")
def all_bundles(mlp_bundle, cnn_bundle, gqa_bundle):
    return {"mlp": mlp_bundle, "cnn": cnn_bundle, "gqa": gqa_bundle}


def random_payload(seed: int, nbytes: int) -> bytes:
    """Benign random payload bytes derived from a frozen seed."""
    from neuperm.rng import SeededRng

    words = SeededRng(seed).next_block((nbytes + 7) // 8)
    return bytes(words.view(np.uint8)[:nbytes])
