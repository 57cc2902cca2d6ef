import itertools

import numpy as np
import pytest

from polarlab.codebook import CodeSpec, code_from_config


@pytest.fixture(scope="session")
def code84():
    return CodeSpec.build(3, 4)


@pytest.fixture(scope="session")
def code168():
    return CodeSpec.build(4, 8)


@pytest.fixture(scope="session")
def code168_nr():
    return code_from_config({"n": 4, "K": 8, "info_set": {"method": "nr"}})


def all_words(N):
    return np.array(list(itertools.product((0, 1), repeat=N)), dtype=np.uint8)
