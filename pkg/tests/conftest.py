import numpy as np
import pytest

from xbarbnn.bincore import BinaryTensor


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_bits(rng, n) -> BinaryTensor:
    return BinaryTensor.from_bits(rng.integers(0, 2, n, dtype=np.uint8))


def signed_dot_oracle(a: BinaryTensor, b: BinaryTensor) -> int:
    """Independent reference: per-element product of the signed values."""
    return int(sum(int(x) * int(y) for x, y in zip(a.signed().ravel(), b.signed().ravel())))
