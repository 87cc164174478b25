import numpy as np
import pytest
from hypothesis import settings

from residcheck import JointCovariance

# Property tests draw their numpy seeds through hypothesis; derandomizing
# keeps every run of the suite byte-for-byte repeatable.
settings.register_profile("deterministic", derandomize=True)
settings.load_profile("deterministic")


def random_joint_covariance(seed: int, p: int, n: int = 500) -> JointCovariance:
    """Well-conditioned random covariance with a strictly positive Schur complement."""
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((1 + p, 1 + p))
    full = a @ a.T / (1 + p) + 0.1 * np.eye(1 + p)
    return JointCovariance(
        sigma_c_sq=full[0, 0],
        sigma_c_gamma=full[0, 1:],
        sigma_gamma_gamma=full[1:, 1:],
        n=n,
    )


@pytest.fixture
def scalar_sigma() -> JointCovariance:
    return JointCovariance(1.0, np.array([0.5]), np.eye(1), 100)
