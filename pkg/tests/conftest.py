import numpy as np
import pytest

from fcgraph.connectivity import pearson_full
from fcgraph.graph_build import FeatureConfig, build_static
from fcgraph.ingest import SyntheticSpec, generate_synthetic
from fcgraph.preprocess import normalize


@pytest.fixture(scope="session")
def small_corpus():
    """60 subjects, 12 ROIs, strong planted blocks; shared across tests."""
    spec = SyntheticSpec(
        n_subjects=60,
        n_rois=12,
        n_timepoints=80,
        n_classes=2,
        block_size=4,
        within_block_corr=0.8,
        noise_sd=1.0,
        seed=21,
    )
    return generate_synthetic(spec)


@pytest.fixture(scope="session")
def small_clean(small_corpus):
    return [normalize(ts) for ts in small_corpus]


@pytest.fixture(scope="session")
def small_graphs(small_clean):
    feat = FeatureConfig("corr")
    return [build_static(c, pearson_full(c), feat, 20.0) for c in small_clean]


def random_correlation(rng: np.random.Generator, n: int, t: int = 40) -> np.ndarray:
    """Correlation matrix of random data: continuous values, valid by construction."""
    data = rng.standard_normal((t, n))
    z = (data - data.mean(0)) / data.std(0)
    c = (z.T @ z) / t
    c = (c + c.T) / 2
    np.fill_diagonal(c, 1.0)
    return c
