import numpy as np
import pytest
import torch

torch.set_num_threads(1)


@pytest.fixture
def sphere_map():
    """Centered analytic sphere on a 65x65 grid (integer center, radius 20)."""
    from nminpaint.synthdata import render_sphere_normals
    return render_sphere_normals(65, 65, (32, 32), 20)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
