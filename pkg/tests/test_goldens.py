"""Frozen eval-mode outputs for fixed seeds (regression pins of this build)."""

import numpy as np

from pillartrack.attention import StageParams, positional_encoding
from pillartrack.autodiff import Tensor
from pillartrack.localization import LocalizationParams, run_heads, scatter_to_bev
from pillartrack.pillars import GridSpec, PillarEncoder, embed_points

EMBED_GOLDEN = np.array([
    [0.08060606965205826, 0.0, 0.2986759553865673, 0.22000939406569361,
     1.030082875040936, 0.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, 0.2626303608801187, 0.15972810764752143, 0.0, 0.0, 0.0],
    [0.0, 0.6989697252907298, 0.0, 0.3052513276945439, 0.0,
     0.19327813808438812, 0.6737965735727851, 0.01713002813047769],
])

POSENC_GOLDEN = np.array([
    [-0.09164821207049904, -0.07320838396673196, 0.01150640033067888,
     -0.01155654952273431, -0.07876191166814982, 0.01816329309910252,
     -0.07332306607715283, -0.13190155640093204],
    [-0.34127029397683306, -0.23767271167830167, 0.3008940414786771,
     -0.08102366665462217, -0.15795949845124496, -0.8559058612706368,
     -0.01661469378609554, -0.3070827869973801],
])

HEADS_HEAT_ROW1_GOLDEN = np.array([
    0.09512708688869098, 0.08981438531417756, 0.08254211308324605,
    0.08400811320654433,
])

HEADS_ROT_ROW0_GOLDEN = np.array([
    0.03612056162280128, 0.03612056162280128, 0.01181203993230313, 0.0,
])


def test_embed_eval_mode_golden():
    pnet = PillarEncoder.create(8, np.random.default_rng(2024))
    decorated = np.linspace(-1.0, 1.0, 27).reshape(3, 9)
    out = embed_points(decorated, pnet, training=False)
    np.testing.assert_allclose(out.data, EMBED_GOLDEN, rtol=1e-12, atol=1e-15)


def test_positional_encoding_golden():
    stage = StageParams.create(0, 8, np.random.default_rng(7))
    centers = np.array([[0.15, -0.45, 0.0], [2.25, 1.05, 0.0]])
    out = positional_encoding(centers, stage)
    np.testing.assert_allclose(out.data, POSENC_GOLDEN, rtol=1e-12, atol=1e-15)


def test_heads_golden():
    grid = GridSpec(cell=1.0, x_range=(0.0, 4.0), y_range=(0.0, 4.0))
    loc = LocalizationParams.create(4, np.random.default_rng(99))
    feats = Tensor(np.linspace(-0.5, 0.5, 8).reshape(2, 4))
    coords = np.array([[1, 2], [3, 0]])
    heads = run_heads(scatter_to_bev(feats, coords, grid), loc)
    np.testing.assert_allclose(heads.center_heatmap.data[0, 1],
                               HEADS_HEAT_ROW1_GOLDEN, rtol=1e-12, atol=1e-15)
    np.testing.assert_allclose(heads.offset_rot.data[2, 0],
                               HEADS_ROT_ROW0_GOLDEN, rtol=1e-12, atol=1e-15)
