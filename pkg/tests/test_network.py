from functools import reduce

import numpy as np
import pytest

from pillartrack.network import TrackerModel
from pillartrack.pillars import GridSpec, PillarSet
from pillartrack.autodiff import Tensor


def _model(**kw):
    defaults = dict(feature_dim=8, num_stages=3, seed=0,
                    grid=GridSpec(cell=1.0, x_range=(0.0, 8.0), y_range=(0.0, 8.0)))
    defaults.update(kw)
    return TrackerModel(**defaults)


def _pillar_set(model, m, seed):
    rng = np.random.default_rng(seed)
    cells = rng.permutation(model.grid.nx * model.grid.ny)[:m]
    coords = np.stack([cells % model.grid.nx, cells // model.grid.nx], axis=1)
    feats = Tensor(rng.normal(size=(m, model.feature_dim)))
    return PillarSet(coords=coords, centers_xy=model.grid.cell_center(coords),
                     features=feats, grid=model.grid)


def test_single_stage_loc_input_is_two_term_sum():
    model = _model(num_stages=1)
    tpl = _pillar_set(model, 5, 1)
    srch = _pillar_set(model, 7, 2)
    out = model.forward(tpl, srch)
    assert len(out.search_per_stage) == 1
    expected = srch.features.data + out.search_per_stage[0].data
    assert np.array_equal(out.search_loc_input.data, expected)


def test_zero_projections_give_zero_stages_and_identity_loc_input():
    model = _model()
    for st in model.stages:
        for p in (st.sa_q, st.sa_k, st.sa_v, st.ca_q, st.ca_k, st.ca_v):
            p.data[...] = 0.0
    tpl = _pillar_set(model, 4, 3)
    srch = _pillar_set(model, 6, 4)
    out = model.forward(tpl, srch)
    for s in out.search_per_stage:
        # zero value projections make each attention output exactly zero
        np.testing.assert_array_equal(s.data, np.zeros_like(s.data))
    np.testing.assert_array_equal(out.search_loc_input.data, srch.features.data)


def test_dense_sum_bookkeeping_exact():
    model = _model(num_stages=3)
    tpl = _pillar_set(model, 5, 5)
    srch = _pillar_set(model, 9, 6)
    out = model.forward(tpl, srch)
    terms = [srch.features.data] + [s.data for s in out.search_per_stage]
    for i, recorded in enumerate(out.search_inputs_per_stage):
        expected = reduce(np.add, terms[:i + 1])
        assert np.array_equal(recorded.data, expected)
    assert np.array_equal(out.search_loc_input.data, reduce(np.add, terms))


def test_template_stages_ignore_search_content():
    model = _model()
    tpl = _pillar_set(model, 6, 7)
    srch_a = _pillar_set(model, 8, 8)
    srch_b = _pillar_set(model, 8, 9)
    srch_b.features = Tensor(np.zeros_like(srch_b.features.data))
    out_a = model.forward(tpl, srch_a)
    out_b = model.forward(tpl, srch_b)
    for ta, tb in zip(out_a.template_per_stage, out_b.template_per_stage):
        assert np.array_equal(ta.data, tb.data)


def test_bidirectional_fusion_changes_template():
    model = _model(bidirectional=True)
    tpl = _pillar_set(model, 6, 10)
    srch = _pillar_set(model, 8, 11)
    out = model.forward(tpl, srch)
    uni = _model(bidirectional=False)
    # copy shared weights so only the reverse fusion differs
    by_name = {p.name: p for p in model.parameters()}
    for p in uni.parameters():
        p.data[...] = by_name[p.name].data
    out_uni = uni.forward(tpl, srch)
    assert not np.array_equal(out.template_per_stage[0].data,
                              out_uni.template_per_stage[0].data)


def test_self_attention_weights_shared_by_identity_and_gradient():
    model = _model(num_stages=1)
    tpl = _pillar_set(model, 5, 12)
    srch = _pillar_set(model, 7, 13)
    st = model.stages[0]
    out = model.forward(tpl, srch)
    out.template_per_stage[0].sum().backward()
    grad_template_only = st.sa_q.grad.copy()
    model.zero_grad()
    (out.template_per_stage[0].sum() + out.search_per_stage[0].sum()).backward()
    # both branches accumulate into the same parameter object
    assert st.sa_q.grad.shape == grad_template_only.shape
    assert not np.array_equal(st.sa_q.grad, grad_template_only)


def test_single_correlation_only_last_stage_crosses():
    model = _model(multi_correlation=False)
    tpl = _pillar_set(model, 5, 14)
    srch = _pillar_set(model, 7, 15)
    out = model.forward(tpl, srch)
    # stages before the last ignore the template: changing it must not
    # change their outputs
    tpl2 = _pillar_set(model, 5, 99)
    out2 = model.forward(tpl2, srch)
    for a, b in zip(out.search_per_stage[:-1], out2.search_per_stage[:-1]):
        assert np.array_equal(a.data, b.data)
    assert not np.array_equal(out.search_per_stage[-1].data,
                              out2.search_per_stage[-1].data)


def test_no_dense_chains_stages():
    model = _model(dense_stages=False)
    tpl = _pillar_set(model, 5, 16)
    srch = _pillar_set(model, 7, 17)
    out = model.forward(tpl, srch)
    for i, recorded in enumerate(out.search_inputs_per_stage):
        prev = srch.features if i == 0 else out.search_per_stage[i - 1]
        assert recorded is prev
    assert out.search_loc_input is out.search_per_stage[-1]


def test_stage_count_validation():
    with pytest.raises(ValueError):
        _model(num_stages=0)


def test_parameter_names_unique_and_counts():
    model = _model(num_stages=2)
    names = [p.name for p in model.parameters()]
    assert len(names) == len(set(names))
    model_bi = _model(num_stages=2, bidirectional=True)
    assert len(model_bi.parameters()) == len(names) + 2 * 3
