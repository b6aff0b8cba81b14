"""Model layer: ball volumes, exclusion matrices, approximability conditions."""

import math

import numpy as np
import pytest

import hardgrid as hg
from hardgrid import rng
from hardgrid.model import ConfigError, model_from_config


def test_ball_volume_examples():
    assert hg.ball_volume(1, 0.5) == pytest.approx(1.0, rel=1e-14)
    assert hg.ball_volume(2, 1.0) == pytest.approx(math.pi, rel=1e-14)
    assert hg.ball_volume(3, 1.0) == pytest.approx(4.0 * math.pi / 3.0, rel=1e-14)
    assert hg.ball_volume(2, 0.0) == 0.0


def test_volume_exclusion_examples():
    m = hg.ModelSpec.hard_sphere(1, 1.0, 0.25, 1.0)
    theta = hg.volume_exclusion_matrix(m).entries
    assert theta[0, 0] == pytest.approx(hg.ball_volume(1, 0.5), rel=1e-15)

    wr = hg.ModelSpec.widom_rowlinson(2, 1.0, [1.0, 1.0], [1.0, 1.0])
    theta = hg.volume_exclusion_matrix(wr).entries
    assert theta[0, 0] == 0.0 and theta[1, 1] == 0.0
    assert theta[0, 1] == pytest.approx(4.0 * math.pi, rel=1e-14)

    free = hg.ModelSpec.hard_sphere(2, 1.0, 0.0, 1.0)
    assert not hg.volume_exclusion_matrix(free).entries.any()


def test_theta_symmetry_and_monotonicity():
    stream = rng.Stream(42)
    for _ in range(50):
        q = 1 + stream.below(4)
        d = 1 + stream.below(3)
        a = stream.uniforms(q * q).reshape(q, q)
        lam = np.round((a + a.T) / 2, 6)
        m1 = hg.ModelSpec(hg.Region(d, 1.0), hg.InteractionMatrix(lam),
                          hg.Fugacities(np.ones(q)))
        t1 = hg.volume_exclusion_matrix(m1).entries
        assert np.array_equal(t1, t1.T)
        bigger = lam + 0.25
        m2 = hg.ModelSpec(hg.Region(d, 1.0), hg.InteractionMatrix(bigger),
                          hg.Fugacities(np.ones(q)))
        t2 = hg.volume_exclusion_matrix(m2).entries
        assert np.all(t2 >= t1)


def test_log_z_upper_bound_examples():
    assert hg.log_z_upper_bound(
        hg.ModelSpec.hard_sphere(1, 2.0, 0.1, 1.0)) == pytest.approx(2.0)
    m = hg.ModelSpec.widom_rowlinson(2, 1.0, [0.1, 0.1], [1.0, 0.5])
    assert hg.log_z_upper_bound(m) == pytest.approx(1.5)
    m0 = hg.ModelSpec.widom_rowlinson(2, 1.0, [0.1, 0.1], [0.0, 0.0])
    assert hg.log_z_upper_bound(m0) == 0.0


def test_uniform_condition_examples():
    sat = hg.check_uniform_condition(hg.ModelSpec.hard_sphere(1, 2.0, 0.25, 2.0))
    assert sat.satisfied and sat.lhs == 2.0
    assert sat.rhs == pytest.approx(math.e, rel=1e-12)

    unsat = hg.check_uniform_condition(hg.ModelSpec.hard_sphere(1, 2.0, 0.25, 3.0))
    assert not unsat.satisfied

    # two-type case: threshold e / ((q-1) * 2^d * ball(r))
    wr = hg.ModelSpec.widom_rowlinson(1, 2.0, [0.25, 0.25], [2.0, 2.0])
    rep = hg.check_uniform_condition(wr)
    assert rep.rhs == pytest.approx(math.e / 1.0, rel=1e-12)
    assert rep.satisfied  # 2.0 < e

    with pytest.raises(ValueError):
        hg.check_uniform_condition(hg.ModelSpec.hard_sphere(1, 2.0, 0.0, 1.0))


def test_uniform_condition_rhs_exact_single_type():
    # rhs must equal e / (2^d vol(B_r)) bit-for-bit in the hard-sphere case
    for d in (1, 2, 3):
        for r in (0.2, 0.25, 0.3, 0.77):
            m = hg.ModelSpec.hard_sphere(d, 2.0, r, 0.5)
            rep = hg.check_uniform_condition(m)
            assert rep.rhs == math.e / (2 ** d * hg.ball_volume(d, r))


def test_clique_condition_examples():
    feas = hg.check_clique_condition(
        hg.ModelSpec.widom_rowlinson(1, 2.0, [0.25, 0.25], [4.0, 0.1]))
    assert feas.status == "feasible"
    infeas = hg.check_clique_condition(
        hg.ModelSpec.widom_rowlinson(1, 2.0, [0.25, 0.25], [2.0, 2.0]))
    assert infeas.status == "infeasible"
    trivial = hg.check_clique_condition(hg.ModelSpec.hard_sphere(1, 2.0, 0.0, 3.0))
    assert trivial.status == "feasible"
    assert np.all(trivial.f == 1.0)


def test_clique_condition_witness_is_strict():
    stream = rng.Stream(7)
    found = 0
    for _ in range(200):
        q = 1 + stream.below(3)
        d = 1 + stream.below(2)
        a = stream.uniforms(q * q).reshape(q, q)
        lam_entries = np.round((a + a.T) / 2, 4)
        fug = stream.uniforms(q) * 0.8
        m = hg.ModelSpec(hg.Region(d, 1.5), hg.InteractionMatrix(lam_entries),
                         hg.Fugacities(fug))
        res = hg.check_clique_condition(m)
        if res.status != "feasible":
            continue
        found += 1
        theta = hg.volume_exclusion_matrix(m).entries
        mat = theta * m.fugacities.values[None, :]
        assert np.all(res.f > mat @ res.f)
    assert found >= 20  # the sweep must actually exercise witnesses


def test_clique_condition_boundary_flip():
    # q = 2 unbalanced: feasibility flips at lambda1*lambda2 = 1/(4^d vol(B_r)^2)
    for d in (1, 2):
        r = 0.25
        crit = 1.0 / (4 ** d * hg.ball_volume(d, r) ** 2)
        for shift, expect in ((1 - 1e-6, "feasible"), (1 + 1e-6, "infeasible")):
            lam1 = 3.0
            lam2 = crit * shift / lam1
            m = hg.ModelSpec.widom_rowlinson(d, 2.0, [r, r], [lam1, lam2])
            assert hg.check_clique_condition(m).status == expect, (d, shift)


def test_presets():
    hs = hg.ModelSpec.hard_sphere(3, 2.0, 0.1, 0.7)
    assert hs.interaction.entries[0, 0] == 0.2
    wr = hg.ModelSpec.widom_rowlinson(2, 1.0, [0.1, 0.3], [1.0, 2.0])
    assert wr.interaction.entries[0, 1] == pytest.approx(0.4)
    assert wr.interaction.entries[0, 0] == 0.0
    assert wr.interaction.lambda_min() == pytest.approx(0.4)
    free = hg.InteractionMatrix(np.zeros((2, 2)))
    assert free.lambda_min() == math.inf


def test_model_spec_validation():
    with pytest.raises(ValueError):
        hg.Region(0, 1.0)
    with pytest.raises(ValueError):
        hg.Region(1, 0.0)
    with pytest.raises(ValueError):
        hg.InteractionMatrix(np.array([[0.0, 1.0], [2.0, 0.0]]))  # asymmetric
    with pytest.raises(ValueError):
        hg.ModelSpec(hg.Region(1, 1.0), hg.InteractionMatrix(np.zeros((2, 2))),
                     hg.Fugacities(np.ones(3)))


def test_config_errors_name_fields(tmp_path):
    good = {
        "dimension": 1, "side_length": 2.0,
        "types": [{"name": "a", "fugacity": 1.0}],
        "interaction": {"preset": "hard_sphere", "radius": 0.25},
    }
    spec = model_from_config(good)
    assert spec.q == 1 and spec.volume() == 2.0

    bad_cases = [
        ({**good, "dimension": "x"}, "dimension"),
        ({k: v for k, v in good.items() if k != "side_length"}, "side_length"),
        ({**good, "types": [{"name": "a"}]}, "types[0].fugacity"),
        ({**good, "types": [{"name": "a", "fugacity": -1.0}]},
         "types[0].fugacity"),
        ({**good, "interaction": {"preset": "nope"}}, "interaction.preset"),
        ({**good, "interaction": {"preset": "widom_rowlinson",
                                  "radii": [0.1, 0.2]}}, "interaction.radii"),
    ]
    for cfg, field in bad_cases:
        with pytest.raises(ConfigError) as err:
            model_from_config(cfg)
        assert err.value.field == field, cfg

    bad_matrix = {**good, "types": [{"name": "a", "fugacity": 1.0},
                                    {"name": "b", "fugacity": 1.0}],
                  "interaction": {"preset": "matrix",
                                  "matrix": [[0.0, 1.0], [2.0, 0.0]]}}
    with pytest.raises(ConfigError) as err:
        model_from_config(bad_matrix)
    assert err.value.field == "interaction.matrix"

    p = tmp_path / "m.json"
    p.write_text("not json")
    with pytest.raises(ConfigError):
        model_from_config(str(p))


def test_model_immutability():
    m = hg.ModelSpec.hard_sphere(1, 1.0, 0.25, 1.0)
    with pytest.raises(ValueError):
        m.interaction.entries[0, 0] = 7.0
    with pytest.raises(ValueError):
        m.fugacities.values[0] = 7.0
