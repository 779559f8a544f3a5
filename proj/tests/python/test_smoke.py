import math

import numpy as np
import pytest

rtlod = pytest.importorskip("rtlod")


def unit_problem(n=4, factor=4, block=None):
    coarse = rtlod.structured_mesh(n, n)
    fine = rtlod.structured_mesh(n * factor, n * factor)
    k = (
        rtlod.constant_coefficient(fine, 1.0)
        if block is None
        else rtlod.checkerboard(fine, block, 1.0, 0.01)
    )
    return rtlod.discretize(coarse, fine, k)


def cosine(x, y):
    return 2 * math.pi**2 * math.cos(math.pi * x) * math.cos(math.pi * y)


def test_mesh_arrays():
    m = rtlod.structured_mesh(2, 3, (0.0, 0.0, 2.0, 3.0))
    assert m.num_triangles == 12
    assert m.vertices.shape == (12, 2)
    assert m.triangles.shape == (12, 3)
    assert sum(m.areas) == pytest.approx(6.0)


def test_interpolation_is_a_projection():
    d = unit_problem()
    pe = (d.pi @ d.prolongation).toarray()
    assert np.abs(pe - np.eye(d.num_coarse_dofs)).max() < 1e-11


def test_lod_pipeline_and_divergence_identity():
    d = unit_problem(block=1 / 8)
    f = rtlod.fine_load(d, cosine)
    u_ref, p_ref = rtlod.solve_reference(d, f)
    q = rtlod.compute_correctors(d, 2)
    s = rtlod.solve_lod(d, q, f)
    err = rtlod.relative_energy_error(s["fine_velocity"], u_ref, d.fine_mass)
    assert 0 < err < 1
    lhs = rtlod.divergence_distance(d, u_ref, s["fine_velocity"])
    rhs = rtlod.divergence_error(d, f)
    assert abs(lhs - rhs) <= 1e-9 * rhs


def test_incompatible_load_raises():
    d = unit_problem()
    with pytest.raises(ValueError):
        rtlod.solve_reference(d, np.ones(d.fine_div.shape[0]))


def test_eoc():
    assert rtlod.eoc([4.0, 1.0], [2.0, 1.0]) == pytest.approx([2.0])
    slope, r2 = rtlod.fit_order([0.25, 0.0625, 0.015625], [0.5, 0.25, 0.125])
    assert slope == pytest.approx(2.0)
    assert r2 == pytest.approx(1.0)


def test_run_experiment_writes_outputs(tmp_path):
    cfg = {"experiment": "convergence", "coarse_levels": [1, 2], "fine_level": 4}
    r = rtlod.run_experiment(cfg, tmp_path)
    assert [c["ok"] for c in r["cases"]] == [True, True]
    assert (tmp_path / "results.csv").read_text().startswith("experiment,H,h,m,ell")
    assert (tmp_path / "manifest.json").exists()


def test_missing_spe10_data():
    cfg = {"experiment": "spe10", "coefficient": {"path": "/nonexistent/spe10.dat"}}
    with pytest.raises(FileNotFoundError):
        rtlod.run_experiment(cfg)
