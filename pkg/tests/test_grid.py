import numpy as np
import pytest

from fractv.grid import Grid, ScalarField, load_field, save_field, synth_field


def test_grid_centers_and_box():
    g = Grid(shape=(4,), spacing=0.5, origin=(1.0,))
    assert g.dim == 1
    assert g.n_cells == 4
    assert g.cell_volume == 0.5
    np.testing.assert_allclose(g.axis_coords(0), [1.0, 1.5, 2.0, 2.5])
    lo, hi = g.box()
    np.testing.assert_allclose(lo, [0.75])
    np.testing.assert_allclose(hi, [2.75])


def test_grid_2d_centers():
    g = Grid(shape=(2, 3), spacing=1.0)
    c = g.cell_centers()
    assert c.shape == (6, 2)
    np.testing.assert_allclose(c[0], [0.0, 0.0])
    np.testing.assert_allclose(c[1], [0.0, 1.0])
    np.testing.assert_allclose(c[3], [1.0, 0.0])
    assert g.cell_volume == 1.0


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid(shape=(1,), spacing=1.0)
    with pytest.raises(ValueError):
        Grid(shape=(4, 4), spacing=-1.0)
    with pytest.raises(ValueError):
        Grid(shape=(4, 4, 4), spacing=1.0)
    with pytest.raises(ValueError):
        Grid(shape=(4, 4), spacing=1.0, origin=(0.0,))


def test_scalar_field_checks():
    g = Grid(shape=(2, 2), spacing=1.0)
    f = ScalarField(g, np.arange(4.0))
    assert f.values.flags.writeable is False
    np.testing.assert_allclose(f.as_grid_array(), [[0, 1], [2, 3]])
    with pytest.raises(ValueError):
        ScalarField(g, np.arange(3.0))
    with pytest.raises(ValueError):
        ScalarField(g, np.array([0.0, 1.0, np.nan, 3.0]))


def test_synth_constant_and_step():
    g = Grid(shape=(4, 4), spacing=0.25)
    c = synth_field("constant", g, value=2.5)
    np.testing.assert_allclose(c.values, 2.5)
    st = synth_field("step", g)
    arr = st.as_grid_array()
    np.testing.assert_allclose(arr[:2, :], 1.0)
    np.testing.assert_allclose(arr[2:, :], 0.0)


def test_synth_radial_holder():
    g = Grid(shape=(9,), spacing=1.0)
    f = synth_field("radial_holder", g, beta=0.5, cap=2.0)
    arr = f.values
    # center of the box sits at the middle cell
    assert arr[4] == 2.0
    np.testing.assert_allclose(arr[5], 2.0 - 1.0)
    np.testing.assert_allclose(arr[8], max(2.0 - 2.0, 0.0))
    assert np.all(arr >= 0.0)
    with pytest.raises(ValueError):
        synth_field("radial_holder", g, beta=1.5, cap=1.0)


def test_synth_random_seeded():
    g = Grid(shape=(8, 8), spacing=1.0)
    a = synth_field("random", g, seed=7)
    b = synth_field("random", g, seed=7)
    np.testing.assert_array_equal(a.values, b.values)
    assert np.all(np.abs(a.values) <= 1.0)
    with pytest.raises(ValueError):
        synth_field("random", g)
    with pytest.raises(TypeError):
        synth_field("random", g, seed=1, bogus=2)


def test_csv_roundtrip(tmp_path):
    g = Grid(shape=(3, 2), spacing=0.5)
    f = ScalarField(g, np.array([0.1, -2.0, 3.5, 4.0, 1e-17, 6.0]))
    p = tmp_path / "field.csv"
    save_field(p, f)
    back = load_field(p, g)
    np.testing.assert_array_equal(back.values, f.values)


def test_csv_shape_mismatch(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("1.0,2.0\n3.0\n")
    g = Grid(shape=(2, 2), spacing=1.0)
    with pytest.raises(ValueError):
        load_field(p, g)


def test_pgm_roundtrip(tmp_path):
    p = tmp_path / "img.pgm"
    data = bytes([0, 128, 255, 64])
    p.write_bytes(b"P5\n# comment\n2 2\n255\n" + data)
    g = Grid(shape=(2, 2), spacing=1.0)
    f = load_field(p, g)
    np.testing.assert_allclose(f.values, np.array([0, 128, 255, 64]) / 255.0)


def test_pgm_truncated(tmp_path):
    p = tmp_path / "img.pgm"
    p.write_bytes(b"P5\n2 2\n255\n\x00\x01")
    g = Grid(shape=(2, 2), spacing=1.0)
    with pytest.raises(ValueError):
        load_field(p, g)
